//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::io::Cursor;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use otflow::eval::{
    epe, read_flo, read_kitti_png, synth_scene, write_flo, write_kitti_png, Motion, Scene, SceneSpec,
};
use otflow::grid::{idx, Validate};
use otflow::initflow::{init_confidence, init_flow, init_occlusion, WindowSpec};
use otflow::matching::{sinkhorn_dustbin, solve_transport, SinkhornConfig};
use otflow::pipeline::{estimate, PipelineConfig};
use otflow::refine::{
    accumulate_logit, global_refine, local_refine_step, DiffusionAggregator, LocalCorrelation, RefineConfig,
    RefinementMode, Upsample, UpsampleWeights, ZeroRule,
};
use otflow::supervise::{
    gt_occlusion, loss_confidence, loss_flow, loss_occlusion, smooth_l1_grad, total_loss, LossWeights,
};
use otflow::volume::{CostVolume, ProbabilityVolume};
use otflow::{ConfidenceMap, FlowField, OcclusionMap, RefineState, Scale};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn permutations3() -> Vec<[usize; 3]> {
    vec![[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]]
}

fn c1_sinkhorn_oracle() -> Outcome {
    let t = Instant::now();
    // The marginal error of this problem decays like 1/iterations, so the
    // budget is raised well above the pipeline default.
    let cfg = SinkhornConfig { epsilon: 0.01, dustbin_score: -10.0, max_iters: 25_000, tol: 4e-5 };
    let mut r = rng(1);
    let (mut min_mass, mut max_err, mut rejected, mut solved) = (f64::INFINITY, 0.0f64, 0, 0);
    while solved < 50 {
        let scores: Vec<f64> = (0..9).map(|_| r.gen_range(-1.0..1.0)).collect();
        let mut ranked: Vec<(f64, [usize; 3])> =
            permutations3().into_iter().map(|p| ((0..3).map(|i| scores[3 * i + p[i]]).sum(), p)).collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
        // Near-tied assignments legitimately share mass in the entropic plan.
        if ranked[0].0 - ranked[1].0 < 10.0 * cfg.epsilon {
            rejected += 1;
            continue;
        }
        let (plan, _) = solve_transport(&scores, 3, 3, &cfg).unwrap();
        for (i, &j) in ranked[0].1.iter().enumerate() {
            min_mass = min_mass.min(plan.row(i)[j]);
        }
        max_err = max_err.max(plan.marginal_error());
        solved += 1;
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        min_mass >= 0.95 && max_err < 1e-4 && secs < 1.0,
        format!(
            "min row mass on optimal permutation {min_mass:.4}, max marginal error {max_err:.2e}, \
             {rejected} near-tied draws skipped, {secs:.3}s"
        ),
    )
}

fn c2_plan_invariants() -> Outcome {
    let mut r = rng(2);
    let (mut min_entry, mut max_row_dev, mut max_shift) = (f64::INFINITY, 0.0f64, 0.0f64);
    let mut invalid = 0;
    for _ in 0..100 {
        let (h, w) = (r.gen_range(1..=8), r.gen_range(1..=8));
        let n = h * w;
        let scores: Vec<f64> = (0..n * n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let cfg = SinkhornConfig { dustbin_score: r.gen_range(-1.0..0.5), ..Default::default() };
        let p = sinkhorn_dustbin(&CostVolume::new(h, w, scores.clone()).unwrap(), &cfg).unwrap();
        if p.validate().is_err() {
            invalid += 1;
        }
        let entries = p.data().iter().chain(p.dustbin_src()).chain(p.dustbin_tgt());
        min_entry = entries.fold(min_entry, |m, &x| m.min(x)).min(p.corner());
        for s in 0..n {
            let sum: f64 = p.row(s).iter().sum::<f64>() + p.dustbin_src()[s];
            max_row_dev = max_row_dev.max((sum - 1.0).abs());
        }
        let c = r.gen_range(-3.0..3.0);
        let shifted = CostVolume::new(h, w, scores.iter().map(|x| x + c).collect()).unwrap();
        let cfg_s = SinkhornConfig { dustbin_score: cfg.dustbin_score + c, ..cfg };
        let q = sinkhorn_dustbin(&shifted, &cfg_s).unwrap();
        for (a, b) in p.data().iter().zip(q.data()).chain(p.dustbin_src().iter().zip(q.dustbin_src())) {
            max_shift = max_shift.max((a - b).abs());
        }
    }
    outcome(
        min_entry >= 0.0 && max_row_dev <= 1e-9 && max_shift <= 1e-6 && invalid == 0,
        format!("min entry {min_entry:.2e}, max row deviation {max_row_dev:.2e}, max shift change {max_shift:.2e}"),
    )
}

fn random_volume(r: &mut ChaCha8Rng, h: usize, w: usize) -> ProbabilityVolume {
    let n = h * w;
    let mut data = vec![0.0; n * n];
    let mut dust = vec![0.0; n];
    for s in 0..n {
        // Mix of peaked and diffuse rows.
        let sharp = r.gen_range(0.0..30.0);
        let (pu, pv) = (r.gen_range(0..w), r.gen_range(0..h));
        let mut row: Vec<f64> = (0..n)
            .map(|t| {
                let (du, dv) = ((t % w) as f64 - pu as f64, (t / w) as f64 - pv as f64);
                (-sharp * (du * du + dv * dv) / 10.0).exp() * r.gen_range(0.1..1.0)
            })
            .collect();
        let d = r.gen_range(0.0..2.0);
        let total: f64 = row.iter().sum::<f64>() + d;
        for x in &mut row {
            *x /= total;
        }
        data[s * n..(s + 1) * n].copy_from_slice(&row);
        dust[s] = 1.0 - row.iter().sum::<f64>();
    }
    ProbabilityVolume::new(h, w, data, dust, vec![0.0; n], 0.0).unwrap()
}

/// Scalar-loop reading of the windowed centroid, window mass and row mass.
fn init_oracle(p: &ProbabilityVolume, radius: usize, eps: f64, s: usize) -> ([f64; 2], f64, f64) {
    let (h, w) = (p.h(), p.w());
    let n = h * w;
    let row: Vec<f64> = (0..n).map(|t| p.get(s % w, s / w, t % w, t / w)).collect();
    let mut peak = 0;
    for t in 1..n {
        if row[t] > row[peak] {
            peak = t;
        }
    }
    let (pu, pv) = ((peak % w) as i64, (peak / w) as i64);
    let r = radius as i64;
    let (mut mass, mut mx, mut my) = (0.0, 0.0, 0.0);
    for (t, &p) in row.iter().enumerate().take(n) {
        let (tu, tv) = ((t % w) as i64, (t / w) as i64);
        if (tu - pu).abs() <= r && (tv - pv).abs() <= r {
            mass += p;
            mx += p * tu as f64;
            my += p * tv as f64;
        }
    }
    let flow = [mx / (mass + eps) - (s % w) as f64, my / (mass + eps) - (s / w) as f64];
    let total: f64 = row.iter().sum();
    (flow, mass, total)
}

fn c3_init_oracle() -> Outcome {
    let mut r = rng(3);
    let (mut max_diff, mut order_violations) = (0.0f64, 0);
    for _ in 0..100 {
        let (h, w) = (r.gen_range(1..=6), r.gen_range(1..=6));
        let p = random_volume(&mut r, h, w);
        let spec = WindowSpec { radius: r.gen_range(0..=3), ..Default::default() };
        let f = init_flow(&p, &spec).unwrap();
        let c = init_confidence(&p, &spec).unwrap();
        let o = init_occlusion(&p);
        for s in 0..h * w {
            let (fo, mo, to) = init_oracle(&p, spec.radius, spec.eps_denom, s);
            let fa = f.at(s);
            max_diff = max_diff
                .max((fa[0] - fo[0]).abs())
                .max((fa[1] - fo[1]).abs())
                .max((c.data()[s] - mo).abs())
                .max((o.data()[s] - to).abs());
            if c.data()[s] > o.data()[s] {
                order_violations += 1;
            }
        }
    }
    outcome(
        max_diff <= 1e-12 && order_violations == 0,
        format!("max deviation from scalar oracle {max_diff:.2e}, confidence > occlusion on {order_violations} pixels"),
    )
}

fn c4_gating() -> Outcome {
    let (w, h) = (8, 6);
    let g1 = otflow::features::FeatureMap::new(h, w, 1, vec![0.0; w * h]).unwrap();
    let cfg = RefineConfig::default();
    let agg = DiffusionAggregator::default();
    let mut r = rng(4);
    let f0 = FlowField::from_fn(w, h, Scale::Quarter, |_, _| [r.gen_range(-5.0..5.0), r.gen_range(-5.0..5.0)]);
    let conf = ConfidenceMap::from_fn(w, h, Scale::Quarter, |u, v| 0.2 + 0.1 * ((u + 2 * v) % 8) as f64).unwrap();
    let out = global_refine(&f0, &conf, &g1, &agg, &cfg).unwrap();
    let bitwise = out.data().iter().zip(f0.data()).all(|(a, b)| a.to_bits() == b.to_bits());

    let hole = (3, 2);
    let fill = [2.5, -1.25];
    let f = FlowField::from_fn(w, h, Scale::Quarter, |u, v| if (u, v) == hole { [-7.0, 4.0] } else { fill });
    let c = ConfidenceMap::from_fn(w, h, Scale::Quarter, |u, v| if (u, v) == hole { 0.0 } else { 0.9 }).unwrap();
    let out = global_refine(&f, &c, &g1, &agg, &cfg).unwrap();
    let got = out.get(hole.0, hole.1);
    let err = (got[0] - fill[0]).abs().max((got[1] - fill[1]).abs());
    outcome(bitwise && err <= 1e-6, format!("confident field bitwise equal: {bitwise}, hole error {err:.2e}"))
}

fn c5_logit_laws() -> Outcome {
    let (w, h) = (5, 4);
    let n = w * h;
    let mut r = rng(5);
    let state = RefineState {
        flow: FlowField::from_fn(w, h, Scale::Quarter, |_, _| [r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)]),
        confidence: ConfidenceMap::from_fn(w, h, Scale::Quarter, |u, v| 0.05 + 0.04 * (u + v) as f64).unwrap(),
        occlusion: OcclusionMap::from_fn(w, h, Scale::Quarter, |u, v| 0.5 + 0.05 * (u + v) as f64).unwrap(),
        step: 0,
    };
    let cost = CostVolume::new(h, w, (0..n * n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
    let corr = LocalCorrelation::new(&cost);
    let cfg = RefineConfig::default();
    let next = local_refine_step(&state, &corr, &ZeroRule, &cfg).unwrap();
    let identity =
        next.flow == state.flow && next.confidence == state.confidence && next.occlusion == state.occlusion;
    let nine = accumulate_logit(0.5, 9f64.ln(), cfg.logit_clamp);
    let huge = |delta: f64| {
        let rule = move |_: &RefineState, _: &LocalCorrelation<'_>, _: usize| otflow::refine::Residuals {
            du: 0.0,
            dv: 0.0,
            dconf: delta,
            docc: -delta,
        };
        let out = local_refine_step(&state, &corr, &rule, &cfg).unwrap();
        out.confidence.data().iter().chain(out.occlusion.data()).all(|&x| x > 0.0 && x < 1.0)
    };
    let bounded = huge(100.0) && huge(-100.0);
    outcome(
        identity && nine == 0.9 && bounded,
        format!("zero residual identity: {identity}, sigma(logit(0.5) + ln 9) = {nine}, bounded under |100|: {bounded}"),
    )
}

fn c6_upsampling() -> Outcome {
    let (w, h) = (6, 5);
    let weights = UpsampleWeights::bilinear(w, h);
    let constant = FlowField::from_fn(w, h, Scale::Quarter, |_, _| [0.37, -1.9]);
    let up = constant.convex_upsample(&weights).unwrap();
    let constant_exact = up.data().chunks_exact(2).all(|p| p[0] == 4.0 * 0.37 && p[1] == 4.0 * -1.9);

    // Linear ramp in quarter-res cell units; coarse cell c sits at full-res 4c + 1.5.
    let (a, b, c) = (0.3, -0.7, 1.1);
    let ramp = FlowField::from_fn(w, h, Scale::Quarter, |u, v| {
        let x = a * u as f64 + b * v as f64 + c;
        [x, -x]
    });
    let up = ramp.convex_upsample(&weights).unwrap();
    let mut ramp_err = 0.0f64;
    for y in 2..4 * h - 2 {
        for x in 2..4 * w - 2 {
            let (cu, cv) = ((x as f64 - 1.5) / 4.0, (y as f64 - 1.5) / 4.0);
            let expect = 4.0 * (a * cu + b * cv + c);
            ramp_err = ramp_err.max((up.get(x, y)[0] - expect).abs());
        }
    }

    let mut r = rng(6);
    let mut violations = 0;
    for _ in 0..20 {
        let coarse = ConfidenceMap::from_fn(w, h, Scale::Quarter, |_, _| r.gen_range(0.0..1.0)).unwrap();
        let wdata: Vec<f64> = (0..16 * w * h)
            .flat_map(|_| {
                let raw: Vec<f64> = (0..9).map(|_| r.gen_range(0.0..1.0f64).powi(3)).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(move |x| x / s)
            })
            .collect();
        let wts = UpsampleWeights::new(w, h, wdata).unwrap();
        let up = coarse.convex_upsample(&wts).unwrap();
        for y in 0..4 * h {
            for x in 0..4 * w {
                let (cu, cv) = (x / 4, y / 4);
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for dv in -1i64..=1 {
                    for du in -1i64..=1 {
                        let nu = (cu as i64 + du).clamp(0, w as i64 - 1) as usize;
                        let nv = (cv as i64 + dv).clamp(0, h as i64 - 1) as usize;
                        lo = lo.min(coarse.get(nu, nv));
                        hi = hi.max(coarse.get(nu, nv));
                    }
                }
                let val = up.get(x, y);
                if val < lo - 1e-12 || val > hi + 1e-12 {
                    violations += 1;
                }
            }
        }
    }
    outcome(
        constant_exact && ramp_err <= 1e-9 && violations == 0,
        format!("constant exact: {constant_exact}, interior ramp error {ramp_err:.2e}, hull violations {violations}"),
    )
}

fn c7_losses() -> Outcome {
    let (w, h) = (8, 8);
    let mut r = rng(7);
    let gt = FlowField::from_fn(w, h, Scale::Full, |_, _| [r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0)]);
    let occ = OcclusionMap::from_fn(w, h, Scale::Full, |u, v| if (u + v) % 5 == 0 { 0.0 } else { 1.0 }).unwrap();
    let conf_gt = ConfidenceMap::from_fn(w, h, Scale::Full, |u, _| if u % 2 == 0 { 1.0 } else { 0.0 }).unwrap();
    let lf = loss_flow(&[gt.clone(), gt.clone()], &gt, &occ, 1.0).unwrap();
    let lc = loss_confidence(&[conf_gt.clone(), conf_gt.clone()], &[conf_gt.clone(), conf_gt.clone()], &occ).unwrap();
    let lo = loss_occlusion(&[occ.clone(), occ.clone()], &occ).unwrap();
    let zero = lf == 0.0 && lc == 0.0 && lo == 0.0;

    let total = total_loss(1.0, 1.0, 1.0, &LossWeights::default()).total;

    // Finite difference of the step-0 flow loss in one visible pixel's u.
    let visible = occ.count_set() as f64;
    let pixel = (3, 4);
    let mut max_fd_err = 0.0f64;
    for offset in [0.3, -0.45, 1.7, -2.2] {
        let pred = FlowField::from_fn(w, h, Scale::Full, |u, v| {
            let g = gt.get(u, v);
            if (u, v) == pixel {
                [g[0] + offset, g[1]]
            } else {
                [g[0] + 0.1, g[1] - 0.2]
            }
        });
        let at = |d: f64| {
            let mut data = pred.data().to_vec();
            data[2 * idx(pixel.0, pixel.1, w)] += d;
            loss_flow(&[FlowField::new(w, h, Scale::Full, data).unwrap()], &gt, &occ, 1.0).unwrap()
        };
        let step = 1e-6;
        let fd = (at(step) - at(-step)) / (2.0 * step);
        let analytic = smooth_l1_grad(offset, 1.0) / visible;
        max_fd_err = max_fd_err.max((fd - analytic).abs());
    }
    outcome(
        zero && (total - 1.2).abs() <= 1e-12 && max_fd_err <= 1e-5,
        format!("perfect predictions zero: {zero}, unit total {total:.15}, gradient error {max_fd_err:.2e}"),
    )
}

fn c8_gt_occlusion() -> Outcome {
    let spec = SceneSpec {
        width: 64,
        height: 64,
        motion: Motion::similarity(64, 64, 8f64.to_radians(), 1.08, (3.0, -2.0)),
        texture_seed: 8,
    };
    let scene = synth_scene(&spec).unwrap();
    let bwd = spec.backward_flow().unwrap();
    let occ = gt_occlusion(&scene.flow, &bwd, 2.0).unwrap();
    let (w, h) = (64, 64);
    let (mut inside, mut inside_visible, mut outside, mut outside_occ, mut agree) = (0, 0, 0, 0, 0);
    for v in 0..h {
        for u in 0..w {
            let [du, dv] = scene.flow.get(u, v);
            let (x, y) = (u as f64 + du, v as f64 + dv);
            let vis = occ.get(u, v) == 1.0;
            if x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64 {
                inside += 1;
                inside_visible += vis as usize;
            } else {
                outside += 1;
                outside_occ += (!vis) as usize;
            }
            agree += (occ.get(u, v) == scene.occlusion.get(u, v)) as usize;
        }
    }
    let in_rate = inside_visible as f64 / inside as f64;
    let agree_rate = agree as f64 / (w * h) as f64;
    outcome(
        in_rate >= 0.99 && outside_occ == outside && outside > 0 && agree_rate >= 0.99,
        format!(
            "in-frame visible {:.2}%, out-of-frame occluded {outside_occ}/{outside}, agreement {:.2}%",
            100.0 * in_rate,
            100.0 * agree_rate
        ),
    )
}

fn translation_suite() -> Vec<Scene> {
    let disps = [(4.0, 0.0), (8.0, 4.0), (12.0, 8.0)];
    (0..20)
        .map(|i| {
            let (du, dv) = disps[i % 3];
            synth_scene(&SceneSpec { width: 64, height: 64, motion: Motion::Translation { du, dv }, texture_seed: i as u64 })
                .unwrap()
        })
        .collect()
}

fn affine_suite() -> Vec<Scene> {
    (0..10)
        .map(|i| {
            let angle = (-10.0 + 20.0 * i as f64 / 9.0).to_radians();
            let zoom = 0.9 + 0.2 * ((7 * i) % 10) as f64 / 9.0;
            synth_scene(&SceneSpec {
                width: 64,
                height: 64,
                motion: Motion::similarity(64, 64, angle, zoom, (0.0, 0.0)),
                texture_seed: 100 + i as u64,
            })
            .unwrap()
        })
        .collect()
}

fn suite_epe(scenes: &[Scene], cfg: &PipelineConfig) -> Vec<f64> {
    scenes
        .iter()
        .map(|s| {
            let est = estimate(&s.pair, cfg).unwrap();
            epe(est.flow(), &s.flow, Some(&s.occlusion)).unwrap()
        })
        .collect()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

fn c9_end_to_end() -> Outcome {
    let t = Instant::now();
    let (trans, affine) = single_threaded(|| {
        let cfg = PipelineConfig::default();
        (suite_epe(&translation_suite(), &cfg), suite_epe(&affine_suite(), &cfg))
    });
    let secs = t.elapsed().as_secs_f64();
    let worst = affine.iter().copied().fold(0.0, f64::max);
    outcome(
        mean(&trans) <= 0.5 && mean(&affine) <= 1.5 && secs < 60.0,
        format!(
            "translation mean EPE {:.3} px, affine mean EPE {:.3} px (worst scene {worst:.3}), {secs:.1}s on one thread",
            mean(&trans),
            mean(&affine)
        ),
    )
}

fn c10_ablation() -> Outcome {
    let scenes = affine_suite();
    let mut cfg = PipelineConfig::default();
    let three = mean(&suite_epe(&scenes, &cfg));
    cfg.refine.steps = 0;
    let zero = mean(&suite_epe(&scenes, &cfg));
    cfg.refine.steps = 3;
    cfg.refine.mode = RefinementMode::Coupled;
    let coupled = mean(&suite_epe(&scenes, &cfg));
    outcome(
        three <= zero && three <= coupled + 0.1,
        format!("affine EPE: 3 steps {three:.3}, 0 steps {zero:.3}, coupled {coupled:.3}"),
    )
}

fn c11_formats() -> Outcome {
    let mut r = rng(11);
    let (mut flo_ok, mut kitti_ok) = (0, 0);
    for _ in 0..1000 {
        let (w, h) = (r.gen_range(1..=12), r.gen_range(1..=12));
        let flo = FlowField::from_fn(w, h, Scale::Full, |_, _| {
            [r.gen_range(-300.0f32..300.0) as f64, r.gen_range(-300.0f32..300.0) as f64]
        });
        let mut buf = Vec::new();
        write_flo(&flo, &mut buf).unwrap();
        let back = read_flo(Cursor::new(&buf)).unwrap();
        if back.width() == w
            && back.height() == h
            && back.data().iter().zip(flo.data()).all(|(a, b)| a.to_bits() == b.to_bits())
        {
            flo_ok += 1;
        }

        // KITTI stores (x * 64 + 2^15) as u16, so multiples of 1/64 in range are exact.
        let valid = OcclusionMap::from_fn(w, h, Scale::Full, |_, _| if r.gen_bool(0.8) { 1.0 } else { 0.0 }).unwrap();
        let kf = FlowField::from_fn(w, h, Scale::Full, |u, v| {
            if valid.get(u, v) == 1.0 {
                [r.gen_range(-32767i32..32768) as f64 / 64.0, r.gen_range(-32767i32..32768) as f64 / 64.0]
            } else {
                [0.0, 0.0]
            }
        });
        let mut png = Vec::new();
        write_kitti_png(&kf, &valid, &mut png).unwrap();
        let (kb, vb) = read_kitti_png(Cursor::new(&png)).unwrap();
        if vb == valid && kb == kf {
            kitti_ok += 1;
        }
    }

    let one = FlowField::new(1, 1, Scale::Full, vec![1.5, -2.0]).unwrap();
    let mut bytes = Vec::new();
    write_flo(&one, &mut bytes).unwrap();
    let mut expect = b"PIEH".to_vec();
    expect.extend_from_slice(&1i32.to_le_bytes());
    expect.extend_from_slice(&1i32.to_le_bytes());
    expect.extend_from_slice(&1.5f32.to_le_bytes());
    expect.extend_from_slice(&(-2.0f32).to_le_bytes());
    let layout = bytes == expect;
    outcome(
        flo_ok == 1000 && kitti_ok == 1000 && layout,
        format!(".flo exact {flo_ok}/1000, KITTI exact {kitti_ok}/1000, 1x1 layout matches: {layout}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("sinkhorn matches brute-force assignment", c1_sinkhorn_oracle),
        ("transport plan invariants", c2_plan_invariants),
        ("initial flow/confidence/occlusion match scalar oracle", c3_init_oracle),
        ("confidence gating", c4_gating),
        ("logit-space update laws", c5_logit_laws),
        ("convex upsampling", c6_upsampling),
        ("loss suite", c7_losses),
        ("ground-truth occlusion", c8_gt_occlusion),
        ("end-to-end synthetic accuracy", c9_end_to_end),
        ("refinement ablation direction", c10_ablation),
        ("flow format fidelity", c11_formats),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{:>2}] {name}: {}", i + 1, o.detail);
        failed += (!o.pass) as usize;
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
