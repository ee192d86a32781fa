use std::io::Cursor;

use proptest::collection::vec;
use proptest::prelude::*;

use otflow::eval::{
    epe, fl_all, outlier_rate, read_flo, read_kitti_png, synth_scene, write_flo, write_kitti_png, Motion, SceneSpec,
};
use otflow::features::FeatureMap;
use otflow::initflow::{init_confidence, init_flow, init_occlusion, WindowSpec};
use otflow::matching::{sinkhorn_dustbin, SinkhornConfig};
use otflow::refine::{
    accumulate_logit, global_refine, local_refine_step, AxisWiseRule, DiffusionAggregator, LocalCorrelation,
    RefineConfig, SoftArgmaxHead, SoftArgmaxParams, Upsample, UpsampleWeights, ZeroHead,
};
use otflow::supervise::gt_occlusion;
use otflow::volume::CostVolume;
use otflow::{ConfidenceMap, FlowField, OcclusionMap, RefineState, Scale};

/// Grid size plus an all-pairs score matrix for it.
fn scores() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1usize..=4, 1usize..=4).prop_flat_map(|(h, w)| {
        let n = h * w;
        (Just(h), Just(w), vec(-1.0f64..1.0, n * n))
    })
}

fn quarter_state(w: usize, h: usize, flow: &[f64], conf: &[f64], occ: &[f64]) -> RefineState {
    RefineState {
        flow: FlowField::new(w, h, Scale::Quarter, flow.to_vec()).unwrap(),
        confidence: ConfidenceMap::new(w, h, Scale::Quarter, conf.to_vec()).unwrap(),
        occlusion: OcclusionMap::new(w, h, Scale::Quarter, occ.to_vec()).unwrap(),
        step: 0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sinkhorn_rows_are_stochastic((h, w, s) in scores(), z in -1.0f64..0.5, eps in 0.02f64..0.5) {
        let cfg = SinkhornConfig { epsilon: eps, dustbin_score: z, ..Default::default() };
        let p = sinkhorn_dustbin(&CostVolume::new(h, w, s).unwrap(), &cfg).unwrap();
        for i in 0..h * w {
            let row = p.row(i);
            prop_assert!(row.iter().all(|&x| x >= 0.0));
            let sum: f64 = row.iter().sum::<f64>() + p.dustbin_src()[i];
            prop_assert!((sum - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn sinkhorn_ignores_a_common_score_shift((h, w, s) in scores(), c in -2.0f64..2.0) {
        let cfg = SinkhornConfig { dustbin_score: -0.2, epsilon: 0.05, ..Default::default() };
        let a = sinkhorn_dustbin(&CostVolume::new(h, w, s.clone()).unwrap(), &cfg).unwrap();
        let shifted = CostVolume::new(h, w, s.iter().map(|x| x + c).collect()).unwrap();
        let b = sinkhorn_dustbin(&shifted, &SinkhornConfig { dustbin_score: -0.2 + c, ..cfg }).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn confidence_is_bounded_by_occlusion_and_grows_with_radius((h, w, s) in scores(), r in 0usize..3) {
        let cfg = SinkhornConfig { epsilon: 0.1, dustbin_score: 0.0, ..Default::default() };
        let p = sinkhorn_dustbin(&CostVolume::new(h, w, s).unwrap(), &cfg).unwrap();
        let small = init_confidence(&p, &WindowSpec { radius: r, ..Default::default() }).unwrap();
        let large = init_confidence(&p, &WindowSpec { radius: r + 1, ..Default::default() }).unwrap();
        let occ = init_occlusion(&p);
        for i in 0..h * w {
            prop_assert!(small.data()[i] <= large.data()[i]);
            prop_assert!(large.data()[i] <= occ.data()[i]);
        }
        let f = init_flow(&p, &WindowSpec { radius: r, ..Default::default() }).unwrap();
        prop_assert!(f.data().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn gating_keeps_confident_pixels_bitwise(
        flow in vec(-6.0f64..6.0, 2 * 20),
        conf in vec(0.0f64..1.0, 20),
    ) {
        let (w, h) = (5, 4);
        let f0 = FlowField::new(w, h, Scale::Quarter, flow).unwrap();
        let c = ConfidenceMap::new(w, h, Scale::Quarter, conf).unwrap();
        let cfg = RefineConfig::default();
        let g1 = FeatureMap::new(h, w, 1, vec![0.0; w * h]).unwrap();
        let out = global_refine(&f0, &c, &g1, &DiffusionAggregator::default(), &cfg).unwrap();
        for i in 0..w * h {
            if c.data()[i] >= cfg.conf_threshold {
                prop_assert_eq!(out.at(i)[0].to_bits(), f0.at(i)[0].to_bits());
                prop_assert_eq!(out.at(i)[1].to_bits(), f0.at(i)[1].to_bits());
            }
        }
    }

    #[test]
    fn upsampling_stays_in_the_neighborhood_hull(
        coarse in vec(-3.0f64..3.0, 12),
        raw in vec(0.0f64..1.0, 16 * 12 * 9),
    ) {
        let (w, h) = (4, 3);
        let data: Vec<f64> = raw
            .chunks_exact(9)
            .flat_map(|c| {
                let s: f64 = c.iter().sum::<f64>() + 1e-9;
                let mut v: Vec<f64> = c.iter().map(|x| x / s).collect();
                let rest = 1.0 - v.iter().sum::<f64>();
                v[4] += rest;
                v
            })
            .collect();
        let weights = UpsampleWeights::new(w, h, data).unwrap();
        let field = FlowField::new(w, h, Scale::Quarter, coarse.iter().flat_map(|&x| [x, -x]).collect()).unwrap();
        let up = field.convex_upsample(&weights).unwrap();
        for y in 0..4 * h {
            for x in 0..4 * w {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let cx = (x as i64 / 4 + dx).clamp(0, w as i64 - 1) as usize;
                        let cy = (y as i64 / 4 + dy).clamp(0, h as i64 - 1) as usize;
                        let c = coarse[cy * w + cx];
                        lo = lo.min(c);
                        hi = hi.max(c);
                    }
                }
                let u = up.get(x, y)[0] / 4.0;
                prop_assert!(u >= lo - 1e-12 && u <= hi + 1e-12, "{} not in [{}, {}]", u, lo, hi);
            }
        }
    }

    #[test]
    fn logit_accumulation_inverts(p in 0.0f64..=1.0, x in -20.0f64..20.0) {
        let c = 1e-6;
        // Clamping is lossy, so the law only holds while the intermediate
        // stays inside the clamp band.
        let start = p.clamp(c, 1.0 - c);
        let bound = ((1.0 - c) / c).ln();
        prop_assume!(((start / (1.0 - start)).ln() + x).abs() < bound);
        let back = accumulate_logit(accumulate_logit(p, x, c), -x, c);
        prop_assert!((back - p.clamp(c, 1.0 - c)).abs() <= 1e-9, "{} -> {}", p, back);
    }

    #[test]
    fn local_steps_keep_probabilities_open(
        conf in vec(0.0f64..=1.0, 12),
        occ in vec(0.0f64..=1.0, 12),
        flow in vec(-2.0f64..2.0, 24),
        s in vec(-1.0f64..1.0, 144),
    ) {
        let (w, h) = (4, 3);
        let cost = CostVolume::new(h, w, s).unwrap();
        let corr = LocalCorrelation::new(&cost);
        let cfg = RefineConfig { steps: 4, ..Default::default() };
        let rule = cfg.reference_rule();
        let mut state = quarter_state(w, h, &flow, &conf, &occ);
        for _ in 0..cfg.steps {
            state = local_refine_step(&state, &corr, rule.as_ref(), &cfg).unwrap();
            prop_assert!(state.confidence.data().iter().chain(state.occlusion.data()).all(|&x| x > 0.0 && x < 1.0));
        }
    }

    #[test]
    fn v_head_does_not_touch_u(
        conf in vec(0.05f64..0.95, 12),
        flow in vec(-2.0f64..2.0, 24),
        s in vec(-1.0f64..1.0, 144),
    ) {
        let (w, h) = (4, 3);
        let cost = CostVolume::new(h, w, s).unwrap();
        let corr = LocalCorrelation::new(&cost);
        let cfg = RefineConfig::default();
        let params = SoftArgmaxParams::from(&cfg);
        let state = quarter_state(w, h, &flow, &conf, &conf);
        let full = AxisWiseRule::new(params);
        let u_only = AxisWiseRule { u_head: SoftArgmaxHead { params }, v_head: ZeroHead, params };
        let a = local_refine_step(&state, &corr, &full, &cfg).unwrap();
        let b = local_refine_step(&state, &corr, &u_only, &cfg).unwrap();
        for i in 0..w * h {
            prop_assert_eq!(a.flow.at(i)[0].to_bits(), b.flow.at(i)[0].to_bits());
            prop_assert_eq!(b.flow.at(i)[1].to_bits(), state.flow.at(i)[1].to_bits());
        }
    }

    #[test]
    fn refinement_steps_are_deterministic(
        conf in vec(0.05f64..0.95, 12),
        flow in vec(-2.0f64..2.0, 24),
        s in vec(-1.0f64..1.0, 144),
    ) {
        let (w, h) = (4, 3);
        let cost = CostVolume::new(h, w, s).unwrap();
        let corr = LocalCorrelation::new(&cost);
        let cfg = RefineConfig::default();
        let state = quarter_state(w, h, &flow, &conf, &conf);
        let rule = cfg.reference_rule();
        let a = local_refine_step(&state, &corr, rule.as_ref(), &cfg).unwrap();
        let b = local_refine_step(&state, &corr, rule.as_ref(), &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn constant_offsets_give_their_norm_as_epe(
        gt in vec(-10.0f64..10.0, 2 * 16),
        a in -6.0f64..6.0,
        b in -6.0f64..6.0,
    ) {
        let g = FlowField::new(4, 4, Scale::Full, gt.clone()).unwrap();
        let p = FlowField::new(4, 4, Scale::Full, gt.chunks_exact(2).flat_map(|c| [c[0] + a, c[1] + b]).collect()).unwrap();
        let e = epe(&p, &g, None).unwrap();
        prop_assert!((e - (a * a + b * b).sqrt()).abs() <= 1e-9);
        let r1 = outlier_rate(&p, &g, 1.0, None).unwrap();
        let r3 = outlier_rate(&p, &g, 3.0, None).unwrap();
        let r5 = outlier_rate(&p, &g, 5.0, None).unwrap();
        prop_assert!(r1 >= r3 && r3 >= r5);
        prop_assert!(fl_all(&p, &g, None).unwrap() <= r3);
    }

    #[test]
    fn flo_round_trips_exactly(w in 1usize..10, h in 1usize..10, seed in any::<u64>()) {
        let mut x = seed;
        let mut next = || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            f32::from_bits((x >> 32) as u32 & 0xff7f_ffff) as f64
        };
        let f = FlowField::from_fn(w, h, Scale::Full, |_, _| [next(), next()]);
        prop_assume!(f.data().iter().all(|v| v.is_finite()));
        let mut buf = Vec::new();
        write_flo(&f, &mut buf).unwrap();
        prop_assert_eq!(buf.len(), 12 + 8 * w * h);
        prop_assert_eq!(read_flo(Cursor::new(buf)).unwrap(), f);
    }

    #[test]
    fn kitti_round_trips_on_the_64th_grid(
        codes in vec((-32767i32..32768, -32767i32..32768, any::<bool>()), 12),
    ) {
        let f = FlowField::new(4, 3, Scale::Full,
            codes.iter().flat_map(|&(a, b, ok)| if ok { [a as f64 / 64.0, b as f64 / 64.0] } else { [0.0, 0.0] }).collect()).unwrap();
        let valid = OcclusionMap::new(4, 3, Scale::Full, codes.iter().map(|c| c.2 as u8 as f64).collect()).unwrap();
        let mut png = Vec::new();
        write_kitti_png(&f, &valid, &mut png).unwrap();
        let (g, v) = read_kitti_png(Cursor::new(png)).unwrap();
        prop_assert_eq!(g, f);
        prop_assert_eq!(v, valid);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn synth_is_deterministic(seed in any::<u64>(), du in -6.0f64..6.0, dv in -6.0f64..6.0) {
        let spec = SceneSpec { width: 16, height: 16, motion: Motion::Translation { du, dv }, texture_seed: seed };
        prop_assert_eq!(synth_scene(&spec).unwrap(), synth_scene(&spec).unwrap());
    }

    #[test]
    fn forward_backward_check_matches_analytic_visibility(
        angle in -10.0f64..10.0,
        zoom in 0.9f64..1.1,
        sx in -4.0f64..4.0,
        sy in -4.0f64..4.0,
    ) {
        let spec = SceneSpec {
            width: 32,
            height: 32,
            motion: Motion::similarity(32, 32, angle.to_radians(), zoom, (sx, sy)),
            texture_seed: 0,
        };
        let scene = synth_scene(&spec).unwrap();
        let occ = gt_occlusion(&scene.flow, &spec.backward_flow().unwrap(), 2.0).unwrap();
        let agree = occ.data().iter().zip(scene.occlusion.data()).filter(|(a, b)| a == b).count();
        prop_assert!(agree as f64 >= 0.99 * 1024.0, "{} of 1024 agree", agree);
    }
}
