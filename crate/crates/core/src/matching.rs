//! All-pairs correlation and entropic optimal transport with dustbins.
//!
//! The solver works on the `(N + 1) x (M + 1)` augmented score matrix whose
//! last row and column hold the dustbin score. Valid rows and columns carry
//! unit mass, the dustbin row carries `M` and the dustbin column `N`, so both
//! sides total `N + M`. Iterations alternate row and column normalizations of
//! the log-domain potentials; the kernel is `exp(score / epsilon)` since
//! scores are similarities.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::volume::{CostVolume, ProbabilityVolume};

/// Entropic OT solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    /// Entropy regularization.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Relative marginal error below which iteration stops.
    pub tol: f64,
    /// Score of the unmatched option, fixed rather than learned.
    pub dustbin_score: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self { epsilon: 0.0125, max_iters: 100, tol: 1e-4, dustbin_score: 0.0 }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!("epsilon {} must be > 0", self.epsilon)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!("tol {} must be > 0", self.tol)));
        }
        if !self.dustbin_score.is_finite() {
            return Err(Error::InvalidConfig("dustbin_score must be finite".into()));
        }
        Ok(())
    }
}

/// Solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornStats {
    /// Completed row+column normalization rounds.
    pub iterations: usize,
    /// Marginal error of the returned (row-renormalized) plan.
    pub marginal_error: f64,
    /// Whether the stopping tolerance was reached before `max_iters`.
    pub converged: bool,
}

/// Builds `C(p, q) = <g1[p], g2[q]> / sqrt(dim)`.
pub fn build_correlation(g1: &FeatureMap, g2: &FeatureMap) -> Result<CostVolume> {
    if g1.h() != g2.h() || g1.w() != g2.w() || g1.dim() != g2.dim() {
        return Err(Error::DimensionMismatch(format!(
            "feature maps {}x{}x{} vs {}x{}x{}",
            g1.h(),
            g1.w(),
            g1.dim(),
            g2.h(),
            g2.w(),
            g2.dim()
        )));
    }
    let n = g1.h() * g1.w();
    let scale = 1.0 / (g1.dim() as f64).sqrt();
    let mut data = vec![0.0; n * n];
    data.par_chunks_mut(n.max(1)).enumerate().for_each(|(s, row)| {
        let a = g1.descriptor(s);
        for (t, out) in row.iter_mut().enumerate() {
            let b = g2.descriptor(t);
            *out = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * scale;
        }
    });
    Ok(CostVolume::from_raw(g1.h(), g1.w(), data))
}

/// Transport plan over an `n x m` score matrix plus dustbins.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub n: usize,
    pub m: usize,
    /// Row-major `n x m` valid-to-valid mass.
    pub data: Vec<f64>,
    pub dustbin_src: Vec<f64>,
    pub dustbin_tgt: Vec<f64>,
    pub corner: f64,
}

impl TransportPlan {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn marginal_error(&self) -> f64 {
        marginal_error_parts(self.n, self.m, &self.data, &self.dustbin_src, &self.dustbin_tgt, self.corner)
    }
}

/// Problems smaller than this many scores run on the calling thread.
const SERIAL_BELOW: usize = 4096;

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Entropic OT with dustbins on a general `n x m` similarity matrix.
pub fn solve_transport(
    scores: &[f64],
    n: usize,
    m: usize,
    cfg: &SinkhornConfig,
) -> Result<(TransportPlan, SinkhornStats)> {
    cfg.validate()?;
    if scores.len() != n * m {
        return Err(Error::DimensionMismatch(format!("{} scores for a {n}x{m} matrix", scores.len())));
    }
    if let Some(i) = scores.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteScore { index: i });
    }
    if n == 0 || m == 0 {
        return Err(Error::DimensionMismatch("empty score matrix".into()));
    }

    let inv_eps = 1.0 / cfg.epsilon;
    let kernel: Vec<f64> = scores.iter().map(|s| s * inv_eps).collect();
    let z = cfg.dustbin_score * inv_eps;
    let log_dust_row = (m as f64).ln();
    let log_dust_col = (n as f64).ln();

    // Potentials; index n / m is the dustbin.
    let mut f = vec![0.0; n + 1];
    let mut g = vec![0.0; m + 1];
    let mut row_lse = vec![0.0; n + 1];
    let mut col_lse = vec![0.0; m + 1];
    let mut iterations = 0;
    let mut converged = false;

    for it in 0..cfg.max_iters {
        compute_row_lse(&kernel, n, m, z, &g, &mut row_lse);
        if it > 0 {
            // Columns are exact after the previous column update, so the row
            // residual is the full marginal error of the current iterate.
            let err = (0..=n)
                .map(|i| {
                    let log_a = if i == n { log_dust_row } else { 0.0 };
                    ((f[i] + row_lse[i] - log_a).exp() - 1.0).abs()
                })
                .fold(0.0, f64::max);
            if err < cfg.tol {
                converged = true;
                break;
            }
        }
        for i in 0..=n {
            let log_a = if i == n { log_dust_row } else { 0.0 };
            f[i] = log_a - row_lse[i];
        }
        compute_col_lse(&kernel, n, m, z, &f, &mut col_lse);
        for j in 0..=m {
            let log_b = if j == m { log_dust_col } else { 0.0 };
            g[j] = log_b - col_lse[j];
        }
        iterations = it + 1;
    }

    let mut data = vec![0.0; n * m];
    let mut dustbin_src = vec![0.0; n];
    let finish_row = |(i, (row, dust)): (usize, (&mut [f64], &mut f64))| {
        let k = &kernel[i * m..(i + 1) * m];
        for j in 0..m {
            row[j] = (k[j] + f[i] + g[j]).exp();
        }
        *dust = (z + f[i] + g[m]).exp();
        let sum = row.iter().sum::<f64>() + *dust;
        if sum > 0.0 {
            for x in row.iter_mut() {
                *x /= sum;
            }
            *dust /= sum;
        } else {
            *dust = 1.0;
        }
    };
    if n * m < SERIAL_BELOW {
        data.chunks_mut(m).zip(dustbin_src.iter_mut()).enumerate().for_each(finish_row);
    } else {
        data.par_chunks_mut(m).zip(dustbin_src.par_iter_mut()).enumerate().for_each(finish_row);
    }
    let dustbin_tgt: Vec<f64> = (0..m).map(|j| (z + f[n] + g[j]).exp()).collect();
    let corner = (z + f[n] + g[m]).exp();

    let plan = TransportPlan { n, m, data, dustbin_src, dustbin_tgt, corner };
    let stats = SinkhornStats { iterations, marginal_error: plan.marginal_error(), converged };
    Ok((plan, stats))
}

fn compute_row_lse(kernel: &[f64], n: usize, m: usize, z: f64, g: &[f64], out: &mut [f64]) {
    let row = |(i, o): (usize, &mut f64)| {
        let k = &kernel[i * m..(i + 1) * m];
        let vals = k.iter().zip(&g[..m]).map(|(a, b)| a + b).chain(std::iter::once(z + g[m]));
        *o = log_sum_exp(vals);
    };
    if n * m < SERIAL_BELOW {
        out[..n].iter_mut().enumerate().for_each(row);
    } else {
        out[..n].par_iter_mut().enumerate().for_each(row);
    }
    out[n] = z + log_sum_exp(g.iter().copied());
}

fn compute_col_lse(kernel: &[f64], n: usize, m: usize, z: f64, f: &[f64], out: &mut [f64]) {
    out[m] = z + log_sum_exp(f.iter().copied());
    if n * m < SERIAL_BELOW {
        for (j, o) in out[..m].iter_mut().enumerate() {
            let vals = (0..n).map(|i| kernel[i * m + j] + f[i]).chain(std::iter::once(z + f[n]));
            *o = log_sum_exp(vals);
        }
        return;
    }
    // Columns are split across threads; each thread streams the rows in order
    // so every column reduction has a fixed summation order.
    const CHUNK: usize = 64;
    let columns = |(c, chunk): (usize, &mut [f64])| {
        let j0 = c * CHUNK;
        let width = chunk.len();
        let mut max = vec![z + f[n]; width];
        for i in 0..n {
            let k = &kernel[i * m + j0..i * m + j0 + width];
            for (mx, kv) in max.iter_mut().zip(k) {
                *mx = mx.max(kv + f[i]);
            }
        }
        let mut acc: Vec<f64> = max.iter().map(|mx| (z + f[n] - mx).exp()).collect();
        for i in 0..n {
            let k = &kernel[i * m + j0..i * m + j0 + width];
            for ((a, kv), mx) in acc.iter_mut().zip(k).zip(&max) {
                *a += (kv + f[i] - mx).exp();
            }
        }
        for ((o, a), mx) in chunk.iter_mut().zip(&acc).zip(&max) {
            *o = mx + a.ln();
        }
    };
    out[..m].par_chunks_mut(CHUNK).enumerate().for_each(columns);
}

/// Solves the dustbin-augmented transport problem on a correlation volume.
pub fn sinkhorn_dustbin(cost: &CostVolume, cfg: &SinkhornConfig) -> Result<ProbabilityVolume> {
    sinkhorn_dustbin_with_stats(cost, cfg).map(|(p, _)| p)
}

/// Like [`sinkhorn_dustbin`], also returning solver diagnostics.
pub fn sinkhorn_dustbin_with_stats(
    cost: &CostVolume,
    cfg: &SinkhornConfig,
) -> Result<(ProbabilityVolume, SinkhornStats)> {
    let n = cost.pixels();
    let (plan, stats) = solve_transport(cost.data(), n, n, cfg)?;
    let p = ProbabilityVolume::from_raw(
        cost.h(),
        cost.w(),
        plan.data,
        plan.dustbin_src,
        plan.dustbin_tgt,
        plan.corner,
    );
    Ok((p, stats))
}

/// Largest relative deviation of any row or column sum from its target.
pub fn marginal_error(p: &ProbabilityVolume) -> f64 {
    let n = p.pixels();
    marginal_error_parts(n, n, p.data(), p.dustbin_src(), p.dustbin_tgt(), p.corner())
}

fn marginal_error_parts(
    n: usize,
    m: usize,
    data: &[f64],
    dustbin_src: &[f64],
    dustbin_tgt: &[f64],
    corner: f64,
) -> f64 {
    let mut err: f64 = 0.0;
    let mut cols = dustbin_tgt.to_vec();
    for i in 0..n {
        let row = &data[i * m..(i + 1) * m];
        let sum = row.iter().sum::<f64>() + dustbin_src[i];
        err = err.max((sum - 1.0).abs());
        for (c, x) in cols.iter_mut().zip(row) {
            *c += x;
        }
    }
    for c in &cols {
        err = err.max((c - 1.0).abs());
    }
    let dust_row = dustbin_tgt.iter().sum::<f64>() + corner;
    err = err.max((dust_row - m as f64).abs() / m as f64);
    let dust_col = dustbin_src.iter().sum::<f64>() + corner;
    err.max((dust_col - n as f64).abs() / n as f64)
}
