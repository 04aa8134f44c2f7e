//! Empirical scaling measurement for the fitting loop.
//!
//! Runs a fixed iteration budget on synthetic inputs of growing node count
//! (edges proportional to nodes, everything else held constant, dense
//! masking) and fits a quadratic to the measured wall times. With dense
//! masking the per-iteration work is Theta(n^2 k), so the quadratic term
//! should dominate the linear one at the largest measured size.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::factorization::{fit, GradientMode, Hyperparameters};
use crate::mat::{solve_small, Dense};
use crate::synthetic::{generate, SyntheticConfig};

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub node_counts: Vec<usize>,
    /// Fitting iterations per point; early stopping is disabled.
    pub iterations: usize,
    pub rank: usize,
    pub timestamps: usize,
    pub groups: usize,
    /// Edges per snapshot = `edge_factor * nodes`.
    pub edge_factor: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            node_counts: vec![250, 500, 1000, 2000],
            iterations: 1000,
            rank: 2,
            timestamps: 3,
            groups: 5,
            edge_factor: 4,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchPoint {
    pub nodes: usize,
    pub seconds: f64,
    pub final_objective: f64,
}

/// Least-squares quadratic on inputs normalized by `scale` (the largest x),
/// which keeps the 3x3 normal equations well-conditioned.
#[derive(Debug, Clone, Serialize)]
pub struct QuadraticFit {
    /// `y = coeffs[0] + coeffs[1] * (x/scale) + coeffs[2] * (x/scale)^2`.
    pub coeffs: [f64; 3],
    pub scale: f64,
    pub r_squared: f64,
}

impl QuadraticFit {
    /// Coefficients in raw units: `y = c0 + c1 x + c2 x^2`.
    pub fn raw_coeffs(&self) -> [f64; 3] {
        [
            self.coeffs[0],
            self.coeffs[1] / self.scale,
            self.coeffs[2] / (self.scale * self.scale),
        ]
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        let z = x / self.scale;
        self.coeffs[0] + self.coeffs[1] * z + self.coeffs[2] * z * z
    }

    /// True when the quadratic term outweighs the linear and constant ones
    /// combined at `x`.
    pub fn quadratic_dominates_at(&self, x: f64) -> bool {
        let [c0, c1, c2] = self.raw_coeffs();
        c2 * x * x > c1.abs() * x + c0.abs()
    }
}

/// Fits `y = c0 + c1 x + c2 x^2` by least squares. Needs at least three
/// points with at least three distinct x values.
pub fn fit_quadratic(xs: &[f64], ys: &[f64]) -> Result<QuadraticFit> {
    if xs.len() != ys.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} x values against {} y values",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 3 {
        return Err(Error::InvalidInput(
            "quadratic fit needs at least three points".into(),
        ));
    }
    let scale = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::InvalidInput("x values must include a finite nonzero".into()));
    }
    let mut xtx = Dense::zeros(3, 3);
    let mut xty = [0.0f64; 3];
    for (&x, &y) in xs.iter().zip(ys) {
        let z = x / scale;
        let row = [1.0, z, z * z];
        for a in 0..3 {
            xty[a] += row[a] * y;
            for b in 0..3 {
                xtx.set(a, b, xtx.get(a, b) + row[a] * row[b]);
            }
        }
    }
    let beta = solve_small(&xtx, &xty, 1e12).ok_or_else(|| {
        Error::InvalidInput("quadratic fit is singular; x values are too repetitive".into())
    })?;
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean) * (y - mean)).sum();
    let coeffs = [beta[0], beta[1], beta[2]];
    let fitted = QuadraticFit {
        coeffs,
        scale,
        r_squared: 1.0,
    };
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - fitted.evaluate(x);
            r * r
        })
        .sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(QuadraticFit {
        coeffs,
        scale,
        r_squared,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub points: Vec<BenchPoint>,
    pub fit: QuadraticFit,
}

/// Conservative step size and even loss weights keep every measured size on
/// the same code path with no divergence at one thousand iterations.
fn bench_hyperparameters(cfg: &BenchConfig) -> Hyperparameters {
    Hyperparameters {
        alpha: 0.001,
        beta: 0.001,
        lambda1: 0.005,
        lambda2: 0.001,
        rank: cfg.rank,
        max_iters: cfg.iterations,
        tol: 0.0,
        neg_sample_ratio: 0.0,
        seed: cfg.seed,
        gradient_mode: GradientMode::Exact,
    }
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.node_counts.len() < 3 {
        return Err(Error::InvalidInput(
            "need at least three node counts to fit the scaling curve".into(),
        ));
    }
    let hp = bench_hyperparameters(cfg);
    let mut points = Vec::with_capacity(cfg.node_counts.len());
    for &n in &cfg.node_counts {
        let data = generate(&SyntheticConfig {
            nodes: n,
            edges_per_snapshot: cfg.edge_factor * n,
            groups: cfg.groups,
            timestamps: cfg.timestamps,
            seed: cfg.seed,
            ..Default::default()
        })?;
        let start = Instant::now();
        let outcome = fit(&data.network, &hp)?;
        let seconds = start.elapsed().as_secs_f64();
        points.push(BenchPoint {
            nodes: n,
            seconds,
            final_objective: outcome.final_objective(),
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.nodes as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.seconds).collect();
    let fit = fit_quadratic(&xs, &ys)?;
    Ok(BenchReport { points, fit })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_fit_recovers_exact_coefficients() {
        let xs: Vec<f64> = (1..=6).map(|x| x as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 + 3.0 * x + 4.0 * x * x).collect();
        let fit = fit_quadratic(&xs, &ys).unwrap();
        let [c0, c1, c2] = fit.raw_coeffs();
        assert!((c0 - 2.0).abs() < 1e-8, "c0 = {c0}");
        assert!((c1 - 3.0).abs() < 1e-8, "c1 = {c1}");
        assert!((c2 - 4.0).abs() < 1e-8, "c2 = {c2}");
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noise_lowers_r_squared_below_a_clean_fit() {
        let xs: Vec<f64> = (1..=6).map(|x| x as f64).collect();
        let clean: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let noisy = vec![0.0, 5.0, 1.0, 7.0, 2.0, 9.0];
        let good = fit_quadratic(&xs, &clean).unwrap().r_squared;
        let bad = fit_quadratic(&xs, &noisy).unwrap().r_squared;
        assert!(good > 0.999999);
        assert!(bad < good);
        assert!(bad < 0.95, "r^2 = {bad}");
    }

    #[test]
    fn dominance_depends_on_where_you_evaluate() {
        let xs = vec![100.0, 500.0, 1000.0, 2000.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.1 + 1e-6 * x * x).collect();
        let fit = fit_quadratic(&xs, &ys).unwrap();
        assert!(fit.quadratic_dominates_at(2000.0));
        assert!(!fit.quadratic_dominates_at(100.0));
    }

    #[test]
    fn repeated_x_values_are_rejected() {
        let xs = vec![5.0, 5.0, 5.0, 5.0];
        let ys = vec![1.0, 2.0, 3.0, 4.0];
        assert!(fit_quadratic(&xs, &ys).is_err());
    }

    #[test]
    fn tiny_sweep_produces_a_report() {
        let cfg = BenchConfig {
            node_counts: vec![20, 30, 40],
            iterations: 3,
            edge_factor: 2,
            groups: 2,
            ..Default::default()
        };
        let report = run_bench(&cfg).unwrap();
        assert_eq!(report.points.len(), 3);
        for p in &report.points {
            assert!(p.seconds > 0.0);
            assert!(p.final_objective.is_finite());
        }
    }
}
