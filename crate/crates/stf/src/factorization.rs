//! Joint factorization of link and content snapshots.
//!
//! Every snapshot `t` gets its own non-negative embedding matrix `U_t`
//! (`n x k`); a single link factor `V` (`n x k`) and a single content factor
//! `W` (`d x k`) are shared across snapshots, so `A_t ~ U_t V^T` and
//! `C_t ~ U_t W^T`. The objective is the masked squared reconstruction error
//! of both families plus ridge penalties and a temporal smoothness penalty
//! `sum_t ||U_{t+1} - U_t||^2`, minimized by projected gradient descent
//! (step, then clamp at zero).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::mat::{axpy, dot, Dense, Sparse};
use crate::network::TemporalNetwork;
use crate::util::derive_seed;

/// Relative-change denominators are clamped to this value so convergence
/// checks stay well-defined when the objective reaches zero.
pub const REL_CHANGE_FLOOR: f64 = 1e-12;

const STREAM_INIT: u64 = 0;
const STREAM_MASK: u64 = 1;

/// How the temporal coupling enters the embedding gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// True partial derivative: snapshot `t` is pulled toward both its
    /// neighbors (`U_t - U_{t+1}` and `U_t - U_{t-1}`).
    Exact,
    /// One-sided variant that keeps only the forward difference
    /// `U_t - U_{t+1}`; kept for comparability with implementations that
    /// update this way. Not a true gradient of the objective.
    OneSided,
}

impl fmt::Display for GradientMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GradientMode::Exact => write!(f, "exact"),
            GradientMode::OneSided => write!(f, "one-sided"),
        }
    }
}

/// Fitting hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Gradient step size.
    pub alpha: f64,
    /// Weight of the content reconstruction term.
    pub beta: f64,
    /// Ridge penalty on all factor matrices.
    pub lambda1: f64,
    /// Temporal smoothness penalty between consecutive embeddings.
    pub lambda2: f64,
    /// Embedding dimension `k`.
    pub rank: usize,
    pub max_iters: usize,
    /// Relative objective change below which fitting stops early.
    pub tol: f64,
    /// Sampled zero entries per observed nonzero; `0` evaluates every
    /// coordinate (dense mode).
    pub neg_sample_ratio: f64,
    pub seed: u64,
    pub gradient_mode: GradientMode,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            alpha: 0.01,
            beta: 0.5,
            lambda1: 1e-5,
            lambda2: 1e-4,
            rank: 10,
            max_iters: 1000,
            tol: 1e-8,
            neg_sample_ratio: 1.0,
            seed: 42,
            gradient_mode: GradientMode::Exact,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let complain = |msg: String| Err(Error::InvalidInput(msg));
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return complain(format!("step size must be finite and positive, got {}", self.alpha));
        }
        for (name, v) in [
            ("beta", self.beta),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("tol", self.tol),
            ("neg_sample_ratio", self.neg_sample_ratio),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return complain(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if self.rank == 0 {
            return complain("rank must be at least 1".into());
        }
        if self.max_iters == 0 {
            return complain("max_iters must be at least 1".into());
        }
        Ok(())
    }
}

/// Per-snapshot embeddings plus the shared link and content factors.
///
/// All entries stay finite and non-negative through every operation in this
/// crate; loaders re-validate with [`FactorModel::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    /// One `n x k` embedding per snapshot.
    pub u: Vec<Dense>,
    /// Shared link factor, `n x k`.
    pub v: Dense,
    /// Shared content factor, `d x k`.
    pub w: Dense,
}

impl FactorModel {
    /// Independent uniform draws from the open unit interval for every entry,
    /// in a fixed order (`U_1..U_T`, then `V`, then `W`) so a seed pins the
    /// whole initialization.
    pub fn init_random(n: usize, d: usize, timestamps: usize, rank: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = (0..timestamps)
            .map(|_| Dense::random_uniform(n, rank, &mut rng))
            .collect();
        let v = Dense::random_uniform(n, rank, &mut rng);
        let w = Dense::random_uniform(d, rank, &mut rng);
        FactorModel { u, v, w }
    }

    pub fn node_count(&self) -> usize {
        self.v.rows()
    }

    pub fn term_count(&self) -> usize {
        self.w.rows()
    }

    pub fn timestamps(&self) -> usize {
        self.u.len()
    }

    pub fn rank(&self) -> usize {
        self.v.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.u.is_empty() {
            return Err(Error::ShapeMismatch("model has no embedding snapshots".into()));
        }
        let (n, k) = self.v.shape();
        if self.w.cols() != k {
            return Err(Error::ShapeMismatch(format!(
                "content factor rank {} != link factor rank {k}",
                self.w.cols()
            )));
        }
        for (t, u) in self.u.iter().enumerate() {
            if u.shape() != (n, k) {
                return Err(Error::ShapeMismatch(format!(
                    "embedding {} is {}x{}, expected {n}x{k}",
                    t + 1,
                    u.rows(),
                    u.cols()
                )));
            }
        }
        for (name, m) in std::iter::once(("V", &self.v))
            .chain(std::iter::once(("W", &self.w)))
            .chain(self.u.iter().map(|u| ("U", u)))
        {
            if !m.all_finite() || m.min_value() < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "factor {name} contains a non-finite or negative entry"
                )));
            }
        }
        Ok(())
    }
}

/// Coordinates at which one snapshot's reconstruction error is evaluated,
/// with the observed value at each coordinate (`0.0` for sampled zeros).
///
/// Stored like a CSR matrix; the entry order is the canonical order of the
/// residual vectors aligned with it.
#[derive(Debug, Clone)]
pub struct MaskedTargets {
    rows: usize,
    cols: usize,
    pub(crate) row_ptr: Vec<usize>,
    pub(crate) col_idx: Vec<u32>,
    pub(crate) targets: Vec<f64>,
}

impl MaskedTargets {
    /// Number of masked coordinates.
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Iterates `(row, col, observed_value)` in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| {
            let lo = self.row_ptr[i];
            let hi = self.row_ptr[i + 1];
            self.col_idx[lo..hi]
                .iter()
                .zip(&self.targets[lo..hi])
                .map(move |(&j, &v)| (i, j as usize, v))
        })
    }

    fn from_sorted_triplets(rows: usize, cols: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut row_ptr = vec![0usize; rows + 1];
        for &(i, _, _) in entries {
            row_ptr[i + 1] += 1;
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        MaskedTargets {
            rows,
            cols,
            row_ptr,
            col_idx: entries.iter().map(|&(_, j, _)| j as u32).collect(),
            targets: entries.iter().map(|&(_, _, v)| v).collect(),
        }
    }

    fn dense_from(m: &Sparse) -> Self {
        let (rows, cols) = (m.rows(), m.cols());
        let mut col_idx = Vec::with_capacity(rows * cols);
        let mut targets = vec![0.0f64; rows * cols];
        for i in 0..rows {
            col_idx.extend(0..cols as u32);
            let (cs, vs) = m.row_entries(i);
            for (&j, &v) in cs.iter().zip(vs) {
                targets[i * cols + j as usize] = v;
            }
        }
        MaskedTargets {
            rows,
            cols,
            row_ptr: (0..=rows).map(|i| i * cols).collect(),
            col_idx,
            targets,
        }
    }

    fn sampled_from(m: &Sparse, ratio: f64, exclude_diag: bool, rng: &mut ChaCha8Rng) -> Self {
        use rand::Rng;
        let (rows, cols) = (m.rows(), m.cols());
        let nnz = m.nnz();
        let requested = (ratio * nnz as f64).floor() as usize;
        let diag_cells = if exclude_diag { rows.min(cols) } else { 0 };
        let nnz_eligible = nnz - if exclude_diag { m.diagonal_nnz() } else { 0 };
        let pool = rows * cols - diag_cells - nnz_eligible;
        let count = requested.min(pool);

        let mut zeros: Vec<(usize, usize)> = Vec::with_capacity(count);
        if count > 0 {
            if count * 2 >= pool {
                // Nearly exhausting the zero pool: enumerate it and take a
                // uniform subset, since rejection sampling would stall.
                let mut all: Vec<(usize, usize)> = Vec::with_capacity(pool);
                for i in 0..rows {
                    for j in 0..cols {
                        if (exclude_diag && i == j) || m.contains(i, j) {
                            continue;
                        }
                        all.push((i, j));
                    }
                }
                for idx in 0..count {
                    let pick = rng.gen_range(idx..all.len());
                    all.swap(idx, pick);
                }
                all.truncate(count);
                zeros = all;
            } else {
                let mut seen: HashSet<(usize, usize)> = HashSet::with_capacity(count * 2);
                while zeros.len() < count {
                    let i = rng.gen_range(0..rows);
                    let j = rng.gen_range(0..cols);
                    if (exclude_diag && i == j) || m.contains(i, j) {
                        continue;
                    }
                    if seen.insert((i, j)) {
                        zeros.push((i, j));
                    }
                }
            }
        }

        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(nnz + zeros.len());
        entries.extend(m.iter());
        entries.extend(zeros.into_iter().map(|(i, j)| (i, j, 0.0)));
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        MaskedTargets::from_sorted_triplets(rows, cols, &entries)
    }
}

/// Per-snapshot evaluation masks for the adjacency and content matrices.
#[derive(Debug, Clone)]
pub struct ActiveMasks {
    node_count: usize,
    term_count: usize,
    adjacency: Vec<MaskedTargets>,
    content: Vec<MaskedTargets>,
}

impl ActiveMasks {
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn term_count(&self) -> usize {
        self.term_count
    }

    pub fn timestamps(&self) -> usize {
        self.adjacency.len()
    }

    pub fn adjacency(&self, t: usize) -> &MaskedTargets {
        &self.adjacency[t]
    }

    pub fn content(&self, t: usize) -> &MaskedTargets {
        &self.content[t]
    }
}

/// Draws the coordinates at which reconstruction error is evaluated.
///
/// Each snapshot's mask holds every observed nonzero plus
/// `floor(ratio * nnz)` distinct zero coordinates sampled uniformly (clamped
/// to the number of zeros available). Zero sampling skips the diagonal of
/// undirected adjacency snapshots. `ratio = 0` selects every coordinate of
/// every matrix instead (dense mode). Sampled zeros are treated as observed
/// zeros by all downstream computations. Deterministic given `seed`.
pub fn sample_active_mask(
    network: &TemporalNetwork,
    ratio: f64,
    seed: u64,
) -> Result<ActiveMasks> {
    if !ratio.is_finite() || ratio < 0.0 {
        return Err(Error::InvalidInput(format!(
            "negative sampling ratio must be finite and >= 0, got {ratio}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adjacency = Vec::with_capacity(network.timestamps());
    let mut content = Vec::with_capacity(network.timestamps());
    for t in 0..network.timestamps() {
        if ratio == 0.0 {
            adjacency.push(MaskedTargets::dense_from(network.adjacency(t)));
            content.push(MaskedTargets::dense_from(network.content(t)));
        } else {
            adjacency.push(MaskedTargets::sampled_from(
                network.adjacency(t),
                ratio,
                !network.directed(),
                &mut rng,
            ));
            content.push(MaskedTargets::sampled_from(
                network.content(t),
                ratio,
                false,
                &mut rng,
            ));
        }
    }
    Ok(ActiveMasks {
        node_count: network.node_count(),
        term_count: network.term_count(),
        adjacency,
        content,
    })
}

/// Reconstruction and smoothness residuals for one model state.
///
/// `delta_a[t]` and `delta_c[t]` hold `observed - predicted` per masked
/// coordinate, aligned with the storage order of the corresponding mask.
/// `delta_u[t] = U_t - U_{t+1}`, with the final snapshot's entry all zero.
#[derive(Debug, Clone)]
pub struct Residuals {
    pub delta_a: Vec<Vec<f64>>,
    pub delta_c: Vec<Vec<f64>>,
    pub delta_u: Vec<Dense>,
}

fn residual_pass(u: &Dense, factor: &Dense, mask: &MaskedTargets) -> Vec<f64> {
    let mut out = vec![0.0f64; mask.len()];
    for i in 0..mask.rows() {
        let urow = u.row(i);
        let lo = mask.row_ptr[i];
        let hi = mask.row_ptr[i + 1];
        let cols = &mask.col_idx[lo..hi];
        let tgts = &mask.targets[lo..hi];
        for ((&j, &tgt), o) in cols.iter().zip(tgts).zip(&mut out[lo..hi]) {
            *o = tgt - dot(urow, factor.row(j as usize));
        }
    }
    out
}

fn check_mask_model(model: &FactorModel, masks: &ActiveMasks) -> Result<()> {
    if model.node_count() != masks.node_count()
        || model.term_count() != masks.term_count()
        || model.timestamps() != masks.timestamps()
    {
        return Err(Error::ShapeMismatch(format!(
            "model covers {} nodes / {} terms / {} snapshots but masks cover {} / {} / {}",
            model.node_count(),
            model.term_count(),
            model.timestamps(),
            masks.node_count(),
            masks.term_count(),
            masks.timestamps()
        )));
    }
    Ok(())
}

/// Evaluates `observed - predicted` at every masked coordinate, plus the
/// consecutive-snapshot embedding differences.
pub fn compute_residuals(model: &FactorModel, masks: &ActiveMasks) -> Result<Residuals> {
    check_mask_model(model, masks)?;
    let t_count = model.timestamps();
    let delta_a: Vec<Vec<f64>> = (0..t_count)
        .into_par_iter()
        .map(|t| residual_pass(&model.u[t], &model.v, masks.adjacency(t)))
        .collect();
    let delta_c: Vec<Vec<f64>> = (0..t_count)
        .into_par_iter()
        .map(|t| residual_pass(&model.u[t], &model.w, masks.content(t)))
        .collect();
    let mut delta_u = Vec::with_capacity(t_count);
    for t in 0..t_count {
        let mut d = Dense::zeros(model.node_count(), model.rank());
        if t + 1 < t_count {
            d.add_scaled(1.0, &model.u[t]);
            d.add_scaled(-1.0, &model.u[t + 1]);
        }
        delta_u.push(d);
    }
    Ok(Residuals {
        delta_a,
        delta_c,
        delta_u,
    })
}

/// Objective value split into its four terms. `total` applies the weights:
/// `structural + beta * content + lambda1 * factor_norm + lambda2 * temporal`.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveBreakdown {
    /// Sum of squared masked adjacency residuals.
    pub structural: f64,
    /// Sum of squared masked content residuals (unweighted).
    pub content: f64,
    /// Sum of squared entries of all factor matrices (unweighted).
    pub factor_norm: f64,
    /// Sum of squared consecutive embedding differences (unweighted).
    pub temporal: f64,
    pub total: f64,
}

/// Sums an already-computed residual set into the objective.
pub fn objective_from_residuals(
    model: &FactorModel,
    hp: &Hyperparameters,
    res: &Residuals,
) -> ObjectiveBreakdown {
    let sq = |v: &Vec<f64>| v.iter().map(|d| d * d).sum::<f64>();
    let structural: f64 = res.delta_a.iter().map(sq).sum();
    let content: f64 = res.delta_c.iter().map(sq).sum();
    let factor_norm = model.v.frob_sq()
        + model.w.frob_sq()
        + model.u.iter().map(Dense::frob_sq).sum::<f64>();
    let temporal: f64 = res.delta_u.iter().map(Dense::frob_sq).sum();
    let total = structural + hp.beta * content + hp.lambda1 * factor_norm + hp.lambda2 * temporal;
    ObjectiveBreakdown {
        structural,
        content,
        factor_norm,
        temporal,
        total,
    }
}

/// Full objective for a model state under the given masks.
pub fn evaluate_objective(
    model: &FactorModel,
    hp: &Hyperparameters,
    masks: &ActiveMasks,
) -> Result<f64> {
    Ok(evaluate_objective_breakdown(model, hp, masks)?.total)
}

pub fn evaluate_objective_breakdown(
    model: &FactorModel,
    hp: &Hyperparameters,
    masks: &ActiveMasks,
) -> Result<ObjectiveBreakdown> {
    let res = compute_residuals(model, masks)?;
    let bd = objective_from_residuals(model, hp, &res);
    if !bd.total.is_finite() {
        return Err(Error::NonFiniteObjective(format!(
            "structural {:e}, content {:e}, norms {:e}, temporal {:e}",
            bd.structural, bd.content, bd.factor_norm, bd.temporal
        )));
    }
    Ok(bd)
}

/// Partial derivatives of the objective with respect to every factor matrix.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub u: Vec<Dense>,
    pub v: Dense,
    pub w: Dense,
}

/// Accumulates `sum_entries delta * factor_row` into per-row buffers:
/// `into_left[i] += delta_ij * factor[j]` and `into_right[j] += delta_ij * u[i]`.
fn scatter_pass(
    u: &Dense,
    factor: &Dense,
    mask: &MaskedTargets,
    delta: &[f64],
    into_left: &mut Dense,
    into_right: &mut Dense,
) {
    for i in 0..mask.rows() {
        let lo = mask.row_ptr[i];
        let hi = mask.row_ptr[i + 1];
        let urow = u.row(i);
        let lrow = into_left.row_mut(i);
        for (&j, &d) in mask.col_idx[lo..hi].iter().zip(&delta[lo..hi]) {
            let j = j as usize;
            axpy(lrow, d, factor.row(j));
            axpy(into_right.row_mut(j), d, urow);
        }
    }
}

/// Computes all partial derivatives at the model state the residuals were
/// taken at. The temporal term follows `hp.gradient_mode`; everything else is
/// identical in both modes.
pub fn compute_gradients(
    model: &FactorModel,
    hp: &Hyperparameters,
    masks: &ActiveMasks,
    res: &Residuals,
) -> Gradients {
    let t_count = model.timestamps();
    let n = model.node_count();
    let d = model.term_count();
    let k = model.rank();

    struct PerSnapshot {
        grad_u: Dense,
        partial_v: Dense,
        partial_w: Dense,
    }

    let per_t: Vec<PerSnapshot> = (0..t_count)
        .into_par_iter()
        .map(|t| {
            let mut acc_a = Dense::zeros(n, k);
            let mut partial_v = Dense::zeros(n, k);
            scatter_pass(
                &model.u[t],
                &model.v,
                masks.adjacency(t),
                &res.delta_a[t],
                &mut acc_a,
                &mut partial_v,
            );
            let mut acc_c = Dense::zeros(n, k);
            let mut partial_w = Dense::zeros(d, k);
            scatter_pass(
                &model.u[t],
                &model.w,
                masks.content(t),
                &res.delta_c[t],
                &mut acc_c,
                &mut partial_w,
            );

            let mut grad_u = Dense::zeros(n, k);
            {
                let g = grad_u.data_mut();
                let ud = model.u[t].data();
                let aa = acc_a.data();
                let ac = acc_c.data();
                let fwd = res.delta_u[t].data();
                let bwd = (t > 0).then(|| res.delta_u[t - 1].data());
                for q in 0..g.len() {
                    let temporal = match hp.gradient_mode {
                        GradientMode::Exact => fwd[q] - bwd.map_or(0.0, |b| b[q]),
                        GradientMode::OneSided => fwd[q],
                    };
                    g[q] = 2.0
                        * (hp.lambda1 * ud[q] - aa[q] - hp.beta * ac[q] + hp.lambda2 * temporal);
                }
            }
            PerSnapshot {
                grad_u,
                partial_v,
                partial_w,
            }
        })
        .collect();

    // Shared-factor gradients sum snapshot contributions in snapshot order,
    // so threaded and sequential runs produce identical bits.
    let mut sum_v = Dense::zeros(n, k);
    let mut sum_w = Dense::zeros(d, k);
    let mut grad_u = Vec::with_capacity(t_count);
    for p in per_t {
        sum_v.add_scaled(1.0, &p.partial_v);
        sum_w.add_scaled(1.0, &p.partial_w);
        grad_u.push(p.grad_u);
    }
    let mut grad_v = Dense::zeros(n, k);
    let mut grad_w = Dense::zeros(d, k);
    {
        let g = grad_v.data_mut();
        let vd = model.v.data();
        let s = sum_v.data();
        for q in 0..g.len() {
            g[q] = 2.0 * (hp.lambda1 * vd[q] - s[q]);
        }
        let g = grad_w.data_mut();
        let wd = model.w.data();
        let s = sum_w.data();
        for q in 0..g.len() {
            g[q] = 2.0 * (hp.lambda1 * wd[q] - hp.beta * s[q]);
        }
    }
    Gradients {
        u: grad_u,
        v: grad_v,
        w: grad_w,
    }
}

/// One projected descent step: `X <- max(0, X - alpha * grad)` for every
/// factor matrix simultaneously. The gradients were computed from the
/// pre-step state, so no matrix sees another's update within a step.
pub fn gradient_step(model: &mut FactorModel, grads: &Gradients, alpha: f64) {
    let apply = |m: &mut Dense, g: &Dense| {
        for (x, gq) in m.data_mut().iter_mut().zip(g.data()) {
            *x = (*x - alpha * gq).max(0.0);
        }
    };
    for (u, gu) in model.u.iter_mut().zip(&grads.u) {
        apply(u, gu);
    }
    apply(&mut model.v, &grads.v);
    apply(&mut model.w, &grads.w);
}

/// Result of a fitting run.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: FactorModel,
    /// `trace[i]` is the objective after `i` descent steps; `trace[0]` is the
    /// objective of the initialization.
    pub trace: Vec<f64>,
    /// Seed the evaluation mask was drawn with (derived from `hp.seed`).
    pub mask_seed: u64,
    /// Descent steps actually applied.
    pub iterations: usize,
}

impl FitOutcome {
    pub fn initial_objective(&self) -> f64 {
        self.trace[0]
    }

    pub fn final_objective(&self) -> f64 {
        *self.trace.last().unwrap()
    }
}

/// Fits a model from a seeded random initialization.
///
/// The evaluation mask is drawn once before the first iteration and reused
/// throughout. Stops after `max_iters` steps or as soon as the relative
/// objective change falls below `tol`. A non-finite objective aborts with
/// [`Error::Divergence`] carrying the iteration index and the last finite
/// value.
pub fn fit(network: &TemporalNetwork, hp: &Hyperparameters) -> Result<FitOutcome> {
    hp.validate()?;
    let init = FactorModel::init_random(
        network.node_count(),
        network.term_count(),
        network.timestamps(),
        hp.rank,
        derive_seed(hp.seed, STREAM_INIT),
    );
    fit_with_init(network, hp, init)
}

/// Fits starting from a caller-supplied state; used for warm restarts and by
/// tests that need to control the initialization.
pub fn fit_with_init(
    network: &TemporalNetwork,
    hp: &Hyperparameters,
    init: FactorModel,
) -> Result<FitOutcome> {
    hp.validate()?;
    init.validate()?;
    if init.node_count() != network.node_count()
        || init.term_count() != network.term_count()
        || init.timestamps() != network.timestamps()
        || init.rank() != hp.rank
    {
        return Err(Error::ShapeMismatch(format!(
            "initial model ({} nodes, {} terms, {} snapshots, rank {}) does not match \
             network ({}, {}, {}) and rank {}",
            init.node_count(),
            init.term_count(),
            init.timestamps(),
            init.rank(),
            network.node_count(),
            network.term_count(),
            network.timestamps(),
            hp.rank
        )));
    }
    let mask_seed = derive_seed(hp.seed, STREAM_MASK);
    let masks = sample_active_mask(network, hp.neg_sample_ratio, mask_seed)?;

    let mut model = init;
    let mut res = compute_residuals(&model, &masks)?;
    let j0 = objective_from_residuals(&model, hp, &res).total;
    if !j0.is_finite() {
        return Err(Error::Divergence {
            iteration: 0,
            last_objective: f64::NAN,
        });
    }
    let mut trace = Vec::with_capacity(hp.max_iters + 1);
    trace.push(j0);

    for it in 1..=hp.max_iters {
        let grads = compute_gradients(&model, hp, &masks, &res);
        gradient_step(&mut model, &grads, hp.alpha);
        res = compute_residuals(&model, &masks)?;
        let j = objective_from_residuals(&model, hp, &res).total;
        if !j.is_finite() {
            return Err(Error::Divergence {
                iteration: it,
                last_objective: *trace.last().unwrap(),
            });
        }
        let prev = *trace.last().unwrap();
        trace.push(j);
        if (prev - j).abs() / prev.max(REL_CHANGE_FLOOR) < hp.tol {
            break;
        }
    }
    let iterations = trace.len() - 1;
    Ok(FitOutcome {
        model,
        trace,
        mask_seed,
        iterations,
    })
}

/// True when the trace never increases beyond floating-point slack
/// (`J_{i+1} <= J_i * (1 + 1e-12)`).
pub fn trace_is_non_increasing(trace: &[f64]) -> bool {
    trace
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-12) + f64::MIN_POSITIVE)
}

/// A fit accepted by [`fit_with_step_backoff`], with the step size it used.
#[derive(Debug, Clone)]
pub struct BackoffFit {
    pub outcome: FitOutcome,
    pub alpha: f64,
    pub halvings: u32,
}

/// When [`fit_with_step_backoff`] rejects a finished fit and retries with a
/// smaller step. A non-finite objective always triggers a retry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackoffPolicy {
    /// Accept any finite fit.
    OnDivergence,
    /// Also retry when the objective ends above where it started.
    OnIncrease,
    /// Also retry when the objective increases anywhere along the trace.
    OnNonMonotone,
}

/// Retries [`fit`] with a halved step size until the outcome satisfies
/// `policy`. Gives up after `max_halvings` retries.
pub fn fit_with_step_backoff(
    network: &TemporalNetwork,
    hp: &Hyperparameters,
    max_halvings: u32,
    policy: BackoffPolicy,
) -> Result<BackoffFit> {
    let mut alpha = hp.alpha;
    let mut halvings = 0u32;
    loop {
        let attempt = Hyperparameters {
            alpha,
            ..hp.clone()
        };
        let retry = |halvings: u32| halvings < max_halvings;
        match fit(network, &attempt) {
            Ok(outcome) => {
                let acceptable = match policy {
                    BackoffPolicy::OnDivergence => true,
                    BackoffPolicy::OnIncrease => {
                        outcome.final_objective() <= outcome.initial_objective()
                    }
                    BackoffPolicy::OnNonMonotone => trace_is_non_increasing(&outcome.trace),
                };
                if acceptable {
                    return Ok(BackoffFit {
                        outcome,
                        alpha,
                        halvings,
                    });
                }
                if !retry(halvings) {
                    return Err(Error::InvalidInput(format!(
                        "objective still increases after {halvings} step-size halvings \
                         (step size {alpha:e})"
                    )));
                }
            }
            Err(e @ Error::Divergence { .. }) => {
                if !retry(halvings) {
                    return Err(e);
                }
            }
            Err(e) => return Err(e),
        }
        alpha *= 0.5;
        halvings += 1;
    }
}
