//! Forecasting future embeddings from the fitted snapshot sequence.
//!
//! Every tracked embedding coordinate becomes a scalar time series of length
//! `T`. Each series gets its own autoregression fitted by ordinary least
//! squares; series too short or too ill-conditioned for that fall back to a
//! constant forecast, as do fits whose first forecast leaps far outside the
//! observed range (short histories make such runaway extrapolations common).
//! Multi-step forecasts feed earlier forecasts back in as inputs, clamped at
//! zero like every other embedding value.

use rayon::prelude::*;

use crate::communities::{kmeans, CommunityAssignment, DetectOptions};
use crate::error::{Error, Result};
use crate::factorization::FactorModel;
use crate::mat::{solve_small, Dense};
use crate::network::TemporalNetwork;

/// Condition-estimate bound beyond which the normal equations are treated as
/// singular and the entry falls back to a constant forecast.
const MAX_CONDITION: f64 = 1e12;

/// An autoregression is only trusted when its first forecast stays within
/// this many observed ranges of the last observed value; wilder jumps fall
/// back to a constant forecast.
const TRUST_RADIUS: f64 = 2.0;

/// Which embedding coordinates get their own forecast series.
#[derive(Debug, Clone)]
pub enum TrackPolicy {
    /// Coordinates nonzero in at least one snapshot (default).
    NonzeroEmbedding,
    /// All coordinates of flagged nodes; build the flags from observed edges
    /// with [`TrackPolicy::active_nodes`].
    ActiveNodes(Vec<bool>),
}

impl TrackPolicy {
    /// Flags every node with at least one incident edge in any snapshot.
    pub fn active_nodes(network: &TemporalNetwork) -> TrackPolicy {
        let mut active = vec![false; network.node_count()];
        for t in 0..network.timestamps() {
            for (i, j, _) in network.adjacency(t).iter() {
                active[i] = true;
                active[j] = true;
            }
        }
        TrackPolicy::ActiveNodes(active)
    }

    /// Stable name recorded in forecast metadata.
    pub fn name(&self) -> &'static str {
        match self {
            TrackPolicy::NonzeroEmbedding => "embedding",
            TrackPolicy::ActiveNodes(_) => "adjacency",
        }
    }
}

/// Constant forecast used when a series cannot support its autoregression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FallbackPolicy {
    LastValue,
    Mean,
}

impl FallbackPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            FallbackPolicy::LastValue => "last-value",
            FallbackPolicy::Mean => "mean",
        }
    }

    fn resolve(&self, series: &[f64]) -> f64 {
        match self {
            FallbackPolicy::LastValue => *series.last().unwrap(),
            FallbackPolicy::Mean => series.iter().sum::<f64>() / series.len() as f64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForecastOptions {
    /// Autoregression order; `None` resolves to `min(2, T - 2)`. An order of
    /// zero sends every entry to the fallback.
    pub order: Option<usize>,
    /// Fit an intercept term (on by default).
    pub intercept: bool,
    pub fallback: FallbackPolicy,
    pub policy: TrackPolicy,
}

impl Default for ForecastOptions {
    fn default() -> Self {
        ForecastOptions {
            order: None,
            intercept: true,
            fallback: FallbackPolicy::LastValue,
            policy: TrackPolicy::NonzeroEmbedding,
        }
    }
}

/// One tracked coordinate's history.
#[derive(Debug, Clone)]
pub struct TrackedSeries {
    pub row: usize,
    pub col: usize,
    /// `values[t]` is the coordinate at snapshot `t`; length `T`.
    pub values: Vec<f64>,
}

/// Extracts the per-coordinate series selected by `policy`, in row-major
/// coordinate order.
pub fn build_series(model: &FactorModel, policy: &TrackPolicy) -> Result<Vec<TrackedSeries>> {
    let n = model.node_count();
    let k = model.rank();
    if let TrackPolicy::ActiveNodes(flags) = policy {
        if flags.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} node flags for a {n}-node model",
                flags.len()
            )));
        }
    }
    let mut out = Vec::new();
    for i in 0..n {
        for q in 0..k {
            let tracked = match policy {
                TrackPolicy::NonzeroEmbedding => model.u.iter().any(|u| u.get(i, q) > 0.0),
                TrackPolicy::ActiveNodes(flags) => flags[i],
            };
            if tracked {
                out.push(TrackedSeries {
                    row: i,
                    col: q,
                    values: model.u.iter().map(|u| u.get(i, q)).collect(),
                });
            }
        }
    }
    Ok(out)
}

/// Ordinary-least-squares autoregression `x_t = c + sum_q a_q x_{t-q}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArFit {
    pub intercept: f64,
    /// `coeffs[q - 1]` multiplies `x_{t - q}`.
    pub coeffs: Vec<f64>,
}

/// Fits the autoregression, or returns `None` when the series is too short
/// (`T - order < order + 1` usable rows) or the normal equations are singular
/// or ill-conditioned.
pub fn fit_ar(series: &[f64], order: usize, intercept: bool) -> Option<ArFit> {
    let t_len = series.len();
    if order == 0 || t_len <= order || t_len - order < order + 1 {
        return None;
    }
    let params = order + usize::from(intercept);
    let rows = t_len - order;
    // normal equations X^T X beta = X^T y, with the lag columns first
    let mut xtx = Dense::zeros(params, params);
    let mut xty = vec![0.0f64; params];
    for r in 0..rows {
        let t = order + r;
        let mut x = Vec::with_capacity(params);
        for q in 1..=order {
            x.push(series[t - q]);
        }
        if intercept {
            x.push(1.0);
        }
        for a in 0..params {
            xty[a] += x[a] * series[t];
            for b in 0..params {
                xtx.set(a, b, xtx.get(a, b) + x[a] * x[b]);
            }
        }
    }
    let beta = solve_small(&xtx, &xty, MAX_CONDITION)?;
    let (coeffs, c) = if intercept {
        (beta[..order].to_vec(), beta[order])
    } else {
        (beta, 0.0)
    };
    Some(ArFit { intercept: c, coeffs })
}

/// True when the fit's first forecast (clamped like a real step) lands within
/// [`TRUST_RADIUS`] observed ranges of the last value.
fn ar_is_trusted(ar: &ArFit, values: &[f64]) -> bool {
    let last = *values.last().unwrap();
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let mut first = ar.intercept;
    for (q, a) in ar.coeffs.iter().enumerate() {
        first += a * values[values.len() - 1 - q];
    }
    (first.max(0.0) - last).abs() <= TRUST_RADIUS * (hi - lo)
}

#[derive(Debug, Clone)]
enum EntryModel {
    Ar(ArFit),
    Constant(f64),
}

#[derive(Debug, Clone)]
struct EntryForecaster {
    row: usize,
    col: usize,
    /// Most recent `order` values, oldest first; empty for constant entries.
    window: Vec<f64>,
    model: EntryModel,
}

impl EntryForecaster {
    /// One forecast step; feeds the clamped result back into the window.
    fn step(&mut self) -> f64 {
        match &self.model {
            EntryModel::Constant(v) => *v,
            EntryModel::Ar(ar) => {
                let len = self.window.len();
                let mut x = ar.intercept;
                for (q, a) in ar.coeffs.iter().enumerate() {
                    x += a * self.window[len - 1 - q];
                }
                let x = x.max(0.0);
                self.window.rotate_left(1);
                self.window[len - 1] = x;
                x
            }
        }
    }
}

/// Per-coordinate forecasters fitted on a model's embedding history.
#[derive(Debug, Clone)]
pub struct ForecastModel {
    entries: Vec<EntryForecaster>,
    node_count: usize,
    rank: usize,
    order: usize,
    policy_name: &'static str,
    fallback_name: &'static str,
    /// How many tracked entries actually carry an autoregression (the rest
    /// fell back to a constant).
    ar_entries: usize,
}

impl ForecastModel {
    pub fn fit(model: &FactorModel, opts: &ForecastOptions) -> Result<ForecastModel> {
        let t_len = model.timestamps();
        let order = match opts.order {
            Some(p) => p,
            None => 2.min(t_len.saturating_sub(2)),
        };
        let series = build_series(model, &opts.policy)?;
        let entries: Vec<EntryForecaster> = series
            .into_par_iter()
            .map(|s| {
                let fitted = if order >= 1 {
                    fit_ar(&s.values, order, opts.intercept)
                } else {
                    None
                };
                match fitted {
                    Some(ar) if ar_is_trusted(&ar, &s.values) => EntryForecaster {
                        row: s.row,
                        col: s.col,
                        window: s.values[s.values.len() - order..].to_vec(),
                        model: EntryModel::Ar(ar),
                    },
                    _ => EntryForecaster {
                        row: s.row,
                        col: s.col,
                        window: Vec::new(),
                        model: EntryModel::Constant(opts.fallback.resolve(&s.values)),
                    },
                }
            })
            .collect();
        let ar_entries = entries
            .iter()
            .filter(|e| matches!(e.model, EntryModel::Ar(_)))
            .count();
        Ok(ForecastModel {
            entries,
            node_count: model.node_count(),
            rank: model.rank(),
            order,
            policy_name: opts.policy.name(),
            fallback_name: opts.fallback.name(),
            ar_entries,
        })
    }

    /// Forecasts the embedding `horizon` snapshots past the fitted history.
    /// Untracked coordinates stay zero.
    pub fn predict(&self, horizon: usize) -> Result<Dense> {
        if horizon == 0 {
            return Err(Error::InvalidInput(
                "forecast horizon must be at least 1".into(),
            ));
        }
        let mut out = Dense::zeros(self.node_count, self.rank);
        for entry in &self.entries {
            let mut e = entry.clone();
            let mut value = 0.0;
            for _ in 0..horizon {
                value = e.step();
            }
            out.set(e.row, e.col, value);
        }
        Ok(out)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn policy_name(&self) -> &'static str {
        self.policy_name
    }

    pub fn fallback_name(&self) -> &'static str {
        self.fallback_name
    }

    pub fn tracked_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn ar_entries(&self) -> usize {
        self.ar_entries
    }
}

/// Convenience wrapper: fit per-entry forecasters and predict `U_{T+horizon}`.
pub fn predict_embedding(
    model: &FactorModel,
    horizon: usize,
    opts: &ForecastOptions,
) -> Result<Dense> {
    ForecastModel::fit(model, opts)?.predict(horizon)
}

/// Forecasts the embedding and clusters its rows: the communities expected
/// `horizon` snapshots after the last observed one. The returned assignment
/// covers that single future snapshot.
pub fn predict_communities(
    model: &FactorModel,
    horizon: usize,
    opts: &ForecastOptions,
    clusters: usize,
    seed: u64,
) -> Result<CommunityAssignment> {
    let forecast = predict_embedding(model, horizon, opts)?;
    let detect = DetectOptions::default();
    let km = kmeans(&forecast, clusters, seed, detect.restarts, detect.max_iters)?;
    Ok(CommunityAssignment {
        labels: vec![km.labels],
        centroids: km.centroids,
        cluster_count: clusters,
        inertia: km.inertia,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::communities::detect_communities;

    #[test]
    fn ar_without_intercept_recovers_doubling_series() {
        let fit = fit_ar(&[1.0, 2.0, 4.0], 1, false).unwrap();
        assert!((fit.coeffs[0] - 2.0).abs() < 1e-12);
        assert_eq!(fit.intercept, 0.0);
    }

    #[test]
    fn ar_refuses_short_series() {
        // T - p = 1 usable row < p + 1 = 3
        assert!(fit_ar(&[1.0, 2.0, 4.0], 2, true).is_none());
        assert!(fit_ar(&[1.0], 1, true).is_none());
        assert!(fit_ar(&[1.0, 2.0, 4.0], 0, true).is_none());
    }

    #[test]
    fn ar_refuses_singular_systems() {
        // constant series: lag column and intercept column are collinear
        assert!(fit_ar(&[0.5, 0.5, 0.5, 0.5], 1, true).is_none());
    }

    fn single_entry_model(series: &[f64]) -> FactorModel {
        FactorModel {
            u: series
                .iter()
                .map(|&x| Dense::from_rows(&[vec![x]]))
                .collect(),
            v: Dense::from_rows(&[vec![1.0]]),
            w: Dense::zeros(0, 1),
        }
    }

    #[test]
    fn doubling_series_forecasts_eight_then_sixteen() {
        let model = single_entry_model(&[1.0, 2.0, 4.0]);
        let opts = ForecastOptions {
            order: Some(1),
            intercept: false,
            ..Default::default()
        };
        let one = predict_embedding(&model, 1, &opts).unwrap();
        assert!((one.get(0, 0) - 8.0).abs() < 1e-10);
        let two = predict_embedding(&model, 2, &opts).unwrap();
        assert!((two.get(0, 0) - 16.0).abs() < 1e-10);
    }

    #[test]
    fn runaway_extrapolations_fall_back_to_the_last_value() {
        // the one-step forecast (~8.9) leaves the trusted band around the
        // observed range, so the entry drops its autoregression
        let model = single_entry_model(&[0.001, 0.01, 0.3]);
        let opts = ForecastOptions {
            order: Some(1),
            intercept: false,
            ..Default::default()
        };
        let fm = ForecastModel::fit(&model, &opts).unwrap();
        assert_eq!(fm.ar_entries(), 0);
        let got = predict_embedding(&model, 1, &opts).unwrap();
        assert!((got.get(0, 0) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn constant_series_forecasts_the_constant_at_any_horizon() {
        let model = single_entry_model(&[0.5, 0.5, 0.5]);
        for horizon in 1..4 {
            for order in [1, 2, 5] {
                let opts = ForecastOptions {
                    order: Some(order),
                    ..Default::default()
                };
                let got = predict_embedding(&model, horizon, &opts).unwrap();
                assert_eq!(got.get(0, 0), 0.5, "horizon {horizon}, order {order}");
            }
        }
    }

    #[test]
    fn mean_fallback_uses_the_series_mean() {
        let model = single_entry_model(&[1.0, 2.0, 4.0]);
        let opts = ForecastOptions {
            order: Some(2), // too long for T=3: falls back
            fallback: FallbackPolicy::Mean,
            ..Default::default()
        };
        let got = predict_embedding(&model, 1, &opts).unwrap();
        assert!((got.get(0, 0) - 7.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn forecasts_clamp_at_zero_and_feed_the_clamp_forward() {
        // exact fit x_t = x_{t-1} - 1: forecasts 1, 0 (clamped), then stays
        // at 0 - 1 -> 0 because the clamped value is what is fed back
        let model = single_entry_model(&[4.0, 3.0, 2.0]);
        let opts = ForecastOptions {
            order: Some(1),
            ..Default::default()
        };
        assert!((predict_embedding(&model, 1, &opts).unwrap().get(0, 0) - 1.0).abs() < 1e-10);
        assert_eq!(predict_embedding(&model, 2, &opts).unwrap().get(0, 0), 0.0);
        assert_eq!(predict_embedding(&model, 3, &opts).unwrap().get(0, 0), 0.0);
    }

    #[test]
    fn multi_step_equals_repeated_single_steps() {
        let model = FactorModel {
            u: vec![
                Dense::from_rows(&[vec![1.0, 0.3], vec![2.0, 0.0]]),
                Dense::from_rows(&[vec![1.5, 0.4], vec![1.8, 0.0]]),
                Dense::from_rows(&[vec![2.2, 0.5], vec![1.7, 0.0]]),
                Dense::from_rows(&[vec![3.0, 0.7], vec![1.5, 0.0]]),
                Dense::from_rows(&[vec![3.9, 0.8], vec![1.4, 0.0]]),
            ],
            v: Dense::zeros(2, 2),
            w: Dense::zeros(0, 2),
        };
        let opts = ForecastOptions::default();
        let fm = ForecastModel::fit(&model, &opts).unwrap();
        assert_eq!(fm.order(), 2);
        assert!(fm.ar_entries() > 0, "at least one series supports its AR");
        let direct = fm.predict(3).unwrap();

        // manual: iterate the public per-series recurrence step by step
        let series = build_series(&model, &opts.policy).unwrap();
        for s in series {
            let order = fm.order();
            let mut values = s.values.clone();
            for _ in 0..3 {
                let next = match fit_ar(&s.values, order, true) {
                    Some(ar) => {
                        let mut x = ar.intercept;
                        for (q, a) in ar.coeffs.iter().enumerate() {
                            x += a * values[values.len() - 1 - q];
                        }
                        x.max(0.0)
                    }
                    None => *s.values.last().unwrap(),
                };
                values.push(next);
            }
            let expect = *values.last().unwrap();
            let got = direct.get(s.row, s.col);
            assert!(
                (got - expect).abs() <= 1e-10 * expect.abs().max(1.0),
                "({}, {}): {got} vs {expect}",
                s.row,
                s.col
            );
        }
    }

    #[test]
    fn untracked_coordinates_forecast_zero() {
        let mut model = single_entry_model(&[1.0, 2.0, 4.0]);
        // second column never nonzero
        for u in model.u.iter_mut() {
            *u = Dense::from_rows(&[vec![u.get(0, 0), 0.0]]);
        }
        model.v = Dense::zeros(1, 2);
        let got = predict_embedding(&model, 1, &ForecastOptions::default()).unwrap();
        assert_eq!(got.get(0, 1), 0.0);
    }

    #[test]
    fn active_node_policy_tracks_flagged_rows_only() {
        let model = FactorModel {
            u: vec![
                Dense::from_rows(&[vec![1.0], vec![2.0], vec![0.0]]),
                Dense::from_rows(&[vec![1.0], vec![2.0], vec![0.5]]),
                Dense::from_rows(&[vec![1.0], vec![2.0], vec![0.8]]),
            ],
            v: Dense::zeros(3, 1),
            w: Dense::zeros(0, 1),
        };
        let policy = TrackPolicy::ActiveNodes(vec![true, false, true]);
        let series = build_series(&model, &policy).unwrap();
        let rows: Vec<usize> = series.iter().map(|s| s.row).collect();
        assert_eq!(rows, vec![0, 2], "only flagged nodes are tracked");
        let forecast = predict_embedding(
            &model,
            1,
            &ForecastOptions {
                policy,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(forecast.get(1, 0), 0.0, "unflagged node forecasts zero");
    }

    /// Relabels cluster ids by order of first appearance so partitions can be
    /// compared across independent clustering runs.
    fn canonical(labels: &[usize]) -> Vec<usize> {
        let mut map = std::collections::HashMap::new();
        labels
            .iter()
            .map(|&l| {
                let next = map.len();
                *map.entry(l).or_insert(next)
            })
            .collect()
    }

    #[test]
    fn static_model_prediction_matches_detection_at_last_snapshot() {
        // embeddings never move, so the forecast equals U_T and the predicted
        // partition must match what detection reports at T
        let u = Dense::from_rows(&[
            vec![5.0, 0.0],
            vec![5.1, 0.0],
            vec![4.9, 0.1],
            vec![0.0, 7.0],
            vec![0.1, 7.1],
            vec![0.0, 6.9],
        ]);
        let model = FactorModel {
            u: vec![u.clone(), u.clone(), u],
            v: Dense::zeros(6, 2),
            w: Dense::zeros(0, 2),
        };
        let predicted = predict_communities(&model, 1, &ForecastOptions::default(), 2, 7).unwrap();
        let detected = detect_communities(&model, 2, 7).unwrap();
        assert_eq!(
            canonical(&predicted.labels[0]),
            canonical(&detected.labels[2])
        );
    }
}
