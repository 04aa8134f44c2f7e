//! Hyperparameter search scored by clustering quality.
//!
//! Each trial fits a model with one configuration, clusters the stacked
//! embedding rows, and scores the partition by silhouette. Trials whose fit
//! diverges or whose partition cannot be scored count as degenerate and can
//! never win. Trial configurations are generated up front in a fixed order,
//! so results do not depend on how many worker threads execute them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::communities::{detect_communities_with, stack_embeddings, DetectOptions};
use crate::error::{Error, Result};
use crate::factorization::{fit, Hyperparameters};
use crate::metrics::silhouette;
use crate::network::TemporalNetwork;

/// Candidate values per axis. The grid walks axes in declaration order with
/// `clusters` varying fastest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchSpace {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    pub rank: Vec<usize>,
    pub clusters: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            alpha: vec![0.01, 0.1],
            beta: vec![0.1, 0.25, 0.5, 0.75, 0.9],
            lambda1: vec![1e-5, 1e-6],
            lambda2: vec![1e-4, 1e-5],
            rank: vec![10, 20, 30, 40, 50],
            clusters: vec![2, 4, 8, 10, 16, 18, 32],
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let axes = [
            ("alpha", self.alpha.len()),
            ("beta", self.beta.len()),
            ("lambda1", self.lambda1.len()),
            ("lambda2", self.lambda2.len()),
            ("rank", self.rank.len()),
            ("clusters", self.clusters.len()),
        ];
        for (name, len) in axes {
            if len == 0 {
                return Err(Error::InvalidInput(format!("search axis {name} is empty")));
            }
        }
        Ok(())
    }

    pub fn grid_size(&self) -> usize {
        self.alpha.len()
            * self.beta.len()
            * self.lambda1.len()
            * self.lambda2.len()
            * self.rank.len()
            * self.clusters.len()
    }

    /// Mixed-radix decode of a grid index, clusters fastest.
    fn config_at(&self, index: usize) -> TrialConfig {
        let mut i = index;
        let pick_u = |i: &mut usize, axis: &[usize]| {
            let v = axis[*i % axis.len()];
            *i /= axis.len();
            v
        };
        let pick_f = |i: &mut usize, axis: &[f64]| {
            let v = axis[*i % axis.len()];
            *i /= axis.len();
            v
        };
        let clusters = pick_u(&mut i, &self.clusters);
        let rank = pick_u(&mut i, &self.rank);
        let lambda2 = pick_f(&mut i, &self.lambda2);
        let lambda1 = pick_f(&mut i, &self.lambda1);
        let beta = pick_f(&mut i, &self.beta);
        let alpha = pick_f(&mut i, &self.alpha);
        TrialConfig {
            alpha,
            beta,
            lambda1,
            lambda2,
            rank,
            clusters,
        }
    }

    fn sample(&self, rng: &mut impl rand::Rng) -> TrialConfig {
        TrialConfig {
            alpha: self.alpha[rng.gen_range(0..self.alpha.len())],
            beta: self.beta[rng.gen_range(0..self.beta.len())],
            lambda1: self.lambda1[rng.gen_range(0..self.lambda1.len())],
            lambda2: self.lambda2[rng.gen_range(0..self.lambda2.len())],
            rank: self.rank[rng.gen_range(0..self.rank.len())],
            clusters: self.clusters[rng.gen_range(0..self.clusters.len())],
        }
    }
}

/// One point of the search space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub rank: usize,
    pub clusters: usize,
}

impl TrialConfig {
    /// The searched knobs override `base`; everything else (iterations,
    /// tolerance, sampling ratio, seed, gradient mode) carries over.
    pub fn hyperparameters(&self, base: &Hyperparameters) -> Hyperparameters {
        Hyperparameters {
            alpha: self.alpha,
            beta: self.beta,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            rank: self.rank,
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchStrategy {
    Grid,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone)]
pub struct TuneOptions {
    pub strategy: SearchStrategy,
    /// Trial cap. Grid search runs the whole grid when `None`; random search
    /// requires an explicit budget.
    pub budget: Option<usize>,
    pub direction: Direction,
    /// Seeds random-search draws. Clustering reuses this seed on every trial
    /// so identical configurations score identically and ties resolve to the
    /// earlier trial.
    pub seed: u64,
    /// Non-searched fitting knobs.
    pub base: Hyperparameters,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions {
            strategy: SearchStrategy::Grid,
            budget: None,
            direction: Direction::Maximize,
            seed: 42,
            base: Hyperparameters::default(),
        }
    }
}

/// Outcome of one trial. `score` is `None` when the trial was degenerate;
/// `note` says why. `seconds` is wall time and is the only field that varies
/// between reruns; selection never looks at it.
#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub index: usize,
    pub config: TrialConfig,
    pub score: Option<f64>,
    pub objective: Option<f64>,
    /// Last few objective values of the fit, oldest first.
    pub trace_tail: Vec<f64>,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub best: TrialRecord,
    pub trials: Vec<TrialRecord>,
}

/// How many trailing objective values each trial keeps in its record.
const TRACE_TAIL_LEN: usize = 5;

fn run_trial(
    network: &TemporalNetwork,
    config: TrialConfig,
    index: usize,
    opts: &TuneOptions,
) -> TrialRecord {
    let start = std::time::Instant::now();
    let (score, objective, trace_tail, note) = trial_body(network, config, opts);
    TrialRecord {
        index,
        config,
        score,
        objective,
        trace_tail,
        seconds: start.elapsed().as_secs_f64(),
        note,
    }
}

type TrialBody = (Option<f64>, Option<f64>, Vec<f64>, Option<String>);

fn trial_body(network: &TemporalNetwork, config: TrialConfig, opts: &TuneOptions) -> TrialBody {
    let hp = config.hyperparameters(&opts.base);
    let outcome = match fit(network, &hp) {
        Ok(o) => o,
        Err(e) => return (None, None, Vec::new(), Some(format!("fit failed: {e}"))),
    };
    let objective = Some(outcome.final_objective());
    let tail = outcome.trace[outcome.trace.len().saturating_sub(TRACE_TAIL_LEN)..].to_vec();
    let detect = DetectOptions::default();
    let assignment =
        match detect_communities_with(&outcome.model, config.clusters, opts.seed, &detect) {
            Ok(a) => a,
            Err(e) => {
                return (None, objective, tail, Some(format!("clustering failed: {e}")));
            }
        };
    let stacked = stack_embeddings(&outcome.model);
    let joint: Vec<usize> = assignment.labels.iter().flatten().copied().collect();
    match silhouette(stacked.points(), &joint) {
        Ok(s) if s.is_finite() => (Some(s), objective, tail, None),
        Ok(s) => (None, objective, tail, Some(format!("non-finite score {s}"))),
        Err(e) => (None, objective, tail, Some(format!("scoring failed: {e}"))),
    }
}

/// Runs the search and returns the winning trial plus the full log.
/// Fails with [`Error::AllTrialsDegenerate`] when nothing scored.
pub fn tune(
    network: &TemporalNetwork,
    space: &SearchSpace,
    opts: &TuneOptions,
) -> Result<TuneOutcome> {
    space.validate()?;
    let configs: Vec<TrialConfig> = match opts.strategy {
        SearchStrategy::Grid => {
            let total = space.grid_size();
            let take = opts.budget.unwrap_or(total).min(total);
            (0..take).map(|i| space.config_at(i)).collect()
        }
        SearchStrategy::Random => {
            let budget = opts.budget.ok_or_else(|| {
                Error::InvalidInput("random search needs an explicit trial budget".into())
            })?;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
            (0..budget).map(|_| space.sample(&mut rng)).collect()
        }
    };
    if configs.is_empty() {
        return Err(Error::InvalidInput("search budget is zero".into()));
    }
    let trials: Vec<TrialRecord> = configs
        .into_par_iter()
        .enumerate()
        .map(|(index, config)| run_trial(network, config, index, opts))
        .collect();

    let better = |a: f64, b: f64| match opts.direction {
        Direction::Maximize => a > b,
        Direction::Minimize => a < b,
    };
    let mut best: Option<&TrialRecord> = None;
    for trial in &trials {
        let Some(score) = trial.score else { continue };
        match best {
            Some(b) if !better(score, b.score.unwrap()) => {}
            _ => best = Some(trial),
        }
    }
    match best {
        Some(b) => Ok(TuneOutcome {
            best: b.clone(),
            trials: trials.clone(),
        }),
        None => {
            let log = trials
                .iter()
                .map(|t| {
                    format!(
                        "trial {}: {}",
                        t.index,
                        t.note.as_deref().unwrap_or("unscored")
                    )
                })
                .collect::<Vec<_>>()
                .join("; ");
            Err(Error::AllTrialsDegenerate {
                count: trials.len(),
                log,
            })
        }
    }
}
