//! External and internal clustering quality measures.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mat::Dense;

/// A predicted clustering paired with ground-truth classes over the same
/// items. Label values are opaque ids; only the induced partitions matter.
#[derive(Debug, Clone)]
pub struct LabeledClustering {
    predicted: Vec<usize>,
    truth: Vec<usize>,
}

impl LabeledClustering {
    pub fn new(predicted: Vec<usize>, truth: Vec<usize>) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} predicted labels vs {} truth labels",
                predicted.len(),
                truth.len()
            )));
        }
        if predicted.is_empty() {
            return Err(Error::InvalidInput(
                "cannot score an empty clustering".into(),
            ));
        }
        Ok(LabeledClustering { predicted, truth })
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the constructor rejects empty inputs
    }

    /// Fraction of items whose cluster's dominant truth class they belong to:
    /// `(1/m) * sum_clusters max_class |cluster ∩ class|`. 1.0 iff every
    /// cluster is pure; at most 1.
    pub fn purity(&self) -> f64 {
        let mut per_cluster: HashMap<usize, HashMap<usize, usize>> = HashMap::new();
        for (&p, &t) in self.predicted.iter().zip(&self.truth) {
            *per_cluster.entry(p).or_default().entry(t).or_insert(0) += 1;
        }
        let dominant: usize = per_cluster
            .values()
            .map(|classes| classes.values().copied().max().unwrap_or(0))
            .sum();
        dominant as f64 / self.len() as f64
    }

    /// Pair-counting agreement: of all unordered item pairs co-clustered in
    /// either partition, the fraction co-clustered in both. 1.0 iff the
    /// partitions are identical; defined as 1.0 when both partitions are
    /// all singletons (no co-clustered pair anywhere). Needs at least two
    /// items.
    pub fn jaccard(&self) -> Result<f64> {
        if self.len() < 2 {
            return Err(Error::InvalidInput(
                "pair counting needs at least two items".into(),
            ));
        }
        let c2 = |x: usize| (x as f64) * (x as f64 - 1.0) / 2.0;
        let mut cells: HashMap<(usize, usize), usize> = HashMap::new();
        let mut pred_sizes: HashMap<usize, usize> = HashMap::new();
        let mut truth_sizes: HashMap<usize, usize> = HashMap::new();
        for (&p, &t) in self.predicted.iter().zip(&self.truth) {
            *cells.entry((p, t)).or_insert(0) += 1;
            *pred_sizes.entry(p).or_insert(0) += 1;
            *truth_sizes.entry(t).or_insert(0) += 1;
        }
        let both: f64 = cells.values().map(|&x| c2(x)).sum();
        let same_pred: f64 = pred_sizes.values().map(|&x| c2(x)).sum();
        let same_truth: f64 = truth_sizes.values().map(|&x| c2(x)).sum();
        let union = same_pred + same_truth - both;
        if union == 0.0 {
            return Ok(1.0);
        }
        Ok(both / union)
    }
}

/// Mean silhouette coefficient of a labeled point set under exact euclidean
/// distances.
///
/// For each point, `a` is its mean distance to the rest of its own cluster
/// and `b` the smallest mean distance to any other cluster; its score is
/// `(b - a) / max(a, b)`, with singletons scored 0 and `0/0` (all distances
/// zero) scored 0. Needs at least three points and at least two non-empty
/// clusters.
pub fn silhouette(points: &Dense, labels: &[usize]) -> Result<f64> {
    let m = points.rows();
    if labels.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "{m} points but {} labels",
            labels.len()
        )));
    }
    if m < 3 {
        return Err(Error::InvalidInput(
            "silhouette needs at least three points".into(),
        ));
    }
    // map arbitrary label values onto dense cluster indices
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::InvalidInput(
            "silhouette is undefined for a single cluster".into(),
        ));
    }
    let index_of = |l: usize| ids.binary_search(&l).unwrap();
    let cluster: Vec<usize> = labels.iter().map(|&l| index_of(l)).collect();
    let mut sizes = vec![0usize; ids.len()];
    for &cl in &cluster {
        sizes[cl] += 1;
    }

    let mut total = 0.0;
    let mut sums = vec![0.0f64; ids.len()];
    for i in 0..m {
        if sizes[cluster[i]] == 1 {
            continue; // singleton: contributes 0
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..m {
            if j == i {
                continue;
            }
            let d: f64 = points
                .row(i)
                .iter()
                .zip(points.row(j))
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            sums[cluster[j]] += d;
        }
        let own = cluster[i];
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..ids.len())
            .filter(|&cl| cl != own && sizes[cl] > 0)
            .map(|cl| sums[cl] / sizes[cl] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / m as f64)
}
