//! Community detection on the per-snapshot embeddings.
//!
//! Embeddings of all snapshots are stacked into one point set and clustered
//! jointly, so cluster ids are directly comparable across snapshots and the
//! same node can move between communities over time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::factorization::FactorModel;
use crate::mat::Dense;
use crate::util::derive_seed;

/// Squared euclidean distance between two equal-length points.
#[inline]
fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// All snapshot embeddings as one `(n * T) x k` point set.
///
/// Row `t * n + i` holds the embedding of node `i` at snapshot `t`.
#[derive(Debug, Clone)]
pub struct StackedEmbeddings {
    points: Dense,
    node_count: usize,
    timestamps: usize,
}

impl StackedEmbeddings {
    pub fn points(&self) -> &Dense {
        &self.points
    }

    pub fn into_points(self) -> Dense {
        self.points
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn timestamps(&self) -> usize {
        self.timestamps
    }

    /// Stacked row index of node `i` at snapshot `t`.
    pub fn row_of(&self, t: usize, i: usize) -> usize {
        debug_assert!(t < self.timestamps && i < self.node_count);
        t * self.node_count + i
    }

    /// Inverse of [`row_of`](Self::row_of): `(snapshot, node)` of a stacked row.
    pub fn source_of(&self, row: usize) -> (usize, usize) {
        (row / self.node_count, row % self.node_count)
    }
}

/// Stacks `U_1..U_T` into one point set for joint clustering.
pub fn stack_embeddings(model: &FactorModel) -> StackedEmbeddings {
    let n = model.node_count();
    let k = model.rank();
    let t_count = model.timestamps();
    let mut points = Dense::zeros(n * t_count, k);
    for (t, u) in model.u.iter().enumerate() {
        for i in 0..n {
            points.row_mut(t * n + i).copy_from_slice(u.row(i));
        }
    }
    StackedEmbeddings {
        points,
        node_count: n,
        timestamps: t_count,
    }
}

#[derive(Debug, Clone)]
pub struct KmeansResult {
    /// Cluster id per point, in `0..cluster_count`.
    pub labels: Vec<usize>,
    /// One centroid per cluster, `c x k`.
    pub centroids: Dense,
    /// Sum of squared distances of each point to its assigned centroid.
    pub inertia: f64,
}

/// Distance-weighted seeding: the first centroid is uniform, each further
/// centroid is an existing point drawn with probability proportional to its
/// squared distance from the nearest centroid chosen so far.
///
/// Returns the chosen point indices alongside the centroid matrix; the index
/// trace is what seeding determinism tests pin down.
fn seed_centroids(points: &Dense, c: usize, rng: &mut ChaCha8Rng) -> (Dense, Vec<usize>) {
    let m = points.rows();
    let mut chosen = Vec::with_capacity(c);
    let first = rng.gen_range(0..m);
    chosen.push(first);
    let mut d2: Vec<f64> = (0..m)
        .map(|i| dist_sq(points.row(i), points.row(first)))
        .collect();
    while chosen.len() < c {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let r = rng.gen::<f64>() * total;
            let mut cum = 0.0;
            let mut pick = m - 1;
            for (i, &w) in d2.iter().enumerate() {
                cum += w;
                if r < cum {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // all remaining mass is zero (duplicate points): uniform draw
            rng.gen_range(0..m)
        };
        chosen.push(next);
        for (i, w) in d2.iter_mut().enumerate() {
            *w = w.min(dist_sq(points.row(i), points.row(next)));
        }
    }
    let mut centroids = Dense::zeros(c, points.cols());
    for (slot, &idx) in chosen.iter().enumerate() {
        centroids.row_mut(slot).copy_from_slice(points.row(idx));
    }
    (centroids, chosen)
}

/// One seeded Lloyd run. Also returns the inertia measured after every
/// assignment phase, which is non-increasing over the run.
fn lloyd(points: &Dense, c: usize, seed: u64, max_iters: usize) -> (KmeansResult, Vec<f64>) {
    let m = points.rows();
    let k = points.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut centroids, _) = seed_centroids(points, c, &mut rng);
    let mut labels: Vec<usize> = vec![usize::MAX; m];
    let mut inertia_trace = Vec::new();

    for _ in 0..max_iters {
        // assignment: nearest centroid, ties to the lowest cluster id
        let mut new_labels = Vec::with_capacity(m);
        for i in 0..m {
            let p = points.row(i);
            let mut best = 0usize;
            let mut best_d = dist_sq(p, centroids.row(0));
            for cl in 1..c {
                let d = dist_sq(p, centroids.row(cl));
                if d < best_d {
                    best_d = d;
                    best = cl;
                }
            }
            new_labels.push(best);
        }

        // any cluster left empty is re-seeded with the point farthest from
        // its currently assigned centroid (never emptying another cluster)
        let mut counts = vec![0usize; c];
        for &l in &new_labels {
            counts[l] += 1;
        }
        for empty in 0..c {
            if counts[empty] > 0 {
                continue;
            }
            let mut far: Option<(usize, f64)> = None;
            for i in 0..m {
                if counts[new_labels[i]] <= 1 {
                    continue;
                }
                let d = dist_sq(points.row(i), centroids.row(new_labels[i]));
                if far.map_or(true, |(_, fd)| d > fd) {
                    far = Some((i, d));
                }
            }
            if let Some((i, _)) = far {
                counts[new_labels[i]] -= 1;
                new_labels[i] = empty;
                counts[empty] = 1;
                centroids.row_mut(empty).copy_from_slice(points.row(i));
            }
        }

        inertia_trace.push(
            (0..m)
                .map(|i| dist_sq(points.row(i), centroids.row(new_labels[i])))
                .sum(),
        );

        let converged = new_labels == labels;
        labels = new_labels;
        if converged {
            break;
        }

        // update: centroids move to the mean of their members
        let mut sums = Dense::zeros(c, k);
        let mut sizes = vec![0usize; c];
        for i in 0..m {
            crate::mat::axpy(sums.row_mut(labels[i]), 1.0, points.row(i));
            sizes[labels[i]] += 1;
        }
        for cl in 0..c {
            if sizes[cl] > 0 {
                let inv = 1.0 / sizes[cl] as f64;
                for v in sums.row_mut(cl).iter_mut() {
                    *v *= inv;
                }
                centroids.row_mut(cl).copy_from_slice(sums.row(cl));
            }
        }
    }

    let inertia = (0..m)
        .map(|i| dist_sq(points.row(i), centroids.row(labels[i])))
        .sum();
    (
        KmeansResult {
            labels,
            centroids,
            inertia,
        },
        inertia_trace,
    )
}

/// Lloyd's algorithm with distance-weighted seeding and seeded restarts.
///
/// Runs `restarts` independent seeded attempts and keeps the lowest-inertia
/// result; on ties the earliest restart wins. Errors when there are fewer
/// points than clusters.
pub fn kmeans(
    points: &Dense,
    c: usize,
    seed: u64,
    restarts: usize,
    max_iters: usize,
) -> Result<KmeansResult> {
    if c == 0 {
        return Err(Error::InvalidInput("cluster count must be at least 1".into()));
    }
    if points.rows() < c {
        return Err(Error::InvalidInput(format!(
            "cannot split {} points into {c} clusters",
            points.rows()
        )));
    }
    if restarts == 0 || max_iters == 0 {
        return Err(Error::InvalidInput(
            "restarts and max_iters must be at least 1".into(),
        ));
    }
    let runs: Vec<KmeansResult> = (0..restarts)
        .into_par_iter()
        .map(|r| lloyd(points, c, derive_seed(seed, r as u64), max_iters).0)
        .collect();
    let mut best = None;
    for run in runs {
        let better = match &best {
            None => true,
            Some(KmeansResult { inertia, .. }) => run.inertia < *inertia,
        };
        if better {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}

/// Options for [`detect_communities_with`].
#[derive(Debug, Clone)]
pub struct DetectOptions {
    pub restarts: usize,
    pub max_iters: usize,
    /// Scale each stacked embedding row to unit length before clustering
    /// (zero rows are left alone). Off by default.
    pub normalize_rows: bool,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            restarts: 10,
            max_iters: 300,
            normalize_rows: false,
        }
    }
}

/// Communities of every node at every snapshot, under one shared cluster id
/// space.
#[derive(Debug, Clone)]
pub struct CommunityAssignment {
    /// `labels[t][i]` is the community of node `i` at snapshot `t`. A cluster
    /// id may be absent from some snapshots.
    pub labels: Vec<Vec<usize>>,
    /// Centroids in embedding space, `c x k`.
    pub centroids: Dense,
    pub cluster_count: usize,
    /// Inertia of the underlying joint clustering.
    pub inertia: f64,
}

/// Clusters the stacked embeddings into `c` communities and splits the joint
/// labels back out per snapshot.
pub fn detect_communities(model: &FactorModel, c: usize, seed: u64) -> Result<CommunityAssignment> {
    detect_communities_with(model, c, seed, &DetectOptions::default())
}

pub fn detect_communities_with(
    model: &FactorModel,
    c: usize,
    seed: u64,
    opts: &DetectOptions,
) -> Result<CommunityAssignment> {
    let stacked = stack_embeddings(model);
    let n = stacked.node_count();
    let t_count = stacked.timestamps();
    let mut points = stacked.into_points();
    if opts.normalize_rows {
        normalize_rows(&mut points);
    }
    let km = kmeans(&points, c, seed, opts.restarts, opts.max_iters)?;
    let labels = (0..t_count)
        .map(|t| km.labels[t * n..(t + 1) * n].to_vec())
        .collect();
    Ok(CommunityAssignment {
        labels,
        centroids: km.centroids,
        cluster_count: c,
        inertia: km.inertia,
    })
}

fn normalize_rows(points: &mut Dense) {
    for i in 0..points.rows() {
        let norm = dist_sq(points.row(i), &vec![0.0; points.cols()]).sqrt();
        if norm > 0.0 {
            for v in points.row_mut(i).iter_mut() {
                *v /= norm;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points_1d(xs: &[f64]) -> Dense {
        Dense::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>())
    }

    #[test]
    fn separated_groups_are_recovered() {
        let pts = points_1d(&[0.0, 0.1, 0.2, 10.0, 10.1]);
        let km = kmeans(&pts, 2, 0, 10, 100).unwrap();
        assert_eq!(km.labels[0], km.labels[1]);
        assert_eq!(km.labels[1], km.labels[2]);
        assert_eq!(km.labels[3], km.labels[4]);
        assert_ne!(km.labels[0], km.labels[3]);
    }

    /// Exhaustive best 2-partition of a point set by inertia.
    fn best_two_partition_inertia(pts: &Dense) -> f64 {
        let m = pts.rows();
        let k = pts.cols();
        let mut best = f64::INFINITY;
        // non-empty subsets containing point 0 (fixing 0 halves the search
        // and loses nothing: partitions are unordered)
        for mask in 0..(1u32 << (m - 1)) {
            let side = |i: usize| -> bool {
                if i == 0 {
                    true
                } else {
                    mask & (1 << (i - 1)) != 0
                }
            };
            if (1..m).all(side) {
                continue; // second side empty
            }
            let mut inertia = 0.0;
            for group in [true, false] {
                let members: Vec<usize> = (0..m).filter(|&i| side(i) == group).collect();
                let mut mean = vec![0.0; k];
                for &i in &members {
                    for q in 0..k {
                        mean[q] += pts.get(i, q);
                    }
                }
                for v in mean.iter_mut() {
                    *v /= members.len() as f64;
                }
                for &i in &members {
                    inertia += dist_sq(pts.row(i), &mean);
                }
            }
            best = best.min(inertia);
        }
        best
    }

    #[test]
    fn ten_point_inertia_matches_exhaustive_search() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..5 {
            let pts = Dense::random_uniform(10, 2, &mut rng);
            let oracle = best_two_partition_inertia(&pts);
            let km = kmeans(&pts, 2, 99, 30, 200).unwrap();
            assert!(
                (km.inertia - oracle).abs() <= 1e-9 * oracle.max(1.0),
                "kmeans inertia {} vs exhaustive optimum {oracle}",
                km.inertia
            );
        }
    }

    #[test]
    fn inertia_never_increases_within_a_run() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for seed in 0..10 {
            let pts = Dense::random_uniform(60, 3, &mut rng);
            let (_, trace) = lloyd(&pts, 4, seed, 100);
            for w in trace.windows(2) {
                assert!(
                    w[1] <= w[0] * (1.0 + 1e-12),
                    "inertia increased: {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let pts = points_1d(&[1.0, 1.0, 1.0, 1.0]);
        let km = kmeans(&pts, 2, 3, 5, 50).unwrap();
        assert_eq!(km.inertia, 0.0);
        let mut counts = [0usize; 2];
        for &l in &km.labels {
            counts[l] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0), "empty cluster survived: {counts:?}");
    }

    #[test]
    fn more_clusters_than_points_is_an_error() {
        let pts = points_1d(&[1.0, 2.0]);
        assert!(kmeans(&pts, 3, 0, 5, 50).is_err());
    }

    #[test]
    fn one_cluster_degenerates_to_the_mean() {
        let values = [0.0, 1.0, 2.0, 7.0];
        let pts = points_1d(&values);
        let km = kmeans(&pts, 1, 12, 3, 50).unwrap();
        assert!(km.labels.iter().all(|&l| l == 0));
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert!((km.centroids.get(0, 0) - mean).abs() < 1e-12);
        let variance_sum: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        assert!((km.inertia - variance_sum).abs() < 1e-12, "{}", km.inertia);
    }

    #[test]
    fn scaling_by_power_of_two_keeps_partition_and_scales_inertia() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let pts = Dense::random_uniform(30, 2, &mut rng);
        let s = 4.0f64;
        let scaled = Dense::from_fn(30, 2, |i, j| s * pts.get(i, j));

        // identical seeding decisions first: distance mass scales by an exact
        // power of two, so every weighted draw picks the same index
        let mut r1 = ChaCha8Rng::seed_from_u64(11);
        let mut r2 = ChaCha8Rng::seed_from_u64(11);
        let (_, trace1) = seed_centroids(&pts, 3, &mut r1);
        let (_, trace2) = seed_centroids(&scaled, 3, &mut r2);
        assert_eq!(trace1, trace2, "seeding choices must not depend on scale");

        let a = kmeans(&pts, 3, 5, 8, 100).unwrap();
        let b = kmeans(&scaled, 3, 5, 8, 100).unwrap();
        assert_eq!(a.labels, b.labels);
        let expect = s * s * a.inertia;
        assert!((b.inertia - expect).abs() <= 1e-12 * expect.max(1.0));
    }

    fn toy_model() -> FactorModel {
        // two snapshots, three nodes, rank 2; node 2 moves between snapshots
        FactorModel {
            u: vec![
                Dense::from_rows(&[vec![1.0, 0.0], vec![1.1, 0.0], vec![0.0, 1.0]]),
                Dense::from_rows(&[vec![1.0, 0.1], vec![0.1, 1.0], vec![0.0, 1.1]]),
            ],
            v: Dense::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]),
            w: Dense::from_rows(&[vec![0.2, 0.8]]),
        }
    }

    #[test]
    fn stacked_rows_map_back_to_nodes_and_snapshots() {
        let model = toy_model();
        let st = stack_embeddings(&model);
        assert_eq!(st.points().shape(), (6, 2));
        for t in 0..2 {
            for i in 0..3 {
                let row = st.row_of(t, i);
                assert_eq!(st.source_of(row), (t, i));
                assert_eq!(st.points().row(row), model.u[t].row(i));
            }
        }
    }

    #[test]
    fn per_snapshot_labels_are_the_joint_labels_redistributed() {
        let model = toy_model();
        let c = 2;
        let seed = 9;
        let asg = detect_communities(&model, c, seed).unwrap();
        let opts = DetectOptions::default();
        let joint = kmeans(stack_embeddings(&model).points(), c, seed, opts.restarts, opts.max_iters).unwrap();
        let flat: Vec<usize> = asg.labels.iter().flatten().copied().collect();
        assert_eq!(flat, joint.labels);
        assert_eq!(asg.labels.len(), 2);
        assert_eq!(asg.labels[0].len(), 3);
    }

    #[test]
    fn detection_is_deterministic_for_a_seed() {
        let model = toy_model();
        let a = detect_communities(&model, 2, 123).unwrap();
        let b = detect_communities(&model, 2, 123).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.inertia, b.inertia);
    }

    #[test]
    fn normalization_option_changes_geometry_not_contract() {
        let model = toy_model();
        let opts = DetectOptions {
            normalize_rows: true,
            ..Default::default()
        };
        let asg = detect_communities_with(&model, 2, 5, &opts).unwrap();
        assert_eq!(asg.labels.iter().map(Vec::len).sum::<usize>(), 6);
    }
}
