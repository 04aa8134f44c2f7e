//! Synthetic dynamic attributed networks with planted, drifting communities.
//!
//! Nodes start in near-equal contiguous groups. Each later snapshot lets a
//! small capped fraction of nodes switch groups. Edges are drawn one at a
//! time: a coin with the configured intra-group bias picks the edge type
//! first, so the realized intra fraction is an unbiased estimate of the
//! configured one. An intra edge picks a uniform group and a distinct uniform
//! pair inside it; an inter edge picks two distinct uniform groups and one
//! uniform endpoint in each. Content gives every node a fixed token budget
//! spent mostly on its own group's word block, with occasional crossover into
//! another group's block.

use std::collections::HashMap;
use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mat::Sparse;
use crate::network::TemporalNetwork;

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub nodes: usize,
    /// Distinct undirected edges per snapshot.
    pub edges_per_snapshot: usize,
    pub groups: usize,
    pub timestamps: usize,
    /// Probability that an edge connects two nodes of the same group.
    pub intra_fraction: f64,
    /// Vocabulary owned by each group; total terms = `groups * words_per_group`.
    pub words_per_group: usize,
    /// Tokens each node emits per snapshot.
    pub tokens_per_node: usize,
    /// Probability a token lands in another group's word block.
    pub word_crossover: f64,
    /// Per-node probability of switching groups between snapshots.
    pub transition_prob: f64,
    /// At most `floor(fraction * nodes)` nodes switch per transition.
    pub max_transition_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            nodes: 500,
            edges_per_snapshot: 2000,
            groups: 5,
            timestamps: 3,
            intra_fraction: 0.75,
            words_per_group: 5,
            tokens_per_node: 20,
            word_crossover: 0.1,
            transition_prob: 0.05,
            max_transition_fraction: 0.10,
            seed: 42,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 2 {
            return Err(Error::InvalidInput("need at least two nodes".into()));
        }
        if self.groups == 0 || self.groups > self.nodes {
            return Err(Error::InvalidInput(format!(
                "group count {} must be in 1..={}",
                self.groups, self.nodes
            )));
        }
        if self.timestamps == 0 {
            return Err(Error::InvalidInput("need at least one snapshot".into()));
        }
        let all_pairs = self.nodes * (self.nodes - 1) / 2;
        if self.edges_per_snapshot > all_pairs {
            return Err(Error::InvalidInput(format!(
                "{} distinct edges cannot fit among {} nodes ({} pairs)",
                self.edges_per_snapshot, self.nodes, all_pairs
            )));
        }
        if self.words_per_group == 0 {
            return Err(Error::InvalidInput("words_per_group must be positive".into()));
        }
        if !(self.intra_fraction > 0.0 && self.intra_fraction <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "intra_fraction must lie in (0, 1], got {}",
                self.intra_fraction
            )));
        }
        for (name, p) in [
            ("word_crossover", self.word_crossover),
            ("transition_prob", self.transition_prob),
            ("max_transition_fraction", self.max_transition_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{name} must lie in [0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }

    pub fn term_count(&self) -> usize {
        self.groups * self.words_per_group
    }
}

/// A generated network together with its planted per-snapshot memberships.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub network: TemporalNetwork,
    /// `labels[t][i]` is node `i`'s group at snapshot `t`.
    pub labels: Vec<Vec<usize>>,
}

/// Near-equal split: the first `nodes % groups` groups get one extra node.
fn initial_membership(nodes: usize, groups: usize) -> Vec<usize> {
    let base = nodes / groups;
    let extra = nodes % groups;
    let mut membership = Vec::with_capacity(nodes);
    for g in 0..groups {
        let size = base + usize::from(g < extra);
        membership.extend(std::iter::repeat(g).take(size));
    }
    membership
}

fn members_by_group(membership: &[usize], groups: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); groups];
    for (i, &g) in membership.iter().enumerate() {
        members[g].push(i);
    }
    members
}

fn intra_pair_count(members: &[Vec<usize>]) -> usize {
    members.iter().map(|m| m.len() * (m.len() - 1) / 2).sum()
}

/// Moves each node with the transition probability, but never more than the
/// cap; excess candidates are thinned by a partial shuffle.
fn advance_membership(membership: &mut [usize], cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) {
    if cfg.groups == 1 {
        return;
    }
    let cap = (cfg.max_transition_fraction * membership.len() as f64).floor() as usize;
    if cap == 0 || cfg.transition_prob == 0.0 {
        return;
    }
    let mut candidates: Vec<usize> = (0..membership.len())
        .filter(|_| rng.gen_bool(cfg.transition_prob))
        .collect();
    let movers = cap.min(candidates.len());
    for idx in 0..movers {
        let j = rng.gen_range(idx..candidates.len());
        candidates.swap(idx, j);
    }
    for &i in &candidates[..movers] {
        let offset = rng.gen_range(1..cfg.groups);
        membership[i] = (membership[i] + offset) % cfg.groups;
    }
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Draws one unused pair of the requested type, first by rejection and, when
/// the pool is nearly spent, by enumerating what is left. Intra pairs come
/// from a uniform group with at least two members; inter pairs join two
/// distinct uniform non-empty groups.
fn sample_pair(
    intra: bool,
    membership: &[usize],
    members: &[Vec<usize>],
    used: &HashSet<(usize, usize)>,
    rng: &mut ChaCha8Rng,
) -> (usize, usize) {
    let n = membership.len();
    let eligible: Vec<usize> = members
        .iter()
        .enumerate()
        .filter(|(_, m)| m.len() >= if intra { 2 } else { 1 })
        .map(|(g, _)| g)
        .collect();
    if (intra && !eligible.is_empty()) || (!intra && eligible.len() >= 2) {
        for _ in 0..1000 {
            let pair = if intra {
                let group = &members[eligible[rng.gen_range(0..eligible.len())]];
                let i = group[rng.gen_range(0..group.len())];
                let j = loop {
                    let j = group[rng.gen_range(0..group.len())];
                    if j != i {
                        break j;
                    }
                };
                ordered(i, j)
            } else {
                let a = eligible[rng.gen_range(0..eligible.len())];
                let b = loop {
                    let b = eligible[rng.gen_range(0..eligible.len())];
                    if b != a {
                        break b;
                    }
                };
                let i = members[a][rng.gen_range(0..members[a].len())];
                let j = members[b][rng.gen_range(0..members[b].len())];
                ordered(i, j)
            };
            if !used.contains(&pair) {
                return pair;
            }
        }
    }
    // the pool is almost exhausted; fall back to an exact draw
    let remaining: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| (membership[i] == membership[j]) == intra && !used.contains(&(i, j)))
        .collect();
    remaining[rng.gen_range(0..remaining.len())]
}

fn build_adjacency(
    cfg: &SyntheticConfig,
    membership: &[usize],
    members: &[Vec<usize>],
    rng: &mut ChaCha8Rng,
) -> Result<Sparse> {
    let n = cfg.nodes;
    let intra_total = intra_pair_count(members);
    let inter_total = n * (n - 1) / 2 - intra_total;
    let mut used: HashSet<(usize, usize)> = HashSet::with_capacity(cfg.edges_per_snapshot);
    let mut used_intra = 0usize;
    let mut triplets = Vec::with_capacity(2 * cfg.edges_per_snapshot);
    for _ in 0..cfg.edges_per_snapshot {
        let mut intra = rng.gen_bool(cfg.intra_fraction);
        // flip only when the requested pool is spent
        if intra && used_intra == intra_total {
            intra = false;
        } else if !intra && (used.len() - used_intra) == inter_total {
            intra = true;
        }
        let (i, j) = sample_pair(intra, membership, members, &used, rng);
        used.insert((i, j));
        used_intra += usize::from(membership[i] == membership[j]);
        triplets.push((i, j, 1.0));
        triplets.push((j, i, 1.0));
    }
    Sparse::from_triplets(n, n, triplets)
}

fn build_content(
    cfg: &SyntheticConfig,
    membership: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<Sparse> {
    let mut counts: HashMap<(usize, usize), f64> = HashMap::new();
    for (i, &group) in membership.iter().enumerate() {
        for _ in 0..cfg.tokens_per_node {
            let block = if cfg.groups > 1 && rng.gen_bool(cfg.word_crossover) {
                (group + rng.gen_range(1..cfg.groups)) % cfg.groups
            } else {
                group
            };
            let word = block * cfg.words_per_group + rng.gen_range(0..cfg.words_per_group);
            *counts.entry((i, word)).or_insert(0.0) += 1.0;
        }
    }
    let triplets: Vec<(usize, usize, f64)> =
        counts.into_iter().map(|((i, w), c)| (i, w, c)).collect();
    Sparse::from_triplets(cfg.nodes, cfg.term_count(), triplets)
}

/// Generates the full snapshot sequence. Deterministic for a fixed config.
pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut membership = initial_membership(cfg.nodes, cfg.groups);
    let mut adjacency = Vec::with_capacity(cfg.timestamps);
    let mut content = Vec::with_capacity(cfg.timestamps);
    let mut labels = Vec::with_capacity(cfg.timestamps);
    for t in 0..cfg.timestamps {
        if t > 0 {
            advance_membership(&mut membership, cfg, &mut rng);
        }
        let members = members_by_group(&membership, cfg.groups);
        adjacency.push(build_adjacency(cfg, &membership, &members, &mut rng)?);
        content.push(build_content(cfg, &membership, &mut rng)?);
        labels.push(membership.clone());
    }
    let network = TemporalNetwork::new(adjacency, content, false)?;
    Ok(SyntheticData { network, labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> SyntheticConfig {
        SyntheticConfig {
            nodes: 60,
            edges_per_snapshot: 180,
            groups: 3,
            timestamps: 4,
            words_per_group: 5,
            tokens_per_node: 10,
            seed: 9,
            ..Default::default()
        }
    }

    #[test]
    fn snapshots_carry_the_exact_edge_budget() {
        let data = generate(&small_config()).unwrap();
        for t in 0..4 {
            let adj = data.network.adjacency(t);
            assert_eq!(adj.nnz(), 2 * 180, "symmetric storage, snapshot {t}");
            assert_eq!(adj.diagonal_nnz(), 0, "no self-loops, snapshot {t}");
        }
        assert!(!data.network.directed());
    }

    #[test]
    fn default_config_is_feasible_and_labels_stay_in_range() {
        let cfg = SyntheticConfig::default();
        let data = generate(&cfg).unwrap();
        assert_eq!(data.network.node_count(), 500);
        assert_eq!(data.network.term_count(), 25);
        assert_eq!(data.labels.len(), 3);
        for labels in &data.labels {
            assert!(labels.iter().all(|&g| g < cfg.groups));
        }
    }

    #[test]
    fn initial_groups_are_contiguous_and_near_equal() {
        let membership = initial_membership(11, 3);
        assert_eq!(membership, vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2]);
    }

    #[test]
    fn realized_intra_fraction_tracks_the_configured_bias() {
        let cfg = SyntheticConfig {
            seed: 17,
            ..Default::default()
        };
        let data = generate(&cfg).unwrap();
        let m = cfg.edges_per_snapshot as f64;
        let bound = 3.0 * (cfg.intra_fraction * (1.0 - cfg.intra_fraction) / m).sqrt();
        for t in 0..cfg.timestamps {
            let labels = &data.labels[t];
            let intra = data
                .network
                .adjacency(t)
                .iter()
                .filter(|&(i, j, _)| i < j && labels[i] == labels[j])
                .count();
            let observed = intra as f64 / m;
            assert!(
                (observed - cfg.intra_fraction).abs() <= bound,
                "snapshot {t}: observed {observed}, wanted {} +- {bound}",
                cfg.intra_fraction
            );
        }
    }

    #[test]
    fn transition_cap_limits_movers_exactly() {
        // every node volunteers to move, so exactly the cap moves
        let cfg = SyntheticConfig {
            nodes: 50,
            edges_per_snapshot: 100,
            groups: 5,
            timestamps: 3,
            transition_prob: 1.0,
            max_transition_fraction: 0.1,
            seed: 3,
            ..Default::default()
        };
        let data = generate(&cfg).unwrap();
        for t in 1..3 {
            let moved = data.labels[t - 1]
                .iter()
                .zip(&data.labels[t])
                .filter(|(a, b)| a != b)
                .count();
            assert_eq!(moved, 5, "between snapshots {} and {t}", t - 1);
        }
    }

    #[test]
    fn zero_crossover_keeps_tokens_inside_the_group_block() {
        let cfg = SyntheticConfig {
            word_crossover: 0.0,
            ..small_config()
        };
        let data = generate(&cfg).unwrap();
        for t in 0..cfg.timestamps {
            for (i, word, count) in data.network.content(t).iter() {
                let group = data.labels[t][i];
                let block = group * cfg.words_per_group..(group + 1) * cfg.words_per_group;
                assert!(block.contains(&word), "node {i} used word {word} at {t}");
                assert!(count >= 1.0);
            }
        }
    }

    #[test]
    fn token_budget_is_spent_exactly() {
        let cfg = small_config();
        let data = generate(&cfg).unwrap();
        for t in 0..cfg.timestamps {
            for i in 0..cfg.nodes {
                let (_, values) = data.network.content(t).row_entries(i);
                let total: f64 = values.iter().sum();
                assert_eq!(total, cfg.tokens_per_node as f64);
            }
        }
    }

    #[test]
    fn zero_intra_fraction_is_rejected() {
        let cfg = SyntheticConfig {
            intra_fraction: 0.0,
            ..Default::default()
        };
        assert!(matches!(generate(&cfg), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn infeasible_edge_budget_is_rejected() {
        let cfg = SyntheticConfig {
            nodes: 3,
            edges_per_snapshot: 10,
            groups: 2,
            ..Default::default()
        };
        assert!(matches!(generate(&cfg), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn near_complete_graphs_still_generate() {
        // 10 nodes, 45 possible pairs, ask for 44: exercises the enumeration
        // fallback once rejection starts thrashing
        let cfg = SyntheticConfig {
            nodes: 10,
            edges_per_snapshot: 44,
            groups: 2,
            timestamps: 2,
            words_per_group: 3,
            tokens_per_node: 4,
            ..Default::default()
        };
        let data = generate(&cfg).unwrap();
        for t in 0..2 {
            assert_eq!(data.network.adjacency(t).nnz(), 88);
        }
    }

    #[test]
    fn same_seed_reproduces_the_dataset() {
        let cfg = small_config();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.labels, b.labels);
        for t in 0..cfg.timestamps {
            let ea: Vec<_> = a.network.adjacency(t).iter().collect();
            let eb: Vec<_> = b.network.adjacency(t).iter().collect();
            assert_eq!(ea, eb);
            let ca: Vec<_> = a.network.content(t).iter().collect();
            let cb: Vec<_> = b.network.content(t).iter().collect();
            assert_eq!(ca, cb);
        }
    }

    /// Held-out-snapshot evaluation depends on this: generating fewer
    /// timestamps from the same config yields a prefix of the longer run.
    #[test]
    fn longer_histories_extend_shorter_ones() {
        let cfg = SyntheticConfig {
            nodes: 60,
            edges_per_snapshot: 180,
            groups: 4,
            timestamps: 4,
            seed: 9,
            ..Default::default()
        };
        let long = generate(&cfg).unwrap();
        let short = generate(&SyntheticConfig {
            timestamps: 2,
            ..cfg
        })
        .unwrap();
        for t in 0..2 {
            assert_eq!(short.network.adjacency(t), long.network.adjacency(t));
            assert_eq!(short.network.content(t), long.network.content(t));
            assert_eq!(short.labels[t], long.labels[t]);
        }
    }
}
