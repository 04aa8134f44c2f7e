//! On-disk formats: TSV dataset directories, JSON model checkpoints, label
//! files, and JSONL logs.
//!
//! A dataset directory holds a `manifest.txt` of `key=value` lines plus one
//! edge and one content file per snapshot (`edges_t1.tsv`, `content_t1.tsv`,
//! ... with 1-based names) and optional per-snapshot label files. Node, term,
//! and label ids inside the files are 0-based. Undirected networks store each
//! edge once with `src <= dst` and are symmetrized on load.
//!
//! All writers go through [`atomic_write`] (write a sibling temp file, then
//! rename), so readers never observe a half-written file. Floats are written
//! with Rust's shortest round-trip formatting, which loads back bit-exact and
//! makes every writer byte-deterministic.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorization::{FactorModel, FitOutcome, Hyperparameters};
use crate::mat::{Dense, Sparse};
use crate::network::TemporalNetwork;

pub const DATASET_FORMAT: &str = "stf.dataset";
pub const DATASET_VERSION: u32 = 1;
pub const CHECKPOINT_VERSION: u32 = 1;

/// A loaded dataset: the network plus ground-truth memberships when the
/// directory carries them.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub network: TemporalNetwork,
    pub labels: Option<Vec<Vec<usize>>>,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes `bytes` to a temp file in the target's directory, then renames it
/// over `path`, so the destination is never observed half-written.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => Path::new(".").to_path_buf(),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("{} has no file name", path.display())))?;
    let tag = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let tmp = parent.join(format!(
        ".{}.{}.{tag}.tmp",
        name.to_string_lossy(),
        std::process::id()
    ));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses `key=value` lines ('#' starts a comment, blank lines ignored).
/// Duplicate keys are rejected with their line number.
pub fn parse_key_values(path: &Path, text: &str) -> Result<HashMap<String, String>> {
    let mut map = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(format!("expected key=value, got {line:?}")))?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(parse_err("empty key".into()));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(parse_err(format!("duplicate key {key:?}")));
        }
    }
    Ok(map)
}

fn manifest_get<'a>(map: &'a HashMap<String, String>, path: &Path, key: &str) -> Result<&'a str> {
    map.get(key).map(String::as_str).ok_or_else(|| Error::Corrupt {
        path: path.display().to_string(),
        message: format!("manifest is missing key {key:?}"),
    })
}

fn manifest_parse<T: std::str::FromStr>(path: &Path, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Corrupt {
        path: path.display().to_string(),
        message: format!("manifest key {key:?} has unreadable value {value:?}"),
    })
}

fn parse_strict_bool(path: &Path, key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Corrupt {
            path: path.display().to_string(),
            message: format!("manifest key {key:?} must be true or false, got {value:?}"),
        }),
    }
}

fn edges_name(t: usize) -> String {
    format!("edges_t{}.tsv", t + 1)
}

fn content_name(t: usize) -> String {
    format!("content_t{}.tsv", t + 1)
}

fn labels_name(t: usize) -> String {
    format!("labels_t{}.tsv", t + 1)
}

fn write_matrix_tsv(path: &Path, matrix: &Sparse, upper_only: bool) -> Result<()> {
    let mut out = String::new();
    for (i, j, w) in matrix.iter() {
        if upper_only && i > j {
            continue;
        }
        out.push_str(&format!("{i}\t{j}\t{w}\n"));
    }
    atomic_write(path, out.as_bytes())
}

/// Loads a `row\tcol\tweight` file. With `mirror` every entry is inserted in
/// both orientations. Exact duplicate entries collapse; the same coordinate
/// with different weights is an error.
fn load_matrix_tsv(path: &Path, rows: usize, cols: usize, mirror: bool) -> Result<Sparse> {
    let text = read_file(path)?;
    let mut entries: HashMap<(usize, usize), f64> = HashMap::new();
    let mut insert = |coord: (usize, usize), w: f64, line: usize| -> Result<()> {
        match entries.get(&coord) {
            Some(&old) if old != w => Err(Error::Corrupt {
                path: path.display().to_string(),
                message: format!(
                    "line {line}: entry ({}, {}) already has weight {old}, now {w}",
                    coord.0, coord.1
                ),
            }),
            _ => {
                entries.insert(coord, w);
                Ok(())
            }
        }
    };
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = idx + 1;
        let parse_err = |message: String| Error::Parse {
            path: path.display().to_string(),
            line: lineno,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(format!(
                "expected 3 tab-separated fields, got {}",
                fields.len()
            )));
        }
        let r: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(format!("bad row id {:?}", fields[0])))?;
        let c: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(format!("bad column id {:?}", fields[1])))?;
        let w: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(format!("bad weight {:?}", fields[2])))?;
        if !w.is_finite() {
            return Err(parse_err(format!("weight {w} is not finite")));
        }
        if r >= rows || c >= cols {
            return Err(parse_err(format!(
                "entry ({r}, {c}) outside the declared {rows}x{cols} shape"
            )));
        }
        insert((r, c), w, lineno)?;
        if mirror {
            insert((c, r), w, lineno)?;
        }
    }
    let triplets: Vec<(usize, usize, f64)> =
        entries.into_iter().map(|((r, c), w)| (r, c, w)).collect();
    Sparse::from_triplets(rows, cols, triplets)
}

fn write_labels_file(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::new();
    for (i, l) in labels.iter().enumerate() {
        out.push_str(&format!("{i}\t{l}\n"));
    }
    atomic_write(path, out.as_bytes())
}

/// Loads one `node\tlabel` file; every node must be labeled exactly once.
pub fn load_labels_file(path: &Path, nodes: usize) -> Result<Vec<usize>> {
    let text = read_file(path)?;
    let mut labels: Vec<Option<usize>> = vec![None; nodes];
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            message,
        };
        let (node, label) = line
            .split_once('\t')
            .ok_or_else(|| parse_err("expected node\\tlabel".into()))?;
        let node: usize = node
            .parse()
            .map_err(|_| parse_err(format!("bad node id {node:?}")))?;
        let label: usize = label
            .parse()
            .map_err(|_| parse_err(format!("bad label {label:?}")))?;
        if node >= nodes {
            return Err(parse_err(format!("node {node} outside 0..{nodes}")));
        }
        if labels[node].is_some() {
            return Err(parse_err(format!("node {node} labeled twice")));
        }
        labels[node] = Some(label);
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            l.ok_or_else(|| Error::Corrupt {
                path: path.display().to_string(),
                message: format!("node {i} has no label"),
            })
        })
        .collect()
}

/// Writes `labels_t{t}.tsv` files (1-based names) into `dir`.
pub fn save_labels_dir(dir: &Path, labels: &[Vec<usize>]) -> Result<()> {
    save_labels_dir_from(dir, 1, labels)
}

/// Like [`save_labels_dir`], but numbers the files from `first_timestamp`
/// (1-based); forecasts use this to name files by absolute timestamp.
pub fn save_labels_dir_from(dir: &Path, first_timestamp: usize, labels: &[Vec<usize>]) -> Result<()> {
    if first_timestamp == 0 {
        return Err(Error::InvalidInput("label timestamps are 1-based".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (t, per_node) in labels.iter().enumerate() {
        write_labels_file(&dir.join(labels_name(first_timestamp - 1 + t)), per_node)?;
    }
    Ok(())
}

/// Writes a dense matrix as one tab-separated row per line, full precision.
pub fn write_dense_tsv(path: &Path, matrix: &Dense) -> Result<()> {
    let mut out = String::new();
    for i in 0..matrix.rows() {
        for (j, v) in matrix.row(i).iter().enumerate() {
            if j > 0 {
                out.push('\t');
            }
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

pub fn load_labels_dir(dir: &Path, nodes: usize, timestamps: usize) -> Result<Vec<Vec<usize>>> {
    (0..timestamps)
        .map(|t| load_labels_file(&dir.join(labels_name(t)), nodes))
        .collect()
}

pub fn save_dataset(
    dir: &Path,
    network: &TemporalNetwork,
    labels: Option<&[Vec<usize>]>,
) -> Result<()> {
    if let Some(ls) = labels {
        if ls.len() != network.timestamps() {
            return Err(Error::ShapeMismatch(format!(
                "{} label snapshots for {} network snapshots",
                ls.len(),
                network.timestamps()
            )));
        }
        if let Some(bad) = ls.iter().find(|l| l.len() != network.node_count()) {
            return Err(Error::ShapeMismatch(format!(
                "label snapshot covers {} nodes, network has {}",
                bad.len(),
                network.node_count()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = format!(
        "format={DATASET_FORMAT}\nversion={DATASET_VERSION}\nnodes={}\nterms={}\ntimestamps={}\ndirected={}\nlabels={}\n",
        network.node_count(),
        network.term_count(),
        network.timestamps(),
        network.directed(),
        labels.is_some(),
    );
    atomic_write(&dir.join("manifest.txt"), manifest.as_bytes())?;
    for t in 0..network.timestamps() {
        write_matrix_tsv(
            &dir.join(edges_name(t)),
            network.adjacency(t),
            !network.directed(),
        )?;
        write_matrix_tsv(&dir.join(content_name(t)), network.content(t), false)?;
        if let Some(ls) = labels {
            write_labels_file(&dir.join(labels_name(t)), &ls[t])?;
        }
    }
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join("manifest.txt");
    let map = parse_key_values(&manifest_path, &read_file(&manifest_path)?)?;
    let format = manifest_get(&map, &manifest_path, "format")?;
    if format != DATASET_FORMAT {
        return Err(Error::Corrupt {
            path: manifest_path.display().to_string(),
            message: format!("unknown format {format:?}, expected {DATASET_FORMAT:?}"),
        });
    }
    let version: u32 = manifest_parse(
        &manifest_path,
        "version",
        manifest_get(&map, &manifest_path, "version")?,
    )?;
    if version != DATASET_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: DATASET_VERSION,
        });
    }
    let nodes: usize =
        manifest_parse(&manifest_path, "nodes", manifest_get(&map, &manifest_path, "nodes")?)?;
    let terms: usize =
        manifest_parse(&manifest_path, "terms", manifest_get(&map, &manifest_path, "terms")?)?;
    let timestamps: usize = manifest_parse(
        &manifest_path,
        "timestamps",
        manifest_get(&map, &manifest_path, "timestamps")?,
    )?;
    let directed = parse_strict_bool(
        &manifest_path,
        "directed",
        manifest_get(&map, &manifest_path, "directed")?,
    )?;
    let has_labels = parse_strict_bool(
        &manifest_path,
        "labels",
        manifest_get(&map, &manifest_path, "labels")?,
    )?;
    let mut adjacency = Vec::with_capacity(timestamps);
    let mut content = Vec::with_capacity(timestamps);
    for t in 0..timestamps {
        adjacency.push(load_matrix_tsv(
            &dir.join(edges_name(t)),
            nodes,
            nodes,
            !directed,
        )?);
        content.push(load_matrix_tsv(&dir.join(content_name(t)), nodes, terms, false)?);
    }
    let labels = if has_labels {
        Some(load_labels_dir(dir, nodes, timestamps)?)
    } else {
        None
    };
    let network = TemporalNetwork::new(adjacency, content, directed)?;
    Ok(Dataset { network, labels })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointShapes {
    pub nodes: usize,
    pub terms: usize,
    pub timestamps: usize,
    pub rank: usize,
}

/// A fitted model with enough context to reproduce or resume the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub hyperparameters: Hyperparameters,
    /// Seed the evaluation mask was drawn with (derived, recorded for audit).
    pub mask_seed: u64,
    pub shapes: CheckpointShapes,
    pub u: Vec<Dense>,
    pub v: Dense,
    pub w: Dense,
    pub final_objective: f64,
    pub iterations: usize,
}

impl Checkpoint {
    pub fn from_outcome(outcome: &FitOutcome, hp: &Hyperparameters) -> Checkpoint {
        let model = &outcome.model;
        Checkpoint {
            version: CHECKPOINT_VERSION,
            hyperparameters: hp.clone(),
            mask_seed: outcome.mask_seed,
            shapes: CheckpointShapes {
                nodes: model.node_count(),
                terms: model.term_count(),
                timestamps: model.timestamps(),
                rank: model.rank(),
            },
            u: model.u.clone(),
            v: model.v.clone(),
            w: model.w.clone(),
            final_objective: outcome.final_objective(),
            iterations: outcome.iterations,
        }
    }

    /// Reassembles and validates the stored model.
    pub fn into_model(self) -> Result<FactorModel> {
        let model = FactorModel {
            u: self.u,
            v: self.v,
            w: self.w,
        };
        model.validate()?;
        let got = CheckpointShapes {
            nodes: model.node_count(),
            terms: model.term_count(),
            timestamps: model.timestamps(),
            rank: model.rank(),
        };
        if got != self.shapes {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint declares shapes {:?} but stores {:?}",
                self.shapes, got
            )));
        }
        Ok(model)
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let mut text = serde_json::to_string_pretty(checkpoint)
        .map_err(|e| Error::InvalidInput(format!("checkpoint serialization failed: {e}")))?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u32,
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = read_file(path)?;
    let corrupt = |e: serde_json::Error| Error::Corrupt {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    // check the version before demanding the full schema, so files from a
    // different version fail with a version message instead of field noise
    let probe: VersionProbe = serde_json::from_str(&text).map_err(corrupt)?;
    if probe.version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: probe.version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let checkpoint: Checkpoint = serde_json::from_str(&text).map_err(corrupt)?;
    if !checkpoint.final_objective.is_finite() {
        return Err(Error::Corrupt {
            path: path.display().to_string(),
            message: format!("non-finite stored objective {}", checkpoint.final_objective),
        });
    }
    checkpoint.clone().into_model().map_err(|e| Error::Corrupt {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(checkpoint)
}

/// Writes one compact JSON document per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = String::new();
    for item in items {
        let line = serde_json::to_string(item)
            .map_err(|e| Error::InvalidInput(format!("record serialization failed: {e}")))?;
        out.push_str(&line);
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// Rounds to `digits` significant digits (ties away handled by the float
/// formatter). Zero and non-finite values pass through.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits.max(1) - 1, x).parse().unwrap()
}

/// Shortest decimal form of `x` rounded to `digits` significant digits.
pub fn format_sig(x: f64, digits: usize) -> String {
    format!("{}", round_sig(x, digits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::fit;
    use crate::synthetic::{generate, SyntheticConfig};

    fn sample_data() -> crate::synthetic::SyntheticData {
        generate(&SyntheticConfig {
            nodes: 20,
            edges_per_snapshot: 40,
            groups: 2,
            timestamps: 3,
            words_per_group: 4,
            tokens_per_node: 5,
            seed: 11,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn dataset_round_trips_exactly() {
        let data = sample_data();
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("ds");
        save_dataset(&root, &data.network, Some(&data.labels)).unwrap();
        let loaded = load_dataset(&root).unwrap();
        assert_eq!(loaded.network.node_count(), 20);
        assert_eq!(loaded.network.term_count(), 8);
        assert!(!loaded.network.directed());
        assert_eq!(loaded.labels.as_deref(), Some(&data.labels[..]));
        for t in 0..3 {
            let orig: Vec<_> = data.network.adjacency(t).iter().collect();
            let back: Vec<_> = loaded.network.adjacency(t).iter().collect();
            assert_eq!(orig, back, "adjacency {t}");
            let orig: Vec<_> = data.network.content(t).iter().collect();
            let back: Vec<_> = loaded.network.content(t).iter().collect();
            assert_eq!(orig, back, "content {t}");
        }
    }

    #[test]
    fn undirected_edge_files_store_each_edge_once() {
        let data = sample_data();
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("ds");
        save_dataset(&root, &data.network, None).unwrap();
        let text = std::fs::read_to_string(root.join("edges_t1.tsv")).unwrap();
        let lines = text.lines().count();
        assert_eq!(lines, data.network.adjacency(0).nnz() / 2);
        let loaded = load_dataset(&root).unwrap();
        assert_eq!(loaded.network.adjacency(0).nnz(), data.network.adjacency(0).nnz());
        assert!(loaded.labels.is_none());
    }

    fn write_minimal_dataset(root: &Path, edges: &str) {
        std::fs::create_dir_all(root).unwrap();
        std::fs::write(
            root.join("manifest.txt"),
            "format=stf.dataset\nversion=1\nnodes=3\nterms=2\ntimestamps=1\ndirected=false\nlabels=false\n",
        )
        .unwrap();
        std::fs::write(root.join("edges_t1.tsv"), edges).unwrap();
        std::fs::write(root.join("content_t1.tsv"), "0\t0\t1\n").unwrap();
    }

    #[test]
    fn conflicting_duplicate_weights_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("ds");
        write_minimal_dataset(&root, "0\t1\t1\n1\t0\t2\n");
        match load_dataset(&root) {
            Err(Error::Corrupt { message, .. }) => {
                assert!(message.contains("already has weight"), "{message}")
            }
            other => panic!("expected corrupt, got {other:?}"),
        }
    }

    #[test]
    fn exact_duplicate_entries_collapse() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("ds");
        write_minimal_dataset(&root, "0\t1\t2\n1\t0\t2\n");
        let loaded = load_dataset(&root).unwrap();
        assert_eq!(loaded.network.adjacency(0).nnz(), 2);
        assert_eq!(loaded.network.adjacency(0).get(0, 1), 2.0);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("ds");
        write_minimal_dataset(&root, "0\t1\t1\n# fine\nnope\n");
        match load_dataset(&root) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("ds");
        write_minimal_dataset(&root, "0\t9\t1\n");
        assert!(matches!(load_dataset(&root), Err(Error::Parse { .. })));
    }

    #[test]
    fn future_dataset_versions_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("ds");
        write_minimal_dataset(&root, "0\t1\t1\n");
        std::fs::write(
            root.join("manifest.txt"),
            "format=stf.dataset\nversion=7\nnodes=3\nterms=2\ntimestamps=1\ndirected=false\nlabels=false\n",
        )
        .unwrap();
        assert!(matches!(
            load_dataset(&root),
            Err(Error::UnsupportedVersion { found: 7, supported: 1 })
        ));
    }

    #[test]
    fn missing_manifest_keys_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("ds");
        write_minimal_dataset(&root, "0\t1\t1\n");
        std::fs::write(root.join("manifest.txt"), "format=stf.dataset\nversion=1\n").unwrap();
        match load_dataset(&root) {
            Err(Error::Corrupt { message, .. }) => assert!(message.contains("nodes")),
            other => panic!("expected corrupt, got {other:?}"),
        }
    }

    #[test]
    fn labels_must_cover_every_node() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels_t1.tsv");
        std::fs::write(&path, "0\t1\n2\t0\n").unwrap();
        match load_labels_file(&path, 3) {
            Err(Error::Corrupt { message, .. }) => assert!(message.contains("node 1")),
            other => panic!("expected corrupt, got {other:?}"),
        }
    }

    #[test]
    fn labels_round_trip_through_a_directory() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("labels");
        let labels = vec![vec![0, 1, 0], vec![1, 1, 0]];
        save_labels_dir(&root, &labels).unwrap();
        let back = load_labels_dir(&root, 3, 2).unwrap();
        assert_eq!(back, labels);
    }

    #[test]
    fn offset_label_files_and_dense_tsv_write_what_they_say() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("fc");
        save_labels_dir_from(&root, 4, &[vec![1, 0, 1]]).unwrap();
        let labels = load_labels_file(&root.join("labels_t4.tsv"), 3).unwrap();
        assert_eq!(labels, vec![1, 0, 1]);

        let m = Dense::from_rows(&[vec![0.5, -1.25], vec![3.0, 0.0]]);
        let path = dir.path().join("emb.tsv");
        write_dense_tsv(&path, &m).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "0.5\t-1.25\n3\t0\n");
    }

    #[test]
    fn checkpoint_round_trip_is_byte_identical() {
        let data = sample_data();
        let hp = Hyperparameters {
            rank: 3,
            max_iters: 5,
            ..Default::default()
        };
        let outcome = fit(&data.network, &hp).unwrap();
        let checkpoint = Checkpoint::from_outcome(&outcome, &hp);
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("model.json");
        let second = dir.path().join("model2.json");
        save_checkpoint(&first, &checkpoint).unwrap();
        let loaded = load_checkpoint(&first).unwrap();
        save_checkpoint(&second, &loaded).unwrap();
        let a = std::fs::read(&first).unwrap();
        let b = std::fs::read(&second).unwrap();
        assert_eq!(a, b);
        let model = loaded.into_model().unwrap();
        assert_eq!(model, outcome.model);
    }

    #[test]
    fn reloaded_checkpoint_reproduces_its_stored_objective() {
        let data = sample_data();
        let hp = Hyperparameters {
            rank: 3,
            max_iters: 40,
            ..Default::default()
        };
        let outcome = fit(&data.network, &hp).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&path, &Checkpoint::from_outcome(&outcome, &hp)).unwrap();

        let loaded = load_checkpoint(&path).unwrap();
        let stored = loaded.final_objective;
        let masks = crate::factorization::sample_active_mask(
            &data.network,
            loaded.hyperparameters.neg_sample_ratio,
            loaded.mask_seed,
        )
        .unwrap();
        let model = loaded.into_model().unwrap();
        let recomputed = crate::factorization::evaluate_objective(&model, &hp, &masks).unwrap();
        assert!(
            (recomputed - stored).abs() <= 1e-12 * stored.abs(),
            "stored {stored}, recomputed {recomputed}"
        );
    }

    #[test]
    fn future_checkpoint_versions_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        std::fs::write(&path, "{\"version\": 99}\n").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::UnsupportedVersion { found: 99, supported: 1 })
        ));
    }

    #[test]
    fn checkpoints_with_inconsistent_shapes_are_corrupt() {
        let data = sample_data();
        let hp = Hyperparameters {
            rank: 2,
            max_iters: 2,
            ..Default::default()
        };
        let outcome = fit(&data.network, &hp).unwrap();
        let mut checkpoint = Checkpoint::from_outcome(&outcome, &hp);
        checkpoint.shapes.nodes += 1;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_checkpoint(&path, &checkpoint).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Corrupt { .. })));
    }

    #[test]
    fn atomic_writes_leave_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        atomic_write(&path, b"hello").unwrap();
        atomic_write(&path, b"world").unwrap();
        let names: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, vec!["out.txt".to_string()]);
        assert_eq!(std::fs::read(&path).unwrap(), b"world");
    }

    #[test]
    fn jsonl_writes_one_document_per_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let items = vec![
            serde_json::json!({"trial": 0, "score": 0.5}),
            serde_json::json!({"trial": 1, "score": null}),
        ];
        write_jsonl(&path, &items).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        for line in lines {
            serde_json::from_str::<serde_json::Value>(line).unwrap();
        }
    }

    #[test]
    fn significant_digit_formatting_is_stable() {
        assert_eq!(format_sig(1234567.891, 6), "1234570");
        assert_eq!(format_sig(0.000123456789, 6), "0.000123457");
        assert_eq!(format_sig(2.5, 6), "2.5");
        assert_eq!(format_sig(-1.0 / 3.0, 6), "-0.333333");
        assert_eq!(format_sig(0.0, 6), "0");
        assert_eq!(round_sig(1.0000000001, 6), 1.0);
        assert!(round_sig(f64::NAN, 6).is_nan());
    }
}
