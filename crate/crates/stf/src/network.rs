//! Snapshot sequence of a dynamic attributed network.

use crate::error::{Error, Result};
use crate::mat::Sparse;

/// A sequence of graph snapshots over a fixed node set, each paired with a
/// node-by-term content matrix.
///
/// `adjacency[t]` is `n x n`, `content[t]` is `n x d`; `d = 0` degenerates to
/// a link-only network. Snapshot indices are 0-based throughout the crate.
#[derive(Debug, Clone)]
pub struct TemporalNetwork {
    node_count: usize,
    term_count: usize,
    adjacency: Vec<Sparse>,
    content: Vec<Sparse>,
    directed: bool,
}

impl TemporalNetwork {
    /// Validates shapes and entry ranges: one content matrix per snapshot,
    /// consistent dimensions, finite non-negative weights, and exact symmetry
    /// of every adjacency snapshot when `directed` is false.
    pub fn new(adjacency: Vec<Sparse>, content: Vec<Sparse>, directed: bool) -> Result<Self> {
        if adjacency.is_empty() {
            return Err(Error::InvalidInput(
                "a temporal network needs at least one snapshot".into(),
            ));
        }
        if content.len() != adjacency.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} adjacency snapshots but {} content snapshots",
                adjacency.len(),
                content.len()
            )));
        }
        let n = adjacency[0].rows();
        let d = content[0].cols();
        for (t, a) in adjacency.iter().enumerate() {
            if a.rows() != n || a.cols() != n {
                return Err(Error::ShapeMismatch(format!(
                    "adjacency snapshot {} is {}x{}, expected {n}x{n}",
                    t + 1,
                    a.rows(),
                    a.cols()
                )));
            }
            if !directed && !a.is_symmetric() {
                return Err(Error::InvalidInput(format!(
                    "adjacency snapshot {} of an undirected network is not symmetric",
                    t + 1
                )));
            }
        }
        for (t, c) in content.iter().enumerate() {
            if c.rows() != n || c.cols() != d {
                return Err(Error::ShapeMismatch(format!(
                    "content snapshot {} is {}x{}, expected {n}x{d}",
                    t + 1,
                    c.rows(),
                    c.cols()
                )));
            }
        }
        for (what, mats) in [("adjacency", &adjacency), ("content", &content)] {
            for (t, m) in mats.iter().enumerate() {
                if let Some(v) = m.values().iter().find(|v| !v.is_finite() || **v < 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "{what} snapshot {} contains weight {v}, expected finite and >= 0",
                        t + 1
                    )));
                }
            }
        }
        Ok(TemporalNetwork {
            node_count: n,
            term_count: d,
            adjacency,
            content,
            directed,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn term_count(&self) -> usize {
        self.term_count
    }

    /// Number of snapshots.
    pub fn timestamps(&self) -> usize {
        self.adjacency.len()
    }

    pub fn directed(&self) -> bool {
        self.directed
    }

    pub fn adjacency(&self, t: usize) -> &Sparse {
        &self.adjacency[t]
    }

    pub fn content(&self, t: usize) -> &Sparse {
        &self.content[t]
    }

    /// A copy restricted to the first `timestamps` snapshots; used to hold
    /// out later snapshots for forecast evaluation.
    pub fn truncated(&self, timestamps: usize) -> Result<TemporalNetwork> {
        if timestamps == 0 || timestamps > self.timestamps() {
            return Err(Error::InvalidInput(format!(
                "cannot truncate a {}-snapshot network to {timestamps} snapshots",
                self.timestamps()
            )));
        }
        Ok(TemporalNetwork {
            node_count: self.node_count,
            term_count: self.term_count,
            adjacency: self.adjacency[..timestamps].to_vec(),
            content: self.content[..timestamps].to_vec(),
            directed: self.directed,
        })
    }
}
