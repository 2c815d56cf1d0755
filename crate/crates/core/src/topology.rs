//! Communication graph, mixing weights and the consensus step.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("topology has no nodes")]
    Empty,
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    UnknownNode(usize, usize, usize),
    #[error("unknown role label {0:?} (expected L, U or M)")]
    UnknownRole(String),
    #[error("graph is disconnected: node {0} is unreachable from node 0")]
    Disconnected(usize),
    #[error("unknown topology preset {0:?}")]
    UnknownPreset(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum ConsensusError {
    #[error("parameter layout mismatch: {expected} vs {found}")]
    LayoutMismatch { expected: LayoutTag, found: LayoutTag },
    #[error("parameter length mismatch: {expected} vs {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("weights cover {weights} nodes but {params} parameter vectors were given")]
    NodeCountMismatch { weights: usize, params: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum WeightsError {
    #[error("{found} weight rows for {expected} nodes")]
    RowCount { expected: usize, found: usize },
    #[error("row {row} has {found} entries, sub-graph has {expected}")]
    RowShape { row: usize, expected: usize, found: usize },
    #[error("row {row} contains a negative or non-finite weight")]
    Negative { row: usize },
    #[error("row {row} sums to {sum}, not 1")]
    NotStochastic { row: usize, sum: f64 },
}

/// Data source of a client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    /// Labeled data only.
    #[serde(rename = "L")]
    Labeled,
    /// Unlabeled data only.
    #[serde(rename = "U")]
    Unlabeled,
    /// Both.
    #[serde(rename = "M")]
    Mixed,
}

impl Role {
    pub fn holds_labeled(self) -> bool {
        matches!(self, Role::Labeled | Role::Mixed)
    }

    pub fn holds_unlabeled(self) -> bool {
        matches!(self, Role::Unlabeled | Role::Mixed)
    }

    pub fn letter(self) -> char {
        match self {
            Role::Labeled => 'L',
            Role::Unlabeled => 'U',
            Role::Mixed => 'M',
        }
    }
}

impl FromStr for Role {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "L" => Ok(Role::Labeled),
            "U" => Ok(Role::Unlabeled),
            "M" => Ok(Role::Mixed),
            other => Err(TopologyError::UnknownRole(other.to_string())),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

pub const PRESETS: [&str; 4] = ["fig1a", "topo1", "topo2", "topo3"];

/// An undirected, connected communication graph with a role per node.
///
/// The sub-graph of node `i` is `{i} ∪ neighbors(i)`, listed in ascending
/// node order. Everything indexed "over the sub-graph" (weight rows, the
/// neighborhood model list) uses that order.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    roles: Vec<Role>,
    neighbors: Vec<Vec<usize>>,
    subgraphs: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(roles: Vec<Role>, edges: &[(usize, usize)]) -> Result<Self, TopologyError> {
        let n = roles.len();
        if n == 0 {
            return Err(TopologyError::Empty);
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(TopologyError::UnknownNode(a, b, n));
            }
            if a == b {
                return Err(TopologyError::SelfLoop(a));
            }
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }

        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(TopologyError::Disconnected(missing));
        }

        let subgraphs = neighbors
            .iter()
            .enumerate()
            .map(|(i, nb)| {
                let mut g = nb.clone();
                g.push(i);
                g.sort_unstable();
                g
            })
            .collect();
        Ok(Self { roles, neighbors, subgraphs })
    }

    /// Parses role letters (`"L"`, `"U"`, `"M"`) and builds the graph.
    pub fn from_labels<S: AsRef<str>>(roles: &[S], edges: &[(usize, usize)]) -> Result<Self, TopologyError> {
        let roles = roles.iter().map(|r| r.as_ref().parse()).collect::<Result<Vec<Role>, _>>()?;
        Self::new(roles, edges)
    }

    /// Built-in 10-client graphs.
    ///
    /// * `topo1`: one L, six U, three M. The L client links the three M
    ///   clients, and each M client serves a pair of connected U clients.
    /// * `topo2`: two connected L clients, each linked to three U clients
    ///   and one M client.
    /// * `topo3`: a ring `L U M L U M L U M U`; every node has degree two and
    ///   L clients are separated by U and M clients.
    /// * `fig1a`: three L, three U and four M clients on a sparse mesh.
    pub fn preset(name: &str) -> Result<Self, TopologyError> {
        use Role::{Labeled as L, Mixed as M, Unlabeled as U};
        match name {
            "topo1" => Self::new(
                vec![L, M, M, M, U, U, U, U, U, U],
                &[(0, 1), (0, 2), (0, 3), (1, 4), (1, 5), (4, 5), (2, 6), (2, 7), (6, 7), (3, 8), (3, 9), (8, 9)],
            ),
            "topo2" => Self::new(
                vec![L, L, U, U, U, M, U, U, U, M],
                &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (1, 6), (1, 7), (1, 8), (1, 9)],
            ),
            "topo3" => {
                let roles = vec![L, U, M, L, U, M, L, U, M, U];
                let edges: Vec<_> = (0..10).map(|i| (i, (i + 1) % 10)).collect();
                Self::new(roles, &edges)
            }
            "fig1a" => Self::new(
                vec![L, M, U, M, L, U, M, L, U, M],
                &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 8), (8, 9), (9, 0), (0, 5), (2, 7)],
            ),
            other => Err(TopologyError::UnknownPreset(other.to_string())),
        }
    }

    pub fn node_count(&self) -> usize {
        self.roles.len()
    }

    pub fn roles(&self) -> &[Role] {
        &self.roles
    }

    pub fn role(&self, i: usize) -> Role {
        self.roles[i]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// `{i} ∪ neighbors(i)`, ascending.
    pub fn subgraph(&self, i: usize) -> &[usize] {
        &self.subgraphs[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, nb) in self.neighbors.iter().enumerate() {
            out.extend(nb.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    pub fn count_role(&self, role: Role) -> usize {
        self.roles.iter().filter(|&&r| r == role).count()
    }
}

/// Row-stochastic weights `w_ij` over each node's sub-graph.
///
/// Row `i` is aligned with [`Topology::subgraph`]`(i)`; weights for nodes
/// outside the sub-graph are zero and not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingWeights {
    members: Vec<Vec<usize>>,
    rows: Vec<Vec<f64>>,
}

const ROW_SUM_TOL: f64 = 1e-9;

impl MixingWeights {
    /// `w_ij = 1 / |G_i|`.
    pub fn uniform(topology: &Topology) -> Self {
        let members: Vec<Vec<usize>> = (0..topology.node_count()).map(|i| topology.subgraph(i).to_vec()).collect();
        let rows = members.iter().map(|g| vec![1.0 / g.len() as f64; g.len()]).collect();
        Self { members, rows }
    }

    pub fn from_rows(topology: &Topology, rows: Vec<Vec<f64>>) -> Result<Self, WeightsError> {
        if rows.len() != topology.node_count() {
            return Err(WeightsError::RowCount { expected: topology.node_count(), found: rows.len() });
        }
        let mut members = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            let g = topology.subgraph(i);
            if row.len() != g.len() {
                return Err(WeightsError::RowShape { row: i, expected: g.len(), found: row.len() });
            }
            if row.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(WeightsError::Negative { row: i });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(WeightsError::NotStochastic { row: i, sum });
            }
            members.push(g.to_vec());
        }
        Ok(Self { members, rows })
    }

    pub fn node_count(&self) -> usize {
        self.rows.len()
    }

    /// `(j, w_ij)` pairs for `j ∈ G_i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.members[i].iter().copied().zip(self.rows[i].iter().copied())
    }

    pub fn weights(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    /// `w_ij`, zero outside the sub-graph.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.members[i].binary_search(&j) {
            Ok(k) => self.rows[i][k],
            Err(_) => 0.0,
        }
    }
}

/// Names the flat layout of a parameter vector (architecture + sizes).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LayoutTag(Arc<str>);

impl LayoutTag {
    pub fn new(tag: impl AsRef<str>) -> Self {
        Self(Arc::from(tag.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LayoutTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Flat parameter vector, the unit exchanged between neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: LayoutTag,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: LayoutTag) -> Self {
        Self { values, layout }
    }

    pub fn zeros(len: usize, layout: LayoutTag) -> Self {
        Self { values: vec![0.0; len], layout }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layout(&self) -> &LayoutTag {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_compatible(&self, other: &ParamVector) -> Result<(), ConsensusError> {
        if self.layout != other.layout {
            return Err(ConsensusError::LayoutMismatch { expected: self.layout.clone(), found: other.layout.clone() });
        }
        if self.values.len() != other.values.len() {
            return Err(ConsensusError::LengthMismatch { expected: self.values.len(), found: other.values.len() });
        }
        Ok(())
    }

    /// `‖self − other‖∞`.
    pub fn max_abs_diff(&self, other: &ParamVector) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// One synchronous consensus step: `out_i = Σ_{j∈G_i} w_ij · locals_j`.
///
/// Every output reads only the inputs, never another output, so the result
/// is the simultaneous exchange regardless of evaluation order.
pub fn consensus_update(locals: &[ParamVector], weights: &MixingWeights) -> Result<Vec<ParamVector>, ConsensusError> {
    if locals.len() != weights.node_count() {
        return Err(ConsensusError::NodeCountMismatch { weights: weights.node_count(), params: locals.len() });
    }
    let Some(first) = locals.first() else {
        return Ok(Vec::new());
    };
    for p in &locals[1..] {
        first.check_compatible(p)?;
    }
    Ok((0..locals.len())
        .map(|i| {
            let mut acc = vec![0.0; first.len()];
            for (j, w) in weights.row(i) {
                for (a, v) in acc.iter_mut().zip(locals[j].values()) {
                    *a += w * v;
                }
            }
            ParamVector::new(acc, first.layout().clone())
        })
        .collect())
}

/// Largest `‖p_i − p_j‖∞` over all pairs.
pub fn max_pairwise_disagreement(params: &[ParamVector]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in params.iter().enumerate() {
        for b in &params[i + 1..] {
            worst = worst.max(a.max_abs_diff(b));
        }
    }
    worst
}
