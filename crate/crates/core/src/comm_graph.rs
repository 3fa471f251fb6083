//! Undirected strong-link graph, constraint-violation weights, Kruskal MST and
//! algebraic connectivity.

use std::fmt;

use thiserror::Error;

use crate::numerics::{second_smallest_eigenvalue, NumericsError, SymMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph is disconnected")]
    Disconnected,
    #[error("edge {0} has no weight")]
    MissingWeight(Edge),
    #[error("edge {0} is not in the graph")]
    UnknownEdge(Edge),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Undirected edge with `0 <= i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge(usize, usize);

impl Edge {
    pub fn new(a: usize, b: usize) -> Self {
        assert_ne!(a, b, "self-loops are not edges");
        if a < b {
            Edge(a, b)
        } else {
            Edge(b, a)
        }
    }

    pub fn i(&self) -> usize {
        self.0
    }

    pub fn j(&self) -> usize {
        self.1
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.0, self.1)
    }
}

#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
    components: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
            components: n,
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Returns false if `a` and `b` were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        self.components -= 1;
        true
    }

    pub fn components(&self) -> usize {
        self.components
    }
}

/// Communication graph over `n` robots. Edges are kept in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    n: usize,
    edges: Vec<Edge>,
    weights: Vec<Option<f64>>,
}

impl CommGraph {
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = Edge>) -> Self {
        let mut edges: Vec<Edge> = edges.into_iter().collect();
        assert!(edges.iter().all(|e| e.1 < n), "edge endpoint out of range");
        edges.sort();
        edges.dedup();
        let weights = vec![None; edges.len()];
        Self { n, edges, weights }
    }

    /// Strong-link graph: `(i, j)` is an edge iff `min(R_ij, R_ji) >= epsilon`.
    /// Diagonal entries of `rssi` are ignored.
    pub fn build(rssi: &[Vec<f64>], epsilon: f64) -> Self {
        let n = rssi.len();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rssi[i][j].min(rssi[j][i]) >= epsilon {
                    edges.push(Edge(i, j));
                }
            }
        }
        Self::from_edges(n, edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn contains(&self, e: Edge) -> bool {
        self.edges.binary_search(&e).is_ok()
    }

    pub fn weight(&self, e: Edge) -> Option<f64> {
        self.edges.binary_search(&e).ok().and_then(|k| self.weights[k])
    }

    pub fn set_weight(&mut self, e: Edge, w: f64) -> Result<(), GraphError> {
        let k = self.edges.binary_search(&e).map_err(|_| GraphError::UnknownEdge(e))?;
        self.weights[k] = Some(w);
        Ok(())
    }

    /// True iff every pair of robots is joined by a path of edges.
    pub fn is_strongly_connected(&self) -> bool {
        let mut uf = UnionFind::new(self.n);
        for e in &self.edges {
            uf.union(e.0, e.1);
        }
        uf.components() <= 1
    }

    /// Unweighted Laplacian `D − A`.
    pub fn laplacian(&self) -> SymMatrix {
        let mut l = SymMatrix::zeros(self.n);
        for e in &self.edges {
            l.set(e.0, e.1, -1.0);
            l.set(e.0, e.0, l.get(e.0, e.0) + 1.0);
            l.set(e.1, e.1, l.get(e.1, e.1) + 1.0);
        }
        l
    }

    /// Second-smallest Laplacian eigenvalue of the unweighted graph.
    pub fn algebraic_connectivity(&self) -> Result<f64, GraphError> {
        Ok(second_smallest_eigenvalue(&self.laplacian())?)
    }

    /// Kruskal's algorithm over the weighted edges; ties are broken by the
    /// lexicographic edge order.
    pub fn min_spanning_tree(&self) -> Result<SpanningTree, GraphError> {
        let mut order: Vec<(f64, Edge)> = Vec::with_capacity(self.edges.len());
        for (e, w) in self.edges.iter().zip(&self.weights) {
            order.push((w.ok_or(GraphError::MissingWeight(*e))?, *e));
        }
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut uf = UnionFind::new(self.n);
        let mut tree = Vec::with_capacity(self.n.saturating_sub(1));
        let mut total = 0.0;
        for (w, e) in order {
            if uf.union(e.0, e.1) {
                tree.push(e);
                total += w;
            }
        }
        if uf.components() > 1 {
            return Err(GraphError::Disconnected);
        }
        Ok(SpanningTree {
            n: self.n,
            edges: tree,
            total_weight: total,
        })
    }
}

/// Spanning tree in the order Kruskal accepted its edges.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanningTree {
    n: usize,
    edges: Vec<Edge>,
    total_weight: f64,
}

impl SpanningTree {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// Edges in lexicographic order.
    pub fn sorted_edges(&self) -> Vec<Edge> {
        let mut e = self.edges.clone();
        e.sort();
        e
    }
}

/// Negated sum of `ḣ + γh` over both link directions under the nominal
/// control. Low weight means the link is comfortably maintained.
pub fn edge_weight(h_ij: f64, hdot_ij: f64, h_ji: f64, hdot_ji: f64, gamma: f64) -> f64 {
    -(hdot_ij + gamma * h_ij + hdot_ji + gamma * h_ji)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weighted(n: usize, w: &[(usize, usize, f64)]) -> CommGraph {
        let mut g = CommGraph::from_edges(n, w.iter().map(|&(a, b, _)| Edge::new(a, b)));
        for &(a, b, x) in w {
            g.set_weight(Edge::new(a, b), x).unwrap();
        }
        g
    }

    #[test]
    fn asymmetric_link_is_not_an_edge() {
        let r = vec![vec![0.0, -20.0], vec![-26.0, 0.0]];
        assert!(CommGraph::build(&r, -25.0).edges().is_empty());
        let r = vec![vec![0.0, -25.0], vec![-25.0, 0.0]];
        assert_eq!(CommGraph::build(&r, -25.0).edges(), &[Edge::new(0, 1)]);
    }

    #[test]
    fn all_strong_pairs_give_complete_graph() {
        let r = vec![vec![-10.0; 4]; 4];
        assert_eq!(CommGraph::build(&r, -25.0).edges().len(), 6);
    }

    #[test]
    fn connectivity_examples() {
        let path = CommGraph::from_edges(5, (0..4).map(|i| Edge::new(i, i + 1)));
        assert!(path.is_strongly_connected());
        let partial = CommGraph::from_edges(5, [Edge::new(0, 1), Edge::new(1, 2)]);
        assert!(!partial.is_strongly_connected());
        assert!(CommGraph::from_edges(1, []).is_strongly_connected());
    }

    #[test]
    fn weight_examples() {
        assert_eq!(edge_weight(0.0, 0.0, 0.0, 0.0, 1.0), 0.0);
        assert_eq!(edge_weight(2.0, 0.0, 2.0, 0.0, 1.0), -4.0);
        assert_eq!(edge_weight(1.0, -3.0, 1.0, -3.0, 1.0), 4.0);
    }

    #[test]
    fn weight_decreases_with_health() {
        for k in 0..20 {
            let h = k as f64 * 0.5;
            assert!(edge_weight(h + 0.1, -1.0, 0.3, 0.2, 1.0) < edge_weight(h, -1.0, 0.3, 0.2, 1.0));
        }
    }

    #[test]
    fn triangle_mst() {
        let g = weighted(3, &[(0, 1, -5.0), (1, 2, -1.0), (0, 2, 3.0)]);
        let t = g.min_spanning_tree().unwrap();
        assert_eq!(t.sorted_edges(), vec![Edge::new(0, 1), Edge::new(1, 2)]);
        assert_eq!(t.total_weight(), -6.0);
    }

    #[test]
    fn equal_weights_break_ties_lexicographically() {
        let g = weighted(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 3, 1.0)]);
        assert_eq!(
            g.min_spanning_tree().unwrap().sorted_edges(),
            vec![Edge::new(0, 1), Edge::new(0, 3), Edge::new(1, 2)]
        );
    }

    #[test]
    fn tree_input_is_returned() {
        let g = weighted(4, &[(0, 2, 7.0), (2, 3, -1.0), (1, 2, 0.5)]);
        assert_eq!(
            g.min_spanning_tree().unwrap().sorted_edges(),
            vec![Edge::new(0, 2), Edge::new(1, 2), Edge::new(2, 3)]
        );
    }

    #[test]
    fn mst_errors() {
        let g = weighted(3, &[(0, 1, 1.0)]);
        assert_eq!(g.min_spanning_tree(), Err(GraphError::Disconnected));
        let g = CommGraph::from_edges(2, [Edge::new(0, 1)]);
        assert_eq!(g.min_spanning_tree(), Err(GraphError::MissingWeight(Edge::new(0, 1))));
    }

    #[test]
    fn algebraic_connectivity_examples() {
        let k3 = CommGraph::from_edges(3, [Edge::new(0, 1), Edge::new(1, 2), Edge::new(0, 2)]);
        assert!((k3.algebraic_connectivity().unwrap() - 3.0).abs() < 1e-12);
        let p3 = CommGraph::from_edges(3, [Edge::new(0, 1), Edge::new(1, 2)]);
        assert!((p3.algebraic_connectivity().unwrap() - 1.0).abs() < 1e-12);
        let split = CommGraph::from_edges(4, [Edge::new(0, 1), Edge::new(2, 3)]);
        assert!(split.algebraic_connectivity().unwrap().abs() < 1e-12);
    }

    #[test]
    fn edge_display_and_canonical_order() {
        assert_eq!(Edge::new(3, 1).to_string(), "1-3");
        assert_eq!(Edge::new(3, 1), Edge::new(1, 3));
    }
}
