use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Undirected weighted graph stored as adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance, ties broken by node index.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl SparseGraph {
    pub fn with_nodes(n: usize) -> Self {
        Self {
            adjacency: vec![Vec::new(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    /// Adds the undirected edge `(i, j)` unless it is already present.
    pub fn add_edge(&mut self, i: usize, j: usize, weight: f64) {
        if i == j || self.adjacency[i].iter().any(|&(k, _)| k == j) {
            return;
        }
        self.adjacency[i].push((j, weight));
        self.adjacency[j].push((i, weight));
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].iter().any(|&(k, _)| k == j)
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Sizes of the connected components, largest first.
    pub fn component_sizes(&self) -> Vec<usize> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut sizes = Vec::new();
        let mut stack = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            stack.push(start);
            let mut size = 0;
            while let Some(u) = stack.pop() {
                size += 1;
                for &(v, _) in &self.adjacency[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            sizes.push(size);
        }
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        sizes
    }

    /// Single-source shortest paths seeded with several initial distances
    /// (binary-heap Dijkstra). Unreachable nodes stay at infinity.
    pub fn dijkstra_seeded(&self, seeds: &[(usize, f64)]) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.len()];
        let mut heap = BinaryHeap::with_capacity(self.len());
        for &(node, d) in seeds {
            if d < dist[node] {
                dist[node] = d;
                heap.push(HeapEntry { dist: d, node });
            }
        }
        while let Some(HeapEntry { dist: d, node }) = heap.pop() {
            if d > dist[node] {
                continue;
            }
            for &(next, w) in &self.adjacency[node] {
                let nd = d + w;
                if nd < dist[next] {
                    dist[next] = nd;
                    heap.push(HeapEntry { dist: nd, node: next });
                }
            }
        }
        dist
    }

    pub fn dijkstra(&self, source: usize) -> Vec<f64> {
        self.dijkstra_seeded(&[(source, 0.0)])
    }
}

/// Symmetric M-nearest-neighbour graph over 3D points with chord-length
/// weights. Ties in the neighbour ranking go to the lower index.
pub fn knn_graph(points: &[Vector3<f64>], m: usize) -> Result<SparseGraph> {
    if m < 1 {
        return Err(Error::InvalidArgument("M must be at least 1".into()));
    }
    if points.len() < m + 1 {
        return Err(Error::InvalidArgument(format!(
            "need at least M+1 = {} points, got {}",
            m + 1,
            points.len()
        )));
    }
    let n = points.len();
    let neighbor_lists: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| ((points[i] - points[j]).norm(), j))
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.truncate(m);
            cand.into_iter().map(|(d, j)| (j, d)).collect()
        })
        .collect();
    let mut graph = SparseGraph::with_nodes(n);
    for (i, list) in neighbor_lists.into_iter().enumerate() {
        for (j, d) in list {
            graph.add_edge(i, j, d);
        }
    }
    Ok(graph)
}

/// Dense all-pairs shortest-path matrix (row-major, `n * n`) via one Dijkstra
/// per source. Disconnected graphs are rejected.
pub fn geodesic_matrix(graph: &SparseGraph) -> Result<Vec<f64>> {
    let sizes = graph.component_sizes();
    if sizes.len() > 1 {
        return Err(Error::DisconnectedGraph { sizes });
    }
    let n = graph.len();
    let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|i| graph.dijkstra(i)).collect();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            // Dijkstra sums in path order, so the two directions can differ
            // in the last ulp; take the smaller to keep the matrix symmetric.
            let d = rows[i][j].min(rows[j][i]);
            out[i * n + j] = if i == j { 0.0 } else { d };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Floyd–Warshall over the same graph; O(n^3) brute force.
    pub(crate) fn floyd_warshall(graph: &SparseGraph) -> Vec<f64> {
        let n = graph.len();
        let mut d = vec![f64::INFINITY; n * n];
        for i in 0..n {
            d[i * n + i] = 0.0;
            for &(j, w) in graph.neighbors(i) {
                d[i * n + j] = d[i * n + j].min(w);
            }
        }
        for k in 0..n {
            for i in 0..n {
                let dik = d[i * n + k];
                if !dik.is_finite() {
                    continue;
                }
                for j in 0..n {
                    let cand = dik + d[k * n + j];
                    if cand < d[i * n + j] {
                        d[i * n + j] = cand;
                    }
                }
            }
        }
        d
    }

    fn line(n: usize, spacing: f64) -> Vec<Vector3<f64>> {
        (0..n).map(|i| Vector3::new(i as f64 * spacing, 0.0, 0.0)).collect()
    }

    #[test]
    fn collinear_chain_with_one_neighbour() {
        let pts = line(3, 0.5);
        let g = knn_graph(&pts, 1).unwrap();
        assert!(g.has_edge(0, 1) && g.has_edge(1, 2));
        assert!(!g.has_edge(0, 2));
        assert_eq!(g.edge_count(), 2);
        for &(_, w) in g.neighbors(1) {
            assert_eq!(w, 0.5);
        }
        let d = geodesic_matrix(&g).unwrap();
        assert_eq!(d[2], 1.0);
        assert_eq!(d[3 * 2], 1.0);
    }

    #[test]
    fn full_neighbourhood_is_complete() {
        let pts: Vec<_> = (0..6)
            .map(|i| Vector3::new((i as f64).cos(), (i as f64 * 0.7).sin(), i as f64 * 0.1))
            .collect();
        let g = knn_graph(&pts, 5).unwrap();
        assert_eq!(g.edge_count(), 15);
    }

    #[test]
    fn ties_prefer_lower_index() {
        // Point 1 is equidistant from 0 and 2.
        let pts = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(2.0, 0.0, 0.0),
        ];
        let g = knn_graph(&pts, 1).unwrap();
        // 1's single neighbour is 0; 2's single neighbour is 1.
        assert!(g.has_edge(1, 0));
        assert!(g.has_edge(2, 1));
    }

    #[test]
    fn duplicate_points_give_zero_weight_edges() {
        let pts = vec![Vector3::zeros(), Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)];
        let g = knn_graph(&pts, 1).unwrap();
        assert!(g.neighbors(0).iter().any(|&(j, w)| j == 1 && w == 0.0));
    }

    #[test]
    fn rejects_too_few_points_and_zero_m() {
        assert!(knn_graph(&line(3, 1.0), 3).is_err());
        assert!(knn_graph(&line(3, 1.0), 0).is_err());
    }

    #[test]
    fn disconnected_graph_names_components() {
        let mut pts = line(3, 0.1);
        pts.extend(line(2, 0.1).into_iter().map(|p| p + Vector3::new(100.0, 0.0, 0.0)));
        let g = knn_graph(&pts, 1).unwrap();
        match geodesic_matrix(&g) {
            Err(Error::DisconnectedGraph { sizes }) => assert_eq!(sizes, vec![3, 2]),
            other => panic!("expected disconnected error, got {other:?}"),
        }
    }

    #[test]
    fn dijkstra_matches_floyd_warshall() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<_> = (0..120)
            .map(|_| Vector3::new(rng.random::<f64>(), rng.random::<f64>(), 0.1 * rng.random::<f64>()))
            .collect();
        let g = knn_graph(&pts, 6).unwrap();
        let d = geodesic_matrix(&g).unwrap();
        let fw = floyd_warshall(&g);
        for (a, b) in d.iter().zip(&fw) {
            assert!((a - b).abs() <= 1e-12 * b.max(1.0), "{a} vs {b}");
        }
    }
}
