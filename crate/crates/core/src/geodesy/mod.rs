//! Approximate geodesics among contact points from nearest-neighbour graphs.

pub mod bins;
pub mod graph;
pub mod io;

pub use bins::{bin_split, sample_siamese_pairs, GeodesicBin, SiamesePair};
pub use graph::{geodesic_matrix, knn_graph, SparseGraph};
