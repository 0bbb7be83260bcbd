//! Dense-matrix primitives: singular values, optimal assignment, K-Means.

mod assignment;
mod kmeans;
mod svd;

pub use assignment::{linear_assignment, Assignment, Direction};
pub use kmeans::kmeans;
pub use svd::{singular_values, svd_right_vectors};
