//! Problem-specific solvers that exploit closed-form subproblems.

mod fmf;
mod itr;
mod kernel;
mod spectral;

pub use fmf::{fmf, FmfConfig};
pub use itr::{flag_itr, newton_bracket, newton_state, NewtonState, MAX_NEWTON_ITERS};
pub use kernel::{kernel_graph_embed, median_bandwidth, Kernel, KernelEmbedding, KERNEL_TRUNCATION};
pub use spectral::{
    build_laplacian, clustering_accuracy, kmeans, normalized_laplacian, pairwise_distances, spectral_cluster,
    KMEANS_RESTARTS,
};
