//! Skeleton-sequence action recognition: graph construction, graph
//! convolution and attention forward passes, and saliency export.
//!
//! Inference only. Weights come from fixture files (see [`weights`]).

pub mod attention;
pub mod gcn;
pub mod graph;
pub mod matrix;
pub mod saliency;
pub mod weights;

pub use attention::{attention_forward, AttentionWeights};
pub use gcn::{gcn_forward, ActionPrediction, Activation, LayerWeights};
pub use graph::{build_graph, Partition, SkeletonGraph};
pub use matrix::Matrix;
pub use saliency::{joint_heatmap, saliency_gradcam, FeatureMaps};
