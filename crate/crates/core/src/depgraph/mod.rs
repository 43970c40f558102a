//! Dependency extraction: which observed pairs may inform which others, and
//! with what weight.
//!
//! The pipeline is: pairwise similarity over candidate features, a
//! thresholded [`SimilarityGraph`], a [`ClusterAssignment`] derived from it,
//! candidate related pairs for each queried duel, weights from an
//! [`Annotator`], and finally entries in the [`DependencyStore`].

mod annotate;
mod graph;
mod similarity;
mod store;

pub use annotate::{
    parse_score_reply, render_prompt, AnnotationContext, Annotator, AnnotatorSpec,
    CommandAnnotator, ExternalAnnotator, HttpAnnotator, PromptItem,
};
pub use graph::{
    build_graph, candidate_related_pairs, soft_cluster, soft_cluster_with_overlap,
    ClusterAssignment, Edge, SimilarityGraph,
};
pub use similarity::{
    gower_distance, gower_similarity, numeric_similarity, similarity_for_table,
    SimilarityMatrix, SimilarityMetric,
};
pub use store::{DependencyEntry, DependencyRecord, DependencyStore, Provenance, DEFAULT_W_FLOOR};

/// Similarity threshold used for every benchmark unless overridden.
pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.85;
