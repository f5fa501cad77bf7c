//! Merging of inexact scalar data defined on overlapping 2-D point clouds.
//!
//! The merge runs in two steps. A least-squares solve over pairwise overlap
//! means removes one constant offset per partition. Remaining disagreement is
//! then removed by a cascade of discrete Dirichlet problems on each
//! partition's Delaunay graph Laplacian, from the highest overlap degree down
//! to two. Each correction matches the consensus exactly where enough
//! partitions overlap and extends harmonically into the rest of the
//! partition, so no seam is introduced.
//!
//! ```no_run
//! use seamweld::{merge, MergeConfig, synth};
//!
//! let (partitions, truth) = synth::generate_scene(&synth::SceneConfig::default())?;
//! let out = merge(partitions, &MergeConfig::default())?;
//! let score = synth::score(&out.merged, &truth)?;
//! println!("rmse {:e}", score.rmse);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod cascade;
pub mod dirichlet;
pub mod error;
pub mod graph;
pub mod io;
pub mod offsets;
pub mod overlap;
pub mod point;
pub mod synth;

pub use cascade::{
    consensus_at_degree, correction_round, merge, EventLog, EventSink, ExecutionMode, MergeConfig,
    MergeEvent, MergeOutput, Merger, SeamReport, SolveRecord,
};
pub use dirichlet::{solve_dirichlet, DirichletProblem, HarmonicCorrection};
pub use error::{Error, MergeError, Result, Stage};
pub use graph::{build_laplacian, delaunay_edges, EdgeList, GraphLaplacian, GraphOptions, LaplacianCache, PartitionGraph};
pub use offsets::{apply_offsets, pairwise_means, solve_offsets, OffsetSolution, PairMean, PairWeighting};
pub use overlap::{compute_overlaps, max_overlap_degree, OverlapIndex};
pub use point::{assign_global_ids, GlobalPointId, IdScheme, MergedDataset, Point, PointCloudPartition};
