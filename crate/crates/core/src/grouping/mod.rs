//! Class similarity, SimGraphs, Welsh-Powell coloring and the per-task
//! group assignment procedure.

mod assign;
mod graph;
mod stats;

pub use assign::{assign_task_classes, GroupChoicePolicy, GroupId, GroupTable};
pub use graph::{build_simgraph, welsh_powell, welsh_powell_bound, Coloring, SimGraph, SimGraphJson};
pub use stats::{adaptive_threshold, are_dissimilar, compute_class_stats, ClassStats};
