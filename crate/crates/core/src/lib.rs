//! Deterministic sorting laboratory.
//!
//! Two GPU-style mergesorts are executed on an abstract machine that counts
//! blocked global-memory transfers, warp-wide shared-memory instructions and
//! the bank conflicts those instructions incur:
//!
//! * [`sorters::mms_sort`]: multiway mergesort built from a bank-conflict-free
//!   shearsort base case, multisequence partitioning and a per-warp
//!   [`blockheap::MinBlockHeap`].
//! * [`sorters::pairwise_sort_baseline`]: a Merge Path pairwise mergesort whose
//!   per-thread serial merges issue data-dependent shared-memory reads.
//!
//! Every counter lives in [`machine::Metrics`]; closed-form predictions of the
//! same counters are in [`analytics`].

pub mod analytics;
pub mod basecase;
pub mod blockheap;
pub mod error;
pub mod inputgen;
pub mod machine;
pub mod selection;
pub mod sorters;

pub use analytics::{compare_report, predict_multiway, predict_pairwise, Prediction, Report};
pub use error::{Error, Result};
pub use inputgen::{InputKind, InputSpec};
pub use machine::{MachineConfig, Metrics, WarpAccess};
pub use sorters::{mms_sort, pairwise_sort_baseline, Algorithm, SortResult};

/// Keys are abstract one-word values.
pub type Key = u64;

/// Padding value; compares greater than or equal to every key.
pub const SENTINEL: Key = Key::MAX;
