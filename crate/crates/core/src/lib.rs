//! Hidden-layer size search for small feed-forward networks.
//!
//! The crate is split bottom-up:
//!
//! - [`datasets`]: IDX and CSV loaders, standardization, train/test splits and K-fold.
//! - [`lbfgs`]: a limited-memory BFGS minimizer with a strong Wolfe line search.
//! - [`mlp`]: a ReLU multilayer perceptron whose loss and gradient are exposed as a
//!   flat-vector objective for [`lbfgs`].
//! - [`search`]: candidate enumeration, cross-validated grid search and the windowed
//!   heuristic that grows a neighbourhood around the best combination found so far.
//! - [`harness`]: experiment plans, repeat/median aggregation and CSV/JSON output.
//!
//! Types shared by more than one layer ([`LayerCombo`], [`Task`]) live at the root.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod combo;
pub mod datasets;
pub mod harness;
pub mod lbfgs;
pub mod mlp;
pub mod search;

mod floats;

pub use combo::{LayerCombo, ParseComboError};
pub use datasets::{Dataset, Targets, Task};
pub use mlp::{MlpConfig, TrainedModel, TrainingSettings};
pub use search::{CandidateSet, FitRecord, SearchConfig, SearchTrace, StoppingRule};
