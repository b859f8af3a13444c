//! Joint entity alignment and dangling-entity detection for knowledge
//! graphs via semi-constraint optimal transport.
//!
//! Two KGs are aligned by (1) embedding entity names with pretrained word
//! vectors, (2) extracting mutually-exclusive high-similarity pseudo pairs,
//! (3) training a small graph encoder with a contrastive margin loss guided
//! by those pairs, and (4) solving a transport program over the top-K
//! Manhattan costs in which per-side virtual entities absorb everything
//! that has no counterpart. The transport program is a mixed integer
//! program solved by branch-and-cut over an in-crate simplex; dangling
//! entities fall out of the solution as whatever was routed to a virtual
//! entity.
//!
//! The `examples/` directory is the guided tour — one runnable program per
//! capability:
//!
//! ```bash
//! cargo run --release --example pseudo_pairs      # name embeddings -> anchor pairs
//! cargo run --release --example train_encoder     # contrastive metric learning
//! cargo run --release --example solve_transport   # build + solve one instance
//! cargo run --release --example lp_and_mip        # the simplex/branch-and-cut layer
//! cargo run --release --example baselines         # greedy and deferred acceptance
//! cargo run --release --example grid_search       # picking the virtual costs
//! cargo run --release --example end_to_end        # synthetic KGs through the full pipeline
//! ```
//!
//! The same steps are scriptable through the thin `sot-align` binary; see
//! the README for the file formats it reads and writes.

pub mod config;
pub mod cost;
pub mod error;
pub mod eval;
pub mod kg;
pub mod metric;
pub mod pipeline;
pub mod solver;
pub mod synth;
pub mod text;

pub use error::{Result, SotError};
