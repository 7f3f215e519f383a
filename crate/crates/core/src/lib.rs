//! Outcome tests of bias for ranked lists.
//!
//! A Ranker (human or algorithmic) turns each query's candidate set into a
//! ranked list; an Auditor sees only the rank-ordered outcomes and group
//! labels. If the Ranker maximizes a weighted sum of outcomes with strictly
//! decreasing positive rank weights and no direct dependence on group status,
//! then for every group configuration the mean outcome at a rank must be at
//! least the mean outcome at the rank below. This crate builds those
//! adjacent-rank moment inequalities from ranked-list logs, tests them
//! pointwise and jointly with least-favorable critical values, simulates
//! biased and unbiased rankers for size/power studies, and checks the
//! converse: any finite-support distribution satisfying the inequalities is
//! reproduced exactly by an explicit latent information structure.
//!
//! Modules:
//! - [`model`] — ranked-list records, rank weights, DCG/NDCG, sorting oracle
//! - [`moments`] — moment families and their estimation
//! - [`inference`] — pointwise t-tests and joint max-statistic tests
//! - [`simulate`] — synthetic rankers and Monte Carlo harnesses
//! - [`rationalize`] — inequality checker and rationalizing construction

pub mod inference;
pub mod model;
pub mod moments;
pub mod rationalize;
pub mod rng;
pub mod simulate;

pub use model::{Dataset, Entry, QueryRecord, WeightScheme};
pub use moments::{Adjustment, Conditioning, MomentEstimate, MomentSpec};
