//! Feature-relevance screening by ranking random feature subsets.
//!
//! Many random size-k subsets of the features are drawn, one base model is
//! fit per subset, and the subsets are ranked by in-sample accuracy. A
//! feature whose subsets rank better than chance is kept; the test is a
//! one-sided Wilcoxon rank-sum test on the average rank of the subsets that
//! contain it.

pub mod dataset;
pub mod learners;
pub mod sampler;
pub mod harvest;
pub mod ranktest;
pub mod simulate;
pub mod config;
pub mod report;
pub mod cli;
