// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod braid;
pub mod chart;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod flow;
pub mod profile;
pub mod qm;
pub mod quad;
pub mod run;
pub mod seifert;
pub mod trace;
