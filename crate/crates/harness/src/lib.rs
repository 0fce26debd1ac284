//! Training harness for the state-tracking task suite.

pub mod autograd;
