//! Algebraic state-tracking tasks and the sequence models that solve them.
//!
//! The crate has five parts:
//!
//! - [`algebra`]: finite groups as explicit Cayley tables, word problems and
//!   prefix-product labeling, solvability diagnostics.
//! - [`chess`]: a reduction from permutation composition to chess state
//!   tracking in source/target move notation, with a geometric board
//!   simulator.
//! - [`ssm`]: generalized linear state-space layers in several transition
//!   parameterizations, evaluated in recurrent, convolutional, and
//!   associative-scan forms.
//! - [`constructions`]: exact weight constructions compiling a DFA into a
//!   one-layer input-dependent SSM or a one-layer nonlinear RNN-SSM.
//! - [`logfloat`]: a sign-magnitude mantissa/exponent float datatype with
//!   exact iterated arithmetic backed by big-integer scaling, plus
//!   Taylor-series nonlinearities evaluated in exact rational arithmetic.

pub mod algebra;
pub mod chess;
pub mod constructions;
pub mod logfloat;
pub mod mat;
pub mod ssm;
