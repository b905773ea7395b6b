//! Coderivative-based generalized Newton methods for `C^{1,1}` and
//! nonsmooth convex composite optimization.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod linalg;
pub mod linesearch;
pub mod newton;
pub mod prox;
pub mod matrix;
pub mod fbe;
pub mod alm;
pub mod data;
pub mod bench;
pub mod checks;
