// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod events;
pub mod ids;
pub mod kernel;
pub mod mplsctl;
pub mod netshell;
pub mod scenario;
