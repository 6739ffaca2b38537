// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops mirror the per-robot maths; tungstenite errors are large by design.
#![allow(
    clippy::needless_range_loop,
    clippy::result_large_err,
    clippy::large_enum_variant
)]

pub mod allocation;
pub mod controller;
pub mod harness;
pub mod math;
pub mod qp;
pub mod sim;
pub mod teleop;
