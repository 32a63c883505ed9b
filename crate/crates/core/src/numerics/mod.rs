pub mod quad;
pub mod sweep;

pub use quad::{integrate_1d, integrate_2d, pairwise_sum};
