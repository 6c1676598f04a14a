//! Grid containers, circular shifts, map I/O and the seeded generator.

mod grid;
pub mod io;
mod rng;

pub use grid::{inverse_shift, shift2d_g1, shift2d_g3, Grid1, Grid3};
pub use rng::{gen_shift_seed, SeedRng};
