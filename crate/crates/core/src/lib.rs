//! Moving-domain semilinear heat problems, pulled back to a fixed domain.

pub mod cli;
pub mod diffeo;
pub mod expr;
pub mod fixtures;
pub mod grid;
pub mod problem;
pub mod pullback;
pub mod solver;
