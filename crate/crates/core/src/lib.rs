pub mod check;
pub mod config;
pub mod csv;
pub mod diagnostics;
pub mod frank;
pub mod grid;
pub mod initial;
pub mod reference;
pub mod run;
pub mod snapshot;
pub mod solver;
