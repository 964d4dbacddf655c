pub mod dictionary;
pub mod error;
pub mod gauss_tail;
pub mod harness;
pub mod interference;
pub mod cone;
pub mod config;
pub mod linalg;
pub mod nnls;
pub mod phase;
pub mod rng;
pub mod spectra;
