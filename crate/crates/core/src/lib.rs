pub mod entropy;
pub mod harness;
pub mod mde;
pub mod model;
pub mod numerics;
pub mod spectra;
pub mod transfer;
