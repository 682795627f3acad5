pub mod ablate;
pub mod degrade;
pub mod eval;
pub mod saliency;
pub mod sr;
pub mod train;
