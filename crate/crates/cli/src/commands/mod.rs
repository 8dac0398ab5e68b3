pub mod crossval;
pub mod eval;
pub mod extract;
pub mod simulate;
pub mod sweep;
pub mod train;
