pub mod export;
pub mod fit;
pub mod simulate;
pub mod validate;
