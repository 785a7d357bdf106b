pub mod bound;
pub mod gen;
pub mod mc;
pub mod reduce;
pub mod simulate;
pub mod validate;
