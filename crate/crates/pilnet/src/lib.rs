pub mod bridge;
pub mod calculus;
pub mod coalescence;
pub mod dot;
pub mod equivalence;
pub mod flattening;
pub mod structure;
pub mod substitution;
pub mod syntax;
