//! Multirole logic: a proof kernel for MRL, MRLJ and LMRL with executable
//! multiparty cut elimination, session types rooted in LMRL, a deterministic
//! multiparty channel runtime and a linear multi-threaded lambda calculus.

pub mod kernel;
pub mod logic;
pub mod mtlc;
pub mod runtime;
pub mod roles;
pub mod session;
