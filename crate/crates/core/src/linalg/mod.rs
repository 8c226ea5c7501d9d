//! Dense eigensolvers.

mod general;
mod symmetric;

pub use general::{eig_general, GeneralEigen};
pub use symmetric::{eig_symmetric, LaplacianSpectrum};
