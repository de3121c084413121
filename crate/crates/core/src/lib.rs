//! Geometric phases and holonomic gates for isospectral finite-level systems.
//!
//! The crate follows one eigenspace of a Hamiltonian family `H(λ) = V(λ) H₀ V(λ)†`
//! around a closed loop in parameter space and computes
//!
//! - the Abelian Berry phase of a nondegenerate level,
//! - the non-Abelian (Wilczek–Zee) connection and holonomy of a degenerate level,
//!
//! using eigenvectors written in homogeneous coordinates: a level of degeneracy `d`
//! is spanned by vectors `(ξ_a, c_a)`, where `ξ_a` solves a linear system built from an
//! `(n−d)`-row minor of `H − E` and `c_a` is the `a`-th standard basis vector.
//! Those vectors are orthonormalized through their Gram matrices `Γ_a = 1 + Z_a†Z_a`.
//!
//! Results are cross-checked against a direct integration of the Schrödinger
//! equation ([`oracle`]) and against a projector-product transport ([`holonomy`]).
//! The [`gates`] module realizes the root gates `exp(ζE_α − ζ*E_{−α})` of su(n),
//! decomposes SU(n) targets into them and builds the bosonic realization
//! `E_ij = a_i†a_j` on fixed-excitation Fock sectors.
//!
//! Conventions used throughout:
//!
//! - Connection components are stored as `A_ab = i⟨z_b|∂z_a⟩` (Hermitian).
//! - A holonomy `U` is reported in the row convention: a state started in frame
//!   vector `z_a(λ₀)` returns as `e^{−iET} Σ_b U_ab z_b(λ₀)`. With this convention
//!   `U = Pexp(i∮A)` with earlier path segments on the left, and a frame rotation
//!   `z'_a = Σ_b G_ab z_b` maps `U` to `G(λ₀) U G(λ₀)†`.

#![forbid(unsafe_code)]
// `!(x < tol)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod connection;
pub mod error;
pub mod frames;
pub mod gates;
pub mod holonomy;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod report;

pub use connection::ConnectionSample;
pub use error::{Error, Result};
pub use frames::{Chart, Frame, FramePath, Xi};
pub use gates::{FockSector, GateSequence, RootDatum, RootGate};
pub use holonomy::{Holonomy, Method, TransportPath};
pub use linalg::{CMatrix, C64};
pub use model::{LoopSamples, LoopSpec, ModelSpec, SpectralData};
pub use oracle::OracleResult;
