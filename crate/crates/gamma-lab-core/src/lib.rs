//! Numerical laboratory for a weighted two-phase transition energy on a
//! domain with a distinguished boundary term, and for its sharp-interface
//! limit.
//!
//! The diffuse energy couples three terms at a small parameter eps:
//!
//!   F_eps(u) = eps^{p-2}     int_Omega |Du|^p h^{2-p}
//!            + eps^{-(p-2)/(p-1)} int_Omega W(u) h^{(p-2)/(p-1)}
//!            + eps^{-1/2}    int_bdry V(Tu)
//!
//! with h the distance to the boundary, W and V double wells, and p in (2,3).
//! Its limit concentrates on interfaces: a surface tension sigma_p per unit
//! interface length, a wall cost c_p |Wcal(Tu) - Wcal(v)| where the bulk
//! trace disagrees with the boundary phase, and a line tension gamma_p per
//! boundary phase jump. This crate evaluates the discrete functionals, the
//! optimal transition profiles, the recovery constructions, and the limit
//! functional, and cross-checks the structural inequalities relating them.

pub mod experiments;
pub mod functionals;
pub mod geometry;
pub mod limit;
pub mod minimize;
pub mod par;
pub mod potentials;
pub mod profiles;
pub mod quad;
