//! Proximal point algorithm under a general metric, performance-estimation
//! SDPs for its worst case, and exact dual certificates for the rate
//! `‖g_N‖_{B⁻¹} <= R / Σα`.

pub mod certificate;
pub mod cli;
pub mod dd;
pub mod families;
pub mod linalg;
pub mod pep;
pub mod ppa;
pub mod qp;
pub mod schedule;
pub mod sdp;
pub mod worstcase;

