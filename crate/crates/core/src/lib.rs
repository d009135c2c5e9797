//! Max-min Lyapunov certificates for state-dependent switched systems.

pub mod certify;
pub mod filippovsim;
pub mod inclusion;
pub mod maxmin;
pub mod numkernel;
pub mod problem;
pub mod sampling;
pub mod setderiv;
pub mod sysdsl;
