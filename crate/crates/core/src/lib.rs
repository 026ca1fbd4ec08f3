//! Spectral simulation toolkit for diffusive equations `d_t f + F(|D|) f = 1_omega h`
//! on a periodic box: multiplier semigroups, thick control supports, feedback
//! stabilization with Lyapunov certificates, observability estimates and the
//! Bernstein moment sequences behind quasi-analytic regularity.

pub mod band;
pub mod error;
pub mod io;
pub mod probe;
pub mod observability;
pub mod qa;
pub mod spectral;
pub mod stabilizer;
pub mod symbol;
pub mod thick;

pub use error::{Error, Result};
pub use probe::{sample_probe, GaussianProbe};
pub use spectral::{
    apply_semigroup, make_grid, project_ball, restricted_norm, Grid, SpectralField, Spectrum,
};
pub use symbol::{alpha_r, inf_f, InfResult, MultiplierSymbol, SymbolFamily};
pub use thick::{
    make_ball_complement, make_periodic_thick, make_random_thick, thickness_certificate,
    SupportMask,
};
