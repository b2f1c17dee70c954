//! Valuation of variable annuities with accumulation, surrender and death
//! benefits in a discrete-time affine insurance-finance model.
//!
//! * [`affine`]: factor coordinates, one-step log-MGFs and sampling.
//! * [`stopping`]: cumulative hazards, survival copulas and atom probabilities.
//! * [`recursion`]: exponent selector, coefficient tables and kernels.
//! * [`contract`]: contract data, guarantee, fund and settlement.
//! * [`pricing`]: closed-form legs and damped Fourier calls.
//! * [`oracle`]: Monte Carlo reference values.
//! * [`config`]: JSON inputs.

pub mod affine;
pub mod config;
pub mod contract;
pub mod error;
pub mod oracle;
pub mod pricing;
pub mod recursion;
pub mod stopping;

pub use affine::{AffineModel, FactorCoordinate, MarketSpec, YLoading, ZPath, C64};
pub use contract::VaContract;
pub use error::{Error, Result};
pub use oracle::{
    compare, mc_leg, mc_price, simulate, Leg, McEstimate, McMode, McReport, PathEnsemble, Verdict,
};
pub use pricing::{
    fourier_damped_call, price_db, price_gmab, price_premium_leg, price_sb, price_va,
    solve_fair_guarantee, PriceReport, QuadRule, QuadratureSpec, Valuation,
};
pub use recursion::{
    build_table, expectation_kernel, kappa, q_cap, CoefficientTable, Engine, Fault, KappaBranch,
    LegSpec,
};
pub use stopping::{
    atom_prob, cum_hazard, gamma_surface, sample_times, Atom, HazardPath, IntensityLoading,
    Loadings, SurvivalCopula,
};
