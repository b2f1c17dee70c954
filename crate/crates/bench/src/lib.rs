//! Shared fixtures for the benchmarks.

use std::path::PathBuf;

use va_affine::config::{load_contract, load_loadings, load_model};
use va_affine::{AffineModel, Loadings, MarketSpec, VaContract};

pub struct Fixture {
    pub model: AffineModel,
    pub market: MarketSpec,
    pub contract: VaContract,
    pub loadings: Loadings,
}

/// The reference configuration shipped under `configs/reference`.
pub fn reference() -> Fixture {
    let d = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference");
    let (model, market) = load_model(&d.join("model.json")).expect("reference model");
    let contract = load_contract(&d.join("contract.json")).expect("reference contract");
    let loadings = load_loadings(&d.join("loadings.json"), &model).expect("reference loadings");
    Fixture {
        model,
        market,
        contract,
        loadings,
    }
}

/// Reference contract stretched to `maturity` periods.
pub fn with_maturity(f: &Fixture, maturity: usize) -> VaContract {
    let mut c = f.contract.clone();
    c.maturity = maturity;
    c.discount_factors = vec![c.discount_factors[0]; maturity];
    c
}
