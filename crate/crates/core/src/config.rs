//! JSON configuration files for the model, the contract and the loadings.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::affine::{AffineModel, FactorCoordinate, MarketSpec};
use crate::contract::VaContract;
use crate::error::{Error, Result};
use crate::stopping::Loadings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    /// Required unless `enforce_martingale` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
    pub a: Vec<f64>,
    #[serde(default)]
    pub enforce_martingale: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub x_coords: Vec<FactorCoordinate>,
    pub y_coords: Vec<FactorCoordinate>,
    pub z0: Vec<f64>,
    pub market: MarketConfig,
}

impl ModelConfig {
    pub fn build(&self) -> Result<(AffineModel, MarketSpec)> {
        let model = AffineModel::new(
            self.x_coords.clone(),
            self.y_coords.clone(),
            self.z0.clone(),
        )?;
        let mc = &self.market;
        let market = if mc.enforce_martingale {
            let mkt = MarketSpec::martingale(&model, mc.a.clone())?;
            if let Some(a0) = mc.a0 {
                if (a0 - mkt.a0).abs() > 1e-10 * (1.0 + a0.abs()) {
                    return Err(Error::Martingale(format!(
                        "market.a0 = {a0} differs from the martingale drift {}",
                        mkt.a0
                    )));
                }
            }
            mkt
        } else {
            let a0 = mc.a0.ok_or_else(|| {
                Error::config("market.a0 is required unless enforce_martingale is set")
            })?;
            MarketSpec::new(&model, a0, mc.a.clone())?
        };
        Ok((model, market))
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

pub fn load_model(path: &Path) -> Result<(AffineModel, MarketSpec)> {
    read_json::<ModelConfig>(path)?.build()
}

pub fn load_contract(path: &Path) -> Result<VaContract> {
    let c: VaContract = read_json(path)?;
    c.validate()?;
    Ok(c)
}

pub fn load_loadings(path: &Path, model: &AffineModel) -> Result<Loadings> {
    let l: Loadings = read_json(path)?;
    l.validate(model)?;
    Ok(l)
}
