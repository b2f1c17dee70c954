use std::path::Path;

use va_affine::config::{load_contract, load_loadings, load_model};
use va_affine::{AffineModel, Error, Loadings, MarketSpec, QuadratureSpec, VaContract};

use crate::{InputArgs, QuadArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("cannot write {path}: {detail}")]
    Write { path: String, detail: String },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e {
                Error::Config(_)
                | Error::Dimension { .. }
                | Error::Index(_)
                | Error::Martingale(_)
                | Error::Mode(_) => 2,
                Error::Domain { .. }
                | Error::Overflow { .. }
                | Error::NegativeIncrement { .. }
                | Error::NonpositivePrice { .. }
                | Error::UnsupportedCopula(_)
                | Error::UnsupportedContract(_)
                | Error::Bracket { .. } => 3,
            },
            CliError::Write { .. } | CliError::Usage(_) => 2,
        }
    }

    pub fn write(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Write {
            path: path.display().to_string(),
            detail: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub struct Inputs {
    pub model: AffineModel,
    pub market: MarketSpec,
    pub contract: VaContract,
    pub loadings: Loadings,
}

impl Inputs {
    pub fn load(args: &InputArgs) -> CliResult<Self> {
        let (model, market) = load_model(&args.model)?;
        let contract = load_contract(&args.contract)?;
        let loadings = load_loadings(&args.loadings, &model)?;
        Ok(Self {
            model,
            market,
            contract,
            loadings,
        })
    }
}

pub fn quadrature(q: &QuadArgs) -> CliResult<QuadratureSpec> {
    let d = QuadratureSpec::default();
    let spec = QuadratureSpec {
        w: q.w.unwrap_or(d.w),
        n_nodes: q.nodes.unwrap_or(d.n_nodes),
        lambda_max: q.lambda_max.unwrap_or(d.lambda_max),
        rule: d.rule,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn write_output(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::write(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
