//! Driving factor process `Z = (X, Y)` in discrete time.
//!
//! `Y` is the public (financial) block, specified directly under the pricing
//! measure Q. `X` holds insurance-side factors whose law under P is given
//! conditionally on `(X_{t-1}, Y_t)`. Every coordinate belongs to one of three
//! families whose conditional log-MGF is affine in the state:
//!
//! * `constant_one`: point mass at 1, `log E[e^{u Z'}] = u`.
//! * `gaussian_ar1`: `Z' = mu + rho z + sigma N(0,1)`.
//! * `autoregressive_gamma`: `Z' | z ~ Gamma(k + P, eps)` with
//!   `P ~ Poisson(rho z / eps)`, optionally shifted by `eta * Y'_j`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Deterministic shift `eta * Y_t[index]` added to an X coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YLoading {
    pub index: usize,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactorCoordinate {
    ConstantOne,
    GaussianAr1 {
        mean_shift: f64,
        persistence: f64,
        volatility: f64,
    },
    AutoregressiveGamma {
        shape: f64,
        scale: f64,
        persistence: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        y_loading: Option<YLoading>,
    },
}

impl FactorCoordinate {
    pub fn gaussian(mean_shift: f64, persistence: f64, volatility: f64) -> Self {
        FactorCoordinate::GaussianAr1 {
            mean_shift,
            persistence,
            volatility,
        }
    }

    pub fn arg(shape: f64, scale: f64, persistence: f64) -> Self {
        FactorCoordinate::AutoregressiveGamma {
            shape,
            scale,
            persistence,
            y_loading: None,
        }
    }

    pub fn arg_loaded(shape: f64, scale: f64, persistence: f64, index: usize, eta: f64) -> Self {
        FactorCoordinate::AutoregressiveGamma {
            shape,
            scale,
            persistence,
            y_loading: Some(YLoading { index, eta }),
        }
    }

    /// Whether every reachable state is nonnegative.
    pub fn is_nonnegative(&self) -> bool {
        !matches!(self, FactorCoordinate::GaussianAr1 { .. })
    }

    /// Own-coordinate one-step coefficients `(A, B)` with
    /// `E[exp(u Z') | z] = exp(A(u) + B(u) z)`, ignoring any Y-loading.
    pub fn logmgf(&self, u: C64) -> Result<(C64, C64)> {
        match *self {
            FactorCoordinate::ConstantOne => Ok((C64::new(0.0, 0.0), u)),
            FactorCoordinate::GaussianAr1 {
                mean_shift,
                persistence,
                volatility,
            } => Ok((
                mean_shift * u + 0.5 * volatility * volatility * u * u,
                persistence * u,
            )),
            FactorCoordinate::AutoregressiveGamma {
                shape,
                scale,
                persistence,
                ..
            } => {
                if u.re * scale >= 1.0 || !u.re.is_finite() || !u.im.is_finite() {
                    return Err(Error::domain(
                        None,
                        format!(
                            "ARG argument re={:.6} outside strip re < 1/scale = {:.6}",
                            u.re,
                            1.0 / scale
                        ),
                    ));
                }
                let denom = 1.0 - u * scale;
                Ok((-shape * denom.ln(), persistence * u / denom))
            }
        }
    }

    fn validate(&self, role: &str, i: usize) -> Result<()> {
        let bad = |msg: &str| Err(Error::config(format!("{role}[{i}]: {msg}")));
        match *self {
            FactorCoordinate::ConstantOne => Ok(()),
            FactorCoordinate::GaussianAr1 {
                mean_shift,
                persistence,
                volatility,
            } => {
                if !(mean_shift.is_finite() && persistence.is_finite() && volatility.is_finite()) {
                    return bad("non-finite parameter");
                }
                if volatility < 0.0 {
                    return bad("volatility must be >= 0");
                }
                Ok(())
            }
            FactorCoordinate::AutoregressiveGamma {
                shape,
                scale,
                persistence,
                y_loading,
            } => {
                if !(shape > 0.0 && shape.is_finite()) {
                    return bad("shape must be > 0");
                }
                if !(scale > 0.0 && scale.is_finite()) {
                    return bad("scale must be > 0");
                }
                if !(persistence >= 0.0 && persistence.is_finite()) {
                    return bad("persistence must be >= 0");
                }
                if let Some(l) = y_loading {
                    if !(l.eta >= 0.0 && l.eta.is_finite()) {
                        return bad("y_loading eta must be >= 0");
                    }
                }
                Ok(())
            }
        }
    }

    fn draw<R: Rng + ?Sized>(
        &self,
        prev: f64,
        normal: &mut dyn FnMut() -> f64,
        rng: &mut R,
    ) -> f64 {
        match *self {
            FactorCoordinate::ConstantOne => 1.0,
            FactorCoordinate::GaussianAr1 {
                mean_shift,
                persistence,
                volatility,
            } => {
                let eps = if volatility > 0.0 { normal() } else { 0.0 };
                mean_shift + persistence * prev + volatility * eps
            }
            FactorCoordinate::AutoregressiveGamma {
                shape,
                scale,
                persistence,
                ..
            } => {
                let mean = persistence * prev.max(0.0) / scale;
                let p = if mean > 0.0 {
                    Poisson::new(mean)
                        .expect("finite positive Poisson mean")
                        .sample(rng)
                } else {
                    0.0
                };
                Gamma::new(shape + p, scale)
                    .expect("positive gamma parameters")
                    .sample(rng)
            }
        }
    }
}

/// The factor process: coordinate families for `X` (under P given `Y`) and
/// `Y` (under Q), plus the initial state `z0 = (x0, y0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineModel {
    x_coords: Vec<FactorCoordinate>,
    y_coords: Vec<FactorCoordinate>,
    z0: Vec<f64>,
}

impl AffineModel {
    pub fn new(
        x_coords: Vec<FactorCoordinate>,
        y_coords: Vec<FactorCoordinate>,
        z0: Vec<f64>,
    ) -> Result<Self> {
        if x_coords.is_empty() || y_coords.is_empty() {
            return Err(Error::config("x_coords and y_coords must be non-empty"));
        }
        let d = x_coords.len() + y_coords.len();
        if z0.len() != d {
            return Err(Error::Dimension {
                what: "z0".into(),
                expected: d,
                got: z0.len(),
            });
        }
        for (i, c) in x_coords.iter().enumerate() {
            c.validate("x_coords", i)?;
            if let FactorCoordinate::AutoregressiveGamma {
                y_loading: Some(l), ..
            } = c
            {
                let target = y_coords.get(l.index).ok_or_else(|| {
                    Error::config(format!(
                        "x_coords[{i}]: y_loading index {} out of range",
                        l.index
                    ))
                })?;
                if !target.is_nonnegative() {
                    return Err(Error::config(format!(
                        "x_coords[{i}]: y_loading must reference a nonnegative Y coordinate"
                    )));
                }
            }
        }
        for (i, c) in y_coords.iter().enumerate() {
            c.validate("y_coords", i)?;
            if let FactorCoordinate::AutoregressiveGamma {
                y_loading: Some(_), ..
            } = c
            {
                return Err(Error::config(format!(
                    "y_coords[{i}]: y_loading is only defined for X coordinates"
                )));
            }
        }
        let coords = x_coords.iter().chain(y_coords.iter());
        for (i, (c, &z)) in coords.zip(z0.iter()).enumerate() {
            if !z.is_finite() {
                return Err(Error::config(format!("z0[{i}] is not finite")));
            }
            match c {
                FactorCoordinate::ConstantOne if z != 1.0 => {
                    return Err(Error::config(format!(
                        "z0[{i}]: constant_one must start at 1"
                    )))
                }
                FactorCoordinate::AutoregressiveGamma { .. } if z < 0.0 => {
                    return Err(Error::config(format!("z0[{i}]: ARG state must be >= 0")))
                }
                _ => {}
            }
        }
        Ok(Self {
            x_coords,
            y_coords,
            z0,
        })
    }

    pub fn x_coords(&self) -> &[FactorCoordinate] {
        &self.x_coords
    }

    pub fn y_coords(&self) -> &[FactorCoordinate] {
        &self.y_coords
    }

    pub fn d1(&self) -> usize {
        self.x_coords.len()
    }

    pub fn d2(&self) -> usize {
        self.y_coords.len()
    }

    pub fn z0(&self) -> &[f64] {
        &self.z0
    }

    pub fn x0(&self) -> &[f64] {
        &self.z0[..self.d1()]
    }

    pub fn y0(&self) -> &[f64] {
        &self.z0[self.d1()..]
    }

    /// `E_Q[exp(u . Y_{t+1}) | Y_t] = exp(A_Q(u) + B_Q(u) . Y_t)`.
    pub fn logmgf_y_q(&self, u: &[C64]) -> Result<(C64, Vec<C64>)> {
        check_len("logmgf_y_q argument", self.d2(), u.len())?;
        let mut a = C64::new(0.0, 0.0);
        let mut b = Vec::with_capacity(u.len());
        for (c, &ui) in self.y_coords.iter().zip(u) {
            let (ai, bi) = c.logmgf(ui)?;
            a += ai;
            b.push(bi);
        }
        Ok((a, b))
    }

    /// `E_P[exp(u . X_t) | Y_t, X_{t-1}] = exp(alpha(u) + beta(u) . X_{t-1} + gamma(u) . Y_t)`.
    pub fn logmgf_x_p(&self, u: &[C64]) -> Result<(C64, Vec<C64>, Vec<C64>)> {
        check_len("logmgf_x_p argument", self.d1(), u.len())?;
        let mut alpha = C64::new(0.0, 0.0);
        let mut beta = Vec::with_capacity(u.len());
        let mut gamma = vec![C64::new(0.0, 0.0); self.d2()];
        for (c, &ui) in self.x_coords.iter().zip(u) {
            let (ai, bi) = c.logmgf(ui)?;
            alpha += ai;
            beta.push(bi);
            if let FactorCoordinate::AutoregressiveGamma {
                y_loading: Some(l), ..
            } = c
            {
                gamma[l.index] += l.eta * ui;
            }
        }
        Ok((alpha, beta, gamma))
    }

    /// One Q-step of `Y` from state `y`.
    pub fn step_y_q<R: Rng + ?Sized>(&self, y: &[f64], rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.d2()];
        // Gaussian innovations are drawn up front so `rng` is free for the rest.
        let draws = gaussian_draws(&self.y_coords, rng);
        let mut it = draws.into_iter();
        let mut src = || it.next().unwrap_or(0.0);
        self.step_y_into(y, &mut out, &mut src, rng);
        out
    }

    /// One P-step of `X` from `x` given the already drawn `y_next`.
    pub fn step_x_p<R: Rng + ?Sized>(&self, x: &[f64], y_next: &[f64], rng: &mut R) -> Vec<f64> {
        let mut out = vec![0.0; self.d1()];
        let draws = gaussian_draws(&self.x_coords, rng);
        let mut it = draws.into_iter();
        let mut src = || it.next().unwrap_or(0.0);
        self.step_x_into(x, y_next, &mut out, &mut src, rng);
        out
    }

    /// Y-step writing into `out`; Gaussian innovations come from `normal`.
    pub(crate) fn step_y_into<R: Rng + ?Sized>(
        &self,
        y: &[f64],
        out: &mut [f64],
        normal: &mut dyn FnMut() -> f64,
        rng: &mut R,
    ) {
        for ((c, &prev), o) in self.y_coords.iter().zip(y).zip(out.iter_mut()) {
            *o = c.draw(prev, normal, rng);
        }
    }

    pub(crate) fn step_x_into<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        y_next: &[f64],
        out: &mut [f64],
        normal: &mut dyn FnMut() -> f64,
        rng: &mut R,
    ) {
        for ((c, &prev), o) in self.x_coords.iter().zip(x).zip(out.iter_mut()) {
            let mut v = c.draw(prev, normal, rng);
            if let FactorCoordinate::AutoregressiveGamma {
                y_loading: Some(l), ..
            } = c
            {
                v += l.eta * y_next[l.index];
            }
            *o = v;
        }
    }
}

fn gaussian_draws<R: Rng + ?Sized>(coords: &[FactorCoordinate], rng: &mut R) -> Vec<f64> {
    coords
        .iter()
        .filter(
            |c| matches!(c, FactorCoordinate::GaussianAr1 { volatility, .. } if *volatility > 0.0),
        )
        .map(|_| StandardNormal.sample(rng))
        .collect()
}

pub(crate) fn check_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what: what.to_string(),
            expected,
            got,
        })
    }
}

/// A realised factor path `Z_0, ..., Z_T`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ZPath {
    d1: usize,
    d2: usize,
    data: Vec<f64>,
}

impl ZPath {
    pub fn zeros(d1: usize, d2: usize, horizon: usize) -> Self {
        Self {
            d1,
            d2,
            data: vec![0.0; (d1 + d2) * (horizon + 1)],
        }
    }

    /// Build from per-date states `(x_t, y_t)` concatenated.
    pub fn from_states(d1: usize, states: &[Vec<f64>]) -> Result<Self> {
        let d = states.first().map(Vec::len).unwrap_or(0);
        if d <= d1 {
            return Err(Error::config("state vectors must be longer than d1"));
        }
        let mut data = Vec::with_capacity(d * states.len());
        for s in states {
            check_len("ZPath state", d, s.len())?;
            data.extend_from_slice(s);
        }
        Ok(Self {
            d1,
            d2: d - d1,
            data,
        })
    }

    /// Last date `T`.
    pub fn horizon(&self) -> usize {
        self.data.len() / (self.d1 + self.d2) - 1
    }

    pub fn z(&self, t: usize) -> &[f64] {
        let d = self.d1 + self.d2;
        &self.data[t * d..(t + 1) * d]
    }

    pub fn z_mut(&mut self, t: usize) -> &mut [f64] {
        let d = self.d1 + self.d2;
        &mut self.data[t * d..(t + 1) * d]
    }

    pub fn x(&self, t: usize) -> &[f64] {
        &self.z(t)[..self.d1]
    }

    pub fn y(&self, t: usize) -> &[f64] {
        &self.z(t)[self.d1..]
    }
}

/// Discounted stock `S_t = exp(a0 t + a . Y_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketSpec {
    pub a0: f64,
    pub a: Vec<f64>,
}

/// Tolerance used when checking `B_Q(a) = a` for martingale calibration.
pub const MARTINGALE_TOL: f64 = 1e-12;

impl MarketSpec {
    /// Market with `a0` chosen so that `S` is a Q-martingale. Fails unless
    /// `B_Q(a) = a`, which the drift alone cannot repair.
    pub fn martingale(model: &AffineModel, a: Vec<f64>) -> Result<Self> {
        check_len("market.a", model.d2(), a.len())?;
        let ac: Vec<C64> = a.iter().map(|&v| C64::new(v, 0.0)).collect();
        let (aq, bq) = model.logmgf_y_q(&ac)?;
        for (j, (b, &aj)) in bq.iter().zip(&a).enumerate() {
            if (b.re - aj).abs() > MARTINGALE_TOL * (1.0 + aj.abs()) {
                return Err(Error::Martingale(format!(
                    "B_Q(a)[{j}] = {:.12} differs from a[{j}] = {aj}",
                    b.re
                )));
            }
        }
        Ok(Self { a0: -aq.re, a })
    }

    pub fn new(model: &AffineModel, a0: f64, a: Vec<f64>) -> Result<Self> {
        check_len("market.a", model.d2(), a.len())?;
        if !a0.is_finite() || a.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("market parameters must be finite"));
        }
        Ok(Self { a0, a })
    }

    pub fn a_complex(&self) -> Vec<C64> {
        self.a.iter().map(|&v| C64::new(v, 0.0)).collect()
    }

    pub fn log_price(&self, t: usize, y: &[f64]) -> f64 {
        self.a0 * t as f64 + self.a.iter().zip(y).map(|(a, y)| a * y).sum::<f64>()
    }

    pub fn price(&self, t: usize, y: &[f64]) -> f64 {
        self.log_price(t, y).exp()
    }

    /// `(A_Q(a) + a0, B_Q(a) - a)`; both vanish for a martingale.
    pub fn martingale_residual(&self, model: &AffineModel) -> Result<(f64, Vec<f64>)> {
        let (aq, bq) = model.logmgf_y_q(&self.a_complex())?;
        Ok((
            aq.re + self.a0,
            bq.iter().zip(&self.a).map(|(b, a)| b.re - a).collect(),
        ))
    }
}
