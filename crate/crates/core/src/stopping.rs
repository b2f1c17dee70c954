//! Doubly stochastic mortality and surrender times.
//!
//! Each time is `tau = inf{t >= 1 : Lambda_t >= E}` (`T + 1` if never) for an
//! affine cumulative hazard `Lambda` and a unit exponential threshold `E`.
//! The thresholds of mortality and surrender are coupled through a survival
//! copula, which determines the joint survival surface
//! `Gamma(t1, t2) = P(tau_m > t1, tau_s > t2 | F_T)`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma as GammaDist};
use serde::{Deserialize, Serialize};

use crate::affine::{check_len, AffineModel, FactorCoordinate, ZPath};
use crate::error::{Error, Result};

/// Cumulative hazard loading `Lambda_t = b0 + sum_{s<=t} (b . X_s + c . Y_s)`,
/// with `b0` implied by `Lambda_0 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityLoading {
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl IntensityLoading {
    pub fn zero(model: &AffineModel) -> Self {
        Self {
            b: vec![0.0; model.d1()],
            c: vec![0.0; model.d2()],
        }
    }

    /// Check dimensions and that increments are nonnegative on the state space.
    pub fn validate(&self, model: &AffineModel, name: &str) -> Result<()> {
        check_len(&format!("{name}.b"), model.d1(), self.b.len())?;
        check_len(&format!("{name}.c"), model.d2(), self.c.len())?;
        let coords = model
            .x_coords()
            .iter()
            .zip(&self.b)
            .chain(model.y_coords().iter().zip(&self.c));
        for (i, (coord, &w)) in coords.enumerate() {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::config(format!(
                    "{name}: loading entry {i} must be finite and >= 0"
                )));
            }
            if w != 0.0 && !coord.is_nonnegative() {
                return Err(Error::config(format!(
                    "{name}: loading entry {i} is on a Gaussian coordinate and must be 0"
                )));
            }
        }
        Ok(())
    }

    /// `b0 = -(b . X_0 + c . Y_0)`.
    pub fn b0(&self, model: &AffineModel) -> f64 {
        -self.increment(model.x0(), model.y0())
    }

    pub fn increment(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(&self.b, x) + dot(&self.c, y)
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            b: self.b.iter().map(|v| v * k).collect(),
            c: self.c.iter().map(|v| v * k).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.b.iter().chain(&self.c).all(|v| *v == 0.0)
    }

    /// Constant hazard `h` per period through a `constant_one` X coordinate.
    pub fn deterministic(model: &AffineModel, h: f64) -> Result<Self> {
        let idx = model
            .x_coords()
            .iter()
            .position(|c| matches!(c, FactorCoordinate::ConstantOne))
            .ok_or_else(|| Error::config("model has no constant_one X coordinate"))?;
        let mut l = Self::zero(model);
        l.b[idx] = h;
        Ok(l)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurvivalCopula {
    #[default]
    Independence,
    Clayton {
        theta: f64,
    },
}

impl SurvivalCopula {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SurvivalCopula::Independence => Ok(()),
            SurvivalCopula::Clayton { theta } if theta > 0.0 && theta.is_finite() => Ok(()),
            SurvivalCopula::Clayton { theta } => Err(Error::config(format!(
                "clayton theta must be > 0, got {theta}"
            ))),
        }
    }

    /// `C(u, v) = P(exp(-E_m) < u, exp(-E_s) < v)`.
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        match *self {
            SurvivalCopula::Independence => u * v,
            SurvivalCopula::Clayton { theta } => {
                if u <= 0.0 || v <= 0.0 {
                    return 0.0;
                }
                if u >= 1.0 {
                    return v.min(1.0);
                }
                if v >= 1.0 {
                    return u;
                }
                (u.powf(-theta) + v.powf(-theta) - 1.0).powf(-1.0 / theta)
            }
        }
    }

    /// Draw the exponential thresholds `(E_m, E_s)`.
    pub fn sample_thresholds<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match *self {
            SurvivalCopula::Independence => (Exp1.sample(rng), Exp1.sample(rng)),
            SurvivalCopula::Clayton { theta } => {
                // Marshall-Olkin: U_i = (1 + V_i / W)^{-1/theta}, W ~ Gamma(1/theta, 1)
                let w: f64 = GammaDist::new(1.0 / theta, 1.0)
                    .expect("theta > 0")
                    .sample(rng);
                let v1: f64 = Exp1.sample(rng);
                let v2: f64 = Exp1.sample(rng);
                ((v1 / w).ln_1p() / theta, (v2 / w).ln_1p() / theta)
            }
        }
    }
}

/// Mortality and surrender loadings with their threshold copula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loadings {
    pub mortality: IntensityLoading,
    pub surrender: IntensityLoading,
    #[serde(default)]
    pub copula: SurvivalCopula,
}

impl Loadings {
    pub fn validate(&self, model: &AffineModel) -> Result<()> {
        self.mortality.validate(model, "mortality")?;
        self.surrender.validate(model, "surrender")?;
        self.copula.validate()
    }

    pub fn independent(mortality: IntensityLoading, surrender: IntensityLoading) -> Self {
        Self {
            mortality,
            surrender,
            copula: SurvivalCopula::Independence,
        }
    }

    pub fn zero(model: &AffineModel) -> Self {
        Self::independent(IntensityLoading::zero(model), IntensityLoading::zero(model))
    }

    pub fn with_scales(&self, k_m: f64, k_s: f64) -> Self {
        Self {
            mortality: self.mortality.scaled(k_m),
            surrender: self.surrender.scaled(k_s),
            copula: self.copula,
        }
    }
}

/// Cumulative hazard values `Lambda_0 = 0, ..., Lambda_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardPath {
    values: Vec<f64>,
}

impl HazardPath {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.first() != Some(&0.0) {
            return Err(Error::config("hazard path must start at 0"));
        }
        for t in 1..values.len() {
            let inc = values[t] - values[t - 1];
            if inc.is_nan() || inc < 0.0 {
                return Err(Error::NegativeIncrement {
                    time: t,
                    increment: inc,
                });
            }
        }
        Ok(Self { values })
    }

    /// Deterministic hazard `h` per period.
    pub fn linear(h: f64, horizon: usize) -> Self {
        Self {
            values: (0..=horizon).map(|t| h * t as f64).collect(),
        }
    }

    pub fn zero(horizon: usize) -> Self {
        Self::linear(0.0, horizon)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn at(&self, t: usize) -> f64 {
        self.values[t]
    }

    /// `exp(-Lambda_t)`, equal to 1 for `t < 0`.
    pub fn survival(&self, t: isize) -> f64 {
        if t < 0 {
            1.0
        } else {
            (-self.values[t as usize]).exp()
        }
    }

    /// `inf{t >= 1 : Lambda_t >= threshold}`, or `T + 1`.
    pub fn first_passage(&self, threshold: f64) -> usize {
        (1..self.values.len())
            .find(|&t| self.values[t] >= threshold)
            .unwrap_or(self.values.len())
    }
}

/// `Lambda_t = sum_{s=1}^t (b . X_s + c . Y_s)` along a realised path.
pub fn cum_hazard(path: &ZPath, loading: &IntensityLoading) -> Result<HazardPath> {
    check_len("cum_hazard b", path.x(0).len(), loading.b.len())?;
    check_len("cum_hazard c", path.y(0).len(), loading.c.len())?;
    let horizon = path.horizon();
    let mut values = Vec::with_capacity(horizon + 1);
    values.push(0.0);
    let mut acc = 0.0;
    for t in 1..=horizon {
        let inc = loading.increment(path.x(t), path.y(t));
        if inc < 0.0 {
            return Err(Error::NegativeIncrement {
                time: t,
                increment: inc,
            });
        }
        acc += inc;
        values.push(acc);
    }
    Ok(HazardPath { values })
}

/// Joint survival surface `Gamma(t1, t2)`; negative indices mean survival 1.
pub fn gamma_surface(
    t1: isize,
    t2: isize,
    l_m: &HazardPath,
    l_s: &HazardPath,
    copula: &SurvivalCopula,
) -> f64 {
    match copula {
        SurvivalCopula::Independence => {
            let lm = if t1 < 0 { 0.0 } else { l_m.at(t1 as usize) };
            let ls = if t2 < 0 { 0.0 } else { l_s.at(t2 as usize) };
            (-lm - ls).exp()
        }
        _ => copula.eval(l_m.survival(t1), l_s.survival(t2)),
    }
}

/// Events of the `F_T`-conditional atom decomposition at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Atom {
    /// `{tau_m > t, tau_s > t}`
    BothAlive,
    /// `{tau_m > t, tau_s = u}`
    Surrendered { u: usize },
    /// `{tau_m = u, tau_s > t}`
    Died { u: usize },
    /// `{tau_m = u, tau_s = v}`
    Joint { u: usize, v: usize },
}

/// Conditional probability of `atom` as seen at time `t`, given `F_T`.
///
/// Indices `u, v` may be any date up to the path horizon; the difference
/// formulas stay valid outside the strict `u < t` range.
pub fn atom_prob(
    atom: Atom,
    t: usize,
    l_m: &HazardPath,
    l_s: &HazardPath,
    copula: &SurvivalCopula,
) -> Result<f64> {
    let horizon = l_m.horizon().min(l_s.horizon());
    let check = |i: usize| {
        if i > horizon {
            Err(Error::Index(format!(
                "index {i} beyond hazard horizon {horizon}"
            )))
        } else {
            Ok(i as isize)
        }
    };
    let g = |a: isize, b: isize| gamma_surface(a, b, l_m, l_s, copula);
    let t = check(t)?;
    Ok(match atom {
        Atom::BothAlive => g(t, t),
        Atom::Surrendered { u } => {
            let u = check(u)?;
            g(t, u - 1) - g(t, u)
        }
        Atom::Died { u } => {
            let u = check(u)?;
            g(u - 1, t) - g(u, t)
        }
        Atom::Joint { u, v } => {
            let (u, v) = (check(u)?, check(v)?);
            g(u - 1, v - 1) - g(u, v - 1) - g(u - 1, v) + g(u, v)
        }
    })
}

/// `P(tau_s = t, tau_m >= t | F_T)`: surrender at `t`, ties with death count as surrender.
pub fn surrender_prob(
    t: usize,
    l_m: &HazardPath,
    l_s: &HazardPath,
    copula: &SurvivalCopula,
) -> f64 {
    let t = t as isize;
    gamma_surface(t - 1, t - 1, l_m, l_s, copula) - gamma_surface(t - 1, t, l_m, l_s, copula)
}

/// `P(tau_m = t, tau_s > t | F_T)`: death at `t` with no surrender through `t`.
pub fn death_prob(t: usize, l_m: &HazardPath, l_s: &HazardPath, copula: &SurvivalCopula) -> f64 {
    let t = t as isize;
    gamma_surface(t - 1, t, l_m, l_s, copula) - gamma_surface(t, t, l_m, l_s, copula)
}

/// Draw `(tau_m, tau_s)`, each in `1..=T+1`.
pub fn sample_times<R: Rng + ?Sized>(
    l_m: &HazardPath,
    l_s: &HazardPath,
    copula: &SurvivalCopula,
    rng: &mut R,
) -> (usize, usize) {
    let (e_m, e_s) = copula.sample_thresholds(rng);
    (l_m.first_passage(e_m), l_s.first_passage(e_s))
}

/// `E[A_tau 1{tau > t} | H_t]` on `{tau > t}` for a path-wise payment array
/// `a[s]`, `s = t+1..=T`, given the hazard path.
pub fn single_time_payoff_formula(a: &[f64], l: &HazardPath, t: usize) -> f64 {
    let horizon = l.horizon();
    let sum: f64 = (t + 1..=horizon)
        .map(|s| a[s] * (l.survival(s as isize - 1) - l.survival(s as isize)))
        .sum();
    l.at(t).exp() * sum
}

/// Conditional value on `{tau_m > t, tau_s > t}` of the payoff that pays
/// `a_m[tau_m]` if death strictly precedes surrender and `a_s[tau_s]` if
/// surrender comes first or ties, both only before `T`.
pub fn two_time_payoff_formula(
    a_m: &[f64],
    a_s: &[f64],
    l_m: &HazardPath,
    l_s: &HazardPath,
    copula: &SurvivalCopula,
    t: usize,
) -> Result<f64> {
    let horizon = l_m.horizon().min(l_s.horizon());
    let alive = atom_prob(Atom::BothAlive, t, l_m, l_s, copula)?;
    let mut sum = 0.0;
    for u in t + 1..horizon {
        let died = atom_prob(Atom::Died { u }, u, l_m, l_s, copula)?;
        let surrendered = atom_prob(Atom::Surrendered { u }, u - 1, l_m, l_s, copula)?;
        sum += a_m[u] * died + a_s[u] * surrendered;
    }
    Ok(sum / alive)
}
