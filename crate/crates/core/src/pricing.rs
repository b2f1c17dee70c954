//! Closed-form time-0 values of the four contract legs.
//!
//! All legs assume independent mortality and surrender thresholds. Option
//! legs (GMAB, DB) use a damped Fourier representation of the call payoff
//! and are restricted to single-payment contracts.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affine::{AffineModel, FactorCoordinate, MarketSpec, C64};
use crate::contract::VaContract;
use crate::error::{Error, Result};
use crate::recursion::{Engine, Fault, LegSpec};
use crate::stopping::{Loadings, SurvivalCopula};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadRule {
    Trapezoid,
    GaussLegendre,
}

/// Truncated integration of the damped transform over `lambda in [0, lambda_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub w: f64,
    pub lambda_max: f64,
    pub n_nodes: usize,
    pub rule: QuadRule,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            w: 2.0,
            lambda_max: 200.0,
            n_nodes: 400,
            rule: QuadRule::GaussLegendre,
        }
    }
}

/// Nodes per Gauss-Legendre panel.
const PANEL: usize = 16;

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.w > 1.0 && self.w.is_finite()) {
            return Err(Error::config(format!(
                "damping w must be > 1, got {}",
                self.w
            )));
        }
        if !(self.lambda_max > 0.0 && self.lambda_max.is_finite()) {
            return Err(Error::config("lambda_max must be > 0"));
        }
        if self.n_nodes == 0 {
            return Err(Error::config("n_nodes must be positive"));
        }
        Ok(())
    }

    /// `(lambda, weight)` pairs on `[0, lambda_max]`.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let l = self.lambda_max;
        match self.rule {
            QuadRule::Trapezoid => {
                let h = l / self.n_nodes as f64;
                (0..=self.n_nodes)
                    .map(|i| {
                        let wt = if i == 0 || i == self.n_nodes {
                            h / 2.0
                        } else {
                            h
                        };
                        (i as f64 * h, wt)
                    })
                    .collect()
            }
            QuadRule::GaussLegendre => {
                let (x, wt) = legendre_16();
                // panel edges l (j/P)^2: narrow near the poles at z = 0, 1
                let panels = self.n_nodes.div_ceil(PANEL);
                let edge = |j: usize| l * (j as f64 / panels as f64).powi(2);
                (0..panels)
                    .flat_map(|p| {
                        let lo = edge(p);
                        let width = edge(p + 1) - lo;
                        x.iter()
                            .zip(wt)
                            .map(move |(xi, wi)| (lo + 0.5 * width * (xi + 1.0), 0.5 * width * wi))
                    })
                    .collect()
            }
        }
    }
}

fn legendre_16() -> &'static (Vec<f64>, Vec<f64>) {
    static NODES: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    NODES.get_or_init(|| gauss_legendre(PANEL))
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wt = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wt;
        w[n - 1 - i] = wt;
    }
    (x, w)
}

/// Call value with an estimate of the truncated tail mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourierValue {
    pub value: f64,
    pub tail: f64,
}

/// `E[(R - K)^+ D]` for `R = exp(Abar) X` from the transform
/// `z -> E[X^z D]`, integrated along `Re z = w`.
///
/// A nonpositive strike returns `E[R D] - K E[D]` directly.
pub fn fourier_damped_call<F>(
    transform: F,
    strike: f64,
    abar: f64,
    quad: &QuadratureSpec,
) -> Result<FourierValue>
where
    F: Fn(C64) -> Result<C64> + Sync,
{
    damped_call(transform, strike, abar, quad, false)
}

fn damped_call<F>(
    transform: F,
    strike: f64,
    abar: f64,
    quad: &QuadratureSpec,
    doubled: bool,
) -> Result<FourierValue>
where
    F: Fn(C64) -> Result<C64> + Sync,
{
    quad.validate()?;
    if strike <= 0.0 {
        let fwd = transform(C64::new(1.0, 0.0))?.re * abar.exp();
        let mass = if strike < 0.0 {
            transform(C64::new(0.0, 0.0))?.re
        } else {
            0.0
        };
        return Ok(FourierValue {
            value: fwd - strike * mass,
            tail: 0.0,
        });
    }
    let ln_k = strike.ln();
    let mut norm = 1.0 / PI;
    if doubled {
        norm /= 2.0 * PI;
    }
    let integrand = |lambda: f64| -> Result<f64> {
        let z = C64::new(quad.w, lambda);
        let t = transform(z)?;
        let f = (z * abar + (1.0 - z) * ln_k).exp() * t / (z * (z - 1.0));
        Ok(norm * f.re)
    };
    let nodes = quad.nodes();
    let vals: Vec<f64> = nodes
        .par_iter()
        .map(|&(l, wt)| integrand(l).map(|v| wt * v))
        .collect::<Result<_>>()?;
    let value = vals.iter().sum();
    let tail = integrand(quad.lambda_max)?.abs() * quad.lambda_max;
    Ok(FourierValue { value, tail })
}

/// Diagnostics attached to a price report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Diagnostics {
    pub quadrature: Option<QuadratureSpec>,
    /// Largest tail estimate over all Fourier integrals.
    pub max_tail_estimate: f64,
    /// `max |A_Q(a) + a0|, |B_Q(a) - a|`.
    pub martingale_residual: f64,
    /// Smallest gap `1/eps - w a_j` over gamma-type stock coordinates.
    pub domain_margin: Option<f64>,
    pub premium_terms: Vec<f64>,
    /// SB contribution of each grid period.
    pub sb_terms: Vec<f64>,
    pub gmab_guarantee_term: f64,
    pub gmab_call_term: f64,
    /// DB contribution of each death date.
    pub db_terms: Vec<f64>,
    /// Standard errors of legs that were estimated by simulation.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub mc_stderr: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceReport {
    pub premium_leg: f64,
    pub gmab: f64,
    pub sb: f64,
    pub db: f64,
    pub va_total: f64,
    pub diagnostics: Diagnostics,
}

impl PriceReport {
    pub fn assemble(
        premium_leg: f64,
        gmab: f64,
        sb: f64,
        db: f64,
        diagnostics: Diagnostics,
    ) -> Self {
        Self {
            premium_leg,
            gmab,
            sb,
            db,
            va_total: premium_leg + gmab + sb + db,
            diagnostics,
        }
    }

    /// Flat `(name, value)` rows: the legs followed by scalar diagnostics.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let d = &self.diagnostics;
        let mut rows = vec![
            ("premium_leg".to_string(), self.premium_leg),
            ("gmab".into(), self.gmab),
            ("sb".into(), self.sb),
            ("db".into(), self.db),
            ("va_total".into(), self.va_total),
            ("max_tail_estimate".into(), d.max_tail_estimate),
            ("martingale_residual".into(), d.martingale_residual),
            ("gmab_guarantee_term".into(), d.gmab_guarantee_term),
            ("gmab_call_term".into(), d.gmab_call_term),
        ];
        if let Some(m) = d.domain_margin {
            rows.push(("domain_margin".into(), m));
        }
        rows.extend(
            d.sb_terms
                .iter()
                .enumerate()
                .map(|(k, v)| (format!("sb_period_{}", k + 1), *v)),
        );
        rows.extend(
            d.db_terms
                .iter()
                .enumerate()
                .map(|(t, v)| (format!("db_death_{}", t + 1), *v)),
        );
        rows.extend(d.mc_stderr.iter().map(|(k, v)| (format!("{k}_stderr"), *v)));
        rows
    }
}

/// Everything needed to value one contract.
#[derive(Debug, Clone, Copy)]
pub struct Valuation<'a> {
    pub engine: Engine<'a>,
    pub market: &'a MarketSpec,
    pub contract: &'a VaContract,
    pub loadings: &'a Loadings,
    pub quad: QuadratureSpec,
}

/// Stock part of a kernel: loading, drift, stock date and ratio date.
struct Stock<'s> {
    a: &'s [C64],
    a0: f64,
    maturity: usize,
    ratio: Option<usize>,
}

impl<'a> Valuation<'a> {
    pub fn new(
        model: &'a AffineModel,
        market: &'a MarketSpec,
        contract: &'a VaContract,
        loadings: &'a Loadings,
        quad: QuadratureSpec,
    ) -> Self {
        Self {
            engine: Engine::new(model),
            market,
            contract,
            loadings,
            quad,
        }
    }

    pub fn with_engine(self, engine: Engine<'a>) -> Self {
        Self { engine, ..self }
    }

    fn model(&self) -> &'a AffineModel {
        self.engine.model()
    }

    fn check(&self, leg: &str) -> Result<()> {
        if self.loadings.copula != SurvivalCopula::Independence {
            return Err(Error::UnsupportedCopula(leg.to_string()));
        }
        self.loadings.validate(self.model())?;
        self.contract.validate()?;
        self.quad.validate()
    }

    fn require_single_payment(&self) -> Result<()> {
        if self.contract.n() != 1 {
            return Err(Error::UnsupportedContract(
                "GMAB/DB closed form requires n=1".into(),
            ));
        }
        Ok(())
    }

    /// `E[stock * exp(-Lambda^m_{r_m} - Lambda^s_{r_s})]`.
    fn kernel(&self, r_m: usize, r_s: usize, stock: Option<&Stock>) -> Result<C64> {
        let l = self.loadings;
        let mut leg = LegSpec::survival(&l.mortality, Some(&l.surrender), r_m, r_s);
        if let Some(st) = stock {
            leg = leg.with_stock(st.a0, st.a.to_vec(), st.maturity, st.ratio);
        }
        self.engine.expectation_kernel(&leg)
    }

    fn call(
        &self,
        transform: impl Fn(C64) -> Result<C64> + Sync,
        strike: f64,
        abar: f64,
    ) -> Result<FourierValue> {
        let doubled = self.engine.fault() == Some(Fault::FourierConstant);
        damped_call(transform, strike, abar, &self.quad, doubled)
    }

    fn damped(&self, z: C64) -> Vec<C64> {
        self.market.a.iter().map(|&a| z * a).collect()
    }

    /// Premium leg `-sum_i beta(0,T_i) pi_i P(alive at T_i)`, with its terms.
    pub fn premium_terms(&self) -> Result<Vec<f64>> {
        self.check("the premium leg")?;
        let c = self.contract;
        (0..=c.n())
            .map(|i| {
                let ti = c.date(i);
                Ok(-c.discount(0, ti) * c.payment(i) * self.kernel(ti, ti, None)?.re)
            })
            .collect()
    }

    pub fn premium_leg(&self) -> Result<f64> {
        Ok(self.premium_terms()?.iter().sum())
    }

    /// Surrender benefit per grid period.
    pub fn sb_terms(&self) -> Result<Vec<f64>> {
        self.check("the surrender benefit")?;
        let c = self.contract;
        let a = self.market.a_complex();
        let mut jobs = Vec::new();
        for k in 1..=c.n() {
            for i in 1..=k {
                for t in c.date(k - 1) + 1..=c.date(k) {
                    jobs.push((k, i, t));
                }
            }
        }
        let vals: Vec<(usize, f64)> = jobs
            .par_iter()
            .map(|&(k, i, t)| {
                let (tk, ti) = (c.date(k), c.date(i));
                let stock = Stock {
                    a: &a,
                    a0: self.market.a0,
                    maturity: tk,
                    ratio: Some(ti),
                };
                let st = (i < k).then_some(&stock);
                let diff = self.kernel(t - 1, t - 1, st)? - self.kernel(t - 1, t, st)?;
                let scale = c.discount(0, tk) * c.penalty_at(tk)? * c.payment(i);
                Ok((k, scale * diff.re))
            })
            .collect::<Result<_>>()?;
        let mut terms = vec![0.0; c.n()];
        for (k, v) in vals {
            terms[k - 1] += v;
        }
        Ok(terms)
    }

    pub fn sb(&self) -> Result<f64> {
        Ok(self.sb_terms()?.iter().sum())
    }

    /// GMAB as `(guarantee term, call term, tail estimate)`.
    pub fn gmab_parts(&self) -> Result<(f64, f64, f64)> {
        self.check("the GMAB")?;
        self.require_single_payment()?;
        let c = self.contract;
        let (t, t1, pi1) = (c.maturity, c.date(1), c.payment(1));
        let beta = c.discount(0, t);
        let k_t = c.guarantee_value(t);
        let guarantee = beta * k_t * self.kernel(t, t, None)?.re;
        if pi1 == 0.0 {
            return Ok((guarantee, 0.0, 0.0));
        }
        let abar = self.market.a0 * (t - t1) as f64;
        let fv = self.call(
            |z| {
                let a = self.damped(z);
                let st = Stock {
                    a: &a,
                    a0: 0.0,
                    maturity: t,
                    ratio: Some(t1),
                };
                self.kernel(t, t, Some(&st))
            },
            k_t / pi1,
            abar,
        )?;
        Ok((guarantee, beta * pi1 * fv.value, beta * pi1 * fv.tail))
    }

    pub fn gmab(&self) -> Result<f64> {
        let (g, call, _) = self.gmab_parts()?;
        Ok(g + call)
    }

    /// Death benefit per death date `t = 1..=T`, with the largest tail estimate.
    pub fn db_terms(&self) -> Result<(Vec<f64>, f64)> {
        self.check("the death benefit")?;
        self.require_single_payment()?;
        let c = self.contract;
        let (big_t, t1, pi1) = (c.maturity, c.date(1), c.payment(1));
        let abar = self.market.a0 * (big_t - t1) as f64;
        let terms: Vec<(f64, f64)> = (1..=big_t)
            .map(|t| {
                let settle = c.settle_date(t);
                let beta = c.discount(0, settle);
                let k = c.guarantee_value(settle);
                let mass = (self.kernel(t - 1, t, None)? - self.kernel(t, t, None)?).re;
                if settle == t1 {
                    // the fund equals pi_1 at its own payment date
                    return Ok((beta * pi1.max(k) * mass, 0.0));
                }
                if pi1 == 0.0 {
                    return Ok((beta * k * mass, 0.0));
                }
                let fv = self.call(
                    |z| {
                        let a = self.damped(z);
                        let st = Stock {
                            a: &a,
                            a0: 0.0,
                            maturity: big_t,
                            ratio: Some(t1),
                        };
                        Ok(self.kernel(t - 1, t, Some(&st))? - self.kernel(t, t, Some(&st))?)
                    },
                    k / pi1,
                    abar,
                )?;
                Ok((beta * (k * mass + pi1 * fv.value), beta * pi1 * fv.tail))
            })
            .collect::<Result<_>>()?;
        let tail = terms.iter().map(|t| t.1).fold(0.0, f64::max);
        Ok((terms.into_iter().map(|t| t.0).collect(), tail))
    }

    pub fn db(&self) -> Result<f64> {
        Ok(self.db_terms()?.0.iter().sum())
    }

    /// Scalar diagnostics that do not depend on the leg values.
    pub fn base_diagnostics(&self) -> Result<Diagnostics> {
        let (ra, rb) = self.market.martingale_residual(self.model())?;
        let residual = rb.iter().fold(ra.abs(), |m, r| m.max(r.abs()));
        let margin = self
            .model()
            .y_coords()
            .iter()
            .zip(&self.market.a)
            .filter_map(|(c, a)| match c {
                FactorCoordinate::AutoregressiveGamma { scale, .. } => {
                    Some(1.0 / scale - self.quad.w * a)
                }
                _ => None,
            })
            .reduce(f64::min);
        Ok(Diagnostics {
            quadrature: Some(self.quad),
            martingale_residual: residual,
            domain_margin: margin,
            ..Diagnostics::default()
        })
    }

    /// All four legs in closed form.
    pub fn price_va(&self) -> Result<PriceReport> {
        self.require_single_payment()?;
        let mut d = self.base_diagnostics()?;
        d.premium_terms = self.premium_terms()?;
        d.sb_terms = self.sb_terms()?;
        let (g, call, tail_g) = self.gmab_parts()?;
        d.gmab_guarantee_term = g;
        d.gmab_call_term = call;
        let (db_terms, tail_d) = self.db_terms()?;
        d.db_terms = db_terms;
        d.max_tail_estimate = tail_g.max(tail_d);
        Ok(PriceReport::assemble(
            d.premium_terms.iter().sum(),
            g + call,
            d.sb_terms.iter().sum(),
            d.db_terms.iter().sum(),
            d,
        ))
    }
}

pub fn price_premium_leg(
    model: &AffineModel,
    market: &MarketSpec,
    contract: &VaContract,
    loadings: &Loadings,
) -> Result<f64> {
    Valuation::new(model, market, contract, loadings, QuadratureSpec::default()).premium_leg()
}

pub fn price_sb(
    model: &AffineModel,
    market: &MarketSpec,
    contract: &VaContract,
    loadings: &Loadings,
) -> Result<f64> {
    Valuation::new(model, market, contract, loadings, QuadratureSpec::default()).sb()
}

pub fn price_gmab(
    model: &AffineModel,
    market: &MarketSpec,
    contract: &VaContract,
    loadings: &Loadings,
    quad: QuadratureSpec,
) -> Result<f64> {
    Valuation::new(model, market, contract, loadings, quad).gmab()
}

pub fn price_db(
    model: &AffineModel,
    market: &MarketSpec,
    contract: &VaContract,
    loadings: &Loadings,
    quad: QuadratureSpec,
) -> Result<f64> {
    Valuation::new(model, market, contract, loadings, quad).db()
}

pub fn price_va(
    model: &AffineModel,
    market: &MarketSpec,
    contract: &VaContract,
    loadings: &Loadings,
    quad: QuadratureSpec,
) -> Result<PriceReport> {
    Valuation::new(model, market, contract, loadings, quad).price_va()
}

/// Bisection for the guarantee rate `delta` with `va_total(delta) = target`.
pub fn solve_fair_guarantee(val: &Valuation, lo: f64, hi: f64, target: f64) -> Result<f64> {
    let tol = 1e-8 * val.contract.total_payments().max(f64::MIN_POSITIVE);
    let f = |delta: f64| -> Result<f64> {
        let c = val.contract.with_delta(delta);
        let v = Valuation {
            contract: &c,
            ..*val
        };
        Ok(v.price_va()?.va_total - target)
    };
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let (mut fa, fb) = (f(a)?, f(b)?);
    if fa.abs() < tol {
        return Ok(a);
    }
    if fb.abs() < tol {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracket {
            lo: a,
            hi: b,
            f_lo: fa,
            f_hi: fb,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let fm = f(mid)?;
        if fm.abs() < tol || (b - a) < 1e-15 * (1.0 + mid.abs()) {
            return Ok(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stopping::IntensityLoading;
    use approx::assert_relative_eq;

    fn flat_model(sigma: f64) -> AffineModel {
        AffineModel::new(
            vec![FactorCoordinate::ConstantOne],
            vec![FactorCoordinate::gaussian(0.0, 1.0, sigma)],
            vec![1.0, 0.0],
        )
        .unwrap()
    }

    fn hazards(m: &AffineModel, hm: f64, hs: f64) -> Loadings {
        Loadings::independent(
            IntensityLoading::deterministic(m, hm).unwrap(),
            IntensityLoading::deterministic(m, hs).unwrap(),
        )
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(16);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
        let i30: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert_relative_eq!(i30, 2.0 / 31.0, epsilon = 1e-14);
        let quad = QuadratureSpec::default();
        let nodes = quad.nodes();
        assert_eq!(nodes.len(), 400);
        assert_relative_eq!(
            nodes.iter().map(|n| n.1).sum::<f64>(),
            200.0,
            epsilon = 1e-11
        );
    }

    #[test]
    fn premium_leg_examples() {
        let m = flat_model(0.0);
        let mkt = MarketSpec::martingale(&m, vec![1.0]).unwrap();
        let mut c = VaContract::single(3, 100.0, 6, 0.0, 1.0, 0.97).unwrap();
        c.initial_payment = 50.0;
        let zero = Loadings::zero(&m);
        let v = price_premium_leg(&m, &mkt, &c, &zero).unwrap();
        assert_relative_eq!(v, -50.0 - 0.97f64.powi(3) * 100.0, epsilon = 1e-12);
        let l = hazards(&m, 0.02, 0.05);
        let v = price_premium_leg(&m, &mkt, &c, &l).unwrap();
        assert_relative_eq!(
            v,
            -50.0 - 0.97f64.powi(3) * 100.0 * (-0.07f64 * 3.0).exp(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn clayton_is_rejected_in_closed_form() {
        let m = flat_model(0.1);
        let mkt = MarketSpec::martingale(&m, vec![1.0]).unwrap();
        let c = VaContract::single(3, 100.0, 6, 0.0, 1.0, 1.0).unwrap();
        let mut l = hazards(&m, 0.02, 0.05);
        l.copula = SurvivalCopula::Clayton { theta: 2.0 };
        assert!(matches!(
            price_sb(&m, &mkt, &c, &l),
            Err(Error::UnsupportedCopula(_))
        ));
    }

    #[test]
    fn sb_examples() {
        let m = flat_model(0.0);
        let mkt = MarketSpec::martingale(&m, vec![1.0]).unwrap();
        let c = VaContract::single(3, 100.0, 6, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(price_sb(&m, &mkt, &c, &Loadings::zero(&m)).unwrap(), 0.0);
        // two payments, flat deterministic market
        let mut c2 = c.clone();
        c2.grid = vec![2, 4];
        c2.payments = vec![100.0, 60.0];
        c2.penalty = BTreeMap::from([("2".into(), 0.9), ("4".into(), 0.8)]);
        c2.discount_factors = vec![0.99; 6];
        let (hm, hs) = (0.03, 0.1);
        let got = price_sb(&m, &mkt, &c2, &hazards(&m, hm, hs)).unwrap();
        let period = |lo: usize, hi: usize| -> f64 {
            (lo + 1..=hi)
                .map(|t| {
                    let t = t as f64;
                    (-hm * (t - 1.0)).exp() * ((-hs * (t - 1.0)).exp() - (-hs * t).exp())
                })
                .sum()
        };
        let want = 0.99f64.powi(2) * 0.9 * 100.0 * period(0, 2)
            + 0.99f64.powi(4) * 0.8 * 160.0 * period(2, 4);
        assert_relative_eq!(got, want, epsilon = 1e-12);
    }

    #[test]
    fn gmab_deterministic_stock_is_deterministic_max() {
        let m = flat_model(0.0);
        let mkt = MarketSpec::martingale(&m, vec![1.0]).unwrap();
        for delta in [-0.05, 0.0, 0.03] {
            let c = VaContract::single(2, 100.0, 8, delta, 1.0, 0.98).unwrap();
            let l = Loadings::zero(&m);
            let v = Valuation::new(&m, &mkt, &c, &l, QuadratureSpec::default());
            let (g, call, tail) = v.gmab_parts().unwrap();
            let want = 0.98f64.powi(8) * 100.0f64.max(c.guarantee_value(8));
            // a point-mass stock has a slowly decaying transform; the tail estimate bounds the error
            assert!(
                ((g + call) - want).abs() <= 2.0 * tail + 1e-9,
                "{} vs {want}, tail {tail}",
                g + call
            );
            assert!(tail < 5e-3 * want);
        }
    }

    #[test]
    fn gmab_without_guarantee_is_participation() {
        let m = flat_model(0.2);
        let mkt = MarketSpec::martingale(&m, vec![1.0]).unwrap();
        let mut c = VaContract::single(2, 100.0, 8, 0.0, 1.0, 0.98).unwrap();
        c.guarantee_fraction = 0.0;
        let l = hazards(&m, 0.01, 0.04);
        let g = price_gmab(&m, &mkt, &c, &l, QuadratureSpec::default()).unwrap();
        assert_relative_eq!(
            g,
            0.98f64.powi(8) * 100.0 * (-0.05f64 * 8.0).exp(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn db_vanishes_without_mortality() {
        let m = flat_model(0.2);
        let mkt = MarketSpec::martingale(&m, vec![1.0]).unwrap();
        let c = VaContract::single(2, 100.0, 6, 0.01, 1.0, 0.98).unwrap();
        let l = hazards(&m, 0.0, 0.1);
        assert_eq!(
            price_db(&m, &mkt, &c, &l, QuadratureSpec::default()).unwrap(),
            0.0
        );
    }

    #[test]
    fn db_deterministic_matches_enumeration() {
        let m = flat_model(0.0);
        let mkt = MarketSpec::martingale(&m, vec![1.0]).unwrap();
        let c = VaContract::single(2, 100.0, 6, 0.02, 1.0, 0.98).unwrap();
        let (hm, hs) = (0.05, 0.08);
        let l = hazards(&m, hm, hs);
        let (terms, tail) = Valuation::new(&m, &mkt, &c, &l, QuadratureSpec::default())
            .db_terms()
            .unwrap();
        let got: f64 = terms.iter().sum();
        let mut want = 0.0;
        for t in 1..=6usize {
            let settle = c.settle_date(t);
            let pay = 100.0f64.max(c.guarantee_value(settle));
            let tf = t as f64;
            let p = ((-hm * (tf - 1.0)).exp() - (-hm * tf).exp()) * (-hs * tf).exp();
            want += c.discount(0, settle) * pay * p;
        }
        assert!(
            (got - want).abs() <= 2.0 * terms.len() as f64 * tail + 1e-9,
            "{got} vs {want}"
        );
    }

    #[test]
    fn n_greater_than_one_is_rejected_for_option_legs() {
        let m = flat_model(0.2);
        let mkt = MarketSpec::martingale(&m, vec![1.0]).unwrap();
        let mut c = VaContract::single(2, 100.0, 6, 0.0, 1.0, 1.0).unwrap();
        c.grid = vec![2, 3];
        c.payments = vec![100.0, 100.0];
        c.penalty.insert("3".into(), 1.0);
        let err =
            price_va(&m, &mkt, &c, &Loadings::zero(&m), QuadratureSpec::default()).unwrap_err();
        assert_eq!(err.to_string(), "GMAB/DB closed form requires n=1");
    }

    #[test]
    fn zero_contract_has_zero_legs() {
        let m = flat_model(0.2);
        let mkt = MarketSpec::martingale(&m, vec![1.0]).unwrap();
        let c = VaContract::single(2, 0.0, 6, 0.0, 1.0, 1.0).unwrap();
        let r = price_va(
            &m,
            &mkt,
            &c,
            &hazards(&m, 0.02, 0.03),
            QuadratureSpec::default(),
        )
        .unwrap();
        assert_eq!(
            (r.premium_leg, r.gmab, r.sb, r.db, r.va_total),
            (0.0, 0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn report_legs_add_up_and_round_trip() {
        let m = flat_model(0.15);
        let mkt = MarketSpec::martingale(&m, vec![1.0]).unwrap();
        let c = VaContract::single(2, 100.0, 6, 0.01, 0.9, 0.98).unwrap();
        let r = price_va(
            &m,
            &mkt,
            &c,
            &hazards(&m, 0.02, 0.05),
            QuadratureSpec::default(),
        )
        .unwrap();
        assert_eq!(r.va_total, r.premium_leg + r.gmab + r.sb + r.db);
        let l = hazards(&m, 0.02, 0.05);
        let v = Valuation::new(&m, &mkt, &c, &l, QuadratureSpec::default());
        assert_eq!(r.gmab, v.gmab().unwrap());
        assert_eq!(r.db, v.db().unwrap());
        let back: PriceReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn fair_guarantee_root() {
        let m = flat_model(0.15);
        let mkt = MarketSpec::martingale(&m, vec![1.0]).unwrap();
        let c = VaContract::single(2, 100.0, 6, 0.0, 0.9, 0.99).unwrap();
        let l = hazards(&m, 0.02, 0.05);
        let v = Valuation::new(&m, &mkt, &c, &l, QuadratureSpec::default());
        let lo = Valuation {
            contract: &c.with_delta(-0.2),
            ..v
        }
        .price_va()
        .unwrap()
        .va_total;
        let hi = Valuation {
            contract: &c.with_delta(0.2),
            ..v
        }
        .price_va()
        .unwrap()
        .va_total;
        assert!(lo < hi);
        let d = solve_fair_guarantee(&v, -0.2, 0.2, 0.0).unwrap();
        let again = Valuation {
            contract: &c.with_delta(d),
            ..v
        }
        .price_va()
        .unwrap()
        .va_total;
        assert!(again.abs() < 1e-8 * 100.0);
        assert_eq!(solve_fair_guarantee(&v, d, 0.2, 0.0).unwrap(), d);
        assert!(matches!(
            solve_fair_guarantee(&v, 0.1, 0.2, 0.0),
            Err(Error::Bracket { .. })
        ));
    }
}
