//! Monte Carlo reference values for every leg.
//!
//! Paths follow the composed law: `Y_t` from `Y_{t-1}` under Q, then `X_t`
//! from `(X_{t-1}, Y_t)` under P. Each path owns three ChaCha streams
//! (non-Gaussian draws, Gaussian draws, exponential thresholds), so a path
//! depends only on `(seed, index)` and results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affine::{AffineModel, MarketSpec, ZPath};
use crate::contract::VaContract;
use crate::error::{Error, Result};
use crate::stopping::{
    cum_hazard, death_prob, gamma_surface, sample_times, surrender_prob, Loadings,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McMode {
    /// Literal cash flows under sampled `(tau_m, tau_s)`.
    SampledTaus,
    /// Exact conditional value given the factor path.
    GWeighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Leg {
    Premium,
    Sb,
    Gmab,
    Db,
}

impl Leg {
    pub const ALL: [Leg; 4] = [Leg::Premium, Leg::Sb, Leg::Gmab, Leg::Db];

    pub fn name(self) -> &'static str {
        match self {
            Leg::Premium => "premium_leg",
            Leg::Sb => "sb",
            Leg::Gmab => "gmab",
            Leg::Db => "db",
        }
    }
}

const STREAM_MAIN: u64 = 0;
const STREAM_GAUSS: u64 = 1;
const STREAM_THRESHOLDS: u64 = 2;

/// A lazily generated, reproducible set of factor paths `Z_0..Z_T`.
#[derive(Debug, Clone, Copy)]
pub struct PathEnsemble<'m> {
    model: &'m AffineModel,
    pub horizon: usize,
    pub n_paths: usize,
    pub seed: u64,
    /// Pairs `(2j, 2j+1)` share Gaussian innovations with opposite signs.
    pub antithetic: bool,
}

pub fn simulate(
    model: &AffineModel,
    horizon: usize,
    n_paths: usize,
    seed: u64,
) -> PathEnsemble<'_> {
    PathEnsemble {
        model,
        horizon,
        n_paths,
        seed,
        antithetic: false,
    }
}

impl<'m> PathEnsemble<'m> {
    pub fn with_antithetic(self, antithetic: bool) -> Self {
        Self { antithetic, ..self }
    }

    pub fn model(&self) -> &'m AffineModel {
        self.model
    }

    fn rng(&self, index: usize, tag: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((index as u64) << 2) | tag);
        rng
    }

    pub fn path(&self, index: usize) -> ZPath {
        let m = self.model;
        let (d1, d2) = (m.d1(), m.d2());
        let mut path = ZPath::zeros(d1, d2, self.horizon);
        path.z_mut(0).copy_from_slice(m.z0());
        let mut rng = self.rng(index, STREAM_MAIN);
        let (mut grng, sign) = if self.antithetic {
            let sign = if index % 2 == 1 { -1.0 } else { 1.0 };
            (self.rng(index / 2, STREAM_GAUSS), sign)
        } else {
            (self.rng(index, STREAM_GAUSS), 1.0)
        };
        let mut normal = move || -> f64 {
            let e: f64 = StandardNormal.sample(&mut grng);
            sign * e
        };
        let mut y = vec![0.0; d2];
        let mut x = vec![0.0; d1];
        for t in 1..=self.horizon {
            let prev = path.z(t - 1).to_vec();
            m.step_y_into(&prev[d1..], &mut y, &mut normal, &mut rng);
            m.step_x_into(&prev[..d1], &y, &mut x, &mut normal, &mut rng);
            let z = path.z_mut(t);
            z[..d1].copy_from_slice(&x);
            z[d1..].copy_from_slice(&y);
        }
        path
    }

    pub fn threshold_rng(&self, index: usize) -> ChaCha8Rng {
        self.rng(index, STREAM_THRESHOLDS)
    }

    fn check(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(Error::Mode("at least two paths are required".into()));
        }
        if self.antithetic && self.n_paths % 2 == 1 {
            return Err(Error::Mode(
                "antithetic sampling needs an even number of paths".into(),
            ));
        }
        Ok(())
    }

    /// Mean and standard error of `f(path)` over the ensemble; antithetic
    /// pairs are averaged before the variance is taken.
    pub fn estimate<const K: usize, F>(&self, f: F) -> Result<[Stats; K]>
    where
        F: Fn(usize, &ZPath) -> Result<[f64; K]> + Sync,
    {
        self.check()?;
        let group = if self.antithetic { 2 } else { 1 };
        let units = self.n_paths / group;
        let blocks: Vec<[Stats; K]> = (0..units.div_ceil(BLOCK))
            .into_par_iter()
            .map(|b| {
                let lo = b * BLOCK;
                let hi = (lo + BLOCK).min(units);
                let mut vals: Vec<[f64; K]> = Vec::with_capacity(hi - lo);
                for u in lo..hi {
                    let mut acc = [0.0; K];
                    for g in 0..group {
                        let i = u * group + g;
                        let v = f(i, &self.path(i))?;
                        for (a, v) in acc.iter_mut().zip(v) {
                            *a += v / group as f64;
                        }
                    }
                    vals.push(acc);
                }
                Ok(std::array::from_fn(|k| {
                    let col: Vec<f64> = vals.iter().map(|v| v[k]).collect();
                    Stats::from_values(&col)
                }))
            })
            .collect::<Result<_>>()?;
        let mut total = [Stats::default(); K];
        for b in blocks {
            for (t, s) in total.iter_mut().zip(b) {
                *t = t.merge(&s);
            }
        }
        Ok(total)
    }
}

const BLOCK: usize = 1024;

/// Running mean and sum of squared deviations over `n` units.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub m2: f64,
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        v.iter().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

impl Stats {
    pub fn from_values(v: &[f64]) -> Self {
        if v.is_empty() {
            return Self::default();
        }
        let mean = pairwise_sum(v) / v.len() as f64;
        let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
        Self {
            n: v.len(),
            mean,
            m2: pairwise_sum(&dev),
        }
    }

    pub fn merge(&self, o: &Stats) -> Stats {
        if self.n == 0 {
            return *o;
        }
        if o.n == 0 {
            return *self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Stats {
            n,
            mean: self.mean + d * o.n as f64 / n as f64,
            m2: self.m2 + o.m2 + d * d * (self.n as f64 * o.n as f64) / n as f64,
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub mode: McMode,
}

impl McEstimate {
    fn from_stats(s: &Stats, n_paths: usize, mode: McMode) -> Self {
        Self {
            mean: s.mean,
            stderr: s.stderr(),
            n_paths,
            mode,
        }
    }
}

/// Both estimator modes for every leg and the total, from one pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub n_paths: usize,
    pub seed: u64,
    pub antithetic: bool,
    /// Indexed like [`Leg::ALL`].
    pub g_weighted: [McEstimate; 4],
    pub sampled_taus: [McEstimate; 4],
    pub va_total_g_weighted: McEstimate,
    pub va_total_sampled_taus: McEstimate,
}

impl McReport {
    pub fn get(&self, leg: Leg, mode: McMode) -> McEstimate {
        let i = Leg::ALL.iter().position(|l| *l == leg).unwrap();
        match mode {
            McMode::GWeighted => self.g_weighted[i],
            McMode::SampledTaus => self.sampled_taus[i],
        }
    }

    pub fn va_total(&self, mode: McMode) -> McEstimate {
        match mode {
            McMode::GWeighted => self.va_total_g_weighted,
            McMode::SampledTaus => self.va_total_sampled_taus,
        }
    }
}

/// Per-path leg values: `[g-weighted x 4, sampled x 4]` in [`Leg::ALL`] order.
pub fn path_values(
    path: &ZPath,
    market: &MarketSpec,
    contract: &VaContract,
    loadings: &Loadings,
    thresholds: &mut ChaCha8Rng,
) -> Result<[f64; 8]> {
    let c = contract;
    let big_t = c.maturity;
    let lm = cum_hazard(path, &loadings.mortality)?;
    let ls = cum_hazard(path, &loadings.surrender)?;
    let cop = &loadings.copula;
    let s: Vec<f64> = (0..=big_t).map(|t| market.price(t, path.y(t))).collect();
    let g = |t1: usize, t2: usize| gamma_surface(t1 as isize, t2 as isize, &lm, &ls, cop);
    let fund = |t: usize| c.fund_value(&s, t);
    let payout = |t: usize| -> Result<f64> { Ok(fund(t)?.max(c.guarantee_value(t))) };

    let mut gw = [0.0; 4];
    gw[0] = -(0..=c.n())
        .map(|i| c.discount(0, c.date(i)) * c.payment(i) * g(c.date(i), c.date(i)))
        .sum::<f64>();
    for k in 1..=c.n() {
        let tk = c.date(k);
        let mass: f64 = (c.date(k - 1) + 1..=tk)
            .map(|t| surrender_prob(t, &lm, &ls, cop))
            .sum();
        gw[1] += c.discount(0, tk) * c.penalty_at(tk)? * fund(tk)? * mass;
    }
    gw[2] = c.discount(0, big_t) * g(big_t, big_t) * payout(big_t)?;
    for t in 1..=big_t {
        let settle = c.settle_date(t);
        gw[3] += c.discount(0, settle) * payout(settle)? * death_prob(t, &lm, &ls, cop);
    }

    let (tm, ts) = sample_times(&lm, &ls, cop, thresholds);
    let mut sp = [0.0; 4];
    sp[0] = -(0..=c.n())
        .filter(|&i| tm > c.date(i) && ts > c.date(i))
        .map(|i| c.discount(0, c.date(i)) * c.payment(i))
        .sum::<f64>();
    if ts <= tm {
        if let Some(k) = c.grid_period(ts) {
            let tk = c.date(k);
            sp[1] = c.discount(0, tk) * c.penalty_at(tk)? * fund(tk)?;
        }
    }
    if tm > big_t && ts > big_t {
        sp[2] = c.discount(0, big_t) * payout(big_t)?;
    }
    if tm <= big_t && tm < ts {
        let settle = c.settle_date(tm);
        sp[3] = c.discount(0, settle) * payout(settle)?;
    }
    Ok([gw[0], gw[1], gw[2], gw[3], sp[0], sp[1], sp[2], sp[3]])
}

/// Monte Carlo values of all legs. The ensemble horizon must equal the maturity.
pub fn mc_price(
    market: &MarketSpec,
    contract: &VaContract,
    loadings: &Loadings,
    ensemble: &PathEnsemble,
) -> Result<McReport> {
    contract.validate()?;
    loadings.validate(ensemble.model())?;
    if ensemble.horizon != contract.maturity {
        return Err(Error::Mode(format!(
            "ensemble horizon {} differs from maturity {}",
            ensemble.horizon, contract.maturity
        )));
    }
    let stats = ensemble.estimate(|i, path| {
        let v = path_values(
            path,
            market,
            contract,
            loadings,
            &mut ensemble.threshold_rng(i),
        )?;
        let tg = v[..4].iter().sum();
        let ts = v[4..].iter().sum();
        Ok([v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], tg, ts])
    })?;
    let n = ensemble.n_paths;
    let est = |k: usize, mode| McEstimate::from_stats(&stats[k], n, mode);
    Ok(McReport {
        n_paths: n,
        seed: ensemble.seed,
        antithetic: ensemble.antithetic,
        g_weighted: std::array::from_fn(|k| est(k, McMode::GWeighted)),
        sampled_taus: std::array::from_fn(|k| est(k + 4, McMode::SampledTaus)),
        va_total_g_weighted: est(8, McMode::GWeighted),
        va_total_sampled_taus: est(9, McMode::SampledTaus),
    })
}

pub fn mc_leg(
    leg: Leg,
    market: &MarketSpec,
    contract: &VaContract,
    loadings: &Loadings,
    ensemble: &PathEnsemble,
    mode: McMode,
) -> Result<McEstimate> {
    Ok(mc_price(market, contract, loadings, ensemble)?.get(leg, mode))
}

/// Estimates of `E[S_t] / S_0` for `t = 1..=T`.
pub fn mc_stock_ratio(market: &MarketSpec, ensemble: &PathEnsemble) -> Result<Vec<McEstimate>> {
    const MAX_T: usize = 64;
    if ensemble.horizon > MAX_T {
        return Err(Error::Mode(format!(
            "horizon above {MAX_T} is not supported here"
        )));
    }
    let y0 = ensemble.model().y0().to_vec();
    let s0 = market.price(0, &y0);
    let stats = ensemble.estimate::<MAX_T, _>(|_, path| {
        Ok(std::array::from_fn(|k| {
            let t = k + 1;
            if t <= path.horizon() {
                market.price(t, path.y(t)) / s0
            } else {
                0.0
            }
        }))
    })?;
    Ok(stats[..ensemble.horizon]
        .iter()
        .map(|s| McEstimate::from_stats(s, ensemble.n_paths, McMode::GWeighted))
        .collect())
}

/// Outcome of a closed-form versus simulation comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    pub gap: f64,
    /// `gap / stderr`; `None` when the estimate has no sampling error.
    pub sigmas: Option<f64>,
}

/// Pass iff `|closed - mean| <= k_sigma * stderr`, with a rounding allowance
/// of `1e-12` relative for zero-variance estimates.
pub fn compare(closed_form: f64, mc: &McEstimate, k_sigma: f64) -> Verdict {
    let gap = (closed_form - mc.mean).abs();
    let slack = 1e-12 * closed_form.abs().max(1.0);
    Verdict {
        pass: gap <= k_sigma * mc.stderr + slack,
        gap,
        sigmas: (mc.stderr > 0.0).then(|| gap / mc.stderr),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::FactorCoordinate;
    use crate::stopping::IntensityLoading;
    use approx::assert_relative_eq;

    fn model() -> AffineModel {
        AffineModel::new(
            vec![
                FactorCoordinate::ConstantOne,
                FactorCoordinate::arg_loaded(1.0, 0.05, 0.5, 1, 0.05),
            ],
            vec![
                FactorCoordinate::gaussian(0.0, 1.0, 0.2),
                FactorCoordinate::arg(1.0, 0.1, 1.03),
            ],
            vec![1.0, 0.1, 0.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn constant_model_paths_are_constant() {
        let m = AffineModel::new(
            vec![FactorCoordinate::ConstantOne],
            vec![FactorCoordinate::ConstantOne],
            vec![1.0, 1.0],
        )
        .unwrap();
        let ens = simulate(&m, 5, 10, 1);
        for i in 0..10 {
            let p = ens.path(i);
            assert!((0..=5).all(|t| p.z(t) == [1.0, 1.0]));
        }
    }

    #[test]
    fn seeds_reproduce_paths() {
        let m = model();
        let a = simulate(&m, 6, 4, 42);
        let b = simulate(&m, 6, 4, 42);
        let c = simulate(&m, 6, 4, 43);
        assert_eq!(a.path(3), b.path(3));
        assert_ne!(a.path(3), c.path(3));
        assert_ne!(a.path(2), a.path(3));
    }

    #[test]
    fn antithetic_pairs_mirror_gaussian_innovations() {
        let m = AffineModel::new(
            vec![FactorCoordinate::ConstantOne],
            vec![FactorCoordinate::gaussian(0.0, 1.0, 0.3)],
            vec![1.0, 0.0],
        )
        .unwrap();
        let ens = simulate(&m, 4, 4, 9).with_antithetic(true);
        let (p, q) = (ens.path(0), ens.path(1));
        for t in 0..=4 {
            assert_relative_eq!(p.y(t)[0], -q.y(t)[0], epsilon = 1e-15);
        }
        assert!(simulate(&m, 4, 5, 9)
            .with_antithetic(true)
            .estimate(|_, _| Ok([0.0]))
            .is_err());
    }

    #[test]
    fn one_step_moments_match_logmgf() {
        let m = model();
        let ens = simulate(&m, 1, 200_000, 5);
        let u = [0.0, 0.7, 0.5, -0.4];
        let stats = ens
            .estimate(|_, p| {
                let z = p.z(1);
                Ok([u.iter().zip(z).map(|(u, z)| u * z).sum::<f64>().exp()])
            })
            .unwrap();
        let uc: Vec<_> = u.iter().map(|&v| crate::affine::C64::new(v, 0.0)).collect();
        let (alpha, beta, gamma) = m.logmgf_x_p(&uc[..2]).unwrap();
        let arg: Vec<_> = uc[2..].iter().zip(&gamma).map(|(a, g)| a + g).collect();
        let (aq, bq) = m.logmgf_y_q(&arg).unwrap();
        let expo = alpha
            + aq
            + beta
                .iter()
                .zip(m.x0())
                .map(|(b, x)| b * x)
                .sum::<crate::affine::C64>()
            + bq.iter()
                .zip(m.y0())
                .map(|(b, y)| b * y)
                .sum::<crate::affine::C64>();
        let want = expo.exp().re;
        assert!(
            (stats[0].mean - want).abs() < 4.0 * stats[0].stderr(),
            "{} vs {want}",
            stats[0].mean
        );
    }

    #[test]
    fn gaussian_and_gamma_sample_moments() {
        let m = AffineModel::new(
            vec![FactorCoordinate::arg(2.0, 0.3, 0.0)],
            vec![FactorCoordinate::gaussian(0.1, 0.9, 0.2)],
            vec![0.0, 0.0],
        )
        .unwrap();
        let ens = simulate(&m, 1, 1_000_000, 17);
        let st = ens
            .estimate(|_, p| {
                let (x, y) = (p.x(1)[0], p.y(1)[0]);
                Ok([x, y, (y - 0.1) * (y - 0.1)])
            })
            .unwrap();
        assert!((st[0].mean - 0.6).abs() < 4.0 * st[0].stderr());
        assert!((st[1].mean - 0.1).abs() < 4.0 * st[1].stderr());
        assert!((st[2].mean.sqrt() - 0.2).abs() < 1e-3);
    }

    #[test]
    fn estimates_do_not_depend_on_thread_count() {
        let m = model();
        let ens = simulate(&m, 3, 5000, 3);
        let f = |_: usize, p: &ZPath| Ok([p.y(3)[0], p.x(3)[1]]);
        let a = ens.estimate(f).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let b = pool.install(|| ens.estimate(f).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn stats_merge_matches_direct() {
        let v: Vec<f64> = (0..1000)
            .map(|i| ((i * 7919) % 113) as f64 * 0.37)
            .collect();
        let all = Stats::from_values(&v);
        let merged = Stats::from_values(&v[..333]).merge(&Stats::from_values(&v[333..]));
        assert_relative_eq!(all.mean, merged.mean, epsilon = 1e-12);
        assert_relative_eq!(all.m2, merged.m2, max_relative = 1e-12);
    }

    #[test]
    fn compare_thresholds() {
        let mc = McEstimate {
            mean: 1.0,
            stderr: 0.1,
            n_paths: 100,
            mode: McMode::GWeighted,
        };
        let v = compare(1.0, &mc, 4.0);
        assert!(v.pass);
        assert_eq!(v.sigmas, Some(0.0));
        assert!(!compare(1.5, &mc, 4.0).pass);
        assert!(compare(1.39, &mc, 4.0).pass);
    }

    fn deterministic_setup() -> (AffineModel, MarketSpec, VaContract, Loadings) {
        let m = AffineModel::new(
            vec![FactorCoordinate::ConstantOne],
            vec![FactorCoordinate::gaussian(0.0, 1.0, 0.0)],
            vec![1.0, 0.0],
        )
        .unwrap();
        let mkt = MarketSpec::new(&m, 0.01, vec![1.0]).unwrap();
        let c = VaContract::single(2, 100.0, 5, 0.02, 0.9, 0.98).unwrap();
        let l = Loadings::independent(
            IntensityLoading::deterministic(&m, 0.05).unwrap(),
            IntensityLoading::deterministic(&m, 0.1).unwrap(),
        );
        (m, mkt, c, l)
    }

    #[test]
    fn g_weighted_is_exact_for_deterministic_models() {
        let (m, mkt, c, l) = deterministic_setup();
        let r = mc_price(&mkt, &c, &l, &simulate(&m, 5, 64, 1)).unwrap();
        for leg in Leg::ALL {
            assert!(r.get(leg, McMode::GWeighted).stderr < 1e-12);
        }
        // enumeration: survival e^{-0.15 t}, stock e^{0.01 t}
        let p = |t: f64| (-0.15 * t).exp();
        let want_prem = -0.98f64.powi(2) * 100.0 * p(2.0);
        assert_relative_eq!(
            r.get(Leg::Premium, McMode::GWeighted).mean,
            want_prem,
            epsilon = 1e-10
        );
        let fund_t = 100.0 * (0.01f64 * 3.0).exp();
        let want_gmab = 0.98f64.powi(5) * p(5.0) * fund_t.max(100.0 * 0.06f64.exp());
        assert_relative_eq!(
            r.get(Leg::Gmab, McMode::GWeighted).mean,
            want_gmab,
            epsilon = 1e-10
        );
    }

    #[test]
    fn modes_agree_and_g_weighting_reduces_variance() {
        let m = model();
        let mkt = MarketSpec::martingale(&m, vec![1.0, -0.3]).unwrap();
        let c = VaContract::single(2, 100.0, 6, 0.01, 0.9, 0.98).unwrap();
        let l = Loadings::independent(
            IntensityLoading {
                b: vec![0.01, 1.0],
                c: vec![0.0, 0.0],
            },
            IntensityLoading {
                b: vec![0.05, 0.0],
                c: vec![0.0, 0.05],
            },
        );
        let r = mc_price(&mkt, &c, &l, &simulate(&m, 6, 100_000, 11)).unwrap();
        for leg in Leg::ALL {
            let (g, s) = (
                r.get(leg, McMode::GWeighted),
                r.get(leg, McMode::SampledTaus),
            );
            let comb = (g.stderr.powi(2) + s.stderr.powi(2)).sqrt();
            assert!((g.mean - s.mean).abs() <= 4.0 * comb, "{leg:?}");
            assert!(g.stderr < s.stderr, "{leg:?}");
        }
    }
}
