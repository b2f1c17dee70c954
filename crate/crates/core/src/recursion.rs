//! Backward coefficient recursions for affine expectations of
//! `(S_M / S_{T'})^{·} exp(-Lambda^m_{r_m} - Lambda^s_{r_s})`.
//!
//! For a hazard horizon `T` the exponent collected at date `t` is
//! `kappa(t) . Z_t`, and the table satisfies
//! `E[exp(sum_{t' >= t} kappa(t') . Z_{t'}) | Z_{t-1}] = exp(Phi(t-1) + psi(t) . Z_{t-1})`.
//! Stock dates beyond the hazard horizon are handled by composing with the
//! Q-capitalisation coefficients.

use std::io::Write;

use crate::affine::{check_len, AffineModel, C64};
use crate::error::{Error, Result};
use crate::stopping::IntensityLoading;

/// Exponents with real part above this bound abort with [`Error::Overflow`].
pub const OVERFLOW_BOUND: f64 = 700.0;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Case split of the exponent selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KappaBranch {
    /// `t = T`, `s < T`: only the first hazard, stock loading added.
    Terminal,
    /// `s < t < T`: only the first hazard.
    Middle,
    /// `t <= s`, `t < T`: both hazards.
    Early,
    /// `t = s = T`: both hazards, stock loading added.
    Tie,
}

impl KappaBranch {
    pub const ALL: [KappaBranch; 4] = [
        KappaBranch::Terminal,
        KappaBranch::Middle,
        KappaBranch::Early,
        KappaBranch::Tie,
    ];

    pub fn select(t: usize, s: usize, horizon: usize) -> Result<Self> {
        if t > horizon {
            return Err(Error::Index(format!("kappa: t={t} beyond T={horizon}")));
        }
        if s > horizon {
            return Err(Error::Index(format!("kappa: s={s} beyond T={horizon}")));
        }
        Ok(match (t == horizon, t <= s) {
            (true, false) => KappaBranch::Terminal,
            (true, true) => KappaBranch::Tie,
            (false, false) => KappaBranch::Middle,
            (false, true) => KappaBranch::Early,
        })
    }
}

/// Deliberate corruptions used as negative controls for the oracles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negate the output of one selector branch.
    FlipKappa(KappaBranch),
    /// Apply the Fourier normalisation `1/(2 pi)` twice.
    FourierConstant,
}

fn to_complex(v: &[f64]) -> impl Iterator<Item = C64> + '_ {
    v.iter().map(|&x| C64::new(x, 0.0))
}

/// Selector `(kappa1, kappa2)` at date `t` for regime switch `s` and horizon `T`.
/// With `loading_s = None` the single stopping-time selector is returned.
pub fn kappa(
    a: &[C64],
    loading_m: &IntensityLoading,
    loading_s: Option<&IntensityLoading>,
    t: usize,
    s: usize,
    horizon: usize,
) -> Result<(Vec<C64>, Vec<C64>)> {
    kappa_with(a, loading_m, loading_s, t, s, horizon, None)
}

fn kappa_with(
    a: &[C64],
    first: &IntensityLoading,
    second: Option<&IntensityLoading>,
    t: usize,
    s: usize,
    horizon: usize,
    fault: Option<Fault>,
) -> Result<(Vec<C64>, Vec<C64>)> {
    check_len("kappa stock loading", first.c.len(), a.len())?;
    let branch = KappaBranch::select(t, s, horizon)?;
    let mut k1: Vec<C64> = to_complex(&first.b).map(|v| -v).collect();
    let mut k2: Vec<C64> = to_complex(&first.c).map(|v| -v).collect();
    if matches!(branch, KappaBranch::Early | KappaBranch::Tie) {
        if let Some(sec) = second {
            for (k, &b) in k1.iter_mut().zip(&sec.b) {
                *k -= b;
            }
            for (k, &c) in k2.iter_mut().zip(&sec.c) {
                *k -= c;
            }
        }
    }
    if matches!(branch, KappaBranch::Terminal | KappaBranch::Tie) {
        for (k, &ai) in k2.iter_mut().zip(a) {
            *k += ai;
        }
    }
    if fault == Some(Fault::FlipKappa(branch)) {
        k1.iter_mut().chain(k2.iter_mut()).for_each(|k| *k = -*k);
    }
    Ok((k1, k2))
}

/// One expectation leg: hazards `Lambda^m` up to `r_m` and `Lambda^s` up to
/// `r_s` (so `T = max`, `s = min`, `primed = r_m < r_s`), stock factor
/// `exp(a0 (M - T') + a . (Y_M - Y_{T'}))` with `T'` optional.
#[derive(Debug, Clone, PartialEq)]
pub struct LegSpec<'a> {
    pub a0: f64,
    pub a: Vec<C64>,
    pub loading_m: &'a IntensityLoading,
    pub loading_s: Option<&'a IntensityLoading>,
    pub s: usize,
    /// Hazard horizon `T`.
    pub horizon: usize,
    /// Stock date `M >= T`.
    pub maturity: usize,
    pub ratio_date: Option<usize>,
    pub primed: bool,
}

impl<'a> LegSpec<'a> {
    /// Pure survival leg `E[exp(-Lambda^m_{r_m} - Lambda^s_{r_s})]`.
    pub fn survival(
        loading_m: &'a IntensityLoading,
        loading_s: Option<&'a IntensityLoading>,
        r_m: usize,
        r_s: usize,
    ) -> Self {
        let d2 = loading_m.c.len();
        let (horizon, s, primed) = match loading_s {
            None => (r_m, r_m, false),
            Some(_) => (r_m.max(r_s), r_m.min(r_s), r_m < r_s),
        };
        Self {
            a0: 0.0,
            a: vec![ZERO; d2],
            loading_m,
            loading_s,
            s,
            horizon,
            maturity: horizon,
            ratio_date: None,
            primed,
        }
    }

    pub fn with_stock(
        mut self,
        a0: f64,
        a: Vec<C64>,
        maturity: usize,
        ratio_date: Option<usize>,
    ) -> Self {
        self.a0 = a0;
        self.a = a;
        self.maturity = maturity;
        self.ratio_date = ratio_date;
        self
    }

    /// Hazard dates `(r_m, r_s)` of this leg.
    pub fn hazard_dates(&self) -> (usize, usize) {
        match (self.loading_s, self.primed) {
            (None, _) => (self.horizon, 0),
            (Some(_), false) => (self.horizon, self.s),
            (Some(_), true) => (self.s, self.horizon),
        }
    }

    pub fn validate(&self, model: &AffineModel) -> Result<()> {
        check_len("leg.a", model.d2(), self.a.len())?;
        for l in std::iter::once(self.loading_m).chain(self.loading_s) {
            check_len("leg loading b", model.d1(), l.b.len())?;
            check_len("leg loading c", model.d2(), l.c.len())?;
        }
        if self.s > self.horizon {
            return Err(Error::Index(format!(
                "leg: s={} beyond T={}",
                self.s, self.horizon
            )));
        }
        if self.horizon > self.maturity {
            return Err(Error::Index(format!(
                "leg: hazard horizon {} beyond stock date {}",
                self.horizon, self.maturity
            )));
        }
        if let Some(tp) = self.ratio_date {
            if tp == 0 || tp >= self.maturity {
                return Err(Error::Index(format!(
                    "leg: ratio date {tp} must lie in 1..{}",
                    self.maturity
                )));
            }
        }
        Ok(())
    }

    fn first_second(&self) -> (&'a IntensityLoading, Option<&'a IntensityLoading>) {
        match (self.loading_s, self.primed) {
            (Some(ls), true) => (ls, Some(self.loading_m)),
            _ => (self.loading_m, self.loading_s),
        }
    }
}

/// `E_Q[S_T | Y_t] = exp(A_Q(t,T) + B_Q(t,T) . Y_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QCapCoefficients {
    pub a_qt: C64,
    pub b_qt: Vec<C64>,
    pub t: usize,
    pub maturity: usize,
}

/// `E_Q[exp(loading . Y_{t+steps}) | Y_t] = exp(A + B . Y_t)`.
fn propagate(
    model: &AffineModel,
    loading: &[C64],
    steps: usize,
    end: usize,
) -> Result<(C64, Vec<C64>)> {
    let mut a = ZERO;
    let mut b = loading.to_vec();
    for k in 0..steps {
        let (aq, bq) = model.logmgf_y_q(&b).map_err(|e| e.at_time(end - k))?;
        a += aq;
        b = bq;
    }
    Ok((a, b))
}

pub fn q_cap(
    model: &AffineModel,
    t: usize,
    maturity: usize,
    a0: f64,
    a: &[C64],
) -> Result<QCapCoefficients> {
    check_len("q_cap loading", model.d2(), a.len())?;
    if t > maturity {
        return Err(Error::Index(format!("q_cap: t={t} beyond T={maturity}")));
    }
    let (aq, bq) = propagate(model, a, maturity - t, maturity)?;
    Ok(QCapCoefficients {
        a_qt: aq + a0 * maturity as f64,
        b_qt: bq,
        t,
        maturity,
    })
}

/// Output of the backward recursion over the hazard horizon.
///
/// `phi[t]` and `big_phi[t]` are indexed `0..=T` (`phi[0] = 0`); `psi1[t]`,
/// `psi2[t]` are indexed `0..=T+1` with `psi(T+1) = 0` and index 0 unused.
/// `constant` holds the drift and any composition beyond the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub horizon: usize,
    pub phi: Vec<C64>,
    pub big_phi: Vec<C64>,
    pub psi1: Vec<Vec<C64>>,
    pub psi2: Vec<Vec<C64>>,
    pub constant: C64,
}

impl CoefficientTable {
    /// `Phi(t) + psi1(t+1) . X_t + psi2(t+1) . Y_t`.
    pub fn exponent(&self, t: usize, x: &[f64], y: &[f64]) -> C64 {
        let p1 = &self.psi1[t + 1];
        let p2 = &self.psi2[t + 1];
        let mut e = self.big_phi[t];
        for (p, &v) in p1.iter().zip(x) {
            e += p * v;
        }
        for (p, &v) in p2.iter().zip(y) {
            e += p * v;
        }
        e
    }

    /// Log of the time-0 kernel.
    pub fn log_kernel(&self, model: &AffineModel) -> Result<C64> {
        let e = self.constant + self.exponent(0, model.x0(), model.y0());
        if !(e.re.is_finite() && e.im.is_finite()) {
            return Err(Error::Overflow {
                time: 0,
                value: e.re,
                bound: OVERFLOW_BOUND,
            });
        }
        if e.re > OVERFLOW_BOUND {
            return Err(Error::Overflow {
                time: 0,
                value: e.re,
                bound: OVERFLOW_BOUND,
            });
        }
        Ok(e)
    }

    /// Tab-separated dump, one row per `t`.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d1 = self.psi1[0].len();
        let d2 = self.psi2[0].len();
        write!(w, "t\tphi_re\tphi_im\tPhi_re\tPhi_im")?;
        for j in 0..d1 {
            write!(w, "\tpsi1_{j}_re\tpsi1_{j}_im")?;
        }
        for j in 0..d2 {
            write!(w, "\tpsi2_{j}_re\tpsi2_{j}_im")?;
        }
        writeln!(w)?;
        for t in 0..=self.horizon {
            write!(
                w,
                "{t}\t{:e}\t{:e}\t{:e}\t{:e}",
                self.phi[t].re, self.phi[t].im, self.big_phi[t].re, self.big_phi[t].im
            )?;
            for p in self.psi1[t + 1].iter().chain(&self.psi2[t + 1]) {
                write!(w, "\t{:e}\t{:e}", p.re, p.im)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Coefficient engine bound to one model, optionally with an injected fault.
#[derive(Debug, Clone, Copy)]
pub struct Engine<'m> {
    model: &'m AffineModel,
    fault: Option<Fault>,
}

impl<'m> Engine<'m> {
    pub fn new(model: &'m AffineModel) -> Self {
        Self { model, fault: None }
    }

    pub fn with_fault(model: &'m AffineModel, fault: Fault) -> Self {
        Self {
            model,
            fault: Some(fault),
        }
    }

    pub fn model(&self) -> &'m AffineModel {
        self.model
    }

    pub fn fault(&self) -> Option<Fault> {
        self.fault
    }

    /// Build the table for `leg`; stock dates past the hazard horizon are
    /// folded into the terminal loading and `constant`.
    pub fn build_table(&self, leg: &LegSpec) -> Result<CoefficientTable> {
        let model = self.model;
        leg.validate(model)?;
        let h = leg.horizon;
        let m = leg.maturity;
        let drift_span = m - leg.ratio_date.unwrap_or(0);
        let mut constant = C64::new(leg.a0 * drift_span as f64, 0.0);
        let mut terminal = leg.a.clone();
        let mut inject = None;
        match leg.ratio_date {
            Some(tp) if tp >= h => {
                let (c, b) = propagate(model, &terminal, m - tp, m)?;
                constant += c;
                let at_tp: Vec<C64> = b.iter().zip(&leg.a).map(|(b, a)| b - a).collect();
                let (c, b) = propagate(model, &at_tp, tp - h, tp)?;
                constant += c;
                terminal = b;
            }
            other => {
                let (c, b) = propagate(model, &terminal, m - h, m)?;
                constant += c;
                terminal = b;
                inject = other;
            }
        }

        let (first, second) = leg.first_second();
        let d1 = model.d1();
        let d2 = model.d2();
        let mut phi = vec![ZERO; h + 1];
        let mut psi1 = vec![vec![ZERO; d1]; h + 2];
        let mut psi2 = vec![vec![ZERO; d2]; h + 2];
        if h == 0 {
            // no hazard dates: the terminal loading acts on Y_0 directly
            psi2[1] = terminal.clone();
        }
        for t in (1..=h).rev() {
            let (k1, mut k2) = kappa_with(&terminal, first, second, t, leg.s, h, self.fault)?;
            if inject == Some(t) {
                for (k, a) in k2.iter_mut().zip(&leg.a) {
                    *k -= a;
                }
            }
            let u: Vec<C64> = psi1[t + 1].iter().zip(&k1).map(|(p, k)| p + k).collect();
            let v: Vec<C64> = psi2[t + 1].iter().zip(&k2).map(|(p, k)| p + k).collect();
            let (alpha, beta, gamma) = model.logmgf_x_p(&u).map_err(|e| e.at_time(t))?;
            let arg: Vec<C64> = v.iter().zip(&gamma).map(|(v, g)| v + g).collect();
            let (aq, bq) = model.logmgf_y_q(&arg).map_err(|e| e.at_time(t))?;
            let f = alpha + aq;
            if !(f.re.is_finite() && f.im.is_finite()) || f.re > OVERFLOW_BOUND {
                return Err(Error::Overflow {
                    time: t,
                    value: f.re,
                    bound: OVERFLOW_BOUND,
                });
            }
            phi[t] = f;
            psi1[t] = beta;
            psi2[t] = bq;
        }
        let mut big_phi = vec![ZERO; h + 1];
        for t in (0..h).rev() {
            big_phi[t] = big_phi[t + 1] + phi[t + 1];
        }
        Ok(CoefficientTable {
            horizon: h,
            phi,
            big_phi,
            psi1,
            psi2,
            constant,
        })
    }

    pub fn log_kernel(&self, leg: &LegSpec) -> Result<C64> {
        self.build_table(leg)?.log_kernel(self.model)
    }

    /// `E[(S_M/S_{T'}) exp(-Lambda^m_{r_m} - Lambda^s_{r_s}) | Z_0]` for the leg.
    pub fn expectation_kernel(&self, leg: &LegSpec) -> Result<C64> {
        Ok(self.log_kernel(leg)?.exp())
    }
}

pub fn build_table(model: &AffineModel, leg: &LegSpec) -> Result<CoefficientTable> {
    Engine::new(model).build_table(leg)
}

pub fn expectation_kernel(model: &AffineModel, leg: &LegSpec) -> Result<C64> {
    Engine::new(model).expectation_kernel(leg)
}
