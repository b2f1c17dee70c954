//! Variable annuity contract data and its cash-flow primitives.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Payments `pi_i` at grid dates `T_1 < ... < T_n < T`, a guarantee growing
/// at rate `delta`, surrender penalties on the grid and per-period discount
/// factors `discount_factors[t-1]` for the period `(t-1, t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaContract {
    pub grid: Vec<usize>,
    pub payments: Vec<f64>,
    /// `pi_0`, paid at time 0.
    #[serde(default)]
    pub initial_payment: f64,
    pub delta: f64,
    /// Penalty factor per grid date, keyed by the date.
    pub penalty: BTreeMap<String, f64>,
    pub maturity: usize,
    pub discount_factors: Vec<f64>,
    /// Scales the accumulated guarantee; 0 removes it.
    #[serde(default = "one")]
    pub guarantee_fraction: f64,
}

fn one() -> f64 {
    1.0
}

impl VaContract {
    /// Single-payment contract with a flat penalty and flat discounting.
    pub fn single(
        t1: usize,
        payment: f64,
        maturity: usize,
        delta: f64,
        penalty: f64,
        discount: f64,
    ) -> Result<Self> {
        let c = Self {
            grid: vec![t1],
            payments: vec![payment],
            initial_payment: 0.0,
            delta,
            penalty: BTreeMap::from([(t1.to_string(), penalty)]),
            maturity,
            discount_factors: vec![discount; maturity],
            guarantee_fraction: 1.0,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.maturity;
        if self.grid.is_empty() {
            return Err(Error::config("contract.grid must be non-empty"));
        }
        if self.grid.len() != self.payments.len() {
            return Err(Error::Dimension {
                what: "contract.payments".into(),
                expected: self.grid.len(),
                got: self.payments.len(),
            });
        }
        if self.grid[0] == 0 || self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(
                "contract.grid must be strictly increasing and start at >= 1",
            ));
        }
        if *self.grid.last().unwrap() >= t {
            return Err(Error::config("contract.grid must end before maturity"));
        }
        if self
            .payments
            .iter()
            .chain(std::iter::once(&self.initial_payment))
            .any(|p| !(p.is_finite() && *p >= 0.0))
        {
            return Err(Error::config("contract payments must be finite and >= 0"));
        }
        if !self.delta.is_finite() {
            return Err(Error::config("contract.delta must be finite"));
        }
        if !(self.guarantee_fraction >= 0.0 && self.guarantee_fraction.is_finite()) {
            return Err(Error::config("contract.guarantee_fraction must be >= 0"));
        }
        if self.discount_factors.len() != t {
            return Err(Error::Dimension {
                what: "contract.discount_factors".into(),
                expected: t,
                got: self.discount_factors.len(),
            });
        }
        if self
            .discount_factors
            .iter()
            .any(|f| !(f.is_finite() && *f > 0.0))
        {
            return Err(Error::config("discount factors must be > 0"));
        }
        for (key, &v) in &self.penalty {
            let date: usize = key
                .parse()
                .map_err(|_| Error::config(format!("penalty key {key:?} is not a date")))?;
            if !self.grid.contains(&date) {
                return Err(Error::config(format!(
                    "penalty date {date} is not on the grid"
                )));
            }
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(format!(
                    "penalty at {date} must lie in (0, 1]"
                )));
            }
        }
        for &d in &self.grid {
            if !self.penalty.contains_key(&d.to_string()) {
                return Err(Error::config(format!("missing penalty for grid date {d}")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.grid.len()
    }

    /// Grid date `T_i` with `T_0 = 0` and `T_{n+1} = T`.
    pub fn date(&self, i: usize) -> usize {
        match i {
            0 => 0,
            i if i <= self.n() => self.grid[i - 1],
            _ => self.maturity,
        }
    }

    /// Payment `pi_i`, with `pi_0` the initial payment.
    pub fn payment(&self, i: usize) -> f64 {
        if i == 0 {
            self.initial_payment
        } else {
            self.payments[i - 1]
        }
    }

    /// Penalty factor `p(T_k)`.
    pub fn penalty_at(&self, date: usize) -> Result<f64> {
        self.penalty
            .get(&date.to_string())
            .copied()
            .ok_or_else(|| Error::Index(format!("no penalty at date {date}")))
    }

    /// `beta(t, u) = prod_{r=t+1}^{u} f_r`.
    pub fn discount(&self, t: usize, u: usize) -> f64 {
        self.discount_factors[t..u].iter().product()
    }

    /// Accumulated guarantee `K_t`.
    pub fn guarantee_value(&self, t: usize) -> f64 {
        let k: f64 = self
            .grid
            .iter()
            .zip(&self.payments)
            .filter(|(d, _)| **d <= t)
            .map(|(&d, &p)| (self.delta * (t - d) as f64).exp() * p)
            .sum();
        self.guarantee_fraction * k
    }

    /// Fund value `F_t = S_t sum_{T_i <= t} pi_i / S_{T_i}` along a price path.
    pub fn fund_value(&self, s_path: &[f64], t: usize) -> Result<f64> {
        if s_path.len() <= t {
            return Err(Error::Index(format!("price path ends before t={t}")));
        }
        if let Some((i, &p)) = s_path[..=t]
            .iter()
            .enumerate()
            .find(|(_, p)| p.is_nan() || **p <= 0.0)
        {
            return Err(Error::NonpositivePrice { time: i, price: p });
        }
        let units: f64 = self
            .grid
            .iter()
            .zip(&self.payments)
            .filter(|(d, _)| **d <= t)
            .map(|(&d, &p)| p / s_path[d])
            .sum();
        Ok(units * s_path[t])
    }

    /// First date of `grid ∪ {T}` at or after `t`.
    pub fn settle_date(&self, t: usize) -> usize {
        self.grid
            .iter()
            .copied()
            .find(|&d| d >= t)
            .unwrap_or(self.maturity)
    }

    /// Grid index `k` (1-based) with `T_{k-1} < t <= T_k`, or `None` after `T_n`.
    pub fn grid_period(&self, t: usize) -> Option<usize> {
        self.grid.iter().position(|&d| d >= t).map(|k| k + 1)
    }

    pub fn total_payments(&self) -> f64 {
        self.initial_payment + self.payments.iter().sum::<f64>()
    }

    /// Copy with every penalty multiplied by `k`.
    pub fn with_penalty_scale(&self, k: f64) -> Result<Self> {
        let mut c = self.clone();
        c.penalty.values_mut().for_each(|v| *v *= k);
        c.validate()?;
        Ok(c)
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self {
            delta,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn two_payments() -> VaContract {
        VaContract {
            grid: vec![1, 2],
            payments: vec![100.0, 100.0],
            initial_payment: 0.0,
            delta: 0.02,
            penalty: BTreeMap::from([("1".into(), 0.9), ("2".into(), 0.95)]),
            maturity: 4,
            discount_factors: vec![0.99, 0.98, 0.97, 0.96],
            guarantee_fraction: 1.0,
        }
    }

    #[test]
    fn guarantee_examples() {
        let c = two_payments();
        c.validate().unwrap();
        assert_eq!(c.guarantee_value(0), 0.0);
        assert_relative_eq!(
            c.guarantee_value(3),
            100.0 * 0.04f64.exp() + 100.0 * 0.02f64.exp()
        );
        let flat = c.with_delta(0.0);
        assert_relative_eq!(flat.guarantee_value(4), 200.0);
    }

    #[test]
    fn fund_examples() {
        let c = two_payments();
        let s = [1.0, 1.1, 0.9, 1.2, 1.3];
        assert_relative_eq!(c.fund_value(&s, 1).unwrap(), 100.0);
        assert_relative_eq!(
            c.fund_value(&s, 3).unwrap(),
            (100.0 / 1.1 + 100.0 / 0.9) * 1.2
        );
        assert_relative_eq!(c.fund_value(&[2.0; 5], 4).unwrap(), 200.0);
        assert_eq!(c.fund_value(&s, 0).unwrap(), 0.0);
        assert!(matches!(
            c.fund_value(&[1.0, 0.0, 1.0], 2),
            Err(Error::NonpositivePrice { time: 1, .. })
        ));
    }

    #[test]
    fn settlement_examples() {
        let c = two_payments();
        assert_eq!(c.settle_date(1), 1);
        assert_eq!(c.settle_date(2), 2);
        assert_eq!(c.settle_date(3), 4);
        assert_eq!(c.settle_date(4), 4);
        assert_eq!(c.grid_period(2), Some(2));
        assert_eq!(c.grid_period(3), None);
    }

    #[test]
    fn discount_is_multiplicative() {
        let c = two_payments();
        assert_eq!(c.discount(2, 2), 1.0);
        assert_relative_eq!(c.discount(0, 4), c.discount(0, 1) * c.discount(1, 4));
    }

    #[test]
    fn validation_rejects_bad_contracts() {
        let mut c = two_payments();
        c.grid = vec![2, 1];
        assert!(c.validate().is_err());
        let mut c = two_payments();
        c.penalty.insert("2".into(), 1.5);
        assert!(c.validate().is_err());
        let mut c = two_payments();
        c.penalty.remove("1");
        assert!(c.validate().is_err());
        let mut c = two_payments();
        c.grid = vec![1, 4];
        assert!(c.validate().is_err());
        let mut c = two_payments();
        c.discount_factors.pop();
        assert!(matches!(c.validate(), Err(Error::Dimension { .. })));
    }

    proptest! {
        #[test]
        fn fund_is_homogeneous_and_scale_free(
            k in 0.1f64..10.0,
            scale in 0.1f64..10.0,
            s in proptest::collection::vec(0.2f64..5.0, 5),
            t in 0usize..5,
        ) {
            let c = two_payments();
            let mut ck = c.clone();
            ck.payments.iter_mut().for_each(|p| *p *= k);
            let f = c.fund_value(&s, t).unwrap();
            prop_assert!((ck.fund_value(&s, t).unwrap() - k * f).abs() <= 1e-10 * (1.0 + f.abs()) * k);
            let scaled: Vec<f64> = s.iter().map(|v| v * scale).collect();
            prop_assert!((c.fund_value(&scaled, t).unwrap() - f).abs() <= 1e-10 * (1.0 + f.abs()));
        }

        #[test]
        fn guarantee_nondecreasing(delta in 0.0f64..0.2) {
            let c = two_payments().with_delta(delta);
            for t in 0..4 {
                prop_assert!(c.guarantee_value(t + 1) >= c.guarantee_value(t));
            }
        }

        #[test]
        fn settle_idempotent(t in 1usize..=4) {
            let c = two_payments();
            let d = c.settle_date(t);
            prop_assert!(d >= t);
            prop_assert_eq!(c.settle_date(d), d);
        }
    }
}
