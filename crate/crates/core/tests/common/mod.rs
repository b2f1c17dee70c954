//! Independent reference computations shared by the integration tests.
//! Nothing here goes through the coefficient recursion.
#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, SymmetricEigen};
use va_affine::C64;

pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Nodes and probability weights from a symmetric Jacobi matrix.
fn golub_welsch(diag: &[f64], off: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        j[(i, i)] = diag[i];
        if i + 1 < n {
            j[(i, i + 1)] = off[i];
            j[(i + 1, i)] = off[i];
        }
    }
    let eig = SymmetricEigen::new(j);
    let w = (0..n).map(|i| eig.eigenvectors[(0, i)].powi(2)).collect();
    (eig.eigenvalues.as_slice().to_vec(), w)
}

/// Gauss-Hermite rule for the standard normal law.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let off: Vec<f64> = (1..n).map(|i| (i as f64).sqrt()).collect();
    golub_welsch(&vec![0.0; n], &off)
}

/// Generalized Gauss-Laguerre rule for the Gamma(`shape`, 1) law.
pub fn gauss_laguerre(n: usize, shape: f64) -> (Vec<f64>, Vec<f64>) {
    let alpha = shape - 1.0;
    let diag: Vec<f64> = (0..n).map(|i| 2.0 * i as f64 + alpha + 1.0).collect();
    let off: Vec<f64> = (1..n)
        .map(|i| (i as f64 * (i as f64 + alpha)).sqrt())
        .collect();
    golub_welsch(&diag, &off)
}

/// Contributions below this probability weight are dropped.
const PRUNE: f64 = 1e-18;
const MAX_POISSON: usize = 400;

/// Poisson-mixed gamma transition `X' | X = x ~ Gamma(k + N, c)`,
/// `N ~ Poisson(rho x / c)`, integrated by per-shape Laguerre rules.
pub struct ArgLaw {
    pub shape: f64,
    pub scale: f64,
    pub persistence: f64,
    rules: Vec<(Vec<f64>, Vec<f64>)>,
}

impl ArgLaw {
    pub fn new(shape: f64, scale: f64, persistence: f64, nodes: usize) -> Self {
        let rules = (0..=MAX_POISSON)
            .map(|n| {
                let (x, w) = gauss_laguerre(nodes, shape + n as f64);
                (x.into_iter().map(|x| x * scale).collect(), w)
            })
            .collect();
        Self {
            shape,
            scale,
            persistence,
            rules,
        }
    }

    /// `sum_j p_j f(x_j)` approximating `E[f(X') | X = x]`, skipping
    /// points whose weight times `acc` is negligible.
    pub fn expect<T>(&self, x: f64, acc: f64, mut f: impl FnMut(f64, f64) -> T) -> T
    where
        T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
    {
        let lambda = self.persistence * x / self.scale;
        let mut pmf = (-lambda).exp();
        let mut total = T::default();
        for n in 0..=MAX_POISSON {
            if n > 0 {
                pmf *= lambda / n as f64;
            }
            if n as f64 > lambda && acc * pmf < PRUNE {
                break;
            }
            let (xs, ws) = &self.rules[n];
            for (&xn, &w) in xs.iter().zip(ws) {
                let p = pmf * w;
                if acc * p < PRUNE {
                    continue;
                }
                total = total + f(xn, acc * p) * p;
            }
        }
        total
    }
}

/// `E[exp(sum_{t=1}^H theta[t-1] X_t) | X_0 = x0]` for one ARG coordinate.
pub fn arg_chain(law: &ArgLaw, theta: &[f64], x0: f64) -> f64 {
    fn go(law: &ArgLaw, theta: &[f64], x: f64, acc: f64) -> f64 {
        match theta.split_first() {
            None => 1.0,
            Some((&th, rest)) => law.expect(x, acc, |xn, a| (th * xn).exp() * go(law, rest, xn, a)),
        }
    }
    go(law, theta, x0, 1.0)
}

/// Gaussian AR(1) step `Y' = mu + rho Y + sigma eps`.
pub struct GaussLaw {
    pub mu: f64,
    pub rho: f64,
    pub sigma: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLaw {
    pub fn new(mu: f64, rho: f64, sigma: f64, nodes: usize) -> Self {
        let (nodes, weights) = gauss_hermite(nodes);
        Self {
            mu,
            rho,
            sigma,
            nodes,
            weights,
        }
    }
}

/// `E[exp(sum_{t=1}^M theta[t-1] Y_t) | Y_0 = y0]` for complex `theta`.
pub fn gauss_chain(law: &GaussLaw, theta: &[C64], y0: f64) -> C64 {
    match theta.split_first() {
        None => C64::new(1.0, 0.0),
        Some((&th, rest)) => law
            .nodes
            .iter()
            .zip(&law.weights)
            .map(|(&e, &w)| {
                let y = law.mu + law.rho * y0 + law.sigma * e;
                (th * y).exp() * gauss_chain(law, rest, y) * w
            })
            .sum(),
    }
}

/// Joint chain of an ARG `X` loaded on an i.i.d. gamma `Y` coordinate:
/// `X_t = ARG draw + eta Y_t`. Returns
/// `E[exp(sum_t theta_x[t-1] X_t + theta_y[t-1] Y_t) | X_0 = x0]`.
pub fn coupled_chain(
    x_law: &ArgLaw,
    y_rule: &(Vec<f64>, Vec<f64>),
    eta: f64,
    theta_x: &[f64],
    theta_y: &[C64],
    x0: f64,
) -> C64 {
    fn go(
        x_law: &ArgLaw,
        y_rule: &(Vec<f64>, Vec<f64>),
        eta: f64,
        tx: &[f64],
        ty: &[C64],
        x: f64,
        acc: f64,
    ) -> C64 {
        if tx.is_empty() {
            return C64::new(1.0, 0.0);
        }
        let mut total = C64::new(0.0, 0.0);
        for (&y, &wy) in y_rule.0.iter().zip(&y_rule.1) {
            let inner = x_law.expect(x, acc * wy, |xn, a| {
                let xt = xn + eta * y;
                Cx((tx[0] * xt).exp() * go(x_law, y_rule, eta, &tx[1..], &ty[1..], xt, a))
            });
            total += (ty[0] * y).exp() * inner.0 * wy;
        }
        total
    }
    assert_eq!(theta_x.len(), theta_y.len());
    go(x_law, y_rule, eta, theta_x, theta_y, x0, 1.0)
}

/// Complex wrapper with the arithmetic [`ArgLaw::expect`] needs.
#[derive(Clone, Copy, Default)]
pub struct Cx(pub C64);

impl std::ops::Add for Cx {
    type Output = Cx;
    fn add(self, o: Cx) -> Cx {
        Cx(self.0 + o.0)
    }
}

impl std::ops::Mul<f64> for Cx {
    type Output = Cx;
    fn mul(self, k: f64) -> Cx {
        Cx(self.0 * k)
    }
}

/// Clayton survival copula written out directly.
pub fn clayton(theta: f64, u: f64, v: f64) -> f64 {
    if u <= 0.0 || v <= 0.0 {
        return 0.0;
    }
    (u.powf(-theta) + v.powf(-theta) - 1.0).powf(-1.0 / theta)
}

/// Per-period default probabilities turned into a pmf of `tau` on
/// `1..=T+1` (index `T+1` meaning survival past `T`).
pub fn pmf_from_increments(inc: &[f64]) -> Vec<f64> {
    let mut pmf = vec![0.0; inc.len() + 2];
    let mut alive = 1.0;
    for (t, h) in inc.iter().enumerate() {
        let q = 1.0 - (-h).exp();
        pmf[t + 1] = alive * q;
        alive *= 1.0 - q;
    }
    pmf[inc.len() + 1] = alive;
    pmf
}

pub fn cumulative(inc: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0];
    for h in inc {
        v.push(v.last().unwrap() + h);
    }
    v
}

/// Joint pmf of `(tau_m, tau_s)` on `1..=T+1` squared.
pub fn joint_pmf(inc_m: &[f64], inc_s: &[f64], clayton_theta: Option<f64>) -> Vec<Vec<f64>> {
    let big_t = inc_m.len();
    let n = big_t + 2;
    let mut p = vec![vec![0.0; n]; n];
    match clayton_theta {
        None => {
            let pm = pmf_from_increments(inc_m);
            let ps = pmf_from_increments(inc_s);
            for u in 1..n {
                for v in 1..n {
                    p[u][v] = pm[u] * ps[v];
                }
            }
        }
        Some(th) => {
            let lm = cumulative(inc_m);
            let ls = cumulative(inc_s);
            // P(tau_m > i, tau_s > j), with i, j = T+1 meaning "never"
            let surv = |i: usize, j: usize| {
                let sm = if i > big_t { 0.0 } else { (-lm[i]).exp() };
                let ss = if j > big_t { 0.0 } else { (-ls[j]).exp() };
                clayton(th, sm, ss)
            };
            for u in 1..n {
                for v in 1..n {
                    p[u][v] = surv(u - 1, v - 1) - surv(u, v - 1) - surv(u - 1, v) + surv(u, v);
                }
            }
        }
    }
    p
}

pub fn rel_err(got: C64, want: C64) -> f64 {
    (got - want).norm() / want.norm().max(1e-300)
}
