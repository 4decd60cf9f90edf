//! Structural diagnostics: lattice detection, Diophantine scans and the
//! right end `B` of the large-deviation range.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use super::{AnalyticFamily, Model};
use crate::error::{Error, Result};
use crate::spectral::perron;

/// Largest denominator tried when testing ratios for rationality.
const MAX_DENOMINATOR: i64 = 1000;
const RATIONAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeCheck {
    pub nonlattice: bool,
    /// Generating step of the lattice containing all atom differences.
    pub step: Option<f64>,
}

/// Continued-fraction search for `p/q` with `|x - p/q| <= tol max(1, |x|)`.
fn rational_approx(x: f64) -> Option<(i64, i64)> {
    let tol = RATIONAL_TOLERANCE * x.abs().max(1.0);
    let (mut p0, mut q0, mut p1, mut q1) = (0i64, 1i64, 1i64, 0i64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 1e12 {
            return None;
        }
        let a = a as i64;
        let (p2, q2) = (a * p1 + p0, a * q1 + q0);
        if q2 > MAX_DENOMINATOR {
            return None;
        }
        if (x - p2 as f64 / q2 as f64).abs() <= tol {
            return Some((p2, q2));
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let frac = r - a as f64;
        if frac.abs() < 1e-15 {
            return None;
        }
        r = 1.0 / frac;
    }
    None
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Tests whether all pairwise differences of `atoms` lie on a common
/// lattice `step * Z` (ratios recognised as rationals with denominator at
/// most 1000 to relative tolerance 1e-9).
pub fn nonlattice_check(atoms: &[f64]) -> LatticeCheck {
    let Some(&first) = atoms.first() else {
        return LatticeCheck { nonlattice: false, step: None };
    };
    let diffs: Vec<f64> = atoms.iter().map(|a| a - first).filter(|d| d.abs() > 0.0).collect();
    let Some(&base) = diffs.iter().min_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap()) else {
        return LatticeCheck { nonlattice: false, step: None };
    };
    let mut ratios = Vec::with_capacity(diffs.len());
    for d in &diffs {
        match rational_approx(d / base) {
            Some(pq) => ratios.push(pq),
            None => return LatticeCheck { nonlattice: true, step: None },
        }
    }
    let lcm = ratios.iter().fold(1i64, |l, &(_, q)| l / gcd(l, q) * q);
    let g = ratios.iter().fold(0i64, |g, &(p, q)| gcd(g, p * (lcm / q)));
    LatticeCheck { nonlattice: false, step: Some((base * g as f64 / lcm as f64).abs()) }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiophantineReport {
    /// `(s, d(s))` with `d(s) = max_j dist(b_j s, 2 pi Z)`.
    pub points: Vec<(f64, f64)>,
    /// `(beta, min_s d(s) s^beta)` over a grid of exponents.
    pub scaled_minima: Vec<(f64, f64)>,
    /// Exponent fitted to the lower envelope of `d`, when it is positive.
    pub beta_hat: Option<f64>,
    pub lattice_flag: bool,
    /// Largest `c` with `1 - |E e^{isX}| >= c d(s)^2` on the grid.
    pub lemma_c: Option<f64>,
}

fn dist_to_2pi_lattice(x: f64) -> f64 {
    let r = x.rem_euclid(2.0 * PI);
    r.min(2.0 * PI - r)
}

/// Tabulates `d(s)` on a log-spaced grid of `s` in `(1, s_max]` (plus the
/// lattice frequencies when the values are commensurable) and fits the
/// decay exponent of its lower envelope. With `probs`, also checks the
/// characteristic-function bound `1 - |phi(s)| >= c d(s)^2`.
pub fn diophantine_scan(values: &[f64], probs: Option<&[f64]>, s_max: f64, grid: usize) -> Result<DiophantineReport> {
    if !(s_max > 1.0) || grid < 2 {
        return Err(Error::Config("diophantine scan needs s_max > 1 and at least 2 grid points".into()));
    }
    if let Some(p) = probs {
        if p.len() != values.len() {
            return Err(Error::Config("probabilities and values differ in length".into()));
        }
    }
    let b: Vec<f64> = values.iter().map(|v| v - values[0]).filter(|d| d.abs() > 0.0).collect();
    let d = |s: f64| b.iter().map(|bj| dist_to_2pi_lattice(bj * s)).fold(0.0, f64::max);

    let mut grid_s: Vec<f64> = (1..=grid).map(|i| (s_max.ln() * i as f64 / grid as f64).exp()).collect();
    if let Some(step) = nonlattice_check(values).step {
        let base = 2.0 * PI / step;
        let mut k = 1.0;
        while k * base <= s_max {
            if k * base > 1.0 {
                grid_s.push(k * base);
            }
            k += 1.0;
        }
    }
    grid_s.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let points: Vec<(f64, f64)> = grid_s.iter().map(|&s| (s, d(s))).collect();
    let lattice_flag = points.iter().any(|&(_, v)| v <= 1e-9);

    let scaled_minima = (0..=8)
        .map(|i| {
            let beta = 0.5 * i as f64;
            let m = points.iter().map(|&(s, v)| v * s.powf(beta)).fold(f64::INFINITY, f64::min);
            (beta, m)
        })
        .collect();

    // Lower envelope: minimum of d in each of a few log-s bins.
    let bins = (grid / 10).clamp(2, 20);
    let mut envelope = vec![f64::INFINITY; bins];
    let mut at = vec![0.0; bins];
    for &(s, v) in &points {
        let idx = ((s.ln() / s_max.ln()) * bins as f64).floor().clamp(0.0, bins as f64 - 1.0) as usize;
        if v < envelope[idx] {
            envelope[idx] = v;
            at[idx] = s;
        }
    }
    let fit: Vec<(f64, f64)> = envelope
        .iter()
        .zip(&at)
        .filter(|(v, _)| v.is_finite() && **v > 1e-12)
        .map(|(v, s)| (s.ln(), v.ln()))
        .collect();
    let beta_hat = if lattice_flag || fit.len() < 2 {
        None
    } else {
        let n = fit.len() as f64;
        let mx = fit.iter().map(|p| p.0).sum::<f64>() / n;
        let my = fit.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = fit.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = fit.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        (sxx > 0.0).then(|| -sxy / sxx)
    };

    let lemma_c = probs.map(|p| {
        points
            .iter()
            .filter(|&&(_, v)| v > 1e-9)
            .map(|&(s, v)| {
                let phi: Complex64 = values
                    .iter()
                    .zip(p)
                    .map(|(&x, &w)| Complex64::from_polar(w, s * x))
                    .sum();
                (1.0 - phi.norm()) / (v * v)
            })
            .fold(f64::INFINITY, f64::min)
    });

    Ok(DiophantineReport { points, scaled_minima, beta_hat, lattice_flag, lemma_c })
}

/// Maximum mean weight of a cycle in the complete digraph with edge
/// weights `w[j][k]` (Karp's algorithm on the negated weights).
pub fn karp_max_mean_cycle(w: &[Vec<f64>]) -> f64 {
    let n = w.len();
    assert!(n > 0 && w.iter().all(|r| r.len() == n), "weight matrix must be square");
    // dp[k][v]: minimum negated weight of a k-edge walk ending at v.
    let mut dp = vec![vec![f64::INFINITY; n]; n + 1];
    dp[0].iter_mut().for_each(|x| *x = 0.0);
    for k in 1..=n {
        for v in 0..n {
            let mut best = f64::INFINITY;
            for u in 0..n {
                best = best.min(dp[k - 1][u] - w[u][v]);
            }
            dp[k][v] = best;
        }
    }
    let mut mu = f64::INFINITY;
    for v in 0..n {
        let mut worst = f64::NEG_INFINITY;
        for k in 0..n {
            worst = worst.max((dp[n][v] - dp[k][v]) / (n - k) as f64);
        }
        mu = mu.min(worst);
    }
    -mu
}

/// Bounds on `B`, the right end of the large-deviation range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LdpRange {
    pub lower: f64,
    pub upper: f64,
    pub exact: bool,
}

impl LdpRange {
    fn exact(b: f64) -> Self {
        Self { lower: b, upper: b, exact: true }
    }
}

/// `log lambda(t) / t` at a large tilt `t`, a lower bound for `B`.
fn eigenvalue_proxy(family: &dyn AnalyticFamily, spread: f64) -> Result<f64> {
    let mut t = 40.0 / spread.max(1e-12);
    for _ in 0..8 {
        match perron(&family.evaluate(Complex64::new(t, 0.0))?) {
            Ok(p) if p.lambda.re > 0.0 && p.lambda.re.is_finite() => return Ok(p.lambda.re.ln() / t),
            _ => t /= 2.0,
        }
    }
    Err(Error::Numerical("could not evaluate the eigenvalue proxy for B".into()))
}

/// The range end `B = lim sup S_N / N`. Exact for finite-state models
/// (`exact = true`); for continuous models `[lower, upper]` brackets it.
pub fn ldp_range(model: &Model) -> Result<LdpRange> {
    match model {
        Model::IidFinite(m) => Ok(LdpRange::exact(m.atoms().iter().copied().fold(f64::NEG_INFINITY, f64::max))),
        Model::FiniteMarkov(m) => Ok(LdpRange::exact(karp_max_mean_cycle(m.observable()))),
        Model::IidMgf(m) => Ok(LdpRange::exact(m.support_max())),
        Model::Nystrom(m) => {
            let n = m.nodes().len();
            let h = m.observable_values();
            let rows: Vec<Vec<f64>> = (0..n).map(|i| h[i * n..(i + 1) * n].to_vec()).collect();
            let lower = karp_max_mean_cycle(&rows);
            let upper = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(LdpRange { lower, upper: upper.max(lower), exact: false })
        }
        Model::Fourier(m) => {
            let g = m.observable();
            let fine = 4096;
            let (lo, hi) = (0..fine)
                .map(|i| g.eval(i as f64 / fine as f64))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
            let upper = hi + g.lipschitz() / (2.0 * fine as f64);
            let lower = eigenvalue_proxy(m, hi - lo)?.min(upper);
            Ok(LdpRange { lower, upper, exact: false })
        }
    }
}
