//! Independent estimates of `P(S_N >= threshold)`: exact enumeration for
//! iid laws, a dynamic program for finite chains, exponentially tilted
//! Monte Carlo, and certified cylinder brackets for expanding maps.

use std::collections::HashMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::{AnalyticFamily, FiniteMarkovModel, FourierTransferModel, IidFiniteModel};
use crate::scalar::KahanSum;
use crate::spectral::perron;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    IidExact,
    MarkovDp,
    TiltedMc,
    Cylinder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleEstimate {
    pub value: f64,
    /// Zero for exact enumeration; Monte Carlo standard error; half the
    /// bracket width for cylinders.
    pub std_err: f64,
    pub n: u64,
    pub method: OracleMethod,
    /// Certified `[lower, upper]` for the cylinder method.
    pub bracket: Option<(f64, f64)>,
}

/// Sums within this relative distance of the threshold count as reaching it.
pub const TIE_TOLERANCE: f64 = 1e-12;
pub const MAX_COMPOSITIONS: f64 = 1e7;

fn reaches(sum: f64, threshold: f64) -> bool {
    sum >= threshold - TIE_TOLERANCE * threshold.abs().max(1.0)
}

fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// Number of compositions of `n` into `d` nonnegative parts, as `f64`.
fn composition_count(n: u64, d: usize) -> f64 {
    // C(n + d - 1, d - 1)
    let mut c = 1.0;
    for i in 1..d {
        c *= (n as f64 + i as f64) / i as f64;
    }
    c
}

/// Exact tail by enumerating count vectors `(n_1, .., n_d)` with
/// multinomial weights.
pub fn iid_exact_tail(m: &IidFiniteModel, n: u64, threshold: f64) -> Result<OracleEstimate> {
    let d = m.atoms().len();
    let count = composition_count(n, d);
    if count > MAX_COMPOSITIONS {
        return Err(Error::Scale(format!(
            "{count:.3e} count vectors for N = {n} and {d} atoms exceeds {MAX_COMPOSITIONS:e}"
        )));
    }
    let nn = n as usize;
    let lf = log_factorials(nn);
    let logp: Vec<f64> = m.probs().iter().map(|p| p.ln()).collect();
    let atoms = m.atoms();
    let mut acc = KahanSum::new();
    let mut counts = vec![0usize; d];
    fn recurse(
        i: usize,
        left: usize,
        counts: &mut [usize],
        atoms: &[f64],
        logp: &[f64],
        lf: &[f64],
        threshold: f64,
        acc: &mut KahanSum<f64>,
    ) {
        let d = counts.len();
        if i == d - 1 {
            counts[i] = left;
            let sum: f64 = counts.iter().zip(atoms).map(|(&c, &a)| c as f64 * a).sum();
            if reaches(sum, threshold) {
                let n: usize = counts.iter().sum();
                let mut lp = lf[n];
                for (j, &c) in counts.iter().enumerate() {
                    lp += c as f64 * logp[j] - lf[c];
                }
                acc.add(lp.exp());
            }
            return;
        }
        for c in 0..=left {
            counts[i] = c;
            recurse(i + 1, left - c, counts, atoms, logp, lf, threshold, acc);
        }
    }
    recurse(0, nn, &mut counts, atoms, &logp, &lf, threshold, &mut acc);
    Ok(OracleEstimate {
        value: acc.value().clamp(0.0, 1.0),
        std_err: 0.0,
        n,
        method: OracleMethod::IidExact,
        bracket: None,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct DpOptions {
    pub max_n: u64,
    /// Absolute rounding used to merge partial sums.
    pub merge_key: f64,
    pub max_keys: usize,
}

impl Default for DpOptions {
    fn default() -> Self {
        Self { max_n: 18, merge_key: 1e-9, max_keys: 10_000_000 }
    }
}

/// Dynamic program over `(state, partial sum)`. Sums closer than the merge
/// key are merged; merges of genuinely different sums are charged to
/// `std_err` as merge count times the largest merged mass.
pub fn markov_dp_tail(m: &FiniteMarkovModel, n: u64, threshold: f64, opts: DpOptions) -> Result<OracleEstimate> {
    if n > opts.max_n {
        return Err(Error::Scale(format!("N = {n} exceeds the dynamic-programming cap {}", opts.max_n)));
    }
    let d = m.states();
    let p = m.transition();
    let h = m.observable();
    let key = |s: f64| (s / opts.merge_key).round() as i64;
    // (state, key) -> (mass, representative sum)
    let mut layer: HashMap<(usize, i64), (f64, f64)> = HashMap::new();
    for (j, &w) in m.initial().iter().enumerate() {
        if w > 0.0 {
            layer.insert((j, 0), (w, 0.0));
        }
    }
    let mut merges = 0usize;
    let mut max_merged: f64 = 0.0;
    for _ in 0..n {
        let mut next: HashMap<(usize, i64), (f64, f64)> = HashMap::with_capacity(layer.len() * d);
        // Deterministic traversal order.
        let mut entries: Vec<_> = layer.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        for ((j, _), (mass, sum)) in entries {
            for k in 0..d {
                let s = sum + h[j][k];
                let w = mass * p[j][k];
                let slot = next.entry((k, key(s))).or_insert((0.0, s));
                if slot.0 > 0.0 && (slot.1 - s).abs() > 1e-12 * s.abs().max(1.0) {
                    merges += 1;
                    max_merged = max_merged.max(w.min(slot.0));
                }
                slot.0 += w;
            }
            if next.len() > opts.max_keys {
                return Err(Error::Scale(format!(
                    "dynamic program exceeded {} (state, sum) keys",
                    opts.max_keys
                )));
            }
        }
        layer = next;
    }
    let mut entries: Vec<_> = layer.into_iter().collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    let acc: KahanSum<f64> = entries
        .iter()
        .filter(|(_, (_, s))| reaches(*s, threshold))
        .map(|(_, (w, _))| *w)
        .collect();
    Ok(OracleEstimate {
        value: acc.value().clamp(0.0, 1.0),
        std_err: merges as f64 * max_merged,
        n,
        method: OracleMethod::MarkovDp,
        bracket: None,
    })
}

/// Doob transform of a finite chain at tilt `theta`:
/// `p_bar[j][k] = e^{theta h_jk} p_jk g_k / (lambda g_j)`.
#[derive(Debug, Clone)]
pub struct TiltedChain {
    pub theta: f64,
    pub lambda: f64,
    /// Right Perron vector, positive.
    pub g: Vec<f64>,
    pub p: Vec<Vec<f64>>,
    pub p_bar: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub mu0: Vec<f64>,
}

impl TiltedChain {
    pub fn new(m: &FiniteMarkovModel, theta: f64) -> Result<Self> {
        let pd = perron(&m.evaluate(Complex64::new(theta, 0.0))?)?;
        let lambda = pd.lambda.re;
        // Fix the phase so the eigenvector is real and positive.
        let pivot = pd.right.iter().max_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap()).copied().unwrap();
        let g: Vec<f64> = pd.right.iter().map(|x| (x / pivot).re).collect();
        if !(lambda > 0.0) || g.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::Numerical("tilted chain needs a positive Perron vector".into()));
        }
        let d = m.states();
        let p = m.transition().to_vec();
        let h = m.observable().to_vec();
        let mut p_bar = vec![vec![0.0; d]; d];
        for j in 0..d {
            for k in 0..d {
                p_bar[j][k] = (theta * h[j][k]).exp() * p[j][k] * g[k] / (lambda * g[j]);
            }
            let s: f64 = p_bar[j].iter().sum();
            p_bar[j].iter_mut().for_each(|x| *x /= s);
        }
        Ok(Self { theta, lambda, g, p, p_bar, h, mu0: m.initial().to_vec() })
    }

    /// Importance weight `lambda^N e^{-theta S} g(x_0)/g(x_N)` of a path.
    pub fn weight(&self, path: &[usize]) -> f64 {
        let n = path.len() - 1;
        let s: f64 = path.windows(2).map(|w| self.h[w[0]][w[1]]).sum();
        let lw = n as f64 * self.lambda.ln() - self.theta * s + self.g[path[0]].ln() - self.g[path[n]].ln();
        lw.exp()
    }

    /// `prod p[x_{k-1}][x_k]` and `prod p_bar[x_{k-1}][x_k]`.
    pub fn path_probabilities(&self, path: &[usize]) -> (f64, f64) {
        path.windows(2).fold((1.0, 1.0), |(a, b), w| (a * self.p[w[0]][w[1]], b * self.p_bar[w[0]][w[1]]))
    }

    fn sample_index<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
        let u: f64 = rng.gen();
        let mut c = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            c += p;
            if u < c {
                return i;
            }
        }
        probs.len() - 1
    }

    /// Samples `x_0 ~ mu0` and `N` tilted transitions.
    pub fn sample_path<R: Rng>(&self, rng: &mut R, n: u64, path: &mut Vec<usize>) {
        path.clear();
        let mut x = Self::sample_index(rng, &self.mu0);
        path.push(x);
        for _ in 0..n {
            x = Self::sample_index(rng, &self.p_bar[x]);
            path.push(x);
        }
    }
}

/// An iid law as a chain whose state is the last atom drawn.
pub fn iid_as_chain(m: &IidFiniteModel) -> Result<FiniteMarkovModel> {
    let d = m.atoms().len();
    let probs = m.probs().to_vec();
    FiniteMarkovModel::new(vec![probs.clone(); d], vec![m.atoms().to_vec(); d], probs)
}

const BATCH: u64 = 4096;

/// Importance-sampling estimate under the tilted chain. Deterministic for a
/// given seed: batch `b` draws from the ChaCha stream `b` of `seed`.
pub fn tilted_mc_tail(
    m: &FiniteMarkovModel,
    n: u64,
    threshold: f64,
    theta: f64,
    samples: u64,
    seed: u64,
) -> Result<OracleEstimate> {
    if samples < 2 {
        return Err(Error::Config("Monte Carlo needs at least 2 samples".into()));
    }
    let chain = TiltedChain::new(m, theta)?;
    let batches = samples.div_ceil(BATCH);
    let partial: Vec<(KahanSum<f64>, KahanSum<f64>)> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let count = BATCH.min(samples - b * BATCH);
            let mut s1 = KahanSum::new();
            let mut s2 = KahanSum::new();
            let mut path = Vec::with_capacity(n as usize + 1);
            for _ in 0..count {
                chain.sample_path(&mut rng, n, &mut path);
                let s: f64 = path.windows(2).map(|w| chain.h[w[0]][w[1]]).sum();
                if reaches(s, threshold) {
                    let w = chain.weight(&path);
                    s1.add(w);
                    s2.add(w * w);
                }
            }
            (s1, s2)
        })
        .collect();
    let mut s1 = KahanSum::new();
    let mut s2 = KahanSum::new();
    for (a, b) in &partial {
        s1.merge(a);
        s2.merge(b);
    }
    let nf = samples as f64;
    let mean = s1.value() / nf;
    let var = ((s2.value() / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
    Ok(OracleEstimate {
        value: mean,
        std_err: (var / nf).sqrt(),
        n,
        method: OracleMethod::TiltedMc,
        bracket: None,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct CylinderOptions {
    /// Largest `N` accepted (the level-`N` partition has `2^N` cylinders).
    pub depth_cap: u32,
    /// Deepest refinement of undecided cylinders.
    pub refine_depth: u32,
    /// Refinement stops once the undecided mass is below this fraction of
    /// the certified lower bound.
    pub rel_gap: f64,
}

impl Default for CylinderOptions {
    fn default() -> Self {
        Self { depth_cap: 22, refine_depth: 48, rel_gap: 1e-6 }
    }
}

enum Verdict {
    Inside(f64),
    Outside,
    Undecided(f64),
}

/// Certified bracket for `P(S_N >= threshold)` over the cylinders of `f^N`.
///
/// A cylinder of depth `D >= N` is the image of `[0, 1]` under a
/// composition of inverse branches; its orbit up to time `N` is obtained by
/// composing branches from the inside, so it never iterates `f` forward.
/// On each cylinder `S_N` lies within `sum_k Lip(g) * r_k` of its value at
/// the midpoint, `r_k` being the distance to the ends of the `k`-th image.
/// Decided cylinders contribute their exact `rho`-measure to the bracket;
/// undecided ones are split until `refine_depth`.
pub fn cylinder_tail(m: &FourierTransferModel, n: u64, threshold: f64, opts: CylinderOptions) -> Result<OracleEstimate> {
    if n == 0 {
        return Err(Error::Config("N must be at least 1".into()));
    }
    if n > opts.depth_cap as u64 {
        return Err(Error::Scale(format!(
            "2^{n} cylinders exceed the cap 2^{}",
            opts.depth_cap
        )));
    }
    let refine = opts.refine_depth.clamp(n as u32, 62);
    let map = m.map();
    let g = m.observable();
    let rho = m.density();
    let lip = g.lipschitz();
    let nn = n as usize;

    let classify = |word: u64, depth: u32| -> Verdict {
        let dd = depth as usize;
        let (mut lo, mut mid, mut hi) = (0.0, 0.5, 1.0);
        let mut sum = 0.0;
        let mut var = 0.0;
        for i in (0..dd).rev() {
            // Branch b_{i+1}: bit (dd - 1 - i) from the low end.
            let b = ((word >> (dd - 1 - i)) & 1) as usize;
            lo = map.inverse(b, lo);
            mid = map.inverse(b, mid);
            hi = map.inverse(b, hi);
            if i < nn {
                sum += g.eval(mid);
                var += lip * (mid - lo).max(hi - mid);
            }
        }
        let measure = rho.integral(lo, hi);
        if sum - var >= threshold {
            Verdict::Inside(measure)
        } else if sum + var < threshold {
            Verdict::Outside
        } else {
            Verdict::Undecided(measure)
        }
    };

    let mut inside = KahanSum::new();
    let mut depth = n as u32;
    let mut pending: Vec<u64> = (0..(1u64 << n)).collect();
    loop {
        let verdicts: Vec<Verdict> = pending.par_iter().map(|&w| classify(w, depth)).collect();
        let mut undecided = Vec::new();
        let mut undecided_mass = KahanSum::new();
        for (w, v) in pending.iter().zip(verdicts) {
            match v {
                Verdict::Inside(mu) => inside.add(mu),
                Verdict::Outside => {}
                Verdict::Undecided(mu) => {
                    undecided.push(*w);
                    undecided_mass.add(mu);
                }
            }
        }
        let gap = undecided_mass.value();
        if undecided.is_empty() || depth >= refine || gap <= opts.rel_gap * inside.value() {
            let lower = inside.value().clamp(0.0, 1.0);
            let upper = (inside.value() + gap).clamp(0.0, 1.0);
            return Ok(OracleEstimate {
                value: 0.5 * (lower + upper),
                std_err: 0.5 * (upper - lower),
                n,
                method: OracleMethod::Cylinder,
                bracket: Some((lower, upper)),
            });
        }
        depth += 1;
        pending = undecided.into_iter().flat_map(|w| [w << 1, (w << 1) | 1]).collect();
    }
}
