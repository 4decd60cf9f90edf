//! Quadrature: Gauss–Legendre rules and globally adaptive Gauss–Kronrod.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton on the Legendre
/// recurrence, Tricomi initial guesses).
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = T::lit(-x);
        nodes[n - 1 - i] = T::lit(x);
        weights[i] = T::lit(w);
        weights[n - 1 - i] = T::lit(w);
    }
    if n % 2 == 1 {
        nodes[n / 2] = T::zero();
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, d)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on<T: Real>(n: usize, a: T, b: T) -> (Vec<T>, Vec<T>) {
    let (x, w) = gauss_legendre::<T>(n);
    let half = (b - a) / T::lit(2.0);
    let mid = (a + b) / T::lit(2.0);
    (
        x.iter().map(|&t| mid + half * t).collect(),
        w.iter().map(|&wi| wi * half).collect(),
    )
}

const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

const GK_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

const GAUSS_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One 15-point Kronrod panel: (estimate, error estimate).
fn gk15<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> (T, T) {
    let half = (b - a) / T::lit(2.0);
    let mid = (a + b) / T::lit(2.0);
    let fc = f(mid);
    let mut kronrod = fc * T::lit(GK_WEIGHTS[7]);
    let mut gauss = fc * T::lit(GAUSS_WEIGHTS[3]);
    for i in 0..7 {
        let dx = half * T::lit(GK_NODES[i]);
        let pair = f(mid - dx) + f(mid + dx);
        kronrod += pair * T::lit(GK_WEIGHTS[i]);
        if i % 2 == 1 {
            gauss += pair * T::lit(GAUSS_WEIGHTS[i / 2]);
        }
    }
    let est = kronrod * half;
    let err = ((kronrod - gauss) * half).abs();
    (est, err)
}

struct Panel<T> {
    a: T,
    b: T,
    est: T,
    err: T,
}

impl<T: Real> PartialEq for Panel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl<T: Real> Eq for Panel<T> {}
impl<T: Real> PartialOrd for Panel<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Panel<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.partial_cmp(&other.err).unwrap_or(Ordering::Equal)
    }
}

/// Globally adaptive Gauss–Kronrod on a finite interval. Converges when the
/// summed error estimate drops below `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<T: Real, F: Fn(T) -> T>(f: F, a: T, b: T, abs_tol: T, rel_tol: T) -> Result<T> {
    const MAX_PANELS: usize = 20_000;
    if a == b {
        return Ok(T::zero());
    }
    let (est, err) = gk15(&f, a, b);
    if !est.is_finite() {
        return Err(Error::Numerical("integrand is not finite".into()));
    }
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, est, err });
    let mut total = est;
    let mut total_err = err;
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= MAX_PANELS {
            return Err(Error::Numerical(format!(
                "adaptive quadrature did not converge (error estimate {total_err:e})"
            )));
        }
        let worst = heap.pop().expect("heap never empty");
        let mid = (worst.a + worst.b) / T::lit(2.0);
        let (e1, r1) = gk15(&f, worst.a, mid);
        let (e2, r2) = gk15(&f, mid, worst.b);
        if !(e1.is_finite() && e2.is_finite()) {
            return Err(Error::Numerical("integrand is not finite".into()));
        }
        total = total - worst.est + e1 + e2;
        total_err = total_err - worst.err + r1 + r2;
        // Panels that can no longer be split in floating point are final.
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::Numerical("adaptive quadrature hit interval resolution".into()));
        }
        heap.push(Panel { a: worst.a, b: mid, est: e1, err: r1 });
        heap.push(Panel { a: mid, b: worst.b, est: e2, err: r2 });
        if total_err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
    }
    // Re-sum to shed accumulated cancellation from the running updates.
    Ok(heap.into_iter().map(|p| p.est).sum())
}

/// Integral over the whole real line via `x = t / (1 - t^2)`.
pub fn integrate_real_line<T: Real, F: Fn(T) -> T>(f: F, rel_tol: T) -> Result<T> {
    let one = T::one();
    let g = |t: T| {
        let d = one - t * t;
        if d <= T::zero() {
            return T::zero();
        }
        let x = t / d;
        let v = f(x) * (one + t * t) / (d * d);
        if v.is_finite() {
            v
        } else {
            T::zero()
        }
    };
    integrate(g, -one, one, T::min_positive_value(), rel_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in 1..=20usize {
            let (x, w) = gauss_legendre::<f64>(n);
            assert_relative_eq!(w.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
            for p in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(p as i32)).sum();
                let exact = if p % 2 == 1 { 0.0 } else { 2.0 / (p as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} p={p} q={q}");
            }
        }
    }

    #[test]
    fn mapped_rule_on_unit_interval() {
        let (x, w) = gauss_legendre_on(64, 0.0, 1.0);
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, max_relative = 1e-14);
        let q: f64 = x.iter().zip(&w).map(|(&xi, wi)| wi * (3.0 * xi).exp()).sum();
        assert_relative_eq!(q, ((3.0f64).exp() - 1.0) / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn adaptive_handles_kinks() {
        let v = integrate(|x: f64| x.abs().sqrt(), -1.0, 1.0, 1e-12, 1e-12).unwrap();
        assert_relative_eq!(v, 4.0 / 3.0, max_relative = 1e-10);
    }

    #[test]
    fn real_line_gaussian() {
        let v = integrate_real_line(|x: f64| (-x * x / 2.0).exp(), 1e-13).unwrap();
        assert_relative_eq!(v, (2.0 * std::f64::consts::PI).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn non_finite_integrand_is_an_error() {
        assert!(integrate(|_x: f64| f64::NAN, 0.0, 1.0, 1e-10, 1e-10).is_err());
    }
}
