//! Perron eigendata of complex matrices and Taylor coefficients of the
//! top eigenvalue and of the amplitude `Z(z) = ell(Pi_z v)`, obtained by
//! discrete Cauchy integrals on a circle.
//!
//! The full spectrum (Schur form) is only computed where it is needed:
//! at the circle centre and in gap scans. Along the circle the top
//! eigenpair is continued node to node by shifted inverse iteration, whose
//! observed contraction rate is the ratio of the distances from the shift
//! to the nearest and the next-nearest eigenvalue. A contraction above
//! one half means two candidates are within a factor two of each other,
//! and the continuation is rejected.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::models::AnalyticFamily;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Ratio above which two eigenvalues of maximal modulus are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-10;
/// Relative threshold on `|u^T w|` below which the top eigenvalue is treated
/// as defective.
pub const DEFECT_TOLERANCE: f64 = 1e-10;
/// Largest inverse-iteration contraction accepted during continuation.
pub const MAX_CONTRACTION: f64 = 0.5;
/// Gap-scan ratios at or above `1 - GAP_FLAG_MARGIN` are flagged.
pub const GAP_FLAG_MARGIN: f64 = 1e-9;
/// Number of radius halvings attempted before giving up.
pub const MAX_HALVINGS: usize = 6;
/// Minimal number of circle nodes.
pub const MIN_NODES: usize = 64;
/// Largest relative negative-frequency content accepted on a Cauchy circle.
pub const ANALYTICITY_TOLERANCE: f64 = 1e-10;

/// A matrix together with the functional `ell` and vector `v` such that
/// `E exp(z S_N) = ell(M^N v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorTriple {
    pub matrix: CMatrix,
    pub ell: CVector,
    pub v: CVector,
}

impl OperatorTriple {
    pub fn new(matrix: CMatrix, ell: CVector, v: CVector) -> Result<Self> {
        let d = matrix.nrows();
        if d == 0 || matrix.ncols() != d || ell.len() != d || v.len() != d {
            return Err(Error::Model(format!(
                "operator triple dimensions inconsistent: matrix {}x{}, ell {}, v {}",
                matrix.nrows(),
                matrix.ncols(),
                ell.len(),
                v.len()
            )));
        }
        Ok(Self { matrix, ell, v })
    }

    /// 1x1 triple `[value]` with `ell = v = [1]`.
    pub fn scalar(value: Complex64) -> Self {
        let one = CVector::from_element(1, Complex64::new(1.0, 0.0));
        Self {
            matrix: CMatrix::from_element(1, 1, value),
            ell: one.clone(),
            v: one,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `ell(M^n v)`, computed by repeated matrix-vector products.
    pub fn moment(&self, n: usize) -> Complex64 {
        let mut x = self.v.clone();
        for _ in 0..n {
            x = &self.matrix * x;
        }
        bilinear(&self.ell, &x)
    }
}

/// Top eigenvalue with its eigenvectors and the amplitude `ell(Pi v)`.
#[derive(Debug, Clone)]
pub struct PerronData {
    pub lambda: Complex64,
    /// Right eigenvector `w`.
    pub right: CVector,
    /// Left eigenvector `u` (`u^T M = lambda u^T`).
    pub left: CVector,
    /// `(u.v)(ell.w)/(u.w)`, with unconjugated products.
    pub z: Complex64,
    /// `|lambda_2| / |lambda|`; zero in dimension one.
    pub gap: f64,
}

fn bilinear(a: &CVector, b: &CVector) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn amplitude(t: &OperatorTriple, right: &CVector, left: &CVector) -> Result<Complex64> {
    let uw = bilinear(left, right);
    if uw.norm() < DEFECT_TOLERANCE * left.norm() * right.norm() {
        return Err(Error::Numerical(
            "top eigenvalue is defective or nearly so (u.w vanishes)".into(),
        ));
    }
    Ok(bilinear(left, &t.v) * bilinear(&t.ell, right) / uw)
}

fn matrix_scale(m: &CMatrix) -> f64 {
    m.iter().map(|x| x.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE)
}

/// All eigenvalues, via the complex Schur form.
pub fn spectrum(m: &CMatrix) -> Result<Vec<Complex64>> {
    if m.nrows() == 1 {
        return Ok(vec![m[(0, 0)]]);
    }
    let ev = m
        .clone()
        .schur()
        .eigenvalues()
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    Ok(ev.iter().copied().collect())
}

/// Eigenvalues sorted by decreasing modulus.
fn sorted_spectrum(m: &CMatrix) -> Result<Vec<Complex64>> {
    let mut ev = spectrum(m)?;
    ev.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).unwrap_or(std::cmp::Ordering::Equal));
    Ok(ev)
}

struct Eigenpair {
    lambda: Complex64,
    right: CVector,
    left: CVector,
    contraction: f64,
    iterations: usize,
}

/// Power iteration on `(A - shift)^{-1}`; returns the normalised vector,
/// the Rayleigh value and the observed contraction rate.
fn inverse_iterate(
    a: &CMatrix,
    shift: Complex64,
    start: &CVector,
) -> Result<(CVector, Complex64, f64, usize)> {
    const MAX_ITER: usize = 60;
    let d = a.nrows();
    let scale = matrix_scale(a);
    let noise = 1e-13 * scale;
    let mut shifted = a.clone();
    let mut sigma = shift;
    for i in 0..d {
        shifted[(i, i)] -= sigma;
    }
    let mut lu = shifted.clone().lu();
    if !lu.is_invertible() {
        // Exact eigenvalue shift: nudge it off the spectrum.
        let nudge = Complex64::new(1e-13, 1e-13) * scale;
        sigma += nudge;
        for i in 0..d {
            shifted[(i, i)] -= nudge;
        }
        lu = shifted.lu();
    }
    let mut x = start.clone();
    let n0 = x.norm();
    if !(n0 > 0.0) || !n0.is_finite() {
        x = CVector::from_element(d, Complex64::new(1.0, 0.0));
    }
    x /= Complex64::new(x.norm(), 0.0);
    let rayleigh = |x: &CVector| -> (Complex64, f64) {
        let mx = a * x;
        let mu = x.dotc(&mx) / x.dotc(x);
        let r = (mx - x * mu).norm();
        (mu, r)
    };
    let (mut mu, mut res) = rayleigh(&x);
    let mut contraction: f64 = 0.0;
    let mut iterations = 0;
    for it in 0..MAX_ITER {
        if res <= noise {
            break;
        }
        let mut y = x.clone();
        if !lu.solve_mut(&mut y) {
            return Err(Error::Numerical("singular shifted matrix in inverse iteration".into()));
        }
        let ny = y.norm();
        if !(ny > 0.0) || !ny.is_finite() {
            return Err(Error::Numerical("inverse iteration produced a non-finite vector".into()));
        }
        // Fix the phase so successive iterates are comparable.
        let phase = bilinear(&y.map(|c| c.conj()), &x);
        let phase = if phase.norm() > 0.0 { phase / phase.norm() } else { Complex64::new(1.0, 0.0) };
        x = y * (phase / ny);
        let (mu_new, res_new) = rayleigh(&x);
        if res > 100.0 * noise {
            contraction = res_new / res;
        }
        mu = mu_new;
        res = res_new;
        iterations = it + 1;
    }
    if res > 1e-8 * scale {
        return Err(Error::Continuation(format!(
            "inverse iteration did not converge (residual {res:e})"
        )));
    }
    Ok((x, mu, contraction, iterations))
}

fn eigenpair_near(
    m: &CMatrix,
    shift: Complex64,
    right0: &CVector,
    left0: &CVector,
) -> Result<Eigenpair> {
    let (right, mu_r, contraction_r, it_r) = inverse_iterate(m, shift, right0)?;
    let mt = m.transpose();
    let (left, _mu_l, contraction_l, it_l) = inverse_iterate(&mt, shift, left0)?;
    let uw = bilinear(&left, &right);
    let lambda = if uw.norm() > DEFECT_TOLERANCE * left.norm() * right.norm() {
        bilinear(&left, &(m * &right)) / uw
    } else {
        mu_r
    };
    Ok(Eigenpair {
        lambda,
        right,
        left,
        contraction: contraction_r.max(contraction_l),
        iterations: it_r.max(it_l),
    })
}

/// Perron eigendata: the eigenvalue of maximal modulus, its eigenvectors,
/// the amplitude `ell(Pi v)` and the spectral gap ratio.
pub fn perron(t: &OperatorTriple) -> Result<PerronData> {
    let d = t.dim();
    if d == 1 {
        let one = CVector::from_element(1, Complex64::new(1.0, 0.0));
        let z = t.ell[0] * t.v[0];
        return Ok(PerronData { lambda: t.matrix[(0, 0)], right: one.clone(), left: one, z, gap: 0.0 });
    }
    let ev = sorted_spectrum(&t.matrix)?;
    let top = ev[0];
    let second = ev[1];
    if top.norm() == 0.0 {
        return Err(Error::GapViolation("operator is nilpotent (spectral radius 0)".into()));
    }
    if second.norm() >= top.norm() * (1.0 - TIE_TOLERANCE) {
        return Err(Error::GapViolation(format!(
            "two eigenvalues of maximal modulus: {top} and {second}"
        )));
    }
    let gap = second.norm() / top.norm();
    let start = CVector::from_element(d, Complex64::new(1.0, 0.0));
    let pair = eigenpair_near(&t.matrix, top, &start, &start)?;
    let z = amplitude(t, &pair.right, &pair.left)?;
    Ok(PerronData { lambda: pair.lambda, right: pair.right, left: pair.left, z, gap })
}

/// `max_k |lambda_k|` over the spectrum.
pub fn spectral_radius(m: &CMatrix) -> Result<f64> {
    Ok(spectrum(m)?.iter().map(|l| l.norm()).fold(0.0, f64::max))
}

/// One node of a continued eigenvalue curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub z: Complex64,
    pub lambda: Complex64,
    pub amplitude: Complex64,
}

/// Top eigenvalue and amplitude at `points` equispaced nodes of the circle
/// `center + radius e^{i phi}`, starting at `phi = 0` and continued from the
/// Perron data at the centre.
pub fn eigencurve(
    family: &dyn AnalyticFamily,
    center: f64,
    radius: f64,
    points: usize,
) -> Result<Vec<CurvePoint>> {
    if !(radius > 0.0) || points < 4 {
        return Err(Error::Config("eigencurve needs radius > 0 and at least 4 nodes".into()));
    }
    let delta = family.domain_halfwidth();
    if center.abs() + radius >= delta {
        return Err(Error::Domain(format!(
            "circle |z - {center}| = {radius} leaves the analyticity strip |Re z| < {delta}"
        )));
    }
    let base = perron(&family.evaluate(Complex64::new(center, 0.0))?)?;
    continue_on_circle(family, &base, center, radius, points)
}

fn continue_on_circle(
    family: &dyn AnalyticFamily,
    base: &PerronData,
    center: f64,
    radius: f64,
    points: usize,
) -> Result<Vec<CurvePoint>> {
    let mut prev_lambda = base.lambda;
    let mut prev_right = base.right.clone();
    let mut prev_left = base.left.clone();
    let mut out = Vec::with_capacity(points);
    for k in 0..points {
        let phi = 2.0 * std::f64::consts::PI * k as f64 / points as f64;
        let z = Complex64::new(center, 0.0) + Complex64::from_polar(radius, phi);
        let triple = family.evaluate(z)?;
        let pair = if triple.dim() == 1 {
            let one = CVector::from_element(1, Complex64::new(1.0, 0.0));
            Eigenpair { lambda: triple.matrix[(0, 0)], right: one.clone(), left: one, contraction: 0.0, iterations: 0 }
        } else {
            eigenpair_near(&triple.matrix, prev_lambda, &prev_right, &prev_left)?
        };
        if pair.contraction > MAX_CONTRACTION || pair.iterations >= 60 {
            return Err(Error::Continuation(format!(
                "ambiguous eigenvalue at node {k} (z = {z}): contraction {:.3}",
                pair.contraction
            )));
        }
        let amp = amplitude(&triple, &pair.right, &pair.left)?;
        out.push(CurvePoint { z, lambda: pair.lambda, amplitude: amp });
        prev_lambda = pair.lambda;
        prev_right = pair.right;
        prev_left = pair.left;
    }
    // The curve has to close up on itself: the closing step is compared
    // with the steps next to it, since step sizes vary along the circle.
    let jumps: Vec<f64> = out.windows(2).map(|w| (w[1].lambda - w[0].lambda).norm()).collect();
    let closing = (out[0].lambda - out[points - 1].lambda).norm();
    let local = jumps[0].max(jumps[jumps.len() - 1]);
    let scale = base.lambda.norm().max(f64::MIN_POSITIVE);
    if closing > 10.0 * local + 1e-12 * scale {
        return Err(Error::Continuation(format!(
            "eigenvalue curve does not close (closing jump {closing:e}, neighbouring step {local:e})"
        )));
    }
    Ok(out)
}

/// Taylor data at a real point: `log_lambda[j] = (log lambda)^{(j)}` and
/// `amplitude[j] = Z^{(j)}`, for `j = 0..=order`.
#[derive(Debug, Clone)]
pub struct TaylorData {
    pub log_lambda: Vec<Complex64>,
    pub amplitude: Vec<Complex64>,
    pub radius: f64,
    pub order: usize,
    pub nodes: usize,
    /// Largest imaginary part found on a real family (should be round-off).
    pub max_imag: f64,
    /// Spectral gap ratio at the centre.
    pub gap: f64,
}

/// Options for [`taylor_via_cauchy`].
#[derive(Debug, Clone, Copy, Default)]
pub struct CauchyOptions {
    /// Initial circle radius; `None` picks the family's default.
    pub radius: Option<f64>,
    /// Node count; `None` uses `max(64, 4 * order)`.
    pub nodes: Option<usize>,
}

/// Initial circle radius for a point `theta`: a quarter of the distance to
/// the strip boundary, capped by the family's natural scale.
pub fn default_radius(family: &dyn AnalyticFamily, theta: f64) -> f64 {
    let delta = family.domain_halfwidth();
    let natural = family.natural_radius();
    if delta.is_finite() {
        let room = (delta - theta.abs() - 1e-3).max(0.0);
        (0.25 * (delta - theta.abs())).min(room).min(natural)
    } else {
        natural
    }
}

/// Normalised Fourier coefficients `c_j = (1/P) sum_k g_k e^{-i j phi_k}`,
/// over every `stride`-th node. With `negative` set, returns `c_{-j}`.
fn circle_coefficients(values: &[Complex64], order: usize, stride: usize, negative: bool) -> Vec<Complex64> {
    let p = values.len() / stride;
    let sign = if negative { 1.0 } else { -1.0 };
    (0..=order)
        .map(|j| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, g) in values.iter().step_by(stride).enumerate() {
                let phi = sign * 2.0 * std::f64::consts::PI * ((j * i) % p) as f64 / p as f64;
                acc += g * Complex64::from_polar(1.0, phi);
            }
            acc / p as f64
        })
        .collect()
}

fn unwrap_log(curve: &[CurvePoint]) -> Result<Vec<Complex64>> {
    let first = curve[0].lambda;
    if first.norm() == 0.0 {
        return Err(Error::Numerical("top eigenvalue vanishes on the circle".into()));
    }
    let mut out = Vec::with_capacity(curve.len());
    let mut arg = first.arg();
    let mut prev = first.arg();
    for p in curve {
        if p.lambda.norm() == 0.0 {
            return Err(Error::Numerical("top eigenvalue vanishes on the circle".into()));
        }
        let a = p.lambda.arg();
        let mut step = a - prev;
        while step > std::f64::consts::PI {
            step -= 2.0 * std::f64::consts::PI;
        }
        while step < -std::f64::consts::PI {
            step += 2.0 * std::f64::consts::PI;
        }
        arg += step;
        prev = a;
        out.push(Complex64::new(p.lambda.norm().ln(), arg));
    }
    // Winding around zero makes log(lambda) multivalued on the circle.
    let last = curve[curve.len() - 1].lambda.arg();
    let mut closing = first.arg() - last;
    while closing > std::f64::consts::PI {
        closing -= 2.0 * std::f64::consts::PI;
    }
    while closing < -std::f64::consts::PI {
        closing += 2.0 * std::f64::consts::PI;
    }
    let total = arg + closing - first.arg();
    if total.abs() > 1e-6 {
        return Err(Error::Continuation(format!(
            "top eigenvalue winds around zero on the circle (total argument change {total:.3e})"
        )));
    }
    Ok(out)
}

/// Derivatives of `log lambda` and of `Z` at the real point `theta`, up to
/// `order`, from the discrete Cauchy formula on a circle. The radius is
/// halved (up to [`MAX_HALVINGS`] times) when the continuation is ambiguous
/// or when the rule on every other node disagrees with the full rule, which
/// signals aliasing from a nearby singularity.
pub fn taylor_via_cauchy(
    family: &dyn AnalyticFamily,
    theta: f64,
    order: usize,
    options: CauchyOptions,
) -> Result<TaylorData> {
    let delta = family.domain_halfwidth();
    if theta.abs() >= delta {
        return Err(Error::Domain(format!("theta = {theta} outside the strip |Re z| < {delta}")));
    }
    let mut nodes = options.nodes.unwrap_or_else(|| MIN_NODES.max(4 * order));
    nodes += nodes % 2;
    let mut radius = options.radius.unwrap_or_else(|| default_radius(family, theta));
    if !(radius > 0.0) {
        return Err(Error::Domain(format!("no room for a Cauchy circle at theta = {theta}")));
    }
    let base = perron(&family.evaluate(Complex64::new(theta, 0.0))?)?;
    let mut last_err = None;
    for _ in 0..=MAX_HALVINGS {
        match taylor_at_radius(family, &base, theta, order, radius, nodes) {
            Ok(data) => return Ok(data),
            Err(e @ (Error::Continuation(_) | Error::GapViolation(_))) => {
                log::debug!("Cauchy circle radius {radius} rejected: {e}");
                last_err = Some(e);
                radius /= 2.0;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Continuation("no admissible circle radius".into())))
}

fn taylor_at_radius(
    family: &dyn AnalyticFamily,
    base: &PerronData,
    theta: f64,
    order: usize,
    radius: f64,
    nodes: usize,
) -> Result<TaylorData> {
    if theta.abs() + radius >= family.domain_halfwidth() {
        return Err(Error::Domain(format!("Cauchy circle of radius {radius} at {theta} leaves the strip")));
    }
    let curve = continue_on_circle(family, base, theta, radius, nodes)?;
    let logs = unwrap_log(&curve)?;
    let amps: Vec<Complex64> = curve.iter().map(|p| p.amplitude).collect();

    let full_l = circle_coefficients(&logs, order, 1, false);
    let half_l = circle_coefficients(&logs, order, 2, false);
    let full_z = circle_coefficients(&amps, order, 1, false);
    let half_z = circle_coefficients(&amps, order, 2, false);
    let scale_l = logs.iter().map(|g| g.norm()).fold(1.0, f64::max);
    let scale_z = amps.iter().map(|g| g.norm()).fold(1.0, f64::max);

    // Analyticity on the disc: negative frequencies vanish and the mean
    // reproduces the value at the centre. A branch point of the eigenvalue
    // inside the circle breaks both.
    let neg_l = circle_coefficients(&logs, order, 1, true);
    let neg_z = circle_coefficients(&amps, order, 1, true);
    let tau = 2.0 * std::f64::consts::PI;
    let mut shift = full_l[0] - base.lambda.ln();
    shift.im -= tau * (shift.im / tau).round();
    let mut defect = (shift.norm() / scale_l).max((full_z[0] - base.z).norm() / scale_z);
    for j in 1..=order {
        defect = defect.max(neg_l[j].norm() / scale_l).max(neg_z[j].norm() / scale_z);
    }
    if defect > ANALYTICITY_TOLERANCE {
        return Err(Error::Continuation(format!(
            "circle of radius {radius} encloses a singularity of the eigenvalue branch (defect {defect:.2e})"
        )));
    }
    for j in 0..=order {
        let dl = (full_l[j] - half_l[j]).norm();
        let dz = (full_z[j] - half_z[j]).norm();
        if dl > 1e-11 * scale_l || dz > 1e-11 * scale_z {
            return Err(Error::Continuation(format!(
                "Cauchy rule aliasing at order {j} (radius {radius}): {dl:.2e} / {dz:.2e}"
            )));
        }
    }

    // c_j = g^{(j)} r^j / j!
    let mut log_lambda = Vec::with_capacity(order + 1);
    let mut amplitude = Vec::with_capacity(order + 1);
    let mut factor = 1.0;
    for j in 0..=order {
        if j > 0 {
            factor *= j as f64 / radius;
        }
        log_lambda.push(full_l[j] * factor);
        amplitude.push(full_z[j] * factor);
    }

    let mut max_imag: f64 = 0.0;
    if family.is_real() {
        let mut factor = 1.0;
        for j in 0..=order {
            if j > 0 {
                factor *= j as f64 / radius;
            }
            // Round-off in c_j is relative to the circle values.
            let tol_l = 1e-9 * scale_l * factor;
            let tol_z = 1e-9 * scale_z * factor;
            let il = log_lambda[j].im.abs();
            let iz = amplitude[j].im.abs();
            if il > tol_l.max(1e-9 * log_lambda[j].norm()) || iz > tol_z.max(1e-9 * amplitude[j].norm()) {
                return Err(Error::Numerical(format!(
                    "real family produced complex Taylor coefficient at order {j}: {} / {}",
                    log_lambda[j], amplitude[j]
                )));
            }
            max_imag = max_imag.max(il / factor).max(iz / factor);
            log_lambda[j].im = 0.0;
            amplitude[j].im = 0.0;
        }
    }

    Ok(TaylorData { log_lambda, amplitude, radius, order, nodes, max_imag, gap: base.gap })
}

/// Evidence for the aperiodicity conditions: ratios
/// `rho(L(theta + i s)) / lambda(theta)` on a grid of `s`.
#[derive(Debug, Clone)]
pub struct GapScan {
    pub theta: f64,
    pub points: Vec<(f64, f64)>,
    pub max_ratio: f64,
    pub argmax: f64,
    /// Set when some ratio reaches `1 - GAP_FLAG_MARGIN`.
    pub flagged: bool,
}

/// Spectral-radius scan along the vertical line through `theta`. This is a
/// non-rigorous grid diagnostic, not a certificate.
pub fn gap_scan(family: &dyn AnalyticFamily, theta: f64, s_grid: &[f64]) -> Result<GapScan> {
    let base = perron(&family.evaluate(Complex64::new(theta, 0.0))?)?;
    let lambda = base.lambda.norm();
    let mut points = Vec::with_capacity(s_grid.len());
    let mut max_ratio: f64 = 0.0;
    let mut argmax = f64::NAN;
    for &s in s_grid {
        let t = family.evaluate(Complex64::new(theta, s))?;
        let ratio = spectral_radius(&t.matrix)? / lambda;
        if ratio > max_ratio {
            max_ratio = ratio;
            argmax = s;
        }
        points.push((s, ratio));
    }
    Ok(GapScan { theta, points, max_ratio, argmax, flagged: max_ratio >= 1.0 - GAP_FLAG_MARGIN })
}
