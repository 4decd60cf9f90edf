use std::f64::consts::PI;

use ldx_core::engine::{asymptotic_mean, model_warnings, DEFAULT_ORDER, MIN_VARIANCE};
use ldx_core::models::{diophantine_scan, ldp_range, nonlattice_check, LdpRange};
use ldx_core::oracle::{
    cylinder_tail, iid_as_chain, iid_exact_tail, markov_dp_tail, tilted_mc_tail, CylinderOptions, DpOptions,
};
use ldx_core::spectral::{gap_scan, taylor_via_cauchy, CauchyOptions};
use ldx_core::{expand_model, first_order, solve_tilt, EngineOptions, Error, Model, OracleEstimate, Result};

use crate::cli::{parse_grid, parse_n_grid, Common, OracleKind};
use crate::report::{Cell, Diagnostics, Report, Table};

/// Relative mismatch between the two leading-coefficient paths that is
/// treated as an internal-consistency failure.
const FIRST_ORDER_MISMATCH: f64 = 1e-10;
const DEFAULT_N_GRID: &str = "20,30,40,50,60";
const DEFAULT_S_GRID: &str = "0.05:20:400";

pub fn load_model(common: &Common) -> Result<Model> {
    let path = common.model.as_ref().ok_or_else(|| Error::Config("--model <path> is required".into()))?;
    Model::load(path)
}

fn requested_levels(common: &Common) -> Result<Vec<f64>> {
    match (common.a, &common.a_grid) {
        (Some(a), _) => Ok(vec![a]),
        (None, Some(grid)) => parse_grid(grid),
        (None, None) => Err(Error::Config("give a level with --a or --a-grid".into())),
    }
}

/// Keeps the levels strictly inside `(0, B - mean)`, warning about the rest.
fn admissible_levels(model: &Model, common: &Common, diag: &mut Diagnostics) -> Result<(Vec<f64>, LdpRange)> {
    let range = ldp_range(model)?;
    let mean = asymptotic_mean(model.family(), &engine_options(common))?;
    let mut kept = Vec::new();
    for a in requested_levels(common)? {
        if !(a > 0.0) {
            diag.warn(format!("level a = {a} dropped: the excess level must be positive"));
        } else if mean + a >= range.upper {
            diag.warn(format!("level a = {a} dropped: mean {mean} + a reaches the range end B = {}", range.upper));
        } else {
            kept.push(a);
        }
    }
    Ok((kept, range))
}

fn engine_options(common: &Common) -> EngineOptions {
    EngineOptions { cauchy: CauchyOptions { radius: common.radius, nodes: common.nodes }, range_upper: None }
}

fn order(common: &Common) -> usize {
    common.order.unwrap_or(DEFAULT_ORDER)
}

pub fn rate(model: &Model, common: &Common) -> Result<Report> {
    let mut diag = Diagnostics::default();
    let (levels, range) = admissible_levels(model, common, &mut diag)?;
    let mut table = Table::new("rate", &["a", "theta_a", "I", "sigma2", "Z0", "B"]);
    for a in levels {
        let res = expand_model(model, a, 0, &engine_options(common))?;
        diag.absorb(&res.diagnostics);
        let t = &res.tilt;
        table.push(vec![a.into(), t.theta.into(), t.rate.into(), t.sigma2.into(), t.z0.into(), range.upper.into()]);
    }
    Ok(Report { command: "rate", tables: vec![table], diagnostics: diag })
}

pub fn expand(model: &Model, common: &Common) -> Result<Report> {
    let mut diag = Diagnostics::default();
    let (levels, _) = admissible_levels(model, common, &mut diag)?;
    let r = order(common);
    let mut coeffs = Table::new("coefficients", &["a", "m", "D_m"]);
    let mut polys = Table::new("polynomials", &["a", "m", "j", "coefficient"]);
    for a in levels {
        let res = expand_model(model, a, r, &engine_options(common))?;
        diag.absorb(&res.diagnostics);
        for (m, d) in res.d.iter().enumerate() {
            coeffs.push(vec![a.into(), m.into(), (*d).into()]);
        }
        for (m, p) in res.p.iter().enumerate() {
            for (j, c) in p.coeffs().iter().enumerate() {
                polys.push(vec![a.into(), m.into(), j.into(), (*c).into()]);
            }
        }
    }
    Ok(Report { command: "expand", tables: vec![coeffs, polys], diagnostics: diag })
}

pub fn firstorder(model: &Model, common: &Common) -> Result<Report> {
    let mut diag = Diagnostics::default();
    let (levels, _) = admissible_levels(model, common, &mut diag)?;
    let mut table = Table::new("firstorder", &["a", "D_0", "K"]);
    for a in levels {
        let res = expand_model(model, a, 0, &engine_options(common))?;
        diag.absorb(&res.diagnostics);
        let series = res.d[0];
        let closed = first_order(&res.tilt);
        if (series - closed).abs() > FIRST_ORDER_MISMATCH * closed.abs() {
            return Err(Error::Numerical(format!(
                "internal consistency failure at a = {a}: series D_0 = {series} but closed form K = {closed}"
            )));
        }
        table.push(vec![a.into(), series.into(), closed.into()]);
    }
    Ok(Report { command: "firstorder", tables: vec![table], diagnostics: diag })
}

fn default_oracle(model: &Model) -> Result<OracleKind> {
    match model {
        Model::IidFinite(_) => Ok(OracleKind::Exact),
        Model::FiniteMarkov(_) => Ok(OracleKind::Dp),
        Model::Fourier(_) => Ok(OracleKind::Cylinder),
        other => Err(Error::Config(format!("no oracle is available for {} models", other.kind()))),
    }
}

fn run_oracle(
    model: &Model,
    kind: OracleKind,
    n: u64,
    threshold: f64,
    theta: f64,
    common: &Common,
) -> Result<OracleEstimate> {
    let mismatch = || Error::Config(format!("oracle {kind:?} does not apply to {} models", model.kind()));
    match (kind, model) {
        (OracleKind::Exact, Model::IidFinite(m)) => iid_exact_tail(m, n, threshold),
        (OracleKind::Dp, Model::FiniteMarkov(m)) => markov_dp_tail(m, n, threshold, DpOptions::default()),
        (OracleKind::Dp, Model::IidFinite(m)) => markov_dp_tail(&iid_as_chain(m)?, n, threshold, DpOptions::default()),
        (OracleKind::Mc, Model::FiniteMarkov(m)) => {
            tilted_mc_tail(m, n, threshold, theta, common.samples, common.seed)
        }
        (OracleKind::Mc, Model::IidFinite(m)) => {
            tilted_mc_tail(&iid_as_chain(m)?, n, threshold, theta, common.samples, common.seed)
        }
        (OracleKind::Cylinder, Model::Fourier(m)) => cylinder_tail(m, n, threshold, CylinderOptions::default()),
        _ => Err(mismatch()),
    }
}

/// Least-squares slope of `log |y|` against `log x`.
fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        points.iter().filter(|p| p.1 != 0.0 && p.1.is_finite()).map(|p| (p.0.ln(), p.1.abs().ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn validate(model: &Model, common: &Common) -> Result<Report> {
    let mut diag = Diagnostics::default();
    let (levels, _) = admissible_levels(model, common, &mut diag)?;
    let kind = match common.oracle {
        Some(k) => k,
        None => default_oracle(model)?,
    };
    let n_grid = parse_n_grid(common.n_grid.as_deref().unwrap_or(DEFAULT_N_GRID))?;
    let r = order(common);
    let mut table = Table::new(
        "convergence",
        &["a", "N", "m", "oracle", "oracle_err", "expansion", "residual", "scaled_residual"],
    );
    let mut fit = Table::new("fit", &["a", "m", "slope", "points"]);
    for a in levels {
        let res = expand_model(model, a, r, &engine_options(common))?;
        diag.absorb(&res.diagnostics);
        let t = &res.tilt;
        let mut residuals: Vec<Vec<(f64, f64)>> = vec![Vec::new(); res.d.len()];
        let mut last_scale = None;
        for &n in &n_grid {
            let est = match run_oracle(model, kind, n, t.level * n as f64, t.theta, common) {
                Ok(e) => e,
                Err(e @ Error::Scale(_)) => {
                    diag.warn(format!("N = {n} dropped from the grid: {e}"));
                    last_scale = Some(e);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let growth = (t.rate * n as f64).exp();
            for m in 0..res.d.len() {
                let partial = res.evaluate(n, m)?;
                let residual = est.value * growth - partial;
                let scaled = residual * (n as f64).powf(m as f64 + 1.5);
                residuals[m].push((n as f64, residual));
                table.push(vec![
                    a.into(),
                    n.into(),
                    m.into(),
                    est.value.into(),
                    est.std_err.into(),
                    (partial / growth).into(),
                    residual.into(),
                    scaled.into(),
                ]);
            }
        }
        if residuals[0].is_empty() {
            return Err(last_scale.unwrap_or_else(|| Error::Config("the N-grid is empty".into())));
        }
        for (m, pts) in residuals.iter().enumerate() {
            let slope = loglog_slope(pts).unwrap_or(f64::NAN);
            fit.push(vec![a.into(), m.into(), slope.into(), pts.len().into()]);
        }
    }
    Ok(Report { command: "validate", tables: vec![table, fit], diagnostics: diag })
}

/// Values and weights whose arithmetic structure decides the lattice question.
fn observable_values(model: &Model) -> Option<(Vec<f64>, Option<Vec<f64>>)> {
    match model {
        Model::IidFinite(m) => Some((m.atoms().to_vec(), Some(m.probs().to_vec()))),
        Model::FiniteMarkov(m) => {
            let mut v: Vec<f64> = m.observable().iter().flatten().copied().collect();
            v.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
            v.dedup();
            Some((v, None))
        }
        _ => None,
    }
}

pub fn diagnose(model: &Model, common: &Common) -> Result<Report> {
    let mut diag = Diagnostics::default();
    let opts = engine_options(common);
    for w in model_warnings(model) {
        diag.warn(w);
    }
    let mut summary = Table::new("summary", &["key", "value"]);
    let mut put = |k: &str, v: Cell| summary.push(vec![k.into(), v]);
    put("model", model.kind().into());

    let range = ldp_range(model)?;
    put("B_lower", range.lower.into());
    put("B_upper", range.upper.into());
    put("B_exact", range.exact.into());

    let mut theta = 0.0;
    if let Some(a) = common.a {
        match solve_tilt(model.family(), a, &opts) {
            Ok(t) => theta = t.theta,
            Err(e) => diag.warn(format!("no saddle point for a = {a} ({e}); scanning at theta = 0")),
        }
    }
    put("theta", theta.into());
    let taylor = taylor_via_cauchy(model.family(), theta, 2, opts.cauchy)?;
    let sigma2 = taylor.log_lambda[2].re;
    put("sigma2", sigma2.into());
    let degenerate = !(sigma2 > MIN_VARIANCE);
    put("degenerate_variance", degenerate.into());
    if degenerate {
        diag.warn(format!(
            "degenerate variance (sigma2 = {sigma2:e} at theta = {theta}): the observable may be a coboundary"
        ));
    }

    let mut s_grid = parse_grid(common.s_grid.as_deref().unwrap_or(DEFAULT_S_GRID))?;
    let values = observable_values(model);
    if let Some((v, _)) = &values {
        let check = nonlattice_check(v);
        put("nonlattice", check.nonlattice.into());
        put("lattice_step", check.step.unwrap_or(f64::NAN).into());
        // Multiples of 2 pi / step are where the lattice shows up.
        if let Some(step) = check.step {
            let top = s_grid.iter().copied().fold(0.0, f64::max);
            let base = 2.0 * PI / step;
            let mut k = 1.0;
            while k * base <= top.max(base) {
                s_grid.push(k * base);
                k += 1.0;
            }
            s_grid.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
            s_grid.dedup();
        }
    }
    let scan = gap_scan(model.family(), theta, &s_grid)?;
    put("gap", taylor.gap.into());
    put("gap_scan_max_ratio", scan.max_ratio.into());
    put("gap_scan_argmax", scan.argmax.into());
    put("gap_scan_flagged", scan.flagged.into());
    if scan.flagged {
        diag.warn(format!(
            "gap scan: |lambda(theta + i s)| / lambda(theta) = {} at s = {} (aperiodicity fails)",
            scan.max_ratio, scan.argmax
        ));
    }
    let mut tables = Vec::new();
    if let Some((v, probs)) = &values {
        let s_max = s_grid.iter().copied().fold(2.0, f64::max);
        let report = diophantine_scan(v, probs.as_deref(), s_max, 400)?;
        put("diophantine_lattice_flag", report.lattice_flag.into());
        put("diophantine_beta", report.beta_hat.unwrap_or(f64::NAN).into());
        put("diophantine_c", report.lemma_c.unwrap_or(f64::NAN).into());
        let mut dioph = Table::new("diophantine", &["s", "distance"]);
        for &(s, d) in &report.points {
            dioph.push(vec![s.into(), d.into()]);
        }
        tables.push(dioph);
    }
    diag.gap = Some(taylor.gap);
    diag.max_imag_discarded = Some(taylor.max_imag);
    diag.continuation_radius = Some(taylor.radius);

    let mut gap = Table::new("gap_scan", &["s", "ratio"]);
    for &(s, ratio) in &scan.points {
        gap.push(vec![s.into(), ratio.into()]);
    }
    tables.insert(0, gap);
    tables.insert(0, summary);
    Ok(Report { command: "diagnose", tables, diagnostics: diag })
}
