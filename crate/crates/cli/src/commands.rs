use std::f64::consts::PI;

use povmdt_core::estimator::{completeness_refine, EntryEstimate, EntryEstimator, EstimateMethod};
use povmdt_core::linalg::Basis;
use povmdt_core::montecarlo::{
    run_trials_on_stream, variance_sweep, Scenario, SweepAxis, SweepBase, SweepRow, SweepSpec,
};
use povmdt_core::noise::{
    apply_dephasing, apply_phase_rotation, calibrate_phase, calibrate_xi, calibrate_xi_exact,
    phase_calibration_probabilities, reduce_angle, sample_populations,
};
use povmdt_core::povm::matrix_entry_oracle;
use povmdt_core::protocol::{meter_tables, prepare_entry};
use povmdt_core::{Complex64, Povm};
use serde::Serialize;

use crate::config::{Axis, NoisePoint, Resolved};
use crate::CliError;

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Result of a subcommand: data rows, a JSON summary, and whether every
/// checked tolerance held.
pub struct CommandOutput<R: Serialize> {
    pub rows: Vec<R>,
    pub summary: serde_json::Value,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleRow {
    /// 1-based.
    pub l: usize,
    pub j: usize,
    pub k: usize,
    pub re: f64,
    pub im: f64,
    pub oracle_re: f64,
    pub oracle_im: f64,
    pub abs_error: f64,
    /// Error-transfer variances at `N` (exact tables).
    pub var_re: f64,
    pub var_im: f64,
    pub method: EstimateMethod,
    pub g_b: f64,
    pub g_a: f64,
    #[serde(rename = "N")]
    pub n: u64,
}

fn oracle(povm: &Povm, l: usize, j: usize, k: usize) -> Result<Complex64, CliError> {
    matrix_entry_oracle(povm, l, j, k, &Basis::computational(povm.dim())).map_err(run_err)
}

/// Exact pipeline vs oracle on every selected entry.
pub fn cmd_oracle_check(r: &Resolved, refine: bool) -> Result<CommandOutput<OracleRow>, CliError> {
    let d = r.povm.dim();
    let est = EntryEstimator::new(d, &r.coupling, r.config.marginals).map_err(run_err)?;
    let n = r.shot.n_per_setting();
    if refine && r.outcomes.len() != r.povm.len() {
        return Err(CliError::Config("--refine needs every outcome selected".into()));
    }
    let mut rows = Vec::new();
    let mut max_err: f64 = 0.0;
    for &(j, k) in &r.pairs {
        let js = prepare_entry(d, j, k, &r.coupling).map_err(run_err)?;
        let mut raw = Vec::new();
        for &l in &r.outcomes {
            let w = meter_tables(&js, r.povm.element(l).map_err(run_err)?).map_err(run_err)?;
            let predicted = est.predict(&w, n).map_err(run_err)?;
            let value = predicted.value;
            let truth = oracle(&r.povm, l, j, k)?;
            let err = (value - truth).norm();
            max_err = max_err.max(err);
            raw.push(predicted);
            rows.push(OracleRow {
                l: l + 1,
                j,
                k,
                re: value.re,
                im: value.im,
                oracle_re: truth.re,
                oracle_im: truth.im,
                abs_error: err,
                var_re: predicted.var_re,
                var_im: predicted.var_im,
                method: EstimateMethod::Exact,
                g_b: r.coupling.g_b(),
                g_a: r.coupling.g_a(),
                n,
            });
        }
        if refine {
            for (pos, e) in completeness_refine(&raw).map_err(run_err)?.iter().enumerate() {
                let l = r.outcomes[pos];
                let truth = oracle(&r.povm, l, j, k)?;
                rows.push(OracleRow {
                    l: l + 1,
                    j,
                    k,
                    re: e.value.re,
                    im: e.value.im,
                    oracle_re: truth.re,
                    oracle_im: truth.im,
                    abs_error: (e.value - truth).norm(),
                    var_re: e.var_re,
                    var_im: e.var_im,
                    method: EstimateMethod::Refined,
                    g_b: r.coupling.g_b(),
                    g_a: r.coupling.g_a(),
                    n,
                });
            }
        }
    }
    let passed = max_err <= r.tolerance;
    Ok(CommandOutput {
        summary: serde_json::json!({
            "entries_checked": r.outcomes.len() * r.pairs.len(),
            "max_abs_error": max_err,
            "tolerance": r.tolerance,
        }),
        rows,
        passed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub noise: &'static str,
    pub epsilon: Option<f64>,
    pub voltage: Option<f64>,
    pub xi: Option<f64>,
    /// Radians.
    pub phi: Option<f64>,
    /// 1-based.
    pub l: usize,
    pub j: usize,
    pub k: usize,
    pub re: f64,
    pub im: f64,
    /// Variance of the reported estimate (Eq. 8 at exact tables / trials).
    pub var_re: f64,
    pub var_im: f64,
    /// `ξE` or `e^{−iφ}E` from the noiseless oracle.
    pub truth_re: f64,
    pub truth_im: f64,
    pub ref_re: Option<f64>,
    pub ref_im: Option<f64>,
    pub ref_var_re: Option<f64>,
    pub ref_var_im: Option<f64>,
    pub trials: u64,
    #[serde(rename = "N")]
    pub n: u64,
    pub seed: u64,
}

/// Simulated estimates along a dephasing or rotation grid.
///
/// Point `p` (grid point × pair × outcome, in that nesting) draws its trials
/// from streams `p·2³² + t` of the run seed.
pub fn cmd_scan(r: &Resolved, refine: bool) -> Result<CommandOutput<ScanRow>, CliError> {
    let grid = r
        .noise
        .as_ref()
        .ok_or_else(|| CliError::Config("scan needs a [noise] block".into()))?;
    if refine && r.outcomes.len() != r.povm.len() {
        return Err(CliError::Config("--refine needs every outcome selected".into()));
    }
    let n = r.shot.n_per_setting();
    let mut rows = Vec::new();
    let mut point = 0u64;
    for np in grid {
        for &(j, k) in &r.pairs {
            let (noisy, factor) = match *np {
                NoisePoint::Dephasing { xi, .. } => (
                    apply_dephasing(&r.povm, xi, j, k).map_err(run_err)?,
                    Complex64::new(xi, 0.0),
                ),
                NoisePoint::Rotation { phi, .. } => (
                    apply_phase_rotation(&r.povm, phi, j, k).map_err(run_err)?,
                    Complex64::from_polar(1.0, -phi),
                ),
            };
            let mut estimates = Vec::new();
            let first = rows.len();
            for &l in &r.outcomes {
                let s = Scenario::new(noisy.clone(), l, j, k, r.coupling)
                    .map_err(run_err)?
                    .with_policy(r.config.marginals);
                let t = run_trials_on_stream(&s, &r.shot, r.trials, point << 32).map_err(run_err)?;
                point += 1;
                let truth = oracle(&r.povm, l, j, k)? * factor;
                let tf = r.trials as f64;
                let e = EntryEstimate {
                    value: t.mean,
                    var_re: t.predicted_var_re / tf,
                    var_im: t.predicted_var_im / tf,
                    n_per_setting: Some(n),
                    method: EstimateMethod::Sampled,
                };
                estimates.push(e);
                let (noise, epsilon, voltage, xi, phi) = match *np {
                    NoisePoint::Dephasing { epsilon, xi } => ("dephasing", epsilon, None, Some(xi), None),
                    NoisePoint::Rotation { voltage, phi } => ("rotation", None, voltage, None, Some(phi)),
                };
                rows.push(ScanRow {
                    noise,
                    epsilon,
                    voltage,
                    xi,
                    phi,
                    l: l + 1,
                    j,
                    k,
                    re: e.value.re,
                    im: e.value.im,
                    var_re: e.var_re,
                    var_im: e.var_im,
                    truth_re: truth.re,
                    truth_im: truth.im,
                    ref_re: None,
                    ref_im: None,
                    ref_var_re: None,
                    ref_var_im: None,
                    trials: r.trials,
                    n,
                    seed: r.seed,
                });
            }
            if refine {
                let refined = completeness_refine(&estimates).map_err(run_err)?;
                for (row, e) in rows[first..].iter_mut().zip(&refined) {
                    row.ref_re = Some(e.value.re);
                    row.ref_im = Some(e.value.im);
                    row.ref_var_re = Some(e.var_re);
                    row.ref_var_im = Some(e.var_im);
                }
            }
        }
    }
    // largest deviation from the noisy truth in units of the reported σ
    let worst = rows
        .iter()
        .map(|r| {
            let zr = (r.re - r.truth_re).abs() / r.var_re.sqrt();
            let zi = (r.im - r.truth_im).abs() / r.var_im.sqrt();
            zr.max(zi)
        })
        .fold(0.0, f64::max);
    Ok(CommandOutput {
        summary: serde_json::json!({
            "points": grid.len(),
            "rows": rows.len(),
            "max_component_deviation_sigma": worst,
        }),
        rows,
        passed: true,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCsvRow {
    /// In the config's units (π for angles).
    pub axis_value: f64,
    pub var_analytic: Option<f64>,
    pub var_transfer: f64,
    pub var_empirical: Option<f64>,
    pub mean_re: Option<f64>,
    pub mean_im: Option<f64>,
    pub trials: u64,
    pub seed: u64,
}

/// Analytic (Eq. 10), error-transfer (Eq. 8) and empirical variance curves.
pub fn cmd_variance_sweep(r: &Resolved) -> Result<CommandOutput<SweepCsvRow>, CliError> {
    let (axis, grid, trials) = r.sweep_grid()?;
    let base = match r.parametric {
        Some((theta, eta, coherence, phase)) => SweepBase::Parametric {
            theta,
            eta,
            coherence,
            phase,
        },
        None => {
            if r.outcomes.len() != 1 || r.pairs.len() != 1 {
                return Err(CliError::Config(
                    "a sweep over a fixed POVM needs exactly one outcome and one pair in [entries]".into(),
                ));
            }
            SweepBase::Fixed {
                povm: r.povm.clone(),
                l: r.outcomes[0],
                j: r.pairs[0].0,
                k: r.pairs[0].1,
            }
        }
    };
    if !r.coupling.is_symmetric() {
        return Err(CliError::Config(
            "variance-sweep uses a symmetric coupling; drop g_a".into(),
        ));
    }
    let spec = SweepSpec {
        axis: match axis {
            Axis::G => SweepAxis::G,
            Axis::Theta => SweepAxis::Theta,
            Axis::Xi => SweepAxis::Xi,
            Axis::Phi => SweepAxis::Phi,
        },
        grid,
        trials,
        base,
        g: r.coupling.g_b(),
        shot: r.shot,
        policy: r.config.marginals,
    };
    spec.validate().map_err(|e| CliError::Config(format!("sweep: {e}")))?;
    let scale = if axis == Axis::Xi { 1.0 } else { PI };
    let rows: Vec<SweepRow> = variance_sweep(&spec).map_err(run_err)?;
    let argmin = rows
        .iter()
        .min_by(|a, b| a.var_transfer.total_cmp(&b.var_transfer))
        .map(|row| row.axis_value / scale);
    Ok(CommandOutput {
        summary: serde_json::json!({
            "axis": axis,
            "points": rows.len(),
            "argmin_var_transfer": argmin,
        }),
        rows: rows
            .into_iter()
            .map(|row| SweepCsvRow {
                axis_value: row.axis_value / scale,
                var_analytic: row.var_analytic,
                var_transfer: row.var_transfer,
                var_empirical: row.var_empirical,
                mean_re: row.mean_re,
                mean_im: row.mean_im,
                trials: row.trials,
                seed: row.seed,
            })
            .collect(),
        passed: true,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationRow {
    /// `xi` or `phase`.
    pub quantity: &'static str,
    pub epsilon: Option<f64>,
    pub voltage: Option<f64>,
    /// Input `P_H − P_V` for phase rows given as measured differences.
    pub difference: Option<f64>,
    pub truth: Option<f64>,
    pub estimate: Option<f64>,
    /// Calibration failure (e.g. a sampled `2(P_H − P_V)` outside `[−1, 1]`).
    pub error: Option<String>,
    pub n: Option<u64>,
    pub seed: u64,
}

/// `ξ = P_H − P_V` and `φ = arccos[2(P_H − P_V)]` calibration tables.
///
/// Sampled point `i` is seeded with `seed + i`.
pub fn cmd_calibrate(r: &Resolved) -> Result<CommandOutput<CalibrationRow>, CliError> {
    let cal = r.config.calibration.clone().unwrap_or_default();
    if cal.n == Some(0) {
        return Err(CliError::Config("calibration.n must be at least 1".into()));
    }
    if r.noise.is_none() && cal.differences.is_none() {
        return Err(CliError::Config(
            "calibrate needs a [noise] block or calibration.differences".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut worst_xi_z: f64 = 0.0;
    for (i, np) in r.noise.iter().flatten().enumerate() {
        let seed = r.seed.wrapping_add(i as u64);
        match *np {
            NoisePoint::Dephasing { epsilon, xi } => {
                let estimate = match cal.n {
                    Some(n) => {
                        let e = calibrate_xi(xi, n, seed).map_err(run_err)?;
                        let sd = ((1.0 - xi * xi) / n as f64).sqrt();
                        if sd > 0.0 {
                            worst_xi_z = worst_xi_z.max((e - xi).abs() / sd);
                        }
                        e
                    }
                    None => calibrate_xi_exact(xi).map_err(run_err)?,
                };
                rows.push(CalibrationRow {
                    quantity: "xi",
                    epsilon,
                    voltage: None,
                    difference: None,
                    truth: Some(xi),
                    estimate: Some(estimate),
                    error: None,
                    n: cal.n,
                    seed,
                });
            }
            NoisePoint::Rotation { voltage, phi } => {
                let (p_h, p_v) = phase_calibration_probabilities(phi);
                let (ph_hat, pv_hat) = match cal.n {
                    Some(n) => sample_populations(p_h, n, seed).map_err(run_err)?,
                    None => (p_h, p_v),
                };
                let (estimate, error) = match calibrate_phase(ph_hat, pv_hat) {
                    Ok(v) => (Some(v), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                rows.push(CalibrationRow {
                    quantity: "phase",
                    epsilon: None,
                    voltage,
                    difference: Some(ph_hat - pv_hat),
                    truth: Some(reduce_angle(phi).abs()),
                    estimate,
                    error,
                    n: cal.n,
                    seed,
                });
            }
        }
    }
    for &diff in cal.differences.iter().flatten() {
        let p_h = (1.0 + diff) / 2.0;
        let (estimate, error) = match calibrate_phase(p_h, 1.0 - p_h) {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        };
        rows.push(CalibrationRow {
            quantity: "phase",
            epsilon: None,
            voltage: None,
            difference: Some(diff),
            truth: None,
            estimate,
            error,
            n: None,
            seed: r.seed,
        });
    }
    let failures = rows.iter().filter(|row| row.error.is_some()).count();
    Ok(CommandOutput {
        summary: serde_json::json!({
            "rows": rows.len(),
            "failed_points": failures,
            "max_xi_deviation_sigma": worst_xi_z,
        }),
        rows,
        passed: true,
    })
}
