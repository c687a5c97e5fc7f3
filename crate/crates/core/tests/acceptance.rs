//! Acceptance criteria 1–9. Prints one PASS/FAIL line per criterion (with
//! the numbers behind it) and exits non-zero if any criterion fails.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::process::ExitCode;
use std::time::Instant;

use povmdt_core::estimator::{inverse_variance_weights, rt_coefficients_for};
use povmdt_core::linalg::{pauli, Ket};
use povmdt_core::montecarlo::{trial_rng, DEFAULT_N};
use povmdt_core::noise::{coherence_observable, wavepacket_overlap};
use povmdt_core::povm::haar_unitary;
use povmdt_core::*;

// fixed before any run; never re-drawn
const SEED: u64 = 20_260_518;
const TRIALS: u64 = 10_000;
const COHERENCE_LENGTH: f64 = 100.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn exact_entry(povm: &Povm, l: usize, j: usize, k: usize, cfg: &CouplingConfig) -> Complex64 {
    let js = prepare_entry(povm.dim(), j, k, cfg).unwrap();
    let w = meter_tables(&js, povm.element(l).unwrap()).unwrap();
    let pt = pauli_table_from_distributions(&w);
    estimate_offdiagonal(&pt, &rt_coefficients_for(povm.dim(), cfg).unwrap()).value
}

fn oracle(povm: &Povm, l: usize, j: usize, k: usize) -> Complex64 {
    matrix_entry_oracle(povm, l, j, k, &Basis::computational(povm.dim())).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let gs = [PI / 16.0, PI / 8.0, FRAC_PI_4, 3.0 * PI / 8.0];
    let mut max_err: f64 = 0.0;
    let mut entries = 0;
    for i in 0..100u64 {
        let d = 2 + (i % 3) as usize;
        let l_count = d + ((i / 3) as usize % (d + 1));
        let povm = random_povm(d, l_count, 1000 + i).unwrap();
        let cfg = CouplingConfig::symmetric(gs[(i % 4) as usize]).unwrap();
        let coeffs = rt_coefficients_for(d, &cfg).unwrap();
        for j in 0..d {
            for k in (0..d).filter(|&k| k != j) {
                let js = prepare_entry(d, j, k, &cfg).unwrap();
                for l in 0..l_count {
                    let w = meter_tables(&js, povm.element(l).unwrap()).unwrap();
                    let got = estimate_offdiagonal(&pauli_table_from_distributions(&w), &coeffs).value;
                    max_err = max_err.max((got - oracle(&povm, l, j, k)).norm());
                    entries += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        max_err < 1e-9 && secs < 10.0,
        format!("{entries} entries over 100 POVMs, max error {max_err:.2e} (< 1e-9), {secs:.2} s (< 10 s)"),
    )
}

fn criterion_2() -> Outcome {
    let cfg = CouplingConfig::symmetric(FRAC_PI_4).unwrap();
    let r = 2f64.sqrt() / 6.0;
    let stated = [
        Complex64::new(0.0, 0.0),
        Complex64::new(-r, 0.0),
        Complex64::from_polar(r, -2.0 * PI / 3.0),
        Complex64::from_polar(r, 2.0 * PI / 3.0),
    ];
    // effects exactly as printed: ½|ψ_l⟩⟨ψ_l|, ψ_1 = |H⟩, ψ_l = (|H⟩ + √2 v_l |V⟩)/√3
    let printed_v = [
        Complex64::new(-1.0, 0.0),
        Complex64::from_polar(1.0, -2.0 * PI / 3.0),
        Complex64::from_polar(1.0, 2.0 * PI / 3.0),
    ];
    let mut printed = vec![Operator::projector(&Ket::from_vec(vec![
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 0.0),
    ]))
    .scale_real(0.5)];
    for v in printed_v {
        let psi = Ket::from_vec(vec![Complex64::new(1.0 / 3f64.sqrt(), 0.0), v * (2f64 / 3.0).sqrt()]);
        printed.push(Operator::projector(&psi).scale_real(0.5));
    }
    let js = prepare_entry(2, 1, 0, &cfg).unwrap();
    let coeffs = rt_coefficients_for(2, &cfg).unwrap();
    let mut err_printed: f64 = 0.0;
    for (e, want) in printed.iter().zip(stated) {
        let w = meter_tables(&js, e).unwrap();
        let got = estimate_offdiagonal(&pauli_table_from_distributions(&w), &coeffs).value;
        err_printed = err_printed.max((got - want).norm());
    }
    let sic = make_sic_povm();
    let err_sic = (0..4)
        .map(|l| (exact_entry(&sic, l, 1, 0, &cfg) - oracle(&sic, l, 1, 0)).norm())
        .fold(0.0, f64::max);
    outcome(
        err_printed < 1e-10 && err_sic < 1e-10,
        format!(
            "printed Eq.(12) effects -> stated E_VH set, max error {err_printed:.2e}; \
             complete SIC (psi_2 sign corrected) vs oracle, max error {err_sic:.2e} (< 1e-10)"
        ),
    )
}

fn criterion_3() -> Outcome {
    let n = DEFAULT_N;
    let theta_y = (1.0 / 3f64.sqrt()).acos();
    let x = analytic_variance(0.0, FRAC_PI_4, 0.5, n).unwrap();
    let y = analytic_variance(theta_y, FRAC_PI_4, 0.5, n).unwrap();
    let (wx, wy) = (1.0 / 6395.0, (7.0 / 3.0) / 6395.0);
    let rel_x = (x - wx).abs() / wx;
    let rel_y = (y - wy).abs() / wy;
    let cfg = CouplingConfig::symmetric(FRAC_PI_4).unwrap();
    let tx = Scenario::parametric(0.0, 0.5, 0.0, 0.0, cfg)
        .unwrap()
        .predict(n)
        .unwrap()
        .total_variance();
    let ty = Scenario::parametric(theta_y, 0.5, 0.8, 0.3, cfg)
        .unwrap()
        .predict(n)
        .unwrap()
        .total_variance();
    let tr_x = (tx - x).abs() / x;
    let tr_y = (ty - y).abs() / y;
    outcome(
        rel_x <= 1e-15 && rel_y <= 1e-15 && tr_x < 1e-9 && tr_y < 1e-9,
        format!(
            "X = {x:.6e} (rel {rel_x:.1e}), Y = {y:.6e} (rel {rel_y:.1e}); \
             Eq.(8) vs Eq.(10): rel {tr_x:.1e}, {tr_y:.1e}"
        ),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let s = Scenario::parametric(0.0, 0.5, 0.0, 0.0, CouplingConfig::symmetric(FRAC_PI_4).unwrap()).unwrap();
    let t = run_trials(&s, &ShotModel::poisson(DEFAULT_N, SEED).unwrap(), TRIALS).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let var = t.sample_var().unwrap();
    let ratio = var * 6395.0;
    let (se_re, se_im) = t.std_error().unwrap();
    let d = t.mean - t.oracle;
    let z = (d.re / se_re).abs().max((d.im / se_im).abs());
    outcome(
        (ratio - 1.0).abs() < 0.1 && z < 3.0 && secs < 60.0,
        format!(
            "sample variance {var:.4e} = {ratio:.4} x 1/6395 (within 10%), mean offset {z:.2} sigma (< 3), {secs:.2} s"
        ),
    )
}

fn criterion_5() -> Outcome {
    let n = DEFAULT_N;
    let grid: Vec<f64> = (1..=7).map(|k| k as f64 * PI / 16.0).collect();
    let thetas = [
        ("0", 0.0),
        ("pi/4", FRAC_PI_4),
        ("acos(1/sqrt3)", (1.0 / 3f64.sqrt()).acos()),
        ("pi", PI),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, theta) in thetas {
        let v: Vec<f64> = grid
            .iter()
            .map(|&g| analytic_variance(theta, g, 0.5, n).unwrap())
            .collect();
        let at_quarter = v[3];
        let argmin = (0..v.len()).min_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap()).unwrap();
        let (lo, hi) = (v[0] / at_quarter, v[6] / at_quarter);
        let ok = argmin == 3 && lo > 10.0 && hi > 10.0;
        pass &= ok;
        parts.push(format!(
            "theta={name}: argmin {}pi/16, ends {lo:.1}x/{hi:.1}x",
            argmin + 1
        ));
    }
    let finite = (0..=64)
        .map(|i| analytic_variance(i as f64 * PI / 64.0, FRAC_PI_4, 0.5, n).unwrap())
        .all(|v| v.is_finite() && v > 0.0);
    pass &= finite;
    parts.push(format!("theta-grid finite: {finite}"));
    outcome(pass, parts.join("; "))
}

// 2-D region with the coverage of ±3σ (99.73%): χ²₂ quantile −2 ln(0.0027)
const CHI2_2_3SIGMA: f64 = 11.829_583_137_030_72;

#[derive(Clone, Copy, Default)]
struct TrackCheck {
    points: usize,
    resolved: usize,
    worst_mod: f64,
    worst_arg: f64,
    worst_chi2: f64,
}

/// Single-shot estimate at N against `truth`. Where `|truth| > 5σ` the
/// modulus and argument must each lie within 3σ (argument measured as the
/// shift from `reference` when given, expected to be `−φ`); otherwise the
/// argument is undefined and the 2-D deviation must lie in the 3σ region.
fn track(
    c: &mut TrackCheck,
    noisy: &Povm,
    truth: Complex64,
    shift: Option<(Complex64, f64)>,
    l: usize,
    seed: u64,
) -> bool {
    let s = Scenario::new(noisy.clone(), l, 1, 0, CouplingConfig::symmetric(FRAC_PI_4).unwrap()).unwrap();
    let t = run_trials(&s, &ShotModel::poisson(DEFAULT_N, seed).unwrap(), 1).unwrap();
    let (vr, vi) = (t.predicted_var_re, t.predicted_var_im);
    let d = t.mean - truth;
    c.points += 1;
    let a = truth.arg();
    let s_par = (vr * a.cos().powi(2) + vi * a.sin().powi(2)).sqrt();
    let s_perp = (vr * a.sin().powi(2) + vi * a.cos().powi(2)).sqrt();
    if truth.norm() > 5.0 * s_par.max(s_perp) {
        c.resolved += 1;
        let zm = (t.mean.norm() - truth.norm()).abs() / s_par;
        let darg = match shift {
            Some((reference, phi)) => noise::reduce_angle(t.mean.arg() - reference.arg() + phi),
            None => noise::reduce_angle(t.mean.arg() - truth.arg()),
        };
        let za = darg.abs() * truth.norm() / s_perp;
        c.worst_mod = c.worst_mod.max(zm);
        c.worst_arg = c.worst_arg.max(za);
        zm < 3.0 && za < 3.0
    } else {
        let chi2 = d.re * d.re / vr + d.im * d.im / vi;
        c.worst_chi2 = c.worst_chi2.max(chi2);
        chi2 < CHI2_2_3SIGMA
    }
}

fn criterion_6() -> Outcome {
    let sic = make_sic_povm();
    let eps = [0.0, 20.0, 40.0, 60.0, 80.0, 120.0, 160.0, 200.0, 240.0];
    let phis = [-3.0 * PI / 5.0, -PI / 5.0, 2.0 * PI / 5.0, 4.0 * PI / 5.0];
    let mut pass = true;
    let mut seed = SEED;
    let mut dep = TrackCheck::default();
    let mut rot = TrackCheck::default();
    for l in 0..4 {
        let e = oracle(&sic, l, 1, 0);
        for &ep in &eps {
            let xi = wavepacket_overlap(ep, COHERENCE_LENGTH).unwrap();
            let noisy = apply_dephasing(&sic, xi, 1, 0).unwrap();
            seed += 1;
            pass &= track(&mut dep, &noisy, e * xi, None, l, seed);
        }
        for &phi in &phis {
            let noisy = apply_phase_rotation(&sic, phi, 1, 0).unwrap();
            seed += 1;
            pass &= track(
                &mut rot,
                &noisy,
                e * Complex64::from_polar(1.0, -phi),
                Some((e, phi)),
                l,
                seed,
            );
        }
    }
    outcome(
        pass,
        format!(
            "dephasing {} points ({} resolved): worst modulus {:.2} sigma, arg {:.2} sigma, unresolved chi2 {:.2}; \
             rotation {} points ({} resolved): {:.2} / {:.2} sigma, chi2 {:.2} (limits 3 sigma, chi2 < 11.83)",
            dep.points,
            dep.resolved,
            dep.worst_mod,
            dep.worst_arg,
            dep.worst_chi2,
            rot.points,
            rot.resolved,
            rot.worst_mod,
            rot.worst_arg,
            rot.worst_chi2
        ),
    )
}

fn criterion_7() -> Outcome {
    let sic = make_sic_povm();
    let cfg = CouplingConfig::symmetric(FRAC_PI_4).unwrap();
    let mut worst: f64 = 0.0;
    for l in 0..4 {
        let var = |p: &Povm| {
            Scenario::new(p.clone(), l, 1, 0, cfg)
                .unwrap()
                .predict(DEFAULT_N)
                .unwrap()
                .total_variance()
        };
        let base = var(&sic);
        for xi in [1.0, 0.5, 0.0] {
            worst = worst.max((var(&apply_dephasing(&sic, xi, 1, 0).unwrap()) - base).abs() / base);
        }
        for phi in [0.0, 2.0 * PI / 5.0] {
            worst = worst.max((var(&apply_phase_rotation(&sic, phi, 1, 0).unwrap()) - base).abs() / base);
        }
    }
    outcome(
        worst < 1e-12,
        format!("max relative change of Eq.(8) variance {worst:.1e} (< 1e-12)"),
    )
}

fn criterion_8() -> Outcome {
    let sic = make_sic_povm();
    let cfg = CouplingConfig::symmetric(FRAC_PI_4).unwrap();
    let raw: Vec<EntryEstimate> = (0..4)
        .map(|l| {
            Scenario::new(sic.clone(), l, 1, 0, cfg)
                .unwrap()
                .predict(DEFAULT_N)
                .unwrap()
        })
        .collect();
    let refined = completeness_refine(&raw).unwrap();
    let mut formula_err: f64 = 0.0;
    let mut dominated = true;
    for l in 0..4 {
        for (v, vr, pick) in [
            (raw[l].var_re, refined[l].var_re, 0),
            (raw[l].var_im, refined[l].var_im, 1),
        ] {
            let vc: f64 = (0..4)
                .filter(|&u| u != l)
                .map(|u| if pick == 0 { raw[u].var_re } else { raw[u].var_im })
                .sum();
            let w = vc / (v + vc);
            let wc = v / (v + vc);
            let want = w * wc * (v + vc);
            formula_err = formula_err.max((vr - want).abs() / want);
            dominated &= vr <= v.min(vc);
        }
    }
    // "always": a deterministic spread of variance pairs over 12 decades
    let mut rng = trial_rng(SEED, 0);
    for _ in 0..10_000 {
        use rand::Rng;
        let a = 10f64.powf(rng.random_range(-6.0..6.0));
        let b = 10f64.powf(rng.random_range(-6.0..6.0));
        let (w, wc) = inverse_variance_weights(a, b);
        dominated &= w * wc * (a + b) <= a.min(b) * (1.0 + 1e-15);
    }
    let mc = run_refinement_trials(&sic, 1, 0, &cfg, &ShotModel::poisson(DEFAULT_N, SEED).unwrap(), TRIALS).unwrap();
    let min_z = mc.reduction.iter().map(|r| r.z()).fold(f64::INFINITY, f64::min);
    let ratios: Vec<String> = (0..4)
        .map(|l| {
            format!(
                "{:.2}",
                mc.refined[l].total_variance().unwrap() / mc.raw[l].total_variance().unwrap()
            )
        })
        .collect();
    outcome(
        formula_err < 1e-12 && dominated && min_z > 1.645,
        format!(
            "formula rel err {formula_err:.1e}; refined <= min(raw, complement): {dominated}; \
             MC refined/raw variance [{}], min paired z {min_z:.1} (> 1.645)",
            ratios.join(", ")
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut worst_walk: f64 = 0.0;
    let mut rng = trial_rng(SEED, 9);
    for i in 0..30 {
        let n_pos = 2 + i % 4;
        let coin = 2 + i % 2;
        let u = haar_unitary(n_pos * coin, &mut rng);
        worst_walk = worst_walk.max(povm_from_walk(&u, n_pos, coin).unwrap().completeness_residual());
    }
    let sic = make_sic_povm();
    let plus = Operator::from_fn(2, |_, _| Complex64::new(0.5, 0.0));
    let mut worst_env: f64 = 0.0;
    for (j, k) in [(1, 0), (0, 1)] {
        let c = coherence_observable(2, j, k).unwrap();
        for eps in [0.0, 0.3, 1.1, FRAC_PI_2, 2.7] {
            let env = Environment::new(plus.clone(), pauli::sigma_z(), eps).unwrap();
            let xi = env.coherence_factor().unwrap();
            assert!(xi.im.abs() < 1e-14);
            let scaled = apply_dephasing(&sic, xi.re.max(0.0), j, k);
            if xi.re < 0.0 {
                // ξ < 0 lies outside apply_dephasing's domain; compare entrywise
                for e in sic.elements() {
                    let d = dephase_via_environment(e, &env, &c).unwrap();
                    worst_env = worst_env.max((d.get(j, k) - e.get(j, k) * xi.re).norm());
                }
                continue;
            }
            for (e, s) in sic.elements().iter().zip(scaled.unwrap().elements()) {
                worst_env = worst_env.max(dephase_via_environment(e, &env, &c).unwrap().max_abs_diff(s));
            }
        }
    }
    let anchors = [
        calibrate_phase(0.75, 0.25).unwrap() == 0.0,
        calibrate_phase(0.5, 0.5).unwrap() == FRAC_PI_2,
        calibrate_phase(0.25, 0.75).unwrap() == PI,
    ];
    outcome(
        worst_walk < 1e-12 && worst_env < 1e-10 && anchors.iter().all(|&a| a),
        format!(
            "walk completeness residual {worst_walk:.1e} (< 1e-12); environment vs apply_dephasing {worst_env:.1e} \
             (< 1e-10); phase anchors exact: {anchors:?}"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("oracle exactness", criterion_1),
        ("SIC values", criterion_2),
        ("analytic variance", criterion_3),
        ("Monte Carlo realism", criterion_4),
        ("variance-vs-g shape", criterion_5),
        ("noise-evolution tracking", criterion_6),
        ("precision immunity", criterion_7),
        ("completeness refinement", criterion_8),
        ("appendix machinery", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {}: {} [{name}] {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {} of 9 criteria pass", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
