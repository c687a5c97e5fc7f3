//! Finite-statistics simulation: shot-noise sampling of meter tables,
//! repeated trials and parameter sweeps.
//!
//! Every stochastic output is a pure function of `(scenario, seed)`. Trial
//! `t` draws from `ChaCha8Rng::seed_from_u64(seed)` on stream `t`, so
//! results do not depend on thread count or scheduling.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{analytic_variance, completeness_refine, EntryEstimate, EntryEstimator, MarginalPolicy};
use crate::linalg::Basis;
use crate::noise::{apply_dephasing, apply_phase_rotation};
use crate::povm::{equivalent_theta, matrix_entry_oracle, parametric_povm, Povm};
use crate::protocol::{
    meter_tables, prepare_entry, CouplingConfig, MeterBasisSetting, MeterTables, TableOrigin, P_FLOOR,
};

/// Recorded in run metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8";

/// Particle number used in Fig. 2 and Fig. 4.
pub const DEFAULT_N: u64 = 12790;

pub const DEFAULT_TRIALS: u64 = 10_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    /// Each cell count independently `Poisson(N·W_mn)`.
    #[default]
    Poisson,
    /// `N` particles per setting distributed over the four cells and rejection.
    Multinomial,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotModel {
    n_per_setting: u64,
    statistics: Statistics,
    seed: u64,
}

impl ShotModel {
    pub fn new(n_per_setting: u64, statistics: Statistics, seed: u64) -> Result<Self> {
        if n_per_setting == 0 {
            return Err(Error::Domain("particle number per setting must be at least 1".into()));
        }
        Ok(Self {
            n_per_setting,
            statistics,
            seed,
        })
    }

    pub fn poisson(n_per_setting: u64, seed: u64) -> Result<Self> {
        Self::new(n_per_setting, Statistics::Poisson, seed)
    }

    pub fn n_per_setting(&self) -> u64 {
        self.n_per_setting
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }
}

/// Generator for trial `stream` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn poisson_count(lambda: f64, rng: &mut impl Rng) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    // lambda is positive and finite here, so construction cannot fail
    Poisson::new(lambda).map(|p| p.sample(rng) as u64).unwrap_or(0)
}

fn binomial_count(n: u64, p: f64, rng: &mut impl Rng) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).map(|b| b.sample(rng)).unwrap_or(0)
}

/// Draws empirical tables `Ŵ = count / N` from exact tables `w`.
pub fn sample_counts(w: &MeterTables, n: u64, statistics: Statistics, rng: &mut impl Rng) -> MeterTables {
    let mut out = MeterTables::zeros(TableOrigin::Sampled { n_per_setting: n });
    let nf = n as f64;
    for s in MeterBasisSetting::all() {
        let t = w.get(s);
        let cells = [t[0][0], t[0][1], t[1][0], t[1][1]].map(|x| x.max(0.0));
        let counts: [u64; 4] = match statistics {
            Statistics::Poisson => cells.map(|c| poisson_count(nf * c, rng)),
            Statistics::Multinomial => {
                // sequential binomials over (00, 01, 10, 11, rejected)
                let mut left = n;
                let mut mass = 1.0;
                let mut c = [0u64; 4];
                for (i, &p) in cells.iter().enumerate() {
                    let q = if mass > 0.0 { (p / mass).min(1.0) } else { 0.0 };
                    c[i] = binomial_count(left, q, rng);
                    left -= c[i];
                    mass -= p;
                }
                c
            }
        };
        let out_t = out.get_mut(s);
        out_t[0][0] = counts[0] as f64 / nf;
        out_t[0][1] = counts[1] as f64 / nf;
        out_t[1][0] = counts[2] as f64 / nf;
        out_t[1][1] = counts[3] as f64 / nf;
    }
    out
}

/// One entry `⟨a_j|Π_l|a_k⟩` (computational basis) under a given coupling.
///
/// Estimates are divided by `normalization`; with the parametric element
/// `η[[cos²θ, ·], [·, sin²θ]]` and `normalization = η` they refer to the
/// bracketed entry whose variance Eq. (10) describes.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub povm: Povm,
    pub l: usize,
    pub j: usize,
    pub k: usize,
    pub coupling: CouplingConfig,
    pub policy: MarginalPolicy,
    pub normalization: f64,
}

impl Scenario {
    pub fn new(povm: Povm, l: usize, j: usize, k: usize, coupling: CouplingConfig) -> Result<Self> {
        let d = povm.dim();
        povm.element(l)?;
        for idx in [j, k] {
            if idx >= d {
                return Err(Error::IndexOutOfRange { index: idx, dim: d });
            }
        }
        if j == k {
            return Err(Error::Domain(
                "the protocol targets off-diagonal entries (j != k)".into(),
            ));
        }
        Ok(Self {
            povm,
            l,
            j,
            k,
            coupling,
            policy: MarginalPolicy::default(),
            normalization: 1.0,
        })
    }

    /// `{Π(θ), I − Π(θ)}` with `e01 = coherence · cosθ sinθ · e^{i·phase}`,
    /// entry `(1, 0)` of outcome 0, normalized by `η`.
    pub fn parametric(theta: f64, eta: f64, coherence: f64, phase: f64, coupling: CouplingConfig) -> Result<Self> {
        if !(-1.0..=1.0).contains(&coherence) {
            return Err(Error::Domain(format!("coherence must lie in [-1, 1], got {coherence}")));
        }
        let e01 = Complex64::from_polar(coherence * theta.cos() * theta.sin(), phase);
        let povm = parametric_povm(theta, eta, e01)?;
        let mut s = Self::new(povm, 0, 1, 0, coupling)?;
        s.normalization = eta;
        Ok(s)
    }

    pub fn with_policy(mut self, policy: MarginalPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_normalization(mut self, normalization: f64) -> Result<Self> {
        if !(normalization > 0.0 && normalization.is_finite()) {
            return Err(Error::Domain(format!(
                "normalization must be positive, got {normalization}"
            )));
        }
        self.normalization = normalization;
        Ok(self)
    }

    /// Ground truth (normalized).
    pub fn oracle(&self) -> Result<Complex64> {
        let v = matrix_entry_oracle(
            &self.povm,
            self.l,
            self.j,
            self.k,
            &Basis::computational(self.povm.dim()),
        )?;
        Ok(v / self.normalization)
    }

    /// Exact `W` tables; fails if the outcome is (numerically) never observed.
    pub fn exact_tables(&self) -> Result<MeterTables> {
        let js = prepare_entry(self.povm.dim(), self.j, self.k, &self.coupling)?;
        let w = meter_tables(&js, self.povm.element(self.l)?)?;
        let p_f = w.total(MeterBasisSetting::all()[0]);
        if p_f <= P_FLOOR {
            return Err(Error::DeadPostSelection { p_f, floor: P_FLOOR });
        }
        Ok(w)
    }

    pub fn estimator(&self) -> Result<EntryEstimator> {
        EntryEstimator::new(self.povm.dim(), &self.coupling, self.policy)
    }

    /// Exact-path estimate with the error-transfer variance at `n` (normalized).
    pub fn predict(&self, n: u64) -> Result<EntryEstimate> {
        let est = self.estimator()?.predict(&self.exact_tables()?, n)?;
        Ok(est.normalized(self.normalization))
    }

    /// Eq. (10) for qubit scenarios with a symmetric coupling, in the units
    /// of this scenario's estimates.
    pub fn analytic_variance(&self, n: u64) -> Option<f64> {
        if self.povm.dim() != 2 || !self.coupling.is_symmetric() {
            return None;
        }
        let (theta, eta) = equivalent_theta(self.povm.element(self.l).ok()?, self.j).ok()?;
        let bracketed = analytic_variance(theta, self.coupling.g_b(), eta.min(1.0), n).ok()?;
        Some(bracketed * (eta / self.normalization).powi(2))
    }
}

/// Mean and unbiased sample variances of a set of complex estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub mean: Complex64,
    /// `None` with fewer than two samples.
    pub var_re: Option<f64>,
    pub var_im: Option<f64>,
    pub count: u64,
}

impl SampleStats {
    pub fn from_values(values: &[Complex64]) -> Self {
        let count = values.len() as u64;
        if values.is_empty() {
            return Self {
                mean: Complex64::new(f64::NAN, f64::NAN),
                var_re: None,
                var_im: None,
                count,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<Complex64>() / n;
        let (var_re, var_im) = if values.len() < 2 {
            (None, None)
        } else {
            let (a, b) = values.iter().fold((0.0, 0.0), |(a, b), v| {
                let d = v - mean;
                (a + d.re * d.re, b + d.im * d.im)
            });
            (Some(a / (n - 1.0)), Some(b / (n - 1.0)))
        };
        Self {
            mean,
            var_re,
            var_im,
            count,
        }
    }

    pub fn total_variance(&self) -> Option<f64> {
        Some(self.var_re? + self.var_im?)
    }
}

/// Outcome of repeated sample → estimate cycles at one scenario point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub mean: Complex64,
    pub sample_var_re: Option<f64>,
    pub sample_var_im: Option<f64>,
    /// Error-transfer (Eq. 8) variance at the exact tables.
    pub predicted_var_re: f64,
    pub predicted_var_im: f64,
    pub oracle: Complex64,
    pub trials: u64,
    pub n_per_setting: u64,
    pub seed: u64,
}

impl TrialSummary {
    pub fn sample_var(&self) -> Option<f64> {
        Some(self.sample_var_re? + self.sample_var_im?)
    }

    pub fn predicted_var(&self) -> f64 {
        self.predicted_var_re + self.predicted_var_im
    }

    /// Standard error of the mean, per component.
    pub fn std_error(&self) -> Option<(f64, f64)> {
        let t = self.trials as f64;
        Some(((self.sample_var_re? / t).sqrt(), (self.sample_var_im? / t).sqrt()))
    }
}

fn check_trials(trials: u64) -> Result<()> {
    if trials == 0 {
        return Err(Error::Domain("at least one trial is required".into()));
    }
    if trials > u32::MAX as u64 {
        return Err(Error::Domain(format!("at most {} trials per point", u32::MAX)));
    }
    Ok(())
}

/// As [`run_trials`], drawing trial `t` from stream `stream_base + t`, so
/// several points of one run can share a seed without sharing draws.
pub fn run_trials_on_stream(
    scenario: &Scenario,
    shot: &ShotModel,
    trials: u64,
    stream_base: u64,
) -> Result<TrialSummary> {
    check_trials(trials)?;
    let w = scenario.exact_tables()?;
    let est = scenario.estimator()?;
    let n = shot.n_per_setting;
    let predicted = est.predict(&w, n)?.normalized(scenario.normalization);
    let values: Vec<Complex64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(shot.seed, stream_base + t);
            let sampled = sample_counts(&w, n, shot.statistics, &mut rng);
            est.estimate(&sampled).value / scenario.normalization
        })
        .collect();
    let stats = SampleStats::from_values(&values);
    Ok(TrialSummary {
        mean: stats.mean,
        sample_var_re: stats.var_re,
        sample_var_im: stats.var_im,
        predicted_var_re: predicted.var_re,
        predicted_var_im: predicted.var_im,
        oracle: scenario.oracle()?,
        trials,
        n_per_setting: n,
        seed: shot.seed,
    })
}

/// Repeats sampling and estimation `trials` times in parallel.
pub fn run_trials(scenario: &Scenario, shot: &ShotModel, trials: u64) -> Result<TrialSummary> {
    run_trials_on_stream(scenario, shot, trials, 0)
}

/// Paired comparison of squared errors, raw minus refined.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedReduction {
    pub mean: f64,
    pub std_error: f64,
}

impl PairedReduction {
    /// One-sided z statistic `mean / std_error`.
    pub fn z(&self) -> f64 {
        self.mean / self.std_error
    }
}

/// Raw and completeness-refined statistics for every outcome of one entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementSummary {
    pub raw: Vec<SampleStats>,
    pub refined: Vec<SampleStats>,
    pub oracle: Vec<Complex64>,
    /// Per outcome: squared error of raw minus refined, averaged over trials.
    pub reduction: Vec<PairedReduction>,
    pub trials: u64,
    pub n_per_setting: u64,
    pub seed: u64,
}

/// Samples all outcomes of entry `(j, k)` per trial, estimates each with
/// plug-in variances, and applies completeness refinement.
pub fn run_refinement_trials(
    povm: &Povm,
    j: usize,
    k: usize,
    coupling: &CouplingConfig,
    shot: &ShotModel,
    trials: u64,
) -> Result<RefinementSummary> {
    check_trials(trials)?;
    let scenarios = (0..povm.len())
        .map(|l| Scenario::new(povm.clone(), l, j, k, *coupling))
        .collect::<Result<Vec<_>>>()?;
    let tables = scenarios.iter().map(|s| s.exact_tables()).collect::<Result<Vec<_>>>()?;
    let oracle = scenarios.iter().map(|s| s.oracle()).collect::<Result<Vec<_>>>()?;
    let est = scenarios[0].estimator()?;
    let n = shot.n_per_setting;
    let per_trial: Vec<(Vec<Complex64>, Vec<Complex64>)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(shot.seed, t);
            let raw: Vec<EntryEstimate> = tables
                .iter()
                .map(|w| est.estimate(&sample_counts(w, n, shot.statistics, &mut rng)))
                .collect();
            let refined = completeness_refine(&raw)?;
            Ok((
                raw.iter().map(|e| e.value).collect(),
                refined.iter().map(|e| e.value).collect(),
            ))
        })
        .collect::<Result<_>>()?;
    let outcomes = povm.len();
    let column = |pick: &dyn Fn(&(Vec<Complex64>, Vec<Complex64>)) -> &Vec<Complex64>, l: usize| -> Vec<Complex64> {
        per_trial.iter().map(|p| pick(p)[l]).collect()
    };
    let mut raw = Vec::with_capacity(outcomes);
    let mut refined = Vec::with_capacity(outcomes);
    let mut reduction = Vec::with_capacity(outcomes);
    for l in 0..outcomes {
        let r = column(&|p| &p.0, l);
        let f = column(&|p| &p.1, l);
        let diffs: Vec<f64> = r
            .iter()
            .zip(&f)
            .map(|(a, b)| (a - oracle[l]).norm_sqr() - (b - oracle[l]).norm_sqr())
            .collect();
        let m = diffs.iter().sum::<f64>() / trials as f64;
        let se = if trials > 1 {
            let v = diffs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (trials as f64 - 1.0);
            (v / trials as f64).sqrt()
        } else {
            f64::NAN
        };
        raw.push(SampleStats::from_values(&r));
        refined.push(SampleStats::from_values(&f));
        reduction.push(PairedReduction { mean: m, std_error: se });
    }
    Ok(RefinementSummary {
        raw,
        refined,
        oracle,
        reduction,
        trials,
        n_per_setting: n,
        seed: shot.seed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Symmetric coupling strength.
    G,
    /// Parametric element angle.
    Theta,
    /// Dephasing overlap applied to the base POVM.
    Xi,
    /// Phase rotation applied to the base POVM.
    Phi,
}

/// POVM a sweep starts from.
#[derive(Clone, Debug)]
pub enum SweepBase {
    /// `{Π(θ), I − Π(θ)}`, entry `(1, 0)` of outcome 0, normalized by `η`.
    Parametric {
        theta: f64,
        eta: f64,
        coherence: f64,
        phase: f64,
    },
    Fixed {
        povm: Povm,
        l: usize,
        j: usize,
        k: usize,
    },
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    /// `0` skips the empirical column.
    pub trials: u64,
    pub base: SweepBase,
    /// Coupling used on every axis except `g`.
    pub g: f64,
    pub shot: ShotModel,
    pub policy: MarginalPolicy,
}

/// One grid point of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub var_analytic: Option<f64>,
    pub var_transfer: f64,
    pub var_empirical: Option<f64>,
    pub mean_re: Option<f64>,
    pub mean_im: Option<f64>,
    pub trials: u64,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Domain("sweep grid is empty".into()));
        }
        if let Some(bad) = self.grid.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("sweep grid value {bad} is not finite")));
        }
        if self.axis == SweepAxis::G {
            CouplingConfig::symmetric(self.g)?;
            for &g in &self.grid {
                CouplingConfig::symmetric(g)?;
            }
        } else {
            CouplingConfig::symmetric(self.g)?;
        }
        if self.axis == SweepAxis::Theta && !matches!(self.base, SweepBase::Parametric { .. }) {
            return Err(Error::Domain("a theta sweep needs a parametric base element".into()));
        }
        if self.trials > u32::MAX as u64 {
            return Err(Error::Domain(format!("at most {} trials per point", u32::MAX)));
        }
        Ok(())
    }

    /// Scenario at grid value `x`.
    pub fn scenario_at(&self, x: f64) -> Result<Scenario> {
        let g = if self.axis == SweepAxis::G { x } else { self.g };
        let coupling = CouplingConfig::symmetric(g)?;
        let scenario = match &self.base {
            SweepBase::Parametric {
                theta,
                eta,
                coherence,
                phase,
            } => {
                let theta = if self.axis == SweepAxis::Theta { x } else { *theta };
                let s = Scenario::parametric(theta, *eta, *coherence, *phase, coupling)?;
                match self.axis {
                    SweepAxis::Xi => {
                        let p = apply_dephasing(&s.povm, x, s.j, s.k)?;
                        Scenario { povm: p, ..s }
                    }
                    SweepAxis::Phi => {
                        let p = apply_phase_rotation(&s.povm, x, s.j, s.k)?;
                        Scenario { povm: p, ..s }
                    }
                    _ => s,
                }
            }
            SweepBase::Fixed { povm, l, j, k } => {
                let p = match self.axis {
                    SweepAxis::Xi => apply_dephasing(povm, x, *j, *k)?,
                    SweepAxis::Phi => apply_phase_rotation(povm, x, *j, *k)?,
                    _ => povm.clone(),
                };
                Scenario::new(p, *l, *j, *k, coupling)?
            }
        };
        Ok(scenario.with_policy(self.policy))
    }
}

/// Analytic, error-transfer and empirical variances at every grid point.
///
/// Grid point `i` draws its trials from streams `i·2³² + t`.
pub fn variance_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let n = spec.shot.n_per_setting;
    spec.grid
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let s = spec.scenario_at(x)?;
            let predicted = s.predict(n)?;
            let (var_empirical, mean_re, mean_im) = if spec.trials > 0 {
                let summary = run_trials_on_stream(&s, &spec.shot, spec.trials, (i as u64) << 32)?;
                (summary.sample_var(), Some(summary.mean.re), Some(summary.mean.im))
            } else {
                (None, None, None)
            };
            Ok(SweepRow {
                axis_value: x,
                var_analytic: s.analytic_variance(n),
                var_transfer: predicted.total_variance(),
                var_empirical,
                mean_re,
                mean_im,
                trials: spec.trials,
                seed: spec.shot.seed,
            })
        })
        .collect()
}
