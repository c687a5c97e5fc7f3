//! Scenario file schema (TOML) and its resolution into validated inputs.
//!
//! All angles are in units of π: `g = 0.25` is π/4. Outcome labels `l` are
//! 1-based, basis indices `j`, `k` are 0-based.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use povmdt_core::estimator::MarginalPolicy;
use povmdt_core::linalg::{Operator, DEFAULT_TOL};
use povmdt_core::montecarlo::{ShotModel, Statistics, DEFAULT_N};
use povmdt_core::noise::{wavepacket_overlap, PhaseLookup};
use povmdt_core::povm::{make_sic_povm, parametric_povm, povm_from_walk, random_povm, Povm};
use povmdt_core::protocol::CouplingConfig;
use povmdt_core::Complex64;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Global seed; `--seed` overrides it.
    #[serde(default)]
    pub seed: u64,
    /// Coupling strength (both meters), units of π. Default 0.25.
    pub g: Option<f64>,
    /// Separate coupling for meter A, units of π.
    pub g_a: Option<f64>,
    #[serde(default)]
    pub marginals: MarginalPolicy,
    pub povm: Option<PovmSource>,
    #[serde(default)]
    pub entries: EntrySelection,
    #[serde(default)]
    pub shots: ShotConfig,
    pub noise: Option<NoiseConfig>,
    pub sweep: Option<SweepConfig>,
    pub calibration: Option<CalibrationConfig>,
    /// Oracle-check tolerance on `|estimate − oracle|`. Default 1e-10.
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PovmSource {
    Sic {},
    File {
        path: PathBuf,
    },
    Random {
        d: usize,
        outcomes: usize,
        seed: u64,
    },
    Walk {
        /// JSON `{ "dim": n, "entries": [[re, im], ...] }`, row-major.
        unitary: PathBuf,
        positions: usize,
        coin: usize,
    },
    /// `{Π(θ), I − Π(θ)}`, `Π(θ) = η[[cos²θ, e01], [e01*, sin²θ]]` with
    /// `e01 = coherence · cosθ sinθ · e^{iπ·phase}`.
    Parametric {
        #[serde(default)]
        theta: f64,
        #[serde(default = "default_eta")]
        eta: f64,
        #[serde(default)]
        coherence: f64,
        #[serde(default)]
        phase: f64,
    },
}

fn default_eta() -> f64 {
    0.5
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntrySelection {
    /// 1-based outcome labels; all when absent.
    pub outcomes: Option<Vec<usize>>,
    /// `[j, k]` pairs, `j != k`; all off-diagonal pairs when absent.
    pub pairs: Option<Vec<[usize; 2]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotConfig {
    #[serde(default = "default_n")]
    pub n: u64,
    #[serde(default)]
    pub statistics: Statistics,
    /// Repetitions per scan point.
    #[serde(default = "default_trials")]
    pub trials: u64,
}

fn default_n() -> u64 {
    DEFAULT_N
}

fn default_trials() -> u64 {
    1
}

impl Default for ShotConfig {
    fn default() -> Self {
        Self {
            n: DEFAULT_N,
            statistics: Statistics::default(),
            trials: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum NoiseConfig {
    /// Give `xi` directly, or `epsilon` delays (λ) with either a Gaussian
    /// `coherence_length` or an explicit `table` of `[epsilon, xi]` pairs.
    Dephasing {
        xi: Option<Vec<f64>>,
        epsilon: Option<Vec<f64>>,
        coherence_length: Option<f64>,
        table: Option<Vec<[f64; 2]>>,
    },
    /// Give `phi` (units of π), or `voltage` with a `phase_table` of
    /// `[voltage, phi]` pairs.
    Rotation {
        phi: Option<Vec<f64>>,
        voltage: Option<Vec<f64>>,
        phase_table: Option<Vec<[f64; 2]>>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    G,
    Theta,
    Xi,
    Phi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: Axis,
    /// Units of π for `g`, `theta`, `phi`; plain overlaps for `xi`.
    pub grid: Vec<f64>,
    /// Monte Carlo trials per point; 0 skips the empirical column.
    #[serde(default)]
    pub trials: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Photons per calibration point; exact populations when absent.
    pub n: Option<u64>,
    /// Measured `P_H − P_V` values to convert to phases.
    pub differences: Option<Vec<f64>>,
}

/// One point of a noise grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoisePoint {
    Dephasing {
        epsilon: Option<f64>,
        xi: f64,
    },
    /// `phi` in radians.
    Rotation {
        voltage: Option<f64>,
        phi: f64,
    },
}

/// A validated scenario.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: ScenarioConfig,
    pub seed: u64,
    pub coupling: CouplingConfig,
    pub povm: Povm,
    /// Parametric source parameters in radians: (θ, η, coherence, phase).
    pub parametric: Option<(f64, f64, f64, f64)>,
    /// 0-based.
    pub outcomes: Vec<usize>,
    pub pairs: Vec<(usize, usize)>,
    pub shot: ShotModel,
    pub trials: u64,
    pub noise: Option<Vec<NoisePoint>>,
    pub tolerance: f64,
}

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => cfg_err(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Validates everything and builds the POVM. Relative paths are taken
    /// from `base_dir`. `default_povm` is used when the file has no `[povm]`.
    pub fn resolve(&self, base_dir: &Path, default_povm: PovmSource) -> Result<Resolved, CliError> {
        let g_b = self.g.unwrap_or(0.25);
        let g_a = self.g_a.unwrap_or(g_b);
        let coupling = CouplingConfig::new(g_b * PI, g_a * PI)
            .map_err(|e| cfg_err(format!("g = {g_b}, g_a = {g_a} (units of π): {e}")))?;

        let source = self.povm.clone().unwrap_or(default_povm);
        let (povm, parametric) = build_povm(&source, base_dir)?;
        let d = povm.dim();

        let outcomes = match &self.entries.outcomes {
            None => (0..povm.len()).collect(),
            Some(list) => {
                if list.is_empty() {
                    return Err(cfg_err("entries.outcomes is empty"));
                }
                list.iter()
                    .map(|&l| {
                        if l == 0 || l > povm.len() {
                            Err(cfg_err(format!("outcome {l} out of range 1..={}", povm.len())))
                        } else {
                            Ok(l - 1)
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?
            }
        };
        let pairs = match &self.entries.pairs {
            None => (0..d)
                .flat_map(|j| (0..d).filter(move |&k| k != j).map(move |k| (j, k)))
                .collect(),
            Some(list) => {
                if list.is_empty() {
                    return Err(cfg_err("entries.pairs is empty"));
                }
                list.iter()
                    .map(|&[j, k]| {
                        if j >= d || k >= d {
                            Err(cfg_err(format!("pair [{j}, {k}] out of range for dimension {d}")))
                        } else if j == k {
                            Err(cfg_err(format!(
                                "pair [{j}, {k}] is diagonal; only j != k is characterized"
                            )))
                        } else {
                            Ok((j, k))
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?
            }
        };

        let shot = ShotModel::new(self.shots.n, self.shots.statistics, self.seed)
            .map_err(|e| cfg_err(format!("shots.n: {e}")))?;
        if self.shots.trials == 0 {
            return Err(cfg_err("shots.trials must be at least 1"));
        }
        let noise = self.noise.as_ref().map(resolve_noise).transpose()?;
        let tolerance = self.tolerance.unwrap_or(1e-10);
        if !(tolerance > 0.0) {
            return Err(cfg_err(format!("tolerance must be positive, got {tolerance}")));
        }
        Ok(Resolved {
            config: self.clone(),
            seed: self.seed,
            coupling,
            povm,
            parametric,
            outcomes,
            pairs,
            shot,
            trials: self.shots.trials,
            noise,
            tolerance,
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitaryDocument {
    dim: usize,
    entries: Vec<[f64; 2]>,
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

type Parametric = Option<(f64, f64, f64, f64)>;

fn build_povm(source: &PovmSource, base: &Path) -> Result<(Povm, Parametric), CliError> {
    match source {
        PovmSource::Sic {} => Ok((make_sic_povm(), None)),
        PovmSource::File { path } => {
            let full = resolve_path(base, path);
            let text =
                fs::read_to_string(&full).map_err(|e| cfg_err(format!("cannot read POVM {}: {e}", full.display())))?;
            let povm = Povm::from_json(&text).map_err(|e| cfg_err(format!("POVM {}: {e}", full.display())))?;
            Ok((povm, None))
        }
        PovmSource::Random { d, outcomes, seed } => {
            let povm = random_povm(*d, *outcomes, *seed).map_err(|e| cfg_err(format!("povm: {e}")))?;
            Ok((povm, None))
        }
        PovmSource::Walk {
            unitary,
            positions,
            coin,
        } => {
            let full = resolve_path(base, unitary);
            let text = fs::read_to_string(&full)
                .map_err(|e| cfg_err(format!("cannot read walk unitary {}: {e}", full.display())))?;
            let doc: UnitaryDocument =
                serde_json::from_str(&text).map_err(|e| cfg_err(format!("walk unitary {}: {e}", full.display())))?;
            let flat: Vec<Complex64> = doc.entries.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
            let u = Operator::from_row_major(doc.dim, &flat).map_err(|e| cfg_err(format!("walk unitary: {e}")))?;
            if !u.is_unitary(DEFAULT_TOL) {
                return Err(cfg_err(format!("walk unitary {} is not unitary", full.display())));
            }
            let povm = povm_from_walk(&u, *positions, *coin).map_err(|e| cfg_err(format!("walk: {e}")))?;
            Ok((povm, None))
        }
        PovmSource::Parametric {
            theta,
            eta,
            coherence,
            phase,
        } => {
            if !(-1.0..=1.0).contains(coherence) {
                return Err(cfg_err(format!("povm.coherence must lie in [-1, 1], got {coherence}")));
            }
            let (t, ph) = (theta * PI, phase * PI);
            let e01 = Complex64::from_polar(coherence * t.cos() * t.sin(), ph);
            let povm = parametric_povm(t, *eta, e01).map_err(|e| cfg_err(format!("povm: {e}")))?;
            Ok((povm, Some((t, *eta, *coherence, ph))))
        }
    }
}

fn check_grid(name: &str, grid: &[f64]) -> Result<(), CliError> {
    if grid.is_empty() {
        return Err(cfg_err(format!("{name} grid is empty")));
    }
    if let Some(bad) = grid.iter().find(|v| !v.is_finite()) {
        return Err(cfg_err(format!("{name} grid contains {bad}")));
    }
    Ok(())
}

fn interpolate(table: &[[f64; 2]], x: f64, what: &str) -> Result<f64, CliError> {
    let points = table.iter().map(|&[a, b]| (a, b)).collect();
    let lookup = PhaseLookup::new(points).map_err(|e| cfg_err(format!("{what}: {e}")))?;
    lookup.phase_at(x).map_err(|e| cfg_err(format!("{what}: {e}")))
}

fn resolve_noise(noise: &NoiseConfig) -> Result<Vec<NoisePoint>, CliError> {
    let check_xi = |xi: f64| {
        if (0.0..=1.0).contains(&xi) {
            Ok(xi)
        } else {
            Err(cfg_err(format!("xi = {xi} outside [0, 1]")))
        }
    };
    match noise {
        NoiseConfig::Dephasing {
            xi,
            epsilon,
            coherence_length,
            table,
        } => match (xi, epsilon, coherence_length, table) {
            (Some(xs), None, None, None) => {
                check_grid("noise.xi", xs)?;
                xs.iter()
                    .map(|&x| {
                        Ok(NoisePoint::Dephasing {
                            epsilon: None,
                            xi: check_xi(x)?,
                        })
                    })
                    .collect()
            }
            (None, Some(eps), Some(len), None) => {
                check_grid("noise.epsilon", eps)?;
                eps.iter()
                    .map(|&e| {
                        let xi = wavepacket_overlap(e, *len).map_err(|err| cfg_err(format!("noise: {err}")))?;
                        Ok(NoisePoint::Dephasing { epsilon: Some(e), xi })
                    })
                    .collect()
            }
            (None, Some(eps), None, Some(t)) => {
                check_grid("noise.epsilon", eps)?;
                eps.iter()
                    .map(|&e| {
                        let xi = check_xi(interpolate(t, e, "noise.table")?)?;
                        Ok(NoisePoint::Dephasing { epsilon: Some(e), xi })
                    })
                    .collect()
            }
            _ => Err(cfg_err(
                "dephasing noise needs exactly one of: xi; epsilon + coherence_length; epsilon + table",
            )),
        },
        NoiseConfig::Rotation {
            phi,
            voltage,
            phase_table,
        } => match (phi, voltage, phase_table) {
            (Some(ps), None, None) => {
                check_grid("noise.phi", ps)?;
                Ok(ps
                    .iter()
                    .map(|&p| NoisePoint::Rotation {
                        voltage: None,
                        phi: p * PI,
                    })
                    .collect())
            }
            (None, Some(vs), Some(t)) => {
                check_grid("noise.voltage", vs)?;
                vs.iter()
                    .map(|&v| {
                        Ok(NoisePoint::Rotation {
                            voltage: Some(v),
                            phi: interpolate(t, v, "noise.phase_table")? * PI,
                        })
                    })
                    .collect()
            }
            _ => Err(cfg_err(
                "rotation noise needs exactly one of: phi; voltage + phase_table",
            )),
        },
    }
}

impl Resolved {
    /// Sweep grid converted to radians where the axis is an angle. Without a
    /// `[sweep]` block: `g ∈ {1/16, …, 7/16}`, no trials.
    pub fn sweep_grid(&self) -> Result<(Axis, Vec<f64>, u64), CliError> {
        let default = SweepConfig {
            axis: Axis::G,
            grid: (1..8).map(|i| i as f64 / 16.0).collect(),
            trials: 0,
        };
        let sweep = self.config.sweep.as_ref().unwrap_or(&default);
        check_grid("sweep", &sweep.grid)?;
        let scale = match sweep.axis {
            Axis::Xi => 1.0,
            _ => PI,
        };
        Ok((sweep.axis, sweep.grid.iter().map(|v| v * scale).collect(), sweep.trials))
    }
}
