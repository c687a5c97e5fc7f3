//! Coherent-evolution scenarios applied to a POVM (dephasing, phase
//! rotation, environment coupling) and the calibration procedures that
//! measure their parameters.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Operator, DEFAULT_TOL};
use crate::povm::Povm;

/// Margin by which `2(P_H − P_V)` may leave `[−1, 1]` before it is an error.
pub const ARCCOS_CLAMP: f64 = 1e-9;

/// Dephasing given directly as an overlap, or as a delay under the Gaussian
/// coherence model of [`wavepacket_overlap`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum DephasingParams {
    Overlap { xi: f64 },
    Delay { epsilon: f64, coherence_length: f64 },
}

impl DephasingParams {
    pub fn xi(&self) -> Result<f64> {
        match *self {
            DephasingParams::Overlap { xi } => check_xi(xi).map(|_| xi),
            DephasingParams::Delay {
                epsilon,
                coherence_length,
            } => wavepacket_overlap(epsilon, coherence_length),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationParams {
    pub phi_lc: f64,
}

impl RotationParams {
    /// `φ_lc` reduced to `(−π, π]`.
    pub fn reduced(&self) -> f64 {
        reduce_angle(self.phi_lc)
    }
}

/// Maps an angle into `(−π, π]`.
pub fn reduce_angle(phi: f64) -> f64 {
    let r = phi.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

fn check_xi(xi: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::Domain(format!("xi must lie in [0, 1], got {xi}")));
    }
    Ok(())
}

fn check_pair(d: usize, j: usize, k: usize) -> Result<()> {
    for idx in [j, k] {
        if idx >= d {
            return Err(Error::IndexOutOfRange { index: idx, dim: d });
        }
    }
    if j == k {
        return Err(Error::Domain(format!(
            "(j, k) = ({j}, {k}) is not an off-diagonal slot"
        )));
    }
    Ok(())
}

/// Multiplies entry `(j, k)` of every element by `factor` and `(k, j)` by its
/// conjugate. The result is re-validated: for `d > 2` an entrywise change can
/// break positivity, which is reported as [`Error::InvalidPovm`].
pub fn apply_coherence_factor(p: &Povm, factor: Complex64, j: usize, k: usize) -> Result<Povm> {
    check_pair(p.dim(), j, k)?;
    let elements = p
        .elements()
        .iter()
        .map(|e| {
            let mut out = e.clone();
            out.set(j, k, e.get(j, k) * factor);
            out.set(k, j, e.get(k, j) * factor.conj());
            out
        })
        .collect();
    Povm::with_labels(elements, p.labels().to_vec(), DEFAULT_TOL)
}

/// `E_jk → ξ E_jk` on every element.
pub fn apply_dephasing(p: &Povm, xi: f64, j: usize, k: usize) -> Result<Povm> {
    check_xi(xi)?;
    apply_coherence_factor(p, Complex64::new(xi, 0.0), j, k)
}

/// `E_jk → e^{−iφ} E_jk` on every element.
pub fn apply_phase_rotation(p: &Povm, phi: f64, j: usize, k: usize) -> Result<Povm> {
    apply_coherence_factor(p, Complex64::from_polar(1.0, -phi), j, k)
}

/// `Ĉ = |a_j⟩⟨a_j| − |a_k⟩⟨a_k|` in the computational basis.
pub fn coherence_observable(d: usize, j: usize, k: usize) -> Result<Operator> {
    check_pair(d, j, k)?;
    let mut diag = vec![0.0; d];
    diag[j] = 1.0;
    diag[k] = -1.0;
    Ok(Operator::from_real_diagonal(&diag))
}

/// State-side rotation `U_lc = exp(i(φ/2)Ĉ)`; `U_lc† Π U_lc` applies
/// `e^{−iφ}` to the `(j, k)` entry.
pub fn rotation_unitary(d: usize, phi: f64, j: usize, k: usize) -> Result<Operator> {
    coherence_observable(d, j, k)?.exp_hermitian(-phi / 2.0)
}

/// Environment coupled through `H_SE = (ε/2) δ(t − t₀) Ĉ ⊗ Ω̂`.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    rho_e: Operator,
    omega: Operator,
    epsilon: f64,
}

impl Environment {
    pub fn new(rho_e: Operator, omega: Operator, epsilon: f64) -> Result<Self> {
        if !rho_e.is_density(DEFAULT_TOL) {
            return Err(Error::Domain("environment state is not a density operator".into()));
        }
        if !omega.is_hermitian(DEFAULT_TOL) {
            return Err(Error::Domain("environment observable is not Hermitian".into()));
        }
        if omega.dim() != rho_e.dim() {
            return Err(Error::DimensionMismatch {
                expected: rho_e.dim(),
                actual: omega.dim(),
            });
        }
        if !epsilon.is_finite() {
            return Err(Error::Domain(format!("coupling must be finite, got {epsilon}")));
        }
        Ok(Self { rho_e, omega, epsilon })
    }

    pub fn rho_e(&self) -> &Operator {
        &self.rho_e
    }

    pub fn omega(&self) -> &Operator {
        &self.omega
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Factor acquired by the `(j, k)` slot: `ξ = Tr[ρ_E e^{iεΩ̂}]`.
    ///
    /// Follows from the reduced dynamics; real whenever the distribution of
    /// `Ω̂` in `ρ_E` is symmetric about zero.
    pub fn coherence_factor(&self) -> Result<Complex64> {
        let u = self.omega.exp_hermitian(-self.epsilon)?;
        Ok(u.trace_product(&self.rho_e))
    }
}

/// `Π^D = Tr_E[U_SE† (Π ⊗ ρ_E) U_SE]` with `U_SE = exp(−i(ε/2) Ĉ ⊗ Ω̂)`.
///
/// For `d > 2` the entries `(j, m)` and `(k, m)` with `m ∉ {j, k}` are also
/// affected (by a half-angle factor); only the `(j, k)` slot matches
/// [`apply_dephasing`] in general.
pub fn dephase_via_environment(pi_l: &Operator, env: &Environment, c_obs: &Operator) -> Result<Operator> {
    if c_obs.dim() != pi_l.dim() {
        return Err(Error::DimensionMismatch {
            expected: pi_l.dim(),
            actual: c_obs.dim(),
        });
    }
    if !c_obs.is_hermitian(DEFAULT_TOL) {
        return Err(Error::Domain("system observable is not Hermitian".into()));
    }
    let h = c_obs.kron(&env.omega);
    let u = h.exp_hermitian(env.epsilon / 2.0)?;
    let joint = pi_l.kron(&env.rho_e);
    let evolved = &(&u.adjoint() * &joint) * &u;
    evolved.partial_trace(pi_l.dim(), env.rho_e.dim(), true)
}

/// Gaussian wave-packet overlap `exp(−ε²/(2 ℓ²))`, with `ε` and the
/// coherence length `ℓ` in wavelengths.
pub fn wavepacket_overlap(epsilon: f64, coherence_length: f64) -> Result<f64> {
    if !(coherence_length > 0.0 && coherence_length.is_finite()) {
        return Err(Error::Domain(format!(
            "coherence length must be positive, got {coherence_length}"
        )));
    }
    if !epsilon.is_finite() {
        return Err(Error::Domain(format!("delay must be finite, got {epsilon}")));
    }
    Ok((-epsilon * epsilon / (2.0 * coherence_length * coherence_length)).exp())
}

/// Populations `(P_H, P_V)` of `ρ^D = ((1+ξ)/2)|H⟩⟨H| + ((1−ξ)/2)|V⟩⟨V|`.
pub fn calibration_probabilities(xi: f64) -> Result<(f64, f64)> {
    check_xi(xi)?;
    Ok(((1.0 + xi) / 2.0, (1.0 - xi) / 2.0))
}

/// `ξ = P_H − P_V` from the exact populations.
pub fn calibrate_xi_exact(xi_true: f64) -> Result<f64> {
    let (ph, pv) = calibration_probabilities(xi_true)?;
    Ok(ph - pv)
}

/// Projects `n` photons of `ρ^D` onto `{|H⟩, |V⟩}` and returns `P̂_H − P̂_V`.
pub fn calibrate_xi(xi_true: f64, n: u64, seed: u64) -> Result<f64> {
    let (ph, _) = calibration_probabilities(xi_true)?;
    let (h, v) = sample_populations(ph, n, seed)?;
    Ok(h - v)
}

/// Observed frequencies `(P̂_H, P̂_V)` from `n` photons with `P(H) = p_h`.
pub fn sample_populations(p_h: f64, n: u64, seed: u64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::Domain("calibration needs at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_h = Binomial::new(n, p_h)
        .map_err(|e| Error::Calibration(e.to_string()))?
        .sample(&mut rng);
    let f = n_h as f64 / n as f64;
    Ok((f, 1.0 - f))
}

/// Populations `(P_H, P_V)` that [`calibrate_phase`] maps back to `|φ|`,
/// i.e. `P_H − P_V = cos φ / 2`.
pub fn phase_calibration_probabilities(phi: f64) -> (f64, f64) {
    let diff = phi.cos() / 2.0;
    ((1.0 + diff) / 2.0, (1.0 - diff) / 2.0)
}

/// `φ_lc = arccos[2(P_H − P_V)] ∈ [0, π]`.
pub fn calibrate_phase(p_h: f64, p_v: f64) -> Result<f64> {
    let x = 2.0 * (p_h - p_v);
    if !x.is_finite() || x.abs() > 1.0 + ARCCOS_CLAMP {
        return Err(Error::Calibration(format!("2(P_H − P_V) = {x} lies outside [−1, 1]")));
    }
    Ok(x.clamp(-1.0, 1.0).acos())
}

/// Monotone voltage → phase table with linear interpolation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseLookup {
    points: Vec<(f64, f64)>,
}

impl PhaseLookup {
    /// `points` are `(voltage, φ)` pairs; voltages strictly increasing and
    /// phases strictly monotone.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Calibration("a phase table needs at least two points".into()));
        }
        let inc = points[1].1 > points[0].1;
        for w in points.windows(2) {
            let (a, b) = (w[0], w[1]);
            if !(b.0 > a.0) {
                return Err(Error::Calibration(format!(
                    "voltages must be strictly increasing ({} then {})",
                    a.0, b.0
                )));
            }
            if (b.1 > a.1) != inc || b.1 == a.1 {
                return Err(Error::Calibration("phases must be strictly monotone in voltage".into()));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    fn interpolate(pairs: impl Iterator<Item = (f64, f64)> + Clone, x: f64, what: &str) -> Result<f64> {
        let v: Vec<(f64, f64)> = pairs.collect();
        let (lo, hi) = (v[0].0.min(v[v.len() - 1].0), v[0].0.max(v[v.len() - 1].0));
        if !(x >= lo && x <= hi) {
            return Err(Error::Calibration(format!(
                "{what} {x} outside table range [{lo}, {hi}]"
            )));
        }
        for w in v.windows(2) {
            let (a, b) = (w[0], w[1]);
            if (x - a.0) * (x - b.0) <= 0.0 {
                let t = (x - a.0) / (b.0 - a.0);
                return Ok(a.1 + t * (b.1 - a.1));
            }
        }
        unreachable!("x lies within the table range")
    }

    pub fn phase_at(&self, voltage: f64) -> Result<f64> {
        Self::interpolate(self.points.iter().copied(), voltage, "voltage")
    }

    pub fn voltage_for(&self, phi: f64) -> Result<f64> {
        Self::interpolate(self.points.iter().map(|&(v, p)| (p, v)), phi, "phase")
    }
}
