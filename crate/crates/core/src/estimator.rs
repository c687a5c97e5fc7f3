//! Entry reconstruction from meter statistics.
//!
//! The real and imaginary parts of `⟨a_j|Π_l|a_k⟩` are linear functionals of
//! the two-meter Pauli expectations `Tr[(Π_l ⊗ σ_μ ⊗ σ_ν) ρ_J]`, which are in
//! turn linear in the nine `W` tables. Variances follow by first-order
//! propagation of Poissonian cell noise `δ²W_mn ≈ W_mn / N`.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pauli, Operator};
use crate::protocol::{
    conditional_meter_operator, CouplingConfig, JointState, MeterBasis, MeterBasisSetting, MeterTables, TableOrigin,
};

/// Single-qubit Pauli label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn matrix(self) -> Operator {
        match self {
            Pauli::I => pauli::identity(),
            Pauli::X => pauli::sigma_x(),
            Pauli::Y => pauli::sigma_y(),
            Pauli::Z => pauli::sigma_z(),
        }
    }

    /// Meter basis that measures this Pauli, `None` for the identity.
    pub fn basis(self) -> Option<MeterBasis> {
        match self {
            Pauli::I => None,
            Pauli::X => Some(MeterBasis::X),
            Pauli::Y => Some(MeterBasis::Y),
            Pauli::Z => Some(MeterBasis::Z),
        }
    }
}

/// How single-meter marginals `(I, ν)` and `(μ, I)` are read from the tables.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalPolicy {
    /// The identity factor of a meter is taken from that meter's Z setting,
    /// so `(I + σ_z)/2` is read as the Z-basis projector `|0⟩⟨0|`. This
    /// reproduces the closed-form variance law for qubit elements.
    #[default]
    ZSetting,
    /// Marginals averaged over the three settings of the traced-out meter.
    Averaged,
}

impl MarginalPolicy {
    fn settings(self, p: Pauli) -> &'static [MeterBasis] {
        match (p.basis(), self) {
            (Some(MeterBasis::Z), _) | (None, MarginalPolicy::ZSetting) => &[MeterBasis::Z],
            (Some(MeterBasis::X), _) => &[MeterBasis::X],
            (Some(MeterBasis::Y), _) => &[MeterBasis::Y],
            (None, MarginalPolicy::Averaged) => &MeterBasis::ALL,
        }
    }
}

/// `Tr[(Π_l ⊗ σ_μ ⊗ σ_ν) ρ_J]` indexed `[μ][ν]` (μ on meter B).
#[derive(Clone, Debug, PartialEq)]
pub struct PauliTable {
    values: [[f64; 4]; 4],
    origin: TableOrigin,
}

impl PauliTable {
    pub fn get(&self, mu: Pauli, nu: Pauli) -> f64 {
        self.values[mu.index()][nu.index()]
    }

    pub fn origin(&self) -> TableOrigin {
        self.origin
    }

    /// The post-selection probability `p_f`.
    pub fn p_f(&self) -> f64 {
        self.get(Pauli::I, Pauli::I)
    }

    /// Direct traces against a joint state, bypassing the `W` tables.
    pub fn from_joint_state(js: &JointState, pi_l: &Operator) -> Result<Self> {
        let m = conditional_meter_operator(js, pi_l)?;
        let mut values = [[0.0; 4]; 4];
        for mu in Pauli::ALL {
            for nu in Pauli::ALL {
                values[mu.index()][nu.index()] = m.trace_product(&mu.matrix().kron(&nu.matrix())).re;
            }
        }
        Ok(Self {
            values,
            origin: TableOrigin::Exact,
        })
    }
}

fn sign(outcome: usize) -> f64 {
    if outcome == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Linear weights taking every `W` cell to one Pauli expectation.
fn pauli_cell_weights(mu: Pauli, nu: Pauli, policy: MarginalPolicy) -> Vec<(MeterBasisSetting, usize, usize, f64)> {
    let (sb, sa) = (policy.settings(mu), policy.settings(nu));
    let norm = 1.0 / (sb.len() * sa.len()) as f64;
    let mut out = Vec::with_capacity(sb.len() * sa.len() * 4);
    for &b in sb {
        for &a in sa {
            for m in 0..2 {
                for n in 0..2 {
                    let fb = if mu == Pauli::I { 1.0 } else { sign(m) };
                    let fa = if nu == Pauli::I { 1.0 } else { sign(n) };
                    out.push((MeterBasisSetting::new(b, a), m, n, fb * fa * norm));
                }
            }
        }
    }
    out
}

/// Assembles the Pauli table from the nine `W` tables under the default policy.
pub fn pauli_table_from_distributions(tables: &MeterTables) -> PauliTable {
    pauli_table_with_policy(tables, MarginalPolicy::default())
}

pub fn pauli_table_with_policy(tables: &MeterTables, policy: MarginalPolicy) -> PauliTable {
    let mut values = [[0.0; 4]; 4];
    for mu in Pauli::ALL {
        for nu in Pauli::ALL {
            values[mu.index()][nu.index()] = pauli_cell_weights(mu, nu, policy)
                .into_iter()
                .map(|(s, m, n, w)| w * tables.get(s)[m][n])
                .sum();
        }
    }
    PauliTable {
        values,
        origin: tables.origin(),
    }
}

/// Pauli expansion of one meter's `P` and `Q`: `P = Σ p_μ σ_μ`, `Q = Σ q_μ σ_μ`.
fn meter_expansion(d: usize, g: f64) -> ([f64; 4], [f64; 4]) {
    let sd = (d as f64).sqrt();
    let (alpha, beta) = (alpha(g), beta(g));
    let mut p = [0.0; 4];
    p[Pauli::I.index()] = sd * alpha;
    p[Pauli::Z.index()] = sd * alpha;
    p[Pauli::X.index()] = -sd * beta;
    let mut q = [0.0; 4];
    q[Pauli::Y.index()] = -sd * beta;
    (p, q)
}

/// `1/(4cos²g)`
pub fn alpha(g: f64) -> f64 {
    let c = g.cos();
    1.0 / (4.0 * c * c)
}

/// `1/(4 sin g cos g)`
pub fn beta(g: f64) -> f64 {
    let (s, c) = g.sin_cos();
    1.0 / (4.0 * s * c)
}

/// Pauli-pair weights of `R = P_B P_A − Q_B Q_A` (real part) and
/// `T = P_B Q_A + Q_B P_A` (imaginary part).
#[derive(Clone, Debug, PartialEq)]
pub struct RtCoefficients {
    d: usize,
    g_b: f64,
    g_a: f64,
    re: [[f64; 4]; 4],
    im: [[f64; 4]; 4],
}

/// Coefficients for a symmetric coupling `g_A = g_B = g`.
pub fn rt_coefficients(d: usize, g: f64) -> Result<RtCoefficients> {
    rt_coefficients_for(d, &CouplingConfig::symmetric(g)?)
}

pub fn rt_coefficients_for(d: usize, cfg: &CouplingConfig) -> Result<RtCoefficients> {
    if d < 2 {
        return Err(Error::Domain(format!("system dimension must be >= 2, got {d}")));
    }
    let (pb, qb) = meter_expansion(d, cfg.g_b());
    let (pa, qa) = meter_expansion(d, cfg.g_a());
    let mut re = [[0.0; 4]; 4];
    let mut im = [[0.0; 4]; 4];
    for mu in 0..4 {
        for nu in 0..4 {
            re[mu][nu] = pb[mu] * pa[nu] - qb[mu] * qa[nu];
            im[mu][nu] = pb[mu] * qa[nu] + qb[mu] * pa[nu];
        }
    }
    Ok(RtCoefficients {
        d,
        g_b: cfg.g_b(),
        g_a: cfg.g_a(),
        re,
        im,
    })
}

impl RtCoefficients {
    pub fn d(&self) -> usize {
        self.d
    }

    /// Coupling angles `(g_B, g_A)`.
    pub fn couplings(&self) -> (f64, f64) {
        (self.g_b, self.g_a)
    }

    pub fn re_weight(&self, mu: Pauli, nu: Pauli) -> f64 {
        self.re[mu.index()][nu.index()]
    }

    pub fn im_weight(&self, mu: Pauli, nu: Pauli) -> f64 {
        self.im[mu.index()][nu.index()]
    }

    /// Non-zero `(μ, ν, weight)` triples of the real part.
    pub fn re_terms(&self) -> Vec<(Pauli, Pauli, f64)> {
        Self::terms(&self.re)
    }

    pub fn im_terms(&self) -> Vec<(Pauli, Pauli, f64)> {
        Self::terms(&self.im)
    }

    fn terms(w: &[[f64; 4]; 4]) -> Vec<(Pauli, Pauli, f64)> {
        let mut out = Vec::new();
        for mu in Pauli::ALL {
            for nu in Pauli::ALL {
                let x = w[mu.index()][nu.index()];
                if x != 0.0 {
                    out.push((mu, nu, x));
                }
            }
        }
        out
    }

    fn assemble(w: &[[f64; 4]; 4]) -> Operator {
        let mut acc = Operator::zeros(4);
        for mu in Pauli::ALL {
            for nu in Pauli::ALL {
                let x = w[mu.index()][nu.index()];
                if x != 0.0 {
                    acc = &acc + &mu.matrix().kron(&nu.matrix()).scale_real(x);
                }
            }
        }
        acc
    }

    /// `Σ weight σ_μ ⊗ σ_ν` for the real part, i.e. `R`.
    pub fn reassemble_r(&self) -> Operator {
        Self::assemble(&self.re)
    }

    pub fn reassemble_t(&self) -> Operator {
        Self::assemble(&self.im)
    }

    /// Per-cell weights `∂Re/∂W` and `∂Im/∂W` for a marginal policy.
    pub fn cell_weights(&self, policy: MarginalPolicy) -> (MeterTables, MeterTables) {
        let mut re = MeterTables::zeros(TableOrigin::Exact);
        let mut im = MeterTables::zeros(TableOrigin::Exact);
        for mu in Pauli::ALL {
            for nu in Pauli::ALL {
                let (wr, wi) = (self.re_weight(mu, nu), self.im_weight(mu, nu));
                if wr == 0.0 && wi == 0.0 {
                    continue;
                }
                for (s, m, n, w) in pauli_cell_weights(mu, nu, policy) {
                    re.get_mut(s)[m][n] += wr * w;
                    im.get_mut(s)[m][n] += wi * w;
                }
            }
        }
        (re, im)
    }
}

/// How an estimate was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateMethod {
    Exact,
    Sampled,
    Refined,
}

/// Estimated entry with real/imaginary variances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntryEstimate {
    pub value: Complex64,
    pub var_re: f64,
    pub var_im: f64,
    pub n_per_setting: Option<u64>,
    pub method: EstimateMethod,
}

impl EntryEstimate {
    pub fn total_variance(&self) -> f64 {
        self.var_re + self.var_im
    }

    /// Rescales the estimated quantity by `1/factor` (variances by `1/factor²`).
    pub fn normalized(&self, factor: f64) -> EntryEstimate {
        EntryEstimate {
            value: self.value / factor,
            var_re: self.var_re / (factor * factor),
            var_im: self.var_im / (factor * factor),
            ..*self
        }
    }
}

fn origin_parts(origin: TableOrigin) -> (EstimateMethod, Option<u64>) {
    match origin {
        TableOrigin::Exact => (EstimateMethod::Exact, None),
        TableOrigin::Sampled { n_per_setting } => (EstimateMethod::Sampled, Some(n_per_setting)),
    }
}

/// `Re = Σ w_Re · table`, `Im = Σ w_Im · table`; variances left at zero.
pub fn estimate_offdiagonal(pt: &PauliTable, coeffs: &RtCoefficients) -> EntryEstimate {
    let mut re = 0.0;
    let mut im = 0.0;
    for mu in Pauli::ALL {
        for nu in Pauli::ALL {
            let v = pt.get(mu, nu);
            re += coeffs.re_weight(mu, nu) * v;
            im += coeffs.im_weight(mu, nu) * v;
        }
    }
    let (method, n_per_setting) = origin_parts(pt.origin());
    EntryEstimate {
        value: Complex64::new(re, im),
        var_re: 0.0,
        var_im: 0.0,
        n_per_setting,
        method,
    }
}

/// Diagonal entry: the probability that `|a_j⟩` triggers outcome `l` with
/// no meter couplings.
pub fn estimate_diagonal(pi_l: &Operator, j: usize) -> Result<f64> {
    let d = pi_l.dim();
    if j >= d {
        return Err(Error::IndexOutOfRange { index: j, dim: d });
    }
    Ok(pi_l.get(j, j).re)
}

/// `(Var Re, Var Im) = Σ_cells (∂E/∂W)² W / n` under the default policy.
pub fn error_transfer_variance(tables: &MeterTables, coeffs: &RtCoefficients, n: u64) -> Result<(f64, f64)> {
    error_transfer_variance_with_policy(tables, coeffs, n, MarginalPolicy::default())
}

pub fn error_transfer_variance_with_policy(
    tables: &MeterTables,
    coeffs: &RtCoefficients,
    n: u64,
    policy: MarginalPolicy,
) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::Domain("particle number must be positive".into()));
    }
    let (wre, wim) = coeffs.cell_weights(policy);
    let mut vre = 0.0;
    let mut vim = 0.0;
    for (s, t) in tables.iter() {
        for m in 0..2 {
            for nn in 0..2 {
                let w = t[m][nn].max(0.0);
                vre += wre.get(s)[m][nn].powi(2) * w;
                vim += wim.get(s)[m][nn].powi(2) * w;
            }
        }
    }
    Ok((vre / n as f64, vim / n as f64))
}

/// Closed-form variance of the off-diagonal entry `E_{1,0}(θ)` of
/// `η [[cos²θ, E_{0,1}], [E_{1,0}, sin²θ]]`:
/// `(sin²θ + sin²g)(1 + 2sin²g) / (η n sin⁴(2g))`.
pub fn analytic_variance(theta: f64, g: f64, eta: f64, n: u64) -> Result<f64> {
    if !(g > 0.0 && g < FRAC_PI_2) {
        return Err(Error::Domain(format!(
            "variance diverges at boundary coupling g = {g}; g must lie in (0, π/2)"
        )));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Domain(format!("eta must lie in (0, 1], got {eta}")));
    }
    if n == 0 {
        return Err(Error::Domain("particle number must be positive".into()));
    }
    // half-angle forms keep sin²(π/4) = ½ exact in floating point
    let sin2_theta = (1.0 - (2.0 * theta).cos()) / 2.0;
    let sin2_g = (1.0 - (2.0 * g).cos()) / 2.0;
    let s2g = (2.0 * g).sin();
    Ok((sin2_theta + sin2_g) * (1.0 + 2.0 * sin2_g) / (eta * n as f64 * s2g.powi(4)))
}

/// Per-shot variance of direct joint-observable measurement:
/// `⟨Δ²R⟩_f + ⟨Δ²T⟩_f` with `⟨Δ²M⟩_f = Tr(Π_l M² ρ_J) − [Tr(Π_l M ρ_J)]²`.
pub fn observable_variance(js: &JointState, pi_l: &Operator, coeffs: &RtCoefficients) -> Result<f64> {
    let m = conditional_meter_operator(js, pi_l)?;
    let spread = |obs: &Operator| {
        let first = m.trace_product(obs).re;
        let second = m.trace_product(&(obs * obs)).re;
        second - first * first
    };
    Ok(spread(&coeffs.reassemble_r()) + spread(&coeffs.reassemble_t()))
}

/// Estimates an entry and its plug-in / predicted variance from `W` tables.
#[derive(Clone, Debug)]
pub struct EntryEstimator {
    coeffs: RtCoefficients,
    cells_re: MeterTables,
    cells_im: MeterTables,
    policy: MarginalPolicy,
}

impl EntryEstimator {
    pub fn new(d: usize, cfg: &CouplingConfig, policy: MarginalPolicy) -> Result<Self> {
        let coeffs = rt_coefficients_for(d, cfg)?;
        let (cells_re, cells_im) = coeffs.cell_weights(policy);
        Ok(Self {
            coeffs,
            cells_re,
            cells_im,
            policy,
        })
    }

    pub fn coefficients(&self) -> &RtCoefficients {
        &self.coeffs
    }

    pub fn policy(&self) -> MarginalPolicy {
        self.policy
    }

    fn linear(&self, tables: &MeterTables, n: Option<u64>) -> (Complex64, f64, f64) {
        let (mut re, mut im, mut vre, mut vim) = (0.0, 0.0, 0.0, 0.0);
        for (s, t) in tables.iter() {
            let (cr, ci) = (self.cells_re.get(s), self.cells_im.get(s));
            for m in 0..2 {
                for nn in 0..2 {
                    let w = t[m][nn];
                    re += cr[m][nn] * w;
                    im += ci[m][nn] * w;
                    vre += cr[m][nn] * cr[m][nn] * w.max(0.0);
                    vim += ci[m][nn] * ci[m][nn] * w.max(0.0);
                }
            }
        }
        match n {
            Some(n) => (Complex64::new(re, im), vre / n as f64, vim / n as f64),
            None => (Complex64::new(re, im), 0.0, 0.0),
        }
    }

    /// Estimate from tables; sampled tables also carry plug-in variances.
    pub fn estimate(&self, tables: &MeterTables) -> EntryEstimate {
        let (method, n) = origin_parts(tables.origin());
        let (value, var_re, var_im) = self.linear(tables, n);
        EntryEstimate {
            value,
            var_re,
            var_im,
            n_per_setting: n,
            method,
        }
    }

    /// Estimate from exact tables with the error-transfer variance at `n` particles per setting.
    pub fn predict(&self, tables: &MeterTables, n: u64) -> Result<EntryEstimate> {
        if n == 0 {
            return Err(Error::Domain("particle number must be positive".into()));
        }
        let (value, var_re, var_im) = self.linear(tables, Some(n));
        Ok(EntryEstimate {
            value,
            var_re,
            var_im,
            n_per_setting: Some(n),
            method: EstimateMethod::Exact,
        })
    }
}

/// Inverse-variance weights `(w, w°)` with `w + w° = 1`.
pub fn inverse_variance_weights(var_direct: f64, var_complement: f64) -> (f64, f64) {
    let total = var_direct + var_complement;
    if total == 0.0 {
        return (0.5, 0.5);
    }
    // both from the ratio: 1 − w cancels badly when the variances differ by many decades
    (var_complement / total, var_direct / total)
}

/// `w · w° · (Δ²_l + Σ_{u≠l} Δ²_u)`
pub fn refined_variance(var_direct: f64, var_complement: f64) -> f64 {
    let (w, wc) = inverse_variance_weights(var_direct, var_complement);
    w * wc * (var_direct + var_complement)
}

/// Combines each outcome's direct estimate with the complement inferred
/// from `Σ_l E^(l)_{jk} = 0` (`j ≠ k`).
pub fn completeness_refine(estimates: &[EntryEstimate]) -> Result<Vec<EntryEstimate>> {
    completeness_refine_with_total(estimates, Complex64::new(0.0, 0.0))
}

/// As [`completeness_refine`] with `Σ_l E^(l) = total` (1 for diagonal entries).
pub fn completeness_refine_with_total(estimates: &[EntryEstimate], total: Complex64) -> Result<Vec<EntryEstimate>> {
    if estimates.len() < 2 {
        return Err(Error::Domain(
            "completeness refinement needs at least two outcomes".into(),
        ));
    }
    if let Some(bad) = estimates.iter().position(|e| {
        !(e.var_re.is_finite() && e.var_im.is_finite() && e.value.re.is_finite() && e.value.im.is_finite())
    }) {
        return Err(Error::Domain(format!(
            "outcome {bad} has a non-finite estimate or variance"
        )));
    }
    let sum: Complex64 = estimates.iter().map(|e| e.value).sum();
    let (sum_vre, sum_vim): (f64, f64) = estimates
        .iter()
        .fold((0.0, 0.0), |(a, b), e| (a + e.var_re, b + e.var_im));
    Ok(estimates
        .iter()
        .map(|e| {
            let complement = total - (sum - e.value);
            let (cvre, cvim) = (sum_vre - e.var_re, sum_vim - e.var_im);
            let (wr, wrc) = inverse_variance_weights(e.var_re, cvre);
            let (wi, wic) = inverse_variance_weights(e.var_im, cvim);
            EntryEstimate {
                value: Complex64::new(
                    wr * e.value.re + wrc * complement.re,
                    wi * e.value.im + wic * complement.im,
                ),
                var_re: wr * wrc * (e.var_re + cvre),
                var_im: wi * wic * (e.var_im + cvim),
                n_per_setting: e.n_per_setting,
                method: EstimateMethod::Refined,
            }
        })
        .collect())
}

/// One exported estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    /// 1-based outcome position.
    pub l: usize,
    pub j: usize,
    pub k: usize,
    pub re: f64,
    pub im: f64,
    pub var_re: f64,
    pub var_im: f64,
    pub method: EstimateMethod,
    pub g: f64,
    #[serde(rename = "N")]
    pub n: Option<u64>,
    pub seed: Option<u64>,
}

impl EntryRecord {
    pub fn new(l: usize, j: usize, k: usize, e: &EntryEstimate, g: f64, seed: Option<u64>) -> Self {
        Self {
            l,
            j,
            k,
            re: e.value.re,
            im: e.value.im,
            var_re: e.var_re,
            var_im: e.var_im,
            method: e.method,
            g,
            n: e.n_per_setting,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Basis;
    use crate::povm::{make_parametric_element, make_sic_povm, matrix_entry_oracle, parametric_povm, random_povm};
    use crate::protocol::{evolve_joint, meter_tables, prepare_entry, rt_observables, system_input};
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, PI};

    fn sic_tables(l: usize, g: f64) -> (MeterTables, JointState) {
        let sic = make_sic_povm();
        let cfg = CouplingConfig::symmetric(g).unwrap();
        let js = prepare_entry(2, 1, 0, &cfg).unwrap();
        (meter_tables(&js, sic.element(l).unwrap()).unwrap(), js)
    }

    #[test]
    fn pauli_table_matches_direct_traces() {
        let p = random_povm(3, 4, 21).unwrap();
        let cfg = CouplingConfig::symmetric(0.6).unwrap();
        let js = prepare_entry(3, 0, 2, &cfg).unwrap();
        for e in p.elements() {
            let tables = meter_tables(&js, e).unwrap();
            let direct = PauliTable::from_joint_state(&js, e).unwrap();
            for policy in [MarginalPolicy::ZSetting, MarginalPolicy::Averaged] {
                let pt = pauli_table_with_policy(&tables, policy);
                for mu in Pauli::ALL {
                    for nu in Pauli::ALL {
                        assert!((pt.get(mu, nu) - direct.get(mu, nu)).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn uncoupled_identity_table() {
        let rho = system_input(2, 0).unwrap();
        // g → 0 limit: meters remain |0⟩|0⟩
        let cfg = CouplingConfig::symmetric(1e-300).unwrap();
        let js = evolve_joint(&rho, &cfg, 0).unwrap();
        let pt = pauli_table_from_distributions(&meter_tables(&js, &Operator::identity(2)).unwrap());
        assert!((pt.get(Pauli::Z, Pauli::Z) - 1.0).abs() < 1e-12);
        assert!((pt.get(Pauli::I, Pauli::I) - 1.0).abs() < 1e-12);
        assert!(pt.get(Pauli::X, Pauli::X).abs() < 1e-12);
        assert!(pt.get(Pauli::Y, Pauli::Y).abs() < 1e-12);
    }

    #[test]
    fn zero_tables_give_zero() {
        let pt = pauli_table_from_distributions(&MeterTables::zeros(TableOrigin::Exact));
        let c = rt_coefficients(2, 0.5).unwrap();
        assert_eq!(estimate_offdiagonal(&pt, &c).value, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn coefficients_at_quarter_pi() {
        let c = rt_coefficients(2, FRAC_PI_4).unwrap();
        assert!((alpha(FRAC_PI_4) - 0.5).abs() < 1e-15 && (beta(FRAC_PI_4) - 0.5).abs() < 1e-15);
        assert!((c.re_weight(Pauli::I, Pauli::I) - 0.5).abs() < 1e-15);
        assert!((c.re_weight(Pauli::X, Pauli::X) - 0.5).abs() < 1e-15);
        assert!((c.re_weight(Pauli::Y, Pauli::Y) + 0.5).abs() < 1e-15);
        let re: Vec<_> = c.re_terms().iter().map(|t| (t.0, t.1)).collect();
        assert_eq!(re.len(), 10);
        assert_eq!(c.im_terms().len(), 6);
        assert!(c.re_weight(Pauli::I, Pauli::Y) == 0.0 && c.im_weight(Pauli::X, Pauli::X) == 0.0);
    }

    #[test]
    fn coefficients_reassemble_r_and_t() {
        for d in [2, 3, 5] {
            for g in [0.2, FRAC_PI_4, 1.3] {
                let cfg = CouplingConfig::symmetric(g).unwrap();
                let c = rt_coefficients_for(d, &cfg).unwrap();
                let (r, t) = rt_observables(d, &cfg);
                assert!(c.reassemble_r().max_abs_diff(&r) < 1e-12 * r.max_abs());
                assert!(c.reassemble_t().max_abs_diff(&t) < 1e-12 * t.max_abs());
            }
        }
        assert!(rt_coefficients(2, 0.0).is_err());
        assert!(rt_coefficients(2, FRAC_PI_2).is_err());
    }

    #[test]
    fn weights_grow_at_weak_coupling() {
        let grid = [PI / 16.0, FRAC_PI_8, 3.0 * PI / 16.0, FRAC_PI_4];
        let xx: Vec<f64> = grid
            .iter()
            .map(|&g| rt_coefficients(2, g).unwrap().re_weight(Pauli::X, Pauli::X))
            .collect();
        assert!(xx.windows(2).all(|w| w[0] > w[1]));
        // β ∝ 1/sin 2g
        assert!((beta(PI / 16.0) * (PI / 8.0).sin() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sic_entry_exact() {
        let (tables, _) = sic_tables(1, FRAC_PI_4);
        let c = rt_coefficients(2, FRAC_PI_4).unwrap();
        let e = estimate_offdiagonal(&pauli_table_from_distributions(&tables), &c);
        assert!((e.value - Complex64::new(2f64.sqrt() / 6.0, 0.0)).norm() < 1e-10);
        assert_eq!(e.method, EstimateMethod::Exact);
    }

    #[test]
    fn pauli_route_and_cell_route_agree() {
        let p = random_povm(4, 5, 3).unwrap();
        let cfg = CouplingConfig::symmetric(0.9).unwrap();
        let js = prepare_entry(4, 3, 1, &cfg).unwrap();
        for policy in [MarginalPolicy::ZSetting, MarginalPolicy::Averaged] {
            let est = EntryEstimator::new(4, &cfg, policy).unwrap();
            for (l, e) in p.elements().iter().enumerate() {
                let t = meter_tables(&js, e).unwrap();
                let a = estimate_offdiagonal(&pauli_table_with_policy(&t, policy), est.coefficients()).value;
                let b = est.estimate(&t).value;
                let truth = matrix_entry_oracle(&p, l, 3, 1, &Basis::computational(4)).unwrap();
                assert!((a - b).norm() < 1e-12);
                assert!((a - truth).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn diagonal_entries() {
        let sic = make_sic_povm();
        assert_eq!(estimate_diagonal(sic.element(0).unwrap(), 0).unwrap(), 0.5);
        assert_eq!(estimate_diagonal(&Operator::identity(3), 2).unwrap(), 1.0);
        let p = random_povm(3, 3, 2).unwrap();
        for (l, e) in p.elements().iter().enumerate() {
            let truth = matrix_entry_oracle(&p, l, 1, 1, &Basis::computational(3)).unwrap();
            assert!((estimate_diagonal(e, 1).unwrap() - truth.re).abs() < 1e-12);
        }
        assert!(estimate_diagonal(&Operator::identity(2), 2).is_err());
    }

    #[test]
    fn transfer_variance_matches_closed_form() {
        let n = 12790;
        for &(theta, g) in &[
            (0.0f64, FRAC_PI_4),
            ((1.0 / 3f64.sqrt()).acos(), FRAC_PI_4),
            (0.4, 0.3),
            (1.2, 1.1),
        ] {
            let eta = 0.5;
            let e01 = Complex64::from_polar(0.3 * (theta.sin() * theta.cos()).abs(), 0.7);
            let povm = parametric_povm(theta, eta, e01).unwrap();
            let js = prepare_entry(2, 1, 0, &CouplingConfig::symmetric(g).unwrap()).unwrap();
            let tables = meter_tables(&js, povm.element(0).unwrap()).unwrap();
            let (vr, vi) = error_transfer_variance(&tables, &rt_coefficients(2, g).unwrap(), n).unwrap();
            let bracketed = (vr + vi) / (eta * eta);
            let closed = analytic_variance(theta, g, eta, n).unwrap();
            assert!(
                (bracketed / closed - 1.0).abs() < 1e-9,
                "θ={theta} g={g}: {bracketed} vs {closed}"
            );
        }
    }

    #[test]
    fn transfer_variance_scaling_and_positivity() {
        let (tables, _) = sic_tables(2, 0.5);
        let c = rt_coefficients(2, 0.5).unwrap();
        let (a, b) = error_transfer_variance(&tables, &c, 1000).unwrap();
        let (a2, b2) = error_transfer_variance(&tables, &c, 2000).unwrap();
        assert!((a / a2 - 2.0).abs() < 1e-12 && (b / b2 - 2.0).abs() < 1e-12);
        assert!(a > 0.0 && b > 0.0);
        assert!(error_transfer_variance(&tables, &c, 0).is_err());
    }

    #[test]
    fn analytic_variance_values() {
        let n = 12790;
        let x = analytic_variance(0.0, FRAC_PI_4, 0.5, n).unwrap();
        assert!((x * 6395.0 - 1.0).abs() < 1e-15);
        let y = analytic_variance((1.0 / 3f64.sqrt()).acos(), FRAC_PI_4, 0.5, n).unwrap();
        assert!((y * 6395.0 / (7.0 / 3.0) - 1.0).abs() < 1e-15);
        for theta in [0.1, 0.7, 2.0] {
            let v = analytic_variance(theta, FRAC_PI_4, 0.3, 100).unwrap();
            let want = (1.0 + 2.0 * theta.sin().powi(2)) / (0.3 * 100.0);
            assert!((v / want - 1.0).abs() < 1e-13);
        }
        assert!(analytic_variance(0.3, 0.0, 0.5, n).is_err());
        assert!(analytic_variance(0.3, FRAC_PI_2, 0.5, n).is_err());
    }

    #[test]
    fn transfer_variance_ignores_offdiagonal_value() {
        let (theta, g, eta, n): (f64, f64, f64, u64) = (0.8, 0.6, 0.7, 5000);
        let js = prepare_entry(2, 1, 0, &CouplingConfig::symmetric(g).unwrap()).unwrap();
        let c = rt_coefficients(2, g).unwrap();
        let bound = theta.sin() * theta.cos();
        let vars: Vec<f64> = [0.0, 0.5, -1.0, 0.9]
            .iter()
            .map(|&f| {
                let e = make_parametric_element(theta, eta, Complex64::from_polar(f * bound, 1.1 * f)).unwrap();
                let (a, b) = error_transfer_variance(&meter_tables(&js, &e).unwrap(), &c, n).unwrap();
                a + b
            })
            .collect();
        for v in &vars {
            assert!((v - vars[0]).abs() < 1e-12 * vars[0]);
        }
    }

    #[test]
    fn observable_variance_properties() {
        let cfg = CouplingConfig::symmetric(FRAC_PI_4).unwrap();
        let c = rt_coefficients_for(2, &cfg).unwrap();
        let js = prepare_entry(2, 1, 0, &cfg).unwrap();
        assert_eq!(observable_variance(&js, &Operator::zeros(2), &c).unwrap(), 0.0);
        let sic = make_sic_povm();
        for e in sic.elements() {
            assert!(observable_variance(&js, e, &c).unwrap() >= -1e-12);
        }
        // direct evaluation on the full joint space: Tr(Π⊗M² ρ_J) − Tr(Π⊗M ρ_J)²
        let pi2 = sic.element(1).unwrap();
        let (r, t) = rt_observables(2, &cfg);
        let direct = |m: &Operator| {
            let big = pi2.kron(m);
            let first = big.trace_product(js.rho()).re;
            pi2.kron(&(m * m)).trace_product(js.rho()).re - first * first
        };
        let v = observable_variance(&js, pi2, &c).unwrap();
        assert!((v - (direct(&r) + direct(&t))).abs() < 1e-12);
        // regression constant for SIC element 2, (V,H), g = π/4
        assert!((v - SIC2_OBSERVABLE_VARIANCE).abs() < 1e-12, "{v}");
    }

    const SIC2_OBSERVABLE_VARIANCE: f64 = 17.0 / 18.0;

    #[test]
    fn refined_variance_never_exceeds_either_input() {
        for (a, b) in [
            (5.102095561882243e-6, 6.251914198930924e5),
            (1.0, 1.0),
            (3e-9, 2e-3),
            (0.0, 4.0),
        ] {
            let r = refined_variance(a, b);
            assert!(r <= a.min(b) && r == refined_variance(b, a), "{a} {b} {r}");
        }
    }

    #[test]
    fn refine_two_equal_outcomes() {
        let e = |re: f64| EntryEstimate {
            value: Complex64::new(re, -re),
            var_re: 0.2,
            var_im: 0.4,
            n_per_setting: Some(10),
            method: EstimateMethod::Sampled,
        };
        let out = completeness_refine(&[e(0.3), e(-0.1)]).unwrap();
        assert!((out[0].var_re - 0.1).abs() < 1e-15 && (out[0].var_im - 0.2).abs() < 1e-15);
        // equal weights: ½(0.3) + ½(0.1)
        assert!((out[0].value.re - 0.2).abs() < 1e-15);
        assert!((out[0].value.re + out[1].value.re).abs() < 1e-15);
        assert_eq!(out[0].method, EstimateMethod::Refined);
    }

    #[test]
    fn refine_rejects_bad_input() {
        let good = EntryEstimate {
            value: Complex64::new(0.1, 0.0),
            var_re: 0.1,
            var_im: 0.1,
            n_per_setting: None,
            method: EstimateMethod::Exact,
        };
        let bad = EntryEstimate {
            var_re: f64::INFINITY,
            ..good
        };
        assert!(completeness_refine(&[good, bad]).is_err());
        assert!(completeness_refine(&[good]).is_err());
    }

    #[test]
    fn refine_never_worse() {
        let vars = [[0.3, 0.1, 0.5], [1e-3, 2.0, 0.7], [0.0, 0.2, 0.2]];
        for v in vars {
            let est: Vec<_> = v
                .iter()
                .map(|&x| EntryEstimate {
                    value: Complex64::new(0.0, 0.0),
                    var_re: x,
                    var_im: x * 2.0,
                    n_per_setting: None,
                    method: EstimateMethod::Exact,
                })
                .collect();
            let out = completeness_refine(&est).unwrap();
            let total: f64 = v.iter().sum();
            for (e, r) in est.iter().zip(&out) {
                let comp = total - e.var_re;
                assert!(r.var_re <= e.var_re.min(comp) + 1e-15);
                assert!((r.var_re - refined_variance(e.var_re, comp)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn diagonal_refinement_sums_to_one() {
        let p = random_povm(2, 3, 5).unwrap();
        let est: Vec<_> = p
            .elements()
            .iter()
            .map(|e| EntryEstimate {
                value: Complex64::new(e.get(0, 0).re + 0.01, 0.0),
                var_re: 0.01,
                var_im: 0.0,
                n_per_setting: None,
                method: EstimateMethod::Sampled,
            })
            .collect();
        let out = completeness_refine_with_total(&est, Complex64::new(1.0, 0.0)).unwrap();
        let s: f64 = out.iter().map(|e| e.value.re).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn record_serializes_schema() {
        let e = EntryEstimate {
            value: Complex64::new(0.1, -0.2),
            var_re: 1e-4,
            var_im: 2e-4,
            n_per_setting: Some(12790),
            method: EstimateMethod::Sampled,
        };
        let v = serde_json::to_value(EntryRecord::new(2, 1, 0, &e, FRAC_PI_4, Some(7))).unwrap();
        for key in [
            "l", "j", "k", "re", "im", "var_re", "var_im", "method", "g", "N", "seed",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["method"], "sampled");
    }
}
