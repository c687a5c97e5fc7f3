//! Sequential two-meter coupling, post-selection and exact meter statistics.
//!
//! The system is prepared in `|a_j⟩`, coupled to meter B through
//! `O_B = I − 2|b_0⟩⟨b_0|` and then to meter A through
//! `O_A^(k) = I − 2|a_k⟩⟨a_k|`. Both meters start in `|0⟩`. The detector
//! under test then post-selects the system on outcome `l`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{basis_ket, pauli, tensor_all, Ket, Operator, DEFAULT_TOL, I, ONE};

/// Post-selection probabilities at or below this are treated as dead channels.
pub const P_FLOOR: f64 = 1e-14;

/// Coupling angles of the two meters, each strictly inside `(0, π/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingConfig {
    g_b: f64,
    g_a: f64,
}

impl CouplingConfig {
    pub fn new(g_b: f64, g_a: f64) -> Result<Self> {
        for (name, g) in [("g_b", g_b), ("g_a", g_a)] {
            if !(g.is_finite() && g > 0.0 && g < FRAC_PI_2) {
                return Err(Error::Coupling(format!(
                    "{name} = {g} must lie strictly inside (0, π/2)"
                )));
            }
        }
        Ok(Self { g_b, g_a })
    }

    pub fn symmetric(g: f64) -> Result<Self> {
        Self::new(g, g)
    }

    pub fn g_b(&self) -> f64 {
        self.g_b
    }

    pub fn g_a(&self) -> f64 {
        self.g_a
    }

    pub fn is_symmetric(&self) -> bool {
        self.g_b == self.g_a
    }
}

/// Which meter a coupling acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Meter {
    B,
    A,
}

/// Density operator on `system ⊗ meter B ⊗ meter A` after both couplings.
#[derive(Clone, Debug, PartialEq)]
pub struct JointState {
    rho: Operator,
    system_dim: usize,
}

impl JointState {
    pub fn rho(&self) -> &Operator {
        &self.rho
    }

    pub fn system_dim(&self) -> usize {
        self.system_dim
    }
}

/// One of the three mutually unbiased qubit bases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MeterBasis {
    Z,
    X,
    Y,
}

impl MeterBasis {
    pub const ALL: [MeterBasis; 3] = [MeterBasis::Z, MeterBasis::X, MeterBasis::Y];

    /// Outcome kets; index 0 is the `+1` eigenstate of the matching Pauli.
    ///
    /// Z: `|0⟩, |1⟩`; X: `|±⟩ = (|0⟩ ± |1⟩)/√2`;
    /// Y: `|↻⟩, |↺⟩ = (|0⟩ ± i|1⟩)/√2`.
    pub fn kets(self) -> [Ket; 2] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let k = |a: Complex64, b: Complex64| Ket::from_vec(vec![a * s, b * s]);
        match self {
            MeterBasis::Z => [basis_ket(2, 0), basis_ket(2, 1)],
            MeterBasis::X => [k(ONE, ONE), k(ONE, -ONE)],
            MeterBasis::Y => [k(ONE, I), k(ONE, -I)],
        }
    }

    pub fn index(self) -> usize {
        match self {
            MeterBasis::Z => 0,
            MeterBasis::X => 1,
            MeterBasis::Y => 2,
        }
    }
}

impl fmt::Display for MeterBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MeterBasis::Z => "Z",
            MeterBasis::X => "X",
            MeterBasis::Y => "Y",
        };
        f.write_str(s)
    }
}

/// Measurement bases of meters B and A for one collective measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MeterBasisSetting {
    pub basis_b: MeterBasis,
    pub basis_a: MeterBasis,
}

impl MeterBasisSetting {
    pub fn new(basis_b: MeterBasis, basis_a: MeterBasis) -> Self {
        Self { basis_b, basis_a }
    }

    /// All nine settings, B-major.
    pub fn all() -> [MeterBasisSetting; 9] {
        let mut out = [MeterBasisSetting::new(MeterBasis::Z, MeterBasis::Z); 9];
        for b in MeterBasis::ALL {
            for a in MeterBasis::ALL {
                out[b.index() * 3 + a.index()] = MeterBasisSetting::new(b, a);
            }
        }
        out
    }

    pub fn index(self) -> usize {
        self.basis_b.index() * 3 + self.basis_a.index()
    }
}

impl fmt::Display for MeterBasisSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.basis_b, self.basis_a)
    }
}

/// Joint probabilities `W_mn` for one setting, indexed `[m][n]`
/// (`m` for meter B, `n` for meter A).
pub type MeterTable = [[f64; 2]; 2];

/// Where a set of meter tables came from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TableOrigin {
    Exact,
    Sampled { n_per_setting: u64 },
}

/// The nine `W` tables of one post-selection channel.
#[derive(Clone, Debug, PartialEq)]
pub struct MeterTables {
    tables: [MeterTable; 9],
    origin: TableOrigin,
}

impl MeterTables {
    pub fn new(tables: [MeterTable; 9], origin: TableOrigin) -> Self {
        Self { tables, origin }
    }

    /// Assembles tables from `(setting, table)` pairs; every setting must be present.
    pub fn from_settings(
        entries: impl IntoIterator<Item = (MeterBasisSetting, MeterTable)>,
        origin: TableOrigin,
    ) -> Result<Self> {
        let mut slots: [Option<MeterTable>; 9] = [None; 9];
        for (s, t) in entries {
            slots[s.index()] = Some(t);
        }
        let mut tables = [[[0.0; 2]; 2]; 9];
        for s in MeterBasisSetting::all() {
            tables[s.index()] = slots[s.index()].ok_or_else(|| Error::MissingSetting(s.to_string()))?;
        }
        Ok(Self { tables, origin })
    }

    pub fn zeros(origin: TableOrigin) -> Self {
        Self::new([[[0.0; 2]; 2]; 9], origin)
    }

    pub fn get(&self, setting: MeterBasisSetting) -> &MeterTable {
        &self.tables[setting.index()]
    }

    pub fn get_mut(&mut self, setting: MeterBasisSetting) -> &mut MeterTable {
        &mut self.tables[setting.index()]
    }

    pub fn origin(&self) -> TableOrigin {
        self.origin
    }

    pub fn iter(&self) -> impl Iterator<Item = (MeterBasisSetting, &MeterTable)> {
        MeterBasisSetting::all()
            .into_iter()
            .map(move |s| (s, &self.tables[s.index()]))
    }

    /// `Σ_mn W_mn` of one setting.
    pub fn total(&self, setting: MeterBasisSetting) -> f64 {
        self.get(setting).iter().flatten().sum()
    }
}

/// `|b_0⟩ = d^{-1/2} Σ_j |a_j⟩`
pub fn pointer_state_b0(d: usize) -> Ket {
    let amp = Complex64::new(1.0 / (d as f64).sqrt(), 0.0);
    Ket::from_element(d, amp)
}

/// `(O_B, O_A^(k))`.
pub fn build_observables(d: usize, k: usize) -> Result<(Operator, Operator)> {
    if d < 2 {
        return Err(Error::Domain(format!("system dimension must be >= 2, got {d}")));
    }
    if k >= d {
        return Err(Error::IndexOutOfRange { index: k, dim: d });
    }
    let id = Operator::identity(d);
    let o_b = &id - &Operator::projector(&pointer_state_b0(d)).scale_real(2.0);
    let o_a = &id - &Operator::projector(&basis_ket(d, k)).scale_real(2.0);
    Ok((o_b, o_a))
}

/// `exp(−i g O ⊗ σ_y)` on the chosen meter, expanded as
/// `cos g I − i sin g O ⊗ σ_y` (valid because `O² = I`), embedded in the
/// full `system ⊗ B ⊗ A` space.
pub fn coupling_unitary(o: &Operator, g: f64, which: Meter, d: usize) -> Result<Operator> {
    if o.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: o.dim(),
        });
    }
    let sq = o * o;
    if sq.max_abs_diff(&Operator::identity(d)) > 1e-10 {
        return Err(Error::Domain("coupling observable must satisfy O² = I".into()));
    }
    let (sy, id2) = (pauli::sigma_y(), Operator::identity(2));
    let generator = match which {
        Meter::B => tensor_all(&[o, &sy, &id2]),
        Meter::A => tensor_all(&[o, &id2, &sy]),
    };
    let full_id = Operator::identity(4 * d);
    Ok(&full_id.scale_real(g.cos()) - &generator.scale(I * g.sin()))
}

/// `|0⟩⟨0| ⊗ |0⟩⟨0|` on the two meters.
fn meters_ready() -> Operator {
    let z = Operator::projector(&basis_ket(2, 0));
    z.kron(&z)
}

/// `ρ_J = U_A^(k) U_B (ρ_s ⊗ |0⟩⟨0| ⊗ |0⟩⟨0|) U_B† U_A^(k)†`.
pub fn evolve_joint(rho_s: &Operator, cfg: &CouplingConfig, k: usize) -> Result<JointState> {
    let d = rho_s.dim();
    if !rho_s.is_density(DEFAULT_TOL) {
        return Err(Error::Domain("system input is not a valid density operator".into()));
    }
    let (o_b, o_a) = build_observables(d, k)?;
    let u_b = coupling_unitary(&o_b, cfg.g_b, Meter::B, d)?;
    let u_a = coupling_unitary(&o_a, cfg.g_a, Meter::A, d)?;
    let u = &u_a * &u_b;
    let rho_sm = rho_s.kron(&meters_ready());
    Ok(JointState {
        rho: rho_sm.conjugate_by(&u),
        system_dim: d,
    })
}

/// Pre-selected input `|a_j⟩⟨a_j|`.
pub fn system_input(d: usize, j: usize) -> Result<Operator> {
    if j >= d {
        return Err(Error::IndexOutOfRange { index: j, dim: d });
    }
    Ok(Operator::projector(&basis_ket(d, j)))
}

/// Joint state for characterizing entry `(j, k)`: input `|a_j⟩`, observable `O_A^(k)`.
pub fn prepare_entry(d: usize, j: usize, k: usize, cfg: &CouplingConfig) -> Result<JointState> {
    if k >= d {
        return Err(Error::IndexOutOfRange { index: k, dim: d });
    }
    evolve_joint(&system_input(d, j)?, cfg, k)
}

fn check_element(js: &JointState, pi_l: &Operator) -> Result<()> {
    if pi_l.dim() != js.system_dim {
        return Err(Error::DimensionMismatch {
            expected: js.system_dim,
            actual: pi_l.dim(),
        });
    }
    Ok(())
}

/// Unnormalized meter operator `Tr_s[(Π_l ⊗ I ⊗ I) ρ_J]`.
pub fn conditional_meter_operator(js: &JointState, pi_l: &Operator) -> Result<Operator> {
    check_element(js, pi_l)?;
    // M_ab = Σ_{s,t} Π_ts ρ_{(s,a),(t,b)}, without forming Π ⊗ I
    let d = js.system_dim;
    let rho = js.rho.matrix();
    Ok(Operator::from_fn(4, |a, b| {
        let mut acc = Complex64::new(0.0, 0.0);
        for s in 0..d {
            for t in 0..d {
                acc += pi_l.get(t, s) * rho[(4 * s + a, 4 * t + b)];
            }
        }
        acc
    }))
}

/// Normalized surviving meter state and the outcome probability `p_f`.
pub fn postselect_meters(js: &JointState, pi_l: &Operator) -> Result<(Operator, f64)> {
    postselect_meters_with_floor(js, pi_l, P_FLOOR)
}

pub fn postselect_meters_with_floor(js: &JointState, pi_l: &Operator, floor: f64) -> Result<(Operator, f64)> {
    let m = conditional_meter_operator(js, pi_l)?;
    let p_f = m.trace().re;
    if p_f <= floor {
        return Err(Error::DeadPostSelection { p_f, floor });
    }
    Ok((m.scale_real(1.0 / p_f), p_f))
}

fn table_from_meter_operator(m: &Operator, setting: MeterBasisSetting) -> MeterTable {
    let kb = setting.basis_b.kets();
    let ka = setting.basis_a.kets();
    let mut t = [[0.0; 2]; 2];
    for (mi, b) in kb.iter().enumerate() {
        for (ni, a) in ka.iter().enumerate() {
            let ket = b.kronecker(a);
            t[mi][ni] = m.sandwich(&ket, &ket).re;
        }
    }
    t
}

/// `W_mn = Tr[(Π_l ⊗ |m_B⟩⟨m_B| ⊗ |n_A⟩⟨n_A|) ρ_J]`, unnormalized.
pub fn meter_distribution(js: &JointState, pi_l: &Operator, setting: MeterBasisSetting) -> Result<MeterTable> {
    let m = conditional_meter_operator(js, pi_l)?;
    Ok(table_from_meter_operator(&m, setting))
}

/// Exact `W` tables for all nine settings.
pub fn meter_tables(js: &JointState, pi_l: &Operator) -> Result<MeterTables> {
    let m = conditional_meter_operator(js, pi_l)?;
    Ok(MeterTables::from_settings(
        MeterBasisSetting::all()
            .into_iter()
            .map(|s| (s, table_from_meter_operator(&m, s))),
        TableOrigin::Exact,
    )
    .expect("all settings present"))
}

/// `P = √d ((I + σ_z)/(4cos²g) − σ_x/(4 sin g cos g))`
pub fn p_operator(d: usize, g: f64) -> Operator {
    let sd = (d as f64).sqrt();
    let (s, c) = g.sin_cos();
    let alpha = 1.0 / (4.0 * c * c);
    let beta = 1.0 / (4.0 * s * c);
    let id = Operator::identity(2);
    let a = (&id + &pauli::sigma_z()).scale_real(alpha);
    (&a - &pauli::sigma_x().scale_real(beta)).scale_real(sd)
}

/// `Q = −√d σ_y/(4 sin g cos g)`
pub fn q_operator(d: usize, g: f64) -> Operator {
    let (s, c) = g.sin_cos();
    pauli::sigma_y().scale_real(-(d as f64).sqrt() / (4.0 * s * c))
}

/// Joint meter observables `(R, T)` on `B ⊗ A`:
/// `R = P_B P_A − Q_B Q_A`, `T = P_B Q_A + Q_B P_A`.
pub fn rt_observables(d: usize, cfg: &CouplingConfig) -> (Operator, Operator) {
    let (pb, qb) = (p_operator(d, cfg.g_b), q_operator(d, cfg.g_b));
    let (pa, qa) = (p_operator(d, cfg.g_a), q_operator(d, cfg.g_a));
    let r = &pb.kron(&pa) - &qb.kron(&qa);
    let t = &pb.kron(&qa) + &qb.kron(&pa);
    (r, t)
}

/// `Tr(Π_l ⊗ R ρ_J) + i Tr(Π_l ⊗ T ρ_J)`, which equals `⟨a_j|Π_l|a_k⟩`
/// for a joint state prepared from `|a_j⟩` with observable index `k`.
pub fn exact_rt_expectation(js: &JointState, pi_l: &Operator, cfg: &CouplingConfig) -> Result<Complex64> {
    let m = conditional_meter_operator(js, pi_l)?;
    let (r, t) = rt_observables(js.system_dim, cfg);
    let re = m.trace_product(&r).re;
    let im = m.trace_product(&t).re;
    Ok(Complex64::new(re, im))
}
