//! POVM construction, validation and the ground-truth entry oracle.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{basis_ket, Basis, Ket, Operator, DEFAULT_TOL, ONE, ZERO};

/// Ordered set of positive operators summing to the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct Povm {
    elements: Vec<Operator>,
    labels: Vec<String>,
}

impl Povm {
    /// Validates with [`DEFAULT_TOL`]; labels default to `"1".."L"`.
    pub fn new(elements: Vec<Operator>) -> Result<Self> {
        let labels = (1..=elements.len()).map(|l| l.to_string()).collect();
        Self::with_labels(elements, labels, DEFAULT_TOL)
    }

    pub fn with_labels(elements: Vec<Operator>, labels: Vec<String>, tol: f64) -> Result<Self> {
        let first = elements
            .first()
            .ok_or_else(|| Error::InvalidPovm("a POVM needs at least one element".into()))?;
        let d = first.dim();
        if labels.len() != elements.len() {
            return Err(Error::InvalidPovm(format!(
                "{} labels for {} elements",
                labels.len(),
                elements.len()
            )));
        }
        let mut sum = Operator::zeros(d);
        for (l, e) in elements.iter().enumerate() {
            if e.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: e.dim(),
                });
            }
            if !e.is_hermitian(tol) {
                return Err(Error::InvalidPovm(format!("element {l} is not Hermitian")));
            }
            let min = e.min_eigenvalue();
            if min < -tol {
                return Err(Error::InvalidPovm(format!(
                    "element {l} has negative eigenvalue {min:e}"
                )));
            }
            sum = &sum + e;
        }
        let residual = sum.max_abs_diff(&Operator::identity(d));
        if residual > tol {
            return Err(Error::InvalidPovm(format!(
                "elements do not sum to identity (residual {residual:e})"
            )));
        }
        Ok(Self { elements, labels })
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[Operator] {
        &self.elements
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn element(&self, l: usize) -> Result<&Operator> {
        self.elements.get(l).ok_or(Error::IndexOutOfRange {
            index: l,
            dim: self.len(),
        })
    }

    /// `max |Σ_l Π_l − I|`
    pub fn completeness_residual(&self) -> f64 {
        let d = self.dim();
        let sum = self.elements.iter().fold(Operator::zeros(d), |acc, e| &acc + e);
        sum.max_abs_diff(&Operator::identity(d))
    }

    /// Re-expresses every element in `basis`, so that computational index
    /// `(j, k)` of the result holds `⟨a_j|Π_l|a_k⟩`.
    pub fn in_basis(&self, basis: &Basis) -> Result<Povm> {
        if basis.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: basis.dim(),
            });
        }
        Ok(Povm {
            elements: self.elements.iter().map(|e| basis.represent(e)).collect(),
            labels: self.labels.clone(),
        })
    }

    pub fn to_document(&self) -> PovmDocument {
        PovmDocument {
            dim: self.dim(),
            labels: self.labels.clone(),
            elements: self
                .elements
                .iter()
                .map(|e| e.to_row_major().iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        }
    }

    pub fn from_document(doc: &PovmDocument) -> Result<Self> {
        let elements = doc
            .elements
            .iter()
            .map(|entries| {
                let flat: Vec<Complex64> = entries.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
                Operator::from_row_major(doc.dim, &flat)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::with_labels(elements, doc.labels.clone(), DEFAULT_TOL)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: PovmDocument = serde_json::from_str(s)?;
        Self::from_document(&doc)
    }
}

/// On-disk POVM form: each element is a row-major list of `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PovmDocument {
    pub dim: usize,
    pub labels: Vec<String>,
    pub elements: Vec<Vec<[f64; 2]>>,
}

/// The four-outcome qubit SIC POVM `Π_l = ½|ψ_l⟩⟨ψ_l|` over `{|H⟩, |V⟩}`,
/// with `|H⟩ = |0⟩` and `|V⟩ = |1⟩`:
/// `|ψ_1⟩ = |H⟩`, `|ψ_{2,3,4}⟩ = (|H⟩ + √2 e^{iφ}|V⟩)/√3` for `φ = 0, −2π/3, 2π/3`.
pub fn make_sic_povm() -> Povm {
    let s3 = 3f64.sqrt();
    let s2 = 2f64.sqrt();
    let ket = |v: Complex64| Ket::from_vec(vec![Complex64::new(1.0 / s3, 0.0), v * (s2 / s3)]);
    let psis = [
        basis_ket(2, 0),
        ket(ONE),
        ket(Complex64::from_polar(1.0, -2.0 * PI / 3.0)),
        ket(Complex64::from_polar(1.0, 2.0 * PI / 3.0)),
    ];
    let elements = psis.iter().map(|p| Operator::projector(p).scale_real(0.5)).collect();
    Povm::new(elements).expect("SIC POVM is valid by construction")
}

/// `η [[cos²θ, e01], [conj(e01), sin²θ]]`.
pub fn make_parametric_element(theta: f64, eta: f64, e01: Complex64) -> Result<Operator> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Domain(format!("eta must lie in (0, 1], got {eta}")));
    }
    let (s, c) = theta.sin_cos();
    let bound = (c * s).abs();
    if e01.norm() > bound + 1e-12 {
        return Err(Error::Domain(format!(
            "|e01| = {} exceeds |cos θ sin θ| = {bound}; element would not be positive",
            e01.norm()
        )));
    }
    let m = Operator::from_rows(&[
        vec![Complex64::new(c * c, 0.0), e01],
        vec![e01.conj(), Complex64::new(s * s, 0.0)],
    ])?;
    Ok(m.scale_real(eta))
}

/// Two-outcome POVM `{Π(θ), I − Π(θ)}`.
pub fn parametric_povm(theta: f64, eta: f64, e01: Complex64) -> Result<Povm> {
    let pi = make_parametric_element(theta, eta, e01)?;
    let rest = &Operator::identity(2) - &pi;
    Povm::new(vec![pi, rest])
}

/// Extracts the POVM realized by a walk unitary on `position ⊗ coin`
/// (position is the slow index) when the walker starts at position 0:
/// `Π_l = Tr_W[(|0⟩⟨0| ⊗ I) U† (|l⟩⟨l| ⊗ I) U]`.
///
/// Labels are the positions `"0".."n-1"`.
pub fn povm_from_walk(u_walk: &Operator, n_positions: usize, coin_dim: usize) -> Result<Povm> {
    if n_positions == 0 || coin_dim == 0 {
        return Err(Error::Domain("positions and coin dimension must be positive".into()));
    }
    if u_walk.dim() != n_positions * coin_dim {
        return Err(Error::DimensionMismatch {
            expected: n_positions * coin_dim,
            actual: u_walk.dim(),
        });
    }
    if !u_walk.is_unitary(DEFAULT_TOL) {
        return Err(Error::Domain("walk operator is not unitary".into()));
    }
    let start = Operator::projector(&basis_ket(n_positions, 0)).kron(&Operator::identity(coin_dim));
    let u_dag = u_walk.adjoint();
    let elements = (0..n_positions)
        .map(|l| {
            let at_l = Operator::projector(&basis_ket(n_positions, l)).kron(&Operator::identity(coin_dim));
            let heis = &(&u_dag * &at_l) * u_walk;
            (&start * &heis).partial_trace(n_positions, coin_dim, false)
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = (0..n_positions).map(|l| l.to_string()).collect();
    Povm::with_labels(elements, labels, DEFAULT_TOL)
}

/// Haar-distributed unitary from the QR decomposition of a complex Ginibre matrix.
pub fn haar_unitary(n: usize, rng: &mut impl rand::Rng) -> Operator {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let g = DMatrix::from_fn(n, n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * scale, im * scale)
    });
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            let rii = r[(i, i)];
            if rii.norm() > 0.0 {
                rii / rii.norm()
            } else {
                ONE
            }
        } else {
            ZERO
        }
    });
    Operator::from_matrix(q * phases).expect("square")
}

/// Random complete POVM with `n_outcomes` elements on a `d`-dimensional
/// system, from a Haar unitary dilation. Deterministic given `seed`.
pub fn random_povm(d: usize, n_outcomes: usize, seed: u64) -> Result<Povm> {
    if d < 2 || n_outcomes == 0 {
        return Err(Error::Domain(format!(
            "random POVM needs d >= 2 and at least one outcome (got d={d}, L={n_outcomes})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = haar_unitary(d * n_outcomes, &mut rng);
    let walk = povm_from_walk(&u, n_outcomes, d)?;
    let labels = (1..=n_outcomes).map(|l| l.to_string()).collect();
    Povm::with_labels(walk.elements, labels, DEFAULT_TOL)
}

/// Ground truth `⟨a_j|Π_l|a_k⟩`.
pub fn matrix_entry_oracle(p: &Povm, l: usize, j: usize, k: usize, basis: &Basis) -> Result<Complex64> {
    let e = p.element(l)?;
    if basis.dim() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            actual: basis.dim(),
        });
    }
    Ok(e.sandwich(basis.ket(j)?, basis.ket(k)?))
}

/// Parameters `(θ, η)` of a qubit element in the form of
/// [`make_parametric_element`], reading `sin²θ` from the diagonal entry of
/// row `j` (the row of the off-diagonal entry being characterized).
pub fn equivalent_theta(element: &Operator, j: usize) -> Result<(f64, f64)> {
    if element.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            actual: element.dim(),
        });
    }
    if j > 1 {
        return Err(Error::IndexOutOfRange { index: j, dim: 2 });
    }
    let eta = element.trace().re;
    if eta <= 0.0 {
        return Err(Error::Domain("element has zero trace".into()));
    }
    let s2 = (element.get(j, j).re / eta).clamp(0.0, 1.0);
    Ok((s2.sqrt().asin(), eta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn oracle(p: &Povm, l: usize, j: usize, k: usize) -> Complex64 {
        matrix_entry_oracle(p, l, j, k, &Basis::computational(p.dim())).unwrap()
    }

    #[test]
    fn sic_entries() {
        let sic = make_sic_povm();
        assert!(sic.completeness_residual() < 1e-12);
        let r = 2f64.sqrt() / 6.0;
        assert!(oracle(&sic, 0, 1, 0).norm() < 1e-15);
        assert!((oracle(&sic, 1, 1, 0) - Complex64::new(r, 0.0)).norm() < 1e-15);
        // pairwise overlaps Tr(Π_a Π_b) = 1/12 for a SIC
        for a in 0..4 {
            for b in 0..4 {
                let want = if a == b { 0.25 } else { 1.0 / 12.0 };
                let o = sic.element(a).unwrap().trace_product(sic.element(b).unwrap()).re;
                assert!((o - want).abs() < 1e-15);
            }
        }
        let e3 = Complex64::from_polar(r, -2.0 * PI / 3.0);
        assert!((oracle(&sic, 2, 1, 0) - e3).norm() < 1e-15);
        assert!((oracle(&sic, 0, 0, 0) - Complex64::new(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn parametric_element_cases() {
        let p = make_parametric_element(0.0, 1.0, ZERO).unwrap();
        assert!(p.max_abs_diff(&Operator::from_real_diagonal(&[1.0, 0.0])) < 1e-15);

        let p = make_parametric_element(FRAC_PI_4, 0.5, Complex64::new(0.25, 0.0)).unwrap();
        let want = Operator::from_rows(&[
            vec![Complex64::new(0.25, 0.0), Complex64::new(0.125, 0.0)],
            vec![Complex64::new(0.125, 0.0), Complex64::new(0.25, 0.0)],
        ])
        .unwrap();
        assert!(p.max_abs_diff(&want) < 1e-15);
        // eigenvalues ½(½ ± ¼)
        let ev = p.hermitian_eigenvalues();
        assert!((ev[0] - 0.125).abs() < 1e-15 && (ev[1] - 0.375).abs() < 1e-15);

        let err = make_parametric_element(FRAC_PI_4, 1.0, Complex64::new(0.6, 0.0)).unwrap_err();
        assert!(err.to_string().contains("0.6"));
        assert!(make_parametric_element(0.3, 0.0, ZERO).is_err());
    }

    #[test]
    fn identity_walk_never_moves() {
        let p = povm_from_walk(&Operator::identity(6), 3, 2).unwrap();
        assert!(p.element(0).unwrap().max_abs_diff(&Operator::identity(2)) < 1e-15);
        for l in 1..3 {
            assert!(p.element(l).unwrap().max_abs() < 1e-15);
        }
        assert_eq!(p.labels(), &["0", "1", "2"]);
    }

    #[test]
    fn coin_controlled_shift() {
        // |x, c⟩ → |x ⊕ c, c⟩ on 2 positions, coin_dim 2
        let u = Operator::from_fn(4, |row, col| {
            let (x, c) = (col / 2, col % 2);
            let target = ((x ^ c) * 2) + c;
            if row == target {
                ONE
            } else {
                ZERO
            }
        });
        let p = povm_from_walk(&u, 2, 2).unwrap();
        assert!(
            p.element(0)
                .unwrap()
                .max_abs_diff(&Operator::from_real_diagonal(&[1.0, 0.0]))
                < 1e-15
        );
        assert!(
            p.element(1)
                .unwrap()
                .max_abs_diff(&Operator::from_real_diagonal(&[0.0, 1.0]))
                < 1e-15
        );
    }

    #[test]
    fn walk_rejects_non_unitary() {
        let u = Operator::from_real_diagonal(&[1.0, 1.0, 0.5, 1.0]);
        assert!(matches!(povm_from_walk(&u, 2, 2), Err(Error::Domain(_))));
        assert!(povm_from_walk(&Operator::identity(5), 2, 2).is_err());
    }

    #[test]
    fn random_povm_contract() {
        let a = random_povm(2, 4, 7).unwrap();
        assert!(a.completeness_residual() < 1e-12);
        let b = random_povm(3, 4, 1).unwrap();
        for e in b.elements() {
            assert!(e.min_eigenvalue() >= -1e-12);
        }
        let again = random_povm(2, 4, 7).unwrap();
        assert_eq!(a, again);
        assert_ne!(a, random_povm(2, 4, 8).unwrap());
        assert!(random_povm(1, 3, 0).is_err());
    }

    #[test]
    fn oracle_errors_and_symmetry() {
        let p = random_povm(3, 3, 11).unwrap();
        let basis = Basis::computational(3);
        assert!(matrix_entry_oracle(&p, 3, 0, 1, &basis).is_err());
        assert!(matrix_entry_oracle(&p, 0, 3, 1, &basis).is_err());
        for l in 0..3 {
            for j in 0..3 {
                let diag = oracle(&p, l, j, j);
                assert!(diag.im.abs() < 1e-12 && (-1e-12..=1.0 + 1e-12).contains(&diag.re));
                for k in 0..3 {
                    assert!((oracle(&p, l, j, k) - oracle(&p, l, k, j).conj()).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn invalid_povms_rejected() {
        let half = Operator::identity(2).scale_real(0.5);
        assert!(Povm::new(vec![half.clone()]).is_err());
        assert!(Povm::new(vec![half.clone(), half.clone()]).is_ok());
        let neg = Operator::from_real_diagonal(&[1.5, 0.5]);
        let comp = Operator::from_real_diagonal(&[-0.5, 0.5]);
        assert!(Povm::new(vec![neg, comp]).is_err());
        assert!(Povm::new(vec![]).is_err());
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let p = random_povm(3, 5, 42).unwrap();
        let back = Povm::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(p, back);
        assert!(
            Povm::from_json(r#"{"dim":2,"labels":["a"],"elements":[[[1,0],[0,0],[0,0],[1,0]]],"extra":1}"#).is_err()
        );
    }

    #[test]
    fn equivalent_theta_of_sic() {
        let sic = make_sic_povm();
        let (t1, e1) = equivalent_theta(sic.element(0).unwrap(), 1).unwrap();
        assert!(t1.abs() < 1e-15 && (e1 - 0.5).abs() < 1e-15);
        let (t2, _) = equivalent_theta(sic.element(1).unwrap(), 1).unwrap();
        // sin²θ = 2/3  ⇔  cos θ = 1/√3
        assert!((t2.cos() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    }
}
