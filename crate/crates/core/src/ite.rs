//! Local Hamiltonians, imaginary-time evolution maps and first-order Trotter plans.

use serde::{Deserialize, Serialize};

use crate::basis::pauli_matrix;
use crate::channels::{LocalLayout, QuantumOperation};
use crate::error::{Error, Result};
use crate::linalg::{eigh, herm_exp, ComplexMatrix, HermitianMatrix};

/// Largest register for which dense global quantities are computed.
pub const DENSE_MAX_QUBITS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct LocalTerm {
    pub support: Vec<usize>,
    pub h: HermitianMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalHamiltonian {
    n: usize,
    terms: Vec<LocalTerm>,
}

impl LocalHamiltonian {
    pub fn new(n: usize, terms: Vec<LocalTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument("a Hamiltonian needs at least one term".into()));
        }
        for t in &terms {
            LocalLayout::new(&t.support, n)?;
            if t.h.dim() != 1 << t.support.len() {
                return Err(Error::DimensionMismatch(format!(
                    "term on {} qubits has dimension {}",
                    t.support.len(),
                    t.h.dim()
                )));
            }
        }
        Ok(Self { n, terms })
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[LocalTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_locality(&self) -> usize {
        self.terms.iter().map(|t| t.support.len()).max().unwrap_or(0)
    }

    /// Dense `Σ_l H_l` on the full register.
    pub fn dense(&self) -> HermitianMatrix {
        let dim = 1usize << self.n;
        let mut acc = ComplexMatrix::zeros(dim, dim);
        for t in &self.terms {
            let layout = LocalLayout::new(&t.support, self.n).expect("validated at construction");
            acc += &layout.embed_matrix(t.h.as_matrix());
        }
        HermitianMatrix::new(acc).expect("sum of Hermitian terms")
    }

    /// For each term, the index of the first term with an identical local matrix.
    /// Translation-invariant models need one QPD per class.
    pub fn term_classes(&self) -> Vec<usize> {
        (0..self.terms.len())
            .map(|i| {
                (0..i)
                    .find(|&j| self.terms[j].h.as_matrix().approx_eq(self.terms[i].h.as_matrix(), 1e-14))
                    .unwrap_or(i)
            })
            .collect()
    }
}

/// `Σ c_j P_j` for equal-length Pauli strings over `{I, X, Y, Z}`.
pub fn pauli_sum(terms: &[(f64, &str)]) -> Result<HermitianMatrix> {
    let Some(&(_, first)) = terms.first() else {
        return Err(Error::InvalidArgument("empty Pauli sum".into()));
    };
    let k = first.len();
    let mut acc = ComplexMatrix::zeros(1 << k, 1 << k);
    for &(c, s) in terms {
        if s.len() != k || !s.chars().all(|ch| "IXYZ".contains(ch)) {
            return Err(Error::InvalidArgument(format!("bad Pauli string {s:?}")));
        }
        acc += &pauli_matrix(s).scale_real(c);
    }
    HermitianMatrix::new(acc)
}

/// `−(XX + YY + ZZ)`, optionally shifted by `+II`.
pub fn heisenberg_2q_term(shift: bool) -> HermitianMatrix {
    let mut terms = vec![(-1.0, "XX"), (-1.0, "YY"), (-1.0, "ZZ")];
    if shift {
        terms.push((1.0, "II"));
    }
    pauli_sum(&terms).expect("static Pauli sum")
}

pub fn heisenberg_2q(shift: bool) -> LocalHamiltonian {
    LocalHamiltonian::new(2, vec![LocalTerm { support: vec![0, 1], h: heisenberg_2q_term(shift) }])
        .expect("static Hamiltonian")
}

/// Open-boundary chain with `J·(−XX − YY − ZZ) + shift·II` on each edge.
pub fn heisenberg_chain_1d(n: usize, coupling: f64, shift: f64) -> Result<LocalHamiltonian> {
    if n < 2 {
        return Err(Error::InvalidArgument("a chain needs at least two sites".into()));
    }
    let h = pauli_sum(&[(-coupling, "XX"), (-coupling, "YY"), (-coupling, "ZZ"), (shift, "II")])?;
    let terms = (0..n - 1).map(|i| LocalTerm { support: vec![i, i + 1], h: h.clone() }).collect();
    LocalHamiltonian::new(n, terms)
}

/// `ρ ↦ e^{−βh} ρ e^{−βh}`.
pub fn ite_map(h: &HermitianMatrix, beta: f64) -> Result<QuantumOperation> {
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::InvalidArgument(format!("beta must be nonnegative, got {beta}")));
    }
    QuantumOperation::single(herm_exp(h, -beta)?)
}

#[derive(Clone, Debug)]
pub struct TrotterStep {
    pub term: usize,
    pub support: Vec<usize>,
    pub op: QuantumOperation,
}

/// Steps are applied in list order: the term sequence `H_1 … H_L`, repeated `r` times.
#[derive(Clone, Debug)]
pub struct TrotterPlan {
    pub beta: f64,
    pub r: usize,
    pub n: usize,
    pub steps: Vec<TrotterStep>,
}

impl TrotterPlan {
    /// Dense product of all step Kraus operators (the last step leftmost).
    pub fn product(&self) -> ComplexMatrix {
        let dim = 1usize << self.n;
        let mut acc = ComplexMatrix::identity(dim);
        for s in &self.steps {
            let layout = LocalLayout::new(&s.support, self.n).expect("validated plan");
            acc = &layout.embed_matrix(&s.op.kraus()[0]) * &acc;
        }
        acc
    }

    /// The steps embedded on the full register, in application order.
    pub fn embedded_steps(&self) -> Result<Vec<QuantumOperation>> {
        self.steps.iter().map(|s| s.op.embed(&s.support, self.n)).collect()
    }
}

pub fn trotter_plan(h: &LocalHamiltonian, beta: f64, r: usize) -> Result<TrotterPlan> {
    if r == 0 {
        return Err(Error::InvalidArgument("Trotter number must be at least 1".into()));
    }
    let local: Vec<QuantumOperation> =
        h.terms().iter().map(|t| ite_map(&t.h, beta / r as f64)).collect::<Result<_>>()?;
    let steps = (0..r)
        .flat_map(|_| {
            h.terms().iter().zip(&local).enumerate().map(|(term, (t, op))| TrotterStep {
                term,
                support: t.support.clone(),
                op: op.clone(),
            })
        })
        .collect();
    Ok(TrotterPlan { beta, r, n: h.qubits(), steps })
}

#[derive(Clone, Debug)]
pub struct ShiftedHamiltonian {
    pub hamiltonian: LocalHamiltonian,
    /// `α_l` added to each term.
    pub offsets: Vec<f64>,
    /// Ground energy of the shifted global Hamiltonian, when the register is small enough.
    pub global_lambda0: Option<f64>,
}

/// Adds `−λ₀(h_l)·I` to each term, making every local term PSD with zero ground energy.
pub fn shift_to_psd(h: &LocalHamiltonian) -> ShiftedHamiltonian {
    let mut offsets = Vec::with_capacity(h.len());
    let terms = h
        .terms()
        .iter()
        .map(|t| {
            let alpha = -eigh(&t.h).min_eigenvalue();
            // Leave already-PSD terms untouched.
            let alpha = if alpha > 1e-12 { alpha } else { 0.0 };
            offsets.push(alpha);
            let shifted = t.h.add(&HermitianMatrix::identity(t.h.dim()).scale(alpha));
            LocalTerm { support: t.support.clone(), h: shifted }
        })
        .collect();
    let hamiltonian = LocalHamiltonian::new(h.qubits(), terms).expect("same supports");
    let global_lambda0 =
        (h.qubits() <= DENSE_MAX_QUBITS).then(|| eigh(&hamiltonian.dense()).min_eigenvalue());
    ShiftedHamiltonian { hamiltonian, offsets, global_lambda0 }
}

/// Trotter number `⌈c·β²L²/ε⌉`, at least 1.
pub fn choose_r_with(beta: f64, terms: usize, eps: f64, c: f64) -> Result<usize> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let l = terms as f64;
    let r = (c * beta * beta * l * l / eps).ceil();
    Ok((r as usize).max(1))
}

pub fn choose_r(beta: f64, terms: usize, eps: f64) -> Result<usize> {
    choose_r_with(beta, terms, eps, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShiftSpec {
    Named(ShiftMode),
    Value(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftMode {
    Auto,
    None,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        ShiftSpec::Named(ShiftMode::None)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    pub coeff: f64,
    pub pauli_string: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    pub qubits: Vec<usize>,
    pub pauli_sum: Vec<PauliTerm>,
}

/// JSON description of a local Hamiltonian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub n: usize,
    pub terms: Vec<TermSpec>,
    #[serde(default)]
    pub shift: ShiftSpec,
}

impl HamiltonianSpec {
    pub fn build(&self) -> Result<LocalHamiltonian> {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let sum: Vec<(f64, &str)> = t.pauli_sum.iter().map(|p| (p.coeff, p.pauli_string.as_str())).collect();
                let h = pauli_sum(&sum)?;
                if h.dim() != 1 << t.qubits.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "Pauli strings of length {} on support {:?}",
                        h.dim().trailing_zeros(),
                        t.qubits
                    )));
                }
                Ok(LocalTerm { support: t.qubits.clone(), h })
            })
            .collect::<Result<Vec<_>>>()?;
        let h = LocalHamiltonian::new(self.n, terms)?;
        Ok(match self.shift {
            ShiftSpec::Named(ShiftMode::None) => h,
            ShiftSpec::Named(ShiftMode::Auto) => shift_to_psd(&h).hamiltonian,
            ShiftSpec::Value(v) => {
                let terms = h
                    .terms()
                    .iter()
                    .map(|t| LocalTerm {
                        support: t.support.clone(),
                        h: t.h.add(&HermitianMatrix::identity(t.h.dim()).scale(v)),
                    })
                    .collect();
                LocalHamiltonian::new(self.n, terms)?
            }
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Operator-norm distance between a plan's product and the exact propagator.
pub fn trotter_error(h: &LocalHamiltonian, beta: f64, r: usize) -> Result<f64> {
    let plan = trotter_plan(h, beta, r)?;
    let exact = herm_exp(&h.dense(), -beta)?;
    Ok(crate::linalg::operator_norm(&(&plan.product() - &exact)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{classify, StateVector};
    use crate::linalg::{gates::z, HermitianMatrix};

    #[test]
    fn zero_beta_is_identity() {
        let op = ite_map(&heisenberg_2q_term(true), 0.0).unwrap();
        assert!(op.is_trace_preserving());
        assert!(op.kraus()[0].approx_eq(&ComplexMatrix::identity(4), 1e-14));
    }

    #[test]
    fn scalar_hamiltonian_gives_scaled_identity() {
        let h = HermitianMatrix::identity(2).scale(0.7);
        let op = ite_map(&h, 0.3).unwrap();
        let expect = ComplexMatrix::identity(2).scale_real((-0.21f64).exp());
        assert!(op.kraus()[0].approx_eq(&expect, 1e-14));
        assert!(!op.is_trace_preserving());
    }

    #[test]
    fn negative_beta_rejected() {
        assert!(ite_map(&HermitianMatrix::new(z()).unwrap(), -0.1).is_err());
    }

    #[test]
    fn ite_trace_matches_dense() {
        let h = heisenberg_2q_term(true);
        let beta = 0.05;
        let op = ite_map(&h, beta).unwrap();
        let rho = StateVector::basis(2, 1).to_density();
        let out = op.apply(&rho).unwrap();
        let e2 = herm_exp(&h, -2.0 * beta).unwrap();
        assert!((out.trace() - e2[(1, 1)].re).abs() < 1e-12);
        let cls = classify(&op);
        assert!(cls.cp && !cls.tp);
    }

    #[test]
    fn single_term_plan_is_exact() {
        let h = heisenberg_2q(true);
        for r in [1, 2, 5] {
            let plan = trotter_plan(&h, 0.4, r).unwrap();
            assert_eq!(plan.steps.len(), r);
            let exact = ite_map(&h.terms()[0].h, 0.4).unwrap();
            assert!(plan.product().approx_eq(&exact.kraus()[0], 1e-12));
        }
    }

    #[test]
    fn chain_trotter_error_decays_first_order() {
        let h = heisenberg_chain_1d(3, 1.0, 0.0).unwrap();
        let errs: Vec<f64> = [1, 2, 4, 8].iter().map(|&r| trotter_error(&h, 0.1, r).unwrap()).collect();
        for w in errs.windows(2) {
            assert!(w[1] < w[0]);
            let ratio = w[0] / w[1];
            assert!((1.6..=2.4).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn shift_gives_psd_terms() {
        let s = shift_to_psd(&heisenberg_2q(false));
        let ev = eigh(&s.hamiltonian.terms()[0].h).eigenvalues;
        let expect = [0.0, 0.0, 0.0, 4.0];
        for (a, b) in ev.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((s.offsets[0] - 1.0).abs() < 1e-12);
        assert!(s.global_lambda0.unwrap().abs() < 1e-12);
    }

    #[test]
    fn shift_leaves_psd_terms_alone() {
        let h = heisenberg_2q(true);
        let s = shift_to_psd(&h);
        assert_eq!(s.offsets, vec![0.0]);
        assert_eq!(s.hamiltonian, h);
    }

    #[test]
    fn shifted_chain_reports_global_ground_energy() {
        let h = heisenberg_chain_1d(4, 1.0, 0.0).unwrap();
        let s = shift_to_psd(&h);
        // The ferromagnetic chain is frustration-free: the all-up state has zero energy.
        assert!(s.global_lambda0.unwrap().abs() < 1e-10);
        assert_eq!(h.term_classes(), vec![0, 0, 0]);
    }

    #[test]
    fn choose_r_examples() {
        assert_eq!(choose_r(0.0, 3, 0.1).unwrap(), 1);
        assert_eq!(choose_r(1.0, 3, 0.1).unwrap(), 90);
        assert_eq!(choose_r(1.0, 3, 0.2).unwrap(), 45);
        assert!(choose_r(1.0, 3, 0.0).is_err());
    }

    #[test]
    fn json_spec_roundtrip() {
        let json = r#"{"n": 3, "terms": [
            {"qubits": [0, 1], "pauli_sum": [{"coeff": -1, "pauli_string": "XX"}, {"coeff": -1, "pauli_string": "YY"}, {"coeff": -1, "pauli_string": "ZZ"}]},
            {"qubits": [1, 2], "pauli_sum": [{"coeff": -1, "pauli_string": "XX"}, {"coeff": -1, "pauli_string": "YY"}, {"coeff": -1, "pauli_string": "ZZ"}]}
        ], "shift": "auto"}"#;
        let spec = HamiltonianSpec::from_json(json).unwrap();
        let h = spec.build().unwrap();
        let reference = heisenberg_chain_1d(3, 1.0, 1.0).unwrap();
        assert_eq!(h.len(), 2);
        assert!(h.dense().as_matrix().approx_eq(reference.dense().as_matrix(), 1e-12));
        let with_value: HamiltonianSpec =
            serde_json::from_str(&json.replace("\"auto\"", "1.0")).unwrap();
        assert_eq!(with_value.shift, ShiftSpec::Value(1.0));
        assert!(HamiltonianSpec::from_json(&json.replace("\"XX\"", "\"XQ\"")).unwrap().build().is_err());
    }
}
