//! Completely positive (possibly trace-decreasing) operations in Kraus form,
//! their Choi matrices, and placement onto larger registers.
//!
//! Qubit 0 is the most significant tensor factor throughout the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh, kron, ComplexMatrix, HermitianMatrix, C64, ONE, ZERO};

/// Tolerance for unitarity, trace preservation and projector checks.
pub const OPERATION_TOL: f64 = 1e-9;
/// Minimum Choi eigenvalue accepted as completely positive.
pub const CP_TOL: f64 = -1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum OperationKind {
    Unitary,
    /// Realized by the two-outcome measurement `{Π, I − Π}`, post-selected on `Π`.
    Projective { effect: ComplexMatrix, complement: ComplexMatrix },
    General,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuantumOperation {
    qubits: usize,
    kraus: Vec<ComplexMatrix>,
    trace_preserving: bool,
    kind: OperationKind,
}

fn qubits_for_dim(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::DimensionMismatch(format!("dimension {dim} is not a power of two")));
    }
    Ok(dim.trailing_zeros() as usize)
}

fn effect_of(kraus: &[ComplexMatrix]) -> ComplexMatrix {
    let d = kraus[0].cols();
    let mut acc = ComplexMatrix::zeros(d, d);
    for k in kraus {
        acc += &(&k.dagger() * k);
    }
    acc
}

/// Rank of `p` if it is a nonzero orthogonal projector.
fn projector_rank(p: &ComplexMatrix) -> Option<usize> {
    let h = HermitianMatrix::new(p.clone()).ok()?;
    if !(p * p).approx_eq(p, OPERATION_TOL) {
        return None;
    }
    let rank = eigh(&h).eigenvalues.iter().filter(|&&l| l > 0.5).count();
    (rank > 0 && rank < p.rows()).then_some(rank)
}

impl QuantumOperation {
    fn checked_kraus(kraus: Vec<ComplexMatrix>) -> Result<(usize, Vec<ComplexMatrix>)> {
        let first = kraus
            .first()
            .ok_or_else(|| Error::InvalidArgument("operation needs at least one Kraus operator".into()))?;
        let d = first.rows();
        if kraus.iter().any(|k| k.rows() != d || k.cols() != d) {
            return Err(Error::DimensionMismatch("Kraus operators must share a square shape".into()));
        }
        Ok((qubits_for_dim(d)?, kraus))
    }

    pub fn unitary(u: ComplexMatrix) -> Result<Self> {
        let (qubits, kraus) = Self::checked_kraus(vec![u])?;
        let u = &kraus[0];
        if !(&u.dagger() * u).approx_eq(&ComplexMatrix::identity(u.rows()), OPERATION_TOL) {
            return Err(Error::InvalidArgument("matrix is not unitary".into()));
        }
        Ok(Self { qubits, kraus, trace_preserving: true, kind: OperationKind::Unitary })
    }

    /// Rank-1 operation `ρ ↦ KρK†` whose effect `K†K` is a rank-1 projector.
    pub fn projective(k: ComplexMatrix) -> Result<Self> {
        let op = Self::projective_kraus(vec![k])?;
        match &op.kind {
            OperationKind::Projective { effect, .. } if projector_rank(effect) == Some(1) => Ok(op),
            _ => Err(Error::InvalidArgument("effect is not a rank-1 projector".into())),
        }
    }

    /// Trace-decreasing operation whose total effect `Σ K†K` is a proper projector.
    pub fn projective_kraus(kraus: Vec<ComplexMatrix>) -> Result<Self> {
        let (qubits, kraus) = Self::checked_kraus(kraus)?;
        let effect = effect_of(&kraus);
        if projector_rank(&effect).is_none() {
            return Err(Error::InvalidArgument("total effect is not a proper projector".into()));
        }
        let complement = &ComplexMatrix::identity(effect.rows()) - &effect;
        Ok(Self { qubits, kraus, trace_preserving: false, kind: OperationKind::Projective { effect, complement } })
    }

    /// General CP map from Kraus operators; trace preservation is detected.
    pub fn from_kraus(kraus: Vec<ComplexMatrix>) -> Result<Self> {
        let (qubits, kraus) = Self::checked_kraus(kraus)?;
        let effect = effect_of(&kraus);
        let tp = effect.approx_eq(&ComplexMatrix::identity(effect.rows()), OPERATION_TOL);
        Ok(Self { qubits, kraus, trace_preserving: tp, kind: OperationKind::General })
    }

    /// Single-Kraus map `ρ ↦ MρM†`.
    pub fn single(m: ComplexMatrix) -> Result<Self> {
        Self::from_kraus(vec![m])
    }

    pub fn identity(qubits: usize) -> Self {
        Self {
            qubits,
            kraus: vec![ComplexMatrix::identity(1 << qubits)],
            trace_preserving: true,
            kind: OperationKind::Unitary,
        }
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.qubits
    }

    pub fn kraus(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    pub fn is_trace_preserving(&self) -> bool {
        self.trace_preserving
    }

    pub fn kind(&self) -> &OperationKind {
        &self.kind
    }

    pub fn effect(&self) -> ComplexMatrix {
        effect_of(&self.kraus)
    }

    /// `after ∘ self`: apply `self` first, then `after`.
    pub fn then(&self, after: &QuantumOperation) -> Result<Self> {
        if self.qubits != after.qubits {
            return Err(Error::DimensionMismatch(format!(
                "cannot compose {}-qubit and {}-qubit operations",
                self.qubits, after.qubits
            )));
        }
        let kraus: Vec<ComplexMatrix> =
            after.kraus.iter().flat_map(|a| self.kraus.iter().map(move |b| a * b)).collect();
        let kind = match (&self.kind, &after.kind) {
            (OperationKind::Unitary, OperationKind::Unitary) => OperationKind::Unitary,
            (OperationKind::Projective { effect, complement }, _) if after.trace_preserving => {
                OperationKind::Projective { effect: effect.clone(), complement: complement.clone() }
            }
            _ => OperationKind::General,
        };
        let trace_preserving = self.trace_preserving && after.trace_preserving;
        Ok(Self { qubits: self.qubits, kraus, trace_preserving, kind })
    }

    /// `self ⊗ other`, with `self` on the leading qubits.
    pub fn tensor(&self, other: &QuantumOperation) -> Self {
        let kraus: Vec<ComplexMatrix> =
            self.kraus.iter().flat_map(|a| other.kraus.iter().map(move |b| kron(a, b))).collect();
        let trace_preserving = self.trace_preserving && other.trace_preserving;
        let kind = match (&self.kind, &other.kind) {
            (OperationKind::Unitary, OperationKind::Unitary) => OperationKind::Unitary,
            (OperationKind::Projective { effect: ea, .. }, OperationKind::Projective { effect: eb, .. }) => {
                let effect = kron(ea, eb);
                let complement = &ComplexMatrix::identity(effect.rows()) - &effect;
                OperationKind::Projective { effect, complement }
            }
            (OperationKind::Projective { effect: ea, .. }, OperationKind::Unitary) => {
                // Π ⊗ I has rank > 1; still a two-outcome measurement.
                let effect = kron(ea, &ComplexMatrix::identity(other.dim()));
                let complement = &ComplexMatrix::identity(effect.rows()) - &effect;
                OperationKind::Projective { effect, complement }
            }
            (OperationKind::Unitary, OperationKind::Projective { effect: eb, .. }) => {
                let effect = kron(&ComplexMatrix::identity(self.dim()), eb);
                let complement = &ComplexMatrix::identity(effect.rows()) - &effect;
                OperationKind::Projective { effect, complement }
            }
            _ => OperationKind::General,
        };
        Self { qubits: self.qubits + other.qubits, kraus, trace_preserving, kind }
    }

    /// Whether the operation is realizable as a (possibly post-selected) instrument branch,
    /// i.e. its effect satisfies `0 ≤ Σ K†K ≤ I`.
    pub fn is_physical(&self) -> bool {
        if self.trace_preserving {
            return true;
        }
        let Ok(effect) = HermitianMatrix::new(self.effect()) else { return false };
        let es = eigh(&effect);
        es.min_eigenvalue() >= -OPERATION_TOL && es.max_eigenvalue() <= 1.0 + OPERATION_TOL
    }

    /// `Σ K ρ K†` (unnormalized).
    pub fn apply(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        if rho.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{}-dimensional operation applied to {}-dimensional state",
                self.dim(),
                rho.dim()
            )));
        }
        let mut out = ComplexMatrix::zeros(self.dim(), self.dim());
        for k in &self.kraus {
            out += &k.sandwich(rho.matrix())?;
        }
        Ok(DensityOperator::from_matrix_unchecked(out))
    }

    /// Lifts the operation to `n` qubits acting on `support` (in the given order).
    pub fn embed(&self, support: &[usize], n: usize) -> Result<Self> {
        if support.len() != self.qubits {
            return Err(Error::InvalidSupport(format!(
                "{} support indices for a {}-qubit operation",
                support.len(),
                self.qubits
            )));
        }
        let layout = LocalLayout::new(support, n)?;
        let kraus = self.kraus.iter().map(|k| layout.embed_matrix(k)).collect();
        let kind = match &self.kind {
            OperationKind::Unitary => OperationKind::Unitary,
            OperationKind::Projective { effect, .. } => {
                let effect = layout.embed_matrix(effect);
                let complement = &ComplexMatrix::identity(effect.rows()) - &effect;
                OperationKind::Projective { effect, complement }
            }
            OperationKind::General => OperationKind::General,
        };
        Ok(Self { qubits: n, kraus, trace_preserving: self.trace_preserving, kind })
    }
}

/// Index bookkeeping for an operator acting on an ordered subset of qubits.
#[derive(Clone, Debug)]
pub struct LocalLayout {
    n: usize,
    /// Full-register offset of each local basis index.
    offsets: Vec<usize>,
    /// Register indices with all support bits cleared.
    bases: Vec<usize>,
}

impl LocalLayout {
    pub fn new(support: &[usize], n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for &q in support {
            if q >= n {
                return Err(Error::InvalidSupport(format!("qubit {q} out of range for {n} qubits")));
            }
            if std::mem::replace(&mut seen[q], true) {
                return Err(Error::InvalidSupport(format!("qubit {q} listed twice")));
            }
        }
        let k = support.len();
        let offsets = (0..1usize << k)
            .map(|local| {
                support.iter().enumerate().fold(0usize, |acc, (j, &q)| {
                    let bit = (local >> (k - 1 - j)) & 1;
                    acc | (bit << (n - 1 - q))
                })
            })
            .collect();
        let mask: usize = support.iter().map(|&q| 1usize << (n - 1 - q)).sum();
        let bases = (0..1usize << n).filter(|x| x & mask == 0).collect();
        Ok(Self { n, offsets, bases })
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn embed_matrix(&self, local: &ComplexMatrix) -> ComplexMatrix {
        let dim = 1usize << self.n;
        let mut full = ComplexMatrix::zeros(dim, dim);
        for &b in &self.bases {
            for (a, &oa) in self.offsets.iter().enumerate() {
                for (c, &oc) in self.offsets.iter().enumerate() {
                    full[(b | oa, b | oc)] = local[(a, c)];
                }
            }
        }
        full
    }

    /// `(K ⊗ I) ψ` with `K` placed on the layout's support.
    pub fn apply_vec(&self, local: &ComplexMatrix, psi: &[C64], out: &mut Vec<C64>) {
        let m = self.offsets.len();
        out.clear();
        out.resize(psi.len(), ZERO);
        let mut gathered = vec![ZERO; m];
        for &b in &self.bases {
            for (g, &o) in gathered.iter_mut().zip(&self.offsets) {
                *g = psi[b | o];
            }
            for (a, &oa) in self.offsets.iter().enumerate() {
                let row = local.row(a);
                let mut acc = ZERO;
                for (x, y) in row.iter().zip(&gathered) {
                    acc += x * y;
                }
                out[b | oa] = acc;
            }
        }
    }
}

/// Choi matrix `C(T) = (T ⊗ I)(|ψ₊⟩⟨ψ₊|)` with unnormalized `|ψ₊⟩ = Σ|ii⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiMatrix {
    matrix: HermitianMatrix,
    qubits: usize,
}

impl ChoiMatrix {
    pub fn from_matrix(matrix: ComplexMatrix, qubits: usize) -> Result<Self> {
        if matrix.rows() != 1 << (2 * qubits) {
            return Err(Error::DimensionMismatch(format!(
                "Choi matrix of a {qubits}-qubit map must be {0}x{0}",
                1 << (2 * qubits)
            )));
        }
        Ok(Self { matrix: HermitianMatrix::new(matrix)?, qubits })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        self.matrix.as_matrix()
    }

    pub fn hermitian(&self) -> &HermitianMatrix {
        &self.matrix
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    /// Linear combination `Σ c_i C_i`.
    pub fn combine<'a>(terms: impl IntoIterator<Item = (f64, &'a ChoiMatrix)>) -> Result<Self> {
        let mut iter = terms.into_iter().peekable();
        let first = iter.peek().ok_or_else(|| Error::InvalidArgument("empty combination".into()))?;
        let qubits = first.1.qubits;
        let dim = first.1.matrix().rows();
        let mut acc = ComplexMatrix::zeros(dim, dim);
        for (c, choi) in iter {
            if choi.qubits != qubits {
                return Err(Error::DimensionMismatch("Choi matrices on different qubit counts".into()));
            }
            acc += &choi.matrix().scale_real(c);
        }
        Ok(Self { matrix: HermitianMatrix::new(acc)?, qubits })
    }

    /// Partial trace over the output factor, `Σ_r C[(r,i),(r,j)]`.
    pub fn output_marginal(&self) -> ComplexMatrix {
        let d = 1usize << self.qubits;
        let c = self.matrix();
        ComplexMatrix::from_fn(d, d, |i, j| (0..d).map(|r| c[(r * d + i, r * d + j)]).sum())
    }

    pub fn frobenius(&self) -> f64 {
        self.matrix().frobenius()
    }
}

pub fn choi_of(op: &QuantumOperation) -> ChoiMatrix {
    let dim = op.dim() * op.dim();
    let mut c = ComplexMatrix::zeros(dim, dim);
    for k in op.kraus() {
        let v = k.vectorize();
        for r in 0..dim {
            if v[r] == ZERO {
                continue;
            }
            for s in 0..dim {
                c[(r, s)] += v[r] * v[s].conj();
            }
        }
    }
    ChoiMatrix { matrix: HermitianMatrix::new(c).expect("Kraus Choi matrices are Hermitian"), qubits: op.qubits() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Classification {
    pub cp: bool,
    pub tp: bool,
}

pub fn classify_choi(choi: &ChoiMatrix) -> Classification {
    let cp = eigh(choi.hermitian()).min_eigenvalue() >= CP_TOL;
    let d = 1usize << choi.qubits();
    let tp = choi.output_marginal().approx_eq(&ComplexMatrix::identity(d), OPERATION_TOL);
    Classification { cp, tp }
}

pub fn classify(op: &QuantumOperation) -> Classification {
    classify_choi(&choi_of(op))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<C64>,
    qubits: usize,
}

impl StateVector {
    /// Normalizes the input; rejects the zero vector.
    pub fn new(mut amplitudes: Vec<C64>) -> Result<Self> {
        let qubits = qubits_for_dim(amplitudes.len())?;
        if crate::linalg::normalize(&mut amplitudes) == 0.0 {
            return Err(Error::InvalidArgument("zero state vector".into()));
        }
        Ok(Self { amplitudes, qubits })
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(qubits: usize, index: usize) -> Self {
        let mut amplitudes = vec![ZERO; 1 << qubits];
        amplitudes[index] = ONE;
        Self { amplitudes, qubits }
    }

    /// `|+⟩^{⊗n}`
    pub fn plus(qubits: usize) -> Self {
        let d = 1usize << qubits;
        let a = C64::new(1.0 / (d as f64).sqrt(), 0.0);
        Self { amplitudes: vec![a; d], qubits }
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn to_density(&self) -> DensityOperator {
        DensityOperator::from_matrix_unchecked(ComplexMatrix::outer(&self.amplitudes, &self.amplitudes))
    }
}

/// PSD Hermitian matrix; the trace may be below one after a trace-decreasing map.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    matrix: ComplexMatrix,
}

impl DensityOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        qubits_for_dim(matrix.rows())?;
        let h = HermitianMatrix::new(matrix)?;
        let min = eigh(&h).min_eigenvalue();
        if min < CP_TOL {
            return Err(Error::InvalidArgument(format!("density operator has eigenvalue {min:.3e} < 0")));
        }
        Ok(Self { matrix: h.into_matrix() })
    }

    pub(crate) fn from_matrix_unchecked(matrix: ComplexMatrix) -> Self {
        Self { matrix }
    }

    pub fn maximally_mixed(qubits: usize) -> Self {
        let d = 1usize << qubits;
        Self { matrix: ComplexMatrix::identity(d).scale_real(1.0 / d as f64) }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn expectation(&self, a: &HermitianMatrix) -> f64 {
        a.expectation(&self.matrix)
    }
}
