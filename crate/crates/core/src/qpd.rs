//! Quasiprobability decompositions of linear maps over a basis of operations.
//!
//! Targets and basis elements are compared through their Choi matrices, expanded
//! in an orthonormal real parametrization of Hermitian matrices, so that both the
//! exact solve and the L1-minimizing linear program operate on real vectors.

use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, SolveOutcome};
use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::channels::{choi_of, ChoiMatrix, QuantumOperation};
use crate::error::{Error, Result};
use crate::linalg::{eigh, HermitianMatrix};

/// Least-squares residual above which a target is treated as outside the basis span.
pub const SPAN_TOL: f64 = 1e-7;
/// Required reconstruction accuracy of [`solve_exact`].
pub const EXACT_TOL: f64 = 1e-8;

const RANK_RTOL: f64 = 1e-10;
/// LP coefficients below this fraction of the largest are treated as zero.
const SUPPORT_RTOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "QpdJson", try_from = "QpdJson")]
pub struct QPDecomposition {
    basis_label: String,
    coefficients: Vec<f64>,
    gamma: f64,
    probabilities: Vec<f64>,
    signs: Vec<i8>,
    residual: f64,
}

#[derive(Serialize, Deserialize)]
struct QpdJson {
    basis_label: String,
    coefficients: Vec<f64>,
    gamma: f64,
    residual: f64,
}

impl From<QPDecomposition> for QpdJson {
    fn from(d: QPDecomposition) -> Self {
        Self { basis_label: d.basis_label, coefficients: d.coefficients, gamma: d.gamma, residual: d.residual }
    }
}

impl TryFrom<QpdJson> for QPDecomposition {
    type Error = Error;

    fn try_from(j: QpdJson) -> Result<Self> {
        let d = QPDecomposition::from_coefficients(j.basis_label, j.coefficients, j.residual)?;
        if (d.gamma - j.gamma).abs() > 1e-9 * d.gamma.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "stored gamma {} disagrees with coefficient L1 norm {}",
                j.gamma, d.gamma
            )));
        }
        Ok(d)
    }
}

impl QPDecomposition {
    pub fn from_coefficients(basis_label: impl Into<String>, coefficients: Vec<f64>, residual: f64) -> Result<Self> {
        if coefficients.iter().any(|q| !q.is_finite()) {
            return Err(Error::InvalidArgument("non-finite QPD coefficient".into()));
        }
        let gamma: f64 = coefficients.iter().map(|q| q.abs()).sum();
        if gamma == 0.0 {
            return Err(Error::NotSampleable("all QPD coefficients are zero".into()));
        }
        let probabilities = coefficients.iter().map(|q| q.abs() / gamma).collect();
        let signs = coefficients.iter().map(|&q| if q < 0.0 { -1 } else { 1 }).collect();
        Ok(Self { basis_label: basis_label.into(), coefficients, gamma, probabilities, signs, residual })
    }

    /// The decomposition `T = B_index` with `γ = 1`.
    pub fn unit(basis: &BasisSet, index: usize) -> Self {
        let mut q = vec![0.0; basis.len()];
        q[index] = 1.0;
        Self::from_coefficients(basis.name(), q, 0.0).expect("unit vector is a valid QPD")
    }

    pub fn basis_label(&self) -> &str {
        &self.basis_label
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Indices with nonzero weight.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.coefficients.iter().enumerate().filter(|(_, q)| **q != 0.0).map(|(i, _)| i)
    }
}

/// Orthonormal real coordinates of a Hermitian matrix:
/// diagonal entries, then `√2·Re` and `√2·Im` of each upper-triangle entry.
pub fn real_vec(h: &HermitianMatrix) -> Vec<f64> {
    let m = h.as_matrix();
    let d = m.rows();
    let mut out = Vec::with_capacity(d * d);
    out.extend((0..d).map(|i| m[(i, i)].re));
    for i in 0..d {
        for j in i + 1..d {
            let z = m[(i, j)] * std::f64::consts::SQRT_2;
            out.push(z.re);
            out.push(z.im);
        }
    }
    out
}

/// Householder QR with column pivoting of a column-major `rows × cols` matrix.
#[derive(Clone, Debug)]
struct PivotedQr {
    rows: usize,
    /// Column-major factored matrix: `R` on and above the diagonal, reflectors below.
    a: Vec<Vec<f64>>,
    betas: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    fn new(columns: Vec<Vec<f64>>) -> Self {
        let rows = columns.first().map_or(0, |c| c.len());
        let cols = columns.len();
        let mut a = columns;
        let mut perm: Vec<usize> = (0..cols).collect();
        let mut betas = Vec::new();
        let steps = rows.min(cols);
        let mut rank = steps;
        let mut r00 = 0.0;
        for k in 0..steps {
            let norm_tail = |c: &Vec<f64>| c[k..].iter().map(|v| v * v).sum::<f64>();
            let (best, best_norm) = (k..cols)
                .map(|j| (j, norm_tail(&a[j])))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            a.swap(k, best);
            perm.swap(k, best);
            let alpha_abs = best_norm.sqrt();
            if k == 0 {
                r00 = alpha_abs;
            }
            if alpha_abs <= RANK_RTOL * r00.max(f64::MIN_POSITIVE) {
                rank = k;
                break;
            }
            let col = &mut a[k];
            let alpha = if col[k] >= 0.0 { -alpha_abs } else { alpha_abs };
            col[k] -= alpha;
            let vnorm2: f64 = col[k..].iter().map(|v| v * v).sum();
            let beta = if vnorm2 > 0.0 { 2.0 / vnorm2 } else { 0.0 };
            let v: Vec<f64> = col[k..].to_vec();
            col[k] = alpha;
            for (slot, vi) in col[k + 1..].iter_mut().zip(&v[1..]) {
                *slot = *vi;
            }
            // Store v₀ separately: the diagonal slot now holds R_kk.
            betas.push(beta);
            for c in a.iter_mut().skip(k + 1) {
                let dot: f64 = c[k..].iter().zip(&v).map(|(x, y)| x * y).sum();
                let f = beta * dot;
                for (x, y) in c[k..].iter_mut().zip(&v) {
                    *x -= f * y;
                }
            }
            a[k].push(v[0]);
        }
        Self { rows, a, betas, perm, rank }
    }

    fn reflector(&self, k: usize) -> Vec<f64> {
        let col = &self.a[k];
        let mut v = Vec::with_capacity(self.rows - k);
        v.push(col[self.rows]);
        v.extend_from_slice(&col[k + 1..self.rows]);
        v
    }

    /// `Qᵀb` using the first `rank` reflectors.
    fn apply_qt(&self, b: &[f64]) -> Vec<f64> {
        let mut y = b.to_vec();
        for k in 0..self.rank {
            let v = self.reflector(k);
            let dot: f64 = y[k..].iter().zip(&v).map(|(x, w)| x * w).sum();
            let f = self.betas[k] * dot;
            for (x, w) in y[k..].iter_mut().zip(&v) {
                *x -= f * w;
            }
        }
        y
    }

    /// Returns the least-squares solution (zero on non-pivot columns) and the residual norm.
    fn solve(&self, b: &[f64]) -> (Vec<f64>, f64) {
        let y = self.apply_qt(b);
        let residual = y[self.rank..].iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut z = vec![0.0; self.rank];
        for i in (0..self.rank).rev() {
            let s: f64 = (i + 1..self.rank).map(|j| self.a[j][i] * z[j]).sum();
            z[i] = (y[i] - s) / self.a[i][i];
        }
        let mut x = vec![0.0; self.a.len()];
        for (i, zi) in z.into_iter().enumerate() {
            x[self.perm[i]] = zi;
        }
        (x, residual)
    }
}

/// Precomputed Choi coordinates of a basis; reuse across many targets.
#[derive(Clone, Debug)]
pub struct QpdSolver<'a> {
    basis: &'a BasisSet,
    columns: Vec<Vec<f64>>,
    /// Columns in the orthonormal coordinates of their span (full row rank).
    reduced: Vec<Vec<f64>>,
    chois: Vec<ChoiMatrix>,
    qr: PivotedQr,
}

impl<'a> QpdSolver<'a> {
    pub fn new(basis: &'a BasisSet) -> Self {
        let chois: Vec<ChoiMatrix> = basis.elements().iter().map(|e| choi_of(&e.operation)).collect();
        let columns: Vec<Vec<f64>> = chois.iter().map(|c| real_vec(c.hermitian())).collect();
        let qr = PivotedQr::new(columns.clone());
        let reduced = columns.iter().map(|c| qr.apply_qt(c)[..qr.rank].to_vec()).collect();
        Self { basis, columns, reduced, chois, qr }
    }

    pub fn basis(&self) -> &BasisSet {
        self.basis
    }

    /// Dimension of the real span of the basis Choi matrices.
    pub fn rank(&self) -> usize {
        self.qr.rank
    }

    fn target_vec(&self, target: &QuantumOperation) -> Result<Vec<f64>> {
        if target.qubits() != self.basis.qubits() {
            return Err(Error::DimensionMismatch(format!(
                "target acts on {} qubits, basis {} on {}",
                target.qubits(),
                self.basis.name(),
                self.basis.qubits()
            )));
        }
        Ok(real_vec(choi_of(target).hermitian()))
    }

    /// Distance from the target's Choi matrix to the span of the basis.
    pub fn span_residual(&self, target: &QuantumOperation) -> Result<f64> {
        let b = self.target_vec(target)?;
        Ok(self.qr.solve(&b).1)
    }

    pub fn solve_exact(&self, target: &QuantumOperation) -> Result<QPDecomposition> {
        let required = 1usize << (4 * self.basis.qubits());
        if self.basis.len() != required || self.rank() != required {
            return Err(Error::RankDeficient { rank: self.rank(), required });
        }
        let b = self.target_vec(target)?;
        let (q, _) = self.qr.solve(&b);
        self.finish(q, target)
    }

    pub fn solve_min_gamma(&self, target: &QuantumOperation) -> Result<QPDecomposition> {
        let b = self.target_vec(target)?;
        let (_, residual) = self.qr.solve(&b);
        if residual > SPAN_TOL {
            return Err(Error::Infeasible { residual });
        }
        // Redundant equality rows make the simplex pivot on round-off, so work in span coordinates.
        let mut q = min_l1(&self.reduced, &self.qr.apply_qt(&b)[..self.qr.rank])?;
        // Re-solve on the support to remove simplex round-off, when that determines it uniquely.
        let scale = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let support: Vec<usize> = (0..q.len()).filter(|&j| q[j].abs() > SUPPORT_RTOL * scale).collect();
        let sub = PivotedQr::new(support.iter().map(|&j| self.columns[j].clone()).collect());
        if sub.rank == support.len() {
            let (x, _) = sub.solve(&b);
            q = vec![0.0; self.columns.len()];
            for (&j, xj) in support.iter().zip(x) {
                q[j] = xj;
            }
        } else {
            q.iter_mut().filter(|v| v.abs() <= SUPPORT_RTOL * scale).for_each(|v| *v = 0.0);
        }
        self.finish(q, target)
    }

    fn finish(&self, q: Vec<f64>, target: &QuantumOperation) -> Result<QPDecomposition> {
        let residual = residual_of(&q, &self.chois, &choi_of(target))?;
        QPDecomposition::from_coefficients(self.basis.name(), q, residual)
    }
}

fn residual_of(q: &[f64], chois: &[ChoiMatrix], target: &ChoiMatrix) -> Result<f64> {
    let recon = ChoiMatrix::combine(q.iter().copied().zip(chois.iter()))?;
    Ok(target.matrix().distance(recon.matrix()))
}

/// Unique decomposition over a complete, linearly independent basis.
pub fn solve_exact(target: &QuantumOperation, basis: &BasisSet) -> Result<QPDecomposition> {
    QpdSolver::new(basis).solve_exact(target)
}

/// Decomposition minimizing `γ = Σ|q_i|`.
pub fn solve_min_gamma(target: &QuantumOperation, basis: &BasisSet) -> Result<QPDecomposition> {
    QpdSolver::new(basis).solve_min_gamma(target)
}

/// `‖C(T) − Σ q_i C(B_i)‖_F`.
pub fn reconstruct_residual(d: &QPDecomposition, basis: &BasisSet, target: &QuantumOperation) -> Result<f64> {
    if d.len() != basis.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for a basis of {} elements",
            d.len(),
            basis.len()
        )));
    }
    let chois: Vec<ChoiMatrix> = basis.elements().iter().map(|e| choi_of(&e.operation)).collect();
    residual_of(d.coefficients(), &chois, &choi_of(target))
}

/// Diamond norm of `ρ ↦ e^{−βH} ρ e^{−βH}`, a lower bound on γ for any QPD of it.
pub fn diamond_lower_bound_ite(h: &HermitianMatrix, beta: f64) -> f64 {
    let lambda0 = eigh(h).min_eigenvalue();
    (-2.0 * beta * lambda0).exp()
}

/// `min Σ|x_j|` subject to `Σ x_j a_j = b`, with `x = x⁺ − x⁻` split into nonnegative parts.
fn min_l1(columns: &[Vec<f64>], b: &[f64]) -> Result<Vec<f64>> {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = columns.iter().map(|_| (lp.add_var(1.0, (0.0, f64::INFINITY)), lp.add_var(1.0, (0.0, f64::INFINITY)))).collect();
    for (i, &bi) in b.iter().enumerate() {
        let mut row = LinearExpr::empty();
        for (col, &(p, m)) in columns.iter().zip(&vars) {
            if col[i] != 0.0 {
                row.add(p, col[i]);
                row.add(m, -col[i]);
            }
        }
        lp.add_constraint(row, ComparisonOp::Eq, bi);
    }
    let solution = match lp.solve() {
        Ok(SolveOutcome::Solution(s)) => s,
        Ok(SolveOutcome::Interrupted(_)) => return Err(Error::Lp("solve interrupted".into())),
        Err(e) => return Err(Error::Lp(e.to_string())),
    };
    Ok(vars.iter().map(|&(p, m)| solution.var_value(p) - solution.var_value(m)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{ebl_single_qubit, ebl_two_qubit, takagi_two_qubit};
    use crate::linalg::gates::{cx, z};
    use crate::linalg::{herm_exp, ComplexMatrix};

    fn z_shift_ite(beta: f64) -> QuantumOperation {
        let h = HermitianMatrix::new(&z() + &ComplexMatrix::identity(2)).unwrap();
        QuantumOperation::single(herm_exp(&h, -beta).unwrap()).unwrap()
    }

    #[test]
    fn real_vec_is_isometric() {
        let m = ComplexMatrix::from_fn(3, 3, |r, c| crate::linalg::C64::new((r + 2 * c) as f64, r as f64 - 0.5 * c as f64));
        let h = HermitianMatrix::new(&m + &m.dagger()).unwrap();
        let v = real_vec(&h);
        assert_eq!(v.len(), 9);
        let n2: f64 = v.iter().map(|x| x * x).sum();
        assert!((n2.sqrt() - h.as_matrix().frobenius()).abs() < 1e-12);
    }

    #[test]
    fn exact_identity_is_unit_vector() {
        let b = ebl_single_qubit();
        let d = solve_exact(&QuantumOperation::identity(1), &b).unwrap();
        assert!((d.gamma() - 1.0).abs() < 1e-10);
        assert!((d.coefficients()[0] - 1.0).abs() < 1e-10);
        assert!(d.residual() < 1e-10);
    }

    #[test]
    fn exact_basis_member() {
        let b = ebl_single_qubit();
        let d = solve_exact(&b.get(13).operation, &b).unwrap();
        for (i, q) in d.coefficients().iter().enumerate() {
            assert!((q - if i == 13 { 1.0 } else { 0.0 }).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_z_ite_reconstructs() {
        let b = ebl_single_qubit();
        let t = z_shift_ite(0.1);
        let d = solve_exact(&t, &b).unwrap();
        assert!(d.residual() <= EXACT_TOL);
        assert!((reconstruct_residual(&d, &b, &t).unwrap() - d.residual()).abs() < 1e-14);
        assert!((d.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn exact_rejects_incomplete_basis() {
        let t = takagi_two_qubit();
        match solve_exact(&QuantumOperation::identity(2), &t) {
            Err(Error::RankDeficient { rank, required }) => {
                assert_eq!(rank, 193);
                assert_eq!(required, 256);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cnot_gammas() {
        let target = QuantumOperation::unitary(cx()).unwrap();
        let ebl = solve_min_gamma(&target, &ebl_two_qubit()).unwrap();
        assert!((ebl.gamma() - 9.0).abs() < 1e-6, "{}", ebl.gamma());
        let tk = solve_min_gamma(&target, &takagi_two_qubit()).unwrap();
        assert!((tk.gamma() - 1.0).abs() < 1e-6, "{}", tk.gamma());
        assert!(ebl.residual() < 1e-8 && tk.residual() < 1e-8);
    }

    #[test]
    fn lp_never_exceeds_exact() {
        let b = ebl_single_qubit();
        let t = z_shift_ite(0.3);
        let exact = solve_exact(&t, &b).unwrap();
        let lp = solve_min_gamma(&t, &b).unwrap();
        assert!(lp.gamma() <= exact.gamma() + 1e-9);
        assert!(lp.residual() < 1e-8);
    }

    #[test]
    fn min_gamma_rejects_out_of_span() {
        // A single Pauli-X unitary lies outside the span of {I, Z}.
        let b = crate::basis::BasisSet::new(
            "iz",
            1,
            vec![
                ("I".into(), QuantumOperation::identity(1), String::new()),
                ("Z".into(), QuantumOperation::unitary(z()).unwrap(), String::new()),
            ],
            crate::basis::CompletenessClass::Unverified,
        )
        .unwrap();
        let target = QuantumOperation::unitary(crate::linalg::gates::x()).unwrap();
        assert!(matches!(solve_min_gamma(&target, &b), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn perturbed_coefficient_residual() {
        let b = ebl_single_qubit();
        let t = z_shift_ite(0.2);
        let d = solve_exact(&t, &b).unwrap();
        let eps = 1e-3;
        let mut q = d.coefficients().to_vec();
        q[4] += eps;
        let p = QPDecomposition::from_coefficients(d.basis_label(), q, 0.0).unwrap();
        let expect = eps * choi_of(&b.get(4).operation).frobenius();
        assert!((reconstruct_residual(&p, &b, &t).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn zero_coefficients_residual_is_choi_norm() {
        let b = ebl_single_qubit();
        let zero = QPDecomposition {
            basis_label: "ebl".into(),
            coefficients: vec![0.0; 16],
            gamma: 0.0,
            probabilities: vec![0.0; 16],
            signs: vec![1; 16],
            residual: 0.0,
        };
        let r = reconstruct_residual(&zero, &b, &QuantumOperation::identity(1)).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn diamond_bound_values() {
        let h = HermitianMatrix::new(z()).unwrap();
        assert_eq!(diamond_lower_bound_ite(&h, 0.0), 1.0);
        assert!((diamond_lower_bound_ite(&h, 0.5) - 1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn json_roundtrip() {
        let b = ebl_single_qubit();
        let d = solve_exact(&z_shift_ite(0.1), &b).unwrap();
        let s = serde_json::to_string(&d).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert!(v.get("basis_label").is_some() && v.get("residual").is_some());
        let back: QPDecomposition = serde_json::from_str(&s).unwrap();
        assert_eq!(back.coefficients(), d.coefficients());
        assert_eq!(back.signs(), d.signs());
    }
}
