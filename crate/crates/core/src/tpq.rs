//! Thermal pure quantum states from random Clifford circuits.
//!
//! Cliffords are drawn exactly uniformly with the Bravyi–Maslov canonical form
//! (quantum Mallows permutation plus Borel layers), represented as a symplectic
//! tableau, and optionally expanded into an explicit unitary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{pauli_matrix, takagi_two_qubit};
use crate::channels::{DensityOperator, StateVector};
use crate::error::{Error, Result};
use crate::ite::{shift_to_psd, trotter_plan, LocalHamiltonian};
use crate::linalg::{eigh, herm_exp, ComplexMatrix, HermitianMatrix, C64, ZERO};
use crate::qpd::{QPDecomposition, QpdSolver};
use crate::sampler::{run_algorithm2_multi, InitialState, Measurement, SamplerConfig, Step};

pub const MAX_QUBITS: usize = 8;

/// Order of the `n`-qubit Clifford group modulo phases: `2^{n²+2n} Π (4^j − 1)`.
pub fn clifford_group_order(n: usize) -> u128 {
    let mut order: u128 = 1 << (n * n + 2 * n);
    for j in 1..=n as u32 {
        order *= 4u128.pow(j) - 1;
    }
    order
}

/// SplitMix64 mixing of a seed with a tag and an index.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Signed Pauli string `(−1)^r · i^{x·z} · X^x Z^z` with bit `q` of the masks for qubit `q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliString {
    pub x: u16,
    pub z: u16,
    pub sign: bool,
}

impl PauliString {
    pub fn label(&self, n: usize) -> String {
        (0..n)
            .map(|q| match ((self.x >> q) & 1, (self.z >> q) & 1) {
                (0, 0) => 'I',
                (1, 0) => 'X',
                (1, 1) => 'Y',
                _ => 'Z',
            })
            .collect()
    }

    pub fn matrix(&self, n: usize) -> ComplexMatrix {
        let m = pauli_matrix(&self.label(n));
        if self.sign {
            m.scale_real(-1.0)
        } else {
            m
        }
    }

    /// Applies the operator to a state vector (qubit 0 is the most significant bit).
    pub fn apply(&self, n: usize, psi: &[C64]) -> Vec<C64> {
        let to_mask = |bits: u16| (0..n).filter(|q| (bits >> q) & 1 == 1).map(|q| 1usize << (n - 1 - q)).sum::<usize>();
        let (xm, zm) = (to_mask(self.x), to_mask(self.z));
        let y = (self.x & self.z).count_ones();
        let mut phase = match y % 4 {
            0 => C64::new(1.0, 0.0),
            1 => C64::new(0.0, 1.0),
            2 => C64::new(-1.0, 0.0),
            _ => C64::new(0.0, -1.0),
        };
        if self.sign {
            phase = -phase;
        }
        let mut out = vec![ZERO; psi.len()];
        for (k, &a) in psi.iter().enumerate() {
            let s = if (zm & k).count_ones() % 2 == 1 { -phase } else { phase };
            out[k ^ xm] = s * a;
        }
        out
    }
}

/// Images of `X_0 … X_{n−1}` (rows `0..n`) and `Z_0 … Z_{n−1}` (rows `n..2n`).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CliffordTableau {
    pub n: usize,
    pub rows: Vec<PauliString>,
}

fn symplectic(a: &PauliString, b: &PauliString) -> u32 {
    ((a.x & b.z).count_ones() + (a.z & b.x).count_ones()) % 2
}

impl CliffordTableau {
    pub fn sample<R: Rng>(n: usize, rng: &mut R) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::InvalidArgument(format!("Clifford sampling supports 1..={MAX_QUBITS} qubits, got {n}")));
        }
        let (had, perm) = sample_qmallows(n, rng);
        let mut gamma1 = diag_random(n, rng);
        let mut gamma2 = diag_random(n, rng);
        let mut delta1 = identity_bits(n);
        let mut delta2 = identity_bits(n);
        fill_tril(&mut gamma1, rng, true);
        fill_tril(&mut gamma2, rng, true);
        fill_tril(&mut delta1, rng, false);
        fill_tril(&mut delta2, rng, false);

        let table1 = block_table(&delta1, &gamma1);
        let table2 = block_table(&delta2, &gamma2);
        // Row permutation, then Hadamards swap the X and Z rows of their qubits.
        let mut table: Vec<Vec<u8>> = (0..2 * n)
            .map(|r| if r < n { table2[perm[r]].clone() } else { table2[n + perm[r - n]].clone() })
            .collect();
        for q in (0..n).filter(|&q| had[q]) {
            table.swap(q, n + q);
        }
        let product = mat_mul_mod2(&table1, &table);
        let rows = product
            .iter()
            .map(|row| {
                let mut p = PauliString { x: 0, z: 0, sign: rng.gen::<bool>() };
                for q in 0..n {
                    p.x |= (row[q] as u16) << q;
                    p.z |= (row[n + q] as u16) << q;
                }
                p
            })
            .collect();
        Ok(Self { n, rows })
    }

    /// Symplectic form checks: images of `X_i`, `Z_j` keep the Pauli commutation relations.
    pub fn is_symplectic(&self) -> bool {
        let n = self.n;
        (0..2 * n).all(|i| {
            (0..2 * n).all(|j| {
                let expected = u32::from((i < n && j == i + n) || (j < n && i == j + n));
                symplectic(&self.rows[i], &self.rows[j]) == expected
            })
        })
    }

    /// Explicit unitary (defined up to a global phase) with the tableau's conjugation action.
    pub fn unitary(&self) -> ComplexMatrix {
        let n = self.n;
        let dim = 1usize << n;
        // U|0⟩: the joint +1 eigenvector of the Z images.
        let project = |mut v: Vec<C64>| {
            for s in &self.rows[n..] {
                let sv = s.apply(n, &v);
                for (a, b) in v.iter_mut().zip(sv) {
                    *a = (*a + b) * 0.5;
                }
            }
            v
        };
        let mut zero_image = None;
        for k in 0..dim {
            let mut e = vec![ZERO; dim];
            e[k] = C64::new(1.0, 0.0);
            let v = project(e);
            let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            if norm2 > 0.5 / dim as f64 {
                let norm = norm2.sqrt();
                zero_image = Some(v.into_iter().map(|z| z / norm).collect::<Vec<_>>());
                break;
            }
        }
        let zero_image = zero_image.expect("stabilizer group of a valid tableau has a +1 eigenvector");
        // Column |x⟩ is Π_q (image of X_q)^{x_q} applied to U|0⟩, built along a Gray code.
        let mut u = ComplexMatrix::zeros(dim, dim);
        let mut col = zero_image;
        let mut prev_gray = 0usize;
        for step in 0..dim {
            let gray = step ^ (step >> 1);
            if step > 0 {
                let flipped = (gray ^ prev_gray).trailing_zeros() as usize;
                let q = n - 1 - flipped;
                col = self.rows[q].apply(n, &col);
            }
            for (r, &a) in col.iter().enumerate() {
                u[(r, gray)] = a;
            }
            prev_gray = gray;
        }
        u
    }
}

#[derive(Clone, Debug)]
pub struct CliffordElement {
    pub tableau: CliffordTableau,
    pub unitary: ComplexMatrix,
}

impl CliffordElement {
    pub fn n(&self) -> usize {
        self.tableau.n
    }

    /// `U|0…0⟩`.
    pub fn zero_image(&self) -> Vec<C64> {
        self.unitary.column(0)
    }
}

pub fn random_clifford_with<R: Rng>(n: usize, rng: &mut R) -> Result<CliffordElement> {
    let tableau = CliffordTableau::sample(n, rng)?;
    let unitary = tableau.unitary();
    Ok(CliffordElement { tableau, unitary })
}

pub fn random_clifford(n: usize, seed: u64) -> Result<CliffordElement> {
    random_clifford_with(n, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn sample_qmallows<R: Rng>(n: usize, rng: &mut R) -> (Vec<bool>, Vec<usize>) {
    let mut had = vec![false; n];
    let mut perm = vec![0; n];
    let mut inds: Vec<usize> = (0..n).collect();
    for i in 0..n {
        let m = n - i;
        let eps = 4f64.powi(-(m as i32));
        let r: f64 = rng.gen();
        let index = -((r + (1.0 - r) * eps).log2().ceil()) as i64;
        let index = index as usize;
        had[i] = index < m;
        let k = if index < m { index } else { 2 * m - index - 1 };
        perm[i] = inds.remove(k);
    }
    (had, perm)
}

fn identity_bits(n: usize) -> Vec<Vec<u8>> {
    (0..n).map(|i| (0..n).map(|j| u8::from(i == j)).collect()).collect()
}

fn diag_random<R: Rng>(n: usize, rng: &mut R) -> Vec<Vec<u8>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { rng.gen_range(0..2) } else { 0 }).collect()).collect()
}

fn fill_tril<R: Rng>(m: &mut [Vec<u8>], rng: &mut R, symmetric: bool) {
    let n = m.len();
    for i in 1..n {
        for j in 0..i {
            let v = rng.gen_range(0..2);
            m[i][j] = v;
            if symmetric {
                m[j][i] = v;
            }
        }
    }
}

fn mat_mul_mod2(a: &[Vec<u8>], b: &[Vec<u8>]) -> Vec<Vec<u8>> {
    let inner = b.len();
    let cols = b[0].len();
    a.iter()
        .map(|row| (0..cols).map(|c| (0..inner).fold(0u8, |acc, k| acc ^ (row[k] & b[k][c]))).collect())
        .collect()
}

/// Inverse of a unit lower-triangular matrix over GF(2).
fn inverse_unit_tril(m: &[Vec<u8>]) -> Vec<Vec<u8>> {
    let n = m.len();
    let mut inv = identity_bits(n);
    for i in 0..n {
        for j in 0..i {
            // Row i of inv: e_i − Σ_{k<i} m[i][k]·inv[k]
            if m[i][j] == 1 {
                let row_j = inv[j].clone();
                for (a, b) in inv[i].iter_mut().zip(row_j) {
                    *a ^= b;
                }
            }
        }
    }
    inv
}

/// `[[δ, 0], [γδ, (δ⁻¹)ᵀ]]`
fn block_table(delta: &[Vec<u8>], gamma: &[Vec<u8>]) -> Vec<Vec<u8>> {
    let n = delta.len();
    let prod = mat_mul_mod2(gamma, delta);
    let inv = inverse_unit_tril(delta);
    let mut t = vec![vec![0u8; 2 * n]; 2 * n];
    for i in 0..n {
        for j in 0..n {
            t[i][j] = delta[i][j];
            t[n + i][j] = prod[i][j];
            t[n + i][n + j] = inv[j][i];
        }
    }
    t
}

/// Uniform non-identity Pauli string, returned with its label and matrix.
pub fn random_pauli_with<R: Rng>(n: usize, rng: &mut R) -> Result<(String, HermitianMatrix)> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::InvalidArgument(format!("Pauli sampling supports 1..={MAX_QUBITS} qubits, got {n}")));
    }
    let idx: u32 = rng.gen_range(1..1u32 << (2 * n));
    let label: String = (0..n).map(|q| ['I', 'X', 'Y', 'Z'][((idx >> (2 * (n - 1 - q))) & 3) as usize]).collect();
    let m = HermitianMatrix::new(pauli_matrix(&label))?;
    Ok((label, m))
}

pub fn random_pauli(n: usize, seed: u64) -> Result<HermitianMatrix> {
    Ok(random_pauli_with(n, &mut ChaCha8Rng::seed_from_u64(seed))?.1)
}

#[derive(Clone, Debug)]
pub struct GibbsState {
    pub rho: DensityOperator,
    pub partition: f64,
    pub log_partition: f64,
}

/// `e^{−βH} / Tr e^{−βH}`, evaluated with the ground energy factored out.
pub fn gibbs_state(h: &HermitianMatrix, beta: f64) -> Result<GibbsState> {
    if h.dim() > 1 << MAX_QUBITS {
        return Err(Error::InvalidArgument(format!("Gibbs state limited to {MAX_QUBITS} qubits")));
    }
    let es = eigh(h);
    let l0 = es.min_eigenvalue();
    let m = es.map_spectrum(|l| (-beta * (l - l0)).exp());
    let z_shifted = m.trace().re;
    let rho = DensityOperator::new(m.scale_real(1.0 / z_shifted))?;
    let log_partition = z_shifted.ln() - beta * l0;
    Ok(GibbsState { rho, partition: log_partition.exp(), log_partition })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TpqMode {
    ExactIte,
    SimulatedIte,
}

impl TpqMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TpqMode::ExactIte => "exact-ite",
            TpqMode::SimulatedIte => "simulated-ite",
        }
    }
}

#[derive(Clone, Debug)]
pub struct TpqConfig {
    pub hamiltonian: LocalHamiltonian,
    /// `β` in `e^{−βH}U|0⟩`; the reference Gibbs state uses `2β`.
    pub ite_exponent: f64,
    pub states: usize,
    pub observables: usize,
    pub seed: u64,
    pub mode: TpqMode,
    /// QPD samples per state (simulated mode).
    pub samples: usize,
    pub measurement: Measurement,
    /// Trotter repetitions (simulated mode).
    pub trotter_r: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpqRecord {
    pub n: usize,
    pub mode: TpqMode,
    pub beta: f64,
    pub state_index: usize,
    pub pauli_string: String,
    pub tpq_value: f64,
    pub gibbs_value: f64,
    pub abs_error: f64,
    /// Standard error of `tpq_value` (simulated mode).
    pub tpq_se: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpqSummary {
    pub n: usize,
    pub mode: TpqMode,
    pub beta: f64,
    pub gibbs_beta: f64,
    pub mean_error: f64,
    /// Standard error of `mean_error` over the state × observable cells.
    pub mean_error_se: f64,
    /// Monte-Carlo standard error propagated to `mean_error` (simulated mode).
    pub sampling_se: Option<f64>,
    pub gamma_total: Option<f64>,
    pub records: Vec<TpqRecord>,
}

impl TpqRecord {
    pub const CSV_HEADER: &'static str = "n,mode,beta,state_index,pauli_string,tpq_value,gibbs_value,abs_error";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.n,
            self.mode.as_str(),
            self.beta,
            self.state_index,
            self.pauli_string,
            self.tpq_value,
            self.gibbs_value,
            self.abs_error
        )
    }
}

impl TpqSummary {
    /// Aggregate row in the per-cell CSV layout (`state_index` = `mean`).
    pub fn csv_aggregate_row(&self) -> String {
        format!("{},{},{},mean,*,,,{}", self.n, self.mode.as_str(), self.beta, self.mean_error)
    }
}

const TAG_PAULI: u64 = 1;
const TAG_CLIFFORD: u64 = 2;
const TAG_SAMPLER: u64 = 3;

/// Average `|⟨ψ|O|ψ⟩ − Tr(ρ_{2β} O)|` over random TPQ states and Pauli observables.
pub fn tpq_experiment(cfg: &TpqConfig) -> Result<TpqSummary> {
    let n = cfg.hamiltonian.qubits();
    if cfg.states == 0 || cfg.observables == 0 {
        return Err(Error::InvalidArgument("TPQ needs at least one state and one observable".into()));
    }
    if n > MAX_QUBITS {
        return Err(Error::InvalidArgument(format!("TPQ limited to {MAX_QUBITS} qubits")));
    }
    let beta = cfg.ite_exponent;
    let h = cfg.hamiltonian.dense();
    let gibbs = gibbs_state(&h, 2.0 * beta)?;
    let mut pauli_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TAG_PAULI, n as u64));
    let paulis: Vec<(String, HermitianMatrix)> =
        (0..cfg.observables).map(|_| random_pauli_with(n, &mut pauli_rng)).collect::<Result<_>>()?;
    let gibbs_values: Vec<f64> = paulis.iter().map(|(_, p)| gibbs.rho.expectation(p)).collect();

    let cliffords: Vec<CliffordElement> = (0..cfg.states)
        .map(|i| random_clifford(n, derive_seed(cfg.seed, TAG_CLIFFORD, i as u64)))
        .collect::<Result<_>>()?;

    let (values, gamma_total): (Vec<Vec<(f64, Option<f64>)>>, Option<f64>) = match cfg.mode {
        TpqMode::ExactIte => {
            let k = herm_exp(&h, -beta)?;
            let vals = cliffords
                .par_iter()
                .map(|c| {
                    let psi = StateVector::new(k.mul_vec(&c.zero_image())?)?;
                    Ok(paulis.iter().map(|(_, p)| (p.expectation_vec(psi.amplitudes()), None)).collect())
                })
                .collect::<Result<Vec<Vec<_>>>>()?;
            (vals, None)
        }
        TpqMode::SimulatedIte => {
            let shifted = shift_to_psd(&cfg.hamiltonian).hamiltonian;
            let plan = trotter_plan(&shifted, beta, cfg.trotter_r)?;
            let basis = takagi_two_qubit();
            if shifted.max_locality() != 2 || shifted.terms().iter().any(|t| t.support.len() != 2) {
                return Err(Error::InvalidArgument("simulated TPQ requires two-local terms".into()));
            }
            let solver = QpdSolver::new(&basis);
            let classes = shifted.term_classes();
            let mut qpds: Vec<Option<QPDecomposition>> = vec![None; shifted.len()];
            for (t, &cls) in classes.iter().enumerate() {
                if cls == t {
                    qpds[t] = Some(solver.solve_min_gamma(&plan.steps[t].op)?);
                }
            }
            let qpds: Vec<QPDecomposition> = classes.iter().map(|&c| qpds[c].clone().expect("class leader solved")).collect();
            let steps: Vec<Step> = plan
                .steps
                .iter()
                .map(|s| Step { qpd: &qpds[s.term], basis: &basis, support: &s.support })
                .collect();
            let observables: Vec<HermitianMatrix> = paulis.iter().map(|(_, p)| p.clone()).collect();
            let mut gamma = None;
            let mut vals = Vec::with_capacity(cliffords.len());
            for (i, c) in cliffords.iter().enumerate() {
                let sc = SamplerConfig::new(cfg.samples, cfg.measurement, derive_seed(cfg.seed, TAG_SAMPLER, i as u64));
                let init = InitialState::Pure(StateVector::new(c.zero_image())?);
                let res = run_algorithm2_multi(&steps, init, &observables, &sc)?;
                gamma = Some(res[0].gamma_total);
                vals.push(
                    res.iter()
                        .map(|r| match r.ratio {
                            Some(v) => Ok((v, r.ratio_se)),
                            None => Err(Error::ZeroTrace),
                        })
                        .collect::<Result<Vec<_>>>()?,
                );
            }
            (vals, gamma)
        }
    };

    let mut records = Vec::with_capacity(cfg.states * cfg.observables);
    for (i, row) in values.iter().enumerate() {
        for (((label, _), &g), &(v, se)) in paulis.iter().zip(&gibbs_values).zip(row) {
            records.push(TpqRecord {
                n,
                mode: cfg.mode,
                beta,
                state_index: i,
                pauli_string: label.clone(),
                tpq_value: v,
                gibbs_value: g,
                abs_error: (v - g).abs(),
                tpq_se: se,
            });
        }
    }
    let count = records.len() as f64;
    let mean_error = records.iter().map(|r| r.abs_error).sum::<f64>() / count;
    let var = if records.len() > 1 {
        records.iter().map(|r| (r.abs_error - mean_error).powi(2)).sum::<f64>() / (count - 1.0)
    } else {
        0.0
    };
    let sampling_se = (cfg.mode == TpqMode::SimulatedIte)
        .then(|| records.iter().map(|r| r.tpq_se.unwrap_or(0.0).powi(2)).sum::<f64>().sqrt() / count);
    Ok(TpqSummary {
        n,
        mode: cfg.mode,
        beta,
        gibbs_beta: 2.0 * beta,
        mean_error,
        mean_error_se: (var / count).sqrt(),
        sampling_se,
        gamma_total,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ite::heisenberg_chain_1d;
    use std::collections::HashMap;

    #[test]
    fn group_orders() {
        assert_eq!(clifford_group_order(1), 24);
        assert_eq!(clifford_group_order(2), 11520);
    }

    #[test]
    fn sampled_tableaux_are_symplectic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..=5 {
            for _ in 0..50 {
                assert!(CliffordTableau::sample(n, &mut rng).unwrap().is_symplectic());
            }
        }
    }

    #[test]
    fn unitary_matches_tableau() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..=3 {
            for _ in 0..20 {
                let c = random_clifford_with(n, &mut rng).unwrap();
                let u = &c.unitary;
                let id = ComplexMatrix::identity(1 << n);
                assert!((&u.dagger() * u).approx_eq(&id, 1e-9));
                for q in 0..n {
                    for (row, gen) in [(q, 1u16 << q), (n + q, 0)] {
                        let p = if row < n {
                            PauliString { x: gen, z: 0, sign: false }
                        } else {
                            PauliString { x: 0, z: 1 << q, sign: false }
                        };
                        let conj = &(u * &p.matrix(n)) * &u.dagger();
                        assert!(conj.approx_eq(&c.tableau.rows[row].matrix(n), 1e-9), "n={n} row={row}");
                    }
                }
            }
        }
    }

    #[test]
    fn single_qubit_cliffords_cover_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seen: HashMap<CliffordTableau, usize> = HashMap::new();
        for _ in 0..2400 {
            *seen.entry(CliffordTableau::sample(1, &mut rng).unwrap()).or_default() += 1;
        }
        assert_eq!(seen.len(), 24);
    }

    #[test]
    fn pauli_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let (label, p) = random_pauli_with(3, &mut rng).unwrap();
            assert_ne!(label, "III");
            let sq = p.as_matrix() * p.as_matrix();
            assert!(sq.approx_eq(&ComplexMatrix::identity(8), 1e-12));
            assert!((crate::linalg::operator_norm(p.as_matrix()) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn pauli_apply_matches_dense() {
        let psi: Vec<C64> = (0..8).map(|k| C64::new(k as f64, 1.0 - k as f64)).collect();
        let p = PauliString { x: 0b101, z: 0b110, sign: true };
        let dense = p.matrix(3).mul_vec(&psi).unwrap();
        let fast = p.apply(3, &psi);
        for (a, b) in dense.iter().zip(fast) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn gibbs_limits() {
        let h = crate::ite::heisenberg_2q_term(true);
        let g0 = gibbs_state(&h, 0.0).unwrap();
        assert!(g0.rho.matrix().approx_eq(&ComplexMatrix::identity(4).scale_real(0.25), 1e-12));
        let g = gibbs_state(&h, 40.0).unwrap();
        // Triplet ground space: 3-fold degenerate at energy 0.
        let ev = eigh(&HermitianMatrix::new(g.rho.matrix().clone()).unwrap()).eigenvalues;
        assert!(ev[0].abs() < 1e-12);
        for l in &ev[1..] {
            assert!((l - 1.0 / 3.0).abs() < 1e-12);
        }
        let mut last = f64::INFINITY;
        for k in 0..10 {
            let e = gibbs_state(&h, 0.2 * k as f64).unwrap().rho.expectation(&h);
            assert!(e < last);
            last = e;
        }
    }

    #[test]
    fn exact_tpq_at_zero_beta_is_design_average() {
        let h = heisenberg_chain_1d(3, 1.0, 0.0).unwrap();
        let cfg = TpqConfig {
            hamiltonian: h,
            ite_exponent: 0.0,
            states: 400,
            observables: 3,
            seed: 5,
            mode: TpqMode::ExactIte,
            samples: 0,
            measurement: Measurement::Exact,
            trotter_r: 1,
        };
        let s = tpq_experiment(&cfg).unwrap();
        for o in 0..3 {
            let mean: f64 =
                s.records.iter().filter(|r| r.state_index < 400).skip(o).step_by(3).map(|r| r.tpq_value).sum::<f64>()
                    / 400.0;
            // Stabilizer expectations of a Pauli are 0 or ±1; the mean of ±1 draws over 400 states.
            assert!(mean.abs() < 0.2, "{mean}");
        }
        for r in &s.records {
            assert!(r.gibbs_value.abs() < 1e-12);
        }
    }
}
