//! Decomposition dictionaries: the 16-element single-qubit EBL set, its
//! Cartesian products, the 241-element two-qubit Takagi set, and
//! noise-composed variants.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::channels::{classify, QuantumOperation};
use crate::error::{Error, Result};
use crate::linalg::gates::{cx, h, id2, iswap, pauli, s, swap, x, y, z};
use crate::linalg::{eigh, kron, ComplexMatrix, HermitianMatrix, C64, I, ONE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompletenessClass {
    AllLinear,
    CptpOnly,
    Unverified,
}

#[derive(Clone, Debug)]
pub struct BasisElement {
    pub index: usize,
    pub label: String,
    pub operation: QuantumOperation,
    /// Gate recipe for documentation, e.g. `[H][S]^3[H]`.
    pub recipe: String,
}

#[derive(Clone, Debug)]
pub struct BasisSet {
    name: String,
    qubits: usize,
    elements: Vec<BasisElement>,
    completeness: CompletenessClass,
}

impl BasisSet {
    pub fn new(
        name: impl Into<String>,
        qubits: usize,
        elements: Vec<(String, QuantumOperation, String)>,
        completeness: CompletenessClass,
    ) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::with_capacity(elements.len());
        for (index, (label, operation, recipe)) in elements.into_iter().enumerate() {
            if operation.qubits() != qubits {
                return Err(Error::DimensionMismatch(format!(
                    "element {label} acts on {} qubits, basis on {qubits}",
                    operation.qubits()
                )));
            }
            if !seen.insert(label.clone()) {
                return Err(Error::InvalidArgument(format!("duplicate basis label {label}")));
            }
            out.push(BasisElement { index, label, operation, recipe });
        }
        Ok(Self { name: name.into(), qubits, elements: out, completeness })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[BasisElement] {
        &self.elements
    }

    pub fn get(&self, i: usize) -> &BasisElement {
        &self.elements[i]
    }

    pub fn completeness(&self) -> CompletenessClass {
        self.completeness
    }

    pub fn tp_count(&self) -> usize {
        self.elements.iter().filter(|e| e.operation.is_trace_preserving()).count()
    }

    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct KrausJson {
            re: Vec<Vec<f64>>,
            im: Vec<Vec<f64>>,
        }
        #[derive(Serialize)]
        struct ElementJson<'a> {
            index: usize,
            label: &'a str,
            recipe: &'a str,
            trace_preserving: bool,
            kraus: Vec<KrausJson>,
        }
        let elements: Vec<ElementJson> = self
            .elements
            .iter()
            .map(|e| ElementJson {
                index: e.index,
                label: &e.label,
                recipe: &e.recipe,
                trace_preserving: e.operation.is_trace_preserving(),
                kraus: e
                    .operation
                    .kraus()
                    .iter()
                    .map(|k| KrausJson {
                        re: (0..k.rows()).map(|r| k.row(r).iter().map(|z| z.re).collect()).collect(),
                        im: (0..k.rows()).map(|r| k.row(r).iter().map(|z| z.im).collect()).collect(),
                    })
                    .collect(),
            })
            .collect();
        serde_json::json!({
            "name": self.name,
            "qubits": self.qubits,
            "completeness": self.completeness,
            "elements": elements,
        })
    }
}

fn unitary_entry(label: &str, u: ComplexMatrix, recipe: &str) -> (String, QuantumOperation, String) {
    let op = QuantumOperation::unitary(u).expect("closed-form basis unitary");
    (label.to_string(), op, recipe.to_string())
}

fn projective_entry(label: &str, k: ComplexMatrix, recipe: &str) -> (String, QuantumOperation, String) {
    let op = QuantumOperation::projective(k).expect("closed-form rank-1 basis operation");
    (label.to_string(), op, recipe.to_string())
}

fn ebl_entries() -> Vec<(String, QuantumOperation, String)> {
    let one = id2();
    let r = |p: &ComplexMatrix| (&one + &p.scale(I)).scale_real(FRAC_1_SQRT_2);
    let sum = |a: &ComplexMatrix, b: &ComplexMatrix| (a + b).scale_real(FRAC_1_SQRT_2);
    let half = |a: &ComplexMatrix, b: &ComplexMatrix| (a + b).scale_real(0.5);
    vec![
        unitary_entry("[1]", one.clone(), ""),
        unitary_entry("[X]", x(), "[H][S]^2[H]"),
        unitary_entry("[Y]", y(), "[H][S]^2[H][S]^2"),
        unitary_entry("[Z]", z(), "[S]^2"),
        unitary_entry("[R_X]", r(&x()), "[H][S]^3[H]"),
        unitary_entry("[R_Y]", r(&y()), "[S][H][S]^3[H][S]^3"),
        unitary_entry("[R_Z]", r(&z()), "[S]^3"),
        unitary_entry("[R_YZ]", sum(&y(), &z()), "[H][S]^3[H][S]^2"),
        unitary_entry("[R_ZX]", sum(&z(), &x()), "[S]^3[H][S]^3[H][S]^3"),
        unitary_entry("[R_XY]", sum(&x(), &y()), "[H][S]^2[H][S]^3"),
        projective_entry("[pi_X]", half(&one, &x()), "[S][H][S][H][P0][H][S]^3[H][S]^3"),
        projective_entry("[pi_Y]", half(&one, &y()), "[H][S]^3[H][P0][H][S][H]"),
        projective_entry("[pi_Z]", half(&one, &z()), "[P0]"),
        projective_entry("[pi_YZ]", half(&y(), &z().scale(I)), "[S][H][S][H][P0][H][S][H][S]^3"),
        projective_entry("[pi_ZX]", half(&z(), &x().scale(I)), "[H][S]^3[H][P0][H][S][H][S]^2"),
        projective_entry("[pi_XY]", half(&x(), &y().scale(I)), "[P0][H][S]^2[H]"),
    ]
}

/// The 16-element single-qubit basis: 10 Clifford conjugations and 6 rank-1 projective maps.
pub fn ebl_single_qubit() -> BasisSet {
    BasisSet::new("ebl", 1, ebl_entries(), CompletenessClass::AllLinear).expect("static basis")
}

/// Cartesian product `a × b`; element `i·|b| + j` is `a_i ⊗ b_j`.
pub fn product_basis(a: &BasisSet, b: &BasisSet) -> BasisSet {
    let mut entries = Vec::with_capacity(a.len() * b.len());
    for ea in a.elements() {
        for eb in b.elements() {
            entries.push((
                format!("{}{}", ea.label, eb.label),
                ea.operation.tensor(&eb.operation),
                format!("{} | {}", ea.recipe, eb.recipe),
            ));
        }
    }
    let completeness = match (a.completeness(), b.completeness()) {
        (CompletenessClass::AllLinear, CompletenessClass::AllLinear) => CompletenessClass::AllLinear,
        (CompletenessClass::Unverified, _) | (_, CompletenessClass::Unverified) => CompletenessClass::Unverified,
        _ => CompletenessClass::CptpOnly,
    };
    BasisSet::new(format!("{}x{}", a.name(), b.name()), a.qubits() + b.qubits(), entries, completeness)
        .expect("products of well-formed bases are well formed")
}

pub fn ebl_two_qubit() -> BasisSet {
    let e = ebl_single_qubit();
    product_basis(&e, &e)
}

/// Conjugating unitaries `V` (the channel `V† ∘ U ∘ V` has Kraus operator `V† U V`).
fn conjugators(spec: &[(&str, ComplexMatrix)], u: &ComplexMatrix) -> Vec<(String, ComplexMatrix)> {
    spec.iter().map(|(name, v)| (name.to_string(), &(&v.dagger() * u) * v)).collect()
}

fn takagi_entangling() -> Vec<(String, QuantumOperation, String)> {
    let k = &s() * &h();
    let kd = k.dagger();
    let one = id2();
    let nine: Vec<(&str, ComplexMatrix)> = vec![
        ("I", ComplexMatrix::identity(4)),
        ("K1", kron(&k, &one)),
        ("K2", kron(&one, &k)),
        ("K1^dag", kron(&kd, &one)),
        ("K2^dag", kron(&one, &kd)),
        ("K1 K2", kron(&k, &k)),
        ("K1 K2^dag", kron(&k, &kd)),
        ("K1^dag K2", kron(&kd, &k)),
        ("K1^dag K2^dag", kron(&kd, &kd)),
    ];
    let swap_conj: Vec<(&str, ComplexMatrix)> = vec![
        ("I", ComplexMatrix::identity(4)),
        ("K2", kron(&one, &k)),
        ("K2^dag", kron(&one, &kd)),
    ];
    let iswap_conj: Vec<(&str, ComplexMatrix)> = vec![
        ("I", ComplexMatrix::identity(4)),
        ("K1", kron(&k, &one)),
        ("K2", kron(&one, &k)),
        ("K1 K2", kron(&k, &k)),
        ("K2^dag", kron(&one, &kd)),
        ("K1 K2^dag", kron(&k, &kd)),
    ];

    let x1 = kron(&x(), &one);
    let h1 = kron(&h(), &one);
    let cs = ComplexMatrix::diagonal(&[ONE, ONE, ONE, I]);
    let ch = {
        let mut m = ComplexMatrix::identity(4);
        let hm = h();
        for r in 0..2 {
            for c in 0..2 {
                m[(2 + r, 2 + c)] = hm[(r, c)];
            }
        }
        m
    };
    // NOT controlled on the ±1 eigenstates of the Hadamard gate.
    let ch_x = {
        let es = eigh(&HermitianMatrix::new(h()).expect("Hadamard is Hermitian"));
        let minus = es.eigenvectors.column(0);
        let plus = es.eigenvectors.column(1);
        &kron(&ComplexMatrix::outer(&plus, &plus), &one) + &kron(&ComplexMatrix::outer(&minus, &minus), &x())
    };

    let families: Vec<(&str, ComplexMatrix, &Vec<(&str, ComplexMatrix)>)> = vec![
        ("CX", cx(), &nine),
        ("X1 CX X1", &(&x1 * &cx()) * &x1, &nine),
        ("CS", cs, &nine),
        ("CH", ch, &nine),
        ("C_H X", ch_x, &nine),
        ("CX H1", &cx() * &h1, &nine),
        ("SWAP", swap(), &swap_conj),
        ("iSWAP", iswap(), &iswap_conj),
        ("SWAP H1", &swap() * &h1, &nine),
    ];
    let mut out = Vec::with_capacity(72);
    for (family, u, conj) in families {
        for (cname, kraus) in conjugators(conj, &u) {
            let op = QuantumOperation::unitary(kraus).expect("conjugated Clifford is unitary");
            out.push((String::new(), op, format!("{family} conj {cname}")));
        }
    }
    out
}

fn label_takagi(entries: &mut [(String, QuantumOperation, String)]) {
    for (i, e) in entries.iter_mut().enumerate() {
        e.0 = format!("B_{}", i + 1);
    }
}

/// The 241-element two-qubit Takagi set, built literally from its table: the 169
/// products of EBL elements 1–13 (which include the three trace-decreasing
/// projections `[pi_X]`, `[pi_Y]`, `[pi_Z]`) followed by 72 conjugated entangling
/// Cliffords. The Choi span of this set has dimension 193 and contains the
/// two-qubit ITE maps used in the γ sweeps.
pub fn takagi_two_qubit() -> BasisSet {
    let first13: Vec<_> = ebl_entries().into_iter().take(13).collect();
    let mut entries = Vec::with_capacity(241);
    for a in &first13 {
        for b in &first13 {
            entries.push((String::new(), a.1.tensor(&b.1), format!("{}{}", a.0, b.0)));
        }
    }
    entries.extend(takagi_entangling());
    label_takagi(&mut entries);
    BasisSet::new("takagi", 2, entries, CompletenessClass::Unverified).expect("static basis")
}

/// All-CPTP variant of the Takagi set: the three projections are replaced by the
/// trace-preserving preparation channels `ρ ↦ Tr(ρ)|ψ⟩⟨ψ|` onto `|+⟩`, `|+i⟩`, `|0⟩`.
/// Its 241 Choi matrices are linearly independent and span the affine hull of
/// two-qubit CPTP maps.
pub fn takagi_two_qubit_cptp() -> BasisSet {
    let mut singles: Vec<(String, QuantumOperation)> =
        ebl_entries().into_iter().take(10).map(|(l, op, _)| (l, op)).collect();
    let r = FRAC_1_SQRT_2;
    let preps = [
        ("[prep_+X]", [C64::new(r, 0.0), C64::new(r, 0.0)]),
        ("[prep_+Y]", [C64::new(r, 0.0), C64::new(0.0, r)]),
        ("[prep_0]", [ONE, C64::new(0.0, 0.0)]),
    ];
    for (label, psi) in preps {
        let e0 = [ONE, C64::new(0.0, 0.0)];
        let e1 = [C64::new(0.0, 0.0), ONE];
        let op = QuantumOperation::from_kraus(vec![ComplexMatrix::outer(&psi, &e0), ComplexMatrix::outer(&psi, &e1)])
            .expect("preparation channel");
        singles.push((label.to_string(), op));
    }
    let mut entries = Vec::with_capacity(241);
    for a in &singles {
        for b in &singles {
            entries.push((String::new(), a.1.tensor(&b.1), format!("{}{}", a.0, b.0)));
        }
    }
    entries.extend(takagi_entangling());
    label_takagi(&mut entries);
    BasisSet::new("takagi-cptp", 2, entries, CompletenessClass::CptpOnly).expect("static basis")
}

fn pauli_strings(k: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    for _ in 0..k {
        out = out.into_iter().flat_map(|p| "IXYZ".chars().map(move |c| format!("{p}{c}"))).collect();
    }
    out
}

pub fn pauli_matrix(label: &str) -> ComplexMatrix {
    label.chars().fold(ComplexMatrix::identity(1), |acc, c| kron(&acc, &pauli(c)))
}

/// `ρ ↦ (1 − p)ρ + p·Tr(ρ)·I/2^k`
pub fn depolarizing(qubits: usize, p: f64) -> Result<QuantumOperation> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("depolarizing parameter {p} outside [0, 1]")));
    }
    let d2 = (1usize << (2 * qubits)) as f64;
    let kraus = pauli_strings(qubits)
        .iter()
        .enumerate()
        .filter_map(|(i, label)| {
            let w = if i == 0 { 1.0 - p + p / d2 } else { p / d2 };
            (w > 0.0).then(|| pauli_matrix(label).scale_real(w.sqrt()))
        })
        .collect();
    QuantumOperation::from_kraus(kraus)
}

/// Single-qubit Pauli channel `ρ ↦ (1−px−py−pz)ρ + px XρX + py YρY + pz ZρZ`.
pub fn pauli_channel(px: f64, py: f64, pz: f64) -> Result<QuantumOperation> {
    let p0 = 1.0 - px - py - pz;
    if [px, py, pz, p0].iter().any(|&w| !(0.0..=1.0).contains(&w)) {
        return Err(Error::InvalidArgument("Pauli channel weights must form a distribution".into()));
    }
    let kraus = [(p0, id2()), (px, x()), (py, y()), (pz, z())]
        .into_iter()
        .filter(|(w, _)| *w > 0.0)
        .map(|(w, m)| m.scale_real(w.sqrt()))
        .collect();
    QuantumOperation::from_kraus(kraus)
}

/// Replaces every element `B_i` by `N ∘ B_i`, keeping labels and indices.
pub fn apply_noise(set: &BasisSet, noise: &QuantumOperation) -> Result<BasisSet> {
    let cls = classify(noise);
    if noise.qubits() != set.qubits() || !cls.cp || !cls.tp {
        return Err(Error::NotCptp { expected: set.qubits() });
    }
    let entries = set
        .elements()
        .iter()
        .map(|e| Ok((e.label.clone(), e.operation.then(noise)?, e.recipe.clone())))
        .collect::<Result<Vec<_>>>()?;
    BasisSet::new(format!("noisy-{}", set.name()), set.qubits(), entries, CompletenessClass::Unverified)
}
