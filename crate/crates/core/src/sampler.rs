//! Monte-Carlo estimation of rescaled expectation values from QPDs.
//!
//! Every trial draws from its own ChaCha stream keyed by `(seed, trial)`, and trials
//! are summed in fixed-size chunks merged in chunk order, so results are bitwise
//! identical for any worker count.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::channels::{DensityOperator, LocalLayout, QuantumOperation, StateVector};
use crate::error::{Error, Result};
use crate::linalg::{eigh, operator_norm, vec_norm, ComplexMatrix, HermitianMatrix, C64};
use crate::qpd::QPDecomposition;

/// Trials per deterministic work unit.
pub const CHUNK: usize = 4096;

const NORM_TOL: f64 = 1e-9;
const EIGEN_GROUP_TOL: f64 = 1e-9;

/// `⌈2γ²/ε²·ln(1/δ)⌉`; pass `γ^R` for an `R`-step sequence.
pub fn required_samples(gamma_total: f64, eps: f64, delta: f64) -> Result<usize> {
    if eps.is_nan() || eps <= 0.0 || delta.is_nan() || delta <= 0.0 || delta >= 1.0 {
        return Err(Error::InvalidArgument(format!("need eps > 0 and 0 < delta < 1, got {eps}, {delta}")));
    }
    let n = 2.0 * gamma_total * gamma_total / (eps * eps) * -delta.ln();
    // Guard against the product landing one ulp above an integer.
    Ok((n * (1.0 - 1e-12)).ceil().max(1.0) as usize)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measurement {
    /// Average of this many projective measurements of the observable.
    Shots(usize),
    /// The exact conditional expectation of the observable.
    Exact,
}

impl Measurement {
    pub fn shots(&self) -> Option<usize> {
        match self {
            Measurement::Shots(s) => Some(*s),
            Measurement::Exact => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SamplerConfig {
    pub samples: usize,
    pub measurement: Measurement,
    pub seed: u64,
    /// Target `(ε, δ)`: a warning is attached if `samples` is below the Hoeffding budget.
    pub accuracy: Option<(f64, f64)>,
}

impl SamplerConfig {
    pub fn new(samples: usize, measurement: Measurement, seed: u64) -> Self {
        Self { samples, measurement, seed, accuracy: None }
    }
}

/// One factor of an `R`-step sequence: a QPD over `basis`, acting on `support`.
#[derive(Clone, Copy, Debug)]
pub struct Step<'a> {
    pub qpd: &'a QPDecomposition,
    pub basis: &'a BasisSet,
    pub support: &'a [usize],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub indices: Vec<usize>,
    pub signs: Vec<i8>,
    pub indicators: Vec<u8>,
    /// Observable outcomes (one per observable); zero for aborted trials.
    pub outcomes: Vec<f64>,
    pub w: f64,
    pub m: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub trace_estimate: f64,
    pub trace_se: f64,
    pub obs_estimate: f64,
    pub obs_se: f64,
    /// `obs_estimate / trace_estimate`; `None` when the trace estimate is zero.
    pub ratio: Option<f64>,
    /// Delta-method standard error of the ratio.
    pub ratio_se: Option<f64>,
    pub samples: usize,
    pub shots: Option<usize>,
    pub gamma_total: f64,
    pub seed: u64,
    /// Fraction of trials in which every post-selection succeeded.
    pub acceptance: f64,
    pub warnings: Vec<String>,
}

impl EstimatorResult {
    pub const CSV_HEADER: &'static str =
        "experiment,beta,steps,N,shots,seed,gamma_total,trace_est,trace_se,obs_est,obs_se,ratio";

    pub fn csv_row(&self, experiment: &str, beta: f64, steps: usize) -> String {
        let shots = self.shots.map_or_else(|| "exact".to_string(), |s| s.to_string());
        let ratio = self.ratio.map_or_else(|| "nan".to_string(), |r| r.to_string());
        format!(
            "{experiment},{beta},{steps},{},{shots},{},{},{},{},{},{},{ratio}",
            self.samples,
            self.seed,
            self.gamma_total,
            self.trace_estimate,
            self.trace_se,
            self.obs_estimate,
            self.obs_se
        )
    }
}

/// Initial state of a sampling run.
#[derive(Clone, Debug)]
pub enum InitialState {
    Pure(StateVector),
    Mixed(DensityOperator),
}

impl InitialState {
    fn qubits(&self) -> usize {
        match self {
            InitialState::Pure(s) => s.qubits(),
            InitialState::Mixed(r) => r.qubits(),
        }
    }
}

struct PreparedElement {
    kraus: Vec<ComplexMatrix>,
    trace_preserving: bool,
}

struct PreparedStep {
    layout: LocalLayout,
    index: WeightedIndex<f64>,
    signs: Vec<i8>,
    elements: Vec<Option<PreparedElement>>,
    /// Embedded Kraus operators, populated only for density-operator inputs.
    full: Vec<Option<Vec<ComplexMatrix>>>,
}

struct PreparedObservable {
    matrix: HermitianMatrix,
    /// Distinct eigenvalues with orthonormal bases of their eigenspaces.
    groups: Vec<(f64, Vec<Vec<C64>>)>,
}

impl PreparedObservable {
    fn new(a: &HermitianMatrix) -> Result<Self> {
        let norm = operator_norm(a.as_matrix());
        if norm > 1.0 + NORM_TOL {
            return Err(Error::InvalidArgument(format!("observable norm {norm} exceeds 1")));
        }
        let es = eigh(a);
        let mut groups: Vec<(f64, Vec<Vec<C64>>)> = Vec::new();
        for (k, &lambda) in es.eigenvalues.iter().enumerate() {
            let v = es.eigenvectors.column(k);
            match groups.last_mut() {
                Some((l, vs)) if (lambda - *l).abs() <= EIGEN_GROUP_TOL => vs.push(v),
                _ => groups.push((lambda, vec![v])),
            }
        }
        Ok(Self { matrix: a.clone(), groups })
    }

    fn born_weights_vec(&self, psi: &[C64]) -> Vec<f64> {
        self.groups
            .iter()
            .map(|(_, vs)| vs.iter().map(|v| crate::linalg::inner(v, psi).norm_sqr()).sum())
            .collect()
    }

    fn born_weights_rho(&self, rho: &ComplexMatrix) -> Vec<f64> {
        self.groups
            .iter()
            .map(|(_, vs)| {
                vs.iter()
                    .map(|v| {
                        let rv = rho.mul_vec(v).expect("dimension checked");
                        crate::linalg::inner(v, &rv).re
                    })
                    .sum()
            })
            .collect()
    }

    fn shot_average<R: Rng>(&self, weights: &[f64], shots: usize, rng: &mut R) -> f64 {
        let mut remaining = shots as u64;
        let mut mass: f64 = weights.iter().map(|w| w.max(0.0)).sum();
        let mut acc = 0.0;
        let last = self.groups.len() - 1;
        for (k, ((lambda, _), &w)) in self.groups.iter().zip(weights).enumerate() {
            if remaining == 0 {
                break;
            }
            let count = if k == last {
                remaining
            } else {
                let p = if mass > 0.0 { (w.max(0.0) / mass).clamp(0.0, 1.0) } else { 0.0 };
                Binomial::new(remaining, p).expect("probability clamped to [0, 1]").sample(rng)
            };
            acc += lambda * count as f64;
            remaining -= count;
            mass -= w.max(0.0);
        }
        acc / shots as f64
    }
}

/// A validated, preprocessed sampling problem.
pub struct Sampler {
    n: usize,
    steps: Vec<PreparedStep>,
    gamma_total: f64,
    initial: InitialState,
    observables: Vec<PreparedObservable>,
}

enum State {
    Pure(Vec<C64>),
    Mixed(ComplexMatrix),
}

impl Sampler {
    pub fn new(steps: &[Step<'_>], n: usize, initial: InitialState, observables: &[HermitianMatrix]) -> Result<Self> {
        if initial.qubits() != n {
            return Err(Error::DimensionMismatch(format!(
                "initial state on {} qubits, register has {n}",
                initial.qubits()
            )));
        }
        if observables.is_empty() {
            return Err(Error::InvalidArgument("at least one observable is required".into()));
        }
        for a in observables {
            if a.dim() != 1 << n {
                return Err(Error::DimensionMismatch(format!("observable of dimension {} on {n} qubits", a.dim())));
            }
        }
        let mut prepared = Vec::with_capacity(steps.len());
        let mut gamma_total = 1.0;
        for s in steps {
            if s.qpd.len() != s.basis.len() {
                return Err(Error::DimensionMismatch(format!(
                    "QPD has {} coefficients, basis {} has {} elements",
                    s.qpd.len(),
                    s.basis.name(),
                    s.basis.len()
                )));
            }
            if s.support.len() != s.basis.qubits() {
                return Err(Error::InvalidSupport(format!(
                    "{}-qubit basis placed on {} qubits",
                    s.basis.qubits(),
                    s.support.len()
                )));
            }
            let layout = LocalLayout::new(s.support, n)?;
            let index = WeightedIndex::new(s.qpd.probabilities())
                .map_err(|e| Error::NotSampleable(format!("invalid QPD probabilities: {e}")))?;
            let mut elements = Vec::with_capacity(s.basis.len());
            for (e, &p) in s.basis.elements().iter().zip(s.qpd.probabilities()) {
                if p == 0.0 {
                    elements.push(None);
                    continue;
                }
                if !e.operation.is_physical() {
                    return Err(Error::NotSampleable(format!("element {} is not a valid instrument branch", e.label)));
                }
                elements.push(Some(PreparedElement {
                    kraus: e.operation.kraus().to_vec(),
                    trace_preserving: e.operation.is_trace_preserving(),
                }));
            }
            let full = if matches!(initial, InitialState::Mixed(_)) {
                elements
                    .iter()
                    .map(|e| e.as_ref().map(|el| el.kraus.iter().map(|k| layout.embed_matrix(k)).collect()))
                    .collect()
            } else {
                Vec::new()
            };
            gamma_total *= s.qpd.gamma();
            prepared.push(PreparedStep { layout, index, signs: s.qpd.signs().to_vec(), elements, full });
        }
        let observables = observables.iter().map(PreparedObservable::new).collect::<Result<Vec<_>>>()?;
        Ok(Self { n, steps: prepared, gamma_total, initial, observables })
    }

    pub fn qubits(&self) -> usize {
        self.n
    }

    pub fn gamma_total(&self) -> f64 {
        self.gamma_total
    }

    fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        rng
    }

    /// Runs trial `j`; `record` receives the full trace of the trial when given.
    fn trial(&self, seed: u64, j: u64, measurement: Measurement, out_m: &mut [f64], mut record: Option<&mut SampleRecord>) -> f64 {
        let mut rng = Self::trial_rng(seed, j);
        let mut state = match &self.initial {
            InitialState::Pure(s) => State::Pure(s.amplitudes().to_vec()),
            InitialState::Mixed(r) => {
                let m = r.matrix();
                State::Mixed(m.scale_real(1.0 / m.trace().re))
            }
        };
        let mut scratch: Vec<C64> = Vec::new();
        let mut branches: Vec<Vec<C64>> = Vec::new();
        let mut sign = 1.0;
        let mut alive = true;
        if let Some(r) = record.as_deref_mut() {
            *r = SampleRecord {
                indices: Vec::with_capacity(self.steps.len()),
                signs: Vec::with_capacity(self.steps.len()),
                indicators: Vec::with_capacity(self.steps.len()),
                outcomes: vec![0.0; self.observables.len()],
                w: 0.0,
                m: vec![0.0; self.observables.len()],
            };
        }
        for step in &self.steps {
            let i = step.index.sample(&mut rng);
            let el = step.elements[i].as_ref().expect("sampled index has positive probability");
            let s = step.signs[i];
            sign *= s as f64;
            let ok = match &mut state {
                State::Pure(psi) => {
                    branches.resize_with(el.kraus.len(), Vec::new);
                    let mut weights = Vec::with_capacity(el.kraus.len());
                    for (k, b) in el.kraus.iter().zip(branches.iter_mut()) {
                        step.layout.apply_vec(k, psi, &mut scratch);
                        std::mem::swap(b, &mut scratch);
                        weights.push(b.iter().map(|z| z.norm_sqr()).sum::<f64>());
                    }
                    match choose_branch(&weights, el.trace_preserving, &mut rng) {
                        Some(a) => {
                            let norm = weights[a].sqrt();
                            psi.clear();
                            psi.extend(branches[a].iter().map(|z| z / norm));
                            true
                        }
                        None => false,
                    }
                }
                State::Mixed(rho) => {
                    let full = step.full[i].as_ref().expect("prepared for density propagation");
                    let outs: Vec<ComplexMatrix> =
                        full.iter().map(|k| k.sandwich(rho).expect("dimension checked")).collect();
                    let weights: Vec<f64> = outs.iter().map(|o| o.trace().re).collect();
                    // A channel's Kraus outcomes are not distinguished; only success is sampled.
                    let total: f64 = weights.iter().sum();
                    let success = if el.trace_preserving { true } else { rng.gen::<f64>() < total };
                    if success && total > 0.0 {
                        let mut acc = ComplexMatrix::zeros(rho.rows(), rho.cols());
                        for o in &outs {
                            acc += o;
                        }
                        *rho = acc.scale_real(1.0 / total);
                        true
                    } else {
                        false
                    }
                }
            };
            if let Some(r) = record.as_deref_mut() {
                r.indices.push(i);
                r.signs.push(s);
                r.indicators.push(ok as u8);
            }
            if !ok {
                alive = false;
                break;
            }
        }
        if !alive {
            out_m.iter_mut().for_each(|m| *m = 0.0);
            if let Some(r) = record {
                r.w = 0.0;
            }
            return 0.0;
        }
        let w = self.gamma_total * sign;
        for (k, obs) in self.observables.iter().enumerate() {
            let a = match (&state, measurement) {
                (State::Pure(psi), Measurement::Exact) => obs.matrix.expectation_vec(psi),
                (State::Mixed(rho), Measurement::Exact) => obs.matrix.expectation(rho),
                (State::Pure(psi), Measurement::Shots(s)) => {
                    let weights = obs.born_weights_vec(psi);
                    obs.shot_average(&weights, s, &mut rng)
                }
                (State::Mixed(rho), Measurement::Shots(s)) => {
                    let weights = obs.born_weights_rho(rho);
                    obs.shot_average(&weights, s, &mut rng)
                }
            };
            out_m[k] = w * a;
            if let Some(r) = record.as_deref_mut() {
                r.outcomes[k] = a;
            }
        }
        if let Some(r) = record {
            r.w = w;
            r.m.copy_from_slice(out_m);
        }
        w
    }

    /// Full per-trial records for trials `range` (for inspection and testing).
    pub fn records(&self, cfg: &SamplerConfig, range: std::ops::Range<u64>) -> Result<Vec<SampleRecord>> {
        check_config(cfg)?;
        let mut m = vec![0.0; self.observables.len()];
        Ok(range
            .map(|j| {
                let mut rec = SampleRecord {
                    indices: vec![],
                    signs: vec![],
                    indicators: vec![],
                    outcomes: vec![],
                    w: 0.0,
                    m: vec![],
                };
                self.trial(cfg.seed, j, cfg.measurement, &mut m, Some(&mut rec));
                rec
            })
            .collect())
    }

    /// One estimate per observable, all from the same trajectories.
    pub fn run(&self, cfg: &SamplerConfig) -> Result<Vec<EstimatorResult>> {
        check_config(cfg)?;
        let k = self.observables.len();
        let chunks = cfg.samples.div_ceil(CHUNK);
        let partials: Vec<Accumulator> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let start = c * CHUNK;
                let end = (start + CHUNK).min(cfg.samples);
                let mut acc = Accumulator::new(k);
                let mut m = vec![0.0; k];
                for j in start..end {
                    let w = self.trial(cfg.seed, j as u64, cfg.measurement, &mut m, None);
                    acc.push(w, &m);
                }
                acc
            })
            .collect();
        let mut total = Accumulator::new(k);
        for p in &partials {
            total.merge(p);
        }
        let mut warnings = Vec::new();
        if let Some((eps, delta)) = cfg.accuracy {
            let need = required_samples(self.gamma_total, eps, delta)?;
            if cfg.samples < need {
                warnings.push(format!(
                    "N = {} is below the Hoeffding budget {need} for eps = {eps}, delta = {delta}",
                    cfg.samples
                ));
            }
        }
        Ok((0..k).map(|o| total.result(o, self.gamma_total, cfg, warnings.clone())).collect())
    }
}

/// Picks a Kraus branch; `None` means the post-selection failed.
fn choose_branch<R: Rng>(weights: &[f64], trace_preserving: bool, rng: &mut R) -> Option<usize> {
    if trace_preserving && weights.len() == 1 {
        return Some(0);
    }
    let total: f64 = weights.iter().sum();
    let u: f64 = rng.gen();
    let threshold = if trace_preserving { u * total } else { u };
    let mut cum = 0.0;
    for (a, &w) in weights.iter().enumerate() {
        cum += w;
        if threshold < cum {
            return Some(a);
        }
    }
    // Round-off at the upper end of a trace-preserving draw.
    if trace_preserving {
        weights.iter().rposition(|&w| w > 0.0)
    } else {
        None
    }
}

fn check_config(cfg: &SamplerConfig) -> Result<()> {
    if cfg.samples == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    if cfg.measurement == Measurement::Shots(0) {
        return Err(Error::InvalidArgument("shots must be at least 1".into()));
    }
    Ok(())
}

#[derive(Clone, Debug)]
struct Accumulator {
    n: usize,
    accepted: usize,
    sw: f64,
    sww: f64,
    sm: Vec<f64>,
    smm: Vec<f64>,
    swm: Vec<f64>,
}

impl Accumulator {
    fn new(k: usize) -> Self {
        Self { n: 0, accepted: 0, sw: 0.0, sww: 0.0, sm: vec![0.0; k], smm: vec![0.0; k], swm: vec![0.0; k] }
    }

    fn push(&mut self, w: f64, m: &[f64]) {
        self.n += 1;
        self.accepted += (w != 0.0) as usize;
        self.sw += w;
        self.sww += w * w;
        for (o, &mo) in m.iter().enumerate() {
            self.sm[o] += mo;
            self.smm[o] += mo * mo;
            self.swm[o] += w * mo;
        }
    }

    fn merge(&mut self, other: &Self) {
        self.n += other.n;
        self.accepted += other.accepted;
        self.sw += other.sw;
        self.sww += other.sww;
        for o in 0..self.sm.len() {
            self.sm[o] += other.sm[o];
            self.smm[o] += other.smm[o];
            self.swm[o] += other.swm[o];
        }
    }

    fn result(&self, o: usize, gamma_total: f64, cfg: &SamplerConfig, mut warnings: Vec<String>) -> EstimatorResult {
        let n = self.n as f64;
        let mw = self.sw / n;
        let mm = self.sm[o] / n;
        let (var_w, var_m, cov) = if self.n > 1 {
            (
                ((self.sww - n * mw * mw) / (n - 1.0)).max(0.0),
                ((self.smm[o] - n * mm * mm) / (n - 1.0)).max(0.0),
                (self.swm[o] - n * mw * mm) / (n - 1.0),
            )
        } else {
            (0.0, 0.0, 0.0)
        };
        let (ratio, ratio_se) = if mw != 0.0 {
            let r = mm / mw;
            let var_r = ((var_m - 2.0 * r * cov + r * r * var_w) / (n * mw * mw)).max(0.0);
            (Some(r), Some(var_r.sqrt()))
        } else {
            warnings.push("trace estimate is zero; ratio undefined".into());
            (None, None)
        };
        EstimatorResult {
            trace_estimate: mw,
            trace_se: (var_w / n).sqrt(),
            obs_estimate: mm,
            obs_se: (var_m / n).sqrt(),
            ratio,
            ratio_se,
            samples: self.n,
            shots: cfg.measurement.shots(),
            gamma_total,
            seed: cfg.seed,
            acceptance: self.accepted as f64 / n,
            warnings,
        }
    }
}

/// Single-map estimator over a basis acting on all qubits of `rho0`.
pub fn run_algorithm1(
    d: &QPDecomposition,
    s: &BasisSet,
    rho0: &StateVector,
    a: &HermitianMatrix,
    cfg: &SamplerConfig,
) -> Result<EstimatorResult> {
    let support: Vec<usize> = (0..s.qubits()).collect();
    run_algorithm2(&[Step { qpd: d, basis: s, support: &support }], rho0.qubits(), rho0, a, cfg)
}

/// Sequence estimator: steps are applied in order, each sampled independently.
pub fn run_algorithm2(
    steps: &[Step<'_>],
    n: usize,
    rho0: &StateVector,
    a: &HermitianMatrix,
    cfg: &SamplerConfig,
) -> Result<EstimatorResult> {
    let sampler = Sampler::new(steps, n, InitialState::Pure(rho0.clone()), std::slice::from_ref(a))?;
    Ok(sampler.run(cfg)?.remove(0))
}

/// Like [`run_algorithm2`], estimating several observables from shared trajectories.
pub fn run_algorithm2_multi(
    steps: &[Step<'_>],
    initial: InitialState,
    observables: &[HermitianMatrix],
    cfg: &SamplerConfig,
) -> Result<Vec<EstimatorResult>> {
    let n = initial.qubits();
    Sampler::new(steps, n, initial, observables)?.run(cfg)
}

/// Dense `(Tr E(ρ), Tr[A·E(ρ)])` for the composition `E` of `steps` in order.
pub fn exact_trace_and_expectation(
    steps: &[QuantumOperation],
    rho0: &DensityOperator,
    a: &HermitianMatrix,
) -> Result<(f64, f64)> {
    let mut rho = rho0.clone();
    for s in steps {
        rho = s.apply(&rho)?;
    }
    if a.dim() != rho.dim() {
        return Err(Error::DimensionMismatch(format!("observable {} vs state {}", a.dim(), rho.dim())));
    }
    Ok((rho.trace(), a.expectation(rho.matrix())))
}

/// `Tr[A·E(ρ)] / Tr[E(ρ)]`.
pub fn exact_rescaled_expectation(steps: &[QuantumOperation], rho0: &DensityOperator, a: &HermitianMatrix) -> Result<f64> {
    let (t, o) = exact_trace_and_expectation(steps, rho0, a)?;
    if t.abs() < 1e-300 {
        return Err(Error::ZeroTrace);
    }
    Ok(o / t)
}

/// Dense pure-state propagation: the normalized `K_R ⋯ K_1 ψ` for single-Kraus steps.
pub fn propagate_pure(kraus: &[&ComplexMatrix], psi: &[C64]) -> Result<Vec<C64>> {
    let mut v = psi.to_vec();
    for k in kraus {
        v = k.mul_vec(&v)?;
    }
    let norm = vec_norm(&v);
    if norm == 0.0 {
        return Err(Error::ZeroTrace);
    }
    Ok(v.into_iter().map(|z| z / norm).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{ebl_single_qubit, ebl_two_qubit};
    use crate::ite::{heisenberg_2q_term, ite_map};
    use crate::linalg::gates::z;
    use crate::qpd::{solve_exact, solve_min_gamma};

    #[test]
    fn hoeffding_examples() {
        assert_eq!(required_samples(1.0, 0.1, 0.05).unwrap(), 600);
        assert_eq!(required_samples(1.0, 1.0, (-1f64).exp()).unwrap(), 2);
        let a = required_samples(3.0, 0.1, 0.1).unwrap();
        let b = required_samples(6.0, 0.1, 0.1).unwrap();
        assert!((b as f64 / a as f64 - 4.0).abs() < 1e-3);
        assert!(required_samples(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn identity_qpd_gives_exact_ratio() {
        let b = ebl_single_qubit();
        let d = QPDecomposition::unit(&b, 0);
        let zobs = HermitianMatrix::new(z()).unwrap();
        let cfg = SamplerConfig::new(100, Measurement::Shots(16), 7);
        let r = run_algorithm1(&d, &b, &StateVector::basis(1, 0), &zobs, &cfg).unwrap();
        assert_eq!(r.ratio, Some(1.0));
        assert_eq!(r.trace_estimate, 1.0);
        assert_eq!(r.trace_se, 0.0);
    }

    #[test]
    fn single_qubit_ite_within_three_se() {
        let b = ebl_single_qubit();
        let h = HermitianMatrix::new(&z() + &ComplexMatrix::identity(2)).unwrap();
        let t = ite_map(&h, 0.3).unwrap();
        let d = solve_min_gamma(&t, &b).unwrap();
        let rho0 = StateVector::plus(1);
        let zobs = HermitianMatrix::new(z()).unwrap();
        let oracle = exact_rescaled_expectation(&[t], &rho0.to_density(), &zobs).unwrap();
        let cfg = SamplerConfig::new(200_000, Measurement::Exact, 11);
        let r = run_algorithm1(&d, &b, &rho0, &zobs, &cfg).unwrap();
        let dev = (r.ratio.unwrap() - oracle).abs();
        assert!(dev <= 3.0 * r.ratio_se.unwrap(), "{dev} vs se {}", r.ratio_se.unwrap());
    }

    #[test]
    fn weights_are_bounded_and_consistent() {
        let b = ebl_two_qubit();
        let t = ite_map(&heisenberg_2q_term(true), 0.1).unwrap();
        let d = solve_exact(&t, &b).unwrap();
        let support = [0usize, 1];
        let steps = [Step { qpd: &d, basis: &b, support: &support }, Step { qpd: &d, basis: &b, support: &support }];
        let a = heisenberg_2q_term(false).scale(1.0 / 3.0);
        let sampler = Sampler::new(&steps, 2, InitialState::Pure(StateVector::basis(2, 0)), &[a]).unwrap();
        let cfg = SamplerConfig::new(1, Measurement::Shots(8), 3);
        let g = sampler.gamma_total();
        for rec in sampler.records(&cfg, 0..500).unwrap() {
            assert!(rec.w.abs() <= g * (1.0 + 1e-12));
            assert!(rec.m[0].abs() <= g * (1.0 + 1e-12));
            let alive = rec.indicators.iter().all(|&i| i == 1) && rec.indicators.len() == 2;
            let sgn: f64 = rec.signs.iter().map(|&s| s as f64).product();
            if alive {
                assert_eq!(rec.w, g * sgn);
                assert_eq!(rec.m[0], rec.w * rec.outcomes[0]);
            } else {
                assert_eq!((rec.w, rec.m[0]), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn one_step_sequence_matches_algorithm1() {
        let b = ebl_single_qubit();
        let h = HermitianMatrix::new(&z() + &ComplexMatrix::identity(2)).unwrap();
        let d = solve_exact(&ite_map(&h, 0.2).unwrap(), &b).unwrap();
        let zobs = HermitianMatrix::new(z()).unwrap();
        let cfg = SamplerConfig::new(5000, Measurement::Shots(4), 99);
        let a1 = run_algorithm1(&d, &b, &StateVector::plus(1), &zobs, &cfg).unwrap();
        let a2 = run_algorithm2(&[Step { qpd: &d, basis: &b, support: &[0] }], 1, &StateVector::plus(1), &zobs, &cfg)
            .unwrap();
        assert_eq!(a1, a2);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let b = ebl_single_qubit();
        let h = HermitianMatrix::new(&z() + &ComplexMatrix::identity(2)).unwrap();
        let d = solve_exact(&ite_map(&h, 0.2).unwrap(), &b).unwrap();
        let zobs = HermitianMatrix::new(z()).unwrap();
        let cfg = SamplerConfig::new(3 * CHUNK + 17, Measurement::Shots(4), 5);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_algorithm1(&d, &b, &StateVector::plus(1), &zobs, &cfg).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn density_path_agrees_with_oracle() {
        let b = ebl_single_qubit();
        let h = HermitianMatrix::new(&z() + &ComplexMatrix::identity(2)).unwrap();
        let t = ite_map(&h, 0.3).unwrap();
        let d = solve_min_gamma(&t, &b).unwrap();
        let rho = DensityOperator::new(ComplexMatrix::from_real_rows(&[&[0.7, 0.2], &[0.2, 0.3]])).unwrap();
        let zobs = HermitianMatrix::new(z()).unwrap();
        let oracle = exact_rescaled_expectation(&[t], &rho, &zobs).unwrap();
        let support = [0usize];
        let res = run_algorithm2_multi(
            &[Step { qpd: &d, basis: &b, support: &support }],
            InitialState::Mixed(rho),
            &[zobs],
            &SamplerConfig::new(100_000, Measurement::Exact, 1),
        )
        .unwrap();
        let r = &res[0];
        assert!((r.ratio.unwrap() - oracle).abs() <= 3.0 * r.ratio_se.unwrap());
    }

    #[test]
    fn observable_norm_checked() {
        let b = ebl_single_qubit();
        let d = QPDecomposition::unit(&b, 0);
        let big = HermitianMatrix::new(z().scale_real(2.0)).unwrap();
        let cfg = SamplerConfig::new(10, Measurement::Exact, 0);
        assert!(run_algorithm1(&d, &b, &StateVector::basis(1, 0), &big, &cfg).is_err());
    }

    #[test]
    fn heisenberg_eigenstate_energy_is_constant() {
        let h = heisenberg_2q_term(false);
        let op = ite_map(&h, 0.01).unwrap();
        let rho = StateVector::basis(2, 0).to_density();
        for steps in 1..=5 {
            let ops = vec![op.clone(); steps];
            let e = exact_rescaled_expectation(&ops, &rho, &h).unwrap();
            assert!((e + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn low_budget_warns() {
        let b = ebl_single_qubit();
        let d = QPDecomposition::unit(&b, 0);
        let zobs = HermitianMatrix::new(z()).unwrap();
        let mut cfg = SamplerConfig::new(10, Measurement::Exact, 0);
        cfg.accuracy = Some((0.1, 0.05));
        let r = run_algorithm1(&d, &b, &StateVector::basis(1, 0), &zobs, &cfg).unwrap();
        assert_eq!(r.warnings.len(), 1);
    }
}
