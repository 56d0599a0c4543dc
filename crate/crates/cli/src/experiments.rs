use rayon::prelude::*;
use serde::Serialize;

use qpite::basis::{apply_noise, depolarizing, ebl_single_qubit, ebl_two_qubit, product_basis, takagi_two_qubit, BasisSet};
use qpite::channels::{QuantumOperation, StateVector};
use qpite::ite::{heisenberg_2q, heisenberg_chain_1d, ite_map, shift_to_psd, trotter_plan};
use qpite::ite::{HamiltonianSpec, LocalHamiltonian, LocalTerm};
use qpite::linalg::{operator_norm, HermitianMatrix};
use qpite::qpd::{diamond_lower_bound_ite, QPDecomposition, QpdSolver};
use qpite::sampler::{exact_rescaled_expectation, run_algorithm2, Measurement, SamplerConfig, Step};
use qpite::tpq::{derive_seed, tpq_experiment, TpqConfig, TpqMode};

use crate::args::{GammaSweepArgs, IteEnergyArgs, OracleArgs, TpqArgs};
use crate::output::Output;
use crate::{CliError, Result};

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let nums = parts
            .iter()
            .map(|p| p.trim().parse::<f64>().map_err(|_| config_err(format!("bad number {p:?} in grid {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let (a, b, step) = (nums[0], nums[1], nums[2]);
        if step <= 0.0 || b < a {
            return Err(config_err(format!("grid {s:?} needs start <= stop and step > 0")));
        }
        let count = ((b - a) / step + 1e-9).floor() as usize + 1;
        return Ok((0..count).map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12).collect());
    }
    parse_list(s)
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    let out = s
        .split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| config_err(format!("bad list entry {p:?} in {s:?}"))))
        .collect::<Result<Vec<T>>>()?;
    if out.is_empty() {
        return Err(config_err("empty list"));
    }
    Ok(out)
}

fn parse_shots(s: &str) -> Result<Measurement> {
    if s.eq_ignore_ascii_case("exact") {
        return Ok(Measurement::Exact);
    }
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(config_err(format!("shots must be a positive integer or `exact`, got {s:?}"))),
        Ok(k) => Ok(Measurement::Shots(k)),
    }
}

fn load_hamiltonian(name: &str) -> Result<LocalHamiltonian> {
    match name {
        "heis2q" => Ok(heisenberg_2q(false)),
        "heis2q-shifted" => Ok(heisenberg_2q(true)),
        path => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| config_err(format!("cannot read Hamiltonian file {path:?}: {e}")))?;
            Ok(HamiltonianSpec::from_json(&text)?.build()?)
        }
    }
}

fn apply_shift(h: &LocalHamiltonian, shift: &str) -> Result<LocalHamiltonian> {
    match shift {
        "auto" => Ok(shift_to_psd(h).hamiltonian),
        "none" => Ok(h.clone()),
        v => {
            let v: f64 = v.parse().map_err(|_| config_err(format!("shift must be auto, none or a number, got {v:?}")))?;
            let terms = h
                .terms()
                .iter()
                .map(|t| LocalTerm { support: t.support.clone(), h: t.h.add(&HermitianMatrix::identity(t.h.dim()).scale(v)) })
                .collect();
            Ok(LocalHamiltonian::new(h.qubits(), terms)?)
        }
    }
}

/// Basis for `k`-qubit local maps: `ebl`, `ebl-product`, `takagi`, `noisy:<p>`.
pub fn build_basis(name: &str, k: usize) -> Result<BasisSet> {
    let ebl_k = |k: usize| -> Result<BasisSet> {
        match k {
            1 => Ok(ebl_single_qubit()),
            2 => Ok(ebl_two_qubit()),
            _ => {
                let e = ebl_single_qubit();
                let mut b = e.clone();
                for _ in 1..k {
                    b = product_basis(&b, &e);
                }
                Ok(b)
            }
        }
    };
    if let Some(p) = name.strip_prefix("noisy:") {
        let p: f64 = p.parse().map_err(|_| config_err(format!("bad noise parameter in {name:?}")))?;
        return Ok(apply_noise(&ebl_k(k)?, &depolarizing(k, p)?)?);
    }
    match name {
        "ebl" | "ebl-product" => ebl_k(k),
        "takagi" if k == 2 => Ok(takagi_two_qubit()),
        "takagi" => Err(config_err("the takagi basis needs two-local terms")),
        other => Err(config_err(format!("unknown basis {other:?}"))),
    }
}

#[derive(Serialize)]
struct GammaRow {
    beta: f64,
    gamma_ebl: f64,
    gamma_takagi: f64,
    lower_bound: f64,
}

pub fn gamma_sweep(args: GammaSweepArgs, out: &Output) -> Result<()> {
    let hname = args.hamiltonian.unwrap_or_else(|| "heis2q-shifted".into());
    let h = load_hamiltonian(&hname)?;
    if h.qubits() != 2 {
        return Err(config_err("gamma-sweep needs a two-qubit Hamiltonian"));
    }
    let h = h.dense();
    let betas = parse_grid(&args.betas.unwrap_or_else(|| "0:1:0.05".into()))?;
    let ebl = ebl_two_qubit();
    let takagi = takagi_two_qubit();
    let se = QpdSolver::new(&ebl);
    let st = QpdSolver::new(&takagi);
    let rows = betas
        .par_iter()
        .map(|&beta| {
            let t = ite_map(&h, beta)?;
            Ok(GammaRow {
                beta,
                gamma_ebl: se.solve_min_gamma(&t)?.gamma(),
                gamma_takagi: st.solve_min_gamma(&t)?.gamma(),
                lower_bound: diamond_lower_bound_ite(&h, beta),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.table("gamma_sweep", &rows)?;
    out.plot(
        "gamma_sweep",
        &format!(
            "# QPD cost for {hname}\nset datafile separator ','\nset key autotitle columnhead\nset xlabel 'beta'\nset ylabel 'gamma'\n\
             plot 'gamma_sweep.csv' using 1:2 with linespoints title 'EBL', \\\n     '' using 1:3 with linespoints title 'Takagi', \\\n     '' using 1:4 with lines title 'diamond-norm bound'\n"
        ),
    )
}

/// Local QPDs for every term of `qpd_h`, solved once per distinct term matrix.
fn local_qpds(qpd_h: &LocalHamiltonian, beta: f64, basis: &BasisSet) -> Result<Vec<QPDecomposition>> {
    let solver = QpdSolver::new(basis);
    let classes = qpd_h.term_classes();
    let mut solved: Vec<Option<QPDecomposition>> = vec![None; qpd_h.len()];
    for (i, &c) in classes.iter().enumerate() {
        if c == i {
            let t = ite_map(&qpd_h.terms()[i].h, beta)?;
            solved[i] = Some(solver.solve_min_gamma(&t)?);
        }
    }
    Ok(classes.iter().map(|&c| solved[c].clone().expect("class representative solved")).collect())
}

fn sequence<'a>(h: &'a LocalHamiltonian, qpds: &'a [QPDecomposition], basis: &'a BasisSet, reps: usize) -> Vec<Step<'a>> {
    (0..reps)
        .flat_map(|_| {
            h.terms().iter().zip(qpds).map(move |(t, q)| Step { qpd: q, basis, support: &t.support })
        })
        .collect()
}

fn exact_energy(h: &LocalHamiltonian, beta_step: f64, steps: usize, observable: &HermitianMatrix) -> Result<f64> {
    let plan = trotter_plan(h, beta_step * steps as f64, steps)?;
    let ops: Vec<QuantumOperation> = plan.embedded_steps()?;
    let rho = StateVector::basis(h.qubits(), 0).to_density();
    Ok(exact_rescaled_expectation(&ops, &rho, observable)?)
}

fn normalized_observable(h: &LocalHamiltonian) -> Result<(HermitianMatrix, f64)> {
    let dense = h.dense();
    let norm = operator_norm(dense.as_matrix());
    if norm == 0.0 {
        return Err(config_err("Hamiltonian is zero"));
    }
    Ok((dense.scale(1.0 / norm), norm))
}

#[derive(Serialize)]
struct EnergyRunRow {
    step: usize,
    rep: usize,
    beta: f64,
    #[serde(rename = "N")]
    n: usize,
    shots: String,
    seed: u64,
    gamma_total: f64,
    trace_est: f64,
    trace_se: f64,
    obs_est: f64,
    obs_se: f64,
    ratio: f64,
    energy: f64,
    energy_se: f64,
}

#[derive(Serialize)]
struct EnergySummaryRow {
    step: usize,
    beta: f64,
    #[serde(rename = "N")]
    n: usize,
    shots: String,
    reps: usize,
    gamma_total: f64,
    exact_energy: f64,
    mean_energy: f64,
    std_energy: f64,
    combined_se: f64,
    z_score: f64,
}

fn shots_label(m: Measurement) -> String {
    m.shots().map_or_else(|| "exact".into(), |s| s.to_string())
}

pub fn ite_energy(args: IteEnergyArgs, seed: u64, out: &Output) -> Result<()> {
    let h = load_hamiltonian(args.hamiltonian.as_deref().unwrap_or("heis2q"))?;
    let qpd_h = apply_shift(&h, args.shift.as_deref().unwrap_or("auto"))?;
    let steps = args.steps.unwrap_or(4);
    let beta_step = args.beta_step.unwrap_or(0.01);
    let schedule: Vec<usize> = parse_list(args.schedule.as_deref().unwrap_or("400,800,3200,25600"))?;
    let measurement = parse_shots(args.shots.as_deref().unwrap_or("512"))?;
    let reps = args.reps.unwrap_or(10);
    if steps == 0 || reps == 0 || schedule.contains(&0) {
        return Err(config_err("steps, reps and schedule entries must be positive"));
    }
    let k = qpd_h.max_locality();
    if qpd_h.terms().iter().any(|t| t.support.len() != k) {
        return Err(config_err("all terms must act on the same number of qubits"));
    }
    let basis = build_basis(args.basis.as_deref().unwrap_or("takagi"), k)?;
    let qpds = local_qpds(&qpd_h, beta_step, &basis)?;
    let (observable, norm) = normalized_observable(&h)?;
    let psi0 = StateVector::basis(h.qubits(), 0);

    let mut runs = Vec::new();
    let mut summary = Vec::new();
    for t in 1..=steps {
        let n_samples = schedule[(t - 1).min(schedule.len() - 1)];
        let seq = sequence(&qpd_h, &qpds, &basis, t);
        let exact = norm * exact_energy(&h, beta_step, t, &observable)?;
        let mut energies = Vec::with_capacity(reps);
        let mut ses = Vec::with_capacity(reps);
        let mut gamma_total = 0.0;
        for rep in 0..reps {
            let run_seed = derive_seed(seed, t as u64, rep as u64);
            let cfg = SamplerConfig::new(n_samples, measurement, run_seed);
            let r = run_algorithm2(&seq, h.qubits(), &psi0, &observable, &cfg)?;
            let ratio = r.ratio.ok_or(qpite::Error::ZeroTrace)?;
            let energy_se = norm * r.ratio_se.unwrap_or(f64::NAN);
            gamma_total = r.gamma_total;
            energies.push(norm * ratio);
            ses.push(energy_se);
            runs.push(EnergyRunRow {
                step: t,
                rep,
                beta: beta_step * t as f64,
                n: n_samples,
                shots: shots_label(measurement),
                seed: run_seed,
                gamma_total: r.gamma_total,
                trace_est: r.trace_estimate,
                trace_se: r.trace_se,
                obs_est: r.obs_estimate,
                obs_se: r.obs_se,
                ratio,
                energy: norm * ratio,
                energy_se,
            });
        }
        let m = reps as f64;
        let mean = energies.iter().sum::<f64>() / m;
        let std = if reps > 1 {
            (energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
        } else {
            0.0
        };
        let combined_se = ses.iter().map(|s| s * s).sum::<f64>().sqrt() / m;
        summary.push(EnergySummaryRow {
            step: t,
            beta: beta_step * t as f64,
            n: n_samples,
            shots: shots_label(measurement),
            reps,
            gamma_total,
            exact_energy: exact,
            mean_energy: mean,
            std_energy: std,
            combined_se,
            z_score: (mean - exact) / combined_se,
        });
    }
    out.table("ite_energy", &summary)?;
    out.table("ite_energy_runs", &runs)?;
    out.plot(
        "ite_energy",
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'ITE step'\nset ylabel 'energy'\n\
         plot 'ite_energy.csv' using 1:8:9 with yerrorbars title 'sampled (mean ± std)', \\\n     '' using 1:7 with linespoints title 'exact'\n",
    )
}

#[derive(Serialize)]
struct TpqRow {
    n: usize,
    mode: String,
    beta: f64,
    state_index: String,
    pauli_string: String,
    tpq_value: Option<f64>,
    gibbs_value: Option<f64>,
    abs_error: f64,
}

#[derive(Serialize)]
struct TpqSummaryRow {
    n: usize,
    mode: String,
    beta: f64,
    gibbs_beta: f64,
    #[serde(rename = "N")]
    samples: Option<usize>,
    gamma_total: Option<f64>,
    mean_error: f64,
    mean_error_se: f64,
    sampling_se: Option<f64>,
}

pub fn tpq(args: TpqArgs, seed: u64, out: &Output) -> Result<()> {
    let ns: Vec<usize> = parse_list(args.n.as_deref().unwrap_or("4,5,6"))?;
    let mode = match args.mode.as_deref().unwrap_or("exact") {
        "exact" | "exact-ite" => TpqMode::ExactIte,
        "simulated" | "simulated-ite" => TpqMode::SimulatedIte,
        other => return Err(config_err(format!("mode must be exact or simulated, got {other:?}"))),
    };
    let samples: Vec<usize> = parse_list(args.samples.as_deref().unwrap_or("1024,9400,51200,409600,1638400"))?;
    let measurement = parse_shots(args.shots.as_deref().unwrap_or("exact"))?;
    let beta = args.ite_exponent.unwrap_or(0.02);
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let cfg = TpqConfig {
            hamiltonian: heisenberg_chain_1d(n, 1.0, 0.0)?,
            ite_exponent: beta,
            states: args.states.unwrap_or(10),
            observables: args.paulis.unwrap_or(30),
            seed,
            mode,
            samples: samples[i.min(samples.len() - 1)],
            measurement,
            trotter_r: args.trotter_r.unwrap_or(1),
        };
        if mode == TpqMode::SimulatedIte && cfg.samples == 0 {
            return Err(config_err("samples must be positive"));
        }
        let s = tpq_experiment(&cfg)?;
        for r in &s.records {
            rows.push(TpqRow {
                n,
                mode: r.mode.as_str().into(),
                beta,
                state_index: r.state_index.to_string(),
                pauli_string: r.pauli_string.clone(),
                tpq_value: Some(r.tpq_value),
                gibbs_value: Some(r.gibbs_value),
                abs_error: r.abs_error,
            });
        }
        rows.push(TpqRow {
            n,
            mode: mode.as_str().into(),
            beta,
            state_index: "mean".into(),
            pauli_string: "*".into(),
            tpq_value: None,
            gibbs_value: None,
            abs_error: s.mean_error,
        });
        summary.push(TpqSummaryRow {
            n,
            mode: mode.as_str().into(),
            beta,
            gibbs_beta: s.gibbs_beta,
            samples: (mode == TpqMode::SimulatedIte).then_some(cfg.samples),
            gamma_total: s.gamma_total,
            mean_error: s.mean_error,
            mean_error_se: s.mean_error_se,
            sampling_se: s.sampling_se,
        });
    }
    out.table("tpq", &rows)?;
    out.table("tpq_summary", &summary)?;
    out.plot(
        "tpq",
        "# reference Gibbs state at twice the ITE exponent\nset datafile separator ','\nset key autotitle columnhead\n\
         set xlabel 'qubits'\nset ylabel 'mean |<O>_TPQ - <O>_Gibbs|'\nset logscale y\n\
         plot 'tpq_summary.csv' using 1:7:8 with yerrorbars title 'average error'\n",
    )
}

#[derive(Serialize)]
struct OracleRow {
    experiment: String,
    step: usize,
    beta: f64,
    #[serde(rename = "N")]
    n: usize,
    shots: String,
    seed: u64,
    gamma_total: f64,
    exact: f64,
    sampled: f64,
    se: f64,
    z_score: f64,
    within_3se: bool,
}

pub fn oracle(args: OracleArgs, seed: u64, out: &Output) -> Result<()> {
    let experiment = args.experiment.unwrap_or_else(|| "ite-energy".into());
    let steps = args.steps.unwrap_or(2);
    let beta_step = args.beta_step.unwrap_or(0.01);
    let n_samples = args.samples.unwrap_or(25600);
    let measurement = parse_shots(args.shots.as_deref().unwrap_or("512"))?;
    if steps == 0 || n_samples == 0 {
        return Err(config_err("steps and samples must be positive"));
    }
    let (h, qpd_h, observable, scale, basis_default, psi0) = match experiment.as_str() {
        "ite-energy" => {
            let h = heisenberg_2q(false);
            let (obs, norm) = normalized_observable(&h)?;
            (h.clone(), shift_to_psd(&h).hamiltonian, obs, norm, "takagi", StateVector::basis(2, 0))
        }
        "z-ite" => {
            let z = HermitianMatrix::new(qpite::linalg::gates::z())?;
            let zi = z.add(&HermitianMatrix::identity(2));
            let h = LocalHamiltonian::new(1, vec![LocalTerm { support: vec![0], h: zi }])?;
            (h.clone(), h, z, 1.0, "ebl", StateVector::plus(1))
        }
        other => return Err(config_err(format!("unknown oracle experiment {other:?}"))),
    };
    let basis = build_basis(args.basis.as_deref().unwrap_or(basis_default), qpd_h.max_locality())?;
    let qpds = local_qpds(&qpd_h, beta_step, &basis)?;
    let mut rows = Vec::new();
    for t in 1..=steps {
        let seq = sequence(&qpd_h, &qpds, &basis, t);
        let plan = trotter_plan(&h, beta_step * t as f64, t)?;
        let exact = scale * exact_rescaled_expectation(&plan.embedded_steps()?, &psi0.to_density(), &observable)?;
        let run_seed = derive_seed(seed, t as u64, 0);
        let r = run_algorithm2(&seq, h.qubits(), &psi0, &observable, &SamplerConfig::new(n_samples, measurement, run_seed))?;
        let sampled = scale * r.ratio.ok_or(qpite::Error::ZeroTrace)?;
        let se = scale * r.ratio_se.unwrap_or(f64::NAN);
        let z = (sampled - exact) / se;
        rows.push(OracleRow {
            experiment: experiment.clone(),
            step: t,
            beta: beta_step * t as f64,
            n: n_samples,
            shots: shots_label(measurement),
            seed: run_seed,
            gamma_total: r.gamma_total,
            exact,
            sampled,
            se,
            z_score: z,
            within_3se: z.abs() <= 3.0,
        });
    }
    out.table("oracle", &rows)?;
    out.plot(
        "oracle",
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'step'\n\
         plot 'oracle.csv' using 2:9:10 with yerrorbars title 'sampled', '' using 2:8 with linespoints title 'exact'\n",
    )
}
