//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use qpite::basis::{ebl_single_qubit, ebl_two_qubit, takagi_two_qubit};
use qpite::channels::{QuantumOperation, StateVector};
use qpite::ite::{heisenberg_2q_term, heisenberg_chain_1d, ite_map, trotter_error};
use qpite::linalg::{gates, ComplexMatrix, HermitianMatrix, C64};
use qpite::qpd::{diamond_lower_bound_ite, QpdSolver};
use qpite::sampler::{exact_trace_and_expectation, required_samples, run_algorithm2, Measurement, SamplerConfig, Step};
use qpite::tpq::{clifford_group_order, derive_seed, tpq_experiment, CliffordTableau, TpqConfig, TpqMode};

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn qpd_exactness() -> Outcome {
    let basis = ebl_two_qubit();
    let solver = QpdSolver::new(&basis);
    let h = heisenberg_2q_term(true);
    let mut worst: f64 = 0.0;
    for beta in [0.05, 0.1, 0.2] {
        let d = solver.solve_exact(&ite_map(&h, beta).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        worst = worst.max(d.residual());
    }
    verdict(worst <= 1e-8, format!("max residual {worst:.2e} (tol 1e-8)"))
}

fn gamma_golden() -> Outcome {
    let cx = QuantumOperation::unitary(gates::cx()).map_err(|e| e.to_string())?;
    let (ebl, tak) = (ebl_two_qubit(), takagi_two_qubit());
    let ebl = QpdSolver::new(&ebl).solve_min_gamma(&cx).map_err(|e| e.to_string())?.gamma();
    let tak = QpdSolver::new(&tak).solve_min_gamma(&cx).map_err(|e| e.to_string())?.gamma();
    verdict(
        (ebl - 9.0).abs() <= 1e-6 && (tak - 1.0).abs() <= 1e-6,
        format!("gamma_ebl = {ebl:.9}, gamma_takagi = {tak:.9} (targets 9, 1 ± 1e-6)"),
    )
}

/// Number of eigenvalues of `a` below `sigma`, from the inertia of an LDL† factorization of `a − σI`.
fn count_below(a: &[Vec<C64>], sigma: f64) -> usize {
    let n = a.len();
    let mut l = vec![vec![C64::new(0.0, 0.0); n]; n];
    let mut d = vec![0.0; n];
    for k in 0..n {
        let mut dk = a[k][k].re - sigma;
        for j in 0..k {
            dk -= l[k][j].norm_sqr() * d[j];
        }
        if dk == 0.0 {
            dk = -f64::EPSILON * (1.0 + sigma.abs());
        }
        d[k] = dk;
        for i in k + 1..n {
            let mut s = a[i][k];
            for j in 0..k {
                s -= l[i][j] * d[j] * l[k][j].conj();
            }
            l[i][k] = s / dk;
        }
    }
    d.iter().filter(|&&v| v < 0.0).count()
}

fn lowest_eigenvalue_by_bisection(a: &[Vec<C64>]) -> f64 {
    let radius = |i: usize| a[i].iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v.norm()).sum::<f64>();
    let mut lo = (0..a.len()).map(|i| a[i][i].re - radius(i)).fold(f64::INFINITY, f64::min);
    let mut hi = (0..a.len()).map(|i| a[i][i].re + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if count_below(a, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

fn diamond_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let mut a = vec![vec![C64::new(0.0, 0.0); 4]; 4];
        for i in 0..4 {
            a[i][i] = C64::new(rng.gen_range(-1.0..1.0), 0.0);
            for j in i + 1..4 {
                a[i][j] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                a[j][i] = a[i][j].conj();
            }
        }
        let h = HermitianMatrix::new(ComplexMatrix::from_fn(4, 4, |i, j| a[i][j])).map_err(|e| e.to_string())?;
        let lambda0 = lowest_eigenvalue_by_bisection(&a);
        for beta in [0.1, 0.5, 1.0] {
            let expect = (-2.0 * beta * lambda0).exp();
            worst = worst.max((diamond_lower_bound_ite(&h, beta) - expect).abs() / expect.max(1.0));
        }
    }
    let shifted = heisenberg_2q_term(true);
    let ebl = ebl_two_qubit();
    let tak = takagi_two_qubit();
    let (se, st) = (QpdSolver::new(&ebl), QpdSolver::new(&tak));
    let mut unit_dev: f64 = 0.0;
    let mut order_violations = Vec::new();
    for i in 1..=20 {
        let beta = 0.05 * i as f64;
        let bound = diamond_lower_bound_ite(&shifted, beta);
        unit_dev = unit_dev.max((bound - 1.0).abs());
        let t = ite_map(&shifted, beta).map_err(|e| e.to_string())?;
        let ge = se.solve_min_gamma(&t).map_err(|e| e.to_string())?.gamma();
        let gt = st.solve_min_gamma(&t).map_err(|e| e.to_string())?.gamma();
        if !(bound <= gt + 1e-9 && gt <= ge + 1e-9) {
            order_violations.push(beta);
        }
    }
    verdict(
        worst <= 1e-12 && unit_dev <= 1e-12 && order_violations.is_empty(),
        format!(
            "closed-form deviation {worst:.1e}; shifted bound |1 − b| ≤ {unit_dev:.1e}; ordering violations at {order_violations:?} over 20 points"
        ),
    )
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_qpite")).arg("--out").arg(dir).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn read_csv(path: &Path) -> Result<Vec<HashMap<String, String>>, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let headers = r.headers().map_err(|e| e.to_string())?.clone();
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| e.to_string())?;
            Ok(headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect())
        })
        .collect()
}

fn num(row: &HashMap<String, String>, key: &str) -> Result<f64, String> {
    row.get(key).ok_or(format!("missing column {key}"))?.parse().map_err(|e| format!("{key}: {e}"))
}

fn estimator_correctness() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let args = [
        "--seed", "1", "ite-energy", "--steps", "4", "--beta-step", "0.01", "--schedule", "400,800,3200,25600", "--shots", "512",
        "--reps", "10",
    ];
    run_cli(dir.path(), &args)?;
    let rows = read_csv(&dir.path().join("ite_energy.csv"))?;
    let mut ok = rows.len() == 4;
    let mut parts = Vec::new();
    for r in &rows {
        let (exact, mean, se) = (num(r, "exact_energy")?, num(r, "mean_energy")?, num(r, "combined_se")?);
        let z = (mean - exact) / se;
        ok &= z.abs() <= 3.0;
        parts.push(format!("step {}: {mean:.4} vs {exact:.4} (z = {z:+.2})", r["step"]));
    }
    verdict(ok, parts.join("; "))
}

fn hoeffding_budget() -> Outcome {
    let z = HermitianMatrix::new(gates::z()).map_err(|e| e.to_string())?;
    let h = z.add(&HermitianMatrix::identity(2));
    let beta = 0.3;
    let target = ite_map(&h, beta).map_err(|e| e.to_string())?;
    let basis = ebl_single_qubit();
    let qpd = QpdSolver::new(&basis).solve_min_gamma(&target).map_err(|e| e.to_string())?;
    let (eps, delta) = (0.1, 0.1);
    let n = required_samples(qpd.gamma(), eps, delta).map_err(|e| e.to_string())?;
    let psi = StateVector::plus(1);
    let (exact_trace, _) = exact_trace_and_expectation(&[target], &psi.to_density(), &z).map_err(|e| e.to_string())?;
    let support = [0usize];
    let steps = [Step { qpd: &qpd, basis: &basis, support: &support }];
    let mut violations = 0;
    for run in 0..20 {
        let cfg = SamplerConfig::new(n, Measurement::Exact, derive_seed(5, 0, run));
        let r = run_algorithm2(&steps, 1, &psi, &z, &cfg).map_err(|e| e.to_string())?;
        if (r.trace_estimate - exact_trace).abs() > eps {
            violations += 1;
        }
    }
    verdict(violations <= 4, format!("gamma = {:.6}, N = {n}, {violations}/20 runs outside ±{eps} (limit 4)", qpd.gamma()))
}

fn trotter_decay() -> Outcome {
    let h = heisenberg_chain_1d(3, 1.0, 0.0).map_err(|e| e.to_string())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for r in [1, 2, 4] {
        let a = trotter_error(&h, 0.2, r).map_err(|e| e.to_string())?;
        let b = trotter_error(&h, 0.2, 2 * r).map_err(|e| e.to_string())?;
        let ratio = a / b;
        ok &= (1.6..=2.4).contains(&ratio);
        parts.push(format!("r = {r}: {ratio:.4}"));
    }
    verdict(ok, parts.join(", ") + " (band [1.6, 2.4])")
}

fn tpq_config(n: usize, seed: u64, mode: TpqMode, samples: usize) -> Result<TpqConfig, String> {
    Ok(TpqConfig {
        hamiltonian: heisenberg_chain_1d(n, 1.0, 0.0).map_err(|e| e.to_string())?,
        ite_exponent: 0.02,
        states: 10,
        observables: 30,
        seed,
        mode,
        samples,
        measurement: Measurement::Exact,
        trotter_r: 1,
    })
}

fn tpq_scaling() -> Outcome {
    let mean_error = |n: usize| -> Result<f64, String> {
        let mut total = 0.0;
        for seed in 1..=20 {
            total += tpq_experiment(&tpq_config(n, seed, TpqMode::ExactIte, 0)?).map_err(|e| e.to_string())?.mean_error;
        }
        Ok(total / 20.0)
    };
    let (e4, e6) = (mean_error(4)?, mean_error(6)?);
    let exact = tpq_experiment(&tpq_config(4, 1, TpqMode::ExactIte, 0)?).map_err(|e| e.to_string())?;
    let sim = tpq_experiment(&tpq_config(4, 1, TpqMode::SimulatedIte, 1024)?).map_err(|e| e.to_string())?;
    let ratio = sim.mean_error / exact.mean_error;
    let combined = (exact.mean_error_se.powi(2) + sim.mean_error_se.powi(2)).sqrt();
    let z = (sim.mean_error - exact.mean_error) / combined;
    let sampling_z = (sim.mean_error - exact.mean_error) / sim.sampling_se.unwrap_or(f64::NAN);
    verdict(
        e6 < e4 && (0.5..=2.0).contains(&ratio) && z.abs() <= 3.0,
        format!(
            "exact mean error n=4 {e4:.5}, n=6 {e6:.5} (20 seeds); simulated N=1024 {:.5} vs exact {:.5}: ratio {ratio:.3}, z = {z:+.2} (sampling-only z = {sampling_z:+.2})",
            sim.mean_error, exact.mean_error
        ),
    )
}

fn chi_square_uniform(n: usize, draws: usize, seed: u64) -> Result<(usize, f64, f64), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: HashMap<Vec<(u16, u16, bool)>, usize> = HashMap::new();
    for _ in 0..draws {
        let t = CliffordTableau::sample(n, &mut rng).map_err(|e| e.to_string())?;
        *counts.entry(t.rows.iter().map(|p| (p.x, p.z, p.sign)).collect()).or_default() += 1;
    }
    // Tableaux identify Cliffords up to global phase, which is what the group order counts.
    let classes = clifford_group_order(n) as usize;
    let expected = draws as f64 / classes as f64;
    let observed: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let stat = observed + (classes - counts.len()) as f64 * expected;
    let critical = ChiSquared::new((classes - 1) as f64).map_err(|e| e.to_string())?.inverse_cdf(0.99);
    Ok((counts.len(), stat, critical))
}

fn clifford_uniformity() -> Outcome {
    let (k1, s1, c1) = chi_square_uniform(1, 24_000, 11)?;
    let (k2, s2, c2) = chi_square_uniform(2, 115_200, 12)?;
    verdict(
        k1 <= 24 && k2 <= 11_520 && s1 <= c1 && s2 <= c2,
        format!("n=1: {k1}/24 classes, chi2 {s1:.1} ≤ {c1:.1}; n=2: {k2}/11520 classes, chi2 {s2:.1} ≤ {c2:.1}"),
    )
}

fn determinism() -> Outcome {
    let cases: [(&[&str], &[&str]); 5] = [
        (&["gamma-sweep"], &["gamma_sweep.csv"]),
        (&["ite-energy"], &["ite_energy.csv", "ite_energy_runs.csv"]),
        (&["tpq", "--n", "4,5"], &["tpq.csv", "tpq_summary.csv"]),
        (&["tpq", "--n", "4", "--mode", "simulated", "--samples", "1024"], &["tpq.csv", "tpq_summary.csv"]),
        (&["oracle"], &["oracle.csv"]),
    ];
    let mut checked = 0;
    for (args, files) in cases {
        let runs: Vec<tempfile::TempDir> = (0..3).map(|_| tempfile::tempdir()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        for (dir, workers) in runs.iter().zip(["1", "4", "4"]) {
            let mut full = vec!["--seed", "7", "--workers", workers];
            full.extend_from_slice(args);
            run_cli(dir.path(), &full)?;
        }
        for f in files {
            let bodies: Vec<Vec<u8>> =
                runs.iter().map(|d| std::fs::read(d.path().join(f))).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
            if bodies.windows(2).any(|w| w[0] != w[1]) {
                return Err(format!("{f} differs for {args:?}"));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} CSV files byte-identical across workers 1/4 and repeated runs"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 QPD exactness", qpd_exactness),
        ("2 gamma golden values", gamma_golden),
        ("3 diamond-norm bound", diamond_bound),
        ("4 estimator correctness", estimator_correctness),
        ("5 Hoeffding budget", hoeffding_budget),
        ("6 Trotter decay", trotter_decay),
        ("7 TPQ scaling", tpq_scaling),
        ("8 Clifford uniformity", clifford_uniformity),
        ("9 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS criterion {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {name}: {d} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
