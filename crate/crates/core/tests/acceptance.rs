//! Acceptance runner. Every criterion prints exactly one `PASS` or `FAIL`
//! line; the process exits non-zero when any criterion fails.
//!
//! Run with `cargo test -p rhlp-core --test acceptance`.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use rhlp_core::io::write_benchmark_rows;
use rhlp_core::piecewise::{
    fisher_dp, iterative_fisher, segment_cost, IterativeOptions, PiecewiseConfig,
};
use rhlp_core::rhlp::{
    em_fit, irls_gradient, irls_hessian, irls_objective_q1, irls_solve, m_step_regression,
    parameter_count, select_model, EmConfig, IrlsOptions, LogisticProcess, Posteriors, RhlpParams,
};
use rhlp_core::simulation::{
    run_benchmark, simulate_piecewise, transition_errors, BenchmarkConfig, BenchmarkOutput, Method,
    PiecewiseScenario,
};
use rhlp_core::{GaussianComponent, Signal};

const FLOOR: f64 = 1e-8;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Ordinary least squares through the normal equations, solved by Gaussian
/// elimination with partial pivoting. Deliberately unrelated to the QR code
/// paths used by the library.
fn ols(t: &[f64], x: &[f64], p: usize) -> (Vec<f64>, f64) {
    let d = p + 1;
    let mut a = vec![vec![0.0; d + 1]; d];
    for (&ti, &xi) in t.iter().zip(x) {
        let powers: Vec<f64> = (0..d).map(|j| ti.powi(j as i32)).collect();
        for r in 0..d {
            for c in 0..d {
                a[r][c] += powers[r] * powers[c];
            }
            a[r][d] += powers[r] * xi;
        }
    }
    for col in 0..d {
        let piv = (col..d)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        for r in col + 1..d {
            let f = a[r][col] / a[col][col];
            for c in col..=d {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    let mut beta = vec![0.0; d];
    for r in (0..d).rev() {
        let s: f64 = (r + 1..d).map(|c| a[r][c] * beta[c]).sum();
        beta[r] = (a[r][d] - s) / a[r][r];
    }
    let rss = t
        .iter()
        .zip(x)
        .map(|(&ti, &xi)| {
            let m: f64 = beta
                .iter()
                .enumerate()
                .map(|(j, b)| b * ti.powi(j as i32))
                .sum();
            (xi - m) * (xi - m)
        })
        .sum();
    (beta, rss)
}

fn oracle_segment_cost(t: &[f64], x: &[f64], p: usize) -> f64 {
    let (_, rss) = ols(t, x, p);
    let len = t.len() as f64;
    let sigma2 = (rss / len).max(FLOOR);
    len * sigma2.ln() + rss / sigma2
}

/// Minimum of `J` over every partition of `t[start..]` into `segments`
/// contiguous pieces of at least `min_len` samples.
fn enumerate_best(
    t: &[f64],
    x: &[f64],
    start: usize,
    segments: usize,
    min_len: usize,
    p: usize,
) -> f64 {
    let n = t.len();
    if segments == 1 {
        return if n - start >= min_len {
            oracle_segment_cost(&t[start..], &x[start..], p)
        } else {
            f64::INFINITY
        };
    }
    let mut best = f64::INFINITY;
    for end in start + min_len..=n.saturating_sub((segments - 1) * min_len) {
        let head = oracle_segment_cost(&t[start..end], &x[start..end], p);
        best = best.min(head + enumerate_best(t, x, end, segments - 1, min_len, p));
    }
    best
}

fn dp_global_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD0_0001);
    let mut worst = 0.0_f64;
    let mut failures = 0;
    for _ in 0..200 {
        let k = rng.random_range(2..=3);
        let p = rng.random_range(0..=1);
        let min_len = p + 2;
        let n = rng.random_range(k * min_len..=16);
        let mut t: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        t.sort_by(|a, b| a.total_cmp(b));
        t.dedup();
        if t.len() < k * min_len {
            continue;
        }
        let x: Vec<f64> = t
            .iter()
            .map(|&ti| (2.0 * ti).sin() + 0.3 * normal(&mut rng))
            .collect();
        let signal = Signal::new(t.clone(), x.clone()).unwrap();
        let fit = match fisher_dp(&signal, k, &PiecewiseConfig::new(p)) {
            Ok(f) => f,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let oracle = enumerate_best(&t, &x, 0, k, min_len, p);
        worst = worst.max((fit.criterion_j - oracle).abs());
    }
    outcome(
        failures == 0 && worst <= 1e-9,
        format!("200 signals, max |J_dp - J_enum| = {worst:.2e} (tol 1e-9), fit errors {failures}"),
    )
}

fn em_ascent() -> Outcome {
    let config = EmConfig::<f64>::new(3, 2, 1);
    let mut worst = f64::INFINITY;
    let mut errors = 0;
    for run in 0..50u64 {
        let scenario = if run % 2 == 0 {
            PiecewiseScenario::situation1()
        } else {
            PiecewiseScenario::situation2()
        };
        let (signal, _) = simulate_piecewise(&scenario, 500, 1000 + run).unwrap();
        match em_fit(&signal, &config, run) {
            Ok(r) => {
                for w in r.log_likelihood_trace.windows(2) {
                    worst = worst.min(w[1] - w[0]);
                }
            }
            Err(_) => errors += 1,
        }
    }
    outcome(
        errors == 0 && worst >= -1e-8,
        format!(
            "50 runs at n=500, smallest increment {worst:.3e} (tol -1e-8), fit errors {errors}"
        ),
    )
}

fn irls_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1_4150);
    let (mut grad_err, mut hess_err, mut min_step) = (0.0_f64, 0.0_f64, f64::INFINITY);
    let h = 1e-5;
    for _ in 0..100 {
        let k = rng.random_range(2..=4);
        let q = rng.random_range(0..=2);
        let n = rng.random_range(10..=200);
        let mut t: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        t.sort_by(|a, b| a.total_cmp(b));
        let dim = (k - 1) * (q + 1);
        let free: Vec<f64> = (0..dim).map(|_| 0.5 * normal(&mut rng)).collect();
        let process = LogisticProcess::from_free(k, q, ndarray::ArrayView1::from(&free));
        let mut tau = Array2::<f64>::zeros((n, k));
        for mut row in tau.rows_mut() {
            row.mapv_inplace(|_| rng.random_range(0.01..1.0));
            let s = row.sum();
            row /= s;
        }
        let tau = Posteriors(tau);

        let g = irls_gradient(&process, &tau, &t);
        let hess = irls_hessian(&process, &t);
        let shifted = |j: usize, d: f64| {
            let mut f = free.clone();
            f[j] += d;
            LogisticProcess::from_free(k, q, ndarray::ArrayView1::from(&f))
        };
        let g_scale = g.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let h_scale = hess.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        for j in 0..dim {
            let (plus, minus) = (shifted(j, h), shifted(j, -h));
            let fd = (irls_objective_q1(&plus, &tau, &t) - irls_objective_q1(&minus, &tau, &t))
                / (2.0 * h);
            grad_err = grad_err.max((fd - g[j]).abs() / g_scale);
            let gp = irls_gradient(&plus, &tau, &t);
            let gm = irls_gradient(&minus, &tau, &t);
            for i in 0..dim {
                let fd = (gp[i] - gm[i]) / (2.0 * h);
                hess_err = hess_err.max((fd - hess[[i, j]]).abs() / h_scale);
            }
        }

        let out = irls_solve(&process, &tau, &t, &IrlsOptions::default());
        for w in out.objective_trace.windows(2) {
            min_step = min_step.min(w[1] - w[0]);
        }
    }
    outcome(
        grad_err <= 1e-5 && hess_err <= 1e-4 && min_step >= 0.0,
        format!(
            "100 instances, gradient rel err {grad_err:.2e} (tol 1e-5), Hessian rel err {hess_err:.2e} \
             (tol 1e-4), smallest accepted Q1 step {min_step:.3e}"
        ),
    )
}

fn benchmark_config(replicates: usize, methods: Vec<Method>, seed: u64) -> BenchmarkConfig<f64> {
    let mut config = BenchmarkConfig::new(
        vec![
            PiecewiseScenario::situation1(),
            PiecewiseScenario::situation2(),
        ],
        BenchmarkConfig::<f64>::desk_grid(),
        replicates,
        seed,
    );
    config.methods = methods;
    config.parallel = false;
    config
}

fn transition_recovery(bench: &BenchmarkOutput) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for scenario in [
        PiecewiseScenario::<f64>::situation1(),
        PiecewiseScenario::situation2(),
    ] {
        let errors = |method: Method| {
            let all: Vec<f64> = bench
                .records
                .iter()
                .filter(|r| r.scenario == scenario.name && r.n == 1000 && r.method == method)
                .flat_map(|r| {
                    transition_errors(
                        scenario.interior_transitions(),
                        &r.transitions,
                        scenario.span(),
                    )
                })
                .collect();
            median(all)
        };
        let (rhlp, dp) = (errors(Method::Rhlp), errors(Method::FisherDp));
        // the slack only absorbs rounding in the time grid
        let ok = rhlp <= 0.15 && rhlp <= 2.0 * dp + 1e-9;
        pass &= ok;
        parts.push(format!(
            "{}: rhlp median {rhlp:.4} s, dp median {dp:.4} s",
            scenario.name
        ));
    }
    outcome(
        pass,
        format!("{} (need rhlp <= 0.15 s and <= 2x dp)", parts.join("; ")),
    )
}

fn row(bench: &BenchmarkOutput, scenario: &str, n: usize, method: Method) -> (f64, f64, f64) {
    let r = bench
        .rows
        .iter()
        .find(|r| r.scenario == scenario && r.n == n && r.method == method)
        .expect("benchmark cell");
    (r.misclassification, r.denoising_mse, r.runtime_seconds)
}

fn criterion_orderings(bench: &BenchmarkOutput) -> [Outcome; 3] {
    let mut miss = Vec::new();
    let mut denoise_wins = 0;
    let mut cells = 0;
    let mut speed = Vec::new();
    let mut speed_ok = true;
    let mut miss_ok = true;
    for scenario in ["situation1", "situation2"] {
        for n in BenchmarkConfig::<f64>::desk_grid() {
            let (rm, rd, rt) = row(bench, scenario, n, Method::Rhlp);
            let (dm, dd, dt) = row(bench, scenario, n, Method::FisherDp);
            cells += 1;
            let gap = (rm - dm).abs();
            miss_ok &= gap <= 0.02;
            miss.push(format!("{scenario}/{n} {:.1}pp", 100.0 * (rm - dm)));
            if rd <= dd {
                denoise_wins += 1;
            }
            if n == 1000 {
                speed_ok &= rt < dt;
                speed.push(format!(
                    "{scenario} rhlp {:.1} ms vs dp {:.1} ms",
                    1e3 * rt,
                    1e3 * dt
                ));
            }
        }
    }
    let failures: usize = bench.rows.iter().map(|r| r.failures).sum();
    [
        outcome(
            miss_ok && failures == 0,
            format!(
                "rhlp - dp misclassification per cell: {} (tol 2pp), failed fits {failures}",
                miss.join(", ")
            ),
        ),
        outcome(
            3 * denoise_wins >= 2 * cells,
            format!("rhlp denoising error <= dp in {denoise_wins}/{cells} cells (need >= 2/3)"),
        ),
        outcome(
            speed_ok,
            format!("mean fit runtime at n=1000: {}", speed.join("; ")),
        ),
    ]
}

fn reductions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5ED);
    let n = 300;
    let t: Vec<f64> = (1..=n).map(|i| i as f64 * 5.0 / n as f64).collect();
    let x: Vec<f64> = t
        .iter()
        .map(|&ti| 1.0 - 0.5 * ti + 0.2 * ti * ti + 0.4 * normal(&mut rng))
        .collect();
    let signal = Signal::new(t.clone(), x.clone()).unwrap();

    let fit = em_fit(&signal, &EmConfig::new(1, 2, 1), 0).unwrap();
    let (beta, _) = ols(&t, &x, 2);
    let ols_err = fit.params.components[0]
        .beta
        .iter()
        .zip(&beta)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));

    let gamma = [0, 120, 300];
    let mut tau = Array2::<f64>::zeros((n, 2));
    for k in 0..2 {
        for i in gamma[k]..gamma[k + 1] {
            tau[[i, k]] = 1.0;
        }
    }
    let comps = m_step_regression(&Posteriors(tau), &signal, 2, FLOOR).unwrap();
    let mut binary_err = 0.0_f64;
    for k in 0..2 {
        let (b, rss) = ols(&t[gamma[k]..gamma[k + 1]], &x[gamma[k]..gamma[k + 1]], 2);
        let len = (gamma[k + 1] - gamma[k]) as f64;
        binary_err = b
            .iter()
            .zip(&comps[k].beta)
            .fold(binary_err, |m, (a, c)| m.max((a - c).abs()))
            .max((rss / len - comps[k].sigma2).abs());
    }

    let mut iter_err = 0.0_f64;
    let mut moved = 0;
    for (s, scenario) in [
        PiecewiseScenario::<f64>::situation1(),
        PiecewiseScenario::situation2(),
    ]
    .iter()
    .enumerate()
    {
        let (sig, _) = simulate_piecewise(scenario, 400, 77 + s as u64).unwrap();
        let config = PiecewiseConfig::new(2);
        let dp = fisher_dp(&sig, 3, &config).unwrap();
        let it =
            iterative_fisher(&sig, &config, &dp.partition, &IterativeOptions::default()).unwrap();
        iter_err = iter_err.max((it.criterion_j - dp.criterion_j).abs());
        if it.partition != dp.partition {
            moved += 1;
        }
    }
    // segment_cost should also agree with the oracle on one of these pieces
    let (cost, _) = segment_cost(&signal, 0, 120, &PiecewiseConfig::new(2)).unwrap();
    let cost_err = (cost - oracle_segment_cost(&t[..120], &x[..120], 2)).abs();

    outcome(
        ols_err <= 1e-9 && binary_err <= 1e-9 && iter_err <= 1e-9 && moved == 0,
        format!(
            "K=1 beta err {ols_err:.2e}; binary-tau M-step err {binary_err:.2e}; iterative from DP optimum \
             |dJ| {iter_err:.2e}, partitions moved {moved}; segment cost err {cost_err:.2e} (tol 1e-9)"
        ),
    )
}

fn nu_audit() -> Outcome {
    let mut mismatches = Vec::new();
    let mut checked = 0;
    for k in 1..=4 {
        for p in 0..=3 {
            for q in 0..=2 {
                let comps = (0..k)
                    .map(|_| GaussianComponent::new(ndarray::Array1::zeros(p + 1), 1.0))
                    .collect();
                let params = RhlpParams::new(LogisticProcess::<f64>::zeros(k, q), comps).unwrap();
                let counted = params
                    .components
                    .iter()
                    .map(|c| c.beta.len() + 1)
                    .sum::<usize>()
                    + params.logistic.free_params().len();
                let formula = k * (p + q + 3) - (q + 1);
                checked += 1;
                if counted != formula || parameter_count(k, p, q) != formula {
                    mismatches.push(format!("({k},{p},{q})"));
                }
            }
        }
    }
    outcome(
        mismatches.is_empty(),
        format!(
            "{checked} (K,p,q) triples, mismatches: [{}]",
            mismatches.join(" ")
        ),
    )
}

fn model_selection() -> Outcome {
    let scenario = PiecewiseScenario::<f64>::situation1();
    let base = EmConfig::new(3, 2, 1);
    let mut picks = Vec::new();
    for r in 0..20u64 {
        let (signal, _) = simulate_piecewise(&scenario, 1000, 5000 + r).unwrap();
        let sel = select_model(&signal, &[1, 2, 3, 4, 5], &[2], 1, &base, r);
        picks.push(sel.best.map_or(0, |b| b.params.k()));
    }
    let hits = picks.iter().filter(|&&k| k == 3).count();
    outcome(
        hits >= 15,
        format!("K=3 chosen in {hits}/20 replicates (need >= 15); picks {picks:?}"),
    )
}

fn csv_bytes(bench: &BenchmarkOutput) -> Vec<u8> {
    let mut out = Vec::new();
    write_benchmark_rows(&mut out, &bench.rows).unwrap();
    out
}

fn drop_runtime_column(bytes: &[u8]) -> Vec<String> {
    String::from_utf8_lossy(bytes)
        .lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(5);
            f.join(",")
        })
        .collect()
}

fn determinism() -> Outcome {
    let mut untimed = benchmark_config(3, Method::ALL.to_vec(), 99);
    untimed.record_timing = false;
    untimed.parallel = true;
    let a = csv_bytes(&run_benchmark(&untimed).unwrap());
    let b = csv_bytes(&run_benchmark(&untimed).unwrap());
    let mut timed = untimed.clone();
    timed.record_timing = true;
    let c = csv_bytes(&run_benchmark(&timed).unwrap());
    let identical = a == b;
    let same_criteria = drop_runtime_column(&a) == drop_runtime_column(&c);
    outcome(
        identical && same_criteria,
        format!(
            "untimed CSVs bit-identical: {identical} ({} bytes); timed run matches on every non-runtime column: \
             {same_criteria}",
            a.len()
        ),
    )
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, f64) {
    let clock = Instant::now();
    let o = f();
    (o, clock.elapsed().as_secs_f64())
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(&str, bool)> = Vec::new();
    let mut report = |name: &'static str, (o, secs): (Outcome, f64)| {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("{verdict} {name}: {} [{secs:.1} s]", o.detail);
        results.push((name, o.pass));
    };

    report("1 dp-global-optimality", timed(dp_global_optimality));
    report("2 em-ascent", timed(em_ascent));
    report(
        "3 irls-derivatives-and-monotonicity",
        timed(irls_correctness),
    );

    let clock = Instant::now();
    let bench = run_benchmark(&benchmark_config(
        20,
        vec![Method::Rhlp, Method::FisherDp],
        2026,
    ))
    .unwrap();
    let bench_secs = clock.elapsed().as_secs_f64();
    report(
        "4 transition-recovery",
        (transition_recovery(&bench), bench_secs),
    );
    let [a, b, c] = criterion_orderings(&bench);
    report("5a misclassification-similar", (a, 0.0));
    report("5b denoising-ordering", (b, 0.0));
    report("5c runtime-ordering", (c, 0.0));

    report("6 reductions", timed(reductions));
    report("7 parameter-count-audit", timed(nu_audit));
    report("8 bic-selects-three", timed(model_selection));
    report("9 benchmark-determinism", timed(determinism));

    let failed: Vec<&str> = results
        .iter()
        .filter(|(_, pass)| !pass)
        .map(|(n, _)| *n)
        .collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.1} s",
        results.len() - failed.len(),
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
