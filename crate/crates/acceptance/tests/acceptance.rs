//! Acceptance run. Prints one verdict line per criterion and exits non-zero
//! if any criterion fails. Criterion 1 needs the SNAP files; point
//! `ASSORT_DP_DATA_DIR` at a directory holding `facebook_combined.txt`,
//! `deezer_europe_edges.csv` and `musae_git_edges.csv`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use assort_dp::estimators::{decentral_ru, local_ru, shuffle_ru, Algorithm, BudgetSpec, RunOptions};
use assort_dp::graph::{
    edge_form_stats, exact_stats, generate_ba, generate_gnp, load_edge_list_file, Graph, LoadOptions,
};
use assort_dp::harness::{
    run_experiment, write_summary_csv, ExperimentResult, ExperimentSpec, GraphSource,
};
use assort_dp::mechanisms::{laplace_raw_moment, laplace_sample, rr_flip_prob, LaplaceParams, RRParams};
use assort_dp::rng::{splitmix64, Role, TrialRng};
use assort_dp::shuffle::{amplified_epsilon, epsilon0_cap, local_budget_for};
use assort_dp::Error;
use assort_dp_validation::{binomial_floor, mean, sem, Outcome, Report};

fn main() -> ExitCode {
    let mut report = Report::default();
    report.run("C1", "exact statistics on SNAP datasets", criterion_1);
    report.run("C2", "hand-graph oracles and r_d cross-check", criterion_2);
    report.run("C3", "noiseless equivalence", criterion_3);
    report.run("C4", "unbiasedness", criterion_4);
    report.run("C5", "mechanism statistics", criterion_5);
    report.run("C6", "amplification accounting", criterion_6);
    report.run("C7", "tail-bound coverage", criterion_7);

    let started = Instant::now();
    let grid = grid_spec(None);
    let first = run_experiment(&grid);
    let grid_time = started.elapsed();
    match &first {
        Ok(result) => {
            report.run("C8a", "mean RE non-increasing from eps=0.25 to eps=2", || criterion_8a(result));
            report.run("C8b", "median RE ordering at eps=1", || criterion_8b(result));
            report.run("C8c", "shuffle sign accuracy at eps=2", || criterion_8c(result));
            report.run("C8t", "grid runtime under 30 min", || {
                Outcome::check(grid_time.as_secs() < 1800, format!("{:.1}s", grid_time.as_secs_f64()))
            });
            report.run("C9", "byte-identical reruns across thread counts", || criterion_9(result));
            report.run("INV", "decentral mean RE <= local mean RE at every eps", || {
                decentral_not_worse(result)
            });
        }
        Err(e) => {
            let msg = format!("experiment failed: {e}");
            for id in ["C8a", "C8b", "C8c", "C8t", "C9", "INV"] {
                report.run(id, "criterion-8 grid", || Outcome::check(false, msg.clone()));
            }
        }
    }

    println!("acceptance: {}", report.summary());
    let failed = report.failures();
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}

fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
    Graph::from_edges(n, edges.iter().copied()).unwrap()
}

/// `k`-regular circulant graph on `n` nodes with offsets `1..=k/2`.
fn circulant(n: usize, half: usize) -> Graph {
    let edges: Vec<_> = (0..n).flat_map(|i| (1..=half).map(move |s| (i, (i + s) % n))).collect();
    graph(n, &edges)
}

fn complete(n: usize) -> Graph {
    let edges: Vec<_> = (0..n).flat_map(|i| (0..i).map(move |j| (i, j))).collect();
    graph(n, &edges)
}

fn hypercube(dim: u32) -> Graph {
    let n = 1usize << dim;
    let edges: Vec<_> = (0..n)
        .flat_map(|i| (0..dim).map(move |b| (i, i ^ (1 << b))))
        .filter(|(i, j)| i < j)
        .collect();
    graph(n, &edges)
}

fn petersen() -> Graph {
    let mut edges = Vec::new();
    for i in 0..5 {
        edges.push((i, (i + 1) % 5));
        edges.push((i, i + 5));
        edges.push((5 + i, 5 + (i + 2) % 5));
    }
    graph(10, &edges)
}

/// Deterministic small random graphs: G(n, p) and BA alternately.
fn random_graphs(count: usize, max_n: usize, salt: u64) -> Vec<Graph> {
    let mut out = Vec::with_capacity(count);
    let mut k = 0u64;
    while out.len() < count {
        let h = splitmix64(salt ^ splitmix64(k));
        k += 1;
        let n = 3 + (h % (max_n as u64 - 2)) as usize;
        let g = if h >> 63 == 0 {
            let p = 0.02 + 0.5 * ((h >> 20) % 1000) as f64 / 1000.0;
            generate_gnp(n, p, h).unwrap()
        } else {
            let m = 1 + ((h >> 20) as usize % (n - 1).min(8));
            generate_ba(n, m, h).unwrap()
        };
        if g.num_edges() > 0 {
            out.push(g);
        }
    }
    out
}

fn criterion_1() -> Outcome {
    let Some(dir) = std::env::var_os("ASSORT_DP_DATA_DIR").map(PathBuf::from) else {
        return Outcome::skip("ASSORT_DP_DATA_DIR not set; C2 substitutes");
    };
    let plain = LoadOptions::default();
    let csv = LoadOptions { skip_header: true, ..Default::default() };
    let cases = [
        ("facebook_combined.txt", plain.clone(), 870.36, 0.01),
        ("deezer_europe_edges.csv", csv.clone(), 29.19, 0.01),
        ("musae_git_edges.csv", csv, -162_127.53, 1.0),
    ];
    let parts = cases
        .into_iter()
        .map(|(file, options, expect, tol)| {
            let path = dir.join(file);
            if !path.exists() {
                return Outcome::skip(format!("{file} missing"));
            }
            let started = Instant::now();
            let stats = load_edge_list_file(&path, &options).and_then(|l| exact_stats(&l.graph));
            let secs = started.elapsed().as_secs_f64();
            match stats {
                Ok(s) => Outcome::check(
                    (s.r_u - expect).abs() <= tol && secs < 10.0,
                    format!("{file}: r_u={:.4} (want {expect} +- {tol}) in {secs:.2}s", s.r_u),
                ),
                Err(e) => Outcome::check(false, format!("{file}: {e}")),
            }
        })
        .collect();
    Outcome::all(parts)
}

fn criterion_2() -> Outcome {
    let mut parts = Vec::new();
    let p3 = exact_stats(&graph(3, &[(0, 1), (1, 2)])).unwrap();
    parts.push(Outcome::check(p3.r_u == -0.25, format!("P3 r_u={}", p3.r_u)));
    let star = exact_stats(&graph(4, &[(0, 1), (0, 2), (0, 3)])).unwrap();
    parts.push(Outcome::check(
        star.r_u == -1.0 && star.r == Some(-1.0),
        format!("K1,3 r_u={} r={:?}", star.r_u, star.r),
    ));

    let mut regular: Vec<(String, Graph)> = Vec::new();
    for n in 4..=12 {
        regular.push((format!("C{n}"), circulant(n, 1)));
    }
    for n in 2..=8 {
        regular.push((format!("K{n}"), complete(n)));
    }
    for dim in 2..=6 {
        regular.push((format!("Q{dim}"), hypercube(dim)));
    }
    regular.push(("Petersen".into(), petersen()));
    for (n, half) in [(20, 2), (31, 3), (64, 5)] {
        regular.push((format!("circulant({n},{})", 2 * half), circulant(n, half)));
    }
    let bad: Vec<_> = regular
        .iter()
        .filter(|(_, g)| {
            let s = exact_stats(g).unwrap();
            !(s.r_u == 0.0 && s.r_d == 0.0 && s.r.is_none())
        })
        .map(|(name, _)| name.clone())
        .collect();
    parts.push(Outcome::check(
        bad.is_empty(),
        format!("{} regular graphs exactly 0/0/undefined, offenders {bad:?}", regular.len()),
    ));

    let graphs = random_graphs(1000, 200, 0xc2);
    let worst = graphs
        .iter()
        .map(|g| {
            let exact = exact_stats(g).unwrap();
            let (ru, rd) = edge_form_stats(g).unwrap();
            (exact.r_d - rd).abs().max((exact.r_u - ru).abs())
        })
        .fold(0.0, f64::max);
    parts.push(Outcome::check(
        worst <= 1e-9,
        format!("1000 random graphs, max |node form - edge form| = {worst:.3e}"),
    ));
    Outcome::all(parts)
}

fn criterion_3() -> Outcome {
    let started = Instant::now();
    let graphs: Vec<Graph> = (0..50u64)
        .map(|k| {
            let h = splitmix64(0xc3 ^ k);
            let n = 10 + (h % 91) as usize;
            if k % 2 == 0 { generate_gnp(n, 0.1, h) } else { generate_ba(n, 3, h) }.unwrap()
        })
        .filter(|g| g.num_edges() > 0)
        .collect();
    let opts = RunOptions::noiseless();
    let mut worst = 0.0f64;
    for (k, g) in graphs.iter().enumerate() {
        let truth = exact_stats(g).unwrap().r_u;
        let rng = TrialRng::from_seed(k as u64);
        let estimates = [
            local_ru(g, &BudgetSpec::local(1.0, 1.0).unwrap(), rng, &opts),
            shuffle_ru(g, &BudgetSpec::shuffle(1.0, 0.4, 1e-8).unwrap(), rng, &opts),
            decentral_ru(g, &BudgetSpec::decentral(1.0, 1.0, 1e-8).unwrap(), rng, &opts),
        ];
        for e in estimates {
            match e {
                Ok(e) => {
                    let err = (e.q_hat - truth).abs();
                    worst = worst.max(if truth == 0.0 { err } else { err / truth.abs() });
                }
                Err(e) => return Outcome::check(false, format!("graph {k}: {e}")),
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    Outcome::check(
        worst <= 1e-9 && secs < 5.0,
        format!("{} graphs (ER p=0.1, BA m=3) x 3 estimators, max relative error {worst:.3e}, {secs:.2}s", graphs.len()),
    )
}

fn criterion_4() -> Outcome {
    const TRIALS: u64 = 20_000;
    let g = generate_ba(300, 5, 4).unwrap();
    let truth = exact_stats(&g).unwrap().r_u;
    let opts = RunOptions::default();
    let legs = [(Algorithm::Local, 2.0), (Algorithm::Shuffle, 1.0), (Algorithm::Decentral, 2.0)];
    let parts = legs
        .into_iter()
        .map(|(algorithm, eps)| {
            let started = Instant::now();
            let budget = match BudgetSpec::default_for(algorithm, eps, 1e-8) {
                Ok(b) => b,
                Err(e) => return Outcome::check(false, format!("{algorithm}: {e}")),
            };
            let mut qs = Vec::with_capacity(TRIALS as usize);
            for t in 0..TRIALS {
                let rng = TrialRng::new(4, algorithm as u64, t);
                let est = match algorithm {
                    Algorithm::Local => local_ru(&g, &budget, rng, &opts),
                    Algorithm::Shuffle => shuffle_ru(&g, &budget, rng, &opts),
                    Algorithm::Decentral => decentral_ru(&g, &budget, rng, &opts),
                };
                match est {
                    Ok(e) => qs.push(e.q_hat),
                    Err(e) => {
                        return Outcome::check(false, format!("{algorithm} eps={eps}: {e}"));
                    }
                }
            }
            let (m, s) = (mean(&qs), sem(&qs));
            let secs = started.elapsed().as_secs_f64();
            Outcome::check(
                (m - truth).abs() <= 4.0 * s && secs < 600.0,
                format!(
                    "{algorithm} eps={eps}: mean {m:.4} vs r_u {truth:.4}, |diff|/SEM = {:.2} ({secs:.1}s)",
                    (m - truth).abs() / s
                ),
            )
        })
        .collect();
    Outcome::all(parts)
}

fn criterion_5() -> Outcome {
    let mut parts = Vec::new();
    for (name, eps) in [("0.5", 0.5), ("1", 1.0), ("ln 3", 3f64.ln())] {
        let rr = RRParams::new(eps).unwrap();
        let mut rng = TrialRng::from_seed(5).stream(Role::User, eps.to_bits());
        let draws = 1_000_000;
        let flips = (0..draws).filter(|_| rr.flips(&mut rng)).count();
        let freq = flips as f64 / draws as f64;
        let p = rr_flip_prob(eps).unwrap();
        parts.push(Outcome::check(
            (freq - p).abs() <= 0.003,
            format!("RR eps={name}: freq {freq:.5} vs p {p:.5}"),
        ));
    }

    for (center, scale) in [(0.0, 1.0), (1.5, 2.0)] {
        let lap = LaplaceParams::new(scale).unwrap();
        let mut rng = TrialRng::from_seed(55).stream(Role::User, (center * 10.0) as u64);
        let draws = 10_000_000usize;
        let mut sums = [0.0f64; 3];
        for _ in 0..draws {
            let x = center + laplace_sample(&lap, &mut rng);
            let x2 = x * x;
            sums[0] += x;
            sums[1] += x2;
            sums[2] += x2 * x2;
        }
        for (k, order) in [1u32, 2, 4].into_iter().enumerate() {
            let sample = sums[k] / draws as f64;
            let expect = laplace_raw_moment(center, scale, order).unwrap();
            let second = laplace_raw_moment(center, scale, 2 * order).unwrap();
            let se = ((second - expect * expect) / draws as f64).sqrt();
            parts.push(Outcome::check(
                (sample - expect).abs() <= 3.0 * se,
                format!(
                    "Lap({center},{scale}) order {order}: {sample:.4} vs {expect:.4} ({:.2} SE)",
                    (sample - expect).abs() / se
                ),
            ));
        }
    }
    Outcome::all(parts)
}

fn criterion_6() -> Outcome {
    let mut parts = Vec::new();
    let ns = [1_000u64, 3_000, 10_000, 100_000, 1_000_000];
    let deltas = [1e-8, 1e-6, 1e-3];

    let mut increasing = true;
    let mut below = true;
    let mut worst_trip = 0.0f64;
    for &n in &ns {
        for &delta in &deltas {
            let cap = epsilon0_cap(n, delta).unwrap();
            let grid: Vec<f64> = (1..=200).map(|k| (cap * k as f64 / 200.0).min(cap)).collect();
            let amps: Vec<f64> = grid.iter().map(|&e0| amplified_epsilon(n, e0, delta).unwrap()).collect();
            increasing &= amps.windows(2).all(|w| w[1] > w[0]);
            below &= grid.iter().zip(&amps).all(|(e0, e)| e <= e0);
            for &e0 in grid.iter().step_by(10).take_while(|&&e0| e0 < cap) {
                let back = local_budget_for(n, amplified_epsilon(n, e0, delta).unwrap(), delta).unwrap();
                worst_trip = worst_trip.max((back - e0).abs());
            }
        }
    }
    parts.push(Outcome::check(increasing, "strictly increasing in eps0 on every (n, delta)"));
    parts.push(Outcome::check(below, "eps <= eps0 on every grid point"));
    parts.push(Outcome::check(worst_trip <= 1e-6, format!("round trip max error {worst_trip:.2e}")));

    let mut decreasing = true;
    for &delta in &deltas {
        let cap = epsilon0_cap(ns[0], delta).unwrap();
        for k in 1..=20 {
            let e0 = (cap * k as f64 / 20.0).min(cap);
            let amps: Vec<f64> = ns.iter().map(|&n| amplified_epsilon(n, e0, delta).unwrap()).collect();
            decreasing &= amps.windows(2).all(|w| w[1] < w[0]);
        }
    }
    parts.push(Outcome::check(decreasing, "strictly decreasing in n at fixed eps0"));

    let cap = epsilon0_cap(10_000, 1e-8).unwrap();
    let above = matches!(amplified_epsilon(10_000, cap + 1e-3, 1e-8), Err(Error::AboveCap { .. }));
    let small = matches!(epsilon0_cap(10, 1e-8), Err(Error::InfeasiblePopulation { .. }))
        && matches!(local_budget_for(300, 1.0, 1e-8), Err(Error::InfeasiblePopulation { .. }));
    parts.push(Outcome::check(above && small, "cap and population errors raised"));
    Outcome::all(parts)
}

fn criterion_7() -> Outcome {
    const RUNS: u64 = 10_000;
    let delta = 0.05;
    let g = generate_ba(500, 5, 7).unwrap();
    let budget = BudgetSpec::default_for(Algorithm::Decentral, 2.0, delta).unwrap();
    let degrees: Vec<f64> = g.degrees().map(|d| d as f64).collect();
    let mut sorted = degrees.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let true_bound = 2.0 * (sorted[0] + sorted[1]);

    let (mut covered, mut delta_covered) = (0usize, 0usize);
    for run in 0..RUNS {
        let est = match decentral_ru(&g, &budget, TrialRng::new(7, 0, run), &RunOptions::default()) {
            Ok(e) => e,
            Err(e) => return Outcome::check(false, e.to_string()),
        };
        let art = est.decentral.expect("decentral artifacts");
        covered += art.upper_bounds.iter().zip(&degrees).filter(|(u, d)| u >= d).count();
        delta_covered += usize::from(art.sensitivity >= true_bound);
    }
    let user_draws = RUNS as usize * g.num_nodes();
    let user_rate = covered as f64 / user_draws as f64;
    let delta_rate = delta_covered as f64 / RUNS as f64;
    let delta1 = budget.delta1();
    // d* ≥ d holds with probability exactly 1 - δ₁, so allow three standard errors.
    let user_floor = binomial_floor(1.0 - delta1, user_draws);
    Outcome::all(vec![
        Outcome::check(
            user_rate >= user_floor,
            format!("Pr[d* >= d] = {user_rate:.5} (1 - delta1 = {}, floor {user_floor:.5})", 1.0 - delta1),
        ),
        Outcome::check(
            delta_rate >= 1.0 - delta,
            format!("Pr[Delta >= 2(d(1)+d(2))] = {delta_rate:.4} (need {})", 1.0 - delta),
        ),
    ])
}

fn grid_spec(threads: Option<usize>) -> ExperimentSpec {
    ExperimentSpec {
        seed: 2024,
        threads,
        ..ExperimentSpec::new(GraphSource::Ba { n: 2000, m: 10, seed: 8 })
    }
}

fn mean_re(result: &ExperimentResult, algorithm: Algorithm, eps: f64) -> f64 {
    result.cell(algorithm, eps).and_then(|c| c.mean_re).unwrap_or(f64::NAN)
}

fn criterion_8a(result: &ExperimentResult) -> Outcome {
    let parts = Algorithm::ALL
        .into_iter()
        .map(|a| {
            let res: Vec<f64> = result
                .cells
                .iter()
                .filter(|c| c.algorithm == a)
                .map(|c| c.mean_re.unwrap_or(f64::NAN))
                .collect();
            let (lo, hi) = (mean_re(result, a, 0.25), mean_re(result, a, 2.0));
            let stepwise = res.windows(2).all(|w| w[1] <= w[0]);
            let trace = res.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(" ");
            Outcome::check(
                lo >= hi,
                format!("{a}: {lo:.3} -> {hi:.3} (grid: {trace}; stepwise {stepwise})"),
            )
        })
        .collect();
    Outcome::all(parts)
}

fn criterion_8b(result: &ExperimentResult) -> Outcome {
    let med = |a| result.cell(a, 1.0).and_then(|c| c.median_re).unwrap_or(f64::NAN);
    let (s, d, l) = (med(Algorithm::Shuffle), med(Algorithm::Decentral), med(Algorithm::Local));
    Outcome::check(
        s < d && d < l,
        format!("shuffle {s:.3} < decentral {d:.3} < local {l:.3}"),
    )
}

fn criterion_8c(result: &ExperimentResult) -> Outcome {
    let cell = result.cell(Algorithm::Shuffle, 2.0);
    let acc = cell.and_then(|c| c.sign_accuracy).unwrap_or(f64::NAN);
    let runs = cell.map_or(0, |c| c.trials.len());
    Outcome::check(acc >= 0.95, format!("{acc:.2} over {runs} runs (need >= 0.95)"))
}

fn summary_bytes(result: &ExperimentResult) -> Vec<u8> {
    let mut out = Vec::new();
    write_summary_csv(result, &mut out).unwrap();
    out
}

fn criterion_9(first: &ExperimentResult) -> Outcome {
    let reference = summary_bytes(first);
    let parts = [1usize, 4]
        .into_iter()
        .map(|threads| match run_experiment(&grid_spec(Some(threads))) {
            Ok(r) => Outcome::check(
                summary_bytes(&r) == reference,
                format!("{threads} thread(s): {} bytes identical", reference.len()),
            ),
            Err(e) => Outcome::check(false, format!("{threads} thread(s): {e}")),
        })
        .collect();
    Outcome::all(parts)
}

fn decentral_not_worse(result: &ExperimentResult) -> Outcome {
    let worse: Vec<String> = result
        .cells
        .iter()
        .filter(|c| c.algorithm == Algorithm::Local)
        .filter_map(|c| {
            let (d, l) = (mean_re(result, Algorithm::Decentral, c.epsilon), c.mean_re?);
            (d > l).then(|| format!("eps={}: {d:.3} > {l:.3}", c.epsilon))
        })
        .collect();
    Outcome::check(worse.is_empty(), if worse.is_empty() { "all grid points".into() } else { worse.join(", ") })
}
