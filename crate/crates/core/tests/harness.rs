use assort_dp::harness::{
    empirical_mse, ratio_moment_approx, relative_error, run_experiment, write_json, write_summary_csv,
    write_trials_csv, ExperimentSpec, GraphSource,
};
use assort_dp::mechanisms::{laplace_sample, LaplaceParams};
use assort_dp::{exact_stats, generate_ba, local_ru, Algorithm, BudgetSpec, Role, RunOptions, TrialRng};
use proptest::prelude::*;

fn small_spec() -> ExperimentSpec {
    ExperimentSpec {
        algorithms: vec![Algorithm::Local],
        epsilons: vec![0.5, 1.0, 2.0],
        trials_re: 20,
        trials_sign: 20,
        seed: 3,
        ..ExperimentSpec::new(GraphSource::Ba { n: 500, m: 5, seed: 1 })
    }
}

fn bytes(f: impl Fn(&mut Vec<u8>)) -> Vec<u8> {
    let mut out = Vec::new();
    f(&mut out);
    out
}

#[test]
fn cell_shape() {
    let result = run_experiment(&small_spec()).unwrap();
    assert_eq!(result.cells.len(), 3);
    for cell in &result.cells {
        assert_eq!(cell.estimates().len(), 20);
        assert!(!cell.partial);
        assert!(cell.mean_re.unwrap() >= 0.0);
        let acc = cell.sign_accuracy.unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
    let summary = String::from_utf8(bytes(|o| write_summary_csv(&result, o).unwrap())).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("algorithm,epsilon,mean_re,mse,sign_accuracy,trials"));
    assert_eq!(lines.count(), 3);
    let trials = String::from_utf8(bytes(|o| write_trials_csv(&result, o).unwrap())).unwrap();
    assert!(trials.starts_with("algorithm,epsilon,trial,q_hat,re,sign_correct,seed\n"));
    assert_eq!(trials.lines().count(), 61);
}

#[test]
fn reruns_are_byte_identical_for_any_thread_count() {
    let spec = small_spec();
    let reference = run_experiment(&spec).unwrap();
    let json = bytes(|o| write_json(&reference, o).unwrap());
    let trials = bytes(|o| write_trials_csv(&reference, o).unwrap());
    for threads in [1, 3] {
        let again = run_experiment(&ExperimentSpec { threads: Some(threads), ..spec.clone() }).unwrap();
        assert_eq!(bytes(|o| write_json(&again, o).unwrap()), json);
        assert_eq!(bytes(|o| write_trials_csv(&again, o).unwrap()), trials);
    }
}

#[test]
fn failing_trials_mark_cells_partial() {
    let spec = ExperimentSpec {
        algorithms: vec![Algorithm::Shuffle],
        epsilons: vec![1.0],
        trials_re: 2,
        trials_sign: 2,
        ..ExperimentSpec::new(GraphSource::Ba { n: 100, m: 3, seed: 1 })
    };
    let result = run_experiment(&spec).unwrap();
    let cell = &result.cells[0];
    assert!(cell.partial && !result.is_complete());
    assert_eq!(cell.failures, 2);
    assert!(cell.trials[0].error.as_deref().unwrap().contains("population"));
    assert_eq!(cell.mean_re, None);
}

#[test]
fn mse_is_stable_across_seed_batches() {
    let g = generate_ba(300, 5, 4).unwrap();
    let truth = exact_stats(&g).unwrap().r_u;
    let budget = BudgetSpec::default_for(Algorithm::Local, 2.0, 0.0).unwrap();
    let opts = RunOptions::default();
    let batch = |seed: u64| -> f64 {
        let qs: Vec<f64> = (0..10_000)
            .map(|t| local_ru(&g, &budget, TrialRng::new(seed, 0, t), &opts).unwrap().q_hat)
            .collect();
        empirical_mse(&qs, truth).unwrap()
    };
    let (a, b) = (batch(100), batch(200));
    assert!(a.is_finite() && b.is_finite());
    assert!((a - b).abs() <= 0.1 * a.max(b), "{a} vs {b}");
}

#[test]
fn ratio_approximation_tracks_monte_carlo() {
    let draws = 10_000_000;
    let mut rng = TrialRng::from_seed(31).stream(Role::User, 0);
    let (bx, by) = (LaplaceParams::new(0.2).unwrap(), LaplaceParams::new(0.05).unwrap());
    let mut sum = 0.0;
    for _ in 0..draws {
        let shared = laplace_sample(&by, &mut rng);
        let x = 2.0 + laplace_sample(&bx, &mut rng) + shared;
        let y = 1.0 + shared;
        sum += x / y;
    }
    let empirical = sum / draws as f64;
    // Var(Lap(b)) = 2b²; Cov(X, Y) = Var(shared)
    let (vx, vy) = (2.0 * 0.2f64.powi(2) + 2.0 * 0.05f64.powi(2), 2.0 * 0.05f64.powi(2));
    let (mean, var) = ratio_moment_approx(2.0, 1.0, vx, vy, vy).unwrap();
    assert!(var > 0.0);
    assert!((mean - empirical).abs() <= 0.1 * empirical.abs(), "{mean} vs {empirical}");
}

proptest! {
    #[test]
    fn guarded_re_is_scale_free(est in -1e4f64..1e4, truth in -1e4f64..1e4, k in 0.1f64..10.0, n in 1usize..5000) {
        let eta = n as f64 / 1000.0;
        prop_assume!(truth.abs() >= eta && (k * truth).abs() >= eta);
        let a = relative_error(est, truth, n);
        let b = relative_error(k * est, k * truth, n);
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }
}
