//! Acceptance suite: one test per acceptance criterion, each printing a
//! PASS line with its measured numbers. Every tolerance is pinned in the
//! assertions; all randomness is seeded, so outcomes are reproducible.

use obsim::fading::{
    marginal_cdf, sample_sinr_matrix, upper_quantile, ChannelKind, ChannelModel, Statistic,
};
use obsim::optimizer::{
    grid_step_modulus, homogeneous_search, multi_start_coordinate_ascent, simplex_grid, RateOracle,
    ThresholdPolicyKind,
};
use obsim::policy::{random_box_union_policy, random_max_sinr_policy, FeedbackRule, PolicySpec};
use obsim::scheduler::ergodic_rate;
use obsim::threshold::{
    classify_events_report, verify_monotone_chain_detailed, verify_theorem1_detailed,
};

fn rayleigh(beams: usize, users: usize) -> ChannelModel {
    ChannelModel::new(ChannelKind::Rayleigh, 1.0, beams, users)
}

/// Criterion 1: for 20 seeded random box-union policies (n = 10, M = 2,
/// Rayleigh snr 1), switching user 1 to the load-matched general threshold
/// rule satisfies rate_diff >= -3 SE in 20/20 paired runs at 1e5 trials, and
/// the loads match within 1e-3 * n.
#[test]
fn criterion_1_single_switch_dominance_general() {
    let model = rayleigh(2, 10);
    let trials = 100_000;
    let mut worst_diff_sigma = f64::INFINITY;
    let mut worst_load_gap = 0.0f64;
    for i in 0..20u64 {
        let policy = random_box_union_policy(10, 2, 3, 1000 + i, format!("g{i}")).unwrap();
        let report =
            verify_theorem1_detailed(&policy, &model, trials, 4242 + i, 1_000_000, 0).unwrap();
        let sigma = if report.rate_diff_se > 0.0 {
            report.rate_diff / report.rate_diff_se
        } else {
            f64::INFINITY
        };
        worst_diff_sigma = worst_diff_sigma.min(sigma);
        worst_load_gap = worst_load_gap.max(report.load_gap);
        assert!(
            report.rate_pass,
            "policy {i}: diff {} se {}",
            report.rate_diff, report.rate_diff_se
        );
        assert!(
            report.load_gap <= 1e-3 * 10.0,
            "policy {i}: load gap {}",
            report.load_gap
        );
    }
    println!(
        "criterion 1 PASS: 20/20 switch differences >= -3 SE (worst {worst_diff_sigma:.2} sigma), max load gap {worst_load_gap:.2e} <= 1e-2"
    );
}

/// Criterion 2: for 5 seeded random policies with n = 5, the full switching
/// chain is rate-nondecreasing within -3 SE per step at 1e5 trials with
/// constant load along the chain.
#[test]
fn criterion_2_switching_chain_general() {
    let model = rayleigh(2, 5);
    let trials = 100_000;
    let mut worst_step = f64::INFINITY;
    for i in 0..5u64 {
        let policy = random_box_union_policy(5, 2, 3, 2000 + i, format!("c{i}")).unwrap();
        let report =
            verify_monotone_chain_detailed(&policy, &model, trials, 5150 + i, 1_000_000).unwrap();
        for step in &report.steps {
            let sigma = if step.std_error > 0.0 {
                step.diff / step.std_error
            } else {
                f64::INFINITY
            };
            worst_step = worst_step.min(sigma);
        }
        assert!(report.rate_pass, "policy {i}: {:?}", report.steps);
        assert!(
            report.load_gap <= 1e-3 * 5.0,
            "policy {i}: load gap {}",
            report.load_gap
        );
    }
    println!("criterion 2 PASS: 5/5 chains nondecreasing (worst step {worst_step:.2} sigma), loads constant");
}

/// Criterion 3: criteria 1 and 2 with maximum-SINR policies and max-SINR
/// threshold matching: 20/20 single switches and 5/5 chains.
#[test]
fn criterion_3_max_sinr_analogues() {
    let model = rayleigh(2, 10);
    let trials = 100_000;
    for i in 0..20u64 {
        let policy = random_max_sinr_policy(10, 3, 3000 + i, format!("m{i}")).unwrap();
        let report =
            verify_theorem1_detailed(&policy, &model, trials, 6200 + i, 1_000_000, 0).unwrap();
        assert_eq!(
            report.family,
            obsim::threshold::ThresholdFamily::MaxSinr,
            "policy {i} family"
        );
        assert!(
            report.rate_pass,
            "policy {i}: diff {} se {}",
            report.rate_diff, report.rate_diff_se
        );
        assert!(
            report.load_gap <= 1e-3 * 10.0,
            "policy {i}: load gap {}",
            report.load_gap
        );
    }
    let chain_model = rayleigh(2, 5);
    for i in 0..5u64 {
        let policy = random_max_sinr_policy(5, 3, 3500 + i, format!("mc{i}")).unwrap();
        let report =
            verify_monotone_chain_detailed(&policy, &chain_model, trials, 7300 + i, 1_000_000)
                .unwrap();
        assert!(report.rate_pass, "chain {i}: {:?}", report.steps);
        assert!(
            report.load_gap <= 1e-3 * 5.0,
            "chain {i}: load gap {}",
            report.load_gap
        );
    }
    println!("criterion 3 PASS: 20/20 max-SINR switches and 5/5 max-SINR chains");
}

/// Criterion 4: over 1e5 sampled matrices across 10 random matched pairs the
/// rate-based and region-based event classifiers agree on every realization,
/// and the per-user mass balance between the two single-rule-request regions
/// holds within 3 SE.
#[test]
fn criterion_4_classifier_agreement_and_mass_balance() {
    let model = rayleigh(2, 6);
    let trials_per_pair = 10_000;
    let mut total = 0u64;
    let mut disagreements = 0u64;
    for i in 0..10u64 {
        let policy = if i % 2 == 0 {
            random_box_union_policy(6, 2, 3, 4000 + i, format!("e{i}")).unwrap()
        } else {
            random_max_sinr_policy(6, 3, 4000 + i, format!("e{i}")).unwrap()
        };
        let report =
            classify_events_report(&policy, &model, trials_per_pair, 8400 + i, 400_000).unwrap();
        total += trials_per_pair;
        disagreements += report.disagreements;
        assert!(
            report.mass_pass,
            "pair {i} mass balance: {:?}",
            report.mass_balance
        );
        let f = report.freqs;
        assert!((f.loss + f.gain + f.neutral - 1.0).abs() < 1e-12);
    }
    assert_eq!(disagreements, 0, "classifier disagreements out of {total}");
    println!(
        "criterion 4 PASS: classifiers agree on {total}/{total} realizations, mass balance within 3 SE for all users"
    );
}

/// Criterion 5: with every threshold at 1.5 the general and maximum-SINR
/// threshold rules make identical decisions on all sampled vectors for
/// M in {2, 3} — at most one beam can sit above 1, so a super-unity
/// threshold reduces the general rule to the best-beam rule.
#[test]
fn criterion_5_general_reduces_to_max_sinr_above_one() {
    for beams in [2usize, 3] {
        let model = rayleigh(beams, 1);
        let gtfp = FeedbackRule::general_threshold(0, 1.5);
        let mtfp = FeedbackRule::max_sinr_threshold(0, 1.5);
        let mut mismatches = 0u64;
        for t in 0..1_000_000u64 {
            let gamma = sample_sinr_matrix(&model, t, 97 + beams as u64).unwrap();
            let v = gamma.user_vector(0);
            let a = gtfp.evaluate(v).unwrap();
            let b = mtfp.evaluate(v).unwrap();
            if a != b {
                mismatches += 1;
            }
        }
        assert_eq!(mismatches, 0, "M = {beams}");
    }
    println!("criterion 5 PASS: 0 decision mismatches in 1e6 vectors for M = 2 and M = 3");
}

/// Criterion 6: single user, single beam, Rayleigh snr 1, always feed back.
/// The ergodic rate must match the quadrature value of the exponential
/// average of log(1 + x) within 3 SE at 1e6 trials.
#[test]
fn criterion_6_single_user_rate_matches_quadrature() {
    // Independent oracle: Simpson integration of log(1 + x) exp(-x).
    let oracle = {
        let f = |x: f64| x.ln_1p() * (-x).exp();
        let (a, b, n) = (0.0, 60.0, 600_000);
        let h = (b - a) / n as f64;
        let mut sum = f(a) + f(b);
        for i in 1..n {
            sum += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        sum * h / 3.0
    };
    assert!((oracle - 0.59635).abs() < 1e-4, "oracle = {oracle}");

    let model = rayleigh(1, 1);
    let policy = PolicySpec::gtfp(1, 0.0, "always").unwrap();
    let est = ergodic_rate(&policy, &model, 1_000_000, 31).unwrap();
    let gap = (est.mean - oracle).abs();
    assert!(
        gap <= 3.0 * est.std_error,
        "mean {} vs oracle {oracle} (se {})",
        est.mean,
        est.std_error
    );
    println!(
        "criterion 6 PASS: rate {:.5} vs quadrature {:.5} within {:.2} SE",
        est.mean,
        oracle,
        gap / est.std_error
    );
}

/// Criterion 7: the closed-form Rayleigh beamforming marginal matches the
/// generative sampler's empirical cdf at 20 points within 3e-3 at 1e6
/// samples, and the quantile/cdf round trip errs below 1e-4.
#[test]
fn criterion_7_marginal_cdf_and_quantile_round_trip() {
    let model = rayleigh(2, 1);
    let samples = 1_000_000u64;
    let mut values: Vec<f64> = (0..samples)
        .map(|t| sample_sinr_matrix(&model, t, 555).unwrap().sinr(0, 0))
        .collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut max_cdf_gap = 0.0f64;
    let mut max_round_trip = 0.0f64;
    for j in 1..=20 {
        let x = 0.25 * j as f64;
        let empirical = values.partition_point(|v| *v <= x) as f64 / samples as f64;
        let analytic = marginal_cdf(&model, x).unwrap();
        max_cdf_gap = max_cdf_gap.max((empirical - analytic).abs());

        let back = upper_quantile(&model, 1.0 - analytic, Statistic::Beam1).unwrap();
        max_round_trip = max_round_trip.max((back - x).abs());
    }
    assert!(max_cdf_gap < 3e-3, "max cdf gap {max_cdf_gap}");
    assert!(max_round_trip < 1e-4, "max round trip {max_round_trip}");
    println!(
        "criterion 7 PASS: max cdf deviation {max_cdf_gap:.2e} < 3e-3, max quantile round trip {max_round_trip:.2e} < 1e-4"
    );
}

/// Criterion 8: threshold selection. Heterogeneous two-user system (SNR
/// multipliers 1 and 4, budget 0.5): multi-start coordinate ascent reaches
/// the exhaustive grid optimum (resolution 0.02, 1e5 trials per point)
/// within 3 SE plus one grid step. Homogeneous search on symmetric users
/// matches the symmetric-restricted grid optimum within 3 SE plus the
/// diagonal grid step.
#[test]
fn criterion_8_solvers_match_grid_reference() {
    let lambda = 0.5;
    let trials = 100_000;
    let seed = 909;

    // Heterogeneous instance.
    let hetero = rayleigh(2, 2).with_multipliers(vec![1.0, 4.0]);
    let grid = simplex_grid(
        &hetero,
        lambda,
        ThresholdPolicyKind::Gtfp,
        0.02,
        trials,
        seed,
    )
    .unwrap();
    let ascent =
        multi_start_coordinate_ascent(&hetero, lambda, ThresholdPolicyKind::Gtfp, trials, seed, 4)
            .unwrap();
    let modulus = grid_step_modulus(&grid);
    let se = (grid.best.rate.std_error.powi(2) + ascent.rate.std_error.powi(2)).sqrt();
    let floor = grid.best.rate.mean - 3.0 * se - modulus;
    assert!(
        ascent.rate.mean >= floor,
        "ascent {} vs grid {} (modulus {modulus}, se {se})",
        ascent.rate.mean,
        grid.best.rate.mean
    );
    // The ascent must also dominate both single-user corner allocations.
    let oracle = RateOracle::new(&hetero, ThresholdPolicyKind::Gtfp, trials, seed).unwrap();
    for corner in [[0.5, 0.0], [0.0, 0.5]] {
        let (_, corner_rate) = oracle.rate_for(&corner).unwrap();
        assert!(
            ascent.rate.mean >= corner_rate.mean - 3.0 * se,
            "corner {corner:?} beats ascent"
        );
    }

    // Symmetric instance: homogeneous search vs the diagonal of the grid.
    let symmetric = rayleigh(2, 2);
    let homog =
        homogeneous_search(&symmetric, lambda, ThresholdPolicyKind::Gtfp, trials, seed).unwrap();
    let sym_oracle = RateOracle::new(&symmetric, ThresholdPolicyKind::Gtfp, trials, seed).unwrap();
    let mut diag = Vec::new();
    let mut p = 0.0;
    while 2.0 * p <= lambda + 1e-9 {
        let (_, est) = sym_oracle.rate_for(&[p, p]).unwrap();
        diag.push((p, est.mean, est.std_error));
        p += 0.02;
    }
    let (best_p, best_rate, best_se) = diag
        .iter()
        .copied()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    let diag_modulus = diag
        .windows(2)
        .map(|w| (w[0].1 - w[1].1).abs())
        .fold(0.0f64, f64::max);
    let combined = (homog.rate.std_error.powi(2) + best_se.powi(2)).sqrt();
    assert!(
        (homog.rate.mean - best_rate).abs() <= 3.0 * combined + diag_modulus,
        "homogeneous {} at p {} vs diagonal best {best_rate} at p {best_p}",
        homog.rate.mean,
        homog.best.probs[0]
    );
    println!(
        "criterion 8 PASS: ascent {:.5} >= grid {:.5} - 3 SE - step; homogeneous {:.5} ~ diagonal {:.5}",
        ascent.rate.mean, grid.best.rate.mean, homog.rate.mean, best_rate
    );
}

/// Criterion 9: rerunning the same config with 1 and with 8 workers yields
/// byte-identical output files.
#[test]
fn criterion_9_worker_count_does_not_change_outputs() {
    let config_text = r#"
task = "verify-theorem1"
seed = 11
trials = 20000

[model]
kind = "rayleigh"
snr = 1.0
beams = 2
users = 6

[[policy]]
label = "det"
kind = "random-box-union"
count = 3
"#;
    let base = std::env::temp_dir().join(format!("obsim-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&base).unwrap();
    let config_path = base.join("config.toml");
    std::fs::write(&config_path, config_text).unwrap();

    let run = |jobs: &str, out: &str| {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_obsim"))
            .args([
                "run",
                config_path.to_str().unwrap(),
                "--jobs",
                jobs,
                "--out",
                base.join(out).to_str().unwrap(),
            ])
            .output()
            .expect("binary runs");
        assert!(
            status.status.success(),
            "jobs {jobs}: {}",
            String::from_utf8_lossy(&status.stderr)
        );
        std::fs::read_to_string(base.join(out).join("verify_theorem1.json")).unwrap()
    };
    let single = run("1", "single");
    let many = run("8", "many");
    assert_eq!(single, many, "outputs differ between 1 and 8 workers");
    std::fs::remove_dir_all(&base).ok();
    println!("criterion 9 PASS: byte-identical outputs at 1 and 8 workers");
}
