//! Task dispatch and result artifacts.
//!
//! `run` executes one validated config and writes its outputs — long-format
//! CSV for measurements, JSON for verification reports — atomically (temp
//! file then rename), so an interrupted run never leaves a partial file at
//! the final path. Every row carries the config hash and seed, and reruns of
//! the same config produce byte-identical artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{validate, ExperimentConfig, TaskKind};
use crate::error::Error;
use crate::optimizer::{
    grid_step_modulus, homogeneous_search, multi_start_coordinate_ascent, simplex_grid, GridResult,
    OptimizationResult, ThresholdPolicyKind,
};
use crate::scheduler::{ergodic_rate, feedback_load, LogBase};
use crate::threshold::{
    classify_events_report, match_gtfp, match_mtfp, verify_monotone_chain_detailed,
    verify_theorem1_detailed, ChainReport, EventClassificationReport, TheoremOneReport,
    DEFAULT_MATCH_SAMPLES,
};

/// Why a run failed; the binary maps these onto distinct exit codes.
#[derive(Debug)]
pub enum RunError {
    /// The config did not validate (or an operation rejected its inputs).
    Config(Vec<String>),
    /// The task ran but a verification check failed.
    Verification(String),
    /// An output could not be written.
    Io(std::io::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(diags) => {
                writeln!(f, "configuration error:")?;
                for d in diags {
                    writeln!(f, "  - {d}")?;
                }
                Ok(())
            }
            RunError::Verification(msg) => write!(f, "verification failed: {msg}"),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(io) => RunError::Io(io),
            other => RunError::Config(vec![other.to_string()]),
        }
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

/// What a run produced.
#[derive(Debug)]
pub struct ResultBundle {
    pub config_hash: String,
    pub outputs: Vec<PathBuf>,
    /// One human-readable line per checked item.
    pub summary: Vec<String>,
}

/// Write through a temp file in the same directory, then rename into place.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

fn fmt_f64(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x}")
    }
}

fn join_f64(xs: &[f64], sep: char) -> String {
    let mut s = String::new();
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            s.push(sep);
        }
        s.push_str(&fmt_f64(*x));
    }
    s
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    text
}

/// Execute one experiment. `out_dir` receives the artifacts.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<ResultBundle, RunError> {
    let diags = validate(config);
    if !diags.is_empty() {
        return Err(RunError::Config(diags));
    }
    let model = config.build_model()?;
    let hash = config.hash();
    let match_samples = config.match_samples.unwrap_or(DEFAULT_MATCH_SAMPLES as u64) as usize;

    let mut bundle = ResultBundle {
        config_hash: hash.clone(),
        outputs: Vec::new(),
        summary: Vec::new(),
    };

    match config.task {
        TaskKind::Simulate => {
            let policies = config.build_policies(&model)?;
            let mut csv = String::from(
                "config_hash,seed,model_hash,label,users,beams,trials,unit,mean,std_error,ci_lo,ci_hi,per_beam_means,lambda_per_beam,lambda_se,lambda_analytic\n",
            );
            for policy in &policies {
                let est = ergodic_rate(policy, &model, config.trials, config.seed)?
                    .to_unit(config.log_base);
                let load = feedback_load(policy, &model, match_samples, config.seed)?;
                let unit = match config.log_base {
                    LogBase::Nats => "nats",
                    LogBase::Bits => "bits",
                };
                writeln!(
                    csv,
                    "{hash},{seed},{model_hash:016x},{label},{users},{beams},{trials},{unit},{mean},{se},{lo},{hi},{beams_mean},{lambda},{lambda_se},{analytic}",
                    seed = config.seed,
                    model_hash = model.hash(),
                    label = policy.label,
                    users = model.users,
                    beams = model.beams,
                    trials = config.trials,
                    mean = fmt_f64(est.mean),
                    se = fmt_f64(est.std_error),
                    lo = fmt_f64(est.ci95.0),
                    hi = fmt_f64(est.ci95.1),
                    beams_mean = join_f64(&est.per_beam_means, '|'),
                    lambda = fmt_f64(load.lambda_per_beam),
                    lambda_se = fmt_f64(load.std_error),
                    analytic = load.analytic,
                )
                .expect("string write");
                bundle.summary.push(format!(
                    "{}: rate {} ({} {unit}/channel use), load {}",
                    policy.label,
                    fmt_f64(est.mean),
                    fmt_f64(est.std_error),
                    fmt_f64(load.lambda_per_beam),
                ));
            }
            let path = out_dir.join("rates.csv");
            write_atomic(&path, &csv)?;
            bundle.outputs.push(path);
        }

        TaskKind::Match => {
            let policies = config.build_policies(&model)?;
            let mut csv = String::from(
                "config_hash,seed,model_hash,label,family,user,prob,tau,load,load_gap,load_pass\n",
            );
            for policy in &policies {
                let pair = if policy.is_max_sinr_kind() {
                    match_mtfp(policy, &model, match_samples, config.seed)?
                } else {
                    match_gtfp(policy, &model, match_samples, config.seed)?
                };
                let family = match pair.family {
                    crate::threshold::ThresholdFamily::General => "general",
                    crate::threshold::ThresholdFamily::MaxSinr => "max-sinr",
                };
                let pass = pair.load_gap <= pair.load_tolerance();
                for user in 0..policy.users() {
                    writeln!(
                        csv,
                        "{hash},{seed},{model_hash:016x},{label},{family},{user},{prob},{tau},{load},{gap},{pass}",
                        seed = config.seed,
                        model_hash = model.hash(),
                        label = policy.label,
                        prob = fmt_f64(pair.probs[user]),
                        tau = fmt_f64(pair.taus[user]),
                        load = fmt_f64(pair.load()),
                        gap = fmt_f64(pair.load_gap),
                    )
                    .expect("string write");
                }
                bundle.summary.push(format!(
                    "{}: load {} matched within {}",
                    policy.label,
                    fmt_f64(pair.load()),
                    fmt_f64(pair.load_gap)
                ));
            }
            let path = out_dir.join("matched.csv");
            write_atomic(&path, &csv)?;
            bundle.outputs.push(path);
        }

        TaskKind::VerifyTheorem1 => {
            let policies = config.build_policies(&model)?;
            #[derive(Serialize)]
            struct Entry {
                pass: bool,
                #[serde(flatten)]
                report: TheoremOneReport,
            }
            #[derive(Serialize)]
            struct Doc {
                config_hash: String,
                seed: u64,
                all_pass: bool,
                passed: usize,
                total: usize,
                reports: Vec<Entry>,
            }
            let mut entries = Vec::new();
            for policy in &policies {
                let report = verify_theorem1_detailed(
                    policy,
                    &model,
                    config.trials,
                    config.seed,
                    match_samples,
                    5,
                )?;
                bundle.summary.push(format!(
                    "{}: diff {} (se {}) {}",
                    report.label,
                    fmt_f64(report.rate_diff),
                    fmt_f64(report.rate_diff_se),
                    if report.pass() { "PASS" } else { "FAIL" }
                ));
                entries.push(Entry {
                    pass: report.pass(),
                    report,
                });
            }
            let passed = entries.iter().filter(|e| e.pass).count();
            let total = entries.len();
            let doc = Doc {
                config_hash: hash.clone(),
                seed: config.seed,
                all_pass: passed == total,
                passed,
                total,
                reports: entries,
            };
            let path = out_dir.join("verify_theorem1.json");
            write_atomic(&path, &to_json(&doc))?;
            bundle.outputs.push(path);
            if !doc.all_pass {
                return Err(RunError::Verification(format!(
                    "{}/{} policies passed the single-switch dominance check",
                    passed, total
                )));
            }
        }

        TaskKind::VerifyChain => {
            let policies = config.build_policies(&model)?;
            #[derive(Serialize)]
            struct Entry {
                pass: bool,
                #[serde(flatten)]
                report: ChainReport,
            }
            #[derive(Serialize)]
            struct Doc {
                config_hash: String,
                seed: u64,
                all_pass: bool,
                passed: usize,
                total: usize,
                reports: Vec<Entry>,
            }
            let mut entries = Vec::new();
            for policy in &policies {
                let report = verify_monotone_chain_detailed(
                    policy,
                    &model,
                    config.trials,
                    config.seed,
                    match_samples,
                )?;
                bundle.summary.push(format!(
                    "{}: {} steps, min diff {} {}",
                    report.label,
                    report.steps.len(),
                    fmt_f64(
                        report
                            .steps
                            .iter()
                            .map(|s| s.diff)
                            .fold(f64::INFINITY, f64::min)
                    ),
                    if report.pass() { "PASS" } else { "FAIL" }
                ));
                entries.push(Entry {
                    pass: report.pass(),
                    report,
                });
            }
            let passed = entries.iter().filter(|e| e.pass).count();
            let total = entries.len();
            let doc = Doc {
                config_hash: hash.clone(),
                seed: config.seed,
                all_pass: passed == total,
                passed,
                total,
                reports: entries,
            };
            let path = out_dir.join("verify_chain.json");
            write_atomic(&path, &to_json(&doc))?;
            bundle.outputs.push(path);
            if !doc.all_pass {
                return Err(RunError::Verification(format!(
                    "{}/{} policies passed the switching-chain check",
                    passed, total
                )));
            }
        }

        TaskKind::ClassifyEvents => {
            let policies = config.build_policies(&model)?;
            #[derive(Serialize)]
            struct Doc {
                config_hash: String,
                seed: u64,
                all_pass: bool,
                reports: Vec<EventClassificationReport>,
            }
            let mut reports = Vec::new();
            for policy in &policies {
                let report = classify_events_report(
                    policy,
                    &model,
                    config.trials,
                    config.seed,
                    match_samples,
                )?;
                bundle.summary.push(format!(
                    "{}: loss {} gain {} neutral {}, {} disagreements",
                    report.label,
                    fmt_f64(report.freqs.loss),
                    fmt_f64(report.freqs.gain),
                    fmt_f64(report.freqs.neutral),
                    report.disagreements
                ));
                reports.push(report);
            }
            let all_pass = reports.iter().all(|r| r.disagreements == 0 && r.mass_pass);
            let doc = Doc {
                config_hash: hash.clone(),
                seed: config.seed,
                all_pass,
                reports,
            };
            let path = out_dir.join("events.json");
            write_atomic(&path, &to_json(&doc))?;
            bundle.outputs.push(path);
            if !all_pass {
                return Err(RunError::Verification(
                    "classifier disagreement or mass imbalance detected".into(),
                ));
            }
        }

        TaskKind::Optimize => {
            let lambda = config.lambda.expect("validated");
            let kind = match config.policy_kind.as_deref() {
                Some("mtfp") => ThresholdPolicyKind::Mtfp,
                _ => ThresholdPolicyKind::Gtfp,
            };
            let restarts = config.restarts.unwrap_or(4) as usize;

            let homog = homogeneous_search(&model, lambda, kind, config.trials, config.seed)?;
            let ascent = multi_start_coordinate_ascent(
                &model,
                lambda,
                kind,
                config.trials,
                config.seed,
                restarts,
            )?;
            let grid: Option<GridResult> = match config.resolution {
                Some(res) if model.users <= 3 => Some(simplex_grid(
                    &model,
                    lambda,
                    kind,
                    res,
                    config.trials,
                    config.seed,
                )?),
                _ => None,
            };

            let mut csv =
                String::from("config_hash,seed,method,iteration,probs,taus,rate,std_error\n");
            let dump = |method: &str, result: &OptimizationResult, csv: &mut String| {
                for (i, point) in result.trace.iter().enumerate() {
                    writeln!(
                        csv,
                        "{hash},{seed},{method},{i},{probs},{taus},{rate},{se}",
                        seed = config.seed,
                        probs = join_f64(&point.probs, '|'),
                        taus = join_f64(&point.taus, '|'),
                        rate = fmt_f64(point.rate),
                        se = fmt_f64(point.std_error),
                    )
                    .expect("string write");
                }
            };
            dump("homogeneous", &homog, &mut csv);
            dump("coordinate-ascent", &ascent, &mut csv);
            let trace_path = out_dir.join("optimize_trace.csv");
            write_atomic(&trace_path, &csv)?;
            bundle.outputs.push(trace_path);

            if let Some(grid) = &grid {
                let mut surface = String::from("config_hash,seed,probs,taus,rate,std_error\n");
                for point in &grid.surface {
                    writeln!(
                        surface,
                        "{hash},{seed},{probs},{taus},{rate},{se}",
                        seed = config.seed,
                        probs = join_f64(&point.probs, '|'),
                        taus = join_f64(&point.taus, '|'),
                        rate = fmt_f64(point.rate),
                        se = fmt_f64(point.std_error),
                    )
                    .expect("string write");
                }
                let surface_path = out_dir.join("grid_surface.csv");
                write_atomic(&surface_path, &surface)?;
                bundle.outputs.push(surface_path);
            }

            #[derive(Serialize)]
            struct Doc<'a> {
                config_hash: String,
                seed: u64,
                lambda: f64,
                kind: ThresholdPolicyKind,
                homogeneous: &'a OptimizationResult,
                coordinate_ascent: &'a OptimizationResult,
                grid: Option<&'a OptimizationResult>,
                grid_step_modulus: Option<f64>,
            }
            let doc = Doc {
                config_hash: hash.clone(),
                seed: config.seed,
                lambda,
                kind,
                homogeneous: &homog,
                coordinate_ascent: &ascent,
                grid: grid.as_ref().map(|g| &g.best),
                grid_step_modulus: grid.as_ref().map(grid_step_modulus),
            };
            let path = out_dir.join("optimize.json");
            write_atomic(&path, &to_json(&doc))?;
            bundle.outputs.push(path);

            bundle.summary.push(format!(
                "homogeneous: rate {} at p {}",
                fmt_f64(homog.rate.mean),
                fmt_f64(homog.best.probs[0])
            ));
            bundle.summary.push(format!(
                "coordinate ascent: rate {} at p [{}]",
                fmt_f64(ascent.rate.mean),
                join_f64(&ascent.best.probs, ' ')
            ));
            if let Some(grid) = &grid {
                bundle.summary.push(format!(
                    "grid: rate {} at p [{}]",
                    fmt_f64(grid.best.rate.mean),
                    join_f64(&grid.best.best.probs, ' ')
                ));
            }
        }
    }

    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config(task: &str, policy: &str) -> ExperimentConfig {
        let text = format!(
            r#"
task = "{task}"
seed = 7
trials = 500
match_samples = 20000

[model]
kind = "rayleigh"
snr = 1.0
beams = 2
users = 2

{policy}
"#
        );
        ExperimentConfig::from_toml(&text).unwrap()
    }

    #[test]
    fn simulate_never_feed_back_writes_zero_rate_row() {
        let config = base_config(
            "simulate",
            "[[policy]]\nlabel = \"never\"\nkind = \"gtfp\"\nthreshold = inf",
        );
        let dir = std::env::temp_dir().join(format!("obsim-test-{}", std::process::id()));
        let bundle = run(&config, &dir).unwrap();
        let csv = fs::read_to_string(&bundle.outputs[0]).unwrap();
        let row = csv.lines().nth(1).unwrap();
        let mean: f64 = row.split(',').nth(8).unwrap().parse().unwrap();
        assert_eq!(mean, 0.0);
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn reruns_are_byte_identical() {
        // Default (full-size) matching samples: the load-gap tolerance is
        // calibrated for them.
        let mut config = base_config(
            "verify-theorem1",
            "[[policy]]\nlabel = \"rand\"\nkind = \"random-box-union\"\ncount = 2",
        );
        config.match_samples = None;
        let dir_a = std::env::temp_dir().join(format!("obsim-test-a-{}", std::process::id()));
        let dir_b = std::env::temp_dir().join(format!("obsim-test-b-{}", std::process::id()));
        let a = run(&config, &dir_a).unwrap();
        let b = run(&config, &dir_b).unwrap();
        let text_a = fs::read_to_string(&a.outputs[0]).unwrap();
        let text_b = fs::read_to_string(&b.outputs[0]).unwrap();
        assert_eq!(text_a, text_b);
        fs::remove_dir_all(&dir_a).ok();
        fs::remove_dir_all(&dir_b).ok();
    }

    #[test]
    fn invalid_config_is_rejected_with_diagnostics() {
        let config = base_config("simulate", "");
        let dir = std::env::temp_dir().join("obsim-test-unused");
        match run(&config, &dir) {
            Err(RunError::Config(diags)) => assert!(!diags.is_empty()),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn atomic_write_replaces_never_truncates() {
        let dir = std::env::temp_dir().join(format!("obsim-test-atomic-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("out.csv");
        write_atomic(&path, "first\n").unwrap();
        write_atomic(&path, "second\n").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "second\n");
        // The temp staging file never lingers.
        assert!(!path.with_extension("tmp").exists());
        fs::remove_dir_all(&dir).ok();
    }
}
