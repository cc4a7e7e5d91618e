use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::{select_joint_sur, select_max_misclass, select_random};
use crate::criterion::{estimate_gamma_cheap, select_next_qsi_with};
use crate::error::{QsiError, Result};
use crate::geometry::Points;
use crate::gp::{fit_reml, KernelSpec, ObservationSet, PosteriorModel, RemlConfig};
use crate::problems::TestProblem;
use crate::rng::{fork_seed, keyed_rng};
use crate::sim::quantize_s;

use super::config::{RunConfig, Strategy};
use super::design::make_initial_design;
use super::grid::{make_prediction_grid, misclassified_proportion, truth_membership, PredictionGrid};
use super::results::{append_record, read_records, summarize, write_records, write_summary, RunRecord};

const DESIGN: u64 = 0;
const FIT: u64 = 1;
const S_GRID: u64 = 2;
const SELECT: u64 = 3;

/// Records of all repetitions plus the repetitions that were aborted.
#[derive(Debug, Clone, Default)]
pub struct ExperimentOutcome {
    pub records: Vec<RunRecord>,
    pub failures: Vec<(usize, String)>,
}

fn rep_file(dir: &Path, rep: usize, ext: &str) -> PathBuf {
    dir.join(format!("rep_{rep:04}.{ext}"))
}

/// Builds the configured problem and runs every repetition.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentOutcome> {
    let problem = config.build_problem()?;
    run_experiment_on(config, &problem)
}

pub fn run_experiment_on(config: &RunConfig, problem: &TestProblem) -> Result<ExperimentOutcome> {
    run_experiment_until(config, problem, None)
}

/// Like [`run_experiment_on`], but each repetition stops after iteration
/// `stop_after` as if interrupted; a later call resumes from there.
pub fn run_experiment_until(
    config: &RunConfig,
    problem: &TestProblem,
    stop_after: Option<usize>,
) -> Result<ExperimentOutcome> {
    config.validate()?;
    let dir = &config.output;
    std::fs::create_dir_all(dir)?;
    let stamp = dir.join("config.txt");
    if stamp.exists() {
        let previous = RunConfig::from_file(&stamp)?;
        if previous != *config {
            return Err(QsiError::Config(format!(
                "{} holds results of a different configuration",
                dir.display()
            )));
        }
    } else {
        std::fs::write(&stamp, config.to_text())?;
    }
    let grid = make_prediction_grid(&problem.qsi, config.log2_x, config.log2_s)?;
    let truth = truth_membership(problem, &grid)?;
    let results: Vec<(usize, Result<Vec<RunRecord>>)> = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| (rep, run_repetition(config, problem, &grid, &truth, rep, stop_after)))
        .collect();
    let mut outcome = ExperimentOutcome::default();
    for (rep, res) in results {
        match res {
            Ok(recs) => outcome.records.extend(recs),
            Err(e) => {
                log::error!("repetition {rep} aborted: {e}");
                std::fs::write(rep_file(dir, rep, "error"), format!("{e}\n"))?;
                outcome.failures.push((rep, e.to_string()));
            }
        }
    }
    let (dx, ds) = (problem.qsi.x_dim(), problem.qsi.s_dim());
    write_records(&outcome.records, dx, ds, &dir.join("records.csv"))?;
    write_summary(&summarize(&outcome.records), &dir.join("summary.csv"))?;
    Ok(outcome)
}

struct State {
    iter: usize,
    model: PosteriorModel,
}

fn save_state(path: &Path, state: &State) -> Result<()> {
    let m = &state.model;
    let k = m.kernel();
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
    let mut s = String::new();
    let _ = writeln!(s, "iter = {}", state.iter);
    let _ = writeln!(s, "regularity = {}", k.regularity());
    let _ = writeln!(s, "variance = {:?}", k.variance());
    let _ = writeln!(s, "lengthscales = {}", join(k.lengthscales()));
    let _ = writeln!(s, "mean = {:?}", m.mean_constant());
    let _ = writeln!(s, "degenerate = {}", m.is_degenerate());
    let obs = m.observations();
    for (p, z) in obs.points().iter().zip(obs.values()) {
        let _ = writeln!(s, "obs = {} {:?}", join(p), z);
    }
    let tmp = path.with_extension("state.tmp");
    std::fs::write(&tmp, s)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn load_state(path: &Path, dim: usize) -> Result<State> {
    let text = std::fs::read_to_string(path)?;
    let bad = |what: &str| QsiError::Config(format!("{}: bad {what}", path.display()));
    let mut fields = std::collections::HashMap::new();
    let mut points = Points::new(dim);
    let mut values = Vec::new();
    for line in text.lines() {
        let Some((k, v)) = line.split_once(" = ") else { continue };
        if k == "obs" {
            let nums: Vec<f64> = v
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad("observation")))
                .collect::<Result<_>>()?;
            if nums.len() != dim + 1 {
                return Err(bad("observation"));
            }
            points.push(&nums[..dim])?;
            values.push(nums[dim]);
        } else {
            fields.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| fields.get(k).map(String::as_str).ok_or_else(|| bad(k));
    let num = |k: &str| get(k)?.parse::<f64>().map_err(|_| bad(k));
    let lengthscales: Vec<f64> = get("lengthscales")?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad("lengthscales")))
        .collect::<Result<_>>()?;
    let kernel = KernelSpec::new(
        get("regularity")?.parse().map_err(|_| bad("regularity"))?,
        num("variance")?,
        lengthscales,
    )?;
    let obs = ObservationSet::noise_free(points, values)?;
    let mut model = PosteriorModel::new(kernel, num("mean")?, obs)?;
    if get("degenerate")? == "true" {
        model = model.mark_degenerate();
    }
    Ok(State {
        iter: get("iter")?.parse().map_err(|_| bad("iter"))?,
        model,
    })
}

fn fit(config: &RunConfig, problem: &TestProblem, obs: &ObservationSet, rep: usize, iter: usize, warm: Option<&KernelSpec>) -> Result<PosteriorModel> {
    let reml = RemlConfig {
        seed: fork_seed(&mut keyed_rng(config.seed, &[rep as u64, iter as u64, FIT])),
        ..RemlConfig::default()
    };
    let model = fit_reml(obs, problem.qsi.joint_box(), &reml, warm)?;
    if model.is_degenerate() {
        log::warn!("repetition {rep}, iteration {iter}: degenerate model (constant observations)");
    }
    Ok(model)
}

fn metric(model: &PosteriorModel, problem: &TestProblem, grid: &PredictionGrid, truth: &[bool]) -> Result<f64> {
    let est = estimate_gamma_cheap(model, &problem.qsi, &grid.x_nodes, &grid.s_grid)?;
    misclassified_proportion(&est, truth)
}

fn select(config: &RunConfig, problem: &TestProblem, model: &PosteriorModel, rep: usize, iter: usize) -> Result<Vec<f64>> {
    let qsi = &problem.qsi;
    let crit = config.criterion_config();
    let mut rng = keyed_rng(config.seed, &[rep as u64, iter as u64, SELECT]);
    Ok(match config.strategy {
        Strategy::QsiSur(_) => {
            let s_iter = if config.resample_s_each_step { iter } else { 0 };
            let mut s_rng = keyed_rng(config.seed, &[rep as u64, s_iter as u64, S_GRID]);
            let s_grid = quantize_s(qsi.s_distribution(), crit.n_s, &mut s_rng)?;
            select_next_qsi_with(model, qsi, &crit, s_grid, &mut rng)?.point
        }
        Strategy::Baseline(crate::baselines::BaselineKind::Random) => select_random(qsi, &mut rng),
        Strategy::Baseline(crate::baselines::BaselineKind::MaxMisclassification) => {
            select_max_misclass(model, qsi, &crit, &mut rng)?
        }
        Strategy::Baseline(crate::baselines::BaselineKind::JointSur) => {
            select_joint_sur(model, qsi, &crit, &mut rng)?.point
        }
    })
}

fn elapsed_ms(config: &RunConfig, start: Instant) -> u64 {
    if config.timing {
        start.elapsed().as_millis() as u64
    } else {
        0
    }
}

fn run_repetition(
    config: &RunConfig,
    problem: &TestProblem,
    grid: &PredictionGrid,
    truth: &[bool],
    rep: usize,
    stop_after: Option<usize>,
) -> Result<Vec<RunRecord>> {
    let dir = &config.output;
    let (dx, ds) = (problem.qsi.x_dim(), problem.qsi.s_dim());
    let csv_path = rep_file(dir, rep, "csv");
    let state_path = rep_file(dir, rep, "state");
    let _ = std::fs::remove_file(rep_file(dir, rep, "error"));
    let record = |iter: usize, point: Option<&[f64]>, z: Option<f64>, m: f64, wall_ms: u64| RunRecord {
        rep,
        iter,
        strategy: config.strategy.to_string(),
        problem: config.problem.clone(),
        x: point.map(|p| p[..dx].to_vec()).unwrap_or_default(),
        s: point.map(|p| p[dx..].to_vec()).unwrap_or_default(),
        z,
        misclass_prop: m,
        wall_ms,
    };

    let (mut records, mut state) = if state_path.exists() && csv_path.exists() {
        let state = load_state(&state_path, problem.qsi.joint_dim())?;
        let (all, _, _) = read_records(&csv_path)?;
        let kept: Vec<RunRecord> = all.into_iter().filter(|r| r.iter <= state.iter).collect();
        if kept.len() != state.iter + 1 {
            return Err(QsiError::Config(format!(
                "{} does not match its state file",
                csv_path.display()
            )));
        }
        write_records(&kept, dx, ds, &csv_path)?;
        log::info!("repetition {rep}: resuming after iteration {}", state.iter);
        (kept, state)
    } else {
        let start = Instant::now();
        let mut rng = keyed_rng(config.seed, &[rep as u64, 0, DESIGN]);
        let design = make_initial_design(config.n0, &problem.qsi, config.lhs_candidates, &mut rng)?;
        let values = design.iter().map(|u| problem.evaluate(u)).collect::<Result<Vec<f64>>>()?;
        let obs = ObservationSet::noise_free(design, values)?;
        let model = fit(config, problem, &obs, rep, 0, None)?;
        let m = metric(&model, problem, grid, truth)?;
        let r0 = record(0, None, None, m, elapsed_ms(config, start));
        write_records(std::slice::from_ref(&r0), dx, ds, &csv_path)?;
        let state = State { iter: 0, model };
        save_state(&state_path, &state)?;
        (vec![r0], state)
    };

    let last = stop_after.map_or(config.budget, |s| s.min(config.budget));
    for iter in state.iter + 1..=last {
        let start = Instant::now();
        let point = select(config, problem, &state.model, rep, iter)?;
        let z = problem.evaluate(&point)?;
        let mut obs = state.model.observations().clone();
        obs.push(&point, z, 0.0)?;
        let model = fit(config, problem, &obs, rep, iter, Some(state.model.kernel()))?;
        let m = metric(&model, problem, grid, truth)?;
        let r = record(iter, Some(&point), Some(z), m, elapsed_ms(config, start));
        append_record(&r, dx, ds, &csv_path)?;
        records.push(r);
        state = State { iter, model };
        save_state(&state_path, &state)?;
        log::debug!("repetition {rep}, iteration {iter}: misclassified proportion {m}");
    }
    Ok(records)
}

/// Summary CSV from every record file found in `dir`.
pub fn report(dir: &Path, out: &Path) -> Result<usize> {
    let combined = dir.join("records.csv");
    let mut records = Vec::new();
    if combined.exists() {
        records = read_records(&combined)?.0;
    } else {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension().is_some_and(|e| e == "csv")
                    && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("rep_"))
            })
            .collect();
        files.sort();
        for f in files {
            records.extend(read_records(&f)?.0);
        }
    }
    if records.is_empty() {
        return Err(QsiError::InvalidArgument(format!("no records found in {}", dir.display())));
    }
    let rows = summarize(&records);
    write_summary(&rows, out)?;
    Ok(rows.len())
}

