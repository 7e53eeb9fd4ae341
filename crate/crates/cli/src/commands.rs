//! Subcommand bodies. Each takes a resolved configuration and writes text to
//! `out` or files under an output directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use mfpg_core::datagen::save_dataset;
use mfpg_core::estimator::{balanced_schedule, bound_constants, build_samples, empirical_alpha, epoch_sample_sizes};
use mfpg_core::lqr::{average_cost, noise_lift, solve_dare, solve_policy_lyapunov};
use mfpg_core::pgm::{contraction_factors, required_accuracy};
use mfpg_core::DMatrix;
use rayon::prelude::*;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::plot::render_svg;
use crate::runner::{dataset_file, dataset_for, run_trials};
use crate::table::{
    aggregate, read_aggregate, write_aggregate, write_timing, write_trials, TimingRow, Trial, AGGREGATE_FILE,
    TIMING_FILE, TRIALS_FILE,
};

pub const CONFIG_ECHO: &str = "config.toml";
pub const FIGURE_FILE: &str = "figure.svg";
pub const TRACES_DIR: &str = "traces";

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| CliError::io(path, e))
}

fn print(out: &mut dyn Write, text: &str) -> Result<()> {
    io(Path::new("<stdout>"), out.write_all(text.as_bytes()))
}

fn format_matrix(name: &str, m: &DMatrix<f64>) -> String {
    let mut s = format!("{name} ({}x{}):\n", m.nrows(), m.ncols());
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>19.11e}")).collect();
        s.push_str(&format!("  {}\n", cells.join(" ")));
    }
    s
}

/// Optimal gain, Riccati solution and optimal cost, 12 significant digits.
pub fn riccati(exp: &Experiment, out: &mut dyn Write) -> Result<()> {
    let (k_star, p) = solve_dare(&exp.sys, &exp.w)?;
    let cost = average_cost(&exp.sys, &exp.w, &k_star)?;
    let mut text = format_matrix("K*", &k_star.gain);
    text.push_str(&format_matrix("P*", &p));
    text.push_str(&format!("C(K*) = {cost:.11e}\n"));
    print(out, &text)
}

fn create_dir(dir: &Path) -> Result<()> {
    io(dir, fs::create_dir_all(dir))
}

/// Writes the fully resolved configuration next to the outputs.
pub fn echo_config(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let path = dir.join(CONFIG_ECHO);
    io(&path, fs::write(&path, cfg.to_toml_string()?))
}

/// One dataset file (plus metadata sidecar) per seed.
pub fn collect(cfg: &ExperimentConfig, exp: &Experiment, dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let fresh = Experiment {
        dataset_dir: None,
        ..exp.clone()
    };
    let paths = exp
        .seeds
        .par_iter()
        .map(|&seed| {
            let ds = dataset_for(&fresh, seed)?;
            let path = dataset_file(dir, seed);
            save_dataset(&ds, &path)?;
            Ok(path)
        })
        .collect::<Result<Vec<_>>>()?;
    echo_config(cfg, dir)?;
    Ok(paths)
}

/// Outcome of `run`: the trials and how many stopped before the last iteration.
#[derive(Debug)]
pub struct RunSummary {
    pub trials: Vec<Trial>,
    pub incomplete: usize,
}

/// Runs all trials and writes the per-trial and aggregate tables, per-trial
/// JSON traces, wall-clock timings, and the config echo.
pub fn run(cfg: &ExperimentConfig, exp: &Experiment, dir: &Path) -> Result<RunSummary> {
    create_dir(dir)?;
    let trials = run_trials(exp)?;
    let traces = dir.join(TRACES_DIR);
    create_dir(&traces)?;
    trials.par_iter().try_for_each(|t| {
        let path = traces.join(format!("{}_seed{}.json", t.estimator.name(), t.seed));
        let json = serde_json::to_string_pretty(&t.trace).expect("traces serialize");
        io(&path, fs::write(&path, json + "\n"))
    })?;
    let rows: Vec<_> = trials.iter().flat_map(Trial::rows).collect();
    write_trials(&dir.join(TRIALS_FILE), &rows)?;
    write_aggregate(&dir.join(AGGREGATE_FILE), &aggregate(&rows))?;
    let timing: Vec<TimingRow> = trials
        .iter()
        .map(|t| TimingRow {
            estimator: t.estimator.name().to_string(),
            seed: t.seed,
            wall_time_s: t.wall_time_s,
        })
        .collect();
    write_timing(&dir.join(TIMING_FILE), &timing)?;
    echo_config(cfg, dir)?;
    let incomplete = trials.iter().filter(|t| t.trace.status.label() != "completed").count();
    Ok(RunSummary { trials, incomplete })
}

/// Renders the aggregate table at `input` (a file, or a run directory) to SVG.
pub fn plot(input: &Path, output: Option<&Path>) -> Result<PathBuf> {
    let table = if input.is_dir() {
        input.join(AGGREGATE_FILE)
    } else {
        input.to_path_buf()
    };
    let rows = read_aggregate(&table)?;
    let parent = table.parent().unwrap_or(Path::new("."));
    let title = parent
        .file_name()
        .map_or_else(|| "results".to_string(), |n| n.to_string_lossy().into_owned());
    let svg = render_svg(&rows, &title, &table)?;
    let target = match output {
        Some(p) if p.is_dir() || p.extension().is_none() => {
            create_dir(p)?;
            p.join(FIGURE_FILE)
        }
        Some(p) => p.to_path_buf(),
        None => parent.join(FIGURE_FILE),
    };
    io(&target, fs::write(&target, svg))?;
    Ok(target)
}

/// Bound constants and the theoretical schedule, sample-size and iteration
/// bounds for the configured plant and initial gain.
pub fn constants(cfg: &ExperimentConfig, exp: &Experiment, out: &mut dyn Write) -> Result<()> {
    let th = &cfg.theory;
    let d_x = exp.pgm.ball_radius;
    let consts = bound_constants(
        &exp.sys,
        &exp.w,
        &exp.k0,
        &exp.sigma_x,
        &exp.sigma_u,
        th.delta,
        th.c1,
        th.c2,
        d_x,
    )?;
    let ds = dataset_for(exp, exp.seeds[0])?;
    let lift = noise_lift(&exp.sys.sigma_w)?;
    let samples = build_samples(&ds.triples, &exp.k0, &exp.w, &lift)?;
    let gammas: Vec<_> = samples.into_iter().map(|s| s.gamma_hat).collect();
    let alpha = empirical_alpha(&gammas)?;
    let consts = consts.with_alpha(alpha);
    let sched = balanced_schedule(&consts, d_x, th.d_y, exp.samples)?;
    let sizing = epoch_sample_sizes(&consts, th.d_y, exp.pgm.epoch_plan.d0, th.epsilon)?;

    let p0 = solve_policy_lyapunov(&exp.sys, &exp.w, &exp.k0)?;
    let cost0 = (&p0 * &exp.sys.sigma_w).trace();
    let (k_star, _) = solve_dare(&exp.sys, &exp.w)?;
    let gap0 = cost0 - average_cost(&exp.sys, &exp.w, &k_star)?;
    let method = exp.pgm.method;
    let contraction = contraction_factors(&exp.sys, &exp.w, exp.pgm.step, method, th.sigma)?;
    let accuracy = required_accuracy(&exp.sys, &exp.w, cost0, th.epsilon, th.sigma, method)?;

    let n = exp.samples;
    let sizes: Vec<String> = sizing.sizes.iter().map(u64::to_string).collect();
    let lines = [
        format!("delta = {}", th.delta),
        format!("c1 = {}", th.c1),
        format!("c2 = {}", th.c2),
        format!("D_X = {d_x}"),
        format!("D_Y = {}", th.d_y),
        format!("L_Gamma = {:.11e}", consts.l_gamma),
        format!("M_Gamma = {:.11e}", consts.m_gamma),
        format!("M_c = {:.11e}", consts.m_c),
        format!("Omega_X = {:.11e}", consts.omega_x),
        format!("Omega_Y = {:.11e}", consts.omega_y),
        format!("M_X = {:.11e}", consts.m_x),
        format!("M_Y = {:.11e}", consts.m_y),
        format!("alpha (seed {}, N = {n}) = {alpha:.11e}", exp.seeds[0]),
        format!("eta_1 = {:.11e}", sched.eta[0]),
        format!("lambda_1 = {:.11e}", sched.lambda[0]),
        format!("eta_{n} = {:.11e}", sched.eta[n - 1]),
        format!("lambda_{n} = {:.11e}", sched.lambda[n - 1]),
        format!("epsilon = {}", th.epsilon),
        format!("epochs S = {}", sizing.epochs),
        format!("epoch sizes N_s = [{}]", sizes.join(", ")),
        format!("total samples = {}", sizing.total),
        format!("method = {method:?}, step = {}", exp.pgm.step),
        format!("gamma = {:.11e}", contraction.gamma),
        format!("sigma = {}", th.sigma),
        format!("gamma_hat = {:.11e}", contraction.gamma_hat),
        format!("initial gap = {gap0:.11e}"),
        format!("iteration bound = {}", contraction.iteration_bound(gap0, th.epsilon)),
        format!("required accuracy = {accuracy:.11e}"),
    ];
    print(out, &(lines.join("\n") + "\n"))
}
