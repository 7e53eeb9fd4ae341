//! Monte Carlo trials: one dataset per seed, every estimator on each dataset.

use std::path::{Path, PathBuf};
use std::time::Instant;

use mfpg_core::datagen::{collect_dataset, load_dataset, system_fingerprint};
use mfpg_core::pgm::run_modelfree;
use mfpg_core::Dataset;
use rayon::prelude::*;

use crate::config::Experiment;
use crate::error::{CliError, Result};
use crate::table::Trial;

pub fn dataset_file(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("dataset_seed{seed}.csv"))
}

/// Loads the dataset of `seed` from the configured directory, or draws it.
pub fn dataset_for(exp: &Experiment, seed: u64) -> Result<Dataset> {
    let Some(dir) = &exp.dataset_dir else {
        return Ok(collect_dataset(
            &exp.sys,
            exp.samples,
            &exp.sigma_x,
            &exp.sigma_u,
            seed,
        )?);
    };
    let path = dataset_file(dir, seed);
    let ds = load_dataset(&path)?;
    if ds.meta.system_sha != system_fingerprint(&exp.sys) {
        return Err(CliError::Config(format!(
            "{} was collected from a different system",
            path.display()
        )));
    }
    Ok(ds)
}

/// Runs every (seed, estimator) pair in parallel; the result is ordered by
/// estimator (config order) then seed (seed-list order) regardless of
/// scheduling.
pub fn run_trials(exp: &Experiment) -> Result<Vec<Trial>> {
    let datasets: Vec<Dataset> = exp
        .seeds
        .par_iter()
        .map(|&seed| dataset_for(exp, seed))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..exp.estimators.len())
        .flat_map(|e| (0..exp.seeds.len()).map(move |s| (e, s)))
        .collect();
    jobs.par_iter()
        .map(|&(e, s)| {
            let estimator = exp.estimators[e];
            let start = Instant::now();
            let trace = run_modelfree(&exp.sys, &exp.w, &exp.k0, &datasets[s], &exp.run_config(estimator))?;
            Ok(Trial {
                estimator,
                seed: exp.seeds[s],
                trace,
                wall_time_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}
