use std::path::{Path, PathBuf};

use gpslab_core::sampler::{self, Method, SamplerConfig, Trajectory};
use gpslab_core::ScheduleSpec;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::output::{self, AblationRow, RunFigures, SummaryRow};
use crate::plot;

pub const OUT_ENV: &str = "GPSLAB_OUT";
pub const DEFAULT_OUT: &str = "gpslab-out";

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Options {
    /// Worker threads; `None` uses one per core.
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

/// `--out`, then the config's `output_dir`, then `$GPSLAB_OUT`, then `gpslab-out`.
pub fn output_dir(opts: &Options, config: &ExperimentConfig) -> PathBuf {
    opts.out
        .clone()
        .or_else(|| config.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        if n == 0 {
            return Err(HarnessError::Invalid("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| HarnessError::Invalid(format!("cannot start worker pool: {e}")))
}

fn method_name(m: &Method) -> &'static str {
    match m {
        Method::Standard { .. } => "standard",
        Method::Zigzag { .. } => "zigzag",
        Method::Gps { .. } => "gps",
    }
}

/// Runs every (configuration, seed) pair; results keep the input order.
fn execute(
    config: &ExperimentConfig,
    jobs: &[SamplerConfig],
    workers: Option<usize>,
) -> Result<Vec<Trajectory>> {
    pool(workers)?.install(|| {
        jobs.par_iter()
            .map(|cfg| {
                sampler::run(cfg, &config.model, &config.schedule).map_err(HarnessError::from)
            })
            .collect()
    })
}

fn write_all(dir: &Path, files: &[(PathBuf, Vec<u8>)]) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| HarnessError::io(format!("cannot create {}", dir.display()), e))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        std::fs::write(&path, bytes)
            .map_err(|e| HarnessError::io(format!("cannot write {}", path.display()), e))?;
    }
    Ok(())
}

fn seeded(base: &SamplerConfig, seed: u64) -> SamplerConfig {
    SamplerConfig {
        seed,
        ..base.clone()
    }
}

/// Executes every run for every seed; writes one trajectory CSV per pair and
/// `summary.csv`. Returns the output directory.
pub fn cmd_run(config: &ExperimentConfig, opts: &Options) -> Result<PathBuf> {
    let jobs: Vec<SamplerConfig> = config
        .runs
        .iter()
        .flat_map(|run| config.seeds.iter().map(|&s| seeded(&run.sampler, s)))
        .collect();
    let trajectories = execute(config, &jobs, opts.workers)?;

    let n_seeds = config.seeds.len();
    let mut files = Vec::with_capacity(trajectories.len() + 1);
    let mut figures = Vec::with_capacity(config.runs.len());
    for (i, run) in config.runs.iter().enumerate() {
        let chunk = &trajectories[i * n_seeds..(i + 1) * n_seeds];
        for (seed, tr) in config.seeds.iter().zip(chunk) {
            files.push((
                PathBuf::from(format!("{}_{seed}.csv", run.name)),
                output::trajectory_csv(tr, config.dimension)?,
            ));
        }
        figures.push(chunk.iter().map(RunFigures::of).collect::<Vec<_>>());
    }
    let rows: Vec<SummaryRow> = config
        .runs
        .iter()
        .zip(&figures)
        .map(|(run, f)| SummaryRow {
            run: &run.name,
            method: method_name(&run.sampler.method),
            figures: f,
        })
        .collect();
    files.push((PathBuf::from("summary.csv"), output::summary_csv(&rows)?));

    let dir = output_dir(opts, config);
    write_all(&dir, &files)?;
    if config.emit_plots {
        cmd_plot(&dir)?;
    }
    Ok(dir)
}

/// Sweeps the seven inversion schedules over the first GPS run and writes
/// `ablation.csv`.
pub fn cmd_ablate_scheduler(config: &ExperimentConfig, opts: &Options) -> Result<PathBuf> {
    let rows = ablation_rows(config, opts.workers)?;
    let dir = output_dir(opts, config);
    write_all(
        &dir,
        &[(PathBuf::from("ablation.csv"), output::ablation_csv(&rows)?)],
    )?;
    Ok(dir)
}

pub fn ablation_rows(
    config: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<Vec<AblationRow>> {
    let (base, lambda1) = config
        .runs
        .iter()
        .find_map(|r| match r.sampler.method {
            Method::Gps { lambda1, .. } => Some((&r.sampler, lambda1)),
            _ => None,
        })
        .ok_or_else(|| HarnessError::Invalid("ablate-scheduler needs a gps run".into()))?;
    let (lo, hi) = config.ablation_range;
    let family = ScheduleSpec::ablation_family(lo, hi)?;

    let jobs: Vec<SamplerConfig> = family
        .iter()
        .flat_map(|(_, spec)| {
            config.seeds.iter().map(move |&seed| SamplerConfig {
                method: Method::Gps {
                    lambda1,
                    lambda2: *spec,
                },
                ..seeded(base, seed)
            })
        })
        .collect();
    let trajectories = execute(config, &jobs, workers)?;

    let n = config.seeds.len();
    Ok(family
        .into_iter()
        .enumerate()
        .map(|(i, (label, spec))| AblationRow {
            label,
            kind: kind_name(&spec),
            lo: spec.lo(),
            hi: spec.hi(),
            figures: trajectories[i * n..(i + 1) * n]
                .iter()
                .map(RunFigures::of)
                .collect(),
        })
        .collect())
}

fn kind_name(spec: &ScheduleSpec) -> String {
    serde_json::to_value(spec.kind())
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// Renders every trajectory CSV in `dir` to `<stem>.svg` plus `comparison.svg`.
/// Nothing is written unless every CSV parses.
pub fn cmd_plot(dir: &Path) -> Result<Vec<PathBuf>> {
    let paths = plot::trajectory_csvs(dir)?;
    if paths.is_empty() {
        return Err(HarnessError::BadCsv {
            path: dir.to_path_buf(),
            reason: "no trajectory csv files".into(),
        });
    }
    let series = paths
        .iter()
        .map(|p| plot::read_series(p))
        .collect::<Result<Vec<_>>>()?;
    let mut files: Vec<(PathBuf, Vec<u8>)> = series
        .iter()
        .map(|s| {
            (
                PathBuf::from(format!("{}.svg", s.name)),
                plot::run_svg(s).into_bytes(),
            )
        })
        .collect();
    files.push((
        PathBuf::from("comparison.svg"),
        plot::comparison_svg(&series).into_bytes(),
    ));
    write_all(dir, &files)?;
    Ok(files.into_iter().map(|(p, _)| dir.join(p)).collect())
}
