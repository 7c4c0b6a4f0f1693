//! Acceptance gate: one line per criterion, non-zero exit if any fails.

use std::path::Path;
use std::time::{Duration, Instant};

use gpslab::commands::Options;
use gpslab::output::RunFigures;
use gpslab::{cmd_run, ExperimentConfig};
use gpslab_core::sampler::{self, ddim_denoise, ddim_invert, Trajectory};
use gpslab_core::scoremodel::reference_mixture;
use gpslab_core::vector::norm;
use gpslab_core::{
    Component, Condition, GuidanceSpec, Method, MixtureModel, NoiseSchedule, SamplerConfig,
    ScheduleKind, ScheduleSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

// Criterion 1.
const INVERSION_TRIPLES: usize = 1_000;
const INVERSION_TOL: f64 = 1e-10;
// Criterion 2.
const HULL_PAIRS: usize = 10_000;
const HULL_SLACK: f64 = 1e-15;
// Criterion 3.
const DIVERGENCE_SEEDS: u64 = 20;
const MIN_POSITIVE_SLOPES: usize = 18;
/// Required `mean zigzag late_ratio / mean gps late_ratio`. The first verified run had
/// the gps ratio above the zigzag one, so no margin beyond strict ordering was derivable.
const LATE_RATIO_FACTOR: f64 = 1.0;
// Criterion 4.
const MIN_R_SQUARED: f64 = 0.999;
const MAX_INTERCEPT: f64 = 1e-8;
// Criterion 5.
const MC_PROBES: usize = 20;
const MC_SAMPLES: usize = 1_000_000;
const MC_REL_TOL: f64 = 0.02;
// Criterion 6.
const GRID: usize = 1_000;
// Criterion 7.
const QUALITY_SEEDS: u64 = 50;
/// Mean final offsets of the first verified run: gps cosine-up, gps cosine-down, zigzag.
const PINNED_OFFSETS: [f64; 3] = [
    2.044_143_659_617_810_6,
    2.152_392_046_603_968_5,
    2.167_836_318_323_133,
];
const PINNED_REL_TOL: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn reference_config() -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.json");
    ExperimentConfig::load(&path).expect("reference config loads")
}

fn run_named(cfg: &ExperimentConfig, name: &str, seed: u64) -> Trajectory {
    let run = cfg
        .runs
        .iter()
        .find(|r| r.name == name)
        .expect("run exists");
    let sampler = SamplerConfig {
        seed,
        ..run.sampler.clone()
    };
    sampler::run(&sampler, &cfg.model, &cfg.schedule).expect("run succeeds")
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn inversion_exactness() -> Outcome {
    let s = NoiseSchedule::default_linear(50).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..INVERSION_TRIPLES {
        let t = rng.random_range(1..=50);
        let x = gaussian(&mut rng, 4, 3.0);
        let eps = gaussian(&mut rng, 4, 1.0);
        let back = ddim_invert(&ddim_denoise(&x, &eps, t, &s).unwrap(), &eps, t, &s).unwrap();
        for (a, b) in back.iter().zip(&x) {
            worst = worst.max((a - b).abs());
        }
    }
    Outcome {
        pass: worst <= INVERSION_TOL,
        detail: format!(
            "max |error| {worst:.3e} over {INVERSION_TRIPLES} triples (tol {INVERSION_TOL:.0e})"
        ),
    }
}

fn hull_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0usize;
    for _ in 0..HULL_PAIRS {
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let u = gaussian(&mut rng, 4, scale);
        let c = gaussian(&mut rng, 4, scale);
        for k in 0..=10 {
            let lambda = k as f64 / 10.0;
            let out = GuidanceSpec::interpolate(lambda)
                .unwrap()
                .combine(&u, &c)
                .unwrap();
            for ((o, a), b) in out.iter().zip(&u).zip(&c) {
                if *o < a.min(*b) - HULL_SLACK || *o > a.max(*b) + HULL_SLACK {
                    violations += 1;
                }
            }
        }
    }
    Outcome {
        pass: violations == 0,
        detail: format!("{violations} violations over {HULL_PAIRS} pairs x 11 weights"),
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn divergence_vs_boundedness() -> Outcome {
    let cfg = reference_config();
    let (mut z, mut g) = (Vec::new(), Vec::new());
    for seed in 0..DIVERGENCE_SEEDS {
        z.push(RunFigures::of(&run_named(&cfg, "zigzag", seed)));
        g.push(RunFigures::of(&run_named(&cfg, "gps", seed)));
    }
    let exceeds = z
        .iter()
        .zip(&g)
        .filter(|(z, g)| z.cumulative_tau2 > g.cumulative_tau2)
        .count();
    let positive = z.iter().filter(|f| f.slope > 0.0).count();
    let z_late = mean(&z.iter().map(|f| f.late_ratio).collect::<Vec<_>>());
    let g_late = mean(&g.iter().map(|f| f.late_ratio).collect::<Vec<_>>());
    let z_cum = mean(&z.iter().map(|f| f.cumulative_tau2).collect::<Vec<_>>());
    let g_cum = mean(&g.iter().map(|f| f.cumulative_tau2).collect::<Vec<_>>());
    let n = DIVERGENCE_SEEDS as usize;
    let ordered = exceeds == n && z_cum > g_cum;
    let slopes = positive >= MIN_POSITIVE_SLOPES;
    let late = g_late * LATE_RATIO_FACTOR < z_late;
    Outcome {
        pass: ordered && slopes && late,
        detail: format!(
            "sum|tau2| zigzag {z_cum:.4} > gps {g_cum:.4} on {exceeds}/{n} seeds [{}]; \
             zigzag slope > 0 on {positive}/{n} [{}]; late_ratio gps {g_late:.3} vs zigzag {z_late:.3} [{}]",
            ok(ordered),
            ok(slopes),
            ok(late)
        ),
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "fail"
    }
}

fn semantic_gain_linearity() -> Outcome {
    // Conditional and unconditional predictions each come from one Gaussian.
    let model = MixtureModel::new(vec![
        Component {
            weight: 0.5,
            mean: vec![0.0, 0.0],
            sigma: 1.0,
            class: "null".into(),
        },
        Component {
            weight: 0.5,
            mean: vec![2.0, 1.0],
            sigma: 0.7,
            class: "target".into(),
        },
    ])
    .unwrap()
    .with_null_class("null")
    .unwrap();
    let s = NoiseSchedule::linear(50, 1e-4, 0.2).unwrap();
    let deltas: Vec<f64> = (0..=8).map(|k| 0.5 * k as f64).collect();
    let norms: Vec<f64> = deltas
        .iter()
        .map(|d| {
            let method = Method::Zigzag {
                omega_h: 1.0 + d,
                omega_l: 1.0,
            };
            let cfg = SamplerConfig::new(method, 50, 49, Condition::Class("target".into()), 11);
            sampler::run(&cfg, &model, &s).unwrap().records[0].tau1_norm
        })
        .collect();
    let (mx, my) = (mean(&deltas), mean(&norms));
    let sxy: f64 = deltas
        .iter()
        .zip(&norms)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum();
    let sxx: f64 = deltas.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = deltas
        .iter()
        .zip(&norms)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let ss_tot: f64 = norms.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = 1.0 - ss_res / ss_tot;
    Outcome {
        pass: r2 > MIN_R_SQUARED && intercept.abs() < MAX_INTERCEPT,
        detail: format!("R^2 {r2:.12}, intercept {intercept:.3e}, slope {slope:.6}"),
    }
}

fn predictor_vs_sampling() -> Outcome {
    let m = reference_mixture();
    let s = NoiseSchedule::linear(50, 1e-4, 0.2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for probe in 0..MC_PROBES {
        let t = rng.random_range(1..=50);
        let a = s.alpha_bar(t).unwrap();
        let centre = if rng.random_bool(0.5) { 3.0 } else { -3.0 };
        let x0 = [
            centre + 0.5 * rng.sample::<f64, _>(StandardNormal),
            0.5 * rng.sample::<f64, _>(StandardNormal),
        ];
        let x: Vec<f64> = x0
            .iter()
            .map(|v| a.sqrt() * v + (1.0 - a).sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let exact = m
            .posterior_mean_at(&x, a, &Condition::Unconditional)
            .unwrap();
        let sampled = m
            .mc_posterior_mean(
                &s,
                &x,
                t,
                &Condition::Unconditional,
                MC_SAMPLES,
                100 + probe as u64,
            )
            .unwrap();
        let diff: Vec<f64> = exact.iter().zip(&sampled).map(|(a, b)| a - b).collect();
        let rel = norm(&diff) / norm(&exact);
        worst = worst.max(rel);
    }
    Outcome {
        pass: worst < MC_REL_TOL,
        detail: format!(
            "worst relative error {worst:.3e} over {MC_PROBES} probes, n = {MC_SAMPLES}"
        ),
    }
}

fn scheduler_shapes() -> Outcome {
    let mut failures = Vec::new();
    for kind in ScheduleKind::ALL {
        let spec = ScheduleSpec::new(kind, 0.1, 0.3).unwrap();
        let (start, end) = spec.endpoints();
        for total in [2, 7, 50, GRID] {
            if spec.eval(total, total).unwrap() != start || spec.eval(1, total).unwrap() != end {
                failures.push(format!("{kind:?} endpoints at T={total}"));
            }
        }
        let grid: Vec<f64> = (1..=GRID)
            .rev()
            .map(|t| spec.eval(t, GRID).unwrap())
            .collect();
        let rising = grid.windows(2).all(|w| w[1] >= w[0]);
        let falling = grid.windows(2).all(|w| w[1] <= w[0]);
        let monotone = match kind {
            ScheduleKind::Constant => rising && falling,
            ScheduleKind::Linear | ScheduleKind::CosineUp | ScheduleKind::Sigmoid => rising,
            ScheduleKind::CosineDown => falling,
            ScheduleKind::CosineUpDown => {
                let peak = grid.len() / 2;
                grid[..peak].windows(2).all(|w| w[1] >= w[0])
                    && grid[peak..].windows(2).all(|w| w[1] <= w[0])
            }
        };
        if !monotone {
            failures.push(format!("{kind:?} monotonicity"));
        }
    }
    let up_down = ScheduleSpec::new(ScheduleKind::CosineUpDown, 0.1, 0.3).unwrap();
    let peak = up_down.at_progress(0.5);
    let peak_odd = up_down.eval(26, 51).unwrap();
    if peak != 0.3 || peak_odd != 0.3 {
        failures.push(format!("cosine_up_down peak {peak} / {peak_odd}"));
    }
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!(
                "{} kinds: exact endpoints, monotone on {GRID} points, midpoint peak 0.3",
                ScheduleKind::ALL.len()
            )
        } else {
            failures.join("; ")
        },
    }
}

fn final_quality_direction() -> Outcome {
    let cfg = reference_config();
    let gps = cfg.runs.iter().find(|r| r.name == "gps").unwrap();
    let Method::Gps { lambda1, lambda2 } = gps.sampler.method else {
        unreachable!("reference gps run")
    };
    let down = SamplerConfig {
        method: Method::Gps {
            lambda1,
            lambda2: ScheduleSpec::new(ScheduleKind::CosineDown, lambda2.lo(), lambda2.hi())
                .unwrap(),
        },
        ..gps.sampler.clone()
    };
    let offsets = |f: &dyn Fn(u64) -> Trajectory| -> f64 {
        mean(
            &(0..QUALITY_SEEDS)
                .map(|seed| f(seed).final_offset())
                .collect::<Vec<_>>(),
        )
    };
    let up = offsets(&|seed| run_named(&cfg, "gps", seed));
    let down = offsets(&|seed| {
        sampler::run(
            &SamplerConfig {
                seed,
                ..down.clone()
            },
            &cfg.model,
            &cfg.schedule,
        )
        .unwrap()
    });
    let zigzag = offsets(&|seed| run_named(&cfg, "zigzag", seed));
    let ordered = up <= down && down <= zigzag;
    let pinned = [up, down, zigzag]
        .iter()
        .zip(PINNED_OFFSETS)
        .all(|(v, p)| (v - p).abs() <= PINNED_REL_TOL * p.abs());
    Outcome {
        pass: ordered && pinned,
        detail: format!(
            "mean final offset over {QUALITY_SEEDS} seeds: cosine_up {up:.17} <= cosine_down {down:.17} <= zigzag {zigzag:.17} [{}], pinned [{}]",
            ok(ordered),
            ok(pinned)
        ),
    }
}

fn determinism() -> Outcome {
    let cfg = reference_config();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let run = |dir: &Path, workers| {
        let opts = Options {
            workers,
            out: Some(dir.to_path_buf()),
        };
        cmd_run(&cfg, &opts).unwrap();
    };
    run(a.path(), None);
    run(b.path(), Some(1));
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let differing = names
        .iter()
        .filter(|n| std::fs::read(a.path().join(n)).ok() != std::fs::read(b.path().join(n)).ok())
        .count();
    let csvs = names
        .iter()
        .filter(|n| n.to_string_lossy().ends_with(".csv"))
        .count();
    Outcome {
        pass: differing == 0 && csvs == cfg.runs.len() * cfg.seeds.len() + 1,
        detail: format!(
            "{} files ({csvs} csv), {differing} differ between runs",
            names.len()
        ),
    }
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        (
            "1 matched-eps inversion exactness",
            Duration::from_secs(1),
            inversion_exactness,
        ),
        (
            "2 interpolated guidance stays in the hull",
            Duration::from_secs(1),
            hull_bound,
        ),
        (
            "3 zigzag divergence vs gps boundedness",
            Duration::from_secs(30),
            divergence_vs_boundedness,
        ),
        (
            "4 semantic gain linear in the guidance gap",
            Duration::from_secs(5),
            semantic_gain_linearity,
        ),
        (
            "5 posterior mean vs sampling oracle",
            Duration::from_secs(60),
            predictor_vs_sampling,
        ),
        (
            "6 inversion schedule shapes",
            Duration::from_secs(1),
            scheduler_shapes,
        ),
        (
            "7 final offset ordering",
            Duration::from_secs(60),
            final_quality_direction,
        ),
        ("8 byte-identical reruns", Duration::MAX, determinism),
    ];
    let mut failed = 0;
    for (name, limit, f) in criteria {
        let start = Instant::now();
        let out = f();
        let took = start.elapsed();
        let pass = out.pass && took < limit;
        if !pass {
            failed += 1;
        }
        let status = if pass { "PASS" } else { "FAIL" };
        if limit == Duration::MAX {
            println!("[{status}] {name}: {} ({took:.2?})", out.detail);
        } else {
            println!(
                "[{status}] {name}: {} ({took:.2?}, limit {limit:?})",
                out.detail
            );
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
