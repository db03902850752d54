//! The subcommands. Each one writes its artifacts under the run directory
//! and finishes with the manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use difflab_core::datasets::{generate, DataSource};
use difflab_core::metrics::{distance_report, reconstruction_curves};
use difflab_core::nn::{load_checkpoint, save_checkpoint, train, write_loss_csv, DenoiserModel};
use difflab_core::oracle::GaussianMixture;
use difflab_core::samplers::{
    convergence_study, initial_noise, sample, write_convergence_csv, SamplerConfig, SamplerKind,
};
use difflab_core::tensor_io::{read_tensor, write_tensor, Sidecar};
use difflab_core::{Batch, Denoiser, OracleDenoiser};
use ndarray::s;

use crate::config::{streams, ExperimentConfig};
use crate::error::{HarnessError, HarnessResult};
use crate::manifest::{Manifest, Run};

fn create(path: &Path) -> HarnessResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))
}

fn finish_writer(mut w: BufWriter<File>) -> HarnessResult<()> {
    w.flush()?;
    Ok(())
}

fn oracle_for(cfg: &ExperimentConfig) -> HarnessResult<OracleDenoiser> {
    cfg.dataset_mixture().map(OracleDenoiser::new).ok_or_else(|| {
        HarnessError::Runtime(
            "this dataset has no closed-form denoiser; pass --checkpoint".into(),
        )
    })
}

/// The trained model if a checkpoint is given, otherwise the dataset's oracle.
fn denoiser(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> HarnessResult<Box<dyn Denoiser>> {
    match checkpoint {
        Some(p) => {
            let m = load_checkpoint(p)
                .map_err(|e| HarnessError::Runtime(format!("{}: {e}", p.display())))?;
            Ok(Box::new(m))
        }
        None => Ok(Box::new(oracle_for(cfg)?)),
    }
}

fn data_dim(cfg: &ExperimentConfig) -> usize {
    match &cfg.dataset.mixture {
        Some(m) => m.dim(),
        None => 2,
    }
}

pub fn run_train(cfg: &ExperimentConfig) -> HarnessResult<Manifest> {
    let mut run = Run::start(&cfg.output_dir, "train", cfg)?;
    let sched = cfg.build_schedule()?;
    let spec = cfg.training_spec();
    let data = generate(&spec)?;
    let init_seed = cfg.derived_seed(streams::INIT);
    let mut model = DenoiserModel::new(data.ncols(), &cfg.model_config(), init_seed)?;
    let tc = cfg.train_config();
    let records = train(&mut model, data.view(), &sched, &tc)?;
    run.seed("dataset", spec.seed);
    run.seed("init", init_seed);
    run.seed("train", tc.seed);

    let path = run.file("loss.csv");
    let mut w = create(&path)?;
    write_loss_csv(&records, &mut w)?;
    finish_writer(w)?;
    let path = run.file("checkpoint.dflb");
    save_checkpoint(&model, &path)?;
    run.finish()
}

fn sample_one(
    den: &dyn Denoiser,
    cfg: &ExperimentConfig,
    kind: SamplerKind,
    steps: usize,
    seed: u64,
    record: bool,
) -> HarnessResult<difflab_core::samplers::SampleOutput> {
    let sched = cfg.build_schedule()?;
    let mut sc = SamplerConfig::new(kind, steps, seed);
    sc.record_trajectory = record;
    Ok(sample(den, &sc, &sched, cfg.sampler.chains, data_dim(cfg))?)
}

pub fn run_sample(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> HarnessResult<Manifest> {
    cfg.check_sampler_steps("sampler.steps", &[cfg.sampler.steps])?;
    let den = denoiser(cfg, checkpoint)?;
    let mut run = Run::start(&cfg.output_dir, "sample", cfg)?;
    let sm = &cfg.sampler;
    for &id in &sm.seeds {
        let seed = cfg.sampler_seed(id);
        run.seed(&format!("sampler.{id}"), seed);
        let out = sample_one(den.as_ref(), cfg, sm.kind, sm.steps, seed, sm.record_trajectory)?;
        let mut side = Sidecar::for_batch(&out.samples);
        side.sampler = Some(sm.kind.name().to_owned());
        side.steps = Some(sm.steps);
        side.seed = Some(seed);
        let data_path = run.file(&format!("samples_{id}.f32"));
        write_tensor(&data_path, &out.samples, &side)?;
        run.file(&format!("samples_{id}.json"));
        if let Some(traj) = out.trajectory {
            let path = run.file(&format!("trajectory_{id}.csv"));
            let mut w = create(&path)?;
            traj.write_csv(&mut w)?;
            finish_writer(w)?;
        }
    }
    run.finish()
}

struct EvalRow {
    metric: &'static str,
    steps: Option<usize>,
    sampler: Option<String>,
    value: f64,
    seed: Option<u64>,
}

fn write_eval_csv(rows: &[EvalRow], path: &Path) -> HarnessResult<()> {
    let mut w = create(path)?;
    writeln!(w, "metric,steps,sampler,value,seed")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.metric,
            r.steps.map(|v| v.to_string()).unwrap_or_default(),
            r.sampler.as_deref().unwrap_or(""),
            difflab_core::fmt_f64(r.value),
            r.seed.map(|v| v.to_string()).unwrap_or_default()
        )?;
    }
    finish_writer(w)
}

fn distance_rows(
    cfg: &ExperimentConfig,
    samples: &Batch,
    reference: &Batch,
    steps: Option<usize>,
    sampler: Option<String>,
    seed: Option<u64>,
) -> HarnessResult<Vec<EvalRow>> {
    if samples.ncols() != reference.ncols() {
        return Err(HarnessError::Runtime(format!(
            "samples have dim {}, reference has dim {}",
            samples.ncols(),
            reference.ncols()
        )));
    }
    let e = &cfg.eval;
    let sw = distance_report(
        samples.view(),
        reference.view(),
        e.n_projections,
        e.bandwidth,
        cfg.derived_seed(streams::EVAL),
    )?
    .sliced_wasserstein;
    let k = e.mmd_max_points;
    let a = samples.slice(s![..k.min(samples.nrows()), ..]);
    let b = reference.slice(s![..k.min(reference.nrows()), ..]);
    let mmd = distance_report(a, b, 1, e.bandwidth, cfg.derived_seed(streams::EVAL))?.mmd_rbf;
    Ok(vec![
        EvalRow {
            metric: "sliced_wasserstein",
            steps,
            sampler: sampler.clone(),
            value: sw,
            seed,
        },
        EvalRow {
            metric: "mmd_rbf",
            steps,
            sampler,
            value: mmd,
            seed,
        },
    ])
}

/// Distances from each sample file to the reference. With no sample files,
/// sweeps the configured samplers and step counts instead.
pub fn run_eval(
    cfg: &ExperimentConfig,
    samples: &[PathBuf],
    reference: Option<&Path>,
    checkpoint: Option<&Path>,
) -> HarnessResult<Manifest> {
    if samples.is_empty() {
        cfg.check_sampler_steps("eval.sweep_steps", &cfg.eval.sweep_steps)?;
    }
    let den = if samples.is_empty() {
        Some(denoiser(cfg, checkpoint)?)
    } else {
        None
    };
    let reference = match reference {
        Some(p) => Some(read_tensor(p)?.0),
        None => None,
    };
    let mut run = Run::start(&cfg.output_dir, "eval", cfg)?;
    run.seed("eval", cfg.derived_seed(streams::EVAL));
    let reference = match reference {
        Some(r) => r,
        None => {
            let seed = cfg.derived_seed(streams::REFERENCE);
            run.seed("reference", seed);
            generate(&cfg.dataset_spec(cfg.eval.reference_n, seed))?
        }
    };
    let mut rows = Vec::new();
    if let Some(den) = den {
        for &kind in &cfg.eval.sweep_samplers {
            for &steps in &cfg.eval.sweep_steps {
                for &id in &cfg.sampler.seeds {
                    let seed = cfg.sampler_seed(id);
                    run.seed(&format!("sampler.{id}"), seed);
                    let out = sample_one(den.as_ref(), cfg, kind, steps, seed, false)?;
                    rows.extend(distance_rows(
                        cfg,
                        &out.samples,
                        &reference,
                        Some(steps),
                        Some(kind.name().to_owned()),
                        Some(seed),
                    )?);
                }
            }
        }
    } else {
        for p in samples {
            let (x, side) = read_tensor(p)?;
            rows.extend(distance_rows(cfg, &x, &reference, side.steps, side.sampler, side.seed)?);
        }
    }
    let path = run.file("eval.csv");
    write_eval_csv(&rows, &path)?;
    run.finish()
}

pub fn run_schedule_dump(cfg: &ExperimentConfig) -> HarnessResult<Manifest> {
    let mut run = Run::start(&cfg.output_dir, "schedule-dump", cfg)?;
    let sched = cfg.build_schedule()?;
    let path = run.file("schedule.csv");
    let mut w = create(&path)?;
    sched.write_csv(&mut w)?;
    finish_writer(w)?;
    run.finish()
}

pub fn recon_grid(cfg: &ExperimentConfig) -> Vec<usize> {
    if let Some(g) = &cfg.recon.t_grid {
        return g.clone();
    }
    let last = cfg.schedule.steps - 1;
    let mut grid: Vec<usize> = (1..=last).step_by(cfg.recon.stride).collect();
    if grid.last() != Some(&last) && last >= 1 {
        grid.push(last);
    }
    grid
}

pub fn run_recon_curve(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> HarnessResult<Manifest> {
    let grid = recon_grid(cfg);
    cfg.check_recon_grid(&grid)?;
    let sched = cfg.build_schedule()?;
    let den = denoiser(cfg, checkpoint)?;
    let mut run = Run::start(&cfg.output_dir, "recon-curve", cfg)?;
    let seed = cfg.derived_seed(streams::RECON);
    run.seed("recon", seed);
    let spec = cfg.training_spec();
    let mixture: Option<GaussianMixture> = cfg.dataset_mixture();
    let source: &dyn DataSource = match &mixture {
        Some(m) => m,
        None => &spec,
    };
    let table = reconstruction_curves(
        den.as_ref(),
        source,
        &sched,
        cfg.recon.n_per_t,
        &grid,
        seed,
    )?;
    let path = run.file("recon.csv");
    let mut w = create(&path)?;
    table.write_csv(&mut w)?;
    finish_writer(w)?;
    run.finish()
}

pub fn run_convergence_study(cfg: &ExperimentConfig) -> HarnessResult<Manifest> {
    let c = &cfg.convergence;
    let oracle = match &c.mixture {
        Some(m) => OracleDenoiser::new(m.clone()),
        None => oracle_for(cfg)?,
    };
    let mut run = Run::start(&cfg.output_dir, "convergence-study", cfg)?;
    let seed = cfg.derived_seed(streams::CONVERGENCE);
    run.seed("convergence", seed);
    let x = initial_noise(c.chains, oracle.mixture.dim(), seed);
    let points = convergence_study(&oracle, x.view(), &c.step_counts, c.reference_steps)?;
    let path = run.file("convergence.csv");
    let mut w = create(&path)?;
    write_convergence_csv(&points, &mut w)?;
    finish_writer(w)?;
    run.finish()
}
