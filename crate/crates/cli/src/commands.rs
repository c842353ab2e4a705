//! The five subcommands. Each takes a fully resolved [`RunConfig`] and
//! writes its artifacts under `out`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use zslforge::classify::synthesize_unseen;
use zslforge::data::{load_dataset, make_synthetic, save_dataset, SplitDataset};
use zslforge::evaluate::{render_reports, EvalReport};
use zslforge::models::ModelSet;
use zslforge::ndcore::{SeededRng, Stream};
use zslforge::pipeline::{ablate_stage1, evaluate_models, AblationRow};
use zslforge::training::{TrainHistory, Trainer};

use crate::config::RunConfig;
use crate::plot::{embedding_csv, embedding_svg, pca_2d};

pub const STAGE1_CHECKPOINT: &str = "stage1.ckpt";
pub const STAGE2_CHECKPOINT: &str = "stage2.ckpt";
pub const HISTORY_STAGE1: &str = "history_stage1.csv";
pub const HISTORY_STAGE2: &str = "history_stage2.csv";
pub const CLASSIFIER_CHECKPOINT: &str = "classifier.ckpt";
pub const REPORT_CZSL: &str = "report_czsl.json";
pub const REPORT_GZSL: &str = "report_gzsl.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const ABLATION_CSV: &str = "ablation.csv";
pub const EMBEDDING_CSV: &str = "embedding.csv";
pub const EMBEDDING_SVG: &str = "embedding.svg";

/// Creates `dir`, refusing a non-empty existing directory unless `force`.
fn prepare_empty_dir(dir: &Path, force: bool) -> anyhow::Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir)
            .with_context(|| format!("cannot read {}", dir.display()))?
            .next()
            .is_some();
        if non_empty && !force {
            bail!("{} is not empty (use --force to overwrite)", dir.display());
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

/// Creates `dir` and refuses to clobber any of `outputs` unless `force`.
fn prepare_outputs(dir: &Path, outputs: &[&str], force: bool) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    if !force {
        if let Some(existing) = outputs.iter().map(|f| dir.join(f)).find(|p| p.exists()) {
            bail!("{} exists (use --force to overwrite)", existing.display());
        }
    }
    Ok(())
}

fn write_resolved(config: &RunConfig, dir: &Path, command: &str) -> anyhow::Result<PathBuf> {
    let path = dir.join(format!("{command}.toml"));
    fs::write(&path, config.to_toml())?;
    Ok(path)
}

fn load_data(config: &RunConfig) -> anyhow::Result<SplitDataset> {
    let dir = config.data_dir()?;
    load_dataset(dir).with_context(|| format!("cannot load dataset {}", dir.display()))
}

pub fn cmd_gen_data(config: &RunConfig, out: &Path, force: bool) -> anyhow::Result<SplitDataset> {
    config.validate()?;
    let dataset = make_synthetic(&config.synthetic, config.train.seed)?;
    prepare_empty_dir(out, force)?;
    save_dataset(&dataset, out)?;
    write_resolved(config, out, "gen-data")?;
    Ok(dataset)
}

pub struct TrainOutputs {
    pub stage1: ModelSet,
    pub stage2: ModelSet,
    pub history1: TrainHistory,
    pub history2: TrainHistory,
}

pub fn cmd_train(config: &RunConfig, out: &Path, force: bool) -> anyhow::Result<TrainOutputs> {
    config.validate()?;
    let dataset = load_data(config)?;
    prepare_empty_dir(out, force)?;
    write_resolved(config, out, "train")?;
    let view = dataset.training_view();
    let train = &config.train;

    let mut first = Trainer::stage1(view, train)?;
    first.run(train.epochs_stage1)?;
    let (stage1, history1) = first.finish();
    stage1.save(&out.join(STAGE1_CHECKPOINT))?;
    history1.write_csv(&out.join(HISTORY_STAGE1))?;

    let mut second = Trainer::stage2(view, &stage1, train)?;
    second.run(train.epochs_stage2)?;
    let (stage2, history2) = second.finish();
    stage2.save(&out.join(STAGE2_CHECKPOINT))?;
    history2.write_csv(&out.join(HISTORY_STAGE2))?;
    Ok(TrainOutputs {
        stage1,
        stage2,
        history1,
        history2,
    })
}

pub struct EvalOutputs {
    pub czsl: EvalReport,
    pub gzsl: EvalReport,
}

pub fn cmd_evaluate(
    config: &RunConfig,
    checkpoint: &Path,
    out: &Path,
    force: bool,
) -> anyhow::Result<EvalOutputs> {
    config.validate()?;
    let dataset = load_data(config)?;
    let models = ModelSet::load(checkpoint)
        .with_context(|| format!("cannot load checkpoint {}", checkpoint.display()))?;
    prepare_outputs(
        out,
        &[REPORT_CZSL, REPORT_GZSL, REPORT_TEXT, CLASSIFIER_CHECKPOINT, "evaluate.toml"],
        force,
    )?;
    write_resolved(config, out, "evaluate")?;
    let result = evaluate_models(&models, &dataset, &config.eval, config.train.seed)?;
    result.czsl.save_json(&out.join(REPORT_CZSL))?;
    result.gzsl.save_json(&out.join(REPORT_GZSL))?;
    result.cascade.save(&out.join(CLASSIFIER_CHECKPOINT))?;
    fs::write(
        out.join(REPORT_TEXT),
        render_reports(&[&result.czsl, &result.gzsl]),
    )?;
    Ok(EvalOutputs {
        czsl: result.czsl,
        gzsl: result.gzsl,
    })
}

/// Worker threads for multi-seed commands, from `ZSLFORGE_THREADS`.
pub fn worker_threads() -> anyhow::Result<usize> {
    match std::env::var("ZSLFORGE_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => bail!("ZSLFORGE_THREADS must be a positive integer, got {v:?}"),
        },
    }
}

/// Runs the stage-one ablation for every configured seed. Without a dataset
/// directory each seed gets its own synthetic dataset generated from that seed.
pub fn ablation_rows(config: &RunConfig, threads: usize) -> anyhow::Result<Vec<AblationRow>> {
    config.validate()?;
    let grid = &config.ablate.grid;
    if grid.len() < 2 {
        bail!("ablation grid needs at least two epoch values");
    }
    if config.ablate.seeds.is_empty() {
        bail!("ablation needs at least one seed");
    }
    let shared = match &config.data {
        Some(_) => Some(load_data(config)?),
        None => None,
    };
    let run_seed = |seed: u64| -> anyhow::Result<Vec<AblationRow>> {
        let mut train = config.train.clone();
        train.seed = seed;
        let owned;
        let dataset = match &shared {
            Some(ds) => ds,
            None => {
                owned = make_synthetic(&config.synthetic, seed)?;
                &owned
            }
        };
        Ok(ablate_stage1(dataset, &train, &config.eval, grid)?)
    };
    let seeds = &config.ablate.seeds;
    let threads = threads.clamp(1, seeds.len());
    let mut per_seed: Vec<Option<anyhow::Result<Vec<AblationRow>>>> =
        (0..seeds.len()).map(|_| None).collect();
    if threads == 1 {
        for (slot, &seed) in per_seed.iter_mut().zip(seeds) {
            *slot = Some(run_seed(seed));
        }
    } else {
        let chunk = seeds.len().div_ceil(threads);
        std::thread::scope(|scope| {
            for (slots, seeds) in per_seed.chunks_mut(chunk).zip(seeds.chunks(chunk)) {
                let run_seed = &run_seed;
                scope.spawn(move || {
                    for (slot, &seed) in slots.iter_mut().zip(seeds) {
                        *slot = Some(run_seed(seed));
                    }
                });
            }
        });
    }
    let mut rows = Vec::with_capacity(seeds.len() * grid.len());
    for result in per_seed {
        rows.extend(result.expect("every seed ran")?);
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("seed,stage1_epochs,czsl_accuracy\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.seed, r.stage1_epochs, r.czsl_accuracy));
    }
    out
}

/// Mean accuracy per grid value, in grid order.
pub fn ablation_summary(rows: &[AblationRow], grid: &[usize]) -> String {
    let mut header = String::from("stage1_epochs");
    let mut line = String::from("czsl_accuracy");
    for &e in grid {
        let accs: Vec<f64> = rows
            .iter()
            .filter(|r| r.stage1_epochs == e)
            .map(|r| r.czsl_accuracy)
            .collect();
        let mean = accs.iter().sum::<f64>() / accs.len().max(1) as f64;
        header.push_str(&format!(" {e:>7}"));
        line.push_str(&format!(" {mean:>7.1}"));
    }
    format!("{header}\n{line}\n")
}

pub fn cmd_ablate(config: &RunConfig, out: &Path, force: bool) -> anyhow::Result<Vec<AblationRow>> {
    prepare_outputs(out, &[ABLATION_CSV, "ablate.toml"], force)?;
    let rows = ablation_rows(config, worker_threads()?)?;
    write_resolved(config, out, "ablate")?;
    fs::write(out.join(ABLATION_CSV), ablation_csv(&rows))?;
    Ok(rows)
}

pub fn cmd_plot(
    config: &RunConfig,
    checkpoint: &Path,
    out: &Path,
    force: bool,
) -> anyhow::Result<PathBuf> {
    config.validate()?;
    let dataset = load_data(config)?;
    let models = ModelSet::load(checkpoint)
        .with_context(|| format!("cannot load checkpoint {}", checkpoint.display()))?;
    if models.d() != dataset.d() || models.k() != dataset.k() {
        bail!(
            "checkpoint is for (d, k) = ({}, {}), dataset has ({}, {})",
            models.d(),
            models.k(),
            dataset.d(),
            dataset.k()
        );
    }
    prepare_outputs(out, &[EMBEDDING_CSV, EMBEDDING_SVG, "plot.toml"], force)?;
    write_resolved(config, out, "plot")?;
    let mut rng = SeededRng::with_stream(config.train.seed, Stream::Synthesis);
    let synthetic = synthesize_unseen(
        &models.generator,
        dataset.attributes(),
        config.plot.n_per_class,
        &mut rng,
    )?;
    let points = pca_2d(&synthetic.features);
    fs::write(out.join(EMBEDDING_CSV), embedding_csv(&points, &synthetic.labels))?;
    let svg_path = out.join(EMBEDDING_SVG);
    fs::write(
        &svg_path,
        embedding_svg(&points, &synthetic.labels, "synthesized unseen features (PCA)"),
    )?;
    Ok(svg_path)
}
