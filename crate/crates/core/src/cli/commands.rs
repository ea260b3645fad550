use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use rayon::prelude::*;
use serde_json::json;

use super::manifest::{unix_now, RunManifest};
use super::{
    Cli, Command, EvalArgs, ExtractArgs, ModelArgs, ReplayArgs, SplitArg, SweepArgs, SynthArgs,
    TrainArgs, WavesArgs,
};
use crate::audio::{
    parse_protocol, read_wav, resample, synth_dataset, write_wav, ClipSource, Dataset,
    SampleEncoding, Split,
};
use crate::error::{Error, Result};
use crate::features::{
    extract_required, read_cache, write_cache, FeatureConfig, FeatureExtractor, FeatureKind,
    FeatureRecord,
};
use crate::metrics::{report, EvalReport, ScoreSet};
use crate::models::{
    load_checkpoint, save_checkpoint, train as train_model, Arch, Model, ModelConfig, TrainConfig,
    HISTORY_HEADER,
};
use crate::qv::{basis_waves, magnitude_square, render_waves};
use crate::tensor::{Tensor, Var};

pub const SUMMARY_HEADER: &str = "features,classifier,batch,epochs,accuracy,eer,status";

fn claim(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Config(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

fn distinct(input: &Path, output: &Path) -> Result<()> {
    if input == output {
        return Err(Error::Config(format!(
            "output {} would overwrite an input",
            output.display()
        )));
    }
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

fn with_extension(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn config_json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("arguments serialize")
}

pub fn synth(a: &SynthArgs, argv: &[String]) -> Result<()> {
    let started = unix_now();
    let protos = [
        a.out.join("protocol_train.txt"),
        a.out.join("protocol_eval.txt"),
    ];
    for p in &protos {
        claim(p, a.force)?;
    }
    let ds = synth_dataset(a.n_per_class, a.seed)?;
    ensure_dir(&a.out)?;
    let ClipSource::InMemory(clips) = &ds.clips else {
        unreachable!("synthetic clips live in memory")
    };
    for (id, clip) in clips {
        write_wav(
            a.out.join(format!("{id}.wav")),
            clip,
            SampleEncoding::Float32,
        )?;
    }
    for (split, path) in [Split::Train, Split::Eval].into_iter().zip(&protos) {
        let text: String = ds.split(split).map(|e| e.to_line() + "\n").collect();
        write_text(path, &text)?;
    }
    let mut m = RunManifest::new("synth", argv, config_json(a), started);
    m.seeds.insert("synth".into(), a.seed);
    m.outputs = protos.to_vec();
    m.outputs.push(a.out.clone());
    m.finish(&a.out)?;
    println!("wrote {} clips to {}", clips.len(), a.out.display());
    Ok(())
}

pub fn extract(a: &ExtractArgs, argv: &[String]) -> Result<()> {
    let started = unix_now();
    distinct(&a.protocol, &a.out)?;
    claim(&a.out, a.force)?;
    let split = match a.split {
        SplitArg::Train => Split::Train,
        SplitArg::Eval => Split::Eval,
    };
    let entries = parse_protocol(&a.protocol, split)?;
    let ds = Dataset::from_directory(entries, &a.input);
    let refs: Vec<_> = ds.entries.iter().collect();
    let cfg = FeatureConfig::default();
    let kind: FeatureKind = a.features.into();
    let ex = extract_required(&ds, &refs, kind, &cfg)?;
    write_cache(&a.out, &ex.records)?;
    write_text(&with_suffix(&a.out, ".ids.txt"), &lines(&ex.ids))?;
    let missing_path = with_suffix(&a.out, ".missing.txt");
    write_text(&missing_path, &lines(&ex.missing))?;
    if !ex.missing.is_empty() {
        eprintln!(
            "{} protocol entries had no audio; listed in {}",
            ex.missing.len(),
            missing_path.display()
        );
    }
    let mut m = RunManifest::new(
        "extract",
        argv,
        json!({ "args": config_json(a), "features": kind.table_name(), "feature_config": cfg }),
        started,
    );
    m.inputs = vec![a.input.clone(), a.protocol.clone()];
    m.outputs = vec![a.out.clone(), with_suffix(&a.out, ".ids.txt"), missing_path];
    m.finish(&a.out)?;
    println!(
        "extracted {} records to {}",
        ex.records.len(),
        a.out.display()
    );
    Ok(())
}

fn lines(items: &[String]) -> String {
    items.iter().map(|s| format!("{s}\n")).collect()
}

fn model_config(arch: Arch, m: &ModelArgs, seed: u64) -> ModelConfig {
    let mut cfg = ModelConfig::new(arch).with_seed(seed);
    if let Some(qv) = cfg.qv.as_mut() {
        qv.depth = m.qv_depth;
        qv.filters = m.qv_filters;
    }
    cfg.token_mode = m.token_mode.into();
    cfg.vit_layers = m.vit_layers;
    cfg.vit_embed_dim = m.vit_embed_dim;
    cfg.vit_mlp_dim = m.vit_mlp_dim;
    cfg
}

fn load_records(path: &Path) -> Result<Vec<FeatureRecord>> {
    let records = read_cache(path)?;
    if records.is_empty() {
        return Err(Error::Data(format!("{} holds no records", path.display())));
    }
    Ok(records)
}

/// Trains one model and writes its checkpoint and history next to `out`.
fn train_to(
    records: &[FeatureRecord],
    mcfg: ModelConfig,
    tcfg: &TrainConfig,
    out: &Path,
    echo: bool,
) -> Result<Model> {
    let model = Model::build(mcfg)?;
    let history_path = with_suffix(out, ".history.csv");
    let file = fs::File::create(&history_path).map_err(|e| Error::io(&history_path, e))?;
    let mut history = std::io::BufWriter::new(file);
    writeln!(history, "{HISTORY_HEADER}").map_err(|e| Error::io(&history_path, e))?;
    let mut write_err = None;
    train_model(&model, records, tcfg, |r| {
        if echo {
            println!(
                "epoch {:>3}  loss {:.5}  acc {:.4}  {:.1}s",
                r.epoch, r.loss, r.acc, r.seconds
            );
        }
        if write_err.is_none() {
            write_err = writeln!(history, "{}", r.csv_line())
                .and_then(|_| history.flush())
                .err();
        }
    })?;
    if let Some(e) = write_err {
        return Err(Error::io(&history_path, e));
    }
    save_checkpoint(&model, out)?;
    Ok(model)
}

pub fn train(a: &TrainArgs, argv: &[String]) -> Result<()> {
    let started = unix_now();
    distinct(&a.cache, &a.out)?;
    claim(&a.out, a.force)?;
    let tcfg = TrainConfig {
        batch_size: a.batch,
        epochs: a.epochs,
        lr: a.lr,
        seed: a.seed,
        class_weighting: a.class_weighting,
    };
    tcfg.validate()?;
    let mcfg = model_config(a.arch, &a.model, a.seed);
    mcfg.validate()?;
    let records = load_records(&a.cache)?;
    let model = train_to(&records, mcfg.clone(), &tcfg, &a.out, true)?;
    let mut m = RunManifest::new(
        "train",
        argv,
        json!({ "args": config_json(a), "model": mcfg, "train": tcfg }),
        started,
    );
    m.seeds.insert("init".into(), a.seed);
    m.seeds.insert("shuffle".into(), a.seed);
    m.inputs = vec![a.cache.clone()];
    m.outputs = vec![a.out.clone(), with_suffix(&a.out, ".history.csv")];
    m.finish(&a.out)?;
    println!(
        "saved {} ({} parameters)",
        a.out.display(),
        model.num_parameters()
    );
    Ok(())
}

fn read_ids(cache: &Path, n: usize) -> Vec<String> {
    let ids: Vec<String> = fs::read_to_string(with_suffix(cache, ".ids.txt"))
        .map(|t| t.lines().map(str::to_string).collect())
        .unwrap_or_default();
    if ids.len() == n {
        ids
    } else {
        (0..n).map(|i| format!("#{i}")).collect()
    }
}

fn score_records(
    model: &Model,
    records: &[FeatureRecord],
    ids: Vec<String>,
) -> Result<(ScoreSet, EvalReport)> {
    let images: Vec<_> = records.iter().map(|r| &r.image).collect();
    let scores = model.score(&images)?;
    let set = ScoreSet::new(scores, records.iter().map(|r| r.label).collect(), ids)?;
    let rep = report(&set)?;
    Ok((set, rep))
}

pub fn eval(a: &EvalArgs, argv: &[String]) -> Result<()> {
    let started = unix_now();
    distinct(&a.cache, &a.out)?;
    distinct(&a.ckpt, &a.out)?;
    let confusion_path = with_extension(&a.out, "confusion.csv");
    let scores_path = with_extension(&a.out, "scores.csv");
    for p in [&a.out, &confusion_path, &scores_path] {
        claim(p, a.force)?;
    }
    let model = load_checkpoint(&a.ckpt)?;
    let records = load_records(&a.cache)?;
    let ids = read_ids(&a.cache, records.len());
    let (set, rep) = score_records(&model, &records, ids)?;
    rep.write_json(&a.out)?;
    rep.write_confusion_csv(&confusion_path)?;
    let mut csv = String::from("id,label,score\n");
    for i in 0..set.len() {
        csv.push_str(&format!(
            "{},{},{}\n",
            set.ids[i], set.labels[i], set.scores[i]
        ));
    }
    write_text(&scores_path, &csv)?;
    let mut m = RunManifest::new(
        "eval",
        argv,
        json!({ "args": config_json(a), "model": model.config() }),
        started,
    );
    m.inputs = vec![a.cache.clone(), a.ckpt.clone()];
    m.outputs = vec![a.out.clone(), confusion_path, scores_path];
    m.finish(&a.out)?;
    println!(
        "accuracy {:.4}  eer {:.4}  threshold {:.6}",
        rep.accuracy_argmax, rep.eer, rep.eer_threshold
    );
    Ok(())
}

pub fn waves(a: &WavesArgs, argv: &[String]) -> Result<()> {
    let started = unix_now();
    if a.out.exists() && !a.force {
        let occupied = fs::read_dir(&a.out)
            .map(|mut d| d.next().is_some())
            .unwrap_or(true);
        if occupied {
            return Err(Error::Config(format!(
                "{} already exists and is not empty; pass --force to overwrite",
                a.out.display()
            )));
        }
    }
    let cfg = FeatureConfig::default();
    let mut clip = read_wav(&a.input)?;
    if clip.sample_rate != cfg.sample_rate {
        clip = resample(&clip, cfg.sample_rate)?;
    }
    let image = FeatureExtractor::new(cfg.clone())?.extract(&clip, a.features.into())?;
    let (h, w, c) = image.shape();
    let x = Var::constant(Tensor::<f64>::from_vec(&[1, c, h, w], image.to_chw())?);
    let mut stack = basis_waves(&x)?;
    if a.squared {
        stack = magnitude_square(&stack)?;
    }
    ensure_dir(&a.out)?;
    let files = render_waves(&stack, &a.out)?;
    let mut m = RunManifest::new(
        "waves",
        argv,
        json!({ "args": config_json(a), "feature_config": cfg }),
        started,
    );
    m.inputs = vec![a.input.clone()];
    m.outputs = files.clone();
    m.finish(&a.out)?;
    println!("wrote {} wave maps to {}", files.len(), a.out.display());
    Ok(())
}

/// Number of sweep cells trained at once, from `QV_THREADS` (default 1).
fn sweep_parallelism() -> Result<usize> {
    match std::env::var("QV_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| {
                Error::Config(format!("QV_THREADS must be a positive integer, got {v:?}"))
            }),
    }
}

fn cache_feature_name(cache: &Path) -> String {
    RunManifest::read(&RunManifest::path_for(cache))
        .ok()
        .and_then(|m| {
            m.config
                .get("features")
                .and_then(|f| f.as_str())
                .map(str::to_string)
        })
        .unwrap_or_else(|| "unknown".into())
}

struct Cell {
    arch: Arch,
    batch: usize,
}

struct CellResult {
    accuracy: f64,
    eer: f64,
}

pub fn sweep(a: &SweepArgs, argv: &[String]) -> Result<()> {
    let started = unix_now();
    let summary_path = a.out.join("summary.csv");
    claim(&summary_path, a.force)?;
    let threads = sweep_parallelism()?;
    if a.archs.is_empty() || a.batches.is_empty() {
        return Err(Error::Config(
            "sweep needs at least one arch and one batch size".into(),
        ));
    }
    let features = match a.features {
        Some(f) => FeatureKind::from(f).table_name().to_string(),
        None => cache_feature_name(&a.cache),
    };
    let train_records = load_records(&a.cache)?;
    let eval_path = a.eval_cache.clone().unwrap_or_else(|| a.cache.clone());
    let eval_records = load_records(&eval_path)?;
    let eval_ids = read_ids(&eval_path, eval_records.len());
    ensure_dir(&a.out)?;
    let cells: Vec<Cell> = a
        .archs
        .iter()
        .flat_map(|&arch| a.batches.iter().map(move |&batch| Cell { arch, batch }))
        .collect();
    let run_cell = |cell: &Cell| -> Result<CellResult> {
        let tcfg = TrainConfig {
            batch_size: cell.batch,
            epochs: a.epochs,
            lr: a.lr,
            seed: a.seed,
            class_weighting: false,
        };
        tcfg.validate()?;
        let mcfg = model_config(cell.arch, &a.model, a.seed);
        mcfg.validate()?;
        let stem = a.out.join(format!("{}_b{}", cell.arch, cell.batch));
        let ckpt = with_extension(&stem, "qvck");
        let model = train_to(&train_records, mcfg, &tcfg, &ckpt, false)?;
        let (_, rep) = score_records(&model, &eval_records, eval_ids.clone())?;
        rep.write_json(&with_extension(&stem, "report.json"))?;
        Ok(CellResult {
            accuracy: rep.accuracy_argmax,
            eer: rep.eer,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let t0 = Instant::now();
    let results: Vec<Result<CellResult>> =
        pool.install(|| cells.par_iter().map(run_cell).collect());
    let mut csv = format!("{SUMMARY_HEADER}\n");
    let mut failures = 0;
    for (cell, r) in cells.iter().zip(&results) {
        let row = match r {
            Ok(c) => format!(
                "{features},{},{},{},{:.2},{:.2},ok",
                cell.arch.table_name(),
                cell.batch,
                a.epochs,
                100.0 * c.accuracy,
                100.0 * c.eer
            ),
            Err(e) => {
                failures += 1;
                eprintln!("cell {} batch {} failed: {e}", cell.arch, cell.batch);
                let msg = e.to_string().replace([',', '\n', '"'], " ");
                format!(
                    "{features},{},{},{},,,failed: {msg}",
                    cell.arch.table_name(),
                    cell.batch,
                    a.epochs
                )
            }
        };
        println!("{row}");
        csv.push_str(&row);
        csv.push('\n');
    }
    write_text(&summary_path, &csv)?;
    let mut m = RunManifest::new(
        "sweep",
        argv,
        json!({ "args": config_json(a), "threads": threads }),
        started,
    );
    m.seeds.insert("init".into(), a.seed);
    m.seeds.insert("shuffle".into(), a.seed);
    m.inputs = vec![a.cache.clone()];
    if let Some(e) = &a.eval_cache {
        m.inputs.push(e.clone());
    }
    m.outputs = vec![summary_path.clone()];
    m.finish(&summary_path)?;
    eprintln!(
        "{} cells ({failures} failed) in {:.1}s",
        cells.len(),
        t0.elapsed().as_secs_f64()
    );
    Ok(())
}

pub fn replay(a: &ReplayArgs) -> Result<()> {
    let m = RunManifest::read(&a.manifest)?;
    let argv = std::iter::once("qv".to_string()).chain(m.args.iter().cloned());
    let mut cli = Cli::try_parse_from(argv).map_err(|e| Error::Config(e.to_string()))?;
    match &mut cli.command {
        Command::Synth(c) => c.force |= a.force,
        Command::Extract(c) => c.force |= a.force,
        Command::Train(c) => c.force |= a.force,
        Command::Eval(c) => c.force |= a.force,
        Command::Waves(c) => c.force |= a.force,
        Command::Sweep(c) => c.force |= a.force,
        Command::Replay(_) => return Err(Error::Config("refusing to replay a replay".into())),
    }
    super::run(cli, &m.args)
}
