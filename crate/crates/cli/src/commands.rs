use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use rcdetect::dataset::{self, index_dataset, CacheSource, DatasetIndex, SampleDescriptor, Split, SynthConfig};
use rcdetect::evaluation::{self, EvalReport, PlotMode, TableCell};
use rcdetect::model::checkpoint::Stage;
use rcdetect::training::{self, TrainOutcome};
use rcdetect::tubelet::{CropSettings, Label};
use rcdetect::RunConfig;

use crate::args::{DatasetArgs, EvalArgs, PlotArgs, PreprocessArgs, SynthArgs, TrainArgs};

/// A split with no usable samples after preprocessing.
#[derive(Debug)]
pub struct EmptySplit(pub Vec<Split>);

impl std::fmt::Display for EmptySplit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<String> = self.0.iter().map(|s| s.to_string()).collect();
        write!(f, "no cached samples in split(s): {}", names.join(", "))
    }
}

impl std::error::Error for EmptySplit {}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| rcdetect::Error::Io {
                path: p.clone(),
                source: e,
            })?;
            serde_json::from_str::<SynthConfig>(&text)
                .map_err(|e| rcdetect::Error::Config(format!("{}: {e}", p.display())))?
        }
        None => SynthConfig::default(),
    };
    if let Some(v) = a.videos_per_class {
        cfg.n_videos_per_class = v;
    }
    if let Some(v) = a.frames_per_video {
        cfg.frames_per_video = v;
    }
    if let Some(v) = a.image_size {
        cfg.image_size = v;
    }
    if let Some(v) = a.flicker_amplitude {
        cfg.flicker_amplitude = v;
    }
    if let Some(v) = a.drift_rate {
        cfg.drift_rate = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let root = dataset::synth_generate(&cfg, &a.out)?;
    println!(
        "wrote {} videos x {} frames per class to {}",
        cfg.n_videos_per_class,
        cfg.frames_per_video,
        root.display()
    );
    Ok(())
}

/// Config file (or defaults) with the dataset flags applied.
fn resolve_dataset(a: &DatasetArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &a.root {
        cfg.dataset.root = Some(v.clone());
    }
    if let Some(v) = &a.cache_dir {
        cfg.dataset.cache_dir = Some(v.clone());
    }
    if let Some(v) = a.mode {
        cfg.dataset.preprocess = v;
    }
    if let Some(v) = a.window {
        cfg.dataset.sequence_length = v;
    }
    if let Some(v) = a.stride {
        cfg.dataset.stride = v;
    }
    Ok(cfg)
}

fn load_index(cfg: &RunConfig) -> Result<DatasetIndex> {
    let root = cfg.dataset.root()?;
    let index = index_dataset(root, cfg.dataset.sequence_length, cfg.dataset.stride)?;
    for w in &index.warnings {
        log::warn!("{w}");
    }
    let clashes = dataset::split_violations(&index.samples);
    if !clashes.is_empty() {
        return Err(rcdetect::Error::Data(format!("videos in more than one split: {}", clashes.join(", "))).into());
    }
    Ok(index)
}

pub fn preprocess(a: PreprocessArgs) -> Result<()> {
    let cfg = resolve_dataset(&a.dataset)?;
    cfg.validate()?;
    let index = load_index(&cfg)?;
    let cache_dir = cfg.dataset.cache_dir()?;
    let summary = dataset::preprocess(
        cfg.dataset.root()?,
        &index.samples,
        cfg.dataset.preprocess,
        &cache_dir,
        &CropSettings::default(),
    )?;
    println!("cache: {}", cache_dir.display());
    println!("{:<6} {:>6} {:>6}", "split", "real", "fake");
    for split in Split::ALL {
        let n = |l: Label| summary.counts.get(&(split, l)).copied().unwrap_or(0);
        println!("{:<6} {:>6} {:>6}", split.to_string(), n(Label::Real), n(Label::Fake));
    }
    println!(
        "written {}, unchanged {}, failed {}",
        summary.written,
        summary.unchanged,
        summary.failures.len()
    );
    for (id, e) in summary.failures.iter().take(10) {
        eprintln!("  {id}: {e}");
    }
    let empty: Vec<Split> = Split::ALL.into_iter().filter(|&s| summary.count(s) == 0).collect();
    if !empty.is_empty() {
        return Err(EmptySplit(empty).into());
    }
    Ok(())
}

fn resolve_train(a: &TrainArgs, stage: Stage) -> Result<RunConfig> {
    let mut cfg = resolve_dataset(&a.dataset)?;
    let m = &mut cfg.model;
    if let Some(v) = a.backbone {
        m.backbone = v;
        if let Some(d) = v.native_feature_dim(&m.tiny_widths) {
            m.feature_dim = d;
        }
    }
    if let Some(v) = a.variant {
        m.variant = v;
    }
    if let Some(v) = a.frames {
        m.sequence_length = v;
    }
    if let Some(v) = a.hidden_size {
        m.recurrent.hidden_size = v;
    }
    if let Some(v) = a.bidirectional {
        m.recurrent.bidirectional = v;
    }
    let t = &mut cfg.train;
    t.stage = stage;
    if let Some(v) = a.learning_rate {
        t.learning_rate = v;
    }
    if let Some(v) = a.backbone_lr_scale {
        t.backbone_lr_scale = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if let Some(v) = a.early_stop_patience {
        t.early_stop_patience = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_training(a: TrainArgs, stage: Stage) -> Result<()> {
    let cfg = resolve_train(&a, stage)?;
    if stage == Stage::Pretrain && a.pretrained.is_some() {
        return Err(rcdetect::Error::Config("--pretrained applies to `train` only".into()).into());
    }
    let index = load_index(&cfg)?;
    let cache_dir = cfg.dataset.cache_dir()?;
    let source = CacheSource::open(&cache_dir).with_context(|| format!("opening cache {}", cache_dir.display()))?;
    fs::create_dir_all(&a.run_dir).map_err(|e| rcdetect::Error::Io {
        path: a.run_dir.clone(),
        source: e,
    })?;
    cfg.save(&a.run_dir.join("config.json"))?;
    let out: TrainOutcome = match stage {
        Stage::Pretrain => training::pretrain_backbone(&cfg.model, &index.samples, &source, &cfg.train, &a.run_dir)?,
        Stage::EndToEnd => training::train_end_to_end(
            a.pretrained.as_deref(),
            &cfg.model,
            &index.samples,
            &source,
            &cfg.train,
            &a.run_dir,
        )?,
    };
    let val = out
        .best_val_accuracy
        .map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "best epoch {} (val accuracy {val}); checkpoint {}",
        out.best_epoch,
        out.best_checkpoint.display()
    );
    Ok(())
}

pub fn pretrain(a: TrainArgs) -> Result<()> {
    run_training(a, Stage::Pretrain)
}

pub fn train(a: TrainArgs) -> Result<()> {
    run_training(a, Stage::EndToEnd)
}

fn manipulation_filter(samples: Vec<SampleDescriptor>, name: &str) -> Result<Vec<SampleDescriptor>> {
    let wanted = name.to_ascii_lowercase();
    let kept: Vec<SampleDescriptor> = samples
        .into_iter()
        .filter(|d| d.label == Label::Real || d.manipulation.to_string().to_ascii_lowercase() == wanted)
        .collect();
    if !kept.iter().any(|d| d.label == Label::Fake) {
        return Err(rcdetect::Error::Config(format!("no fake samples with manipulation {name:?}")).into());
    }
    Ok(kept)
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let mut cfg = resolve_dataset(&a.dataset)?;
    if let Some(v) = a.split {
        cfg.eval.split = v;
    }
    if let Some(v) = a.threshold {
        cfg.eval.threshold = v;
    }
    cfg.validate()?;
    let index = load_index(&cfg)?;
    let samples = match &a.manipulation {
        Some(m) => manipulation_filter(index.samples, m)?,
        None => index.samples,
    };
    let cache_dir = cfg.dataset.cache_dir()?;
    let source = CacheSource::open(&cache_dir).with_context(|| format!("opening cache {}", cache_dir.display()))?;
    let result = training::evaluate_checkpoint(
        &a.checkpoint,
        &samples,
        cfg.eval.split,
        &source,
        cfg.train.normalization,
        cfg.eval.batch_size,
    )?;
    let mut scores = result.scores;
    let alignment = cfg.dataset.preprocess;
    scores.meta.description = format!("{} {alignment}", scores.meta.description);
    scores.meta.variant = scores.meta.variant.map(|v| format!("{v} {alignment}"));
    if a.video_level {
        scores = scores.video_level()?;
    }
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| rcdetect::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    evaluation::write_scores(&a.out, &scores)?;
    let report = EvalReport::from_scores(&scores, cfg.eval.threshold)?;
    println!(
        "{} samples: accuracy {:.4}, AUC {:.4}, AP {:.4}",
        report.samples, report.accuracy, report.auc, report.average_precision
    );
    Ok(())
}

pub fn plot(a: PlotArgs) -> Result<()> {
    let mut reports = Vec::new();
    for path in &a.scores {
        let scores = evaluation::read_scores(path).with_context(|| format!("reading {}", path.display()))?;
        reports.push(EvalReport::from_scores(&scores, a.threshold)?);
    }
    let mut written = Vec::new();
    for mode in PlotMode::ALL {
        written.extend(evaluation::emit_plots(&reports, &a.out, mode)?);
    }
    let cells: Vec<(TableCell, f64)> = reports
        .iter()
        .map(|r| {
            let variant = r.meta.variant.clone().unwrap_or_else(|| r.meta.description.clone());
            (
                TableCell::new(r.meta.manipulation.clone(), r.meta.frames.unwrap_or(0), variant),
                r.accuracy,
            )
        })
        .collect();
    let table = evaluation::report_table(&cells);
    let table_path = a.out.join("table.md");
    fs::write(&table_path, &table).map_err(|e| rcdetect::Error::Io {
        path: table_path.clone(),
        source: e,
    })?;
    print!("{table}");
    let mut listing: BTreeMap<String, ()> = BTreeMap::new();
    for p in written.iter().chain(std::iter::once(&table_path)) {
        listing.insert(display(p), ());
    }
    for p in listing.keys() {
        println!("wrote {p}");
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
