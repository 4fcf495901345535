//! Accuracy, ROC/AUC and PR/AP from per-sample scores, plus the plot and
//! table artifacts built from them.

pub mod plot;
pub mod table;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use plot::{emit_plots, PlotMode, LINLOG_MIN_FPR};
pub use table::{format_percent, report_table, TableCell};

/// One scored sample. Serialised as a score-file line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreEntry {
    pub sample_id: String,
    pub score: f64,
    pub label: u8,
}

/// Legend fields describing where a score set came from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreMeta {
    pub manipulation: String,
    /// Backbone, frames, alignment and directionality.
    pub description: String,
    /// Frames per sample, for the table row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<usize>,
    /// Table column; defaults to the description.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreSet {
    entries: Vec<ScoreEntry>,
    pub meta: ScoreMeta,
}

impl ScoreSet {
    /// Checks non-emptiness, finite scores in `[0, 1]` and 0/1 labels.
    pub fn new(entries: Vec<ScoreEntry>, meta: ScoreMeta) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidInput("score set is empty".into()));
        }
        if let Some(e) = entries.iter().find(|e| !(0.0..=1.0).contains(&e.score)) {
            return Err(Error::InvalidInput(format!(
                "sample {}: score {} outside [0, 1]",
                e.sample_id, e.score
            )));
        }
        if let Some(e) = entries.iter().find(|e| e.label > 1) {
            return Err(Error::InvalidInput(format!(
                "sample {}: label {} is not 0 or 1",
                e.sample_id, e.label
            )));
        }
        Ok(Self { entries, meta })
    }

    pub fn entries(&self) -> &[ScoreEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn class_counts(&self) -> (usize, usize) {
        let pos = self.entries.iter().filter(|e| e.label == 1).count();
        (pos, self.entries.len() - pos)
    }

    /// Entries sorted by descending score, grouped by equal score, as
    /// `(positives, negatives)` per group.
    fn threshold_groups(&self) -> Vec<(usize, usize)> {
        let mut sorted: Vec<&ScoreEntry> = self.entries.iter().collect();
        sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
        let mut groups: Vec<(usize, usize)> = Vec::new();
        let mut last = None;
        for e in sorted {
            if last != Some(e.score) {
                groups.push((0, 0));
                last = Some(e.score);
            }
            let g = groups.last_mut().expect("pushed above");
            if e.label == 1 {
                g.0 += 1;
            } else {
                g.1 += 1;
            }
        }
        groups
    }

    /// Mean score per video. Sample ids are `<video_id>_<start>`; the
    /// label of a video is that of its windows.
    pub fn video_level(&self) -> Result<ScoreSet> {
        let mut acc: BTreeMap<String, (f64, usize, u8)> = BTreeMap::new();
        for e in &self.entries {
            let video = e.sample_id.rsplit_once('_').map_or(e.sample_id.as_str(), |(v, _)| v);
            let slot = acc.entry(video.to_string()).or_insert((0.0, 0, e.label));
            if slot.2 != e.label {
                return Err(Error::InvalidInput(format!(
                    "video {video} has windows with both labels"
                )));
            }
            slot.0 += e.score;
            slot.1 += 1;
        }
        let entries = acc
            .into_iter()
            .map(|(video, (sum, n, label))| ScoreEntry {
                sample_id: video,
                score: sum / n as f64,
                label,
            })
            .collect();
        ScoreSet::new(entries, self.meta.clone())
    }
}

/// Fraction of entries with `(score >= threshold) == label`.
pub fn accuracy(s: &ScoreSet, threshold: f64) -> f64 {
    let correct = s
        .entries
        .iter()
        .filter(|e| (e.score >= threshold) == (e.label == 1))
        .count();
    correct as f64 / s.len() as f64
}

/// ROC as `[fpr, tpr]` points from (0, 0) to (1, 1), one step per
/// distinct score, and its trapezoidal area.
pub fn roc_auc(s: &ScoreSet) -> Result<(Vec<[f64; 2]>, f64)> {
    let (p, n) = s.class_counts();
    if p == 0 || n == 0 {
        return Err(Error::UndefinedMetric("ROC needs both classes".into()));
    }
    let mut points = vec![[0.0, 0.0]];
    let (mut tp, mut fp) = (0usize, 0usize);
    // Twice the area in units of one positive × one negative, kept as an
    // integer so the trapezoid sum is exact.
    let mut area2: u128 = 0;
    for (gp, gn) in s.threshold_groups() {
        area2 += (gn as u128) * (2 * tp as u128 + gp as u128);
        tp += gp;
        fp += gn;
        points.push([fp as f64 / n as f64, tp as f64 / p as f64]);
    }
    let auc = area2 as f64 / (2.0 * p as f64 * n as f64);
    Ok((points, auc))
}

/// PR as `[recall, precision]` points, starting at (0, 1), one per
/// distinct score, and the step-wise average precision
/// `Σ (R_i − R_{i−1}) · P_i`.
pub fn pr_ap(s: &ScoreSet) -> Result<(Vec<[f64; 2]>, f64)> {
    let (p, _) = s.class_counts();
    if p == 0 {
        return Err(Error::UndefinedMetric(
            "precision-recall needs a positive sample".into(),
        ));
    }
    let mut points = vec![[0.0, 1.0]];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (gp, gn) in s.threshold_groups() {
        tp += gp;
        fp += gn;
        let recall = tp as f64 / p as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push([recall, precision]);
    }
    Ok((points, ap))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub accuracy: f64,
    pub auc: f64,
    pub average_precision: f64,
    /// `[fpr, tpr]`.
    pub roc_points: Vec<[f64; 2]>,
    /// `[recall, precision]`.
    pub pr_points: Vec<[f64; 2]>,
    pub threshold: f64,
    pub samples: usize,
    pub meta: ScoreMeta,
}

impl EvalReport {
    pub fn from_scores(s: &ScoreSet, threshold: f64) -> Result<Self> {
        let (roc_points, auc) = roc_auc(s)?;
        let (pr_points, average_precision) = pr_ap(s)?;
        Ok(Self {
            accuracy: accuracy(s, threshold),
            auc,
            average_precision,
            roc_points,
            pr_points,
            threshold,
            samples: s.len(),
            meta: s.meta.clone(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json("eval report", e))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }
}

/// Path of the metadata sidecar written next to a score file.
pub fn meta_path(scores: &Path) -> std::path::PathBuf {
    let mut name = scores.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    scores.with_file_name(name)
}

/// Writes JSON lines `{"sample_id", "score", "label"}` plus a metadata
/// sidecar.
pub fn write_scores(path: &Path, s: &ScoreSet) -> Result<()> {
    let mut file = std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for e in &s.entries {
        let line = serde_json::to_string(e).map_err(|e| Error::json("score entry", e))?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    file.flush().map_err(|e| Error::io(path, e))?;
    let meta = meta_path(path);
    let text = serde_json::to_string_pretty(&s.meta).map_err(|e| Error::json("score metadata", e))?;
    fs::write(&meta, text).map_err(|e| Error::io(&meta, e))
}

/// Reads a score file. Without a sidecar the description defaults to
/// the file stem and the manipulation to `All`.
pub fn read_scores(path: &Path) -> Result<ScoreSet> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(serde_json::from_str(&line).map_err(|e| Error::json(format!("{}:{}", path.display(), i + 1), e))?);
    }
    let meta_file = meta_path(path);
    let meta = if meta_file.is_file() {
        let text = fs::read_to_string(&meta_file).map_err(|e| Error::io(&meta_file, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(meta_file.display().to_string(), e))?
    } else {
        ScoreMeta {
            manipulation: "All".into(),
            description: path.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
            frames: None,
            variant: None,
        }
    };
    ScoreSet::new(entries, meta)
}
