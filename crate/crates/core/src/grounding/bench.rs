//! Multiple-choice benchmark over a directory of recorded sequences.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{answer_multiple_choice, ground_query, Grounder, GroundingConfig, GroundingError};
use crate::builder::{build, BuilderConfig};
use crate::perception::{read_sequence, PerceptionError, Vlm};
use crate::render::RenderConfig;
use crate::scene::{AtomMap, Instruction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceSpec {
    pub id: String,
    pub px: [f64; 2],
}

/// Annotated cue behind a query, used to score sign parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthCue {
    pub location: String,
    pub instruction: Instruction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryFile {
    pub query: String,
    pub frame_t: f64,
    pub choices: Vec<ChoiceSpec>,
    pub truth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cue: Option<TruthCue>,
}

impl QueryFile {
    pub fn validate(&self) -> Result<(), String> {
        if self.choices.len() < 2 {
            return Err("multiple-choice query needs at least two choices".into());
        }
        let mut ids: Vec<&str> = self.choices.iter().map(|c| c.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.choices.len() {
            return Err("choice ids are not distinct".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub grounder: Grounder,
    pub builder: BuilderConfig,
    pub render: RenderConfig,
    pub grounding: GroundingConfig,
    /// Worker threads; 0 means one per logical core.
    pub jobs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            grounder: Grounder::Geometric,
            builder: BuilderConfig::default(),
            render: RenderConfig::default(),
            grounding: GroundingConfig::default(),
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub file: String,
    pub query: String,
    pub truth: String,
    pub answer: Option<String>,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub name: String,
    pub correct: usize,
    pub total: usize,
    pub parse_correct: usize,
    pub parse_total: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub queries: Vec<QueryOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub grounder: Grounder,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    pub parse_correct: usize,
    pub parse_total: usize,
    pub sequences: Vec<SequenceReport>,
}

impl BenchReport {
    pub fn to_json(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("report serializes");
        v.push(b'\n');
        v
    }

    /// Plain-text table: one row per sequence and a total row.
    pub fn table(&self) -> String {
        let width = self.sequences.iter().map(|s| s.name.len()).max().unwrap_or(0).max(8);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>9}  {:>9}  {:>7}", "sequence", "grounding", "parsing", "rate");
        let rate = |c: usize, t: usize| if t == 0 { 0.0 } else { c as f64 / t as f64 };
        for s in &self.sequences {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9}  {:>9}  {:>7.3}",
                s.name,
                format!("{}/{}", s.correct, s.total),
                format!("{}/{}", s.parse_correct, s.parse_total),
                rate(s.correct, s.total)
            );
        }
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}  {:>7.3}",
            "total",
            format!("{}/{}", self.correct, self.total),
            format!("{}/{}", self.parse_correct, self.parse_total),
            self.accuracy
        );
        out
    }
}

/// Builds the VLM used for one sequence directory.
pub type VlmFactory<'a> = dyn Fn(&Path) -> Result<Box<dyn Vlm>, PerceptionError> + Sync + 'a;

fn sequence_dirs(dataset: &Path) -> Result<Vec<PathBuf>, PerceptionError> {
    let rd = std::fs::read_dir(dataset).map_err(|e| PerceptionError::NotASequence(format!("{}: {e}", dataset.display())))?;
    let mut dirs: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(crate::perception::MANIFEST).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(PerceptionError::NotASequence(format!("{}: no sequences", dataset.display())));
    }
    Ok(dirs)
}

fn query_files(seq: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(seq.join("queries"))
        .map(|rd| {
            rd.filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect()
        })
        .unwrap_or_default();
    files.sort();
    files
}

fn parse_ok(map: &AtomMap, cue: &TruthCue) -> bool {
    map.signs
        .iter()
        .any(|s| s.merged_cues.instruction_for(&cue.location) == Some(cue.instruction))
}

fn run_query(
    map: &AtomMap,
    seq: &crate::perception::Sequence,
    file: &Path,
    vlm: &dyn Vlm,
    cfg: &BenchConfig,
) -> QueryOutcome {
    let name = file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut out = QueryOutcome {
        file: name,
        query: String::new(),
        truth: String::new(),
        answer: None,
        correct: false,
        parse_correct: None,
        reason: None,
    };
    let q: QueryFile = match std::fs::read(file)
        .map_err(|e| e.to_string())
        .and_then(|b| serde_json::from_slice(&b).map_err(|e| e.to_string()))
        .and_then(|q: QueryFile| q.validate().map(|_| q))
    {
        Ok(q) => q,
        Err(e) => {
            out.reason = Some(format!("query file: {e}"));
            return out;
        }
    };
    out.query = q.query.clone();
    out.truth = q.truth.clone();
    out.parse_correct = q.cue.as_ref().map(|c| parse_ok(map, c));
    let answer = (|| -> Result<String, GroundingError> {
        let (res, _) = ground_query(map, &q.query, cfg.grounder, Some(vlm), &cfg.render, &cfg.grounding)?;
        let goal = res.subgoal_3d.ok_or(GroundingError::NotDirectional)?;
        let idx = seq.index_of(q.frame_t).ok_or(GroundingError::FrameMissing(q.frame_t))?;
        let frame = seq.load(idx)?;
        answer_multiple_choice(&q.choices, &goal, &frame)
    })();
    match answer {
        Ok(a) => {
            out.correct = a == q.truth;
            out.answer = Some(a);
        }
        Err(e) => out.reason = Some(e.to_string()),
    }
    out
}

fn run_sequence(dir: &Path, factory: &VlmFactory<'_>, cfg: &BenchConfig) -> SequenceReport {
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let files = query_files(dir);
    let failed = |error: String| SequenceReport {
        name: name.clone(),
        correct: 0,
        total: files.len(),
        parse_correct: 0,
        parse_total: 0,
        error: Some(error),
        queries: vec![],
    };
    let vlm = match factory(dir) {
        Ok(v) => v,
        Err(e) => return failed(e.to_string()),
    };
    let seq = match read_sequence(dir) {
        Ok(s) => s,
        Err(e) => return failed(e.to_string()),
    };
    let map = match build(seq.frames(), &cfg.builder, vlm.as_ref()) {
        Ok(m) => m,
        Err(e) => return failed(e.to_string()),
    };
    let queries: Vec<QueryOutcome> = files
        .par_iter()
        .map(|f| run_query(&map, &seq, f, vlm.as_ref(), cfg))
        .collect();
    SequenceReport {
        name,
        correct: queries.iter().filter(|q| q.correct).count(),
        total: queries.len(),
        parse_correct: queries.iter().filter(|q| q.parse_correct == Some(true)).count(),
        parse_total: queries.iter().filter(|q| q.parse_correct.is_some()).count(),
        error: None,
        queries,
    }
}

/// Score every sequence under `dataset`. Per-sequence and per-query failures
/// are counted as incorrect; only an unreadable dataset directory is an error.
pub fn run_benchmark(dataset: &Path, cfg: &BenchConfig, factory: &VlmFactory<'_>) -> Result<BenchReport, PerceptionError> {
    let dirs = sequence_dirs(dataset)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| PerceptionError::Io(e.to_string()))?;
    let sequences: Vec<SequenceReport> = pool.install(|| dirs.par_iter().map(|d| run_sequence(d, factory, cfg)).collect());
    let correct = sequences.iter().map(|s| s.correct).sum();
    let total = sequences.iter().map(|s| s.total).sum();
    Ok(BenchReport {
        grounder: cfg.grounder,
        correct,
        total,
        accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        parse_correct: sequences.iter().map(|s| s.parse_correct).sum(),
        parse_total: sequences.iter().map(|s| s.parse_total).sum(),
        sequences,
    })
}
