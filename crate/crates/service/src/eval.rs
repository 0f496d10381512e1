//! Batch evaluation: fixed-length reconstruction of every clip in a
//! corpus, then averaged score curves and corpus statistics.

use anyhow::{bail, Context};
use rayon::prelude::*;
use reauthor_core::adapters::sim::{SimVideo, SimulationParams, SyntheticScene};
use reauthor_core::engine::Reconstructor;
use reauthor_core::model::{ClipId, SessionId};
use reauthor_core::similarity::{aggregate_curves, best_so_far, corpus_stats, curves_tsv, ScoreTrace};
use reauthor_core::{AdapterSet, Curves, Env, SessionStatus, Stats, StoppingPolicy};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use tracing::warn;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClipTrace {
    pub clip: String,
    pub status: SessionStatus,
    pub scores: Vec<f64>,
    /// Running maximum of `scores`.
    pub best_so_far: Vec<f64>,
    pub best_index: Option<u32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub iterations: u32,
    pub traces: Vec<ClipTrace>,
    pub curves: Curves,
    pub stats: Stats,
}

/// Corpus files in name order, skipping the manifest.
pub fn corpus_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading corpus directory {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    files.retain(|p| p.is_file() && p.extension().is_none_or(|e| e != "json"));
    files.sort();
    Ok(files)
}

/// Runs `iterations` fixed iterations on each clip. Clips whose run fails
/// are reported in `traces` but left out of the curves and statistics.
pub fn evaluate(
    files: &[PathBuf],
    adapters: &AdapterSet,
    env: &Env,
    iterations: u32,
    frames_per_clip: usize,
) -> anyhow::Result<EvalReport> {
    if files.is_empty() {
        bail!("the corpus is empty");
    }
    let policy = StoppingPolicy::fixed(iterations)?;
    let traces: Vec<ClipTrace> = files
        .par_iter()
        .map(|path| -> anyhow::Result<ClipTrace> {
            let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            let clip = env.store_clip(&bytes).with_context(|| format!("loading {name}"))?;
            let engine = Reconstructor::new(adapters, env).frames_per_clip(frames_per_clip);
            let session = engine.begin(SessionId(format!("eval:{name}")), clip)?;
            let session = engine.drive(session, &policy, None)?;
            if let SessionStatus::Failed { reason } = session.status() {
                warn!(clip = %name, %reason, "excluded from aggregates");
            }
            let best_so_far = session.trace().map(|t| best_so_far(&t)).unwrap_or_default();
            Ok(ClipTrace {
                clip: name,
                status: session.status().clone(),
                scores: session.scores().collect(),
                best_so_far,
                best_index: session.best_index(),
            })
        })
        .collect::<anyhow::Result<_>>()?;

    let complete: Vec<ScoreTrace<f64>> = traces
        .iter()
        .filter(|t| t.scores.len() == iterations as usize && !matches!(t.status, SessionStatus::Failed { .. }))
        .map(|t| ScoreTrace::new(ClipId(t.clip.clone()), t.scores.clone()))
        .collect::<Result<_, _>>()?;
    if complete.is_empty() {
        bail!("no clip completed all {iterations} iterations");
    }
    Ok(EvalReport {
        iterations,
        curves: aggregate_curves(&complete)?,
        stats: corpus_stats(&complete)?,
        traces,
    })
}

/// Writes `curves.tsv`, `stats.json` and `traces.json` into `out`.
pub fn write_report(report: &EvalReport, out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("curves.tsv"), curves_tsv(&report.curves))?;
    fs::write(out.join("stats.json"), serde_json::to_string_pretty(&report.stats)?)?;
    fs::write(out.join("traces.json"), serde_json::to_string_pretty(&report.traces)?)?;
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub file: String,
    /// Prompt that regenerates the clip exactly.
    pub truth_prompt: String,
}

/// Writes `count` synthetic clips with seeded random scenes, plus a
/// `manifest.json` giving the truth prompt of each file.
pub fn synth_corpus(out: &Path, count: usize, seed: u64, params: &SimulationParams) -> anyhow::Result<Vec<CorpusEntry>> {
    use rand::SeedableRng;
    params.validate()?;
    fs::create_dir_all(out)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let scene = SyntheticScene::random(&mut rng);
        let video = SimVideo::new(&scene, seed, params.fps, params.clip_duration, params.width, params.height);
        let file = format!("clip_{i:03}.simv");
        fs::write(out.join(&file), video.encode())?;
        entries.push(CorpusEntry {
            file,
            truth_prompt: scene.prompt_lines(),
        });
    }
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&entries)?)?;
    Ok(entries)
}
