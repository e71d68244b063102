//! Dataset manifests and the loading of their material into memory.

use std::fs;
use std::path::{Path, PathBuf};

use espressivo_dsp::{additive_synth, log_mel, AudioClip, MelSpectrogram, SpectrogramParams};
use espressivo_score::{parse_aligned_json, parse_notes_json, AlignedScore, Score};
use serde::{Deserialize, Serialize};

use crate::clips::slice_clips;
use crate::TrainError;

/// One piece of training material: a score, where its recording comes from,
/// and who performed it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path to the notes JSON.
    pub score: PathBuf,
    /// Path to a WAV recording. Unset means the recording is synthesized
    /// from the aligned score on load (the oracle-synthesis mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recording: Option<PathBuf>,
    /// Path to the aligned-score JSON. Unset means the file sits next to
    /// the score as `<name>.aligned.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aligned: Option<PathBuf>,
    pub performer_id: u32,
}

impl ManifestEntry {
    /// Where this entry's aligned score lives: the explicit path, or the
    /// sibling convention `<name>.aligned.json`.
    pub fn aligned_path(&self) -> PathBuf {
        if let Some(path) = &self.aligned {
            return path.clone();
        }
        let name = self.score.file_name().unwrap_or_default().to_string_lossy();
        let stem = name
            .strip_suffix(".notes.json")
            .or_else(|| name.strip_suffix(".json"))
            .unwrap_or(&name);
        self.score.with_file_name(format!("{stem}.aligned.json"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Reads a manifest, resolving relative entry paths against the
    /// manifest's own directory.
    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = read_file(path)?;
        let mut manifest: DatasetManifest = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        for entry in &mut manifest.entries {
            resolve(&mut entry.score);
            if let Some(rec) = &mut entry.recording {
                resolve(rec);
            }
            if let Some(al) = &mut entry.aligned {
                resolve(al);
            }
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<String, TrainError> {
    fs::read_to_string(path).map_err(|source| TrainError::Read { path: path.into(), source })
}

pub fn load_score(entry: &ManifestEntry) -> Result<Score, TrainError> {
    Ok(parse_notes_json(&read_file(&entry.score)?)?)
}

pub fn load_aligned(entry: &ManifestEntry) -> Result<AlignedScore, TrainError> {
    let path = entry.aligned_path();
    if !path.exists() {
        return Err(TrainError::MissingAligned { score: entry.score.clone(), expected: path });
    }
    Ok(parse_aligned_json(&read_file(&path)?)?)
}

/// The entry's recording: the referenced WAV, or an oracle synthesis of the
/// aligned score when no recording is given.
pub fn load_audio(entry: &ManifestEntry, aligned: &AlignedScore) -> Result<AudioClip, TrainError> {
    match &entry.recording {
        Some(path) => Ok(espressivo_dsp::read_wav(path)?),
        None => Ok(additive_synth(aligned)),
    }
}

/// One training clip for the synthesis model, tagged with the index of the
/// manifest entry it was cut from (the unit of the validation grouping).
pub struct SynthesisClip {
    pub aligned: AlignedScore,
    pub mel: MelSpectrogram,
    pub recording: usize,
}

/// One training pair for the alignment model.
pub struct AlignmentPair {
    pub score: Score,
    pub aligned: AlignedScore,
    pub recording: usize,
}

/// Loads every entry, renders or reads its recording, and slices the lot
/// into fixed-length clips.
pub fn build_synthesis_clips(
    manifest: &DatasetManifest,
    clip_seconds: f64,
) -> Result<Vec<SynthesisClip>, TrainError> {
    if manifest.entries.is_empty() {
        return Err(TrainError::EmptyManifest);
    }
    let params = SpectrogramParams::default();
    let mut clips = Vec::new();
    for (recording, entry) in manifest.entries.iter().enumerate() {
        let aligned = load_aligned(entry)?;
        let audio = load_audio(entry, &aligned)?;
        let mel = log_mel(&audio, &params)?;
        for (aligned, mel) in slice_clips(&aligned, &mel, clip_seconds)? {
            clips.push(SynthesisClip { aligned, mel, recording });
        }
    }
    Ok(clips)
}

/// Loads (score, aligned score) pairs for alignment training. Pairs are
/// whole scores; the alignment model consumes note sequences, not clips.
pub fn build_alignment_pairs(
    manifest: &DatasetManifest,
) -> Result<Vec<AlignmentPair>, TrainError> {
    if manifest.entries.is_empty() {
        return Err(TrainError::EmptyManifest);
    }
    manifest
        .entries
        .iter()
        .enumerate()
        .map(|(recording, entry)| {
            Ok(AlignmentPair {
                score: load_score(entry)?,
                aligned: load_aligned(entry)?,
                recording,
            })
        })
        .collect()
}
