//! JSON Lines interchange format for gesture corpora.
//!
//! One sequence per line:
//! `{"label":..,"class_id":..,"provenance":{"generator_version":..,"seed":"<u64>","augmented":..},
//!   "frames":[{"t_ms":..,"joints":[[x,y,z];21],"gaze":[gx,gy]|null},..]}`.
//! Floats are written in shortest round-trip form; the file ends with a newline.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{GestureFrame, HandSkeleton, Vec3};
use crate::synth::{GestureClass, GestureSequence, Provenance};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProvenanceRecord {
    generator_version: String,
    seed: String,
    augmented: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    t_ms: u64,
    joints: Vec<Vec3>,
    gaze: Option<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SequenceRecord {
    label: String,
    class_id: usize,
    provenance: ProvenanceRecord,
    frames: Vec<FrameRecord>,
}

fn to_record(seq: &GestureSequence) -> SequenceRecord {
    SequenceRecord {
        label: seq.label.name().to_string(),
        class_id: seq.label.id(),
        provenance: ProvenanceRecord {
            generator_version: seq.provenance.generator_version.clone(),
            seed: seq.provenance.seed.to_string(),
            augmented: seq.provenance.augmented,
        },
        frames: seq
            .frames
            .iter()
            .map(|f| FrameRecord {
                t_ms: f.t_ms,
                joints: f.skeleton.joints.to_vec(),
                gaze: f.gaze,
            })
            .collect(),
    }
}

fn from_record(rec: SequenceRecord, line: usize) -> Result<GestureSequence> {
    let bad = |detail: String| Error::Dataset { line, detail };
    let label: GestureClass = rec.label.parse().map_err(|e: Error| bad(e.to_string()))?;
    if label.id() != rec.class_id {
        return Err(bad(format!("class_id {} does not match label {}", rec.class_id, label)));
    }
    let seed = rec
        .provenance
        .seed
        .parse::<u64>()
        .map_err(|e| bad(format!("seed {:?}: {e}", rec.provenance.seed)))?;
    let frames = rec
        .frames
        .into_iter()
        .map(|f| {
            Ok(GestureFrame {
                t_ms: f.t_ms,
                skeleton: HandSkeleton::from_slice(&f.joints).map_err(|e| bad(e.to_string()))?,
                gaze: f.gaze,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let seq = GestureSequence {
        label,
        frames,
        provenance: Provenance {
            generator_version: rec.provenance.generator_version,
            seed,
            augmented: rec.provenance.augmented,
        },
    };
    seq.ensure_valid().map_err(|e| bad(e.to_string()))?;
    Ok(seq)
}

pub fn sequence_to_json(seq: &GestureSequence) -> String {
    serde_json::to_string(&to_record(seq)).expect("sequence records always serialise")
}

pub fn sequence_from_json(line: &str) -> Result<GestureSequence> {
    let rec: SequenceRecord = serde_json::from_str(line).map_err(|e| Error::Dataset {
        line: 1,
        detail: e.to_string(),
    })?;
    from_record(rec, 1)
}

pub fn to_jsonl(seqs: &[GestureSequence]) -> String {
    let mut out = String::new();
    for s in seqs {
        out.push_str(&sequence_to_json(s));
        out.push('\n');
    }
    out
}

/// Blank lines are skipped; line numbers in errors are 1-based.
pub fn parse_jsonl(text: &str) -> Result<Vec<GestureSequence>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let rec: SequenceRecord = serde_json::from_str(l).map_err(|e| Error::Dataset {
                line: i + 1,
                detail: e.to_string(),
            })?;
            from_record(rec, i + 1)
        })
        .collect()
}

pub fn write_dataset(path: impl AsRef<Path>, seqs: &[GestureSequence]) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(to_jsonl(seqs).as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<GestureSequence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(&text)
}
