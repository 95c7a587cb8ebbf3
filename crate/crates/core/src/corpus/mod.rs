//! Embedding corpora: records, on-disk format, synthetic generation and
//! batching.
//!
//! A corpus holds one fixed-shape embedding sequence per modality for every
//! utterance. OOD utterances carry the sentinel label and may only appear in
//! the test split.

mod batch;
mod io;
mod synth;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use batch::{make_batches, Batch};
pub use io::{MANIFEST_FILE, load_corpus, read_manifest, save_corpus, CorpusManifest, ManifestHeader, ModalityEntry, RecordEntry, Span};
pub use synth::{ModalitySynth, SynthConfig, synth_corpus};

use crate::error::{Error, Result};
use crate::numerics::Tensor2;

/// Label string marking OOD records in manifests.
pub const OOD_SENTINEL: &str = "__OOD__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Video,
    Audio,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Text, Modality::Video, Modality::Audio];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Video => "video",
            Modality::Audio => "audio",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "valid" => Some(Split::Valid),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// Known intent class or the unified OOD label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Id(usize),
    Ood,
}

impl Label {
    pub fn is_id(self) -> bool {
        matches!(self, Label::Id(_))
    }

    pub fn class(self) -> Option<usize> {
        match self {
            Label::Id(c) => Some(c),
            Label::Ood => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Id(c) => write!(f, "{c}"),
            Label::Ood => f.write_str(OOD_SENTINEL),
        }
    }
}

/// Fixed `(len, dim)` of one modality's sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqShape {
    pub len: usize,
    pub dim: usize,
}

/// Text, video and audio sequences indexed by [`Modality::index`].
pub type Sequences = [Tensor2; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceRecord {
    pub id: String,
    pub split: Split,
    pub label: Label,
    pub seqs: Sequences,
}

impl UtteranceRecord {
    pub fn seq(&self, m: Modality) -> &Tensor2 {
        &self.seqs[m.index()]
    }
}

/// A validated in-memory corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    k: usize,
    shapes: [SeqShape; 3],
    records: Vec<UtteranceRecord>,
}

impl Corpus {
    pub fn new(k: usize, shapes: [SeqShape; 3], records: Vec<UtteranceRecord>) -> Result<Self> {
        if k < 2 {
            return Err(Error::param("corpus", "k", format!("need at least 2 classes, got {k}")));
        }
        for m in Modality::ALL {
            let s = shapes[m.index()];
            if s.len == 0 || s.dim == 0 {
                return Err(Error::param("corpus", "shapes", format!("{m} shape must be non-empty")));
            }
        }
        for r in &records {
            validate_record(r, k, &shapes)?;
        }
        Ok(Self { k, shapes, records })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn shapes(&self) -> [SeqShape; 3] {
        self.shapes
    }

    pub fn shape(&self, m: Modality) -> SeqShape {
        self.shapes[m.index()]
    }

    pub fn records(&self) -> &[UtteranceRecord] {
        &self.records
    }

    pub fn split(&self, split: Split) -> Vec<&UtteranceRecord> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    pub fn into_records(self) -> Vec<UtteranceRecord> {
        self.records
    }
}

fn validate_record(r: &UtteranceRecord, k: usize, shapes: &[SeqShape; 3]) -> Result<()> {
    let fail = |reason: String| Error::Format {
        record: r.id.clone(),
        reason,
    };
    match r.label {
        Label::Id(c) if c >= k => return Err(fail(format!("class {c} out of range for K = {k}"))),
        Label::Ood if r.split != Split::Test => {
            return Err(fail(format!("OOD label in split `{}`; OOD records are test-only", r.split.name())))
        }
        _ => {}
    }
    for m in Modality::ALL {
        let want = shapes[m.index()];
        let got = r.seq(m).shape();
        if got != (want.len, want.dim) {
            return Err(fail(format!(
                "{m} sequence is {}x{}, corpus declares {}x{}",
                got.0, got.1, want.len, want.dim
            )));
        }
        if !r.seq(m).is_finite() {
            return Err(fail(format!("{m} sequence has non-finite entries")));
        }
    }
    Ok(())
}
