//! Manifest + sidecar-blob corpus format.
//!
//! `manifest.jsonl` is UTF-8, one JSON object per line. The first line is a
//! [`ManifestHeader`]; every following line is one record. Each modality has
//! a blob of raw little-endian `f32` values, row-major, records
//! concatenated. Record spans are `[byte_offset, byte_len]`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Corpus, Label, Modality, SeqShape, Split, UtteranceRecord, OOD_SENTINEL};
use crate::error::{Error, Result};
use crate::numerics::Tensor2;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const FORMAT_TAG: &str = "mintood-corpus";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityEntry {
    pub modality: Modality,
    pub len: usize,
    pub dim: usize,
    /// Blob path relative to the manifest directory.
    pub blob: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub format: String,
    pub version: u32,
    pub k: usize,
    pub modalities: Vec<ModalityEntry>,
}

/// `[byte_offset, byte_len]` into a modality blob.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span(pub u64, pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct RecordEntry {
    pub id: String,
    pub split: Split,
    pub label: Label,
    pub spans: [Span; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub header: ManifestHeader,
    pub records: Vec<RecordEntry>,
}

impl CorpusManifest {
    pub fn shapes(&self) -> [SeqShape; 3] {
        let mut out = [SeqShape { len: 0, dim: 0 }; 3];
        for e in &self.header.modalities {
            out[e.modality.index()] = SeqShape { len: e.len, dim: e.dim };
        }
        out
    }

    fn blob(&self, m: Modality) -> &ModalityEntry {
        self.header
            .modalities
            .iter()
            .find(|e| e.modality == m)
            .expect("header validated to list every modality")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawLabel {
    Class(usize),
    Sentinel(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    split: String,
    label: RawLabel,
    text: Span,
    video: Span,
    audio: Span,
}

/// Parses and structurally validates a manifest without touching blobs.
pub fn read_manifest(path: &Path) -> Result<CorpusManifest> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let bad = |reason: String| Error::Manifest {
        path: path.to_path_buf(),
        reason,
    };

    let first = lines
        .next()
        .ok_or_else(|| bad("empty manifest".into()))?
        .map_err(|e| Error::io(path, e))?;
    let header: ManifestHeader = serde_json::from_str(&first).map_err(|e| bad(format!("header: {e}")))?;
    if header.format != FORMAT_TAG {
        return Err(bad(format!("unknown format tag `{}`", header.format)));
    }
    if header.version != FORMAT_VERSION {
        return Err(bad(format!("unsupported version {}", header.version)));
    }
    if header.k < 2 {
        return Err(bad(format!("K must be at least 2, got {}", header.k)));
    }
    for m in Modality::ALL {
        let n = header.modalities.iter().filter(|e| e.modality == m).count();
        if n != 1 {
            return Err(bad(format!("modality `{m}` declared {n} times")));
        }
    }

    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord =
            serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", lineno + 2)))?;
        let fail = |reason: String| Error::Format {
            record: raw.id.clone(),
            reason,
        };
        let split = Split::parse(&raw.split).ok_or_else(|| fail(format!("unknown split `{}`", raw.split)))?;
        let label = match &raw.label {
            RawLabel::Class(c) if *c < header.k => Label::Id(*c),
            RawLabel::Class(c) => return Err(fail(format!("class {c} out of range for K = {}", header.k))),
            RawLabel::Sentinel(s) if s == OOD_SENTINEL => Label::Ood,
            RawLabel::Sentinel(s) => return Err(fail(format!("unknown label `{s}`"))),
        };
        if label == Label::Ood && split != Split::Test {
            return Err(fail(format!("OOD label in split `{}`; OOD records are test-only", split.name())));
        }
        records.push(RecordEntry {
            id: raw.id,
            split,
            label,
            spans: [raw.text, raw.video, raw.audio],
        });
    }
    Ok(CorpusManifest { header, records })
}

/// Loads a corpus, checking every span against its blob and declared shape.
pub fn load_corpus(manifest_path: &Path) -> Result<Corpus> {
    let manifest = read_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let shapes = manifest.shapes();

    let mut blobs: Vec<Option<Vec<u8>>> = Vec::with_capacity(3);
    for m in Modality::ALL {
        let p = dir.join(&manifest.blob(m).blob);
        blobs.push(fs::read(&p).ok());
    }

    let mut records = Vec::with_capacity(manifest.records.len());
    for entry in &manifest.records {
        let fail = |reason: String| Error::Format {
            record: entry.id.clone(),
            reason,
        };
        let mut seqs = Vec::with_capacity(3);
        for m in Modality::ALL {
            let shape = shapes[m.index()];
            let blob = blobs[m.index()]
                .as_deref()
                .ok_or_else(|| fail(format!("missing {m} blob `{}`", manifest.blob(m).blob)))?;
            let Span(off, len) = entry.spans[m.index()];
            let want = (shape.len * shape.dim * 4) as u64;
            if len != want {
                return Err(fail(format!(
                    "{m} span is {len} bytes, declared shape {}x{} needs {want}",
                    shape.len, shape.dim
                )));
            }
            let end = off.checked_add(len).filter(|&e| e <= blob.len() as u64).ok_or_else(|| {
                fail(format!("{m} span [{off}, +{len}) exceeds blob of {} bytes", blob.len()))
            })?;
            let values: Vec<f64> = blob[off as usize..end as usize]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            let t = Tensor2::from_vec(shape.len, shape.dim, values).map_err(|e| fail(e.to_string()))?;
            seqs.push(t);
        }
        let seqs: [Tensor2; 3] = seqs.try_into().expect("three modalities");
        records.push(UtteranceRecord {
            id: entry.id.clone(),
            split: entry.split,
            label: entry.label,
            seqs,
        });
    }
    Corpus::new(manifest.header.k, shapes, records)
}

/// Writes `corpus` into `dir` and returns the manifest path. Values are
/// stored as `f32`; a corpus whose values are all `f32`-representable
/// round-trips bit-exactly.
pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header = ManifestHeader {
        format: FORMAT_TAG.into(),
        version: FORMAT_VERSION,
        k: corpus.k(),
        modalities: Modality::ALL
            .iter()
            .map(|&m| ModalityEntry {
                modality: m,
                len: corpus.shape(m).len,
                dim: corpus.shape(m).dim,
                blob: format!("{}.f32", m.name()),
            })
            .collect(),
    };

    let mut writers = Vec::with_capacity(3);
    for e in &header.modalities {
        let p = dir.join(&e.blob);
        let f = fs::File::create(&p).map_err(|err| Error::io(&p, err))?;
        writers.push((p, BufWriter::new(f), 0u64));
    }

    let manifest_path = dir.join(MANIFEST_FILE);
    let mf = fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mut mw = BufWriter::new(mf);
    let io_err = |p: &Path| {
        let p = p.to_path_buf();
        move |e| Error::io(p, e)
    };
    serde_json::to_writer(&mut mw, &header).map_err(|e| Error::io(&manifest_path, e.into()))?;
    mw.write_all(b"\n").map_err(io_err(&manifest_path))?;

    for r in corpus.records() {
        let mut spans = [Span(0, 0); 3];
        for m in Modality::ALL {
            let (p, w, off) = &mut writers[m.index()];
            let bytes: Vec<u8> = r.seq(m).data().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
            w.write_all(&bytes).map_err(io_err(p))?;
            spans[m.index()] = Span(*off, bytes.len() as u64);
            *off += bytes.len() as u64;
        }
        let raw = RawRecord {
            id: r.id.clone(),
            split: r.split.name().into(),
            label: match r.label {
                Label::Id(c) => RawLabel::Class(c),
                Label::Ood => RawLabel::Sentinel(OOD_SENTINEL.into()),
            },
            text: spans[0],
            video: spans[1],
            audio: spans[2],
        };
        serde_json::to_writer(&mut mw, &raw).map_err(|e| Error::io(&manifest_path, e.into()))?;
        mw.write_all(b"\n").map_err(io_err(&manifest_path))?;
    }
    mw.flush().map_err(io_err(&manifest_path))?;
    for (p, mut w, _) in writers {
        w.flush().map_err(|e| Error::io(&p, e))?;
    }
    Ok(manifest_path)
}
