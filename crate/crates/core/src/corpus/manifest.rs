use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{PhoneInventory, PhoneSegment, SpeakerGroup, SIL};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Test,
    Adapt,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Adapt => "adapt",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            "adapt" => Some(Split::Adapt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceRecord {
    pub utt_id: String,
    pub speaker_id: String,
    pub group: SpeakerGroup,
    /// Relative to the manifest's directory unless absolute.
    pub wav_path: PathBuf,
    pub transcript: Vec<String>,
    pub duration: f64,
}

/// One split of one corpus. Serialized as a header comment plus one
/// tab-separated record per line.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub corpus: String,
    pub split: Split,
    pub records: Vec<UtteranceRecord>,
    /// Directory relative wav paths resolve against; not serialized.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(corpus: impl Into<String>, split: Split, base_dir: impl Into<PathBuf>) -> Self {
        Self {
            corpus: corpus.into(),
            split,
            records: Vec::new(),
            base_dir: base_dir.into(),
        }
    }

    /// Human-readable name, e.g. `child.test`.
    pub fn name(&self) -> String {
        format!("{}.{}", self.corpus, self.split.as_str())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn wav_path(&self, rec: &UtteranceRecord) -> PathBuf {
        if rec.wav_path.is_absolute() {
            rec.wav_path.clone()
        } else {
            self.base_dir.join(&rec.wav_path)
        }
    }

    pub fn speakers(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.speaker_id.as_str()).collect()
    }

    pub fn total_duration(&self) -> f64 {
        self.records.iter().map(|r| r.duration).sum()
    }

    /// Checks id uniqueness and transcript shape against the inventory.
    pub fn validate(&self, inv: &PhoneInventory) -> Result<()> {
        let mut seen = BTreeSet::new();
        for r in &self.records {
            if !seen.insert(&r.utt_id) {
                return Err(Error::Invalid(format!("duplicate utt_id {}", r.utt_id)));
            }
            if r.transcript.is_empty()
                || r.transcript.first().map(String::as_str) != Some(SIL)
                || r.transcript.last().map(String::as_str) != Some(SIL)
            {
                return Err(Error::Invalid(format!(
                    "{}: transcript must be non-empty and start/end with sil",
                    r.utt_id
                )));
            }
            inv.encode(&r.transcript)?;
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut s = format!("# corpus={} split={}\n", self.corpus, self.split.as_str());
        for r in &self.records {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{:.4}",
                r.utt_id,
                r.speaker_id,
                r.group.as_str(),
                r.wav_path.display(),
                r.transcript.join(" "),
                r.duration
            );
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::format(path, "empty manifest"))?;
        let mut corpus = None;
        let mut split = None;
        for kv in header.trim_start_matches('#').split_whitespace() {
            match kv.split_once('=') {
                Some(("corpus", v)) => corpus = Some(v.to_string()),
                Some(("split", v)) => split = Split::parse(v),
                _ => {}
            }
        }
        let (corpus, split) = corpus
            .zip(split)
            .ok_or_else(|| Error::format(path, "missing corpus/split header"))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut m = Manifest::new(corpus, split, base_dir);
        for (no, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let bad = |why: &str| Error::format(path, format!("line {}: {why}", no + 2));
            if f.len() != 6 {
                return Err(bad("expected 6 tab-separated fields"));
            }
            m.records.push(UtteranceRecord {
                utt_id: f[0].to_string(),
                speaker_id: f[1].to_string(),
                group: SpeakerGroup::parse(f[2]).ok_or_else(|| bad("unknown group"))?,
                wav_path: PathBuf::from(f[3]),
                transcript: f[4].split_whitespace().map(str::to_string).collect(),
                duration: f[5].parse().map_err(|_| bad("bad duration"))?,
            });
        }
        Ok(m)
    }
}

/// Ground-truth phone timings (sample offsets), one utterance per line.
pub fn write_timings(
    path: impl AsRef<Path>,
    timings: &BTreeMap<String, Vec<PhoneSegment>>,
    inv: &PhoneInventory,
) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::new();
    for (utt, segs) in timings {
        s.push_str(utt);
        for seg in segs {
            let _ = write!(s, "\t{}:{}:{}", inv.symbol(seg.phone), seg.start, seg.end);
        }
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_timings(path: impl AsRef<Path>, inv: &PhoneInventory) -> Result<BTreeMap<String, Vec<PhoneSegment>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let mut it = line.split('\t');
        let utt = it.next().unwrap_or_default().to_string();
        let segs = it
            .map(|tok| {
                let p: Vec<&str> = tok.split(':').collect();
                if p.len() != 3 {
                    return Err(Error::format(path, format!("bad segment {tok}")));
                }
                let num = |s: &str| s.parse::<usize>().map_err(|_| Error::format(path, format!("bad segment {tok}")));
                Ok(PhoneSegment {
                    phone: inv.index(p[0])?,
                    start: num(p[1])?,
                    end: num(p[2])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        out.insert(utt, segs);
    }
    Ok(out)
}
