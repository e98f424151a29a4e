//! RTTM speaker-annotation files.
//!
//! Written lines follow `SPEAKER <rec> 1 <onset> <dur> <NA> <NA> <spk> <NA>
//! <NA>` with three decimals on the times. The reader tolerates extra
//! whitespace and skips non-SPEAKER record types.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::types::Segment;
use crate::{Error, Result};

/// One speaker turn of one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct RttmRecord {
    pub recording_id: String,
    pub onset: f64,
    pub duration: f64,
    pub speaker: String,
}

impl RttmRecord {
    pub fn end(&self) -> f64 {
        self.onset + self.duration
    }
}

/// Turns per-segment cluster ids into RTTM records (`spk<id>` names).
pub fn records_from_labels(
    labels: &[usize],
    segments: &[Segment],
    recording_id: &str,
) -> Vec<RttmRecord> {
    labels
        .iter()
        .zip(segments)
        .map(|(&label, seg)| RttmRecord {
            recording_id: recording_id.to_string(),
            onset: seg.onset,
            duration: seg.duration,
            speaker: format!("spk{label}"),
        })
        .collect()
}

/// Writes records sorted by recording id, then onset.
pub fn write_rttm(records: &[RttmRecord], path: &Path) -> Result<()> {
    let mut sorted: Vec<&RttmRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        a.recording_id
            .cmp(&b.recording_id)
            .then(a.onset.partial_cmp(&b.onset).unwrap())
    });
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in sorted {
        writeln!(
            w,
            "SPEAKER {} 1 {:.3} {:.3} <NA> <NA> {} <NA> <NA>",
            r.recording_id, r.onset, r.duration, r.speaker
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads SPEAKER records; other record types are ignored. Malformed fields
/// and out-of-range times yield a typed error naming the line.
pub fn read_rttm(path: &Path) -> Result<Vec<RttmRecord>> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() || tokens[0] != "SPEAKER" {
            continue;
        }
        let parse_err = |reason: String| Error::Parse {
            path: display.clone(),
            line: lineno + 1,
            reason,
        };
        if tokens.len() < 8 {
            return Err(parse_err(format!(
                "SPEAKER line needs at least 8 fields, got {}",
                tokens.len()
            )));
        }
        let onset: f64 = tokens[3]
            .parse()
            .map_err(|_| parse_err(format!("invalid onset {:?}", tokens[3])))?;
        let duration: f64 = tokens[4]
            .parse()
            .map_err(|_| parse_err(format!("invalid duration {:?}", tokens[4])))?;
        if onset < 0.0 {
            return Err(parse_err(format!("negative onset {onset}")));
        }
        if duration <= 0.0 {
            return Err(parse_err(format!("non-positive duration {duration}")));
        }
        records.push(RttmRecord {
            recording_id: tokens[1].to_string(),
            onset,
            duration,
            speaker: tokens[7].to_string(),
        });
    }
    Ok(records)
}
