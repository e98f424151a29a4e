//! Binary matrix container and its `.segs` timeline sidecar.
//!
//! Layout: magic `SHRC`, format version (u32 LE), row count N (u64 LE),
//! column count F (u64 LE), then N*F values row-major as little-endian f64.
//! The sidecar shares the container's stem with a `segs` extension and
//! holds one `onset duration [label]` line per row.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::simgraph::SimilarityMatrix;
use crate::types::{EmbeddingSet, Segment};
use crate::{Error, Result};

const MAGIC: [u8; 4] = *b"SHRC";
const VERSION: u32 = 1;

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("segs")
}

fn write_matrix(matrix: &Array2<f64>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&MAGIC).map_err(|e| Error::io(path, e))?;
    w.write_all(&VERSION.to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    w.write_all(&(matrix.nrows() as u64).to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    w.write_all(&(matrix.ncols() as u64).to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    for v in matrix.iter() {
        w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    read_chunk(&mut r, &mut magic, &display, "magic")?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            path: display,
            expected: MAGIC,
            found: magic,
        });
    }
    let mut buf4 = [0u8; 4];
    read_chunk(&mut r, &mut buf4, &display, "version")?;
    let version = u32::from_le_bytes(buf4);
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            path: display,
            version,
        });
    }
    let mut buf8 = [0u8; 8];
    read_chunk(&mut r, &mut buf8, &display, "row count")?;
    let rows = u64::from_le_bytes(buf8);
    read_chunk(&mut r, &mut buf8, &display, "column count")?;
    let cols = u64::from_le_bytes(buf8);
    let count = rows
        .checked_mul(cols)
        .and_then(|c| usize::try_from(c).ok())
        .and_then(|c| c.checked_mul(8).map(|_| c))
        .ok_or(Error::SizeOverflow {
            path: display.clone(),
            rows,
            cols,
        })?;

    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        read_chunk(&mut r, &mut buf8, &display, "float payload")?;
        values.push(f64::from_le_bytes(buf8));
    }
    if r.read(&mut buf8).map_err(|e| Error::Io {
        path: display.clone(),
        source: e,
    })? != 0
    {
        return Err(Error::Truncated {
            path: display,
            detail: "trailing bytes after the declared payload".into(),
        });
    }
    Array2::from_shape_vec((rows as usize, cols as usize), values)
        .map_err(|e| Error::Internal(format!("shape error on read: {e}")))
}

fn read_chunk<R: Read>(r: &mut R, buf: &mut [u8], path: &str, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Truncated {
                path: path.to_string(),
                detail: format!("file ended while reading {what}"),
            }
        } else {
            Error::Io {
                path: path.to_string(),
                source: e,
            }
        }
    })
}

/// Writes the embedding matrix; when a segment timeline is present, a
/// sidecar with one `onset duration [label]` line per row goes next to it.
pub fn write_embeddings(set: &EmbeddingSet, path: &Path) -> Result<()> {
    write_matrix(&set.embeddings, path)?;
    match (&set.segments, &set.labels) {
        (Some(segments), labels) => {
            let sidecar = sidecar_path(path);
            let file = File::create(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
            let mut w = BufWriter::new(file);
            for (i, seg) in segments.iter().enumerate() {
                match labels {
                    Some(l) => writeln!(w, "{} {} {}", seg.onset, seg.duration, l[i]),
                    None => writeln!(w, "{} {}", seg.onset, seg.duration),
                }
                .map_err(|e| Error::io(&sidecar, e))?;
            }
            w.flush().map_err(|e| Error::io(&sidecar, e))
        }
        (None, Some(_)) => Err(Error::InvalidConfig(
            "labels require a segment timeline to be written to the sidecar".into(),
        )),
        (None, None) => Ok(()),
    }
}

/// Reads an embedding container plus its optional sidecar. The recording id
/// is the file stem.
pub fn read_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let embeddings = read_matrix(path)?;
    let recording_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "recording".to_string());
    let mut set = EmbeddingSet::new(recording_id, embeddings);

    let sidecar = sidecar_path(path);
    if sidecar.exists() {
        let display = sidecar.display().to_string();
        let file = File::open(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let mut segments = Vec::new();
        let mut labels: Vec<usize> = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&sidecar, e))?;
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.is_empty() {
                continue;
            }
            if tokens.len() > 3 {
                return Err(Error::Parse {
                    path: display,
                    line: lineno + 1,
                    reason: format!("expected 'onset duration [label]', got {} fields", tokens.len()),
                });
            }
            let parse_f64 = |tok: &str, what: &str| -> Result<f64> {
                tok.parse().map_err(|_| Error::Parse {
                    path: display.clone(),
                    line: lineno + 1,
                    reason: format!("invalid {what} {tok:?}"),
                })
            };
            let onset = parse_f64(tokens[0], "onset")?;
            let duration = parse_f64(tokens[1], "duration")?;
            segments.push(Segment { onset, duration });
            if let Some(tok) = tokens.get(2) {
                let label = tok.parse().map_err(|_| Error::Parse {
                    path: display.clone(),
                    line: lineno + 1,
                    reason: format!("invalid label {tok:?}"),
                })?;
                labels.push(label);
            }
            if !labels.is_empty() && labels.len() != segments.len() {
                return Err(Error::Parse {
                    path: display,
                    line: lineno + 1,
                    reason: "labels must be present on every line or none".into(),
                });
            }
        }
        if segments.len() != set.len() {
            return Err(Error::SidecarMismatch {
                path: display,
                expected: set.len(),
                found: segments.len(),
            });
        }
        set.segments = Some(segments);
        if !labels.is_empty() {
            set.labels = Some(labels);
        }
    }
    Ok(set)
}

/// Writes a similarity matrix in the shared container format.
pub fn write_similarity(sim: &SimilarityMatrix, path: &Path) -> Result<()> {
    write_matrix(sim.values(), path)
}

/// Reads a precomputed similarity matrix, verifying squareness, symmetry,
/// range and the unit diagonal.
pub fn read_similarity(path: &Path) -> Result<SimilarityMatrix> {
    SimilarityMatrix::from_matrix(read_matrix(path)?)
}
