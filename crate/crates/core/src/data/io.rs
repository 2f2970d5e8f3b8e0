//! JSON-lines dataset files: one action per line,
//! `{"action_id": .., "foul": .., "off": .., "views": [[..], ..]}`.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{DataSplit, MultiViewSample, FOUL_CLASSES, OFFENCE_CLASSES};
use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::scalar::Scalar;

#[derive(Serialize, Deserialize)]
struct Record {
    action_id: String,
    foul: usize,
    off: usize,
    views: Vec<Vec<f64>>,
}

pub fn read_dataset<T: Scalar, R: Read>(reader: R) -> Result<Vec<MultiViewSample<T>>> {
    let mut samples = Vec::new();
    let mut dim: Option<(usize, usize)> = None;
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if rec.foul >= FOUL_CLASSES {
            return Err(Error::UnknownLabel {
                line: line_no,
                task: "foul_type".into(),
                label: rec.foul.to_string(),
            });
        }
        if rec.off >= OFFENCE_CLASSES {
            return Err(Error::UnknownLabel {
                line: line_no,
                task: "offence_severity".into(),
                label: rec.off.to_string(),
            });
        }
        let cols = rec.views.first().map_or(0, Vec::len);
        if rec.views.is_empty() || cols == 0 {
            return Err(Error::Dimension {
                line: line_no,
                message: format!("action {:?} has no view features", rec.action_id),
            });
        }
        if rec.views.iter().any(|v| v.len() != cols) {
            return Err(Error::Dimension {
                line: line_no,
                message: format!("action {:?} has views of differing dimension", rec.action_id),
            });
        }
        match dim {
            Some((first_line, d)) if d != cols => {
                return Err(Error::Dimension {
                    line: line_no,
                    message: format!("feature dimension {cols} differs from {d} on line {first_line}"),
                })
            }
            None => dim = Some((line_no, cols)),
            _ => {}
        }
        if rec.views.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Parse {
                line: line_no,
                message: "non-finite feature value".into(),
            });
        }
        let data = rec.views.iter().flatten().map(|&x| T::of(x)).collect();
        samples.push(MultiViewSample {
            action_id: rec.action_id,
            views: Matrix::new(rec.views.len(), cols, data)?,
            foul: rec.foul,
            off: rec.off,
        });
    }
    Ok(samples)
}

pub fn load_dataset<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<MultiViewSample<T>>> {
    read_dataset(fs::File::open(path)?)
}

pub fn write_dataset<T: Scalar, W: Write>(mut writer: W, samples: &[MultiViewSample<T>]) -> Result<()> {
    for s in samples {
        let rec = Record {
            action_id: s.action_id.clone(),
            foul: s.foul,
            off: s.off,
            views: (0..s.views.rows())
                .map(|i| s.views.row(i).iter().map(|x| x.as_f64()).collect())
                .collect(),
        };
        serde_json::to_writer(&mut writer, &rec)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_dataset<T: Scalar>(path: impl AsRef<Path>, samples: &[MultiViewSample<T>]) -> Result<()> {
    let mut buf = Vec::new();
    write_dataset(&mut buf, samples)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Hex SHA-256 of the dataset's canonical JSON-lines encoding.
pub fn dataset_hash<T: Scalar>(samples: &[MultiViewSample<T>]) -> String {
    let mut buf = Vec::new();
    write_dataset(&mut buf, samples).expect("writing to memory");
    hex::encode(Sha256::digest(&buf))
}

/// Reads `train.jsonl`, `val.jsonl` and `test.jsonl` from `dir`; a missing
/// validation file yields an empty validation set.
pub fn load_split<T: Scalar>(dir: impl AsRef<Path>) -> Result<DataSplit<T>> {
    let dir = dir.as_ref();
    let val_path = dir.join("val.jsonl");
    Ok(DataSplit {
        train: load_dataset(dir.join("train.jsonl"))?,
        val: if val_path.exists() {
            load_dataset(val_path)?
        } else {
            Vec::new()
        },
        test: load_dataset(dir.join("test.jsonl"))?,
    })
}

pub fn save_split<T: Scalar>(dir: impl AsRef<Path>, split: &DataSplit<T>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    save_dataset(dir.join("train.jsonl"), &split.train)?;
    save_dataset(dir.join("val.jsonl"), &split.val)?;
    save_dataset(dir.join("test.jsonl"), &split.test)?;
    Ok(())
}
