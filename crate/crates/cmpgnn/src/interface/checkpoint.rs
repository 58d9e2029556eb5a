//! Textual parameter checkpoints: a shape header per matrix, one row per
//! line, shortest round-trip float formatting.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelParams, PARAM_NAMES};
use crate::numkernel::DenseMatrix;

const MAGIC: &str = "cmpgnn-checkpoint v1";

pub fn save_checkpoint(params: &ModelParams, seed: u64, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{}", MAGIC)?;
    writeln!(w, "seed {}", seed)?;
    writeln!(w, "prng chacha8")?;
    for (name, m) in PARAM_NAMES.iter().zip(params.matrices()) {
        writeln!(w, "matrix {} {} {}", name, m.rows(), m.cols())?;
        for r in 0..m.rows() {
            let row: Vec<String> = m.row(r).iter().map(|v| format!("{:?}", v)).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, u64)> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let mut next = |expect: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((idx, Ok(line))) => Ok((idx + 1, line)),
            Some((idx, Err(e))) => Err(Error::Parse {
                line: idx + 1,
                message: e.to_string(),
            }),
            None => Err(Error::Parse {
                line: 0,
                message: format!("unexpected end of checkpoint, wanted {}", expect),
            }),
        }
    };

    let (line, magic) = next("header")?;
    if magic != MAGIC {
        return Err(Error::Parse {
            line,
            message: format!("not a checkpoint (header {:?})", magic),
        });
    }
    let (line, seed_line) = next("seed")?;
    let seed: u64 = seed_line
        .strip_prefix("seed ")
        .ok_or_else(|| Error::Parse {
            line,
            message: "expected `seed <n>`".into(),
        })?
        .parse()
        .map_err(|e| Error::Parse {
            line,
            message: format!("{}", e),
        })?;
    let _ = next("prng")?;

    let mut matrices = Vec::with_capacity(PARAM_NAMES.len());
    for expected_name in PARAM_NAMES {
        let (line, header) = next("matrix header")?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "matrix" || parts[1] != expected_name {
            return Err(Error::Parse {
                line,
                message: format!("expected `matrix {} <rows> <cols>`", expected_name),
            });
        }
        let rows: usize = parts[2].parse().map_err(|e| Error::Parse {
            line,
            message: format!("{}", e),
        })?;
        let cols: usize = parts[3].parse().map_err(|e| Error::Parse {
            line,
            message: format!("{}", e),
        })?;
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (line, row) = next("matrix row")?;
            for v in row.split_whitespace() {
                values.push(v.parse::<f64>().map_err(|e| Error::Parse {
                    line,
                    message: format!("{}", e),
                })?);
            }
        }
        matrices.push(DenseMatrix::from_vec(rows, cols, values)?);
    }
    Ok((ModelParams::from_slice(&matrices)?, seed))
}
