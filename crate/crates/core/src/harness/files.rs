//! On-disk formats: training dataset, result CSVs and the JSON sidecar.
//!
//! Dataset layout, little-endian:
//!
//! ```text
//! magic          4 bytes "EELD"
//! version        u32
//! seed           u64
//! n_subcarriers  u32
//! n_links        u32
//! n_samples      u64
//! per sample:
//!   snr_db       f64
//!   input        f64 x n_links*2N  (per link: real parts, then imaginary parts)
//!   label        f64 x n_links*2N
//! ```

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use super::{matrix_from_columns, Calibration, CellSummary, EstimatorKind, SweepConfig, SweepResult};
use crate::error::{Error, Result};
use crate::estimator::{stack_real, unstack_real, TrainingSet};
use crate::numerics::{ComplexMatrix, C64};

pub const DATASET_MAGIC: &[u8; 4] = b"EELD";
pub const DATASET_VERSION: u32 = 1;

pub const RESULTS_CSV: &str = "results.csv";
pub const RESULTS_JSON: &str = "results.json";
pub const TRIALS_CSV: &str = "trials.csv";

const RESULTS_HEADER: &str = "snr_db,estimator,evm,L,L_CP,mean_nmse,stderr,n_trials";

/// Model file name for a learned estimator, keyed by the settings its
/// training data depends on.
pub fn model_file_name(cfg: &SweepConfig, kind: EstimatorKind) -> String {
    let evm = if cfg.hpa_enabled {
        format!("evm{}", cfg.evm_target)
    } else {
        "nohpa".to_string()
    };
    format!(
        "{kind}_N{}_L{}_cp{}_M{}_{evm}_seed{}.model",
        cfg.n_subcarriers, cfg.n_paths, cfg.cp_len, cfg.n_subsurfaces, cfg.seed
    )
}

fn put_matrix<W: Write>(w: &mut W, m: &ComplexMatrix) -> std::io::Result<()> {
    for j in 0..m.ncols() {
        let col: Vec<C64> = m.col(j).iter().copied().collect();
        for v in stack_real(&col) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn write_dataset<W: Write>(mut w: W, seed: u64, set: &TrainingSet) -> Result<()> {
    let mut body = || -> std::io::Result<()> {
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&DATASET_VERSION.to_le_bytes())?;
        w.write_all(&seed.to_le_bytes())?;
        w.write_all(&(set.n_subcarriers() as u32).to_le_bytes())?;
        w.write_all(&(set.n_links() as u32).to_le_bytes())?;
        w.write_all(&(set.len() as u64).to_le_bytes())?;
        for t in 0..set.len() {
            w.write_all(&set.snr_db(t).to_le_bytes())?;
            put_matrix(&mut w, set.input(t))?;
            put_matrix(&mut w, set.label(t))?;
        }
        w.flush()
    };
    body().map_err(|e| Error::Format(e.to_string()))
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<(u64, TrainingSet)> {
    let mut take = |n: usize| -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        r.read_exact(&mut buf).map_err(|e| Error::Format(e.to_string()))?;
        Ok(buf)
    };
    if take(4)? != DATASET_MAGIC {
        return Err(Error::Format("not an EELD dataset file".into()));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != DATASET_VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let seed = u64::from_le_bytes(take(8)?.try_into().unwrap());
    let n = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let links = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let floats = |bytes: Vec<u8>| -> Vec<f64> {
        bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let matrix = |take: &mut dyn FnMut(usize) -> Result<Vec<u8>>| -> Result<ComplexMatrix> {
        let v = floats(take(8 * 2 * n * links)?);
        let flat: Vec<C64> = v.chunks_exact(2 * n).flat_map(unstack_real).collect();
        Ok(matrix_from_columns(n, links, &flat))
    };
    let mut set = TrainingSet::new(n, links);
    for _ in 0..count {
        let snr = f64::from_le_bytes(take(8)?.try_into().unwrap());
        let input = matrix(&mut take)?;
        let label = matrix(&mut take)?;
        set.push(input, label, snr)?;
    }
    Ok((seed, set))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn results_csv(cells: &[CellSummary]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            c.snr_db, c.estimator, c.evm, c.n_paths, c.cp_len, c.mean_nmse, c.stderr, c.n_trials
        );
    }
    out
}

pub fn trials_csv(result: &SweepResult) -> String {
    let mut out = String::from("snr_db,trial,estimator,nmse\n");
    for r in &result.records {
        for (kind, v) in &r.nmse {
            let _ = writeln!(out, "{},{},{},{}", r.snr_db, r.trial, kind, v);
        }
    }
    out
}

#[derive(Serialize)]
struct Sidecar<'a> {
    code_version: &'a str,
    config: &'a SweepConfig,
    calibration: Option<Calibration>,
    files: [&'a str; 2],
    n_cells: usize,
    n_records: usize,
}

/// Writes `results.csv`, `trials.csv` and `results.json` into `dir`.
/// Contents depend only on the config and seed.
pub fn write_results(dir: &Path, result: &SweepResult) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join(RESULTS_CSV), &results_csv(&result.cells))?;
    write_text(&dir.join(TRIALS_CSV), &trials_csv(result))?;
    let sidecar = Sidecar {
        code_version: env!("CARGO_PKG_VERSION"),
        config: &result.config,
        calibration: result.calibration,
        files: [RESULTS_CSV, TRIALS_CSV],
        n_cells: result.cells.len(),
        n_records: result.records.len(),
    };
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Format(e.to_string()))?;
    write_text(&dir.join(RESULTS_JSON), &(json + "\n"))
}

pub fn read_results_csv(path: &Path) -> Result<Vec<CellSummary>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(RESULTS_HEADER) {
        return Err(Error::Format(format!("{}: unexpected header", path.display())));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::Format(format!("{}: malformed row {}", path.display(), i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
            Ok(CellSummary {
                snr_db: num(f[0])?,
                estimator: f[1].parse().map_err(|_| bad())?,
                evm: num(f[2])?,
                n_paths: int(f[3])?,
                cp_len: int(f[4])?,
                mean_nmse: num(f[5])?,
                stderr: num(f[6])?,
                n_trials: int(f[7])?,
            })
        })
        .collect()
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Text table of NMSE in dB per SNR, with the gain over `ls_only` when it
/// is present.
pub fn render_report(cells: &[CellSummary]) -> String {
    let mut snrs: Vec<f64> = Vec::new();
    let mut kinds: Vec<EstimatorKind> = Vec::new();
    for c in cells {
        if !snrs.contains(&c.snr_db) {
            snrs.push(c.snr_db);
        }
        if !kinds.contains(&c.estimator) {
            kinds.push(c.estimator);
        }
    }
    let find = |snr: f64, k: EstimatorKind| cells.iter().find(|c| c.snr_db == snr && c.estimator == k);
    let has_ls = kinds.contains(&EstimatorKind::LsOnly);
    let mut out = String::new();
    if let Some(c) = cells.first() {
        let _ = writeln!(out, "EVM {}%  L {}  L_CP {}  trials {}", c.evm, c.n_paths, c.cp_len, c.n_trials);
    }
    let _ = write!(out, "{:>8}", "SNR dB");
    for k in &kinds {
        let _ = write!(out, " {:>22}", format!("{k} NMSE dB"));
    }
    if has_ls {
        for k in kinds.iter().filter(|k| **k != EstimatorKind::LsOnly) {
            let _ = write!(out, " {:>16}", format!("{k} gain dB"));
        }
    }
    out.push('\n');
    for &snr in &snrs {
        let _ = write!(out, "{snr:>8.1}");
        for &k in &kinds {
            let cell = match find(snr, k) {
                Some(c) => format!("{:.2} (se {:.2e})", db(c.mean_nmse), c.stderr),
                None => "-".into(),
            };
            let _ = write!(out, " {cell:>22}");
        }
        if has_ls {
            for &k in kinds.iter().filter(|k| **k != EstimatorKind::LsOnly) {
                let gain = match (find(snr, EstimatorKind::LsOnly), find(snr, k)) {
                    (Some(ls), Some(c)) => format!("{:.2}", db(ls.mean_nmse) - db(c.mean_nmse)),
                    _ => "-".into(),
                };
                let _ = write!(out, " {gain:>16}");
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{complex_gaussian, SeededRng};

    fn small_set(count: usize) -> TrainingSet {
        let mut rng = SeededRng::new(5);
        let mut set = TrainingSet::new(4, 3);
        for t in 0..count {
            let v = complex_gaussian(&mut rng, 24, 1.0).unwrap();
            set.push(
                matrix_from_columns(4, 3, &v[..12]),
                matrix_from_columns(4, 3, &v[12..]),
                t as f64,
            )
            .unwrap();
        }
        set
    }

    #[test]
    fn dataset_round_trip() {
        let set = small_set(5);
        let mut buf = Vec::new();
        write_dataset(&mut buf, 77, &set).unwrap();
        assert_eq!(buf.len(), 32 + 5 * 8 * (1 + 2 * 3 * 8));
        let (seed, back) = read_dataset(buf.as_slice()).unwrap();
        assert_eq!(seed, 77);
        assert_eq!(back.len(), 5);
        for t in 0..5 {
            assert_eq!(back.input(t), set.input(t));
            assert_eq!(back.label(t), set.label(t));
            assert_eq!(back.snr_db(t), set.snr_db(t));
        }
        assert!(matches!(read_dataset(&buf[..40]), Err(Error::Format(_))));
    }

    #[test]
    fn empty_dataset_round_trip() {
        let mut buf = Vec::new();
        write_dataset(&mut buf, 1, &small_set(0)).unwrap();
        let (_, back) = read_dataset(buf.as_slice()).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn results_csv_round_trip() {
        let cells = vec![CellSummary {
            snr_db: 12.5,
            estimator: EstimatorKind::ElmNoStd,
            evm: 55.0,
            n_paths: 12,
            cp_len: 8,
            mean_nmse: 0.012345678901234567,
            stderr: 1.5e-5,
            n_trials: 500,
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        std::fs::write(&path, results_csv(&cells)).unwrap();
        assert_eq!(read_results_csv(&path).unwrap(), cells);
        let report = render_report(&cells);
        assert!(report.contains("elm_no_std"));
    }
}
