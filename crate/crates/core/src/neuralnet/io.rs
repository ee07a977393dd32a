//! Solution files and training-history CSV.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::jsonio::{check_version, load_json, save_json};
use crate::matrix::Mat;
use crate::{Error, Result};

use super::grad::EwcState;
use super::quantize::TernarySolution;
use super::train::{EpochRecord, Hyperparams, Method};
use super::Network;

pub const SOLUTION_FILE_VERSION: u32 = 1;

/// Everything needed to redeploy a trained solution: the selected seed's
/// float weights, the ternary solution derived from them, the consolidation
/// state, and the context it was produced in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionFile {
    pub version: u32,
    pub seed: u64,
    pub hyperparams: Hyperparams,
    /// Linear reference accuracy on (task1, task2) for the same dataset.
    pub baseline_accuracy: [f64; 2],
    pub float_weights: Vec<Mat>,
    pub ternary: TernarySolution,
    pub ewc: EwcState,
}

impl SolutionFile {
    pub fn validate(&self) -> Result<()> {
        Network::from_weights(self.float_weights.clone())?;
        self.ternary.validate()?;
        self.ewc.validate()?;
        self.hyperparams.validate()
    }
}

pub fn save_solution(path: &Path, solution: &SolutionFile) -> Result<()> {
    save_json(path, solution)
}

pub fn load_solution(path: &Path) -> Result<SolutionFile> {
    let solution: SolutionFile = load_json(path)?;
    check_version(SOLUTION_FILE_VERSION, solution.version)?;
    solution.validate()?;
    Ok(solution)
}

pub const HISTORY_CSV_HEADER: &str = "epoch,method,task1_acc,task2_acc,loss";

pub fn write_history_csv(path: &Path, records: &[EpochRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "{HISTORY_CSV_HEADER}")?;
        for r in records {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.epoch,
                r.method.tag(),
                r.task1_acc,
                r.task2_acc,
                r.loss
            )?;
        }
        w.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}

pub fn read_history_csv(path: &Path) -> Result<Vec<EpochRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        if idx == 0 {
            if line.trim() != HISTORY_CSV_HEADER {
                return Err(Error::parse(path, lineno, "unexpected header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::parse(path, lineno, "expected 5 columns"));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::parse(path, lineno, format!("column {i}: {e}")))
        };
        out.push(EpochRecord {
            epoch: fields[0]
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::parse(path, lineno, format!("epoch: {e}")))?,
            method: Method::from_tag(fields[1].trim())
                .map_err(|e| Error::parse(path, lineno, e.to_string()))?,
            task1_acc: num(2)?,
            task2_acc: num(3)?,
            loss: num(4)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::{ternarize, train_continual};
    use crate::taskgen::{MultiTaskDataset, YinYangGeometry};

    fn small_solution() -> SolutionFile {
        let data = MultiTaskDataset::generate(31, 150, 60, &YinYangGeometry::default()).unwrap();
        let hp = Hyperparams {
            epochs_per_task: 2,
            ..Hyperparams::default()
        };
        let out = train_continual(9, &data, Method::Ewc, &hp).unwrap();
        let ternary = ternarize(&out.net).unwrap().with_accuracy(&data).unwrap();
        SolutionFile {
            version: SOLUTION_FILE_VERSION,
            seed: 9,
            hyperparams: hp,
            baseline_accuracy: [0.6, 0.6],
            float_weights: out.net.weights.clone(),
            ternary,
            ewc: out.ewc.unwrap(),
        }
    }

    #[test]
    fn solution_json_round_trips() {
        let sol = small_solution();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("solution.json");
        save_solution(&path, &sol).unwrap();
        let back = load_solution(&path).unwrap();
        assert_eq!(back.seed, sol.seed);
        assert_eq!(back.float_weights, sol.float_weights);
        assert_eq!(back.ternary, sol.ternary);
        assert_eq!(back.ewc, sol.ewc);
        assert_eq!(back.baseline_accuracy, sol.baseline_accuracy);
    }

    #[test]
    fn solution_version_is_checked() {
        let mut sol = small_solution();
        sol.version = 99;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("solution.json");
        save_solution(&path, &sol).unwrap();
        match load_solution(&path) {
            Err(Error::VersionMismatch { found: 99, .. }) => {}
            other => panic!("expected version mismatch, got {other:?}"),
        }
    }

    #[test]
    fn history_csv_round_trips() {
        let records = vec![
            EpochRecord {
                epoch: 1,
                method: Method::Sgd,
                task1_acc: 0.5,
                task2_acc: 0.25,
                loss: 1.25,
            },
            EpochRecord {
                epoch: 2,
                method: Method::Ewc,
                task1_acc: 0.75,
                task2_acc: 0.5,
                loss: 0.5,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        write_history_csv(&path, &records).unwrap();
        let back = read_history_csv(&path).unwrap();
        assert_eq!(back, records);
    }
}
