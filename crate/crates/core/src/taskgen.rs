//! Two-task Yin-Yang dataset generator.
//!
//! Task 1 lives in the unit square with 4-dimensional features
//! `(x, y, 1-x, 1-y)`. Task 2 reuses the same symbol geometry, computes the
//! complements in the unit square, then shifts every component by +1, so its
//! features lie in `[1, 2]` and complement pairs sum to 3.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write as _};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rngutil::{derive_seed, rng_from};
use crate::{Error, Result};

/// Class labels. The numeric encoding is part of the CSV format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Yin,
    Yang,
    Dot,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Yin, Label::Yang, Label::Dot];

    pub fn as_u8(self) -> u8 {
        match self {
            Label::Yin => 0,
            Label::Yang => 1,
            Label::Dot => 2,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::Yin),
            1 => Ok(Label::Yang),
            2 => Ok(Label::Dot),
            other => Err(Error::InvalidInput(format!("unknown class label {other}"))),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Label::Yin => "Yin",
            Label::Yang => "Yang",
            Label::Dot => "Dot",
        };
        f.write_str(name)
    }
}

/// Task identifier. Task 2 is Task 1 translated by +1 in every feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskId {
    Task1,
    Task2,
}

impl TaskId {
    pub fn index(self) -> usize {
        match self {
            TaskId::Task1 => 1,
            TaskId::Task2 => 2,
        }
    }

    pub fn from_index(v: usize) -> Result<Self> {
        match v {
            1 => Ok(TaskId::Task1),
            2 => Ok(TaskId::Task2),
            other => Err(Error::InvalidInput(format!("unknown task id {other}"))),
        }
    }

    /// Constant offset applied to all features relative to the unit square.
    fn offset(self) -> f64 {
        match self {
            TaskId::Task1 => 0.0,
            TaskId::Task2 => 1.0,
        }
    }
}

/// Geometry of the symbol in dimensionless coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YinYangGeometry {
    pub r_big: f64,
    pub r_small: f64,
    pub center: [f64; 2],
    pub left_dot: [f64; 2],
    pub right_dot: [f64; 2],
}

impl Default for YinYangGeometry {
    fn default() -> Self {
        YinYangGeometry {
            r_big: 0.5,
            r_small: 0.1,
            center: [0.5, 0.5],
            left_dot: [0.25, 0.5],
            right_dot: [0.75, 0.5],
        }
    }
}

impl YinYangGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_small > 0.0 && self.r_small < self.r_big / 2.0) {
            return Err(Error::InvalidInput(format!(
                "r_small {} must lie in (0, r_big/2 = {})",
                self.r_small,
                self.r_big / 2.0
            )));
        }
        for dot in [self.left_dot, self.right_dot] {
            if dist(dot, self.center) >= self.r_big {
                return Err(Error::InvalidInput(
                    "dot centers must lie inside the big circle".into(),
                ));
            }
        }
        let mirrored_x = 2.0 * self.center[0] - self.right_dot[0];
        if (self.left_dot[0] - mirrored_x).abs() > 1e-12
            || (self.left_dot[1] - self.right_dot[1]).abs() > 1e-12
        {
            return Err(Error::InvalidInput(
                "dot centers must be mirror images about the vertical center line".into(),
            ));
        }
        Ok(())
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        dist([x, y], self.center) <= self.r_big
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Assigns the class of an in-circle point.
///
/// Points strictly inside either small disk are dots. Otherwise the symbol
/// splits along the S-curve built from two half-circles of radius `r_big/2`:
/// the half-disk hanging below the left dot joins the upper region, the
/// half-disk rising above the right dot joins the lower one.
///
/// The caller must ensure `(x, y)` lies inside the big circle.
pub fn classify_point(x: f64, y: f64, geom: &YinYangGeometry) -> Label {
    debug_assert!(geom.contains(x, y), "point outside the symbol");
    let d_right = dist([x, y], geom.right_dot);
    let d_left = dist([x, y], geom.left_dot);
    if d_right < geom.r_small || d_left < geom.r_small {
        return Label::Dot;
    }
    let half = geom.r_big / 2.0;
    let criterion1 = d_right <= geom.r_small;
    let criterion2 = d_left > geom.r_small && d_left <= half;
    let criterion3 = y > geom.center[1] && d_right > half;
    if criterion1 || criterion2 || criterion3 {
        Label::Yang
    } else {
        Label::Yin
    }
}

/// One labeled point. `x` and `y` are stored in the task's own coordinate
/// domain (already offset for Task 2) and always equal the first two features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub task: TaskId,
    pub x: f64,
    pub y: f64,
    pub features: [f64; 4],
    pub label: Label,
}

/// Expands task-domain coordinates into the 4-dimensional feature vector.
///
/// Complements are taken in the unit square; for Task 2 the incoming
/// coordinates already carry the +1 offset, so the pair sums become 3.
pub fn featurize(task: TaskId, x: f64, y: f64) -> [f64; 4] {
    let off = task.offset();
    [x, y, 1.0 - (x - off) + off, 1.0 - (y - off) + off]
}

/// Draws `n` balanced samples for one task.
///
/// Rejection sampling in the unit square with the per-sample goal class
/// cycling Yin, Yang, Dot keeps class counts within one of each other.
pub fn sample_task(task: TaskId, n: usize, seed: u64, geom: &YinYangGeometry) -> Vec<Sample> {
    let mut rng = rng_from(seed);
    let span = 2.0 * geom.r_big;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let goal = Label::ALL[i % 3];
        let (x, y, label) = loop {
            let x = rng.gen::<f64>() * span;
            let y = rng.gen::<f64>() * span;
            if !geom.contains(x, y) {
                continue;
            }
            let label = classify_point(x, y, geom);
            if label == goal {
                break (x, y, label);
            }
        };
        let off = task.offset();
        let (x, y) = (x + off, y + off);
        out.push(Sample {
            task,
            x,
            y,
            features: featurize(task, x, y),
            label,
        });
    }
    out
}

/// Train and test splits for both tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTaskDataset {
    pub seed: u64,
    pub train_task1: Vec<Sample>,
    pub test_task1: Vec<Sample>,
    pub train_task2: Vec<Sample>,
    pub test_task2: Vec<Sample>,
}

impl MultiTaskDataset {
    /// Generates all four splits from independent seed streams.
    pub fn generate(seed: u64, n_train: usize, n_test: usize, geom: &YinYangGeometry) -> Result<Self> {
        geom.validate()?;
        let split = |label: &str, task: TaskId, n: usize| {
            sample_task(task, n, derive_seed(seed, label, task.index() as u64), geom)
        };
        Ok(MultiTaskDataset {
            seed,
            train_task1: split("data/train", TaskId::Task1, n_train),
            test_task1: split("data/test", TaskId::Task1, n_test),
            train_task2: split("data/train", TaskId::Task2, n_train),
            test_task2: split("data/test", TaskId::Task2, n_test),
        })
    }

    pub fn train(&self, task: TaskId) -> &[Sample] {
        match task {
            TaskId::Task1 => &self.train_task1,
            TaskId::Task2 => &self.train_task2,
        }
    }

    pub fn test(&self, task: TaskId) -> &[Sample] {
        match task {
            TaskId::Task1 => &self.test_task1,
            TaskId::Task2 => &self.test_task2,
        }
    }

    /// Writes `train.csv` and `test.csv` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut train = Vec::with_capacity(self.train_task1.len() + self.train_task2.len());
        train.extend_from_slice(&self.train_task1);
        train.extend_from_slice(&self.train_task2);
        write_samples_csv(&dir.join("train.csv"), &train)?;
        let mut test = Vec::with_capacity(self.test_task1.len() + self.test_task2.len());
        test.extend_from_slice(&self.test_task1);
        test.extend_from_slice(&self.test_task2);
        write_samples_csv(&dir.join("test.csv"), &test)
    }

    /// Reads splits written by [`MultiTaskDataset::save`]. The stored seed is
    /// not recoverable from CSV, so the caller supplies it for bookkeeping.
    pub fn load(dir: &Path, seed: u64) -> Result<Self> {
        let partition = |samples: Vec<Sample>| {
            let (t2, t1): (Vec<_>, Vec<_>) =
                samples.into_iter().partition(|s| s.task == TaskId::Task2);
            (t1, t2)
        };
        let (train_task1, train_task2) = partition(read_samples_csv(&dir.join("train.csv"))?);
        let (test_task1, test_task2) = partition(read_samples_csv(&dir.join("test.csv"))?);
        Ok(MultiTaskDataset {
            seed,
            train_task1,
            test_task1,
            train_task2,
            test_task2,
        })
    }
}

pub const SAMPLES_CSV_HEADER: &str = "task,x,y,f0,f1,f2,f3,label";

pub fn write_samples_csv(path: &Path, samples: &[Sample]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "{SAMPLES_CSV_HEADER}")?;
        for s in samples {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                s.task.index(),
                s.x,
                s.y,
                s.features[0],
                s.features[1],
                s.features[2],
                s.features[3],
                s.label.as_u8()
            )?;
        }
        w.flush()
    };
    emit().map_err(|e| Error::io(path, e))
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<Sample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        if idx == 0 {
            if line.trim() != SAMPLES_CSV_HEADER {
                return Err(Error::parse(path, lineno, "unexpected header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::parse(path, lineno, "expected 8 columns"));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::parse(path, lineno, format!("column {i}: {e}")))
        };
        let task = TaskId::from_index(
            fields[0]
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::parse(path, lineno, format!("task: {e}")))?,
        )?;
        let sample = Sample {
            task,
            x: num(1)?,
            y: num(2)?,
            features: [num(3)?, num(4)?, num(5)?, num(6)?],
            label: Label::from_u8(
                fields[7]
                    .trim()
                    .parse::<u8>()
                    .map_err(|e| Error::parse(path, lineno, format!("label: {e}")))?,
            )?,
        };
        validate_sample(&sample).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        out.push(sample);
    }
    Ok(out)
}

/// Checks the structural feature invariants of one sample.
pub fn validate_sample(s: &Sample) -> Result<()> {
    let pair_sum = 1.0 + 2.0 * s.task.offset();
    let f = &s.features;
    if (f[0] + f[2] - pair_sum).abs() > 1e-12 || (f[1] + f[3] - pair_sum).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "complement pairs must sum to {pair_sum}"
        )));
    }
    if (f[0] - s.x).abs() > 1e-12 || (f[1] - s.y).abs() > 1e-12 {
        return Err(Error::InvalidInput(
            "first two features must equal the coordinates".into(),
        ));
    }
    let off = s.task.offset();
    if f.iter().any(|v| *v < off - 1e-12 || *v > off + 1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!(
            "features out of range for {:?}",
            s.task
        )));
    }
    Ok(())
}
