//! Training command: the full software pipeline from dataset to a selected
//! ternary solution, repeated over independent seeds.
//!
//! Each seed trains the network twice (plain SGD and the consolidation
//! method), adapts the consolidated network for thresholding, and scores the
//! resulting ternary candidate. Candidates whose quantization collapses a
//! layer are recorded but excluded from selection. The winner is written out
//! as a solution file the hardware commands can deploy.

use serde::{Deserialize, Serialize};

use super::csvutil::mean;
use super::parallel::try_map_indexed;
use super::ExperimentConfig;
use crate::jsonio::save_json;
use crate::matrix::Mat;
use crate::neuralnet::{
    adapt_for_ternary, linear_baseline, save_solution, ternarize, train_continual,
    write_history_csv, EwcState, Method, SolutionFile, TernarySolution, SOLUTION_FILE_VERSION,
};
use crate::rngutil::derive_seed;
use crate::taskgen::TaskId;
use crate::{Error, Result};

/// What one training seed produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub index: usize,
    pub run_seed: u64,
    /// Final (task1, task2) test accuracy after sequential SGD.
    pub sgd_final: [f64; 2],
    /// Final (task1, task2) test accuracy with consolidation.
    pub ewc_final: [f64; 2],
    /// Ternary candidate accuracy, if quantization kept every layer alive.
    pub candidate_accuracy: Option<[f64; 2]>,
    /// Whether the candidate beat the linear baseline on both tasks.
    pub qualifies: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub config_hash: String,
    /// Linear reference accuracy on (task1, task2).
    pub baseline: [f64; 2],
    pub sgd_mean_final: [f64; 2],
    pub ewc_mean_final: [f64; 2],
    pub seeds: Vec<SeedOutcome>,
    /// Number of candidates beating the baseline on both tasks.
    pub qualifying: usize,
    /// Seed index whose candidate was selected.
    pub selected_index: usize,
    pub selected_accuracy: [f64; 2],
    pub selected_mean: f64,
}

#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub summary: TrainSummary,
    pub solution: SolutionFile,
}

struct CandidateBundle {
    ternary: TernarySolution,
    latent_weights: Vec<Mat>,
    ewc: EwcState,
}

/// Run the whole training pipeline described by `config`.
///
/// Writes one history CSV per seed, `solution.json` for the selected
/// candidate, and `summary.json` under the train directory. Fails with
/// [`Error::NoQualifyingSolution`] when no seed beats the baseline.
pub fn cmd_train(config: &ExperimentConfig) -> Result<TrainArtifacts> {
    config.validate()?;
    let data = config.dataset()?;
    let hp = &config.hyperparams;

    let baseline = [
        linear_baseline(data.train(TaskId::Task1), data.test(TaskId::Task1))?,
        linear_baseline(data.train(TaskId::Task2), data.test(TaskId::Task2))?,
    ];

    let train_dir = config.train_dir();
    std::fs::create_dir_all(&train_dir).map_err(|e| Error::io(&train_dir, e))?;

    let per_seed = try_map_indexed(config.train_seeds, |i| {
        let run_seed = derive_seed(config.seed, "train/run", i as u64);
        let sgd = train_continual(run_seed, &data, Method::Sgd, hp)?;
        let ewc = train_continual(run_seed, &data, Method::Ewc, hp)?;

        let mut records = sgd.history.clone();
        records.extend(ewc.history.iter().cloned());
        write_history_csv(&train_dir.join(format!("history_seed{i:02}.csv")), &records)?;

        let final_of = |h: &[crate::neuralnet::EpochRecord]| {
            let last = h.last().expect("history is nonempty");
            [last.task1_acc, last.task2_acc]
        };

        let state = ewc.ewc.clone().ok_or_else(|| {
            Error::InvalidInput("consolidation run returned no captured state".into())
        })?;
        let latent = adapt_for_ternary(&ewc.net, &data, &state, hp, run_seed)?;
        let candidate = match ternarize(&latent) {
            Ok(t) => Some(t.with_accuracy(&data)?),
            Err(Error::DegenerateLayer { .. }) => None,
            Err(e) => return Err(e),
        };

        let outcome = SeedOutcome {
            index: i,
            run_seed,
            sgd_final: final_of(&sgd.history),
            ewc_final: final_of(&ewc.history),
            candidate_accuracy: candidate.as_ref().map(|c| c.accuracy),
            qualifies: candidate.as_ref().map_or(false, |c| {
                c.accuracy[0] > baseline[0] && c.accuracy[1] > baseline[1]
            }),
        };
        let bundle = candidate.map(|ternary| CandidateBundle {
            ternary,
            latent_weights: latent.weights,
            ewc: state,
        });
        Ok((outcome, bundle))
    })?;

    let mut seeds = Vec::with_capacity(per_seed.len());
    let mut bundles: Vec<(usize, CandidateBundle)> = Vec::new();
    for (outcome, bundle) in per_seed {
        if let Some(b) = bundle {
            bundles.push((outcome.index, b));
        }
        seeds.push(outcome);
    }

    let candidates: Vec<TernarySolution> =
        bundles.iter().map(|(_, b)| b.ternary.clone()).collect();
    let selected = crate::neuralnet::select_solution(&candidates, baseline)?;
    let (selected_index, winner) = bundles
        .iter()
        .find(|(_, b)| b.ternary.accuracy == selected.accuracy)
        .map(|(i, b)| (*i, b))
        .expect("selected candidate comes from the list");

    let solution = SolutionFile {
        version: SOLUTION_FILE_VERSION,
        seed: seeds[selected_index].run_seed,
        hyperparams: hp.clone(),
        baseline_accuracy: baseline,
        float_weights: winner.latent_weights.clone(),
        ternary: selected.clone(),
        ewc: winner.ewc.clone(),
    };
    save_solution(&config.solution_path(), &solution)?;

    let mean_of = |pick: fn(&SeedOutcome) -> [f64; 2]| {
        let t1: Vec<f64> = seeds.iter().map(|s| pick(s)[0]).collect();
        let t2: Vec<f64> = seeds.iter().map(|s| pick(s)[1]).collect();
        [mean(&t1), mean(&t2)]
    };
    let summary = TrainSummary {
        config_hash: config.config_hash(),
        baseline,
        sgd_mean_final: mean_of(|s| s.sgd_final),
        ewc_mean_final: mean_of(|s| s.ewc_final),
        qualifying: seeds.iter().filter(|s| s.qualifies).count(),
        selected_index,
        selected_accuracy: selected.accuracy,
        selected_mean: (selected.accuracy[0] + selected.accuracy[1]) / 2.0,
        seeds,
    };
    save_json(&train_dir.join("summary.json"), &summary)?;

    Ok(TrainArtifacts { summary, solution })
}
