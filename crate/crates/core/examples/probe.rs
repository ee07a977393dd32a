//! Scratch probe: failed-mapping damage at 40% with window-pinned faults.

use xbar_core::chipsim::{inject_faults, new_chip, FaultKind, NoiseConfig};
use xbar_core::ensemble::{deploy_solution, DeployConfig};
use xbar_core::experiments::{cmd_train, ExperimentConfig};
use xbar_core::rngutil::derive_seed;
use xbar_core::taskgen::TaskId;

fn main() {
    let dir = tempfile::TempDir::new().unwrap();
    let mut config = ExperimentConfig::default();
    config.out_dir = dir.path().join("out");
    let arts = cmd_train(&config).unwrap();
    let solution = arts.solution;
    let data = config.dataset().unwrap();
    let baseline_mean = (solution.baseline_accuracy[0] + solution.baseline_accuracy[1]) / 2.0;

    for (label, base) in [("sweep", 160u64), ("alt", 1000)] {
        let mut failed = Vec::new();
        for rep in 0..20u64 {
            let t = base + rep;
            let mut chip =
                new_chip(NoiseConfig::ideal(derive_seed(config.seed, "defect/chip", t)), true)
                    .unwrap();
            inject_faults(
                &mut chip,
                0.40,
                FaultKind::StuckHigh,
                derive_seed(config.seed, "defect/faults", t),
            )
            .unwrap();
            let mut cfg = DeployConfig::new(1);
            cfg.force = true;
            let (ens, report) = deploy_solution(&mut chip, &solution.ternary, &cfg).unwrap();
            let acc1 = ens.evaluate(&mut chip, data.test(TaskId::Task1), true).unwrap();
            let acc2 = ens.evaluate(&mut chip, data.test(TaskId::Task2), true).unwrap();
            if !report.mapping.success {
                failed.push((acc1 + acc2) / 2.0);
            }
        }
        let fm = failed.iter().sum::<f64>() / failed.len() as f64;
        let lo = failed.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = failed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!(
            "{label}: {} failures, failed-mean {fm:.4} (range {lo:.4}..{hi:.4}) vs baseline {baseline_mean:.4}",
            failed.len()
        );
    }
}
