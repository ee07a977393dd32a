//! Command line front end for the crossbar toolkit.
//!
//! Wraps the library pipeline as subcommands: dataset generation, continual
//! training, quantization, chip construction, mapping, inference, the three
//! hardware sweeps, the analog product check, and the report assembler.
//! State files (chip, mapped ensemble, selected solution) and result tables
//! live under the configured output directory, so a complete run is `train`,
//! the sweeps, `validate-vmm`, then `report`.
//!
//! Exit codes: 0 on success, 1 when a run fails or a report check does,
//! 2 on invalid input (bad config, missing state files, malformed values).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use xbar_core::chipsim::{
    inject_faults, load_chip, new_chip, save_chip, FaultKind, NoiseConfig,
};
use xbar_core::ensemble::{deploy_solution, ensemble_stats, load_ensemble, save_ensemble, DeployConfig};
use xbar_core::experiments::{
    cmd_beta_sweep, cmd_defect_sweep, cmd_gnorm_sweep, cmd_report, cmd_train, cmd_vmm_validate,
    load_config, set_thread_count, ExperimentConfig,
};
use xbar_core::neuralnet::{load_solution, save_solution, ternarize, Network, SolutionFile};
use xbar_core::rngutil::derive_seed;
use xbar_core::taskgen::TaskId;
use xbar_core::{Error, Result};

#[derive(Parser)]
#[command(name = "xbar")]
#[command(about = "Ternary networks on simulated memristive crossbars")]
#[command(version)]
struct Cli {
    /// Experiment config as JSON; defaults apply for absent fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for sweeps; single-threaded runs are bit-for-bit
    /// reproducible, parallel ones reproduce the summary statistics.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the two-task dataset and write it under the output directory.
    GenData,
    /// Train across seeds with and without consolidation, then select and
    /// store the ternary solution to deploy.
    Train,
    /// Re-derive the ternary solution from the stored float weights and
    /// refresh its recorded accuracy.
    Quantize,
    /// Create a chip state file, optionally with injected faults.
    Chip {
        /// Fraction of devices per kernel to fault.
        #[arg(long, default_value_t = 0.0)]
        faults: f64,
        /// Fault kind to inject.
        #[arg(long, value_enum, default_value_t = FaultMode::StuckHigh)]
        mode: FaultMode,
        /// Noiseless devices instead of the configured noise model.
        #[arg(long)]
        ideal: bool,
    },
    /// Map the selected solution onto the chip file and program it.
    Map {
        /// Row copies per weight block.
        #[arg(long, default_value_t = 1)]
        beta: usize,
        /// Decoder normalization factor.
        #[arg(long, default_value_t = 1.0)]
        g_norm: f64,
        /// Deploy even if some outputs end up under-replicated.
        #[arg(long)]
        force: bool,
    },
    /// Run test-set inference on the mapped chip and report accuracy.
    Infer {
        /// Evaluate even if the stored mapping is under-replicated.
        #[arg(long)]
        force: bool,
    },
    /// Sweep stuck-device rates on otherwise ideal chips, single copies.
    SweepDefects,
    /// Sweep averaging depth on noisy chips sharing one fault map.
    SweepBeta,
    /// Sweep the decoder normalization factor at fixed depth.
    SweepGnorm,
    /// Compare measured kernel products against closed-form currents.
    ValidateVmm,
    /// Assemble figure tables and the pass/fail summary from run artifacts.
    Report,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FaultMode {
    StuckHigh,
    StuckLow,
    Shorted,
}

impl From<FaultMode> for FaultKind {
    fn from(mode: FaultMode) -> FaultKind {
        match mode {
            FaultMode::StuckHigh => FaultKind::StuckHigh,
            FaultMode::StuckLow => FaultKind::StuckLow,
            FaultMode::Shorted => FaultKind::Shorted,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(inner) = source {
                eprintln!("  caused by: {inner}");
                source = inner.source();
            }
            ExitCode::from(if err.is_invalid_input() { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let mut config = match &cli.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    config.validate()?;
    if let Some(threads) = cli.threads {
        set_thread_count(threads)?;
    }

    match cli.command {
        Command::GenData => gen_data(&config),
        Command::Train => train(&config),
        Command::Quantize => quantize(&config),
        Command::Chip { faults, mode, ideal } => chip(&config, faults, mode.into(), ideal),
        Command::Map { beta, g_norm, force } => map(&config, beta, g_norm, force),
        Command::Infer { force } => infer(&config, force),
        Command::SweepDefects => sweep_defects(&config),
        Command::SweepBeta => sweep_beta(&config),
        Command::SweepGnorm => sweep_gnorm(&config),
        Command::ValidateVmm => validate_vmm(&config),
        Command::Report => report(&config),
    }
}

fn chip_path(config: &ExperimentConfig) -> PathBuf {
    config.out_dir.join("chip.json")
}

fn ensemble_path(config: &ExperimentConfig) -> PathBuf {
    config.out_dir.join("ensemble.json")
}

/// Load a state file another subcommand produces, naming that command when
/// the file is absent.
fn require<T>(
    path: &PathBuf,
    produced_by: &str,
    loader: impl FnOnce(&PathBuf) -> Result<T>,
) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingInput(format!(
            "{} (run `xbar {produced_by}` first)",
            path.display()
        )));
    }
    loader(path)
}

fn gen_data(config: &ExperimentConfig) -> Result<u8> {
    let data = config.dataset()?;
    let dir = config.data_dir();
    data.save(&dir)?;
    println!(
        "dataset seed {}: {} train / {} test samples per task",
        data.seed,
        data.train(TaskId::Task1).len(),
        data.test(TaskId::Task1).len()
    );
    println!("wrote {}", dir.display());
    Ok(0)
}

fn train(config: &ExperimentConfig) -> Result<u8> {
    let artifacts = cmd_train(config)?;
    let s = &artifacts.summary;
    println!(
        "linear baseline        task1 {:.4}  task2 {:.4}",
        s.baseline[0], s.baseline[1]
    );
    println!(
        "plain sgd final mean   task1 {:.4}  task2 {:.4}",
        s.sgd_mean_final[0], s.sgd_mean_final[1]
    );
    println!(
        "consolidated final     task1 {:.4}  task2 {:.4}",
        s.ewc_mean_final[0], s.ewc_mean_final[1]
    );
    println!(
        "{} of {} seeds produced a qualifying ternary candidate",
        s.qualifying,
        s.seeds.len()
    );
    println!(
        "selected seed {}: task1 {:.4}  task2 {:.4}  (mean {:.4})",
        s.selected_index, s.selected_accuracy[0], s.selected_accuracy[1], s.selected_mean
    );
    println!("wrote {}", config.solution_path().display());
    Ok(0)
}

fn quantize(config: &ExperimentConfig) -> Result<u8> {
    let path = config.solution_path();
    let mut solution: SolutionFile = require(&path, "train", |p| load_solution(p))?;
    let data = config.dataset()?;
    let net = Network::from_weights(solution.float_weights.clone())?;
    let fresh = ternarize(&net)?.with_accuracy(&data)?;
    println!(
        "stored ternary accuracy task1 {:.4}  task2 {:.4}",
        solution.ternary.accuracy[0], solution.ternary.accuracy[1]
    );
    println!(
        "re-derived accuracy     task1 {:.4}  task2 {:.4}",
        fresh.accuracy[0], fresh.accuracy[1]
    );
    for (layer, scale) in fresh.scales.iter().enumerate() {
        println!("layer {layer} scale {scale:.6}");
    }
    solution.ternary = fresh;
    save_solution(&path, &solution)?;
    println!("wrote {}", path.display());
    Ok(0)
}

fn chip(config: &ExperimentConfig, faults: f64, mode: FaultKind, ideal: bool) -> Result<u8> {
    let noise = if ideal {
        NoiseConfig::ideal(derive_seed(config.seed, "chip/file", 0))
    } else {
        NoiseConfig {
            seed: derive_seed(config.seed, "chip/file", 0),
            ..config.noise.clone()
        }
    };
    let mut chip = new_chip(noise, ideal)?;
    let geom = chip.geometry().clone();
    println!(
        "chip: {} kernels of {}x{} devices",
        geom.n_kernels, geom.rows_per_kernel, geom.cols_per_kernel
    );
    if faults > 0.0 {
        let report = inject_faults(
            &mut chip,
            faults,
            mode,
            derive_seed(config.seed, "chip/faults", 0),
        )?;
        let total: usize = report.per_kernel.iter().sum();
        println!(
            "injected {total} {:?} devices ({:.1}% per kernel)",
            report.mode,
            100.0 * report.rate
        );
    }
    let path = chip_path(config);
    save_chip(&path, &chip)?;
    println!("wrote {}", path.display());
    Ok(0)
}

fn map(config: &ExperimentConfig, beta: usize, g_norm: f64, force: bool) -> Result<u8> {
    let solution = require(&config.solution_path(), "train", |p| load_solution(p))?;
    let cpath = chip_path(config);
    let mut chip = require(&cpath, "chip", |p| load_chip(p))?;

    let mut deploy = DeployConfig::new(beta);
    deploy.g_norm = g_norm;
    deploy.force = force;
    deploy.options = config.mapping.clone();
    let (net, report) = deploy_solution(&mut chip, &solution.ternary, &deploy)?;

    let stats = ensemble_stats(&report.mapping);
    for layer in &stats.per_layer {
        println!(
            "layer {}: {} pos + {} neg copies on {} devices",
            layer.layer, layer.alpha_pos, layer.alpha_neg, layer.devices
        );
    }
    println!(
        "programmed {} devices, {} stayed out of margin, {} rows demoted",
        report.devices_written,
        report.failed_devices,
        report.demoted_rows
    );
    if !report.mapping.success {
        println!("warning: some outputs hold fewer than {beta} clean copies");
    }

    save_chip(&cpath, &chip)?;
    let epath = ensemble_path(config);
    save_ensemble(&epath, &net)?;
    println!("wrote {}", epath.display());
    Ok(0)
}

fn infer(config: &ExperimentConfig, force: bool) -> Result<u8> {
    let net = require(&ensemble_path(config), "map", |p| load_ensemble(p))?;
    let mut chip = require(&chip_path(config), "chip", |p| load_chip(p))?;
    let data = config.dataset()?;
    let acc1 = net.evaluate(&mut chip, data.test(TaskId::Task1), force)?;
    let acc2 = net.evaluate(&mut chip, data.test(TaskId::Task2), force)?;
    println!("task1 accuracy {acc1:.4}");
    println!("task2 accuracy {acc2:.4}");
    println!("mean {:.4}", (acc1 + acc2) / 2.0);
    Ok(0)
}

fn sweep_defects(config: &ExperimentConfig) -> Result<u8> {
    let solution = require(&config.solution_path(), "train", |p| load_solution(p))?;
    let result = cmd_defect_sweep(config, &solution)?;
    for &rate in &config.fault_rates {
        let rows: Vec<_> = result.rows.iter().filter(|r| r.rate == rate).collect();
        let ok = rows.iter().filter(|r| r.success).count();
        let acc = rows.iter().map(|r| r.mean_acc()).sum::<f64>() / rows.len().max(1) as f64;
        println!(
            "rate {:>5.2}: {ok}/{} fully covered, mean accuracy {acc:.4}",
            rate,
            rows.len()
        );
    }
    println!("wrote {}", config.defect_sweep_path().display());
    Ok(0)
}

fn sweep_beta(config: &ExperimentConfig) -> Result<u8> {
    let solution = require(&config.solution_path(), "train", |p| load_solution(p))?;
    let result = cmd_beta_sweep(config, &solution)?;
    println!(
        "software accuracy {:.4}, ideal chip {:.4}",
        (result.software_acc[0] + result.software_acc[1]) / 2.0,
        result.ideal_reference_mean
    );
    for &beta in &config.beta_grid {
        let accs: Vec<f64> = result
            .rows
            .iter()
            .filter(|r| r.beta == beta)
            .filter_map(|r| r.mean_acc())
            .collect();
        let mean = accs.iter().sum::<f64>() / accs.len().max(1) as f64;
        println!(
            "beta {beta}: {}/{} deployments, mean accuracy {mean:.4}",
            accs.len(),
            config.repeats
        );
    }
    println!("wrote {}", config.beta_sweep_path().display());
    Ok(0)
}

fn sweep_gnorm(config: &ExperimentConfig) -> Result<u8> {
    let solution = require(&config.solution_path(), "train", |p| load_solution(p))?;
    let result = cmd_gnorm_sweep(config, &solution)?;
    for &g in &config.g_norm_grid {
        let noisy: Vec<f64> = result
            .rows
            .iter()
            .filter(|r| {
                r.kind == xbar_core::experiments::RunKind::Noisy && (r.g_norm - g).abs() < 1e-12
            })
            .filter_map(|r| r.mean_acc())
            .collect();
        let mean = noisy.iter().sum::<f64>() / noisy.len().max(1) as f64;
        println!("g_norm {g:>6.4}: noisy mean accuracy {mean:.4}");
    }
    println!("wrote {}", config.gnorm_sweep_path().display());
    Ok(0)
}

fn validate_vmm(config: &ExperimentConfig) -> Result<u8> {
    let artifacts = cmd_vmm_validate(config)?;
    println!(
        "noiseless: max relative deviation {:.3e}",
        artifacts.ideal.max_rel_dev
    );
    let noisy = &artifacts.noisy.summary;
    println!(
        "noisy: slope {:.5}, r2 {:.6}, rmse {:.3} uA, {:.1}% within tail bound",
        noisy.slope,
        noisy.r2,
        noisy.rmse_ua,
        100.0 * noisy.frac_within_tail_bound
    );
    println!("wrote {}", config.vmm_dir().display());
    Ok(0)
}

fn report(config: &ExperimentConfig) -> Result<u8> {
    let outcome = cmd_report(config)?;
    for check in &outcome.checks {
        let tag = if check.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {}: {}", check.name, check.detail);
    }
    for warning in &outcome.warnings {
        println!("[WARN] {warning}");
    }
    for missing in &outcome.missing {
        println!("[MISSING] {missing}");
    }
    for path in &outcome.written {
        println!("wrote {}", path.display());
    }
    if outcome.failed_checks > 0 {
        println!("RESULT: FAIL ({} checks)", outcome.failed_checks);
        Ok(1)
    } else if !outcome.missing.is_empty() {
        println!("RESULT: INCOMPLETE");
        Ok(0)
    } else {
        println!("RESULT: PASS");
        Ok(0)
    }
}
