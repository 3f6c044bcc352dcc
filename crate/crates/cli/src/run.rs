//! Experiment dispatch and the end-to-end run.

use std::path::{Path, PathBuf};

use lzs_core::experiments::DoublePassageDrive;
use lzs_core::experiments::{
    add_readout_columns, run_fid, run_lz_dynamics, run_pt_sweep, run_stokes_validate,
    run_stueckelberg, ExperimentResult, FidSpec, LzDynamicsSpec, PtSweepSpec, StokesSpec,
    StueckelbergMode, StueckelbergSpec,
};

use crate::config::{parse_config, Plan, RunConfig};
use crate::error::CliError;
use crate::output::{render_csv, render_sidecar, sidecar_path, write_atomic};

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

#[derive(Debug)]
pub struct Outcome {
    pub csv: PathBuf,
    pub sidecar: PathBuf,
    pub result: ExperimentResult,
}

/// Independent readout stream per probability column.
fn readout_seed(master: u64, column: usize) -> u64 {
    master ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(column as u64 + 1)
}

/// Run the configured experiment on the current rayon pool.
pub fn execute(cfg: &RunConfig) -> Result<ExperimentResult, CliError> {
    let gap = || cfg.delta.expect("validated config carries a gap");
    let mut result = match &cfg.plan {
        Plan::LzDynamics {
            amplitude,
            frequencies,
            cycles,
            samples_per_cycle,
        } => run_lz_dynamics(&LzDynamicsSpec {
            delta: gap(),
            amplitude: *amplitude,
            epsilon0: cfg.epsilon0,
            frequencies: frequencies.clone(),
            cycles: *cycles,
            samples_per_cycle: *samples_per_cycle,
            stepper: cfg.stepper.clone(),
        })?,
        Plan::PtSweep { velocities, window } => {
            let full = run_pt_sweep(&PtSweepSpec {
                delta: gap(),
                velocities: velocities.clone(),
                window: *window,
                stepper: cfg.stepper.clone(),
            })?;
            // fixed schema; the sweep rate follows from δ and Δ
            let keep = ["p_sim", "p_analytic", "rel_dev"];
            let mut r = ExperimentResult::new(&full.sweep_name, &full.x_label, &keep);
            for x in full.xs() {
                let k = r.rows().len();
                let vals = keep.iter().map(|c| full.column(c).unwrap()[k]).collect();
                r.push_row(x, vals)?;
            }
            r.metadata = full.metadata;
            r.summary = full.summary;
            r
        }
        Plan::Lzs {
            drive,
            epsilon0,
            window,
            target_p_t,
        } => run_stueckelberg(&StueckelbergSpec {
            delta: cfg.delta,
            target_p_t: *target_p_t,
            drive: drive.clone(),
            window: *window,
            mode: StueckelbergMode::Detuning {
                epsilon0: epsilon0.clone(),
            },
            bath: cfg.bath,
            ensemble: cfg.ensemble_spec(),
            stepper: cfg.stepper.clone(),
        })?,
        Plan::VisibilityDecay {
            velocity,
            taus,
            points,
            fringes,
            window,
            target_p_t,
        } => run_stueckelberg(&StueckelbergSpec {
            delta: cfg.delta,
            target_p_t: *target_p_t,
            drive: DoublePassageDrive::Triangle {
                velocity: *velocity,
                tau: taus[0],
            },
            window: *window,
            mode: StueckelbergMode::Duration {
                taus: taus.clone(),
                points: *points,
                fringes: *fringes,
            },
            bath: cfg.bath,
            ensemble: cfg.ensemble_spec(),
            stepper: cfg.stepper.clone(),
        })?,
        Plan::Fid { times, noise } => run_fid(&FidSpec {
            bath: cfg.bath,
            times: times.clone(),
            ensemble: cfg.ensemble_spec(),
            noise: *noise,
            seed: cfg.seed,
        })?,
        Plan::StokesValidate {
            adiabaticities,
            window,
            phase_points,
        } => run_stokes_validate(&StokesSpec {
            adiabaticities: adiabaticities.clone(),
            delta: gap(),
            window: *window,
            phase_points: *phase_points,
            stepper: cfg.stepper.clone(),
        })?,
    };

    if let Some(model) = &cfg.readout {
        let measured: Vec<String> = match cfg.plan {
            Plan::LzDynamics { .. } => result
                .columns()
                .iter()
                .filter(|c| c.starts_with("p0_"))
                .cloned()
                .collect(),
            Plan::PtSweep { .. } => vec!["p_sim".into()],
            Plan::Lzs { .. } => vec!["p".into()],
            _ => unreachable!("readout is rejected for this experiment at parse time"),
        };
        for (i, column) in measured.iter().enumerate() {
            add_readout_columns(&mut result, column, model, readout_seed(cfg.seed, i))?;
        }
    }
    Ok(result)
}

/// Execute with the requested parallelism, then write the CSV and its
/// sidecar.
pub fn run(cfg: &RunConfig, threads: Option<usize>) -> Result<Outcome, CliError> {
    let result = match threads {
        None => execute(cfg)?,
        Some(0) => return Err(CliError::invalid(None, "threads >= 1 violated (got 0)")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::invalid(None, format!("cannot start {n} worker threads: {e}")))?
            .install(|| execute(cfg))?,
    };
    let csv = cfg.output.clone();
    let sidecar = sidecar_path(&csv);
    write_atomic(&csv, &render_csv(&result, &cfg.reproduction_line()))?;
    write_atomic(&sidecar, &render_sidecar(cfg, &result))?;
    log::info!("wrote {} and {}", csv.display(), sidecar.display());
    Ok(Outcome {
        csv,
        sidecar,
        result,
    })
}

/// Read, parse, apply overrides and run.
pub fn run_file(path: &Path, overrides: &Overrides) -> Result<Outcome, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &overrides.out {
        cfg.output = out.clone();
    }
    run(&cfg, overrides.threads)
}
