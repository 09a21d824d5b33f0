//! The four named experiments and the files each one publishes.

use std::path::Path;
use std::time::Instant;

use frl_core::ensemble::{
    excitation_metrics, linear_ensemble_reward, simulate_bloch_ensemble, simulate_linear_ensemble,
};
use frl_core::frl::{run_frl, FrlRun, Problem};
use frl_core::ode::PolicyTable;
use frl_core::oracle::{frl_infinite_demo, sampled_demo, ConvergenceTable};
use serde_json::{json, Map, Value};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::CliError;
use crate::output::{timing, Cell, Csv, Staging};

/// Runs the configured experiment, publishing its files into `out_dir` only
/// if every step succeeds. Returns the summary that was written.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<Value, CliError> {
    let started = Instant::now();
    let mut staging = Staging::new(out_dir)?;
    let mut summary = match config.experiment {
        Experiment::LqrFinite | Experiment::Bloch => run_hierarchies(config, &mut staging)?,
        Experiment::CurseDemo | Experiment::LqrInfinite => run_demo(config, &mut staging)?,
    };
    summary.insert("experiment".into(), json!(config.experiment.name()));
    summary.insert(
        "total_wall_time_s".into(),
        json!(timing(
            started.elapsed().as_secs_f64(),
            config.record_timing
        )),
    );
    let summary = Value::Object(summary);
    let text = serde_json::to_string_pretty(&summary).expect("summary is plain data") + "\n";
    staging.write("summary.json", &text)?;
    staging.publish()?;
    Ok(summary)
}

fn policy_csv(policy: &PolicyTable) -> Csv {
    let header: &[&str] = if policy.control_dim() == 2 {
        &["t", "u", "v"]
    } else {
        &["t", "u"]
    };
    let mut csv = Csv::new(header);
    for (i, t) in policy.grid().nodes().into_iter().enumerate() {
        let mut row = vec![Cell::Float(t)];
        row.extend(policy.control(i).iter().map(|&c| Cell::Float(c)));
        csv.row(&row);
    }
    csv
}

fn value_csv(policy: &PolicyTable, values: &[f64]) -> Csv {
    let mut csv = Csv::new(&["t", "V"]);
    for (t, v) in policy.grid().nodes().into_iter().zip(values) {
        csv.row(&[t.into(), (*v).into()]);
    }
    csv
}

fn hierarchy_csv(run: &FrlRun, record_timing: bool) -> Csv {
    let mut csv = Csv::new(&["N", "iterations", "cost", "projection_error", "wall_time_s"]);
    for r in &run.reports {
        csv.row(&[
            r.order.into(),
            r.iterations.into(),
            r.cost.into(),
            r.projection_error.into(),
            timing(r.wall_time_s, record_timing).into(),
        ]);
    }
    csv
}

fn run_hierarchies(
    config: &ExperimentConfig,
    staging: &mut Staging,
) -> Result<Map<String, Value>, CliError> {
    let frl = config.frl_config()?;
    let beta_count = config.ensemble_block().beta_count;
    if beta_count < 2 {
        return Err(CliError::Config(format!(
            "beta_count {beta_count} is below 2"
        )));
    }
    let run = run_frl(&frl)?;

    staging.write_csv("hierarchy.csv", &hierarchy_csv(&run, config.record_timing))?;
    for r in &run.reports {
        staging.write_csv(&format!("policy_N{}.csv", r.order), &policy_csv(&r.policy))?;
        staging.write_csv(
            &format!("value_profile_N{}.csv", r.order),
            &value_csv(&r.policy, &r.value_profile),
        )?;
    }

    let last = run.final_report();
    let mut summary = Map::new();
    summary.insert(
        "orders".into(),
        json!(run.reports.iter().map(|r| r.order).collect::<Vec<_>>()),
    );
    summary.insert("costs".into(), json!(run.costs()));
    summary.insert(
        "iterations".into(),
        json!(run.reports.iter().map(|r| r.iterations).collect::<Vec<_>>()),
    );
    summary.insert(
        "projection_errors".into(),
        json!(run
            .reports
            .iter()
            .map(|r| r.projection_error)
            .collect::<Vec<_>>()),
    );
    summary.insert("converged".into(), json!(run.converged));
    summary.insert("final_order".into(), json!(last.order));
    summary.insert("final_cost".into(), json!(last.cost));
    summary.insert("beta_count".into(), json!(beta_count));

    match frl.problem {
        Problem::Lqr => {
            let ensemble = simulate_linear_ensemble(&last.policy, beta_count, &frl.grid)?;
            summary.insert(
                "ensemble_reward".into(),
                json!(linear_ensemble_reward(&ensemble, &last.policy)),
            );
        }
        Problem::Bloch { delta } => {
            let ensemble = simulate_bloch_ensemble(&last.policy, delta, beta_count, &frl.grid)?;
            let metrics = excitation_metrics(&ensemble)?;

            let mut fin = Csv::new(&["beta", "x1", "x2", "x3"]);
            for (beta, x) in &metrics.per_beta {
                fin.row(&[(*beta).into(), x[0].into(), x[1].into(), x[2].into()]);
            }
            staging.write_csv("bloch_final.csv", &fin)?;

            let mut mean = Csv::new(&["t", "mean_x1"]);
            for (t, m) in &metrics.mean_x1_vs_time {
                mean.row(&[(*t).into(), (*m).into()]);
            }
            staging.write_csv("bloch_mean_x1.csv", &mean)?;

            // the spin at the nominal field strength
            let center = beta_count / 2;
            let mut path = Csv::new(&["t", "beta", "x1", "x2", "x3"]);
            for (t, x) in frl.grid.nodes().into_iter().zip(&ensemble.states[center]) {
                path.row(&[
                    t.into(),
                    ensemble.beta_samples[center].into(),
                    x[0].into(),
                    x[1].into(),
                    x[2].into(),
                ]);
            }
            staging.write_csv("bloch_trajectory.csv", &path)?;

            let moment_drift = run
                .reports
                .iter()
                .flat_map(|r| {
                    let n0 = r.trajectory.state(0).norm();
                    r.trajectory
                        .states()
                        .iter()
                        .map(move |m| (m.norm() - n0).abs())
                })
                .fold(0.0, f64::max);
            summary.insert("delta".into(), json!(delta));
            summary.insert("mean_x1_final".into(), json!(metrics.mean_x1_final));
            summary.insert("min_x1_final".into(), json!(metrics.min_x1_final));
            summary.insert("sphere_drift".into(), json!(ensemble.max_norm_drift()));
            summary.insert("moment_norm_drift".into(), json!(moment_drift));
        }
    }
    Ok(summary)
}

fn convergence_csv(table: &ConvergenceTable, record_timing: bool) -> Csv {
    let mut csv = Csv::new(&[
        "n_or_N",
        "value_diff",
        "policy_diff",
        "param_count",
        "wall_time_s",
    ]);
    for r in &table.rows {
        csv.row(&[
            r.index.into(),
            r.value_diff.into(),
            r.policy_diff.into(),
            r.param_count.into(),
            timing(r.wall_time_s, record_timing).into(),
        ]);
    }
    csv
}

fn run_demo(
    config: &ExperimentConfig,
    staging: &mut Staging,
) -> Result<Map<String, Value>, CliError> {
    let (range, settings, exact_row0) = config.demo_settings()?;
    let table = match config.experiment {
        Experiment::CurseDemo => {
            sampled_demo(&range, &settings).map_err(CliError::from_validation)?
        }
        _ => frl_infinite_demo(&range, &settings, exact_row0).map_err(CliError::from_validation)?,
    };
    staging.write_csv(
        "convergence.csv",
        &convergence_csv(&table, config.record_timing),
    )?;
    if config.experiment == Experiment::LqrInfinite {
        for e in &table.entries {
            staging.write_csv(&format!("policy_N{}.csv", e.index), &policy_csv(&e.policy))?;
            staging.write_csv(
                &format!("value_profile_N{}.csv", e.index),
                &value_csv(&e.policy, &e.value_profile),
            )?;
        }
    }
    let last = table.rows.last().expect("non-empty range");
    let mut summary = Map::new();
    summary.insert("rho".into(), json!(settings.rho));
    summary.insert("indices".into(), json!(range));
    summary.insert(
        "values".into(),
        json!(table.entries.iter().map(|e| e.value).collect::<Vec<_>>()),
    );
    summary.insert("final_index".into(), json!(last.index));
    summary.insert("final_value_diff".into(), json!(last.value_diff));
    summary.insert("final_policy_diff".into(), json!(last.policy_diff));
    summary.insert("final_param_count".into(), json!(last.param_count));
    Ok(summary)
}
