//! Parameter sweeps: one independent run per value, a bounded worker pool,
//! and a summary row per value in input order.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use fwlab::io::fmt_num;

use crate::commands::{self, metric_names};
use crate::config::{Kind, Scenario};
use crate::error::CliError;
use crate::output::write_outputs;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub exit_code: u8,
    pub metrics: Vec<f64>,
    pub error: Option<String>,
}

/// Checks that `axis` names a numeric key of the base scenario's command.
pub fn validate_axis(base: &Scenario, axis: &str) -> Result<(), CliError> {
    let key = base
        .command
        .key(axis)
        .ok_or_else(|| CliError::Config(format!("unknown key '{axis}' for {}", base.command)))?;
    match key.kind {
        Kind::Real | Kind::Positive | Kind::Fraction | Kind::Int | Kind::Count => Ok(()),
        _ => Err(CliError::Config(format!("sweep axis '{axis}' is not numeric"))),
    }
}

fn child(base: &Scenario, axis: &str, value: f64, dir: &Path) -> SweepRow {
    let width = metric_names(base.command).len();
    let result = (|| {
        let mut sc = base.clone();
        let raw = if value.fract() == 0.0 && value.abs() < 1e15 { format!("{}", value as i64) } else { format!("{value:?}") };
        sc.set(axis, &raw)?;
        let out = commands::run(&sc)?;
        write_outputs(dir, &sc, &out)?;
        Ok::<_, CliError>(out)
    })();
    match result {
        Ok(out) => SweepRow {
            value,
            exit_code: out.failure.as_ref().map_or(0, CliError::exit_code),
            metrics: out.metrics,
            error: out.failure.map(|e| e.to_string()),
        },
        Err(e) => SweepRow {
            value,
            exit_code: e.exit_code(),
            metrics: vec![f64::NAN; width],
            error: Some(e.to_string()),
        },
    }
}

/// Runs `base` once per value of `axis`, up to `jobs` at a time. Child `i`
/// writes into `out/<i>_<axis>=<value>`; failures are recorded per row.
pub fn run_sweep(base: &Scenario, axis: &str, values: &[f64], jobs: usize, out: &Path) -> Result<Vec<SweepRow>, CliError> {
    validate_axis(base, axis)?;
    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<SweepRow>>> = Mutex::new(vec![None; values.len()]);
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(values.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&value) = values.get(i) else { break };
                let dir = out.join(format!("{i:03}_{axis}={value}"));
                let row = child(base, axis, value, &dir);
                rows.lock().expect("sweep row lock")[i] = Some(row);
            });
        }
    });
    Ok(rows
        .into_inner()
        .expect("sweep row lock")
        .into_iter()
        .map(|r| r.expect("every value is run"))
        .collect())
}

pub fn summary_csv(base: &Scenario, rows: &[SweepRow]) -> String {
    let mut text = String::from("value,exit_code");
    for name in metric_names(base.command) {
        text.push(',');
        text.push_str(name);
    }
    text.push('\n');
    for r in rows {
        text.push_str(&format!("{},{}", fmt_num(r.value), r.exit_code));
        for m in &r.metrics {
            text.push(',');
            text.push_str(&fmt_num(*m));
        }
        text.push('\n');
    }
    text
}

/// Parses a comma-separated list of reals; empty input gives an empty list.
pub fn parse_values(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| CliError::Config(format!("sweep value '{v}' is not a number")))
        })
        .collect()
}
