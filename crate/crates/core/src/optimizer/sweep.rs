use std::io::Write;

use serde::Serialize;

use super::{deploy, run_optimization_with, ConfigError, OptimizerConfig, OptimizerError};
use crate::gateway::{Gateway, GatewayError};
use crate::kb::QuerySplit;
use crate::plan::ExecEnv;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCell {
    pub l: f64,
    pub h: f64,
    pub status: SweepStatus,
    pub validation: Option<f64>,
    pub test: Option<f64>,
    pub error: Option<String>,
}

/// One independent optimization plus deployment per `(l, h)` cell, in row-major order.
/// `make_gateway` is called once per cell so scripted backends start fresh.
pub fn sweep_thresholds(
    base: &OptimizerConfig,
    ls: &[f64],
    hs: &[f64],
    env: &ExecEnv<'_>,
    split: &QuerySplit,
    make_gateway: &dyn Fn() -> Result<Gateway, GatewayError>,
) -> Result<Vec<SweepCell>, ConfigError> {
    let mut configs = Vec::new();
    for &l in ls {
        for &h in hs {
            let cfg = OptimizerConfig { upper_bound_l: l, lower_bound_h: h, ..base.clone() };
            cfg.validate()?;
            configs.push(cfg);
        }
    }
    let mut cells = Vec::with_capacity(configs.len());
    for cfg in configs {
        let (l, h) = (cfg.upper_bound_l, cfg.lower_bound_h);
        let outcome = make_gateway().map_err(OptimizerError::from).and_then(|gw| {
            let cell_env = ExecEnv { gateway: Some(&gw), ..*env };
            let out = run_optimization_with(&cfg, &cell_env, split, None)?;
            let test = deploy(&out.best_plan, &split.test, &cell_env, &cfg).mean(cfg.primary_metric);
            Ok((out.best_validation, test))
        });
        cells.push(match outcome {
            Ok((v, t)) => SweepCell { l, h, status: SweepStatus::Ok, validation: Some(v), test: Some(t), error: None },
            Err(e) => SweepCell { l, h, status: SweepStatus::Failed, validation: None, test: None, error: Some(e.to_string()) },
        });
    }
    Ok(cells)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Long form: one row per cell.
pub fn write_sweep_csv(cells: &[SweepCell], metric: &str, out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["l", "h", &format!("validation_{metric}"), &format!("test_{metric}"), "status"])?;
    for c in cells {
        let status = match c.status {
            SweepStatus::Ok => "ok",
            SweepStatus::Failed => "failed",
        };
        w.write_record([c.l.to_string(), c.h.to_string(), fmt_opt(c.validation), fmt_opt(c.test), status.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Matrix form of the test metric: rows are `l`, columns are `h`; failed cells are blank.
pub fn write_sweep_matrix(cells: &[SweepCell], ls: &[f64], hs: &[f64], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["l\\h".to_string()];
    header.extend(hs.iter().map(f64::to_string));
    w.write_record(&header)?;
    for &l in ls {
        let mut row = vec![l.to_string()];
        for &h in hs {
            row.push(fmt_opt(cells.iter().find(|c| c.l == l && c.h == h).and_then(|c| c.test)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
