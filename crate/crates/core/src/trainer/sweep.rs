//! Penalty-strength sweep: one model per λ on the same data and seed.

use std::fmt::Write as _;

use crate::dataset::ScaledDataset;
use crate::error::{Error, Result};
use crate::net::Network;

use super::penalty::PenaltyConfig;
use super::train::{train, TrainConfig, TrainReport};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub lambdas: Vec<f64>,
    pub power: u32,
    pub hidden: Vec<usize>,
    /// Used as is for the unconstrained run, and for every run when
    /// `warm_start` is off.
    pub train: TrainConfig,
    /// Penalised runs start from the finished `λ = 0` weights.
    pub warm_start: bool,
    /// Learning rate of the warm-started penalised runs.
    pub warm_learning_rate: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![0.0, 1.0, 10.0, 50.0, 100.0],
            power: 4,
            hidden: vec![128, 128, 128],
            train: TrainConfig {
                epochs: 30,
                ..TrainConfig::default()
            },
            warm_start: true,
            warm_learning_rate: 1e-4,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.lambdas.is_empty() {
            return Err(Error::Config("the sweep needs at least one lambda".into()));
        }
        for &l in &self.lambdas {
            PenaltyConfig::uniform(l, self.power).validate_for_training()?;
        }
        if self.warm_start {
            if self.lambdas[0] != 0.0 {
                return Err(Error::Config("warm start needs lambda 0 first in the sweep".into()));
            }
            if !(self.warm_learning_rate > 0.0 && self.warm_learning_rate.is_finite()) {
                return Err(Error::Config("warm learning rate must be positive".into()));
            }
        }
        Ok(())
    }
}

/// One row of the sweep table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub power: u32,
    pub in_sample_p10: f64,
    pub out_sample_p10: f64,
    pub in_sample_mse_bps: f64,
    pub out_sample_mse_bps: f64,
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub row: SweepRow,
    pub net: Network,
    pub report: TrainReport,
}

pub fn penalty_sweep(data: &ScaledDataset, cfg: &SweepConfig) -> Result<Vec<SweepPoint>> {
    cfg.validate()?;
    let mut base: Option<Network> = None;
    let mut points = Vec::with_capacity(cfg.lambdas.len());
    for &lambda in &cfg.lambdas {
        let pcfg = PenaltyConfig::uniform(lambda, cfg.power);
        let (mut net, tcfg) = match (&base, cfg.warm_start) {
            (Some(b), true) => (
                b.clone(),
                TrainConfig {
                    learning_rate: cfg.warm_learning_rate,
                    ..cfg.train.clone()
                },
            ),
            _ => (Network::standard_with_hidden(&cfg.hidden, cfg.train.seed)?, cfg.train.clone()),
        };
        log::info!("sweep: lambda {lambda}, m {}", cfg.power);
        let report = train(&mut net, data, &tcfg, Some(&pcfg))?;
        let test = report.test.unwrap_or(report.train);
        let row = SweepRow {
            lambda,
            power: cfg.power,
            in_sample_p10: report.train.penalty_value.unwrap_or(f64::NAN),
            out_sample_p10: test.penalty_value.unwrap_or(f64::NAN),
            in_sample_mse_bps: report.train.mse_bps,
            out_sample_mse_bps: test.mse_bps,
        };
        if lambda == 0.0 && base.is_none() {
            base = Some(net.clone());
        }
        points.push(SweepPoint { row, net, report });
    }
    Ok(points)
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut s = format!(
        "{:>8} {:>3} {:>10} {:>10} {:>14} {:>14}\n",
        "lambda", "m", "P10 in", "P10 out", "MSE in (bps)", "MSE out (bps)"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>8} {:>3} {:>10} {:>10} {:>14.4} {:>14.4}",
            r.lambda, r.power, r.in_sample_p10, r.out_sample_p10, r.in_sample_mse_bps, r.out_sample_mse_bps
        );
    }
    s
}
