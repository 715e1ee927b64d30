use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::clip::{ClipPolicy, GradientClipper};
use super::optim::{Optimizer, OptimizerKind};
use super::penalty::{penalized_kernel, PenaltyConfig, PenaltyPoint, PENALTY_DIRECTIONS};
use super::schedule::{PlateauConfig, PlateauScheduler};
use crate::dataset::{format_float, ScaledDataset, ScaledRow, Scaling, FEATURE_MONEYNESS};
use crate::error::{Error, Result};
use crate::net::{batch_matrix, squared_error_kernel, Network};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub clip: ClipPolicy,
    /// `None` keeps the learning rate constant.
    pub plateau: Option<PlateauConfig>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::adam(),
            epochs: 15,
            batch_size: 64,
            learning_rate: 1e-3,
            clip: ClipPolicy::Off,
            plateau: None,
            seed: 42,
        }
    }
}

impl TrainConfig {
    /// Settings for the inverse map, which is unstable without clipping.
    pub fn inverse_default() -> Self {
        Self {
            epochs: 30,
            clip: ClipPolicy::Dynamic,
            plateau: Some(PlateauConfig::default()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if let ClipPolicy::Fixed(c) = self.clip {
            if !(c.is_finite() && c > 0.0) {
                return bad(format!("clip threshold must be positive, got {c}"));
            }
        }
        if let Some(p) = self.plateau {
            if !(p.factor > 0.0 && p.factor < 1.0) {
                return bad(format!("plateau factor must lie in (0, 1), got {}", p.factor));
            }
            if p.patience == 0 {
                return bad("plateau patience must be >= 1".into());
            }
            if !(p.min_lr >= 0.0) {
                return bad(format!("plateau min_lr must be >= 0, got {}", p.min_lr));
            }
        }
        Ok(())
    }
}

/// Error metrics of a network on one split, in scaled-target units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub samples: usize,
    pub mse_bps: f64,
    pub mean_pct_error: f64,
    /// Violated no-arbitrage conditions (`P_{1,0}`); direct networks only.
    pub penalty_value: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch loss (squared error plus penalty).
    pub train_loss: f64,
    pub train_mse_bps: f64,
    pub test_mse_bps: f64,
    /// Mean penalty term per training sample over the epoch.
    pub penalty: f64,
    pub lr: f64,
    /// Mean pre-clip gradient norm over the epoch's batches.
    pub grad_norm: f64,
    pub clip_threshold: Option<f64>,
    /// Wall-clock time; kept out of the metrics CSV so reruns compare byte for byte.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub train: Metrics,
    pub test: Option<Metrics>,
}

/// Loss of one batch split into its parts. `total = (sq + pen) / n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub mse: f64,
    pub penalty: f64,
    pub total: f64,
}

fn penalty_points(rows: &[ScaledRow]) -> Vec<PenaltyPoint> {
    rows.iter()
        .map(|r| PenaltyPoint {
            strike: r.strike,
            maturity: r.maturity,
            moneyness: r.features[FEATURE_MONEYNESS],
        })
        .collect()
}

fn direct_shift(scaling: Scaling) -> Result<f64> {
    match scaling {
        Scaling::Direct { shift } => Ok(shift),
        Scaling::Inverse { .. } => Err(Error::Config(
            "no-arbitrage penalties apply to direct-scaled data only".into(),
        )),
    }
}

/// Mean batch loss and its parameter gradient. With `pcfg` absent or all
/// scales zero this is exactly the mean squared error.
pub fn penalized_loss_and_grad(
    net: &Network,
    rows: &[ScaledRow],
    scaling: Scaling,
    pcfg: Option<&PenaltyConfig>,
) -> Result<(LossBreakdown, Vec<f64>)> {
    if rows.is_empty() {
        return Err(Error::Shape { expected: 1, got: 0 });
    }
    let n = rows.len() as f64;
    let inputs = batch_matrix(rows.iter().map(|r| r.features));
    let targets: Vec<f64> = rows.iter().map(|r| r.target).collect();
    let (sq, pen, mut grad) = match pcfg.filter(|p| p.is_active()) {
        None => {
            let (sq, grad) = net.value_and_grad(inputs.view(), &[], squared_error_kernel(&targets))?;
            (sq, 0.0, grad)
        }
        Some(p) => {
            let shift = direct_shift(scaling)?;
            let points = penalty_points(rows);
            let mut parts = (0.0, 0.0);
            let (_, grad) = net.value_and_grad(inputs.view(), &PENALTY_DIRECTIONS, |jets, adj| {
                parts = penalized_kernel(jets, adj, &targets, &points, shift, p);
                parts.0 + parts.1
            })?;
            (parts.0, parts.1, grad)
        }
    };
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((
        LossBreakdown {
            mse: sq / n,
            penalty: pen / n,
            total: (sq + pen) / n,
        },
        grad,
    ))
}

/// Forward-only counterpart of [`penalized_loss_and_grad`].
pub fn penalized_loss(
    net: &Network,
    rows: &[ScaledRow],
    scaling: Scaling,
    pcfg: Option<&PenaltyConfig>,
) -> Result<LossBreakdown> {
    if rows.is_empty() {
        return Err(Error::Shape { expected: 1, got: 0 });
    }
    let n = rows.len() as f64;
    let inputs = batch_matrix(rows.iter().map(|r| r.features));
    let mut sq = 0.0;
    let mut pen = 0.0;
    match pcfg.filter(|p| p.is_active()) {
        None => {
            let pred = net.forward_batch(inputs.view())?;
            for (y, r) in pred.iter().zip(rows) {
                sq += (y - r.target) * (y - r.target);
            }
        }
        Some(p) => {
            let shift = direct_shift(scaling)?;
            let jets = net.jets(inputs.view(), &PENALTY_DIRECTIONS)?;
            let mut adj = jets.clone();
            let targets: Vec<f64> = rows.iter().map(|r| r.target).collect();
            (sq, pen) = penalized_kernel(&jets, &mut adj, &targets, &penalty_points(rows), shift, p);
        }
    }
    Ok(LossBreakdown {
        mse: sq / n,
        penalty: pen / n,
        total: (sq + pen) / n,
    })
}

/// `mse_bps`, mean percent error and, for direct data, the violation count.
pub fn evaluate(net: &Network, rows: &[ScaledRow], scaling: Scaling) -> Result<Metrics> {
    if rows.is_empty() {
        return Err(Error::Domain("cannot evaluate on an empty split".into()));
    }
    let inputs = batch_matrix(rows.iter().map(|r| r.features));
    let pred = net.forward_batch(inputs.view())?;
    let penalty_value = match scaling {
        Scaling::Direct { shift } => Some(crate::arbitrage::scaled_rows_report(net, rows, shift, &PenaltyConfig::counting(), 0.0)?.total),
        Scaling::Inverse { .. } => None,
    };
    Ok(metrics_from_predictions(&pred, rows.iter().map(|r| r.target), penalty_value))
}

fn metrics_from_predictions(
    pred: &[f64],
    truth: impl Iterator<Item = f64>,
    penalty_value: Option<f64>,
) -> Metrics {
    let mut sq = 0.0;
    let mut pct = 0.0;
    let mut pct_n = 0usize;
    let mut n = 0usize;
    for (y_hat, y) in pred.iter().zip(truth) {
        sq += (y - y_hat) * (y - y_hat);
        if y.abs() > 1e-8 {
            pct += (y_hat - y) / y;
            pct_n += 1;
        }
        n += 1;
    }
    Metrics {
        samples: n,
        mse_bps: 1e4 * sq / n as f64,
        mean_pct_error: if pct_n == 0 { 0.0 } else { 100.0 * pct / pct_n as f64 },
        penalty_value,
    }
}

fn mse_bps(net: &Network, rows: &[ScaledRow]) -> Result<f64> {
    if rows.is_empty() {
        return Ok(f64::NAN);
    }
    let inputs = batch_matrix(rows.iter().map(|r| r.features));
    let pred = net.forward_batch(inputs.view())?;
    Ok(metrics_from_predictions(&pred, rows.iter().map(|r| r.target), None).mse_bps)
}

/// Loss of the current weights on the whole training split, penalty included.
/// The running batch average lags behind the weights and hides a noisy
/// finish, so the plateau schedule watches this instead.
fn epoch_end_loss(
    net: &Network,
    rows: &[ScaledRow],
    scaling: Scaling,
    pcfg: Option<&PenaltyConfig>,
) -> Result<f64> {
    const CHUNK: usize = 4096;
    let mut total = 0.0;
    for chunk in rows.chunks(CHUNK) {
        total += penalized_loss(net, chunk, scaling, pcfg)?.total * chunk.len() as f64;
    }
    Ok(total / rows.len() as f64)
}

/// Trains `net` in place and returns the per-epoch history with final metrics.
pub fn train(
    net: &mut Network,
    data: &ScaledDataset,
    cfg: &TrainConfig,
    pcfg: Option<&PenaltyConfig>,
) -> Result<TrainReport> {
    train_with_callback(net, data, cfg, pcfg, |_, _| Ok(()))
}

/// As [`train`], calling `on_epoch` after every epoch with the current weights.
pub fn train_with_callback<F>(
    net: &mut Network,
    data: &ScaledDataset,
    cfg: &TrainConfig,
    pcfg: Option<&PenaltyConfig>,
    mut on_epoch: F,
) -> Result<TrainReport>
where
    F: FnMut(&EpochRecord, &Network) -> Result<()>,
{
    cfg.validate()?;
    if let Some(p) = pcfg {
        p.validate_for_training()?;
        if p.is_active() {
            direct_shift(data.scaling)?;
        }
    }
    if data.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    net.scaling = Some(data.scaling);

    let train_rows = data.train_rows();
    let test_rows = data.test_rows();
    let mut optimizer = Optimizer::new(cfg.optimizer, net.n_params());
    let mut clipper = GradientClipper::new(cfg.clip);
    let mut scheduler = cfg.plateau.map(|p| PlateauScheduler::new(p, cfg.learning_rate));
    let mut lr = cfg.learning_rate;
    let mut order: Vec<usize> = (0..train_rows.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut pen_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train_rows[i]));
            let (loss, mut grad) = penalized_loss_and_grad(net, &batch, data.scaling, pcfg)?;
            let norm = clipper.clip(&mut grad);
            if !loss.total.is_finite() || !norm.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    loss: loss.total,
                    grad_norm: norm,
                });
            }
            optimizer.step(net.params_mut(), &grad, lr);
            loss_sum += loss.total * batch.len() as f64;
            pen_sum += loss.penalty * batch.len() as f64;
        }
        let train_loss = loss_sum / train_rows.len() as f64;

        let mut reduced = false;
        if let Some(s) = scheduler.as_mut() {
            reduced = s.observe(epoch_end_loss(net, &train_rows, data.scaling, pcfg)?);
            if reduced {
                log::info!("epoch {epoch}: plateau, learning rate {:.3e} -> {:.3e}", lr, s.lr());
            }
            lr = s.lr();
        }
        let grad_norm = clipper.end_epoch(epoch, reduced);

        let record = EpochRecord {
            epoch,
            train_loss,
            train_mse_bps: mse_bps(net, &train_rows)?,
            test_mse_bps: mse_bps(net, &test_rows)?,
            penalty: pen_sum / train_rows.len() as f64,
            lr,
            grad_norm,
            clip_threshold: clipper.threshold(),
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}/{}: loss {:.4e}, train {:.3} bps, test {:.3} bps, {:.1}s",
            cfg.epochs,
            record.train_loss,
            record.train_mse_bps,
            record.test_mse_bps,
            record.seconds
        );
        on_epoch(&record, net)?;
        history.push(record);
    }

    let train = evaluate(net, &train_rows, data.scaling)?;
    let test = if test_rows.is_empty() {
        None
    } else {
        Some(evaluate(net, &test_rows, data.scaling)?)
    };
    Ok(TrainReport {
        history,
        train,
        test,
    })
}

pub const METRICS_HEADER: &str = "epoch,train_loss,train_mse_bps,test_mse_bps,penalty,lr,grad_norm,clip_threshold";

/// Per-epoch metrics without timings; identical for identical runs.
pub fn write_metrics_csv<W: Write>(history: &[EpochRecord], mut out: W) -> Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in history {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.epoch,
            format_float(r.train_loss),
            format_float(r.train_mse_bps),
            format_float(r.test_mse_bps),
            format_float(r.penalty),
            format_float(r.lr),
            format_float(r.grad_norm),
            r.clip_threshold.map(format_float).unwrap_or_default()
        )?;
    }
    Ok(())
}

pub fn write_timing_csv<W: Write>(history: &[EpochRecord], mut out: W) -> Result<()> {
    writeln!(out, "epoch,seconds")?;
    for r in history {
        writeln!(out, "{},{:.3}", r.epoch, r.seconds)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bs_oracle::OptionSample;
    use crate::dataset::{generate, scale_direct, split, Dataset, SamplingRanges};

    fn small_data(n: usize, seed: u64) -> ScaledDataset {
        let ds = split(generate(n, &SamplingRanges::default(), seed).unwrap(), 0.8, seed).unwrap();
        scale_direct(&ds).unwrap()
    }

    fn small_net(seed: u64) -> Network {
        Network::standard_with_hidden(&[12, 12], seed).unwrap()
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 16,
            ..Default::default()
        }
    }

    #[test]
    fn zero_learning_rate_leaves_weights_unchanged() {
        let data = small_data(200, 1);
        let mut net = small_net(3);
        let before = net.params().to_vec();
        let cfg = TrainConfig {
            epochs: 1,
            learning_rate: 0.0,
            ..quick_cfg()
        };
        train(&mut net, &data, &cfg, None).unwrap();
        assert_eq!(net.params(), before.as_slice());
    }

    #[test]
    fn training_is_deterministic() {
        let data = small_data(300, 2);
        let run = || {
            let mut net = small_net(5);
            let rep = train(&mut net, &data, &quick_cfg(), Some(&PenaltyConfig::uniform(1.0, 4))).unwrap();
            (net, rep.history.iter().map(|r| r.train_loss).collect::<Vec<_>>())
        };
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(a.params(), b.params());
        assert_eq!(la, lb);
    }

    #[test]
    fn zero_scales_give_plain_mse_bit_for_bit() {
        let data = small_data(100, 4);
        let net = small_net(9);
        let rows = data.train_rows();
        let plain = penalized_loss(&net, &rows, data.scaling, None).unwrap();
        let zero = penalized_loss(&net, &rows, data.scaling, Some(&PenaltyConfig::uniform(0.0, 4))).unwrap();
        assert_eq!(plain.total.to_bits(), zero.total.to_bits());
        assert_eq!(plain.penalty, 0.0);
        let (g_plain, gp) = penalized_loss_and_grad(&net, &rows, data.scaling, None).unwrap();
        assert_eq!(g_plain.total, plain.total);
        assert_eq!(gp.len(), net.n_params());
    }

    #[test]
    fn training_reduces_loss() {
        let data = small_data(2000, 6);
        let mut net = small_net(7);
        let before = mse_bps(&net, &data.train_rows()).unwrap();
        let rep = train(&mut net, &data, &TrainConfig { epochs: 3, ..quick_cfg() }, None).unwrap();
        assert!(rep.train.mse_bps < before, "{} vs {before}", rep.train.mse_bps);
        assert_eq!(rep.history.len(), 3);
        assert!(rep.test.is_some());
    }

    #[test]
    fn dynamic_clip_threshold_is_positive_after_first_epoch() {
        let data = small_data(400, 8);
        let mut net = small_net(1);
        let cfg = TrainConfig {
            clip: ClipPolicy::Dynamic,
            epochs: 1,
            ..quick_cfg()
        };
        let rep = train(&mut net, &data, &cfg, None).unwrap();
        assert!(rep.history[0].clip_threshold.unwrap() > 0.0);
    }

    #[test]
    fn perfect_predictor_metrics() {
        let m = metrics_from_predictions(&[0.1, -0.2, 0.0], [0.1, -0.2, 0.0].into_iter(), None);
        assert_eq!(m.mse_bps, 0.0);
        assert_eq!(m.mean_pct_error, 0.0);
        let biased = metrics_from_predictions(&[0.1001, 0.2001], [0.1, 0.2].into_iter(), None);
        assert!((biased.mse_bps - 1e4 * 1e-8).abs() < 1e-15);
        assert!((biased.mean_pct_error - 100.0 * (1e-3 + 5e-4) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let data = small_data(50, 1);
        let mut net = small_net(1);
        for cfg in [
            TrainConfig { epochs: 0, ..quick_cfg() },
            TrainConfig { batch_size: 0, ..quick_cfg() },
            TrainConfig { clip: ClipPolicy::Fixed(0.0), ..quick_cfg() },
            TrainConfig {
                plateau: Some(PlateauConfig { factor: 1.0, ..Default::default() }),
                ..quick_cfg()
            },
        ] {
            assert!(matches!(train(&mut net, &data, &cfg, None), Err(Error::Config(_))));
        }
        let p = PenaltyConfig::uniform(1.0, 1);
        assert!(train(&mut net, &data, &quick_cfg(), Some(&p)).is_err());
    }

    #[test]
    fn non_finite_loss_aborts_with_diagnostic() {
        let s = OptionSample::priced(15.0, 14.0, 0.5, 0.02, 0.0, 0.3).unwrap();
        let ds = split(Dataset::from_samples(vec![s; 10]), 0.5, 0).unwrap();
        let mut data = scale_direct(&ds).unwrap();
        data.rows[data.train[0]].target = f64::NAN;
        let mut net = small_net(2);
        let err = train(&mut net, &data, &quick_cfg(), None).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 1, batch: 1, .. }), "{err}");
    }
}
