/// Reduce-on-plateau learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateauConfig {
    /// Multiplier applied on each reduction, in `(0, 1)`.
    pub factor: f64,
    /// Epochs without improvement tolerated before reducing.
    pub patience: usize,
    pub min_lr: f64,
    /// A value counts as an improvement when below `best · (1 - min_rel_delta)`.
    pub min_rel_delta: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        Self {
            factor: 0.5,
            patience: 2,
            min_lr: 1e-6,
            min_rel_delta: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    cfg: PlateauConfig,
    lr: f64,
    best: f64,
    wait: usize,
}

impl PlateauScheduler {
    pub fn new(cfg: PlateauConfig, initial_lr: f64) -> Self {
        Self {
            cfg,
            lr: initial_lr,
            best: f64::INFINITY,
            wait: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feeds one epoch's monitored value; returns `true` when the rate was cut.
    pub fn observe(&mut self, monitored: f64) -> bool {
        if monitored < self.best * (1.0 - self.cfg.min_rel_delta) || self.best.is_infinite() {
            self.best = monitored;
            self.wait = 0;
            return false;
        }
        self.wait += 1;
        if self.wait >= self.cfg.patience {
            self.wait = 0;
            let next = (self.lr * self.cfg.factor).max(self.cfg.min_lr);
            let reduced = next < self.lr;
            self.lr = next;
            return reduced;
        }
        false
    }
}

/// Learning rate after replaying `history` through a fresh scheduler.
pub fn plateau_schedule(history: &[f64], cfg: PlateauConfig, initial_lr: f64) -> f64 {
    let mut s = PlateauScheduler::new(cfg, initial_lr);
    for &v in history {
        s.observe(v);
    }
    s.lr()
}
