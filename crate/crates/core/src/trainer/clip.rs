//! Gradient clipping by global L2 norm.

/// How the clipping threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClipPolicy {
    Off,
    Fixed(f64),
    /// No clipping during the first epoch; afterwards the threshold is the
    /// median batch-gradient norm of the first epoch, re-estimated from the
    /// latest epoch whenever the learning rate is cut on a plateau.
    Dynamic,
}

pub fn l2_norm(g: &[f64]) -> f64 {
    g.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescales `g` in place to norm `max_norm` if it is longer; returns the original norm.
pub fn clip_by_norm(g: &mut [f64], max_norm: f64) -> f64 {
    let norm = l2_norm(g);
    if norm > max_norm {
        let scale = max_norm / norm;
        g.iter_mut().for_each(|x| *x *= scale);
    }
    norm
}

/// Pure form of the clipping rule.
pub fn clip_gradients(mut g: Vec<f64>, max_norm: Option<f64>) -> Vec<f64> {
    if let Some(c) = max_norm {
        clip_by_norm(&mut g, c);
    }
    g
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Stateful clipper carrying the threshold across epochs.
#[derive(Debug, Clone)]
pub struct GradientClipper {
    policy: ClipPolicy,
    threshold: Option<f64>,
    epoch_norms: Vec<f64>,
    clipped: usize,
}

impl GradientClipper {
    pub fn new(policy: ClipPolicy) -> Self {
        let threshold = match policy {
            ClipPolicy::Fixed(c) => Some(c),
            _ => None,
        };
        Self {
            policy,
            threshold,
            epoch_norms: Vec::new(),
            clipped: 0,
        }
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    /// Clips in place; returns the pre-clip norm.
    pub fn clip(&mut self, g: &mut [f64]) -> f64 {
        let norm = match self.threshold {
            Some(c) => {
                let n = clip_by_norm(g, c);
                if n > c {
                    self.clipped += 1;
                }
                n
            }
            None => l2_norm(g),
        };
        self.epoch_norms.push(norm);
        norm
    }

    /// Closes an epoch. `lr_reduced` tells whether the plateau schedule just
    /// cut the learning rate. Returns the mean pre-clip norm of the epoch.
    pub fn end_epoch(&mut self, epoch: usize, lr_reduced: bool) -> f64 {
        let mean = if self.epoch_norms.is_empty() {
            0.0
        } else {
            self.epoch_norms.iter().sum::<f64>() / self.epoch_norms.len() as f64
        };
        if self.policy == ClipPolicy::Dynamic && (epoch == 1 || lr_reduced) {
            if let Some(m) = median(&mut self.epoch_norms) {
                if m > 0.0 && m.is_finite() {
                    log::debug!("clip threshold set to {m:.4e} after epoch {epoch}");
                    self.threshold = Some(m);
                }
            }
        }
        self.epoch_norms.clear();
        self.clipped = 0;
        mean
    }

    pub fn clipped_this_epoch(&self) -> usize {
        self.clipped
    }
}
