use std::cell::Cell;

thread_local! {
    static STEPS_ON_THREAD: Cell<u64> = const { Cell::new(0) };
}

/// Optimiser steps taken so far on the calling thread, by any optimiser.
/// Lets tests assert that a code path never runs an optimisation loop.
pub fn optimizer_steps_on_thread() -> u64 {
    STEPS_ON_THREAD.with(Cell::get)
}

/// First-order optimisers over a flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    RmsProp { rho: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn rmsprop() -> Self {
        OptimizerKind::RmsProp { rho: 0.9, eps: 1e-7 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Adam { .. } => "adam",
            OptimizerKind::RmsProp { .. } => "rmsprop",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, n_params: usize) -> Self {
        Self {
            kind,
            first: vec![0.0; n_params],
            second: vec![0.0; n_params],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.steps += 1;
        STEPS_ON_THREAD.with(|c| c.set(c.get() + 1));
        match self.kind {
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.first[i] = beta1 * self.first[i] + (1.0 - beta1) * g;
                    self.second[i] = beta2 * self.second[i] + (1.0 - beta2) * g * g;
                    let m_hat = self.first[i] / c1;
                    let v_hat = self.second[i] / c2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
            OptimizerKind::RmsProp { rho, eps } => {
                for i in 0..params.len() {
                    let g = grad[i];
                    self.second[i] = rho * self.second[i] + (1.0 - rho) * g * g;
                    params[i] -= lr * g / (self.second[i].sqrt() + eps);
                }
            }
        }
    }
}
