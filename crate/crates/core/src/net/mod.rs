//! Fully connected scalar-output networks with C² activations.
//!
//! All trainable parameters live in one flat vector (per layer: the
//! `fan_in × fan_out` weight matrix in row-major order, then the bias), which
//! keeps optimisers and gradient clipping independent of the architecture.
//! Derivatives are provided by [`taylor`].

mod activation;
mod io;
pub mod taylor;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use activation::Activation;
pub use io::{load_model, read_model, save_model, write_model, MODEL_FORMAT_VERSION};
pub use taylor::{Direction, OutputJets};

use crate::dataset::{Scaling, N_FEATURES};
use crate::error::{Error, Result};

/// Hidden width of the reference pricer.
pub const DEFAULT_HIDDEN: usize = 128;

/// MELU slope used by the reference pricer; keeps every hidden output above -0.5.
pub const DEFAULT_MELU_ALPHA: f64 = 0.49;

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    widths: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
    pub scaling: Option<Scaling>,
    pub seed: u64,
}

/// `Σ (fan_in + 1) · fan_out` over consecutive widths.
pub fn parameter_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

impl Network {
    /// Glorot-uniform weights and zero biases drawn from a ChaCha stream seeded by `seed`.
    pub fn new(widths: Vec<usize>, activations: Vec<Activation>, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(widths, activations)?;
        net.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in 0..net.n_layers() {
            let (fan_in, fan_out) = net.layer_shape(layer);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let (w, _) = net.layer_range(layer);
            for p in &mut net.params[w] {
                *p = rng.gen_range(-limit..limit);
            }
        }
        Ok(net)
    }

    /// A network with every weight and bias set to zero.
    pub fn zeros(widths: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!(
                "need at least an input and an output width, all positive; got {widths:?}"
            )));
        }
        if *widths.last().unwrap() != 1 {
            return Err(Error::Config("networks here are scalar-valued (output width 1)".into()));
        }
        if activations.len() != widths.len() - 1 {
            return Err(Error::Config(format!(
                "{} layers need {} activations, got {}",
                widths.len() - 1,
                widths.len() - 1,
                activations.len()
            )));
        }
        for a in &activations {
            a.validate()?;
        }
        let n = parameter_count(&widths);
        Ok(Self {
            widths,
            activations,
            params: vec![0.0; n],
            scaling: None,
            seed: 0,
        })
    }

    /// `[5, 128, 128, 128, 1]` with LeakyReLU(1), MELU(0.49) ×2 and a shifted softplus output.
    pub fn standard(seed: u64) -> Self {
        Self::new(
            vec![N_FEATURES, DEFAULT_HIDDEN, DEFAULT_HIDDEN, DEFAULT_HIDDEN, 1],
            vec![
                Activation::LeakyRelu { alpha: 1.0 },
                Activation::Melu {
                    alpha: DEFAULT_MELU_ALPHA,
                },
                Activation::Melu {
                    alpha: DEFAULT_MELU_ALPHA,
                },
                Activation::SoftplusShift,
            ],
            seed,
        )
        .expect("reference architecture is valid")
    }

    /// Same activation stack with custom hidden widths.
    pub fn standard_with_hidden(hidden: &[usize], seed: u64) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::Config("need at least one hidden layer".into()));
        }
        let mut widths = vec![N_FEATURES];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mut acts = vec![Activation::LeakyRelu { alpha: 1.0 }];
        acts.extend(std::iter::repeat_n(
            Activation::Melu {
                alpha: DEFAULT_MELU_ALPHA,
            },
            hidden.len() - 1,
        ));
        acts.push(Activation::SoftplusShift);
        Self::new(widths, acts, seed)
    }

    pub fn with_scaling(mut self, scaling: Scaling) -> Self {
        self.scaling = Some(scaling);
        self
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn n_layers(&self) -> usize {
        self.activations.len()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub(crate) fn layer_shape(&self, layer: usize) -> (usize, usize) {
        (self.widths[layer], self.widths[layer + 1])
    }

    /// Index ranges of the weight matrix and bias vector of `layer` in the flat vector.
    pub fn layer_range(&self, layer: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let offset = parameter_count(&self.widths[..=layer]);
        let (fan_in, fan_out) = self.layer_shape(layer);
        let w_end = offset + fan_in * fan_out;
        (offset..w_end, w_end..w_end + fan_out)
    }

    pub(crate) fn layer(&self, layer: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (fan_in, fan_out) = self.layer_shape(layer);
        let (w, b) = self.layer_range(layer);
        (
            ArrayView2::from_shape((fan_in, fan_out), &self.params[w]).expect("layout"),
            ArrayView1::from(&self.params[b]),
        )
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got,
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        let input = ArrayView2::from_shape((1, x.len()), x).expect("row");
        Ok(self.forward_batch(input)?[0])
    }

    /// One output per input row.
    pub fn forward_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(self.jets(inputs, &[])?.value)
    }

    /// Outputs and their derivatives along `directions` for every input row.
    pub fn jets(&self, inputs: ArrayView2<'_, f64>, directions: &[Direction]) -> Result<OutputJets> {
        self.check_dim(inputs.ncols())?;
        taylor::check_directions(self, directions)?;
        Ok(taylor::forward(self, inputs, directions))
    }

    /// Value, first and second derivatives of the output with respect to the
    /// listed input coordinates at a single point.
    pub fn input_derivs(&self, x: &[f64], dims: &[usize]) -> Result<EvalWithDerivs> {
        self.check_dim(x.len())?;
        let dirs: Vec<Direction> = dims.iter().map(|&d| Direction::second(d)).collect();
        let input = ArrayView2::from_shape((1, x.len()), x).expect("row");
        let jets = self.jets(input, &dirs)?;
        Ok(EvalWithDerivs {
            value: jets.value[0],
            first: jets.first.iter().map(|v| v[0]).collect(),
            second: jets.second.iter().map(|v| v[0]).collect(),
        })
    }

    /// Gradient of a scalar loss of the batch outputs with respect to every parameter.
    ///
    /// `kernel` receives the output jets of the batch and must write
    /// `∂loss/∂(jet entry)` into its second argument, returning the loss.
    pub fn value_and_grad<F>(
        &self,
        inputs: ArrayView2<'_, f64>,
        directions: &[Direction],
        kernel: F,
    ) -> Result<(f64, Vec<f64>)>
    where
        F: FnOnce(&OutputJets, &mut OutputJets) -> f64,
    {
        self.check_dim(inputs.ncols())?;
        taylor::check_directions(self, directions)?;
        Ok(taylor::value_and_grad(self, inputs, directions, kernel))
    }
}

/// Output of [`Network::input_derivs`]; `first[i]`/`second[i]` belong to `dims[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalWithDerivs {
    pub value: f64,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

/// Packs fixed-size feature rows into a batch matrix.
pub fn batch_matrix<const D: usize>(rows: impl ExactSizeIterator<Item = [f64; D]>) -> Array2<f64> {
    let n = rows.len();
    let mut data = Vec::with_capacity(n * D);
    for r in rows {
        data.extend_from_slice(&r);
    }
    Array2::from_shape_vec((n, D), data).expect("row-major batch")
}

/// Sum of squared errors `Σ (y - target)²` as a gradient kernel.
pub fn squared_error_kernel(targets: &[f64]) -> impl FnOnce(&OutputJets, &mut OutputJets) -> f64 + '_ {
    move |jets, adj| {
        let mut loss = 0.0;
        for ((y, t), g) in jets.value.iter().zip(targets).zip(adj.value.iter_mut()) {
            let e = y - t;
            loss += e * e;
            *g = 2.0 * e;
        }
        loss
    }
}

/// Mean squared error over the batch with its parameter gradient.
pub fn grad_params(net: &Network, inputs: ArrayView2<'_, f64>, targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if targets.len() != inputs.nrows() || targets.is_empty() {
        return Err(Error::Shape {
            expected: inputs.nrows(),
            got: targets.len(),
        });
    }
    let n = targets.len() as f64;
    let (loss, mut grad) = net.value_and_grad(inputs, &[], squared_error_kernel(targets))?;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}
