//! Batched univariate Taylor propagation through a [`Network`], plus reverse
//! mode through that propagation.
//!
//! For every requested input direction `e_i` the forward pass carries, next to
//! the ordinary activations, the first (and optionally second) directional
//! derivative of every unit. All streams of a batch are stacked vertically in
//! one matrix, so each layer costs one matrix product in each direction:
//!
//! ```text
//! rows [0, B)        value        z = x W + b     a = f(z)
//! rows [kB, (k+1)B)  first  (i)   z' = x' W       a' = f'(z) z'
//! rows [jB, (j+1)B)  second (i)   z'' = x'' W     a'' = f''(z) z'² + f'(z) z''
//! ```
//!
//! The backward pass differentiates a scalar function of the output jets with
//! respect to every weight, which is what the no-arbitrage penalties need
//! (they are functions of ∂y/∂x and ∂²y/∂x²). It requires `f'''`.

use ndarray::{s, Array2, ArrayView2, Axis};

use super::Network;
use crate::error::{Error, Result};

/// Rows per chunk when evaluating large inputs without gradients.
const EVAL_CHUNK: usize = 4096;

/// Differentiation direction: the input coordinate and whether the second
/// derivative along it is wanted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Direction {
    pub input: usize,
    pub second_order: bool,
}

impl Direction {
    pub fn first(input: usize) -> Self {
        Self {
            input,
            second_order: false,
        }
    }

    pub fn second(input: usize) -> Self {
        Self {
            input,
            second_order: true,
        }
    }
}

/// Network output and its directional derivatives over a batch.
///
/// `first[d][b]` is `∂y_b/∂x_{dir d}`; `second[d]` is empty for first-order
/// directions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputJets {
    pub value: Vec<f64>,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl OutputJets {
    fn zeros_like(batch: usize, dirs: &[Direction]) -> Self {
        Self {
            value: vec![0.0; batch],
            first: dirs.iter().map(|_| vec![0.0; batch]).collect(),
            second: dirs
                .iter()
                .map(|d| if d.second_order { vec![0.0; batch] } else { Vec::new() })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Stream bookkeeping: stream 0 is the value, then for direction `d`
/// `first[d]` and optionally `second[d]`.
struct Streams {
    count: usize,
    first: Vec<usize>,
    second: Vec<Option<usize>>,
}

impl Streams {
    fn new(dirs: &[Direction]) -> Self {
        let mut count = 1;
        let mut first = Vec::with_capacity(dirs.len());
        let mut second = Vec::with_capacity(dirs.len());
        for d in dirs {
            first.push(count);
            count += 1;
            if d.second_order {
                second.push(Some(count));
                count += 1;
            } else {
                second.push(None);
            }
        }
        Self {
            count,
            first,
            second,
        }
    }
}

pub(crate) fn check_directions(net: &Network, dirs: &[Direction]) -> Result<()> {
    for d in dirs {
        if d.input >= net.input_dim() {
            return Err(Error::Shape {
                expected: net.input_dim(),
                got: d.input + 1,
            });
        }
    }
    Ok(())
}

struct LayerCache {
    input: Array2<f64>,
    pre: Array2<f64>,
    /// f', f'', f''' at the value-stream pre-activations, each `B × width`.
    d1: Vec<f64>,
    d2: Vec<f64>,
    d3: Vec<f64>,
}

fn seed_input(inputs: ArrayView2<'_, f64>, dirs: &[Direction], streams: &Streams) -> Array2<f64> {
    let b = inputs.nrows();
    let mut x = Array2::zeros((streams.count * b, inputs.ncols()));
    x.slice_mut(s![0..b, ..]).assign(&inputs);
    for (d, dir) in dirs.iter().enumerate() {
        let k = streams.first[d];
        x.slice_mut(s![k * b..(k + 1) * b, dir.input]).fill(1.0);
    }
    x
}

fn run_forward(
    net: &Network,
    inputs: ArrayView2<'_, f64>,
    dirs: &[Direction],
    keep: bool,
) -> (Array2<f64>, Vec<LayerCache>) {
    let b = inputs.nrows();
    let streams = Streams::new(dirs);
    let mut x = seed_input(inputs, dirs, &streams);
    let mut caches = Vec::with_capacity(if keep { net.n_layers() } else { 0 });

    for layer in 0..net.n_layers() {
        let (w, bias) = net.layer(layer);
        let width = w.ncols();
        let mut z = x.dot(&w).as_standard_layout().into_owned();
        let mut head = z.slice_mut(s![0..b, ..]);
        head += &bias;

        let act = net.activations()[layer];
        let block = b * width;
        let mut a = Array2::<f64>::zeros(z.raw_dim());
        let mut d1 = vec![0.0; block];
        let mut d2 = vec![0.0; block];
        let mut d3 = vec![0.0; block];
        {
            let zs = z.as_slice().expect("contiguous");
            let av = a.as_slice_mut().expect("contiguous");
            for i in 0..block {
                let [v, f1, f2, f3] = act.eval(zs[i]);
                av[i] = v;
                d1[i] = f1;
                d2[i] = f2;
                d3[i] = f3;
            }
            for d in 0..dirs.len() {
                let k = streams.first[d] * block;
                for i in 0..block {
                    av[k + i] = d1[i] * zs[k + i];
                }
                if let Some(j) = streams.second[d] {
                    let j = j * block;
                    for i in 0..block {
                        let zp = zs[k + i];
                        av[j + i] = d2[i] * zp * zp + d1[i] * zs[j + i];
                    }
                }
            }
        }
        if keep {
            caches.push(LayerCache {
                input: x,
                pre: z,
                d1,
                d2,
                d3,
            });
        }
        x = a;
    }
    (x, caches)
}

fn unpack(out: &Array2<f64>, b: usize, dirs: &[Direction], streams: &Streams, jets: &mut OutputJets) {
    let col = out.column(0);
    let stream = |k: usize| col.slice(s![k * b..(k + 1) * b]).to_vec();
    jets.value.extend(stream(0));
    for d in 0..dirs.len() {
        jets.first[d].extend(stream(streams.first[d]));
        if let Some(j) = streams.second[d] {
            jets.second[d].extend(stream(j));
        }
    }
}

pub(crate) fn forward(net: &Network, inputs: ArrayView2<'_, f64>, dirs: &[Direction]) -> OutputJets {
    let streams = Streams::new(dirs);
    let mut jets = OutputJets::zeros_like(0, dirs);
    let n = inputs.nrows();
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let chunk = inputs.slice(s![start..end, ..]);
        let (out, _) = run_forward(net, chunk, dirs, false);
        unpack(&out, end - start, dirs, &streams, &mut jets);
        start = end;
    }
    jets
}

pub(crate) fn value_and_grad<F>(
    net: &Network,
    inputs: ArrayView2<'_, f64>,
    dirs: &[Direction],
    kernel: F,
) -> (f64, Vec<f64>)
where
    F: FnOnce(&OutputJets, &mut OutputJets) -> f64,
{
    let b = inputs.nrows();
    let streams = Streams::new(dirs);
    let (out, caches) = run_forward(net, inputs, dirs, true);

    let mut jets = OutputJets::zeros_like(0, dirs);
    unpack(&out, b, dirs, &streams, &mut jets);
    let mut seed = OutputJets::zeros_like(b, dirs);
    let loss = kernel(&jets, &mut seed);

    // Adjoint of the last layer's output, stacked like the forward streams.
    let mut adj = Array2::<f64>::zeros((streams.count * b, 1));
    adj.slice_mut(s![0..b, 0]).assign(&ndarray::ArrayView1::from(&seed.value));
    for d in 0..dirs.len() {
        let k = streams.first[d];
        adj.slice_mut(s![k * b..(k + 1) * b, 0])
            .assign(&ndarray::ArrayView1::from(&seed.first[d]));
        if let Some(j) = streams.second[d] {
            adj.slice_mut(s![j * b..(j + 1) * b, 0])
                .assign(&ndarray::ArrayView1::from(&seed.second[d]));
        }
    }

    let mut grad = vec![0.0; net.n_params()];
    for layer in (0..net.n_layers()).rev() {
        let cache = &caches[layer];
        let (w, _) = net.layer(layer);
        let width = w.ncols();
        let block = b * width;

        let mut zbar = Array2::<f64>::zeros(cache.pre.raw_dim());
        {
            let abar = adj.as_slice().expect("contiguous");
            let z = cache.pre.as_slice().expect("contiguous");
            let zb = zbar.as_slice_mut().expect("contiguous");
            let (d1, d2, d3) = (&cache.d1, &cache.d2, &cache.d3);
            for i in 0..block {
                zb[i] = abar[i] * d1[i];
            }
            for d in 0..dirs.len() {
                let k = streams.first[d] * block;
                for i in 0..block {
                    zb[i] += abar[k + i] * d2[i] * z[k + i];
                    zb[k + i] = abar[k + i] * d1[i];
                }
                if let Some(j) = streams.second[d] {
                    let j = j * block;
                    for i in 0..block {
                        let zp = z[k + i];
                        let a2 = abar[j + i];
                        zb[i] += a2 * (d3[i] * zp * zp + d2[i] * z[j + i]);
                        zb[k + i] += a2 * 2.0 * d2[i] * zp;
                        zb[j + i] = a2 * d1[i];
                    }
                }
            }
        }

        let (w_range, b_range) = net.layer_range(layer);
        let gw = cache.input.t().dot(&zbar);
        grad[w_range].copy_from_slice(gw.as_standard_layout().as_slice().expect("contiguous"));
        let gb = zbar.slice(s![0..b, ..]).sum_axis(Axis(0));
        grad[b_range].copy_from_slice(gb.as_slice().expect("contiguous"));

        if layer > 0 {
            adj = zbar.dot(&w.t()).as_standard_layout().into_owned();
        }
    }
    (loss, grad)
}
