use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derived_rng, StreamPurpose};

/// Input width of a flattened 32x32 RGB image.
pub const CIFAR_INPUT_DIM: usize = 3072;
pub const CIFAR_CLASSES: usize = 10;

/// Probability floor used by [`cross_entropy`].
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub name: String,
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

/// Hidden-layer presets.
pub const PRESETS: [(&str, &[usize]); 8] = [
    ("tiny", &[32]),
    ("shallow", &[64]),
    ("medium", &[512, 256]),
    ("deep", &[1024, 512, 256, 128]),
    ("very_deep", &[512, 512, 512, 256, 256]),
    ("const_shallow", &[256]),
    ("const_medium", &[256, 256]),
    ("const_deep", &[256, 256, 256]),
];

impl MlpArchitecture {
    pub fn new(
        name: impl Into<String>,
        input_dim: usize,
        hidden: Vec<usize>,
        output_dim: usize,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        Ok(Self {
            name: name.into(),
            input_dim,
            hidden,
            output_dim,
        })
    }

    /// A named preset for the given input/output widths.
    pub fn preset(name: &str, input_dim: usize, output_dim: usize) -> Result<Self> {
        let (_, hidden) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            let names: Vec<_> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::invalid(format!(
                "unknown architecture '{name}' (expected one of {names:?})"
            ))
        })?;
        Self::new(name, input_dim, hidden.to_vec(), output_dim)
    }

    pub fn cifar(name: &str) -> Result<Self> {
        Self::preset(name, CIFAR_INPUT_DIM, CIFAR_CLASSES)
    }

    /// `(fan_in, fan_out)` for every affine layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = Vec::with_capacity(self.hidden.len() + 2);
        widths.push(self.input_dim);
        widths.extend(&self.hidden);
        widths.push(self.output_dim);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

impl fmt::Display for MlpArchitecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:?}", self.name, self.hidden)
    }
}

impl FromStr for MlpArchitecture {
    type Err = Error;

    /// Parses a CIFAR-sized preset name.
    fn from_str(s: &str) -> Result<Self> {
        Self::cifar(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerSlot {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    bias: usize,
}

/// All weights and biases of a network in one flat buffer.
///
/// Layer `l` stores a `fan_in x fan_out` row-major weight matrix followed by
/// its `fan_out` biases, so optimizers can treat the network as one vector.
/// Gradients use the same type and layout.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    arch: MlpArchitecture,
    slots: Vec<LayerSlot>,
    pub data: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(arch: &MlpArchitecture) -> Self {
        let mut slots = Vec::new();
        let mut offset = 0;
        for (fan_in, fan_out) in arch.layer_dims() {
            let weights = offset;
            let bias = weights + fan_in * fan_out;
            offset = bias + fan_out;
            slots.push(LayerSlot {
                fan_in,
                fan_out,
                weights,
                bias,
            });
        }
        Self {
            arch: arch.clone(),
            slots,
            data: vec![0.0; offset],
        }
    }

    pub fn arch(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn num_layers(&self) -> usize {
        self.slots.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn weights(&self, layer: usize) -> ArrayView2<'_, f64> {
        let s = self.slots[layer];
        ArrayView2::from_shape((s.fan_in, s.fan_out), &self.data[s.weights..s.bias])
            .expect("layer slot matches its shape")
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, f64> {
        let s = self.slots[layer];
        ArrayView1::from(&self.data[s.bias..s.bias + s.fan_out])
    }

    pub fn weights_mut(&mut self, layer: usize) -> ArrayViewMut2<'_, f64> {
        let s = self.slots[layer];
        ArrayViewMut2::from_shape((s.fan_in, s.fan_out), &mut self.data[s.weights..s.bias])
            .expect("layer slot matches its shape")
    }

    pub fn bias_mut(&mut self, layer: usize) -> ArrayViewMut1<'_, f64> {
        let s = self.slots[layer];
        ArrayViewMut1::from(&mut self.data[s.bias..s.bias + s.fan_out])
    }
}

/// He-normal weights (`std = sqrt(2 / fan_in)`) and zero biases.
pub fn he_normal_init(arch: &MlpArchitecture, seed: u64) -> MlpParams {
    let mut params = MlpParams::zeros(arch);
    let mut rng = derived_rng(seed, 0, StreamPurpose::ParamInit);
    for layer in 0..params.num_layers() {
        let std = (2.0 / params.slots[layer].fan_in as f64).sqrt();
        for w in params.weights_mut(layer).iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *w = std * z;
        }
    }
    params
}

/// Intermediate values kept by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of every layer: the batch itself, then each hidden activation.
    inputs: Vec<Array2<f64>>,
    /// Hidden-layer pre-activations.
    pre_activations: Vec<Array2<f64>>,
    pub probabilities: Array2<f64>,
}

impl ForwardCache {
    pub fn pre_activations(&self) -> &[Array2<f64>] {
        &self.pre_activations
    }
}

fn affine(
    input: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    b: ArrayView1<'_, f64>,
) -> Array2<f64> {
    let mut z = input.dot(&w);
    z += &b;
    z
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// ReLU hidden layers, softmax output.
pub fn forward(params: &MlpParams, batch: ArrayView2<'_, f64>) -> Result<ForwardCache> {
    let arch = params.arch();
    if batch.ncols() != arch.input_dim {
        return Err(Error::Shape {
            expected: arch.input_dim,
            found: batch.ncols(),
        });
    }
    let last = params.num_layers() - 1;
    let mut inputs = Vec::with_capacity(last + 1);
    let mut pre_activations = Vec::with_capacity(last);
    inputs.push(batch.to_owned());
    for layer in 0..last {
        let z = affine(
            inputs[layer].view(),
            params.weights(layer),
            params.bias(layer),
        );
        inputs.push(z.mapv(|v| v.max(0.0)));
        pre_activations.push(z);
    }
    let mut probabilities = affine(inputs[last].view(), params.weights(last), params.bias(last));
    softmax_rows(&mut probabilities);
    Ok(ForwardCache {
        inputs,
        pre_activations,
        probabilities,
    })
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::Shape {
            expected: rows,
            found: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Domain(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    Ok(())
}

/// Mean of `-ln p[label]` over the batch, with `p` floored at [`PROB_FLOOR`].
pub fn cross_entropy(probabilities: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    check_labels(labels, probabilities.nrows(), probabilities.ncols())?;
    if labels.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| -probabilities[[i, l]].max(PROB_FLOOR).ln())
        .sum();
    Ok(total / labels.len() as f64)
}

/// Gradient of the mean cross-entropy with respect to every parameter.
pub fn backward(params: &MlpParams, cache: &ForwardCache, labels: &[usize]) -> Result<MlpParams> {
    let probs = &cache.probabilities;
    check_labels(labels, probs.nrows(), probs.ncols())?;
    if cache.inputs.len() != params.num_layers() {
        return Err(Error::Shape {
            expected: params.num_layers(),
            found: cache.inputs.len(),
        });
    }
    let batch = labels.len() as f64;
    let mut grads = MlpParams::zeros(params.arch());

    let mut delta = probs.clone();
    for (i, &l) in labels.iter().enumerate() {
        delta[[i, l]] -= 1.0;
    }
    delta /= batch;

    for layer in (0..params.num_layers()).rev() {
        let input = &cache.inputs[layer];
        grads.weights_mut(layer).assign(&input.t().dot(&delta));
        grads.bias_mut(layer).assign(&delta.sum_axis(Axis(0)));
        if layer > 0 {
            let mut upstream = delta.dot(&params.weights(layer).t());
            let z = &cache.pre_activations[layer - 1];
            upstream.zip_mut_with(z, |d, &zv| {
                if zv <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = upstream;
        }
    }
    Ok(grads)
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Rows per forward pass when scoring a whole dataset.
const EVAL_CHUNK: usize = 1024;

/// Fraction of rows whose argmax prediction equals the label.
pub fn accuracy(
    params: &MlpParams,
    features: ArrayView2<'_, f64>,
    labels: &[usize],
) -> Result<f64> {
    check_labels(labels, features.nrows(), params.arch().output_dim)?;
    if labels.is_empty() {
        return Err(Error::Domain("cannot score an empty dataset".into()));
    }
    let mut correct = 0usize;
    let mut start = 0;
    while start < labels.len() {
        let end = (start + EVAL_CHUNK).min(labels.len());
        let cache = forward(params, features.slice(s![start..end, ..]))?;
        correct += cache
            .probabilities
            .rows()
            .into_iter()
            .zip(&labels[start..end])
            .filter(|(row, &l)| argmax(row.view()) == l)
            .count();
        start = end;
    }
    Ok(correct as f64 / labels.len() as f64)
}

/// Probabilities for a single input row; handy in tests.
pub fn predict_row(params: &MlpParams, row: &[f64]) -> Result<Array1<f64>> {
    let view = ArrayView2::from_shape((1, row.len()), row).map_err(|_| Error::Shape {
        expected: params.arch().input_dim,
        found: row.len(),
    })?;
    Ok(forward(params, view)?.probabilities.row(0).to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn presets_and_param_counts() {
        let tiny = MlpArchitecture::cifar("tiny").unwrap();
        assert_eq!(tiny.hidden, vec![32]);
        // 3072*32 + 32 + 32*10 + 10
        assert_eq!(tiny.param_count(), 98_666);
        let deep = MlpArchitecture::cifar("deep").unwrap();
        assert_eq!(deep.hidden, vec![1024, 512, 256, 128]);
        assert!(MlpArchitecture::cifar("huge").is_err());
        for (name, hidden) in PRESETS {
            assert_eq!(MlpArchitecture::cifar(name).unwrap().hidden, hidden);
        }
    }

    #[test]
    fn he_init_statistics() {
        let arch = MlpArchitecture::new("t", 3072, vec![512, 512], 10).unwrap();
        let p = he_normal_init(&arch, 7);
        assert!(p.bias(0).iter().all(|&b| b == 0.0));
        assert!(p.bias(2).iter().all(|&b| b == 0.0));
        // sqrt(2 / 3072) = 0.0255155
        assert!(((2.0f64 / 3072.0).sqrt() - 0.0255155).abs() < 1e-7);
        for (layer, fan_in) in [(0, 3072.0f64), (1, 512.0)] {
            let w = p.weights(layer);
            let n = w.len() as f64;
            let mean = w.sum() / n;
            let std = (w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
            let target = (2.0 / fan_in).sqrt();
            assert!((std - target).abs() / target < 0.05, "{std} vs {target}");
        }
        assert_eq!(p, he_normal_init(&arch, 7));
        assert_ne!(p, he_normal_init(&arch, 8));
    }

    #[test]
    fn zero_network_is_uniform() {
        let arch = MlpArchitecture::new("z", 5, vec![4], 10).unwrap();
        let p = MlpParams::zeros(&arch);
        let batch = Array2::from_elem((3, 5), 0.7);
        let cache = forward(&p, batch.view()).unwrap();
        for v in cache.probabilities.iter() {
            assert!((v - 0.1).abs() < 1e-15);
        }
        let loss = cross_entropy(cache.probabilities.view(), &[0, 4, 9]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut a = array![[1.0, 2.0, -3.0], [1000.0, 999.0, 998.0]];
        let mut b = a.mapv(|v| v + 17.5);
        softmax_rows(&mut a);
        softmax_rows(&mut b);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        for row in a.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn cross_entropy_examples() {
        let p = array![[0.0, 1.0], [0.5, 0.5]];
        assert_eq!(cross_entropy(p.slice(s![0..1, ..]), &[1]).unwrap(), 0.0);
        let v = cross_entropy(p.slice(s![1..2, ..]), &[0]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        let floored = cross_entropy(p.slice(s![0..1, ..]), &[0]).unwrap();
        assert!((floored - (-PROB_FLOOR.ln())).abs() < 1e-12);
        assert!(cross_entropy(p.view(), &[0, 2]).is_err());
        assert!(cross_entropy(p.view(), &[0]).is_err());
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let arch = MlpArchitecture::new("x", 4, vec![2], 3).unwrap();
        let p = MlpParams::zeros(&arch);
        assert!(matches!(
            forward(&p, Array2::zeros((2, 5)).view()),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn backward_zero_at_perfect_prediction() {
        let arch = MlpArchitecture::new("x", 2, vec![3], 2).unwrap();
        let p = he_normal_init(&arch, 1);
        let mut cache = forward(&p, array![[0.5, -0.5]].view()).unwrap();
        cache.probabilities = array![[0.0, 1.0]];
        let g = backward(&p, &cache, &[1]).unwrap();
        assert!(g.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dead_relu_unit_gets_no_incoming_gradient() {
        let arch = MlpArchitecture::new("x", 3, vec![2], 2).unwrap();
        let mut p = he_normal_init(&arch, 3);
        // Unit 1 of the hidden layer: bias far negative, so it never fires.
        p.bias_mut(0)[1] = -1e3;
        let batch = array![[0.2, 0.4, 0.9], [0.1, 0.0, 0.3]];
        let cache = forward(&p, batch.view()).unwrap();
        let g = backward(&p, &cache, &[0, 1]).unwrap();
        assert!(g.weights(0).column(1).iter().all(|&v| v == 0.0));
        assert_eq!(g.bias(0)[1], 0.0);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(array![0.2, 0.4, 0.4].view()), 1);
        assert_eq!(argmax(array![0.5, 0.5].view()), 0);
    }

    #[test]
    fn accuracy_is_order_invariant() {
        let arch = MlpArchitecture::new("x", 4, vec![6], 3).unwrap();
        let p = he_normal_init(&arch, 11);
        let x = Array2::from_shape_fn((50, 4), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 10.0);
        let y: Vec<usize> = (0..50).map(|i| i % 3).collect();
        let a = accuracy(&p, x.view(), &y).unwrap();
        let order: Vec<usize> = (0..50).rev().collect();
        let xr = x.select(Axis(0), &order);
        let yr: Vec<usize> = order.iter().map(|&i| y[i]).collect();
        assert_eq!(a, accuracy(&p, xr.view(), &yr).unwrap());

        // Labels set to the predictions give a perfect score.
        let preds: Vec<usize> = x
            .rows()
            .into_iter()
            .map(|r| argmax(predict_row(&p, r.as_slice().unwrap()).unwrap().view()))
            .collect();
        assert_eq!(accuracy(&p, x.view(), &preds).unwrap(), 1.0);
    }
}
