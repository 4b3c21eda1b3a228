//! Feed-forward ReLU networks: evaluation, magnitude pruning and padding.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }
}

/// One affine map `W·x + b` followed by an activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>, activation: Activation) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(Error::dim("layer bias", weights.nrows(), bias.len()));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    fn apply(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut y = self.weights.dot(&x) + &self.bias;
        if self.activation == Activation::Relu {
            y.mapv_inplace(|v| v.max(0.0));
        }
        y
    }
}

/// A layered network. Immutable once validated; cheap to share across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub name: String,
    input_dim: usize,
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(name: impl Into<String>, input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::input("input_dim", "must be positive"));
        }
        if layers.is_empty() {
            return Err(Error::input("layers", "network needs at least one layer"));
        }
        let mut prev = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            if layer.input_dim() != prev {
                return Err(Error::input(
                    format!("layers[{i}].weights"),
                    format!("expected {prev} columns, got {}", layer.input_dim()),
                ));
            }
            if layer.bias.len() != layer.output_dim() {
                return Err(Error::input(
                    format!("layers[{i}].bias"),
                    format!(
                        "expected length {}, got {}",
                        layer.output_dim(),
                        layer.bias.len()
                    ),
                ));
            }
            if layer.output_dim() == 0 {
                return Err(Error::input(format!("layers[{i}].weights"), "layer has no rows"));
            }
            prev = layer.output_dim();
        }
        let last = layers.len() - 1;
        if layers[last].activation != Activation::Linear {
            return Err(Error::input(
                format!("layers[{last}].activation"),
                "the output layer must be linear",
            ));
        }
        Ok(Self {
            name: name.into(),
            input_dim,
            layers,
        })
    }

    /// Random dense network with ReLU hidden layers, used by the bench harness and tests.
    pub fn random<R: Rng + ?Sized>(
        name: impl Into<String>,
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input_dim;
        let widths = hidden.iter().copied().chain(std::iter::once(output_dim));
        let n_layers = hidden.len() + 1;
        for (i, width) in widths.enumerate() {
            let w_dist = Normal::new(0.0, (2.0 / prev as f64).sqrt()).expect("valid std");
            let b_dist = Normal::new(0.0, 0.1).expect("valid std");
            let weights = Array2::from_shape_fn((width, prev), |_| w_dist.sample(rng));
            let bias = Array1::from_shape_fn(width, |_| b_dist.sample(rng));
            let activation = if i + 1 == n_layers {
                Activation::Linear
            } else {
                Activation::Relu
            };
            layers.push(Layer {
                weights,
                bias,
                activation,
            });
            prev = width;
        }
        Self::new(name, input_dim, layers).expect("random network is well formed")
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Layer::output_dim).unwrap_or(0)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Widths of every layer's output, input dimension excluded.
    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(Layer::output_dim).collect()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Array1<f64>> {
        self.evaluate_prefix(x, self.layers.len())
    }

    /// Output of the first `upto` layers; `upto == 0` returns the input.
    pub fn evaluate_prefix(&self, x: &[f64], upto: usize) -> Result<Array1<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::dim("network input", self.input_dim, x.len()));
        }
        if upto > self.layers.len() {
            return Err(Error::IndexOutOfRange {
                context: "evaluate_prefix layer".into(),
                index: upto,
                len: self.layers.len(),
            });
        }
        let mut cur = Array1::from(x.to_vec());
        for layer in &self.layers[..upto] {
            cur = layer.apply(cur.view());
        }
        Ok(cur)
    }

    /// Number of hidden (ReLU) neurons over all layers.
    pub fn hidden_neurons(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| l.activation == Activation::Relu)
            .map(Layer::output_dim)
            .sum()
    }

    /// Zeroes the `⌊fraction·H⌋` hidden neurons with the smallest incoming
    /// L1 norm (weights plus |bias|). Layer shapes are kept.
    pub fn prune_by_weight_norm(&self, fraction: f64) -> Result<Network> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::input("fraction", format!("must lie in [0, 1), got {fraction}")));
        }
        let hidden = self.hidden_neurons();
        if hidden == 0 {
            return Err(Error::input("net", "network has no hidden ReLU layer to prune"));
        }
        let mut ranked: Vec<(f64, usize, usize)> = Vec::with_capacity(hidden);
        for (li, layer) in self.layers.iter().enumerate() {
            if layer.activation != Activation::Relu {
                continue;
            }
            for (ni, row) in layer.weights.rows().into_iter().enumerate() {
                let norm = row.iter().map(|w| w.abs()).sum::<f64>() + layer.bias[ni].abs();
                ranked.push((norm, li, ni));
            }
        }
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let count = (fraction * hidden as f64).floor() as usize;

        let mut pruned = self.clone();
        pruned.name = format!("{}-pruned{}", self.name, (fraction * 100.0).round());
        for &(_, li, ni) in ranked.iter().take(count) {
            pruned.zero_neuron(li, ni);
        }
        Ok(pruned)
    }

    fn zero_neuron(&mut self, layer: usize, neuron: usize) {
        self.layers[layer].weights.row_mut(neuron).fill(0.0);
        self.layers[layer].bias[neuron] = 0.0;
        if let Some(next) = self.layers.get_mut(layer + 1) {
            next.weights.column_mut(neuron).fill(0.0);
        }
    }

    /// Copy of the network whose hidden layers are widened to `widths` with zero neurons.
    fn padded_to(&self, widths: &[usize]) -> Network {
        let mut layers = Vec::with_capacity(self.layers.len());
        let mut in_dim = self.input_dim;
        for (layer, &out_dim) in self.layers.iter().zip(widths) {
            let mut weights = Array2::zeros((out_dim, in_dim));
            weights
                .slice_mut(ndarray::s![..layer.output_dim(), ..layer.input_dim()])
                .assign(&layer.weights);
            let mut bias = Array1::zeros(out_dim);
            bias.slice_mut(ndarray::s![..layer.output_dim()])
                .assign(&layer.bias);
            layers.push(Layer {
                weights,
                bias,
                activation: layer.activation,
            });
            in_dim = out_dim;
        }
        Network {
            name: self.name.clone(),
            input_dim: self.input_dim,
            layers,
        }
    }
}

/// Widens thinner layers with zero rows (and matching zero columns downstream)
/// so both networks share per-layer widths.
pub fn pad_to_common_shape(net1: &Network, net2: &Network) -> Result<(Network, Network)> {
    if net1.depth() != net2.depth() {
        return Err(Error::IncompatibleArchitectures(format!(
            "depth {} vs {}",
            net1.depth(),
            net2.depth()
        )));
    }
    if net1.input_dim() != net2.input_dim() || net1.output_dim() != net2.output_dim() {
        return Err(Error::IncompatibleArchitectures(format!(
            "input/output dims {}→{} vs {}→{}",
            net1.input_dim(),
            net1.output_dim(),
            net2.input_dim(),
            net2.output_dim()
        )));
    }
    for (i, (a, b)) in net1.layers.iter().zip(&net2.layers).enumerate() {
        if a.activation != b.activation {
            return Err(Error::IncompatibleArchitectures(format!(
                "layer {i} activation {} vs {}",
                a.activation.as_str(),
                b.activation.as_str()
            )));
        }
    }
    let widths: Vec<usize> = net1
        .widths()
        .into_iter()
        .zip(net2.widths())
        .map(|(a, b)| a.max(b))
        .collect();
    Ok((net1.padded_to(&widths), net2.padded_to(&widths)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn relu_then_identity() -> Network {
        Network::new(
            "clamp",
            1,
            vec![
                Layer::new(array![[1.0]], array![-0.5], Activation::Relu).unwrap(),
                Layer::new(array![[1.0]], array![0.0], Activation::Linear).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = Network::new(
            "id",
            2,
            vec![Layer::new(Array2::eye(2), Array1::zeros(2), Activation::Linear).unwrap()],
        )
        .unwrap();
        assert_eq!(net.evaluate(&[1.0, -2.0]).unwrap().to_vec(), vec![1.0, -2.0]);
    }

    #[test]
    fn relu_clamps_negative_preactivation() {
        let net = relu_then_identity();
        assert_eq!(net.evaluate(&[0.2]).unwrap().to_vec(), vec![0.0]);
    }

    #[test]
    fn evaluate_matches_hand_unrolled_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = Network::random("r", 3, &[4], 2, &mut rng);
        let x = [0.3, -1.1, 0.7];
        let (l0, l1) = (&net.layers()[0], &net.layers()[1]);
        let mut hidden = [0.0; 4];
        for i in 0..4 {
            let mut s = l0.bias[i];
            for j in 0..3 {
                s += l0.weights[[i, j]] * x[j];
            }
            hidden[i] = s.max(0.0);
        }
        let out = net.evaluate(&x).unwrap();
        for o in 0..2 {
            let mut s = l1.bias[o];
            for i in 0..4 {
                s += l1.weights[[o, i]] * hidden[i];
            }
            assert!((out[o] - s).abs() < 1e-12);
        }
        let first = net.evaluate_prefix(&x, 1).unwrap();
        for i in 0..4 {
            assert!((first[i] - hidden[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn prefix_bounds() {
        let net = relu_then_identity();
        assert_eq!(net.evaluate_prefix(&[0.7], 0).unwrap().to_vec(), vec![0.7]);
        assert_eq!(net.evaluate_prefix(&[0.7], 2).unwrap(), net.evaluate(&[0.7]).unwrap());
        assert!(matches!(
            net.evaluate_prefix(&[0.7], 3),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(net.evaluate(&[0.1, 0.2]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn rejects_nonlinear_output_layer() {
        let err = Network::new(
            "bad",
            1,
            vec![Layer::new(array![[1.0]], array![0.0], Activation::Relu).unwrap()],
        )
        .unwrap_err();
        assert!(err.to_string().contains("layers[0].activation"));
    }

    #[test]
    fn prune_zero_fraction_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::random("r", 3, &[5, 5], 2, &mut rng);
        let pruned = net.prune_by_weight_norm(0.0).unwrap();
        assert_eq!(pruned.layers(), net.layers());
    }

    #[test]
    fn prune_removes_smallest_norm_neuron() {
        let net = Network::new(
            "two",
            1,
            vec![
                Layer::new(array![[0.05], [3.0]], array![0.05, 2.0], Activation::Relu).unwrap(),
                Layer::new(array![[1.0, 1.0]], array![0.0], Activation::Linear).unwrap(),
            ],
        )
        .unwrap();
        let pruned = net.prune_by_weight_norm(0.5).unwrap();
        let l0 = &pruned.layers()[0];
        assert_eq!(l0.weights.row(0).to_vec(), vec![0.0]);
        assert_eq!(l0.bias[0], 0.0);
        assert_eq!(l0.weights.row(1).to_vec(), vec![3.0]);
        assert_eq!(pruned.layers()[1].weights.column(0).to_vec(), vec![0.0]);
        assert_eq!(pruned.layers()[1].weights.column(1).to_vec(), vec![1.0]);
    }

    #[test]
    fn prune_ties_break_by_layer_then_index() {
        let net = Network::new(
            "ties",
            1,
            vec![
                Layer::new(array![[1.0], [1.0]], array![0.0, 0.0], Activation::Relu).unwrap(),
                Layer::new(array![[1.0, 0.0], [0.0, 1.0]], array![0.0, 0.0], Activation::Relu)
                    .unwrap(),
                Layer::new(array![[1.0, 1.0]], array![0.0], Activation::Linear).unwrap(),
            ],
        )
        .unwrap();
        let pruned = net.prune_by_weight_norm(0.5).unwrap();
        // All four neurons have norm 1; the two in layer 0 go first.
        assert_eq!(pruned.layers()[0].weights.column(0).to_vec(), vec![0.0, 0.0]);
        assert!(pruned.layers()[1].weights.iter().all(|&w| w == 0.0));
        assert_eq!(pruned.layers()[2].weights.row(0).to_vec(), vec![1.0, 1.0]);
    }

    #[test]
    fn prune_rejects_bad_fraction() {
        let net = relu_then_identity();
        assert!(net.prune_by_weight_norm(1.0).is_err());
        assert!(net.prune_by_weight_norm(-0.1).is_err());
    }

    #[test]
    fn pad_rejects_depth_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Network::random("a", 2, &[3], 1, &mut rng);
        let b = Network::random("b", 2, &[3, 3], 1, &mut rng);
        assert!(matches!(
            pad_to_common_shape(&a, &b),
            Err(Error::IncompatibleArchitectures(_))
        ));
    }

    #[test]
    fn pad_equal_shapes_is_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Network::random("a", 2, &[3], 2, &mut rng);
        let b = Network::random("b", 2, &[3], 2, &mut rng);
        let (pa, pb) = pad_to_common_shape(&a, &b).unwrap();
        assert_eq!(pa, a);
        assert_eq!(pb, b);
    }

    #[test]
    fn padded_network_evaluates_identically() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = Network::random("a", 3, &[3], 2, &mut rng);
        let b = Network::random("b", 3, &[5], 2, &mut rng);
        let (pa, pb) = pad_to_common_shape(&a, &b).unwrap();
        assert_eq!(pa.widths(), vec![5, 2]);
        assert_eq!(pb.widths(), vec![5, 2]);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let (ya, yp) = (a.evaluate(&x).unwrap(), pa.evaluate(&x).unwrap());
            assert!(ya.iter().zip(&yp).all(|(u, v)| (u - v).abs() <= 1e-12));
            assert_eq!(b.evaluate(&x).unwrap(), pb.evaluate(&x).unwrap());
        }
    }

    /// Rebuilds `net` without the hidden neurons whose incoming row and bias are all zero.
    fn drop_dead_neurons(net: &Network) -> Network {
        let mut layers = Vec::new();
        let mut keep_in: Vec<usize> = (0..net.input_dim()).collect();
        for layer in net.layers() {
            let keep_out: Vec<usize> = if layer.activation == Activation::Relu {
                (0..layer.output_dim())
                    .filter(|&r| layer.bias[r] != 0.0 || layer.weights.row(r).iter().any(|&w| w != 0.0))
                    .collect()
            } else {
                (0..layer.output_dim()).collect()
            };
            let w = Array2::from_shape_fn((keep_out.len(), keep_in.len()), |(i, j)| {
                layer.weights[[keep_out[i], keep_in[j]]]
            });
            let b = Array1::from_shape_fn(keep_out.len(), |i| layer.bias[keep_out[i]]);
            layers.push(Layer::new(w, b, layer.activation).unwrap());
            keep_in = keep_out;
        }
        Network::new("reduced", net.input_dim(), layers).unwrap()
    }

    #[test]
    fn pruned_network_equals_structurally_reduced_network() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for fraction in [0.1, 0.3, 0.5] {
            let net = Network::random("r", 4, &[8, 6], 3, &mut rng);
            let pruned = net.prune_by_weight_norm(fraction).unwrap();
            let reduced = drop_dead_neurons(&pruned);
            let expected = (fraction * 14.0_f64).floor() as usize;
            let total: usize = reduced.widths()[..2].iter().sum();
            assert_eq!(14 - total, expected);
            for _ in 0..100 {
                let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
                let (p, r) = (pruned.evaluate(&x).unwrap(), reduced.evaluate(&x).unwrap());
                assert!(p.iter().zip(&r).all(|(u, v)| (u - v).abs() <= 1e-12));
            }
        }
    }
}
