//! Fully connected per-voxel regressor.
//!
//! An MLP with ReLU hidden layers and a linear output maps the 162
//! neighborhood SH features to FOD coefficients. Inverted dropout on
//! the hidden activations is active only during training, so inference
//! needs no rescaling. Matrix products go through [`crate::parallel`],
//! which keeps results bitwise identical with and without rayon.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::{parallel, Error, Result};

#[derive(Debug, Clone)]
pub struct EstimatorModel {
    pub layer_dims: Vec<usize>,
    /// weights[l] has shape (layer_dims[l+1], layer_dims[l]).
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub dropout_rate: f64,
    pub rng_seed: u64,
}

/// Parameter gradients, shaped like the model.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Intermediate state of one forward pass, kept for backprop.
///
/// `inputs[l]` is the activation entering layer `l` (post-dropout for
/// hidden layers); `gates[l]` combines the ReLU derivative and the
/// dropout mask of hidden layer `l`, so the backward pass multiplies
/// by a single matrix per layer.
pub struct ForwardCache {
    pub inputs: Vec<Array2<f64>>,
    pub gates: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl EstimatorModel {
    /// Seeded Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)),
    /// zero biases.
    pub fn new(layer_dims: &[usize], dropout_rate: f64, rng_seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 {
            return Err(Error::invalid("need at least input and output layers"));
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("zero-width layer"));
        }
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::invalid(format!(
                "dropout rate {dropout_rate} outside [0,1)"
            )));
        }
        let mut rng = crate::seed::rng(rng_seed, "init", 0);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_dims.len() - 1 {
            let (fan_in, fan_out) = (layer_dims[l], layer_dims[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| {
                rng.random_range(-bound..bound)
            });
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(EstimatorModel {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            dropout_rate,
            rng_seed,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() + 1 != self.layer_dims.len() || self.biases.len() != self.weights.len()
        {
            return Err(Error::invalid("layer count mismatch"));
        }
        for l in 0..self.weights.len() {
            let want = (self.layer_dims[l + 1], self.layer_dims[l]);
            if self.weights[l].dim() != want || self.biases[l].len() != want.0 {
                return Err(Error::invalid(format!("layer {l} shape mismatch")));
            }
        }
        let finite = self
            .weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("non-finite parameter"));
        }
        Ok(())
    }

    /// Forward pass on a batch (one sample per column). In train mode
    /// dropout masks are drawn from `rng`; in eval mode `rng` is
    /// untouched.
    pub fn forward(
        &self,
        x: &Array2<f64>,
        train_mode: bool,
        rng: &mut ChaCha8Rng,
    ) -> Array2<f64> {
        self.forward_cached(x, train_mode, rng).output
    }

    pub fn forward_cached(
        &self,
        x: &Array2<f64>,
        train_mode: bool,
        rng: &mut ChaCha8Rng,
    ) -> ForwardCache {
        assert_eq!(x.nrows(), self.n_inputs(), "feature length mismatch");
        let n_layers = self.n_layers();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut gates = Vec::with_capacity(n_layers - 1);
        let mut a = x.clone();
        for l in 0..n_layers {
            inputs.push(a.clone());
            let mut z = parallel::matmul(&self.weights[l].view(), &a.view());
            for mut col in z.axis_iter_mut(Axis(1)) {
                col += &self.biases[l];
            }
            if l + 1 == n_layers {
                a = z;
                break;
            }
            let mut gate = z.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            if train_mode && self.dropout_rate > 0.0 {
                let keep = 1.0 - self.dropout_rate;
                gate.mapv_inplace(|g| {
                    let kept = rng.random::<f64>() >= self.dropout_rate;
                    if kept {
                        g / keep
                    } else {
                        0.0
                    }
                });
            }
            // gate is zero wherever z <= 0, so z*gate is the dropped-out ReLU
            a = z * &gate;
            gates.push(gate);
        }
        ForwardCache {
            inputs,
            gates,
            output: a,
        }
    }

    /// Loss and exact parameter gradients for a batch. Dropout is
    /// active when `rng` is given, matching the training-time forward
    /// pass the gradients must differentiate.
    pub fn backward(
        &self,
        x: &Array2<f64>,
        gt: &Array2<f64>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> (f64, Gradients) {
        let mut scratch = crate::seed::rng(0, "unused", 0);
        let (train_mode, rng) = match rng {
            Some(r) => (true, r),
            None => (false, &mut scratch),
        };
        let cache = self.forward_cached(x, train_mode, rng);
        let loss = loss_mse(&cache.output, gt);

        let denom = (gt.len()) as f64;
        let mut delta = (&cache.output - gt) * (2.0 / denom);
        let mut gw = vec![Array2::zeros((0, 0)); self.n_layers()];
        let mut gb = vec![Array1::zeros(0); self.n_layers()];
        for l in (0..self.n_layers()).rev() {
            gw[l] = parallel::matmul(&delta.view(), &cache.inputs[l].t());
            gb[l] = delta.sum_axis(Axis(1));
            if l > 0 {
                delta = parallel::matmul(&self.weights[l].t(), &delta.view()) * &cache.gates[l - 1];
            }
        }
        (
            loss,
            Gradients {
                weights: gw,
                biases: gb,
            },
        )
    }
}

/// Mean over all coefficients (and samples) of the squared difference.
pub fn loss_mse(pred: &Array2<f64>, gt: &Array2<f64>) -> f64 {
    assert_eq!(pred.dim(), gt.dim(), "prediction/target shape mismatch");
    let n = pred.len() as f64;
    pred.iter()
        .zip(gt.iter())
        .map(|(p, g)| (p - g) * (p - g))
        .sum::<f64>()
        / n
}
