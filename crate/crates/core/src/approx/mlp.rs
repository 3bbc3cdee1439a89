use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected network with ReLU between layers and a linear output.
///
/// All weights and biases live in one flat vector so optimizers, Polyak
/// averaging, and snapshots treat the network as a single tensor. Layer `l`
/// stores a row-major `(in, out)` weight block followed by its `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations recorded by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpTape {
    /// Input to each layer; entries past the first are post-ReLU.
    inputs: Vec<Array2<f64>>,
}

impl Mlp {
    /// Fan-in scaled uniform initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        assert!(sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        let mut params = Vec::with_capacity(Self::count_params(sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[0] * w[1] + w[1]) {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Self {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        if params.len() != Self::count_params(sizes) {
            return Err(Error::Structural(format!(
                "{} parameters for layer sizes {sizes:?}",
                params.len()
            )));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn count_params(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// `(weight_offset, bias_offset, fan_in, fan_out)` of layer `l`.
    pub fn layer_layout(&self, l: usize) -> (usize, usize, usize, usize) {
        let mut off = 0;
        for w in self.sizes.windows(2).take(l) {
            off += w[0] * w[1] + w[1];
        }
        let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
        (off, off + fan_in * fan_out, fan_in, fan_out)
    }

    fn weight(&self, l: usize) -> ArrayView2<'_, f64> {
        let (w, b, i, o) = self.layer_layout(l);
        ArrayView2::from_shape((i, o), &self.params[w..b]).unwrap()
    }

    fn bias(&self, l: usize) -> ArrayView1<'_, f64> {
        let (_, b, _, o) = self.layer_layout(l);
        ArrayView1::from(&self.params[b..b + o])
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, MlpTape)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Structural(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let n = self.num_layers();
        let mut inputs = Vec::with_capacity(n);
        let mut h = x.to_owned();
        for l in 0..n {
            let mut y = Array2::<f64>::zeros((h.nrows(), self.sizes[l + 1]));
            general_mat_mul(1.0, &h, &self.weight(l), 0.0, &mut y);
            y += &self.bias(l);
            if l + 1 < n {
                y.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(h);
            h = y;
        }
        Ok((h, MlpTape { inputs }))
    }

    /// Forward pass without keeping a tape.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.forward(x).map(|(y, _)| y)
    }

    /// Backpropagates `grad_out` (gradient of the loss with respect to the
    /// network output), accumulating parameter gradients into `grad_params`
    /// when given. Returns the gradient with respect to the input.
    pub fn backward(
        &self,
        tape: &MlpTape,
        grad_out: ArrayView2<'_, f64>,
        mut grad_params: Option<&mut [f64]>,
        want_input_grad: bool,
    ) -> Option<Array2<f64>> {
        let n = self.num_layers();
        let mut dy = grad_out.to_owned();
        for l in (0..n).rev() {
            let x = &tape.inputs[l];
            if let Some(g) = grad_params.as_deref_mut() {
                let (w_off, b_off, i, o) = self.layer_layout(l);
                let (gw, gb) = g[w_off..b_off + o].split_at_mut(b_off - w_off);
                let mut gw = ArrayViewMut2::from_shape((i, o), gw).unwrap();
                general_mat_mul(1.0, &x.t(), &dy, 1.0, &mut gw);
                let mut gb = ArrayViewMut1::from(gb);
                gb += &dy.sum_axis(Axis(0));
            }
            if l == 0 && !want_input_grad {
                return None;
            }
            let mut dx = Array2::<f64>::zeros((dy.nrows(), self.sizes[l]));
            general_mat_mul(1.0, &dy, &self.weight(l).t(), 0.0, &mut dx);
            if l > 0 {
                Zip::from(&mut dx).and(x).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            dy = dx;
        }
        Some(dy)
    }

    /// `self ← (1 - tau) * self + tau * online`.
    pub fn polyak_update(&mut self, online: &Mlp, tau: f64) {
        assert_eq!(self.sizes, online.sizes, "polyak update between different shapes");
        for (t, o) in self.params.iter_mut().zip(&online.params) {
            *t = (1.0 - tau) * *t + tau * o;
        }
    }

    /// Named tensors (`layer{l}.weight`, `layer{l}.bias`) for snapshots.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        (0..self.num_layers())
            .flat_map(|l| {
                let (w, b, i, o) = self.layer_layout(l);
                [
                    (format!("layer{l}.weight"), vec![i, o], &self.params[w..b]),
                    (format!("layer{l}.bias"), vec![o], &self.params[b..b + o]),
                ]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_matches_hand_computation() {
        // 2 -> 2 -> 1 with fixed parameters
        let params = vec![
            1.0, -1.0, 0.5, 2.0, // W0 (2x2)
            0.0, -3.0, // b0
            1.0, 1.0, // W1 (2x1)
            0.25, // b1
        ];
        let net = Mlp::from_params(&[2, 2, 1], params).unwrap();
        let x = array![[1.0, 2.0]];
        let (y, _) = net.forward(x.view()).unwrap();
        // h = relu([1*1 + 2*0.5 + 0, 1*-1 + 2*2 - 3]) = relu([2, 0]) = [2, 0]
        assert_eq!(y[[0, 0]], 2.25);
    }

    #[test]
    fn polyak_geometric_weights() {
        let mut target = Mlp::from_params(&[1, 1], vec![0.0, 0.0]).unwrap();
        let online = Mlp::from_params(&[1, 1], vec![1.0, 1.0]).unwrap();
        let tau = 0.005;
        for _ in 0..100 {
            target.polyak_update(&online, tau);
        }
        let expected = 1.0 - (1.0 - tau).powi(100);
        assert!((target.params()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn polyak_tracks_history() {
        // online parameter follows a known sequence; target is its exponentially weighted history
        let tau = 0.1;
        let mut target = Mlp::from_params(&[1, 1], vec![2.0, 0.0]).unwrap();
        let seq = [1.0, -1.0, 3.0, 0.5];
        for &p in &seq {
            target.polyak_update(&Mlp::from_params(&[1, 1], vec![p, 0.0]).unwrap(), tau);
        }
        let n = seq.len() as i32;
        let mut expected = (1.0f64 - tau).powi(n) * 2.0;
        for (k, &p) in seq.iter().enumerate() {
            expected += tau * (1.0f64 - tau).powi(n - 1 - k as i32) * p;
        }
        assert!((target.params()[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn backward_input_grad_shape_and_dimension_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::new(&[3, 5, 2], &mut rng);
        let x = Array2::from_elem((4, 3), 0.3);
        let (y, tape) = net.forward(x.view()).unwrap();
        let mut g = vec![0.0; net.num_params()];
        let dx = net
            .backward(&tape, Array2::ones(y.raw_dim()).view(), Some(&mut g), true)
            .unwrap();
        assert_eq!(dx.dim(), (4, 3));
        assert!(net.forward(Array2::zeros((1, 2)).view()).is_err());
    }
}
