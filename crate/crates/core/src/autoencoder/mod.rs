//! Fully-connected autoencoder with hand-written backpropagation.
//!
//! Each encoder layer computes `act(W·A + b·1ᵀ)`; the decoder mirrors the
//! encoder dimensions. Hidden layers use ReLU. The latent layer defaults to
//! ReLU and the output layer to identity; both are configurable.

mod adam;
mod checkpoint;

pub use adam::{AdamConfig, OptimizerState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg::frobenius_sq;
use crate::self_expression::{LandmarkMatrix, ProjectorP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, m: &mut DMatrix<f64>) {
        if self == Activation::Relu {
            m.apply(|v| *v = v.max(0.0));
        }
    }

    /// Multiply `grad` by the derivative at `pre`; the ReLU subgradient at 0
    /// is 0.
    fn backprop(self, grad: &mut DMatrix<f64>, pre: &DMatrix<f64>) {
        if self == Activation::Relu {
            grad.zip_apply(pre, |g, p| {
                if p <= 0.0 {
                    *g = 0.0
                }
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: DMatrix::zeros(out_dim, in_dim),
            bias: DVector::zeros(out_dim),
        }
    }

    fn affine(&self, input: &DMatrix<f64>) -> DMatrix<f64> {
        let mut pre = &self.weight * input;
        for mut col in pre.column_iter_mut() {
            col += &self.bias;
        }
        pre
    }
}

/// Encoder and decoder parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub encoder: Vec<Layer>,
    pub decoder: Vec<Layer>,
    dims: Vec<usize>,
    pub latent_activation: Activation,
    pub output_activation: Activation,
    /// When false, biases stay at zero and receive no gradient.
    pub use_bias: bool,
}

/// Weights drawn as `N(0, 1)/√fan_in`, biases zero.
pub fn init_network(layer_dims: &[usize], seed: u64) -> Result<NetworkParams> {
    if layer_dims.len() < 2 {
        return Err(Error::config(
            "layer_dims needs at least input and latent dimensions",
        ));
    }
    if layer_dims.iter().any(|&d| d == 0) {
        return Err(Error::config("every layer dimension must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |out_dim: usize, in_dim: usize| {
        let scale = 1.0 / (in_dim as f64).sqrt();
        Layer {
            weight: DMatrix::from_fn(out_dim, in_dim, |_, _| {
                scale * rng.sample::<f64, _>(StandardNormal)
            }),
            bias: DVector::zeros(out_dim),
        }
    };
    let encoder = layer_dims
        .windows(2)
        .map(|w| draw(w[1], w[0]))
        .collect::<Vec<_>>();
    let decoder = layer_dims
        .windows(2)
        .rev()
        .map(|w| draw(w[0], w[1]))
        .collect::<Vec<_>>();
    Ok(NetworkParams {
        encoder,
        decoder,
        dims: layer_dims.to_vec(),
        latent_activation: Activation::Relu,
        output_activation: Activation::Identity,
        use_bias: true,
    })
}

/// Forward-pass intermediates kept for backpropagation.
struct Trace {
    /// inputs to each layer, encoder then decoder, plus the final output
    activations: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
}

impl NetworkParams {
    /// Build from explicit layers. Decoder layers must mirror the encoder.
    pub fn from_layers(encoder: Vec<Layer>, decoder: Vec<Layer>) -> Result<Self> {
        if encoder.is_empty() || encoder.len() != decoder.len() {
            return Err(Error::shape(
                "encoder and decoder need the same non-zero layer count",
            ));
        }
        let mut dims = vec![encoder[0].weight.ncols()];
        for layer in &encoder {
            if layer.weight.ncols() != *dims.last().unwrap() || layer.bias.len() != layer.weight.nrows() {
                return Err(Error::shape("encoder layers do not chain"));
            }
            dims.push(layer.weight.nrows());
        }
        let mut expect = dims.clone();
        expect.reverse();
        for (layer, w) in decoder.iter().zip(expect.windows(2)) {
            if layer.weight.shape() != (w[1], w[0]) || layer.bias.len() != w[1] {
                return Err(Error::shape("decoder does not mirror encoder dimensions"));
            }
        }
        Ok(Self {
            encoder,
            decoder,
            dims,
            latent_activation: Activation::Relu,
            output_activation: Activation::Identity,
            use_bias: true,
        })
    }

    pub fn with_activations(mut self, latent: Activation, output: Activation) -> Self {
        self.latent_activation = latent;
        self.output_activation = output;
        self
    }

    /// Disable biases: they are zeroed and frozen.
    pub fn without_bias(mut self) -> Self {
        self.use_bias = false;
        for layer in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            layer.bias.fill(0.0);
        }
        self
    }

    /// `[D, h₁, …, d]`.
    pub fn layer_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn latent_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn parameter_count(&self) -> usize {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    fn activation(&self, layer: usize) -> Activation {
        let depth = self.encoder.len();
        if layer == depth - 1 {
            self.latent_activation
        } else if layer == 2 * depth - 1 {
            self.output_activation
        } else {
            Activation::Relu
        }
    }

    fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.encoder.iter().chain(self.decoder.iter())
    }

    /// Parameter slices in canonical order: encoder layers then decoder
    /// layers, each as weight (column-major) then bias.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.input_dim() {
            return Err(Error::shape(format!(
                "input has {} rows, network expects {}",
                x.nrows(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn run(&self, input: &DMatrix<f64>, range: std::ops::Range<usize>, keep: bool) -> (DMatrix<f64>, Option<Trace>) {
        let layers: Vec<&Layer> = self.layers().collect();
        let mut trace = keep.then(|| Trace {
            activations: vec![input.clone()],
            pre: Vec::new(),
        });
        let mut current = input.clone();
        for idx in range {
            let pre = layers[idx].affine(&current);
            let mut out = pre.clone();
            self.activation(idx).apply(&mut out);
            if let Some(t) = trace.as_mut() {
                t.pre.push(pre);
                t.activations.push(out.clone());
            }
            current = out;
        }
        (current, trace)
    }

    pub fn encode(&self, x: &DataMatrix) -> Result<DMatrix<f64>> {
        self.check_input(x.values())?;
        Ok(self.run(x.values(), 0..self.encoder.len(), false).0)
    }

    pub fn decode(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if z.nrows() != self.latent_dim() {
            return Err(Error::shape(format!(
                "latent has {} rows, network expects {}",
                z.nrows(),
                self.latent_dim()
            )));
        }
        let depth = self.encoder.len();
        Ok(self.run(z, depth..2 * depth, false).0)
    }

    /// `(Z, X̂)` in one pass.
    pub fn forward(&self, x: &DataMatrix) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let z = self.encode(x)?;
        let x_hat = self.decode(&z)?;
        Ok((z, x_hat))
    }
}

/// `(1/n)·‖X − X̂‖²_F`.
pub fn reconstruction_loss(x: &DMatrix<f64>, x_hat: &DMatrix<f64>) -> Result<f64> {
    if x.shape() != x_hat.shape() {
        return Err(Error::shape(format!(
            "reconstruction {:?} vs input {:?}",
            x_hat.shape(),
            x.shape()
        )));
    }
    Ok(frobenius_sq(&(x - x_hat)) / x.ncols() as f64)
}

/// `‖Z − L·Pᵀ‖²_F`.
pub fn subspace_loss(z: &DMatrix<f64>, l: &LandmarkMatrix, p: &ProjectorP) -> Result<f64> {
    Ok(frobenius_sq(&(z - subspace_target(z, l, p)?)))
}

fn subspace_target(z: &DMatrix<f64>, l: &LandmarkMatrix, p: &ProjectorP) -> Result<DMatrix<f64>> {
    let (lv, pv) = (l.values(), p.values());
    if lv.nrows() != z.nrows() || pv.nrows() != z.ncols() || lv.ncols() != pv.ncols() {
        return Err(Error::shape(format!(
            "Z {:?}, L {:?}, P {:?} are inconsistent",
            z.shape(),
            lv.shape(),
            pv.shape()
        )));
    }
    Ok(lv * pv.transpose())
}

/// `(1/n)‖X − X̂‖²_F + ‖Z − L·Pᵀ‖²_F`.
pub fn joint_loss(
    x: &DMatrix<f64>,
    x_hat: &DMatrix<f64>,
    z: &DMatrix<f64>,
    l: &LandmarkMatrix,
    p: &ProjectorP,
) -> Result<f64> {
    joint_loss_weighted(x, x_hat, z, l, p, 1.0)
}

pub fn joint_loss_weighted(
    x: &DMatrix<f64>,
    x_hat: &DMatrix<f64>,
    z: &DMatrix<f64>,
    l: &LandmarkMatrix,
    p: &ProjectorP,
    subspace_weight: f64,
) -> Result<f64> {
    Ok(reconstruction_loss(x, x_hat)? + subspace_weight * subspace_loss(z, l, p)?)
}

/// Fixed landmark factorization whose subspace term joins the loss.
#[derive(Debug, Clone, Copy)]
pub struct SubspaceTarget<'a> {
    pub landmarks: &'a LandmarkMatrix,
    pub projector: &'a ProjectorP,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub reconstruction: f64,
    /// Unweighted `‖Z − L·Pᵀ‖²_F`, zero when no target is given.
    pub subspace: f64,
    pub joint: f64,
}

/// Gradients with the same layout as [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub encoder: Vec<Layer>,
    pub decoder: Vec<Layer>,
}

impl Gradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }
}

/// Loss and its gradient with respect to every weight and bias. The
/// landmark factorization in `target` is held fixed; its term reaches the
/// parameters only through the encoder.
pub fn backward(
    params: &NetworkParams,
    x: &DataMatrix,
    target: Option<SubspaceTarget<'_>>,
) -> Result<(Gradients, LossBreakdown)> {
    let xv = x.values();
    params.check_input(xv)?;
    let depth = params.encoder.len();
    let total = 2 * depth;
    let (x_hat, trace) = params.run(xv, 0..total, true);
    let trace = trace.expect("trace requested");
    let z = &trace.activations[depth];
    let n = xv.ncols() as f64;

    let reconstruction = frobenius_sq(&(&x_hat - xv)) / n;
    let mut grad = (&x_hat - xv) * (2.0 / n);

    let layers: Vec<&Layer> = params.layers().collect();
    let mut grads: Vec<Layer> = layers
        .iter()
        .map(|l| Layer::zeros(l.weight.nrows(), l.weight.ncols()))
        .collect();

    let mut subspace = 0.0;
    let mut weight = 0.0;
    let mut residual = None;
    if let Some(t) = target {
        let tz = subspace_target(z, t.landmarks, t.projector)?;
        let r = z - tz;
        subspace = frobenius_sq(&r);
        weight = t.weight;
        residual = Some(r);
    }

    for idx in (0..total).rev() {
        if idx == depth - 1 {
            if let Some(r) = residual.as_ref() {
                if weight != 0.0 {
                    grad += r * (2.0 * weight);
                }
            }
        }
        params.activation(idx).backprop(&mut grad, &trace.pre[idx]);
        let input = &trace.activations[idx];
        grads[idx].weight = &grad * input.transpose();
        if params.use_bias {
            grads[idx].bias = grad.column_sum();
        }
        if idx > 0 {
            grad = layers[idx].weight.tr_mul(&grad);
        }
    }

    let decoder = grads.split_off(depth);
    Ok((
        Gradients {
            encoder: grads,
            decoder,
        },
        LossBreakdown {
            reconstruction,
            subspace,
            joint: reconstruction + weight * subspace,
        },
    ))
}

/// Full-batch Adam on the reconstruction loss alone. Returns the loss
/// before each step.
pub fn pretrain(
    params: &mut NetworkParams,
    x: &DataMatrix,
    epochs: usize,
    optimizer: &mut OptimizerState,
) -> Result<Vec<f64>> {
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let (grads, loss) = backward(params, x, None)?;
        if !loss.reconstruction.is_finite() {
            return Err(Error::Divergence { iteration: epoch });
        }
        losses.push(loss.reconstruction);
        optimizer.step(params, &grads)?;
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{random_column_orthonormal, standard_normal_matrix};

    fn identity_net(d: usize) -> NetworkParams {
        let layer = || Layer {
            weight: DMatrix::identity(d, d),
            bias: DVector::zeros(d),
        };
        NetworkParams::from_layers(vec![layer()], vec![layer()]).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_mirrored() {
        let a = init_network(&[4, 2], 9).unwrap();
        let b = init_network(&[4, 2], 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.encoder[0].weight.shape(), (2, 4));
        assert_eq!(a.decoder[0].weight.shape(), (4, 2));
    }

    #[test]
    fn init_biases_are_zero() {
        let net = init_network(&[8, 4, 2], 1).unwrap();
        for l in net.encoder.iter().chain(&net.decoder) {
            assert!(l.bias.iter().all(|&b| b == 0.0));
        }
        assert_eq!(net.decoder[0].weight.shape(), (4, 2));
        assert_eq!(net.decoder[1].weight.shape(), (8, 4));
    }

    #[test]
    fn init_rejects_bad_dims() {
        assert!(matches!(init_network(&[4], 0), Err(Error::Config(_))));
        assert!(matches!(init_network(&[4, 0], 0), Err(Error::Config(_))));
    }

    #[test]
    fn relu_identity_on_nonnegative_and_clamps_negative() {
        let net = identity_net(3);
        let pos = DataMatrix::new(DMatrix::from_fn(3, 4, |i, j| (i + j) as f64)).unwrap();
        assert_eq!(&net.encode(&pos).unwrap(), pos.values());
        let neg = DataMatrix::new(-DMatrix::<f64>::identity(3, 3)).unwrap();
        assert_eq!(net.encode(&neg).unwrap(), DMatrix::zeros(3, 3));
    }

    #[test]
    fn identity_decoder_and_bias_columns() {
        let mut net = identity_net(2);
        let z = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 3.0, 4.0]);
        assert_eq!(net.decode(&z).unwrap(), z);
        net.decoder[0].bias = DVector::from_vec(vec![0.5, -1.5]);
        let out = net.decode(&DMatrix::zeros(2, 3)).unwrap();
        for col in out.column_iter() {
            assert_eq!(col.as_slice(), &[0.5, -1.5]);
        }
    }

    #[test]
    fn encode_matches_scalar_recomputation() {
        let net = init_network(&[5, 3], 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DataMatrix::new(standard_normal_matrix(5, 7, &mut rng)).unwrap();
        let z = net.encode(&x).unwrap();
        let w = &net.encoder[0].weight;
        for i in 0..3 {
            for j in 0..7 {
                let mut acc = net.encoder[0].bias[i];
                for k in 0..5 {
                    acc += w[(i, k)] * x.values()[(k, j)];
                }
                assert!((z[(i, j)] - acc.max(0.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn decode_matches_scalar_recomputation() {
        let mut net = init_network(&[4, 2], 8).unwrap();
        net.decoder[0].bias = DVector::from_vec(vec![0.1, -0.2, 0.3, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = standard_normal_matrix(2, 5, &mut rng);
        let out = net.decode(&z).unwrap();
        let w = &net.decoder[0].weight;
        for i in 0..4 {
            for j in 0..5 {
                let acc = net.decoder[0].bias[i] + w[(i, 0)] * z[(0, j)] + w[(i, 1)] * z[(1, j)];
                assert!((out[(i, j)] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let net = init_network(&[4, 2], 0).unwrap();
        let x = DataMatrix::new(DMatrix::zeros(3, 2)).unwrap();
        assert!(matches!(net.encode(&x), Err(Error::Shape(_))));
        assert!(matches!(net.decode(&DMatrix::zeros(3, 2)), Err(Error::Shape(_))));
        assert!(matches!(
            reconstruction_loss(&DMatrix::zeros(2, 2), &DMatrix::zeros(2, 3)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn reconstruction_loss_values() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert_eq!(reconstruction_loss(&i2, &i2).unwrap(), 0.0);
        assert_eq!(reconstruction_loss(&i2, &DMatrix::zeros(2, 2)).unwrap(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = standard_normal_matrix(3, 4, &mut rng);
        let b = standard_normal_matrix(3, 4, &mut rng);
        let mut naive = 0.0;
        for i in 0..3 {
            for j in 0..4 {
                naive += (a[(i, j)] - b[(i, j)]).powi(2);
            }
        }
        assert!((reconstruction_loss(&a, &b).unwrap() - naive / 4.0).abs() < 1e-12);
    }

    #[test]
    fn joint_loss_values() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        let p = ProjectorP::new(i2.clone()).unwrap();
        let l = LandmarkMatrix::new(i2.clone()).unwrap();
        assert_eq!(joint_loss(&i2, &i2, &i2, &l, &p).unwrap(), 0.0);
        let l0 = LandmarkMatrix::new(DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(joint_loss(&i2, &i2, &i2, &l0, &p).unwrap(), 2.0);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = standard_normal_matrix(4, 6, &mut rng);
        let xh = standard_normal_matrix(4, 6, &mut rng);
        let z = standard_normal_matrix(2, 6, &mut rng);
        let l = LandmarkMatrix::new(standard_normal_matrix(2, 3, &mut rng)).unwrap();
        let p = ProjectorP::new(random_column_orthonormal(6, 3, &mut rng)).unwrap();
        let sep = reconstruction_loss(&x, &xh).unwrap()
            + frobenius_sq(&(&z - l.values() * p.values().transpose()));
        assert!((joint_loss(&x, &xh, &z, &l, &p).unwrap() - sep).abs() < 1e-12);
    }

    #[test]
    fn zero_network_at_origin_has_zero_gradient() {
        let mut net = init_network(&[4, 2], 0).unwrap();
        for s in net.slices_mut() {
            s.fill(0.0);
        }
        let x = DataMatrix::new(DMatrix::zeros(4, 3)).unwrap();
        let (g, loss) = backward(&net, &x, None).unwrap();
        assert_eq!(g.max_abs(), 0.0);
        assert_eq!(loss.joint, 0.0);
    }

    #[test]
    fn frozen_bias_gets_no_gradient() {
        let net = init_network(&[4, 3, 2], 3).unwrap().without_bias();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DataMatrix::new(standard_normal_matrix(4, 5, &mut rng)).unwrap();
        let (g, _) = backward(&net, &x, None).unwrap();
        for l in g.encoder.iter().chain(&g.decoder) {
            assert!(l.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn pretraining_reduces_reconstruction() {
        let mut net = init_network(&[6, 3], 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DataMatrix::new(standard_normal_matrix(6, 20, &mut rng)).unwrap();
        let mut opt = OptimizerState::new(&net, AdamConfig { learning_rate: 1e-2, ..Default::default() });
        let losses = pretrain(&mut net, &x, 200, &mut opt).unwrap();
        assert!(losses.last().unwrap() < &(0.8 * losses[0]));
    }

    #[test]
    fn roundtrip_shape() {
        for dims in [vec![5, 2], vec![7, 4, 3], vec![3, 3, 3, 1]] {
            let net = init_network(&dims, 1).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let x = DataMatrix::new(standard_normal_matrix(dims[0], 4, &mut rng)).unwrap();
            let (_, xh) = net.forward(&x).unwrap();
            assert_eq!(xh.shape(), x.values().shape());
        }
    }
}
