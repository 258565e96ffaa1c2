//! Convolutional generators for the spatial and temporal factors and the
//! learned latent trajectory.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::difftensor::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::scalar::{Cplx, Real};

pub const N_LAYERS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetKind {
    /// 2-D convolutions over `[2r, H, W]`.
    Spatial,
    /// 1-D convolutions over `[d, n_f]`.
    Temporal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T: Real> {
    /// `[c_out, c_in, k, k]` (spatial) or `[c_out, c_in, k]` (temporal).
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Four same-padded convolutions with ReLU after the first three.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorNet<T: Real> {
    kind: NetKind,
    layers: Vec<Layer<T>>,
}

fn layer_shape(kind: NetKind, c_out: usize, c_in: usize, k: usize) -> Vec<usize> {
    match kind {
        NetKind::Spatial => vec![c_out, c_in, k, k],
        NetKind::Temporal => vec![c_out, c_in, k],
    }
}

impl<T: Real> GeneratorNet<T> {
    /// Validates layer count, kernel shapes and channel chaining.
    pub fn from_layers(kind: NetKind, layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.len() != N_LAYERS {
            return Err(Error::shape("GeneratorNet", format!("expected {N_LAYERS} layers, got {}", layers.len())));
        }
        let rank = match kind {
            NetKind::Spatial => 4,
            NetKind::Temporal => 3,
        };
        for (i, l) in layers.iter().enumerate() {
            let ws = l.weights.shape();
            if ws.len() != rank || l.bias.shape() != [ws[0]] {
                return Err(Error::shape(
                    "GeneratorNet",
                    format!("layer {i}: weights {ws:?}, bias {:?} for a {kind:?} net", l.bias.shape()),
                ));
            }
            if i > 0 && layers[i - 1].weights.shape()[0] != ws[1] {
                return Err(Error::shape(
                    "GeneratorNet",
                    format!("layer {i} expects {} channels, layer {} emits {}", ws[1], i - 1, layers[i - 1].weights.shape()[0]),
                ));
            }
        }
        if kind == NetKind::Spatial && (layers[0].weights.shape()[1] != layers[3].weights.shape()[0]) {
            return Err(Error::shape("GeneratorNet", "spatial net must map 2r channels to 2r channels"));
        }
        Ok(Self { kind, layers })
    }

    /// Zero-initialized net with the given channel widths `[c0, c1, c2, c3, c4]`.
    pub fn zeros(kind: NetKind, widths: [usize; N_LAYERS + 1], kernel: usize) -> Result<Self> {
        let layers = (0..N_LAYERS)
            .map(|i| Layer {
                weights: Tensor::zeros(&layer_shape(kind, widths[i + 1], widths[i], kernel)),
                bias: Tensor::zeros(&[widths[i + 1]]),
            })
            .collect();
        Self::from_layers(kind, layers)
    }

    /// Uniform `±1/√fan_in` weights and biases.
    pub fn random<R: Rng + ?Sized>(kind: NetKind, widths: [usize; N_LAYERS + 1], kernel: usize, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(kind, widths, kernel)?;
        for l in &mut net.layers {
            let ws = l.weights.shape();
            let fan_in: usize = ws[1..].iter().product();
            let bound = 1.0 / (fan_in as f64).sqrt();
            for w in l.weights.data_mut().iter_mut().chain(l.bias.data_mut().iter_mut()) {
                *w = T::lit(rng.random_range(-bound..bound));
            }
        }
        Ok(net)
    }

    /// `2r → 2r → 2r → 2r → 2r` spatial generator.
    pub fn spatial_widths(rank: usize) -> [usize; N_LAYERS + 1] {
        [2 * rank; N_LAYERS + 1]
    }

    /// `d → hidden → hidden → hidden → r` temporal generator.
    pub fn temporal_widths(latent_dim: usize, hidden: usize, rank: usize) -> [usize; N_LAYERS + 1] {
        [latent_dim, hidden, hidden, hidden, rank]
    }

    pub fn kind(&self) -> NetKind {
        self.kind
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn in_channels(&self) -> usize {
        self.layers[0].weights.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.layers[N_LAYERS - 1].weights.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        *self.layers[0].weights.shape().last().unwrap()
    }

    pub fn widths(&self) -> [usize; N_LAYERS + 1] {
        let mut w = [self.in_channels(); N_LAYERS + 1];
        for (i, l) in self.layers.iter().enumerate() {
            w[i + 1] = l.weights.shape()[0];
        }
        w
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Parameters in layer order, weights before bias within a layer.
    pub fn params(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flat_map(|l| [&l.weights, &l.bias])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weights, &mut l.bias])
    }

    /// Same architecture, all parameters zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for p in z.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
        z
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(Tensor::is_finite)
    }

    /// Fraction of parameters (weights, optionally biases) that are exactly zero.
    pub fn zero_fraction(&self, include_bias: bool) -> f64 {
        let (mut zeros, mut total) = (0usize, 0usize);
        for l in &self.layers {
            let mut count = |t: &Tensor<T>| {
                zeros += t.data().iter().filter(|v| **v == T::zero()).count();
                total += t.len();
            };
            count(&l.weights);
            if include_bias {
                count(&l.bias);
            }
        }
        zeros as f64 / total.max(1) as f64
    }

    /// Records the forward pass on `graph`, returning the output node and the
    /// `(weights, bias)` node of every layer.
    pub fn record(&self, graph: &mut Graph<T>, input: NodeId) -> Result<(NodeId, Vec<(NodeId, NodeId)>)> {
        let mut x = input;
        let mut ids = Vec::with_capacity(N_LAYERS);
        for (i, l) in self.layers.iter().enumerate() {
            let w = graph.input(l.weights.clone());
            let b = graph.input(l.bias.clone());
            x = match self.kind {
                NetKind::Spatial => graph.conv2d(x, w, b)?,
                NetKind::Temporal => graph.conv1d(x, w, b)?,
            };
            if i + 1 < N_LAYERS {
                x = graph.relu(x)?;
            }
            ids.push((w, b));
        }
        Ok((x, ids))
    }

    /// Plain forward evaluation.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut graph = Graph::new();
        let x = graph.input(input.clone());
        let (out, _) = self.record(&mut graph, x)?;
        Ok(graph.value(out).clone())
    }
}

/// `Σ|w|` over all conv weights, plus biases when `include_bias`.
pub fn l1_weight_norm_with<T: Real>(net: &GeneratorNet<T>, include_bias: bool) -> T {
    net.layers.iter().fold(T::zero(), |acc, l| {
        let b = if include_bias { l.bias.l1_norm() } else { T::zero() };
        acc + l.weights.l1_norm() + b
    })
}

/// `Σ|w|` over all conv weights and biases.
pub fn l1_weight_norm<T: Real>(net: &GeneratorNet<T>) -> T {
    l1_weight_norm_with(net, true)
}

/// Latent vectors `Z` (d × n_f), one column per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentTrajectory<T: Real> {
    pub z: Array2<T>,
}

impl<T: Real> LatentTrajectory<T> {
    pub fn new(z: Array2<T>) -> Result<Self> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("latent trajectory".into()));
        }
        Ok(Self { z })
    }

    /// Standard normal entries.
    pub fn random<R: Rng + ?Sized>(d: usize, n_frames: usize, rng: &mut R) -> Self {
        let z = Array2::from_shape_simple_fn((d, n_frames), || {
            let x: f64 = StandardNormal.sample(rng);
            T::lit(x)
        });
        Self { z }
    }

    pub fn dim(&self) -> usize {
        self.z.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.z.ncols()
    }

    pub fn to_tensor(&self) -> Tensor<T> {
        Tensor::new(vec![self.dim(), self.n_frames()], self.z.iter().copied().collect()).expect("d × n_f")
    }

    pub fn from_tensor(t: &Tensor<T>) -> Result<Self> {
        match t.shape() {
            [d, n] => Self::new(Array2::from_shape_vec((*d, *n), t.data().to_vec()).expect("matching length")),
            s => Err(Error::shape("LatentTrajectory", format!("expected [d, n_f], got {s:?}"))),
        }
    }
}

/// Spatial factor packed as `[2r, H, W]` real/imaginary channel pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialSeed<T: Real> {
    pub tensor: Tensor<T>,
}

impl<T: Real> SpatialSeed<T> {
    pub fn from_factor(u: ArrayView2<'_, Cplx<T>>, h: usize, w: usize) -> Result<Self> {
        Ok(Self { tensor: pack_factor(u, h, w)? })
    }

    pub fn rank(&self) -> usize {
        self.tensor.shape()[0] / 2
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.tensor.shape()[1], self.tensor.shape()[2])
    }

    pub fn to_factor(&self) -> Array2<Cplx<T>> {
        unpack_factor(&self.tensor)
    }
}

/// Complex pixels × r matrix to a `[2r, H, W]` tensor (channel 2j = Re u_j,
/// 2j+1 = Im u_j).
pub fn pack_factor<T: Real>(u: ArrayView2<'_, Cplx<T>>, h: usize, w: usize) -> Result<Tensor<T>> {
    if u.nrows() != h * w {
        return Err(Error::shape("pack_factor", format!("{} rows for {h}x{w} pixels", u.nrows())));
    }
    let r = u.ncols();
    let n = h * w;
    let mut data = vec![T::zero(); 2 * r * n];
    for j in 0..r {
        for p in 0..n {
            let z = u[[p, j]];
            data[2 * j * n + p] = z.re;
            data[(2 * j + 1) * n + p] = z.im;
        }
    }
    Tensor::new(vec![2 * r, h, w], data)
}

/// Inverse of [`pack_factor`].
pub fn unpack_factor<T: Real>(t: &Tensor<T>) -> Array2<Cplx<T>> {
    let s = t.shape();
    let (r, n) = (s[0] / 2, s[1] * s[2]);
    let d = t.data();
    Array2::from_shape_fn((n, r), |(p, j)| Cplx::new(d[2 * j * n + p], d[(2 * j + 1) * n + p]))
}

fn check_kind<T: Real>(net: &GeneratorNet<T>, want: NetKind) -> Result<()> {
    if net.kind != want {
        return Err(Error::shape("generator", format!("expected a {want:?} net, got {:?}", net.kind)));
    }
    Ok(())
}

/// `U = 𝒢_θ(U₀)`
pub fn spatial_forward<T: Real>(net: &GeneratorNet<T>, seed: &SpatialSeed<T>) -> Result<Array2<Cplx<T>>> {
    check_kind(net, NetKind::Spatial)?;
    Ok(unpack_factor(&net.forward(&seed.tensor)?))
}

/// `V = 𝒢_φ(Z)`, frames × r.
pub fn temporal_forward<T: Real>(net: &GeneratorNet<T>, z: &LatentTrajectory<T>) -> Result<Array2<T>> {
    check_kind(net, NetKind::Temporal)?;
    let out = net.forward(&z.to_tensor())?;
    Ok(channels_to_rows(&out))
}

fn channels_to_rows<T: Real>(out: &Tensor<T>) -> Array2<T> {
    let (r, n) = (out.shape()[0], out.shape()[1]);
    Array2::from_shape_fn((n, r), |(i, j)| out.data()[j * n + i])
}

/// Recorded spatial pass that can be differentiated with respect to θ.
pub struct SpatialPass<T: Real> {
    graph: Graph<T>,
    output: NodeId,
    params: Vec<(NodeId, NodeId)>,
    kind: NetKind,
}

impl<T: Real> SpatialPass<T> {
    pub fn new(net: &GeneratorNet<T>, seed: &SpatialSeed<T>) -> Result<Self> {
        check_kind(net, NetKind::Spatial)?;
        let mut graph = Graph::new();
        let x = graph.input(seed.tensor.clone());
        let (output, params) = net.record(&mut graph, x)?;
        Ok(Self { graph, output, params, kind: net.kind })
    }

    pub fn u(&self) -> Array2<Cplx<T>> {
        unpack_factor(self.graph.value(self.output))
    }

    /// Gradient with respect to θ given `g_u = ∂L/∂Re U + i·∂L/∂Im U`.
    pub fn backward(&self, g_u: ArrayView2<'_, Cplx<T>>) -> Result<GeneratorNet<T>> {
        let s = self.graph.value(self.output).shape();
        let seed = pack_factor(g_u, s[1], s[2])?;
        if seed.shape() != s {
            return Err(Error::shape("SpatialPass::backward", format!("gradient {:?} vs output {s:?}", seed.shape())));
        }
        let mut adj = self.graph.backward(self.output, &seed)?;
        collect_grads(&self.graph, &mut adj, &self.params, self.kind)
    }
}

/// Recorded temporal pass, differentiable with respect to φ and `Z`.
pub struct TemporalPass<T: Real> {
    graph: Graph<T>,
    latent: NodeId,
    output: NodeId,
    params: Vec<(NodeId, NodeId)>,
    kind: NetKind,
}

impl<T: Real> TemporalPass<T> {
    pub fn new(net: &GeneratorNet<T>, z: &LatentTrajectory<T>) -> Result<Self> {
        check_kind(net, NetKind::Temporal)?;
        let mut graph = Graph::new();
        let latent = graph.input(z.to_tensor());
        let (output, params) = net.record(&mut graph, latent)?;
        Ok(Self { graph, latent, output, params, kind: net.kind })
    }

    pub fn v(&self) -> Array2<T> {
        channels_to_rows(self.graph.value(self.output))
    }

    /// Gradients with respect to φ and `Z` given `g_v = ∂L/∂V` (frames × r).
    pub fn backward(&self, g_v: ArrayView2<'_, T>) -> Result<(GeneratorNet<T>, Array2<T>)> {
        let s = self.graph.value(self.output).shape().to_vec();
        if g_v.dim() != (s[1], s[0]) {
            return Err(Error::shape("TemporalPass::backward", format!("gradient {:?} vs V {}x{}", g_v.dim(), s[1], s[0])));
        }
        let seed = Tensor::from_fn(&s, |k| g_v[[k % s[1], k / s[1]]]);
        let mut adj = self.graph.backward(self.output, &seed)?;
        let net = collect_grads(&self.graph, &mut adj, &self.params, self.kind)?;
        let gz = adj.take_or_zeros(&self.graph, self.latent);
        let (d, n) = (gz.shape()[0], gz.shape()[1]);
        Ok((net, Array2::from_shape_vec((d, n), gz.into_data()).expect("d × n_f")))
    }
}

fn collect_grads<T: Real>(
    graph: &Graph<T>,
    adj: &mut crate::difftensor::Adjoints<T>,
    params: &[(NodeId, NodeId)],
    kind: NetKind,
) -> Result<GeneratorNet<T>> {
    let layers = params
        .iter()
        .map(|&(w, b)| Layer { weights: adj.take_or_zeros(graph, w), bias: adj.take_or_zeros(graph, b) })
        .collect();
    GeneratorNet::from_layers(kind, layers)
}
