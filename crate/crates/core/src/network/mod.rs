//! The multilayer perceptron `u_θ(t, x)`: two inputs, `depth` hidden layers
//! of `width` sinusoidal units, one linear output.
//!
//! Parameters live in one flat vector, layer by layer, each layer's weight
//! matrix (fan-in × fan-out, row-major) followed by its bias.

mod batch;
mod checkpoint;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Jet, JetScalar, Tape, Var};
use crate::error::{Error, Result};

pub use batch::{JetColumns, Order, Point, SLOT_T, SLOT_V, SLOT_X, SLOT_XX, SLOT_XXX};
pub use checkpoint::{load_checkpoint, save_checkpoint};

/// Hidden-layer nonlinearity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Sine,
    /// Only used for the activation comparison narrative.
    Tanh,
}

impl Activation {
    /// Value and first four derivatives at `z`.
    #[inline]
    pub(crate) fn derivatives(self, z: f64) -> [f64; 5] {
        match self {
            Activation::Sine => {
                let (s, c) = z.sin_cos();
                [s, c, -s, -c, s]
            }
            Activation::Tanh => {
                let t = z.tanh();
                let d1 = 1.0 - t * t;
                let d2 = -2.0 * t * d1;
                let d3 = -2.0 * d1 * d1 + 4.0 * t * t * d1;
                let d4 = -4.0 * d1 * d2 + 8.0 * t * d1 * d1 + 4.0 * t * t * d2;
                [t, d1, d2, d3, d4]
            }
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sine => z.sin(),
            Activation::Tanh => z.tanh(),
        }
    }

    fn apply_jet<T: JetScalar>(self, z: &Jet<T>) -> Jet<T> {
        match self {
            Activation::Sine => z.sin(),
            Activation::Tanh => z.tanh(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Sine => "sine",
            Activation::Tanh => "tanh",
        }
    }
}

/// Parameter initialization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum InitScheme {
    /// Weights uniform on ±√(6/fan_in), zero biases.
    #[serde(rename = "glorot")]
    Glorot,
    /// Weights and biases uniform on ±1/√fan_in.
    #[default]
    #[serde(rename = "uniform")]
    Uniform,
}

impl InitScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            InitScheme::Glorot => "glorot",
            InitScheme::Uniform => "uniform",
        }
    }
}

impl std::fmt::Display for InitScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for InitScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "glorot" => Ok(InitScheme::Glorot),
            "uniform" => Ok(InitScheme::Uniform),
            other => Err(Error::Config(format!("unknown init `{other}` (expected glorot or uniform)"))),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine" | "sin" => Ok(Activation::Sine),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Location of one dense layer inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSlice {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: usize,
    pub bias: usize,
}

impl LayerSlice {
    pub fn end(&self) -> usize {
        self.bias + self.fan_out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    depth: usize,
    width: usize,
    activation: Activation,
    seed: u64,
    layers: Vec<LayerSlice>,
    params: Vec<f64>,
}

/// Flattened parameter count for a `depth × width` network.
pub fn parameter_count(depth: usize, width: usize) -> usize {
    3 * width + (depth - 1) * (width * width + width) + width + 1
}

fn layout(depth: usize, width: usize) -> Vec<LayerSlice> {
    let mut layers = Vec::with_capacity(depth + 1);
    let mut offset = 0;
    let mut fan_in = 2;
    for k in 0..=depth {
        let fan_out = if k == depth { 1 } else { width };
        let slice = LayerSlice {
            fan_in,
            fan_out,
            weights: offset,
            bias: offset + fan_in * fan_out,
        };
        offset = slice.end();
        layers.push(slice);
        fan_in = fan_out;
    }
    layers
}

impl Mlp {
    /// Glorot-style uniform weights on ±√(6/fan_in), zero biases.
    pub fn init(seed: u64, depth: usize, width: usize) -> Result<Self> {
        Self::init_with(seed, depth, width, Activation::Sine)
    }

    pub fn init_with(seed: u64, depth: usize, width: usize, activation: Activation) -> Result<Self> {
        Self::init_scheme(seed, depth, width, activation, InitScheme::Glorot)
    }

    pub fn init_scheme(seed: u64, depth: usize, width: usize, activation: Activation, scheme: InitScheme) -> Result<Self> {
        if depth == 0 || width == 0 {
            return Err(Error::Config(format!(
                "network needs depth >= 1 and width >= 1 (got {depth} x {width})"
            )));
        }
        let layers = layout(depth, width);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; layers.last().map_or(0, LayerSlice::end)];
        for layer in &layers {
            let (bound, biases) = match scheme {
                InitScheme::Glorot => ((6.0 / layer.fan_in as f64).sqrt(), false),
                InitScheme::Uniform => ((1.0 / layer.fan_in as f64).sqrt(), true),
            };
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let end = if biases { layer.end() } else { layer.bias };
            for w in &mut params[layer.weights..end] {
                *w = dist.sample(&mut rng);
            }
        }
        Ok(Mlp {
            depth,
            width,
            activation,
            seed,
            layers,
            params,
        })
    }

    /// Builds a network around an existing parameter vector.
    pub fn from_params(
        depth: usize,
        width: usize,
        activation: Activation,
        seed: u64,
        params: Vec<f64>,
    ) -> Result<Self> {
        if depth == 0 || width == 0 {
            return Err(Error::Config("network needs depth >= 1 and width >= 1".into()));
        }
        let expected = parameter_count(depth, width);
        if params.len() != expected {
            return Err(Error::LengthMismatch {
                what: "parameter vector",
                expected,
                got: params.len(),
            });
        }
        Ok(Mlp {
            depth,
            width,
            activation,
            seed,
            layers: layout(depth, width),
            params,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[LayerSlice] {
        &self.layers
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn flatten(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Replaces all parameters; the length must match the architecture.
    pub fn unflatten(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::LengthMismatch {
                what: "parameter vector",
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn forward(&self, t: f64, x: f64) -> f64 {
        let first = &self.layers[0];
        let p = &self.params;
        let mut act: Vec<f64> = (0..first.fan_out)
            .map(|j| {
                let z = t * p[first.weights + j]
                    + x * p[first.weights + first.fan_out + j]
                    + p[first.bias + j];
                self.activation.apply(z)
            })
            .collect();
        for (k, layer) in self.layers.iter().enumerate().skip(1) {
            let mut z: Vec<f64> = p[layer.bias..layer.end()].to_vec();
            for (i, a) in act.iter().enumerate() {
                let row = &p[layer.weights + i * layer.fan_out..][..layer.fan_out];
                for (zj, w) in z.iter_mut().zip(row) {
                    *zj += a * w;
                }
            }
            if k < self.depth {
                z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            act = z;
        }
        act[0]
    }

    /// Jet of `u_θ` at `(t, x)` with every slot expressed in the scalar type
    /// of `params` (plain `f64`, or tape variables for parameter gradients).
    pub fn forward_jet_with<T: JetScalar>(&self, params: &[T], t: f64, x: f64) -> Jet<T> {
        assert_eq!(params.len(), self.params.len(), "parameter vector length");
        let first = &self.layers[0];
        let zero = params[0].constant_like(0.0);
        let mut act: Vec<Jet<T>> = (0..first.fan_out)
            .map(|j| {
                let wt = params[first.weights + j].clone();
                let wx = params[first.weights + first.fan_out + j].clone();
                let b = params[first.bias + j].clone();
                let z = Jet {
                    v: wt.scale(t) + wx.scale(x) + b,
                    vt: wt,
                    vx: wx,
                    vxx: zero.clone(),
                    vxxx: zero.clone(),
                };
                self.activation.apply_jet(&z)
            })
            .collect();
        for (k, layer) in self.layers.iter().enumerate().skip(1) {
            let mut next = Vec::with_capacity(layer.fan_out);
            for j in 0..layer.fan_out {
                let mut z: Option<Jet<T>> = None;
                for (i, a) in act.iter().enumerate() {
                    let term = a.scale_by(&params[layer.weights + i * layer.fan_out + j]);
                    z = Some(match z {
                        None => term,
                        Some(acc) => acc.add(&term),
                    });
                }
                let z = z.expect("fan_in >= 1").shift(&params[layer.bias + j]);
                next.push(if k < self.depth {
                    self.activation.apply_jet(&z)
                } else {
                    z
                });
            }
            act = next;
        }
        act.swap_remove(0)
    }

    /// Plain-valued jet (input derivatives only).
    pub fn forward_jet(&self, t: f64, x: f64) -> Jet {
        self.forward_jet_with(&self.params, t, x)
    }

    /// Registers every parameter on `tape` (in flat order) and returns the
    /// graph-valued parameter handles.
    pub fn register<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        tape.params(&self.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_schemes() {
        let g = Mlp::init(3, 2, 8).unwrap();
        let u = Mlp::init_scheme(3, 2, 8, Activation::Sine, InitScheme::Uniform).unwrap();
        for (gl, ul) in g.layers().iter().zip(u.layers()) {
            let (gb, ub) = ((6.0 / gl.fan_in as f64).sqrt(), (1.0 / ul.fan_in as f64).sqrt());
            assert!(g.flatten()[gl.weights..gl.bias].iter().all(|w| w.abs() <= gb));
            assert!(g.flatten()[gl.bias..gl.end()].iter().all(|&b| b == 0.0));
            assert!(u.flatten()[ul.weights..ul.end()].iter().all(|w| w.abs() <= ub));
            assert!(u.flatten()[ul.bias..ul.end()].iter().any(|&b| b != 0.0));
        }
        assert_eq!("uniform".parse::<InitScheme>().unwrap(), InitScheme::default());
        assert!("xavier".parse::<InitScheme>().is_err());
    }

    /// 1-hidden-layer net of width 1 computing sin(x - shift).
    pub(crate) fn sine_net(shift: f64) -> Mlp {
        let mut net = Mlp::init(0, 1, 1).unwrap();
        // layer 0: w_t, w_x, b ; layer 1: w, b
        net.unflatten(&[0.0, 1.0, -shift, 1.0, 0.0]).unwrap();
        net
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(Mlp::init(7, 4, 40).unwrap().num_params(), 5081);
        assert_eq!(Mlp::init(7, 7, 40).unwrap().num_params(), 10001);
        assert_eq!(parameter_count(4, 40), 120 + 3 * 1640 + 41);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = Mlp::init(7, 2, 8).unwrap();
        let b = Mlp::init(7, 2, 8).unwrap();
        assert_eq!(a.flatten(), b.flatten());
        assert_ne!(a.flatten(), Mlp::init(8, 2, 8).unwrap().flatten());
        for layer in a.layers() {
            let bound = (6.0 / layer.fan_in as f64).sqrt();
            assert!(a.flatten()[layer.weights..layer.bias].iter().all(|w| w.abs() <= bound));
            assert!(a.flatten()[layer.bias..layer.end()].iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn rejects_degenerate_architecture() {
        assert!(Mlp::init(1, 0, 4).is_err());
        assert!(Mlp::init(1, 4, 0).is_err());
    }

    #[test]
    fn zero_network_is_zero() {
        let mut net = Mlp::init(3, 3, 6).unwrap();
        let zeros = vec![0.0; net.num_params()];
        net.unflatten(&zeros).unwrap();
        assert_eq!(net.forward(0.3, -1.2), 0.0);
        assert_eq!(net.forward_jet(0.3, -1.2).to_array(), [0.0; 5]);
    }

    #[test]
    fn constructed_sine() {
        let net = sine_net(0.0);
        for &x in &[-1.0, 0.2, 2.5] {
            assert!((net.forward(0.7, x) - x.sin()).abs() < 1e-15);
            let jet = net.forward_jet(0.7, x).to_array();
            let want = [x.sin(), 0.0, x.cos(), -x.sin(), -x.cos()];
            for (a, b) in jet.iter().zip(want) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn translated_jets() {
        let a = 0.8;
        let shifted = sine_net(a);
        let base = sine_net(0.0);
        for &x in &[-0.4, 1.1, 3.0] {
            let j1 = shifted.forward_jet(0.0, x).to_array();
            let j0 = base.forward_jet(0.0, x - a).to_array();
            for (p, q) in j1.iter().zip(j0) {
                assert!((p - q).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn slot_zero_matches_forward() {
        let net = Mlp::init(11, 3, 10).unwrap();
        for &(t, x) in &[(0.0, 0.0), (0.5, -3.0), (2.9, 17.5)] {
            assert!((net.forward_jet(t, x).v - net.forward(t, x)).abs() < 1e-13);
            assert_eq!(net.forward(t, x), net.forward(t, x));
        }
    }

    #[test]
    fn flatten_roundtrip_and_length_check() {
        let mut net = Mlp::init(1, 2, 5).unwrap();
        let v: Vec<f64> = (0..net.num_params()).map(|i| i as f64 * 0.1).collect();
        net.unflatten(&v).unwrap();
        assert_eq!(net.flatten(), v.as_slice());
        assert!(net.unflatten(&v[1..]).is_err());
    }
}
