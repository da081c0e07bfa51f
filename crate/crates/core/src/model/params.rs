use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

use super::ModelConfig;

/// Weights of one GRU direction: input maps `W_*` and recurrent maps `U_*`
/// for the update gate, the reset gate and the candidate state.
#[derive(Clone, Debug, PartialEq)]
pub struct GateSet<P> {
    pub w_z: P,
    pub u_z: P,
    pub w_r: P,
    pub u_r: P,
    pub w_h: P,
    pub u_h: P,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiGru<P> {
    pub forward: GateSet<P>,
    pub backward: GateSet<P>,
}

/// The full parameter set, generic over what is stored per parameter
/// (tensors, graph handles, shapes, optimizer moments...).
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<P> {
    pub invariant_rnn: BiGru<P>,
    pub w_beta: P,
    pub b_beta: P,
    pub w_theta: P,
    pub b_theta: P,
    pub variant_rnn: BiGru<P>,
    pub w_alpha: P,
    pub b_alpha: P,
    pub w_out: P,
    pub b_out: P,
}

pub type Parameters<T> = ParamSet<Tensor<T>>;

const GATE_NAMES: [&str; 6] = ["w_z", "u_z", "w_r", "u_r", "w_h", "u_h"];

impl<P> GateSet<P> {
    fn into_vec(self) -> Vec<P> {
        vec![self.w_z, self.u_z, self.w_r, self.u_r, self.w_h, self.u_h]
    }

    fn from_iter(it: &mut impl Iterator<Item = P>) -> Self {
        let mut next = || it.next().expect("parameter list too short");
        GateSet {
            w_z: next(),
            u_z: next(),
            w_r: next(),
            u_r: next(),
            w_h: next(),
            u_h: next(),
        }
    }

    pub fn as_ref(&self) -> GateSet<&P> {
        GateSet {
            w_z: &self.w_z,
            u_z: &self.u_z,
            w_r: &self.w_r,
            u_r: &self.u_r,
            w_h: &self.w_h,
            u_h: &self.u_h,
        }
    }

    pub fn as_mut(&mut self) -> GateSet<&mut P> {
        GateSet {
            w_z: &mut self.w_z,
            u_z: &mut self.u_z,
            w_r: &mut self.w_r,
            u_r: &mut self.u_r,
            w_h: &mut self.w_h,
            u_h: &mut self.u_h,
        }
    }

    pub fn map<Q>(self, f: impl FnMut(P) -> Q) -> GateSet<Q> {
        GateSet::from_iter(&mut self.into_vec().into_iter().map(f))
    }
}

impl<P> BiGru<P> {
    pub fn as_ref(&self) -> BiGru<&P> {
        BiGru {
            forward: self.forward.as_ref(),
            backward: self.backward.as_ref(),
        }
    }

    pub fn as_mut(&mut self) -> BiGru<&mut P> {
        BiGru {
            forward: self.forward.as_mut(),
            backward: self.backward.as_mut(),
        }
    }
}

impl<P> ParamSet<P> {
    /// Number of parameter tensors.
    pub const COUNT: usize = 32;

    /// Parameter names in canonical order.
    pub fn names() -> Vec<String> {
        let mut out = Vec::with_capacity(Self::COUNT);
        let rnn = |out: &mut Vec<String>, module: &str| {
            for dir in ["forward", "backward"] {
                for g in GATE_NAMES {
                    out.push(format!("{module}.{dir}.{g}"));
                }
            }
        };
        rnn(&mut out, "invariant_rnn");
        out.extend(["w_beta", "b_beta", "w_theta", "b_theta"].map(String::from));
        rnn(&mut out, "variant_rnn");
        out.extend(["w_alpha", "b_alpha", "w_out", "b_out"].map(String::from));
        out
    }

    /// Flattens in canonical order (see [`ParamSet::names`]).
    pub fn into_vec(self) -> Vec<P> {
        let mut v = Vec::with_capacity(Self::COUNT);
        v.extend(self.invariant_rnn.forward.into_vec());
        v.extend(self.invariant_rnn.backward.into_vec());
        v.extend([self.w_beta, self.b_beta, self.w_theta, self.b_theta]);
        v.extend(self.variant_rnn.forward.into_vec());
        v.extend(self.variant_rnn.backward.into_vec());
        v.extend([self.w_alpha, self.b_alpha, self.w_out, self.b_out]);
        v
    }

    pub fn from_vec(v: Vec<P>) -> Result<Self> {
        if v.len() != Self::COUNT {
            return Err(Error::Schema(format!(
                "expected {} parameter tensors, got {}",
                Self::COUNT,
                v.len()
            )));
        }
        let mut it = v.into_iter();
        let invariant_rnn = BiGru {
            forward: GateSet::from_iter(&mut it),
            backward: GateSet::from_iter(&mut it),
        };
        let mut next = || it.next().unwrap();
        let (w_beta, b_beta, w_theta, b_theta) = (next(), next(), next(), next());
        let variant_rnn = BiGru {
            forward: GateSet::from_iter(&mut it),
            backward: GateSet::from_iter(&mut it),
        };
        let mut next = || it.next().unwrap();
        let (w_alpha, b_alpha, w_out, b_out) = (next(), next(), next(), next());
        Ok(ParamSet {
            invariant_rnn,
            w_beta,
            b_beta,
            w_theta,
            b_theta,
            variant_rnn,
            w_alpha,
            b_alpha,
            w_out,
            b_out,
        })
    }

    pub fn as_ref(&self) -> ParamSet<&P> {
        ParamSet {
            invariant_rnn: self.invariant_rnn.as_ref(),
            w_beta: &self.w_beta,
            b_beta: &self.b_beta,
            w_theta: &self.w_theta,
            b_theta: &self.b_theta,
            variant_rnn: self.variant_rnn.as_ref(),
            w_alpha: &self.w_alpha,
            b_alpha: &self.b_alpha,
            w_out: &self.w_out,
            b_out: &self.b_out,
        }
    }

    pub fn as_mut(&mut self) -> ParamSet<&mut P> {
        ParamSet {
            invariant_rnn: self.invariant_rnn.as_mut(),
            w_beta: &mut self.w_beta,
            b_beta: &mut self.b_beta,
            w_theta: &mut self.w_theta,
            b_theta: &mut self.b_theta,
            variant_rnn: self.variant_rnn.as_mut(),
            w_alpha: &mut self.w_alpha,
            b_alpha: &mut self.b_alpha,
            w_out: &mut self.w_out,
            b_out: &mut self.b_out,
        }
    }

    pub fn map<Q>(self, f: impl FnMut(P) -> Q) -> ParamSet<Q> {
        ParamSet::from_vec(self.into_vec().into_iter().map(f).collect())
            .expect("map preserves count")
    }

    pub fn zip<Q>(self, other: ParamSet<Q>) -> ParamSet<(P, Q)> {
        ParamSet::from_vec(self.into_vec().into_iter().zip(other.into_vec()).collect())
            .expect("zip preserves count")
    }

    /// Whether parameter `i` (canonical order) is a bias vector.
    pub fn is_bias(index: usize) -> bool {
        matches!(index, 13 | 15 | 29 | 31)
    }
}

impl ParamSet<Shape> {
    pub fn shapes(config: &ModelConfig) -> Self {
        let d = config.features;
        let gates = |h: usize| GateSet {
            w_z: Shape::Matrix(h, d),
            u_z: Shape::Matrix(h, h),
            w_r: Shape::Matrix(h, d),
            u_r: Shape::Matrix(h, h),
            w_h: Shape::Matrix(h, d),
            u_h: Shape::Matrix(h, h),
        };
        let bi = |h: usize| BiGru {
            forward: gates(h),
            backward: gates(h),
        };
        ParamSet {
            invariant_rnn: bi(config.film_dim),
            w_beta: Shape::Matrix(d, 2 * config.film_dim),
            b_beta: Shape::Vector(d),
            w_theta: Shape::Matrix(d, 2 * config.film_dim),
            b_theta: Shape::Vector(d),
            variant_rnn: bi(config.rnn_dim),
            w_alpha: Shape::Matrix(d, 2 * config.rnn_dim),
            b_alpha: Shape::Vector(d),
            w_out: Shape::Vector(d),
            b_out: Shape::Scalar,
        }
    }
}

impl<T: Scalar> Parameters<T> {
    /// Weights uniform in `[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`,
    /// biases zero. Deterministic in `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shapes = ParamSet::shapes(config).into_vec();
        let tensors = shapes
            .into_iter()
            .enumerate()
            .map(|(i, shape)| {
                if Self::is_bias(i) {
                    return Tensor::zeros(shape);
                }
                let (fan_out, fan_in) = match shape {
                    Shape::Matrix(r, c) => (r, c),
                    Shape::Vector(n) => (1, n),
                    Shape::Scalar => (1, 1),
                };
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..shape.len())
                    .map(|_| T::lit(rng.random_range(-a..=a)))
                    .collect();
                Tensor::new(shape, data).expect("shape/data agree")
            })
            .collect();
        ParamSet::from_vec(tensors).expect("canonical count")
    }

    pub fn zeros_like(config: &ModelConfig) -> Self {
        ParamSet::shapes(config).map(Tensor::zeros)
    }

    /// Checks every tensor's shape against `config` and that all entries are
    /// finite.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let names = Self::names();
        for ((t, shape), name) in self
            .as_ref()
            .into_vec()
            .into_iter()
            .zip(ParamSet::shapes(config).into_vec())
            .zip(names)
        {
            if t.shape() != shape {
                return Err(Error::Schema(format!(
                    "parameter `{name}` has shape {}, config requires {shape}",
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(Error::Schema(format!(
                    "parameter `{name}` has non-finite entries"
                )));
            }
        }
        Ok(())
    }

    pub fn scalar_count(&self) -> usize {
        self.as_ref().into_vec().iter().map(|t| t.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Parameters<U> {
        self.as_ref().map(|t| t.cast())
    }
}
