use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{lit, Real, Tape, TensorError, Var};
use crate::params::{ParamId, ParameterStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    /// Tanh approximation of GELU.
    Gelu,
    Tanh,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

impl Activation {
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Tanh => x.tanh(),
            Activation::Gelu => {
                let inner = lit::<T>(GELU_C) * (x + lit::<T>(GELU_K) * x * x * x);
                lit::<T>(0.5) * x * (T::one() + inner.tanh())
            }
        }
    }

    /// Derivative at input `x` given output `y = apply(x)`.
    pub fn derivative<T: Real>(self, x: T, y: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::Gelu => {
                let c = lit::<T>(GELU_C);
                let k = lit::<T>(GELU_K);
                let t = (c * (x + k * x * x * x)).tanh();
                let half = lit::<T>(0.5);
                half * (T::one() + t)
                    + half * x * (T::one() - t * t) * c * (T::one() + lit::<T>(3.0) * k * x * x)
            }
        }
    }
}

/// Stack of affine layers with an activation between them; the last layer is
/// affine only. Weights are `[in × out]`, applied as `x·W + b` on row batches.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<(ParamId, ParamId)>,
    widths: Vec<usize>,
    activation: Activation,
}

impl Mlp {
    /// Registers `name.{k}.weight` / `name.{k}.bias` for each consecutive pair in `widths`.
    pub fn new<T: Real>(
        store: &mut ParameterStore<T>,
        name: &str,
        widths: &[usize],
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self, TensorError> {
        if widths.len() < 2 {
            return Err(TensorError::arg(
                "mlp",
                "need at least input and output widths",
            ));
        }
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (k, pair) in widths.windows(2).enumerate() {
            let w = store.add_glorot(&format!("{name}.{k}.weight"), pair[0], pair[1], rng)?;
            let b = store.add_zeros(&format!("{name}.{k}.bias"), vec![pair[1]])?;
            layers.push((w, b));
        }
        Ok(Mlp {
            layers,
            widths: widths.to_vec(),
            activation,
        })
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        self.widths[self.widths.len() - 1]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn layers(&self) -> &[(ParamId, ParamId)] {
        &self.layers
    }

    /// Applies the MLP to a `[rows × input_width]` matrix.
    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var, TensorError> {
        let shape = tape.shape(x);
        if shape.len() != 2 || shape[1] != self.input_width() {
            return Err(TensorError::dim(
                "mlp_forward",
                format!("input {:?} vs width {}", shape, self.input_width()),
            ));
        }
        let mut h = x;
        for (k, &(w, b)) in self.layers.iter().enumerate() {
            let (wv, bv) = (tape.param(w), tape.param(b));
            h = tape.matmul(h, wv)?;
            h = tape.add_row(h, bv)?;
            if k + 1 < self.layers.len() {
                h = tape.activate(h, self.activation)?;
            }
        }
        Ok(h)
    }
}
