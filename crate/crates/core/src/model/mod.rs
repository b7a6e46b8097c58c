//! Network definitions: attention and residual blocks, the U-Net generator,
//! the patch discriminator and the frozen perceptual feature extractor.
//!
//! Parameters live in a [`ParamStore`] keyed by dotted names; the name set
//! doubles as the checkpoint schema. A forward pass first binds the store
//! onto a tape ([`ParamStore::bind`]) and then threads a [`Graph`] through
//! the building blocks.

mod attention;
mod discriminator;
mod features;
mod generator;
mod residual;

pub use attention::{channel_attention, channel_gate, init_sca, sca, spatial_attention, spatial_gate, ScaConfig};
pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use features::{FeatureNet, FeatureNetConfig};
pub use generator::{Generator, GeneratorConfig, HeadUpsample, STAGES};
pub use residual::{init_residual, residual_block};

use indexmap::IndexMap;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::diffcore::{BatchNormSpec, ConvSpec, Float, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Standard deviation of the zero-mean normal used for conv weights.
pub const INIT_STD: f64 = 0.02;
/// Negative slope of every leaky ReLU in the generator.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Named parameters (trainable) and buffers (batch-norm running statistics).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T = f32> {
    params: IndexMap<String, Tensor<T>>,
    buffers: IndexMap<String, Tensor<T>>,
}

impl<T: Float> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Float> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: IndexMap::new(),
            buffers: IndexMap::new(),
        }
    }

    fn ensure_fresh(&self, name: &str) -> Result<()> {
        if self.params.contains_key(name) || self.buffers.contains_key(name) {
            return Err(Error::Contract(format!("duplicate parameter name {name}")));
        }
        Ok(())
    }

    pub fn insert_param(&mut self, name: impl Into<String>, t: Tensor<T>) -> Result<()> {
        let name = name.into();
        self.ensure_fresh(&name)?;
        self.params.insert(name, t.detached());
        Ok(())
    }

    pub fn insert_buffer(&mut self, name: impl Into<String>, t: Tensor<T>) -> Result<()> {
        let name = name.into();
        self.ensure_fresh(&name)?;
        self.buffers.insert(name, t.detached());
        Ok(())
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.params.get_mut(name)
    }

    pub fn buffer(&self, name: &str) -> Option<&Tensor<T>> {
        self.buffers.get(name)
    }

    pub fn buffer_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.buffers.get_mut(name)
    }

    /// Parameter or buffer by name.
    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name).or_else(|| self.buffers.get(name))
    }

    /// Mutable parameter or buffer by name.
    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        match self.params.get_mut(name) {
            Some(t) => Some(t),
            None => self.buffers.get_mut(name),
        }
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn buffers(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.buffers.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Every tensor, parameters first, in insertion order.
    pub fn tensors(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.params().chain(self.buffers())
    }

    /// All names, parameters first.
    pub fn names(&self) -> Vec<String> {
        self.tensors().map(|(k, _)| k.to_string()).collect()
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn len(&self) -> usize {
        self.params.len() + self.buffers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cast<U: Float>(&self) -> ParamStore<U> {
        ParamStore {
            params: self.params.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
            buffers: self.buffers.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// Records every parameter on `tape`, as a gradient-tracking leaf when
    /// `trainable`, otherwise as a constant.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bindings {
        let vars = self
            .params
            .iter()
            .map(|(k, v)| {
                let t = v.detached();
                let var = if trainable {
                    tape.leaf(t.with_grad())
                } else {
                    tape.constant(t)
                };
                (k.clone(), var)
            })
            .collect();
        Bindings { vars }
    }

    /// Replaces this store's contents with same-named tensors from `other`.
    pub fn load_from(&mut self, mut lookup: impl FnMut(&str) -> Option<Tensor<T>>) -> Result<()> {
        for (name, t) in self.params.iter_mut().chain(self.buffers.iter_mut()) {
            let new = lookup(name).ok_or_else(|| Error::Data(format!("checkpoint lacks tensor {name}")))?;
            if new.shape() != t.shape() {
                return Err(Error::Data(format!(
                    "tensor {name}: checkpoint shape {:?}, model expects {:?}",
                    new.shape(),
                    t.shape()
                )));
            }
            *t = new.detached();
        }
        Ok(())
    }
}

/// Gradients collected after a backward pass, keyed like the store.
pub type Gradients<T> = IndexMap<String, Vec<T>>;

/// Tape handles of a bound [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Bindings {
    vars: IndexMap<String, Var>,
}

impl Bindings {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("parameter {name} is not bound")))
    }

    pub fn try_get(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Gradients accumulated on the tape; parameters the loss never reached
    /// are absent.
    pub fn collect_grads<T: Float>(&self, tape: &Tape<T>) -> Gradients<T> {
        self.vars
            .iter()
            .filter_map(|(k, &v)| tape.grad(v).map(|g| (k.clone(), g.to_vec())))
            .collect()
    }
}

impl FromIterator<(String, Var)> for Bindings {
    fn from_iter<I: IntoIterator<Item = (String, Var)>>(iter: I) -> Self {
        Bindings {
            vars: iter.into_iter().collect(),
        }
    }
}

/// Everything a building block needs during a forward pass.
pub struct Graph<'a, T: Float> {
    pub tape: &'a mut Tape<T>,
    pub vars: &'a Bindings,
    pub store: &'a mut ParamStore<T>,
    pub training: bool,
}

impl<T: Float> Graph<'_, T> {
    /// Convolution with `{name}.weight` and, when present, `{name}.bias`.
    pub fn conv(&mut self, x: Var, name: &str, spec: ConvSpec) -> Result<Var> {
        let w = self.vars.get(&format!("{name}.weight"))?;
        let b = self.vars.try_get(&format!("{name}.bias"));
        self.tape.conv2d(x, w, b, spec)
    }

    pub fn conv_transpose(&mut self, x: Var, name: &str, spec: ConvSpec) -> Result<Var> {
        let w = self.vars.get(&format!("{name}.weight"))?;
        let b = self.vars.try_get(&format!("{name}.bias"));
        self.tape.conv_transpose2d(x, w, b, spec)
    }

    /// Batch norm with `{name}.gamma`, `{name}.beta` and running statistics.
    pub fn batch_norm(&mut self, x: Var, name: &str) -> Result<Var> {
        let gamma = self.vars.get(&format!("{name}.gamma"))?;
        let beta = self.vars.get(&format!("{name}.beta"))?;
        let (mk, vk) = (format!("{name}.running_mean"), format!("{name}.running_var"));
        let missing = || Error::Contract(format!("missing running statistics for {name}"));
        let mut mean = self.store.buffer(&mk).ok_or_else(missing)?.data().to_vec();
        let mut var = self.store.buffer(&vk).ok_or_else(missing)?.data().to_vec();
        let out = self.tape.batch_norm2d(
            x,
            gamma,
            beta,
            &mut mean,
            &mut var,
            self.training,
            BatchNormSpec::default(),
        )?;
        if self.training {
            self.store
                .buffer_mut(&mk)
                .expect("checked")
                .data_mut()
                .copy_from_slice(&mean);
            self.store
                .buffer_mut(&vk)
                .expect("checked")
                .data_mut()
                .copy_from_slice(&var);
        }
        Ok(out)
    }
}

pub(crate) fn normal_tensor<T: Float, R: Rng + ?Sized>(rng: &mut R, shape: Vec<usize>, std: f64) -> Tensor<T> {
    let dist = Normal::new(0.0, std).expect("positive std");
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::of(dist.sample(rng))).collect();
    Tensor::new(shape, data).expect("length matches shape")
}

/// Adds `{name}.weight` drawn from N(0, 0.02) and, when `bias_len` is
/// given, a zero `{name}.bias`.
pub(crate) fn add_conv<T: Float, R: Rng + ?Sized>(
    store: &mut ParamStore<T>,
    rng: &mut R,
    name: &str,
    shape: [usize; 4],
    bias_len: Option<usize>,
) -> Result<()> {
    store.insert_param(format!("{name}.weight"), normal_tensor(rng, shape.to_vec(), INIT_STD))?;
    if let Some(n) = bias_len {
        store.insert_param(format!("{name}.bias"), Tensor::zeros(vec![n]))?;
    }
    Ok(())
}

/// Adds batch-norm parameters (γ = 1, β = 0) and running statistics.
pub(crate) fn add_bn<T: Float>(store: &mut ParamStore<T>, name: &str, c: usize) -> Result<()> {
    store.insert_param(format!("{name}.gamma"), Tensor::full(vec![c], T::one()))?;
    store.insert_param(format!("{name}.beta"), Tensor::zeros(vec![c]))?;
    store.insert_buffer(format!("{name}.running_mean"), Tensor::zeros(vec![c]))?;
    store.insert_buffer(format!("{name}.running_var"), Tensor::full(vec![c], T::one()))?;
    Ok(())
}

/// Rejects non-finite input images.
pub(crate) fn check_finite<T: Float>(tape: &Tape<T>, v: Var, what: &str) -> Result<()> {
    if tape.value(v).all_finite() {
        Ok(())
    } else {
        Err(Error::Input(format!("{what} contains non-finite values")))
    }
}
