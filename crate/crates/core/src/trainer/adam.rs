use indexmap::IndexMap;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::model::{Gradients, ParamStore};
use crate::pipeline::{AnyTensor, Checkpoint};

/// Bias-corrected adaptive-moment optimiser over one parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: IndexMap<String, Vec<f32>>,
    v: IndexMap<String, Vec<f32>>,
}

impl Adam {
    /// Zeroed moments for every parameter of `params`.
    pub fn new(params: &ParamStore<f32>, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: IndexMap<String, Vec<f32>> = params
            .params()
            .map(|(k, t)| (k.to_string(), vec![0.0; t.numel()]))
            .collect();
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, name: &str) -> Option<&[f32]> {
        self.m.get(name).map(Vec::as_slice)
    }

    pub fn second_moment(&self, name: &str) -> Option<&[f32]> {
        self.v.get(name).map(Vec::as_slice)
    }

    /// One update of every parameter; each must have a gradient.
    pub fn step(&mut self, params: &mut ParamStore<f32>, grads: &Gradients<f32>) -> Result<()> {
        for (name, _) in params.params() {
            match grads.get(name) {
                None => return Err(Error::Contract(format!("no gradient for parameter {name}"))),
                Some(g) if g.len() != self.m.get(name).map_or(usize::MAX, Vec::len) => {
                    return Err(Error::Contract(format!("gradient for {name} has the wrong size")))
                }
                _ => {}
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (lr, eps) = (self.lr as f32, self.eps as f32);
        let (c1, c2) = (c1 as f32, c2 as f32);
        for (name, p) in params.params_mut() {
            let g = &grads[name];
            let m = self.m.get_mut(name).expect("checked above");
            let v = self.v.get_mut(name).expect("checked above");
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (1.0 - b1) * gi;
                *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Stores moments as `optim.m.<param>` / `optim.v.<param>`.
    pub fn save_into(&self, ckpt: &mut Checkpoint, params: &ParamStore<f32>) -> Result<()> {
        for (name, t) in params.params() {
            for (kind, map) in [("m", &self.m), ("v", &self.v)] {
                let data = map[name].clone();
                ckpt.insert(format!("optim.{kind}.{name}"), Tensor::new(t.shape().to_vec(), data)?)?;
            }
        }
        Ok(())
    }

    pub fn load_from(&mut self, ckpt: &Checkpoint, step: u64) -> Result<()> {
        for (kind, map) in [("m", &mut self.m), ("v", &mut self.v)] {
            for (name, buf) in map.iter_mut() {
                let key = format!("optim.{kind}.{name}");
                let t = ckpt
                    .get(&key)
                    .ok_or_else(|| Error::Data(format!("checkpoint lacks {key}")))?;
                let t = AnyTensor::to::<f32>(t);
                if t.numel() != buf.len() {
                    return Err(Error::Data(format!("{key} has the wrong size")));
                }
                buf.copy_from_slice(t.data());
            }
        }
        self.step = step;
        Ok(())
    }
}
