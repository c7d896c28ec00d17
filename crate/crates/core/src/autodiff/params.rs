use super::{Real, Tensor};
use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StatsId(pub(crate) usize);

#[derive(Clone, Debug)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Option<Tensor<T>>,
}

/// Running mean/variance of a normalization layer.
#[derive(Clone, Debug)]
pub struct RunningStats<T> {
    pub name: String,
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
}

/// Owns every trainable parameter and every non-trainable statistic of a
/// network. Ids are dense indices in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
    stats: Vec<RunningStats<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            stats: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.params.push(Parameter {
            name: name.into(),
            value,
            grad: None,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn add_stats(&mut self, name: impl Into<String>, channels: usize) -> StatsId {
        self.stats.push(RunningStats {
            name: name.into(),
            mean: Tensor::zeros([channels]),
            var: Tensor::full([channels], T::one()),
        });
        StatsId(self.stats.len() - 1)
    }

    pub fn param(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn stats(&self, id: StatsId) -> &RunningStats<T> {
        &self.stats[id.0]
    }

    pub fn stats_mut(&mut self, id: StatsId) -> &mut RunningStats<T> {
        &mut self.stats[id.0]
    }

    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter<T>] {
        &mut self.params
    }

    pub fn all_stats(&self) -> &[RunningStats<T>] {
        &self.stats
    }

    pub fn all_stats_mut(&mut self) -> &mut [RunningStats<T>] {
        &mut self.stats
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Total number of trainable scalars.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Resets every gradient to zeros of the parameter's shape.
    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            match &mut p.grad {
                Some(g) => g.data_mut().iter_mut().for_each(|v| *v = T::zero()),
                None => p.grad = Some(Tensor::zeros(p.value.shape().to_vec())),
            }
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, grad: &Tensor<T>) {
        let p = &mut self.params[id.0];
        match &mut p.grad {
            Some(g) => g.add_assign(grad),
            None => p.grad = Some(grad.clone()),
        }
    }

    pub fn grad(&self, id: ParamId) -> Result<&Tensor<T>> {
        let p = &self.params[id.0];
        p.grad
            .as_ref()
            .ok_or_else(|| Error::MissingGrad(p.name.clone()))
    }

    /// Copy of the store in another precision. Gradients are dropped.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    grad: None,
                })
                .collect(),
            stats: self
                .stats
                .iter()
                .map(|s| RunningStats {
                    name: s.name.clone(),
                    mean: s.mean.cast(),
                    var: s.var.cast(),
                })
                .collect(),
        }
    }

    /// Named tensors in a stable order: parameters, then running mean and
    /// variance per statistics entry.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = self
            .params
            .iter()
            .map(|p| (p.name.clone(), &p.value))
            .collect();
        for s in &self.stats {
            out.push((format!("{}.running_mean", s.name), &s.mean));
            out.push((format!("{}.running_var", s.name), &s.var));
        }
        out
    }

    /// Overwrites values from `(name, tensor)` pairs produced by
    /// [`named_tensors`](Self::named_tensors). Every tensor must be matched.
    pub fn load_named(&mut self, tensors: Vec<(String, Tensor<T>)>) -> Result<()> {
        let expected = self.params.len() + 2 * self.stats.len();
        if tensors.len() != expected {
            return Err(Error::Checkpoint(format!(
                "expected {expected} tensors, found {}",
                tensors.len()
            )));
        }
        let mut slots: Vec<(String, &mut Tensor<T>)> = Vec::with_capacity(expected);
        for p in &mut self.params {
            slots.push((p.name.clone(), &mut p.value));
        }
        for s in &mut self.stats {
            slots.push((format!("{}.running_mean", s.name), &mut s.mean));
            slots.push((format!("{}.running_var", s.name), &mut s.var));
        }
        for ((name, dst), (src_name, src)) in slots.into_iter().zip(tensors) {
            if name != src_name || dst.shape() != src.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{src_name}` {:?} does not match `{name}` {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            *dst = src;
        }
        Ok(())
    }
}

/// Seeded initializer. Draws from a ChaCha8 stream keyed by a 64-bit seed,
/// so a network built twice from the same seed is bit-identical.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Initializer {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// He fan-in normal: N(0, 2 / fan_in).
    pub fn he_normal<T: Real>(&mut self, shape: &[usize], fan_in: usize) -> Tensor<T> {
        let std = (2.0 / fan_in as f64).sqrt();
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                // Draw in f64 and round once so f32 and f64 builds agree.
                T::lit(z * std)
            })
            .collect();
        Tensor::new(shape.to_vec(), data).expect("shape product matches")
    }
}
