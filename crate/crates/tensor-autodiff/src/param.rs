//! Named parameter storage with additive gradient buffers.

use std::collections::BTreeMap;

/// One named tensor: value plus a same-shape gradient buffer.
///
/// Non-trainable entries (e.g. batch-norm running statistics) are carried
/// through checkpoints but ignored by the optimizer and never receive
/// gradients.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub trainable: bool,
}

impl Param {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Ordered collection of parameters; insertion order is stable, which keeps
/// checkpoints and optimizer state deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: Vec<Param>,
    by_name: BTreeMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter and returns its index.
    pub fn add(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        value: Vec<f64>,
        trainable: bool,
    ) -> usize {
        let name = name.into();
        assert_eq!(
            value.len(),
            shape.iter().product::<usize>(),
            "param `{name}`: value length does not match shape"
        );
        assert!(
            !self.by_name.contains_key(&name),
            "param `{name}` registered twice"
        );
        let grad = vec![0.0; value.len()];
        let idx = self.params.len();
        self.by_name.insert(name.clone(), idx);
        self.params.push(Param { name, shape, value, grad, trainable });
        idx
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, idx: usize) -> &Param {
        &self.params[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Param {
        &mut self.params[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.index_of(name).map(|i| self.get(i))
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.index_of(name).map(|i| &mut self.params[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Global L2 norm over trainable gradients.
    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .flat_map(|p| p.grad.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn accumulate_grad(&mut self, idx: usize, grad: &[f64]) {
        let p = &mut self.params[idx];
        debug_assert_eq!(p.grad.len(), grad.len());
        for (g, d) in p.grad.iter_mut().zip(grad) {
            *g += d;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registration_and_lookup() {
        let mut ps = ParamSet::new();
        let w = ps.add("w", vec![2, 3], vec![0.0; 6], true);
        let rm = ps.add("bn.running_mean", vec![1, 3], vec![0.0; 3], false);
        assert_eq!(ps.index_of("w"), Some(w));
        assert_eq!(ps.index_of("bn.running_mean"), Some(rm));
        assert_eq!(ps.len(), 2);
        assert!(ps.get(w).trainable);
        assert!(!ps.get(rm).trainable);
    }

    #[test]
    fn grad_norm_ignores_non_trainable() {
        let mut ps = ParamSet::new();
        let w = ps.add("w", vec![1, 2], vec![0.0; 2], true);
        let r = ps.add("r", vec![1, 2], vec![0.0; 2], false);
        ps.get_mut(w).grad.copy_from_slice(&[3.0, 4.0]);
        ps.get_mut(r).grad.copy_from_slice(&[100.0, 100.0]);
        assert!((ps.grad_norm() - 5.0).abs() < 1e-12);
    }
}
