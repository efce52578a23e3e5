use std::collections::BTreeMap;

use rand::Rng;

use super::array::RealArray;
use super::tape::{NodeId, Tape};
use crate::error::{Error, Result};

/// Gradients keyed by parameter name, shaped like the owning set.
pub type Gradients = BTreeMap<String, RealArray>;

/// Flat collection of named arrays for one network.
///
/// Iteration order is the sorted name order, which keeps every
/// accumulation and update loop deterministic.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    entries: BTreeMap<String, RealArray>,
}

impl Default for ParameterSet {
    fn default() -> Self {
        Self::new()
    }
}

impl ParameterSet {
    pub fn new() -> Self {
        ParameterSet { entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: &str, value: RealArray) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::invalid("ParameterSet::insert", format!("duplicate name {name:?}")));
        }
        self.entries.insert(name.to_string(), value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&RealArray> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::invalid("ParameterSet::get", format!("unknown name {name:?}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &RealArray)> {
        self.entries.iter()
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut RealArray)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar coordinates across all arrays.
    pub fn coord_count(&self) -> usize {
        self.entries.values().map(|a| a.len()).sum()
    }

    pub fn same_shapes(&self, other: &ParameterSet) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(other.entries.iter())
                .all(|((na, a), (nb, b))| na == nb && a.shape() == b.shape())
    }

    /// Largest elementwise |a - b| over all arrays; sets must match shapes.
    pub fn max_abs_diff(&self, other: &ParameterSet) -> f64 {
        assert!(self.same_shapes(other), "parameter sets differ in layout");
        self.entries
            .iter()
            .zip(other.entries.iter())
            .map(|((_, a), (_, b))| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    /// Bitwise equality, used by the deterministic-limit checks.
    pub fn bits_equal(&self, other: &ParameterSet) -> bool {
        self.same_shapes(other)
            && self.entries.iter().zip(other.entries.iter()).all(|((_, a), (_, b))| {
                a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }

    /// Copy with one coordinate shifted by `delta`; used by finite differences.
    pub fn perturbed(&self, name: &str, index: usize, delta: f64) -> Result<ParameterSet> {
        let mut out = self.clone();
        let arr = out
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::invalid("ParameterSet::perturbed", format!("unknown name {name:?}")))?;
        if index >= arr.len() {
            return Err(Error::invalid(
                "ParameterSet::perturbed",
                format!("index {index} out of range for {name:?}"),
            ));
        }
        arr.data_mut()[index] += delta;
        Ok(out)
    }

    /// Register every array on `tape` under `namespace/name` and return the
    /// handle used to read gradients back out.
    pub fn bind(&self, tape: &mut Tape, namespace: &str) -> Result<BoundParams> {
        let mut entries = Vec::with_capacity(self.entries.len());
        for (name, value) in &self.entries {
            let id = tape.param(&format!("{namespace}/{name}"), value)?;
            entries.push((name.clone(), id));
        }
        Ok(BoundParams { entries })
    }

    /// Place every array on `tape` as plain constants: values participate
    /// in the forward pass but receive no gradients. Used where a network
    /// is held fixed (target unrolls, the critic inside an actor update).
    pub fn bind_const(&self, tape: &mut Tape) -> BoundParams {
        let entries = self
            .entries
            .iter()
            .map(|(name, value)| (name.clone(), tape.constant(value.clone())))
            .collect();
        BoundParams { entries }
    }

    pub fn gradient_zeros(&self) -> Gradients {
        self.entries
            .iter()
            .map(|(n, a)| (n.clone(), RealArray::zeros(a.rows(), a.cols())))
            .collect()
    }
}

/// Tape handles for one bound [`ParameterSet`].
pub struct BoundParams {
    entries: Vec<(String, NodeId)>,
}

impl BoundParams {
    pub fn node(&self, name: &str) -> Result<NodeId> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, id)| *id)
            .ok_or_else(|| Error::invalid("BoundParams::node", format!("unknown name {name:?}")))
    }

    /// Gradients collected after a backward pass, keyed by the plain
    /// (un-namespaced) parameter name. Unreached parameters are zeros.
    pub fn gradients(&self, tape: &Tape) -> Gradients {
        self.entries
            .iter()
            .map(|(name, id)| (name.clone(), tape.grad_array(*id)))
            .collect()
    }
}

/// Uniform init in ±1/sqrt(fan_in), the convention for every weight matrix
/// in this crate (fan_in = number of columns).
pub fn uniform_fan_in(rows: usize, cols: usize, rng: &mut impl Rng) -> RealArray {
    let limit = 1.0 / (cols as f64).sqrt();
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
    RealArray::from_vec(rows, cols, data).expect("finite init")
}
