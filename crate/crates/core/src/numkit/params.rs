use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One named block of parameters inside a flat vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Frozen flattening of a model's parameters: declaration order,
/// weights-then-bias per layer, row-major inside each weight block.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Layout {
    slots: Vec<Slot>,
}

impl Layout {
    pub fn builder() -> LayoutBuilder {
        LayoutBuilder::default()
    }

    /// A layout with a single anonymous block of `k` scalars.
    pub fn flat(k: usize) -> Self {
        Self::builder().push("theta", k, 1).build()
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn slot(&self, name: &str) -> Option<&Slot> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn param_count(&self) -> usize {
        self.slots.last().map_or(0, |s| s.offset + s.len())
    }
}

#[derive(Debug, Default)]
pub struct LayoutBuilder {
    slots: Vec<Slot>,
    next: usize,
}

impl LayoutBuilder {
    pub fn push(mut self, name: impl Into<String>, rows: usize, cols: usize) -> Self {
        let slot = Slot {
            name: name.into(),
            offset: self.next,
            rows,
            cols,
        };
        self.next += slot.len();
        self.slots.push(slot);
        self
    }

    pub fn build(self) -> Layout {
        Layout { slots: self.slots }
    }
}

/// Flat ordered parameter vector θ with its frozen layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Arc<Layout>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: Arc<Layout>) -> Result<Self> {
        if values.len() != layout.param_count() {
            return Err(Error::ShapeError {
                expected: layout.param_count(),
                actual: values.len(),
            });
        }
        Ok(Self { values, layout })
    }

    pub fn zeros(layout: Arc<Layout>) -> Self {
        let values = vec![0.0; layout.param_count()];
        Self { values, layout }
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Self {
            values: values.to_vec(),
            layout: Arc::new(Layout::flat(values.len())),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.layout.slot(name).map(|s| &self.values[s.range()])
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    /// ‖self − other‖₂, defined only between identical layouts.
    pub fn distance(&self, other: &ParamVector) -> Result<f64> {
        if self.layout != other.layout {
            return Err(Error::LayoutError(
                "parameter vectors come from different architectures".into(),
            ));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// Little-endian binary64 bytes, the checkpoint payload.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    /// SHA-256 of the little-endian parameter bytes, hex encoded.
    pub fn hash(&self) -> String {
        hash_f64s(&self.values)
    }
}

pub fn hash_f64s(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_offsets_follow_declaration_order() {
        let l = Layout::builder()
            .push("l0.weight", 3, 2)
            .push("l0.bias", 3, 1)
            .push("l1.weight", 1, 3)
            .build();
        assert_eq!(l.param_count(), 6 + 3 + 3);
        assert_eq!(l.slot("l0.bias").unwrap().offset, 6);
        assert_eq!(l.slot("l1.weight").unwrap().range(), 9..12);
    }

    #[test]
    fn distance_requires_same_layout() {
        let a = ParamVector::from_slice(&[3.0, 4.0, 0.0]);
        let b = ParamVector::from_slice(&[0.0, 0.0, 0.0]);
        assert_eq!(a.distance(&b).unwrap(), 5.0);
        let c = ParamVector::from_slice(&[0.0, 0.0]);
        assert!(matches!(a.distance(&c), Err(Error::LayoutError(_))));
    }

    #[test]
    fn hash_sees_single_bit() {
        let a = ParamVector::from_slice(&[1.0, 2.0]);
        let mut b = a.clone();
        b.as_mut_slice()[1] = f64::from_bits(2.0f64.to_bits() ^ 1);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), a.clone().hash());
    }
}
