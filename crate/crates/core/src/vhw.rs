//! Virtual hardware profiles.
//!
//! A profile is a deterministic reduction plan: the order in which a sum is
//! accumulated plus the precision of the addends and of the running
//! accumulator. Two profiles that disagree on either produce slightly
//! different sums for the same inputs, which is how accelerator-dependent
//! accumulation behaviour is reproduced here without any real parallelism.
//!
//! Noise enters training at two sites only: forward-pass inner products and
//! the cross-sample reduction of per-sample gradients. Diagnostics always run
//! under [`VirtualHardwareProfile::reference`].

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Binary32,
    Binary64,
}

impl Precision {
    #[inline]
    pub fn round(self, x: f64) -> f64 {
        match self {
            Precision::Binary32 => x as f32 as f64,
            Precision::Binary64 => x,
        }
    }

    /// Unit roundoff `u = 2^-p`.
    pub fn unit_roundoff(self) -> f64 {
        match self {
            Precision::Binary32 => (f32::EPSILON as f64) / 2.0,
            Precision::Binary64 => f64::EPSILON / 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OrderPolicy {
    /// Left-to-right in index order.
    Sequential,
    /// Left-to-right over a seeded Fisher-Yates permutation of the indices.
    Permuted { seed: u64 },
    /// Balanced binary tree: split at `n / 2`, sum halves, add.
    Pairwise,
    /// Sequential sums over fixed-size chunks, then a pairwise tree over the
    /// chunk sums (warp-style reduction).
    ChunkedTree { chunk_size: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VirtualHardwareProfile {
    pub id: String,
    pub order_policy: OrderPolicy,
    pub accumulator_precision: Precision,
    pub element_precision: Precision,
}

impl VirtualHardwareProfile {
    pub fn new(
        id: impl Into<String>,
        order_policy: OrderPolicy,
        accumulator_precision: Precision,
        element_precision: Precision,
    ) -> Self {
        Self {
            id: id.into(),
            order_policy,
            accumulator_precision,
            element_precision,
        }
    }

    /// Sequential binary64 evaluation in index order.
    pub fn reference() -> Self {
        Self::new(
            "hw_ref",
            OrderPolicy::Sequential,
            Precision::Binary64,
            Precision::Binary64,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Config("profile id must be non-empty".into()));
        }
        if let OrderPolicy::ChunkedTree { chunk_size } = self.order_policy {
            if chunk_size < 2 {
                return Err(Error::Config(format!(
                    "profile {}: chunk_size must be >= 2, got {chunk_size}",
                    self.id
                )));
            }
        }
        Ok(())
    }

    pub fn is_reference_semantics(&self) -> bool {
        self.order_policy == OrderPolicy::Sequential
            && self.accumulator_precision == Precision::Binary64
            && self.element_precision == Precision::Binary64
    }

    /// Precomputes the reduction order for inputs of length `n`.
    pub fn plan(&self, n: usize) -> ReductionPlan<'_> {
        let order = match self.order_policy {
            OrderPolicy::Permuted { seed } => Some(fisher_yates(n, seed)),
            _ => None,
        };
        ReductionPlan {
            profile: self,
            n,
            order,
        }
    }

    pub fn reduce(&self, values: &[f64]) -> f64 {
        self.plan(values.len()).reduce(values)
    }

    pub fn dot(&self, xs: &[f64], ys: &[f64]) -> Result<f64> {
        if xs.len() != ys.len() {
            return Err(Error::ShapeError {
                expected: xs.len(),
                actual: ys.len(),
            });
        }
        if xs.is_empty() {
            return Err(Error::EmptySubset("dot of empty vectors".into()));
        }
        Ok(self.plan(xs.len()).dot(xs, ys))
    }
}

/// Seeded Fisher-Yates permutation of `0..n`.
pub fn fisher_yates(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    order
}

/// A profile bound to a fixed input length.
#[derive(Debug, Clone)]
pub struct ReductionPlan<'p> {
    profile: &'p VirtualHardwareProfile,
    n: usize,
    order: Option<Vec<usize>>,
}

trait Accumulator: Copy {
    const ZERO: Self;
    fn from_f64(x: f64) -> Self;
    fn add(self, other: Self) -> Self;
    fn to_f64(self) -> f64;
}

impl Accumulator for f32 {
    const ZERO: Self = 0.0;
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn add(self, other: Self) -> Self {
        self + other
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Accumulator for f64 {
    const ZERO: Self = 0.0;
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn add(self, other: Self) -> Self {
        self + other
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

fn pairwise<A: Accumulator>(values: &[f64], elem: Precision) -> A {
    match values.len() {
        0 => A::ZERO,
        1 => A::from_f64(elem.round(values[0])),
        n => {
            let (lo, hi) = values.split_at(n / 2);
            pairwise::<A>(lo, elem).add(pairwise::<A>(hi, elem))
        }
    }
}

fn pairwise_acc<A: Accumulator>(values: &[A]) -> A {
    match values.len() {
        0 => A::ZERO,
        1 => values[0],
        n => {
            let (lo, hi) = values.split_at(n / 2);
            pairwise_acc(lo).add(pairwise_acc(hi))
        }
    }
}

impl<'p> ReductionPlan<'p> {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn profile(&self) -> &VirtualHardwareProfile {
        self.profile
    }

    /// Sums `values` under the plan. `values.len()` must equal the planned length.
    pub fn reduce(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.n, "reduction plan length mismatch");
        match self.profile.accumulator_precision {
            Precision::Binary32 => self.reduce_in::<f32>(values),
            Precision::Binary64 => self.reduce_in::<f64>(values),
        }
    }

    fn reduce_in<A: Accumulator>(&self, values: &[f64]) -> f64 {
        let elem = self.profile.element_precision;
        match self.profile.order_policy {
            OrderPolicy::Sequential => values
                .iter()
                .fold(A::ZERO, |acc, &v| acc.add(A::from_f64(elem.round(v))))
                .to_f64(),
            OrderPolicy::Permuted { .. } => {
                let order = self.order.as_ref().expect("permuted plan carries an order");
                order
                    .iter()
                    .fold(A::ZERO, |acc, &i| acc.add(A::from_f64(elem.round(values[i]))))
                    .to_f64()
            }
            OrderPolicy::Pairwise => pairwise::<A>(values, elem).to_f64(),
            OrderPolicy::ChunkedTree { chunk_size } => {
                let chunk_sums: Vec<A> = values
                    .chunks(chunk_size.max(2))
                    .map(|chunk| {
                        chunk
                            .iter()
                            .fold(A::ZERO, |acc, &v| acc.add(A::from_f64(elem.round(v))))
                    })
                    .collect();
                pairwise_acc(&chunk_sums).to_f64()
            }
        }
    }

    /// Inner product: elementwise products in element precision, then [`Self::reduce`].
    pub fn dot(&self, xs: &[f64], ys: &[f64]) -> f64 {
        assert_eq!(xs.len(), self.n, "reduction plan length mismatch");
        assert_eq!(ys.len(), self.n, "reduction plan length mismatch");
        if self.profile.is_reference_semantics() {
            return xs.iter().zip(ys).fold(0.0, |acc, (x, y)| acc + x * y);
        }
        let products: Vec<f64> = match self.profile.element_precision {
            Precision::Binary32 => xs
                .iter()
                .zip(ys)
                .map(|(&x, &y)| ((x as f32) * (y as f32)) as f64)
                .collect(),
            Precision::Binary64 => xs.iter().zip(ys).map(|(x, y)| x * y).collect(),
        };
        self.reduce(&products)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRegistry {
    pub profiles: Vec<VirtualHardwareProfile>,
    pub reference_id: String,
}

impl ProfileRegistry {
    pub fn new(profiles: Vec<VirtualHardwareProfile>, reference_id: impl Into<String>) -> Result<Self> {
        let registry = Self {
            profiles,
            reference_id: reference_id.into(),
        };
        registry.validate()?;
        Ok(registry)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for p in &self.profiles {
            p.validate()?;
            if !seen.insert(p.id.as_str()) {
                return Err(Error::Config(format!("duplicate profile id `{}`", p.id)));
            }
        }
        if !seen.contains(self.reference_id.as_str()) {
            return Err(Error::Config(format!(
                "reference profile `{}` not in registry",
                self.reference_id
            )));
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&VirtualHardwareProfile> {
        self.profiles.iter().find(|p| p.id == id)
    }

    pub fn reference(&self) -> &VirtualHardwareProfile {
        self.get(&self.reference_id)
            .expect("validated registry contains its reference")
    }

    pub fn ids(&self) -> Vec<String> {
        self.profiles.iter().map(|p| p.id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Keeps only the listed ids, in the listed order.
    pub fn select(&self, ids: &[String], reference_id: &str) -> Result<Self> {
        let profiles = ids
            .iter()
            .map(|id| {
                self.get(id)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("unknown profile `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(profiles, reference_id)
    }
}

/// The canonical catalog: one reference plus four binary32 reduction shapes.
pub fn builtin_profiles() -> ProfileRegistry {
    use OrderPolicy::*;
    use Precision::*;
    ProfileRegistry::new(
        vec![
            VirtualHardwareProfile::reference(),
            VirtualHardwareProfile::new("hw_seq32", Sequential, Binary32, Binary32),
            VirtualHardwareProfile::new("hw_pair32", Pairwise, Binary32, Binary32),
            VirtualHardwareProfile::new("hw_perm32_s7", Permuted { seed: 7 }, Binary32, Binary32),
            VirtualHardwareProfile::new("hw_warp32", ChunkedTree { chunk_size: 32 }, Binary32, Binary32),
        ],
        "hw_ref",
    )
    .expect("builtin catalog is valid")
}

/// Error-free transformation of `a + b` (Knuth two-sum).
#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

/// Neumaier-compensated binary64 sum.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let (s, e) = two_sum(sum, v);
        sum = s;
        comp += e;
    }
    sum + comp
}

/// Worst-case forward error bound `γ_m · Σ|x|` with `γ_m = m·u / (1 − m·u)`,
/// where `m` is the depth of the reduction (n − 1 for sequential, ⌈log₂ n⌉
/// for pairwise) and `u` the unit roundoff of the accumulator.
pub fn error_bound(values: &[f64], depth: usize, precision: Precision) -> f64 {
    let mu = depth as f64 * precision.unit_roundoff();
    let gamma = mu / (1.0 - mu);
    gamma * values.iter().map(|v| v.abs()).sum::<f64>()
}

pub fn ceil_log2(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Uniform};

    fn seq32() -> VirtualHardwareProfile {
        builtin_profiles().get("hw_seq32").unwrap().clone()
    }

    #[test]
    fn absorbed_addend_in_binary32() {
        // 1e8 + 1 rounds back to 1e8 in binary32 (ulp(1e8) = 8).
        let v = [1e8, 1.0, -1e8];
        assert_eq!(seq32().reduce(&v), 0.0);
        assert_eq!(VirtualHardwareProfile::reference().reduce(&v), 1.0);
    }

    #[test]
    fn catalog_shape() {
        let reg = builtin_profiles();
        assert_eq!(reg.len(), 5);
        assert_eq!(reg.reference_id, "hw_ref");
        for p in &reg.profiles {
            assert_eq!(p.reduce(&[0.0; 37]), 0.0, "{}", p.id);
        }
    }

    #[test]
    fn seq_and_pair_disagree_on_uniform_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let u = Uniform::new(0.0, 1.0);
        let v: Vec<f64> = (0..10_000).map(|_| u.sample(&mut rng)).collect();
        let reg = builtin_profiles();
        let a = reg.get("hw_seq32").unwrap().reduce(&v);
        let b = reg.get("hw_pair32").unwrap().reduce(&v);
        assert_ne!(a, b);
    }

    #[test]
    fn permuted_differs_from_sequential_pinned() {
        // Regression pin: alternating large and small magnitudes.
        let v: Vec<f64> = (0..64)
            .map(|i| if i % 2 == 0 { 1.0e7 + i as f64 } else { 0.3 + i as f64 * 1e-3 })
            .collect();
        let reg = builtin_profiles();
        let perm = reg.get("hw_perm32_s7").unwrap().reduce(&v);
        let seq = reg.get("hw_seq32").unwrap().reduce(&v);
        assert_ne!(perm, seq);
    }

    #[test]
    fn fisher_yates_is_permutation_and_deterministic() {
        let a = fisher_yates(100, 7);
        let b = fisher_yates(100, 7);
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        assert_ne!(a, fisher_yates(100, 8));
    }

    #[test]
    fn dot_edge_cases() {
        let reg = builtin_profiles();
        let x = [0.1, -2.5, 3.75, 1e-3];
        let zero = [0.0; 4];
        for p in &reg.profiles {
            assert_eq!(p.dot(&x, &zero).unwrap(), 0.0);
            for i in 0..4 {
                let mut e = [0.0; 4];
                e[i] = 1.0;
                assert_eq!(p.dot(&e, &x).unwrap(), p.element_precision.round(x[i]));
            }
        }
        assert!(matches!(
            reg.reference().dot(&x, &x[..3]),
            Err(Error::ShapeError { .. })
        ));
    }

    #[test]
    fn cancellation_pair_separates_precisions() {
        // x·y = 1e8·1 + 1·0.75 − 1e8·1 ; exact = 0.75
        let xs = [1e8, 1.0, -1e8];
        let ys = [1.0, 0.75, 1.0];
        let exact = 0.75;
        let r64 = VirtualHardwareProfile::reference().dot(&xs, &ys).unwrap();
        let r32 = seq32().dot(&xs, &ys).unwrap();
        assert_eq!(r64, exact);
        assert!((r32 - r64).abs() / r64.abs() > 1e-3);
    }

    #[test]
    fn chunked_tree_matches_manual_grouping() {
        let p = VirtualHardwareProfile::new(
            "t",
            OrderPolicy::ChunkedTree { chunk_size: 3 },
            Precision::Binary64,
            Precision::Binary64,
        );
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        // chunks (6, 15, 7) -> pairwise: 6 + (15 + 7)
        assert_eq!(p.reduce(&v), 28.0);
        assert!(VirtualHardwareProfile::new(
            "bad",
            OrderPolicy::ChunkedTree { chunk_size: 1 },
            Precision::Binary32,
            Precision::Binary32
        )
        .validate()
        .is_err());
    }

    #[test]
    fn registry_rejects_duplicates_and_missing_reference() {
        let p = VirtualHardwareProfile::reference();
        assert!(ProfileRegistry::new(vec![p.clone(), p.clone()], "hw_ref").is_err());
        assert!(ProfileRegistry::new(vec![p], "nope").is_err());
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(1024), 10);
        assert_eq!(ceil_log2(10_000), 14);
    }
}
