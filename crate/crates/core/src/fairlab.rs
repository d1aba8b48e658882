//! Hardware-sensitivity metrics and their decompositions.
//!
//! Every loss, gradient and Hessian here is evaluated in reference mode
//! (binary64, sequential order) whatever profile trained the model, so that
//! differences across profiles come from the parameters alone.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::GroupedDataset;
use crate::error::{Error, Result};
use crate::models::{self, Head, LogitObjective, Model, ModelObjective};
use crate::numkit::{self, full_hessian, max_eigenvalue, EvalMode, HessianOperator, LinearOperator};

/// Trained models keyed by profile id, in a fixed order.
#[derive(Debug, Clone)]
pub struct ModelSet {
    entries: Vec<(String, Model)>,
}

impl ModelSet {
    pub fn new(entries: Vec<(String, Model)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config("model set is empty".into()));
        }
        for (i, (id, m)) in entries.iter().enumerate() {
            if entries[..i].iter().any(|(other, _)| other == id) {
                return Err(Error::Config(format!("duplicate profile id {id}")));
            }
            if m.spec != entries[0].1.spec {
                return Err(Error::LayoutError(format!("model for {id} has a different architecture")));
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    pub fn models(&self) -> impl Iterator<Item = &Model> {
        self.entries.iter().map(|(_, m)| m)
    }

    pub fn get(&self, id: &str) -> Result<&Model> {
        self.entries
            .iter()
            .find(|(other, _)| other == id)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Config(format!("profile {id} not in model set")))
    }

    fn index_of(&self, id: &str) -> Result<usize> {
        self.entries
            .iter()
            .position(|(other, _)| other == id)
            .ok_or_else(|| Error::Config(format!("reference profile {id} not in model set")))
    }
}

/// Reference-mode mean loss over group `group`.
pub fn group_loss(model: &Model, ds: &GroupedDataset, group: usize) -> Result<f64> {
    let view = ds.group_view(group)?;
    models::loss(model, &view, EvalMode::Reference)
}

/// Group losses for every model: `table[profile][group]`.
pub fn loss_table(set: &ModelSet, ds: &GroupedDataset) -> Result<Vec<Vec<f64>>> {
    set.models()
        .map(|m| (0..ds.num_groups()).map(|a| group_loss(m, ds, a)).collect())
        .collect()
}

fn sensitivity_from_table(table: &[Vec<f64>], reference: usize, group: usize) -> f64 {
    let base = table[reference][group];
    table
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != reference)
        .map(|(_, row)| (row[group] - base).abs())
        .fold(0.0, f64::max)
}

/// `Δ(a, m) = max_{m′} |L(θ_m, D_a) − L(θ_{m′}, D_a)|` with `m` the reference.
pub fn hardware_sensitivity(set: &ModelSet, reference_id: &str, ds: &GroupedDataset, group: usize) -> Result<f64> {
    let r = set.index_of(reference_id)?;
    if set.len() < 2 {
        warn!("hardware sensitivity over a single profile is 0");
        return Ok(0.0);
    }
    let losses = set
        .models()
        .map(|m| group_loss(m, ds, group).map(|l| vec![l]))
        .collect::<Result<Vec<_>>>()?;
    Ok(sensitivity_from_table(&losses, r, 0))
}

/// Largest pairwise gap between `deltas`, with the achieving pair.
pub fn max_pairwise_gap(deltas: &[f64]) -> (f64, Option<(usize, usize)>) {
    let mut best = (0.0, None);
    for a in 0..deltas.len() {
        for b in a + 1..deltas.len() {
            let gap = (deltas[a] - deltas[b]).abs();
            if best.1.is_none() || gap > best.0 {
                best = (gap, Some((a, b)));
            }
        }
    }
    best
}

/// `ξ = max_{a,a′} |Δ(a) − Δ(a′)|` and the pair achieving it.
pub fn fairness_violation(set: &ModelSet, reference_id: &str, ds: &GroupedDataset) -> Result<(f64, Option<(usize, usize)>)> {
    if ds.num_groups() < 2 {
        warn!("fairness violation over a single group is 0");
        return Ok((0.0, None));
    }
    let r = set.index_of(reference_id)?;
    let table = loss_table(set, ds)?;
    let deltas: Vec<f64> = (0..ds.num_groups()).map(|a| sensitivity_from_table(&table, r, a)).collect();
    Ok(max_pairwise_gap(&deltas))
}

/// `ρ = max_{m′} ‖θ_m − θ_{m′}‖` with `m` the reference.
pub fn param_distance(set: &ModelSet, reference_id: &str) -> Result<f64> {
    let reference = set.get(reference_id)?;
    set.models()
        .map(|m| reference.params.distance(&m.params))
        .try_fold(0.0f64, |acc, d| d.map(|d| acc.max(d)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub reference_id: String,
    pub profile_ids: Vec<String>,
    /// `Δ(a, m)` per group.
    pub delta: Vec<f64>,
    pub xi: f64,
    pub argmax_pair: Option<(usize, usize)>,
    /// `losses[profile][group]`, reference mode.
    pub losses: Vec<Vec<f64>>,
    pub rho: f64,
}

pub fn sensitivity_report(set: &ModelSet, reference_id: &str, ds: &GroupedDataset) -> Result<SensitivityReport> {
    let r = set.index_of(reference_id)?;
    let losses = loss_table(set, ds)?;
    let delta: Vec<f64> = (0..ds.num_groups()).map(|a| sensitivity_from_table(&losses, r, a)).collect();
    let (xi, argmax_pair) = max_pairwise_gap(&delta);
    Ok(SensitivityReport {
        reference_id: reference_id.to_string(),
        profile_ids: set.ids().map(str::to_string).collect(),
        delta,
        xi,
        argmax_pair,
        losses,
        rho: param_distance(set, reference_id)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupGradient {
    pub group: usize,
    pub size: usize,
    pub gradient: Vec<f64>,
    pub norm: f64,
    /// Unit direction; all zeros when `zero_direction` is set.
    pub direction: Vec<f64>,
    pub zero_direction: bool,
}

/// Reference-mode gradient of each group's mean loss.
pub fn group_gradient_norms(model: &Model, ds: &GroupedDataset) -> Result<Vec<GroupGradient>> {
    (0..ds.num_groups())
        .map(|a| {
            let view = ds.group_view(a)?;
            let gradient = models::gradient(model, &view, EvalMode::Reference)?.into_vec();
            let norm = numkit::norm(&gradient);
            let zero_direction = norm == 0.0;
            let direction = if zero_direction {
                vec![0.0; gradient.len()]
            } else {
                gradient.iter().map(|g| g / norm).collect()
            };
            Ok(GroupGradient {
                group: a,
                size: view.len(),
                gradient,
                norm,
                direction,
                zero_direction,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleMatrix {
    /// Radians; `NaN` where a group gradient vanishes.
    pub angles: Vec<Vec<f64>>,
    pub undefined: Vec<(usize, usize)>,
    /// Smallest group (lowest index on ties).
    pub minority: usize,
    /// Every pair of non-minority groups is strictly under π/2 apart.
    pub hypothesis_holds: bool,
}

pub fn angles_from_gradients(grads: &[GroupGradient]) -> AngleMatrix {
    let g = grads.len();
    let mut angles = vec![vec![0.0; g]; g];
    let mut undefined = Vec::new();
    for a in 0..g {
        for b in 0..g {
            if a == b {
                continue;
            }
            if grads[a].zero_direction || grads[b].zero_direction {
                angles[a][b] = f64::NAN;
                if a < b {
                    undefined.push((a, b));
                }
            } else {
                let c = numkit::dot(&grads[a].direction, &grads[b].direction).clamp(-1.0, 1.0);
                angles[a][b] = c.acos();
            }
        }
    }
    // Symmetrize against rounding in the dot products.
    for a in 0..g {
        for b in a + 1..g {
            let v = angles[a][b];
            angles[b][a] = v;
        }
    }
    let minority = grads
        .iter()
        .enumerate()
        .min_by_key(|(i, gg)| (gg.size, *i))
        .map_or(0, |(i, _)| i);
    let mut hypothesis_holds = true;
    for a in 0..g {
        for b in a + 1..g {
            if a == minority || b == minority {
                continue;
            }
            let t = angles[a][b];
            if !(t < std::f64::consts::FRAC_PI_2) {
                hypothesis_holds = false;
            }
        }
    }
    AngleMatrix {
        angles,
        undefined,
        minority,
        hypothesis_holds,
    }
}

pub fn gradient_angle_matrix(model: &Model, ds: &GroupedDataset) -> Result<AngleMatrix> {
    Ok(angles_from_gradients(&group_gradient_norms(model, ds)?))
}

/// Power-iteration settings for Hessian eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    pub seed: u64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            tol: 1e-7,
            max_iters: 2000,
        }
    }
}

/// `λ_max` of the group Hessian via finite-difference HVPs.
pub fn group_hessian_lmax(model: &Model, ds: &GroupedDataset, group: usize, opts: EigenOptions) -> Result<numkit::EigenEstimate> {
    let view = ds.group_view(group)?;
    let obj = ModelObjective::new(&model.spec, view);
    let op = HessianOperator::new(&obj, model.theta());
    max_eigenvalue(&op, opts.seed, opts.tol, opts.max_iters)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDistance {
    /// `1 − Σ p²`.
    pub delta: f64,
    /// `f(1 − f)` for binary distributions.
    pub closeness: Option<f64>,
}

/// Boundary distance of one probability vector. A single entry is read as
/// the positive-class probability of a binary model.
pub fn distance_to_boundary(probs: &[f64]) -> Result<BoundaryDistance> {
    let binary;
    let p = match probs.len() {
        0 => return Err(Error::EmptySubset("empty probability vector".into())),
        1 => {
            binary = [1.0 - probs[0], probs[0]];
            &binary[..]
        }
        _ => probs,
    };
    let total: f64 = p.iter().sum();
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::SchemaError(format!("not a probability distribution: {probs:?}")));
    }
    let delta = 1.0 - p.iter().map(|v| v * v).sum::<f64>();
    let closeness = (p.len() == 2).then(|| p[1] * (1.0 - p[1]));
    Ok(BoundaryDistance {
        delta: delta.max(0.0),
        closeness,
    })
}

/// Mean boundary distance over each group.
pub fn group_dtb_means(model: &Model, ds: &GroupedDataset) -> Result<Vec<f64>> {
    (0..ds.num_groups())
        .map(|a| {
            let view = ds.group_view(a)?;
            let mut sum = 0.0;
            for s in view.iter() {
                let p = models::predict_proba(model, s.x, EvalMode::Reference)?;
                sum += distance_to_boundary(&p)?.delta;
            }
            Ok(sum / view.len() as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorGroup {
    pub group: usize,
    /// Left side: `Δ(a, m)`.
    pub delta: f64,
    pub grad_norm: f64,
    pub lambda_max: f64,
    pub eigen_converged: bool,
    pub term1: f64,
    pub term2: f64,
    pub rhs: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorReport {
    pub reference_id: String,
    pub rho: f64,
    pub groups: Vec<TaylorGroup>,
    /// Third-order constant `10 · max_a λ_max`.
    pub kappa: f64,
    pub all_converged: bool,
}

impl TaylorReport {
    /// Slack allowance `κρ³` for non-quadratic losses.
    pub fn cubic_allowance(&self) -> f64 {
        self.kappa * self.rho.powi(3)
    }
}

/// Second-order decomposition of `Δ(a, m)` about the reference parameters:
/// `Δ ≤ ‖g_a‖ρ + ½ λ_max(H_a) ρ²`, with negative curvature clipped to zero.
pub fn taylor_bound_report(set: &ModelSet, reference_id: &str, ds: &GroupedDataset, opts: EigenOptions) -> Result<TaylorReport> {
    let r = set.index_of(reference_id)?;
    let reference = set.get(reference_id)?;
    let table = loss_table(set, ds)?;
    let rho = param_distance(set, reference_id)?;
    let grads = group_gradient_norms(reference, ds)?;
    let mut groups = Vec::with_capacity(ds.num_groups());
    for (a, g) in grads.iter().enumerate() {
        let eig = group_hessian_lmax(reference, ds, a, opts)?;
        if !eig.converged {
            warn!("group {a}: Hessian eigenvalue did not converge");
        }
        let delta = if set.len() < 2 { 0.0 } else { sensitivity_from_table(&table, r, a) };
        let term1 = g.norm * rho;
        let term2 = 0.5 * eig.lambda_max.max(0.0) * rho * rho;
        let rhs = term1 + term2;
        groups.push(TaylorGroup {
            group: a,
            delta,
            grad_norm: g.norm,
            lambda_max: eig.lambda_max,
            eigen_converged: eig.converged,
            term1,
            term2,
            rhs,
            slack: rhs - delta,
        });
    }
    let kappa = 10.0 * groups.iter().map(|g| g.lambda_max).fold(0.0, f64::max);
    Ok(TaylorReport {
        reference_id: reference_id.to_string(),
        rho,
        all_converged: groups.iter().all(|g| g.eigen_converged),
        groups,
        kappa,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleCurvature {
    pub index: usize,
    pub group: usize,
    /// Sigmoid output.
    pub f: f64,
    /// `f(1 − f)`.
    pub closeness: f64,
    /// `‖∇_θ z‖²` for the logit `z`.
    pub grad_norm_sq: f64,
    /// `|f − y|`.
    pub error: f64,
    /// `λ_max(sign(f − y) · ∇²_θ z)`.
    pub curvature: f64,
    pub curvature_converged: bool,
    /// `closeness · grad_norm_sq + error · curvature`.
    pub term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianBoundGroup {
    pub group: usize,
    /// `λ_max(H_a)` from the dense Hessian.
    pub lambda_max: f64,
    pub bound: f64,
    pub closeness_mean: f64,
    pub asymmetry: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianBoundReport {
    pub groups: Vec<HessianBoundGroup>,
    pub samples: Vec<SampleCurvature>,
}

struct Scaled<'a> {
    op: &'a dyn LinearOperator,
    scale: f64,
}

impl LinearOperator for Scaled<'_> {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.op.apply(v)?.into_iter().map(|x| self.scale * x).collect())
    }
}

/// Per-group curvature against its boundary-distance bound for a sigmoid
/// model. Per sample the loss Hessian is
/// `f(1−f)·∇z∇zᵀ + (f − y)·∇²z` in terms of the logit `z`, so its top
/// eigenvalue is at most `f(1−f)‖∇z‖² + |f − y|·λ_max(sign(f − y)·∇²z)`.
pub fn hessian_bound_report(model: &Model, ds: &GroupedDataset, opts: EigenOptions) -> Result<HessianBoundReport> {
    if model.spec.head != Head::Sigmoid {
        return Err(Error::UnsupportedHead("curvature bound is defined for sigmoid heads only".into()));
    }
    let k = model.params.len();
    if k > numkit::FULL_HESSIAN_LIMIT {
        return Err(Error::OracleTooLarge {
            limit: numkit::FULL_HESSIAN_LIMIT,
            actual: k,
        });
    }
    let theta = model.theta();
    let mut groups = Vec::with_capacity(ds.num_groups());
    let mut samples = Vec::with_capacity(ds.len());
    for a in 0..ds.num_groups() {
        let view = ds.group_view(a)?;
        let obj = ModelObjective::new(&model.spec, view.clone());
        let h = full_hessian(&obj, theta)?;
        let lambda_max = numkit::dense_lambda_max(&h.matrix);

        let mut bound = 0.0;
        let mut closeness_sum = 0.0;
        for s in view.iter() {
            let logit = LogitObjective::new(&model.spec, s.x)?;
            let z = numkit::Objective::loss(&logit, theta)?;
            let dz = numkit::Objective::gradient(&logit, theta)?;
            let f = numkit::sigmoid(z);
            let y = s.label as f64;
            let closeness = f * (1.0 - f);
            let grad_norm_sq = numkit::dot(&dz, &dz);
            let error = (f - y).abs();
            let (curvature, curvature_converged) = if error == 0.0 {
                (0.0, true)
            } else {
                let op = HessianOperator::new(&logit, theta);
                let scaled = Scaled {
                    op: &op,
                    scale: if f >= y { 1.0 } else { -1.0 },
                };
                let e = max_eigenvalue(&scaled, opts.seed, opts.tol, opts.max_iters)?;
                (e.lambda_max, e.converged)
            };
            let term = closeness * grad_norm_sq + error * curvature;
            bound += term;
            closeness_sum += closeness;
            samples.push(SampleCurvature {
                index: s.index,
                group: a,
                f,
                closeness,
                grad_norm_sq,
                error,
                curvature,
                curvature_converged,
                term,
            });
        }
        let n = view.len() as f64;
        groups.push(HessianBoundGroup {
            group: a,
            lambda_max,
            bound: bound / n,
            closeness_mean: closeness_sum / n,
            asymmetry: h.asymmetry,
        });
    }
    Ok(HessianBoundReport { groups, samples })
}

/// One flat row per (group, profile) for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatRow {
    pub profile_id: String,
    pub group: usize,
    pub loss: f64,
    pub delta: f64,
    pub xi: f64,
    pub rho: f64,
    pub grad_norm: f64,
    pub lambda_max: f64,
    pub dtb_mean: f64,
    pub term1: f64,
    pub term2: f64,
    pub slack: f64,
}

/// Joins a sensitivity report, a Taylor report and boundary distances into flat rows.
pub fn flatten_reports(sens: &SensitivityReport, taylor: &TaylorReport, dtb: &[f64]) -> Vec<FlatRow> {
    let mut rows = Vec::new();
    for (p, id) in sens.profile_ids.iter().enumerate() {
        for (a, t) in taylor.groups.iter().enumerate() {
            rows.push(FlatRow {
                profile_id: id.clone(),
                group: a,
                loss: sens.losses[p][a],
                delta: sens.delta[a],
                xi: sens.xi,
                rho: sens.rho,
                grad_norm: t.grad_norm,
                lambda_max: t.lambda_max,
                dtb_mean: dtb.get(a).copied().unwrap_or(f64::NAN),
                term1: t.term1,
                term2: t.term2,
                slack: t.slack,
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ArchSpec;

    fn model(theta: Vec<f64>) -> Model {
        Model::from_params(ArchSpec::logistic(1), theta).unwrap()
    }

    fn two_group_ds() -> GroupedDataset {
        GroupedDataset::new(
            1,
            vec![0.0, 0.0, 1.0, -1.0, 2.0],
            vec![0, 0, 1, 1, 1],
            vec![1, 0, 1, 0, 1],
            vec!["g0".into(), "g1".into()],
            vec!["neg".into(), "pos".into()],
        )
        .unwrap()
    }

    #[test]
    fn coin_flip_group_loss() {
        let ds = two_group_ds();
        let l = group_loss(&model(vec![0.0, 0.0]), &ds, 0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn weighted_group_losses_recover_total() {
        let ds = two_group_ds();
        let m = model(vec![0.7, -0.2]);
        let total = models::loss(&m, &ds.view(), EvalMode::Reference).unwrap();
        let sizes = ds.group_sizes();
        let weighted: f64 = (0..2)
            .map(|a| sizes[a] as f64 / ds.len() as f64 * group_loss(&m, &ds, a).unwrap())
            .sum();
        assert!((weighted - total).abs() < 1e-12);
    }

    #[test]
    fn sensitivity_table_arithmetic() {
        let table = vec![vec![0.50], vec![0.44], vec![0.61]];
        assert!((sensitivity_from_table(&table, 0, 0) - 0.11).abs() < 1e-12);
        let shuffled = vec![vec![0.50], vec![0.61], vec![0.44]];
        assert_eq!(sensitivity_from_table(&table, 0, 0), sensitivity_from_table(&shuffled, 0, 0));
    }

    #[test]
    fn violation_pair() {
        let (xi, pair) = max_pairwise_gap(&[0.01, 0.05, 0.03]);
        assert!((xi - 0.04).abs() < 1e-15);
        assert_eq!(pair, Some((0, 1)));
        assert_eq!(max_pairwise_gap(&[0.02; 3]).0, 0.0);
    }

    #[test]
    fn rho_of_three_four() {
        let set = ModelSet::new(vec![
            ("a".into(), model(vec![0.0, 0.0])),
            ("b".into(), model(vec![3.0, 4.0])),
        ])
        .unwrap();
        assert_eq!(param_distance(&set, "a").unwrap(), 5.0);
        let ds = two_group_ds();
        let same = ModelSet::new(vec![("a".into(), model(vec![1.0, 2.0])), ("b".into(), model(vec![1.0, 2.0]))]).unwrap();
        let t = taylor_bound_report(&same, "a", &ds, EigenOptions::default()).unwrap();
        assert!(t.groups.iter().all(|g| g.delta == 0.0 && g.rhs == 0.0));
    }

    #[test]
    fn mismatched_specs_rejected() {
        let other = Model::zeros(ArchSpec::logistic(2)).unwrap();
        assert!(matches!(
            ModelSet::new(vec![("a".into(), model(vec![0.0, 0.0])), ("b".into(), other)]),
            Err(Error::LayoutError(_))
        ));
    }

    #[test]
    fn boundary_distance_cases() {
        let one_hot = distance_to_boundary(&[0.0, 1.0]).unwrap();
        assert_eq!((one_hot.delta, one_hot.closeness), (0.0, Some(0.0)));
        let half = distance_to_boundary(&[0.5, 0.5]).unwrap();
        assert_eq!((half.delta, half.closeness), (0.5, Some(0.25)));
        let uniform = distance_to_boundary(&[0.25; 4]).unwrap();
        assert!((uniform.delta - 0.75).abs() < 1e-15);
        assert_eq!(uniform.closeness, None);
        assert!(distance_to_boundary(&[0.7, 0.7]).is_err());
    }

    #[test]
    fn angle_cases() {
        let gg = |group, size, g: Vec<f64>| {
            let norm = numkit::norm(&g);
            GroupGradient {
                group,
                size,
                direction: g.iter().map(|x| x / norm).collect(),
                gradient: g,
                norm,
                zero_direction: false,
            }
        };
        let m = angles_from_gradients(&[gg(0, 10, vec![1.0, 0.0]), gg(1, 8, vec![0.0, 2.0]), gg(2, 2, vec![1.0, 1.0])]);
        assert!((m.angles[0][1] - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
        assert_eq!(m.minority, 2);
        // Exactly orthogonal is not strictly acute.
        assert!(!m.hypothesis_holds);
        let same = angles_from_gradients(&[gg(0, 3, vec![1.0, 2.0]), gg(1, 3, vec![1.0, 2.0])]);
        assert!(same.angles[0][1].abs() < 1e-7);
        for a in 0..3 {
            assert_eq!(m.angles[a][a], 0.0);
            for b in 0..3 {
                assert_eq!(m.angles[a][b].to_bits(), m.angles[b][a].to_bits());
            }
        }
    }

    #[test]
    fn curvature_bound_needs_sigmoid() {
        let ds = two_group_ds();
        let m = Model::zeros(ArchSpec::linear_regression(1)).unwrap();
        assert!(matches!(
            hessian_bound_report(&m, &ds, EigenOptions::default()),
            Err(Error::UnsupportedHead(_))
        ));
    }
}
