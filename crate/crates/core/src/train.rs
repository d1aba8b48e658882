//! Deterministic minibatch SGD under a virtual hardware profile.
//!
//! The profile governs forward inner products and the cross-sample reduction
//! of per-sample gradients. Everything else (data order, initialization,
//! schedule, momentum and weight-decay arithmetic) is binary64 and identical
//! across profiles.
//!
//! With `mitigation_lambda > 0` each minibatch objective becomes
//! `J(B) + λ · Σ_a (δ_{B_a} − δ_B)²`, where `δ` is the mean boundary distance
//! `1 − Σ p²` over the group's samples in the batch (groups absent from the
//! batch are skipped). The penalty is differentiated through the softmax.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{DatasetView, GroupedDataset, Sample};
use crate::error::{Error, Result};
use crate::fairlab::distance_to_boundary;
use crate::models::{self, boundary_distance_and_grad, forward, sample_loss, ForwardPlans, Head, Model};
use crate::numkit::{self, Objective, Tape, Var, PROB_CLAMP};
use crate::vhw::VirtualHardwareProfile;

/// Loss above which a run is declared diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Linear ramp from `η/warmup_steps` to `η` over the first
    /// `warmup_fraction` of steps, then linear decay towards zero.
    LinearWarmupDecay { warmup_fraction: f64 },
}

impl LrSchedule {
    pub fn rate(&self, base: f64, step: usize, total: usize) -> f64 {
        match *self {
            LrSchedule::Constant => base,
            LrSchedule::LinearWarmupDecay { warmup_fraction } => {
                let warm = ((warmup_fraction * total as f64).ceil() as usize).clamp(1, total.max(1));
                if step < warm {
                    base * (step + 1) as f64 / warm as f64
                } else {
                    let tail = (total - warm).max(1) as f64;
                    base * (total - step) as f64 / tail
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_schedule: LrSchedule,
    pub shuffle_seed: u64,
    pub mitigation_lambda: f64,
    pub prob_clamp: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
            lr_schedule: LrSchedule::Constant,
            shuffle_seed: 0,
            mitigation_lambda: 0.0,
            prob_clamp: PROB_CLAMP,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !self.mitigation_lambda.is_finite() || self.mitigation_lambda < 0.0 {
            return bad(format!("mitigation_lambda must be finite and >= 0, got {}", self.mitigation_lambda));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.prob_clamp != PROB_CLAMP {
            return bad(format!("prob_clamp is fixed at {PROB_CLAMP}"));
        }
        if let LrSchedule::LinearWarmupDecay { warmup_fraction } = self.lr_schedule {
            if !(0.0..=1.0).contains(&warmup_fraction) {
                return bad(format!("warmup_fraction must lie in [0, 1], got {warmup_fraction}"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    /// Mean minibatch loss `J`, penalty excluded.
    pub train_loss: f64,
    /// Mean minibatch gradient norm of the full objective.
    pub grad_norm: f64,
    /// Mean minibatch penalty (unweighted).
    pub penalty: f64,
    /// Mean boundary distance per group over the epoch; `None` if unseen.
    pub group_dtb: Vec<Option<f64>>,
}

/// Everything about a run that must not depend on the profile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub profile_id: String,
    pub config_hash: String,
    pub init_param_hash: String,
    pub data_hash: String,
    pub data_order_hash: String,
    pub schedule_hash: String,
}

impl Provenance {
    /// Fields that differ from `other`, ignoring the profile id.
    pub fn diff_except_profile(&self, other: &Provenance) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.config_hash != other.config_hash {
            out.push("config_hash");
        }
        if self.init_param_hash != other.init_param_hash {
            out.push("init_param_hash");
        }
        if self.data_hash != other.data_hash {
            out.push("data_hash");
        }
        if self.data_order_hash != other.data_order_hash {
            out.push("data_order_hash");
        }
        if self.schedule_hash != other.schedule_hash {
            out.push("schedule_hash");
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: Model,
    pub profile_id: String,
    pub init_seed: Option<u64>,
    pub shuffle_seed: u64,
    pub config_hash: String,
    pub trace: Vec<EpochTrace>,
    pub provenance: Provenance,
}

impl TrainedModel {
    pub fn param_hash(&self) -> String {
        self.model.params.hash()
    }

    /// Trace rows: `epoch,train_loss,grad_norm,penalty,dtb_<group>...`.
    pub fn write_trace_csv(&self, path: impl AsRef<std::path::Path>, group_names: &[String]) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["epoch".to_string(), "train_loss".into(), "grad_norm".into(), "penalty".into()];
        header.extend(group_names.iter().map(|g| format!("dtb_{g}")));
        w.write_record(&header)?;
        for t in &self.trace {
            let mut rec = vec![
                t.epoch.to_string(),
                crate::data::format_f64(t.train_loss),
                crate::data::format_f64(t.grad_norm),
                crate::data::format_f64(t.penalty),
            ];
            for a in 0..group_names.len() {
                rec.push(
                    t.group_dtb
                        .get(a)
                        .copied()
                        .flatten()
                        .map(crate::data::format_f64)
                        .unwrap_or_default(),
                );
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Penalty value and bookkeeping for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyReport {
    pub penalty: f64,
    /// `δ_{B_a}` per group, `None` when the group is absent from the batch.
    pub per_group_delta: Vec<Option<f64>>,
    pub batch_delta: f64,
    pub absent_groups: Vec<usize>,
}

/// `Σ_{a present} (δ_{B_a} − δ_B)²` from per-sample probability vectors.
pub fn mitigation_penalty(probs: &[Vec<f64>], groups: &[usize], num_groups: usize) -> Result<PenaltyReport> {
    if probs.is_empty() {
        return Err(Error::EmptySubset("penalty needs a nonempty batch".into()));
    }
    if probs.len() != groups.len() {
        return Err(Error::ShapeError {
            expected: probs.len(),
            actual: groups.len(),
        });
    }
    let deltas = probs.iter().map(|p| Ok(distance_to_boundary(p)?.delta)).collect::<Result<Vec<_>>>()?;
    Ok(penalty_from_deltas(&deltas, groups, num_groups))
}

fn penalty_from_deltas(deltas: &[f64], groups: &[usize], num_groups: usize) -> PenaltyReport {
    let mut sums = vec![0.0; num_groups];
    let mut counts = vec![0usize; num_groups];
    for (&d, &g) in deltas.iter().zip(groups) {
        sums[g] += d;
        counts[g] += 1;
    }
    let batch_delta = deltas.iter().sum::<f64>() / deltas.len() as f64;
    let per_group_delta: Vec<Option<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    let penalty = per_group_delta
        .iter()
        .flatten()
        .map(|d| (d - batch_delta) * (d - batch_delta))
        .sum();
    let absent_groups = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 0)
        .map(|(a, _)| a)
        .collect();
    PenaltyReport {
        penalty,
        per_group_delta,
        batch_delta,
        absent_groups,
    }
}

/// Scratch space reused across minibatches.
#[derive(Default)]
struct Workspace {
    tapes: Vec<Tape>,
    outs: Vec<Var>,
    seeds: Vec<f64>,
    losses: Vec<f64>,
    deltas: Vec<f64>,
    delta_grads: Vec<f64>,
    rows: Vec<f64>,
}

struct BatchEval {
    loss: f64,
    penalty: Option<PenaltyReport>,
    grad: Vec<f64>,
}

/// Loss, penalty and mean gradient of one batch.
#[allow(clippy::too_many_arguments)]
fn eval_batch(
    spec: &models::ArchSpec,
    theta: &[f64],
    batch: &[Sample],
    num_groups: usize,
    lambda: f64,
    penalty_enabled: bool,
    profile: &VirtualHardwareProfile,
    plans: &ForwardPlans,
    ws: &mut Workspace,
) -> Result<BatchEval> {
    let b = batch.len();
    let k = theta.len();
    let out_dim = spec.output_dim();
    if ws.tapes.len() < b {
        ws.tapes.resize_with(b, Tape::new);
    }
    ws.outs.clear();
    ws.seeds.clear();
    ws.seeds.resize(b * out_dim, 0.0);
    ws.losses.clear();

    for (i, s) in batch.iter().enumerate() {
        let tape = &mut ws.tapes[i];
        tape.clear();
        let out = forward(spec, theta, s.x, plans, tape)?;
        ws.outs.push(out);
        let l = sample_loss(spec.head, tape.value(out), s.label, &mut ws.seeds[i * out_dim..(i + 1) * out_dim]);
        ws.losses.push(l);
    }

    let probabilistic = spec.head != Head::Linear;
    if lambda > 0.0 && !probabilistic {
        return Err(Error::UnsupportedHead("mitigation penalty needs a probabilistic head".into()));
    }
    let penalty = if penalty_enabled && probabilistic {
        ws.deltas.clear();
        ws.delta_grads.clear();
        ws.delta_grads.resize(b * out_dim, 0.0);
        for i in 0..b {
            let z = ws.tapes[i].value(ws.outs[i]);
            let d = boundary_distance_and_grad(spec.head, z, &mut ws.delta_grads[i * out_dim..(i + 1) * out_dim])?;
            ws.deltas.push(d);
        }
        let groups: Vec<usize> = batch.iter().map(|s| s.group).collect();
        let report = penalty_from_deltas(&ws.deltas, &groups, num_groups);
        // ∂P/∂δ_i = 2(δ_{a_i} − δ_B)/n_{a_i} − (2/B) Σ_{a present} (δ_a − δ_B)
        let mut counts = vec![0usize; num_groups];
        for &g in &groups {
            counts[g] += 1;
        }
        let centered_sum: f64 = report.per_group_delta.iter().flatten().map(|d| d - report.batch_delta).sum();
        let scale = b as f64 * lambda;
        for (i, &g) in groups.iter().enumerate() {
            let own = report.per_group_delta[g].expect("sample's group is present") - report.batch_delta;
            let dp = 2.0 * own / counts[g] as f64 - 2.0 * centered_sum / b as f64;
            for j in 0..out_dim {
                ws.seeds[i * out_dim + j] += scale * dp * ws.delta_grads[i * out_dim + j];
            }
        }
        Some(report)
    } else {
        None
    };

    let mut grad = vec![0.0; k];
    if profile.is_reference_semantics() {
        for i in 0..b {
            let seed = &ws.seeds[i * out_dim..(i + 1) * out_dim];
            ws.tapes[i].backward(ws.outs[i], seed, &mut grad);
        }
    } else {
        ws.rows.clear();
        ws.rows.resize(b * k, 0.0);
        for i in 0..b {
            let seed = &ws.seeds[i * out_dim..(i + 1) * out_dim];
            ws.tapes[i].backward(ws.outs[i], seed, &mut ws.rows[i * k..(i + 1) * k]);
        }
        models::reduce_columns(&ws.rows, b, k, &profile.plan(b), &mut grad);
    }
    let inv = b as f64;
    grad.iter_mut().for_each(|g| *g /= inv);
    let loss = profile.reduce(&ws.losses) / inv;
    Ok(BatchEval { loss, penalty, grad })
}

fn hash_bytes(chunks: impl IntoIterator<Item = Vec<u8>>) -> String {
    let mut h = Sha256::new();
    for c in chunks {
        h.update(c);
    }
    hex::encode(h.finalize())
}

/// Trains with the full objective (`J + λ·penalty`).
pub fn sgd_train(model0: &Model, ds: &GroupedDataset, cfg: &TrainConfig, profile: &VirtualHardwareProfile) -> Result<TrainedModel> {
    run(model0, ds, cfg, profile, true)
}

/// Plain empirical risk minimization: identical loop with the penalty
/// machinery compiled out of the step. Requires `mitigation_lambda == 0`.
pub fn sgd_train_plain(model0: &Model, ds: &GroupedDataset, cfg: &TrainConfig, profile: &VirtualHardwareProfile) -> Result<TrainedModel> {
    if cfg.mitigation_lambda != 0.0 {
        return Err(Error::Config("plain training requires mitigation_lambda = 0".into()));
    }
    run(model0, ds, cfg, profile, false)
}

fn run(
    model0: &Model,
    ds: &GroupedDataset,
    cfg: &TrainConfig,
    profile: &VirtualHardwareProfile,
    penalty_enabled: bool,
) -> Result<TrainedModel> {
    cfg.validate()?;
    profile.validate()?;
    let spec = &model0.spec;
    if ds.is_empty() {
        return Err(Error::EmptySubset("training set is empty".into()));
    }
    if ds.dim() != spec.input_dim {
        return Err(Error::ShapeError {
            expected: spec.input_dim,
            actual: ds.dim(),
        });
    }
    if ds.num_classes() > spec.num_classes() {
        return Err(Error::SchemaError(format!(
            "dataset has {} classes, head accepts {}",
            ds.num_classes(),
            spec.num_classes()
        )));
    }
    if cfg.mitigation_lambda > 0.0 && spec.head == Head::Linear {
        return Err(Error::UnsupportedHead("mitigation penalty needs a probabilistic head".into()));
    }

    let n = ds.len();
    let num_groups = ds.num_groups();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;
    let plans = ForwardPlans::new(spec, profile);
    let mut ws = Workspace::default();
    let mut theta = model0.theta().to_vec();
    let mut velocity = vec![0.0; theta.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut order_hasher = Sha256::new();
    let mut rates = Vec::with_capacity(total_steps);
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        for &i in &order {
            order_hasher.update((i as u64).to_le_bytes());
        }

        let mut loss_sum = 0.0;
        let mut grad_norm_sum = 0.0;
        let mut penalty_sum = 0.0;
        let mut dtb_sum = vec![0.0; num_groups];
        let mut dtb_count = vec![0usize; num_groups];

        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<Sample> = chunk.iter().map(|&i| ds.sample(i)).collect();
            let eval = eval_batch(
                spec,
                &theta,
                &batch,
                num_groups,
                cfg.mitigation_lambda,
                penalty_enabled,
                profile,
                &plans,
                &mut ws,
            )?;
            let penalty = eval.penalty.as_ref().map_or(0.0, |p| p.penalty);
            let objective = eval.loss + cfg.mitigation_lambda * penalty;
            if !objective.is_finite() || objective > DIVERGENCE_LOSS {
                return Err(Error::Diverged {
                    epoch,
                    step: batch_idx,
                    loss: objective,
                });
            }
            if let Some(p) = &eval.penalty {
                for (i, s) in batch.iter().enumerate() {
                    let _ = p;
                    dtb_sum[s.group] += ws.deltas[i];
                    dtb_count[s.group] += 1;
                }
            }
            loss_sum += eval.loss;
            penalty_sum += penalty;
            grad_norm_sum += numkit::norm(&eval.grad);

            let lr = cfg.lr_schedule.rate(cfg.learning_rate, step, total_steps);
            rates.push(lr);
            for ((t, v), g) in theta.iter_mut().zip(velocity.iter_mut()).zip(&eval.grad) {
                *v = cfg.momentum * *v + (g + cfg.weight_decay * *t);
                *t -= lr * *v;
            }
            if theta.iter().any(|t| !t.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    step: batch_idx,
                    loss: f64::NAN,
                });
            }
            step += 1;
        }

        let batches = steps_per_epoch as f64;
        trace.push(EpochTrace {
            epoch,
            train_loss: loss_sum / batches,
            grad_norm: grad_norm_sum / batches,
            penalty: penalty_sum / batches,
            group_dtb: dtb_sum
                .iter()
                .zip(&dtb_count)
                .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
                .collect(),
        });
    }

    let config_hash = cfg.hash();
    let provenance = Provenance {
        profile_id: profile.id.clone(),
        config_hash: config_hash.clone(),
        init_param_hash: model0.params.hash(),
        data_hash: ds.content_hash(),
        data_order_hash: hex::encode(order_hasher.finalize()),
        schedule_hash: hash_bytes(rates.iter().map(|r| r.to_le_bytes().to_vec())),
    };
    Ok(TrainedModel {
        model: model0.with_theta(theta)?,
        profile_id: profile.id.clone(),
        init_seed: model0.init_seed,
        shuffle_seed: cfg.shuffle_seed,
        config_hash,
        trace,
        provenance,
    })
}

/// `J + λ·penalty` over a view treated as a single batch, in reference mode.
pub struct PenalizedObjective<'a> {
    pub spec: &'a models::ArchSpec,
    pub view: DatasetView<'a>,
    pub lambda: f64,
}

impl PenalizedObjective<'_> {
    fn eval(&self, theta: &[f64]) -> Result<BatchEval> {
        let reference = VirtualHardwareProfile::reference();
        let plans = ForwardPlans::new(self.spec, &reference);
        let batch: Vec<Sample> = self.view.iter().collect();
        if batch.is_empty() {
            return Err(Error::EmptySubset("empty batch".into()));
        }
        let mut ws = Workspace::default();
        eval_batch(
            self.spec,
            theta,
            &batch,
            self.view.dataset().num_groups(),
            self.lambda,
            self.spec.head != Head::Linear,
            &reference,
            &plans,
            &mut ws,
        )
    }
}

impl Objective for PenalizedObjective<'_> {
    fn dim(&self) -> usize {
        self.spec.param_count()
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        let e = self.eval(theta)?;
        Ok(e.loss + self.lambda * e.penalty.map_or(0.0, |p| p.penalty))
    }

    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval(theta)?.grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub lambda: f64,
    pub max_rel_err: f64,
    pub coordinate: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub tolerance: f64,
}

/// Largest parameter count and batch size accepted by [`penalty_gradient_check`].
pub const GRADCHECK_MAX_PARAMS: usize = 500;
pub const GRADCHECK_MAX_BATCH: usize = 64;

/// Compares the analytic gradient of `J + λ·penalty` with central differences.
///
/// Per-coordinate error is `|a − n| / max(|a|, |n|, s)` with the floor
/// `s = 1e-3 · max(‖∇J‖∞, λ‖∇penalty‖∞)`; the check passes below `1e-4`.
pub fn penalty_gradient_check(batch: &DatasetView, model: &Model, lambda: f64) -> Result<GradCheckReport> {
    const TOLERANCE: f64 = 1e-4;
    if batch.len() > GRADCHECK_MAX_BATCH {
        return Err(Error::Config(format!("gradient check batch limited to {GRADCHECK_MAX_BATCH}")));
    }
    if model.params.len() > GRADCHECK_MAX_PARAMS {
        return Err(Error::Config(format!("gradient check limited to {GRADCHECK_MAX_PARAMS} parameters")));
    }
    let theta = model.theta();
    let full = PenalizedObjective {
        spec: &model.spec,
        view: batch.clone(),
        lambda,
    };
    let plain = PenalizedObjective {
        spec: &model.spec,
        view: batch.clone(),
        lambda: 0.0,
    };
    let analytic = full.gradient(theta)?;
    let erm = plain.gradient(theta)?;
    let numeric = numkit::central_difference_gradient(&full, theta, 1e-5)?;

    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let penalty_part: Vec<f64> = analytic.iter().zip(&erm).map(|(a, e)| a - e).collect();
    let floor = 1e-3 * inf(&erm).max(inf(&penalty_part)).max(f64::MIN_POSITIVE);

    let mut report = GradCheckReport {
        lambda,
        max_rel_err: 0.0,
        coordinate: 0,
        analytic: analytic.first().copied().unwrap_or(0.0),
        numeric: numeric.first().copied().unwrap_or(0.0),
        tolerance: TOLERANCE,
    };
    for (j, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let err = (a - n).abs() / a.abs().max(n.abs()).max(floor);
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.coordinate = j;
            report.analytic = a;
            report.numeric = n;
        }
    }
    if report.max_rel_err > TOLERANCE {
        return Err(Error::GradCheckFailure {
            coordinate: report.coordinate,
            analytic: report.analytic,
            numeric: report.numeric,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, imbalance_margin_spec};
    use crate::models::{init_model, Activation, ArchSpec};

    fn bench() -> GroupedDataset {
        gen_synthetic(&imbalance_margin_spec(1)).unwrap()
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let ds = bench();
        let m0 = init_model(&ArchSpec::logistic(2), 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: f64::MIN_POSITIVE,
            epochs: 2,
            ..TrainConfig::default()
        };
        // η = 0 is rejected by validation; the smallest positive step moves nothing measurably.
        assert!(TrainConfig {
            learning_rate: 0.0,
            ..cfg.clone()
        }
        .validate()
        .is_err());
        let t = sgd_train(&m0, &ds, &cfg, &VirtualHardwareProfile::reference()).unwrap();
        for (a, b) in t.model.theta().iter().zip(m0.theta()) {
            assert!((a - b).abs() <= 1e-300);
        }
    }

    #[test]
    fn lambda_zero_matches_plain_training() {
        let ds = bench();
        let spec = ArchSpec::mlp(2, &[4], Activation::Tanh, Head::Sigmoid);
        let m0 = init_model(&spec, 5).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        for p in &crate::vhw::builtin_profiles().profiles {
            let a = sgd_train(&m0, &ds, &cfg, p).unwrap();
            let b = sgd_train_plain(&m0, &ds, &cfg, p).unwrap();
            assert_eq!(a.param_hash(), b.param_hash(), "{}", p.id);
        }
    }

    #[test]
    fn reruns_are_bit_identical() {
        let ds = bench();
        let m0 = init_model(&ArchSpec::logistic(2), 9).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            mitigation_lambda: 0.1,
            ..TrainConfig::default()
        };
        let p = crate::vhw::builtin_profiles().get("hw_perm32_s7").unwrap().clone();
        let a = sgd_train(&m0, &ds, &cfg, &p).unwrap();
        let b = sgd_train(&m0, &ds, &cfg, &p).unwrap();
        assert_eq!(a.param_hash(), b.param_hash());
        assert_eq!(a.provenance, b.provenance);
    }

    #[test]
    fn penalty_examples() {
        let same_group = mitigation_penalty(&[vec![0.2, 0.8], vec![0.5, 0.5]], &[0, 0], 2).unwrap();
        assert_eq!(same_group.penalty, 0.0);
        assert_eq!(same_group.absent_groups, vec![1]);

        let identical = mitigation_penalty(&vec![vec![0.3, 0.7]; 4], &[0, 1, 0, 1], 2).unwrap();
        assert!(identical.penalty.abs() < 1e-15);
    }

    #[test]
    fn penalty_hand_arithmetic() {
        // Binary δ = 2f(1 − f): f = 0.5 ± √0.15/... chosen so δ = 0.2 and 0.4.
        let f_for = |delta: f64| 0.5 + (0.25 - delta / 2.0).sqrt();
        let (a, b) = (f_for(0.2), f_for(0.4));
        let probs = vec![vec![1.0 - a, a], vec![1.0 - a, a], vec![1.0 - b, b], vec![1.0 - b, b]];
        let r = mitigation_penalty(&probs, &[0, 0, 1, 1], 2).unwrap();
        assert!((r.batch_delta - 0.3).abs() < 1e-12);
        assert!((r.penalty - 0.02).abs() < 1e-12);
    }

    #[test]
    fn divergence_is_reported() {
        let ds = bench();
        let m0 = init_model(&ArchSpec::linear_regression(2), 0).unwrap();
        let cfg = TrainConfig {
            learning_rate: 50.0,
            momentum: 0.0,
            epochs: 50,
            ..TrainConfig::default()
        };
        let err = sgd_train(&m0, &ds, &cfg, &VirtualHardwareProfile::reference()).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
    }

    #[test]
    fn warmup_decay_schedule() {
        let s = LrSchedule::LinearWarmupDecay { warmup_fraction: 0.1 };
        assert!((s.rate(1.0, 0, 100) - 0.1).abs() < 1e-15);
        assert!((s.rate(1.0, 9, 100) - 1.0).abs() < 1e-15);
        assert!(s.rate(1.0, 99, 100) > 0.0);
        assert!(s.rate(1.0, 50, 100) < 1.0);
    }

    #[test]
    fn gradcheck_small_cases() {
        let ds = bench();
        let view = crate::data::DatasetView::from_indices(&ds, (0..1000).step_by(40).collect());
        let spec = ArchSpec::mlp(2, &[3], Activation::Tanh, Head::Sigmoid);
        let m = init_model(&spec, 2).unwrap();
        for lambda in [0.0, 0.1, 10.0] {
            let r = penalty_gradient_check(&view, &m, lambda).unwrap();
            assert!(r.max_rel_err <= 1e-4, "{r:?}");
        }
    }
}
