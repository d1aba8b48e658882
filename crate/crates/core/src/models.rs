//! Model zoo: logistic regression and multilayer perceptrons with a sigmoid
//! (binary cross-entropy), softmax (multiclass cross-entropy) or linear
//! (squared error) head.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::DatasetView;
use crate::error::{Error, Result};
use crate::numkit::{self, clamp_prob, sigmoid, EvalMode, Layout, Objective, ParamVector, Tape, Var, PROB_CLAMP};
use crate::vhw::{ReductionPlan, VirtualHardwareProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub width: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    /// One logit, `f = σ(z)`, binary cross-entropy.
    Sigmoid,
    /// `classes` logits, softmax, multiclass cross-entropy.
    Softmax { classes: usize },
    /// One real output, loss `½(z − y)²` against the label id.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchSpec {
    pub input_dim: usize,
    #[serde(default)]
    pub hidden: Vec<HiddenLayer>,
    pub head: Head,
}

impl ArchSpec {
    pub fn logistic(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: Vec::new(),
            head: Head::Sigmoid,
        }
    }

    pub fn linear_regression(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: Vec::new(),
            head: Head::Linear,
        }
    }

    pub fn mlp(input_dim: usize, widths: &[usize], activation: Activation, head: Head) -> Self {
        Self {
            input_dim,
            hidden: widths
                .iter()
                .map(|&width| HiddenLayer { width, activation })
                .collect(),
            head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be positive".into()));
        }
        if self.hidden.iter().any(|h| h.width == 0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if let Head::Softmax { classes } = self.head {
            if classes < 2 {
                return Err(Error::Config("softmax head needs at least two classes".into()));
            }
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        match self.head {
            Head::Softmax { classes } => classes,
            Head::Sigmoid | Head::Linear => 1,
        }
    }

    /// Label arity the head accepts.
    pub fn num_classes(&self) -> usize {
        match self.head {
            Head::Softmax { classes } => classes,
            Head::Sigmoid | Head::Linear => 2,
        }
    }

    /// `(fan_in, fan_out)` for every dense layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(self.hidden.iter().map(|h| h.width));
        dims.push(self.output_dim());
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn layout(&self) -> Layout {
        let mut b = Layout::builder();
        for (i, (fan_in, fan_out)) in self.layer_shapes().into_iter().enumerate() {
            b = b
                .push(format!("layer{i}.weight"), fan_out, fan_in)
                .push(format!("layer{i}.bias"), fan_out, 1);
        }
        b.build()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| (i + 1) * o).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ArchSpec,
    pub params: ParamVector,
    pub init_seed: Option<u64>,
}

impl Model {
    pub fn from_params(spec: ArchSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        let params = ParamVector::new(values, Arc::new(spec.layout()))?;
        if !params.is_finite() {
            return Err(Error::NumericalOverflow {
                layer: "parameters".into(),
            });
        }
        Ok(Self {
            spec,
            params,
            init_seed: None,
        })
    }

    pub fn zeros(spec: ArchSpec) -> Result<Self> {
        let k = spec.param_count();
        Self::from_params(spec, vec![0.0; k])
    }

    pub fn theta(&self) -> &[f64] {
        self.params.as_slice()
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        let mut m = Self::from_params(self.spec.clone(), theta)?;
        m.init_seed = self.init_seed;
        Ok(m)
    }
}

/// Glorot-uniform weights `U(±√(6/(fan_in+fan_out)))`, zero biases.
pub fn init_model(spec: &ArchSpec, seed: u64) -> Result<Model> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(spec.param_count());
    for (fan_in, fan_out) in spec.layer_shapes() {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        values.extend((0..fan_in * fan_out).map(|_| dist.sample(&mut rng)));
        values.extend(std::iter::repeat_n(0.0, fan_out));
    }
    let mut m = Model::from_params(spec.clone(), values)?;
    m.init_seed = Some(seed);
    Ok(m)
}

/// One reduction plan per dense layer, sized to that layer's fan-in.
pub struct ForwardPlans<'p> {
    plans: Vec<ReductionPlan<'p>>,
}

impl<'p> ForwardPlans<'p> {
    pub fn new(spec: &ArchSpec, profile: &'p VirtualHardwareProfile) -> Self {
        Self {
            plans: spec
                .layer_shapes()
                .iter()
                .map(|&(fan_in, _)| profile.plan(fan_in))
                .collect(),
        }
    }
}

/// Records the forward pass of `spec` at `theta` on `x` and returns the logits.
pub fn forward(spec: &ArchSpec, theta: &[f64], x: &[f64], plans: &ForwardPlans, tape: &mut Tape) -> Result<Var> {
    if x.len() != spec.input_dim {
        return Err(Error::ShapeError {
            expected: spec.input_dim,
            actual: x.len(),
        });
    }
    let mut h = tape.input(x);
    let mut offset = 0;
    let last = spec.hidden.len();
    for (i, (fan_in, fan_out)) in spec.layer_shapes().into_iter().enumerate() {
        let w = tape.param(theta, offset, fan_in * fan_out);
        offset += fan_in * fan_out;
        let b = tape.param(theta, offset, fan_out);
        offset += fan_out;
        let z = tape.matvec(w, h, fan_out, fan_in, &plans.plans[i]);
        h = tape.add(z, b);
        if i < last {
            h = match spec.hidden[i].activation {
                Activation::Tanh => tape.tanh(h),
                Activation::Relu => tape.relu(h),
            };
        }
        if tape.value(h).iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalOverflow {
                layer: format!("layer{i}"),
            });
        }
    }
    Ok(h)
}

/// Class probabilities from logits. Sigmoid heads yield `(1 − f, f)`.
pub fn probabilities(head: Head, logits: &[f64]) -> Vec<f64> {
    match head {
        Head::Sigmoid => vec![sigmoid(-logits[0]), sigmoid(logits[0])],
        Head::Softmax { .. } => softmax(logits),
        Head::Linear => {
            let f = logits[0].clamp(0.0, 1.0);
            vec![1.0 - f, f]
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Per-sample loss and its derivative with respect to the logits.
///
/// Cross-entropy uses `−ln clamp(p_y)`; where the clamp is active the
/// derivative is zero, matching the clamped function.
pub fn sample_loss(head: Head, logits: &[f64], label: usize, dlogits: &mut [f64]) -> f64 {
    match head {
        Head::Sigmoid => {
            let z = logits[0];
            let p_y = if label == 1 { sigmoid(z) } else { sigmoid(-z) };
            let inside = p_y > PROB_CLAMP && p_y < 1.0 - PROB_CLAMP;
            dlogits[0] = if inside { sigmoid(z) - label as f64 } else { 0.0 };
            -clamp_prob(p_y).ln()
        }
        Head::Softmax { .. } => {
            let p = softmax(logits);
            let p_y = p[label];
            let inside = p_y > PROB_CLAMP && p_y < 1.0 - PROB_CLAMP;
            for (j, d) in dlogits.iter_mut().enumerate() {
                *d = if inside {
                    p[j] - if j == label { 1.0 } else { 0.0 }
                } else {
                    0.0
                };
            }
            -clamp_prob(p_y).ln()
        }
        Head::Linear => {
            let r = logits[0] - label as f64;
            dlogits[0] = r;
            0.5 * r * r
        }
    }
}

pub fn predicted_class(head: Head, logits: &[f64]) -> usize {
    match head {
        Head::Sigmoid => usize::from(logits[0] >= 0.0),
        Head::Linear => usize::from(logits[0] >= 0.5),
        Head::Softmax { .. } => logits
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (j, &z)| if z > best.1 { (j, z) } else { best })
            .0,
    }
}

/// `δ = 1 − Σ p²` and its gradient with respect to the logits.
pub fn boundary_distance_and_grad(head: Head, logits: &[f64], dlogits: &mut [f64]) -> Result<f64> {
    match head {
        Head::Sigmoid => {
            let f = sigmoid(logits[0]);
            let g = sigmoid(-logits[0]);
            dlogits[0] = 2.0 * (g - f) * f * g;
            Ok(2.0 * f * g)
        }
        Head::Softmax { .. } => {
            let p = softmax(logits);
            let sq: f64 = p.iter().map(|v| v * v).sum();
            for (d, pj) in dlogits.iter_mut().zip(&p) {
                *d = -2.0 * pj * (pj - sq);
            }
            Ok(1.0 - sq)
        }
        Head::Linear => Err(Error::UnsupportedHead(
            "boundary distance needs a probabilistic head".into(),
        )),
    }
}

fn check_view(spec: &ArchSpec, view: &DatasetView) -> Result<()> {
    if view.is_empty() {
        return Err(Error::EmptySubset("dataset view is empty".into()));
    }
    let ds = view.dataset();
    if ds.dim() != spec.input_dim {
        return Err(Error::ShapeError {
            expected: spec.input_dim,
            actual: ds.dim(),
        });
    }
    if let Some(s) = view.iter().find(|s| s.label >= spec.num_classes()) {
        return Err(Error::SchemaError(format!(
            "label {} at row {} exceeds head arity {}",
            s.label,
            s.index,
            spec.num_classes()
        )));
    }
    Ok(())
}

/// Mean loss over `view`, per-sample losses summed under the mode's profile.
pub fn loss_at(spec: &ArchSpec, theta: &[f64], view: &DatasetView, mode: EvalMode) -> Result<f64> {
    check_view(spec, view)?;
    let profile = mode.profile();
    let plans = ForwardPlans::new(spec, profile);
    let mut tape = Tape::new();
    let mut dl = vec![0.0; spec.output_dim()];
    let mut losses = Vec::with_capacity(view.len());
    for s in view.iter() {
        tape.clear();
        let out = forward(spec, theta, s.x, &plans, &mut tape)?;
        losses.push(sample_loss(spec.head, tape.value(out), s.label, &mut dl));
    }
    Ok(profile.reduce(&losses) / view.len() as f64)
}

/// Mean gradient over `view`: reverse-mode per sample, then each coordinate
/// reduced across samples under the mode's profile.
pub fn gradient_at(spec: &ArchSpec, theta: &[f64], view: &DatasetView, mode: EvalMode) -> Result<Vec<f64>> {
    check_view(spec, view)?;
    let profile = mode.profile();
    let plans = ForwardPlans::new(spec, profile);
    let k = theta.len();
    let n = view.len();
    let mut tape = Tape::new();
    let mut dl = vec![0.0; spec.output_dim()];
    let mut total = vec![0.0; k];
    if profile.is_reference_semantics() {
        // Accumulating straight into `total` is the sequential binary64 sum.
        for s in view.iter() {
            tape.clear();
            let out = forward(spec, theta, s.x, &plans, &mut tape)?;
            sample_loss(spec.head, tape.value(out), s.label, &mut dl);
            tape.backward(out, &dl, &mut total);
        }
    } else {
        let mut rows = vec![0.0; n * k];
        for (i, s) in view.iter().enumerate() {
            tape.clear();
            let out = forward(spec, theta, s.x, &plans, &mut tape)?;
            sample_loss(spec.head, tape.value(out), s.label, &mut dl);
            tape.backward(out, &dl, &mut rows[i * k..(i + 1) * k]);
        }
        reduce_columns(&rows, n, k, &profile.plan(n), &mut total);
    }
    let inv = n as f64;
    total.iter_mut().for_each(|g| *g /= inv);
    if total.iter().any(|g| !g.is_finite()) {
        return Err(Error::NumericalOverflow {
            layer: "gradient".into(),
        });
    }
    Ok(total)
}

/// Column sums of a row-major `n × k` block under `plan`.
pub fn reduce_columns(rows: &[f64], n: usize, k: usize, plan: &ReductionPlan, out: &mut [f64]) {
    let mut column = vec![0.0; n];
    for (j, o) in out.iter_mut().enumerate().take(k) {
        for (i, c) in column.iter_mut().enumerate() {
            *c = rows[i * k + j];
        }
        *o = plan.reduce(&column);
    }
}

pub fn loss(model: &Model, view: &DatasetView, mode: EvalMode) -> Result<f64> {
    loss_at(&model.spec, model.theta(), view, mode)
}

pub fn gradient(model: &Model, view: &DatasetView, mode: EvalMode) -> Result<ParamVector> {
    let g = gradient_at(&model.spec, model.theta(), view, mode)?;
    ParamVector::new(g, model.params.layout().clone())
}

/// Clamped class probabilities for one input.
pub fn predict_proba(model: &Model, x: &[f64], mode: EvalMode) -> Result<Vec<f64>> {
    if model.spec.head == Head::Linear {
        return Err(Error::UnsupportedHead("linear head has no probabilities".into()));
    }
    let plans = ForwardPlans::new(&model.spec, mode.profile());
    let mut tape = Tape::new();
    let out = forward(&model.spec, model.theta(), x, &plans, &mut tape)?;
    let p = probabilities(model.spec.head, tape.value(out));
    Ok(match model.spec.head {
        Head::Sigmoid => vec![clamp_prob(p[1])],
        _ => p.into_iter().map(clamp_prob).collect(),
    })
}

pub fn logits(model: &Model, x: &[f64], mode: EvalMode) -> Result<Vec<f64>> {
    let plans = ForwardPlans::new(&model.spec, mode.profile());
    let mut tape = Tape::new();
    let out = forward(&model.spec, model.theta(), x, &plans, &mut tape)?;
    Ok(tape.value(out).to_vec())
}

/// Fraction of correctly classified samples in reference mode.
pub fn accuracy(model: &Model, view: &DatasetView) -> Result<f64> {
    check_view(&model.spec, view)?;
    let reference = VirtualHardwareProfile::reference();
    let plans = ForwardPlans::new(&model.spec, &reference);
    let mut tape = Tape::new();
    let mut correct = 0usize;
    for s in view.iter() {
        tape.clear();
        let out = forward(&model.spec, model.theta(), s.x, &plans, &mut tape)?;
        if predicted_class(model.spec.head, tape.value(out)) == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / view.len() as f64)
}

/// Empirical risk of an architecture over a dataset view, as a function of θ.
pub struct ModelObjective<'a> {
    pub spec: &'a ArchSpec,
    pub view: DatasetView<'a>,
}

impl<'a> ModelObjective<'a> {
    pub fn new(spec: &'a ArchSpec, view: DatasetView<'a>) -> Self {
        Self { spec, view }
    }
}

impl Objective for ModelObjective<'_> {
    fn dim(&self) -> usize {
        self.spec.param_count()
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        loss_at(self.spec, theta, &self.view, EvalMode::Reference)
    }

    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        gradient_at(self.spec, theta, &self.view, EvalMode::Reference)
    }
}

/// The scalar network output (pre-activation logit) at a fixed input, as a
/// function of θ. Only single-output heads qualify.
pub struct LogitObjective<'a> {
    pub spec: &'a ArchSpec,
    pub x: &'a [f64],
}

impl<'a> LogitObjective<'a> {
    pub fn new(spec: &'a ArchSpec, x: &'a [f64]) -> Result<Self> {
        if spec.output_dim() != 1 {
            return Err(Error::UnsupportedHead("logit objective needs a scalar output".into()));
        }
        Ok(Self { spec, x })
    }
}

impl Objective for LogitObjective<'_> {
    fn dim(&self) -> usize {
        self.spec.param_count()
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        let reference = VirtualHardwareProfile::reference();
        let plans = ForwardPlans::new(self.spec, &reference);
        let mut tape = Tape::new();
        let out = forward(self.spec, theta, self.x, &plans, &mut tape)?;
        Ok(tape.value(out)[0])
    }

    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let reference = VirtualHardwareProfile::reference();
        let plans = ForwardPlans::new(self.spec, &reference);
        let mut tape = Tape::new();
        let out = forward(self.spec, theta, self.x, &plans, &mut tape)?;
        let mut g = vec![0.0; theta.len()];
        tape.backward(out, &[1.0], &mut g);
        Ok(g)
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"HWFCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub spec: ArchSpec,
    pub seed: Option<u64>,
    pub profile_id: String,
    pub config_hash: String,
    pub param_count: usize,
    pub param_hash: String,
}

/// Layout: 8-byte magic, little-endian u64 header length, JSON header,
/// then `param_count` little-endian binary64 values.
pub fn write_checkpoint(path: impl AsRef<Path>, model: &Model, profile_id: &str, config_hash: &str) -> Result<CheckpointHeader> {
    let header = CheckpointHeader {
        spec: model.spec.clone(),
        seed: model.init_seed,
        profile_id: profile_id.to_string(),
        config_hash: config_hash.to_string(),
        param_count: model.params.len(),
        param_hash: model.params.hash(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(CHECKPOINT_MAGIC)?;
    f.write_all(&(json.len() as u64).to_le_bytes())?;
    f.write_all(&json)?;
    f.write_all(&model.params.to_le_bytes())?;
    f.flush()?;
    Ok(header)
}

/// Reads a checkpoint and verifies the stored parameter hash.
pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(Model, CheckpointHeader)> {
    let path = path.as_ref();
    let fail = |message: String| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(fail("bad magic".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| fail("truncated header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    let payload = &bytes[16 + hlen..];
    if payload.len() != header.param_count * 8 {
        return Err(fail(format!(
            "expected {} parameter bytes, found {}",
            header.param_count * 8,
            payload.len()
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if numkit::hash_f64s(&values) != header.param_hash {
        return Err(fail("parameter hash mismatch".into()));
    }
    let mut model = Model::from_params(header.spec.clone(), values)?;
    model.init_seed = header.seed;
    Ok((model, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::GroupedDataset;

    #[test]
    fn layout_is_weights_then_bias() {
        let spec = ArchSpec::mlp(3, &[4], Activation::Tanh, Head::Softmax { classes: 2 });
        let l = spec.layout();
        let names: Vec<&str> = l.slots().iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["layer0.weight", "layer0.bias", "layer1.weight", "layer1.bias"]);
        assert_eq!(spec.param_count(), 3 * 4 + 4 + 4 * 2 + 2);
        assert_eq!(l.param_count(), spec.param_count());
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let spec = ArchSpec::mlp(64, &[64], Activation::Tanh, Head::Sigmoid);
        let a = init_model(&spec, 7).unwrap();
        let b = init_model(&spec, 7).unwrap();
        assert_eq!(a.params.hash(), b.params.hash());
        let w = a.params.block("layer0.weight").unwrap();
        let bound = (6.0f64 / 128.0).sqrt();
        assert!(w.iter().all(|v| v.abs() <= bound));
        assert!(w.iter().any(|v| v.abs() > 0.5 * bound));
        for slot in a.params.layout().slots().iter().filter(|s| s.name.ends_with("bias")) {
            assert!(a.theta()[slot.range()].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_models_predict_uniform() {
        let m = Model::zeros(ArchSpec::logistic(2)).unwrap();
        assert_eq!(predict_proba(&m, &[3.0, -1.0], EvalMode::Reference).unwrap(), vec![0.5]);
        let m = Model::zeros(ArchSpec::mlp(2, &[], Activation::Tanh, Head::Softmax { classes: 4 })).unwrap();
        let p = predict_proba(&m, &[3.0, -1.0], EvalMode::Reference).unwrap();
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn uniform_softmax_loss_is_ln_k() {
        let ds = GroupedDataset::new(
            1,
            vec![0.3, -0.1, 2.0],
            vec![0, 0, 0],
            vec![0, 3, 2],
            vec!["a".into()],
            (0..4).map(|i| i.to_string()).collect(),
        )
        .unwrap();
        let m = Model::zeros(ArchSpec::mlp(1, &[], Activation::Tanh, Head::Softmax { classes: 4 })).unwrap();
        let l = loss(&m, &ds.view(), EvalMode::Reference).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_binary_loss() {
        // Logits chosen so that f = (0.9, 0.8, 0.6), labels (1, 1, 0).
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let ds = GroupedDataset::new(
            1,
            vec![logit(0.9), logit(0.8), logit(0.6)],
            vec![0, 0, 0],
            vec![1, 1, 0],
            vec!["a".into()],
            vec!["0".into(), "1".into()],
        )
        .unwrap();
        let m = Model::from_params(ArchSpec::logistic(1), vec![1.0, 0.0]).unwrap();
        let expected = (-(0.9f64).ln() - (0.8f64).ln() - (0.4f64).ln()) / 3.0;
        let l = loss(&m, &ds.view(), EvalMode::Reference).unwrap();
        assert!((l - expected).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_predictions_have_near_zero_loss() {
        let ds = GroupedDataset::new(
            1,
            vec![1.0, -1.0],
            vec![0, 0],
            vec![1, 0],
            vec!["a".into()],
            vec!["0".into(), "1".into()],
        )
        .unwrap();
        let m = Model::from_params(ArchSpec::logistic(1), vec![100.0, 0.0]).unwrap();
        let l = loss(&m, &ds.view(), EvalMode::Reference).unwrap();
        assert!(l <= 2.0 * PROB_CLAMP);
    }

    #[test]
    fn logistic_single_sample_gradient() {
        let ds = GroupedDataset::new(
            2,
            vec![1.0, 0.0],
            vec![0],
            vec![1],
            vec!["a".into()],
            vec!["0".into(), "1".into()],
        )
        .unwrap();
        let m = Model::zeros(ArchSpec::logistic(2)).unwrap();
        let g = gradient(&m, &ds.view(), EvalMode::Reference).unwrap();
        assert_eq!(g.as_slice(), &[-0.5, 0.0, -0.5]);
    }

    #[test]
    fn label_out_of_range_is_schema_error() {
        let ds = GroupedDataset::new(
            1,
            vec![0.0],
            vec![0],
            vec![2],
            vec!["a".into()],
            vec!["0".into(), "1".into(), "2".into()],
        )
        .unwrap();
        let m = Model::zeros(ArchSpec::logistic(1)).unwrap();
        assert!(matches!(loss(&m, &ds.view(), EvalMode::Reference), Err(Error::SchemaError(_))));
    }

    #[test]
    fn overflow_names_the_layer() {
        let m = Model::from_params(ArchSpec::logistic(1), vec![1e308, 0.0]).unwrap();
        let err = logits(&m, &[10.0], EvalMode::Reference).unwrap_err();
        assert!(matches!(err, Error::NumericalOverflow { ref layer } if layer == "layer0"));
    }

    #[test]
    fn boundary_distance_gradient_matches_difference() {
        for head in [Head::Sigmoid, Head::Softmax { classes: 3 }] {
            let z: Vec<f64> = match head {
                Head::Sigmoid => vec![0.7],
                _ => vec![0.2, -0.4, 1.1],
            };
            let mut d = vec![0.0; z.len()];
            boundary_distance_and_grad(head, &z, &mut d).unwrap();
            for j in 0..z.len() {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[j] += 1e-6;
                zm[j] -= 1e-6;
                let mut scratch = vec![0.0; z.len()];
                let fp = boundary_distance_and_grad(head, &zp, &mut scratch).unwrap();
                let fm = boundary_distance_and_grad(head, &zm, &mut scratch).unwrap();
                assert!(((fp - fm) / 2e-6 - d[j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_and_tamper() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let spec = ArchSpec::mlp(2, &[3], Activation::Tanh, Head::Sigmoid);
        let m = init_model(&spec, 4).unwrap();
        write_checkpoint(&path, &m, "hw_ref", "abc").unwrap();
        let (back, header) = read_checkpoint(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(header.profile_id, "hw_ref");

        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 3;
        bytes[last] ^= 0x01;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Checkpoint { .. })));
    }
}
