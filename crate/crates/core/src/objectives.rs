//! The DPO loss family over precomputed sequence log-likelihoods.
//!
//! Every preference loss uses the label-smoothed sigmoid form
//!
//! ```text
//! loss(u) = -(1 - eps) * log σ(u) - eps * log σ(-u)
//! ```
//!
//! where `u` is a difference of implicit rewards `log π_θ(·) - log π_ref(·)`.
//! Losses are returned as [`LossTerm`]s carrying their derivative with
//! respect to each policy log-likelihood, so callers can chain them into the
//! model's backward pass. Reference log-likelihoods are constants.

use std::fmt;

use crate::error::{Error, Result};

/// The five kinds of non-preferred sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NegativeKind {
    /// Perturbed translation `Y⁻` under the clean input.
    Language,
    SpatialGlobal,
    SpatialLocal,
    TemporalGlobal,
    TemporalLocal,
}

impl NegativeKind {
    pub const ALL: [NegativeKind; 5] = [
        NegativeKind::Language,
        NegativeKind::SpatialGlobal,
        NegativeKind::SpatialLocal,
        NegativeKind::TemporalGlobal,
        NegativeKind::TemporalLocal,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            NegativeKind::Language => "language",
            NegativeKind::SpatialGlobal => "spatial_global",
            NegativeKind::SpatialLocal => "spatial_local",
            NegativeKind::TemporalGlobal => "temporal_global",
            NegativeKind::TemporalLocal => "temporal_local",
        }
    }

    pub fn is_input_level(self) -> bool {
        self != NegativeKind::Language
    }
}

impl fmt::Display for NegativeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Weights and constants of the joint objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Spatial loss weight α.
    pub alpha: f64,
    /// Temporal loss weight ρ.
    pub rho: f64,
    /// Language + LM weight λ.
    pub lambda: f64,
    /// Implicit-reward scale β.
    pub beta: f64,
    /// Label smoothing ε.
    pub label_smoothing: f64,
    /// Scale the input-level negative log-ratios by β as well.
    pub beta_on_negatives: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.4,
            rho: 0.9,
            lambda: 0.2,
            beta: 0.1,
            label_smoothing: 0.2,
            beta_on_negatives: true,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.alpha, self.rho, self.lambda, self.beta, self.label_smoothing]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.alpha < 0.0 || self.rho < 0.0 || self.lambda < 0.0 {
            return Err(Error::Config(format!(
                "loss weights must be finite and non-negative: {self:?}"
            )));
        }
        if self.beta <= 0.0 {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(0.0..0.5).contains(&self.label_smoothing) {
            return Err(Error::Config(format!(
                "label smoothing must lie in [0, 0.5), got {}",
                self.label_smoothing
            )));
        }
        Ok(())
    }
}

/// Sequence log-likelihood of one conditional under the policy and the
/// frozen reference.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LogProbPair {
    pub policy: f64,
    pub reference: f64,
}

impl LogProbPair {
    pub fn new(policy: f64, reference: f64) -> Self {
        Self { policy, reference }
    }

    /// `log π_θ - log π_ref`.
    pub fn log_ratio(&self) -> f64 {
        self.policy - self.reference
    }
}

/// Log-likelihoods of the preferred pair `(X, Y)` and of each negative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LogRatioInputs {
    pub positive: LogProbPair,
    pub negatives: [Option<LogProbPair>; 5],
}

impl LogRatioInputs {
    pub fn new(positive: LogProbPair) -> Self {
        Self {
            positive,
            negatives: [None; 5],
        }
    }

    pub fn with(mut self, kind: NegativeKind, pair: LogProbPair) -> Self {
        self.negatives[kind.index()] = Some(pair);
        self
    }

    pub fn set(&mut self, kind: NegativeKind, pair: LogProbPair) {
        self.negatives[kind.index()] = Some(pair);
    }

    pub fn negative(&self, kind: NegativeKind) -> Result<LogProbPair> {
        self.negatives[kind.index()]
            .ok_or_else(|| Error::Input(format!("missing {kind} negative")))
    }

    /// All operands finite and no log-likelihood above zero.
    pub fn validate(&self) -> Result<()> {
        let pairs = std::iter::once(self.positive).chain(self.negatives.iter().flatten().copied());
        for p in pairs {
            for v in [p.policy, p.reference] {
                if !v.is_finite() || v > 1e-9 {
                    return Err(Error::Input(format!(
                        "log-likelihood {v} is not a finite value <= 0"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A scalar loss and its gradient with respect to the policy log-likelihoods.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerm {
    pub value: f64,
    pub d_positive: f64,
    pub d_negatives: [f64; 5],
}

impl LossTerm {
    pub fn scaled(mut self, c: f64) -> Self {
        self.value *= c;
        self.d_positive *= c;
        for d in &mut self.d_negatives {
            *d *= c;
        }
        self
    }

    pub fn plus(mut self, other: &LossTerm) -> Self {
        self.value += other.value;
        self.d_positive += other.d_positive;
        for (a, b) in self.d_negatives.iter_mut().zip(&other.d_negatives) {
            *a += b;
        }
        self
    }

    pub fn d_negative(&self, kind: NegativeKind) -> f64 {
        self.d_negatives[kind.index()]
    }

    /// Mean of per-sample terms.
    pub fn mean(terms: &[LossTerm]) -> LossTerm {
        if terms.is_empty() {
            return LossTerm::default();
        }
        terms
            .iter()
            .fold(LossTerm::default(), |acc, t| acc.plus(t))
            .scaled(1.0 / terms.len() as f64)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Label-smoothed sigmoid loss and its derivative in `u`.
pub fn smoothed_sigmoid_loss(u: f64, eps: f64) -> (f64, f64) {
    // -log σ(u) = softplus(-u)
    let value = (1.0 - eps) * softplus(-u) + eps * softplus(u);
    let grad = sigmoid(u) - (1.0 - eps);
    (value, grad)
}

fn check_eps(eps: f64) -> Result<()> {
    if (0.0..0.5).contains(&eps) {
        Ok(())
    } else {
        Err(Error::Config(format!("label smoothing must lie in [0, 0.5), got {eps}")))
    }
}

/// Output-level DPO against the language negative `Y⁻`:
/// `u = β·[ratio(Y|X) − ratio(Y⁻|X)]`.
pub fn dpo_output_loss(inputs: &LogRatioInputs, beta: f64, eps: f64) -> Result<LossTerm> {
    check_eps(eps)?;
    let neg = inputs.negative(NegativeKind::Language)?;
    let u = beta * (inputs.positive.log_ratio() - neg.log_ratio());
    let (value, du) = smoothed_sigmoid_loss(u, eps);
    let mut term = LossTerm {
        value,
        d_positive: du * beta,
        ..Default::default()
    };
    term.d_negatives[NegativeKind::Language.index()] = -du * beta;
    Ok(term)
}

/// Alias of [`dpo_output_loss`] for the generated language negative.
pub fn language_loss(inputs: &LogRatioInputs, beta: f64, eps: f64) -> Result<LossTerm> {
    dpo_output_loss(inputs, beta, eps)
}

/// Input-conditioned DPO: contrasts `Y|X` with `Y|X⁻` for an input-level
/// negative. The negative ratio is scaled by β only when `beta_on_negatives`.
pub fn dpo_input_loss(
    inputs: &LogRatioInputs,
    kind: NegativeKind,
    beta: f64,
    eps: f64,
    beta_on_negatives: bool,
) -> Result<LossTerm> {
    check_eps(eps)?;
    if !kind.is_input_level() {
        return Err(Error::Input(format!("{kind} is not an input-level negative")));
    }
    let neg = inputs.negative(kind)?;
    let neg_scale = if beta_on_negatives { beta } else { 1.0 };
    let u = beta * inputs.positive.log_ratio() - neg_scale * neg.log_ratio();
    let (value, du) = smoothed_sigmoid_loss(u, eps);
    let mut term = LossTerm {
        value,
        d_positive: du * beta,
        ..Default::default()
    };
    term.d_negatives[kind.index()] = -du * neg_scale;
    Ok(term)
}

/// Mean of the global and local input-conditioned spatial losses.
pub fn spatial_loss(
    inputs: &LogRatioInputs,
    beta: f64,
    eps: f64,
    beta_on_negatives: bool,
) -> Result<LossTerm> {
    let g = dpo_input_loss(inputs, NegativeKind::SpatialGlobal, beta, eps, beta_on_negatives)?;
    let l = dpo_input_loss(inputs, NegativeKind::SpatialLocal, beta, eps, beta_on_negatives)?;
    Ok(g.plus(&l).scaled(0.5))
}

/// Temporal loss: one sigmoid over
/// `β·ratio(Y|X) − ½·c·[ratio(Y|X⁻_g) + ratio(Y|X⁻_l)]`, with `c = β` when
/// `beta_on_negatives`, else 1.
pub fn temporal_combo_loss(
    inputs: &LogRatioInputs,
    beta: f64,
    eps: f64,
    beta_on_negatives: bool,
) -> Result<LossTerm> {
    check_eps(eps)?;
    let g = inputs.negative(NegativeKind::TemporalGlobal)?;
    let l = inputs.negative(NegativeKind::TemporalLocal)?;
    let c = if beta_on_negatives { beta } else { 1.0 };
    let u = beta * inputs.positive.log_ratio() - 0.5 * c * (g.log_ratio() + l.log_ratio());
    let (value, du) = smoothed_sigmoid_loss(u, eps);
    let mut term = LossTerm {
        value,
        d_positive: du * beta,
        ..Default::default()
    };
    term.d_negatives[NegativeKind::TemporalGlobal.index()] = -0.5 * c * du;
    term.d_negatives[NegativeKind::TemporalLocal.index()] = -0.5 * c * du;
    Ok(term)
}

/// Cross-entropy on the preferred translation, `−log π_θ(Y|X)`.
pub fn lm_loss(positive_log_likelihood: f64) -> LossTerm {
    LossTerm {
        value: -positive_log_likelihood,
        d_positive: -1.0,
        ..Default::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Global,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Spatial,
    Temporal,
}

/// Ablation form keeping only one granularity branch of a level.
pub fn single_stream_loss(
    inputs: &LogRatioInputs,
    branch: Branch,
    level: Level,
    beta: f64,
    eps: f64,
    beta_on_negatives: bool,
) -> Result<LossTerm> {
    let kind = match (level, branch) {
        (Level::Spatial, Branch::Global) => NegativeKind::SpatialGlobal,
        (Level::Spatial, Branch::Local) => NegativeKind::SpatialLocal,
        (Level::Temporal, Branch::Global) => NegativeKind::TemporalGlobal,
        (Level::Temporal, Branch::Local) => NegativeKind::TemporalLocal,
    };
    dpo_input_loss(inputs, kind, beta, eps, beta_on_negatives)
}

/// Which granularity branches of a level take part in the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branches {
    Both,
    Only(Branch),
}

/// Component selection of the joint objective. The default is the full
/// multi-level objective; ablations switch parts off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjectivePlan {
    pub spatial: Option<Branches>,
    pub temporal: Option<Branches>,
    pub language: bool,
    pub lm: bool,
}

impl Default for ObjectivePlan {
    fn default() -> Self {
        Self {
            spatial: Some(Branches::Both),
            temporal: Some(Branches::Both),
            language: true,
            lm: true,
        }
    }
}

impl ObjectivePlan {
    /// Negative kinds the plan needs log-likelihoods for.
    pub fn required_negatives(&self) -> Vec<NegativeKind> {
        let mut out = Vec::new();
        if self.language {
            out.push(NegativeKind::Language);
        }
        let pick = |b: Option<Branches>, g: NegativeKind, l: NegativeKind, out: &mut Vec<_>| match b {
            None => {}
            Some(Branches::Both) => out.extend([g, l]),
            Some(Branches::Only(Branch::Global)) => out.push(g),
            Some(Branches::Only(Branch::Local)) => out.push(l),
        };
        pick(self.spatial, NegativeKind::SpatialGlobal, NegativeKind::SpatialLocal, &mut out);
        pick(self.temporal, NegativeKind::TemporalGlobal, NegativeKind::TemporalLocal, &mut out);
        out.sort();
        out
    }
}

/// Per-component values of one joint-loss evaluation. Disabled components
/// are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub spatial: Option<f64>,
    pub temporal: Option<f64>,
    pub language: Option<f64>,
    pub lm: Option<f64>,
    pub joint: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLoss {
    pub term: LossTerm,
    pub report: LossReport,
}

/// `α·L_s + ρ·L_t + λ·½(L_l + L_LM)` with every component enabled.
pub fn joint_loss(inputs: &LogRatioInputs, weights: &LossWeights) -> Result<JointLoss> {
    joint_loss_with(inputs, weights, &ObjectivePlan::default())
}

/// Joint objective restricted to the components selected by `plan`. The LM
/// term reads the preferred pair's policy log-likelihood from `inputs`.
pub fn joint_loss_with(
    inputs: &LogRatioInputs,
    weights: &LossWeights,
    plan: &ObjectivePlan,
) -> Result<JointLoss> {
    weights.validate()?;
    inputs.validate()?;
    let (b, e, bn) = (weights.beta, weights.label_smoothing, weights.beta_on_negatives);
    let mut total = LossTerm::default();
    let mut report = LossReport::default();

    if let Some(branches) = plan.spatial {
        let t = match branches {
            Branches::Both => spatial_loss(inputs, b, e, bn)?,
            Branches::Only(br) => single_stream_loss(inputs, br, Level::Spatial, b, e, bn)?,
        };
        report.spatial = Some(t.value);
        total = total.plus(&t.scaled(weights.alpha));
    }
    if let Some(branches) = plan.temporal {
        let t = match branches {
            Branches::Both => temporal_combo_loss(inputs, b, e, bn)?,
            Branches::Only(br) => single_stream_loss(inputs, br, Level::Temporal, b, e, bn)?,
        };
        report.temporal = Some(t.value);
        total = total.plus(&t.scaled(weights.rho));
    }
    if plan.language {
        let t = language_loss(inputs, b, e)?;
        report.language = Some(t.value);
        total = total.plus(&t.scaled(0.5 * weights.lambda));
    }
    if plan.lm {
        let t = lm_loss(inputs.positive.policy);
        report.lm = Some(t.value);
        total = total.plus(&t.scaled(0.5 * weights.lambda));
    }
    report.joint = total.value;
    Ok(JointLoss { term: total, report })
}

/// Implicit-reward margin `β·[ratio(Y|X) − ratio(negative)]` for logging.
pub fn reward_margin(inputs: &LogRatioInputs, kind: NegativeKind, beta: f64) -> Option<f64> {
    inputs.negatives[kind.index()]
        .map(|neg| beta * (inputs.positive.log_ratio() - neg.log_ratio()))
}
