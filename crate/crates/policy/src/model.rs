//! The policy network and its frozen reference copy.
//!
//! Encoder: each body part runs its own block (per-joint projection, learned
//! joint mixing initialised from the part's skeleton graph, flatten, residual
//! temporal convolutions). Part features are concatenated, projected to the
//! model width and given sinusoidal positions. `P` learned
//! prefix vectors are prepended to form the decoder memory.
//!
//! Decoder: pre-norm blocks of causal self-attention, cross-attention over the
//! memory, and a ReLU feed-forward layer, followed by a zero-initialised
//! output head.

use std::collections::HashMap;

use rand::Rng;
use signdpo_core::saliency::AttentionStack;
use signdpo_core::skeleton::{split_parts, BodyPart, SkeletonSequence, NUM_KEYPOINTS};
use signdpo_core::vocab::BOS;
use signdpo_core::TokenSequence;

use crate::config::ModelConfig;
use crate::error::{PolicyError, Result};
use crate::tape::{Tape, Var};

const INIT_RANGE: f64 = 0.05;
const INPUT_SCALE: f64 = 4.0;
/// Fixed per-joint input centre, in part-local joint order.
pub const INPUT_CENTRE: &str = "enc.input_centre";

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    Uniform,
    /// Uniform in `±sqrt(3 / fan_in)`, unit output variance for unit input.
    FanIn,
    Zeros,
    Ones,
    Adjacency(BodyPart),
    /// Fixed input centre: `0.5` for coordinates, `0` for confidence.
    InputCentre,
}

/// A named `rows × cols` slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamView {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    /// Belongs to the skeleton encoder (frozen by `freeze_encoder`).
    pub encoder: bool,
    /// Subject to decoupled weight decay.
    pub decay: bool,
    /// Updated by the optimizer. Fixed buffers (input statistics) are not.
    pub trainable: bool,
    init: Init,
}

impl ParamView {
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

#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    views: Vec<ParamView>,
    index: HashMap<String, usize>,
    total: usize,
}

impl ParamLayout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let mut layout = Self {
            views: Vec::new(),
            index: HashMap::new(),
            total: 0,
        };
        let (c, pd, d, v, f) = (
            cfg.joint_channels,
            cfg.part_dim,
            cfg.model_dim,
            cfg.vocab_size,
            cfg.ffn_dim,
        );
        layout.add(INPUT_CENTRE, NUM_KEYPOINTS, 3, true, Init::InputCentre);
        for part in BodyPart::ALL {
            let n = joints_of(part);
            let p = format!("enc.{}", part.name());
            layout.add(&format!("{p}.joint_w"), 3, c, true, Init::FanIn);
            layout.add(&format!("{p}.joint_b"), 1, c, true, Init::Zeros);
            layout.add(&format!("{p}.mix"), n, n, true, Init::Adjacency(part));
            layout.add(&format!("{p}.flat_w"), n * c, pd, true, Init::FanIn);
            layout.add(&format!("{p}.flat_b"), 1, pd, true, Init::Zeros);
            for l in 0..cfg.encoder_layers {
                for tap in ["prev", "mid", "next"] {
                    layout.add(&format!("{p}.conv{l}.w_{tap}"), pd, pd, true, Init::FanIn);
                }
                layout.add(&format!("{p}.conv{l}.b"), 1, pd, true, Init::Zeros);
            }
        }
        layout.add("enc.pose_w", 4 * pd, d, true, Init::FanIn);
        layout.add("enc.pose_b", 1, d, true, Init::Zeros);
        layout.add("prefix", cfg.prefix_len, d, false, Init::Uniform);
        layout.add("dec.tok_emb", v, d, false, Init::Uniform);
        for l in 0..cfg.decoder_layers {
            let p = format!("dec{l}");
            for ln in ["ln_self", "ln_cross", "ln_ffn"] {
                layout.add(&format!("{p}.{ln}_g"), 1, d, false, Init::Ones);
                layout.add(&format!("{p}.{ln}_b"), 1, d, false, Init::Zeros);
            }
            for kind in ["self", "cross"] {
                for m in ["q", "k", "v", "o"] {
                    layout.add(&format!("{p}.{kind}_{m}"), d, d, false, Init::FanIn);
                }
                layout.add(&format!("{p}.{kind}_ob"), 1, d, false, Init::Zeros);
            }
            layout.add(&format!("{p}.ffn_w1"), d, f, false, Init::FanIn);
            layout.add(&format!("{p}.ffn_b1"), 1, f, false, Init::Zeros);
            layout.add(&format!("{p}.ffn_w2"), f, d, false, Init::FanIn);
            layout.add(&format!("{p}.ffn_b2"), 1, d, false, Init::Zeros);
        }
        layout.add("dec.ln_f_g", 1, d, false, Init::Ones);
        layout.add("dec.ln_f_b", 1, d, false, Init::Zeros);
        layout.add("dec.out_w", d, v, false, Init::Zeros);
        layout.add("dec.out_b", 1, v, false, Init::Zeros);
        layout
    }

    fn add(&mut self, name: &str, rows: usize, cols: usize, encoder: bool, init: Init) {
        let decay = matches!(init, Init::Uniform | Init::FanIn) && rows > 1;
        let trainable = init != Init::InputCentre;
        self.index.insert(name.to_string(), self.views.len());
        self.views.push(ParamView {
            name: name.to_string(),
            offset: self.total,
            rows,
            cols,
            encoder,
            decay,
            trainable,
            init,
        });
        self.total += rows * cols;
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn views(&self) -> &[ParamView] {
        &self.views
    }

    pub fn view(&self, name: &str) -> Option<&ParamView> {
        self.index.get(name).map(|&i| &self.views[i])
    }

    /// View containing flat index `i`.
    pub fn locate(&self, i: usize) -> Option<&ParamView> {
        let pos = self.views.partition_point(|v| v.offset <= i);
        self.views.get(pos.checked_sub(1)?).filter(|v| v.range().contains(&i))
    }
}

fn joints_of(part: BodyPart) -> usize {
    match part {
        BodyPart::LeftHand | BodyPart::RightHand => 21,
        BodyPart::Face => 18,
        BodyPart::Body => 9,
    }
}

/// Undirected skeleton edges of a part, in its local joint numbering.
pub fn part_edges(part: BodyPart) -> Vec<(usize, usize)> {
    match part {
        BodyPart::LeftHand | BodyPart::RightHand => {
            let mut e = Vec::new();
            for finger in 0..5 {
                let base = 1 + 4 * finger;
                e.push((0, base));
                for k in 0..3 {
                    e.push((base + k, base + k + 1));
                }
            }
            e
        }
        BodyPart::Face => (0..18).map(|i| (i, (i + 1) % 18)).collect(),
        BodyPart::Body => vec![(0, 1), (1, 2), (1, 3), (2, 4), (3, 5), (4, 6), (5, 7), (1, 8)],
    }
}

/// Symmetric-normalised adjacency with self loops, `D^-1/2 (A + I) D^-1/2`.
pub fn normalized_adjacency(part: BodyPart) -> Vec<f64> {
    let n = joints_of(part);
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        a[i * n + i] = 1.0;
    }
    for (i, j) in part_edges(part) {
        a[i * n + j] = 1.0;
        a[j * n + i] = 1.0;
    }
    let deg: Vec<f64> = (0..n).map(|i| a[i * n..(i + 1) * n].iter().sum()).collect();
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] /= (deg[i] * deg[j]).sqrt();
        }
    }
    a
}

/// Subtracts the per-joint centre (`N × 3`, part-local order) and widens the
/// coordinates. Input is `T × N × 3` row-major.
fn normalize_keypoints(data: &[f64], centre: &[f64]) -> Vec<f64> {
    let width = centre.len();
    data.iter()
        .enumerate()
        .map(|(i, v)| {
            let scale = if i % 3 == 2 { 1.0 } else { INPUT_SCALE };
            scale * (v - centre[i % width])
        })
        .collect()
}

/// `pe[t, 2i] = sin(t / 10000^(2i/D))`, `pe[t, 2i+1] = cos(...)`.
pub fn sinusoidal_positions(len: usize, dim: usize) -> Vec<f64> {
    let mut pe = vec![0.0; len * dim];
    for t in 0..len {
        for j in 0..dim {
            let i = (j / 2) as f64;
            let angle = t as f64 / 10000f64.powf(2.0 * i / dim as f64);
            pe[t * dim + j] = if j % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}

/// Translation policy `π_θ`: a flat parameter vector with named views.
///
/// Parameters are kept exactly representable in `f32`, the checkpoint
/// precision; the optimizer rounds after every step.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    config: ModelConfig,
    layout: ParamLayout,
    params: Vec<f64>,
}

/// Result of one teacher-forced pass over `(X, Y)`.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    tape: Tape,
    log_likelihood_var: Var,
    log_likelihood: f64,
    /// Row-major `|Y| × V`; row `i` is `log p(· | X, y_<i)`.
    pub token_logprobs: Vec<f64>,
    pub attention: AttentionStack,
    targets: Vec<u32>,
    vocab_size: usize,
}

impl ForwardTrace {
    /// `log π(Y | X)` as computed during the pass.
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn targets(&self) -> &[u32] {
        &self.targets
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn step_logprobs(&self, i: usize) -> &[f64] {
        &self.token_logprobs[i * self.vocab_size..(i + 1) * self.vocab_size]
    }

    /// Argmax token at each step, ties to the smallest id.
    pub fn argmax_tokens(&self) -> Vec<u32> {
        (0..self.targets.len())
            .map(|i| argmax(self.step_logprobs(i)) as u32)
            .collect()
    }

    pub(crate) fn tape(&self) -> &Tape {
        &self.tape
    }

    pub(crate) fn log_likelihood_var(&self) -> Var {
        self.log_likelihood_var
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Sum of the realized-token log-probabilities of `y` in `trace`.
pub fn sequence_log_likelihood(trace: &ForwardTrace, y: &TokenSequence) -> Result<f64> {
    if y.tokens.len() != trace.targets.len() {
        return Err(PolicyError::Input(format!(
            "trace covers {} target steps but Y has {}",
            trace.targets.len(),
            y.tokens.len()
        )));
    }
    let v = trace.vocab_size;
    y.tokens
        .iter()
        .enumerate()
        .map(|(i, &tok)| {
            let t = tok as usize;
            if t >= v {
                Err(PolicyError::Input(format!("token id {tok} is outside vocabulary of {v}")))
            } else {
                Ok(trace.token_logprobs[i * v + t])
            }
        })
        .sum()
}

/// Decoder memory for one input, plus the per-layer cross-attention keys and
/// values derived from it.
pub(crate) struct Memory {
    pub frames: usize,
    /// `(P + T) × D`.
    pub rows: Var,
    pub cross_kv: Vec<(Var, Var)>,
}

pub(crate) struct Decoded {
    pub logprobs: Var,
    pub cross_probs: Vec<Vec<Var>>,
}

impl PolicyModel {
    /// Freshly initialised model. Weights are uniform in ±0.05, biases and
    /// the output head are zero, layer-norm gains are one, and joint-mixing
    /// matrices start at the part's normalised skeleton adjacency.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let mut rng = signdpo_core::rng::seeded(seed);
        let mut params = vec![0.0; layout.total()];
        for view in layout.views() {
            let slot = &mut params[view.range()];
            match view.init {
                Init::Uniform => {
                    for p in slot.iter_mut() {
                        *p = rng.random_range(-INIT_RANGE..INIT_RANGE) as f32 as f64;
                    }
                }
                Init::FanIn => {
                    let a = (3.0 / view.rows as f64).sqrt();
                    for p in slot.iter_mut() {
                        *p = rng.random_range(-a..a) as f32 as f64;
                    }
                }
                Init::Zeros => {}
                Init::Ones => slot.fill(1.0),
                Init::InputCentre => {
                    for kp in slot.chunks_mut(3) {
                        kp.copy_from_slice(&[0.5, 0.5, 0.0]);
                    }
                }
                Init::Adjacency(part) => {
                    for (p, a) in slot.iter_mut().zip(normalized_adjacency(part)) {
                        *p = a as f32 as f64;
                    }
                }
            }
        }
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    pub(crate) fn from_parts(config: ModelConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        if params.len() != layout.total() {
            return Err(PolicyError::Config(format!(
                "parameter vector has {} entries, config needs {}",
                params.len(),
                layout.total()
            )));
        }
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    /// Sets the fixed input centre to the mean keypoint of `corpus`, joint by
    /// joint, over every frame.
    pub fn fit_input_centre(&mut self, corpus: &[SkeletonSequence]) -> Result<()> {
        let mut sum = vec![0.0; NUM_KEYPOINTS * 3];
        let mut frames = 0usize;
        for seq in corpus {
            seq.validate()?;
            let mut start = 0;
            for pt in split_parts(seq) {
                let w = 3 * pt.joints;
                for frame in pt.data.chunks(w) {
                    for (acc, v) in sum[3 * start..3 * start + w].iter_mut().zip(frame) {
                        *acc += v;
                    }
                }
                start += pt.joints;
            }
            frames += seq.len();
        }
        if frames == 0 {
            return Err(PolicyError::Input("cannot fit input centre on an empty corpus".into()));
        }
        let range = self.layout.view(INPUT_CENTRE).expect("input centre").range();
        for (p, s) in self.params[range].iter_mut().zip(sum) {
            *p = (s / frames as f64) as f32 as f64;
        }
        Ok(())
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Direct parameter access; callers that keep checkpoints bit-exact
    /// must store `f32`-representable values.
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn p(&self, tape: &mut Tape, name: &str) -> Var {
        let view = self
            .layout
            .view(name)
            .unwrap_or_else(|| panic!("unknown parameter view {name}"));
        tape.param(&self.params, view.offset, view.rows, view.cols)
    }

    /// Per-part features before concatenation, each `T × part_dim`.
    pub(crate) fn encode_parts(&self, tape: &mut Tape, x: &SkeletonSequence) -> [Var; 4] {
        let parts = split_parts(x);
        let t_len = x.len();
        let centre = &self.params[self.layout.view(INPUT_CENTRE).expect("input centre").range()];
        let mut start = 0;
        parts.map(|pt| {
            let n = pt.joints;
            let p = format!("enc.{}", pt.part.name());
            let part_centre = &centre[3 * start..3 * (start + n)];
            start += n;
            let input = tape.constant(t_len * n, 3, normalize_keypoints(&pt.data, part_centre));
            let w = self.p(tape, &format!("{p}.joint_w"));
            let b = self.p(tape, &format!("{p}.joint_b"));
            let h = tape.matmul(input, w);
            let h = tape.add_row(h, b);
            // linear up to the flatten: rectifying raw joint offsets halves
            // the signal before the parts can separate templates
            let a = self.p(tape, &format!("{p}.mix"));
            let h = tape.block_mix(a, h);
            let h = tape.reshape(h, t_len, n * self.config.joint_channels);
            let w = self.p(tape, &format!("{p}.flat_w"));
            let b = self.p(tape, &format!("{p}.flat_b"));
            let h = tape.matmul(h, w);
            let h = tape.add_row(h, b);
            let mut h = tape.relu(h);
            for l in 0..self.config.encoder_layers {
                let prev = tape.shift_rows(h, -1);
                let next = tape.shift_rows(h, 1);
                let wp = self.p(tape, &format!("{p}.conv{l}.w_prev"));
                let wm = self.p(tape, &format!("{p}.conv{l}.w_mid"));
                let wn = self.p(tape, &format!("{p}.conv{l}.w_next"));
                let b = self.p(tape, &format!("{p}.conv{l}.b"));
                let a = tape.matmul(prev, wp);
                let m = tape.matmul(h, wm);
                let n2 = tape.matmul(next, wn);
                let s = tape.add(a, m);
                let s = tape.add(s, n2);
                let s = tape.add_row(s, b);
                let s = tape.relu(s);
                h = tape.add(h, s);
            }
            h
        })
    }

    pub(crate) fn encode(&self, tape: &mut Tape, x: &SkeletonSequence) -> Memory {
        let d = self.config.model_dim;
        let t_len = x.len();
        let parts = self.encode_parts(tape, x);
        let cat = tape.concat_cols(&parts);
        let w = self.p(tape, "enc.pose_w");
        let b = self.p(tape, "enc.pose_b");
        let h = tape.matmul(cat, w);
        let h = tape.add_row(h, b);
        let pe = tape.constant(t_len, d, sinusoidal_positions(t_len, d));
        let h = tape.add(h, pe);
        let prefix = self.p(tape, "prefix");
        let mem = tape.concat_rows(&[prefix, h]);
        let cross_kv = (0..self.config.decoder_layers)
            .map(|l| {
                let wk = self.p(tape, &format!("dec{l}.cross_k"));
                let wv = self.p(tape, &format!("dec{l}.cross_v"));
                (tape.matmul(mem, wk), tape.matmul(mem, wv))
            })
            .collect();
        Memory {
            frames: t_len,
            rows: mem,
            cross_kv,
        }
    }

    fn attend(&self, tape: &mut Tape, q: Var, k: Var, v: Var, causal: bool) -> (Var, Vec<Var>) {
        let dh = self.config.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.config.heads);
        let mut probs = Vec::with_capacity(self.config.heads);
        for h in 0..self.config.heads {
            let qh = tape.slice_cols(q, h * dh, dh);
            let kh = tape.slice_cols(k, h * dh, dh);
            let vh = tape.slice_cols(v, h * dh, dh);
            let s = tape.matmul_bt(qh, kh);
            let s = tape.scale(s, scale);
            let p = tape.softmax(s, causal);
            outs.push(tape.matmul(p, vh));
            probs.push(p);
        }
        (tape.concat_cols(&outs), probs)
    }

    /// Teacher-forced decoder over `inputs` (starting with BOS).
    pub(crate) fn decode(&self, tape: &mut Tape, memory: &Memory, inputs: &[u32]) -> Decoded {
        let d = self.config.model_dim;
        let n = inputs.len();
        let emb = self.p(tape, "dec.tok_emb");
        let ids: Vec<usize> = inputs.iter().map(|&t| t as usize).collect();
        let x = tape.gather_rows(emb, &ids);
        let x = tape.scale(x, (d as f64).sqrt());
        let pe = tape.constant(n, d, sinusoidal_positions(n, d));
        let mut x = tape.add(x, pe);
        let mut cross_probs = Vec::with_capacity(self.config.decoder_layers);
        for l in 0..self.config.decoder_layers {
            let p = format!("dec{l}");
            // self-attention
            let g = self.p(tape, &format!("{p}.ln_self_g"));
            let b = self.p(tape, &format!("{p}.ln_self_b"));
            let a = tape.layer_norm(x, g, b);
            let wq = self.p(tape, &format!("{p}.self_q"));
            let wk = self.p(tape, &format!("{p}.self_k"));
            let wv = self.p(tape, &format!("{p}.self_v"));
            let q = tape.matmul(a, wq);
            let k = tape.matmul(a, wk);
            let v = tape.matmul(a, wv);
            let (o, _) = self.attend(tape, q, k, v, true);
            let wo = self.p(tape, &format!("{p}.self_o"));
            let bo = self.p(tape, &format!("{p}.self_ob"));
            let o = tape.matmul(o, wo);
            let o = tape.add_row(o, bo);
            x = tape.add(x, o);
            // cross-attention
            let g = self.p(tape, &format!("{p}.ln_cross_g"));
            let b = self.p(tape, &format!("{p}.ln_cross_b"));
            let a = tape.layer_norm(x, g, b);
            let wq = self.p(tape, &format!("{p}.cross_q"));
            let q = tape.matmul(a, wq);
            let (k, v) = memory.cross_kv[l];
            let (o, probs) = self.attend(tape, q, k, v, false);
            cross_probs.push(probs);
            let wo = self.p(tape, &format!("{p}.cross_o"));
            let bo = self.p(tape, &format!("{p}.cross_ob"));
            let o = tape.matmul(o, wo);
            let o = tape.add_row(o, bo);
            x = tape.add(x, o);
            // feed-forward
            let g = self.p(tape, &format!("{p}.ln_ffn_g"));
            let b = self.p(tape, &format!("{p}.ln_ffn_b"));
            let a = tape.layer_norm(x, g, b);
            let w1 = self.p(tape, &format!("{p}.ffn_w1"));
            let b1 = self.p(tape, &format!("{p}.ffn_b1"));
            let w2 = self.p(tape, &format!("{p}.ffn_w2"));
            let b2 = self.p(tape, &format!("{p}.ffn_b2"));
            let h = tape.matmul(a, w1);
            let h = tape.add_row(h, b1);
            let h = tape.relu(h);
            let h = tape.matmul(h, w2);
            let h = tape.add_row(h, b2);
            x = tape.add(x, h);
        }
        let g = self.p(tape, "dec.ln_f_g");
        let b = self.p(tape, "dec.ln_f_b");
        let x = tape.layer_norm(x, g, b);
        let w = self.p(tape, "dec.out_w");
        let b = self.p(tape, "dec.out_b");
        let logits = tape.matmul(x, w);
        let logits = tape.add_row(logits, b);
        Decoded {
            logprobs: tape.log_softmax(logits),
            cross_probs,
        }
    }

    pub(crate) fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        let v = self.config.vocab_size;
        if let Some(bad) = tokens.iter().find(|&&t| t as usize >= v) {
            return Err(PolicyError::Input(format!(
                "token id {bad} is outside vocabulary of {v}"
            )));
        }
        Ok(())
    }

    /// Teacher-forced pass: the decoder reads `[BOS, y_0, .., y_{n-2}]` and
    /// scores `y_0 .. y_{n-1}`.
    pub fn forward(&self, x: &SkeletonSequence, y: &TokenSequence) -> Result<ForwardTrace> {
        if y.tokens.is_empty() {
            return Err(PolicyError::Input("target sequence is empty".into()));
        }
        self.check_tokens(&y.tokens)?;
        x.validate()?;
        let mut tape = Tape::new();
        let memory = self.encode(&mut tape, x);
        let mut inputs = Vec::with_capacity(y.tokens.len());
        inputs.push(BOS);
        inputs.extend_from_slice(&y.tokens[..y.tokens.len() - 1]);
        let decoded = self.decode(&mut tape, &memory, &inputs);
        let cols: Vec<usize> = y.tokens.iter().map(|&t| t as usize).collect();
        let ll = tape.pick_sum(decoded.logprobs, &cols);
        let attention = self.collect_attention(&tape, &decoded, y.tokens.len(), memory.frames)?;
        Ok(ForwardTrace {
            log_likelihood: tape.scalar(ll),
            token_logprobs: tape.value(decoded.logprobs).to_vec(),
            log_likelihood_var: ll,
            attention,
            targets: y.tokens.clone(),
            vocab_size: self.config.vocab_size,
            tape,
        })
    }

    fn collect_attention(
        &self,
        tape: &Tape,
        decoded: &Decoded,
        steps: usize,
        frames: usize,
    ) -> Result<AttentionStack> {
        let mut data = Vec::new();
        for layer in &decoded.cross_probs {
            for &p in layer {
                data.extend_from_slice(tape.value(p));
            }
        }
        Ok(AttentionStack::unmasked(
            self.config.decoder_layers,
            self.config.heads,
            steps,
            self.config.prefix_len,
            frames,
            data,
        )?)
    }

    /// `log π(Y | X)`.
    pub fn log_likelihood(&self, x: &SkeletonSequence, y: &TokenSequence) -> Result<f64> {
        Ok(self.forward(x, y)?.log_likelihood())
    }

    /// Encoder features of each body part before concatenation, row-major
    /// `T × part_dim`, in [`BodyPart::ALL`] order.
    pub fn part_features(&self, x: &SkeletonSequence) -> Result<[Vec<f64>; 4]> {
        x.validate()?;
        let mut tape = Tape::new();
        let parts = self.encode_parts(&mut tape, x);
        Ok(parts.map(|v| tape.value(v).to_vec()))
    }

    /// Decoder memory, row-major `(P + T) × D`: prefix slots then frames.
    pub fn memory(&self, x: &SkeletonSequence) -> Result<Vec<f64>> {
        x.validate()?;
        let mut tape = Tape::new();
        let memory = self.encode(&mut tape, x);
        Ok(tape.value(memory.rows).to_vec())
    }
}

/// Frozen `π_ref`: a parameter snapshot that no optimizer can reach.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel {
    model: PolicyModel,
}

impl ReferenceModel {
    pub fn forward(&self, x: &SkeletonSequence, y: &TokenSequence) -> Result<ForwardTrace> {
        self.model.forward(x, y)
    }

    pub fn log_likelihood(&self, x: &SkeletonSequence, y: &TokenSequence) -> Result<f64> {
        self.model.log_likelihood(x, y)
    }

    pub fn params(&self) -> &[f64] {
        self.model.params()
    }

    pub fn model(&self) -> &PolicyModel {
        &self.model
    }

    /// A copy of this snapshot; identical parameters.
    pub fn snapshot(&self) -> ReferenceModel {
        self.clone()
    }
}

pub fn snapshot_reference(model: &PolicyModel) -> ReferenceModel {
    ReferenceModel {
        model: model.clone(),
    }
}

pub fn reference_forward(
    reference: &ReferenceModel,
    x: &SkeletonSequence,
    y: &TokenSequence,
) -> Result<ForwardTrace> {
    reference.forward(x, y)
}

/// Gradient of `Σ coef_k · log π(Y_k | X_k)` over the given traces.
///
/// Every trace must come from `model`. Non-finite coefficients,
/// likelihoods or gradient entries yield [`PolicyError::Numeric`] naming the
/// first offending parameter.
pub fn backward(model: &PolicyModel, terms: &[(&ForwardTrace, f64)]) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; model.num_params()];
    for (k, (trace, coef)) in terms.iter().enumerate() {
        if !coef.is_finite() || !trace.log_likelihood.is_finite() {
            return Err(PolicyError::Numeric {
                message: format!(
                    "term {k}: coefficient {coef}, log-likelihood {}",
                    trace.log_likelihood
                ),
            });
        }
        if *coef == 0.0 {
            continue;
        }
        trace.tape().backward(trace.log_likelihood_var(), *coef, &mut grad);
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        let name = model.layout().locate(i).map(|v| v.name.as_str()).unwrap_or("?");
        return Err(PolicyError::Numeric {
            message: format!("gradient entry {i} ({name}) is {}", grad[i]),
        });
    }
    Ok(grad)
}
