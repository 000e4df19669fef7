//! Beam-search decoding.
//!
//! Hypotheses are ranked by total log-probability without length
//! normalisation. PAD and BOS are never emitted. A hypothesis finishes when it
//! emits EOS (not included in the output) or reaches `max_len` tokens.

use std::cmp::Ordering;

use signdpo_core::skeleton::SkeletonSequence;
use signdpo_core::vocab::{BOS, EOS, PAD};
use signdpo_core::TokenSequence;

use crate::error::Result;
use crate::model::PolicyModel;
use crate::tape::Tape;

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Emitted tokens, without the terminating EOS.
    pub tokens: Vec<u32>,
    /// Total log-probability, including the EOS step when finished by EOS.
    pub score: f64,
}

fn emittable(tok: usize) -> bool {
    tok != PAD as usize && tok != BOS as usize
}

/// Highest-scoring finished hypothesis under beam search.
pub fn beam_search(
    model: &PolicyModel,
    x: &SkeletonSequence,
    beam_width: usize,
    max_len: usize,
) -> Result<Hypothesis> {
    x.validate()?;
    let width = beam_width.max(1);
    let mut tape = Tape::new();
    let memory = model.encode(&mut tape, x);
    let mark = tape.len();
    let v = model.config().vocab_size;

    let mut live: Vec<Hypothesis> = vec![Hypothesis {
        tokens: Vec::new(),
        score: 0.0,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for step in 0..max_len {
        // (score, beam, token) candidates
        let mut cands: Vec<(f64, usize, usize)> = Vec::with_capacity(live.len() * v);
        for (b, hyp) in live.iter().enumerate() {
            let mut inputs = Vec::with_capacity(hyp.tokens.len() + 1);
            inputs.push(BOS);
            inputs.extend_from_slice(&hyp.tokens);
            let dec = model.decode(&mut tape, &memory, &inputs);
            let lp = tape.value(dec.logprobs);
            let last = &lp[(inputs.len() - 1) * v..inputs.len() * v];
            for (tok, l) in last.iter().enumerate() {
                if emittable(tok) {
                    cands.push((hyp.score + l, b, tok));
                }
            }
            tape.truncate(mark);
        }
        cands.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let last_step = step + 1 == max_len;
        let mut next = Vec::with_capacity(width);
        for &(score, b, tok) in cands.iter().take(width) {
            let mut tokens = live[b].tokens.clone();
            if tok == EOS as usize {
                finished.push(Hypothesis { tokens, score });
                continue;
            }
            tokens.push(tok as u32);
            if last_step {
                finished.push(Hypothesis { tokens, score });
            } else {
                next.push(Hypothesis { tokens, score });
            }
        }
        live = next;
        let best_live = live.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
        let best_done = finished.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
        // log-probabilities are non-positive, so live scores can only fall
        if live.is_empty() || best_done >= best_live {
            break;
        }
    }
    if finished.is_empty() {
        finished = live;
    }
    let best = finished
        .into_iter()
        .reduce(|a, b| if b.score > a.score { b } else { a })
        .unwrap_or(Hypothesis {
            tokens: Vec::new(),
            score: 0.0,
        });
    Ok(best)
}

/// Beam-search translation of `x`; see [`beam_search`].
pub fn generate(
    model: &PolicyModel,
    x: &SkeletonSequence,
    beam_width: usize,
    max_len: usize,
) -> Result<TokenSequence> {
    let hyp = beam_search(model, x, beam_width, max_len)?;
    Ok(TokenSequence::new(hyp.tokens, String::new()))
}

/// Total log-probability of emitting `tokens` and then EOS, the score beam
/// search assigns to a hypothesis finished by EOS.
pub fn hypothesis_score(model: &PolicyModel, x: &SkeletonSequence, tokens: &[u32]) -> Result<f64> {
    let mut y = tokens.to_vec();
    y.push(EOS);
    model.log_likelihood(x, &TokenSequence::new(y, String::new()))
}
