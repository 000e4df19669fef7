//! Supervised fine-tuning records for a score-conditioned negative generator.
//!
//! One JSON object per line:
//! `{"messages":[{"role":"system",...},{"role":"user",...},{"role":"assistant",...}]}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use signdpo_textmetrics::ScoreTriple;

use crate::error::{PrefsError, Result};
use crate::scored::ScoredSample;

/// Fixed system prompt, byte for byte.
pub const SYSTEM_PROMPT: &str = "You are an assistant that generates text based on scoring conditions. \
Given a reference text (ref_text) and three scores:\n\
- adequacy_final: 0~1, higher means better semantic adequacy and key information retention;\n\
- faithfulness_final: 0~1, higher means more faithful output with no irrelevant additions;\n\
- fluency_final: 0~1, higher means better fluency and structural completeness.\n\
Based on these three scores, simulate the target output (pre_text) in terms of language style \
and degree of information retention. Note: Do not repeat the scores themselves \u{2014} only output \
the generated result.";

/// User turn; scores are rendered with three decimals.
pub fn user_message(reference: &str, target: &ScoreTriple) -> String {
    format!(
        "ref_text: {reference} adequacy_final: {:.3} faithfulness_final: {:.3} fluency_final: {:.3}",
        target.adequacy, target.faithfulness, target.fluency
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SftRecord {
    pub system: String,
    pub user: String,
    pub assistant: String,
}

#[derive(Serialize, Deserialize)]
struct Wire {
    messages: Vec<Message>,
}

impl SftRecord {
    pub fn from_sample(sample: &ScoredSample) -> Self {
        Self {
            system: SYSTEM_PROMPT.to_string(),
            user: user_message(&sample.reference, &sample.scores),
            assistant: sample.candidate.clone(),
        }
    }

    pub fn to_json_line(&self) -> String {
        let wire = Wire {
            messages: vec![
                Message::new("system", &self.system),
                Message::new("user", &self.user),
                Message::new("assistant", &self.assistant),
            ],
        };
        serde_json::to_string(&wire).expect("string fields always serialise")
    }

    pub fn from_json_line(line: &str) -> std::result::Result<Self, String> {
        let wire: Wire = serde_json::from_str(line).map_err(|e| e.to_string())?;
        match wire.messages.as_slice() {
            [s, u, a] if s.role == "system" && u.role == "user" && a.role == "assistant" => Ok(Self {
                system: s.content.clone(),
                user: u.content.clone(),
                assistant: a.content.clone(),
            }),
            _ => Err("expected system, user and assistant messages in that order".into()),
        }
    }
}

/// Writes one record per sample. Nothing is written for an empty input.
pub fn build_sft_dataset(samples: &[ScoredSample], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if samples.is_empty() {
        return Err(PrefsError::Input("no scored samples to write".into()));
    }
    let io = |source| PrefsError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for s in samples {
        writeln!(w, "{}", SftRecord::from_sample(s).to_json_line()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_sft_dataset(path: impl AsRef<Path>) -> Result<Vec<SftRecord>> {
    let path = path.as_ref();
    let io = |source| PrefsError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(SftRecord::from_json_line(&line).map_err(|message| PrefsError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        })?);
    }
    Ok(out)
}
