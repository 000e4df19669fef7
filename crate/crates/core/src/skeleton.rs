//! Skeleton sequences: 69-keypoint frames, the part layout, and the
//! line-delimited sequence file format.
//!
//! Each line of a sequence file is one JSON object:
//!
//! ```text
//! {"id":"s0","text":"hello world","lang":"word","frames":[[[x,y,c], ... 69 ...], ...]}
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_KEYPOINTS: usize = 69;

/// One joint observation in normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub const ZERO: Keypoint = Keypoint {
        x: 0.0,
        y: 0.0,
        confidence: 0.0,
    };

    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Self { x, y, confidence }
    }

    pub fn is_zero(&self) -> bool {
        self.x == 0.0 && self.y == 0.0 && self.confidence == 0.0
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.confidence]
    }

    fn bits(&self) -> [u64; 3] {
        [self.x.to_bits(), self.y.to_bits(), self.confidence.to_bits()]
    }
}

pub type Frame = [Keypoint; NUM_KEYPOINTS];

/// Bitwise frame equality (distinguishes `-0.0` from `0.0`).
pub fn frames_bit_equal(a: &Frame, b: &Frame) -> bool {
    a.iter().zip(b.iter()).all(|(p, q)| p.bits() == q.bits())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BodyPart {
    LeftHand,
    RightHand,
    Face,
    Body,
}

impl BodyPart {
    /// Layout order used for splitting and concatenation.
    pub const ALL: [BodyPart; 4] = [
        BodyPart::LeftHand,
        BodyPart::RightHand,
        BodyPart::Face,
        BodyPart::Body,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BodyPart::LeftHand => "left_hand",
            BodyPart::RightHand => "right_hand",
            BodyPart::Face => "face",
            BodyPart::Body => "body",
        }
    }

    pub fn index(&self) -> usize {
        *self as usize
    }
}

/// Assignment of keypoint indices to body parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartLayout {
    pub left_hand: Range<usize>,
    pub right_hand: Range<usize>,
    pub face: Range<usize>,
    pub body: Range<usize>,
}

impl Default for PartLayout {
    fn default() -> Self {
        Self::canonical()
    }
}

impl PartLayout {
    pub const HAND_JOINTS: usize = 21;
    pub const FACE_JOINTS: usize = 18;
    pub const BODY_JOINTS: usize = 9;

    /// left hand 0..=20, right hand 21..=41, face 42..=59, body 60..=68.
    pub fn canonical() -> Self {
        Self {
            left_hand: 0..21,
            right_hand: 21..42,
            face: 42..60,
            body: 60..69,
        }
    }

    /// Builds a layout and checks that the ranges have the 21/21/18/9 sizes
    /// and tile `0..69` without gaps or overlaps.
    pub fn new(
        left_hand: Range<usize>,
        right_hand: Range<usize>,
        face: Range<usize>,
        body: Range<usize>,
    ) -> Result<Self> {
        let layout = Self {
            left_hand,
            right_hand,
            face,
            body,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = [
            Self::HAND_JOINTS,
            Self::HAND_JOINTS,
            Self::FACE_JOINTS,
            Self::BODY_JOINTS,
        ];
        for (part, want) in BodyPart::ALL.iter().zip(expected) {
            let r = self.range(*part);
            if r.end < r.start || r.len() != want {
                return Err(Error::Validation(format!(
                    "part {} has {} joints, expected {}",
                    part.name(),
                    r.len(),
                    want
                )));
            }
        }
        let mut covered = [false; NUM_KEYPOINTS];
        for part in BodyPart::ALL {
            for j in self.range(part) {
                if j >= NUM_KEYPOINTS || covered[j] {
                    return Err(Error::Validation(format!(
                        "part {} overlaps or exceeds the joint range at index {}",
                        part.name(),
                        j
                    )));
                }
                covered[j] = true;
            }
        }
        Ok(())
    }

    pub fn range(&self, part: BodyPart) -> Range<usize> {
        match part {
            BodyPart::LeftHand => self.left_hand.clone(),
            BodyPart::RightHand => self.right_hand.clone(),
            BodyPart::Face => self.face.clone(),
            BodyPart::Body => self.body.clone(),
        }
    }

    pub fn joints(&self, part: BodyPart) -> usize {
        self.range(part).len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LanguageMode {
    /// Whitespace-delimited words (English-like).
    #[default]
    Word,
    /// One token per character (Chinese-like).
    Char,
}

impl LanguageMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            LanguageMode::Word => "word",
            LanguageMode::Char => "char",
        }
    }
}

impl std::str::FromStr for LanguageMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word" => Ok(LanguageMode::Word),
            "char" => Ok(LanguageMode::Char),
            other => Err(Error::Config(format!("unknown language mode {other:?}"))),
        }
    }
}

/// A skeleton clip paired with its reference translation.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    pub id: String,
    pub frames: Vec<Frame>,
    pub layout: PartLayout,
    pub reference_text: String,
    pub language_mode: LanguageMode,
}

impl SkeletonSequence {
    pub fn new(
        id: impl Into<String>,
        frames: Vec<Frame>,
        reference_text: impl Into<String>,
        language_mode: LanguageMode,
    ) -> Result<Self> {
        let seq = Self {
            id: id.into(),
            frames,
            layout: PartLayout::canonical(),
            reference_text: reference_text.into(),
            language_mode,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        if self.frames.is_empty() {
            return Err(Error::Validation(format!(
                "sequence {:?} has no frames",
                self.id
            )));
        }
        if self.reference_text.trim().is_empty() {
            return Err(Error::Validation(format!(
                "sequence {:?} has an empty reference text",
                self.id
            )));
        }
        for (t, frame) in self.frames.iter().enumerate() {
            check_frame(t, frame)?;
        }
        Ok(())
    }

    /// Same clip with different frames; id, text and layout are kept.
    pub fn with_frames(&self, frames: Vec<Frame>) -> Self {
        Self {
            id: self.id.clone(),
            frames,
            layout: self.layout.clone(),
            reference_text: self.reference_text.clone(),
            language_mode: self.language_mode,
        }
    }

    /// Bitwise equality of the frame data.
    pub fn frames_bit_equal(&self, other: &SkeletonSequence) -> bool {
        self.frames.len() == other.frames.len()
            && self
                .frames
                .iter()
                .zip(&other.frames)
                .all(|(a, b)| frames_bit_equal(a, b))
    }
}

fn check_frame(t: usize, frame: &Frame) -> Result<()> {
    for (j, kp) in frame.iter().enumerate() {
        if !kp.x.is_finite() || !kp.y.is_finite() {
            return Err(Error::Validation(format!(
                "frame {t}: keypoint {j} has non-finite coordinates"
            )));
        }
        if !(0.0..=1.0).contains(&kp.confidence) {
            return Err(Error::Validation(format!(
                "frame {t}: keypoint {j} confidence {} outside [0, 1]",
                kp.confidence
            )));
        }
    }
    Ok(())
}

/// One part's joints for every frame, flattened as `frames × joints × 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartTensor {
    pub part: BodyPart,
    pub frames: usize,
    pub joints: usize,
    pub data: Vec<f64>,
}

impl PartTensor {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.frames, self.joints, 3)
    }

    pub fn get(&self, t: usize, j: usize, c: usize) -> f64 {
        self.data[(t * self.joints + j) * 3 + c]
    }
}

/// Splits a sequence into its four part tensors in [`BodyPart::ALL`] order.
pub fn split_parts(seq: &SkeletonSequence) -> [PartTensor; 4] {
    BodyPart::ALL.map(|part| {
        let range = seq.layout.range(part);
        let joints = range.len();
        let mut data = Vec::with_capacity(seq.frames.len() * joints * 3);
        for frame in &seq.frames {
            for kp in &frame[range.clone()] {
                data.extend_from_slice(&kp.as_array());
            }
        }
        PartTensor {
            part,
            frames: seq.frames.len(),
            joints,
            data,
        }
    })
}

/// Inverse of [`split_parts`].
pub fn reconstruct_frames(parts: &[PartTensor; 4], layout: &PartLayout) -> Result<Vec<Frame>> {
    let frames = parts[0].frames;
    let mut out = vec![[Keypoint::ZERO; NUM_KEYPOINTS]; frames];
    for tensor in parts {
        let range = layout.range(tensor.part);
        if tensor.frames != frames || tensor.joints != range.len() {
            return Err(Error::Validation(format!(
                "part {} has shape {:?}, incompatible with the layout",
                tensor.part.name(),
                tensor.shape()
            )));
        }
        for (t, frame) in out.iter_mut().enumerate() {
            for (k, j) in range.clone().enumerate() {
                frame[j] = Keypoint::new(
                    tensor.get(t, k, 0),
                    tensor.get(t, k, 1),
                    tensor.get(t, k, 2),
                );
            }
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct RecordOut<'a> {
    id: &'a str,
    text: &'a str,
    lang: LanguageMode,
    frames: Vec<Vec<[f64; 3]>>,
}

#[derive(Deserialize)]
struct RecordIn {
    id: String,
    text: String,
    lang: LanguageMode,
    frames: Vec<Vec<[f64; 3]>>,
}

/// Serializes one sequence as a single line (no trailing newline).
pub fn to_record_line(seq: &SkeletonSequence) -> Result<String> {
    let record = RecordOut {
        id: &seq.id,
        text: &seq.reference_text,
        lang: seq.language_mode,
        frames: seq
            .frames
            .iter()
            .map(|f| f.iter().map(Keypoint::as_array).collect())
            .collect(),
    };
    Ok(serde_json::to_string(&record)?)
}

/// Parses one record line. `line_no` is only used for error messages.
pub fn parse_record_line(line: &str, line_no: usize) -> Result<SkeletonSequence> {
    let record: RecordIn = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: line_no,
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut frames = Vec::with_capacity(record.frames.len());
    for (t, raw) in record.frames.into_iter().enumerate() {
        if raw.len() != NUM_KEYPOINTS {
            return Err(Error::Validation(format!(
                "frame {t} of {:?} has {} keypoints, expected {NUM_KEYPOINTS}",
                record.id,
                raw.len()
            )));
        }
        let mut frame = [Keypoint::ZERO; NUM_KEYPOINTS];
        for (slot, [x, y, c]) in frame.iter_mut().zip(raw) {
            *slot = Keypoint::new(x, y, c);
        }
        frames.push(frame);
    }
    SkeletonSequence::new(record.id, frames, record.text, record.lang)
}

/// Reads every record of a sequence file. Blank lines are skipped.
pub fn load_sequences(path: impl AsRef<Path>) -> Result<Vec<SkeletonSequence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_sequences(&text)
}

pub fn parse_sequences(text: &str) -> Result<Vec<SkeletonSequence>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_record_line(l, i + 1))
        .collect()
}

/// Reads a file holding exactly one sequence record.
pub fn load_sequence(path: impl AsRef<Path>) -> Result<SkeletonSequence> {
    let mut all = load_sequences(path.as_ref())?;
    if all.len() != 1 {
        return Err(Error::Validation(format!(
            "{} holds {} records, expected exactly one",
            path.as_ref().display(),
            all.len()
        )));
    }
    Ok(all.remove(0))
}

pub fn save_sequences<'a, I>(path: impl AsRef<Path>, seqs: I) -> Result<()>
where
    I: IntoIterator<Item = &'a SkeletonSequence>,
{
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    for seq in seqs {
        writeln!(out, "{}", to_record_line(seq)?).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn save_sequence(path: impl AsRef<Path>, seq: &SkeletonSequence) -> Result<()> {
    save_sequences(path, std::iter::once(seq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_sequence(rng: &mut impl Rng, id: usize) -> SkeletonSequence {
        let t = rng.random_range(1..12);
        let frames = (0..t)
            .map(|_| {
                std::array::from_fn(|_| {
                    Keypoint::new(
                        rng.random_range(-2.0..2.0),
                        rng.random_range(-2.0..2.0),
                        rng.random_range(0.0..=1.0),
                    )
                })
            })
            .collect();
        SkeletonSequence::new(format!("r{id}"), frames, "a b c", LanguageMode::Word).unwrap()
    }

    fn frame_json(n: usize) -> String {
        let kps: Vec<String> = (0..n).map(|j| format!("[{j}.5,0.25,1]")).collect();
        format!("[{}]", kps.join(","))
    }

    #[test]
    fn canonical_layout_is_valid() {
        let layout = PartLayout::canonical();
        layout.validate().unwrap();
        assert_eq!(layout.right_hand, 21..42);
    }

    #[test]
    fn overlapping_layout_rejected() {
        assert!(PartLayout::new(0..21, 20..41, 42..60, 60..69).is_err());
        assert!(PartLayout::new(0..21, 21..42, 42..59, 59..68).is_err());
    }

    #[test]
    fn load_two_frame_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("two.seq");
        let line = format!(
            r#"{{"id":"s","text":"hi there","lang":"word","frames":[{},{}]}}"#,
            frame_json(69),
            frame_json(69)
        );
        fs::write(&path, line + "\n").unwrap();
        let seq = load_sequence(&path).unwrap();
        assert_eq!(seq.len(), 2);
        assert_eq!(seq.frames[1][3].x, 3.5);
    }

    #[test]
    fn short_frame_names_frame_index() {
        let line = format!(
            r#"{{"id":"s","text":"hi","lang":"word","frames":[{},{}]}}"#,
            frame_json(68),
            frame_json(69)
        );
        let err = parse_record_line(&line, 1).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("frame 0"), "{err}");
    }

    #[test]
    fn malformed_line_names_position() {
        let text = format!(
            "{}\n{{\"id\": \"x\", \"text\": oops}}\n",
            to_record_line(&random_sequence(&mut seeded(1), 0)).unwrap()
        );
        match parse_sequences(&text).unwrap_err() {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_confidence_rejected() {
        let mut seq = random_sequence(&mut seeded(2), 0);
        seq.frames[0][5].confidence = 1.5;
        assert!(seq.validate().is_err());
    }

    #[test]
    fn save_load_is_canonical_over_random_sequences() {
        let mut rng = seeded(11);
        let dir = tempfile::tempdir().unwrap();
        for i in 0..100 {
            let seq = random_sequence(&mut rng, i);
            let p = dir.path().join("a.seq");
            save_sequence(&p, &seq).unwrap();
            let first = fs::read(&p).unwrap();
            let loaded = load_sequence(&p).unwrap();
            assert!(loaded.frames_bit_equal(&seq));
            let q = dir.path().join("b.seq");
            save_sequence(&q, &loaded).unwrap();
            assert_eq!(first, fs::read(&q).unwrap());
        }
    }

    #[test]
    fn split_zero_frame_shapes() {
        let seq = SkeletonSequence::new(
            "z",
            vec![[Keypoint::ZERO; NUM_KEYPOINTS]],
            "x",
            LanguageMode::Char,
        )
        .unwrap();
        let parts = split_parts(&seq);
        let shapes: Vec<_> = parts.iter().map(PartTensor::shape).collect();
        assert_eq!(shapes, vec![(1, 21, 3), (1, 21, 3), (1, 18, 3), (1, 9, 3)]);
        assert!(parts.iter().all(|p| p.data.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn right_hand_slice_matches_definition() {
        let seq = random_sequence(&mut seeded(3), 0);
        let parts = split_parts(&seq);
        let rh = &parts[BodyPart::RightHand.index()];
        for (t, frame) in seq.frames.iter().enumerate() {
            for k in 0..21 {
                assert_eq!(rh.get(t, k, 0), frame[21 + k].x);
                assert_eq!(rh.get(t, k, 2), frame[21 + k].confidence);
            }
        }
    }

    #[test]
    fn split_reconstruct_over_seeds() {
        for s in 0..100 {
            let seq = random_sequence(&mut seeded(s), 0);
            let back = reconstruct_frames(&split_parts(&seq), &seq.layout).unwrap();
            assert!(seq.with_frames(back).frames_bit_equal(&seq));
        }
    }

    proptest! {
        #[test]
        fn split_is_lossless(seed in any::<u64>()) {
            let seq = random_sequence(&mut seeded(seed), 0);
            let back = reconstruct_frames(&split_parts(&seq), &seq.layout).unwrap();
            prop_assert!(seq.with_frames(back).frames_bit_equal(&seq));
        }
    }
}
