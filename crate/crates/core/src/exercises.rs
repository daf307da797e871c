//! Exercise bank and graders.
//!
//! Four exercise types are supported: multiple choice with per-answer
//! comments, short answers checked by a normalizing grader, masked-field
//! trace questions, and packet reordering. Every grade is a [`Verdict`]
//! carrying specific feedback.
//!
//! A bank is a directory of JSON files, one exercise per file, tagged by a
//! `type` field (`mcq`, `short`, `trace_mask`, `trace_reorder`). Trace
//! exercises name a classic pcap file relative to the bank directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, parse_hex};
use crate::dissect::{self, dissect_packet, hex_dump, mask_fields, Capture, DissectError, LinkType};
use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum ExerciseError {
    #[error("configuration error in `{id}`: {reason}")]
    Config { id: String, reason: String },
    #[error("invalid submission: {0}")]
    Input(String),
    #[error("unknown exercise `{0}`")]
    NotFound(String),
    #[error(transparent)]
    Dissect(#[from] DissectError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
}

fn config_err(id: &str, reason: impl Into<String>) -> ExerciseError {
    ExerciseError::Config {
        id: id.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub comment: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqQuestion {
    pub id: String,
    pub prompt: String,
    pub correct: Vec<Answer>,
    pub incorrect: Vec<Answer>,
    /// Number of incorrect answers displayed per instance.
    pub n: usize,
}

impl McqQuestion {
    pub fn validate(&self) -> Result<(), ExerciseError> {
        if self.correct.is_empty() {
            return Err(config_err(&self.id, "correct pool is empty"));
        }
        if self.n == 0 {
            return Err(config_err(&self.id, "n must be at least 1"));
        }
        if self.incorrect.len() < self.n {
            return Err(config_err(
                &self.id,
                format!(
                    "incorrect pool has {} answers but {} are displayed",
                    self.incorrect.len(),
                    self.n
                ),
            ));
        }
        if self
            .correct
            .iter()
            .chain(&self.incorrect)
            .any(|a| a.comment.trim().is_empty())
        {
            return Err(config_err(&self.id, "every answer needs a comment"));
        }
        Ok(())
    }
}

/// Reference to a pool member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnswerRef {
    pub correct: bool,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqInstance {
    pub question_id: String,
    pub seed: u64,
    /// Display order: position `i` shows this pool member.
    pub displayed: Vec<AnswerRef>,
}

/// Draws one correct and `n` incorrect answers and shuffles them.
pub fn instantiate_mcq(q: &McqQuestion, seed: u64) -> Result<McqInstance, ExerciseError> {
    q.validate()?;
    let mut rng = SplitMix64::new(seed);
    let correct = rng.next_index(q.correct.len());
    let mut displayed = vec![AnswerRef {
        correct: true,
        index: correct,
    }];
    displayed.extend(
        rng.sample_indices(q.incorrect.len(), q.n)
            .into_iter()
            .map(|index| AnswerRef {
                correct: false,
                index,
            }),
    );
    rng.shuffle(&mut displayed);
    Ok(McqInstance {
        question_id: q.id.clone(),
        seed,
        displayed,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackItem {
    /// What the comment is about: an answer index, a field path or a
    /// position.
    pub target: String,
    pub comment: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub correct: bool,
    pub score: f64,
    pub feedback: Vec<FeedbackItem>,
}

impl Verdict {
    fn from_score(score: f64, feedback: Vec<FeedbackItem>) -> Self {
        Verdict {
            correct: score >= 1.0,
            score: score.clamp(0.0, 1.0),
            feedback,
        }
    }

    fn strict(mut self) -> Self {
        if !self.correct {
            self.score = 0.0;
        }
        self
    }
}

fn item(target: impl Into<String>, comment: impl Into<String>) -> FeedbackItem {
    FeedbackItem {
        target: target.into(),
        comment: comment.into(),
    }
}

pub fn grade_mcq(q: &McqQuestion, inst: &McqInstance, chosen: usize) -> Result<Verdict, ExerciseError> {
    let r = inst.displayed.get(chosen).ok_or_else(|| {
        ExerciseError::Input(format!(
            "choice {chosen} is out of range for {} answers",
            inst.displayed.len()
        ))
    })?;
    let pool = if r.correct { &q.correct } else { &q.incorrect };
    let answer = pool
        .get(r.index)
        .ok_or_else(|| config_err(&q.id, "instance does not match question pools"))?;
    Ok(Verdict::from_score(
        if r.correct { 1.0 } else { 0.0 },
        vec![item(format!("answer {chosen}"), answer.comment.clone())],
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Grader {
    ExactText { expected: String },
    Integer { expected: i64 },
    HexBytes { expected: String },
    /// Correct answer is the byte-stuffed frame of `payload` (hex).
    Stuffing { payload: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortAnswerQuestion {
    pub id: String,
    pub prompt: String,
    pub grader: Grader,
    #[serde(default)]
    pub feedback_wrong: String,
}

impl ShortAnswerQuestion {
    pub fn validate(&self) -> Result<(), ExerciseError> {
        match &self.grader {
            Grader::HexBytes { expected } if parse_hex(expected).is_none() => {
                Err(config_err(&self.id, "expected value is not valid hex"))
            }
            Grader::Stuffing { payload } => {
                let bytes = parse_hex(payload)
                    .ok_or_else(|| config_err(&self.id, "stuffing payload is not valid hex"))?;
                codec::stuff(&bytes).map_err(|e| config_err(&self.id, e.to_string()))?;
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses a decimal or `0x`-prefixed hexadecimal integer.
pub fn parse_int(s: &str) -> Option<i128> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest.trim_start()),
        None => (false, s),
    };
    let v = if let Some(h) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i128::from_str_radix(&h.replace('_', ""), 16).ok()?
    } else {
        body.replace('_', "").parse::<i128>().ok()?
    };
    Some(if neg { -v } else { v })
}

fn wrong_comment(q: &ShortAnswerQuestion, detail: &str) -> String {
    if q.feedback_wrong.is_empty() {
        detail.to_string()
    } else {
        format!("{} {}", q.feedback_wrong, detail)
    }
}

fn grade_hex(q: &ShortAnswerQuestion, expected: &[u8], submitted: &str) -> Verdict {
    let Some(got) = parse_hex(submitted) else {
        return Verdict::from_score(
            0.0,
            vec![item(
                "answer",
                "could not parse the answer as hexadecimal bytes (e.g. `7E 41 7E`)",
            )],
        );
    };
    if got == expected {
        return Verdict::from_score(1.0, vec![item("answer", "correct")]);
    }
    let first = got
        .iter()
        .zip(expected)
        .position(|(a, b)| a != b)
        .unwrap_or(got.len().min(expected.len()));
    let detail = if first < got.len().min(expected.len()) {
        format!("The byte at offset {first} is wrong.")
    } else if got.len() < expected.len() {
        format!("The answer is too short: it ends at offset {first}.")
    } else {
        format!("The answer is too long: unexpected byte at offset {first}.")
    };
    Verdict::from_score(0.0, vec![item(format!("byte {first}"), wrong_comment(q, &detail))])
}

pub fn grade_short(q: &ShortAnswerQuestion, submitted: &str) -> Verdict {
    match &q.grader {
        Grader::ExactText { expected } => {
            if collapse_ws(submitted) == collapse_ws(expected) {
                Verdict::from_score(1.0, vec![item("answer", "correct")])
            } else {
                Verdict::from_score(0.0, vec![item("answer", wrong_comment(q, "Incorrect answer."))])
            }
        }
        Grader::Integer { expected } => match parse_int(submitted) {
            None => Verdict::from_score(
                0.0,
                vec![item("answer", "could not parse the answer as an integer (decimal or 0x-hex)")],
            ),
            Some(v) if v == i128::from(*expected) => {
                Verdict::from_score(1.0, vec![item("answer", "correct")])
            }
            Some(_) => Verdict::from_score(0.0, vec![item("answer", wrong_comment(q, "Incorrect value."))]),
        },
        Grader::HexBytes { expected } => {
            grade_hex(q, &parse_hex(expected).unwrap_or_default(), submitted)
        }
        Grader::Stuffing { payload } => {
            let payload = parse_hex(payload).unwrap_or_default();
            match codec::stuff(&payload) {
                Ok(frame) => grade_hex(q, frame.as_bytes(), submitted),
                Err(e) => Verdict::from_score(0.0, vec![item("answer", e.to_string())]),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMaskQuestion {
    pub id: String,
    pub prompt: String,
    /// pcap path relative to the bank directory.
    pub capture: String,
    /// 0-based packet index within the capture.
    pub packet: usize,
    pub masked: Vec<String>,
    /// Per-field explanations shown when that field is answered wrongly.
    #[serde(default)]
    pub comments: BTreeMap<String, String>,
    #[serde(default)]
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReorderQuestion {
    pub id: String,
    pub prompt: String,
    pub capture: String,
    /// Capture packet indices in their true chronological order.
    pub true_order: Vec<usize>,
    #[serde(default)]
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExerciseDef {
    Mcq(McqQuestion),
    Short(ShortAnswerQuestion),
    TraceMask(TraceMaskQuestion),
    TraceReorder(ReorderQuestion),
}

impl ExerciseDef {
    pub fn id(&self) -> &str {
        match self {
            ExerciseDef::Mcq(q) => &q.id,
            ExerciseDef::Short(q) => &q.id,
            ExerciseDef::TraceMask(q) => &q.id,
            ExerciseDef::TraceReorder(q) => &q.id,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ExerciseDef::Mcq(_) => "mcq",
            ExerciseDef::Short(_) => "short",
            ExerciseDef::TraceMask(_) => "trace_mask",
            ExerciseDef::TraceReorder(_) => "trace_reorder",
        }
    }

    pub fn prompt(&self) -> &str {
        match self {
            ExerciseDef::Mcq(q) => &q.prompt,
            ExerciseDef::Short(q) => &q.prompt,
            ExerciseDef::TraceMask(q) => &q.prompt,
            ExerciseDef::TraceReorder(q) => &q.prompt,
        }
    }

    /// Whether instances depend on a seed.
    pub fn is_randomized(&self) -> bool {
        matches!(self, ExerciseDef::Mcq(_) | ExerciseDef::TraceReorder(_))
    }
}

/// An exercise with its capture (if any) loaded.
#[derive(Debug, Clone)]
pub struct Exercise {
    pub def: ExerciseDef,
    pub capture: Option<Capture>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReorderInstance {
    pub question_id: String,
    /// Position `i` of the display shows this capture packet index.
    pub displayed: Vec<usize>,
}

/// Shuffles the packets; for more than one packet the display never equals
/// the true order.
pub fn instantiate_reorder(q: &ReorderQuestion, seed: u64) -> ReorderInstance {
    let mut rng = SplitMix64::new(seed);
    let mut displayed = q.true_order.clone();
    if displayed.len() > 1 {
        loop {
            rng.shuffle(&mut displayed);
            if displayed != q.true_order {
                break;
            }
        }
    }
    ReorderInstance {
        question_id: q.id.clone(),
        displayed,
    }
}

/// `submitted[i]` is the display index the student puts at position `i`.
pub fn grade_reorder(
    q: &ReorderQuestion,
    inst: &ReorderInstance,
    submitted: &[usize],
) -> Result<Verdict, ExerciseError> {
    let n = inst.displayed.len();
    let distinct: BTreeSet<usize> = submitted.iter().copied().collect();
    if submitted.len() != n || distinct.len() != n || submitted.iter().any(|&i| i >= n) {
        return Err(ExerciseError::Input(format!(
            "submission must be a permutation of 0..{n}"
        )));
    }
    let placed: Vec<usize> = submitted.iter().map(|&i| inst.displayed[i]).collect();
    let right = placed
        .iter()
        .zip(&q.true_order)
        .filter(|(a, b)| a == b)
        .count();
    let mut feedback = Vec::new();
    if let Some(pos) = placed.iter().zip(&q.true_order).position(|(a, b)| a != b) {
        feedback.push(item(
            format!("position {}", pos + 1),
            format!(
                "position {} is wrong: look at the flags and the sequence/acknowledgment numbers \
                 to find which packet must come at this point of the exchange.",
                pos + 1
            ),
        ));
    }
    let v = Verdict::from_score(right as f64 / n.max(1) as f64, feedback);
    Ok(if q.strict { v.strict() } else { v })
}

/// Student-facing view of a trace-mask question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RenderedTrace {
    pub tree: String,
    pub fields: Vec<RenderedField>,
    pub hex: String,
    pub masked: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RenderedField {
    pub path: String,
    pub display: String,
    pub byte_offset: usize,
    pub bit_offset: u8,
    pub bit_width: usize,
    pub masked: bool,
}

pub fn render_tree_fields(tree: &dissect::PacketTree) -> Vec<RenderedField> {
    tree.flatten()
        .into_iter()
        .map(|(path, f, hidden)| RenderedField {
            path,
            display: if hidden {
                dissect::MASK.to_string()
            } else {
                f.display.clone()
            },
            byte_offset: f.byte_offset,
            bit_offset: f.bit_offset,
            bit_width: f.bit_width,
            masked: hidden,
        })
        .collect()
}

fn trace_packet<'a>(ex: &'a Exercise, id: &str, index: usize) -> Result<(&'a [u8], LinkType), ExerciseError> {
    let cap = ex
        .capture
        .as_ref()
        .ok_or_else(|| config_err(id, "capture not loaded"))?;
    let pkt = cap
        .packets
        .get(index)
        .ok_or_else(|| config_err(id, format!("capture has no packet {index}")))?;
    Ok((&pkt.data, cap.link_type))
}

pub fn render_trace_mask(q: &TraceMaskQuestion, ex: &Exercise) -> Result<RenderedTrace, ExerciseError> {
    if q.masked.is_empty() {
        return Err(config_err(&q.id, "a mask question must mask at least one field"));
    }
    let (data, link) = trace_packet(ex, &q.id, q.packet)?;
    let tree = mask_fields(&dissect_packet(data, link), &q.masked)?;
    Ok(RenderedTrace {
        tree: tree.render(),
        fields: render_tree_fields(&tree),
        hex: hex_dump(data, Some(&tree.masked_bytes())),
        masked: q.masked.clone(),
    })
}

pub fn grade_trace_mask(
    q: &TraceMaskQuestion,
    ex: &Exercise,
    answers: &BTreeMap<String, String>,
) -> Result<Verdict, ExerciseError> {
    let (data, link) = trace_packet(ex, &q.id, q.packet)?;
    let tree = dissect_packet(data, link);
    let mut right = 0usize;
    let mut feedback = Vec::new();
    for path in &q.masked {
        let field = tree
            .field(path)
            .ok_or_else(|| DissectError::Path(path.clone()))?;
        let hint = q.comments.get(path).cloned();
        let with_hint = |msg: &str| match &hint {
            Some(h) => format!("{msg} {h}"),
            None => msg.to_string(),
        };
        let Some(submitted) = answers.get(path) else {
            feedback.push(item(path, with_hint("unanswered.")));
            continue;
        };
        let ok = match (field.as_u64(), parse_int(submitted)) {
            (Some(expected), Some(got)) => {
                if i128::from(expected) == got {
                    true
                } else {
                    let msg = if (i128::from(expected) - got).abs() == 1 {
                        "incorrect, but off by one."
                    } else {
                        "incorrect value."
                    };
                    feedback.push(item(path, with_hint(msg)));
                    continue;
                }
            }
            (_, _) => match (&field.value, parse_hex(submitted)) {
                (dissect::FieldValue::Bytes(b), Some(got)) => &got == b,
                _ => {
                    feedback.push(item(
                        path,
                        with_hint("could not parse the value (use decimal or 0x-hex)."),
                    ));
                    continue;
                }
            },
        };
        if ok {
            right += 1;
        } else {
            feedback.push(item(path, with_hint("incorrect value.")));
        }
    }
    let v = Verdict::from_score(right as f64 / q.masked.len().max(1) as f64, feedback);
    Ok(if q.strict { v.strict() } else { v })
}

/// A student's answer, in the shape matching the exercise type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Submission {
    Choice { choice: usize },
    Text { text: String },
    Fields { fields: BTreeMap<String, String> },
    Order { order: Vec<usize> },
}

/// Per-exercise randomization the student saw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Instance {
    Mcq(McqInstance),
    Short,
    TraceMask,
    TraceReorder(ReorderInstance),
}

#[derive(Debug, Clone, Default)]
pub struct Bank {
    dir: PathBuf,
    exercises: BTreeMap<String, Exercise>,
}

impl Bank {
    /// Loads every `*.json` file in `dir` (sorted by file name).
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, ExerciseError> {
        let dir = dir.as_ref().to_path_buf();
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| ExerciseError::Io { path, source }
        };
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(io(&dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let mut bank = Bank {
            dir: dir.clone(),
            exercises: BTreeMap::new(),
        };
        for path in files {
            let text = std::fs::read_to_string(&path).map_err(io(&path))?;
            let def: ExerciseDef = serde_json::from_str(&text).map_err(|source| ExerciseError::Parse {
                path: path.clone(),
                source,
            })?;
            bank.insert(def)?;
        }
        Ok(bank)
    }

    /// Adds an exercise, loading and checking its capture if it has one.
    pub fn insert(&mut self, def: ExerciseDef) -> Result<(), ExerciseError> {
        let id = def.id().to_string();
        if self.exercises.contains_key(&id) {
            return Err(config_err(&id, "duplicate exercise id"));
        }
        let capture = match &def {
            ExerciseDef::TraceMask(q) => Some(self.load_capture(&q.id, &q.capture)?),
            ExerciseDef::TraceReorder(q) => Some(self.load_capture(&q.id, &q.capture)?),
            _ => None,
        };
        let ex = Exercise { def, capture };
        validate(&ex)?;
        self.exercises.insert(id, ex);
        Ok(())
    }

    pub fn insert_with_capture(&mut self, def: ExerciseDef, capture: Capture) -> Result<(), ExerciseError> {
        let id = def.id().to_string();
        let ex = Exercise {
            def,
            capture: Some(capture),
        };
        validate(&ex)?;
        self.exercises.insert(id, ex);
        Ok(())
    }

    fn load_capture(&self, id: &str, rel: &str) -> Result<Capture, ExerciseError> {
        let path = self.dir.join(rel);
        let bytes = std::fs::read(&path).map_err(|source| ExerciseError::Io {
            path: path.clone(),
            source,
        })?;
        dissect::read_pcap(&bytes).map_err(|e| config_err(id, format!("{}: {e}", path.display())))
    }

    pub fn get(&self, id: &str) -> Result<&Exercise, ExerciseError> {
        self.exercises
            .get(id)
            .ok_or_else(|| ExerciseError::NotFound(id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Exercise> {
        self.exercises.values()
    }

    pub fn len(&self) -> usize {
        self.exercises.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exercises.is_empty()
    }
}

fn validate(ex: &Exercise) -> Result<(), ExerciseError> {
    match &ex.def {
        ExerciseDef::Mcq(q) => q.validate(),
        ExerciseDef::Short(q) => q.validate(),
        ExerciseDef::TraceMask(q) => render_trace_mask(q, ex).map(|_| ()),
        ExerciseDef::TraceReorder(q) => {
            let cap = ex.capture.as_ref().map_or(0, |c| c.packets.len());
            let distinct: BTreeSet<_> = q.true_order.iter().collect();
            if distinct.len() != q.true_order.len() || q.true_order.iter().any(|&i| i >= cap) {
                return Err(config_err(&q.id, "true_order must be distinct capture packet indices"));
            }
            if q.true_order.is_empty() {
                return Err(config_err(&q.id, "true_order is empty"));
            }
            Ok(())
        }
    }
}

impl Exercise {
    pub fn instantiate(&self, seed: u64) -> Result<Instance, ExerciseError> {
        Ok(match &self.def {
            ExerciseDef::Mcq(q) => Instance::Mcq(instantiate_mcq(q, seed)?),
            ExerciseDef::Short(_) => Instance::Short,
            ExerciseDef::TraceMask(_) => Instance::TraceMask,
            ExerciseDef::TraceReorder(q) => Instance::TraceReorder(instantiate_reorder(q, seed)),
        })
    }

    /// Student-facing rendering of an instance; contains no answer keys.
    pub fn render(&self, inst: &Instance) -> Result<serde_json::Value, ExerciseError> {
        use serde_json::json;
        let base = |extra: serde_json::Value| {
            let mut v = json!({
                "id": self.def.id(),
                "type": self.def.kind(),
                "prompt": self.def.prompt(),
            });
            if let (Some(obj), serde_json::Value::Object(more)) = (v.as_object_mut(), extra) {
                obj.extend(more);
            }
            v
        };
        match (&self.def, inst) {
            (ExerciseDef::Mcq(q), Instance::Mcq(i)) => {
                let answers: Vec<_> = i
                    .displayed
                    .iter()
                    .enumerate()
                    .map(|(idx, r)| {
                        let pool = if r.correct { &q.correct } else { &q.incorrect };
                        json!({ "index": idx, "text": pool[r.index].text })
                    })
                    .collect();
                Ok(base(json!({ "answers": answers })))
            }
            (ExerciseDef::Short(_), Instance::Short) => Ok(base(json!({}))),
            (ExerciseDef::TraceMask(q), Instance::TraceMask) => {
                let r = render_trace_mask(q, self)?;
                Ok(base(json!({ "packet": q.packet, "trace": r })))
            }
            (ExerciseDef::TraceReorder(q), Instance::TraceReorder(i)) => {
                let mut packets = Vec::new();
                for (pos, &idx) in i.displayed.iter().enumerate() {
                    let (data, link) = trace_packet(self, &q.id, idx)?;
                    let tree = dissect_packet(data, link);
                    packets.push(json!({
                        "index": pos,
                        "summary": packet_summary(&tree),
                        "tree": tree.render(),
                        "fields": render_tree_fields(&tree),
                        "hex": hex_dump(data, None),
                    }));
                }
                Ok(base(json!({ "packets": packets })))
            }
            _ => Err(config_err(self.def.id(), "instance does not match exercise type")),
        }
    }

    pub fn grade(&self, inst: &Instance, sub: &Submission) -> Result<Verdict, ExerciseError> {
        match (&self.def, inst, sub) {
            (ExerciseDef::Mcq(q), Instance::Mcq(i), Submission::Choice { choice }) => {
                grade_mcq(q, i, *choice)
            }
            (ExerciseDef::Short(q), Instance::Short, Submission::Text { text }) => {
                Ok(grade_short(q, text))
            }
            (ExerciseDef::TraceMask(q), Instance::TraceMask, Submission::Fields { fields }) => {
                grade_trace_mask(q, self, fields)
            }
            (ExerciseDef::TraceReorder(q), Instance::TraceReorder(i), Submission::Order { order }) => {
                grade_reorder(q, i, order)
            }
            _ => Err(ExerciseError::Input(format!(
                "submission does not match a `{}` exercise",
                self.def.kind()
            ))),
        }
    }
}

/// One-line description used in reorder boards: endpoints and protocol.
pub fn packet_summary(tree: &dissect::PacketTree) -> String {
    let get = |p: &str| tree.field(p).map(|f| f.display.clone());
    match (get("ipv4.src"), get("ipv4.dst")) {
        (Some(src), Some(dst)) => {
            if tree.layer("tcp").is_some() {
                format!(
                    "{src}:{} > {dst}:{} TCP",
                    get("tcp.src_port").unwrap_or_default(),
                    get("tcp.dst_port").unwrap_or_default()
                )
            } else if tree.layer("udp").is_some() {
                format!(
                    "{src}:{} > {dst}:{} UDP",
                    get("udp.src_port").unwrap_or_default(),
                    get("udp.dst_port").unwrap_or_default()
                )
            } else {
                format!("{src} > {dst}")
            }
        }
        _ => format!("{} bytes", tree.len),
    }
}
