//! Multiple-choice benchmark records: loading, validation, canonical
//! serialization and subject grouping.
//!
//! The canonical on-disk form is one JSON object per line:
//!
//! ```text
//! {"id":"q-001","subject":"law","question":"...","options":["...","..."],"answer":"B"}
//! ```
//!
//! The line reader also accepts the upstream MMLU-Pro field names
//! (`question_id`, `category`, `answer_index`) and MMLU's `choices` with an
//! integer `answer`; loading normalizes them to the canonical form.
//! Delimited tables are read through an explicit [`ColumnMapping`].

use std::collections::HashSet;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::metrics::{MAX_OPTIONS, MIN_OPTIONS};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: record {id:?} invalid: {reason}")]
    Validation {
        line: usize,
        id: String,
        reason: String,
    },
    #[error("dataset contains no records")]
    EmptyDataset,
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// Letter for a zero-based option index (`0 -> 'A'`).
pub fn option_letter(index: usize) -> char {
    debug_assert!(index < MAX_OPTIONS);
    (b'A' + index as u8) as char
}

/// Zero-based index for an option letter, if it is a capital A..Z.
pub fn letter_index(c: char) -> Option<usize> {
    c.is_ascii_uppercase().then(|| (c as u8 - b'A') as usize)
}

/// One benchmark item. Holds the gold label; prompt builders only ever see a
/// [`QuestionView`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub subject: String,
    pub stem: String,
    pub options: Vec<String>,
    pub gold: usize,
}

/// The gold-free projection of a [`Question`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuestionView<'a> {
    pub id: &'a str,
    pub subject: &'a str,
    pub stem: &'a str,
    pub options: &'a [String],
}

impl QuestionView<'_> {
    pub fn k(&self) -> usize {
        self.options.len()
    }
}

impl Question {
    pub fn k(&self) -> usize {
        self.options.len()
    }

    pub fn view(&self) -> QuestionView<'_> {
        QuestionView {
            id: &self.id,
            subject: &self.subject,
            stem: &self.stem,
            options: &self.options,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.subject.trim().is_empty() {
            return Err("empty subject".into());
        }
        if self.stem.trim().is_empty() {
            return Err("empty question".into());
        }
        let k = self.k();
        if !(MIN_OPTIONS..=MAX_OPTIONS).contains(&k) {
            return Err(format!("{k} options, expected {MIN_OPTIONS}..={MAX_OPTIONS}"));
        }
        if let Some(i) = self.options.iter().position(|o| o.trim().is_empty()) {
            return Err(format!("option {} is empty", option_letter(i)));
        }
        if self.gold >= k {
            return Err(format!("answer index {} out of range for {k} options", self.gold));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct CanonicalRecord<'a> {
    id: &'a str,
    subject: &'a str,
    question: &'a str,
    options: &'a [String],
    answer: String,
}

/// A validated, immutable collection of questions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    questions: Vec<Question>,
}

impl Dataset {
    /// Validates every question and id uniqueness.
    pub fn new(questions: Vec<Question>) -> Result<Self> {
        if questions.is_empty() {
            return Err(DatasetError::EmptyDataset);
        }
        let mut seen = HashSet::new();
        for (i, q) in questions.iter().enumerate() {
            q.validate().map_err(|reason| DatasetError::Validation {
                line: i + 1,
                id: q.id.clone(),
                reason,
            })?;
            if !seen.insert(q.id.as_str()) {
                return Err(DatasetError::Validation {
                    line: i + 1,
                    id: q.id.clone(),
                    reason: "duplicate id".into(),
                });
            }
        }
        Ok(Self { questions })
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }

    /// Subjects in first-appearance order.
    pub fn subjects(&self) -> Vec<&str> {
        subject_partition(self).keys().copied().collect()
    }

    /// Most common option count; the smaller count wins ties.
    pub fn k_mode(&self) -> usize {
        let mut counts = [0usize; MAX_OPTIONS + 1];
        for q in &self.questions {
            counts[q.k()] += 1;
        }
        let mut best = MIN_OPTIONS;
        for k in MIN_OPTIONS..=MAX_OPTIONS {
            if counts[k] > counts[best] {
                best = k;
            }
        }
        best
    }

    /// Writes the canonical line format.
    pub fn write_canonical<W: Write>(&self, mut w: W) -> io::Result<()> {
        for q in &self.questions {
            let rec = CanonicalRecord {
                id: &q.id,
                subject: &q.subject,
                question: &q.stem,
                options: &q.options,
                answer: option_letter(q.gold).to_string(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_canonical_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_canonical(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_canonical_string().as_bytes()))
    }
}

/// Groups questions by subject, in first-appearance order.
pub fn subject_partition(d: &Dataset) -> IndexMap<&str, Vec<&Question>> {
    let mut groups: IndexMap<&str, Vec<&Question>> = IndexMap::new();
    for q in &d.questions {
        groups.entry(q.subject.as_str()).or_default().push(q);
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetFormat {
    /// One JSON record per line.
    CanonicalLines,
    /// Comma- (or otherwise) delimited table read through a column mapping.
    DelimitedTable(ColumnMapping),
}

/// How options are laid out in a delimited table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OptionColumns {
    /// One column per option, in order. Blank trailing cells are dropped.
    List(Vec<String>),
    /// A single column holding a JSON array of strings.
    Json(String),
}

/// Column names for delimited-table import. A name of the form `#3` selects
/// the zero-based column index instead of a header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMapping {
    /// `None` assigns `row-<n>` ids.
    pub id: Option<String>,
    pub subject: String,
    pub question: String,
    pub options: OptionColumns,
    /// Letter (`"C"`) or zero-based index (`"2"`).
    pub answer: String,
    pub delimiter: u8,
    pub has_headers: bool,
}

impl ColumnMapping {
    /// Upstream MMLU-Pro export: `question_id, question, options, answer, category`.
    pub fn mmlu_pro() -> Self {
        Self {
            id: Some("question_id".into()),
            subject: "category".into(),
            question: "question".into(),
            options: OptionColumns::Json("options".into()),
            answer: "answer".into(),
            delimiter: b',',
            has_headers: true,
        }
    }

    /// MMLU export: `question, subject, choices, answer` with integer answers.
    pub fn mmlu() -> Self {
        Self {
            id: None,
            subject: "subject".into(),
            question: "question".into(),
            options: OptionColumns::Json("choices".into()),
            answer: "answer".into(),
            delimiter: b',',
            has_headers: true,
        }
    }
}

fn parse_answer(raw: &str, k: usize) -> std::result::Result<usize, String> {
    let s = raw.trim();
    if let Ok(i) = s.parse::<usize>() {
        return Ok(i);
    }
    let mut chars = s.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii_alphabetic() => Ok(letter_index(c.to_ascii_uppercase()).unwrap()),
        _ => Err(format!("answer {raw:?} is neither a letter nor an index (K={k})")),
    }
}

fn json_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn record_from_json(line: usize, v: &Value) -> Result<Question> {
    let parse = |message: String| DatasetError::Parse { line, message };
    let obj = v.as_object().ok_or_else(|| parse("expected a JSON object".into()))?;
    let field = |names: &[&str]| names.iter().find_map(|n| obj.get(*n));
    let id = field(&["id", "question_id"])
        .and_then(json_string)
        .ok_or_else(|| parse("missing id".into()))?;
    let subject = field(&["subject", "category"])
        .and_then(Value::as_str)
        .ok_or_else(|| parse("missing subject".into()))?
        .to_string();
    let stem = field(&["question"])
        .and_then(Value::as_str)
        .ok_or_else(|| parse("missing question".into()))?
        .to_string();
    let options = field(&["options", "choices"])
        .and_then(Value::as_array)
        .ok_or_else(|| parse("missing options array".into()))?
        .iter()
        .map(|o| json_string(o).ok_or_else(|| parse("option is not a string".into())))
        .collect::<Result<Vec<_>>>()?;
    let gold = match (obj.get("answer"), obj.get("answer_index")) {
        (Some(Value::String(s)), _) => parse_answer(s, options.len()).map_err(parse)?,
        (Some(Value::Number(n)), _) | (None, Some(Value::Number(n))) => n
            .as_u64()
            .ok_or_else(|| parse(format!("bad answer index {n}")))? as usize,
        _ => return Err(parse("missing answer".into())),
    };
    Ok(Question {
        id,
        subject,
        stem,
        options,
        gold,
    })
}

/// Parses the line format. All-or-nothing: the first bad line fails the load.
pub fn parse_canonical_lines(text: &str) -> Result<Dataset> {
    let mut questions = Vec::new();
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(raw).map_err(|e| DatasetError::Parse {
            line,
            message: e.to_string(),
        })?;
        questions.push(record_from_json(line, &v)?);
        lines.push(line);
    }
    Dataset::new(questions).map_err(|e| remap_line(e, &lines))
}

/// `Dataset::new` reports positions; translate them to file lines.
fn remap_line(e: DatasetError, lines: &[usize]) -> DatasetError {
    match e {
        DatasetError::Validation { line, id, reason } => DatasetError::Validation {
            line: lines.get(line - 1).copied().unwrap_or(line),
            id,
            reason,
        },
        other => other,
    }
}

fn resolve_column(name: &str, headers: Option<&csv::StringRecord>) -> std::result::Result<usize, String> {
    if let Some(idx) = name.strip_prefix('#') {
        return idx.parse().map_err(|_| format!("bad column index {name:?}"));
    }
    headers
        .and_then(|h| h.iter().position(|c| c == name))
        .ok_or_else(|| format!("column {name:?} not found"))
}

pub fn parse_delimited(text: &str, mapping: &ColumnMapping) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(mapping.delimiter)
        .has_headers(mapping.has_headers)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header_err = |message: String| DatasetError::Parse { line: 1, message };
    let headers = if mapping.has_headers {
        Some(reader.headers().map_err(|e| header_err(e.to_string()))?.clone())
    } else {
        None
    };
    let col = |name: &str| resolve_column(name, headers.as_ref()).map_err(header_err);
    let id_col = mapping.id.as_deref().map(col).transpose()?;
    let subject_col = col(&mapping.subject)?;
    let question_col = col(&mapping.question)?;
    let answer_col = col(&mapping.answer)?;
    enum Opts {
        List(Vec<usize>),
        Json(usize),
    }
    let opts = match &mapping.options {
        OptionColumns::List(names) => Opts::List(names.iter().map(|n| col(n)).collect::<Result<_>>()?),
        OptionColumns::Json(name) => Opts::Json(col(name)?),
    };

    let mut questions = Vec::new();
    let mut lines = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let line = row + 1 + usize::from(mapping.has_headers);
        let rec = rec.map_err(|e| DatasetError::Parse {
            line,
            message: e.to_string(),
        })?;
        let cell = |i: usize| {
            rec.get(i).ok_or_else(|| DatasetError::Parse {
                line,
                message: format!("row has no column {i}"),
            })
        };
        let options: Vec<String> = match &opts {
            Opts::List(cols) => {
                let mut v = cols
                    .iter()
                    .map(|&i| cell(i).map(str::to_string))
                    .collect::<Result<Vec<_>>>()?;
                while v.last().is_some_and(|s| s.trim().is_empty()) {
                    v.pop();
                }
                v
            }
            Opts::Json(i) => serde_json::from_str(cell(*i)?).map_err(|e| DatasetError::Parse {
                line,
                message: format!("options column: {e}"),
            })?,
        };
        let gold = parse_answer(cell(answer_col)?, options.len())
            .map_err(|message| DatasetError::Parse { line, message })?;
        let id = match id_col {
            Some(i) => cell(i)?.to_string(),
            None => format!("row-{}", row + 1),
        };
        questions.push(Question {
            id,
            subject: cell(subject_col)?.to_string(),
            stem: cell(question_col)?.to_string(),
            options,
            gold,
        });
        lines.push(line);
    }
    Dataset::new(questions).map_err(|e| remap_line(e, &lines))
}

pub fn load_dataset(path: &Path, format: &DatasetFormat) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match format {
        DatasetFormat::CanonicalLines => parse_canonical_lines(&text),
        DatasetFormat::DelimitedTable(mapping) => parse_delimited(&text, mapping),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(id: &str, subject: &str, k: usize, gold: usize) -> Question {
        Question {
            id: id.into(),
            subject: subject.into(),
            stem: format!("stem {id}"),
            options: (0..k).map(|i| format!("opt {i}")).collect(),
            gold,
        }
    }

    #[test]
    fn canonical_line_shape() {
        let d = Dataset::new(vec![q("a", "law", 4, 2)]).unwrap();
        assert_eq!(
            d.to_canonical_string(),
            "{\"id\":\"a\",\"subject\":\"law\",\"question\":\"stem a\",\"options\":[\"opt 0\",\"opt 1\",\"opt 2\",\"opt 3\"],\"answer\":\"C\"}\n"
        );
    }

    #[test]
    fn duplicate_id_rejected_with_line() {
        let text = "{\"id\":\"a\",\"subject\":\"s\",\"question\":\"x\",\"options\":[\"1\",\"2\"],\"answer\":\"A\"}\n\n\
                    {\"id\":\"a\",\"subject\":\"s\",\"question\":\"y\",\"options\":[\"1\",\"2\"],\"answer\":\"B\"}\n";
        match parse_canonical_lines(text) {
            Err(DatasetError::Validation { line, id, reason }) => {
                assert_eq!(line, 3);
                assert_eq!(id, "a");
                assert!(reason.contains("duplicate"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation_failures() {
        let bad = [
            r#"{"id":"a","subject":"","question":"x","options":["1","2"],"answer":"A"}"#,
            r#"{"id":"a","subject":"s","question":"x","options":["1"],"answer":"A"}"#,
            r#"{"id":"a","subject":"s","question":"x","options":["1","2"],"answer":"C"}"#,
            r#"{"id":"a","subject":"s","question":" ","options":["1","2"],"answer":"A"}"#,
            r#"{"id":"a","subject":"s","question":"x","options":["1",""],"answer":"A"}"#,
        ];
        for line in bad {
            assert!(matches!(parse_canonical_lines(line), Err(DatasetError::Validation { line: 1, .. })), "{line}");
        }
        assert!(matches!(parse_canonical_lines("{not json"), Err(DatasetError::Parse { line: 1, .. })));
        assert!(matches!(parse_canonical_lines("\n\n"), Err(DatasetError::EmptyDataset)));
    }

    #[test]
    fn upstream_field_names() {
        let line = r#"{"question_id":70,"question":"q?","options":["a","b","c"],"answer":"B","answer_index":1,"cot_content":"","category":"law","src":"x"}"#;
        let d = parse_canonical_lines(line).unwrap();
        assert_eq!(d.questions()[0].id, "70");
        assert_eq!(d.questions()[0].subject, "law");
        assert_eq!(d.questions()[0].gold, 1);
        let mmlu = r#"{"id":"m1","question":"q?","subject":"anatomy","choices":["a","b","c","d"],"answer":3}"#;
        assert_eq!(parse_canonical_lines(mmlu).unwrap().questions()[0].gold, 3);
    }

    #[test]
    fn delimited_import() {
        let text = "question_id,question,options,answer,category\n\
                    1,What?,\"[\"\"x\"\",\"\"y\"\",\"\"z\"\"]\",C,math\n\
                    2,Why?,\"[\"\"x\"\",\"\"y\"\"]\",A,law\n";
        let d = parse_delimited(text, &ColumnMapping::mmlu_pro()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.questions()[0].gold, 2);
        assert_eq!(d.questions()[1].subject, "law");

        let mapping = ColumnMapping {
            id: None,
            subject: "#5".into(),
            question: "#0".into(),
            options: OptionColumns::List(vec!["#1".into(), "#2".into(), "#3".into()]),
            answer: "#4".into(),
            delimiter: b'\t',
            has_headers: false,
        };
        let d = parse_delimited("Q1\ta\tb\t\tB\tbio\nQ2\ta\tb\tc\t2\tbio\n", &mapping).unwrap();
        assert_eq!(d.questions()[0].k(), 2);
        assert_eq!(d.questions()[0].id, "row-1");
        assert_eq!(d.questions()[1].gold, 2);

        let bad = "question_id,question,options,answer,category\n1,What?,\"[\"\"x\"\"]\",A,math\n";
        assert!(matches!(parse_delimited(bad, &ColumnMapping::mmlu_pro()), Err(DatasetError::Validation { line: 2, .. })));
    }

    #[test]
    fn partition_and_mode() {
        let d = Dataset::new(vec![
            q("1", "bio", 10, 0),
            q("2", "law", 4, 1),
            q("3", "bio", 10, 2),
            q("4", "math", 10, 3),
        ])
        .unwrap();
        let p = subject_partition(&d);
        assert_eq!(p.keys().copied().collect::<Vec<_>>(), ["bio", "law", "math"]);
        assert_eq!(p["bio"].iter().map(|q| q.id.as_str()).collect::<Vec<_>>(), ["1", "3"]);
        assert_eq!(p.values().map(Vec::len).sum::<usize>(), 4);
        assert_eq!(d.k_mode(), 10);

        let single = Dataset::new(vec![q("1", "x", 4, 0), q("2", "x", 4, 0)]).unwrap();
        assert_eq!(subject_partition(&single).len(), 1);
    }

    #[test]
    fn benchmark_subject_sizes() {
        let sizes = [("biology", 717), ("law", 1101), ("math", 1351)];
        let mut qs = Vec::new();
        for (s, n) in sizes {
            for i in 0..n {
                qs.push(q(&format!("{s}-{i}"), s, 10, i % 10));
            }
        }
        let d = Dataset::new(qs).unwrap();
        let p = subject_partition(&d);
        assert_eq!(p["biology"].len(), 717);
        assert_eq!(p["law"].len(), 1101);
        assert_eq!(p["math"].len(), 1351);
    }

    fn question_strategy() -> impl Strategy<Value = Question> {
        (2usize..=26).prop_flat_map(|k| {
            (
                "[a-z]{1,6}",
                "[a-z ]{0,5}[a-z]",
                "\\PC{1,20}",
                proptest::collection::vec("[A-Za-z0-9 \"\\\\]{0,8}[a-z]", k),
                0..k,
            )
                .prop_map(|(id, subject, stem, options, gold)| Question { id, subject, stem, options, gold })
        })
    }

    proptest! {
        #[test]
        fn canonical_round_trip(qs in proptest::collection::vec(question_strategy(), 1..8)) {
            let mut seen = HashSet::new();
            let qs: Vec<Question> = qs.into_iter().filter(|q| seen.insert(q.id.clone()) && !q.stem.trim().is_empty()).collect();
            prop_assume!(!qs.is_empty());
            let d = Dataset::new(qs).unwrap();
            let text = d.to_canonical_string();
            let back = parse_canonical_lines(&text).unwrap();
            prop_assert_eq!(&back, &d);
            prop_assert_eq!(back.to_canonical_string(), text);
        }
    }
}
