use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassificationRecord {
    pub label: usize,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QaRecord {
    pub qid: String,
    pub question: String,
    pub answer: String,
    pub label: u8,
}

/// One question with its candidate answers, in file order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QaGroup {
    pub qid: String,
    pub question: String,
    pub candidates: Vec<String>,
    pub labels: Vec<u8>,
}

impl QaGroup {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

fn read_lines(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// `label<TAB>text` lines with 0-based integer labels. Blank lines are skipped.
pub fn parse_classification(
    path: &Path,
    content: &str,
    n_classes: Option<usize>,
) -> Result<Vec<ClassificationRecord>> {
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (label, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, line_no, "expected `label<TAB>text`"))?;
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("bad label `{label}`")))?;
        if let Some(n) = n_classes {
            if label >= n {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("label {label} outside 0..{n}"),
                ));
            }
        }
        out.push(ClassificationRecord {
            label,
            text: text.to_string(),
        });
    }
    Ok(out)
}

pub fn read_classification_tsv(
    path: impl AsRef<Path>,
    n_classes: Option<usize>,
) -> Result<Vec<ClassificationRecord>> {
    let path = path.as_ref();
    parse_classification(path, &read_lines(path)?, n_classes)
}

/// `qid<TAB>question<TAB>answer<TAB>label` lines with labels in {0, 1}.
pub fn parse_qa(path: &Path, content: &str) -> Result<Vec<QaRecord>> {
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 4 tab-separated columns, found {}", cols.len()),
            ));
        }
        let label = match cols[3].trim() {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("label must be 0 or 1, got `{other}`"),
                ))
            }
        };
        out.push(QaRecord {
            qid: cols[0].to_string(),
            question: cols[1].to_string(),
            answer: cols[2].to_string(),
            label,
        });
    }
    Ok(out)
}

/// Groups records by qid, preserving first-appearance order of questions
/// and file order of candidates.
pub fn group_qa(records: Vec<QaRecord>) -> Vec<QaGroup> {
    let mut groups: Vec<QaGroup> = Vec::new();
    let mut by_qid: HashMap<String, usize> = HashMap::new();
    for r in records {
        let idx = *by_qid.entry(r.qid.clone()).or_insert_with(|| {
            groups.push(QaGroup {
                qid: r.qid.clone(),
                question: r.question.clone(),
                candidates: Vec::new(),
                labels: Vec::new(),
            });
            groups.len() - 1
        });
        groups[idx].candidates.push(r.answer);
        groups[idx].labels.push(r.label);
    }
    groups
}

pub fn read_qa_tsv(path: impl AsRef<Path>) -> Result<Vec<QaGroup>> {
    let path = path.as_ref();
    Ok(group_qa(parse_qa(path, &read_lines(path)?)?))
}
