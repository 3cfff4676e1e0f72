//! Datasets, demonstration sampling, prompt rendering and response parsing.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::randomizer::{Label, LabelSpace};
use crate::rng::Stream;

/// Resampling attempts before the coverage constraint falls back to repair.
pub const COVERAGE_ATTEMPTS: usize = 100;

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("I/O error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {format} at record {row}: {message}")]
    Malformed { format: &'static str, row: usize, message: String },
    #[error("record {row} has no field {field:?}")]
    MissingField { row: usize, field: String },
    #[error("record {row} has label {label:?}, which is not in the label space {space:?}")]
    UnknownLabel { row: usize, label: String, space: Vec<String> },
    #[error("record {row} has empty text")]
    EmptyText { row: usize },
    #[error("dataset file {0} contains no records")]
    Empty(String),
    #[error("size error: {0}")]
    Size(String),
    #[error("constraint error: {0}")]
    Constraint(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("label {0} cannot be rendered by the template")]
    Unrenderable(usize),
    #[error("unparseable response {response:?}: {reason}")]
    Unparseable { response: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextExample {
    pub text: String,
    pub label: Label,
}

impl TextExample {
    pub fn new(text: impl Into<String>, label: Label) -> Self {
        TextExample { text: text.into(), label }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Pretrain,
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub task: String,
    pub space: LabelSpace,
    pub split: Split,
    pub examples: Vec<TextExample>,
}

impl Dataset {
    pub fn new(task: impl Into<String>, space: LabelSpace, split: Split, examples: Vec<TextExample>) -> Result<Self, DemoError> {
        for (row, ex) in examples.iter().enumerate() {
            if !space.contains(ex.label) {
                return Err(DemoError::UnknownLabel {
                    row,
                    label: ex.label.0.to_string(),
                    space: space.names().to_vec(),
                });
            }
            if ex.text.is_empty() {
                return Err(DemoError::EmptyText { row });
            }
        }
        Ok(Dataset { task: task.into(), space, split, examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.space.len()];
        for ex in &self.examples {
            counts[ex.label.0] += 1;
        }
        counts
    }

    /// Fraction of examples carrying label index 1.
    pub fn positive_rate(&self) -> f64 {
        if self.examples.is_empty() {
            return 0.0;
        }
        self.label_counts().get(1).copied().unwrap_or(0) as f64 / self.len() as f64
    }
}

/// Ordered demonstration examples, the prompt context of one query.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DemonstrationSet(pub Vec<TextExample>);

impl DemonstrationSet {
    pub fn new(examples: Vec<TextExample>) -> Self {
        DemonstrationSet(examples)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TextExample> {
        self.0.iter()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.0.iter().map(|e| e.label).collect()
    }

    /// Copy with the labels replaced in order.
    pub fn with_labels(&self, labels: &[Label]) -> Self {
        assert_eq!(labels.len(), self.0.len());
        DemonstrationSet(
            self.0
                .iter()
                .zip(labels)
                .map(|(e, &label)| TextExample { text: e.text.clone(), label })
                .collect(),
        )
    }

    /// Every label moved to the next label index (cyclically). For a binary
    /// space this inverts every label.
    pub fn flip_all(&self, space: &LabelSpace) -> Self {
        let m = space.len();
        let labels: Vec<Label> = self.0.iter().map(|e| Label((e.label.0 + 1) % m)).collect();
        self.with_labels(&labels)
    }

    pub fn covers(&self, space: &LabelSpace) -> bool {
        space.labels().all(|l| self.0.iter().any(|e| e.label == l))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Jsonl,
}

impl DataFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(DataFormat::Csv),
            "jsonl" | "ndjson" => Some(DataFormat::Jsonl),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub text_field: String,
    pub label_field: String,
}

impl Default for DatasetSchema {
    fn default() -> Self {
        DatasetSchema { text_field: "text".into(), label_field: "label".into() }
    }
}

fn resolve_label(space: &LabelSpace, row: usize, raw: &str) -> Result<Label, DemoError> {
    space.index_of(raw.trim()).ok_or_else(|| DemoError::UnknownLabel {
        row,
        label: raw.to_string(),
        space: space.names().to_vec(),
    })
}

fn checked_text(row: usize, text: String) -> Result<String, DemoError> {
    if text.trim().is_empty() {
        return Err(DemoError::EmptyText { row });
    }
    Ok(text)
}

/// Load a CSV (with header) or JSON Lines file. Labels are matched verbatim
/// against the label space names; JSON numbers and booleans are compared in
/// their textual form.
pub fn load_dataset(
    path: &Path,
    format: DataFormat,
    schema: &DatasetSchema,
    space: &LabelSpace,
    task: &str,
    split: Split,
) -> Result<Dataset, DemoError> {
    let io_err = |source| DemoError::Io { path: path.display().to_string(), source };
    let file = File::open(path).map_err(io_err)?;
    let mut examples = Vec::new();
    match format {
        DataFormat::Csv => {
            let mut reader = csv::Reader::from_reader(file);
            let headers = reader
                .headers()
                .map_err(|e| DemoError::Malformed { format: "csv", row: 0, message: e.to_string() })?
                .clone();
            let col = |field: &str| {
                headers
                    .iter()
                    .position(|h| h == field)
                    .ok_or_else(|| DemoError::MissingField { row: 0, field: field.to_string() })
            };
            let (text_col, label_col) = (col(&schema.text_field)?, col(&schema.label_field)?);
            for (row, record) in reader.records().enumerate() {
                let record = record.map_err(|e| DemoError::Malformed { format: "csv", row, message: e.to_string() })?;
                let get = |c: usize, field: &str| {
                    record
                        .get(c)
                        .ok_or_else(|| DemoError::MissingField { row, field: field.to_string() })
                };
                let text = checked_text(row, get(text_col, &schema.text_field)?.to_string())?;
                let label = resolve_label(space, row, get(label_col, &schema.label_field)?)?;
                examples.push(TextExample { text, label });
            }
        }
        DataFormat::Jsonl => {
            let reader = BufReader::new(file);
            let mut row = 0;
            for line in reader.lines() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let value: serde_json::Value = serde_json::from_str(&line)
                    .map_err(|e| DemoError::Malformed { format: "jsonl", row, message: e.to_string() })?;
                let field = |name: &str| {
                    value
                        .get(name)
                        .filter(|v| !v.is_null())
                        .ok_or_else(|| DemoError::MissingField { row, field: name.to_string() })
                };
                let text = match field(&schema.text_field)? {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                let raw_label = match field(&schema.label_field)? {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                let text = checked_text(row, text)?;
                let label = resolve_label(space, row, &raw_label)?;
                examples.push(TextExample { text, label });
                row += 1;
            }
        }
    }
    if examples.is_empty() {
        return Err(DemoError::Empty(path.display().to_string()));
    }
    Ok(Dataset { task: task.to_string(), space: space.clone(), split, examples })
}

/// Demonstration constraints applied when sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraints {
    /// Every label of the space must appear among the demonstrations.
    pub cover_all_labels: bool,
    /// Demonstrations may only be drawn from this split.
    pub required_split: Option<Split>,
}

impl Default for Constraints {
    fn default() -> Self {
        Constraints { cover_all_labels: true, required_split: Some(Split::Train) }
    }
}

impl Constraints {
    pub fn none() -> Self {
        Constraints { cover_all_labels: false, required_split: None }
    }
}

/// Uniform sample of `n` examples without replacement, in sampled order.
///
/// With label coverage enabled the draw is repeated up to
/// [`COVERAGE_ATTEMPTS`] times; if coverage still fails, each missing label is
/// swapped in over a position whose label occurs more than once.
pub fn subsample_demos(
    dataset: &Dataset,
    n: usize,
    rng: &mut Stream,
    constraints: Constraints,
) -> Result<DemonstrationSet, DemoError> {
    if let Some(split) = constraints.required_split {
        if dataset.split != split {
            return Err(DemoError::Constraint(format!(
                "demonstrations must come from the {split:?} split, dataset is {:?}",
                dataset.split
            )));
        }
    }
    if n > dataset.len() {
        return Err(DemoError::Size(format!("cannot draw {n} demonstrations from {} examples", dataset.len())));
    }
    let m = dataset.space.len();
    let pick = |rng: &mut Stream| -> Vec<usize> { index::sample(rng, dataset.len(), n).into_vec() };
    if !constraints.cover_all_labels || n == 0 {
        return Ok(materialise(dataset, &pick(rng)));
    }
    if n < m {
        return Err(DemoError::Constraint(format!("{n} demonstrations cannot cover {m} labels")));
    }
    let counts = dataset.label_counts();
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(DemoError::Constraint(format!(
            "label {:?} never occurs in the dataset",
            dataset.space.names()[missing]
        )));
    }

    let mut chosen = Vec::new();
    for _ in 0..COVERAGE_ATTEMPTS {
        chosen = pick(rng);
        if covers(dataset, &chosen) {
            return Ok(materialise(dataset, &chosen));
        }
    }
    repair_coverage(dataset, &mut chosen, rng);
    Ok(materialise(dataset, &chosen))
}

fn covers(dataset: &Dataset, chosen: &[usize]) -> bool {
    let mut seen = vec![false; dataset.space.len()];
    for &i in chosen {
        seen[dataset.examples[i].label.0] = true;
    }
    seen.into_iter().all(|s| s)
}

fn repair_coverage(dataset: &Dataset, chosen: &mut [usize], rng: &mut Stream) {
    for label in dataset.space.labels() {
        let mut counts = vec![0usize; dataset.space.len()];
        for &i in chosen.iter() {
            counts[dataset.examples[i].label.0] += 1;
        }
        if counts[label.0] > 0 {
            continue;
        }
        let candidates: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.examples[i].label == label && !chosen.contains(&i))
            .collect();
        let replaceable: Vec<usize> = (0..chosen.len())
            .filter(|&p| counts[dataset.examples[chosen[p]].label.0] > 1)
            .collect();
        // Feasibility (n >= M, every label present) was checked by the caller.
        let incoming = *candidates.choose(rng).expect("label present in dataset");
        let slot = *replaceable.choose(rng).expect("n >= M leaves a duplicated label");
        chosen[slot] = incoming;
    }
}

fn materialise(dataset: &Dataset, chosen: &[usize]) -> DemonstrationSet {
    DemonstrationSet(chosen.iter().map(|&i| dataset.examples[i].clone()).collect())
}

/// Disjoint size-`n` blocks of a shuffled dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartitionPlan {
    pub block_size: usize,
    pub blocks: Vec<Vec<usize>>,
}

impl PartitionPlan {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Block serving query `i`: `i mod l`. The flag is set when the modulo
    /// wrapped, i.e. a block serves more than one query.
    pub fn block_for_query(&self, i: usize) -> (usize, bool) {
        (i % self.blocks.len(), i >= self.blocks.len())
    }

    /// Block indices for `r` queries and whether any block was reused.
    pub fn assignment(&self, r: usize) -> (Vec<usize>, bool) {
        let blocks = (0..r).map(|i| self.block_for_query(i).0).collect();
        (blocks, r > self.blocks.len())
    }

    pub fn block(&self, dataset: &Dataset, b: usize) -> DemonstrationSet {
        materialise(dataset, &self.blocks[b])
    }
}

/// Shuffle once and cut into `⌊|D|/n⌋` blocks of exactly `n`; the remainder
/// is left unused.
pub fn partition(dataset: &Dataset, n: usize, rng: &mut Stream) -> Result<PartitionPlan, DemoError> {
    if n == 0 {
        return Err(DemoError::Size("block size must be positive".into()));
    }
    if dataset.len() < n {
        return Err(DemoError::Size(format!("dataset of {} cannot fill a block of {n}", dataset.len())));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(rng);
    let blocks = order.chunks_exact(n).map(<[usize]>::to_vec).collect();
    Ok(PartitionPlan { block_size: n, blocks })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Query {
    /// Position of the query in the source dataset.
    pub index: usize,
    pub text: String,
    pub label: Label,
}

/// Largest-remainder apportionment of `total` over `weights`.
pub(crate) fn apportion(weights: &[usize], total: usize) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut quotas: Vec<usize> = weights.iter().map(|&w| w * total / sum).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // Remainders compared exactly as (w * total) mod sum; ties go to the lower index.
    order.sort_by(|&a, &b| {
        let ra = weights[a] * total % sum;
        let rb = weights[b] * total % sum;
        rb.cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total - assigned) {
        quotas[i] += 1;
    }
    quotas
}

/// Sample `r` queries without replacement whose label counts match the
/// dataset's proportions up to rounding.
pub fn stratified_query_sample(dataset: &Dataset, r: usize, rng: &mut Stream) -> Result<Vec<Query>, DemoError> {
    if r > dataset.len() {
        return Err(DemoError::Size(format!("cannot draw {r} queries from {} examples", dataset.len())));
    }
    let counts = dataset.label_counts();
    let quotas = apportion(&counts, r);
    let mut picked = Vec::with_capacity(r);
    for label in dataset.space.labels() {
        let members: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.examples[i].label == label)
            .collect();
        let take = quotas[label.0].min(members.len());
        picked.extend(index::sample(rng, members.len(), take).into_iter().map(|k| members[k]));
    }
    picked.shuffle(rng);
    Ok(picked
        .into_iter()
        .map(|i| Query { index: i, text: dataset.examples[i].text.clone(), label: dataset.examples[i].label })
        .collect())
}

/// Input/output prompt layout and the rendered string of every label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub input_prefix: String,
    pub output_prefix: String,
    pub separator: String,
    /// Rendered string per label index.
    pub label_map: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct TemplateFile {
    #[serde(default = "default_input_prefix")]
    input_prefix: String,
    #[serde(default = "default_output_prefix")]
    output_prefix: String,
    #[serde(default = "default_separator")]
    separator: String,
    labels: BTreeMap<String, String>,
}

fn default_input_prefix() -> String {
    "Input: ".into()
}
fn default_output_prefix() -> String {
    "Output: ".into()
}
fn default_separator() -> String {
    "\n".into()
}

impl PromptTemplate {
    pub fn new(label_map: Vec<String>) -> Result<Self, DemoError> {
        let t = PromptTemplate {
            input_prefix: default_input_prefix(),
            output_prefix: default_output_prefix(),
            separator: default_separator(),
            label_map,
        };
        t.validate()?;
        Ok(t)
    }

    /// Labels rendered as their own names.
    pub fn for_space(space: &LabelSpace) -> Self {
        PromptTemplate::new(space.names().to_vec()).expect("label names are distinct")
    }

    pub fn validate(&self) -> Result<(), DemoError> {
        for (i, a) in self.label_map.iter().enumerate() {
            if a.trim().is_empty() {
                return Err(DemoError::Template(format!("label {i} renders to an empty string")));
            }
            if self.label_map[..i].iter().any(|b| b.trim().eq_ignore_ascii_case(a.trim())) {
                return Err(DemoError::Template(format!("rendered label {a:?} is not unique")));
            }
        }
        Ok(())
    }

    /// Parse the key-value template file format:
    ///
    /// ```toml
    /// input_prefix = "Input: "
    /// output_prefix = "Output: "
    /// separator = "\n"
    /// [labels]
    /// negative = "Negative"
    /// positive = "Positive"
    /// ```
    pub fn from_toml(source: &str, space: &LabelSpace) -> Result<Self, DemoError> {
        let file: TemplateFile = toml::from_str(source).map_err(|e| DemoError::Template(e.to_string()))?;
        if file.labels.len() != space.len() {
            return Err(DemoError::Template(format!(
                "template maps {} labels, label space has {}",
                file.labels.len(),
                space.len()
            )));
        }
        let label_map = space
            .names()
            .iter()
            .map(|name| {
                file.labels
                    .get(name)
                    .cloned()
                    .ok_or_else(|| DemoError::Template(format!("no rendering for label {name:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let t = PromptTemplate {
            input_prefix: file.input_prefix,
            output_prefix: file.output_prefix,
            separator: file.separator,
            label_map,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path, space: &LabelSpace) -> Result<Self, DemoError> {
        let source = std::fs::read_to_string(path)
            .map_err(|source| DemoError::Io { path: path.display().to_string(), source })?;
        PromptTemplate::from_toml(&source, space)
    }

    pub fn render_label(&self, label: Label) -> Result<&str, DemoError> {
        self.label_map.get(label.0).map(String::as_str).ok_or(DemoError::Unrenderable(label.0))
    }
}

/// Demonstrations as `Input:`/`Output:` pairs followed by the open query.
pub fn render_prompt(
    template: &PromptTemplate,
    demos: &DemonstrationSet,
    query: &str,
    instruction: Option<&str>,
) -> Result<String, DemoError> {
    let sep = &template.separator;
    let mut out = String::new();
    if let Some(instruction) = instruction {
        out.push_str(instruction);
        out.push_str(sep);
    }
    for ex in demos.iter() {
        let label = template.render_label(ex.label)?;
        out.push_str(&template.input_prefix);
        out.push_str(&ex.text);
        out.push_str(sep);
        out.push_str(&template.output_prefix);
        out.push_str(label);
        out.push_str(sep);
    }
    out.push_str(&template.input_prefix);
    out.push_str(query);
    out.push_str(sep);
    out.push_str(&template.output_prefix);
    Ok(out)
}

/// Case-insensitive exact match on the trimmed response, else an unambiguous
/// prefix match that ends on a non-alphanumeric boundary.
pub fn parse_label(response: &str, template: &PromptTemplate) -> Result<Label, DemoError> {
    let trimmed = response.trim();
    let lowered = trimmed.to_lowercase();
    if let Some(i) = template
        .label_map
        .iter()
        .position(|l| l.trim().to_lowercase() == lowered)
    {
        return Ok(Label(i));
    }
    let prefixed: Vec<usize> = template
        .label_map
        .iter()
        .enumerate()
        .filter(|(_, l)| {
            let l = l.trim().to_lowercase();
            lowered.starts_with(&l)
                && lowered[l.len()..].chars().next().is_some_and(|c| !c.is_alphanumeric())
        })
        .map(|(i, _)| i)
        .collect();
    match prefixed.as_slice() {
        [i] => Ok(Label(*i)),
        [] => Err(DemoError::Unparseable { response: response.to_string(), reason: "no label matches".into() }),
        _ => Err(DemoError::Unparseable { response: response.to_string(), reason: "ambiguous label prefix".into() }),
    }
}
