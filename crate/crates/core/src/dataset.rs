//! Long-format stated-choice panels.
//!
//! One CSV row per person × task × alternative. The reserved columns are
//! `person_id`, `task_id`, `alt_id`, `avail` and `chosen`; everything else is
//! an attribute. Person-level covariates (age, attitudes, ...) are repeated on
//! every row of the person and are checked for constancy at load time.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Peer shares are coded out of this many named network members.
pub const PEER_NETWORK_SIZE: f64 = 5.0;

const PEER_SHARE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Continuous,
    Binary,
    Categorical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeScope {
    /// Varies across the alternatives of a task.
    Alternative,
    /// Constant within a person.
    Person,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeInfo {
    pub name: String,
    pub kind: AttributeKind,
    pub units: String,
    pub scope: AttributeScope,
}

/// One alternative row. `attributes` is aligned with the dataset schema.
#[derive(Clone, Debug, PartialEq)]
pub struct Alternative {
    pub alt_id: String,
    pub available: bool,
    pub attributes: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceTask {
    pub task_id: String,
    pub alternatives: Vec<Alternative>,
    pub chosen: String,
}

impl ChoiceTask {
    pub fn chosen_index(&self) -> Option<usize> {
        self.alternatives
            .iter()
            .position(|a| a.alt_id == self.chosen)
    }

    pub fn n_available(&self) -> usize {
        self.alternatives.iter().filter(|a| a.available).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PersonRecord {
    pub person_id: String,
    pub tasks: Vec<ChoiceTask>,
    pub covariates: IndexMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceDataset {
    pub individuals: Vec<PersonRecord>,
    pub attribute_schema: Vec<AttributeInfo>,
    /// Attribute holding peer shares, when the peer-count convention is in force.
    pub peer_share_attribute: Option<String>,
    pub n_alternatives: usize,
    pub n_observations: usize,
}

impl ChoiceDataset {
    /// Assembles a dataset and derives its counts. No validation is done here;
    /// see [`validate_dataset`].
    pub fn new(
        individuals: Vec<PersonRecord>,
        attribute_schema: Vec<AttributeInfo>,
        peer_share_attribute: Option<String>,
    ) -> Self {
        let n_observations = individuals.iter().map(|p| p.tasks.len()).sum();
        let n_alternatives = individuals
            .iter()
            .flat_map(|p| p.tasks.iter())
            .flat_map(|t| t.alternatives.iter().map(|a| a.alt_id.as_str()))
            .collect::<HashSet<_>>()
            .len();
        ChoiceDataset {
            individuals,
            attribute_schema,
            peer_share_attribute,
            n_alternatives,
            n_observations,
        }
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attribute_schema.iter().position(|a| a.name == name)
    }

    /// Distinct alternative ids in order of first appearance.
    pub fn alternative_ids(&self) -> Vec<String> {
        let mut seen = IndexMap::new();
        for task in self.tasks() {
            for alt in &task.alternatives {
                seen.entry(alt.alt_id.clone()).or_insert(());
            }
        }
        seen.into_keys().collect()
    }

    pub fn tasks(&self) -> impl Iterator<Item = &ChoiceTask> {
        self.individuals.iter().flat_map(|p| p.tasks.iter())
    }

    /// Available-alternative count of every task, in canonical order.
    pub fn available_counts(&self) -> Vec<usize> {
        self.tasks().map(ChoiceTask::n_available).collect()
    }

    /// A dataset restricted to the first `n` individuals.
    pub fn head(&self, n: usize) -> ChoiceDataset {
        ChoiceDataset::new(
            self.individuals.iter().take(n).cloned().collect(),
            self.attribute_schema.clone(),
            self.peer_share_attribute.clone(),
        )
    }
}

/// Column mapping for [`load_long_table`].
#[derive(Clone, Debug)]
pub struct TableSchema {
    pub person_id: String,
    pub task_id: String,
    pub alt_id: String,
    /// Availability column; when absent from the file every row is available.
    pub avail: String,
    pub chosen: String,
    /// Attribute columns to keep. `None` keeps every non-reserved column.
    pub attributes: Option<Vec<String>>,
    pub kinds: HashMap<String, AttributeKind>,
    pub units: HashMap<String, String>,
    /// Person-level columns, checked for constancy within a person.
    pub covariates: Vec<String>,
    pub peer_share: Option<String>,
    /// The peer-share column holds counts 0..=5 rather than fractions.
    pub peer_counts: bool,
    /// Reject covariates that vary within a person (otherwise the first row wins).
    pub strict: bool,
}

impl Default for TableSchema {
    fn default() -> Self {
        TableSchema {
            person_id: "person_id".into(),
            task_id: "task_id".into(),
            alt_id: "alt_id".into(),
            avail: "avail".into(),
            chosen: "chosen".into(),
            attributes: None,
            kinds: HashMap::new(),
            units: HashMap::new(),
            covariates: Vec::new(),
            peer_share: None,
            peer_counts: false,
            strict: true,
        }
    }
}

impl TableSchema {
    fn reserved(&self) -> [&str; 5] {
        [
            &self.person_id,
            &self.task_id,
            &self.alt_id,
            &self.avail,
            &self.chosen,
        ]
    }
}

fn parse_number(raw: &str, row: usize, column: &str) -> Result<f64> {
    let trimmed = raw.trim();
    let value: f64 = trimmed.parse().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        value: raw.to_string(),
    })?;
    if !value.is_finite() {
        return Err(Error::Parse {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        });
    }
    Ok(value)
}

fn parse_flag(raw: &str, row: usize, column: &str) -> Result<bool> {
    match raw.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        _ => Err(Error::Parse {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        }),
    }
}

/// Reads a long-format CSV file. Rows of a task keep their file order as the
/// alternative order; persons and tasks keep first-appearance order.
pub fn load_long_table(path: impl AsRef<Path>, schema: &TableSchema) -> Result<ChoiceDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_long_table(file, schema)
}

pub fn read_long_table<R: std::io::Read>(reader: R, schema: &TableSchema) -> Result<ChoiceDataset> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = csv.headers()?.clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let require = |name: &str| {
        column(name).ok_or_else(|| Error::MissingColumn {
            column: name.to_string(),
        })
    };

    let person_col = require(&schema.person_id)?;
    let task_col = require(&schema.task_id)?;
    let alt_col = require(&schema.alt_id)?;
    let chosen_col = require(&schema.chosen)?;
    let avail_col = column(&schema.avail);

    let reserved = schema.reserved();
    let attribute_names: Vec<String> = match &schema.attributes {
        Some(names) => names.clone(),
        None => headers
            .iter()
            .map(|h| h.trim().to_string())
            .filter(|h| !reserved.contains(&h.as_str()))
            .collect(),
    };
    for cov in &schema.covariates {
        if !attribute_names.contains(cov) {
            return Err(Error::MissingColumn {
                column: cov.clone(),
            });
        }
    }
    if let Some(peer) = &schema.peer_share {
        if !attribute_names.contains(peer) {
            return Err(Error::MissingColumn {
                column: peer.clone(),
            });
        }
    }
    let attribute_cols = attribute_names
        .iter()
        .map(|name| require(name))
        .collect::<Result<Vec<_>>>()?;
    let attribute_schema: Vec<AttributeInfo> = attribute_names
        .iter()
        .map(|name| AttributeInfo {
            name: name.clone(),
            kind: schema
                .kinds
                .get(name)
                .copied()
                .unwrap_or(AttributeKind::Continuous),
            units: schema.units.get(name).cloned().unwrap_or_default(),
            scope: if schema.covariates.contains(name) {
                AttributeScope::Person
            } else {
                AttributeScope::Alternative
            },
        })
        .collect();
    let peer_index = schema
        .peer_share
        .as_ref()
        .and_then(|p| attribute_names.iter().position(|n| n == p));

    // person -> task -> rows, first-appearance order throughout
    struct Row {
        line: usize,
        alt: Alternative,
        chosen: bool,
    }
    let mut persons: IndexMap<String, IndexMap<String, Vec<Row>>> = IndexMap::new();
    let mut seen = HashSet::new();

    for (i, record) in csv.records().enumerate() {
        let record = record?;
        // header is line 1
        let line = i + 2;
        let field = |col: usize| record.get(col).unwrap_or("");
        let person = field(person_col).trim().to_string();
        let task = field(task_col).trim().to_string();
        let alt_id = field(alt_col).trim().to_string();
        if !seen.insert((person.clone(), task.clone(), alt_id.clone())) {
            return Err(Error::Integrity(format!(
                "duplicate (person, task, alt) = ({person}, {task}, {alt_id}) at row {line}"
            )));
        }
        let chosen = parse_flag(field(chosen_col), line, &schema.chosen)?;
        let available = match avail_col {
            Some(col) => parse_flag(field(col), line, &schema.avail)?,
            None => true,
        };
        let mut attributes = Vec::with_capacity(attribute_cols.len());
        for (info, &col) in attribute_schema.iter().zip(&attribute_cols) {
            let mut value = parse_number(field(col), line, &info.name)?;
            match info.kind {
                AttributeKind::Binary if value != 0.0 && value != 1.0 => {
                    return Err(Error::Parse {
                        row: line,
                        column: info.name.clone(),
                        value: field(col).to_string(),
                    })
                }
                AttributeKind::Categorical if value.fract() != 0.0 => {
                    return Err(Error::Parse {
                        row: line,
                        column: info.name.clone(),
                        value: field(col).to_string(),
                    })
                }
                _ => {}
            }
            if schema.peer_counts && Some(attributes.len()) == peer_index {
                value /= PEER_NETWORK_SIZE;
            }
            attributes.push(value);
        }
        persons
            .entry(person)
            .or_default()
            .entry(task)
            .or_default()
            .push(Row {
                line,
                alt: Alternative {
                    alt_id,
                    available,
                    attributes,
                },
                chosen,
            });
    }

    let covariate_indices: Vec<usize> = schema
        .covariates
        .iter()
        .filter_map(|c| attribute_names.iter().position(|n| n == c))
        .collect();

    let mut individuals = Vec::with_capacity(persons.len());
    for (person_id, tasks) in persons {
        let mut covariates: IndexMap<String, f64> = IndexMap::new();
        let mut records = Vec::with_capacity(tasks.len());
        for (task_id, rows) in tasks {
            let chosen_rows: Vec<&Row> = rows.iter().filter(|r| r.chosen).collect();
            if chosen_rows.len() != 1 {
                return Err(Error::Integrity(format!(
                    "person {person_id}, task {task_id}: expected exactly one chosen row, found {}",
                    chosen_rows.len()
                )));
            }
            let chosen = chosen_rows[0];
            if !chosen.alt.available {
                return Err(Error::Integrity(format!(
                    "person {person_id}, task {task_id}: chosen alternative {} is unavailable (row {})",
                    chosen.alt.alt_id, chosen.line
                )));
            }
            let chosen_id = chosen.alt.alt_id.clone();
            let mut alternatives = Vec::with_capacity(rows.len());
            for mut row in rows {
                for &idx in &covariate_indices {
                    let name = &attribute_names[idx];
                    let value = row.alt.attributes[idx];
                    match covariates.get(name) {
                        None => {
                            covariates.insert(name.clone(), value);
                        }
                        Some(&first) if first != value => {
                            if schema.strict {
                                return Err(Error::Integrity(format!(
                                    "person {person_id}: covariate `{name}` varies ({first} vs {value} at row {})",
                                    row.line
                                )));
                            }
                            row.alt.attributes[idx] = first;
                        }
                        Some(_) => {}
                    }
                }
                alternatives.push(row.alt);
            }
            records.push(ChoiceTask {
                task_id,
                alternatives,
                chosen: chosen_id,
            });
        }
        individuals.push(PersonRecord {
            person_id,
            tasks: records,
            covariates,
        });
    }

    let dataset = ChoiceDataset::new(individuals, attribute_schema, schema.peer_share.clone());
    let violations = validate_dataset(&dataset);
    if !violations.is_empty() {
        let shown: Vec<String> = violations.iter().take(5).map(|v| v.to_string()).collect();
        return Err(Error::Integrity(shown.join("; ")));
    }
    Ok(dataset)
}

/// Writes the dataset in the long format read by [`load_long_table`].
/// Peer shares are written as fractions.
pub fn save_long_table(dataset: &ChoiceDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_long_table(dataset, file)
}

pub fn write_long_table<W: std::io::Write>(dataset: &ChoiceDataset, writer: W) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = vec!["person_id", "task_id", "alt_id", "avail", "chosen"];
    header.extend(dataset.attribute_schema.iter().map(|a| a.name.as_str()));
    csv.write_record(&header)?;
    let mut fields: Vec<String> = Vec::with_capacity(header.len());
    for person in &dataset.individuals {
        for task in &person.tasks {
            for alt in &task.alternatives {
                fields.clear();
                fields.push(person.person_id.clone());
                fields.push(task.task_id.clone());
                fields.push(alt.alt_id.clone());
                fields.push(if alt.available { "1" } else { "0" }.into());
                fields.push(if alt.alt_id == task.chosen { "1" } else { "0" }.into());
                fields.extend(alt.attributes.iter().map(|v| v.to_string()));
                csv.write_record(&fields)?;
            }
        }
    }
    csv.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rule {
    DuplicatePerson,
    DuplicateAlternative,
    TooFewAvailable,
    ChosenMissing,
    ChosenUnavailable,
    PeerShareSum,
    CovariateVaries,
    AttributeWidth,
    NonFinite,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::DuplicatePerson => "person_id must be unique",
            Rule::DuplicateAlternative => "alt_id must be unique within a task",
            Rule::TooFewAvailable => "at least two alternatives must be available",
            Rule::ChosenMissing => "chosen alternative must be one of the task's alternatives",
            Rule::ChosenUnavailable => "chosen alternative must be available",
            Rule::PeerShareSum => "peer shares must sum to 1 across the task",
            Rule::CovariateVaries => "person covariates must be constant across tasks",
            Rule::AttributeWidth => "attribute row width must match the schema",
            Rule::NonFinite => "attribute values must be finite",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub person: String,
    pub task: Option<String>,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "person {}", self.person)?;
        if let Some(task) = &self.task {
            write!(f, ", task {task}")?;
        }
        write!(f, ": {}", self.rule)?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

/// Checks every dataset invariant. Violations are returned as data.
pub fn validate_dataset(dataset: &ChoiceDataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let width = dataset.attribute_schema.len();
    let peer_index = dataset
        .peer_share_attribute
        .as_ref()
        .and_then(|name| dataset.attribute_index(name));
    let person_scoped: Vec<usize> = dataset
        .attribute_schema
        .iter()
        .enumerate()
        .filter(|(_, a)| a.scope == AttributeScope::Person)
        .map(|(i, _)| i)
        .collect();

    let mut persons = HashSet::new();
    for person in &dataset.individuals {
        let violation = |task: Option<&str>, rule, detail: String| Violation {
            person: person.person_id.clone(),
            task: task.map(str::to_string),
            rule,
            detail,
        };
        if !persons.insert(person.person_id.as_str()) {
            out.push(violation(None, Rule::DuplicatePerson, String::new()));
        }
        let mut first_values: Vec<Option<f64>> = vec![None; person_scoped.len()];
        for task in &person.tasks {
            let tid = Some(task.task_id.as_str());
            let mut ids = HashSet::new();
            for alt in &task.alternatives {
                if !ids.insert(alt.alt_id.as_str()) {
                    out.push(violation(tid, Rule::DuplicateAlternative, alt.alt_id.clone()));
                }
                if alt.attributes.len() != width {
                    out.push(violation(
                        tid,
                        Rule::AttributeWidth,
                        format!("alt {} has {} values, schema has {width}", alt.alt_id, alt.attributes.len()),
                    ));
                    continue;
                }
                if let Some(i) = alt.attributes.iter().position(|v| !v.is_finite()) {
                    out.push(violation(
                        tid,
                        Rule::NonFinite,
                        format!("alt {}, attribute {}", alt.alt_id, dataset.attribute_schema[i].name),
                    ));
                }
                for (slot, &idx) in first_values.iter_mut().zip(&person_scoped) {
                    let value = alt.attributes[idx];
                    match *slot {
                        None => *slot = Some(value),
                        Some(first) if first != value => out.push(violation(
                            tid,
                            Rule::CovariateVaries,
                            dataset.attribute_schema[idx].name.clone(),
                        )),
                        Some(_) => {}
                    }
                }
            }
            let available = task.n_available();
            if available < 2 {
                out.push(violation(tid, Rule::TooFewAvailable, format!("{available} available")));
            }
            match task.chosen_index() {
                None => out.push(violation(tid, Rule::ChosenMissing, task.chosen.clone())),
                Some(i) if !task.alternatives[i].available => {
                    out.push(violation(tid, Rule::ChosenUnavailable, task.chosen.clone()))
                }
                Some(_) => {}
            }
            if let Some(idx) = peer_index {
                let total: f64 = task
                    .alternatives
                    .iter()
                    .filter_map(|a| a.attributes.get(idx))
                    .sum();
                if (total - 1.0).abs() > PEER_SHARE_TOLERANCE {
                    out.push(violation(tid, Rule::PeerShareSum, format!("sum = {total}")));
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttributeSummary {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
}

/// Moments of every attribute over all alternative rows.
///
/// Values are sorted before accumulation so the result does not depend on row
/// order, bit for bit.
pub fn summarize_attributes(dataset: &ChoiceDataset) -> Vec<AttributeSummary> {
    dataset
        .attribute_schema
        .iter()
        .enumerate()
        .map(|(idx, info)| {
            let mut values: Vec<f64> = dataset
                .tasks()
                .flat_map(|t| t.alternatives.iter().map(move |a| a.attributes[idx]))
                .collect();
            values.sort_by(f64::total_cmp);
            let n = values.len().max(1) as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            AttributeSummary {
                name: info.name.clone(),
                min: values.first().copied().unwrap_or(f64::NAN),
                max: values.last().copied().unwrap_or(f64::NAN),
                mean,
                sd: var.sqrt(),
            }
        })
        .collect()
}

pub fn format_summary(rows: &[AttributeSummary]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(9);
    let mut out = format!(
        "{:<width$} {:>10} {:>10} {:>10} {:>10}\n",
        "attribute", "min", "max", "mean", "sd"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<width$} {:>10.4} {:>10.4} {:>10.4} {:>10.4}\n",
            r.name, r.min, r.max, r.mean, r.sd
        ));
    }
    out
}
