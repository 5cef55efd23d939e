//! JSON documents read and written by the CLI.
//!
//! Matrix entries are integers or `"num/den"` strings. Every document carries
//! `"schema": "1"`.

use std::fs;
use std::path::Path;

use decouple_core::algebra::{format_rat, parse_rat, Mat, Rat};
use decouple_core::poles::PolePlacementSpec;
use decouple_core::synthesis::SparePoles;
use decouple_core::system::{validate, FeedbackLaw, StateSpaceSystem};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA: &str = "1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Int(i64),
    Text(String),
}

impl Entry {
    pub fn from_rat(r: &Rat) -> Entry {
        match r.is_integer().then(|| r.numer().to_string().parse::<i64>().ok()).flatten() {
            Some(v) => Entry::Int(v),
            None => Entry::Text(format_rat(r)),
        }
    }

    fn parse(&self) -> decouple_core::Result<Rat> {
        match self {
            Entry::Int(v) => Ok(Rat::from_integer((*v).into())),
            Entry::Text(t) => parse_rat(t),
        }
    }
}

pub fn matrix_entries(m: &Mat) -> Vec<Vec<Entry>> {
    m.to_rows().iter().map(|row| row.iter().map(Entry::from_rat).collect()).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemDocument {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<Entry>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<Entry>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<Entry>>,
}

impl SystemDocument {
    pub fn from_system(sys: &StateSpaceSystem, name: Option<&str>) -> Self {
        SystemDocument {
            schema: SCHEMA.into(),
            name: name.map(str::to_string),
            n: sys.n(),
            m: sys.m(),
            p: sys.p(),
            a: matrix_entries(&sys.a),
            b: matrix_entries(&sys.b),
            c: matrix_entries(&sys.c),
        }
    }

    /// Shape-checked matrices, without the standing-assumption check.
    pub fn to_system(&self, path: &Path) -> Result<StateSpaceSystem, CliError> {
        check_schema(path, &self.schema)?;
        let a = field_matrix(path, "A", &self.a, self.n, self.n)?;
        let b = field_matrix(path, "B", &self.b, self.n, self.m)?;
        let c = field_matrix(path, "C", &self.c, self.p, self.n)?;
        Ok(StateSpaceSystem::new(a, b, c)?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LawDocument {
    pub schema: String,
    #[serde(rename = "F")]
    pub f: Vec<Vec<Entry>>,
    #[serde(rename = "G")]
    pub g: Vec<Vec<Entry>>,
}

impl LawDocument {
    pub fn from_law(law: &FeedbackLaw) -> Self {
        LawDocument { schema: SCHEMA.into(), f: matrix_entries(&law.f), g: matrix_entries(&law.g) }
    }
}

/// Pole targets. `uniform` applies one pole everywhere; `subsystems` lists
/// poles per decoupled channel; `poles` is a flat list for spare-input modes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoleDocument {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform: Option<Entry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsystems: Option<Vec<Vec<Entry>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poles: Option<Vec<Entry>>,
}

fn check_schema(path: &Path, schema: &str) -> Result<(), CliError> {
    if schema != SCHEMA {
        return Err(CliError::Field {
            path: path.display().to_string(),
            field: "schema".into(),
            detail: format!("unsupported schema {schema:?}, expected {SCHEMA:?}"),
        });
    }
    Ok(())
}

fn field_matrix(path: &Path, field: &str, rows: &[Vec<Entry>], r: usize, c: usize) -> Result<Mat, CliError> {
    let err = |detail: String| CliError::Field { path: path.display().to_string(), field: field.into(), detail };
    if rows.len() != r {
        return Err(err(format!("expected {r} rows, found {}", rows.len())));
    }
    let mut out = Vec::with_capacity(r);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != c {
            return Err(err(format!("row {} has {} columns, expected {c}", i + 1, row.len())));
        }
        let parsed = row
            .iter()
            .enumerate()
            .map(|(j, e)| e.parse().map_err(|e| err(format!("entry [{}][{}]: {e}", i + 1, j + 1))))
            .collect::<Result<Vec<Rat>, CliError>>()?;
        out.push(parsed);
    }
    Ok(Mat::from_rows(out, c)?)
}

fn entry_list(path: &Path, field: &str, entries: &[Entry]) -> Result<Vec<Rat>, CliError> {
    entries
        .iter()
        .enumerate()
        .map(|(k, e)| {
            e.parse().map_err(|e| CliError::Field {
                path: path.display().to_string(),
                field: field.into(),
                detail: format!("entry {}: {e}", k + 1),
            })
        })
        .collect()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.display().to_string(), source })
}

/// Reads, shape-checks and validates a system document.
pub fn parse_system(path: &Path) -> Result<(StateSpaceSystem, Option<String>), CliError> {
    let doc: SystemDocument = read_json(path)?;
    let sys = doc.to_system(path)?;
    validate(&sys)?;
    Ok((sys, doc.name))
}

pub fn parse_law(path: &Path, sys: &StateSpaceSystem) -> Result<FeedbackLaw, CliError> {
    let doc: LawDocument = read_json(path)?;
    check_schema(path, &doc.schema)?;
    let g_cols = doc.g.first().map_or(0, Vec::len);
    let law = FeedbackLaw {
        f: field_matrix(path, "F", &doc.f, doc.f.len(), sys.n())?,
        g: field_matrix(path, "G", &doc.g, doc.g.len(), g_cols)?,
    };
    law.check_dims(sys)?;
    Ok(law)
}

pub fn parse_placement_spec(path: &Path) -> Result<PolePlacementSpec, CliError> {
    let doc: PoleDocument = read_json(path)?;
    check_schema(path, &doc.schema)?;
    match (&doc.uniform, &doc.subsystems) {
        (Some(u), None) => Ok(PolePlacementSpec::Uniform(entry_list(path, "uniform", std::slice::from_ref(u))?.remove(0))),
        (None, Some(subs)) => Ok(PolePlacementSpec::PerSubsystem(
            subs.iter().map(|s| entry_list(path, "subsystems", s)).collect::<Result<_, _>>()?,
        )),
        _ => Err(CliError::Field {
            path: path.display().to_string(),
            field: "uniform".into(),
            detail: "give exactly one of \"uniform\" or \"subsystems\"".into(),
        }),
    }
}

pub fn parse_spare_poles(path: &Path) -> Result<SparePoles, CliError> {
    let doc: PoleDocument = read_json(path)?;
    check_schema(path, &doc.schema)?;
    match (&doc.uniform, &doc.poles) {
        (Some(u), None) => Ok(SparePoles::Uniform(entry_list(path, "uniform", std::slice::from_ref(u))?.remove(0))),
        (None, Some(list)) => Ok(SparePoles::Listed(entry_list(path, "poles", list)?)),
        _ => Err(CliError::Field {
            path: path.display().to_string(),
            field: "poles".into(),
            detail: "give exactly one of \"uniform\" or \"poles\"".into(),
        }),
    }
}
