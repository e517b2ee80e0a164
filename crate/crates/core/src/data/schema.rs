//! Attribute typing and the JSON schema file.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttributeKind {
    Numerical,
    Categorical { classes: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: AttributeKind,
}

impl AttributeSpec {
    pub fn numerical(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: AttributeKind::Numerical,
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, classes: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: AttributeKind::Categorical {
                classes: classes.into_iter().map(Into::into).collect(),
            },
        }
    }

    /// 1 for numerical, `k` for a `k`-class categorical.
    pub fn encoded_width(&self) -> usize {
        match &self.kind {
            AttributeKind::Numerical => 1,
            AttributeKind::Categorical { classes } => classes.len(),
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self.kind, AttributeKind::Numerical)
    }

    pub fn classes(&self) -> &[String] {
        match &self.kind {
            AttributeKind::Numerical => &[],
            AttributeKind::Categorical { classes } => classes,
        }
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes().iter().position(|c| c == label)
    }
}

/// Ordered attribute list with cached encoded offsets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemaFile", into = "SchemaFile")]
pub struct DatasetSchema {
    attributes: Vec<AttributeSpec>,
    offsets: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    attributes: Vec<AttributeSpec>,
}

impl TryFrom<SchemaFile> for DatasetSchema {
    type Error = Error;
    fn try_from(f: SchemaFile) -> Result<Self> {
        DatasetSchema::new(f.attributes)
    }
}

impl From<DatasetSchema> for SchemaFile {
    fn from(s: DatasetSchema) -> Self {
        SchemaFile {
            attributes: s.attributes,
        }
    }
}

impl DatasetSchema {
    pub fn new(attributes: Vec<AttributeSpec>) -> Result<Self> {
        if attributes.len() < 2 {
            return Err(Error::Schema(format!(
                "need at least 2 attributes, got {}",
                attributes.len()
            )));
        }
        let mut seen = HashSet::new();
        for a in &attributes {
            if !seen.insert(a.name.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute name `{}`", a.name)));
            }
            if let AttributeKind::Categorical { classes } = &a.kind {
                if classes.len() < 2 {
                    return Err(Error::Schema(format!(
                        "categorical attribute `{}` needs at least 2 classes",
                        a.name
                    )));
                }
                let unique: HashSet<_> = classes.iter().collect();
                if unique.len() != classes.len() {
                    return Err(Error::Schema(format!("attribute `{}` repeats a class label", a.name)));
                }
            }
        }
        let mut offsets = Vec::with_capacity(attributes.len());
        let mut acc = 0;
        for a in &attributes {
            offsets.push(acc);
            acc += a.encoded_width();
        }
        Ok(Self { attributes, offsets })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Schema(format!("{}: {j}", path.display())),
            other => other,
        })
    }

    pub fn attributes(&self) -> &[AttributeSpec] {
        &self.attributes
    }

    pub fn attribute(&self, i: usize) -> &AttributeSpec {
        &self.attributes[i]
    }

    /// Number of attributes `M`.
    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    /// Total encoded width `W`.
    pub fn encoded_width(&self) -> usize {
        self.offsets.last().unwrap() + self.attributes.last().unwrap().encoded_width()
    }

    /// First encoded column of attribute `i`.
    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|a| a.name.as_str())
    }

    pub fn numerical_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.attributes[i].is_numerical()).collect()
    }

    pub fn categorical_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| !self.attributes[i].is_numerical())
            .collect()
    }
}
