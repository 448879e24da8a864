//! JSON file formats for mechanisms, designs and certificates.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::ExactDesign;
use crate::dropout::{DropoutMechanism, MechanismSpec};
use crate::error::{Error, Result};
use crate::qsolver::{CertificateFile, OptimalityCertificate};
use crate::sequence::TreatmentSequence;

/// `{"name"?, "p", "t", "n", "sequences"}` with one sequence string per
/// subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub p: usize,
    pub t: usize,
    pub n: usize,
    pub sequences: Vec<String>,
}

impl DesignFile {
    pub fn from_design(design: &ExactDesign) -> Self {
        DesignFile {
            name: design.name().map(str::to_owned),
            p: design.periods(),
            t: design.treatments(),
            n: design.subjects(),
            sequences: design.sequences().iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn to_design(&self) -> Result<ExactDesign> {
        if self.sequences.len() != self.n {
            return Err(Error::invalid(format!(
                "design lists {} sequences but n={}",
                self.sequences.len(),
                self.n
            )));
        }
        let subjects = self
            .sequences
            .iter()
            .map(|s| TreatmentSequence::parse(s, self.t))
            .collect::<Result<Vec<_>>>()?;
        if let Some(bad) = subjects.iter().find(|s| s.periods() != self.p) {
            return Err(Error::invalid(format!(
                "sequence {bad} does not have p={} periods",
                self.p
            )));
        }
        let design = ExactDesign::new(self.t, subjects)?;
        Ok(match &self.name {
            Some(name) => design.with_name(name.clone()),
            None => design,
        })
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn design_to_json(design: &ExactDesign) -> Result<String> {
    to_json(&DesignFile::from_design(design))
}

pub fn design_from_json(text: &str) -> Result<ExactDesign> {
    let file: DesignFile = serde_json::from_str(text).map_err(invalid_json)?;
    file.to_design()
}

pub fn mechanism_from_json(text: &str) -> Result<DropoutMechanism> {
    let spec: MechanismSpec = serde_json::from_str(text).map_err(invalid_json)?;
    DropoutMechanism::from_spec(&spec)
}

pub fn certificate_to_json(cert: &OptimalityCertificate) -> Result<String> {
    to_json(&cert.to_file())
}

pub fn certificate_from_json(text: &str) -> Result<OptimalityCertificate> {
    let file: CertificateFile = serde_json::from_str(text).map_err(invalid_json)?;
    OptimalityCertificate::from_file(&file)
}

fn invalid_json(e: serde_json::Error) -> Error {
    Error::invalid(format!("malformed JSON: {e}"))
}

pub fn read_design(path: &Path) -> Result<ExactDesign> {
    design_from_json(&fs::read_to_string(path)?)
}

pub fn read_mechanism(path: &Path) -> Result<DropoutMechanism> {
    mechanism_from_json(&fs::read_to_string(path)?)
}
