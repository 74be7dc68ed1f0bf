//! JSON certificate file: local barriers with their constants, the gain
//! structure, the composed barrier, a verification summary and provenance.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compose::{CompositionForm, GainStructure, GlobalBarrier, LocalCertificate};
use crate::config::{ConfigError, NamedPolynomial};
use crate::polynomial::VarSpace;
use crate::synth::SynthesisReport;
use crate::verify::{Verdict, VerificationReport};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CertificateError {
    #[error("certificate JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("certificate: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub config_name: String,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalEntry {
    pub subsystem: String,
    pub barrier: NamedPolynomial,
    pub lambda: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub alpha: f64,
    pub c: f64,
    pub l: f64,
    pub neighbours: Vec<usize>,
    pub mode_count: usize,
    pub growth_required: bool,
}

impl LocalEntry {
    pub fn new(subsystem: &str, c: &LocalCertificate) -> Self {
        Self {
            subsystem: subsystem.into(),
            barrier: NamedPolynomial::from_polynomial(&c.barrier),
            lambda: c.lambda,
            eps1: c.eps1,
            eps2: c.eps2,
            alpha: c.alpha,
            c: c.c,
            l: c.l,
            neighbours: c.neighbours.clone(),
            mode_count: c.mode_count,
            growth_required: c.growth_required,
        }
    }

    pub fn to_certificate(&self, key: &str) -> Result<LocalCertificate, CertificateError> {
        Ok(LocalCertificate {
            barrier: self.barrier.to_polynomial(key)?,
            lambda: self.lambda,
            eps1: self.eps1,
            eps2: self.eps2,
            alpha: self.alpha,
            c: self.c,
            l: self.l,
            neighbours: self.neighbours.clone(),
            mode_count: self.mode_count,
            growth_required: self.growth_required,
        })
    }
}

/// Serialised [`GlobalBarrier`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierEntry {
    pub form: CompositionForm,
    pub weights: Vec<f64>,
    pub variables: Vec<String>,
    pub components: Vec<crate::config::TermList>,
    pub lambda_eff: f64,
    pub theta: f64,
}

impl BarrierEntry {
    pub fn new(b: &GlobalBarrier) -> Self {
        Self {
            form: b.form,
            weights: b.weights.clone(),
            variables: b.space.names().to_vec(),
            components: b
                .components
                .iter()
                .map(crate::config::TermList::from_polynomial)
                .collect(),
            lambda_eff: b.lambda_eff,
            theta: b.theta,
        }
    }

    pub fn to_barrier(&self) -> Result<GlobalBarrier, CertificateError> {
        if self.components.len() != self.weights.len() || self.components.is_empty() {
            return Err(CertificateError::Invalid(format!(
                "barrier has {} components and {} weights",
                self.components.len(),
                self.weights.len()
            )));
        }
        let space: Arc<VarSpace> = VarSpace::new(self.variables.clone());
        let components = self
            .components
            .iter()
            .enumerate()
            .map(|(k, t)| t.to_polynomial(&space, &format!("barrier.components[{k}]")))
            .collect::<Result<_, _>>()?;
        Ok(GlobalBarrier {
            form: self.form,
            weights: self.weights.clone(),
            components,
            lambda_eff: self.lambda_eff,
            theta: self.theta,
            space,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictEntry {
    pub subject: String,
    pub condition: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationSummary {
    pub samples: usize,
    pub tolerance: f64,
    pub verdicts: Vec<VerdictEntry>,
}

impl VerificationSummary {
    pub fn from_reports(samples: usize, tolerance: f64, reports: &[VerificationReport]) -> Self {
        Self {
            samples,
            tolerance,
            verdicts: reports
                .iter()
                .flat_map(|r| {
                    r.conditions.iter().map(|c| VerdictEntry {
                        subject: r.subject.clone(),
                        condition: c.name.clone(),
                        verdict: c.verdict,
                    })
                })
                .collect(),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdicts
            .iter()
            .all(|v| v.verdict != Verdict::Counterexample)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateFile {
    pub provenance: Provenance,
    #[serde(default)]
    pub locals: Vec<LocalEntry>,
    pub gain: Option<GainStructure>,
    pub barrier: Option<BarrierEntry>,
    pub verification: Option<VerificationSummary>,
    pub report: Option<SynthesisReport>,
}

impl CertificateFile {
    pub fn to_json(&self) -> Result<String, CertificateError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, CertificateError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn local_certificates(&self) -> Result<Vec<LocalCertificate>, CertificateError> {
        self.locals
            .iter()
            .enumerate()
            .map(|(i, e)| e.to_certificate(&format!("locals[{i}].barrier")))
            .collect()
    }

    pub fn global_barrier(&self) -> Result<Option<GlobalBarrier>, CertificateError> {
        self.barrier
            .as_ref()
            .map(BarrierEntry::to_barrier)
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomial::Polynomial;

    #[test]
    fn barrier_entry_round_trips() {
        let space = VarSpace::new(["a", "b"]);
        let p = &Polynomial::var(&space, 0) * &Polynomial::var(&space, 1);
        let b = GlobalBarrier::single(&p - &Polynomial::constant(&space, 1.5), -0.1);
        let e = BarrierEntry::new(&b);
        let back = e.to_barrier().unwrap();
        assert_eq!(back, b);
        let file = CertificateFile {
            provenance: Provenance {
                config_name: "t".into(),
                config_hash: "0".into(),
                seed: 0,
                tool_version: TOOL_VERSION.into(),
            },
            locals: Vec::new(),
            gain: None,
            barrier: Some(e),
            verification: None,
            report: None,
        };
        let text = file.to_json().unwrap();
        assert_eq!(CertificateFile::from_json(&text).unwrap(), file);
    }
}
