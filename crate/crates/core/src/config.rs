//! TOML run configuration. Polynomials are written as explicit term lists
//! (`{ exponents = [...], coefficient = ... }`) over a named variable list.
//!
//! Subsystem dynamics and jump maps live over the subsystem's input space:
//! its `states` followed by `inputs` (the neighbour states, stacked in
//! `neighbours` order). Local sets live over `states`; global sets over the
//! stacked state of all subsystems.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::polynomial::{Monomial, Polynomial, VarSpace};
use crate::sir::{ring_params, sir_interconnection, Balance, SirError, SirParams, INFECTED_LIMIT};
use crate::sos::{GlobalSets, SafeRegion, UnsafeRegion};
use crate::synth::SynthesisParams;
use crate::system::{
    Cell, ImpulseSchedule, Interconnection, LocalSets, Relation, SemialgebraicSet, SetConstraint,
    Subsystem, SystemError,
};
use crate::verify::{MonitorConfig, VerificationConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialisation error: {0}")]
    Serialise(#[from] toml::ser::Error),
    #[error("{key}: {message}")]
    Key { key: String, message: String },
    #[error("system: {0}")]
    System(#[from] SystemError),
    #[error(transparent)]
    Sir(#[from] SirError),
}

fn key_err(key: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Key {
        key: key.into(),
        message: message.into(),
    }
}

/// One term `coefficient · Π x_k^{exponents[k]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub exponents: Vec<u32>,
    pub coefficient: f64,
}

/// Polynomial as a term list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TermList(pub Vec<Term>);

impl TermList {
    pub fn from_polynomial(p: &Polynomial) -> Self {
        let n = p.space().dim();
        Self(
            p.terms()
                .map(|(m, c)| Term {
                    exponents: m.to_dense(n),
                    coefficient: c,
                })
                .collect(),
        )
    }

    pub fn to_polynomial(
        &self,
        space: &Arc<VarSpace>,
        key: &str,
    ) -> Result<Polynomial, ConfigError> {
        let n = space.dim();
        let mut terms = Vec::with_capacity(self.0.len());
        for (k, t) in self.0.iter().enumerate() {
            if t.exponents.len() != n {
                return Err(key_err(
                    format!("{key}[{k}]"),
                    format!(
                        "exponent vector has length {}, expected {n}",
                        t.exponents.len()
                    ),
                ));
            }
            if !t.coefficient.is_finite() {
                return Err(key_err(format!("{key}[{k}]"), "coefficient must be finite"));
            }
            terms.push((Monomial::from_dense(&t.exponents), t.coefficient));
        }
        Ok(Polynomial::from_terms(space, terms))
    }
}

/// Polynomial together with its variable names, as stored in output files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedPolynomial {
    pub variables: Vec<String>,
    pub terms: TermList,
}

impl NamedPolynomial {
    pub fn from_polynomial(p: &Polynomial) -> Self {
        Self {
            variables: p.space().names().to_vec(),
            terms: TermList::from_polynomial(p),
        }
    }

    pub fn to_polynomial(&self, key: &str) -> Result<Polynomial, ConfigError> {
        self.terms
            .to_polynomial(&VarSpace::new(self.variables.clone()), key)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    pub relation: Relation,
    pub terms: TermList,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub constraints: Vec<ConstraintSpec>,
}

/// Finite union of basic cells.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetSpec {
    pub cells: Vec<CellSpec>,
}

impl SetSpec {
    pub fn from_set(s: &SemialgebraicSet) -> Self {
        Self {
            cells: s
                .cells
                .iter()
                .map(|c| CellSpec {
                    constraints: c
                        .constraints
                        .iter()
                        .map(|k| ConstraintSpec {
                            relation: k.relation,
                            terms: TermList::from_polynomial(&k.poly),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_set(
        &self,
        space: &Arc<VarSpace>,
        key: &str,
    ) -> Result<SemialgebraicSet, ConfigError> {
        let mut cells = Vec::with_capacity(self.cells.len());
        for (i, c) in self.cells.iter().enumerate() {
            let mut cons = Vec::with_capacity(c.constraints.len());
            for (j, k) in c.constraints.iter().enumerate() {
                cons.push(SetConstraint {
                    poly: k.terms.to_polynomial(
                        space,
                        &format!("{key}.cells[{i}].constraints[{j}].terms"),
                    )?,
                    relation: k.relation,
                });
            }
            cells.push(Cell::new(cons));
        }
        Ok(SemialgebraicSet::new(space, cells))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalSetsSpec {
    pub domain: SetSpec,
    pub initial: SetSpec,
    #[serde(rename = "unsafe")]
    pub unsafe_set: SetSpec,
    pub jump_region: SetSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsystemSpec {
    pub name: String,
    pub states: Vec<String>,
    /// Indices (0-based) of the subsystems read through `ω_i`.
    #[serde(default)]
    pub neighbours: Vec<usize>,
    /// Names of the stacked neighbour states.
    #[serde(default)]
    pub inputs: Vec<String>,
    /// `modes[p][k]` is the `k`-th component of `f_p`.
    pub modes: Vec<Vec<TermList>>,
    pub jump: Vec<TermList>,
    pub schedule: ImpulseSchedule,
    pub sets: LocalSetsSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub mode_count: usize,
    pub subsystems: Vec<SubsystemSpec>,
}

/// Global unsafe set for the monolithic program and for verification.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum UnsafeSpec {
    /// All subsystems unsafe at once: the product of the local unsafe sets.
    #[default]
    Product,
    /// Explicit cells over the stacked state.
    Cells { cells: Vec<CellSpec> },
    /// `{x ∈ X : max_k p_k(x) ≥ 0}`, with no cell description.
    MaxOf { pieces: Vec<TermList> },
}

/// Region of the jump condition in the monolithic program.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum JumpRegionSpec {
    #[default]
    WholeDomain,
    /// Product of the local jump regions.
    LocalProduct,
    Cells {
        cells: Vec<CellSpec>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlobalSetsSpec {
    #[serde(rename = "unsafe")]
    pub unsafe_set: UnsafeSpec,
    pub jump: JumpRegionSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkSection {
    pub m: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            m: vec![3, 4, 5, 6],
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub trajectories: usize,
    pub seed: u64,
    pub horizon: f64,
    pub step: f64,
    pub min_dwell: f64,
    pub max_dwell: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let m = MonitorConfig::default();
        Self {
            trajectories: 100,
            seed: 0,
            horizon: m.horizon,
            step: m.step,
            min_dwell: m.min_dwell,
            max_dwell: m.max_dwell,
        }
    }
}

impl SimulateSection {
    pub fn monitor(&self) -> MonitorConfig {
        MonitorConfig {
            horizon: self.horizon,
            step: self.step,
            min_dwell: self.min_dwell,
            max_dwell: self.max_dwell,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub name: String,
    pub system: SystemSpec,
    #[serde(default)]
    pub sets: GlobalSetsSpec,
    #[serde(default)]
    pub synthesis: SynthesisParams,
    #[serde(default)]
    pub verify: VerificationConfig,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub benchmark: BenchmarkSection,
}

impl ConfigFile {
    /// Parses and validates; nothing downstream sees an unchecked config.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of the canonical serialisation, hex encoded.
    pub fn hash(&self) -> Result<String, ConfigError> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let ic = self.interconnection()?;
        self.global_sets(&ic)?;
        self.synthesis
            .constants_for(ic.len())
            .map_err(|e| key_err("synthesis.constants", e.to_string()))?;
        if self.synthesis.program.barrier_degree == 0
            || self.synthesis.program.barrier_degree % 2 != 0
        {
            return Err(key_err(
                "synthesis.program.barrier_degree",
                "must be a positive even number",
            ));
        }
        if self.synthesis.program.multiplier_degree % 2 != 0 {
            return Err(key_err(
                "synthesis.program.multiplier_degree",
                "must be even",
            ));
        }
        self.verify
            .validate()
            .map_err(|e| key_err("verify", e.to_string()))?;
        if self.simulate.trajectories == 0 {
            return Err(key_err("simulate.trajectories", "must be at least 1"));
        }
        if !(self.simulate.step > 0.0) || !(self.simulate.horizon >= 0.0) {
            return Err(key_err(
                "simulate",
                "step must be positive and horizon nonnegative",
            ));
        }
        if let Some(&m) = self.benchmark.m.iter().find(|&&m| m < 3) {
            return Err(key_err(
                "benchmark.m",
                format!("ring instances need M ≥ 3, got {m}"),
            ));
        }
        Ok(())
    }

    pub fn interconnection(&self) -> Result<Interconnection, ConfigError> {
        let sys = &self.system;
        let count = sys.subsystems.len();
        let mut subs = Vec::with_capacity(count);
        for (i, s) in sys.subsystems.iter().enumerate() {
            let key = format!("system.subsystems[{i}]");
            if let Some(&j) = s.neighbours.iter().find(|&&j| j >= count) {
                return Err(key_err(
                    format!("{key}.neighbours"),
                    format!("index {j} out of range"),
                ));
            }
            let expected: usize = s
                .neighbours
                .iter()
                .map(|&j| sys.subsystems[j].states.len())
                .sum();
            if s.inputs.len() != expected {
                return Err(key_err(
                    format!("{key}.inputs"),
                    format!("{} names for {expected} neighbour states", s.inputs.len()),
                ));
            }
            let state_space = VarSpace::new(s.states.clone());
            let input_space = VarSpace::new(s.states.iter().chain(&s.inputs).cloned());
            let mut modes = Vec::with_capacity(s.modes.len());
            for (p, f) in s.modes.iter().enumerate() {
                let comps = f
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t.to_polynomial(&input_space, &format!("{key}.modes[{p}][{k}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                modes.push(comps);
            }
            let jump = s
                .jump
                .iter()
                .enumerate()
                .map(|(k, t)| t.to_polynomial(&input_space, &format!("{key}.jump[{k}]")))
                .collect::<Result<Vec<_>, _>>()?;
            let sets = LocalSets {
                domain: s
                    .sets
                    .domain
                    .to_set(&state_space, &format!("{key}.sets.domain"))?,
                initial: s
                    .sets
                    .initial
                    .to_set(&state_space, &format!("{key}.sets.initial"))?,
                unsafe_set: s
                    .sets
                    .unsafe_set
                    .to_set(&state_space, &format!("{key}.sets.unsafe"))?,
                jump_region: s
                    .sets
                    .jump_region
                    .to_set(&state_space, &format!("{key}.sets.jump_region"))?,
            };
            let sub = Subsystem {
                name: s.name.clone(),
                state_space,
                input_space,
                neighbours: s.neighbours.clone(),
                modes,
                jump,
                schedule: s.schedule.clone(),
                sets,
            };
            if sub.modes.len() != sys.mode_count {
                return Err(key_err(
                    format!("{key}.modes"),
                    format!(
                        "{} modes, system.mode_count is {}",
                        sub.modes.len(),
                        sys.mode_count
                    ),
                ));
            }
            sub.validate(i)
                .map_err(|e| key_err(key.clone(), e.to_string()))?;
            subs.push(sub);
        }
        Ok(Interconnection::new(subs, sys.mode_count)?)
    }

    /// Global sets: initial set is always the product of the local ones.
    pub fn global_sets(&self, ic: &Interconnection) -> Result<GlobalSets, ConfigError> {
        let space = ic.global_space();
        let local = |f: fn(&LocalSets) -> &SemialgebraicSet| -> SemialgebraicSet {
            let parts: Vec<&SemialgebraicSet> = ic.subsystems.iter().map(|s| f(&s.sets)).collect();
            SemialgebraicSet::product(&space, &parts)
        };
        let unsafe_region = match &self.sets.unsafe_set {
            UnsafeSpec::Product => UnsafeRegion::Cells(local(|s| &s.unsafe_set)),
            UnsafeSpec::Cells { cells } => UnsafeRegion::Cells(
                SetSpec {
                    cells: cells.clone(),
                }
                .to_set(&space, "sets.unsafe")?,
            ),
            UnsafeSpec::MaxOf { pieces } => UnsafeRegion::MaxOf {
                space: space.clone(),
                pieces: pieces
                    .iter()
                    .enumerate()
                    .map(|(k, t)| t.to_polynomial(&space, &format!("sets.unsafe.pieces[{k}]")))
                    .collect::<Result<_, _>>()?,
                within: local(|s| &s.domain),
            },
        };
        let safe = match &self.sets.jump {
            JumpRegionSpec::WholeDomain => SafeRegion::WholeDomain,
            JumpRegionSpec::LocalProduct => SafeRegion::Cells(local(|s| &s.jump_region)),
            JumpRegionSpec::Cells { cells } => SafeRegion::Cells(
                SetSpec {
                    cells: cells.clone(),
                }
                .to_set(&space, "sets.jump")?,
            ),
        };
        Ok(GlobalSets {
            initial: local(|s| &s.initial),
            unsafe_region,
            safe,
        })
    }

    pub fn from_interconnection(name: &str, ic: &Interconnection, sets: GlobalSetsSpec) -> Self {
        let subsystems = ic
            .subsystems
            .iter()
            .map(|s| SubsystemSpec {
                name: s.name.clone(),
                states: s.state_space.names().to_vec(),
                neighbours: s.neighbours.clone(),
                inputs: s.input_space.names()[s.dim()..].to_vec(),
                modes: s
                    .modes
                    .iter()
                    .map(|f| f.iter().map(TermList::from_polynomial).collect())
                    .collect(),
                jump: s.jump.iter().map(TermList::from_polynomial).collect(),
                schedule: s.schedule.clone(),
                sets: LocalSetsSpec {
                    domain: SetSpec::from_set(&s.sets.domain),
                    initial: SetSpec::from_set(&s.sets.initial),
                    unsafe_set: SetSpec::from_set(&s.sets.unsafe_set),
                    jump_region: SetSpec::from_set(&s.sets.jump_region),
                },
            })
            .collect();
        Self {
            name: name.into(),
            system: SystemSpec {
                mode_count: ic.mode_count,
                subsystems,
            },
            sets,
            synthesis: SynthesisParams::default(),
            verify: VerificationConfig::default(),
            simulate: SimulateSection::default(),
            benchmark: BenchmarkSection::default(),
        }
    }

    /// The three-patch SIR network with its published rates. The unsafe set
    /// is the union `{some I_i ≥ 5}`, given only as a pointwise maximum; the
    /// jump condition lives on the product of the local safe sets.
    pub fn paper_m3() -> Result<Self, ConfigError> {
        let ic = sir_interconnection(&SirParams::paper_m3())?;
        let space = ic.global_space();
        let pieces = ic.offsets()[..ic.len()]
            .iter()
            .map(|&o| {
                TermList::from_polynomial(
                    &(&Polynomial::var(&space, o + 1)
                        - &Polynomial::constant(&space, INFECTED_LIMIT)),
                )
            })
            .collect();
        let sets = GlobalSetsSpec {
            unsafe_set: UnsafeSpec::MaxOf { pieces },
            jump: JumpRegionSpec::LocalProduct,
        };
        Ok(Self::from_interconnection("paper-m3", &ic, sets))
    }

    /// Seeded ring instance with the benchmark's global sets (product
    /// unsafe set, jump condition on all of `X`) and sum-form composition.
    pub fn ring(m: usize, seed: u64) -> Result<Self, ConfigError> {
        let ic = sir_interconnection(&ring_params(m, seed, Balance::Columns)?)?;
        let mut cfg = Self::from_interconnection(
            &format!("ring-m{m}-seed{seed}"),
            &ic,
            GlobalSetsSpec::default(),
        );
        cfg.synthesis.form = crate::compose::CompositionForm::Sum;
        Ok(cfg)
    }

    /// Built-in instance by name: `paper-m3` or `ring-m<M>-seed<S>`.
    pub fn builtin(name: &str) -> Result<Self, ConfigError> {
        if name == "paper-m3" {
            return Self::paper_m3();
        }
        let parsed = name.strip_prefix("ring-m").and_then(|rest| {
            let (m, seed) = rest.split_once("-seed")?;
            Some((m.parse().ok()?, seed.parse().ok()?))
        });
        match parsed {
            Some((m, seed)) => Self::ring(m, seed),
            None => Err(key_err(
                "instance",
                format!("unknown built-in '{name}' (expected paper-m3 or ring-m<M>-seed<S>)"),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_patch_instance_round_trips() {
        let cfg = ConfigFile::paper_m3().unwrap();
        let text = cfg.to_toml().unwrap();
        let back = ConfigFile::parse(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(
            back.interconnection().unwrap(),
            sir_interconnection(&SirParams::paper_m3()).unwrap()
        );
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = ConfigFile::ring(3, 1).unwrap().to_toml().unwrap();
        text.push_str("\n[extra]\nfoo = 1\n");
        assert!(matches!(
            ConfigFile::parse(&text),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn bad_exponent_length_names_the_key() {
        let mut cfg = ConfigFile::ring(3, 1).unwrap();
        cfg.system.subsystems[1].jump[0].0[0].exponents.pop();
        let err = ConfigFile::parse(&cfg.to_toml().unwrap())
            .unwrap_err()
            .to_string();
        assert!(err.contains("system.subsystems[1].jump[0]"), "{err}");
    }

    #[test]
    fn builtin_names() {
        assert_eq!(
            ConfigFile::builtin("ring-m4-seed7").unwrap(),
            ConfigFile::ring(4, 7).unwrap()
        );
        assert!(ConfigFile::builtin("ring-m2-seed1").is_err());
        assert!(ConfigFile::builtin("nope").is_err());
    }
}
