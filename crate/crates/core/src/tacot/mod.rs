//! Gated four-layer decision tree for tidying plans.
//!
//! A category is first routed at the Type layer: single-step objects map to
//! one primitive, garments continue through Structure (hood fold-back or
//! flatten), Attribute (sleeve / leg folds, each behind a feedback check) and
//! Finalization. Every node carries a gate state so a finished episode can be
//! audited.

mod gate;
mod oracle;
mod plan;

pub use gate::{apply_gate, GateNode, GateState, GateTrace, NodeId};
pub use oracle::{AttributeOracle, RemoteOracle, ScriptedOracle};
pub use plan::{
    classify_root, evaluate_routing, plan, replan_after_feedback, CaseResult, Plan, RoutingCase,
    RoutingReport,
};

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),
    #[error("inconsistent attributes: {0}")]
    InconsistentAttributes(String),
    #[error("node {0:?} already decided")]
    AlreadyDecided(String),
    #[error("no node named {0:?}")]
    UnknownNode(String),
    #[error("invalid registry: {0}")]
    InvalidRegistry(String),
}

pub type PlanResult<T> = std::result::Result<T, PlanError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Layer {
    Type,
    Structure,
    Attribute,
    Finalization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryKind {
    Single,
    MultiStep,
}

/// Garment morphology family; decides which attribute and finalization
/// branches exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GarmentFamily {
    UpperBody,
    Dress,
    LowerBody,
    Flat,
}

impl GarmentFamily {
    fn has_sleeves(self) -> bool {
        matches!(self, GarmentFamily::UpperBody | GarmentFamily::Dress)
    }

    fn has_legs(self) -> bool {
        self == GarmentFamily::LowerBody
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sleeve {
    Sleeveless,
    Short,
    Long,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Leg {
    Short,
    Long,
    NotApplicable,
}

impl Sleeve {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "sleeveless" => Sleeve::Sleeveless,
            "short" => Sleeve::Short,
            "long" => Sleeve::Long,
            "not_applicable" | "none" => Sleeve::NotApplicable,
            _ => return None,
        })
    }

    fn node_name(self) -> &'static str {
        match self {
            Sleeve::Sleeveless => "sleeve_sleeveless",
            Sleeve::Short => "sleeve_short",
            Sleeve::Long => "sleeve_long",
            Sleeve::NotApplicable => "sleeve_none",
        }
    }
}

impl Leg {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "short" => Leg::Short,
            "long" => Leg::Long,
            "not_applicable" | "none" => Leg::NotApplicable,
            _ => return None,
        })
    }

    fn node_name(self) -> &'static str {
        match self {
            Leg::Short => "leg_short",
            Leg::Long => "leg_long",
            Leg::NotApplicable => "leg_none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralAttributes {
    pub has_hood: bool,
    pub sleeve: Sleeve,
    pub leg: Leg,
}

impl StructuralAttributes {
    pub fn check(&self, category: &str, family: GarmentFamily) -> PlanResult<()> {
        let fail = |why: &str| Err(PlanError::InconsistentAttributes(format!("{category}: {why}")));
        if family.has_sleeves() == (self.sleeve == Sleeve::NotApplicable) {
            return fail(&format!("sleeve {:?} does not fit a {family:?} garment", self.sleeve));
        }
        if family.has_legs() == (self.leg == Leg::NotApplicable) {
            return fail(&format!("leg {:?} does not fit a {family:?} garment", self.leg));
        }
        if self.has_hood && !family.has_sleeves() {
            return fail("only upper-body garments and dresses can have a hood");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectCategory {
    pub name: String,
    pub kind: CategoryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub single_action: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<GarmentFamily>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryRegistry {
    pub vocabulary: BTreeSet<String>,
    pub categories: Vec<ObjectCategory>,
}

const BUNDLED_REGISTRY: &str = include_str!("../../data/registry.json");

impl Default for CategoryRegistry {
    fn default() -> Self {
        Self::from_json(BUNDLED_REGISTRY).expect("bundled registry is valid")
    }
}

impl CategoryRegistry {
    pub fn from_json(text: &str) -> crate::Result<Self> {
        let reg: CategoryRegistry = serde_json::from_str(text)?;
        reg.validate()?;
        Ok(reg)
    }

    /// Adds categories (and verbs) from another registry document; later
    /// entries replace earlier ones with the same name.
    pub fn extend_from_json(&mut self, text: &str) -> crate::Result<()> {
        let extra: CategoryRegistry = serde_json::from_str(text)?;
        self.vocabulary.extend(extra.vocabulary);
        for c in extra.categories {
            match self.categories.iter_mut().find(|e| e.name == c.name) {
                Some(slot) => *slot = c,
                None => self.categories.push(c),
            }
        }
        self.validate()?;
        Ok(())
    }

    pub fn validate(&self) -> PlanResult<()> {
        let mut seen = BTreeSet::new();
        for c in &self.categories {
            if !seen.insert(c.name.as_str()) {
                return Err(PlanError::InvalidRegistry(format!("duplicate category {:?}", c.name)));
            }
            match (c.kind, &c.single_action, c.family) {
                (CategoryKind::Single, Some(verb), None) => {
                    if !self.vocabulary.contains(verb) {
                        return Err(PlanError::InvalidRegistry(format!(
                            "{:?} uses unregistered verb {verb:?}",
                            c.name
                        )));
                    }
                }
                (CategoryKind::MultiStep, None, Some(_)) => {}
                _ => {
                    return Err(PlanError::InvalidRegistry(format!(
                        "{:?}: single categories need exactly a single_action, multi-step ones a family",
                        c.name
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> PlanResult<&ObjectCategory> {
        self.categories
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| PlanError::UnknownCategory(name.to_string()))
    }
}

/// One step of a plan. `place` is set for grasp-and-put pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubAction {
    pub verb: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub place: Option<String>,
    pub target_part: String,
    pub layer: Layer,
}

impl SubAction {
    fn new(verb: &str, place: Option<&str>, target_part: &str, layer: Layer) -> Self {
        Self {
            verb: verb.to_string(),
            place: place.map(str::to_string),
            target_part: target_part.to_string(),
            layer,
        }
    }
}

impl fmt::Display for SubAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.place {
            Some(p) => write!(f, "{}->{}", self.verb, p),
            None => f.write_str(&self.verb),
        }
    }
}
