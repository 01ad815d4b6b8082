use serde::{Deserialize, Serialize};

use super::gate::GateTrace;
use super::oracle::{AttributeOracle, ScriptedOracle};
use super::{
    CategoryKind, CategoryRegistry, GarmentFamily, Layer, Leg, PlanError, PlanResult, Sleeve,
    StructuralAttributes, SubAction,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub category: String,
    pub actions: Vec<SubAction>,
}

impl Plan {
    pub fn labels(&self) -> Vec<String> {
        self.actions.iter().map(ToString::to_string).collect()
    }
}

pub fn classify_root(registry: &CategoryRegistry, category: &str) -> PlanResult<CategoryKind> {
    Ok(registry.get(category)?.kind)
}

/// Walks Type → Structure → Attribute → Finalization, asking the oracle at
/// each branch point.
pub fn plan(
    oracle: &mut dyn AttributeOracle,
    registry: &CategoryRegistry,
) -> PlanResult<(Plan, GateTrace)> {
    let name = oracle.category()?;
    let category = registry.get(&name)?.clone();
    let mut trace = GateTrace::build(registry);
    let node = |t: &GateTrace, path: &str| t.find(&format!("{name}/{path}"));
    trace.decide(trace.find(&name)?, true)?;

    let mut actions = Vec::new();
    let family = match category.kind {
        CategoryKind::Single => {
            let verb = category.single_action.as_deref().expect("validated registry");
            actions.push(SubAction::new(verb, None, "object", Layer::Type));
            return Ok((Plan { category: name, actions }, trace));
        }
        CategoryKind::MultiStep => category.family.expect("validated registry"),
    };

    let attrs = StructuralAttributes {
        has_hood: oracle.has_hood()?,
        sleeve: oracle.sleeve()?,
        leg: oracle.leg()?,
    };
    attrs.check(&name, family)?;

    if attrs.has_hood {
        trace.decide(node(&trace, "hood")?, true)?;
        actions.push(SubAction::new("grasp_hat", Some("put_back"), "hood", Layer::Structure));
    } else {
        trace.decide(node(&trace, "flatten")?, true)?;
        actions.push(SubAction::new("pick", None, "garment", Layer::Structure));
        actions.push(SubAction::new("place", None, "garment", Layer::Structure));
    }

    if family.has_sleeves() {
        let branch = attrs.sleeve.node_name();
        trace.decide(node(&trace, branch)?, true)?;
        let put = if attrs.sleeve == Sleeve::Long { "put_hem" } else { "put_center" };
        for side in ["sleeve_left", "sleeve_right"] {
            let id = node(&trace, &format!("{branch}/{side}"))?;
            trace.mark_feedback(id)?;
            let done = oracle.part_at_target(side)?;
            trace.decide(id, !done)?;
            if !done {
                actions.push(SubAction::new("grasp_sleeve", Some(put), side, Layer::Attribute));
            }
        }
    }
    if family.has_legs() {
        trace.decide(node(&trace, attrs.leg.node_name())?, true)?;
        if attrs.leg == Leg::Long {
            let id = node(&trace, "leg_long/legs")?;
            trace.mark_feedback(id)?;
            let done = oracle.part_at_target("legs")?;
            trace.decide(id, !done)?;
            if !done {
                actions.push(SubAction::new("fold_legs_secondary", None, "legs", Layer::Attribute));
            }
        }
    }

    match family {
        GarmentFamily::UpperBody | GarmentFamily::Dress => {
            trace.decide(node(&trace, "shoulder_to_hem")?, true)?;
            actions.push(SubAction::new("grasp_shoulder", Some("put_hem"), "garment", Layer::Finalization));
        }
        GarmentFamily::Flat => {
            trace.decide(node(&trace, "half_fold")?, true)?;
            actions.push(SubAction::new("fold_half", None, "garment", Layer::Finalization));
        }
        GarmentFamily::LowerBody => {}
    }
    Ok((Plan { category: name, actions }, trace))
}

/// Re-checks the parts behind the remaining Attribute-layer actions and
/// drops those already in place. Order is preserved and nothing is added.
pub fn replan_after_feedback(plan: &Plan, oracle: &mut dyn AttributeOracle) -> PlanResult<Plan> {
    let mut actions = Vec::with_capacity(plan.actions.len());
    for a in &plan.actions {
        if a.layer == Layer::Attribute && oracle.part_at_target(&a.target_part)? {
            continue;
        }
        actions.push(a.clone());
    }
    Ok(Plan {
        category: plan.category.clone(),
        actions,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingCase {
    pub name: String,
    pub script: ScriptedOracle,
    /// Expected action labels, e.g. `grasp_hat->put_back`.
    #[serde(default)]
    pub expected: Vec<String>,
    /// Expected failure kind instead of a plan, e.g. `inconsistent_attributes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseResult {
    pub name: String,
    pub passed: bool,
    pub expected: Vec<String>,
    pub actual: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_violation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingReport {
    pub n_cases: usize,
    pub n_passed: usize,
    pub accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    pub cases: Vec<CaseResult>,
}

const BUNDLED_CASES: &str = include_str!("../../data/routing_cases.json");

impl RoutingCase {
    pub fn bundled() -> Vec<RoutingCase> {
        serde_json::from_str(BUNDLED_CASES).expect("bundled routing cases parse")
    }
}

fn error_kind(e: &PlanError) -> &'static str {
    match e {
        PlanError::UnknownCategory(_) => "unknown_category",
        PlanError::OracleUnavailable(_) => "oracle_unavailable",
        PlanError::InconsistentAttributes(_) => "inconsistent_attributes",
        PlanError::AlreadyDecided(_) => "already_decided",
        PlanError::UnknownNode(_) => "unknown_node",
        PlanError::InvalidRegistry(_) => "invalid_registry",
    }
}

/// Runs every case through the planner and compares action labels. A case
/// also fails if its gate trace breaks the gating invariants.
pub fn evaluate_routing(registry: &CategoryRegistry, cases: &[RoutingCase]) -> RoutingReport {
    let results: Vec<CaseResult> = cases
        .iter()
        .map(|case| {
            let mut oracle = case.script.clone();
            let (actual, error, trace_violation) = match plan(&mut oracle, registry) {
                Ok((p, trace)) => (p.labels(), None, trace.check_invariants().err()),
                Err(e) => (vec![], Some(e), None),
            };
            let outcome_ok = match (&case.expected_error, &error) {
                (Some(kind), Some(e)) => kind == error_kind(e),
                (None, None) => actual == case.expected,
                _ => false,
            };
            CaseResult {
                name: case.name.clone(),
                passed: outcome_ok && trace_violation.is_none(),
                expected: case.expected.clone(),
                actual,
                error: error.map(|e| e.to_string()),
                trace_violation,
            }
        })
        .collect();
    let n_passed = results.iter().filter(|r| r.passed).count();
    let warning = if cases.is_empty() {
        log::warn!("routing evaluation ran on an empty case list");
        Some("empty case list; accuracy is vacuous".to_string())
    } else {
        None
    };
    RoutingReport {
        n_cases: cases.len(),
        n_passed,
        accuracy: if cases.is_empty() { 1.0 } else { n_passed as f64 / cases.len() as f64 },
        warning,
        cases: results,
    }
}
