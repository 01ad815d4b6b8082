use serde::{Deserialize, Serialize};

use super::{CategoryKind, CategoryRegistry, GarmentFamily, Layer, Leg, PlanError, PlanResult, Sleeve};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateState {
    Undecided,
    Accept,
    Reject,
    Dormant,
    FeedbackPending,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateNode {
    /// Slash-separated path from the root, e.g. `shirt/sleeve_long/sleeve_left`.
    pub name: String,
    pub layer: Option<Layer>,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Accepting a node rejects its undecided siblings in the same group.
    pub group: Option<String>,
    pub state: GateState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateTrace {
    pub nodes: Vec<GateNode>,
    /// Every state change in order.
    pub events: Vec<(NodeId, GateState)>,
}

impl GateTrace {
    /// Full decision tree for every registered category, all nodes undecided
    /// except the root.
    pub fn build(registry: &CategoryRegistry) -> Self {
        let mut t = GateTrace {
            nodes: vec![GateNode {
                name: "root".into(),
                layer: None,
                parent: None,
                children: vec![],
                group: None,
                state: GateState::Accept,
            }],
            events: vec![],
        };
        for c in &registry.categories {
            let cat = t.add(0, &c.name, Layer::Type, Some("type"));
            if c.kind == CategoryKind::Single {
                continue;
            }
            let family = c.family.expect("validated registry");
            t.add(cat, "hood", Layer::Structure, Some("structure"));
            t.add(cat, "flatten", Layer::Structure, Some("structure"));
            if family.has_sleeves() {
                for s in [Sleeve::Sleeveless, Sleeve::Short, Sleeve::Long] {
                    let n = t.add(cat, s.node_name(), Layer::Attribute, Some("sleeve"));
                    t.add(n, "sleeve_left", Layer::Attribute, None);
                    t.add(n, "sleeve_right", Layer::Attribute, None);
                }
            }
            if family.has_legs() {
                t.add(cat, Leg::Short.node_name(), Layer::Attribute, Some("leg"));
                let long = t.add(cat, Leg::Long.node_name(), Layer::Attribute, Some("leg"));
                t.add(long, "legs", Layer::Attribute, None);
            }
            match family {
                GarmentFamily::UpperBody | GarmentFamily::Dress => {
                    t.add(cat, "shoulder_to_hem", Layer::Finalization, None);
                }
                GarmentFamily::Flat => {
                    t.add(cat, "half_fold", Layer::Finalization, None);
                }
                GarmentFamily::LowerBody => {}
            }
        }
        t
    }

    fn add(&mut self, parent: NodeId, name: &str, layer: Layer, group: Option<&str>) -> NodeId {
        let id = self.nodes.len();
        let full = if parent == 0 {
            name.to_string()
        } else {
            format!("{}/{name}", self.nodes[parent].name)
        };
        self.nodes.push(GateNode {
            name: full,
            layer: Some(layer),
            parent: Some(parent),
            children: vec![],
            group: group.map(str::to_string),
            state: GateState::Undecided,
        });
        self.nodes[parent].children.push(id);
        id
    }

    pub fn find(&self, name: &str) -> PlanResult<NodeId> {
        self.nodes
            .iter()
            .position(|n| n.name == name)
            .ok_or_else(|| PlanError::UnknownNode(name.to_string()))
    }

    pub fn state(&self, name: &str) -> PlanResult<GateState> {
        Ok(self.nodes[self.find(name)?].state)
    }

    fn set(&mut self, id: NodeId, s: GateState) {
        self.nodes[id].state = s;
        self.events.push((id, s));
    }

    pub fn descendants(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = vec![];
        let mut stack: Vec<NodeId> = self.nodes[id].children.iter().rev().copied().collect();
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.nodes[n].children.iter().rev());
        }
        out
    }

    /// Marks a node as waiting on a visual re-check before its action is
    /// committed.
    pub fn mark_feedback(&mut self, id: NodeId) -> PlanResult<()> {
        if self.nodes[id].state != GateState::Undecided {
            return Err(PlanError::AlreadyDecided(self.nodes[id].name.clone()));
        }
        self.set(id, GateState::FeedbackPending);
        Ok(())
    }

    pub fn decide(&mut self, id: NodeId, accept: bool) -> PlanResult<()> {
        if !matches!(self.nodes[id].state, GateState::Undecided | GateState::FeedbackPending) {
            return Err(PlanError::AlreadyDecided(self.nodes[id].name.clone()));
        }
        if accept {
            self.set(id, GateState::Accept);
            if let (Some(group), Some(parent)) = (self.nodes[id].group.clone(), self.nodes[id].parent) {
                let siblings: Vec<NodeId> = self.nodes[parent]
                    .children
                    .iter()
                    .copied()
                    .filter(|&s| {
                        s != id
                            && self.nodes[s].group.as_deref() == Some(group.as_str())
                            && self.nodes[s].state == GateState::Undecided
                    })
                    .collect();
                for s in siblings {
                    self.reject(s);
                }
            }
        } else {
            self.reject(id);
        }
        Ok(())
    }

    fn reject(&mut self, id: NodeId) {
        self.set(id, GateState::Reject);
        for d in self.descendants(id) {
            if self.nodes[d].state != GateState::Dormant {
                self.set(d, GateState::Dormant);
            }
        }
    }

    /// Gating soundness: one accepted Type-layer node, and every descendant
    /// of a rejected node dormant.
    pub fn check_invariants(&self) -> Result<(), String> {
        let accepted = self.nodes[0]
            .children
            .iter()
            .filter(|&&c| self.nodes[c].state == GateState::Accept)
            .count();
        if accepted != 1 {
            return Err(format!("{accepted} accepted Type-layer nodes"));
        }
        for (id, n) in self.nodes.iter().enumerate() {
            if n.state == GateState::Reject {
                if let Some(d) = self
                    .descendants(id)
                    .into_iter()
                    .find(|&d| self.nodes[d].state != GateState::Dormant)
                {
                    return Err(format!("{} is rejected but {} is not dormant", n.name, self.nodes[d].name));
                }
            }
        }
        Ok(())
    }
}

/// Decides `node` by name on a copy of the trace.
pub fn apply_gate(trace: &GateTrace, node: &str, accept: bool) -> PlanResult<GateTrace> {
    let mut t = trace.clone();
    let id = t.find(node)?;
    t.decide(id, accept)?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree() -> GateTrace {
        GateTrace::build(&CategoryRegistry::default())
    }

    #[test]
    fn reject_makes_subtree_dormant() {
        let t = apply_gate(&tree(), "pants", false).unwrap();
        assert_eq!(t.state("pants").unwrap(), GateState::Reject);
        for name in ["pants/flatten", "pants/leg_long", "pants/leg_long/legs"] {
            assert_eq!(t.state(name).unwrap(), GateState::Dormant);
        }
    }

    #[test]
    fn accepting_a_type_rejects_siblings() {
        let t = apply_gate(&tree(), "clothes_with_hood", true).unwrap();
        assert!(t.check_invariants().is_ok());
        assert_eq!(t.state("tissue").unwrap(), GateState::Reject);
        assert_eq!(t.state("pants/leg_long/legs").unwrap(), GateState::Dormant);
        assert_eq!(t.state("clothes_with_hood/hood").unwrap(), GateState::Undecided);
    }

    #[test]
    fn redeciding_fails() {
        let t = apply_gate(&tree(), "towel", true).unwrap();
        assert!(matches!(apply_gate(&t, "towel", false), Err(PlanError::AlreadyDecided(_))));
        assert!(matches!(apply_gate(&t, "curtain", true), Err(PlanError::AlreadyDecided(_))));
        assert!(matches!(apply_gate(&t, "nope", true), Err(PlanError::UnknownNode(_))));
    }

    #[test]
    fn no_accept_violates_invariants() {
        assert!(tree().check_invariants().is_err());
    }
}
