use std::collections::{HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

/// One behavior of the tutoring agent.
///
/// `behavior` describes the student behavior that moves the agent into this
/// node and is empty only for the root. The root additionally carries the
/// message that opens every conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    #[serde(default)]
    pub behavior: String,
    pub instruction: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub start_message: String,
}

impl Node {
    pub fn root(id: impl Into<String>, start_message: impl Into<String>, instruction: impl Into<String>) -> Self {
        Self {
            id: NodeId::new(id),
            behavior: String::new(),
            instruction: instruction.into(),
            start_message: start_message.into(),
        }
    }

    pub fn behavior(id: impl Into<String>, behavior: impl Into<String>, instruction: impl Into<String>) -> Self {
        Self {
            id: NodeId::new(id),
            behavior: behavior.into(),
            instruction: instruction.into(),
            start_message: String::new(),
        }
    }

    pub fn is_root(&self) -> bool {
        self.behavior.trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub parent: NodeId,
    pub child: NodeId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn into_result(self) -> Result<Vec<String>> {
        if self.errors.is_empty() {
            Ok(self.warnings)
        } else {
            Err(Error::Validation(self.errors.join("; ")))
        }
    }
}

/// Directed graph of agent behaviors. Cycles are allowed.
///
/// Child order follows edge insertion order; it determines how options are
/// numbered when routing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDiagram {
    pub root_id: NodeId,
    pub nodes: Vec<Node>,
    #[serde(default)]
    pub edges: Vec<Edge>,
}

impl StateDiagram {
    pub fn new(root: Node) -> Self {
        Self {
            root_id: root.id.clone(),
            nodes: vec![root],
            edges: Vec::new(),
        }
    }

    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.iter().find(|n| &n.id == id)
    }

    pub fn root(&self) -> Option<&Node> {
        self.node(&self.root_id)
    }

    pub fn children(&self, id: &NodeId) -> Vec<&Node> {
        self.edges
            .iter()
            .filter(|e| &e.parent == id)
            .filter_map(|e| self.node(&e.child))
            .collect()
    }

    pub fn add_node(&mut self, node: Node) -> Result<()> {
        if self.node(&node.id).is_some() {
            return Err(Error::validation(format!("duplicate node id {}", node.id)));
        }
        if node.is_root() {
            return Err(Error::validation("multiple roots: non-root nodes need a behavior"));
        }
        self.nodes.push(node);
        Ok(())
    }

    pub fn add_edge(&mut self, parent: impl Into<NodeId>, child: impl Into<NodeId>) -> Result<()> {
        let edge = Edge {
            parent: parent.into(),
            child: child.into(),
        };
        if edge.parent == edge.child {
            return Err(Error::validation(format!("self-edge on {}", edge.parent)));
        }
        for id in [&edge.parent, &edge.child] {
            if self.node(id).is_none() {
                return Err(Error::NotFound(format!("node {id}")));
            }
        }
        if self.edges.contains(&edge) {
            return Err(Error::validation(format!(
                "duplicate edge {} -> {}",
                edge.parent, edge.child
            )));
        }
        self.edges.push(edge);
        Ok(())
    }

    /// Checks every structural invariant. Unreachable nodes are warnings.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let errors = &mut report.errors;

        let mut seen = HashSet::new();
        for n in &self.nodes {
            if !seen.insert(&n.id) {
                errors.push(format!("duplicate node id {}", n.id));
            }
        }

        let roots: Vec<&Node> = self.nodes.iter().filter(|n| n.is_root()).collect();
        match roots.len() {
            0 => errors.push("no root: exactly one node must have an empty behavior".into()),
            1 => {
                let root = roots[0];
                if root.id != self.root_id {
                    errors.push(format!(
                        "root_id {} does not name the root node {}",
                        self.root_id, root.id
                    ));
                }
                if root.start_message.trim().is_empty() {
                    errors.push("root has no start message".into());
                }
                if root.instruction.trim().is_empty() {
                    errors.push("root has no instruction".into());
                }
            }
            _ => errors.push(format!(
                "multiple roots: {}",
                roots.iter().map(|n| n.id.as_str()).collect::<Vec<_>>().join(", ")
            )),
        }

        for n in self.nodes.iter().filter(|n| !n.is_root()) {
            if n.instruction.trim().is_empty() {
                errors.push(format!("node {} has no instruction", n.id));
            }
        }

        let mut edges = HashSet::new();
        for e in &self.edges {
            if e.parent == e.child {
                errors.push(format!("self-edge on {}", e.parent));
            }
            if !edges.insert(e) {
                errors.push(format!("duplicate edge {} -> {}", e.parent, e.child));
            }
            for id in [&e.parent, &e.child] {
                if self.node(id).is_none() {
                    errors.push(format!("edge references unknown node {id}"));
                }
            }
        }

        if self.node(&self.root_id).is_some() {
            let reachable = self.reachable_from(&self.root_id);
            for n in &self.nodes {
                if !reachable.contains(&n.id) {
                    report.warnings.push(format!("node {} is unreachable from the root", n.id));
                }
            }
        }
        report
    }

    fn reachable_from(&self, start: &NodeId) -> HashSet<NodeId> {
        let mut seen = HashSet::from([start.clone()]);
        let mut queue = VecDeque::from([start.clone()]);
        while let Some(id) = queue.pop_front() {
            for e in self.edges.iter().filter(|e| e.parent == id) {
                if seen.insert(e.child.clone()) {
                    queue.push_back(e.child.clone());
                }
            }
        }
        seen
    }

    /// The four-node review diagram bundled with the starter project.
    pub fn starter() -> Self {
        let mut d = StateDiagram::new(Node::root(
            "root",
            "Are you ready to review the concepts you learned last time?",
            "Ask the student what they know about the state changes between solid, liquid, and gas.",
        ));
        d.nodes.push(Node::behavior(
            "explains-well",
            "The student explains the state changes well.",
            "Praise the student and ask them to explain with real-life examples.",
        ));
        d.nodes.push(Node::behavior(
            "explains-poorly",
            "The student does not explain the state changes well.",
            "Explain the state changes step by step.",
        ));
        d.nodes.push(Node::behavior(
            "understood",
            "The student understands the state changes well.",
            "Praise the student and finish the lesson.",
        ));
        for (p, c) in [
            ("root", "explains-well"),
            ("root", "explains-poorly"),
            ("explains-well", "understood"),
            ("explains-poorly", "understood"),
        ] {
            d.edges.push(Edge {
                parent: p.into(),
                child: c.into(),
            });
        }
        d
    }
}
