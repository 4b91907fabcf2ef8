//! The implication diagram between memory properties and its check against a
//! set of verdicts.
//!
//! Nodes are `(property, level)` pairs; ungraded properties (ESP, FMP, UAP)
//! only appear at level `uniform`, meaning "supported". An edge fires when its
//! condition holds for the system: a violation is an edge whose antecedents
//! are all supported while its consequent is refuted. Non-implications are
//! never violated, only witnessed.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::systems::CompactnessFlags;
use crate::testers::{Level, Property, PropertyVerdict, Witness};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Node {
    pub property: Property,
    pub level: Level,
}

impl Node {
    pub fn new(property: Property, level: Level) -> Self {
        Self { property, level }
    }

    pub fn supported(property: Property) -> Self {
        Self::new(property, Level::Uniform)
    }

    pub fn label(&self) -> String {
        if self.property.graded() {
            format!("{}@{}", self.property, self.level)
        } else {
            self.property.to_string()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Always,
    StateCompact,
    StateAndInputCompact,
    InputMetrizable,
    /// The input family is invariant under shifts.
    ShiftInvariantInputs,
}

/// What the checker knows about the system and its inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ConditionFlags {
    pub state_compact: bool,
    pub input_compact: bool,
    pub input_metrizable: bool,
    pub shift_invariant_inputs: bool,
}

impl ConditionFlags {
    pub fn new(flags: CompactnessFlags, shift_invariant_inputs: bool) -> Self {
        Self {
            state_compact: flags.state_compact,
            input_compact: flags.input_compact,
            input_metrizable: flags.input_metrizable,
            shift_invariant_inputs,
        }
    }
}

impl Condition {
    pub fn holds(self, f: &ConditionFlags) -> bool {
        match self {
            Condition::Always => true,
            Condition::StateCompact => f.state_compact,
            Condition::StateAndInputCompact => f.state_compact && f.input_compact,
            Condition::InputMetrizable => f.input_metrizable,
            Condition::ShiftInvariantInputs => f.shift_invariant_inputs,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Implication,
    /// One direction of a declared equivalence; its converse is stored too.
    Equivalence,
    /// Declared not to hold in general.
    NonImplication,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Edge {
    pub id: String,
    /// Conjunctive antecedent.
    pub from: Vec<Node>,
    pub to: Node,
    pub condition: Condition,
    pub kind: EdgeKind,
    pub provenance: String,
    /// Catalog system expected to witness a non-implication.
    pub witness_system: Option<String>,
}

impl Edge {
    pub fn describe(&self) -> String {
        let from: Vec<String> = self.from.iter().map(Node::label).collect();
        let arrow = match self.kind {
            EdgeKind::Implication => "=>",
            EdgeKind::Equivalence => "=>(eq)",
            EdgeKind::NonImplication => "=/=>",
        };
        format!("{} {arrow} {}", from.join(" & "), self.to.label())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImplicationDiagram {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeVerdict {
    pub node: String,
    pub level: Level,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub edge: String,
    pub relation: String,
    pub condition: Condition,
    pub antecedents: Vec<NodeVerdict>,
    pub consequent: NodeVerdict,
    pub witness: Option<Witness>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WitnessedNonImplication {
    pub edge: String,
    pub relation: String,
    pub antecedents: Vec<NodeVerdict>,
    pub consequent: NodeVerdict,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DiagramCheck {
    pub violations: Vec<Violation>,
    pub non_implications: Vec<WitnessedNonImplication>,
}

const GRADED: [Property; 4] = [Property::Sfp, Property::Ifp, Property::Ssfp, Property::Sifp];
const LEVELS: [Level; 3] = [Level::Pointwise, Level::StateUniform, Level::Uniform];

fn slug(l: Level) -> String {
    l.label().replace('_', "-")
}

impl ImplicationDiagram {
    /// The encoded diagram.
    pub fn standard() -> Self {
        use Property::*;
        let n = Node::new;
        let s = Node::supported;
        let mut edges = Vec::new();
        let mut add = |id: &str, from: Vec<Node>, to: Node, condition, kind, provenance: &str| {
            edges.push(Edge {
                id: id.to_string(),
                from,
                to,
                condition,
                kind,
                provenance: provenance.to_string(),
                witness_system: None,
            })
        };

        add(
            "esp-fmp",
            vec![s(Esp)],
            s(Fmp),
            Condition::StateCompact,
            EdgeKind::Implication,
            "compact solution space: the echo state property gives fading memory",
        );
        add(
            "esp-ssfp-state-uniform",
            vec![s(Esp)],
            n(Ssfp, Level::StateUniform),
            Condition::StateCompact,
            EdgeKind::Implication,
            "compact solution space: the echo state property gives state-uniform shifted state forgetting",
        );
        add(
            "sifp-state-uniform-esp",
            vec![n(Sifp, Level::StateUniform)],
            s(Esp),
            Condition::StateCompact,
            EdgeKind::Implication,
            "compact solution space: state-uniform shifted input forgetting makes solutions unique",
        );
        add(
            "esp-ssfp-uniform",
            vec![s(Esp)],
            n(Ssfp, Level::Uniform),
            Condition::StateAndInputCompact,
            EdgeKind::Implication,
            "compact solution and input spaces: the echo state property gives uniform shifted state forgetting",
        );
        add(
            "esp-fmp-sifp-state-uniform",
            vec![s(Esp), s(Fmp)],
            n(Sifp, Level::StateUniform),
            Condition::InputMetrizable,
            EdgeKind::Implication,
            "metrizable inputs: echo states with product-topology fading memory give state-uniform shifted input forgetting",
        );
        add(
            "esp-sfp-uap",
            vec![s(Esp), n(Sfp, Level::Uniform)],
            s(Uap),
            Condition::Always,
            EdgeKind::Equivalence,
            "uniform attraction equals echo states plus uniform state forgetting",
        );
        add(
            "uap-esp",
            vec![s(Uap)],
            s(Esp),
            Condition::Always,
            EdgeKind::Equivalence,
            "uniform attraction equals echo states plus uniform state forgetting",
        );
        add(
            "uap-sfp-uniform",
            vec![s(Uap)],
            n(Sfp, Level::Uniform),
            Condition::Always,
            EdgeKind::Equivalence,
            "uniform attraction equals echo states plus uniform state forgetting",
        );
        for l in LEVELS {
            add(
                &format!("steady-ifp-{}", slug(l)),
                vec![n(Steady, l)],
                n(Ifp, l),
                Condition::Always,
                EdgeKind::Equivalence,
                "the unique steady-state property is input forgetting",
            );
            add(
                &format!("ifp-steady-{}", slug(l)),
                vec![n(Ifp, l)],
                n(Steady, l),
                Condition::Always,
                EdgeKind::Equivalence,
                "the unique steady-state property is input forgetting",
            );
        }
        for p in GRADED {
            add(
                &format!("{}-uniform-state-uniform", p.label().to_lowercase()),
                vec![n(p, Level::Uniform)],
                n(p, Level::StateUniform),
                Condition::Always,
                EdgeKind::Implication,
                "definition: uniform convergence is in particular state-uniform",
            );
            add(
                &format!("{}-state-uniform-pointwise", p.label().to_lowercase()),
                vec![n(p, Level::StateUniform)],
                n(p, Level::Pointwise),
                Condition::Always,
                EdgeKind::Implication,
                "definition: state-uniform convergence is in particular pointwise",
            );
        }
        for l in LEVELS {
            add(
                &format!("sfp-ifp-{}", slug(l)),
                vec![n(Sfp, l)],
                n(Ifp, l),
                Condition::Always,
                EdgeKind::Implication,
                "definition: reachable states are states",
            );
            add(
                &format!("ssfp-sifp-{}", slug(l)),
                vec![n(Ssfp, l)],
                n(Sifp, l),
                Condition::Always,
                EdgeKind::Implication,
                "definition: reachable states are states",
            );
        }
        for (a, b) in [(Sfp, Ssfp), (Ifp, Sifp)] {
            for (x, y) in [(a, b), (b, a)] {
                add(
                    &format!("{}-{}-uniform", x.label().to_lowercase(), y.label().to_lowercase()),
                    vec![n(x, Level::Uniform)],
                    n(y, Level::Uniform),
                    Condition::ShiftInvariantInputs,
                    EdgeKind::Equivalence,
                    "definition: under shift-invariant inputs the uniform forward and pullback sups range over the same set",
                );
            }
        }
        for p in GRADED {
            add(
                &format!("{}-pointwise-not-esp", p.label().to_lowercase()),
                vec![n(p, Level::Pointwise)],
                s(Esp),
                Condition::Always,
                EdgeKind::NonImplication,
                "non-implication: pointwise forgetting does not give echo states (circle squaring map)",
            );
        }
        for e in edges.iter_mut() {
            if e.kind == EdgeKind::NonImplication {
                e.witness_system = Some("circle_square".to_string());
            }
        }

        let mut nodes: Vec<Node> = vec![s(Esp), s(Fmp), s(Uap)];
        for p in GRADED.into_iter().chain([Steady]) {
            for l in LEVELS {
                nodes.push(n(p, l));
            }
        }
        Self { nodes, edges }
    }

    /// Checks node references, levels of ungraded nodes, and acyclicity of the
    /// unconditional implication edges.
    pub fn validate(&self) -> Result<()> {
        for e in &self.edges {
            if e.from.is_empty() {
                return Err(Error::MalformedDiagram(format!("edge {} has no antecedent", e.id)));
            }
            for node in e.from.iter().chain([&e.to]) {
                if !self.nodes.contains(node) {
                    return Err(Error::MalformedDiagram(format!(
                        "edge {} references unknown node {}",
                        e.id,
                        node.label()
                    )));
                }
            }
            if e.provenance.is_empty() {
                return Err(Error::MalformedDiagram(format!("edge {} lacks provenance", e.id)));
            }
        }
        for node in &self.nodes {
            if !node.property.graded() && node.level != Level::Uniform {
                return Err(Error::MalformedDiagram(format!(
                    "ungraded node {} at level {}",
                    node.property, node.level
                )));
            }
            if node.level.rank().is_none_or(|r| r == 0) {
                return Err(Error::MalformedDiagram(format!(
                    "node {} at a non-supporting level",
                    node.label()
                )));
            }
        }
        // depth-first search for a cycle among unconditional implications
        let idx = |n: &Node| self.nodes.iter().position(|m| m == n).expect("checked above");
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            if e.kind == EdgeKind::Implication && e.condition == Condition::Always {
                for f in &e.from {
                    adj[idx(f)].push(idx(&e.to));
                }
            }
        }
        let mut state = vec![0u8; self.nodes.len()];
        fn visit(v: usize, adj: &[Vec<usize>], state: &mut [u8]) -> bool {
            state[v] = 1;
            for &w in &adj[v] {
                if state[w] == 1 || (state[w] == 0 && visit(w, adj, state)) {
                    return true;
                }
            }
            state[v] = 2;
            false
        }
        for v in 0..self.nodes.len() {
            if state[v] == 0 && visit(v, &adj, &mut state) {
                return Err(Error::MalformedDiagram(format!(
                    "cycle through {}",
                    self.nodes[v].label()
                )));
            }
        }
        Ok(())
    }
}

fn supporting<'a>(verdicts: &'a [PropertyVerdict], node: &Node) -> Option<&'a PropertyVerdict> {
    verdicts
        .iter()
        .find(|v| v.property == node.property && v.level.reaches(node.level))
}

fn refuting<'a>(verdicts: &'a [PropertyVerdict], node: &Node) -> Option<&'a PropertyVerdict> {
    verdicts
        .iter()
        .find(|v| v.property == node.property && v.level.rank().is_some() && !v.level.reaches(node.level))
}

/// Violations of the diagram's implications and witnessed non-implications.
/// Edges with a node lacking verdicts are skipped; adding verdicts never
/// removes a violation.
pub fn check_diagram(
    verdicts: &[PropertyVerdict],
    flags: &ConditionFlags,
    diagram: &ImplicationDiagram,
) -> Result<DiagramCheck> {
    diagram.validate()?;
    let mut out = DiagramCheck::default();
    for e in &diagram.edges {
        if !e.condition.holds(flags) {
            continue;
        }
        let Some(ante) = e
            .from
            .iter()
            .map(|n| {
                supporting(verdicts, n).map(|v| NodeVerdict {
                    node: n.label(),
                    level: v.level,
                })
            })
            .collect::<Option<Vec<_>>>()
        else {
            continue;
        };
        let Some(cons) = refuting(verdicts, &e.to) else {
            continue;
        };
        let consequent = NodeVerdict {
            node: e.to.label(),
            level: cons.level,
        };
        match e.kind {
            EdgeKind::NonImplication => out.non_implications.push(WitnessedNonImplication {
                edge: e.id.clone(),
                relation: e.describe(),
                antecedents: ante,
                consequent,
            }),
            EdgeKind::Implication | EdgeKind::Equivalence => out.violations.push(Violation {
                edge: e.id.clone(),
                relation: e.describe(),
                condition: e.condition,
                antecedents: ante,
                consequent,
                witness: cons.witness.clone(),
            }),
        }
    }
    Ok(out)
}
