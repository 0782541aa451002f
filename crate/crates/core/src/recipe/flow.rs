use std::collections::{HashMap, VecDeque};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use thiserror::Error;

use super::diagnostics::{nearest, Diagnostic, DiagnosticCode};
use super::{FlowGraph, END, START};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FlowError {
    #[error("invalid flow cursor '{0}'")]
    InvalidCursor(String),
}

/// Next node after `cursor`, following `on_success` or `on_fail`.
pub fn advance_flow<'a>(
    flow: &'a FlowGraph,
    cursor: &str,
    outcome_success: bool,
) -> Result<&'a str, FlowError> {
    let invalid = || FlowError::InvalidCursor(cursor.to_string());
    if cursor == END {
        return Err(invalid());
    }
    let node = flow.nodes.get(cursor).ok_or_else(invalid)?;
    let target = if outcome_success {
        node.on_success.as_deref()
    } else {
        node.on_fail.as_deref()
    };
    let target = target.ok_or_else(invalid)?;
    // Only a graph that passed validate_flow is guaranteed to be closed.
    flow.nodes
        .get_key_value(target)
        .map(|(k, _)| k.as_str())
        .ok_or_else(invalid)
}

/// Static checks over a flow graph; empty iff the graph is well formed.
pub fn validate_flow(flow: &FlowGraph) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let has_start = flow.contains(START);
    let has_end = flow.contains(END);
    if !has_start {
        out.push(Diagnostic::new(
            DiagnosticCode::MissingStart,
            "flow has no 'start' node",
        ));
    }
    if !has_end {
        out.push(Diagnostic::new(
            DiagnosticCode::MissingEnd,
            "flow has no 'end' node",
        ));
    }

    let names: Vec<&str> = flow.nodes.keys().map(String::as_str).collect();
    let mut structurally_ok = has_start && has_end;
    for (name, node) in &flow.nodes {
        if name == END {
            if node.on_success.is_some() || node.on_fail.is_some() {
                out.push(
                    Diagnostic::new(DiagnosticCode::InvalidValue, "'end' cannot have successors")
                        .on_node(name),
                );
            }
            continue;
        }
        if name != START && node.step.is_none() {
            out.push(
                Diagnostic::new(
                    DiagnosticCode::MissingKey,
                    format!("node '{name}' has no station task"),
                )
                .on_node(name),
            );
        }
        for (edge, target) in [("onSuccess", &node.on_success), ("onFail", &node.on_fail)] {
            match target {
                None => {
                    structurally_ok = false;
                    out.push(
                        Diagnostic::new(
                            DiagnosticCode::MissingEdge,
                            format!("node '{name}' has no {edge} edge"),
                        )
                        .on_node(name),
                    );
                }
                Some(t) if !flow.contains(t) => {
                    structurally_ok = false;
                    out.push(
                        Diagnostic::new(
                            DiagnosticCode::DanglingTarget,
                            format!("{edge} of '{name}' targets unknown node '{t}'"),
                        )
                        .on_node(name)
                        .suggest(nearest(t, names.iter().copied())),
                    );
                }
                Some(_) => {}
            }
        }
    }
    if !structurally_ok {
        return out;
    }

    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let success: Vec<Option<usize>> = flow
        .nodes
        .values()
        .map(|n| n.on_success.as_deref().map(|t| index[t]))
        .collect();
    let fail: Vec<Option<usize>> = flow
        .nodes
        .values()
        .map(|n| n.on_fail.as_deref().map(|t| index[t]))
        .collect();
    let start = index[START];
    let end = index[END];

    // end must be reachable from start over on_success edges alone
    let mut seen = vec![false; names.len()];
    let mut reached_end = false;
    let mut queue = VecDeque::from([start]);
    while let Some(n) = queue.pop_front() {
        if seen[n] {
            continue;
        }
        seen[n] = true;
        if n == end {
            reached_end = true;
            break;
        }
        if let Some(t) = success[n] {
            queue.push_back(t);
        }
    }
    if !reached_end {
        out.push(
            Diagnostic::new(
                DiagnosticCode::UnreachableEnd,
                "'end' is not reachable from 'start' along onSuccess edges",
            )
            .on_node(START),
        );
    }

    // every node must be able to drain to end over any edge mix
    let mut reaches_end = vec![false; names.len()];
    reaches_end[end] = true;
    let mut changed = true;
    while changed {
        changed = false;
        for n in 0..names.len() {
            if reaches_end[n] {
                continue;
            }
            let ok = success[n].is_some_and(|t| reaches_end[t])
                || fail[n].is_some_and(|t| reaches_end[t]);
            if ok {
                reaches_end[n] = true;
                changed = true;
            }
        }
    }
    for (n, name) in names.iter().enumerate() {
        if !reaches_end[n] {
            out.push(
                Diagnostic::new(
                    DiagnosticCode::DeadEnd,
                    format!("node '{name}' can never reach 'end'"),
                )
                .on_node(*name),
            );
        }
    }

    for scc in cycles(names.len(), |n| fail[n].into_iter().collect(), |_| true) {
        let name = names[scc[0]];
        out.push(
            Diagnostic::new(
                DiagnosticCode::FailCycle,
                format!("onFail edges form a cycle through '{name}'"),
            )
            .on_node(name),
        );
    }

    let guarded: Vec<bool> = flow
        .nodes
        .values()
        .map(|n| n.step.as_ref().is_some_and(|s| s.guarded))
        .collect();
    for scc in cycles(
        names.len(),
        |n| success[n].into_iter().chain(fail[n]).collect(),
        |n| !guarded[n],
    ) {
        let name = names[scc[0]];
        out.push(
            Diagnostic::new(
                DiagnosticCode::UnguardedCycle,
                format!("cycle through '{name}' has no threshold-guarded step"),
            )
            .on_node(name),
        );
    }
    out
}

/// Cyclic strongly connected components of the subgraph induced by `keep`,
/// each sorted, ordered by their first node.
fn cycles(
    len: usize,
    edges: impl Fn(usize) -> Vec<usize>,
    keep: impl Fn(usize) -> bool,
) -> Vec<Vec<usize>> {
    let mut graph = DiGraph::<usize, ()>::new();
    let ids: Vec<_> = (0..len).map(|n| graph.add_node(n)).collect();
    for n in (0..len).filter(|&n| keep(n)) {
        for t in edges(n) {
            if keep(t) {
                graph.add_edge(ids[n], ids[t], ());
            }
        }
    }
    let mut found: Vec<Vec<usize>> = tarjan_scc(&graph)
        .into_iter()
        .filter(|scc| scc.len() > 1 || graph.contains_edge(scc[0], scc[0]))
        .map(|scc| {
            let mut nodes: Vec<usize> = scc.into_iter().map(|i| graph[i]).collect();
            nodes.sort_unstable();
            nodes
        })
        .collect();
    found.sort();
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    fn listing_flow() -> FlowGraph {
        FlowGraph::new()
            .with_start("solid_disp", END)
            .with_step("solid_disp", "quantos", "dispense_solid", "liquid_disp", END, false)
            .with_step("liquid_disp", "pump", "dispense_liquid", END, END, false)
            .with_end()
    }

    #[test]
    fn listing_flow_is_valid() {
        assert!(validate_flow(&listing_flow()).is_empty());
    }

    #[test]
    fn advance_follows_edges() {
        let flow = listing_flow();
        assert_eq!(advance_flow(&flow, "solid_disp", true).unwrap(), "liquid_disp");
        assert_eq!(advance_flow(&flow, "solid_disp", false).unwrap(), END);
        assert_eq!(advance_flow(&flow, START, true).unwrap(), "solid_disp");
    }

    #[test]
    fn end_and_unknown_cursors_are_invalid() {
        let flow = listing_flow();
        assert_eq!(
            advance_flow(&flow, END, true),
            Err(FlowError::InvalidCursor(END.into()))
        );
        assert!(advance_flow(&flow, "nowhere", false).is_err());
    }

    #[test]
    fn unreachable_end_is_reported_once() {
        // 'a' loops on success (guarded) and only drains to end on failure
        let flow = FlowGraph::new()
            .with_start("a", END)
            .with_step("a", "balance", "weigh", "a", END, true)
            .with_end();
        let diags = validate_flow(&flow);
        assert_eq!(
            diags.iter().map(|d| d.code).collect::<Vec<_>>(),
            [DiagnosticCode::UnreachableEnd]
        );
    }

    #[test]
    fn crystallisation_loop_through_guarded_weigh_is_valid() {
        let flow = FlowGraph::new()
            .with_start("weigh_initial", END)
            .with_step("weigh_initial", "balance", "record_mass", "heat", END, false)
            .with_step("heat", "hotplate", "heat", "weigh", END, false)
            .with_step("weigh", "balance", "check_mass", END, "heat", true)
            .with_end();
        assert!(validate_flow(&flow).is_empty());
    }

    #[test]
    fn unguarded_cycle_is_rejected() {
        let flow = FlowGraph::new()
            .with_start("heat", END)
            .with_step("heat", "hotplate", "heat", "weigh", END, false)
            .with_step("weigh", "balance", "weigh", END, "heat", false)
            .with_end();
        let codes: Vec<_> = validate_flow(&flow).iter().map(|d| d.code).collect();
        assert_eq!(codes, [DiagnosticCode::UnguardedCycle]);
    }

    #[test]
    fn fail_cycle_is_rejected_even_when_guarded() {
        let flow = FlowGraph::new()
            .with_start("a", END)
            .with_step("a", "s", "op", END, "b", true)
            .with_step("b", "s", "op", END, "a", true)
            .with_end();
        let codes: Vec<_> = validate_flow(&flow).iter().map(|d| d.code).collect();
        assert_eq!(codes, [DiagnosticCode::FailCycle]);
    }

    #[test]
    fn dangling_target_suggests_nearest_node() {
        let flow = FlowGraph::new()
            .with_start("solid_disp", END)
            .with_step("solid_disp", "quantos", "dispense_solid", "liquid_dispp", END, false)
            .with_step("liquid_disp", "pump", "dispense_liquid", END, END, false)
            .with_end();
        let diags = validate_flow(&flow);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, DiagnosticCode::DanglingTarget);
        assert_eq!(diags[0].suggestion.as_deref(), Some("liquid_disp"));
    }

    #[test]
    fn dead_end_node_is_reported() {
        let flow = FlowGraph::new()
            .with_start(END, END)
            .with_step("orphan", "s", "op", "orphan", "orphan", true)
            .with_end();
        let diags = validate_flow(&flow);
        let codes: Vec<_> = diags.iter().map(|d| d.code).collect();
        assert!(codes.contains(&DiagnosticCode::DeadEnd));
        assert!(codes.contains(&DiagnosticCode::FailCycle));
    }

    #[test]
    fn minimal_start_end_flow_is_valid() {
        let flow = FlowGraph::new().with_start(END, END).with_end();
        assert!(validate_flow(&flow).is_empty());
        assert_eq!(advance_flow(&flow, START, true).unwrap(), END);
    }
}
