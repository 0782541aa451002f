//! Generated recipes that are valid by construction.

use std::collections::BTreeSet;

use archemist_core::recipe::{
    advance_flow, parse_recipe, to_canonical_yaml, validate_flow, FlowError, FlowGraph, FlowNode, FlowStep,
    OperationSpec, OutputSpec, PropertyValue, Quantity, Recipe, RecipeDoc, TaskRef, Threshold, Unit, END, START,
};
use indexmap::IndexMap;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

#[derive(Debug, Clone)]
enum GenValue {
    Quantity(f64, usize),
    Number(f64),
    Text(String),
    Bool(bool),
    MaterialRef(usize),
}

#[derive(Debug, Clone)]
struct GenOp {
    props: Vec<GenValue>,
    output_name: String,
    threshold: Option<(u8, f64, u32)>,
}

#[derive(Debug, Clone)]
struct GenStep {
    name: String,
    pick: (usize, usize),
    success: usize,
    fail: usize,
    with_args: bool,
    max_iterations: u32,
}

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,7}".prop_filter("reserved", |s| s != START && s != END)
}

fn text() -> impl Strategy<Value = String> {
    prop_oneof![
        ident(),
        Just("15".to_string()),
        Just("true".to_string()),
        Just("3 mg".to_string()),
        Just("°C".to_string()),
        Just(String::new()),
        "[ -~é°]{0,6}",
    ]
}

fn number() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1.0e6..1.0e6f64,
        (-1000i32..1000).prop_map(f64::from),
        proptest::num::f64::NORMAL | proptest::num::f64::ZERO,
    ]
}

fn value() -> impl Strategy<Value = GenValue> {
    prop_oneof![
        (prop_oneof![1.0e-3..1.0e4f64, (1u32..500).prop_map(f64::from)], 0..Unit::RECIPE_UNITS.len())
            .prop_map(|(v, u)| GenValue::Quantity(v, u)),
        number().prop_map(GenValue::Number),
        text().prop_map(GenValue::Text),
        any::<bool>().prop_map(GenValue::Bool),
        any::<usize>().prop_map(GenValue::MaterialRef),
    ]
}

fn op() -> impl Strategy<Value = GenOp> {
    (
        prop::collection::vec(value(), 0..4),
        "[ -~]{0,8}",
        prop::option::of((0u8..3, number(), 2u32..6)),
    )
        .prop_map(|(props, output_name, threshold)| GenOp { props, output_name, threshold })
}

fn steps() -> impl Strategy<Value = Vec<GenStep>> {
    prop::collection::btree_set(ident(), 0..7).prop_flat_map(|names| {
        let n = names.len();
        let per_step = prop::collection::vec(
            (any::<(usize, usize)>(), any::<usize>(), any::<usize>(), any::<bool>(), 1u32..2000),
            n,
        );
        (Just(names), per_step).prop_map(|(names, raw)| {
            names
                .into_iter()
                .zip(raw)
                .map(|(name, (pick, success, fail, with_args, max_iterations))| GenStep {
                    name,
                    pick,
                    success,
                    fail,
                    with_args,
                    max_iterations,
                })
                .collect()
        })
    })
}

pub fn recipe() -> impl Strategy<Value = Recipe> {
    let mat = "[A-Za-z][A-Za-z0-9]{0,4}";
    (
        "[ -~]{0,10}",
        prop::collection::btree_set(mat, 0..3),
        prop::collection::btree_set(mat, 0..3),
        prop::collection::btree_map(ident(), prop::collection::btree_map(ident(), op(), 1..3), 1..4),
        steps(),
        any::<usize>(),
    )
        .prop_map(|(name, liquids, solids, stations, steps, start_fail)| {
            build(name, liquids, solids, stations, steps, start_fail)
        })
}

/// Turns raw draws into a recipe that is valid by construction: success edges
/// only point forward, fail edges point backward only from guarded steps.
fn build(
    name: String,
    liquids: BTreeSet<String>,
    solids: BTreeSet<String>,
    stations: std::collections::BTreeMap<String, std::collections::BTreeMap<String, GenOp>>,
    steps: Vec<GenStep>,
    start_fail: usize,
) -> Recipe {
    let solids: BTreeSet<String> = solids.difference(&liquids).cloned().collect();
    let all: Vec<&String> = liquids.iter().chain(&solids).collect();
    let mut station_ops = IndexMap::new();
    for (station, ops) in &stations {
        let mut specs = Vec::new();
        for (op_name, gen) in ops {
            let mut properties = IndexMap::new();
            for (i, v) in gen.props.iter().enumerate() {
                let (key, value) = match v {
                    GenValue::Quantity(x, u) => (format!("q{i}"), PropertyValue::Quantity(Quantity::new(*x, Unit::RECIPE_UNITS[*u]))),
                    GenValue::Number(x) => (format!("p{i}"), PropertyValue::Number(*x)),
                    GenValue::Text(t) => (format!("t{i}"), PropertyValue::Text(t.clone())),
                    GenValue::Bool(b) => (format!("b{i}"), PropertyValue::Bool(*b)),
                    GenValue::MaterialRef(k) if !all.is_empty() => {
                        ("material".to_string(), PropertyValue::Text(all[k % all.len()].clone()))
                    }
                    GenValue::MaterialRef(_) => continue,
                };
                properties.entry(key).or_insert(value);
            }
            let threshold = gen.threshold.map(|(kind, x, window)| match kind {
                0 => Threshold::Below { limit: x },
                1 => Threshold::Above { limit: x },
                _ => Threshold::Stable { epsilon: x.abs().max(1e-6), window },
            });
            specs.push(OperationSpec {
                op_name: op_name.clone(),
                properties,
                output: OutputSpec { name: gen.output_name.clone(), threshold },
            });
        }
        station_ops.insert(station.clone(), specs);
    }

    let n = steps.len();
    let node_name = |i: usize| if i == n { END.to_string() } else { steps[i].name.clone() };
    let mut flow = FlowGraph::new();
    flow.nodes.insert(
        START.to_string(),
        FlowNode {
            step: None,
            on_success: Some(node_name(0)),
            on_fail: Some(node_name(start_fail % (n + 1))),
        },
    );
    let stations: Vec<(&String, &Vec<OperationSpec>)> = station_ops.iter().collect();
    let picks: Vec<(&String, &OperationSpec)> = steps
        .iter()
        .map(|s| {
            let (station, ops) = stations[s.pick.0 % stations.len()];
            (station, &ops[s.pick.1 % ops.len()])
        })
        .collect();
    let guarded: Vec<bool> = picks.iter().map(|(_, op)| op.output.threshold.is_some()).collect();
    for (i, s) in steps.iter().enumerate() {
        let (station, op) = picks[i];
        let success = i + 1 + s.success % (n - i);
        let fail = if guarded[i] {
            // any earlier step or end
            let k = s.fail % (i + 1);
            if k == i { n } else { k }
        } else {
            // forward through unguarded steps only, so fail edges never cycle
            let later: Vec<usize> = (i + 1..n).filter(|&j| !guarded[j]).chain([n]).collect();
            later[s.fail % later.len()]
        };
        let guarded = guarded[i];
        flow.nodes.insert(
            s.name.clone(),
            FlowNode {
                step: Some(FlowStep {
                    station: station.clone(),
                    task: TaskRef {
                        op_name: op.op_name.clone(),
                        args: if s.with_args { op.flattened_args() } else { Vec::new() },
                    },
                    guarded,
                    max_iterations: s.max_iterations,
                }),
                on_success: Some(node_name(success)),
                on_fail: Some(node_name(fail)),
            },
        );
    }
    flow = flow.with_end();
    Recipe { name, liquids, solids, station_ops, flow }
}

/// Canonical text parses back to the same recipe and re-emits identically.
pub fn check_round_trip(r: &Recipe) -> Result<(), TestCaseError> {
    prop_assert!(validate_flow(&r.flow).is_empty());
    let text = to_canonical_yaml(r);
    let back = parse_recipe(&RecipeDoc::new(text.as_str(), "generated"))
        .map_err(|e| TestCaseError::fail(format!("{e}\n---\n{text}")))?;
    prop_assert_eq!(&back, r);
    prop_assert_eq!(to_canonical_yaml(&back), text);
    Ok(())
}

/// Every node has both successors except `end`, and fail edges always drain.
pub fn check_advance(r: &Recipe) -> Result<(), TestCaseError> {
    for (name, _) in &r.flow.nodes {
        for outcome in [true, false] {
            match advance_flow(&r.flow, name, outcome) {
                Ok(next) => {
                    prop_assert!(name != END);
                    prop_assert!(r.flow.contains(next));
                }
                Err(FlowError::InvalidCursor(c)) => {
                    prop_assert_eq!(name.as_str(), END);
                    prop_assert_eq!(c, END);
                }
            }
        }
    }
    for start in r.flow.nodes.keys().filter(|n| *n != END) {
        let mut cursor = start.as_str();
        let mut steps = 0;
        while cursor != END {
            cursor = advance_flow(&r.flow, cursor, false).unwrap();
            steps += 1;
            prop_assert!(steps <= r.flow.nodes.len());
        }
    }
    Ok(())
}
