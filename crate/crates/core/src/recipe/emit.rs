//! Canonical YAML serialization of a [`Recipe`].

use std::fmt::Write;

use super::units::format_number;
use super::{
    FlowGraph, OperationSpec, OutputSpec, PropertyValue, Recipe, Threshold, DEFAULT_MAX_ITERATIONS,
    END, START,
};

/// Serializes `recipe` in canonical form: lowerCamelCase keys, the single
/// quantity of an operation written as a bare number plus `unit:`, several
/// quantities as inline `"<n> <unit>"` strings.
pub fn to_canonical_yaml(recipe: &Recipe) -> String {
    let mut out = String::new();
    out.push_str("chemical_recipe:\n");
    let _ = writeln!(out, "  name: {}", scalar(&recipe.name));
    out.push_str("  materials:\n");
    let _ = writeln!(out, "    liquids: {}", name_set(recipe.liquids.iter()));
    let _ = writeln!(out, "    solids: {}", name_set(recipe.solids.iter()));
    if recipe.station_ops.is_empty() {
        out.push_str("  stations: {}\n");
    } else {
        out.push_str("  stations:\n");
        for (station, ops) in &recipe.station_ops {
            let _ = writeln!(out, "    {}:", scalar(station));
            out.push_str("      stationOp:\n");
            for op in ops {
                operation(&mut out, op);
            }
        }
    }
    flow(&mut out, &recipe.flow);
    out
}

fn operation(out: &mut String, op: &OperationSpec) {
    let _ = writeln!(out, "        {}:", scalar(&op.op_name));
    let listing_form = op.quantity_count() == 1
        && !op
            .properties
            .values()
            .any(|v| matches!(v, PropertyValue::Number(_)));
    if op.properties.is_empty() {
        out.push_str("          properties: {}\n");
    } else {
        out.push_str("          properties:\n");
        let mut unit = None;
        for (key, value) in &op.properties {
            let text = match value {
                PropertyValue::Quantity(q) if listing_form => {
                    unit = Some(q.unit);
                    format_number(q.value)
                }
                PropertyValue::Quantity(q) => {
                    format!("{} {}", format_number(q.value), q.unit.symbol())
                }
                PropertyValue::Number(n) => format_number(*n),
                PropertyValue::Text(t) => scalar(t),
                PropertyValue::Bool(b) => b.to_string(),
            };
            let _ = writeln!(out, "            {}: {}", scalar(key), text);
        }
        if let Some(u) = unit {
            let _ = writeln!(out, "            unit: {}", scalar(u.symbol()));
        }
    }
    output(out, &op.output);
}

fn output(out: &mut String, spec: &OutputSpec) {
    out.push_str("          output:\n");
    let _ = writeln!(out, "            name: {}", quoted(&spec.name));
    match spec.threshold {
        None => {}
        Some(Threshold::Below { limit }) => {
            let _ = writeln!(out, "            below: {}", format_number(limit));
        }
        Some(Threshold::Above { limit }) => {
            let _ = writeln!(out, "            above: {}", format_number(limit));
        }
        Some(Threshold::Stable { epsilon, window }) => {
            let _ = writeln!(out, "            stable: {}", format_number(epsilon));
            let _ = writeln!(out, "            window: {window}");
        }
    }
}

fn flow(out: &mut String, flow: &FlowGraph) {
    out.push_str("  stationFlow:\n");
    for (name, node) in &flow.nodes {
        let _ = writeln!(out, "    {}:", scalar(name));
        if name == END {
            continue;
        }
        if let Some(step) = &node.step {
            let _ = writeln!(out, "      station: {}", quoted(&step.station));
            let mut tuple = vec![quoted(&step.task.op_name)];
            tuple.extend(step.task.args.iter().map(|a| task_arg(a)));
            let _ = writeln!(out, "      task: {{{}}}", tuple.join(", "));
        }
        if let Some(t) = &node.on_success {
            let _ = writeln!(out, "      onSuccess: {}", scalar(t));
        }
        if let Some(t) = &node.on_fail {
            let _ = writeln!(out, "      onFail: {}", scalar(t));
        }
        if let Some(step) = &node.step {
            if step.max_iterations != DEFAULT_MAX_ITERATIONS {
                let _ = writeln!(out, "      maxIterations: {}", step.max_iterations);
            }
        }
        debug_assert!(name != START || node.step.is_none());
    }
}

/// Numbers and identifiers stay bare; anything else, units included, is quoted.
fn task_arg(arg: &str) -> String {
    if arg.parse::<f64>().is_ok() || (is_plain_safe(arg) && super::Unit::parse(arg).is_err()) {
        arg.to_string()
    } else {
        quoted(arg)
    }
}

fn name_set<'a>(names: impl Iterator<Item = &'a String>) -> String {
    let items: Vec<String> = names.map(|n| scalar(n)).collect();
    if items.is_empty() {
        "{}".to_string()
    } else {
        format!("{{ {} }}", items.join(", "))
    }
}

fn scalar(text: &str) -> String {
    if is_plain_safe(text) {
        text.to_string()
    } else {
        quoted(text)
    }
}

fn quoted(text: &str) -> String {
    // JSON string escapes are valid inside YAML double quotes.
    serde_json::to_string(text).expect("strings always serialize")
}

/// Would a plain scalar reparse as exactly this string?
fn is_plain_safe(text: &str) -> bool {
    let Some(first) = text.chars().next() else {
        return false;
    };
    let reserved = matches!(
        text.to_ascii_lowercase().as_str(),
        "true" | "false" | "null" | "~" | "yes" | "no" | "on" | "off"
    );
    !reserved
        && (first.is_ascii_alphabetic() || first == '_')
        && text
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && text.parse::<f64>().is_err()
}
