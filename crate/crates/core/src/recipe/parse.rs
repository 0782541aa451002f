//! Recipe document → validated [`Recipe`].
//!
//! Keys are matched case-insensitively against the canonical lowerCamelCase
//! names (`onsuccess`, `StationOp` and friends all resolve).

use std::collections::{BTreeSet, HashMap, HashSet};

use indexmap::IndexMap;

use super::diagnostics::{nearest, Diagnostic, DiagnosticCode as Code, DiagnosticList, Location};
use super::units::{Dimension, Quantity, Unit};
use super::yaml::{self, Node, Value};
use super::{
    validate_flow, FlowGraph, FlowNode, FlowStep, OperationSpec, OutputSpec, PropertyValue,
    Recipe, RecipeDoc, TaskRef, Threshold, DEFAULT_MAX_ITERATIONS, DEFAULT_STABILITY_WINDOW, END,
    START,
};

const ROOT_KEYS: &[&str] = &["chemical_recipe"];
const RECIPE_KEYS: &[&str] = &["name", "materials", "stations", "stationFlow"];
const MATERIAL_KEYS: &[&str] = &["liquids", "solids"];
const STATION_KEYS: &[&str] = &["stationOp"];
const OP_KEYS: &[&str] = &["properties", "output"];
const OUTPUT_KEYS: &[&str] = &["name", "below", "above", "stable", "window"];
const START_KEYS: &[&str] = &["onSuccess", "onFail"];
const STEP_KEYS: &[&str] = &["station", "task", "onSuccess", "onFail", "maxIterations"];

/// Property names whose numeric value must carry a unit of this dimension.
const DIMENSIONED: &[(&str, Dimension)] = &[
    ("mass", Dimension::Mass),
    ("volume", Dimension::Volume),
    ("temperature", Dimension::Temperature),
    ("duration", Dimension::Time),
    ("stir_speed", Dimension::Rate),
];

pub fn parse_recipe(doc: &RecipeDoc) -> Result<Recipe, DiagnosticList> {
    let root = yaml::load(&doc.text).map_err(|d| DiagnosticList(vec![d]))?;
    let mut parser = RecipeParser::default();
    let recipe = parser.recipe(&root);
    match recipe {
        Some(r) if parser.diags.is_empty() => Ok(r),
        _ => Err(DiagnosticList(parser.diags)),
    }
}

type Fields<'a> = IndexMap<&'static str, (&'a Node, &'a Node)>;

#[derive(Default)]
struct RecipeParser {
    diags: Vec<Diagnostic>,
    /// Declarations that already produced a diagnostic; flow references to
    /// them are not reported a second time.
    broken: HashSet<(String, Option<String>)>,
}

impl RecipeParser {
    fn error(&mut self, code: Code, loc: Location, message: impl Into<String>) {
        self.diags.push(Diagnostic::new(code, message).at(loc));
    }

    fn fields<'a>(&mut self, node: &'a Node, allowed: &[&'static str], what: &str) -> Option<Fields<'a>> {
        let entries = match &node.value {
            Value::Map(entries) => entries,
            Value::Null => return Some(Fields::new()),
            _ => {
                self.error(
                    Code::InvalidValue,
                    node.loc,
                    format!("{what} must be a mapping, found {}", node.kind_name()),
                );
                return None;
            }
        };
        let mut out = Fields::new();
        for (key, value) in entries {
            let Some(raw) = key.as_scalar() else {
                self.error(Code::InvalidValue, key.loc, format!("{what} keys must be scalars"));
                continue;
            };
            let canonical = allowed.iter().copied().find(|c| c.eq_ignore_ascii_case(raw));
            match canonical {
                Some(c) if out.contains_key(c) => {
                    self.error(Code::DuplicateKey, key.loc, format!("duplicate key '{raw}' in {what}"));
                }
                Some(c) => {
                    out.insert(c, (key, value));
                }
                None => {
                    let d = Diagnostic::new(Code::UnknownKey, format!("unknown key '{raw}' in {what}"))
                        .at(key.loc)
                        .suggest(nearest(raw, allowed.iter().copied()));
                    self.diags.push(d);
                }
            }
        }
        Some(out)
    }

    fn require<'a>(&mut self, fields: &Fields<'a>, key: &'static str, parent: &Node, what: &str) -> Option<&'a Node> {
        match fields.get(key) {
            Some((_, v)) => Some(*v),
            None => {
                self.error(Code::MissingKey, parent.loc, format!("{what} is missing '{key}'"));
                None
            }
        }
    }

    fn scalar(&mut self, node: &Node, what: &str) -> Option<String> {
        match node.as_scalar() {
            Some(s) => Some(s.to_string()),
            None => {
                self.error(
                    Code::InvalidValue,
                    node.loc,
                    format!("{what} must be a scalar, found {}", node.kind_name()),
                );
                None
            }
        }
    }

    fn number(&mut self, node: &Node, what: &str) -> Option<f64> {
        let text = self.scalar(node, what)?;
        match text.trim().parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            _ => {
                self.error(Code::InvalidValue, node.loc, format!("{what} must be a number, found '{text}'"));
                None
            }
        }
    }

    fn positive_int(&mut self, node: &Node, what: &str, min: u32) -> Option<u32> {
        let text = self.scalar(node, what)?;
        match text.trim().parse::<u32>() {
            Ok(v) if v >= min => Some(v),
            _ => {
                self.error(
                    Code::InvalidValue,
                    node.loc,
                    format!("{what} must be an integer ≥ {min}, found '{text}'"),
                );
                None
            }
        }
    }

    fn recipe(&mut self, root: &Node) -> Option<Recipe> {
        let top = self.fields(root, ROOT_KEYS, "document")?;
        let body = self.require(&top, "chemical_recipe", root, "document")?;
        let fields = self.fields(body, RECIPE_KEYS, "chemical_recipe")?;

        let name = self
            .require(&fields, "name", body, "chemical_recipe")
            .and_then(|n| self.scalar(n, "name"));

        let (liquids, solids) = match fields.get("materials") {
            Some((_, m)) => self.materials(m),
            None => (BTreeSet::new(), BTreeSet::new()),
        };

        let station_ops = match fields.get("stations") {
            Some((_, s)) => self.stations(s, &liquids, &solids),
            None => IndexMap::new(),
        };

        let flow_node = self.require(&fields, "stationFlow", body, "chemical_recipe");
        let flow = flow_node.and_then(|f| self.flow(f, &station_ops));

        Some(Recipe {
            name: name?,
            liquids,
            solids,
            station_ops,
            flow: flow?,
        })
    }

    fn name_set(&mut self, node: &Node, what: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut add = |this: &mut Self, item: &Node| {
            if let Some(name) = this.scalar(item, what) {
                if !out.insert(name.clone()) {
                    this.error(Code::DuplicateKey, item.loc, format!("'{name}' listed twice in {what}"));
                }
            }
        };
        match &node.value {
            Value::Null => {}
            Value::Scalar { .. } => add(self, node),
            Value::Seq(items) => items.iter().for_each(|i| add(self, i)),
            Value::Map(entries) => {
                for (k, v) in entries {
                    if !v.is_null() {
                        self.error(Code::InvalidValue, v.loc, format!("{what} entries take no value"));
                    }
                    add(self, k);
                }
            }
        }
        out
    }

    fn materials(&mut self, node: &Node) -> (BTreeSet<String>, BTreeSet<String>) {
        let Some(fields) = self.fields(node, MATERIAL_KEYS, "materials") else {
            return Default::default();
        };
        let liquids = fields
            .get("liquids")
            .map(|(_, v)| self.name_set(v, "liquids"))
            .unwrap_or_default();
        let solids = fields
            .get("solids")
            .map(|(_, v)| self.name_set(v, "solids"))
            .unwrap_or_default();
        for both in liquids.intersection(&solids) {
            self.error(
                Code::InvalidValue,
                node.loc,
                format!("material '{both}' is declared both liquid and solid"),
            );
        }
        (liquids, solids)
    }

    fn stations(
        &mut self,
        node: &Node,
        liquids: &BTreeSet<String>,
        solids: &BTreeSet<String>,
    ) -> IndexMap<String, Vec<OperationSpec>> {
        let mut out = IndexMap::new();
        let entries = match &node.value {
            Value::Map(e) => e,
            Value::Null => return out,
            _ => {
                self.error(Code::InvalidValue, node.loc, "stations must be a mapping");
                return out;
            }
        };
        for (key, value) in entries {
            let Some(station) = self.scalar(key, "station identifier") else { continue };
            if out.contains_key(&station) {
                self.error(Code::DuplicateKey, key.loc, format!("station '{station}' declared twice"));
                continue;
            }
            let what = format!("station '{station}'");
            let ops_node = self
                .fields(value, STATION_KEYS, &what)
                .and_then(|fields| self.require(&fields, "stationOp", value, &what));
            let Some(ops_node) = ops_node else {
                self.broken.insert((station, None));
                continue;
            };
            let mut ops: Vec<OperationSpec> = Vec::new();
            match &ops_node.value {
                Value::Map(op_entries) => {
                    for (op_key, op_value) in op_entries {
                        let Some(op_name) = self.scalar(op_key, "operation name") else { continue };
                        if ops.iter().any(|o| o.op_name == op_name) {
                            self.error(
                                Code::DuplicateKey,
                                op_key.loc,
                                format!("operation '{op_name}' declared twice for {what}"),
                            );
                            continue;
                        }
                        match self.operation(&op_name, op_value, liquids, solids) {
                            Some(op) => ops.push(op),
                            None => {
                                self.broken.insert((station.clone(), Some(op_name)));
                            }
                        }
                    }
                }
                _ => self.error(Code::InvalidValue, ops_node.loc, "stationOp must be a mapping"),
            }
            out.insert(station, ops);
        }
        out
    }

    fn operation(
        &mut self,
        op_name: &str,
        node: &Node,
        liquids: &BTreeSet<String>,
        solids: &BTreeSet<String>,
    ) -> Option<OperationSpec> {
        let what = format!("operation '{op_name}'");
        let fields = self.fields(node, OP_KEYS, &what)?;
        let properties = match fields.get("properties") {
            Some((_, p)) => self.properties(p, liquids, solids)?,
            None => IndexMap::new(),
        };
        let output_node = self.require(&fields, "output", node, &what)?;
        let output = self.output(output_node)?;
        Some(OperationSpec {
            op_name: op_name.to_string(),
            properties,
            output,
        })
    }

    fn properties(
        &mut self,
        node: &Node,
        liquids: &BTreeSet<String>,
        solids: &BTreeSet<String>,
    ) -> Option<IndexMap<String, PropertyValue>> {
        let entries = match &node.value {
            Value::Map(e) => e,
            Value::Null => return Some(IndexMap::new()),
            _ => {
                self.error(Code::InvalidValue, node.loc, "properties must be a mapping");
                return None;
            }
        };
        let errors_before = self.diags.len();
        let mut props: IndexMap<String, PropertyValue> = IndexMap::new();
        let mut locs: HashMap<String, Location> = HashMap::new();
        let mut unit: Option<(Unit, Location)> = None;
        let mut unit_invalid = false;
        for (key, value) in entries {
            let Some(name) = self.scalar(key, "property name") else { continue };
            if name == "unit" {
                if unit.is_some() {
                    self.error(Code::DuplicateKey, key.loc, "duplicate key 'unit'");
                    continue;
                }
                if let Some(sym) = self.scalar(value, "unit") {
                    match Unit::parse(&sym) {
                        Ok(u) if u.is_recipe_unit() => unit = Some((u, value.loc)),
                        _ => {
                            unit_invalid = true;
                            self.error(Code::BadUnit, value.loc, format!("unsupported unit '{sym}'"));
                        }
                    }
                }
                continue;
            }
            if props.contains_key(&name) {
                self.error(Code::DuplicateKey, key.loc, format!("duplicate property '{name}'"));
                continue;
            }
            let Some(v) = self.property_value(value, &name) else { continue };
            locs.insert(name.clone(), value.loc);
            props.insert(name, v);
        }

        if let Some((u, loc)) = unit {
            let numeric: Vec<String> = props
                .iter()
                .filter(|(_, v)| matches!(v, PropertyValue::Number(_)))
                .map(|(k, _)| k.clone())
                .collect();
            if numeric.len() == 1 {
                let key = &numeric[0];
                if let Some(PropertyValue::Number(n)) = props.get(key).cloned() {
                    props.insert(key.clone(), PropertyValue::Quantity(Quantity::new(n, u)));
                }
            } else {
                self.error(
                    Code::InvalidValue,
                    loc,
                    format!("'unit' needs exactly one numeric property, found {}", numeric.len()),
                );
            }
        }

        for (name, value) in &props {
            let loc = locs[name];
            let expected = DIMENSIONED.iter().find(|(n, _)| n == name).map(|(_, d)| *d);
            match value {
                PropertyValue::Quantity(q) => {
                    if let Some(dim) = expected {
                        if q.unit.dimension() != dim {
                            self.error(
                                Code::BadUnit,
                                loc,
                                format!("'{name}' expects a {dim:?} unit, found {}", q.unit),
                            );
                        }
                    }
                    if q.value.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
                        self.error(
                            Code::NonPositiveQuantity,
                            loc,
                            format!("quantity '{name}' must be strictly positive"),
                        );
                    }
                }
                PropertyValue::Number(_) if expected.is_some() && !unit_invalid => {
                    self.error(Code::BadUnit, loc, format!("quantity '{name}' has no unit"));
                }
                _ => {}
            }
            let phase_set: Option<(&BTreeSet<String>, &str)> = match name.as_str() {
                "solid" => Some((solids, "solids")),
                "liquid" => Some((liquids, "liquids")),
                _ => None,
            };
            if name == "material" || phase_set.is_some() {
                let PropertyValue::Text(material) = value else {
                    self.error(Code::InvalidValue, loc, format!("'{name}' must name a material"));
                    continue;
                };
                let declared = match phase_set {
                    Some((set, _)) => set.contains(material),
                    None => liquids.contains(material) || solids.contains(material),
                };
                if !declared {
                    let pool: Vec<&str> = match phase_set {
                        Some((set, _)) => set.iter().map(String::as_str).collect(),
                        None => liquids.iter().chain(solids.iter()).map(String::as_str).collect(),
                    };
                    let within = phase_set.map(|(_, w)| w).unwrap_or("materials");
                    let d = Diagnostic::new(
                        Code::UndeclaredMaterial,
                        format!("material '{material}' is not declared in {within}"),
                    )
                    .at(loc)
                    .suggest(nearest(material, pool));
                    self.diags.push(d);
                }
            }
        }
        (self.diags.len() == errors_before).then_some(props)
    }

    fn property_value(&mut self, node: &Node, name: &str) -> Option<PropertyValue> {
        let (text, quoted) = match &node.value {
            Value::Scalar { text, quoted } => (text.as_str(), *quoted),
            _ => {
                self.error(Code::InvalidValue, node.loc, format!("property '{name}' must be a scalar"));
                return None;
            }
        };
        if quoted {
            return Some(PropertyValue::Text(text.to_string()));
        }
        if let Ok(n) = text.parse::<f64>() {
            if n.is_finite() {
                return Some(PropertyValue::Number(n));
            }
        }
        match text {
            "true" => return Some(PropertyValue::Bool(true)),
            "false" => return Some(PropertyValue::Bool(false)),
            _ => {}
        }
        let mut parts = text.split_whitespace();
        if let (Some(num), Some(sym), None) = (parts.next(), parts.next(), parts.next()) {
            if let Ok(value) = num.parse::<f64>() {
                return match Unit::parse(sym) {
                    Ok(unit) if unit.is_recipe_unit() => Some(PropertyValue::Quantity(Quantity::new(value, unit))),
                    _ => {
                        self.error(Code::BadUnit, node.loc, format!("unsupported unit '{sym}' in '{name}'"));
                        None
                    }
                };
            }
        }
        Some(PropertyValue::Text(text.to_string()))
    }

    fn output(&mut self, node: &Node) -> Option<OutputSpec> {
        let fields = self.fields(node, OUTPUT_KEYS, "output")?;
        let name = self.require(&fields, "name", node, "output").and_then(|n| self.scalar(n, "output name"))?;
        let mut threshold = None;
        let mut chosen = 0;
        for key in ["below", "above", "stable"] {
            let Some((_, v)) = fields.get(key) else { continue };
            chosen += 1;
            let Some(limit) = self.number(v, key) else { continue };
            threshold = Some(match key {
                "below" => Threshold::Below { limit },
                "above" => Threshold::Above { limit },
                _ => {
                    if limit.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
                        self.error(Code::NonPositiveQuantity, v.loc, "stability epsilon must be positive");
                    }
                    let window = match fields.get("window") {
                        Some((_, w)) => self.positive_int(w, "window", 2)?,
                        None => DEFAULT_STABILITY_WINDOW,
                    };
                    Threshold::Stable { epsilon: limit, window }
                }
            });
        }
        if chosen > 1 {
            self.error(Code::InvalidValue, node.loc, "output takes at most one of below/above/stable");
            return None;
        }
        if let Some((k, _)) = fields.get("window") {
            if !matches!(threshold, Some(Threshold::Stable { .. })) {
                self.error(Code::InvalidValue, k.loc, "'window' only applies to 'stable'");
            }
        }
        Some(OutputSpec { name, threshold })
    }

    fn flow(&mut self, node: &Node, station_ops: &IndexMap<String, Vec<OperationSpec>>) -> Option<FlowGraph> {
        let entries = match &node.value {
            Value::Map(e) => e,
            _ => {
                self.error(Code::InvalidValue, node.loc, "stationFlow must be a mapping");
                return None;
            }
        };
        let errors_before = self.diags.len();
        let names: Vec<&str> = entries.iter().filter_map(|(k, _)| k.as_scalar()).collect();
        let mut graph = FlowGraph::new();
        let mut node_locs: HashMap<String, Location> = HashMap::new();
        let mut targets: Vec<(String, &Node)> = Vec::new();
        let mut incomplete = false;

        for (key, value) in entries {
            let Some(name) = self.scalar(key, "flow node name") else { continue };
            if graph.nodes.contains_key(&name) {
                self.error(Code::DuplicateKey, key.loc, format!("flow node '{name}' declared twice"));
                continue;
            }
            node_locs.insert(name.clone(), key.loc);
            let what = format!("flow node '{name}'");
            let flow_node = if name == END {
                let empty = matches!(&value.value, Value::Null)
                    || matches!(&value.value, Value::Map(e) if e.is_empty());
                if !empty {
                    self.error(Code::InvalidValue, value.loc, "'end' takes no fields");
                }
                FlowNode { step: None, on_success: None, on_fail: None }
            } else if name == START {
                let Some(fields) = self.fields(value, START_KEYS, &what) else { continue };
                let Some(on_success) = self.require(&fields, "onSuccess", value, &what) else { continue };
                targets.push((name.clone(), on_success));
                let on_fail = match fields.get("onFail") {
                    Some((_, f)) => {
                        targets.push((name.clone(), f));
                        self.scalar(f, "onFail")
                    }
                    None => Some(END.to_string()),
                };
                FlowNode {
                    step: None,
                    on_success: self.scalar(on_success, "onSuccess"),
                    on_fail,
                }
            } else {
                let Some(fields) = self.fields(value, STEP_KEYS, &what) else { continue };
                let station = self.require(&fields, "station", value, &what);
                let task = self.require(&fields, "task", value, &what);
                let on_success = self.require(&fields, "onSuccess", value, &what);
                let on_fail = self.require(&fields, "onFail", value, &what);
                let max_iterations = match fields.get("maxIterations") {
                    Some((_, m)) => self.positive_int(m, "maxIterations", 1),
                    None => Some(DEFAULT_MAX_ITERATIONS),
                };
                let (Some(station), Some(task), Some(on_success), Some(on_fail), Some(max_iterations)) =
                    (station, task, on_success, on_fail, max_iterations)
                else {
                    continue;
                };
                targets.push((name.clone(), on_success));
                targets.push((name.clone(), on_fail));
                let Some(step) = self.step(station, task, max_iterations, station_ops) else {
                    incomplete = true;
                    continue;
                };
                FlowNode {
                    step: Some(step),
                    on_success: self.scalar(on_success, "onSuccess"),
                    on_fail: self.scalar(on_fail, "onFail"),
                }
            };
            graph.nodes.insert(name, flow_node);
        }

        for (from, target) in &targets {
            let Some(t) = target.as_scalar() else { continue };
            if !names.contains(&t) {
                let d = Diagnostic::new(
                    Code::DanglingTarget,
                    format!("flow node '{from}' targets unknown node '{t}'"),
                )
                .at(target.loc)
                .on_node(from.clone())
                .suggest(nearest(t, names.iter().copied()));
                self.diags.push(d);
            }
        }
        if incomplete || self.diags.len() != errors_before {
            return None;
        }
        for mut d in validate_flow(&graph) {
            d.location = d
                .node
                .as_ref()
                .and_then(|n| node_locs.get(n).copied())
                .or(Some(node.loc));
            self.diags.push(d);
        }
        (self.diags.len() == errors_before).then_some(graph)
    }

    fn step(
        &mut self,
        station_node: &Node,
        task_node: &Node,
        max_iterations: u32,
        station_ops: &IndexMap<String, Vec<OperationSpec>>,
    ) -> Option<FlowStep> {
        let station = self.scalar(station_node, "station")?;
        let items: Vec<&Node> = match &task_node.value {
            Value::Scalar { .. } => vec![task_node],
            Value::Seq(items) => items.iter().collect(),
            Value::Map(entries) => {
                for (_, v) in entries {
                    if !v.is_null() {
                        self.error(Code::InvalidValue, v.loc, "task tuple entries take no value");
                    }
                }
                entries.iter().map(|(k, _)| k).collect()
            }
            Value::Null => Vec::new(),
        };
        let mut parts = Vec::with_capacity(items.len());
        for item in items {
            parts.push(self.scalar(item, "task element")?);
        }
        if parts.is_empty() {
            self.error(Code::InvalidValue, task_node.loc, "task must name an operation");
            return None;
        }
        let op_name = parts.remove(0);
        let Some(ops) = station_ops.get(&station) else {
            if self.broken.contains(&(station.clone(), None)) {
                return None;
            }
            let d = Diagnostic::new(
                Code::UnknownStation,
                format!("station '{station}' is not declared under stations"),
            )
            .at(station_node.loc)
            .suggest(nearest(&station, station_ops.keys().map(String::as_str)));
            self.diags.push(d);
            return None;
        };
        let Some(op) = ops.iter().find(|o| o.op_name == op_name) else {
            if self.broken.contains(&(station.clone(), Some(op_name.clone()))) {
                return None;
            }
            let d = Diagnostic::new(
                Code::UnknownOperation,
                format!("station '{station}' declares no operation '{op_name}'"),
            )
            .at(task_node.loc)
            .suggest(nearest(&op_name, ops.iter().map(|o| o.op_name.as_str())));
            self.diags.push(d);
            return None;
        };
        if !parts.is_empty() && !args_match(&parts, &op.flattened_args()) {
            self.error(
                Code::TaskMismatch,
                task_node.loc,
                format!(
                    "task values {:?} do not match operation '{op_name}' properties {:?}",
                    parts,
                    op.flattened_args()
                ),
            );
            return None;
        }
        // Stored in canonical spelling so emitted recipes reparse identically.
        let args = if parts.is_empty() { parts } else { op.flattened_args() };
        Some(FlowStep {
            station,
            task: TaskRef { op_name, args },
            guarded: op.output.threshold.is_some(),
            max_iterations,
        })
    }
}

fn args_match(given: &[String], expected: &[String]) -> bool {
    given.len() == expected.len()
        && given.iter().zip(expected).all(|(g, e)| {
            match (g.parse::<f64>(), e.parse::<f64>()) {
                (Ok(a), Ok(b)) => a == b,
                _ => match (Unit::parse(g), Unit::parse(e)) {
                    (Ok(a), Ok(b)) => a == b,
                    _ => g == e,
                },
            }
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Recipe, DiagnosticList> {
        parse_recipe(&RecipeDoc::new(text, "test"))
    }

    const RAW: &str = include_str!("../../tests/fixtures/listing_raw.yaml");
    const CANONICAL: &str = include_str!("../../tests/fixtures/listing_canonical.yaml");

    #[test]
    fn canonical_listing_parses() {
        let r = parse(CANONICAL).unwrap();
        assert_eq!(r.name, "sample_recipe");
        assert!(r.solids.contains("NaCl") && r.liquids.contains("water"));
        let (step, op) = r.step("solid_disp").unwrap();
        assert_eq!(step.task.args, ["NaCl", "15", "mg"]);
        assert_eq!(
            op.properties["mass"],
            PropertyValue::Quantity(Quantity::new(15.0, Unit::Milligram))
        );
        assert!(!step.guarded);
    }

    #[test]
    fn raw_listing_names_an_undeclared_station() {
        let err = parse(RAW).unwrap_err();
        assert_eq!(err.codes(), [Code::UnknownStation]);
        let d = &err.0[0];
        assert_eq!(d.suggestion.as_deref(), Some("solid_dispensing_quantos_QS2"));
        assert_eq!(d.location.map(|l| l.line), Some(30));
    }

    #[test]
    fn mixed_key_casing_is_accepted() {
        let text = RAW.replace("quantos_QS3", "quantos_QS2");
        assert!(parse(&text).is_ok());
    }

    #[test]
    fn typo_in_target_suggests_node() {
        let text = CANONICAL.replace("onSuccess: liquid_disp", "onSuccess: liquid_dispp");
        let err = parse(&text).unwrap_err();
        assert_eq!(err.codes(), [Code::DanglingTarget]);
        let d = &err.0[0];
        assert_eq!(d.suggestion.as_deref(), Some("liquid_disp"));
        assert_eq!(d.node.as_deref(), Some("solid_disp"));
        assert_eq!(d.location, Some(Location { line: 32, column: 18 }));
    }

    #[test]
    fn minimal_recipe() {
        let r = parse("chemical_recipe:\n  name: nothing\n  stationFlow:\n    start:\n      onSuccess: end\n    end:\n").unwrap();
        assert!(r.station_ops.is_empty());
        assert_eq!(r.flow.nodes[START].on_fail.as_deref(), Some(END));
    }

    #[test]
    fn undeclared_material_and_bad_units() {
        let text = CANONICAL
            .replace("solid: NaCl", "solid: NaCI")
            .replace("unit: mL", "unit: L");
        let err = parse(&text).unwrap_err();
        assert_eq!(err.codes(), [Code::UndeclaredMaterial, Code::BadUnit], "{err}");
        assert_eq!(err.0[0].suggestion.as_deref(), Some("NaCl"));
    }

    #[test]
    fn unitless_mass_is_rejected() {
        let text = CANONICAL.replace("            unit: mg\n", "");
        let codes = parse(&text).unwrap_err().codes();
        assert_eq!(codes[0], Code::BadUnit);
    }

    #[test]
    fn non_positive_quantity() {
        let text = CANONICAL.replace("mass: 15", "mass: 0");
        let codes = parse(&text).unwrap_err().codes();
        assert_eq!(codes[0], Code::NonPositiveQuantity);
    }

    #[test]
    fn task_must_match_properties() {
        let text = CANONICAL.replace("NaCl, 15, \"mg\"", "NaCl, 16, \"mg\"");
        assert_eq!(parse(&text).unwrap_err().codes(), [Code::TaskMismatch]);
        let bare = CANONICAL.replace("{\"dispense_solid\", NaCl, 15, \"mg\"}", "dispense_solid");
        let r = parse(&bare).unwrap();
        assert!(r.flow.nodes["solid_disp"].step.as_ref().unwrap().task.args.is_empty());
    }

    #[test]
    fn inline_quantities_and_thresholds() {
        let text = "chemical_recipe:
  name: crys
  materials:
    solids: [NaCl]
  stations:
    hotplate:
      stationOp:
        heat:
          properties:
            temperature: 60 °C
            duration: 666 s
          output:
            name: \"evaporated\"
    balance:
      stationOp:
        check_mass:
          output:
            name: \"mass\"
            stable: 0.005
            window: 2
  stationFlow:
    start:
      onSuccess: heat
    heat:
      station: \"hotplate\"
      task: {\"heat\", 60, \"°C\", 666, \"s\"}
      onSuccess: weigh
      onFail: end
    weigh:
      station: balance
      task: {\"check_mass\"}
      onSuccess: end
      onFail: heat
      maxIterations: 50
    end:
";
        let r = parse(text).unwrap();
        let (step, op) = r.step("weigh").unwrap();
        assert!(step.guarded);
        assert_eq!(step.max_iterations, 50);
        assert_eq!(op.output.threshold, Some(Threshold::Stable { epsilon: 0.005, window: 2 }));
        let (_, heat) = r.step("heat").unwrap();
        assert_eq!(heat.quantity_count(), 2);
    }

    #[test]
    fn unknown_key_suggests_canonical_spelling() {
        let text = CANONICAL.replace("onFail: end\n    liquid", "onFial: end\n    liquid");
        let err = parse(&text).unwrap_err();
        assert!(err.codes().contains(&Code::UnknownKey));
        assert_eq!(err.0[0].suggestion.as_deref(), Some("onFail"));
    }

    #[test]
    fn flow_errors_point_at_the_node() {
        let text = CANONICAL.replace("onSuccess: end\n      onFail: end\n    end", "onSuccess: liquid_disp\n      onFail: liquid_disp\n    end");
        let err = parse(&text).unwrap_err();
        assert!(err.codes().contains(&Code::UnreachableEnd));
        assert!(err.iter().all(|d| d.location.is_some()));
    }
}
