//! Minimal YAML document tree that keeps source positions for every node.

use yaml_rust2::parser::{Event, MarkedEventReceiver, Parser};
use yaml_rust2::scanner::{Marker, TScalarStyle};

use super::diagnostics::{Diagnostic, DiagnosticCode, Location};

#[derive(Debug, Clone)]
pub(crate) enum Value {
    Null,
    Scalar { text: String, quoted: bool },
    Map(Vec<(Node, Node)>),
    Seq(Vec<Node>),
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub value: Value,
    pub loc: Location,
}

impl Node {
    pub fn as_scalar(&self) -> Option<&str> {
        match &self.value {
            Value::Scalar { text, .. } => Some(text),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self.value, Value::Null)
    }

    pub fn kind_name(&self) -> &'static str {
        match self.value {
            Value::Null => "empty value",
            Value::Scalar { .. } => "scalar",
            Value::Map(_) => "mapping",
            Value::Seq(_) => "sequence",
        }
    }
}

fn location(mark: Marker) -> Location {
    Location {
        line: mark.line(),
        column: mark.col() + 1,
    }
}

enum Frame {
    Map {
        loc: Location,
        entries: Vec<(Node, Node)>,
        pending_key: Option<Node>,
    },
    Seq {
        loc: Location,
        items: Vec<Node>,
    },
}

#[derive(Default)]
struct Builder {
    stack: Vec<Frame>,
    root: Option<Node>,
    documents: usize,
    error: Option<Diagnostic>,
}

impl Builder {
    fn push_node(&mut self, node: Node) {
        match self.stack.last_mut() {
            Some(Frame::Map {
                entries,
                pending_key,
                ..
            }) => match pending_key.take() {
                Some(key) => entries.push((key, node)),
                None => *pending_key = Some(node),
            },
            Some(Frame::Seq { items, .. }) => items.push(node),
            None => {
                if self.root.is_none() {
                    self.root = Some(node);
                }
            }
        }
    }
}

impl MarkedEventReceiver for Builder {
    fn on_event(&mut self, ev: Event, mark: Marker) {
        let loc = location(mark);
        match ev {
            Event::DocumentStart => self.documents += 1,
            Event::Scalar(text, style, _, _) => {
                let quoted = !matches!(style, TScalarStyle::Plain);
                let value = if !quoted && matches!(text.as_str(), "~" | "" | "null" | "Null" | "NULL") {
                    Value::Null
                } else {
                    Value::Scalar { text, quoted }
                };
                self.push_node(Node { value, loc });
            }
            Event::MappingStart(..) => self.stack.push(Frame::Map {
                loc,
                entries: Vec::new(),
                pending_key: None,
            }),
            Event::SequenceStart(..) => self.stack.push(Frame::Seq {
                loc,
                items: Vec::new(),
            }),
            Event::MappingEnd => {
                if let Some(Frame::Map { loc, entries, .. }) = self.stack.pop() {
                    self.push_node(Node {
                        value: Value::Map(entries),
                        loc,
                    });
                }
            }
            Event::SequenceEnd => {
                if let Some(Frame::Seq { loc, items }) = self.stack.pop() {
                    self.push_node(Node {
                        value: Value::Seq(items),
                        loc,
                    });
                }
            }
            Event::Alias(_) => {
                if self.error.is_none() {
                    self.error = Some(
                        Diagnostic::new(DiagnosticCode::Syntax, "anchors and aliases are not supported")
                            .at(loc),
                    );
                }
                self.push_node(Node {
                    value: Value::Null,
                    loc,
                });
            }
            _ => {}
        }
    }
}

/// Parses a single YAML document into a positioned tree.
pub(crate) fn load(text: &str) -> Result<Node, Diagnostic> {
    let mut builder = Builder::default();
    let mut parser = Parser::new_from_str(text);
    if let Err(e) = parser.load(&mut builder, true) {
        let mark = *e.marker();
        return Err(Diagnostic::new(DiagnosticCode::Syntax, e.info().to_string()).at(location(mark)));
    }
    if let Some(err) = builder.error {
        return Err(err);
    }
    if builder.documents > 1 {
        return Err(Diagnostic::new(
            DiagnosticCode::Syntax,
            "expected exactly one YAML document",
        ));
    }
    builder.root.ok_or_else(|| {
        Diagnostic::new(DiagnosticCode::Syntax, "empty document").at(Location { line: 1, column: 1 })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_are_one_indexed() {
        let node = load("a:\n  b: 1\n").unwrap();
        let Value::Map(entries) = &node.value else { panic!() };
        let (_, inner) = &entries[0];
        let Value::Map(inner) = &inner.value else { panic!() };
        assert_eq!(inner[0].0.loc, Location { line: 2, column: 3 });
    }

    #[test]
    fn flow_set_is_a_map_of_nulls() {
        let node = load("s: { water }\nend:\n").unwrap();
        let Value::Map(entries) = &node.value else { panic!() };
        let Value::Map(set) = &entries[0].1.value else { panic!() };
        assert_eq!(set[0].0.as_scalar(), Some("water"));
        assert!(set[0].1.is_null());
        assert!(entries[1].1.is_null());
    }

    #[test]
    fn tuple_task_keeps_order_and_quoting() {
        let node = load(r#"task: {"dispense_solid", NaCl, 15, "mg"}"#).unwrap();
        let Value::Map(entries) = &node.value else { panic!() };
        let Value::Map(tuple) = &entries[0].1.value else { panic!() };
        let keys: Vec<_> = tuple.iter().map(|(k, _)| k.as_scalar().unwrap()).collect();
        assert_eq!(keys, ["dispense_solid", "NaCl", "15", "mg"]);
        assert!(matches!(tuple[0].0.value, Value::Scalar { quoted: true, .. }));
        assert!(matches!(tuple[1].0.value, Value::Scalar { quoted: false, .. }));
    }

    #[test]
    fn syntax_error_has_location() {
        let err = load("a: [1, 2\nb: 3\n").unwrap_err();
        assert_eq!(err.code, DiagnosticCode::Syntax);
        assert!(err.location.is_some());
    }
}
