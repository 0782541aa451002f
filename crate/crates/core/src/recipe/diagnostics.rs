//! Structured recipe diagnostics with stable codes and source positions.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Syntax,
    Schema,
    Semantic,
    Flow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticCode {
    Syntax,
    MissingKey,
    UnknownKey,
    DuplicateKey,
    InvalidValue,
    UndeclaredMaterial,
    BadUnit,
    NonPositiveQuantity,
    DanglingTarget,
    UnknownStation,
    UnknownOperation,
    TaskMismatch,
    MissingStart,
    MissingEnd,
    MissingEdge,
    UnreachableEnd,
    DeadEnd,
    FailCycle,
    UnguardedCycle,
    /// Recipe is well formed but the lab configuration cannot run it.
    UnsupportedByLab,
}

impl DiagnosticCode {
    pub const fn as_str(self) -> &'static str {
        match self {
            Self::Syntax => "recipe.syntax",
            Self::MissingKey => "recipe.schema.missing_key",
            Self::UnknownKey => "recipe.schema.unknown_key",
            Self::DuplicateKey => "recipe.schema.duplicate_key",
            Self::InvalidValue => "recipe.schema.invalid_value",
            Self::UndeclaredMaterial => "recipe.semantic.undeclared_material",
            Self::BadUnit => "recipe.semantic.bad_unit",
            Self::NonPositiveQuantity => "recipe.semantic.non_positive_quantity",
            Self::DanglingTarget => "recipe.semantic.dangling_target",
            Self::UnknownStation => "recipe.semantic.unknown_station",
            Self::UnknownOperation => "recipe.semantic.unknown_operation",
            Self::TaskMismatch => "recipe.semantic.task_mismatch",
            Self::MissingStart => "flow.missing_start",
            Self::MissingEnd => "flow.missing_end",
            Self::MissingEdge => "flow.missing_edge",
            Self::UnreachableEnd => "flow.unreachable_end",
            Self::DeadEnd => "flow.dead_end",
            Self::FailCycle => "flow.fail_cycle",
            Self::UnguardedCycle => "flow.unguarded_cycle",
            Self::UnsupportedByLab => "lab.unsupported",
        }
    }

    pub const fn category(self) -> Category {
        match self {
            Self::Syntax => Category::Syntax,
            Self::MissingKey | Self::UnknownKey | Self::DuplicateKey | Self::InvalidValue => {
                Category::Schema
            }
            Self::MissingStart
            | Self::MissingEnd
            | Self::MissingEdge
            | Self::UnreachableEnd
            | Self::DeadEnd
            | Self::FailCycle
            | Self::UnguardedCycle => Category::Flow,
            _ => Category::Semantic,
        }
    }
}

/// 1-indexed position in the source document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Location {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location: Option<Location>,
    /// Flow node the diagnostic concerns, when there is one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
    /// Nearest valid candidate for a misspelt identifier.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suggestion: Option<String>,
}

impl Diagnostic {
    pub fn new(code: DiagnosticCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            location: None,
            node: None,
            suggestion: None,
        }
    }

    pub fn at(mut self, location: Location) -> Self {
        self.location = Some(location);
        self
    }

    pub fn on_node(mut self, node: impl Into<String>) -> Self {
        self.node = Some(node.into());
        self
    }

    pub fn suggest(mut self, suggestion: Option<String>) -> Self {
        self.suggestion = suggestion;
        self
    }

    pub fn category(&self) -> Category {
        self.code.category()
    }

    /// Single-line rendering, `code | line:col | message`.
    pub fn render(&self, source: &str) -> String {
        let position = match self.location {
            Some(loc) => format!("{source}:{}:{}", loc.line, loc.column),
            None => source.to_string(),
        };
        let mut line = format!("{} | {} | {}", self.code.as_str(), position, self.message);
        if let Some(s) = &self.suggestion {
            line.push_str(&format!(" (did you mean '{s}'?)"));
        }
        line
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DiagnosticList(pub Vec<Diagnostic>);

impl DiagnosticList {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Diagnostic> {
        self.0.iter()
    }

    pub fn codes(&self) -> Vec<DiagnosticCode> {
        self.0.iter().map(|d| d.code).collect()
    }
}

impl fmt::Display for DiagnosticList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            f.write_str(&d.render("recipe"))?;
        }
        Ok(())
    }
}

impl std::error::Error for DiagnosticList {}

impl From<Vec<Diagnostic>> for DiagnosticList {
    fn from(v: Vec<Diagnostic>) -> Self {
        Self(v)
    }
}

impl IntoIterator for DiagnosticList {
    type Item = Diagnostic;
    type IntoIter = std::vec::IntoIter<Diagnostic>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

/// Closest candidate by edit distance, if it is plausibly a typo.
pub(crate) fn nearest<'a, I>(needle: &str, candidates: I) -> Option<String>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut best: Option<(usize, &str)> = None;
    for candidate in candidates {
        let d = strsim::levenshtein(needle, candidate);
        if best.is_none_or(|(bd, bc)| d < bd || (d == bd && candidate < bc)) {
            best = Some((d, candidate));
        }
    }
    let limit = (needle.chars().count() / 3).max(2);
    best.filter(|(d, _)| *d <= limit).map(|(_, c)| c.to_string())
}
