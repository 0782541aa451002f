//! Configured alert rules, evaluated on every tick.

use crate::state::{AlertCondition, AlertRule, Assignment, StateEvent, WorkflowState};

pub fn condition_holds(state: &WorkflowState, rule: &AlertRule) -> bool {
    match &rule.when {
        AlertCondition::MaterialBelow { material, below } => {
            state.materials.get(material).is_some_and(|m| m.remaining < *below)
        }
        AlertCondition::FailuresAtLeast { count } => {
            let failed = state.samples.values().filter(|s| s.assignment == Assignment::Failed).count();
            failed >= *count as usize
        }
    }
}

/// Raises an alert when a rule becomes true and clears the rule when it
/// stops holding, so a rule that stays true alerts once.
pub fn evaluate_alerts(state: &WorkflowState, tick: u64) -> Vec<StateEvent> {
    let mut out = Vec::new();
    for rule in &state.alert_rules {
        let holds = condition_holds(state, rule);
        let active = state.active_rules.contains(&rule.id);
        if holds && !active {
            out.push(StateEvent::AlertRaised {
                tick,
                rule: rule.id.clone(),
                severity: rule.severity,
                message: rule.message.clone(),
            });
        } else if !holds && active {
            out.push(StateEvent::AlertCleared { tick, rule: rule.id.clone() });
        }
    }
    out
}
