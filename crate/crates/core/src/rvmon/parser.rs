//! Text format for property automata.
//!
//! One document may define many properties. Per property:
//!
//! ```text
//! property <id>
//! states: s0 s1 ...
//! initial: s0
//! violation: sV ...            # optional; a property may never violate
//! s_from -> s_to on <boundary>/<channel>/<direction> [payload ~ <regex>]
//! ```
//!
//! `boundary` is `ra_tee`, `ra_ree` or `*`; `direction` is `in`, `out` or
//! `*`; `channel` is a literal topic name or `*`. The optional payload clause
//! matches the decoded payload octets against a regex. Blank lines and `#`
//! comments are ignored. Transition declaration order is the monitor's
//! tie-break order.

use regex::bytes::Regex;

use super::{Boundary, Direction, Guard, PropertyAutomaton, StateId, Transition};

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("semantic error at line {line}: {message}")]
    Semantic { line: usize, message: String },
}

/// Parsed automata plus non-fatal diagnostics (e.g. unreachable violation
/// states).
#[derive(Debug)]
pub struct LoadedProperties {
    pub automata: Vec<PropertyAutomaton>,
    pub warnings: Vec<String>,
}

struct Builder {
    id: String,
    decl_line: usize,
    states: Vec<String>,
    initial: Option<StateId>,
    violation: Vec<bool>,
    transitions: Vec<Transition>,
}

impl Builder {
    fn state_id(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == name)
    }

    fn finish(self, warnings: &mut Vec<String>) -> Result<PropertyAutomaton, SpecError> {
        let initial = self.initial.ok_or(SpecError::Semantic {
            line: self.decl_line,
            message: format!("property `{}` has no `initial:` line", self.id),
        })?;
        let automaton = PropertyAutomaton {
            id: self.id,
            states: self.states,
            initial,
            violation: self.violation,
            transitions: self.transitions,
        };
        // Reachability diagnostic: a violation state no transition path can
        // reach is a spec bug worth flagging, but not an error.
        let mut reachable = vec![false; automaton.states.len()];
        let mut stack = vec![automaton.initial];
        reachable[automaton.initial] = true;
        while let Some(s) = stack.pop() {
            for t in automaton.transitions.iter().filter(|t| t.from == s) {
                if !reachable[t.to] {
                    reachable[t.to] = true;
                    stack.push(t.to);
                }
            }
        }
        for (s, name) in automaton.states.iter().enumerate() {
            if automaton.violation[s] && !reachable[s] {
                warnings.push(format!(
                    "property `{}`: violation state `{}` is unreachable from `{}`",
                    automaton.id, name, automaton.states[automaton.initial]
                ));
            }
        }
        Ok(automaton)
    }
}

/// Parses a property-spec document into automata.
pub fn load_spec(text: &str) -> Result<LoadedProperties, SpecError> {
    let mut automata: Vec<PropertyAutomaton> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut current: Option<Builder> = None;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = strip_comment(raw);
        if line.trim().is_empty() {
            continue;
        }
        let toks = tokens_with_columns(line);

        if toks[0].1 == "property" {
            if let Some(done) = current.take() {
                automata.push(done.finish(&mut warnings)?);
            }
            let (_, id) = *toks.get(1).ok_or(SpecError::Parse {
                line: lineno,
                column: toks[0].0 + "property".len(),
                message: "expected a property id".into(),
            })?;
            if automata.iter().any(|a| a.id == id) {
                return Err(SpecError::Semantic {
                    line: lineno,
                    message: format!("duplicate property id `{id}`"),
                });
            }
            current = Some(Builder {
                id: id.to_string(),
                decl_line: lineno,
                states: Vec::new(),
                initial: None,
                violation: Vec::new(),
                transitions: Vec::new(),
            });
            continue;
        }

        let builder = current.as_mut().ok_or(SpecError::Parse {
            line: lineno,
            column: toks[0].0,
            message: "expected `property <id>` before this line".into(),
        })?;

        match toks[0].1 {
            "states:" => {
                if !builder.states.is_empty() {
                    return Err(SpecError::Semantic {
                        line: lineno,
                        message: format!("property `{}` declares states twice", builder.id),
                    });
                }
                for &(col, name) in &toks[1..] {
                    if builder.state_id(name).is_some() {
                        return Err(SpecError::Parse {
                            line: lineno,
                            column: col,
                            message: format!("duplicate state `{name}`"),
                        });
                    }
                    builder.states.push(name.to_string());
                }
                if builder.states.is_empty() {
                    return Err(SpecError::Parse {
                        line: lineno,
                        column: toks[0].0,
                        message: "a property needs at least one state".into(),
                    });
                }
                builder.violation = vec![false; builder.states.len()];
            }
            "initial:" => {
                let (col, name) = *toks.get(1).ok_or(SpecError::Parse {
                    line: lineno,
                    column: toks[0].0,
                    message: "expected a state name".into(),
                })?;
                builder.initial = Some(builder.state_id(name).ok_or(SpecError::Semantic {
                    line: lineno,
                    message: format!("undeclared state `{name}` (column {col})"),
                })?);
            }
            "violation:" => {
                for &(col, name) in &toks[1..] {
                    let id = builder.state_id(name).ok_or(SpecError::Semantic {
                        line: lineno,
                        message: format!("undeclared state `{name}` (column {col})"),
                    })?;
                    builder.violation[id] = true;
                }
            }
            _ => {
                let transition = parse_transition(line, &toks, lineno, builder)?;
                builder.transitions.push(transition);
            }
        }
    }

    if let Some(done) = current.take() {
        automata.push(done.finish(&mut warnings)?);
    }
    Ok(LoadedProperties { automata, warnings })
}

/// `s_from -> s_to on b/chan/dir [payload ~ regex]`
fn parse_transition(
    line: &str,
    toks: &[(usize, &str)],
    lineno: usize,
    builder: &Builder,
) -> Result<Transition, SpecError> {
    let expect = |idx: usize, what: &str| -> Result<(usize, &str), SpecError> {
        toks.get(idx).copied().ok_or(SpecError::Parse {
            line: lineno,
            column: toks.last().map(|&(c, t)| c + t.len()).unwrap_or(1),
            message: format!("expected {what}"),
        })
    };
    let (from_col, from_name) = expect(0, "a source state")?;
    let (arrow_col, arrow) = expect(1, "`->`")?;
    if arrow != "->" {
        return Err(SpecError::Parse {
            line: lineno,
            column: arrow_col,
            message: format!("expected `->`, found `{arrow}`"),
        });
    }
    let (to_col, to_name) = expect(2, "a target state")?;
    let (on_col, on) = expect(3, "`on`")?;
    if on != "on" {
        return Err(SpecError::Parse {
            line: lineno,
            column: on_col,
            message: format!("expected `on`, found `{on}`"),
        });
    }
    let (guard_col, guard_spec) = expect(4, "a guard `boundary/channel/direction`")?;

    let from = builder.state_id(from_name).ok_or(SpecError::Semantic {
        line: lineno,
        message: format!("undeclared state `{from_name}` (column {from_col})"),
    })?;
    let to = builder.state_id(to_name).ok_or(SpecError::Semantic {
        line: lineno,
        message: format!("undeclared state `{to_name}` (column {to_col})"),
    })?;

    let parts: Vec<&str> = guard_spec.split('/').collect();
    if parts.len() != 3 {
        return Err(SpecError::Parse {
            line: lineno,
            column: guard_col,
            message: format!("guard `{guard_spec}` must be `boundary/channel/direction`"),
        });
    }
    let boundary = match parts[0] {
        "*" => None,
        "ra_tee" => Some(Boundary::RaTee),
        "ra_ree" => Some(Boundary::RaRee),
        other => {
            return Err(SpecError::Parse {
                line: lineno,
                column: guard_col,
                message: format!("unknown boundary `{other}` (expected ra_tee, ra_ree or *)"),
            })
        }
    };
    let channel = match parts[1] {
        "" => {
            return Err(SpecError::Parse {
                line: lineno,
                column: guard_col,
                message: "empty channel in guard".into(),
            })
        }
        "*" => None,
        name => Some(name.to_string()),
    };
    let direction = match parts[2] {
        "*" => None,
        "in" => Some(Direction::In),
        "out" => Some(Direction::Out),
        other => {
            return Err(SpecError::Parse {
                line: lineno,
                column: guard_col,
                message: format!("unknown direction `{other}` (expected in, out or *)"),
            })
        }
    };

    let payload = match toks.get(5) {
        None => None,
        Some(&(_, "payload")) => {
            let (tilde_col, tilde) = expect(6, "`~` after `payload`")?;
            if tilde != "~" {
                return Err(SpecError::Parse {
                    line: lineno,
                    column: tilde_col,
                    message: format!("expected `~`, found `{tilde}`"),
                });
            }
            let (re_col, _) = expect(7, "a regex after `payload ~`")?;
            let pattern = line[re_col - 1..].trim_end();
            let re = Regex::new(pattern).map_err(|e| SpecError::Parse {
                line: lineno,
                column: re_col,
                message: format!("invalid payload regex: {e}"),
            })?;
            Some(re)
        }
        Some(&(col, other)) => {
            return Err(SpecError::Parse {
                line: lineno,
                column: col,
                message: format!("unexpected trailing token `{other}`"),
            })
        }
    };

    Ok(Transition {
        from,
        to,
        guard: Guard {
            boundary,
            channel,
            direction,
            payload,
        },
    })
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

/// Whitespace-separated tokens with their 1-based byte columns.
fn tokens_with_columns(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut offset = 0;
    let mut rest = line;
    while let Some(start) = rest.find(|c: char| !c.is_whitespace()) {
        let tail = &rest[start..];
        let end = tail
            .find(char::is_whitespace)
            .unwrap_or(tail.len());
        out.push((offset + start + 1, &tail[..end]));
        offset += start + end;
        rest = &rest[start + end..];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rvmon::{Event, VerdictKind};

    const HANDSHAKE: &str = "\
property handshake_order
states: idle keyex established violated
initial: idle
violation: violated
idle -> keyex on ra_tee/handshake_init/out
keyex -> established on ra_tee/handshake_keyex/out
idle -> violated on ra_tee/handshake_keyex/out
keyex -> violated on ra_tee/handshake_init/out
established -> violated on ra_tee/handshake_init/out
";

    #[test]
    fn single_state_property_never_violates() {
        let loaded = load_spec("property calm\nstates: only\ninitial: only\n").unwrap();
        let a = &loaded.automata[0];
        assert_eq!(a.states.len(), 1);
        assert!(a.transitions.is_empty());
        assert!(!a.violation[a.initial]);
    }

    #[test]
    fn undeclared_state_is_a_semantic_error() {
        let err = load_spec(
            "property p\nstates: s0\ninitial: s0\ns0 -> qX on ra_tee/x/out\n",
        )
        .unwrap_err();
        assert!(matches!(err, SpecError::Semantic { line: 4, .. }), "{err}");
    }

    #[test]
    fn handshake_fixture_has_four_states_five_transitions() {
        let loaded = load_spec(HANDSHAKE).unwrap();
        assert_eq!(loaded.automata.len(), 1);
        let a = &loaded.automata[0];
        assert_eq!(a.states.len(), 4);
        assert_eq!(a.transitions.len(), 5);
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn handshake_semantics() {
        let a = load_spec(HANDSHAKE).unwrap().automata.remove(0);
        let ev = |seq, chan: &str| Event {
            seq,
            timestamp_ns: 0,
            boundary: crate::rvmon::Boundary::RaTee,
            channel: chan.into(),
            direction: crate::rvmon::Direction::Out,
            payload: Vec::new(),
        };
        // Ordered handshake: no verdicts.
        let (s, v) = a.step(a.initial, &ev(1, "handshake_init"));
        assert!(v.is_none());
        let (s, v) = a.step(s, &ev(2, "handshake_keyex"));
        assert!(v.is_none());
        assert_eq!(a.states[s], "established");
        // Key exchange before init: violation.
        let (s, v) = a.step(a.initial, &ev(1, "handshake_keyex"));
        assert_eq!(v, Some(VerdictKind::Violation));
        assert_eq!(a.states[s], "violated");
    }

    #[test]
    fn payload_regex_guard() {
        let a = load_spec(
            "property leak\nstates: ok bad\ninitial: ok\nviolation: bad\n\
             ok -> bad on */*/out payload ~ BEGIN[ -]?PRIVATE\n",
        )
        .unwrap()
        .automata
        .remove(0);
        let mut ev = Event {
            seq: 1,
            timestamp_ns: 0,
            boundary: crate::rvmon::Boundary::RaRee,
            channel: "anything".into(),
            direction: crate::rvmon::Direction::Out,
            payload: b"xx BEGIN PRIVATE KEY xx".to_vec(),
        };
        assert_eq!(a.step(0, &ev).1, Some(VerdictKind::Violation));
        ev.payload = b"nothing to see".to_vec();
        assert_eq!(a.step(0, &ev), (0, None));
        ev.payload = b"BEGIN-PRIVATE".to_vec();
        ev.direction = crate::rvmon::Direction::In;
        assert_eq!(a.step(0, &ev), (0, None), "inbound direction must not match");
    }

    #[test]
    fn parse_errors_carry_positions() {
        let err = load_spec("property p\nstates: a b\ninitial: a\na => b on ra_tee/x/out\n")
            .unwrap_err();
        match err {
            SpecError::Parse { line, column, .. } => {
                assert_eq!(line, 4);
                assert_eq!(column, 3);
            }
            other => panic!("expected parse error, got {other}"),
        }
        let err = load_spec("states: a\n").unwrap_err();
        assert!(matches!(err, SpecError::Parse { line: 1, column: 1, .. }));
    }

    #[test]
    fn unreachable_violation_state_is_a_warning() {
        let loaded = load_spec(
            "property p\nstates: a b dead\ninitial: a\nviolation: dead\n\
             a -> b on ra_tee/x/out\n",
        )
        .unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        assert!(loaded.warnings[0].contains("unreachable"));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let loaded = load_spec(
            "# header comment\n\nproperty p # trailing\nstates: a\ninitial: a\n\n",
        )
        .unwrap();
        assert_eq!(loaded.automata[0].id, "p");
    }

    #[test]
    fn wildcard_guard_components() {
        let a = load_spec(
            "property p\nstates: a b\ninitial: a\na -> b on */*/*\n",
        )
        .unwrap()
        .automata
        .remove(0);
        let g = &a.transitions[0].guard;
        assert!(g.boundary.is_none() && g.channel.is_none() && g.direction.is_none());
    }
}
