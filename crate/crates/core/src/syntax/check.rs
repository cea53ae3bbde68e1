use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{ModelFile, SourcePos};
use crate::term::{Field, Process, Target};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub column: usize,
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    fn error(pos: SourcePos, message: impl Into<String>) -> Self {
        Diagnostic {
            line: pos.line,
            column: pos.column,
            severity: Severity::Error,
            message: message.into(),
        }
    }

    /// `file:line:col: severity: message`
    pub fn render(&self, file: &str) -> String {
        format!("{file}:{}:{}: {}: {}", self.line, self.column, self.severity, self.message)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}: {}", self.line, self.column, self.severity, self.message)
    }
}

/// Static checks on a parsed model. An empty result means the model is well formed.
pub fn check_model(m: &ModelFile) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let arity: BTreeMap<&str, usize> = m
        .definitions
        .iter()
        .map(|d| (d.def.name.as_str(), d.def.params.len()))
        .collect();
    let mut declared: BTreeSet<&str> = m.attributes.iter().map(String::as_str).collect();
    declared.insert("id");

    let check_process = |p: &Process, pos: SourcePos, bound: &[String], what: &str, out: &mut Vec<Diagnostic>| {
        if p.contains_envelope() {
            out.push(Diagnostic::error(pos, format!("{what} contains a runtime envelope term")));
        }
        let mut calls = Vec::new();
        collect_calls(p, &mut calls);
        for (name, args) in calls {
            match arity.get(name.as_str()) {
                None => out.push(Diagnostic::error(pos, format!("{what} calls undefined process `{name}`"))),
                Some(&n) if n != args.len() => out.push(Diagnostic::error(
                    pos,
                    format!("{what}: `{name}` expects {n} arguments, got {}", args.len()),
                )),
                _ => {}
            }
            if args.iter().any(|a| matches!(a, Field::Formal(_))) {
                out.push(Diagnostic::error(pos, format!("{what}: formal field passed to `{name}`")));
            }
        }
        for x in p.free_vars() {
            if !bound.contains(&x) {
                out.push(Diagnostic::error(pos, format!("{what} uses unbound variable `{x}`")));
            }
        }
        let mut bad_attrs = BTreeSet::new();
        p.for_each_action(&mut |a| {
            if let Target::Pred(pred) = &a.target {
                for attr in pred.names().1 {
                    if !declared.contains(attr.as_str()) {
                        bad_attrs.insert(attr);
                    }
                }
            }
        });
        for attr in bad_attrs {
            out.push(Diagnostic::error(pos, format!("{what} uses undeclared attribute `{attr}`")));
        }
    };

    for d in &m.definitions {
        let what = format!("process `{}`", d.def.name);
        let mut seen = BTreeSet::new();
        for p in &d.def.params {
            if !seen.insert(p) {
                out.push(Diagnostic::error(d.pos, format!("{what}: parameter `{p}` repeated")));
            }
        }
        check_process(&d.def.body, d.pos, &d.def.params, &what, &mut out);
    }

    for cycle in unguarded_cycles(m) {
        let d = m.definitions.iter().find(|d| d.def.name == cycle[0]).expect("defined");
        out.push(Diagnostic::error(
            d.pos,
            format!("unguarded recursion through {}", cycle.join(" -> ")),
        ));
    }

    for c in &m.components {
        let what = format!("component `{}`", c.name);
        if let Some(i) = &c.interface {
            if m.interface(i).is_none() {
                out.push(Diagnostic::error(c.pos, format!("{what}: unknown interface `{i}`")));
            }
        }
        if let Some(r) = &c.repository {
            if m.repository(r).is_none() {
                out.push(Diagnostic::error(c.pos, format!("{what}: unknown repository `{r}`")));
            }
        }
        check_process(&c.process, c.pos, &[], &what, &mut out);
    }

    let mut names = BTreeSet::new();
    for c in &m.components {
        if c.replicate == 1 && !names.insert(c.name.clone()) {
            out.push(Diagnostic::error(c.pos, format!("component name `{}` used twice", c.name)));
        }
    }
    if m.components.is_empty() {
        out.push(Diagnostic::error(SourcePos { line: 1, column: 1 }, "model declares no components"));
    }
    out
}

fn collect_calls(p: &Process, out: &mut Vec<(String, Vec<Field>)>) {
    match p {
        Process::Call(n, args) => out.push((n.clone(), args.clone())),
        Process::Prefix(_, q) => collect_calls(q, out),
        Process::Choice(a, b) | Process::Parallel(a, b) => {
            collect_calls(a, out);
            collect_calls(b, out);
        }
        Process::Nil | Process::Envelope(_) => {}
    }
}

/// Calls reachable without passing an action prefix.
fn unguarded_calls(p: &Process, out: &mut BTreeSet<String>) {
    match p {
        Process::Call(n, _) => {
            out.insert(n.clone());
        }
        Process::Choice(a, b) | Process::Parallel(a, b) => {
            unguarded_calls(a, out);
            unguarded_calls(b, out);
        }
        _ => {}
    }
}

/// One representative cycle per strongly connected group of unguarded calls.
fn unguarded_cycles(m: &ModelFile) -> Vec<Vec<String>> {
    let graph: BTreeMap<String, BTreeSet<String>> = m
        .definitions
        .iter()
        .map(|d| {
            let mut s = BTreeSet::new();
            unguarded_calls(&d.def.body, &mut s);
            (d.def.name.clone(), s)
        })
        .collect();
    let mut reported: BTreeSet<String> = BTreeSet::new();
    let mut cycles = Vec::new();
    for start in graph.keys() {
        if reported.contains(start) {
            continue;
        }
        // depth-first search for a path back to `start`
        let mut stack = vec![(start.clone(), vec![start.clone()])];
        let mut visited = BTreeSet::new();
        while let Some((node, path)) = stack.pop() {
            let Some(next) = graph.get(&node) else { continue };
            let mut found = None;
            for n in next {
                if n == start {
                    found = Some(path.clone());
                    break;
                }
                if visited.insert(n.clone()) {
                    let mut p2 = path.clone();
                    p2.push(n.clone());
                    stack.push((n.clone(), p2));
                }
            }
            if let Some(mut cycle) = found {
                reported.extend(cycle.iter().cloned());
                cycle.push(start.clone());
                cycles.push(cycle);
                break;
            }
        }
    }
    cycles
}
