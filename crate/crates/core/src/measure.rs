//! Measures: numbers read off a system state through component interfaces.
//!
//! ```text
//! count(pred)          components satisfying pred
//! sum(attr, pred)      sum of attr over components satisfying pred
//! mean(attr, pred)     mean of attr
//! stddev(attr, pred)   population standard deviation of attr
//! attr(name, attr)     attr of the component called name
//! ```
//!
//! The predicate is optional for `sum`, `mean` and `stddev`. A measure may be
//! named with `name=expr`. Components lacking the attribute are skipped.

use std::fmt;

use crate::error::ParseError;
use crate::interface::Evaluation;
use crate::syntax::parse_predicate;
use crate::term::{Predicate, System};

#[derive(Clone, Debug, PartialEq)]
pub enum MeasureExpr {
    Count(Predicate),
    Sum { attr: String, filter: Predicate },
    Mean { attr: String, filter: Predicate },
    StdDev { attr: String, filter: Predicate },
    Attr { component: String, attr: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Measure {
    pub name: String,
    pub expr: MeasureExpr,
}

fn err(message: impl Into<String>) -> ParseError {
    ParseError {
        line: 1,
        column: 1,
        message: message.into(),
        expected: Vec::new(),
    }
}

impl Measure {
    pub fn new(name: impl Into<String>, expr: MeasureExpr) -> Self {
        Measure { name: name.into(), expr }
    }

    pub fn parse(spec: &str) -> Result<Measure, ParseError> {
        let spec = spec.trim();
        let (name, body) = match spec.split_once('=') {
            Some((n, b)) if is_ident(n.trim()) && !b.starts_with('=') => (n.trim().to_string(), b.trim()),
            _ => (spec.to_string(), spec),
        };
        let open = body.find('(').ok_or_else(|| err(format!("measure `{body}`: expected `fn(...)`")))?;
        if !body.ends_with(')') {
            return Err(err(format!("measure `{body}`: missing `)`")));
        }
        let func = body[..open].trim();
        let args = body[open + 1..body.len() - 1].trim();
        let attr_and_filter = |args: &str| -> Result<(String, Predicate), ParseError> {
            let (attr, pred) = match args.split_once(',') {
                Some((a, p)) => (a.trim(), parse_predicate(p.trim())?),
                None => (args, Predicate::True),
            };
            if !is_ident(attr) {
                return Err(err(format!("measure `{body}`: `{attr}` is not an attribute name")));
            }
            Ok((attr.to_string(), pred))
        };
        let expr = match func {
            "count" => MeasureExpr::Count(if args.is_empty() {
                Predicate::True
            } else {
                parse_predicate(args)?
            }),
            "sum" => {
                let (attr, filter) = attr_and_filter(args)?;
                MeasureExpr::Sum { attr, filter }
            }
            "mean" => {
                let (attr, filter) = attr_and_filter(args)?;
                MeasureExpr::Mean { attr, filter }
            }
            "stddev" => {
                let (attr, filter) = attr_and_filter(args)?;
                MeasureExpr::StdDev { attr, filter }
            }
            "attr" => {
                let (c, a) = args
                    .split_once(',')
                    .ok_or_else(|| err(format!("measure `{body}`: expected attr(component, attribute)")))?;
                MeasureExpr::Attr {
                    component: c.trim().trim_matches('"').to_string(),
                    attr: a.trim().to_string(),
                }
            }
            other => return Err(err(format!("unknown measure function `{other}`"))),
        };
        Ok(Measure { name, expr })
    }

    /// Value on a list of interface evaluations (one per component).
    pub fn evaluate<'a, I>(&self, evals: I) -> f64
    where
        I: IntoIterator<Item = &'a Evaluation>,
    {
        let values = |attr: &str, filter: &Predicate, evals: I| -> Vec<f64> {
            evals
                .into_iter()
                .filter(|e| e.satisfies(filter))
                .filter_map(|e| e.get(attr).and_then(|v| v.as_f64()))
                .collect()
        };
        match &self.expr {
            MeasureExpr::Count(p) => evals.into_iter().filter(|e| e.satisfies(p)).count() as f64,
            MeasureExpr::Sum { attr, filter } => values(attr, filter, evals).iter().fold(0.0, |acc, x| acc + x),
            MeasureExpr::Mean { attr, filter } => mean(&values(attr, filter, evals)),
            MeasureExpr::StdDev { attr, filter } => std_dev(&values(attr, filter, evals)),
            MeasureExpr::Attr { component, attr } => evals
                .into_iter()
                .find(|e| e.id() == Some(component.as_str()))
                .and_then(|e| e.get(attr))
                .and_then(|v| v.as_f64())
                .unwrap_or(f64::NAN),
        }
    }

    pub fn evaluate_system(&self, s: &System) -> f64 {
        let evals: Vec<Evaluation> = s.components().map(|c| c.interface.evaluate(&c.name, &c.knowledge)).collect();
        self.evaluate(evals.iter())
    }
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_alphabetic() || c == '_') && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn aggregate(f: &mut fmt::Formatter<'_>, name: &str, attr: &str, filter: &Predicate) -> fmt::Result {
    match filter {
        Predicate::True => write!(f, "{name}({attr})"),
        _ => write!(f, "{name}({attr}, {filter})"),
    }
}

impl fmt::Display for MeasureExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeasureExpr::Count(p) => write!(f, "count({p})"),
            MeasureExpr::Sum { attr, filter } => aggregate(f, "sum", attr, filter),
            MeasureExpr::Mean { attr, filter } => aggregate(f, "mean", attr, filter),
            MeasureExpr::StdDev { attr, filter } => aggregate(f, "stddev", attr, filter),
            MeasureExpr::Attr { component, attr } => write!(f, "attr({component}, {attr})"),
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.name, self.expr)
    }
}
