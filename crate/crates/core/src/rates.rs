//! The rate function `R(src, action, dst)` and loss probability `f_err`,
//! configured by an ordered list of JSON rules.
//!
//! ```json
//! {
//!   "default_rate": 1.0,
//!   "grid_width": 3,
//!   "rates": [
//!     { "kind": "get", "tag": "bike_res", "rate": "0.2 * dst.bikes" },
//!     { "kind": "put", "target": "self", "rate": 10 }
//!   ],
//!   "errors": [
//!     { "kind": "put", "when": "dst.loc != src.loc", "prob": 0.1 }
//!   ]
//! }
//! ```
//!
//! A rule matches on `kind` (`put`, `get`, `qry`, `envelope` or `*`),
//! `target` (`self`, `pred` or `*`), the payload `tag` and an optional
//! `when` condition. The first matching rule wins. Expressions may use
//! `src.A`, `dst.A`, `item.N` (payload field `N`, the tag is field 0),
//! numbers, strings, `+ - * /`, comparisons, `&& || !` and the functions
//! `distance`, `min`, `max`, `abs`. `distance(a, b)` is the Manhattan
//! distance between grid cells `a` and `b` numbered row by row when
//! `grid_width` is set, and `|a - b|` otherwise.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, EvalError, ParseError};
use crate::interface::Evaluation;
use crate::knowledge::{Item, Template};
use crate::syntax::lexer::{Cursor, Tok};
use crate::term::Predicate;
use crate::value::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorKind {
    Put,
    Get,
    Qry,
    Envelope,
}

impl fmt::Display for DescriptorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DescriptorKind::Put => "put",
            DescriptorKind::Get => "get",
            DescriptorKind::Qry => "qry",
            DescriptorKind::Envelope => "envelope",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum DescriptorTarget {
    SelfTarget,
    Pred(Arc<Predicate>),
}

/// An element of `Act`: `put(t)@c`, `get(T:t)@c`, `qry(T:t)@c`, or an envelope delivery.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ActionDescriptor {
    pub kind: DescriptorKind,
    pub item: Item,
    pub template: Option<Template>,
    pub target: DescriptorTarget,
}

impl fmt::Display for ActionDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.kind)?;
        if let Some(t) = &self.template {
            write!(f, "{t}:")?;
        }
        write!(f, "{})@", self.item)?;
        match &self.target {
            DescriptorTarget::SelfTarget => f.write_str("self"),
            DescriptorTarget::Pred(p) => write!(f, "({p})"),
        }
    }
}

/// A number or an expression in source form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Amount {
    Const(f64),
    Expr(String),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    #[serde(default = "star", skip_serializing_if = "is_star")]
    pub kind: String,
    #[serde(default = "star", skip_serializing_if = "is_star")]
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<Amount>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prob: Option<Amount>,
}

fn star() -> String {
    "*".into()
}

fn is_star(s: &String) -> bool {
    s == "*"
}

/// On-disk form of a configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSpec {
    #[serde(default = "one")]
    pub default_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_width: Option<i64>,
    #[serde(default)]
    pub rates: Vec<RuleSpec>,
    #[serde(default)]
    pub errors: Vec<RuleSpec>,
}

fn one() -> f64 {
    1.0
}

impl Default for ConfigSpec {
    fn default() -> Self {
        ConfigSpec {
            default_rate: 1.0,
            grid_width: None,
            rates: Vec::new(),
            errors: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Scope {
    Src,
    Dst,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

#[derive(Clone, Debug, PartialEq)]
enum Func {
    Distance,
    Min,
    Max,
    Abs,
}

#[derive(Clone, Debug, PartialEq)]
enum RExpr {
    Num(f64),
    Str(String),
    Ref(Scope, String),
    Field(usize),
    Neg(Box<RExpr>),
    Not(Box<RExpr>),
    Bin(BinOp, Box<RExpr>, Box<RExpr>),
    Call(Func, Vec<RExpr>),
}

#[derive(Clone, Debug, PartialEq)]
enum RVal {
    Num(f64),
    Str(String),
    Bool(bool),
}

struct Env<'a> {
    src: &'a Evaluation,
    dst: Option<&'a Evaluation>,
    item: &'a Item,
    grid_width: Option<i64>,
}

impl RExpr {
    fn mentions_dst(&self) -> bool {
        match self {
            RExpr::Ref(Scope::Dst, _) => true,
            RExpr::Neg(e) | RExpr::Not(e) => e.mentions_dst(),
            RExpr::Bin(_, a, b) => a.mentions_dst() || b.mentions_dst(),
            RExpr::Call(_, args) => args.iter().any(RExpr::mentions_dst),
            _ => false,
        }
    }

    fn is_const(&self) -> bool {
        match self {
            RExpr::Num(_) | RExpr::Str(_) => true,
            RExpr::Ref(..) | RExpr::Field(_) => false,
            RExpr::Neg(e) | RExpr::Not(e) => e.is_const(),
            RExpr::Bin(_, a, b) => a.is_const() && b.is_const(),
            RExpr::Call(_, args) => args.iter().all(RExpr::is_const),
        }
    }

    fn eval(&self, env: &Env) -> Result<RVal, EvalError> {
        Ok(match self {
            RExpr::Num(n) => RVal::Num(*n),
            RExpr::Str(s) => RVal::Str(s.clone()),
            RExpr::Ref(scope, attr) => {
                let (eval, prefix) = match scope {
                    Scope::Src => (Some(env.src), "src"),
                    Scope::Dst => (env.dst, "dst"),
                };
                let v = eval
                    .and_then(|e| e.get(attr))
                    .ok_or_else(|| EvalError::MissingAttribute(format!("{prefix}.{attr}")))?;
                value_to_rval(v)
            }
            RExpr::Field(i) => {
                let v = env
                    .item
                    .0
                    .get(*i)
                    .ok_or_else(|| EvalError::MissingAttribute(format!("item.{i}")))?;
                value_to_rval(v)
            }
            RExpr::Neg(e) => RVal::Num(-num(e.eval(env)?)?),
            RExpr::Not(e) => RVal::Bool(!boolean(e.eval(env)?)?),
            RExpr::Bin(op, a, b) => {
                match op {
                    BinOp::And => return Ok(RVal::Bool(boolean(a.eval(env)?)? && boolean(b.eval(env)?)?)),
                    BinOp::Or => return Ok(RVal::Bool(boolean(a.eval(env)?)? || boolean(b.eval(env)?)?)),
                    _ => {}
                }
                let (x, y) = (a.eval(env)?, b.eval(env)?);
                match op {
                    BinOp::Add => RVal::Num(num(x)? + num(y)?),
                    BinOp::Sub => RVal::Num(num(x)? - num(y)?),
                    BinOp::Mul => RVal::Num(num(x)? * num(y)?),
                    BinOp::Div => RVal::Num(num(x)? / num(y)?),
                    BinOp::Eq => RVal::Bool(x == y),
                    BinOp::Ne => RVal::Bool(x != y),
                    _ => {
                        let ord = match (&x, &y) {
                            (RVal::Num(p), RVal::Num(q)) => p.partial_cmp(q),
                            (RVal::Str(p), RVal::Str(q)) => Some(p.cmp(q)),
                            _ => None,
                        }
                        .ok_or_else(|| EvalError::Type(format!("cannot order {x:?} and {y:?}")))?;
                        RVal::Bool(match op {
                            BinOp::Lt => ord.is_lt(),
                            BinOp::Le => ord.is_le(),
                            BinOp::Gt => ord.is_gt(),
                            _ => ord.is_ge(),
                        })
                    }
                }
            }
            RExpr::Call(f, args) => {
                let xs = args
                    .iter()
                    .map(|a| a.eval(env).and_then(num))
                    .collect::<Result<Vec<_>, _>>()?;
                RVal::Num(match f {
                    Func::Abs => xs[0].abs(),
                    Func::Min => xs[0].min(xs[1]),
                    Func::Max => xs[0].max(xs[1]),
                    Func::Distance => distance(xs[0], xs[1], env.grid_width),
                })
            }
        })
    }
}

/// Manhattan distance between grid cells numbered row by row.
pub fn distance(a: f64, b: f64, grid_width: Option<i64>) -> f64 {
    match grid_width {
        Some(w) if w > 0 => {
            let (a, b, w) = (a as i64, b as i64, w);
            ((a % w - b % w).abs() + (a / w - b / w).abs()) as f64
        }
        _ => (a - b).abs(),
    }
}

fn value_to_rval(v: &Value) -> RVal {
    match v {
        Value::Str(s) => RVal::Str(s.clone()),
        other => RVal::Num(other.as_f64().expect("numeric value")),
    }
}

fn num(v: RVal) -> Result<f64, EvalError> {
    match v {
        RVal::Num(n) => Ok(n),
        other => Err(EvalError::Type(format!("expected a number, found {other:?}"))),
    }
}

fn boolean(v: RVal) -> Result<bool, EvalError> {
    match v {
        RVal::Bool(b) => Ok(b),
        other => Err(EvalError::Type(format!("expected a condition, found {other:?}"))),
    }
}

fn parse_expr(text: &str) -> Result<RExpr, ParseError> {
    let mut p = ExprParser { cur: Cursor::new(text)? };
    let e = p.or()?;
    if !p.cur.at_eof() {
        return Err(p.cur.unexpected(&["end of expression"]));
    }
    Ok(e)
}

struct ExprParser {
    cur: Cursor,
}

impl ExprParser {
    fn or(&mut self) -> Result<RExpr, ParseError> {
        let mut e = self.and()?;
        while self.cur.eat_sym("||") {
            e = RExpr::Bin(BinOp::Or, Box::new(e), Box::new(self.and()?));
        }
        Ok(e)
    }

    fn and(&mut self) -> Result<RExpr, ParseError> {
        let mut e = self.not()?;
        while self.cur.eat_sym("&&") {
            e = RExpr::Bin(BinOp::And, Box::new(e), Box::new(self.not()?));
        }
        Ok(e)
    }

    fn not(&mut self) -> Result<RExpr, ParseError> {
        if self.cur.eat_sym("!") {
            return Ok(RExpr::Not(Box::new(self.not()?)));
        }
        let l = self.sum()?;
        let op = match self.cur.peek() {
            Tok::Sym("<") => BinOp::Lt,
            Tok::Sym("<=") => BinOp::Le,
            Tok::Sym(">") => BinOp::Gt,
            Tok::Sym(">=") => BinOp::Ge,
            Tok::Sym("==") => BinOp::Eq,
            Tok::Sym("!=") => BinOp::Ne,
            _ => return Ok(l),
        };
        self.cur.bump();
        let r = self.sum()?;
        Ok(RExpr::Bin(op, Box::new(l), Box::new(r)))
    }

    fn sum(&mut self) -> Result<RExpr, ParseError> {
        let mut e = self.product()?;
        loop {
            let op = match self.cur.peek() {
                Tok::Sym("+") => BinOp::Add,
                Tok::Sym("-") => BinOp::Sub,
                _ => return Ok(e),
            };
            self.cur.bump();
            e = RExpr::Bin(op, Box::new(e), Box::new(self.product()?));
        }
    }

    fn product(&mut self) -> Result<RExpr, ParseError> {
        let mut e = self.unary()?;
        loop {
            let op = match self.cur.peek() {
                Tok::Sym("*") => BinOp::Mul,
                Tok::Sym("/") => BinOp::Div,
                _ => return Ok(e),
            };
            self.cur.bump();
            e = RExpr::Bin(op, Box::new(e), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<RExpr, ParseError> {
        if self.cur.eat_sym("-") {
            return Ok(RExpr::Neg(Box::new(self.unary()?)));
        }
        match self.cur.bump() {
            Tok::Int(i) => Ok(RExpr::Num(i as f64)),
            Tok::Real(r) => Ok(RExpr::Num(r)),
            Tok::Str(s) => Ok(RExpr::Str(s)),
            Tok::Sym("(") => {
                let e = self.or()?;
                self.cur.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "src" | "dst" => {
                    self.cur.expect_sym(".")?;
                    let attr = self.cur.expect_ident()?;
                    let scope = if name == "src" { Scope::Src } else { Scope::Dst };
                    Ok(RExpr::Ref(scope, attr))
                }
                "item" => {
                    self.cur.expect_sym(".")?;
                    match self.cur.bump() {
                        Tok::Int(i) if i >= 0 => Ok(RExpr::Field(i as usize)),
                        _ => Err(self.cur.error("expected a field index after `item.`", &["integer"])),
                    }
                }
                "true" => Ok(RExpr::Bin(BinOp::Eq, Box::new(RExpr::Num(0.0)), Box::new(RExpr::Num(0.0)))),
                "false" => Ok(RExpr::Bin(BinOp::Ne, Box::new(RExpr::Num(0.0)), Box::new(RExpr::Num(0.0)))),
                "distance" | "min" | "max" | "abs" => {
                    let (func, n) = match name.as_str() {
                        "distance" => (Func::Distance, 2),
                        "min" => (Func::Min, 2),
                        "max" => (Func::Max, 2),
                        _ => (Func::Abs, 1),
                    };
                    self.cur.expect_sym("(")?;
                    let mut args = vec![self.or()?];
                    while self.cur.eat_sym(",") {
                        args.push(self.or()?);
                    }
                    self.cur.expect_sym(")")?;
                    if args.len() != n {
                        return Err(self.cur.error(format!("`{name}` takes {n} arguments"), &[]));
                    }
                    Ok(RExpr::Call(func, args))
                }
                _ => Err(self.cur.error(format!("unknown name `{name}`"), &["src.", "dst.", "item.", "function"])),
            },
            other => Err(self.cur.error(format!("unexpected {}", other.describe()), &["expression"])),
        }
    }
}

#[derive(Clone, Debug)]
struct Rule {
    label: String,
    kind: Option<DescriptorKind>,
    target: Option<bool>,
    tag: Option<String>,
    when: Option<RExpr>,
    value: RExpr,
}

impl Rule {
    fn compile(spec: &RuleSpec, index: usize, section: &str, is_rate: bool) -> Result<Rule, ConfigError> {
        let label = format!("{section}[{index}]");
        let fail = |message: String| ConfigError::Rule {
            rule: label.clone(),
            message,
        };
        let kind = match spec.kind.as_str() {
            "*" => None,
            "put" => Some(DescriptorKind::Put),
            "get" => Some(DescriptorKind::Get),
            "qry" => Some(DescriptorKind::Qry),
            "envelope" => Some(DescriptorKind::Envelope),
            k => return Err(fail(format!("unknown kind `{k}`"))),
        };
        let target = match spec.target.as_str() {
            "*" => None,
            "self" => Some(true),
            "pred" => Some(false),
            t => return Err(fail(format!("unknown target `{t}`"))),
        };
        let when = spec
            .when
            .as_deref()
            .map(parse_expr)
            .transpose()
            .map_err(|e| fail(format!("condition: {e}")))?;
        let amount = if is_rate { &spec.rate } else { &spec.prob };
        let (field, other) = if is_rate { ("rate", &spec.prob) } else { ("prob", &spec.rate) };
        if other.is_some() {
            return Err(fail(format!("unexpected field; this section takes `{field}`")));
        }
        let value = match amount {
            None => return Err(fail(format!("missing `{field}`"))),
            Some(Amount::Const(c)) => RExpr::Num(*c),
            Some(Amount::Expr(s)) => parse_expr(s).map_err(|e| fail(format!("{field}: {e}")))?,
        };
        if is_rate && kind == Some(DescriptorKind::Put) {
            if value.mentions_dst() || when.as_ref().is_some_and(RExpr::mentions_dst) {
                return Err(fail("put rates cannot depend on the destination".into()));
            }
        }
        Ok(Rule {
            label,
            kind,
            target,
            tag: spec.tag.clone(),
            when,
            value,
        })
    }

    fn matches(&self, a: &ActionDescriptor, env: &Env) -> Result<bool, EvalError> {
        if self.kind.is_some_and(|k| k != a.kind) {
            return Ok(false);
        }
        if let Some(is_self) = self.target {
            if is_self != matches!(a.target, DescriptorTarget::SelfTarget) {
                return Ok(false);
            }
        }
        if let Some(tag) = &self.tag {
            if a.item.tag() != Some(tag.as_str()) {
                return Ok(false);
            }
        }
        match &self.when {
            None => Ok(true),
            // a condition over a missing attribute does not match
            Some(c) => match c.eval(env) {
                Ok(v) => boolean(v),
                Err(EvalError::MissingAttribute(_)) => Ok(false),
                Err(e) => Err(e),
            },
        }
    }
}

/// A loaded, validated configuration. Read-only after construction.
#[derive(Clone, Debug)]
pub struct RateConfig {
    spec: ConfigSpec,
    rates: Vec<Rule>,
    errors: Vec<Rule>,
}

impl Default for RateConfig {
    fn default() -> Self {
        RateConfig::from_spec(ConfigSpec::default()).expect("default config is valid")
    }
}

impl RateConfig {
    pub fn from_spec(spec: ConfigSpec) -> Result<Self, ConfigError> {
        if !spec.default_rate.is_finite() || spec.default_rate < 0.0 {
            return Err(ConfigError::Invalid(format!(
                "default_rate {} must be finite and non-negative",
                spec.default_rate
            )));
        }
        if spec.grid_width.is_some_and(|w| w <= 0) {
            return Err(ConfigError::Invalid("grid_width must be positive".into()));
        }
        let rates = spec
            .rates
            .iter()
            .enumerate()
            .map(|(i, r)| Rule::compile(r, i, "rates", true))
            .collect::<Result<Vec<_>, _>>()?;
        let errors = spec
            .errors
            .iter()
            .enumerate()
            .map(|(i, r)| Rule::compile(r, i, "errors", false))
            .collect::<Result<Vec<_>, _>>()?;
        let dummy = Item(vec![]);
        let env = Env {
            src: &Evaluation::default(),
            dst: None,
            item: &dummy,
            grid_width: spec.grid_width,
        };
        for (rule, is_rate) in rates.iter().map(|r| (r, true)).chain(errors.iter().map(|r| (r, false))) {
            if !rule.value.is_const() {
                continue;
            }
            let v = rule
                .value
                .eval(&env)
                .and_then(num)
                .map_err(|e| ConfigError::Rule {
                    rule: rule.label.clone(),
                    message: e.to_string(),
                })?;
            let ok = if is_rate {
                v.is_finite() && v >= 0.0
            } else {
                (0.0..=1.0).contains(&v)
            };
            if !ok {
                let what = if is_rate { "rate" } else { "probability" };
                return Err(ConfigError::Rule {
                    rule: rule.label.clone(),
                    message: format!("{what} {v} is out of range"),
                });
            }
        }
        Ok(RateConfig { spec, rates, errors })
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let spec: ConfigSpec = serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))?;
        Self::from_spec(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn spec(&self) -> &ConfigSpec {
        &self.spec
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.spec).expect("serializable")
    }

    pub fn default_rate(&self) -> f64 {
        self.spec.default_rate
    }

    /// `R(src, a, dst)`; `dst` is `None` for the wildcard destination of a put.
    pub fn rate(&self, src: &Evaluation, a: &ActionDescriptor, dst: Option<&Evaluation>) -> Result<f64, EvalError> {
        let env = Env {
            src,
            dst,
            item: &a.item,
            grid_width: self.spec.grid_width,
        };
        for rule in &self.rates {
            if rule.matches(a, &env)? {
                let v = num(rule.value.eval(&env)?)?;
                if !v.is_finite() || v < 0.0 {
                    return Err(EvalError::BadRate {
                        action: format!("{a} ({})", rule.label),
                        value: v,
                    });
                }
                return Ok(v);
            }
        }
        Ok(self.spec.default_rate)
    }

    /// `f_err(src, a, dst)`; 0 when no rule matches.
    pub fn loss_probability(
        &self,
        src: &Evaluation,
        a: &ActionDescriptor,
        dst: Option<&Evaluation>,
    ) -> Result<f64, EvalError> {
        let env = Env {
            src,
            dst,
            item: &a.item,
            grid_width: self.spec.grid_width,
        };
        for rule in &self.errors {
            if rule.matches(a, &env)? {
                let v = num(rule.value.eval(&env)?)?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(EvalError::BadProbability {
                        action: format!("{a} ({})", rule.label),
                        value: v,
                    });
                }
                return Ok(v);
            }
        }
        Ok(0.0)
    }

    pub fn has_error_rules(&self) -> bool {
        !self.errors.is_empty()
    }
}
