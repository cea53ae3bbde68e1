//! Abstract syntax of systems, components, processes, actions and predicates.
//!
//! Display impls print the concrete syntax accepted by the parser, so
//! `parse(print(t)) == t` for every term a user can write.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use crate::interface::InterfaceDef;
use crate::knowledge::{Item, KnowledgeState, Repository, Substitution, Template, TemplateField};
use crate::value::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
            ArithOp::Mod => "%",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    Lit(Value),
    Var(String),
    Attr(String),
    Bin(ArithOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn bin(op: ArithOp, l: Expr, r: Expr) -> Expr {
        Expr::Bin(op, Box::new(l), Box::new(r))
    }

    /// Evaluates under an attribute lookup. Unbound variables and missing
    /// attributes make the result undefined.
    pub fn eval(&self, attr: &dyn Fn(&str) -> Option<Value>) -> Option<Value> {
        match self {
            Expr::Lit(v) => Some(v.clone()),
            Expr::Var(_) => None,
            Expr::Attr(a) => attr(a),
            Expr::Bin(op, l, r) => arith(*op, &l.eval(attr)?, &r.eval(attr)?),
        }
    }

    fn substitute(&self, theta: &Substitution) -> Expr {
        match self {
            Expr::Var(x) => match theta.get(x) {
                Some(v) => Expr::Lit(v.clone()),
                None => self.clone(),
            },
            Expr::Bin(op, l, r) => Expr::bin(*op, l.substitute(theta), r.substitute(theta)),
            _ => self.clone(),
        }
    }

    fn mentions(&self, theta: &Substitution) -> bool {
        match self {
            Expr::Var(x) => theta.contains_key(x),
            Expr::Bin(_, l, r) => l.mentions(theta) || r.mentions(theta),
            _ => false,
        }
    }

    fn collect(&self, vars: &mut BTreeSet<String>, attrs: &mut BTreeSet<String>) {
        match self {
            Expr::Var(x) => {
                vars.insert(x.clone());
            }
            Expr::Attr(a) => {
                attrs.insert(a.clone());
            }
            Expr::Bin(_, l, r) => {
                l.collect(vars, attrs);
                r.collect(vars, attrs);
            }
            Expr::Lit(_) => {}
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, prec: u8) -> fmt::Result {
        match self {
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Var(x) | Expr::Attr(x) => f.write_str(x),
            Expr::Bin(op, l, r) => {
                let my = if matches!(op, ArithOp::Add | ArithOp::Sub) { 1 } else { 2 };
                if prec > my {
                    f.write_str("(")?;
                }
                l.fmt_prec(f, my)?;
                write!(f, " {} ", op.symbol())?;
                r.fmt_prec(f, my + 1)?;
                if prec > my {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

pub(crate) fn arith(op: ArithOp, a: &Value, b: &Value) -> Option<Value> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => match op {
            ArithOp::Add => x.checked_add(*y),
            ArithOp::Sub => x.checked_sub(*y),
            ArithOp::Mul => x.checked_mul(*y),
            ArithOp::Div if *y != 0 => Some(x.div_euclid(*y)),
            ArithOp::Mod if *y != 0 => Some(x.rem_euclid(*y)),
            ArithOp::Div | ArithOp::Mod => None,
        }
        .map(Value::Int),
        _ => {
            let (x, y) = (a.as_f64()?, b.as_f64()?);
            Some(Value::Real(match op {
                ArithOp::Add => x + y,
                ArithOp::Sub => x - y,
                ArithOp::Mul => x * y,
                ArithOp::Div if y != 0.0 => x / y,
                ArithOp::Mod if y != 0.0 => x.rem_euclid(y),
                ArithOp::Div | ArithOp::Mod => return None,
            }))
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    pub fn holds(self, a: &Value, b: &Value) -> bool {
        use std::cmp::Ordering::*;
        match a.compare(b) {
            None => false,
            Some(ord) => match self {
                CmpOp::Lt => ord == Less,
                CmpOp::Le => ord != Greater,
                CmpOp::Gt => ord == Greater,
                CmpOp::Ge => ord != Less,
                CmpOp::Eq => ord == Equal,
                CmpOp::Ne => ord != Equal,
            },
        }
    }
}

/// Ensemble predicates. Disjunction is sugar for `!(!p && !q)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Predicate {
    True,
    Compare(Expr, CmpOp, Expr),
    Not(Box<Predicate>),
    And(Box<Predicate>, Box<Predicate>),
}

impl Predicate {
    pub fn compare(l: Expr, op: CmpOp, r: Expr) -> Self {
        Predicate::Compare(l, op, r)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(p: Predicate) -> Self {
        Predicate::Not(Box::new(p))
    }

    pub fn and(p: Predicate, q: Predicate) -> Self {
        Predicate::And(Box::new(p), Box::new(q))
    }

    pub fn or(p: Predicate, q: Predicate) -> Self {
        Predicate::not(Predicate::and(Predicate::not(p), Predicate::not(q)))
    }

    /// Left-nested disjunction of a non-empty list; `!tt` when empty.
    pub fn any(mut ps: Vec<Predicate>) -> Self {
        if ps.is_empty() {
            return Predicate::not(Predicate::True);
        }
        let first = ps.remove(0);
        ps.into_iter().fold(first, Predicate::or)
    }

    pub fn all(mut ps: Vec<Predicate>) -> Self {
        if ps.is_empty() {
            return Predicate::True;
        }
        let first = ps.remove(0);
        ps.into_iter().fold(first, Predicate::and)
    }

    /// Recognises the disjunction sugar.
    pub fn as_or(&self) -> Option<(&Predicate, &Predicate)> {
        if let Predicate::Not(inner) = self {
            if let Predicate::And(l, r) = inner.as_ref() {
                if let (Predicate::Not(a), Predicate::Not(b)) = (l.as_ref(), r.as_ref()) {
                    return Some((a, b));
                }
            }
        }
        None
    }

    /// Truth under an attribute lookup; comparisons with an undefined side are false.
    pub fn eval(&self, attr: &dyn Fn(&str) -> Option<Value>) -> bool {
        match self {
            Predicate::True => true,
            Predicate::Compare(l, op, r) => match (l.eval(attr), r.eval(attr)) {
                (Some(a), Some(b)) => op.holds(&a, &b),
                _ => false,
            },
            Predicate::Not(p) => !p.eval(attr),
            Predicate::And(p, q) => p.eval(attr) && q.eval(attr),
        }
    }

    pub fn substitute(&self, theta: &Substitution) -> Predicate {
        match self {
            Predicate::True => Predicate::True,
            Predicate::Compare(l, op, r) => Predicate::Compare(l.substitute(theta), *op, r.substitute(theta)),
            Predicate::Not(p) => Predicate::not(p.substitute(theta)),
            Predicate::And(p, q) => Predicate::and(p.substitute(theta), q.substitute(theta)),
        }
    }

    fn mentions(&self, theta: &Substitution) -> bool {
        match self {
            Predicate::True => false,
            Predicate::Compare(l, _, r) => l.mentions(theta) || r.mentions(theta),
            Predicate::Not(p) => p.mentions(theta),
            Predicate::And(p, q) => p.mentions(theta) || q.mentions(theta),
        }
    }

    /// Variables and attribute names occurring in the predicate.
    pub fn names(&self) -> (BTreeSet<String>, BTreeSet<String>) {
        let mut vars = BTreeSet::new();
        let mut attrs = BTreeSet::new();
        self.collect(&mut vars, &mut attrs);
        (vars, attrs)
    }

    fn collect(&self, vars: &mut BTreeSet<String>, attrs: &mut BTreeSet<String>) {
        match self {
            Predicate::True => {}
            Predicate::Compare(l, _, r) => {
                l.collect(vars, attrs);
                r.collect(vars, attrs);
            }
            Predicate::Not(p) => p.collect(vars, attrs),
            Predicate::And(p, q) => {
                p.collect(vars, attrs);
                q.collect(vars, attrs);
            }
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, prec: u8) -> fmt::Result {
        if let Some((a, b)) = self.as_or() {
            if prec > 0 {
                f.write_str("(")?;
            }
            a.fmt_prec(f, 0)?;
            f.write_str(" || ")?;
            b.fmt_prec(f, 1)?;
            if prec > 0 {
                f.write_str(")")?;
            }
            return Ok(());
        }
        match self {
            Predicate::True => f.write_str("tt"),
            Predicate::Compare(l, op, r) => write!(f, "{l} {} {r}", op.symbol()),
            Predicate::Not(p) => {
                f.write_str("!")?;
                p.fmt_prec(f, 2)
            }
            Predicate::And(p, q) => {
                if prec > 1 {
                    f.write_str("(")?;
                }
                p.fmt_prec(f, 1)?;
                f.write_str(" && ")?;
                q.fmt_prec(f, 2)?;
                if prec > 1 {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// A syntactic tuple field: a value, a variable reference, or (in templates) a formal `?x`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Field {
    Value(Value),
    Var(String),
    Formal(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tuple(pub Vec<Field>);

impl Tuple {
    pub fn values<I: IntoIterator<Item = Value>>(values: I) -> Self {
        Tuple(values.into_iter().map(Field::Value).collect())
    }

    /// The ground item, if every field is a value.
    pub fn to_item(&self) -> Option<Item> {
        self.0
            .iter()
            .map(|f| match f {
                Field::Value(v) => Some(v.clone()),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(Item)
    }

    /// The template, if no variable reference is left unbound.
    pub fn to_template(&self) -> Option<Template> {
        self.0
            .iter()
            .map(|f| match f {
                Field::Value(v) => Some(TemplateField::Value(v.clone())),
                Field::Formal(x) => Some(TemplateField::Formal(x.clone())),
                Field::Var(_) => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(Template)
    }

    pub fn formals(&self) -> impl Iterator<Item = &str> {
        self.0.iter().filter_map(|f| match f {
            Field::Formal(x) => Some(x.as_str()),
            _ => None,
        })
    }

    pub fn vars(&self) -> impl Iterator<Item = &str> {
        self.0.iter().filter_map(|f| match f {
            Field::Var(x) => Some(x.as_str()),
            _ => None,
        })
    }

    fn substitute(&self, theta: &Substitution) -> Tuple {
        Tuple(
            self.0
                .iter()
                .map(|f| match f {
                    Field::Var(x) => theta.get(x).map_or_else(|| f.clone(), |v| Field::Value(v.clone())),
                    _ => f.clone(),
                })
                .collect(),
        )
    }
}

impl From<&Item> for Tuple {
    fn from(item: &Item) -> Self {
        Tuple::values(item.0.iter().cloned())
    }
}

impl From<&Template> for Tuple {
    fn from(t: &Template) -> Self {
        Tuple(
            t.0.iter()
                .map(|f| match f {
                    TemplateField::Value(v) => Field::Value(v.clone()),
                    TemplateField::Formal(x) => Field::Formal(x.clone()),
                })
                .collect(),
        )
    }
}

impl fmt::Display for Tuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<")?;
        for (i, field) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match field {
                Field::Value(v) => write!(f, "{v}")?,
                Field::Var(x) => f.write_str(x)?,
                Field::Formal(x) => write!(f, "?{x}")?,
            }
        }
        f.write_str(">")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    SelfTarget,
    Pred(Arc<Predicate>),
}

impl Target {
    pub fn pred(p: Predicate) -> Self {
        Target::Pred(Arc::new(p))
    }

    fn substitute(&self, theta: &Substitution) -> Target {
        match self {
            Target::Pred(p) if p.mentions(theta) => Target::Pred(Arc::new(p.substitute(theta))),
            _ => self.clone(),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::SelfTarget => f.write_str("self"),
            Target::Pred(p) => write!(f, "({p})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionKind {
    Put,
    Get,
    Qry,
}

impl ActionKind {
    pub fn keyword(self) -> &'static str {
        match self {
            ActionKind::Put => "put",
            ActionKind::Get => "get",
            ActionKind::Qry => "qry",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Action {
    pub kind: ActionKind,
    pub payload: Tuple,
    pub target: Target,
}

impl Action {
    pub fn new(kind: ActionKind, payload: Tuple, target: Target) -> Self {
        Action { kind, payload, target }
    }

    pub fn substitute(&self, theta: &Substitution) -> Action {
        Action {
            kind: self.kind,
            payload: self.payload.substitute(theta),
            target: self.target.substitute(theta),
        }
    }

    /// Variables bound by this action for its continuation.
    pub fn binders(&self) -> impl Iterator<Item = &str> {
        let gq = self.kind != ActionKind::Put;
        self.payload.formals().filter(move |_| gq)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})@{}", self.kind.keyword(), self.payload, self.target)
    }
}

/// An in-flight put message `[t]_p^mu`. Created only by the network-oriented
/// semantics; never written by users.
#[derive(Clone, Debug)]
pub struct Envelope {
    pub item: Item,
    pub predicate: Arc<Predicate>,
    pub rate: f64,
}

impl PartialEq for Envelope {
    fn eq(&self, other: &Self) -> bool {
        self.item == other.item && self.predicate == other.predicate && self.rate.to_bits() == other.rate.to_bits()
    }
}

impl Eq for Envelope {}

impl Hash for Envelope {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.item.hash(state);
        self.predicate.hash(state);
        self.rate.to_bits().hash(state);
    }
}

impl PartialOrd for Envelope {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Envelope {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.item
            .cmp(&other.item)
            .then_with(|| self.predicate.cmp(&other.predicate))
            .then_with(|| self.rate.total_cmp(&other.rate))
    }
}

impl fmt::Display for Envelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "env({}, {}, {:?})", self.item, self.predicate, self.rate)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Process {
    Nil,
    Prefix(Action, Box<Process>),
    Choice(Box<Process>, Box<Process>),
    Parallel(Box<Process>, Box<Process>),
    Call(String, Vec<Field>),
    Envelope(Envelope),
}

impl Process {
    pub fn prefix(a: Action, p: Process) -> Process {
        Process::Prefix(a, Box::new(p))
    }

    pub fn choice(p: Process, q: Process) -> Process {
        Process::Choice(Box::new(p), Box::new(q))
    }

    pub fn par(p: Process, q: Process) -> Process {
        Process::Parallel(Box::new(p), Box::new(q))
    }

    pub fn call(name: impl Into<String>, args: Vec<Field>) -> Process {
        Process::Call(name.into(), args)
    }

    /// Replaces free variables. Formals of a get/qry template bind in the
    /// continuation and shadow `theta` there.
    pub fn substitute(&self, theta: &Substitution) -> Process {
        if theta.is_empty() {
            return self.clone();
        }
        match self {
            Process::Nil | Process::Envelope(_) => self.clone(),
            Process::Prefix(a, cont) => {
                let a2 = a.substitute(theta);
                let mut inner = theta.clone();
                for x in a.binders() {
                    inner.remove(x);
                }
                Process::prefix(a2, cont.substitute(&inner))
            }
            Process::Choice(p, q) => Process::choice(p.substitute(theta), q.substitute(theta)),
            Process::Parallel(p, q) => Process::par(p.substitute(theta), q.substitute(theta)),
            Process::Call(name, args) => Process::Call(
                name.clone(),
                args.iter()
                    .map(|f| match f {
                        Field::Var(x) => theta.get(x).map_or_else(|| f.clone(), |v| Field::Value(v.clone())),
                        _ => f.clone(),
                    })
                    .collect(),
            ),
        }
    }

    /// Free variables (not bound by an enclosing template formal).
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&BTreeSet::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &BTreeSet<String>, out: &mut BTreeSet<String>) {
        match self {
            Process::Nil | Process::Envelope(_) => {}
            Process::Prefix(a, cont) => {
                for x in a.payload.vars() {
                    if !bound.contains(x) {
                        out.insert(x.to_string());
                    }
                }
                if let Target::Pred(p) = &a.target {
                    for x in p.names().0 {
                        if !bound.contains(&x) {
                            out.insert(x);
                        }
                    }
                }
                let mut inner = bound.clone();
                inner.extend(a.binders().map(str::to_string));
                cont.collect_free(&inner, out);
            }
            Process::Choice(p, q) | Process::Parallel(p, q) => {
                p.collect_free(bound, out);
                q.collect_free(bound, out);
            }
            Process::Call(_, args) => {
                for f in args {
                    if let Field::Var(x) = f {
                        if !bound.contains(x) {
                            out.insert(x.clone());
                        }
                    }
                }
            }
        }
    }

    /// Visits every action prefix syntactically present in the term.
    pub fn for_each_action(&self, f: &mut dyn FnMut(&Action)) {
        match self {
            Process::Prefix(a, cont) => {
                f(a);
                cont.for_each_action(f);
            }
            Process::Choice(p, q) | Process::Parallel(p, q) => {
                p.for_each_action(f);
                q.for_each_action(f);
            }
            _ => {}
        }
    }

    pub fn contains_envelope(&self) -> bool {
        match self {
            Process::Envelope(_) => true,
            Process::Prefix(_, p) => p.contains_envelope(),
            Process::Choice(p, q) | Process::Parallel(p, q) => p.contains_envelope() || q.contains_envelope(),
            _ => false,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, prec: u8) -> fmt::Result {
        match self {
            Process::Nil => f.write_str("nil"),
            Process::Prefix(a, cont) => {
                write!(f, "{a}.")?;
                cont.fmt_prec(f, 2)
            }
            Process::Choice(p, q) => {
                if prec > 0 {
                    f.write_str("(")?;
                }
                p.fmt_prec(f, 0)?;
                f.write_str(" + ")?;
                q.fmt_prec(f, 1)?;
                if prec > 0 {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Process::Parallel(p, q) => {
                if prec > 1 {
                    f.write_str("(")?;
                }
                p.fmt_prec(f, 1)?;
                f.write_str(" | ")?;
                q.fmt_prec(f, 2)?;
                if prec > 1 {
                    f.write_str(")")?;
                }
                Ok(())
            }
            Process::Call(name, args) => {
                f.write_str(name)?;
                if !args.is_empty() {
                    f.write_str("(")?;
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            f.write_str(", ")?;
                        }
                        match a {
                            Field::Value(v) => write!(f, "{v}")?,
                            Field::Var(x) | Field::Formal(x) => f.write_str(x)?,
                        }
                    }
                    f.write_str(")")?;
                }
                Ok(())
            }
            Process::Envelope(e) => write!(f, "{e}"),
        }
    }
}

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Definition {
    pub name: String,
    pub params: Vec<String>,
    pub body: Process,
}

/// Process definitions `A(x1, ..., xn) = P`, keyed by name.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DefinitionsTable {
    defs: BTreeMap<String, Definition>,
}

impl DefinitionsTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the previous definition when the name was already taken.
    pub fn insert(&mut self, def: Definition) -> Option<Definition> {
        self.defs.insert(def.name.clone(), def)
    }

    pub fn get(&self, name: &str) -> Option<&Definition> {
        self.defs.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Definition> {
        self.defs.values()
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }
}

impl FromIterator<Definition> for DefinitionsTable {
    fn from_iter<I: IntoIterator<Item = Definition>>(iter: I) -> Self {
        let mut t = DefinitionsTable::new();
        for d in iter {
            t.insert(d);
        }
        t
    }
}

/// A component `I[K, P]` at run time.
///
/// Interface and repository never change during execution, so equality and
/// hashing look at the dynamic part (name, knowledge, process, pending
/// envelopes) and compare the static parts by identity.
#[derive(Clone)]
pub struct Component {
    pub name: String,
    pub interface: Arc<InterfaceDef>,
    pub repository: Arc<dyn Repository>,
    pub knowledge: KnowledgeState,
    pub process: Process,
    /// Pending envelopes, a sorted multiset running in parallel with `process`.
    pub envelopes: Vec<Envelope>,
}

impl Component {
    pub fn new(
        name: impl Into<String>,
        interface: Arc<InterfaceDef>,
        repository: Arc<dyn Repository>,
        knowledge: KnowledgeState,
        process: Process,
    ) -> Self {
        Component {
            name: name.into(),
            interface,
            repository,
            knowledge,
            process,
            envelopes: Vec::new(),
        }
    }

    pub fn with_state(&self, knowledge: KnowledgeState, process: Process) -> Component {
        Component {
            knowledge,
            process,
            ..self.clone()
        }
    }

    pub fn add_envelope(&mut self, env: Envelope) {
        let pos = self.envelopes.binary_search(&env).unwrap_or_else(|p| p);
        self.envelopes.insert(pos, env);
    }
}

impl PartialEq for Component {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.knowledge == other.knowledge
            && self.process == other.process
            && self.envelopes == other.envelopes
            && (Arc::ptr_eq(&self.interface, &other.interface) || self.interface == other.interface)
            && Arc::ptr_eq(&self.repository, &other.repository)
    }
}

impl Eq for Component {}

impl Hash for Component {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.name.hash(state);
        self.knowledge.hash(state);
        self.process.hash(state);
        self.envelopes.hash(state);
    }
}

impl fmt::Debug for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}, {}", self.name, self.knowledge, self.process)?;
        for e in &self.envelopes {
            write!(f, " | {e}")?;
        }
        f.write_str("]")
    }
}

/// System syntax `C | S || S`, before flattening.
#[derive(Clone, Debug)]
pub enum SystemTerm {
    Component(Component),
    Parallel(Box<SystemTerm>, Box<SystemTerm>),
}

impl SystemTerm {
    pub fn par(a: SystemTerm, b: SystemTerm) -> Self {
        SystemTerm::Parallel(Box::new(a), Box::new(b))
    }

    /// Left-to-right list of components.
    pub fn flatten(&self) -> Vec<Component> {
        let mut out = Vec::new();
        self.flatten_into(&mut out);
        out
    }

    fn flatten_into(&self, out: &mut Vec<Component>) {
        match self {
            SystemTerm::Component(c) => out.push(c.clone()),
            SystemTerm::Parallel(a, b) => {
                a.flatten_into(out);
                b.flatten_into(out);
            }
        }
    }
}

/// A system as an ordered list of components; a component's identity is its index.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct System {
    components: Vec<Arc<Component>>,
}

impl System {
    /// Panics on an empty list: every system has at least one component.
    pub fn new(components: Vec<Component>) -> Self {
        assert!(!components.is_empty(), "a system needs at least one component");
        System {
            components: components.into_iter().map(Arc::new).collect(),
        }
    }

    pub(crate) fn from_arcs(components: Vec<Arc<Component>>) -> Self {
        System { components }
    }

    pub fn flatten(term: &SystemTerm) -> Self {
        System::new(term.flatten())
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn component(&self, i: usize) -> &Component {
        &self.components[i]
    }

    pub fn components(&self) -> impl Iterator<Item = &Component> {
        self.components.iter().map(|c| c.as_ref())
    }

    pub(crate) fn replace(&mut self, i: usize, c: Arc<Component>) {
        self.components[i] = c;
    }
}

impl fmt::Debug for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                f.write_str(" || ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::TupleSpace;

    fn s(x: &str) -> Value {
        Value::str(x)
    }

    fn theta(pairs: &[(&str, Value)]) -> Substitution {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn substitute_replaces_free_variables() {
        let p = Process::prefix(
            Action::new(
                ActionKind::Put,
                Tuple(vec![Field::Value(s("go")), Field::Var("ID".into())]),
                Target::SelfTarget,
            ),
            Process::call("Q", vec![Field::Var("ID".into())]),
        );
        let q = p.substitute(&theta(&[("ID", Value::Int(3))]));
        assert_eq!(q.to_string(), "put(<\"go\", 3>)@self.Q(3)");
        assert_eq!(Process::Nil.substitute(&theta(&[("x", Value::Int(1))])), Process::Nil);
    }

    #[test]
    fn template_formals_shadow() {
        let p = Process::prefix(
            Action::new(
                ActionKind::Get,
                Tuple(vec![Field::Value(s("a")), Field::Formal("x".into())]),
                Target::SelfTarget,
            ),
            Process::call("P", vec![Field::Var("x".into())]),
        );
        assert_eq!(p.substitute(&theta(&[("x", Value::Int(5))])), p);
    }

    #[test]
    fn substitute_is_idempotent_on_predicates() {
        let pred = Predicate::compare(Expr::Attr("loc".into()), CmpOp::Eq, Expr::Var("L".into()));
        let p = Process::prefix(
            Action::new(ActionKind::Get, Tuple(vec![Field::Value(s("bike"))]), Target::pred(pred)),
            Process::Nil,
        );
        let th = theta(&[("L", Value::Int(2))]);
        let once = p.substitute(&th);
        assert_eq!(once.substitute(&th), once);
        assert!(once.free_vars().is_empty());
        assert_eq!(p.free_vars().into_iter().collect::<Vec<_>>(), vec!["L".to_string()]);
    }

    fn comp(name: &str) -> Component {
        Component::new(
            name,
            Arc::new(InterfaceDef::empty()),
            TupleSpace::shared(),
            KnowledgeState::new(),
            Process::Nil,
        )
    }

    #[test]
    fn flatten_preserves_order_and_duplicates() {
        let c = |n| SystemTerm::Component(comp(n));
        let names = |t: &SystemTerm| t.flatten().into_iter().map(|c| c.name).collect::<Vec<_>>();
        assert_eq!(names(&SystemTerm::par(c("C1"), SystemTerm::par(c("C2"), c("C3")))), ["C1", "C2", "C3"]);
        assert_eq!(names(&c("C1")), ["C1"]);
        assert_eq!(names(&SystemTerm::par(SystemTerm::par(c("C1"), c("C2")), c("C1"))), ["C1", "C2", "C1"]);
    }

    #[test]
    fn or_sugar_prints_as_disjunction() {
        let a = Predicate::compare(Expr::Attr("a".into()), CmpOp::Eq, Expr::Lit(Value::Int(1)));
        let b = Predicate::compare(Expr::Attr("b".into()), CmpOp::Lt, Expr::Lit(Value::Int(2)));
        assert_eq!(Predicate::or(a.clone(), b.clone()).to_string(), "a == 1 || b < 2");
        assert_eq!(Predicate::and(Predicate::or(a.clone(), b.clone()), a).to_string(), "(a == 1 || b < 2) && a == 1");
    }

    #[test]
    fn process_precedence() {
        let put = |t: &str| {
            Process::prefix(
                Action::new(ActionKind::Put, Tuple::values([s(t)]), Target::SelfTarget),
                Process::Nil,
            )
        };
        let p = Process::prefix(
            Action::new(ActionKind::Put, Tuple::values([s("a")]), Target::SelfTarget),
            Process::choice(put("b"), Process::par(put("c"), put("d"))),
        );
        assert_eq!(
            p.to_string(),
            "put(<\"a\">)@self.(put(<\"b\">)@self.nil + put(<\"c\">)@self.nil | put(<\"d\">)@self.nil)"
        );
    }
}
