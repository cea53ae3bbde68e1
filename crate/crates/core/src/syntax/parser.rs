use std::collections::BTreeSet;

use super::lexer::{Cursor, Tok};
use super::{ComponentDecl, InterfaceDecl, ModelFile, ParamValue, ProcDecl, RepositoryDecl, SourcePos};
use crate::error::ParseError;
use crate::interface::{AttributeRule, Extraction, InterfaceDef};
use crate::knowledge::Item;
use crate::term::{Action, ActionKind, ArithOp, CmpOp, Definition, Expr, Field, Predicate, Process, Target, Tuple};
use crate::value::Value;

const RESERVED: &[&str] = &["put", "get", "qry", "self", "nil", "tt", "proc", "component"];

/// Parses a complete `.stocs` model file.
///
/// Besides syntax errors this rejects duplicate declarations and interface
/// rules that define undeclared attributes.
pub fn parse_model(text: &str) -> Result<ModelFile, ParseError> {
    let mut p = Parser { cur: Cursor::new(text)? };
    let mut m = ModelFile::default();
    let mut rule_positions = Vec::new();
    while !p.cur.at_eof() {
        let pos = p.pos();
        match p.cur.peek().clone() {
            Tok::Ident(kw) if kw == "attributes" => {
                p.cur.bump();
                loop {
                    let name = p.cur.expect_ident()?;
                    if m.attributes.contains(&name) {
                        return Err(p.error_at(pos, format!("attribute `{name}` declared twice")));
                    }
                    m.attributes.push(name);
                    if !p.cur.eat_sym(",") {
                        break;
                    }
                }
                p.cur.expect_sym(";")?;
            }
            Tok::Ident(kw) if kw == "config" => {
                p.cur.bump();
                match p.cur.bump() {
                    Tok::Str(s) => m.config = Some(s),
                    _ => return Err(p.error_at(pos, "expected a quoted path after `config`")),
                }
                p.cur.expect_sym(";")?;
            }
            Tok::Ident(kw) if kw == "proc" => {
                p.cur.bump();
                let name_pos = p.pos();
                let name = p.name()?;
                let mut params = Vec::new();
                if p.cur.eat_sym("(") && !p.cur.eat_sym(")") {
                    loop {
                        params.push(p.name()?);
                        if !p.cur.eat_sym(",") {
                            break;
                        }
                    }
                    p.cur.expect_sym(")")?;
                }
                p.cur.expect_sym("=")?;
                let body = p.process(&params)?;
                p.cur.eat_sym(";");
                if m.definitions.iter().any(|d| d.def.name == name) {
                    return Err(p.error_at(name_pos, format!("process `{name}` is defined twice")));
                }
                m.definitions.push(ProcDecl {
                    def: Definition { name, params, body },
                    pos: name_pos,
                });
            }
            Tok::Ident(kw) if kw == "interface" => {
                p.cur.bump();
                let name = p.name()?;
                p.cur.expect_sym("{")?;
                let mut rules = Vec::new();
                while !p.cur.eat_sym("}") {
                    let rpos = p.pos();
                    let attr = p.cur.expect_ident()?;
                    p.cur.expect_sym("=")?;
                    let extraction = p.extraction()?;
                    p.cur.expect_sym(";")?;
                    rule_positions.push((attr.clone(), rpos));
                    rules.push(AttributeRule { name: attr, extraction });
                }
                if m.interfaces.iter().any(|i| i.def.name == name) {
                    return Err(p.error_at(pos, format!("interface `{name}` is defined twice")));
                }
                m.interfaces.push(InterfaceDecl {
                    def: InterfaceDef::new(name, rules),
                    pos,
                });
            }
            Tok::Ident(kw) if kw == "repository" => {
                p.cur.bump();
                let name = p.name()?;
                p.cur.expect_sym(":")?;
                let kind = p.cur.expect_ident()?;
                let mut params = Vec::new();
                if p.cur.eat_sym("{") {
                    while !p.cur.eat_sym("}") {
                        let key = p.cur.expect_ident()?;
                        p.cur.expect_sym("=")?;
                        params.push((key, p.param_value()?));
                        p.cur.expect_sym(";")?;
                    }
                } else {
                    p.cur.expect_sym(";")?;
                }
                if m.repositories.iter().any(|r| r.name == name) {
                    return Err(p.error_at(pos, format!("repository `{name}` is defined twice")));
                }
                m.repositories.push(RepositoryDecl {
                    name,
                    kind,
                    params,
                    pos,
                });
            }
            Tok::Ident(kw) if kw == "component" => {
                p.cur.bump();
                m.components.push(p.component(pos)?);
            }
            _ => {
                return Err(p
                    .cur
                    .unexpected(&["attributes", "config", "proc", "interface", "repository", "component"]))
            }
        }
    }
    for (attr, pos) in rule_positions {
        if attr != "id" && !m.attributes.contains(&attr) {
            return Err(p.error_at(pos, format!("interface attribute `{attr}` is not declared")));
        }
    }
    Ok(m)
}

/// Parses a standalone predicate (attribute names only, no variables).
pub fn parse_predicate(text: &str) -> Result<Predicate, ParseError> {
    let mut p = Parser { cur: Cursor::new(text)? };
    let pred = p.predicate(&[])?;
    if !p.cur.at_eof() {
        return Err(p.cur.unexpected(&["end of input"]));
    }
    Ok(pred)
}

struct Parser {
    cur: Cursor,
}

impl Parser {
    fn pos(&self) -> SourcePos {
        let t = self.cur.token();
        SourcePos {
            line: t.line,
            column: t.column,
        }
    }

    fn error_at(&self, pos: SourcePos, message: impl Into<String>) -> ParseError {
        ParseError {
            line: pos.line,
            column: pos.column,
            message: message.into(),
            expected: vec![],
        }
    }

    /// An identifier that is not a reserved word.
    fn name(&mut self) -> Result<String, ParseError> {
        if let Tok::Ident(s) = self.cur.peek() {
            if RESERVED.contains(&s.as_str()) {
                return Err(self.cur.error(format!("`{s}` is a reserved word"), &["identifier"]));
            }
        }
        self.cur.expect_ident()
    }

    fn component(&mut self, pos: SourcePos) -> Result<ComponentDecl, ParseError> {
        let name = self.name()?;
        let interface = if self.cur.eat_sym(":") {
            Some(self.cur.expect_ident()?)
        } else {
            None
        };
        self.cur.expect_sym("{")?;
        let mut decl = ComponentDecl {
            name,
            interface,
            repository: None,
            knowledge: Vec::new(),
            process: Process::Nil,
            replicate: 1,
            pos,
        };
        let mut seen = BTreeSet::new();
        while !self.cur.eat_sym("}") {
            let fpos = self.pos();
            let key = self.cur.expect_ident()?;
            if !seen.insert(key.clone()) {
                return Err(self.error_at(fpos, format!("`{key}` given twice")));
            }
            self.cur.expect_sym("=")?;
            match key.as_str() {
                "repository" => decl.repository = Some(self.cur.expect_ident()?),
                "knowledge" => {
                    self.cur.expect_sym("[")?;
                    if !self.cur.eat_sym("]") {
                        loop {
                            decl.knowledge.push(self.ground_tuple()?);
                            if !self.cur.eat_sym(",") {
                                break;
                            }
                        }
                        self.cur.expect_sym("]")?;
                    }
                }
                "process" => decl.process = self.process(&[])?,
                "replicate" => match self.cur.bump() {
                    Tok::Int(n) if n >= 1 => decl.replicate = n as usize,
                    _ => return Err(self.error_at(fpos, "replicate expects a positive integer")),
                },
                _ => return Err(self.error_at(fpos, format!("unknown component field `{key}`"))),
            }
            self.cur.expect_sym(";")?;
        }
        Ok(decl)
    }

    fn extraction(&mut self) -> Result<Extraction, ParseError> {
        if self.cur.at_ident("field") && self.cur.peek_at(1) == &Tok::Sym("(") {
            self.cur.bump();
            self.cur.bump();
            let tag = self.string()?;
            self.cur.expect_sym(",")?;
            let index = match self.cur.bump() {
                Tok::Int(n) if n >= 0 => n as usize,
                _ => return Err(self.cur.error("field index must be a non-negative integer", &["integer"])),
            };
            self.cur.expect_sym(")")?;
            return Ok(Extraction::Field { tag, index });
        }
        if self.cur.at_ident("count") && self.cur.peek_at(1) == &Tok::Sym("(") {
            self.cur.bump();
            self.cur.bump();
            let tag = self.string()?;
            self.cur.expect_sym(")")?;
            return Ok(Extraction::Count { tag });
        }
        Ok(Extraction::Const(self.literal()?))
    }

    fn string(&mut self) -> Result<String, ParseError> {
        match self.cur.peek().clone() {
            Tok::Str(s) => {
                self.cur.bump();
                Ok(s)
            }
            _ => Err(self.cur.unexpected(&["string"])),
        }
    }

    fn param_value(&mut self) -> Result<ParamValue, ParseError> {
        if self.cur.eat_sym("[") {
            let mut xs = Vec::new();
            if !self.cur.eat_sym("]") {
                loop {
                    xs.push(self.param_value()?);
                    if !self.cur.eat_sym(",") {
                        break;
                    }
                }
                self.cur.expect_sym("]")?;
            }
            return Ok(ParamValue::List(xs));
        }
        Ok(match self.literal()? {
            Value::Str(s) => ParamValue::Str(s),
            v => ParamValue::Number(v.as_f64().expect("numeric literal")),
        })
    }

    fn is_literal_start(&self) -> bool {
        matches!(self.cur.peek(), Tok::Int(_) | Tok::Real(_) | Tok::Str(_))
            || (self.cur.at_sym("-") && matches!(self.cur.peek_at(1), Tok::Int(_) | Tok::Real(_)))
    }

    fn literal(&mut self) -> Result<Value, ParseError> {
        let neg = self.cur.eat_sym("-");
        let v = match self.cur.peek().clone() {
            Tok::Int(i) => Value::Int(if neg { -i } else { i }),
            Tok::Real(r) => Value::Real(if neg { -r } else { r }),
            Tok::Str(s) if !neg => Value::Str(s),
            _ => return Err(self.cur.unexpected(&["literal"])),
        };
        self.cur.bump();
        Ok(v)
    }

    fn tuple_open(&mut self) -> Result<(), ParseError> {
        self.cur.expect_sym("<")
    }

    fn ground_tuple(&mut self) -> Result<Item, ParseError> {
        self.tuple_open()?;
        let mut fields = Vec::new();
        if !self.cur.eat_sym(">") {
            loop {
                fields.push(self.literal()?);
                if !self.cur.eat_sym(",") {
                    break;
                }
            }
            self.cur.expect_sym(">")?;
        }
        Ok(Item(fields))
    }

    fn tuple(&mut self, allow_formals: bool) -> Result<Tuple, ParseError> {
        self.tuple_open()?;
        let mut fields = Vec::new();
        let mut formals = BTreeSet::new();
        if !self.cur.eat_sym(">") {
            loop {
                if self.cur.at_sym("?") {
                    if !allow_formals {
                        return Err(self.cur.error("formal fields are only allowed in get/qry templates", &[]));
                    }
                    self.cur.bump();
                    let x = self.name()?;
                    if !formals.insert(x.clone()) {
                        return Err(self.cur.error(format!("formal `?{x}` repeated in template"), &[]));
                    }
                    fields.push(Field::Formal(x));
                } else if self.is_literal_start() {
                    fields.push(Field::Value(self.literal()?));
                } else if matches!(self.cur.peek(), Tok::Ident(_)) {
                    fields.push(Field::Var(self.name()?));
                } else {
                    return Err(self.cur.unexpected(&["literal", "variable", "?formal"]));
                }
                if !self.cur.eat_sym(",") {
                    break;
                }
            }
            self.cur.expect_sym(">")?;
        }
        Ok(Tuple(fields))
    }

    /// `(<...>)`, `<...>`, or a single bare field standing for a one-field tuple.
    fn payload(&mut self, allow_formals: bool) -> Result<Tuple, ParseError> {
        if self.cur.at_sym("(") && self.cur.peek_at(1) == &Tok::Sym("<") {
            self.cur.bump();
            let t = self.tuple(allow_formals)?;
            self.cur.expect_sym(")")?;
            return Ok(t);
        }
        if self.cur.at_sym("<") {
            return self.tuple(allow_formals);
        }
        let field = if self.is_literal_start() {
            Field::Value(self.literal()?)
        } else if allow_formals && self.cur.eat_sym("?") {
            Field::Formal(self.name()?)
        } else if matches!(self.cur.peek(), Tok::Ident(_)) {
            Field::Var(self.name()?)
        } else {
            return Err(self.cur.unexpected(&["(", "<", "literal", "variable"]));
        };
        Ok(Tuple(vec![field]))
    }

    fn process(&mut self, scope: &[String]) -> Result<Process, ParseError> {
        let mut p = self.parallel(scope)?;
        while self.cur.eat_sym("+") {
            let q = self.parallel(scope)?;
            p = Process::choice(p, q);
        }
        Ok(p)
    }

    fn parallel(&mut self, scope: &[String]) -> Result<Process, ParseError> {
        let mut p = self.sequence(scope)?;
        while self.cur.eat_sym("|") {
            let q = self.sequence(scope)?;
            p = Process::par(p, q);
        }
        Ok(p)
    }

    fn sequence(&mut self, scope: &[String]) -> Result<Process, ParseError> {
        match self.cur.peek().clone() {
            Tok::Ident(kw) if kw == "nil" => {
                self.cur.bump();
                Ok(Process::Nil)
            }
            Tok::Ident(kw) if kw == "put" || kw == "get" || kw == "qry" => {
                let kind = match kw.as_str() {
                    "put" => ActionKind::Put,
                    "get" => ActionKind::Get,
                    _ => ActionKind::Qry,
                };
                self.cur.bump();
                let payload = self.payload(kind != ActionKind::Put)?;
                self.cur.expect_sym("@")?;
                let target = self.target(scope)?;
                self.cur.expect_sym(".")?;
                let action = Action::new(kind, payload, target);
                let mut inner = scope.to_vec();
                inner.extend(action.binders().map(str::to_string));
                let cont = self.sequence(&inner)?;
                Ok(Process::prefix(action, cont))
            }
            Tok::Sym("(") => {
                self.cur.bump();
                let p = self.process(scope)?;
                self.cur.expect_sym(")")?;
                Ok(p)
            }
            Tok::Ident(_) => {
                let name = self.name()?;
                let mut args = Vec::new();
                if self.cur.eat_sym("(") && !self.cur.eat_sym(")") {
                    loop {
                        if self.is_literal_start() {
                            args.push(Field::Value(self.literal()?));
                        } else {
                            args.push(Field::Var(self.name()?));
                        }
                        if !self.cur.eat_sym(",") {
                            break;
                        }
                    }
                    self.cur.expect_sym(")")?;
                }
                Ok(Process::Call(name, args))
            }
            _ => Err(self.cur.unexpected(&["nil", "put", "get", "qry", "(", "process name"])),
        }
    }

    fn target(&mut self, scope: &[String]) -> Result<Target, ParseError> {
        if self.cur.eat_ident("self") {
            return Ok(Target::SelfTarget);
        }
        if self.cur.at_sym("(") {
            self.cur.bump();
            let p = self.predicate(scope)?;
            self.cur.expect_sym(")")?;
            return Ok(Target::pred(p));
        }
        Err(self.cur.unexpected(&["self", "(predicate)"]))
    }

    fn predicate(&mut self, scope: &[String]) -> Result<Predicate, ParseError> {
        let mut p = self.conjunction(scope)?;
        while self.cur.eat_sym("||") {
            let q = self.conjunction(scope)?;
            p = Predicate::or(p, q);
        }
        Ok(p)
    }

    fn conjunction(&mut self, scope: &[String]) -> Result<Predicate, ParseError> {
        let mut p = self.unary(scope)?;
        while self.cur.eat_sym("&&") {
            let q = self.unary(scope)?;
            p = Predicate::and(p, q);
        }
        Ok(p)
    }

    fn unary(&mut self, scope: &[String]) -> Result<Predicate, ParseError> {
        if self.cur.eat_sym("!") {
            return Ok(Predicate::not(self.unary(scope)?));
        }
        if self.cur.eat_ident("tt") {
            return Ok(Predicate::True);
        }
        if self.cur.at_sym("(") {
            // Either a parenthesised predicate or a parenthesised arithmetic operand.
            let save = self.cur.mark();
            self.cur.bump();
            if let Ok(p) = self.predicate(scope) {
                if self.cur.eat_sym(")") && !self.at_cmp_or_arith() {
                    return Ok(p);
                }
            }
            self.cur.reset(save);
        }
        let l = self.expr(scope)?;
        let op = match self.cur.peek() {
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym(">") => CmpOp::Gt,
            Tok::Sym(">=") => CmpOp::Ge,
            Tok::Sym("==") | Tok::Sym("=") => CmpOp::Eq,
            Tok::Sym("!=") => CmpOp::Ne,
            _ => return Err(self.cur.unexpected(&["<", "<=", ">", ">=", "==", "!="])),
        };
        self.cur.bump();
        let r = self.expr(scope)?;
        Ok(Predicate::Compare(l, op, r))
    }

    fn at_cmp_or_arith(&self) -> bool {
        matches!(
            self.cur.peek(),
            Tok::Sym("<" | "<=" | ">" | ">=" | "==" | "=" | "!=" | "+" | "-" | "*" | "/" | "%")
        )
    }

    fn expr(&mut self, scope: &[String]) -> Result<Expr, ParseError> {
        let mut e = self.term(scope)?;
        loop {
            let op = if self.cur.at_sym("+") {
                ArithOp::Add
            } else if self.cur.at_sym("-") {
                ArithOp::Sub
            } else {
                break;
            };
            self.cur.bump();
            let r = self.term(scope)?;
            e = Expr::bin(op, e, r);
        }
        Ok(e)
    }

    fn term(&mut self, scope: &[String]) -> Result<Expr, ParseError> {
        let mut e = self.atom(scope)?;
        loop {
            let op = match self.cur.peek() {
                Tok::Sym("*") => ArithOp::Mul,
                Tok::Sym("/") => ArithOp::Div,
                Tok::Sym("%") => ArithOp::Mod,
                _ => break,
            };
            self.cur.bump();
            let r = self.atom(scope)?;
            e = Expr::bin(op, e, r);
        }
        Ok(e)
    }

    fn atom(&mut self, scope: &[String]) -> Result<Expr, ParseError> {
        if self.is_literal_start() {
            return Ok(Expr::Lit(self.literal()?));
        }
        if self.cur.eat_sym("(") {
            let e = self.expr(scope)?;
            self.cur.expect_sym(")")?;
            return Ok(e);
        }
        if let Tok::Ident(_) = self.cur.peek() {
            let name = self.name()?;
            return Ok(if scope.contains(&name) {
                Expr::Var(name)
            } else {
                Expr::Attr(name)
            });
        }
        Err(self.cur.unexpected(&["literal", "attribute", "variable", "("]))
    }
}
