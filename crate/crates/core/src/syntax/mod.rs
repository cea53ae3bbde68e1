//! Concrete syntax for `.stocs` model files.
//!
//! ```text
//! # comment
//! attributes bikes, loc;
//! config "rates.json";
//!
//! proc Client(n) = get(<"job", ?x>)@(bikes > 0).put(<"done", x, n>)@self.Client(n);
//!
//! interface Station { bikes = field("bikes", 1); role = "station"; }
//! repository Moves : bikeshare_user { p_next = [[1.0]]; b_next = [[1.0]]; }
//!
//! component s : Station {
//!   knowledge = [<"bikes", 5>];
//!   process = nil;
//!   replicate = 2;
//! }
//! ```

pub mod check;
pub mod lexer;
pub mod parser;

use std::fmt;

use crate::interface::{Extraction, InterfaceDef};
use crate::knowledge::Item;
use crate::term::{Definition, Process};

pub use check::{check_model, Diagnostic, Severity};
pub use parser::{parse_model, parse_predicate};

/// Source position attached to declarations. Positions are metadata: they
/// never take part in equality, so printing and re-parsing yields equal files.
#[derive(Clone, Copy, Debug, Default)]
pub struct SourcePos {
    pub line: usize,
    pub column: usize,
}

impl PartialEq for SourcePos {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProcDecl {
    pub def: Definition,
    pub pos: SourcePos,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterfaceDecl {
    pub def: InterfaceDef,
    pub pos: SourcePos,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ParamValue {
    Number(f64),
    Str(String),
    List(Vec<ParamValue>),
}

impl ParamValue {
    pub fn as_matrix(&self) -> Option<Vec<Vec<f64>>> {
        match self {
            ParamValue::List(rows) => rows
                .iter()
                .map(|r| match r {
                    ParamValue::List(xs) => xs
                        .iter()
                        .map(|x| match x {
                            ParamValue::Number(n) => Some(*n),
                            _ => None,
                        })
                        .collect(),
                    _ => None,
                })
                .collect(),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Number(n) => write!(f, "{n:?}"),
            ParamValue::Str(s) => write!(f, "{s:?}"),
            ParamValue::List(xs) => {
                f.write_str("[")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RepositoryDecl {
    pub name: String,
    pub kind: String,
    pub params: Vec<(String, ParamValue)>,
    pub pos: SourcePos,
}

impl RepositoryDecl {
    pub fn param(&self, key: &str) -> Option<&ParamValue> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentDecl {
    pub name: String,
    pub interface: Option<String>,
    pub repository: Option<String>,
    pub knowledge: Vec<Item>,
    pub process: Process,
    pub replicate: usize,
    pub pos: SourcePos,
}

/// A parsed model file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelFile {
    pub attributes: Vec<String>,
    pub config: Option<String>,
    pub definitions: Vec<ProcDecl>,
    pub interfaces: Vec<InterfaceDecl>,
    pub repositories: Vec<RepositoryDecl>,
    pub components: Vec<ComponentDecl>,
}

impl ModelFile {
    pub fn interface(&self, name: &str) -> Option<&InterfaceDecl> {
        self.interfaces.iter().find(|i| i.def.name == name)
    }

    pub fn repository(&self, name: &str) -> Option<&RepositoryDecl> {
        self.repositories.iter().find(|r| r.name == name)
    }
}

impl fmt::Display for ModelFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.attributes.is_empty() {
            writeln!(f, "attributes {};", self.attributes.join(", "))?;
        }
        if let Some(c) = &self.config {
            writeln!(f, "config {c:?};")?;
        }
        writeln!(f)?;
        for d in &self.definitions {
            write!(f, "proc {}", d.def.name)?;
            if !d.def.params.is_empty() {
                write!(f, "({})", d.def.params.join(", "))?;
            }
            writeln!(f, " = {};", d.def.body)?;
        }
        for i in &self.interfaces {
            writeln!(f, "\ninterface {} {{", i.def.name)?;
            for r in &i.def.rules {
                match &r.extraction {
                    Extraction::Field { tag, index } => writeln!(f, "  {} = field({tag:?}, {index});", r.name)?,
                    Extraction::Count { tag } => writeln!(f, "  {} = count({tag:?});", r.name)?,
                    Extraction::Const(v) => writeln!(f, "  {} = {v};", r.name)?,
                }
            }
            writeln!(f, "}}")?;
        }
        for r in &self.repositories {
            write!(f, "\nrepository {} : {}", r.name, r.kind)?;
            if r.params.is_empty() {
                writeln!(f, ";")?;
            } else {
                writeln!(f, " {{")?;
                for (k, v) in &r.params {
                    writeln!(f, "  {k} = {v};")?;
                }
                writeln!(f, "}}")?;
            }
        }
        for c in &self.components {
            write!(f, "\ncomponent {}", c.name)?;
            if let Some(i) = &c.interface {
                write!(f, " : {i}")?;
            }
            writeln!(f, " {{")?;
            if let Some(r) = &c.repository {
                writeln!(f, "  repository = {r};")?;
            }
            let items: Vec<String> = c.knowledge.iter().map(Item::to_string).collect();
            writeln!(f, "  knowledge = [{}];", items.join(", "))?;
            writeln!(f, "  process = {};", c.process)?;
            if c.replicate != 1 {
                writeln!(f, "  replicate = {};", c.replicate)?;
            }
            writeln!(f, "}}")?;
        }
        Ok(())
    }
}
