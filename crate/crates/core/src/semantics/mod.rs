//! Operational semantics.
//!
//! * [`process`]: process-level rules, shared by both variants.
//! * [`rules`]: component and system rules applied literally to a label, for
//!   the action-oriented (act-or) and network-oriented (net-or) variants.
//! * [`engine`]: enumeration of the transitions of a system state, used by
//!   state-space construction and simulation.
//!
//! Under net-or only `put` is two-phase; `get`/`qry` use the act-or rules.

pub mod engine;
pub mod process;
pub mod rules;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::interface::Evaluation;
use crate::knowledge::{Item, Template};
use crate::rates::RateConfig;
use crate::term::{ActionKind, DefinitionsTable, Predicate, Target};

pub use engine::{Jump, StateView};
pub use process::{envelope_step, moves, process_step, Move, ProcessLabel};
pub use rules::{
    component_step_envelope, component_step_gq, component_step_net_put, component_step_put, enabled_transitions,
    system_step, system_step_net,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Semantics {
    #[default]
    ActOr,
    NetOr,
}

impl Semantics {
    /// The name recorded in manifests.
    pub fn describe(self) -> &'static str {
        match self {
            Semantics::ActOr => "act-or",
            Semantics::NetOr => "net-or(put)+act-or(gq)",
        }
    }
}

impl fmt::Display for Semantics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Semantics::ActOr => "act-or",
            Semantics::NetOr => "net-or",
        })
    }
}

impl FromStr for Semantics {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "act-or" | "actor" | "act" => Ok(Semantics::ActOr),
            "net-or" | "netor" | "net" => Ok(Semantics::NetOr),
            _ => Err(format!("unknown semantics `{s}` (expected act-or or net-or)")),
        }
    }
}

/// Everything the rules need besides the state.
#[derive(Clone, Debug)]
pub struct Context {
    pub defs: Arc<DefinitionsTable>,
    pub rates: Arc<RateConfig>,
    pub semantics: Semantics,
}

impl Context {
    pub fn new(defs: Arc<DefinitionsTable>, rates: Arc<RateConfig>, semantics: Semantics) -> Self {
        Context { defs, rates, semantics }
    }
}

/// System-level labels: inputs, outputs and synchronizations, plus net-or
/// envelope delivery.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SystemLabel {
    InputPut {
        src: Evaluation,
        item: Item,
        predicate: Arc<Predicate>,
    },
    OutputPut {
        src: Evaluation,
        item: Item,
        predicate: Arc<Predicate>,
    },
    SyncPutSelf {
        src: Evaluation,
        item: Item,
    },
    InputGq {
        src: Evaluation,
        kind: ActionKind,
        template: Template,
        item: Item,
        predicate: Arc<Predicate>,
    },
    OutputGq {
        src: Evaluation,
        kind: ActionKind,
        dest: Evaluation,
        template: Template,
        item: Item,
        predicate: Arc<Predicate>,
    },
    SyncGq {
        src: Evaluation,
        kind: ActionKind,
        template: Template,
        item: Item,
        target: Target,
    },
    Envelope {
        item: Item,
        predicate: Arc<Predicate>,
    },
}

impl SystemLabel {
    /// Labels that are transitions of the chain (as opposed to inputs awaiting a partner).
    pub fn is_transition(&self) -> bool {
        matches!(
            self,
            SystemLabel::OutputPut { .. }
                | SystemLabel::SyncPutSelf { .. }
                | SystemLabel::SyncGq { .. }
                | SystemLabel::Envelope { .. }
        )
    }
}

fn src_id(e: &Evaluation) -> &str {
    e.id().unwrap_or("?")
}

impl fmt::Display for SystemLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemLabel::InputPut { src, item, predicate } => {
                write!(f, "{}: put({item})@({predicate})", src_id(src))
            }
            SystemLabel::OutputPut { src, item, predicate } => {
                write!(f, "!{}: put({item})@({predicate})", src_id(src))
            }
            SystemLabel::SyncPutSelf { src, item } => write!(f, "<>{}: put({item})@self", src_id(src)),
            SystemLabel::InputGq {
                src,
                kind,
                template,
                item,
                predicate,
            } => write!(f, "{}: {}({template}:{item})@({predicate})", src_id(src), kind.keyword()),
            SystemLabel::OutputGq {
                src,
                kind,
                dest,
                template,
                item,
                predicate,
            } => write!(
                f,
                "!{}->{}: {}({template}:{item})@({predicate})",
                src_id(src),
                src_id(dest),
                kind.keyword()
            ),
            SystemLabel::SyncGq {
                src,
                kind,
                template,
                item,
                target,
            } => write!(f, "<>{}: {}({template}:{item})@{target}", src_id(src), kind.keyword()),
            SystemLabel::Envelope { item, predicate } => write!(f, "env({item})@({predicate})"),
        }
    }
}
