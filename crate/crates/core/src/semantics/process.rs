//! Process-level transitions `P --alpha-->_e P`.

use std::fmt;
use std::sync::Arc;

use crate::error::EvalError;
use crate::futs::ContinuationFunction;
use crate::interface::Evaluation;
use crate::knowledge::{match_template, Item, Substitution, Template};
use crate::rates::{ActionDescriptor, DescriptorKind, DescriptorTarget, RateConfig};
use crate::term::{Action, ActionKind, DefinitionsTable, Envelope, Field, Predicate, Process, Target};

const MAX_UNFOLD: usize = 256;

/// Output labels a process can exhibit.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ProcessLabel {
    OutPut {
        item: Item,
        target: Target,
    },
    OutGq {
        kind: ActionKind,
        dest: Evaluation,
        template: Template,
        item: Item,
        target: Target,
    },
    /// Delivery of a pending envelope.
    Env {
        item: Item,
        predicate: Arc<Predicate>,
    },
}

impl fmt::Display for ProcessLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcessLabel::OutPut { item, target } => write!(f, "put({item})@{target}"),
            ProcessLabel::OutGq {
                kind,
                dest,
                template,
                item,
                target,
            } => write!(f, "{dest}: {}({template}:{item})@{target}", kind.keyword()),
            ProcessLabel::Env { item, predicate } => write!(f, "env({item})@({predicate})"),
        }
    }
}

pub(crate) fn descriptor_target(t: &Target) -> DescriptorTarget {
    match t {
        Target::SelfTarget => DescriptorTarget::SelfTarget,
        Target::Pred(p) => DescriptorTarget::Pred(p.clone()),
    }
}

pub(crate) fn put_descriptor(item: &Item, target: &Target) -> ActionDescriptor {
    ActionDescriptor {
        kind: DescriptorKind::Put,
        item: item.clone(),
        template: None,
        target: descriptor_target(target),
    }
}

pub(crate) fn gq_descriptor(kind: ActionKind, template: &Template, item: &Item, target: &Target) -> ActionDescriptor {
    ActionDescriptor {
        kind: if kind == ActionKind::Get {
            DescriptorKind::Get
        } else {
            DescriptorKind::Qry
        },
        item: item.clone(),
        template: Some(template.clone()),
        target: descriptor_target(target),
    }
}

pub(crate) fn envelope_descriptor(item: &Item, predicate: &Arc<Predicate>) -> ActionDescriptor {
    ActionDescriptor {
        kind: DescriptorKind::Envelope,
        item: item.clone(),
        template: None,
        target: DescriptorTarget::Pred(predicate.clone()),
    }
}

/// Instantiates `A(v1..vn)` as the definition body with arguments substituted.
pub fn unfold(name: &str, args: &[Field], defs: &DefinitionsTable) -> Result<Process, EvalError> {
    let def = defs
        .get(name)
        .ok_or_else(|| EvalError::UndefinedProcess(name.to_string()))?;
    if def.params.len() != args.len() {
        return Err(EvalError::Arity {
            name: name.to_string(),
            expected: def.params.len(),
            got: args.len(),
        });
    }
    let mut theta = Substitution::new();
    for (x, a) in def.params.iter().zip(args) {
        match a {
            Field::Value(v) => {
                theta.insert(x.clone(), v.clone());
            }
            _ => return Err(EvalError::NotGround(format!("{name} argument {x}"))),
        }
    }
    Ok(def.body.substitute(&theta))
}

/// Table of process rules, applied literally: (nil), (put), (put-blk), (gq),
/// (gq-blk1), (gq-blk2), (cho), (def), (par), (env), (env-blk).
///
/// Total: returns `[ ]` whenever no rule yields mass.
pub fn process_step(
    p: &Process,
    alpha: &ProcessLabel,
    e: &Evaluation,
    defs: &DefinitionsTable,
    rates: &RateConfig,
) -> Result<ContinuationFunction<Process>, EvalError> {
    step_depth(p, alpha, e, defs, rates, 0)
}

/// Rules (env) and (env-blk) on their own.
pub fn envelope_step(env: &Envelope, alpha: &ProcessLabel) -> ContinuationFunction<Process> {
    match alpha {
        ProcessLabel::Env { item, predicate } if *item == env.item && *predicate == env.predicate => {
            ContinuationFunction::point(Process::Nil, env.rate).unwrap_or_default()
        }
        _ => ContinuationFunction::zero(),
    }
}

fn step_depth(
    p: &Process,
    alpha: &ProcessLabel,
    e: &Evaluation,
    defs: &DefinitionsTable,
    rates: &RateConfig,
    depth: usize,
) -> Result<ContinuationFunction<Process>, EvalError> {
    Ok(match p {
        Process::Nil => ContinuationFunction::zero(),
        Process::Envelope(env) => envelope_step(env, alpha),
        Process::Prefix(a, cont) => match (a.kind, alpha) {
            (ActionKind::Put, ProcessLabel::OutPut { item, target }) => {
                if a.target == *target && a.payload.to_item().as_ref() == Some(item) {
                    let lambda = rates.rate(e, &put_descriptor(item, target), None)?;
                    ContinuationFunction::point((**cont).clone(), lambda)?
                } else {
                    ContinuationFunction::zero()
                }
            }
            (
                ActionKind::Get | ActionKind::Qry,
                ProcessLabel::OutGq {
                    kind,
                    dest,
                    template,
                    item,
                    target,
                },
            ) if *kind == a.kind && a.target == *target && a.payload.to_template().as_ref() == Some(template) => {
                match match_template(template, item) {
                    Some(theta) => {
                        let lambda = rates.rate(e, &gq_descriptor(*kind, template, item, target), Some(dest))?;
                        ContinuationFunction::point(cont.substitute(&theta), lambda)?
                    }
                    None => ContinuationFunction::zero(),
                }
            }
            _ => ContinuationFunction::zero(),
        },
        Process::Choice(l, r) => {
            let mut out = step_depth(l, alpha, e, defs, rates, depth)?;
            out.add_assign(&step_depth(r, alpha, e, defs, rates, depth)?);
            out
        }
        Process::Parallel(l, r) => {
            let fl = step_depth(l, alpha, e, defs, rates, depth)?;
            let fr = step_depth(r, alpha, e, defs, rates, depth)?;
            let mut out = fl.pair_with(&ContinuationFunction::char((**r).clone()), |a, b| {
                Process::par(a.clone(), b.clone())
            });
            out.add_assign(
                &ContinuationFunction::char((**l).clone()).pair_with(&fr, |a, b| Process::par(a.clone(), b.clone())),
            );
            out
        }
        Process::Call(name, args) => {
            if depth >= MAX_UNFOLD {
                return Err(EvalError::UndefinedProcess(format!("{name} (unguarded recursion)")));
            }
            step_depth(&unfold(name, args, defs)?, alpha, e, defs, rates, depth + 1)?
        }
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Frame {
    /// We are the left operand; the right sibling is kept.
    Left(Process),
    Right(Process),
}

/// An action prefix reachable at the top of a process, together with how to
/// rebuild the whole process once the action has fired.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Move {
    pub action: Action,
    residual: Process,
    frames: Vec<Frame>,
}

impl Move {
    /// The process after the action, with the template bindings applied.
    pub fn continuation(&self, theta: &Substitution) -> Process {
        let mut p = self.residual.substitute(theta);
        for f in self.frames.iter().rev() {
            p = match f {
                Frame::Left(q) => Process::par(p, q.clone()),
                Frame::Right(q) => Process::par(q.clone(), p),
            };
        }
        p
    }

    /// The ground item of a put.
    pub fn item(&self) -> Result<Item, EvalError> {
        self.action
            .payload
            .to_item()
            .ok_or_else(|| EvalError::NotGround(self.action.to_string()))
    }

    /// The template of a get or qry.
    pub fn template(&self) -> Result<Template, EvalError> {
        self.action
            .payload
            .to_template()
            .ok_or_else(|| EvalError::NotGround(self.action.to_string()))
    }
}

/// Every action the process can currently perform, one entry per syntactic
/// occurrence. Summing the corresponding rule applications over all moves
/// gives the same continuation as [`process_step`].
pub fn moves(p: &Process, defs: &DefinitionsTable) -> Result<Vec<Move>, EvalError> {
    let mut out = Vec::new();
    let mut frames = Vec::new();
    collect_moves(p, defs, &mut frames, &mut out, 0)?;
    Ok(out)
}

fn collect_moves(
    p: &Process,
    defs: &DefinitionsTable,
    frames: &mut Vec<Frame>,
    out: &mut Vec<Move>,
    depth: usize,
) -> Result<(), EvalError> {
    match p {
        Process::Nil | Process::Envelope(_) => {}
        Process::Prefix(a, cont) => {
            if let Target::Pred(pred) = &a.target {
                if !pred.names().0.is_empty() {
                    return Err(EvalError::NotGround(a.to_string()));
                }
            }
            out.push(Move {
                action: a.clone(),
                residual: (**cont).clone(),
                frames: frames.clone(),
            });
        }
        Process::Choice(l, r) => {
            // choice discards the other branch: the context is unchanged
            collect_moves(l, defs, frames, out, depth)?;
            collect_moves(r, defs, frames, out, depth)?;
        }
        Process::Parallel(l, r) => {
            frames.push(Frame::Left((**r).clone()));
            collect_moves(l, defs, frames, out, depth)?;
            frames.pop();
            frames.push(Frame::Right((**l).clone()));
            collect_moves(r, defs, frames, out, depth)?;
            frames.pop();
        }
        Process::Call(name, args) => {
            if depth >= MAX_UNFOLD {
                return Err(EvalError::UndefinedProcess(format!("{name} (unguarded recursion)")));
            }
            collect_moves(&unfold(name, args, defs)?, defs, frames, out, depth + 1)?;
        }
    }
    Ok(())
}

/// The head of a component's process when it is a single prefix (after unfolding).
pub fn head_action(p: &Process, defs: &DefinitionsTable) -> Option<Action> {
    match moves(p, defs) {
        Ok(ms) if ms.len() == 1 => Some(ms[0].action.clone()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::{CmpOp, Definition, Expr, Tuple};
    use crate::value::Value;

    fn s(x: &str) -> Value {
        Value::str(x)
    }

    fn rates(json: &str) -> RateConfig {
        RateConfig::from_json(json).unwrap()
    }

    fn put_self(tag: &str, cont: Process) -> Process {
        Process::prefix(
            Action::new(ActionKind::Put, Tuple::values([s(tag)]), Target::SelfTarget),
            cont,
        )
    }

    fn out_put(tag: &str) -> ProcessLabel {
        ProcessLabel::OutPut {
            item: Item(vec![s(tag)]),
            target: Target::SelfTarget,
        }
    }

    fn bikes_pred() -> Target {
        Target::pred(Predicate::compare(
            Expr::Attr("bikes".into()),
            CmpOp::Gt,
            Expr::Lit(Value::Int(0)),
        ))
    }

    fn defs() -> DefinitionsTable {
        DefinitionsTable::new()
    }

    #[test]
    fn nil_has_no_transitions() {
        let r = RateConfig::default();
        let e = Evaluation::default();
        for alpha in [
            out_put("b"),
            ProcessLabel::Env {
                item: Item(vec![]),
                predicate: Arc::new(Predicate::True),
            },
        ] {
            assert!(process_step(&Process::Nil, &alpha, &e, &defs(), &r).unwrap().is_zero());
        }
    }

    #[test]
    fn put_and_put_blk() {
        let r = rates(r#"{"rates": [{"kind": "put", "target": "self", "rate": 2.5}]}"#);
        let e = Evaluation::default();
        let p = put_self("b", Process::call("P", vec![]));
        let f = process_step(&p, &out_put("b"), &e, &defs(), &r).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f.get(&Process::call("P", vec![])), 2.5);
        // different item or different target: blocked
        assert!(process_step(&p, &out_put("p"), &e, &defs(), &r).unwrap().is_zero());
        let other_target = ProcessLabel::OutPut {
            item: Item(vec![s("b")]),
            target: bikes_pred(),
        };
        assert!(process_step(&p, &other_target, &e, &defs(), &r).unwrap().is_zero());
    }

    fn get_a(cont: Process) -> Process {
        Process::prefix(
            Action::new(
                ActionKind::Get,
                Tuple(vec![Field::Value(s("a")), Field::Formal("x".into())]),
                bikes_pred(),
            ),
            cont,
        )
    }

    fn out_gq(kind: ActionKind, item: Item) -> ProcessLabel {
        ProcessLabel::OutGq {
            kind,
            dest: Evaluation([("bikes".to_string(), Value::Int(4))].into_iter().collect()),
            template: Template(vec![
                crate::knowledge::TemplateField::Value(s("a")),
                crate::knowledge::TemplateField::Formal("x".into()),
            ]),
            item,
            target: bikes_pred(),
        }
    }

    #[test]
    fn gq_binds_and_uses_destination_rate() {
        let r = rates(r#"{"rates": [{"kind": "get", "rate": "0.5 * dst.bikes"}]}"#);
        let cont = put_self("x", Process::Nil);
        let cont = Process::prefix(
            Action::new(ActionKind::Put, Tuple(vec![Field::Var("x".into())]), Target::SelfTarget),
            cont,
        );
        let p = get_a(cont);
        let f = process_step(
            &p,
            &out_gq(ActionKind::Get, Item(vec![s("a"), Value::Int(7)])),
            &Evaluation::default(),
            &defs(),
            &r,
        )
        .unwrap();
        let expected = Process::prefix(
            Action::new(ActionKind::Put, Tuple::values([Value::Int(7)]), Target::SelfTarget),
            put_self("x", Process::Nil),
        );
        assert_eq!(f.len(), 1);
        assert_eq!(f.get(&expected), 2.0);
    }

    #[test]
    fn gq_blocking_rules() {
        let r = RateConfig::default();
        let p = get_a(Process::Nil);
        let e = Evaluation::default();
        // gq-blk1: item does not match the template
        let f = process_step(&p, &out_gq(ActionKind::Get, Item(vec![s("b"), Value::Int(7)])), &e, &defs(), &r);
        assert!(f.unwrap().is_zero());
        // gq-blk2: a different label
        assert!(process_step(&p, &out_gq(ActionKind::Qry, Item(vec![s("a"), Value::Int(7)])), &e, &defs(), &r)
            .unwrap()
            .is_zero());
        assert!(process_step(&p, &out_put("a"), &e, &defs(), &r).unwrap().is_zero());
    }

    #[test]
    fn choice_sums() {
        let r = rates(r#"{"default_rate": 3.0}"#);
        let p = Process::choice(
            put_self("t", Process::call("P", vec![])),
            put_self("t", Process::call("Q", vec![])),
        );
        let f = process_step(&p, &out_put("t"), &Evaluation::default(), &defs(), &r).unwrap();
        assert_eq!(f.get(&Process::call("P", vec![])), 3.0);
        assert_eq!(f.get(&Process::call("Q", vec![])), 3.0);
        let same = Process::choice(put_self("t", Process::Nil), put_self("t", Process::Nil));
        let f = process_step(&same, &out_put("t"), &Evaluation::default(), &defs(), &r).unwrap();
        assert_eq!(f.get(&Process::Nil), 6.0);
    }

    #[test]
    fn par_interleaves() {
        let r = RateConfig::default();
        let p = put_self("t", Process::call("P", vec![]));
        let q = put_self("t", Process::call("Q", vec![]));
        let f = process_step(&Process::par(p.clone(), q.clone()), &out_put("t"), &Evaluation::default(), &defs(), &r)
            .unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(f.get(&Process::par(Process::call("P", vec![]), q.clone())), 1.0);
        assert_eq!(f.get(&Process::par(p, Process::call("Q", vec![]))), 1.0);
    }

    #[test]
    fn def_unfolds_with_arguments() {
        let r = RateConfig::default();
        let defs: DefinitionsTable = [Definition {
            name: "A".into(),
            params: vec!["n".into()],
            body: Process::prefix(
                Action::new(ActionKind::Put, Tuple(vec![Field::Var("n".into())]), Target::SelfTarget),
                Process::call("A", vec![Field::Var("n".into())]),
            ),
        }]
        .into_iter()
        .collect();
        let p = Process::call("A", vec![Field::Value(Value::Int(3))]);
        let alpha = ProcessLabel::OutPut {
            item: Item(vec![Value::Int(3)]),
            target: Target::SelfTarget,
        };
        let f = process_step(&p, &alpha, &Evaluation::default(), &defs, &r).unwrap();
        assert_eq!(f.get(&p), 1.0);
        let missing = Process::call("B", vec![]);
        assert!(process_step(&missing, &alpha, &Evaluation::default(), &defs, &r).is_err());
    }

    #[test]
    fn envelope_rules() {
        let env = Envelope {
            item: Item(vec![s("t")]),
            predicate: Arc::new(Predicate::True),
            rate: 2.0,
        };
        let own = ProcessLabel::Env {
            item: env.item.clone(),
            predicate: env.predicate.clone(),
        };
        let f = envelope_step(&env, &own);
        assert_eq!(f.len(), 1);
        assert_eq!(f.get(&Process::Nil), 2.0);
        assert!(envelope_step(&env, &out_put("t")).is_zero());
        // P | env offers both
        let r = RateConfig::default();
        let p = Process::par(put_self("t", Process::Nil), Process::Envelope(env.clone()));
        let e = Evaluation::default();
        assert_eq!(
            process_step(&p, &own, &e, &DefinitionsTable::new(), &r).unwrap().get(&Process::par(
                put_self("t", Process::Nil),
                Process::Nil
            )),
            2.0
        );
        assert_eq!(
            process_step(&p, &out_put("t"), &e, &DefinitionsTable::new(), &r)
                .unwrap()
                .get(&Process::par(Process::Nil, Process::Envelope(env))),
            1.0
        );
    }

    #[test]
    fn moves_agree_with_rules() {
        let r = rates(r#"{"default_rate": 1.5}"#);
        let p = Process::par(
            Process::choice(put_self("t", Process::call("P", vec![])), put_self("u", Process::Nil)),
            Process::par(put_self("t", Process::Nil), get_a(Process::Nil)),
        );
        let ms = moves(&p, &DefinitionsTable::new()).unwrap();
        assert_eq!(ms.len(), 4);
        let mut by_moves = ContinuationFunction::zero();
        for m in ms.iter().filter(|m| m.action.kind == ActionKind::Put && m.item().unwrap() == Item(vec![s("t")])) {
            by_moves.add_assign(&ContinuationFunction::point(m.continuation(&Substitution::new()), 1.5).unwrap());
        }
        let by_rules = process_step(&p, &out_put("t"), &Evaluation::default(), &DefinitionsTable::new(), &r).unwrap();
        assert_eq!(by_moves, by_rules);
    }
}
