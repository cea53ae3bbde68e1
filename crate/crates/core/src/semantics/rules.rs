//! Component and system rules applied to a given label.
//!
//! Put: (c-putl), (c-puto), (c-puti), (c-putir), and the broadcast rules
//! (s-po)/(s-pi); under net-or (c-puti) attaches an envelope and (c-enva)/(c-envr)
//! deliver it. Get/qry: a local rule for `self`, and a unicast race where every
//! eligible component other than the requester may respond.

use std::sync::Arc;

use indexmap::IndexMap;

use super::engine::{transitions, StateView};
use super::process::{envelope_descriptor, process_step, ProcessLabel};
use super::{Context, Semantics, SystemLabel};
use crate::error::EvalError;
use crate::futs::ContinuationFunction;
use crate::interface::Evaluation;
use crate::knowledge::{Item, KnowledgeState, Template};
use crate::term::{ActionKind, Component, Envelope, System, Target};

pub(crate) fn evaluation(c: &Component) -> Evaluation {
    c.interface.evaluate(&c.name, &c.knowledge)
}

/// Repository answers to a get/qry, grouped by returned item:
/// `(item, probability of that item, successor knowledge states with their joint probability)`.
pub(crate) fn responses(
    c: &Component,
    kind: ActionKind,
    template: &Template,
) -> Vec<(Item, f64, Vec<(KnowledgeState, f64)>)> {
    let mut grouped: IndexMap<Item, (f64, Vec<(KnowledgeState, f64)>)> = IndexMap::new();
    match kind {
        ActionKind::Get => {
            if let Some(d) = c.repository.withdraw(&c.knowledge, template) {
                for ((k, t), w) in d.iter() {
                    let g = grouped.entry(t.clone()).or_default();
                    g.0 += w;
                    g.1.push((k.clone(), w));
                }
            }
        }
        _ => {
            if let Some(d) = c.repository.infer(&c.knowledge, template) {
                for (t, w) in d.iter() {
                    let g = grouped.entry(t.clone()).or_default();
                    g.0 += w;
                    g.1.push((c.knowledge.clone(), w));
                }
            }
        }
    }
    grouped.into_iter().map(|(t, (q, ks))| (t, q, ks)).collect()
}

fn yielding(c: &Component, kind: ActionKind, template: &Template, item: &Item) -> Vec<(KnowledgeState, f64)> {
    responses(c, kind, template)
        .into_iter()
        .find(|(t, _, _)| t == item)
        .map(|(_, _, ks)| ks)
        .unwrap_or_default()
}

fn with_knowledge(c: &Component, k: KnowledgeState) -> Component {
    Component { knowledge: k, ..c.clone() }
}

/// `[C with (K', P') -> pi(K') * f(P')]`.
fn knowledge_times_process(
    c: &Component,
    ks: &[(KnowledgeState, f64)],
    ps: &ContinuationFunction<crate::term::Process>,
) -> ContinuationFunction<Component> {
    let mut out = ContinuationFunction::zero();
    for (k, w) in ks {
        for (p, r) in ps.iter() {
            out.accumulate(c.with_state(k.clone(), p.clone()), w * r);
        }
    }
    out
}

fn lift_process(c: &Component, ps: &ContinuationFunction<crate::term::Process>) -> ContinuationFunction<Component> {
    knowledge_times_process(c, &[(c.knowledge.clone(), 1.0)], ps)
}

/// Act-or component rules for put labels.
pub fn component_step_put(
    c: &Component,
    label: &SystemLabel,
    ctx: &Context,
) -> Result<ContinuationFunction<Component>, EvalError> {
    let own = evaluation(c);
    Ok(match label {
        SystemLabel::SyncPutSelf { src, item } if *src == own => {
            // (c-putl)
            let ps = process_step(
                &c.process,
                &ProcessLabel::OutPut {
                    item: item.clone(),
                    target: Target::SelfTarget,
                },
                &own,
                &ctx.defs,
                &ctx.rates,
            )?;
            let pi: Vec<_> = c.repository.add(&c.knowledge, item).iter().map(|(k, w)| (k.clone(), w)).collect();
            knowledge_times_process(c, &pi, &ps)
        }
        SystemLabel::OutputPut { src, item, predicate } if *src == own => {
            // (c-puto)
            let ps = process_step(
                &c.process,
                &ProcessLabel::OutPut {
                    item: item.clone(),
                    target: Target::Pred(predicate.clone()),
                },
                &own,
                &ctx.defs,
                &ctx.rates,
            )?;
            lift_process(c, &ps)
        }
        SystemLabel::InputPut { src, item, predicate } => {
            if own.satisfies(predicate) {
                // (c-puti)
                let a = super::process::put_descriptor(item, &Target::Pred(predicate.clone()));
                let p_err = ctx.rates.loss_probability(src, &a, Some(&own))?;
                let mut out = ContinuationFunction::point(c.clone(), p_err)?;
                for (k, w) in c.repository.add(&c.knowledge, item).iter() {
                    out.accumulate(with_knowledge(c, k.clone()), w * (1.0 - p_err));
                }
                out
            } else {
                // (c-putir)
                ContinuationFunction::char(c.clone())
            }
        }
        _ => ContinuationFunction::zero(),
    })
}

/// Net-or component rules for put labels: (c-puti) attaches an envelope
/// without looking at the predicate; the other put labels behave as in act-or.
pub fn component_step_net_put(
    c: &Component,
    label: &SystemLabel,
    ctx: &Context,
) -> Result<ContinuationFunction<Component>, EvalError> {
    match label {
        SystemLabel::InputPut { src, item, predicate } => {
            let own = evaluation(c);
            let a = envelope_descriptor(item, predicate);
            let mu = ctx.rates.rate(src, &a, Some(&own))?;
            let p_err = ctx.rates.loss_probability(src, &a, Some(&own))?;
            let mut with_env = c.clone();
            with_env.add_envelope(Envelope {
                item: item.clone(),
                predicate: predicate.clone(),
                rate: mu,
            });
            let mut out = ContinuationFunction::point(c.clone(), p_err)?;
            out.accumulate(with_env, 1.0 - p_err);
            Ok(out)
        }
        SystemLabel::Envelope { .. } => component_step_envelope(c, label),
        _ => component_step_put(c, label, ctx),
    }
}

/// (c-enva)/(c-envr): delivery of a pending envelope.
pub fn component_step_envelope(c: &Component, label: &SystemLabel) -> Result<ContinuationFunction<Component>, EvalError> {
    let SystemLabel::Envelope { item, predicate } = label else {
        return Ok(ContinuationFunction::zero());
    };
    let own = evaluation(c);
    let alpha = ProcessLabel::Env {
        item: item.clone(),
        predicate: predicate.clone(),
    };
    let accept = own.satisfies(predicate);
    let mut out = ContinuationFunction::zero();
    for (idx, env) in c.envelopes.iter().enumerate() {
        let rate = super::process::envelope_step(env, &alpha).total_mass();
        if rate == 0.0 {
            continue;
        }
        let mut rest = c.clone();
        rest.envelopes.remove(idx);
        if accept {
            for (k, w) in c.repository.add(&c.knowledge, item).iter() {
                out.accumulate(with_knowledge(&rest, k.clone()), w * rate);
            }
        } else {
            out.accumulate(rest, rate);
        }
    }
    Ok(out)
}

/// Component rules for get/qry labels.
pub fn component_step_gq(
    c: &Component,
    label: &SystemLabel,
    ctx: &Context,
) -> Result<ContinuationFunction<Component>, EvalError> {
    let own = evaluation(c);
    Ok(match label {
        SystemLabel::SyncGq {
            src,
            kind,
            template,
            item,
            target: Target::SelfTarget,
        } if *src == own => {
            let ps = process_step(
                &c.process,
                &ProcessLabel::OutGq {
                    kind: *kind,
                    dest: own.clone(),
                    template: template.clone(),
                    item: item.clone(),
                    target: Target::SelfTarget,
                },
                &own,
                &ctx.defs,
                &ctx.rates,
            )?;
            if ps.is_zero() {
                return Ok(ps.map(|_| c.clone()));
            }
            knowledge_times_process(c, &yielding(c, *kind, template, item), &ps)
        }
        SystemLabel::InputGq {
            kind,
            template,
            item,
            predicate,
            ..
        } => {
            if !own.satisfies(predicate) {
                return Ok(ContinuationFunction::zero());
            }
            let mut out = ContinuationFunction::zero();
            for (k, w) in yielding(c, *kind, template, item) {
                out.accumulate(with_knowledge(c, k), w);
            }
            out
        }
        SystemLabel::OutputGq {
            src,
            kind,
            dest,
            template,
            item,
            predicate,
        } if *src == own => {
            let ps = process_step(
                &c.process,
                &ProcessLabel::OutGq {
                    kind: *kind,
                    dest: dest.clone(),
                    template: template.clone(),
                    item: item.clone(),
                    target: Target::Pred(predicate.clone()),
                },
                &own,
                &ctx.defs,
                &ctx.rates,
            )?;
            lift_process(c, &ps)
        }
        _ => ContinuationFunction::zero(),
    })
}

type Comps = Vec<Arc<Component>>;

fn component_step(c: &Component, label: &SystemLabel, ctx: &Context) -> Result<ContinuationFunction<Component>, EvalError> {
    match label {
        SystemLabel::InputGq { .. } | SystemLabel::OutputGq { .. } | SystemLabel::SyncGq { .. } => {
            component_step_gq(c, label, ctx)
        }
        _ => match ctx.semantics {
            Semantics::ActOr => component_step_put(c, label, ctx),
            Semantics::NetOr => component_step_net_put(c, label, ctx),
        },
    }
}

fn to_arcs(f: ContinuationFunction<Component>) -> ContinuationFunction<Arc<Component>> {
    let mut out = ContinuationFunction::zero();
    for (c, w) in f.into_pairs() {
        out.accumulate(Arc::new(c), w);
    }
    out
}

fn snoc(prefix: &Comps, c: &Arc<Component>) -> Comps {
    let mut v = prefix.clone();
    v.push(c.clone());
    v
}

/// Left-to-right fold of (s-po)/(s-pi) over the components.
fn broadcast(
    s: &System,
    output: &SystemLabel,
    input: &SystemLabel,
    ctx: &Context,
) -> Result<(ContinuationFunction<Comps>, ContinuationFunction<Comps>), EvalError> {
    let mut out: ContinuationFunction<Comps> = ContinuationFunction::zero();
    let mut inp: ContinuationFunction<Comps> = ContinuationFunction::char(Vec::new());
    for c in s.components() {
        let o = to_arcs(component_step(c, output, ctx)?);
        let i = to_arcs(component_step(c, input, ctx)?);
        let mut next_out = out.pair_with(&i, snoc);
        next_out.add_assign(&inp.pair_with(&o, snoc));
        inp = inp.pair_with(&i, snoc);
        out = next_out;
    }
    Ok((out, inp))
}

/// Interleaving: exactly one component moves.
fn interleave(s: &System, label: &SystemLabel, ctx: &Context) -> Result<ContinuationFunction<System>, EvalError> {
    let mut out = ContinuationFunction::zero();
    for (i, c) in s.components().enumerate() {
        for (c2, w) in component_step(c, label, ctx)?.into_pairs() {
            let mut next = s.clone();
            next.replace(i, Arc::new(c2));
            out.accumulate(next, w);
        }
    }
    Ok(out)
}

fn input_of(label: &SystemLabel) -> Option<SystemLabel> {
    match label {
        SystemLabel::OutputPut { src, item, predicate } | SystemLabel::InputPut { src, item, predicate } => {
            Some(SystemLabel::InputPut {
                src: src.clone(),
                item: item.clone(),
                predicate: predicate.clone(),
            })
        }
        _ => None,
    }
}

/// The system-level continuation of `label`, using the semantics in `ctx`.
pub fn system_step(s: &System, label: &SystemLabel, ctx: &Context) -> Result<ContinuationFunction<System>, EvalError> {
    let to_system = |f: ContinuationFunction<Comps>| f.map(|cs| System::from_arcs(cs.clone()));
    match label {
        SystemLabel::OutputPut { .. } => {
            let input = input_of(label).expect("put label");
            Ok(to_system(broadcast(s, label, &input, ctx)?.0))
        }
        SystemLabel::InputPut { .. } => Ok(to_system(broadcast(s, label, label, ctx)?.1)),
        SystemLabel::SyncGq {
            src,
            kind,
            template,
            item,
            target: Target::Pred(predicate),
        } => {
            let mut out = ContinuationFunction::zero();
            let comps: Vec<&Component> = s.components().collect();
            let input = SystemLabel::InputGq {
                src: src.clone(),
                kind: *kind,
                template: template.clone(),
                item: item.clone(),
                predicate: predicate.clone(),
            };
            for (i, ci) in comps.iter().enumerate() {
                if evaluation(ci) != *src {
                    continue;
                }
                for (j, cj) in comps.iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    let responder = component_step_gq(cj, &input, ctx)?;
                    if responder.is_zero() {
                        continue;
                    }
                    let output = SystemLabel::OutputGq {
                        src: src.clone(),
                        kind: *kind,
                        dest: evaluation(cj),
                        template: template.clone(),
                        item: item.clone(),
                        predicate: predicate.clone(),
                    };
                    let requester = component_step_gq(ci, &output, ctx)?;
                    for (a, wa) in requester.iter() {
                        for (b, wb) in responder.iter() {
                            let mut next = s.clone();
                            next.replace(i, Arc::new(a.clone()));
                            next.replace(j, Arc::new(b.clone()));
                            out.accumulate(next, wa * wb);
                        }
                    }
                }
            }
            Ok(out)
        }
        _ => interleave(s, label, ctx),
    }
}

/// [`system_step`] under net-or.
pub fn system_step_net(s: &System, label: &SystemLabel, ctx: &Context) -> Result<ContinuationFunction<System>, EvalError> {
    let ctx = Context {
        semantics: Semantics::NetOr,
        ..ctx.clone()
    };
    system_step(s, label, &ctx)
}

/// Every transition label of `s` with its (non-empty) continuation.
pub fn enabled_transitions(s: &System, ctx: &Context) -> Result<Vec<(SystemLabel, ContinuationFunction<System>)>, EvalError> {
    let view = StateView::new(s.clone(), ctx)?;
    let mut labels: IndexMap<SystemLabel, ()> = IndexMap::new();
    for jump in transitions(&view, ctx)? {
        labels.insert(jump.label(&view), ());
    }
    let mut out = Vec::new();
    for (label, ()) in labels {
        let f = system_step(s, &label, ctx)?;
        if !f.is_zero() {
            out.push((label, f));
        }
    }
    Ok(out)
}
