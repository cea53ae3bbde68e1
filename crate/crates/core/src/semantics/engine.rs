//! Transition enumeration for a system state.
//!
//! Each [`Jump`] is one way for the system to move, with a single rate and a
//! probability distribution over component updates. The sum over jumps with
//! the same label equals the continuation computed by
//! [`system_step`](super::system_step) for that label.

use std::sync::Arc;

use rand::Rng;

use super::process::{envelope_descriptor, gq_descriptor, moves, put_descriptor, Move};
use super::rules::{evaluation, responses};
use super::{Context, Semantics, SystemLabel};
use crate::error::EvalError;
use crate::interface::Evaluation;
use crate::knowledge::{match_template, Item, KnowledgeState, Template};
use crate::term::{ActionKind, Component, Envelope, Predicate, System, Target};

/// Per-component data derived from its state.
#[derive(Clone, Debug)]
pub struct CompInfo {
    pub eval: Arc<Evaluation>,
    pub moves: Arc<Vec<Move>>,
}

impl CompInfo {
    fn new(c: &Component, ctx: &Context) -> Result<Self, EvalError> {
        Ok(CompInfo {
            eval: Arc::new(evaluation(c)),
            moves: Arc::new(moves(&c.process, &ctx.defs)?),
        })
    }
}

/// A system state with its component information cached.
#[derive(Clone, Debug)]
pub struct StateView {
    pub system: System,
    pub infos: Vec<CompInfo>,
}

impl StateView {
    pub fn new(system: System, ctx: &Context) -> Result<Self, EvalError> {
        let infos = system
            .components()
            .map(|c| CompInfo::new(c, ctx))
            .collect::<Result<_, _>>()?;
        Ok(StateView { system, infos })
    }

    /// Applies component updates, recomputing only what changed.
    pub fn apply(&mut self, delta: Update, ctx: &Context) -> Result<(), EvalError> {
        for (i, c) in delta {
            self.infos[i] = CompInfo::new(&c, ctx)?;
            self.system.replace(i, c);
        }
        Ok(())
    }

    /// The successor state for an update, without touching `self`.
    pub fn successor(&self, delta: &Update) -> System {
        let mut s = self.system.clone();
        for (i, c) in delta {
            s.replace(*i, c.clone());
        }
        s
    }
}

/// New values for some components, by index.
pub type Update = Vec<(usize, Arc<Component>)>;

#[derive(Clone, Debug)]
pub enum JumpKind {
    /// `put(t)@self`.
    PutSelf { i: usize, m: usize, item: Item },
    /// `put(t)@p`: the sender moves on, every other component may receive.
    PutBroadcast {
        i: usize,
        m: usize,
        item: Item,
        predicate: Arc<Predicate>,
    },
    /// `get`/`qry` on the component's own repository, yielding `item`.
    GqSelf {
        i: usize,
        m: usize,
        kind: ActionKind,
        template: Template,
        item: Item,
        /// Successor knowledge states, conditional on `item`.
        knowledge: Vec<(KnowledgeState, f64)>,
    },
    /// `get`/`qry` served by component `j`.
    GqRemote {
        i: usize,
        m: usize,
        j: usize,
        kind: ActionKind,
        template: Template,
        item: Item,
        predicate: Arc<Predicate>,
        knowledge: Vec<(KnowledgeState, f64)>,
    },
    /// Delivery of one of the (identical) pending envelopes at `envelopes[e]` of component `i`.
    Deliver { i: usize, e: usize },
}

#[derive(Clone, Debug)]
pub struct Jump {
    pub rate: f64,
    pub kind: JumpKind,
}

/// Outcome of one receiver: `None` leaves it unchanged.
type Choices = Vec<(f64, Option<Component>)>;

impl Jump {
    /// The system label this jump is an instance of.
    pub fn label(&self, view: &StateView) -> SystemLabel {
        let src = |i: usize| (*view.infos[i].eval).clone();
        match &self.kind {
            JumpKind::PutSelf { i, item, .. } => SystemLabel::SyncPutSelf {
                src: src(*i),
                item: item.clone(),
            },
            JumpKind::PutBroadcast { i, item, predicate, .. } => SystemLabel::OutputPut {
                src: src(*i),
                item: item.clone(),
                predicate: predicate.clone(),
            },
            JumpKind::GqSelf {
                i,
                kind,
                template,
                item,
                ..
            } => SystemLabel::SyncGq {
                src: src(*i),
                kind: *kind,
                template: template.clone(),
                item: item.clone(),
                target: Target::SelfTarget,
            },
            JumpKind::GqRemote {
                i,
                kind,
                template,
                item,
                predicate,
                ..
            } => SystemLabel::SyncGq {
                src: src(*i),
                kind: *kind,
                template: template.clone(),
                item: item.clone(),
                target: Target::Pred(predicate.clone()),
            },
            JumpKind::Deliver { i, e } => {
                let env = &view.system.component(*i).envelopes[*e];
                SystemLabel::Envelope {
                    item: env.item.clone(),
                    predicate: env.predicate.clone(),
                }
            }
        }
    }

    /// Components touched by this jump apart from broadcast receivers.
    pub fn actors(&self) -> Vec<usize> {
        match &self.kind {
            JumpKind::PutSelf { i, .. }
            | JumpKind::PutBroadcast { i, .. }
            | JumpKind::GqSelf { i, .. }
            | JumpKind::Deliver { i, .. } => vec![*i],
            JumpKind::GqRemote { i, j, .. } => vec![*i, *j],
        }
    }

    /// Per-component outcome lists; the jump's distribution is their product.
    fn factors(&self, view: &StateView, ctx: &Context) -> Result<Vec<(usize, Choices)>, EvalError> {
        let comp = |i: usize| view.system.component(i);
        let mv = |i: usize, m: usize| &view.infos[i].moves[m];
        Ok(match &self.kind {
            JumpKind::PutSelf { i, m, item } => {
                let c = comp(*i);
                let p = mv(*i, *m).continuation(&Default::default());
                let choices = c
                    .repository
                    .add(&c.knowledge, item)
                    .iter()
                    .map(|(k, w)| (w, Some(c.with_state(k.clone(), p.clone()))))
                    .collect();
                vec![(*i, choices)]
            }
            JumpKind::PutBroadcast { i, m, item, predicate } => {
                let c = comp(*i);
                let p = mv(*i, *m).continuation(&Default::default());
                let mut out = vec![(*i, vec![(1.0, Some(c.with_state(c.knowledge.clone(), p)))])];
                let src = &view.infos[*i].eval;
                for (j, r) in view.system.components().enumerate() {
                    if j == *i {
                        continue;
                    }
                    let own = &view.infos[j].eval;
                    let choices = match ctx.semantics {
                        Semantics::ActOr => {
                            if !own.satisfies(predicate) {
                                continue;
                            }
                            let a = put_descriptor(item, &Target::Pred(predicate.clone()));
                            let p_err = ctx.rates.loss_probability(src, &a, Some(own))?;
                            let mut ch = vec![(p_err, None)];
                            for (k, w) in r.repository.add(&r.knowledge, item).iter() {
                                ch.push((w * (1.0 - p_err), Some(Component { knowledge: k.clone(), ..r.clone() })));
                            }
                            ch
                        }
                        Semantics::NetOr => {
                            let a = envelope_descriptor(item, predicate);
                            let mu = ctx.rates.rate(src, &a, Some(own))?;
                            let p_err = ctx.rates.loss_probability(src, &a, Some(own))?;
                            let mut with_env = r.clone();
                            with_env.add_envelope(Envelope {
                                item: item.clone(),
                                predicate: predicate.clone(),
                                rate: mu,
                            });
                            vec![(p_err, None), (1.0 - p_err, Some(with_env))]
                        }
                    };
                    out.push((j, choices));
                }
                out
            }
            JumpKind::GqSelf {
                i,
                m,
                template,
                item,
                knowledge,
                ..
            } => {
                let c = comp(*i);
                let theta = match_template(template, item).unwrap_or_default();
                let p = mv(*i, *m).continuation(&theta);
                let choices = knowledge
                    .iter()
                    .map(|(k, w)| (*w, Some(c.with_state(k.clone(), p.clone()))))
                    .collect();
                vec![(*i, choices)]
            }
            JumpKind::GqRemote {
                i,
                m,
                j,
                template,
                item,
                knowledge,
                ..
            } => {
                let c = comp(*i);
                let theta = match_template(template, item).unwrap_or_default();
                let p = mv(*i, *m).continuation(&theta);
                let r = comp(*j);
                let choices = knowledge
                    .iter()
                    .map(|(k, w)| (*w, Some(Component { knowledge: k.clone(), ..r.clone() })))
                    .collect();
                vec![(*i, vec![(1.0, Some(c.with_state(c.knowledge.clone(), p)))]), (*j, choices)]
            }
            JumpKind::Deliver { i, e } => {
                let c = comp(*i);
                let env = &c.envelopes[*e];
                let mut rest = c.clone();
                rest.envelopes.remove(*e);
                let choices = if view.infos[*i].eval.satisfies(&env.predicate) {
                    c.repository
                        .add(&c.knowledge, &env.item)
                        .iter()
                        .map(|(k, w)| (w, Some(Component { knowledge: k.clone(), ..rest.clone() })))
                        .collect()
                } else {
                    vec![(1.0, Some(rest))]
                };
                vec![(*i, choices)]
            }
        })
    }

    /// The full distribution over updates.
    pub fn outcomes(&self, view: &StateView, ctx: &Context) -> Result<Vec<(f64, Update)>, EvalError> {
        let mut acc: Vec<(f64, Update)> = vec![(1.0, Vec::new())];
        for (idx, choices) in self.factors(view, ctx)? {
            let mut next = Vec::with_capacity(acc.len() * choices.len());
            for (w, upd) in &acc {
                for (p, c) in &choices {
                    if *p <= 0.0 {
                        continue;
                    }
                    let mut u = upd.clone();
                    if let Some(c) = c {
                        u.push((idx, Arc::new(c.clone())));
                    }
                    next.push((w * p, u));
                }
            }
            acc = next;
        }
        Ok(acc)
    }

    /// Draws one update.
    pub fn sample<R: Rng + ?Sized>(&self, view: &StateView, ctx: &Context, rng: &mut R) -> Result<Update, EvalError> {
        let mut out = Vec::new();
        for (idx, choices) in self.factors(view, ctx)? {
            let total: f64 = choices.iter().map(|(p, _)| p).sum();
            let mut u = rng.random::<f64>() * total;
            let mut picked = None;
            for (p, c) in &choices {
                if *p <= 0.0 {
                    continue;
                }
                picked = Some(c);
                if u < *p {
                    break;
                }
                u -= p;
            }
            if let Some(Some(c)) = picked {
                out.push((idx, Arc::new(c.clone())));
            }
        }
        Ok(out)
    }
}

/// Every jump enabled in `view`, in a deterministic order. Zero-rate jumps are omitted.
pub fn transitions(view: &StateView, ctx: &Context) -> Result<Vec<Jump>, EvalError> {
    let mut out = Vec::new();
    for i in 0..view.system.len() {
        component_transitions(view, ctx, i, &mut out)?;
    }
    Ok(out)
}

/// Whether the jumps initiated by component `i` depend on other components' state.
pub fn depends_on_others(view: &StateView, i: usize) -> bool {
    view.infos[i]
        .moves
        .iter()
        .any(|m| m.action.kind != ActionKind::Put && matches!(m.action.target, Target::Pred(_)))
}

/// The jumps initiated by component `i`, appended to `out`.
pub fn component_transitions(view: &StateView, ctx: &Context, i: usize, out: &mut Vec<Jump>) -> Result<(), EvalError> {
    let n = view.system.len();
    {
        let c = view.system.component(i);
        let info = &view.infos[i];
        let src = &*info.eval;
        for (m, mv) in info.moves.iter().enumerate() {
            let a = &mv.action;
            match (a.kind, &a.target) {
                (ActionKind::Put, target) => {
                    let item = mv.item()?;
                    let rate = ctx.rates.rate(src, &put_descriptor(&item, target), None)?;
                    if rate <= 0.0 {
                        continue;
                    }
                    let kind = match target {
                        Target::SelfTarget => JumpKind::PutSelf { i, m, item },
                        Target::Pred(p) => JumpKind::PutBroadcast {
                            i,
                            m,
                            item,
                            predicate: p.clone(),
                        },
                    };
                    out.push(Jump { rate, kind });
                }
                (kind, Target::SelfTarget) => {
                    let template = mv.template()?;
                    for (item, q, ks) in responses(c, kind, &template) {
                        let lambda = ctx.rates.rate(
                            src,
                            &gq_descriptor(kind, &template, &item, &Target::SelfTarget),
                            Some(src),
                        )?;
                        let rate = lambda * q;
                        if rate <= 0.0 {
                            continue;
                        }
                        let knowledge = ks.into_iter().map(|(k, w)| (k, w / q)).collect();
                        out.push(Jump {
                            rate,
                            kind: JumpKind::GqSelf {
                                i,
                                m,
                                kind,
                                template: template.clone(),
                                item,
                                knowledge,
                            },
                        });
                    }
                }
                (kind, Target::Pred(p)) => {
                    let template = mv.template()?;
                    let target = Target::Pred(p.clone());
                    for j in 0..n {
                        if j == i || !view.infos[j].eval.satisfies(p) {
                            continue;
                        }
                        let dst = &*view.infos[j].eval;
                        for (item, q, ks) in responses(view.system.component(j), kind, &template) {
                            let lambda = ctx.rates.rate(src, &gq_descriptor(kind, &template, &item, &target), Some(dst))?;
                            let rate = lambda * q;
                            if rate <= 0.0 {
                                continue;
                            }
                            let knowledge = ks.into_iter().map(|(k, w)| (k, w / q)).collect();
                            out.push(Jump {
                                rate,
                                kind: JumpKind::GqRemote {
                                    i,
                                    m,
                                    j,
                                    kind,
                                    template: template.clone(),
                                    item,
                                    predicate: p.clone(),
                                    knowledge,
                                },
                            });
                        }
                    }
                }
            }
        }
        let envs = &c.envelopes;
        let mut e = 0;
        while e < envs.len() {
            let mut count = 1;
            while e + count < envs.len() && envs[e + count] == envs[e] {
                count += 1;
            }
            let rate = envs[e].rate * count as f64;
            if rate > 0.0 {
                out.push(Jump {
                    rate,
                    kind: JumpKind::Deliver { i, e },
                });
            }
            e += count;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::futs::ContinuationFunction;
    use crate::rates::RateConfig;
    use crate::semantics::rules::enabled_transitions;
    use crate::syntax::parse_model;
    use crate::term::DefinitionsTable;
    use std::collections::HashMap;

    fn succ_from_jumps(view: &StateView, ctx: &Context) -> HashMap<(SystemLabel, System), f64> {
        let mut out = HashMap::new();
        for j in transitions(view, ctx).unwrap() {
            let label = j.label(view);
            for (p, u) in j.outcomes(view, ctx).unwrap() {
                *out.entry((label.clone(), view.successor(&u))).or_insert(0.0) += j.rate * p;
            }
        }
        out
    }

    fn succ_from_rules(s: &System, ctx: &Context) -> HashMap<(SystemLabel, System), f64> {
        let mut out = HashMap::new();
        for (label, f) in enabled_transitions(s, ctx).unwrap() {
            let f: ContinuationFunction<System> = f;
            for (s2, w) in f.iter() {
                out.insert((label.clone(), s2.clone()), w);
            }
        }
        out
    }

    fn assert_agree(a: &HashMap<(SystemLabel, System), f64>, b: &HashMap<(SystemLabel, System), f64>) {
        assert_eq!(a.len(), b.len(), "{a:?}\n{b:?}");
        for (k, v) in a {
            let w = b.get(k).unwrap_or_else(|| panic!("missing {k:?}"));
            assert!((v - w).abs() <= 1e-12 * v.abs().max(1.0), "{k:?}: {v} vs {w}");
        }
    }

    const MODEL: &str = r#"
        attributes role, n;
        proc S = put(<"x", 1>)@(role == "r").S + get(<"x", ?v>)@(role == "r").put(<"y", v>)@self.S
               + qry(<"x", ?v>)@self.nil;
        interface I { role = "r"; n = count("x"); }
        interface J { role = "s"; n = count("x"); }
        component a : J { knowledge = [<"x", 1>, <"x", 2>]; process = S | S; }
        component b : I { knowledge = [<"x", 1>, <"x", 1>, <"x", 3>]; process = nil; }
        component c : I { knowledge = []; process = S; }
    "#;

    fn system_and_defs() -> (System, DefinitionsTable) {
        let m = parse_model(MODEL).unwrap();
        let defs: DefinitionsTable = m.definitions.iter().map(|d| d.def.clone()).collect();
        (crate::model::build_system(&m).unwrap(), defs)
    }

    #[test]
    fn jumps_agree_with_rules() {
        let (s, defs) = system_and_defs();
        for sem in [Semantics::ActOr, Semantics::NetOr] {
            for cfg in [
                r#"{"default_rate": 1.0}"#,
                r#"{"default_rate": 1.5, "rates": [{"kind": "get", "rate": "1.0 + dst.n"}],
                    "errors": [{"kind": "put", "prob": 0.25}, {"kind": "envelope", "prob": 0.1}]}"#,
            ] {
                let ctx = Context::new(Arc::new(defs.clone()), Arc::new(RateConfig::from_json(cfg).unwrap()), sem);
                // explore a few levels to get pending envelopes too
                let mut frontier = vec![s.clone()];
                for _ in 0..3 {
                    let mut next = Vec::new();
                    for st in &frontier {
                        let view = StateView::new(st.clone(), &ctx).unwrap();
                        let a = succ_from_jumps(&view, &ctx);
                        let b = succ_from_rules(st, &ctx);
                        assert_agree(&a, &b);
                        next.extend(a.keys().map(|(_, s2)| s2.clone()).take(4));
                    }
                    frontier = next;
                }
            }
        }
    }

    #[test]
    fn sampling_matches_outcomes() {
        use rand::SeedableRng;
        let (s, defs) = system_and_defs();
        let ctx = Context::new(
            Arc::new(defs),
            Arc::new(RateConfig::from_json(r#"{"errors": [{"kind": "put", "prob": 0.3}]}"#).unwrap()),
            Semantics::ActOr,
        );
        let view = StateView::new(s, &ctx).unwrap();
        let jump = transitions(&view, &ctx)
            .unwrap()
            .into_iter()
            .find(|j| matches!(j.kind, JumpKind::PutBroadcast { .. }))
            .unwrap();
        let exact = jump.outcomes(&view, &ctx).unwrap();
        assert_eq!(exact.len(), 4);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 40_000;
        let mut hits = 0;
        let target = view.successor(&exact[0].1);
        for _ in 0..n {
            if view.successor(&jump.sample(&view, &ctx, &mut rng).unwrap()) == target {
                hits += 1;
            }
        }
        let f = hits as f64 / n as f64;
        assert!((f - exact[0].0).abs() < 0.01, "{f} vs {}", exact[0].0);
    }
}
