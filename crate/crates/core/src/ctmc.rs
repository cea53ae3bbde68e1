//! State-space construction and transient analysis.

use std::collections::{HashMap, VecDeque};

use crate::error::EngineError;
use crate::semantics::engine::{transitions, StateView};
use crate::semantics::Context;
use crate::term::System;

/// Headroom of the uniformization constant over the largest exit rate.
pub const UNIFORMIZATION_FACTOR: f64 = 1.05;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub target: usize,
    pub rate: f64,
    /// Distinct labels contributing to this edge, in discovery order.
    pub labels: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Ctmc {
    pub states: Vec<System>,
    pub transitions: Vec<Vec<Transition>>,
    pub initial: usize,
    index: HashMap<System, usize>,
}

/// Breadth-first construction from `s0`. States are numbered in discovery
/// order; rates into the same target are summed over all labels.
pub fn build_ctmc(s0: &System, ctx: &Context, max_states: usize) -> Result<Ctmc, EngineError> {
    if max_states == 0 {
        return Err(EngineError::InvalidArgument("max_states must be at least 1".into()));
    }
    let mut states = vec![s0.clone()];
    let mut index = HashMap::from([(s0.clone(), 0)]);
    let mut edges = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let view = StateView::new(states[i].clone(), ctx)?;
        let mut row: Vec<Transition> = Vec::new();
        let mut slot: HashMap<usize, usize> = HashMap::new();
        for jump in transitions(&view, ctx)? {
            let label = jump.label(&view).to_string();
            for (p, update) in jump.outcomes(&view, ctx)? {
                let next = view.successor(&update);
                let target = match index.get(&next) {
                    Some(&t) => t,
                    None => {
                        if states.len() >= max_states {
                            return Err(EngineError::StateOverflow {
                                limit: max_states,
                                reached: states.len() + 1,
                            });
                        }
                        let t = states.len();
                        index.insert(next.clone(), t);
                        states.push(next);
                        queue.push_back(t);
                        t
                    }
                };
                let r = jump.rate * p;
                match slot.get(&target) {
                    Some(&k) => {
                        let tr = &mut row[k];
                        tr.rate += r;
                        if !tr.labels.contains(&label) {
                            tr.labels.push(label.clone());
                        }
                    }
                    None => {
                        slot.insert(target, row.len());
                        row.push(Transition {
                            target,
                            rate: r,
                            labels: vec![label.clone()],
                        });
                    }
                }
            }
        }
        row.retain(|t| t.rate > 0.0);
        edges.push((i, row));
    }
    let mut transitions_by_state = vec![Vec::new(); states.len()];
    for (i, row) in edges {
        transitions_by_state[i] = row;
    }
    Ok(Ctmc {
        states,
        transitions: transitions_by_state,
        initial: 0,
        index,
    })
}

impl Ctmc {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, s: &System) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn transition_count(&self) -> usize {
        self.transitions.iter().map(Vec::len).sum()
    }

    /// Total outgoing rate, self-loops included.
    pub fn exit_rate(&self, i: usize) -> f64 {
        self.transitions[i].iter().fold(0.0, |acc, t| acc + t.rate)
    }

    pub fn is_absorbing(&self, i: usize) -> bool {
        self.transitions[i].iter().all(|t| t.target == i)
    }

    /// Probability of each state at time `t`, by uniformization. The Poisson
    /// series is cut once the neglected mass is below `tol`.
    pub fn transient(&self, t: f64, tol: f64) -> Result<Vec<f64>, EngineError> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(EngineError::InvalidArgument(format!("time {t} must be a non-negative number")));
        }
        if !(tol > 0.0 && tol <= 1e-3) {
            return Err(EngineError::InvalidArgument(format!("tolerance {tol} must be in (0, 1e-3]")));
        }
        let n = self.len();
        let mut v = vec![0.0; n];
        v[self.initial] = 1.0;
        let max_exit = (0..n).map(|i| self.exit_rate(i)).fold(0.0, f64::max);
        if t == 0.0 || max_exit == 0.0 {
            return Ok(v);
        }
        let lambda = UNIFORMIZATION_FACTOR * max_exit;
        let q = lambda * t;
        let ln_q = q.ln();
        let stay: Vec<f64> = (0..n).map(|i| 1.0 - self.exit_rate(i) / lambda).collect();

        let mut result = vec![0.0; n];
        let mut cumulative = 0.0;
        let mut ln_fact = 0.0;
        let limit = (q + 50.0 * q.sqrt() + 100.0).ceil() as usize;
        for k in 0..=limit {
            if k > 0 {
                ln_fact += (k as f64).ln();
            }
            let w = (-q + k as f64 * ln_q - ln_fact).exp();
            if w > 0.0 {
                for (r, x) in result.iter_mut().zip(&v) {
                    *r += w * x;
                }
            }
            cumulative += w;
            if cumulative >= 1.0 - tol && k as f64 >= q {
                break;
            }
            // v <- v P with P = I + Q / lambda
            let mut next: Vec<f64> = v.iter().zip(&stay).map(|(x, s)| x * s).collect();
            for (i, row) in self.transitions.iter().enumerate() {
                let x = v[i];
                if x == 0.0 {
                    continue;
                }
                for tr in row {
                    next[tr.target] += x * tr.rate / lambda;
                }
            }
            v = next;
        }
        Ok(result)
    }
}
