//! Stochastic simulation (SSA) directly over the enabled transitions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::error::{EngineError, EvalError};
use crate::measure::Measure;
use crate::semantics::engine::{component_transitions, depends_on_others, Jump, StateView};
use crate::semantics::Context;
use crate::term::System;

/// 95% normal quantile used for confidence intervals.
pub const Z_95: f64 = 1.96;

/// Outcome of [`Simulator::step`].
#[derive(Clone, Debug)]
pub enum Step {
    /// A jump fired at `time`.
    Jumped { time: f64, jump: Jump },
    /// The next jump would come after the limit; time now equals the limit.
    Horizon,
    /// No transition is enabled.
    Deadlock,
}

/// A running simulation. Jumps are cached per initiating component and
/// refreshed only for components whose state changed, plus components with
/// pending remote get/qry requests.
pub struct Simulator {
    ctx: Context,
    view: StateView,
    cache: Vec<Vec<Jump>>,
    remote: Vec<bool>,
    time: f64,
    jumps: u64,
    rng: ChaCha8Rng,
}

impl Simulator {
    pub fn new(s0: System, ctx: Context, seed: u64) -> Result<Self, EvalError> {
        let view = StateView::new(s0, &ctx)?;
        let n = view.system.len();
        let mut sim = Simulator {
            ctx,
            view,
            cache: vec![Vec::new(); n],
            remote: vec![false; n],
            time: 0.0,
            jumps: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        for i in 0..n {
            sim.refresh(i)?;
        }
        Ok(sim)
    }

    fn refresh(&mut self, i: usize) -> Result<(), EvalError> {
        let mut js = Vec::new();
        component_transitions(&self.view, &self.ctx, i, &mut js)?;
        self.cache[i] = js;
        self.remote[i] = depends_on_others(&self.view, i);
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn jumps(&self) -> u64 {
        self.jumps
    }

    pub fn view(&self) -> &StateView {
        &self.view
    }

    pub fn system(&self) -> &System {
        &self.view.system
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }

    /// Sum of the rates of all enabled jumps.
    pub fn exit_rate(&self) -> f64 {
        self.cache.iter().flatten().fold(0.0, |acc, j| acc + j.rate)
    }

    /// Advances by one jump, or to `t_limit` if the next jump falls after it.
    pub fn step(&mut self, t_limit: f64) -> Result<Step, EvalError> {
        let total = self.exit_rate();
        if total <= 0.0 {
            return Ok(Step::Deadlock);
        }
        let dt: f64 = self.rng.sample::<f64, _>(Exp1) / total;
        let t = self.time + dt;
        if t > t_limit {
            self.time = t_limit;
            return Ok(Step::Horizon);
        }
        let mut u = self.rng.random::<f64>() * total;
        let mut chosen = None;
        'pick: for js in &self.cache {
            for j in js {
                chosen = Some(j);
                if u < j.rate {
                    break 'pick;
                }
                u -= j.rate;
            }
        }
        let jump = chosen.expect("positive exit rate").clone();
        let update = jump.sample(&self.view, &self.ctx, &mut self.rng)?;
        let mut dirty: Vec<usize> = update.iter().map(|(i, _)| *i).collect();
        self.view.apply(update, &self.ctx)?;
        dirty.extend((0..self.remote.len()).filter(|&i| self.remote[i]));
        dirty.sort_unstable();
        dirty.dedup();
        for i in dirty {
            self.refresh(i)?;
        }
        self.time = t;
        self.jumps += 1;
        Ok(Step::Jumped { time: t, jump })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOptions {
    pub t_end: f64,
    /// Observation times, increasing, within `[0, t_end]`.
    pub grid: Vec<f64>,
    /// Keep `(time, label)` for every jump.
    pub record_jumps: bool,
}

impl SimOptions {
    /// `steps + 1` equally spaced points from 0 to `t_end`.
    pub fn uniform(t_end: f64, steps: usize) -> Self {
        let steps = steps.max(1);
        SimOptions {
            t_end,
            grid: (0..=steps).map(|k| t_end * k as f64 / steps as f64).collect(),
            record_jumps: false,
        }
    }

    fn validate(&self) -> Result<(), EngineError> {
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(EngineError::InvalidArgument(format!("t_end {} must be positive", self.t_end)));
        }
        if self.grid.iter().any(|g| !(*g >= 0.0 && *g <= self.t_end)) {
            return Err(EngineError::InvalidArgument("grid points must lie in [0, t_end]".into()));
        }
        if self.grid.windows(2).any(|w| w[0] > w[1]) {
            return Err(EngineError::InvalidArgument("grid must be increasing".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub seed: u64,
    /// `samples[g][m]`: measure `m` at grid point `g`.
    pub samples: Vec<Vec<f64>>,
    pub jumps: u64,
    /// Time at which no transition was enabled any more.
    pub deadlock: Option<f64>,
    pub events: Vec<(f64, String)>,
}

fn sample_measures(view: &StateView, measures: &[Measure]) -> Vec<f64> {
    measures
        .iter()
        .map(|m| m.evaluate(view.infos.iter().map(|i| &*i.eval)))
        .collect()
}

/// One simulation run, observing `measures` on the grid (the state at a grid
/// point is the one after every jump up to and including that time).
pub fn simulate(
    s0: &System,
    ctx: &Context,
    opts: &SimOptions,
    measures: &[Measure],
    seed: u64,
) -> Result<Trace, EngineError> {
    opts.validate()?;
    let mut sim = Simulator::new(s0.clone(), ctx.clone(), seed)?;
    let mut samples = Vec::with_capacity(opts.grid.len());
    let mut deadlock = None;
    let mut events = Vec::new();
    let mut next = 0;
    while next < opts.grid.len() || (sim.time() < opts.t_end && deadlock.is_none() && opts.record_jumps) {
        let limit = opts.grid.get(next).copied().unwrap_or(opts.t_end);
        if deadlock.is_some() {
            samples.push(sample_measures(sim.view(), measures));
            next += 1;
            continue;
        }
        let before = opts.record_jumps.then(|| sim.view().clone());
        match sim.step(limit)? {
            Step::Jumped { time, jump } => {
                if let Some(v) = before {
                    events.push((time, jump.label(&v).to_string()));
                }
            }
            Step::Horizon => {
                if next < opts.grid.len() {
                    samples.push(sample_measures(sim.view(), measures));
                    next += 1;
                } else {
                    break;
                }
            }
            Step::Deadlock => deadlock = Some(sim.time()),
        }
    }
    Ok(Trace {
        seed,
        samples,
        jumps: sim.jumps(),
        deadlock,
        events,
    })
}

/// The system state at each of `times` (increasing) in one run.
pub fn simulate_states(s0: &System, ctx: &Context, times: &[f64], seed: u64) -> Result<Vec<System>, EngineError> {
    let mut sim = Simulator::new(s0.clone(), ctx.clone(), seed)?;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        loop {
            match sim.step(t)? {
                Step::Jumped { .. } => {}
                Step::Horizon | Step::Deadlock => break,
            }
        }
        out.push(sim.system().clone());
    }
    Ok(out)
}

/// Per-measure statistics over replications at each grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub grid: Vec<f64>,
    pub measures: Vec<String>,
    pub replications: usize,
    /// `[g][m]`
    pub mean: Vec<Vec<f64>>,
    /// Sample standard deviation (0 for a single replication).
    pub sd: Vec<Vec<f64>>,
    /// Half-width of the normal 95% confidence interval.
    pub ci: Vec<Vec<f64>>,
    /// Replications that ended in a deadlock.
    pub deadlocked: usize,
    /// `[g]`: replications deadlocked at or before grid point `g`.
    pub deadlocked_by: Vec<usize>,
}

impl Summary {
    pub fn from_traces(grid: &[f64], measures: &[Measure], traces: &[Trace]) -> Summary {
        let n = traces.len();
        let k = measures.len();
        let mut mean = vec![vec![0.0; k]; grid.len()];
        let mut sd = vec![vec![0.0; k]; grid.len()];
        let mut ci = vec![vec![0.0; k]; grid.len()];
        for g in 0..grid.len() {
            for m in 0..k {
                let xs: Vec<f64> = traces.iter().map(|t| t.samples[g][m]).collect();
                let mu = xs.iter().sum::<f64>() / n as f64;
                let s = if n > 1 {
                    (xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1) as f64).sqrt()
                } else {
                    0.0
                };
                mean[g][m] = mu;
                sd[g][m] = s;
                ci[g][m] = Z_95 * s / (n as f64).sqrt();
            }
        }
        Summary {
            grid: grid.to_vec(),
            measures: measures.iter().map(|m| m.name.clone()).collect(),
            replications: n,
            mean,
            sd,
            ci,
            deadlocked: traces.iter().filter(|t| t.deadlock.is_some()).count(),
            deadlocked_by: grid
                .iter()
                .map(|g| traces.iter().filter(|t| t.deadlock.is_some_and(|d| d <= *g)).count())
                .collect(),
        }
    }
}

/// `n_reps` runs with seeds `base_seed + r`, on at most `parallelism` threads.
/// Traces come back in replication order, so the summary does not depend on
/// the number of threads.
pub fn replicate(
    s0: &System,
    ctx: &Context,
    opts: &SimOptions,
    measures: &[Measure],
    base_seed: u64,
    n_reps: usize,
    parallelism: usize,
) -> Result<(Summary, Vec<Trace>), EngineError> {
    if n_reps == 0 {
        return Err(EngineError::InvalidArgument("at least one replication is needed".into()));
    }
    opts.validate()?;
    let run = |r: usize| simulate(s0, ctx, opts, measures, base_seed.wrapping_add(r as u64));
    let traces: Vec<Trace> = if parallelism <= 1 {
        (0..n_reps).map(run).collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallelism)
            .build()
            .map_err(|e| EngineError::InvalidArgument(e.to_string()))?;
        pool.install(|| (0..n_reps).into_par_iter().map(run).collect::<Result<_, _>>())?
    };
    Ok((Summary::from_traces(&opts.grid, measures, &traces), traces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Model;
    use crate::rates::RateConfig;
    use crate::semantics::Semantics;

    fn two_state(rate: f64) -> (System, Context) {
        let m = Model::from_source(
            "attributes n;\ninterface I { n = count(\"t\"); }\ncomponent c : I { knowledge = []; process = put(<\"t\">)@self.nil; }",
            Some(RateConfig::from_json(&format!("{{\"default_rate\": {rate}}}")).unwrap()),
        )
        .unwrap();
        let ctx = m.context(Semantics::ActOr);
        (m.initial, ctx)
    }

    #[test]
    fn two_state_probability() {
        let (s, ctx) = two_state(1.0);
        let measures = [Measure::parse("done=sum(n)").unwrap()];
        let opts = SimOptions {
            t_end: 1.0,
            grid: vec![1.0],
            record_jumps: false,
        };
        let (summary, traces) = replicate(&s, &ctx, &opts, &measures, 7, 10_000, 4).unwrap();
        let p = summary.mean[0][0];
        let exact = 1.0 - (-1.0f64).exp();
        let se = (exact * (1.0 - exact) / 10_000.0).sqrt();
        assert!((p - exact).abs() < 3.0 * se, "{p} vs {exact}");
        // the model deadlocks once the put has fired
        assert_eq!(summary.deadlocked, traces.iter().filter(|t| t.samples[0][0] == 1.0).count());
    }

    #[test]
    fn same_seed_same_trace() {
        let (s, ctx) = two_state(3.0);
        let mut opts = SimOptions::uniform(2.0, 10);
        opts.record_jumps = true;
        let measures = [Measure::parse("sum(n)").unwrap()];
        let a = simulate(&s, &ctx, &opts, &measures, 11).unwrap();
        let b = simulate(&s, &ctx, &opts, &measures, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.samples.len(), 11);
    }

    #[test]
    fn deadlock_keeps_measures_constant() {
        let (s, ctx) = two_state(50.0);
        let measures = [Measure::parse("sum(n)").unwrap()];
        let t = simulate(&s, &ctx, &SimOptions::uniform(10.0, 20), &measures, 1).unwrap();
        assert!(t.deadlock.is_some());
        assert!(t.samples[5..].iter().all(|x| x[0] == 1.0));
    }

    #[test]
    fn single_replication_has_zero_sd() {
        let (s, ctx) = two_state(1.0);
        let measures = [Measure::parse("sum(n)").unwrap()];
        let opts = SimOptions::uniform(1.0, 4);
        let (summary, traces) = replicate(&s, &ctx, &opts, &measures, 3, 1, 1).unwrap();
        assert!(summary.sd.iter().flatten().all(|x| *x == 0.0));
        assert_eq!(summary.mean, traces[0].samples);
    }

    #[test]
    fn parallelism_does_not_change_summary() {
        let (s, ctx) = two_state(1.0);
        let measures = [Measure::parse("sum(n)").unwrap()];
        let opts = SimOptions::uniform(2.0, 8);
        let a = replicate(&s, &ctx, &opts, &measures, 5, 64, 1).unwrap().0;
        let b = replicate(&s, &ctx, &opts, &measures, 5, 64, 8).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn ci_shrinks_with_more_replications() {
        let (s, ctx) = two_state(1.0);
        let measures = [Measure::parse("sum(n)").unwrap()];
        let opts = SimOptions {
            t_end: 1.0,
            grid: vec![1.0],
            record_jumps: false,
        };
        let a = replicate(&s, &ctx, &opts, &measures, 0, 100, 1).unwrap().0.ci[0][0];
        let b = replicate(&s, &ctx, &opts, &measures, 0, 400, 1).unwrap().0.ci[0][0];
        let ratio = a / b;
        assert!((1.6..2.4).contains(&ratio), "{ratio}");
    }
}
