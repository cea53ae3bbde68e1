//! Python bindings: `import stocs`.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use stocs_core::bikeshare::{self, BikeShareConfig, Regime};
use stocs_core::ctmc::{build_ctmc, Ctmc as CoreCtmc};
use stocs_core::error::{ConfigError, EngineError, EvalError, ModelError};
use stocs_core::measure::Measure;
use stocs_core::model::{LoadError, Model as CoreModel};
use stocs_core::rates::RateConfig;
use stocs_core::report;
use stocs_core::semantics::Semantics;
use stocs_core::sim::{replicate, SimOptions, Summary as CoreSummary};
use stocs_core::syntax::{check_model, parse_model};

create_exception!(stocs, StocsError, PyException);
create_exception!(stocs, ParseError, StocsError);
create_exception!(stocs, SemanticError, StocsError);
create_exception!(stocs, ConfigurationError, StocsError);
create_exception!(stocs, StateOverflowError, StocsError);

fn model_err(e: ModelError) -> PyErr {
    match e {
        ModelError::Parse(p) => ParseError::new_err(p.to_string()),
        ModelError::Config(c) => config_err(c),
        e => SemanticError::new_err(e.to_string()),
    }
}

fn config_err(e: ConfigError) -> PyErr {
    ConfigurationError::new_err(e.to_string())
}

fn engine_err(e: EngineError) -> PyErr {
    match e {
        EngineError::StateOverflow { .. } => StateOverflowError::new_err(e.to_string()),
        EngineError::Eval(e @ (EvalError::BadRate { .. } | EvalError::BadProbability { .. })) => {
            ConfigurationError::new_err(e.to_string())
        }
        EngineError::Eval(e) => SemanticError::new_err(e.to_string()),
        EngineError::InvalidArgument(m) => PyValueError::new_err(m),
    }
}

fn semantics(s: &str) -> PyResult<Semantics> {
    s.parse().map_err(PyValueError::new_err)
}

fn measures(specs: Vec<String>) -> PyResult<Vec<Measure>> {
    specs
        .iter()
        .map(|s| Measure::parse(s).map_err(|e| ParseError::new_err(format!("measure `{s}`: {e}"))))
        .collect()
}

/// A parsed, checked and instantiated model with its rate configuration.
#[pyclass(module = "stocs", frozen)]
struct Model {
    inner: CoreModel,
}

#[pymethods]
impl Model {
    /// Parses model source text; `config` is a rate configuration as JSON text.
    #[staticmethod]
    #[pyo3(signature = (text, config=None))]
    fn from_source(text: &str, config: Option<&str>) -> PyResult<Self> {
        let rates = config.map(RateConfig::from_json).transpose().map_err(config_err)?;
        let inner = CoreModel::from_source(text, rates).map_err(model_err)?;
        Ok(Model { inner })
    }

    /// Loads a `.stocs` file; `config` is a path that overrides the file's own declaration.
    #[staticmethod]
    #[pyo3(signature = (path, config=None))]
    fn load(path: PathBuf, config: Option<PathBuf>) -> PyResult<Self> {
        let inner = CoreModel::load(&path, config.as_deref()).map_err(|e| match e {
            LoadError::Io(..) => pyo3::exceptions::PyOSError::new_err(e.to_string()),
            LoadError::Model(m) => model_err(m),
        })?;
        Ok(Model { inner })
    }

    /// Names of the components of the initial state.
    #[getter]
    fn components(&self) -> Vec<String> {
        self.inner.initial.components().map(|c| c.name.clone()).collect()
    }

    /// The effective rate configuration as JSON text.
    #[getter]
    fn config(&self) -> String {
        self.inner.rates.to_json()
    }

    fn __len__(&self) -> usize {
        self.inner.initial.len()
    }

    fn __repr__(&self) -> String {
        format!("<stocs.Model with {} components>", self.inner.initial.len())
    }

    /// A copy of the model using another rate configuration (JSON text).
    fn with_config(&self, config: &str) -> PyResult<Self> {
        let rates = RateConfig::from_json(config).map_err(config_err)?;
        Ok(Model {
            inner: self.inner.with_rates(rates),
        })
    }

    /// Builds the reachable CTMC.
    #[pyo3(signature = (semantics="act-or", max_states=100_000))]
    fn states(&self, py: Python<'_>, semantics: &str, max_states: usize) -> PyResult<Ctmc> {
        let ctx = self.inner.context(self::semantics(semantics)?);
        let s0 = &self.inner.initial;
        let inner = py.detach(|| build_ctmc(s0, &ctx, max_states)).map_err(engine_err)?;
        Ok(Ctmc { inner })
    }

    /// Replicated simulation observed on `steps + 1` evenly spaced points.
    #[pyo3(signature = (t_end, measures=Vec::new(), replications=1, seed=0, steps=100, parallel=1, semantics="act-or"))]
    #[allow(clippy::too_many_arguments)]
    fn simulate(
        &self,
        py: Python<'_>,
        t_end: f64,
        measures: Vec<String>,
        replications: usize,
        seed: u64,
        steps: usize,
        parallel: usize,
        semantics: &str,
    ) -> PyResult<Summary> {
        let ms = self::measures(measures)?;
        let ctx = self.inner.context(self::semantics(semantics)?);
        let opts = SimOptions::uniform(t_end, steps);
        let s0 = &self.inner.initial;
        let (inner, _) = py
            .detach(|| replicate(s0, &ctx, &opts, &ms, seed, replications, parallel))
            .map_err(engine_err)?;
        Ok(Summary { inner })
    }
}

/// A finite continuous-time Markov chain; state 0 is the initial state.
#[pyclass(module = "stocs", frozen)]
struct Ctmc {
    inner: CoreCtmc,
}

#[pymethods]
impl Ctmc {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "<stocs.Ctmc with {} states and {} transitions>",
            self.inner.len(),
            self.inner.transition_count()
        )
    }

    #[getter]
    fn transition_count(&self) -> usize {
        self.inner.transition_count()
    }

    /// Printed form of every state, by index.
    fn states(&self) -> Vec<String> {
        self.inner.states.iter().map(ToString::to_string).collect()
    }

    /// `(source, target, rate, labels)` for every edge.
    fn transitions(&self) -> Vec<(usize, usize, f64, Vec<String>)> {
        self.inner
            .transitions
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |t| (i, t.target, t.rate, t.labels.clone())))
            .collect()
    }

    fn exit_rate(&self, state: usize) -> PyResult<f64> {
        if state >= self.inner.len() {
            return Err(PyValueError::new_err(format!("no state {state}")));
        }
        Ok(self.inner.exit_rate(state))
    }

    /// State probabilities at time `t`.
    #[pyo3(signature = (t, tol=1e-10))]
    fn transient(&self, py: Python<'_>, t: f64, tol: f64) -> PyResult<Vec<f64>> {
        py.detach(|| self.inner.transient(t, tol)).map_err(engine_err)
    }

    /// Expected value of a measure at time `t`.
    #[pyo3(signature = (measure, t, tol=1e-10))]
    fn expectation(&self, py: Python<'_>, measure: &str, t: f64, tol: f64) -> PyResult<f64> {
        let m = Measure::parse(measure).map_err(|e| ParseError::new_err(e.to_string()))?;
        let probs = py.detach(|| self.inner.transient(t, tol)).map_err(engine_err)?;
        Ok(self
            .inner
            .states
            .iter()
            .zip(&probs)
            .map(|(s, p)| p * m.evaluate_system(s))
            .sum())
    }

    fn states_csv(&self) -> String {
        report::states_csv(&self.inner)
    }

    fn transitions_csv(&self) -> String {
        report::transitions_csv(&self.inner)
    }
}

/// Per-measure mean, standard deviation and 95% half-width over replications.
#[pyclass(module = "stocs", frozen)]
struct Summary {
    inner: CoreSummary,
}

#[pymethods]
impl Summary {
    #[getter]
    fn grid(&self) -> Vec<f64> {
        self.inner.grid.clone()
    }

    #[getter]
    fn measures(&self) -> Vec<String> {
        self.inner.measures.clone()
    }

    #[getter]
    fn replications(&self) -> usize {
        self.inner.replications
    }

    #[getter]
    fn deadlocked(&self) -> usize {
        self.inner.deadlocked
    }

    /// `mean[g][m]`
    #[getter]
    fn mean(&self) -> Vec<Vec<f64>> {
        self.inner.mean.clone()
    }

    #[getter]
    fn sd(&self) -> Vec<Vec<f64>> {
        self.inner.sd.clone()
    }

    #[getter]
    fn ci(&self) -> Vec<Vec<f64>> {
        self.inner.ci.clone()
    }

    /// Mean of one measure along the grid.
    fn column(&self, name: &str) -> PyResult<Vec<f64>> {
        let m = self
            .inner
            .measures
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| PyValueError::new_err(format!("no measure `{name}`")))?;
        Ok(self.inner.mean.iter().map(|row| row[m]).collect())
    }

    fn csv(&self) -> String {
        report::summary_csv(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "<stocs.Summary {} measures x {} points, {} replications>",
            self.inner.measures.len(),
            self.inner.grid.len(),
            self.inner.replications
        )
    }
}

/// The bike-sharing scenario on a grid of stations.
#[pyclass(module = "stocs", frozen)]
struct BikeShare {
    cfg: BikeShareConfig,
}

fn regime(mode: &str) -> PyResult<Regime> {
    mode.parse().map_err(PyValueError::new_err)
}

#[pymethods]
impl BikeShare {
    #[new]
    #[pyo3(signature = (width=4, height=4, users=40, bikes=5, slots=5, mode="resource"))]
    fn new(width: usize, height: usize, users: usize, bikes: i64, slots: i64, mode: &str) -> PyResult<Self> {
        let cfg = BikeShareConfig::grid(width, height, users, bikes, slots, regime(mode)?);
        cfg.validate().map_err(config_err)?;
        Ok(BikeShare { cfg })
    }

    /// Loads a full scenario from JSON text.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let cfg: BikeShareConfig = serde_json::from_str(text).map_err(|e| ConfigurationError::new_err(e.to_string()))?;
        cfg.validate().map_err(config_err)?;
        Ok(BikeShare { cfg })
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.cfg).expect("serializable")
    }

    /// The same scenario under another reservation regime.
    fn with_mode(&self, mode: &str) -> PyResult<Self> {
        Ok(BikeShare {
            cfg: BikeShareConfig {
                regime: regime(mode)?,
                ..self.cfg.clone()
            },
        })
    }

    #[getter]
    fn mode(&self) -> String {
        self.cfg.regime.to_string()
    }

    #[getter]
    fn total_bikes(&self) -> i64 {
        self.cfg.bikes.iter().sum()
    }

    fn model_text(&self) -> String {
        self.cfg.model_text()
    }

    fn rate_config(&self) -> String {
        self.cfg.rate_config().to_json()
    }

    fn model(&self) -> PyResult<Model> {
        let (inner, _) = bikeshare::generate(&self.cfg).map_err(model_err)?;
        Ok(Model { inner })
    }

    /// Names of the imbalance measures: `bikes_<l>`, `mean_bikes`, `stddev_bikes`.
    fn measure_names(&self) -> Vec<String> {
        bikeshare::imbalance_measures(&self.cfg)
            .into_iter()
            .map(|m| m.name)
            .collect()
    }

    #[pyo3(signature = (t_end=100.0, replications=20, seed=0, steps=200, parallel=1))]
    fn simulate(
        &self,
        py: Python<'_>,
        t_end: f64,
        replications: usize,
        seed: u64,
        steps: usize,
        parallel: usize,
    ) -> PyResult<Summary> {
        let (model, _) = bikeshare::generate(&self.cfg).map_err(model_err)?;
        let ms = bikeshare::imbalance_measures(&self.cfg);
        let ctx = model.context(Semantics::ActOr);
        let opts = SimOptions::uniform(t_end, steps);
        let (inner, _) = py
            .detach(|| replicate(&model.initial, &ctx, &opts, &ms, seed, replications, parallel))
            .map_err(engine_err)?;
        Ok(Summary { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "<stocs.BikeShare {}x{} grid, {} users, {} bikes, {} regime>",
            self.cfg.width,
            self.cfg.height,
            self.cfg.total_users(),
            self.total_bikes(),
            self.cfg.regime
        )
    }
}

/// Static diagnostics for model source text, rendered as `line:col: severity: message`.
#[pyfunction]
fn check(text: &str) -> PyResult<Vec<String>> {
    let file = parse_model(text).map_err(|e| ParseError::new_err(e.to_string()))?;
    Ok(check_model(&file).iter().map(ToString::to_string).collect())
}

#[pymodule]
fn stocs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Model>()?;
    m.add_class::<Ctmc>()?;
    m.add_class::<Summary>()?;
    m.add_class::<BikeShare>()?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add("StocsError", py.get_type::<StocsError>())?;
    m.add("ParseError", py.get_type::<ParseError>())?;
    m.add("SemanticError", py.get_type::<SemanticError>())?;
    m.add("ConfigurationError", py.get_type::<ConfigurationError>())?;
    m.add("StateOverflowError", py.get_type::<StateOverflowError>())?;
    Ok(())
}
