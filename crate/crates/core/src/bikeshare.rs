//! Bike-sharing case study: users walking and riding over a grid of parking
//! stations, reserving bikes and slots from nearby stations.
//!
//! User knowledge is `<"state", s>` and `<"loc", l>`; station knowledge is a
//! single item `<"station", b_a, b_r, s_a, s_r, l>`. Locations are grid cells
//! numbered row by row. Station bookkeeping:
//!
//! ```text
//! get <"bike_res", ?ID>   b_a -1, b_r +1   (needs b_a > 0)
//! get <"bike">            b_r -1, s_a +1   (b_a -1 when nothing is reserved)
//! get <"slot_res", ?ID>   s_a -1, s_r +1   (needs s_a > 0)
//! put <"bike">            s_r -1, b_a +1   (s_a -1 when nothing is reserved)
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{ConfigError, ModelError};
use crate::futs::Distribution;
use crate::interface::Evaluation;
use crate::knowledge::{infer, match_template, ominus, oplus, Item, KnowledgeState, Repository, Template};
use crate::measure::{Measure, MeasureExpr};
use crate::model::Model;
use crate::rates::RateConfig;
use crate::semantics::process::head_action;
use crate::semantics::SystemLabel;
use crate::syntax::{parse_predicate, RepositoryDecl};
use crate::term::{ActionKind, DefinitionsTable, System};
use crate::value::Value;

const ROW_TOLERANCE: f64 = 1e-9;

fn tagged(tag: &str, rest: impl IntoIterator<Item = Value>) -> Item {
    let mut fields = vec![Value::str(tag)];
    fields.extend(rest);
    Item(fields)
}

fn check_stochastic(name: &str, m: &[Vec<f64>]) -> Result<(), String> {
    for (i, row) in m.iter().enumerate() {
        if row.len() != m.len() {
            return Err(format!("{name} is not square (row {i} has {} entries)", row.len()));
        }
        if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(format!("{name} row {i} has a negative or non-finite entry"));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > ROW_TOLERANCE {
            return Err(format!("{name} row {i} sums to {s}"));
        }
    }
    Ok(())
}

/// User repository: `get <"p_next", ?L>` / `get <"b_next", ?L>` move the user
/// according to the pedestrian / biker matrix; `put <"go", l>` moves to `l`;
/// `put <"b">` / `put <"p">` set the state.
#[derive(Clone, Debug)]
pub struct UserRepository {
    pub p_next: Vec<Vec<f64>>,
    pub b_next: Vec<Vec<f64>>,
}

impl UserRepository {
    pub fn new(p_next: Vec<Vec<f64>>, b_next: Vec<Vec<f64>>) -> Result<Self, String> {
        check_stochastic("p_next", &p_next)?;
        check_stochastic("b_next", &b_next)?;
        if p_next.len() != b_next.len() {
            return Err("p_next and b_next have different sizes".into());
        }
        Ok(UserRepository { p_next, b_next })
    }

    pub fn from_decl(decl: &RepositoryDecl) -> Result<Self, String> {
        let matrix = |key: &str| {
            decl.param(key)
                .ok_or_else(|| format!("missing parameter `{key}`"))?
                .as_matrix()
                .ok_or_else(|| format!("`{key}` must be a matrix of numbers"))
        };
        for (k, _) in &decl.params {
            if k != "p_next" && k != "b_next" {
                return Err(format!("unknown parameter `{k}`"));
            }
        }
        UserRepository::new(matrix("p_next")?, matrix("b_next")?)
    }
}

fn int_field(k: &KnowledgeState, tag: &str, index: usize) -> Option<i64> {
    k.unique_tagged(tag)?.0.get(index)?.as_int()
}

impl Repository for UserRepository {
    fn kind(&self) -> &str {
        "bikeshare_user"
    }

    fn add(&self, k: &KnowledgeState, item: &Item) -> Distribution<KnowledgeState> {
        let mut next = k.clone();
        match (item.tag(), item.0.len()) {
            (Some(s @ ("b" | "p")), 1) => next.set_tagged("state", tagged("state", [Value::str(s)])),
            (Some("go"), 2) => next.set_tagged("loc", tagged("loc", [item.0[1].clone()])),
            _ => return oplus(k, item),
        }
        Distribution::dirac(next)
    }

    fn withdraw(&self, k: &KnowledgeState, template: &Template) -> Option<Distribution<(KnowledgeState, Item)>> {
        let matrix = match (template.tag(), template.fields().len()) {
            (Some("p_next"), 2) => &self.p_next,
            (Some("b_next"), 2) => &self.b_next,
            _ => return ominus(k, template),
        };
        let tag = template.tag().expect("tagged");
        let here = usize::try_from(int_field(k, "loc", 1)?).ok()?;
        let row = matrix.get(here)?;
        let pairs = row.iter().enumerate().filter(|(_, q)| **q > 0.0).filter_map(|(j, q)| {
            let item = tagged(tag, [Value::Int(j as i64)]);
            match_template(template, &item)?;
            let mut next = k.clone();
            next.set_tagged("loc", tagged("loc", [Value::Int(j as i64)]));
            Some(((next, item), *q))
        });
        Distribution::normalized(pairs).ok()
    }

    fn infer(&self, k: &KnowledgeState, template: &Template) -> Option<Distribution<Item>> {
        infer(k, template)
    }
}

/// Station counters `<b_a, b_r, s_a, s_r, l>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StationKnowledge {
    pub bikes: i64,
    pub bikes_reserved: i64,
    pub slots: i64,
    pub slots_reserved: i64,
    pub loc: i64,
}

impl StationKnowledge {
    pub fn read(k: &KnowledgeState) -> Option<Self> {
        let f = |i| int_field(k, "station", i);
        Some(StationKnowledge {
            bikes: f(1)?,
            bikes_reserved: f(2)?,
            slots: f(3)?,
            slots_reserved: f(4)?,
            loc: f(5)?,
        })
    }

    pub fn item(&self) -> Item {
        tagged(
            "station",
            [
                self.bikes,
                self.bikes_reserved,
                self.slots,
                self.slots_reserved,
                self.loc,
            ]
            .map(Value::Int),
        )
    }

    fn write(&self, k: &KnowledgeState) -> KnowledgeState {
        let mut next = k.clone();
        next.set_tagged("station", self.item());
        next
    }
}

/// Station repository implementing reservations and bike counts.
#[derive(Clone, Copy, Debug, Default)]
pub struct StationRepository;

impl Repository for StationRepository {
    fn kind(&self) -> &str {
        "bikeshare_station"
    }

    fn add(&self, k: &KnowledgeState, item: &Item) -> Distribution<KnowledgeState> {
        match (item.tag(), item.0.len(), StationKnowledge::read(k)) {
            (Some("bike"), 1, Some(mut s)) => {
                if s.slots_reserved > 0 {
                    s.slots_reserved -= 1;
                } else if s.slots > 0 {
                    s.slots -= 1;
                }
                s.bikes += 1;
                Distribution::dirac(s.write(k))
            }
            _ => oplus(k, item),
        }
    }

    fn withdraw(&self, k: &KnowledgeState, template: &Template) -> Option<Distribution<(KnowledgeState, Item)>> {
        let Some(mut s) = StationKnowledge::read(k) else {
            return ominus(k, template);
        };
        let item = match (template.tag(), template.fields().len()) {
            (Some(tag @ "bike_res"), 2) => {
                if s.bikes == 0 {
                    return None;
                }
                s.bikes -= 1;
                s.bikes_reserved += 1;
                tagged(tag, [Value::Int(s.loc)])
            }
            (Some(tag @ "slot_res"), 2) => {
                if s.slots == 0 {
                    return None;
                }
                s.slots -= 1;
                s.slots_reserved += 1;
                tagged(tag, [Value::Int(s.loc)])
            }
            (Some("bike"), 1) => {
                if s.bikes_reserved > 0 {
                    s.bikes_reserved -= 1;
                } else if s.bikes > 0 {
                    s.bikes -= 1;
                } else {
                    return None;
                }
                s.slots += 1;
                tagged("bike", [])
            }
            _ => return ominus(k, template),
        };
        match_template(template, &item)?;
        Some(Distribution::dirac((s.write(k), item)))
    }

    fn infer(&self, k: &KnowledgeState, template: &Template) -> Option<Distribution<Item>> {
        infer(k, template)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Reservation rate proportional to the available bikes or slots.
    #[default]
    Resource,
    /// Reservation rate independent of availability.
    Constant,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Resource => "resource",
            Regime::Constant => "constant",
        })
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "resource" => Ok(Regime::Resource),
            "constant" => Ok(Regime::Constant),
            _ => Err(format!("unknown mode `{s}` (expected resource or constant)")),
        }
    }
}

/// Rate coefficients. These are modelling choices, not measured values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Coefficients {
    /// `get <"p_next", ?L>`
    pub walk: f64,
    /// `get <"b_next", ?L>`
    pub ride: f64,
    /// `qry <"loc", ?L>`
    pub locate: f64,
    /// Resource regime: rate per available bike or slot.
    pub reserve_per_unit: f64,
    /// Constant regime: rate of a reservation at a station with availability.
    pub reserve_constant: f64,
    /// `put <"go", ID>` runs at `travel / (1 + distance)`.
    pub travel: f64,
    pub pickup: f64,
    pub dropoff: f64,
    /// `put <"b">` and `put <"p">`.
    pub switch: f64,
}

impl Default for Coefficients {
    fn default() -> Self {
        Coefficients {
            walk: 1.0,
            ride: 2.0,
            locate: 10.0,
            reserve_per_unit: 1.0,
            reserve_constant: 5.0,
            travel: 2.0,
            pickup: 10.0,
            dropoff: 10.0,
            switch: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BikeShareConfig {
    pub width: usize,
    pub height: usize,
    /// Initial pedestrians per location.
    pub users: Vec<usize>,
    pub bikes: Vec<i64>,
    pub slots: Vec<i64>,
    pub q_p: Vec<Vec<f64>>,
    pub q_b: Vec<Vec<f64>>,
    /// Stations within this Manhattan distance of a user are near it.
    pub near_radius: i64,
    pub regime: Regime,
    pub coefficients: Coefficients,
}

/// Manhattan distance between two row-major grid cells.
pub fn grid_distance(a: usize, b: usize, width: usize) -> usize {
    (a / width).abs_diff(b / width) + (a % width).abs_diff(b % width)
}

/// Row-stochastic matrix, uniform over the cells within `radius` of each cell.
pub fn uniform_neighbourhood(width: usize, height: usize, radius: usize) -> Vec<Vec<f64>> {
    let m = width * height;
    (0..m)
        .map(|i| {
            let near: Vec<usize> = (0..m).filter(|&j| grid_distance(i, j, width) <= radius).collect();
            let p = 1.0 / near.len() as f64;
            (0..m).map(|j| if near.contains(&j) { p } else { 0.0 }).collect()
        })
        .collect()
}

impl BikeShareConfig {
    /// A `width x height` grid with one station per cell, users spread evenly
    /// (earlier cells get the remainder), pedestrians moving uniformly within
    /// distance 1 and bikers within distance 2.
    pub fn grid(width: usize, height: usize, users: usize, bikes: i64, slots: i64, regime: Regime) -> Self {
        let m = width * height;
        BikeShareConfig {
            width,
            height,
            users: (0..m).map(|i| users / m + usize::from(i < users % m)).collect(),
            bikes: vec![bikes; m],
            slots: vec![slots; m],
            q_p: uniform_neighbourhood(width, height, 1),
            q_b: uniform_neighbourhood(width, height, 2),
            near_radius: 1,
            regime,
            coefficients: Coefficients::default(),
        }
    }

    /// 4x4 grid, 40 users, 5 bikes and 5 free slots per station.
    pub fn reference_scale(regime: Regime) -> Self {
        Self::grid(4, 4, 40, 5, 5, regime)
    }

    pub fn locations(&self) -> usize {
        self.width * self.height
    }

    pub fn total_users(&self) -> usize {
        self.users.iter().sum()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let m = self.locations();
        if m == 0 {
            return bad("grid has no locations".into());
        }
        for (name, len) in [
            ("users", self.users.len()),
            ("bikes", self.bikes.len()),
            ("slots", self.slots.len()),
        ] {
            if len != m {
                return bad(format!("{name} has {len} entries for {m} locations"));
            }
        }
        if self.bikes.iter().chain(&self.slots).any(|x| *x < 0) {
            return bad("negative bike or slot count".into());
        }
        for (name, q) in [("q_p", &self.q_p), ("q_b", &self.q_b)] {
            if q.len() != m {
                return bad(format!("{name} has {} rows for {m} locations", q.len()));
            }
            check_stochastic(name, q).map_err(ConfigError::Invalid)?;
        }
        if self.near_radius < 0 {
            return bad("near_radius must be non-negative".into());
        }
        let c = &self.coefficients;
        for (name, v) in [
            ("walk", c.walk),
            ("ride", c.ride),
            ("locate", c.locate),
            ("reserve_per_unit", c.reserve_per_unit),
            ("reserve_constant", c.reserve_constant),
            ("travel", c.travel),
            ("pickup", c.pickup),
            ("dropoff", c.dropoff),
            ("switch", c.switch),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("coefficient {name} = {v} must be non-negative"));
            }
        }
        Ok(())
    }

    /// `near(L)`: a station within `near_radius` grid steps of cell `L`.
    pub fn near_predicate(&self, var: &str) -> String {
        let w = self.width;
        let dr = format!("(loc / {w} - {var} / {w})");
        let dc = format!("(loc % {w} - {var} % {w})");
        if self.near_radius <= 1 {
            // squared distance <= 1 is the same as Manhattan distance <= 1 on integers
            format!(
                "role == \"station\" && {dr} * {dr} + {dc} * {dc} <= {}",
                self.near_radius
            )
        } else {
            let r = self.near_radius;
            let mut cases = Vec::new();
            for a in -r..=r {
                let b = r - a.abs();
                cases.push(format!("({dr} == {a} && {dc} >= -{b} && {dc} <= {b})"));
            }
            format!("role == \"station\" && ({})", cases.join(" || "))
        }
    }

    /// The model source.
    pub fn model_text(&self) -> String {
        let mut out = String::new();
        let near = self.near_predicate("L");
        out.push_str("attributes role, state, loc, bikes, bikes_reserved, slots, slots_reserved;\n\n");
        out.push_str("proc Pedestrian = get(<\"p_next\", ?L>)@self.Borrow;\n");
        out.push_str("proc Biker = get(<\"b_next\", ?L>)@self.Return;\n");
        out.push_str(&format!(
            "proc Borrow = qry(<\"loc\", ?L>)@self.get(<\"bike_res\", ?ID>)@({near})\n  .put(<\"go\", ID>)@self.get(<\"bike\">)@(role == \"station\" && loc == ID)\n  .put(<\"b\">)@self.Biker;\n"
        ));
        out.push_str(&format!(
            "proc Return = qry(<\"loc\", ?L>)@self.get(<\"slot_res\", ?ID>)@({near})\n  .put(<\"go\", ID>)@self.put(<\"bike\">)@(role == \"station\" && loc == ID)\n  .put(<\"p\">)@self.Pedestrian;\n\n"
        ));
        out.push_str(
            "interface User { role = \"user\"; state = field(\"state\", 1); loc = field(\"loc\", 1); }\n\
             interface Station {\n  role = \"station\";\n  bikes = field(\"station\", 1);\n  bikes_reserved = field(\"station\", 2);\n  slots = field(\"station\", 3);\n  slots_reserved = field(\"station\", 4);\n  loc = field(\"station\", 5);\n}\n\n",
        );
        out.push_str(&format!(
            "repository Moves : bikeshare_user {{\n  p_next = {};\n  b_next = {};\n}}\nrepository Dock : bikeshare_station;\n\n",
            matrix_text(&self.q_p),
            matrix_text(&self.q_b)
        ));
        for l in 0..self.locations() {
            if self.users[l] > 0 {
                out.push_str(&format!(
                    "component user_{l} : User {{ repository = Moves; knowledge = [<\"state\", \"p\">, <\"loc\", {l}>]; process = Pedestrian; replicate = {}; }}\n",
                    self.users[l]
                ));
            }
            out.push_str(&format!(
                "component station_{l} : Station {{ repository = Dock; knowledge = [<\"station\", {}, 0, {}, 0, {l}>]; process = nil; }}\n",
                self.bikes[l], self.slots[l]
            ));
        }
        out
    }

    /// The rate configuration for the selected regime.
    pub fn rate_config(&self) -> RateConfig {
        let c = &self.coefficients;
        let (bike_res, slot_res) = match self.regime {
            Regime::Resource => (
                json!(format!("{:?} * dst.bikes", c.reserve_per_unit)),
                json!(format!("{:?} * dst.slots", c.reserve_per_unit)),
            ),
            Regime::Constant => (json!(c.reserve_constant), json!(c.reserve_constant)),
        };
        let spec = json!({
            "default_rate": 1.0,
            "grid_width": self.width,
            "rates": [
                {"kind": "get", "target": "self", "tag": "p_next", "rate": c.walk},
                {"kind": "get", "target": "self", "tag": "b_next", "rate": c.ride},
                {"kind": "qry", "target": "self", "tag": "loc", "rate": c.locate},
                {"kind": "get", "tag": "bike_res", "rate": bike_res},
                {"kind": "get", "tag": "slot_res", "rate": slot_res},
                {"kind": "put", "tag": "go", "rate": format!("{:?} / (1 + distance(src.loc, item.1))", c.travel)},
                {"kind": "get", "tag": "bike", "rate": c.pickup},
                {"kind": "put", "tag": "bike", "rate": c.dropoff},
                {"kind": "put", "tag": "b", "rate": c.switch},
                {"kind": "put", "tag": "p", "rate": c.switch}
            ]
        });
        RateConfig::from_json(&spec.to_string()).expect("generated configuration is valid")
    }
}

fn matrix_text(m: &[Vec<f64>]) -> String {
    let rows: Vec<String> = m
        .iter()
        .map(|r| {
            let xs: Vec<String> = r.iter().map(|x| format!("{x:?}")).collect();
            format!("[{}]", xs.join(", "))
        })
        .collect();
    format!("[\n    {}\n  ]", rows.join(",\n    "))
}

/// The model and its rate configuration.
pub fn generate(cfg: &BikeShareConfig) -> Result<(Model, RateConfig), ModelError> {
    cfg.validate()?;
    let rates = cfg.rate_config();
    let model = Model::from_source(&cfg.model_text(), Some(rates.clone()))?;
    Ok((model, rates))
}

/// Reservation rate of a station: `c * b_a` (resp. `s_a`) under the resource
/// regime, `c` when something is available under the constant regime, and 0
/// when nothing is available.
pub fn station_rate(regime: Regime, coefficients: &Coefficients, tag: &str, station: &Evaluation) -> f64 {
    let attr = match tag {
        "bike_res" => "bikes",
        "slot_res" => "slots",
        _ => return 0.0,
    };
    let available = station.get(attr).and_then(Value::as_f64).unwrap_or(0.0);
    if available <= 0.0 {
        return 0.0;
    }
    match regime {
        Regime::Resource => coefficients.reserve_per_unit * available,
        Regime::Constant => coefficients.reserve_constant,
    }
}

const STATION: &str = "role == \"station\"";

/// Available bikes per station, their mean and their standard deviation across stations.
pub fn imbalance_measures(cfg: &BikeShareConfig) -> Vec<Measure> {
    let station = parse_predicate(STATION).expect("valid predicate");
    let mut out: Vec<Measure> = (0..cfg.locations())
        .map(|l| {
            Measure::new(
                format!("bikes_{l}"),
                MeasureExpr::Attr {
                    component: format!("station_{l}"),
                    attr: "bikes".into(),
                },
            )
        })
        .collect();
    out.push(Measure::new(
        "mean_bikes",
        MeasureExpr::Mean {
            attr: "bikes".into(),
            filter: station.clone(),
        },
    ));
    out.push(Measure::new(
        "stddev_bikes",
        MeasureExpr::StdDev {
            attr: "bikes".into(),
            filter: station,
        },
    ));
    out
}

/// Whether a user currently holds a bike. Between taking a bike and
/// `put <"b">` (and between returning it and `put <"p">`) the state item
/// lags behind, so the next action decides.
pub fn is_carrying(state: Option<&str>, process: &crate::term::Process, defs: &DefinitionsTable) -> bool {
    if let Some(a) = head_action(process, defs) {
        if a.kind == ActionKind::Put {
            match a.payload.to_item().as_ref().and_then(|i| i.tag().map(str::to_owned)).as_deref() {
                Some("b") if a.payload.0.len() == 1 => return true,
                Some("p") if a.payload.0.len() == 1 => return false,
                _ => {}
            }
        }
    }
    state == Some("b")
}

/// Bikes parked or reserved at stations plus bikes held by users.
pub fn total_bikes(s: &System, defs: &DefinitionsTable) -> i64 {
    let mut total = 0;
    for c in s.components() {
        if let Some(st) = StationKnowledge::read(&c.knowledge) {
            total += st.bikes + st.bikes_reserved;
        } else if let Some(state) = c.knowledge.unique_tagged("state") {
            if is_carrying(state.0.get(1).and_then(Value::as_str), &c.process, defs) {
                total += 1;
            }
        }
    }
    total
}

/// Bike or slot reservation.
pub fn is_reservation(label: &SystemLabel) -> bool {
    matches!(label, SystemLabel::SyncGq { template, .. } if matches!(template.tag(), Some("bike_res" | "slot_res")))
}
