//! DEVStone: the instrumented atomic model and the LI, HI, HO, HOmod and
//! HOmem topology builders.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dhrystone;
use crate::model::{
    AtomicBehavior, AtomicModel, CoupledModel, InputBags, ModelError, OutputBags, Time, Token,
};
use crate::sim::InjectionSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "LI")]
    Li,
    #[serde(rename = "HI")]
    Hi,
    #[serde(rename = "HO")]
    Ho,
    #[serde(rename = "HOmod")]
    HoMod,
    #[serde(rename = "HOmem")]
    HoMem,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Li,
        Family::Hi,
        Family::Ho,
        Family::HoMod,
        Family::HoMem,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Li => "LI",
            Family::Hi => "HI",
            Family::Ho => "HO",
            Family::HoMod => "HOmod",
            Family::HoMem => "HOmem",
        }
    }

    /// Root input ports; injections go to all of them.
    pub fn input_ports(self) -> &'static [&'static str] {
        match self {
            Family::Li | Family::Hi => &["in"],
            Family::Ho | Family::HoMod | Family::HoMem => &["in1", "in2"],
        }
    }

    fn output_ports(self) -> &'static [&'static str] {
        match self {
            Family::Li | Family::Hi => &["out"],
            Family::Ho => &["out1", "out2"],
            Family::HoMod | Family::HoMem => &["out"],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| SpecError::UnknownFamily(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("unknown DEVStone family `{0}`")]
    UnknownFamily(String),
    #[error("width must be at least 2 (got {0})")]
    Width(u32),
    #[error("depth must be at least 1 (got {0})")]
    Depth(u32),
    #[error("transition delays must be finite and non-negative")]
    Delay,
    #[error("at least one event must be injected")]
    Events,
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Parameters of one DEVStone benchmark instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub family: Family,
    pub width: u32,
    pub depth: u32,
    /// CPU seconds burned by every internal transition.
    pub int_delay: f64,
    /// CPU seconds burned by every external transition.
    pub ext_delay: f64,
    pub n_events: u32,
}

impl BenchmarkSpec {
    pub fn new(family: Family, width: u32, depth: u32) -> Self {
        BenchmarkSpec {
            family,
            width,
            depth,
            int_delay: 0.0,
            ext_delay: 0.0,
            n_events: 1,
        }
    }

    pub fn with_delays(mut self, int_delay: f64, ext_delay: f64) -> Self {
        self.int_delay = int_delay;
        self.ext_delay = ext_delay;
        self
    }

    pub fn with_events(mut self, n: u32) -> Self {
        self.n_events = n;
        self
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.width < 2 {
            return Err(SpecError::Width(self.width));
        }
        if self.depth < 1 {
            return Err(SpecError::Depth(self.depth));
        }
        let ok = |d: f64| d.is_finite() && d >= 0.0;
        if !ok(self.int_delay) || !ok(self.ext_delay) {
            return Err(SpecError::Delay);
        }
        if self.n_events < 1 {
            return Err(SpecError::Events);
        }
        Ok(())
    }
}

/// Counter snapshot: internal transitions, external transitions and
/// events received.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Counts {
    pub delta_int: u64,
    pub delta_ext: u64,
    pub events: u64,
}

/// Tally shared by every atomic of one simulation.
#[derive(Debug, Default)]
pub struct TransitionCounters {
    delta_int: AtomicU64,
    delta_ext: AtomicU64,
    events: AtomicU64,
}

impl TransitionCounters {
    pub fn new() -> Arc<Self> {
        Arc::default()
    }

    pub fn snapshot(&self) -> Counts {
        Counts {
            delta_int: self.delta_int.load(Ordering::Relaxed),
            delta_ext: self.delta_ext.load(Ordering::Relaxed),
            events: self.events.load(Ordering::Relaxed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Passive,
    Active,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DevstoneState {
    pub list: Vec<Token>,
    pub phase: Phase,
    pub sigma: Time,
}

/// The DEVStone atomic model.
#[derive(Debug, Clone)]
pub struct DevstoneAtomic {
    state: DevstoneState,
    int_delay: f64,
    ext_delay: f64,
    counters: Arc<TransitionCounters>,
}

impl DevstoneAtomic {
    pub const IN: &'static str = "in";
    pub const OUT: &'static str = "out";

    pub fn new(int_delay: f64, ext_delay: f64, counters: Arc<TransitionCounters>) -> Self {
        let mut a = DevstoneAtomic {
            state: DevstoneState {
                list: Vec::new(),
                phase: Phase::Passive,
                sigma: Time::INFINITY,
            },
            int_delay,
            ext_delay,
            counters,
        };
        a.init();
        a
    }

    pub fn state(&self) -> &DevstoneState {
        &self.state
    }

    /// Wraps the behavior into an atomic model with ports `in` and `out`.
    pub fn into_model(self, name: impl Into<String>) -> AtomicModel {
        AtomicModel::new(name, &[Self::IN], &[Self::OUT], self).expect("distinct port names")
    }
}

impl AtomicBehavior for DevstoneAtomic {
    fn init(&mut self) {
        self.state.list.clear();
        self.state.phase = Phase::Passive;
        self.state.sigma = Time::INFINITY;
    }

    fn delta_int(&mut self) {
        self.counters.delta_int.fetch_add(1, Ordering::Relaxed);
        dhrystone::burn(self.int_delay);
        self.state.list.clear();
        self.state.sigma = Time::INFINITY;
    }

    fn delta_ext(&mut self, _elapsed: Time, inputs: &InputBags<'_>) {
        self.counters.delta_ext.fetch_add(1, Ordering::Relaxed);
        dhrystone::burn(self.ext_delay);
        let values = inputs.get(Self::IN);
        self.counters
            .events
            .fetch_add(values.len() as u64, Ordering::Relaxed);
        self.state.list.extend_from_slice(values);
        self.state.phase = Phase::Active;
        self.state.sigma = 0.0;
    }

    fn lambda(&self, outputs: &mut OutputBags<'_>) {
        outputs.send_all(Self::OUT, &self.state.list);
    }

    fn ta(&self) -> Time {
        self.state.sigma
    }
}

/// A built benchmark: the root model and its shared counters.
pub struct DevstoneModel {
    pub root: CoupledModel,
    pub counters: Arc<TransitionCounters>,
}

/// Builds the root coupled model for `spec` with a fresh counter tally.
pub fn build(spec: &BenchmarkSpec) -> Result<DevstoneModel, BuildError> {
    let counters = TransitionCounters::new();
    let root = build_with_counters(spec, counters.clone())?;
    Ok(DevstoneModel { root, counters })
}

pub fn build_with_counters(
    spec: &BenchmarkSpec,
    counters: Arc<TransitionCounters>,
) -> Result<CoupledModel, BuildError> {
    spec.validate()?;
    let b = Builder { spec, counters };
    let mut model = b.deepest()?;
    for level in (1..spec.depth).rev() {
        model = b.regular(level, model)?;
    }
    Ok(model)
}

fn coupled_name(level: u32) -> String {
    format!("coupled_{level}")
}

struct Builder<'a> {
    spec: &'a BenchmarkSpec,
    counters: Arc<TransitionCounters>,
}

impl Builder<'_> {
    fn atomic(&self, name: String) -> AtomicModel {
        DevstoneAtomic::new(
            self.spec.int_delay,
            self.spec.ext_delay,
            self.counters.clone(),
        )
        .into_model(name)
    }

    fn shell(&self, level: u32) -> Result<CoupledModel, ModelError> {
        let family = self.spec.family;
        CoupledModel::with_ports(
            coupled_name(level),
            family.input_ports(),
            family.output_ports(),
        )
    }

    /// Deepest level: one atomic between the first input and first output.
    fn deepest(&self) -> Result<CoupledModel, ModelError> {
        let level = self.spec.depth;
        let family = self.spec.family;
        let mut m = self.shell(level)?;
        let name = format!("atomic_{level}_1");
        m.add_component(self.atomic(name.clone()))?;
        m.connect(
            (None, family.input_ports()[0]),
            (Some(&name), DevstoneAtomic::IN),
        )?;
        m.connect(
            (Some(&name), DevstoneAtomic::OUT),
            (None, family.output_ports()[0]),
        )?;
        Ok(m)
    }

    fn regular(&self, level: u32, child: CoupledModel) -> Result<CoupledModel, ModelError> {
        let w = self.spec.width as usize;
        let child_name = child.name().to_string();
        let mut m = self.shell(level)?;
        m.add_component(child)?;
        let child = Some(child_name.as_str());
        let (i, o) = (DevstoneAtomic::IN, DevstoneAtomic::OUT);
        match self.spec.family {
            Family::Li | Family::Hi => {
                let names = self.add_row(&mut m, level, None, w - 1)?;
                m.connect((None, "in"), (child, "in"))?;
                for a in &names {
                    m.connect((None, "in"), (Some(a), i))?;
                }
                if self.spec.family == Family::Hi {
                    chain(&mut m, &names)?;
                }
                m.connect((child, "out"), (None, "out"))?;
            }
            Family::Ho => {
                let names = self.add_row(&mut m, level, None, w - 1)?;
                m.connect((None, "in1"), (child, "in1"))?;
                m.connect((None, "in2"), (child, "in2"))?;
                for a in &names {
                    m.connect((None, "in2"), (Some(a), i))?;
                }
                chain(&mut m, &names)?;
                m.connect((child, "out1"), (None, "out1"))?;
                for a in &names {
                    m.connect((Some(a), o), (None, "out2"))?;
                }
            }
            Family::HoMod => {
                // row 1 has w-1 atomics; row k (2..=w) has w-k+1
                let rows: Vec<Vec<String>> = (1..=w)
                    .map(|k| {
                        let len = if k == 1 { w - 1 } else { w - k + 1 };
                        self.add_row(&mut m, level, Some(k), len)
                    })
                    .collect::<Result<_, _>>()?;
                m.connect((None, "in1"), (child, "in1"))?;
                for a in &rows[0] {
                    m.connect((None, "in2"), (Some(a), i))?;
                }
                for row in &rows[1..] {
                    m.connect((None, "in2"), (Some(&row[0]), i))?;
                }
                for src in &rows[1] {
                    for dst in &rows[0] {
                        m.connect((Some(src), o), (Some(dst), i))?;
                    }
                }
                // rows are right-aligned: row k atomic j sits under row k-1 atomic j+1
                for k in 2..rows.len() {
                    for (j, src) in rows[k].iter().enumerate() {
                        m.connect((Some(src), o), (Some(&rows[k - 1][j + 1]), i))?;
                    }
                }
                for a in &rows[0] {
                    m.connect((Some(a), o), (child, "in2"))?;
                }
                m.connect((child, "out"), (None, "out"))?;
            }
            Family::HoMem => {
                let first = self.add_row(&mut m, level, Some(1), w - 1)?;
                let second = self.add_row(&mut m, level, Some(2), w - 1)?;
                m.connect((None, "in1"), (child, "in1"))?;
                for a in &second {
                    m.connect((None, "in2"), (Some(a), i))?;
                }
                for src in &second {
                    for dst in &first {
                        m.connect((Some(src), o), (Some(dst), i))?;
                    }
                }
                for a in &first {
                    m.connect((Some(a), o), (child, "in2"))?;
                }
                m.connect((child, "out"), (None, "out"))?;
            }
        }
        Ok(m)
    }

    fn add_row(
        &self,
        m: &mut CoupledModel,
        level: u32,
        row: Option<usize>,
        len: usize,
    ) -> Result<Vec<String>, ModelError> {
        let mut names = Vec::with_capacity(len);
        for j in 1..=len {
            let name = match row {
                Some(r) => format!("atomic_{level}_{r}_{j}"),
                None => format!("atomic_{level}_{j}"),
            };
            m.add_component(self.atomic(name.clone()))?;
            names.push(name);
        }
        Ok(names)
    }
}

fn chain(m: &mut CoupledModel, names: &[String]) -> Result<(), ModelError> {
    for pair in names.windows(2) {
        m.connect(
            (Some(&pair[0]), DevstoneAtomic::OUT),
            (Some(&pair[1]), DevstoneAtomic::IN),
        )?;
    }
    Ok(())
}

/// `n_events` injections at t = 0, 1, ..., each delivered to every root
/// input port of the family.
pub fn injection_schedule(spec: &BenchmarkSpec) -> InjectionSchedule {
    let mut schedule = InjectionSchedule::new();
    for k in 0..spec.n_events {
        for port in spec.family.input_ports() {
            schedule
                .push(k as Time, *port, Token::from(k))
                .expect("times are increasing");
        }
    }
    schedule
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Component, CouplingClass, Endpoint};

    fn bag(values: &[Token]) -> (Vec<String>, Vec<Vec<Token>>) {
        (vec!["in".to_string()], vec![values.to_vec()])
    }

    #[test]
    fn init_is_passive() {
        let a = DevstoneAtomic::new(0.0, 0.0, TransitionCounters::new());
        assert!(a.state().list.is_empty());
        assert_eq!(a.ta(), Time::INFINITY);
        assert_eq!(a.state().phase, Phase::Passive);
    }

    #[test]
    fn external_transition_appends_whole_bag() {
        let counters = TransitionCounters::new();
        let mut a = DevstoneAtomic::new(0.0, 0.0, counters.clone());
        let (ports, bags) = bag(&[7, 8, 9]);
        a.delta_ext(0.0, &InputBags::new(&ports, &bags));
        assert_eq!(a.state().list, [7, 8, 9]);
        assert_eq!(a.ta(), 0.0);
        assert_eq!(a.state().phase, Phase::Active);
        assert_eq!(
            counters.snapshot(),
            Counts {
                delta_int: 0,
                delta_ext: 1,
                events: 3
            }
        );
    }

    #[test]
    fn internal_transition_clears_and_passivates() {
        let counters = TransitionCounters::new();
        let mut a = DevstoneAtomic::new(0.0, 0.0, counters.clone());
        let (ports, bags) = bag(&[1, 2]);
        a.delta_ext(0.0, &InputBags::new(&ports, &bags));
        a.delta_int();
        assert!(a.state().list.is_empty());
        assert_eq!(a.ta(), Time::INFINITY);
        assert_eq!(counters.snapshot().delta_int, 1);
    }

    #[test]
    fn confluent_equals_external_after_internal() {
        let counters = TransitionCounters::new();
        let mut a = DevstoneAtomic::new(0.0, 0.0, counters.clone());
        let (ports, first) = bag(&[1]);
        a.delta_ext(0.0, &InputBags::new(&ports, &first));
        let mut composed = a.clone();
        let (_, second) = bag(&[42]);
        let before = counters.snapshot();
        a.delta_con(&InputBags::new(&ports, &second));
        let after = counters.snapshot();
        assert_eq!(after.delta_int - before.delta_int, 1);
        assert_eq!(after.delta_ext - before.delta_ext, 1);
        assert_eq!(after.events - before.events, 1);
        assert_eq!(a.state().list, [42]);

        composed.delta_int();
        composed.delta_ext(0.0, &InputBags::new(&ports, &second));
        assert_eq!(a.state(), composed.state());
    }

    #[test]
    fn lambda_sends_the_list() {
        let mut a = DevstoneAtomic::new(0.0, 0.0, TransitionCounters::new());
        let (ports, bags) = bag(&[3, 4]);
        a.delta_ext(0.0, &InputBags::new(&ports, &bags));
        let out_ports = vec!["out".to_string()];
        let mut out = vec![Vec::new()];
        a.lambda(&mut OutputBags::new(&out_ports, &mut out));
        assert_eq!(out[0], [3, 4]);
    }

    #[test]
    fn spec_validation() {
        assert!(BenchmarkSpec::new(Family::Li, 2, 1).validate().is_ok());
        assert_eq!(
            BenchmarkSpec::new(Family::HoMod, 1, 3).validate(),
            Err(SpecError::Width(1))
        );
        assert_eq!(
            BenchmarkSpec::new(Family::Li, 3, 0).validate(),
            Err(SpecError::Depth(0))
        );
        assert_eq!(
            BenchmarkSpec::new(Family::Li, 3, 2)
                .with_delays(-1.0, 0.0)
                .validate(),
            Err(SpecError::Delay)
        );
        assert_eq!(
            BenchmarkSpec::new(Family::Li, 3, 2)
                .with_events(0)
                .validate(),
            Err(SpecError::Events)
        );
        assert!(build(&BenchmarkSpec::new(Family::Li, 1, 1)).is_err());
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.as_str().parse::<Family>().unwrap(), f);
        }
        assert_eq!("homod".parse::<Family>().unwrap(), Family::HoMod);
        assert!("XX".parse::<Family>().is_err());
    }

    #[test]
    fn atomic_counts_by_tree_walk() {
        let count = |f, w, d| {
            build(&BenchmarkSpec::new(f, w, d))
                .unwrap()
                .root
                .atomic_count()
        };
        assert_eq!(count(Family::Li, 2, 1), 1);
        assert_eq!(count(Family::Li, 4, 3), 7);
        assert_eq!(count(Family::HoMod, 3, 2), 6);
        assert_eq!(count(Family::HoMem, 3, 2), 5);
        for f in Family::ALL {
            assert_eq!(count(f, 5, 1), 1);
        }
    }

    #[test]
    fn built_models_validate() {
        for f in Family::ALL {
            for (w, d) in [(2, 1), (2, 2), (3, 3), (4, 2)] {
                let m = build(&BenchmarkSpec::new(f, w, d)).unwrap();
                assert!(m.root.validate().is_valid(), "{f}({w},{d})");
            }
        }
    }

    #[test]
    fn ho_deepest_leaves_second_input_unconnected() {
        let m = build(&BenchmarkSpec::new(Family::Ho, 3, 2)).unwrap().root;
        let Some(Component::Coupled(deepest)) = m.component("coupled_2") else {
            panic!("missing deepest coupled model")
        };
        let eic = deepest.couplings(CouplingClass::Eic);
        assert_eq!(eic.len(), 1);
        assert_eq!(eic[0].from, Endpoint::boundary("in1"));
    }

    #[test]
    fn homod_rows_have_decreasing_lengths() {
        let m = build(&BenchmarkSpec::new(Family::HoMod, 4, 2))
            .unwrap()
            .root;
        let row_len = |r: usize| {
            m.components()
                .iter()
                .filter(|c| c.name().starts_with(&format!("atomic_1_{r}_")))
                .count()
        };
        assert_eq!(
            [row_len(1), row_len(2), row_len(3), row_len(4)],
            [3, 3, 2, 1]
        );
    }

    #[test]
    fn injection_fans_out_to_every_root_input() {
        let s = injection_schedule(&BenchmarkSpec::new(Family::Li, 2, 1));
        assert_eq!(s.len(), 1);
        assert_eq!(
            (s.events()[0].time, s.events()[0].port.as_str()),
            (0.0, "in")
        );
        let s = injection_schedule(&BenchmarkSpec::new(Family::Ho, 2, 1));
        let got: Vec<_> = s
            .events()
            .iter()
            .map(|e| (e.time, e.port.as_str()))
            .collect();
        assert_eq!(got, [(0.0, "in1"), (0.0, "in2")]);
        let s = injection_schedule(&BenchmarkSpec::new(Family::Li, 4, 3).with_events(3));
        let times: Vec<_> = s.events().iter().map(|e| e.time).collect();
        assert_eq!(times, [0.0, 1.0, 2.0]);
    }
}
