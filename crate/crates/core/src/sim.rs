//! Sequential PDEVS abstract simulator.
//!
//! The simulator mirrors the model hierarchy: every coupled model gets a
//! coordinator that routes bags through its own EIC/IC/EOC relations, so no
//! flattening happens. Each step runs the classic two phases: output
//! collection from imminent atomics (with routing through the hierarchy),
//! then one transition per touched atomic.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use thiserror::Error;

use crate::model::{
    AtomicModel, Component, CoupledModel, Coupling, InputBags, OutputBags, Owner, Time, Token,
    ValidationReport,
};

pub const DEFAULT_STEP_CAP: u64 = 1_000_000_000;
pub const DEFAULT_INSTANT_STEP_LIMIT: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid model: {0}")]
    InvalidModel(ValidationReport),
    #[error("root model has no input port `{0}`")]
    UnknownRootPort(String),
    #[error("injection at t={time} is out of order or not a finite non-negative time")]
    InvalidSchedule { time: Time },
    #[error("no pending events: the simulation is quiescent")]
    Quiescent,
    #[error("step cap of {0} steps exceeded (suspected livelock)")]
    StepCapExceeded(u64),
    #[error("{steps} consecutive steps at t={time} (instantaneous loop)")]
    InstantaneousLoop { time: Time, steps: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub time: Time,
    pub port: String,
    pub value: Token,
}

/// Root-boundary events in time order. Entries sharing a time form one
/// injection instant and are delivered in the same step; distinct instants
/// are strictly increasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InjectionSchedule {
    events: Vec<Injection>,
}

impl InjectionSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        time: Time,
        port: impl Into<String>,
        value: Token,
    ) -> Result<&mut Self, SimError> {
        let in_order = self.events.last().is_none_or(|last| time >= last.time);
        if !time.is_finite() || time < 0.0 || !in_order {
            return Err(SimError::InvalidSchedule { time });
        }
        self.events.push(Injection {
            time,
            port: port.into(),
            value,
        });
        Ok(self)
    }

    pub fn events(&self) -> &[Injection] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Kernel-side tally of classified transitions, independent of whatever the
/// atomic models count themselves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimStats {
    pub steps: u64,
    pub internal: u64,
    pub external: u64,
    pub confluent: u64,
    pub root_outputs: u64,
}

#[derive(Debug, Clone, Copy)]
struct HeapTime(Time);

impl PartialEq for HeapTime {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapTime {}

impl PartialOrd for HeapTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

type Schedule = BinaryHeap<Reverse<(HeapTime, usize)>>;

const MARK_IMMINENT: u8 = 1;
const MARK_DIRTY: u8 = 2;

enum Route {
    Child { child: usize, port: usize },
    Out(usize),
}

struct AtomicSim {
    model: AtomicModel,
    last: Time,
    next: Time,
    inputs: Vec<Vec<Token>>,
    outputs: Vec<Vec<Token>>,
    has_input: bool,
}

struct Coordinator {
    name: String,
    inputs: Vec<String>,
    outputs: Vec<String>,
    children: Vec<Node>,
    /// own input port -> child inputs
    eic: Vec<Vec<(usize, usize)>>,
    /// child -> output port -> destinations
    routes: Vec<Vec<Vec<Route>>>,
    out_bags: Vec<Vec<Token>>,
    next: Time,
    schedule: Schedule,
    imminent: Vec<usize>,
    dirty: Vec<usize>,
    marks: Vec<u8>,
}

enum Node {
    Atomic(Box<AtomicSim>),
    Coupled(Box<Coordinator>),
}

impl Node {
    fn build(component: Component) -> Node {
        match component {
            Component::Atomic(model) => {
                let n_in = model.input_ports().len();
                let n_out = model.output_ports().len();
                Node::Atomic(Box::new(AtomicSim {
                    model,
                    last: 0.0,
                    next: Time::INFINITY,
                    inputs: vec![Vec::new(); n_in],
                    outputs: vec![Vec::new(); n_out],
                    has_input: false,
                }))
            }
            Component::Coupled(c) => Node::Coupled(Box::new(Coordinator::build(c))),
        }
    }

    fn next(&self) -> Time {
        match self {
            Node::Atomic(a) => a.next,
            Node::Coupled(c) => c.next,
        }
    }

    fn initialize(&mut self, t: Time) {
        match self {
            Node::Atomic(a) => {
                let b = a.model.behavior_mut();
                b.init();
                a.last = t;
                a.next = t + b.ta();
            }
            Node::Coupled(c) => c.initialize(t),
        }
    }

    fn collect(&mut self, t: Time) {
        match self {
            Node::Atomic(a) => {
                let AtomicSim { model, outputs, .. } = a.as_mut();
                model
                    .behavior()
                    .lambda(&mut OutputBags::new(model.output_ports(), outputs));
            }
            Node::Coupled(c) => c.collect(t),
        }
    }

    fn outputs_mut(&mut self) -> &mut Vec<Vec<Token>> {
        match self {
            Node::Atomic(a) => &mut a.outputs,
            Node::Coupled(c) => &mut c.out_bags,
        }
    }

    /// Returns true when this node goes from "no pending input" to "has input".
    fn deliver(&mut self, port: usize, values: &[Token]) -> bool {
        match self {
            Node::Atomic(a) => {
                a.inputs[port].extend_from_slice(values);
                let fresh = !a.has_input;
                a.has_input = true;
                fresh
            }
            Node::Coupled(c) => c.deliver(port, values),
        }
    }

    fn transition(&mut self, t: Time, stats: &mut SimStats) {
        match self {
            Node::Atomic(a) => a.transition(t, stats),
            Node::Coupled(c) => c.transition(t, stats),
        }
    }

    fn visit_atomics<'a>(
        &'a self,
        path: &mut String,
        f: &mut dyn FnMut(&str, &'a AtomicModel, Time, Time),
    ) {
        match self {
            Node::Atomic(a) => {
                let len = path.len();
                path.push('/');
                path.push_str(a.model.name());
                f(path, &a.model, a.last, a.next);
                path.truncate(len);
            }
            Node::Coupled(c) => {
                let len = path.len();
                path.push('/');
                path.push_str(&c.name);
                for child in &c.children {
                    child.visit_atomics(path, f);
                }
                path.truncate(len);
            }
        }
    }
}

impl AtomicSim {
    fn transition(&mut self, t: Time, stats: &mut SimStats) {
        let imminent = self.next == t;
        let (ports, behavior) = self.model.split_mut();
        let bags = InputBags::new(ports, &self.inputs);
        match (imminent, self.has_input) {
            (true, false) => {
                behavior.delta_int();
                stats.internal += 1;
            }
            (false, true) => {
                let elapsed = t - self.last;
                debug_assert!(elapsed >= 0.0 && elapsed <= self.next - self.last);
                behavior.delta_ext(elapsed, &bags);
                stats.external += 1;
            }
            (true, true) => {
                behavior.delta_con(&bags);
                stats.confluent += 1;
            }
            (false, false) => return,
        }
        let ta = behavior.ta();
        debug_assert!(ta >= 0.0, "time advance must be non-negative");
        self.last = t;
        self.next = t + ta;
        if self.has_input {
            for bag in &mut self.inputs {
                bag.clear();
            }
            self.has_input = false;
        }
    }
}

fn index_of(ports: &[String], name: &str) -> usize {
    ports
        .iter()
        .position(|p| p == name)
        .expect("validated models resolve every port")
}

impl Coordinator {
    fn build(model: CoupledModel) -> Coordinator {
        let parts = model.into_parts();
        let child_index = |name: &str| {
            parts
                .components
                .iter()
                .position(|c| c.name() == name)
                .expect("validated models resolve every component")
        };
        let mut eic = vec![Vec::new(); parts.inputs.len()];
        for Coupling { from, to } in &parts.eic {
            let Owner::Child(dst) = &to.owner else {
                unreachable!()
            };
            let ci = child_index(dst);
            let port = index_of(parts.components[ci].input_ports(), &to.port);
            eic[index_of(&parts.inputs, &from.port)].push((ci, port));
        }
        let mut routes: Vec<Vec<Vec<Route>>> = parts
            .components
            .iter()
            .map(|c| (0..c.output_ports().len()).map(|_| Vec::new()).collect())
            .collect();
        // IC before EOC within a source port; insertion order within each class
        for Coupling { from, to } in &parts.ic {
            let (Owner::Child(src), Owner::Child(dst)) = (&from.owner, &to.owner) else {
                unreachable!()
            };
            let (si, di) = (child_index(src), child_index(dst));
            let sp = index_of(parts.components[si].output_ports(), &from.port);
            let dp = index_of(parts.components[di].input_ports(), &to.port);
            routes[si][sp].push(Route::Child {
                child: di,
                port: dp,
            });
        }
        for Coupling { from, to } in &parts.eoc {
            let Owner::Child(src) = &from.owner else {
                unreachable!()
            };
            let si = child_index(src);
            let sp = index_of(parts.components[si].output_ports(), &from.port);
            routes[si][sp].push(Route::Out(index_of(&parts.outputs, &to.port)));
        }
        let n = parts.components.len();
        Coordinator {
            out_bags: vec![Vec::new(); parts.outputs.len()],
            name: parts.name,
            inputs: parts.inputs,
            outputs: parts.outputs,
            children: parts.components.into_iter().map(Node::build).collect(),
            eic,
            routes,
            next: Time::INFINITY,
            schedule: BinaryHeap::new(),
            imminent: Vec::new(),
            dirty: Vec::new(),
            marks: vec![0; n],
        }
    }

    fn initialize(&mut self, t: Time) {
        for (i, child) in self.children.iter_mut().enumerate() {
            child.initialize(t);
            let next = child.next();
            if next.is_finite() {
                self.schedule.push(Reverse((HeapTime(next), i)));
            }
        }
        self.refresh_next();
    }

    fn refresh_next(&mut self) {
        while let Some(&Reverse((HeapTime(time), i))) = self.schedule.peek() {
            if self.children[i].next() == time {
                self.next = time;
                return;
            }
            self.schedule.pop();
        }
        self.next = Time::INFINITY;
    }

    fn collect(&mut self, t: Time) {
        while let Some(&Reverse((HeapTime(time), i))) = self.schedule.peek() {
            if time > t {
                break;
            }
            self.schedule.pop();
            if time == t && self.children[i].next() == t && self.marks[i] & MARK_IMMINENT == 0 {
                self.marks[i] |= MARK_IMMINENT;
                self.imminent.push(i);
            }
        }
        for k in 0..self.imminent.len() {
            let src = self.imminent[k];
            self.children[src].collect(t);
            self.route_from(src);
        }
    }

    fn route_from(&mut self, src: usize) {
        let n_ports = self.routes[src].len();
        for port in 0..n_ports {
            let values = std::mem::take(&mut self.children[src].outputs_mut()[port]);
            if !values.is_empty() {
                for r in 0..self.routes[src][port].len() {
                    match self.routes[src][port][r] {
                        Route::Child { child, port: dst } => {
                            if self.children[child].deliver(dst, &values)
                                && self.marks[child] & MARK_DIRTY == 0
                            {
                                self.marks[child] |= MARK_DIRTY;
                                self.dirty.push(child);
                            }
                        }
                        Route::Out(out) => self.out_bags[out].extend_from_slice(&values),
                    }
                }
            }
            let mut values = values;
            values.clear();
            self.children[src].outputs_mut()[port] = values;
        }
    }

    fn deliver(&mut self, port: usize, values: &[Token]) -> bool {
        let was_clean = self.dirty.is_empty();
        for k in 0..self.eic[port].len() {
            let (child, dst) = self.eic[port][k];
            if self.children[child].deliver(dst, values) && self.marks[child] & MARK_DIRTY == 0 {
                self.marks[child] |= MARK_DIRTY;
                self.dirty.push(child);
            }
        }
        was_clean && !self.dirty.is_empty()
    }

    fn transition(&mut self, t: Time, stats: &mut SimStats) {
        let imminent = std::mem::take(&mut self.imminent);
        let dirty = std::mem::take(&mut self.dirty);
        for &i in imminent.iter().chain(dirty.iter()) {
            if self.marks[i] == 0 {
                // already handled through the other list
                continue;
            }
            self.marks[i] = 0;
            self.children[i].transition(t, stats);
            let next = self.children[i].next();
            if next.is_finite() {
                self.schedule.push(Reverse((HeapTime(next), i)));
            }
        }
        self.imminent = imminent;
        self.imminent.clear();
        self.dirty = dirty;
        self.dirty.clear();
        self.refresh_next();
    }
}

/// A running simulation over a coordinator tree, with its pending root
/// injections.
pub struct SimulationContext {
    root: Coordinator,
    clock: Time,
    injections: VecDeque<(Time, usize, Token)>,
    stats: SimStats,
    step_cap: u64,
    instant_limit: u64,
    instant: (Time, u64),
}

/// How a bounded run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    Quiescent,
    Interrupted,
}

impl SimulationContext {
    /// Validates the model and runs every atomic's `init` with the clock at 0.
    pub fn initialize(root: CoupledModel, schedule: InjectionSchedule) -> Result<Self, SimError> {
        let report = root.validate();
        if !report.is_valid() {
            return Err(SimError::InvalidModel(report));
        }
        let mut injections = VecDeque::with_capacity(schedule.len());
        for inj in schedule.events {
            let port = root
                .input_ports()
                .iter()
                .position(|p| *p == inj.port)
                .ok_or_else(|| SimError::UnknownRootPort(inj.port.clone()))?;
            injections.push_back((inj.time, port, inj.value));
        }
        let mut root = Coordinator::build(root);
        root.initialize(0.0);
        Ok(SimulationContext {
            root,
            clock: 0.0,
            injections,
            stats: SimStats::default(),
            step_cap: DEFAULT_STEP_CAP,
            instant_limit: DEFAULT_INSTANT_STEP_LIMIT,
            instant: (0.0, 0),
        })
    }

    pub fn with_step_cap(mut self, cap: u64) -> Self {
        self.step_cap = cap;
        self
    }

    /// Maximum number of consecutive steps allowed at one simulation time.
    pub fn with_instant_step_limit(mut self, limit: u64) -> Self {
        self.instant_limit = limit;
        self
    }

    pub fn clock(&self) -> Time {
        self.clock
    }

    pub fn stats(&self) -> SimStats {
        self.stats
    }

    pub fn pending_injections(&self) -> usize {
        self.injections.len()
    }

    /// Minimum of every atomic's next internal time and the next injection;
    /// `+inf` when quiescent.
    pub fn next_event_time(&self) -> Time {
        let inj = self.injections.front().map_or(Time::INFINITY, |e| e.0);
        self.root.next.min(inj)
    }

    pub fn is_quiescent(&self) -> bool {
        self.next_event_time() == Time::INFINITY
    }

    /// Advances the clock to the next event time and performs one PDEVS step.
    pub fn step(&mut self) -> Result<(), SimError> {
        let t = self.next_event_time();
        if !t.is_finite() {
            return Err(SimError::Quiescent);
        }
        if self.stats.steps >= self.step_cap {
            return Err(SimError::StepCapExceeded(self.step_cap));
        }
        if t == self.instant.0 && self.stats.steps > 0 {
            self.instant.1 += 1;
            if self.instant.1 > self.instant_limit {
                return Err(SimError::InstantaneousLoop {
                    time: t,
                    steps: self.instant.1,
                });
            }
        } else {
            self.instant = (t, 1);
        }
        debug_assert!(t >= self.clock);
        self.clock = t;
        let root_imminent = self.root.next == t;
        if root_imminent {
            self.root.collect(t);
            for bag in &mut self.root.out_bags {
                self.stats.root_outputs += bag.len() as u64;
                bag.clear();
            }
        }
        while let Some(&(time, port, value)) = self.injections.front() {
            if time != t {
                break;
            }
            self.injections.pop_front();
            self.root.deliver(port, &[value]);
        }
        self.root.transition(t, &mut self.stats);
        self.stats.steps += 1;
        Ok(())
    }

    /// Steps until quiescence.
    pub fn run_to_quiescence(&mut self) -> Result<SimStats, SimError> {
        self.run_while(|_| true)?;
        Ok(self.stats)
    }

    /// Steps until quiescence or until `keep_going` returns false (checked
    /// before every step).
    pub fn run_while(
        &mut self,
        mut keep_going: impl FnMut(&SimulationContext) -> bool,
    ) -> Result<RunOutcome, SimError> {
        while !self.is_quiescent() {
            if !keep_going(self) {
                return Ok(RunOutcome::Interrupted);
            }
            self.step()?;
        }
        Ok(RunOutcome::Quiescent)
    }

    /// Calls `f(path, model, last transition time, next internal time)` for
    /// every atomic, depth-first.
    pub fn visit_atomics<'a>(&'a self, mut f: impl FnMut(&str, &'a AtomicModel, Time, Time)) {
        let mut path = String::new();
        path.push_str(&self.root.name);
        for child in &self.root.children {
            child.visit_atomics(&mut path, &mut f);
        }
    }

    pub fn root_ports(&self) -> (&[String], &[String]) {
        (&self.root.inputs, &self.root.outputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AtomicBehavior, CoupledModel};
    use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
    use std::sync::Arc;

    /// Forwards whatever it receives after `delay`; logs every transition.
    struct Relay {
        delay: Time,
        held: Vec<Token>,
        sigma: Time,
        log: Arc<TransitionLog>,
    }

    #[derive(Default)]
    struct TransitionLog {
        int: AtomicU64,
        ext: AtomicU64,
        con: AtomicU64,
        max_elapsed: std::sync::Mutex<Vec<Time>>,
    }

    impl AtomicBehavior for Relay {
        fn delta_int(&mut self) {
            self.log.int.fetch_add(1, AtomicOrdering::Relaxed);
            self.held.clear();
            self.sigma = Time::INFINITY;
        }
        fn delta_ext(&mut self, elapsed: Time, inputs: &InputBags<'_>) {
            self.log.ext.fetch_add(1, AtomicOrdering::Relaxed);
            self.log.max_elapsed.lock().unwrap().push(elapsed);
            self.held.extend_from_slice(inputs.get("in"));
            self.sigma = self.delay;
        }
        fn delta_con(&mut self, inputs: &InputBags<'_>) {
            self.log.con.fetch_add(1, AtomicOrdering::Relaxed);
            self.held.clear();
            self.held.extend_from_slice(inputs.get("in"));
            self.sigma = self.delay;
        }
        fn lambda(&self, out: &mut OutputBags<'_>) {
            out.send_all("out", &self.held);
        }
        fn ta(&self) -> Time {
            self.sigma
        }
    }

    fn relay(name: &str, delay: Time, log: &Arc<TransitionLog>) -> AtomicModel {
        AtomicModel::new(
            name,
            &["in"],
            &["out"],
            Relay {
                delay,
                held: Vec::new(),
                sigma: Time::INFINITY,
                log: log.clone(),
            },
        )
        .unwrap()
    }

    fn pipeline(delays: &[Time], log: &Arc<TransitionLog>) -> CoupledModel {
        let mut m = CoupledModel::with_ports("top", &["in"], &["out"]).unwrap();
        for (i, &d) in delays.iter().enumerate() {
            m.add_component(relay(&format!("r{i}"), d, log)).unwrap();
        }
        m.connect((None, "in"), (Some("r0"), "in")).unwrap();
        for i in 1..delays.len() {
            m.connect(
                (Some(&format!("r{}", i - 1)), "out"),
                (Some(&format!("r{i}")), "in"),
            )
            .unwrap();
        }
        let last = format!("r{}", delays.len() - 1);
        m.connect((Some(last.as_str()), "out"), (None, "out"))
            .unwrap();
        m
    }

    fn schedule(times: &[Time]) -> InjectionSchedule {
        let mut s = InjectionSchedule::new();
        for (i, &t) in times.iter().enumerate() {
            s.push(t, "in", i as Token).unwrap();
        }
        s
    }

    #[test]
    fn schedule_rejects_out_of_order_and_bad_times() {
        let mut s = InjectionSchedule::new();
        s.push(1.0, "in", 0).unwrap();
        s.push(1.0, "in2", 0).unwrap();
        assert!(s.push(0.5, "in", 0).is_err());
        assert!(s.push(Time::INFINITY, "in", 0).is_err());
        assert!(InjectionSchedule::new().push(-1.0, "in", 0).is_err());
        assert!(InjectionSchedule::new().push(Time::NAN, "in", 0).is_err());
    }

    #[test]
    fn empty_schedule_is_quiescent() {
        let log = Arc::default();
        let mut ctx = SimulationContext::initialize(pipeline(&[1.0], &log), schedule(&[])).unwrap();
        assert_eq!(ctx.next_event_time(), Time::INFINITY);
        assert_eq!(ctx.step(), Err(SimError::Quiescent));
        assert_eq!(ctx.run_to_quiescence().unwrap().steps, 0);
    }

    #[test]
    fn unknown_root_port_rejected() {
        let log = Arc::default();
        let mut s = InjectionSchedule::new();
        s.push(0.0, "nope", 1).unwrap();
        let err = SimulationContext::initialize(pipeline(&[1.0], &log), s)
            .err()
            .unwrap();
        assert_eq!(err, SimError::UnknownRootPort("nope".into()));
    }

    #[test]
    fn invalid_model_rejected() {
        let log = Arc::default();
        let mut m = pipeline(&[1.0, 1.0], &log);
        m.remove_component("r1").unwrap();
        assert!(matches!(
            SimulationContext::initialize(m, schedule(&[0.0])),
            Err(SimError::InvalidModel(_))
        ));
    }

    #[test]
    fn delayed_pipeline_advances_clock_through_delays() {
        let log: Arc<TransitionLog> = Arc::default();
        let mut ctx =
            SimulationContext::initialize(pipeline(&[1.5, 2.0], &log), schedule(&[0.0])).unwrap();
        let mut clocks = Vec::new();
        while !ctx.is_quiescent() {
            ctx.step().unwrap();
            clocks.push(ctx.clock());
        }
        assert_eq!(clocks, [0.0, 1.5, 3.5]);
        assert_eq!(ctx.stats().root_outputs, 1);
        assert_eq!(log.ext.load(AtomicOrdering::Relaxed), 2);
        assert_eq!(log.int.load(AtomicOrdering::Relaxed), 2);
    }

    #[test]
    fn elapsed_time_is_time_since_last_transition() {
        let log: Arc<TransitionLog> = Arc::default();
        // the relay is busy (delay 10) when the second injection arrives at t=4
        let mut ctx =
            SimulationContext::initialize(pipeline(&[10.0], &log), schedule(&[1.0, 4.0])).unwrap();
        ctx.run_to_quiescence().unwrap();
        assert_eq!(*log.max_elapsed.lock().unwrap(), [1.0, 3.0]);
        assert_eq!(ctx.clock(), 14.0);
    }

    #[test]
    fn collision_triggers_confluent_transition() {
        let log: Arc<TransitionLog> = Arc::default();
        let mut ctx =
            SimulationContext::initialize(pipeline(&[2.0], &log), schedule(&[0.0, 2.0])).unwrap();
        let stats = ctx.run_to_quiescence().unwrap();
        assert_eq!(stats.external, 1);
        assert_eq!(stats.confluent, 1);
        assert_eq!(stats.internal, 1);
        assert_eq!(log.con.load(AtomicOrdering::Relaxed), 1);
    }

    #[test]
    fn next_event_time_is_minimum_of_imminent_and_injection() {
        let log: Arc<TransitionLog> = Arc::default();
        let mut ctx =
            SimulationContext::initialize(pipeline(&[1.0], &log), schedule(&[0.0, 5.0])).unwrap();
        assert_eq!(ctx.next_event_time(), 0.0);
        ctx.step().unwrap();
        assert_eq!(ctx.next_event_time(), 1.0);
        ctx.step().unwrap();
        assert_eq!(ctx.next_event_time(), 5.0);
    }

    #[test]
    fn bookkeeping_invariants_hold_between_steps() {
        let log: Arc<TransitionLog> = Arc::default();
        let mut ctx = SimulationContext::initialize(
            pipeline(&[0.5, 0.25, 1.0], &log),
            schedule(&[0.0, 0.3, 0.6, 2.0]),
        )
        .unwrap();
        let mut prev_clock = 0.0;
        while !ctx.is_quiescent() {
            ctx.step().unwrap();
            assert!(ctx.clock() >= prev_clock);
            prev_clock = ctx.clock();
            ctx.visit_atomics(|_, _, last, next| {
                assert!(last <= ctx.clock());
                assert!(ctx.clock() <= next);
            });
        }
    }

    #[test]
    fn zero_delay_loop_is_reported() {
        let log: Arc<TransitionLog> = Arc::default();
        let mut m = CoupledModel::with_ports("top", &["in"], &[]).unwrap();
        m.add_component(relay("a", 0.0, &log)).unwrap();
        m.add_component(relay("b", 0.0, &log)).unwrap();
        m.connect((None, "in"), (Some("a"), "in")).unwrap();
        m.connect((Some("a"), "out"), (Some("b"), "in")).unwrap();
        m.connect((Some("b"), "out"), (Some("a"), "in")).unwrap();
        let mut ctx = SimulationContext::initialize(m, schedule(&[0.0]))
            .unwrap()
            .with_instant_step_limit(100);
        assert!(matches!(
            ctx.run_to_quiescence(),
            Err(SimError::InstantaneousLoop { steps: 101, .. })
        ));
    }

    #[test]
    fn step_cap_stops_livelock() {
        let log: Arc<TransitionLog> = Arc::default();
        let mut m = CoupledModel::with_ports("top", &["in"], &[]).unwrap();
        m.add_component(relay("a", 1.0, &log)).unwrap();
        m.add_component(relay("b", 1.0, &log)).unwrap();
        m.connect((None, "in"), (Some("a"), "in")).unwrap();
        m.connect((Some("a"), "out"), (Some("b"), "in")).unwrap();
        m.connect((Some("b"), "out"), (Some("a"), "in")).unwrap();
        let mut ctx = SimulationContext::initialize(m, schedule(&[0.0]))
            .unwrap()
            .with_step_cap(50);
        assert_eq!(ctx.run_to_quiescence(), Err(SimError::StepCapExceeded(50)));
        assert_eq!(ctx.stats().steps, 50);
    }

    #[test]
    fn run_while_can_interrupt() {
        let log: Arc<TransitionLog> = Arc::default();
        let mut ctx =
            SimulationContext::initialize(pipeline(&[1.0, 1.0], &log), schedule(&[0.0])).unwrap();
        let outcome = ctx.run_while(|c| c.stats().steps < 2).unwrap();
        assert_eq!(outcome, RunOutcome::Interrupted);
        assert_eq!(ctx.stats().steps, 2);
        assert_eq!(ctx.run_while(|_| true).unwrap(), RunOutcome::Quiescent);
    }

    #[test]
    fn nested_routing_crosses_hierarchy_within_one_step() {
        // outer.in -> left(inner: in -> r0 -> out) ; left.out -> right.in ; right.out -> outer.out
        let log: Arc<TransitionLog> = Arc::default();
        let mut outer = CoupledModel::with_ports("outer", &["in"], &["out"]).unwrap();
        outer.add_component(pipeline_named("left", &log)).unwrap();
        outer.add_component(pipeline_named("right", &log)).unwrap();
        outer.connect((None, "in"), (Some("left"), "in")).unwrap();
        outer
            .connect((Some("left"), "out"), (Some("right"), "in"))
            .unwrap();
        outer
            .connect((Some("right"), "out"), (None, "out"))
            .unwrap();
        let mut ctx = SimulationContext::initialize(outer, schedule(&[0.0])).unwrap();
        ctx.step().unwrap(); // injection reaches left/r0
        assert_eq!(log.ext.load(AtomicOrdering::Relaxed), 1);
        ctx.step().unwrap(); // left/r0 output crosses EOC, IC, EIC into right/r0
        assert_eq!(log.int.load(AtomicOrdering::Relaxed), 1);
        assert_eq!(log.ext.load(AtomicOrdering::Relaxed), 2);
        ctx.run_to_quiescence().unwrap();
        assert_eq!(ctx.stats().root_outputs, 1);
    }

    fn pipeline_named(name: &str, log: &Arc<TransitionLog>) -> CoupledModel {
        let mut m = CoupledModel::with_ports(name, &["in"], &["out"]).unwrap();
        m.add_component(relay("r0", 0.0, log)).unwrap();
        m.connect((None, "in"), (Some("r0"), "in")).unwrap();
        m.connect((Some("r0"), "out"), (None, "out")).unwrap();
        m
    }
}
