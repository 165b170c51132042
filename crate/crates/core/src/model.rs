//! PDEVS model algebra: ports, value bags, atomic behaviors and coupled models.

use std::fmt;

use thiserror::Error;

/// Event payload. DEVStone only counts events, so payloads are opaque tokens.
pub type Token = u64;

/// Simulation time. `f64::INFINITY` marks a passive model.
pub type Time = f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PortDirection {
    Input,
    Output,
}

impl fmt::Display for PortDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PortDirection::Input => f.write_str("input"),
            PortDirection::Output => f.write_str("output"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Port {
    pub name: String,
    pub direction: PortDirection,
}

/// The component side of an endpoint: either the coupled model's own
/// boundary or one of its children, by name.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Owner {
    SelfBoundary,
    Child(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Endpoint {
    pub owner: Owner,
    pub port: String,
}

impl Endpoint {
    /// Endpoint on the enclosing coupled model's own boundary.
    pub fn boundary(port: impl Into<String>) -> Self {
        Endpoint {
            owner: Owner::SelfBoundary,
            port: port.into(),
        }
    }

    pub fn child(component: impl Into<String>, port: impl Into<String>) -> Self {
        Endpoint {
            owner: Owner::Child(component.into()),
            port: port.into(),
        }
    }

    fn render(&self, prefix: &str) -> String {
        match &self.owner {
            Owner::SelfBoundary => format!("{prefix}.{}", self.port),
            Owner::Child(c) => format!("{prefix}/{c}.{}", self.port),
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.owner {
            Owner::SelfBoundary => write!(f, "SELF.{}", self.port),
            Owner::Child(c) => write!(f, "{c}.{}", self.port),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CouplingClass {
    /// External input coupling: own input -> child input.
    Eic,
    /// External output coupling: child output -> own output.
    Eoc,
    /// Internal coupling: child output -> another child's input.
    Ic,
}

impl fmt::Display for CouplingClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CouplingClass::Eic => "EIC",
            CouplingClass::Eoc => "EOC",
            CouplingClass::Ic => "IC",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Coupling {
    pub from: Endpoint,
    pub to: Endpoint,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("component `{0}` already exists")]
    DuplicateComponent(String),
    #[error("{direction} port `{port}` already exists")]
    DuplicatePort {
        port: String,
        direction: PortDirection,
    },
    #[error("coupling {from} -> {to} connects component `{component}` to itself")]
    SelfCoupling {
        component: String,
        from: Endpoint,
        to: Endpoint,
    },
    #[error("coupling {from} -> {to} has no valid direction")]
    DirectionMismatch { from: Endpoint, to: Endpoint },
    #[error("endpoint {0} does not resolve to an existing port")]
    DanglingEndpoint(Endpoint),
    #[error("no component named `{0}`")]
    UnknownComponent(String),
}

/// Read access to the bags waiting on an atomic model's input ports.
pub struct InputBags<'a> {
    pub(crate) ports: &'a [String],
    pub(crate) bags: &'a [Vec<Token>],
}

impl<'a> InputBags<'a> {
    pub fn new(ports: &'a [String], bags: &'a [Vec<Token>]) -> Self {
        debug_assert_eq!(ports.len(), bags.len());
        InputBags { ports, bags }
    }

    /// Bag on the named port; empty if the port is unknown or received nothing.
    pub fn get(&self, port: &str) -> &'a [Token] {
        self.ports
            .iter()
            .position(|p| p == port)
            .map(|i| self.bags[i].as_slice())
            .unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.bags.iter().all(Vec::is_empty)
    }

    /// Total number of payloads across all ports.
    pub fn len(&self) -> usize {
        self.bags.iter().map(Vec::len).sum()
    }
}

/// Output bags an atomic model fills from its output function.
pub struct OutputBags<'a> {
    pub(crate) ports: &'a [String],
    pub(crate) bags: &'a mut [Vec<Token>],
}

impl<'a> OutputBags<'a> {
    pub fn new(ports: &'a [String], bags: &'a mut [Vec<Token>]) -> Self {
        debug_assert_eq!(ports.len(), bags.len());
        OutputBags { ports, bags }
    }

    fn index(&self, port: &str) -> usize {
        self.ports
            .iter()
            .position(|p| p == port)
            .unwrap_or_else(|| panic!("atomic model has no output port `{port}`"))
    }

    pub fn send(&mut self, port: &str, value: Token) {
        let i = self.index(port);
        self.bags[i].push(value);
    }

    pub fn send_all(&mut self, port: &str, values: &[Token]) {
        let i = self.index(port);
        self.bags[i].extend_from_slice(values);
    }
}

/// Behavior of a PDEVS atomic model. The implementor owns its state.
///
/// `ta` must return a value in `[0, +inf]`. The default confluent transition
/// applies the internal transition followed by an external transition with
/// zero elapsed time.
pub trait AtomicBehavior: Send {
    fn init(&mut self) {}

    fn delta_int(&mut self);

    fn delta_ext(&mut self, elapsed: Time, inputs: &InputBags<'_>);

    fn delta_con(&mut self, inputs: &InputBags<'_>) {
        self.delta_int();
        self.delta_ext(0.0, inputs);
    }

    fn lambda(&self, outputs: &mut OutputBags<'_>);

    fn ta(&self) -> Time;
}

pub struct AtomicModel {
    name: String,
    inputs: Vec<String>,
    outputs: Vec<String>,
    behavior: Box<dyn AtomicBehavior>,
}

impl AtomicModel {
    pub fn new(
        name: impl Into<String>,
        inputs: &[&str],
        outputs: &[&str],
        behavior: impl AtomicBehavior + 'static,
    ) -> Result<Self, ModelError> {
        Ok(AtomicModel {
            name: name.into(),
            inputs: unique_ports(inputs, PortDirection::Input)?,
            outputs: unique_ports(outputs, PortDirection::Output)?,
            behavior: Box::new(behavior),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_ports(&self) -> &[String] {
        &self.inputs
    }

    pub fn output_ports(&self) -> &[String] {
        &self.outputs
    }

    pub fn behavior(&self) -> &dyn AtomicBehavior {
        self.behavior.as_ref()
    }

    pub fn behavior_mut(&mut self) -> &mut dyn AtomicBehavior {
        self.behavior.as_mut()
    }

    pub(crate) fn split_mut(&mut self) -> (&[String], &mut dyn AtomicBehavior) {
        (&self.inputs, self.behavior.as_mut())
    }
}

impl fmt::Debug for AtomicModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AtomicModel")
            .field("name", &self.name)
            .field("inputs", &self.inputs)
            .field("outputs", &self.outputs)
            .finish_non_exhaustive()
    }
}

fn unique_ports(names: &[&str], direction: PortDirection) -> Result<Vec<String>, ModelError> {
    let mut out: Vec<String> = Vec::with_capacity(names.len());
    for &n in names {
        if out.iter().any(|p| p == n) {
            return Err(ModelError::DuplicatePort {
                port: n.to_string(),
                direction,
            });
        }
        out.push(n.to_string());
    }
    Ok(out)
}

#[derive(Debug)]
pub enum Component {
    Atomic(AtomicModel),
    Coupled(CoupledModel),
}

impl Component {
    pub fn name(&self) -> &str {
        match self {
            Component::Atomic(a) => a.name(),
            Component::Coupled(c) => c.name(),
        }
    }

    pub fn input_ports(&self) -> &[String] {
        match self {
            Component::Atomic(a) => a.input_ports(),
            Component::Coupled(c) => c.input_ports(),
        }
    }

    pub fn output_ports(&self) -> &[String] {
        match self {
            Component::Atomic(a) => a.output_ports(),
            Component::Coupled(c) => c.output_ports(),
        }
    }

    fn has_port(&self, port: &str, direction: PortDirection) -> bool {
        let ports = match direction {
            PortDirection::Input => self.input_ports(),
            PortDirection::Output => self.output_ports(),
        };
        ports.iter().any(|p| p == port)
    }

    /// Number of atomic models in this subtree.
    pub fn atomic_count(&self) -> u64 {
        match self {
            Component::Atomic(_) => 1,
            Component::Coupled(c) => c.atomic_count(),
        }
    }
}

impl From<AtomicModel> for Component {
    fn from(a: AtomicModel) -> Self {
        Component::Atomic(a)
    }
}

impl From<CoupledModel> for Component {
    fn from(c: CoupledModel) -> Self {
        Component::Coupled(c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    DuplicateComponent(String),
    DanglingEndpoint(Endpoint),
    DirectionMismatch { from: Endpoint, to: Endpoint },
    SelfCoupling(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Path of the coupled model the violation was found in.
    pub path: String,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("no violations");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}: {:?}", v.path, v.kind)?;
        }
        Ok(())
    }
}

/// A coupled model: children plus EIC/EOC/IC couplings. Couplings keep
/// insertion order within each class and are stored at most once.
#[derive(Debug)]
pub struct CoupledModel {
    name: String,
    inputs: Vec<String>,
    outputs: Vec<String>,
    components: Vec<Component>,
    eic: Vec<Coupling>,
    eoc: Vec<Coupling>,
    ic: Vec<Coupling>,
}

impl CoupledModel {
    pub fn new(name: impl Into<String>) -> Self {
        CoupledModel {
            name: name.into(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            components: Vec::new(),
            eic: Vec::new(),
            eoc: Vec::new(),
            ic: Vec::new(),
        }
    }

    pub fn with_ports(
        name: impl Into<String>,
        inputs: &[&str],
        outputs: &[&str],
    ) -> Result<Self, ModelError> {
        let mut m = CoupledModel::new(name);
        m.inputs = unique_ports(inputs, PortDirection::Input)?;
        m.outputs = unique_ports(outputs, PortDirection::Output)?;
        Ok(m)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_ports(&self) -> &[String] {
        &self.inputs
    }

    pub fn output_ports(&self) -> &[String] {
        &self.outputs
    }

    pub fn add_input_port(&mut self, name: &str) -> Result<&mut Self, ModelError> {
        add_port(&mut self.inputs, name, PortDirection::Input)?;
        Ok(self)
    }

    pub fn add_output_port(&mut self, name: &str) -> Result<&mut Self, ModelError> {
        add_port(&mut self.outputs, name, PortDirection::Output)?;
        Ok(self)
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn component(&self, name: &str) -> Option<&Component> {
        self.components.iter().find(|c| c.name() == name)
    }

    pub fn component_mut(&mut self, name: &str) -> Option<&mut Component> {
        self.components.iter_mut().find(|c| c.name() == name)
    }

    pub(crate) fn into_parts(self) -> CoupledParts {
        CoupledParts {
            name: self.name,
            inputs: self.inputs,
            outputs: self.outputs,
            components: self.components,
            eic: self.eic,
            eoc: self.eoc,
            ic: self.ic,
        }
    }

    pub fn add_component(&mut self, child: impl Into<Component>) -> Result<&mut Self, ModelError> {
        let child = child.into();
        if self.component(child.name()).is_some() {
            return Err(ModelError::DuplicateComponent(child.name().to_string()));
        }
        self.components.push(child);
        Ok(self)
    }

    /// Removes a child without touching couplings that reference it.
    pub fn remove_component(&mut self, name: &str) -> Result<Component, ModelError> {
        let idx = self
            .components
            .iter()
            .position(|c| c.name() == name)
            .ok_or_else(|| ModelError::UnknownComponent(name.to_string()))?;
        Ok(self.components.remove(idx))
    }

    /// Decides the class of a coupling from the roles of its endpoints,
    /// without resolving ports.
    pub fn classify(from: &Endpoint, to: &Endpoint) -> Result<CouplingClass, ModelError> {
        match (&from.owner, &to.owner) {
            (Owner::SelfBoundary, Owner::Child(_)) => Ok(CouplingClass::Eic),
            (Owner::Child(_), Owner::SelfBoundary) => Ok(CouplingClass::Eoc),
            (Owner::Child(a), Owner::Child(b)) if a == b => Err(ModelError::SelfCoupling {
                component: a.clone(),
                from: from.clone(),
                to: to.clone(),
            }),
            (Owner::Child(_), Owner::Child(_)) => Ok(CouplingClass::Ic),
            (Owner::SelfBoundary, Owner::SelfBoundary) => Err(ModelError::DirectionMismatch {
                from: from.clone(),
                to: to.clone(),
            }),
        }
    }

    /// Adds a coupling after resolving both endpoints. Adding an existing
    /// coupling again is a no-op.
    pub fn add_coupling(&mut self, from: Endpoint, to: Endpoint) -> Result<&mut Self, ModelError> {
        let class = Self::classify(&from, &to)?;
        let (from_dir, to_dir) = match class {
            CouplingClass::Eic => (PortDirection::Input, PortDirection::Input),
            CouplingClass::Eoc => (PortDirection::Output, PortDirection::Output),
            CouplingClass::Ic => (PortDirection::Output, PortDirection::Input),
        };
        self.check_endpoint(&from, from_dir, (&from, &to))?;
        self.check_endpoint(&to, to_dir, (&from, &to))?;
        let coupling = Coupling { from, to };
        let set = self.class_mut(class);
        if !set.contains(&coupling) {
            set.push(coupling);
        }
        Ok(self)
    }

    /// Shorthand for `add_coupling` with `(component, port)` pairs where
    /// `None` is the model's own boundary.
    pub fn connect(
        &mut self,
        from: (Option<&str>, &str),
        to: (Option<&str>, &str),
    ) -> Result<&mut Self, ModelError> {
        fn ep((c, p): (Option<&str>, &str)) -> Endpoint {
            match c {
                Some(c) => Endpoint::child(c, p),
                None => Endpoint::boundary(p),
            }
        }
        self.add_coupling(ep(from), ep(to))
    }

    pub fn remove_coupling(&mut self, from: &Endpoint, to: &Endpoint) -> bool {
        let Ok(class) = Self::classify(from, to) else {
            return false;
        };
        let set = self.class_mut(class);
        let before = set.len();
        set.retain(|c| !(c.from == *from && c.to == *to));
        set.len() != before
    }

    fn class_mut(&mut self, class: CouplingClass) -> &mut Vec<Coupling> {
        match class {
            CouplingClass::Eic => &mut self.eic,
            CouplingClass::Eoc => &mut self.eoc,
            CouplingClass::Ic => &mut self.ic,
        }
    }

    pub fn couplings(&self, class: CouplingClass) -> &[Coupling] {
        match class {
            CouplingClass::Eic => &self.eic,
            CouplingClass::Eoc => &self.eoc,
            CouplingClass::Ic => &self.ic,
        }
    }

    /// All couplings as (class, coupling), EIC first, then IC, then EOC.
    pub fn all_couplings(&self) -> impl Iterator<Item = (CouplingClass, &Coupling)> {
        self.eic
            .iter()
            .map(|c| (CouplingClass::Eic, c))
            .chain(self.ic.iter().map(|c| (CouplingClass::Ic, c)))
            .chain(self.eoc.iter().map(|c| (CouplingClass::Eoc, c)))
    }

    fn endpoint_resolves(&self, ep: &Endpoint, direction: PortDirection) -> EndpointState {
        match &ep.owner {
            Owner::SelfBoundary => {
                let ports = match direction {
                    PortDirection::Input => &self.inputs,
                    PortDirection::Output => &self.outputs,
                };
                if ports.contains(&ep.port) {
                    EndpointState::Ok
                } else if self.has_port_any(&ep.port) {
                    EndpointState::WrongDirection
                } else {
                    EndpointState::Dangling
                }
            }
            Owner::Child(name) => match self.component(name) {
                None => EndpointState::Dangling,
                Some(c) if c.has_port(&ep.port, direction) => EndpointState::Ok,
                Some(c) if c.has_port(&ep.port, flip(direction)) => EndpointState::WrongDirection,
                Some(_) => EndpointState::Dangling,
            },
        }
    }

    fn has_port_any(&self, port: &str) -> bool {
        self.inputs.iter().chain(&self.outputs).any(|p| p == port)
    }

    fn check_endpoint(
        &self,
        ep: &Endpoint,
        direction: PortDirection,
        coupling: (&Endpoint, &Endpoint),
    ) -> Result<(), ModelError> {
        match self.endpoint_resolves(ep, direction) {
            EndpointState::Ok => Ok(()),
            EndpointState::WrongDirection => Err(ModelError::DirectionMismatch {
                from: coupling.0.clone(),
                to: coupling.1.clone(),
            }),
            EndpointState::Dangling => Err(ModelError::DanglingEndpoint(ep.clone())),
        }
    }

    /// Number of atomic models in the whole hierarchy, by tree walk.
    pub fn atomic_count(&self) -> u64 {
        self.components.iter().map(Component::atomic_count).sum()
    }

    /// Checks every coupled-model invariant recursively. Violations are
    /// returned as data.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        self.validate_into(&self.name, &mut report);
        report
    }

    fn validate_into(&self, path: &str, report: &mut ValidationReport) {
        let mut push = |kind| {
            report.violations.push(Violation {
                path: path.to_string(),
                kind,
            })
        };
        for (i, c) in self.components.iter().enumerate() {
            if self.components[..i].iter().any(|o| o.name() == c.name()) {
                push(ViolationKind::DuplicateComponent(c.name().to_string()));
            }
        }
        for (class, coupling) in self.all_couplings() {
            if let Err(e) = Self::classify(&coupling.from, &coupling.to) {
                if let ModelError::SelfCoupling { component, .. } = e {
                    push(ViolationKind::SelfCoupling(component));
                } else {
                    push(ViolationKind::DirectionMismatch {
                        from: coupling.from.clone(),
                        to: coupling.to.clone(),
                    });
                }
                continue;
            }
            let (fd, td) = match class {
                CouplingClass::Eic => (PortDirection::Input, PortDirection::Input),
                CouplingClass::Eoc => (PortDirection::Output, PortDirection::Output),
                CouplingClass::Ic => (PortDirection::Output, PortDirection::Input),
            };
            for (ep, dir) in [(&coupling.from, fd), (&coupling.to, td)] {
                match self.endpoint_resolves(ep, dir) {
                    EndpointState::Ok => {}
                    EndpointState::Dangling => push(ViolationKind::DanglingEndpoint(ep.clone())),
                    EndpointState::WrongDirection => push(ViolationKind::DirectionMismatch {
                        from: coupling.from.clone(),
                        to: coupling.to.clone(),
                    }),
                }
            }
        }
        for c in &self.components {
            if let Component::Coupled(child) = c {
                child.validate_into(&format!("{path}/{}", child.name), report);
            }
        }
    }

    /// Deterministic depth-first text outline: one `COMPONENT` line per
    /// component and one `COUPLING` line per coupling.
    pub fn outline(&self) -> String {
        let mut out = String::new();
        self.outline_into(&self.name, &mut out);
        out
    }

    fn outline_into(&self, path: &str, out: &mut String) {
        use std::fmt::Write;
        let _ = writeln!(out, "COMPONENT {path} kind=coupled");
        for (class, c) in self.all_couplings() {
            let _ = writeln!(
                out,
                "COUPLING {class} {} -> {}",
                c.from.render(path),
                c.to.render(path)
            );
        }
        for c in &self.components {
            match c {
                Component::Atomic(a) => {
                    let _ = writeln!(out, "COMPONENT {path}/{} kind=atomic", a.name());
                }
                Component::Coupled(child) => {
                    child.outline_into(&format!("{path}/{}", child.name), out);
                }
            }
        }
    }
}

pub(crate) struct CoupledParts {
    pub name: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub components: Vec<Component>,
    pub eic: Vec<Coupling>,
    pub eoc: Vec<Coupling>,
    pub ic: Vec<Coupling>,
}

enum EndpointState {
    Ok,
    WrongDirection,
    Dangling,
}

fn flip(d: PortDirection) -> PortDirection {
    match d {
        PortDirection::Input => PortDirection::Output,
        PortDirection::Output => PortDirection::Input,
    }
}

fn add_port(
    ports: &mut Vec<String>,
    name: &str,
    direction: PortDirection,
) -> Result<(), ModelError> {
    if ports.iter().any(|p| p == name) {
        return Err(ModelError::DuplicatePort {
            port: name.to_string(),
            direction,
        });
    }
    ports.push(name.to_string());
    Ok(())
}
