use devstone_core::model::{Endpoint, InputBags};
use devstone_core::{
    build, injection_schedule, AtomicBehavior, BenchmarkSpec, Counts, CoupledModel, CouplingClass,
    DevstoneAtomic, Family, InjectionSchedule, SimulationContext, Time, TransitionCounters,
};
use proptest::prelude::*;

/// Root with input `in` feeding atomics A and B, plus A.out -> B.in.
fn confluent_fixture() -> (CoupledModel, std::sync::Arc<TransitionCounters>) {
    let counters = TransitionCounters::new();
    let mut root = CoupledModel::with_ports("root", &["in"], &[]).unwrap();
    root.add_component(DevstoneAtomic::new(0.0, 0.0, counters.clone()).into_model("A"))
        .unwrap()
        .add_component(DevstoneAtomic::new(0.0, 0.0, counters.clone()).into_model("B"))
        .unwrap();
    root.connect((None, "in"), (Some("A"), "in")).unwrap();
    root.connect((None, "in"), (Some("B"), "in")).unwrap();
    root.connect((Some("A"), "out"), (Some("B"), "in")).unwrap();
    (root, counters)
}

#[test]
fn confluent_fixture_totals() {
    let (root, counters) = confluent_fixture();
    let mut sched = InjectionSchedule::new();
    sched.push(0.0, "in", 1).unwrap();
    let mut ctx = SimulationContext::initialize(root, sched).unwrap();

    ctx.step().unwrap();
    assert_eq!(
        counters.snapshot(),
        Counts {
            delta_int: 0,
            delta_ext: 2,
            events: 2
        }
    );
    ctx.step().unwrap();
    assert_eq!(ctx.clock(), 0.0);
    assert_eq!(
        counters.snapshot(),
        Counts {
            delta_int: 2,
            delta_ext: 3,
            events: 3
        }
    );
    assert_eq!(ctx.stats().confluent, 1);

    ctx.run_to_quiescence().unwrap();
    assert_eq!(
        counters.snapshot(),
        Counts {
            delta_int: 3,
            delta_ext: 3,
            events: 3
        }
    );
}

#[test]
fn confluent_state_is_external_after_internal() {
    let counters = TransitionCounters::new();
    let ports = vec!["in".to_string()];
    let mut b = DevstoneAtomic::new(0.0, 0.0, counters.clone());
    b.delta_ext(0.0, &InputBags::new(&ports, &[vec![1]]));
    let mut composed = b.clone();
    let bag = [vec![1]];
    b.delta_con(&InputBags::new(&ports, &bag));
    composed.delta_int();
    composed.delta_ext(0.0, &InputBags::new(&ports, &bag));
    assert_eq!(b.state(), composed.state());
}

#[test]
fn generated_models_validate() {
    for spec in [
        BenchmarkSpec::new(Family::Li, 2, 2),
        BenchmarkSpec::new(Family::HoMod, 3, 3),
        BenchmarkSpec::new(Family::HoMem, 4, 3),
    ] {
        let m = build(&spec).unwrap();
        let report = m.root.validate();
        assert!(report.violations.is_empty(), "{spec:?}: {report:?}");
    }
}

#[test]
fn li_2_1_initial_state_and_steps() {
    let spec = BenchmarkSpec::new(Family::Li, 2, 1);
    let m = build(&spec).unwrap();
    let mut ctx = SimulationContext::initialize(m.root, injection_schedule(&spec)).unwrap();
    assert_eq!(ctx.next_event_time(), 0.0);
    let mut tns = Vec::new();
    ctx.visit_atomics(|_, _, _, tn| tns.push(tn));
    assert_eq!(tns, [Time::INFINITY]);

    ctx.step().unwrap();
    assert_eq!(
        m.counters.snapshot(),
        Counts {
            delta_int: 0,
            delta_ext: 1,
            events: 1
        }
    );
    assert_eq!(ctx.next_event_time(), 0.0);
    ctx.step().unwrap();
    assert_eq!(
        m.counters.snapshot(),
        Counts {
            delta_int: 1,
            delta_ext: 1,
            events: 1
        }
    );
    assert!(ctx.is_quiescent());
    assert_eq!(ctx.next_event_time(), Time::INFINITY);
}

#[test]
fn hi_4_3_counts() {
    let c = devstone_core::simulate(&BenchmarkSpec::new(Family::Hi, 4, 3)).unwrap();
    assert_eq!(
        c,
        Counts {
            delta_int: 13,
            delta_ext: 13,
            events: 13
        }
    );
}

#[test]
fn empty_schedule_is_immediately_quiescent() {
    let m = build(&BenchmarkSpec::new(Family::Ho, 3, 3)).unwrap();
    let mut ctx = SimulationContext::initialize(m.root, InjectionSchedule::new()).unwrap();
    assert_eq!(ctx.next_event_time(), Time::INFINITY);
    let stats = ctx.run_to_quiescence().unwrap();
    assert_eq!(stats.steps, 0);
    assert_eq!(m.counters.snapshot(), Counts::default());
}

fn trace(spec: &BenchmarkSpec) -> (Vec<Time>, Counts) {
    let m = build(spec).unwrap();
    let mut ctx = SimulationContext::initialize(m.root, injection_schedule(spec)).unwrap();
    let mut clocks = Vec::new();
    while !ctx.is_quiescent() {
        ctx.step().unwrap();
        clocks.push(ctx.clock());
    }
    (clocks, m.counters.snapshot())
}

fn family() -> impl Strategy<Value = Family> {
    prop::sample::select(Family::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn runs_are_deterministic(f in family(), w in 2u32..5, d in 1u32..4, n in 1u32..3) {
        let spec = BenchmarkSpec::new(f, w, d).with_events(n);
        prop_assert_eq!(trace(&spec), trace(&spec));
    }

    #[test]
    fn at_most_one_transition_per_atomic_per_step(f in family(), w in 2u32..5, d in 1u32..4) {
        let spec = BenchmarkSpec::new(f, w, d);
        let m = build(&spec).unwrap();
        let atomics = m.root.atomic_count();
        let mut ctx = SimulationContext::initialize(m.root, injection_schedule(&spec)).unwrap();
        let mut prev = ctx.stats();
        while !ctx.is_quiescent() {
            ctx.step().unwrap();
            let s = ctx.stats();
            let fired = (s.internal - prev.internal) + (s.external - prev.external)
                + (s.confluent - prev.confluent);
            prop_assert!(fired <= atomics);
            prev = s;
        }
    }

    #[test]
    fn clock_stays_between_last_and_next(f in family(), w in 2u32..4, d in 1u32..4) {
        let spec = BenchmarkSpec::new(f, w, d).with_events(2);
        let m = build(&spec).unwrap();
        let mut ctx = SimulationContext::initialize(m.root, injection_schedule(&spec)).unwrap();
        while !ctx.is_quiescent() {
            ctx.step().unwrap();
            let clock = ctx.clock();
            let mut ok = true;
            ctx.visit_atomics(|_, _, tl, tn| ok &= tl <= clock && clock <= tn);
            prop_assert!(ok);
        }
    }

    #[test]
    fn duplicate_couplings_are_stored_once(copies in 1usize..5, n in 1usize..5) {
        let make = || {
            let counters = TransitionCounters::new();
            let mut c = CoupledModel::with_ports("c", &["in"], &["out"]).unwrap();
            for i in 0..n {
                let a = DevstoneAtomic::new(0.0, 0.0, counters.clone()).into_model(format!("a{i}"));
                c.add_component(a).unwrap();
            }
            c
        };
        let (mut once, mut many) = (make(), make());
        for i in 0..n {
            let name = format!("a{i}");
            once.add_coupling(Endpoint::boundary("in"), Endpoint::child(&name, "in")).unwrap();
            for _ in 0..copies {
                many.add_coupling(Endpoint::boundary("in"), Endpoint::child(&name, "in")).unwrap();
            }
        }
        prop_assert_eq!(once.couplings(CouplingClass::Eic), many.couplings(CouplingClass::Eic));
    }

    #[test]
    fn couplings_partition_by_endpoint_role(f in family(), w in 2u32..5, d in 1u32..4) {
        let m = build(&BenchmarkSpec::new(f, w, d)).unwrap();
        let root = &m.root;
        let total: usize = [CouplingClass::Eic, CouplingClass::Ic, CouplingClass::Eoc]
            .iter()
            .map(|c| root.couplings(*c).len())
            .sum();
        prop_assert_eq!(total, root.all_couplings().count());
        for (class, c) in root.all_couplings() {
            prop_assert_eq!(CoupledModel::classify(&c.from, &c.to).unwrap(), class);
        }
    }
}
