//! Simulated counters against the analytic predictions over the
//! verification grid, plus anchors evaluated by hand.

use devstone_core::analytics::{homem_event_count, homod_event_count};
use devstone_core::{predict, simulate, BenchmarkSpec, Counts, Family};

fn observed(f: Family, w: u32, d: u32, n: u32) -> Counts {
    simulate(&BenchmarkSpec::new(f, w, d).with_events(n)).unwrap()
}

fn grid(f: Family) -> (std::ops::RangeInclusive<u32>, std::ops::RangeInclusive<u32>) {
    match f {
        Family::Li | Family::Hi | Family::Ho => (2..=10, 1..=10),
        Family::HoMod | Family::HoMem => (2..=6, 1..=6),
    }
}

#[test]
fn simulation_matches_prediction_on_grid() {
    let mut mismatches = Vec::new();
    for f in Family::ALL {
        let (ws, ds) = grid(f);
        for w in ws {
            for d in ds.clone() {
                let spec = BenchmarkSpec::new(f, w, d);
                let got = simulate(&spec).unwrap();
                let want = predict(&spec).unwrap();
                if !want.matches(&got) {
                    mismatches.push(format!("{f}({w},{d}): observed {got:?} predicted {want:?}"));
                }
            }
        }
    }
    assert!(mismatches.is_empty(), "{}", mismatches.join("\n"));
}

// Hand-evaluated anchors, independent of the analytics module.
#[test]
fn hand_evaluated_anchors() {
    let c = |i, e, v| Counts {
        delta_int: i,
        delta_ext: e,
        events: v,
    };
    assert_eq!(observed(Family::Li, 2, 1, 1), c(1, 1, 1));
    // (4-1)(3-1)+1
    assert_eq!(observed(Family::Li, 4, 3, 1), c(7, 7, 7));
    // ((16-4)/2)(3-1)+1
    assert_eq!(observed(Family::Hi, 4, 3, 1), c(13, 13, 13));
    assert_eq!(observed(Family::Ho, 4, 3, 1), c(13, 13, 13));
    // 1*1 + (1 + 0)(1 + 1) + 1
    assert_eq!(observed(Family::HoMod, 2, 2, 1), c(4, 4, 4));
    // (2^2 + 2^1) + (2^4 + 2^3) + 1
    assert_eq!(observed(Family::HoMem, 3, 3, 1).events, 31);
    assert_eq!(observed(Family::HoMem, 3, 2, 1).events, 7);
    assert_eq!(homem_event_count(3, 3).unwrap(), 31);
    assert_eq!(homod_event_count(2, 2).unwrap(), 4);
}

#[test]
fn hi_and_ho_counters_are_identical() {
    for w in 2..=8 {
        for d in 1..=8 {
            assert_eq!(observed(Family::Hi, w, d, 1), observed(Family::Ho, w, d, 1));
        }
    }
}

#[test]
fn counters_scale_linearly_with_injections() {
    for f in Family::ALL {
        let one = observed(f, 4, 3, 1);
        for n in [2u64, 3, 5] {
            let many = observed(f, 4, 3, n as u32);
            assert_eq!(
                many,
                Counts {
                    delta_int: n * one.delta_int,
                    delta_ext: n * one.delta_ext,
                    events: n * one.events,
                },
                "{f} N={n}"
            );
        }
    }
}

#[test]
fn li_with_three_events() {
    assert_eq!(observed(Family::Li, 4, 3, 3).delta_int, 21);
}
