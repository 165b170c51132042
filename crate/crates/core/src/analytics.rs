//! Closed-form and recursive predictions of atomic-model, transition and
//! event counts for every DEVStone family.
//!
//! All arithmetic is checked `u128`; overflow is reported, never wrapped.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::devstone::{BenchmarkSpec, Counts, Family, SpecError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("count for {family}({width},{depth}) overflows 128-bit arithmetic")]
    Overflow {
        family: Family,
        width: u32,
        depth: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnalyticPrediction {
    pub n_atomics: u128,
    pub n_delta_int: u128,
    pub n_delta_ext: u128,
    pub n_events: u128,
}

impl AnalyticPrediction {
    /// True when the observed counters equal the predicted ones exactly.
    pub fn matches(&self, observed: &Counts) -> bool {
        self.n_delta_int == u128::from(observed.delta_int)
            && self.n_delta_ext == u128::from(observed.delta_ext)
            && self.n_events == u128::from(observed.events)
    }
}

#[derive(Debug, Clone, Copy)]
struct Overflow;

type Checked<T> = Result<T, Overflow>;

fn ck<T>(v: Option<T>) -> Checked<T> {
    v.ok_or(Overflow)
}

/// 1 + 2 + ... + n, zero for n <= 0.
fn triangular(n: i64) -> u128 {
    if n <= 0 {
        0
    } else {
        let n = n as u128;
        n * (n + 1) / 2
    }
}

fn pow(base: u128, exp: u32) -> Checked<u128> {
    ck(base.checked_pow(exp))
}

fn li_transitions(w: u128, d: u128) -> Checked<u128> {
    ck((w - 1).checked_mul(d - 1).and_then(|x| x.checked_add(1)))
}

/// HI/HO per-event transitions, as the sum `((w-1) + sum_{i=1}^{w-2} i)(d-1) + 1`.
pub fn hi_transitions_sum_form(w: u32, d: u32) -> u128 {
    let (w, d) = (u128::from(w), u128::from(d));
    let per_level = (w - 1) + triangular(w as i64 - 2);
    per_level * (d - 1) + 1
}

/// HI/HO per-event transitions, as the closed form `((w^2 - w)/2)(d-1) + 1`.
pub fn hi_transitions_closed_form(w: u32, d: u32) -> u128 {
    let (w, d) = (u128::from(w), u128::from(d));
    ((w * w - w) / 2) * (d - 1) + 1
}

/// Atomic models in a built hierarchy.
pub fn atomic_count(family: Family, width: u32, depth: u32) -> Result<u128, AnalyticsError> {
    let (w, d) = (u128::from(width), u128::from(depth));
    let per_level = match family {
        Family::Li | Family::Hi | Family::Ho => w - 1,
        Family::HoMod => (w - 1) + triangular(width as i64 - 1),
        Family::HoMem => 2 * (w - 1),
    };
    ck(per_level.checked_mul(d - 1).and_then(|x| x.checked_add(1))).map_err(|_| {
        AnalyticsError::Overflow {
            family,
            width,
            depth,
        }
    })
}

/// HOmod per-event transitions:
/// `(d-1)(w-1)^2 + ((d-1) + (w-1) sum_{i=1}^{d-2} i) ((w-1) + sum_{i=1}^{w-1} i) + 1`.
fn homod_transitions(width: u32, depth: u32) -> Checked<u128> {
    let (w, d) = (u128::from(width), u128::from(depth));
    let first = ck((d - 1).checked_mul(ck((w - 1).checked_mul(w - 1))?))?;
    let levels = ck((w - 1)
        .checked_mul(triangular(depth as i64 - 2))
        .and_then(|x| x.checked_add(d - 1)))?;
    let row = (w - 1) + triangular(width as i64 - 1);
    ck(ck(levels.checked_mul(row))?
        .checked_add(first)
        .and_then(|x| x.checked_add(1)))
}

/// Helper tables of the HOmod event recursion: weights `W_i = max(w-i, 0)`,
/// level spans `K_1 = 1, K_l = K_{l-1} + W_1`, and the table
/// `P_1^1 = 1, P_l^j = (w-1) sum_{i=1}^{w} P_{l-1}^{j-i+1}`, zero outside
/// `1..=K_l`.
#[derive(Debug, Clone)]
pub struct HomodRecursion {
    width: u32,
    spans: Vec<u128>,
    /// `table[l-1][j-1] = P_l^j` for `j` in `1..=K_l`.
    table: Vec<Vec<u128>>,
}

impl HomodRecursion {
    /// Builds the tables for levels `1..=levels`.
    pub fn new(width: u32, levels: u32) -> Option<Self> {
        let mut r = HomodRecursion {
            width,
            spans: Vec::new(),
            table: Vec::new(),
        };
        let w1 = u128::from(width.saturating_sub(1));
        for l in 1..=levels as usize {
            if l == 1 {
                r.spans.push(1);
                r.table.push(vec![1]);
                continue;
            }
            let span = r.spans[l - 2].checked_add(w1)?;
            let mut row = Vec::with_capacity(span as usize);
            for j in 1..=span as i64 {
                let mut sum: u128 = 0;
                for i in 1..=i64::from(width) {
                    sum = sum.checked_add(r.p(l - 1, j - i + 1))?;
                }
                row.push(sum.checked_mul(w1)?);
            }
            r.spans.push(span);
            r.table.push(row);
        }
        Some(r)
    }

    pub fn weight(&self, i: i64) -> u128 {
        (i64::from(self.width) - i).max(0) as u128
    }

    pub fn span(&self, level: usize) -> u128 {
        self.spans[level - 1]
    }

    /// `P_level^j`, zero outside the table's support.
    pub fn p(&self, level: usize, j: i64) -> u128 {
        if level == 0 || level > self.table.len() || j < 1 {
            return 0;
        }
        self.table[level - 1]
            .get((j - 1) as usize)
            .copied()
            .unwrap_or(0)
    }

    /// Inner term of the event sum for one level and round `c`:
    /// `W_1 * sum_{i=1}^{w} P_l^{c-i+1} + sum_{i=1}^{w} W_i P_l^{c-i+1}`.
    fn term(&self, level: usize, c: i64) -> Option<u128> {
        let w = i64::from(self.width);
        let mut plain: u128 = 0;
        let mut weighted: u128 = 0;
        for i in 1..=w {
            let p = self.p(level, c - i + 1);
            plain = plain.checked_add(p)?;
            weighted = weighted.checked_add(self.weight(i).checked_mul(p)?)?;
        }
        self.weight(1).checked_mul(plain)?.checked_add(weighted)
    }
}

/// One `(level, round)` contribution to the HOmod event count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HomodTerm {
    pub level: u32,
    pub round: u32,
    pub value: u128,
}

/// Every non-constant term of the HOmod event sum, for diagnosing mismatches.
pub fn homod_event_terms(width: u32, depth: u32) -> Result<Vec<HomodTerm>, AnalyticsError> {
    let overflow = AnalyticsError::Overflow {
        family: Family::HoMod,
        width,
        depth,
    };
    BenchmarkSpec::new(Family::HoMod, width, depth).validate()?;
    let levels = depth - 1;
    let rec = HomodRecursion::new(width, levels).ok_or(overflow.clone())?;
    let mut terms = Vec::new();
    for l in 1..=levels as usize {
        let rounds = rec.span(l) + u128::from(width) - 1;
        for c in 1..=rounds as i64 {
            terms.push(HomodTerm {
                level: l as u32,
                round: c as u32,
                value: rec.term(l, c).ok_or(overflow.clone())?,
            });
        }
    }
    Ok(terms)
}

/// HOmod events for one injected event:
/// `sum_{l=1}^{d-1} sum_{c=1}^{K_l+w-1} (W_1 sum_i P_l^{c-i+1} + sum_i W_i P_l^{c-i+1}) + 1`.
pub fn homod_event_count(width: u32, depth: u32) -> Result<u128, AnalyticsError> {
    let overflow = AnalyticsError::Overflow {
        family: Family::HoMod,
        width,
        depth,
    };
    let mut total: u128 = 1;
    for t in homod_event_terms(width, depth)? {
        total = total.checked_add(t.value).ok_or(overflow.clone())?;
    }
    Ok(total)
}

/// HOmem events for one injected event:
/// `sum_{l=1}^{d-1} ((w-1)^{2l} + (w-1)^{2l-1}) + 1`.
pub fn homem_event_count(width: u32, depth: u32) -> Result<u128, AnalyticsError> {
    BenchmarkSpec::new(Family::HoMem, width, depth).validate()?;
    let b = u128::from(width - 1);
    let sum = (1..depth).try_fold(1u128, |acc, l| {
        let term = ck(pow(b, 2 * l)?.checked_add(pow(b, 2 * l - 1)?))?;
        ck(acc.checked_add(term))
    });
    sum.map_err(|_| AnalyticsError::Overflow {
        family: Family::HoMem,
        width,
        depth,
    })
}

/// Per-family prediction for `spec.n_events` injected events.
pub fn predict(spec: &BenchmarkSpec) -> Result<AnalyticPrediction, AnalyticsError> {
    spec.validate()?;
    let (family, width, depth) = (spec.family, spec.width, spec.depth);
    let overflow = AnalyticsError::Overflow {
        family,
        width,
        depth,
    };
    let (w, d) = (u128::from(width), u128::from(depth));
    let n_atomics = atomic_count(family, width, depth)?;
    let (ints, exts, events) = match family {
        Family::Li => {
            let t = li_transitions(w, d).map_err(|_| overflow.clone())?;
            (t, t, t)
        }
        Family::Hi | Family::Ho => {
            let t = hi_transitions_closed_form(width, depth);
            (t, t, t)
        }
        Family::HoMod => {
            let t = homod_transitions(width, depth).map_err(|_| overflow.clone())?;
            (t, t, homod_event_count(width, depth)?)
        }
        Family::HoMem => (n_atomics, n_atomics, homem_event_count(width, depth)?),
    };
    let n = u128::from(spec.n_events);
    let scale = |x: u128| x.checked_mul(n).ok_or(overflow.clone());
    Ok(AnalyticPrediction {
        n_atomics,
        n_delta_int: scale(ints)?,
        n_delta_ext: scale(exts)?,
        n_events: scale(events)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(f: Family, w: u32, d: u32) -> [u128; 4] {
        let r = predict(&BenchmarkSpec::new(f, w, d)).unwrap();
        [r.n_atomics, r.n_delta_int, r.n_delta_ext, r.n_events]
    }

    #[test]
    fn anchor_values() {
        assert_eq!(p(Family::Li, 2, 1), [1, 1, 1, 1]);
        assert_eq!(p(Family::Li, 4, 3), [7, 7, 7, 7]);
        assert_eq!(p(Family::Hi, 4, 3), [7, 13, 13, 13]);
        assert_eq!(p(Family::Ho, 4, 3), [7, 13, 13, 13]);
        assert_eq!(p(Family::HoMod, 2, 2), [3, 4, 4, 4]);
        assert_eq!(p(Family::HoMem, 3, 3)[3], 31);
        assert_eq!(p(Family::Li, 1502, 1501)[0], 2_251_501);
    }

    #[test]
    fn atomic_counts() {
        assert_eq!(atomic_count(Family::HoMod, 3, 2).unwrap(), 6);
        assert_eq!(atomic_count(Family::HoMem, 3, 2).unwrap(), 5);
    }

    #[test]
    fn degenerate_depth_is_one_of_everything() {
        for f in Family::ALL {
            for w in 2..8 {
                assert_eq!(p(f, w, 1), [1, 1, 1, 1], "{f}({w},1)");
            }
        }
    }

    #[test]
    fn hi_forms_agree() {
        for w in 2..200 {
            for d in 1..50 {
                assert_eq!(
                    hi_transitions_sum_form(w, d),
                    hi_transitions_closed_form(w, d)
                );
            }
        }
    }

    #[test]
    fn homod_event_hand_values() {
        assert_eq!(homod_event_count(2, 1).unwrap(), 1);
        assert_eq!(homod_event_count(2, 2).unwrap(), 4);
        assert_eq!(homod_event_count(3, 2).unwrap(), 10);
        let terms = homod_event_terms(2, 2).unwrap();
        let values: Vec<_> = terms.iter().map(|t| (t.level, t.round, t.value)).collect();
        assert_eq!(values, [(1, 1, 2), (1, 2, 1)]);
    }

    #[test]
    fn homod_recursion_tables() {
        let r = HomodRecursion::new(3, 3).unwrap();
        assert_eq!([r.span(1), r.span(2), r.span(3)], [1, 3, 5]);
        // P_2^j = 2 * (P_1^j + P_1^{j-1} + P_1^{j-2})
        assert_eq!([r.p(2, 1), r.p(2, 2), r.p(2, 3), r.p(2, 4)], [2, 2, 2, 0]);
        assert_eq!(r.p(3, 3), 2 * (2 + 2 + 2));
        assert_eq!(r.p(3, 0), 0);
        assert_eq!([r.weight(1), r.weight(3), r.weight(4)], [2, 0, 0]);
    }

    #[test]
    fn homem_event_hand_values() {
        for d in 1..20 {
            assert_eq!(homem_event_count(2, d).unwrap(), 2 * u128::from(d - 1) + 1);
        }
        assert_eq!(homem_event_count(3, 2).unwrap(), 7);
        // 9^18 + 9^17 + ... + 9^1 + 1
        let expected: u128 = (1..=18).map(|k| 9u128.pow(k)).sum::<u128>() + 1;
        assert_eq!(homem_event_count(10, 10).unwrap(), expected);
    }

    #[test]
    fn overflow_is_reported() {
        let err = homem_event_count(1_000_000, 100).unwrap_err();
        assert!(matches!(
            err,
            AnalyticsError::Overflow {
                family: Family::HoMem,
                ..
            }
        ));
        let err = predict(&BenchmarkSpec::new(Family::HoMod, 1000, 60)).unwrap_err();
        assert!(matches!(err, AnalyticsError::Overflow { .. }));
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(matches!(
            predict(&BenchmarkSpec::new(Family::Li, 1, 1)),
            Err(AnalyticsError::Spec(_))
        ));
    }

    #[test]
    fn scales_with_event_count() {
        for f in Family::ALL {
            let one = predict(&BenchmarkSpec::new(f, 5, 4)).unwrap();
            let many = predict(&BenchmarkSpec::new(f, 5, 4).with_events(7)).unwrap();
            assert_eq!(many.n_atomics, one.n_atomics);
            assert_eq!(many.n_delta_int, 7 * one.n_delta_int);
            assert_eq!(many.n_delta_ext, 7 * one.n_delta_ext);
            assert_eq!(many.n_events, 7 * one.n_events);
        }
    }
}
