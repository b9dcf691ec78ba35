//! Multiply/add counters for verifying how routines scale.
//!
//! Counting is off by default and confined to the current thread, so a
//! simulation run (single-threaded) sees only its own counts. Turn it on with
//! [`CountingScope`] and read results with [`counters_report`].

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ops::AddAssign;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub multiplies: u64,
    pub adds: u64,
}

impl OpCounts {
    pub fn new(multiplies: u64, adds: u64) -> Self {
        Self { multiplies, adds }
    }

    pub fn total(&self) -> u64 {
        self.multiplies + self.adds
    }
}

impl AddAssign for OpCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.multiplies += rhs.multiplies;
        self.adds += rhs.adds;
    }
}

/// Per-routine counts keyed by routine name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OpCounters {
    pub routines: BTreeMap<String, OpCounts>,
}

thread_local! {
    static REGISTRY: RefCell<Option<BTreeMap<&'static str, OpCounts>>> = const { RefCell::new(None) };
}

pub fn is_enabled() -> bool {
    REGISTRY.with(|r| r.borrow().is_some())
}

pub(crate) fn record(routine: &'static str, counts: OpCounts) {
    REGISTRY.with(|r| {
        if let Some(map) = r.borrow_mut().as_mut() {
            *map.entry(routine).or_default() += counts;
        }
    });
}

/// Clears all counts while leaving counting enabled.
pub fn reset() {
    REGISTRY.with(|r| {
        if let Some(map) = r.borrow_mut().as_mut() {
            map.clear();
        }
    });
}

pub fn counters_report(routine: &str) -> Result<OpCounts> {
    REGISTRY.with(|r| {
        r.borrow()
            .as_ref()
            .and_then(|map| map.get(routine).copied())
            .ok_or_else(|| Error::UnknownRoutine(routine.to_string()))
    })
}

pub fn snapshot() -> OpCounters {
    REGISTRY.with(|r| OpCounters {
        routines: r
            .borrow()
            .as_ref()
            .map(|map| map.iter().map(|(k, v)| (k.to_string(), *v)).collect())
            .unwrap_or_default(),
    })
}

/// Enables counting for the lifetime of the guard, starting from zero.
pub struct CountingScope {
    previous: Option<BTreeMap<&'static str, OpCounts>>,
}

impl CountingScope {
    pub fn new() -> Self {
        let previous = REGISTRY.with(|r| r.borrow_mut().replace(BTreeMap::new()));
        Self { previous }
    }
}

impl Default for CountingScope {
    fn default() -> Self {
        Self::new()
    }
}

impl Drop for CountingScope {
    fn drop(&mut self) {
        let previous = self.previous.take();
        REGISTRY.with(|r| *r.borrow_mut() = previous);
    }
}

/// Least-squares slope of `ln(count)` against `ln(dimension)`.
pub fn loglog_exponent(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(sx, sy), &(d, c)| (sx + d.ln(), sy + c.ln()));
    let (mx, my) = (sx / n, sy / n);
    let (num, den) = points.iter().fold((0.0, 0.0), |(num, den), &(d, c)| {
        let dx = d.ln() - mx;
        (num + dx * (c.ln() - my), den + dx * dx)
    });
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disabled_by_default_and_unknown_routine_errors() {
        assert!(!is_enabled());
        record("x", OpCounts::new(1, 1));
        assert_eq!(counters_report("x"), Err(Error::UnknownRoutine("x".into())));
    }

    #[test]
    fn scope_collects_and_restores() {
        {
            let _scope = CountingScope::new();
            record("a", OpCounts::new(2, 3));
            record("a", OpCounts::new(1, 0));
            assert_eq!(counters_report("a").unwrap(), OpCounts::new(3, 3));
            reset();
            assert!(counters_report("a").is_err());
        }
        assert!(!is_enabled());
    }

    #[test]
    fn exponent_of_pure_power_law() {
        let pts: Vec<(f64, f64)> = [2.0, 4.0, 8.0, 16.0].iter().map(|&d: &f64| (d, 5.0 * d.powi(3))).collect();
        assert!((loglog_exponent(&pts) - 3.0).abs() < 1e-12);
    }
}
