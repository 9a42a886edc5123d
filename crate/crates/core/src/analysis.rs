//! Leakage of the basic scheme's shared units, and operation counting for
//! the complexity claims.

use rand::seq::index::sample;
use statrs::function::gamma::ln_gamma;
use std::collections::HashSet;
use std::ops::{Add, Sub};
use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

use crate::exec::Execution;
use crate::rng::RandomSource;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("at least one Monte Carlo trial is required")]
    NoTrials,
    #[error("wildcard count {w} exceeds rule width {n}")]
    WildcardsExceedWidth { w: usize, n: usize },
}

/// Two rules of width `n` with `w1`, `w2` wildcard bits drawing unit
/// indices from `m_units` equal-ratio and `n_units` unequal-ratio units.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LeakageQuery {
    pub m_units: usize,
    pub n_units: usize,
    pub w1: usize,
    pub w2: usize,
    pub n: usize,
}

impl LeakageQuery {
    pub fn new(
        m_units: usize,
        n_units: usize,
        w1: usize,
        w2: usize,
        n: usize,
    ) -> Result<Self, AnalysisError> {
        for w in [w1, w2] {
            if w > n {
                return Err(AnalysisError::WildcardsExceedWidth { w, n });
            }
        }
        Ok(Self {
            m_units,
            n_units,
            w1,
            w2,
            n,
        })
    }

    pub fn m1(&self) -> usize {
        self.n - self.w1
    }

    pub fn m2(&self) -> usize {
        self.n - self.w2
    }

    fn infeasible(&self) -> bool {
        self.w1 + self.w2 > self.m_units || self.m1() + self.m2() > self.n_units
    }
}

/// `ln( (P-a)!·(P-b)! / (P!·(P-a-b)!) )`: log-probability that two
/// independent without-replacement draws of sizes `a` and `b` from `P`
/// slots are disjoint.
fn ln_disjoint(pool: usize, a: usize, b: usize) -> f64 {
    let lf = |x: usize| ln_gamma(x as f64 + 1.0);
    lf(pool - a) + lf(pool - b) - lf(pool) - lf(pool - a - b)
}

/// Probability that two rules share at least one unit index.
///
/// Evaluated in log-gamma form; returns exactly 1 when a collision is
/// forced by pigeonhole.
pub fn leakage_probability(q: &LeakageQuery) -> f64 {
    if q.infeasible() {
        return 1.0;
    }
    let ln_keep = ln_disjoint(q.m_units, q.w1, q.w2) + ln_disjoint(q.n_units, q.m1(), q.m2());
    (1.0 - ln_keep.exp()).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: u64,
}

const MC_CHUNK: u64 = 4096;

/// Simulate pairs of independent `P_r` draws and count index collisions.
pub fn leakage_monte_carlo(
    q: &LeakageQuery,
    trials: u64,
    rng: &RandomSource,
) -> Result<Estimate, AnalysisError> {
    leakage_monte_carlo_with(q, trials, rng, Execution::default())
}

pub fn leakage_monte_carlo_with(
    q: &LeakageQuery,
    trials: u64,
    rng: &RandomSource,
    exec: Execution,
) -> Result<Estimate, AnalysisError> {
    if trials == 0 {
        return Err(AnalysisError::NoTrials);
    }
    if q.infeasible() {
        return Ok(Estimate {
            mean: 1.0,
            stderr: 0.0,
            trials,
        });
    }
    let chunks = trials.div_ceil(MC_CHUNK);
    let hits: u64 = exec
        .map_indexed(chunks as usize, |c| {
            let mut r = rng.fork("leakage-mc", c as u64);
            let count = MC_CHUNK.min(trials - c as u64 * MC_CHUNK);
            (0..count).filter(|_| collides(q, &mut r)).count() as u64
        })
        .into_iter()
        .sum();
    let mean = hits as f64 / trials as f64;
    Ok(Estimate {
        mean,
        stderr: (mean * (1.0 - mean) / trials as f64).sqrt(),
        trials,
    })
}

fn collides(q: &LeakageQuery, rng: &mut RandomSource) -> bool {
    // E and UE are disjoint, so collisions can only happen within one pool
    let overlap = |pool: usize, a: usize, b: usize, rng: &mut RandomSource| {
        if a == 0 || b == 0 {
            return false;
        }
        let first: HashSet<usize> = sample(rng, pool, a).into_iter().collect();
        sample(rng, pool, b).into_iter().any(|x| first.contains(&x))
    };
    let e = overlap(q.m_units, q.w1, q.w2, rng);
    let ue = overlap(q.n_units, q.m1(), q.m2(), rng);
    e || ue
}

/// Plain snapshot of [`OpCounter`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub samp: u64,
    pub encode: u64,
    pub re_rand: u64,
    pub add: u64,
    pub neg: u64,
    pub mul: u64,
    pub is_zero: u64,
}

impl Add for OpCounts {
    type Output = OpCounts;
    fn add(self, o: OpCounts) -> OpCounts {
        OpCounts {
            samp: self.samp + o.samp,
            encode: self.encode + o.encode,
            re_rand: self.re_rand + o.re_rand,
            add: self.add + o.add,
            neg: self.neg + o.neg,
            mul: self.mul + o.mul,
            is_zero: self.is_zero + o.is_zero,
        }
    }
}

impl Sub for OpCounts {
    type Output = OpCounts;
    fn sub(self, o: OpCounts) -> OpCounts {
        OpCounts {
            samp: self.samp - o.samp,
            encode: self.encode - o.encode,
            re_rand: self.re_rand - o.re_rand,
            add: self.add - o.add,
            neg: self.neg - o.neg,
            mul: self.mul - o.mul,
            is_zero: self.is_zero - o.is_zero,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Samp,
    Encode,
    ReRand,
    Add,
    Neg,
    Mul,
    IsZero,
}

/// Run-scoped procedure counter. Shared by reference between the workers
/// of one run; monotone.
#[derive(Debug, Default)]
pub struct OpCounter {
    counts: [AtomicU64; 7],
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, op: Op) {
        self.counts[op as usize].fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> OpCounts {
        let c = |op: Op| self.counts[op as usize].load(Ordering::Relaxed);
        OpCounts {
            samp: c(Op::Samp),
            encode: c(Op::Encode),
            re_rand: c(Op::ReRand),
            add: c(Op::Add),
            neg: c(Op::Neg),
            mul: c(Op::Mul),
            is_zero: c(Op::IsZero),
        }
    }
}

pub(crate) fn record(counter: Option<&OpCounter>, op: Op) {
    if let Some(c) = counter {
        c.record(op);
    }
}

/// Shape of one obfuscation run, enough to predict its encoding cost.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SchemeShape {
    Naive {
        n: u64,
        l: u64,
    },
    Basic {
        m_units: u64,
        n_units: u64,
        l: u64,
    },
    Blocking {
        domain_sizes: Vec<u64>,
        l: u64,
    },
    /// Divide-and-conquer: one inner shape per part.
    Dnc(Vec<SchemeShape>),
}

impl SchemeShape {
    /// Predicted `encode` calls; `re_rand` calls are equal.
    pub fn predicted_encodes(&self) -> u64 {
        match self {
            SchemeShape::Naive { n, l } => 2 * l * (2 * n + 1),
            SchemeShape::Basic {
                m_units,
                n_units,
                l,
            } => 4 * (m_units + n_units) + 2 * l,
            SchemeShape::Blocking { domain_sizes, l } => {
                2 * l * (domain_sizes.iter().sum::<u64>() + 1)
            }
            SchemeShape::Dnc(parts) => parts.iter().map(SchemeShape::predicted_encodes).sum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountReport {
    pub shape: SchemeShape,
    pub predicted_encode: u64,
    pub predicted_re_rand: u64,
    pub measured_encode: u64,
    pub measured_re_rand: u64,
}

impl CountReport {
    pub fn matches(&self) -> bool {
        self.predicted_encode == self.measured_encode
            && self.predicted_re_rand == self.measured_re_rand
    }
}

/// Compare counts from one obfuscation run with the closed forms.
pub fn count_report(counts: &OpCounts, shape: SchemeShape) -> CountReport {
    let predicted = shape.predicted_encodes();
    CountReport {
        shape,
        predicted_encode: predicted,
        predicted_re_rand: predicted,
        measured_encode: counts.encode,
        measured_re_rand: counts.re_rand,
    }
}
