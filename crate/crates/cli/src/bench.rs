//! `sofa bench`: obfuscation and filtering times per scheme.
//!
//! CSV columns:
//! `scheme,backend,kappa,phase,rules,items,min_ms,median_ms,max_ms,encode,re_rand,mul,is_zero`.
//! For `phase=obfuscate` one item is a whole firewall build; for
//! `phase=filter` one item is one packet. Times are per item over
//! `repeat` runs; op counts are those of the last run.

use std::time::Instant;

use sofa_core::matcher::Matcher;
use sofa_core::rules::AclRule;
use sofa_core::{Execution, OpCounter, OpCounts, RandomSource};

use crate::pipeline::{build_firewall, random_packets, BuildConfig, PipelineError};

pub const CSV_HEADER: &str =
    "scheme,backend,kappa,phase,rules,items,min_ms,median_ms,max_ms,encode,re_rand,mul,is_zero";

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub scheme: String,
    pub backend: String,
    pub kappa: String,
    pub phase: &'static str,
    pub rules: usize,
    pub items: usize,
    pub min_ms: f64,
    pub median_ms: f64,
    pub max_ms: f64,
    pub ops: OpCounts,
}

impl BenchRecord {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.4},{:.4},{:.4},{},{},{},{}",
            self.scheme,
            self.backend,
            self.kappa,
            self.phase,
            self.rules,
            self.items,
            self.min_ms,
            self.median_ms,
            self.max_ms,
            self.ops.encode,
            self.ops.re_rand,
            self.ops.mul,
            self.ops.is_zero
        )
    }
}

/// min / median / max of the samples.
pub fn summarize(samples: &mut [f64]) -> (f64, f64, f64) {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    let median = if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2.0
    };
    (samples[0], median, samples[n - 1])
}

pub struct BenchPlan<'a> {
    pub acl: &'a [AclRule],
    pub configs: Vec<BuildConfig>,
    pub rule_counts: Vec<usize>,
    pub packets: usize,
    pub repeat: usize,
    pub seed: u64,
    pub execution: Execution,
}

pub fn run(plan: &BenchPlan) -> Result<Vec<BenchRecord>, PipelineError> {
    let repeat = plan.repeat.max(1);
    let mut out = Vec::new();
    let root = RandomSource::new(plan.seed);
    let packets = random_packets(plan.acl, plan.packets, &mut root.fork("bench-packets", 0));
    for cfg in &plan.configs {
        for &l in &plan.rule_counts {
            let rules = &plan.acl[..l.min(plan.acl.len())];
            let mut build_ms = Vec::with_capacity(repeat);
            let mut filter_ms = Vec::with_capacity(repeat);
            let (mut build_ops, mut filter_ops) = (OpCounts::default(), OpCounts::default());
            let mut kappa = String::new();
            for rep in 0..repeat {
                let counter = OpCounter::new();
                let start = Instant::now();
                let fw = build_firewall(
                    rules,
                    cfg,
                    &root.fork("bench-build", rep as u64),
                    Some(&counter),
                )?;
                build_ms.push(start.elapsed().as_secs_f64() * 1e3);
                build_ops = counter.snapshot();
                kappa = fw
                    .kappas()
                    .iter()
                    .map(u32::to_string)
                    .collect::<Vec<_>>()
                    .join("+");
                if packets.is_empty() {
                    continue;
                }
                let counter = OpCounter::new();
                let matcher = Matcher::with_counter(&counter);
                let start = Instant::now();
                for d in matcher.filter_packets(&fw, &packets, plan.execution) {
                    d.expect("freshly built firewall filters cleanly");
                }
                filter_ms.push(start.elapsed().as_secs_f64() * 1e3 / packets.len() as f64);
                filter_ops = counter.snapshot();
            }
            let record = |phase, items, samples: &mut Vec<f64>, ops| {
                let (min_ms, median_ms, max_ms) = summarize(samples);
                BenchRecord {
                    scheme: cfg.scheme.to_string(),
                    backend: cfg.options.backend.id().to_string(),
                    kappa: kappa.clone(),
                    phase,
                    rules: rules.len(),
                    items,
                    min_ms,
                    median_ms,
                    max_ms,
                    ops,
                }
            };
            out.push(record("obfuscate", 1, &mut build_ms, build_ops));
            if !filter_ms.is_empty() {
                out.push(record("filter", packets.len(), &mut filter_ms, filter_ops));
            }
        }
    }
    Ok(out)
}
