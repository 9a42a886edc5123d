//! Sequential vs parallel execution over the three data-parallel paths:
//! Monte Carlo leakage estimation, batch packet filtering and per-rule
//! obfuscation. On a single-core machine the two columns should coincide;
//! the gap on wider machines is the rayon speedup.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::Rng;
use std::hint::black_box;
use std::time::Duration;

use sofa_core::analysis::{leakage_monte_carlo_with, LeakageQuery};
use sofa_core::firewall::InnerScheme;
use sofa_core::matcher::{Matcher, PacketView};
use sofa_core::obfuscate::{BasicSchemeConfig, ObfuscationOptions, Obfuscator};
use sofa_core::{Action, Backend, BitMode, BitRule, Execution, RandomSource};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn rules(n: usize, l: usize) -> Vec<BitRule> {
    let mut rng = RandomSource::new(42);
    (0..l)
        .map(|_| {
            let bits = (0..n).map(|_| rng.gen()).collect();
            let wild = (0..n).map(|_| rng.gen_bool(0.25)).collect();
            BitRule::new(bits, wild, Action::permit()).unwrap()
        })
        .collect()
}

fn monte_carlo(c: &mut Criterion) {
    let q = LeakageQuery::new(64, 64, 8, 8, 32).unwrap();
    let trials = 50_000;
    let rng = RandomSource::new(1);
    let mut g = c.benchmark_group("leakage_monte_carlo");
    g.throughput(Throughput::Elements(trials));
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| leakage_monte_carlo_with(&q, trials, &rng, exec).unwrap())
        });
    }
    g.finish();
}

fn batch_filter(c: &mut Criterion) {
    let n = 32;
    let rs = rules(n, 10);
    let mode = BitMode::Raw(n);
    let mut rng = RandomSource::new(7);
    let views: Vec<PacketView> = (0..256)
        .map(|_| PacketView::from_value(rng.gen::<u32>() as u64, n))
        .collect();
    let mut g = c.benchmark_group("batch_filter");
    g.throughput(Throughput::Elements(views.len() as u64));
    let builds = [
        ("transparent-basic", Backend::Transparent, None),
        ("clt-dnc", Backend::clt(), Some(4)),
    ];
    for (label, backend, parts) in builds {
        let ob = Obfuscator::new(ObfuscationOptions::with_backend(backend));
        let fw = match parts {
            Some(k) => ob.dnc(
                &rs,
                mode,
                k,
                InnerScheme::Naive,
                None,
                &RandomSource::new(1),
            ),
            None => ob.basic(
                &rs,
                mode,
                BasicSchemeConfig::for_width(n),
                &RandomSource::new(1),
            ),
        }
        .unwrap();
        for (name, exec) in MODES {
            g.bench_with_input(BenchmarkId::new(label, name), &fw, |b, fw| {
                b.iter(|| black_box(Matcher::new().filter_views(fw, &views, exec)))
            });
        }
    }
    g.finish();
}

fn obfuscation(c: &mut Criterion) {
    let n = 8;
    let rs = rules(n, 16);
    let mut g = c.benchmark_group("obfuscate_naive_clt");
    g.throughput(Throughput::Elements(rs.len() as u64));
    for (name, exec) in MODES {
        let options = ObfuscationOptions {
            execution: exec,
            ..ObfuscationOptions::with_backend(Backend::clt())
        };
        g.bench_function(name, |b| {
            b.iter(|| {
                Obfuscator::new(options.clone())
                    .naive(&rs, BitMode::Raw(n), &RandomSource::new(1))
                    .unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(
    name = benches;
    config = Criterion::default().sample_size(10).measurement_time(Duration::from_secs(5));
    targets = monte_carlo, batch_filter, obfuscation
);
criterion_main!(benches);
