//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Pass criterion numbers as arguments to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rand::Rng;
use serde_json::Value;

use sofa_cli::format;
use sofa_cli::pipeline::{build_firewall, random_packets, BuildConfig, Mode};
use sofa_core::analysis::{
    count_report, leakage_monte_carlo, leakage_probability, LeakageQuery, SchemeShape,
};
use sofa_core::firewall::InnerScheme;
use sofa_core::ges::{inst_gen, ZeroTestParam};
use sofa_core::matcher::{oracle_filter, oracle_filter_acl, Matcher, PacketView, PlainRule};
use sofa_core::obfuscate::{BasicSchemeConfig, ObfuscationOptions, Obfuscator};
use sofa_core::rules::{parse_acl, FilterSet};
use sofa_core::testing::basic_with_replacement;
use sofa_core::{
    AclRule, Action, Backend, BitMode, BitRule, BlockRuleSpec, Execution, FieldLayout, Instance,
    ObfuscatedFirewall, OpCounter, PacketHeader, RandomSource, Scheme,
};

const SEED: u64 = 1;
/// Required separation between consecutive schemes in the filter-time ordering.
const TIMING_RATIO: f64 = 2.0;
const MIN_MARGIN: i64 = 8;
const LEAKAGE_TRIALS: u64 = 100_000;

type Outcome = Result<String, String>;
type Build<'a> = Box<dyn Fn(&Obfuscator) -> Result<ObfuscatedFirewall, String> + 'a>;

fn corpus() -> Vec<AclRule> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/standard_50.acl");
    parse_acl(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn options(backend: Backend) -> ObfuscationOptions {
    ObfuscationOptions::with_backend(backend)
}

fn random_bit_rule(rng: &mut RandomSource, n: usize, wildcard_p: f64) -> BitRule {
    let bits = (0..n).map(|_| rng.gen_bool(0.5)).collect();
    let wild = (0..n).map(|_| rng.gen_bool(wildcard_p)).collect();
    let action = if rng.gen_bool(0.5) {
        Action::permit()
    } else {
        Action::deny()
    };
    BitRule::new(bits, wild, action).unwrap()
}

fn random_block_rule(rng: &mut RandomSource, layout: &FieldLayout) -> BlockRuleSpec {
    let filters = layout
        .domain_sizes()
        .into_iter()
        .map(|d| {
            if rng.gen_bool(0.3) {
                FilterSet::full(d)
            } else {
                let lo = rng.gen_range(0..d);
                let hi = rng.gen_range(lo..d.min(lo + 4));
                FilterSet::from_members(d, lo..=hi)
            }
        })
        .collect();
    let action = if rng.gen_bool(0.5) {
        Action::permit()
    } else {
        Action::deny()
    };
    BlockRuleSpec::new(filters, action, layout).unwrap()
}

/// Disagreements between the obfuscated firewall and the plaintext oracle.
fn disagreements(
    fw: &ObfuscatedFirewall,
    plain: &[PlainRule],
    views: &[PacketView],
) -> Result<usize, String> {
    let got = Matcher::new().filter_views(fw, views, Execution::Parallel);
    let mut bad = 0;
    for (v, d) in views.iter().zip(got) {
        let d = d.map_err(|e| e.to_string())?;
        if d != oracle_filter(plain, v, &fw.default_action) {
            bad += 1;
        }
    }
    Ok(bad)
}

fn acl_disagreements(
    fw: &ObfuscatedFirewall,
    acl: &[AclRule],
    packets: &[PacketHeader],
) -> Result<usize, String> {
    let got = Matcher::new().filter_packets(fw, packets, Execution::Parallel);
    let mut bad = 0;
    for (p, d) in packets.iter().zip(got) {
        let d = d.map_err(|e| e.to_string())?;
        if d != oracle_filter_acl(acl, p, &fw.default_action) {
            bad += 1;
        }
    }
    Ok(bad)
}

fn margins(fw: &ObfuscatedFirewall) -> Vec<i64> {
    fw.segments
        .iter()
        .filter_map(|s| match &s.zero_test {
            ZeroTestParam::Clt(z) => Some(z.calibration_margin),
            ZeroTestParam::Transparent => None,
        })
        .collect()
}

fn build(acl: &[AclRule], scheme: Scheme, backend: Backend, label: &str) -> ObfuscatedFirewall {
    let cfg = BuildConfig::new(scheme, Mode::Standard, options(backend));
    build_firewall(acl, &cfg, &RandomSource::new(SEED).fork(label, 0), None).unwrap()
}

fn truncated(fw: &ObfuscatedFirewall, rules: usize) -> ObfuscatedFirewall {
    let mut out = fw.clone();
    out.rules.truncate(rules);
    out
}

/// Expensive CLT artifacts shared by several criteria.
#[derive(Default)]
struct Shared {
    clt_blocking: Option<ObfuscatedFirewall>,
    clt_dnc: Option<ObfuscatedFirewall>,
    clt_basic: Option<(ObfuscatedFirewall, Duration)>,
    clt_naive_time: Option<Duration>,
}

impl Shared {
    fn blocking(&mut self, acl: &[AclRule]) -> &ObfuscatedFirewall {
        self.clt_blocking.get_or_insert_with(|| {
            build(&acl[..10], Scheme::Blocking, Backend::clt(), "clt-blocking")
        })
    }

    fn dnc(&mut self, acl: &[AclRule]) -> &ObfuscatedFirewall {
        self.clt_dnc.get_or_insert_with(|| {
            build(
                &acl[..10],
                Scheme::Dnc(InnerScheme::Naive),
                Backend::clt(),
                "clt-dnc",
            )
        })
    }

    /// 50-rule basic firewall (n=32, M=N=64) and its build time.
    fn basic(&mut self, acl: &[AclRule]) -> &(ObfuscatedFirewall, Duration) {
        self.clt_basic.get_or_insert_with(|| {
            let t = Instant::now();
            let fw = build(&acl[..50], Scheme::Basic, Backend::clt(), "clt-basic");
            (fw, t.elapsed())
        })
    }

    fn naive_time(&mut self, acl: &[AclRule]) -> Duration {
        *self.clt_naive_time.get_or_insert_with(|| {
            let t = Instant::now();
            let fw = build(&acl[..50], Scheme::Naive, Backend::clt(), "clt-naive");
            let elapsed = t.elapsed();
            drop(fw);
            elapsed
        })
    }
}

fn semantic_equivalence(acl: &[AclRule]) -> Outcome {
    let mut rng = RandomSource::new(SEED).fork("toy-rules", 0);
    let n = 12;
    let mode = BitMode::Raw(n);
    let toy: Vec<BitRule> = (0..8).map(|_| random_bit_rule(&mut rng, n, 0.35)).collect();
    let plain: Vec<PlainRule> = toy.iter().cloned().map(PlainRule::Bits).collect();
    let views: Vec<PacketView> = (0..1u64 << n)
        .map(|v| PacketView::from_value(v, n))
        .collect();
    let ob = Obfuscator::new(options(Backend::Transparent));
    let root = RandomSource::new(SEED);
    let mut report = Vec::new();
    let toy_fws = [
        ("naive", ob.naive(&toy, mode, &root.fork("toy", 0))),
        (
            "basic",
            ob.basic(
                &toy,
                mode,
                BasicSchemeConfig::for_width(n),
                &root.fork("toy", 1),
            ),
        ),
        (
            "dnc",
            ob.dnc(
                &toy,
                mode,
                3,
                InnerScheme::Naive,
                None,
                &root.fork("toy", 2),
            ),
        ),
        (
            "dnc/basic",
            ob.dnc(
                &toy,
                mode,
                4,
                InnerScheme::Basic,
                None,
                &root.fork("toy", 3),
            ),
        ),
    ];
    for (name, fw) in toy_fws {
        let fw = fw.map_err(|e| format!("{name}: {e}"))?;
        let bad = disagreements(&fw, &plain, &views)?;
        ensure(bad == 0, || {
            format!("toy {name}: {bad} disagreements over 2^{n}")
        })?;
    }
    let layout = FieldLayout::toy(&[4, 4, 4]).unwrap();
    let blocks: Vec<BlockRuleSpec> = (0..8)
        .map(|_| random_block_rule(&mut rng, &layout))
        .collect();
    let fw = ob
        .blocking(&blocks, &layout, &root.fork("toy", 4))
        .map_err(|e| e.to_string())?;
    let plain: Vec<PlainRule> = blocks.into_iter().map(PlainRule::Block).collect();
    let tuples: Vec<PacketView> = (0..1u32 << n)
        .map(|v| PacketView::Tuple(vec![v >> 8, (v >> 4) & 15, v & 15]))
        .collect();
    let bad = disagreements(&fw, &plain, &tuples)?;
    ensure(bad == 0, || {
        format!("toy blocking: {bad} disagreements over 2^{n}")
    })?;
    report.push(format!("toy 12-bit exhaustive x5 schemes: 0/{}", 5 << n));

    let packets = random_packets(
        acl,
        10_000,
        &mut RandomSource::new(SEED).fork("equivalence-packets", 0),
    );
    for scheme in ["naive", "basic", "blocking", "dnc"] {
        let fw = build(
            acl,
            scheme.parse().unwrap(),
            Backend::Transparent,
            "equivalence",
        );
        let bad = acl_disagreements(&fw, acl, &packets)?;
        ensure(bad == 0, || {
            format!("{scheme} on corpus: {bad}/10000 disagreements")
        })?;
    }
    report.push("corpus 50 rules x 10^4 packets x 4 schemes: 0 disagreements".into());
    Ok(report.join("; "))
}

fn clt_correctness(acl: &[AclRule], shared: &mut Shared) -> Outcome {
    let mut lines = Vec::new();
    let mut check = |name: &str,
                     fw: &ObfuscatedFirewall,
                     rules: &[AclRule],
                     count: usize|
     -> Result<(), String> {
        let packets = random_packets(
            rules,
            count,
            &mut RandomSource::new(SEED).fork("clt-packets", count as u64),
        );
        let bad = acl_disagreements(fw, rules, &packets)?;
        let m = margins(fw);
        ensure(bad == 0, || format!("{name}: {bad}/{count} disagreements"))?;
        ensure(m.iter().all(|&x| x >= MIN_MARGIN), || {
            format!("{name}: margins {m:?}")
        })?;
        lines.push(format!(
            "{name} kappa={:?} {}x{} ok margins={m:?}",
            fw.kappas(),
            count,
            fw.rules.len()
        ));
        Ok(())
    };
    let fw = shared.blocking(acl).clone();
    check("blocking", &fw, &acl[..10], 1000)?;
    let fw = shared.dnc(acl).clone();
    check("dnc", &fw, &acl[..10], 1000)?;
    let fw = truncated(&shared.basic(acl).0, 5);
    check("basic", &fw, &acl[..5], 100)?;
    Ok(lines.join("; "))
}

fn complexity_counts() -> Outcome {
    let mut rng = RandomSource::new(SEED).fork("count-rules", 0);
    let mut checked = 0;
    for n in [8usize, 32] {
        let mode = BitMode::Raw(n);
        let layout = if n == 8 {
            FieldLayout::toy(&[4, 4]).unwrap()
        } else {
            FieldLayout::toy(&[8, 8, 8, 8]).unwrap()
        };
        for l in [1usize, 10, 50] {
            let rules: Vec<BitRule> = (0..l).map(|_| random_bit_rule(&mut rng, n, 0.3)).collect();
            let blocks: Vec<BlockRuleSpec> = (0..l)
                .map(|_| random_block_rule(&mut rng, &layout))
                .collect();
            let cfg = BasicSchemeConfig::for_width(n);
            let runs: Vec<(SchemeShape, Build)> = vec![
                (
                    SchemeShape::Naive {
                        n: n as u64,
                        l: l as u64,
                    },
                    Box::new(|ob| {
                        ob.naive(&rules, mode, &RandomSource::new(SEED))
                            .map_err(|e| e.to_string())
                    }),
                ),
                (
                    SchemeShape::Basic {
                        m_units: cfg.m as u64,
                        n_units: cfg.n as u64,
                        l: l as u64,
                    },
                    Box::new(|ob| {
                        ob.basic(&rules, mode, cfg, &RandomSource::new(SEED))
                            .map_err(|e| e.to_string())
                    }),
                ),
                (
                    SchemeShape::Blocking {
                        domain_sizes: layout.domain_sizes().into_iter().map(u64::from).collect(),
                        l: l as u64,
                    },
                    Box::new(|ob| {
                        ob.blocking(&blocks, &layout, &RandomSource::new(SEED))
                            .map_err(|e| e.to_string())
                    }),
                ),
            ];
            for (shape, run) in runs {
                let counter = OpCounter::new();
                run(&Obfuscator::new(options(Backend::Transparent)).with_counter(&counter))?;
                let report = count_report(&counter.snapshot(), shape);
                ensure(report.matches(), || format!("n={n} l={l}: {report:?}"))?;
                checked += 1;
            }
        }
    }
    let naive = SchemeShape::Naive { n: 32, l: 50 }.predicted_encodes();
    let basic = SchemeShape::Basic {
        m_units: 64,
        n_units: 64,
        l: 50,
    }
    .predicted_encodes();
    ensure(basic < naive, || format!("basic {basic} >= naive {naive}"))?;
    Ok(format!(
        "{checked} runs exact; n=32 l=50 M=N=64 encodes basic {basic} < naive {naive}"
    ))
}

fn leakage_formula() -> Outcome {
    let half = leakage_probability(&LeakageQuery::new(2, 2, 0, 0, 1).unwrap());
    let seven_eighths = leakage_probability(&LeakageQuery::new(4, 4, 1, 1, 3).unwrap());
    ensure((half - 0.5).abs() < 1e-9, || {
        format!("hand value 0.5 gave {half}")
    })?;
    ensure((seven_eighths - 0.875).abs() < 1e-9, || {
        format!("hand value 0.875 gave {seven_eighths}")
    })?;
    for (m, n_units, w1, w2, n) in [
        (2, 8, 2, 1, 3),
        (3, 3, 0, 0, 2),
        (4, 5, 1, 1, 4),
        (1, 1, 1, 1, 1),
    ] {
        let q = LeakageQuery::new(m, n_units, w1, w2, n).unwrap();
        let p = leakage_probability(&q);
        ensure(p == 1.0, || format!("pigeonhole {q:?} gave {p}"))?;
    }
    let n = 4;
    let pools = [(4usize, 4usize), (8, 8), (16, 16), (32, 32), (6, 24)];
    let wilds = [(0usize, 0usize), (0, 2), (1, 1), (2, 2), (1, 3)];
    let root = RandomSource::new(SEED).fork("leakage-grid", 0);
    let mut worst = 0.0f64;
    for (i, &(m, nu)) in pools.iter().enumerate() {
        for (j, &(w1, w2)) in wilds.iter().enumerate() {
            let q = LeakageQuery::new(m, nu, w1, w2, n).unwrap();
            let p = leakage_probability(&q);
            let est =
                leakage_monte_carlo(&q, LEAKAGE_TRIALS, &root.fork("cell", (i * 5 + j) as u64))
                    .map_err(|e| e.to_string())?;
            let sigma = (p * (1.0 - p) / LEAKAGE_TRIALS as f64).sqrt();
            let z = if sigma == 0.0 {
                0.0
            } else {
                (est.mean - p).abs() / sigma
            };
            ensure(z <= 3.0 && (sigma > 0.0 || est.mean == p), || {
                format!(
                    "cell {q:?}: closed {p:.6} vs mc {:.6} ({z:.2} sigma)",
                    est.mean
                )
            })?;
            worst = worst.max(z);
        }
    }
    Ok(format!(
        "hand values exact to 1e-9; pigeonhole = 1; 25 cells x 10^5 trials within 3 sigma (worst {worst:.2})"
    ))
}

/// Median time of `f` over `reps` runs.
fn median_time(reps: usize, mut f: impl FnMut()) -> Duration {
    let mut ts: Vec<Duration> = (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed()
        })
        .collect();
    ts.sort();
    ts[reps / 2]
}

/// Time to evaluate rule 0 against packets it matches, so every segment and
/// every multiplication runs.
fn match_time(fw: &ObfuscatedFirewall, rule: &AclRule, reps: usize) -> Duration {
    let mut rng = RandomSource::new(SEED).fork("timing-packet", 0);
    let packets: Vec<PacketHeader> = (0..reps).map(|_| rule.sample_matching(&mut rng)).collect();
    let matcher = Matcher::new();
    let mut i = 0;
    median_time(reps, || {
        let view = PacketView::of(&fw.layout, &packets[i]);
        assert!(matcher.match_rule(fw, &fw.rules[0], &view).unwrap());
        i += 1;
    })
}

fn timing_ordering(acl: &[AclRule], shared: &mut Shared) -> Outcome {
    let blocking = match_time(shared.blocking(acl), &acl[0], 101);
    let dnc = match_time(shared.dnc(acl), &acl[0], 51);
    let basic = match_time(&shared.basic(acl).0, &acl[0], 11);
    let ms = |d: Duration| d.as_secs_f64() * 1e3;
    let line = format!(
        "per-packet rule match blocking {:.3}ms < dnc {:.3}ms < basic {:.3}ms",
        ms(blocking),
        ms(dnc),
        ms(basic)
    );
    ensure(ms(dnc) >= TIMING_RATIO * ms(blocking), || {
        format!("{line}: dnc/blocking below {TIMING_RATIO}x")
    })?;
    ensure(ms(basic) >= TIMING_RATIO * ms(dnc), || {
        format!("{line}: basic/dnc below {TIMING_RATIO}x")
    })?;
    let basic_build = shared.basic(acl).1;
    let naive_build = shared.naive_time(acl);
    let build = format!(
        "obfuscation n=32 l=50 basic {:.1}s < naive {:.1}s",
        basic_build.as_secs_f64(),
        naive_build.as_secs_f64()
    );
    ensure(basic_build < naive_build, || {
        format!("{line}; {build}: ordering violated")
    })?;
    Ok(format!("{line}; {build}"))
}

fn without_replacement() -> Outcome {
    let n = 8;
    let mode = BitMode::Raw(n);
    let config = BasicSchemeConfig::for_width(n);
    let views: Vec<PacketView> = (0..1u64 << n)
        .map(|v| PacketView::from_value(v, n))
        .collect();
    let opts = || options(Backend::Transparent);
    let false_positives = |fw: &ObfuscatedFirewall, rule: &BitRule| -> Result<Vec<u64>, String> {
        let mut out = Vec::new();
        for (v, view) in views.iter().enumerate() {
            let PacketView::Bits(bits) = view else {
                unreachable!()
            };
            let hit = Matcher::new()
                .match_rule(fw, &fw.rules[0], view)
                .map_err(|e| e.to_string())?;
            if hit && !rule.matches(bits) {
                out.push(v as u64);
            }
        }
        Ok(out)
    };
    for value in 0u64..1 << n {
        let PacketView::Bits(bits) = PacketView::from_value(value, n) else {
            unreachable!()
        };
        let rule = BitRule::new(bits, vec![false; n], Action::permit()).unwrap();
        let rng = RandomSource::new(SEED).fork("replacement-search", value);
        let weak = basic_with_replacement(std::slice::from_ref(&rule), mode, config, opts(), &rng)
            .map_err(|e| e.to_string())?;
        let fps = false_positives(&weak, &rule)?;
        if let Some(&packet) = fps.first() {
            let shipped = Obfuscator::new(opts())
                .basic(std::slice::from_ref(&rule), mode, config, &rng)
                .map_err(|e| e.to_string())?;
            let shipped_fps = false_positives(&shipped, &rule)?;
            ensure(shipped_fps.is_empty(), || {
                format!(
                    "shipped path has false positives {shipped_fps:?} for rule {}",
                    rule.pattern()
                )
            })?;
            return Ok(format!(
                "rule {} packet {packet:08b}: with-replacement {} false positives, without-replacement 0 over 2^8",
                rule.pattern(),
                fps.len()
            ));
        }
    }
    Err("no false positive found for the with-replacement variant".into())
}

fn ges_properties() -> Outcome {
    let mut notes = Vec::new();
    // Level bookkeeping.
    let small =
        Instance::transparent_with_modulus(BigUint::from(1021u32), 3).map_err(|e| e.to_string())?;
    let p = &small.params;
    let at = |level: u32, v: u32| p.import_encoding(level, BigUint::from(v)).unwrap();
    ensure(p.mul(2, &at(2, 3), 2, &at(2, 5)).is_err(), || {
        "level overflow accepted".into()
    })?;
    ensure(p.add(1, &at(1, 3), &at(2, 5)).is_err(), || {
        "mixed-level add accepted".into()
    })?;
    ensure(p.is_zero(&small.zero_test, &at(2, 0)).is_err(), || {
        "zero test below top level accepted".into()
    })?;
    ensure(
        p.mul(1, &at(1, 3), 2, &at(2, 5)).unwrap().level() == 3,
        || "levels do not add".into(),
    )?;

    // Exhaustive zero-test soundness on a 10-bit ring.
    for v in 0..1021u32 {
        let e = p.mul(1, &at(1, v), 2, &at(2, 1)).unwrap();
        let z = p.is_zero(&small.zero_test, &e).unwrap();
        ensure(z == (v == 0), || format!("q=1021: is_zero({v}) = {z}"))?;
    }
    notes.push("levels ok; q=1021 zero test exhaustive".to_string());

    // CLT: ring laws through extract, zero-test soundness, determinism.
    let kappa = 4;
    let inst = inst_gen(12, kappa, &Backend::clt(), &mut RandomSource::new(SEED))
        .map_err(|e| e.to_string())?;
    let again = inst_gen(12, kappa, &Backend::clt(), &mut RandomSource::new(SEED))
        .map_err(|e| e.to_string())?;
    ensure(
        inst.params == again.params && inst.zero_test == again.zero_test,
        || "instance generation is not deterministic".into(),
    )?;
    let p = &inst.params;
    let zt = &inst.zero_test;
    let mut rng = RandomSource::new(SEED).fork("ges-props", 0);
    let enc = |rng: &mut RandomSource| {
        let x = inst.samp(rng);
        inst.encode(1, &x, rng).unwrap()
    };
    let top = |factors: &[&sofa_core::Encoding]| {
        let mut acc = factors[0].clone();
        for (i, f) in factors[1..].iter().enumerate() {
            acc = p.mul(i as u32 + 1, &acc, 1, f).unwrap();
        }
        acc
    };
    for _ in 0..100 {
        let (a, b, c, d, e) = (
            enc(&mut rng),
            enc(&mut rng),
            enc(&mut rng),
            enc(&mut rng),
            enc(&mut rng),
        );
        let bc = p.add(1, &b, &c).unwrap();
        let lhs = top(&[&a, &bc, &d, &e]);
        let rhs = p
            .add(kappa, &top(&[&a, &b, &d, &e]), &top(&[&a, &c, &d, &e]))
            .unwrap();
        ensure(
            p.extract(zt, &lhs).unwrap() == p.extract(zt, &rhs).unwrap(),
            || "distributivity".into(),
        )?;
        let swapped = top(&[&b, &a, &e, &d]);
        ensure(
            p.extract(zt, &top(&[&a, &b, &d, &e])).unwrap() == p.extract(zt, &swapped).unwrap(),
            || "commutativity".into(),
        )?;
    }
    let trials = 10_000;
    let mut errors = 0;
    for _ in 0..trials {
        let a = enc(&mut rng);
        let a2 = inst.re_rand(1, &a, &mut rng).unwrap();
        let (b, c, d) = (enc(&mut rng), enc(&mut rng), enc(&mut rng));
        let zero = top(&[&p.sub(1, &a, &a2).unwrap(), &b, &c, &d]);
        let nonzero = top(&[&a, &b, &c, &d]);
        if !p.is_zero(zt, &zero).unwrap() {
            errors += 1;
        }
        if p.is_zero(zt, &nonzero).unwrap() {
            errors += 1;
        }
    }
    let nu = match &inst.params.public {
        sofa_core::ges::PublicParams::Clt(pp) => pp.nu,
        _ => unreachable!(),
    };
    ensure(errors == 0, || {
        format!("clt zero test: {errors} errors in {} trials", 2 * trials)
    })?;
    notes.push(format!(
        "clt kappa={kappa}: ring laws x100, 0 zero-test errors in {} trials (bound 2^-{nu})",
        2 * trials
    ));

    let mut r1 = RandomSource::new(7);
    let mut r2 = RandomSource::new(7);
    let x1 = inst.encode(1, &inst.samp(&mut r1), &mut r1).unwrap();
    let x2 = inst.encode(1, &inst.samp(&mut r2), &mut r2).unwrap();
    ensure(x1 == x2, || {
        "encode is not deterministic under a fixed seed".into()
    })?;
    notes.push("bit-exact determinism".into());
    Ok(notes.join("; "))
}

fn serialization(acl: &[AclRule], shared: &mut Shared) -> Outcome {
    let mut fws: Vec<ObfuscatedFirewall> = ["naive", "basic", "blocking", "dnc", "dnc/basic"]
        .iter()
        .map(|s| {
            build(
                &acl[..10],
                s.parse().unwrap(),
                Backend::Transparent,
                "serialization",
            )
        })
        .collect();
    fws.push(shared.blocking(acl).clone());
    fws.push(shared.dnc(acl).clone());
    fws.push(truncated(&shared.basic(acl).0, 5));
    for fw in &fws {
        let text = format::to_string(fw).map_err(|e| e.to_string())?;
        let back = format::from_str(&text).map_err(|e| format!("{}: {e}", fw.scheme))?;
        ensure(&back == fw, || {
            format!("{}: decoded firewall differs", fw.scheme)
        })?;
        let again = format::to_string(&back).map_err(|e| e.to_string())?;
        ensure(again == text, || {
            format!("{}: re-encoded bytes differ", fw.scheme)
        })?;
        let v = format::to_value(fw).map_err(|e| e.to_string())?;
        ensure(format::forbidden_key(&v).is_none(), || {
            format!("{}: denylisted key", fw.scheme)
        })?;
    }
    let text = format::to_string(&fws[1]).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    let idx = v["rules"][6]["parts"][0]["indices"][3].as_u64().unwrap();
    v["rules"][6]["parts"][0]["indices"][3] = Value::from(idx ^ 1);
    let err = format::from_str(&serde_json::to_string(&v).unwrap()).unwrap_err();
    ensure(
        err.is_integrity() && err.to_string().contains("rule 6"),
        || format!("corruption: {err}"),
    )?;
    Ok(format!(
        "{} firewalls round-trip byte-identical; denylist clean; corruption caught ({err})",
        fws.len()
    ))
}

fn main() {
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let acl = corpus();
    let mut shared = Shared::default();
    let criteria: Vec<(usize, &str)> = vec![
        (1, "semantic equivalence"),
        (2, "clt correctness"),
        (3, "complexity counts"),
        (4, "leakage formula"),
        (5, "timing ordering"),
        (6, "without-replacement necessity"),
        (7, "ges properties"),
        (8, "serialization"),
    ];
    let mut failed = 0;
    for (id, name) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| match id {
            1 => semantic_equivalence(&acl),
            2 => clt_correctness(&acl, &mut shared),
            3 => complexity_counts(),
            4 => leakage_formula(),
            5 => timing_ordering(&acl, &mut shared),
            6 => without_replacement(),
            7 => ges_properties(),
            _ => serialization(&acl, &mut shared),
        }))
        .unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id} {name} [{secs:.1}s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id} {name} [{secs:.1}s]: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
