use proptest::prelude::*;
use sofa_core::analysis::{count_report, leakage_probability, LeakageQuery, SchemeShape};
use sofa_core::firewall::InnerScheme;
use sofa_core::obfuscate::{BasicSchemeConfig, ObfuscationOptions, Obfuscator};
use sofa_core::{Action, BitMode, BitRule, OpCounter, RandomSource};

fn rules(n: usize, l: usize, seed: u64) -> Vec<BitRule> {
    use rand::Rng;
    let mut rng = RandomSource::new(seed);
    (0..l)
        .map(|_| {
            let bits = (0..n).map(|_| rng.gen()).collect();
            let wild = (0..n).map(|_| rng.gen_bool(0.3)).collect();
            BitRule::new(bits, wild, Action::permit()).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn encode_counts_follow_closed_forms(n in 1usize..24, l in 0usize..12, seed in any::<u64>()) {
        let rs = rules(n, l, seed);
        let mode = BitMode::Raw(n);
        let rng = RandomSource::new(seed);
        let cfg = BasicSchemeConfig::for_width(n);

        let c = OpCounter::new();
        Obfuscator::new(ObfuscationOptions::default()).with_counter(&c).naive(&rs, mode, &rng).unwrap();
        let shape = SchemeShape::Naive { n: n as u64, l: l as u64 };
        prop_assert!(count_report(&c.snapshot(), shape).matches());

        let c = OpCounter::new();
        Obfuscator::new(ObfuscationOptions::default()).with_counter(&c).basic(&rs, mode, cfg, &rng).unwrap();
        let shape = SchemeShape::Basic { m_units: cfg.m as u64, n_units: cfg.n as u64, l: l as u64 };
        prop_assert!(count_report(&c.snapshot(), shape).matches());
    }

    #[test]
    fn dnc_counts_sum_over_parts(parts in 1usize..5, width in 1usize..6, l in 1usize..6, seed in any::<u64>()) {
        let n = parts * width;
        let rs = rules(n, l, seed);
        let c = OpCounter::new();
        Obfuscator::new(ObfuscationOptions::default())
            .with_counter(&c)
            .dnc(&rs, BitMode::Raw(n), parts, InnerScheme::Naive, None, &RandomSource::new(seed))
            .unwrap();
        let shape = SchemeShape::Dnc(vec![SchemeShape::Naive { n: width as u64, l: l as u64 }; parts]);
        prop_assert!(count_report(&c.snapshot(), shape).matches());
    }

    #[test]
    fn leakage_is_a_symmetric_probability(
        m in 0usize..40, n_units in 0usize..40, w1 in 0usize..12, w2 in 0usize..12, extra in 0usize..12,
    ) {
        let n = w1.max(w2) + extra;
        let q = LeakageQuery::new(m, n_units, w1, w2, n).unwrap();
        let p = leakage_probability(&q);
        prop_assert!((0.0..=1.0).contains(&p));
        let swapped = LeakageQuery::new(m, n_units, w2, w1, n).unwrap();
        prop_assert!((p - leakage_probability(&swapped)).abs() < 1e-12);
        if w1 + w2 > m || 2 * n - w1 - w2 > n_units {
            prop_assert_eq!(p, 1.0);
        }
    }

    #[test]
    fn bigger_pools_leak_less(m in 1usize..30, n_units in 1usize..30, w in 0usize..4, extra in 0usize..4) {
        let n = w + extra;
        let q = LeakageQuery::new(m, n_units, w, w, n).unwrap();
        let bigger = LeakageQuery::new(m + 1, n_units + 1, w, w, n).unwrap();
        prop_assert!(leakage_probability(&bigger) <= leakage_probability(&q) + 1e-12);
    }
}
