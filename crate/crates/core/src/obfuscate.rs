//! Compile plaintext rules into an [`ObfuscatedFirewall`].
//!
//! Every encoding pair `(u, v)` is built the same way: sample a level-0
//! `ρ`, encode `ρ` and `ρ·ratio` at level 1, re-randomize both. The schemes
//! differ only in which ratios they pick:
//!
//! * naive: per bit two pairs with ratios `α_{i,0}`, `α_{i,1}`, equal iff the
//!   bit is a wildcard; final ratio `Π α_{i,v[i]}`.
//! * basic: `M` equal-ratio and `N` unequal-ratio units shared by all rules,
//!   shuffled; each rule publishes an index array `P_r` drawn without
//!   replacement and a final pair.
//! * blocking: per field a secret `η_i`, one pair per domain value with
//!   ratio `η_i` on the filter set and a fresh ratio elsewhere.
//! * divide-and-conquer: split the bit string into parts, each with its own
//!   instance, and run naive or basic per part.
//!
//! Randomness is forked per segment, unit and rule, so the output does not
//! depend on the [`Execution`] mode.

use rand::seq::{index::sample, SliceRandom};
use rand::Rng;
use thiserror::Error;

use crate::analysis::{record, Op, OpCounter};
use crate::exec::Execution;
use crate::firewall::{
    EncodingPair, EncodingPairUnit, InnerScheme, Layout, ObfuscatedFirewall, ObfuscatedRule,
    RuleCipher, Scheme, Segment,
};
use crate::ges::{inst_gen, Backend, Encoding, GesError, Instance};
use crate::rng::RandomSource;
use crate::rules::{Action, BitMode, BitRule, BlockRuleSpec, FieldLayout};

pub const DEFAULT_LAMBDA: u32 = 12;
pub const DEFAULT_BLOCK_CAP: u64 = 4096;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ObfuscateError {
    #[error(transparent)]
    Ges(#[from] GesError),
    #[error("rule {rule} has width {found}, expected {expected}")]
    Width {
        rule: usize,
        expected: usize,
        found: usize,
    },
    #[error("rule {rule} needs {needed} {pool} units but only {available} exist")]
    TooFewUnits {
        rule: usize,
        pool: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("blocking layout has {size} domain values per rule, above the cap of {cap}")]
    BlockCap { size: u64, cap: u64 },
    #[error("rule {rule} was compiled for a different field layout")]
    LayoutMismatch { rule: usize },
    #[error("cannot split {width} bits into {parts} parts")]
    Parts { parts: usize, width: usize },
    #[error("{parts} parts do not divide {width} bits (remainder splitting is off)")]
    Remainder { parts: usize, width: usize },
    #[error("rule width must be at least 1")]
    EmptyWidth,
}

pub type Result<T> = std::result::Result<T, ObfuscateError>;

#[derive(Clone, Debug)]
pub struct ObfuscationOptions {
    pub lambda: u32,
    pub backend: Backend,
    pub default_action: Action,
    pub execution: Execution,
    /// Upper bound on `Σ|I_i|` for blocking.
    pub block_cap: u64,
    /// Let the last divide-and-conquer part absorb `n mod k` extra bits.
    pub allow_remainder: bool,
}

impl Default for ObfuscationOptions {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            backend: Backend::Transparent,
            default_action: Action::deny(),
            execution: Execution::default(),
            block_cap: DEFAULT_BLOCK_CAP,
            allow_remainder: false,
        }
    }
}

impl ObfuscationOptions {
    pub fn with_backend(backend: Backend) -> Self {
        Self {
            backend,
            ..Self::default()
        }
    }
}

/// Unit counts of the basic scheme: `m` equal-ratio, `n` unequal-ratio.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BasicSchemeConfig {
    pub m: usize,
    pub n: usize,
}

impl BasicSchemeConfig {
    pub fn for_width(width: usize) -> Self {
        Self {
            m: 2 * width,
            n: 2 * width,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum IndexSampling {
    WithoutReplacement,
    /// Only for demonstrating false positives in tests.
    WithReplacement,
}

/// Instance-bound helper that counts the procedures it calls.
struct Ctx<'a> {
    inst: &'a Instance,
    counter: Option<&'a OpCounter>,
}

impl Ctx<'_> {
    fn samp(&self, rng: &mut RandomSource) -> Encoding {
        record(self.counter, Op::Samp);
        self.inst.samp(rng)
    }

    fn times(&self, a: &Encoding, b: &Encoding) -> Result<Encoding> {
        record(self.counter, Op::Mul);
        Ok(self.inst.params.mul(0, a, 0, b)?)
    }

    fn product<'e>(
        &self,
        factors: impl IntoIterator<Item = &'e Encoding>,
    ) -> Result<Option<Encoding>> {
        let mut acc: Option<Encoding> = None;
        for f in factors {
            acc = Some(match acc {
                None => f.clone(),
                Some(a) => self.times(&a, f)?,
            });
        }
        Ok(acc)
    }

    fn level1(&self, e: &Encoding, rng: &mut RandomSource) -> Result<Encoding> {
        record(self.counter, Op::Encode);
        let enc = self.inst.encode(1, e, rng)?;
        record(self.counter, Op::ReRand);
        Ok(self.inst.re_rand(1, &enc, rng)?)
    }

    /// Pair with `v/u = ratio`; `None` stands for ratio 1.
    fn pair(&self, ratio: Option<&Encoding>, rng: &mut RandomSource) -> Result<EncodingPair> {
        let rho = self.samp(rng);
        let scaled = match ratio {
            Some(r) => self.times(&rho, r)?,
            None => rho.clone(),
        };
        Ok(EncodingPair {
            u: self.level1(&rho, rng)?,
            v: self.level1(&scaled, rng)?,
        })
    }

    fn unit(
        &self,
        a0: &Encoding,
        a1: &Encoding,
        rng: &mut RandomSource,
    ) -> Result<EncodingPairUnit> {
        Ok(EncodingPairUnit {
            zero: self.pair(Some(a0), rng)?,
            one: self.pair(Some(a1), rng)?,
        })
    }
}

pub struct Obfuscator<'c> {
    pub options: ObfuscationOptions,
    counter: Option<&'c OpCounter>,
}

impl<'c> Obfuscator<'c> {
    pub fn new(options: ObfuscationOptions) -> Self {
        Self {
            options,
            counter: None,
        }
    }

    /// Count `samp`/`encode`/`re_rand`/`mul` calls of subsequent runs.
    pub fn with_counter(mut self, counter: &'c OpCounter) -> Self {
        self.counter = Some(counter);
        self
    }

    pub fn naive(
        &self,
        rules: &[BitRule],
        mode: BitMode,
        rng: &RandomSource,
    ) -> Result<ObfuscatedFirewall> {
        check_widths(rules, mode.width())?;
        let (segment, ciphers) = self.bit_segment(
            rules,
            0,
            mode.width(),
            Inner::Naive,
            &rng.fork("segment", 0),
        )?;
        Ok(self.assemble(
            Scheme::Naive,
            Layout::Bits(mode),
            vec![segment],
            rules,
            vec![ciphers],
        ))
    }

    pub fn basic(
        &self,
        rules: &[BitRule],
        mode: BitMode,
        config: BasicSchemeConfig,
        rng: &RandomSource,
    ) -> Result<ObfuscatedFirewall> {
        self.basic_sampled(rules, mode, config, IndexSampling::WithoutReplacement, rng)
    }

    pub(crate) fn basic_sampled(
        &self,
        rules: &[BitRule],
        mode: BitMode,
        config: BasicSchemeConfig,
        sampling: IndexSampling,
        rng: &RandomSource,
    ) -> Result<ObfuscatedFirewall> {
        check_widths(rules, mode.width())?;
        let inner = Inner::Basic(config, sampling);
        let (segment, ciphers) =
            self.bit_segment(rules, 0, mode.width(), inner, &rng.fork("segment", 0))?;
        Ok(self.assemble(
            Scheme::Basic,
            Layout::Bits(mode),
            vec![segment],
            rules,
            vec![ciphers],
        ))
    }

    pub fn blocking(
        &self,
        rules: &[BlockRuleSpec],
        layout: &FieldLayout,
        rng: &RandomSource,
    ) -> Result<ObfuscatedFirewall> {
        let size = layout.total_domain();
        if size > self.options.block_cap {
            return Err(ObfuscateError::BlockCap {
                size,
                cap: self.options.block_cap,
            });
        }
        let domains = layout.domain_sizes();
        for (r, rule) in rules.iter().enumerate() {
            let fits = rule.filters().len() == domains.len()
                && rule
                    .filters()
                    .iter()
                    .zip(&domains)
                    .all(|(f, &d)| f.domain() == d);
            if !fits {
                return Err(ObfuscateError::LayoutMismatch { rule: r });
            }
        }
        let seg_rng = rng.fork("segment", 0);
        let kappa = layout.k() as u32 + 1;
        let inst = inst_gen(
            self.options.lambda,
            kappa,
            &self.options.backend,
            &mut seg_rng.fork("instance", 0),
        )?;
        let ctx = Ctx {
            inst: &inst,
            counter: self.counter,
        };
        let ciphers = self
            .options
            .execution
            .map_indexed(rules.len(), |r| {
                blocking_rule(&ctx, &rules[r], &mut seg_rng.fork("rule", r as u64))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let segment = Segment {
            params: inst.params.clone(),
            zero_test: inst.zero_test.clone(),
            units: Vec::new(),
            bit_offset: 0,
            bit_width: layout.covered_bits() as usize,
        };
        let rules = rules
            .iter()
            .zip(ciphers)
            .map(|(rule, c)| ObfuscatedRule {
                action: rule.action.clone(),
                parts: vec![c],
            })
            .collect();
        Ok(ObfuscatedFirewall {
            scheme: Scheme::Blocking,
            layout: Layout::Fields(layout.clone()),
            segments: vec![segment],
            rules,
            default_action: self.options.default_action.clone(),
        })
    }

    /// Divide-and-conquer over `parts` slices. `basic` sets the unit counts
    /// of every part for the basic inner scheme (default `2·width` each).
    pub fn dnc(
        &self,
        rules: &[BitRule],
        mode: BitMode,
        parts: usize,
        inner: InnerScheme,
        basic: Option<BasicSchemeConfig>,
        rng: &RandomSource,
    ) -> Result<ObfuscatedFirewall> {
        let width = mode.width();
        check_widths(rules, width)?;
        let spans = split(width, parts, self.options.allow_remainder)?;
        let mut segments = Vec::with_capacity(parts);
        let mut per_part = Vec::with_capacity(parts);
        for (s, &(offset, w)) in spans.iter().enumerate() {
            let sliced: Vec<BitRule> = rules.iter().map(|r| r.slice(offset, w)).collect();
            let inner = match inner {
                InnerScheme::Naive => Inner::Naive,
                InnerScheme::Basic => Inner::Basic(
                    basic.unwrap_or_else(|| BasicSchemeConfig::for_width(w)),
                    IndexSampling::WithoutReplacement,
                ),
            };
            let (segment, ciphers) =
                self.bit_segment(&sliced, offset, w, inner, &rng.fork("segment", s as u64))?;
            segments.push(segment);
            per_part.push(ciphers);
        }
        Ok(self.assemble(
            Scheme::Dnc(inner),
            Layout::Bits(mode),
            segments,
            rules,
            per_part,
        ))
    }

    fn assemble(
        &self,
        scheme: Scheme,
        layout: Layout,
        segments: Vec<Segment>,
        rules: &[BitRule],
        per_part: Vec<Vec<RuleCipher>>,
    ) -> ObfuscatedFirewall {
        let mut parts: Vec<Vec<RuleCipher>> = vec![Vec::with_capacity(segments.len()); rules.len()];
        for ciphers in per_part {
            for (slot, c) in parts.iter_mut().zip(ciphers) {
                slot.push(c);
            }
        }
        let rules = rules
            .iter()
            .zip(parts)
            .map(|(rule, parts)| ObfuscatedRule {
                action: rule.action.clone(),
                parts,
            })
            .collect();
        ObfuscatedFirewall {
            scheme,
            layout,
            segments,
            rules,
            default_action: self.options.default_action.clone(),
        }
    }

    fn bit_segment(
        &self,
        rules: &[BitRule],
        bit_offset: usize,
        width: usize,
        inner: Inner,
        rng: &RandomSource,
    ) -> Result<(Segment, Vec<RuleCipher>)> {
        if width == 0 {
            return Err(ObfuscateError::EmptyWidth);
        }
        if let Inner::Basic(cfg, sampling) = inner {
            if sampling == IndexSampling::WithoutReplacement {
                check_pools(rules, cfg)?;
            }
        }
        let inst = inst_gen(
            self.options.lambda,
            width as u32 + 1,
            &self.options.backend,
            &mut rng.fork("instance", 0),
        )?;
        let ctx = Ctx {
            inst: &inst,
            counter: self.counter,
        };
        let exec = self.options.execution;
        let (units, ciphers) = match inner {
            Inner::Naive => {
                let ciphers = exec
                    .map_indexed(rules.len(), |r| {
                        naive_rule(&ctx, &rules[r], &mut rng.fork("rule", r as u64))
                    })
                    .into_iter()
                    .collect::<Result<Vec<_>>>()?;
                (Vec::new(), ciphers)
            }
            Inner::Basic(cfg, sampling) => {
                let pool = BasicPool::build(&ctx, cfg, exec, rng)?;
                let ciphers = exec
                    .map_indexed(rules.len(), |r| {
                        pool.rule(&ctx, &rules[r], sampling, &mut rng.fork("rule", r as u64))
                    })
                    .into_iter()
                    .collect::<Result<Vec<_>>>()?;
                (pool.units, ciphers)
            }
        };
        let segment = Segment {
            params: inst.params.clone(),
            zero_test: inst.zero_test.clone(),
            units,
            bit_offset,
            bit_width: width,
        };
        Ok((segment, ciphers))
    }
}

#[derive(Clone, Copy)]
enum Inner {
    Naive,
    Basic(BasicSchemeConfig, IndexSampling),
}

fn check_widths(rules: &[BitRule], expected: usize) -> Result<()> {
    if expected == 0 {
        return Err(ObfuscateError::EmptyWidth);
    }
    match rules.iter().position(|r| r.width() != expected) {
        Some(rule) => Err(ObfuscateError::Width {
            rule,
            expected,
            found: rules[rule].width(),
        }),
        None => Ok(()),
    }
}

fn check_pools(rules: &[BitRule], cfg: BasicSchemeConfig) -> Result<()> {
    for (r, rule) in rules.iter().enumerate() {
        let w = rule.wildcard_count();
        let m = rule.width() - w;
        if w > cfg.m {
            return Err(ObfuscateError::TooFewUnits {
                rule: r,
                pool: "equal-ratio",
                needed: w,
                available: cfg.m,
            });
        }
        if m > cfg.n {
            return Err(ObfuscateError::TooFewUnits {
                rule: r,
                pool: "unequal-ratio",
                needed: m,
                available: cfg.n,
            });
        }
    }
    Ok(())
}

/// `(offset, width)` of each part.
fn split(width: usize, parts: usize, allow_remainder: bool) -> Result<Vec<(usize, usize)>> {
    if parts == 0 || parts > width {
        return Err(ObfuscateError::Parts { parts, width });
    }
    let base = width / parts;
    if !width.is_multiple_of(parts) && !allow_remainder {
        return Err(ObfuscateError::Remainder { parts, width });
    }
    Ok((0..parts)
        .map(|s| {
            let w = if s + 1 == parts {
                width - base * (parts - 1)
            } else {
                base
            };
            (s * base, w)
        })
        .collect())
}

fn naive_rule(ctx: &Ctx, rule: &BitRule, rng: &mut RandomSource) -> Result<RuleCipher> {
    let mut units = Vec::with_capacity(rule.width());
    let mut chosen = Vec::with_capacity(rule.width());
    for i in 0..rule.width() {
        let a0 = ctx.samp(rng);
        let a1 = if rule.is_wildcard(i) {
            a0.clone()
        } else {
            ctx.samp(rng)
        };
        units.push(ctx.unit(&a0, &a1, rng)?);
        chosen.push(if rule.bits()[i] { a1 } else { a0 });
    }
    let ratio = ctx.product(&chosen)?;
    let last = ctx.pair(ratio.as_ref(), rng)?;
    Ok(RuleCipher::Naive { units, last })
}

fn blocking_rule(ctx: &Ctx, rule: &BlockRuleSpec, rng: &mut RandomSource) -> Result<RuleCipher> {
    let mut tables = Vec::with_capacity(rule.filters().len());
    let mut etas = Vec::with_capacity(rule.filters().len());
    for filter in rule.filters() {
        let eta = ctx.samp(rng);
        let mut table = Vec::with_capacity(filter.domain() as usize);
        for j in 0..filter.domain() {
            let pair = if filter.contains(j) {
                ctx.pair(Some(&eta), rng)?
            } else {
                let fresh = ctx.samp(rng);
                ctx.pair(Some(&fresh), rng)?
            };
            table.push(pair);
        }
        tables.push(table);
        etas.push(eta);
    }
    let ratio = ctx.product(&etas)?;
    let last = ctx.pair(ratio.as_ref(), rng)?;
    Ok(RuleCipher::Blocking { tables, last })
}

/// Shared units of the basic scheme with their secret classification.
/// Only `units` leaves the builder.
struct BasicPool {
    units: Vec<EncodingPairUnit>,
    /// `(α_0, α_1)` per unit, post-permutation.
    alphas: Vec<(Encoding, Encoding)>,
    equal: Vec<u32>,
    unequal: Vec<u32>,
}

impl BasicPool {
    fn build(
        ctx: &Ctx,
        cfg: BasicSchemeConfig,
        exec: Execution,
        rng: &RandomSource,
    ) -> Result<Self> {
        let total = cfg.m + cfg.n;
        let built = exec
            .map_indexed(total, |i| {
                let mut r = rng.fork("unit", i as u64);
                let a0 = ctx.samp(&mut r);
                let a1 = if i < cfg.m {
                    a0.clone()
                } else {
                    ctx.samp(&mut r)
                };
                let unit = ctx.unit(&a0, &a1, &mut r)?;
                Ok((unit, (a0, a1)))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        // sigma: position p holds original unit order[p]
        let mut order: Vec<usize> = (0..total).collect();
        order.shuffle(&mut rng.fork("permutation", 0));
        let mut slots: Vec<Option<_>> = built.into_iter().map(Some).collect();
        let mut units = Vec::with_capacity(total);
        let mut alphas = Vec::with_capacity(total);
        let (mut equal, mut unequal) = (Vec::with_capacity(cfg.m), Vec::with_capacity(cfg.n));
        for (pos, &orig) in order.iter().enumerate() {
            let (unit, alpha) = slots[orig]
                .take()
                .expect("permutation visits each unit once");
            units.push(unit);
            alphas.push(alpha);
            if orig < cfg.m {
                equal.push(pos as u32);
            } else {
                unequal.push(pos as u32);
            }
        }
        Ok(Self {
            units,
            alphas,
            equal,
            unequal,
        })
    }

    fn draw(
        pool: &[u32],
        count: usize,
        sampling: IndexSampling,
        rng: &mut RandomSource,
    ) -> Vec<u32> {
        match sampling {
            IndexSampling::WithoutReplacement => sample(rng, pool.len(), count)
                .into_iter()
                .map(|k| pool[k])
                .collect(),
            IndexSampling::WithReplacement => (0..count)
                .map(|_| pool[rng.gen_range(0..pool.len())])
                .collect(),
        }
    }

    fn rule(
        &self,
        ctx: &Ctx,
        rule: &BitRule,
        sampling: IndexSampling,
        rng: &mut RandomSource,
    ) -> Result<RuleCipher> {
        let w = rule.wildcard_count();
        let mut from_e = Self::draw(&self.equal, w, sampling, rng).into_iter();
        let mut from_ue = Self::draw(&self.unequal, rule.width() - w, sampling, rng).into_iter();
        let indices: Vec<u32> = (0..rule.width())
            .map(|i| {
                let src = if rule.is_wildcard(i) {
                    &mut from_e
                } else {
                    &mut from_ue
                };
                src.next().expect("draw sized to the rule")
            })
            .collect();
        let chosen = indices.iter().enumerate().map(|(i, &k)| {
            let (a0, a1) = &self.alphas[k as usize];
            if rule.bits()[i] {
                a1
            } else {
                a0
            }
        });
        let ratio = ctx.product(chosen)?;
        let last = ctx.pair(ratio.as_ref(), rng)?;
        Ok(RuleCipher::Basic { indices, last })
    }
}

pub fn obfuscate_naive(
    rules: &[BitRule],
    mode: BitMode,
    options: ObfuscationOptions,
    rng: &RandomSource,
) -> Result<ObfuscatedFirewall> {
    Obfuscator::new(options).naive(rules, mode, rng)
}

pub fn obfuscate_basic(
    rules: &[BitRule],
    mode: BitMode,
    config: BasicSchemeConfig,
    options: ObfuscationOptions,
    rng: &RandomSource,
) -> Result<ObfuscatedFirewall> {
    Obfuscator::new(options).basic(rules, mode, config, rng)
}

pub fn obfuscate_blocking(
    rules: &[BlockRuleSpec],
    layout: &FieldLayout,
    options: ObfuscationOptions,
    rng: &RandomSource,
) -> Result<ObfuscatedFirewall> {
    Obfuscator::new(options).blocking(rules, layout, rng)
}

pub fn obfuscate_dnc(
    rules: &[BitRule],
    mode: BitMode,
    parts: usize,
    inner: InnerScheme,
    options: ObfuscationOptions,
    rng: &RandomSource,
) -> Result<ObfuscatedFirewall> {
    Obfuscator::new(options).dnc(rules, mode, parts, inner, None, rng)
}
