//! Glue from parsed ACL rules to obfuscated firewalls and back to plaintext
//! reference decisions.

use thiserror::Error;

use sofa_core::firewall::{InnerScheme, Layout};
use sofa_core::matcher::{oracle_filter, PacketView, PlainRule};
use sofa_core::obfuscate::{BasicSchemeConfig, ObfuscateError, ObfuscationOptions, Obfuscator};
use sofa_core::rules::{compile_bit, compile_block, AclRule, RuleError};
use sofa_core::{
    Action, BitMode, FieldLayout, MatchDecision, ObfuscatedFirewall, OpCounter, PacketHeader,
    RandomSource, Scheme,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Obfuscate(#[from] ObfuscateError),
}

/// Which header view a scheme works on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Standard,
    Extended,
}

impl Mode {
    pub fn bits(self) -> BitMode {
        match self {
            Mode::Standard => BitMode::Standard,
            Mode::Extended => BitMode::Extended,
        }
    }

    /// Blocking layout: source octets (k=4) or every header byte (k=13).
    pub fn fields(self) -> FieldLayout {
        match self {
            Mode::Standard => FieldLayout::src_octets(),
            Mode::Extended => FieldLayout::extended_bytes(),
        }
    }

    pub fn layout_for(self, scheme: Scheme) -> Layout {
        match scheme {
            Scheme::Blocking => Layout::Fields(self.fields()),
            _ => Layout::Bits(self.bits()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BuildConfig {
    pub scheme: Scheme,
    pub mode: Mode,
    /// Unit counts for basic (and dnc/basic); default `2n` each.
    pub basic: Option<BasicSchemeConfig>,
    pub parts: usize,
    pub options: ObfuscationOptions,
}

impl BuildConfig {
    pub fn new(scheme: Scheme, mode: Mode, options: ObfuscationOptions) -> Self {
        Self {
            scheme,
            mode,
            basic: None,
            parts: 4,
            options,
        }
    }
}

/// Compile `acl` to the plaintext form the firewall layout expects.
pub fn plain_rules(acl: &[AclRule], layout: &Layout) -> Result<Vec<PlainRule>, RuleError> {
    acl.iter()
        .map(|r| match layout {
            Layout::Bits(mode) => compile_bit(r, *mode).map(PlainRule::Bits),
            Layout::Fields(l) => compile_block(r, l).map(PlainRule::Block),
        })
        .collect()
}

pub fn build_firewall(
    acl: &[AclRule],
    cfg: &BuildConfig,
    rng: &RandomSource,
    counter: Option<&OpCounter>,
) -> Result<ObfuscatedFirewall, PipelineError> {
    let mut ob = Obfuscator::new(cfg.options.clone());
    if let Some(c) = counter {
        ob = ob.with_counter(c);
    }
    let layout = cfg.mode.layout_for(cfg.scheme);
    let plain = plain_rules(acl, &layout)?;
    let bit_rules = || {
        plain.iter().filter_map(|p| match p {
            PlainRule::Bits(b) => Some(b.clone()),
            PlainRule::Block(_) => None,
        })
    };
    let mode = cfg.mode.bits();
    let width = mode.width();
    Ok(match cfg.scheme {
        Scheme::Naive => ob.naive(&bit_rules().collect::<Vec<_>>(), mode, rng)?,
        Scheme::Basic => {
            let basic = cfg
                .basic
                .unwrap_or_else(|| BasicSchemeConfig::for_width(width));
            ob.basic(&bit_rules().collect::<Vec<_>>(), mode, basic, rng)?
        }
        Scheme::Dnc(inner) => ob.dnc(
            &bit_rules().collect::<Vec<_>>(),
            mode,
            cfg.parts,
            inner,
            cfg.basic,
            rng,
        )?,
        Scheme::Blocking => {
            let blocks: Vec<_> = plain
                .into_iter()
                .filter_map(|p| match p {
                    PlainRule::Block(b) => Some(b),
                    PlainRule::Bits(_) => None,
                })
                .collect();
            ob.blocking(&blocks, &cfg.mode.fields(), rng)?
        }
    })
}

/// Reference decision for `p` under the firewall's own view of packets.
pub fn oracle_decision(
    plain: &[PlainRule],
    layout: &Layout,
    p: &PacketHeader,
    default: &Action,
) -> MatchDecision {
    oracle_filter(plain, &PacketView::of(layout, p), default)
}

pub fn parse_inner(s: &str) -> Option<InnerScheme> {
    match s {
        "naive" => Some(InnerScheme::Naive),
        "basic" => Some(InnerScheme::Basic),
        _ => None,
    }
}

/// Packets whose top `bits` source-address bits run over every value.
pub fn exhaustive_packets(bits: u32) -> Vec<PacketHeader> {
    (0..1u64 << bits)
        .map(|v| PacketHeader {
            src_ip: if bits == 0 {
                0
            } else {
                (v << (32 - bits)) as u32
            },
            ..PacketHeader::default()
        })
        .collect()
}

/// Seeded packets, half of them drawn to hit a random rule.
pub fn random_packets(acl: &[AclRule], count: usize, rng: &mut RandomSource) -> Vec<PacketHeader> {
    use rand::Rng;
    (0..count)
        .map(|_| {
            if !acl.is_empty() && rng.gen_bool(0.5) {
                let r = &acl[rng.gen_range(0..acl.len())];
                r.sample_matching(rng)
            } else {
                PacketHeader::random(rng)
            }
        })
        .collect()
}
