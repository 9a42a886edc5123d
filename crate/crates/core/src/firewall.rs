//! The obfuscated firewall `f'` handed to the cloud.
//!
//! Everything reachable from [`ObfuscatedFirewall`] is public: GES public
//! parameters, zero-test parameters, level-1 encodings, unit index arrays
//! and actions. Secret keys, the E/UE classification, ratios and the
//! plaintext `(v, W)` never enter these types.

use std::fmt;
use std::str::FromStr;

use crate::ges::{Encoding, GesParams, ZeroTestParam};
use crate::rules::{Action, BitMode, FieldLayout};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InnerScheme {
    Naive,
    Basic,
}

impl InnerScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            InnerScheme::Naive => "naive",
            InnerScheme::Basic => "basic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Naive,
    Basic,
    Blocking,
    Dnc(InnerScheme),
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Naive => "naive",
            Scheme::Basic => "basic",
            Scheme::Blocking => "blocking",
            Scheme::Dnc(_) => "dnc",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Dnc(inner) => write!(f, "dnc/{}", inner.as_str()),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "naive" => Scheme::Naive,
            "basic" => Scheme::Basic,
            "blocking" => Scheme::Blocking,
            "dnc" | "dnc/naive" => Scheme::Dnc(InnerScheme::Naive),
            "dnc/basic" => Scheme::Dnc(InnerScheme::Basic),
            other => return Err(format!("unknown scheme '{other}'")),
        })
    }
}

/// How packets are viewed when matching.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Layout {
    Bits(BitMode),
    Fields(FieldLayout),
}

/// Level-1 pair `(u, v)` hiding the ratio `v/u`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EncodingPair {
    pub u: Encoding,
    pub v: Encoding,
}

/// Two pairs, one per bit value.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EncodingPairUnit {
    pub zero: EncodingPair,
    pub one: EncodingPair,
}

impl EncodingPairUnit {
    pub fn pick(&self, bit: bool) -> &EncodingPair {
        if bit {
            &self.one
        } else {
            &self.zero
        }
    }
}

/// One GES instance and the bit range it covers. Single-segment for naive,
/// basic and blocking; one segment per part for divide-and-conquer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub params: GesParams,
    pub zero_test: ZeroTestParam,
    /// Shared unit array `C` (basic inner scheme only).
    pub units: Vec<EncodingPairUnit>,
    pub bit_offset: usize,
    pub bit_width: usize,
}

/// Per-segment ciphertext of one rule.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum RuleCipher {
    Naive {
        units: Vec<EncodingPairUnit>,
        last: EncodingPair,
    },
    Basic {
        indices: Vec<u32>,
        last: EncodingPair,
    },
    Blocking {
        tables: Vec<Vec<EncodingPair>>,
        last: EncodingPair,
    },
}

impl RuleCipher {
    pub fn last(&self) -> &EncodingPair {
        match self {
            RuleCipher::Naive { last, .. }
            | RuleCipher::Basic { last, .. }
            | RuleCipher::Blocking { last, .. } => last,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ObfuscatedRule {
    pub action: Action,
    pub parts: Vec<RuleCipher>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObfuscatedFirewall {
    pub scheme: Scheme,
    pub layout: Layout,
    pub segments: Vec<Segment>,
    pub rules: Vec<ObfuscatedRule>,
    pub default_action: Action,
}

impl ObfuscatedFirewall {
    /// Multilinearity level of each segment.
    pub fn kappas(&self) -> Vec<u32> {
        self.segments.iter().map(|s| s.params.kappa).collect()
    }

    pub fn width(&self) -> usize {
        self.segments.iter().map(|s| s.bit_width).sum()
    }

    /// Structural consistency check, as run after loading a file.
    pub fn validate(&self) -> Result<(), String> {
        let expected_width = match &self.layout {
            Layout::Bits(mode) => mode.width(),
            Layout::Fields(l) => l.covered_bits() as usize,
        };
        if self.width() != expected_width {
            return Err(format!(
                "segments cover {} bits, layout has {}",
                self.width(),
                expected_width
            ));
        }
        let mut offset = 0;
        for (s, seg) in self.segments.iter().enumerate() {
            if seg.bit_offset != offset {
                return Err(format!(
                    "segment {s} starts at bit {}, expected {offset}",
                    seg.bit_offset
                ));
            }
            offset += seg.bit_width;
            for (i, unit) in seg.units.iter().enumerate() {
                check_unit(unit).map_err(|e| format!("segment {s} unit {i}: {e}"))?;
            }
        }
        for (r, rule) in self.rules.iter().enumerate() {
            self.validate_rule(rule)
                .map_err(|e| format!("rule {r}: {e}"))?;
        }
        Ok(())
    }

    fn validate_rule(&self, rule: &ObfuscatedRule) -> Result<(), String> {
        if rule.parts.len() != self.segments.len() {
            return Err(format!(
                "{} parts for {} segments",
                rule.parts.len(),
                self.segments.len()
            ));
        }
        for (seg, part) in self.segments.iter().zip(&rule.parts) {
            check_pair(part.last())?;
            let kappa = seg.params.kappa as usize;
            match (part, &self.layout) {
                (RuleCipher::Naive { units, .. }, Layout::Bits(_)) => {
                    if units.len() != seg.bit_width || kappa != seg.bit_width + 1 {
                        return Err("naive unit count does not match the segment".into());
                    }
                    units.iter().try_for_each(check_unit)?;
                }
                (RuleCipher::Basic { indices, .. }, Layout::Bits(_)) => {
                    if indices.len() != seg.bit_width || kappa != seg.bit_width + 1 {
                        return Err("index array length does not match the segment".into());
                    }
                    if let Some(bad) = indices.iter().find(|&&i| i as usize >= seg.units.len()) {
                        return Err(format!("unit index {bad} out of range"));
                    }
                }
                (RuleCipher::Blocking { tables, .. }, Layout::Fields(layout)) => {
                    if tables.len() != layout.k() || kappa != layout.k() + 1 {
                        return Err("table count does not match the layout".into());
                    }
                    for (t, f) in tables.iter().zip(layout.fields()) {
                        if t.len() != f.domain_size() as usize {
                            return Err(format!("table for '{}' has {} entries", f.name, t.len()));
                        }
                        t.iter().try_for_each(check_pair)?;
                    }
                }
                _ => return Err("ciphertext kind does not match the layout".into()),
            }
        }
        Ok(())
    }
}

fn check_pair(p: &EncodingPair) -> Result<(), String> {
    if p.u.level() != 1 || p.v.level() != 1 {
        return Err("encoding pair is not at level 1".into());
    }
    Ok(())
}

fn check_unit(u: &EncodingPairUnit) -> Result<(), String> {
    check_pair(&u.zero)?;
    check_pair(&u.one)
}
