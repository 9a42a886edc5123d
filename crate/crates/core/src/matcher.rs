//! Cloud-side execution of an obfuscated firewall, plus the plaintext
//! oracle it must agree with.
//!
//! For a rule with pairs `(u_i, v_i)` selected by the packet and final pair
//! `(u_last, v_last)`, the matcher computes
//! `LHS = u_last·Π v_i` and `RHS = v_last·Π u_i` at level κ and zero-tests
//! `LHS − RHS`. The ratios cancel exactly when the packet satisfies the rule.

use thiserror::Error;

use crate::analysis::{record, Op, OpCounter};
use crate::exec::Execution;
use crate::firewall::{
    EncodingPair, Layout, ObfuscatedFirewall, ObfuscatedRule, RuleCipher, Segment,
};
use crate::ges::{Encoding, GesError};
use crate::rules::{
    packet_bits, packet_tuple, AclRule, Action, BitRule, BlockRuleSpec, PacketHeader,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatchError {
    #[error(transparent)]
    Ges(#[from] GesError),
    #[error("packet view does not fit the firewall: {0}")]
    View(String),
    #[error("malformed firewall: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, MatchError>;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MatchDecision {
    pub action: Action,
    /// Index of the first matching rule; `None` when the default applied.
    pub rule: Option<usize>,
}

impl MatchDecision {
    pub fn default_action(action: &Action) -> Self {
        Self {
            action: action.clone(),
            rule: None,
        }
    }
}

/// Packet as seen by the rules: a bit string or a field tuple.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum PacketView {
    Bits(Vec<bool>),
    Tuple(Vec<u32>),
}

impl PacketView {
    pub fn of(layout: &Layout, p: &PacketHeader) -> Self {
        match layout {
            Layout::Bits(mode) => PacketView::Bits(packet_bits(p, *mode)),
            Layout::Fields(l) => PacketView::Tuple(packet_tuple(p, l)),
        }
    }

    /// Raw `width`-bit view of `value` (big-endian).
    pub fn from_value(value: u64, width: usize) -> Self {
        PacketView::Bits((0..width).rev().map(|k| (value >> k) & 1 == 1).collect())
    }
}

#[derive(Default)]
pub struct Matcher<'c> {
    counter: Option<&'c OpCounter>,
}

impl<'c> Matcher<'c> {
    pub fn new() -> Self {
        Self { counter: None }
    }

    pub fn with_counter(counter: &'c OpCounter) -> Self {
        Self {
            counter: Some(counter),
        }
    }

    pub fn match_rule(
        &self,
        fw: &ObfuscatedFirewall,
        rule: &ObfuscatedRule,
        view: &PacketView,
    ) -> Result<bool> {
        if rule.parts.len() != fw.segments.len() {
            return Err(MatchError::Malformed(format!(
                "rule has {} parts for {} segments",
                rule.parts.len(),
                fw.segments.len()
            )));
        }
        for (seg, part) in fw.segments.iter().zip(&rule.parts) {
            if !self.match_part(seg, part, view)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn match_part(&self, seg: &Segment, part: &RuleCipher, view: &PacketView) -> Result<bool> {
        let selected: Vec<&EncodingPair> = match (part, view) {
            (RuleCipher::Naive { units, .. }, PacketView::Bits(bits)) => {
                let bits = slice_bits(seg, bits)?;
                if units.len() != bits.len() {
                    return Err(MatchError::Malformed(
                        "naive unit count differs from segment width".into(),
                    ));
                }
                units.iter().zip(bits).map(|(u, &b)| u.pick(b)).collect()
            }
            (RuleCipher::Basic { indices, .. }, PacketView::Bits(bits)) => {
                let bits = slice_bits(seg, bits)?;
                if indices.len() != bits.len() {
                    return Err(MatchError::Malformed(
                        "index array length differs from segment width".into(),
                    ));
                }
                indices
                    .iter()
                    .zip(bits)
                    .map(|(&k, &b)| {
                        seg.units.get(k as usize).map(|u| u.pick(b)).ok_or_else(|| {
                            MatchError::Malformed(format!("unit index {k} out of range"))
                        })
                    })
                    .collect::<Result<_>>()?
            }
            (RuleCipher::Blocking { tables, .. }, PacketView::Tuple(tuple)) => {
                if tables.len() != tuple.len() {
                    return Err(MatchError::View(format!(
                        "{} fields for {} tables",
                        tuple.len(),
                        tables.len()
                    )));
                }
                tables
                    .iter()
                    .zip(tuple)
                    .map(|(t, &x)| {
                        t.get(x as usize).ok_or_else(|| {
                            MatchError::View(format!(
                                "field value {x} outside a {}-entry table",
                                t.len()
                            ))
                        })
                    })
                    .collect::<Result<_>>()?
            }
            _ => {
                return Err(MatchError::View(
                    "packet view kind does not match the rule".into(),
                ))
            }
        };
        let last = part.last();
        let params = &seg.params;
        let mut lhs = last.u.clone();
        let mut rhs = last.v.clone();
        for (i, pair) in selected.iter().enumerate() {
            let level = i as u32 + 1;
            lhs = self.mul(params, level, &lhs, &pair.v)?;
            rhs = self.mul(params, level, &rhs, &pair.u)?;
        }
        let kappa = params.kappa;
        record(self.counter, Op::Neg);
        record(self.counter, Op::Add);
        let diff = params.sub(kappa, &lhs, &rhs)?;
        record(self.counter, Op::IsZero);
        Ok(params.is_zero(&seg.zero_test, &diff)?)
    }

    fn mul(
        &self,
        params: &crate::ges::GesParams,
        level: u32,
        acc: &Encoding,
        e: &Encoding,
    ) -> Result<Encoding> {
        record(self.counter, Op::Mul);
        Ok(params.mul(level, acc, 1, e)?)
    }

    pub fn filter_view(&self, fw: &ObfuscatedFirewall, view: &PacketView) -> Result<MatchDecision> {
        for (i, rule) in fw.rules.iter().enumerate() {
            if self.match_rule(fw, rule, view)? {
                return Ok(MatchDecision {
                    action: rule.action.clone(),
                    rule: Some(i),
                });
            }
        }
        Ok(MatchDecision::default_action(&fw.default_action))
    }

    pub fn filter_packet(
        &self,
        fw: &ObfuscatedFirewall,
        p: &PacketHeader,
    ) -> Result<MatchDecision> {
        self.filter_view(fw, &PacketView::of(&fw.layout, p))
    }

    /// Decisions for a batch, in input order.
    pub fn filter_packets(
        &self,
        fw: &ObfuscatedFirewall,
        packets: &[PacketHeader],
        exec: Execution,
    ) -> Vec<Result<MatchDecision>> {
        exec.map_indexed(packets.len(), |i| self.filter_packet(fw, &packets[i]))
    }

    pub fn filter_views(
        &self,
        fw: &ObfuscatedFirewall,
        views: &[PacketView],
        exec: Execution,
    ) -> Vec<Result<MatchDecision>> {
        exec.map_indexed(views.len(), |i| self.filter_view(fw, &views[i]))
    }
}

fn slice_bits<'a>(seg: &Segment, bits: &'a [bool]) -> Result<&'a [bool]> {
    bits.get(seg.bit_offset..seg.bit_offset + seg.bit_width)
        .ok_or_else(|| {
            MatchError::View(format!(
                "packet has {} bits, segment needs {}..{}",
                bits.len(),
                seg.bit_offset,
                seg.bit_offset + seg.bit_width
            ))
        })
}

pub fn match_rule(
    fw: &ObfuscatedFirewall,
    rule: &ObfuscatedRule,
    p: &PacketHeader,
) -> Result<bool> {
    Matcher::new().match_rule(fw, rule, &PacketView::of(&fw.layout, p))
}

pub fn filter_packet(fw: &ObfuscatedFirewall, p: &PacketHeader) -> Result<MatchDecision> {
    Matcher::new().filter_packet(fw, p)
}

pub fn filter_packets(
    fw: &ObfuscatedFirewall,
    packets: &[PacketHeader],
    exec: Execution,
) -> Vec<Result<MatchDecision>> {
    Matcher::new().filter_packets(fw, packets, exec)
}

/// Plaintext rule in either compiled form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PlainRule {
    Bits(BitRule),
    Block(BlockRuleSpec),
}

impl PlainRule {
    pub fn action(&self) -> &Action {
        match self {
            PlainRule::Bits(r) => &r.action,
            PlainRule::Block(r) => &r.action,
        }
    }
}

pub fn oracle_match(rule: &PlainRule, view: &PacketView) -> bool {
    match (rule, view) {
        (PlainRule::Bits(r), PacketView::Bits(bits)) => r.matches(bits),
        (PlainRule::Block(r), PacketView::Tuple(t)) => r.matches(t),
        _ => false,
    }
}

pub fn oracle_filter(rules: &[PlainRule], view: &PacketView, default: &Action) -> MatchDecision {
    first_match(
        rules.iter().map(|r| (oracle_match(r, view), r.action())),
        default,
    )
}

/// Oracle straight on the ACL semantics, independent of any compilation.
pub fn oracle_filter_acl(rules: &[AclRule], p: &PacketHeader, default: &Action) -> MatchDecision {
    first_match(rules.iter().map(|r| (r.matches(p), &r.action)), default)
}

fn first_match<'a>(
    hits: impl Iterator<Item = (bool, &'a Action)>,
    default: &Action,
) -> MatchDecision {
    hits.enumerate()
        .find(|(_, (hit, _))| *hit)
        .map(|(i, (_, action))| MatchDecision {
            action: action.clone(),
            rule: Some(i),
        })
        .unwrap_or_else(|| MatchDecision::default_action(default))
}
