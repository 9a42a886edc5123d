use std::fmt;

use super::{AclRule, Action, OctetAtom, PacketHeader, PortAtom, RuleError};

/// Which header bits a bit-level rule covers.
///
/// * `Standard`: source address only, 32 bits.
/// * `Extended`: src_ip 1–32, src_port 33–48, dst_ip 49–80, dst_port 81–96,
///   proto 97–104 (1-based positions).
/// * `Raw(n)`: free-standing bit vectors. A packet header is viewed through
///   the top `n` bits of its source address (zero-padded past 32).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BitMode {
    Standard,
    Extended,
    Raw(usize),
}

impl BitMode {
    pub fn width(self) -> usize {
        match self {
            BitMode::Standard => 32,
            BitMode::Extended => 104,
            BitMode::Raw(n) => n,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BitMode::Standard => "standard",
            BitMode::Extended => "extended",
            BitMode::Raw(_) => "raw",
        }
    }
}

/// Bit-level rule `(v, W, A)`. Wildcard positions always carry `v[i] = 0`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitRule {
    bits: Vec<bool>,
    wildcard: Vec<bool>,
    pub action: Action,
}

impl BitRule {
    /// Builds a rule, clearing `bits` on wildcard positions.
    pub fn new(
        mut bits: Vec<bool>,
        wildcard: Vec<bool>,
        action: Action,
    ) -> Result<Self, RuleError> {
        if bits.len() != wildcard.len() {
            return Err(RuleError::Invalid(format!(
                "bit vector has {} positions but wildcard mask has {}",
                bits.len(),
                wildcard.len()
            )));
        }
        for (b, &w) in bits.iter_mut().zip(&wildcard) {
            if w {
                *b = false;
            }
        }
        Ok(Self {
            bits,
            wildcard,
            action,
        })
    }

    /// `"10*1"`-style pattern; `*` marks a wildcard bit.
    pub fn from_pattern(pattern: &str, action: Action) -> Result<Self, RuleError> {
        let mut bits = Vec::new();
        let mut wild = Vec::new();
        for c in pattern.chars().filter(|c| !c.is_whitespace()) {
            match c {
                '0' | '1' => {
                    bits.push(c == '1');
                    wild.push(false);
                }
                '*' => {
                    bits.push(false);
                    wild.push(true);
                }
                _ => return Err(RuleError::Invalid(format!("bad pattern character '{c}'"))),
            }
        }
        Self::new(bits, wild, action)
    }

    pub fn width(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn wildcard_mask(&self) -> &[bool] {
        &self.wildcard
    }

    pub fn is_wildcard(&self, i: usize) -> bool {
        self.wildcard[i]
    }

    pub fn wildcard_count(&self) -> usize {
        self.wildcard.iter().filter(|&&w| w).count()
    }

    /// 1-based wildcard positions.
    pub fn wildcard_positions(&self) -> Vec<usize> {
        (0..self.width())
            .filter(|&i| self.wildcard[i])
            .map(|i| i + 1)
            .collect()
    }

    pub fn matches(&self, packet: &[bool]) -> bool {
        packet.len() == self.bits.len()
            && (0..self.bits.len()).all(|i| self.wildcard[i] || packet[i] == self.bits[i])
    }

    /// Sub-rule over positions `start..start+len`.
    pub fn slice(&self, start: usize, len: usize) -> BitRule {
        BitRule {
            bits: self.bits[start..start + len].to_vec(),
            wildcard: self.wildcard[start..start + len].to_vec(),
            action: self.action.clone(),
        }
    }

    pub fn pattern(&self) -> String {
        (0..self.width())
            .map(|i| match (self.wildcard[i], self.bits[i]) {
                (true, _) => '*',
                (false, true) => '1',
                (false, false) => '0',
            })
            .collect()
    }
}

impl fmt::Debug for BitRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitRule({} -> {})", self.pattern(), self.action)
    }
}

fn push_value(
    bits: &mut Vec<bool>,
    wild: &mut Vec<bool>,
    value: u64,
    width: usize,
    wildcard_low: usize,
) {
    for k in (0..width).rev() {
        let is_wild = k < wildcard_low;
        wild.push(is_wild);
        bits.push(!is_wild && (value >> k) & 1 == 1);
    }
}

fn push_ip(bits: &mut Vec<bool>, wild: &mut Vec<bool>, atoms: &[OctetAtom; 4]) {
    for atom in atoms {
        match atom {
            OctetAtom::Any => push_value(bits, wild, 0, 8, 8),
            OctetAtom::Literal(o) => push_value(bits, wild, u64::from(*o), 8, 0),
        }
    }
}

fn push_port(
    bits: &mut Vec<bool>,
    wild: &mut Vec<bool>,
    port: PortAtom,
    line: usize,
    name: &str,
) -> Result<(), RuleError> {
    let (lo, hi) = port.bounds();
    let size = u32::from(hi) - u32::from(lo) + 1;
    // aligned power-of-two blocks are prefixes; anything else is not a bit pattern
    if !size.is_power_of_two() || u32::from(lo) % size != 0 {
        return Err(RuleError::NotBitExpressible {
            line,
            message: format!("{name} range [{lo},{hi}] is not expressible as a bit pattern"),
        });
    }
    push_value(
        bits,
        wild,
        u64::from(lo),
        16,
        size.trailing_zeros() as usize,
    );
    Ok(())
}

/// Compile an ACL rule to a bit-level rule in the given mode.
pub fn compile_bit(rule: &AclRule, mode: BitMode) -> Result<BitRule, RuleError> {
    let mut bits = Vec::with_capacity(mode.width());
    let mut wild = Vec::with_capacity(mode.width());
    match mode {
        BitMode::Standard => push_ip(&mut bits, &mut wild, &rule.src_ip.0),
        BitMode::Extended => {
            push_ip(&mut bits, &mut wild, &rule.src_ip.0);
            push_port(
                &mut bits,
                &mut wild,
                rule.src_port,
                rule.line_no,
                "source port",
            )?;
            push_ip(&mut bits, &mut wild, &rule.dst_ip.0);
            push_port(
                &mut bits,
                &mut wild,
                rule.dst_port,
                rule.line_no,
                "destination port",
            )?;
            match rule.proto.number() {
                Some(n) => push_value(&mut bits, &mut wild, u64::from(n), 8, 0),
                None => push_value(&mut bits, &mut wild, 0, 8, 8),
            }
        }
        BitMode::Raw(_) => {
            return Err(RuleError::Invalid(
                "ACL rules compile to standard or extended mode only".into(),
            ))
        }
    }
    BitRule::new(bits, wild, rule.action.clone())
}

/// Big-endian bit view of a packet.
pub fn packet_bits(p: &PacketHeader, mode: BitMode) -> Vec<bool> {
    let mut bits = Vec::with_capacity(mode.width());
    let mut push = |value: u64, width: usize| {
        for k in (0..width).rev() {
            bits.push((value >> k) & 1 == 1);
        }
    };
    match mode {
        BitMode::Standard => push(u64::from(p.src_ip), 32),
        BitMode::Extended => {
            push(u64::from(p.src_ip), 32);
            push(u64::from(p.src_port), 16);
            push(u64::from(p.dst_ip), 32);
            push(u64::from(p.dst_port), 16);
            push(u64::from(p.proto), 8);
        }
        BitMode::Raw(n) => {
            let head = n.min(32);
            push(u64::from(p.src_ip) >> (32 - head), head);
            push(0, n - head);
        }
    }
    bits
}
