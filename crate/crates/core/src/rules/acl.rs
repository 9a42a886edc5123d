//! ACL text grammar.
//!
//! One rule per line:
//! `<action> <src_ip> <src_port> <dst_ip> <dst_port> <proto>`.
//! Addresses are dotted quads whose octets may be `*`, or a bare `*`.
//! Ports are `*`, a number, or an inclusive range `[a,b]`. Protocols are
//! `TCP`, `UDP`, `ICMP`, `ANY` or `*`. `#` starts a comment.

use rand::Rng;
use std::fmt;

use super::{Action, PacketHeader, RuleError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OctetAtom {
    Literal(u8),
    Any,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct IpPattern(pub [OctetAtom; 4]);

impl IpPattern {
    pub const ANY: IpPattern = IpPattern([OctetAtom::Any; 4]);

    pub fn matches(&self, addr: u32) -> bool {
        self.0.iter().enumerate().all(|(i, atom)| match atom {
            OctetAtom::Any => true,
            OctetAtom::Literal(o) => (addr >> (24 - 8 * i)) as u8 == *o,
        })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.0.iter().fold(0u32, |acc, atom| {
            let o = match atom {
                OctetAtom::Any => rng.gen::<u8>(),
                OctetAtom::Literal(o) => *o,
            };
            (acc << 8) | u32::from(o)
        })
    }
}

impl fmt::Display for IpPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == IpPattern::ANY {
            return f.write_str("*");
        }
        for (i, atom) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            match atom {
                OctetAtom::Any => f.write_str("*")?,
                OctetAtom::Literal(o) => write!(f, "{o}")?,
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PortAtom {
    Any,
    Literal(u16),
    /// Inclusive `[lo, hi]`, `lo <= hi`.
    Range(u16, u16),
}

impl PortAtom {
    pub fn matches(&self, port: u16) -> bool {
        match *self {
            PortAtom::Any => true,
            PortAtom::Literal(p) => p == port,
            PortAtom::Range(lo, hi) => lo <= port && port <= hi,
        }
    }

    /// Inclusive bounds of the matched set.
    pub fn bounds(&self) -> (u16, u16) {
        match *self {
            PortAtom::Any => (0, u16::MAX),
            PortAtom::Literal(p) => (p, p),
            PortAtom::Range(lo, hi) => (lo, hi),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u16 {
        let (lo, hi) = self.bounds();
        rng.gen_range(lo..=hi)
    }
}

impl fmt::Display for PortAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PortAtom::Any => f.write_str("*"),
            PortAtom::Literal(p) => write!(f, "{p}"),
            PortAtom::Range(lo, hi) => write!(f, "[{lo},{hi}]"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Protocol {
    Tcp,
    Udp,
    Icmp,
    Any,
}

impl Protocol {
    /// IANA protocol number; `None` for the wildcard.
    pub fn number(self) -> Option<u8> {
        match self {
            Protocol::Tcp => Some(6),
            Protocol::Udp => Some(17),
            Protocol::Icmp => Some(1),
            Protocol::Any => None,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            6 => Some(Protocol::Tcp),
            17 => Some(Protocol::Udp),
            1 => Some(Protocol::Icmp),
            _ => None,
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        match token.to_ascii_uppercase().as_str() {
            "TCP" => Some(Protocol::Tcp),
            "UDP" => Some(Protocol::Udp),
            "ICMP" => Some(Protocol::Icmp),
            "ANY" | "*" => Some(Protocol::Any),
            _ => None,
        }
    }

    pub fn matches(self, proto: u8) -> bool {
        self.number().is_none_or(|n| n == proto)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Tcp => "TCP",
            Protocol::Udp => "UDP",
            Protocol::Icmp => "ICMP",
            Protocol::Any => "*",
        })
    }
}

/// One ACL line. Priority is its position in the list.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AclRule {
    pub src_ip: IpPattern,
    pub src_port: PortAtom,
    pub dst_ip: IpPattern,
    pub dst_port: PortAtom,
    pub proto: Protocol,
    pub action: Action,
    pub line_no: usize,
}

impl AclRule {
    /// Full 5-tuple semantics.
    pub fn matches(&self, p: &PacketHeader) -> bool {
        self.src_ip.matches(p.src_ip)
            && self.src_port.matches(p.src_port)
            && self.dst_ip.matches(p.dst_ip)
            && self.dst_port.matches(p.dst_port)
            && self.proto.matches(p.proto)
    }

    /// A random packet this rule matches.
    pub fn sample_matching<R: Rng + ?Sized>(&self, rng: &mut R) -> PacketHeader {
        let proto = match self.proto.number() {
            Some(n) => n,
            None => [6u8, 17, 1][rng.gen_range(0..3)],
        };
        PacketHeader {
            src_ip: self.src_ip.sample(rng),
            src_port: self.src_port.sample(rng),
            dst_ip: self.dst_ip.sample(rng),
            dst_port: self.dst_port.sample(rng),
            proto,
        }
    }
}

impl fmt::Display for AclRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {}",
            self.action, self.src_ip, self.src_port, self.dst_ip, self.dst_port, self.proto
        )
    }
}

fn parse_ip(tok: &str, line: usize) -> Result<IpPattern, RuleError> {
    if tok == "*" {
        return Ok(IpPattern::ANY);
    }
    let parts: Vec<&str> = tok.split('.').collect();
    if parts.len() != 4 {
        return Err(RuleError::Parse {
            line,
            message: format!("address '{tok}' must have four octets"),
        });
    }
    let mut atoms = [OctetAtom::Any; 4];
    for (slot, part) in atoms.iter_mut().zip(&parts) {
        *slot = if *part == "*" {
            OctetAtom::Any
        } else {
            let valid =
                !part.is_empty() && part.len() <= 3 && part.bytes().all(|b| b.is_ascii_digit());
            match part.parse::<u8>() {
                Ok(o) if valid => OctetAtom::Literal(o),
                _ => {
                    return Err(RuleError::Parse {
                        line,
                        message: format!("malformed octet '{part}' in '{tok}'"),
                    })
                }
            }
        };
    }
    Ok(IpPattern(atoms))
}

fn parse_port_number(s: &str, tok: &str, line: usize) -> Result<u16, RuleError> {
    let s = s.trim();
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(RuleError::Parse {
            line,
            message: format!("malformed port '{tok}'"),
        });
    }
    s.parse::<u16>().map_err(|_| RuleError::Parse {
        line,
        message: format!("port out of range in '{tok}'"),
    })
}

fn parse_port(tok: &str, line: usize) -> Result<PortAtom, RuleError> {
    if tok == "*" {
        return Ok(PortAtom::Any);
    }
    if let Some(inner) = tok.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
        let (lo, hi) = inner.split_once(',').ok_or_else(|| RuleError::Parse {
            line,
            message: format!("range '{tok}' must look like [a,b]"),
        })?;
        let lo = parse_port_number(lo, tok, line)?;
        let hi = parse_port_number(hi, tok, line)?;
        if lo > hi {
            return Err(RuleError::Parse {
                line,
                message: format!("inverted port range '{tok}'"),
            });
        }
        return Ok(PortAtom::Range(lo, hi));
    }
    parse_port_number(tok, tok, line).map(PortAtom::Literal)
}

/// Whitespace-split tokens, except inside `[...]`.
fn tokenize(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut depth = 0usize;
    for c in line.chars() {
        match c {
            '[' => {
                depth += 1;
                cur.push(c);
            }
            ']' => {
                depth = depth.saturating_sub(1);
                cur.push(c);
            }
            c if c.is_whitespace() && depth == 0 => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            c if c.is_whitespace() => {}
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Parse ACL text into rules in file order.
pub fn parse_acl(text: &str) -> Result<Vec<AclRule>, RuleError> {
    let mut rules = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let toks = tokenize(body);
        if toks.len() != 6 {
            return Err(RuleError::Parse {
                line,
                message: format!(
                    "expected 6 fields (action src_ip src_port dst_ip dst_port proto), found {}",
                    toks.len()
                ),
            });
        }
        let action: Action = toks[0].parse().map_err(|e: RuleError| RuleError::Parse {
            line,
            message: e
                .to_string()
                .trim_start_matches("invalid rule: ")
                .to_string(),
        })?;
        let proto = Protocol::parse(&toks[5]).ok_or_else(|| RuleError::Parse {
            line,
            message: format!("unknown protocol '{}'", toks[5]),
        })?;
        rules.push(AclRule {
            src_ip: parse_ip(&toks[1], line)?,
            src_port: parse_port(&toks[2], line)?,
            dst_ip: parse_ip(&toks[3], line)?,
            dst_port: parse_port(&toks[4], line)?,
            proto,
            action,
            line_no: line,
        });
    }
    Ok(rules)
}

/// Inverse of [`parse_acl`], one rule per line.
pub fn format_acl(rules: &[AclRule]) -> String {
    let mut out = String::new();
    for r in rules {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}
