//! Field-level ("blocking") view of rules and packets.
//!
//! A [`FieldLayout`] cuts header components into `k` fields of at most 16
//! bits each. A rule becomes one filter set `F_i ⊆ I_i` per field and a
//! packet becomes an integer tuple `(p_1, …, p_k)`. Header bits outside the
//! layout are ignored, the same way standard bit mode ignores everything
//! but the source address.

use std::fmt;
use std::str::FromStr;

use super::{AclRule, Action, OctetAtom, PacketHeader, PortAtom, RuleError};

pub const MAX_FIELD_WIDTH: u8 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HeaderField {
    SrcIp,
    SrcPort,
    DstIp,
    DstPort,
    Proto,
}

impl HeaderField {
    pub fn width(self) -> u8 {
        match self {
            HeaderField::SrcIp | HeaderField::DstIp => 32,
            HeaderField::SrcPort | HeaderField::DstPort => 16,
            HeaderField::Proto => 8,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HeaderField::SrcIp => "src_ip",
            HeaderField::SrcPort => "src_port",
            HeaderField::DstIp => "dst_ip",
            HeaderField::DstPort => "dst_port",
            HeaderField::Proto => "proto",
        }
    }

    fn value(self, p: &PacketHeader) -> u32 {
        match self {
            HeaderField::SrcIp => p.src_ip,
            HeaderField::SrcPort => u32::from(p.src_port),
            HeaderField::DstIp => p.dst_ip,
            HeaderField::DstPort => u32::from(p.dst_port),
            HeaderField::Proto => u32::from(p.proto),
        }
    }
}

impl fmt::Display for HeaderField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeaderField {
    type Err = RuleError;
    fn from_str(s: &str) -> Result<Self, RuleError> {
        Ok(match s {
            "src_ip" => HeaderField::SrcIp,
            "src_port" => HeaderField::SrcPort,
            "dst_ip" => HeaderField::DstIp,
            "dst_port" => HeaderField::DstPort,
            "proto" => HeaderField::Proto,
            _ => return Err(RuleError::Layout(format!("unknown header field '{s}'"))),
        })
    }
}

/// `width` bits of `header`, starting `offset` bits below its MSB.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Field {
    pub name: String,
    pub header: HeaderField,
    pub offset: u8,
    pub width: u8,
}

impl Field {
    pub fn domain_size(&self) -> u32 {
        1u32 << self.width
    }

    fn extract(&self, header_value: u32) -> u32 {
        let shift = self.header.width() - self.offset - self.width;
        (header_value >> shift) & (self.domain_size() - 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FieldLayout {
    fields: Vec<Field>,
}

impl FieldLayout {
    pub fn new(fields: Vec<Field>) -> Result<Self, RuleError> {
        if fields.is_empty() {
            return Err(RuleError::Layout(
                "a layout needs at least one field".into(),
            ));
        }
        for (i, f) in fields.iter().enumerate() {
            if f.width == 0 || f.width > MAX_FIELD_WIDTH {
                return Err(RuleError::Layout(format!(
                    "field '{}' width must be in 1..=16",
                    f.name
                )));
            }
            if u16::from(f.offset) + u16::from(f.width) > u16::from(f.header.width()) {
                return Err(RuleError::Layout(format!(
                    "field '{}' runs past the end of {}",
                    f.name, f.header
                )));
            }
            for g in &fields[..i] {
                let overlap = g.header == f.header
                    && g.offset < f.offset + f.width
                    && f.offset < g.offset + g.width;
                if overlap {
                    return Err(RuleError::Layout(format!(
                        "fields '{}' and '{}' overlap",
                        g.name, f.name
                    )));
                }
            }
        }
        Ok(Self { fields })
    }

    /// Source address split into its four octets.
    pub fn src_octets() -> Self {
        Self::octets_of(&[HeaderField::SrcIp])
    }

    /// Whole 5-tuple in byte-sized fields (13 fields).
    pub fn extended_bytes() -> Self {
        Self::octets_of(&[
            HeaderField::SrcIp,
            HeaderField::SrcPort,
            HeaderField::DstIp,
            HeaderField::DstPort,
            HeaderField::Proto,
        ])
    }

    fn octets_of(headers: &[HeaderField]) -> Self {
        let mut fields = Vec::new();
        for &h in headers {
            for j in 0..h.width() / 8 {
                fields.push(Field {
                    name: format!("{}.{}", h, j),
                    header: h,
                    offset: 8 * j,
                    width: 8,
                });
            }
        }
        Self::new(fields).expect("byte layouts are valid")
    }

    /// Consecutive fields over the top bits of the source address.
    pub fn toy(widths: &[u8]) -> Result<Self, RuleError> {
        let mut offset = 0u8;
        let mut fields = Vec::new();
        for (i, &w) in widths.iter().enumerate() {
            fields.push(Field {
                name: format!("f{i}"),
                header: HeaderField::SrcIp,
                offset,
                width: w,
            });
            offset = offset
                .checked_add(w)
                .ok_or_else(|| RuleError::Layout("toy layout wider than 32 bits".into()))?;
        }
        Self::new(fields)
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn k(&self) -> usize {
        self.fields.len()
    }

    pub fn domain_sizes(&self) -> Vec<u32> {
        self.fields.iter().map(Field::domain_size).collect()
    }

    /// Σ |I_i|.
    pub fn total_domain(&self) -> u64 {
        self.fields.iter().map(|f| u64::from(f.domain_size())).sum()
    }

    /// Σ log2 |I_i|.
    pub fn covered_bits(&self) -> u32 {
        self.fields.iter().map(|f| u32::from(f.width)).sum()
    }
}

/// A subset of one field's domain `[0, |I_i|)`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FilterSet {
    members: Vec<bool>,
}

impl FilterSet {
    pub fn from_members(domain: u32, members: impl IntoIterator<Item = u32>) -> Self {
        let mut m = vec![false; domain as usize];
        for x in members {
            if (x as usize) < m.len() {
                m[x as usize] = true;
            }
        }
        Self { members: m }
    }

    pub fn full(domain: u32) -> Self {
        Self {
            members: vec![true; domain as usize],
        }
    }

    pub fn domain(&self) -> u32 {
        self.members.len() as u32
    }

    pub fn contains(&self, x: u32) -> bool {
        self.members.get(x as usize).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.members.iter().any(|&b| b)
    }

    pub fn is_full(&self) -> bool {
        self.members.iter().all(|&b| b)
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i as u32)
    }
}

impl fmt::Debug for FilterSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_full() {
            return write!(f, "[0,{}]", self.domain() - 1);
        }
        let xs: Vec<u32> = self.iter().collect();
        if xs.len() > 1 && xs[xs.len() - 1] - xs[0] + 1 == xs.len() as u32 {
            return write!(f, "[{},{}]", xs[0], xs[xs.len() - 1]);
        }
        f.debug_set().entries(xs).finish()
    }
}

/// Field-level rule `({F_i}, A)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BlockRuleSpec {
    filters: Vec<FilterSet>,
    pub action: Action,
}

impl BlockRuleSpec {
    pub fn new(
        filters: Vec<FilterSet>,
        action: Action,
        layout: &FieldLayout,
    ) -> Result<Self, RuleError> {
        if filters.len() != layout.k() {
            return Err(RuleError::Invalid(format!(
                "rule has {} filter sets, layout has {} fields",
                filters.len(),
                layout.k()
            )));
        }
        for (i, (f, field)) in filters.iter().zip(layout.fields()).enumerate() {
            if f.domain() != field.domain_size() {
                return Err(RuleError::Invalid(format!(
                    "filter set {i} has the wrong domain size"
                )));
            }
            if f.is_empty() {
                return Err(RuleError::Invalid(format!(
                    "filter set {i} ('{}') is empty",
                    field.name
                )));
            }
        }
        Ok(Self { filters, action })
    }

    pub fn filters(&self) -> &[FilterSet] {
        &self.filters
    }

    pub fn matches(&self, tuple: &[u32]) -> bool {
        tuple.len() == self.filters.len()
            && self.filters.iter().zip(tuple).all(|(f, &x)| f.contains(x))
    }
}

/// The match set of one header component, as a product over "atoms":
/// four octets for addresses, a single 16/8-bit atom for ports/protocol.
struct ComponentSet {
    atom_width: u8,
    atoms: Vec<AtomSet>,
}

#[derive(Clone, Copy)]
enum AtomSet {
    Any,
    Literal(u32),
    Range(u32, u32),
}

impl AtomSet {
    fn members(self, width: u8) -> Box<dyn Iterator<Item = u32>> {
        match self {
            AtomSet::Any => Box::new(0..(1u32 << width)),
            AtomSet::Literal(x) => Box::new(std::iter::once(x)),
            AtomSet::Range(lo, hi) => Box::new(lo..=hi),
        }
    }

    fn size(self, width: u8) -> u64 {
        match self {
            AtomSet::Any => 1u64 << width,
            AtomSet::Literal(_) => 1,
            AtomSet::Range(lo, hi) => u64::from(hi - lo + 1),
        }
    }
}

fn component(rule: &AclRule, h: HeaderField) -> ComponentSet {
    let ip = |atoms: &[OctetAtom; 4]| ComponentSet {
        atom_width: 8,
        atoms: atoms
            .iter()
            .map(|a| match a {
                OctetAtom::Any => AtomSet::Any,
                OctetAtom::Literal(o) => AtomSet::Literal(u32::from(*o)),
            })
            .collect(),
    };
    let port = |p: PortAtom| ComponentSet {
        atom_width: 16,
        atoms: vec![match p {
            PortAtom::Any => AtomSet::Any,
            PortAtom::Literal(x) => AtomSet::Literal(u32::from(x)),
            PortAtom::Range(0, u16::MAX) => AtomSet::Any,
            PortAtom::Range(lo, hi) => AtomSet::Range(u32::from(lo), u32::from(hi)),
        }],
    };
    match h {
        HeaderField::SrcIp => ip(&rule.src_ip.0),
        HeaderField::DstIp => ip(&rule.dst_ip.0),
        HeaderField::SrcPort => port(rule.src_port),
        HeaderField::DstPort => port(rule.dst_port),
        HeaderField::Proto => ComponentSet {
            atom_width: 8,
            atoms: vec![match rule.proto.number() {
                Some(n) => AtomSet::Literal(u32::from(n)),
                None => AtomSet::Any,
            }],
        },
    }
}

fn bits_of(x: u32, atom_width: u8, lo: u8, width: u8) -> u32 {
    (x >> (atom_width - lo - width)) & ((1u32 << width) - 1)
}

/// Compile an ACL rule into per-field filter sets under `layout`.
pub fn compile_block(rule: &AclRule, layout: &FieldLayout) -> Result<BlockRuleSpec, RuleError> {
    let not_product = |message: String| RuleError::NotCrossProduct {
        line: rule.line_no,
        message,
    };
    let mut filters: Vec<Option<FilterSet>> = vec![None; layout.k()];
    let mut headers: Vec<HeaderField> = layout.fields().iter().map(|f| f.header).collect();
    headers.sort();
    headers.dedup();

    for h in headers {
        let comp = component(rule, h);
        let aw = comp.atom_width;
        let in_header: Vec<usize> = (0..layout.k())
            .filter(|&i| layout.fields()[i].header == h)
            .collect();

        // fields lying inside a single atom, grouped by atom index
        let mut split: Vec<Vec<usize>> = vec![Vec::new(); comp.atoms.len()];
        for &fi in &in_header {
            let f = &layout.fields()[fi];
            let first = (f.offset / aw) as usize;
            let last = ((f.offset + f.width - 1) / aw) as usize;
            if first == last && f.width < aw {
                split[first].push(fi);
            } else if f.offset.is_multiple_of(aw) && f.width.is_multiple_of(aw) {
                // whole atoms concatenated
                let mut values: Vec<u32> = vec![0];
                for atom in &comp.atoms[first..=last] {
                    let mut next = Vec::new();
                    for &v in &values {
                        for x in atom.members(aw) {
                            next.push((v << aw) | x);
                        }
                    }
                    values = next;
                }
                filters[fi] = Some(FilterSet::from_members(f.domain_size(), values));
            } else {
                return Err(RuleError::Layout(format!(
                    "field '{}' straddles {}-bit atoms of {}",
                    f.name, aw, h
                )));
            }
        }

        for (ai, fields_here) in split.iter().enumerate() {
            if fields_here.is_empty() {
                continue;
            }
            let atom = comp.atoms[ai];
            let mut covered = 0u32;
            let mut projected = 1u64;
            for &fi in fields_here {
                let f = &layout.fields()[fi];
                let lo = f.offset - (ai as u8) * aw;
                let set = FilterSet::from_members(
                    f.domain_size(),
                    atom.members(aw).map(|x| bits_of(x, aw, lo, f.width)),
                );
                covered += u32::from(f.width);
                projected *= set.len() as u64;
                filters[fi] = Some(set);
            }
            let uncovered = u32::from(aw) - covered;
            if projected << uncovered != atom.size(aw) {
                let names: Vec<&str> = fields_here
                    .iter()
                    .map(|&fi| layout.fields()[fi].name.as_str())
                    .collect();
                return Err(not_product(format!(
                    "{} constraint is not a cross product over fields {:?}",
                    h, names
                )));
            }
        }
    }
    let filters = filters
        .into_iter()
        .map(|f| f.expect("every field assigned"))
        .collect();
    BlockRuleSpec::new(filters, rule.action.clone(), layout)
}

/// Integer tuple view of a packet under `layout`.
pub fn packet_tuple(p: &PacketHeader, layout: &FieldLayout) -> Vec<u32> {
    layout
        .fields()
        .iter()
        .map(|f| f.extract(f.header.value(p)))
        .collect()
}
