//! Line-delimited JSON packets and decisions.
//!
//! Packet line: `{"src_ip":"10.0.0.1","src_port":1234,"dst_ip":"10.0.0.2","dst_port":80,"proto":"TCP"}`.
//! `proto` may be a name (`TCP`, `UDP`, `ICMP`) or a protocol number; ports
//! and `proto` default to 0 and the destination address to `0.0.0.0`.
//!
//! Decision line: `{"index":0,"action":"deny","rule":3}`; `rule` is absent
//! when the default action applied or indices are hidden. Lines that could
//! not be processed become `{"index":5,"error":"..."}`.

use serde::{Deserialize, Serialize};
use std::net::Ipv4Addr;

use sofa_core::rules::Protocol;
use sofa_core::PacketHeader;

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ProtoField {
    Number(u8),
    Name(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PacketLine {
    src_ip: Ipv4Addr,
    #[serde(default)]
    src_port: u16,
    #[serde(default = "unspecified")]
    dst_ip: Ipv4Addr,
    #[serde(default)]
    dst_port: u16,
    #[serde(default)]
    proto: Option<ProtoField>,
}

fn unspecified() -> Ipv4Addr {
    Ipv4Addr::UNSPECIFIED
}

/// Parse one packet line.
pub fn parse_packet(line: &str) -> Result<PacketHeader, String> {
    let p: PacketLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let proto = match p.proto {
        None => 0,
        Some(ProtoField::Number(n)) => n,
        Some(ProtoField::Name(s)) => Protocol::parse(&s)
            .and_then(Protocol::number)
            .ok_or_else(|| format!("unknown protocol '{s}'"))?,
    };
    Ok(PacketHeader::new(
        p.src_ip, p.src_port, p.dst_ip, p.dst_port, proto,
    ))
}

/// Parse a packets file; blank lines are skipped, bad lines kept as errors.
pub fn parse_packets(text: &str) -> Vec<Result<PacketHeader, String>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(parse_packet)
        .collect()
}

pub fn packet_line(p: &PacketHeader) -> String {
    let proto = match Protocol::from_number(p.proto) {
        Some(named) if named != Protocol::Any => ProtoField::Name(named.to_string()),
        _ => ProtoField::Number(p.proto),
    };
    let line = PacketLine {
        src_ip: p.src(),
        src_port: p.src_port,
        dst_ip: p.dst(),
        dst_port: p.dst_port,
        proto: Some(proto),
    };
    serde_json::to_string(&line).expect("packet lines serialize")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionLine {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl DecisionLine {
    pub fn decided(index: usize, action: &str, rule: Option<usize>) -> Self {
        Self {
            index,
            action: Some(action.into()),
            rule,
            error: None,
        }
    }

    pub fn failed(index: usize, error: impl Into<String>) -> Self {
        Self {
            index,
            action: None,
            rule: None,
            error: Some(error.into()),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("decision lines serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn packet_lines_round_trip() {
        let p = PacketHeader::new([10, 0, 0, 1].into(), 1234, [10, 0, 0, 2].into(), 80, 6);
        let line = packet_line(&p);
        assert!(line.contains("\"proto\":\"TCP\""));
        assert_eq!(parse_packet(&line).unwrap(), p);
        let odd = PacketHeader { proto: 47, ..p };
        assert_eq!(parse_packet(&packet_line(&odd)).unwrap(), odd);
    }

    #[test]
    fn minimal_and_malformed_lines() {
        let p = parse_packet(r#"{"src_ip":"192.168.45.7"}"#).unwrap();
        assert_eq!(p, PacketHeader::from_src([192, 168, 45, 7].into()));
        assert!(parse_packet(r#"{"src_ip":"300.1.1.1"}"#).is_err());
        assert!(parse_packet(r#"{"src_ip":"1.1.1.1","proto":"GRE"}"#).is_err());
        assert!(parse_packet("not json").is_err());
        let parsed = parse_packets("{\"src_ip\":\"1.2.3.4\"}\n\nbad\n");
        assert_eq!(parsed.len(), 2);
        assert!(parsed[1].is_err());
    }

    #[test]
    fn decision_lines() {
        assert_eq!(
            DecisionLine::decided(0, "deny", Some(0)).to_line(),
            r#"{"index":0,"action":"deny","rule":0}"#
        );
        assert_eq!(
            DecisionLine::decided(1, "deny", None).to_line(),
            r#"{"index":1,"action":"deny"}"#
        );
        assert_eq!(
            DecisionLine::failed(2, "bad line").to_line(),
            r#"{"index":2,"error":"bad line"}"#
        );
    }
}
