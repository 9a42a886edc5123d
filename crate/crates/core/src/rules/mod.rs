//! Plaintext rule model: ACL text, bit-level rules `(v, W, A)`, field-level
//! block rules, and the packet views both are matched against.

mod acl;
mod bits;
mod block;
mod packet;

use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub use acl::{format_acl, parse_acl, AclRule, IpPattern, OctetAtom, PortAtom, Protocol};
pub use bits::{compile_bit, packet_bits, BitMode, BitRule};
pub use block::{
    compile_block, packet_tuple, BlockRuleSpec, Field, FieldLayout, FilterSet, HeaderField,
};
pub use packet::PacketHeader;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("rule at line {line}: {message}")]
    NotBitExpressible { line: usize, message: String },
    #[error("rule at line {line}: {message}")]
    NotCrossProduct { line: usize, message: String },
    #[error("invalid layout: {0}")]
    Layout(String),
    #[error("invalid rule: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ActionKind {
    Permit,
    Deny,
}

impl ActionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Permit => "permit",
            ActionKind::Deny => "deny",
        }
    }
}

/// Rule action. `raw` keeps the token as written in the ACL.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Action {
    pub kind: ActionKind,
    pub raw: String,
}

impl Action {
    pub fn permit() -> Self {
        ActionKind::Permit.into()
    }

    pub fn deny() -> Self {
        ActionKind::Deny.into()
    }
}

impl From<ActionKind> for Action {
    fn from(kind: ActionKind) -> Self {
        Action {
            kind,
            raw: kind.as_str().to_string(),
        }
    }
}

impl FromStr for Action {
    type Err = RuleError;
    fn from_str(token: &str) -> Result<Self, RuleError> {
        let kind = match token.to_ascii_lowercase().as_str() {
            "permit" | "allow" | "accept" | "pass" => ActionKind::Permit,
            "deny" | "drop" | "reject" | "block" => ActionKind::Deny,
            _ => return Err(RuleError::Invalid(format!("unknown action '{token}'"))),
        };
        Ok(Action {
            kind,
            raw: token.to_string(),
        })
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}
