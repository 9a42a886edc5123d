//! Obfuscated firewall outsourcing over symmetric graded encodings.
//!
//! The enterprise side compiles plaintext ACL rules into an
//! [`ObfuscatedFirewall`](firewall::ObfuscatedFirewall) using one of four
//! schemes (naive, basic, blocking, divide-and-conquer). The cloud side runs
//! [`matcher::filter_packet`] against that firewall and learns only the
//! per-packet decision. Two encoding backends are provided: an exact
//! `transparent` backend used as a correctness oracle, and a CLT-style
//! backend over the integers.

pub mod analysis;
pub mod exec;
pub mod firewall;
pub mod ges;
pub mod matcher;
pub mod obfuscate;
pub mod primes;
pub mod rng;
pub mod rules;

#[doc(hidden)]
pub mod testing;

pub use analysis::{OpCounter, OpCounts};
pub use exec::Execution;
pub use firewall::{ObfuscatedFirewall, Scheme};
pub use ges::{Backend, Encoding, GesParams, Instance, ZeroTestParam};
pub use matcher::MatchDecision;
pub use rng::RandomSource;
pub use rules::{
    AclRule, Action, ActionKind, BitMode, BitRule, BlockRuleSpec, FieldLayout, PacketHeader,
};
