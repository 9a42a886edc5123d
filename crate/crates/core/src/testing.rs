//! Deliberately weakened variants, kept out of the public API surface.

use crate::firewall::ObfuscatedFirewall;
use crate::obfuscate::{BasicSchemeConfig, IndexSampling, ObfuscationOptions, Obfuscator, Result};
use crate::rng::RandomSource;
use crate::rules::{BitMode, BitRule};

/// Basic scheme with `P_r` drawn *with* replacement. Two positions of one
/// rule may then share a unit, which lets a mismatching packet cancel.
pub fn basic_with_replacement(
    rules: &[BitRule],
    mode: BitMode,
    config: BasicSchemeConfig,
    options: ObfuscationOptions,
    rng: &RandomSource,
) -> Result<ObfuscatedFirewall> {
    Obfuscator::new(options).basic_sampled(rules, mode, config, IndexSampling::WithReplacement, rng)
}
