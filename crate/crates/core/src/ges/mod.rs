//! Symmetric κ-graded encoding system.
//!
//! Encodings live at a level in `[0, kappa]`. Addition and negation keep the
//! level, multiplication adds levels, and zero testing works only at level
//! `kappa`. Sampling, encoding and re-randomization need the secret key held
//! by the [`Instance`]; everything else is a pure function of the public
//! [`GesParams`].
//!
//! Two backends implement the procedures:
//! * `transparent`: the ring is `Z_q` for a random prime `q` and an encoding
//!   is the ring value itself. Exact and insecure; used as the oracle.
//! * `clt`: integer encodings modulo a product of secret primes, see [`clt`].

pub mod clt;
mod transparent;

use num_bigint::BigUint;
use sha2::{Digest, Sha256};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::rng::RandomSource;
pub use clt::{CltConfig, CltPublicParams, CltSecretKey, CltZeroTest};
pub use transparent::TransparentParams;

/// Highest multilinearity level any backend accepts.
pub const MAX_KAPPA: u32 = 256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GesError {
    #[error("multilinearity level kappa must be at least 1")]
    ZeroKappa,
    #[error("security parameter lambda must be at least 1")]
    ZeroLambda,
    #[error("kappa {kappa} exceeds the backend limit of {max}")]
    KappaTooLarge { kappa: u32, max: u32 },
    #[error("target level {level} outside [{min}, {max}]")]
    LevelOutOfRange { level: u32, min: u32, max: u32 },
    #[error("operand is at level {found}, expected level {expected}")]
    LevelMismatch { expected: u32, found: u32 },
    #[error("level overflow: {left} + {right} exceeds kappa {kappa}")]
    LevelOverflow { left: u32, right: u32, kappa: u32 },
    #[error("zero testing and extraction need level kappa = {kappa}, got {found}")]
    NotTopLevel { kappa: u32, found: u32 },
    #[error("encoding payload is not reduced for this instance")]
    PayloadOutOfRange,
    #[error("encoding noise of {requested} bits exceeds the budget of {budget} bits")]
    NoiseBudget { requested: u32, budget: u32 },
    #[error("secret key belongs to a different backend")]
    BackendMismatch,
    #[error("ring element has {found} residues, instance expects {expected}")]
    ResidueCount { expected: usize, found: usize },
    #[error(
        "zero-test calibration failed after {attempts} attempts \
         (last try: eta={eta}, t={primes}, nu={nu}, margin={margin} bits)"
    )]
    Calibration {
        attempts: usize,
        eta: u32,
        primes: usize,
        nu: u32,
        margin: i64,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, GesError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BackendId {
    Transparent,
    Clt,
}

impl BackendId {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendId::Transparent => "transparent",
            BackendId::Clt => "clt",
        }
    }
}

impl fmt::Display for BackendId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendId {
    type Err = GesError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transparent" => Ok(BackendId::Transparent),
            "clt" => Ok(BackendId::Clt),
            other => Err(GesError::InvalidParameter(format!(
                "unknown backend '{other}'"
            ))),
        }
    }
}

/// Backend selection plus its tunables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Backend {
    Transparent,
    Clt(CltConfig),
}

impl Backend {
    pub fn id(&self) -> BackendId {
        match self {
            Backend::Transparent => BackendId::Transparent,
            Backend::Clt(_) => BackendId::Clt,
        }
    }

    pub fn clt() -> Self {
        Backend::Clt(CltConfig::default())
    }
}

/// Backend-specific public data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PublicParams {
    Transparent(TransparentParams),
    Clt(CltPublicParams),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GesParams {
    pub lambda: u32,
    pub kappa: u32,
    pub public: PublicParams,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ZeroTestParam {
    /// The transparent backend tests the ring value directly.
    Transparent,
    Clt(CltZeroTest),
}

/// Encoder-only material. Never leaves the enterprise.
#[derive(Clone)]
pub enum SecretKey {
    Transparent,
    Clt(Box<CltSecretKey>),
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SecretKey::Transparent => f.write_str("SecretKey::Transparent"),
            SecretKey::Clt(_) => f.write_str("SecretKey::Clt(<redacted>)"),
        }
    }
}

/// A leveled encoding of a hidden ring element.
///
/// `noise` is an upper bound, in bits, on the magnitude of the per-prime
/// numerator (CLT backend); it is always zero on the transparent backend.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Encoding {
    level: u32,
    payload: BigUint,
    noise: u32,
}

impl Encoding {
    pub(crate) fn new(level: u32, payload: BigUint, noise: u32) -> Self {
        Self {
            level,
            payload,
            noise,
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn payload(&self) -> &BigUint {
        &self.payload
    }

    pub fn noise_bits(&self) -> u32 {
        self.noise
    }
}

/// Canonical digest of a level-κ encoding. Equal ring elements give equal
/// digests.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct ExtractDigest(pub [u8; 32]);

impl fmt::Debug for ExtractDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0[..8] {
            write!(f, "{b:02x}")?;
        }
        f.write_str("…")
    }
}

pub(crate) fn digest_bytes(bytes: &[u8]) -> ExtractDigest {
    let mut h = Sha256::new();
    h.update(b"sofa/extract/v1");
    h.update(bytes);
    ExtractDigest(h.finalize().into())
}

/// Output of instance generation: public parameters, the zero-test
/// parameter, and the encoder's secret key.
#[derive(Clone, Debug)]
pub struct Instance {
    pub params: GesParams,
    pub zero_test: ZeroTestParam,
    secret: SecretKey,
}

/// Generate a fresh instance of the chosen backend.
pub fn inst_gen(
    lambda: u32,
    kappa: u32,
    backend: &Backend,
    rng: &mut RandomSource,
) -> Result<Instance> {
    if kappa == 0 {
        return Err(GesError::ZeroKappa);
    }
    if lambda == 0 {
        return Err(GesError::ZeroLambda);
    }
    if kappa > MAX_KAPPA {
        return Err(GesError::KappaTooLarge {
            kappa,
            max: MAX_KAPPA,
        });
    }
    match backend {
        Backend::Transparent => Ok(transparent::inst_gen(lambda, kappa, rng)),
        Backend::Clt(cfg) => clt::inst_gen(lambda, kappa, cfg, rng),
    }
}

impl Instance {
    pub(crate) fn from_parts(
        params: GesParams,
        zero_test: ZeroTestParam,
        secret: SecretKey,
    ) -> Self {
        Self {
            params,
            zero_test,
            secret,
        }
    }

    /// Transparent instance over a caller-chosen prime modulus. Lets tests
    /// work over tiny rings where exhaustive checks are possible.
    pub fn transparent_with_modulus(modulus: BigUint, kappa: u32) -> Result<Self> {
        transparent::with_modulus(modulus, kappa)
    }

    pub fn secret_key(&self) -> &SecretKey {
        &self.secret
    }

    pub fn kappa(&self) -> u32 {
        self.params.kappa
    }

    /// Level-0 encoding of a uniformly random ring element.
    pub fn samp(&self, rng: &mut RandomSource) -> Encoding {
        match (&self.params.public, &self.secret) {
            (PublicParams::Transparent(p), _) => p.samp(rng),
            (PublicParams::Clt(p), SecretKey::Clt(sk)) => sk.samp(p, rng),
            _ => unreachable!("instance pairs params and key of the same backend"),
        }
    }

    /// Raise a level-0 encoding to `target_level` (1..=kappa).
    pub fn encode(
        &self,
        target_level: u32,
        e: &Encoding,
        rng: &mut RandomSource,
    ) -> Result<Encoding> {
        if target_level == 0 || target_level > self.params.kappa {
            return Err(GesError::LevelOutOfRange {
                level: target_level,
                min: 1,
                max: self.params.kappa,
            });
        }
        expect_level(e, 0)?;
        match (&self.params.public, &self.secret) {
            (PublicParams::Transparent(_), _) => {
                Ok(Encoding::new(target_level, e.payload.clone(), 0))
            }
            (PublicParams::Clt(p), SecretKey::Clt(sk)) => {
                let residues = sk.decode(p, e);
                sk.encode_level(p, target_level, &residues, p.rho_noise, rng)
            }
            _ => Err(GesError::BackendMismatch),
        }
    }

    /// Fresh-looking encoding of the same element at the same level.
    pub fn re_rand(&self, level: u32, e: &Encoding, rng: &mut RandomSource) -> Result<Encoding> {
        expect_level(e, level)?;
        if level > self.params.kappa {
            return Err(GesError::LevelOutOfRange {
                level,
                min: 0,
                max: self.params.kappa,
            });
        }
        match (&self.params.public, &self.secret) {
            (PublicParams::Transparent(_), _) => Ok(e.clone()),
            (PublicParams::Clt(p), SecretKey::Clt(sk)) => sk.re_rand(p, e, rng),
            _ => Err(GesError::BackendMismatch),
        }
    }
}

fn expect_level(e: &Encoding, level: u32) -> Result<()> {
    if e.level != level {
        return Err(GesError::LevelMismatch {
            expected: level,
            found: e.level,
        });
    }
    Ok(())
}

impl GesParams {
    pub fn backend_id(&self) -> BackendId {
        match self.public {
            PublicParams::Transparent(_) => BackendId::Transparent,
            PublicParams::Clt(_) => BackendId::Clt,
        }
    }

    fn modulus(&self) -> &BigUint {
        match &self.public {
            PublicParams::Transparent(p) => &p.modulus,
            PublicParams::Clt(p) => &p.x0,
        }
    }

    /// Noise bound (bits) carried by freshly encoded, re-randomized
    /// level-1 encodings.
    pub fn fresh_noise_bits(&self) -> u32 {
        match &self.public {
            PublicParams::Transparent(_) => 0,
            PublicParams::Clt(p) => p.rerand_noise_bits(),
        }
    }

    /// Rebuild an encoding from its serialized payload. The noise bound is
    /// taken to be that of a fresh re-randomized encoding.
    pub fn import_encoding(&self, level: u32, payload: BigUint) -> Result<Encoding> {
        if level > self.kappa {
            return Err(GesError::LevelOutOfRange {
                level,
                min: 0,
                max: self.kappa,
            });
        }
        if &payload >= self.modulus() {
            return Err(GesError::PayloadOutOfRange);
        }
        Ok(Encoding::new(level, payload, self.fresh_noise_bits()))
    }

    fn check_operand(&self, level: u32, e: &Encoding) -> Result<()> {
        expect_level(e, level)?;
        if level > self.kappa {
            return Err(GesError::LevelOutOfRange {
                level,
                min: 0,
                max: self.kappa,
            });
        }
        Ok(())
    }

    pub fn add(&self, level: u32, a: &Encoding, b: &Encoding) -> Result<Encoding> {
        self.check_operand(level, a)?;
        self.check_operand(level, b)?;
        let m = self.modulus();
        let sum = (&a.payload + &b.payload) % m;
        Ok(Encoding::new(level, sum, a.noise.max(b.noise) + 1))
    }

    pub fn neg(&self, level: u32, a: &Encoding) -> Result<Encoding> {
        self.check_operand(level, a)?;
        let m = self.modulus();
        let payload = if a.payload == BigUint::default() {
            BigUint::default()
        } else {
            m - &a.payload
        };
        Ok(Encoding::new(level, payload, a.noise))
    }

    pub fn sub(&self, level: u32, a: &Encoding, b: &Encoding) -> Result<Encoding> {
        let nb = self.neg(level, b)?;
        self.add(level, a, &nb)
    }

    pub fn mul(&self, level1: u32, a: &Encoding, level2: u32, b: &Encoding) -> Result<Encoding> {
        expect_level(a, level1)?;
        expect_level(b, level2)?;
        let level = level1 + level2;
        if level > self.kappa {
            return Err(GesError::LevelOverflow {
                left: level1,
                right: level2,
                kappa: self.kappa,
            });
        }
        let m = self.modulus();
        let prod = (&a.payload * &b.payload) % m;
        Ok(Encoding::new(level, prod, a.noise + b.noise))
    }

    fn check_top(&self, e: &Encoding) -> Result<()> {
        if e.level != self.kappa {
            return Err(GesError::NotTopLevel {
                kappa: self.kappa,
                found: e.level,
            });
        }
        Ok(())
    }

    pub fn is_zero(&self, pzt: &ZeroTestParam, e: &Encoding) -> Result<bool> {
        self.check_top(e)?;
        match (&self.public, pzt) {
            (PublicParams::Transparent(_), ZeroTestParam::Transparent) => {
                Ok(e.payload == BigUint::default())
            }
            (PublicParams::Clt(p), ZeroTestParam::Clt(z)) => Ok(clt::is_zero(p, z, e)),
            _ => Err(GesError::BackendMismatch),
        }
    }

    pub fn extract(&self, pzt: &ZeroTestParam, e: &Encoding) -> Result<ExtractDigest> {
        self.check_top(e)?;
        match (&self.public, pzt) {
            (PublicParams::Transparent(_), ZeroTestParam::Transparent) => {
                Ok(digest_bytes(&e.payload.to_bytes_be()))
            }
            (PublicParams::Clt(p), ZeroTestParam::Clt(z)) => Ok(clt::extract(p, z, e)),
            _ => Err(GesError::BackendMismatch),
        }
    }
}
