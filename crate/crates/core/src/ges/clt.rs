//! CLT-style graded encodings over the integers.
//!
//! Secret: primes `p_1..p_t` (`eta` bits), small plaintext primes
//! `g_1..g_t` (`alpha_bits` bits) and a unit `z` modulo `x0 = Π p_i`.
//! The ring is `Π Z_{g_i}`; a level-`l` encoding of residues `m` is the CRT
//! value `c` with `c ≡ (r_i·g_i + m_i)·z^{-l} (mod p_i)` for small noise
//! `r_i`.
//!
//! Zero test: `ω = p_zt·c mod x0` with
//! `p_zt = Σ h_i·(z^κ·g_i^{-1} mod p_i)·(x0/p_i)`. For an encoding of zero
//! `ω = Σ h_i·r_i·(x0/p_i)` is short; otherwise it is about as long as `x0`.
//! An encoding is declared zero when `bitlen(|ω|) <= bitlen(x0) - nu`.

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;

use super::{
    digest_bytes, Encoding, ExtractDigest, GesError, GesParams, Instance, PublicParams, Result,
    SecretKey, ZeroTestParam,
};
use crate::exec::Execution;
use crate::primes;
use crate::rng::RandomSource;

/// Extra low-order bits dropped by [`extract`] beyond the zero-noise ceiling.
const EXTRACT_GUARD_BITS: u64 = 24;

/// Parameter schedule for [`inst_gen`]. `eta` defaults to
/// `max(160, nu + kappa·(2·rho_noise + alpha_bits) + 32)` and the prime count
/// to `max(min_primes, kappa)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CltConfig {
    pub nu: u32,
    pub rho_noise: u32,
    pub alpha_bits: u32,
    pub min_primes: usize,
    pub eta: Option<u32>,
    pub primes: Option<usize>,
    pub h_bits: u32,
    pub calibration_samples: usize,
    pub min_margin: i64,
    pub max_attempts: usize,
}

impl Default for CltConfig {
    fn default() -> Self {
        Self {
            nu: 24,
            rho_noise: 16,
            alpha_bits: 16,
            min_primes: 8,
            eta: None,
            primes: None,
            h_bits: 16,
            calibration_samples: 32,
            min_margin: 8,
            max_attempts: 3,
        }
    }
}

impl CltConfig {
    pub fn eta_for(&self, kappa: u32) -> u32 {
        self.eta.unwrap_or_else(|| {
            160.max(self.nu + kappa * (2 * self.rho_noise + self.alpha_bits) + 32)
        })
    }

    pub fn primes_for(&self, kappa: u32) -> usize {
        self.primes
            .unwrap_or_else(|| self.min_primes.max(kappa as usize))
    }

    fn validate(&self) -> Result<()> {
        if self.nu < 8 {
            return Err(GesError::InvalidParameter("nu must be at least 8".into()));
        }
        if self.alpha_bits < 2 || self.alpha_bits > 62 {
            return Err(GesError::InvalidParameter(
                "alpha_bits must be in [2, 62]".into(),
            ));
        }
        if self.rho_noise == 0 {
            return Err(GesError::InvalidParameter(
                "rho_noise must be positive".into(),
            ));
        }
        if self.min_primes == 0 || self.primes == Some(0) {
            return Err(GesError::InvalidParameter(
                "prime count must be positive".into(),
            ));
        }
        if self.calibration_samples == 0 || self.max_attempts == 0 {
            return Err(GesError::InvalidParameter(
                "calibration needs at least one sample and attempt".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CltPublicParams {
    pub x0: BigUint,
    pub primes: usize,
    pub eta: u32,
    pub alpha_bits: u32,
    pub rho_noise: u32,
    pub nu: u32,
    pub h_bits: u32,
    pub kappa: u32,
}

impl CltPublicParams {
    /// `bitlen(x0) - nu`: the largest |ω| bit length still read as zero.
    pub fn threshold_bits(&self) -> u64 {
        self.x0.bits().saturating_sub(u64::from(self.nu))
    }

    fn fresh_noise(&self, noise_bits: u32) -> u32 {
        noise_bits + self.alpha_bits
    }

    pub fn rerand_noise_bits(&self) -> u32 {
        self.fresh_noise(self.rho_noise) + 1
    }

    /// Largest `noise_bits` accepted by [`CltSecretKey::encode_level`].
    pub fn noise_budget(&self) -> u32 {
        self.eta.saturating_sub(self.nu + self.alpha_bits + 1)
    }

    /// Noise bound of `LHS - RHS` when both sides are products of `kappa`
    /// re-randomized level-1 encodings.
    pub fn usage_noise_bits(&self) -> u32 {
        self.kappa * self.rerand_noise_bits() + 1
    }

    fn extract_shift(&self) -> u64 {
        let x0_bits = self.x0.bits();
        let log_t = (usize::BITS - self.primes.leading_zeros()) as u64;
        let ceiling = x0_bits.saturating_sub(u64::from(self.eta))
            + u64::from(self.usage_noise_bits())
            + u64::from(self.h_bits)
            + log_t
            + 1;
        (ceiling + EXTRACT_GUARD_BITS).min(x0_bits.saturating_sub(1))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CltZeroTest {
    pub pzt: BigUint,
    /// min(threshold - max zero |ω| bits, min nonzero |ω| bits - threshold),
    /// measured at instance generation.
    pub calibration_margin: i64,
    pub zero_max_bits: u64,
    pub nonzero_min_bits: u64,
}

/// Secret key of the CLT backend.
#[derive(Clone)]
pub struct CltSecretKey {
    pub primes: Vec<BigUint>,
    pub plaintext_moduli: Vec<u64>,
    pub z: BigUint,
    /// `z_inv_powers[l][i] = z^{-l} mod p_i` for `l` in `[0, kappa]`.
    pub z_inv_powers: Vec<Vec<BigUint>>,
    z_powers: Vec<Vec<BigUint>>,
    /// `x0 / p_i`.
    crt_basis: Vec<BigUint>,
    /// `z^{-l}·(x0/p_i)^{-1} mod p_i`, per level.
    level_factors: Vec<Vec<BigUint>>,
}

impl CltSecretKey {
    fn build(
        primes: Vec<BigUint>,
        plaintext_moduli: Vec<u64>,
        z: BigUint,
        kappa: u32,
        x0: &BigUint,
    ) -> Self {
        let levels = kappa as usize + 1;
        let crt_basis: Vec<BigUint> = primes.iter().map(|p| x0 / p).collect();
        let mut z_inv_powers = vec![Vec::with_capacity(primes.len()); levels];
        let mut z_powers = vec![Vec::with_capacity(primes.len()); levels];
        let mut level_factors = vec![Vec::with_capacity(primes.len()); levels];
        for (p, basis) in primes.iter().zip(&crt_basis) {
            let zp = &z % p;
            let z_inv = zp.modinv(p).expect("z is a unit mod every p_i");
            let basis_inv = (basis % p).modinv(p).expect("CRT basis is a unit mod p_i");
            let mut inv_pow = BigUint::one();
            let mut pow = BigUint::one();
            for l in 0..levels {
                level_factors[l].push((&inv_pow * &basis_inv) % p);
                z_inv_powers[l].push(inv_pow.clone());
                z_powers[l].push(pow.clone());
                inv_pow = (&inv_pow * &z_inv) % p;
                pow = (&pow * &zp) % p;
            }
        }
        Self {
            primes,
            plaintext_moduli,
            z,
            z_inv_powers,
            z_powers,
            crt_basis,
            level_factors,
        }
    }

    /// Encode residues `m_i ∈ [0, g_i)` at `level` with fresh noise of
    /// `noise_bits` bits.
    pub fn encode_level(
        &self,
        public: &CltPublicParams,
        level: u32,
        residues: &[u64],
        noise_bits: u32,
        rng: &mut RandomSource,
    ) -> Result<Encoding> {
        if level > public.kappa {
            return Err(GesError::LevelOutOfRange {
                level,
                min: 0,
                max: public.kappa,
            });
        }
        if residues.len() != self.primes.len() {
            return Err(GesError::ResidueCount {
                expected: self.primes.len(),
                found: residues.len(),
            });
        }
        let budget = public.noise_budget();
        if noise_bits > budget {
            return Err(GesError::NoiseBudget {
                requested: noise_bits,
                budget,
            });
        }
        let factors = &self.level_factors[level as usize];
        let mut acc = BigUint::zero();
        for i in 0..self.primes.len() {
            let g = self.plaintext_moduli[i];
            let r = rng.gen_biguint(u64::from(noise_bits));
            let numerator = r * g + (residues[i] % g);
            let term = (numerator * &factors[i]) % &self.primes[i];
            acc += term * &self.crt_basis[i];
        }
        Ok(Encoding::new(
            level,
            acc % &public.x0,
            public.fresh_noise(noise_bits),
        ))
    }

    /// Recover the residue vector of an encoding. Valid while the noise
    /// stays below the per-prime budget.
    pub fn decode(&self, _public: &CltPublicParams, e: &Encoding) -> Vec<u64> {
        let zp = &self.z_powers[e.level() as usize];
        self.primes
            .iter()
            .zip(zp)
            .zip(&self.plaintext_moduli)
            .map(|((p, zl), &g)| {
                let numerator = (e.payload() % p * zl) % p;
                let half = p >> 1u32;
                let gb = BigUint::from(g);
                if numerator > half {
                    // negative numerator: -(p - n) mod g
                    let mag = (p - &numerator) % &gb;
                    ((&gb - mag) % &gb).to_u64().unwrap()
                } else {
                    (numerator % &gb).to_u64().unwrap()
                }
            })
            .collect()
    }

    pub fn random_residues(&self, rng: &mut RandomSource) -> Vec<u64> {
        self.plaintext_moduli
            .iter()
            .map(|&g| rng.gen_range(0..g))
            .collect()
    }

    pub(super) fn samp(&self, public: &CltPublicParams, rng: &mut RandomSource) -> Encoding {
        let residues = self.random_residues(rng);
        self.encode_level(public, 0, &residues, public.rho_noise, rng)
            .expect("rho_noise fits the budget of a calibrated instance")
    }

    pub(super) fn re_rand(
        &self,
        public: &CltPublicParams,
        e: &Encoding,
        rng: &mut RandomSource,
    ) -> Result<Encoding> {
        let zeros = vec![0u64; self.primes.len()];
        let mask = self.encode_level(public, e.level(), &zeros, public.rho_noise, rng)?;
        let payload = (e.payload() + mask.payload()) % &public.x0;
        Ok(Encoding::new(
            e.level(),
            payload,
            e.noise_bits().max(mask.noise_bits()) + 1,
        ))
    }
}

fn centered_bits(public: &CltPublicParams, pzt: &BigUint, e: &Encoding) -> u64 {
    let omega = (pzt * e.payload()) % &public.x0;
    let neg = &public.x0 - &omega;
    omega.min(neg).bits()
}

pub(super) fn is_zero(public: &CltPublicParams, zt: &CltZeroTest, e: &Encoding) -> bool {
    centered_bits(public, &zt.pzt, e) <= public.threshold_bits()
}

/// Digest of the high-order bits of `ω`. Reliable for encodings whose noise
/// is within the usage pattern of the schemes (`usage_noise_bits`).
pub(super) fn extract(public: &CltPublicParams, zt: &CltZeroTest, e: &Encoding) -> ExtractDigest {
    let omega = (&zt.pzt * e.payload()) % &public.x0;
    let high = omega >> public.extract_shift();
    digest_bytes(&high.to_bytes_be())
}

/// Instance generation with empirical zero-test calibration. On a margin
/// shortfall `eta` grows by 32 bits and the instance is regenerated.
pub(super) fn inst_gen(
    lambda: u32,
    kappa: u32,
    cfg: &CltConfig,
    rng: &mut RandomSource,
) -> Result<Instance> {
    cfg.validate()?;
    if kappa > 64 {
        return Err(GesError::KappaTooLarge { kappa, max: 64 });
    }
    let mut eta = cfg.eta_for(kappa);
    let t = cfg.primes_for(kappa);
    let mut last_margin = i64::MIN;
    for attempt in 0..cfg.max_attempts {
        let mut attempt_rng = rng.fork("clt-attempt", attempt as u64);
        let inst = generate(lambda, kappa, eta, t, cfg, &mut attempt_rng)?;
        let PublicParams::Clt(public) = &inst.params.public else {
            unreachable!()
        };
        let ZeroTestParam::Clt(zt) = &inst.zero_test else {
            unreachable!()
        };
        last_margin = zt.calibration_margin;
        if zt.calibration_margin >= cfg.min_margin && public.noise_budget() >= cfg.rho_noise {
            return Ok(inst);
        }
        eta += 32;
    }
    Err(GesError::Calibration {
        attempts: cfg.max_attempts,
        eta,
        primes: t,
        nu: cfg.nu,
        margin: last_margin,
    })
}

fn generate(
    lambda: u32,
    kappa: u32,
    eta: u32,
    t: usize,
    cfg: &CltConfig,
    rng: &mut RandomSource,
) -> Result<Instance> {
    if eta <= cfg.nu + cfg.alpha_bits + cfg.rho_noise {
        return Err(GesError::InvalidParameter(format!(
            "eta={eta} leaves no noise budget"
        )));
    }
    let base = rng.fork("clt-primes", 0);
    let mut primes: Vec<BigUint> = Execution::Parallel.map_indexed(t, |i| {
        let mut r = base.fork("p", i as u64);
        primes::random_prime(u64::from(eta), &mut r)
    });
    // collisions are astronomically unlikely; replace any deterministically
    let mut extra = t as u64;
    for i in 0..t {
        while primes[..i].contains(&primes[i]) {
            primes[i] = primes::random_prime(u64::from(eta), &mut base.fork("p", extra));
            extra += 1;
        }
    }
    let mut small_rng = rng.fork("clt-g", 0);
    let plaintext_moduli: Vec<u64> =
        primes::distinct_primes(t, u64::from(cfg.alpha_bits), &mut small_rng)
            .into_iter()
            .map(|g| g.to_u64().unwrap())
            .collect();
    let x0: BigUint = primes.iter().product();

    let mut zr = rng.fork("clt-z", 0);
    let z = loop {
        let z = zr.gen_biguint_below(&x0);
        if !z.is_zero() && primes.iter().all(|p| primes::gcd_is_one(&z, p)) {
            break z;
        }
    };
    let sk = CltSecretKey::build(primes, plaintext_moduli, z, kappa, &x0);

    let mut hr = rng.fork("clt-h", 0);
    let mut pzt = BigUint::zero();
    let top = kappa as usize;
    for i in 0..t {
        let p = &sk.primes[i];
        let g_inv = BigUint::from(sk.plaintext_moduli[i])
            .modinv(p)
            .expect("g_i < p_i is a unit");
        let h = loop {
            let h = hr.gen_biguint(u64::from(cfg.h_bits));
            if !h.is_zero() {
                break h;
            }
        };
        let inner = (&sk.z_powers[top][i] * g_inv) % p;
        pzt += h * inner * &sk.crt_basis[i];
    }
    pzt %= &x0;

    let public = CltPublicParams {
        x0,
        primes: t,
        eta,
        alpha_bits: cfg.alpha_bits,
        rho_noise: cfg.rho_noise,
        nu: cfg.nu,
        h_bits: cfg.h_bits,
        kappa,
    };
    let params = GesParams {
        lambda,
        kappa,
        public: PublicParams::Clt(public.clone()),
    };
    let (zero_max_bits, nonzero_min_bits) =
        calibrate(&params, &public, &sk, &pzt, cfg.calibration_samples, rng);
    let threshold = public.threshold_bits() as i64;
    let calibration_margin =
        (threshold - zero_max_bits as i64).min(nonzero_min_bits as i64 - threshold);
    let zt = CltZeroTest {
        pzt,
        calibration_margin,
        zero_max_bits,
        nonzero_min_bits,
    };
    Ok(Instance::from_parts(
        params,
        ZeroTestParam::Clt(zt),
        SecretKey::Clt(Box::new(sk)),
    ))
}

/// Build known-zero and known-nonzero level-κ encodings the way the
/// matcher does (products of κ re-randomized level-1 encodings, then one
/// subtraction) and record the extreme |ω| bit lengths.
fn calibrate(
    params: &GesParams,
    public: &CltPublicParams,
    sk: &CltSecretKey,
    pzt: &BigUint,
    samples: usize,
    rng: &RandomSource,
) -> (u64, u64) {
    let base = rng.fork("clt-calibrate", 0);
    let fresh = |residues: &[u64], r: &mut RandomSource| -> Encoding {
        let e = sk
            .encode_level(public, 1, residues, public.rho_noise, r)
            .unwrap();
        sk.re_rand(public, &e, r).unwrap()
    };
    let results = Execution::Parallel.map_indexed(samples, |s| {
        let mut r = base.fork("sample", s as u64);
        let factors: Vec<Vec<u64>> = (0..public.kappa)
            .map(|_| sk.random_residues(&mut r))
            .collect();
        let chain = |r: &mut RandomSource, upto: usize| -> Encoding {
            let mut acc = fresh(&factors[0], r);
            for f in &factors[1..upto] {
                let next = fresh(f, r);
                acc = params.mul(acc.level(), &acc, 1, &next).unwrap();
            }
            acc
        };
        let k = public.kappa as usize;
        let lhs = chain(&mut r, k);
        let (rhs, rhs_other) = if k == 1 {
            let mut other = sk.random_residues(&mut r);
            bump(&mut other, &factors[0], &sk.plaintext_moduli);
            (fresh(&factors[0], &mut r), fresh(&other, &mut r))
        } else {
            let prefix = chain(&mut r, k - 1);
            let last = fresh(&factors[k - 1], &mut r);
            let mut other = sk.random_residues(&mut r);
            bump(&mut other, &factors[k - 1], &sk.plaintext_moduli);
            let last_other = fresh(&other, &mut r);
            (
                params.mul(k as u32 - 1, &prefix, 1, &last).unwrap(),
                params.mul(k as u32 - 1, &prefix, 1, &last_other).unwrap(),
            )
        };
        let zero = params.sub(public.kappa, &lhs, &rhs).unwrap();
        let nonzero = params.sub(public.kappa, &lhs, &rhs_other).unwrap();
        (
            centered_bits(public, pzt, &zero),
            centered_bits(public, pzt, &nonzero),
        )
    });
    let zero_max = results.iter().map(|r| r.0).max().unwrap_or(0);
    let nonzero_min = results.iter().map(|r| r.1).min().unwrap_or(0);
    (zero_max, nonzero_min)
}

/// Make sure `other` differs from `reference` in at least one residue.
fn bump(other: &mut [u64], reference: &[u64], moduli: &[u64]) {
    if other == reference {
        other[0] = (other[0] + 1) % moduli[0];
    }
}
