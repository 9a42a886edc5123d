use num_bigint::{BigUint, RandBigInt};

use super::{
    Encoding, GesError, GesParams, Instance, PublicParams, Result, SecretKey, ZeroTestParam,
};
use crate::primes;
use crate::rng::RandomSource;

/// Public data of the exact backend: the prime ring modulus `q`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransparentParams {
    pub modulus: BigUint,
}

impl TransparentParams {
    pub(super) fn samp(&self, rng: &mut RandomSource) -> Encoding {
        Encoding::new(0, rng.gen_biguint_below(&self.modulus), 0)
    }
}

pub(super) fn inst_gen(lambda: u32, kappa: u32, rng: &mut RandomSource) -> Instance {
    let bits = u64::from(lambda.saturating_mul(2).max(64));
    let modulus = primes::random_prime(bits, rng);
    Instance::from_parts(
        GesParams {
            lambda,
            kappa,
            public: PublicParams::Transparent(TransparentParams { modulus }),
        },
        ZeroTestParam::Transparent,
        SecretKey::Transparent,
    )
}

pub(super) fn with_modulus(modulus: BigUint, kappa: u32) -> Result<Instance> {
    if kappa == 0 {
        return Err(GesError::ZeroKappa);
    }
    let mut rng = RandomSource::new(0);
    if !primes::is_probable_prime(&modulus, 32, &mut rng) {
        return Err(GesError::InvalidParameter(format!(
            "modulus {modulus} is not prime"
        )));
    }
    let lambda = (modulus.bits() / 2).max(1) as u32;
    Ok(Instance::from_parts(
        GesParams {
            lambda,
            kappa,
            public: PublicParams::Transparent(TransparentParams { modulus }),
        },
        ZeroTestParam::Transparent,
        SecretKey::Transparent,
    ))
}
