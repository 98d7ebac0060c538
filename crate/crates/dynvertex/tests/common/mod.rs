#![allow(dead_code)]

use dynvertex::specfun::EllipticContext;
use dynvertex::weights::UnfusedWeightParams;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cplx(r: &mut ChaCha8Rng, re: (f64, f64), im: (f64, f64)) -> C64 {
    C64::new(r.random_range(re.0..re.1), r.random_range(im.0..im.1))
}

/// Generic parameter point; elliptic when `elliptic` is set.
pub fn random_params(r: &mut ChaCha8Rng, elliptic: bool) -> UnfusedWeightParams {
    let eta = cplx(r, (0.05, 0.15), (-0.04, 0.04));
    let ctx = if elliptic {
        let tau = cplx(r, (-0.3, 0.3), (0.8, 1.5));
        EllipticContext::elliptic(tau, eta).unwrap()
    } else {
        EllipticContext::trigonometric(eta)
    };
    let v = cplx(r, (-0.4, 0.4), (-0.3, 0.3));
    let lambda = cplx(r, (-0.4, 0.4), (-0.3, 0.3));
    let spin = cplx(r, (0.5, 3.5), (-0.5, 0.5));
    UnfusedWeightParams::new(v, lambda, spin, ctx)
}
