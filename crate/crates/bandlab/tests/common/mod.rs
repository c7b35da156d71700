#![allow(dead_code)]

use std::sync::Arc;

use bandlab::c64;
use bandlab::ensemble::{build_translation_invariant, DecayProfile, ProfileSpec, VarianceProfile};
use bandlab::semicircle::SpectralPoint;

pub fn poly_profile(n: usize, w: usize) -> Arc<VarianceProfile> {
    Arc::new(build_translation_invariant(n, w, &DecayProfile::Polynomial { power: 4.0 }).unwrap())
}

pub fn block_profile(l: usize, w: usize) -> Arc<VarianceProfile> {
    Arc::new(ProfileSpec::nearest_neighbour_blocks(l, w).build().unwrap())
}

pub fn point(re: f64, im: f64, p: &VarianceProfile) -> SpectralPoint {
    SpectralPoint::new(c64::new(re, im), p.w(), p.n()).unwrap()
}

pub fn rel(a: c64, b: c64) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
