//! Stieltjes transform of the semicircle law and the bulk spectral domain.

use serde::{Deserialize, Serialize};

use crate::cplx::{self, c64};
use crate::error::{Error, Result};
use crate::kernels::localization_length;

/// Root of `m^2 + z m + 1 = 0` with `Im m * Im z > 0`.
///
/// For real `z` outside `[-2, 2]` the real root with `|m| < 1` is returned.
pub fn stieltjes_m(z: c64) -> Result<c64> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Domain(format!("z = {z} is not finite")));
    }
    if z.im == 0.0 && z.re.abs() <= 2.0 {
        return Err(Error::Domain(format!("z = {} lies on the spectrum [-2, 2]", z.re)));
    }
    let s = (z * z - 4.0).sqrt();
    // The roots multiply to one; take the large one without cancellation
    // and invert it.
    let big = if (z.conj() * s).re >= 0.0 { -(z + s) * 0.5 } else { (s - z) * 0.5 };
    let m = big.inv();
    if z.im != 0.0 && m.im * z.im <= 0.0 {
        return Err(Error::Numerical(format!("branch selection failed at z = {z}")));
    }
    Ok(m)
}

/// `(1/2π) sqrt((4 - E^2)_+)`.
pub fn semicircle_density(e: f64) -> f64 {
    (4.0 - e * e).max(0.0).sqrt() / (2.0 * std::f64::consts::PI)
}

/// Parameters of the bulk domain `N^{-1+δ0} <= |Im z|`, `|z| <= C0`,
/// `|(m/|m|)^2 - 1| >= κ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BulkDomain {
    pub kappa: f64,
    pub delta0: f64,
    pub c0: f64,
}

impl Default for BulkDomain {
    fn default() -> Self {
        Self { kappa: 0.1, delta0: 0.1, c0: 10.0 }
    }
}

impl BulkDomain {
    pub fn contains(&self, z: c64, n: usize) -> bool {
        in_bulk_domain(z, self.kappa, self.delta0, self.c0, n)
    }
}

pub fn in_bulk_domain(z: c64, kappa: f64, delta0: f64, c0: f64, n: usize) -> bool {
    let eta = z.im.abs();
    if eta < (n as f64).powf(-1.0 + delta0) || z.norm() > c0 {
        return false;
    }
    match stieltjes_m(z) {
        Ok(m) => {
            let phase = m / m.norm();
            (phase * phase - 1.0).norm() >= kappa
        }
        Err(_) => false,
    }
}

/// Spectral parameter with `m(z)`, `η = |Im z|` and `ℓ(η)` attached.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    #[serde(with = "cplx::pair")]
    pub z: c64,
    #[serde(with = "cplx::pair")]
    pub m: c64,
    pub eta: f64,
    pub ell: f64,
}

impl SpectralPoint {
    /// `w`, `n` are the bandwidth and size entering `ℓ = min(W/√η, N)`.
    pub fn new(z: c64, w: usize, n: usize) -> Result<Self> {
        let m = stieltjes_m(z)?;
        let eta = z.im.abs();
        if eta == 0.0 {
            return Err(Error::Domain("spectral points need Im z != 0".into()));
        }
        Ok(Self { z, m, eta, ell: localization_length(w, n, eta) })
    }

    pub fn conj(&self) -> Self {
        Self { z: self.z.conj(), m: self.m.conj(), ..*self }
    }

    pub fn ell_eta(&self) -> f64 {
        self.ell * self.eta
    }

    /// `(N^{-1+δ0} <= η) ∧ (|z| <= C0) ∧ (|(m/|m|)^2-1| >= κ)`.
    pub fn in_bulk(&self, domain: &BulkDomain, n: usize) -> bool {
        domain.contains(self.z, n)
    }
}
