//! Two-point kernels, propagators, control functions and their checks.

mod admissibility;
mod control;

pub use admissibility::{
    verify_control_admissibility, AdmissibilityGrid, AdmissibilityReport, ConditionFit, EtaConstant,
};
pub use control::{
    generalized_upsilon, size_function, triple_norm, upsilon_build, ControlFamily, ControlFunction,
    SizeArg, SizeFunctionInputs, SizeMode, TripleNorm, UpsArg,
};

use std::io::Write;

use faer::linalg::solvers::Solve;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::cplx::c64;
use crate::ensemble::VarianceProfile;
use crate::error::{Error, Result};
use crate::semicircle::SpectralPoint;

/// `min(W/√η, N)`.
pub fn localization_length(w: usize, n: usize, eta: f64) -> f64 {
    (w as f64 / eta.sqrt()).min(n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// Uses `m(z1) * conj(m(z2))`.
    Theta,
    /// Uses `m(z1) * m(z2)`.
    Xi,
}

#[derive(Clone, Debug)]
pub struct TwoPointKernel {
    pub values: Mat<c64>,
    pub kind: KernelKind,
    pub z1: SpectralPoint,
    pub z2: SpectralPoint,
}

impl TwoPointKernel {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, a: usize, b: usize) -> c64 {
        self.values[(a, b)]
    }

    /// The scalar `c` in `(I - cS)^{-1} c S`.
    pub fn coupling(&self) -> c64 {
        coupling(self.kind, &self.z1, &self.z2)
    }

    pub fn column_sums(&self) -> Vec<c64> {
        let n = self.n();
        (0..n).map(|b| (0..n).map(|a| self.values[(a, b)]).sum()).collect()
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        crate::ensemble::MatrixValues::Complex(self.values.clone()).write_csv(out)
    }
}

fn coupling(kind: KernelKind, z1: &SpectralPoint, z2: &SpectralPoint) -> c64 {
    match kind {
        KernelKind::Theta => z1.m * z2.m.conj(),
        KernelKind::Xi => z1.m * z2.m,
    }
}

pub(crate) const MAX_CONDITION: f64 = 1e12;

/// `(I - c S)^{-1} c S` by a dense LU solve.
pub fn two_point_kernel(
    p: &VarianceProfile,
    z1: &SpectralPoint,
    z2: &SpectralPoint,
    kind: KernelKind,
) -> Result<TwoPointKernel> {
    if z1.z.im * z2.z.im <= 0.0 {
        return Err(Error::Domain("two-point kernels need z1, z2 in the same half plane".into()));
    }
    let c = coupling(kind, z1, z2);
    let values = resolvent_times_s(p, c)?;
    Ok(TwoPointKernel { values, kind, z1: *z1, z2: *z2 })
}

/// `(I - cS)^{-1} c S`, real arithmetic when `c` is real.
pub(crate) fn resolvent_times_s(p: &VarianceProfile, c: c64) -> Result<Mat<c64>> {
    let cond = p.spectrum().stability_condition(c);
    if !cond.is_finite() || cond > MAX_CONDITION {
        return Err(Error::Numerical(format!(
            "I - cS is singular to working precision (c = {c}, condition {cond:.3e})"
        )));
    }
    let n = p.n();
    let s = p.entries();
    if c.im == 0.0 {
        let b = Mat::<f64>::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - c.re * s[(i, j)]);
        let rhs = Mat::<f64>::from_fn(n, n, |i, j| c.re * s[(i, j)]);
        let x = b.partial_piv_lu().solve(&rhs);
        return Ok(Mat::from_fn(n, n, |i, j| c64::new(x[(i, j)], 0.0)));
    }
    let one = c64::new(1.0, 0.0);
    let zero = c64::new(0.0, 0.0);
    let b = Mat::<c64>::from_fn(n, n, |i, j| if i == j { one } else { zero } - c * s[(i, j)]);
    let rhs = Mat::<c64>::from_fn(n, n, |i, j| c * s[(i, j)]);
    Ok(b.partial_piv_lu().solve(&rhs))
}

/// `Θ̊^x_ab = Θ_ab - Θ_ax`.
pub fn regularize_theta(theta: &TwoPointKernel, x: usize) -> Result<Mat<c64>> {
    if theta.kind != KernelKind::Theta {
        return Err(Error::Argument("regularization is defined for the Θ kernel".into()));
    }
    let n = theta.n();
    if x >= n {
        return Err(Error::Argument(format!("index {x} out of range for N = {n}")));
    }
    let t = &theta.values;
    Ok(Mat::from_fn(n, n, |a, b| if b == x { c64::new(0.0, 0.0) } else { t[(a, b)] - t[(a, x)] }))
}

fn check_same_characteristic(zs: &SpectralPoint, zt: &SpectralPoint) -> Result<()> {
    let ps = zs.m / zs.m.norm();
    let pt = zt.m / zt.m.norm();
    if (ps - pt).norm() > 1e-7 {
        return Err(Error::Argument(
            "propagator endpoints are not on one characteristic (phases of m differ)".into(),
        ));
    }
    if zs.m.norm() > zt.m.norm() * (1.0 + 1e-12) {
        return Err(Error::Argument("propagator needs s <= t, i.e. |m_s| <= |m_t|".into()));
    }
    Ok(())
}

/// `P_{s,t} = (|m_t|²/|m_s|²)(I - |m_s|² S)(I - |m_t|² S)^{-1}`.
pub fn saturated_propagator(
    p: &VarianceProfile,
    zs: &SpectralPoint,
    zt: &SpectralPoint,
) -> Result<Mat<f64>> {
    check_same_characteristic(zs, zt)?;
    let (as_, at) = (zs.m.norm_sqr(), zt.m.norm_sqr());
    let n = p.n();
    let s = p.entries();
    let right = Mat::<f64>::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - at * s[(i, j)]);
    let left = Mat::<f64>::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - as_ * s[(i, j)]);
    let x = right.partial_piv_lu().solve(&left);
    let r = at / as_;
    Ok(Mat::from_fn(n, n, |i, j| r * x[(i, j)]))
}

/// `Q_{s,t}`: the saturated propagator with `m²` in place of `|m|²`.
pub fn unsaturated_propagator(
    p: &VarianceProfile,
    zs: &SpectralPoint,
    zt: &SpectralPoint,
) -> Result<Mat<c64>> {
    check_same_characteristic(zs, zt)?;
    let (as_, at) = (zs.m * zs.m, zt.m * zt.m);
    let n = p.n();
    let s = p.entries();
    let one = c64::new(1.0, 0.0);
    let zero = c64::new(0.0, 0.0);
    let right = Mat::<c64>::from_fn(n, n, |i, j| if i == j { one } else { zero } - at * s[(i, j)]);
    let left = Mat::<c64>::from_fn(n, n, |i, j| if i == j { one } else { zero } - as_ * s[(i, j)]);
    let x = right.partial_piv_lu().solve(&left);
    let r = at / as_;
    Ok(Mat::from_fn(n, n, |i, j| r * x[(i, j)]))
}
