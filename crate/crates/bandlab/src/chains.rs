//! Resolvent chains of sampled matrices, self-energy actions and the
//! dimensionless control quantities `Ψ`.

use std::sync::Arc;

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::cplx::{self, c64};
use crate::ensemble::{MatrixSample, MatrixValues, SymmetryClass, VarianceProfile};
use crate::error::{arg, Error, Result};
use crate::kernels::{size_function, ControlFunction, SizeFunctionInputs, SizeMode, UpsArg};
use crate::mterms::{m_chain, ChainSpec, DiagObservable};

/// Spectral decomposition `H = U Λ U^†` of one sample.
#[derive(Clone, Debug)]
pub struct ResolventCache {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub vectors: Mat<c64>,
    pub profile: Arc<VarianceProfile>,
    pub symmetry: SymmetryClass,
    pub seed: u64,
}

pub fn eigendecompose(s: &MatrixSample) -> Result<ResolventCache> {
    let n = s.n();
    let (eigenvalues, vectors) = match &s.values {
        MatrixValues::Real(h) => {
            let evd = h
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
            let vals: Vec<f64> = (0..n).map(|i| evd.S()[i]).collect();
            let u = evd.U();
            (vals, Mat::from_fn(n, n, |i, j| cplx::real(u[(i, j)])))
        }
        MatrixValues::Complex(h) => {
            let evd = h
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
            let vals: Vec<f64> = (0..n).map(|i| evd.S()[i].re).collect();
            (vals, evd.U().to_owned())
        }
    };
    if eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("eigendecomposition produced non-finite eigenvalues".into()));
    }
    Ok(ResolventCache {
        eigenvalues,
        vectors,
        profile: s.profile.clone(),
        symmetry: s.symmetry,
        seed: s.origin.seed,
    })
}

/// Ascending eigenvalues without eigenvectors.
pub fn eigenvalues(s: &MatrixSample) -> Result<Vec<f64>> {
    let fail = |e: faer::linalg::evd::EvdError| Error::Numerical(format!("eigenvalue solver failed: {e:?}"));
    let mut vals: Vec<f64> = match &s.values {
        MatrixValues::Real(h) => h.self_adjoint_eigenvalues(Side::Lower).map_err(fail)?,
        MatrixValues::Complex(h) => h.self_adjoint_eigenvalues(Side::Lower).map_err(fail)?,
    };
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite eigenvalues".into()));
    }
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

fn check_z(z: c64) -> Result<()> {
    if z.im == 0.0 {
        return Err(Error::Domain("resolvents need Im z != 0".into()));
    }
    Ok(())
}

impl ResolventCache {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `1 / (λ_i - z)`.
    pub fn resolvent_diag(&self, z: c64) -> Result<Vec<c64>> {
        check_z(z)?;
        Ok(self.eigenvalues.iter().map(|l| (c64::new(*l, 0.0) - z).inv()).collect())
    }

    /// `G(z) = U diag(1/(λ - z)) U^†`.
    pub fn resolvent(&self, z: c64) -> Result<Mat<c64>> {
        let d = self.resolvent_diag(z)?;
        let n = self.n();
        let u = &self.vectors;
        let scaled = Mat::<c64>::from_fn(n, n, |i, j| u[(i, j)] * d[j]);
        Ok(&scaled * u.adjoint())
    }

    /// `U^† v`.
    pub fn to_eigenbasis(&self, v: &[c64]) -> Vec<c64> {
        let n = self.n();
        let u = &self.vectors;
        (0..n).map(|j| (0..n).map(|i| u[(i, j)].conj() * v[i]).sum()).collect()
    }

    /// `U w`.
    pub fn from_eigenbasis(&self, w: &[c64]) -> Vec<c64> {
        let n = self.n();
        let u = &self.vectors;
        let mut out = vec![c64::new(0.0, 0.0); n];
        for (j, wj) in w.iter().enumerate() {
            for (i, o) in out.iter_mut().enumerate() {
                *o += u[(i, j)] * wj;
            }
        }
        out
    }

    /// `G(z) v`.
    pub fn apply_resolvent(&self, z: c64, v: &[c64]) -> Result<Vec<c64>> {
        let d = self.resolvent_diag(z)?;
        let mut w = self.to_eigenbasis(v);
        for (x, di) in w.iter_mut().zip(&d) {
            *x *= di;
        }
        Ok(self.from_eigenbasis(&w))
    }

    /// `U^† A U` for a diagonal observable.
    pub fn transform(&self, a: &DiagObservable) -> Mat<c64> {
        let n = self.n();
        let u = &self.vectors;
        let left = Mat::<c64>::from_fn(n, n, |i, j| u[(j, i)].conj() * a.diag[j]);
        &left * u
    }

    /// Eigenvector `i`, i.e. column `i` of `U`.
    pub fn eigenvector(&self, i: usize) -> Vec<c64> {
        (0..self.n()).map(|a| self.vectors[(a, i)]).collect()
    }

    pub fn reconstruct(&self) -> Mat<c64> {
        let n = self.n();
        let u = &self.vectors;
        let scaled = Mat::<c64>::from_fn(n, n, |i, j| u[(i, j)] * self.eigenvalues[j]);
        &scaled * u.adjoint()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainValueKind {
    Trace,
    Bilinear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainValue {
    #[serde(with = "cplx::pair")]
    pub value: c64,
    pub kind: ChainValueKind,
    pub k: usize,
    /// Whether the deterministic term was subtracted.
    pub centered: bool,
    pub ell_eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<f64>,
}

/// `Tr[G_0 A_0 ... G_{k-1} A_{k-1}]` from observables already in the
/// eigenbasis.
pub fn trace_transformed(cache: &ResolventCache, zs: &[c64], transformed: &[&Mat<c64>]) -> Result<c64> {
    let k = zs.len();
    if k == 0 || transformed.len() != k {
        return arg("trace needs one observable per resolvent");
    }
    let n = cache.n();
    let ds: Vec<Vec<c64>> = zs.iter().map(|z| cache.resolvent_diag(*z)).collect::<Result<_>>()?;
    if k == 1 {
        return Ok((0..n).map(|i| ds[0][i] * transformed[0][(i, i)]).sum());
    }
    let mut x = Mat::<c64>::from_fn(n, n, |i, j| ds[0][i] * transformed[0][(i, j)]);
    for j in 1..k - 1 {
        let next = Mat::<c64>::from_fn(n, n, |a, b| ds[j][a] * transformed[j][(a, b)]);
        x = &x * &next;
    }
    let last = transformed[k - 1];
    let d = &ds[k - 1];
    let mut acc = c64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += x[(i, j)] * d[j] * last[(j, i)];
        }
    }
    Ok(acc)
}

/// `Tr[G_0 A_0 ... G_{k-1} A_{k-1}]`, minus `Tr[M A_{k-1}]` when `centered`.
pub fn chain_trace(cache: &ResolventCache, c: &ChainSpec, centered: bool) -> Result<ChainValue> {
    c.validate()?;
    let test = c
        .test_observable
        .as_ref()
        .ok_or_else(|| Error::Argument("a traced chain needs a test observable".into()))?;
    let zs: Vec<c64> = c.points.iter().map(|p| p.z).collect();
    let mats: Vec<Mat<c64>> = c.observables.iter().chain(std::iter::once(test)).map(|a| cache.transform(a)).collect();
    let refs: Vec<&Mat<c64>> = mats.iter().collect();
    let mut value = trace_transformed(cache, &zs, &refs)?;
    if centered {
        value -= m_chain(&cache.profile, c)?.trace_against(test);
    }
    Ok(ChainValue {
        value,
        kind: ChainValueKind::Trace,
        k: c.k(),
        centered,
        ell_eta: c.points.iter().map(|p| p.ell_eta()).fold(f64::INFINITY, f64::min),
        size: None,
    })
}

/// `G_0 A_0 ... G_{k-1} v` by repeated resolvent matvecs.
pub fn apply_chain(cache: &ResolventCache, c: &ChainSpec, v: &[c64]) -> Result<Vec<c64>> {
    let k = c.k();
    let mut w = cache.apply_resolvent(c.points[k - 1].z, v)?;
    for j in (0..k - 1).rev() {
        for (x, a) in w.iter_mut().zip(&c.observables[j].diag) {
            *x *= a;
        }
        w = cache.apply_resolvent(c.points[j].z, &w)?;
    }
    Ok(w)
}

/// `<u, G_0 A_0 ... G_{k-1} v>` (conjugate-linear in `u`), minus
/// `<u, M v>` when `centered`.
pub fn chain_bilinear(
    cache: &ResolventCache,
    c: &ChainSpec,
    u: &[c64],
    v: &[c64],
    centered: bool,
) -> Result<ChainValue> {
    c.validate()?;
    let n = cache.n();
    if u.len() != n || v.len() != n {
        return arg(format!("test vectors must have length N = {n}"));
    }
    let w = apply_chain(cache, c, v)?;
    let mut value: c64 = u.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
    if centered {
        let m = m_chain(&cache.profile, c)?;
        value -= u.iter().zip(&m.diag).zip(v).map(|((a, mm), b)| a.conj() * mm * b).sum::<c64>();
    }
    Ok(ChainValue {
        value,
        kind: ChainValueKind::Bilinear,
        k: c.k(),
        centered,
        ell_eta: c.points.iter().map(|p| p.ell_eta()).fold(f64::INFINITY, f64::min),
        size: None,
    })
}

/// `E[H R H]` for the given symmetry class: `δ_ab Tr[S^a R]`, plus
/// `S_ab R_ba` off the diagonal in the real class.
pub fn self_energy_apply(p: &VarianceProfile, r: &Mat<c64>, sym: SymmetryClass) -> Result<Mat<c64>> {
    let n = p.n();
    if r.nrows() != n || r.ncols() != n {
        return arg(format!("R must be {n} x {n}"));
    }
    let diag: Vec<c64> = (0..n).map(|a| r[(a, a)]).collect();
    let s_diag = p.apply_complex(&diag);
    Ok(Mat::from_fn(n, n, |a, b| {
        let base = if a == b { s_diag[a] } else { c64::new(0.0, 0.0) };
        match sym {
            SymmetryClass::ComplexHermitian => base,
            SymmetryClass::RealSymmetric if a != b => base + r[(b, a)] * p.get(a, b),
            SymmetryClass::RealSymmetric => base,
        }
    }))
}

/// `(α_k, β_k)` for maximal even length `kmax`.
pub fn loss_exponents(k: usize, kmax: usize) -> Result<(f64, f64)> {
    if kmax == 0 || kmax % 2 != 0 {
        return arg(format!("maximal chain length must be even and positive, got {kmax}"));
    }
    if k == 0 || k > kmax {
        return arg(format!("chain length {k} outside 1..={kmax}"));
    }
    let alpha = |j: usize| -> f64 {
        if j <= kmax / 2 {
            0.0
        } else {
            0.5 * (2.0 * j as f64 / kmax as f64 - 1.0).sqrt()
        }
    };
    let beta = if k < kmax { alpha(k + 1) } else { 0.5 + alpha(kmax / 2 + 1) };
    Ok((alpha(k), beta))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPsi {
    pub kind: SizeMode,
    pub k: usize,
    pub value: f64,
    /// Loss exponent applied to `ℓη`.
    pub exponent: f64,
    pub samples: usize,
}

/// What `Ψ` is measured on.
#[derive(Clone, Copy, Debug)]
pub enum PsiProbe<'a> {
    /// `Tr[(G - M) A_k]` with the chain's test observable.
    Averaged,
    /// `<u, (G - M) v>`.
    Isotropic { u: &'a [c64], v: &'a [c64] },
}

/// Largest `Ψ` of one chain over a batch of samples.
pub fn empirical_psi(
    caches: &[ResolventCache],
    c: &ChainSpec,
    upsilon: &ControlFunction,
    kmax: usize,
    probe: PsiProbe<'_>,
) -> Result<EmpiricalPsi> {
    c.validate()?;
    let k = c.k();
    let (alpha, beta) = loss_exponents(k, kmax)?;
    let le = upsilon.ell_eta();
    let (kind, exponent, size) = match probe {
        PsiProbe::Averaged => {
            let test = c
                .test_observable
                .as_ref()
                .ok_or_else(|| Error::Argument("averaged Ψ needs a test observable".into()))?;
            let args: Vec<UpsArg> = c.observables.iter().chain(std::iter::once(test)).map(UpsArg::Observable).collect();
            (SizeMode::Av, beta, size_function(&SizeFunctionInputs::av(upsilon, args), SizeMode::Av)?)
        }
        PsiProbe::Isotropic { u, v } => {
            let mut args = vec![UpsArg::Vector(u)];
            args.extend(c.observables.iter().map(UpsArg::Observable));
            args.push(UpsArg::Vector(v));
            (SizeMode::Iso, alpha, size_function(&SizeFunctionInputs::iso(upsilon, args), SizeMode::Iso)?)
        }
    };
    let denom = le.powf(exponent) * size;
    let mut value = 0.0f64;
    for cache in caches {
        let fluct = match probe {
            PsiProbe::Averaged => chain_trace(cache, c, true)?.value,
            PsiProbe::Isotropic { u, v } => chain_bilinear(cache, c, u, v, true)?.value,
        };
        value = value.max(fluct.norm() / denom);
    }
    Ok(EmpiricalPsi { kind, k, value, exponent, samples: caches.len() })
}
