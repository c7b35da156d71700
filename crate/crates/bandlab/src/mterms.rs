//! Deterministic approximations `M_{[j,k]}` of resolvent chains with
//! diagonal observables.
//!
//! Every quantity here is diagonal, so observables and M-terms are stored as
//! their diagonals. Chains use 0-based positions: points `z_0..z_{k-1}` and
//! observables `A_0..A_{k-2}`, with `A_j` sitting between `z_j` and
//! `z_{j+1}`. The optional test observable closes an averaged chain.

use serde::{Deserialize, Serialize};

use crate::cplx::{self, c64};
use crate::ensemble::VarianceProfile;
use crate::error::{arg, Error, Result};
use crate::kernels::{size_function, ControlFunction, SizeFunctionInputs, SizeMode, UpsArg, MAX_CONDITION};
use crate::semicircle::SpectralPoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tag", content = "x", rename_all = "snake_case")]
pub enum ObservableTag {
    /// Row `x` of `S` on the diagonal.
    Special(usize),
    /// `S^x - I/N`.
    TracelessSpecial(usize),
    Identity,
    Traceless,
    General,
}

impl ObservableTag {
    pub fn is_traceless(self) -> bool {
        matches!(self, ObservableTag::TracelessSpecial(_) | ObservableTag::Traceless)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagObservable {
    #[serde(with = "cplx::pairs")]
    pub diag: Vec<c64>,
    pub tag: ObservableTag,
    /// Minimizer of the observable norm program, when computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Vec<f64>>,
}

impl DiagObservable {
    pub fn identity(n: usize) -> Self {
        Self { diag: vec![c64::new(1.0, 0.0); n], tag: ObservableTag::Identity, certificate: None }
    }

    pub fn general(diag: Vec<c64>) -> Self {
        Self { diag, tag: ObservableTag::General, certificate: None }
    }

    pub fn from_real(diag: &[f64]) -> Self {
        Self::general(diag.iter().map(|v| cplx::real(*v)).collect())
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn trace(&self) -> c64 {
        self.diag.iter().sum()
    }

    /// Attach the norm certificate (see [`crate::kernels::triple_norm`]).
    pub fn with_certificate(mut self, certificate: Vec<f64>) -> Self {
        self.certificate = Some(certificate);
        self
    }

    pub fn traceless_part(&self) -> Self {
        traceless_part(self)
    }
}

/// `S^x`: the diagonal matrix with row `x` of `S`, certified by `e_x`.
pub fn make_special_observable(p: &VarianceProfile, x: usize) -> Result<DiagObservable> {
    let n = p.n();
    if x >= n {
        return arg(format!("index {x} out of range for N = {n}"));
    }
    let diag = p.row(x).into_iter().map(cplx::real).collect();
    let mut e = vec![0.0; n];
    e[x] = 1.0;
    Ok(DiagObservable { diag, tag: ObservableTag::Special(x), certificate: Some(e) })
}

/// `A - (Tr A / N) I`.
pub fn traceless_part(a: &DiagObservable) -> DiagObservable {
    if a.tag.is_traceless() {
        return a.clone();
    }
    let n = a.n() as f64;
    let mean = a.trace() / n;
    let diag = a.diag.iter().map(|v| v - mean).collect();
    let tag = match a.tag {
        ObservableTag::Special(x) => ObservableTag::TracelessSpecial(x),
        _ => ObservableTag::Traceless,
    };
    DiagObservable { diag, tag, certificate: None }
}

/// Spectral parameters and observables of a chain `G_0 A_0 G_1 ... G_{k-1}`,
/// optionally closed by a test observable `A_{k-1}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainSpec {
    pub points: Vec<SpectralPoint>,
    pub observables: Vec<DiagObservable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_observable: Option<DiagObservable>,
    /// Largest allowed ratio between the imaginary parts of two points.
    #[serde(default = "default_eta_ratio")]
    pub eta_ratio_bound: f64,
}

fn default_eta_ratio() -> f64 {
    100.0
}

impl ChainSpec {
    pub fn new(points: Vec<SpectralPoint>, observables: Vec<DiagObservable>) -> Result<Self> {
        let c = Self { points, observables, test_observable: None, eta_ratio_bound: default_eta_ratio() };
        c.validate()?;
        Ok(c)
    }

    pub fn with_test(mut self, a: DiagObservable) -> Result<Self> {
        self.test_observable = Some(a);
        self.validate()?;
        Ok(self)
    }

    pub fn k(&self) -> usize {
        self.points.len()
    }

    pub fn min_eta(&self) -> f64 {
        self.points.iter().map(|p| p.eta).fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.points.len();
        if k == 0 {
            return arg("a chain needs at least one spectral point");
        }
        if self.observables.len() + 1 != k {
            return arg(format!("{k} points need {} observables, got {}", k - 1, self.observables.len()));
        }
        let n = self.observables.first().or(self.test_observable.as_ref()).map(|a| a.n());
        if let Some(n) = n {
            if self.observables.iter().chain(&self.test_observable).any(|a| a.n() != n) {
                return arg("observables of one chain must have equal length");
            }
        }
        let lo = self.min_eta();
        let hi = self.points.iter().map(|p| p.eta).fold(0.0, f64::max);
        if hi > self.eta_ratio_bound * lo {
            return arg(format!(
                "imaginary parts {lo:.3e}..{hi:.3e} differ by more than {}",
                self.eta_ratio_bound
            ));
        }
        Ok(())
    }

    fn ms(&self) -> Vec<c64> {
        self.points.iter().map(|p| p.m).collect()
    }

    fn diags(&self) -> Vec<&[c64]> {
        self.observables.iter().map(|a| a.diag.as_slice()).collect()
    }

    fn test(&self) -> Result<&DiagObservable> {
        self.test_observable.as_ref().ok_or_else(|| Error::Argument("chain has no test observable".into()))
    }
}

/// Diagonal of `M_{[1,k]}` for a chain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MTerm {
    #[serde(with = "cplx::pairs")]
    pub diag: Vec<c64>,
    pub points: Vec<SpectralPoint>,
}

impl MTerm {
    /// `Tr[M A]`.
    pub fn trace_against(&self, a: &DiagObservable) -> c64 {
        self.diag.iter().zip(&a.diag).map(|(m, v)| m * v).sum()
    }
}

/// All interval terms `M̃_{[j,k]}` of one chain.
#[derive(Clone, Debug)]
pub struct MTable {
    ms: Vec<c64>,
    reduced: Vec<Vec<Vec<c64>>>,
}

impl MTable {
    pub fn k(&self) -> usize {
        self.ms.len()
    }

    /// `M̃_{[j,k]}` without the `Π m` prefactor; `j <= k`.
    pub fn reduced(&self, j: usize, k: usize) -> &[c64] {
        &self.reduced[j][k - j]
    }

    /// `M_{[j,k]} = M̃_{[j,k]} Π_{i=j}^k m_i`.
    pub fn get(&self, j: usize, k: usize) -> Vec<c64> {
        let pref: c64 = self.ms[j..=k].iter().product();
        self.reduced(j, k).iter().map(|v| v * pref).collect()
    }
}

/// Build the interval table for spectral values `ms` and observable
/// diagonals `obs` (`obs.len() + 1 == ms.len()`).
pub fn m_table_raw(p: &VarianceProfile, ms: &[c64], obs: &[&[c64]]) -> Result<MTable> {
    let k = ms.len();
    let n = p.n();
    if k == 0 || obs.len() + 1 != k {
        return arg(format!("{k} spectral values need {} observables, got {}", k.saturating_sub(1), obs.len()));
    }
    if obs.iter().any(|a| a.len() != n) {
        return arg(format!("observables must have length N = {n}"));
    }
    let spectrum = p.spectrum();
    let one = c64::new(1.0, 0.0);
    let mut reduced: Vec<Vec<Vec<c64>>> = (0..k).map(|j| vec![Vec::new(); k - j]).collect();
    for row in reduced.iter_mut() {
        row[0] = vec![one; n];
    }
    // Self-energy of each interval, filled as soon as the interval is known.
    let mut selfe: Vec<Vec<Vec<c64>>> = (0..k).map(|j| vec![Vec::new(); k - j]).collect();
    for len in 1..k {
        for j in 0..k - len {
            let e = j + len;
            let w = ms[j] * ms[e];
            let cond = spectrum.stability_condition(w);
            if !cond.is_finite() || cond > MAX_CONDITION {
                return Err(Error::Numerical(format!(
                    "stability operator for interval ({j}, {e}) has condition {cond:.3e}"
                )));
            }
            let mut rhs: Vec<c64> = obs[j].iter().zip(&reduced[j + 1][e - j - 1]).map(|(a, m)| a * m).collect();
            for i in j + 1..e {
                let f = ms[j] * ms[i];
                let s_ji = &selfe[j][i - j];
                let m_ie = &reduced[i][e - i];
                for q in 0..n {
                    rhs[q] += f * s_ji[q] * m_ie[q];
                }
            }
            let solved = spectrum.solve_stability(w, &rhs);
            selfe[j][len] = p.apply_complex(&solved);
            reduced[j][len] = solved;
        }
    }
    Ok(MTable { ms: ms.to_vec(), reduced })
}

/// `M_{[0,k-1]}` for spectral values and observable diagonals.
pub fn m_term_raw(p: &VarianceProfile, ms: &[c64], obs: &[&[c64]]) -> Result<Vec<c64>> {
    let t = m_table_raw(p, ms, obs)?;
    Ok(t.get(0, ms.len() - 1))
}

fn reduced_raw(p: &VarianceProfile, ms: &[c64], obs: &[&[c64]]) -> Result<Vec<c64>> {
    let t = m_table_raw(p, ms, obs)?;
    Ok(t.reduced(0, ms.len() - 1).to_vec())
}

pub fn m_table(p: &VarianceProfile, c: &ChainSpec) -> Result<MTable> {
    c.validate()?;
    m_table_raw(p, &c.ms(), &c.diags())
}

pub fn m_chain(p: &VarianceProfile, c: &ChainSpec) -> Result<MTerm> {
    let t = m_table(p, c)?;
    Ok(MTerm { diag: t.get(0, c.k() - 1), points: c.points.clone() })
}

fn dot(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn abs_dot(a: &[c64], b: &[c64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.norm() * y.norm()).sum()
}

/// Relative gap between `Tr[M̃(z_0, A_0, .., z_{k-1}) A_{k-1}]` and
/// `Tr[A_{k-2} M̃(z_{k-1}, A_{k-1}, z_0, A_0, .., z_{k-2})]`, scaled by the
/// absolute sum of the left-hand trace.
pub fn check_cyclicity(p: &VarianceProfile, c: &ChainSpec) -> Result<f64> {
    c.validate()?;
    let k = c.k();
    if k < 2 {
        return arg("cyclicity needs k >= 2");
    }
    let test = c.test()?;
    let ms = c.ms();
    let obs = c.diags();
    let left_m = reduced_raw(p, &ms, &obs)?;
    let lhs = dot(&left_m, &test.diag);
    let mut rot_ms = vec![ms[k - 1]];
    rot_ms.extend_from_slice(&ms[..k - 1]);
    let mut rot_obs: Vec<&[c64]> = vec![&test.diag];
    rot_obs.extend_from_slice(&obs[..k - 2]);
    let right_m = reduced_raw(p, &rot_ms, &rot_obs)?;
    let rhs = dot(obs[k - 2], &right_m);
    let scale = abs_dot(&left_m, &test.diag).max(f64::MIN_POSITIVE);
    Ok((lhs - rhs).norm() / scale)
}

fn max_abs(v: &[c64]) -> f64 {
    v.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

fn max_diff(a: &[c64], b: &[c64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Relative residual of the divided-difference identity at observable
/// position `j`, which must hold the identity.
pub fn check_divided_difference(p: &VarianceProfile, c: &ChainSpec, j: usize) -> Result<f64> {
    c.validate()?;
    let k = c.k();
    if k < 2 || j + 1 >= k {
        return arg(format!("position {j} is not an observable slot of a chain with k = {k}"));
    }
    if c.observables[j].diag.iter().any(|v| *v != c64::new(1.0, 0.0)) {
        return arg(format!("observable {j} must be the identity"));
    }
    let (zj, zj1) = (c.points[j].z, c.points[j + 1].z);
    if (zj - zj1).norm() < 1e-8 {
        return Err(Error::Domain(format!("|z_j - z_j+1| = {:.3e} is below 1e-8", (zj - zj1).norm())));
    }
    let ms = c.ms();
    let obs = c.diags();
    let lhs = m_term_raw(p, &ms, &obs)?;
    let drop = |point: usize| -> Result<Vec<c64>> {
        let ms2: Vec<c64> = ms.iter().enumerate().filter(|(i, _)| *i != point).map(|(_, m)| *m).collect();
        let obs2: Vec<&[c64]> = obs.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, a)| *a).collect();
        m_term_raw(p, &ms2, &obs2)
    };
    let keep_j = drop(j + 1)?;
    let keep_j1 = drop(j)?;
    let inv = (zj - zj1).inv();
    let rhs: Vec<c64> = keep_j.iter().zip(&keep_j1).map(|(a, b)| (a - b) * inv).collect();
    Ok(max_diff(&lhs, &rhs) / max_abs(&lhs).max(f64::MIN_POSITIVE))
}

/// A curve `t -> z_t` of spectral parameters.
pub trait SpectralPath: Sync {
    fn z_at(&self, t: f64) -> Result<c64>;
}

/// The complex conjugate of a path.
pub struct Conjugate<'a, P: SpectralPath + ?Sized>(pub &'a P);

impl<P: SpectralPath + ?Sized> SpectralPath for Conjugate<'_, P> {
    fn z_at(&self, t: f64) -> Result<c64> {
        Ok(self.0.z_at(t)?.conj())
    }
}

fn ms_at(paths: &[&dyn SpectralPath], t: f64) -> Result<Vec<c64>> {
    paths.iter().map(|p| crate::semicircle::stieltjes_m(p.z_at(t)?)).collect()
}

/// Right-hand side of the time-derivative identity for `M_{[0,k-1]}` with
/// the given spectral values.
pub fn dm_dt_rhs(p: &VarianceProfile, ms: &[c64], obs: &[&[c64]]) -> Result<Vec<c64>> {
    let k = ms.len();
    let table = m_table_raw(p, ms, obs)?;
    let full = table.get(0, k - 1);
    let mut out: Vec<c64> = full.iter().map(|v| v * (k as f64 / 2.0)).collect();
    for i in 0..k {
        for j in i + 1..k {
            // Σ_q (M_{[i,j]})_qq S^q is diag(S M_{[i,j]}); insert it in place
            // of the observables consumed by the interval.
            let b = p.apply_complex(&table.get(i, j));
            let mut ms2: Vec<c64> = ms[..=i].to_vec();
            ms2.extend_from_slice(&ms[j..]);
            let mut obs2: Vec<&[c64]> = obs[..i].to_vec();
            obs2.push(&b);
            obs2.extend_from_slice(&obs[j..]);
            let term = m_term_raw(p, &ms2, &obs2)?;
            for (o, v) in out.iter_mut().zip(term) {
                *o += v;
            }
        }
    }
    Ok(out)
}

/// Max relative residual between the central difference of `M_{[0,k-1]}`
/// along the paths and the time-derivative identity at `t`.
pub fn check_dm_dt(
    p: &VarianceProfile,
    paths: &[&dyn SpectralPath],
    observables: &[DiagObservable],
    t: f64,
    h: f64,
) -> Result<f64> {
    if paths.is_empty() || observables.len() + 1 != paths.len() {
        return arg("check_dm_dt needs k paths and k - 1 observables");
    }
    if !(h > 0.0) {
        return arg("step h must be positive");
    }
    let obs: Vec<&[c64]> = observables.iter().map(|a| a.diag.as_slice()).collect();
    let plus = m_term_raw(p, &ms_at(paths, t + h)?, &obs)?;
    let minus = m_term_raw(p, &ms_at(paths, t - h)?, &obs)?;
    let rhs = dm_dt_rhs(p, &ms_at(paths, t)?, &obs)?;
    let fd: Vec<c64> = plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect();
    Ok(max_diff(&fd, &rhs) / max_abs(&rhs).max(f64::MIN_POSITIVE))
}

/// Largest ratio of an M-term to its predicted size, for one chain length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MBoundFit {
    pub k: usize,
    /// `av`, `iso` or `traceless_av`.
    pub bound: String,
    /// Number of traceless observables (only for `traceless_av`).
    pub traceless: usize,
    pub constant: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MBoundReport {
    pub n: usize,
    pub w: usize,
    pub eta: f64,
    pub fits: Vec<MBoundFit>,
}

impl MBoundReport {
    pub fn get(&self, k: usize, bound: &str, traceless: usize) -> Option<&MBoundFit> {
        self.fits.iter().find(|f| f.k == k && f.bound == bound && f.traceless == traceless)
    }
}

/// Fit constants of the M-size bounds over index tuples.
///
/// `points` are the spectral parameters of the longest chain; a chain of
/// length `k` uses the first `k` of them and the first `k` entries of each
/// tuple (`x_0..x_{k-2}` as observables, `x_{k-1}` as test observable).
/// The size functions use `upsilon`, built at the smallest `η` of the
/// points. When the points lie in the delocalized regime the traceless
/// bound is fitted for every count `n` of traceless observables: the test
/// observable and the first `n - 1` chain observables.
pub fn check_m_size_bounds(
    p: &VarianceProfile,
    upsilon: &ControlFunction,
    points: &[SpectralPoint],
    tuples: &[Vec<usize>],
    iso_sites: &[usize],
) -> Result<MBoundReport> {
    let n = p.n();
    let kmax = points.len();
    if kmax == 0 || tuples.iter().any(|t| t.len() < kmax) {
        return arg("every tuple needs one index per spectral point");
    }
    let eta = points.iter().map(|z| z.eta).fold(f64::INFINITY, f64::min);
    let le = upsilon.ell_eta();
    let ms: Vec<c64> = points.iter().map(|z| z.m).collect();
    let specials: Vec<Vec<c64>> = (0..n).map(|x| p.row(x).into_iter().map(cplx::real).collect()).collect();
    let inv_n = 1.0 / n as f64;
    let delocalized = eta <= (p.w() as f64 / n as f64).powi(2);
    let mut fits = Vec::new();
    for k in 1..=kmax {
        let mut av = 0.0f64;
        let mut iso = 0.0f64;
        let mut traceless = if delocalized { vec![0.0f64; k + 1] } else { Vec::new() };
        for tuple in tuples {
            let xs = &tuple[..k];
            let obs: Vec<&[c64]> = xs[..k - 1].iter().map(|x| specials[*x].as_slice()).collect();
            let m = m_term_raw(p, &ms[..k], &obs)?;
            let tr = dot(&m, &specials[xs[k - 1]]).norm();
            let args: Vec<UpsArg> = xs.iter().map(|x| UpsArg::Index(*x)).collect();
            let s_av = size_function(&SizeFunctionInputs::av(upsilon, args), SizeMode::Av)?;
            av = av.max(tr / (le * s_av));
            for &a in iso_sites {
                let mut args = vec![UpsArg::Index(a)];
                args.extend(xs[..k - 1].iter().map(|x| UpsArg::Index(*x)));
                args.push(UpsArg::Index(a));
                let s_iso = size_function(&SizeFunctionInputs::iso(upsilon, args), SizeMode::Iso)?;
                iso = iso.max(m[a].norm() / (le.sqrt() * s_iso));
            }
            if delocalized {
                for (count, best) in traceless.iter_mut().enumerate() {
                    // `count` traceless: the test observable and the first
                    // `count - 1` chain observables.
                    let shifted: Vec<Vec<c64>> = xs
                        .iter()
                        .enumerate()
                        .map(|(i, x)| {
                            let tl = if i == k - 1 { count >= 1 } else { i + 1 < count };
                            specials[*x].iter().map(|v| if tl { v - inv_n } else { *v }).collect()
                        })
                        .collect();
                    let obs: Vec<&[c64]> = shifted[..k - 1].iter().map(|v| v.as_slice()).collect();
                    let m = m_term_raw(p, &ms[..k], &obs)?;
                    let tr = dot(&m, &shifted[k - 1]).norm();
                    let bound = (n as f64 * eta).powi(-(k as i32 - 1))
                        * ((n * n) as f64 * eta / (p.w() * p.w()) as f64).powi(count.div_ceil(2) as i32);
                    *best = best.max(tr / bound);
                }
            }
        }
        fits.push(MBoundFit { k, bound: "av".into(), traceless: 0, constant: av, samples: tuples.len() });
        fits.push(MBoundFit {
            k,
            bound: "iso".into(),
            traceless: 0,
            constant: iso,
            samples: tuples.len() * iso_sites.len(),
        });
        for (count, c) in traceless.into_iter().enumerate() {
            fits.push(MBoundFit {
                k,
                bound: "traceless_av".into(),
                traceless: count,
                constant: c,
                samples: tuples.len(),
            });
        }
    }
    Ok(MBoundReport { n, w: p.w(), eta, fits })
}

/// Exponent `C` making `constants[i] / (ln N_i)^C` flattest across sizes,
/// from a least-squares fit of `ln constant` against `ln ln N`; never
/// negative.
pub fn fit_log_power(sizes: &[usize], constants: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = sizes
        .iter()
        .zip(constants)
        .filter(|(n, c)| **n > 2 && **c > 0.0)
        .map(|(n, c)| ((*n as f64).ln().ln(), c.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    crate::stats::slope(&pts).max(0.0)
}
