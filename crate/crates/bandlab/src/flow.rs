//! Characteristic flow of spectral parameters and the Ornstein-Uhlenbeck
//! evolution of samples.

use std::io::Write;
use std::sync::Arc;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::chains::{eigendecompose, empirical_psi, PsiProbe, ResolventCache};
use crate::cplx::c64;
use crate::ensemble::{
    sample_matrix, standardized_entries, trial_seed, EntryDistribution, MatrixSample, MatrixValues, OuStep,
    SymmetryClass, VarianceProfile,
};
use crate::error::{arg, Error, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::kernels::{two_point_kernel, upsilon_build, ControlFamily, KernelKind};
use crate::mterms::{make_special_observable, ChainSpec, SpectralPath};
use crate::semicircle::{stieltjes_m, SpectralPoint};

/// Right-hand side `-z/2 - m(z)` of the characteristic equation.
fn velocity(z: c64) -> Result<c64> {
    Ok(-z * 0.5 - stieltjes_m(z)?)
}

fn rk4_step(z: c64, dt: f64) -> Result<c64> {
    let k1 = velocity(z)?;
    let k2 = velocity(z + k1 * (dt / 2.0))?;
    let k3 = velocity(z + k2 * (dt / 2.0))?;
    let k4 = velocity(z + k3 * dt)?;
    Ok(z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Integrate the characteristic equation forward from `z` over `duration`
/// with RK4 steps no larger than `step`.
pub fn flow_forward(z: c64, duration: f64, step: f64) -> Result<c64> {
    if !(duration >= 0.0 && step > 0.0) {
        return arg("forward flow needs duration >= 0 and step > 0");
    }
    let steps = ((duration / step).ceil() as usize).max(1);
    let dt = duration / steps as f64;
    let mut z = z;
    for _ in 0..steps {
        z = rk4_step(z, dt)?;
    }
    Ok(z)
}

/// Solution of the characteristic equation on `[0, T]`, stored forward in
/// time on a uniform grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<SpectralPoint>,
    /// Time where `η_t = (W/N)^2`, if the trajectory crosses that level.
    pub critical_time: Option<f64>,
    pub w: usize,
    pub n: usize,
}

/// Largest `|z|` a trajectory may reach.
pub const MAX_MODULUS: f64 = 10.0;

/// Integrate backward from `(T, z_T)` to `t = 0` with classical RK4 and a
/// uniform step no larger than `step` (and no larger than `1e-3`).
pub fn solve_characteristic(z_end: c64, t_end: f64, step: f64, w: usize, n: usize) -> Result<Trajectory> {
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return arg(format!("final time must be nonnegative, got {t_end}"));
    }
    if !(step > 0.0) {
        return arg("step must be positive");
    }
    if z_end.im == 0.0 {
        return Err(Error::Domain("terminal point must be off the real axis".into()));
    }
    let h = step.min(1e-3);
    let steps = ((t_end / h).ceil() as usize).max(1);
    let dt = t_end / steps as f64;
    let mut zs = vec![z_end; steps + 1];
    let mut z = z_end;
    for i in (0..steps).rev() {
        z = rk4_step(z, -dt)?;
        if z.norm() > MAX_MODULUS || z.im * z_end.im <= 0.0 || !z.re.is_finite() {
            return Err(Error::Integration(format!(
                "trajectory left the domain at t = {:.4} (z = {z})",
                i as f64 * dt
            )));
        }
        zs[i] = z;
    }
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
    let points = zs.iter().map(|z| SpectralPoint::new(*z, w, n)).collect::<Result<Vec<_>>>()?;
    let mut traj = Trajectory { times, points, critical_time: None, w, n };
    traj.critical_time = traj.find_critical_time()?;
    Ok(traj)
}

impl Trajectory {
    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one point")
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }

    /// Spectral point at an arbitrary time, by one RK4 step from the
    /// nearest grid point.
    pub fn point_at(&self, t: f64) -> Result<SpectralPoint> {
        SpectralPoint::new(self.z_at(t)?, self.w, self.n)
    }

    fn find_critical_time(&self) -> Result<Option<f64>> {
        let target = (self.w as f64 / self.n as f64).powi(2);
        let first = self.points.first().map(|p| p.eta).unwrap_or(0.0);
        let last = self.points.last().map(|p| p.eta).unwrap_or(0.0);
        if !(first >= target && last <= target) {
            return Ok(None);
        }
        let (mut lo, mut hi) = (0.0, self.t_end());
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.z_at(mid)?.im.abs() > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Some(0.5 * (lo + hi)))
    }

    /// CSV with columns `t,Re z,Im z,eta,ell`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "t,Re z,Im z,eta,ell")?;
        for (t, p) in self.times.iter().zip(&self.points) {
            writeln!(out, "{t},{},{},{},{}", p.z.re, p.z.im, p.eta, p.ell)?;
        }
        Ok(())
    }
}

impl SpectralPath for Trajectory {
    fn z_at(&self, t: f64) -> Result<c64> {
        let end = self.t_end();
        if !(t >= -1e-12 && t <= end + 1e-12) {
            return Err(Error::Argument(format!("time {t} outside [0, {end}]")));
        }
        let dt = self.dt();
        if dt == 0.0 {
            return Ok(self.points[0].z);
        }
        let i = ((t / dt).round() as usize).min(self.times.len() - 1);
        let gap = t - self.times[i];
        if gap == 0.0 {
            return Ok(self.points[i].z);
        }
        rk4_step(self.points[i].z, gap)
    }
}

/// Exact OU transition `h -> e^{-dt/2} h + sqrt(1 - e^{-dt}) g` of the
/// standardized matrix, with `g` a fresh Gaussian draw of the same symmetry.
pub fn ou_evolve(s: &MatrixSample, dt: f64, seed: u64) -> Result<MatrixSample> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return arg(format!("OU time step must be nonnegative, got {dt}"));
    }
    let n = s.n();
    let decay = (-dt / 2.0).exp();
    let noise = (-(-dt).exp_m1()).sqrt();
    let g = standardized_entries(n, s.symmetry, EntryDistribution::Gaussian, seed);
    let h = match (&s.standardized, &g) {
        (MatrixValues::Real(h), MatrixValues::Real(g)) => {
            MatrixValues::Real(Mat::from_fn(n, n, |a, b| decay * h[(a, b)] + noise * g[(a, b)]))
        }
        (MatrixValues::Complex(h), MatrixValues::Complex(g)) => {
            MatrixValues::Complex(Mat::from_fn(n, n, |a, b| h[(a, b)] * decay + g[(a, b)] * noise))
        }
        _ => return Err(Error::Numerical("sample and noise have different fields".into())),
    };
    let mut origin = s.origin.clone();
    origin.ou_steps.push(OuStep { dt, seed });
    Ok(MatrixSample::from_standardized(s.profile.clone(), s.symmetry, s.distribution, h, origin))
}

fn max_rel(a: &Mat<c64>, b: &Mat<c64>) -> f64 {
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            diff = diff.max((a[(i, j)] - b[(i, j)]).norm());
            scale = scale.max(b[(i, j)].norm());
        }
    }
    diff / scale.max(f64::MIN_POSITIVE)
}

/// Max-entry relative residual of the central difference of `Θ_t` (or
/// `Ξ_t`) against `(I + Θ_t) Θ_t`.
pub fn check_theta_ode(p: &VarianceProfile, traj: &Trajectory, t: f64, h: f64, kind: KernelKind) -> Result<f64> {
    if !(h > 0.0) {
        return arg("step h must be positive");
    }
    let kernel = |time: f64| -> Result<Mat<c64>> {
        let z = traj.point_at(time)?;
        Ok(two_point_kernel(p, &z, &z, kind)?.values)
    };
    let plus = kernel(t + h)?;
    let minus = kernel(t - h)?;
    let mid = kernel(t)?;
    let n = p.n();
    let fd = Mat::<c64>::from_fn(n, n, |i, j| (plus[(i, j)] - minus[(i, j)]) / (2.0 * h));
    let sq = &mid * &mid;
    let rhs = Mat::<c64>::from_fn(n, n, |i, j| mid[(i, j)] + sq[(i, j)]);
    Ok(max_rel(&fd, &rhs))
}

/// `exp(∫_s^t (I + Θ_r) dr)` with the integral evaluated by composite
/// Simpson's rule on `intervals` (even) subintervals. All `Θ_r` are
/// functions of `S`, so the exponential is taken on its spectrum.
pub fn propagator_by_integration(
    p: &VarianceProfile,
    traj: &Trajectory,
    s: f64,
    t: f64,
    intervals: usize,
) -> Result<Mat<f64>> {
    if intervals == 0 || intervals % 2 != 0 {
        return arg("Simpson's rule needs an even positive number of intervals");
    }
    let spec = p.spectrum();
    let h = (t - s) / intervals as f64;
    let weights: Vec<(f64, f64)> = (0..=intervals)
        .map(|i| {
            let w = if i == 0 || i == intervals {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (s + i as f64 * h, w * h / 3.0)
        })
        .collect();
    let mods: Vec<(f64, f64)> = weights
        .iter()
        .map(|(r, w)| Ok((traj.point_at(*r)?.m.norm_sqr(), *w)))
        .collect::<Result<_>>()?;
    let g = |sigma: f64| -> c64 {
        let integral: f64 = mods.iter().map(|(a, w)| w * (1.0 + a * sigma / (1.0 - a * sigma))).sum();
        c64::new(integral.exp(), 0.0)
    };
    let m = spec.matrix(g);
    let n = p.n();
    Ok(Mat::from_fn(n, n, |i, j| m[(i, j)].re))
}

/// One row of a Ψ trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRow {
    pub t: f64,
    pub re_z: f64,
    pub im_z: f64,
    pub eta: f64,
    pub ell: f64,
    pub psi_av: f64,
    pub psi_iso: f64,
}

pub fn write_flow_csv(rows: &[FlowRow], mut out: impl Write) -> Result<()> {
    writeln!(out, "t,Re z,Im z,eta,ell,psi_av,psi_iso")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{},{},{}", r.t, r.re_z, r.im_z, r.eta, r.ell, r.psi_av, r.psi_iso)?;
    }
    Ok(())
}

/// Parameters of [`flow_psi_trace`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowTraceConfig {
    #[serde(with = "crate::cplx::pair")]
    pub z_final: c64,
    pub t_end: f64,
    /// Number of recorded times after `t = 0`.
    pub records: usize,
    pub samples: usize,
    pub seed: u64,
    pub symmetry: SymmetryClass,
    pub distribution: EntryDistribution,
    /// Chain length; points alternate `z_t, conj(z_t)`.
    pub k: usize,
    /// Lattice sites of the special observables.
    pub sites: Vec<usize>,
    pub kmax: usize,
    pub control: ControlFamily,
    #[serde(default)]
    pub execution: Execution,
}

/// Evolve a batch by the OU flow along the characteristic ending at
/// `z_final` and record the largest `Ψ^av`, `Ψ^iso` of the alternating
/// chain at each recorded time.
pub fn flow_psi_trace(p: &Arc<VarianceProfile>, cfg: &FlowTraceConfig) -> Result<Vec<FlowRow>> {
    if cfg.records == 0 || cfg.samples == 0 || cfg.k == 0 || cfg.sites.len() < cfg.k {
        return arg("flow trace needs records, samples, k >= 1 and at least k sites");
    }
    let traj = solve_characteristic(cfg.z_final, cfg.t_end, 1e-3, p.w(), p.n())?;
    let dt = cfg.t_end / cfg.records as f64;
    let n = p.n();
    let observables = cfg.sites.iter().map(|x| make_special_observable(p, *x)).collect::<Result<Vec<_>>>()?;
    let mut samples: Vec<MatrixSample> = (0..cfg.samples)
        .map(|i| sample_matrix(p, cfg.symmetry, cfg.distribution, trial_seed(cfg.seed, i as u64)))
        .collect();
    let mut rows = Vec::with_capacity(cfg.records + 1);
    for step in 0..=cfg.records {
        let t = step as f64 * dt;
        if step > 0 {
            let base = trial_seed(cfg.seed ^ 0x9e37_79b9_7f4a_7c15, step as u64);
            samples = try_map_indexed(samples.len(), cfg.execution, |i| {
                ou_evolve(&samples[i], dt, trial_seed(base, i as u64))
            })?;
        }
        let caches: Vec<ResolventCache> = try_map_indexed(samples.len(), cfg.execution, |i| eigendecompose(&samples[i]))?;
        let z = traj.point_at(t)?;
        let points: Vec<SpectralPoint> = (0..cfg.k).map(|j| if j % 2 == 0 { z } else { z.conj() }).collect();
        let ups = upsilon_build(n, p.w(), z.eta, cfg.control)?;
        let chain = ChainSpec::new(points.clone(), observables[..cfg.k - 1].to_vec())?
            .with_test(observables[cfg.k - 1].clone())?;
        let psi_av = empirical_psi(&caches, &chain, &ups, cfg.kmax, PsiProbe::Averaged)?.value;
        let a = cfg.sites[0];
        let b = cfg.sites[cfg.sites.len() - 1];
        let mut u = vec![c64::new(0.0, 0.0); n];
        let mut v = vec![c64::new(0.0, 0.0); n];
        u[a] = c64::new(1.0, 0.0);
        v[b] = c64::new(1.0, 0.0);
        let iso_chain = ChainSpec::new(points, observables[..cfg.k - 1].to_vec())?;
        let psi_iso = empirical_psi(&caches, &iso_chain, &ups, cfg.kmax, PsiProbe::Isotropic { u: &u, v: &v })?.value;
        rows.push(FlowRow { t, re_z: z.z.re, im_z: z.z.im, eta: z.eta, ell: z.ell, psi_av, psi_iso });
    }
    Ok(rows)
}
