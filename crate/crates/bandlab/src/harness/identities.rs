use std::fs;
use std::sync::Arc;

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::report::{Relation, Report};
use super::{run_global_law, ExperimentConfig};
use crate::chains::eigendecompose;
use crate::cplx::{self, c64};
use crate::ensemble::{sample_matrix, trial_seed, VarianceProfile};
use crate::error::{Error, Result};
use crate::flow::{check_theta_ode, solve_characteristic, Trajectory};
use crate::kernels::{saturated_propagator, two_point_kernel, upsilon_build, KernelKind};
use crate::mterms::{
    check_cyclicity, check_divided_difference, check_dm_dt, check_m_size_bounds, m_chain, make_special_observable,
    ChainSpec, Conjugate, DiagObservable, MBoundReport, SpectralPath,
};
use crate::semicircle::SpectralPoint;

const CHAIN_SALT: u64 = 0x6368_6169_6e00_0000;
const LONGEST: usize = 5;

fn rel(a: c64, b: c64) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn trajectory(cfg: &ExperimentConfig, p: &VarianceProfile, end: &SpectralPoint) -> Result<Trajectory> {
    solve_characteristic(end.z, cfg.flow.t_end, cfg.flow.step, p.w(), p.n())
}

#[derive(Serialize)]
struct ChainRecord {
    chain: ChainSpec,
    #[serde(with = "cplx::pairs")]
    m_term: Vec<c64>,
}

/// Exact identities of the deterministic objects: the self-consistent
/// equation, kernel sum rules and norm, the Ward identity of a sample,
/// cyclicity and divided differences of M-terms up to length five, and
/// the composition laws of the propagator.
pub fn run_identities(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let p = Arc::new(cfg.profile.build()?);
    let (n, w) = (p.n(), p.w());
    let points = cfg.points(w, n)?;
    let mut report = Report::new("mcheck", cfg);
    let mg = &cfg.margins;
    let one = c64::new(1.0, 0.0);

    let dyson = points
        .iter()
        .flat_map(|z| [*z, z.conj()])
        .map(|z| (z.m + (z.z + z.m).inv()).norm())
        .fold(0.0, f64::max);
    report.check("dyson", dyson, Relation::AtMost, mg.dyson, None);

    let (mut sum_rule, mut norm_identity) = (0.0f64, 0.0f64);
    for (i, z1) in points.iter().enumerate() {
        for z2 in &points[i..] {
            for kind in [KernelKind::Theta, KernelKind::Xi] {
                let k = two_point_kernel(&p, z1, z2, kind)?;
                let c = k.coupling();
                let target = c / (one - c);
                sum_rule = k.column_sums().into_iter().map(|s| rel(s, target)).fold(sum_rule, f64::max);
            }
        }
        let theta = two_point_kernel(&p, z1, z1, KernelKind::Theta)?;
        let re = Mat::<f64>::from_fn(n, n, |a, b| theta.get(a, b).re);
        let eig = re
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Numerical(format!("kernel spectrum: {e:?}")))?;
        let top = eig.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let target = z1.m.im / z1.eta;
        norm_identity = norm_identity.max((top - target).abs() / target);
    }
    report.check("sum_rule", sum_rule, Relation::AtMost, mg.sum_rule, None);
    report.check("norm_identity", norm_identity, Relation::AtMost, mg.norm_identity, None);

    let cache = eigendecompose(&sample_matrix(&p, cfg.symmetry, cfg.distribution, trial_seed(cfg.seed, 0)))?;
    let mut ward = 0.0f64;
    for z in &points {
        let g = cache.resolvent(z.z)?;
        for a in 0..n {
            let lhs: f64 = (0..n).map(|b| g[(a, b)].norm_sqr()).sum();
            let rhs = g[(a, a)].im.abs() / z.eta;
            ward = ward.max((lhs - rhs).abs() / rhs);
        }
    }
    report.check("ward", ward, Relation::AtMost, mg.ward, None);

    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(cfg.seed ^ CHAIN_SALT, 0));
    let special = |rng: &mut ChaCha8Rng| make_special_observable(&p, rng.random_range(0..n));
    let (mut cyc, mut dd) = (0.0f64, 0.0f64);
    let mut records = Vec::new();
    for k in 2..=LONGEST {
        for rep in 0..3 {
            let pts: Vec<SpectralPoint> = (0..k)
                .map(|j| {
                    let z = points[(j + rep) % points.len()];
                    if j % 2 == 0 { z } else { z.conj() }
                })
                .collect();
            let obs = (0..k - 1).map(|_| special(&mut rng)).collect::<Result<Vec<_>>>()?;
            let chain = ChainSpec::new(pts, obs)?.with_test(special(&mut rng)?)?;
            cyc = cyc.max(check_cyclicity(&p, &chain)?);
            if rep == 0 {
                records.push(ChainRecord { m_term: m_chain(&p, &chain)?.diag, chain });
            }

            let base = points[rep % points.len()];
            let shifted: Vec<SpectralPoint> = (0..k)
                .map(|j| SpectralPoint::new(base.z + c64::new(0.07 * j as f64, 0.0), w, n))
                .collect::<Result<_>>()?;
            let slot = rep % (k - 1);
            let mut obs = (0..k - 1).map(|_| special(&mut rng)).collect::<Result<Vec<_>>>()?;
            obs[slot] = DiagObservable::identity(n);
            let chain = ChainSpec::new(shifted, obs)?;
            dd = dd.max(check_divided_difference(&p, &chain, slot)?);
        }
    }
    report.check("cyclicity", cyc, Relation::AtMost, mg.cyclicity, None);
    report.check("divided_difference", dd, Relation::AtMost, mg.divided_difference, None);

    let traj = trajectory(cfg, &p, &points[0])?;
    let t_end = traj.t_end();
    let zs = traj.point_at(0.2 * t_end)?;
    let zr = traj.point_at(0.6 * t_end)?;
    let zt = traj.point_at(t_end)?;
    let pst = saturated_propagator(&p, &zs, &zt)?;
    let comp = &saturated_propagator(&p, &zs, &zr)? * &saturated_propagator(&p, &zr, &zt)?;
    let scale = (0..n).map(|i| (0..n).map(|j| pst[(i, j)].abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
    let mut composition = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            composition = composition.max((comp[(i, j)] - pst[(i, j)]).abs() / scale);
        }
    }
    report.check("propagator_composition", composition, Relation::AtMost, mg.propagator, None);
    let ts = two_point_kernel(&p, &zs, &zs, KernelKind::Theta)?;
    let tt = two_point_kernel(&p, &zt, &zt, KernelKind::Theta)?;
    let ts_re = Mat::<f64>::from_fn(n, n, |i, j| ts.get(i, j).re);
    let moved = &pst * &ts_re;
    let peak = (0..n).map(|i| tt.get(i, i).re).fold(0.0, f64::max);
    let mut transport = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            transport = transport.max((moved[(i, j)] - tt.get(i, j).re).abs() / peak);
        }
    }
    report.check("theta_transport", transport, Relation::AtMost, mg.propagator, None);

    if let Some(path) = cfg.artifact("chains.json")? {
        fs::write(&path, serde_json::to_string_pretty(&records)? + "\n")?;
        report.artifacts.push(path);
    }
    Ok(report)
}

/// Convergence order of the central differences of `M` and `Θ`, `Ξ` along
/// the characteristic through the first grid point: halving the step must
/// divide the residual by the configured ratio.
pub fn run_order_checks(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let p = Arc::new(cfg.profile.build()?);
    let (n, w) = (p.n(), p.w());
    let points = cfg.points(w, n)?;
    let traj = trajectory(cfg, &p, &points[0])?;
    let t = 0.5 * traj.t_end();
    let h = (0.02f64).min(0.2 * t);
    let mut report = Report::new("mcheck", cfg);
    let within = Relation::Within { tolerance: cfg.margins.order_tolerance };
    let target = cfg.margins.order_ratio;
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(cfg.seed ^ CHAIN_SALT, 1));
    let conj = Conjugate(&traj);
    let mut lengths: Vec<usize> = cfg.chain_lengths.iter().copied().filter(|k| *k <= 3).collect();
    lengths.sort_unstable();
    lengths.dedup();
    for k in lengths {
        let paths: Vec<&dyn SpectralPath> = (0..k).map(|j| if j % 2 == 0 { &traj as &dyn SpectralPath } else { &conj }).collect();
        let obs = (0..k - 1)
            .map(|_| make_special_observable(&p, rng.random_range(0..n)))
            .collect::<Result<Vec<_>>>()?;
        let coarse = check_dm_dt(&p, &paths, &obs, t, h)?;
        let fine = check_dm_dt(&p, &paths, &obs, t, h / 2.0)?;
        report.check(format!("dm_dt_order_k{k}"), coarse / fine, within, target, None);
        report.observe(format!("dm_dt_residual_k{k}"), fine);
    }
    for (name, kind) in [("theta", KernelKind::Theta), ("xi", KernelKind::Xi)] {
        let coarse = check_theta_ode(&p, &traj, t, h, kind)?;
        let fine = check_theta_ode(&p, &traj, t, h / 2.0, kind)?;
        report.check(format!("d{name}_dt_order"), coarse / fine, within, target, None);
        report.observe(format!("d{name}_dt_residual"), fine);
    }
    Ok(report)
}

fn m_bounds(cfg: &ExperimentConfig, p: &VarianceProfile, point: &SpectralPoint) -> Result<MBoundReport> {
    let n = p.n();
    let ups = upsilon_build(n, p.w(), point.eta, cfg.control)?;
    let pts: Vec<SpectralPoint> = (0..3).map(|j| if j % 2 == 0 { *point } else { point.conj() }).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(cfg.seed ^ CHAIN_SALT, 2));
    let tuples: Vec<Vec<usize>> = (0..cfg.tuples.min(16)).map(|_| (0..3).map(|_| rng.random_range(0..n)).collect()).collect();
    let iso: Vec<usize> = (0..4).map(|_| rng.random_range(0..n)).collect();
    check_m_size_bounds(p, &ups, &pts, &tuples, &iso)
}

/// Identities, convergence orders, fitted M-size constants and, for grid
/// points with `η >= 1`, the Monte Carlo comparison with M-terms.
pub fn run_mcheck(cfg: &ExperimentConfig) -> Result<Report> {
    let mut report = run_identities(cfg)?;
    report.merge(run_order_checks(cfg)?);
    let p = cfg.profile.build()?;
    let point = SpectralPoint::new(cfg.z_grid[0], p.w(), p.n())?;
    let bounds = m_bounds(cfg, &p, &point)?;
    for f in &bounds.fits {
        report.observe(format!("m_bound_{}_k{}_n{}", f.bound, f.k, f.traceless), f.constant);
    }
    if let Some(path) = cfg.artifact("mterms.json")? {
        fs::write(&path, serde_json::to_string_pretty(&bounds)? + "\n")?;
        report.artifacts.push(path);
    }
    let global: Vec<c64> = cfg.z_grid.iter().copied().filter(|z| z.im.abs() >= 1.0).collect();
    if !global.is_empty() {
        let mut sub = cfg.clone();
        sub.z_grid = global;
        sub.out = None;
        report.merge(run_global_law(&sub)?);
    }
    Ok(report)
}
