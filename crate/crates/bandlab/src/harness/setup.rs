use std::fs::{self, File};
use std::io::BufWriter;
use std::sync::Arc;

use super::report::{svg_line_plot, Relation, Report};
use super::{resized, ExperimentConfig};
use crate::ensemble::{sample_matrix, trial_seed, verify_profile};
use crate::error::{arg, Result};
use crate::flow::{flow_psi_trace, solve_characteristic, write_flow_csv, FlowTraceConfig};
use crate::kernels::{regularize_theta, two_point_kernel, verify_control_admissibility, AdmissibilityReport, KernelKind};
use crate::semicircle::SpectralPoint;
use crate::stats::Moments;

/// Structural checks of the profile and, when an admissibility grid is
/// configured, the fitted admissibility constants at every configured size
/// together with their spread across sizes.
pub fn run_profile(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let p = cfg.profile.build()?;
    let mut report = Report::new("profile", cfg);
    let checks = verify_profile(&p, cfg.zeta0);
    for c in &checks.checks {
        let relation = match c.name.as_str() {
            "nonnegativity" | "bandwidth" => Relation::AtLeast,
            _ => Relation::AtMost,
        };
        report.check(c.name.clone(), c.measured, relation, c.bound, None);
    }
    if let Some(path) = cfg.artifact("variance_profile.json")? {
        fs::write(&path, p.to_json()? + "\n")?;
        report.artifacts.push(path);
    }
    let Some(grid) = &cfg.admissibility else {
        return Ok(report);
    };
    let sizes = if cfg.sizes.is_empty() { vec![p.n()] } else { cfg.sizes.clone() };
    let mut fits: Vec<AdmissibilityReport> = Vec::new();
    for &n in &sizes {
        let spec = if n == p.n() { cfg.profile.clone() } else { resized(&cfg.profile, n)? };
        let q = spec.build()?;
        let r = verify_control_admissibility(&q, cfg.control, grid)?;
        for c in &r.conditions {
            report.observe(format!("{}_N{n}", c.condition), c.fitted_constant);
        }
        if let Some(path) = cfg.artifact(&format!("admissibility_N{n}.json"))? {
            fs::write(&path, r.to_json()? + "\n")?;
            report.artifacts.push(path);
        }
        fits.push(r);
    }
    if fits.len() >= 2 {
        for c in &fits[0].conditions {
            let values: Vec<f64> = fits.iter().filter_map(|f| f.get(&c.condition)).map(|f| f.fitted_constant).collect();
            let hi = values.iter().copied().fold(0.0, f64::max);
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let spread = if hi == 0.0 { 1.0 } else if lo > 0.0 { hi / lo } else { f64::INFINITY };
            report.check(
                format!("spread_{}", c.condition),
                spread,
                Relation::AtMost,
                cfg.margins.admissibility_spread,
                None,
            );
        }
    }
    Ok(report)
}

/// Draw the configured number of matrices, write them as CSV and check
/// Hermiticity and the second moments of the entries against the profile.
pub fn run_sample(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let p = Arc::new(cfg.profile.build()?);
    let n = p.n();
    let mut report = Report::new("sample", cfg);
    let mut asym = 0.0f64;
    let mut moments = Moments::default();
    for i in 0..cfg.samples {
        let s = sample_matrix(&p, cfg.symmetry, cfg.distribution, trial_seed(cfg.seed, i as u64));
        for a in 0..n {
            for b in a..n {
                let v = s.values.get(a, b);
                asym = asym.max((v - s.values.get(b, a).conj()).norm());
                let var = p.get(a, b);
                if var > 0.0 {
                    moments.push(v.norm_sqr() / var);
                }
            }
        }
        if let Some(path) = cfg.artifact(&format!("sample_{i}.csv"))? {
            s.values.write_csv(BufWriter::new(File::create(&path)?))?;
            report.artifacts.push(path);
        }
    }
    report.check("hermiticity", asym, Relation::AtMost, 0.0, None);
    let se = moments.std_error();
    let dev = (moments.mean - 1.0).abs();
    let score = if se > 0.0 { dev / se } else if dev == 0.0 { 0.0 } else { f64::INFINITY };
    report.check("second_moment", score, Relation::AtMost, cfg.margins.global_law_se, None);
    report.observe("second_moment_mean", moments.mean);
    Ok(report)
}

/// Time at which the spectral parameter along the trajectory has imaginary
/// part `eta` (the imaginary part decreases along the flow).
fn time_of_eta(traj: &crate::flow::Trajectory, eta: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.0, traj.t_end());
    if traj.point_at(lo)?.eta < eta {
        return arg(format!("the trajectory never reaches eta = {eta}; increase t_end"));
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if traj.point_at(mid)?.eta >= eta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Characteristic trajectory ending at the first grid point, the Ψ trace of
/// the OU-evolved batch along it, and the regularization gain of `Θ`
/// between the end point and earlier times with larger `η`.
pub fn run_flow(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let p = Arc::new(cfg.profile.build()?);
    let (n, w) = (p.n(), p.w());
    let end = cfg.points(w, n)?[0];
    let fs = &cfg.flow;
    let traj = solve_characteristic(end.z, fs.t_end, fs.step, w, n)?;
    let mut report = Report::new("flow", cfg);
    if let Some(path) = cfg.artifact("trajectory.csv")? {
        traj.write_csv(BufWriter::new(File::create(&path)?))?;
        report.artifacts.push(path);
    }
    let increases = traj.points.windows(2).filter(|pair| pair[1].eta > pair[0].eta).count();
    report.check("eta_monotone", increases as f64, Relation::AtMost, 0.0, None);

    let theta_t = two_point_kernel(&p, &end, &end, KernelKind::Theta)?;
    let x = 0;
    let reg = regularize_theta(&theta_t, x)?;
    for &ratio in &fs.gain_ratios {
        let s = time_of_eta(&traj, ratio * end.eta)?;
        let zs: SpectralPoint = traj.point_at(s)?;
        let theta_s = two_point_kernel(&p, &zs, &zs, KernelKind::Theta)?;
        let f: Vec<f64> = (0..n).map(|a| theta_s.get(a, x).re).collect();
        let apply = |m: &dyn Fn(usize, usize) -> f64| -> f64 {
            (0..n).map(|a| (0..n).map(|b| m(a, b) * f[b]).sum::<f64>().abs()).fold(0.0, f64::max)
        };
        let regular = apply(&|a, b| reg[(a, b)].re);
        let plain = apply(&|a, b| theta_t.get(a, b).re);
        let bound = cfg.margins.regularization * zs.ell * end.ell * end.eta / (w * w) as f64;
        report.check(format!("regularization_gain_r{ratio}"), regular / plain, Relation::AtMost, bound, Some(end.eta));
        report.observe(format!("eta_s_r{ratio}"), zs.eta);
    }

    let sites = if fs.sites.is_empty() { (0..fs.k.max(2)).map(|j| j * n / fs.k.max(2)).collect() } else { fs.sites.clone() };
    let trace_cfg = FlowTraceConfig {
        z_final: end.z,
        t_end: fs.t_end,
        records: fs.records,
        samples: cfg.samples,
        seed: cfg.seed,
        symmetry: cfg.symmetry,
        distribution: cfg.distribution,
        k: fs.k,
        sites,
        kmax: cfg.kmax,
        control: cfg.control,
        execution: cfg.execution,
    };
    let rows = flow_psi_trace(&p, &trace_cfg)?;
    let tolerance = (n as f64).powf(cfg.xi);
    let av = rows.iter().map(|r| r.psi_av).fold(0.0, f64::max);
    let iso = rows.iter().map(|r| r.psi_iso).fold(0.0, f64::max);
    report.check("flow_psi_av", av, Relation::AtMost, tolerance, None);
    report.check("flow_psi_iso", iso, Relation::AtMost, tolerance, None);
    if let Some(path) = cfg.artifact("flow_trace.csv")? {
        write_flow_csv(&rows, BufWriter::new(File::create(&path)?))?;
        report.artifacts.push(path);
    }
    if cfg.svg {
        if let Some(path) = cfg.artifact("flow_trace.svg")? {
            let t: Vec<f64> = rows.iter().map(|r| r.t).collect();
            let a: Vec<f64> = rows.iter().map(|r| r.psi_av).collect();
            let b: Vec<f64> = rows.iter().map(|r| r.psi_iso).collect();
            fs::write(&path, svg_line_plot("Ψ along the flow", &t, &[("psi_av", &a), ("psi_iso", &b)]))?;
            report.artifacts.push(path);
        }
    }
    Ok(report)
}
