use std::fs::File;
use std::io::{BufWriter, Write};
use std::sync::Arc;

use faer::Mat;

use super::report::{Relation, Report};
use super::ExperimentConfig;
use crate::chains::eigendecompose;
use crate::ensemble::{pdist, sample_matrix, trial_seed, VarianceProfile};
use crate::error::Result;
use crate::exec::try_map_indexed;
use crate::kernels::{two_point_kernel, upsilon_build, KernelKind};
use crate::semicircle::SpectralPoint;

/// Trials per chunk of the running sum; keeps memory at a few `N x N`
/// matrices per worker while the reduction order stays fixed.
const CHUNK: usize = 8;

/// `E[S |G|²]` over the batch, `|G|²` taken entrywise.
fn smoothed_square(cfg: &ExperimentConfig, p: &Arc<VarianceProfile>, z: &SpectralPoint, salt: u64) -> Result<Mat<f64>> {
    let n = p.n();
    let s = Mat::<f64>::from_fn(n, n, |a, b| p.get(a, b));
    let mut total = Mat::<f64>::zeros(n, n);
    let mut start = 0;
    while start < cfg.samples {
        let len = CHUNK.min(cfg.samples - start);
        let parts = try_map_indexed(len, cfg.execution, |i| {
            let seed = trial_seed(cfg.seed ^ salt, (start + i) as u64);
            let cache = eigendecompose(&sample_matrix(p, cfg.symmetry, cfg.distribution, seed))?;
            let g = cache.resolvent(z.z)?;
            let sq = Mat::<f64>::from_fn(n, n, |a, b| g[(a, b)].norm_sqr());
            Ok::<_, crate::Error>(&s * &sq)
        })?;
        for part in parts {
            total += part;
        }
        start += len;
    }
    let inv = 1.0 / cfg.samples as f64;
    Ok(Mat::from_fn(n, n, |a, b| total[(a, b)] * inv))
}

/// Average of `m` over pairs at each periodic distance `0..=N/2`.
fn by_distance(m: impl Fn(usize, usize) -> f64, n: usize) -> Vec<f64> {
    let mut sum = vec![0.0; n / 2 + 1];
    let mut count = vec![0usize; n / 2 + 1];
    for a in 0..n {
        for b in 0..n {
            let d = pdist(a, b, n);
            sum[d] += m(a, b);
            count[d] += 1;
        }
    }
    sum.iter().zip(&count).map(|(s, c)| s / *c as f64).collect()
}

/// Compare the sampled `E[Σ_c S_ac |G_cb|²]` with `Θ_ab` as a function of
/// `|a - b|`. In the localized regime `η > (W/N)²` the ratio must stay
/// within the margin up to distance `ℓ` and the tail beyond `4ℓ` must be
/// small; below it the profile must be flat at `Im m / (Nη)`.
pub fn run_decay_profile(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let p = Arc::new(cfg.profile.build()?);
    let (n, w) = (p.n(), p.w());
    let points = cfg.points(w, n)?;
    let mut report = Report::new("decay", cfg);
    let deloc = (w as f64 / n as f64).powi(2);
    let factor = cfg.margins.decay_ratio;
    let spread = |r: f64| if r > 0.0 { r.max(1.0 / r) } else { f64::INFINITY };
    for (zi, z) in points.iter().enumerate() {
        let eta = Some(z.eta);
        let est = smoothed_square(cfg, &p, z, zi as u64)?;
        let theta = two_point_kernel(&p, z, z, KernelKind::Theta)?;
        let est_d = by_distance(|a, b| est[(a, b)], n);
        let theta_d = by_distance(|a, b| theta.get(a, b).re, n);
        let ell = z.ell;
        if z.eta > deloc {
            let within = |limit: f64| {
                est_d
                    .iter()
                    .zip(&theta_d)
                    .enumerate()
                    .filter(|(d, _)| *d as f64 <= limit)
                    .map(|(_, (e, t))| spread(e / t))
                    .fold(0.0, f64::max)
            };
            report.check(format!("ratio_within_ell_z{zi}"), within(ell), Relation::AtMost, factor, eta);
            report.observe(format!("ratio_within_2ell_z{zi}"), within(2.0 * ell));
            let peak = est_d[0];
            let tail: Vec<f64> = est_d.iter().enumerate().filter(|(d, _)| *d as f64 > 4.0 * ell).map(|(_, v)| v / peak).collect();
            report.observe(format!("tail_sites_z{zi}"), tail.len() as f64);
            let tail_max = tail.into_iter().fold(0.0, f64::max);
            report.check(format!("tail_beyond_4ell_z{zi}"), tail_max, Relation::AtMost, cfg.margins.decay_tail, eta);
        } else {
            let level = z.m.im / (n as f64 * z.eta);
            let flat = est_d.iter().map(|e| spread(e / level)).fold(0.0, f64::max);
            report.check(format!("flatness_z{zi}"), flat, Relation::AtMost, factor, eta);
        }
        let ups = upsilon_build(n, w, z.eta, cfg.control)?;
        let diag_max = (0..n).map(|a| est[(a, a)] / ups.get(a, a)).fold(0.0, f64::max);
        report.check(format!("peak_over_upsilon_z{zi}"), diag_max, Relation::AtMost, cfg.margins.decay_peak, eta);
        report.observe(format!("ell_z{zi}"), ell);
        report.observe(format!("theta_peak_z{zi}"), theta_d[0]);
        report.observe(format!("estimate_peak_z{zi}"), est_d[0]);
        if let Some(path) = cfg.artifact(&format!("decay_z{zi}.csv"))? {
            let mut f = BufWriter::new(File::create(&path)?);
            writeln!(f, "distance,estimate,theta")?;
            for (d, (e, t)) in est_d.iter().zip(&theta_d).enumerate() {
                writeln!(f, "{d},{e},{t}")?;
            }
            f.flush()?;
            report.artifacts.push(path);
        }
        if let Some(path) = cfg.artifact(&format!("theta_z{zi}.csv"))? {
            theta.write_csv(BufWriter::new(File::create(&path)?))?;
            report.artifacts.push(path);
        }
    }
    Ok(report)
}
