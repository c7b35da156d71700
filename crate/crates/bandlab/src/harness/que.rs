use std::sync::Arc;

use faer::Mat;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::report::{Relation, Report};
use super::{with_width, ExperimentConfig};
use crate::chains::eigendecompose;
use crate::ensemble::{sample_matrix, trial_seed, ProfileKind, VarianceProfile};
use crate::error::{arg, Result};
use crate::exec::try_map_indexed;
use crate::kernels::triple_norm;
use crate::mterms::{make_special_observable, traceless_part};

struct WidthResult {
    w: usize,
    /// `max N |<u_i, S̊^x u_i>| / |||S̊^x|||` over bulk `i`, sampled `x`.
    normalized: f64,
    raw: f64,
    /// `max |<e_0, u_i>|` over bulk `i`.
    deloc: f64,
    bulk: usize,
    /// Median over samples of the per-sample normalized maximum.
    typical: f64,
}

fn run_width(cfg: &ExperimentConfig, p: &Arc<VarianceProfile>, salt: u64) -> Result<WidthResult> {
    let n = p.n();
    let sites: Vec<usize> = match p.kind() {
        ProfileKind::TranslationInvariant => (0..n).collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(cfg.seed ^ salt, u64::MAX));
            let mut s: Vec<usize> = sample(&mut rng, n, cfg.tuples.min(n)).into_iter().collect();
            s.sort_unstable();
            s
        }
    };
    let norms: Vec<f64> = match p.kind() {
        ProfileKind::TranslationInvariant => {
            let v = triple_norm(p, &traceless_part(&make_special_observable(p, 0)?))?.value;
            vec![v; n]
        }
        _ => {
            let mut v = vec![f64::NAN; n];
            for &x in &sites {
                v[x] = triple_norm(p, &traceless_part(&make_special_observable(p, x)?))?.value;
            }
            v
        }
    };
    let s = Mat::<f64>::from_fn(n, n, |a, b| p.get(a, b));
    let row_mean: Vec<f64> = (0..n).map(|x| p.row(x).iter().sum::<f64>() / n as f64).collect();
    let edge = 2.0 - cfg.margins.que_edge;
    let per_sample = try_map_indexed(cfg.samples, cfg.execution, |i| {
        let seed = trial_seed(cfg.seed ^ salt, i as u64);
        let cache = eigendecompose(&sample_matrix(p, cfg.symmetry, cfg.distribution, seed))?;
        let bulk: Vec<usize> = (0..n).filter(|j| cache.eigenvalues[*j].abs() <= edge).collect();
        let weights = Mat::<f64>::from_fn(n, bulk.len(), |a, j| cache.vectors[(a, bulk[j])].norm_sqr());
        let smoothed = &s * &weights;
        let (mut normalized, mut raw) = (0.0f64, 0.0f64);
        for j in 0..bulk.len() {
            for &x in &sites {
                let dev = (smoothed[(x, j)] - row_mean[x]).abs() * n as f64;
                raw = raw.max(dev);
                normalized = normalized.max(dev / norms[x]);
            }
        }
        let deloc = bulk.iter().map(|j| cache.vectors[(0, *j)].norm()).fold(0.0, f64::max);
        Ok::<_, crate::Error>((normalized, raw, deloc, bulk.len()))
    })?;
    let mut maxima: Vec<f64> = per_sample.iter().map(|s| s.0).collect();
    maxima.sort_by(f64::total_cmp);
    let typical = maxima[maxima.len() / 2];
    let mut out = WidthResult { w: p.w(), normalized: 0.0, raw: 0.0, deloc: 0.0, bulk: 0, typical };
    for (a, b, c, d) in per_sample {
        out.normalized = out.normalized.max(a);
        out.raw = out.raw.max(b);
        out.deloc = out.deloc.max(c);
        out.bulk += d;
    }
    Ok(out)
}

/// Quantum unique ergodicity of bulk eigenvectors against the traceless
/// special observables `S̊^x`, and delocalization against `e_0`, for each
/// configured bandwidth. With two bandwidths the ratio of the deviations is
/// compared with the ratio of the widths.
pub fn run_que(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let mut widths = if cfg.widths.is_empty() { vec![cfg.profile.w()] } else { cfg.widths.clone() };
    widths.sort_unstable();
    widths.dedup();
    if widths.len() > 2 {
        return arg("the QUE experiment compares at most two bandwidths");
    }
    let n = cfg.profile.n();
    let mut report = Report::new("que", cfg);
    let mut results = Vec::new();
    for (i, &w) in widths.iter().enumerate() {
        let spec = if w == cfg.profile.w() { cfg.profile.clone() } else { with_width(&cfg.profile, w)? };
        let p = Arc::new(spec.build()?);
        let r = run_width(cfg, &p, (i as u64 + 1) << 48)?;
        let nf = n as f64;
        report.check_sized(
            format!("que_deviation_w{w}"),
            r.normalized,
            Relation::AtMost,
            cfg.margins.que_constant * nf.sqrt() / w as f64,
            None,
            n,
            w,
        );
        report.check_sized(
            format!("delocalization_w{w}"),
            r.deloc,
            Relation::AtMost,
            nf.powf(cfg.margins.deloc_xi) / nf.sqrt(),
            None,
            n,
            w,
        );
        report.observe(format!("raw_deviation_w{w}"), r.raw);
        report.observe(format!("bulk_eigenpairs_w{w}"), r.bulk as f64);
        report.observe(format!("median_sample_deviation_w{w}"), r.typical);
        results.push(r);
    }
    if let [narrow, wide] = results.as_slice() {
        let expected = wide.w as f64 / narrow.w as f64;
        let ratio = narrow.normalized / wide.normalized;
        let [lo, hi] = cfg.margins.que_ratio;
        report.check("que_width_ratio_lower", ratio, Relation::AtLeast, lo * expected / 2.0, None);
        report.check("que_width_ratio_upper", ratio, Relation::AtMost, hi * expected / 2.0, None);
        report.observe("raw_width_ratio", narrow.raw / wide.raw);
    }
    Ok(report)
}
