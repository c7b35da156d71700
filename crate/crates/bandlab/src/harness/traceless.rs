use std::sync::Arc;

use super::report::{Relation, Report};
use super::ExperimentConfig;
use crate::chains::eigendecompose;
use crate::cplx::{self, c64};
use crate::ensemble::{sample_matrix, trial_seed, VarianceProfile};
use crate::error::{arg, Result};
use crate::exec::try_map_indexed;
use crate::mterms::m_term_raw;
use crate::semicircle::SpectralPoint;
use crate::stats::log_log_slope;

/// Observable rows: `S^x` or its traceless part.
fn observable(p: &VarianceProfile, x: usize, traceless: bool) -> Vec<c64> {
    let row = p.row(x);
    let shift = if traceless { row.iter().sum::<f64>() / p.n() as f64 } else { 0.0 };
    row.into_iter().map(|v| cplx::real(v - shift)).collect()
}

/// `max_y |Tr[M(z, A, z̄) B^y]|` with `A = S^0` or `S̊^0` and `B^y = S^y` or
/// `S̊^y`; the traceless count is `n = traceless_a + traceless_b`.
fn m_statistic(p: &VarianceProfile, z: &SpectralPoint, traceless_a: bool, traceless_b: bool) -> Result<(f64, Vec<c64>)> {
    let a = observable(p, 0, traceless_a);
    let m = m_term_raw(p, &[z.m, z.m.conj()], &[&a])?;
    let values = traces_against(p, &m, traceless_b);
    Ok((values.iter().map(|v| v.norm()).fold(0.0, f64::max), values))
}

/// `Tr[D B^y]` for all `y` with a diagonal `D`.
fn traces_against(p: &VarianceProfile, d: &[c64], traceless: bool) -> Vec<c64> {
    let sd = p.apply_complex(d);
    let n = p.n() as f64;
    let total: c64 = d.iter().sum();
    (0..p.n())
        .map(|y| {
            let shift = if traceless { p.row(y).iter().sum::<f64>() / n } else { 0.0 };
            sd[y] - total * shift
        })
        .collect()
}

/// Scaling in `η` of chains with traceless special observables.
///
/// The deterministic statistic is `max_y |Tr[M(z, S̊^0, z̄) S̊^y]|` divided by
/// its counterpart without traceless observables; its log-log slope in `η`
/// is the exponent of the improvement. The untraced control must scale like
/// `(Nη)^{-1}` exactly. Monte Carlo fluctuations of the same chains are
/// measured on the batch and reported as observations.
pub fn run_traceless_scaling(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let p = Arc::new(cfg.profile.build()?);
    let (n, w) = (p.n(), p.w());
    if cfg.eta_grid.len() < 2 {
        return arg("the traceless experiment needs at least two etas");
    }
    let nf = n as f64;
    let lower = nf.powf(-1.0 + cfg.bulk.delta0);
    let upper = (w as f64 / nf).powi(2);
    if let Some(bad) = cfg.eta_grid.iter().find(|e| !(**e > lower && **e < upper)) {
        return arg(format!("eta {bad} outside the delocalized window ({lower:.3e}, {upper:.3e})"));
    }
    let energy = cfg.z_grid.first().map(|z| z.re).unwrap_or(0.0);
    let points: Vec<SpectralPoint> = cfg
        .eta_grid
        .iter()
        .map(|e| SpectralPoint::new(c64::new(energy, *e), w, n))
        .collect::<Result<_>>()?;
    let etas: Vec<f64> = points.iter().map(|z| z.eta).collect();
    let mut report = Report::new("traceless", cfg);
    let mut base = Vec::new();
    let mut one = Vec::new();
    let mut two = Vec::new();
    let mut m_base = Vec::new();
    let mut m_two = Vec::new();
    for z in &points {
        let (b, vb) = m_statistic(&p, z, false, false)?;
        let (o, _) = m_statistic(&p, z, false, true)?;
        let (t, vt) = m_statistic(&p, z, true, true)?;
        base.push(b);
        one.push(o);
        two.push(t);
        m_base.push(vb);
        m_two.push(vt);
    }
    let gain2: Vec<f64> = two.iter().zip(&base).map(|(t, b)| t / b).collect();
    let gain1: Vec<f64> = one.iter().zip(&base).map(|(t, b)| t / b).collect();
    let scaled_base: Vec<f64> = base.iter().zip(&etas).map(|(b, e)| b * nf * e).collect();
    let slope2 = log_log_slope(&etas, &gain2);
    let control = log_log_slope(&etas, &scaled_base);
    report.check(
        "m_exponent_n2",
        slope2,
        Relation::Within { tolerance: cfg.margins.traceless_tolerance },
        1.0,
        None,
    );
    report.check(
        "m_exponent_n0",
        control,
        Relation::Within { tolerance: cfg.margins.traceless_control },
        0.0,
        None,
    );
    report.observe("m_exponent_n1", log_log_slope(&etas, &gain1));
    for (e, g) in etas.iter().zip(&gain2) {
        report.observe(format!("m_gain_n2_eta{e}"), *g);
    }

    // Fluctuations of Tr[G S̊^0 G^† S̊^y] and Tr[G S^0 G^† S^y] around the M-terms.
    let a0 = observable(&p, 0, false);
    let a2 = observable(&p, 0, true);
    let per_sample = try_map_indexed(cfg.samples, cfg.execution, |i| {
        let cache = eigendecompose(&sample_matrix(&p, cfg.symmetry, cfg.distribution, trial_seed(cfg.seed, i as u64)))?;
        let mut out = Vec::with_capacity(points.len());
        for (zi, z) in points.iter().enumerate() {
            let g = cache.resolvent(z.z)?;
            let col = |a: &[c64], traceless: bool, m: &[c64]| -> f64 {
                // diag(G A G^†) then traces against every B^y.
                let d: Vec<c64> = (0..n)
                    .map(|c| (0..n).map(|b| g[(c, b)] * a[b] * g[(c, b)].conj()).sum())
                    .collect();
                traces_against(&p, &d, traceless).iter().zip(m).map(|(v, mv)| (v - mv).norm()).fold(0.0, f64::max)
            };
            let f0 = col(&a0, false, &m_base[zi]);
            let f2 = col(&a2, true, &m_two[zi]);
            out.push((f0, f2));
        }
        Ok::<_, crate::Error>(out)
    })?;
    let count = per_sample.len() as f64;
    let mut fl0 = vec![0.0; points.len()];
    let mut fl2 = vec![0.0; points.len()];
    for s in &per_sample {
        for (i, (a, b)) in s.iter().enumerate() {
            fl0[i] += a / count;
            fl2[i] += b / count;
        }
    }
    let fgain: Vec<f64> = fl2.iter().zip(&fl0).map(|(a, b)| a / b).collect();
    report.observe("fluctuation_exponent_n2", log_log_slope(&etas, &fgain));
    for (i, e) in etas.iter().enumerate() {
        report.observe(format!("fluctuation_over_m_n0_eta{e}"), fl0[i] / base[i]);
        report.observe(format!("inverse_n_eta_{e}"), 1.0 / (nf * e));
    }
    Ok(report)
}
