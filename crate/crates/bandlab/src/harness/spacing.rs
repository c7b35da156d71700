use std::fs;
use std::sync::Arc;

use super::report::{svg_histogram, Relation, Report};
use super::ExperimentConfig;
use crate::chains::eigenvalues;
use crate::ensemble::{sample_matrix, trial_seed, SymmetryClass, VarianceProfile};
use crate::error::{Error, Result};
use crate::exec::try_map_indexed;
use crate::stats::{gap_ratios, ks_two_sample};

const REFERENCE_SALT: u64 = 0x7265_6600_0000_0000;
const CONTROL_SALT: u64 = 0x6374_6c00_0000_0000;

fn pooled_ratios(cfg: &ExperimentConfig, p: &Arc<VarianceProfile>, symmetry: SymmetryClass, salt: u64) -> Result<Vec<f64>> {
    let per = try_map_indexed(cfg.samples, cfg.execution, |i| {
        let s = sample_matrix(p, symmetry, cfg.distribution, trial_seed(cfg.seed ^ salt, i as u64));
        Ok::<_, Error>(gap_ratios(&eigenvalues(&s)?))
    })?;
    let pooled: Vec<f64> = per.into_iter().flatten().collect();
    if pooled.len() < 1000 {
        return Err(Error::Statistics(format!("only {} pooled gap ratios; at least 1000 are needed", pooled.len())));
    }
    Ok(pooled)
}

/// Bulk gap-ratio statistics of the band ensemble against a flat-profile
/// reference of the same symmetry and size, and against the other symmetry
/// class as a control.
pub fn run_spacing(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let p = Arc::new(cfg.profile.build()?);
    let flat = Arc::new(VarianceProfile::wigner(p.n())?);
    let other = match cfg.symmetry {
        SymmetryClass::ComplexHermitian => SymmetryClass::RealSymmetric,
        SymmetryClass::RealSymmetric => SymmetryClass::ComplexHermitian,
    };
    let band = pooled_ratios(cfg, &p, cfg.symmetry, 0)?;
    let reference = pooled_ratios(cfg, &flat, cfg.symmetry, REFERENCE_SALT)?;
    let control = pooled_ratios(cfg, &flat, other, CONTROL_SALT)?;
    let mut report = Report::new("spacing", cfg);
    let min = cfg.margins.min_gaps as f64;
    report.check("pooled_ratios", band.len() as f64, Relation::AtLeast, min, None);
    report.check("pooled_reference_ratios", reference.len() as f64, Relation::AtLeast, min, None);
    report.check("ks_reference", ks_two_sample(&band, &reference)?, Relation::AtMost, cfg.margins.ks_max, None);
    report.check("ks_other_symmetry", ks_two_sample(&band, &control)?, Relation::AtLeast, cfg.margins.ks_control, None);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    report.observe("mean_ratio_band", mean(&band));
    report.observe("mean_ratio_reference", mean(&reference));
    report.observe("mean_ratio_other_symmetry", mean(&control));
    if cfg.svg {
        if let Some(path) = cfg.artifact("spacing_ratios.svg")? {
            fs::write(&path, svg_histogram("bulk gap ratios (band)", &band, 40))?;
            report.artifacts.push(path);
        }
    }
    Ok(report)
}
