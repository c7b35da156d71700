//! Experiment runners and report output.
//!
//! Every runner takes an [`ExperimentConfig`], draws its trials from
//! `trial_seed(seed, i)` and returns a [`Report`]. Reductions happen in
//! trial order, so reports do not depend on the thread count.

mod decay;
mod identities;
mod local_law;
mod que;
mod report;
mod setup;
mod spacing;
mod traceless;

pub use decay::run_decay_profile;
pub use identities::{run_identities, run_mcheck, run_order_checks};
pub use local_law::{run_global_law, run_local_law};
pub use que::run_que;
pub use report::{
    emit_report, svg_histogram, svg_line_plot, write_batch_csv, BatchRow, Environment, Observation, Relation,
    Report, ReportFormat, ReportRow, REPORT_HEADER,
};
pub use setup::{run_flow, run_profile, run_sample};
pub use spacing::run_spacing;
pub use traceless::run_traceless_scaling;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cplx::{self, c64};
use crate::ensemble::{EntryDistribution, ProfileSpec, SymmetryClass};
use crate::error::{arg, Error, Result};
use crate::exec::Execution;
use crate::kernels::{AdmissibilityGrid, ControlFamily};
use crate::semicircle::{BulkDomain, SpectralPoint};

/// Pass/fail margins. Defaults are the acceptance thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Margins {
    /// `C` in `max_x |Tr[(G-m)S^x]| <= C/(ℓη)`.
    pub local_law_trace: f64,
    /// Exponent in `|(G-m)_ab| <= N^ξ sqrt(Υ_ab)`.
    pub entrywise_xi: f64,
    pub entrywise_fraction: f64,
    /// Standard errors allowed between Monte Carlo means and M-terms.
    pub global_law_se: f64,
    pub decay_ratio: f64,
    pub decay_tail: f64,
    /// Bound on `E[S|G|²]_aa / Υ_aa`.
    pub decay_peak: f64,
    pub que_constant: f64,
    /// Allowed range of the QUE deviation ratio when the width doubles.
    pub que_ratio: [f64; 2],
    /// Eigenvalues with `|λ| <= 2 - que_edge` count as bulk.
    pub que_edge: f64,
    pub deloc_xi: f64,
    pub traceless_tolerance: f64,
    pub traceless_control: f64,
    pub ks_max: f64,
    pub ks_control: f64,
    pub min_gaps: usize,
    pub dyson: f64,
    pub sum_rule: f64,
    pub norm_identity: f64,
    pub ward: f64,
    pub cyclicity: f64,
    pub divided_difference: f64,
    pub propagator: f64,
    /// Expected error ratio of central differences under `h -> h/2`.
    pub order_ratio: f64,
    pub order_tolerance: f64,
    /// Largest allowed max/min ratio of admissibility constants across sizes.
    pub admissibility_spread: f64,
    /// `C` in the regularization gain bound `C ℓ_s ℓ_t η_t / W²`.
    pub regularization: f64,
}

impl Default for Margins {
    fn default() -> Self {
        Self {
            local_law_trace: 10.0,
            entrywise_xi: 0.2,
            entrywise_fraction: 0.99,
            global_law_se: 3.0,
            decay_ratio: 2.0,
            decay_tail: 0.1,
            decay_peak: 10.0,
            que_constant: 3.0,
            que_ratio: [1.4, 2.8],
            que_edge: 0.2,
            deloc_xi: 0.2,
            traceless_tolerance: 0.2,
            traceless_control: 0.15,
            ks_max: 0.05,
            ks_control: 0.1,
            min_gaps: 10_000,
            dyson: 1e-12,
            sum_rule: 1e-10,
            norm_identity: 1e-8,
            ward: 1e-9,
            cyclicity: 1e-9,
            divided_difference: 1e-9,
            propagator: 1e-9,
            order_ratio: 4.0,
            order_tolerance: 0.5,
            admissibility_spread: 2.0,
            regularization: 3.0,
        }
    }
}

/// Settings of the flow experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSettings {
    pub t_end: f64,
    pub records: usize,
    /// Chain length of the traced `Ψ`.
    pub k: usize,
    /// Sites of the special observables; empty picks evenly spaced sites.
    pub sites: Vec<usize>,
    /// Ratios `η_s/η_t` for the regularization gain.
    pub gain_ratios: Vec<f64>,
    pub step: f64,
}

impl Default for FlowSettings {
    fn default() -> Self {
        Self { t_end: 1.0, records: 4, k: 2, sites: Vec::new(), gain_ratios: vec![4.0, 16.0], step: 1e-3 }
    }
}

/// Everything a runner needs. Mirrors the JSON config file field by field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub profile: ProfileSpec,
    #[serde(default)]
    pub symmetry: SymmetryClass,
    #[serde(default)]
    pub distribution: EntryDistribution,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default, with = "cplx::pairs")]
    pub z_grid: Vec<c64>,
    /// Index tuples drawn per chain length.
    #[serde(default = "default_subsample")]
    pub tuples: usize,
    /// Test vector pairs drawn per chain length.
    #[serde(default = "default_subsample")]
    pub vectors: usize,
    /// Distinct interior sites shared by the tuples of chains with `k >= 3`.
    #[serde(default = "default_interior")]
    pub interior_sites: usize,
    #[serde(default = "default_kmax")]
    pub kmax: usize,
    #[serde(default = "default_chain_lengths")]
    pub chain_lengths: Vec<usize>,
    /// Exponent of the `N^ξ` tolerance on `Ψ`.
    #[serde(default = "default_xi")]
    pub xi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default = "default_control")]
    pub control: ControlFamily,
    #[serde(default)]
    pub bulk: BulkDomain,
    #[serde(default)]
    pub margins: Margins,
    #[serde(default)]
    pub execution: Execution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Bandwidths compared by the QUE experiment.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub widths: Vec<usize>,
    /// Imaginary parts scanned by the traceless experiment.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eta_grid: Vec<f64>,
    /// Sizes of the admissibility sweep (the profile is rescaled at fixed `W/N`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub admissibility: Option<AdmissibilityGrid>,
    #[serde(default)]
    pub flow: FlowSettings,
    /// Bandwidth condition `W² >= N^{1+zeta0}` checked by the profile experiment.
    #[serde(default = "default_zeta0")]
    pub zeta0: f64,
    #[serde(default)]
    pub svg: bool,
}

fn default_samples() -> usize {
    100
}

fn default_subsample() -> usize {
    64
}

fn default_interior() -> usize {
    4
}

fn default_kmax() -> usize {
    8
}

fn default_chain_lengths() -> Vec<usize> {
    vec![1, 2, 3]
}

fn default_xi() -> f64 {
    0.25
}

fn default_zeta0() -> f64 {
    0.1
}

fn default_control() -> ControlFamily {
    ControlFamily::Polynomial { power: 6.0 }
}

impl ExperimentConfig {
    pub fn new(profile: ProfileSpec) -> Self {
        Self {
            profile,
            symmetry: SymmetryClass::default(),
            distribution: EntryDistribution::default(),
            seed: 0,
            samples: default_samples(),
            z_grid: Vec::new(),
            tuples: default_subsample(),
            vectors: default_subsample(),
            interior_sites: default_interior(),
            kmax: default_kmax(),
            chain_lengths: default_chain_lengths(),
            xi: default_xi(),
            out: None,
            control: default_control(),
            bulk: BulkDomain::default(),
            margins: Margins::default(),
            execution: Execution::default(),
            threads: None,
            widths: Vec::new(),
            eta_grid: Vec::new(),
            sizes: Vec::new(),
            admissibility: None,
            flow: FlowSettings::default(),
            zeta0: default_zeta0(),
            svg: false,
        }
    }

    /// Parse a config, or the `config` member of a JSON report summary.
    pub fn from_json(s: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        let inner = match value.get("config") {
            Some(c) if value.get("experiment").is_some() => c.clone(),
            _ => value,
        };
        let cfg: Self = serde_json::from_value(inner)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Sizes positive, chain lengths within `1..=kmax`, grid inside the bulk domain.
    pub fn validate(&self) -> Result<()> {
        let n = self.profile.n();
        if n == 0 || self.profile.w() == 0 {
            return arg("profile needs N, W >= 1");
        }
        if self.samples == 0 || self.tuples == 0 || self.vectors == 0 || self.interior_sites == 0 {
            return arg("samples, tuples, vectors and interior_sites must be positive");
        }
        if self.kmax == 0 || self.kmax % 2 != 0 {
            return arg(format!("kmax must be even and positive, got {}", self.kmax));
        }
        if self.chain_lengths.iter().any(|k| *k == 0 || *k > self.kmax) {
            return arg(format!("chain lengths must lie in 1..={}", self.kmax));
        }
        if !(self.xi > 0.0) {
            return arg("xi must be positive");
        }
        if self.threads == Some(0) {
            return arg("threads must be positive");
        }
        for z in &self.z_grid {
            if !self.bulk.contains(*z, n) {
                return Err(Error::Domain(format!("z = {z} lies outside the bulk domain")));
            }
        }
        Ok(())
    }

    fn points(&self, w: usize, n: usize) -> Result<Vec<SpectralPoint>> {
        if self.z_grid.is_empty() {
            return arg("this experiment needs a nonempty z_grid");
        }
        self.z_grid.iter().map(|z| SpectralPoint::new(*z, w, n)).collect()
    }

    /// Path of an output artifact, creating the directory. `None` without `out`.
    fn artifact(&self, name: &str) -> Result<Option<PathBuf>> {
        match &self.out {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                Ok(Some(dir.join(name)))
            }
            None => Ok(None),
        }
    }
}

/// Copy of `spec` at a different bandwidth (translation-invariant) or size
/// at fixed block count (block profiles).
pub(crate) fn with_width(spec: &ProfileSpec, w: usize) -> Result<ProfileSpec> {
    match spec {
        ProfileSpec::TranslationInvariant { n, decay, .. } => {
            Ok(ProfileSpec::TranslationInvariant { n: *n, w, decay: decay.clone() })
        }
        _ => arg("changing the bandwidth needs a translation-invariant profile"),
    }
}

/// `spec` rescaled to size `n` at fixed `W/N` (block profiles keep their
/// block count).
pub(crate) fn resized(spec: &ProfileSpec, n: usize) -> Result<ProfileSpec> {
    match spec {
        ProfileSpec::TranslationInvariant { n: n0, w, decay } => {
            let w = ((*w as f64) * n as f64 / *n0 as f64).round().max(1.0) as usize;
            Ok(ProfileSpec::TranslationInvariant { n, w, decay: decay.clone() })
        }
        ProfileSpec::BlockBand { sigma, .. } => {
            let l = sigma.len();
            if n % l != 0 {
                return arg(format!("size {n} is not a multiple of the block count {l}"));
            }
            Ok(ProfileSpec::BlockBand { n, w: n / l, sigma: sigma.clone() })
        }
        ProfileSpec::Custom { .. } => arg("custom profiles cannot be resized"),
    }
}
