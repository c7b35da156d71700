//! Constant-fitting report for the admissibility conditions of a control
//! family against a variance profile.
//!
//! The polynomial and exponential families are circulant, so conditions that
//! only involve `Υ` are evaluated at the base point `x = 0`. Conditions
//! involving `Θ`, `Ξ` use rows chosen by the profile kind: row 0 for
//! translation-invariant profiles, a subsample of the first block for block
//! profiles, and a random subsample otherwise.

use faer::Mat;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cplx::{self, c64};
use crate::ensemble::{pdist, ProfileKind, VarianceProfile};
use crate::error::{arg, Result};
use crate::exec::{map_indexed, Execution};
use crate::semicircle::SpectralPoint;

use super::control::{upsilon_build, ControlFamily, ControlFunction};

/// Spectral grid of the report. Every `(energy, eta)` combination is one
/// point in the upper half plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityGrid {
    pub energies: Vec<f64>,
    pub etas: Vec<f64>,
    /// Rows of `Θ` examined for profiles that are not translation invariant.
    #[serde(default = "default_rows")]
    pub rows: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
}

fn default_rows() -> usize {
    8
}

impl AdmissibilityGrid {
    pub fn new(energies: Vec<f64>, etas: Vec<f64>) -> Self {
        Self { energies, etas, rows: default_rows(), seed: 0, execution: Execution::Auto }
    }
}

/// Fitted constant of one condition at one `η` (the smaller one for
/// conditions comparing two scales).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaConstant {
    pub eta: f64,
    pub constant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionFit {
    pub condition: String,
    /// Smallest constant making the inequality hold on the whole grid.
    pub fitted_constant: f64,
    pub grid: Vec<EtaConstant>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "W")]
    pub w: usize,
    pub family: ControlFamily,
    pub conditions: Vec<ConditionFit>,
}

impl AdmissibilityReport {
    pub fn get(&self, condition: &str) -> Option<&ConditionFit> {
        self.conditions.iter().find(|c| c.condition == condition)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Condition names in report order.
pub const CONDITIONS: [&str; 13] = [
    "i_theta",
    "i_xi",
    "ii_max_entry",
    "ii_column_sum",
    "ii_lower_exponent",
    "ii_delocalized_flatness",
    "iii_monotonicity",
    "iv_triangle",
    "iv_sqrt_convolution",
    "iv_full_convolution",
    "v_weighted_convolution",
    "vi_regularity",
    "vii_delocalized_flatness",
];

struct Collector {
    fits: Vec<ConditionFit>,
}

impl Collector {
    fn new() -> Self {
        Self {
            fits: CONDITIONS
                .iter()
                .map(|c| ConditionFit { condition: (*c).to_string(), fitted_constant: 0.0, grid: Vec::new() })
                .collect(),
        }
    }

    fn record(&mut self, condition: &str, eta: f64, constant: f64) {
        let fit = self.fits.iter_mut().find(|f| f.condition == condition).expect("known condition");
        fit.fitted_constant = fit.fitted_constant.max(constant);
        match fit.grid.iter_mut().find(|g| g.eta == eta) {
            Some(g) => g.constant = g.constant.max(constant),
            None => fit.grid.push(EtaConstant { eta, constant }),
        }
    }
}

/// `c S (I - c S)^{-1}` through the spectrum of `S`.
fn kernel_matrix(p: &VarianceProfile, c: c64) -> Mat<c64> {
    p.spectrum().matrix(|s| c * s / (cplx::real(1.0) - c * s))
}

fn rows_for(p: &VarianceProfile, grid: &AdmissibilityGrid) -> Vec<usize> {
    let n = p.n();
    let mut rng = ChaCha8Rng::seed_from_u64(grid.seed);
    match p.kind() {
        ProfileKind::TranslationInvariant => vec![0],
        ProfileKind::BlockBand => {
            let w = p.w().min(n);
            let take = grid.rows.clamp(1, w);
            let mut rows: Vec<usize> = sample(&mut rng, w, take).into_iter().collect();
            rows.sort_unstable();
            rows
        }
        ProfileKind::Custom => {
            let take = grid.rows.clamp(1, n);
            let mut rows: Vec<usize> = sample(&mut rng, n, take).into_iter().collect();
            rows.sort_unstable();
            rows
        }
    }
}

/// Fit the constants of conditions (i)-(vii) on the grid.
pub fn verify_control_admissibility(
    p: &VarianceProfile,
    family: ControlFamily,
    grid: &AdmissibilityGrid,
) -> Result<AdmissibilityReport> {
    let n = p.n();
    let w = p.w();
    if grid.energies.is_empty() || grid.etas.is_empty() {
        return arg("admissibility grid needs energies and etas");
    }
    if grid.etas.iter().any(|e| !(*e > 0.0)) {
        return arg("grid etas must be positive");
    }
    let mut etas = grid.etas.clone();
    etas.sort_by(f64::total_cmp);
    etas.dedup();
    let ups: Vec<ControlFunction> = etas.iter().map(|e| upsilon_build(n, w, *e, family)).collect::<Result<_>>()?;
    let ups_one = upsilon_build(n, w, 1.0, family)?;
    let points: Vec<SpectralPoint> = grid
        .energies
        .iter()
        .flat_map(|e| etas.iter().map(move |eta| (*e, *eta)))
        .map(|(e, eta)| SpectralPoint::new(c64::new(e, eta), w, n))
        .collect::<Result<_>>()?;
    let eta_index = |eta: f64| etas.iter().position(|e| *e == eta).expect("grid eta");
    let rows = rows_for(p, grid);
    let deloc = (w as f64 / n as f64).powi(2);
    let mut out = Collector::new();

    // Conditions (ii)-(v) only involve Υ.
    for (u, &eta) in ups.iter().zip(&etas) {
        let le = u.ell_eta();
        out.record("ii_max_entry", eta, u.max_entry() * le);
        out.record("ii_column_sum", eta, u.max_column_sum() * eta);
        out.record("ii_lower_exponent", eta, u.d_prime);
        if eta <= deloc * (1.0 + 1e-12) {
            let scale = n as f64 * eta;
            let (mut hi, mut lo) = (0.0f64, f64::INFINITY);
            for y in 0..n {
                hi = hi.max(u.get(0, y) * scale);
                lo = lo.min(u.get(0, y) * scale);
            }
            out.record("ii_delocalized_flatness", eta, hi.max(1.0 / lo));
        }
    }
    for (i1, u1) in ups.iter().enumerate() {
        for u2 in &ups[i1..] {
            let (e1, e2) = (u1.eta, u2.eta);
            let (l1, l2) = (u1.ell, u2.ell);
            let mut mono = 0.0f64;
            let mut tri = 0.0f64;
            let mut sq = 0.0f64;
            let mut full = 0.0f64;
            let mut weighted = 0.0f64;
            let weight: Vec<f64> = (0..n).map(|a| ((pdist(a, 0, n) + w) as f64).min(l1) / l1).collect();
            for y in 0..n {
                mono = mono.max(u2.get(0, y) / u1.get(0, y));
                let (mut tmax, mut ssum, mut fsum) = (0.0f64, 0.0, 0.0);
                let mut wsum = [0.0f64; 2];
                for a in 0..n {
                    let x2 = u2.get(0, a);
                    let prod = x2 * u1.get(a, y);
                    tmax = tmax.max(prod);
                    ssum += prod.sqrt();
                    fsum += prod;
                    wsum[0] += weight[a] * prod.sqrt();
                    wsum[1] += weight[a] * (x2 * u2.get(a, y)).sqrt();
                }
                let base = u1.get(0, y);
                tri = tri.max(tmax / (base / u2.ell_eta()));
                sq = sq.max(ssum / ((u2.ell_eta() * base).sqrt() / e2));
                full = full.max(fsum / (base / e2));
                for (i, ws) in wsum.iter().enumerate() {
                    let li_ei = if i == 0 { u1.ell_eta() } else { u2.ell_eta() };
                    let rhs = (1.0 / e2) * (l2 / l1) * (u2.ell_eta() / li_ei).sqrt() * (u1.ell_eta() * base).sqrt();
                    weighted = weighted.max(ws / rhs);
                }
            }
            out.record("iii_monotonicity", e1, mono);
            out.record("iv_triangle", e1, tri);
            out.record("iv_sqrt_convolution", e1, sq);
            out.record("iv_full_convolution", e1, full);
            out.record("v_weighted_convolution", e1, weighted);
        }
    }

    // Conditions (i), (vi), (vii) over pairs of grid points.
    let pairs: Vec<(usize, usize)> =
        (0..points.len()).flat_map(|i| (i..points.len()).map(move |j| (i, j))).collect();
    let results = map_indexed(pairs.len(), grid.execution, |idx| {
        let (i, j) = pairs[idx];
        let (z1, z2) = (&points[i], &points[j]);
        let eta = z1.eta.min(z2.eta);
        let u = &ups[eta_index(eta)];
        let ell = u.ell;
        let theta = kernel_matrix(p, z1.m * z2.m.conj());
        let xi = kernel_matrix(p, z1.m * z2.m);
        let mut maj_t = 0.0f64;
        let mut maj_x = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                maj_t = maj_t.max(theta[(a, b)].norm() / u.get(a, b));
                maj_x = maj_x.max(xi[(a, b)].norm() / ups_one.get(a, b));
            }
        }
        let mut reg = 0.0f64;
        let mut flat = 0.0f64;
        for &a in &rows {
            let mean: c64 = (0..n).map(|c| theta[(a, c)]).sum::<c64>() / n as f64;
            for b in 0..n {
                flat = flat.max((theta[(a, b)] - mean).norm() / (n as f64 / (w * w) as f64));
                for c in 0..n {
                    if b == c {
                        continue;
                    }
                    let d = ((pdist(b, c, n) + w) as f64).min(ell) / ell;
                    let rhs = d * (u.get(a, b) + u.get(a, c));
                    reg = reg.max((theta[(a, b)] - theta[(a, c)]).norm() / rhs);
                }
            }
        }
        (eta, maj_t, maj_x, reg, flat)
    });
    for (eta, maj_t, maj_x, reg, flat) in results {
        out.record("i_theta", eta, maj_t);
        out.record("i_xi", eta, maj_x);
        out.record("vi_regularity", eta, reg);
        out.record("vii_delocalized_flatness", eta, flat);
    }
    let mut conditions = out.fits;
    for c in conditions.iter_mut() {
        c.grid.sort_by(|a, b| a.eta.total_cmp(&b.eta));
    }
    Ok(AdmissibilityReport { n, w, family, conditions })
}
