//! Variance profiles and band-matrix sampling.
//!
//! Indices are 0-based throughout: a profile of size `N` has rows `0..N`.

use std::io::Write;
use std::sync::{Arc, OnceLock};

use faer::{Mat, MatRef, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cplx::c64;
use crate::error::{arg, Result};

/// Periodic distance `min(|x-y|, N-|x-y|)` on `0..n`.
pub fn periodic_distance(x: usize, y: usize, n: usize) -> Result<usize> {
    if x >= n || y >= n {
        return arg(format!("indices ({x}, {y}) out of range for N = {n}"));
    }
    Ok(pdist(x, y, n))
}

#[inline]
pub(crate) fn pdist(x: usize, y: usize, n: usize) -> usize {
    let d = x.abs_diff(y);
    d.min(n - d)
}

/// Shape `f` of a translation-invariant profile, evaluated at `|a-b|_N / W`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DecayProfile {
    /// `(1 + x^2)^(-power)`
    Polynomial { power: f64 },
    /// `exp(-x^2 / 2)`
    Gaussian,
    /// `exp(-rate |x|)`
    Exponential { rate: f64 },
    /// Indicator of `|x| <= half_width`.
    Box { half_width: f64 },
    /// Values at lattice distances `0, 1, ..., N/2`.
    Tabulated { values: Vec<f64> },
}

impl DecayProfile {
    fn lattice(&self, d: usize, w: usize) -> f64 {
        let x = d as f64 / w as f64;
        match self {
            DecayProfile::Polynomial { power } => (1.0 + x * x).powf(-power),
            DecayProfile::Gaussian => (-0.5 * x * x).exp(),
            DecayProfile::Exponential { rate } => (-rate * x).exp(),
            DecayProfile::Box { half_width } => {
                if x <= *half_width {
                    1.0
                } else {
                    0.0
                }
            }
            DecayProfile::Tabulated { values } => values.get(d).copied().unwrap_or(f64::NAN),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    TranslationInvariant,
    BlockBand,
    Custom,
}

/// Serializable recipe for a profile: `{kind, N, W, ...}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileSpec {
    TranslationInvariant {
        #[serde(rename = "N")]
        n: usize,
        #[serde(rename = "W")]
        w: usize,
        decay: DecayProfile,
    },
    BlockBand {
        #[serde(rename = "N")]
        n: usize,
        #[serde(rename = "W")]
        w: usize,
        sigma: Vec<Vec<f64>>,
    },
    Custom {
        #[serde(rename = "N")]
        n: usize,
        #[serde(rename = "W")]
        w: usize,
        entries: Vec<Vec<f64>>,
    },
}

impl ProfileSpec {
    pub fn build(&self) -> Result<VarianceProfile> {
        match self {
            ProfileSpec::TranslationInvariant { n, w, decay } => {
                build_translation_invariant(*n, *w, decay)
            }
            ProfileSpec::BlockBand { n, w, sigma } => {
                if sigma.len() * w != *n {
                    return arg(format!("block profile: N = {n} but L*W = {}", sigma.len() * w));
                }
                build_block_band(sigma.len(), *w, sigma)
            }
            ProfileSpec::Custom { n, w, entries } => {
                if entries.len() != *n {
                    return arg(format!("custom profile: N = {n} but {} rows", entries.len()));
                }
                VarianceProfile::custom(*w, entries)
            }
        }
    }

    /// Block profile with `sigma_ij = 1/3` for `|i-j|_L <= 1` (`L >= 3`).
    /// `L = 1` gives the flat Wigner profile, `L = 2` splits mass evenly.
    pub fn nearest_neighbour_blocks(l: usize, w: usize) -> Self {
        ProfileSpec::BlockBand { n: l * w, w, sigma: nearest_neighbour_sigma(l) }
    }

    pub fn polynomial(n: usize, w: usize, power: f64) -> Self {
        ProfileSpec::TranslationInvariant { n, w, decay: DecayProfile::Polynomial { power } }
    }

    pub fn n(&self) -> usize {
        match self {
            ProfileSpec::TranslationInvariant { n, .. }
            | ProfileSpec::BlockBand { n, .. }
            | ProfileSpec::Custom { n, .. } => *n,
        }
    }

    pub fn w(&self) -> usize {
        match self {
            ProfileSpec::TranslationInvariant { w, .. }
            | ProfileSpec::BlockBand { w, .. }
            | ProfileSpec::Custom { w, .. } => *w,
        }
    }
}

pub fn nearest_neighbour_sigma(l: usize) -> Vec<Vec<f64>> {
    let mut sigma = vec![vec![0.0; l]; l];
    for (i, row) in sigma.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = match l {
                1 => 1.0,
                2 => 0.5,
                _ if pdist(i, j, l) <= 1 => 1.0 / 3.0,
                _ => 0.0,
            };
        }
    }
    sigma
}

/// Eigendecomposition `S = Q diag(sigma) Q^T`, used for every stability
/// operator `(I - w S)^{-1}`.
#[derive(Clone, Debug)]
pub struct ProfileSpectrum {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

impl ProfileSpectrum {
    /// `(I - w S)^{-1} rhs`.
    pub fn solve_stability(&self, w: c64, rhs: &[c64]) -> Vec<c64> {
        self.apply(|s| (c64::new(1.0, 0.0) - w * s).inv(), rhs)
    }

    /// `g(S) rhs` for a scalar function of the spectrum.
    pub fn apply(&self, g: impl Fn(f64) -> c64, rhs: &[c64]) -> Vec<c64> {
        let n = self.values.len();
        let q = &self.vectors;
        let mut coef = vec![c64::new(0.0, 0.0); n];
        for (j, c) in coef.iter_mut().enumerate() {
            let mut acc = c64::new(0.0, 0.0);
            for (i, r) in rhs.iter().enumerate() {
                acc += r * q[(i, j)];
            }
            *c = acc * g(self.values[j]);
        }
        let mut out = vec![c64::new(0.0, 0.0); n];
        for (j, c) in coef.iter().enumerate() {
            for (i, o) in out.iter_mut().enumerate() {
                *o += c * q[(i, j)];
            }
        }
        out
    }

    /// `g(S)` as a dense matrix.
    pub fn matrix(&self, g: impl Fn(f64) -> c64) -> Mat<c64> {
        let n = self.values.len();
        let q = &self.vectors;
        let qc = Mat::<c64>::from_fn(n, n, |i, j| c64::new(q[(i, j)], 0.0));
        let scaled = Mat::<c64>::from_fn(n, n, |i, j| qc[(i, j)] * g(self.values[j]));
        &scaled * qc.transpose()
    }

    /// 2-norm condition number of `I - w S` (the matrix is normal).
    pub fn stability_condition(&self, w: c64) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for &s in &self.values {
            let v = (c64::new(1.0, 0.0) - w * s).norm();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi / lo
    }
}

/// Symmetric nonnegative variance profile with unit column sums.
#[derive(Clone, Debug)]
pub struct VarianceProfile {
    n: usize,
    w: usize,
    kind: ProfileKind,
    entries: Mat<f64>,
    c_w: f64,
    spec: ProfileSpec,
    spectrum: OnceLock<ProfileSpectrum>,
}

impl VarianceProfile {
    /// Wrap an arbitrary matrix. Only shape and nonnegativity are enforced;
    /// run [`verify_profile`] for the remaining conditions.
    pub fn custom(w: usize, entries: &[Vec<f64>]) -> Result<Self> {
        let n = entries.len();
        if n == 0 || w == 0 || w > n {
            return arg(format!("custom profile needs 1 <= W <= N, got N = {n}, W = {w}"));
        }
        if entries.iter().any(|r| r.len() != n) {
            return arg("custom profile must be square");
        }
        if entries.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return arg("custom profile entries must be finite and nonnegative");
        }
        let s = Mat::from_fn(n, n, |a, b| entries[a][b]);
        let max = entries.iter().flatten().fold(0.0f64, |m, v| m.max(*v));
        Ok(Self {
            n,
            w,
            kind: ProfileKind::Custom,
            entries: s,
            c_w: max * w as f64,
            spec: ProfileSpec::Custom { n, w, entries: entries.to_vec() },
            spectrum: OnceLock::new(),
        })
    }

    pub fn wigner(n: usize) -> Result<Self> {
        build_block_band(1, n, &[vec![1.0]])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn c_w(&self) -> f64 {
        self.c_w
    }

    pub fn spec(&self) -> &ProfileSpec {
        &self.spec
    }

    pub fn entries(&self) -> MatRef<'_, f64> {
        self.entries.as_ref()
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.entries[(a, b)]
    }

    pub fn row(&self, x: usize) -> Vec<f64> {
        (0..self.n).map(|a| self.entries[(x, a)]).collect()
    }

    /// `S v` for a real vector.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for b in 0..self.n {
            let vb = v[b];
            if vb == 0.0 {
                continue;
            }
            let col = self.entries.col(b);
            for (a, o) in out.iter_mut().enumerate() {
                *o += col[a] * vb;
            }
        }
        out
    }

    /// `S v` for a complex vector.
    pub fn apply_complex(&self, v: &[c64]) -> Vec<c64> {
        let mut out = vec![c64::new(0.0, 0.0); self.n];
        for b in 0..self.n {
            let vb = v[b];
            let col = self.entries.col(b);
            for (a, o) in out.iter_mut().enumerate() {
                *o += vb * col[a];
            }
        }
        out
    }

    /// Eigendecomposition of `S`, computed on first use and shared afterwards.
    pub fn spectrum(&self) -> &ProfileSpectrum {
        self.spectrum.get_or_init(|| {
            let evd = self
                .entries
                .self_adjoint_eigen(Side::Lower)
                .expect("symmetric eigendecomposition of a finite matrix");
            let values = (0..self.n).map(|i| evd.S()[i]).collect();
            ProfileSpectrum { values, vectors: evd.U().to_owned() }
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.spec)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: ProfileSpec = serde_json::from_str(s)?;
        spec.build()
    }
}

impl Serialize for VarianceProfile {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.spec.serialize(s)
    }
}

impl<'de> Deserialize<'de> for VarianceProfile {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = ProfileSpec::deserialize(d)?;
        spec.build().map_err(serde::de::Error::custom)
    }
}

fn check_sizes(n: usize, w: usize) -> Result<()> {
    if n == 0 || w == 0 || w > n {
        return arg(format!("need 1 <= W <= N, got N = {n}, W = {w}"));
    }
    Ok(())
}

/// `S_ab = f(|a-b|_N / W) / W`, rescaled by one common factor so every
/// column sums to one.
pub fn build_translation_invariant(n: usize, w: usize, f: &DecayProfile) -> Result<VarianceProfile> {
    check_sizes(n, w)?;
    let table: Vec<f64> = (0..=n / 2).map(|d| f.lattice(d, w)).collect();
    translation_invariant_from_table(n, w, table, f.clone())
}

/// Same as [`build_translation_invariant`] for an arbitrary shape function.
/// The lattice values are recorded so the profile still serializes.
pub fn build_translation_invariant_with(
    n: usize,
    w: usize,
    f: impl Fn(f64) -> f64,
) -> Result<VarianceProfile> {
    check_sizes(n, w)?;
    let table: Vec<f64> = (0..=n / 2).map(|d| f(d as f64 / w as f64)).collect();
    let decay = DecayProfile::Tabulated { values: table.clone() };
    translation_invariant_from_table(n, w, table, decay)
}

fn translation_invariant_from_table(
    n: usize,
    w: usize,
    table: Vec<f64>,
    decay: DecayProfile,
) -> Result<VarianceProfile> {
    if let Some(bad) = table.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return arg(format!("decay profile is negative or not finite at lattice distance {bad}"));
    }
    let wf = w as f64;
    let mass: f64 = (0..n).map(|a| table[pdist(a, 0, n)] / wf).sum();
    if mass <= 0.0 {
        return arg("decay profile has zero mass on the lattice");
    }
    let scale = 1.0 / mass;
    let lattice: Vec<f64> = table.iter().map(|v| v / wf * scale).collect();
    let entries = Mat::from_fn(n, n, |a, b| lattice[pdist(a, b, n)]);
    let peak = lattice.iter().fold(0.0f64, |m, v| m.max(*v));
    Ok(VarianceProfile {
        n,
        w,
        kind: ProfileKind::TranslationInvariant,
        entries,
        c_w: peak * wf,
        spec: ProfileSpec::TranslationInvariant { n, w, decay },
        spectrum: OnceLock::new(),
    })
}

/// Block profile `S_ab = sigma[a/W][b/W] / W` with `N = L W`.
pub fn build_block_band(l: usize, w: usize, sigma: &[Vec<f64>]) -> Result<VarianceProfile> {
    check_sizes(l * w, w)?;
    if sigma.len() != l || sigma.iter().any(|r| r.len() != l) {
        return arg(format!("sigma must be {l}x{l}"));
    }
    const TOL: f64 = 1e-12;
    for i in 0..l {
        for j in 0..l {
            let v = sigma[i][j];
            if !v.is_finite() || v < 0.0 {
                return arg(format!("sigma[{i}][{j}] = {v} is not a nonnegative number"));
            }
            if (v - sigma[j][i]).abs() > TOL {
                return arg("sigma is not symmetric");
            }
            let d = pdist(i, j, l);
            if (v - sigma[0][d]).abs() > TOL {
                return arg("sigma is not Toeplitz in the periodic distance");
            }
        }
    }
    for j in 0..l {
        let s: f64 = (0..l).map(|i| sigma[i][j]).sum();
        if (s - 1.0).abs() > TOL {
            return arg(format!("sigma column {j} sums to {s}, not 1"));
        }
    }
    let n = l * w;
    let wf = w as f64;
    let sym = |i: usize, j: usize| sigma[i.min(j)][i.max(j)];
    let mass: f64 = (0..n).map(|a| sym(a / w, 0) / wf).sum();
    let scale = 1.0 / mass;
    let entries = Mat::from_fn(n, n, |a, b| sym(a / w, b / w) / wf * scale);
    let peak = sigma.iter().flatten().fold(0.0f64, |m, v| m.max(*v)) / wf * scale;
    Ok(VarianceProfile {
        n,
        w,
        kind: ProfileKind::BlockBand,
        entries,
        c_w: peak * wf,
        spec: ProfileSpec::BlockBand { n, w, sigma: sigma.to_vec() },
        spectrum: OnceLock::new(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileCheck {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Largest decay exponent `D` with `f(x) <= C <x>^{-D-2}` visible on the lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecaySupport {
    /// The profile vanishes at the largest distance, so every `D` works.
    Unbounded,
    Exponent(f64),
    /// `N/2 < 2W`: the tail is not resolved at this size.
    Unresolved,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "W")]
    pub w: usize,
    pub c_w: f64,
    pub checks: Vec<ProfileCheck>,
    pub supported_decay: DecaySupport,
}

impl ProfileReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&ProfileCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Check symmetry, nonnegativity, column sums, the entry bound and
/// `W^2 >= N^{1+zeta0}`. Never fails; everything goes into the report.
pub fn verify_profile(p: &VarianceProfile, zeta0: f64) -> ProfileReport {
    let n = p.n;
    let s = &p.entries;
    let mut asym = 0.0f64;
    let mut min = f64::INFINITY;
    let mut max = 0.0f64;
    let mut col_dev = 0.0f64;
    for b in 0..n {
        let mut sum = 0.0;
        for a in 0..n {
            let v = s[(a, b)];
            asym = asym.max((v - s[(b, a)]).abs());
            min = min.min(v);
            max = max.max(v);
            sum += v;
        }
        col_dev = col_dev.max((sum - 1.0).abs());
    }
    let wf = p.w as f64;
    let band_bound = (n as f64).powf(1.0 + zeta0);
    let checks = vec![
        ProfileCheck { name: "symmetry".into(), measured: asym, bound: 0.0, pass: asym == 0.0 },
        ProfileCheck { name: "nonnegativity".into(), measured: min, bound: 0.0, pass: min >= 0.0 },
        ProfileCheck { name: "column_sums".into(), measured: col_dev, bound: 1e-12, pass: col_dev <= 1e-12 },
        ProfileCheck {
            name: "entry_bound".into(),
            measured: max * wf,
            bound: p.c_w,
            pass: max * wf <= p.c_w * (1.0 + 1e-12),
        },
        ProfileCheck {
            name: "bandwidth".into(),
            measured: wf * wf,
            bound: band_bound,
            pass: wf * wf >= band_bound,
        },
    ];
    ProfileReport { n, w: p.w, c_w: p.c_w, checks, supported_decay: decay_support(p) }
}

fn decay_support(p: &VarianceProfile) -> DecaySupport {
    let n = p.n;
    let half = n / 2;
    if half < 2 * p.w {
        return DecaySupport::Unresolved;
    }
    let envelope = |d: usize| {
        (0..n).fold(0.0f64, |m, a| m.max(p.get(a, (a + d) % n)).max(p.get((a + d) % n, a)))
    };
    let g0 = envelope(0);
    let gt = envelope(half);
    if gt == 0.0 {
        return DecaySupport::Unbounded;
    }
    let x = half as f64 / p.w as f64;
    let bracket = (1.0 + x * x).sqrt().ln();
    DecaySupport::Exponent((g0 / gt).ln() / bracket - 2.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryClass {
    #[default]
    ComplexHermitian,
    RealSymmetric,
}

/// Standardized entry law (mean 0, variance 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EntryDistribution {
    #[default]
    Gaussian,
    Rademacher,
    Uniform,
}

impl EntryDistribution {
    fn draw(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            EntryDistribution::Gaussian => rng.sample(StandardNormal),
            EntryDistribution::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            EntryDistribution::Uniform => {
                let r = 3f64.sqrt();
                rng.random_range(-r..r)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MatrixValues {
    Real(Mat<f64>),
    Complex(Mat<c64>),
}

impl MatrixValues {
    pub fn n(&self) -> usize {
        match self {
            MatrixValues::Real(m) => m.nrows(),
            MatrixValues::Complex(m) => m.nrows(),
        }
    }

    pub fn get(&self, a: usize, b: usize) -> c64 {
        match self {
            MatrixValues::Real(m) => c64::new(m[(a, b)], 0.0),
            MatrixValues::Complex(m) => m[(a, b)],
        }
    }

    pub fn to_complex(&self) -> Mat<c64> {
        match self {
            MatrixValues::Real(m) => Mat::from_fn(m.nrows(), m.ncols(), |a, b| c64::new(m[(a, b)], 0.0)),
            MatrixValues::Complex(m) => m.clone(),
        }
    }

    /// Row-major CSV; complex entries occupy two fields `re,im`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let n = self.n();
        let mut line = String::new();
        for a in 0..n {
            line.clear();
            for b in 0..n {
                if b > 0 {
                    line.push(',');
                }
                match self {
                    MatrixValues::Real(m) => line.push_str(&m[(a, b)].to_string()),
                    MatrixValues::Complex(m) => {
                        let z = m[(a, b)];
                        line.push_str(&format!("{},{}", z.re, z.im));
                    }
                }
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn frobenius(&self) -> f64 {
        let n = self.n();
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += self.get(a, b).norm_sqr();
            }
        }
        s.sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuStep {
    pub dt: f64,
    pub seed: u64,
}

/// Everything needed to regenerate a sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleOrigin {
    pub seed: u64,
    pub ou_steps: Vec<OuStep>,
}

/// `H = sqrt(S) ⊙ h` together with the standardized matrix `h`.
#[derive(Clone, Debug)]
pub struct MatrixSample {
    pub values: MatrixValues,
    pub standardized: MatrixValues,
    pub profile: Arc<VarianceProfile>,
    pub symmetry: SymmetryClass,
    pub distribution: EntryDistribution,
    pub origin: SampleOrigin,
}

impl MatrixSample {
    pub fn n(&self) -> usize {
        self.profile.n()
    }

    pub(crate) fn from_standardized(
        profile: Arc<VarianceProfile>,
        symmetry: SymmetryClass,
        distribution: EntryDistribution,
        standardized: MatrixValues,
        origin: SampleOrigin,
    ) -> Self {
        let n = profile.n();
        let root = Mat::from_fn(n, n, |a, b| profile.get(a.min(b), a.max(b)).sqrt());
        let values = match &standardized {
            MatrixValues::Real(h) => MatrixValues::Real(Mat::from_fn(n, n, |a, b| root[(a, b)] * h[(a, b)])),
            MatrixValues::Complex(h) => {
                MatrixValues::Complex(Mat::from_fn(n, n, |a, b| h[(a, b)] * root[(a, b)]))
            }
        };
        Self { values, standardized, profile, symmetry, distribution, origin }
    }
}

fn entry_stream(base: &ChaCha8Rng, a: usize, b: usize) -> ChaCha8Rng {
    let mut rng = base.clone();
    rng.set_stream(((a as u64) << 32) | b as u64);
    rng
}

/// Standardized symmetric/Hermitian matrix `h`. Entry `(a, b)` with `a <= b`
/// depends only on `(seed, a, b)`.
pub fn standardized_entries(
    n: usize,
    symmetry: SymmetryClass,
    dist: EntryDistribution,
    seed: u64,
) -> MatrixValues {
    let base = ChaCha8Rng::seed_from_u64(seed);
    match symmetry {
        SymmetryClass::RealSymmetric => {
            let mut h = Mat::<f64>::zeros(n, n);
            for a in 0..n {
                for b in a..n {
                    let v = dist.draw(&mut entry_stream(&base, a, b));
                    h[(a, b)] = v;
                    h[(b, a)] = v;
                }
            }
            MatrixValues::Real(h)
        }
        SymmetryClass::ComplexHermitian => {
            let mut h = Mat::<c64>::zeros(n, n);
            let r = std::f64::consts::FRAC_1_SQRT_2;
            for a in 0..n {
                let mut rng = entry_stream(&base, a, a);
                h[(a, a)] = c64::new(dist.draw(&mut rng), 0.0);
                for b in a + 1..n {
                    let mut rng = entry_stream(&base, a, b);
                    let x = dist.draw(&mut rng);
                    let y = dist.draw(&mut rng);
                    let v = c64::new(x * r, y * r);
                    h[(a, b)] = v;
                    h[(b, a)] = v.conj();
                }
            }
            MatrixValues::Complex(h)
        }
    }
}

/// Draw `H = sqrt(S) ⊙ h` for the given profile, symmetry, entry law and seed.
pub fn sample_matrix(
    p: &Arc<VarianceProfile>,
    symmetry: SymmetryClass,
    dist: EntryDistribution,
    seed: u64,
) -> MatrixSample {
    let h = standardized_entries(p.n(), symmetry, dist, seed);
    MatrixSample::from_standardized(
        Arc::clone(p),
        symmetry,
        dist,
        h,
        SampleOrigin { seed, ou_steps: Vec::new() },
    )
}

/// Seed of trial `index` under a master seed.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.random()
}
