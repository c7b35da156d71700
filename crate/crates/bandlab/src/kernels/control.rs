//! Control functions `Υ_η`, the observable norm `|||·|||` and size functions.

use faer::Mat;
use microlp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use crate::cplx::c64;
use crate::ensemble::{pdist, VarianceProfile};
use crate::error::{arg, Error, Result};
use crate::mterms::{DiagObservable, ObservableTag};

use super::localization_length;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ControlFamily {
    /// `(ℓη)^{-1} (1 + d/ℓ)^{-D}`.
    Polynomial { power: f64 },
    /// `(ℓη)^{-1} exp(-c0 d/ℓ) + (ℓ/η) N^{-D}`.
    Exponential { rate: f64, power: f64 },
    Custom,
}

impl ControlFamily {
    fn entry(&self, d: f64, ell: f64, eta: f64, n: usize) -> f64 {
        let base = 1.0 / (ell * eta);
        match *self {
            ControlFamily::Polynomial { power } => base * (1.0 + d / ell).powf(-power),
            ControlFamily::Exponential { rate, power } => {
                base * (-rate * d / ell).exp() + ell / eta * (n as f64).powf(-power)
            }
            ControlFamily::Custom => f64::NAN,
        }
    }
}

/// One member `Υ_η` of a control family together with its measured
/// constants: `c1` is the smallest constant in the norm bounds and `d_prime`
/// the smallest `D'` with `min Υ >= N^{-2D'}`.
#[derive(Clone, Debug)]
pub struct ControlFunction {
    pub values: Mat<f64>,
    pub eta: f64,
    pub ell: f64,
    pub n: usize,
    pub w: usize,
    pub family: ControlFamily,
    pub c1: f64,
    pub d_prime: f64,
}

impl ControlFunction {
    /// Wrap an arbitrary positive symmetric matrix.
    pub fn custom(values: Mat<f64>, w: usize, eta: f64) -> Result<Self> {
        let n = values.nrows();
        if values.ncols() != n || n == 0 {
            return arg("control function must be a nonempty square matrix");
        }
        if !(eta > 0.0) {
            return arg("control function needs eta > 0");
        }
        for i in 0..n {
            for j in 0..n {
                let v = values[(i, j)];
                if !(v > 0.0 && v.is_finite()) {
                    return arg(format!("control function entry ({i}, {j}) = {v} is not positive"));
                }
            }
        }
        let ell = localization_length(w, n, eta);
        Ok(Self::finish(values, eta, ell, n, w, ControlFamily::Custom))
    }

    fn finish(values: Mat<f64>, eta: f64, ell: f64, n: usize, w: usize, family: ControlFamily) -> Self {
        let mut max_entry = 0.0f64;
        let mut min_entry = f64::INFINITY;
        let mut max_row = 0.0f64;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                let v = values[(i, j)];
                max_entry = max_entry.max(v);
                min_entry = min_entry.min(v);
                row += v;
            }
            max_row = max_row.max(row);
        }
        let c1 = (max_entry * ell * eta).max(max_row * eta);
        let d_prime = if n > 1 { (-min_entry.ln() / (2.0 * (n as f64).ln())).max(0.0) } else { 0.0 };
        Self { values, eta, ell, n, w, family, c1, d_prime }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[(x, y)]
    }

    pub fn ell_eta(&self) -> f64 {
        self.ell * self.eta
    }

    pub fn max_entry(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                m = m.max(self.values[(i, j)]);
            }
        }
        m
    }

    pub fn max_column_sum(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.values[(i, j)]).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// `Υ_η` of the given family on the periodic lattice of size `n`.
pub fn upsilon_build(n: usize, w: usize, eta: f64, family: ControlFamily) -> Result<ControlFunction> {
    if n == 0 || w == 0 || w > n {
        return arg(format!("need 1 <= W <= N, got N = {n}, W = {w}"));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return arg(format!("eta must be positive, got {eta}"));
    }
    match family {
        ControlFamily::Polynomial { power } if !(power >= 6.0) => {
            return arg(format!("polynomial control needs D >= 6, got {power}"));
        }
        ControlFamily::Exponential { rate, power } if !(rate > 0.0 && power >= 2.0) => {
            return arg(format!("exponential control needs c0 > 0 and D >= 2, got ({rate}, {power})"));
        }
        ControlFamily::Custom => return arg("custom control functions are built with ControlFunction::custom"),
        _ => {}
    }
    let ell = localization_length(w, n, eta);
    let profile: Vec<f64> = (0..n).map(|d| family.entry(pdist(0, d, n) as f64, ell, eta, n)).collect();
    let values = Mat::from_fn(n, n, |i, j| profile[pdist(i, j, n)]);
    Ok(ControlFunction::finish(values, eta, ell, n, w, family))
}

/// Optimum of the covering program defining `|||A|||` and one minimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripleNorm {
    pub value: f64,
    pub certificate: Vec<f64>,
}

/// `min Σ a_i` subject to `|A_qq| <= Σ_i a_i S_iq`, `a >= 0`.
///
/// Special observables `S^x` return `e_x` directly. This is optimal: summing
/// the constraints over `q` gives `Σ a_i >= Σ_q |A_qq|`, which equals 1 for
/// `S^x`.
pub fn triple_norm(p: &VarianceProfile, a: &DiagObservable) -> Result<TripleNorm> {
    let n = p.n();
    if a.diag.len() != n {
        return arg(format!("observable has length {}, profile has N = {n}", a.diag.len()));
    }
    if let ObservableTag::Special(x) = a.tag {
        let mut e = vec![0.0; n];
        e[x] = 1.0;
        return Ok(TripleNorm { value: 1.0, certificate: e });
    }
    let target: Vec<f64> = a.diag.iter().map(|v| v.norm()).collect();
    if target.iter().all(|t| *t == 0.0) {
        return Ok(TripleNorm { value: 0.0, certificate: vec![0.0; n] });
    }
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = (0..n).map(|_| lp.add_var(1.0, (0.0, f64::INFINITY))).collect();
    let s = p.entries();
    let mut row = Vec::with_capacity(n);
    for (q, &t) in target.iter().enumerate() {
        if t == 0.0 {
            continue;
        }
        row.clear();
        for (i, v) in vars.iter().enumerate() {
            let c = s[(i, q)];
            if c != 0.0 {
                row.push((*v, c));
            }
        }
        if row.is_empty() {
            return Err(Error::Numerical(format!("column {q} of S vanishes; |||A||| is infinite")));
        }
        lp.add_constraint(&row, ComparisonOp::Ge, t);
    }
    let solution = lp
        .solve()
        .map_err(|e| Error::Numerical(format!("observable norm LP: {e}")))?
        .into_solution()
        .map_err(|_| Error::Numerical("observable norm LP was interrupted".into()))?;
    let certificate: Vec<f64> = vars.iter().map(|v| solution.var_value(*v).max(0.0)).collect();
    Ok(TripleNorm { value: solution.objective(), certificate })
}

/// Argument of a generalized control function: a lattice site, a test
/// vector, or a diagonal observable carrying its norm certificate.
#[derive(Clone, Copy, Debug)]
pub enum UpsArg<'a> {
    Index(usize),
    Vector(&'a [c64]),
    Observable(&'a DiagObservable),
}

pub type SizeArg<'a> = UpsArg<'a>;

enum Weights {
    Point(usize),
    Dense(Vec<f64>),
}

impl Weights {
    fn of(input: UpsArg<'_>, n: usize) -> Result<Self> {
        match input {
            UpsArg::Index(x) if x < n => Ok(Weights::Point(x)),
            UpsArg::Index(x) => arg(format!("index {x} out of range for N = {n}")),
            UpsArg::Vector(u) if u.len() == n => Ok(Weights::Dense(u.iter().map(|v| v.norm_sqr()).collect())),
            UpsArg::Vector(u) => arg(format!("vector has length {}, expected {n}", u.len())),
            UpsArg::Observable(a) => match &a.certificate {
                Some(c) if c.len() == n => Ok(Weights::Dense(c.clone())),
                Some(c) => arg(format!("certificate has length {}, expected {n}", c.len())),
                None => arg("observable has no norm certificate; compute triple_norm first"),
            },
        }
    }

    fn norm(&self) -> f64 {
        match self {
            Weights::Point(_) => 1.0,
            Weights::Dense(v) => v.iter().sum(),
        }
    }
}

/// `Υ_{uv}`, `Υ_{uA}` or `Υ_{AB}` depending on the argument kinds.
pub fn generalized_upsilon(u: UpsArg<'_>, v: UpsArg<'_>, ups: &ControlFunction) -> Result<f64> {
    let n = ups.n;
    let wu = Weights::of(u, n)?;
    let wv = Weights::of(v, n)?;
    Ok(pair_weight(&wu, &wv, ups))
}

fn pair_weight(wu: &Weights, wv: &Weights, ups: &ControlFunction) -> f64 {
    let n = ups.n;
    match (wu, wv) {
        (Weights::Point(x), Weights::Point(y)) => ups.get(*x, *y),
        (Weights::Point(x), Weights::Dense(b)) | (Weights::Dense(b), Weights::Point(x)) => {
            (0..n).filter(|j| b[*j] != 0.0).map(|j| ups.get(*x, j) * b[j]).sum()
        }
        (Weights::Dense(a), Weights::Dense(b)) => {
            let mut total = 0.0;
            for i in (0..n).filter(|i| a[*i] != 0.0) {
                let mut inner = 0.0;
                for j in (0..n).filter(|j| b[*j] != 0.0) {
                    inner += ups.get(i, j) * b[j];
                }
                total += a[i] * inner;
            }
            total
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeMode {
    Iso,
    Av,
}

/// Arguments of a size function of chain length `k`.
///
/// Isotropic mode takes `k + 1` arguments `u, A_1, .., A_{k-1}, v`; averaged
/// mode takes `k` observables `A_1, .., A_k`. `η` and `ℓ` are those of
/// `upsilon`.
#[derive(Clone, Debug)]
pub struct SizeFunctionInputs<'a> {
    pub k: usize,
    pub args: Vec<SizeArg<'a>>,
    pub upsilon: &'a ControlFunction,
}

impl<'a> SizeFunctionInputs<'a> {
    pub fn iso(upsilon: &'a ControlFunction, args: Vec<SizeArg<'a>>) -> Self {
        Self { k: args.len().saturating_sub(1), args, upsilon }
    }

    pub fn av(upsilon: &'a ControlFunction, args: Vec<SizeArg<'a>>) -> Self {
        Self { k: args.len(), args, upsilon }
    }
}

pub fn size_function(inputs: &SizeFunctionInputs<'_>, mode: SizeMode) -> Result<f64> {
    let k = inputs.k;
    let ups = inputs.upsilon;
    let le = ups.ell_eta();
    if k == 0 {
        return arg("size functions need k >= 1");
    }
    let expected = match mode {
        SizeMode::Iso => k + 1,
        SizeMode::Av => k,
    };
    if inputs.args.len() != expected {
        return arg(format!("{mode:?} size function of length {k} needs {expected} arguments, got {}", inputs.args.len()));
    }
    if mode == SizeMode::Av && inputs.args.iter().any(|a| matches!(a, UpsArg::Vector(_))) {
        return arg("averaged size functions take observables, not vectors");
    }
    let weights: Vec<Weights> = inputs.args.iter().map(|a| Weights::of(*a, ups.n)).collect::<Result<_>>()?;
    match mode {
        SizeMode::Iso => {
            let prod: f64 = weights.windows(2).map(|p| pair_weight(&p[0], &p[1], ups)).product();
            Ok(le.powf(-((k - 1) as f64) / 2.0) * prod.sqrt())
        }
        SizeMode::Av if k == 1 => Ok(weights[0].norm() / le),
        SizeMode::Av => {
            let mut prod = 1.0;
            for j in 0..k {
                prod *= pair_weight(&weights[j], &weights[(j + 1) % k], ups);
            }
            Ok(le.powf(-(k as f64) / 2.0) * prod.sqrt())
        }
    }
}
