use std::fs::File;
use std::io::BufWriter;
use std::sync::Arc;

use faer::Mat;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::report::{write_batch_csv, BatchRow, Relation, Report};
use super::ExperimentConfig;
use crate::chains::{chain_trace, eigendecompose, loss_exponents, ResolventCache};
use crate::cplx::{self, c64};
use crate::ensemble::{sample_matrix, trial_seed, VarianceProfile};
use crate::error::Result;
use crate::exec::try_map_indexed;
use crate::kernels::{size_function, upsilon_build, ControlFunction, SizeFunctionInputs, SizeMode, UpsArg};
use crate::mterms::{m_term_raw, make_special_observable, ChainSpec};
use crate::semicircle::SpectralPoint;
use crate::stats::Moments;

const TUPLE_SALT: u64 = 0x5eed_7u64 << 40;

/// Deterministic part of one chain length at one spectral point.
struct ChainPlan {
    k: usize,
    /// `x_0..x_{k-1}`; the last site carries the test observable.
    tuples: Vec<Vec<usize>>,
    m_av: Vec<c64>,
    denom_av: Vec<f64>,
    /// `(a, b, x_0..x_{k-2})` of `<e_a, G_0 S^{x_0} .. G_{k-1} e_b>`.
    iso: Vec<(usize, usize, Vec<usize>)>,
    m_iso: Vec<c64>,
    denom_iso: Vec<f64>,
    interior: Vec<usize>,
}

struct ZPlan {
    point: SpectralPoint,
    ups: ControlFunction,
    chains: Vec<ChainPlan>,
    /// `m` times the row sums of `S`: the M-term of `Tr[G S^x]`.
    m_rows: Vec<c64>,
}

#[derive(Clone, Copy, Default)]
struct Best {
    psi: f64,
    value: f64,
    index: usize,
}

impl Best {
    fn offer(&mut self, psi: f64, value: f64, index: usize) {
        if psi > self.psi || self.psi.is_nan() {
            *self = Best { psi, value, index };
        }
    }
}

struct ChainSample {
    av: Best,
    iso: Best,
    /// Fluctuation `Tr[(G..G - M) A]` of the first tuple.
    first: c64,
}

struct ZSample {
    chains: Vec<ChainSample>,
    trace_constant: f64,
    entrywise: f64,
}

fn specials(p: &VarianceProfile) -> Vec<Vec<c64>> {
    (0..p.n()).map(|x| p.row(x).into_iter().map(cplx::real).collect()).collect()
}

fn alternating(point: &SpectralPoint, k: usize) -> Vec<SpectralPoint> {
    (0..k).map(|j| if j % 2 == 0 { *point } else { point.conj() }).collect()
}

fn tuple_id(z: usize, sites: &[usize]) -> String {
    let s: Vec<String> = sites.iter().map(|x| x.to_string()).collect();
    format!("z{z}:{}", s.join("-"))
}

fn iso_id(z: usize, a: usize, b: usize, sites: &[usize]) -> String {
    let s: Vec<String> = sites.iter().map(|x| x.to_string()).collect();
    format!("z{z}:{a}/{}/{b}", s.join("-"))
}

impl ZPlan {
    fn new(cfg: &ExperimentConfig, p: &VarianceProfile, rows: &[Vec<c64>], index: usize, point: SpectralPoint) -> Result<Self> {
        let n = p.n();
        let ups = upsilon_build(n, p.w(), point.eta, cfg.control)?;
        let le = ups.ell_eta();
        let mut chains = Vec::new();
        for &k in &cfg.chain_lengths {
            let (alpha, beta) = loss_exponents(k, cfg.kmax)?;
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(cfg.seed ^ TUPLE_SALT, (index * 64 + k) as u64));
            let interior: Vec<usize> = sample(&mut rng, n, cfg.interior_sites.min(n)).into_iter().collect();
            let draw_sites = |rng: &mut ChaCha8Rng, len: usize| -> Vec<usize> {
                (0..len)
                    .map(|j| {
                        if j > 0 && j + 1 < k {
                            interior[rng.random_range(0..interior.len())]
                        } else {
                            rng.random_range(0..n)
                        }
                    })
                    .collect()
            };
            let tuples: Vec<Vec<usize>> = (0..cfg.tuples).map(|_| draw_sites(&mut rng, k)).collect();
            let iso: Vec<(usize, usize, Vec<usize>)> = (0..cfg.vectors)
                .map(|i| {
                    let a = rng.random_range(0..n);
                    let b = if i % 2 == 0 { a } else { rng.random_range(0..n) };
                    (a, b, draw_sites(&mut rng, k - 1))
                })
                .collect();
            let ms: Vec<c64> = alternating(&point, k).iter().map(|z| z.m).collect();
            let mut m_av = Vec::with_capacity(tuples.len());
            let mut denom_av = Vec::with_capacity(tuples.len());
            for t in &tuples {
                let obs: Vec<&[c64]> = t[..k - 1].iter().map(|x| rows[*x].as_slice()).collect();
                let m = m_term_raw(p, &ms, &obs)?;
                m_av.push(m.iter().zip(&rows[t[k - 1]]).map(|(a, b)| a * b).sum());
                let args: Vec<UpsArg> = t.iter().map(|x| UpsArg::Index(*x)).collect();
                denom_av.push(le.powf(beta) * size_function(&SizeFunctionInputs::av(&ups, args), SizeMode::Av)?);
            }
            let mut m_iso = Vec::with_capacity(iso.len());
            let mut denom_iso = Vec::with_capacity(iso.len());
            for (a, b, sites) in &iso {
                let obs: Vec<&[c64]> = sites.iter().map(|x| rows[*x].as_slice()).collect();
                let m = m_term_raw(p, &ms, &obs)?;
                m_iso.push(if a == b { m[*a] } else { c64::new(0.0, 0.0) });
                let mut args = vec![UpsArg::Index(*a)];
                args.extend(sites.iter().map(|x| UpsArg::Index(*x)));
                args.push(UpsArg::Index(*b));
                denom_iso.push(le.powf(alpha) * size_function(&SizeFunctionInputs::iso(&ups, args), SizeMode::Iso)?);
            }
            chains.push(ChainPlan { k, tuples, m_av, denom_av, iso, m_iso, denom_iso, interior });
        }
        let m_rows = rows.iter().map(|r| point.m * r.iter().sum::<c64>()).collect();
        Ok(Self { point, ups, chains, m_rows })
    }

    fn measure(&self, cache: &ResolventCache, p: &VarianceProfile, rows: &[Vec<c64>], s_c: &Mat<c64>) -> Result<ZSample> {
        let n = p.n();
        let g = cache.resolvent(self.point.z)?;
        let gc = g.adjoint().to_owned();
        let gs = |j: usize| if j % 2 == 0 { &g } else { &gc };
        let le = self.ups.ell_eta();
        let diag: Vec<c64> = (0..n).map(|a| g[(a, a)]).collect();
        let t1 = p.apply_complex(&diag);
        let trace_constant = (0..n).map(|x| (t1[x] - self.m_rows[x]).norm() * le).fold(0.0, f64::max);
        let m = self.point.m;
        let mut entrywise = 0.0f64;
        for b in 0..n {
            for a in 0..n {
                let d = if a == b { g[(a, b)] - m } else { g[(a, b)] };
                entrywise = entrywise.max(d.norm() / self.ups.get(a, b).sqrt());
            }
        }
        let mut chains = Vec::with_capacity(self.chains.len());
        for plan in &self.chains {
            let k = plan.k;
            let traces: Vec<c64> = match k {
                1 => plan.tuples.iter().map(|t| t1[t[0]]).collect(),
                2 => {
                    let f = Mat::<c64>::from_fn(n, n, |a, b| g[(a, b)] * gc[(b, a)]);
                    let t = &(s_c * &f) * s_c;
                    plan.tuples.iter().map(|tp| t[(tp[1], tp[0])]).collect()
                }
                3 => {
                    let mut out = vec![c64::new(0.0, 0.0); plan.tuples.len()];
                    for &y in &plan.interior {
                        let which: Vec<usize> = (0..plan.tuples.len()).filter(|i| plan.tuples[*i][1] == y).collect();
                        if which.is_empty() {
                            continue;
                        }
                        let scaled = Mat::<c64>::from_fn(n, n, |a, b| g[(a, b)] * rows[y][a].re);
                        let pm = &gc * &scaled;
                        let f = Mat::<c64>::from_fn(n, n, |a, b| g[(a, b)] * pm[(b, a)]);
                        let t = &(s_c * &f) * s_c;
                        for i in which {
                            let tp = &plan.tuples[i];
                            out[i] = t[(tp[2], tp[0])];
                        }
                    }
                    out
                }
                _ => plan
                    .tuples
                    .iter()
                    .map(|tp| {
                        let obs = tp[..k - 1].iter().map(|x| make_special_observable(p, *x)).collect::<Result<Vec<_>>>()?;
                        let spec = ChainSpec::new(alternating(&self.point, k), obs)?
                            .with_test(make_special_observable(p, tp[k - 1])?)?;
                        Ok(chain_trace(cache, &spec, false)?.value)
                    })
                    .collect::<Result<_>>()?,
            };
            let mut av = Best::default();
            for (i, tr) in traces.iter().enumerate() {
                let fl = (tr - plan.m_av[i]).norm();
                av.offer(fl / plan.denom_av[i], fl, i);
            }
            let mut iso = Best::default();
            for (i, (a, b, sites)) in plan.iso.iter().enumerate() {
                let mut v: Vec<c64> = (0..n).map(|c| gs(k - 1)[(c, *b)]).collect();
                for j in (0..k - 1).rev() {
                    let sv: Vec<c64> = v.iter().zip(&rows[sites[j]]).map(|(x, s)| x * s.re).collect();
                    if j == 0 {
                        let g0 = gs(0);
                        v = vec![(0..n).map(|c| g0[(*a, c)] * sv[c]).sum()];
                    } else {
                        let gj = gs(j);
                        v = (0..n).map(|c| (0..n).map(|d| gj[(c, d)] * sv[d]).sum()).collect();
                    }
                }
                let val = if k == 1 { v[*a] } else { v[0] };
                let fl = (val - plan.m_iso[i]).norm();
                iso.offer(fl / plan.denom_iso[i], fl, i);
            }
            chains.push(ChainSample { av, iso, first: traces[0] - plan.m_av[0] });
        }
        Ok(ZSample { chains, trace_constant, entrywise })
    }
}

struct Batch {
    p: Arc<VarianceProfile>,
    plans: Vec<ZPlan>,
    seeds: Vec<u64>,
    samples: Vec<Vec<ZSample>>,
}

fn run_batch(cfg: &ExperimentConfig) -> Result<Batch> {
    cfg.validate()?;
    let p = Arc::new(cfg.profile.build()?);
    let n = p.n();
    let points = cfg.points(p.w(), n)?;
    let rows = specials(&p);
    let plans = points
        .iter()
        .enumerate()
        .map(|(i, z)| ZPlan::new(cfg, &p, &rows, i, *z))
        .collect::<Result<Vec<_>>>()?;
    let s_c = Mat::<c64>::from_fn(n, n, |a, b| cplx::real(p.get(a, b)));
    let seeds: Vec<u64> = (0..cfg.samples).map(|i| trial_seed(cfg.seed, i as u64)).collect();
    let samples = try_map_indexed(cfg.samples, cfg.execution, |i| {
        let cache = eigendecompose(&sample_matrix(&p, cfg.symmetry, cfg.distribution, seeds[i]))?;
        plans.iter().map(|plan| plan.measure(&cache, &p, &rows, &s_c)).collect::<Result<Vec<_>>>()
    })?;
    Ok(Batch { p, plans, seeds, samples })
}

/// Largest `Ψ^av`, `Ψ^iso` of alternating chains `G(z) S^x G(z̄) S^y ..`
/// over sampled index tuples, the one-point trace bound and the entrywise
/// bound, at every point of the grid.
pub fn run_local_law(cfg: &ExperimentConfig) -> Result<Report> {
    let batch = run_batch(cfg)?;
    let n = batch.p.n();
    let mut report = Report::new("locallaw", cfg);
    let tolerance = (n as f64).powf(cfg.xi);
    let entry_bound = (n as f64).powf(cfg.margins.entrywise_xi);
    let mut batch_rows = Vec::new();
    for (zi, plan) in batch.plans.iter().enumerate() {
        let eta = Some(plan.point.eta);
        for (ci, chain) in plan.chains.iter().enumerate() {
            let (mut av, mut iso) = (0.0f64, 0.0f64);
            for (s, per_z) in batch.samples.iter().enumerate() {
                let c = &per_z[zi].chains[ci];
                av = av.max(c.av.psi);
                iso = iso.max(c.iso.psi);
                batch_rows.push(BatchRow {
                    seed: batch.seeds[s],
                    k: chain.k,
                    kind: "av".into(),
                    tuple: tuple_id(zi, &chain.tuples[c.av.index]),
                    value: c.av.value,
                    psi: c.av.psi,
                });
                let (a, b, sites) = &chain.iso[c.iso.index];
                batch_rows.push(BatchRow {
                    seed: batch.seeds[s],
                    k: chain.k,
                    kind: "iso".into(),
                    tuple: iso_id(zi, *a, *b, sites),
                    value: c.iso.value,
                    psi: c.iso.psi,
                });
            }
            report.check(format!("psi_av_k{}_z{zi}", chain.k), av, Relation::AtMost, tolerance, eta);
            report.check(format!("psi_iso_k{}_z{zi}", chain.k), iso, Relation::AtMost, tolerance, eta);
        }
        let trace = batch.samples.iter().map(|s| s[zi].trace_constant).fold(0.0, f64::max);
        report.check(format!("trace_k1_z{zi}"), trace, Relation::AtMost, cfg.margins.local_law_trace, eta);
        let good = batch.samples.iter().filter(|s| s[zi].entrywise <= entry_bound).count();
        let fraction = good as f64 / batch.samples.len() as f64;
        report.check(
            format!("entrywise_fraction_z{zi}"),
            fraction,
            Relation::AtLeast,
            cfg.margins.entrywise_fraction,
            eta,
        );
        let worst = batch.samples.iter().map(|s| s[zi].entrywise).fold(0.0, f64::max);
        report.observe(format!("entrywise_max_z{zi}"), worst);
        report.observe(format!("ell_eta_z{zi}"), plan.ups.ell_eta());
    }
    if let Some(path) = cfg.artifact("locallaw_batch.csv")? {
        write_batch_csv(&batch_rows, BufWriter::new(File::create(&path)?))?;
        report.artifacts.push(path);
    }
    Ok(report)
}

/// Monte Carlo means of the first sampled chain of every length against its
/// M-term, real and imaginary parts separately, in units of the standard
/// error.
pub fn run_global_law(cfg: &ExperimentConfig) -> Result<Report> {
    let batch = run_batch(cfg)?;
    let mut report = Report::new("globallaw", cfg);
    for (zi, plan) in batch.plans.iter().enumerate() {
        let eta = Some(plan.point.eta);
        for (ci, chain) in plan.chains.iter().enumerate() {
            let re: Moments = batch.samples.iter().map(|s| s[zi].chains[ci].first.re).collect();
            let im: Moments = batch.samples.iter().map(|s| s[zi].chains[ci].first.im).collect();
            for (part, mom) in [("re", re), ("im", im)] {
                let se = mom.std_error();
                let z = if se > 0.0 { mom.mean.abs() / se } else if mom.mean == 0.0 { 0.0 } else { f64::INFINITY };
                report.check(
                    format!("mean_k{}_{part}_z{zi}", chain.k),
                    z,
                    Relation::AtMost,
                    cfg.margins.global_law_se,
                    eta,
                );
                report.observe(format!("bias_k{}_{part}_z{zi}", chain.k), mom.mean);
                report.observe(format!("std_error_k{}_{part}_z{zi}", chain.k), se);
            }
            report.observe(format!("m_term_k{}_re_z{zi}", chain.k), chain.m_av[0].re);
            report.observe(format!("m_term_k{}_im_z{zi}", chain.k), chain.m_av[0].im);
        }
    }
    Ok(report)
}
