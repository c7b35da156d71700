mod common;

use bandlab::c64;
use bandlab::chains::*;
use bandlab::ensemble::{sample_matrix, trial_seed, EntryDistribution, SymmetryClass};
use bandlab::kernels::{upsilon_build, ControlFamily};
use bandlab::mterms::{make_special_observable, ChainSpec, DiagObservable};
use bandlab::stats::Moments;
use common::*;
use faer::linalg::solvers::Solve;
use faer::Mat;
use proptest::prelude::*;

const CPLX: SymmetryClass = SymmetryClass::ComplexHermitian;
const REAL: SymmetryClass = SymmetryClass::RealSymmetric;
const GAUSS: EntryDistribution = EntryDistribution::Gaussian;

fn unit(n: usize, i: usize) -> Vec<c64> {
    let mut v = vec![c64::new(0.0, 0.0); n];
    v[i] = c64::new(1.0, 0.0);
    v
}

fn frob(m: &Mat<c64>) -> f64 {
    let mut s = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            s += m[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

#[test]
fn reconstruction_and_direct_solve() {
    let p = poly_profile(64, 8);
    for sym in [CPLX, REAL] {
        let s = sample_matrix(&p, sym, GAUSS, 3);
        let cache = eigendecompose(&s).unwrap();
        let h = s.values.to_complex();
        let rec = cache.reconstruct();
        let diff = Mat::<c64>::from_fn(64, 64, |i, j| rec[(i, j)] - h[(i, j)]);
        assert!(frob(&diff) <= 1e-9 * frob(&h));
        assert!(cache.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        let z = c64::new(0.3, 0.05);
        let a = Mat::<c64>::from_fn(64, 64, |i, j| h[(i, j)] - if i == j { z } else { c64::new(0.0, 0.0) });
        let e = Mat::<c64>::from_fn(64, 1, |i, _| if i == 17 { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) });
        let x = a.partial_piv_lu().solve(&e);
        let g = cache.resolvent(z).unwrap();
        let y = cache.apply_resolvent(z, &unit(64, 17)).unwrap();
        for i in 0..64 {
            assert!((g[(i, 17)] - x[(i, 0)]).norm() < 1e-8);
            assert!((y[i] - x[(i, 0)]).norm() < 1e-8);
        }
    }
}

#[test]
fn spectrum_stays_near_semicircle_support() {
    let p = poly_profile(400, 40);
    let cache = eigendecompose(&sample_matrix(&p, CPLX, GAUSS, 9)).unwrap();
    assert!(cache.eigenvalues[0] >= -2.3 && cache.eigenvalues[399] <= 2.3);
}

#[test]
fn trace_identities() {
    let p = poly_profile(96, 12);
    let cache = eigendecompose(&sample_matrix(&p, CPLX, GAUSS, 5)).unwrap();
    let z = point(0.2, 0.03, &p);
    let id = DiagObservable::identity(96);
    let c1 = ChainSpec::new(vec![z], vec![]).unwrap().with_test(id.clone()).unwrap();
    let tr = chain_trace(&cache, &c1, false).unwrap().value;
    let direct: c64 = cache.eigenvalues.iter().map(|l| (c64::new(*l, 0.0) - z.z).inv()).sum();
    assert!(rel(tr, direct) < 1e-12);
    // Ward identity.
    let c2 = ChainSpec::new(vec![z, z.conj()], vec![id.clone()]).unwrap().with_test(id.clone()).unwrap();
    let gg = chain_trace(&cache, &c2, false).unwrap().value;
    let ward = direct.im / z.eta;
    assert!((gg.re - ward).abs() / ward <= 1e-9 && gg.im.abs() <= 1e-9 * ward);
    // Tr[G S^x G* S^y] is real and nonnegative.
    for (x, y) in [(0, 0), (3, 50), (10, 90)] {
        let c = ChainSpec::new(vec![z, z.conj()], vec![make_special_observable(&p, x).unwrap()])
            .unwrap()
            .with_test(make_special_observable(&p, y).unwrap())
            .unwrap();
        let v = chain_trace(&cache, &c, false).unwrap().value;
        assert!(v.re > 0.0 && v.im.abs() <= 1e-10 * v.re);
    }
}

#[test]
fn chain_associativity() {
    let p = poly_profile(48, 6);
    let cache = eigendecompose(&sample_matrix(&p, REAL, GAUSS, 8)).unwrap();
    let zs = [point(0.1, 0.1, &p), point(-0.3, -0.05, &p), point(0.5, 0.08, &p)];
    let a1 = make_special_observable(&p, 4).unwrap();
    let a2 = DiagObservable::from_real(&(0..48).map(|i| (i as f64).cos()).collect::<Vec<_>>());
    let a3 = make_special_observable(&p, 30).unwrap();
    let g: Vec<Mat<c64>> = zs.iter().map(|z| cache.resolvent(z.z).unwrap()).collect();
    let d = |a: &DiagObservable| Mat::<c64>::from_fn(48, 48, |i, j| if i == j { a.diag[i] } else { c64::new(0.0, 0.0) });
    let left = &(&(&(&g[0] * &d(&a1)) * &g[1]) * &d(&a2)) * &g[2];
    let right = &g[0] * &(&(&(&d(&a1) * &g[1]) * &d(&a2)) * &g[2]);
    assert!(frob(&Mat::<c64>::from_fn(48, 48, |i, j| left[(i, j)] - right[(i, j)])) <= 1e-10 * frob(&left));
    let full = &left * &d(&a3);
    let direct: c64 = (0..48).map(|i| full[(i, i)]).sum();
    let c = ChainSpec::new(zs.to_vec(), vec![a1, a2]).unwrap().with_test(a3).unwrap();
    let v = chain_trace(&cache, &c, false).unwrap().value;
    assert!(rel(v, direct) < 1e-10);
    let u = unit(48, 7);
    let w = unit(48, 20);
    let b = chain_bilinear(&cache, &c, &u, &w, false).unwrap().value;
    assert!(rel(b, left[(7, 20)]) < 1e-10);
}

#[test]
fn bilinear_forms() {
    let p = poly_profile(64, 8);
    let cache = eigendecompose(&sample_matrix(&p, CPLX, GAUSS, 2)).unwrap();
    let z = point(-0.4, 0.02, &p);
    let g = cache.resolvent(z.z).unwrap();
    let c = ChainSpec::new(vec![z], vec![]).unwrap();
    let cc = ChainSpec::new(vec![z.conj()], vec![]).unwrap();
    let (a, b) = (unit(64, 3), unit(64, 40));
    let v = chain_bilinear(&cache, &c, &a, &b, false).unwrap().value;
    assert!((v - g[(3, 40)]).norm() < 1e-12);
    let u: Vec<c64> = (0..64).map(|i| c64::new((i as f64).sin(), 0.5)).collect();
    let w: Vec<c64> = (0..64).map(|i| c64::new(1.0, (i as f64 * 0.3).cos())).collect();
    let left = chain_bilinear(&cache, &c, &u, &w, false).unwrap().value;
    let right = chain_bilinear(&cache, &cc, &w, &u, false).unwrap().value;
    assert!((left - right.conj()).norm() < 1e-10 * left.norm());
    let nu: f64 = u.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    let nw: f64 = w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    assert!(left.norm() <= nu * nw / z.eta);
}

#[test]
fn resolvent_identity() {
    let p = poly_profile(48, 6);
    let cache = eigendecompose(&sample_matrix(&p, CPLX, GAUSS, 1)).unwrap();
    let (z1, z2) = (c64::new(0.2, 0.1), c64::new(-0.6, 0.3));
    let v: Vec<c64> = (0..48).map(|i| c64::new(i as f64 % 3.0, 1.0)).collect();
    let lhs: Vec<c64> = cache
        .apply_resolvent(z1, &v)
        .unwrap()
        .iter()
        .zip(cache.apply_resolvent(z2, &v).unwrap())
        .map(|(a, b)| a - b)
        .collect();
    let rhs = cache.apply_resolvent(z1, &cache.apply_resolvent(z2, &v).unwrap()).unwrap();
    for (a, b) in lhs.iter().zip(&rhs) {
        assert!((a - b * (z1 - z2)).norm() < 1e-9);
    }
}

#[test]
fn self_energy_structure() {
    let p = poly_profile(16, 3);
    let id = Mat::<c64>::identity(16, 16);
    let s = self_energy_apply(&p, &id, CPLX).unwrap();
    for i in 0..16 {
        for j in 0..16 {
            let e = if i == j { 1.0 } else { 0.0 };
            assert!((s[(i, j)] - c64::new(e, 0.0)).norm() < 1e-14);
        }
    }
    let off = Mat::<c64>::from_fn(16, 16, |i, j| if i == j { c64::new(0.0, 0.0) } else { c64::new(1.0, (i + j) as f64) });
    let s = self_energy_apply(&p, &off, CPLX).unwrap();
    for i in 0..16 {
        for j in 0..16 {
            assert_eq!(s[(i, j)], c64::new(0.0, 0.0));
        }
    }
    assert!(self_energy_apply(&p, &Mat::<c64>::identity(3, 3), CPLX).is_err());
}

#[test]
fn self_energy_matches_monte_carlo() {
    let n = 6;
    let p = poly_profile(n, 2);
    let r = Mat::<c64>::from_fn(n, n, |i, j| c64::new(1.0 + i as f64, j as f64 - 2.0));
    for sym in [CPLX, REAL] {
        let exact = self_energy_apply(&p, &r, sym).unwrap();
        let mut acc: Vec<Vec<(Moments, Moments)>> = vec![vec![(Moments::default(), Moments::default()); n]; n];
        for t in 0..10_000 {
            let h = sample_matrix(&p, sym, EntryDistribution::Rademacher, trial_seed(77, t)).values.to_complex();
            let hrh = &(&h * &r) * &h;
            for i in 0..n {
                for j in 0..n {
                    acc[i][j].0.push(hrh[(i, j)].re);
                    acc[i][j].1.push(hrh[(i, j)].im);
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let (re, im) = &acc[i][j];
                let e = exact[(i, j)];
                assert!((re.mean - e.re).abs() <= 5.0 * re.std_error() + 1e-12, "{sym:?} ({i},{j}) re");
                assert!((im.mean - e.im).abs() <= 5.0 * im.std_error() + 1e-12, "{sym:?} ({i},{j}) im");
            }
        }
    }
}

#[test]
fn loss_exponent_examples() {
    assert_eq!(loss_exponents(4, 8).unwrap().0, 0.0);
    assert!((loss_exponents(5, 8).unwrap().0 - 0.25).abs() < 1e-15);
    let (a8, b8) = loss_exponents(8, 8).unwrap();
    assert!((a8 - 0.5).abs() < 1e-15 && (b8 - 0.75).abs() < 1e-15);
    assert_eq!(loss_exponents(4, 8).unwrap().1, loss_exponents(5, 8).unwrap().0);
    assert!(loss_exponents(9, 8).is_err());
    assert!(loss_exponents(2, 7).is_err());
}

#[test]
fn empirical_psi_is_nonnegative_and_checks_length() {
    let p = poly_profile(64, 8);
    let caches: Vec<ResolventCache> =
        (0..3).map(|i| eigendecompose(&sample_matrix(&p, CPLX, GAUSS, trial_seed(4, i))).unwrap()).collect();
    let z = point(0.1, 0.1, &p);
    let ups = upsilon_build(64, 8, 0.1, ControlFamily::Polynomial { power: 6.0 }).unwrap();
    let a = make_special_observable(&p, 0).unwrap();
    let b = make_special_observable(&p, 10).unwrap();
    let c = ChainSpec::new(vec![z, z.conj()], vec![a]).unwrap().with_test(b).unwrap();
    let av = empirical_psi(&caches, &c, &ups, 8, PsiProbe::Averaged).unwrap();
    assert!(av.value >= 0.0 && av.value.is_finite());
    assert_eq!(av.samples, 3);
    let (u, v) = (unit(64, 0), unit(64, 10));
    let iso = empirical_psi(&caches, &c, &ups, 8, PsiProbe::Isotropic { u: &u, v: &v }).unwrap();
    assert!(iso.value >= 0.0);
    assert!(empirical_psi(&caches, &c, &ups, 1, PsiProbe::Averaged).is_err());
}

#[test]
fn centered_chain_subtracts_m() {
    let p = poly_profile(32, 4);
    let cache = eigendecompose(&sample_matrix(&p, CPLX, GAUSS, 6)).unwrap();
    let z = point(0.0, 0.5, &p);
    let a = make_special_observable(&p, 2).unwrap();
    let c = ChainSpec::new(vec![z], vec![]).unwrap().with_test(a.clone()).unwrap();
    let raw = chain_trace(&cache, &c, false).unwrap().value;
    let cen = chain_trace(&cache, &c, true).unwrap().value;
    assert!(((raw - cen) - z.m).norm() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ward_identity_random(seed in any::<u64>(), e in -1.5f64..1.5, eta in 0.01f64..1.0) {
        let p = poly_profile(40, 5);
        let cache = eigendecompose(&sample_matrix(&p, CPLX, GAUSS, seed)).unwrap();
        let z = point(e, eta, &p);
        let id = DiagObservable::identity(40);
        let c = ChainSpec::new(vec![z, z.conj()], vec![id.clone()]).unwrap().with_test(id.clone()).unwrap();
        let gg = chain_trace(&cache, &c, false).unwrap().value;
        let c1 = ChainSpec::new(vec![z], vec![]).unwrap().with_test(id).unwrap();
        let im = chain_trace(&cache, &c1, false).unwrap().value.im / eta;
        prop_assert!((gg.re - im).abs() <= 1e-9 * im);
    }
}
