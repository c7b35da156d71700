mod common;

use bandlab::c64;
use bandlab::ensemble::{build_translation_invariant, DecayProfile, ProfileSpec, VarianceProfile};
use bandlab::kernels::*;
use bandlab::mterms::{make_special_observable, DiagObservable};
use bandlab::semicircle::SpectralPoint;
use bandlab::Error;
use common::*;
use faer::Mat;
use proptest::prelude::*;

const POLY: ControlFamily = ControlFamily::Polynomial { power: 6.0 };

#[test]
fn localization_length_examples() {
    assert!((localization_length(40, 400, 0.05) - 178.88543819998318).abs() < 1e-9);
    assert_eq!(localization_length(40, 400, 0.0025), 400.0);
    let mut prev = f64::INFINITY;
    for i in 1..100 {
        let l = localization_length(40, 400, i as f64 * 0.01);
        assert!(l <= prev);
        prev = l;
    }
}

#[test]
fn two_by_two_flat_profile() {
    let p = VarianceProfile::custom(1, &[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
    let z = point(0.3, 0.2, &p);
    let t = two_point_kernel(&p, &z, &z, KernelKind::Theta).unwrap();
    let expected = z.m.im / (2.0 * z.eta);
    for a in 0..2 {
        for b in 0..2 {
            assert!((t.get(a, b).re - expected).abs() < 1e-12);
            assert!(t.get(a, b).im.abs() < 1e-14);
        }
    }
}

#[test]
fn sum_rule_and_norm_identity() {
    for p in [poly_profile(128, 16), block_profile(8, 16)] {
        for (e, eta) in [(0.0, 0.05), (-0.9, 0.01), (1.3, 0.3)] {
            let z = point(e, eta, &p);
            let t = two_point_kernel(&p, &z, &z, KernelKind::Theta).unwrap();
            let target = z.m.im / z.eta;
            for s in t.column_sums() {
                assert!(rel(s, c64::new(target, 0.0)) < 1e-10);
            }
            for a in 0..p.n() {
                for b in 0..p.n() {
                    assert!(t.get(a, b).re >= -1e-14);
                }
            }
            let real = Mat::<f64>::from_fn(p.n(), p.n(), |a, b| t.get(a, b).re);
            let evd = real.self_adjoint_eigen(faer::Side::Lower).unwrap();
            let top = (0..p.n()).map(|i| evd.S()[i]).fold(f64::MIN, f64::max);
            let m2 = z.m.norm_sqr();
            assert!((top - m2 / (1.0 - m2)).abs() / (m2 / (1.0 - m2)) < 1e-8);
        }
    }
}

#[test]
fn general_sum_rule_and_conjugation() {
    let p = poly_profile(64, 8);
    let z1 = point(0.4, 0.1, &p);
    let z2 = point(-0.2, 0.3, &p);
    let t = two_point_kernel(&p, &z1, &z2, KernelKind::Theta).unwrap();
    let c = z1.m * z2.m.conj();
    for s in t.column_sums() {
        assert!(rel(s, c / (c64::new(1.0, 0.0) - c)) < 1e-10);
    }
    let z = point(0.4, 0.1, &p);
    let zc = z.conj();
    let a = two_point_kernel(&p, &z, &z, KernelKind::Theta).unwrap();
    let b = two_point_kernel(&p, &zc, &zc, KernelKind::Theta).unwrap();
    let x = two_point_kernel(&p, &z, &z, KernelKind::Xi).unwrap();
    let y = two_point_kernel(&p, &zc, &zc, KernelKind::Xi).unwrap();
    for i in 0..64 {
        for j in 0..64 {
            assert!((a.get(i, j) - b.get(i, j)).norm() < 1e-14);
            assert!((x.get(i, j) - y.get(i, j).conj()).norm() < 1e-13);
        }
    }
    assert!(matches!(two_point_kernel(&p, &z, &zc, KernelKind::Theta), Err(Error::Domain(_))));
}

#[test]
fn regularized_theta() {
    let p = poly_profile(64, 8);
    let z = point(0.1, 0.05, &p);
    let t = two_point_kernel(&p, &z, &z, KernelKind::Theta).unwrap();
    let r = regularize_theta(&t, 5).unwrap();
    for a in 0..64 {
        assert_eq!(r[(a, 5)], c64::new(0.0, 0.0));
        let row: c64 = (0..64).map(|b| r[(a, b)]).sum();
        let expected = c64::new(z.m.im / z.eta, 0.0) - t.get(a, 5) * 64.0;
        assert!((row - expected).norm() < 1e-9 * expected.norm().max(1.0));
    }
    let xi = two_point_kernel(&p, &z, &z, KernelKind::Xi).unwrap();
    assert!(regularize_theta(&xi, 0).is_err());
    assert!(regularize_theta(&t, 64).is_err());
}

#[test]
fn saturated_propagator_identities() {
    let p = poly_profile(64, 8);
    let traj = bandlab::flow::solve_characteristic(c64::new(0.3, 0.02), 1.0, 1e-3, 8, 64).unwrap();
    let zs = traj.point_at(0.2).unwrap();
    let zr = traj.point_at(0.6).unwrap();
    let zt = traj.point_at(1.0).unwrap();
    let id = saturated_propagator(&p, &zs, &zs).unwrap();
    for i in 0..64 {
        for j in 0..64 {
            let e = if i == j { 1.0 } else { 0.0 };
            assert!((id[(i, j)] - e).abs() < 1e-12);
        }
    }
    let pst = saturated_propagator(&p, &zs, &zt).unwrap();
    let psr = saturated_propagator(&p, &zs, &zr).unwrap();
    let prt = saturated_propagator(&p, &zr, &zt).unwrap();
    let comp = &psr * &prt;
    let ts = two_point_kernel(&p, &zs, &zs, KernelKind::Theta).unwrap();
    let tt = two_point_kernel(&p, &zt, &zt, KernelKind::Theta).unwrap();
    let ts_re = Mat::<f64>::from_fn(64, 64, |i, j| ts.get(i, j).re);
    let moved = &pst * &ts_re;
    let scale = (0..64).map(|i| tt.get(i, i).re).fold(0.0, f64::max);
    for i in 0..64 {
        for j in 0..64 {
            assert!((comp[(i, j)] - pst[(i, j)]).abs() < 1e-9);
            assert!((moved[(i, j)] - tt.get(i, j).re).abs() < 1e-9 * scale);
            assert!(pst[(i, j)] >= -1e-14);
        }
    }
    let q = unsaturated_propagator(&p, &zs, &zt).unwrap();
    let q1 = unsaturated_propagator(&p, &zs, &zr).unwrap();
    let q2 = unsaturated_propagator(&p, &zr, &zt).unwrap();
    let qc = &q1 * &q2;
    for i in 0..64 {
        for j in 0..64 {
            assert!((qc[(i, j)] - q[(i, j)]).norm() < 1e-9);
        }
    }
    assert!(saturated_propagator(&p, &zt, &zs).is_err());
    let off = point(-0.5, 0.02, &p);
    assert!(saturated_propagator(&p, &zs, &off).is_err());
}

#[test]
fn upsilon_polynomial_values() {
    let u = upsilon_build(128, 16, 0.1, POLY).unwrap();
    let le = u.ell_eta();
    assert!((u.get(3, 3) - 1.0 / le).abs() < 1e-15);
    let d = 10.0;
    assert!((u.get(0, 10) - (1.0 + d / u.ell).powf(-6.0) / le).abs() < 1e-15);
    assert!(u.max_column_sum() * u.eta <= u.c1 + 1e-12);
    assert!(u.max_entry() * le <= u.c1 + 1e-12);
    assert!(upsilon_build(128, 16, 0.1, ControlFamily::Polynomial { power: 5.0 }).is_err());
    assert!(upsilon_build(128, 16, 0.1, ControlFamily::Exponential { rate: 0.0, power: 3.0 }).is_err());
    let e = upsilon_build(128, 16, 0.1, ControlFamily::Exponential { rate: 1.0, power: 3.0 }).unwrap();
    assert!(e.get(0, 0) > e.get(0, 64));
    assert!((128f64).powf(-2.0 * e.d_prime) <= e.values[(0, 64)] * (1.0 + 1e-12));
}

#[test]
fn upsilon_column_sum_constant_is_size_independent() {
    let mut c = Vec::new();
    for n in [128, 256, 512] {
        let u = upsilon_build(n, n / 8, 0.05, POLY).unwrap();
        c.push(u.max_column_sum() * u.eta);
    }
    let hi = c.iter().cloned().fold(0.0, f64::max);
    let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(hi / lo < 1.5, "{c:?}");
}

#[test]
fn upsilon_monotone_in_eta() {
    let small = upsilon_build(256, 32, 0.01, POLY).unwrap();
    let large = upsilon_build(256, 32, 0.2, POLY).unwrap();
    let mut c = 0.0f64;
    for y in 0..256 {
        c = c.max(large.get(0, y) / small.get(0, y));
    }
    assert!(c < 3.0, "{c}");
}

#[test]
fn triple_norm_examples() {
    let p = poly_profile(32, 4);
    let a = make_special_observable(&p, 7).unwrap();
    let n = triple_norm(&p, &a).unwrap();
    assert!((n.value - 1.0).abs() < 1e-12);
    assert_eq!(n.certificate[7], 1.0);
    let zero = DiagObservable::from_real(&[0.0; 32]);
    assert_eq!(triple_norm(&p, &zero).unwrap().value, 0.0);
    let flat = VarianceProfile::wigner(12).unwrap();
    let id = DiagObservable::identity(12);
    assert!((triple_norm(&flat, &id).unwrap().value - 12.0).abs() < 1e-8);
}

#[test]
fn triple_norm_certificate_is_feasible() {
    let p = poly_profile(24, 3);
    let diag: Vec<f64> = (0..24).map(|i| ((i * 7) % 5) as f64 * 0.01).collect();
    let a = DiagObservable::from_real(&diag);
    let n = triple_norm(&p, &a).unwrap();
    let cover = p.apply(&n.certificate);
    for q in 0..24 {
        assert!(diag[q] <= cover[q] + 1e-9);
    }
    assert!((n.certificate.iter().sum::<f64>() - n.value).abs() < 1e-9);
    // Cheaper than covering every site by itself.
    assert!(n.value <= diag.iter().fold(0.0f64, |m, v| m.max(*v)) * 24.0 * 3.0);
}

#[test]
fn generalized_upsilon_reduces_to_entries() {
    let p = poly_profile(64, 8);
    let u = upsilon_build(64, 8, 0.1, POLY).unwrap();
    let mut ex = vec![c64::new(0.0, 0.0); 64];
    let mut ey = vec![c64::new(0.0, 0.0); 64];
    ex[3] = c64::new(1.0, 0.0);
    ey[20] = c64::new(0.0, 1.0);
    assert!((generalized_upsilon(UpsArg::Vector(&ex), UpsArg::Vector(&ey), &u).unwrap() - u.get(3, 20)).abs() < 1e-15);
    let a = make_special_observable(&p, 3).unwrap();
    let b = make_special_observable(&p, 20).unwrap();
    let v = generalized_upsilon(UpsArg::Observable(&a), UpsArg::Observable(&b), &u).unwrap();
    assert!((v - u.get(3, 20)).abs() < 1e-15);
    let bare = DiagObservable::from_real(&[1.0; 64]);
    assert!(matches!(
        generalized_upsilon(UpsArg::Observable(&bare), UpsArg::Index(0), &u),
        Err(Error::Argument(_))
    ));
}

#[test]
fn generalized_upsilon_flat_in_delocalized_regime() {
    let n = 128;
    let u = upsilon_build(n, 64, 0.1, POLY).unwrap();
    assert_eq!(u.ell, n as f64);
    let vecs: Vec<Vec<c64>> = (0..4)
        .map(|s| (0..n).map(|i| c64::new(((i * (s + 3)) % 7) as f64 - 3.0, (i % 3) as f64)).collect())
        .collect();
    for a in &vecs {
        for b in &vecs {
            let na: f64 = a.iter().map(|v| v.norm_sqr()).sum();
            let nb: f64 = b.iter().map(|v| v.norm_sqr()).sum();
            let ratio = generalized_upsilon(UpsArg::Vector(a), UpsArg::Vector(b), &u).unwrap() / (na * nb / (n as f64 * u.eta));
            assert!(ratio > 0.01 && ratio <= 1.0 + 1e-12, "{ratio}");
        }
    }
}

#[test]
fn size_function_examples() {
    let u = upsilon_build(64, 8, 0.1, POLY).unwrap();
    let le = u.ell_eta();
    let one = size_function(&SizeFunctionInputs::iso(&u, vec![UpsArg::Index(2), UpsArg::Index(9)]), SizeMode::Iso).unwrap();
    assert!((one - u.get(2, 9).sqrt()).abs() < 1e-15);
    let av1 = size_function(&SizeFunctionInputs::av(&u, vec![UpsArg::Index(4)]), SizeMode::Av).unwrap();
    assert!((av1 - 1.0 / le).abs() < 1e-15);
    let xs = [1usize, 13, 40];
    let av = size_function(&SizeFunctionInputs::av(&u, xs.iter().map(|x| UpsArg::Index(*x)).collect()), SizeMode::Av).unwrap();
    let iso_args = vec![UpsArg::Index(40), UpsArg::Index(1), UpsArg::Index(13), UpsArg::Index(40)];
    let iso = size_function(&SizeFunctionInputs::iso(&u, iso_args), SizeMode::Iso).unwrap();
    assert!((av - iso / le.sqrt()).abs() < 1e-12 * av);
    let bad = SizeFunctionInputs { k: 3, args: vec![UpsArg::Index(0)], upsilon: &u };
    assert!(size_function(&bad, SizeMode::Av).is_err());
    let v = vec![c64::new(1.0, 0.0); 64];
    assert!(size_function(&SizeFunctionInputs::av(&u, vec![UpsArg::Vector(&v)]), SizeMode::Av).is_err());
}

#[test]
fn size_function_flat_scaling() {
    let n = 128;
    let u = upsilon_build(n, 64, 0.05, POLY).unwrap();
    let flat = 1.0 / (n as f64 * u.eta);
    for k in 1..=4 {
        let args: Vec<UpsArg> = (0..k).map(|i| UpsArg::Index(i * 31)).collect();
        let s = size_function(&SizeFunctionInputs::av(&u, args), SizeMode::Av).unwrap();
        let ratio = s / flat.powi(k as i32);
        assert!(ratio > 0.05 && ratio < 20.0, "k = {k}: {ratio}");
    }
}

#[test]
fn kernel_csv_has_complex_pairs() {
    let p = poly_profile(4, 1);
    let z = point(0.0, 0.5, &p);
    let t = two_point_kernel(&p, &z, &z, KernelKind::Theta).unwrap();
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 8);
}

#[test]
fn admissibility_report_shape() {
    let p = build_translation_invariant(64, 8, &DecayProfile::Polynomial { power: 4.0 }).unwrap();
    let grid = AdmissibilityGrid::new(vec![0.2], vec![1.0 / 64.0, 0.25, 1.0]);
    let r = verify_control_admissibility(&p, POLY, &grid).unwrap();
    assert_eq!(r.conditions.len(), 13);
    for c in &r.conditions {
        assert!(c.fitted_constant.is_finite(), "{}", c.condition);
        for g in &c.grid {
            assert!(g.constant <= c.fitted_constant);
        }
    }
    let json = r.to_json().unwrap();
    let back: AdmissibilityReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, r);
    assert!(json.contains("\"condition\"") && json.contains("\"fitted_constant\"") && json.contains("\"grid\""));
    let blocks = ProfileSpec::nearest_neighbour_blocks(8, 8).build().unwrap();
    let rb = verify_control_admissibility(&blocks, POLY, &grid).unwrap();
    assert!(rb.get("i_theta").unwrap().fitted_constant > 0.0);
    assert!(verify_control_admissibility(&p, POLY, &AdmissibilityGrid::new(vec![], vec![0.1])).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn theta_sum_rule_random_points(e1 in -1.5f64..1.5, e2 in -1.5f64..1.5, h1 in 0.01f64..1.0, h2 in 0.01f64..1.0) {
        let p = poly_profile(32, 4);
        let z1 = SpectralPoint::new(c64::new(e1, h1), 4, 32).unwrap();
        let z2 = SpectralPoint::new(c64::new(e2, h2), 4, 32).unwrap();
        let t = two_point_kernel(&p, &z1, &z2, KernelKind::Theta).unwrap();
        let c = z1.m * z2.m.conj();
        let target = c / (c64::new(1.0, 0.0) - c);
        for s in t.column_sums() {
            prop_assert!((s - target).norm() <= 1e-10 * target.norm());
        }
    }

    #[test]
    fn upsilon_triangle_inequality(h1 in 0.01f64..0.5, h2 in 0.01f64..0.5) {
        let (e1, e2) = (h1.min(h2), h1.max(h2));
        let n = 96;
        let u1 = upsilon_build(n, 12, e1, POLY).unwrap();
        let u2 = upsilon_build(n, 12, e2, POLY).unwrap();
        for y in (0..n).step_by(7) {
            let lhs = (0..n).map(|a| u2.get(0, a) * u1.get(a, y)).fold(0.0, f64::max);
            prop_assert!(lhs <= 64.0 / u2.ell_eta() * u1.get(0, y));
        }
    }
}
