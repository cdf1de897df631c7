//! Bell-operator contractions checked against independent constructions.

use bellnav::bellop::{
    bell_value_finite, brute_force_bell_operator, lambda1_per_site, mpo_expectation, spectrum_from_eigenvalues,
    OpenMps, SpectrumMethod,
};
use bellnav::geometry::{MeasurementSettings, SettingPair, UnitVector};
use bellnav::linalg::{eigenvalues, CMat, CVec};
use bellnav::models::{build_hamiltonian_dense, ground_state_ed, ground_state_umps, ModelSpec};
use bellnav::{Mps, Settings, Vector};
use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type C64 = Complex<f64>;

fn random_vector(rng: &mut impl Rng) -> Vector {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).sqrt();
    UnitVector::new(r * phi.cos(), r * phi.sin(), z).unwrap()
}

fn random_settings(n: usize, rng: &mut impl Rng) -> Settings {
    let pairs = (0..n).map(|_| SettingPair { a: random_vector(rng), a_prime: random_vector(rng) }).collect();
    MeasurementSettings::new(pairs).unwrap()
}

fn sigma(v: &Vector) -> CMat<f64> {
    let c = |re: f64, im: f64| C64::new(re, im);
    CMat::from_row_slice(2, 2, &[c(v.z, 0.0), c(v.x, -v.y), c(v.x, v.y), c(-v.z, 0.0)])
}

/// `F_N` from its complex factorisation: with `G = (A_1 + iA'_1) ⊗ Π_k ½((1−i)A_k + (1+i)A'_k)`,
/// the Bell operator is the Hermitian part `(G + G†) / 2`.
fn factorised_bell_operator(settings: &Settings, n: usize) -> CMat<f64> {
    let i = C64::new(0.0, 1.0);
    let first = settings.tiled(0);
    let mut g = sigma(&first.a) + sigma(&first.a_prime) * i;
    for k in 1..n {
        let p = settings.tiled(k);
        let o = sigma(&p.a) * C64::new(0.5, -0.5) + sigma(&p.a_prime) * C64::new(0.5, 0.5);
        g = g.kronecker(&o);
    }
    (&g + g.adjoint()) * C64::new(0.5, 0.0)
}

fn normalised(psi: CVec<f64>) -> CVec<f64> {
    let n = psi.norm();
    psi / C64::new(n, 0.0)
}

fn state(n: usize, psi: CVec<f64>) -> bellnav::GroundState {
    bellnav::GroundState { n_sites: n, state: psi, energy: 0.0 }
}

#[test]
fn mpo_contraction_matches_dense_operator() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let n = [4, 6, 8][case % 3];
        let chi = 1 + case % 4;
        let mps = OpenMps::<f64>::random(n, chi, &mut rng);
        let settings = random_settings(n, &mut rng);
        let psi = normalised(mps.to_dense());
        let f = factorised_bell_operator(&settings, n);
        let dense = psi.dotc(&(&f * &psi));
        let contracted = mpo_expectation(&mps, &settings);
        let vecwise = bell_value_finite(&state(n, psi.clone()), &settings).unwrap();
        let brute = psi.dotc(&(brute_force_bell_operator(&settings, n).unwrap() * &psi));
        worst = worst
            .max((dense - contracted).norm())
            .max((dense.re - vecwise).abs())
            .max((dense - brute).norm());
    }
    assert!(worst < 1e-9, "max deviation {worst:e}");
}

#[test]
fn product_states_respect_the_classical_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..200 {
        let n = 2 + case % 7;
        let mps = OpenMps::<f64>::random_product(n, &mut rng);
        let settings = random_settings(n, &mut rng);
        let v = mpo_expectation(&mps, &settings);
        assert!(v.norm() <= 1.0 + 1e-9, "case {case}: {v}");
    }
}

#[test]
fn operator_norm_respects_the_quantum_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=8 {
        for _ in 0..3 {
            let settings = random_settings(n, &mut rng);
            let f = brute_force_bell_operator(&settings, n).unwrap();
            let (vals, _) = bellnav::linalg::eigh(&f).unwrap();
            let norm = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(norm <= 2f64.powf((n as f64 - 1.0) / 2.0) + 1e-9, "N={n}: {norm}");
        }
    }
}

#[test]
fn cluster_ground_state_matches_boundary_contraction() {
    let spec = ModelSpec::cluster_ising(0.0, 0.0);
    let gs = ground_state_ed(&build_hamiltonian_dense::<f64>(&spec, 8, true).unwrap()).unwrap();
    let mps = OpenMps::from_state(&gs.state, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let settings = random_settings(2, &mut rng);
        let direct = bell_value_finite(&gs, &settings).unwrap();
        let contracted = mpo_expectation(&mps, &settings);
        assert!((direct - contracted.re).abs() < 1e-9 && contracted.im.abs() < 1e-9);
    }
}

fn transfer_states() -> Vec<Mps> {
    [ModelSpec::cluster_ising(0.0, 0.0), ModelSpec::cluster_ising(0.0, 0.9), ModelSpec::cluster_ising(0.3, 1.0)]
        .iter()
        .map(|spec| ground_state_umps(spec, 8, 1e-9, 20_000).unwrap())
        .collect()
}

#[test]
fn transfer_eigenvalue_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for mps in &transfer_states() {
        for _ in 0..60 {
            let settings = random_settings(2, &mut rng);
            let l = lambda1_per_site(mps, &settings, SpectrumMethod::Auto).unwrap();
            assert!(l <= 2f64.sqrt() + 1e-9, "{l}");

            // a = a' leaves a single-setting correlator.
            let pairs = settings.pairs().iter().map(|p| SettingPair { a: p.a, a_prime: p.a }).collect();
            let degenerate = MeasurementSettings::new(pairs).unwrap();
            let l = lambda1_per_site(mps, &degenerate, SpectrumMethod::Auto).unwrap();
            assert!(l <= 1.0 + 1e-9, "{l}");
        }
    }
}

/// Coefficients `c_0 … c_n` of `det(zI − A)` by the Faddeev–LeVerrier recursion.
fn characteristic_polynomial(a: &CMat<f64>) -> Vec<C64> {
    let n = a.nrows();
    let mut c = vec![C64::new(0.0, 0.0); n + 1];
    c[n] = C64::new(1.0, 0.0);
    let mut m = CMat::<f64>::zeros(n, n);
    for k in 1..=n {
        m = a * &m + CMat::identity(n, n) * c[n - k + 1];
        c[n - k] = -(a * &m).trace() / C64::new(k as f64, 0.0);
    }
    c
}

fn horner(c: &[C64], z: C64) -> C64 {
    c.iter().rev().fold(C64::new(0.0, 0.0), |acc, &k| acc * z + k)
}

/// All roots of a monic polynomial by Durand–Kerner, polished with Newton steps.
fn durand_kerner(c: &[C64]) -> Vec<C64> {
    let n = c.len() - 1;
    let seed = C64::new(0.4, 0.9);
    let mut roots: Vec<C64> = (0..n).map(|k| seed.powu(k as u32)).collect();
    for _ in 0..2000 {
        let mut shift = 0.0f64;
        for i in 0..n {
            let mut denom = C64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = horner(c, roots[i]) / denom;
            roots[i] -= step;
            shift = shift.max(step.norm());
        }
        if shift < 1e-15 {
            break;
        }
    }
    let derivative: Vec<C64> = (1..=n).map(|k| c[k] * C64::new(k as f64, 0.0)).collect();
    for r in roots.iter_mut() {
        for _ in 0..3 {
            let d = horner(&derivative, *r);
            if d.norm() > 0.0 {
                *r -= horner(c, *r) / d;
            }
        }
    }
    roots
}

#[test]
fn dense_spectrum_matches_characteristic_polynomial() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10 {
        let a = CMat::<f64>::from_fn(8, 8, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let eig = eigenvalues(&a).unwrap();
        let roots = durand_kerner(&characteristic_polynomial(&a));
        for z in &eig {
            let nearest = roots.iter().map(|r| (r - z).norm()).fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-9, "{z} has no matching root ({nearest:e})");
        }
        let mut by_modulus = roots.clone();
        by_modulus.sort_by(|x, y| y.norm().partial_cmp(&x.norm()).unwrap());
        let spec = spectrum_from_eigenvalues(eig, 1).unwrap();
        assert!((spec.lambda1_per_site - by_modulus[0].norm()).abs() < 1e-9);
        assert!((spec.lambda2_per_site - by_modulus[1].norm()).abs() < 1e-9);
        assert!(spec.gap >= 0.0);
    }
}
