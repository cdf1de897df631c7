use std::f64::consts::PI;
use std::sync::OnceLock;

use bellnav::bellop::{lambda1_per_site, SpectrumMethod};
use bellnav::geometry::{canonicalize_to_domain, expand_settings, in_domain, BlochAngles, SymmetryMode};
use bellnav::models::{ground_state_umps, ModelSpec};
use bellnav::Mps;
use proptest::prelude::*;

fn cluster() -> &'static Mps {
    static MPS: OnceLock<Mps> = OnceLock::new();
    MPS.get_or_init(|| ground_state_umps(&ModelSpec::cluster_ising(0.3, 0.7), 8, 1e-9, 20_000).unwrap())
}

fn tfim() -> &'static Mps {
    static MPS: OnceLock<Mps> = OnceLock::new();
    MPS.get_or_init(|| ground_state_umps(&ModelSpec::tfim(0.8), 8, 1e-9, 20_000).unwrap())
}

fn value(mps: &Mps, angles: BlochAngles<f64>, mode: &SymmetryMode, u: usize) -> f64 {
    let settings = expand_settings(&[angles], mode, u).unwrap();
    lambda1_per_site(mps, &settings, SpectrumMethod::Dense).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn folding_preserves_the_principal_eigenvalue(theta in 0.0f64..PI, phi in 0.0f64..(2.0 * PI)) {
        let raw = BlochAngles::new(theta, phi).unwrap();
        let folded = canonicalize_to_domain(raw);
        prop_assert!(in_domain(&folded));
        for (mps, mode, u) in [(cluster(), SymmetryMode::axis_locked(&[2]), 2), (tfim(), SymmetryMode::polar_mirror(), 1)] {
            let a = value(mps, raw, &mode, u);
            let b = value(mps, folded, &mode, u);
            prop_assert!((a - b).abs() < 1e-9, "{}: {} vs {}", mode.label(), a, b);
        }
    }

    #[test]
    fn azimuthal_fold_preserves_the_principal_eigenvalue(theta in 0.0f64..PI, phi in 0.0f64..(2.0 * PI)) {
        let raw = BlochAngles::new(theta, phi).unwrap();
        let folded = BlochAngles::wrapped(theta, 2.0 * PI - phi);
        let cases = [
            (cluster(), SymmetryMode::azimuthal_mirror().with_locked(&[2]), 2),
            (tfim(), SymmetryMode::azimuthal_mirror(), 1),
        ];
        for (mps, mode, u) in cases {
            let a = value(mps, raw, &mode, u);
            let b = value(mps, folded, &mode, u);
            prop_assert!((a - b).abs() < 1e-9, "{}: {} vs {}", mode.label(), a, b);
        }
    }
}

/// Under the azimuthal relation `θ → π − θ` flips the z component of both
/// settings, which the field term does not respect.
#[test]
fn polar_fold_is_not_a_symmetry_of_the_azimuthal_relation() {
    let mode = SymmetryMode::azimuthal_mirror().with_locked(&[2]);
    let raw = BlochAngles::new(2.1, 0.4).unwrap();
    let flipped = BlochAngles::new(PI - 2.1, 0.4).unwrap();
    let (a, b) = (value(cluster(), raw, &mode, 2), value(cluster(), flipped, &mode, 2));
    assert!((a - b).abs() > 1e-4, "{a} vs {b}");
}
