use std::sync::Arc;

use blowuplab::ansatz::{assemble_ansatz, zero_coefficients, Ansatz, Background};
use blowuplab::bubble_tree::{classify, BubbleSpec, CenterPath, ConfigurationSequence};
use blowuplab::euclidean_bubble::Profile;
use blowuplab::linear_solver::{solve_projected, SolverOptions};
use blowuplab::manifold::{DiscreteManifold, Field, GreenOptions, Torus};
use proptest::prelude::*;

fn setup() -> (DiscreteManifold, Ansatz, Field) {
    let m = DiscreteManifold::new(3, 16, 2.0).unwrap();
    let spec = BubbleSpec {
        center: CenterPath::Fixed(vec![1.0; 3]),
        scale_constant: 0.2,
        rate: 0.5,
        profile: Arc::new(Profile::standard_bubble(3).unwrap()),
    };
    let config = ConfigurationSequence::new(Torus::new(3, 2.0).unwrap(), vec![spec], false, false, vec![1.0], 0.0).unwrap();
    let h = m.constant(1.0);
    let bg = Background::new(&m, None, h.clone(), GreenOptions::default()).unwrap();
    let tree = classify(&config, 1.0).unwrap();
    let an = assemble_ansatz(&m, &config, &tree, &bg, &zero_coefficients(&config, &bg), None).unwrap();
    (m, an, h)
}

fn options() -> SolverOptions {
    SolverOptions { tolerance: 1e-11, min_resolved_spacings: 1.0, ..SolverOptions::default() }
}

#[test]
fn kernel_rhs_is_absorbed_by_its_multiplier() {
    let (m, an, h) = setup();
    for (j, z) in an.kernel_lifts[1].iter().enumerate() {
        let rhs = m.helmholtz(z, 1.0).unwrap();
        let sol = solve_projected(&m, &an, &h, &rhs, &options()).unwrap();
        assert!(sol.phi.max_abs() < 1e-6, "j={j}: {}", sol.phi.max_abs());
        for (k, l) in sol.multipliers[1].iter().enumerate() {
            let expect = if k == j { -1.0 } else { 0.0 };
            assert!((l - expect).abs() < 1e-6, "j={j} k={k}: {l}");
        }
    }
}

#[test]
fn solution_is_h1_orthogonal_to_the_kernel_family() {
    let (m, an, h) = setup();
    let rhs = an.b_fields[0].map(|b| b.powi(5));
    let sol = solve_projected(&m, &an, &h, &rhs, &options()).unwrap();
    let norm = m.h1_inner(&sol.phi, &sol.phi).unwrap().sqrt();
    for z in an.kernel_family() {
        assert!(m.h1_inner(&sol.phi, z).unwrap().abs() < 1e-8 * norm);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn solve_is_linear_in_the_rhs(a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let (m, an, h) = setup();
        let r1 = an.b_fields[0].map(|v| v.powi(5));
        let r2 = m.field_from_fn(|x| (std::f64::consts::PI * x[0]).cos());
        let s1 = solve_projected(&m, &an, &h, &r1, &options()).unwrap();
        let s2 = solve_projected(&m, &an, &h, &r2, &options()).unwrap();
        let combo = r1.scaled(a).add(&r2.scaled(b));
        let s = solve_projected(&m, &an, &h, &combo, &options()).unwrap();
        let expect = s1.phi.scaled(a).add(&s2.phi.scaled(b));
        let scale = 1.0 + expect.max_abs();
        prop_assert!(s.phi.sub(&expect).max_abs() < 1e-7 * scale);
    }
}
