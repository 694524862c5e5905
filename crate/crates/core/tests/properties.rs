use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stokes_ocp::mesh::{initial_mesh, InitialMesh};
use stokes_ocp::ocp::project_admissible;

#[test]
fn random_bisection_stays_conforming() {
    for (seed, domain) in [(1, InitialMesh::UnitSquare), (2, InitialMesh::LShape)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mesh = initial_mesh(domain);
        let area = mesh.total_area();
        let ratio = mesh.max_shape_ratio();
        for round in 0..50 {
            let n = mesh.num_elements();
            let k = rng.random_range(1..=4.min(n));
            let marked: Vec<usize> = (0..k).map(|_| rng.random_range(0..n)).collect();
            let next = mesh.bisect(&marked).unwrap();
            next.check_conformity().unwrap_or_else(|e| panic!("round {round}: {e}"));
            assert!(next.num_elements() > n);
            assert!((next.total_area() - area).abs() < 1e-12);
            // longest-edge bisection keeps the shapes within a fixed bound
            assert!(next.max_shape_ratio() <= 4.0 * ratio);
            mesh = next;
        }
    }
}

proptest! {
    #[test]
    fn clamp_is_idempotent(v0 in -5.0..5.0f64, v1 in -5.0..5.0f64, a0 in -2.0..0.0f64, a1 in -2.0..0.0f64, w0 in 0.01..2.0f64, w1 in 0.01..2.0f64) {
        let (a, b) = ([a0, a1], [a0 + w0, a1 + w1]);
        let p = project_admissible([v0, v1], a, b);
        prop_assert_eq!(project_admissible(p, a, b), p);
        for c in 0..2 {
            prop_assert!(a[c] <= p[c] && p[c] <= b[c]);
        }
    }

    #[test]
    fn clamp_fixes_admissible_points(s0 in 0.0..1.0f64, s1 in 0.0..1.0f64) {
        let (a, b) = ([-0.5, -0.5], [-0.1, -0.1]);
        let v = [a[0] + s0 * 0.4, a[1] + s1 * 0.4];
        prop_assert_eq!(project_admissible(v, a, b), v);
    }
}
