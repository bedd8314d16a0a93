use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zonoinv::invariance::{assemble, check_invariance_certificate, reach_zonotope, warm_start, AffineSystem};
use zonoinv::numerics::{Matrix, Lu};
use zonoinv::oracle::{facet_normals, simulate_invariance};
use zonoinv::params::{sfg_volume, utpd_volume, Method, SfgParameterization, DEFAULT_FLOOR};
use zonoinv::solver::{kkt_residual, solve_problem, BoundObjective, SolveStatus, SolverOptions};
use zonoinv::sysgen::{random_stable_a, TrialInstance, TrialSpec};
use zonoinv::zonotope::{volume_exact, AxisBox, Zonotope};

fn matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::new(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn volume_is_homogeneous(seed in any::<u64>(), d in 1usize..5, extra in 0usize..4, alpha in 0.1f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = matrix(&mut rng, d, d + extra);
        let v = volume_exact(&g).unwrap();
        let scaled = volume_exact(&g.scale(-alpha)).unwrap();
        prop_assert!((scaled - alpha.powi(d as i32) * v).abs() <= 1e-10 * scaled.max(1e-300));
    }

    #[test]
    fn linear_images_scale_volume_by_the_determinant(seed in any::<u64>(), d in 1usize..5, extra in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = matrix(&mut rng, d, d + extra);
        let m = matrix(&mut rng, d, d);
        let lhs = volume_exact(&m.matmul(&g).unwrap()).unwrap();
        let rhs = Lu::factor(&m).unwrap().det().abs() * volume_exact(&g).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1e-12));
    }

    #[test]
    fn sfg_log_volume_is_concave_on_chords(seed in any::<u64>(), d in 1usize..5, extra in 0usize..5, theta in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sfg = SfgParameterization::new(matrix(&mut rng, d, d + extra), DEFAULT_FLOOR).unwrap();
        let p = d + extra;
        let g1: Vec<f64> = (0..p).map(|_| rng.random_range(0.01..2.0)).collect();
        let g2: Vec<f64> = (0..p).map(|_| rng.random_range(0.01..2.0)).collect();
        let mid: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| theta * a + (1.0 - theta) * b).collect();
        let l = |g: &[f64]| sfg_volume(&sfg, g).unwrap().ln();
        prop_assert!(l(&mid) >= theta * l(&g1) + (1.0 - theta) * l(&g2) - 1e-9);
    }

    #[test]
    fn utpd_volume_is_the_diagonal_product(seed in any::<u64>(), d in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Matrix::zeros(d, d);
        for i in 0..d {
            g[(i, i)] = rng.random_range(0.05..2.0);
            for j in i + 1..d {
                g[(i, j)] = rng.random_range(-1.0..1.0);
            }
        }
        let v = utpd_volume(&g).unwrap();
        prop_assert!((v - volume_exact(&g).unwrap()).abs() <= 1e-12 * v);
    }

    #[test]
    fn reach_sets_contain_simulated_states(seed in any::<u64>(), d in 1usize..5, extra in 0usize..3, t in 0usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = d + extra;
        let sys = AffineSystem::new(matrix(&mut rng, d, d), (0..d).map(|_| rng.random_range(-0.2..0.2)).collect()).unwrap();
        let z = Zonotope::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect(), matrix(&mut rng, d, p)).unwrap();
        let reach = reach_zonotope(&sys, &z, t).unwrap();
        let scale = 1.0 + reach.half_widths().iter().fold(0.0f64, |m, v| m.max(*v));
        let facets = if d >= 2 { facet_normals(&reach).ok() } else { None };
        for _ in 0..50 {
            let lambda: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let mut x = z.point(&lambda).unwrap();
            for _ in 0..t {
                x = sys.step(&x);
            }
            let hull = reach.interval_hull();
            for i in 0..d {
                prop_assert!(x[i] >= hull.lower()[i] - 1e-9 * scale && x[i] <= hull.upper()[i] + 1e-9 * scale);
            }
            if let Some(h) = &facets {
                prop_assert!(h.contains(&x, 1e-9));
            }
        }
    }

    #[test]
    fn certified_zonotopes_survive_simulation(seed in any::<u64>(), d in 1usize..4, extra in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_stable_a(d, 0.2, &mut rng).unwrap();
        let p = d + extra;
        let z = Zonotope::new(
            (0..d).map(|_| rng.random_range(-0.3..0.3)).collect(),
            matrix(&mut rng, d, p).scale(rng.random_range(0.05..0.6)),
        ).unwrap();
        let inst = TrialInstance::generate(&TrialSpec::new(d, p, 0, seed).unwrap()).unwrap();
        let mut prob = inst.problem(Method::SfgSs).unwrap();
        prob.system = AffineSystem::autonomous(a).unwrap();
        prob.horizon = 10;
        if check_invariance_certificate(&prob, &z) {
            let r = simulate_invariance(&prob.system, &z, &AxisBox::symmetric(d, 1.0), 10, 4096, seed).unwrap();
            prop_assert!(r.max_violation <= 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn optimal_outputs_are_sound(seed in any::<u64>(), d in 1usize..4, extra in 0usize..3, mi in 0usize..4) {
        let method = Method::ALL[mi];
        let mut spec = TrialSpec::new(d, d + extra, 0, seed).unwrap();
        spec.horizon = 12;
        let prob = TrialInstance::generate(&spec).unwrap().problem(method).unwrap();
        let r = solve_problem(&prob, &SolverOptions::default()).unwrap();
        prop_assert_eq!(r.status, SolveStatus::Optimal);
        let z = r.zonotope.unwrap();
        prop_assert!(check_invariance_certificate(&prob, &z));
        let sim = simulate_invariance(&prob.system, &z, &prob.bounds, prob.horizon, 4096, 1).unwrap();
        prop_assert!(sim.max_violation <= 1e-7);
        if method.objective() == zonoinv::params::ObjectiveKind::LogVolume {
            prop_assert!((r.objective_value.exp() - r.volume).abs() <= 1e-8 * r.volume);
        }
        for w in r.stages.windows(2) {
            prop_assert!(w[1].objective >= w[0].objective - 1e-9);
        }
    }

    #[test]
    fn interior_points_have_large_kkt_residual(seed in any::<u64>(), d in 1usize..4, mi in 0usize..4) {
        let method = Method::ALL[mi];
        let prob = TrialInstance::generate(&TrialSpec::new(d, d + 1, 0, seed).unwrap()).unwrap().problem(method).unwrap();
        let sys = assemble(&prob).unwrap();
        let z = warm_start(&prob, &sys).unwrap();
        let obj = prob.objective();
        let bound = BoundObjective { objective: &obj, range: sys.layout().objective_range() };
        let duals: Vec<f64> = sys.slacks(&z).iter().map(|s| 1e-3 / s).collect();
        let r = kkt_residual(&sys, &bound, &z, &duals).unwrap();
        prop_assert!(r > 0.1 && r.is_finite(), "{}", r);
    }
}
