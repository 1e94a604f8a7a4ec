use approx::assert_relative_eq;
use proptest::prelude::*;

use schrolab::agmon::{DistanceProvider, SolverMethod};
use schrolab::critical_radius::{rho_at, CriticalRadiusField};
use schrolab::grid::{self, Ball, EuclideanBallFamily, Grid, ScalarField};
use schrolab::kernels::{self, KernelSpec, SRule};
use schrolab::operators::{self, BallSearch, CandidateConfig, Centering, GridOperator, HeatFamily, RieszConstant};
use schrolab::potentials::{IntegrationRule, Potential};
use schrolab::quad;
use schrolab::weights::{Weight, WeightTable};

fn line() -> Grid {
    Grid::cube(1, -4.0, 4.0, 0.125).unwrap()
}

fn field(g: &Grid, v: &[f64]) -> ScalarField {
    ScalarField::new(g.clone(), (0..g.len()).map(|i| v[i % v.len()]).collect()).unwrap()
}

fn phi(f: &ScalarField, m: f64) -> Vec<f64> {
    let g = &f.grid;
    let rho = CriticalRadiusField::from_fn(g, |x| 1.0 / (1.0 + grid::norm(x))).unwrap();
    let points: Vec<usize> = (8..g.len() - 8).step_by(5).collect();
    let search = BallSearch { mode: Centering::Centered, radii: operators::log_grid(0.125, 2.0, 12).unwrap(), points, centers: None };
    operators::maximal_phi(f, &rho, 1.0, m, &search).unwrap().values
}

fn adapted(f: &ScalarField) -> Vec<f64> {
    let g = &f.grid;
    let prov = DistanceProvider::new(CriticalRadiusField::from_fn(g, |_| 0.5).unwrap(), SolverMethod::ConstantMetric);
    let points: Vec<usize> = (8..g.len() - 8).step_by(5).collect();
    let search = BallSearch { mode: Centering::Centered, radii: operators::log_grid(0.25, 4.0, 12).unwrap(), points, centers: None };
    operators::maximal_adapted(f, &prov, 1.0, &search).unwrap().values
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 5..23)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn maximal_is_sublinear_and_homogeneous(a in values(), b in values(), lam in -3.0f64..3.0) {
        let g = line();
        let (f, h) = (field(&g, &a), field(&g, &b));
        let sum = ScalarField::new(g.clone(), f.values.iter().zip(&h.values).map(|(x, y)| x + y).collect()).unwrap();
        let scaled = ScalarField::new(g.clone(), f.values.iter().map(|x| lam * x).collect()).unwrap();
        for op in [phi as fn(&ScalarField, f64) -> Vec<f64>, |f: &ScalarField, _| adapted(f)] {
            let (mf, mh, ms, ml) = (op(&f, 2.0), op(&h, 2.0), op(&sum, 2.0), op(&scaled, 2.0));
            for k in 0..mf.len() {
                prop_assert!(ms[k] <= mf[k] + mh[k] + 1e-12);
                prop_assert!((ml[k] - lam.abs() * mf[k]).abs() <= 1e-12 * (1.0 + mf[k]));
            }
        }
    }

    #[test]
    fn maximal_is_monotone(a in prop::collection::vec(0.0f64..2.0, 5..23), s in prop::collection::vec(0.0f64..1.0, 5..23)) {
        let g = line();
        let big = field(&g, &a);
        let small = ScalarField::new(g.clone(), big.values.iter().enumerate().map(|(i, v)| v * s[i % s.len()]).collect()).unwrap();
        let (mb, ms) = (phi(&big, 1.0), phi(&small, 1.0));
        for k in 0..mb.len() {
            prop_assert!(ms[k] <= mb[k] + 1e-12);
        }
        // Stronger damping can only lower the supremum.
        let mb2 = phi(&big, 3.0);
        for k in 0..mb.len() {
            prop_assert!(mb2[k] <= mb[k] + 1e-12);
        }
    }

    #[test]
    fn heat_maximal_bounded_by_sup(a in prop::collection::vec(0.0f64..1.0, 3..17), n in 0.0f64..3.0) {
        let g = line();
        let f = field(&g, &a);
        let sup = f.values.iter().cloned().fold(0.0, f64::max);
        let points: Vec<usize> = (0..g.len()).step_by(9).collect();
        let times = operators::log_grid(1e-4, 10.0, 20).unwrap();
        for fam in [HeatFamily::Mehler, HeatFamily::Constant { n }] {
            let m = operators::heat_maximal(&f, &fam, &times, &points).unwrap();
            for &v in &m.values {
                prop_assert!(v <= sup * (1.0 + 1e-9) + 1e-12);
            }
        }
    }

    #[test]
    fn riesz_is_linear(a in values(), b in values(), p in -2.0f64..2.0, q in -2.0f64..2.0) {
        let g = Grid::cube(3, -1.0, 1.0, 0.25).unwrap();
        let op = RieszConstant::new(&g, 1.0, 0, None).unwrap();
        let (f, h) = (field(&g, &a), field(&g, &b));
        let comb: Vec<f64> = f.values.iter().zip(&h.values).map(|(x, y)| p * x + q * y).collect();
        let (rf, rh, rc) = (op.apply(&f.values).unwrap(), op.apply(&h.values).unwrap(), op.apply(&comb).unwrap());
        let scale = rf.iter().chain(&rh).fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..rc.len() {
            prop_assert!((rc[i] - p * rf[i] - q * rh[i]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn norm_bound_invariant_under_weight_scaling(b in -1.0f64..1.0, lam in 1e-3f64..1e3) {
        let g = Grid::cube(3, -1.5, 1.5, 0.25).unwrap();
        let op = RieszConstant::new(&g, 1.0, 0, None).unwrap();
        let w = Weight::exp_linear(b, 0);
        let cfg = CandidateConfig {
            balls: EuclideanBallFamily::from_balls(vec![
                Ball { center: vec![-0.5, 0.0, 0.0], radius: 0.5 },
                Ball { center: vec![0.5, 0.0, 0.0], radius: 0.5 },
            ]).unwrap(),
            random_fields: 1,
            seed: 3,
            eps: 0.0,
        };
        let t1 = WeightTable::new(&w, &g, 2.0).unwrap();
        let t2 = WeightTable::new_scaled(&w.scaled(lam), &g, 2.0).unwrap();
        let n1 = operators::norm_ratios(&op, &t1, &operators::candidate_fields(&t1, &cfg).unwrap()).unwrap();
        let n2 = operators::norm_ratios(&op, &t2, &operators::candidate_fields(&t2, &cfg).unwrap()).unwrap();
        prop_assert!((n1.bound - n2.bound).abs() <= 1e-9 * n1.bound);
    }

    #[test]
    fn kernels_are_positive_and_dominated(t in 0.01f64..5.0, x in -3.0f64..3.0, y in -3.0f64..3.0, n in 0.1f64..4.0) {
        let s = kernels::mehler_time(t);
        let m = kernels::mehler_kernel(t, &[x], &[y]).unwrap();
        let free = kernels::heat_kernel_constant(0.0, s, &[x], &[y]).unwrap();
        prop_assert!(m > 0.0 && m <= free * (1.0 + 1e-12));
        let c = kernels::heat_kernel_constant(n, s, &[x], &[y]).unwrap();
        prop_assert!(c > 0.0);
        assert_relative_eq!(c, (-n * s).exp() * free, max_relative = 1e-12);
        let p3 = [x, y, 0.3];
        prop_assert!(kernels::fundamental_solution_constant_3d(n, &[0.0; 3], &p3).unwrap() > 0.0);
    }

    #[test]
    fn mehler_mass_below_one(t in 0.05f64..4.0, x in -2.0f64..2.0) {
        let f = |z: f64| kernels::mehler_kernel(t, &[x], &[z]).unwrap();
        let (mass, _) = quad::gauss_kronrod(&f, -20.0, 20.0, 1e-13, 1e-11, 400).unwrap();
        prop_assert!(mass > 0.0 && mass < 1.0);
    }

    #[test]
    fn mehler_semigroup_law(t1 in 0.01f64..3.0, t2 in 0.01f64..3.0) {
        let t3 = kernels::mehler_compose(t1, t2);
        assert_relative_eq!(kernels::mehler_time(t3), kernels::mehler_time(t1) + kernels::mehler_time(t2), max_relative = 1e-12);
        assert_relative_eq!(kernels::mehler_parameter(kernels::mehler_time(t1)), t1, max_relative = 1e-12);
    }

    #[test]
    fn s_rules_agree(a in 0.05f64..30.0, d in 1usize..6) {
        let u = kernels::s_function_with(a, d, SRule::MappedSimpson).unwrap();
        let v = kernels::s_function_with(a, d, SRule::Bessel).unwrap();
        prop_assert!((u - v).abs() <= 1e-8 * v.abs().max(1e-300));
    }

    #[test]
    fn constant_potential_radius(n in 0.05f64..50.0, d in 3usize..6) {
        let v = Potential::constant(n, d);
        let r = rho_at(&v, &vec![0.0; d], 1e-10, (1e-4, 1e3), &IntegrationRule::Exact).unwrap();
        assert_relative_eq!(r, (n * grid::unit_ball_volume(d)).powf(-0.5), max_relative = 1e-6);
    }

    #[test]
    fn constant_metric_distance_is_scaled_euclidean(r in 0.2f64..3.0, i in 0usize..41, j in 0usize..41) {
        let g = Grid::cube(2, -2.5, 2.5, 0.125).unwrap();
        let prov = DistanceProvider::new(CriticalRadiusField::from_fn(&g, |_| r).unwrap(), SolverMethod::ConstantMetric);
        let (a, b) = (g.flat(&[i, j]), g.flat(&[j, i]));
        let (pa, pb) = (g.point(a), g.point(b));
        let u = prov.solve(&pa).unwrap();
        let v = prov.solve(&pb).unwrap();
        assert_relative_eq!(u.distances.values[b], v.distances.values[a], max_relative = 1e-12, epsilon = 1e-12);
        assert_relative_eq!(u.distances.values[b], grid::dist(&pa, &pb) / r, max_relative = 1e-12, epsilon = 1e-12);
    }

    #[test]
    fn specs_round_trip(n in 0.1f64..10.0, t in 0.1f64..10.0, j in 1usize..4, lo in -5.0f64..0.0, w in 0.5f64..5.0) {
        for k in [KernelSpec::RieszConstant { n, axis: j - 1 }, KernelSpec::HeatConstant { n, t }, KernelSpec::Mehler { t }] {
            prop_assert_eq!(k.to_string().parse::<KernelSpec>().unwrap(), k);
        }
        let g = Grid::new(vec![lo, lo], vec![lo + w, lo + 2.0 * w], vec![w / 8.0, w / 4.0]).unwrap();
        let back: Grid = g.to_string().parse().unwrap();
        prop_assert_eq!(back.counts(), g.counts());
    }
}
