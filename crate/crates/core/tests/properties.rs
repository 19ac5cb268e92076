use kdv_spinn::check::{finite_differences, Expr};
use kdv_spinn::config::{parse_assignments, resolve};
use kdv_spinn::experiments::time_grid;
use kdv_spinn::loss::{update_weights, LossBreakdown, Mode, WeightState};
use kdv_spinn::network::{load_checkpoint, save_checkpoint, Activation, InitScheme, Mlp, Order, Point, SLOT_V};
use kdv_spinn::physics::{mass, soliton, UniformGrid};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jets_match_finite_differences(seed in any::<u64>(), x in -2.0f64..2.0) {
        let e = Expr::random(&mut ChaCha8Rng::seed_from_u64(seed), 2);
        let j = e.jet(x);
        let fd = finite_differences(|x| e.value(x), x, 1e-5, 1e-4, 2e-3);
        prop_assert!((j.vx - fd[0]).abs() <= 1e-6 * fd[0].abs().max(1.0));
        prop_assert!((j.vxx - fd[1]).abs() <= 1e-5 * fd[1].abs().max(1.0));
        prop_assert!((j.vxxx - fd[2]).abs() <= 1e-3 * fd[2].abs().max(1.0));
    }

    #[test]
    fn flatten_unflatten_roundtrip(seed in any::<u64>(), depth in 1usize..4, width in 1usize..12) {
        let a = Mlp::init_scheme(seed, depth, width, Activation::Sine, InitScheme::Uniform).unwrap();
        let mut b = Mlp::init(seed.wrapping_add(1), depth, width).unwrap();
        b.unflatten(a.flatten()).unwrap();
        let pts = [Point::new(0.3, -1.2), Point::new(1.0, 4.0)];
        prop_assert_eq!(a.eval_values(&pts), b.eval_values(&pts));
    }

    #[test]
    fn checkpoint_roundtrip(seed in any::<u64>(), depth in 1usize..4, width in 1usize..10) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let net = Mlp::init_scheme(seed, depth, width, Activation::Sine, InitScheme::Uniform).unwrap();
        save_checkpoint(&net, &path).unwrap();
        prop_assert_eq!(load_checkpoint(&path).unwrap(), net);
    }

    #[test]
    fn batched_values_match_pointwise(seed in any::<u64>(), t in 0.0f64..3.0, x in -20.0f64..20.0) {
        let net = Mlp::init_scheme(seed, 2, 7, Activation::Sine, InitScheme::Uniform).unwrap();
        let jets = net.eval_batch(&[Point::new(t, x)], Order::Full);
        let single = net.forward_jet(t, x);
        prop_assert!((jets.slot(SLOT_V)[0] - single.v).abs() < 1e-12);
    }

    #[test]
    fn mass_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, n in 3usize..200) {
        let grid = UniformGrid::new(-20.0, 20.0, n).unwrap();
        let xs = grid.nodes();
        let u: Vec<f64> = xs.iter().map(|&x| soliton(0.0, x, 1.0, 0.0)).collect();
        let v: Vec<f64> = xs.iter().map(|&x| (0.3 * x).sin()).collect();
        let w: Vec<f64> = u.iter().zip(&v).map(|(p, q)| a * p + b * q).collect();
        let lhs = mass(&w, &grid).unwrap();
        let rhs = a * mass(&u, &grid).unwrap() + b * mass(&v, &grid).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn soliton_travels_at_its_speed(t in 0.0f64..3.0, x in -10.0f64..10.0, d in 0.0f64..2.0, c in 0.2f64..2.0) {
        prop_assert!((soliton(t + d, x + c * d, c, 0.0) - soliton(t, x, c, 0.0)).abs() < 1e-12);
    }

    #[test]
    fn weights_stay_clamped(p in prop::collection::vec(-1e3f64..1e3, 4), m in prop::collection::vec(-1e3f64..1e3, 4), e in prop::collection::vec(-1e3f64..1e3, 4)) {
        let s = WeightState::new(Mode::StructurePreserving);
        let u = update_weights(&s, &p, &m, &e).unwrap().state;
        prop_assert!((1e-2..=1e2).contains(&u.gamma) && (1e-2..=1e2).contains(&u.omega));
        let v = update_weights(&WeightState::new(Mode::Vanilla), &p, &m, &e).unwrap().state;
        prop_assert_eq!((v.gamma, v.omega), (0.0, 0.0));
    }

    #[test]
    fn breakdown_total(c in prop::collection::vec(0.0f64..10.0, 5), g in 0.0f64..100.0, o in 0.0f64..100.0) {
        let b = LossBreakdown::assemble(c[0], c[1], c[2], c[3], c[4], g, o);
        prop_assert_eq!(b.total, c[0] + c[1] + c[2] + g * c[3] + o * c[4]);
    }

    #[test]
    fn config_text_roundtrip(seed in 0u64..1000, width in 1usize..64, lr in 0.01f64..2.0, n_f in 2usize..10000) {
        let text = format!("case = cosine\nseed = {seed}\nwidth = {width}\nlr = {lr}\nn_f = {n_f}\n");
        let cfg = resolve(&parse_assignments(&text).unwrap()).unwrap();
        let again = resolve(&parse_assignments(&cfg.to_text()).unwrap()).unwrap();
        prop_assert_eq!(again, cfg);
    }

    #[test]
    fn time_grid_is_monotone(t in 0.1f64..40.0, n in 2usize..200) {
        let g = time_grid(t, n);
        prop_assert_eq!(g.len(), n);
        prop_assert_eq!((g[0], g[n - 1]), (0.0, t));
        prop_assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
