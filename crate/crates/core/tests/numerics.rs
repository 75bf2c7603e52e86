use chaoscope_core::integrate::{integrate, IntegratorConfig};
use chaoscope_core::sysdsl::SystemDef;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Signed, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn growth_error(h: f64) -> f64 {
    let sys = SystemDef::from_source("growth", "diff(x,t) = x").unwrap();
    let tr = integrate(&sys, &[1.0], &IntegratorConfig::native(0.0, 1.0, h, 1)).unwrap();
    let (t, x) = tr.final_state().unwrap();
    assert_eq!(t, 1.0);
    (x[0] - std::f64::consts::E).abs()
}

#[test]
fn fifth_order_convergence() {
    let e: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&h| growth_error(h)).collect();
    for w in e.windows(2) {
        let ratio = w[0] / w[1];
        assert!((25.0..=40.0).contains(&ratio), "ratio {ratio} from {e:?}");
    }
}

#[test]
fn oscillator_energy_drift() {
    let sys = SystemDef::from_source("osc", "diff(x,t) = v\ndiff(v,t) = -x").unwrap();
    let tr = integrate(&sys, &[1.0, 0.0], &IntegratorConfig::native(0.0, 100.0, 0.01, 100)).unwrap();
    let e0 = 0.5;
    let drift = tr.states.iter().map(|s| ((0.5 * (s[0] * s[0] + s[1] * s[1])) - e0).abs() / e0).fold(0.0, f64::max);
    assert!(drift < 1e-8, "drift {drift}");
    assert_eq!(*tr.times.last().unwrap(), 100.0);
}

fn exact(v: f64) -> BigRational {
    BigRational::from_f64(v).unwrap()
}

/// Lorenz-like right-hand side with an extra polynomial term, evaluated exactly.
fn rational_rhs(x: &[f64], p: (f64, f64, f64)) -> Vec<BigRational> {
    let (s, r, b) = (exact(p.0), exact(p.1), exact(p.2));
    let (x, y, z) = (exact(x[0]), exact(x[1]), exact(x[2]));
    let two = BigRational::from_integer(BigInt::from(2));
    vec![
        &s * (&y - &x),
        &r * &x - &y - &x * &z,
        &x * &y - &b * &z + &x * &x * &x / &two,
    ]
}

#[test]
fn rhs_matches_exact_rational_arithmetic() {
    let p = (10.0, 28.0, 8.0 / 3.0);
    let sys = SystemDef::from_source(
        "poly",
        "param sigma = 10\nparam R = 28\nparam b = 8/3\n\
         diff(x,t) = sigma*(y-x)\ndiff(y,t) = R*x - y - x*z\ndiff(z,t) = x*y - b*z + x^3/2",
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-30.0..30.0)).collect();
        let got = sys.eval_rhs(0.0, &x).unwrap();
        let want = rational_rhs(&x, p);
        let scale: BigRational = [x[0], x[1], x[2]]
            .iter()
            .map(|v| exact(v.abs()))
            .fold(BigRational::from_integer(BigInt::from(1)), |acc, v| if v > acc { v } else { acc });
        for (g, w) in got.iter().zip(&want) {
            let err = (exact(*g) - w).abs();
            let bound = w.abs().max(scale.clone() * scale.clone());
            let rel = (err / bound).to_f64().unwrap();
            assert!(rel <= 1e-14, "x={x:?} got {g} rel {rel}");
        }
    }
}
