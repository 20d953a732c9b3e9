mod common;

use common::{compile, corpus, corpus_derivative_error, gen, SAMPLE_POINTS};
use geoext_core::{parse, Expr};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn strip(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

#[test]
fn printing_then_parsing_is_stable_on_corpus() {
    for e in corpus() {
        let s = e.to_string();
        let back = parse(&s).unwrap_or_else(|err| panic!("{s}: {err}"));
        assert_eq!(strip(&back.to_string()), strip(&s));
        let (c0, c1) = (compile(&e), compile(&back));
        for p in SAMPLE_POINTS {
            let (a, b) = (c0.eval(&p).unwrap(), c1.eval(&p).unwrap());
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{s}: {a} vs {b}");
        }
    }
}

#[test]
fn symbolic_derivatives_match_central_differences_on_corpus() {
    let worst = corpus_derivative_error();
    assert!(worst <= 1e-6, "worst relative error {worst}");
}

#[test]
fn precedence_conventions() {
    let c = |s: &str| compile(&parse(s).unwrap()).eval(&[2.0, 3.0, 0.0]).unwrap();
    assert_eq!(c("-x^2"), -4.0);
    assert_eq!(c("2^3^2"), 512.0);
    assert_eq!(c("x-y-1"), -2.0);
    assert_eq!(c("x/y*3"), 2.0);
    assert!((c("pi") - std::f64::consts::PI).abs() < 1e-15);
}

#[test]
fn malformed_input_is_rejected() {
    for s in ["", "x+", "(x", "x)", "sin", "sin(x", "2**x", "x y", "foo(x)", "1..2"] {
        assert!(parse(s).is_err(), "{s:?} parsed");
    }
}

#[test]
fn fractional_power_of_negative_base_is_a_domain_error() {
    let e = parse("x^0.5").unwrap();
    assert!(compile(&e).eval(&[-1.0, 0.0, 0.0]).is_err());
    assert!(compile(&parse("ln(x)").unwrap()).eval(&[-1.0, 0.0, 0.0]).is_err());
}

proptest! {
    #[test]
    fn polynomial_derivative_is_exact(a in -5i32..5, b in -5i32..5, c in -5i32..5, x in -2.0f64..2.0) {
        let e = parse(&format!("{a}*x^3 + {b}*x^2 + {c}*x")).unwrap();
        let d = compile(&e.differentiate("x")).eval(&[x, 0.0, 0.0]).unwrap();
        let want = 3.0 * f64::from(a) * x * x + 2.0 * f64::from(b) * x + f64::from(c);
        prop_assert!((d - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }

    #[test]
    fn numbers_round_trip(v in 0.0f64..1e6) {
        let e = parse(&Expr::num(v).to_string()).unwrap();
        prop_assert_eq!(compile(&e).eval(&[0.0; 3]).unwrap(), v);
    }

    #[test]
    fn derivative_of_unrelated_variable_vanishes(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = gen(&mut rng, 3).substitute("z", &Expr::num(0.25));
        let d = compile(&e.differentiate("z"));
        prop_assert_eq!(d.eval(&[0.1, 0.2, 0.3]).unwrap(), 0.0);
    }
}
