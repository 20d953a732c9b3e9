use geoext_core::chaplygin::{
    build_structure, classify, contracted_forms, curvature_identity_residual, gyroscopic_alpha,
    hamiltonization_residual, invariant_measure_residual, psi_relatedness_residual, recover_f,
    ChaplyginStructure,
};
use geoext_core::field::FnField;
use geoext_core::systems::{builtin, load_system, Params};
use geoext_core::{FieldRef, Level};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SQRT12: &str = "3.4641016151377544";

fn structure(name: &str, params: &[(&str, &str)]) -> ChaplyginStructure {
    let p: Params = params.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    let s = builtin(name, &p).unwrap();
    let pts = s.domain.with_points(3).grid();
    build_structure(&s, &pts).unwrap()
}

fn scalar(n: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> FieldRef {
    FnField::new(n, 1, move |q| Ok(vec![f(q)])).arc()
}

fn all_structures() -> Vec<ChaplyginStructure> {
    vec![
        structure("particle", &[("rho", "y")]),
        structure("particle", &[("rho", "sin(y)+y^2")]),
        structure("carriage", &[("l", "0")]),
        structure("carriage", &[("l", "1")]),
        structure("carriage", &[("l", SQRT12)]),
        structure("r4math", &[]),
        structure("r4math", &[("eps", "1")]),
        structure("flat", &[]),
    ]
}

#[test]
fn curvature_identity_and_contractions() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // The ε = 0 block g_ab has rank one; the splitting needs a nondegenerate metric.
    for st in all_structures().into_iter().filter(|s| !(s.sys.name == "r4math" && !s.sys.has_label("regularized"))) {
        for _ in 0..4 {
            let r: Vec<f64> = (0..st.m()).map(|_| rng.gen_range(-0.8..0.8)).collect();
            let v: Vec<f64> = (0..st.m()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert!(curvature_identity_residual(&st, &r).unwrap() <= 1e-8, "{}", st.sys.name);
            let alpha = gyroscopic_alpha(&st, &r, &v).unwrap();
            let (ig, ix) = contracted_forms(&st, &r, &v).unwrap();
            assert!((&ig - &alpha).amax() <= 1e-9, "{}: ι_Γγ", st.sys.name);
            assert!((&ix - &alpha).amax() <= 1e-9, "{}: ι_ΓΞ", st.sys.name);
        }
    }
}

#[test]
fn tiers_are_nested_and_level_is_first_tier() {
    let expected = [
        Level::PHI_SIMPLE,
        Level::PHI_SIMPLE,
        Level::GEODESIC_EXT_F0,
        Level::PHI_SIMPLE,
        Level::PHI_SIMPLE,
        Level::INVARIANT_MEASURE_ONLY,
        Level::INVARIANT_MEASURE_ONLY,
        Level::GEODESIC_EXT_F0,
    ];
    for (st, want) in all_structures().iter().zip(expected) {
        let rep = classify(st, &st.reduced_grid(3), 1e-6).unwrap();
        let t: Vec<bool> = ["i", "ii", "iii", "iv"].iter().map(|k| rep.tiers[*k]).collect();
        for w in t.windows(2) {
            assert!(!w[0] || w[1], "{}: {t:?}", st.sys.name);
        }
        let levels = [Level::GEODESIC_EXT_F0, Level::PHI_SIMPLE, Level::ORTHO_PROJECTIVE_EXT, Level::INVARIANT_MEASURE_ONLY];
        let first = t.iter().position(|x| *x).map(|i| levels[i]).unwrap_or(Level::NONE);
        assert_eq!(rep.level, first, "{}", st.sys.name);
        assert_eq!(rep.level, want, "{}", st.sys.name);
    }
}

#[test]
fn recovered_f_is_path_independent_for_particle() {
    let st = structure("particle", &[("rho", "y")]);
    for target in [[0.5, 0.5], [-0.7, 0.9], [0.0, -1.0]] {
        let f = recover_f(&st, &[0.0, 0.0], &target).unwrap();
        let want = -0.5 * (1.0 + target[1] * target[1]).ln();
        assert!((f - want).abs() < 1e-10, "{f} vs {want}");
    }
}

#[test]
fn invariant_measure_needs_the_right_density() {
    let st = structure("particle", &[("rho", "y")]);
    let f = scalar(2, |r| -0.5 * (1.0 + r[1] * r[1]).ln());
    let zero = scalar(2, |_| 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let r = [rng.gen_range(-1.0..1.0), rng.gen_range(0.3..1.0)];
        let v = [rng.gen_range(-1.0..1.0), rng.gen_range(0.3..1.0)];
        assert!(invariant_measure_residual(&st, &f, &r, &v).unwrap() <= 1e-6);
        assert!(invariant_measure_residual(&st, &zero, &r, &v).unwrap() > 1e-4);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn hamiltonization_and_psi_agree(a in -1.0f64..1.0, b in -1.0f64..0.5, exact in any::<bool>(),
                                     x in -0.8f64..0.8, y in -0.8f64..0.8, u in -1.0f64..1.0, w in -1.0f64..1.0) {
        let st = structure("particle", &[("rho", "y")]);
        let (a, b) = if exact { (0.0, -0.5) } else { (a, b) };
        let f = scalar(2, move |r| a * r[0] + b * (1.0 + r[1] * r[1]).ln());
        let h = hamiltonization_residual(&st, &f, &[x, y], &[u, w]).unwrap().amax();
        let p = psi_relatedness_residual(&st, &f, &[x, y], &[u, w]).unwrap().amax();
        prop_assert_eq!(h <= 1e-6, p <= 1e-6, "h = {}, p = {}", h, p);
        if exact {
            prop_assert!(h <= 1e-6);
        }
    }
}

#[test]
fn shipped_configs_reproduce_builtins() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (file, name, params) in [
        ("particle", "particle", vec![("rho", "y")]),
        ("carriage", "carriage", vec![]),
        ("r4math", "r4math", vec![("eps", "1")]),
        ("flat", "flat", vec![]),
    ] {
        let text = std::fs::read_to_string(dir.join(format!("{file}.toml"))).unwrap();
        let from_cfg = load_system(&text, &Default::default()).unwrap();
        let p: Params = params.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let b = builtin(name, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let q: Vec<f64> = (0..b.n()).map(|_| rng.gen_range(-0.9..0.9)).collect();
            let (g1, g2) = (from_cfg.geometry(&q).unwrap(), b.geometry(&q).unwrap());
            let dr = g1.frame.brackets.r.iter().zip(&g2.frame.brackets.r).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            assert!(dr <= 1e-9, "{file}: brackets differ by {dr}");
            assert!((&g1.metric.gf - &g2.metric.gf).amax() <= 1e-12, "{file}: metric");
        }
        let (s1, s2) = (
            build_structure(&from_cfg, &from_cfg.domain.with_points(3).grid()).unwrap(),
            build_structure(&b, &b.domain.with_points(3).grid()).unwrap(),
        );
        let l1 = classify(&s1, &s1.reduced_grid(3), 1e-6).unwrap().level;
        let l2 = classify(&s2, &s2.reduced_grid(3), 1e-6).unwrap().level;
        assert_eq!(l1, l2, "{file}");
    }
}
