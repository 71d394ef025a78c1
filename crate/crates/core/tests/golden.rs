use oneshot_core::golden::*;
use oneshot_core::measures::CoefficientKind;
use oneshot_core::quantum::*;
use oneshot_core::tasks::OpClass;
use oneshot_core::theories::*;
use oneshot_core::Ctx;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

#[test]
fn coherence_golden_collapse() {
    let ctx = Ctx::default();
    let t0 = Instant::now();
    for d in 2..=6 {
        let th = builtin_theory(&format!("coherence:{d}")).unwrap();
        let r = find_golden_state(&th.free, 7, DEFAULT_STARTS, &ctx).unwrap();
        for c in &r.coefficients {
            assert!((c.value - 1.0).abs() < 1e-6, "d={d} {:?}", c);
        }
        let v = verify_collapse(&r.state, &th.free, th.rd_map.as_ref(), &ctx).unwrap();
        assert_eq!(v.coefficients.len(), 6);
        assert!(v.collapse, "{:?}", v.coefficients);
    }
    eprintln!("coherence golden d=2..6: {:?}", t0.elapsed());
}

#[test]
fn magic_golden_octant() {
    let ctx = Ctx::default();
    let th = builtin_theory("magic1").unwrap();
    let mut gs = Vec::new();
    for seed in [1, 2, 3, 4, 5] {
        let r = find_golden_state(&th.free, seed, DEFAULT_STARTS, &ctx).unwrap();
        let b = r.state.bloch().unwrap();
        let s = 1.0 / 3f64.sqrt();
        for x in b {
            assert!((x - s).abs() < 1e-6, "{b:?}");
        }
        assert!(r.collapse, "{:?}", r.coefficients);
        gs.push(r.g);
    }
    let target = (3.0 - 3f64.sqrt()).log2();
    for g in &gs {
        assert!((g - target).abs() < 1e-8, "{g} vs {target}");
    }
    let spread = gs.iter().cloned().fold(f64::MIN, f64::max) - gs.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread <= 1e-8);
}

#[test]
fn t_state_does_not_collapse() {
    let ctx = Ctx::default();
    let th = builtin_theory("magic1").unwrap();
    let r = verify_collapse(&t_state(), &th.free, None, &ctx).unwrap();
    // f, min and max coincide for |T>; the log-robustness does not
    assert!(r.collapse);
    let m_max = r.coefficients.iter().find(|c| c.kind == CoefficientKind::Max).unwrap().value;
    assert!(m_max < r.lr.unwrap());
    assert_eq!(r.lr_coincides, Some(false));
}

#[test]
fn thermo_golden() {
    let ctx = Ctx::default();
    let r = golden_thermo(&[0.0, 1.0], 1.0, &ctx).unwrap();
    let e = 1f64.exp();
    assert!((r.g - (1.0 + e).log2()).abs() < 1e-12);
    assert!(r.collapse);
    let hot = golden_thermo(&[0.0, 1.0], 1e6, &ctx).unwrap();
    assert!((hot.g - 1.0).abs() < 1e-4);
    let flat = golden_thermo(&[0.0, 0.0], 3.0, &ctx).unwrap();
    assert!((flat.g - 1.0).abs() < 1e-12);
}

#[test]
fn superposition_golden_matches_closed_form() {
    let ctx = Ctx::default();
    let th = builtin_theory("superposition").unwrap();
    let r = find_golden_state(&th.free, 3, 32, &ctx).unwrap();
    let want = superposition_golden(&PureState::basis(2, 0), &PureState::uniform(2));
    let ov = r.state.vector().dotc(want.vector()).norm();
    assert!((ov - 1.0).abs() < 1e-8, "{ov}");
}

#[test]
fn coherence_golden_is_root() {
    let ctx = Ctx::default();
    for d in [2, 3] {
        let f = FreeStateSet::diagonal(d);
        let mut rng = ChaCha8Rng::seed_from_u64(20 + d as u64);
        let targets: Vec<DensityMatrix> = (0..5).map(|_| random_density(d, &mut rng)).collect();
        let r = check_root_state(&PureState::uniform(d), &f, &targets, 1e-6, &OpClass::Ng, &ctx).unwrap();
        assert!(r.is_root);
        assert_eq!(r.route.as_deref(), Some("ct"));
        for t in &r.targets {
            assert!(t.construction.as_ref().map_or(false, |c| c.valid), "{:?}", t.construction_note);
        }
    }
}

#[test]
fn thermo_golden_is_root() {
    let ctx = Ctx::default();
    let f = FreeStateSet::gibbs(vec![0.0, 1.0], 1.0).unwrap();
    let tau = f.gibbs_state().unwrap();
    let targets = vec![tau, DensityMatrix::basis(2, 0)];
    let r = check_root_state(&PureState::basis(2, 1), &f, &targets, 1e-6, &OpClass::Ng, &ctx).unwrap();
    assert!(r.is_root);
    assert!(r.targets.iter().all(|t| t.construction.is_some()));
}

#[test]
fn free_state_is_not_root() {
    let ctx = Ctx::default();
    let f = FreeStateSet::diagonal(2);
    let r = check_root_state(&PureState::basis(2, 0), &f, &[PureState::uniform(2).density()], 1e-6, &OpClass::Ng, &ctx)
        .unwrap();
    assert!(!r.is_root);
}
