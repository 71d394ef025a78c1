use nalgebra::DMatrix;
use num_complex::Complex64;
use oneshot_conic::{
    im_entry, re_entry, solve, solve_lp, solve_sdp, CMat, ConicError, ConicProgram, LinearExpr,
    Settings, Status,
};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn herm_2(a: [[Complex64; 2]; 2]) -> CMat {
    DMatrix::from_fn(2, 2, |i, j| a[i][j])
}

/// Four real equations pinning a 2x2 Hermitian expression to `target`.
fn pin_hermitian(p: &mut ConicProgram, build: impl Fn(&CMat) -> LinearExpr, target: &CMat) {
    for r in 0..2 {
        for col in r..2 {
            let sel = re_entry(2, r, col);
            let e = build(&sel);
            let rhs = target[(r, col)].re;
            p.add_eq(&e, rhs).unwrap();
            if r != col {
                let sel = im_entry(2, r, col);
                let e = build(&sel);
                p.add_eq(&e, target[(r, col)].im).unwrap();
            }
        }
    }
}

fn real_tr(a: &CMat, b: &CMat) -> f64 {
    (a * b).trace().re
}

#[test]
fn lp_lower_bound() {
    let mut p = ConicProgram::new(2, vec![]);
    p.add_eq(&LinearExpr::new().scalar(0, 1.0).scalar(1, -1.0), 1.0).unwrap();
    p.set_objective(&LinearExpr::new().scalar(0, 1.0)).unwrap();
    let r = solve_lp(&p, &Settings::default()).unwrap();
    assert_eq!(r.status, Status::Optimal);
    assert!((r.objective - 1.0).abs() < 1e-9, "{}", r.objective);
    assert!(r.max_eq_residual < 1e-8);
}

#[test]
fn lp_infeasible_with_certificate() {
    let mut p = ConicProgram::new(2, vec![]);
    p.add_eq(&LinearExpr::new().scalar(0, 1.0).scalar(1, 1.0), 1.0).unwrap();
    p.add_eq(&LinearExpr::new().scalar(0, 1.0).scalar(1, -1.0), 3.0).unwrap();
    let r = solve_lp(&p, &Settings::default()).unwrap();
    assert_eq!(r.status, Status::Infeasible);
    // b.y = 1 and A^T y <= 0
    let by = r.dual[0] + 3.0 * r.dual[1];
    assert!((by - 1.0).abs() < 1e-9);
    let aty = [r.dual[0] + r.dual[1], r.dual[0] - r.dual[1]];
    assert!(aty.iter().all(|v| *v <= 1e-9), "{aty:?}");
}

#[test]
fn lp_unbounded() {
    let mut p = ConicProgram::new(2, vec![]);
    p.add_eq(&LinearExpr::new().scalar(0, 1.0).scalar(1, -1.0), 0.0).unwrap();
    p.set_objective(&LinearExpr::new().scalar(0, -1.0)).unwrap();
    let r = solve_lp(&p, &Settings::default()).unwrap();
    assert_eq!(r.status, Status::Unbounded);
}

#[test]
fn dependent_rows_are_tolerated() {
    // x0 + x1 = 1 stated twice, plus a scaled copy
    let mut p = ConicProgram::new(2, vec![]);
    for s in [1.0, 1.0, 2.5] {
        p.add_eq(&LinearExpr::new().scalar(0, s).scalar(1, s), s).unwrap();
    }
    p.set_objective(&LinearExpr::new().scalar(0, 1.0).scalar(1, 2.0)).unwrap();
    let r = solve_lp(&p, &Settings::default()).unwrap();
    assert_eq!(r.status, Status::Optimal);
    assert!((r.objective - 1.0).abs() < 1e-9);
}

#[test]
fn max_eigenvalue_sdp() {
    // min l1 - l2 s.t. (l1 - l2) I - S = A, S psd
    let a = herm_2([[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(3.0, 0.0)]]);
    let mut p = ConicProgram::new(2, vec![2]);
    let id = CMat::identity(2, 2);
    pin_hermitian(
        &mut p,
        |sel| LinearExpr::new().scalar(0, real_tr(sel, &id)).scalar(1, -real_tr(sel, &id)).block(0, -sel.clone()),
        &a,
    );
    p.set_objective(&LinearExpr::new().scalar(0, 1.0).scalar(1, -1.0)).unwrap();
    let r = solve_sdp(&p, &Settings::default()).unwrap();
    assert_eq!(r.status, Status::Optimal);
    assert!((r.objective - 3.0).abs() < 1e-7, "{}", r.objective);
}

#[test]
fn max_eigenvalue_complex() {
    // reference value from the dense eigensolver
    let a = herm_2([[c(2.0, 0.0), c(1.0, -1.0)], [c(1.0, 1.0), c(1.0, 0.0)]]);
    let ev = nalgebra::SymmetricEigen::new(a.clone()).eigenvalues;
    let lmax = ev.iter().copied().fold(f64::MIN, f64::max);
    let mut p = ConicProgram::new(2, vec![2]);
    let id = CMat::identity(2, 2);
    pin_hermitian(
        &mut p,
        |sel| LinearExpr::new().scalar(0, real_tr(sel, &id)).scalar(1, -real_tr(sel, &id)).block(0, -sel.clone()),
        &a,
    );
    p.set_objective(&LinearExpr::new().scalar(0, 1.0).scalar(1, -1.0)).unwrap();
    let r = solve_sdp(&p, &Settings::default()).unwrap();
    assert_eq!(r.status, Status::Optimal);
    assert!((r.objective - lmax).abs() < 1e-7, "{} vs {}", r.objective, lmax);
}

fn hypothesis_program(rho: &CMat, sigma: &CMat, eps: f64) -> ConicProgram {
    // blocks P, Q with P + Q = I; slack s: Tr(P rho) - s = 1 - eps
    let mut p = ConicProgram::new(1, vec![2, 2]);
    let id = CMat::identity(2, 2);
    pin_hermitian(&mut p, |sel| LinearExpr::new().block(0, sel.clone()).block(1, sel.clone()), &id);
    p.add_eq(&LinearExpr::new().block(0, rho.clone()).scalar(0, -1.0), 1.0 - eps).unwrap();
    p.set_objective(&LinearExpr::new().block(0, sigma.clone())).unwrap();
    p
}

#[test]
fn hypothesis_test_pure_vs_mixed() {
    let plus = herm_2([[c(0.5, 0.0), c(0.5, 0.0)], [c(0.5, 0.0), c(0.5, 0.0)]]);
    let mixed = CMat::identity(2, 2) * c(0.5, 0.0);
    // eigen oracle: 2^{-Dmin} = Tr(Pi_rho sigma) = 0.5
    let r = solve_sdp(&hypothesis_program(&plus, &mixed, 0.0), &Settings::default()).unwrap();
    assert_eq!(r.status, Status::Optimal);
    assert!((r.objective - 0.5).abs() < 1e-6, "{}", r.objective);
    // eps > 0: optimum is (1 - eps) * 0.5 for this commuting-in-P-basis pair
    let r = solve_sdp(&hypothesis_program(&plus, &mixed, 0.1), &Settings::default()).unwrap();
    assert!((r.objective - 0.45).abs() < 1e-8, "{}", r.objective);
    assert!(r.duality_gap() < 1e-6);
}

#[test]
fn scalar_dmax_boundary() {
    // min l s.t. l sigma - rho = S >= 0 with rho = sigma = I/2
    let half = CMat::identity(2, 2) * c(0.5, 0.0);
    let mut p = ConicProgram::new(1, vec![2]);
    pin_hermitian(
        &mut p,
        |sel| LinearExpr::new().scalar(0, real_tr(sel, &half)).block(0, -sel.clone()),
        &half,
    );
    p.set_objective(&LinearExpr::new().scalar(0, 1.0)).unwrap();
    let r = solve_sdp(&p, &Settings::default()).unwrap();
    assert_eq!(r.status, Status::Optimal);
    assert!((r.objective - 1.0).abs() < 1e-7, "{}", r.objective);
}

/// Bloch vectors of the six octahedron vertices.
fn octahedron() -> Vec<[f64; 3]> {
    vec![[1., 0., 0.], [-1., 0., 0.], [0., 1., 0.], [0., -1., 0.], [0., 0., 1.], [0., 0., -1.]]
}

fn bloch_state(r: [f64; 3]) -> CMat {
    herm_2([
        [c((1.0 + r[2]) / 2.0, 0.0), c(r[0] / 2.0, -r[1] / 2.0)],
        [c(r[0] / 2.0, r[1] / 2.0), c((1.0 - r[2]) / 2.0, 0.0)],
    ])
}

/// Independent oracle: the octahedron is {r : n.r <= 1} for the eight sign
/// vectors n. For a mixing state on the grid, the least s with
/// (r + s r_sigma)/(1+s) inside is max over facets of (n.r - 1)/(1 - n.r_sigma).
fn facet_oracle(r: [f64; 3]) -> f64 {
    let mut facets = Vec::new();
    for a in [-1.0, 1.0] {
        for b in [-1.0, 1.0] {
            for cc in [-1.0, 1.0] {
                facets.push([a, b, cc]);
            }
        }
    }
    let dot = |x: [f64; 3], y: [f64; 3]| x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
    let n: i32 = 40;
    let mut best = f64::INFINITY;
    for i in -n..=n {
        for j in -n..=n {
            let k_max = n - i.abs() - j.abs();
            if k_max < 0 {
                continue;
            }
            for k in -k_max..=k_max {
                let rs = [i as f64 / n as f64, j as f64 / n as f64, k as f64 / n as f64];
                let mut s: f64 = 0.0;
                let mut ok = true;
                for f in &facets {
                    let viol = dot(*f, r) - 1.0;
                    if viol > 0.0 {
                        let room = 1.0 - dot(*f, rs);
                        if room <= 0.0 {
                            ok = false;
                            break;
                        }
                        s = s.max(viol / room);
                    }
                }
                if ok {
                    best = best.min(s);
                }
            }
        }
    }
    best
}

#[test]
fn octahedron_robustness_matches_facet_oracle() {
    let t = [1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt(), 0.0];
    let rho = bloch_state(t);
    let verts: Vec<CMat> = octahedron().into_iter().map(bloch_state).collect();
    // scalars: b_0..b_5, a_0..a_5
    let mut p = ConicProgram::new(12, vec![]);
    pin_hermitian(
        &mut p,
        |sel| {
            let mut e = LinearExpr::new();
            for (j, v) in verts.iter().enumerate() {
                let w = real_tr(sel, v);
                e.add_scalar(j, w);
                e.add_scalar(6 + j, -w);
            }
            e
        },
        &rho,
    );
    let mut obj = LinearExpr::new();
    for j in 0..6 {
        obj.add_scalar(6 + j, 1.0);
    }
    p.set_objective(&obj).unwrap();
    let r = solve_lp(&p, &Settings::default()).unwrap();
    assert_eq!(r.status, Status::Optimal);
    let oracle = facet_oracle(t);
    assert!((oracle - (2f64.sqrt() - 1.0) / 2.0).abs() < 1e-12, "oracle {oracle}");
    assert!((r.objective - oracle).abs() < 1e-7, "lp {} oracle {}", r.objective, oracle);
}

#[test]
fn lp_and_degenerate_sdp_agree() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let n = 5;
        let m = 3;
        let a: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let b: Vec<f64> = a.iter().map(|row| row.iter().zip(&x0).map(|(p, q)| p * q).sum()).collect();
        let cost: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();

        let mut lp = ConicProgram::new(n, vec![]);
        let mut sdp = ConicProgram::new(0, vec![1; n]);
        for (row, rhs) in a.iter().zip(&b) {
            let mut e1 = LinearExpr::new();
            let mut e2 = LinearExpr::new();
            for (k, &v) in row.iter().enumerate() {
                e1.add_scalar(k, v);
                e2.add_block(k, CMat::from_element(1, 1, c(v, 0.0)));
            }
            lp.add_eq(&e1, *rhs).unwrap();
            sdp.add_eq(&e2, *rhs).unwrap();
        }
        let mut o1 = LinearExpr::new();
        let mut o2 = LinearExpr::new();
        for (k, &v) in cost.iter().enumerate() {
            o1.add_scalar(k, v);
            o2.add_block(k, CMat::from_element(1, 1, c(v, 0.0)));
        }
        lp.set_objective(&o1).unwrap();
        sdp.set_objective(&o2).unwrap();
        let r1 = solve_lp(&lp, &Settings::default()).unwrap();
        let r2 = solve_sdp(&sdp, &Settings::default()).unwrap();
        assert_eq!(r1.status, Status::Optimal);
        assert_eq!(r2.status, Status::Optimal);
        assert!((r1.objective - r2.objective).abs() < 1e-7, "{} {}", r1.objective, r2.objective);
        assert!(r1.duality_gap() < 1e-6);
    }
}

#[test]
fn deterministic_reports() {
    let plus = herm_2([[c(0.5, 0.0), c(0.5, 0.0)], [c(0.5, 0.0), c(0.5, 0.0)]]);
    let mixed = CMat::identity(2, 2) * c(0.5, 0.0);
    let p = hypothesis_program(&plus, &mixed, 0.05);
    let a = solve(&p, &Settings::default()).unwrap();
    let b = solve(&p, &Settings::default()).unwrap();
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    assert_eq!(a.scalars, b.scalars);
    assert_eq!(a.blocks, b.blocks);
}

#[test]
fn width_mismatch_is_rejected() {
    let mut p = ConicProgram::new(2, vec![2]);
    assert!(matches!(p.add_eq(&LinearExpr::new().scalar(3, 1.0), 1.0), Err(ConicError::Malformed(_))));
    assert!(p.add_eq(&LinearExpr::new().block(0, CMat::identity(3, 3)), 1.0).is_err());
    p.rows.push(oneshot_conic::Row { scalars: vec![1.0], blocks: vec![None] });
    p.rhs.push(0.0);
    assert!(p.validate().is_err());
    let nonherm = DMatrix::from_fn(2, 2, |i, j| if i < j { c(1.0, 0.0) } else { c(0.0, 0.0) });
    let mut q = ConicProgram::new(0, vec![2]);
    q.add_eq(&LinearExpr::new().block(0, nonherm), 1.0).unwrap();
    assert!(solve(&q, &Settings::default()).is_err());
}
