//! Differentiable acyclicity functions h(W) and their analytic gradients.
//!
//! Three characterizations are provided, all vanishing exactly on matrices
//! with acyclic support: trace-exponential, polynomial, and log-determinant.
//! The log-det variant has a restricted domain (sI - W\u{2218}W must be an
//! M-matrix); callers outside the domain get [`Error::LdetDomain`] so
//! path-following solvers can backtrack.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm_1, square_dim, Lu, LuNoPivot};

/// A continuous weight matrix with the diagonal pinned to zero.
#[derive(Debug, Clone)]
pub struct WeightedGraph {
    w: Array2<f64>,
}

impl WeightedGraph {
    pub fn new(w: Array2<f64>) -> Result<WeightedGraph> {
        square_dim(&w.view())?;
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("weight matrix has non-finite entries".into()));
        }
        if (0..w.nrows()).any(|i| w[[i, i]] != 0.0) {
            return Err(Error::Parameter("weight matrix has nonzero diagonal".into()));
        }
        Ok(WeightedGraph { w })
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn h(&self, kind: AcyclicityKind) -> Result<f64> {
        h_value(kind, &self.w.view())
    }

    pub fn grad_h(&self, kind: AcyclicityKind) -> Result<Array2<f64>> {
        h_gradient(kind, &self.w.view())
    }
}

/// Which acyclicity characterization to use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AcyclicityKind {
    Expm,
    Poly { alpha: f64 },
    Logdet { s: f64 },
}

impl AcyclicityKind {
    /// Polynomial constraint at its default alpha = 1/d.
    pub fn poly_default(d: usize) -> AcyclicityKind {
        AcyclicityKind::Poly { alpha: 1.0 / d as f64 }
    }

    /// Log-det constraint at its default s = 1.
    pub fn logdet_default() -> AcyclicityKind {
        AcyclicityKind::Logdet { s: 1.0 }
    }
}

pub fn h_value(kind: AcyclicityKind, w: &ArrayView2<f64>) -> Result<f64> {
    match kind {
        AcyclicityKind::Expm => h_expm(w),
        AcyclicityKind::Poly { alpha } => h_poly(w, alpha),
        AcyclicityKind::Logdet { s } => h_ldet(w, s),
    }
}

pub fn h_gradient(kind: AcyclicityKind, w: &ArrayView2<f64>) -> Result<Array2<f64>> {
    match kind {
        AcyclicityKind::Expm => grad_h_expm(w),
        AcyclicityKind::Poly { alpha } => grad_h_poly(w, alpha),
        AcyclicityKind::Logdet { s } => grad_h_ldet(w, s),
    }
}

/// tr(e^(W\u{2218}W)) - d.
pub fn h_expm(w: &ArrayView2<f64>) -> Result<f64> {
    let d = square_dim(w)?;
    let e = expm(&hadamard_square(w).view())?;
    let tr = trace(&e);
    // The series is a sum of non-negative cycle weights; clamp tiny negative
    // rounding so callers can rely on h >= 0.
    Ok((tr - d as f64).max(0.0))
}

/// 2 (e^(W\u{2218}W))^T \u{2218} W.
pub fn grad_h_expm(w: &ArrayView2<f64>) -> Result<Array2<f64>> {
    square_dim(w)?;
    let e = expm(&hadamard_square(w).view())?;
    Ok(2.0 * (&e.t().to_owned() * w))
}

/// tr[(I + alpha W\u{2218}W)^d] - d.
pub fn h_poly(w: &ArrayView2<f64>, alpha: f64) -> Result<f64> {
    if alpha <= 0.0 {
        return Err(Error::Parameter(format!("h_poly requires alpha > 0, got {alpha}")));
    }
    let d = square_dim(w)?;
    let base = poly_base(w, alpha);
    let p = mat_pow(&base, d);
    let h = trace(&p) - d as f64;
    if !h.is_finite() {
        return Err(Error::Numerical("polynomial constraint overflowed".into()));
    }
    Ok(h.max(0.0))
}

/// 2 d alpha ((I + alpha W\u{2218}W)^(d-1))^T \u{2218} W; with alpha = 1/d
/// this is the usual 2 ((I + W\u{2218}W/d)^(d-1))^T \u{2218} W.
pub fn grad_h_poly(w: &ArrayView2<f64>, alpha: f64) -> Result<Array2<f64>> {
    if alpha <= 0.0 {
        return Err(Error::Parameter(format!("h_poly requires alpha > 0, got {alpha}")));
    }
    let d = square_dim(w)?;
    let base = poly_base(w, alpha);
    let p = mat_pow(&base, d - 1);
    let g = 2.0 * d as f64 * alpha * (&p.t().to_owned() * w);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("polynomial gradient overflowed".into()));
    }
    Ok(g)
}

/// -log det(sI - W\u{2218}W) + d log s.
pub fn h_ldet(w: &ArrayView2<f64>, s: f64) -> Result<f64> {
    if s <= 0.0 {
        return Err(Error::Parameter(format!("h_ldet requires s > 0, got {s}")));
    }
    let d = square_dim(w)?;
    let lu = LuNoPivot::factor_m_matrix(&ldet_arg(w, s).view())?;
    Ok(-lu.logdet() + d as f64 * s.ln())
}

/// 2 ((sI - W\u{2218}W)^-1)^T \u{2218} W.
pub fn grad_h_ldet(w: &ArrayView2<f64>, s: f64) -> Result<Array2<f64>> {
    if s <= 0.0 {
        return Err(Error::Parameter(format!("h_ldet requires s > 0, got {s}")));
    }
    square_dim(w)?;
    let lu = LuNoPivot::factor_m_matrix(&ldet_arg(w, s).view())?;
    let inv = lu.inverse();
    Ok(2.0 * (&inv.t().to_owned() * w))
}

/// Value and gradient from one factorization, for solver inner loops.
pub fn h_ldet_value_grad(w: &ArrayView2<f64>, s: f64) -> Result<(f64, Array2<f64>)> {
    if s <= 0.0 {
        return Err(Error::Parameter(format!("h_ldet requires s > 0, got {s}")));
    }
    let d = square_dim(w)?;
    let lu = LuNoPivot::factor_m_matrix(&ldet_arg(w, s).view())?;
    let h = -lu.logdet() + d as f64 * s.ln();
    let inv = lu.inverse();
    Ok((h, 2.0 * (&inv.t().to_owned() * w)))
}

fn hadamard_square(w: &ArrayView2<f64>) -> Array2<f64> {
    w.map(|v| v * v)
}

fn poly_base(w: &ArrayView2<f64>, alpha: f64) -> Array2<f64> {
    let d = w.nrows();
    let mut base = hadamard_square(w) * alpha;
    for i in 0..d {
        base[[i, i]] += 1.0;
    }
    base
}

fn ldet_arg(w: &ArrayView2<f64>, s: f64) -> Array2<f64> {
    let d = w.nrows();
    let mut a = -hadamard_square(w);
    for i in 0..d {
        a[[i, i]] += s;
    }
    a
}

fn trace(a: &Array2<f64>) -> f64 {
    (0..a.nrows()).map(|i| a[[i, i]]).sum()
}

fn mat_pow(a: &Array2<f64>, mut e: usize) -> Array2<f64> {
    let d = a.nrows();
    let mut result = Array2::eye(d);
    let mut base = a.clone();
    while e > 0 {
        if e & 1 == 1 {
            result = result.dot(&base);
        }
        e >>= 1;
        if e > 0 {
            base = base.dot(&base);
        }
    }
    result
}

// Pade coefficients and 1-norm thresholds for the scaling-and-squaring
// matrix exponential (orders 3, 5, 7, 9, 13).
const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE_9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068;
const THETA_13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with diagonal Pade
/// approximants, after Higham (2005).
pub fn expm(m: &ArrayView2<f64>) -> Result<Array2<f64>> {
    square_dim(m)?;
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("expm input has non-finite entries".into()));
    }
    let nrm = norm_1(m);
    let result = if nrm <= THETA_3 {
        pade(m, &PADE_3)?
    } else if nrm <= THETA_5 {
        pade(m, &PADE_5)?
    } else if nrm <= THETA_7 {
        pade(m, &PADE_7)?
    } else if nrm <= THETA_9 {
        pade(m, &PADE_9)?
    } else {
        let s = ((nrm / THETA_13).log2().ceil()).max(0.0);
        if s > 1022.0 {
            return Err(Error::Numerical(format!("expm overflow: 1-norm {nrm:e}")));
        }
        let scaled = m.map(|v| v / 2f64.powf(s));
        let mut e = pade(&scaled.view(), &PADE_13)?;
        for _ in 0..s as usize {
            e = e.dot(&e);
        }
        e
    };
    if result.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("expm overflowed".into()));
    }
    Ok(result)
}

/// Evaluates the [m/m] diagonal Pade approximant: solves (V - U) X = V + U
/// where U and V collect the odd and even powers.
fn pade(m: &ArrayView2<f64>, b: &[f64]) -> Result<Array2<f64>> {
    let d = m.nrows();
    let eye: Array2<f64> = Array2::eye(d);
    let order = b.len() - 1;

    let (u, v) = if order == 13 {
        let m2 = m.dot(m);
        let m4 = m2.dot(&m2);
        let m6 = m2.dot(&m4);
        let u_inner = m6.dot(&(&m6 * b[13] + &m4 * b[11] + &m2 * b[9]))
            + &m6 * b[7]
            + &m4 * b[5]
            + &m2 * b[3]
            + &eye * b[1];
        let u = m.dot(&u_inner);
        let v = m6.dot(&(&m6 * b[12] + &m4 * b[10] + &m2 * b[8]))
            + &m6 * b[6]
            + &m4 * b[4]
            + &m2 * b[2]
            + &eye * b[0];
        (u, v)
    } else {
        // Powers m^0, m^2, m^4, ... up to order - 1.
        let m2 = m.dot(m);
        let mut even_pows = vec![eye.clone()];
        while even_pows.len() * 2 < order + 1 {
            even_pows.push(even_pows.last().unwrap().dot(&m2));
        }
        let mut u_inner: Array2<f64> = Array2::zeros((d, d));
        let mut v: Array2<f64> = Array2::zeros((d, d));
        for (p, pow) in even_pows.iter().enumerate() {
            let odd = 2 * p + 1;
            if odd <= order {
                u_inner = u_inner + pow * b[odd];
            }
            v = v + pow * b[2 * p];
        }
        (m.dot(&u_inner), v)
    };

    let lhs = &v - &u;
    let rhs = &v + &u;
    let lu = Lu::factor(&lhs.view())
        .map_err(|_| Error::Numerical("expm Pade denominator is singular".into()))?;
    Ok(lu.solve_mat(&rhs.view()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_cycle(a: f64, b: f64) -> Array2<f64> {
        array![[0.0, a], [b, 0.0]]
    }

    /// Truncated Taylor series, the independent oracle for expm accuracy.
    fn expm_series(m: &Array2<f64>, terms: usize) -> Array2<f64> {
        let d = m.nrows();
        let mut acc: Array2<f64> = Array2::eye(d);
        let mut term: Array2<f64> = Array2::eye(d);
        for k in 1..=terms {
            term = term.dot(m) / k as f64;
            acc += &term;
        }
        acc
    }

    #[test]
    fn expm_zero_is_identity() {
        let e = expm(&Array2::zeros((4, 4)).view()).unwrap();
        assert_eq!(e, Array2::<f64>::eye(4));
    }

    #[test]
    fn expm_diagonal() {
        let m = array![[1.0, 0.0], [0.0, 2.0]];
        let e = expm(&m.view()).unwrap();
        assert!((e[[0, 0]] - 1f64.exp()).abs() < 1e-12);
        assert!((e[[1, 1]] - 2f64.exp()).abs() < 1e-12);
        assert!(e[[0, 1]].abs() < 1e-14 && e[[1, 0]].abs() < 1e-14);
    }

    #[test]
    fn expm_nilpotent_matches_series_exactly() {
        let m = array![
            [0.0, 1.5, -0.7, 2.0],
            [0.0, 0.0, 0.3, -1.1],
            [0.0, 0.0, 0.0, 0.9],
            [0.0, 0.0, 0.0, 0.0]
        ];
        let e = expm(&m.view()).unwrap();
        let oracle = expm_series(&m, 4); // series terminates at the matrix size
        for (a, b) in e.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn expm_matches_series_oracle_on_unit_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..20 {
            let mut m = Array2::from_shape_fn((6, 6), |_| rng.gen::<f64>() * 2.0 - 1.0);
            // keep the 1-norm at or under one
            let nrm = norm_1(&m.view());
            if nrm > 1.0 {
                m.mapv_inplace(|v| v / nrm);
            }
            let e = expm(&m.view()).unwrap();
            let oracle = expm_series(&m, 60);
            for (a, b) in e.iter().zip(oracle.iter()) {
                let denom = b.abs().max(1.0);
                assert!((a - b).abs() / denom < 1e-10);
            }
        }
    }

    #[test]
    fn h_expm_values() {
        assert_eq!(h_expm(&Array2::zeros((3, 3)).view()).unwrap(), 0.0);
        // tr e^M = 2 cosh(ab) for the antidiagonal Hadamard square.
        let h = h_expm(&two_cycle(1.0, 1.0).view()).unwrap();
        assert!((h - (2.0 * 1f64.cosh() - 2.0)).abs() < 1e-10);
        assert!((h - 1.0861612696304874).abs() < 1e-10);

        let upper = array![
            [0.0, 1.4, -2.0],
            [0.0, 0.0, 0.7],
            [0.0, 0.0, 0.0]
        ];
        assert!(h_expm(&upper.view()).unwrap().abs() < 1e-10);
    }

    #[test]
    fn h_poly_two_cycle_hand_value() {
        // d=2, alpha=1/2: tr[(I + M/2)^2] - 2 = 0.5 for unit 2-cycle.
        let h = h_poly(&two_cycle(1.0, 1.0).view(), 0.5).unwrap();
        assert!((h - 0.5).abs() < 1e-12);
        assert_eq!(h_poly(&Array2::zeros((4, 4)).view(), 0.25).unwrap(), 0.0);
    }

    #[test]
    fn h_ldet_values_and_domain() {
        assert_eq!(h_ldet(&Array2::zeros((5, 5)).view(), 1.0).unwrap(), 0.0);
        let h = h_ldet(&two_cycle(0.5, 0.5).view(), 1.0).unwrap();
        // det(sI - M) = s^2 - a^2 b^2 = 0.9375 at s=1
        assert!((h - (-0.9375f64.ln())).abs() < 1e-12);
        assert!((h - 0.06453852113757118).abs() < 1e-12);
        assert!(matches!(
            h_ldet(&two_cycle(1.0, 1.0).view(), 1.0),
            Err(Error::LdetDomain)
        ));
    }

    #[test]
    fn gradients_vanish_at_zero_and_stay_on_support() {
        let z = Array2::zeros((4, 4));
        assert!(grad_h_expm(&z.view()).unwrap().iter().all(|&v| v == 0.0));
        assert!(grad_h_poly(&z.view(), 0.25).unwrap().iter().all(|&v| v == 0.0));
        assert!(grad_h_ldet(&z.view(), 1.0).unwrap().iter().all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = random_w(&mut rng, 6, 0.4);
        for g in [
            grad_h_expm(&w.view()).unwrap(),
            grad_h_poly(&w.view(), 1.0 / 6.0).unwrap(),
            grad_h_ldet(&w.view(), 1.0).unwrap(),
        ] {
            for (gv, wv) in g.iter().zip(w.iter()) {
                if *wv == 0.0 {
                    assert_eq!(*gv, 0.0, "gradient escaped the support");
                }
            }
        }
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let eps = 1e-5;
        for _ in 0..10 {
            let w = random_w(&mut rng, 6, 0.35);
            check_fd(&w, eps, |v| h_expm(v).unwrap(), |v| grad_h_expm(v).unwrap());
            check_fd(
                &w,
                eps,
                |v| h_poly(v, 1.0 / 6.0).unwrap(),
                |v| grad_h_poly(v, 1.0 / 6.0).unwrap(),
            );
            check_fd(&w, eps, |v| h_ldet(v, 1.0).unwrap(), |v| {
                grad_h_ldet(v, 1.0).unwrap()
            });
        }
    }

    #[test]
    fn h_zero_iff_support_acyclic() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..500 {
            let w = random_w(&mut rng, 6, 0.3);
            let support = w.map(|&v| v != 0.0);
            let acyclic = crate::graph::is_acyclic(&support.view()).unwrap();
            let he = h_expm(&w.view()).unwrap();
            let hp = h_poly(&w.view(), 1.0 / 6.0).unwrap();
            if acyclic {
                assert!(he < 1e-9 && hp < 1e-9);
            } else {
                assert!(he > 1e-9 && hp > 1e-9);
            }
            if let Ok(hl) = h_ldet(&w.view(), 1.0) {
                if acyclic {
                    assert!(hl < 1e-9);
                } else {
                    assert!(hl > 1e-9);
                }
            } else {
                assert!(!acyclic, "domain error on an acyclic support");
            }
        }
    }

    #[test]
    fn ldet_upper_bounds_other_constraints_inside_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(5150);
        let mut checked = 0;
        while checked < 50 {
            let mut w = random_w(&mut rng, 6, 0.5);
            // pull the Hadamard square's spectral radius under one
            let scale = norm_1(&w.map(|v| v * v).view()).sqrt().max(1.0) * 1.3;
            w.mapv_inplace(|v| v / scale);
            let Ok(hl) = h_ldet(&w.view(), 1.0) else { continue };
            let he = h_expm(&w.view()).unwrap();
            let hp = h_poly(&w.view(), 1.0 / 6.0).unwrap();
            assert!(hl >= he - 1e-12, "ldet {hl} < expm {he}");
            assert!(hl >= hp - 1e-12, "ldet {hl} < poly {hp}");
            assert!(he >= 0.0 && hp >= 0.0);
            checked += 1;
        }
    }

    fn check_fd(
        w: &Array2<f64>,
        eps: f64,
        f: impl Fn(&ndarray::ArrayView2<f64>) -> f64,
        g: impl Fn(&ndarray::ArrayView2<f64>) -> Array2<f64>,
    ) {
        let grad = g(&w.view());
        let d = w.nrows();
        let mut max_rel = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                if i == j {
                    continue;
                }
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[[i, j]] += eps;
                wm[[i, j]] -= eps;
                let fd = (f(&wp.view()) - f(&wm.view())) / (2.0 * eps);
                let denom = fd.abs().max(grad[[i, j]].abs()).max(1e-8);
                max_rel = max_rel.max((fd - grad[[i, j]]).abs() / denom);
            }
        }
        assert!(max_rel < 1e-5, "finite-difference mismatch: {max_rel}");
    }

    fn random_w(rng: &mut ChaCha8Rng, d: usize, density: f64) -> Array2<f64> {
        Array2::from_shape_fn((d, d), |(i, j)| {
            if i != j && rng.gen::<f64>() < density {
                rng.gen::<f64>() * 2.0 - 1.0
            } else {
                0.0
            }
        })
    }
}
