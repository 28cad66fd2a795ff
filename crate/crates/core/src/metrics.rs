//! Evaluation metrics: structural Hamming distance, structural intervention
//! distance (graphical criterion plus an independent covariance oracle), the
//! sortability functional, and the noise-ratio diagnostic.

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::graph::{d_separated, total_effect_matrix, Dag};
use crate::linalg::Lu;
use crate::scm::column_sample_variances;

/// One trial's worth of metrics.
#[derive(Debug, Clone, Copy)]
pub struct MetricRecord {
    pub shd: usize,
    pub sid: usize,
    pub runtime_s: f64,
    pub sortability_var: f64,
    pub sortability_r2: f64,
    pub noise_ratio: f64,
}

impl MetricRecord {
    /// Checks the loose range invariants against a graph size.
    pub fn validate(&self, d: usize, true_edges: usize) -> Result<()> {
        let shd_cap = d * (d - 1) / 2 + true_edges;
        if self.shd > shd_cap {
            return Err(Error::Parameter(format!(
                "shd {} exceeds cap {shd_cap}",
                self.shd
            )));
        }
        if self.sid > d * (d - 1) {
            return Err(Error::Parameter(format!(
                "sid {} exceeds cap {}",
                self.sid,
                d * (d - 1)
            )));
        }
        for v in [self.sortability_var, self.sortability_r2] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Parameter(format!("sortability {v} out of [0,1]")));
            }
        }
        if self.noise_ratio < 1.0 {
            return Err(Error::Parameter(format!(
                "noise ratio {} below 1",
                self.noise_ratio
            )));
        }
        Ok(())
    }
}

/// Structural Hamming distance over unordered pairs: one count per missing or
/// extra adjacency, and one per reversed edge.
pub fn shd(est: &Dag, truth: &Dag) -> Result<usize> {
    if est.d() != truth.d() {
        return Err(Error::Shape(format!(
            "graphs have different sizes: {} vs {}",
            est.d(),
            truth.d()
        )));
    }
    let d = est.d();
    let mut count = 0;
    for i in 0..d {
        for j in (i + 1)..d {
            let e = (est.has_edge(i, j), est.has_edge(j, i));
            let t = (truth.has_edge(i, j), truth.has_edge(j, i));
            let e_any = e.0 || e.1;
            let t_any = t.0 || t.1;
            if e_any != t_any {
                count += 1;
            } else if e_any && e != t {
                count += 1; // reversal counts once
            }
        }
    }
    Ok(count)
}

/// Structural intervention distance: the number of ordered pairs (i, j) for
/// which adjusting for the estimated parents of i does not identify the
/// interventional distribution of j under the true graph.
///
/// Validity is the adjustment criterion: the estimated parent set must avoid
/// descendants of nodes on proper causal paths from i to j, and must block
/// every non-causal path (checked by d-separation in the graph with i's
/// causal-path edges removed). When j itself is among the adjusted-for
/// parents, the pair is correct iff j is not a true descendant of i.
pub fn sid(est: &Dag, truth: &Dag) -> Result<usize> {
    if est.d() != truth.d() {
        return Err(Error::Shape(format!(
            "graphs have different sizes: {} vs {}",
            est.d(),
            truth.d()
        )));
    }
    let d = est.d();
    let mut count = 0;
    for i in 0..d {
        let z: BTreeSet<usize> = est.parents(i).into_iter().collect();
        let de_i = truth.descendants(i)?;
        for j in 0..d {
            if j == i {
                continue;
            }
            if !adjustment_valid(truth, i, j, &z, &de_i)? {
                count += 1;
            }
        }
    }
    Ok(count)
}

fn adjustment_valid(
    truth: &Dag,
    i: usize,
    j: usize,
    z: &BTreeSet<usize>,
    de_i: &BTreeSet<usize>,
) -> Result<bool> {
    if z.contains(&j) {
        // Adjusting for the target reproduces it exactly; the implied effect
        // is zero, correct iff there is no true effect to find.
        return Ok(!de_i.contains(&j));
    }

    // Nodes (other than i) on a proper causal path i -> ... -> j.
    let mut causal_nodes: BTreeSet<usize> = BTreeSet::new();
    if de_i.contains(&j) {
        for &w in de_i.iter() {
            if w == j || truth.descendants(w)?.contains(&j) {
                causal_nodes.insert(w);
            }
        }
    }

    // Forbidden set: causal nodes and all their descendants.
    let mut forbidden: BTreeSet<usize> = causal_nodes.clone();
    for &w in &causal_nodes {
        forbidden.extend(truth.descendants(w)?);
    }
    if z.iter().any(|v| forbidden.contains(v)) {
        return Ok(false);
    }

    // Proper backdoor graph: drop the first edge of every causal path.
    let edges: Vec<(usize, usize)> = truth
        .edges()
        .into_iter()
        .filter(|&(a, b)| !(a == i && causal_nodes.contains(&b)))
        .collect();
    let backdoor = Dag::from_edges(truth.d(), &edges)?;
    d_separated(&backdoor, i, j, z)
}

/// Independent SID oracle for linear-Gaussian parameterizations: for each
/// ordered pair, the coefficient of x_i when regressing x_j on x_i plus the
/// estimated parents (computed in closed form from the model covariance) is
/// compared against the true total effect.
pub fn sid_covariance_oracle(
    est: &Dag,
    truth: &Dag,
    weights: &ArrayView2<f64>,
    noise_variances: &[f64],
) -> Result<usize> {
    if est.d() != truth.d() {
        return Err(Error::Shape("graphs have different sizes".into()));
    }
    let d = truth.d();
    if noise_variances.len() != d || noise_variances.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Parameter("need d positive noise variances".into()));
    }
    // Sigma = M^T Omega M with M = (I - W)^-1.
    let mut a = Array2::eye(d);
    a -= weights;
    let m = Lu::factor(&a.view())
        .map_err(|_| Error::Numerical("I - W singular".into()))?
        .inverse();
    let mut omega_m = m.clone();
    for r in 0..d {
        for c in 0..d {
            omega_m[[r, c]] *= noise_variances[r];
        }
    }
    let sigma = m.t().dot(&omega_m);
    let effects = total_effect_matrix(truth, weights)?;

    let mut count = 0;
    for i in 0..d {
        let mut regressors = vec![i];
        regressors.extend(est.parents(i));
        let k = regressors.len();
        let mut sub = Array2::zeros((k, k));
        for (r, &a_) in regressors.iter().enumerate() {
            for (c, &b_) in regressors.iter().enumerate() {
                sub[[r, c]] = sigma[[a_, b_]];
            }
        }
        let lu = Lu::factor(&sub.view()).map_err(|_| {
            Error::Numerical(
                "singular covariance sub-block (non-generic weights); redraw and retry".into(),
            )
        })?;
        for j in 0..d {
            if j == i {
                continue;
            }
            let rhs = ndarray::Array1::from_iter(regressors.iter().map(|&r| sigma[[r, j]]));
            let beta = lu.solve_vec(&rhs);
            let slope = beta[0];
            if (slope - effects[[i, j]]).abs() > 1e-8 {
                count += 1;
            }
        }
    }
    Ok(count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SortCriterion {
    Var,
    R2,
}

/// The sortability functional: over all node pairs connected by a directed
/// path of each length 1..=d (via boolean adjacency powers), the fraction
/// ordered consistently with the per-node statistic tau (exact ties count
/// one half). Returns 1/2 for edgeless graphs, where no pair votes.
pub fn sortability(
    x: &ArrayView2<f64>,
    truth: &Dag,
    criterion: SortCriterion,
) -> Result<f64> {
    let d = truth.d();
    if x.ncols() != d {
        return Err(Error::Shape(format!(
            "data has {} columns, graph has d={d}",
            x.ncols()
        )));
    }
    let tau = match criterion {
        SortCriterion::Var => column_sample_variances(x).to_vec(),
        SortCriterion::R2 => r_squared_all(x)?,
    };

    let mut reach = adjacency_bool(truth);
    let adj = reach.clone();
    let mut num = 0.0;
    let mut den = 0.0;
    for _power in 1..=d {
        for s in 0..d {
            for t in 0..d {
                if reach[s * d + t] {
                    num += incr(tau[s], tau[t]);
                    den += 1.0;
                }
            }
        }
        reach = bool_matmul(&reach, &adj, d);
    }
    if den == 0.0 {
        return Ok(0.5);
    }
    Ok(num / den)
}

fn incr(a: f64, b: f64) -> f64 {
    if a < b {
        1.0
    } else if a == b {
        0.5
    } else {
        0.0
    }
}

fn adjacency_bool(g: &Dag) -> Vec<bool> {
    let d = g.d();
    let mut a = vec![false; d * d];
    for (i, j) in g.edges() {
        a[i * d + j] = true;
    }
    a
}

fn bool_matmul(a: &[bool], b: &[bool], d: usize) -> Vec<bool> {
    let mut out = vec![false; d * d];
    for i in 0..d {
        for k in 0..d {
            if a[i * d + k] {
                for j in 0..d {
                    if b[k * d + j] {
                        out[i * d + j] = true;
                    }
                }
            }
        }
    }
    out
}

/// R^2 of each node regressed on all remaining nodes, with a small ridge
/// fallback when the normal equations are singular.
pub fn r_squared_all(x: &ArrayView2<f64>) -> Result<Vec<f64>> {
    let n = x.nrows();
    let d = x.ncols();
    if n <= d {
        return Err(Error::Parameter(format!(
            "R^2 regressions need n > d, got n={n}, d={d}"
        )));
    }
    let means = x.mean_axis(ndarray::Axis(0)).expect("n > 0");
    let mut centered = x.to_owned();
    for j in 0..d {
        let mj = means[j];
        centered.column_mut(j).mapv_inplace(|v| v - mj);
    }
    let gram = centered.t().dot(&centered);
    let vars = column_sample_variances(x);

    let mut out = Vec::with_capacity(d);
    for t in 0..d {
        let others: Vec<usize> = (0..d).filter(|&c| c != t).collect();
        let k = others.len();
        let mut sub = Array2::zeros((k, k));
        let mut rhs = ndarray::Array1::zeros(k);
        for (r, &a_) in others.iter().enumerate() {
            rhs[r] = gram[[a_, t]];
            for (c, &b_) in others.iter().enumerate() {
                sub[[r, c]] = gram[[a_, b_]];
            }
        }
        let beta = match Lu::factor(&sub.view()) {
            Ok(lu) => lu.solve_vec(&rhs),
            Err(_) => {
                // ridge fallback
                for r in 0..k {
                    sub[[r, r]] += 1e-6;
                }
                Lu::factor(&sub.view())
                    .map_err(|_| Error::Numerical("ridge-regularized design still singular".into()))?
                    .solve_vec(&rhs)
            }
        };
        let mut resid_ss = 0.0;
        for row in 0..n {
            let mut pred = 0.0;
            for (c, &b_) in others.iter().enumerate() {
                pred += beta[c] * centered[[row, b_]];
            }
            let r = centered[[row, t]] - pred;
            resid_ss += r * r;
        }
        let resid_var = resid_ss / (n - 1) as f64;
        let r2 = if vars[t] > 0.0 {
            (1.0 - resid_var / vars[t]).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(r2);
    }
    Ok(out)
}

/// max / min of a positive variance vector.
pub fn noise_ratio(variances: &[f64]) -> Result<f64> {
    if variances.is_empty() {
        return Err(Error::Parameter("noise_ratio of an empty vector".into()));
    }
    if variances.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Parameter("noise_ratio requires positive variances".into()));
    }
    let max = variances.iter().cloned().fold(f64::MIN, f64::max);
    let min = variances.iter().cloned().fold(f64::MAX, f64::min);
    Ok(max / min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::gen_er;
    use ndarray::Array2;

    fn dag(d: usize, edges: &[(usize, usize)]) -> Dag {
        Dag::from_edges(d, edges).unwrap()
    }

    #[test]
    fn shd_basic_cases() {
        let truth = dag(3, &[(0, 1), (1, 2)]);
        assert_eq!(shd(&truth, &truth).unwrap(), 0);
        assert_eq!(shd(&dag(3, &[]), &truth).unwrap(), 2);
        assert_eq!(shd(&dag(2, &[(1, 0)]), &dag(2, &[(0, 1)])).unwrap(), 1);
        assert!(shd(&dag(2, &[]), &dag(3, &[])).is_err());
    }

    #[test]
    fn shd_is_symmetric_on_random_graphs() {
        for seed in 0..50 {
            let a = gen_er(6, 2, seed).unwrap();
            let b = gen_er(6, 2, seed + 1000).unwrap();
            assert_eq!(shd(&a, &b).unwrap(), shd(&b, &a).unwrap());
            assert_eq!(shd(&a, &b).unwrap() == 0, a == b);
        }
    }

    #[test]
    fn sid_trivial_and_chain_cases() {
        let truth = dag(3, &[(0, 1), (1, 2)]);
        assert_eq!(sid(&truth, &truth).unwrap(), 0);
        // empty estimate: pairs (1,0), (2,0), (2,1) are wrong
        assert_eq!(sid(&dag(3, &[]), &truth).unwrap(), 3);
        // reversed single edge: both ordered pairs wrong
        assert_eq!(sid(&dag(2, &[(1, 0)]), &dag(2, &[(0, 1)])).unwrap(), 2);
    }

    #[test]
    fn sid_oracle_matches_graphical_on_fixtures() {
        let cases: Vec<(Dag, Dag)> = vec![
            (dag(3, &[]), dag(3, &[(0, 1), (1, 2)])),
            (
                dag(3, &[(2, 1), (1, 0)]),
                dag(3, &[(0, 1), (1, 2)]),
            ),
            (dag(2, &[(1, 0)]), dag(2, &[(0, 1)])),
            (
                dag(4, &[(0, 1), (1, 2), (2, 3)]),
                dag(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]),
            ),
        ];
        for (est, truth) in cases {
            let (w, omega) = generic_parameterization(&truth, 11);
            let graphical = sid(&est, &truth).unwrap();
            let oracle = sid_covariance_oracle(&est, &truth, &w.view(), &omega).unwrap();
            assert_eq!(graphical, oracle, "est {:?} truth {:?}", est.edges(), truth.edges());
        }
    }

    pub fn generic_parameterization(truth: &Dag, seed: u64) -> (Array2<f64>, Vec<f64>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = truth.d();
        let mut w = Array2::zeros((d, d));
        for (i, j) in truth.edges() {
            let mag = rng.gen_range(0.5..1.5);
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            w[[i, j]] = sign * mag;
        }
        let omega: Vec<f64> = (0..d).map(|_| rng.gen_range(0.8..1.2)).collect();
        (w, omega)
    }

    #[test]
    fn sortability_chain_extremes_and_ties() {
        let truth = dag(3, &[(0, 1), (1, 2)]);
        // strictly increasing variances along the chain
        let mut x = Array2::zeros((4, 3));
        for (t, row) in [[1.0, 2.0, 4.0], [-1.0, -2.0, -4.0], [0.5, 1.0, 2.0], [-0.5, -1.0, -2.0]]
            .iter()
            .enumerate()
        {
            for j in 0..3 {
                x[[t, j]] = row[j];
            }
        }
        assert_eq!(sortability(&x.view(), &truth, SortCriterion::Var).unwrap(), 1.0);
        // reversed chain flips the score to 0
        let rev = dag(3, &[(2, 1), (1, 0)]);
        assert_eq!(sortability(&x.view(), &rev, SortCriterion::Var).unwrap(), 0.0);
        // exact ties contribute one half
        let mut tied = Array2::zeros((4, 3));
        for t in 0..4 {
            let v = [1.0, -1.0, 2.0, -2.0][t];
            for j in 0..3 {
                tied[[t, j]] = v;
            }
        }
        assert_eq!(
            sortability(&tied.view(), &truth, SortCriterion::Var).unwrap(),
            0.5
        );
    }

    #[test]
    fn sortability_is_relabel_invariant_and_bounded() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let truth = gen_er(6, 2, 17).unwrap();
        let n = 80;
        let x = Array2::from_shape_fn((n, 6), |_| rng.gen::<f64>() * 3.0 - 1.5);
        let v = sortability(&x.view(), &truth, SortCriterion::Var).unwrap();
        assert!((0.0..=1.0).contains(&v));

        // relabel nodes consistently in both X and the graph
        let perm = [3usize, 0, 4, 1, 5, 2];
        let mut xp = Array2::zeros((n, 6));
        for j in 0..6 {
            xp.column_mut(perm[j]).assign(&x.column(j));
        }
        let edges: Vec<(usize, usize)> = truth
            .edges()
            .into_iter()
            .map(|(i, j)| (perm[i], perm[j]))
            .collect();
        let truth_p = Dag::from_edges(6, &edges).unwrap();
        let vp = sortability(&xp.view(), &truth_p, SortCriterion::Var).unwrap();
        assert!((v - vp).abs() < 1e-12);
    }

    #[test]
    fn r2_sortability_is_scale_invariant() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let truth = gen_er(5, 2, 23).unwrap();
        let scm = crate::misspec::vanilla_scm(&truth, 24).unwrap();
        let ds = crate::scm::sample_linear(&scm, 400, 25).unwrap();
        let x = ds.x().to_owned();
        let r2 = sortability(&x.view(), &truth, SortCriterion::R2).unwrap();

        let mut scaled = x.clone();
        for j in 0..5 {
            let factor = rng.gen_range(0.1..10.0);
            scaled.column_mut(j).mapv_inplace(|v| v * factor);
        }
        let r2_scaled = sortability(&scaled.view(), &truth, SortCriterion::R2).unwrap();
        assert!(
            (r2 - r2_scaled).abs() < 1e-9,
            "R^2 sortability moved under rescaling: {r2} vs {r2_scaled}"
        );
    }

    #[test]
    fn noise_ratio_cases() {
        assert_eq!(noise_ratio(&[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(noise_ratio(&[1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(noise_ratio(&[1.0, 1.0, 2.0]).unwrap(), 2.0);
        assert!(noise_ratio(&[]).is_err());
        assert!(noise_ratio(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn metric_record_validation() {
        let rec = MetricRecord {
            shd: 3,
            sid: 10,
            runtime_s: 0.1,
            sortability_var: 0.7,
            sortability_r2: 0.4,
            noise_ratio: 1.5,
        };
        assert!(rec.validate(10, 10).is_ok());
        let bad = MetricRecord { sid: 1000, ..rec };
        assert!(bad.validate(10, 10).is_err());
    }
}
