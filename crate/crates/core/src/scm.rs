//! Structural causal models and i.i.d. sampling: the linear vanilla generator
//! and the Gaussian-process generator used for mechanism violation.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::linalg::cholesky;
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDist {
    Gaussian,
    Exponential,
}

/// Per-node noise law: distribution family plus a standard-deviation vector.
/// Exponential noise is centered to mean zero before scaling, so every law
/// here has mean 0 and variance scale_i^2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub dist: NoiseDist,
    pub scale: Vec<f64>,
}

impl NoiseSpec {
    pub fn new(dist: NoiseDist, scale: Vec<f64>) -> Result<NoiseSpec> {
        if scale.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Parameter("noise scales must be positive".into()));
        }
        Ok(NoiseSpec { dist, scale })
    }

    /// Standard Gaussian noise at every node, the vanilla setting.
    pub fn standard_gaussian(d: usize) -> NoiseSpec {
        NoiseSpec {
            dist: NoiseDist::Gaussian,
            scale: vec![1.0; d],
        }
    }

    /// Centered unit-variance exponential noise at every node.
    pub fn standard_exponential(d: usize) -> NoiseSpec {
        NoiseSpec {
            dist: NoiseDist::Exponential,
            scale: vec![1.0; d],
        }
    }

    /// One centered, unit-variance draw.
    pub fn draw_unit(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self.dist {
            NoiseDist::Gaussian => rng.sample(StandardNormal),
            // Exp(1) has mean 1 and variance 1; subtracting the mean centers it.
            NoiseDist::Exponential => rng.sample::<f64, _>(Exp1) - 1.0,
        }
    }
}

/// Linear SCM: X_i = sum_p W[p][i] X_p + U_i on an acyclic support.
#[derive(Debug, Clone)]
pub struct LinearScm {
    dag: Dag,
    w: Array2<f64>,
    noise: NoiseSpec,
}

impl LinearScm {
    pub fn new(dag: Dag, w: Array2<f64>, noise: NoiseSpec) -> Result<LinearScm> {
        let d = dag.d();
        if w.nrows() != d || w.ncols() != d {
            return Err(Error::Shape(format!(
                "weights are {}x{}, dag has d={d}",
                w.nrows(),
                w.ncols()
            )));
        }
        if noise.scale.len() != d {
            return Err(Error::Shape("noise scale length != d".into()));
        }
        for i in 0..d {
            for j in 0..d {
                if w[[i, j]] != 0.0 && !dag.has_edge(i, j) {
                    return Err(Error::Parameter(format!(
                        "weight at ({i}, {j}) is off the dag's support"
                    )));
                }
            }
        }
        Ok(LinearScm { dag, w, noise })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn d(&self) -> usize {
        self.dag.d()
    }

    pub fn with_weights(&self, w: Array2<f64>) -> Result<LinearScm> {
        LinearScm::new(self.dag.clone(), w, self.noise.clone())
    }

    pub fn with_noise(&self, noise: NoiseSpec) -> Result<LinearScm> {
        LinearScm::new(self.dag.clone(), self.w.clone(), noise)
    }

    /// Applies the structural equations to a noise matrix, in place of U:
    /// columns are filled in topological order, emitted in node order.
    pub fn propagate(&self, noise: Array2<f64>) -> Array2<f64> {
        let mut x = noise;
        for &j in &self.dag.topological_order() {
            for p in self.dag.parents(j) {
                let w = self.w[[p, j]];
                if w != 0.0 {
                    let parent_col = x.column(p).to_owned();
                    let mut col = x.column_mut(j);
                    col.scaled_add(w, &parent_col);
                }
            }
        }
        x
    }

    pub fn describe(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "linear(d={}, edges={}, noise={:?})",
            self.d(),
            self.dag.edge_count(),
            self.noise.dist
        );
        s
    }
}

/// Draws edge weights uniformly from +-[0.5, 2] (sign with probability 1/2)
/// in row-major edge order; deterministic per seed.
pub fn make_linear_scm(dag: &Dag, noise: NoiseSpec, seed: u64) -> Result<LinearScm> {
    let d = dag.d();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Array2::zeros((d, d));
    for (i, j) in dag.edges() {
        let magnitude = rng.gen_range(0.5..2.0);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        w[[i, j]] = sign * magnitude;
    }
    LinearScm::new(dag.clone(), w, noise)
}

/// An i.i.d. noise matrix with the given per-node scales.
pub fn noise_matrix(noise: &NoiseSpec, n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let d = noise.scale.len();
    let mut u = Array2::zeros((n, d));
    for t in 0..n {
        for i in 0..d {
            u[[t, i]] = noise.draw_unit(rng) * noise.scale[i];
        }
    }
    u
}

/// Provenance carried by every dataset.
#[derive(Debug, Clone)]
pub struct DatasetMeta {
    pub scenario: String,
    pub seed: u64,
    pub scm_desc: String,
    pub truth: Dag,
}

/// An n x d sample matrix plus provenance. All entries finite, n > 0.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Array2<f64>,
    meta: DatasetMeta,
}

impl Dataset {
    pub fn new(x: Array2<f64>, meta: DatasetMeta) -> Result<Dataset> {
        if x.nrows() == 0 {
            return Err(Error::DegenerateData("dataset has zero rows".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateData("dataset has non-finite entries".into()));
        }
        Ok(Dataset { x, meta })
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn truth(&self) -> &Dag {
        &self.meta.truth
    }

    /// Same samples under a new scenario tag.
    pub fn with_data(&self, x: Array2<f64>, scenario: impl Into<String>) -> Result<Dataset> {
        let mut meta = self.meta.clone();
        meta.scenario = scenario.into();
        Dataset::new(x, meta)
    }

    pub fn column_means(&self) -> Array1<f64> {
        self.x.mean_axis(Axis(0)).expect("n > 0 by invariant")
    }

    /// Per-column sample variance (n-1 denominator).
    pub fn column_sample_variances(&self) -> Array1<f64> {
        column_sample_variances(&self.x.view())
    }

    /// CSV with header `x0,...,x{d-1}`, one row per sample. Floats use the
    /// shortest round-trip representation so output is byte-stable.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let header: Vec<String> = (0..self.d()).map(|i| format!("x{i}")).collect();
        s.push_str(&header.join(","));
        s.push('\n');
        for row in self.x.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    /// Sidecar metadata document describing provenance, including the true
    /// graph as an edge list.
    pub fn metadata_json(&self) -> String {
        serde_json::json!({
            "scenario": self.meta.scenario,
            "seed": self.meta.seed,
            "scm": self.meta.scm_desc,
            "true_dag": self.meta.truth.to_edge_list(),
        })
        .to_string()
    }
}

pub fn column_sample_variances(x: &ArrayView2<f64>) -> Array1<f64> {
    let n = x.nrows();
    let means = x.mean_axis(Axis(0)).expect("non-empty");
    let mut vars = Array1::zeros(x.ncols());
    for j in 0..x.ncols() {
        let mut acc = 0.0;
        for t in 0..n {
            let dv = x[[t, j]] - means[j];
            acc += dv * dv;
        }
        vars[j] = if n > 1 { acc / (n - 1) as f64 } else { 0.0 };
    }
    vars
}

/// Samples n i.i.d. rows from the linear SCM.
pub fn sample_linear(scm: &LinearScm, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Parameter("sample_linear requires n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = noise_matrix(scm.noise(), n, &mut rng);
    let x = scm.propagate(u);
    Dataset::new(
        x,
        DatasetMeta {
            scenario: "vanilla".into(),
            seed,
            scm_desc: scm.describe(),
            truth: scm.dag().clone(),
        },
    )
}

/// Additive-noise Gaussian-process SCM with an RBF kernel.
#[derive(Debug, Clone)]
pub struct GpScm {
    dag: Dag,
    bandwidth: f64,
    noise: NoiseSpec,
}

impl GpScm {
    pub fn new(dag: Dag, bandwidth: f64, noise: NoiseSpec) -> Result<GpScm> {
        if !(bandwidth > 0.0) {
            return Err(Error::Parameter("bandwidth must be positive".into()));
        }
        if noise.scale.len() != dag.d() {
            return Err(Error::Shape("noise scale length != d".into()));
        }
        Ok(GpScm { dag, bandwidth, noise })
    }

    /// Bandwidth-one RBF, the nonlinear vanilla setting.
    pub fn vanilla(dag: Dag) -> GpScm {
        let d = dag.d();
        GpScm {
            dag,
            bandwidth: 1.0,
            noise: NoiseSpec::standard_gaussian(d),
        }
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn describe(&self) -> String {
        format!(
            "gp(d={}, edges={}, bandwidth={}, noise={:?})",
            self.dag.d(),
            self.dag.edge_count(),
            self.bandwidth,
            self.noise.dist
        )
    }
}

const GP_MAX_N: usize = 5000;

/// Samples the GP SCM: each non-root node draws one sample path of a
/// zero-mean GP over its parents' values, plus independent noise.
pub fn sample_gp(scm: &GpScm, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Parameter("sample_gp requires n >= 1".into()));
    }
    if n > GP_MAX_N {
        return Err(Error::Parameter(format!(
            "sample_gp is O(n^3) per node; n={n} exceeds the {GP_MAX_N} guard"
        )));
    }
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seeding::derive(seed, "gp-noise", 0));
    let u = noise_matrix(&scm.noise, n, &mut noise_rng);
    let mut x = u;
    for &j in &scm.dag.topological_order() {
        let parents = scm.dag.parents(j);
        if parents.is_empty() {
            continue;
        }
        let mut inputs = Array2::zeros((n, parents.len()));
        for (c, &p) in parents.iter().enumerate() {
            inputs.column_mut(c).assign(&x.column(p));
        }
        let f = gp_sample_function(
            &inputs.view(),
            scm.bandwidth,
            seeding::derive(seed, "gp-node", j as u64),
        )?;
        let mut col = x.column_mut(j);
        col += &f;
    }
    Dataset::new(
        x,
        DatasetMeta {
            scenario: "vanilla".into(),
            seed,
            scm_desc: scm.describe(),
            truth: scm.dag.clone(),
        },
    )
}

/// Draws one realization of a zero-mean RBF-kernel GP at the given input
/// rows. The draw is a function of the input values, not their order: rows
/// are canonicalized by sorting before the kernel factorization, so permuting
/// input rows permutes the output identically.
pub fn gp_sample_function(
    inputs: &ArrayView2<f64>,
    bandwidth: f64,
    seed: u64,
) -> Result<Array1<f64>> {
    let n = inputs.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        for c in 0..inputs.ncols() {
            match inputs[[a, c]].partial_cmp(&inputs[[b, c]]) {
                Some(std::cmp::Ordering::Equal) | None => continue,
                Some(o) => return o,
            }
        }
        std::cmp::Ordering::Equal
    });

    let two_bw_sq = 2.0 * bandwidth * bandwidth;
    let mut k = Array2::zeros((n, n));
    for a in 0..n {
        for b in 0..=a {
            let mut sq = 0.0;
            for c in 0..inputs.ncols() {
                let dv = inputs[[order[a], c]] - inputs[[order[b], c]];
                sq += dv * dv;
            }
            let v = (-sq / two_bw_sq).exp();
            k[[a, b]] = v;
            k[[b, a]] = v;
        }
    }

    let trace: f64 = (0..n).map(|i| k[[i, i]]).sum();
    let mut jitter = 1e-8 * trace / n as f64;
    let mut chol = None;
    for _ in 0..=6 {
        let mut kj = k.clone();
        for i in 0..n {
            kj[[i, i]] += jitter;
        }
        match cholesky(&kj.view()) {
            Ok(l) => {
                chol = Some(l);
                break;
            }
            Err(_) => jitter *= 2.0,
        }
    }
    let l = chol.ok_or_else(|| {
        Error::Numerical("GP kernel Cholesky failed after max jitter".into())
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Array1<f64> = Array1::from_shape_fn(n, |_| rng.sample(StandardNormal));
    let f_sorted = l.dot(&z);
    let mut f = Array1::zeros(n);
    for (pos, &row) in order.iter().enumerate() {
        f[row] = f_sorted[pos];
    }
    Ok(f)
}
