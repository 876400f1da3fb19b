//! Stochastic multi-class packing environment.
//!
//! Each round one arrival of class `j` shows `K` fresh context vectors. An
//! admitted arm yields a reward `θ(j)ᵀx + η` and a consumption vector
//! `W(j)ᵀx + ε` with Gaussian noise. Contexts, classes and noise are drawn
//! from the caller's RNG only, so a seed fixes the whole stream.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("bad scenario: {0}")]
    BadScenario(String),
    #[error("bad action: {0}")]
    BadAction(usize),
    #[error("means unavailable")]
    MeansUnavailable,
}

/// Ground-truth parameters. Class and arm indices are zero-based here; the
/// CSV layer shifts them to one-based labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub classes: usize,
    pub arms: usize,
    pub dim: usize,
    pub resources: usize,
    /// `theta[j]` has length `dim`.
    pub theta: Vec<Vec<f64>>,
    /// `w[j]` is row-major `dim x resources`.
    pub w: Vec<Vec<f64>>,
    pub class_probs: Vec<f64>,
    pub sigma_r: f64,
    pub sigma_b: f64,
    /// Per-period budget, one entry per resource.
    pub rho: Vec<f64>,
    pub horizon: usize,
}

/// `⌈d/2⌉`
pub fn half_up(d: usize) -> usize {
    d.div_ceil(2)
}

impl ModelParams {
    /// Single-class instance whose first arm is optimal with reward 1 and
    /// consumption `rho` in every resource.
    ///
    /// The optimal arm's context is 1 on its last `⌈d/2⌉` coordinates; those
    /// coordinates carry weight `1/⌈d/2⌉` in θ and `rho/⌈d/2⌉` in every
    /// column of W. The remaining coordinates carry -1 in θ and `rho` in W.
    pub fn regret_computable(
        dim: usize,
        arms: usize,
        resources: usize,
        rho: f64,
        horizon: usize,
        sigma_r: f64,
        sigma_b: f64,
    ) -> Self {
        let h = half_up(dim);
        let low = dim - h;
        let mut theta = vec![-1.0; dim];
        let mut w = vec![rho; dim * resources];
        for i in low..dim {
            theta[i] = 1.0 / h as f64;
            for r in 0..resources {
                w[i * resources + r] = rho / h as f64;
            }
        }
        Self {
            classes: 1,
            arms,
            dim,
            resources,
            theta: vec![theta],
            w: vec![w],
            class_probs: vec![1.0],
            sigma_r,
            sigma_b,
            rho: vec![rho; resources],
            horizon,
        }
    }

    /// Multi-class instance with every entry of θ(j) and W(j) drawn from
    /// U[0, 1] using `param_rng`, uniform class prior.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform_multiclass<R: Rng + ?Sized>(
        classes: usize,
        arms: usize,
        dim: usize,
        resources: usize,
        rho: f64,
        horizon: usize,
        sigma_r: f64,
        sigma_b: f64,
        param_rng: &mut R,
    ) -> Self {
        let theta = (0..classes)
            .map(|_| (0..dim).map(|_| param_rng.random::<f64>()).collect())
            .collect();
        let w = (0..classes)
            .map(|_| (0..dim * resources).map(|_| param_rng.random::<f64>()).collect())
            .collect();
        Self {
            classes,
            arms,
            dim,
            resources,
            theta,
            w,
            class_probs: vec![1.0 / classes as f64; classes],
            sigma_r,
            sigma_b,
            rho: vec![rho; resources],
            horizon,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::BadScenario(m.to_string()));
        if self.classes == 0 || self.arms == 0 || self.dim == 0 || self.resources == 0 {
            return bad("J, K, d and m must all be at least 1");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if self.theta.len() != self.classes || self.theta.iter().any(|t| t.len() != self.dim) {
            return bad("theta must be J vectors of length d");
        }
        if self.w.len() != self.classes
            || self.w.iter().any(|w| w.len() != self.dim * self.resources)
        {
            return bad("w must be J matrices of shape d x m");
        }
        if self.class_probs.len() != self.classes {
            return bad("class_probs must have J entries");
        }
        if self.class_probs.iter().any(|&p| !(p > 0.0)) {
            return bad("every class probability must be positive");
        }
        let total: f64 = self.class_probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad("class probabilities must sum to 1");
        }
        if self.rho.len() != self.resources || self.rho.iter().any(|&r| !(r > 0.0)) {
            return bad("rho must be positive with one entry per resource");
        }
        if !(self.sigma_r >= 0.0) || !(self.sigma_b >= 0.0) {
            return bad("noise scales must be nonnegative");
        }
        let finite = self.theta.iter().flatten().all(|v| v.is_finite())
            && self.w.iter().flatten().all(|v| v.is_finite())
            && self.sigma_r.is_finite()
            && self.sigma_b.is_finite();
        if !finite {
            return bad("parameters must be finite");
        }
        Ok(())
    }

    /// Total budget `B = Tρ` per resource.
    pub fn total_budget(&self) -> Vec<f64> {
        self.rho.iter().map(|r| r * self.horizon as f64).collect()
    }
}

/// How the `K` contexts of an arrival are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContextDistribution {
    /// Arm 1 is fixed at `(0,…,0,1,…,1)`; other arms draw their first
    /// `⌈d/2⌉` coordinates from U[0, 0.05] and the rest from U[-0.05, 0].
    RegretComputable,
    /// Every coordinate of arm `k` in class `j` (one-based) is drawn from
    /// U[kj/(KJ) - 1, kj/(KJ) + 1].
    UniformMulticlass,
    /// `support[j][k]` lists candidate contexts, one drawn uniformly per
    /// round. `means[j][k]`, when given, is used for the oracle.
    CustomTable {
        support: Vec<Vec<Vec<Vec<f64>>>>,
        #[serde(default)]
        means: Option<Vec<Vec<Vec<f64>>>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arrival {
    /// One-based round index.
    pub t: usize,
    pub class: usize,
    /// `contexts[k]` has length `d`.
    pub contexts: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feedback {
    pub reward: f64,
    pub consumption: Vec<f64>,
}

/// Expected per-arm utility and consumption for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedUtilities {
    pub utility: Vec<f64>,
    /// `consumption[k]` has length `m`.
    pub consumption: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Environment {
    params: ModelParams,
    dist: ContextDistribution,
    // cumulative class probabilities for the inverse-CDF draw
    class_cdf: Vec<f64>,
    // context means per class per arm, when known in closed form
    means: Option<Vec<Vec<Vec<f64>>>>,
}

pub fn build_scenario(params: ModelParams, dist: ContextDistribution) -> Result<Environment, EnvError> {
    Environment::new(params, dist)
}

impl Environment {
    pub fn new(params: ModelParams, dist: ContextDistribution) -> Result<Self, EnvError> {
        params.validate()?;
        let (j_n, k_n, d) = (params.classes, params.arms, params.dim);
        let means = match &dist {
            ContextDistribution::RegretComputable => {
                let h = half_up(d);
                let mut best = vec![0.0; d];
                for v in best.iter_mut().skip(d - h) {
                    *v = 1.0;
                }
                let mut other = vec![-0.025; d];
                for v in other.iter_mut().take(h) {
                    *v = 0.025;
                }
                let per_class: Vec<Vec<f64>> = (0..k_n)
                    .map(|k| if k == 0 { best.clone() } else { other.clone() })
                    .collect();
                Some(vec![per_class; j_n])
            }
            ContextDistribution::UniformMulticlass => Some(
                (0..j_n)
                    .map(|j| {
                        (0..k_n)
                            .map(|k| vec![uniform_multiclass_center(k, j, k_n, j_n); d])
                            .collect()
                    })
                    .collect(),
            ),
            ContextDistribution::CustomTable { support, means } => {
                let shape_ok = support.len() == j_n
                    && support.iter().all(|per_arm| {
                        per_arm.len() == k_n
                            && per_arm
                                .iter()
                                .all(|rows| !rows.is_empty() && rows.iter().all(|x| x.len() == d))
                    });
                if !shape_ok {
                    return Err(EnvError::BadScenario(
                        "custom table must list at least one length-d context per class and arm"
                            .into(),
                    ));
                }
                if let Some(m) = means {
                    let ok = m.len() == j_n
                        && m.iter().all(|a| a.len() == k_n && a.iter().all(|x| x.len() == d));
                    if !ok {
                        return Err(EnvError::BadScenario("custom means have the wrong shape".into()));
                    }
                }
                means.clone()
            }
        };
        let mut acc = 0.0;
        let class_cdf = params
            .class_probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self {
            params,
            dist,
            class_cdf,
            means,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn distribution(&self) -> &ContextDistribution {
        &self.dist
    }

    pub fn sample_arrival<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> Arrival {
        let p = &self.params;
        let u: f64 = rng.random();
        let class = self
            .class_cdf
            .iter()
            .position(|&c| u < c)
            .unwrap_or(p.classes - 1);
        let contexts = self.sample_contexts(class, rng);
        Arrival { t, class, contexts }
    }

    fn sample_contexts<R: Rng + ?Sized>(&self, class: usize, rng: &mut R) -> Vec<Vec<f64>> {
        let p = &self.params;
        let d = p.dim;
        match &self.dist {
            ContextDistribution::RegretComputable => {
                let h = half_up(d);
                (0..p.arms)
                    .map(|k| {
                        if k == 0 {
                            (0..d).map(|i| if i >= d - h { 1.0 } else { 0.0 }).collect()
                        } else {
                            (0..d)
                                .map(|i| {
                                    let u: f64 = rng.random();
                                    if i < h {
                                        0.05 * u
                                    } else {
                                        -0.05 * u
                                    }
                                })
                                .collect()
                        }
                    })
                    .collect()
            }
            ContextDistribution::UniformMulticlass => (0..p.arms)
                .map(|k| {
                    let c = uniform_multiclass_center(k, class, p.arms, p.classes);
                    (0..d).map(|_| c - 1.0 + 2.0 * rng.random::<f64>()).collect()
                })
                .collect(),
            ContextDistribution::CustomTable { support, .. } => support[class]
                .iter()
                .map(|rows| rows[rng.random_range(0..rows.len())].clone())
                .collect(),
        }
    }

    pub fn sample_feedback<R: Rng + ?Sized>(
        &self,
        arrival: &Arrival,
        arm: usize,
        rng: &mut R,
    ) -> Result<Feedback, EnvError> {
        let p = &self.params;
        if arm >= p.arms {
            return Err(EnvError::BadAction(arm));
        }
        let x = &arrival.contexts[arm];
        let j = arrival.class;
        let noise_r: f64 = StandardNormal.sample(rng);
        let reward = dot(&p.theta[j], x) + p.sigma_r * noise_r;
        let mut consumption = mat_t_vec(&p.w[j], p.dim, p.resources, x);
        for c in consumption.iter_mut() {
            let n: f64 = StandardNormal.sample(rng);
            *c += p.sigma_b * n;
        }
        Ok(Feedback { reward, consumption })
    }

    /// Closed-form context means per arm of class `j`, when available.
    pub fn context_means(&self, class: usize) -> Option<&[Vec<f64>]> {
        self.means.as_ref().map(|m| m[class].as_slice())
    }

    /// `u*(j)_k = θ(j)ᵀE[x_k]` and `b*(j)_k = W(j)ᵀE[x_k]`, exact by linearity.
    pub fn expected_utilities(&self, class: usize) -> Result<ExpectedUtilities, EnvError> {
        let means = self.context_means(class).ok_or(EnvError::MeansUnavailable)?;
        Ok(self.utilities_at(class, means))
    }

    fn utilities_at(&self, class: usize, means: &[Vec<f64>]) -> ExpectedUtilities {
        let p = &self.params;
        ExpectedUtilities {
            utility: means.iter().map(|x| dot(&p.theta[class], x)).collect(),
            consumption: means
                .iter()
                .map(|x| mat_t_vec(&p.w[class], p.dim, p.resources, x))
                .collect(),
        }
    }

    /// Monte-Carlo estimate of the expected utilities with the standard
    /// error of each utility mean.
    pub fn monte_carlo_utilities<R: Rng + ?Sized>(
        &self,
        class: usize,
        samples: usize,
        rng: &mut R,
    ) -> (ExpectedUtilities, Vec<f64>) {
        let p = &self.params;
        let mut sum = vec![vec![0.0; p.dim]; p.arms];
        let mut util_sq = vec![0.0; p.arms];
        let mut util_sum = vec![0.0; p.arms];
        for _ in 0..samples {
            let ctx = self.sample_contexts(class, rng);
            for (k, x) in ctx.iter().enumerate() {
                let u = dot(&p.theta[class], x);
                util_sum[k] += u;
                util_sq[k] += u * u;
                for (s, v) in sum[k].iter_mut().zip(x) {
                    *s += v;
                }
            }
        }
        let n = samples as f64;
        let means: Vec<Vec<f64>> = sum
            .into_iter()
            .map(|s| s.into_iter().map(|v| v / n).collect())
            .collect();
        let se = util_sum
            .iter()
            .zip(&util_sq)
            .map(|(s, sq)| {
                let mean = s / n;
                let var = (sq / n - mean * mean).max(0.0);
                (var / n).sqrt()
            })
            .collect();
        (self.utilities_at(class, &means), se)
    }
}

/// Centre `kj/(KJ)` of the uniform context interval for zero-based `k`, `j`.
pub fn uniform_multiclass_center(k: usize, j: usize, arms: usize, classes: usize) -> f64 {
    ((k + 1) * (j + 1)) as f64 / (arms * classes) as f64
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Wᵀx` for row-major `w` of shape `rows x cols`.
pub(crate) fn mat_t_vec(w: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for i in 0..rows {
        let xi = x[i];
        for (o, wv) in out.iter_mut().zip(&w[i * cols..(i + 1) * cols]) {
            *o += xi * wv;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{min_eigenvalue_sym, SymMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn a1(d: usize, sigma: f64) -> Environment {
        let params = ModelParams::regret_computable(d, 5, 3, 0.2, 100, sigma, sigma);
        build_scenario(params, ContextDistribution::RegretComputable).unwrap()
    }

    fn a2(sigma: f64) -> Environment {
        let mut prng = ChaCha8Rng::seed_from_u64(1);
        let params = ModelParams::uniform_multiclass(3, 10, 5, 2, 0.5, 100, sigma, sigma, &mut prng);
        build_scenario(params, ContextDistribution::UniformMulticlass).unwrap()
    }

    #[test]
    fn regret_computable_best_arm_has_reward_one_and_consumption_rho() {
        for d in [1, 2, 3, 4, 5, 10, 11, 40] {
            let env = a1(d, 0.0);
            let e = env.expected_utilities(0).unwrap();
            assert!((e.utility[0] - 1.0).abs() < 1e-12, "d={d}");
            for &b in &e.consumption[0] {
                assert!((b - 0.2).abs() < 1e-12, "d={d}");
            }
            for k in 1..5 {
                assert!(e.utility[k] < 1.0);
            }
        }
    }

    #[test]
    fn regret_computable_theta_for_d2() {
        let env = a1(2, 0.0);
        assert_eq!(env.params().theta[0], vec![-1.0, 1.0]);
    }

    #[test]
    fn uniform_multiclass_ranges() {
        let env = a2(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for t in 1..=2000 {
            let arr = env.sample_arrival(t, &mut rng);
            for (k, x) in arr.contexts.iter().enumerate() {
                let c = ((k + 1) * (arr.class + 1)) as f64 / 30.0;
                assert_eq!(x.len(), 5);
                assert!(x.iter().all(|&v| v >= c - 1.0 && v <= c + 1.0));
            }
        }
    }

    #[test]
    fn single_class_always_drawn() {
        let env = a1(4, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((1..=500).all(|t| env.sample_arrival(t, &mut rng).class == 0));
    }

    #[test]
    fn class_frequency_within_binomial_band() {
        let mut params = ModelParams::regret_computable(2, 2, 1, 0.5, 10, 0.0, 0.0);
        params.classes = 2;
        params.theta = vec![params.theta[0].clone(); 2];
        params.w = vec![params.w[0].clone(); 2];
        params.class_probs = vec![0.5, 0.5];
        let env = build_scenario(params, ContextDistribution::RegretComputable).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let ones = (0..n).filter(|&t| env.sample_arrival(t, &mut rng).class == 0).count();
        let freq = ones as f64 / n as f64;
        assert!((freq - 0.5).abs() <= 0.01, "{freq}");
    }

    #[test]
    fn regret_computable_best_context_is_fixed() {
        let env = a1(5, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for t in 1..=100 {
            let arr = env.sample_arrival(t, &mut rng);
            assert_eq!(arr.contexts[0], vec![0.0, 0.0, 1.0, 1.0, 1.0]);
        }
    }

    #[test]
    fn noiseless_feedback_is_exact() {
        let env = a2(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let arr = env.sample_arrival(1, &mut rng);
        let fb = env.sample_feedback(&arr, 3, &mut rng).unwrap();
        let p = env.params();
        assert_eq!(fb.reward, dot(&p.theta[arr.class], &arr.contexts[3]));
        assert_eq!(fb.consumption, mat_t_vec(&p.w[arr.class], 5, 2, &arr.contexts[3]));

        let env = a1(5, 0.0);
        let arr = env.sample_arrival(1, &mut rng);
        let fb = env.sample_feedback(&arr, 0, &mut rng).unwrap();
        assert!((fb.reward - 1.0).abs() < 1e-12);
        assert!(fb.consumption.iter().all(|&b| (b - 0.2).abs() < 1e-12));
    }

    #[test]
    fn bad_action_is_rejected() {
        let env = a1(3, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let arr = env.sample_arrival(1, &mut rng);
        assert_eq!(env.sample_feedback(&arr, 5, &mut rng), Err(EnvError::BadAction(5)));
    }

    #[test]
    fn noisy_reward_mean_within_clt_band() {
        let sigma = 0.3;
        let env = a1(4, sigma);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let arr = env.sample_arrival(1, &mut rng);
        let truth = dot(&env.params().theta[0], &arr.contexts[2]);
        let n = 100_000;
        let mean: f64 =
            (0..n).map(|_| env.sample_feedback(&arr, 2, &mut rng).unwrap().reward).sum::<f64>() / n as f64;
        assert!((mean - truth).abs() <= 3.0 * sigma / (n as f64).sqrt());
    }

    #[test]
    fn suboptimal_arm_expectation_matches_monte_carlo() {
        let env = a1(4, 0.0);
        let exact = env.expected_utilities(0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (mc, se) = env.monte_carlo_utilities(0, 1_000_000, &mut rng);
        for k in 1..5 {
            assert!((mc.utility[k] - exact.utility[k]).abs() <= 3.0 * se[k] + 1e-12);
        }
    }

    #[test]
    fn uniform_mean_propagates_linearly() {
        let env = a2(0.0);
        let e = env.expected_utilities(1).unwrap();
        let p = env.params();
        let c = uniform_multiclass_center(4, 1, 10, 3);
        let expect: f64 = p.theta[1].iter().map(|t| t * c).sum();
        assert!((e.utility[4] - expect).abs() < 1e-12);
    }

    #[test]
    fn custom_table_without_means() {
        let params = ModelParams::regret_computable(1, 2, 1, 0.5, 10, 0.0, 0.0);
        let dist = ContextDistribution::CustomTable {
            support: vec![vec![vec![vec![1.0], vec![0.5]], vec![vec![0.2]]]],
            means: None,
        };
        let env = build_scenario(params, dist).unwrap();
        assert_eq!(env.expected_utilities(0), Err(EnvError::MeansUnavailable));
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let arr = env.sample_arrival(1, &mut rng);
        assert_eq!(arr.contexts[1], vec![0.2]);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let mut params = ModelParams::regret_computable(3, 2, 1, 0.5, 10, 0.0, 0.0);
        params.class_probs = vec![0.9];
        assert!(matches!(
            build_scenario(params.clone(), ContextDistribution::RegretComputable),
            Err(EnvError::BadScenario(_))
        ));
        params.class_probs = vec![1.0];
        params.rho = vec![0.0];
        assert!(build_scenario(params, ContextDistribution::RegretComputable).is_err());
    }

    #[test]
    fn identical_seeds_give_identical_streams() {
        let env = a2(0.2);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (1..=50)
                .map(|t| {
                    let a = env.sample_arrival(t, &mut rng);
                    let f = env.sample_feedback(&a, t % 10, &mut rng).unwrap();
                    (a, f)
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }

    #[test]
    fn average_context_covariance_is_positive_definite() {
        for env in [a1(6, 0.0), a2(0.0)] {
            let p = env.params().clone();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut per_class: Vec<(SymMatrix, usize)> =
                (0..p.classes).map(|_| (SymMatrix::zeros(p.dim), 0)).collect();
            for t in 1..=10_000 {
                let arr = env.sample_arrival(t, &mut rng);
                let (m, n) = &mut per_class[arr.class];
                for x in &arr.contexts {
                    m.add_outer(x, 1.0 / p.arms as f64);
                }
                *n += 1;
            }
            for (m, n) in per_class {
                let mut avg = m;
                let scale = 1.0 / n as f64;
                let rows: Vec<Vec<f64>> = avg
                    .to_rows()
                    .into_iter()
                    .map(|r| r.into_iter().map(|v| v * scale).collect())
                    .collect();
                avg = SymMatrix::from_rows(&rows).unwrap();
                assert!(min_eigenvalue_sym(&avg).unwrap() > 1e-4);
            }
        }
    }
}
