//! Resampled doubly-robust estimation of the per-class reward and
//! consumption parameters.
//!
//! Contexts of one class only touch that class's `d x d` block of the
//! stacked `J·d` Gram matrices, so every Gram is stored as `J` blocks and
//! each admitted round updates, factors and solves a single block.
//!
//! After every admission the arm actually played is `a`. A pseudo-action `h`
//! is drawn from the resampling distribution `φ`; rounds with `h == a` form
//! the agreement set Ψ and contribute pseudo-targets for all `K` arms.
//! Pseudo-targets of unplayed arms are imputed from the IPW estimate Θ̌ at
//! the current sample size, which is carried implicitly through the matrix
//! `M` below instead of re-imputing every past round.

use crate::environment::{mat_t_vec, Arrival, Feedback};
use crate::linalg::{min_eigenvalue_sym, Cholesky, LinalgError, SymMatrix};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("resampling degenerate")]
    ResamplingDegenerate,
    #[error("resampling probability must be positive")]
    NonPositiveProbability,
    #[error("class unseen")]
    ClassUnseen,
    #[error("bad action: {0}")]
    BadAction(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, EstimatorError>;

/// `log(Jd/δ)`
pub fn log_term(classes: usize, dim: usize, delta: f64) -> f64 {
    ((classes * dim) as f64 / delta).ln()
}

/// Offset `16d(K-1)log(Jd/δ)` added to every block of `F`.
pub fn f_offset(classes: usize, arms: usize, dim: usize, delta: f64) -> f64 {
    16.0 * dim as f64 * (arms as f64 - 1.0) * log_term(classes, dim, delta)
}

/// Resampling probabilities for an admission of arm `a`: each other arm
/// gets `16L/λ`, the played arm the rest.
pub fn resample_distribution(lambda_min: f64, a: usize, arms: usize, log_l: f64) -> Result<Vec<f64>> {
    if a >= arms {
        return Err(EstimatorError::BadAction(a));
    }
    if arms == 1 {
        return Ok(vec![1.0]);
    }
    let other = 16.0 * log_l / lambda_min;
    let own = 1.0 - (arms as f64 - 1.0) * other;
    // a relative slack of a few ulps covers λ exactly at the offset
    if !(own >= -1e-12) || !other.is_finite() {
        return Err(EstimatorError::ResamplingDegenerate);
    }
    let mut phi = vec![other; arms];
    phi[a] = own.max(0.0);
    Ok(phi)
}

/// Categorical draw by inverse CDF with a single uniform.
pub fn draw_pseudo_action<R: Rng + ?Sized>(phi: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in phi.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // rounding left u above the final partial sum; take the last positive entry
    phi.iter().rposition(|&p| p > 0.0).unwrap_or(phi.len() - 1)
}

/// `1{h=k}/φ_k · observed + (1 - 1{h=k}/φ_k) · imputed`, elementwise.
///
/// `observed` is only read when `h == k`.
pub fn pseudo_target(h: usize, k: usize, phi_k: f64, observed: &[f64], imputed: &[f64]) -> Result<Vec<f64>> {
    if !(phi_k > 0.0) {
        return Err(EstimatorError::NonPositiveProbability);
    }
    if h != k {
        return Ok(imputed.to_vec());
    }
    let w = 1.0 / phi_k;
    Ok(observed
        .iter()
        .zip(imputed)
        .map(|(o, i)| w * o + (1.0 - w) * i)
        .collect())
}

#[derive(Debug, Clone)]
struct ClassBlock {
    f: SymMatrix,
    v: SymMatrix,
    a: SymMatrix,
    // V - A: the part of the V-normal equations carried by imputed targets
    m: SymMatrix,
    lambda_f: f64,
    // Σ_Ψ x_a y/φ_a + Σ_¬Ψ x_a y, shared by both estimators
    score_r: Vec<f64>,
    // row-major d x m
    score_b: Vec<f64>,
    theta_check: Vec<f64>,
    theta_hat: Vec<f64>,
    w_check: Vec<f64>,
    w_hat: Vec<f64>,
    admitted: usize,
    // arrivals of this class, admitted or not
    arrivals: usize,
    // K x d context sums over all arrivals of this class
    ctx_sum: Vec<Vec<f64>>,
}

/// Outcome of one admission, kept for traces and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct Admission {
    pub phi: Vec<f64>,
    pub h: usize,
    pub in_psi: bool,
    pub lambda_min: f64,
}

#[derive(Debug, Clone)]
pub struct EstimatorState {
    classes: usize,
    arms: usize,
    dim: usize,
    resources: usize,
    log_l: f64,
    blocks: Vec<ClassBlock>,
    psi_count: usize,
    n_admitted: usize,
    harmonic_sum: f64,
    total_arrivals: usize,
}

impl EstimatorState {
    pub fn new(classes: usize, arms: usize, dim: usize, resources: usize, delta: f64) -> Self {
        assert!(classes >= 1 && arms >= 1 && dim >= 1 && resources >= 1);
        assert!(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
        let log_l = log_term(classes, dim, delta);
        // a single arm leaves F without an offset; fall back to the identity
        // used by V and A so λ_min(F) stays positive
        let offset = f_offset(classes, arms, dim, delta).max(1.0);
        let block = ClassBlock {
            f: SymMatrix::scaled_identity(dim, offset),
            v: SymMatrix::identity(dim),
            a: SymMatrix::identity(dim),
            m: SymMatrix::zeros(dim),
            lambda_f: offset,
            score_r: vec![0.0; dim],
            score_b: vec![0.0; dim * resources],
            theta_check: vec![0.0; dim],
            theta_hat: vec![0.0; dim],
            w_check: vec![0.0; dim * resources],
            w_hat: vec![0.0; dim * resources],
            admitted: 0,
            arrivals: 0,
            ctx_sum: vec![vec![0.0; dim]; arms],
        };
        Self {
            classes,
            arms,
            dim,
            resources,
            log_l,
            blocks: vec![block; classes],
            psi_count: 0,
            n_admitted: 0,
            harmonic_sum: 0.0,
            total_arrivals: 0,
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resources(&self) -> usize {
        self.resources
    }

    pub fn log_l(&self) -> f64 {
        self.log_l
    }

    pub fn psi_count(&self) -> usize {
        self.psi_count
    }

    pub fn n_admitted(&self) -> usize {
        self.n_admitted
    }

    pub fn harmonic_sum(&self) -> f64 {
        self.harmonic_sum
    }

    pub fn total_arrivals(&self) -> usize {
        self.total_arrivals
    }

    /// λ_min of the stacked `F`, i.e. the minimum over class blocks.
    pub fn lambda_min_f(&self) -> f64 {
        self.blocks.iter().map(|b| b.lambda_f).fold(f64::INFINITY, f64::min)
    }

    pub fn lambda_min_per_class(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.lambda_f).collect()
    }

    pub fn class_arrivals(&self, j: usize) -> usize {
        self.blocks[j].arrivals
    }

    pub fn class_admitted(&self, j: usize) -> usize {
        self.blocks[j].admitted
    }

    pub fn context_sums(&self, j: usize) -> &[Vec<f64>] {
        &self.blocks[j].ctx_sum
    }

    pub fn theta_check(&self, j: usize) -> &[f64] {
        &self.blocks[j].theta_check
    }

    pub fn theta_hat(&self, j: usize) -> &[f64] {
        &self.blocks[j].theta_hat
    }

    /// Row-major `d x m`.
    pub fn w_check(&self, j: usize) -> &[f64] {
        &self.blocks[j].w_check
    }

    /// Row-major `d x m`.
    pub fn w_hat(&self, j: usize) -> &[f64] {
        &self.blocks[j].w_hat
    }

    pub fn gram_f(&self, j: usize) -> &SymMatrix {
        &self.blocks[j].f
    }

    pub fn gram_v(&self, j: usize) -> &SymMatrix {
        &self.blocks[j].v
    }

    pub fn gram_a(&self, j: usize) -> &SymMatrix {
        &self.blocks[j].a
    }

    /// Adds this round's contexts to the class means used for utility
    /// estimates. Called once per round whether or not the arrival is
    /// admitted.
    pub fn record_arrival_contexts(&mut self, arrival: &Arrival) {
        let b = &mut self.blocks[arrival.class];
        for (sum, x) in b.ctx_sum.iter_mut().zip(&arrival.contexts) {
            for (s, v) in sum.iter_mut().zip(x) {
                *s += v;
            }
        }
        b.arrivals += 1;
        self.total_arrivals += 1;
    }

    /// Records an admission of arm `a`, drawing the pseudo-action from `rng`.
    pub fn record_admitted_round<R: Rng + ?Sized>(
        &mut self,
        arrival: &Arrival,
        a: usize,
        feedback: &Feedback,
        rng: &mut R,
    ) -> Result<Admission> {
        self.record_admitted_round_with(arrival, a, feedback, |phi| draw_pseudo_action(phi, rng))
    }

    /// As [`record_admitted_round`](Self::record_admitted_round) with the
    /// pseudo-action chosen by `choose_h` from the resampling probabilities.
    pub fn record_admitted_round_with<H: FnOnce(&[f64]) -> usize>(
        &mut self,
        arrival: &Arrival,
        a: usize,
        feedback: &Feedback,
        choose_h: H,
    ) -> Result<Admission> {
        if a >= self.arms {
            return Err(EstimatorError::BadAction(a));
        }
        let j = arrival.class;
        let (d, m_res) = (self.dim, self.resources);
        {
            let b = &mut self.blocks[j];
            for x in &arrival.contexts {
                b.f.add_outer(x, 1.0);
            }
            b.lambda_f = min_eigenvalue_sym(&b.f)?;
        }
        let lambda_min = self.lambda_min_f();
        self.harmonic_sum += 1.0 / lambda_min;
        let phi = resample_distribution(lambda_min, a, self.arms, self.log_l)?;
        let h = choose_h(&phi);
        let in_psi = h == a;

        let b = &mut self.blocks[j];
        let xa = &arrival.contexts[a];
        let weight = if in_psi {
            1.0 / phi[a]
        } else {
            1.0
        };
        if in_psi {
            for (k, x) in arrival.contexts.iter().enumerate() {
                b.v.add_outer(x, 1.0);
                if k != a {
                    b.m.add_outer(x, 1.0);
                }
            }
            b.m.add_outer(xa, 1.0 - weight);
            self.psi_count += 1;
        } else {
            b.v.add_outer(xa, 1.0);
        }
        b.a.add_outer(xa, weight);
        for i in 0..d {
            let wx = weight * xa[i];
            b.score_r[i] += wx * feedback.reward;
            for r in 0..m_res {
                b.score_b[i * m_res + r] += wx * feedback.consumption[r];
            }
        }

        let chol_a = Cholesky::factor(&b.a)?;
        b.theta_check = chol_a.solve(&b.score_r);
        b.w_check = chol_a.solve_mat(&b.score_b, m_res);

        let chol_v = Cholesky::factor(&b.v)?;
        let rhs_r: Vec<f64> = b
            .score_r
            .iter()
            .zip(b.m.mul_vec(&b.theta_check))
            .map(|(s, mt)| s + mt)
            .collect();
        b.theta_hat = chol_v.solve(&rhs_r);
        let rhs_b: Vec<f64> = b
            .score_b
            .iter()
            .zip(b.m.mul_mat(&b.w_check, m_res))
            .map(|(s, mw)| s + mw)
            .collect();
        b.w_hat = chol_v.solve_mat(&rhs_b, m_res);

        b.admitted += 1;
        self.n_admitted += 1;
        Ok(Admission {
            phi,
            h,
            in_psi,
            lambda_min,
        })
    }

    /// `û_k = Θ̂(j)ᵀ x̄_k` and `b̂_k = Ŵ(j)ᵀ x̄_k`, with `x̄_k` the mean of
    /// arm `k`'s contexts over every arrival of class `j` so far.
    pub fn utility_estimates(&self, j: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let b = &self.blocks[j];
        if b.arrivals == 0 {
            return Err(EstimatorError::ClassUnseen);
        }
        let inv = 1.0 / b.arrivals as f64;
        let mut u = Vec::with_capacity(self.arms);
        let mut cons = Vec::with_capacity(self.arms);
        for sum in &b.ctx_sum {
            let mean: Vec<f64> = sum.iter().map(|s| s * inv).collect();
            u.push(mean.iter().zip(&b.theta_hat).map(|(x, t)| x * t).sum());
            cons.push(mat_t_vec(&b.w_hat, self.dim, self.resources, &mean));
        }
        Ok((u, cons))
    }

    /// Fraction of the `t` arrivals so far that belonged to each class.
    pub fn empirical_class_probs(&self, t: usize) -> Vec<f64> {
        let t = t.max(1) as f64;
        self.blocks.iter().map(|b| b.arrivals as f64 / t).collect()
    }

    /// `‖Θ̂ - Θ*‖₂` over the stacked parameter vector.
    pub fn theta_error(&self, truth: &[Vec<f64>]) -> f64 {
        self.blocks
            .iter()
            .zip(truth)
            .flat_map(|(b, t)| b.theta_hat.iter().zip(t).map(|(x, y)| (x - y) * (x - y)))
            .sum::<f64>()
            .sqrt()
    }
}
