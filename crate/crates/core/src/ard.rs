//! Sparse Bayesian linear regression with one precision per weight.
//!
//! Everything here works on a single regression `s ≈ Φ w`. Callers that share
//! a design matrix across many targets build [`SuffStats`] once per target
//! from a shared Gram matrix.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::lstm::Gate;
use crate::numerics::{dot, Matrix, SpdFactor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            alpha: (1e1, 1e6),
            beta: (1e4, 1e6),
        }
    }
}

impl Bounds {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("alpha_bounds", self.alpha), ("beta_bounds", self.beta)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::Config {
                    field: name.into(),
                    message: format!("need 0 < lo <= hi < inf, got [{lo}, {hi}]"),
                });
            }
        }
        Ok(())
    }
}

/// Gamma hyperprior shapes/scales and the log-uniform initialization ranges.
/// With `a = b = c = d = 0` the hyperprior is flat in log scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperpriorConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub alpha_init: (f64, f64),
    pub beta_init: (f64, f64),
}

impl Default for HyperpriorConfig {
    fn default() -> Self {
        HyperpriorConfig {
            a: 0.0,
            b: 0.0,
            c: 0.0,
            d: 0.0,
            alpha_init: (1e1, 1e6),
            beta_init: (1e4, 1e5),
        }
    }
}

impl HyperpriorConfig {
    pub fn validate(&self, bounds: &Bounds) -> Result<()> {
        for (name, v) in [("a", self.a), ("b", self.b), ("c", self.c), ("d", self.d)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config {
                    field: name.into(),
                    message: format!("must be finite and >= 0, got {v}"),
                });
            }
        }
        let inside = |(lo, hi): (f64, f64), (blo, bhi): (f64, f64)| lo <= hi && lo >= blo && hi <= bhi;
        if !inside(self.alpha_init, bounds.alpha) {
            return Err(Error::Config {
                field: "alpha_init".into(),
                message: format!("{:?} is not inside {:?}", self.alpha_init, bounds.alpha),
            });
        }
        if !inside(self.beta_init, bounds.beta) {
            return Err(Error::Config {
                field: "beta_init".into(),
                message: format!("{:?} is not inside {:?}", self.beta_init, bounds.beta),
            });
        }
        Ok(())
    }
}

/// Which layer a regression belongs to; used to derive RNG streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerTag {
    Gate(Gate),
    Readout,
}

/// Stream id for the prior draw of regression `(layer, slot, unit)`.
/// `slot` is the time step for per-step regressions and 0 otherwise.
pub fn prior_stream(layer: LayerTag, slot: usize, unit: usize) -> u64 {
    let layer = match layer {
        LayerTag::Gate(g) => g.index() as u64,
        LayerTag::Readout => 4,
    };
    (layer << 56) | ((slot as u64) << 32) | unit as u64
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        return lo;
    }
    let u: f64 = rng.random();
    (lo.ln() + u * (hi.ln() - lo.ln())).exp().clamp(lo, hi)
}

/// Log-uniform draws of `α` (length `d`) and `β` from the configured ranges.
pub fn init_hyperparams<R: Rng + ?Sized>(cfg: &HyperpriorConfig, d: usize, rng: &mut R) -> (Vec<f64>, f64) {
    let alpha = (0..d).map(|_| log_uniform(rng, cfg.alpha_init)).collect();
    let beta = log_uniform(rng, cfg.beta_init);
    (alpha, beta)
}

/// Everything the evidence needs from `(Φ, s)`: `ΦᵀΦ`, `Φᵀs`, `sᵀs`, `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct SuffStats {
    pub gram: Matrix,
    pub phi_t_s: Vec<f64>,
    pub s_sq: f64,
    pub n_obs: usize,
}

impl SuffStats {
    pub fn new(phi: &Matrix, s: &[f64]) -> Result<Self> {
        if phi.rows() != s.len() {
            return Err(Error::shape("regression targets", phi.rows(), s.len()));
        }
        Ok(Self::with_gram(phi.gram(), phi, s))
    }

    /// Reuses a precomputed `gram = ΦᵀΦ`.
    pub fn with_gram(gram: Matrix, phi: &Matrix, s: &[f64]) -> Self {
        SuffStats {
            gram,
            phi_t_s: phi.t_matvec(s),
            s_sq: dot(s, s),
            n_obs: s.len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.phi_t_s.len()
    }
}

/// Posterior moments plus the factorization of `Σ⁻¹` they came from.
#[derive(Clone, Debug)]
pub struct Posterior {
    pub mean: Vec<f64>,
    pub cov: Matrix,
    pub precision_factor: SpdFactor,
}

impl Posterior {
    /// `‖s − Φμ‖²` from sufficient statistics.
    pub fn residual_sq(&self, stats: &SuffStats) -> f64 {
        let m = &self.mean;
        (stats.s_sq - 2.0 * dot(m, &stats.phi_t_s) + stats.gram.quad_form(m)).max(0.0)
    }

    /// `tr(Σ ΦᵀΦ)`
    pub fn trace_cov_gram(&self, stats: &SuffStats) -> f64 {
        let d = self.mean.len();
        let mut t = 0.0;
        for i in 0..d {
            for j in 0..d {
                t += self.cov[(i, j)] * stats.gram[(j, i)];
            }
        }
        t
    }
}

fn check_hyper(d: usize, alpha: &[f64], beta: f64) -> Result<()> {
    if alpha.len() != d {
        return Err(Error::shape("alpha", d, alpha.len()));
    }
    if !(beta > 0.0) || alpha.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::Domain("precisions must be positive".into()));
    }
    Ok(())
}

/// `Σ = (βΦᵀΦ + diag α)⁻¹`, `μ = βΣΦᵀs`.
pub fn posterior_from_stats(stats: &SuffStats, alpha: &[f64], beta: f64) -> Result<Posterior> {
    let d = stats.dim();
    check_hyper(d, alpha, beta)?;
    let mut prec = stats.gram.scale(beta);
    prec.add_diag(alpha);
    let factor = SpdFactor::new(&prec)?;
    let cov = factor.inverse();
    let mut mean = factor.solve_vec(&stats.phi_t_s);
    for m in &mut mean {
        *m *= beta;
    }
    Ok(Posterior {
        mean,
        cov,
        precision_factor: factor,
    })
}

/// Returns `(μ, Σ)`.
pub fn posterior_moments(phi: &Matrix, s: &[f64], alpha: &[f64], beta: f64) -> Result<(Vec<f64>, Matrix)> {
    let p = posterior_from_stats(&SuffStats::new(phi, s)?, alpha, beta)?;
    Ok((p.mean, p.cov))
}

/// `ℒ = −½(log|C| + sᵀC⁻¹s)` with `C = β⁻¹I + ΦA⁻¹Φᵀ`, evaluated in the
/// weight space through the determinant lemma and Woodbury identity.
pub fn evidence_from_posterior(stats: &SuffStats, post: &Posterior, alpha: &[f64], beta: f64) -> f64 {
    let n = stats.n_obs as f64;
    let log_det_c = -n * beta.ln() - alpha.iter().map(|a| a.ln()).sum::<f64>() + post.precision_factor.log_det();
    let quad = beta * post.residual_sq(stats)
        + post.mean.iter().zip(alpha).map(|(m, a)| a * m * m).sum::<f64>();
    -0.5 * (log_det_c + quad)
}

pub fn marginal_log_likelihood(phi: &Matrix, s: &[f64], alpha: &[f64], beta: f64) -> Result<f64> {
    if phi.rows() <= phi.cols() {
        return marginal_log_likelihood_direct(phi, s, alpha, beta);
    }
    let stats = SuffStats::new(phi, s)?;
    let post = posterior_from_stats(&stats, alpha, beta)?;
    Ok(evidence_from_posterior(&stats, &post, alpha, beta))
}

/// Same objective through the `n_obs × n_obs` covariance `C`.
pub fn marginal_log_likelihood_direct(phi: &Matrix, s: &[f64], alpha: &[f64], beta: f64) -> Result<f64> {
    if phi.rows() != s.len() {
        return Err(Error::shape("regression targets", phi.rows(), s.len()));
    }
    check_hyper(phi.cols(), alpha, beta)?;
    let c = covariance_c(phi, alpha, beta);
    let f = SpdFactor::new(&c)?;
    let cis = f.solve_vec(s);
    Ok(-0.5 * (f.log_det() + dot(s, &cis)))
}

fn covariance_c(phi: &Matrix, alpha: &[f64], beta: f64) -> Matrix {
    let n = phi.rows();
    let mut c = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let (pi, pj) = (phi.row(i), phi.row(j));
            c[(i, j)] = pi.iter().zip(pj).zip(alpha).map(|((a, b), al)| a * b / al).sum::<f64>();
        }
        c[(i, i)] += 1.0 / beta;
    }
    c
}

/// Returns `(∂ℒ/∂log α, ∂ℒ/∂log β)`.
pub fn log_hyper_gradients(stats: &SuffStats, post: &Posterior, alpha: &[f64], beta: f64) -> (Vec<f64>, f64) {
    let ga = alpha
        .iter()
        .enumerate()
        .map(|(k, a)| 0.5 * (1.0 - a * (post.mean[k] * post.mean[k] + post.cov[(k, k)])))
        .collect();
    let gb = 0.5 * (stats.n_obs as f64 - beta * (post.trace_cov_gram(stats) + post.residual_sq(stats)));
    (ga, gb)
}

/// `∂ℒ/∂Φ = (C⁻¹ssᵀC⁻¹ − C⁻¹)ΦA⁻¹ = β(s − Φμ)μᵀ − βΦΣ`, shape `n_obs × D`.
pub fn design_gradient(phi: &Matrix, s: &[f64], post: &Posterior, beta: f64) -> Matrix {
    let d = phi.cols();
    let mut g = Matrix::zeros(phi.rows(), d);
    let mut phi_sigma = vec![0.0; d];
    for r in 0..phi.rows() {
        let row = phi.row(r);
        let resid = s[r] - dot(row, &post.mean);
        phi_sigma.iter_mut().for_each(|v| *v = 0.0);
        // Σ is symmetric, so row j of Σ is column j
        for (j, p) in row.iter().enumerate() {
            for (acc, c) in phi_sigma.iter_mut().zip(post.cov.row(j)) {
                *acc += p * c;
            }
        }
        for ((out, m), ps) in g.row_mut(r).iter_mut().zip(&post.mean).zip(&phi_sigma) {
            *out = beta * (resid * m - ps);
        }
    }
    g
}

/// `α_k = clamp(1/(μ_k² + Σ_kk))`; a zero denominator maps to the upper bound.
pub fn update_alpha(mean: &[f64], cov_diag: &[f64], bounds: &Bounds) -> Vec<f64> {
    alpha_fixed_point(mean, cov_diag, 0.0, 0.0, bounds)
}

fn alpha_fixed_point(mean: &[f64], cov_diag: &[f64], a: f64, b: f64, bounds: &Bounds) -> Vec<f64> {
    let (lo, hi) = bounds.alpha;
    mean.iter()
        .zip(cov_diag)
        .map(|(m, s)| {
            let denom = m * m + s + 2.0 * b;
            if denom > 0.0 {
                ((1.0 + 2.0 * a) / denom).clamp(lo, hi)
            } else {
                hi
            }
        })
        .collect()
}

/// `β = clamp((n_obs − Σγ)/‖s − Φμ‖²)`; a zero residual maps to the upper bound.
pub fn update_beta(phi: &Matrix, s: &[f64], mean: &[f64], gamma: &[f64], bounds: &Bounds) -> f64 {
    let resid: f64 = (0..phi.rows()).map(|r| (s[r] - dot(phi.row(r), mean)).powi(2)).sum();
    beta_fixed_point(s.len(), gamma, resid, 0.0, 0.0, bounds)
}

fn beta_fixed_point(n_obs: usize, gamma: &[f64], resid_sq: f64, c: f64, d: f64, bounds: &Bounds) -> f64 {
    let (lo, hi) = bounds.beta;
    let num = n_obs as f64 - gamma.iter().sum::<f64>() + 2.0 * c;
    let den = resid_sq + 2.0 * d;
    if den > 0.0 {
        (num / den).clamp(lo, hi)
    } else {
        hi
    }
}

/// `γ_k = 1 − α_k Σ_kk`
pub fn compute_gamma(alpha: &[f64], cov_diag: &[f64]) -> Vec<f64> {
    alpha.iter().zip(cov_diag).map(|(a, s)| 1.0 - a * s).collect()
}

/// Predictive mean `φ·μ` and variance `β⁻¹ + φᵀΣφ`.
pub fn posterior_predictive(mean: &[f64], cov: &Matrix, beta: f64, phi_star: &[f64]) -> (f64, f64) {
    (dot(phi_star, mean), 1.0 / beta + cov.quad_form(phi_star).max(0.0))
}

/// Density of the Student-t obtained by integrating a Gaussian weight prior
/// against a Gamma hyperprior with shape `a` and rate `b`.
pub fn student_t_marginal_density(w: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Domain(format!("Student-t parameters must be positive, got a={a}, b={b}")));
    }
    let ln = a * b.ln() + ln_gamma(a + 0.5) - 0.5 * (2.0 * std::f64::consts::PI).ln() - ln_gamma(a)
        - (a + 0.5) * (b + 0.5 * w * w).ln();
    Ok(ln.exp())
}

/// One relevance-determination regression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArdRegressorState {
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub mean: Vec<f64>,
    pub cov: Matrix,
    pub gamma: Vec<f64>,
    pub pruned: Vec<bool>,
}

impl ArdRegressorState {
    /// Hyperparameters from the log-uniform hyperprior, `μ ~ N(0, diag α⁻¹)`
    /// and `Σ = diag α⁻¹`. Every weight starts prior-dominated (`γ = 0`).
    pub fn from_prior<R: Rng + ?Sized>(cfg: &HyperpriorConfig, d: usize, rng: &mut R) -> Self {
        let (alpha, beta) = init_hyperparams(cfg, d, rng);
        let var: Vec<f64> = alpha.iter().map(|a| 1.0 / a).collect();
        let mean = var.iter().map(|v| v.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
        ArdRegressorState {
            gamma: compute_gamma(&alpha, &var),
            pruned: vec![true; d],
            cov: Matrix::from_diag(&var),
            alpha,
            beta,
            mean,
        }
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn pruned_count(&self) -> usize {
        self.pruned.iter().filter(|p| **p).count()
    }

    /// Recomputes `μ, Σ` for the current `α, β`.
    pub fn refresh(&mut self, stats: &SuffStats) -> Result<Posterior> {
        let post = posterior_from_stats(stats, &self.alpha, self.beta)?;
        self.mean.clone_from(&post.mean);
        self.cov = post.cov.clone();
        Ok(post)
    }

    /// One fixed-point sweep: posterior with the current hyperparameters,
    /// re-estimate `α, β`, posterior again. Returns the new posterior (before
    /// pruning) and leaves `γ` and the mask untouched.
    pub fn sweep(&mut self, stats: &SuffStats, hyper: &HyperpriorConfig, bounds: &Bounds) -> Result<Posterior> {
        check_hyper(stats.dim(), &self.alpha, self.beta)?;
        let mut prec = stats.gram.scale(self.beta);
        prec.add_diag(&self.alpha);
        let factor = SpdFactor::new(&prec)?;
        let diag = factor.inverse_diag();
        let mean: Vec<f64> = factor.solve_vec(&stats.phi_t_s).iter().map(|m| m * self.beta).collect();
        let resid = (stats.s_sq - 2.0 * dot(&mean, &stats.phi_t_s) + stats.gram.quad_form(&mean)).max(0.0);
        let gamma_old = compute_gamma(&self.alpha, &diag);
        self.alpha = alpha_fixed_point(&mean, &diag, hyper.a, hyper.b, bounds);
        self.beta = beta_fixed_point(stats.n_obs, &gamma_old, resid, hyper.c, hyper.d, bounds);
        self.refresh(stats)
    }

    /// Recomputes `γ` from the stored `α, Σ` and applies the threshold.
    /// A non-positive `tau` disables pruning.
    pub fn prune(&mut self, tau: f64) {
        self.gamma = compute_gamma(&self.alpha, &self.cov.diag());
        for k in 0..self.dim() {
            self.pruned[k] = tau > 0.0 && self.gamma[k] <= tau;
            if self.pruned[k] {
                self.mean[k] = 0.0;
            }
        }
    }

    pub fn predictive(&self, phi_star: &[f64]) -> (f64, f64) {
        posterior_predictive(&self.mean, &self.cov, self.beta, phi_star)
    }

    pub fn evidence(&self, stats: &SuffStats) -> Result<f64> {
        let post = posterior_from_stats(stats, &self.alpha, self.beta)?;
        Ok(evidence_from_posterior(stats, &post, &self.alpha, self.beta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::stream_rng;
    use nalgebra::{DMatrix, DVector};

    fn random_problem(n: usize, d: usize, seed: u64) -> (Matrix, Vec<f64>, Vec<f64>, f64) {
        let mut rng = stream_rng(seed, 11);
        let mut phi = Matrix::zeros(n, d);
        for v in phi.as_mut_slice() {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        let s = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let alpha = (0..d).map(|_| rng.random_range(0.2..5.0)).collect();
        let beta = rng.random_range(0.5..4.0);
        (phi, s, alpha, beta)
    }

    fn to_na(m: &Matrix) -> DMatrix<f64> {
        DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
    }

    #[test]
    fn posterior_scalar_examples() {
        let (mu, sigma) = posterior_moments(&Matrix::from_rows(&[[1.0]]), &[1.0], &[1.0], 1.0).unwrap();
        assert!((sigma[(0, 0)] - 0.5).abs() < 1e-15 && (mu[0] - 0.5).abs() < 1e-15);
        let (mu, sigma) = posterior_moments(&Matrix::from_rows(&[[1.0], [1.0]]), &[1.0, 1.0], &[2.0], 1.0).unwrap();
        assert!((sigma[(0, 0)] - 0.25).abs() < 1e-15 && (mu[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn prior_dominated_limit() {
        let (phi, s, _, _) = random_problem(10, 3, 1);
        let (mu, _) = posterior_moments(&phi, &s, &[1e6, 1.0, 1.0], 1.0).unwrap();
        assert!(mu[0].abs() < 1e-4);
    }

    #[test]
    fn posterior_matches_direct_inverse() {
        let (phi, s, alpha, beta) = random_problem(12, 4, 2);
        let (mu, sigma) = posterior_moments(&phi, &s, &alpha, beta).unwrap();
        let p = to_na(&phi);
        let prec = p.transpose() * &p * beta + DMatrix::from_diagonal(&DVector::from_vec(alpha.clone()));
        let inv = prec.try_inverse().unwrap();
        let m = &inv * p.transpose() * DVector::from_vec(s.clone()) * beta;
        for i in 0..4 {
            assert!((mu[i] - m[i]).abs() < 1e-12);
            for j in 0..4 {
                assert!((sigma[(i, j)] - inv[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn evidence_examples() {
        let l = marginal_log_likelihood(&Matrix::from_rows(&[[1.0]]), &[0.0], &[1.0], 1.0).unwrap();
        assert!((l + 0.5 * 2f64.ln()).abs() < 1e-12);
        assert!((l + 0.34657).abs() < 1e-5);
        // zero target: only the determinant remains
        let (phi, _, alpha, beta) = random_problem(6, 2, 3);
        let zero = vec![0.0; 6];
        let l0 = marginal_log_likelihood(&phi, &zero, &alpha, beta).unwrap();
        let c = to_na(&covariance_c(&phi, &alpha, beta));
        assert!((l0 + 0.5 * c.determinant().ln()).abs() < 1e-10);
    }

    #[test]
    fn woodbury_matches_direct_route() {
        for seed in 0..20 {
            let (phi, s, alpha, beta) = random_problem(6, 2, 100 + seed);
            let w = marginal_log_likelihood(&phi, &s, &alpha, beta).unwrap();
            let d = marginal_log_likelihood_direct(&phi, &s, &alpha, beta).unwrap();
            assert!((w - d).abs() < 1e-10, "{w} vs {d}");
        }
    }

    #[test]
    fn hyper_gradients_match_finite_differences() {
        for seed in 0..10 {
            let (phi, s, alpha, beta) = random_problem(9, 3, 200 + seed);
            let stats = SuffStats::new(&phi, &s).unwrap();
            let post = posterior_from_stats(&stats, &alpha, beta).unwrap();
            let (ga, gb) = log_hyper_gradients(&stats, &post, &alpha, beta);
            let h: f64 = 1e-5;
            let ev = |a: &[f64], b: f64| marginal_log_likelihood_direct(&phi, &s, a, b).unwrap();
            for k in 0..3 {
                let (mut ap, mut am) = (alpha.clone(), alpha.clone());
                ap[k] *= h.exp();
                am[k] *= (-h).exp();
                let fd = (ev(&ap, beta) - ev(&am, beta)) / (2.0 * h);
                assert!((fd - ga[k]).abs() <= 1e-6 * (1.0 + fd.abs()), "{fd} vs {}", ga[k]);
            }
            let fd = (ev(&alpha, beta * h.exp()) - ev(&alpha, beta * (-h).exp())) / (2.0 * h);
            assert!((fd - gb).abs() <= 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn design_gradient_scalar_and_fd() {
        let phi = Matrix::from_rows(&[[1.0]]);
        let stats = SuffStats::new(&phi, &[2.0]).unwrap();
        let post = posterior_from_stats(&stats, &[1.0], 1.0).unwrap();
        assert!((design_gradient(&phi, &[2.0], &post, 1.0)[(0, 0)] - 0.5).abs() < 1e-14);

        let (phi, s, alpha, beta) = random_problem(5, 3, 7);
        let stats = SuffStats::new(&phi, &s).unwrap();
        let post = posterior_from_stats(&stats, &alpha, beta).unwrap();
        let g = design_gradient(&phi, &s, &post, beta);
        let h = 1e-6;
        for r in 0..5 {
            for k in 0..3 {
                let (mut p, mut m) = (phi.clone(), phi.clone());
                p[(r, k)] += h;
                m[(r, k)] -= h;
                let fd = (marginal_log_likelihood_direct(&p, &s, &alpha, beta).unwrap()
                    - marginal_log_likelihood_direct(&m, &s, &alpha, beta).unwrap())
                    / (2.0 * h);
                assert!((fd - g[(r, k)]).abs() <= 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn alpha_update_examples() {
        let b = Bounds::default();
        assert_eq!(update_alpha(&[1.0], &[0.0], &b), vec![10.0]);
        assert!((update_alpha(&[0.2], &[0.01], &b)[0] - 20.0).abs() < 1e-12);
        assert_eq!(update_alpha(&[0.0], &[0.0], &b), vec![1e6]);
    }

    #[test]
    fn beta_update_examples() {
        let b = Bounds::default();
        // residual² = 0.5 with n = 2, Σγ = 1
        let phi = Matrix::from_rows(&[[1.0], [1.0]]);
        assert_eq!(update_beta(&phi, &[0.5, -0.5], &[0.0], &[1.0], &b), 1e4);
        assert_eq!(update_beta(&phi, &[1.0, 1.0], &[1.0], &[1.0], &b), 1e6);
        let raw = beta_fixed_point(2, &[1.0], 1.0 / 5e4, 0.0, 0.0, &b);
        assert!((raw - 5e4).abs() < 1e-6);
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(compute_gamma(&[2.0, 4.0, 3.0], &[0.25, 0.25, 0.0]), vec![0.5, 0.0, 1.0]);
    }

    #[test]
    fn prune_examples() {
        let mut st = ArdRegressorState {
            alpha: vec![2.0, 1.0],
            beta: 1.0,
            mean: vec![0.3, 0.7],
            cov: Matrix::from_diag(&[0.25, 1.0 - 1e-5]),
            gamma: vec![0.0; 2],
            pruned: vec![false; 2],
        };
        let mut off = st.clone();
        st.prune(1e-4);
        assert_eq!(st.pruned, vec![false, true]);
        assert_eq!(st.mean, vec![0.3, 0.0]);
        off.prune(0.0);
        assert_eq!(off.pruned, vec![false, false]);
    }

    #[test]
    fn predictive_examples() {
        let cov = Matrix::from_diag(&[0.5]);
        assert_eq!(posterior_predictive(&[0.5], &cov, 1.0, &[2.0]), (1.0, 3.0));
        assert_eq!(posterior_predictive(&[0.0], &cov, 4.0, &[2.0]), (0.0, 0.25 + 2.0));
        assert_eq!(posterior_predictive(&[0.5], &cov, 4.0, &[0.0]).1, 0.25);
    }

    #[test]
    fn student_t_examples() {
        let p = student_t_marginal_density(0.0, 1.0, 1.0).unwrap();
        assert!((p - 0.35355).abs() < 1e-5);
        assert_eq!(
            student_t_marginal_density(1.3, 2.0, 0.7).unwrap(),
            student_t_marginal_density(-1.3, 2.0, 0.7).unwrap()
        );
        assert!(student_t_marginal_density(0.0, 0.0, 1.0).is_err());
        assert!(student_t_marginal_density(0.0, 1.0, -1.0).is_err());
        // quadrature over w = tan(θ)
        for (a, b) in [(1.0, 1.0), (2.5, 0.3), (0.7, 4.0)] {
            let n = 200_000;
            let h = std::f64::consts::PI / n as f64;
            let mut total = 0.0;
            for i in 0..n {
                let th = -std::f64::consts::FRAC_PI_2 + (i as f64 + 0.5) * h;
                let w = th.tan();
                total += student_t_marginal_density(w, a, b).unwrap() / th.cos().powi(2) * h;
            }
            assert!((total - 1.0).abs() < 1e-4, "a={a} b={b}: {total}");
        }
    }

    #[test]
    fn init_ranges_and_degenerate_range() {
        let cfg = HyperpriorConfig::default();
        let mut rng = stream_rng(5, 0);
        for _ in 0..200 {
            let (a, b) = init_hyperparams(&cfg, 6, &mut rng);
            assert!(a.iter().all(|v| (1e1..=1e6).contains(v)));
            assert!((1e4..=1e5).contains(&b));
        }
        let flat = HyperpriorConfig {
            alpha_init: (37.0, 37.0),
            beta_init: (2e4, 2e4),
            ..cfg
        };
        let (a, b) = init_hyperparams(&flat, 4, &mut rng);
        assert!(a.iter().all(|v| *v == 37.0));
        assert_eq!(b, 2e4);
    }

    #[test]
    fn fixed_point_sweep_never_decreases_evidence() {
        let bounds = Bounds {
            alpha: (1e-3, 1e6),
            beta: (1e-3, 1e6),
        };
        let hyper = HyperpriorConfig::default();
        for seed in 0..100u64 {
            let mut rng = stream_rng(seed, 3);
            let d = rng.random_range(1..=8);
            let n = rng.random_range(d..=32);
            let (phi, s, alpha, beta) = random_problem(n, d, 1000 + seed);
            let stats = SuffStats::new(&phi, &s).unwrap();
            let mut st = ArdRegressorState {
                alpha,
                beta,
                mean: vec![0.0; d],
                cov: Matrix::identity(d),
                gamma: vec![0.0; d],
                pruned: vec![false; d],
            };
            let before = st.evidence(&stats).unwrap();
            st.sweep(&stats, &hyper, &bounds).unwrap();
            let after = st.evidence(&stats).unwrap();
            assert!(after >= before - 1e-8, "seed {seed}: {before} -> {after}");
        }
    }

    #[test]
    fn gamma_in_unit_interval_after_sweep() {
        let (phi, s, alpha, beta) = random_problem(20, 5, 9);
        let stats = SuffStats::new(&phi, &s).unwrap();
        let mut st = ArdRegressorState {
            alpha,
            beta,
            mean: vec![0.0; 5],
            cov: Matrix::identity(5),
            gamma: vec![0.0; 5],
            pruned: vec![false; 5],
        };
        st.sweep(&stats, &HyperpriorConfig::default(), &Bounds::default()).unwrap();
        st.prune(1e-4);
        assert!(st.gamma.iter().all(|g| *g >= -1e-8 && *g <= 1.0 + 1e-8));
        assert!((1e1..=1e6).contains(&st.alpha[0]) && (1e4..=1e6).contains(&st.beta));
    }
}
