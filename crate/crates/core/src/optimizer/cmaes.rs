//! (μ/μ_w, λ)-CMA-ES with rank-one and rank-μ covariance updates and
//! cumulative step-size adaptation, using the standard default strategy
//! parameters.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Out-of-bounds draws are resampled this many times before clamping.
pub const BOUND_RESAMPLES: usize = 10;

/// Default population size for dimension `n`.
pub fn default_lambda(n: usize) -> usize {
    4 + (3.0 * (n as f64).ln()).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub n: usize,
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    pub chi_n: f64,
}

impl Strategy {
    pub fn new(n: usize, lambda: Option<usize>) -> Self {
        let nf = n as f64;
        let lambda = lambda.unwrap_or_else(|| default_lambda(n)).max(2);
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu).map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln()).collect();
        let sum: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Self { n, lambda, mu, weights, mu_eff, c_sigma, d_sigma, c_c, c_1, c_mu, chi_n }
    }
}

/// Complete optimizer state; serializable for checkpoints. Sampling noise for
/// generation `g` is drawn from a stream derived from `(seed, g)`, so a resumed
/// run continues exactly as an uninterrupted one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaState {
    pub strategy: Strategy,
    pub mean: Vec<f64>,
    pub sigma: f64,
    /// Covariance, row-major.
    pub cov: Vec<f64>,
    pub p_sigma: Vec<f64>,
    pub p_c: Vec<f64>,
    pub generation: u64,
    pub seed: u64,
    /// Box constraints `(lower, upper)` per coordinate, if any.
    pub bounds: Option<(Vec<f64>, Vec<f64>)>,
    pub evaluations: u64,
}

/// One sampled generation awaiting costs.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub generation: u64,
    pub candidates: Vec<Vec<f64>>,
}

impl CmaState {
    pub fn new(mean: Vec<f64>, sigma: f64, seed: u64) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("mean must be finite".into()));
        }
        let mut cov = vec![0.0; n * n];
        for i in 0..n {
            cov[i * n + i] = 1.0;
        }
        Ok(Self {
            strategy: Strategy::new(n, None),
            mean,
            sigma,
            cov,
            p_sigma: vec![0.0; n],
            p_c: vec![0.0; n],
            generation: 0,
            seed,
            bounds: None,
            evaluations: 0,
        })
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = self.dim();
        if lower.len() != n || upper.len() != n {
            return Err(Error::WrongCount { expected: n, got: lower.len().min(upper.len()) });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidArgument("lower bounds must lie below upper bounds".into()));
        }
        self.bounds = Some((lower, upper));
        Ok(self)
    }

    pub fn with_lambda(mut self, lambda: usize) -> Self {
        self.strategy = Strategy::new(self.dim(), Some(lambda));
        self
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn lambda(&self) -> usize {
        self.strategy.lambda
    }

    fn cov_matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_row_slice(n, n, &self.cov)
    }

    /// `B·D` with `C = (BD)(BD)ᵀ`, and `C^{-1/2}`.
    fn factors(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let eig = SymmetricEigen::new(self.cov_matrix());
        let d = eig.eigenvalues.map(|e| e.max(0.0).sqrt());
        let b = &eig.eigenvectors;
        let bd = b * DMatrix::from_diagonal(&d);
        let dinv = d.map(|x| if x > 0.0 { 1.0 / x } else { 0.0 });
        let inv_sqrt = b * DMatrix::from_diagonal(&dinv) * b.transpose();
        (bd, inv_sqrt)
    }

    fn in_bounds(&self, x: &[f64]) -> bool {
        match &self.bounds {
            Some((lo, hi)) => x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| v >= l && v <= h),
            None => true,
        }
    }

    fn clamp(&self, x: &mut [f64]) {
        if let Some((lo, hi)) = &self.bounds {
            for (v, (l, h)) in x.iter_mut().zip(lo.iter().zip(hi)) {
                *v = v.clamp(*l, *h);
            }
        }
    }

    /// Samples the next generation.
    pub fn ask(&self) -> Population {
        let n = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.generation);
        let (bd, _) = self.factors();
        let m = DVector::from_column_slice(&self.mean);
        let candidates = (0..self.lambda())
            .map(|_| {
                let mut x = vec![0.0; n];
                for attempt in 0..=BOUND_RESAMPLES {
                    let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                    let y = &m + self.sigma * (&bd * z);
                    x.copy_from_slice(y.as_slice());
                    if self.in_bounds(&x) {
                        break;
                    }
                    if attempt == BOUND_RESAMPLES {
                        self.clamp(&mut x);
                    }
                }
                x
            })
            .collect();
        Population { generation: self.generation, candidates }
    }

    /// Updates the distribution from the costs of `pop` (lower is better).
    /// Non-finite costs rank last.
    pub fn tell(&mut self, pop: &Population, costs: &[f64]) -> Result<()> {
        let n = self.dim();
        let s = self.strategy.clone();
        if pop.generation != self.generation {
            return Err(Error::InvalidArgument(format!(
                "population of generation {} told to generation {}",
                pop.generation, self.generation
            )));
        }
        if costs.len() != pop.candidates.len() || costs.len() != s.lambda {
            return Err(Error::WrongCount { expected: s.lambda, got: costs.len() });
        }
        let key = |c: f64| if c.is_nan() { f64::INFINITY } else { c };
        let mut order: Vec<usize> = (0..costs.len()).collect();
        order.sort_by(|&a, &b| key(costs[a]).total_cmp(&key(costs[b])).then(a.cmp(&b)));

        let old = DVector::from_column_slice(&self.mean);
        let ys: Vec<DVector<f64>> = order[..s.mu]
            .iter()
            .map(|&i| (DVector::from_column_slice(&pop.candidates[i]) - &old) / self.sigma)
            .collect();
        let mut y_w = DVector::zeros(n);
        for (w, y) in s.weights.iter().zip(&ys) {
            y_w += *w * y;
        }
        let new_mean = &old + self.sigma * &y_w;

        let (_, inv_sqrt) = self.factors();
        let mut p_sigma = DVector::from_column_slice(&self.p_sigma);
        p_sigma = (1.0 - s.c_sigma) * p_sigma + (s.c_sigma * (2.0 - s.c_sigma) * s.mu_eff).sqrt() * (&inv_sqrt * &y_w);
        let ps_norm = p_sigma.norm();
        let g = (self.generation + 1) as f64;
        let h_sigma = ps_norm / (1.0 - (1.0 - s.c_sigma).powf(2.0 * g)).sqrt() < (1.4 + 2.0 / (n as f64 + 1.0)) * s.chi_n;
        let hs = if h_sigma { 1.0 } else { 0.0 };
        let mut p_c = DVector::from_column_slice(&self.p_c);
        p_c = (1.0 - s.c_c) * p_c + hs * (s.c_c * (2.0 - s.c_c) * s.mu_eff).sqrt() * &y_w;

        let mut c = self.cov_matrix();
        let decay = 1.0 - s.c_1 - s.c_mu + (1.0 - hs) * s.c_1 * s.c_c * (2.0 - s.c_c);
        c *= decay;
        c += s.c_1 * &p_c * p_c.transpose();
        for (w, y) in s.weights.iter().zip(&ys) {
            c += s.c_mu * *w * y * y.transpose();
        }
        // keep C symmetric positive definite
        c = 0.5 * (&c + c.transpose());
        let eig = SymmetricEigen::new(c);
        let max = eig.eigenvalues.max().max(f64::MIN_POSITIVE);
        let floored = eig.eigenvalues.map(|e| e.max(max * 1e-14));
        let c = &eig.eigenvectors * DMatrix::from_diagonal(&floored) * eig.eigenvectors.transpose();
        let c = 0.5 * (&c + c.transpose());

        let sigma = self.sigma * ((s.c_sigma / s.d_sigma) * (ps_norm / s.chi_n - 1.0)).exp();
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Degenerate(format!("step size became {sigma}")));
        }

        self.mean = new_mean.as_slice().to_vec();
        self.sigma = sigma;
        self.cov = c.transpose().as_slice().to_vec();
        self.p_sigma = p_sigma.as_slice().to_vec();
        self.p_c = p_c.as_slice().to_vec();
        self.generation += 1;
        self.evaluations += costs.len() as u64;
        Ok(())
    }
}

/// Minimizes `f` until the best cost drops below `target` or `max_evals` is
/// exhausted; returns `(best x, best cost, evaluations)`.
pub fn minimize<F>(f: F, mean: Vec<f64>, sigma: f64, seed: u64, target: f64, max_evals: u64) -> Result<(Vec<f64>, f64, u64)>
where
    F: Fn(&[f64]) -> f64,
{
    let mut state = CmaState::new(mean, sigma, seed)?;
    let mut best = (state.mean.clone(), f(&state.mean));
    let mut evals = 1;
    while evals < max_evals && best.1 >= target {
        let pop = state.ask();
        let costs: Vec<f64> = pop.candidates.iter().map(|x| f(x)).collect();
        evals += costs.len() as u64;
        for (x, &c) in pop.candidates.iter().zip(&costs) {
            if c < best.1 {
                best = (x.clone(), c);
            }
        }
        state.tell(&pop, &costs)?;
    }
    Ok((best.0, best.1, evals))
}
