//! Blocked Gibbs sampler for the truncated probit stick-breaking mixture of
//! linear regressions, plus the conjugate negative-control outcome regression.
//!
//! One iteration updates, in order: allocations S, component regressions
//! (θ_{Y,k}, δ_{y,k}), weight coefficients η, stick values α, augmentation
//! variables Q, mixture weights ω, and the W regression (θ_W, δ_w).
//!
//! Component labels are 0-based internally (0..K).

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::conjugate::{self, ResolvedNig, SuffStats};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::RowMatrix;
use crate::model::{Design, OutcomeModel};
use crate::normal;
use crate::psbp::{self, KnotGrid};

/// Components that receive data at initialization (contiguous exposure blocks).
const INIT_COMPONENTS: usize = 4;

/// Complete state of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    /// K × p component coefficients `[θ₀, θ_X, θ_Z or θ_U, covariates…]`.
    pub theta_y: RowMatrix,
    /// Component residual SDs δ_{y,k}.
    pub sigma_y: Vec<f64>,
    /// W regression coefficients `[θ_W0, θ_WX, θ_WZ, covariates…]`.
    pub theta_w: Option<Vec<f64>>,
    pub sigma_w: Option<f64>,
    /// K × (1 + V) weight-model coefficients `[η₀, η₁ … η_V]`.
    pub eta: RowMatrix,
    pub alloc: Vec<usize>,
    /// n × (K − 1) augmentation variables; entry (i, k) is meaningful only
    /// for k ≤ S_i.
    pub q_latent: RowMatrix,
}

impl ParameterState {
    pub fn k(&self) -> usize {
        self.sigma_y.len()
    }

    pub fn check(&self) -> Result<()> {
        let k = self.k();
        let bad_sd = |s: f64| !(s.is_finite() && s > 0.0);
        if self.sigma_y.iter().any(|&s| bad_sd(s)) || self.sigma_w.is_some_and(bad_sd) {
            return Err(Error::Numerical("non-positive residual SD in state".into()));
        }
        if self.alloc.iter().any(|&s| s >= k) {
            return Err(Error::Numerical("allocation label out of range".into()));
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            theta_y: self.theta_y.clone(),
            sigma_y: self.sigma_y.clone(),
            theta_w: self.theta_w.clone(),
            sigma_w: self.sigma_w,
            eta: self.eta.clone(),
            alloc: self.alloc.iter().map(|&s| s as u32).collect(),
        }
    }
}

/// A retained draw: every parameter plus the allocations. The augmentation
/// variables are not kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub theta_y: RowMatrix,
    pub sigma_y: Vec<f64>,
    pub theta_w: Option<Vec<f64>>,
    pub sigma_w: Option<f64>,
    pub eta: RowMatrix,
    pub alloc: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub seed: u64,
    pub chain: u64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    /// Every update is an exact full-conditional draw (no accept/reject).
    pub all_gibbs: bool,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub retained: Vec<Snapshot>,
    pub meta: ChainMeta,
    pub knots: KnotGrid,
    pub design_names: Vec<String>,
}

/// Per-chain RNG: ChaCha8 keyed by the seed, one stream per chain.
pub fn chain_rng(seed: u64, chain: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain);
    rng
}

/// Immutable sampler inputs plus per-iteration scratch space.
pub struct Sampler<'a> {
    design: &'a Design,
    y: &'a [f64],
    k: usize,
    knots: KnotGrid,
    x: Vec<f64>,
    segment: Vec<usize>,
    prior_y: ResolvedNig,
    w_post: Option<conjugate::NigPosterior>,
    mu_eta: f64,
    /// n × K current ln ω_k(x_i).
    ln_weights: RowMatrix,
    /// n × (K − 1) current α_k(x_i).
    alpha: RowMatrix,
    scratch: Vec<f64>,
    stats: Vec<SuffStats>,
}

impl<'a> Sampler<'a> {
    /// `data` must already be on the analysis scale; `design` built from it.
    pub fn new(data: &'a Dataset, design: &'a Design, config: &ModelConfig) -> Result<Self> {
        config.validate_for(data.n())?;
        let n = data.n();
        let k = config.k;
        let knots = psbp::make_knots(&data.x, config.n_knots)?;
        let segment = data.x.iter().map(|&x| knots.segment(x)).collect();
        let p = design.p();
        let prior_y = ResolvedNig::new(&config.priors.y, p)?;
        let w_post = if design.models_w() {
            let prior_w = ResolvedNig::new(&config.priors.w, p)?;
            let s = SuffStats::from_rows(
                design.rows.iter_rows().zip(data.w.iter().copied()),
                p,
            );
            Some(prior_w.posterior(&s)?)
        } else {
            None
        };
        Ok(Sampler {
            design,
            y: &data.y,
            k,
            knots,
            x: data.x.clone(),
            segment,
            prior_y,
            w_post,
            mu_eta: config.priors.mu_eta,
            ln_weights: RowMatrix::zeros(n, k),
            alpha: RowMatrix::zeros(n, k.saturating_sub(1)),
            scratch: vec![0.0; k],
            stats: (0..k).map(|_| SuffStats::new(p)).collect(),
        })
    }

    pub fn knots(&self) -> &KnotGrid {
        &self.knots
    }

    fn n(&self) -> usize {
        self.y.len()
    }

    fn eta_width(&self) -> usize {
        self.knots.segments() + 1
    }

    /// Starting state: the first few components own contiguous exposure
    /// blocks, regressions are drawn from their conditionals, η sits at its
    /// prior mean.
    pub fn initialize<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<ParameterState> {
        let n = self.n();
        let k = self.k;
        let used = k.min(INIT_COMPONENTS);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.x[a].total_cmp(&self.x[b]));
        let mut alloc = vec![0; n];
        for (rank, &i) in order.iter().enumerate() {
            alloc[i] = rank * used / n;
        }
        let mut state = ParameterState {
            theta_y: RowMatrix::zeros(k, self.design.p()),
            sigma_y: vec![1.0; k],
            theta_w: None,
            sigma_w: None,
            eta: RowMatrix::filled(k, self.eta_width(), self.mu_eta),
            alloc,
            q_latent: RowMatrix::zeros(n, k.saturating_sub(1)),
        };
        self.draw_component_regressions(&mut state, rng)?;
        self.compute_alpha(&state);
        self.draw_augmentation(&mut state, rng);
        self.compute_weights();
        self.draw_w_regression(&mut state, rng)?;
        Ok(state)
    }

    /// One full sweep in the fixed update order.
    pub fn step<R: Rng + ?Sized>(&mut self, state: &mut ParameterState, rng: &mut R) -> Result<()> {
        self.draw_allocations(state, rng)?;
        self.draw_component_regressions(state, rng)?;
        self.draw_eta(state, rng)?;
        self.compute_alpha(state);
        self.draw_augmentation(state, rng);
        self.compute_weights();
        self.draw_w_regression(state, rng)?;
        Ok(())
    }

    /// Current ln ω_k(x_i) cache.
    pub fn ln_weights(&self) -> &RowMatrix {
        &self.ln_weights
    }

    /// S_i ~ Categorical(ω_k(x_i) · N(y_i | x_iᵀθ_k, δ²_{y,k})), normalized in
    /// log space. Uses the weight cache from the previous sweep.
    pub fn draw_allocations<R: Rng + ?Sized>(
        &mut self,
        state: &mut ParameterState,
        rng: &mut R,
    ) -> Result<()> {
        let k = self.k;
        if k == 1 {
            state.alloc.iter_mut().for_each(|s| *s = 0);
            return Ok(());
        }
        let ln_sd: Vec<f64> = state.sigma_y.iter().map(|s| s.ln()).collect();
        let inv_var: Vec<f64> = state.sigma_y.iter().map(|s| 1.0 / (s * s)).collect();
        let n = self.n();
        let lp = &mut self.scratch;
        for i in 0..n {
            let row = self.design.rows.row(i);
            let lw = self.ln_weights.row(i);
            let yi = self.y[i];
            let mut max = f64::NEG_INFINITY;
            for c in 0..k {
                let mu: f64 = row.iter().zip(state.theta_y.row(c)).map(|(a, b)| a * b).sum();
                let r = yi - mu;
                let v = lw[c] - 0.5 * r * r * inv_var[c] - ln_sd[c];
                lp[c] = v;
                if v > max {
                    max = v;
                }
            }
            if max == f64::NEG_INFINITY || max.is_nan() {
                return Err(Error::Numerical(format!(
                    "all allocation probabilities vanish for observation {i}"
                )));
            }
            let mut total = 0.0;
            for v in lp.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            let mut u = rng.random::<f64>() * total;
            let mut pick = k - 1;
            for (c, &v) in lp.iter().enumerate() {
                if u < v {
                    pick = c;
                    break;
                }
                u -= v;
            }
            // Rounding can leave `u` just past the last positive mass.
            while lp[pick] == 0.0 && pick > 0 {
                pick -= 1;
            }
            state.alloc[i] = pick;
        }
        Ok(())
    }

    /// Normal–inverse-gamma update of every component; empty components are
    /// drawn from the prior.
    pub fn draw_component_regressions<R: Rng + ?Sized>(
        &mut self,
        state: &mut ParameterState,
        rng: &mut R,
    ) -> Result<()> {
        for s in &mut self.stats {
            s.clear();
        }
        for i in 0..self.n() {
            self.stats[state.alloc[i]].push(self.design.rows.row(i), self.y[i]);
        }
        for c in 0..self.k {
            self.stats[c].symmetrize();
            let post = self.prior_y.posterior(&self.stats[c])?;
            let (theta, var) = post.draw(rng)?;
            state.theta_y.row_mut(c).copy_from_slice(theta.as_slice());
            state.sigma_y[c] = var.sqrt();
        }
        Ok(())
    }

    /// Single-component form of [`Sampler::draw_component_regressions`].
    pub fn draw_component_regression<R: Rng + ?Sized>(
        &mut self,
        c: usize,
        state: &mut ParameterState,
        rng: &mut R,
    ) -> Result<()> {
        let rows = (0..self.n())
            .filter(|&i| state.alloc[i] == c)
            .map(|i| (self.design.rows.row(i), self.y[i]));
        let stats = SuffStats::from_rows(rows, self.design.p());
        let (theta, var) = self.prior_y.posterior(&stats)?.draw(rng)?;
        state.theta_y.row_mut(c).copy_from_slice(theta.as_slice());
        state.sigma_y[c] = var.sqrt();
        Ok(())
    }

    /// Conjugate update of the W regression on all rows.
    pub fn draw_w_regression<R: Rng + ?Sized>(
        &self,
        state: &mut ParameterState,
        rng: &mut R,
    ) -> Result<()> {
        if let Some(post) = &self.w_post {
            let (theta, var) = post.draw(rng)?;
            state.theta_w = Some(theta.as_slice().to_vec());
            state.sigma_w = Some(var.sqrt());
        }
        Ok(())
    }

    /// Posterior of η_k given the current augmentation variables: regression
    /// of Q_k(x_i) (rows with S_i ≥ k) on the segment design with unit noise
    /// and N(μ_η, 1) priors.
    pub fn eta_posterior(
        &self,
        c: usize,
        state: &ParameterState,
    ) -> Result<(DVector<f64>, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
        let width = self.eta_width();
        let mut dtd = DMatrix::<f64>::zeros(width, width);
        let mut dtq = DVector::<f64>::zeros(width);
        if c + 1 < self.k {
            for i in 0..self.n() {
                if state.alloc[i] < c {
                    continue;
                }
                let q = state.q_latent.get(i, c);
                let x = self.x[i];
                let j = 1 + self.segment[i];
                dtd[(0, 0)] += 1.0;
                dtd[(0, j)] += x;
                dtd[(j, j)] += x * x;
                dtq[0] += q;
                dtq[j] += q * x;
            }
            for j in 1..width {
                dtd[(j, 0)] = dtd[(0, j)];
            }
        }
        let prior_mean = DVector::from_element(width, self.mu_eta);
        conjugate::unit_variance_posterior(&prior_mean, &dtd, &dtq)
    }

    pub fn draw_eta<R: Rng + ?Sized>(&mut self, state: &mut ParameterState, rng: &mut R) -> Result<()> {
        for c in 0..self.k {
            let (mean, chol) = self.eta_posterior(c, state)?;
            let eta = conjugate::draw_from_precision(&mean, &chol, rng);
            state.eta.row_mut(c).copy_from_slice(eta.as_slice());
        }
        Ok(())
    }

    /// α_k(x_i) for k < K from the current η.
    pub fn compute_alpha(&mut self, state: &ParameterState) {
        let k1 = self.k.saturating_sub(1);
        for i in 0..self.n() {
            let x = self.x[i];
            let j = 1 + self.segment[i];
            let row = self.alpha.row_mut(i);
            for (c, a) in row.iter_mut().enumerate().take(k1) {
                let eta = state.eta.row(c);
                *a = eta[0] + eta[j] * x;
            }
        }
    }

    /// Q_k(x_i) ~ N(α_k(x_i), 1) truncated to [0, ∞) when k = S_i and to
    /// (−∞, 0) when k < S_i.
    pub fn draw_augmentation<R: Rng + ?Sized>(&self, state: &mut ParameterState, rng: &mut R) {
        let k1 = self.k.saturating_sub(1);
        for i in 0..self.n() {
            let s = state.alloc[i];
            let alpha = self.alpha.row(i);
            let q = state.q_latent.row_mut(i);
            for c in 0..s.min(k1) {
                q[c] = normal::unit_truncated_negative(alpha[c], rng);
            }
            if s < k1 {
                q[s] = normal::unit_truncated_positive(alpha[s], rng);
            }
        }
    }

    /// Refreshes the ln ω cache from α.
    pub fn compute_weights(&mut self) {
        for i in 0..self.n() {
            let alpha = self.alpha.row(i);
            psbp::ln_stick_break_into(alpha.iter().copied(), self.ln_weights.row_mut(i));
        }
    }

    /// Sets the weight caches from `state.eta` (used when a state is supplied
    /// from outside the sampler).
    pub fn sync_weights(&mut self, state: &ParameterState) {
        self.compute_alpha(state);
        self.compute_weights();
    }
}

/// Runs one chain of `config.iterations` sweeps on analysis-scale data.
pub fn run_chain(
    data: &Dataset,
    model: OutcomeModel,
    config: &ModelConfig,
    chain: u64,
) -> Result<ChainOutput> {
    let started = Instant::now();
    let design = Design::build(data, model)?;
    let mut sampler = Sampler::new(data, &design, config)?;
    let mut rng = chain_rng(config.seed, chain);
    let mut state = sampler.initialize(&mut rng)?;
    let mut retained = Vec::with_capacity(config.retained());
    for iteration in 1..=config.iterations {
        sampler
            .step(&mut state, &mut rng)
            .map_err(|e| Error::AtIteration {
                iteration,
                source: Box::new(e),
            })?;
        if iteration > config.burn_in && (iteration - config.burn_in) % config.thinning == 0 {
            debug_assert!(state.check().is_ok());
            retained.push(state.snapshot());
        }
    }
    Ok(ChainOutput {
        retained,
        meta: ChainMeta {
            seed: config.seed,
            chain,
            iterations: config.iterations,
            burn_in: config.burn_in,
            thinning: config.thinning,
            all_gibbs: true,
            runtime_secs: started.elapsed().as_secs_f64(),
        },
        knots: sampler.knots().clone(),
        design_names: design.names.clone(),
    })
}

/// Writes retained draws, one row per draw, on the analysis scale. Columns:
/// `chain, draw, theta_y.<k>.<term>, sigma_y.<k>, eta.<k>.<v>` and, when the
/// W regression is present, `theta_w.<term>, sigma_w` (k is 1-based).
pub fn write_draws_csv<W: std::io::Write>(chains: &[ChainOutput], out: W) -> Result<()> {
    let first = match chains.iter().find_map(|c| c.retained.first().map(|s| (c, s))) {
        Some(f) => f,
        None => return Err(Error::Validation("no retained draws to write".into())),
    };
    let (chain0, snap) = first;
    let names = &chain0.design_names;
    let k = snap.sigma_y.len();
    let mut header = vec!["chain".to_string(), "draw".to_string()];
    for c in 1..=k {
        header.extend(names.iter().map(|t| format!("theta_y.{c}.{t}")));
    }
    header.extend((1..=k).map(|c| format!("sigma_y.{c}")));
    for c in 1..=k {
        header.extend((0..snap.eta.cols()).map(|v| format!("eta.{c}.{v}")));
    }
    if let Some(tw) = &snap.theta_w {
        header.extend(names.iter().take(tw.len()).map(|t| format!("theta_w.{t}")));
        header.push("sigma_w".into());
    }
    let err = |e: csv::Error| Error::Numerical(format!("csv write failed: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header).map_err(err)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for ch in chains {
        for (d, s) in ch.retained.iter().enumerate() {
            row.clear();
            row.push(ch.meta.chain.to_string());
            row.push((d + 1).to_string());
            row.extend(s.theta_y.as_slice().iter().map(f64::to_string));
            row.extend(s.sigma_y.iter().map(f64::to_string));
            row.extend(s.eta.as_slice().iter().map(f64::to_string));
            if let Some(tw) = &s.theta_w {
                row.extend(tw.iter().map(f64::to_string));
                row.push(s.sigma_w.unwrap_or(f64::NAN).to_string());
            }
            w.write_record(&row).map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::Numerical(format!("csv flush failed: {e}")))?;
    Ok(())
}
