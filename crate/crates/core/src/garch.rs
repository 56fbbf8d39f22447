//! GARCH(p, q) conditional variance of base-model residuals: maximum
//! likelihood fitting by Nelder-Mead and multi-step variance forecasts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{BoundedPrediction, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub alpha0: f64,
    /// Weights of the `q` most recent squared residuals, lag 1 first.
    pub alpha: Vec<f64>,
    /// Weights of the `p` most recent variances, lag 1 first.
    pub beta: Vec<f64>,
}

impl GarchParams {
    pub fn constant(alpha0: f64) -> Self {
        Self { alpha0, alpha: vec![], beta: vec![] }
    }

    pub fn persistence(&self) -> f64 {
        self.alpha.iter().sum::<f64>() + self.beta.iter().sum::<f64>()
    }

    pub fn unconditional_variance(&self) -> f64 {
        self.alpha0 / (1.0 - self.persistence())
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha0 > 0.0
            && self.alpha.iter().chain(&self.beta).all(|&c| c >= 0.0 && c.is_finite())
            && self.persistence() < 1.0;
        if !ok {
            return Err(Error::InvalidArgument(format!("GARCH parameters violate the constraints: {self:?}")));
        }
        Ok(())
    }
}

/// `alpha0 + sum alpha_i eps^2_{t-i} + sum beta_i sigma^2_{t-i}`, with both
/// histories ordered most recent first.
pub fn variance_step(params: &GarchParams, past_eps_sq: &[f64], past_var: &[f64]) -> Result<f64> {
    let (q, p) = (params.alpha.len(), params.beta.len());
    if past_eps_sq.len() < q {
        return Err(Error::InsufficientHistory { needed: q, got: past_eps_sq.len() });
    }
    if past_var.len() < p {
        return Err(Error::InsufficientHistory { needed: p, got: past_var.len() });
    }
    let a: f64 = params.alpha.iter().zip(past_eps_sq).map(|(a, e)| a * e).sum();
    let b: f64 = params.beta.iter().zip(past_var).map(|(b, v)| b * v).sum();
    Ok(params.alpha0 + a + b)
}

/// In-sample conditional variances; values before the series start are
/// `presample`.
pub fn filter_variance(params: &GarchParams, residuals: &[f64], presample: f64) -> Vec<f64> {
    let (q, p) = (params.alpha.len(), params.beta.len());
    let mut var: Vec<f64> = Vec::with_capacity(residuals.len());
    for t in 0..residuals.len() {
        let mut s = params.alpha0;
        for i in 1..=q {
            s += params.alpha[i - 1] * if t >= i { residuals[t - i] * residuals[t - i] } else { presample };
        }
        for i in 1..=p {
            s += params.beta[i - 1] * if t >= i { var[t - i] } else { presample };
        }
        var.push(s);
    }
    var
}

/// `-1/2 sum (ln sigma^2_t + eps^2_t / sigma^2_t)`.
pub fn log_likelihood(params: &GarchParams, residuals: &[f64], presample: f64) -> f64 {
    let var = filter_variance(params, residuals, presample);
    -0.5 * residuals.iter().zip(&var).map(|(e, v)| v.ln() + e * e / v).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchFit {
    pub p: usize,
    pub q: usize,
    #[serde(flatten)]
    pub params: GarchParams,
    pub loglik: f64,
    /// Value used for residuals and variances before the first observation.
    pub presample_variance: f64,
    pub converged: bool,
    #[serde(skip)]
    pub fitted_variance: Vec<f64>,
}

impl GarchFit {
    pub fn unconditional_variance(&self) -> f64 {
        self.params.unconditional_variance()
    }
}

fn decode(theta: &[f64], q: usize) -> GarchParams {
    let alpha0 = theta[0].exp();
    let e: Vec<f64> = theta[1..].iter().map(|t| t.exp()).collect();
    let denom = 1.0 + e.iter().sum::<f64>();
    let c: Vec<f64> = e.iter().map(|v| v / denom).collect();
    GarchParams { alpha0, alpha: c[..q].to_vec(), beta: c[q..].to_vec() }
}

fn encode(params: &GarchParams) -> Vec<f64> {
    let rest = 1.0 - params.persistence();
    let mut theta = vec![params.alpha0.ln()];
    theta.extend(params.alpha.iter().chain(&params.beta).map(|c| (c.max(1e-12) / rest).ln()));
    theta
}

struct NelderMead {
    max_iter: usize,
    f_tol: f64,
    x_tol: f64,
}

/// Minimizes `f` from `x0`; returns `(x, f(x), converged)`.
fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, opts: &NelderMead) -> (Vec<f64>, f64, bool) {
    let n = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        simplex.push(x);
    }
    let mut fv: Vec<f64> = simplex.iter().map(|x| eval(x)).collect();
    for _ in 0..opts.max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        fv = order.iter().map(|&i| fv[i]).collect();
        let spread = (fv[n] - fv[0]).abs();
        let size = simplex[1..]
            .iter()
            .map(|x| x.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= opts.f_tol * (1.0 + fv[0].abs()) && size <= opts.x_tol {
            return (simplex[0].clone(), fv[0], true);
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|x| x[j]).sum::<f64>() / n as f64).collect();
        let towards = |coef: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + coef * (simplex[n][j] - centroid[j])).collect() };
        let xr = towards(-1.0);
        let fr = eval(&xr);
        if fr < fv[0] {
            let xe = towards(-2.0);
            let fe = eval(&xe);
            if fe < fr {
                simplex[n] = xe;
                fv[n] = fe;
            } else {
                simplex[n] = xr;
                fv[n] = fr;
            }
        } else if fr < fv[n - 1] {
            simplex[n] = xr;
            fv[n] = fr;
        } else {
            let (xc, fc) = if fr < fv[n] {
                let x = towards(-0.5);
                let v = eval(&x);
                (x, v)
            } else {
                let x = towards(0.5);
                let v = eval(&x);
                (x, v)
            };
            if fc < fv[n].min(fr) {
                simplex[n] = xc;
                fv[n] = fc;
            } else {
                for i in 1..=n {
                    let x: Vec<f64> = (0..n).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
                    fv[i] = eval(&x);
                    simplex[i] = x;
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| fv[a].total_cmp(&fv[b])).expect("nonempty simplex");
    (simplex[best].clone(), fv[best], false)
}

pub const GARCH_RESTARTS: usize = 5;

/// Maximum-likelihood GARCH(p, q) fit over several seeded starting points.
/// `converged` is false when no restart met the tolerance within the
/// iteration budget; the best point found is still returned.
pub fn fit_mle(residuals: &[f64], p: usize, q: usize, seed: u64) -> Result<GarchFit> {
    let needed = 10 * (p + q + 1);
    if residuals.len() < needed {
        return Err(Error::SeriesTooShort { needed, got: residuals.len() });
    }
    if let Some(i) = residuals.iter().position(|r| !r.is_finite()) {
        return Err(Error::NonFiniteValue { what: "residuals", row: 0, col: i });
    }
    let presample = residuals.iter().map(|e| e * e).sum::<f64>() / residuals.len() as f64;
    if presample <= 0.0 {
        return Err(Error::NumericalFailure("residuals are identically zero".into()));
    }
    let objective = |theta: &[f64]| -log_likelihood(&decode(theta, q), residuals, presample);
    let k = p + q;
    let starts: Vec<GarchParams> = (0..GARCH_RESTARTS)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
            let total = if k == 0 { 0.0 } else if r == 0 { 0.5 } else { rng.random_range(0.05..0.95) };
            let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
            let wsum: f64 = weights.iter().sum::<f64>().max(1e-300);
            let c: Vec<f64> = weights.iter().map(|w| total * w / wsum).collect();
            GarchParams { alpha0: presample * (1.0 - total), alpha: c[..q].to_vec(), beta: c[q..].to_vec() }
        })
        .collect();
    let opts = NelderMead { max_iter: 4000 * (k + 1), f_tol: 1e-12, x_tol: 1e-7 };
    let results: Vec<(Vec<f64>, f64, bool)> = starts
        .par_iter()
        .map(|s| {
            // restart once from the optimum to escape simplex collapse
            let (x, _, _) = nelder_mead(&objective, &encode(s), 0.5, &opts);
            nelder_mead(&objective, &x, 0.1, &opts)
        })
        .collect();
    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.1 < results[best].1 {
            best = i;
        }
    }
    let (theta, negll, converged) = results[best].clone();
    if !converged {
        log::warn!("GARCH({p},{q}) optimizer hit its iteration limit");
    }
    let params = decode(&theta, q);
    let fitted_variance = filter_variance(&params, residuals, presample);
    Ok(GarchFit { p, q, params, loglik: -negll, presample_variance: presample, converged, fitted_variance })
}

/// Variance forecast for the `horizon` steps following `observed`: observed
/// residuals drive the recursion, and future squared residuals are replaced
/// by their conditional expectation.
pub fn forecast(fit: &GarchFit, observed: &[f64], horizon: usize) -> Result<Vec<f64>> {
    let needed = fit.params.beta.len().max(fit.params.alpha.len());
    if observed.len() < needed {
        return Err(Error::InsufficientHistory { needed, got: observed.len() });
    }
    forecast_with_presample(fit, observed, horizon)
}

/// Like [`forecast`], with pre-sample values standing in for missing history.
fn forecast_with_presample(fit: &GarchFit, observed: &[f64], horizon: usize) -> Result<Vec<f64>> {
    let (p, q) = (fit.params.beta.len(), fit.params.alpha.len());
    let mut var = filter_variance(&fit.params, observed, fit.presample_variance);
    let mut eps_sq: Vec<f64> = observed.iter().map(|e| e * e).collect();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let t = var.len();
        let past_e: Vec<f64> = (1..=q).map(|i| if t >= i { eps_sq[t - i] } else { fit.presample_variance }).collect();
        let past_v: Vec<f64> = (1..=p).map(|i| if t >= i { var[t - i] } else { fit.presample_variance }).collect();
        let v = variance_step(&fit.params, &past_e, &past_v)?;
        out.push(v);
        var.push(v);
        eps_sq.push(v);
    }
    Ok(out)
}

/// Symmetric bands `sqrt(sigma^2)` around `yhat`, one fit and one residual
/// history per output dimension.
pub fn garch_bounds(fits: &[GarchFit], histories: &[Vec<f64>], yhat: &Matrix) -> Result<BoundedPrediction> {
    let (d, m) = yhat.shape();
    if fits.len() != d || histories.len() != d {
        return Err(Error::LengthMismatch(fits.len().min(histories.len()), d));
    }
    let mut z = Matrix::zeros(d, m);
    for k in 0..d {
        for (t, v) in forecast(&fits[k], &histories[k], m)?.into_iter().enumerate() {
            z.set(k, t, v.sqrt());
        }
    }
    Ok(BoundedPrediction::symmetric(yhat.clone(), z))
}

/// Bands for a contiguous evaluation stream forecast block by block: each
/// block of `block` steps is forecast from `history` followed by all
/// evaluation residuals before it. `history` may be empty.
pub fn rolling_bands(fits: &[GarchFit], history: &Matrix, eval_residuals: &Matrix, block: usize) -> Result<Matrix> {
    let (d, n) = eval_residuals.shape();
    if fits.len() != d || history.rows() != d {
        return Err(Error::LengthMismatch(fits.len(), d));
    }
    if block == 0 {
        return Err(Error::InvalidArgument("block length must be positive".into()));
    }
    let mut z = Matrix::zeros(d, n);
    for k in 0..d {
        let mut past = history.row(k).to_vec();
        let mut start = 0;
        while start < n {
            let len = block.min(n - start);
            for (j, v) in forecast_with_presample(&fits[k], &past, len)?.into_iter().enumerate() {
                z.set(k, start + j, v.sqrt());
            }
            past.extend_from_slice(&eval_residuals.row(k)[start..start + len]);
            start += len;
        }
    }
    Ok(z)
}

/// Draws a GARCH series of length `n` after a burn-in of 500 steps.
pub fn simulate(params: &GarchParams, n: usize, seed: u64) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p, q) = (params.beta.len(), params.alpha.len());
    let burn = 500;
    let uv = params.unconditional_variance();
    let mut eps: Vec<f64> = vec![];
    let mut var: Vec<f64> = vec![];
    for t in 0..burn + n {
        let e2: Vec<f64> = (1..=q).map(|i| if t >= i { eps[t - i] * eps[t - i] } else { uv }).collect();
        let v2: Vec<f64> = (1..=p).map(|i| if t >= i { var[t - i] } else { uv }).collect();
        let v = variance_step(params, &e2, &v2).expect("histories sized");
        let z: f64 = StandardNormal.sample(&mut rng);
        var.push(v);
        eps.push(v.sqrt() * z);
    }
    eps.split_off(burn)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_step_examples() {
        assert_eq!(variance_step(&GarchParams::constant(2.5), &[], &[]).unwrap(), 2.5);
        let p = GarchParams { alpha0: 1.0, alpha: vec![0.5], beta: vec![0.25] };
        assert_eq!(variance_step(&p, &[4.0], &[4.0]).unwrap(), 4.0);
        let zero = GarchParams { alpha0: 0.7, alpha: vec![0.0, 0.0], beta: vec![0.0] };
        assert_eq!(variance_step(&zero, &[9.0, 3.0], &[5.0]).unwrap(), 0.7);
        assert!(matches!(variance_step(&p, &[], &[1.0]), Err(Error::InsufficientHistory { needed: 1, got: 0 })));
    }

    #[test]
    fn reparameterization_roundtrip() {
        let p = GarchParams { alpha0: 0.3, alpha: vec![0.2, 0.1], beta: vec![0.4] };
        let back = decode(&encode(&p), 2);
        assert!((back.alpha0 - 0.3).abs() < 1e-12);
        for (a, b) in back.alpha.iter().chain(&back.beta).zip(p.alpha.iter().chain(&p.beta)) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(decode(&[0.0, 50.0, 50.0], 1).persistence() < 1.0 + 1e-12);
    }

    #[test]
    fn constant_fit_matches_closed_form() {
        let r: Vec<f64> = (0..200).map(|i| ((i * 37 % 101) as f64 / 50.0 - 1.0) * 1.5).collect();
        let fit = fit_mle(&r, 0, 0, 1).unwrap();
        let ms = r.iter().map(|e| e * e).sum::<f64>() / r.len() as f64;
        assert!((fit.params.alpha0 / ms - 1.0).abs() < 1e-6);
        assert_eq!(forecast(&fit, &r, 5).unwrap(), vec![fit.params.alpha0; 5]);
    }

    #[test]
    fn forecast_converges_to_unconditional_variance() {
        let p = GarchParams { alpha0: 0.1, alpha: vec![0.3], beta: vec![0.5] };
        let fit = GarchFit { p: 1, q: 1, params: p.clone(), loglik: 0.0, presample_variance: 0.5, converged: true, fitted_variance: vec![] };
        let f = forecast(&fit, &[3.0], 200).unwrap();
        assert!((f[199] - 0.5).abs() < 1e-12);
        // started above the limit, the path decreases monotonically
        assert!(f.windows(2).all(|w| w[1] <= w[0]));
        let low = forecast(&fit, &[0.0], 50).unwrap();
        assert!(low.windows(2).all(|w| w[1] >= w[0]));
        // one step ahead equals a direct recursion step
        let hist = [0.4, -1.2, 0.7];
        let var = filter_variance(&p, &hist, 0.5);
        let one = forecast(&fit, &hist, 1).unwrap()[0];
        assert_eq!(one, variance_step(&p, &[0.7 * 0.7], &[var[2]]).unwrap());
    }

    #[test]
    fn bounds_are_square_roots() {
        let fit = GarchFit {
            p: 0,
            q: 0,
            params: GarchParams::constant(4.0),
            loglik: 0.0,
            presample_variance: 4.0,
            converged: true,
            fitted_variance: vec![],
        };
        let b = garch_bounds(&[fit], &[vec![]], &Matrix::zeros(1, 3)).unwrap();
        assert_eq!(b.z_upper.as_slice(), &[2.0, 2.0, 2.0]);
        assert!(b.is_symmetric());
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(fit_mle(&[1.0; 20], 1, 1, 0), Err(Error::SeriesTooShort { needed: 30, got: 20 })));
    }

    #[test]
    fn json_keys() {
        let r = simulate(&GarchParams { alpha0: 0.1, alpha: vec![0.2], beta: vec![0.5] }, 300, 3);
        let fit = fit_mle(&r, 1, 1, 0).unwrap();
        let v = serde_json::to_value(&fit).unwrap();
        for key in ["p", "q", "alpha0", "alpha", "beta", "loglik"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(fit.fitted_variance.iter().all(|&s| s >= fit.params.alpha0));
        let nested = fit_mle(&r, 0, 0, 0).unwrap();
        assert!(fit.loglik >= nested.loglik - 1e-9);
    }
}
