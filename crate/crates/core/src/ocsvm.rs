//! One-class SVM trained on the normal class only.
//!
//! The dual is
//!
//! ```text
//! min_α ½ αᵀQα   s.t.  0 ≤ α_i ≤ 1/(ν·n),  Σ α_i = 1,   Q_ij = K(x_i, x_j)
//! ```
//!
//! solved by pairwise coordinate steps: each step moves mass between the most
//! violating pair along the feasible segment, optimally. The decision value is
//! `g(x) = Σ α_i K(x, x_i) − ρ` and points with `g(x) < 0` are abnormal.

use std::collections::{HashMap, VecDeque};
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::ensemble::Verdict;
use crate::error::{check_dim, Error, Result};
use crate::window::ScalingParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
}

impl KernelSpec {
    /// RBF with γ = 1 / dimension.
    pub fn default_for_dim(dim: usize) -> Self {
        KernelSpec::Rbf {
            gamma: 1.0 / dim.max(1) as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf { gamma } if !(gamma > 0.0 && gamma.is_finite()) => Err(
                Error::Config(format!("rbf gamma must be positive, got {gamma}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcSvmTrainConfig {
    pub nu: f64,
    /// Stop once the maximal pairwise KKT violation is at most this.
    pub tolerance: f64,
    /// Pair updates allowed; `None` means `10·n`.
    pub max_passes: Option<usize>,
}

impl Default for OcSvmTrainConfig {
    fn default() -> Self {
        OcSvmTrainConfig {
            nu: 0.1,
            tolerance: 1e-6,
            max_passes: None,
        }
    }
}

impl OcSvmTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::Config(format!("nu must be in (0, 1], got {}", self.nu)));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if self.max_passes == Some(0) {
            return Err(Error::Config("max_passes must be positive".into()));
        }
        Ok(())
    }
}

/// Full solution of the dual, one α per training sample.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub alphas: Vec<f64>,
    pub rho: f64,
    /// Upper bound `1/(ν·n)` on each α.
    pub upper: f64,
    pub iterations: usize,
    /// Final maximal violation `max_{α_j>0} G_j − min_{α_i<C} G_i`.
    pub kkt_gap: f64,
    pub converged: bool,
}

/// Kernel rows computed on demand, with a bounded FIFO cache.
struct KernelRows<'a> {
    samples: &'a [Vec<f64>],
    kernel: KernelSpec,
    cache: HashMap<usize, Rc<Vec<f64>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl<'a> KernelRows<'a> {
    const CACHE_BYTES: usize = 256 << 20;

    fn new(samples: &'a [Vec<f64>], kernel: KernelSpec) -> Self {
        let n = samples.len().max(1);
        KernelRows {
            samples,
            kernel,
            cache: HashMap::new(),
            order: VecDeque::new(),
            capacity: (Self::CACHE_BYTES / (n * 8)).max(2),
        }
    }

    fn row(&mut self, i: usize) -> Rc<Vec<f64>> {
        if let Some(r) = self.cache.get(&i) {
            return Rc::clone(r);
        }
        let xi = &self.samples[i];
        let row: Vec<f64> = self
            .samples
            .iter()
            .map(|xj| self.kernel.eval(xi, xj))
            .collect();
        let row = Rc::new(row);
        if self.order.len() >= self.capacity {
            if let Some(old) = self.order.pop_front() {
                self.cache.remove(&old);
            }
        }
        self.order.push_back(i);
        self.cache.insert(i, Rc::clone(&row));
        row
    }
}

fn check_samples(samples: &[Vec<f64>]) -> Result<usize> {
    let first = samples
        .first()
        .ok_or(Error::TooFewSamples { needed: 1, got: 0 })?;
    let dim = first.len();
    for s in samples {
        check_dim(dim, s.len())?;
    }
    Ok(dim)
}

pub fn solve_dual(
    samples: &[Vec<f64>],
    cfg: &OcSvmTrainConfig,
    kernel: KernelSpec,
) -> Result<DualSolution> {
    cfg.validate()?;
    kernel.validate()?;
    check_samples(samples)?;

    // The box admits Σα = 1 whenever ν ≤ 1; for ν·n < 1 it simply never binds.
    let n = samples.len();
    let upper = 1.0 / (cfg.nu * n as f64);
    let max_iter = cfg.max_passes.unwrap_or(10 * n);

    // Uniform start is feasible (1/n ≤ 1/(νn)) and independent of sample order.
    let mut alphas = vec![1.0 / n as f64; n];
    let mut rows = KernelRows::new(samples, kernel);
    let diag: Vec<f64> = samples.iter().map(|x| kernel.eval(x, x)).collect();

    // G = Qα
    let mut grad: Vec<f64> = (0..n)
        .map(|i| rows.row(i).iter().sum::<f64>() / n as f64)
        .collect();

    let mut iterations = 0;
    let mut kkt_gap;
    loop {
        let mut best_up: Option<usize> = None;
        let mut best_low: Option<usize> = None;
        for k in 0..n {
            if alphas[k] < upper && best_up.is_none_or(|i| grad[k] < grad[i]) {
                best_up = Some(k);
            }
            if alphas[k] > 0.0 && best_low.is_none_or(|j| grad[k] > grad[j]) {
                best_low = Some(k);
            }
        }
        let (i, j) = match (best_up, best_low) {
            (Some(i), Some(j)) => (i, j),
            _ => {
                kkt_gap = 0.0;
                break;
            }
        };
        kkt_gap = grad[j] - grad[i];
        if kkt_gap <= cfg.tolerance || iterations >= max_iter {
            break;
        }
        iterations += 1;

        let row_i = rows.row(i);
        let row_j = rows.row(j);
        let eta = (diag[i] + diag[j] - 2.0 * row_i[j]).max(1e-12);
        let room_i = upper - alphas[i];
        let room_j = alphas[j];
        let mut t = kkt_gap / eta;
        if t >= room_i {
            t = room_i;
        }
        if t >= room_j {
            t = room_j;
        }
        alphas[i] = if t == room_i { upper } else { alphas[i] + t };
        alphas[j] = if t == room_j { 0.0 } else { alphas[j] - t };
        for k in 0..n {
            grad[k] += t * (row_i[k] - row_j[k]);
        }
    }

    let rho = recover_rho(&alphas, &grad, upper);
    Ok(DualSolution {
        alphas,
        rho,
        upper,
        iterations,
        kkt_gap,
        converged: kkt_gap <= cfg.tolerance,
    })
}

/// Free multipliers sit on the boundary, so `ρ = G_i` there. Without any, KKT
/// pins ρ between the at-upper and at-zero gradients and the midpoint is used.
fn recover_rho(alphas: &[f64], grad: &[f64], upper: f64) -> f64 {
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    let mut lower_bound = f64::NEG_INFINITY;
    let mut upper_bound = f64::INFINITY;
    for (&a, &g) in alphas.iter().zip(grad) {
        if a > 0.0 && a < upper {
            free_sum += g;
            free_count += 1;
        } else if a >= upper {
            lower_bound = lower_bound.max(g);
        } else {
            upper_bound = upper_bound.min(g);
        }
    }
    if free_count > 0 {
        free_sum / free_count as f64
    } else if lower_bound.is_finite() && upper_bound.is_finite() {
        0.5 * (lower_bound + upper_bound)
    } else if lower_bound.is_finite() {
        lower_bound
    } else {
        upper_bound
    }
}

/// `½ αᵀQα` evaluated directly.
pub fn dual_objective(samples: &[Vec<f64>], alphas: &[f64], kernel: KernelSpec) -> f64 {
    let mut total = 0.0;
    for (i, xi) in samples.iter().enumerate() {
        for (j, xj) in samples.iter().enumerate() {
            total += alphas[i] * alphas[j] * kernel.eval(xi, xj);
        }
    }
    0.5 * total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcSvmModel {
    pub support_vectors: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub rho: f64,
    pub kernel: KernelSpec,
    pub scaling: ScalingParams,
}

/// Fits on samples already in model space; the stored scaling starts as identity.
pub fn fit_ocsvm(
    samples: &[Vec<f64>],
    cfg: &OcSvmTrainConfig,
    kernel: KernelSpec,
) -> Result<OcSvmModel> {
    let dim = check_samples(samples)?;
    let sol = solve_dual(samples, cfg, kernel)?;
    let (support_vectors, alphas) = samples
        .iter()
        .zip(&sol.alphas)
        .filter(|(_, &a)| a > 0.0)
        .map(|(x, &a)| (x.clone(), a))
        .unzip();
    Ok(OcSvmModel {
        support_vectors,
        alphas,
        rho: sol.rho,
        kernel,
        scaling: ScalingParams::identity(dim),
    })
}

impl OcSvmModel {
    pub fn with_scaling(mut self, scaling: ScalingParams) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn dim(&self) -> usize {
        self.scaling.dim()
    }

    /// Decision value for a raw (unscaled) feature vector.
    pub fn g(&self, x: &[f64]) -> Result<f64> {
        let z = self.scaling.apply(x)?;
        Ok(self.g_scaled(&z))
    }

    pub(crate) fn g_scaled(&self, z: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.alphas)
            .map(|(sv, a)| a * self.kernel.eval(z, sv))
            .sum::<f64>()
            - self.rho
    }

    pub fn decide(&self, x: &[f64]) -> Result<Verdict> {
        Ok(verdict_from_g(self.g(x)?))
    }
}

pub fn ocsvm_g(model: &OcSvmModel, x: &[f64]) -> Result<f64> {
    model.g(x)
}

pub fn ocsvm_decide(model: &OcSvmModel, x: &[f64]) -> Result<Verdict> {
    model.decide(x)
}

/// Sign rule with sign(0) = +1: boundary points are normal.
pub fn verdict_from_g(g: f64) -> Verdict {
    if g >= 0.0 {
        Verdict::Normal
    } else {
        Verdict::Abnormal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(nu: f64) -> OcSvmTrainConfig {
        OcSvmTrainConfig {
            nu,
            ..Default::default()
        }
    }

    fn manual(alphas: Vec<f64>, svs: Vec<Vec<f64>>, rho: f64, kernel: KernelSpec) -> OcSvmModel {
        let dim = svs[0].len();
        OcSvmModel {
            support_vectors: svs,
            alphas,
            rho,
            kernel,
            scaling: ScalingParams::identity(dim),
        }
    }

    #[test]
    fn single_sample_is_forced() {
        for nu in [0.5, 1.0] {
            let sol = solve_dual(&[vec![2.0]], &cfg(nu), KernelSpec::Linear).unwrap();
            assert_eq!(sol.alphas, vec![1.0]);
            assert!((sol.rho - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn box_bound_for_four_samples() {
        let xs = vec![vec![0.0], vec![1.0], vec![2.0], vec![5.0]];
        let sol = solve_dual(&xs, &cfg(0.5), KernelSpec::Rbf { gamma: 0.5 }).unwrap();
        assert!((sol.upper - 0.5).abs() < 1e-15);
        assert!(sol.alphas.iter().all(|&a| (-1e-12..=0.5 + 1e-12).contains(&a)));
        assert!((sol.alphas.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nu_one_with_two_samples_is_uniform() {
        let xs = vec![vec![0.0, 3.0], vec![7.0, -1.0]];
        let sol = solve_dual(&xs, &cfg(1.0), KernelSpec::Rbf { gamma: 0.3 }).unwrap();
        assert_eq!(sol.alphas, vec![0.5, 0.5]);
    }

    #[test]
    fn loose_box_is_not_binding() {
        let xs = vec![vec![0.0], vec![1.0]];
        let sol = solve_dual(&xs, &cfg(0.4), KernelSpec::Linear).unwrap();
        assert!((sol.upper - 1.25).abs() < 1e-15);
        assert!((sol.alphas.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // linear kernel on {0, 1}: all mass on the origin minimizes ½αᵀQα
        assert!((sol.alphas[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_inputs_fail() {
        let xs = vec![vec![0.0], vec![1.0]];
        let ragged = vec![vec![0.0], vec![1.0, 2.0]];
        assert!(matches!(
            fit_ocsvm(&ragged, &cfg(1.0), KernelSpec::Linear),
            Err(Error::Dimension { .. })
        ));
        assert!(fit_ocsvm(&xs, &cfg(1.0), KernelSpec::Rbf { gamma: 0.0 }).is_err());
        assert!(fit_ocsvm(&xs, &cfg(0.0), KernelSpec::Linear).is_err());
    }

    #[test]
    fn g_evaluates_decision_value() {
        let m = manual(vec![1.0], vec![vec![0.0]], 0.5, KernelSpec::Rbf { gamma: 1.0 });
        assert!((m.g(&[0.0]).unwrap() - 0.5).abs() < 1e-15);
        let far = m.g(&[10.0]).unwrap();
        assert!((far - ((-100.0f64).exp() - 0.5)).abs() < 1e-15);
        assert_eq!(m.decide(&[0.0]).unwrap(), Verdict::Normal);
        assert_eq!(m.decide(&[10.0]).unwrap(), Verdict::Abnormal);
        assert!(m.g(&[0.0, 1.0]).is_err());

        let lin = manual(vec![1.0], vec![vec![2.0]], 4.0, KernelSpec::Linear);
        assert_eq!(lin.g(&[2.0]).unwrap(), 0.0);
        assert_eq!(lin.decide(&[2.0]).unwrap(), Verdict::Normal);
    }

    #[test]
    fn sign_rule() {
        assert_eq!(verdict_from_g(0.5), Verdict::Normal);
        assert_eq!(verdict_from_g(-0.5), Verdict::Abnormal);
        assert_eq!(verdict_from_g(0.0), Verdict::Normal);
    }

    #[test]
    fn outlier_scores_below_cluster() {
        let mut xs: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64 * 0.37).sin() * 0.5, (i as f64 * 0.91).cos() * 0.5])
            .collect();
        xs.push(vec![0.1, 0.0]);
        let m = fit_ocsvm(&xs, &cfg(0.1), KernelSpec::Rbf { gamma: 0.5 }).unwrap();
        assert_eq!(m.decide(&[0.0, 0.0]).unwrap(), Verdict::Normal);
        assert_eq!(m.decide(&[6.0, 6.0]).unwrap(), Verdict::Abnormal);
    }

    #[test]
    fn scaling_is_applied_at_query_time() {
        let xs = vec![vec![0.0], vec![1.0]];
        let m = fit_ocsvm(&xs, &cfg(1.0), KernelSpec::Rbf { gamma: 1.0 })
            .unwrap()
            .with_scaling(ScalingParams {
                means: vec![100.0],
                stds: vec![10.0],
            });
        let raw = m.g(&[105.0]).unwrap();
        let direct = m.g_scaled(&[0.5]);
        assert_eq!(raw, direct);
    }

    fn points(max_n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1..=max_n).prop_flat_map(|n| {
            prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), n)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn feasible_after_fit(xs in points(30), nu in 0.2..1.0f64) {
            let sol = solve_dual(&xs, &cfg(nu), KernelSpec::Rbf { gamma: 0.7 }).unwrap();
            let sum: f64 = sol.alphas.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
            for &a in &sol.alphas {
                prop_assert!(a >= -1e-6 && a <= sol.upper + 1e-6);
            }
        }

        #[test]
        fn g_non_increasing_moving_away(xs in points(12), dir in prop::collection::vec(-1.0..1.0f64, 2)) {
            let norm = (dir[0] * dir[0] + dir[1] * dir[1]).sqrt();
            prop_assume!(norm > 0.1);
            let u = [dir[0] / norm, dir[1] / norm];
            let nu = 1.0f64.min(0.5_f64.max(1.0 / xs.len() as f64));
            let m = fit_ocsvm(&xs, &cfg(nu), KernelSpec::Rbf { gamma: 0.5 }).unwrap();
            // start where every support vector is behind the query along u
            let t0 = m.support_vectors.iter()
                .map(|sv| sv[0] * u[0] + sv[1] * u[1])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut prev = f64::INFINITY;
            for step in 0..40 {
                let t = t0 + 0.1 * step as f64;
                let g = m.g(&[t * u[0], t * u[1]]).unwrap();
                prop_assert!(g <= prev + 1e-12);
                prev = g;
            }
        }

        #[test]
        fn permutation_leaves_g_unchanged(xs in points(10), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let nu = 1.0f64.min(0.5_f64.max(1.0 / xs.len() as f64));
            let kernel = KernelSpec::Rbf { gamma: 0.8 };
            let mut perm: Vec<usize> = (0..xs.len()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| xs[i].clone()).collect();
            let c = OcSvmTrainConfig { nu, tolerance: 1e-10, max_passes: Some(100_000) };
            let a = solve_dual(&xs, &c, kernel).unwrap();
            let b = solve_dual(&shuffled, &c, kernel).unwrap();
            let ma = fit_ocsvm(&xs, &c, kernel).unwrap();
            let mb = fit_ocsvm(&shuffled, &c, kernel).unwrap();
            for q in [[0.0, 0.0], [1.0, -2.0], [4.0, 4.0]] {
                prop_assert!((ma.g(&q).unwrap() - mb.g(&q).unwrap()).abs() < 1e-6);
            }
            let oa = dual_objective(&xs, &a.alphas, kernel);
            let ob = dual_objective(&shuffled, &b.alphas, kernel);
            prop_assert!((oa - ob).abs() < 1e-9);
        }
    }
}
