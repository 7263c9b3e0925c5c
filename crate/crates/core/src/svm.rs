//! One-class SVM (RBF kernel) for per-resource novelty detection.
//!
//! Trains on failure-free feature vectors only. The dual problem
//!
//!   min ½ αᵀQα   s.t.  0 ≤ α_i ≤ 1/(ν·ℓ),  Σα_i = 1,   Q_ij = k(x_i, x_j)
//!
//! is solved by sequential minimal optimization on the maximal violating
//! pair. Identical training vectors are grouped first: a duplicate group
//! shares one kernel column, so optimizing the group weight inside the
//! summed box [0, count/(ν·ℓ)] is exactly equivalent to the point-wise
//! problem and makes training on long binary-flag streams cheap (cost
//! scales with the number of distinct vectors).
//!
//! Decision: f(z) = Σ α_i k(sv_i, z) − ρ; f ≥ 0 is an inlier.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Stopping threshold on the violating-pair gap; the reported KKT
/// residual is bounded by it.
const GAP_TOL: f64 = 1e-8;
/// Snap distance for clipping weights exactly onto their bounds.
const SNAP: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct OneClassSvm<F: Real> {
    nu: F,
    gamma: F,
    dim: usize,
    /// Distinct training vectors with positive weight.
    support: Vec<Vec<F>>,
    /// Group weights; non-negative, summing to 1.
    alpha: Vec<F>,
    /// How many training points each support group collapsed.
    counts: Vec<u32>,
    rho: F,
}

fn rbf<F: Real>(gamma: F, a: &[F], b: &[F]) -> F {
    let mut d2 = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        d2 += d * d;
    }
    (-gamma * d2).exp()
}

/// Groups exactly-equal vectors; returns (unique vectors, counts) with the
/// uniques in lexicographic order.
fn group_exact<F: Real>(data: &[Vec<F>]) -> (Vec<Vec<F>>, Vec<u32>) {
    let mut order: Vec<usize> = (0..data.len()).collect();
    let lex = |a: &Vec<F>, b: &Vec<F>| -> std::cmp::Ordering {
        for (x, y) in a.iter().zip(b) {
            match x.partial_cmp(y).expect("finite features") {
                std::cmp::Ordering::Equal => continue,
                o => return o,
            }
        }
        std::cmp::Ordering::Equal
    };
    order.sort_by(|&i, &j| lex(&data[i], &data[j]));
    let mut uniques: Vec<Vec<F>> = Vec::new();
    let mut counts: Vec<u32> = Vec::new();
    for &i in &order {
        if let Some(last) = uniques.last() {
            if lex(last, &data[i]) == std::cmp::Ordering::Equal {
                *counts.last_mut().expect("parallel") += 1;
                continue;
            }
        }
        uniques.push(data[i].clone());
        counts.push(1);
    }
    (uniques, counts)
}

impl<F: Real> OneClassSvm<F> {
    /// Trains on failure-free vectors. Requires at least 10 vectors of
    /// equal dimension, ν ∈ (0, 1], γ > 0.
    pub fn train(data: &[Vec<F>], nu: F, gamma: F) -> Result<Self> {
        if data.len() < 10 {
            return Err(Error::Train(format!(
                "need at least 10 training vectors, got {}",
                data.len()
            )));
        }
        if !(nu > F::zero() && nu <= F::one()) {
            return Err(Error::Train("nu must be in (0, 1]".into()));
        }
        if !gamma.is_finite() || gamma <= F::zero() {
            return Err(Error::Train("gamma must be positive and finite".into()));
        }
        let dim = data[0].len();
        if dim == 0 {
            return Err(Error::Train("feature vectors must be non-empty".into()));
        }
        for v in data {
            if v.len() != dim {
                return Err(Error::Train(format!(
                    "inconsistent feature dimension: {} vs {}",
                    v.len(),
                    dim
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Train("non-finite feature value".into()));
            }
        }

        let ell = data.len();
        let c_point = F::one() / (nu * F::of_usize(ell));
        let (uniques, counts) = group_exact(data);
        let m = uniques.len();
        let caps: Vec<F> = counts.iter().map(|&c| F::of_usize(c as usize) * c_point).collect();

        // Kernel cache for modest group counts; columns on demand above.
        let cache: Option<Vec<F>> = if m <= 2048 {
            let mut k = vec![F::zero(); m * m];
            for i in 0..m {
                for j in 0..=i {
                    let v = rbf(gamma, &uniques[i], &uniques[j]);
                    k[i * m + j] = v;
                    k[j * m + i] = v;
                }
            }
            Some(k)
        } else {
            None
        };
        let column = |j: usize, buf: &mut Vec<F>| {
            if let Some(k) = &cache {
                buf.clear();
                buf.extend_from_slice(&k[j * m..(j + 1) * m]);
            } else {
                buf.clear();
                buf.extend(uniques.iter().map(|u| rbf(gamma, u, &uniques[j])));
            }
        };

        // Feasible start: fill group weights left to right.
        let mut alpha = vec![F::zero(); m];
        let mut rem = F::one();
        for g in 0..m {
            let a = if caps[g] < rem { caps[g] } else { rem };
            alpha[g] = a;
            rem -= a;
            if rem <= F::zero() {
                break;
            }
        }

        // Gradient of the objective: g = Qα.
        let mut grad = vec![F::zero(); m];
        let mut col_i = Vec::with_capacity(m);
        let mut col_j = Vec::with_capacity(m);
        for (j, &a) in alpha.iter().enumerate() {
            if a > F::zero() {
                column(j, &mut col_j);
                for (g, &k) in grad.iter_mut().zip(&col_j) {
                    *g += a * k;
                }
            }
        }

        let snap = F::of(SNAP);
        let gap_tol = F::of(GAP_TOL);
        let max_iter = 200_000 + 100 * m;
        let mut converged = false;
        for _ in 0..max_iter {
            // Maximal violating pair: steepest feasible exchange.
            let mut up: Option<usize> = None; // can grow, smallest gradient
            let mut down: Option<usize> = None; // can shrink, largest gradient
            for t in 0..m {
                if alpha[t] < caps[t] && up.is_none_or(|u| grad[t] < grad[u]) {
                    up = Some(t);
                }
                if alpha[t] > F::zero() && down.is_none_or(|d| grad[t] > grad[d]) {
                    down = Some(t);
                }
            }
            let (i, j) = match (up, down) {
                (Some(i), Some(j)) => (i, j),
                _ => break,
            };
            if grad[j] - grad[i] <= gap_tol {
                converged = true;
                break;
            }

            column(i, &mut col_i);
            column(j, &mut col_j);
            let eta = col_i[i] + col_j[j] - F::of(2.0) * col_i[j];
            // Distinct RBF patterns keep eta = 2(1 - k_ij) > 0.
            let eta = if eta > F::of(1e-15) { eta } else { F::of(1e-15) };
            let mut step = (grad[j] - grad[i]) / eta;
            let room_i = caps[i] - alpha[i];
            if step > room_i {
                step = room_i;
            }
            if step > alpha[j] {
                step = alpha[j];
            }
            if step <= F::zero() {
                break;
            }
            alpha[i] += step;
            alpha[j] -= step;
            // Snap onto the box so bound membership stays exact.
            if alpha[i] > caps[i] - snap {
                alpha[i] = caps[i];
            }
            if alpha[j] < snap {
                alpha[j] = F::zero();
            }
            for t in 0..m {
                grad[t] += step * (col_i[t] - col_j[t]);
            }
        }
        if !converged {
            // One final check: the loop may also exit via break when no
            // feasible exchange remains, which is optimal too.
            let mut worst = F::zero();
            let (lo, hi) = rho_bounds(&alpha, &caps, &grad);
            let rho = pick_rho(&alpha, &caps, &grad, lo, hi);
            for t in 0..m {
                let r = point_residual(alpha[t], caps[t], grad[t], rho);
                if r > worst {
                    worst = r;
                }
            }
            if worst > F::of(1e-6) {
                return Err(Error::Train(format!(
                    "optimizer failed to converge (residual {worst})"
                )));
            }
        }

        let (lo, hi) = rho_bounds(&alpha, &caps, &grad);
        let rho = pick_rho(&alpha, &caps, &grad, lo, hi);

        let mut support = Vec::new();
        let mut sv_alpha = Vec::new();
        let mut sv_counts = Vec::new();
        for g in 0..m {
            if alpha[g] > F::zero() {
                support.push(uniques[g].clone());
                sv_alpha.push(alpha[g]);
                sv_counts.push(counts[g]);
            }
        }

        Ok(OneClassSvm {
            nu,
            gamma,
            dim,
            support,
            alpha: sv_alpha,
            counts: sv_counts,
            rho,
        })
    }

    /// Decision value; non-negative means inlier.
    pub fn decision(&self, z: &[F]) -> Result<F> {
        if z.len() != self.dim {
            return Err(Error::Data(format!(
                "feature dimension {} does not match model dimension {}",
                z.len(),
                self.dim
            )));
        }
        let mut f = -self.rho;
        for (sv, &a) in self.support.iter().zip(&self.alpha) {
            f += a * rbf(self.gamma, sv, z);
        }
        Ok(f)
    }

    /// Outlier test with a small guard band: a point whose decision value
    /// is within numerical noise of zero counts as an inlier. Training
    /// sets with few distinct patterns routinely place their most common
    /// pattern exactly on the boundary (it becomes a free support vector,
    /// so its decision value is zero by construction), and without the
    /// band its classification would come down to rounding luck.
    pub fn is_outlier(&self, z: &[F]) -> Result<bool> {
        Ok(self.decision(z)? < -Self::boundary_band())
    }

    /// Width of the inlier guard band. Decision values are bounded by 1
    /// in magnitude (alphas sum to one, RBF is at most one), so an
    /// absolute tolerance is meaningful.
    fn boundary_band() -> F {
        F::of(1e-9)
    }

    pub fn rho(&self) -> F {
        self.rho
    }

    pub fn nu(&self) -> F {
        self.nu
    }

    pub fn gamma(&self) -> F {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// (distinct support vectors, training points they represent)
    pub fn support_size(&self) -> (usize, usize) {
        (
            self.support.len(),
            self.counts.iter().map(|&c| c as usize).sum(),
        )
    }

    /// Support groups strictly inside the box (free support vectors);
    /// their decision value is ~0 by the KKT conditions.
    pub fn free_support_vectors(&self, ell: usize) -> Vec<&[F]> {
        let c_point = F::one() / (self.nu * F::of_usize(ell));
        let margin = F::of(1e-9);
        self.support
            .iter()
            .zip(self.alpha.iter().zip(&self.counts))
            .filter(|(_, (&a, &c))| {
                let cap = F::of_usize(c as usize) * c_point;
                a > margin && a < cap - margin
            })
            .map(|(sv, _)| sv.as_slice())
            .collect()
    }

    /// Largest KKT violation of the trained model measured against its
    /// training set (grouped the same way as in training).
    pub fn kkt_residual_max(&self, data: &[Vec<F>]) -> Result<F> {
        let ell = data.len();
        let c_point = F::one() / (self.nu * F::of_usize(ell));
        let (uniques, counts) = group_exact(data);
        let mut worst = F::zero();
        for (u, &c) in uniques.iter().zip(&counts) {
            let cap = F::of_usize(c as usize) * c_point;
            let g = self.decision(u)? + self.rho;
            let a = self
                .support
                .iter()
                .position(|sv| sv == u)
                .map_or(F::zero(), |i| self.alpha[i]);
            let r = point_residual(a, cap, g, self.rho);
            if r > worst {
                worst = r;
            }
        }
        Ok(worst)
    }
}

fn point_residual<F: Real>(alpha: F, cap: F, grad: F, rho: F) -> F {
    let bound_tol = F::of(1e-9) * cap;
    if alpha <= bound_tol {
        // may not sit below rho
        (rho - grad).max(F::zero())
    } else if alpha >= cap - bound_tol {
        // may not sit above rho
        (grad - rho).max(F::zero())
    } else {
        (grad - rho).abs()
    }
}

fn rho_bounds<F: Real>(alpha: &[F], caps: &[F], grad: &[F]) -> (Option<F>, Option<F>) {
    let mut lo: Option<F> = None; // max gradient over groups at the cap
    let mut hi: Option<F> = None; // min gradient over groups at zero
    for t in 0..alpha.len() {
        if alpha[t] >= caps[t] {
            if lo.is_none_or(|v| grad[t] > v) {
                lo = Some(grad[t]);
            }
        } else if alpha[t] <= F::zero()
            && hi.is_none_or(|v| grad[t] < v) {
                hi = Some(grad[t]);
            }
    }
    (lo, hi)
}

fn pick_rho<F: Real>(alpha: &[F], caps: &[F], grad: &[F], lo: Option<F>, hi: Option<F>) -> F {
    let mut sum = F::zero();
    let mut n = 0usize;
    for t in 0..alpha.len() {
        if alpha[t] > F::zero() && alpha[t] < caps[t] {
            sum += grad[t];
            n += 1;
        }
    }
    if n > 0 {
        return sum / F::of_usize(n);
    }
    match (lo, hi) {
        (Some(a), Some(b)) => (a + b) * F::half(),
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => F::zero(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashmix::{mix3, unit_noise};

    fn blob(n: usize, dim: usize, seed: u64, spread: f64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                (0..dim)
                    .map(|k| spread * unit_noise(mix3(seed, i as u64, k as u64)))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn nu_bounds_training_outlier_fraction() {
        let data = blob(100, 3, 1, 1.0);
        let model = OneClassSvm::train(&data, 0.1, 0.5).unwrap();
        let outliers = data
            .iter()
            .filter(|v| model.is_outlier(v).unwrap())
            .count();
        assert!(outliers <= 12, "{outliers} outliers for nu=0.1"); // 10 + 2
    }

    #[test]
    fn far_query_is_outlier() {
        let data = blob(40, 4, 2, 1.0);
        let model = OneClassSvm::train(&data, 0.1, 0.5).unwrap();
        let far = vec![50.0; 4]; // distance >> 1/sqrt(gamma)
        let f = model.decision(&far).unwrap();
        assert!(f < 0.0);
        assert!((f + model.rho()).abs() < 1e-9, "kernel sum should vanish");
    }

    #[test]
    fn free_support_vectors_sit_on_the_boundary() {
        let data = blob(60, 3, 3, 1.0);
        let model = OneClassSvm::train(&data, 0.3, 0.7).unwrap();
        let free = model.free_support_vectors(data.len());
        assert!(!free.is_empty(), "expected free support vectors");
        for sv in free {
            let f = model.decision(sv).unwrap();
            assert!(f.abs() < 1e-6, "free SV decision {f}");
        }
    }

    #[test]
    fn kkt_residual_is_small() {
        for seed in 0..5u64 {
            let data = blob(50, 4, seed, 1.0);
            let model = OneClassSvm::train(&data, 0.2, 0.6).unwrap();
            let r = model.kkt_residual_max(&data).unwrap();
            assert!(r < 1e-6, "seed {seed}: residual {r}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let data = blob(30, 5, 9, 1.0);
        let a = OneClassSvm::train(&data, 0.15, 0.4).unwrap();
        let b = OneClassSvm::train(&data, 0.15, 0.4).unwrap();
        assert_eq!(a.rho(), b.rho());
        assert_eq!(a.alpha, b.alpha);
        assert_eq!(a.support, b.support);
    }

    #[test]
    fn mostly_zero_flag_vectors_make_zero_an_inlier() {
        // 16 all-zero vectors and 4 sparse ones: the all-zero pattern is
        // the dominant class mass and must be inside the boundary.
        let mut data = vec![vec![0.0f64; 5]; 16];
        data.push(vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        data.push(vec![0.0, 1.0, 0.0, 0.0, 1.0]);
        data.push(vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        data.push(vec![1.0, 1.0, 0.0, 0.0, 0.0]);
        let model = OneClassSvm::train(&data, 0.2, 0.5).unwrap();
        // The dominant pattern may sit exactly on the boundary (free
        // support vector), so allow rounding slack around zero.
        assert!(model.decision(&[0.0; 5]).unwrap() >= -1e-9);
        assert!(model.kkt_residual_max(&data).unwrap() < 1e-6);
    }

    #[test]
    fn duplicate_grouping_matches_plain_training() {
        // Same multiset passed with duplicates must give the same decision
        // function as the grouped solve it reduces to.
        let base = blob(12, 3, 4, 1.0);
        let mut dup = base.clone();
        dup.extend(base.iter().cloned());
        let model = OneClassSvm::train(&dup, 0.25, 0.8).unwrap();
        assert!(model.kkt_residual_max(&dup).unwrap() < 1e-6);
        let probe = blob(20, 3, 5, 1.5);
        for z in &probe {
            let f = model.decision(z).unwrap();
            assert!(f.is_finite());
        }
        let (groups, points) = model.support_size();
        assert!(points >= groups);
    }

    #[test]
    fn alpha_sums_to_one_within_box() {
        let data = blob(80, 2, 6, 1.0);
        let nu = 0.2;
        let model = OneClassSvm::train(&data, nu, 0.5).unwrap();
        let total: f64 = model.alpha.iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "sum {total}");
        let c = 1.0 / (nu * data.len() as f64);
        for (&a, &cnt) in model.alpha.iter().zip(&model.counts) {
            assert!(a > 0.0 && a <= cnt as f64 * c + 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let data = blob(9, 3, 7, 1.0);
        assert!(OneClassSvm::train(&data, 0.2, 0.5).is_err()); // too few
        let data = blob(20, 3, 7, 1.0);
        assert!(OneClassSvm::train(&data, 0.0, 0.5).is_err());
        assert!(OneClassSvm::train(&data, 1.5, 0.5).is_err());
        assert!(OneClassSvm::train(&data, 0.2, 0.0).is_err());
        let mut ragged = data.clone();
        ragged[3] = vec![1.0, 2.0];
        assert!(OneClassSvm::train(&ragged, 0.2, 0.5).is_err());
        let model = OneClassSvm::train(&data, 0.2, 0.5).unwrap();
        assert!(model.decision(&[0.0, 0.0]).is_err()); // dim mismatch
    }

    #[test]
    fn identical_training_set_is_fully_inlier() {
        let data = vec![vec![1.0f64, 2.0, 3.0]; 25];
        let model = OneClassSvm::train(&data, 0.5, 0.3).unwrap();
        assert!(model.decision(&data[0]).unwrap() >= 0.0);
        let far = vec![100.0, 100.0, 100.0];
        assert!(model.is_outlier(&far).unwrap());
    }

    #[test]
    fn f32_training_works() {
        let data: Vec<Vec<f32>> = blob(40, 3, 8, 1.0)
            .into_iter()
            .map(|v| v.into_iter().map(|x| x as f32).collect())
            .collect();
        let model = OneClassSvm::train(&data, 0.2f32, 0.5).unwrap();
        let outliers = data
            .iter()
            .filter(|v| model.is_outlier(v).unwrap())
            .count();
        assert!(outliers <= 10); // nu * 40 + 2
    }
}
