//! Conjugate-Gaussian mathematics: sufficient statistics, Normal-Inverse-Wishart
//! posterior updates, and log marginal / posterior predictive densities.
//!
//! Everything here is a pure function over immutable values. All probability
//! arithmetic is carried out in log space; determinants and positive-definiteness
//! checks go through a Cholesky factorization so the `|Psi|^(nu/2)` ratios stay
//! stable at large counts.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::error::Error;
use crate::Result;

const LN_PI: f64 = 1.144_729_885_849_400_2;

/// Summary of a set of `d`-dimensional points: size, mean vector and centered
/// scatter matrix. The triple is all any sampler ever needs; raw points never
/// travel past the module that observed them.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    count: usize,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
}

impl SuffStats {
    /// Canonical empty statistics in dimension `d` (the identity element of [`pool`]).
    pub fn empty(d: usize) -> Self {
        SuffStats {
            count: 0,
            mean: DVector::zeros(d),
            scatter: DMatrix::zeros(d, d),
        }
    }

    /// Statistics of a single point: count 1, mean at the point, zero scatter.
    pub fn single(x: &[f64]) -> Self {
        SuffStats {
            count: 1,
            mean: DVector::from_column_slice(x),
            scatter: DMatrix::zeros(x.len(), x.len()),
        }
    }

    /// Two-pass mean/scatter computation over a point list.
    ///
    /// `d` fixes the expected dimension; a point of any other length is
    /// reported by its index. An empty list yields [`SuffStats::empty`].
    pub fn from_points(d: usize, points: &[&[f64]]) -> Result<Self> {
        for (index, point) in points.iter().enumerate() {
            if point.len() != d {
                return Err(Error::DimensionMismatch {
                    index,
                    expected: d,
                    got: point.len(),
                });
            }
        }
        if points.is_empty() {
            return Ok(SuffStats::empty(d));
        }
        let n = points.len();
        let mut mean = DVector::zeros(d);
        for point in points {
            for (acc, x) in mean.iter_mut().zip(point.iter()) {
                *acc += x;
            }
        }
        mean /= n as f64;
        let mut scatter = DMatrix::zeros(d, d);
        let mut centered = DVector::zeros(d);
        for point in points {
            for ((c, x), m) in centered.iter_mut().zip(point.iter()).zip(mean.iter()) {
                *c = x - m;
            }
            scatter.ger(1.0, &centered, &centered, 1.0);
        }
        let mut stats = SuffStats {
            count: n,
            mean,
            scatter,
        };
        stats.canonicalize();
        Ok(stats)
    }

    /// Construct from raw components. The scatter is re-symmetrized; callers
    /// are trusted on positive semi-definiteness (checked by [`validate`]).
    ///
    /// [`validate`]: SuffStats::validate
    pub fn from_parts(count: usize, mean: DVector<f64>, scatter: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if scatter.nrows() != d || scatter.ncols() != d {
            return Err(Error::DimensionMismatch {
                index: 0,
                expected: d,
                got: scatter.nrows(),
            });
        }
        let mut stats = SuffStats {
            count,
            mean,
            scatter,
        };
        stats.resymmetrize();
        stats.canonicalize();
        Ok(stats)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn scatter(&self) -> &DMatrix<f64> {
        &self.scatter
    }

    /// Fold another summary into this one (the pairwise form of [`pool`]).
    pub fn merge(&mut self, other: &SuffStats) {
        debug_assert_eq!(self.dim(), other.dim());
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        // Stable pairwise form of the aggregation identities: the mean-shift
        // term (na*nb/n) (Ta-Tb)(Ta-Tb)^T equals
        // na Ta Ta^T + nb Tb Tb^T - n T T^T algebraically.
        let diff = &self.mean - &other.mean;
        self.scatter += &other.scatter;
        self.scatter.ger(na * nb / n, &diff, &diff, 1.0);
        self.mean = (&self.mean * na + &other.mean * nb) / n;
        self.count += other.count;
        self.resymmetrize();
        self.canonicalize();
    }

    /// Undo a [`merge`]: remove a previously pooled sub-summary.
    ///
    /// Exact inverse of the aggregation identities; the caller guarantees
    /// `other` really is contained in `self`.
    ///
    /// [`merge`]: SuffStats::merge
    pub fn unmerge(&mut self, other: &SuffStats) {
        debug_assert_eq!(self.dim(), other.dim());
        debug_assert!(self.count >= other.count);
        if other.count == 0 {
            return;
        }
        let n = self.count as f64;
        let nb = other.count as f64;
        let na = n - nb;
        if na == 0.0 {
            *self = SuffStats::empty(self.dim());
            return;
        }
        let mean_a = (&self.mean * n - &other.mean * nb) / na;
        let diff = &mean_a - &other.mean;
        self.scatter -= &other.scatter;
        self.scatter.ger(-(na * nb / n), &diff, &diff, 1.0);
        self.mean = mean_a;
        self.count -= other.count;
        self.resymmetrize();
        self.canonicalize();
    }

    /// Rank-1 update: absorb one observation.
    pub fn add_obs(&mut self, x: &[f64]) {
        debug_assert_eq!(self.dim(), x.len());
        let n1 = (self.count + 1) as f64;
        let delta = DVector::from_column_slice(x) - &self.mean;
        self.scatter
            .ger((self.count as f64) / n1, &delta, &delta, 1.0);
        self.mean += &delta / n1;
        self.count += 1;
        self.resymmetrize();
    }

    /// Rank-1 downdate: forget one observation previously absorbed.
    pub fn remove_obs(&mut self, x: &[f64]) {
        debug_assert_eq!(self.dim(), x.len());
        debug_assert!(self.count > 0);
        if self.count == 1 {
            *self = SuffStats::empty(self.dim());
            return;
        }
        let n = self.count as f64;
        let n1 = n - 1.0;
        let x = DVector::from_column_slice(x);
        let mean1 = (&self.mean * n - &x) / n1;
        let delta = x - &mean1;
        self.scatter.ger(-(n1 / n), &delta, &delta, 1.0);
        self.mean = mean1;
        self.count -= 1;
        self.resymmetrize();
        self.canonicalize();
    }

    /// Check the representation invariants: symmetry within 1e-9, eigenvalues
    /// above -1e-8, canonical zero forms at counts 0 and 1.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.scatter.nrows() != d || self.scatter.ncols() != d {
            return Err(Error::InvalidParameter("scatter shape".into()));
        }
        let mut asym: f64 = 0.0;
        for i in 0..d {
            for j in 0..i {
                asym = asym.max((self.scatter[(i, j)] - self.scatter[(j, i)]).abs());
            }
        }
        if asym > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "scatter asymmetry {asym:.3e} exceeds 1e-9"
            )));
        }
        if self.count <= 1 {
            if self.count == 0 && self.mean.iter().any(|&m| m != 0.0) {
                return Err(Error::InvalidParameter("empty stats with nonzero mean".into()));
            }
            if self.scatter.iter().any(|&s| s != 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "count {} requires zero scatter",
                    self.count
                )));
            }
        }
        let min_eig = self
            .scatter
            .symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b));
        if d > 0 && min_eig < -1e-8 {
            return Err(Error::InvalidParameter(format!(
                "scatter eigenvalue {min_eig:.3e} below -1e-8"
            )));
        }
        Ok(())
    }

    fn resymmetrize(&mut self) {
        let d = self.scatter.nrows();
        for i in 0..d {
            for j in 0..i {
                let s = 0.5 * (self.scatter[(i, j)] + self.scatter[(j, i)]);
                self.scatter[(i, j)] = s;
                self.scatter[(j, i)] = s;
            }
        }
    }

    // Counts 0 and 1 have exact canonical forms; snap tiny fp residue to them.
    fn canonicalize(&mut self) {
        if self.count == 0 {
            self.mean.fill(0.0);
            self.scatter.fill(0.0);
        } else if self.count == 1 {
            self.scatter.fill(0.0);
        }
    }
}

/// Pool summaries of disjoint point sets into the summary of their union.
///
/// Empty parts are identity elements; the result is re-symmetrized.
pub fn pool(parts: &[SuffStats]) -> Result<SuffStats> {
    let d = match parts.first() {
        None => return Ok(SuffStats::empty(0)),
        Some(first) => first.dim(),
    };
    for (index, part) in parts.iter().enumerate() {
        if part.dim() != d {
            return Err(Error::DimensionMismatch {
                index,
                expected: d,
                got: part.dim(),
            });
        }
    }
    let mut acc = SuffStats::empty(d);
    for part in parts {
        acc.merge(part);
    }
    Ok(acc)
}

/// Hyper-parameters of the Normal-Inverse-Wishart prior (and of any posterior
/// derived from it): location `mu`, precision scale `kappa > 0`, scale matrix
/// `psi` (symmetric positive-definite) and degrees of freedom `nu > d - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NiwParams {
    pub mu: DVector<f64>,
    pub kappa: f64,
    pub psi: DMatrix<f64>,
    pub nu: f64,
}

impl NiwParams {
    pub fn new(mu: DVector<f64>, kappa: f64, psi: DMatrix<f64>, nu: f64) -> Result<Self> {
        let d = mu.len();
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        if psi.nrows() != d || psi.ncols() != d {
            return Err(Error::InvalidParameter(format!(
                "psi must be {d}x{d}, got {}x{}",
                psi.nrows(),
                psi.ncols()
            )));
        }
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!("kappa must be > 0, got {kappa}")));
        }
        if !(nu > d as f64 - 1.0) || !nu.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "nu must exceed d - 1 = {}, got {nu}",
                d as f64 - 1.0
            )));
        }
        let mut asym: f64 = 0.0;
        for i in 0..d {
            for j in 0..i {
                asym = asym.max((psi[(i, j)] - psi[(j, i)]).abs());
            }
        }
        if asym > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "psi asymmetry {asym:.3e} exceeds 1e-9"
            )));
        }
        let mut psi = psi;
        for i in 0..d {
            for j in 0..i {
                let s = 0.5 * (psi[(i, j)] + psi[(j, i)]);
                psi[(i, j)] = s;
                psi[(j, i)] = s;
            }
        }
        cholesky_log_det(&psi)?;
        Ok(NiwParams { mu, kappa, psi, nu })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Conjugate posterior update from pooled statistics.
///
/// `kappa_n = kappa_0 + n`, `nu_n = nu_0 + n`,
/// `mu_n = (kappa_0 mu_0 + n T) / kappa_n`,
/// `psi_n = psi_0 + S + (kappa_0 n / kappa_n)(mu_0 - T)(mu_0 - T)^T`.
/// Empty statistics return the prior unchanged.
pub fn posterior(prior: &NiwParams, stats: &SuffStats) -> NiwParams {
    debug_assert_eq!(prior.dim(), stats.dim());
    if stats.is_empty() {
        return prior.clone();
    }
    let n = stats.count() as f64;
    let kappa_n = prior.kappa + n;
    let nu_n = prior.nu + n;
    let mu_n = (&prior.mu * prior.kappa + stats.mean() * n) / kappa_n;
    let diff = &prior.mu - stats.mean();
    let mut psi_n = &prior.psi + stats.scatter();
    psi_n.ger(prior.kappa * n / kappa_n, &diff, &diff, 1.0);
    for i in 0..psi_n.nrows() {
        for j in 0..i {
            let s = 0.5 * (psi_n[(i, j)] + psi_n[(j, i)]);
            psi_n[(i, j)] = s;
            psi_n[(j, i)] = s;
        }
    }
    NiwParams {
        mu: mu_n,
        kappa: kappa_n,
        psi: psi_n,
        nu: nu_n,
    }
}

/// Log of the prior predictive (marginal likelihood) of the points summarized
/// by `stats` under the NIW prior:
///
/// `pi^(-nd/2) * (kappa_0/kappa_n)^(d/2) * Gamma_d(nu_n/2)/Gamma_d(nu_0/2)
///  * |Psi_0|^(nu_0/2) / |Psi_n|^(nu_n/2)`.
///
/// Empty statistics give 0.0 (the log of 1).
pub fn log_marginal(prior: &NiwParams, stats: &SuffStats) -> Result<f64> {
    debug_assert_eq!(prior.dim(), stats.dim());
    if stats.is_empty() {
        return Ok(0.0);
    }
    let d = prior.dim() as f64;
    let n = stats.count() as f64;
    let post = posterior(prior, stats);
    let ld0 = cholesky_log_det(&prior.psi)?;
    let ldn = cholesky_log_det(&post.psi)?;
    Ok(-n * d / 2.0 * LN_PI + d / 2.0 * (prior.kappa.ln() - post.kappa.ln())
        + multivariate_log_gamma(prior.dim(), post.nu / 2.0)?
        - multivariate_log_gamma(prior.dim(), prior.nu / 2.0)?
        + prior.nu / 2.0 * ld0
        - post.nu / 2.0 * ldn)
}

/// Log posterior predictive of `candidate` given a cluster already summarized
/// by `cluster`: the marginal under the cluster's posterior. One formula
/// serves the worker-level, master-level and column-level draws.
pub fn log_predictive(
    prior: &NiwParams,
    cluster: &SuffStats,
    candidate: &SuffStats,
) -> Result<f64> {
    log_marginal(&posterior(prior, cluster), candidate)
}

/// Log of the multivariate gamma function
/// `Gamma_d(x) = pi^(d(d-1)/4) * prod_{i=1..d} Gamma(x + (1 - i)/2)`,
/// defined for `x > (d - 1)/2`.
pub fn multivariate_log_gamma(d: usize, x: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::Domain("multivariate gamma needs d >= 1".into()));
    }
    let bound = (d as f64 - 1.0) / 2.0;
    if !(x > bound) {
        return Err(Error::Domain(format!(
            "multivariate gamma domain requires x > {bound}, got {x}"
        )));
    }
    let mut acc = (d * (d - 1)) as f64 / 4.0 * LN_PI;
    for i in 1..=d {
        acc += ln_gamma(x + (1.0 - i as f64) / 2.0);
    }
    Ok(acc)
}

/// Log-determinant via an in-place lower Cholesky factorization.
///
/// Fails with the offending pivot when the matrix is not numerically
/// positive definite.
pub fn cholesky_log_det(m: &DMatrix<f64>) -> Result<f64> {
    let d = m.nrows();
    debug_assert_eq!(d, m.ncols());
    let mut l = m.clone();
    let mut log_det = 0.0;
    for j in 0..d {
        let mut pivot = l[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if pivot <= 0.0 || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot });
        }
        let ljj = pivot.sqrt();
        log_det += ljj.ln();
        l[(j, j)] = ljj;
        for i in (j + 1)..d {
            let mut v = l[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    Ok(2.0 * log_det)
}
