//! Gram matrices weighted by the compensator, restricted-eigenvalue
//! constants, and the probability bound for the empirical RE condition.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{QuadratureRule, TruthEvaluator};
use crate::model::{Cohort, DictionaryPair, TrueIntensity};

/// Enumeration guard for [`re_constant_bruteforce`].
pub const MAX_BRUTE_FORCE_DIM: usize = 20;
pub const MAX_BRUTE_FORCE_SPARSITY: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GramProvenance {
    TrueCompensator,
    PlugInCounts,
    Expected,
}

/// Dense symmetric matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramMatrix {
    pub dim: usize,
    pub entries: Vec<f64>,
    pub provenance: GramProvenance,
}

impl GramMatrix {
    pub fn new(dim: usize, entries: Vec<f64>, provenance: GramProvenance) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                what: "gram entries",
                expected: dim * dim,
                got: entries.len(),
            });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gram entry".into()));
        }
        let g = Self {
            dim,
            entries,
            provenance,
        };
        let scale = g.entries.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        for i in 0..dim {
            for j in 0..i {
                if (g.get(i, j) - g.get(j, i)).abs() > 1e-12 * scale {
                    return Err(Error::InvalidParameter(format!("gram matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(g)
    }

    pub fn from_rows(rows: &[Vec<f64>], provenance: GramProvenance) -> Result<Self> {
        let dim = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                what: "gram row",
                expected: dim,
                got: r.len(),
            });
        }
        Self::new(dim, rows.concat(), provenance)
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let dim = d.len();
        let mut entries = vec![0.0; dim * dim];
        for (i, &v) in d.iter().enumerate() {
            entries[i * dim + i] = v;
        }
        Self {
            dim,
            entries,
            provenance: GramProvenance::Expected,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim.max(1)).map(|r| r.to_vec()).collect()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.dim == 0 {
            return Vec::new();
        }
        let mut ev: Vec<f64> = SymmetricEigen::new(self.to_matrix()).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// Principal sub-matrix on `idx`.
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        let k = idx.len();
        let mut entries = Vec::with_capacity(k * k);
        for &i in idx {
            for &j in idx {
                entries.push(self.get(i, j));
            }
        }
        Self {
            dim: k,
            entries,
            provenance: self.provenance,
        }
    }

    /// Same matrix with coordinates reordered by `perm` (new index `a` is old `perm[a]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        self.submatrix(perm)
    }

    pub fn quadratic_form(&self, b: &[f64]) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for i in 0..d {
            if b[i] == 0.0 {
                continue;
            }
            let row = &self.entries[i * d..(i + 1) * d];
            acc += b[i] * row.iter().zip(b).map(|(g, v)| g * v).sum::<f64>();
        }
        acc
    }
}

/// `(1/n) Xᵀ C X` with `C = diag(c_i)`; `x` is row-major `n × m`.
pub fn weighted_cross_product(x: &[f64], c: &[f64], m: usize) -> Vec<f64> {
    let n = c.len();
    let mut g = vec![0.0; m * m];
    for i in 0..n {
        let row = &x[i * m..(i + 1) * m];
        for a in 0..m {
            let w = c[i] * row[a];
            for b in a..m {
                g[a * m + b] += w * row[b];
            }
        }
    }
    for a in 0..m {
        for b in a..m {
            let v = g[a * m + b] / n as f64;
            g[a * m + b] = v;
            g[b * m + a] = v;
        }
    }
    g
}

/// `G_n = (1/n) Xᵀ C X` with `C = diag(Λ_i(τ))`, or `diag(N_i(τ))` without a truth.
pub fn gram(
    cohort: &Cohort,
    dicts: &DictionaryPair,
    truth: Option<&TrueIntensity>,
    quad: &QuadratureRule,
) -> Result<GramMatrix> {
    let m = dicts.covariate.len();
    if m == 0 {
        return Err(Error::InvalidParameter("the covariate dictionary is empty".into()));
    }
    let x = dicts.covariate.design_matrix(cohort);
    let (c, provenance) = match truth {
        Some(t) => (
            TruthEvaluator::new(cohort, t, dicts, quad)?.compensators(),
            GramProvenance::TrueCompensator,
        ),
        None => (
            cohort.observations().iter().map(|o| o.jump_count() as f64).collect(),
            GramProvenance::PlugInCounts,
        ),
    };
    GramMatrix::new(m, weighted_cross_product(&x, &c, m), provenance)
}

/// `G̃_n = (1/n) ∫ X̃(t)ᵀ C̃(t) X̃(t) dt` over `[β; γ]`.
pub fn extended_gram(
    cohort: &Cohort,
    dicts: &DictionaryPair,
    truth: &TrueIntensity,
    quad: &QuadratureRule,
) -> Result<GramMatrix> {
    let ev = TruthEvaluator::new(cohort, truth, dicts, quad)?;
    let m = dicts.covariate.len();
    let nt = dicts.time.len();
    let (comp, theta_int, block) = ev.time_moments();
    let x = ev.design().x();
    Ok(assemble_extended(x, &comp, &theta_int, &block, m, nt))
}

/// Block assembly shared by the empirical and expected extended Gram matrices.
pub(crate) fn assemble_extended(
    x: &[f64],
    comp: &[f64],
    theta_int: &[f64],
    block: &[f64],
    m: usize,
    nt: usize,
) -> GramMatrix {
    let n = comp.len();
    let d = m + nt;
    let bb = weighted_cross_product(x, comp, m);
    let mut entries = vec![0.0; d * d];
    for a in 0..m {
        for b in 0..m {
            entries[a * d + b] = bb[a * m + b];
        }
    }
    for j in 0..m {
        for k in 0..nt {
            let mut acc = 0.0;
            for i in 0..n {
                acc += x[i * m + j] * theta_int[i * nt + k];
            }
            let v = acc / n as f64;
            entries[j * d + m + k] = v;
            entries[(m + k) * d + j] = v;
        }
    }
    for k in 0..nt {
        for l in 0..nt {
            entries[(m + k) * d + m + l] = block[k * nt + l];
        }
    }
    // exact symmetry for the γ-γ block
    for k in 0..nt {
        for l in 0..k {
            let v = 0.5 * (entries[(m + k) * d + m + l] + entries[(m + l) * d + m + k]);
            entries[(m + k) * d + m + l] = v;
            entries[(m + l) * d + m + k] = v;
        }
    }
    GramMatrix {
        dim: d,
        entries,
        provenance: GramProvenance::TrueCompensator,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum REMethod {
    BruteForce,
    EigenLowerBound,
    RandomSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RECertificate {
    pub support: Vec<usize>,
    pub direction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct REResult {
    pub kappa: f64,
    pub s: usize,
    pub a0: f64,
    pub method: REMethod,
    pub certificate: Option<RECertificate>,
}

/// Search effort per support in [`re_constant_bruteforce_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BruteForceOptions {
    pub starts: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for BruteForceOptions {
    fn default() -> Self {
        Self {
            starts: 64,
            iterations: 200,
            seed: 0x5eed,
        }
    }
}

/// `√max(λ_min(G), 0)`, a lower bound on every RE constant of `G`.
pub fn re_eigen_lower_bound(g: &GramMatrix) -> f64 {
    g.min_eigenvalue().max(0.0).sqrt()
}

/// RE constant `κ_0(s, a_0)` by support enumeration with the default effort.
pub fn re_constant_bruteforce(g: &GramMatrix, s: usize, a0: f64) -> Result<REResult> {
    re_constant_bruteforce_with(g, s, a0, &BruteForceOptions::default())
}

fn combinations(d: usize, k: usize, out: &mut Vec<Vec<usize>>) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] < d - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
            if i == 0 {
                return;
            }
        }
    }
}

/// Euclidean projection onto `{v : ‖v‖_1 ≤ r}`.
fn project_l1(v: &mut [f64], r: f64) {
    let norm: f64 = v.iter().map(|x| x.abs()).sum();
    if norm <= r {
        return;
    }
    if r <= 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in mags.iter().enumerate() {
        cum += u;
        let t = (cum - r) / (k + 1) as f64;
        if u > t {
            theta = t;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = x.signum() * (x.abs() - theta).max(0.0);
    }
}

/// Value of the RE quotient and direction for one support.
fn minimize_on_support(
    g: &GramMatrix,
    support: &[usize],
    a0: f64,
    opts: &BruteForceOptions,
    rng: &mut ChaCha8Rng,
    lmax: f64,
) -> (f64, Vec<f64>) {
    let d = g.dim;
    let k = support.len();
    let in_j: Vec<bool> = (0..d).map(|i| support.contains(&i)).collect();
    let off: Vec<usize> = (0..d).filter(|&i| !in_j[i]).collect();
    let block = g.submatrix(support);
    let eig = SymmetricEigen::new(block.to_matrix());
    let (mut imin, mut emin) = (0, f64::INFINITY);
    for (i, &e) in eig.eigenvalues.iter().enumerate() {
        if e < emin {
            emin = e;
            imin = i;
        }
    }
    let u_eig: Vec<f64> = eig.eigenvectors.column(imin).iter().copied().collect();
    let embed = |u: &[f64], v: &[f64]| {
        let mut b = vec![0.0; d];
        for (a, &j) in support.iter().enumerate() {
            b[j] = u[a];
        }
        for (a, &j) in off.iter().enumerate() {
            b[j] = v[a];
        }
        b
    };
    let quotient = |b: &[f64]| {
        let nj: f64 = support.iter().map(|&j| b[j] * b[j]).sum();
        g.quadratic_form(b) / nj
    };
    let mut best_b = embed(&u_eig, &vec![0.0; off.len()]);
    let mut best = quotient(&best_b).max(0.0);
    if off.is_empty() || opts.iterations == 0 {
        return (best.sqrt(), best_b);
    }
    let step = 1.0 / lmax.max(1e-300);
    for start in 0..opts.starts.max(1) {
        let mut u: Vec<f64> = if start == 0 {
            u_eig.clone()
        } else {
            (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nu == 0.0 {
            continue;
        }
        u.iter_mut().for_each(|x| *x /= nu);
        let mut v: Vec<f64> = if start == 0 {
            vec![0.0; off.len()]
        } else {
            let r = a0 * u.iter().map(|x| x.abs()).sum::<f64>();
            let mut v: Vec<f64> = (0..off.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let scale: f64 = rng.random_range(0.0..1.0);
            v.iter_mut().for_each(|x| *x *= scale * r);
            project_l1(&mut v, r);
            v
        };
        for _ in 0..opts.iterations {
            let b = embed(&u, &v);
            let val = quotient(&b);
            if val < best {
                best = val.max(0.0);
                best_b = b.clone();
                if best == 0.0 {
                    return (0.0, best_b);
                }
            }
            // gradient of bᵀGb is 2Gb
            let grad: Vec<f64> = (0..d)
                .map(|i| 2.0 * g.entries[i * d..(i + 1) * d].iter().zip(&b).map(|(x, y)| x * y).sum::<f64>())
                .collect();
            for (a, &j) in off.iter().enumerate() {
                v[a] -= 0.5 * step * grad[j];
            }
            let ug: f64 = support.iter().enumerate().map(|(a, &j)| u[a] * grad[j]).sum();
            for (a, &j) in support.iter().enumerate() {
                // tangent component on the sphere
                u[a] -= 0.5 * step * (grad[j] - ug * u[a]);
            }
            let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nu == 0.0 {
                break;
            }
            u.iter_mut().for_each(|x| *x /= nu);
            let r = a0 * u.iter().map(|x| x.abs()).sum::<f64>();
            project_l1(&mut v, r);
        }
        let b = embed(&u, &v);
        let val = quotient(&b);
        if val < best {
            best = val.max(0.0);
            best_b = b;
        }
    }
    (best.sqrt(), best_b)
}

/// Minimum over supports `|J| ≤ s` of the cone-restricted quotient
/// `(bᵀGb)^{1/2} / ‖b_J‖_2`. Every candidate is feasible, so the value is an
/// upper bound on `κ_0(s, a_0)`; [`re_eigen_lower_bound`] brackets it from below.
pub fn re_constant_bruteforce_with(g: &GramMatrix, s: usize, a0: f64, opts: &BruteForceOptions) -> Result<REResult> {
    let d = g.dim;
    if d > MAX_BRUTE_FORCE_DIM || s > MAX_BRUTE_FORCE_SPARSITY {
        return Err(Error::EnumerationGuard {
            dim: d,
            s,
            max_dim: MAX_BRUTE_FORCE_DIM,
            max_s: MAX_BRUTE_FORCE_SPARSITY,
        });
    }
    if s == 0 || d == 0 {
        return Err(Error::InvalidParameter("sparsity and dimension must be positive".into()));
    }
    if !(a0 > 0.0 && a0.is_finite()) {
        return Err(Error::InvalidParameter(format!("cone constant must be positive, got {a0}")));
    }
    let lmax = g.eigenvalues().last().copied().unwrap_or(0.0).max(1e-12);
    let mut supports = Vec::new();
    for k in 1..=s.min(d) {
        combinations(d, k, &mut supports);
    }
    let results: Vec<(f64, Vec<f64>)> = supports
        .par_iter()
        .enumerate()
        .map(|(idx, support)| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(idx as u64);
            minimize_on_support(g, support, a0, opts, &mut rng, lmax)
        })
        .collect();
    let mut best = f64::INFINITY;
    let mut cert = None;
    for (support, (val, b)) in supports.into_iter().zip(results) {
        if val < best {
            best = val;
            cert = Some(RECertificate {
                support,
                direction: b,
            });
        }
    }
    Ok(REResult {
        kappa: best,
        s,
        a0,
        method: REMethod::BruteForce,
        certificate: cert,
    })
}

/// `2M² exp[−nκ⁴ / (2L²(1+a_0)²s(L²(1+a_0)²s + κ²/3))]`, unclamped.
pub fn re_probability_bound_raw(kappa: f64, s: usize, a0: f64, l: f64, n: usize, m: usize) -> f64 {
    let q = l * l * (1.0 + a0).powi(2) * s as f64;
    let k2 = kappa * kappa;
    let expo = -(n as f64) * k2 * k2 / (2.0 * q * (q + k2 / 3.0));
    2.0 * (m as f64).powi(2) * expo.exp()
}

/// `π_n` clamped to `[0, 1]`.
pub fn re_probability_bound(kappa: f64, s: usize, a0: f64, l: f64, n: usize, m: usize) -> Result<f64> {
    if !(kappa >= 0.0 && a0 > 0.0 && l > 0.0 && s > 0 && n > 0 && m > 0) {
        return Err(Error::InvalidParameter("probability bound arguments must be positive".into()));
    }
    Ok(re_probability_bound_raw(kappa, s, a0, l, n, m).clamp(0.0, 1.0))
}
