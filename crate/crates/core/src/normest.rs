//! Lower bounds for `||R||_{p -> p}` at finite truncation and the scalar
//! constants behind the bilinear embedding.
//!
//! The transform is realized as two dense matrices over a fixed tensor grid:
//! `Phi` maps coefficients to values of `f` and `T_i` maps them to values of
//! `R_i f`. Both norms are weighted grid sums.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::orthosys::Family;
use crate::spectral::{box_indices, gauss_grid, p_star, GridTables, MultiIndex, ProductSystem};

/// Search method for [`pnorm_lower_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Boyd,
    Ascent,
}

/// Outcome of one estimation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub p: f64,
    pub system: String,
    pub d: usize,
    pub n: usize,
    pub method: Method,
    pub lower_bound: f64,
    pub paper_bound: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Gauss points per axis of the grid the norms were taken on.
    pub grid_points: usize,
    /// Ratio after each accepted step (Boyd) or after each restart (ascent).
    pub history: Vec<f64>,
}

/// Knobs for the estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormOpts {
    pub max_iterations: usize,
    pub rel_tol: f64,
    pub restarts: usize,
    /// Largest grid, in total nodes, the resolution search may pick.
    pub max_grid_nodes: usize,
    /// Relative change of probe norms accepted when picking the grid.
    pub grid_tol: f64,
}

impl Default for NormOpts {
    fn default() -> Self {
        NormOpts { max_iterations: 500, rel_tol: 1e-8, restarts: 20, max_grid_nodes: 4096, grid_tol: 1e-3 }
    }
}

/// `Phi` and `T_1 .. T_d` on a grid, restricted to the coefficient space the
/// bound applies to.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub phi: DMatrix<f64>,
    pub riesz: Vec<DMatrix<f64>>,
    pub weights: Vec<f64>,
    /// Flat indices (in the `{0..=N}^d` box) of the retained coefficients.
    pub columns: Vec<usize>,
    pub grid_points: usize,
}

impl Discretization {
    /// Matrices on `m` Gauss points per axis.
    pub fn new(system: &ProductSystem, n: usize, m: usize) -> Result<Self> {
        let d = system.d();
        let grid = gauss_grid(system, m)?;
        let tables = GridTables::new(system, grid.clone(), n)?;
        let idx = box_indices(d, n);
        let columns: Vec<usize> = idx
            .iter()
            .enumerate()
            .filter(|(_, k)| system.lambda(&k.0) > 0.0)
            .map(|(f, _)| f)
            .collect();
        if columns.is_empty() {
            return Err(LabError::Estimation("no coefficients in the range of Pi".into()));
        }
        // nodes this light carry less than 1e-60 of any norm used here and
        // would overflow the smoothing of the dual step
        let wmax = grid.weights().iter().cloned().filter(|w| w.is_finite()).fold(0.0, f64::max);
        let kept: Vec<usize> = (0..grid.size()).filter(|&j| grid.weights()[j] > 1e-150 * wmax).collect();
        let rows = kept.len();
        let mut phi = DMatrix::zeros(rows, columns.len());
        let mut riesz = vec![DMatrix::zeros(rows, columns.len()); d];
        for (j, &flat) in kept.iter().enumerate() {
            let node = grid.multi_index(flat);
            for (c, &f) in columns.iter().enumerate() {
                let k = &idx[f].0;
                let vals: Vec<f64> = (0..d).map(|a| tables.axes[a].phi.get(node[a], k[a])).collect();
                let inv = 1.0 / system.lambda(k).sqrt();
                phi[(j, c)] = vals.iter().product();
                for (i, t) in riesz.iter_mut().enumerate() {
                    let mut v = inv * tables.axes[i].delta.get(node[i], k[i]);
                    for (a, va) in vals.iter().enumerate() {
                        if a != i {
                            v *= va;
                        }
                    }
                    t[(j, c)] = v;
                }
            }
        }
        let weights = kept.iter().map(|&j| grid.weights()[j]).collect();
        Ok(Discretization { phi, riesz, weights, columns, grid_points: m })
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    /// `||Phi c||_p` on the grid.
    pub fn f_norm(&self, c: &DVector<f64>, p: f64) -> f64 {
        let y = &self.phi * c;
        y.iter().zip(&self.weights).map(|(v, w)| w * v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }

    fn riesz_values(&self, c: &DVector<f64>) -> Vec<DVector<f64>> {
        self.riesz.iter().map(|t| t * c).collect()
    }

    /// `||(sum_i |T_i c|^2)^{1/2}||_p` on the grid.
    pub fn r_norm(&self, c: &DVector<f64>, p: f64) -> f64 {
        let ys = self.riesz_values(c);
        (0..self.weights.len())
            .map(|j| {
                let e: f64 = ys.iter().map(|y| y[j] * y[j]).sum();
                self.weights[j] * e.powf(0.5 * p)
            })
            .sum::<f64>()
            .powf(1.0 / p)
    }

    pub fn ratio(&self, c: &DVector<f64>, p: f64) -> f64 {
        self.r_norm(c, p) / self.f_norm(c, p)
    }

    /// Gradient of `(1/p) ||T c||_p^p` in `c`, along with `||T c||_p^p`.
    fn r_dual(&self, c: &DVector<f64>, p: f64) -> (DVector<f64>, f64) {
        let ys = self.riesz_values(c);
        let mut total = 0.0;
        let mut s = vec![0.0; self.weights.len()];
        for (j, sj) in s.iter_mut().enumerate() {
            let e: f64 = ys.iter().map(|y| y[j] * y[j]).sum();
            total += self.weights[j] * e.powf(0.5 * p);
            *sj = if e > 0.0 { self.weights[j] * e.powf(0.5 * p - 1.0) } else { 0.0 };
        }
        let mut z = DVector::zeros(self.dim());
        for (t, y) in self.riesz.iter().zip(&ys) {
            let sy = DVector::from_iterator(y.len(), y.iter().zip(&s).map(|(a, b)| a * b));
            z += t.transpose() * sy;
        }
        (z, total)
    }

    /// Gradient of `(1/p) ||Phi c||_p^p` in `c`, along with `||Phi c||_p^p`.
    fn f_dual(&self, c: &DVector<f64>, p: f64) -> (DVector<f64>, f64) {
        let y = &self.phi * c;
        let mut total = 0.0;
        let s = DVector::from_iterator(
            y.len(),
            y.iter().zip(&self.weights).map(|(v, w)| {
                let a = v.abs();
                total += w * a.powf(p);
                if a > 0.0 { w * a.powf(p - 1.0) * v.signum() } else { 0.0 }
            }),
        );
        (self.phi.transpose() * s, total)
    }

    /// Maximizer of `<z, c>` over `||Phi c||_p <= 1`, by damped Newton on
    /// `(1/p) sum w (y^2 + eps^2)^{p/2} - <z, c>` started from `start`.
    /// Smoothing is only needed for `p < 2`; there `eps_j` is chosen so that
    /// node `j` alone contributes `1e-8^p` of the norm.
    fn dual_argmax(&self, z: &DVector<f64>, start: &DVector<f64>, p: f64) -> Option<DVector<f64>> {
        let s0 = z.dot(start).max(0.0).powf(1.0 / (p - 1.0));
        let mut c = if s0 > 0.0 { start * s0 } else { start.clone() };
        let nrm = self.f_norm(&c, p);
        let eps2: Vec<f64> = self
            .weights
            .iter()
            .map(|w| if p < 2.0 { (1e-8 * nrm * w.powf(-1.0 / p)).powi(2) } else { 0.0 })
            .collect();
        let objective = |c: &DVector<f64>| -> f64 {
            let y = &self.phi * c;
            let mut acc = 0.0;
            for j in 0..y.len() {
                acc += self.weights[j] * (y[j] * y[j] + eps2[j]).powf(0.5 * p);
            }
            acc / p - z.dot(c)
        };
        let mut h = objective(&c);
        for _ in 0..80 {
            let y = &self.phi * &c;
            let mut g1 = DVector::zeros(y.len());
            let mut d2 = DVector::zeros(y.len());
            for j in 0..y.len() {
                let u = y[j] * y[j] + eps2[j];
                if u == 0.0 {
                    continue;
                }
                g1[j] = self.weights[j] * y[j] * u.powf(0.5 * p - 1.0);
                d2[j] = self.weights[j] * u.powf(0.5 * p - 2.0) * ((p - 1.0) * y[j] * y[j] + eps2[j]);
            }
            let grad = self.phi.tr_mul(&g1) - z;
            let mut scaled = self.phi.clone();
            for (mut row, s) in scaled.row_iter_mut().zip(d2.iter()) {
                row *= s.sqrt();
            }
            let mut hess = scaled.tr_mul(&scaled);
            let ridge = 1e-14 * hess.diagonal().amax();
            for a in 0..hess.nrows() {
                hess[(a, a)] += ridge;
            }
            let step = hess.cholesky()?.solve(&grad);
            // squared Newton decrement, against the scale <z, c> of the objective
            let slope = grad.dot(&step);
            if !(slope > 1e-15 * z.dot(&c).abs()) {
                break;
            }
            let mut alpha = 1.0;
            loop {
                let cand = &c - &step * alpha;
                let hc = objective(&cand);
                if hc <= h - 1e-4 * alpha * slope {
                    c = cand;
                    h = hc;
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-10 {
                    return Some(self.normalize(c, p));
                }
            }
        }
        Some(self.normalize(c, p))
    }

    fn normalize(&self, c: DVector<f64>, p: f64) -> DVector<f64> {
        let n = self.f_norm(&c, p);
        c / n
    }

    fn random_start(&self, rng: &mut impl Rng, p: f64) -> Result<DVector<f64>> {
        for _ in 0..100 {
            let c = DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let n = self.f_norm(&c, p);
            if n.is_finite() && n > 0.0 {
                return Ok(c / n);
            }
        }
        Err(LabError::Estimation("grid norm vanishes on random coefficient vectors".into()))
    }
}

/// Nonlinear power iteration from `start`. Returns the ratio history; the
/// sequence is nondecreasing because a step is only taken when it does not
/// lower the ratio.
pub fn boyd_iterate(
    disc: &Discretization,
    p: f64,
    start: &DVector<f64>,
    opts: &NormOpts,
) -> Result<(DVector<f64>, Vec<f64>, bool)> {
    let mut c = disc.normalize(start.clone(), p);
    let mut rho = disc.ratio(&c, p);
    if !rho.is_finite() {
        return Err(LabError::Estimation("degenerate starting vector".into()));
    }
    let mut history = vec![rho];
    for _ in 0..opts.max_iterations {
        let (z, _) = disc.r_dual(&c, p);
        let Some(next) = disc.dual_argmax(&z, &c, p) else {
            return Ok((c, history, false));
        };
        let r_next = disc.ratio(&next, p);
        if !r_next.is_finite() || r_next < rho {
            // the exact dual step cannot decrease the ratio; an inexact one that does is discarded
            return Ok((c, history, true));
        }
        let change = (r_next - rho) / r_next;
        c = next;
        rho = r_next;
        history.push(rho);
        if change < opts.rel_tol {
            return Ok((c, history, true));
        }
    }
    Ok((c, history, false))
}

/// Gradient ascent on `log ||T c||_p - log ||Phi c||_p` with quasi-Newton
/// (BFGS) directions and Armijo backtracking. The ratio is invariant under
/// scaling, so the iterate is renormalized only at the end.
pub fn ascent_iterate(disc: &Discretization, p: f64, start: &DVector<f64>, max_iterations: usize) -> (DVector<f64>, f64) {
    let n = disc.dim();
    // minimize the negative log-ratio
    let value = |c: &DVector<f64>| -disc.ratio(c, p).ln();
    let gradient = |c: &DVector<f64>| -> DVector<f64> {
        let (gr, tr) = disc.r_dual(c, p);
        let (gf, tf) = disc.f_dual(c, p);
        gf / tf - gr / tr
    };
    let mut c = start.normalize();
    let mut v = value(&c);
    let mut g = gradient(&c);
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut stalls = 0;
    for _ in 0..max_iterations {
        if g.norm() * c.norm() < 1e-12 {
            break;
        }
        let mut dir = -(&hinv * &g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            hinv = DMatrix::identity(n, n);
            dir = -g.clone();
            slope = g.dot(&dir);
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-14 {
            let cand = &c + &dir * alpha;
            let vc = value(&cand);
            if vc.is_finite() && vc <= v + 1e-4 * alpha * slope {
                accepted = Some((cand, vc));
                break;
            }
            alpha *= 0.5;
        }
        let Some((cand, vc)) = accepted else { break };
        let g_new = gradient(&cand);
        let s = &cand - &c;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            hinv += (&s * s.transpose()) * (rho * (1.0 + rho * yhy)) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        stalls = if v - vc < 1e-15 * v.abs().max(1.0) { stalls + 1 } else { 0 };
        c = cand;
        v = vc;
        g = g_new;
        if stalls >= 3 {
            break;
        }
    }
    let r = (-v).exp();
    (c.normalize(), r)
}

/// Gauss points per axis: doubled from `2N + 2` until the norms of a probe
/// function and its transform settle to `grid_tol`, within the node budget.
pub fn choose_grid(system: &ProductSystem, n: usize, p: f64, opts: &NormOpts, rng: &mut impl Rng) -> Result<usize> {
    let d = system.d() as u32;
    let cap = ((opts.max_grid_nodes as f64).powf(1.0 / d as f64) + 1e-9).floor() as usize;
    let mut m = (2 * n + 2).min(cap.max(n + 1));
    let probe_seed: u64 = rng.gen();
    let probe = |m: usize| -> Result<(f64, f64)> {
        let disc = Discretization::new(system, n, m)?;
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(probe_seed);
        let c = DVector::from_iterator(disc.dim(), (0..disc.dim()).map(|_| r.sample::<f64, _>(StandardNormal)));
        let (a, b) = (disc.f_norm(&c, p), disc.r_norm(&c, p));
        if !(a.is_finite() && b.is_finite() && a > 0.0) {
            return Err(LabError::Estimation(format!("probe norms not finite on {m} points per axis")));
        }
        Ok((a, b))
    };
    let mut prev = probe(m)?;
    while 2 * m <= cap {
        let cur = probe(2 * m)?;
        m *= 2;
        let ch = ((cur.0 - prev.0) / cur.0).abs().max(((cur.1 - prev.1) / cur.1).abs());
        if ch < opts.grid_tol {
            break;
        }
        prev = cur;
    }
    Ok(m)
}


/// Best ratio `||R f||_p / ||f||_p` found over the truncated coefficient space.
pub fn pnorm_lower_bound(
    system: &ProductSystem,
    p: f64,
    n: usize,
    method: Method,
    opts: &NormOpts,
    rng: &mut impl Rng,
) -> Result<NormEstimate> {
    if !(p.is_finite() && p > 1.0) {
        return Err(LabError::Argument(format!("exponent must lie in (1, inf), got {p}")));
    }
    let m = choose_grid(system, n, p, opts, rng)?;
    let disc = Discretization::new(system, n, m)?;
    pnorm_lower_bound_on(system, &disc, p, n, method, opts, None, rng)
}

/// [`pnorm_lower_bound`] on a given discretization, optionally warm-started.
#[allow(clippy::too_many_arguments)]
pub fn pnorm_lower_bound_on(
    system: &ProductSystem,
    disc: &Discretization,
    p: f64,
    n: usize,
    method: Method,
    opts: &NormOpts,
    warm: Option<&DVector<f64>>,
    rng: &mut impl Rng,
) -> Result<NormEstimate> {
    estimate_with_maximizer(system, disc, p, n, method, opts, warm, rng).map(|(e, _)| e)
}

/// The estimate together with the coefficient vector attaining it.
#[allow(clippy::too_many_arguments)]
pub fn estimate_with_maximizer(
    system: &ProductSystem,
    disc: &Discretization,
    p: f64,
    n: usize,
    method: Method,
    opts: &NormOpts,
    warm: Option<&DVector<f64>>,
    rng: &mut impl Rng,
) -> Result<(NormEstimate, DVector<f64>)> {
    let mut out = NormEstimate {
        p,
        system: system.label(),
        d: system.d(),
        n,
        method,
        lower_bound: 0.0,
        paper_bound: system.norm_bound(p),
        iterations: 0,
        converged: false,
        grid_points: disc.grid_points,
        history: Vec::new(),
    };
    let maximizer = match method {
        Method::Boyd => {
            let mut starts: Vec<DVector<f64>> = warm.into_iter().cloned().collect();
            while starts.len() < 2 {
                starts.push(disc.random_start(rng, p)?);
            }
            let mut best: Option<(DVector<f64>, Vec<f64>, bool)> = None;
            for s in &starts {
                let Ok((c, hist, conv)) = boyd_iterate(disc, p, s, opts) else { continue };
                let r = *hist.last().expect("history starts non-empty");
                if best.as_ref().is_none_or(|b| r > *b.1.last().expect("non-empty")) {
                    best = Some((c, hist, conv));
                }
            }
            let (c, hist, conv) = best.ok_or_else(|| LabError::Estimation("every start was degenerate".into()))?;
            out.lower_bound = *hist.last().expect("non-empty");
            out.iterations = hist.len() - 1;
            out.converged = conv;
            out.history = hist;
            c
        }
        Method::Ascent => {
            let mut best: Option<(f64, DVector<f64>)> = None;
            for k in 0..opts.restarts {
                let start = match (k, warm) {
                    (0, Some(w)) => w.clone(),
                    _ => disc.random_start(rng, p)?,
                };
                let (c, r) = ascent_iterate(disc, p, &start, opts.max_iterations);
                if r.is_finite() {
                    out.history.push(r);
                    if best.as_ref().is_none_or(|b| r > b.0) {
                        best = Some((r, c));
                    }
                }
            }
            let (r, c) = best.ok_or_else(|| LabError::Estimation("every restart was degenerate".into()))?;
            out.lower_bound = r;
            out.iterations = opts.restarts;
            out.converged = true;
            c
        }
    };
    Ok((out, maximizer))
}

/// Boyd estimates for a rising sequence of truncations on one common grid,
/// each warm-started from the optimizer of the previous one. On a shared grid
/// the smaller space embeds exactly, so the bounds cannot decrease.
pub fn truncation_ladder(
    system: &ProductSystem,
    p: f64,
    ns: &[usize],
    opts: &NormOpts,
    rng: &mut impl Rng,
) -> Result<Vec<NormEstimate>> {
    let top = *ns.iter().max().ok_or_else(|| LabError::Argument("empty truncation list".into()))?;
    let m = choose_grid(system, top, p, opts, rng)?;
    let d = system.d();
    let mut sorted = ns.to_vec();
    sorted.sort_unstable();
    let mut out = Vec::with_capacity(sorted.len());
    let mut prev: Option<(Vec<MultiIndex>, DVector<f64>)> = None;
    for n in sorted {
        let disc = Discretization::new(system, n, m)?;
        let idx = box_indices(d, n);
        let warm = prev.as_ref().map(|(keys, c)| {
            let mut w = DVector::zeros(disc.dim());
            for (key, v) in keys.iter().zip(c.iter()) {
                let target = disc.columns.iter().position(|&f| idx[f] == *key).expect("smaller box embeds");
                w[target] = *v;
            }
            w
        });
        let (est, c) = estimate_with_maximizer(system, &disc, p, n, Method::Boyd, opts, warm.as_ref(), rng)?;
        prev = Some((disc.columns.iter().map(|&f| idx[f].clone()).collect(), c));
        out.push(est);
    }
    Ok(out)
}

/// One cell of the norm-bound suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCell {
    pub family: Family,
    pub d: usize,
    pub p: f64,
    pub n: usize,
    pub seed: u64,
    pub estimate: std::result::Result<NormEstimate, String>,
    /// `2 (p* - 1)`, only for the Ornstein–Uhlenbeck system.
    pub ou_bound: Option<f64>,
}

impl BoundCell {
    pub fn passes(&self) -> bool {
        match &self.estimate {
            Ok(e) => e.lower_bound <= e.paper_bound && self.ou_bound.is_none_or(|b| e.lower_bound <= b),
            Err(_) => false,
        }
    }
}

/// Truncation used for dimension `d` when none is given.
pub fn default_truncation(d: usize) -> usize {
    match d {
        1 => 10,
        2 => 6,
        _ => 3,
    }
}

/// Seed of one cell, a pure function of the run seed and the cell.
pub fn cell_seed(seed: u64, family: &Family, d: usize, p: f64) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(serde_json::to_vec(family).expect("family serializes"));
    h.update((d as u64).to_le_bytes());
    h.update(p.to_bits().to_le_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

/// Boyd lower bounds on every `(family, d, p)` cell. Cells run on the rayon
/// pool; each draws from its own seeded stream so the result does not depend
/// on scheduling.
pub fn bound_suite(
    families: &[Family],
    ps: &[f64],
    ds: &[usize],
    truncation: impl Fn(usize) -> usize + Sync,
    opts: &NormOpts,
    seed: u64,
) -> Vec<BoundCell> {
    use rayon::prelude::*;
    let cells: Vec<(Family, usize, f64)> = families
        .iter()
        .flat_map(|f| ds.iter().flat_map(move |&d| ps.iter().map(move |&p| (*f, d, p))))
        .collect();
    cells
        .into_par_iter()
        .map(|(family, d, p)| {
            let n = truncation(d);
            let s = cell_seed(seed, &family, d, p);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s);
            let estimate = ProductSystem::uniform(family, d)
                .and_then(|sys| pnorm_lower_bound(&sys, p, n, Method::Boyd, opts, &mut rng))
                .map_err(|e| e.to_string());
            let ou_bound = (family == Family::HermitePoly).then(|| ou_sharp_bound(p));
            BoundCell { family, d, p, n, seed: s, estimate, ou_bound }
        })
        .collect()
}

/// Spread `max - min` of the lower bounds over `d` at each `(family, p)`.
/// Reported only: finite truncations say nothing definite about all `d`.
pub fn dimension_spread(cells: &[BoundCell]) -> Vec<(Family, f64, f64)> {
    let mut groups: Vec<(Family, f64, f64, f64)> = Vec::new();
    for c in cells {
        let Ok(e) = &c.estimate else { continue };
        match groups.iter_mut().find(|g| g.0 == c.family && g.1 == c.p) {
            Some(g) => {
                g.2 = g.2.min(e.lower_bound);
                g.3 = g.3.max(e.lower_bound);
            }
            None => groups.push((c.family, c.p, e.lower_bound, e.lower_bound)),
        }
    }
    groups.into_iter().map(|(f, p, lo, hi)| (f, p, hi - lo)).collect()
}

/// Bound `2 (p* - 1)` known for the Ornstein–Uhlenbeck Riesz vector.
pub fn ou_sharp_bound(p: f64) -> f64 {
    2.0 * (p_star(p) - 1.0)
}

// --- constants ---------------------------------------------------------------

/// `H(s) = (s + 4) s^{-s/(s+1)}`.
pub fn h_function(s: f64) -> f64 {
    (s + 4.0) * s.powf(-s / (s + 1.0))
}

/// `(1 + gamma)/(2 gamma) ((p/q)^{1/p} + (q/p)^{1/q})` for `p >= 2`.
pub fn polarization_constant(p: f64) -> f64 {
    let q = p / (p - 1.0);
    let g = q * (q - 1.0) / 8.0;
    (1.0 + g) / (2.0 * g) * ((p / q).powf(1.0 / p) + (q / p).powf(1.0 / q))
}

/// `(8 + q(q-1))/2 (q-1)^{1/q - 1} (p - 1)` for `p >= 2`.
pub fn skew_constant(p: f64) -> f64 {
    let q = p / (p - 1.0);
    (8.0 + q * (q - 1.0)) / 2.0 * (q - 1.0).powf(1.0 / q - 1.0) * (p - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarizationRow {
    pub p: f64,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub h_sup: f64,
    pub h_argmax: f64,
    pub h_at_one: f64,
    /// `(22/5) (7/20)^{-2/7}`.
    pub h_cap: f64,
    pub polarization: Vec<PolarizationRow>,
}

/// Supremum of `H` on `(0, 1]` by a dense grid and golden-section refinement,
/// and the polarization constant against `6(p* - 1)` on a log grid of `[2, 1000]`.
pub fn constants_report() -> ConstantsReport {
    let grid = 20_000;
    let (mut best_s, mut best) = (1.0, h_function(1.0));
    for j in 1..=grid {
        let s = j as f64 / grid as f64;
        let v = h_function(s);
        if v > best {
            best = v;
            best_s = s;
        }
    }
    let step = 1.0 / grid as f64;
    let (mut a, mut b) = ((best_s - step).max(1e-12), (best_s + step).min(1.0));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if h_function(c) > h_function(d) {
            b = d;
        } else {
            a = c;
        }
        if b - a < 1e-15 {
            break;
        }
    }
    let h_argmax = 0.5 * (a + b);
    let h_sup = h_function(h_argmax).max(best);
    let polarization = (0..=300)
        .map(|j| {
            let p = 2.0 * 500f64.powf(j as f64 / 300.0);
            PolarizationRow { p, value: polarization_constant(p), bound: 6.0 * (p_star(p) - 1.0) }
        })
        .collect();
    ConstantsReport {
        h_sup,
        h_argmax,
        h_at_one: h_function(1.0),
        h_cap: 22.0 / 5.0 * (7.0f64 / 20.0).powf(-2.0 / 7.0),
        polarization,
    }
}
