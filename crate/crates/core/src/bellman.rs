//! The bi-radial Nazarov–Treil Bellman function, its mollification and the
//! pointwise inequalities it satisfies.
//!
//! `beta(s1, s2)` is defined for `p >= 2`; `B(zeta, eta) = beta(|zeta|, |eta|) / 2`.
//! Derivatives are piecewise analytic, with central finite differences kept
//! as an independent cross-check.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{LabError, Result};
use crate::quadgrid::gauss_legendre;
use crate::tensor::Mat;

/// Relative distance to the non-smooth set below which Hessians are refused.
pub const SINGULAR_EXCLUSION: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellmanParams {
    pub p: f64,
    pub q: f64,
    pub gamma: f64,
    pub m1: usize,
    pub m2: usize,
    pub kappa: f64,
    /// Set when the caller asked for an exponent below 2 and it was replaced by its conjugate.
    pub swapped: bool,
}

impl BellmanParams {
    /// Exponents below 2 are replaced by their conjugate.
    pub fn new(p: f64, m1: usize, m2: usize, kappa: f64) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(LabError::Argument(format!("exponent must lie in (1, inf), got {p}")));
        }
        if m1 == 0 || m2 == 0 {
            return Err(LabError::Argument("argument dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&kappa) {
            return Err(LabError::Argument(format!("kappa must lie in [0, 1), got {kappa}")));
        }
        let conj = p / (p - 1.0);
        let (p, q, swapped) = if p >= 2.0 { (p, conj, false) } else { (conj, p, true) };
        Ok(BellmanParams { p, q, gamma: q * (q - 1.0) / 8.0, m1, m2, kappa, swapped })
    }

    pub fn dim(&self) -> usize {
        self.m1 + self.m2
    }
}

/// `xi = (zeta, eta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BellmanPoint {
    pub zeta: Vec<f64>,
    pub eta: Vec<f64>,
}

impl BellmanPoint {
    pub fn new(zeta: Vec<f64>, eta: Vec<f64>) -> Self {
        BellmanPoint { zeta, eta }
    }

    pub fn from_xi(xi: &[f64], m1: usize) -> Self {
        BellmanPoint { zeta: xi[..m1].to_vec(), eta: xi[m1..].to_vec() }
    }

    pub fn xi(&self) -> Vec<f64> {
        self.zeta.iter().chain(&self.eta).copied().collect()
    }

    pub fn s1(&self) -> f64 {
        norm(&self.zeta)
    }

    pub fn s2(&self) -> f64 {
        norm(&self.eta)
    }

    fn check_dims(&self, params: &BellmanParams) -> Result<()> {
        if self.zeta.len() != params.m1 || self.eta.len() != params.m2 {
            return Err(LabError::Argument(format!(
                "point has dimensions ({}, {}), parameters expect ({}, {})",
                self.zeta.len(),
                self.eta.len(),
                params.m1,
                params.m2
            )));
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `beta` and its partial derivatives in `(s1, s2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaDerivs {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub d11: f64,
    pub d22: f64,
    pub d12: f64,
    /// `true` on the branch `s1^p <= s2^q`.
    pub first_branch: bool,
}

fn check_radii(s1: f64, s2: f64) -> Result<()> {
    if !(s1 >= 0.0 && s2 >= 0.0) || !s1.is_finite() || !s2.is_finite() {
        return Err(LabError::Argument(format!("radii must be non-negative, got ({s1}, {s2})")));
    }
    Ok(())
}

/// The two-branch function `beta_p(s1, s2)`.
pub fn beta(params: &BellmanParams, s1: f64, s2: f64) -> Result<f64> {
    check_radii(s1, s2)?;
    Ok(beta_derivs(params, s1, s2).value)
}

/// Value and derivatives of `beta`; second derivatives are one-sided on the interface.
pub fn beta_derivs(params: &BellmanParams, s1: f64, s2: f64) -> BetaDerivs {
    let BellmanParams { p, q, gamma: g, .. } = *params;
    let first_branch = s1.powf(p) <= s2.powf(q);
    if first_branch {
        if s2 == 0.0 {
            // forces s1 = 0
            return BetaDerivs { value: 0.0, d1: 0.0, d2: 0.0, d11: 0.0, d22: 0.0, d12: 0.0, first_branch };
        }
        let value = s1.powf(p) + s2.powf(q) + g * s1 * s1 * s2.powf(2.0 - q);
        BetaDerivs {
            value,
            d1: p * s1.powf(p - 1.0) + 2.0 * g * s1 * s2.powf(2.0 - q),
            d2: q * s2.powf(q - 1.0) + g * (2.0 - q) * s1 * s1 * s2.powf(1.0 - q),
            d11: p * (p - 1.0) * s1.powf(p - 2.0) + 2.0 * g * s2.powf(2.0 - q),
            d22: q * (q - 1.0) * s2.powf(q - 2.0) + g * (2.0 - q) * (1.0 - q) * s1 * s1 * s2.powf(-q),
            d12: 2.0 * g * (2.0 - q) * s1 * s2.powf(1.0 - q),
            first_branch,
        }
    } else {
        let c1 = p + 2.0 * g;
        let c2 = q + g * (2.0 - q);
        BetaDerivs {
            value: (1.0 + 2.0 * g / p) * s1.powf(p) + (1.0 + g * (2.0 / q - 1.0)) * s2.powf(q),
            d1: c1 * s1.powf(p - 1.0),
            d2: c2 * s2.powf(q - 1.0),
            d11: c1 * (p - 1.0) * s1.powf(p - 2.0),
            d22: if s2 == 0.0 { f64::INFINITY } else { c2 * (q - 1.0) * s2.powf(q - 2.0) },
            d12: 0.0,
            first_branch,
        }
    }
}

/// `B(zeta, eta) = beta(|zeta|, |eta|) / 2`.
pub fn bellman_b(params: &BellmanParams, pt: &BellmanPoint) -> Result<f64> {
    pt.check_dims(params)?;
    Ok(0.5 * beta_derivs(params, pt.s1(), pt.s2()).value)
}

fn b_unchecked(params: &BellmanParams, xi: &[f64]) -> f64 {
    let s1 = norm(&xi[..params.m1]);
    let s2 = norm(&xi[params.m1..]);
    0.5 * beta_derivs(params, s1, s2).value
}

fn grad_unchecked(params: &BellmanParams, xi: &[f64], out: &mut [f64]) {
    let m1 = params.m1;
    let s1 = norm(&xi[..m1]);
    let s2 = norm(&xi[m1..]);
    let d = beta_derivs(params, s1, s2);
    let f1 = if s1 > 0.0 { 0.5 * d.d1 / s1 } else { 0.0 };
    let f2 = if s2 > 0.0 { 0.5 * d.d2 / s2 } else { 0.0 };
    for (o, x) in out.iter_mut().zip(xi).take(m1) {
        *o = f1 * x;
    }
    for (o, x) in out.iter_mut().zip(xi).skip(m1) {
        *o = f2 * x;
    }
}

/// Gradient of `B`, analytic.
pub fn grad_b(params: &BellmanParams, pt: &BellmanPoint) -> Result<Vec<f64>> {
    pt.check_dims(params)?;
    let mut g = vec![0.0; params.dim()];
    grad_unchecked(params, &pt.xi(), &mut g);
    Ok(g)
}

/// Relative distance of a point to `{zeta = 0} u {eta = 0} u {|zeta|^p = |eta|^q}`.
pub fn singular_distance(params: &BellmanParams, s1: f64, s2: f64) -> f64 {
    let scale = (s1 * s1 + s2 * s2).sqrt();
    if scale == 0.0 {
        return 0.0;
    }
    let a = s1.powf(params.p);
    let b = s2.powf(params.q);
    let iface = (a - b).abs() / (a + b);
    (s1 / scale).min(s2 / scale).min(iface)
}

fn hess_unchecked(params: &BellmanParams, xi: &[f64]) -> Mat {
    let m1 = params.m1;
    let n = params.dim();
    let s1 = norm(&xi[..m1]);
    let s2 = norm(&xi[m1..]);
    let d = beta_derivs(params, s1, s2);
    let mut h = Mat::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let (ia, ib) = (a < m1, b < m1);
            let v = match (ia, ib) {
                (true, true) => {
                    let u = xi[a] * xi[b] / (s1 * s1);
                    let delta = if a == b { 1.0 } else { 0.0 };
                    0.5 * (d.d11 * u + d.d1 / s1 * (delta - u))
                }
                (false, false) => {
                    let u = xi[a] * xi[b] / (s2 * s2);
                    let delta = if a == b { 1.0 } else { 0.0 };
                    0.5 * (d.d22 * u + d.d2 / s2 * (delta - u))
                }
                _ => 0.5 * d.d12 * xi[a] * xi[b] / (s1 * s2),
            };
            h.set(a, b, v);
        }
    }
    h
}

/// Hessian of `B`, analytic, away from the non-smooth set.
pub fn hess_b(params: &BellmanParams, pt: &BellmanPoint) -> Result<Mat> {
    pt.check_dims(params)?;
    let dist = singular_distance(params, pt.s1(), pt.s2());
    if dist <= SINGULAR_EXCLUSION {
        return Err(LabError::SingularRegion(format!(
            "relative distance {dist:.3e} at (|zeta|, |eta|) = ({}, {})",
            pt.s1(),
            pt.s2()
        )));
    }
    Ok(hess_unchecked(params, &pt.xi()))
}

/// `<Hess B(xi) omega, omega>` from the bi-radial formula. A block of `omega`
/// that vanishes contributes nothing, so `zeta` or `eta` may be zero when the
/// matching block of `omega` is zero too.
pub fn hess_quad_form(params: &BellmanParams, xi: &[f64], omega: &[f64]) -> f64 {
    let m1 = params.m1;
    let (z, e) = xi.split_at(m1);
    let (w1, w2) = omega.split_at(m1);
    let (s1, s2) = (norm(z), norm(e));
    let d = beta_derivs(params, s1, s2);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let n1 = dot(w1, w1);
    let n2 = dot(w2, w2);
    let mut out = 0.0;
    let (mut r1, mut r2) = (0.0, 0.0);
    if n1 > 0.0 {
        r1 = dot(z, w1) / s1;
        out += d.d11 * r1 * r1 + d.d1 / s1 * (n1 - r1 * r1);
    }
    if n2 > 0.0 {
        r2 = dot(e, w2) / s2;
        out += d.d22 * r2 * r2 + d.d2 / s2 * (n2 - r2 * r2);
    }
    if n1 > 0.0 && n2 > 0.0 {
        out += 2.0 * d.d12 * r1 * r2;
    }
    0.5 * out
}

fn fd_step(xi: &[f64]) -> f64 {
    1e-5 * (1.0 + norm(xi))
}

/// Gradient of `B` by central differences.
pub fn grad_b_fd(params: &BellmanParams, pt: &BellmanPoint) -> Result<Vec<f64>> {
    pt.check_dims(params)?;
    let xi = pt.xi();
    let h = fd_step(&xi);
    Ok((0..xi.len())
        .map(|a| {
            let mut up = xi.clone();
            let mut dn = xi.clone();
            up[a] += h;
            dn[a] -= h;
            (b_unchecked(params, &up) - b_unchecked(params, &dn)) / (2.0 * h)
        })
        .collect())
}

/// Hessian of `B` by central differences of the analytic gradient.
pub fn hess_b_fd(params: &BellmanParams, pt: &BellmanPoint) -> Result<Mat> {
    pt.check_dims(params)?;
    let xi = pt.xi();
    let n = xi.len();
    let h = fd_step(&xi);
    let mut out = Mat::zeros(n, n);
    let (mut gu, mut gd) = (vec![0.0; n], vec![0.0; n]);
    for b in 0..n {
        let mut up = xi.clone();
        let mut dn = xi.clone();
        up[b] += h;
        dn[b] -= h;
        grad_unchecked(params, &up, &mut gu);
        grad_unchecked(params, &dn, &mut gd);
        for a in 0..n {
            out.set(a, b, (gu[a] - gd[a]) / (2.0 * h));
        }
    }
    // symmetrize
    for a in 0..n {
        for b in 0..a {
            let m = 0.5 * (out.get(a, b) + out.get(b, a));
            out.set(a, b, m);
            out.set(b, a, m);
        }
    }
    Ok(out)
}

// --- mollification -----------------------------------------------------------

/// Quadrature for `int_{|s| < 1} f(s) psi(s) ds` with the normalized bump
/// `psi = c_m exp(-1 / (1 - |s|^2))`. The rule is invariant under every
/// coordinate reflection.
#[derive(Debug, Clone)]
pub struct MollifierRule {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    /// Weights including `psi`; they sum to one.
    pub weights: Vec<f64>,
    /// `c_m = 1 / int exp(-1 / (1 - |s|^2)) ds`.
    pub normalizer: f64,
}

fn reflected_angles(n: usize, half: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    // Gauss–Legendre on [0, half], mirrored to [0, 2 half]
    let base = gauss_legendre(n, 0.0, half)?;
    let mut a = Vec::with_capacity(2 * n);
    let mut w = Vec::with_capacity(2 * n);
    for (t, wt) in base.nodes.iter().zip(&base.weights) {
        a.push(*t);
        w.push(*wt);
        a.push(2.0 * half - t);
        w.push(*wt);
    }
    Ok((a, w))
}

impl MollifierRule {
    /// `nr` radial nodes and `na` angular nodes per quarter arc.
    pub fn new(dim: usize, nr: usize, na: usize) -> Result<Self> {
        use std::f64::consts::PI;
        let radial = gauss_legendre(nr, 0.0, 1.0)?;
        let bump = |r: f64| (-1.0 / (1.0 - r * r)).exp();
        let mut points = Vec::new();
        let mut raw = Vec::new();
        match dim {
            2 => {
                // theta on [0, pi] mirrored again to [0, 2 pi]
                let (half, hw) = reflected_angles(na, PI / 2.0)?;
                let theta: Vec<(f64, f64)> = half
                    .iter()
                    .zip(&hw)
                    .flat_map(|(&t, &w)| [(t, w), (2.0 * PI - t, w)])
                    .collect();
                for (r, wr) in radial.nodes.iter().zip(&radial.weights) {
                    for (t, wt) in &theta {
                        points.push(vec![r * t.cos(), r * t.sin()]);
                        raw.push(wr * wt * r * bump(*r));
                    }
                }
            }
            3 => {
                let (phi, wphi) = reflected_angles(na, PI / 2.0)?;
                let (half, hw) = reflected_angles(na, PI / 2.0)?;
                let theta: Vec<(f64, f64)> = half
                    .iter()
                    .zip(&hw)
                    .flat_map(|(&t, &w)| [(t, w), (2.0 * PI - t, w)])
                    .collect();
                for (r, wr) in radial.nodes.iter().zip(&radial.weights) {
                    for (f, wf) in phi.iter().zip(&wphi) {
                        for (t, wt) in &theta {
                            let (sf, cf) = f.sin_cos();
                            points.push(vec![r * cf, r * sf * t.cos(), r * sf * t.sin()]);
                            raw.push(wr * wf * wt * r * r * sf * bump(*r));
                        }
                    }
                }
            }
            other => {
                return Err(LabError::Unsupported(format!(
                    "mollification is implemented for m1 + m2 in {{2, 3}}, got {other}"
                )))
            }
        }
        let total: f64 = raw.iter().sum();
        Ok(MollifierRule {
            dim,
            points,
            weights: raw.iter().map(|w| w / total).collect(),
            normalizer: 1.0 / total,
        })
    }

    /// Resolution used by the property sweeps.
    pub fn standard(dim: usize) -> Result<Self> {
        MollifierRule::new(dim, 16, 6)
    }
}

fn check_mollified(params: &BellmanParams, rule: &MollifierRule) -> Result<()> {
    if params.dim() > 3 {
        return Err(LabError::Unsupported(format!("m1 + m2 = {} exceeds 3", params.dim())));
    }
    if rule.dim != params.dim() {
        return Err(LabError::Argument("mollifier rule dimension mismatch".into()));
    }
    Ok(())
}

/// Mollified `B_kappa = B * psi_kappa` and its gradient, plus `E_kappa`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mollified {
    pub value: f64,
    pub grad: Vec<f64>,
    pub e_kappa: f64,
}

/// `B_kappa(xi)`, `grad B_kappa(xi)` and
/// `E_kappa(xi) = -int <grad B(xi - kappa s), s> psi(s) ds`.
pub fn mollify(params: &BellmanParams, pt: &BellmanPoint, rule: &MollifierRule) -> Result<Mollified> {
    pt.check_dims(params)?;
    check_mollified(params, rule)?;
    let xi = pt.xi();
    let n = xi.len();
    let k = params.kappa;
    let mut value = 0.0;
    let mut grad = vec![0.0; n];
    let mut e = 0.0;
    let mut y = vec![0.0; n];
    let mut g = vec![0.0; n];
    for (s, w) in rule.points.iter().zip(&rule.weights) {
        for a in 0..n {
            y[a] = xi[a] - k * s[a];
        }
        value += w * b_unchecked(params, &y);
        grad_unchecked(params, &y, &mut g);
        for a in 0..n {
            grad[a] += w * g[a];
        }
        e -= w * g.iter().zip(s).map(|(gi, si)| gi * si).sum::<f64>();
    }
    Ok(Mollified { value, grad, e_kappa: e })
}

pub fn mollified_b(params: &BellmanParams, pt: &BellmanPoint, rule: &MollifierRule) -> Result<f64> {
    Ok(mollify(params, pt, rule)?.value)
}

pub fn e_kappa(params: &BellmanParams, pt: &BellmanPoint, rule: &MollifierRule) -> Result<f64> {
    Ok(mollify(params, pt, rule)?.e_kappa)
}

/// Hessian of `B_kappa`: the mollified piecewise Hessian, skipping nodes that
/// land exactly on a coordinate subspace.
pub fn mollified_hess(params: &BellmanParams, pt: &BellmanPoint, rule: &MollifierRule) -> Result<Mat> {
    pt.check_dims(params)?;
    check_mollified(params, rule)?;
    let xi = pt.xi();
    let n = xi.len();
    let mut out = Mat::zeros(n, n);
    let mut y = vec![0.0; n];
    for (s, w) in rule.points.iter().zip(&rule.weights) {
        for a in 0..n {
            y[a] = xi[a] - params.kappa * s[a];
        }
        if norm(&y[..params.m1]) == 0.0 || norm(&y[params.m1..]) == 0.0 {
            continue;
        }
        let h = hess_unchecked(params, &y);
        for (o, v) in out.data.iter_mut().zip(&h.data) {
            *o += w * v;
        }
    }
    Ok(out)
}

// --- property checks -----------------------------------------------------------

/// Outcome of a pointwise inequality check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginReport {
    /// Worst value of (left side - right side), unnormalized.
    pub raw_margin: f64,
    /// Worst margin divided by `max(1, scale)` of the compared quantities.
    pub margin: f64,
}

/// Minimum over unit `omega` of `<H omega, omega> - gamma |omega_1| |omega_2|`
/// for a bi-radial Hessian, reduced to the radial/tangential angles.
fn biradial_am_gm_min(params: &BellmanParams, s1: f64, s2: f64) -> f64 {
    let d = beta_derivs(params, s1, s2);
    let (a1, t1) = (0.5 * d.d11, 0.5 * d.d1 / s1);
    let (a2, t2) = (0.5 * d.d22, 0.5 * d.d2 / s2);
    let cross = 0.5 * d.d12.abs();
    let g = params.gamma;
    // u_i = cos^2 of the angle between omega_i and the radial direction
    let value = |u1: f64, u2: f64| {
        let a = a1 * u1 + t1 * (1.0 - u1);
        let c = a2 * u2 + t2 * (1.0 - u2);
        let b = 2.0 * cross * (u1 * u2).sqrt() + g;
        0.5 * (a + c) - ((0.5 * (a - c)).powi(2) + 0.25 * b * b).sqrt()
    };
    let range1: Vec<f64> = if params.m1 == 1 { vec![1.0] } else { (0..=40).map(|j| j as f64 / 40.0).collect() };
    let range2: Vec<f64> = if params.m2 == 1 { vec![1.0] } else { (0..=40).map(|j| j as f64 / 40.0).collect() };
    let mut best = (f64::INFINITY, 1.0, 1.0);
    for &u1 in &range1 {
        for &u2 in &range2 {
            let v = value(u1, u2);
            if v < best.0 {
                best = (v, u1, u2);
            }
        }
    }
    // local refinement around the grid minimizer
    let mut step = 1.0 / 40.0;
    let (mut v, mut u1, mut u2) = best;
    for _ in 0..30 {
        step *= 0.5;
        for (du1, du2) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let n1 = if params.m1 == 1 { 1.0 } else { (u1 + du1).clamp(0.0, 1.0) };
            let n2 = if params.m2 == 1 { 1.0 } else { (u2 + du2).clamp(0.0, 1.0) };
            let nv = value(n1, n2);
            if nv < v {
                v = nv;
                u1 = n1;
                u2 = n2;
            }
        }
    }
    v
}

fn random_unit(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let r = norm(&v);
        if r > 1e-12 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

fn quad_form(h: &Mat, w: &[f64]) -> f64 {
    h.matvec(w).iter().zip(w).map(|(a, b)| a * b).sum()
}

/// `<Hess B(xi) omega, omega> - gamma |omega_1| |omega_2|` minimized over unit
/// `omega`: exact reduction over the radial/tangential angles plus `trials`
/// random directions through the full matrix.
pub fn check_hess_lower(
    params: &BellmanParams,
    pt: &BellmanPoint,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<MarginReport> {
    let h = hess_b(params, pt)?;
    let mut worst = biradial_am_gm_min(params, pt.s1(), pt.s2());
    worst = worst.min(sampled_am_gm_min(params, &h, trials, rng));
    let scale = h.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(params.gamma);
    Ok(MarginReport { raw_margin: worst, margin: worst / scale.max(1.0) })
}

fn sampled_am_gm_min(params: &BellmanParams, h: &Mat, trials: usize, rng: &mut impl Rng) -> f64 {
    let n = params.dim();
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let w = random_unit(rng, n);
        let v = quad_form(h, &w) - params.gamma * norm(&w[..params.m1]) * norm(&w[params.m1..]);
        worst = worst.min(v);
    }
    worst
}

/// Same as [`check_hess_lower`] for the mollified Hessian (random directions only).
pub fn check_hess_lower_mollified(
    params: &BellmanParams,
    pt: &BellmanPoint,
    rule: &MollifierRule,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<MarginReport> {
    let h = mollified_hess(params, pt, rule)?;
    let worst = sampled_am_gm_min(params, &h, trials, rng);
    let scale = h.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(params.gamma);
    Ok(MarginReport { raw_margin: worst, margin: worst / scale.max(1.0) })
}

/// `<grad B_kappa(xi), xi> + kappa E_kappa(xi) - gamma |zeta| |eta|`.
pub fn check_grad_radial(params: &BellmanParams, pt: &BellmanPoint, rule: &MollifierRule) -> Result<MarginReport> {
    let m = mollify(params, pt, rule)?;
    let xi = pt.xi();
    let radial: f64 = m.grad.iter().zip(&xi).map(|(g, x)| g * x).sum();
    let lhs = radial + params.kappa * m.e_kappa;
    let rhs = params.gamma * pt.s1() * pt.s2();
    let raw = lhs - rhs;
    Ok(MarginReport { raw_margin: raw, margin: raw / lhs.abs().max(rhs).max(1.0) })
}

/// Unmollified radial-gradient margin `<grad B(xi), xi> - gamma |zeta| |eta|`.
pub fn check_grad_radial_sharp(params: &BellmanParams, pt: &BellmanPoint) -> Result<MarginReport> {
    let g = grad_b(params, pt)?;
    let xi = pt.xi();
    let lhs: f64 = g.iter().zip(&xi).map(|(a, b)| a * b).sum();
    let rhs = params.gamma * pt.s1() * pt.s2();
    let raw = lhs - rhs;
    Ok(MarginReport { raw_margin: raw, margin: raw / lhs.abs().max(rhs).max(1.0) })
}

/// Ratio `|E_kappa| / (|zeta|^{p-1} + |eta| + |eta|^{q-1} + kappa^{q-1})`; its
/// supremum over samples estimates the growth constant.
pub fn e_kappa_growth_ratio(params: &BellmanParams, pt: &BellmanPoint, rule: &MollifierRule) -> Result<f64> {
    let e = e_kappa(params, pt, rule)?;
    let (s1, s2) = (pt.s1(), pt.s2());
    let envelope =
        s1.powf(params.p - 1.0) + s2 + s2.powf(params.q - 1.0) + params.kappa.powf(params.q - 1.0);
    Ok(e.abs() / envelope)
}

/// Random point with log-uniform radii in `[e^lo, e^hi]` and uniform directions.
pub fn random_point(params: &BellmanParams, rng: &mut impl Rng, lo: f64, hi: f64) -> BellmanPoint {
    let s1 = rng.gen_range(lo..hi).exp();
    let s2 = rng.gen_range(lo..hi).exp();
    let z = random_unit(rng, params.m1).into_iter().map(|v| v * s1).collect();
    let e = random_unit(rng, params.m2).into_iter().map(|v| v * s2).collect();
    BellmanPoint::new(z, e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(p: f64, m1: usize, m2: usize) -> BellmanParams {
        BellmanParams::new(p, m1, m2, 0.0).unwrap()
    }

    #[test]
    fn constructor() {
        let b = params(2.0, 1, 1);
        assert_eq!((b.p, b.q, b.gamma), (2.0, 2.0, 0.25));
        let s = params(1.5, 1, 2);
        assert!((s.p - 3.0).abs() < 1e-15 && (s.q - 1.5).abs() < 1e-15 && s.swapped);
        assert!(BellmanParams::new(1.0, 1, 1, 0.0).is_err());
        assert!(BellmanParams::new(3.0, 0, 1, 0.0).is_err());
        assert!(BellmanParams::new(3.0, 1, 1, 1.0).is_err());
        for p in [2.0, 3.0, 6.0, 50.0] {
            let g = params(p, 1, 1).gamma;
            assert!(g > 0.0 && g <= 0.25);
        }
    }

    #[test]
    fn beta_examples() {
        let b = params(2.0, 1, 1);
        assert_eq!(beta(&b, 0.0, 0.0).unwrap(), 0.0);
        assert!((beta(&b, 1.0, 2.0).unwrap() - 5.25).abs() < 1e-15);
        assert!(beta(&b, -1.0, 0.0).is_err());
    }

    #[test]
    fn branches_match_on_interface() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let p: f64 = rng.gen_range(2.0..8.0);
            let b = params(p, 1, 1);
            let s2: f64 = rng.gen_range(0.05..5.0);
            let s1 = s2.powf(b.q / b.p);
            let g = b.gamma;
            let q = b.q;
            let br1 = s1.powf(p) + s2.powf(q) + g * s1 * s1 * s2.powf(2.0 - q);
            let br2 = (1.0 + 2.0 * g / p) * s1.powf(p) + (1.0 + g * (2.0 / q - 1.0)) * s2.powf(q);
            assert!((br1 - br2).abs() < 1e-12 * br1, "{br1} {br2}");
            // first derivatives agree across the interface
            let up = beta_derivs(&b, s1 * (1.0 + 1e-9), s2);
            let dn = beta_derivs(&b, s1 * (1.0 - 1e-9), s2);
            assert!(!up.first_branch && dn.first_branch);
            assert!((up.d1 - dn.d1).abs() < 1e-6 * (1.0 + up.d1.abs()));
            assert!((up.d2 - dn.d2).abs() < 1e-6 * (1.0 + up.d2.abs()));
        }
    }

    #[test]
    fn gradient_zero_in_zeta_on_axis() {
        let b = params(3.0, 2, 1);
        let g = grad_b(&b, &BellmanPoint::new(vec![0.0, 0.0], vec![1.3])).unwrap();
        assert_eq!(&g[..2], &[0.0, 0.0]);
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for p in [2.0, 3.0, 6.0] {
            for (m1, m2) in [(1, 1), (1, 2), (2, 1)] {
                let b = params(p, m1, m2);
                let mut checked = 0;
                while checked < 50 {
                    let pt = random_point(&b, &mut rng, -1.5, 1.0);
                    if singular_distance(&b, pt.s1(), pt.s2()) < 1e-2 {
                        continue;
                    }
                    checked += 1;
                    let ga = grad_b(&b, &pt).unwrap();
                    let gf = grad_b_fd(&b, &pt).unwrap();
                    let scale = 1.0 + ga.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    for (a, f) in ga.iter().zip(&gf) {
                        assert!((a - f).abs() < 1e-6 * scale, "grad p={p}: {a} vs {f}");
                    }
                    let ha = hess_b(&b, &pt).unwrap();
                    let hf = hess_b_fd(&b, &pt).unwrap();
                    let scale = 1.0 + ha.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    for (a, f) in ha.data.iter().zip(&hf.data) {
                        assert!((a - f).abs() < 1e-5 * scale, "hess p={p} m=({m1},{m2}): {a} vs {f}");
                    }
                    // directional second difference of B itself
                    let w = random_unit(&mut rng, b.dim());
                    let xi = pt.xi();
                    let h = 1e-4 * (1.0 + norm(&xi));
                    let sh = |t: f64| {
                        let y: Vec<f64> = xi.iter().zip(&w).map(|(x, d)| x + t * d).collect();
                        b_unchecked(&b, &y)
                    };
                    let num = (sh(h) - 2.0 * sh(0.0) + sh(-h)) / (h * h);
                    let ana = quad_form(&ha, &w);
                    assert!((num - ana).abs() < 1e-5 * (ana.abs() + sh(0.0)).max(1.0), "{num} {ana}");
                }
            }
        }
    }

    #[test]
    fn hessian_refused_near_singular_set() {
        let b = params(3.0, 1, 1);
        let on_iface = BellmanPoint::new(vec![1.0], vec![1.0]);
        assert!(matches!(hess_b(&b, &on_iface), Err(LabError::SingularRegion(_))));
        let on_axis = BellmanPoint::new(vec![1.0], vec![0.0]);
        assert!(hess_b(&b, &on_axis).is_err());
    }

    #[test]
    fn biradial_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = params(4.0, 2, 2);
        for _ in 0..100 {
            let pt = random_point(&b, &mut rng, -2.0, 2.0);
            let (t1, t2): (f64, f64) = (rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3));
            let rot = |v: &[f64], t: f64| vec![t.cos() * v[0] - t.sin() * v[1], t.sin() * v[0] + t.cos() * v[1]];
            let moved = BellmanPoint::new(rot(&pt.zeta, t1), rot(&[pt.eta[0], -pt.eta[1]], t2));
            let (a, c) = (bellman_b(&b, &pt).unwrap(), bellman_b(&b, &moved).unwrap());
            assert!((a - c).abs() < 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn size_and_sign_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for p in [2.0, 3.0, 6.0] {
            let b = params(p, 1, 1);
            for _ in 0..2000 {
                let (s1, s2) = (rng.gen_range(-4.0f64..2.0).exp(), rng.gen_range(-4.0f64..2.0).exp());
                let d = beta_derivs(&b, s1, s2);
                assert!(d.value >= 0.0);
                assert!(d.value <= (1.0 + b.gamma) * (s1.powf(b.p) + s2.powf(b.q)) * (1.0 + 1e-14));
                assert!(d.d1 >= 0.0 && d.d2 >= 0.0);
            }
        }
    }

    #[test]
    fn hessian_am_gm_margin() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in [2.0, 3.0, 6.0] {
            for (m1, m2) in [(1, 1), (1, 2)] {
                let b = params(p, m1, m2);
                let mut n = 0;
                while n < 300 {
                    let pt = random_point(&b, &mut rng, -3.0, 2.0);
                    let Ok(rep) = check_hess_lower(&b, &pt, 8, &mut rng) else { continue };
                    n += 1;
                    assert!(rep.margin >= -1e-8, "p={p} ({m1},{m2}) at {pt:?}: {rep:?}");
                }
            }
        }
    }

    #[test]
    fn quad_form_matches_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = params(3.0, 1, 2);
        for _ in 0..50 {
            let pt = random_point(&b, &mut rng, -2.0, 1.0);
            let Ok(h) = hess_b(&b, &pt) else { continue };
            let w = random_unit(&mut rng, 3);
            let a = hess_quad_form(&b, &pt.xi(), &w);
            assert!((a - quad_form(&h, &w)).abs() < 1e-10 * (1.0 + a.abs()));
        }
        // eta = 0 with omega supported on zeta
        let q = hess_quad_form(&b, &[2.0, 0.0, 0.0], &[1.0, 0.0, 0.0]);
        let want = 0.5 * (3.0 + 2.0 * b.gamma) * 2.0 * 2.0;
        assert!((q - want).abs() < 1e-12);
    }

    #[test]
    fn degenerate_direction_reduces_to_convexity() {
        let b = params(3.0, 1, 1);
        let pt = BellmanPoint::new(vec![0.4], vec![1.7]);
        let h = hess_b(&b, &pt).unwrap();
        assert!(quad_form(&h, &[1.0, 0.0]) >= 0.0);
        assert!(quad_form(&h, &[0.0, 1.0]) >= 0.0);
    }

    #[test]
    fn mollifier_normalization_is_resolution_stable() {
        for dim in [2, 3] {
            let coarse = MollifierRule::new(dim, 40, 12).unwrap();
            let fine = MollifierRule::new(dim, 80, 24).unwrap();
            assert!((coarse.normalizer - fine.normalizer).abs() < 1e-10 * fine.normalizer);
            assert!((coarse.weights.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        }
        assert!(matches!(MollifierRule::new(4, 4, 2), Err(LabError::Unsupported(_))));
        let b = BellmanParams::new(3.0, 2, 2, 0.1).unwrap();
        let r = MollifierRule::standard(3).unwrap();
        let pt = BellmanPoint::new(vec![1.0, 0.0], vec![0.0, 1.0]);
        assert!(mollify(&b, &pt, &r).is_err());
    }

    #[test]
    fn mollified_value_converges_to_b() {
        let pt = BellmanPoint::new(vec![0.7], vec![1.9]);
        let rule = MollifierRule::standard(2).unwrap();
        let b0 = bellman_b(&params(3.0, 1, 1), &pt).unwrap();
        let err = |k: f64| {
            let b = BellmanParams::new(3.0, 1, 1, k).unwrap();
            (mollified_b(&b, &pt, &rule).unwrap() - b0).abs()
        };
        assert!(err(0.01) < err(0.1));
        assert!(err(0.01) < 1e-3);
    }

    #[test]
    fn e_kappa_at_origin_is_resolution_stable() {
        for (m1, m2) in [(1, 1), (1, 2)] {
            let b = BellmanParams::new(3.0, m1, m2, 0.1).unwrap();
            let pt = BellmanPoint::new(vec![0.0; m1], vec![0.0; m2]);
            let a = e_kappa(&b, &pt, &MollifierRule::new(m1 + m2, 40, 12).unwrap()).unwrap();
            let c = e_kappa(&b, &pt, &MollifierRule::new(m1 + m2, 80, 24).unwrap()).unwrap();
            assert!((a - c).abs() < 1e-6 * (1.0 + a.abs()), "{a} {c}");
        }
    }

    #[test]
    fn radial_margin_with_mollification() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for p in [2.0, 3.0, 6.0] {
            for (m1, m2) in [(1, 1), (1, 2)] {
                let b = BellmanParams::new(p, m1, m2, 0.01).unwrap();
                let rule = MollifierRule::standard(m1 + m2).unwrap();
                for _ in 0..100 {
                    let pt = random_point(&b, &mut rng, -3.0, 2.0);
                    let rep = check_grad_radial(&b, &pt, &rule).unwrap();
                    assert!(rep.margin >= -1e-6, "{rep:?}");
                    // reflecting eta leaves the margin unchanged
                    let flipped = BellmanPoint::new(pt.zeta.clone(), pt.eta.iter().map(|v| -v).collect());
                    let rep2 = check_grad_radial(&b, &flipped, &rule).unwrap();
                    assert!((rep.raw_margin - rep2.raw_margin).abs() < 1e-9 * (1.0 + rep.raw_margin.abs()));
                }
                let origin = BellmanPoint::new(vec![0.0; m1], vec![0.0; m2]);
                assert!(check_grad_radial(&b, &origin, &rule).unwrap().margin >= -1e-6);
            }
        }
    }
}
