//! One-dimensional orthogonal systems.
//!
//! Each [`AxisSystem`] carries an operator `delta = p d/dx + q` on an open
//! interval with measure `w(x) dx`, the orthonormal eigenbasis of
//! `delta^* delta + a`, its eigenvalues and the closed-form action of
//! `delta` on the basis (the "ladder").
//!
//! Seven families are supported: Hermite, Laguerre and Jacobi polynomials
//! under their probability measures, and Hermite functions, Laguerre
//! functions of Hermite and convolution type, and Jacobi functions under
//! Lebesgue-type measures. Function families are evaluated as a polynomial
//! part (in an auxiliary variable `u`) times an envelope, with the envelope
//! combined in log-space.
//!
//! Sign conventions: orthonormal Hermite and Jacobi polynomials have a
//! positive leading coefficient; Laguerre polynomials use the standard
//! sign, i.e. they are positive at the origin.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{LabError, Result};

/// Evaluation requests closer than this to a finite endpoint are rejected.
pub const EDGE_EXCLUSION: f64 = 1e-12;

/// Default cap on the polynomial degree an [`AxisSystem`] accepts.
pub const DEFAULT_MAX_DEGREE: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    HermitePoly,
    LaguerrePoly { alpha: f64 },
    JacobiPoly { alpha: f64, beta: f64 },
    HermiteFunc,
    /// Laguerre functions of Hermite type on `(0, inf)` with Lebesgue measure.
    LaguerreFuncH { alpha: f64 },
    /// Laguerre functions of convolution type, measure `x^(2 alpha + 1) dx`.
    LaguerreFuncConv { alpha: f64 },
    JacobiFunc { alpha: f64, beta: f64 },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::HermitePoly => "hermite-poly",
            Family::LaguerrePoly { .. } => "laguerre-poly",
            Family::JacobiPoly { .. } => "jacobi-poly",
            Family::HermiteFunc => "hermite-func",
            Family::LaguerreFuncH { .. } => "laguerre-func-hermite",
            Family::LaguerreFuncConv { .. } => "laguerre-func-conv",
            Family::JacobiFunc { .. } => "jacobi-func",
        }
    }

    /// Parse a family from its CLI name and optional parameters.
    pub fn from_name(name: &str, alpha: Option<f64>, beta: Option<f64>) -> Result<Family> {
        let need_alpha = || {
            alpha.ok_or_else(|| LabError::Argument(format!("family {name} needs --alpha")))
        };
        let need_beta =
            || beta.ok_or_else(|| LabError::Argument(format!("family {name} needs --beta")));
        let fam = match name {
            "hermite-poly" | "ou" => Family::HermitePoly,
            "laguerre-poly" => Family::LaguerrePoly { alpha: need_alpha()? },
            "jacobi-poly" => Family::JacobiPoly { alpha: need_alpha()?, beta: need_beta()? },
            "hermite-func" | "harm-osc" => Family::HermiteFunc,
            "laguerre-func-hermite" => Family::LaguerreFuncH { alpha: need_alpha()? },
            "laguerre-func-conv" => Family::LaguerreFuncConv { alpha: need_alpha()? },
            "jacobi-func" => Family::JacobiFunc { alpha: need_alpha()?, beta: need_beta()? },
            other => return Err(LabError::Argument(format!("unknown system '{other}'"))),
        };
        Ok(fam)
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            Family::LaguerrePoly { alpha }
            | Family::LaguerreFuncH { alpha }
            | Family::LaguerreFuncConv { alpha }
            | Family::JacobiPoly { alpha, .. }
            | Family::JacobiFunc { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    pub fn beta(&self) -> Option<f64> {
        match *self {
            Family::JacobiPoly { beta, .. } | Family::JacobiFunc { beta, .. } => Some(beta),
            _ => None,
        }
    }

    pub fn is_polynomial(&self) -> bool {
        matches!(
            self,
            Family::HermitePoly | Family::LaguerrePoly { .. } | Family::JacobiPoly { .. }
        )
    }

    /// Parameters inside the basic range where the system is defined at all.
    pub fn check_basic_range(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(LabError::Parameter(format!("{} requires {what} > -1, got {v}", self.name())))
        };
        if let Some(a) = self.alpha() {
            if !(a > -1.0) || !a.is_finite() {
                return bad("alpha", a);
            }
        }
        if let Some(b) = self.beta() {
            if !(b > -1.0) || !b.is_finite() {
                return bad("beta", b);
            }
        }
        Ok(())
    }

    /// Whether the parameters fall in the range covered by the dimension-free bounds.
    pub fn theorem_range(&self) -> bool {
        match *self {
            Family::HermitePoly | Family::HermiteFunc => true,
            Family::LaguerrePoly { alpha } | Family::LaguerreFuncConv { alpha } => alpha >= -0.5,
            Family::LaguerreFuncH { alpha } => alpha > 0.5,
            Family::JacobiPoly { alpha, beta } => alpha >= -0.5 && beta >= -0.5,
            Family::JacobiFunc { alpha, beta } => alpha >= 0.5 && beta >= 0.5,
        }
    }

    /// Family with parameters shifted by one, the target of the ladder.
    pub fn shifted(&self) -> Family {
        match *self {
            Family::HermitePoly => Family::HermitePoly,
            Family::HermiteFunc => Family::HermiteFunc,
            Family::LaguerrePoly { alpha } => Family::LaguerrePoly { alpha: alpha + 1.0 },
            Family::LaguerreFuncH { alpha } => Family::LaguerreFuncH { alpha: alpha + 1.0 },
            Family::LaguerreFuncConv { alpha } => Family::LaguerreFuncConv { alpha: alpha + 1.0 },
            Family::JacobiPoly { alpha, beta } => {
                Family::JacobiPoly { alpha: alpha + 1.0, beta: beta + 1.0 }
            }
            Family::JacobiFunc { alpha, beta } => {
                Family::JacobiFunc { alpha: alpha + 1.0, beta: beta + 1.0 }
            }
        }
    }

    /// The constant `K` with `q^2 <= K r` claimed for this family.
    pub fn assumption_constant(&self) -> f64 {
        match *self {
            Family::HermitePoly | Family::LaguerrePoly { .. } | Family::JacobiPoly { .. } => 0.0,
            Family::HermiteFunc | Family::LaguerreFuncConv { .. } | Family::JacobiFunc { .. } => {
                1.0
            }
            Family::LaguerreFuncH { alpha } => {
                if alpha > 0.5 {
                    (alpha + 0.5) / (alpha - 0.5)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    fn aux_measure(&self) -> PolyMeasure {
        match *self {
            Family::HermitePoly | Family::HermiteFunc => PolyMeasure::Hermite,
            Family::LaguerrePoly { alpha }
            | Family::LaguerreFuncH { alpha }
            | Family::LaguerreFuncConv { alpha } => PolyMeasure::Laguerre { alpha },
            Family::JacobiPoly { alpha, beta } | Family::JacobiFunc { alpha, beta } => {
                PolyMeasure::Jacobi { alpha, beta }
            }
        }
    }

    /// Map from the axis variable `x` to the auxiliary polynomial variable `u`.
    pub fn aux_map(&self) -> AuxMap {
        match self {
            Family::HermitePoly | Family::LaguerrePoly { .. } | Family::JacobiPoly { .. } => {
                AuxMap::Identity
            }
            Family::HermiteFunc => AuxMap::Identity,
            Family::LaguerreFuncH { .. } | Family::LaguerreFuncConv { .. } => AuxMap::Square,
            Family::JacobiFunc { .. } => AuxMap::Cosine,
        }
    }
}

/// How the polynomial variable `u` is obtained from the axis variable `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxMap {
    Identity,
    /// `u = x^2` on `(0, inf)`
    Square,
    /// `u = cos x` on `(0, pi)`
    Cosine,
}

impl AuxMap {
    pub fn to_aux(&self, x: f64) -> f64 {
        match self {
            AuxMap::Identity => x,
            AuxMap::Square => x * x,
            AuxMap::Cosine => x.cos(),
        }
    }

    pub fn from_aux(&self, u: f64) -> f64 {
        match self {
            AuxMap::Identity => u,
            AuxMap::Square => u.sqrt(),
            AuxMap::Cosine => u.acos(),
        }
    }
}

/// Probability measures of the three classical polynomial families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum PolyMeasure {
    /// `pi^{-1/2} e^{-u^2}` on R
    Hermite,
    /// `u^alpha e^{-u} / Gamma(alpha + 1)` on (0, inf)
    Laguerre { alpha: f64 },
    /// `(1-u)^alpha (1+u)^beta / C(alpha, beta)` on (-1, 1)
    Jacobi { alpha: f64, beta: f64 },
}

impl PolyMeasure {
    /// Diagonal Jacobi-matrix entry `a_n`.
    fn diag(&self, n: usize) -> f64 {
        let nf = n as f64;
        match *self {
            PolyMeasure::Hermite => 0.0,
            PolyMeasure::Laguerre { alpha } => 2.0 * nf + alpha + 1.0,
            PolyMeasure::Jacobi { alpha, beta } => {
                let s = alpha + beta;
                if n == 0 {
                    (beta - alpha) / (s + 2.0)
                } else {
                    (beta * beta - alpha * alpha) / ((2.0 * nf + s) * (2.0 * nf + s + 2.0))
                }
            }
        }
    }

    /// Off-diagonal entry `b_n`, `n >= 1`.
    fn offdiag(&self, n: usize) -> f64 {
        debug_assert!(n >= 1);
        let nf = n as f64;
        match *self {
            PolyMeasure::Hermite => (nf / 2.0).sqrt(),
            PolyMeasure::Laguerre { alpha } => (nf * (nf + alpha)).sqrt(),
            PolyMeasure::Jacobi { alpha, beta } => {
                let s = alpha + beta;
                if n == 1 {
                    (4.0 * (1.0 + alpha) * (1.0 + beta) / ((s + 2.0).powi(2) * (s + 3.0))).sqrt()
                } else {
                    let t = 2.0 * nf + s;
                    (4.0 * nf * (nf + alpha) * (nf + beta) * (nf + s)
                        / (t * t * (t + 1.0) * (t - 1.0)))
                        .sqrt()
                }
            }
        }
    }

    /// Orthonormal polynomials `P_0..=P_kmax` at `u`, each as (mantissa, log scale).
    fn eval_scaled(&self, kmax: usize, u: f64) -> Vec<(f64, f64)> {
        const BIG: f64 = 1e150;
        let mut out = Vec::with_capacity(kmax + 1);
        let mut prev = 0.0;
        let mut cur = 1.0;
        let mut log_scale = 0.0;
        out.push((cur, log_scale));
        for n in 0..kmax {
            let b_prev = if n == 0 { 0.0 } else { self.offdiag(n) };
            let next = ((u - self.diag(n)) * cur - b_prev * prev) / self.offdiag(n + 1);
            prev = cur;
            cur = next;
            if cur.abs() > BIG {
                cur /= BIG;
                prev /= BIG;
                log_scale += BIG.ln();
            }
            out.push((cur, log_scale));
        }
        out
    }
}

/// Measure type of an axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MeasureKind {
    WeightedPolynomialMeasure,
    LebesgueLike,
}

/// Function by which the shifted eigenfunction is multiplied in the ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Multiplier {
    One,
    SqrtX,
    SqrtOneMinusXSq,
    X,
}

impl Multiplier {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Multiplier::One => 1.0,
            Multiplier::SqrtX => x.sqrt(),
            Multiplier::SqrtOneMinusXSq => (1.0 - x * x).sqrt(),
            Multiplier::X => x,
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            Multiplier::One => 0.0,
            Multiplier::SqrtX => 0.5 / x.sqrt(),
            Multiplier::SqrtOneMinusXSq => -x / (1.0 - x * x).sqrt(),
            Multiplier::X => 1.0,
        }
    }
}

/// Closed-form image `delta phi_k = coefficient * multiplier * phi_{target_index}^{target}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderResult {
    pub coefficient: f64,
    pub target_family: Family,
    pub target_index: usize,
    pub multiplier: Multiplier,
}

/// A one-dimensional orthogonal system; immutable after construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSystem {
    pub family: Family,
    pub lo: f64,
    pub hi: f64,
    pub a: f64,
    pub measure_kind: MeasureKind,
    pub max_degree: usize,
}

impl AxisSystem {
    pub fn new(family: Family) -> Result<Self> {
        family.check_basic_range()?;
        let (lo, hi) = match family {
            Family::HermitePoly | Family::HermiteFunc => (f64::NEG_INFINITY, f64::INFINITY),
            Family::LaguerrePoly { .. }
            | Family::LaguerreFuncH { .. }
            | Family::LaguerreFuncConv { .. } => (0.0, f64::INFINITY),
            Family::JacobiPoly { .. } => (-1.0, 1.0),
            Family::JacobiFunc { .. } => (0.0, PI),
        };
        let a = match family {
            Family::HermitePoly | Family::LaguerrePoly { .. } | Family::JacobiPoly { .. } => 0.0,
            Family::HermiteFunc => 1.0,
            Family::LaguerreFuncH { alpha } | Family::LaguerreFuncConv { alpha } => {
                2.0 * alpha + 2.0
            }
            Family::JacobiFunc { alpha, beta } => (alpha + beta + 1.0).powi(2) / 4.0,
        };
        let measure_kind = if family.is_polynomial() {
            MeasureKind::WeightedPolynomialMeasure
        } else {
            MeasureKind::LebesgueLike
        };
        Ok(AxisSystem { family, lo, hi, a, measure_kind, max_degree: DEFAULT_MAX_DEGREE })
    }

    pub fn with_max_degree(mut self, max_degree: usize) -> Self {
        self.max_degree = max_degree;
        self
    }

    pub fn hermite_poly() -> Self {
        AxisSystem::new(Family::HermitePoly).expect("valid")
    }

    pub fn hermite_func() -> Self {
        AxisSystem::new(Family::HermiteFunc).expect("valid")
    }

    /// Target system of the ladder.
    pub fn shifted(&self) -> AxisSystem {
        AxisSystem::new(self.family.shifted())
            .expect("shifting parameters up keeps them valid")
            .with_max_degree(self.max_degree)
    }

    pub fn contains(&self, x: f64) -> bool {
        x.is_finite() && x > self.lo + EDGE_EXCLUSION && x < self.hi - EDGE_EXCLUSION
    }

    pub fn check_domain(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(LabError::Domain { x, lo: self.lo, hi: self.hi })
        }
    }

    fn check_degree(&self, k: usize) -> Result<()> {
        if k > self.max_degree {
            Err(LabError::Argument(format!("degree {k} exceeds cap {}", self.max_degree)))
        } else {
            Ok(())
        }
    }

    /// Log of the envelope multiplying the polynomial part, including normalization.
    fn log_envelope(&self, x: f64) -> f64 {
        match self.family {
            Family::HermitePoly | Family::LaguerrePoly { .. } | Family::JacobiPoly { .. } => 0.0,
            Family::HermiteFunc => -0.25 * PI.ln() - 0.5 * x * x,
            Family::LaguerreFuncH { alpha } => {
                0.5 * 2f64.ln() - 0.5 * ln_gamma(alpha + 1.0) + (alpha + 0.5) * x.ln()
                    - 0.5 * x * x
            }
            Family::LaguerreFuncConv { alpha } => {
                0.5 * 2f64.ln() - 0.5 * ln_gamma(alpha + 1.0) - 0.5 * x * x
            }
            Family::JacobiFunc { alpha, beta } => {
                -0.5 * ln_beta(alpha + 1.0, beta + 1.0)
                    + (alpha + 0.5) * (0.5 * x).sin().ln()
                    + (beta + 0.5) * (0.5 * x).cos().ln()
            }
        }
    }

    /// `phi_0(x) .. phi_kmax(x)` without domain checks.
    pub(crate) fn phi_all_unchecked(&self, kmax: usize, x: f64) -> Vec<f64> {
        let u = self.family.aux_map().to_aux(x);
        let env = self.log_envelope(x);
        let laguerre_sign = matches!(self.family.aux_measure(), PolyMeasure::Laguerre { .. });
        self.family
            .aux_measure()
            .eval_scaled(kmax, u)
            .into_iter()
            .enumerate()
            .map(|(n, (m, s))| {
                let sign = if laguerre_sign && n % 2 == 1 { -1.0 } else { 1.0 };
                sign * m * (s + env).exp()
            })
            .collect()
    }

    /// Value of the normalized eigenfunction `phi_k` at `x`.
    pub fn eval_phi(&self, k: usize, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        self.check_degree(k)?;
        Ok(self.phi_all_unchecked(k, x)[k])
    }

    /// Values of `phi_0 .. phi_kmax` at `x`.
    pub fn eval_phi_all(&self, kmax: usize, x: f64) -> Result<Vec<f64>> {
        self.check_domain(x)?;
        self.check_degree(kmax)?;
        Ok(self.phi_all_unchecked(kmax, x))
    }

    /// Eigenvalue of `phi_k` for `delta^* delta + a`.
    pub fn lambda(&self, k: usize) -> f64 {
        let kf = k as f64;
        match self.family {
            // -f'' + 2x f' has eigenvalues 2k on the orthonormal Hermite polynomials
            Family::HermitePoly => 2.0 * kf,
            Family::LaguerrePoly { .. } => kf,
            Family::JacobiPoly { alpha, beta } => kf * (kf + alpha + beta + 1.0),
            Family::HermiteFunc => 2.0 * kf + 1.0,
            Family::LaguerreFuncH { alpha } | Family::LaguerreFuncConv { alpha } => {
                4.0 * kf + 2.0 * alpha + 2.0
            }
            Family::JacobiFunc { alpha, beta } => (kf + (alpha + beta + 1.0) / 2.0).powi(2),
        }
    }

    /// Closed-form ladder action of `delta` on `phi_k`.
    pub fn ladder(&self, k: usize) -> LadderResult {
        let kf = k as f64;
        let target_family = self.family.shifted();
        let target_index = k.saturating_sub(1);
        let (coefficient, multiplier) = match self.family {
            Family::HermitePoly => ((2.0 * kf).sqrt(), Multiplier::One),
            Family::LaguerrePoly { alpha } => (-(kf / (alpha + 1.0)).sqrt(), Multiplier::SqrtX),
            Family::JacobiPoly { alpha, beta } => {
                let s = alpha + beta;
                let c = kf * (kf + s + 1.0) * (s + 2.0) * (s + 3.0)
                    / (4.0 * (alpha + 1.0) * (beta + 1.0));
                (c.sqrt(), Multiplier::SqrtOneMinusXSq)
            }
            Family::HermiteFunc => ((2.0 * kf).sqrt(), Multiplier::One),
            Family::LaguerreFuncH { .. } => (-2.0 * kf.sqrt(), Multiplier::One),
            Family::LaguerreFuncConv { .. } => (-2.0 * kf.sqrt(), Multiplier::X),
            Family::JacobiFunc { alpha, beta } => {
                (-(kf * (kf + alpha + beta + 1.0)).sqrt(), Multiplier::One)
            }
        };
        // k = 0 gives coefficient exactly 0 in every branch above.
        LadderResult { coefficient, target_family, target_index, multiplier }
    }

    /// `(delta phi_k)(x)` for `k = 0..=kmax`, from the ladder formulas.
    pub(crate) fn delta_phi_all_unchecked(&self, kmax: usize, x: f64) -> Vec<f64> {
        let target = self.shifted();
        let t = if kmax == 0 { vec![0.0] } else { target.phi_all_unchecked(kmax - 1, x) };
        (0..=kmax)
            .map(|k| {
                if k == 0 {
                    0.0
                } else {
                    let lad = self.ladder(k);
                    lad.coefficient * lad.multiplier.eval(x) * t[k - 1]
                }
            })
            .collect()
    }

    pub fn eval_delta_phi(&self, k: usize, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        self.check_degree(k)?;
        Ok(self.delta_phi_all_unchecked(k, x)[k])
    }

    /// Derivatives `phi_k'(x)`, recovered from `delta phi_k = p phi_k' + q phi_k`.
    pub(crate) fn dphi_all_unchecked(&self, kmax: usize, x: f64) -> Vec<f64> {
        let phi = self.phi_all_unchecked(kmax, x);
        let dphi = self.delta_phi_all_unchecked(kmax, x);
        let (p, q) = (self.p(x), self.q(x));
        phi.iter().zip(&dphi).map(|(f, df)| (df - q * f) / p).collect()
    }

    pub fn eval_dphi(&self, k: usize, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        self.check_degree(k)?;
        Ok(self.dphi_all_unchecked(k, x)[k])
    }

    /// Derivatives of the ladder images, `d/dx (delta phi_k)(x)`.
    pub(crate) fn d_delta_phi_all_unchecked(&self, kmax: usize, x: f64) -> Vec<f64> {
        if kmax == 0 {
            return vec![0.0];
        }
        let target = self.shifted();
        let t = target.phi_all_unchecked(kmax - 1, x);
        let dt = target.dphi_all_unchecked(kmax - 1, x);
        (0..=kmax)
            .map(|k| {
                if k == 0 {
                    0.0
                } else {
                    let lad = self.ladder(k);
                    let m = lad.multiplier;
                    lad.coefficient * (m.deriv(x) * t[k - 1] + m.eval(x) * dt[k - 1])
                }
            })
            .collect()
    }

    // --- coefficient fields -------------------------------------------------

    pub fn p(&self, x: f64) -> f64 {
        match self.family {
            Family::LaguerrePoly { .. } => x.sqrt(),
            Family::JacobiPoly { .. } => (1.0 - x * x).sqrt(),
            _ => 1.0,
        }
    }

    pub fn dp(&self, x: f64) -> f64 {
        match self.family {
            Family::LaguerrePoly { .. } => 0.5 / x.sqrt(),
            Family::JacobiPoly { .. } => -x / (1.0 - x * x).sqrt(),
            _ => 0.0,
        }
    }

    pub fn d2p(&self, x: f64) -> f64 {
        match self.family {
            Family::LaguerrePoly { .. } => -0.25 / (x * x.sqrt()),
            Family::JacobiPoly { .. } => -1.0 / (1.0 - x * x).powf(1.5),
            _ => 0.0,
        }
    }

    pub fn q(&self, x: f64) -> f64 {
        match self.family {
            Family::HermiteFunc | Family::LaguerreFuncConv { .. } => x,
            Family::LaguerreFuncH { alpha } => x - (alpha + 0.5) / x,
            Family::JacobiFunc { alpha, beta } => {
                -(2.0 * alpha + 1.0) / 4.0 / (0.5 * x).tan()
                    + (2.0 * beta + 1.0) / 4.0 * (0.5 * x).tan()
            }
            _ => 0.0,
        }
    }

    pub fn dq(&self, x: f64) -> f64 {
        match self.family {
            Family::HermiteFunc | Family::LaguerreFuncConv { .. } => 1.0,
            Family::LaguerreFuncH { alpha } => 1.0 + (alpha + 0.5) / (x * x),
            Family::JacobiFunc { alpha, beta } => {
                let (s, c) = (0.5 * x).sin_cos();
                (2.0 * alpha + 1.0) / (8.0 * s * s) + (2.0 * beta + 1.0) / (8.0 * c * c)
            }
            _ => 0.0,
        }
    }

    /// Density of the measure against Lebesgue measure.
    pub fn weight(&self, x: f64) -> f64 {
        match self.family {
            Family::HermitePoly => (-x * x).exp() / PI.sqrt(),
            Family::LaguerrePoly { alpha } => {
                (alpha * x.ln() - x - ln_gamma(alpha + 1.0)).exp()
            }
            Family::JacobiPoly { alpha, beta } => (alpha * (1.0 - x).ln()
                + beta * (1.0 + x).ln()
                - (alpha + beta + 1.0) * 2f64.ln()
                - ln_beta(alpha + 1.0, beta + 1.0))
            .exp(),
            Family::LaguerreFuncConv { alpha } => x.powf(2.0 * alpha + 1.0),
            Family::HermiteFunc | Family::LaguerreFuncH { .. } | Family::JacobiFunc { .. } => 1.0,
        }
    }

    /// Logarithmic derivative `w'/w`.
    pub fn dlogw(&self, x: f64) -> f64 {
        match self.family {
            Family::HermitePoly => -2.0 * x,
            Family::LaguerrePoly { alpha } => alpha / x - 1.0,
            Family::JacobiPoly { alpha, beta } => -alpha / (1.0 - x) + beta / (1.0 + x),
            Family::LaguerreFuncConv { alpha } => (2.0 * alpha + 1.0) / x,
            _ => 0.0,
        }
    }

    /// Derivative of `w'/w`.
    pub fn d2logw(&self, x: f64) -> f64 {
        match self.family {
            Family::HermitePoly => -2.0,
            Family::LaguerrePoly { alpha } => -alpha / (x * x),
            Family::JacobiPoly { alpha, beta } => {
                -alpha / (1.0 - x).powi(2) - beta / (1.0 + x).powi(2)
            }
            Family::LaguerreFuncConv { alpha } => -(2.0 * alpha + 1.0) / (x * x),
            _ => 0.0,
        }
    }

    /// Commutator `[delta, delta^*]` from the general formula in `p`, `q`, `w`.
    pub fn v_from_coefficients(&self, x: f64) -> f64 {
        let p = self.p(x);
        let d_pw = self.dp(x) * self.dlogw(x) + p * self.d2logw(x);
        p * (2.0 * self.dq(x) - d_pw - self.d2p(x))
    }

    /// Potential `r_i` from the general formula in `p`, `q`, `w`.
    pub fn r_from_coefficients(&self, x: f64) -> f64 {
        let (p, q) = (self.p(x), self.q(x));
        self.a + q * q - p * self.dq(x) - self.dp(x) * q - p * q * self.dlogw(x)
    }

    /// Commutator `v_i(x)` in simplified closed form.
    pub fn v_field(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok(self.v_closed(x))
    }

    pub(crate) fn v_closed(&self, x: f64) -> f64 {
        match self.family {
            Family::HermitePoly | Family::HermiteFunc => 2.0,
            Family::LaguerrePoly { alpha } => (alpha + 0.5 + x) / (2.0 * x),
            Family::JacobiPoly { alpha, beta } => {
                (alpha + 0.5) / (1.0 - x) + (beta + 0.5) / (1.0 + x)
            }
            Family::LaguerreFuncH { alpha } | Family::LaguerreFuncConv { alpha } => {
                2.0 + (2.0 * alpha + 1.0) / (x * x)
            }
            Family::JacobiFunc { alpha, beta } => {
                let (s, c) = (0.5 * x).sin_cos();
                (2.0 * alpha + 1.0) / (4.0 * s * s) + (2.0 * beta + 1.0) / (4.0 * c * c)
            }
        }
    }

    /// Per-axis potential `r_i(x)` in simplified closed form.
    pub fn r_field(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok(self.r_closed(x))
    }

    pub(crate) fn r_closed(&self, x: f64) -> f64 {
        match self.family {
            Family::HermitePoly | Family::LaguerrePoly { .. } | Family::JacobiPoly { .. } => 0.0,
            Family::HermiteFunc | Family::LaguerreFuncConv { .. } => x * x,
            Family::LaguerreFuncH { alpha } => x * x + (alpha * alpha - 0.25) / (x * x),
            Family::JacobiFunc { alpha, beta } => {
                let (s, c) = (0.5 * x).sin_cos();
                (4.0 * alpha * alpha - 1.0) / (16.0 * s * s)
                    + (4.0 * beta * beta - 1.0) / (16.0 * c * c)
            }
        }
    }

    pub fn q_field(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok(self.q(x))
    }

    pub fn p_field(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok(self.p(x))
    }

    /// Apply `L_i = -p^2 f'' - (p w'/w + 2 p') p f' + r f` given `f`, `f'`, `f''` at `x`.
    pub fn apply_generator(&self, x: f64, f: f64, df: f64, d2f: f64) -> f64 {
        let p = self.p(x);
        -p * p * d2f - (p * self.dlogw(x) + 2.0 * self.dp(x)) * p * df + self.r_closed(x) * f
    }

    /// Formal adjoint in `L^2(w dx)`: `delta^* g = -(p w g)'/w + q g`, from `g` and `g'` at `x`.
    pub fn apply_delta_adjoint(&self, x: f64, g: f64, dg: f64) -> f64 {
        let p = self.p(x);
        -p * dg - (self.dp(x) + p * self.dlogw(x)) * g + self.q(x) * g
    }

    /// Jacobi matrix `(diag, offdiag)` of the polynomial measure behind this axis.
    ///
    /// For function families this is the auxiliary measure in `u`
    /// (Hermite for Hermite functions, Laguerre in `u = x^2`, Jacobi in `u = cos x`).
    pub fn recurrence_coeffs(&self, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if n == 0 {
            return Err(LabError::Argument("recurrence needs n >= 1".into()));
        }
        let m = self.family.aux_measure();
        let diag = (0..n).map(|j| m.diag(j)).collect();
        let off = (1..n).map(|j| m.offdiag(j)).collect();
        Ok((diag, off))
    }

    /// Density of the auxiliary polynomial measure at `u`.
    pub(crate) fn aux_weight(&self, u: f64) -> f64 {
        match self.family.aux_measure() {
            PolyMeasure::Hermite => (-u * u).exp() / PI.sqrt(),
            PolyMeasure::Laguerre { alpha } => {
                (alpha * u.ln() - u - ln_gamma(alpha + 1.0)).exp()
            }
            PolyMeasure::Jacobi { alpha, beta } => (alpha * (1.0 - u).ln()
                + beta * (1.0 + u).ln()
                - (alpha + beta + 1.0) * 2f64.ln()
                - ln_beta(alpha + 1.0, beta + 1.0))
            .exp(),
        }
    }

    /// `d mu(x) / d nu(u)`: converts an auxiliary-measure Gauss weight at `u`
    /// into a weight for integration against this axis' measure at `x(u)`.
    pub(crate) fn aux_to_axis_weight(&self, u: f64) -> f64 {
        if self.family.is_polynomial() {
            return 1.0;
        }
        let map = self.family.aux_map();
        let x = map.from_aux(u);
        // |dx/du|
        let jac = match map {
            AuxMap::Identity => 1.0,
            AuxMap::Square => 0.5 / x,
            AuxMap::Cosine => 1.0 / (1.0 - u * u).sqrt(),
        };
        self.weight(x) * jac / self.aux_weight(u)
    }
}

pub(crate) fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_families() -> Vec<Family> {
        vec![
            Family::HermitePoly,
            Family::LaguerrePoly { alpha: 0.3 },
            Family::JacobiPoly { alpha: 0.2, beta: 1.4 },
            Family::HermiteFunc,
            Family::LaguerreFuncH { alpha: 1.5 },
            Family::LaguerreFuncConv { alpha: 0.4 },
            Family::JacobiFunc { alpha: 0.8, beta: 1.3 },
        ]
    }

    fn interior_points(sys: &AxisSystem) -> Vec<f64> {
        match sys.family {
            Family::HermitePoly | Family::HermiteFunc => vec![-2.3, -0.4, 0.7, 1.9],
            Family::JacobiPoly { .. } => vec![-0.8, -0.1, 0.35, 0.9],
            Family::JacobiFunc { .. } => vec![0.3, 1.1, 2.0, 2.9],
            Family::LaguerrePoly { .. } => vec![0.2, 1.3, 3.7, 7.5],
            _ => vec![0.25, 0.9, 1.6, 2.8],
        }
    }

    #[test]
    fn ground_states() {
        let h = AxisSystem::hermite_poly();
        assert_eq!(h.eval_phi(0, 0.7).unwrap(), 1.0);
        let l = AxisSystem::new(Family::LaguerrePoly { alpha: 0.0 }).unwrap();
        for x in [0.1, 1.0, 17.0] {
            assert!((l.eval_phi(0, x).unwrap() - 1.0).abs() < 1e-15);
        }
        // pi^{-1/4} e^{-1/2}, frozen from an mpmath evaluation
        let hf = AxisSystem::hermite_func();
        assert!((hf.eval_phi(0, 1.0).unwrap() - 0.455_580_672_011_332_5).abs() < 1e-15);
    }

    #[test]
    fn eigenvalue_examples() {
        assert_eq!(AxisSystem::hermite_poly().lambda(5), 10.0);
        assert_eq!(AxisSystem::hermite_func().lambda(0), 1.0);
        let jf = AxisSystem::new(Family::JacobiFunc { alpha: 0.5, beta: 0.5 }).unwrap();
        assert_eq!(jf.lambda(2), 9.0);
    }

    #[test]
    fn eigenvalues_increase_and_dominate_a() {
        for fam in all_families() {
            let s = AxisSystem::new(fam).unwrap();
            for k in 0..30 {
                assert!(s.lambda(k) >= s.a - 1e-12, "{fam:?}");
                assert!(s.lambda(k + 1) > s.lambda(k));
            }
        }
    }

    #[test]
    fn ladder_examples() {
        let h = AxisSystem::hermite_poly().ladder(1);
        assert!((h.coefficient - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(h.target_family, Family::HermitePoly);
        assert_eq!(h.target_index, 0);
        assert_eq!(h.multiplier, Multiplier::One);

        let lc = AxisSystem::new(Family::LaguerreFuncConv { alpha: 0.0 }).unwrap().ladder(2);
        assert!((lc.coefficient + 2.0 * 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(lc.target_family, Family::LaguerreFuncConv { alpha: 1.0 });
        assert_eq!(lc.target_index, 1);
        assert_eq!(lc.multiplier, Multiplier::X);

        for fam in all_families() {
            assert_eq!(AxisSystem::new(fam).unwrap().ladder(0).coefficient, 0.0);
        }
    }

    #[test]
    fn ladder_matches_finite_difference_delta() {
        for fam in all_families() {
            let s = AxisSystem::new(fam).unwrap();
            for &x in &interior_points(&s) {
                for k in 0..8 {
                    let h = 1e-5 * (1.0 + x.abs());
                    let d = (s.eval_phi(k, x + h).unwrap() - s.eval_phi(k, x - h).unwrap())
                        / (2.0 * h);
                    let fd = s.p(x) * d + s.q(x) * s.eval_phi(k, x).unwrap();
                    let lad = s.eval_delta_phi(k, x).unwrap();
                    let scale = 1.0 + lad.abs() + fd.abs();
                    assert!((fd - lad).abs() < 1e-6 * scale, "{fam:?} k={k} x={x}: {fd} vs {lad}");
                }
            }
        }
    }

    #[test]
    fn closed_forms_match_general_formulas() {
        for fam in all_families() {
            let s = AxisSystem::new(fam).unwrap();
            for &x in &interior_points(&s) {
                let (v1, v2) = (s.v_closed(x), s.v_from_coefficients(x));
                assert!((v1 - v2).abs() < 1e-10 * (1.0 + v1.abs()), "{fam:?} v at {x}");
                let (r1, r2) = (s.r_closed(x), s.r_from_coefficients(x));
                assert!((r1 - r2).abs() < 1e-10 * (1.0 + r1.abs()), "{fam:?} r at {x}: {r1} {r2}");
            }
        }
    }

    #[test]
    fn field_examples() {
        let h = AxisSystem::hermite_poly();
        assert_eq!(h.v_field(0.3).unwrap(), 2.0);
        assert_eq!((h.r_field(0.3).unwrap(), h.q_field(0.3).unwrap(), h.p_field(0.3).unwrap()), (0.0, 0.0, 1.0));
        let l = AxisSystem::new(Family::LaguerrePoly { alpha: -0.5 }).unwrap();
        assert!((l.v_field(3.0).unwrap() - 0.5).abs() < 1e-15);
        let lc = AxisSystem::new(Family::LaguerreFuncConv { alpha: 0.0 }).unwrap();
        assert!((lc.v_field(1.0).unwrap() - 3.0).abs() < 1e-15);
        let hf = AxisSystem::hermite_func();
        assert_eq!((hf.r_field(2.0).unwrap(), hf.q_field(2.0).unwrap(), hf.p_field(2.0).unwrap()), (4.0, 2.0, 1.0));
        let lh = AxisSystem::new(Family::LaguerreFuncH { alpha: 1.5 }).unwrap();
        assert!((lh.q_field(1.0).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn recurrence_examples() {
        let (d, o) = AxisSystem::hermite_poly().recurrence_coeffs(2).unwrap();
        assert_eq!(d, vec![0.0, 0.0]);
        assert!((o[0] - 0.5f64.sqrt()).abs() < 1e-15);
        let (d, o) = AxisSystem::new(Family::JacobiPoly { alpha: 0.0, beta: 0.0 })
            .unwrap()
            .recurrence_coeffs(2)
            .unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-15));
        assert!((o[0] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        let (d, o) = AxisSystem::new(Family::LaguerrePoly { alpha: 0.0 })
            .unwrap()
            .recurrence_coeffs(1)
            .unwrap();
        assert_eq!((d, o.len()), (vec![1.0], 0));
        assert!(AxisSystem::hermite_poly().recurrence_coeffs(0).is_err());
    }

    #[test]
    fn jacobi_half_parameters_have_finite_first_offdiag() {
        let s = AxisSystem::new(Family::JacobiPoly { alpha: -0.5, beta: -0.5 }).unwrap();
        let (_, o) = s.recurrence_coeffs(4).unwrap();
        // Chebyshev first kind: b_1 = 1/sqrt 2, b_n = 1/2
        assert!((o[0] - 0.5f64.sqrt()).abs() < 1e-14);
        assert!((o[1] - 0.5).abs() < 1e-14 && (o[2] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn domain_and_parameter_errors() {
        let s = AxisSystem::new(Family::JacobiPoly { alpha: 0.0, beta: 0.0 }).unwrap();
        assert!(matches!(s.eval_phi(1, 1.0), Err(LabError::Domain { .. })));
        assert!(matches!(s.eval_phi(1, 1.0 - 1e-13), Err(LabError::Domain { .. })));
        assert!(s.eval_phi(1, 0.999).is_ok());
        let l = AxisSystem::new(Family::LaguerrePoly { alpha: 0.0 }).unwrap();
        assert!(l.v_field(-1.0).is_err());
        assert!(matches!(
            AxisSystem::new(Family::LaguerrePoly { alpha: -1.0 }),
            Err(LabError::Parameter(_))
        ));
        assert!(AxisSystem::new(Family::JacobiFunc { alpha: 0.0, beta: -1.5 }).is_err());
    }

    #[test]
    fn theorem_range_flags() {
        assert!(Family::LaguerrePoly { alpha: -0.5 }.theorem_range());
        assert!(!Family::LaguerrePoly { alpha: -0.6 }.theorem_range());
        assert!(!Family::LaguerreFuncH { alpha: 0.5 }.theorem_range());
        assert!(Family::LaguerreFuncH { alpha: 0.51 }.theorem_range());
        assert!(!Family::JacobiPoly { alpha: -0.9, beta: 0.0 }.theorem_range());
        assert!(Family::JacobiFunc { alpha: 0.5, beta: 0.5 }.theorem_range());
        assert!(!Family::JacobiFunc { alpha: 0.4, beta: 0.5 }.theorem_range());
    }

    #[test]
    fn large_argument_evaluation_stays_finite() {
        let hf = AxisSystem::hermite_func();
        let v = hf.eval_phi(60, 45.0).unwrap();
        assert!(v.is_finite() && v.abs() < 1e-100);
        let hp = AxisSystem::hermite_poly();
        assert!(hp.eval_phi(120, 30.0).unwrap().is_finite());
    }
}
