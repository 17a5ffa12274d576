//! Quadrature rules, tensor grids and grid functions.
//!
//! Gauss rules come from the Jacobi matrix of each axis' polynomial measure
//! (Golub–Welsch). For function families the rule of the auxiliary measure is
//! transported through `u = x`, `u = x^2` or `u = cos x`, which keeps it exact
//! on products of eigenfunctions and of ladder images. Composite panel rules
//! with geometric grading at finite endpoints serve `|g|^p` integrands, whose
//! smoothness Gauss exactness says nothing about.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use crate::error::{LabError, Result};
use crate::orthosys::{AxisSystem, Family};
use crate::tridiag::eigen_first_components;

/// Nodes and weights of a one-dimensional rule. Weights carry the measure density.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Gauss rule for the probability measure whose Jacobi matrix is given.
fn golub_welsch(diag: &[f64], off: &[f64]) -> Result<QuadRule> {
    let (nodes, first) = eigen_first_components(diag, off)?;
    let weights = first.iter().map(|z| z * z).collect();
    Ok(QuadRule { nodes, weights })
}

/// Gauss–Legendre rule for Lebesgue measure on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<QuadRule> {
    if n == 0 {
        return Err(LabError::Argument("rule size must be positive".into()));
    }
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    let ref_rule = golub_welsch(&diag, &off)?;
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    Ok(QuadRule {
        nodes: ref_rule.nodes.iter().map(|t| mid + half * t).collect(),
        // reference weights sum to one, Lebesgue mass of [a, b] is b - a
        weights: ref_rule.weights.iter().map(|w| w * (b - a)).collect(),
    })
}

/// `n`-point Gauss rule for the measure of `sys`.
///
/// Polynomial families get the classical rule, exact for degree `2n - 1`.
/// Function families get the auxiliary-measure rule mapped to the axis, exact
/// for products of eigenfunctions (and ladder images) of total polynomial
/// degree up to `2n - 1` in the auxiliary variable.
pub fn gauss_rule(sys: &AxisSystem, n: usize) -> Result<QuadRule> {
    if n == 0 {
        return Err(LabError::Argument("rule size must be positive".into()));
    }
    let (diag, off) = sys.recurrence_coeffs(n)?;
    let aux = golub_welsch(&diag, &off)?;
    if sys.family.is_polynomial() {
        return Ok(aux);
    }
    let map = sys.family.aux_map();
    let mut pairs: Vec<(f64, f64)> = aux
        .nodes
        .iter()
        .zip(&aux.weights)
        .map(|(&u, &w)| {
            // far out the density ratio overflows while w underflows; the
            // eigenfunctions there are below 1e-150, so the node is dropped
            let mapped = w * sys.aux_to_axis_weight(u);
            (map.from_aux(u), if mapped.is_finite() { mapped } else { 0.0 })
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(QuadRule { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() })
}

/// `-ln` of the tail mass tolerated when truncating infinite intervals.
const TAIL_LOG: f64 = 37.0;
/// Geometric ratio and depth of the grading toward finite endpoints.
const GRADE_RATIO: f64 = 0.2;
const GRADE_LEVELS: usize = 40;
/// Gauss–Legendre points per panel.
const PANEL_POINTS: usize = 12;

/// Truncated integration interval for `|g|^p` with `g` of degree at most `maxdeg`.
pub fn truncation_interval(sys: &AxisSystem, maxdeg: usize, p: f64) -> (f64, f64) {
    let k = maxdeg as f64;
    let p = p.max(1.0);
    let gauss_radius = |turn: f64, decay: f64| turn.sqrt() + (TAIL_LOG / decay).sqrt() + 2.0;
    match sys.family {
        Family::HermitePoly => {
            let r = gauss_radius(p * k / 2.0 + 1.0, 1.0);
            (-r, r)
        }
        Family::HermiteFunc => {
            let r = gauss_radius(2.0 * k + 1.0, p / 2.0);
            (-r, r)
        }
        Family::LaguerrePoly { alpha } => {
            (0.0, 4.0 * k + p * k + 2.0 * alpha.abs() + TAIL_LOG + 10.0)
        }
        Family::LaguerreFuncH { alpha } | Family::LaguerreFuncConv { alpha } => {
            (0.0, gauss_radius(4.0 * k + 2.0 * alpha.abs() + 2.0, p / 2.0))
        }
        Family::JacobiPoly { .. } | Family::JacobiFunc { .. } => (sys.lo, sys.hi),
    }
}

/// Composite Gauss–Legendre rule with `panels` uniform panels on the truncated
/// interval and geometric grading at every finite endpoint of the domain.
pub fn panel_rule(sys: &AxisSystem, panels: usize, maxdeg: usize, p: f64) -> Result<QuadRule> {
    if panels == 0 {
        return Err(LabError::Argument("panel count must be positive".into()));
    }
    let (a, b) = truncation_interval(sys, maxdeg, p);
    let h = (b - a) / panels as f64;
    let mut breaks: Vec<f64> = (0..=panels).map(|j| a + h * j as f64).collect();
    let graded = |end: f64, toward: f64| -> Vec<f64> {
        (1..=GRADE_LEVELS).map(|j| end + (toward - end) * GRADE_RATIO.powi(j as i32)).collect()
    };
    if sys.lo.is_finite() {
        breaks.extend(graded(a, a + h));
    }
    if sys.hi.is_finite() {
        breaks.extend(graded(b, b - h));
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let reference = gauss_legendre(PANEL_POINTS, 0.0, 1.0)?;
    let mut nodes = Vec::with_capacity(breaks.len() * PANEL_POINTS);
    let mut weights = Vec::with_capacity(nodes.capacity());
    for win in breaks.windows(2) {
        let (l, r) = (win[0], win[1]);
        for (t, w) in reference.nodes.iter().zip(&reference.weights) {
            let x = l + (r - l) * t;
            // graded panels reach far closer to the endpoint than point
            // evaluation allows, so only the open interval is enforced here
            if !(x > sys.lo && x < sys.hi) {
                continue;
            }
            nodes.push(x);
            weights.push(w * (r - l) * sys.weight(x));
        }
    }
    Ok(QuadRule { nodes, weights })
}

/// Which family of one-dimensional rules a grid is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    /// `n` Gauss points per axis.
    Gauss,
    /// `n` uniform panels per axis (plus endpoint grading).
    Panel,
}

/// Tensor product of per-axis rules. Flattened indices are row-major, last axis fastest.
#[derive(Debug, Clone)]
pub struct TensorGrid {
    axes: Vec<QuadRule>,
    shape: Vec<usize>,
    weights: Vec<f64>,
    id: u64,
}

impl TensorGrid {
    pub fn new(axes: Vec<QuadRule>) -> Result<Self> {
        if axes.is_empty() {
            return Err(LabError::Argument("a tensor grid needs at least one axis".into()));
        }
        if axes.iter().any(|r| r.is_empty()) {
            return Err(LabError::Argument("empty axis rule".into()));
        }
        let shape: Vec<usize> = axes.iter().map(|r| r.len()).collect();
        let mut weights = vec![1.0];
        for rule in &axes {
            weights = weights
                .iter()
                .flat_map(|w| rule.weights.iter().map(move |v| w * v))
                .collect();
        }
        let mut hasher = DefaultHasher::new();
        for rule in &axes {
            rule.len().hash(&mut hasher);
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                x.to_bits().hash(&mut hasher);
                w.to_bits().hash(&mut hasher);
            }
        }
        Ok(TensorGrid { axes, shape, weights, id: hasher.finish() })
    }

    /// Grid with one rule per axis system at resolution `n`.
    pub fn for_systems(
        systems: &[AxisSystem],
        kind: RuleKind,
        n: usize,
        maxdeg: usize,
        p: f64,
    ) -> Result<Self> {
        let axes = systems
            .iter()
            .map(|s| match kind {
                RuleKind::Gauss => gauss_rule(s, n),
                RuleKind::Panel => panel_rule(s, n, maxdeg, p),
            })
            .collect::<Result<Vec<_>>>()?;
        TensorGrid::new(axes)
    }

    pub fn d(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[QuadRule] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> &QuadRule {
        &self.axes[i]
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn size(&self) -> usize {
        self.weights.len()
    }

    /// Product weights, flattened.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    /// Per-axis indices of a flattened index.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.d()];
        for a in (0..self.d()).rev() {
            idx[a] = flat % self.shape[a];
            flat /= self.shape[a];
        }
        idx
    }

    /// Coordinates of a flattened node.
    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&j, rule)| rule.nodes[j])
            .collect()
    }
}

/// Values of a scalar or vector-valued function on a tensor grid.
#[derive(Debug, Clone)]
pub struct GridFn {
    grid: Arc<TensorGrid>,
    comps: Vec<Vec<f64>>,
}

impl GridFn {
    pub fn scalar(grid: Arc<TensorGrid>, values: Vec<f64>) -> Result<Self> {
        GridFn::vector(grid, vec![values])
    }

    pub fn vector(grid: Arc<TensorGrid>, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.is_empty() || comps.iter().any(|c| c.len() != grid.size()) {
            return Err(LabError::Argument("grid function size does not match grid".into()));
        }
        Ok(GridFn { grid, comps })
    }

    pub fn from_fn(grid: Arc<TensorGrid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.size()).map(|j| f(&grid.node(j))).collect();
        GridFn { grid, comps: vec![values] }
    }

    pub fn grid(&self) -> &Arc<TensorGrid> {
        &self.grid
    }

    pub fn n_comps(&self) -> usize {
        self.comps.len()
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    pub fn comps(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn values(&self) -> &[f64] {
        &self.comps[0]
    }

    /// Pointwise Euclidean norm over components.
    pub fn abs_values(&self) -> Vec<f64> {
        (0..self.grid.size())
            .map(|j| self.comps.iter().map(|c| c[j] * c[j]).sum::<f64>().sqrt())
            .collect()
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if !(p.is_finite() && p > 1.0) {
        return Err(LabError::Argument(format!("exponent p must lie in (1, inf), got {p}")));
    }
    Ok(())
}

/// Weighted `L^p` norm; vector-valued functions use the pointwise Euclidean norm.
pub fn lp_norm(g: &GridFn, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let w = g.grid.weights();
    Ok(lp_norm_raw(&g.abs_values(), w, p))
}

pub(crate) fn lp_norm_raw(abs: &[f64], weights: &[f64], p: f64) -> f64 {
    let scale = abs.iter().fold(0.0f64, |m, v| m.max(*v));
    if scale == 0.0 {
        return 0.0;
    }
    let s: f64 = abs.iter().zip(weights).map(|(a, w)| w * (a / scale).powf(p)).sum();
    scale * s.powf(1.0 / p)
}

/// `L^2` inner product; vector-valued functions are paired componentwise.
pub fn inner(f: &GridFn, g: &GridFn) -> Result<f64> {
    if f.grid.id() != g.grid.id() || f.n_comps() != g.n_comps() {
        return Err(LabError::Argument("inner product of functions on different grids".into()));
    }
    let w = f.grid.weights();
    Ok(f.comps
        .iter()
        .zip(&g.comps)
        .map(|(a, b)| a.iter().zip(b).zip(w).map(|((x, y), w)| w * x * y).sum::<f64>())
        .sum())
}

/// Result of a resolution-doubling norm computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergedNorm {
    pub value: f64,
    pub previous: f64,
    /// Relative change between the last two resolutions.
    pub achieved_tol: f64,
    pub resolution: usize,
}

/// Options for [`converge_norm`].
#[derive(Debug, Clone, Copy)]
pub struct ConvergeOpts {
    pub kind: RuleKind,
    pub start: usize,
    pub max_doublings: usize,
    /// Polynomial degree of the integrand per axis, used for truncation radii.
    pub maxdeg: usize,
}

impl Default for ConvergeOpts {
    fn default() -> Self {
        ConvergeOpts { kind: RuleKind::Gauss, start: 16, max_doublings: 7, maxdeg: 0 }
    }
}

/// `L^p` norm of a grid-evaluated function, doubling the resolution until two
/// successive values agree to relative `tol`.
pub fn converge_norm(
    systems: &[AxisSystem],
    eval: impl Fn(&Arc<TensorGrid>) -> Result<GridFn>,
    p: f64,
    tol: f64,
    opts: ConvergeOpts,
) -> Result<ConvergedNorm> {
    check_exponent(p)?;
    let norm_at = |n: usize| -> Result<f64> {
        let grid = Arc::new(TensorGrid::for_systems(systems, opts.kind, n, opts.maxdeg, p)?);
        lp_norm(&eval(&grid)?, p)
    };
    let mut n = opts.start.max(1);
    let mut prev = norm_at(n)?;
    for _ in 0..opts.max_doublings {
        n *= 2;
        let cur = norm_at(n)?;
        let change = (cur - prev).abs() / cur.abs().max(f64::MIN_POSITIVE);
        if change < tol || (cur == 0.0 && prev == 0.0) {
            return Ok(ConvergedNorm { value: cur, previous: prev, achieved_tol: change, resolution: n });
        }
        prev = cur;
    }
    let last = norm_at(n * 2)?;
    let change = (last - prev).abs() / last.abs().max(f64::MIN_POSITIVE);
    if change < tol {
        return Ok(ConvergedNorm { value: last, previous: prev, achieved_tol: change, resolution: n * 2 });
    }
    Err(LabError::Convergence { iterations: opts.max_doublings + 1, prev, last })
}

/// Pointwise-evaluator convenience wrapper around [`converge_norm`].
pub fn converge_norm_pointwise(
    systems: &[AxisSystem],
    f: impl Fn(&[f64]) -> f64,
    p: f64,
    tol: f64,
    opts: ConvergeOpts,
) -> Result<ConvergedNorm> {
    converge_norm(systems, |g| Ok(GridFn::from_fn(g.clone(), &f)), p, tol, opts)
}

// --- adaptive Gauss–Kronrod on an interval ---------------------------------

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss 7-point weights at XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod_panel(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let s = f(c - h * XGK[j]) + f(c + h * XGK[j]);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Outcome of [`integrate_adaptive`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveResult {
    pub value: f64,
    pub error_estimate: f64,
    pub panels: usize,
}

/// Globally adaptive G7–K15 integration of `f` over `[a, b]`.
pub fn integrate_adaptive(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<AdaptiveResult> {
    if !(a.is_finite() && b.is_finite() && b > a) {
        return Err(LabError::Argument(format!("bad integration interval [{a}, {b}]")));
    }
    let mut panels: Vec<(f64, f64, f64, f64)> = Vec::new();
    let (v, e) = kronrod_panel(&mut f, a, b);
    panels.push((a, b, v, e));
    loop {
        let value: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(AdaptiveResult { value, error_estimate: err, panels: panels.len() });
        }
        if panels.len() >= max_panels {
            return Err(LabError::Convergence { iterations: panels.len(), prev: value - err, last: value });
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (l, r, _, _) = panels.swap_remove(worst);
        let m = 0.5 * (l + r);
        let (v1, e1) = kronrod_panel(&mut f, l, m);
        let (v2, e2) = kronrod_panel(&mut f, m, r);
        panels.push((l, m, v1, e1));
        panels.push((m, r, v2, e2));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orthosys::Family;

    fn systems() -> Vec<AxisSystem> {
        [
            Family::HermitePoly,
            Family::LaguerrePoly { alpha: -0.3 },
            Family::JacobiPoly { alpha: 0.5, beta: -0.4 },
            Family::HermiteFunc,
            Family::LaguerreFuncH { alpha: 1.2 },
            Family::LaguerreFuncConv { alpha: -0.2 },
            Family::JacobiFunc { alpha: 0.6, beta: 1.5 },
        ]
        .into_iter()
        .map(|f| AxisSystem::new(f).unwrap())
        .collect()
    }

    #[test]
    fn small_rules() {
        let r = gauss_rule(&AxisSystem::hermite_poly(), 1).unwrap();
        assert!(r.nodes[0].abs() < 1e-15 && (r.weights[0] - 1.0).abs() < 1e-15);
        let leg = AxisSystem::new(Family::JacobiPoly { alpha: 0.0, beta: 0.0 }).unwrap();
        let r = gauss_rule(&leg, 2).unwrap();
        assert!((r.nodes[0] + 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((r.nodes[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!(r.weights.iter().all(|w| (w - 0.5).abs() < 1e-15));
        let lag = AxisSystem::new(Family::LaguerrePoly { alpha: 0.0 }).unwrap();
        let r = gauss_rule(&lag, 1).unwrap();
        assert!((r.nodes[0] - 1.0).abs() < 1e-15 && (r.weights[0] - 1.0).abs() < 1e-15);
        assert!(gauss_rule(&lag, 0).is_err());
    }

    #[test]
    fn hermite_moments_exact() {
        // E x^{2j} under N(0, 1/2) is (2j-1)!! / 2^j
        let r = gauss_rule(&AxisSystem::hermite_poly(), 10).unwrap();
        let mut dfact = 1.0;
        for j in 0..10 {
            if j > 0 {
                dfact *= (2 * j - 1) as f64;
            }
            let exact = dfact / 2f64.powi(j);
            let got = r.integrate(|x| x.powi(2 * j));
            assert!((got - exact).abs() < 1e-12 * exact, "moment {}", 2 * j);
            assert!(r.integrate(|x| x.powi(2 * j + 1)).abs() < 1e-12 * exact.max(1.0));
        }
    }

    #[test]
    fn laguerre_moments_exact() {
        // int x^j x^a e^{-x} / Gamma(a+1) = (a+1)_j
        let a = 0.7;
        let sys = AxisSystem::new(Family::LaguerrePoly { alpha: a }).unwrap();
        let r = gauss_rule(&sys, 8).unwrap();
        let mut poch = 1.0;
        for j in 0..16 {
            if j > 0 {
                poch *= a + j as f64;
            }
            let got = r.integrate(|x| x.powi(j));
            assert!((got - poch).abs() < 1e-12 * poch, "moment {j}");
        }
    }

    #[test]
    fn gauss_rule_orthonormality_all_families() {
        for s in systems() {
            let r = gauss_rule(&s, 30).unwrap();
            let tab: Vec<Vec<f64>> = r.nodes.iter().map(|&x| s.phi_all_unchecked(20, x)).collect();
            for j in 0..=20 {
                for k in 0..=20 {
                    let ip: f64 = tab.iter().zip(&r.weights).map(|(t, w)| w * t[j] * t[k]).sum();
                    let want = if j == k { 1.0 } else { 0.0 };
                    assert!((ip - want).abs() < 1e-10, "{:?} <{j},{k}> = {ip}", s.family);
                }
            }
        }
    }

    #[test]
    fn panel_rule_agrees_with_gauss_on_smooth_integrands() {
        for s in systems() {
            let g = gauss_rule(&s, 30).unwrap();
            let pr = panel_rule(&s, 40, 6, 2.0).unwrap();
            let f = |x: f64| s.phi_all_unchecked(6, x)[6].powi(2);
            let (a, b) = (g.integrate(f), pr.integrate(f));
            assert!((a - b).abs() < 1e-9, "{:?}: {a} {b}", s.family);
        }
    }

    #[test]
    fn legendre_panel_reference() {
        let r = gauss_legendre(5, 1.0, 3.0).unwrap();
        assert!((r.integrate(|x| x.powi(9)) - (3f64.powi(10) - 1.0) / 10.0).abs() < 1e-9);
    }

    #[test]
    fn lp_norm_examples() {
        let sys = AxisSystem::hermite_poly();
        let grid = Arc::new(TensorGrid::new(vec![gauss_rule(&sys, 12).unwrap()]).unwrap());
        let one = GridFn::from_fn(grid.clone(), |_| 1.0);
        for p in [1.5, 3.0, 7.0] {
            assert!((lp_norm(&one, p).unwrap() - 1.0).abs() < 1e-14);
        }
        let h1 = GridFn::from_fn(grid.clone(), |x| 2f64.sqrt() * x[0]);
        assert!((lp_norm(&h1, 4.0).unwrap() - 3f64.powf(0.25)).abs() < 1e-13);
        assert!((lp_norm(&h1, 2.0).unwrap() - 1.0).abs() < 1e-13);
        assert!(lp_norm(&h1, 1.0).is_err());
        assert!(lp_norm(&h1, f64::NAN).is_err());
    }

    #[test]
    fn vector_norm_uses_euclidean_pointwise() {
        let sys = AxisSystem::hermite_poly();
        let grid = Arc::new(TensorGrid::new(vec![gauss_rule(&sys, 3).unwrap()]).unwrap());
        let v = GridFn::vector(grid.clone(), vec![vec![3.0; 3], vec![4.0; 3]]).unwrap();
        assert!((lp_norm(&v, 3.0).unwrap() - 5.0).abs() < 1e-14);
    }

    #[test]
    fn inner_requires_same_grid() {
        let sys = AxisSystem::hermite_poly();
        let g1 = Arc::new(TensorGrid::new(vec![gauss_rule(&sys, 3).unwrap()]).unwrap());
        let g2 = Arc::new(TensorGrid::new(vec![gauss_rule(&sys, 4).unwrap()]).unwrap());
        let a = GridFn::from_fn(g1, |x| x[0]);
        let b = GridFn::from_fn(g2, |x| x[0]);
        assert!(inner(&a, &b).is_err());
        assert!((inner(&a, &a).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tensor_norm_factorizes() {
        let s = AxisSystem::hermite_poly();
        let l = AxisSystem::new(Family::LaguerrePoly { alpha: 0.4 }).unwrap();
        let grid = Arc::new(
            TensorGrid::new(vec![gauss_rule(&s, 14).unwrap(), gauss_rule(&l, 14).unwrap()]).unwrap(),
        );
        let f1 = |x: f64| 1.0 + x * x;
        let f2 = |x: f64| 2.0 - x + 0.1 * x * x;
        let g = GridFn::from_fn(grid.clone(), |x| f1(x[0]) * f2(x[1]));
        let n1 = GridFn::from_fn(Arc::new(TensorGrid::new(vec![grid.axis(0).clone()]).unwrap()), |x| f1(x[0]));
        let n2 = GridFn::from_fn(Arc::new(TensorGrid::new(vec![grid.axis(1).clone()]).unwrap()), |x| f2(x[0]));
        let p = 4.0;
        let lhs = lp_norm(&g, p).unwrap();
        let rhs = lp_norm(&n1, p).unwrap() * lp_norm(&n2, p).unwrap();
        assert!((lhs - rhs).abs() < 1e-10 * rhs);
    }

    #[test]
    fn converge_norm_cubic_moment() {
        // oracle: E|sqrt2 x|^3 under N(0, 1/2) = 2 sqrt(2/pi) = 1.5957691216057307, cube root below
        let s = AxisSystem::hermite_poly();
        let out = converge_norm_pointwise(
            &[s],
            |x| 2f64.sqrt() * x[0],
            3.0,
            1e-10,
            ConvergeOpts { kind: RuleKind::Panel, start: 8, max_doublings: 6, maxdeg: 1 },
        )
        .unwrap();
        assert!((out.value - 1.168_575_254_962_465_5).abs() < 1e-8, "{}", out.value);
    }

    #[test]
    fn converge_norm_even_p_is_immediate() {
        let s = AxisSystem::hermite_poly();
        let out = converge_norm_pointwise(
            &[s],
            |x| x[0] * x[0] - 0.5,
            4.0,
            1e-12,
            ConvergeOpts { kind: RuleKind::Gauss, start: 8, ..Default::default() },
        )
        .unwrap();
        assert_eq!(out.resolution, 16);
    }

    #[test]
    fn truncation_radius_is_certified() {
        let s = AxisSystem::hermite_func();
        let f = |x: &[f64]| s.phi_all_unchecked(5, x[0])[5];
        let opts = ConvergeOpts { kind: RuleKind::Panel, start: 40, max_doublings: 0, maxdeg: 5 };
        // p = 4 keeps the integrand smooth so only the truncation changes
        let base = converge_norm_pointwise(&[s], f, 4.0, 1.0, opts).unwrap().value;
        let wider = converge_norm_pointwise(&[s], f, 4.0, 1.0, ConvergeOpts { maxdeg: 12, ..opts }).unwrap().value;
        assert!((base - wider).abs() < 1e-10 * base);
    }

    #[test]
    fn kronrod_exactness_and_exponential_moment() {
        for deg in 0..=22 {
            let (v, _) = kronrod_panel(&mut |t: f64| t.powi(deg), 0.0, 1.0);
            assert!((v - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14, "degree {deg}");
        }
        let (_, err) = kronrod_panel(&mut |t: f64| t.powi(13), 0.0, 1.0);
        assert!(err < 1e-14, "the embedded Gauss rule is exact to degree 13");
        for s in [0.5, 1.0, 7.3, 50.0] {
            let t_max = 40.0 / 0.5;
            let r = integrate_adaptive(|t| t * (-s * t).exp(), 0.0, t_max, 1e-15, 1e-13, 2000).unwrap();
            assert!((r.value - 1.0 / (s * s)).abs() < 1e-10 / (s * s), "s={s}");
        }
    }
}
