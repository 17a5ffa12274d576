//! The flow `F = P_t Pi f`, `G = (Q_t^1 g_1, .., Q_t^d g_d)`, the `|.|_*` norm,
//! the bilinear formula for `<R_i f, g>`, the bilinear embedding ratio and the
//! pointwise differential inequality for `b = B(F, G)`.

use std::sync::Arc;

use rand::Rng;

use crate::bellman::{beta_derivs, hess_quad_form, singular_distance, BellmanParams};
use crate::error::{LabError, Result};
use crate::quadgrid::{
    converge_norm, gauss_rule, integrate_adaptive, inner, ConvergeOpts, GridFn, TensorGrid,
};
use crate::spectral::{
    apply_pi, apply_pt, apply_qt, box_indices, dt_pt, dt_qt, frame_constant, gauss_grid,
    image_synthesis_coeffs, p_star, riesz, synth_image_with, synth_with, AxisOp, CoeffFn,
    GridTables, ImageFrameFn, ProductSystem,
};

/// Truncation of the `t`-integrals, in units of the slowest decay rate.
pub const T_DECAY_UNITS: f64 = 40.0;

/// Data of the flow. `f` is stored already projected by `Pi`.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub system: ProductSystem,
    pub f: CoeffFn,
    pub g: Vec<ImageFrameFn>,
    pub p: f64,
}

impl FlowState {
    pub fn new(f: &CoeffFn, g: Vec<ImageFrameFn>, p: f64) -> Result<Self> {
        let system = f.system().clone();
        if !(p.is_finite() && p > 1.0) {
            return Err(LabError::Argument(format!("exponent must lie in (1, inf), got {p}")));
        }
        if g.len() != system.d() {
            return Err(LabError::Argument(format!("need {} image components, got {}", system.d(), g.len())));
        }
        for (i, gi) in g.iter().enumerate() {
            if gi.axis() != i || gi.degree_cap() != f.degree_cap() || gi.system() != &system {
                return Err(LabError::Argument(format!("image component {i} does not match f")));
            }
        }
        Ok(FlowState { system, f: apply_pi(f), g, p })
    }

    /// Gaussian coefficients for `f` (in the range of `Pi`) and every `g_i`.
    pub fn random(system: &ProductSystem, n: usize, p: f64, rng: &mut impl Rng) -> Result<Self> {
        let f = CoeffFn::random(system, n, true, rng);
        let g = (0..system.d()).map(|i| ImageFrameFn::random(system, i, n, rng)).collect();
        FlowState::new(&f, g, p)
    }

    pub fn with_p(&self, p: f64) -> Result<Self> {
        FlowState::new(&self.f, self.g.clone(), p)
    }

    pub fn n(&self) -> usize {
        self.f.degree_cap()
    }

    pub fn d(&self) -> usize {
        self.system.d()
    }

    /// Smallest eigenvalue carried by `Pi f`, if any.
    pub fn lambda_min_f(&self) -> Option<f64> {
        min_lambda(&self.system, self.n(), self.f.data())
    }

    /// Smallest eigenvalue carried by the `g_i`, if any.
    pub fn lambda_min_g(&self) -> Option<f64> {
        self.g.iter().filter_map(|gi| min_lambda(&self.system, self.n(), gi.data())).reduce(f64::min)
    }

    fn g_is_zero(&self) -> bool {
        self.g.iter().all(|gi| gi.data().iter().all(|v| *v == 0.0))
    }

    /// `int |F|_*^2 dmu = 2 sum lambda c^2 e^{-2 t sqrt(lambda)}`, and the same
    /// sum for `G`, which bounds `int |G|_*^2` from above when every `v_i >= 0`.
    pub fn energies(&self, t: f64) -> (f64, f64) {
        let e = |lam: f64, c: f64| 2.0 * lam * c * c * (-2.0 * t * lam.sqrt()).exp();
        let idx = box_indices(self.d(), self.n());
        let ef = idx.iter().zip(self.f.data()).map(|(k, c)| e(self.system.lambda(&k.0), *c)).sum();
        let eg = self
            .g
            .iter()
            .map(|gi| idx.iter().zip(gi.data()).map(|(k, c)| e(self.system.lambda(&k.0), *c)).sum::<f64>())
            .sum();
        (ef, eg)
    }
}

fn min_lambda(system: &ProductSystem, n: usize, data: &[f64]) -> Option<f64> {
    box_indices(system.d(), n)
        .iter()
        .zip(data)
        .filter(|(_, v)| **v != 0.0)
        .map(|(k, _)| system.lambda(&k.0))
        .reduce(f64::min)
}

/// Values of the flow and its derivatives at the nodes of a table set.
#[derive(Debug, Clone)]
pub struct FlowFields {
    pub f: Vec<f64>,
    pub ft: Vec<f64>,
    /// `p_i d/dx_i F`, indexed by `i`.
    pub fd: Vec<Vec<f64>>,
    /// `G_j`, indexed by `j`.
    pub g: Vec<Vec<f64>>,
    pub gt: Vec<Vec<f64>>,
    /// `p_i d/dx_i G_j`, indexed by `[i][j]`.
    pub gd: Vec<Vec<Vec<f64>>>,
}

fn ops(d: usize, pairs: &[(usize, AxisOp)]) -> Vec<AxisOp> {
    let mut o = vec![AxisOp::Phi; d];
    for &(a, op) in pairs {
        o[a] = op;
    }
    o
}

/// Evaluate `F`, `G` and their `t` and `p_i d/dx_i` derivatives on `tables`.
pub fn flow_fields(state: &FlowState, tables: &GridTables, t: f64) -> Result<FlowFields> {
    let d = state.d();
    let size = tables.grid.size();
    let ft_c = apply_pt(&state.f, t)?;
    let dft_c = dt_pt(&state.f, t)?;
    let f = synth_with(&ft_c, tables)?.values().to_vec();
    let ft = synth_with(&dft_c, tables)?.values().to_vec();
    let fd = (0..d)
        .map(|i| {
            // delta_i F - q_i F
            let delta = tables.synth(ft_c.data(), &ops(d, &[(i, AxisOp::Delta)]));
            let q = tables.broadcast(i, &tables.axes[i].q);
            delta.iter().zip(&q).zip(&f).map(|((a, q), v)| a - q * v).collect()
        })
        .collect();
    let mut g = Vec::with_capacity(d);
    let mut gt = Vec::with_capacity(d);
    let mut gd = vec![Vec::with_capacity(d); d];
    for (j, gj) in state.g.iter().enumerate() {
        let qt = apply_qt(gj, t)?;
        g.push(synth_image_with(&qt, tables)?.values().to_vec());
        gt.push(synth_image_with(&dt_qt(gj, t)?, tables)?.values().to_vec());
        let c = image_synthesis_coeffs(&qt);
        for (i, gdi) in gd.iter_mut().enumerate() {
            let o = if i == j {
                ops(d, &[(j, AxisOp::DDelta)])
            } else {
                ops(d, &[(j, AxisOp::Delta), (i, AxisOp::DPhi)])
            };
            let raw = tables.synth(&c, &o);
            let p = tables.broadcast(i, &tables.axes[i].p);
            gdi.push(raw.iter().zip(&p).map(|(v, p)| v * p).collect());
        }
    }
    debug_assert!(f.len() == size);
    Ok(FlowFields { f, ft, fd, g, gt, gd })
}

impl FlowFields {
    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    /// `|F|_*` at node `j` given `r` there.
    pub fn star_f_at(&self, j: usize, r: f64) -> f64 {
        let s = r * self.f[j] * self.f[j] + self.ft[j] * self.ft[j] + self.fd.iter().map(|v| v[j] * v[j]).sum::<f64>();
        s.max(0.0).sqrt()
    }

    /// `|G|_*` at node `j` given `r` there.
    pub fn star_g_at(&self, j: usize, r: f64) -> f64 {
        let g2: f64 = self.g.iter().map(|v| v[j] * v[j]).sum();
        let gt2: f64 = self.gt.iter().map(|v| v[j] * v[j]).sum();
        let gd2: f64 = self.gd.iter().flatten().map(|v| v[j] * v[j]).sum();
        (r * g2 + gt2 + gd2).max(0.0).sqrt()
    }
}

/// Which half of the flow a star norm is taken of.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    F,
    G,
}

/// `|F|_*` or `|G|_*` on `grid` at time `t > 0`.
pub fn star_norm(state: &FlowState, which: Which, t: f64, grid: &Arc<TensorGrid>) -> Result<GridFn> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(LabError::Argument(format!("star norm needs t > 0, got {t}")));
    }
    let tables = GridTables::new(&state.system, grid.clone(), state.n())?;
    let fields = flow_fields(state, &tables, t)?;
    let r = tables.r_field();
    let vals = (0..fields.len())
        .map(|j| match which {
            Which::F => fields.star_f_at(j, r[j]),
            Which::G => fields.star_g_at(j, r[j]),
        })
        .collect();
    GridFn::scalar(grid.clone(), vals)
}

// --- bilinear formula --------------------------------------------------------

/// Both sides of the bilinear formula for one pair `(f, g)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Form1Check {
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs - rhs| / (||R_i f||_2 ||g||_2)`.
    pub relerr: f64,
    /// Worst relative gap between `(s)^{-2}` and its numerical `t`-quadrature.
    pub t_quadrature_relerr: f64,
}

/// `int_0^T t e^{-s t} dt` by adaptive quadrature, `T = 40 / s`, plus the exact tail.
pub fn t_moment_numeric(s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(LabError::Argument(format!("decay rate must be positive, got {s}")));
    }
    let big_t = T_DECAY_UNITS / s;
    let res = integrate_adaptive(|t| t * (-s * t).exp(), 0.0, big_t, 0.0, 1e-14, 4000)?;
    let tail = (-s * big_t).exp() * (big_t / s + 1.0 / (s * s));
    Ok(res.value + tail)
}

/// `<R_i f, g>` against `-4 int_0^inf <delta_i P_t Pi f, d_t Q_t^i g> t dt`.
///
/// The left side uses the grid Riesz transform. The right side expands both
/// factors in the ladder images, takes their Gram matrix by quadrature and
/// integrates `t e^{-t (sqrt lambda_k + sqrt lambda_n)}` per pair.
pub fn form1_check(f: &CoeffFn, g: &ImageFrameFn) -> Result<Form1Check> {
    let system = f.system();
    let i = g.axis();
    let n = f.degree_cap();
    if g.degree_cap() != n || g.system() != system {
        return Err(LabError::Argument("f and g live on different truncations".into()));
    }
    let pf = apply_pi(f);
    let grid = gauss_grid(system, 2 * n + 2)?;
    let tables = GridTables::new(system, grid.clone(), n)?;

    let scale = {
        let idx = box_indices(system.d(), n);
        let rf2: f64 = idx
            .iter()
            .zip(pf.data())
            .map(|(k, c)| {
                let lam = system.lambda(&k.0);
                if lam == 0.0 { 0.0 } else { c * c * (system.axis(i).lambda(k.0[i]) - system.axis(i).a) / lam }
            })
            .sum();
        rf2.sqrt() * g.norm2()
    };
    if scale == 0.0 {
        return Ok(Form1Check { lhs: 0.0, rhs: 0.0, relerr: 0.0, t_quadrature_relerr: 0.0 });
    }

    let lhs = inner(&riesz(&pf, i, &grid)?, &synth_image_with(g, &tables)?)?;

    // Gram matrix of delta_i phi_k over the supported indices
    let idx = box_indices(system.d(), n);
    let delta_ops = ops(system.d(), &[(i, AxisOp::Delta)]);
    let fk: Vec<(usize, f64)> = pf.data().iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect();
    let gb = image_synthesis_coeffs(g);
    let gn: Vec<(usize, f64)> = gb.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect();
    let w = grid.weights();
    let basis_vals = |j: usize| -> Vec<f64> {
        let mut e = vec![0.0; idx.len()];
        e[j] = 1.0;
        tables.synth(&e, &delta_ops)
    };
    let g_vals: Vec<Vec<f64>> = gn.iter().map(|(j, _)| basis_vals(*j)).collect();
    let mut rhs = 0.0;
    let mut worst_t: f64 = 0.0;
    let mut cache: Vec<(f64, f64)> = Vec::new();
    for &(k, ck) in &fk {
        if idx[k].0[i] == 0 {
            continue;
        }
        let fv = basis_vals(k);
        let sk = system.lambda(&idx[k].0).sqrt();
        for ((nidx, bn), gv) in gn.iter().zip(&g_vals) {
            let gram: f64 = fv.iter().zip(gv).zip(w).map(|((a, b), w)| a * b * w).sum();
            if gram.abs() < 1e-15 {
                continue;
            }
            let sn = system.lambda(&idx[*nidx].0).sqrt();
            let s = sk + sn;
            let closed = 1.0 / (s * s);
            let numeric = match cache.iter().find(|(key, _)| (*key - s).abs() <= 1e-15 * s) {
                Some((_, v)) => *v,
                None => {
                    let v = t_moment_numeric(s)?;
                    cache.push((s, v));
                    v
                }
            };
            worst_t = worst_t.max((numeric - closed).abs() / closed);
            // d_t Q_t contributes -sqrt(lambda_n)
            rhs += 4.0 * ck * bn * sn * gram * numeric;
        }
    }
    Ok(Form1Check { lhs, rhs, relerr: (lhs - rhs).abs() / scale, t_quadrature_relerr: worst_t })
}

// --- bilinear embedding ------------------------------------------------------

/// Left side of the embedding with its error budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingLhs {
    pub value: f64,
    pub quadrature_error: f64,
    /// Bound on the integral over `(T, inf)`.
    pub tail_bound: f64,
    pub t_max: f64,
}

/// Points per axis of the default spatial grid for truncation `n`.
pub fn embedding_grid_points(n: usize) -> usize {
    6 * (n + 1)
}

/// `int_0^inf int |F|_* |G|_* dmu t dt` on the default spatial grid.
pub fn embedding_lhs(state: &FlowState) -> Result<EmbeddingLhs> {
    let grid = gauss_grid(&state.system, embedding_grid_points(state.n()))?;
    embedding_lhs_on(state, &grid)
}

pub fn embedding_lhs_on(state: &FlowState, grid: &Arc<TensorGrid>) -> Result<EmbeddingLhs> {
    let (Some(lf), Some(lg)) = (state.lambda_min_f(), state.lambda_min_g()) else {
        return Ok(EmbeddingLhs { value: 0.0, quadrature_error: 0.0, tail_bound: 0.0, t_max: 0.0 });
    };
    let s = lf.sqrt() + lg.sqrt();
    let t_max = T_DECAY_UNITS / s;
    let tables = GridTables::new(&state.system, grid.clone(), state.n())?;
    let r = tables.r_field();
    let w = grid.weights().to_vec();
    let mut failure = None;
    let integrand = |t: f64| -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        match flow_fields(state, &tables, t) {
            Ok(fl) => t * (0..fl.len()).map(|j| w[j] * fl.star_f_at(j, r[j]) * fl.star_g_at(j, r[j])).sum::<f64>(),
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let res = integrate_adaptive(integrand, 0.0, t_max, 0.0, 1e-9, 4000)?;
    if let Some(e) = failure {
        return Err(e);
    }
    let (ef, eg) = state.energies(t_max);
    let tail_bound = (ef * eg).sqrt() * (t_max / s + 1.0 / (s * s));
    Ok(EmbeddingLhs { value: res.value, quadrature_error: res.error_estimate, tail_bound, t_max })
}

/// Outcome of the embedding inequality for one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingCheck {
    pub p: f64,
    pub lhs: f64,
    pub norm_f: f64,
    pub norm_g: f64,
    pub bound: f64,
    /// `lhs / bound`; zero when both vanish.
    pub ratio: f64,
}

/// Tolerance for the resolution-doubling norms in the embedding ratio.
pub const EMBEDDING_NORM_TOL: f64 = 1e-3;

fn norm_opts(n: usize) -> ConvergeOpts {
    ConvergeOpts { start: 2 * n + 8, max_doublings: 6, maxdeg: n, ..ConvergeOpts::default() }
}

/// `||Pi f||_p` and `||g||_q` with `g = (g_1, .., g_d)` and the Euclidean norm inside.
pub fn flow_norms(state: &FlowState) -> Result<(f64, f64)> {
    let p = state.p;
    let q = p / (p - 1.0);
    let opts = norm_opts(state.n());
    let axes = state.system.axes();
    let nf = converge_norm(axes, |grid| synth_with(&state.f, &GridTables::new(&state.system, grid.clone(), state.n())?), p, EMBEDDING_NORM_TOL, opts)?;
    let ng = converge_norm(
        axes,
        |grid| {
            let t = GridTables::new(&state.system, grid.clone(), state.n())?;
            let comps = state.g.iter().map(|gi| synth_image_with(gi, &t).map(|v| v.values().to_vec())).collect::<Result<Vec<_>>>()?;
            GridFn::vector(grid.clone(), comps)
        },
        q,
        EMBEDDING_NORM_TOL,
        opts,
    )?;
    Ok((nf.value, ng.value))
}

/// Ratio `LHS / (6 (p* - 1) ||Pi f||_p ||g||_q)` given a precomputed left side.
pub fn embedding_check_with(state: &FlowState, lhs: &EmbeddingLhs) -> Result<EmbeddingCheck> {
    let (norm_f, norm_g) = flow_norms(state)?;
    let bound = 6.0 * (p_star(state.p) - 1.0) * norm_f * norm_g;
    let ratio = if lhs.value == 0.0 { 0.0 } else { lhs.value / bound };
    Ok(EmbeddingCheck { p: state.p, lhs: lhs.value, norm_f, norm_g, bound, ratio })
}

pub fn embedding_check(state: &FlowState) -> Result<EmbeddingCheck> {
    embedding_check_with(state, &embedding_lhs(state)?)
}

// --- differential inequality -------------------------------------------------

/// Relative distance to the non-smooth set of `B` below which a point is skipped.
pub const DIFF_INEQ_EXCLUSION: f64 = 1e-3;

/// Result at one `(x, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCheck {
    pub x: Vec<f64>,
    pub t: f64,
    pub excluded: bool,
    /// `|FD - formula| / (sum of the magnitudes of the formula terms)`.
    pub identity_relerr: Option<f64>,
    /// `(RHS - gamma |F|_* |G|_*) / max(|RHS|, gamma |F|_* |G|_*)`.
    pub margin: Option<f64>,
    /// Smallest summand `v_i dB/dG_i G_i`.
    pub v_term: Option<f64>,
}

/// Sweep summary.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffIneqReport {
    pub points: Vec<PointCheck>,
    pub evaluated: usize,
    pub excluded: usize,
    pub worst_identity_relerr: f64,
    pub worst_margin: f64,
    pub worst_v_term: f64,
}

impl DiffIneqReport {
    pub fn excluded_fraction(&self) -> f64 {
        if self.points.is_empty() { 0.0 } else { self.excluded as f64 / self.points.len() as f64 }
    }
}

/// Random `(x, t)` with `x_i` uniform between the extreme Gauss nodes of
/// order `2N + 2` and `t` log-uniform in `[0.05, 3]`.
pub fn sample_points(system: &ProductSystem, n: usize, count: usize, rng: &mut impl Rng) -> Result<Vec<(Vec<f64>, f64)>> {
    let ranges = system
        .axes()
        .iter()
        .map(|s| {
            let r = gauss_rule(s, 2 * n + 2)?;
            Ok((r.nodes[0], *r.nodes.last().expect("non-empty rule")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((0..count)
        .map(|_| {
            let x = ranges.iter().map(|(a, b)| rng.gen_range(*a..*b)).collect();
            let t = rng.gen_range(0.05f64.ln()..3f64.ln()).exp();
            (x, t)
        })
        .collect())
}

/// Bellman parameters with `F` in the `zeta` slot for `p >= 2` and in the `eta` slot otherwise.
pub fn flow_bellman(state: &FlowState) -> Result<BellmanParams> {
    let d = state.d();
    if state.p >= 2.0 {
        BellmanParams::new(state.p, 1, d, 0.0)
    } else {
        BellmanParams::new(state.p, d, 1, 0.0)
    }
}

/// `u = (F, G)` arranged into the Bellman argument slots, from one node of `fl`.
fn arrange(params: &BellmanParams, fval: f64, gvals: &[f64]) -> Vec<f64> {
    if params.swapped {
        gvals.iter().copied().chain(std::iter::once(fval)).collect()
    } else {
        std::iter::once(fval).chain(gvals.iter().copied()).collect()
    }
}

fn b_of(params: &BellmanParams, u: &[f64]) -> (f64, bool) {
    let m1 = params.m1;
    let s1 = u[..m1].iter().map(|v| v * v).sum::<f64>().sqrt();
    let s2 = u[m1..].iter().map(|v| v * v).sum::<f64>().sqrt();
    let d = beta_derivs(params, s1, s2);
    (0.5 * d.value, d.first_branch)
}

fn point_fields(state: &FlowState, x: &[f64], t: f64) -> Result<(GridTables, FlowFields)> {
    let tables = GridTables::at_point(&state.system, x, state.n())?;
    let fl = flow_fields(state, &tables, t)?;
    Ok((tables, fl))
}

fn b_at(state: &FlowState, params: &BellmanParams, x: &[f64], t: f64) -> Result<(f64, bool)> {
    let (_, fl) = point_fields(state, x, t)?;
    let g: Vec<f64> = fl.g.iter().map(|v| v[0]).collect();
    Ok(b_of(params, &arrange(params, fl.f[0], &g)))
}

/// Check the chain-rule identity (optionally) and the inequality at each point.
pub fn diff_ineq_check(state: &FlowState, points: &[(Vec<f64>, f64)], identity: bool) -> Result<DiffIneqReport> {
    let params = flow_bellman(state)?;
    let d = state.d();
    let g_zero = state.g_is_zero();
    let mut out = Vec::with_capacity(points.len());
    for (x, t) in points {
        let (tables, fl) = point_fields(state, x, *t)?;
        let gv: Vec<f64> = fl.g.iter().map(|v| v[0]).collect();
        let u = arrange(&params, fl.f[0], &gv);
        let s1 = u[..params.m1].iter().map(|v| v * v).sum::<f64>().sqrt();
        let s2 = u[params.m1..].iter().map(|v| v * v).sum::<f64>().sqrt();
        let dist = if g_zero {
            // only the F slot is populated; B is smooth there away from 0
            if fl.f[0] != 0.0 { 1.0 } else { 0.0 }
        } else {
            singular_distance(&params, s1, s2)
        };
        if dist <= DIFF_INEQ_EXCLUSION {
            out.push(PointCheck { x: x.clone(), t: *t, excluded: true, identity_relerr: None, margin: None, v_term: None });
            continue;
        }
        let der = beta_derivs(&params, s1, s2);
        let grad: Vec<f64> = u
            .iter()
            .enumerate()
            .map(|(a, v)| {
                if a < params.m1 {
                    if s1 > 0.0 { 0.5 * der.d1 / s1 * v } else { 0.0 }
                } else if s2 > 0.0 {
                    0.5 * der.d2 / s2 * v
                } else {
                    0.0
                }
            })
            .collect();
        let r = tables.r_field()[0];
        let radial: f64 = grad.iter().zip(&u).map(|(a, b)| a * b).sum();
        let r_term = r * radial;
        // G_j sits at slot offset in u
        let g_off = if params.swapped { 0 } else { 1 };
        let v_terms: Vec<f64> = (0..d).map(|j| tables.axes[j].v[0] * grad[g_off + j] * gv[j]).collect();
        let v_sum: f64 = v_terms.iter().sum();
        let jt: Vec<f64> = arrange(&params, fl.ft[0], &fl.gt.iter().map(|v| v[0]).collect::<Vec<_>>());
        let mut hess_terms = vec![hess_quad_form(&params, &u, &jt)];
        for i in 0..d {
            let gi: Vec<f64> = fl.gd[i].iter().map(|v| v[0]).collect();
            let ji = arrange(&params, fl.fd[i][0], &gi);
            hess_terms.push(hess_quad_form(&params, &u, &ji));
        }
        let hess_sum: f64 = hess_terms.iter().sum();
        let rhs = r_term + v_sum + hess_sum;
        let star = fl.star_f_at(0, r) * fl.star_g_at(0, r);
        let target = params.gamma * star;
        let denom = rhs.abs().max(target);
        let margin = if denom == 0.0 { 0.0 } else { (rhs - target) / denom };

        let identity_relerr = if identity {
            let (lhs, same_branch) = fd_generator(state, &params, x, *t)?;
            if !same_branch {
                out.push(PointCheck { x: x.clone(), t: *t, excluded: true, identity_relerr: None, margin: None, v_term: None });
                continue;
            }
            let mag = r_term.abs() + v_terms.iter().map(|v| v.abs()).sum::<f64>() + hess_terms.iter().map(|v| v.abs()).sum::<f64>();
            Some(if mag == 0.0 { lhs.abs() } else { (lhs - rhs).abs() / mag })
        } else {
            None
        };
        out.push(PointCheck {
            x: x.clone(),
            t: *t,
            excluded: false,
            identity_relerr,
            margin: Some(margin),
            v_term: v_terms.iter().copied().reduce(f64::min),
        });
    }
    let evaluated = out.iter().filter(|c| !c.excluded).count();
    let worst = |f: fn(&PointCheck) -> Option<f64>, init: f64, pick: fn(f64, f64) -> f64| {
        out.iter().filter_map(f).fold(init, pick)
    };
    Ok(DiffIneqReport {
        evaluated,
        excluded: out.len() - evaluated,
        worst_identity_relerr: worst(|c| c.identity_relerr, 0.0, f64::max),
        worst_margin: worst(|c| c.margin, f64::INFINITY, f64::min),
        worst_v_term: worst(|c| c.v_term, f64::INFINITY, f64::min),
        points: out,
    })
}

/// `(d_t^2 - sum_i frakd_i^* frakd_i) b` at `(x, t)` by central differences,
/// with `frakd^* frakd = -p^2 d^2 - (p w'/w + 2 p') p d`. Steps `h` and `h/2`
/// are combined by Richardson extrapolation to cancel the `h^2` error term.
/// The flag reports whether every stencil point stayed on one branch of `B`.
fn fd_generator(state: &FlowState, params: &BellmanParams, x: &[f64], t: f64) -> Result<(f64, bool)> {
    let (b0, br0) = b_at(state, params, x, t)?;
    let mut same = true;
    let mut eval = |xx: &[f64], tt: f64| -> Result<f64> {
        let (v, br) = b_at(state, params, xx, tt)?;
        same &= br == br0;
        Ok(v)
    };
    let mut level = |scale: f64| -> Result<f64> {
        let ht = scale * 1e-4 * (1.0 + t);
        let btt = (eval(x, t + ht)? - 2.0 * b0 + eval(x, t - ht)?) / (ht * ht);
        let mut lt = 0.0;
        for (i, sys) in state.system.axes().iter().enumerate() {
            let xi = x[i];
            let room = (xi - sys.lo).min(sys.hi - xi);
            let h = scale * 1e-4 * (0.5 * room).min(1.0);
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += h;
            xm[i] -= h;
            let (bp, bm) = (eval(&xp, t)?, eval(&xm, t)?);
            let b1 = (bp - bm) / (2.0 * h);
            let b2 = (bp - 2.0 * b0 + bm) / (h * h);
            let p = sys.p(xi);
            lt += -p * p * b2 - (p * sys.dlogw(xi) + 2.0 * sys.dp(xi)) * p * b1;
        }
        Ok(btt - lt)
    };
    let coarse = level(1.0)?;
    let fine = level(0.5)?;
    Ok(((4.0 * fine - coarse) / 3.0, same))
}

/// Frame coefficient of the function `delta_i phi_k` itself.
pub fn ladder_image_coefficient(system: &ProductSystem, i: usize, ki: usize) -> f64 {
    let c = frame_constant(system.axis(i), ki);
    if c == 0.0 { 0.0 } else { 1.0 / c }
}
