//! Product systems, truncated spectral representations and the spectral
//! operators built on them: the projection off the bottom eigenspace, powers
//! of `L`, the Poisson semigroups `P_t` and `Q_t^i`, the derivations `delta_i`
//! and `p_i d/dx_i`, and the Riesz transforms `R_i = delta_i L^{-1/2} Pi`.
//!
//! Coefficients live on the box `{0..=N}^d`, stored densely in row-major
//! order. Everything that produces a ladder image returns grid values.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{LabError, Result};
use crate::orthosys::{AxisSystem, Family};
use crate::quadgrid::{gauss_rule, GridFn, QuadRule, TensorGrid};
use crate::tensor::{flat_index, multi_mode_product, unflatten, Mat};

/// Tensor product of one-dimensional systems.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductSystem {
    axes: Vec<AxisSystem>,
}

impl ProductSystem {
    pub fn new(axes: Vec<AxisSystem>) -> Result<Self> {
        if axes.is_empty() {
            return Err(LabError::Argument("a product system needs d >= 1".into()));
        }
        Ok(ProductSystem { axes })
    }

    /// `d` copies of one family.
    pub fn uniform(family: Family, d: usize) -> Result<Self> {
        let axis = AxisSystem::new(family)?;
        ProductSystem::new(vec![axis; d])
    }

    pub fn d(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[AxisSystem] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> &AxisSystem {
        &self.axes[i]
    }

    pub fn lambda(&self, k: &[usize]) -> f64 {
        self.axes.iter().zip(k).map(|(s, &ki)| s.lambda(ki)).sum()
    }

    /// Bottom of the spectrum, `Lambda_0 = sum_i lambda_0^i`.
    pub fn lambda0(&self) -> f64 {
        self.axes.iter().map(|s| s.lambda(0)).sum()
    }

    pub fn a_total(&self) -> f64 {
        self.axes.iter().map(|s| s.a).sum()
    }

    /// Whether `Pi` removes the ground state.
    pub fn pi_removes_ground(&self) -> bool {
        self.lambda0() == 0.0
    }

    /// Constant `K` of the assumption `sum q_i^2 <= K r`.
    pub fn k_constant(&self) -> f64 {
        self.axes.iter().map(|s| s.family.assumption_constant()).fold(0.0, f64::max)
    }

    pub fn theorem_range(&self) -> bool {
        self.axes.iter().all(|s| s.family.theorem_range())
    }

    /// `r(x) = sum_i r_i(x_i)`.
    pub fn r(&self, x: &[f64]) -> f64 {
        self.axes.iter().zip(x).map(|(s, &xi)| s.r_closed(xi)).sum()
    }

    /// Bound `24 (1 + sqrt K)(p* - 1)` on the vector Riesz transform.
    pub fn norm_bound(&self, p: f64) -> f64 {
        24.0 * (1.0 + self.k_constant().sqrt()) * (p_star(p) - 1.0)
    }

    pub fn label(&self) -> String {
        let f = self.axes[0].family;
        let mut s = f.name().to_string();
        if let Some(a) = f.alpha() {
            s.push_str(&format!("[a={a}"));
            if let Some(b) = f.beta() {
                s.push_str(&format!(",b={b}"));
            }
            s.push(']');
        }
        if self.axes.iter().any(|a| a.family != f) {
            s.push_str("+mixed");
        }
        s
    }
}

/// `max(p, p/(p-1))`.
pub fn p_star(p: f64) -> f64 {
    p.max(p / (p - 1.0))
}

/// Index vector `(k_1, .., k_d)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn zero(d: usize) -> Self {
        MultiIndex(vec![0; d])
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

/// All multi-indices of the box `{0..=n}^d` in row-major order.
pub fn box_indices(d: usize, n: usize) -> Vec<MultiIndex> {
    let shape = vec![n + 1; d];
    let count = (n + 1).pow(d as u32);
    (0..count).map(|f| MultiIndex(unflatten(f, &shape))).collect()
}

fn box_shape(d: usize, n: usize) -> Vec<usize> {
    vec![n + 1; d]
}

/// Truncated expansion `sum_k c_k phi_k` over `{0..=N}^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffFn {
    system: ProductSystem,
    n: usize,
    data: Vec<f64>,
}

impl CoeffFn {
    pub fn zeros(system: &ProductSystem, n: usize) -> Self {
        let len = (n + 1).pow(system.d() as u32);
        CoeffFn { system: system.clone(), n, data: vec![0.0; len] }
    }

    pub fn from_dense(system: &ProductSystem, n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != (n + 1).pow(system.d() as u32) {
            return Err(LabError::Argument("coefficient array size mismatch".into()));
        }
        Ok(CoeffFn { system: system.clone(), n, data })
    }

    pub fn from_entries(
        system: &ProductSystem,
        n: usize,
        entries: impl IntoIterator<Item = (MultiIndex, f64)>,
    ) -> Result<Self> {
        let mut f = CoeffFn::zeros(system, n);
        for (k, v) in entries {
            f.set(&k, v)?;
        }
        Ok(f)
    }

    /// The basis element `phi_k`.
    pub fn basis(system: &ProductSystem, n: usize, k: &MultiIndex) -> Result<Self> {
        CoeffFn::from_entries(system, n, [(k.clone(), 1.0)])
    }

    /// Coefficients drawn i.i.d. standard normal, restricted to the range of
    /// `Pi` when `pi_range` is set.
    pub fn random(system: &ProductSystem, n: usize, pi_range: bool, rng: &mut impl Rng) -> Self {
        let mut f = CoeffFn::zeros(system, n);
        for v in f.data.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        if pi_range {
            f = apply_pi(&f);
        }
        f
    }

    pub fn system(&self) -> &ProductSystem {
        &self.system
    }

    pub fn degree_cap(&self) -> usize {
        self.n
    }

    pub fn shape(&self) -> Vec<usize> {
        box_shape(self.system.d(), self.n)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn check_index(&self, k: &MultiIndex) -> Result<usize> {
        if k.0.len() != self.system.d() || k.0.iter().any(|&ki| ki > self.n) {
            return Err(LabError::Argument(format!("index {:?} outside the truncation box", k.0)));
        }
        Ok(flat_index(&k.0, &self.shape()))
    }

    pub fn get(&self, k: &MultiIndex) -> f64 {
        self.check_index(k).map(|f| self.data[f]).unwrap_or(0.0)
    }

    pub fn set(&mut self, k: &MultiIndex, v: f64) -> Result<()> {
        let f = self.check_index(k)?;
        self.data[f] = v;
        Ok(())
    }

    /// Non-zero entries in index order.
    pub fn nonzero(&self) -> Vec<(MultiIndex, f64)> {
        let shape = self.shape();
        self.data
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(f, v)| (MultiIndex(unflatten(f, &shape)), *v))
            .collect()
    }

    /// `L^2` norm by Parseval.
    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Multiply every coefficient by `m(lambda_k, k)`.
    pub fn map_spectrum(&self, m: impl Fn(f64, &[usize]) -> f64) -> Self {
        let shape = self.shape();
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(f, v)| {
                if *v == 0.0 {
                    return 0.0;
                }
                let k = unflatten(f, &shape);
                v * m(self.system.lambda(&k), &k)
            })
            .collect();
        CoeffFn { system: self.system.clone(), n: self.n, data }
    }

    pub fn scaled(&self, s: f64) -> Self {
        CoeffFn { system: self.system.clone(), n: self.n, data: self.data.iter().map(|v| v * s).collect() }
    }
}

/// Expansion `sum_k b_k c_k^i delta_i phi_k` over `{k : k_i >= 1}` in the
/// orthonormal frame of ladder images along axis `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFrameFn {
    system: ProductSystem,
    axis: usize,
    n: usize,
    data: Vec<f64>,
}

impl ImageFrameFn {
    pub fn zeros(system: &ProductSystem, axis: usize, n: usize) -> Self {
        ImageFrameFn { system: system.clone(), axis, n, data: vec![0.0; (n + 1).pow(system.d() as u32)] }
    }

    pub fn from_dense(system: &ProductSystem, axis: usize, n: usize, mut data: Vec<f64>) -> Result<Self> {
        if axis >= system.d() {
            return Err(LabError::Argument(format!("axis {axis} out of range")));
        }
        if data.len() != (n + 1).pow(system.d() as u32) {
            return Err(LabError::Argument("coefficient array size mismatch".into()));
        }
        let shape = box_shape(system.d(), n);
        for (f, v) in data.iter_mut().enumerate() {
            if unflatten(f, &shape)[axis] == 0 {
                *v = 0.0;
            }
        }
        Ok(ImageFrameFn { system: system.clone(), axis, n, data })
    }

    /// Frame vector `c_m^i delta_i phi_m`.
    pub fn frame_vector(system: &ProductSystem, axis: usize, n: usize, m: &MultiIndex) -> Result<Self> {
        let mut g = ImageFrameFn::zeros(system, axis, n);
        g.set(m, 1.0)?;
        Ok(g)
    }

    pub fn random(system: &ProductSystem, axis: usize, n: usize, rng: &mut impl Rng) -> Self {
        let data = (0..(n + 1).pow(system.d() as u32)).map(|_| rng.sample(StandardNormal)).collect();
        ImageFrameFn::from_dense(system, axis, n, data).expect("sizes are consistent")
    }

    pub fn system(&self) -> &ProductSystem {
        &self.system
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    pub fn degree_cap(&self) -> usize {
        self.n
    }

    pub fn shape(&self) -> Vec<usize> {
        box_shape(self.system.d(), self.n)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, k: &MultiIndex) -> f64 {
        if k.0.len() != self.system.d() || k.0.iter().any(|&ki| ki > self.n) {
            return 0.0;
        }
        self.data[flat_index(&k.0, &self.shape())]
    }

    pub fn set(&mut self, k: &MultiIndex, v: f64) -> Result<()> {
        if k.0.len() != self.system.d() || k.0.iter().any(|&ki| ki > self.n) {
            return Err(LabError::Argument(format!("index {:?} outside the truncation box", k.0)));
        }
        if k.0[self.axis] == 0 {
            return Err(LabError::Argument("frame indices need k_i >= 1".into()));
        }
        let f = flat_index(&k.0, &self.shape());
        self.data[f] = v;
        Ok(())
    }

    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn map_spectrum(&self, m: impl Fn(f64) -> f64) -> Self {
        let shape = self.shape();
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(f, v)| if *v == 0.0 { 0.0 } else { v * m(self.system.lambda(&unflatten(f, &shape))) })
            .collect();
        ImageFrameFn { system: self.system.clone(), axis: self.axis, n: self.n, data }
    }
}

/// `c_k^i = (lambda_{k_i}^i - a_i)^{-1/2}` for `k_i >= 1`, else 0.
pub fn frame_constant(sys: &AxisSystem, ki: usize) -> f64 {
    if ki == 0 {
        0.0
    } else {
        1.0 / (sys.lambda(ki) - sys.a).sqrt()
    }
}

// --- per-axis tables -------------------------------------------------------

/// Values of the basis, its derivative, the ladder images and their
/// derivative at a set of nodes, plus the coefficient fields there.
#[derive(Debug, Clone)]
pub struct AxisTable {
    pub nodes: Vec<f64>,
    /// `phi_k(x_j)`, rows = nodes, cols = k
    pub phi: Mat,
    pub dphi: Mat,
    /// `(delta phi_k)(x_j)`
    pub delta: Mat,
    pub ddelta: Mat,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub v: Vec<f64>,
}

impl AxisTable {
    pub fn new(sys: &AxisSystem, nodes: &[f64], n: usize) -> Self {
        let rows = |f: &dyn Fn(f64) -> Vec<f64>| Mat::from_rows(nodes.iter().map(|&x| f(x)).collect());
        AxisTable {
            nodes: nodes.to_vec(),
            phi: rows(&|x| sys.phi_all_unchecked(n, x)),
            dphi: rows(&|x| sys.dphi_all_unchecked(n, x)),
            delta: rows(&|x| sys.delta_phi_all_unchecked(n, x)),
            ddelta: rows(&|x| sys.d_delta_phi_all_unchecked(n, x)),
            p: nodes.iter().map(|&x| sys.p(x)).collect(),
            q: nodes.iter().map(|&x| sys.q(x)).collect(),
            r: nodes.iter().map(|&x| sys.r_closed(x)).collect(),
            v: nodes.iter().map(|&x| sys.v_closed(x)).collect(),
        }
    }

    fn op(&self, op: AxisOp) -> &Mat {
        match op {
            AxisOp::Phi => &self.phi,
            AxisOp::DPhi => &self.dphi,
            AxisOp::Delta => &self.delta,
            AxisOp::DDelta => &self.ddelta,
        }
    }
}

/// Which per-axis table a synthesis uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisOp {
    Phi,
    DPhi,
    Delta,
    DDelta,
}

/// Axis tables for a tensor grid and a truncation degree.
#[derive(Debug, Clone)]
pub struct GridTables {
    pub grid: Arc<TensorGrid>,
    pub n: usize,
    pub axes: Vec<AxisTable>,
}

impl GridTables {
    pub fn new(system: &ProductSystem, grid: Arc<TensorGrid>, n: usize) -> Result<Self> {
        if grid.d() != system.d() {
            return Err(LabError::Argument(format!(
                "grid dimension {} does not match system dimension {}",
                grid.d(),
                system.d()
            )));
        }
        let axes = system
            .axes()
            .iter()
            .zip(grid.axes())
            .map(|(s, rule)| AxisTable::new(s, &rule.nodes, n))
            .collect();
        Ok(GridTables { grid, n, axes })
    }

    /// Tables at a single point; the grid has unit weights.
    pub fn at_point(system: &ProductSystem, x: &[f64], n: usize) -> Result<Self> {
        for (s, &xi) in system.axes().iter().zip(x) {
            s.check_domain(xi)?;
        }
        let rules = x.iter().map(|&xi| QuadRule { nodes: vec![xi], weights: vec![1.0] }).collect();
        GridTables::new(system, Arc::new(TensorGrid::new(rules)?), n)
    }

    /// Synthesize coefficient tensor `coeffs` (shape `{0..=n}^d`) with one table per axis.
    pub fn synth(&self, coeffs: &[f64], ops: &[AxisOp]) -> Vec<f64> {
        let d = self.axes.len();
        let mats: Vec<&Mat> = self.axes.iter().zip(ops).map(|(t, &o)| t.op(o)).collect();
        multi_mode_product(coeffs, &box_shape(d, self.n), &mats).0
    }

    /// Adjoint of [`GridTables::synth`]: `sum_x values(x) prod_a table_a(x_a, k_a)`.
    pub fn analyze(&self, values: &[f64], ops: &[AxisOp]) -> Vec<f64> {
        let mats: Vec<Mat> = self.axes.iter().zip(ops).map(|(t, &o)| t.op(o).transpose()).collect();
        let refs: Vec<&Mat> = mats.iter().collect();
        multi_mode_product(values, self.grid.shape(), &refs).0
    }

    /// Field `f_a(x_a)` of axis `a` broadcast to the flattened grid.
    pub fn broadcast(&self, axis: usize, field: &[f64]) -> Vec<f64> {
        (0..self.grid.size()).map(|j| field[self.grid.multi_index(j)[axis]]).collect()
    }

    /// `r(x)` on the grid.
    pub fn r_field(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.size()];
        for (a, t) in self.axes.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(self.broadcast(a, &t.r)) {
                *o += v;
            }
        }
        out
    }

    fn ops_with(&self, axis: usize, op: AxisOp) -> Vec<AxisOp> {
        (0..self.axes.len()).map(|a| if a == axis { op } else { AxisOp::Phi }).collect()
    }
}

fn check_cap(tables: &GridTables, n: usize) -> Result<()> {
    if tables.n != n {
        return Err(LabError::Argument(format!("tables built for N={}, function has N={n}", tables.n)));
    }
    Ok(())
}

// --- operators ---------------------------------------------------------------

/// Coefficients `<f, phi_k>` by tensor Gauss quadrature on `grid`.
pub fn project_on(
    f: impl Fn(&[f64]) -> f64,
    system: &ProductSystem,
    n: usize,
    grid: Arc<TensorGrid>,
) -> Result<CoeffFn> {
    for &len in grid.shape() {
        if len < 2 * n {
            return Err(LabError::Resolution { got: len, need: 2 * n });
        }
    }
    let tables = GridTables::new(system, grid.clone(), n)?;
    let vals: Vec<f64> = (0..grid.size()).map(|j| f(&grid.node(j)) * grid.weights()[j]).collect();
    let coeffs = tables.analyze(&vals, &vec![AxisOp::Phi; system.d()]);
    CoeffFn::from_dense(system, n, coeffs)
}

/// Gauss grid with `m` points per axis.
pub fn gauss_grid(system: &ProductSystem, m: usize) -> Result<Arc<TensorGrid>> {
    let rules = system.axes().iter().map(|s| gauss_rule(s, m)).collect::<Result<Vec<_>>>()?;
    Ok(Arc::new(TensorGrid::new(rules)?))
}

/// [`project_on`] with `2N + 2` Gauss points per axis.
pub fn project(f: impl Fn(&[f64]) -> f64, system: &ProductSystem, n: usize) -> Result<CoeffFn> {
    project_on(f, system, n, gauss_grid(system, 2 * n + 2)?)
}

/// Values of `f` on the grid.
pub fn synth(f: &CoeffFn, grid: &Arc<TensorGrid>) -> Result<GridFn> {
    let t = GridTables::new(f.system(), grid.clone(), f.degree_cap())?;
    synth_with(f, &t)
}

pub fn synth_with(f: &CoeffFn, tables: &GridTables) -> Result<GridFn> {
    check_cap(tables, f.degree_cap())?;
    GridFn::scalar(tables.grid.clone(), tables.synth(f.data(), &vec![AxisOp::Phi; f.system().d()]))
}

/// `Pi f`: drop the ground coefficient iff `Lambda_0 = 0`.
pub fn apply_pi(f: &CoeffFn) -> CoeffFn {
    let mut out = f.clone();
    if f.system().pi_removes_ground() {
        out.data[0] = 0.0;
    }
    out
}

/// `L^s f` by spectral calculus.
pub fn apply_l_power(f: &CoeffFn, s: f64) -> Result<CoeffFn> {
    if s < 0.0 && f.system().pi_removes_ground() && f.data()[0] != 0.0 {
        return Err(LabError::Singular(format!(
            "L^{s} applied to a function with a ground-state component"
        )));
    }
    Ok(f.map_spectrum(|lam, _| if lam == 0.0 { if s == 0.0 { 1.0 } else { 0.0 } } else { lam.powf(s) }))
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(LabError::Argument(format!("time must be finite and non-negative, got {t}")));
    }
    Ok(())
}

/// `P_t f = e^{-t L^{1/2}} f`.
pub fn apply_pt(f: &CoeffFn, t: f64) -> Result<CoeffFn> {
    check_time(t)?;
    Ok(f.map_spectrum(|lam, _| (-t * lam.sqrt()).exp()))
}

/// `d/dt P_t f`.
pub fn dt_pt(f: &CoeffFn, t: f64) -> Result<CoeffFn> {
    check_time(t)?;
    Ok(f.map_spectrum(|lam, _| -lam.sqrt() * (-t * lam.sqrt()).exp()))
}

/// `delta_i f` on the grid, assembled from the ladder formulas.
pub fn apply_delta(f: &CoeffFn, i: usize, grid: &Arc<TensorGrid>) -> Result<GridFn> {
    let t = GridTables::new(f.system(), grid.clone(), f.degree_cap())?;
    apply_delta_with(f, i, &t)
}

pub fn apply_delta_with(f: &CoeffFn, i: usize, tables: &GridTables) -> Result<GridFn> {
    check_cap(tables, f.degree_cap())?;
    if i >= f.system().d() {
        return Err(LabError::Argument(format!("axis {i} out of range")));
    }
    GridFn::scalar(tables.grid.clone(), tables.synth(f.data(), &tables.ops_with(i, AxisOp::Delta)))
}

/// `p_i d/dx_i f = delta_i f - q_i f` on the grid.
pub fn apply_frakd(f: &CoeffFn, i: usize, grid: &Arc<TensorGrid>) -> Result<GridFn> {
    let t = GridTables::new(f.system(), grid.clone(), f.degree_cap())?;
    let df = apply_delta_with(f, i, &t)?;
    let vals = t.synth(f.data(), &vec![AxisOp::Phi; f.system().d()]);
    let q = t.broadcast(i, &t.axes[i].q);
    let out = df.values().iter().zip(&vals).zip(&q).map(|((a, v), q)| a - q * v).collect();
    GridFn::scalar(grid.clone(), out)
}

/// Frame coefficients `<g, c_k^i delta_i phi_k>` by tensor Gauss quadrature.
pub fn analyze_image_on(
    g: impl Fn(&[f64]) -> f64,
    system: &ProductSystem,
    i: usize,
    n: usize,
    grid: Arc<TensorGrid>,
) -> Result<ImageFrameFn> {
    if i >= system.d() {
        return Err(LabError::Argument(format!("axis {i} out of range")));
    }
    for &len in grid.shape() {
        if len < 2 * n {
            return Err(LabError::Resolution { got: len, need: 2 * n });
        }
    }
    let tables = GridTables::new(system, grid.clone(), n)?;
    let vals: Vec<f64> = (0..grid.size()).map(|j| g(&grid.node(j)) * grid.weights()[j]).collect();
    let raw = tables.analyze(&vals, &tables.ops_with(i, AxisOp::Delta));
    let shape = box_shape(system.d(), n);
    let data = raw
        .iter()
        .enumerate()
        .map(|(f, v)| v * frame_constant(system.axis(i), unflatten(f, &shape)[i]))
        .collect();
    ImageFrameFn::from_dense(system, i, n, data)
}

/// [`analyze_image_on`] with `2N + 2` Gauss points per axis.
pub fn analyze_image(
    g: impl Fn(&[f64]) -> f64,
    system: &ProductSystem,
    i: usize,
    n: usize,
) -> Result<ImageFrameFn> {
    analyze_image_on(g, system, i, n, gauss_grid(system, 2 * n + 2)?)
}

/// Coefficients `b_k c_k^i` multiplying `delta_i phi_k` in the synthesis of `g`.
pub fn image_synthesis_coeffs(g: &ImageFrameFn) -> Vec<f64> {
    let shape = g.shape();
    let ax = g.system().axis(g.axis());
    g.data()
        .iter()
        .enumerate()
        .map(|(f, v)| if *v == 0.0 { 0.0 } else { v * frame_constant(ax, unflatten(f, &shape)[g.axis()]) })
        .collect()
}

/// Values of `g` on the grid.
pub fn synth_image(g: &ImageFrameFn, grid: &Arc<TensorGrid>) -> Result<GridFn> {
    let t = GridTables::new(g.system(), grid.clone(), g.degree_cap())?;
    synth_image_with(g, &t)
}

pub fn synth_image_with(g: &ImageFrameFn, tables: &GridTables) -> Result<GridFn> {
    check_cap(tables, g.degree_cap())?;
    let c = image_synthesis_coeffs(g);
    GridFn::scalar(tables.grid.clone(), tables.synth(&c, &tables.ops_with(g.axis(), AxisOp::Delta)))
}

/// `Q_t^i g`.
pub fn apply_qt(g: &ImageFrameFn, t: f64) -> Result<ImageFrameFn> {
    check_time(t)?;
    Ok(g.map_spectrum(|lam| (-t * lam.sqrt()).exp()))
}

/// `d/dt Q_t^i g`.
pub fn dt_qt(g: &ImageFrameFn, t: f64) -> Result<ImageFrameFn> {
    check_time(t)?;
    Ok(g.map_spectrum(|lam| -lam.sqrt() * (-t * lam.sqrt()).exp()))
}

/// Coefficients of `L^{-1/2} Pi f`.
pub fn riesz_coeffs(f: &CoeffFn) -> CoeffFn {
    apply_l_power(&apply_pi(f), -0.5).expect("Pi removes the only zero eigenvalue")
}

/// `R_i f = delta_i L^{-1/2} Pi f` on the grid.
pub fn riesz(f: &CoeffFn, i: usize, grid: &Arc<TensorGrid>) -> Result<GridFn> {
    apply_delta(&riesz_coeffs(f), i, grid)
}

/// `(R_1 f, .., R_d f)` on the grid.
pub fn riesz_vector(f: &CoeffFn, grid: &Arc<TensorGrid>) -> Result<GridFn> {
    let t = GridTables::new(f.system(), grid.clone(), f.degree_cap())?;
    riesz_vector_with(f, &t)
}

pub fn riesz_vector_with(f: &CoeffFn, tables: &GridTables) -> Result<GridFn> {
    check_cap(tables, f.degree_cap())?;
    let c = riesz_coeffs(f);
    let comps = (0..f.system().d())
        .map(|i| tables.synth(c.data(), &tables.ops_with(i, AxisOp::Delta)))
        .collect();
    GridFn::vector(tables.grid.clone(), comps)
}

/// Pointwise `<delta phi_k, delta phi_m>` against `<delta^* delta phi_k, phi_m>` on
/// one axis, the adjoint applied through its differential expression.
/// Returns the largest absolute discrepancy over `k, m <= n`.
pub fn adjoint_commutation_defect(sys: &AxisSystem, n: usize, rule: &QuadRule) -> f64 {
    let mut lhs = vec![vec![0.0; n + 1]; n + 1];
    let mut rhs = vec![vec![0.0; n + 1]; n + 1];
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let phi = sys.phi_all_unchecked(n, x);
        let dl = sys.delta_phi_all_unchecked(n, x);
        let ddl = sys.d_delta_phi_all_unchecked(n, x);
        let adj: Vec<f64> = (0..=n).map(|k| sys.apply_delta_adjoint(x, dl[k], ddl[k])).collect();
        for k in 0..=n {
            for m in 0..=n {
                lhs[k][m] += w * dl[k] * dl[m];
                rhs[k][m] += w * adj[k] * phi[m];
            }
        }
    }
    let mut worst: f64 = 0.0;
    for k in 0..=n {
        for m in 0..=n {
            worst = worst.max((lhs[k][m] - rhs[k][m]).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadgrid::{inner, lp_norm};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn families() -> Vec<Family> {
        vec![
            Family::HermitePoly,
            Family::LaguerrePoly { alpha: 0.5 },
            Family::JacobiPoly { alpha: 0.5, beta: 0.5 },
            Family::HermiteFunc,
            Family::LaguerreFuncH { alpha: 1.5 },
            Family::LaguerreFuncConv { alpha: 0.0 },
            Family::JacobiFunc { alpha: 0.5, beta: 1.0 },
        ]
    }

    #[test]
    fn projection_examples() {
        let sys = ProductSystem::uniform(Family::HermitePoly, 1).unwrap();
        let c = project(|x| x[0], &sys, 4).unwrap();
        assert!((c.get(&MultiIndex(vec![1])) - 0.5f64.sqrt()).abs() < 1e-14);
        assert!(c.get(&MultiIndex(vec![0])).abs() < 1e-14);

        let sys2 = ProductSystem::uniform(Family::LaguerreFuncConv { alpha: 0.3 }, 2).unwrap();
        let f = CoeffFn::from_entries(
            &sys2,
            5,
            [(MultiIndex(vec![1, 2]), 2.0), (MultiIndex(vec![3, 0]), -3.0)],
        )
        .unwrap();
        let grid = gauss_grid(&sys2, 12).unwrap();
        let vals = synth(&f, &grid).unwrap();
        let tab = GridTables::new(&sys2, grid.clone(), 5).unwrap();
        let back = project_on(
            |x| {
                let t = GridTables::at_point(&sys2, x, 5).unwrap();
                t.synth(f.data(), &[AxisOp::Phi, AxisOp::Phi])[0]
            },
            &sys2,
            5,
            grid.clone(),
        )
        .unwrap();
        for (a, b) in back.data().iter().zip(f.data()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(vals.values().len(), tab.grid.size());
        assert!(matches!(
            project_on(|_| 1.0, &sys2, 5, gauss_grid(&sys2, 9).unwrap()),
            Err(LabError::Resolution { got: 9, need: 10 })
        ));
    }

    #[test]
    fn pi_and_l_power() {
        let ou = ProductSystem::uniform(Family::HermitePoly, 2).unwrap();
        let f0 = CoeffFn::basis(&ou, 3, &MultiIndex::zero(2)).unwrap();
        assert_eq!(apply_pi(&f0).norm2(), 0.0);
        let ho = ProductSystem::uniform(Family::HermiteFunc, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = CoeffFn::random(&ho, 3, false, &mut rng);
        assert_eq!(apply_pi(&g), g);

        let k = MultiIndex(vec![2, 1]);
        let phi = CoeffFn::basis(&ou, 3, &k).unwrap();
        assert_eq!(apply_l_power(&phi, 1.0).unwrap().get(&k), 6.0);
        assert_eq!(apply_l_power(&phi, 0.0).unwrap(), phi);
        let r = CoeffFn::random(&ou, 3, true, &mut rng);
        let back = apply_l_power(&apply_l_power(&r, -0.5).unwrap(), 0.5).unwrap();
        for (a, b) in back.data().iter().zip(r.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(apply_l_power(&f0, -0.5), Err(LabError::Singular(_))));
    }

    #[test]
    fn semigroups() {
        let sys = ProductSystem::uniform(Family::JacobiPoly { alpha: 0.2, beta: 0.7 }, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = CoeffFn::random(&sys, 4, false, &mut rng);
        assert_eq!(apply_pt(&f, 0.0).unwrap(), f);
        let two = apply_pt(&apply_pt(&f, 1.0).unwrap(), 1.0).unwrap();
        let direct = apply_pt(&f, 2.0).unwrap();
        for (a, b) in two.data().iter().zip(direct.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let k = MultiIndex(vec![1, 3]);
        let phi = CoeffFn::basis(&sys, 4, &k).unwrap();
        let lam = sys.lambda(&k.0);
        assert!((apply_pt(&phi, 1.0).unwrap().get(&k) - (-lam.sqrt()).exp()).abs() < 1e-15);
        assert!((dt_pt(&phi, 1.0).unwrap().get(&k) + lam.sqrt() * (-lam.sqrt()).exp()).abs() < 1e-15);
        assert!(apply_pt(&f, -1.0).is_err());

        let g = ImageFrameFn::random(&sys, 1, 4, &mut rng);
        assert_eq!(apply_qt(&g, 0.0).unwrap(), g);
        let q2 = apply_qt(&apply_qt(&g, 1.0).unwrap(), 1.0).unwrap();
        let q2d = apply_qt(&g, 2.0).unwrap();
        for (a, b) in q2.data().iter().zip(q2d.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(dt_qt(&g, -0.1).is_err());
    }

    #[test]
    fn delta_examples() {
        let ou = ProductSystem::uniform(Family::HermitePoly, 2).unwrap();
        let grid = gauss_grid(&ou, 5).unwrap();
        let f = CoeffFn::basis(&ou, 3, &MultiIndex(vec![1, 0])).unwrap();
        let d = apply_delta(&f, 0, &grid).unwrap();
        assert!(d.values().iter().all(|v| (v - 2f64.sqrt()).abs() < 1e-14));
        let c = CoeffFn::basis(&ou, 3, &MultiIndex::zero(2)).unwrap().scaled(4.0);
        for i in 0..2 {
            assert!(apply_delta(&c, i, &grid).unwrap().values().iter().all(|v| *v == 0.0));
        }

        let ho = ProductSystem::uniform(Family::HermiteFunc, 1).unwrap();
        let g1 = gauss_grid(&ho, 6).unwrap();
        let h1 = CoeffFn::basis(&ho, 2, &MultiIndex(vec![1])).unwrap();
        let fd = apply_frakd(&h1, 0, &g1).unwrap();
        let ax = ho.axis(0);
        for (j, &x) in g1.axis(0).nodes.iter().enumerate() {
            let want = 2f64.sqrt() * ax.eval_phi(0, x).unwrap() - x * ax.eval_phi(1, x).unwrap();
            let h = 1e-5;
            let num = (ax.eval_phi(1, x + h).unwrap() - ax.eval_phi(1, x - h).unwrap()) / (2.0 * h);
            assert!((fd.values()[j] - want).abs() < 1e-13);
            assert!((fd.values()[j] - num).abs() < 1e-8);
        }
    }

    #[test]
    fn frame_analysis() {
        for fam in families() {
            let sys = ProductSystem::uniform(fam, 2).unwrap();
            let n = 4;
            let grid = gauss_grid(&sys, 2 * n + 3).unwrap();
            let m = MultiIndex(vec![1, 2]);
            for i in 0..2 {
                let phi = CoeffFn::basis(&sys, n, &m).unwrap();
                let img = apply_delta(&phi, i, &grid).unwrap();
                let norm2 = inner(&img, &img).unwrap();
                let want = sys.axis(i).lambda(m.0[i]) - sys.axis(i).a;
                assert!((norm2 - want).abs() < 1e-8 * (1.0 + want), "{fam:?}");

                let tab = GridTables::new(&sys, grid.clone(), n).unwrap();
                let vals = img.values().to_vec();
                let lookup = |x: &[f64]| {
                    let t = GridTables::at_point(&sys, x, n).unwrap();
                    t.synth(phi.data(), &t.ops_with(i, AxisOp::Delta))[0]
                };
                let an = analyze_image_on(lookup, &sys, i, n, grid.clone()).unwrap();
                for (f, v) in an.data().iter().enumerate() {
                    let k = unflatten(f, &an.shape());
                    let want = if k == m.0 { (sys.axis(i).lambda(m.0[i]) - sys.axis(i).a).sqrt() } else { 0.0 };
                    assert!((v - want).abs() < 1e-9, "{fam:?} axis {i} index {k:?}: {v}");
                }
                let back = synth_image_with(&an, &tab).unwrap();
                for (a, b) in back.values().iter().zip(&vals) {
                    assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
                }
            }
        }
    }

    #[test]
    fn riesz_examples() {
        let ou = ProductSystem::uniform(Family::HermitePoly, 1).unwrap();
        let grid = gauss_grid(&ou, 10).unwrap();
        for k in 1..6 {
            let f = CoeffFn::basis(&ou, 6, &MultiIndex(vec![k])).unwrap();
            let r = riesz(&f, 0, &grid).unwrap();
            assert!((lp_norm(&r, 2.0).unwrap() - 1.0).abs() < 1e-12);
        }
        let f0 = CoeffFn::basis(&ou, 6, &MultiIndex(vec![0])).unwrap();
        assert!(riesz(&f0, 0, &grid).unwrap().values().iter().all(|v| *v == 0.0));

        let ho = ProductSystem::uniform(Family::HermiteFunc, 2).unwrap();
        let g2 = gauss_grid(&ho, 6).unwrap();
        let f = CoeffFn::basis(&ho, 3, &MultiIndex(vec![1, 0])).unwrap();
        let r1 = riesz(&f, 0, &g2).unwrap();
        let h00 = synth(&CoeffFn::basis(&ho, 3, &MultiIndex(vec![0, 0])).unwrap(), &g2).unwrap();
        for (a, b) in r1.values().iter().zip(h00.values()) {
            assert!((a - 0.5f64.sqrt() * b).abs() < 1e-13);
        }
    }

    #[test]
    fn riesz_vector_is_l2_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for fam in families() {
            for d in 1..=2 {
                let sys = ProductSystem::uniform(fam, d).unwrap();
                let n = 5;
                let grid = gauss_grid(&sys, n + 3).unwrap();
                let tab = GridTables::new(&sys, grid.clone(), n).unwrap();
                for _ in 0..5 {
                    let f = CoeffFn::random(&sys, n, false, &mut rng);
                    let r = riesz_vector_with(&f, &tab).unwrap();
                    let rn = lp_norm(&r, 2.0).unwrap();
                    assert!(rn <= f.norm2() * (1.0 + 1e-10), "{fam:?} d={d}");
                }
            }
        }
    }

    #[test]
    fn adjoint_commutation() {
        for fam in families() {
            let s = AxisSystem::new(fam).unwrap();
            let rule = gauss_rule(&s, 20).unwrap();
            assert!(adjoint_commutation_defect(&s, 8, &rule) < 1e-8, "{fam:?}");
        }
    }

    #[test]
    fn product_system_constants() {
        let lh = ProductSystem::uniform(Family::LaguerreFuncH { alpha: 1.5 }, 2).unwrap();
        assert!((lh.k_constant() - 2.0).abs() < 1e-15);
        assert!((lh.norm_bound(2.0) - 24.0 * (1.0 + 2f64.sqrt())).abs() < 1e-12);
        let jp = ProductSystem::uniform(Family::JacobiPoly { alpha: 0.5, beta: 0.5 }, 2).unwrap();
        assert_eq!(jp.norm_bound(4.0), 72.0);
        let ho = ProductSystem::uniform(Family::HermiteFunc, 3).unwrap();
        assert_eq!(ho.norm_bound(2.0), 48.0);
        assert_eq!(ho.lambda0(), 3.0);
        assert!(!ho.pi_removes_ground());
        assert!((p_star(1.5) - 3.0).abs() < 1e-15);
    }
}
