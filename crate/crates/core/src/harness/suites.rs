//! The checks behind each suite. Every unit of work runs under
//! `catch_unwind`, so one failure or panic shows up as a failed record and
//! the remaining units still run.

use std::any::Any;
use std::panic::{catch_unwind, AssertUnwindSafe};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::SuiteConfig;
use super::report::{CheckRecord, Cmp, EmbeddingRow, NormRow};
use crate::assumptions::{check_assumptions_with, sample_theorem_family};
use crate::bellman::{beta_derivs, check_grad_radial, check_hess_lower, grad_b, random_point, BellmanParams, MollifierRule};
use crate::embedding::{
    diff_ineq_check, embedding_check_with, embedding_lhs, form1_check, sample_points, t_moment_numeric, FlowState,
};
use crate::error::{LabError, Result};
use crate::normest::{
    bound_suite, choose_grid, constants_report, default_truncation, dimension_spread,
    pnorm_lower_bound, pnorm_lower_bound_on, skew_constant, truncation_ladder, Discretization, Method, NormOpts,
};
use crate::orthosys::{AxisSystem, Family};
use crate::quadgrid::{gauss_rule, lp_norm};
use crate::spectral::{
    box_indices, gauss_grid, p_star, riesz_vector_with, synth_with, CoeffFn, GridTables, ImageFrameFn, ProductSystem,
};

/// Records and plot rows produced by one suite.
#[derive(Debug, Default)]
pub struct SuiteOutput {
    pub records: Vec<CheckRecord>,
    pub norm_rows: Vec<NormRow>,
    pub embedding_rows: Vec<EmbeddingRow>,
}

impl SuiteOutput {
    fn extend(&mut self, other: SuiteOutput) {
        self.records.extend(other.records);
        self.norm_rows.extend(other.norm_rows);
        self.embedding_rows.extend(other.embedding_rows);
    }
}

impl From<Vec<CheckRecord>> for SuiteOutput {
    fn from(records: Vec<CheckRecord>) -> Self {
        SuiteOutput { records, ..SuiteOutput::default() }
    }
}

/// Seed of one unit of work, derived from the run seed and a tag naming the unit.
pub fn check_seed(seed: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

fn rng_for(seed: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(check_seed(seed, tag))
}

fn panic_message(e: Box<dyn Any + Send>) -> String {
    if let Some(s) = e.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = e.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".into()
    }
}

/// Common context of the records of one unit.
struct Unit {
    suite: &'static str,
    inputs: String,
}

impl Unit {
    fn new(suite: &'static str, inputs: Value) -> Self {
        Unit { suite, inputs: inputs.to_string() }
    }

    fn cmp(&self, check: &str, anchor: &str, value: f64, cmp: Cmp, bound: f64) -> CheckRecord {
        CheckRecord::compare(self.suite, check, anchor, self.inputs.clone(), value, cmp, bound)
    }

    fn diagnostic(&self, check: &str, anchor: &str, value: f64, note: String) -> CheckRecord {
        let mut r = CheckRecord::failed(self.suite, check, anchor, self.inputs.clone(), note);
        r.value = value.is_finite().then_some(value);
        r.pass = true;
        r
    }

    /// Run `f`; an error or a panic becomes one failed record named `check`.
    fn run(&self, check: &str, anchor: &str, f: impl FnOnce(&Unit) -> Result<Vec<CheckRecord>>) -> Vec<CheckRecord> {
        match catch_unwind(AssertUnwindSafe(|| f(self))) {
            Ok(Ok(records)) => records,
            Ok(Err(e)) => vec![CheckRecord::failed(self.suite, check, anchor, self.inputs.clone(), format!("error: {e}"))],
            Err(p) => vec![CheckRecord::failed(
                self.suite,
                check,
                anchor,
                self.inputs.clone(),
                format!("panic: {}", panic_message(p)),
            )],
        }
    }
}

fn flatten(parts: Vec<Vec<CheckRecord>>) -> Vec<CheckRecord> {
    parts.into_iter().flatten().collect()
}

/// Families for the one-dimensional suites: each configured family, plus two
/// draws from its theorem range when the user did not pick the systems.
fn sampled_families(cfg: &SuiteConfig, tag: &str) -> Vec<Family> {
    if cfg.explicit_systems {
        return cfg.systems.clone();
    }
    let mut out = Vec::new();
    for f in &cfg.systems {
        out.push(*f);
        if f.alpha().is_some() {
            let mut rng = rng_for(cfg.seed, &format!("{tag}.params.{}", f.name()));
            out.push(sample_theorem_family(*f, &mut rng));
            out.push(sample_theorem_family(*f, &mut rng));
        }
    }
    out
}

// --- orthonormality and ladder ------------------------------------------------

const ORTHO_KMAX: usize = 20;

/// Interior points for finite differences: nodes of a short Gauss rule.
fn fd_points(s: &AxisSystem) -> Result<Vec<f64>> {
    Ok(gauss_rule(s, 8)?.nodes.into_iter().filter(|&x| s.contains(x)).collect())
}

fn fd_step(s: &AxisSystem, x: f64) -> f64 {
    let mut scale = 1.0 + x.abs();
    if s.lo.is_finite() {
        scale = scale.min(x - s.lo);
    }
    if s.hi.is_finite() {
        scale = scale.min(s.hi - x);
    }
    1e-4 * scale
}

/// Five-point first and second derivatives of `phi_0 ..= phi_kmax` at `x`.
fn fd_derivatives(s: &AxisSystem, kmax: usize, x: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let h = fd_step(s, x);
    let at = |t: f64| s.eval_phi_all(kmax, t);
    let (m2, m1, z, p1, p2) = (at(x - 2.0 * h)?, at(x - h)?, at(x)?, at(x + h)?, at(x + 2.0 * h)?);
    let d1 = (0..=kmax).map(|k| (m2[k] - 8.0 * m1[k] + 8.0 * p1[k] - p2[k]) / (12.0 * h)).collect();
    let d2 = (0..=kmax)
        .map(|k| (-m2[k] + 16.0 * m1[k] - 30.0 * z[k] + 16.0 * p1[k] - p2[k]) / (12.0 * h * h))
        .collect();
    Ok((z, d1, d2))
}

pub fn ortho_suite(cfg: &SuiteConfig) -> SuiteOutput {
    let tol = &cfg.tolerances;
    let kmax = cfg.n.unwrap_or(ORTHO_KMAX);
    let fams = sampled_families(cfg, "ortho");
    let parts: Vec<Vec<CheckRecord>> = fams
        .par_iter()
        .map(|fam| {
            let u = Unit::new("ortho", json!({"system": fam, "d": 1, "kmax": kmax}));
            let mut out = u.run("gram", "<phi_j, phi_k> = delta_jk", |u| {
                let s = AxisSystem::new(*fam)?;
                let rule = gauss_rule(&s, kmax + 12)?;
                let tab: Vec<Vec<f64>> = rule.nodes.iter().map(|&x| s.eval_phi_all(kmax, x)).collect::<Result<_>>()?;
                let mut worst = 0.0f64;
                for j in 0..=kmax {
                    for k in 0..=kmax {
                        let ip: f64 = tab.iter().zip(&rule.weights).map(|(t, w)| w * t[j] * t[k]).sum();
                        worst = worst.max((ip - if j == k { 1.0 } else { 0.0 }).abs());
                    }
                }
                Ok(vec![u.cmp("gram", "<phi_j, phi_k> = delta_jk", worst, Cmp::AtMost, tol.get("ortho.gram"))])
            });
            out.extend(u.run("eigen_fd", "L phi_k = lambda_k phi_k", |u| {
                let s = AxisSystem::new(*fam)?;
                let mut worst = 0.0f64;
                for x in fd_points(&s)? {
                    let (phi, d1, d2) = fd_derivatives(&s, kmax, x)?;
                    let (p, r) = (s.p(x), s.r_field(x)?);
                    let drift = (p * s.dlogw(x) + 2.0 * s.dp(x)) * p;
                    for k in 0..=kmax {
                        let lam = s.lambda(k);
                        let resid = -p * p * d2[k] - drift * d1[k] + r * phi[k] - lam * phi[k];
                        // local amplitude, which stays positive at the zeros of phi_k
                        let amp = (phi[k].powi(2) + (p * d1[k]).powi(2) / (lam + 1.0)).sqrt();
                        let scale = (lam + r.abs() + 1.0) * amp;
                        if scale > 0.0 {
                            worst = worst.max(resid.abs() / scale);
                        }
                    }
                }
                Ok(vec![u.cmp("eigen_fd", "L phi_k = lambda_k phi_k", worst, Cmp::AtMost, tol.get("ortho.eigen_fd"))])
            }));
            out
        })
        .collect();
    flatten(parts).into()
}

pub fn ladder_suite(cfg: &SuiteConfig) -> SuiteOutput {
    let tol = &cfg.tolerances;
    let kmax = cfg.n.unwrap_or(ORTHO_KMAX);
    let fams = sampled_families(cfg, "ladder");
    let parts: Vec<Vec<CheckRecord>> = fams
        .par_iter()
        .map(|fam| {
            let u = Unit::new("ladder", json!({"system": fam, "d": 1, "kmax": kmax}));
            let anchor = "||delta phi_k||^2 = lambda_k - a";
            let mut out = u.run("norm", anchor, |u| {
                let s = AxisSystem::new(*fam)?;
                let rule = gauss_rule(&s, kmax + 12)?;
                let mut sq = vec![0.0; kmax + 1];
                for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
                    if w == 0.0 {
                        continue;
                    }
                    for (k, acc) in sq.iter_mut().enumerate() {
                        *acc += w * s.eval_delta_phi(k, x)?.powi(2);
                    }
                }
                let worst = sq
                    .iter()
                    .enumerate()
                    .map(|(k, n2)| {
                        let want = s.lambda(k) - s.a;
                        (n2 - want).abs() / want.max(1.0)
                    })
                    .fold(0.0f64, f64::max);
                Ok(vec![u.cmp("norm", anchor, worst, Cmp::AtMost, tol.get("ladder.norm"))])
            });
            let anchor = "delta phi_k = p phi_k' + q phi_k";
            out.extend(u.run("pointwise", anchor, |u| {
                let s = AxisSystem::new(*fam)?;
                let mut worst = 0.0f64;
                for x in fd_points(&s)? {
                    let (phi, d1, _) = fd_derivatives(&s, kmax, x)?;
                    for k in 0..=kmax {
                        let fd = s.p(x) * d1[k] + s.q(x) * phi[k];
                        let lad = s.eval_delta_phi(k, x)?;
                        worst = worst.max((fd - lad).abs() / (1.0 + fd.abs() + lad.abs()));
                    }
                }
                Ok(vec![u.cmp("pointwise", anchor, worst, Cmp::AtMost, tol.get("ladder.pointwise"))])
            }));
            out
        })
        .collect();
    flatten(parts).into()
}

// --- assumptions ---------------------------------------------------------------

/// Out-of-range parameters the default run must flag.
pub const OUT_OF_RANGE_PROBE: Family = Family::JacobiPoly { alpha: -0.9, beta: 0.0 };

pub fn assumptions_suite(cfg: &SuiteConfig) -> SuiteOutput {
    let tol = cfg.tolerances.get("assumptions.slack");
    let samples = cfg.trials_or(10_000);
    let ds = cfg.ds_or(&[1, 2]);
    let fams = sampled_families(cfg, "assumptions");
    let cells: Vec<(Family, usize)> = fams.iter().flat_map(|f| ds.iter().map(move |&d| (*f, d))).collect();
    let mut parts: Vec<Vec<CheckRecord>> = cells
        .par_iter()
        .map(|&(fam, d)| {
            let u = Unit::new("assumptions", json!({"system": fam, "d": d, "samples": samples, "seed": cfg.seed}));
            u.run("a1", "v_i >= 0", |u| {
                let sys = ProductSystem::uniform(fam, d)?;
                let mut rng = rng_for(cfg.seed, &u.inputs);
                let rep = check_assumptions_with(&sys, samples, tol, &mut rng);
                let a1 = u
                    .cmp("a1", "v_i >= 0", rep.a1_violations as f64, Cmp::AtMost, 0.0)
                    .with_note(format!("min v = {:e} at {:?}", rep.min_v, rep.min_v_at));
                let a2 = u
                    .cmp("a2", "sum_i q_i^2 <= K r", rep.a2_violations as f64, Cmp::AtMost, 0.0)
                    .with_note(format!("K = {}, min slack = {:e} at {:?}", rep.k_constant, rep.a2_slack, rep.a2_slack_at));
                Ok(vec![a1, a2])
            })
        })
        .collect();
    if !cfg.explicit_systems {
        let u = Unit::new("assumptions", json!({"system": OUT_OF_RANGE_PROBE, "d": 1, "samples": samples, "seed": cfg.seed}));
        parts.push(u.run("flags_out_of_range", "v_i >= 0 fails outside the theorem range", |u| {
            let sys = ProductSystem::uniform(OUT_OF_RANGE_PROBE, 1)?;
            let rep = check_assumptions_with(&sys, samples, tol, &mut rng_for(cfg.seed, &u.inputs));
            Ok(vec![u
                .cmp("flags_out_of_range", "v_i >= 0 fails outside the theorem range", rep.a1_violations as f64, Cmp::AtLeast, 1.0)
                .with_note(format!("min v = {:e}", rep.min_v))])
        }));
    }
    flatten(parts).into()
}

// --- bilinear formula ------------------------------------------------------------

const FORM1_ANCHOR: &str = "<R_i f, g> = -4 int_0^inf <delta_i P_t Pi f, d_t Q_t^i g> t dt";

pub fn form1_suite(cfg: &SuiteConfig) -> SuiteOutput {
    let tol = &cfg.tolerances;
    let n = cfg.n.unwrap_or(6);
    let trials = cfg.trials_or(100);
    let ds = cfg.ds_or(&[1, 2]);
    let cells: Vec<(Family, usize)> = cfg.systems.iter().flat_map(|f| ds.iter().map(move |&d| (*f, d))).collect();
    let mut parts: Vec<Vec<CheckRecord>> = cells
        .par_iter()
        .map(|&(fam, d)| {
            let u = Unit::new("form1", json!({"system": fam, "d": d, "n": n, "trials": trials, "seed": cfg.seed}));
            let mut out = u.run("eigenpairs", FORM1_ANCHOR, |u| {
                let sys = ProductSystem::uniform(fam, d)?;
                let idx: Vec<_> = box_indices(d, n).into_iter().filter(|k| k.total() <= n).collect();
                let (mut worst, mut worst_t, mut count) = (0.0f64, 0.0f64, 0usize);
                for k in &idx {
                    let f = CoeffFn::basis(&sys, n, k)?;
                    for i in 0..d {
                        for m in idx.iter().filter(|m| m.0[i] >= 1) {
                            let c = form1_check(&f, &ImageFrameFn::frame_vector(&sys, i, n, m)?)?;
                            worst = worst.max(c.relerr);
                            worst_t = worst_t.max(c.t_quadrature_relerr);
                            count += 1;
                        }
                    }
                }
                Ok(vec![
                    u.cmp("eigenpairs", FORM1_ANCHOR, worst, Cmp::AtMost, tol.get("form1.relerr"))
                        .with_note(format!("{count} pairs with |k|, |m| <= {n}")),
                    u.cmp("t_quadrature", "int_0^inf t e^{-st} dt = s^-2", worst_t, Cmp::AtMost, tol.get("form1.t_moment")),
                ])
            });
            out.extend(u.run("random_pairs", FORM1_ANCHOR, |u| {
                let sys = ProductSystem::uniform(fam, d)?;
                let mut rng = rng_for(cfg.seed, &u.inputs);
                let mut worst = 0.0f64;
                for _ in 0..trials {
                    let f = CoeffFn::random(&sys, n, false, &mut rng);
                    let axis = rng.gen_range(0..d);
                    let g = ImageFrameFn::random(&sys, axis, n, &mut rng);
                    worst = worst.max(form1_check(&f, &g)?.relerr);
                }
                Ok(vec![u.cmp("random_pairs", FORM1_ANCHOR, worst, Cmp::AtMost, tol.get("form1.relerr"))])
            }));
            out
        })
        .collect();
    let u = Unit::new("form1", json!({"s_min": 0.5, "s_max": 50.0, "points": 41}));
    parts.push(u.run("t_moment", "int_0^inf t e^{-st} dt = s^-2", |u| {
        let mut worst = 0.0f64;
        for j in 0..=40 {
            let s = 0.5 * 100f64.powf(j as f64 / 40.0);
            worst = worst.max((t_moment_numeric(s)? * s * s - 1.0).abs());
        }
        Ok(vec![u.cmp("t_moment", "int_0^inf t e^{-st} dt = s^-2", worst, Cmp::AtMost, tol.get("form1.t_moment"))])
    }));
    flatten(parts).into()
}

// --- L^2 contraction -------------------------------------------------------------

pub fn contraction_checks(cfg: &SuiteConfig) -> Vec<CheckRecord> {
    let tol = &cfg.tolerances;
    let draws = cfg.trials_or(200);
    let ds = cfg.ds_or(&[1, 2]);
    let n = cfg.n.unwrap_or(6);
    let mut parts: Vec<Vec<CheckRecord>> = cfg
        .systems
        .par_iter()
        .map(|&fam| {
            let u = Unit::new("normbound", json!({"system": fam, "ds": ds, "n": n, "draws": draws, "seed": cfg.seed}));
            let anchor = "||R f||_2 <= ||f||_2";
            u.run("contraction", anchor, |u| {
                let mut rng = rng_for(cfg.seed, &u.inputs);
                let mut tables = Vec::new();
                for &d in &ds {
                    let sys = ProductSystem::uniform(fam, d)?;
                    let t = GridTables::new(&sys, gauss_grid(&sys, 2 * n + 2)?, n)?;
                    tables.push((sys, t));
                }
                let mut worst = 0.0f64;
                for j in 0..draws {
                    let (sys, t) = &tables[j % tables.len()];
                    let f = CoeffFn::random(sys, n, false, &mut rng);
                    let nf = lp_norm(&synth_with(&f, t)?, 2.0)?;
                    let nr = lp_norm(&riesz_vector_with(&f, t)?, 2.0)?;
                    worst = worst.max(nr / nf);
                }
                Ok(vec![u.cmp("contraction", anchor, worst, Cmp::AtMost, 1.0 + tol.get("contraction.l2"))])
            })
        })
        .collect();
    if cfg.systems.contains(&Family::HermitePoly) {
        let n = 10;
        let u = Unit::new("normbound", json!({"system": Family::HermitePoly, "d": 1, "p": 2.0, "n": n, "seed": cfg.seed}));
        let anchor = "||R||_{2->2} = 1 for the Ornstein-Uhlenbeck system";
        parts.push(u.run("ou_isometry", anchor, |u| {
            let sys = ProductSystem::uniform(Family::HermitePoly, 1)?;
            let opts = NormOpts::default();
            let e = pnorm_lower_bound(&sys, 2.0, n, Method::Boyd, &opts, &mut rng_for(cfg.seed, &u.inputs))?;
            Ok(vec![u.cmp("ou_isometry", anchor, (e.lower_bound - 1.0).abs(), Cmp::AtMost, tol.get("contraction.ou_isometry"))])
        }));
    }
    flatten(parts)
}

// --- Bellman function ------------------------------------------------------------

pub fn bellman_suite(cfg: &SuiteConfig) -> SuiteOutput {
    let tol = &cfg.tolerances;
    let ps = cfg.ps_or(&[2.0, 3.0, 6.0]);
    let points = cfg.trials_or(10_000);
    let cells: Vec<(f64, usize, usize)> =
        ps.iter().flat_map(|&p| [(1, 1), (1, 2)].into_iter().map(move |(a, b)| (p, a, b))).collect();
    let parts: Vec<Vec<CheckRecord>> = cells
        .par_iter()
        .map(|&(p, m1, m2)| {
            let u = Unit::new("bellman", json!({"p": p, "m": [m1, m2], "points": points, "seed": cfg.seed}));
            let size_anchor = "0 <= beta <= (1 + gamma)(|zeta|^p + |eta|^q)";
            let mut out = u.run("size", size_anchor, |u| {
                let b = BellmanParams::new(p, m1, m2, 0.0)?;
                let mut rng = rng_for(cfg.seed, &format!("{}size", u.inputs));
                let (mut lo, mut hi, mut sign) = (f64::INFINITY, 0.0f64, f64::INFINITY);
                for _ in 0..points {
                    let pt = random_point(&b, &mut rng, -4.0, 3.0);
                    let (s1, s2) = (pt.s1(), pt.s2());
                    let d = beta_derivs(&b, s1, s2);
                    let cap = (1.0 + b.gamma) * (s1.powf(b.p) + s2.powf(b.q));
                    lo = lo.min(d.value / cap);
                    hi = hi.max(d.value / cap);
                    // both radial derivatives, and the radial parts of grad B
                    let g = grad_b(&b, &pt)?;
                    let gz: f64 = g[..m1].iter().zip(&pt.zeta).map(|(a, z)| a * z).sum();
                    let ge: f64 = g[m1..].iter().zip(&pt.eta).map(|(a, e)| a * e).sum();
                    sign = sign.min(d.d1).min(d.d2).min(gz).min(ge);
                }
                Ok(vec![
                    u.cmp("size_lower", size_anchor, lo, Cmp::AtLeast, 0.0),
                    u.cmp("size_upper", size_anchor, hi, Cmp::AtMost, 1.0 + tol.get("bellman.size")),
                    u.cmp("gradient_signs", "d_s1 beta >= 0, d_s2 beta >= 0", sign, Cmp::AtLeast, 0.0),
                ])
            });
            let hess_anchor = "<Hess B(xi) w, w> >= gamma |w_1| |w_2|";
            out.extend(u.run("hessian", hess_anchor, |u| {
                let b = BellmanParams::new(p, m1, m2, 0.0)?;
                let mut rng = rng_for(cfg.seed, &format!("{}hess", u.inputs));
                let (mut worst, mut done, mut skipped) = (f64::INFINITY, 0usize, 0usize);
                while done < points && skipped < 4 * points {
                    let pt = random_point(&b, &mut rng, -4.0, 3.0);
                    match check_hess_lower(&b, &pt, 8, &mut rng) {
                        Ok(r) => {
                            worst = worst.min(r.margin);
                            done += 1;
                        }
                        Err(LabError::SingularRegion(_)) => skipped += 1,
                        Err(e) => return Err(e),
                    }
                }
                Ok(vec![u
                    .cmp("hessian", hess_anchor, worst, Cmp::AtLeast, -tol.get("bellman.hess_margin"))
                    .with_note(format!("{done} points, {skipped} skipped near the non-smooth set"))])
            }));
            let rad_anchor = "<grad B_k(xi), xi> + k E_k(xi) >= gamma |zeta| |eta|, k = 0.01";
            out.extend(u.run("radial", rad_anchor, |u| {
                let b = BellmanParams::new(p, m1, m2, 0.01)?;
                let rule = MollifierRule::standard(m1 + m2)?;
                let mut rng = rng_for(cfg.seed, &format!("{}radial", u.inputs));
                let mut worst = f64::INFINITY;
                for _ in 0..points {
                    let pt = random_point(&b, &mut rng, -4.0, 3.0);
                    worst = worst.min(check_grad_radial(&b, &pt, &rule)?.margin);
                }
                Ok(vec![u.cmp("radial", rad_anchor, worst, Cmp::AtLeast, -tol.get("bellman.radial_margin"))])
            }));
            out
        })
        .collect();
    flatten(parts).into()
}

// --- differential inequality -------------------------------------------------------

/// Random flow states per configuration; each is sampled at `trials` points.
pub const DIFFINEQ_STATES: usize = 5;

/// Default truncation of the flow states in the differential-inequality sweep.
pub fn diffineq_truncation(d: usize) -> usize {
    if d == 1 { 6 } else { 4 }
}

pub fn diffineq_suite(cfg: &SuiteConfig) -> SuiteOutput {
    let tol = &cfg.tolerances;
    let fams = if cfg.explicit_systems { cfg.systems.clone() } else { vec![Family::HermitePoly, Family::HermiteFunc] };
    let ds = cfg.ds_or(&[1, 2]);
    let ps = cfg.ps_or(&[1.5, 2.0, 3.0, 6.0]);
    let count = cfg.trials_or(20);
    let mut cells: Vec<(Family, usize, f64)> = Vec::new();
    for f in &fams {
        for &d in &ds {
            cells.extend(ps.iter().map(|&p| (*f, d, p)));
        }
    }
    let parts: Vec<Vec<CheckRecord>> = cells
        .par_iter()
        .map(|&(fam, d, p)| {
            let n = cfg.n.unwrap_or_else(|| diffineq_truncation(d));
            let u = Unit::new("diffineq", json!({"system": fam, "d": d, "p": p, "n": n, "points": count, "seed": cfg.seed}));
            let id_anchor = "(d_t^2 - L) B(u) = r <grad B, u> + sum v_i d_eta_i B Q_t g_i + sum <Hess B d_i u, d_i u>";
            u.run("identity", id_anchor, |u| {
                let sys = ProductSystem::uniform(fam, d)?;
                let mut rng = rng_for(cfg.seed, &u.inputs);
                let (mut ident, mut margin, mut v_term) = (0.0f64, f64::INFINITY, f64::INFINITY);
                let (mut evaluated, mut excluded, mut total) = (0usize, 0usize, 0usize);
                for _ in 0..DIFFINEQ_STATES {
                    let state = FlowState::random(&sys, n, p, &mut rng)?;
                    let pts = sample_points(&sys, n, count, &mut rng)?;
                    let rep = diff_ineq_check(&state, &pts, true)?;
                    ident = ident.max(rep.worst_identity_relerr);
                    margin = margin.min(rep.worst_margin);
                    v_term = v_term.min(rep.worst_v_term);
                    evaluated += rep.evaluated;
                    excluded += rep.excluded;
                    total += rep.points.len();
                }
                let ineq_anchor = "(d_t^2 - L) b >= gamma |F|_* |G|_*";
                let note = format!("{DIFFINEQ_STATES} random states, {evaluated} of {total} points evaluated");
                Ok(vec![
                    u.cmp("identity", id_anchor, ident, Cmp::AtMost, tol.get("diffineq.identity")).with_note(note.clone()),
                    u.cmp("inequality", ineq_anchor, margin, Cmp::AtLeast, -tol.get("diffineq.margin")).with_note(note),
                    u.cmp("v_term", "v_i d_eta_i B Q_t g_i >= 0", v_term, Cmp::AtLeast, 0.0),
                    u.cmp(
                        "excluded",
                        "share of points near the non-smooth set",
                        excluded as f64 / total.max(1) as f64,
                        Cmp::AtMost,
                        tol.get("diffineq.excluded"),
                    ),
                ])
            })
        })
        .collect();
    flatten(parts).into()
}

// --- bilinear embedding ----------------------------------------------------------

/// Default truncation of the embedding trials.
pub fn embedding_truncation(d: usize) -> usize {
    if d == 1 { 8 } else { 6 }
}

pub fn embedding_suite(cfg: &SuiteConfig) -> SuiteOutput {
    let tol = cfg.tolerances.get("embedding.ratio");
    let ds = cfg.ds_or(&[1, 2]);
    let ps = cfg.ps_or(&[1.5, 2.0, 3.0, 6.0]);
    let trials = cfg.trials_or(100);
    let anchor = "int int |F|_* |G|_* t dt dmu <= 6 (p* - 1) ||Pi f||_p ||g||_q";
    let cells: Vec<(Family, usize)> = cfg.systems.iter().flat_map(|f| ds.iter().map(move |&d| (*f, d))).collect();
    let parts: Vec<(Vec<CheckRecord>, Vec<EmbeddingRow>)> = cells
        .par_iter()
        .map(|&(fam, d)| {
            let n = cfg.n.unwrap_or_else(|| embedding_truncation(d));
            let u = Unit::new("embedding", json!({"system": fam, "d": d, "n": n, "ps": ps, "trials": trials, "seed": cfg.seed}));
            let mut rows = Vec::new();
            let records = u.run("ratio", anchor, |u| {
                let sys = ProductSystem::uniform(fam, d)?;
                let mut rng = rng_for(cfg.seed, &u.inputs);
                let mut ratios = vec![Vec::with_capacity(trials); ps.len()];
                for _ in 0..trials {
                    // the left side does not depend on p
                    let state = FlowState::random(&sys, n, ps[0], &mut rng)?;
                    let lhs = embedding_lhs(&state)?;
                    for (j, &p) in ps.iter().enumerate() {
                        ratios[j].push(embedding_check_with(&state.with_p(p)?, &lhs)?.ratio);
                    }
                }
                let mut recs = Vec::new();
                for (j, &p) in ps.iter().enumerate() {
                    let max = ratios[j].iter().fold(0.0f64, |m, r| m.max(*r));
                    let mean = ratios[j].iter().sum::<f64>() / trials as f64;
                    rows.push(EmbeddingRow { system: sys.label(), d, p, trials, max_ratio: Some(max), mean_ratio: Some(mean) });
                    recs.push(
                        u.cmp(&format!("ratio_p{p}"), anchor, max, Cmp::AtMost, 1.0 + tol)
                            .with_note(format!("max over {trials} trials, mean {mean:.4}")),
                    );
                }
                Ok(recs)
            });
            (records, rows)
        })
        .collect();
    let mut out = SuiteOutput::default();
    for (r, rows) in parts {
        out.records.extend(r);
        out.embedding_rows.extend(rows);
    }
    out
}

// --- norm bounds -----------------------------------------------------------------

pub fn normbound_suite(cfg: &SuiteConfig) -> SuiteOutput {
    let mut out = SuiteOutput::from(contraction_checks(cfg));
    out.extend(bound_cells(cfg));
    out.records.extend(restart_checks(cfg));
    out.records.extend(ladder_checks(cfg));
    out
}

/// Lower bounds on every `(system, d, p)` cell against the claimed constants.
pub fn bound_cells(cfg: &SuiteConfig) -> SuiteOutput {
    let tol = &cfg.tolerances;
    let ps = cfg.ps_or(&[1.25, 1.5, 2.0, 3.0, 6.0]);
    let ds = cfg.ds_or(&[1, 2, 3]);
    let truncation = |d: usize| cfg.n.unwrap_or_else(|| default_truncation(d));
    let cells = bound_suite(&cfg.systems, &ps, &ds, truncation, &NormOpts::default(), cfg.seed);
    let mut out = SuiteOutput::default();
    let anchor = "||R f||_p <= 24 (1 + sqrt K)(p* - 1) ||Pi f||_p";
    for c in &cells {
        let u = Unit::new("normbound", json!({"system": c.family, "d": c.d, "p": c.p, "n": c.n, "cell_seed": c.seed}));
        let paper_bound = ProductSystem::uniform(c.family, c.d).map(|s| s.norm_bound(c.p)).unwrap_or(f64::NAN);
        match &c.estimate {
            Ok(e) => {
                let mono = e.history.windows(2).map(|w| (w[1] - w[0]) / w[0].abs().max(1e-300)).fold(0.0f64, f64::min);
                out.records.push(u.cmp("bound", anchor, e.lower_bound, Cmp::AtMost, e.paper_bound).with_note(format!(
                    "cell seed {}, {} iterations, converged {}, {} grid points",
                    c.seed, e.iterations, e.converged, e.grid_points
                )));
                out.records.push(u.cmp("boyd_monotone", "Boyd ratios never decrease", mono, Cmp::AtLeast, -tol.get("normbound.monotone")));
                if let Some(b) = c.ou_bound {
                    out.records.push(u.cmp("ou_bound", "||R f||_p <= 2 (p* - 1) ||f||_p", e.lower_bound, Cmp::AtMost, b));
                }
                out.norm_rows.push(NormRow {
                    system: e.system.clone(),
                    d: c.d,
                    p: c.p,
                    n: c.n,
                    lower_bound: Some(e.lower_bound),
                    paper_bound: e.paper_bound,
                    margin: Some(e.paper_bound - e.lower_bound),
                });
            }
            Err(msg) => {
                out.records.push(CheckRecord::failed(
                    "normbound",
                    "bound",
                    anchor,
                    u.inputs.clone(),
                    format!("estimation failed (cell seed {}): {msg}", c.seed),
                ));
                let system = ProductSystem::uniform(c.family, c.d).map(|s| s.label()).unwrap_or_else(|_| c.family.name().into());
                out.norm_rows.push(NormRow { system, d: c.d, p: c.p, n: c.n, lower_bound: None, paper_bound, margin: None });
            }
        }
    }
    for (fam, p, spread) in dimension_spread(&cells) {
        let u = Unit::new("normbound", json!({"system": fam, "p": p, "ds": ds}));
        out.records.push(u.diagnostic(
            "dimension_spread",
            "lower bounds stay bounded as d grows",
            spread,
            "max - min over d; diagnostic only".into(),
        ));
    }
    out
}

/// Best of 20 ascent restarts against Boyd on small cells.
pub fn restart_checks(cfg: &SuiteConfig) -> Vec<CheckRecord> {
    let tol = cfg.tolerances.get("normbound.restart");
    let n = 4;
    let cells: Vec<(Family, usize, f64)> = cfg
        .systems
        .iter()
        .flat_map(|f| [1usize, 2].into_iter().flat_map(move |d| [1.5, 3.0].into_iter().map(move |p| (*f, d, p))))
        .collect();
    let anchor = "best-of-restarts ascent agrees with Boyd";
    let parts: Vec<Vec<CheckRecord>> = cells
        .par_iter()
        .map(|&(fam, d, p)| {
            let u = Unit::new("normbound", json!({"system": fam, "d": d, "p": p, "n": n, "seed": cfg.seed}));
            u.run("restart_stability", anchor, |u| {
                let sys = ProductSystem::uniform(fam, d)?;
                let opts = NormOpts::default();
                let mut rng = rng_for(cfg.seed, &u.inputs);
                let m = choose_grid(&sys, n, p, &opts, &mut rng)?;
                let disc = Discretization::new(&sys, n, m)?;
                let b = pnorm_lower_bound_on(&sys, &disc, p, n, Method::Boyd, &opts, None, &mut rng)?;
                let a = pnorm_lower_bound_on(&sys, &disc, p, n, Method::Ascent, &opts, None, &mut rng)?;
                let gap = (a.lower_bound - b.lower_bound).abs() / b.lower_bound;
                Ok(vec![u
                    .cmp("restart_stability", anchor, gap, Cmp::AtMost, tol)
                    .with_note(format!("boyd {:.6}, ascent {:.6}", b.lower_bound, a.lower_bound))])
            })
        })
        .collect();
    flatten(parts)
}

/// Lower bounds on one shared grid for rising truncations, d = 1, p = 3.
pub fn ladder_checks(cfg: &SuiteConfig) -> Vec<CheckRecord> {
    let tol = cfg.tolerances.get("normbound.monotone");
    let ns = [2usize, 4, 6, 8];
    let anchor = "lower bound is non-decreasing in the truncation";
    let parts: Vec<Vec<CheckRecord>> = cfg
        .systems
        .par_iter()
        .map(|&fam| {
            let u = Unit::new("normbound", json!({"system": fam, "d": 1, "p": 3.0, "ns": ns, "seed": cfg.seed}));
            u.run("truncation_monotone", anchor, |u| {
                let sys = ProductSystem::uniform(fam, 1)?;
                let est = truncation_ladder(&sys, 3.0, &ns, &NormOpts::default(), &mut rng_for(cfg.seed, &u.inputs))?;
                let lbs: Vec<f64> = est.iter().map(|e| e.lower_bound).collect();
                let worst = lbs.windows(2).map(|w| (w[1] - w[0]) / w[0]).fold(f64::INFINITY, f64::min);
                Ok(vec![u
                    .cmp("truncation_monotone", anchor, worst, Cmp::AtLeast, -tol)
                    .with_note(format!("bounds {lbs:.6?}"))])
            })
        })
        .collect();
    flatten(parts)
}

// --- constants -------------------------------------------------------------------

pub fn constants_suite(cfg: &SuiteConfig) -> SuiteOutput {
    let tol = cfg.tolerances.get("constants.exact");
    let u = Unit::new("constants", json!({"h_grid": 20000, "p_grid": [2.0, 1000.0, 301]}));
    u.run("h_sup", "sup_{0<s<=1} (s+4) s^{-s/(s+1)} < 6", |u| {
        let c = constants_report();
        let worst_pol = c.polarization.iter().map(|r| r.value / r.bound).fold(0.0f64, f64::max);
        let worst_skew = c
            .polarization
            .iter()
            .map(|r| skew_constant(r.p) / (6.0 * (p_star(r.p) - 1.0)))
            .fold(0.0f64, f64::max);
        Ok(vec![
            u.cmp("h_sup", "sup_{0<s<=1} (s+4) s^{-s/(s+1)} < 6", c.h_sup, Cmp::AtMost, 6.0),
            u.cmp("h_cap", "max H <= (22/5)(7/20)^{-2/7}", c.h_sup, Cmp::AtMost, c.h_cap),
            u.cmp("h_cap_below_six", "(22/5)(7/20)^{-2/7} < 6", c.h_cap, Cmp::AtMost, 6.0),
            u.cmp("h_argmax_lower", "argmax H > 7/20", c.h_argmax, Cmp::AtLeast, 0.35),
            u.cmp("h_argmax_upper", "argmax H < 2/5", c.h_argmax, Cmp::AtMost, 0.4),
            u.cmp("h_at_one", "H(1) = 5", (c.h_at_one - 5.0).abs(), Cmp::AtMost, tol),
            u.cmp("polarization", "(1+gamma)/(2 gamma) ((p/q)^{1/p} + (q/p)^{1/q}) <= 6 (p* - 1)", worst_pol, Cmp::AtMost, 1.0)
                .with_note(format!("worst ratio over {} exponents in [2, 1000]", c.polarization.len())),
            u.cmp("skew", "(8 + q(q-1))/2 (q-1)^{1/q-1} (p-1) <= 6 (p* - 1)", worst_skew, Cmp::AtMost, 1.0),
        ])
    })
    .into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_and_errors_become_failed_records() {
        let u = Unit::new("ortho", json!({"case": 1}));
        let hook = std::panic::take_hook();
        std::panic::set_hook(Box::new(|_| {}));
        let panicked = u.run("boom", "a", |_| panic!("exploded"));
        std::panic::set_hook(hook);
        assert_eq!(panicked.len(), 1);
        assert!(!panicked[0].pass && panicked[0].note.contains("exploded"));

        let errored = u.run("err", "a", |_| Err(LabError::Argument("bad".into())));
        assert!(!errored[0].pass && errored[0].note.starts_with("error:"));

        let fine = u.run("ok", "a", |u| Ok(vec![u.cmp("ok", "a", 0.5, Cmp::AtMost, 1.0)]));
        assert!(fine[0].pass);
    }

    #[test]
    fn seeds_depend_on_seed_and_tag() {
        assert_eq!(check_seed(3, "x"), check_seed(3, "x"));
        assert_ne!(check_seed(3, "x"), check_seed(4, "x"));
        assert_ne!(check_seed(3, "x"), check_seed(3, "y"));
    }

    #[test]
    fn explicit_systems_are_not_resampled() {
        let cfg = SuiteConfig::new(super::super::Suite::Ortho).with_systems(vec![Family::LaguerrePoly { alpha: 2.0 }]);
        assert_eq!(sampled_families(&cfg, "ortho"), vec![Family::LaguerrePoly { alpha: 2.0 }]);
        let all = sampled_families(&SuiteConfig::new(super::super::Suite::Ortho), "ortho");
        assert_eq!(all.len(), 2 + 3 * 5);
    }
}
