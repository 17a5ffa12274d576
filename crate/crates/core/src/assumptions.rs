//! Sampled checks of the two structural assumptions: non-negative commutators
//! `v_i >= 0` (A1) and `sum_i q_i^2 <= K r` (A2).

use rand::Rng;

use crate::orthosys::{AxisSystem, Family, EDGE_EXCLUSION};
use crate::spectral::ProductSystem;

/// Relative slack below which a sample counts as a violation.
pub const ASSUMPTION_TOL: f64 = 1e-10;

/// Random point of the open domain of one axis. Half of the draws land in the
/// bulk, the rest within `10^-1 .. 10^-11` of a finite endpoint.
pub fn sample_axis_point(sys: &AxisSystem, rng: &mut impl Rng) -> f64 {
    let finite: Vec<(f64, f64)> = [(sys.lo, 1.0), (sys.hi, -1.0)]
        .into_iter()
        .filter(|(e, _)| e.is_finite())
        .collect();
    if !finite.is_empty() && rng.gen_bool(0.5) {
        let (end, dir) = finite[rng.gen_range(0..finite.len())];
        let gap = 10f64.powf(-rng.gen_range(1.0..11.0)).max(10.0 * EDGE_EXCLUSION);
        return end + dir * gap;
    }
    let (a, b) = match sys.family {
        Family::HermitePoly | Family::HermiteFunc => (-8.0, 8.0),
        Family::LaguerrePoly { .. } => (0.0, 60.0),
        Family::LaguerreFuncH { .. } | Family::LaguerreFuncConv { .. } => (0.0, 8.0),
        Family::JacobiPoly { .. } | Family::JacobiFunc { .. } => (sys.lo, sys.hi),
    };
    loop {
        let x = rng.gen_range(a..b);
        if sys.contains(x) {
            return x;
        }
    }
}

/// A family of the same kind as `template` with parameters drawn from its theorem range.
pub fn sample_theorem_family(template: Family, rng: &mut impl Rng) -> Family {
    let mut u = |lo: f64| rng.gen_range(lo..3.0);
    match template {
        Family::HermitePoly | Family::HermiteFunc => template,
        Family::LaguerrePoly { .. } => Family::LaguerrePoly { alpha: u(-0.5) },
        Family::LaguerreFuncConv { .. } => Family::LaguerreFuncConv { alpha: u(-0.5) },
        Family::LaguerreFuncH { .. } => Family::LaguerreFuncH { alpha: u(0.55) },
        Family::JacobiPoly { .. } => Family::JacobiPoly { alpha: u(-0.5), beta: u(-0.5) },
        Family::JacobiFunc { .. } => Family::JacobiFunc { alpha: u(0.5), beta: u(0.5) },
    }
}

/// Outcome of sampling (A1) and (A2) on a product system.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub samples: usize,
    pub k_constant: f64,
    /// Smallest `v_i(x_i)` seen and where.
    pub min_v: f64,
    pub min_v_at: Vec<f64>,
    pub a1_violations: usize,
    /// Smallest `(K r - sum q_i^2) / max(sum q_i^2, K r)` seen and where.
    pub a2_slack: f64,
    pub a2_slack_at: Vec<f64>,
    pub a2_violations: usize,
}

impl AssumptionReport {
    pub fn a1_holds(&self) -> bool {
        self.a1_violations == 0
    }

    pub fn a2_holds(&self) -> bool {
        self.a2_violations == 0
    }
}

/// Sample `samples` points of the domain and test both assumptions with the
/// constant `K` claimed for the system.
pub fn check_assumptions(system: &ProductSystem, samples: usize, rng: &mut impl Rng) -> AssumptionReport {
    check_assumptions_with(system, samples, ASSUMPTION_TOL, rng)
}

/// [`check_assumptions`] with an explicit relative slack.
pub fn check_assumptions_with(system: &ProductSystem, samples: usize, tol: f64, rng: &mut impl Rng) -> AssumptionReport {
    let k = system.k_constant();
    let mut rep = AssumptionReport {
        samples,
        k_constant: k,
        min_v: f64::INFINITY,
        min_v_at: Vec::new(),
        a1_violations: 0,
        a2_slack: f64::INFINITY,
        a2_slack_at: Vec::new(),
        a2_violations: 0,
    };
    for _ in 0..samples {
        let x: Vec<f64> = system.axes().iter().map(|s| sample_axis_point(s, rng)).collect();
        let mut bad_v = false;
        for (s, &xi) in system.axes().iter().zip(&x) {
            let v = s.v_field(xi).expect("sampled inside the domain");
            if v < rep.min_v {
                rep.min_v = v;
                rep.min_v_at = x.clone();
            }
            bad_v |= v < -tol * (1.0 + v.abs());
        }
        rep.a1_violations += bad_v as usize;

        let q2: f64 = system.axes().iter().zip(&x).map(|(s, &xi)| s.q(xi).powi(2)).sum();
        let kr = if k == 0.0 { 0.0 } else { k * system.r(&x) };
        let scale = q2.abs().max(kr.abs());
        let slack = if scale == 0.0 { 0.0 } else { (kr - q2) / scale };
        if slack < rep.a2_slack {
            rep.a2_slack = slack;
            rep.a2_slack_at = x.clone();
        }
        rep.a2_violations += (slack < -tol) as usize;
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn report(f: Family, d: usize, seed: u64) -> AssumptionReport {
        let sys = ProductSystem::uniform(f, d).unwrap();
        check_assumptions(&sys, 4000, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn samples_stay_in_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for f in [Family::LaguerreFuncH { alpha: 1.0 }, Family::JacobiFunc { alpha: 1.0, beta: 1.0 }, Family::HermitePoly] {
            let s = AxisSystem::new(f).unwrap();
            for _ in 0..1000 {
                assert!(s.contains(sample_axis_point(&s, &mut rng)));
            }
        }
    }

    #[test]
    fn theorem_range_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let templates = [
            Family::HermitePoly,
            Family::LaguerrePoly { alpha: 0.0 },
            Family::JacobiPoly { alpha: 0.0, beta: 0.0 },
            Family::HermiteFunc,
            Family::LaguerreFuncH { alpha: 1.0 },
            Family::LaguerreFuncConv { alpha: 0.0 },
        ];
        for t in templates {
            for _ in 0..3 {
                let f = sample_theorem_family(t, &mut rng);
                assert!(f.theorem_range());
                let rep = report(f, 2, 3);
                assert!(rep.a1_holds(), "{f:?}: {rep:?}");
                assert!(rep.a2_holds(), "{f:?}: {rep:?}");
            }
        }
    }

    #[test]
    fn jacobi_poly_out_of_range_is_flagged() {
        let rep = report(Family::JacobiPoly { alpha: -0.9, beta: 0.0 }, 1, 4);
        assert!(!rep.a1_holds());
        assert!(rep.min_v_at[0] > 0.9, "violation sits near x = 1: {:?}", rep.min_v_at);
    }

    #[test]
    fn harmonic_oscillator_is_tight() {
        let rep = report(Family::HermiteFunc, 1, 5);
        assert!(rep.a2_holds());
        assert!(rep.a2_slack.abs() < 1e-12);
    }

    #[test]
    fn jacobi_functions_fail_the_claimed_constant() {
        let rep = report(Family::JacobiFunc { alpha: 1.5, beta: 0.8 }, 1, 6);
        assert!(rep.a1_holds());
        assert!(!rep.a2_holds());
    }
}
