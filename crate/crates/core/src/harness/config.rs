use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::orthosys::Family;
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Ortho,
    Ladder,
    Assumptions,
    Form1,
    Embedding,
    Bellman,
    Diffineq,
    Normbound,
    Constants,
    All,
}

impl Suite {
    pub const EACH: [Suite; 9] = [
        Suite::Ortho,
        Suite::Ladder,
        Suite::Assumptions,
        Suite::Form1,
        Suite::Embedding,
        Suite::Bellman,
        Suite::Diffineq,
        Suite::Normbound,
        Suite::Constants,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Ortho => "ortho",
            Suite::Ladder => "ladder",
            Suite::Assumptions => "assumptions",
            Suite::Form1 => "form1",
            Suite::Embedding => "embedding",
            Suite::Bellman => "bellman",
            Suite::Diffineq => "diffineq",
            Suite::Normbound => "normbound",
            Suite::Constants => "constants",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Suite> {
        Suite::EACH
            .iter()
            .chain(std::iter::once(&Suite::All))
            .find(|v| v.name() == s)
            .copied()
            .ok_or_else(|| LabError::Argument(format!("unknown suite '{s}'")))
    }
}

/// One representative per family, all inside the theorem range.
pub fn default_systems() -> Vec<Family> {
    vec![
        Family::HermitePoly,
        Family::LaguerrePoly { alpha: 0.5 },
        Family::JacobiPoly { alpha: 0.5, beta: 0.5 },
        Family::HermiteFunc,
        Family::LaguerreFuncH { alpha: 1.5 },
        Family::LaguerreFuncConv { alpha: 0.5 },
        Family::JacobiFunc { alpha: 1.5, beta: 1.5 },
    ]
}

/// What to run. `None` fields fall back to the per-suite defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub suite: Suite,
    pub systems: Vec<Family>,
    /// Whether `systems` came from the user rather than [`default_systems`].
    pub explicit_systems: bool,
    pub d: Option<usize>,
    pub n: Option<usize>,
    pub p_list: Option<Vec<f64>>,
    pub trials: Option<usize>,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub output_dir: Option<PathBuf>,
}

impl SuiteConfig {
    pub fn new(suite: Suite) -> Self {
        SuiteConfig {
            suite,
            systems: default_systems(),
            explicit_systems: false,
            d: None,
            n: None,
            p_list: None,
            trials: None,
            seed: 0,
            tolerances: Tolerances::default(),
            output_dir: None,
        }
    }

    pub fn with_systems(mut self, systems: Vec<Family>) -> Self {
        self.systems = systems;
        self.explicit_systems = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.systems.is_empty() {
            return Err(LabError::Argument("no systems selected".into()));
        }
        for f in &self.systems {
            f.check_basic_range()?;
        }
        if let Some(d) = self.d {
            if !(1..=3).contains(&d) {
                return Err(LabError::Argument(format!("d must lie in 1..=3, got {d}")));
            }
            if d == 3 && self.n.is_some_and(|n| n > 16) {
                return Err(LabError::Argument("N must be at most 16 when d = 3".into()));
            }
        }
        if self.n == Some(0) {
            return Err(LabError::Argument("N must be positive".into()));
        }
        if let Some(ps) = &self.p_list {
            if ps.is_empty() {
                return Err(LabError::Argument("empty exponent list".into()));
            }
            if let Some(bad) = ps.iter().find(|p| !(p.is_finite() && **p > 1.0)) {
                return Err(LabError::Argument(format!("exponent must lie in (1, inf), got {bad}")));
            }
        }
        if self.trials == Some(0) {
            return Err(LabError::Argument("trials must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn ds_or(&self, default: &[usize]) -> Vec<usize> {
        self.d.map_or_else(|| default.to_vec(), |d| vec![d])
    }

    pub(crate) fn ps_or(&self, default: &[f64]) -> Vec<f64> {
        self.p_list.clone().unwrap_or_else(|| default.to_vec())
    }

    pub(crate) fn trials_or(&self, default: usize) -> usize {
        self.trials.unwrap_or(default)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_validate() {
        assert_eq!("form1".parse::<Suite>().unwrap(), Suite::Form1);
        assert_eq!("all".parse::<Suite>().unwrap(), Suite::All);
        assert!("nope".parse::<Suite>().is_err());
        let mut c = SuiteConfig::new(Suite::Form1);
        c.validate().unwrap();
        c.d = Some(4);
        assert!(c.validate().is_err());
        c.d = Some(3);
        c.n = Some(17);
        assert!(c.validate().is_err());
        c.n = Some(16);
        c.validate().unwrap();
        c.p_list = Some(vec![1.0]);
        assert!(c.validate().is_err());
        let bad = SuiteConfig::new(Suite::Ortho).with_systems(vec![Family::LaguerrePoly { alpha: -1.5 }]);
        assert!(bad.validate().is_err());
    }
}
