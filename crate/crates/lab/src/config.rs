//! Experiment configuration read from TOML.
//!
//! Lengths are in continuum units, lattice sites are integer multi-indices
//! in units of `h = 1/√n`, rates are per unit time.

use std::path::Path;

use rbm_core::lattice::BoundaryConstants;
use rbm_core::model::{spec_from_rows, RbmSpec};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spec: SpecConfig,
    #[serde(default)]
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub tests: Vec<TestConfig>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    pub d: usize,
    pub b: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    #[serde(default = "default_n_list")]
    pub n: Vec<u64>,
    #[serde(rename = "K", default = "default_k")]
    pub k: f64,
    #[serde(default = "default_c0")]
    pub c0: f64,
    #[serde(default = "default_policy")]
    pub policy: String,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self { n: default_n_list(), k: default_k(), c0: default_c0(), policy: default_policy() }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "T", default = "default_t")]
    pub t: f64,
    #[serde(rename = "M", default = "default_m")]
    pub m: u64,
    /// Primal burn-in before a stationary segment, in time units.
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// 0 selects `RBM_THREADS` or the machine's parallelism.
    #[serde(default)]
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { t: default_t(), m: default_m(), burn_in: default_burn_in(), seed: default_seed(), threads: 0 }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_out(), formats: default_formats() }
    }
}

/// Gaussian bump `exp(−|x − c|²/(2w²))`.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: Vec<f64>,
    pub width: f64,
}

impl Bump {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        (-r2 / (2.0 * self.width * self.width)).exp()
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum DensitySource {
    Exact,
    Histogram,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestConfig {
    RateIdentities {
        n: Option<Vec<u64>>,
    },
    DualityExact {
        n: Option<u64>,
        #[serde(rename = "K")]
        k: Option<f64>,
        #[serde(default = "default_duality_times")]
        t: Vec<f64>,
        #[serde(default = "default_trials")]
        trials: usize,
        #[serde(default = "default_duality_tol")]
        tol: f64,
    },
    FkVsExact {
        n: Option<u64>,
        #[serde(rename = "K")]
        k: Option<f64>,
        x0: Vec<i64>,
        g_sites: Option<Vec<Vec<i64>>>,
        t: f64,
        #[serde(rename = "M")]
        m: Option<u64>,
        #[serde(default = "default_z")]
        z: f64,
        #[serde(default = "default_rel_stderr")]
        rel_stderr: f64,
    },
    ContinuumDuality {
        n: Option<Vec<u64>>,
        #[serde(rename = "K")]
        k: Option<f64>,
        f: Bump,
        g: Bump,
        t: f64,
        #[serde(rename = "M")]
        m: Option<u64>,
        #[serde(default = "default_z")]
        z: f64,
    },
    TimeReversalFdd {
        n: Option<u64>,
        #[serde(rename = "K")]
        k: Option<f64>,
        #[serde(rename = "T")]
        horizon: Option<f64>,
        times: Vec<f64>,
        bumps: Vec<Bump>,
        #[serde(rename = "M")]
        m: Option<u64>,
        #[serde(default = "default_density")]
        density: DensitySource,
        #[serde(default = "default_hist_t_run")]
        histogram_t_run: f64,
        #[serde(default)]
        bias_allowance: f64,
        #[serde(default = "default_z")]
        z: f64,
    },
    ReversedRbm {
        n: Option<u64>,
        #[serde(rename = "K")]
        k: Option<f64>,
        #[serde(rename = "T")]
        horizon: Option<f64>,
        #[serde(rename = "M")]
        m: Option<u64>,
        #[serde(default = "default_ks_tol")]
        ks_tol: f64,
        #[serde(default = "default_oracle_n")]
        oracle_n: u64,
        #[serde(rename = "oracle_K", default = "default_oracle_k")]
        oracle_k: f64,
        #[serde(default = "default_oracle_jumps")]
        oracle_jumps: u64,
        #[serde(default = "default_tv_tol")]
        tv_tol: f64,
    },
    BoundaryPairDecay {
        n: Option<Vec<u64>>,
        #[serde(rename = "K")]
        k: Option<f64>,
        #[serde(rename = "T")]
        horizon: Option<f64>,
        #[serde(rename = "M")]
        m: Option<u64>,
    },
    StationaryLaw {
        n: Option<u64>,
        #[serde(rename = "K")]
        k: Option<f64>,
        #[serde(default = "default_t_run")]
        t_run: f64,
        #[serde(default = "default_burn_fraction")]
        burn_fraction: f64,
        #[serde(default = "default_sup_range")]
        sup_range: f64,
        #[serde(default = "default_sup_tol")]
        sup_tol: f64,
        #[serde(default = "default_mean_tol")]
        mean_tol: f64,
        #[serde(default = "default_clamp_tol")]
        clamp_tol: f64,
    },
}

impl TestConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::RateIdentities { .. } => "rate_identities",
            Self::DualityExact { .. } => "duality_exact",
            Self::FkVsExact { .. } => "fk_vs_exact",
            Self::ContinuumDuality { .. } => "continuum_duality",
            Self::TimeReversalFdd { .. } => "time_reversal_fdd",
            Self::ReversedRbm { .. } => "reversed_rbm",
            Self::BoundaryPairDecay { .. } => "boundary_pair_decay",
            Self::StationaryLaw { .. } => "stationary_law",
        }
    }
}

fn default_n_list() -> Vec<u64> {
    vec![16]
}
fn default_k() -> f64 {
    4.0
}
fn default_c0() -> f64 {
    1.0
}
fn default_policy() -> String {
    "default".into()
}
fn default_t() -> f64 {
    1.0
}
fn default_m() -> u64 {
    10_000
}
fn default_burn_in() -> f64 {
    2.0
}
fn default_seed() -> u64 {
    1
}
fn default_out() -> String {
    "out".into()
}
fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv, Format::Text]
}
fn default_duality_times() -> Vec<f64> {
    vec![0.1, 1.0]
}
fn default_trials() -> usize {
    20
}
fn default_duality_tol() -> f64 {
    1e-9
}
fn default_z() -> f64 {
    4.0
}
fn default_rel_stderr() -> f64 {
    0.05
}
fn default_density() -> DensitySource {
    DensitySource::Exact
}
fn default_hist_t_run() -> f64 {
    5e4
}
fn default_ks_tol() -> f64 {
    0.05
}
fn default_oracle_n() -> u64 {
    16
}
fn default_oracle_k() -> f64 {
    3.0
}
fn default_oracle_jumps() -> u64 {
    100_000
}
fn default_tv_tol() -> f64 {
    0.02
}
fn default_t_run() -> f64 {
    5e4
}
fn default_burn_fraction() -> f64 {
    0.2
}
fn default_sup_range() -> f64 {
    2.0
}
fn default_sup_tol() -> f64 {
    0.1
}
fn default_mean_tol() -> f64 {
    0.05
}
fn default_clamp_tol() -> f64 {
    1e-3
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Structural checks with field names in the messages.
    pub fn validate(&self) -> Result<()> {
        let d = self.spec.d;
        if d == 0 {
            return Err(LabError::config("spec.d", "dimension must be positive"));
        }
        if self.spec.b.len() != d {
            return Err(LabError::config("spec.b", format!("has length {}, expected {d}", self.spec.b.len())));
        }
        for (field, rows) in [("spec.A", &self.spec.a), ("spec.R", &self.spec.r)] {
            if rows.len() != d {
                return Err(LabError::config(field, format!("has {} rows, expected {d}", rows.len())));
            }
            for (i, row) in rows.iter().enumerate() {
                if row.len() != d {
                    return Err(LabError::config(
                        format!("{field}[{i}]"),
                        format!("row has length {}, expected {d}", row.len()),
                    ));
                }
            }
        }
        check_n_list("lattice.n", &self.lattice.n)?;
        positive("lattice.K", self.lattice.k)?;
        positive("lattice.c0", self.lattice.c0)?;
        if self.lattice.policy != "default" {
            return Err(LabError::config("lattice.policy", format!("unknown policy `{}`", self.lattice.policy)));
        }
        positive("run.T", self.run.t)?;
        if self.run.m < 2 {
            return Err(LabError::config("run.M", "need at least 2 paths"));
        }
        if !(self.run.burn_in >= 0.0) {
            return Err(LabError::config("run.burn_in", "must be nonnegative"));
        }
        for (i, t) in self.tests.iter().enumerate() {
            self.validate_test(i, t)?;
        }
        Ok(())
    }

    fn validate_test(&self, i: usize, test: &TestConfig) -> Result<()> {
        let at = |f: &str| format!("tests[{i}].{f}");
        let d = self.spec.d;
        let bump = |f: &str, b: &Bump| -> Result<()> {
            if b.center.len() != d {
                return Err(LabError::config(at(f), format!("center has length {}, expected {d}", b.center.len())));
            }
            positive(&at(&format!("{f}.width")), b.width)
        };
        match test {
            TestConfig::RateIdentities { n } => {
                if let Some(n) = n {
                    check_n_list(&at("n"), n)?;
                }
            }
            TestConfig::DualityExact { t, trials, tol, k, .. } => {
                if t.iter().any(|v| !(*v >= 0.0)) {
                    return Err(LabError::config(at("t"), "times must be nonnegative"));
                }
                if *trials == 0 {
                    return Err(LabError::config(at("trials"), "must be positive"));
                }
                positive(&at("tol"), *tol)?;
                opt_positive(&at("K"), *k)?;
            }
            TestConfig::FkVsExact { x0, g_sites, t, z, rel_stderr, k, m, .. } => {
                if x0.len() != d {
                    return Err(LabError::config(at("x0"), format!("has length {}, expected {d}", x0.len())));
                }
                for (j, s) in g_sites.iter().flatten().enumerate() {
                    if s.len() != d {
                        return Err(LabError::config(at(&format!("g_sites[{j}]")), "wrong dimension"));
                    }
                }
                if !(*t >= 0.0) {
                    return Err(LabError::config(at("t"), "must be nonnegative"));
                }
                positive(&at("z"), *z)?;
                positive(&at("rel_stderr"), *rel_stderr)?;
                opt_positive(&at("K"), *k)?;
                opt_paths(&at("M"), *m)?;
            }
            TestConfig::ContinuumDuality { n, f, g, t, z, k, m } => {
                if let Some(n) = n {
                    check_n_list(&at("n"), n)?;
                }
                bump("f", f)?;
                bump("g", g)?;
                if !(*t >= 0.0) {
                    return Err(LabError::config(at("t"), "must be nonnegative"));
                }
                positive(&at("z"), *z)?;
                opt_positive(&at("K"), *k)?;
                opt_paths(&at("M"), *m)?;
            }
            TestConfig::TimeReversalFdd { times, bumps, horizon, bias_allowance, z, k, m, histogram_t_run, .. } => {
                let horizon = horizon.unwrap_or(self.run.t);
                positive(&at("T"), horizon)?;
                if times.is_empty() || times[0] != 0.0 {
                    return Err(LabError::config(at("times"), "must start at 0"));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) || times.iter().any(|t| *t > horizon) {
                    return Err(LabError::config(at("times"), "must increase strictly and stay within [0, T]"));
                }
                if bumps.len() != times.len() {
                    return Err(LabError::config(at("bumps"), "need one bump per time"));
                }
                for (j, b) in bumps.iter().enumerate() {
                    bump(&format!("bumps[{j}]"), b)?;
                }
                if !(*bias_allowance >= 0.0) {
                    return Err(LabError::config(at("bias_allowance"), "must be nonnegative"));
                }
                positive(&at("z"), *z)?;
                positive(&at("histogram_t_run"), *histogram_t_run)?;
                opt_positive(&at("K"), *k)?;
                opt_paths(&at("M"), *m)?;
            }
            TestConfig::ReversedRbm { ks_tol, tv_tol, oracle_k, horizon, k, m, oracle_jumps, .. } => {
                positive(&at("ks_tol"), *ks_tol)?;
                positive(&at("tv_tol"), *tv_tol)?;
                positive(&at("oracle_K"), *oracle_k)?;
                opt_positive(&at("T"), *horizon)?;
                opt_positive(&at("K"), *k)?;
                opt_paths(&at("M"), *m)?;
                if *oracle_jumps < 100 {
                    return Err(LabError::config(at("oracle_jumps"), "need at least 100 jumps"));
                }
            }
            TestConfig::BoundaryPairDecay { n, horizon, k, m } => {
                if let Some(n) = n {
                    check_n_list(&at("n"), n)?;
                }
                opt_positive(&at("T"), *horizon)?;
                opt_positive(&at("K"), *k)?;
                opt_paths(&at("M"), *m)?;
            }
            TestConfig::StationaryLaw { t_run, burn_fraction, sup_range, sup_tol, mean_tol, clamp_tol, k, .. } => {
                positive(&at("t_run"), *t_run)?;
                if !(*burn_fraction >= 0.0) {
                    return Err(LabError::config(at("burn_fraction"), "must be nonnegative"));
                }
                positive(&at("sup_range"), *sup_range)?;
                positive(&at("sup_tol"), *sup_tol)?;
                positive(&at("mean_tol"), *mean_tol)?;
                positive(&at("clamp_tol"), *clamp_tol)?;
                opt_positive(&at("K"), *k)?;
            }
        }
        Ok(())
    }

    pub fn rbm_spec(&self) -> Result<RbmSpec> {
        Ok(spec_from_rows(&self.spec.b, &self.spec.a, &self.spec.r)?)
    }

    pub fn constants(&self) -> Result<BoundaryConstants> {
        Ok(BoundaryConstants::new(self.lattice.c0)?)
    }

    /// Largest scale in the n-list.
    pub fn default_n(&self) -> u64 {
        *self.lattice.n.last().expect("validated nonempty")
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(LabError::config(field, format!("must be positive and finite, got {v}")))
    }
}

fn opt_positive(field: &str, v: Option<f64>) -> Result<()> {
    v.map_or(Ok(()), |v| positive(field, v))
}

fn opt_paths(field: &str, m: Option<u64>) -> Result<()> {
    match m {
        Some(m) if m < 2 => Err(LabError::config(field, "need at least 2 paths")),
        _ => Ok(()),
    }
}

fn check_n_list(field: &str, n: &[u64]) -> Result<()> {
    if n.is_empty() {
        return Err(LabError::config(field, "n-list is empty"));
    }
    if n.contains(&0) {
        return Err(LabError::config(field, "scales must be positive"));
    }
    if n.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::config(field, "n-list must be strictly ascending"));
    }
    Ok(())
}
