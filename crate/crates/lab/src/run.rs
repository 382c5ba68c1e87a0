//! Experiment orchestration and artifact output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rbm_core::lattice::CompiledChain;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Format};
use crate::ensemble::{resolve_threads, Ensemble};
use crate::error::{LabError, Result};
use crate::report::{fmt_num, SpecEcho, Summary, VerificationReport};
use crate::verify::{chains_for, run_test, test_seed, Context};

/// Command-line overrides of the config.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub reports: Vec<VerificationReport>,
    pub summary: Summary,
    pub out_dir: PathBuf,
}

impl RunOutcome {
    /// 0 when nothing failed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.summary.passed {
            0
        } else {
            1
        }
    }
}

#[derive(Serialize)]
struct ManifestTest {
    index: usize,
    test: String,
    seed: u64,
    seeds: Vec<u64>,
    runtime_seconds: f64,
}

#[derive(Serialize)]
struct Manifest {
    config_sha256: String,
    root_seed: u64,
    threads: usize,
    rbm_lab_version: &'static str,
    started_unix: f64,
    finished_unix: f64,
    tests: Vec<ManifestTest>,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| LabError::io(path, e))
}

/// Loads, validates and runs a config file.
pub fn run_experiment(config: &Path, opts: &RunOptions) -> Result<RunOutcome> {
    let text = std::fs::read_to_string(config).map_err(|e| LabError::io(config, e))?;
    let cfg = ExperimentConfig::from_toml(&text)?;
    run_config(&cfg, &text, opts)
}

/// Runs every configured test in order and writes the artifact directory:
/// `reports/<index>_<test>.{json,csv,txt}`, `summary.json`, `report.txt` and
/// `manifest.json`. Only the manifest carries timings.
pub fn run_config(cfg: &ExperimentConfig, config_text: &str, opts: &RunOptions) -> Result<RunOutcome> {
    let started = unix_now();
    let root = opts.seed.unwrap_or(cfg.run.seed);
    let threads = resolve_threads(opts.threads.or(Some(cfg.run.threads)));
    let ensemble = Ensemble::new(threads)?;
    let out_dir = opts.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let reports_dir = out_dir.join("reports");
    std::fs::create_dir_all(&reports_dir).map_err(|e| LabError::io(&reports_dir, e))?;

    let mut reports = Vec::with_capacity(cfg.tests.len());
    let mut manifest_tests = Vec::with_capacity(cfg.tests.len());
    for (index, test) in cfg.tests.iter().enumerate() {
        let seed = test_seed(root, index);
        let ctx = Context::new(cfg, &ensemble, seed)?;
        let clock = Instant::now();
        let report = run_test(&ctx, test)?;
        let runtime = clock.elapsed().as_secs_f64();
        let stem = format!("{index:02}_{}", test.name());
        for format in &cfg.output.formats {
            let (ext, body) = match format {
                Format::Json => ("json", report.to_json()),
                Format::Csv => ("csv", report.to_csv()),
                Format::Text => ("txt", report.to_text()),
            };
            write(&reports_dir.join(format!("{stem}.{ext}")), &body)?;
        }
        manifest_tests.push(ManifestTest {
            index,
            test: test.name().into(),
            seed,
            seeds: report.seeds.clone(),
            runtime_seconds: runtime,
        });
        reports.push(report);
    }

    let summary = Summary::new(SpecEcho::new(&cfg.spec.b, &cfg.spec.a, &cfg.spec.r), &reports);
    write(&out_dir.join("summary.json"), &(serde_json::to_string_pretty(&summary).expect("serialisable") + "\n"))?;
    write(&out_dir.join("report.txt"), &summary.to_text(&reports))?;
    let manifest = Manifest {
        config_sha256: hex(&Sha256::digest(config_text.as_bytes())),
        root_seed: root,
        threads,
        rbm_lab_version: env!("CARGO_PKG_VERSION"),
        started_unix: started,
        finished_unix: unix_now(),
        tests: manifest_tests,
    };
    write(&out_dir.join("manifest.json"), &(serde_json::to_string_pretty(&manifest).expect("serialisable") + "\n"))?;
    Ok(RunOutcome { reports, summary, out_dir })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Re-renders the text report of an artifact directory from its JSON files.
pub fn render_artifacts(dir: &Path) -> Result<(String, bool)> {
    let summary_path = dir.join("summary.json");
    let text = std::fs::read_to_string(&summary_path).map_err(|e| LabError::io(&summary_path, e))?;
    let summary: Summary =
        serde_json::from_str(&text).map_err(|e| LabError::Internal(format!("{}: {e}", summary_path.display())))?;
    let reports_dir = dir.join("reports");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&reports_dir)
        .map_err(|e| LabError::io(&reports_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut reports = Vec::with_capacity(files.len());
    for f in files {
        let body = std::fs::read_to_string(&f).map_err(|e| LabError::io(&f, e))?;
        reports.push(
            serde_json::from_str::<VerificationReport>(&body)
                .map_err(|e| LabError::Internal(format!("{}: {e}", f.display())))?,
        );
    }
    Ok((summary.to_text(&reports), summary.passed))
}

/// CSV of every jump of the primal and dual chains at scale `n`, sorted by
/// chain, site multi-index and direction.
pub fn dump_chain(cfg: &ExperimentConfig, n: u64) -> Result<String> {
    let spec = cfg.rbm_spec()?;
    let chains = chains_for(&spec, n, cfg.lattice.k, cfg.constants()?)?;
    let d = spec.dim();
    let mut out = String::from("chain");
    for i in 0..d {
        let _ = write!(out, ",site_{i}");
    }
    for i in 0..d {
        let _ = write!(out, ",dir_{i}");
    }
    out.push_str(",rate\n");
    for (label, chain) in [("primal", &chains.primal), ("dual", &chains.dual)] {
        dump_one(&mut out, label, chain, d);
    }
    Ok(out)
}

fn dump_one(out: &mut String, label: &str, chain: &CompiledChain, d: usize) {
    // state indices already run in lexicographic site order
    for x in 0..chain.num_states() {
        let site = chain.site(x);
        let mut jumps: Vec<_> = chain.slots(x).map(|s| (*chain.direction(s), chain.rate(s))).collect();
        jumps.sort_by_key(|a| a.0);
        for (dir, rate) in jumps {
            out.push_str(label);
            for v in &site[..d] {
                let _ = write!(out, ",{v}");
            }
            for v in &dir[..d] {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{}", fmt_num(rate));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GEN: &str = r#"
[spec]
d = 2
b = [-1.0, -1.0]
A = [[1.0, 0.2], [0.2, 1.0]]
R = [[1.0, 0.5], [-0.3, 1.0]]

[lattice]
n = [100]
K = 1.0
"#;

    #[test]
    fn published_face_rate_in_dump() {
        let cfg = ExperimentConfig::from_toml(GEN).unwrap();
        let csv = dump_chain(&cfg, 100).unwrap();
        assert!(csv.starts_with("chain,site_0,site_1,dir_0,dir_1,rate\n"));
        // a site on the face x_1 = 0 jumps by −e_2 at rate 150
        assert!(csv.contains("primal,0,5,0,-1,1.5000000000000000e2\n"), "{}", &csv[..400]);
    }

    #[test]
    fn empty_lattice_is_a_config_error() {
        let cfg = ExperimentConfig::from_toml(&GEN.replace("K = 1.0", "K = 0.05")).unwrap();
        assert_eq!(dump_chain(&cfg, 100).unwrap_err().exit_code(), 2);
    }
}
