//! Seeded experiment runs with CSV output.
//!
//! Every run is a pure function of its [`ExperimentConfig`]: replicates are
//! grouped into fixed-size chunks, chunk `c` at size `n` draws from its own
//! child stream, and results are merged in chunk order. The worker count only
//! changes how chunks are scheduled, never an emitted digit.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::combinatorics::harmonic;
use crate::error::{Error, Result};
use crate::estimators::{
    check_g_pi, default_rate, estimate_expected_x_with_rate, sample_instance_given_stable_with_rate,
    weighted_mean, Estimate,
};
use crate::instances::{sample_profile, PreferenceProfile, MIN_AGENTS};
use crate::matchings::{combine, is_stable, symmetric_difference, Matching};
use crate::rng::RngStream;
use crate::solvers::{enumerate_stable, irving_solve, stable_cycle_neighbors, EnumerateOptions};

/// Version tag of the CSV layouts; bumped whenever columns change.
pub const CSV_VERSION: u32 = 1;

/// Replicates per random stream.
pub const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// `P(X >= 1)` by sampling profiles and running Irving's algorithm.
    Scaling,
    /// Weighted census of stable single-cycle neighbors given Π stable.
    Census,
    /// Importance estimates of `E[X]`.
    ExScaling,
}

impl ExperimentKind {
    fn stream_id(self) -> u64 {
        match self {
            Self::Scaling => 1,
            Self::Census => 2,
            Self::ExScaling => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub n_grid: Vec<usize>,
    /// Profiles per `n` (scaling) or weighted conditional samples (census).
    pub replicates: usize,
    pub master_seed: u64,
    /// Thread count; 0 uses all cores.
    pub workers: usize,
    pub output: Option<PathBuf>,
    /// Importance samples per `n` for `ex-scaling`.
    pub samples: usize,
    /// Proposal rate override; defaults to `√n`.
    pub rate: Option<f64>,
    /// Largest cycle half-length searched in the census.
    pub nu_cap: usize,
    /// The census counts all stable matchings only up to this size.
    pub enumerate_up_to: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Scaling,
            n_grid: vec![10, 20, 50],
            replicates: 1000,
            master_seed: 0,
            workers: 0,
            output: None,
            samples: 10_000,
            rate: None,
            nu_cap: 5,
            enumerate_up_to: 12,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_grid.is_empty() {
            return bad("n_grid is empty".into());
        }
        if let Some(&n) = self.n_grid.iter().find(|&&n| n < MIN_AGENTS || n % 2 != 0) {
            return bad(format!("n values must be even and >= {MIN_AGENTS}, got {n}"));
        }
        if self.replicates == 0 {
            return bad("replicates must be >= 1".into());
        }
        if let Some(r) = self.rate {
            if !(r > 0.0) || !r.is_finite() {
                return bad(format!("rate must be positive, got {r}"));
            }
        }
        match self.kind {
            ExperimentKind::ExScaling if self.samples < crate::estimators::MIN_SAMPLES => bad(format!(
                "samples must be >= {}, got {}",
                crate::estimators::MIN_SAMPLES,
                self.samples
            )),
            ExperimentKind::Census => {
                if self.nu_cap < 2 {
                    return bad(format!("nu_cap must be >= 2, got {}", self.nu_cap));
                }
                match self.n_grid.iter().find(|&&n| self.nu_cap > n / 2) {
                    Some(n) => bad(format!("nu_cap {} too large for n = {n}", self.nu_cap)),
                    None => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }

    /// Hex SHA-256 of the canonical JSON of every field that affects the
    /// output (the worker count and output path do not).
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("workers");
            m.remove("output");
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }

    fn rate_for(&self, n: usize) -> f64 {
        self.rate.unwrap_or_else(|| default_rate(n))
    }

    fn stream(&self, n: usize) -> RngStream {
        RngStream::new(self.master_seed, self.kind.stream_id()).child(n as u64)
    }
}

/// Rows plus the rendered CSV and its JSON sidecar.
#[derive(Debug, Clone)]
pub struct ExperimentOutput<R> {
    pub rows: Vec<R>,
    pub csv: String,
    pub sidecar: serde_json::Value,
}

impl<R> ExperimentOutput<R> {
    /// Writes the CSV to `path` and the sidecar next to it with a `.json`
    /// extension.
    pub fn write(&self, path: &Path) -> Result<PathBuf> {
        std::fs::write(path, &self.csv).map_err(|e| Error::io(path, e))?;
        let side = path.with_extension("json");
        let text = serde_json::to_string_pretty(&self.sidecar)?;
        std::fs::write(&side, text + "\n").map_err(|e| Error::io(&side, e))?;
        Ok(side)
    }
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Maps `f(rng, count)` over the chunks of `total` replicates in parallel and
/// concatenates the outputs in chunk order.
fn chunked<T: Send>(
    total: usize,
    stream: &RngStream,
    f: impl Fn(&mut rand_chacha::ChaCha8Rng, usize) -> Result<Vec<T>> + Sync,
) -> Result<Vec<T>> {
    let parts: Vec<Result<Vec<T>>> = (0..total.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| f(&mut stream.child(c as u64).rng(), CHUNK.min(total - c * CHUNK)))
        .collect();
    let mut out = Vec::with_capacity(total);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn render_csv<R: Serialize>(kind: &str, config: &ExperimentConfig, rows: &[R]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    let body = String::from_utf8(bytes).expect("csv is utf-8");
    Ok(format!(
        "# roommates {kind} v{CSV_VERSION} config_sha256={}\n{body}",
        config.hash()
    ))
}

fn sidecar(config: &ExperimentConfig, started: Instant, extra: serde_json::Value) -> serde_json::Value {
    serde_json::json!({
        "config": config,
        "config_sha256": config.hash(),
        "master_seed": config.master_seed,
        "csv_version": CSV_VERSION,
        "crate_version": env!("CARGO_PKG_VERSION"),
        "wall_time_seconds": started.elapsed().as_secs_f64(),
        "details": extra,
    })
}

fn check_kind(config: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    if config.kind != kind {
        return Err(Error::Config(format!(
            "expected a {kind:?} config, got {:?}",
            config.kind
        )));
    }
    config.validate()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub replicates: usize,
    pub count_exists: u64,
    pub p_hat: f64,
    pub stderr: f64,
    /// `e √(2/π) n^{-1/4}`.
    pub mertens_prediction: f64,
}

pub fn mertens_prediction(n: usize) -> f64 {
    std::f64::consts::E * (2.0 / std::f64::consts::PI).sqrt() * (n as f64).powf(-0.25)
}

/// `P(X >= 1)` per `n`: sample profiles and decide existence with Irving's
/// algorithm.
pub fn run_scaling(config: &ExperimentConfig) -> Result<ExperimentOutput<ScalingRow>> {
    check_kind(config, ExperimentKind::Scaling)?;
    let started = Instant::now();
    let rows = with_pool(config.workers, || {
        config
            .n_grid
            .iter()
            .map(|&n| {
                let exists = chunked(config.replicates, &config.stream(n), |rng, count| {
                    (0..count)
                        .map(|_| Ok(irving_solve(&sample_profile(n, rng)?).exists()))
                        .collect()
                })?;
                let count = exists.iter().filter(|&&e| e).count() as u64;
                let r = config.replicates as f64;
                let p = count as f64 / r;
                Ok(ScalingRow {
                    n,
                    replicates: config.replicates,
                    count_exists: count,
                    p_hat: p,
                    stderr: (p * (1.0 - p) / r).sqrt(),
                    mertens_prediction: mertens_prediction(n),
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let csv = render_csv("scaling", config, &rows)?;
    let sidecar = sidecar(config, started, serde_json::json!({}));
    Ok(ExperimentOutput { rows, csv, sidecar })
}

/// Exact number of 4-agent profiles, out of `3!^4 = 1296`, that admit a
/// stable matching.
pub fn exhaustive_existence_count_n4() -> (u64, u64) {
    let rows: Vec<Vec<Vec<usize>>> = (0..4)
        .map(|i| (0..4).filter(|&j| j != i).permutations(3).collect())
        .collect();
    let mut exists = 0;
    let mut total = 0;
    for lists in rows.iter().multi_cartesian_product() {
        let lists: Vec<Vec<usize>> = lists.into_iter().cloned().collect();
        let p = PreferenceProfile::from_lists(&lists).expect("valid permutation lists");
        total += 1;
        exists += irving_solve(&p).exists() as u64;
    }
    (exists, total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExScalingRow {
    pub n: usize,
    pub samples: usize,
    pub mean: f64,
    pub stderr: f64,
    pub ess: f64,
    pub degenerate: bool,
    /// `e^{1/2}`, the large-`n` limit.
    pub limit: f64,
}

pub fn run_ex_scaling(config: &ExperimentConfig) -> Result<ExperimentOutput<ExScalingRow>> {
    check_kind(config, ExperimentKind::ExScaling)?;
    let started = Instant::now();
    let rows = with_pool(config.workers, || {
        config
            .n_grid
            .iter()
            .map(|&n| {
                let e = estimate_expected_x_with_rate(n, config.samples, &config.stream(n), config.rate_for(n))?;
                Ok(ExScalingRow {
                    n,
                    samples: e.samples,
                    mean: e.mean,
                    stderr: e.stderr,
                    ess: e.ess,
                    degenerate: e.degenerate,
                    limit: 0.5f64.exp(),
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let warnings: Vec<usize> = rows.iter().filter(|r| r.degenerate).map(|r| r.n).collect();
    let csv = render_csv("ex-scaling", config, &rows)?;
    let sidecar = sidecar(config, started, serde_json::json!({ "degenerate_n": warnings }));
    Ok(ExperimentOutput { rows, csv, sidecar })
}

/// What one conditional instance contributes to the census.
#[derive(Debug, Clone, PartialEq)]
pub struct CensusSample {
    pub log_weight: f64,
    /// Total number of stable matchings, when enumerated.
    pub x: Option<u64>,
    /// Stable single-cycle neighbors by half-length `2..=nu_cap`.
    pub by_nu: Vec<u64>,
    /// Two distinct stable neighbors whose cycles share a vertex.
    pub d1: bool,
    /// Two stable neighbors with disjoint cycles whose combination is not
    /// stable.
    pub d3: bool,
    pub gpi: bool,
}

impl CensusSample {
    pub fn x_circ(&self) -> u64 {
        self.by_nu.iter().sum()
    }
}

/// Census of one instance in which `pi` is stable.
pub fn census_instance(
    p: &PreferenceProfile,
    pi: &Matching,
    nu_cap: usize,
) -> Result<(Vec<Matching>, Vec<u64>, bool, bool)> {
    let neighbors = stable_cycle_neighbors(p, pi, nu_cap)?;
    let mut by_nu = vec![0u64; nu_cap.saturating_sub(1)];
    let mut vertex_sets = Vec::with_capacity(neighbors.len());
    for m in &neighbors {
        let d = symmetric_difference(pi, m)?;
        by_nu[d.half_lengths()[0] - 2] += 1;
        vertex_sets.push(d.vertex_set());
    }
    let (mut d1, mut d3) = (false, false);
    for (i, j) in (0..neighbors.len()).tuple_combinations() {
        let overlap = vertex_sets[i].iter().any(|v| vertex_sets[j].binary_search(v).is_ok());
        if overlap {
            d1 = true;
        } else if !d3 && !is_stable(p, &combine(pi, &neighbors[i], &neighbors[j])?)? {
            d3 = true;
        }
    }
    Ok((neighbors, by_nu, d1, d3))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalCensusRow {
    pub n: usize,
    pub samples: usize,
    pub ess: f64,
    /// Empty when `n` exceeds the enumeration bound.
    pub mean_x: Option<f64>,
    pub mean_x_stderr: Option<f64>,
    /// `X°ν` for `ν = 2, ..., nu_cap`, joined by `;`.
    pub mean_x_circ_by_nu: String,
    pub mean_x_circ: f64,
    pub mean_x_circ_stderr: f64,
    /// `h_{nu_cap} - 1`, the large-`n` value of `E[X°≤ν]`.
    pub harmonic_target: f64,
    pub d1_rate: f64,
    pub d1_stderr: f64,
    pub d3_rate: f64,
    pub d3_stderr: f64,
    pub gpi_rate: f64,
    pub gpi_stderr: f64,
}

/// Weighted conditional samples at one `n`, in replicate order.
pub fn census_samples(config: &ExperimentConfig, n: usize) -> Result<Vec<CensusSample>> {
    let pi = Matching::consecutive(n)?;
    let rate = config.rate_for(n);
    let enumerate = n <= config.enumerate_up_to;
    chunked(config.replicates, &config.stream(n), |rng, count| {
        (0..count)
            .map(|_| {
                let c = sample_instance_given_stable_with_rate(&pi, rate, rng)?;
                let (_, by_nu, d1, d3) = census_instance(&c.profile, &pi, config.nu_cap)?;
                let x = if enumerate {
                    let opts = EnumerateOptions {
                        materialize: false,
                        cap: n,
                        ..Default::default()
                    };
                    Some(enumerate_stable(&c.profile, &opts)?.x)
                } else {
                    None
                };
                Ok(CensusSample {
                    log_weight: c.log_weight,
                    x,
                    by_nu,
                    d1,
                    d3,
                    gpi: check_g_pi(&c.x).holds(),
                })
            })
            .collect()
    })
}

fn summarize_census(config: &ExperimentConfig, n: usize, samples: &[CensusSample]) -> Result<ConditionalCensusRow> {
    let lw: Vec<f64> = samples.iter().map(|s| s.log_weight).collect();
    let mean = |f: &dyn Fn(&CensusSample) -> f64| -> Estimate {
        weighted_mean(&lw, &samples.iter().map(f).collect::<Vec<_>>())
    };
    let x = samples
        .iter()
        .all(|s| s.x.is_some())
        .then(|| mean(&|s| s.x.unwrap() as f64));
    let by_nu = (0..config.nu_cap - 1)
        .map(|k| format!("{}", mean(&|s| s.by_nu[k] as f64).mean))
        .join(";");
    let circ = mean(&|s| s.x_circ() as f64);
    let d1 = mean(&|s| s.d1 as u8 as f64);
    let d3 = mean(&|s| s.d3 as u8 as f64);
    let gpi = mean(&|s| s.gpi as u8 as f64);
    Ok(ConditionalCensusRow {
        n,
        samples: samples.len(),
        ess: circ.ess,
        mean_x: x.map(|e| e.mean),
        mean_x_stderr: x.map(|e| e.stderr),
        mean_x_circ_by_nu: by_nu,
        mean_x_circ: circ.mean,
        mean_x_circ_stderr: circ.stderr,
        harmonic_target: harmonic(config.nu_cap as u64)? - 1.0,
        d1_rate: d1.mean,
        d1_stderr: d1.stderr,
        d3_rate: d3.mean,
        d3_stderr: d3.stderr,
        gpi_rate: gpi.mean,
        gpi_stderr: gpi.stderr,
    })
}

/// Weighted distribution of `X°≤ν` (value → weight share).
fn x_circ_distribution(samples: &[CensusSample]) -> BTreeMap<u64, f64> {
    let shift = samples.iter().map(|s| s.log_weight).fold(f64::NEG_INFINITY, f64::max);
    let mut dist = BTreeMap::new();
    let mut total = 0.0;
    for s in samples {
        let w = (s.log_weight - shift).exp();
        total += w;
        *dist.entry(s.x_circ()).or_insert(0.0) += w;
    }
    dist.values_mut().for_each(|v| *v /= total);
    dist
}

/// Conditional census over the `n` grid.
pub fn run_conditional_census(config: &ExperimentConfig) -> Result<ExperimentOutput<ConditionalCensusRow>> {
    check_kind(config, ExperimentKind::Census)?;
    let started = Instant::now();
    let (rows, dists) = with_pool(config.workers, || -> Result<_> {
        let mut rows = Vec::new();
        let mut dists = BTreeMap::new();
        for &n in &config.n_grid {
            let samples = census_samples(config, n)?;
            rows.push(summarize_census(config, n, &samples)?);
            dists.insert(n.to_string(), x_circ_distribution(&samples));
        }
        Ok((rows, dists))
    })??;
    let csv = render_csv("census", config, &rows)?;
    let sidecar = sidecar(
        config,
        started,
        serde_json::json!({
            "x_circ_distribution": dists,
            "note": "the few-cycles event is reported as the weighted distribution of X°≤nu_cap; \
                     overlap and combine witnesses range over stable single-cycle neighbors",
        }),
    );
    Ok(ExperimentOutput { rows, csv, sidecar })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: ExperimentKind) -> ExperimentConfig {
        ExperimentConfig {
            kind,
            n_grid: vec![6, 10],
            replicates: 200,
            samples: 1000,
            nu_cap: 3,
            ..Default::default()
        }
    }

    #[test]
    fn validation() {
        let mut c = cfg(ExperimentKind::Scaling);
        assert!(c.validate().is_ok());
        c.n_grid = vec![5];
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c.n_grid = vec![];
        assert!(c.validate().is_err());
        let mut c = cfg(ExperimentKind::Census);
        c.n_grid = vec![4];
        assert!(c.validate().is_err());
        let mut c = cfg(ExperimentKind::Scaling);
        c.replicates = 0;
        assert!(c.validate().is_err());
        let mut c = cfg(ExperimentKind::ExScaling);
        c.samples = 10;
        assert!(c.validate().is_err());
        assert!(run_scaling(&cfg(ExperimentKind::Census)).is_err());
    }

    #[test]
    fn hash_ignores_workers_and_output() {
        let a = cfg(ExperimentKind::Scaling);
        let mut b = a.clone();
        b.workers = 3;
        b.output = Some("x.csv".into());
        assert_eq!(a.hash(), b.hash());
        b.master_seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn config_json_round_trip() {
        let c = cfg(ExperimentKind::Census);
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), c);
        let partial: ExperimentConfig = serde_json::from_str(r#"{"kind": "ex-scaling", "n_grid": [8]}"#).unwrap();
        assert_eq!(partial.kind, ExperimentKind::ExScaling);
        assert_eq!(partial.replicates, ExperimentConfig::default().replicates);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn scaling_rows_are_consistent() {
        let out = run_scaling(&cfg(ExperimentKind::Scaling)).unwrap();
        for r in &out.rows {
            assert_eq!(r.p_hat, r.count_exists as f64 / r.replicates as f64);
            assert!((r.stderr - (r.p_hat * (1.0 - r.p_hat) / r.replicates as f64).sqrt()).abs() < 1e-15);
        }
        assert!(out.csv.starts_with("# roommates scaling v1 config_sha256="));
        assert!(out.csv.lines().nth(1).unwrap().starts_with("n,replicates,count_exists"));
    }

    #[test]
    fn worker_count_does_not_change_output() {
        for kind in [ExperimentKind::Scaling, ExperimentKind::Census, ExperimentKind::ExScaling] {
            let mut a = cfg(kind);
            a.workers = 1;
            let mut b = a.clone();
            b.workers = 3;
            let csv = |c: &ExperimentConfig| match kind {
                ExperimentKind::Scaling => run_scaling(c).unwrap().csv,
                ExperimentKind::Census => run_conditional_census(c).unwrap().csv,
                ExperimentKind::ExScaling => run_ex_scaling(c).unwrap().csv,
            };
            assert_eq!(csv(&a), csv(&b));
        }
    }

    #[test]
    fn exhaustive_n4_count() {
        let (exists, total) = exhaustive_existence_count_n4();
        assert_eq!(total, 1296);
        assert!(exists > 0 && exists < total);
    }

    #[test]
    fn census_samples_always_contain_the_reference() {
        let c = cfg(ExperimentKind::Census);
        for s in census_samples(&c, 10).unwrap() {
            assert!(s.x.unwrap() >= 1);
        }
        let out = run_conditional_census(&c).unwrap();
        for r in &out.rows {
            assert!(r.mean_x.unwrap() >= 1.0);
            for rate in [r.d1_rate, r.d3_rate, r.gpi_rate] {
                assert!((0.0..=1.0).contains(&rate));
            }
            assert_eq!(r.mean_x_circ_by_nu.split(';').count(), 2);
        }
    }

    #[test]
    fn writes_csv_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scaling.csv");
        let out = run_scaling(&cfg(ExperimentKind::Scaling)).unwrap();
        let side = out.write(&path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), out.csv);
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(side).unwrap()).unwrap();
        assert!(v["wall_time_seconds"].as_f64().is_some());
        let missing = dir.path().join("no/such/dir/x.csv");
        assert!(matches!(out.write(&missing), Err(Error::Io { .. })));
    }
}
