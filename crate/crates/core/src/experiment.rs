//! Experiment drivers behind the command-line tool.
//!
//! Every output is a pure function of the configuration and the scenario.
//! CSV files begin with a `# config_digest=<hex>` comment line followed by a
//! header row; the only nondeterministic column anywhere is `wall_time_ms`
//! in the comparison table.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::allocation::AllocationMode;
use crate::best_response::msu_utility;
use crate::equilibrium::{verify_equilibrium, EquilibriumReport, EquilibriumSettings};
use crate::ledger::{record_experiment, write_dump};
use crate::pricing::{
    fnse_baseline, grid_price_oracle, gsrap_with, PricingOutcome, SearchSettings, Solver,
    DEFAULT_MAX_ITERATIONS,
};
use crate::scenario::{
    compute_price_bounds, generate_scenario, load_scenario, save_scenario, validate,
    GenerationRanges,
};
use crate::{MarketError, PriceBounds, Result, Scenario};

/// Baseline step used by the coordinate-ascent solver unless overridden.
pub const DEFAULT_INITIAL_STEP: f64 = 1.0;
pub const DEFAULT_GRID_RESOLUTION: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
#[allow(clippy::large_enum_variant)]
pub enum ScenarioSource {
    File {
        path: PathBuf,
    },
    Generated {
        seed: u64,
        n_msus: usize,
        n_bss: usize,
        ranges: GenerationRanges,
    },
}

impl ScenarioSource {
    pub fn generated(seed: u64, n_msus: usize, n_bss: usize) -> Self {
        ScenarioSource::Generated {
            seed,
            n_msus,
            n_bss,
            ranges: GenerationRanges::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Alpha,
    Beta,
    NMsus,
}

impl SweepParameter {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParameter::Alpha => "alpha",
            SweepParameter::Beta => "beta",
            SweepParameter::NMsus => "n_msus",
        }
    }
}

impl std::str::FromStr for SweepParameter {
    type Err = MarketError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepParameter::Alpha),
            "beta" => Ok(SweepParameter::Beta),
            "n_msus" | "n-msus" => Ok(SweepParameter::NMsus),
            other => Err(MarketError::Config(format!(
                "unknown sweep parameter `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl SweepSpec {
    /// Evenly spaced values from `lo` to `hi` inclusive.
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.lo];
        }
        let h = (self.hi - self.lo) / (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| {
                if k + 1 == self.steps {
                    self.hi
                } else {
                    self.lo + h * k as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSource,
    pub solver: Solver,
    /// Overrides the scenario's `kappa`.
    pub kappa: Option<f64>,
    /// Overrides the scenario's `conv_delta`.
    pub conv_delta: Option<f64>,
    pub initial_step: f64,
    pub resolution: usize,
    /// Seed of the golden-section perturbations; defaults to the scenario seed.
    pub search_seed: Option<u64>,
    /// Golden-section restarts with consecutive seeds; the best run is kept.
    #[serde(default = "one")]
    pub starts: usize,
    pub sweep: Option<SweepSpec>,
    /// Run the equilibrium checks after solving.
    pub verify: bool,
    pub out_dir: PathBuf,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(scenario: ScenarioSource, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            scenario,
            solver: Solver::Gsrap,
            kappa: None,
            conv_delta: None,
            initial_step: DEFAULT_INITIAL_STEP,
            resolution: DEFAULT_GRID_RESOLUTION,
            search_seed: None,
            starts: 1,
            sweep: None,
            verify: true,
            out_dir: out_dir.into(),
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(MarketError::Config(m));
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return bad(format!(
                "initial step must be positive, got {}",
                self.initial_step
            ));
        }
        if self.starts == 0 {
            return bad("at least one search start is needed".into());
        }
        if self.resolution == 0 {
            return bad("grid resolution must be at least 1".into());
        }
        if let Some(k) = self.kappa {
            if !(0.0..0.382).contains(&k) {
                return bad(format!("kappa must lie in [0, 0.382), got {k}"));
            }
        }
        if let Some(d) = self.conv_delta {
            if !(d > 0.0 && d.is_finite()) {
                return bad(format!("convergence threshold must be positive, got {d}"));
            }
        }
        if let Some(s) = &self.sweep {
            if s.steps == 0 {
                return bad("sweep needs at least one step".into());
            }
            if !(s.lo.is_finite() && s.hi.is_finite())
                || s.lo > s.hi
                || (s.steps > 1 && s.lo == s.hi)
            {
                return bad(format!("empty sweep range [{}, {}]", s.lo, s.hi));
            }
            if s.lo <= 0.0 {
                return bad(format!("sweep values must be positive, got {}", s.lo));
            }
            if s.parameter == SweepParameter::NMsus {
                if !matches!(self.scenario, ScenarioSource::Generated { .. }) {
                    return bad("an n_msus sweep needs a generated scenario".into());
                }
                if s.lo.fract() != 0.0 || s.hi.fract() != 0.0 {
                    return bad("n_msus sweep bounds must be whole numbers".into());
                }
            }
        }
        Ok(())
    }

    /// Applies the overrides to a scenario's parameters.
    fn prepare(&self, mut scenario: Scenario) -> Scenario {
        if let Some(k) = self.kappa {
            scenario.params.kappa = k;
        }
        if let Some(d) = self.conv_delta {
            scenario.params.conv_delta = d;
        }
        scenario
    }
}

/// Loads or generates the configured scenario and checks it.
pub fn load_or_generate(source: &ScenarioSource) -> Result<(Scenario, Option<GenerationRanges>)> {
    let (scenario, ranges) = match source {
        ScenarioSource::File { path } => {
            let file = load_scenario(path)?;
            let ranges = file.ranges.clone();
            (file.into_scenario(), ranges)
        }
        ScenarioSource::Generated {
            seed,
            n_msus,
            n_bss,
            ranges,
        } => (
            generate_scenario(*seed, *n_msus, *n_bss, ranges)?,
            Some(ranges.clone()),
        ),
    };
    check_scenario(&scenario)?;
    Ok((scenario, ranges))
}

fn check_scenario(scenario: &Scenario) -> Result<PriceBounds> {
    let bounds = compute_price_bounds(scenario)?;
    let problems = validate(scenario);
    if !problems.is_empty() {
        return Err(MarketError::InvalidInput(problems.join("; ")));
    }
    Ok(bounds)
}

/// Hex SHA-256 over the solver settings and the scenario contents. The
/// output directory and the scenario's file path are left out.
pub fn config_digest(config: &ExperimentConfig, scenario: &Scenario) -> Result<String> {
    #[derive(Serialize)]
    struct View<'a> {
        solver: Solver,
        kappa: Option<f64>,
        conv_delta: Option<f64>,
        initial_step: f64,
        resolution: usize,
        search_seed: Option<u64>,
        starts: usize,
        sweep: &'a Option<SweepSpec>,
        verify: bool,
    }
    let view = View {
        solver: config.solver,
        kappa: config.kappa,
        conv_delta: config.conv_delta,
        initial_step: config.initial_step,
        resolution: config.resolution,
        search_seed: config.search_seed,
        starts: config.starts,
        sweep: &config.sweep,
        verify: config.verify,
    };
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&view)?);
    h.update(b"\n");
    h.update(toml::to_string(&crate::scenario::ScenarioFile::new(
        scenario, None,
    ))?);
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenSummary {
    pub path: PathBuf,
    pub bounds: PriceBounds,
    pub n_rational: usize,
    pub n_irrational: usize,
}

/// Writes a generated, validated scenario to `path`.
pub fn cmd_gen(source: &ScenarioSource, path: impl AsRef<Path>) -> Result<GenSummary> {
    let (scenario, ranges) = load_or_generate(source)?;
    let bounds = compute_price_bounds(&scenario)?;
    save_scenario(path.as_ref(), &scenario, ranges.as_ref())?;
    let n_rational = scenario.msus.iter().filter(|u| u.is_rational()).count();
    Ok(GenSummary {
        path: path.as_ref().to_path_buf(),
        bounds,
        n_rational,
        n_irrational: scenario.msus.len() - n_rational,
    })
}

/// Runs the configured solver on a prepared scenario.
pub fn solve(
    config: &ExperimentConfig,
    scenario: &Scenario,
    mode: AllocationMode,
) -> Result<PricingOutcome> {
    let bounds = check_scenario(scenario)?;
    let search_seed = config.search_seed.unwrap_or(scenario.seed);
    match config.solver {
        Solver::Gsrap => {
            let settings = SearchSettings {
                kappa: scenario.params.kappa,
                conv_delta: scenario.params.conv_delta,
                max_iterations: DEFAULT_MAX_ITERATIONS,
            };
            let mut best = gsrap_with(scenario, &bounds, &settings, search_seed, mode)?;
            for k in 1..config.starts as u64 {
                let run = gsrap_with(
                    scenario,
                    &bounds,
                    &settings,
                    search_seed.wrapping_add(k),
                    mode,
                )?;
                if run.profit > best.profit {
                    best = run;
                }
            }
            Ok(best)
        }
        Solver::Fnse => fnse_baseline(scenario, &bounds, config.initial_step),
        Solver::GridOracle => grid_price_oracle(scenario, &bounds, config.resolution),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveSummary {
    pub config_digest: String,
    pub solver: Solver,
    pub scenario_seed: u64,
    pub n_msus: usize,
    pub n_bss: usize,
    pub bounds: PriceBounds,
    pub pr_star: f64,
    pub pw_star: f64,
    pub profit: f64,
    pub profit_evaluations: usize,
    pub served: usize,
    pub sold_render: f64,
    pub sold_bandwidth: f64,
    pub ledger_head: String,
    pub ledger_records: usize,
    pub equilibrium_passed: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub summary: SolveSummary,
    pub outcome: PricingOutcome,
    pub equilibrium: Option<EquilibriumReport>,
}

/// Sums of purchased rendering and bandwidth over served users.
pub fn sold_resources(outcome: &PricingOutcome) -> (f64, f64) {
    outcome
        .assignment
        .serving_bs
        .iter()
        .zip(&outcome.demands)
        .filter(|(s, _)| s.is_some())
        .fold((0.0, 0.0), |(r, w), (_, d)| {
            (r + d.x_render, w + d.x_bandwidth)
        })
}

/// Solves, verifies and writes `summary.json`, `assignment.csv`,
/// `trace.csv`, `ledger.txt` and (when verifying) `equilibrium.json`.
pub fn cmd_solve(config: &ExperimentConfig) -> Result<SolveReport> {
    config.check()?;
    let (scenario, _) = load_or_generate(&config.scenario)?;
    let scenario = config.prepare(scenario);
    let digest = config_digest(config, &scenario)?;
    let bounds = check_scenario(&scenario)?;
    let outcome = solve(config, &scenario, AllocationMode::Full)?;
    let equilibrium = if config.verify {
        Some(verify_equilibrium(
            &scenario,
            &outcome,
            &EquilibriumSettings::default(),
        )?)
    } else {
        None
    };
    let ledger = record_experiment(&scenario, &outcome)?;
    let (sold_render, sold_bandwidth) = sold_resources(&outcome);
    let summary = SolveSummary {
        config_digest: digest.clone(),
        solver: config.solver,
        scenario_seed: scenario.seed,
        n_msus: scenario.msus.len(),
        n_bss: scenario.bss.len(),
        bounds,
        pr_star: outcome.pr_star,
        pw_star: outcome.pw_star,
        profit: outcome.profit,
        profit_evaluations: outcome.evaluations,
        served: outcome.assignment.served_count(),
        sold_render,
        sold_bandwidth,
        ledger_head: hex::encode(ledger.head()),
        ledger_records: ledger.records().len(),
        equilibrium_passed: equilibrium.as_ref().map(|e| e.passed),
    };

    let out = &config.out_dir;
    fs::create_dir_all(out)?;
    write_json(out.join("summary.json"), &summary)?;
    write_assignment_csv(out.join("assignment.csv"), &digest, &scenario, &outcome)?;
    write_trace_csv(out.join("trace.csv"), &digest, &outcome)?;
    write_dump(out.join("ledger.txt"), ledger.records())?;
    if let Some(eq) = &equilibrium {
        write_json(out.join("equilibrium.json"), eq)?;
    }
    Ok(SolveReport {
        summary,
        outcome,
        equilibrium,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub pr_star: f64,
    pub pw_star: f64,
    pub sold_render: f64,
    pub sold_bandwidth: f64,
    pub profit: f64,
    pub served: usize,
}

/// Scenario for one sweep point: every user's `alpha` or `beta` set to
/// `value`, or a fresh draw with `value` users.
pub fn sweep_scenario(
    base: &Scenario,
    source: &ScenarioSource,
    parameter: SweepParameter,
    value: f64,
) -> Result<Scenario> {
    match parameter {
        SweepParameter::Alpha => {
            let mut s = base.clone();
            s.msus.iter_mut().for_each(|u| u.alpha = value);
            Ok(s)
        }
        SweepParameter::Beta => {
            let mut s = base.clone();
            s.msus.iter_mut().for_each(|u| u.beta = value);
            Ok(s)
        }
        SweepParameter::NMsus => match source {
            ScenarioSource::Generated {
                seed,
                n_bss,
                ranges,
                ..
            } => {
                let mut s = generate_scenario(*seed, value as usize, *n_bss, ranges)?;
                s.params.kappa = base.params.kappa;
                s.params.conv_delta = base.params.conv_delta;
                Ok(s)
            }
            ScenarioSource::File { .. } => Err(MarketError::Config(
                "an n_msus sweep needs a generated scenario".into(),
            )),
        },
    }
}

/// Re-solves at each sweep value and writes `sweep.csv`.
pub fn cmd_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    config.check()?;
    let spec = config
        .sweep
        .ok_or_else(|| MarketError::Config("sweep requested without a sweep spec".into()))?;
    let (base, _) = load_or_generate(&config.scenario)?;
    let base = config.prepare(base);
    let digest = config_digest(config, &base)?;

    let mut rows = Vec::with_capacity(spec.steps);
    for value in spec.values() {
        let s = sweep_scenario(&base, &config.scenario, spec.parameter, value)?;
        let outcome = solve(config, &s, AllocationMode::Full)?;
        let (sold_render, sold_bandwidth) = sold_resources(&outcome);
        rows.push(SweepRow {
            value,
            pr_star: outcome.pr_star,
            pw_star: outcome.pw_star,
            sold_render,
            sold_bandwidth,
            profit: outcome.profit,
            served: outcome.assignment.served_count(),
        });
    }

    fs::create_dir_all(&config.out_dir)?;
    let mut w = csv_writer(config.out_dir.join("sweep.csv"), &digest)?;
    w.write_record([
        spec.parameter.as_str(),
        "pr_star",
        "pw_star",
        "sold_render",
        "sold_bandwidth",
        "profit",
        "served",
    ])?;
    for r in &rows {
        w.write_record([
            r.value.to_string(),
            r.pr_star.to_string(),
            r.pw_star.to_string(),
            r.sold_render.to_string(),
            r.sold_bandwidth.to_string(),
            r.profit.to_string(),
            r.served.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(rows)
}

/// Algorithms compared by [`cmd_compare`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Solver(Solver),
    /// Golden-section pricing over greedy-only allocation.
    GreedyOnly,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Solver(s) => s.as_str(),
            Algorithm::GreedyOnly => "greedy-only",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub algorithm: &'static str,
    pub n_msus: usize,
    pub seed: u64,
    pub profit: f64,
    pub profit_evaluations: usize,
    pub evaluations_to_1pct: usize,
    pub pr_star: f64,
    pub pw_star: f64,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSpec {
    pub solvers: Vec<Solver>,
    pub n_values: Vec<usize>,
    pub seeds: Vec<u64>,
    pub n_bss: usize,
}

/// Runs every algorithm per `(n, seed)` cell plus the greedy-only
/// ablation and writes `compare.csv`.
pub fn cmd_compare(config: &ExperimentConfig, spec: &CompareSpec) -> Result<Vec<CompareRow>> {
    config.check()?;
    if spec.solvers.is_empty() || spec.n_values.is_empty() || spec.seeds.is_empty() {
        return Err(MarketError::Config(
            "comparison needs solvers, sizes and seeds".into(),
        ));
    }
    let ranges = match &config.scenario {
        ScenarioSource::Generated { ranges, .. } => ranges.clone(),
        ScenarioSource::File { .. } => GenerationRanges::default(),
    };
    let mut algorithms: Vec<Algorithm> =
        spec.solvers.iter().map(|&s| Algorithm::Solver(s)).collect();
    algorithms.push(Algorithm::GreedyOnly);

    let mut rows = Vec::new();
    let mut digest_input = Sha256::new();
    digest_input.update(serde_json::to_vec(spec)?);
    for &n in &spec.n_values {
        for &seed in &spec.seeds {
            let scenario = config.prepare(generate_scenario(seed, n, spec.n_bss, &ranges)?);
            digest_input.update(config_digest(config, &scenario)?);
            for alg in &algorithms {
                let start = Instant::now();
                let outcome = match alg {
                    Algorithm::Solver(s) => {
                        let c = ExperimentConfig {
                            solver: *s,
                            ..config.clone()
                        };
                        solve(&c, &scenario, AllocationMode::Full)?
                    }
                    Algorithm::GreedyOnly => {
                        let c = ExperimentConfig {
                            solver: Solver::Gsrap,
                            ..config.clone()
                        };
                        solve(&c, &scenario, AllocationMode::GreedyOnly)?
                    }
                };
                rows.push(CompareRow {
                    algorithm: alg.as_str(),
                    n_msus: n,
                    seed,
                    profit: outcome.profit,
                    profit_evaluations: outcome.evaluations,
                    evaluations_to_1pct: outcome.evaluations_to_within(0.01),
                    pr_star: outcome.pr_star,
                    pw_star: outcome.pw_star,
                    wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
                });
            }
        }
    }

    let digest = hex::encode(digest_input.finalize());
    fs::create_dir_all(&config.out_dir)?;
    let mut w = csv_writer(config.out_dir.join("compare.csv"), &digest)?;
    w.write_record([
        "algorithm",
        "n_msus",
        "seed",
        "profit",
        "profit_evaluations",
        "evaluations_to_1pct",
        "pr_star",
        "pw_star",
        "wall_time_ms",
    ])?;
    for r in &rows {
        w.write_record([
            r.algorithm.to_string(),
            r.n_msus.to_string(),
            r.seed.to_string(),
            r.profit.to_string(),
            r.profit_evaluations.to_string(),
            r.evaluations_to_1pct.to_string(),
            r.pr_star.to_string(),
            r.pw_star.to_string(),
            format!("{:.3}", r.wall_time_ms),
        ])?;
    }
    w.flush()?;
    Ok(rows)
}

/// Spearman rank correlation, with tied values given their average rank.
/// Returns `None` for fewer than two points or a constant series.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean).powi(2);
        syy += (b - mean).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &idx[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

fn write_json(path: PathBuf, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn csv_writer(path: PathBuf, digest: &str) -> Result<csv::Writer<BufWriter<File>>> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "# config_digest={digest}")?;
    Ok(csv::Writer::from_writer(file))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn write_assignment_csv(
    path: PathBuf,
    digest: &str,
    scenario: &Scenario,
    outcome: &PricingOutcome,
) -> Result<()> {
    let prices = outcome.prices();
    let mut w = csv_writer(path, digest)?;
    w.write_record([
        "msu_id",
        "rationality",
        "serving_bs",
        "x_render",
        "x_bandwidth",
        "spend",
        "utility",
    ])?;
    for (i, u) in scenario.msus.iter().enumerate() {
        let d = outcome.demands[i];
        w.write_record([
            u.id.to_string(),
            if u.is_rational() {
                "rational"
            } else {
                "irrational"
            }
            .to_string(),
            outcome.assignment.serving_bs[i]
                .map_or_else(String::new, |j| scenario.bss[j].id.to_string()),
            d.x_render.to_string(),
            d.x_bandwidth.to_string(),
            d.spend(prices).to_string(),
            msu_utility(u, &scenario.params, prices, d).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_trace_csv(path: PathBuf, digest: &str, outcome: &PricingOutcome) -> Result<()> {
    let mut w = csv_writer(path, digest)?;
    w.write_record([
        "iteration",
        "coordinate",
        "pr_lo",
        "pr_hi",
        "pw_lo",
        "pw_hi",
        "probe_lo_profit",
        "probe_hi_profit",
        "evaluations",
        "best_profit",
    ])?;
    for t in &outcome.trace {
        w.write_record([
            t.iteration.to_string(),
            t.coordinate.as_str().to_string(),
            t.pr_lo.to_string(),
            t.pr_hi.to_string(),
            t.pw_lo.to_string(),
            t.pw_hi.to_string(),
            opt(t.probe_lo_profit),
            opt(t.probe_hi_profit),
            t.evaluations.to_string(),
            t.best_profit.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
