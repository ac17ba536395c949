//! Leader price search over the box `[pr_min, pr_max] x [pw_min, pw_max]`.
//!
//! Three searchers share one evaluation wrapper so that their profit
//! evaluation counts are comparable:
//!
//! * [`gsrap`]: alternating golden-section steps on `p_w` then `p_r`, with
//!   the bound moved by each step randomly perturbed by up to `kappa` times
//!   the interval width.
//! * [`fnse_baseline`]: deterministic fixed-step coordinate ascent that
//!   halves its step when no move improves.
//! * [`grid_price_oracle`]: exhaustive evaluation of a regular grid.
//!
//! The generic forms ([`golden_section_search`], [`coordinate_ascent`],
//! [`grid_search`]) take any objective, which is how the synthetic
//! landscapes in the tests are driven.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Mutex;

use crate::allocation::{allocate_with, AllocationMode, Assignment};
use crate::best_response::{respond, Demand};
use crate::scenario::{compute_price_bounds, MarketParams};
use crate::{MarketError, PriceBounds, Prices, Result, Scenario};

/// Golden-ratio split: probes sit at `lo + (1 - G) w` and `lo + G w`.
pub const GOLDEN: f64 = 0.618_033_988_749_894_9;
/// Default iteration cap for each search loop.
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSettings {
    /// Bound perturbation, as a fraction of the current interval width.
    pub kappa: f64,
    /// Convergence width for intervals and the minimum step of the baseline.
    pub conv_delta: f64,
    pub max_iterations: usize,
}

impl SearchSettings {
    pub fn from_params(params: &MarketParams) -> Self {
        Self {
            kappa: params.kappa,
            conv_delta: params.conv_delta,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }

    fn check(&self) -> Result<()> {
        if !(0.0..GOLDEN.powi(2)).contains(&self.kappa) {
            return Err(MarketError::Config(format!(
                "kappa must lie in [0, {:.3}), got {}",
                GOLDEN.powi(2),
                self.kappa
            )));
        }
        if !(self.conv_delta > 0.0 && self.conv_delta.is_finite()) {
            return Err(MarketError::Config(format!(
                "conv_delta must be positive, got {}",
                self.conv_delta
            )));
        }
        Ok(())
    }
}

/// Which price a search step moved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coordinate {
    Render,
    Bandwidth,
    /// Whole-grid or final evaluation rows.
    Both,
}

impl Coordinate {
    pub fn as_str(&self) -> &'static str {
        match self {
            Coordinate::Render => "r",
            Coordinate::Bandwidth => "w",
            Coordinate::Both => "rw",
        }
    }
}

/// One search step. For the golden-section search the intervals are the
/// bracketing intervals after the step; for the baseline they are the
/// current point plus or minus the step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub coordinate: Coordinate,
    pub pr_lo: f64,
    pub pr_hi: f64,
    pub pw_lo: f64,
    pub pw_hi: f64,
    pub probe_lo_profit: Option<f64>,
    pub probe_hi_profit: Option<f64>,
    /// Cumulative profit evaluations after this step.
    pub evaluations: usize,
    pub best_profit: f64,
}

/// Result of a search over an arbitrary objective.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub prices: Prices,
    pub value: f64,
    pub evaluations: usize,
    /// Objective value of every evaluation in call order.
    pub history: Vec<f64>,
    pub trace: Vec<TraceRow>,
}

/// Counts and records objective calls.
struct Evaluator<'a, F> {
    f: &'a F,
    history: Mutex<Vec<f64>>,
}

impl<'a, F> Evaluator<'a, F>
where
    F: Fn(Prices) -> Result<f64> + Sync,
{
    fn new(f: &'a F) -> Self {
        Self {
            f,
            history: Mutex::new(Vec::new()),
        }
    }

    fn eval(&self, p: Prices) -> Result<f64> {
        let v = (self.f)(p)?;
        self.history.lock().expect("history lock").push(v);
        Ok(v)
    }

    /// Evaluates two points concurrently; history order is `a` then `b`.
    fn eval_pair(&self, a: Prices, b: Prices) -> Result<(f64, f64)> {
        let (va, vb) = rayon::join(|| (self.f)(a), || (self.f)(b));
        let (va, vb) = (va?, vb?);
        self.history.lock().expect("history lock").extend([va, vb]);
        Ok((va, vb))
    }

    fn count(&self) -> usize {
        self.history.lock().expect("history lock").len()
    }

    fn best(&self) -> f64 {
        self.history
            .lock()
            .expect("history lock")
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn finish(self, prices: Prices, trace: Vec<TraceRow>) -> Result<SearchResult> {
        let value = self.eval(prices)?;
        let history = self.history.into_inner().expect("history lock");
        Ok(SearchResult {
            prices,
            value,
            evaluations: history.len(),
            history,
            trace,
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Bracket {
    lo: f64,
    hi: f64,
    min: f64,
    max: f64,
}

impl Bracket {
    fn width(&self) -> f64 {
        self.hi - self.lo
    }

    fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    fn probes(&self) -> (f64, f64) {
        let w = self.width();
        (self.hi - GOLDEN * w, self.lo + GOLDEN * w)
    }

    /// Keeps the side of the better probe, then perturbs the bound that
    /// moved. Returns the better probe.
    fn shrink(
        &mut self,
        left: (f64, f64),
        right: (f64, f64),
        kappa: f64,
        rng: &mut ChaCha8Rng,
    ) -> f64 {
        let keep_left = left.1 >= right.1;
        if keep_left {
            self.hi = right.0;
        } else {
            self.lo = left.0;
        }
        let span = kappa * self.width();
        let omega = if span > 0.0 {
            rng.random_range(-span..=span)
        } else {
            0.0
        };
        if keep_left {
            let moved = (self.hi + omega).clamp(self.min, self.max);
            if moved > self.lo {
                self.hi = moved;
            }
        } else {
            let moved = (self.lo + omega).clamp(self.min, self.max);
            if moved < self.hi {
                self.lo = moved;
            }
        }
        if keep_left {
            left.0
        } else {
            right.0
        }
    }
}

/// Perturbed two-dimensional golden-section coordinate search.
///
/// Each iteration takes one step on `p_w` (at the current `p_r`) and then
/// one on `p_r` (at the better `p_w` probe just found); `p_r` starts at its
/// lower bound. The loop runs while both widths are at least
/// `conv_delta`; whichever interval is still wide is then finished without
/// perturbation, holding the other price at its midpoint. The result is the
/// pair of interval midpoints.
pub fn golden_section_search<F>(
    f: &F,
    bounds: &PriceBounds,
    settings: &SearchSettings,
    seed: u64,
) -> Result<SearchResult>
where
    F: Fn(Prices) -> Result<f64> + Sync,
{
    settings.check()?;
    let mut gs = GoldenSearch {
        ev: Evaluator::new(f),
        trace: Vec::new(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        r: Bracket {
            lo: bounds.pr_min,
            hi: bounds.pr_max,
            min: bounds.pr_min,
            max: bounds.pr_max,
        },
        w: Bracket {
            lo: bounds.pw_min,
            hi: bounds.pw_max,
            min: bounds.pw_min,
            max: bounds.pw_max,
        },
        iteration: 0,
    };
    let delta = settings.conv_delta;
    let cap = settings.max_iterations;

    let mut pr_cur = bounds.pr_min;
    while gs.w.width() >= delta && gs.r.width() >= delta && gs.iteration < cap {
        gs.iteration += 1;
        let pw_cur = gs.step_bandwidth(pr_cur, settings.kappa)?;
        pr_cur = gs.step_render(pw_cur, settings.kappa)?;
    }
    let mut extra = 0;
    while gs.w.width() >= delta && extra < cap {
        extra += 1;
        gs.iteration += 1;
        gs.step_bandwidth(gs.r.mid(), 0.0)?;
    }
    while gs.r.width() >= delta && extra < cap {
        extra += 1;
        gs.iteration += 1;
        gs.step_render(gs.w.mid(), 0.0)?;
    }

    let prices = bounds.clamp(Prices::new(gs.r.mid(), gs.w.mid()));
    gs.ev.finish(prices, gs.trace)
}

struct GoldenSearch<'a, F> {
    ev: Evaluator<'a, F>,
    trace: Vec<TraceRow>,
    rng: ChaCha8Rng,
    r: Bracket,
    w: Bracket,
    iteration: usize,
}

impl<F> GoldenSearch<'_, F>
where
    F: Fn(Prices) -> Result<f64> + Sync,
{
    /// One step on `p_w` at fixed `p_r`; returns the better probe.
    fn step_bandwidth(&mut self, pr: f64, kappa: f64) -> Result<f64> {
        let (a, b) = self.w.probes();
        let (fa, fb) = self.ev.eval_pair(Prices::new(pr, a), Prices::new(pr, b))?;
        let better = self.w.shrink((a, fa), (b, fb), kappa, &mut self.rng);
        self.record(Coordinate::Bandwidth, fa, fb);
        Ok(better)
    }

    /// One step on `p_r` at fixed `p_w`; returns the better probe.
    fn step_render(&mut self, pw: f64, kappa: f64) -> Result<f64> {
        let (a, b) = self.r.probes();
        let (fa, fb) = self.ev.eval_pair(Prices::new(a, pw), Prices::new(b, pw))?;
        let better = self.r.shrink((a, fa), (b, fb), kappa, &mut self.rng);
        self.record(Coordinate::Render, fa, fb);
        Ok(better)
    }

    fn record(&mut self, coordinate: Coordinate, fa: f64, fb: f64) {
        self.trace.push(TraceRow {
            iteration: self.iteration,
            coordinate,
            pr_lo: self.r.lo,
            pr_hi: self.r.hi,
            pw_lo: self.w.lo,
            pw_hi: self.w.hi,
            probe_lo_profit: Some(fa),
            probe_hi_profit: Some(fb),
            evaluations: self.ev.count(),
            best_profit: self.ev.best(),
        });
    }
}

/// Fixed-step coordinate ascent from the lower corner of the box.
///
/// Each round tries `+step` then `-step` on `p_w`, then on `p_r`, moving on
/// the first strict improvement. A round without any move halves the step;
/// the search stops once the step drops below `conv_delta`.
pub fn coordinate_ascent<F>(
    f: &F,
    bounds: &PriceBounds,
    initial_step: f64,
    settings: &SearchSettings,
) -> Result<SearchResult>
where
    F: Fn(Prices) -> Result<f64> + Sync,
{
    if !(initial_step > 0.0 && initial_step.is_finite()) {
        return Err(MarketError::Config(format!(
            "initial step must be positive, got {initial_step}"
        )));
    }
    settings.check()?;
    let ev = Evaluator::new(f);
    let mut at = bounds.lower();
    let mut value = ev.eval(at)?;
    let mut step = initial_step;
    let mut trace = Vec::new();
    let mut round = 0;

    while step >= settings.conv_delta && round < settings.max_iterations {
        round += 1;
        let mut moved = false;
        for coord in [Coordinate::Bandwidth, Coordinate::Render] {
            let mut tried = [None, None];
            for (slot, sign) in [1.0, -1.0].into_iter().enumerate() {
                let candidate = match coord {
                    Coordinate::Bandwidth => Prices::new(at.render, at.bandwidth + sign * step),
                    _ => Prices::new(at.render + sign * step, at.bandwidth),
                };
                let candidate = bounds.clamp(candidate);
                if candidate == at {
                    continue;
                }
                let v = ev.eval(candidate)?;
                tried[slot] = Some(v);
                if v > value {
                    at = candidate;
                    value = v;
                    moved = true;
                    break;
                }
            }
            let window = bounds.clamp(Prices::new(at.render - step, at.bandwidth - step));
            let window_hi = bounds.clamp(Prices::new(at.render + step, at.bandwidth + step));
            trace.push(TraceRow {
                iteration: round,
                coordinate: coord,
                pr_lo: window.render,
                pr_hi: window_hi.render,
                pw_lo: window.bandwidth,
                pw_hi: window_hi.bandwidth,
                probe_lo_profit: tried[1],
                probe_hi_profit: tried[0],
                evaluations: ev.count(),
                best_profit: value,
            });
        }
        if !moved {
            step *= 0.5;
        }
    }
    ev.finish(at, trace)
}

/// Exhaustive search on a `resolution x resolution` grid spanning the box,
/// endpoints included. A single point per axis evaluates the lower corner.
/// Ties go to the first point in row-major `(p_r, p_w)` order.
pub fn grid_search<F>(f: &F, bounds: &PriceBounds, resolution: usize) -> Result<SearchResult>
where
    F: Fn(Prices) -> Result<f64> + Sync,
{
    if resolution == 0 {
        return Err(MarketError::Config(
            "grid resolution must be at least 1".into(),
        ));
    }
    let axis = |lo: f64, hi: f64| -> Vec<f64> {
        if resolution == 1 {
            return vec![lo];
        }
        let h = (hi - lo) / (resolution - 1) as f64;
        (0..resolution)
            .map(|k| {
                if k + 1 == resolution {
                    hi
                } else {
                    lo + h * k as f64
                }
            })
            .collect()
    };
    let rs = axis(bounds.pr_min, bounds.pr_max);
    let ws = axis(bounds.pw_min, bounds.pw_max);
    let points: Vec<Prices> = rs
        .iter()
        .flat_map(|&r| ws.iter().map(move |&w| Prices::new(r, w)))
        .collect();
    let values = points
        .par_iter()
        .map(|&p| f(p))
        .collect::<Result<Vec<f64>>>()?;

    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    let best_value = values[best];
    let ev = Evaluator::new(f);
    *ev.history.lock().expect("history lock") = values;
    let trace = vec![TraceRow {
        iteration: 1,
        coordinate: Coordinate::Both,
        pr_lo: bounds.pr_min,
        pr_hi: bounds.pr_max,
        pw_lo: bounds.pw_min,
        pw_hi: bounds.pw_max,
        probe_lo_profit: None,
        probe_hi_profit: None,
        evaluations: points.len(),
        best_profit: best_value,
    }];
    ev.finish(points[best], trace)
}

/// Demands, assignment and profit of the whole market at fixed prices.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketResponse {
    pub demands: Vec<Demand>,
    pub assignment: Assignment,
    pub profit: f64,
}

/// Follower best responses followed by allocation, without a bounds check.
pub fn market_response(
    scenario: &Scenario,
    prices: Prices,
    mode: AllocationMode,
) -> Result<MarketResponse> {
    let demands = scenario
        .msus
        .iter()
        .map(|u| respond(u, &scenario.params, prices).map(|br| br.demand))
        .collect::<Result<Vec<_>>>()?;
    let allocation = allocate_with(scenario, prices, &demands, mode);
    Ok(MarketResponse {
        demands,
        assignment: allocation.assignment,
        profit: allocation.profit,
    })
}

/// Provider profit and assignment at `prices`, which must lie in the
/// scenario's price box.
pub fn profit_at(scenario: &Scenario, prices: Prices) -> Result<(f64, Assignment)> {
    let bounds = compute_price_bounds(scenario)?;
    if !bounds.contains(prices) {
        return Err(MarketError::PriceOutOfBounds {
            render: prices.render,
            bandwidth: prices.bandwidth,
        });
    }
    let resp = market_response(scenario, prices, AllocationMode::Full)?;
    Ok((resp.profit, resp.assignment))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Gsrap,
    Fnse,
    GridOracle,
}

impl Solver {
    pub fn as_str(&self) -> &'static str {
        match self {
            Solver::Gsrap => "gsrap",
            Solver::Fnse => "fnse",
            Solver::GridOracle => "grid-oracle",
        }
    }
}

impl std::str::FromStr for Solver {
    type Err = MarketError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gsrap" => Ok(Solver::Gsrap),
            "fnse" => Ok(Solver::Fnse),
            "grid-oracle" | "grid" => Ok(Solver::GridOracle),
            other => Err(MarketError::Config(format!("unknown solver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricingOutcome {
    pub solver: Solver,
    pub pr_star: f64,
    pub pw_star: f64,
    pub demands: Vec<Demand>,
    pub assignment: Assignment,
    pub profit: f64,
    /// Number of market evaluations, including the final one at the
    /// returned prices.
    pub evaluations: usize,
    pub history: Vec<f64>,
    pub trace: Vec<TraceRow>,
}

impl PricingOutcome {
    pub fn prices(&self) -> Prices {
        Prices::new(self.pr_star, self.pw_star)
    }

    /// Evaluations needed before some evaluated profit came within
    /// `rel_tol` of the final profit.
    pub fn evaluations_to_within(&self, rel_tol: f64) -> usize {
        let target = self.profit - rel_tol * self.profit.abs();
        self.history
            .iter()
            .position(|&v| v >= target)
            .map_or(self.evaluations, |k| k + 1)
    }
}

fn outcome(
    scenario: &Scenario,
    solver: Solver,
    mode: AllocationMode,
    found: SearchResult,
) -> Result<PricingOutcome> {
    let resp = market_response(scenario, found.prices, mode)?;
    Ok(PricingOutcome {
        solver,
        pr_star: found.prices.render,
        pw_star: found.prices.bandwidth,
        demands: resp.demands,
        assignment: resp.assignment,
        profit: resp.profit,
        evaluations: found.evaluations,
        history: found.history,
        trace: found.trace,
    })
}

fn objective(
    scenario: &Scenario,
    mode: AllocationMode,
) -> impl Fn(Prices) -> Result<f64> + Sync + '_ {
    move |p| market_response(scenario, p, mode).map(|r| r.profit)
}

/// Golden-section pricing with the scenario's `kappa` and `conv_delta`.
pub fn gsrap(scenario: &Scenario, bounds: &PriceBounds, seed: u64) -> Result<PricingOutcome> {
    let settings = SearchSettings::from_params(&scenario.params);
    gsrap_with(scenario, bounds, &settings, seed, AllocationMode::Full)
}

pub fn gsrap_with(
    scenario: &Scenario,
    bounds: &PriceBounds,
    settings: &SearchSettings,
    seed: u64,
    mode: AllocationMode,
) -> Result<PricingOutcome> {
    let f = objective(scenario, mode);
    let found = golden_section_search(&f, bounds, settings, seed)?;
    outcome(scenario, Solver::Gsrap, mode, found)
}

/// Coordinate-ascent baseline with the scenario's `conv_delta`.
pub fn fnse_baseline(
    scenario: &Scenario,
    bounds: &PriceBounds,
    initial_step: f64,
) -> Result<PricingOutcome> {
    let settings = SearchSettings::from_params(&scenario.params);
    let f = objective(scenario, AllocationMode::Full);
    let found = coordinate_ascent(&f, bounds, initial_step, &settings)?;
    outcome(scenario, Solver::Fnse, AllocationMode::Full, found)
}

pub fn grid_price_oracle(
    scenario: &Scenario,
    bounds: &PriceBounds,
    resolution: usize,
) -> Result<PricingOutcome> {
    let f = objective(scenario, AllocationMode::Full);
    let found = grid_search(&f, bounds, resolution)?;
    outcome(scenario, Solver::GridOracle, AllocationMode::Full, found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::fixtures::{bs, msu, scenario};

    fn bounds(lo: f64, hi: f64) -> PriceBounds {
        PriceBounds {
            pr_min: lo,
            pr_max: hi,
            pw_min: lo,
            pw_max: hi,
        }
    }

    fn settings(kappa: f64) -> SearchSettings {
        SearchSettings {
            kappa,
            conv_delta: 1e-3,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }

    fn parabola(p: Prices) -> Result<f64> {
        Ok(-(p.bandwidth - 5.0).powi(2) - 0.5 * (p.render - 3.0).powi(2))
    }

    #[test]
    fn golden_section_finds_parabola_vertex() {
        for kappa in [0.0, 0.1] {
            let out =
                golden_section_search(&parabola, &bounds(1.0, 10.0), &settings(kappa), 7).unwrap();
            assert!(
                (out.prices.bandwidth - 5.0).abs() < 1e-3,
                "{:?}",
                out.prices
            );
            assert!((out.prices.render - 3.0).abs() < 1e-3, "{:?}", out.prices);
        }
    }

    #[test]
    fn unperturbed_steps_contract_by_golden_ratio() {
        let b = bounds(1.0, 10.0);
        let out = golden_section_search(&parabola, &b, &settings(0.0), 0).unwrap();
        let w_rows: Vec<_> = out
            .trace
            .iter()
            .filter(|t| t.coordinate == Coordinate::Bandwidth)
            .collect();
        for (k, row) in w_rows.iter().enumerate() {
            let expected = 9.0 * GOLDEN.powi(k as i32 + 1);
            assert!(((row.pw_hi - row.pw_lo) - expected).abs() < 1e-9 * 9.0);
        }
    }

    #[test]
    fn golden_section_counts_every_call() {
        let calls = std::sync::atomic::AtomicUsize::new(0);
        let f = |p: Prices| {
            calls.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            parabola(p)
        };
        let out = golden_section_search(&f, &bounds(1.0, 10.0), &settings(0.1), 3).unwrap();
        assert_eq!(out.evaluations, calls.into_inner());
        assert_eq!(out.history.len(), out.evaluations);
        assert_eq!(out.trace.last().unwrap().evaluations + 1, out.evaluations);
    }

    #[test]
    fn golden_section_is_seed_deterministic() {
        let b = bounds(1.0, 10.0);
        let a = golden_section_search(&parabola, &b, &settings(0.1), 11).unwrap();
        let c = golden_section_search(&parabola, &b, &settings(0.1), 11).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn golden_section_stays_in_bounds_on_edge_optimum() {
        let f = |p: Prices| Ok(p.render + p.bandwidth);
        let b = bounds(2.0, 4.0);
        let out = golden_section_search(&f, &b, &settings(0.3), 5).unwrap();
        assert!(b.contains(out.prices));
        for row in &out.trace {
            assert!(row.pr_lo >= 2.0 && row.pr_hi <= 4.0 && row.pr_lo < row.pr_hi);
            assert!(row.pw_lo >= 2.0 && row.pw_hi <= 4.0 && row.pw_lo < row.pw_hi);
        }
        assert!((out.prices.render - 4.0).abs() < 1e-3);
    }

    #[test]
    fn settings_reject_large_kappa() {
        assert!(golden_section_search(&parabola, &bounds(1.0, 2.0), &settings(0.5), 0).is_err());
    }

    #[test]
    fn coordinate_ascent_finds_parabola_vertex() {
        let out = coordinate_ascent(&parabola, &bounds(1.0, 10.0), 1.0, &settings(0.0)).unwrap();
        assert!((out.prices.bandwidth - 5.0).abs() < 1e-3);
        assert!((out.prices.render - 3.0).abs() < 1e-3);
    }

    #[test]
    fn coordinate_ascent_climbs_monotone_profit_to_the_cap() {
        let f = |p: Prices| Ok(p.render);
        let out = coordinate_ascent(&f, &bounds(1.0, 7.3), 1.0, &settings(0.0)).unwrap();
        assert_eq!(out.prices.render, 7.3);
    }

    #[test]
    fn coordinate_ascent_rejects_bad_step() {
        assert!(coordinate_ascent(&parabola, &bounds(1.0, 2.0), 0.0, &settings(0.0)).is_err());
    }

    #[test]
    fn one_point_grid_evaluates_lower_corner() {
        let seen = Mutex::new(Vec::new());
        let f = |p: Prices| {
            seen.lock().unwrap().push(p);
            parabola(p)
        };
        let out = grid_search(&f, &bounds(1.0, 10.0), 1).unwrap();
        assert_eq!(out.prices, Prices::new(1.0, 1.0));
        assert!(seen
            .into_inner()
            .unwrap()
            .iter()
            .all(|&p| p == Prices::new(1.0, 1.0)));
    }

    #[test]
    fn fine_grid_lands_within_a_cell() {
        let out = grid_search(&parabola, &bounds(1.0, 10.0), 101).unwrap();
        let h = 9.0 / 100.0;
        assert!((out.prices.bandwidth - 5.0).abs() <= h);
        assert!((out.prices.render - 3.0).abs() <= h);
        assert_eq!(out.evaluations, 101 * 101 + 1);
    }

    fn single_user() -> Scenario {
        // alpha 30, beta h p 16, costs (1, 1): demand (2, 3) at prices (10, 1)
        scenario(
            vec![msu(0, 30.0, 16.0, 50.0)],
            vec![bs(0, 1, 1.0, 1.0, 100.0)],
        )
    }

    #[test]
    fn profit_at_composes_demand_and_allocation() {
        let s = single_user();
        let (profit, a) = profit_at(&s, Prices::new(10.0, 1.0)).unwrap();
        assert!((profit - 18.0).abs() < 1e-9);
        assert_eq!(a.serving_bs, vec![Some(0)]);
    }

    #[test]
    fn profit_at_is_zero_at_the_caps() {
        let s = single_user();
        let (profit, _) = profit_at(&s, Prices::new(30.0, 16.0)).unwrap();
        assert_eq!(profit, 0.0);
    }

    #[test]
    fn profit_at_rejects_prices_below_cost() {
        let s = single_user();
        let err = profit_at(&s, Prices::new(0.5, 1.0)).unwrap_err();
        assert!(matches!(err, MarketError::PriceOutOfBounds { .. }));
    }

    #[test]
    fn outcome_profit_matches_recomputation() {
        let s = single_user();
        let b = compute_price_bounds(&s).unwrap();
        for out in [
            gsrap(&s, &b, 1).unwrap(),
            fnse_baseline(&s, &b, 1.0).unwrap(),
            grid_price_oracle(&s, &b, 60).unwrap(),
        ] {
            assert!(b.contains(out.prices()));
            let (p, a) = profit_at(&s, out.prices()).unwrap();
            assert!((p - out.profit).abs() <= 1e-9 * (1.0 + p.abs()));
            assert_eq!(a, out.assignment);
            assert_eq!(out.history.len(), out.evaluations);
        }
    }

    #[test]
    fn evaluations_to_within_uses_history() {
        let s = single_user();
        let b = compute_price_bounds(&s).unwrap();
        let mut out = gsrap(&s, &b, 1).unwrap();
        out.history = vec![0.0, out.profit, out.profit];
        out.evaluations = 3;
        assert_eq!(out.evaluations_to_within(0.01), 2);
    }

    #[test]
    fn solver_names_round_trip() {
        for s in [Solver::Gsrap, Solver::Fnse, Solver::GridOracle] {
            assert_eq!(s.as_str().parse::<Solver>().unwrap(), s);
        }
        assert!("newton".parse::<Solver>().is_err());
    }
}
