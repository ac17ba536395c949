//! Empirical checks that a priced outcome is an equilibrium.
//!
//! Followers are checked against a grid search over their own feasible
//! purchases, the leader against small relative price perturbations with a
//! full market re-solve, and the profit landscape is scanned along each price
//! axis for secondary local maxima.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::AllocationMode;
use crate::best_response::{grid_oracle_best_response, msu_utility, Demand};
use crate::pricing::{market_response, PricingOutcome};
use crate::scenario::compute_price_bounds;
use crate::{MarketError, PriceBounds, Prices, Result, Scenario};

/// Grid resolution for follower deviations.
pub const MSU_GRID_RESOLUTION: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSettings {
    /// Largest tolerated follower utility gain.
    pub msu_tol: f64,
    /// Largest tolerated leader profit gain, relative to its profit.
    pub msp_rel_tol: f64,
    pub perturbations: Vec<f64>,
    pub concavity_samples: usize,
}

impl Default for EquilibriumSettings {
    fn default() -> Self {
        Self {
            msu_tol: 1e-3,
            msp_rel_tol: 0.01,
            perturbations: vec![-0.05, -0.01, 0.01, 0.05],
            concavity_samples: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsuCheck {
    /// Utility gain of the best grid deviation per user; `None` for
    /// irrational users, whose split is fixed.
    pub improvements: Vec<Option<f64>>,
    pub max_improvement: f64,
    pub passed: bool,
}

/// Grid-deviation check for every rational user.
pub fn verify_msu_equilibrium(
    scenario: &Scenario,
    prices: Prices,
    demands: &[Demand],
    tol: f64,
) -> Result<MsuCheck> {
    if demands.len() != scenario.msus.len() {
        return Err(MarketError::InvalidInput(format!(
            "{} demands for {} users",
            demands.len(),
            scenario.msus.len()
        )));
    }
    let params = &scenario.params;
    let improvements: Vec<Option<f64>> = scenario
        .msus
        .par_iter()
        .zip(demands.par_iter())
        .map(|(u, &d)| {
            u.is_rational().then(|| {
                let dev = grid_oracle_best_response(u, params, prices, MSU_GRID_RESOLUTION);
                msu_utility(u, params, prices, dev) - msu_utility(u, params, prices, d)
            })
        })
        .collect();
    let max_improvement = improvements.iter().flatten().copied().fold(0.0, f64::max);
    Ok(MsuCheck {
        passed: max_improvement <= tol,
        improvements,
        max_improvement,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MspCheck {
    /// Largest profit gain over the perturbed prices, floored at zero.
    pub max_gain: f64,
    pub max_gain_rel: f64,
    /// Perturbed prices attaining `max_gain`, if any gained.
    pub best_prices: Option<Prices>,
    pub evaluated: usize,
    pub passed: bool,
}

/// Perturbed price pairs: each relative step on `p_r` alone, on `p_w`
/// alone, on both, and on both in opposite directions, clipped to the box.
pub fn perturbed_prices(prices: Prices, bounds: &PriceBounds, rel: &[f64]) -> Vec<Prices> {
    let mut out = Vec::with_capacity(4 * rel.len());
    for &s in rel {
        for (a, b) in [(s, 0.0), (0.0, s), (s, s), (s, -s)] {
            let p = Prices::new(prices.render * (1.0 + a), prices.bandwidth * (1.0 + b));
            out.push(bounds.clamp(p));
        }
    }
    out
}

/// Re-solves the market at perturbed prices and reports the best gain over
/// the outcome's profit; passes if it is within `rel_tol` of that profit.
pub fn verify_msp_equilibrium(
    scenario: &Scenario,
    outcome: &PricingOutcome,
    rel_perturbations: &[f64],
    rel_tol: f64,
) -> Result<MspCheck> {
    let bounds = compute_price_bounds(scenario)?;
    let candidates = perturbed_prices(outcome.prices(), &bounds, rel_perturbations);
    let profits = candidates
        .par_iter()
        .map(|&p| market_response(scenario, p, AllocationMode::Full).map(|r| r.profit))
        .collect::<Result<Vec<f64>>>()?;

    let mut max_gain = 0.0;
    let mut best_prices = None;
    for (p, v) in candidates.iter().zip(&profits) {
        let gain = v - outcome.profit;
        if gain > max_gain {
            max_gain = gain;
            best_prices = Some(*p);
        }
    }
    let max_gain_rel = if outcome.profit.abs() > 0.0 {
        max_gain / outcome.profit.abs()
    } else if max_gain > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(MspCheck {
        max_gain,
        max_gain_rel,
        best_prices,
        evaluated: candidates.len(),
        passed: max_gain_rel <= rel_tol,
    })
}

/// Number of local maxima of a sampled curve beyond the first.
///
/// Runs of samples within `noise` of each other are merged first, so flat
/// stretches do not count. Endpoints count as maxima when they exceed their
/// only neighbour.
pub fn extra_local_maxima(values: &[f64], noise: f64) -> usize {
    let mut levels: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        match levels.last() {
            Some(&last) if (v - last).abs() <= noise => {}
            _ => levels.push(v),
        }
    }
    if levels.len() < 2 {
        return 0;
    }
    let n = levels.len();
    let peaks = (0..n)
        .filter(|&k| {
            let left = k == 0 || levels[k] > levels[k - 1];
            let right = k + 1 == n || levels[k] > levels[k + 1];
            left && right
        })
        .count();
    peaks.saturating_sub(1)
}

/// Secondary maxima of the profit along each price axis, the other price
/// held at `prices`.
pub fn numeric_concavity_check(
    scenario: &Scenario,
    prices: Prices,
    samples: usize,
) -> Result<usize> {
    if samples < 2 {
        return Err(MarketError::InvalidInput(format!(
            "need at least 2 samples per axis, got {samples}"
        )));
    }
    let bounds = compute_price_bounds(scenario)?;
    let axis = |lo: f64, hi: f64| -> Vec<f64> {
        let h = (hi - lo) / (samples - 1) as f64;
        (0..samples).map(|k| lo + h * k as f64).collect()
    };
    let scan = |points: Vec<Prices>| -> Result<usize> {
        let values = points
            .par_iter()
            .map(|&p| market_response(scenario, p, AllocationMode::Full).map(|r| r.profit))
            .collect::<Result<Vec<f64>>>()?;
        let scale = values.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        Ok(extra_local_maxima(&values, 1e-9 * scale))
    };
    let along_r = axis(bounds.pr_min, bounds.pr_max)
        .into_iter()
        .map(|r| Prices::new(r, prices.bandwidth))
        .collect();
    let along_w = axis(bounds.pw_min, bounds.pw_max)
        .into_iter()
        .map(|w| Prices::new(prices.render, w))
        .collect();
    Ok(scan(along_r)? + scan(along_w)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub prices: Prices,
    pub profit: f64,
    pub max_msu_improvement: f64,
    pub msu_improvements: Vec<Option<f64>>,
    pub max_msp_improvement: f64,
    pub max_msp_improvement_rel: f64,
    /// Reported only; a multi-peaked profit scan does not fail the report.
    pub concavity_violations: usize,
    pub msu_passed: bool,
    pub msp_passed: bool,
    pub passed: bool,
    pub settings: EquilibriumSettings,
}

/// Runs all three checks. `passed` requires the follower and leader checks.
pub fn verify_equilibrium(
    scenario: &Scenario,
    outcome: &PricingOutcome,
    settings: &EquilibriumSettings,
) -> Result<EquilibriumReport> {
    let msu = verify_msu_equilibrium(
        scenario,
        outcome.prices(),
        &outcome.demands,
        settings.msu_tol,
    )?;
    let msp = verify_msp_equilibrium(
        scenario,
        outcome,
        &settings.perturbations,
        settings.msp_rel_tol,
    )?;
    let concavity_violations =
        numeric_concavity_check(scenario, outcome.prices(), settings.concavity_samples)?;
    Ok(EquilibriumReport {
        prices: outcome.prices(),
        profit: outcome.profit,
        max_msu_improvement: msu.max_improvement,
        msu_improvements: msu.improvements,
        max_msp_improvement: msp.max_gain,
        max_msp_improvement_rel: msp.max_gain_rel,
        concavity_violations,
        msu_passed: msu.passed,
        msp_passed: msp.passed,
        passed: msu.passed && msp.passed,
        settings: settings.clone(),
    })
}
