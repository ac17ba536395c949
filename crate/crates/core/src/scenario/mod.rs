//! Market instances: global parameters, followers, base stations and the
//! feasible price box derived from them.

mod file;
mod generate;

use serde::{Deserialize, Serialize};

use crate::{MarketError, Result};

pub use file::{load_scenario, save_scenario, ScenarioFile};
pub use generate::{generate_scenario, GenerationRanges, Interval};

/// Global constants shared by every participant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Rendering capacity carried by one unit of rendering resource.
    pub mu: f64,
    /// Noise power spectral density, W/Hz.
    #[serde(rename = "b0_w_per_hz")]
    pub b0: f64,
    /// Bandwidth scaling in the SINR denominator.
    pub phi: f64,
    /// Path loss exponent.
    pub path_loss_exp: f64,
    /// Rendering margin weight of the greedy priority matrix.
    pub a1: f64,
    /// Bandwidth margin weight of the greedy priority matrix.
    pub a2: f64,
    /// Relative magnitude of the random bound perturbation in the price search.
    pub kappa: f64,
    /// Price interval width at which the search stops, currency/unit.
    pub conv_delta: f64,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self {
            mu: 1.0,
            b0: 1.0,
            phi: 1.0,
            path_loss_exp: 2.0,
            a1: 0.5,
            a2: 0.5,
            kappa: 0.1,
            conv_delta: 0.001,
        }
    }
}

impl MarketParams {
    /// The product `B0 * phi` that scales purchased bandwidth inside the SINR.
    pub fn noise_bandwidth(&self) -> f64 {
        self.b0 * self.phi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rationality {
    Rational,
    Irrational,
}

/// One follower's utility parameters and channel state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsuProfile {
    pub id: usize,
    /// Rendering benefit coefficient.
    pub alpha: f64,
    /// Bandwidth payoff coefficient.
    pub beta: f64,
    pub budget: f64,
    #[serde(rename = "tx_power_w")]
    pub tx_power: f64,
    /// Channel gain `|g|^2 d^-delta` against the serving cell, frozen at generation.
    pub channel_gain: f64,
    #[serde(rename = "interference_w")]
    pub interference: f64,
    pub rationality: Rationality,
    /// Share of the budget an irrational user spends on rendering.
    pub gamma: f64,
    #[serde(rename = "position_m")]
    pub position: [f64; 2],
}

impl MsuProfile {
    pub fn is_rational(&self) -> bool {
        self.rationality == Rationality::Rational
    }

    /// `beta * h * p`, the numerator of the bandwidth gain.
    pub fn bandwidth_gain_coefficient(&self) -> f64 {
        self.beta * self.channel_gain * self.tx_power
    }

    /// Highest rendering price at which this user still has a non-negative
    /// marginal utility at zero purchase: `mu * alpha`.
    pub fn rendering_price_cap(&self, params: &MarketParams) -> f64 {
        params.mu * self.alpha
    }

    /// Highest bandwidth price at which this user still has a non-negative
    /// marginal utility at zero purchase: `beta h p / eps^2`.
    pub fn bandwidth_price_cap(&self) -> f64 {
        self.bandwidth_gain_coefficient() / self.interference
    }
}

/// A base station with its capacities and per-user unit serving costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub id: usize,
    #[serde(rename = "position_m")]
    pub position: [f64; 2],
    pub cap_render: f64,
    pub cap_bandwidth: f64,
    /// Unit rendering cost for serving each user, indexed by MSU.
    pub cost_render: Vec<f64>,
    /// Unit bandwidth cost for serving each user, indexed by MSU.
    pub cost_bandwidth: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub params: MarketParams,
    pub msus: Vec<MsuProfile>,
    pub bss: Vec<BaseStation>,
    pub seed: u64,
}

/// Unit prices announced by the provider.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prices {
    pub render: f64,
    pub bandwidth: f64,
}

impl Prices {
    pub fn new(render: f64, bandwidth: f64) -> Self {
        Self { render, bandwidth }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBounds {
    pub pr_min: f64,
    pub pr_max: f64,
    pub pw_min: f64,
    pub pw_max: f64,
}

impl PriceBounds {
    pub fn lower(&self) -> Prices {
        Prices::new(self.pr_min, self.pw_min)
    }

    pub fn upper(&self) -> Prices {
        Prices::new(self.pr_max, self.pw_max)
    }

    pub fn contains(&self, prices: Prices) -> bool {
        let slack = |v: f64| 1e-12 * (1.0 + v.abs());
        prices.render >= self.pr_min - slack(self.pr_min)
            && prices.render <= self.pr_max + slack(self.pr_max)
            && prices.bandwidth >= self.pw_min - slack(self.pw_min)
            && prices.bandwidth <= self.pw_max + slack(self.pw_max)
    }

    pub fn clamp(&self, prices: Prices) -> Prices {
        Prices::new(
            prices.render.clamp(self.pr_min, self.pr_max),
            prices.bandwidth.clamp(self.pw_min, self.pw_max),
        )
    }
}

/// Channel gain `|g|^2 * d^-delta`.
pub fn channel_gain(distance: f64, fading_magnitude_sq: f64, path_loss_exp: f64) -> Result<f64> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(MarketError::InvalidInput(format!(
            "distance must be positive, got {distance}"
        )));
    }
    if !(fading_magnitude_sq >= 0.0) {
        return Err(MarketError::InvalidInput(format!(
            "fading magnitude must be non-negative, got {fading_magnitude_sq}"
        )));
    }
    Ok(fading_magnitude_sq * distance.powf(-path_loss_exp))
}

/// Feasible price box: each price must cover every serving cost and stay
/// below every user's zero-purchase marginal utility.
pub fn compute_price_bounds(scenario: &Scenario) -> Result<PriceBounds> {
    if scenario.msus.is_empty() {
        return Err(MarketError::InvalidInput("scenario has no MSUs".into()));
    }
    if scenario.bss.is_empty() {
        return Err(MarketError::InvalidInput(
            "scenario has no base stations".into(),
        ));
    }
    let params = &scenario.params;
    let pr_max = scenario
        .msus
        .iter()
        .map(|u| u.rendering_price_cap(params))
        .fold(f64::INFINITY, f64::min);
    let pw_max = scenario
        .msus
        .iter()
        .map(MsuProfile::bandwidth_price_cap)
        .fold(f64::INFINITY, f64::min);
    let pr_min = scenario
        .bss
        .iter()
        .flat_map(|b| b.cost_render.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    let pw_min = scenario
        .bss
        .iter()
        .flat_map(|b| b.cost_bandwidth.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);

    if pr_min > pr_max {
        return Err(MarketError::InfeasibleMarket {
            resource: "rendering",
            min: pr_min,
            max: pr_max,
        });
    }
    if pw_min > pw_max {
        return Err(MarketError::InfeasibleMarket {
            resource: "bandwidth",
            min: pw_min,
            max: pw_max,
        });
    }
    Ok(PriceBounds {
        pr_min,
        pr_max,
        pw_min,
        pw_max,
    })
}

/// Lists every broken invariant. An empty list means the scenario is usable.
pub fn validate(scenario: &Scenario) -> Vec<String> {
    let mut out = Vec::new();
    let p = &scenario.params;
    let positive = [
        ("mu", p.mu),
        ("b0", p.b0),
        ("phi", p.phi),
        ("path_loss_exp", p.path_loss_exp),
        ("conv_delta", p.conv_delta),
    ];
    for (name, v) in positive {
        if !(v > 0.0 && v.is_finite()) {
            out.push(format!("params.{name} must be positive, got {v}"));
        }
    }
    for (name, v) in [("a1", p.a1), ("a2", p.a2), ("kappa", p.kappa)] {
        if !(v >= 0.0 && v.is_finite()) {
            out.push(format!("params.{name} must be non-negative, got {v}"));
        }
    }
    if !(p.a1 + p.a2 > 0.0) {
        out.push("params.a1 + params.a2 must be positive".to_string());
    }

    if scenario.msus.is_empty() {
        out.push("scenario has no MSUs".to_string());
    }
    if scenario.bss.is_empty() {
        out.push("scenario has no base stations".to_string());
    }

    for (idx, u) in scenario.msus.iter().enumerate() {
        if u.id != idx {
            out.push(format!("MSU at position {idx} has id {}", u.id));
        }
        for (name, v) in [
            ("alpha", u.alpha),
            ("beta", u.beta),
            ("budget", u.budget),
            ("tx_power", u.tx_power),
            ("channel_gain", u.channel_gain),
            ("interference", u.interference),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("MSU {}: {name} must be positive, got {v}", u.id));
            }
        }
        if !(0.0..=1.0).contains(&u.gamma) {
            out.push(format!(
                "MSU {}: gamma must lie in [0, 1], got {}",
                u.id, u.gamma
            ));
        }
    }

    let n = scenario.msus.len();
    for (idx, b) in scenario.bss.iter().enumerate() {
        if b.id != idx {
            out.push(format!("base station at position {idx} has id {}", b.id));
        }
        if !(b.cap_render >= 0.0) || !(b.cap_bandwidth >= 0.0) {
            out.push(format!(
                "base station {}: capacities must be non-negative",
                b.id
            ));
        }
        if b.cost_render.len() != n || b.cost_bandwidth.len() != n {
            out.push(format!(
                "base station {}: cost vectors must have one entry per MSU ({n})",
                b.id
            ));
        }
        if b.cost_render
            .iter()
            .chain(&b.cost_bandwidth)
            .any(|c| !(*c > 0.0 && c.is_finite()))
        {
            out.push(format!(
                "base station {}: unit costs must be positive",
                b.id
            ));
        }
    }

    if out.is_empty() {
        if let Err(e) = compute_price_bounds(scenario) {
            match e {
                MarketError::InfeasibleMarket { resource, min, max } => out.push(format!(
                    "inverted price interval for {resource}: min {min} > max {max}"
                )),
                other => out.push(other.to_string()),
            }
        }
    }
    out
}
