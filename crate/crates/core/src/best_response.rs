//! Follower side: utility, closed-form best response by KKT case
//! enumeration, the fixed-share strategy of irrational users, and a grid
//! oracle used to cross-check the closed forms.

use serde::{Deserialize, Serialize};

use crate::scenario::{MarketParams, MsuProfile, Prices};
use crate::{MarketError, Result};

/// Resource quantities bought by one user.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Demand {
    pub x_render: f64,
    pub x_bandwidth: f64,
}

impl Demand {
    pub const ZERO: Demand = Demand {
        x_render: 0.0,
        x_bandwidth: 0.0,
    };

    pub fn new(x_render: f64, x_bandwidth: f64) -> Self {
        Self {
            x_render,
            x_bandwidth,
        }
    }

    pub fn spend(&self, prices: Prices) -> f64 {
        prices.render * self.x_render + prices.bandwidth * self.x_bandwidth
    }
}

/// KKT case that produced a demand. Variants are ordered by tie-break
/// preference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaseId {
    /// Buy nothing.
    C1,
    /// Bandwidth only, budget slack.
    C2_1,
    /// Bandwidth only, whole budget.
    C2_2,
    /// Rendering only, budget slack.
    C3_1,
    /// Rendering only, whole budget.
    C3_2,
    /// Both resources, budget slack.
    C4_1,
    /// Both resources on the budget line.
    C4_2,
    /// Fixed budget split, no optimisation.
    Irrational,
}

impl CaseId {
    pub fn as_str(&self) -> &'static str {
        match self {
            CaseId::C1 => "C1",
            CaseId::C2_1 => "C2_1",
            CaseId::C2_2 => "C2_2",
            CaseId::C3_1 => "C3_1",
            CaseId::C3_2 => "C3_2",
            CaseId::C4_1 => "C4_1",
            CaseId::C4_2 => "C4_2",
            CaseId::Irrational => "irrational",
        }
    }
}

/// Lagrange multipliers of the follower problem and the largest absolute
/// violation of stationarity, complementary slackness, dual or primal
/// feasibility at the returned demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktCertificate {
    pub case_id: CaseId,
    /// Budget multiplier.
    pub lambda1: f64,
    /// Multiplier of `x_render >= 0`.
    pub lambda2: f64,
    /// Multiplier of `x_bandwidth >= 0`.
    pub lambda3: f64,
    pub max_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestResponse {
    pub demand: Demand,
    pub certificate: KktCertificate,
}

/// Follower utility: log rendering gain plus SINR-weighted bandwidth gain
/// minus payment.
pub fn msu_utility(
    profile: &MsuProfile,
    params: &MarketParams,
    prices: Prices,
    demand: Demand,
) -> f64 {
    let render_gain = profile.alpha * (params.mu * demand.x_render).ln_1p();
    let bandwidth_gain = profile.bandwidth_gain_coefficient() * demand.x_bandwidth
        / (params.noise_bandwidth() * demand.x_bandwidth + profile.interference);
    render_gain + bandwidth_gain - demand.spend(prices)
}

/// Analytic `(d2P/dxr^2, d2P/dxw^2)`; the cross terms vanish.
pub fn utility_second_derivatives(
    profile: &MsuProfile,
    params: &MarketParams,
    demand: Demand,
) -> (f64, f64) {
    let mu = params.mu;
    let k = params.noise_bandwidth();
    let e = profile.interference;
    let d2_rr = -mu * mu * profile.alpha / (1.0 + mu * demand.x_render).powi(2);
    let d2_ww =
        -2.0 * k * profile.bandwidth_gain_coefficient() * e / (k * demand.x_bandwidth + e).powi(3);
    (d2_rr, d2_ww)
}

fn marginal_render(profile: &MsuProfile, params: &MarketParams, x: f64) -> f64 {
    params.mu * profile.alpha / (1.0 + params.mu * x)
}

fn marginal_bandwidth(profile: &MsuProfile, params: &MarketParams, x: f64) -> f64 {
    let e = profile.interference;
    profile.bandwidth_gain_coefficient() * e / (params.noise_bandwidth() * x + e).powi(2)
}

/// Unconstrained rendering optimum `alpha/p_r - 1/mu`, written so that it is
/// exactly zero at `p_r = mu * alpha`.
fn unconstrained_render(profile: &MsuProfile, params: &MarketParams, pr: f64) -> f64 {
    let cap = profile.rendering_price_cap(params);
    (cap - pr) / (params.mu * pr)
}

/// Unconstrained bandwidth optimum `(sqrt(beta h p eps^2 / p_w) - eps^2) / (B0 phi)`,
/// written so that it is exactly zero at the user's bandwidth price cap.
fn unconstrained_bandwidth(profile: &MsuProfile, params: &MarketParams, pw: f64) -> f64 {
    let e = profile.interference;
    e * ((profile.bandwidth_price_cap() / pw).sqrt() - 1.0) / params.noise_bandwidth()
}

/// Bandwidth purchase on the budget line where the marginal utility per unit
/// of money is equal for both resources (positive root of the quadratic).
/// Returns `None` if the discriminant is negative.
fn budget_line_bandwidth(
    profile: &MsuProfile,
    params: &MarketParams,
    prices: Prices,
) -> Option<f64> {
    let mu = params.mu;
    let alpha = profile.alpha;
    let e = profile.interference;
    let k = params.noise_bandwidth();
    let kk = profile.bandwidth_gain_coefficient();
    let (pr, pw, budget) = (prices.render, prices.bandwidth, profile.budget);

    let a = mu * mu * e * e * kk * kk * pw * pw;
    let b = 4.0 * mu * mu * alpha * e * e * kk * k * pw * pw;
    let c = 4.0 * mu * alpha * e * kk * k * k * pr * pw;
    let d = 4.0 * mu * mu * alpha * e * kk * k * k * budget * pw;
    let disc = a + b + c + d;
    if !(disc >= 0.0) {
        return None;
    }
    let mut x =
        -e / k - e * kk / (2.0 * alpha * k * k) + disc.sqrt() / (2.0 * mu * alpha * k * k * pw);

    // Polish on  kk e (p_r + mu B - mu p_w x) = mu alpha p_w (k x + e)^2 ,
    // which is strictly decreasing in x.
    for _ in 0..3 {
        let y = k * x + e;
        let f = kk * e * (pr + mu * budget - mu * pw * x) - mu * alpha * pw * y * y;
        let df = -kk * e * mu * pw - 2.0 * mu * alpha * pw * k * y;
        let step = f / df;
        if !step.is_finite() {
            break;
        }
        x -= step;
        if step.abs() <= 1e-15 * (1.0 + x.abs()) {
            break;
        }
    }
    Some(x)
}

/// Best bandwidth purchase on the budget line by golden-section search;
/// used only when the closed form's discriminant is negative.
fn budget_line_search(profile: &MsuProfile, params: &MarketParams, prices: Prices) -> f64 {
    let on_line = |xw: f64| {
        let xr = ((profile.budget - prices.bandwidth * xw) / prices.render).max(0.0);
        msu_utility(profile, params, prices, Demand::new(xr, xw))
    };
    let (mut lo, mut hi) = (0.0, profile.budget / prices.bandwidth);
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut a = hi - INV_PHI * (hi - lo);
    let mut b = lo + INV_PHI * (hi - lo);
    let (mut fa, mut fb) = (on_line(a), on_line(b));
    while hi - lo > 1e-12 * (1.0 + hi) {
        if fa > fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - INV_PHI * (hi - lo);
            fa = on_line(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + INV_PHI * (hi - lo);
            fb = on_line(b);
        }
    }
    0.5 * (lo + hi)
}

fn candidates(
    profile: &MsuProfile,
    params: &MarketParams,
    prices: Prices,
) -> [(CaseId, Demand); 7] {
    let (pr, pw, budget) = (prices.render, prices.bandwidth, profile.budget);
    let xr_free = unconstrained_render(profile, params, pr);
    let xw_free = unconstrained_bandwidth(profile, params, pw);
    let xw_line = budget_line_bandwidth(profile, params, prices)
        .unwrap_or_else(|| budget_line_search(profile, params, prices))
        .max(0.0);
    let xr_line = (budget - pw * xw_line) / pr;
    let clamp = |d: Demand| Demand::new(d.x_render.max(0.0), d.x_bandwidth.max(0.0));
    [
        (CaseId::C1, Demand::ZERO),
        (CaseId::C2_1, clamp(Demand::new(0.0, xw_free))),
        (CaseId::C2_2, Demand::new(0.0, budget / pw)),
        (CaseId::C3_1, clamp(Demand::new(xr_free, 0.0))),
        (CaseId::C3_2, Demand::new(budget / pr, 0.0)),
        (CaseId::C4_1, clamp(Demand::new(xr_free, xw_free))),
        (CaseId::C4_2, clamp(Demand::new(xr_line, xw_line))),
    ]
}

fn within_budget(budget: f64, spend: f64) -> bool {
    spend <= budget * (1.0 + 1e-12)
}

/// Multipliers and residuals of the KKT system at `demand`.
pub fn kkt_certificate(
    profile: &MsuProfile,
    params: &MarketParams,
    prices: Prices,
    demand: Demand,
    case_id: CaseId,
) -> KktCertificate {
    let (pr, pw) = (prices.render, prices.bandwidth);
    let (xr, xw) = (demand.x_render, demand.x_bandwidth);
    let gr = marginal_render(profile, params, xr);
    let gw = marginal_bandwidth(profile, params, xw);
    let slack = profile.budget - demand.spend(prices);
    let binding = slack <= 1e-12 * (1.0 + profile.budget);

    let lambda1 = if !binding {
        0.0
    } else if xr > 0.0 {
        gr / pr - 1.0
    } else if xw > 0.0 {
        gw / pw - 1.0
    } else {
        0.0
    };
    let lambda2 = if xr > 0.0 {
        0.0
    } else {
        pr * (1.0 + lambda1) - gr
    };
    let lambda3 = if xw > 0.0 {
        0.0
    } else {
        pw * (1.0 + lambda1) - gw
    };

    let stationarity_r = (gr - pr * (1.0 + lambda1) + lambda2).abs();
    let stationarity_w = (gw - pw * (1.0 + lambda1) + lambda3).abs();
    let residual = [
        stationarity_r,
        stationarity_w,
        (lambda1 * slack).abs(),
        (lambda2 * xr).abs(),
        (lambda3 * xw).abs(),
        (-lambda1).max(0.0),
        (-lambda2).max(0.0),
        (-lambda3).max(0.0),
        (-slack).max(0.0),
        (-xr).max(0.0),
        (-xw).max(0.0),
    ]
    .into_iter()
    .fold(0.0, f64::max);

    KktCertificate {
        case_id,
        lambda1,
        lambda2,
        lambda3,
        max_residual: residual,
    }
}

fn check_prices(prices: Prices) -> Result<()> {
    if !(prices.render > 0.0 && prices.bandwidth > 0.0)
        || !prices.render.is_finite()
        || !prices.bandwidth.is_finite()
    {
        return Err(MarketError::InvalidInput(format!(
            "prices must be positive and finite, got ({}, {})",
            prices.render, prices.bandwidth
        )));
    }
    Ok(())
}

/// Utility-maximising purchase of a rational user.
///
/// Every KKT case's closed form is evaluated, negative components are
/// clamped, budget-infeasible points dropped, and the feasible point with the
/// highest utility wins (earlier cases win ties). The certificate is computed
/// from the winning point.
pub fn rational_best_response(
    profile: &MsuProfile,
    params: &MarketParams,
    prices: Prices,
) -> Result<BestResponse> {
    check_prices(prices)?;
    let mut best: Option<(CaseId, Demand, f64)> = None;
    for (case_id, demand) in candidates(profile, params, prices) {
        if !demand.x_render.is_finite()
            || !demand.x_bandwidth.is_finite()
            || !within_budget(profile.budget, demand.spend(prices))
        {
            continue;
        }
        let u = msu_utility(profile, params, prices, demand);
        if best.is_none_or(|(_, _, bu)| u > bu) {
            best = Some((case_id, demand, u));
        }
    }
    let (case_id, demand, _) = best.ok_or_else(|| {
        MarketError::InvalidInput(format!("no feasible purchase for MSU {}", profile.id))
    })?;
    Ok(BestResponse {
        demand,
        certificate: kkt_certificate(profile, params, prices, demand, case_id),
    })
}

/// Fixed-share purchase: `gamma` of the budget on rendering, the rest on bandwidth.
pub fn irrational_demand(profile: &MsuProfile, prices: Prices) -> Demand {
    Demand::new(
        profile.gamma * profile.budget / prices.render,
        (1.0 - profile.gamma) * profile.budget / prices.bandwidth,
    )
}

/// Dispatches on the user's rationality.
pub fn respond(
    profile: &MsuProfile,
    params: &MarketParams,
    prices: Prices,
) -> Result<BestResponse> {
    if profile.is_rational() {
        rational_best_response(profile, params, prices)
    } else {
        check_prices(prices)?;
        Ok(BestResponse {
            demand: irrational_demand(profile, prices),
            certificate: KktCertificate {
                case_id: CaseId::Irrational,
                lambda1: 0.0,
                lambda2: 0.0,
                lambda3: 0.0,
                max_residual: 0.0,
            },
        })
    }
}

/// Exhaustive search over the budget-feasible part of
/// `[0, B/p_r] x [0, B/p_w]` with `resolution` points per axis, followed by a
/// 10x and a 100x finer pass around the best point.
pub fn grid_oracle_best_response(
    profile: &MsuProfile,
    params: &MarketParams,
    prices: Prices,
    resolution: usize,
) -> Demand {
    let n = resolution.max(2);
    let budget = profile.budget;
    let r_max = budget / prices.render;
    let w_max = budget / prices.bandwidth;
    let hr = r_max / (n - 1) as f64;
    let hw = w_max / (n - 1) as f64;
    let utility = |d: Demand| msu_utility(profile, params, prices, d);

    let mut best = Demand::ZERO;
    let mut best_u = utility(best);
    for a in 0..n {
        let xr = hr * a as f64;
        for b in 0..n {
            let d = Demand::new(xr, hw * b as f64);
            if !within_budget(budget, d.spend(prices)) {
                break;
            }
            let u = utility(d);
            if u > best_u {
                best = d;
                best_u = u;
            }
        }
    }

    let (mut hr, mut hw) = (hr, hw);
    for _ in 0..2 {
        hr /= 10.0;
        hw /= 10.0;
        let centre = best;
        for a in -10i32..=10 {
            let xr = centre.x_render + hr * f64::from(a);
            if xr < 0.0 {
                continue;
            }
            for b in -10i32..=10 {
                let xw = centre.x_bandwidth + hw * f64::from(b);
                if xw < 0.0 {
                    continue;
                }
                let d = Demand::new(xr, xw);
                if !within_budget(budget, d.spend(prices)) {
                    continue;
                }
                let u = utility(d);
                if u > best_u {
                    best = d;
                    best_u = u;
                }
            }
        }
    }
    best
}
