use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::{
    channel_gain, compute_price_bounds, validate, BaseStation, MarketParams, MsuProfile, Prices,
    Rationality, Scenario,
};
use crate::best_response::respond;
use crate::{MarketError, Result};

const MAX_ATTEMPTS: usize = 100;

/// Closed interval `[lo, hi]`, written as a two-element array in files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval(pub f64, pub f64);

impl Interval {
    pub fn point(v: f64) -> Self {
        Interval(v, v)
    }

    pub fn lo(&self) -> f64 {
        self.0
    }

    pub fn hi(&self) -> f64 {
        self.1
    }

    fn is_valid(&self) -> bool {
        self.0.is_finite() && self.1.is_finite() && self.0 <= self.1
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.0 == self.1 {
            self.0
        } else {
            rng.random_range(self.0..=self.1)
        }
    }
}

/// Sampling ranges for [`generate_scenario`].
///
/// Distances are in metres. With the default transmit power (0.1 W) and
/// unit interference, the SINR term only supports bandwidth prices above
/// the serving cost at sub-metre range, so the default cell is small.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationRanges {
    pub params: MarketParams,
    pub alpha: Interval,
    pub beta: Interval,
    pub budget: Interval,
    /// Fraction of users that split their budget by a fixed share.
    pub irrational_fraction: f64,
    pub gamma: Interval,
    pub tx_power_w: Interval,
    pub interference_w: Interval,
    pub cost_render: Interval,
    pub cost_bandwidth: Interval,
    /// Explicit per-BS rendering capacity. When absent, capacities are sized
    /// from the mean demand over the price box (see `target_load`).
    pub cap_render: Option<Interval>,
    pub cap_bandwidth: Option<Interval>,
    /// Aggregate demand / aggregate capacity when capacities are derived.
    pub target_load: f64,
    /// Relative spread of derived per-BS capacities around their mean.
    pub capacity_spread: f64,
    pub msu_x_m: Interval,
    pub msu_y_m: Interval,
    pub bs_x_m: Interval,
    pub bs_y_m: Interval,
    /// Distances to the serving BS are floored at this value.
    pub min_distance_m: f64,
    /// Fixed range for `|g|^2`. When absent, `|g|^2` is unit-mean exponential
    /// conditioned on the user meeting `coverage_price_floor`.
    pub fading: Option<Interval>,
    /// Minimum `beta h p / eps^2` a user needs to be in coverage.
    pub coverage_price_floor: f64,
}

impl Default for GenerationRanges {
    fn default() -> Self {
        Self {
            params: MarketParams::default(),
            alpha: Interval(30.0, 35.0),
            beta: Interval(10.0, 15.0),
            budget: Interval(30.0, 100.0),
            irrational_fraction: 0.2,
            gamma: Interval(0.0, 1.0),
            tx_power_w: Interval::point(0.1),
            interference_w: Interval::point(1.0),
            cost_render: Interval(1.0, 5.0),
            cost_bandwidth: Interval(1.0, 5.0),
            cap_render: None,
            cap_bandwidth: None,
            target_load: 0.7,
            capacity_spread: 0.25,
            msu_x_m: Interval(0.0, 0.5),
            msu_y_m: Interval(0.0, 0.5),
            bs_x_m: Interval(0.0, 0.5),
            bs_y_m: Interval(0.0, 0.5),
            min_distance_m: 0.02,
            fading: None,
            coverage_price_floor: 20.0,
        }
    }
}

impl GenerationRanges {
    fn check(&self) -> Result<()> {
        let named = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("budget", self.budget),
            ("gamma", self.gamma),
            ("tx_power_w", self.tx_power_w),
            ("interference_w", self.interference_w),
            ("cost_render", self.cost_render),
            ("cost_bandwidth", self.cost_bandwidth),
            ("msu_x_m", self.msu_x_m),
            ("msu_y_m", self.msu_y_m),
            ("bs_x_m", self.bs_x_m),
            ("bs_y_m", self.bs_y_m),
        ];
        let optional = [
            ("cap_render", self.cap_render),
            ("cap_bandwidth", self.cap_bandwidth),
            ("fading", self.fading),
        ];
        for (name, iv) in named.into_iter().chain(
            optional
                .into_iter()
                .filter_map(|(n, o)| o.map(|iv| (n, iv))),
        ) {
            if !iv.is_valid() {
                return Err(MarketError::Config(format!(
                    "range {name} = [{}, {}] is not a valid interval",
                    iv.0, iv.1
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.irrational_fraction) {
            return Err(MarketError::Config(
                "irrational_fraction must lie in [0, 1]".into(),
            ));
        }
        if !(self.target_load > 0.0) || !(0.0..1.0).contains(&self.capacity_spread) {
            return Err(MarketError::Config(
                "target_load must be positive and capacity_spread in [0, 1)".into(),
            ));
        }
        if !(self.min_distance_m > 0.0) {
            return Err(MarketError::Config(
                "min_distance_m must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Draws a market instance. Deterministic for a fixed seed; the whole
/// instance is redrawn (from the same stream) while its price box is empty.
pub fn generate_scenario(
    seed: u64,
    n_msus: usize,
    n_bss: usize,
    ranges: &GenerationRanges,
) -> Result<Scenario> {
    if n_msus == 0 || n_bss == 0 {
        return Err(MarketError::InvalidInput(format!(
            "need at least one MSU and one BS, got {n_msus} and {n_bss}"
        )));
    }
    ranges.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_err = None;
    for _ in 0..MAX_ATTEMPTS {
        match draw(&mut rng, seed, n_msus, n_bss, ranges) {
            Ok(s) => return Ok(s),
            Err(e @ MarketError::InfeasibleMarket { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(MarketError::Generation(format!(
        "no feasible price box after {MAX_ATTEMPTS} draws (last: {})",
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

fn draw(
    rng: &mut ChaCha8Rng,
    seed: u64,
    n: usize,
    m: usize,
    ranges: &GenerationRanges,
) -> Result<Scenario> {
    let params = ranges.params;
    let bs_positions: Vec<[f64; 2]> = (0..m)
        .map(|_| [ranges.bs_x_m.sample(rng), ranges.bs_y_m.sample(rng)])
        .collect();

    let n_irrational = (ranges.irrational_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut irrational = vec![false; n];
    for &i in &order[..n_irrational] {
        irrational[i] = true;
    }

    let mut msus = Vec::with_capacity(n);
    for (id, &is_irrational) in irrational.iter().enumerate() {
        let alpha = ranges.alpha.sample(rng);
        let beta = ranges.beta.sample(rng);
        let budget = ranges.budget.sample(rng);
        let tx_power = ranges.tx_power_w.sample(rng);
        let interference = ranges.interference_w.sample(rng);
        let position = [ranges.msu_x_m.sample(rng), ranges.msu_y_m.sample(rng)];
        let d = bs_positions
            .iter()
            .map(|&b| distance(position, b))
            .fold(f64::INFINITY, f64::min)
            .max(ranges.min_distance_m);
        let fading = match ranges.fading {
            Some(iv) => iv.sample(rng),
            None => {
                // Exp(1) conditioned on >= t is t + Exp(1).
                let unit_gain = channel_gain(d, 1.0, params.path_loss_exp)?;
                let threshold =
                    ranges.coverage_price_floor * interference / (beta * tx_power * unit_gain);
                let e: f64 = rng.sample(Exp1);
                threshold.max(0.0) + e
            }
        };
        let gamma = if is_irrational {
            ranges.gamma.sample(rng)
        } else {
            0.0
        };
        msus.push(MsuProfile {
            id,
            alpha,
            beta,
            budget,
            tx_power,
            channel_gain: channel_gain(d, fading, params.path_loss_exp)?,
            interference,
            rationality: if is_irrational {
                Rationality::Irrational
            } else {
                Rationality::Rational
            },
            gamma,
            position,
        });
    }

    let mut bss: Vec<BaseStation> = bs_positions
        .into_iter()
        .enumerate()
        .map(|(id, position)| BaseStation {
            id,
            position,
            cap_render: 0.0,
            cap_bandwidth: 0.0,
            cost_render: Vec::with_capacity(n),
            cost_bandwidth: Vec::with_capacity(n),
        })
        .collect();
    for b in &mut bss {
        for _ in 0..n {
            b.cost_render.push(ranges.cost_render.sample(rng));
            b.cost_bandwidth.push(ranges.cost_bandwidth.sample(rng));
        }
    }

    let mut scenario = Scenario {
        params,
        msus,
        bss,
        seed,
    };
    let bounds = compute_price_bounds(&scenario)?;

    let (mean_r, mean_w) = if ranges.cap_render.is_none() || ranges.cap_bandwidth.is_none() {
        // Mean demand over the price box, midpoint rule on a 5x5 grid.
        const CELLS: usize = 5;
        let mut total_r = 0.0;
        let mut total_w = 0.0;
        for a in 0..CELLS {
            for b in 0..CELLS {
                let t = |k: usize| (k as f64 + 0.5) / CELLS as f64;
                let prices = Prices::new(
                    bounds.pr_min + t(a) * (bounds.pr_max - bounds.pr_min),
                    bounds.pw_min + t(b) * (bounds.pw_max - bounds.pw_min),
                );
                for u in &scenario.msus {
                    let d = respond(u, &params, prices)?.demand;
                    total_r += d.x_render;
                    total_w += d.x_bandwidth;
                }
            }
        }
        let cells = (CELLS * CELLS) as f64;
        let (total_r, total_w) = (total_r / cells, total_w / cells);
        let per_bs = |total: f64| total / (ranges.target_load * m as f64);
        (per_bs(total_r), per_bs(total_w))
    } else {
        (0.0, 0.0)
    };
    let spread = Interval(1.0 - ranges.capacity_spread, 1.0 + ranges.capacity_spread);
    for b in &mut scenario.bss {
        b.cap_render = match ranges.cap_render {
            Some(iv) => iv.sample(rng),
            None => mean_r * spread.sample(rng),
        };
        b.cap_bandwidth = match ranges.cap_bandwidth {
            Some(iv) => iv.sample(rng),
            None => mean_w * spread.sample(rng),
        };
    }

    let violations = validate(&scenario);
    if !violations.is_empty() {
        return Err(MarketError::Generation(violations.join("; ")));
    }
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::compute_price_bounds;

    #[test]
    fn same_seed_same_scenario() {
        let r = GenerationRanges::default();
        let a = generate_scenario(7, 30, 4, &r).unwrap();
        let b = generate_scenario(7, 30, 4, &r).unwrap();
        assert_eq!(a, b);
        let c = generate_scenario(8, 30, 4, &r).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn default_split_is_eighty_twenty() {
        let s = generate_scenario(1, 100, 4, &GenerationRanges::default()).unwrap();
        let irrational = s.msus.iter().filter(|u| !u.is_rational()).count();
        assert_eq!(irrational, 20);
        assert_eq!(s.msus.len() - irrational, 80);
    }

    #[test]
    fn degenerate_ranges_give_the_specified_instance() {
        let ranges = GenerationRanges {
            alpha: Interval::point(30.0),
            beta: Interval::point(12.0),
            budget: Interval::point(50.0),
            irrational_fraction: 0.0,
            gamma: Interval::point(0.0),
            cost_render: Interval::point(2.0),
            cost_bandwidth: Interval::point(3.0),
            cap_render: Some(Interval::point(40.0)),
            cap_bandwidth: Some(Interval::point(60.0)),
            msu_x_m: Interval::point(0.1),
            msu_y_m: Interval::point(0.0),
            bs_x_m: Interval::point(0.0),
            bs_y_m: Interval::point(0.0),
            fading: Some(Interval::point(1.0)),
            ..GenerationRanges::default()
        };
        let s = generate_scenario(3, 1, 1, &ranges).unwrap();
        let u = &s.msus[0];
        assert_eq!(u.alpha, 30.0);
        assert_eq!(u.beta, 12.0);
        assert_eq!(u.budget, 50.0);
        assert_eq!(u.position, [0.1, 0.0]);
        assert!((u.channel_gain - 100.0).abs() < 1e-9);
        let b = &s.bss[0];
        assert_eq!((b.cap_render, b.cap_bandwidth), (40.0, 60.0));
        assert_eq!((b.cost_render[0], b.cost_bandwidth[0]), (2.0, 3.0));
        // any seed yields the same instance apart from the recorded seed
        let mut other = generate_scenario(99, 1, 1, &ranges).unwrap();
        other.seed = 3;
        assert_eq!(s, other);
    }

    #[test]
    fn infeasible_ranges_report_generation_error() {
        let ranges = GenerationRanges {
            cost_render: Interval(100.0, 200.0),
            ..GenerationRanges::default()
        };
        let err = generate_scenario(1, 5, 2, &ranges).unwrap_err();
        assert!(matches!(err, MarketError::Generation(_)), "{err}");
    }

    #[test]
    fn generated_bounds_are_feasible_and_below_caps() {
        let r = GenerationRanges::default();
        for seed in 0..20 {
            let s = generate_scenario(seed, 40, 4, &r).unwrap();
            let b = compute_price_bounds(&s).unwrap();
            assert!(b.pr_min <= b.pr_max && b.pw_min <= b.pw_max);
            for u in &s.msus {
                assert!(b.pr_max <= u.rendering_price_cap(&s.params));
                assert!(b.pw_max <= u.bandwidth_price_cap());
                assert!(u.bandwidth_price_cap() >= r.coverage_price_floor * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn rejects_bad_counts() {
        let r = GenerationRanges::default();
        assert!(generate_scenario(0, 0, 1, &r).is_err());
        assert!(generate_scenario(0, 1, 0, &r).is_err());
    }
}
