//! Leader side at fixed prices: assign users to base stations.
//!
//! Users are placed greedily by the priority margin
//! `v_ij = a1 (p_r - xi_r) + a2 (p_w - xi_w)`, then the assignment is
//! improved by pairwise swaps and single-user relocations until neither
//! raises the provider's profit.

use serde::{Deserialize, Serialize};

use crate::best_response::Demand;
use crate::scenario::{Prices, Scenario};
use crate::{MarketError, Result};

/// Smallest gain that counts as an improvement.
pub const IMPROVEMENT_EPS: f64 = 1e-9;
/// Cap on exchange rounds in [`allocate`].
pub const MAX_PASSES: usize = 100;

/// Profit `u_ij` of serving user `i` from base station `j`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityMatrix {
    n: usize,
    m: usize,
    entries: Vec<f64>,
}

impl UtilityMatrix {
    pub fn build(scenario: &Scenario, prices: Prices, demands: &[Demand]) -> Self {
        let n = scenario.msus.len();
        let m = scenario.bss.len();
        let mut entries = Vec::with_capacity(n * m);
        for (i, d) in demands.iter().enumerate().take(n) {
            for b in &scenario.bss {
                let revenue = prices.render * d.x_render + prices.bandwidth * d.x_bandwidth;
                let cost = b.cost_render[i] * d.x_render + b.cost_bandwidth[i] * d.x_bandwidth;
                entries.push(revenue - cost);
            }
        }
        Self { n, m, entries }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n, self.m)
    }
}

/// Greedy priority `v_ij` with a per-entry exhausted flag.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxMatrix {
    m: usize,
    entries: Vec<f64>,
    exhausted: Vec<bool>,
}

impl AuxMatrix {
    pub fn build(scenario: &Scenario, prices: Prices) -> Self {
        let p = &scenario.params;
        let n = scenario.msus.len();
        let m = scenario.bss.len();
        let mut entries = Vec::with_capacity(n * m);
        for i in 0..n {
            for b in &scenario.bss {
                entries.push(
                    p.a1 * (prices.render - b.cost_render[i])
                        + p.a2 * (prices.bandwidth - b.cost_bandwidth[i]),
                );
            }
        }
        Self {
            m,
            exhausted: vec![false; entries.len()],
            entries,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn is_exhausted(&self, i: usize, j: usize) -> bool {
        self.exhausted[i * self.m + j]
    }

    fn exhaust(&mut self, i: usize, j: usize) {
        self.exhausted[i * self.m + j] = true;
    }

    /// Entries in decreasing priority; ties go to the smallest `(i, j)`.
    fn order(&self) -> Vec<(usize, usize)> {
        let mut idx: Vec<usize> = (0..self.entries.len()).collect();
        idx.sort_by(|&a, &b| self.entries[b].total_cmp(&self.entries[a]).then(a.cmp(&b)));
        idx.into_iter().map(|k| (k / self.m, k % self.m)).collect()
    }
}

/// User-to-BS mapping with remaining capacities.
///
/// Residuals are always `capacity - sum of served demands`, summed in user
/// order, so they never drift from the assignment they describe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub serving_bs: Vec<Option<usize>>,
    pub residual_render: Vec<f64>,
    pub residual_bandwidth: Vec<f64>,
}

impl Assignment {
    pub fn empty(scenario: &Scenario) -> Self {
        Self {
            serving_bs: vec![None; scenario.msus.len()],
            residual_render: scenario.bss.iter().map(|b| b.cap_render).collect(),
            residual_bandwidth: scenario.bss.iter().map(|b| b.cap_bandwidth).collect(),
        }
    }

    /// Builds an assignment from a serving map, computing residuals.
    pub fn from_serving(
        scenario: &Scenario,
        demands: &[Demand],
        serving_bs: Vec<Option<usize>>,
    ) -> Self {
        let mut a = Self {
            serving_bs,
            ..Self::empty(scenario)
        };
        for j in 0..scenario.bss.len() {
            a.refresh(scenario, demands, j);
        }
        a
    }

    fn refresh(&mut self, scenario: &Scenario, demands: &[Demand], j: usize) {
        let (mut r, mut w) = (0.0, 0.0);
        for (i, s) in self.serving_bs.iter().enumerate() {
            if *s == Some(j) {
                r += demands[i].x_render;
                w += demands[i].x_bandwidth;
            }
        }
        self.residual_render[j] = scenario.bss[j].cap_render - r;
        self.residual_bandwidth[j] = scenario.bss[j].cap_bandwidth - w;
    }

    fn fits(&self, j: usize) -> bool {
        self.residual_render[j] >= 0.0 && self.residual_bandwidth[j] >= 0.0
    }

    pub fn served_count(&self) -> usize {
        self.serving_bs.iter().filter(|s| s.is_some()).count()
    }

    /// Checks shape and that every BS's load stays within its capacity.
    pub fn check(&self, scenario: &Scenario, demands: &[Demand]) -> Result<()> {
        let n = scenario.msus.len();
        let m = scenario.bss.len();
        if self.serving_bs.len() != n || demands.len() != n {
            return Err(MarketError::InconsistentAssignment(format!(
                "expected {n} users, assignment has {} and demands {}",
                self.serving_bs.len(),
                demands.len()
            )));
        }
        if let Some(j) = self.serving_bs.iter().flatten().find(|&&j| j >= m) {
            return Err(MarketError::InconsistentAssignment(format!(
                "base station {j} does not exist"
            )));
        }
        let fresh = Self::from_serving(scenario, demands, self.serving_bs.clone());
        for j in 0..m {
            if !fresh.fits(j) {
                return Err(MarketError::InconsistentAssignment(format!(
                    "base station {j} over capacity (residuals {}, {})",
                    fresh.residual_render[j], fresh.residual_bandwidth[j]
                )));
            }
        }
        Ok(())
    }
}

/// Provider profit of an assignment; unserved users contribute nothing.
pub fn msp_profit(
    scenario: &Scenario,
    prices: Prices,
    demands: &[Demand],
    assignment: &Assignment,
) -> Result<f64> {
    assignment.check(scenario, demands)?;
    let g = UtilityMatrix::build(scenario, prices, demands);
    Ok(profit_of(&g, &assignment.serving_bs))
}

fn profit_of(g: &UtilityMatrix, serving: &[Option<usize>]) -> f64 {
    serving
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|j| g.get(i, j)))
        .sum()
}

/// Holds the per-price data shared by the allocation phases.
struct Allocator<'a> {
    scenario: &'a Scenario,
    demands: &'a [Demand],
    utility: UtilityMatrix,
}

impl<'a> Allocator<'a> {
    fn new(scenario: &'a Scenario, prices: Prices, demands: &'a [Demand]) -> Self {
        Self {
            scenario,
            demands,
            utility: UtilityMatrix::build(scenario, prices, demands),
        }
    }

    fn profit(&self, a: &Assignment) -> f64 {
        profit_of(&self.utility, &a.serving_bs)
    }

    fn greedy(&self, prices: Prices) -> Assignment {
        let mut aux = AuxMatrix::build(self.scenario, prices);
        let mut a = Assignment::empty(self.scenario);
        for (i, j) in aux.order() {
            if a.serving_bs[i].is_some() {
                continue;
            }
            let d = self.demands[i];
            if a.residual_render[j] >= d.x_render && a.residual_bandwidth[j] >= d.x_bandwidth {
                a.serving_bs[i] = Some(j);
                a.refresh(self.scenario, self.demands, j);
            } else {
                aux.exhaust(i, j);
            }
        }
        a
    }

    /// Applies a set of serving changes if every touched BS stays within
    /// capacity; otherwise leaves `a` unchanged.
    fn try_apply(&self, a: &mut Assignment, moves: &[(usize, Option<usize>)]) -> bool {
        let previous: Vec<Option<usize>> = moves.iter().map(|&(i, _)| a.serving_bs[i]).collect();
        let mut touched: Vec<usize> = moves
            .iter()
            .flat_map(|&(i, to)| [a.serving_bs[i], to])
            .flatten()
            .collect();
        touched.sort_unstable();
        touched.dedup();

        for &(i, to) in moves {
            a.serving_bs[i] = to;
        }
        for &j in &touched {
            a.refresh(self.scenario, self.demands, j);
        }
        if touched.iter().all(|&j| a.fits(j)) {
            return true;
        }
        for (&(i, _), prev) in moves.iter().zip(previous) {
            a.serving_bs[i] = prev;
        }
        for &j in &touched {
            a.refresh(self.scenario, self.demands, j);
        }
        false
    }

    /// Swaps the stations of two served users.
    fn pairwise(&self, a: &mut Assignment) -> bool {
        let n = a.serving_bs.len();
        let g = &self.utility;
        let mut improved = false;
        for i in 0..n {
            for i2 in 0..n {
                let (Some(j), Some(j2)) = (a.serving_bs[i], a.serving_bs[i2]) else {
                    continue;
                };
                if i2 == i || j == j2 {
                    continue;
                }
                let gain = (g.get(i, j2) + g.get(i2, j)) - (g.get(i, j) + g.get(i2, j2));
                if gain <= IMPROVEMENT_EPS {
                    continue;
                }
                // Cheap pre-screen on the swap's capacity guards.
                let (di, di2) = (self.demands[i], self.demands[i2]);
                let slack = |r: f64| r + 1e-9 * (1.0 + r.abs());
                if slack(a.residual_render[j2] + di2.x_render) < di.x_render
                    || slack(a.residual_bandwidth[j2] + di2.x_bandwidth) < di.x_bandwidth
                    || slack(a.residual_render[j] + di.x_render) < di2.x_render
                    || slack(a.residual_bandwidth[j] + di.x_bandwidth) < di2.x_bandwidth
                {
                    continue;
                }
                if self.try_apply(a, &[(i, Some(j2)), (i2, Some(j))]) {
                    improved = true;
                }
            }
        }
        improved
    }

    fn relocation(&self, a: &mut Assignment) -> bool {
        let n = a.serving_bs.len();
        let m = self.scenario.bss.len();
        let g = &self.utility;
        let mut improved = false;
        for i in 0..n {
            match a.serving_bs[i] {
                Some(_) => {
                    for k in 0..m {
                        let j = a.serving_bs[i].expect("served user stays served");
                        if k == j || g.get(i, k) - g.get(i, j) <= IMPROVEMENT_EPS {
                            continue;
                        }
                        if self.try_apply(a, &[(i, Some(k))]) {
                            improved = true;
                        }
                    }
                }
                None => {
                    let mut targets: Vec<usize> =
                        (0..m).filter(|&k| g.get(i, k) > IMPROVEMENT_EPS).collect();
                    targets.sort_by(|&x, &y| g.get(i, y).total_cmp(&g.get(i, x)).then(x.cmp(&y)));
                    for k in targets {
                        if self.try_apply(a, &[(i, Some(k))]) {
                            improved = true;
                            break;
                        }
                    }
                }
            }
        }
        improved
    }
}

/// Greedy placement by decreasing priority margin. An entry whose BS lacks
/// room is exhausted; a user with every entry exhausted stays unserved.
pub fn greedy_assign(scenario: &Scenario, prices: Prices, demands: &[Demand]) -> Assignment {
    Allocator::new(scenario, prices, demands).greedy(prices)
}

/// One pass of pairwise swaps with positive gain whose capacity guards hold.
pub fn pairwise_exchange(
    scenario: &Scenario,
    prices: Prices,
    demands: &[Demand],
    assignment: &Assignment,
) -> (Assignment, bool) {
    let alloc = Allocator::new(scenario, prices, demands);
    let mut a = Assignment::from_serving(scenario, demands, assignment.serving_bs.clone());
    let improved = alloc.pairwise(&mut a);
    (a, improved)
}

/// One pass of single-user moves to a more profitable BS with room; also
/// tries to place unserved users.
pub fn relocation_exchange(
    scenario: &Scenario,
    prices: Prices,
    demands: &[Demand],
    assignment: &Assignment,
) -> (Assignment, bool) {
    let alloc = Allocator::new(scenario, prices, demands);
    let mut a = Assignment::from_serving(scenario, demands, assignment.serving_bs.clone());
    let improved = alloc.relocation(&mut a);
    (a, improved)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AllocationMode {
    /// Greedy placement followed by exchange passes.
    Full,
    /// Greedy placement only.
    GreedyOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub assignment: Assignment,
    pub profit: f64,
    /// Profit after the greedy phase and after every exchange pass.
    pub pass_profits: Vec<f64>,
}

/// Greedy placement, then alternating pairwise and relocation passes until
/// neither improves or [`MAX_PASSES`] rounds have run.
pub fn allocate(scenario: &Scenario, prices: Prices, demands: &[Demand]) -> Allocation {
    allocate_with(scenario, prices, demands, AllocationMode::Full)
}

pub fn allocate_with(
    scenario: &Scenario,
    prices: Prices,
    demands: &[Demand],
    mode: AllocationMode,
) -> Allocation {
    let alloc = Allocator::new(scenario, prices, demands);
    let mut a = alloc.greedy(prices);
    let mut pass_profits = vec![alloc.profit(&a)];
    if mode == AllocationMode::Full {
        for _ in 0..MAX_PASSES {
            let swapped = alloc.pairwise(&mut a);
            pass_profits.push(alloc.profit(&a));
            let moved = alloc.relocation(&mut a);
            pass_profits.push(alloc.profit(&a));
            if !swapped && !moved {
                break;
            }
        }
    }
    Allocation {
        profit: alloc.profit(&a),
        assignment: a,
        pass_profits,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::fixtures::{bs, msu, scenario};

    fn two_by_two() -> (Scenario, Vec<Demand>, Prices) {
        let mut s = scenario(
            vec![msu(0, 30.0, 10.0, 500.0), msu(1, 30.0, 10.0, 500.0)],
            vec![bs(0, 2, 1.0, 9.0, 100.0), bs(1, 2, 9.0, 0.9, 100.0)],
        );
        // User 1 buys no rendering, so its rendering cost at b2 only lowers
        // its greedy priority there (v = 4.6 < 5).
        s.bss[1].cost_render[1] = 9.9;
        let demands = vec![Demand::new(10.0, 0.0), Demand::new(0.0, 10.0)];
        (s, demands, Prices::new(10.0, 10.0))
    }

    #[test]
    fn profit_of_empty_assignment_is_zero() {
        let (s, d, p) = two_by_two();
        assert_eq!(msp_profit(&s, p, &d, &Assignment::empty(&s)).unwrap(), 0.0);
    }

    #[test]
    fn profit_single_user() {
        let s = scenario(
            vec![msu(0, 30.0, 10.0, 50.0)],
            vec![bs(0, 1, 2.0, 2.0, 10.0)],
        );
        let d = vec![Demand::new(1.0, 1.0)];
        let a = Assignment::from_serving(&s, &d, vec![Some(0)]);
        assert_eq!(
            msp_profit(&s, Prices::new(10.0, 10.0), &d, &a).unwrap(),
            16.0
        );
    }

    #[test]
    fn profit_is_additive() {
        let s = scenario(
            vec![msu(0, 30.0, 10.0, 50.0), msu(1, 30.0, 10.0, 50.0)],
            vec![bs(0, 2, 2.0, 2.0, 10.0), bs(1, 2, 2.0, 2.0, 10.0)],
        );
        let d = vec![Demand::new(1.0, 1.0); 2];
        let a = Assignment::from_serving(&s, &d, vec![Some(0), Some(1)]);
        assert_eq!(
            msp_profit(&s, Prices::new(10.0, 10.0), &d, &a).unwrap(),
            32.0
        );
    }

    #[test]
    fn profit_rejects_over_capacity() {
        let s = scenario(
            vec![msu(0, 30.0, 10.0, 50.0)],
            vec![bs(0, 1, 2.0, 2.0, 1.0)],
        );
        let d = vec![Demand::new(2.0, 0.5)];
        let a = Assignment::from_serving(&s, &d, vec![Some(0)]);
        let err = msp_profit(&s, Prices::new(10.0, 10.0), &d, &a).unwrap_err();
        assert!(matches!(err, MarketError::InconsistentAssignment(_)));
    }

    #[test]
    fn greedy_single_user_ample_capacity() {
        let s = scenario(
            vec![msu(0, 30.0, 10.0, 50.0)],
            vec![bs(0, 1, 2.0, 2.0, 100.0)],
        );
        let d = vec![Demand::new(1.0, 1.0)];
        let a = greedy_assign(&s, Prices::new(10.0, 10.0), &d);
        assert_eq!(a.serving_bs, vec![Some(0)]);
    }

    #[test]
    fn greedy_picks_dominant_margins() {
        let mut s = scenario(
            vec![msu(0, 30.0, 10.0, 50.0), msu(1, 30.0, 10.0, 50.0)],
            vec![bs(0, 2, 2.0, 2.0, 1.5), bs(1, 2, 2.0, 2.0, 1.5)],
        );
        // v_11 = v_22 = 8 dominate v_12 = v_21 = 6 at prices (10, 10)
        s.bss[1].cost_render[0] = 6.0;
        s.bss[1].cost_bandwidth[0] = 6.0;
        s.bss[0].cost_render[1] = 6.0;
        s.bss[0].cost_bandwidth[1] = 6.0;
        let d = vec![Demand::new(1.0, 1.0); 2];
        let a = greedy_assign(&s, Prices::new(10.0, 10.0), &d);
        assert_eq!(a.serving_bs, vec![Some(0), Some(1)]);
        let aux = AuxMatrix::build(&s, Prices::new(10.0, 10.0));
        assert_eq!(
            (aux.get(0, 0), aux.get(1, 1), aux.get(0, 1)),
            (8.0, 8.0, 4.0)
        );
    }

    #[test]
    fn greedy_leaves_oversized_user_unserved() {
        let s = scenario(
            vec![msu(0, 30.0, 10.0, 50.0)],
            vec![bs(0, 1, 2.0, 2.0, 1.0), bs(1, 1, 2.0, 2.0, 1.0)],
        );
        let d = vec![Demand::new(5.0, 5.0)];
        let p = Prices::new(10.0, 10.0);
        let a = greedy_assign(&s, p, &d);
        assert_eq!(a.serving_bs, vec![None]);
        assert_eq!(msp_profit(&s, p, &d, &a).unwrap(), 0.0);
    }

    #[test]
    fn adversarial_swap_fixture() {
        let (s, d, p) = two_by_two();
        let aux = AuxMatrix::build(&s, p);
        assert!((aux.get(0, 1) - 5.05).abs() < 1e-12 && aux.get(0, 0) == 5.0);
        let greedy = greedy_assign(&s, p, &d);
        assert_eq!(greedy.serving_bs, vec![Some(1), Some(0)]);
        assert!((msp_profit(&s, p, &d, &greedy).unwrap() - 20.0).abs() < 1e-9);
        let (swapped, improved) = pairwise_exchange(&s, p, &d, &greedy);
        assert!(improved);
        assert_eq!(swapped.serving_bs, vec![Some(0), Some(1)]);
        assert!((msp_profit(&s, p, &d, &swapped).unwrap() - 181.0).abs() < 1e-9);
        let (again, improved) = pairwise_exchange(&s, p, &d, &swapped);
        assert!(!improved);
        assert_eq!(again.serving_bs, swapped.serving_bs);
        assert!((allocate(&s, p, &d).profit - 181.0).abs() < 1e-9);
    }

    #[test]
    fn swap_blocked_by_capacity() {
        let (mut s, d, p) = two_by_two();
        // b1 cannot host the rendering-heavy user
        s.bss[0].cap_render = 5.0;
        let start = Assignment::from_serving(&s, &d, vec![Some(1), Some(0)]);
        let (after, improved) = pairwise_exchange(&s, p, &d, &start);
        assert!(!improved);
        assert_eq!(after.serving_bs, start.serving_bs);
    }

    fn relocation_fixture(cap_bandwidth_cheap: f64) -> (Scenario, Vec<Demand>, Prices) {
        let mut s = scenario(
            vec![msu(0, 30.0, 10.0, 50.0)],
            vec![bs(0, 1, 8.0, 8.0, 10.0), bs(1, 1, 2.0, 2.0, 10.0)],
        );
        s.bss[1].cap_bandwidth = cap_bandwidth_cheap;
        (s, vec![Demand::new(1.0, 1.0)], Prices::new(10.0, 10.0))
    }

    #[test]
    fn relocation_moves_to_cheaper_bs() {
        let (s, d, p) = relocation_fixture(10.0);
        let start = Assignment::from_serving(&s, &d, vec![Some(0)]);
        let before = msp_profit(&s, p, &d, &start).unwrap();
        let (after, improved) = relocation_exchange(&s, p, &d, &start);
        assert!(improved);
        assert_eq!(after.serving_bs, vec![Some(1)]);
        assert!((msp_profit(&s, p, &d, &after).unwrap() - before - 12.0).abs() < 1e-12);
    }

    #[test]
    fn relocation_respects_bandwidth_room() {
        let (s, d, p) = relocation_fixture(0.5);
        let start = Assignment::from_serving(&s, &d, vec![Some(0)]);
        let (after, improved) = relocation_exchange(&s, p, &d, &start);
        assert!(!improved);
        assert_eq!(after.serving_bs, vec![Some(0)]);
    }

    #[test]
    fn relocation_noop_when_already_cheapest() {
        let (s, d, p) = relocation_fixture(10.0);
        let start = Assignment::from_serving(&s, &d, vec![Some(1)]);
        assert!(!relocation_exchange(&s, p, &d, &start).1);
    }

    #[test]
    fn relocation_places_unserved_user() {
        let (s, d, p) = relocation_fixture(10.0);
        let start = Assignment::empty(&s);
        let (after, improved) = relocation_exchange(&s, p, &d, &start);
        assert!(improved);
        assert_eq!(after.serving_bs, vec![Some(1)]);
    }

    #[test]
    fn zero_demands_give_zero_profit() {
        let (s, _, p) = two_by_two();
        let d = vec![Demand::ZERO; 2];
        let out = allocate(&s, p, &d);
        assert_eq!(out.profit, 0.0);
    }

    #[test]
    fn greedy_only_skips_exchanges() {
        let (s, d, p) = two_by_two();
        let out = allocate_with(&s, p, &d, AllocationMode::GreedyOnly);
        assert!((out.profit - 20.0).abs() < 1e-9);
        assert_eq!(out.pass_profits.len(), 1);
    }
}
