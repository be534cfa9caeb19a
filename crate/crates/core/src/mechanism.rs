//! Ex-post utilities of the supported auctions and contests.
//!
//! Every mechanism is quasi-linear before the risk transform: agent `i`
//! receives `slope_i * v_i + intercept_i`, where the slope is the (possibly
//! fractional or negative) allocation weight and the intercept collects the
//! transfers. The CRRA transform `sign(u)|u|^rho` is applied on top.
//!
//! Winner-determined formats withhold the prize when the winning bid (or
//! winning allocation price) is not unique.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlgRule {
    NearestZero,
    NearestVcg,
    NearestBid,
    FirstPrice,
}

/// Cost of supplying a 50% share in the split-award auction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitCost {
    /// `C * o_i`
    #[default]
    Proportional,
    /// `C`, independent of the type
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MechanismKind {
    Fpsb,
    Spsb,
    AllPay,
    Tullock { r: f64 },
    Llg { rule: LlgRule },
    SplitAward {
        cost: f64,
        #[serde(default)]
        cost_model: SplitCost,
        /// Bid bounds on the 100% share.
        sole_bounds: (f64, f64),
        /// Bid bounds on the 50% share.
        split_bounds: (f64, f64),
    },
}

impl MechanismKind {
    pub fn id(&self) -> String {
        match self {
            MechanismKind::Fpsb => "fpsb".into(),
            MechanismKind::Spsb => "spsb".into(),
            MechanismKind::AllPay => "all_pay".into(),
            MechanismKind::Tullock { r } => format!("tullock_r{r}"),
            MechanismKind::Llg { rule } => format!("llg_{rule:?}").to_lowercase(),
            MechanismKind::SplitAward { .. } => "split_award".into(),
        }
    }

    /// Split award with the default rectangle `[1.0, 2.5] x [0.3, 1.2]`.
    pub fn split_award(cost: f64, cost_model: SplitCost) -> Self {
        MechanismKind::SplitAward {
            cost,
            cost_model,
            sole_bounds: (1.0, 2.5),
            split_bounds: (0.3, 1.2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub kind: MechanismKind,
    pub agents: usize,
    /// CRRA exponent in (0, 1]; 1 is risk neutral.
    pub risk: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlgWinner {
    Locals,
    Global,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlgOutcome {
    pub winner: LlgWinner,
    pub payments: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitAllocation {
    Sole(usize),
    Split,
    None,
}

/// `sign(u) |u|^rho`, exactly the identity for `rho == 1`.
#[inline]
pub fn crra(u: f64, rho: f64) -> f64 {
    if rho == 1.0 {
        u
    } else if u >= 0.0 {
        u.powf(rho)
    } else {
        -(-u).powf(rho)
    }
}

impl Mechanism {
    pub fn new(kind: MechanismKind, agents: usize, risk: f64) -> Result<Self> {
        let param = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(risk > 0.0 && risk <= 1.0) {
            return param("risk", format!("CRRA exponent must lie in (0, 1], got {risk}"));
        }
        if agents < 1 {
            return param("agents", "need at least one agent".into());
        }
        match &kind {
            MechanismKind::Tullock { r } if !(*r > 0.0) => {
                return param("r", format!("must be positive, got {r}"));
            }
            MechanismKind::Llg { .. } if agents != 3 => {
                return param("agents", format!("LLG has exactly 3 agents, got {agents}"));
            }
            MechanismKind::SplitAward { cost, sole_bounds, split_bounds, .. } => {
                if agents != 2 {
                    return param("agents", format!("split award has exactly 2 agents, got {agents}"));
                }
                if !(*cost > 0.0 && *cost < 0.5) {
                    return param("cost", format!("must lie in (0, 0.5), got {cost}"));
                }
                if !(sole_bounds.0 < sole_bounds.1 && split_bounds.0 < split_bounds.1) {
                    return param("bounds", "action rectangle is empty".into());
                }
            }
            _ => {}
        }
        Ok(Self { kind, agents, risk })
    }

    /// Number of action coordinates per agent.
    pub fn action_dims(&self) -> usize {
        match self.kind {
            MechanismKind::SplitAward { .. } => 2,
            _ => 1,
        }
    }

    /// Procurement formats where lower bids win.
    pub fn reverse(&self) -> bool {
        matches!(self.kind, MechanismKind::SplitAward { .. })
    }

    /// Single-object standard auctions eligible for the order-statistic gradient.
    pub fn is_single_object(&self) -> bool {
        matches!(self.kind, MechanismKind::Fpsb | MechanismKind::Spsb | MechanismKind::AllPay)
    }

    fn check_bids(&self, bids: &[f64]) -> Result<()> {
        let expected = self.agents * self.action_dims();
        if bids.len() != expected {
            return Err(Error::DimensionMismatch { expected, actual: bids.len() });
        }
        if bids.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter { name: "bids", reason: "bids must be finite".into() });
        }
        match &self.kind {
            MechanismKind::Llg { .. } | MechanismKind::Tullock { .. } if bids.iter().any(|&b| b < 0.0) => {
                Err(Error::InvalidParameter { name: "bids", reason: "bids must be nonnegative".into() })
            }
            MechanismKind::SplitAward { sole_bounds, split_bounds, .. } => {
                let tol = 1e-12;
                for pair in bids.chunks(2) {
                    if pair[0] < sole_bounds.0 - tol
                        || pair[0] > sole_bounds.1 + tol
                        || pair[1] < split_bounds.0 - tol
                        || pair[1] > split_bounds.1 + tol
                    {
                        return Err(Error::InvalidParameter {
                            name: "bids",
                            reason: format!("split-award bid {pair:?} outside the action rectangle"),
                        });
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Ex-post utility of `agent` for the flattened action profile `bids`.
    pub fn expost_utility(&self, agent: usize, bids: &[f64], value: f64) -> Result<f64> {
        if agent >= self.agents {
            return Err(Error::DimensionMismatch { expected: self.agents, actual: agent + 1 });
        }
        self.check_bids(bids)?;
        Ok(self.utility(agent, bids, value))
    }

    /// Unchecked variant of [`Mechanism::expost_utility`].
    #[inline]
    pub fn utility(&self, agent: usize, bids: &[f64], value: f64) -> f64 {
        let (slope, intercept) = self.affine_terms(agent, bids);
        crra(slope * value + intercept, self.risk)
    }

    /// Quasi-linear decomposition `u = slope * v + intercept` before the
    /// risk transform.
    pub fn affine_terms(&self, agent: usize, bids: &[f64]) -> (f64, f64) {
        let own = bids[agent * self.action_dims()];
        match &self.kind {
            MechanismKind::Fpsb | MechanismKind::Spsb | MechanismKind::AllPay => {
                let mut max_other = f64::NEG_INFINITY;
                for (j, &b) in bids.iter().enumerate() {
                    if j != agent && b > max_other {
                        max_other = b;
                    }
                }
                let win = own > max_other;
                match (&self.kind, win) {
                    (MechanismKind::AllPay, true) => (1.0, -own),
                    (MechanismKind::AllPay, false) => (0.0, -own),
                    (MechanismKind::Fpsb, true) => (1.0, -own),
                    (MechanismKind::Spsb, true) => {
                        (1.0, if max_other.is_finite() { -max_other } else { 0.0 })
                    }
                    _ => (0.0, 0.0),
                }
            }
            MechanismKind::Tullock { r } => {
                let total: f64 = bids.iter().sum();
                if total > 0.0 {
                    let denom: f64 = bids.iter().map(|b| b.powf(*r)).sum();
                    (own.powf(*r) / denom, -own)
                } else {
                    (1.0 / self.agents as f64, 0.0)
                }
            }
            MechanismKind::Llg { rule } => {
                let outcome = llg_outcome(*rule, [bids[0], bids[1], bids[2]]);
                let wins = match outcome.winner {
                    LlgWinner::Locals => agent < 2,
                    LlgWinner::Global => agent == 2,
                    LlgWinner::None => false,
                };
                if wins {
                    (1.0, -outcome.payments[agent])
                } else {
                    (0.0, 0.0)
                }
            }
            MechanismKind::SplitAward { cost, cost_model, .. } => {
                match split_allocation([bids[0], bids[1], bids[2], bids[3]]) {
                    SplitAllocation::Sole(w) if w == agent => (-1.0, bids[2 * agent]),
                    SplitAllocation::Split => match cost_model {
                        SplitCost::Proportional => (-cost, bids[2 * agent + 1]),
                        SplitCost::Flat => (0.0, bids[2 * agent + 1] - cost),
                    },
                    _ => (0.0, 0.0),
                }
            }
        }
    }

    /// Payments collected from (or, in procurement, paid to) each agent.
    pub fn payments(&self, bids: &[f64]) -> Vec<f64> {
        match &self.kind {
            MechanismKind::Llg { rule } => llg_outcome(*rule, [bids[0], bids[1], bids[2]]).payments.to_vec(),
            MechanismKind::SplitAward { .. } => {
                let mut p = vec![0.0; 2];
                match split_allocation([bids[0], bids[1], bids[2], bids[3]]) {
                    SplitAllocation::Sole(w) => p[w] = bids[2 * w],
                    SplitAllocation::Split => {
                        p[0] = bids[1];
                        p[1] = bids[3];
                    }
                    SplitAllocation::None => {}
                }
                p
            }
            _ => (0..self.agents).map(|i| -self.affine_terms(i, bids).1).collect(),
        }
    }

    /// Split-award allocation and risk-transformed utilities for types `obs`.
    pub fn split_award_outcome(&self, bids: [f64; 4], obs: [f64; 2]) -> Result<(SplitAllocation, [f64; 2])> {
        if !matches!(self.kind, MechanismKind::SplitAward { .. }) {
            return Err(Error::Unsupported("not a split-award mechanism".into()));
        }
        self.check_bids(&bids)?;
        let alloc = split_allocation(bids);
        Ok((alloc, [self.utility(0, &bids, obs[0]), self.utility(1, &bids, obs[1])]))
    }
}

/// Buyer picks the cheaper of the best sole-source offer and the split
/// offer; any tie at the chosen price means no award.
pub fn split_allocation(bids: [f64; 4]) -> SplitAllocation {
    let (sole0, sole1) = (bids[0], bids[2]);
    let split = bids[1] + bids[3];
    let sole = sole0.min(sole1);
    if split < sole {
        SplitAllocation::Split
    } else if sole < split && sole0 != sole1 {
        SplitAllocation::Sole(if sole0 < sole1 { 0 } else { 1 })
    } else {
        SplitAllocation::None
    }
}

/// LLG winner determination and payments. Locals win on `b1 + b2 > b3`,
/// the global bidder on `b3 > b1 + b2`, nobody on equality.
pub fn llg_outcome(rule: LlgRule, bids: [f64; 3]) -> LlgOutcome {
    let [b1, b2, b3] = bids;
    let locals = b1 + b2;
    if locals > b3 {
        let payments = match rule {
            LlgRule::FirstPrice => [b1, b2, 0.0],
            LlgRule::NearestZero => with_global(project_core([0.0, 0.0], [b1, b2], b3)),
            LlgRule::NearestVcg => {
                let vcg = [(b3 - b2).max(0.0), (b3 - b1).max(0.0)];
                with_global(project_core(vcg, [b1, b2], b3))
            }
            LlgRule::NearestBid => with_global(project_core([b1, b2], [b1, b2], b3)),
        };
        LlgOutcome { winner: LlgWinner::Locals, payments }
    } else if b3 > locals {
        let price = match rule {
            LlgRule::FirstPrice => b3,
            _ => locals,
        };
        LlgOutcome { winner: LlgWinner::Global, payments: [0.0, 0.0, price] }
    } else {
        LlgOutcome { winner: LlgWinner::None, payments: [0.0; 3] }
    }
}

fn with_global(p: [f64; 2]) -> [f64; 3] {
    [p[0], p[1], 0.0]
}

/// Euclidean projection of `z` onto `{0 <= p_i <= cap_i, p_1 + p_2 >= floor}`.
/// Requires `cap_1 + cap_2 >= floor`.
pub fn project_core(z: [f64; 2], cap: [f64; 2], floor: f64) -> [f64; 2] {
    let clip = |x: f64, i: usize| x.clamp(0.0, cap[i]);
    let boxed = [clip(z[0], 0), clip(z[1], 1)];
    if boxed[0] + boxed[1] >= floor {
        return boxed;
    }
    // shift along (1, 1) until the sum constraint binds:
    // g(l) = sum_i clip(z_i + l) is piecewise linear and nondecreasing
    let g = |l: f64| clip(z[0] + l, 0) + clip(z[1] + l, 1);
    let mut breaks = [-z[0], -z[1], cap[0] - z[0], cap[1] - z[1]];
    breaks.sort_by(f64::total_cmp);
    let (mut lo, mut g_lo) = (0.0, g(0.0));
    for &bp in breaks.iter().filter(|&&bp| bp > 0.0) {
        let g_bp = g(bp);
        if g_bp >= floor {
            let l = if g_bp > g_lo { lo + (floor - g_lo) * (bp - lo) / (g_bp - g_lo) } else { bp };
            return [clip(z[0] + l, 0), clip(z[1] + l, 1)];
        }
        lo = bp;
        g_lo = g_bp;
    }
    [cap[0], cap[1]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn mech(kind: MechanismKind, n: usize) -> Mechanism {
        Mechanism::new(kind, n, 1.0).unwrap()
    }

    #[test]
    fn fpsb_examples() {
        let m = mech(MechanismKind::Fpsb, 2);
        assert_abs_diff_eq!(m.expost_utility(0, &[0.4, 0.3], 0.7).unwrap(), 0.3, epsilon = 1e-15);
        assert_eq!(m.expost_utility(1, &[0.4, 0.3], 0.9).unwrap(), 0.0);
        assert_eq!(m.expost_utility(0, &[0.4, 0.4], 0.7).unwrap(), 0.0);
        assert_eq!(m.expost_utility(1, &[0.4, 0.4], 0.7).unwrap(), 0.0);
        let risky = Mechanism::new(MechanismKind::Fpsb, 2, 0.5).unwrap();
        assert_abs_diff_eq!(risky.expost_utility(0, &[0.4, 0.3], 0.7).unwrap(), 0.3f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn tullock_examples() {
        let m = mech(MechanismKind::Tullock { r: 1.0 }, 2);
        assert_abs_diff_eq!(m.expost_utility(0, &[0.2, 0.2], 1.0).unwrap(), 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(m.expost_utility(0, &[0.0, 0.0], 0.6).unwrap(), 0.3, epsilon = 1e-15);
        assert!(Mechanism::new(MechanismKind::Tullock { r: 0.0 }, 2, 1.0).is_err());
    }

    #[test]
    fn all_pay_losers_pay() {
        let m = mech(MechanismKind::AllPay, 2);
        assert_abs_diff_eq!(m.expost_utility(0, &[0.3, 0.5], 0.9).unwrap(), -0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(m.expost_utility(1, &[0.3, 0.5], 0.8).unwrap(), 0.3, epsilon = 1e-15);
        // tie: prize withheld, bids sunk
        assert_abs_diff_eq!(m.expost_utility(0, &[0.5, 0.5], 0.9).unwrap(), -0.5, epsilon = 1e-15);
    }

    #[test]
    fn spsb_pays_second_highest() {
        let m = mech(MechanismKind::Spsb, 3);
        assert_abs_diff_eq!(m.expost_utility(0, &[0.6, 0.2, 0.4], 0.9).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(m.expost_utility(1, &[0.6, 0.2, 0.4], 0.9).unwrap(), 0.0);
    }

    #[test]
    fn crra_identity_and_sign() {
        for &u in &[-0.7, -0.0, 0.0, 0.3, 2.0] {
            assert_eq!(crra(u, 1.0), u);
        }
        assert_abs_diff_eq!(crra(-0.25, 0.5), -0.5, epsilon = 1e-15);
        assert!(Mechanism::new(MechanismKind::Fpsb, 2, 0.0).is_err());
        assert!(Mechanism::new(MechanismKind::Fpsb, 2, 1.1).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let m = mech(MechanismKind::Fpsb, 2);
        assert!(matches!(m.expost_utility(0, &[0.1], 0.5), Err(Error::DimensionMismatch { .. })));
        assert!(Mechanism::new(MechanismKind::Llg { rule: LlgRule::NearestBid }, 2, 1.0).is_err());
    }

    #[test]
    fn llg_examples() {
        let nb = llg_outcome(LlgRule::NearestBid, [0.6, 0.6, 1.0]);
        assert_eq!(nb.winner, LlgWinner::Locals);
        assert_abs_diff_eq!(nb.payments[0], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(nb.payments[1], 0.6, epsilon = 1e-12);

        let nz = llg_outcome(LlgRule::NearestZero, [0.6, 0.6, 1.0]);
        assert_abs_diff_eq!(nz.payments[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(nz.payments[1], 0.5, epsilon = 1e-12);

        let nvcg = llg_outcome(LlgRule::NearestVcg, [0.2, 0.9, 1.0]);
        assert_abs_diff_eq!(nvcg.payments[0], 0.15, epsilon = 1e-12);
        assert_abs_diff_eq!(nvcg.payments[1], 0.85, epsilon = 1e-12);

        let g = llg_outcome(LlgRule::NearestZero, [0.3, 0.3, 1.0]);
        assert_eq!(g.winner, LlgWinner::Global);
        assert_abs_diff_eq!(g.payments[2], 0.6, epsilon = 1e-15);
        assert_eq!(llg_outcome(LlgRule::FirstPrice, [0.3, 0.3, 1.0]).payments[2], 1.0);
        assert_eq!(llg_outcome(LlgRule::NearestBid, [0.5, 0.5, 1.0]).winner, LlgWinner::None);
        let m = mech(MechanismKind::Llg { rule: LlgRule::NearestBid }, 3);
        assert!(m.expost_utility(0, &[-0.1, 0.5, 0.3], 0.5).is_err());
    }

    /// Tiny-QP oracle: the optimum is either the box projection (when it
    /// satisfies the sum constraint) or the best point on the segment
    /// `p1 + p2 = floor` inside the box, found by bisection on the slope.
    fn core_oracle(z: [f64; 2], cap: [f64; 2], floor: f64) -> [f64; 2] {
        let boxed = [z[0].clamp(0.0, cap[0]), z[1].clamp(0.0, cap[1])];
        if boxed[0] + boxed[1] >= floor {
            return boxed;
        }
        let (mut lo, mut hi) = ((floor - cap[1]).max(0.0), cap[0].min(floor));
        let slope = |t: f64| (t - z[0]) - (floor - t - z[1]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if slope(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        [t, floor - t]
    }

    #[test]
    fn core_payments_feasible_and_optimal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let mut locals_won = 0;
        for _ in 0..10_000 {
            let b: [f64; 3] = [rng.random(), rng.random(), 2.0 * rng.random::<f64>()];
            for rule in [LlgRule::NearestZero, LlgRule::NearestVcg, LlgRule::NearestBid] {
                let out = llg_outcome(rule, b);
                if out.winner != LlgWinner::Locals {
                    continue;
                }
                locals_won += 1;
                let p = out.payments;
                assert!(p[0] >= 0.0 && p[0] <= b[0] + 1e-12);
                assert!(p[1] >= 0.0 && p[1] <= b[1] + 1e-12);
                assert!(p[0] + p[1] >= b[2] - 1e-12);
                let z = match rule {
                    LlgRule::NearestZero => [0.0, 0.0],
                    LlgRule::NearestVcg => [(b[2] - b[1]).max(0.0), (b[2] - b[0]).max(0.0)],
                    _ => [b[0], b[1]],
                };
                let q = core_oracle(z, [b[0], b[1]], b[2]);
                assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9, "{b:?} {p:?} {q:?}");
            }
        }
        assert!(locals_won > 1000);
    }

    #[test]
    fn split_award_examples() {
        let m = mech(MechanismKind::split_award(0.3, SplitCost::Proportional), 2);
        let (a, u) = m.split_award_outcome([2.0, 1.2, 2.1, 1.2], [1.0, 1.0]).unwrap();
        assert_eq!(a, SplitAllocation::Sole(0));
        assert_abs_diff_eq!(u[0], 1.0, epsilon = 1e-12);
        assert_eq!(u[1], 0.0);

        let (a, u) = m.split_award_outcome([2.5, 1.0, 2.5, 1.0], [1.2, 1.3]).unwrap();
        assert_eq!(a, SplitAllocation::Split);
        assert_abs_diff_eq!(u[0], 0.64, epsilon = 1e-12);
        assert_abs_diff_eq!(u[1], 0.61, epsilon = 1e-12);

        let (a, u) = m.split_award_outcome([2.0, 1.0, 2.2, 1.0], [1.0, 1.0]).unwrap();
        assert_eq!(a, SplitAllocation::None);
        assert_eq!(u, [0.0, 0.0]);

        assert!(m.split_award_outcome([0.5, 1.0, 2.2, 1.0], [1.0, 1.0]).is_err());

        let flat = mech(MechanismKind::split_award(0.3, SplitCost::Flat), 2);
        let (_, u) = flat.split_award_outcome([2.5, 1.0, 2.5, 1.0], [1.2, 1.3]).unwrap();
        assert_abs_diff_eq!(u[0], 0.7, epsilon = 1e-12);
    }

    #[test]
    fn split_is_efficient_under_proportional_cost() {
        for k in 1..100 {
            let o = k as f64 * 0.02;
            assert!(2.0 * 0.3 * o < o);
        }
    }

    #[test]
    fn single_object_allocation_monotone() {
        let grid: Vec<f64> = (0..21).map(|k| k as f64 * 0.05).collect();
        for kind in [MechanismKind::Fpsb, MechanismKind::Spsb, MechanismKind::AllPay] {
            let m = mech(kind, 3);
            for &o1 in &grid {
                for &o2 in &grid {
                    let mut prev = 0.0;
                    for &b in &grid {
                        let (slope, _) = m.affine_terms(0, &[b, o1, o2]);
                        assert!(slope >= prev);
                        prev = slope;
                    }
                }
            }
        }
    }

    #[test]
    fn tie_broken_by_one_step() {
        let m = mech(MechanismKind::Fpsb, 3);
        let step = 0.05;
        let tied = [0.4, 0.4, 0.1];
        assert_eq!(m.affine_terms(0, &tied).0 + m.affine_terms(1, &tied).0, 0.0);
        let raised = [0.4 + step, 0.4, 0.1];
        let winners: f64 = (0..3).map(|i| m.affine_terms(i, &raised).0).sum();
        assert_eq!(winners, 1.0);
    }
}
