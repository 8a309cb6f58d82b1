//! Exact trajectory-tree oracles for the total discounted reward on models with
//! `beta = 1/2` and integer rewards, where every partial sum is a dyadic rational.
//!
//! Subtrees with the same (depth, state, accumulated reward) are identical, so they are
//! memoized; every action is tried at every node, which is the same as enumerating all
//! history-dependent policies.

use std::collections::HashMap;

use riskmdp::neutral::policy_iteration;
use riskmdp::Mdp;

pub struct TreeOracle<'a> {
    m: &'a Mdp,
    depth: u32,
    neutral: Vec<f64>,
}

impl<'a> TreeOracle<'a> {
    pub fn new(m: &'a Mdp, depth: u32) -> Self {
        assert_eq!(m.discount, 0.5, "the oracle needs beta = 1/2");
        for c in m.choices.iter().flatten() {
            assert_eq!(c.reward.fract(), 0.0, "the oracle needs integer rewards");
        }
        Self { m, depth, neutral: policy_iteration(m).unwrap().value }
    }

    /// Rewards left out beyond the tree, at most `beta^depth d / (1 - beta)`.
    pub fn tail_bound(&self) -> f64 {
        0.5f64.powi(self.depth as i32) * self.m.total_reward_bound()
    }

    /// `max -ln E exp(-gamma R) / gamma` with the tail beyond the tree counted as 0.
    pub fn entropic(&self, x0: usize, gamma: f64) -> f64 {
        // w[x] = min over the subtree of E exp(-gamma * discounted reward from the node)
        let mut w = vec![1.0; self.m.n_states()];
        for n in (0..self.depth).rev() {
            let z = 0.5f64.powi(n as i32);
            w = self
                .m
                .choices
                .iter()
                .map(|cs| {
                    cs.iter()
                        .map(|c| {
                            let cont: f64 = c.successors.iter().map(|&(y, p)| p * w[y]).sum();
                            (-gamma * z * c.reward).exp() * cont
                        })
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
        }
        -w[x0].ln() / gamma
    }

    /// `eta + max E min(R - eta, 0) / alpha` over all policies, for a dyadic `eta` given as
    /// a numerator over `2^depth`.
    pub fn cvar_objective(&self, x0: usize, alpha: f64, eta_num: i64) -> f64 {
        let scale = 2f64.powi(self.depth as i32);
        let mut memo = HashMap::new();
        eta_num as f64 / scale + self.cvar_node(&mut memo, 0, x0, 0, eta_num, alpha)
    }

    fn cvar_node(
        &self,
        memo: &mut HashMap<(u32, usize, i64), f64>,
        n: u32,
        x: usize,
        y: i64,
        eta: i64,
        alpha: f64,
    ) -> f64 {
        let scale = 2f64.powi(self.depth as i32);
        let gap = (y - eta) as f64 / scale;
        if gap >= 0.0 {
            return 0.0;
        }
        let z = 0.5f64.powi(n as i32);
        if gap + z * self.m.total_reward_bound() <= 0.0 {
            // the target cannot be reached: maximize the expected remainder
            return (gap + z * self.neutral[x]) / alpha;
        }
        if n == self.depth {
            return gap / alpha;
        }
        if let Some(&v) = memo.get(&(n, x, y)) {
            return v;
        }
        let step = 1i64 << (self.depth - n);
        let best = self.m.choices[x]
            .iter()
            .map(|c| {
                let y1 = y + c.reward as i64 * step;
                c.successors.iter().map(|&(x1, p)| p * self.cvar_node(memo, n + 1, x1, y1, eta, alpha)).sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        memo.insert((n, x, y), best);
        best
    }

    /// `sup_eta` of [`Self::cvar_objective`]: a scan with step `2^-10` over
    /// `[0, d/(1-beta)]`, then step `2^-20` around the eight best scan points.
    pub fn cvar(&self, x0: usize, alpha: f64) -> f64 {
        assert!(self.depth >= 20);
        let coarse = 1i64 << (self.depth - 10);
        let fine = 1i64 << (self.depth - 20);
        let top = (self.m.total_reward_bound() * 1024.0).ceil() as i64;
        let mut scan: Vec<(f64, i64)> =
            (0..=top).map(|k| (self.cvar_objective(x0, alpha, k * coarse), k * coarse)).collect();
        scan.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut best = scan[0].0;
        for &(_, centre) in scan.iter().take(8) {
            for j in -1024..=1024 {
                let eta = centre + j * fine;
                if eta >= 0 {
                    best = best.max(self.cvar_objective(x0, alpha, eta));
                }
            }
        }
        best
    }
}
