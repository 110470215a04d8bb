//! Relative-velocity bounds and the expansion checker.
//!
//! `f(a; m₁…m_N)` bounds every relative speed on a segment whose collision
//! graph is connected and whose collisions all have relative speed `≤ a`.
//! It is built recursively over two-class splits of the balls, see
//! [`f_bound`]. The threshold `G` is the largest `a` (up to a 1% margin) with
//! `f(a) < M^{−1/2}`: since `E = ½` forces some pair to move apart at
//! speed `≥ M^{−1/2}`, a connected segment must contain a collision with
//! relative speed `≥ G`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::CollisionEvent;
use crate::phase_space::{PhasePoint, SystemParams};
use crate::tangent::TraceSample;

/// Safety factor applied to the threshold criterion `f(G) < M^{−1/2}`.
pub const G_MARGIN: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassMultiset {
    masses: Vec<f64>,
    total: f64,
    min: f64,
}

impl MassMultiset {
    pub fn new(masses: &[f64]) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::InvalidParams("empty mass list".into()));
        }
        if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::InvalidParams(format!("mass {m} is not positive")));
        }
        let mut masses = masses.to_vec();
        masses.sort_by(f64::total_cmp);
        Ok(Self { total: masses.iter().sum(), min: masses[0], masses })
    }

    pub fn of(params: &SystemParams) -> Self {
        Self::new(&params.masses).expect("SystemParams masses are validated")
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    /// `2√(M/m)`.
    pub fn spread_factor(&self) -> f64 {
        2.0 * (self.total / self.min).sqrt()
    }
}

/// `2a√(M/m)`: bound on all relative speeds given one at time zero.
pub fn lemma_3_10_bound(a: f64, ms: &MassMultiset) -> f64 {
    a * ms.spread_factor()
}

/// `f(a; ms)`.
///
/// One mass gives 0 and two masses give `a`. For three or more,
/// `f = 2√(M/m) · max over splits D₁|D₂ of [a + f(a; D₁) + f(a; D₂)]`.
/// Sub-results are memoized on sorted mass lists; the cost is
/// `O(3^N)` in the worst case, fine for N ≤ 12.
pub fn f_bound(a: f64, ms: &MassMultiset) -> f64 {
    let mut memo = HashMap::new();
    f_rec(a, &ms.masses, &mut memo)
}

fn f_rec(a: f64, masses: &[f64], memo: &mut HashMap<Vec<u64>, f64>) -> f64 {
    match masses.len() {
        0 | 1 => return 0.0,
        2 => return a,
        _ => {}
    }
    let key: Vec<u64> = masses.iter().map(|m| m.to_bits()).collect();
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let n = masses.len();
    let last = n - 1;
    let mut best = 0.0f64;
    // the last ball always sits in D₂, so every split is visited once
    for mask in 1u64..(1 << last) {
        let (d1, d2): (Vec<f64>, Vec<f64>) = {
            let mut d1 = Vec::new();
            let mut d2 = vec![];
            for (k, &m) in masses.iter().enumerate() {
                if k < last && mask & (1 << k) != 0 {
                    d1.push(m);
                } else {
                    d2.push(m);
                }
            }
            (d1, d2)
        };
        best = best.max(a + f_rec(a, &d1, memo) + f_rec(a, &d2, memo));
    }
    let total: f64 = masses.iter().sum();
    let value = 2.0 * (total / masses[0]).sqrt() * best;
    memo.insert(key, value);
    value
}

/// `G = 0.99 · M^{−1/2} / f(1)`, using `f(a) = a·f(1)`.
///
/// # Panics
/// If `ms` has fewer than two masses.
pub fn g_threshold(ms: &MassMultiset) -> f64 {
    assert!(ms.len() >= 2, "threshold needs at least two masses");
    G_MARGIN / (ms.total.sqrt() * f_bound(1.0, ms))
}

/// Cross-check of [`g_threshold`] by bisection on the monotone map `a ↦ f(a)`,
/// without using homogeneity. Returns the largest `a` found with
/// `f(a) ≤ 0.99·M^{−1/2}`.
pub fn g_threshold_bisection(ms: &MassMultiset) -> f64 {
    assert!(ms.len() >= 2, "threshold needs at least two masses");
    let target = G_MARGIN / ms.total.sqrt();
    let (mut lo, mut hi) = (0.0, 1.0);
    while f_bound(hi, ms) <= target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f_bound(mid, ms) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// `rel_speed / r`, the guaranteed post-collision curvature of a flat seed.
pub fn curvature_lower_bound(ev: &CollisionEvent, params: &SystemParams) -> f64 {
    ev.rel_speed / params.radius
}

/// `rel_speed / (r cos φ₀)`, the sharper form of [`curvature_lower_bound`].
pub fn curvature_sharp_bound(ev: &CollisionEvent, params: &SystemParams) -> f64 {
    ev.rel_speed / (params.radius * ev.cos_phi)
}

pub fn max_relative_speed(x: &PhasePoint, params: &SystemParams) -> f64 {
    params.pairs().map(|p| x.relative_speed(p)).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub c0: f64,
    /// `⟨δq₀, δv₀⟩ / ‖δq₀‖²` at the first sample.
    pub start_curvature: f64,
    pub samples: usize,
    /// `min (‖δq_t‖/‖δq₀‖ − (1 + c₀t))` over the trace.
    pub min_slack: f64,
    pub violations: usize,
}

/// Checks `‖δq_t‖/‖δq₀‖ ≥ 1 + c₀t − 1e−8` on every sample, with `t`
/// counted from the first one.
pub fn prop_3_5_check(params: &SystemParams, trace: &[TraceSample], c0: f64) -> Result<GrowthReport> {
    let first = trace.first().ok_or_else(|| Error::ContractViolation("empty trace".into()))?;
    if !(c0 > 0.0) {
        return Err(Error::HypothesisUnmet(format!("c0 = {c0} is not positive")));
    }
    let nq = first.w.norm_dq(params);
    let start_curvature = first.q / (nq * nq);
    if !(start_curvature >= c0) {
        return Err(Error::HypothesisUnmet(format!(
            "starting curvature {start_curvature:.6e} is below c0 = {c0:.6e}"
        )));
    }
    let ln0 = first.ln_norm_dq(params);
    let mut min_slack = f64::INFINITY;
    let mut violations = 0;
    for s in trace {
        let ratio = (s.ln_norm_dq(params) - ln0).exp();
        let slack = ratio - (1.0 + c0 * (s.t - first.t));
        min_slack = min_slack.min(slack);
        if slack < -1e-8 {
            violations += 1;
        }
    }
    Ok(GrowthReport { c0, start_curvature, samples: trace.len(), min_slack, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{Pair, ToleranceSet};
    use crate::tangent::{Side, TangentVector};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ms(m: &[f64]) -> MassMultiset {
        MassMultiset::new(m).unwrap()
    }

    #[test]
    fn multiset_rejects_bad_masses() {
        assert!(MassMultiset::new(&[]).is_err());
        assert!(MassMultiset::new(&[1.0, 0.0]).is_err());
        assert!(MassMultiset::new(&[1.0, f64::NAN]).is_err());
        let s = ms(&[3.0, 1.0, 2.0]);
        assert_eq!(s.masses(), &[1.0, 2.0, 3.0]);
        assert_eq!((s.total(), s.min()), (6.0, 1.0));
    }

    #[test]
    fn spread_bound_examples() {
        assert_eq!(lemma_3_10_bound(0.0, &ms(&[1.0, 2.0])), 0.0);
        assert_eq!(lemma_3_10_bound(1.0, &ms(&[1.0; 4])), 4.0);
        assert_relative_eq!(lemma_3_10_bound(1.0, &ms(&[1.0, 4.0])), 2.0 * 5f64.sqrt());
    }

    #[test]
    fn f_base_cases() {
        assert_eq!(f_bound(0.7, &ms(&[2.5])), 0.0);
        assert_eq!(f_bound(0.7, &ms(&[2.5, 0.3])), 0.7);
    }

    /// Brute force over every split of labelled balls, no memo, no sorting.
    fn f_oracle(a: f64, masses: &[f64]) -> f64 {
        match masses.len() {
            0 | 1 => 0.0,
            2 => a,
            n => {
                let mut best = 0.0f64;
                for mask in 1u32..(1 << n) - 1 {
                    let d1: Vec<f64> = (0..n).filter(|k| mask & (1 << k) != 0).map(|k| masses[k]).collect();
                    let d2: Vec<f64> = (0..n).filter(|k| mask & (1 << k) == 0).map(|k| masses[k]).collect();
                    best = best.max(a + f_oracle(a, &d1) + f_oracle(a, &d2));
                }
                let total: f64 = masses.iter().sum();
                let min = masses.iter().cloned().fold(f64::INFINITY, f64::min);
                2.0 * (total / min).sqrt() * best
            }
        }
    }

    #[test]
    fn three_unit_masses() {
        assert_relative_eq!(f_bound(1.0, &ms(&[1.0; 3])), 4.0 * 3f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(f_oracle(1.0, &[1.0; 3]), 4.0 * 3f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn f_matches_brute_force() {
        for m in [vec![1.0, 2.0, 3.0, 0.5], vec![1.0; 5], vec![0.3, 0.3, 2.0, 5.0, 1.1]] {
            assert_relative_eq!(f_bound(1.3, &ms(&m)), f_oracle(1.3, &m), max_relative = 1e-13);
        }
    }

    #[test]
    fn threshold_examples() {
        let two = ms(&[1.0, 1.0]);
        assert_relative_eq!(g_threshold(&two), 0.99 / 2f64.sqrt(), max_relative = 1e-15);
        let three = ms(&[1.0; 3]);
        let g = g_threshold(&three);
        assert_relative_eq!(g, 0.99 / 12.0, max_relative = 1e-14);
        assert!(g <= 0.99 / 12.0 * (1.0 + 1e-15));
    }

    #[test]
    fn bisection_agrees_with_closed_form() {
        for m in [vec![1.0, 1.0], vec![1.0; 3], vec![1.0, 2.0, 3.0, 4.0], vec![0.2, 7.0, 1.0]] {
            let s = ms(&m);
            assert_relative_eq!(g_threshold(&s), g_threshold_bisection(&s), max_relative = 1e-12);
        }
    }

    #[test]
    fn curvature_bound_examples() {
        let p = SystemParams::new(2, 0.1, vec![1.0, 1.0], ToleranceSet::default()).unwrap();
        let g = g_threshold(&MassMultiset::of(&p));
        let ev = CollisionEvent { t: 0.0, pair: Pair::new(0, 1), rel_speed: g, cos_phi: 0.4, contact_normal: vec![1.0, 0.0] };
        assert_relative_eq!(curvature_lower_bound(&ev, &p), 10.0 * g, max_relative = 1e-15);
        assert!(curvature_sharp_bound(&ev, &p) >= curvature_lower_bound(&ev, &p));
    }

    fn sample(p: &SystemParams, t: f64, w: TangentVector) -> TraceSample {
        let q = p.mass_inner(&w.dq, &w.dv);
        TraceSample { t, side: Side::Flight, w, q, scale_exp: 0 }
    }

    #[test]
    fn linear_growth_on_free_flight() {
        let p = SystemParams::equal_masses(2, 2, 0.1).unwrap();
        let w0 = TangentVector { dq: vec![1.0, 0.0, -1.0, 0.0], dv: vec![0.5, 0.3, -0.5, -0.3] };
        let trace: Vec<TraceSample> =
            (0..20).map(|k| sample(&p, k as f64 * 0.3, crate::tangent::propagate_free(&w0, k as f64 * 0.3))).collect();
        let c0 = trace[0].q / trace[0].w.norm_dq(&p).powi(2);
        let report = prop_3_5_check(&p, &trace, c0).unwrap();
        assert_eq!(report.violations, 0);
        assert!(report.min_slack >= -1e-12);
        assert!(matches!(prop_3_5_check(&p, &trace, 0.0), Err(Error::HypothesisUnmet(_))));
        assert!(matches!(prop_3_5_check(&p, &trace, 2.0 * c0), Err(Error::HypothesisUnmet(_))));
    }

    proptest! {
        #[test]
        fn f_homogeneous_and_monotone(m in prop::collection::vec(0.1f64..10.0, 1..6), a in 0.0f64..5.0, b in 0.0f64..5.0) {
            let s = ms(&m);
            let f1 = f_bound(1.0, &s);
            prop_assert!((f_bound(a, &s) - a * f1).abs() <= 1e-12 * (1.0 + a * f1));
            if a <= b {
                prop_assert!(f_bound(a, &s) <= f_bound(b, &s));
            }
            prop_assert_eq!(f_bound(0.0, &s), 0.0);
        }

        #[test]
        fn f_symmetric(m in prop::collection::vec(0.1f64..10.0, 2..6), rot in 0usize..6) {
            let mut shuffled = m.clone();
            let k = rot % m.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            prop_assert_eq!(f_bound(1.0, &ms(&m)), f_bound(1.0, &ms(&shuffled)));
        }

        #[test]
        fn threshold_meets_criterion(m in prop::collection::vec(0.1f64..10.0, 2..6)) {
            let s = ms(&m);
            let g = g_threshold(&s);
            prop_assert!(g > 0.0);
            prop_assert!(f_bound(g, &s) < s.total().powf(-0.5));
        }
    }
}
