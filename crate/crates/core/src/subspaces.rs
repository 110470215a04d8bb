//! Stable and unstable curvature operators and expansion/contraction
//! certificates.
//!
//! `B(x)` is approximated by placing a flat family (`δv = 0`) spanning the
//! transversal section `W = {Σ m δq = 0, ⟨δq, v⟩ = 0}` at a past collision
//! and pushing it to `x`; the family then satisfies `δV = B δQ`. The depth is
//! doubled until successive operators agree.
//!
//! Certificates are numerical witnesses: a tangent vector whose norm grows
//! above `L` (or shrinks below `1/L`) between a collision and the base point.
//! Each one carries its orbit segment so it can be re-checked without
//! re-integrating a chaotic orbit.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimates::{g_threshold, MassMultiset};
use crate::flow::{free_flight, next_collision, simulate, FlowOptions, Stop, TrajectorySegment};
use crate::graphs::CollisionSequence;
use crate::phase_space::{dot, min_image_delta, norm, Pair, PhasePoint, SystemParams};
use crate::tangent::{
    build_frame, propagate_along_with, propagate_collision, propagate_free, reproject, TangentVector, TraceOptions,
};

/// Successive depths must agree to this operator-norm distance.
pub const B_TOLERANCE: f64 = 1e-8;
/// Smallest `‖w‖` (w of unit-norm `q_i − q_j`) accepted for a flat seed.
pub const SPAN_TOLERANCE: f64 = 1e-6;

/// `B` as a matrix on compound vectors; it vanishes on the complement of the
/// transversal section.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureOperator {
    pub matrix: DMatrix<f64>,
    /// Number of past collisions the family has crossed.
    pub depth: usize,
    /// Operator-norm distance to the previous depth (`∞` if not compared).
    pub last_change: f64,
    weights: Vec<f64>,
}

impl CurvatureOperator {
    fn zero(params: &SystemParams) -> Self {
        let len = params.compound_len();
        Self { matrix: DMatrix::zeros(len, len), depth: 0, last_change: f64::INFINITY, weights: weights(params) }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        (&self.matrix * nalgebra::DVector::from_column_slice(u)).as_slice().to_vec()
    }

    /// `M^{1/2} B M^{−1/2}`, symmetric iff `B` is mass-symmetric.
    pub fn normalized(&self) -> DMatrix<f64> {
        let w = &self.weights;
        DMatrix::from_fn(w.len(), w.len(), |a, b| self.matrix[(a, b)] * (w[a] / w[b]).sqrt())
    }

    /// `‖S − Sᵀ‖ / ‖S‖` (Frobenius) of the normalized matrix.
    pub fn symmetry_defect(&self) -> f64 {
        let s = self.normalized();
        let scale = s.norm();
        if scale == 0.0 {
            return 0.0;
        }
        (&s - s.transpose()).norm() / scale
    }

    /// Eigenvalues of the symmetrized normalized matrix, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let s = self.normalized();
        let sym = (&s + s.transpose()) * 0.5;
        let mut ev: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Mass-metric operator norm of `self − other`.
    pub fn distance(&self, other: &Self) -> f64 {
        let d = self.normalized() - other.normalized();
        let sym = (&d + d.transpose()) * 0.5;
        sym.symmetric_eigen().eigenvalues.iter().fold(0.0, |m, l| m.max(l.abs()))
    }
}

fn weights(params: &SystemParams) -> Vec<f64> {
    params.masses.iter().flat_map(|&m| std::iter::repeat_n(m, params.nu)).collect()
}

/// Mass-orthonormal basis of `{Σ m δq = 0, ⟨δq, v⟩ = 0}` at `x`.
pub fn transversal_basis(params: &SystemParams, x: &PhasePoint) -> Vec<Vec<f64>> {
    let len = params.compound_len();
    let metric = params.metric();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let vn = params.mass_norm(&x.v);
    let vhat: Vec<f64> = x.v.iter().map(|c| c / vn).collect();
    for k in 0..len {
        let mut u = vec![0.0; len];
        u[k] = 1.0;
        metric.remove_translation(&mut u);
        for b in std::iter::once(&vhat).chain(basis.iter()) {
            let c = params.mass_inner(b, &u);
            u.iter_mut().zip(b).for_each(|(u, b)| *u -= c * b);
        }
        let n = params.mass_norm(&u);
        if n > 1e-8 {
            basis.push(u.iter().map(|c| c / n).collect());
        }
    }
    basis
}

/// Modified Gram–Schmidt on the `δq` parts in the mass metric, applying the
/// same column operations to the `δv` parts.
fn orthonormalize(params: &SystemParams, family: &mut [TangentVector]) {
    for k in 0..family.len() {
        let (done, rest) = family.split_at_mut(k);
        let col = &mut rest[0];
        for prev in done.iter() {
            let c = params.mass_inner(&prev.dq, &col.dq);
            *col = col.combine(1.0, prev, -c);
        }
        let n = params.mass_norm(&col.dq);
        *col = col.scaled(1.0 / n);
    }
}

/// Operator read off a family with `δV = B δQ` and mass-orthonormal `δQ`.
fn read_operator(params: &SystemParams, family: &[TangentVector], depth: usize) -> CurvatureOperator {
    let w = weights(params);
    let len = w.len();
    let mut m = DMatrix::zeros(len, len);
    for col in family {
        for a in 0..len {
            for b in 0..len {
                m[(a, b)] += col.dv[a] * w[b] * col.dq[b];
            }
        }
    }
    CurvatureOperator { matrix: m, depth, last_change: f64::INFINITY, weights: w }
}

/// `B` from a flat family placed just before the `depth`-th collision in the
/// past of `x`.
pub fn unstable_b_at_depth(params: &SystemParams, x: &PhasePoint, depth: usize) -> Result<CurvatureOperator> {
    if depth == 0 {
        return Ok(CurvatureOperator::zero(params));
    }
    let back = simulate(params, &x.time_reverse(), Stop::Collisions(depth))?;
    let fwd = back.reversed(params)?;
    let mut family: Vec<TangentVector> = transversal_basis(params, &fwd.x0)
        .into_iter()
        .map(|dq| TangentVector { dv: vec![0.0; dq.len()], dq })
        .collect();
    let mut t = 0.0;
    for (event, pre) in fwd.events.iter().zip(&fwd.contacts) {
        let frame = build_frame(params, pre, event.pair)?;
        let post_v = frame.reflect(&pre.v);
        for w in family.iter_mut() {
            *w = propagate_collision(&propagate_free(w, event.t - t), &frame);
            reproject(params, w, &post_v);
        }
        orthonormalize(params, &mut family);
        t = event.t;
    }
    for w in family.iter_mut() {
        *w = propagate_free(w, fwd.t_end - t);
    }
    orthonormalize(params, &mut family);
    Ok(read_operator(params, &family, depth))
}

/// Approximates the unstable curvature operator `B(x)` by doubling the depth
/// from 4 until two successive operators differ by less than
/// [`B_TOLERANCE`], or `max_depth` is passed.
pub fn approximate_unstable_b(params: &SystemParams, x: &PhasePoint, max_depth: usize) -> Result<CurvatureOperator> {
    if max_depth == 0 {
        return Ok(CurvatureOperator::zero(params));
    }
    let mut depth = 4.min(max_depth);
    let mut prev = unstable_b_at_depth(params, x, depth)?;
    let mut last_change = f64::INFINITY;
    while depth < max_depth {
        depth = (2 * depth).min(max_depth);
        let mut next = unstable_b_at_depth(params, x, depth)?;
        last_change = next.distance(&prev);
        next.last_change = last_change;
        if last_change < B_TOLERANCE {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NoConvergence { depth, last_change })
}

/// `B` of the stable subspace `{δv = −B δq}` at `x`, computed as the unstable
/// operator at `−x`.
pub fn stable_subspace(params: &SystemParams, x: &PhasePoint, max_depth: usize) -> Result<CurvatureOperator> {
    approximate_unstable_b(params, &x.time_reverse(), max_depth)
}

#[derive(Debug, Clone, Copy)]
pub enum SeedMode<'a> {
    Flat,
    Curved(&'a CurvatureOperator),
}

/// Seed `δq = (m_j w, −m_i w)` on balls `i, j` (normalized to unit mass norm)
/// with `w ∈ span{v_i − v_j, q_i − q_j}` orthogonal to `v_i − v_j`.
pub fn lemma_3_7_seed(params: &SystemParams, x: &PhasePoint, pair: Pair, mode: SeedMode) -> Result<TangentVector> {
    let sep = x.separation(pair);
    let distance = norm(&sep);
    if (distance - 2.0 * params.radius).abs() > 1e4 * params.tolerances.contact_tol {
        return Err(Error::NotInContact { pair, distance });
    }
    let u = x.relative_velocity(pair);
    let uu = dot(&u, &u);
    if uu == 0.0 {
        return Err(Error::ZeroRelativeVelocity);
    }
    let e: Vec<f64> = sep.iter().map(|c| c / distance).collect();
    let s = dot(&e, &u) / uu;
    let mut w: Vec<f64> = e.iter().zip(&u).map(|(e, u)| e - s * u).collect();
    // a second pass removes the cancellation residue when e is nearly parallel to u
    let s2 = dot(&w, &u) / uu;
    w.iter_mut().zip(&u).for_each(|(w, u)| *w -= s2 * u);
    if norm(&w) < SPAN_TOLERANCE {
        return Err(Error::DegenerateSpan);
    }
    let nu = params.nu;
    let (mi, mj) = (params.masses[pair.i], params.masses[pair.j]);
    let mut dq = vec![0.0; params.compound_len()];
    for c in 0..nu {
        dq[pair.i * nu + c] = mj * w[c];
        dq[pair.j * nu + c] = -mi * w[c];
    }
    let n = params.mass_norm(&dq);
    dq.iter_mut().for_each(|c| *c /= n);
    let dv = match mode {
        SeedMode::Flat => vec![0.0; dq.len()],
        SeedMode::Curved(b) => b.apply(&dq),
    };
    Ok(TangentVector { dq, dv })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CertificateKind {
    Expansion,
    Contraction,
}

/// How the collision that hosts the seed is chosen among those with
/// relative speed at least `G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionRule {
    /// Earliest one whose measured ratio exceeds `L`.
    Measured,
    /// Earliest one with `1 + (t/r)·G > L`.
    ProofBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateOptions {
    /// Largest number of collisions simulated while searching.
    pub budget: usize,
    pub selection: SelectionRule,
    /// Every complete window of this many scanned collisions must contain a
    /// connected collision graph.
    pub richness_window: usize,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self { budget: 1000, selection: SelectionRule::Measured, richness_window: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    /// The point the certificate is about.
    pub base: PhasePoint,
    /// Time between the seed and the measurement.
    pub t: f64,
    /// Where the seed is attached: a contact state `t` before `base` for an
    /// expansion, `base` itself for a contraction.
    pub seed_point: PhasePoint,
    /// Unit-norm seed vector at `seed_point`.
    pub seed: TangentVector,
    /// `‖DS^t seed‖ / ‖seed‖`.
    pub ratio: f64,
    pub target_l: f64,
    /// Index of the host collision counted away from `base` (0 = nearest).
    pub event_index: usize,
    pub rel_speed: f64,
    pub g_threshold: f64,
    pub selection: SelectionRule,
    /// Orbit from `seed_point` over time `t`.
    pub segment: TrajectorySegment,
}

impl Certificate {
    pub fn holds(&self) -> bool {
        match self.kind {
            CertificateKind::Expansion => self.ratio > self.target_l,
            CertificateKind::Contraction => self.ratio < 1.0 / self.target_l,
        }
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Final vector (up to a power of two) and `ln ‖DS^t w‖` of `w` pushed along `seg`.
fn push(params: &SystemParams, w: &TangentVector, seg: &TrajectorySegment) -> Result<(TangentVector, f64)> {
    let opts = TraceOptions { samples_per_flight: 0, reproject: true };
    let last = propagate_along_with(params, w, seg, &opts, |_| {})?.last;
    let ln = last.ln_norm(params);
    Ok((last.w, ln))
}

fn check_windows(n: usize, seq: &TrajectorySegment, upto: usize, window: usize) -> Result<()> {
    if window == 0 {
        return Ok(());
    }
    let full = CollisionSequence::from_events(n, &seq.events[..upto])?;
    for start in (0..).map(|k| k * window).take_while(|s| s + window <= upto) {
        if !full.is_connected(start..start + window) {
            return Err(Error::HypothesisUnmet(format!(
                "collisions {}..{} do not form a connected collision graph",
                start + 1,
                start + window
            )));
        }
    }
    Ok(())
}

/// Time from `x0` to its next collision in forward time.
fn time_to_next(params: &SystemParams, x0: &PhasePoint, limit: f64) -> Result<f64> {
    Ok(next_collision(params, x0, limit)?.map_or(f64::INFINITY, |c| c.dt))
}

/// Searches the past of `x0` for a collision whose flat seed, pushed forward
/// to `x0`, grows by more than `l`.
pub fn expansion_certificate(
    params: &SystemParams,
    x0: &PhasePoint,
    l: f64,
    opts: &CertificateOptions,
) -> Result<Certificate> {
    let g = g_threshold(&MassMultiset::of(params));
    let back = simulate(params, &x0.time_reverse(), Stop::Collisions(opts.budget))?;
    let fwd = back.reversed(params)?;
    let n = back.events.len();

    for (kb, ev) in back.events.iter().enumerate() {
        if ev.rel_speed < g {
            continue;
        }
        let t = ev.t;
        if opts.selection == SelectionRule::ProofBound && 1.0 + t / params.radius * g <= l {
            continue;
        }
        let kf = n - 1 - kb;
        let seed = match lemma_3_7_seed(params, &fwd.contacts[kf], ev.pair, SeedMode::Flat) {
            Ok(s) => s,
            Err(Error::DegenerateSpan) => continue,
            Err(e) => return Err(e),
        };
        let segment = fwd.tail_from(kf);
        let (_, ln_end) = push(params, &seed, &segment)?;
        let ratio = (ln_end - seed.norm(params).ln()).exp();
        if !(ratio > l) {
            if opts.selection == SelectionRule::ProofBound {
                return Err(Error::ContractViolation(format!(
                    "seed at t = −{t:.6e} grew only by {ratio:.6e} although 1 + tG/r > {l}"
                )));
            }
            continue;
        }
        check_windows(params.n, &back, kb + 1, opts.richness_window)?;
        norm_equivalence_guard(params, x0, &back)?;
        return Ok(Certificate {
            kind: CertificateKind::Expansion,
            base: x0.clone(),
            t,
            seed_point: fwd.contacts[kf].clone(),
            seed,
            ratio,
            target_l: l,
            event_index: kb,
            rel_speed: ev.rel_speed,
            g_threshold: g,
            selection: opts.selection,
            segment,
        });
    }
    check_windows(params.n, &back, n, opts.richness_window)?;
    Err(Error::BudgetExhausted { budget: opts.budget })
}

/// `x0` must be at least half the smallest collision gap of the simulated
/// backward segment away from its nearest collisions.
fn norm_equivalence_guard(params: &SystemParams, x0: &PhasePoint, back: &TrajectorySegment) -> Result<()> {
    let eps = back.min_gap();
    let half = 0.5 * eps;
    let before = back.events[0].t;
    let after = if half.is_finite() { time_to_next(params, x0, half)? } else { f64::INFINITY };
    if before < half || after < half {
        return Err(Error::HypothesisUnmet(format!(
            "base point lies within {:.3e} of a collision, below half the minimal gap {eps:.3e}",
            before.min(after)
        )));
    }
    Ok(())
}

/// The time-reversal dual of [`expansion_certificate`]: a vector at `x0`
/// that shrinks below `1/l` in forward time.
pub fn contraction_certificate(
    params: &SystemParams,
    x0: &PhasePoint,
    l: f64,
    opts: &CertificateOptions,
) -> Result<Certificate> {
    let exp = expansion_certificate(params, &x0.time_reverse(), l, opts)?;
    let (end, _) = push(params, &exp.seed, &exp.segment)?;
    let n = end.norm(params);
    let seed = end.time_reverse().scaled(1.0 / n);
    let segment = exp.segment.reversed(params)?;
    let (_, ln_end) = push(params, &seed, &segment)?;
    let ratio = ln_end.exp();
    if !(ratio < 1.0 / l) {
        // rounding along the expanding directions grows like ε·ratio², which
        // swamps the contracting image once the expansion ratio passes ~1e8
        return Err(Error::ContractViolation(format!(
            "dual vector shrank only to {ratio:.3e} (expansion ratio {:.3e})",
            exp.ratio
        )));
    }
    Ok(Certificate {
        kind: CertificateKind::Contraction,
        base: x0.clone(),
        t: exp.t,
        seed_point: segment.x0.clone(),
        seed,
        ratio,
        target_l: l,
        event_index: exp.event_index,
        rel_speed: exp.rel_speed,
        g_threshold: exp.g_threshold,
        selection: exp.selection,
        segment,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    /// Largest mismatch between a replayed flight and the stored next state.
    pub max_flight_defect: f64,
    /// Largest `|‖q_i − q_j‖ − 2r|` over stored contacts.
    pub max_contact_defect: f64,
    pub ratio: f64,
    /// `|ratio / stored − 1|`.
    pub ratio_error: f64,
    pub passed: bool,
}

/// Tolerance of [`verify_certificate`] on the recomputed ratio.
pub const RATIO_TOLERANCE: f64 = 1e-9;
/// Tolerance on segment consistency (positions by minimum image, velocities).
pub const SEGMENT_TOLERANCE: f64 = 1e-9;

fn state_distance(a: &PhasePoint, b: &PhasePoint) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.n() {
        let d = min_image_delta(a.position(i), b.position(i));
        worst = worst.max(norm(&d));
    }
    a.v.iter().zip(&b.v).fold(worst, |m, (x, y)| m.max((x - y).abs()))
}

/// Re-checks a certificate from its stored data: the segment must be a
/// consistent billiard orbit from `seed_point` joining `base`, and the
/// re-propagated seed must reproduce the stored ratio.
pub fn verify_certificate(params: &SystemParams, cert: &Certificate) -> Result<Verification> {
    let seg = &cert.segment;
    let mut flight = state_distance(&seg.x0, &cert.seed_point);
    let mut contact = 0.0f64;
    let mut x = seg.x0.clone();
    let mut t = 0.0;
    for (k, (ev, pre)) in seg.events.iter().zip(&seg.contacts).enumerate() {
        flight = flight.max(state_distance(&free_flight(&x, ev.t - t), pre));
        contact = contact.max((norm(&pre.separation(ev.pair)) - 2.0 * params.radius).abs());
        x = seg.post_state(params, k)?;
        t = ev.t;
    }
    flight = flight.max(state_distance(&free_flight(&x, seg.t_end - t), &seg.x_end));
    let anchor = match cert.kind {
        CertificateKind::Expansion => &seg.x_end,
        CertificateKind::Contraction => &seg.x0,
    };
    flight = flight.max(state_distance(anchor, &cert.base));
    if (seg.t_end - cert.t).abs() > SEGMENT_TOLERANCE {
        flight = flight.max((seg.t_end - cert.t).abs());
    }

    // no re-projection here, so the ratio is recomputed along a different arithmetic path
    let opts = TraceOptions { samples_per_flight: 0, reproject: false };
    let last = propagate_along_with(params, &cert.seed, seg, &opts, |_| {})?.last;
    let ratio = (last.ln_norm(params) - cert.seed.norm(params).ln()).exp();
    let ratio_error = (ratio / cert.ratio - 1.0).abs();
    let meets = match cert.kind {
        CertificateKind::Expansion => ratio > cert.target_l,
        CertificateKind::Contraction => ratio < 1.0 / cert.target_l,
    };
    let passed =
        flight <= SEGMENT_TOLERANCE && contact <= SEGMENT_TOLERANCE && ratio_error <= RATIO_TOLERANCE && meets;
    Ok(Verification { max_flight_defect: flight, max_contact_defect: contact, ratio, ratio_error, passed })
}

/// Default look-ahead options used by certificate searches.
pub fn search_flow_options() -> FlowOptions {
    FlowOptions::default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{normalize_state, ToleranceSet};
    use crate::tangent::q_form;

    fn fixture() -> (SystemParams, PhasePoint) {
        let p = SystemParams::new(2, 0.1, vec![1.0, 1.0, 1.0], ToleranceSet::default()).unwrap();
        let x = normalize_state(&[0.1, 0.15, 0.52, 0.4, 0.3, 0.8], &[0.7, 0.2, -0.3, 0.9, -0.5, -0.6], &p).unwrap();
        (p, x)
    }

    #[test]
    fn transversal_basis_is_orthonormal() {
        let (p, x) = fixture();
        let basis = transversal_basis(&p, &x);
        assert_eq!(basis.len(), (p.n - 1) * p.nu - 1);
        for (a, u) in basis.iter().enumerate() {
            assert!(p.mass_inner(u, &x.v).abs() < 1e-12);
            assert!(p.metric().weighted_sum(u).iter().all(|c| c.abs() < 1e-12));
            for (b, w) in basis.iter().enumerate() {
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((p.mass_inner(u, w) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn depth_zero_is_flat() {
        let (p, x) = fixture();
        let b = approximate_unstable_b(&p, &x, 0).unwrap();
        assert_eq!(b.matrix.norm(), 0.0);
        assert_eq!(unstable_b_at_depth(&p, &x, 0).unwrap().matrix.norm(), 0.0);
    }

    #[test]
    fn b_is_symmetric_and_nonnegative() {
        let (p, x) = fixture();
        for depth in [1, 2, 5, 12] {
            let b = unstable_b_at_depth(&p, &x, depth).unwrap();
            assert!(b.symmetry_defect() < 1e-8, "depth {depth}: {}", b.symmetry_defect());
            assert!(b.eigenvalues()[0] > -1e-8, "depth {depth}");
        }
    }

    #[test]
    fn b_converges_and_stable_is_reversed_unstable() {
        let (p, x) = fixture();
        let b = approximate_unstable_b(&p, &x, 256).unwrap();
        assert!(b.last_change < B_TOLERANCE);
        let s = stable_subspace(&p, &x, 256).unwrap();
        assert_eq!(s, approximate_unstable_b(&p, &x.time_reverse(), 256).unwrap());
        let w = TangentVector { dq: transversal_basis(&p, &x)[0].clone(), dv: vec![0.0; 6] };
        let dv: Vec<f64> = s.apply(&w.dq).iter().map(|c| -c).collect();
        assert!(q_form(&p, &TangentVector { dq: w.dq, dv }) <= 0.0);
    }

    #[test]
    fn degenerate_seed_rejected() {
        let p = SystemParams::equal_masses(2, 2, 0.1).unwrap();
        let x = PhasePoint { nu: 2, q: vec![0.4, 0.5, 0.6, 0.5], v: vec![0.5, 0.0, -0.5, 0.0] };
        assert!(matches!(lemma_3_7_seed(&p, &x, Pair::new(0, 1), SeedMode::Flat), Err(Error::DegenerateSpan)));
        let still = PhasePoint { v: vec![0.0; 4], ..x.clone() };
        assert!(matches!(lemma_3_7_seed(&p, &still, Pair::new(0, 1), SeedMode::Flat), Err(Error::ZeroRelativeVelocity)));
        let apart = PhasePoint { q: vec![0.1, 0.5, 0.6, 0.5], ..x };
        assert!(matches!(lemma_3_7_seed(&p, &apart, Pair::new(0, 1), SeedMode::Flat), Err(Error::NotInContact { .. })));
    }

    #[test]
    fn flat_seed_constraints_and_curvature() {
        let p = SystemParams::new(2, 0.1, vec![1.0, 2.5, 0.6], ToleranceSet::default()).unwrap();
        let x = normalize_state(&[0.1, 0.15, 0.52, 0.4, 0.3, 0.8], &[0.7, 0.2, -0.3, 0.9, -0.5, -0.6], &p).unwrap();
        let seg = simulate(&p, &x, Stop::Collisions(20)).unwrap();
        for (ev, pre) in seg.events.iter().zip(&seg.contacts) {
            let w = lemma_3_7_seed(&p, pre, ev.pair, SeedMode::Flat).unwrap();
            assert!(p.metric().weighted_sum(&w.dq).iter().all(|c| c.abs() < 1e-15));
            assert!(p.mass_inner(&pre.v, &w.dq).abs() < 1e-14, "{}", p.mass_inner(&pre.v, &w.dq));
            let frame = build_frame(&p, pre, ev.pair).unwrap();
            let out = propagate_collision(&w, &frame);
            let curv = q_form(&p, &out) / out.norm_dq(&p).powi(2);
            let sharp = ev.rel_speed / (p.radius * ev.cos_phi);
            assert!((curv - sharp).abs() <= 1e-9 * sharp, "{curv} vs {sharp}");
        }
    }
}
