//! Event-driven billiard flow: free flight, pair-collision prediction on the
//! torus and elastic reflection in the mass metric.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Singularity};
use crate::phase_space::{dot, min_image_into, norm, wrap_unit, Pair, PhasePoint, SystemParams};

/// A predicted impact: after `dt` the pair touches with unit normal
/// `normal = (q_i − q_j)/2r` (minimum image).
#[derive(Debug, Clone, PartialEq)]
pub struct Contact {
    pub dt: f64,
    pub pair: Pair,
    pub normal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub t: f64,
    pub pair: Pair,
    /// `‖v_i − v_j‖`, identical before and after the impact.
    pub rel_speed: f64,
    /// Cosine of the angle between the outgoing relative velocity and the
    /// outward normal of the sphere `‖y‖ = 2r` at `y = q_i − q_j`.
    pub cos_phi: f64,
    pub contact_normal: Vec<f64>,
}

/// A simulated orbit segment. `contacts[k]` is the pre-collision state at
/// `events[k]`, so the segment can be replayed or reversed without
/// re-integrating the flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub x0: PhasePoint,
    pub t_end: f64,
    pub events: Vec<CollisionEvent>,
    pub contacts: Vec<PhasePoint>,
    pub x_end: PhasePoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stop {
    Time(f64),
    Collisions(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    /// Look-ahead window of a single collision query; re-issued as needed.
    pub horizon: f64,
    /// Collision-flood guard: this many consecutive collisions ...
    pub flood_count: usize,
    /// ... all separated by less than this time abort the run.
    pub flood_gap: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { horizon: 10.0, flood_count: 64, flood_gap: 1e-6 }
    }
}

/// Earliest collision within `horizon`, or `None`.
///
/// Every pair is tested against all lattice images whose `2r`-neighbourhood
/// meets the relative path `Δq + tΔv`, `t ∈ [0, horizon]`.
pub fn next_collision(params: &SystemParams, x: &PhasePoint, horizon: f64) -> Result<Option<Contact>> {
    let nu = params.nu;
    let r2 = 2.0 * params.radius;
    let diam_sq = r2 * r2;
    let mut dq0 = vec![0.0; nu];
    let mut dv = vec![0.0; nu];
    let mut delta = vec![0.0; nu];
    let mut lo = vec![0i64; nu];
    let mut hi = vec![0i64; nu];
    let mut k = vec![0i64; nu];

    // earliest impact per pair: (dt, pair, image separation at t = 0)
    let mut candidates: Vec<(f64, Pair, Vec<f64>)> = Vec::new();

    for pair in params.pairs() {
        min_image_into(x.position(pair.i), x.position(pair.j), &mut dq0);
        for ((d, a), b) in dv.iter_mut().zip(x.velocity(pair.i)).zip(x.velocity(pair.j)) {
            *d = a - b;
        }
        let a = dot(&dv, &dv);
        if a == 0.0 {
            continue;
        }
        for c in 0..nu {
            let end = dq0[c] + horizon * dv[c];
            lo[c] = (dq0[c].min(end) - r2).ceil() as i64;
            hi[c] = (dq0[c].max(end) + r2).floor() as i64;
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            continue;
        }

        let mut pair_best: Option<(f64, Vec<f64>)> = None;
        k.copy_from_slice(&lo);
        'images: loop {
            for c in 0..nu {
                delta[c] = dq0[c] - k[c] as f64;
            }
            if let Some(t) = contact_time(&delta, &dv, a, diam_sq) {
                if t <= horizon && pair_best.as_ref().is_none_or(|(b, _)| t < *b) {
                    pair_best = Some((t, delta.clone()));
                }
            }
            // odometer over the image box
            let mut c = 0;
            loop {
                if c == nu {
                    break 'images;
                }
                if k[c] < hi[c] {
                    k[c] += 1;
                    break;
                }
                k[c] = lo[c];
                c += 1;
            }
        }
        if let Some((t, sep)) = pair_best {
            candidates.push((t, pair, sep));
        }
    }

    let Some(first) = (0..candidates.len()).min_by(|&a, &b| candidates[a].0.total_cmp(&candidates[b].0)) else {
        return Ok(None);
    };
    let runner_up = candidates
        .iter()
        .enumerate()
        .filter(|(idx, _)| *idx != first)
        .map(|(_, c)| c.0)
        .fold(f64::INFINITY, f64::min);
    let (dt, pair, sep) = candidates.swap_remove(first);
    let rel: Vec<f64> = x.velocity(pair.i).iter().zip(x.velocity(pair.j)).map(|(a, b)| a - b).collect();
    let mut normal: Vec<f64> = sep.iter().zip(&rel).map(|(d, v)| d + dt * v).collect();
    let len = norm(&normal);
    normal.iter_mut().for_each(|c| *c /= len);

    let tol = &params.tolerances;
    if runner_up - dt < tol.singular_gap {
        return Err(Error::SingularOrbit { kind: Singularity::Simultaneous, t: dt });
    }
    let cos_phi = -dot(&rel, &normal) / norm(&rel);
    if cos_phi < tol.grazing_cos {
        return Err(Error::SingularOrbit { kind: Singularity::Grazing, t: dt });
    }
    Ok(Some(Contact { dt, pair, normal }))
}

/// Smallest non-negative root of `‖Δ + tΔv‖² = D²` on an approaching
/// branch, polished by one Newton step.
fn contact_time(delta: &[f64], dv: &[f64], a: f64, diam_sq: f64) -> Option<f64> {
    let b = dot(delta, dv);
    if b >= 0.0 {
        return None;
    }
    let c = dot(delta, delta) - diam_sq;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    // c / (−b + √disc) is the small root without cancellation
    let mut t = c / (-b + disc.sqrt());
    let mut p2 = 0.0;
    let mut pv = 0.0;
    for (d, v) in delta.iter().zip(dv) {
        let p = d + t * v;
        p2 += p * p;
        pv += p * v;
    }
    if pv < 0.0 {
        t -= (p2 - diam_sq) / (2.0 * pv);
    }
    Some(t.max(0.0))
}

/// Moves every ball by `dt·v_i` and wraps into the unit cell.
pub fn free_flight(x: &PhasePoint, dt: f64) -> PhasePoint {
    let q = x.q.iter().zip(&x.v).map(|(q, v)| wrap_unit(q + dt * v)).collect();
    PhasePoint { nu: x.nu, q, v: x.v.clone() }
}

/// Free flight with an admissibility check on the result.
pub fn advance_free(params: &SystemParams, x: &PhasePoint, dt: f64) -> Result<PhasePoint> {
    let y = free_flight(x, dt);
    y.check_admissible(params).map_err(|e| {
        Error::ContractViolation(format!("free flight of {dt} skipped a collision: {e}"))
    })?;
    Ok(y)
}

/// Mass-metric unit inner normal of `∂C_{ij}`: `√μ (e/m_i, −e/m_j)` on the
/// `(i, j)` blocks, zero elsewhere.
pub fn boundary_normal(params: &SystemParams, pair: Pair, e: &[f64]) -> Vec<f64> {
    let nu = params.nu;
    let s = params.reduced_mass(pair).sqrt();
    let mut n = vec![0.0; params.compound_len()];
    let (mi, mj) = (params.masses[pair.i], params.masses[pair.j]);
    for c in 0..nu {
        n[pair.i * nu + c] = s * e[c] / mi;
        n[pair.j * nu + c] = -s * e[c] / mj;
    }
    n
}

fn contact_slack(params: &SystemParams) -> f64 {
    1e4 * params.tolerances.contact_tol
}

/// Elastic collision as the mass-metric reflection `v⁺ = v⁻ − 2⟨v⁻, n⟩ n`.
pub fn resolve_collision(params: &SystemParams, x: &PhasePoint, pair: Pair, normal: &[f64]) -> Result<PhasePoint> {
    let distance = norm(&x.separation(pair));
    if (distance - 2.0 * params.radius).abs() > contact_slack(params) {
        return Err(Error::NotInContact { pair, distance });
    }
    let rel = x.relative_velocity(pair);
    if dot(&rel, normal) >= 0.0 {
        return Err(Error::Receding { pair });
    }
    let n = boundary_normal(params, pair, normal);
    let vn = params.mass_inner(&x.v, &n);
    let v = x.v.iter().zip(&n).map(|(v, n)| v - 2.0 * vn * n).collect();
    Ok(PhasePoint { nu: x.nu, q: x.q.clone(), v })
}

/// Describes the collision of `pair` in the pre-collision contact state `pre`.
pub fn describe_event(params: &SystemParams, pre: &PhasePoint, pair: Pair, t: f64) -> Result<CollisionEvent> {
    let sep = pre.separation(pair);
    let distance = norm(&sep);
    if (distance - 2.0 * params.radius).abs() > contact_slack(params) {
        return Err(Error::NotInContact { pair, distance });
    }
    let e: Vec<f64> = sep.iter().map(|c| c / distance).collect();
    let rel = pre.relative_velocity(pair);
    let rel_speed = norm(&rel);
    if rel_speed == 0.0 {
        return Err(Error::ZeroRelativeVelocity);
    }
    let cos_phi = -dot(&rel, &e) / rel_speed;
    Ok(CollisionEvent { t, pair, rel_speed, cos_phi, contact_normal: e })
}

pub fn simulate(params: &SystemParams, x0: &PhasePoint, stop: Stop) -> Result<TrajectorySegment> {
    simulate_with(params, x0, stop, &FlowOptions::default())
}

pub fn simulate_with(
    params: &SystemParams,
    x0: &PhasePoint,
    stop: Stop,
    opts: &FlowOptions,
) -> Result<TrajectorySegment> {
    let tol = &params.tolerances;
    let mut x = x0.clone();
    let mut t = 0.0;
    let mut events: Vec<CollisionEvent> = Vec::new();
    let mut contacts = Vec::new();
    let mut short_gaps = 0usize;

    loop {
        let remaining = match stop {
            Stop::Time(end) => end - t,
            Stop::Collisions(n) if events.len() >= n => break,
            Stop::Collisions(_) => f64::INFINITY,
        };
        if remaining <= 0.0 {
            break;
        }
        let window = opts.horizon.min(remaining);
        let Some(contact) = next_collision(params, &x, window)? else {
            x = free_flight(&x, window);
            t += window;
            continue;
        };
        if matches!(stop, Stop::Time(_)) && contact.dt >= remaining {
            x = free_flight(&x, remaining);
            t += remaining;
            break;
        }

        let t_hit = t + contact.dt;
        if let Some(last) = events.last() {
            let gap = t_hit - last.t;
            if gap < tol.singular_gap {
                return Err(Error::SingularOrbit { kind: Singularity::Simultaneous, t: t_hit });
            }
            short_gaps = if gap < opts.flood_gap { short_gaps + 1 } else { 0 };
            if short_gaps + 1 >= opts.flood_count {
                return Err(Error::CollisionFlood { count: opts.flood_count, window: opts.flood_gap });
            }
        }
        let pre = free_flight(&x, contact.dt);
        let event = describe_event(params, &pre, contact.pair, t_hit)?;
        if event.cos_phi < tol.grazing_cos {
            return Err(Error::SingularOrbit { kind: Singularity::Grazing, t: t_hit });
        }
        x = resolve_collision(params, &pre, contact.pair, &event.contact_normal)?;
        t = t_hit;
        events.push(event);
        contacts.push(pre);
    }
    if let Stop::Time(end) = stop {
        t = end;
    }
    Ok(TrajectorySegment { x0: x0.clone(), t_end: t, events, contacts, x_end: x })
}

impl TrajectorySegment {
    /// State immediately after collision `k`.
    pub fn post_state(&self, params: &SystemParams, k: usize) -> Result<PhasePoint> {
        resolve_collision(params, &self.contacts[k], self.events[k].pair, &self.events[k].contact_normal)
    }

    /// The same orbit traversed backwards: starts at `−x_end`, ends at `−x0`.
    /// Pre- and post-collision states swap roles, so no re-integration (and
    /// no chaotic error growth) is involved.
    pub fn reversed(&self, params: &SystemParams) -> Result<TrajectorySegment> {
        let mut events = Vec::with_capacity(self.events.len());
        let mut contacts = Vec::with_capacity(self.events.len());
        for k in (0..self.events.len()).rev() {
            let pre = self.post_state(params, k)?.time_reverse();
            events.push(describe_event(params, &pre, self.events[k].pair, self.t_end - self.events[k].t)?);
            contacts.push(pre);
        }
        Ok(TrajectorySegment {
            x0: self.x_end.time_reverse(),
            t_end: self.t_end,
            events,
            contacts,
            x_end: self.x0.time_reverse(),
        })
    }

    /// Sub-segment starting in the contact state of collision `k`, which
    /// becomes an event at `t = 0`.
    pub fn tail_from(&self, k: usize) -> TrajectorySegment {
        let t0 = self.events[k].t;
        self.shifted(self.contacts[k].clone(), t0, k)
    }

    /// Sub-segment starting just after collision `k`.
    pub fn tail_after(&self, params: &SystemParams, k: usize) -> Result<TrajectorySegment> {
        let t0 = self.events[k].t;
        Ok(self.shifted(self.post_state(params, k)?, t0, k + 1))
    }

    /// Sub-segment starting at time `t0` (strictly between collisions).
    pub fn tail_at_time(&self, params: &SystemParams, t0: f64) -> Result<TrajectorySegment> {
        let first = self.events.partition_point(|e| e.t <= t0);
        let (base, t_base) = match first {
            0 => (self.x0.clone(), 0.0),
            k => (self.post_state(params, k - 1)?, self.events[k - 1].t),
        };
        Ok(self.shifted(free_flight(&base, t0 - t_base), t0, first))
    }

    /// Prefix ending right after collision `k`.
    pub fn head_through(&self, params: &SystemParams, k: usize) -> Result<TrajectorySegment> {
        Ok(TrajectorySegment {
            x0: self.x0.clone(),
            t_end: self.events[k].t,
            events: self.events[..=k].to_vec(),
            contacts: self.contacts[..=k].to_vec(),
            x_end: self.post_state(params, k)?,
        })
    }

    fn shifted(&self, x0: PhasePoint, t0: f64, first: usize) -> TrajectorySegment {
        let events = self.events[first..]
            .iter()
            .map(|e| CollisionEvent { t: e.t - t0, ..e.clone() })
            .collect();
        TrajectorySegment {
            x0,
            t_end: self.t_end - t0,
            events,
            contacts: self.contacts[first..].to_vec(),
            x_end: self.x_end.clone(),
        }
    }

    /// Smallest time between consecutive collisions (infinite with < 2 events).
    pub fn min_gap(&self) -> f64 {
        self.events.windows(2).map(|w| w[1].t - w[0].t).fold(f64::INFINITY, f64::min)
    }
}

/// Writes `t,i,j,rel_speed,cos_phi` with 18 significant digits and 1-based labels.
pub fn write_events_csv<W: Write>(out: W, events: &[CollisionEvent]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "i", "j", "rel_speed", "cos_phi"]).map_err(csv_err)?;
    for e in events {
        w.write_record([
            format!("{:.17e}", e.t),
            (e.pair.i + 1).to_string(),
            (e.pair.j + 1).to_string(),
            format!("{:.17e}", e.rel_speed),
            format!("{:.17e}", e.cos_phi),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::ToleranceSet;
    use approx::assert_abs_diff_eq;

    fn head_on() -> (SystemParams, PhasePoint) {
        let p = SystemParams::equal_masses(2, 2, 0.1).unwrap();
        let x = PhasePoint { nu: 2, q: vec![0.2, 0.5, 0.8, 0.5], v: vec![1.0, 0.0, -1.0, 0.0] };
        (p, x)
    }

    #[test]
    fn head_on_direct_approach() {
        let (p, x) = head_on();
        let c = next_collision(&p, &x, 10.0).unwrap().unwrap();
        // balls close the direct gap 0.6 − 0.2 at speed 2
        assert_abs_diff_eq!(c.dt, 0.2, epsilon = 1e-14);
        assert_eq!(c.pair, Pair::new(0, 1));
        assert_abs_diff_eq!(c.normal[0], -1.0, epsilon = 1e-14);
    }

    #[test]
    fn head_on_across_the_seam() {
        let (p, mut x) = head_on();
        x.v = vec![-1.0, 0.0, 1.0, 0.0];
        let c = next_collision(&p, &x, 10.0).unwrap().unwrap();
        // minimum-image gap 0.4 through x = 0, contact at distance 0.2
        assert_abs_diff_eq!(c.dt, 0.1, epsilon = 1e-14);
        assert_abs_diff_eq!(c.normal[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn no_relative_motion_never_collides() {
        let p = SystemParams::equal_masses(2, 2, 0.1).unwrap();
        let x = PhasePoint { nu: 2, q: vec![0.2, 0.5, 0.6, 0.5], v: vec![0.3, 0.1, 0.3, 0.1] };
        assert_eq!(next_collision(&p, &x, 1e3).unwrap(), None);
    }

    #[test]
    fn exact_grazing_is_singular() {
        let p = SystemParams::equal_masses(2, 2, 0.1).unwrap();
        // ball 1 passes ball 2 with impact parameter exactly 2r = 0.2
        let x = PhasePoint { nu: 2, q: vec![0.25, 0.5, 0.5, 0.3], v: vec![1.0, 0.0, 0.0, 0.0] };
        let err = next_collision(&p, &x, 1.0).unwrap_err();
        assert!(matches!(err, Error::SingularOrbit { kind: Singularity::Grazing, .. }), "{err}");
    }

    #[test]
    fn unequal_masses_head_on_exchange() {
        let p = SystemParams::new(2, 0.1, vec![1.0, 3.0], ToleranceSet::default()).unwrap();
        let x = PhasePoint { nu: 2, q: vec![0.3, 0.5, 0.5, 0.5], v: vec![1.0, 0.0, -1.0, 0.0] };
        // normal points from j to i: q_1 − q_2 = (−0.2, 0)
        let y = resolve_collision(&p, &x, Pair::new(0, 1), &[-1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(y.v[0], -2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(y.v[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(y.v[2], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(y.v[3], 0.0, epsilon = 1e-15);
        assert_eq!(y.q, x.q);
    }

    #[test]
    fn equal_masses_swap_velocities() {
        let p = SystemParams::equal_masses(2, 2, 0.1).unwrap();
        let x = PhasePoint { nu: 2, q: vec![0.3, 0.5, 0.5, 0.5], v: vec![0.7, 0.0, -0.2, 0.0] };
        let y = resolve_collision(&p, &x, Pair::new(0, 1), &[-1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(y.v[0], -0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(y.v[2], 0.7, epsilon = 1e-15);
    }

    #[test]
    fn resolve_rejects_bad_contacts() {
        let p = SystemParams::equal_masses(2, 2, 0.1).unwrap();
        let apart = PhasePoint { nu: 2, q: vec![0.2, 0.5, 0.5, 0.5], v: vec![1.0, 0.0, -1.0, 0.0] };
        assert!(matches!(
            resolve_collision(&p, &apart, Pair::new(0, 1), &[-1.0, 0.0]),
            Err(Error::NotInContact { .. })
        ));
        let receding = PhasePoint { nu: 2, q: vec![0.3, 0.5, 0.5, 0.5], v: vec![-1.0, 0.0, 1.0, 0.0] };
        assert!(matches!(
            resolve_collision(&p, &receding, Pair::new(0, 1), &[-1.0, 0.0]),
            Err(Error::Receding { .. })
        ));
    }

    #[test]
    fn stop_before_first_collision() {
        let (p, x) = head_on();
        let seg = simulate(&p, &x, Stop::Time(0.05)).unwrap();
        assert!(seg.events.is_empty());
        assert_eq!(seg.x_end, advance_free(&p, &x, 0.05).unwrap());
    }

    #[test]
    fn advance_free_identity_and_additivity() {
        let (p, x) = head_on();
        assert_eq!(advance_free(&p, &x, 0.0).unwrap(), x);
        let ab = advance_free(&p, &advance_free(&p, &x, 0.03).unwrap(), 0.04).unwrap();
        let direct = advance_free(&p, &x, 0.07).unwrap();
        for (a, b) in ab.q.iter().zip(&direct.q) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        assert_eq!(ab.v, x.v);
    }

    #[test]
    fn advance_free_detects_skipped_collision() {
        let (p, x) = head_on();
        assert!(matches!(advance_free(&p, &x, 0.25), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn two_ball_system_only_has_one_pair() {
        let p = SystemParams::equal_masses(2, 2, 0.1).unwrap();
        let x = PhasePoint { nu: 2, q: vec![0.2, 0.5, 0.6, 0.3], v: vec![0.5, 0.31, -0.5, -0.31] };
        let seg = simulate(&p, &x, Stop::Collisions(20)).unwrap();
        assert_eq!(seg.events.len(), 20);
        assert!(seg.events.iter().all(|e| e.pair == Pair::new(0, 1)));
        assert!(seg.events.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn events_csv_layout() {
        let (p, x) = head_on();
        let seg = simulate(&p, &x, Stop::Collisions(1)).unwrap();
        let mut buf = Vec::new();
        write_events_csv(&mut buf, &seg.events).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,i,j,rel_speed,cos_phi"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[1], "1");
        assert_eq!(row[2], "2");
        assert!(row[0].starts_with("2.0000000000000"), "{}", row[0]);
        assert_eq!(row[3], "2.00000000000000000e0");
    }
}
