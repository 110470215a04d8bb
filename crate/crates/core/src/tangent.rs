//! Linearized flow `DS^t` on tangent vectors `(δq, δv)`.
//!
//! Between collisions `δq' = δq + t·δv`, `δv' = δv`. Through a reflection
//!
//! ```text
//! δq⁺ = R δq⁻
//! δv⁺ = R δv⁻ + 2 cos φ · R V* K V δq⁻
//! ```
//!
//! with `R` the mass-metric reflection across `T∂Q`, `V` the `v⁻`-parallel
//! projection onto `T∂Q`, `V*` its adjoint (the `n`-parallel projection onto
//! `(v⁻)^⊥`), `K` the second fundamental form of the cylinder `∂C_{ij}` and
//! `cos φ = ⟨n, v⁺⟩`.
//!
//! For the cylinder `‖q_i − q_j‖ = 2r` the inner unit normal is
//! `n = √μ (e/m_i, −e/m_j)` with `e` the unit center line and `μ` the
//! reduced mass, and differentiating it along a tangent `u` gives
//! `K u = (√μ/2r) (P(u_i − u_j)/m_i, −P(u_i − u_j)/m_j)`, `P` the projector
//! orthogonal to `e`. Hence `⟨u, K u⟩ = (√μ/2r) ‖P(u_i − u_j)‖² ≥ 0`.
//!
//! The formulas hold for any `δq⁻` (not only `δq⁻ ⊥ v⁻`): the velocity
//! direction lies in the kernel of `V` and is simply reflected.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{boundary_normal, csv_err, TrajectorySegment};
use crate::phase_space::{dot, norm, Pair, PhasePoint, SystemParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentVector {
    pub dq: Vec<f64>,
    pub dv: Vec<f64>,
}

impl TangentVector {
    pub fn zeros(len: usize) -> Self {
        Self { dq: vec![0.0; len], dv: vec![0.0; len] }
    }

    pub fn norm_dq(&self, params: &SystemParams) -> f64 {
        params.mass_norm(&self.dq)
    }

    pub fn norm_dv(&self, params: &SystemParams) -> f64 {
        params.mass_norm(&self.dv)
    }

    /// `‖(δq, δv)‖ = √(‖δq‖² + ‖δv‖²)` in the mass metric.
    pub fn norm(&self, params: &SystemParams) -> f64 {
        (params.mass_inner(&self.dq, &self.dq) + params.mass_inner(&self.dv, &self.dv)).sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { dq: self.dq.iter().map(|x| x * s).collect(), dv: self.dv.iter().map(|x| x * s).collect() }
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(x, y)| a * x + b * y).collect();
        Self { dq: mix(&self.dq, &other.dq), dv: mix(&self.dv, &other.dv) }
    }

    /// Time reversal on tangent vectors: `(δq, δv) ↦ (δq, −δv)`.
    pub fn time_reverse(&self) -> Self {
        Self { dq: self.dq.clone(), dv: self.dv.iter().map(|x| -x).collect() }
    }

    /// Largest violation of `Σ m δq = Σ m δv = 0` and `⟨v, δv⟩ = 0`,
    /// relative to `‖w‖` (and `‖v‖`).
    pub fn constraint_defect(&self, params: &SystemParams, base: &PhasePoint) -> f64 {
        let metric = params.metric();
        let scale = self.norm(params).max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for part in [&self.dq, &self.dv] {
            for c in metric.weighted_sum(part) {
                worst = worst.max(c.abs() / scale);
            }
        }
        let vn = params.mass_norm(&base.v).max(f64::MIN_POSITIVE);
        worst.max(params.mass_inner(&base.v, &self.dv).abs() / (scale * vn))
    }
}

/// `Q(δq, δv) = ⟨δq, δv⟩`.
pub fn q_form(params: &SystemParams, w: &TangentVector) -> f64 {
    params.mass_inner(&w.dq, &w.dv)
}

pub fn propagate_free(w: &TangentVector, dt: f64) -> TangentVector {
    TangentVector {
        dq: w.dq.iter().zip(&w.dv).map(|(q, v)| q + dt * v).collect(),
        dv: w.dv.clone(),
    }
}

/// Operators of the reflection at a collision of `pair`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionFrame {
    pub pair: Pair,
    /// Mass-metric unit inner normal `n` of `∂Q`.
    pub normal: Vec<f64>,
    /// Unit center line `e = (q_i − q_j)/‖q_i − q_j‖`.
    pub center_line: Vec<f64>,
    pub v_minus: Vec<f64>,
    /// `⟨n, v⁺⟩ = −⟨n, v⁻⟩ > 0`.
    pub cos_phi: f64,
    masses: Vec<f64>,
    nu: usize,
    /// `√μ / ‖q_i − q_j‖`.
    curvature_scale: f64,
}

pub fn build_frame(params: &SystemParams, x: &PhasePoint, pair: Pair) -> Result<CollisionFrame> {
    let sep = x.separation(pair);
    let distance = norm(&sep);
    if (distance - 2.0 * params.radius).abs() > 1e4 * params.tolerances.contact_tol {
        return Err(Error::NotInContact { pair, distance });
    }
    let e: Vec<f64> = sep.iter().map(|c| c / distance).collect();
    let rel = x.relative_velocity(pair);
    let rel_speed = norm(&rel);
    if rel_speed == 0.0 {
        return Err(Error::ZeroRelativeVelocity);
    }
    let rel_cos = -dot(&rel, &e) / rel_speed;
    if rel_cos <= 0.0 {
        return Err(Error::Receding { pair });
    }
    if rel_cos < params.tolerances.grazing_cos {
        return Err(Error::Grazing { cos_phi: rel_cos });
    }
    let normal = boundary_normal(params, pair, &e);
    let cos_phi = -params.mass_inner(&normal, &x.v);
    Ok(CollisionFrame {
        pair,
        normal,
        center_line: e,
        v_minus: x.v.clone(),
        cos_phi,
        masses: params.masses.clone(),
        nu: params.nu,
        curvature_scale: params.reduced_mass(pair).sqrt() / distance,
    })
}

impl CollisionFrame {
    fn inner(&self, u: &[f64], w: &[f64]) -> f64 {
        u.chunks_exact(self.nu).zip(w.chunks_exact(self.nu)).zip(&self.masses).map(|((a, b), m)| m * dot(a, b)).sum()
    }

    /// `R u = u − 2⟨u, n⟩ n`.
    pub fn reflect(&self, u: &[f64]) -> Vec<f64> {
        let s = 2.0 * self.inner(u, &self.normal);
        u.iter().zip(&self.normal).map(|(u, n)| u - s * n).collect()
    }

    /// `V u = u − (⟨n, u⟩/⟨n, v⁻⟩) v⁻`, the `v⁻`-parallel projection onto `T∂Q`.
    pub fn project_along_velocity(&self, u: &[f64]) -> Vec<f64> {
        let s = self.inner(&self.normal, u) / -self.cos_phi;
        u.iter().zip(&self.v_minus).map(|(u, v)| u - s * v).collect()
    }

    /// `V* u = u − (⟨u, v⁻⟩/⟨n, v⁻⟩) n`, the `n`-parallel projection onto `(v⁻)^⊥`.
    pub fn project_along_normal(&self, u: &[f64]) -> Vec<f64> {
        let s = self.inner(u, &self.v_minus) / -self.cos_phi;
        u.iter().zip(&self.normal).map(|(u, n)| u - s * n).collect()
    }

    /// Second fundamental form `K` of `∂C_{ij}` with respect to `n`.
    pub fn curvature(&self, u: &[f64]) -> Vec<f64> {
        let (i, j, nu) = (self.pair.i, self.pair.j, self.nu);
        let mut rel: Vec<f64> = (0..nu).map(|c| u[i * nu + c] - u[j * nu + c]).collect();
        let along = dot(&rel, &self.center_line);
        for (r, e) in rel.iter_mut().zip(&self.center_line) {
            *r -= along * e;
        }
        let mut out = vec![0.0; u.len()];
        for c in 0..nu {
            out[i * nu + c] = self.curvature_scale * rel[c] / self.masses[i];
            out[j * nu + c] = -self.curvature_scale * rel[c] / self.masses[j];
        }
        out
    }

    /// `2 cos φ ⟨V δq, K V δq⟩`, the jump of `Q` across the reflection.
    pub fn q_jump(&self, dq: &[f64]) -> f64 {
        let vdq = self.project_along_velocity(dq);
        2.0 * self.cos_phi * self.inner(&vdq, &self.curvature(&vdq))
    }
}

pub fn propagate_collision(w: &TangentVector, frame: &CollisionFrame) -> TangentVector {
    let kv = frame.curvature(&frame.project_along_velocity(&w.dq));
    let source = frame.project_along_normal(&kv);
    let dv: Vec<f64> = w.dv.iter().zip(&source).map(|(dv, s)| dv + 2.0 * frame.cos_phi * s).collect();
    TangentVector { dq: frame.reflect(&w.dq), dv: frame.reflect(&dv) }
}

/// Frames of every collision of a segment.
pub fn segment_frames(params: &SystemParams, seg: &TrajectorySegment) -> Result<Vec<CollisionFrame>> {
    seg.events.iter().zip(&seg.contacts).map(|(e, x)| build_frame(params, x, e.pair)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Pre,
    Post,
    Flight,
}

impl Side {
    pub fn as_str(&self) -> &'static str {
        match self {
            Side::Pre => "pre",
            Side::Post => "post",
            Side::Flight => "flight",
        }
    }
}

/// One record of a tangent trace. The true vector is `w · 2^scale_exp`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub side: Side,
    pub w: TangentVector,
    /// `Q(w)` of the stored (rescaled) vector.
    pub q: f64,
    pub scale_exp: i32,
}

impl TraceSample {
    /// `log ‖δq_t‖` of the true vector.
    pub fn ln_norm_dq(&self, params: &SystemParams) -> f64 {
        self.w.norm_dq(params).ln() + self.scale_exp as f64 * std::f64::consts::LN_2
    }

    pub fn ln_norm(&self, params: &SystemParams) -> f64 {
        self.w.norm(params).ln() + self.scale_exp as f64 * std::f64::consts::LN_2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    /// Interior samples per free flight.
    pub samples_per_flight: usize,
    /// Re-project onto `Σ m δ· = 0`, `⟨v, δv⟩ = 0` after every collision.
    pub reproject: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { samples_per_flight: 8, reproject: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationSummary {
    pub last: TraceSample,
    /// Largest correction applied by re-projection, relative to `‖w‖`.
    pub max_projection_residual: f64,
    /// `|⟨v, δq⟩| / (‖v‖ ‖δq‖)` of the seed; non-zero means the seed is not
    /// on the transversal section.
    pub seed_velocity_component: f64,
    pub samples: usize,
}

const RESCALE_EXP: i32 = 256;

fn rescale(w: &mut TangentVector, exp: &mut i32, params: &SystemParams) {
    // powers of two keep the mantissas bit-exact
    let big = 2f64.powi(RESCALE_EXP);
    while w.norm(params) > big {
        *w = w.scaled(2f64.powi(-RESCALE_EXP));
        *exp += RESCALE_EXP;
    }
}

/// Pushes `w0` along `seg`, calling `visit` on every sample: the start,
/// `samples_per_flight` interior points of each flight, both sides of every
/// collision and the end point.
pub fn propagate_along_with<F: FnMut(&TraceSample)>(
    params: &SystemParams,
    w0: &TangentVector,
    seg: &TrajectorySegment,
    opts: &TraceOptions,
    mut visit: F,
) -> Result<PropagationSummary> {
    let defect = w0.constraint_defect(params, &seg.x0);
    if defect > 1e-10 {
        return Err(Error::ContractViolation(format!(
            "tangent seed violates the translation/energy constraints by {defect:.3e}"
        )));
    }
    let seed_velocity_component = {
        let d = params.mass_norm(&w0.dq) * params.mass_norm(&seg.x0.v);
        if d > 0.0 {
            params.mass_inner(&w0.dq, &seg.x0.v).abs() / d
        } else {
            0.0
        }
    };

    let mut w = w0.clone();
    let mut exp = 0i32;
    let mut t = 0.0;
    let mut count = 0usize;
    let mut max_residual = 0.0f64;
    let mut emit = |t: f64, side: Side, w: &TangentVector, exp: i32| {
        let s = TraceSample { t, side, w: w.clone(), q: q_form(params, w), scale_exp: exp };
        visit(&s);
        s
    };
    let mut last = emit(0.0, Side::Flight, &w, exp);
    count += 1;

    for (event, pre) in seg.events.iter().zip(&seg.contacts) {
        count += fly(&mut w, exp, t, event.t, opts.samples_per_flight, &mut emit);
        t = event.t;
        let frame = build_frame(params, pre, event.pair)?;
        emit(t, Side::Pre, &w, exp);
        w = propagate_collision(&w, &frame);
        if opts.reproject {
            let post_v = frame.reflect(&pre.v);
            let before = w.clone();
            reproject(params, &mut w, &post_v);
            let moved = before.combine(1.0, &w, -1.0).norm(params);
            max_residual = max_residual.max(moved / w.norm(params).max(f64::MIN_POSITIVE));
        }
        rescale(&mut w, &mut exp, params);
        last = emit(t, Side::Post, &w, exp);
        count += 2;
    }
    count += fly(&mut w, exp, t, seg.t_end, opts.samples_per_flight, &mut emit);
    if seg.t_end > t || seg.events.is_empty() {
        last = emit(seg.t_end, Side::Flight, &w, exp);
        count += 1;
    }
    Ok(PropagationSummary { last, max_projection_residual: max_residual, seed_velocity_component, samples: count })
}

fn fly<F: FnMut(f64, Side, &TangentVector, i32) -> TraceSample>(
    w: &mut TangentVector,
    exp: i32,
    from: f64,
    to: f64,
    n: usize,
    emit: &mut F,
) -> usize {
    let dt = to - from;
    if dt <= 0.0 {
        return 0;
    }
    for k in 1..=n {
        let s = dt * k as f64 / (n + 1) as f64;
        emit(from + s, Side::Flight, &propagate_free(w, s), exp);
    }
    *w = propagate_free(w, dt);
    n
}

/// Collects the full trace of [`propagate_along_with`].
pub fn propagate_along(
    params: &SystemParams,
    w0: &TangentVector,
    seg: &TrajectorySegment,
    opts: &TraceOptions,
) -> Result<Vec<TraceSample>> {
    let mut out = Vec::new();
    propagate_along_with(params, w0, seg, opts, |s| out.push(s.clone()))?;
    Ok(out)
}

pub(crate) fn reproject(params: &SystemParams, w: &mut TangentVector, v: &[f64]) {
    let metric = params.metric();
    metric.remove_translation(&mut w.dq);
    metric.remove_translation(&mut w.dv);
    let s = params.mass_inner(v, &w.dv) / params.mass_inner(v, v);
    for (d, v) in w.dv.iter_mut().zip(v) {
        *d -= s * v;
    }
}

/// Writes `t,side,Q,norm_dq,norm_dv,log2_scale`. Values are those of the
/// stored vector; the true vector is the stored one times `2^log2_scale`.
pub fn write_trace_csv<W: Write>(out: W, params: &SystemParams, samples: &[TraceSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "side", "Q", "norm_dq", "norm_dv", "log2_scale"]).map_err(csv_err)?;
    for s in samples {
        w.write_record([
            format!("{:.17e}", s.t),
            s.side.as_str().to_string(),
            format!("{:.17e}", s.q),
            format!("{:.17e}", s.w.norm_dq(params)),
            format!("{:.17e}", s.w.norm_dv(params)),
            s.scale_exp.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
