//! Hard balls on the flat torus `T^ν = R^ν / Z^ν`.
//!
//! Positions and velocities are stored as *compound vectors*: flat slices of
//! length `N·ν`, ball `i` occupying `[i·ν, (i+1)·ν)`. All inner products on
//! compound vectors use the kinetic-energy metric `⟨u, w⟩ = Σ m_i ⟨u_i, w_i⟩`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical guards shared by the simulator and the tangent dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceSet {
    /// Root-finding tolerance for collision times and contact distances.
    pub contact_tol: f64,
    /// Minimum time between distinct collisions.
    pub singular_gap: f64,
    /// Minimum `cos φ` of an impact.
    pub grazing_cos: f64,
    pub conservation_tol: f64,
}

impl Default for ToleranceSet {
    fn default() -> Self {
        Self {
            contact_tol: 1e-12,
            singular_gap: 1e-9,
            grazing_cos: 1e-6,
            conservation_tol: 1e-9,
        }
    }
}

impl ToleranceSet {
    fn validate(&self) -> Result<()> {
        let all = [
            ("contact_tol", self.contact_tol),
            ("singular_gap", self.singular_gap),
            ("grazing_cos", self.grazing_cos),
            ("conservation_tol", self.conservation_tol),
        ];
        for (name, value) in all {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {value}")));
            }
        }
        Ok(())
    }
}

/// Unordered pair of ball labels, stored with `i < j` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
}

impl Pair {
    /// Normalizes the order. Panics if `a == b`.
    pub fn new(a: usize, b: usize) -> Self {
        assert_ne!(a, b, "a collision pair needs two distinct balls");
        Self { i: a.min(b), j: a.max(b) }
    }

    pub fn contains(&self, k: usize) -> bool {
        self.i == k || self.j == k
    }
}

impl std::fmt::Display for Pair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.i + 1, self.j + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub n: usize,
    pub nu: usize,
    pub radius: f64,
    pub masses: Vec<f64>,
    pub total_mass: f64,
    pub min_mass: f64,
    pub tolerances: ToleranceSet,
}

impl SystemParams {
    pub fn new(nu: usize, radius: f64, masses: Vec<f64>, tolerances: ToleranceSet) -> Result<Self> {
        let n = masses.len();
        if n < 2 {
            return Err(Error::InvalidParams(format!("need at least 2 balls, got {n}")));
        }
        if nu < 2 {
            return Err(Error::InvalidParams(format!("torus dimension must be at least 2, got {nu}")));
        }
        if !(radius.is_finite() && radius > 0.0 && radius < 0.25) {
            return Err(Error::InvalidParams(format!("radius must lie in (0, 1/4), got {radius}")));
        }
        if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::InvalidParams(format!("masses must be positive, got {m}")));
        }
        tolerances.validate()?;
        let total_mass = masses.iter().sum();
        let min_mass = masses.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self { n, nu, radius, masses, total_mass, min_mass, tolerances })
    }

    /// `N` unit masses with default tolerances.
    pub fn equal_masses(n: usize, nu: usize, radius: f64) -> Result<Self> {
        Self::new(nu, radius, vec![1.0; n], ToleranceSet::default())
    }

    /// Dimension `d = ν(N−1)` of the factored configuration space.
    pub fn dim(&self) -> usize {
        self.nu * (self.n - 1)
    }

    /// Length `N·ν` of a compound vector.
    pub fn compound_len(&self) -> usize {
        self.n * self.nu
    }

    pub fn metric(&self) -> MassMetric<'_> {
        MassMetric { masses: &self.masses, nu: self.nu }
    }

    pub fn mass_inner(&self, u: &[f64], w: &[f64]) -> f64 {
        self.metric().inner(u, w)
    }

    pub fn mass_norm(&self, u: &[f64]) -> f64 {
        self.metric().norm(u)
    }

    /// Reduced mass `m_i m_j / (m_i + m_j)` of a pair.
    pub fn reduced_mass(&self, pair: Pair) -> f64 {
        let (a, b) = (self.masses[pair.i], self.masses[pair.j]);
        a * b / (a + b)
    }

    pub fn pairs(&self) -> impl Iterator<Item = Pair> + '_ {
        (0..self.n).flat_map(move |i| (i + 1..self.n).map(move |j| Pair { i, j }))
    }
}

/// The kinetic-energy metric on compound vectors.
#[derive(Debug, Clone, Copy)]
pub struct MassMetric<'a> {
    pub masses: &'a [f64],
    pub nu: usize,
}

impl MassMetric<'_> {
    /// `Σ m_i ⟨u_i, w_i⟩`. Panics on a dimension mismatch.
    pub fn inner(&self, u: &[f64], w: &[f64]) -> f64 {
        let len = self.masses.len() * self.nu;
        assert!(
            u.len() == len && w.len() == len,
            "compound vectors must have length {len} (got {} and {})",
            u.len(),
            w.len()
        );
        u.chunks_exact(self.nu)
            .zip(w.chunks_exact(self.nu))
            .zip(self.masses)
            .map(|((a, b), m)| m * dot(a, b))
            .sum()
    }

    pub fn norm_sq(&self, u: &[f64]) -> f64 {
        self.inner(u, u)
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.norm_sq(u).sqrt()
    }

    /// Mass-weighted sum `Σ m_i u_i ∈ R^ν`.
    pub fn weighted_sum(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nu];
        for (ball, m) in u.chunks_exact(self.nu).zip(self.masses) {
            for (o, x) in out.iter_mut().zip(ball) {
                *o += m * x;
            }
        }
        out
    }

    /// Removes the uniform-translation component, leaving `Σ m_i u_i = 0`.
    pub fn remove_translation(&self, u: &mut [f64]) {
        let total: f64 = self.masses.iter().sum();
        let mean: Vec<f64> = self.weighted_sum(u).into_iter().map(|s| s / total).collect();
        for ball in u.chunks_exact_mut(self.nu) {
            for (x, c) in ball.iter_mut().zip(&mean) {
                *x -= c;
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Representative of `a − b (mod 1)` with every component in `[−½, ½)`.
pub fn min_image_delta(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    min_image_into(a, b, &mut out);
    out
}

pub(crate) fn min_image_into(a: &[f64], b: &[f64], out: &mut [f64]) {
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        let d = x - y;
        let mut w = d - (d + 0.5).floor();
        // floor rounding can leave w = 0.5 exactly for d just below a half-integer
        if w >= 0.5 {
            w -= 1.0;
        }
        *o = w;
    }
}

/// Wraps a coordinate into `[0, 1)`.
pub(crate) fn wrap_unit(x: f64) -> f64 {
    let y = x.rem_euclid(1.0);
    if y >= 1.0 {
        0.0
    } else {
        y
    }
}

/// A point `(q, v)` of the phase space; `q ∈ [0,1)^{Nν}`, `v ∈ R^{Nν}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub nu: usize,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

impl PhasePoint {
    pub fn n(&self) -> usize {
        self.q.len() / self.nu
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.q[i * self.nu..(i + 1) * self.nu]
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.v[i * self.nu..(i + 1) * self.nu]
    }

    /// Minimum-image separation `q_i − q_j`.
    pub fn separation(&self, pair: Pair) -> Vec<f64> {
        min_image_delta(self.position(pair.i), self.position(pair.j))
    }

    pub fn relative_velocity(&self, pair: Pair) -> Vec<f64> {
        self.velocity(pair.i).iter().zip(self.velocity(pair.j)).map(|(a, b)| a - b).collect()
    }

    pub fn relative_speed(&self, pair: Pair) -> f64 {
        norm(&self.relative_velocity(pair))
    }

    pub fn kinetic_energy(&self, params: &SystemParams) -> f64 {
        0.5 * params.mass_inner(&self.v, &self.v)
    }

    pub fn momentum(&self, params: &SystemParams) -> Vec<f64> {
        params.metric().weighted_sum(&self.v)
    }

    /// Largest deviation of the normalization invariants: `max(|E − ½|, max_c |I_c|)`.
    pub fn normalization_defect(&self, params: &SystemParams) -> f64 {
        let e = (self.kinetic_energy(params) - 0.5).abs();
        self.momentum(params).into_iter().fold(e, |acc, c| acc.max(c.abs()))
    }

    pub fn check_admissible(&self, params: &SystemParams) -> Result<()> {
        let limit = 2.0 * params.radius - params.tolerances.contact_tol;
        for pair in params.pairs() {
            let distance = norm(&self.separation(pair));
            if distance < limit {
                return Err(Error::InadmissibleConfiguration { pair, distance });
            }
        }
        Ok(())
    }

    /// `−x = (q, −v)`.
    pub fn time_reverse(&self) -> PhasePoint {
        PhasePoint { nu: self.nu, q: self.q.clone(), v: self.v.iter().map(|x| -x).collect() }
    }
}

/// Wraps `q` into the unit cell, removes the total momentum and rescales
/// to `E = ½`.
///
/// Input that already satisfies both velocity invariants to 1e−15 is
/// returned unchanged.
pub fn normalize_state(q: &[f64], v_raw: &[f64], params: &SystemParams) -> Result<PhasePoint> {
    let len = params.compound_len();
    if q.len() != len || v_raw.len() != len {
        return Err(Error::ContractViolation(format!(
            "expected compound vectors of length {len}, got {} and {}",
            q.len(),
            v_raw.len()
        )));
    }
    let mut x = PhasePoint {
        nu: params.nu,
        q: q.iter().map(|&c| wrap_unit(c)).collect(),
        v: v_raw.to_vec(),
    };
    x.check_admissible(params)?;
    if x.normalization_defect(params) <= 1e-15 {
        return Ok(x);
    }

    let metric = params.metric();
    metric.remove_translation(&mut x.v);
    let two_e = metric.norm_sq(&x.v);
    let raw_scale = metric.norm_sq(v_raw);
    if !(two_e > 0.0) || two_e <= 1e-24 * raw_scale {
        return Err(Error::ZeroEnergy);
    }
    let s = two_e.sqrt();
    for c in &mut x.v {
        *c /= s;
    }
    // second pass cleans up the cancellation residue of the first
    metric.remove_translation(&mut x.v);
    let s = metric.norm(&x.v);
    for c in &mut x.v {
        *c /= s;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn params3() -> SystemParams {
        SystemParams::equal_masses(3, 2, 0.1).unwrap()
    }

    #[test]
    fn mass_inner_examples() {
        let p = SystemParams::new(2, 0.1, vec![2.0, 3.0], ToleranceSet::default()).unwrap();
        let u = [1.0, 0.0, 0.0, 1.0];
        assert_eq!(p.mass_inner(&u, &u), 5.0);
        assert_eq!(p.mass_inner(&[0.0; 4], &u), 0.0);
    }

    #[test]
    #[should_panic(expected = "compound vectors")]
    fn mass_inner_dimension_mismatch_panics() {
        params3().mass_inner(&[1.0, 2.0], &[1.0, 2.0]);
    }

    #[test]
    fn normalized_velocity_has_unit_mass_norm() {
        let p = params3();
        let q = [0.1, 0.1, 0.5, 0.5, 0.8, 0.2];
        let x = normalize_state(&q, &[0.3, -1.0, 2.0, 0.5, -0.7, 0.1], &p).unwrap();
        assert_abs_diff_eq!(p.mass_inner(&x.v, &x.v), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn min_image_examples() {
        let d = min_image_delta(&[0.95, 0.0], &[0.05, 0.0]);
        assert_abs_diff_eq!(d[0], -0.1, epsilon = 1e-15);
        assert_eq!(d[1], 0.0);
        assert_abs_diff_eq!(norm(&d), 0.1, epsilon = 1e-15);

        assert_eq!(min_image_delta(&[0.3, 0.7], &[0.3, 0.7]), vec![0.0, 0.0]);
        assert_eq!(min_image_delta(&[0.25, 0.5], &[0.75, 0.5]), vec![-0.5, 0.0]);
        assert_eq!(min_image_delta(&[0.75, 0.5], &[0.25, 0.5]), vec![-0.5, 0.0]);
    }

    #[test]
    fn normalize_rejects_uniform_velocities() {
        let q = [0.1, 0.1, 0.5, 0.5, 0.8, 0.2];
        let v = [0.3, -0.2, 0.3, -0.2, 0.3, -0.2];
        assert!(matches!(normalize_state(&q, &v, &params3()), Err(Error::ZeroEnergy)));
    }

    #[test]
    fn normalize_rejects_overlap() {
        let q = [0.1, 0.1, 0.15, 0.1, 0.8, 0.2];
        let v = [1.0, 0.0, 0.0, 1.0, -1.0, 0.0];
        let err = normalize_state(&q, &v, &params3()).unwrap_err();
        assert!(matches!(err, Error::InadmissibleConfiguration { pair: Pair { i: 0, j: 1 }, .. }));
    }

    #[test]
    fn normalize_is_idempotent() {
        let p = params3();
        let q = [0.1, 0.1, 0.5, 0.5, 0.8, 0.2];
        let x = normalize_state(&q, &[0.3, -1.0, 2.0, 0.5, -0.7, 0.1], &p).unwrap();
        let y = normalize_state(&x.q, &x.v, &p).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn params_validation() {
        assert!(SystemParams::equal_masses(1, 2, 0.1).is_err());
        assert!(SystemParams::equal_masses(3, 1, 0.1).is_err());
        assert!(SystemParams::equal_masses(3, 2, 0.25).is_err());
        assert!(SystemParams::new(2, 0.1, vec![1.0, 0.0], ToleranceSet::default()).is_err());
        let p = SystemParams::new(3, 0.1, vec![1.0, 2.0, 0.5, 4.0], ToleranceSet::default()).unwrap();
        assert_eq!(p.total_mass, 7.5);
        assert_eq!(p.min_mass, 0.5);
        assert_eq!(p.dim(), 9);
    }

    proptest! {
        #[test]
        fn mass_inner_is_symmetric(
            u in prop::collection::vec(-10.0f64..10.0, 6),
            w in prop::collection::vec(-10.0f64..10.0, 6),
        ) {
            let p = SystemParams::new(2, 0.1, vec![1.0, 2.5, 0.3], ToleranceSet::default()).unwrap();
            prop_assert_eq!(p.mass_inner(&u, &w), p.mass_inner(&w, &u));
            prop_assert!(p.mass_inner(&u, &u) >= 0.0);
        }

        #[test]
        fn min_image_components_in_half_open_interval(
            a in prop::collection::vec(0.0f64..1.0, 3),
            b in prop::collection::vec(0.0f64..1.0, 3),
        ) {
            for c in min_image_delta(&a, &b) {
                prop_assert!((-0.5..0.5).contains(&c));
            }
        }

        #[test]
        fn normalize_meets_invariants(v in prop::collection::vec(-5.0f64..5.0, 6)) {
            let p = SystemParams::new(2, 0.1, vec![1.0, 2.0, 3.0], ToleranceSet::default()).unwrap();
            let q = [0.1, 0.1, 0.5, 0.5, 0.8, 0.2];
            match normalize_state(&q, &v, &p) {
                Ok(x) => {
                    for c in x.momentum(&p) {
                        prop_assert!(c.abs() <= 1e-14);
                    }
                    prop_assert!((x.kinetic_energy(&p) - 0.5).abs() <= 1e-14);
                }
                Err(Error::ZeroEnergy) => {}
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }

        #[test]
        fn time_reverse_is_an_exact_involution(v in prop::collection::vec(-5.0f64..5.0, 6)) {
            let p = params3();
            let x = PhasePoint { nu: 2, q: vec![0.1, 0.1, 0.5, 0.5, 0.8, 0.2], v };
            let back = x.time_reverse().time_reverse();
            prop_assert_eq!(&back, &x);
            prop_assert_eq!(x.time_reverse().kinetic_energy(&p), x.kinetic_energy(&p));
        }
    }
}
