//! Self-shrinking `S^1 × S^{n-1}` profiles by one-parameter shooting.
//!
//! The profile of a rotationally symmetric self-shrinker is a geodesic of the
//! conformal metric `λ² (dx² + dr²)` with `λ = r^{n-1} exp(-(x² + r²)/4)`.
//! Instead of the geodesic equation we integrate the equivalent arc-length
//! ODE for the tangent angle,
//!
//! ```text
//! x' = cos θ,   r' = sin θ,   θ' = κ = <X, ν>/2 - (n-1) ν_r / r,
//! ```
//!
//! with `ν = (sin θ, -cos θ)` the outward normal of a counterclockwise profile.
//! Shots start on the symmetry plane at `(0, r0)` heading in `+x`; a closed
//! profile symmetric under `x -> -x` is obtained when the trajectory comes back
//! to the plane perpendicularly.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::{geometry_bundle, Point, ProfileCurve, Topology};

/// Angenent's conformal factor `λ(x, r) = r^{n-1} e^{-(x² + r²)/4}`.
pub fn conformal_factor(p: Point, n: usize) -> Result<f64> {
    if !(p.r > 0.0) {
        return Err(LabError::NonPositiveRadius { index: 0, r: p.r });
    }
    Ok(p.r.powi(n as i32 - 1) * (-(p.x * p.x + p.r * p.r) / 4.0).exp())
}

/// `∇ log λ = (-x/2, (n-1)/r - r/2)`.
pub fn log_conformal_gradient(p: Point, n: usize) -> Point {
    Point::new(-0.5 * p.x, (n as f64 - 1.0) / p.r - 0.5 * p.r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootState {
    pub x: f64,
    pub r: f64,
    /// Tangent angle against `+x`, unwrapped during integration.
    pub theta: f64,
    pub s: f64,
}

impl ShootState {
    pub fn position(&self) -> Point {
        Point::new(self.x, self.r)
    }

    /// Tangent angle reduced to `(-π, π]`.
    pub fn normalized_theta(&self) -> f64 {
        wrap_angle(self.theta)
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// `(dx/ds, dr/ds, dθ/ds)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootDerivative {
    pub dx: f64,
    pub dr: f64,
    pub dtheta: f64,
}

pub fn shrinker_ode_rhs(state: &ShootState, n: usize, r_floor: f64) -> Result<ShootDerivative> {
    if state.r <= r_floor {
        return Err(LabError::AxisContact {
            index: 0,
            r: state.r,
            floor: r_floor,
        });
    }
    Ok(rhs(state.x, state.r, state.theta, n))
}

#[inline]
fn rhs(x: f64, r: f64, theta: f64, n: usize) -> ShootDerivative {
    let (s, c) = theta.sin_cos();
    // ν = (sin θ, -cos θ)
    let support = x * s - r * c;
    ShootDerivative {
        dx: c,
        dr: s,
        dtheta: 0.5 * support + (n as f64 - 1.0) * c / r,
    }
}

fn rk4(st: &ShootState, h: f64, n: usize) -> ShootState {
    let k1 = rhs(st.x, st.r, st.theta, n);
    let k2 = rhs(
        st.x + 0.5 * h * k1.dx,
        st.r + 0.5 * h * k1.dr,
        st.theta + 0.5 * h * k1.dtheta,
        n,
    );
    let k3 = rhs(
        st.x + 0.5 * h * k2.dx,
        st.r + 0.5 * h * k2.dr,
        st.theta + 0.5 * h * k2.dtheta,
        n,
    );
    let k4 = rhs(st.x + h * k3.dx, st.r + h * k3.dr, st.theta + h * k3.dtheta, n);
    ShootState {
        x: st.x + h / 6.0 * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx),
        r: st.r + h / 6.0 * (k1.dr + 2.0 * k2.dr + 2.0 * k3.dr + k4.dr),
        theta: st.theta + h / 6.0 * (k1.dtheta + 2.0 * k2.dtheta + 2.0 * k3.dtheta + k4.dtheta),
        s: st.s + h,
    }
}

/// Fixed-step RK4 integrator settings and escape caps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub step: f64,
    pub max_arc_length: f64,
    pub escape_radius: f64,
    pub r_floor: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            step: 1e-3,
            max_arc_length: 60.0,
            escape_radius: 20.0,
            r_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShotStatus {
    /// Came back to the symmetry plane `x = 0`.
    Returned,
    /// Left the ball of radius `escape_radius` or ran past `max_arc_length`.
    Escaped,
    AxisContact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shot {
    pub r0: f64,
    pub status: ShotStatus,
    /// Signed angle between the tangent at the return crossing and the `-x`
    /// direction; zero for a closed symmetric profile.
    pub miss: Option<f64>,
    pub trajectory: Vec<ShootState>,
    pub crossing: Option<ShootState>,
}

/// Integrates from `(0, r0)` with `θ = 0` until the trajectory returns to
/// `x = 0`, hits the axis, or escapes.
pub fn shoot(r0: f64, n: usize, opts: &IntegratorOptions) -> Result<Shot> {
    if !(r0 > 0.0) {
        return Err(LabError::InvalidArgument(format!("initial radius r0 = {r0}")));
    }
    if n < 2 {
        return Err(LabError::InvalidArgument(format!("dimension n = {n}")));
    }
    let mut st = ShootState {
        x: 0.0,
        r: r0,
        theta: 0.0,
        s: 0.0,
    };
    let mut trajectory = vec![st];
    let h = opts.step;
    loop {
        let next = rk4(&st, h, n);
        if next.r <= opts.r_floor || !next.r.is_finite() {
            trajectory.push(next);
            return Ok(Shot {
                r0,
                status: ShotStatus::AxisContact,
                miss: None,
                trajectory,
                crossing: None,
            });
        }
        if st.x > 0.0 && next.x <= 0.0 {
            let crossing = locate_crossing(&st, h, n);
            trajectory.push(crossing);
            let miss = wrap_angle(crossing.theta - std::f64::consts::PI);
            return Ok(Shot {
                r0,
                status: ShotStatus::Returned,
                miss: Some(miss),
                trajectory,
                crossing: Some(crossing),
            });
        }
        if next.s > opts.max_arc_length || next.position().norm() > opts.escape_radius {
            trajectory.push(next);
            return Ok(Shot {
                r0,
                status: ShotStatus::Escaped,
                miss: None,
                trajectory,
                crossing: None,
            });
        }
        trajectory.push(next);
        st = next;
    }
}

/// Partial RK4 step from `st` that lands on `x = 0`, by bisection on the step
/// length.
fn locate_crossing(st: &ShootState, h: f64, n: usize) -> ShootState {
    let (mut lo, mut hi) = (0.0, h);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if rk4(st, mid, n).x > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * h {
            break;
        }
    }
    let mut c = rk4(st, 0.5 * (lo + hi), n);
    c.x = 0.0;
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSample {
    pub r0: f64,
    pub status: ShotStatus,
    pub miss: Option<f64>,
}

pub fn scan(n: usize, lo: f64, hi: f64, step: f64, opts: &IntegratorOptions) -> Result<Vec<ScanSample>> {
    if !(step > 0.0) || !(hi > lo) || !(lo > 0.0) {
        return Err(LabError::InvalidArgument(format!(
            "scan range {lo}:{hi}:{step}"
        )));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..count)
        .map(|k| {
            let r0 = lo + step * k as f64;
            let shot = shoot(r0, n, opts)?;
            Ok(ScanSample {
                r0,
                status: shot.status,
                miss: shot.miss,
            })
        })
        .collect()
}

/// First adjacent pair of returning samples whose miss angles change sign.
pub fn bracket_from_scan(samples: &[ScanSample]) -> Option<(f64, f64)> {
    samples.windows(2).find_map(|w| match (w[0].miss, w[1].miss) {
        (Some(a), Some(b)) if a.signum() != b.signum() && (a - b).abs() < 1.0 => {
            Some((w[0].r0, w[1].r0))
        }
        _ => None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusOptions {
    pub nodes: usize,
    pub integrator: IntegratorOptions,
    /// Sub-steps per node spacing when generating the final profile.
    pub substeps: usize,
    pub residual_tol: f64,
    pub max_bisections: usize,
}

impl Default for TorusOptions {
    fn default() -> Self {
        Self {
            nodes: 2048,
            integrator: IntegratorOptions::default(),
            substeps: 8,
            residual_tol: 1e-5,
            max_bisections: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShooterResult {
    pub n: usize,
    pub r0: f64,
    /// Radius of the second (outer) crossing of the symmetry plane.
    pub r_top: f64,
    pub half_length: f64,
    pub profile: ProfileCurve,
    pub miss: f64,
    pub residual_max: f64,
    pub degraded: bool,
    pub bracket_history: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShooterSummary {
    pub n: usize,
    pub r0: f64,
    pub r_top: f64,
    pub half_length: f64,
    pub nodes: usize,
    pub miss: f64,
    pub residual_max: f64,
    pub degraded: bool,
    pub bracket_history: Vec<(f64, f64)>,
}

impl ShooterResult {
    pub fn summary(&self) -> ShooterSummary {
        ShooterSummary {
            n: self.n,
            r0: self.r0,
            r_top: self.r_top,
            half_length: self.half_length,
            nodes: self.profile.len(),
            miss: self.miss,
            residual_max: self.residual_max,
            degraded: self.degraded,
            bracket_history: self.bracket_history.clone(),
        }
    }
}

/// Default scan used to discover a bracket: `r0 ∈ [0.1, √(2(n-1))]` at step 0.05.
pub fn default_scan(n: usize, opts: &IntegratorOptions) -> Result<Vec<ScanSample>> {
    let hi = crate::reference::shrinking_cylinder_radius(n) - 1e-3;
    scan(n, 0.1, hi, 0.05, opts)
}

/// Bisection on `r0` until `|miss| < tol`, then assembles the closed profile
/// from the half trajectory and its mirror image.
pub fn find_torus(n: usize, bracket: (f64, f64), tol: f64, opts: &TorusOptions) -> Result<ShooterResult> {
    if !(tol > 0.0) {
        return Err(LabError::InvalidArgument(format!("tolerance {tol}")));
    }
    if opts.nodes < 16 || !opts.nodes.is_multiple_of(2) {
        return Err(LabError::InvalidArgument(format!(
            "node count must be even and at least 16, got {}",
            opts.nodes
        )));
    }
    let integ = &opts.integrator;
    let miss_of = |r0: f64| -> Result<Option<f64>> { Ok(shoot(r0, n, integ)?.miss) };
    let (mut lo, mut hi) = (bracket.0.min(bracket.1), bracket.0.max(bracket.1));
    let (m_lo, m_hi) = (miss_of(lo)?, miss_of(hi)?);
    let (mut f_lo, f_hi) = match (m_lo, m_hi) {
        (Some(a), Some(b)) if a.signum() != b.signum() => (a, b),
        _ => {
            return Err(LabError::NoSignChange {
                lo,
                hi,
                miss_lo: m_lo.unwrap_or(f64::NAN),
                miss_hi: m_hi.unwrap_or(f64::NAN),
            })
        }
    };
    let mut history = vec![(lo, f_lo), (hi, f_hi)];
    let mut best = if f_lo.abs() < f_hi.abs() { (lo, f_lo) } else { (hi, f_hi) };
    for _ in 0..opts.max_bisections {
        if best.1.abs() < tol || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = miss_of(mid)?.ok_or_else(|| {
            LabError::Shooting(format!("shot from r0 = {mid} failed inside the bracket"))
        })?;
        history.push((mid, f_mid));
        if f_mid.abs() < best.1.abs() {
            best = (mid, f_mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    let (r0, miss) = best;
    let shot = shoot(r0, n, integ)?;
    let crossing = shot
        .crossing
        .ok_or_else(|| LabError::Shooting("final shot did not return".into()))?;
    let profile = assemble_profile(n, r0, crossing.s, opts)?;
    let residual_max = crate::geometry::shrinker_residual(&profile)?
        .into_iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(ShooterResult {
        n,
        r0,
        r_top: crossing.r,
        half_length: crossing.s,
        profile,
        miss,
        residual_max,
        degraded: residual_max > opts.residual_tol || miss.abs() >= tol,
        bracket_history: history,
    })
}

/// Re-integrates the half profile with a step dividing the node spacing, so
/// that nodes sit on the trajectory at exactly uniform arc length.
fn assemble_profile(n: usize, r0: f64, half_length: f64, opts: &TorusOptions) -> Result<ProfileCurve> {
    let half_segments = opts.nodes / 2;
    let spacing = half_length / half_segments as f64;
    let sub = opts
        .substeps
        .max((spacing / opts.integrator.step).ceil() as usize)
        .max(1);
    let h = spacing / sub as f64;
    let mut st = ShootState {
        x: 0.0,
        r: r0,
        theta: 0.0,
        s: 0.0,
    };
    let mut right = Vec::with_capacity(half_segments + 1);
    right.push(st.position());
    for _ in 0..half_segments {
        for _ in 0..sub {
            st = rk4(&st, h, n);
        }
        right.push(st.position());
    }
    right[half_segments].x = 0.0;
    let mut nodes = right.clone();
    for k in (1..half_segments).rev() {
        nodes.push(Point::new(-right[k].x, right[k].r));
    }
    ProfileCurve::new(n, Topology::Closed, nodes)
}

/// Discovers a bracket by the default scan and runs [`find_torus`].
pub fn find_torus_auto(n: usize, tol: f64, opts: &TorusOptions) -> Result<ShooterResult> {
    let samples = default_scan(n, &opts.integrator)?;
    let bracket = bracket_from_scan(&samples).ok_or_else(|| {
        LabError::Shooting(format!("no sign change of the miss angle in the default scan for n = {n}"))
    })?;
    find_torus(n, bracket, tol, opts)
}

/// Curvature of the trajectory measured by finite differences of positions,
/// against the curvature predicted by the conformal metric, `-∂_ν log λ`.
/// Returns the largest discrepancy over interior samples.
pub fn geodesic_consistency(traj: &[ShootState], n: usize) -> f64 {
    let mut worst = 0.0f64;
    for w in traj.windows(3) {
        let (a, b, c) = (w[0].position(), w[1].position(), w[2].position());
        let (hm, hp) = (w[1].s - w[0].s, w[2].s - w[1].s);
        if hm <= 0.0 || hp <= 0.0 || (hm - hp).abs() > 1e-9 * hm {
            continue;
        }
        let (w1, w2) = crate::geometry::fd_weights(hm, hp);
        let d1 = a * w1[0] + b * w1[1] + c * w1[2];
        let d2 = a * w2[0] + b * w2[1] + c * w2[2];
        let kappa = d1.cross(d2) / d1.norm().powi(3);
        let tau = d1.scale(1.0 / d1.norm());
        let nu = Point::new(tau.r, -tau.x);
        let predicted = -nu.dot(log_conformal_gradient(b, n));
        worst = worst.max((kappa - predicted).abs());
    }
    worst
}

/// Maximum of `|H - <X,ν>/2|` on a profile, convenience for reporting.
pub fn max_shrinker_residual(profile: &ProfileCurve) -> Result<f64> {
    let g = geometry_bundle(profile)?;
    Ok(g.mean_curvature
        .iter()
        .zip(&g.support)
        .map(|(h, s)| (h - 0.5 * s).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::shrinking_cylinder_radius;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn conformal_factor_values() {
        let a = conformal_factor(Point::new(0.0, 2f64.sqrt()), 2).unwrap();
        assert!((a - 0.857_763).abs() < 1e-6);
        let b = conformal_factor(Point::new(0.0, 1.0), 2).unwrap();
        assert!((b - (-0.25f64).exp()).abs() < 1e-15_f64);
        assert!(conformal_factor(Point::new(0.0, 0.0), 2).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
        assert!((wrap_angle(0.3) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn rhs_sign_inside_cylinder() {
        // Curving towards larger r below the cylinder radius: with the
        // outward normal of a counterclockwise profile the angle increases.
        for n in 2..5 {
            let r = 0.5 * shrinking_cylinder_radius(n);
            let st = ShootState { x: 0.0, r, theta: 0.0, s: 0.0 };
            assert!(shrinker_ode_rhs(&st, n, 1e-6).unwrap().dtheta > 0.0);
        }
        let st = ShootState { x: 0.0, r: 1e-9, theta: 0.0, s: 0.0 };
        assert!(matches!(shrinker_ode_rhs(&st, 2, 1e-6), Err(LabError::AxisContact { .. })));
    }

    #[test]
    fn sphere_is_a_trajectory() {
        for n in [2usize, 3] {
            let rho = crate::reference::shrinking_sphere_radius(n);
            let mut st = ShootState { x: 0.0, r: rho, theta: 0.0, s: 0.0 };
            let h = 1e-4;
            let steps = (FRAC_PI_2 * rho / h) as usize;
            for _ in 0..steps {
                st = rk4(&st, h, n);
                assert!((st.position().norm() - rho).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn cylinder_shot_escapes() {
        // The cylinder is linearly unstable (rounding in r0 grows like
        // e^{x²/4}), so keep the escape radius moderate.
        let r0 = shrinking_cylinder_radius(2);
        let opts = IntegratorOptions { escape_radius: 8.0, ..IntegratorOptions::default() };
        let shot = shoot(r0, 2, &opts).unwrap();
        assert_eq!(shot.status, ShotStatus::Escaped);
        assert!(shot.miss.is_none());
        assert!(shot.trajectory.iter().all(|s| (s.r - r0).abs() < 1e-6));
    }

    #[test]
    fn scan_brackets_a_sign_change() {
        let samples = scan(2, 0.1, 1.4, 0.05, &IntegratorOptions::default()).unwrap();
        let (lo, hi) = bracket_from_scan(&samples).expect("bracket");
        assert!(hi - lo <= 0.05 + 1e-12 && hi < 2f64.sqrt());
    }

    #[test]
    fn miss_converges_at_fourth_order() {
        let (lo, _) = bracket_from_scan(&scan(2, 0.1, 1.4, 0.05, &IntegratorOptions::default()).unwrap()).unwrap();
        let miss = |h: f64| {
            let opts = IntegratorOptions { step: h, ..IntegratorOptions::default() };
            shoot(lo, 2, &opts).unwrap().miss.unwrap()
        };
        let (m1, m2, m3) = (miss(4e-2), miss(2e-2), miss(1e-2));
        let ratio = (m1 - m2) / (m2 - m3);
        assert!(ratio > 10.0 && ratio < 24.0, "ratio {ratio}");
    }

    #[test]
    fn rejects_bad_arguments() {
        let o = IntegratorOptions::default();
        assert!(shoot(-1.0, 2, &o).is_err());
        assert!(shoot(1.0, 1, &o).is_err());
        assert!(scan(2, 1.0, 0.5, 0.1, &o).is_err());
        let t = TorusOptions { nodes: 15, ..TorusOptions::default() };
        assert!(find_torus(2, (0.5, 1.0), 1e-8, &t).is_err());
    }

    #[test]
    fn torus_n2_is_a_shrinker() {
        let opts = TorusOptions { nodes: 512, ..TorusOptions::default() };
        let res = find_torus_auto(2, 1e-10, &opts).unwrap();
        assert_eq!(res.profile.len(), 512);
        assert!(res.miss.abs() < 1e-10);
        assert!(res.r_top > res.r0);
        assert!(res.residual_max < 4e-4, "{}", res.residual_max);
        assert!(geodesic_consistency(&shoot(res.r0, 2, &opts.integrator).unwrap().trajectory, 2) < 1e-4);
    }

    #[test]
    fn no_sign_change_is_reported() {
        let e = find_torus(2, (1.2, 1.3), 1e-8, &TorusOptions::default()).unwrap_err();
        assert!(matches!(e, LabError::NoSignChange { .. } | LabError::Shooting(_)), "{e}");
    }
}
