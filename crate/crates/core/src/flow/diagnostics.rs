use serde::{Deserialize, Serialize};

use super::{normal_speed, SingularityRecord, Trajectory};
use crate::entropy::{gaussian_density, DensityCenter};
use crate::error::{LabError, Result};
use crate::geometry::{
    closest_on_polygon, fd_weights, geometry_bundle, scalar_derivatives, ProfileCurve, Topology,
};

/// Normal speed `-H` per node.
pub fn mcf_velocity(curve: &ProfileCurve) -> Result<Vec<f64>> {
    Ok(normal_speed(&geometry_bundle(curve)?))
}

fn f_values(curve: &ProfileCurve, t: f64) -> Result<Vec<f64>> {
    let g = geometry_bundle(curve)?;
    Ok(g.support
        .iter()
        .zip(&g.mean_curvature)
        .map(|(s, h)| s + 2.0 * t * h)
        .collect())
}

/// `F` of `curve` interpolated at the closest point to each node of `probe`.
fn f_matched(curve: &ProfileCurve, f: &[f64], probe: &ProfileCurve) -> Vec<f64> {
    let view = curve.closed_view();
    let mut fv = f.to_vec();
    if curve.topology() == Topology::AxisCapped {
        fv.extend(f.iter().rev());
    }
    let m = view.len();
    probe
        .nodes()
        .iter()
        .map(|&p| {
            let (j, u, _) = closest_on_polygon(&view, true, p);
            (1.0 - u) * fv[j] + u * fv[(j + 1) % m]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobiSample {
    pub t: f64,
    /// `‖∂_t F - ΔF - |A|² F‖_∞` at the middle snapshot.
    pub norm: f64,
    /// Disagreement of the two one-sided time differences: a proxy for the
    /// time-differencing error.
    pub floor: f64,
    /// The time-difference floor dominates the residual.
    pub warning: bool,
}

/// Jacobi residual at the middle curve of a snapshot triple.
pub fn jacobi_residual_at(
    (c0, t0): (&ProfileCurve, f64),
    (c1, t1): (&ProfileCurve, f64),
    (c2, t2): (&ProfileCurve, f64),
) -> Result<JacobiSample> {
    if !(t0 < t1 && t1 < t2) {
        return Err(LabError::InvalidArgument("snapshot times must increase".into()));
    }
    let g = geometry_bundle(c1)?;
    let f1: Vec<f64> = g
        .support
        .iter()
        .zip(&g.mean_curvature)
        .map(|(s, h)| s + 2.0 * t1 * h)
        .collect();
    let f0 = f_matched(c0, &f_values(c0, t0)?, c1);
    let f2 = f_matched(c2, &f_values(c2, t2)?, c1);
    let (fs, fss) = scalar_derivatives(c1, &f1);
    let n1 = (c1.n() - 1) as f64;
    let (w, _) = fd_weights(t1 - t0, t2 - t1);
    let (mut norm, mut floor) = (0.0f64, 0.0f64);
    for i in 0..c1.len() {
        let p = c1.nodes()[i];
        let ft = w[0] * f0[i] + w[1] * f1[i] + w[2] * f2[i];
        let lap = fss[i] + n1 * g.tangent[i].r / p.r * fs[i];
        norm = norm.max((ft - lap - g.a_squared[i] * f1[i]).abs());
        let back = (f1[i] - f0[i]) / (t1 - t0);
        let fwd = (f2[i] - f1[i]) / (t2 - t1);
        floor = floor.max((fwd - back).abs());
    }
    Ok(JacobiSample {
        t: t1,
        norm,
        floor,
        warning: floor > norm,
    })
}

/// Jacobi residual over consecutive snapshot triples.
pub fn jacobi_residual(traj: &Trajectory) -> Result<Vec<JacobiSample>> {
    traj.snapshots
        .windows(3)
        .filter(|w| w[0].0 < w[1].0 && w[1].0 < w[2].0)
        .map(|w| jacobi_residual_at((&w[0].2, w[0].0), (&w[1].2, w[1].0), (&w[2].2, w[2].0)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PositiveQuantity {
    /// Mean curvature `H`.
    H,
    /// `G = -F = -<X, ν> - 2tH` at time `t`.
    G(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoncollapsingRatios {
    /// `max_x k̄(x)/q(x)`.
    pub max_upper: f64,
    /// `min_x k_(x)/q(x)`.
    pub min_lower: f64,
}

/// Inscribed/exscribed ball curvatures relative to a positive quantity.
///
/// For a fixed pair of profile points the ratio `2<x-y,ν>/|x-y|²` is monotone in
/// the cosine of the revolution angle between them, so the extremes over the
/// hypersurface are attained at angle 0 or π: the profile and its mirror.
pub fn noncollapsing_ratios(curve: &ProfileCurve, quantity: PositiveQuantity) -> Result<NoncollapsingRatios> {
    let g = geometry_bundle(curve)?;
    let q: Vec<f64> = match quantity {
        PositiveQuantity::H => g.mean_curvature.clone(),
        PositiveQuantity::G(t) => g
                .support
                .iter()
                .zip(&g.mean_curvature)
                .map(|(s, h)| -(s + 2.0 * t * h))
                .collect(),
    };
    if let Some(i) = q.iter().position(|&v| !(v > 0.0)) {
        return Err(LabError::InvalidArgument(format!(
            "noncollapsing quantity is not positive at node {i} ({})",
            q[i]
        )));
    }
    let nodes = curve.nodes();
    let m = nodes.len();
    let n1 = curve.n() - 1;
    let mut max_upper = f64::NEG_INFINITY;
    let mut min_lower = f64::INFINITY;
    for i in 0..m {
        let x = nodes[i];
        let nu = g.normal[i];
        let rot = nu.r / x.r;
        let (mut hi, mut lo) = (g.kappa[i], g.kappa[i]);
        if n1 > 0 {
            hi = hi.max(rot);
            lo = lo.min(rot);
        }
        for (j, &y) in nodes.iter().enumerate() {
            for mirror in [false, true] {
                if !mirror && j == i {
                    continue;
                }
                if mirror && n1 == 0 {
                    continue;
                }
                let yr = if mirror { -y.r } else { y.r };
                let dx = x.x - y.x;
                let dr = x.r - yr;
                let d2 = dx * dx + dr * dr;
                if d2 == 0.0 {
                    continue;
                }
                let k = 2.0 * (dx * nu.x + dr * nu.r) / d2;
                hi = hi.max(k);
                lo = lo.min(k);
            }
        }
        max_upper = max_upper.max(hi / q[i]);
        min_lower = min_lower.min(lo / q[i]);
    }
    Ok(NoncollapsingRatios { max_upper, min_lower })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HuiskenSeries {
    pub t: Vec<f64>,
    pub density: Vec<f64>,
    /// Largest relative increase between consecutive samples.
    pub max_relative_increase: f64,
    pub monotone: bool,
}

/// Gaussian density centred at the singular point with scale `t_sing - t`,
/// per snapshot.
pub fn huisken_monotonicity_check(traj: &Trajectory, record: &SingularityRecord, tolerance: f64) -> Result<HuiskenSeries> {
    let center = DensityCenter::new(record.center_x, record.d_sing);
    let mut t = Vec::new();
    let mut density = Vec::new();
    for (ts, _, curve) in &traj.snapshots {
        let scale = record.t_sing - ts;
        if scale <= 0.0 {
            continue;
        }
        t.push(*ts);
        density.push(gaussian_density(curve, center, scale)?);
    }
    let max_relative_increase = density
        .windows(2)
        .map(|w| (w[1] - w[0]) / w[0])
        .fold(0.0f64, f64::max);
    Ok(HuiskenSeries {
        t,
        density,
        max_relative_increase,
        monotone: max_relative_increase <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{detect_singularity, evolve, FlowOptions, FlowState};
    use crate::geometry::Point;
    use crate::reference::{circle, sphere};

    #[test]
    fn sphere_velocity_is_minus_n_over_r() {
        let v = mcf_velocity(&sphere(2, 0.5, 128).unwrap()).unwrap();
        assert!(v.iter().all(|v| (v + 4.0).abs() < 1e-3));
    }

    fn residual_at(m: usize) -> f64 {
        let opts = FlowOptions {
            t_end: Some(0.061),
            snapshot_every: 0,
            snapshot_times: vec![0.05, 0.055, 0.06],
            ..FlowOptions::default()
        };
        let init = FlowState::new(circle(2, Point::new(0.0, 2.0), 0.7, m).unwrap(), 0.0);
        let traj = evolve(&init, &opts).unwrap();
        let s = jacobi_residual(&traj).unwrap();
        s.iter().find(|s| s.t == 0.055).unwrap().norm
    }

    #[test]
    fn jacobi_residual_refines() {
        let (a, b) = (residual_at(48), residual_at(96));
        assert!(b < 0.6 * a, "{a} -> {b}");
    }

    #[test]
    fn jacobi_rejects_unordered_times() {
        let c = sphere(2, 1.0, 32).unwrap();
        assert!(jacobi_residual_at((&c, 0.1), (&c, 0.1), (&c, 0.2)).is_err());
    }

    #[test]
    fn round_sphere_is_perfectly_noncollapsed() {
        let s = sphere(2, 1.5, 64).unwrap();
        let r = noncollapsing_ratios(&s, PositiveQuantity::H).unwrap();
        assert!((r.max_upper - 0.5).abs() < 1e-3 && (r.min_lower - 0.5).abs() < 1e-3, "{r:?}");
    }

    #[test]
    fn noncollapsing_needs_positive_quantity() {
        // Inner side close to the axis: H < 0 there.
        let c = circle(2, Point::new(0.0, 0.6), 0.5, 64).unwrap();
        let e = noncollapsing_ratios(&c, PositiveQuantity::H).unwrap_err();
        assert!(e.to_string().contains("node"));
    }

    #[test]
    fn sphere_density_about_the_singular_point() {
        let traj = evolve(&FlowState::new(sphere(2, 1.0, 64).unwrap(), 0.0), &FlowOptions::default()).unwrap();
        let rec = detect_singularity(&traj).unwrap();
        let h = huisken_monotonicity_check(&traj, &rec, 1e-3).unwrap();
        assert!(h.monotone);
        for d in &h.density {
            assert!((d - 4.0 / 1f64.exp()).abs() < 1e-3, "{d}");
        }
    }
}
