//! Closed-form profiles: round spheres, cylinders and calibration fixtures.

use std::f64::consts::PI;

use crate::error::{LabError, Result};
use crate::geometry::{Point, ProfileCurve, Topology};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceKind {
    /// Round sphere of the given radius centred at the origin.
    Sphere { radius: f64 },
    /// Cylinder of radius `radius` over `x ∈ [-half_length, half_length]`.
    CylinderSegment { radius: f64, half_length: f64 },
}

/// Samples a closed-form shrinker profile (or any sphere/cylinder) with
/// `nodes` nodes.
pub fn reference_profile(kind: ReferenceKind, n: usize, nodes: usize) -> Result<ProfileCurve> {
    match kind {
        ReferenceKind::Sphere { radius } => sphere(n, radius, nodes),
        ReferenceKind::CylinderSegment {
            radius,
            half_length,
        } => cylinder_segment(n, radius, half_length, nodes),
    }
}

/// Upper semicircle of radius `radius`, nodes at cell centres
/// `φ_k = (k + 1/2) π / nodes` so that no node touches the axis.
pub fn sphere(n: usize, radius: f64, nodes: usize) -> Result<ProfileCurve> {
    if !(radius > 0.0) {
        return Err(LabError::InvalidArgument(format!("sphere radius {radius}")));
    }
    let pts = (0..nodes)
        .map(|k| {
            let phi = (k as f64 + 0.5) * PI / nodes as f64;
            Point::new(radius * phi.cos(), radius * phi.sin())
        })
        .collect();
    ProfileCurve::new(n, Topology::AxisCapped, pts)
}

pub fn shrinking_sphere_radius(n: usize) -> f64 {
    (2.0 * n as f64).sqrt()
}

pub fn shrinking_cylinder_radius(n: usize) -> f64 {
    (2.0 * (n as f64 - 1.0)).sqrt()
}

pub fn cylinder_segment(n: usize, radius: f64, half_length: f64, nodes: usize) -> Result<ProfileCurve> {
    if !(radius > 0.0) || !(half_length > 0.0) || nodes < 2 {
        return Err(LabError::InvalidArgument(
            "cylinder segment needs positive radius, extent and at least 2 nodes".into(),
        ));
    }
    let pts = (0..nodes)
        .map(|k| {
            let s = k as f64 / (nodes - 1) as f64;
            Point::new(half_length * (2.0 * s - 1.0), radius)
        })
        .collect();
    ProfileCurve::new(n, Topology::Open, pts)
}

/// Closed circle in the profile plane (a torus of revolution when it avoids the axis).
pub fn circle(n: usize, center: Point, radius: f64, nodes: usize) -> Result<ProfileCurve> {
    ellipse(n, center, radius, radius, nodes)
}

/// Closed ellipse with semi-axes `a` (along `x`) and `b` (along `r`), sampled at
/// uniform parameter angle.
pub fn ellipse(n: usize, center: Point, a: f64, b: f64, nodes: usize) -> Result<ProfileCurve> {
    let pts = (0..nodes)
        .map(|k| {
            let phi = 2.0 * PI * k as f64 / nodes as f64;
            Point::new(center.x + a * phi.cos(), center.r + b * phi.sin())
        })
        .collect();
    ProfileCurve::new(n, Topology::Closed, pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::geometry_bundle;

    #[test]
    fn sphere_nodes_avoid_axis_and_lie_on_circle() {
        let s = sphere(2, 1.5, 33).unwrap();
        assert_eq!(s.topology(), Topology::AxisCapped);
        for p in s.nodes() {
            assert!(p.r > 0.0);
            assert!((p.norm() - 1.5).abs() < 1e-14);
        }
    }

    #[test]
    fn shrinker_radii() {
        assert!((shrinking_sphere_radius(2) - 2.0).abs() < 1e-15);
        assert!((shrinking_cylinder_radius(2) - 2f64.sqrt()).abs() < 1e-15);
        assert!((shrinking_cylinder_radius(3) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn shrinking_sphere_satisfies_shrinker_equation() {
        let s = sphere(3, shrinking_sphere_radius(3), 128).unwrap();
        let g = geometry_bundle(&s).unwrap();
        for (h, sup) in g.mean_curvature.iter().zip(&g.support) {
            assert!((h - 0.5 * sup).abs() < 1e-3);
        }
    }

    #[test]
    fn cylinder_is_open_and_flat() {
        let c = reference_profile(
            ReferenceKind::CylinderSegment {
                radius: 2f64.sqrt(),
                half_length: 3.0,
            },
            2,
            7,
        )
        .unwrap();
        assert_eq!(c.topology(), Topology::Open);
        assert_eq!(c.nodes()[0].x, -3.0);
        assert_eq!(c.nodes()[6].x, 3.0);
        assert!(cylinder_segment(2, 1.0, 1.0, 1).is_err());
    }

    #[test]
    fn rejects_bad_radius() {
        assert!(sphere(2, 0.0, 16).is_err());
        assert!(sphere(2, f64::NAN, 16).is_err());
    }
}
