//! Gaussian-weighted length, Gaussian area, recentred Gaussian densities and
//! entropy estimates for rotationally symmetric hypersurfaces.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::{radial_extent, Point, ProfileCurve, Topology};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function (Lanczos, g = 7, with reflection below 1/2).
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut a = LANCZOS[0];
        let t = x + LANCZOS_G + 0.5;
        for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}

/// `Vol(S^k) = 2 π^{(k+1)/2} / Γ((k+1)/2)`; `Vol(S^0) = 2`.
pub fn sphere_volume(k: usize) -> f64 {
    let h = 0.5 * (k as f64 + 1.0);
    2.0 * PI.powf(h) / gamma(h)
}

/// `2^n Γ(n/2) = 2 ∫_0^∞ s^{n-1} e^{-s²/4} ds`, the weighted length of the
/// doubled half-line in the conformal metric.
pub fn dn_bound(n: usize) -> f64 {
    2f64.powi(n as i32) * gamma(0.5 * n as f64)
}

#[inline]
fn weight(p: Point, n: usize) -> f64 {
    let r = p.r.abs();
    r.powi(n as i32 - 1) * (-(p.x * p.x + r * r) / 4.0).exp()
}

/// `L_n = ∫ λ ds`, trapezoidal along the polyline.
pub fn weighted_length(curve: &ProfileCurve) -> f64 {
    let n = curve.n();
    trapezoid(curve, |p| weight(p, n))
}

fn trapezoid(curve: &ProfileCurve, f: impl Fn(Point) -> f64) -> f64 {
    let v = curve.closed_view();
    let m = v.len();
    let segs = if curve.topology() == Topology::Open { m - 1 } else { m };
    let vals: Vec<f64> = v.iter().map(|&p| f(p)).collect();
    let mut sum = 0.0;
    for j in 0..segs {
        let k = (j + 1) % m;
        sum += 0.5 * (vals[j] + vals[k]) * v[j].dist(v[k]);
    }
    sum * curve.view_weight()
}

/// `A = ∫ e^{-|X|²/4} dvol = Vol(S^{n-1}) L_n`.
pub fn gaussian_area(curve: &ProfileCurve) -> f64 {
    sphere_volume(curve.n() - 1) * weighted_length(curve)
}

/// `F_{0,1} = A / (4π)^{n/2}`.
pub fn entropy_compact(curve: &ProfileCurve) -> f64 {
    gaussian_area(curve) / (4.0 * PI).powf(0.5 * curve.n() as f64)
}

fn gauss_legendre_32() -> &'static ([f64; 32], [f64; 32]) {
    static RULE: OnceLock<([f64; 32], [f64; 32])> = OnceLock::new();
    RULE.get_or_init(|| {
        const N: usize = 32;
        let mut nodes = [0.0; N];
        let mut weights = [0.0; N];
        for i in 0..N {
            let mut x = (PI * (i as f64 + 0.75) / (N as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=N {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = N as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=N {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = N as f64 * (x * p1 - p0) / (x * x - 1.0);
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    })
}

/// `∫_0^π e^{-a(1 - cos φ)} sin^{k} φ dφ` by 32-point Gauss–Legendre on the
/// part of the interval where the integrand is above `e^{-40}`.
pub(crate) fn angular_integral(a: f64, k: usize) -> f64 {
    let cut = if 2.0 * a <= 40.0 {
        PI
    } else {
        (1.0 - 40.0 / a).acos()
    };
    let (xs, ws) = gauss_legendre_32();
    let half = 0.5 * cut;
    xs.iter()
        .zip(ws)
        .map(|(&x, &w)| {
            let phi = half * (x + 1.0);
            w * (-a * (1.0 - phi.cos())).exp() * phi.sin().powi(k as i32)
        })
        .sum::<f64>()
        * half
}

/// Centre of a recentred Gaussian density, restricted to the symmetry-compatible
/// points `(x0, y0 e_1)`: `y0 = 0` is the rotation axis, `x0 = 0` the symmetry plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityCenter {
    pub x0: f64,
    pub y0: f64,
}

impl DensityCenter {
    pub const ORIGIN: DensityCenter = DensityCenter { x0: 0.0, y0: 0.0 };

    pub fn new(x0: f64, y0: f64) -> Self {
        Self { x0, y0 }
    }
}

/// `F_{x0,t0} = (4π t0)^{-n/2} ∫ e^{-|X - x0|²/(4 t0)} dvol`.
pub fn gaussian_density(curve: &ProfileCurve, center: DensityCenter, scale: f64) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(LabError::InvalidArgument(format!(
            "density scale must be positive, got {scale}"
        )));
    }
    let n = curve.n();
    let y0 = center.y0.abs();
    let four_t = 4.0 * scale;
    let integral = if y0 == 0.0 {
        let vol = sphere_volume(n - 1);
        trapezoid(curve, |p| {
            let r = p.r.abs();
            let dx = p.x - center.x0;
            vol * r.powi(n as i32 - 1) * (-(dx * dx + r * r) / four_t).exp()
        })
    } else {
        let vol = sphere_volume(n - 2);
        trapezoid(curve, |p| {
            let r = p.r.abs();
            let dx = p.x - center.x0;
            let dr = r - y0;
            let radial = (-(dx * dx + dr * dr) / four_t).exp();
            if radial == 0.0 {
                return 0.0;
            }
            vol * r.powi(n as i32 - 1) * radial * angular_integral(r * y0 / (2.0 * scale), n - 2)
        })
    };
    Ok(integral / (PI * four_t).powf(0.5 * n as f64))
}

/// Grid over scales (log-uniform) and symmetry-compatible centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyGrid {
    pub scale_lo: f64,
    pub scale_hi: f64,
    pub scale_count: usize,
    /// Axis centres `(x0, 0)` with `|x0| ≤ center_extent`, and plane centres
    /// `(0, y0)` with `0 ≤ y0 ≤ center_extent`.
    pub center_extent: f64,
    pub center_count: usize,
    /// Golden-section refinement passes around the best grid point.
    pub refine_passes: usize,
}

impl EntropyGrid {
    /// Grid scaled to the curve: centres within its radial extent.
    pub fn for_curve(curve: &ProfileCurve) -> Self {
        let (_, d_max) = radial_extent(curve);
        let s = d_max.max(1e-12);
        Self {
            scale_lo: 1e-3 * s * s,
            scale_hi: 2.0 * s * s,
            scale_count: 33,
            center_extent: 1.05 * s,
            center_count: 43,
            refine_passes: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropySup {
    pub value: f64,
    pub center: DensityCenter,
    pub scale: f64,
}

/// Supremum of recentred, rescaled Gaussian densities over the grid, followed
/// by golden-section refinement in the scale and the free centre coordinate.
pub fn entropy_sup_grid(curve: &ProfileCurve, grid: &EntropyGrid) -> Result<EntropySup> {
    if !(grid.scale_lo > 0.0) || !(grid.scale_hi >= grid.scale_lo) || grid.scale_count < 2 {
        return Err(LabError::InvalidArgument("entropy grid scales".into()));
    }
    let mut centers = Vec::new();
    let cc = grid.center_count.max(2);
    for k in 0..cc {
        let u = k as f64 / (cc - 1) as f64;
        centers.push(DensityCenter::new(grid.center_extent * (2.0 * u - 1.0), 0.0));
        if k > 0 {
            centers.push(DensityCenter::new(0.0, grid.center_extent * u));
        }
    }
    let log_lo = grid.scale_lo.ln();
    let log_hi = grid.scale_hi.ln();
    let scales: Vec<f64> = (0..grid.scale_count)
        .map(|k| (log_lo + (log_hi - log_lo) * k as f64 / (grid.scale_count - 1) as f64).exp())
        .collect();
    let mut best = EntropySup {
        value: f64::NEG_INFINITY,
        center: DensityCenter::ORIGIN,
        scale: scales[0],
    };
    for &c in &centers {
        for &t in &scales {
            let v = gaussian_density(curve, c, t)?;
            if v > best.value {
                best = EntropySup {
                    value: v,
                    center: c,
                    scale: t,
                };
            }
        }
    }
    let dlog = (log_hi - log_lo) / (grid.scale_count - 1) as f64;
    let dc = grid.center_extent / (cc - 1) as f64;
    for _ in 0..grid.refine_passes {
        let c = best.center;
        let (ls, v) = golden_max(
            best.scale.ln() - dlog,
            best.scale.ln() + dlog,
            |ls| gaussian_density(curve, c, ls.exp()).unwrap_or(f64::NEG_INFINITY),
        );
        if v > best.value {
            best = EntropySup {
                value: v,
                center: c,
                scale: ls.exp(),
            };
        }
        let t = best.scale;
        let on_axis = best.center.y0 == 0.0;
        let (free, lo, hi) = if on_axis {
            (best.center.x0, best.center.x0 - dc, best.center.x0 + dc)
        } else {
            (best.center.y0, (best.center.y0 - dc).max(0.0), best.center.y0 + dc)
        };
        let make = |u: f64| {
            if on_axis {
                DensityCenter::new(u, 0.0)
            } else {
                DensityCenter::new(0.0, u)
            }
        };
        let (u, v) = golden_max(lo, hi, |u| {
            gaussian_density(curve, make(u), t).unwrap_or(f64::NEG_INFINITY)
        });
        if v > best.value && u != free {
            best = EntropySup {
                value: v,
                center: make(u),
                scale: t,
            };
        }
    }
    Ok(best)
}

fn golden_max(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < 1e-10 * (1.0 + a.abs()) {
            break;
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub n: usize,
    pub l_n: f64,
    pub gaussian_area: f64,
    pub f01: f64,
    pub entropy_sup: Option<EntropySup>,
    pub bound_dn: f64,
    pub length_below_bound: bool,
    pub entropy_below_two: bool,
}

pub fn entropy_report(curve: &ProfileCurve, grid: Option<&EntropyGrid>) -> Result<EntropyReport> {
    let n = curve.n();
    let l_n = weighted_length(curve);
    let area = sphere_volume(n - 1) * l_n;
    let f01 = area / (4.0 * PI).powf(0.5 * n as f64);
    let sup = grid.map(|g| entropy_sup_grid(curve, g)).transpose()?;
    let bound = dn_bound(n);
    let entropy = sup.map_or(f01, |s| s.value.max(f01));
    Ok(EntropyReport {
        n,
        l_n,
        gaussian_area: area,
        f01,
        entropy_sup: sup,
        bound_dn: bound,
        length_below_bound: l_n < bound,
        entropy_below_two: entropy < 2.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{circle, sphere};
    use proptest::prelude::*;

    #[test]
    fn gamma_values() {
        assert!((gamma(0.5) - PI.sqrt()).abs() < 1e-13);
        assert!((gamma(1.0) - 1.0).abs() < 1e-13);
        assert!((gamma(5.0) - 24.0).abs() < 1e-11);
        assert!((gamma(1.5) - 0.5 * PI.sqrt()).abs() < 1e-13);
        assert!((gamma(-0.5) + 2.0 * PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sphere_volumes() {
        assert!((sphere_volume(0) - 2.0).abs() < 1e-13);
        assert!((sphere_volume(1) - 2.0 * PI).abs() < 1e-13);
        assert!((sphere_volume(2) - 4.0 * PI).abs() < 1e-12);
        assert!((sphere_volume(3) - 2.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn dn_bound_values() {
        assert!((dn_bound(2) - 4.0).abs() < 1e-12);
        assert!((dn_bound(3) - 4.0 * PI.sqrt()).abs() < 1e-12);
        assert!((dn_bound(3) - 7.08982).abs() < 1e-5);
    }

    #[test]
    fn normalisation_identity() {
        for n in 2..=10 {
            let v = sphere_volume(n - 1) * dn_bound(n) / (4.0 * PI).powf(0.5 * n as f64);
            assert!((v - 2.0).abs() < 1e-12, "n = {n}: {v}");
        }
    }

    #[test]
    fn shrinking_sphere_area_and_entropy() {
        let s = sphere(2, 2.0, 2048).unwrap();
        let a = gaussian_area(&s);
        assert!((a - 16.0 * PI / 1f64.exp()).abs() < 1e-5 * a);
        assert!((entropy_compact(&s) - 4.0 / 1f64.exp()).abs() < 1e-5);
        let d = gaussian_density(&s, DensityCenter::ORIGIN, 1.0).unwrap();
        assert!((d - 4.0 / 1f64.exp()).abs() < 1e-5);
    }

    #[test]
    fn unit_sphere_sup_over_scales() {
        let s = sphere(2, 1.0, 1024).unwrap();
        let at = |t: f64| gaussian_density(&s, DensityCenter::ORIGIN, t).unwrap();
        let peak = at(0.25);
        assert!((peak - 4.0 / 1f64.exp()).abs() < 1e-5);
        assert!(at(0.2) < peak && at(0.3) < peak);
        let sup = entropy_sup_grid(&s, &EntropyGrid::for_curve(&s)).unwrap();
        assert!((sup.value - 4.0 / 1f64.exp()).abs() < 1e-4, "{sup:?}");
        assert!((sup.scale - 0.25).abs() < 1e-2);
    }

    #[test]
    fn off_axis_centre_matches_axis_formula_in_the_limit() {
        let c = circle(2, Point::new(0.3, 2.0), 0.7, 512).unwrap();
        let on = gaussian_density(&c, DensityCenter::new(0.0, 0.0), 0.8).unwrap();
        let near = gaussian_density(&c, DensityCenter::new(0.0, 1e-7), 0.8).unwrap();
        assert!((on - near).abs() < 1e-6 * on);
    }

    #[test]
    fn angular_integral_closed_forms() {
        // k = 0, a = 0: π. k = 1: ∫ e^{-a(1-cos)} sin = (1 - e^{-2a}) / a.
        assert!((angular_integral(0.0, 0) - PI).abs() < 1e-12);
        for a in [0.1f64, 1.0, 5.0, 50.0] {
            let exact = (1.0 - (-2.0f64 * a).exp()) / a;
            assert!((angular_integral(a, 1) - exact).abs() < 1e-9 * exact, "a = {a}");
        }
    }

    #[test]
    fn report_flags() {
        let s = sphere(2, 2.0, 512).unwrap();
        let r = entropy_report(&s, None).unwrap();
        assert!(r.length_below_bound && r.entropy_below_two);
        assert!(r.entropy_sup.is_none());
        assert!(gaussian_density(&s, DensityCenter::ORIGIN, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn density_is_scale_invariant(rho in 0.5f64..3.0, lam in 0.3f64..3.0, t in 0.1f64..2.0) {
            let a = sphere(2, rho, 256).unwrap();
            let b = sphere(2, lam * rho, 256).unwrap();
            let da = gaussian_density(&a, DensityCenter::ORIGIN, t).unwrap();
            let db = gaussian_density(&b, DensityCenter::ORIGIN, lam * lam * t).unwrap();
            prop_assert!((da - db).abs() < 1e-9 * da.max(1e-300));
        }

        #[test]
        fn sup_is_at_least_one(b in 0.3f64..1.5, rad in 0.3f64..1.0) {
            // Symmetric under x -> -x, so plane centres reach the curve.
            let c = crate::reference::ellipse(2, Point::new(0.0, 2.0), b, rad, 128).unwrap();
            let sup = entropy_sup_grid(&c, &EntropyGrid::for_curve(&c)).unwrap();
            prop_assert!(sup.value >= 1.0 - 1e-3, "{}", sup.value);
        }
    }
}
