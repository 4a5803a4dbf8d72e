use serde::{Deserialize, Serialize};

use super::{Termination, Trajectory};
use crate::error::{LabError, Result};
use crate::geometry::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingularShape {
    /// Profile shrinks to a point off the axis: a round circle of revolution.
    Circle,
    /// Profile shrinks onto the axis.
    Point,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularityRecord {
    #[serde(with = "crate::io::lenient_f64")]
    pub t_sing: f64,
    #[serde(with = "crate::io::lenient_f64")]
    pub d_sing: f64,
    #[serde(with = "crate::io::lenient_f64")]
    pub center_x: f64,
    #[serde(rename = "typeI_constant", with = "crate::io::lenient_f64")]
    pub type_one_constant: f64,
    pub shape: SingularShape,
    pub confident: bool,
    /// `c` in `max|A|² ≈ c / (t_sing - t)`.
    #[serde(with = "crate::io::lenient_f64")]
    pub fit_constant: f64,
    /// RMS misfit of `1/max|A|²` over the window, relative to its RMS.
    #[serde(with = "crate::io::lenient_f64")]
    pub fit_residual: f64,
    pub fit_points: usize,
    #[serde(with = "crate::io::lenient_f64")]
    pub last_time: f64,
    #[serde(with = "crate::io::lenient_f64")]
    pub final_extent: f64,
}

fn linear_fit(ts: &[f64], ys: &[f64]) -> (f64, f64) {
    let m = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / m;
    let ym = ys.iter().sum::<f64>() / m;
    let (mut stt, mut sty) = (0.0, 0.0);
    for (&t, &y) in ts.iter().zip(ys) {
        stt += (t - tm) * (t - tm);
        sty += (t - tm) * (y - ym);
    }
    let slope = sty / stt;
    (ym - slope * tm, slope)
}

/// Extrapolates the singular time from `1/max|A|²`, which is asymptotically
/// linear in `t` at a type-I singularity.
pub fn detect_singularity(traj: &Trajectory) -> Result<SingularityRecord> {
    if !traj.termination.is_singular() {
        return Err(LabError::Flow(format!(
            "trajectory ended with {:?}, not a singular event",
            traj.termination
        )));
    }
    let ts = &traj.series.t;
    let ys: Vec<f64> = traj.series.max_abs_a.iter().map(|a| 1.0 / (a * a)).collect();
    let m = ts.len();
    if m < 8 {
        return Err(LabError::Flow("series too short for a singularity fit".into()));
    }
    let t_last = ts[m - 1];
    let y_last = ys[m - 1];

    // First window: the last decade of 1/|A|², then twice in (t_sing - t).
    let mut start = ys.iter().rposition(|&y| y > 10.0 * y_last).map_or(0, |k| k + 1);
    let mut t_sing = f64::NAN;
    let mut fit = (0.0, 0.0);
    for pass in 0..3 {
        if m - start < 5 {
            start = m.saturating_sub(5);
        }
        fit = linear_fit(&ts[start..], &ys[start..]);
        t_sing = -fit.0 / fit.1;
        if pass < 2 && t_sing.is_finite() && t_sing > t_last {
            let span = 10.0 * (t_sing - t_last);
            start = ts.iter().position(|&t| t_sing - t <= span).unwrap_or(0);
        }
    }
    let (p, q) = fit;
    let (mut num, mut den) = (0.0, 0.0);
    for k in start..m {
        let e = ys[k] - (p + q * ts[k]);
        num += e * e;
        den += ys[k] * ys[k];
    }
    let fit_residual = (num / den).sqrt();
    let fit_points = m - start;

    let last = traj.final_state();
    let center = last.curve.centroid();
    let final_extent = last.curve.diameter();
    let shape = match last.curve.topology() {
        Topology::AxisCapped => SingularShape::Point,
        _ if center.r > 0.0 && final_extent < 0.05 * center.r && traj.termination.is_singular() => {
            SingularShape::Circle
        }
        _ => SingularShape::Undetermined,
    };
    let d_sing = if shape == SingularShape::Point { 0.0 } else { center.r };
    let confident = t_sing.is_finite() && t_sing > t_last && q < 0.0 && fit_residual <= 0.1 && fit_points >= 5;
    let mut record = SingularityRecord {
        t_sing,
        d_sing,
        center_x: center.x,
        type_one_constant: f64::NAN,
        shape,
        confident,
        fit_constant: -1.0 / q,
        fit_residual,
        fit_points,
        last_time: t_last,
        final_extent,
    };
    if confident {
        record.type_one_constant = type_one_profile(traj, &record).sup;
    }
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeOneSeries {
    pub t: Vec<f64>,
    pub value: Vec<f64>,
    pub sup: f64,
}

/// `(t_sing - t) · max|A|²` along the dense series.
pub fn type_one_profile(traj: &Trajectory, record: &SingularityRecord) -> TypeOneSeries {
    let value: Vec<f64> = traj
        .series
        .t
        .iter()
        .zip(&traj.series.max_abs_a)
        .map(|(&t, &a)| (record.t_sing - t) * a * a)
        .collect();
    let sup = value.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    TypeOneSeries {
        t: traj.series.t.clone(),
        value,
        sup,
    }
}

impl Termination {
    pub fn exit_code(self) -> i32 {
        match self {
            Termination::CurvatureBlowup | Termination::DiameterCollapse | Termination::ReachedEnd => 0,
            Termination::Truncated => 2,
            Termination::Fault => 3,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{evolve, FlowOptions, FlowState};
    use crate::geometry::Point;
    use crate::reference::{circle, sphere};

    #[test]
    fn sphere_singularity() {
        let traj = evolve(&FlowState::new(sphere(2, 1.0, 64).unwrap(), 0.0), &FlowOptions::default()).unwrap();
        let rec = detect_singularity(&traj).unwrap();
        assert!(rec.confident);
        assert!((rec.t_sing - 0.25).abs() < 1e-3 * 0.25, "{}", rec.t_sing);
        assert_eq!(rec.shape, SingularShape::Point);
        assert_eq!(rec.d_sing, 0.0);
        assert!((rec.fit_constant - 0.5).abs() < 5e-3);
        assert!((rec.type_one_constant - 0.5).abs() < 1e-2, "{}", rec.type_one_constant);
        let json = serde_json::to_string(&rec).unwrap();
        assert!(json.contains("typeI_constant"));
        assert_eq!(serde_json::from_str::<SingularityRecord>(&json).unwrap(), rec);
    }

    #[test]
    fn thin_torus_pinches_to_a_circle() {
        let traj = evolve(
            &FlowState::new(circle(2, Point::new(0.0, 3.0), 0.3, 96).unwrap(), 0.0),
            &FlowOptions::default(),
        )
        .unwrap();
        let rec = detect_singularity(&traj).unwrap();
        assert_eq!(rec.shape, SingularShape::Circle);
        assert!(rec.confident);
        assert!(rec.d_sing > 2.5 && rec.d_sing < 3.0, "{}", rec.d_sing);
        // Curve shortening with a small correction: t ≈ ρ²/2.
        assert!((rec.t_sing - 0.045).abs() < 5e-3, "{}", rec.t_sing);
    }

    #[test]
    fn regular_end_is_not_a_singularity() {
        let opts = FlowOptions { t_end: Some(0.01), ..FlowOptions::default() };
        let traj = evolve(&FlowState::new(sphere(2, 1.0, 32).unwrap(), 0.0), &opts).unwrap();
        assert!(detect_singularity(&traj).is_err());
    }

    #[test]
    fn nan_fields_round_trip_as_null() {
        let rec = SingularityRecord {
            t_sing: f64::NAN,
            d_sing: 1.0,
            center_x: 0.0,
            type_one_constant: f64::INFINITY,
            shape: SingularShape::Undetermined,
            confident: false,
            fit_constant: 0.0,
            fit_residual: 0.0,
            fit_points: 0,
            last_time: 0.0,
            final_extent: 0.0,
        };
        let json = serde_json::to_string(&rec).unwrap();
        assert!(json.contains("\"t_sing\":null"));
        let back: SingularityRecord = serde_json::from_str(&json).unwrap();
        assert!(back.t_sing.is_nan() && back.type_one_constant.is_nan());
    }
}
