//! Rotationally symmetric mean curvature flow of profile curves.
//!
//! Nodes move with the mean curvature vector of the revolved hypersurface,
//! `-H ν`, plus a tangential velocity that keeps the chord lengths equal.
//! Time stepping is explicit Heun (RK2) with a parabolic step bound.

mod diagnostics;
mod singularity;

use serde::{Deserialize, Serialize};

pub use diagnostics::{
    huisken_monotonicity_check, jacobi_residual, jacobi_residual_at, mcf_velocity,
    noncollapsing_ratios, HuiskenSeries, JacobiSample, NoncollapsingRatios, PositiveQuantity,
};
pub use singularity::{
    detect_singularity, type_one_profile, SingularShape, SingularityRecord, TypeOneSeries,
};

use crate::error::{LabError, Result};
use crate::geometry::{
    geometry_bundle_with_floor, parabolic_from_bundle, radial_extent, resample, GeometryBundle,
    Point, ProfileCurve, Topology,
};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub curve: ProfileCurve,
    pub t: f64,
    pub step_index: usize,
}

impl FlowState {
    pub fn new(curve: ProfileCurve, t: f64) -> Self {
        Self {
            curve,
            t,
            step_index: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    /// Step bound `dt = c_cfl · min(h_min², 1/max|A|²)`.
    pub c_cfl: f64,
    /// Rate of the spacing relaxation, in units of `1/h_mean²`.
    pub relaxation: f64,
    /// Stop when `max|A| · d_max(t_start)` exceeds this value.
    pub curvature_blowup: f64,
    /// Stop when the profile's extent drops below this fraction of its initial extent.
    pub diameter_collapse: f64,
    pub t_end: Option<f64>,
    pub max_steps: usize,
    /// Snapshot every this many accepted steps (0 disables).
    pub snapshot_every: usize,
    /// Additional snapshot times; the stepper lands on them exactly.
    pub snapshot_times: Vec<f64>,
    pub retry_cap: usize,
    /// Resample when `max h / min h` exceeds this.
    pub resample_ratio: f64,
    /// Full self-intersection check every this many steps.
    pub validate_every: usize,
    /// Axis floor as a fraction of the initial `d_max`.
    pub r_floor_factor: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            c_cfl: 0.2,
            relaxation: 0.5,
            curvature_blowup: 1e3,
            diameter_collapse: 1e-3,
            t_end: None,
            max_steps: 20_000_000,
            snapshot_every: 2000,
            snapshot_times: Vec::new(),
            retry_cap: 8,
            resample_ratio: 2.0,
            validate_every: 500,
            r_floor_factor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// `max|A|` crossed the blow-up threshold.
    CurvatureBlowup,
    /// The profile collapsed below the diameter threshold.
    DiameterCollapse,
    /// `t_end` reached.
    ReachedEnd,
    /// Step budget exhausted.
    Truncated,
    /// Step retries exhausted or invalid geometry.
    Fault,
}

impl Termination {
    pub fn is_singular(self) -> bool {
        matches!(self, Termination::CurvatureBlowup | Termination::DiameterCollapse)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowEvent {
    pub t: f64,
    pub step: usize,
    pub kind: String,
    pub detail: String,
}

/// One row per accepted state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DenseSeries {
    pub t: Vec<f64>,
    pub max_abs_a: Vec<f64>,
    pub min_r: Vec<f64>,
    pub d_min: Vec<f64>,
    pub d_max: Vec<f64>,
    pub min_s: Vec<f64>,
    pub max_f: Vec<f64>,
    pub length: Vec<f64>,
    pub area: Vec<f64>,
}

impl DenseSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn push(&mut self, t: f64, curve: &ProfileCurve, g: &GeometryBundle) {
        let (d_min, d_max) = radial_extent(curve);
        let (min_s, max_f) = match parabolic_from_bundle(g, t) {
            Ok(p) => (p.min_s(), p.max_f()),
            Err(_) => (f64::NAN, f64::NAN),
        };
        self.t.push(t);
        self.max_abs_a.push(g.max_abs_a());
        self.min_r.push(curve.min_r());
        self.d_min.push(d_min);
        self.d_max.push(d_max);
        self.min_s.push(min_s);
        self.max_f.push(max_f);
        self.length.push(curve.length());
        self.area.push(curve.area());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub t_start: f64,
    pub initial_d_max: f64,
    pub initial_extent: f64,
    pub snapshots: Vec<(f64, usize, ProfileCurve)>,
    pub events: Vec<FlowEvent>,
    pub series: DenseSeries,
    pub termination: Termination,
    pub options: FlowOptions,
}

impl Trajectory {
    pub fn final_state(&self) -> FlowState {
        let (t, step, c) = self.snapshots.last().expect("trajectory has snapshots");
        FlowState {
            curve: c.clone(),
            t: *t,
            step_index: *step,
        }
    }

    pub fn last_time(&self) -> f64 {
        *self.series.t.last().unwrap_or(&self.t_start)
    }

    /// The flow at time `t`, re-integrated from the latest snapshot at or
    /// before `t`.
    pub fn state_at(&self, t: f64) -> Result<ProfileCurve> {
        let idx = self
            .snapshots
            .iter()
            .rposition(|(ts, _, _)| *ts <= t)
            .ok_or_else(|| LabError::InvalidArgument(format!("time {t} precedes the trajectory")))?;
        let (ts, step, curve) = &self.snapshots[idx];
        if *ts == t {
            return Ok(curve.clone());
        }
        if t > self.last_time() {
            return Err(LabError::InvalidArgument(format!(
                "time {t} is past the end of the trajectory ({})",
                self.last_time()
            )));
        }
        let mut opts = self.options.clone();
        opts.t_end = Some(t);
        opts.snapshot_every = 0;
        opts.snapshot_times.clear();
        opts.curvature_blowup = f64::INFINITY;
        opts.diameter_collapse = 0.0;
        let mut state = FlowState {
            curve: curve.clone(),
            t: *ts,
            step_index: *step,
        };
        let r_floor = self.options.r_floor_factor * self.initial_d_max;
        while state.t < t {
            let g = geometry_bundle_with_floor(&state.curve, r_floor)?;
            let dt = stable_dt(&state.curve, &g, &opts).min(t - state.t);
            state = step_with_retries(&state, dt, r_floor, &opts, Some(&g))?.0;
            if t - state.t < 1e-14 * t.abs().max(1.0) {
                state.t = t;
            }
        }
        Ok(state.curve)
    }
}

/// Normal speed `-H` per node: nodes move by `-H ν`.
pub(crate) fn normal_speed(g: &GeometryBundle) -> Vec<f64> {
    g.mean_curvature.iter().map(|h| -h).collect()
}

/// Node velocities `-H ν + α τ`, where the tangential speed `α` drives all
/// chord lengths of the closed view toward their mean.
fn node_velocity(curve: &ProfileCurve, g: &GeometryBundle, relaxation: f64) -> Vec<Point> {
    let m = curve.len();
    let normal: Vec<Point> = (0..m).map(|i| g.normal[i] * (-g.mean_curvature[i])).collect();
    let view = curve.closed_view();
    let mv = view.len();
    let (disp, tang): (Vec<Point>, Vec<Point>) = if curve.topology() == Topology::AxisCapped {
        let mut d = normal.clone();
        d.extend(normal.iter().rev().map(|p| Point::new(p.x, -p.r)));
        let mut t = g.tangent.clone();
        t.extend(g.tangent.iter().rev().map(|p| Point::new(-p.x, p.r)));
        (d, t)
    } else {
        (normal.clone(), g.tangent.clone())
    };
    let mut h = Vec::with_capacity(mv);
    let mut rate = Vec::with_capacity(mv);
    for j in 0..mv {
        let k = (j + 1) % mv;
        let chord = view[k] - view[j];
        let len = chord.norm();
        h.push(len);
        rate.push(chord.dot(disp[k] - disp[j]) / len);
    }
    let total: f64 = h.iter().sum();
    let total_rate: f64 = rate.iter().sum();
    let mean_h = total / mv as f64;
    let omega = relaxation / (mean_h * mean_h);
    let mut alpha = Vec::with_capacity(mv);
    let mut a = 0.0;
    for j in 0..mv {
        alpha.push(a);
        a += total_rate / mv as f64 - rate[j] + omega * (mean_h - h[j]);
    }
    let mean_alpha = alpha.iter().sum::<f64>() / mv as f64;
    (0..m)
        .map(|i| normal[i] + tang[i] * (alpha[i] - mean_alpha))
        .collect()
}

pub(crate) fn stable_dt(curve: &ProfileCurve, g: &GeometryBundle, opts: &FlowOptions) -> f64 {
    let h = curve.min_spacing();
    let a2 = g.a_squared.iter().copied().fold(0.0, f64::max);
    opts.c_cfl * (h * h).min(if a2 > 0.0 { 1.0 / a2 } else { f64::INFINITY })
}

/// Largest admissible step for a state.
pub fn dt_max(state: &FlowState, opts: &FlowOptions) -> Result<f64> {
    let g = geometry_bundle_with_floor(&state.curve, 0.0)?;
    Ok(stable_dt(&state.curve, &g, opts))
}

fn advance(curve: &ProfileCurve, dt: f64, r_floor: f64, relaxation: f64, g0: Option<&GeometryBundle>) -> Result<ProfileCurve> {
    let owned;
    let g0 = match g0 {
        Some(g) => g,
        None => {
            owned = geometry_bundle_with_floor(curve, r_floor)?;
            &owned
        }
    };
    let v1 = node_velocity(curve, g0, relaxation);
    let mid_nodes: Vec<Point> = curve
        .nodes()
        .iter()
        .zip(&v1)
        .map(|(&p, &v)| p + v * dt)
        .collect();
    let mid = curve.with_nodes(mid_nodes);
    mid.validate_local()?;
    let g1 = geometry_bundle_with_floor(&mid, r_floor)?;
    let v2 = node_velocity(&mid, &g1, relaxation);
    let nodes: Vec<Point> = curve
        .nodes()
        .iter()
        .zip(v1.iter().zip(&v2))
        .map(|(&p, (&a, &b))| p + (a + b) * (0.5 * dt))
        .collect();
    let next = curve.with_nodes(nodes);
    next.validate_local()?;
    if next.min_r() <= r_floor {
        return Err(LabError::AxisContact {
            index: 0,
            r: next.min_r(),
            floor: r_floor,
        });
    }
    Ok(next)
}

/// One Heun step of size `dt`, followed by a resample when the spacing has
/// degraded.
pub fn step(state: &FlowState, dt: f64, opts: &FlowOptions) -> Result<FlowState> {
    if dt == 0.0 {
        return Ok(state.clone());
    }
    if !(dt > 0.0) {
        return Err(LabError::InvalidArgument(format!("time step {dt}")));
    }
    if state.curve.topology() == Topology::Open {
        return Err(LabError::InvalidArgument("open profiles cannot be evolved".into()));
    }
    let (_, d_max) = radial_extent(&state.curve);
    let r_floor = opts.r_floor_factor * d_max;
    Ok(step_with_retries(state, dt, r_floor, opts, None)?.0)
}

fn step_with_retries(
    state: &FlowState,
    dt: f64,
    r_floor: f64,
    opts: &FlowOptions,
    g0: Option<&GeometryBundle>,
) -> Result<(FlowState, usize, bool)> {
    let mut dt = dt;
    let mut last_err = None;
    for attempt in 0..=opts.retry_cap {
        match advance(&state.curve, dt, r_floor, opts.relaxation, g0) {
            Ok(mut curve) => {
                let mut resampled = false;
                if curve.spacing_ratio() > opts.resample_ratio {
                    let spacing = curve.length() / curve.len() as f64;
                    curve = resample(&curve, spacing)?;
                    resampled = true;
                }
                let step_index = state.step_index + 1;
                if opts.validate_every > 0 && step_index.is_multiple_of(opts.validate_every) {
                    if let Some((first, second)) = curve.first_self_intersection() {
                        last_err = Some(LabError::SelfIntersection { first, second });
                        dt *= 0.5;
                        continue;
                    }
                }
                return Ok((
                    FlowState {
                        curve,
                        t: state.t + dt,
                        step_index,
                    },
                    attempt,
                    resampled,
                ));
            }
            Err(e) => {
                last_err = Some(e);
                dt *= 0.5;
            }
        }
    }
    Err(LabError::Flow(format!(
        "step rejected {} times at t = {}: {}",
        opts.retry_cap + 1,
        state.t,
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

fn extent(curve: &ProfileCurve) -> f64 {
    let (mut lo, mut hi) = (
        Point::new(f64::INFINITY, f64::INFINITY),
        Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
    );
    for p in curve.closed_view() {
        lo = Point::new(lo.x.min(p.x), lo.r.min(p.r));
        hi = Point::new(hi.x.max(p.x), hi.r.max(p.r));
    }
    (hi - lo).norm()
}

/// Integrates until a singular, terminal or budget event.
pub fn evolve(initial: &FlowState, opts: &FlowOptions) -> Result<Trajectory> {
    if initial.curve.topology() == Topology::Open {
        return Err(LabError::InvalidArgument("open profiles cannot be evolved".into()));
    }
    initial.curve.validate()?;
    let n = initial.curve.n();
    let (_, d_max0) = radial_extent(&initial.curve);
    let extent0 = extent(&initial.curve);
    let r_floor = opts.r_floor_factor * d_max0;
    let mut snapshot_times: Vec<f64> = opts
        .snapshot_times
        .iter()
        .copied()
        .filter(|&s| s > initial.t)
        .collect();
    snapshot_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    snapshot_times.dedup();
    let mut next_snap = 0usize;

    let mut traj = Trajectory {
        n,
        t_start: initial.t,
        initial_d_max: d_max0,
        initial_extent: extent0,
        snapshots: vec![(initial.t, initial.step_index, initial.curve.clone())],
        events: vec![FlowEvent {
            t: initial.t,
            step: initial.step_index,
            kind: "start".into(),
            detail: format!("nodes={}", initial.curve.len()),
        }],
        series: DenseSeries::default(),
        termination: Termination::Truncated,
        options: opts.clone(),
    };
    let mut state = initial.clone();
    let mut steps_taken = 0usize;
    loop {
        let g = match geometry_bundle_with_floor(&state.curve, r_floor) {
            Ok(g) => g,
            Err(e) => {
                traj.termination = Termination::Fault;
                traj.events.push(event(&state, "fault", e.to_string()));
                break;
            }
        };
        traj.series.push(state.t, &state.curve, &g);
        let max_a = g.max_abs_a();
        if max_a * d_max0 > opts.curvature_blowup {
            traj.termination = Termination::CurvatureBlowup;
            traj.events.push(event(&state, "singular", format!("max|A|={max_a}")));
            break;
        }
        let ext = extent(&state.curve);
        if ext < opts.diameter_collapse * extent0 {
            traj.termination = Termination::DiameterCollapse;
            traj.events.push(event(&state, "singular", format!("extent={ext}")));
            break;
        }
        if let Some(t_end) = opts.t_end {
            if state.t >= t_end {
                traj.termination = Termination::ReachedEnd;
                traj.events.push(event(&state, "end", String::new()));
                break;
            }
        }
        if steps_taken >= opts.max_steps {
            traj.termination = Termination::Truncated;
            traj.events.push(event(&state, "truncated", format!("steps={steps_taken}")));
            break;
        }
        let mut dt = stable_dt(&state.curve, &g, opts);
        let mut target = None;
        if let Some(&ts) = snapshot_times.get(next_snap) {
            if state.t + dt >= ts {
                dt = ts - state.t;
                target = Some(ts);
            }
        }
        if let Some(t_end) = opts.t_end {
            if state.t + dt >= t_end {
                dt = t_end - state.t;
                target = Some(t_end);
            }
        }
        match step_with_retries(&state, dt, r_floor, opts, Some(&g)) {
            Ok((mut next, retries, resampled)) => {
                if let Some(ts) = target {
                    if retries == 0 {
                        next.t = ts;
                    }
                }
                if retries > 0 {
                    traj.events.push(event(&state, "step-rejected", format!("retries={retries}")));
                }
                if resampled {
                    traj.events.push(event(&next, "resampled", String::new()));
                }
                state = next;
                steps_taken += 1;
                let mut snap = opts.snapshot_every > 0 && state.step_index.is_multiple_of(opts.snapshot_every);
                while let Some(&ts) = snapshot_times.get(next_snap) {
                    if state.t >= ts {
                        next_snap += 1;
                        snap = true;
                    } else {
                        break;
                    }
                }
                if snap {
                    traj.snapshots.push((state.t, state.step_index, state.curve.clone()));
                }
            }
            Err(e) => {
                traj.termination = Termination::Fault;
                traj.events.push(event(&state, "fault", e.to_string()));
                break;
            }
        }
    }
    if traj.snapshots.last().map(|s| s.1) != Some(state.step_index) {
        traj.snapshots.push((state.t, state.step_index, state.curve.clone()));
    }
    Ok(traj)
}

fn event(state: &FlowState, kind: &str, detail: String) -> FlowEvent {
    FlowEvent {
        t: state.t,
        step: state.step_index,
        kind: kind.into(),
        detail,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{circle, cylinder_segment, sphere};

    fn mean_radius(c: &ProfileCurve) -> f64 {
        c.nodes().iter().map(|p| p.norm()).sum::<f64>() / c.len() as f64
    }

    #[test]
    fn sphere_single_step() {
        let s = FlowState::new(sphere(2, 1.0, 256).unwrap(), 0.0);
        let dt = 1e-5;
        let next = step(&s, dt, &FlowOptions::default()).unwrap();
        let exact = (1.0 - 4.0 * dt).sqrt();
        for p in next.curve.nodes() {
            assert!((p.norm() - exact).abs() < 1e-9, "{}", p.norm() - exact);
        }
        assert_eq!(next.t, dt);
        assert_eq!(next.step_index, 1);
    }

    #[test]
    fn zero_step_is_identity_and_bad_steps_fail() {
        let s = FlowState::new(sphere(2, 1.0, 32).unwrap(), 0.3);
        assert_eq!(step(&s, 0.0, &FlowOptions::default()).unwrap(), s);
        assert!(step(&s, -1e-3, &FlowOptions::default()).is_err());
        assert!(step(&s, f64::NAN, &FlowOptions::default()).is_err());
        let open = FlowState::new(cylinder_segment(2, 1.0, 1.0, 8).unwrap(), 0.0);
        assert!(step(&open, 1e-4, &FlowOptions::default()).is_err());
        assert!(evolve(&open, &FlowOptions::default()).is_err());
    }

    #[test]
    fn shrinker_normal_speed_is_support_over_two() {
        let c = sphere(2, 2.0, 128).unwrap();
        let g = crate::geometry::geometry_bundle(&c).unwrap();
        for (v, s) in normal_speed(&g).iter().zip(&g.support) {
            assert!((v + 0.5 * s).abs() < 1e-3);
        }
    }

    #[test]
    fn sphere_radius_law_converges_at_second_order() {
        let err = |m: usize| {
            let opts = FlowOptions { t_end: Some(0.2), ..FlowOptions::default() };
            let traj = evolve(&FlowState::new(sphere(2, 1.0, m).unwrap(), 0.0), &opts).unwrap();
            assert_eq!(traj.termination, Termination::ReachedEnd);
            let last = traj.final_state();
            assert_eq!(last.t, 0.2);
            (mean_radius(&last.curve) - (1.0f64 - 0.8).sqrt()).abs()
        };
        let (e1, e2, e3) = (err(16), err(32), err(64));
        let (o1, o2) = ((e1 / e2).log2(), (e2 / e3).log2());
        assert!(o1 > 1.8 && o2 > 1.8, "orders {o1} {o2}");
    }

    #[test]
    fn sphere_collapses_near_quarter() {
        let traj = evolve(&FlowState::new(sphere(2, 1.0, 48).unwrap(), 0.0), &FlowOptions::default()).unwrap();
        assert!(traj.termination.is_singular());
        let t = traj.last_time();
        assert!(t < 0.25 && t > 0.249, "{t}");
        assert_eq!(traj.snapshots.last().unwrap().1, traj.final_state().step_index);
        assert_eq!(traj.series.len(), traj.final_state().step_index + 1);
    }

    #[test]
    fn snapshot_times_are_hit_exactly() {
        let opts = FlowOptions {
            t_end: Some(0.05),
            snapshot_every: 0,
            snapshot_times: vec![0.03, 0.01, 0.02, 0.02],
            ..FlowOptions::default()
        };
        let traj = evolve(&FlowState::new(sphere(2, 1.0, 32).unwrap(), 0.0), &opts).unwrap();
        let ts: Vec<f64> = traj.snapshots.iter().map(|s| s.0).collect();
        assert_eq!(ts, vec![0.0, 0.01, 0.02, 0.03, 0.05]);
    }

    #[test]
    fn state_at_matches_direct_run() {
        let opts = FlowOptions {
            t_end: Some(0.04),
            snapshot_every: 0,
            snapshot_times: vec![0.02],
            ..FlowOptions::default()
        };
        let init = FlowState::new(circle(2, Point::new(0.0, 2.0), 0.5, 64).unwrap(), -1.0);
        let traj = evolve(&init, &opts).unwrap();
        let a = traj.state_at(-0.97).unwrap();
        let direct = evolve(&init, &FlowOptions { t_end: Some(-0.97), ..opts.clone() }).unwrap();
        let b = direct.final_state().curve;
        assert!(crate::geometry::hausdorff_distance(&a, &b) < 1e-6);
        assert!(traj.state_at(-2.0).is_err());
        assert!(traj.state_at(0.5).is_err());
    }

    #[test]
    fn truncation_is_reported() {
        let opts = FlowOptions { max_steps: 10, ..FlowOptions::default() };
        let traj = evolve(&FlowState::new(sphere(2, 1.0, 32).unwrap(), 0.0), &opts).unwrap();
        assert_eq!(traj.termination, Termination::Truncated);
        assert_eq!(traj.termination.exit_code(), 2);
        assert_eq!(traj.events.last().unwrap().kind, "truncated");
    }

    #[test]
    fn evolution_is_deterministic() {
        let opts = FlowOptions { t_end: Some(-0.9), ..FlowOptions::default() };
        let init = FlowState::new(circle(2, Point::new(0.0, 2.0), 0.6, 64).unwrap(), -1.0);
        assert_eq!(evolve(&init, &opts).unwrap(), evolve(&init, &opts).unwrap());
    }
}
