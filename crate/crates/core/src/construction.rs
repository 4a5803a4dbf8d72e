//! Perturbed tori, their flows to the neckpinch, and the parabolic rescaling
//! that exposes an ancient limit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{entropy_sup_grid, EntropyGrid};
use crate::error::{LabError, Result};
use crate::flow::{
    detect_singularity, evolve, type_one_profile, FlowState, FlowOptions, SingularShape,
    SingularityRecord, Termination, Trajectory, TypeOneSeries,
};
use crate::geometry::{
    enclosure_test, geometry_bundle, hausdorff_distance, normal_offset, parabolic_residual,
    proximity, radial_extent, ProfileCurve, Proximity,
};

pub const THREADS_ENV: &str = "SHRINKERLAB_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedTorus {
    pub i: u32,
    pub curve: ProfileCurve,
    pub proximity: Proximity,
    /// `min S` at `t = -1`, i.e. the minimum shrinker residual.
    pub min_s: f64,
}

/// `T_i`: the torus moved inward by `1/i` along its normal.
pub fn build_perturbed(torus: &ProfileCurve, i: u32) -> Result<PerturbedTorus> {
    if i == 0 {
        return Err(LabError::InvalidArgument("perturbation index must be positive".into()));
    }
    let curve = normal_offset(torus, -1.0 / i as f64)?;
    let min_s = parabolic_residual(&curve, -1.0)?.min_s();
    if !(min_s > 0.0) {
        return Err(LabError::NotMeanConvex { i, margin: min_s });
    }
    Ok(PerturbedTorus {
        i,
        proximity: proximity(&curve, torus)?,
        curve,
        min_s,
    })
}

/// First-order prediction of `min S(T_i)`, up to the factor `1/i`:
/// `min (|A|² + 1/2)` over the torus.
pub fn perturbation_law(torus: &ProfileCurve) -> Result<f64> {
    Ok(geometry_bundle(torus)?
        .a_squared
        .iter()
        .map(|a| a + 0.5)
        .fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyOptions {
    pub i_list: Vec<u32>,
    pub flow: FlowOptions,
    /// Worker count; falls back to `SHRINKERLAB_THREADS`, then rayon's default.
    pub threads: Option<usize>,
    pub entropy: bool,
}

impl Default for FamilyOptions {
    fn default() -> Self {
        Self {
            i_list: vec![4, 8, 16, 32],
            flow: FlowOptions::default(),
            threads: None,
            entropy: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyMember {
    pub perturbed: PerturbedTorus,
    pub trajectory: Trajectory,
    pub record: Option<SingularityRecord>,
    pub entropy_sup: Option<f64>,
    /// Why the member is excluded from aggregates, if it is.
    pub flagged: Option<String>,
}

impl FamilyMember {
    pub fn i(&self) -> u32 {
        self.perturbed.i
    }

    pub fn is_clean(&self) -> bool {
        self.flagged.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyRun {
    pub torus: ProfileCurve,
    pub members: Vec<FamilyMember>,
}

pub fn thread_count(requested: Option<usize>) -> Option<usize> {
    requested.or_else(|| {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .filter(|&k: &usize| k > 0)
    })
}

/// Builds every `T_i` (failing fast if one is not shrinker mean convex), then
/// evolves them concurrently. Members come back sorted by `i`.
pub fn run_family(torus: &ProfileCurve, opts: &FamilyOptions) -> Result<FamilyRun> {
    let mut i_list = opts.i_list.clone();
    i_list.sort_unstable();
    i_list.dedup();
    let perturbed: Vec<PerturbedTorus> = i_list
        .iter()
        .map(|&i| build_perturbed(torus, i))
        .collect::<Result<_>>()?;
    let work = || -> Vec<Result<FamilyMember>> {
        perturbed
            .par_iter()
            .map(|p| run_member(p.clone(), &opts.flow, opts.entropy))
            .collect()
    };
    let results = match thread_count(opts.threads) {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| LabError::InvalidArgument(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    Ok(FamilyRun {
        torus: torus.clone(),
        members: results.into_iter().collect::<Result<_>>()?,
    })
}

pub fn run_member(perturbed: PerturbedTorus, flow: &FlowOptions, entropy: bool) -> Result<FamilyMember> {
    let entropy_sup = if entropy {
        Some(entropy_sup_grid(&perturbed.curve, &EntropyGrid::for_curve(&perturbed.curve))?.value)
    } else {
        None
    };
    let trajectory = evolve(&FlowState::new(perturbed.curve.clone(), -1.0), flow)?;
    Ok(classify(perturbed, trajectory, entropy_sup))
}

/// Attaches the singularity record and the clean/flagged verdict to a finished flow.
pub fn classify(perturbed: PerturbedTorus, trajectory: Trajectory, entropy_sup: Option<f64>) -> FamilyMember {
    let (record, flagged) = if trajectory.termination.is_singular() {
        match detect_singularity(&trajectory) {
            Ok(r) if !r.confident => (Some(r), Some("low-confidence singularity fit".to_string())),
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, Some(format!("flow ended with {:?}", trajectory.termination)))
    };
    FamilyMember {
        perturbed,
        trajectory,
        record,
        entropy_sup,
        flagged,
    }
}

/// A flow mapped by `X ↦ X/d`, `t ↦ t/d²`.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledFlow {
    pub scale: f64,
    pub t_sing: f64,
    pub trajectory: Trajectory,
    pub type_one: TypeOneSeries,
}

pub fn rescale_flow(traj: &Trajectory, record: &SingularityRecord) -> Result<RescaledFlow> {
    let d = record.d_sing;
    if !(d > 0.0) {
        return Err(LabError::InvalidArgument(format!("rescaling needs d_sing > 0, got {d}")));
    }
    let (l, l2) = (1.0 / d, 1.0 / (d * d));
    let s = &traj.series;
    let mut out = traj.clone();
    out.t_start *= l2;
    out.initial_d_max *= l;
    out.initial_extent *= l;
    out.snapshots = traj
        .snapshots
        .iter()
        .map(|(t, k, c)| (t * l2, *k, c.scaled(l)))
        .collect();
    for e in &mut out.events {
        e.t *= l2;
    }
    let mul = |v: &[f64], f: f64| v.iter().map(|x| x * f).collect::<Vec<_>>();
    out.series.t = mul(&s.t, l2);
    out.series.max_abs_a = mul(&s.max_abs_a, d);
    out.series.min_r = mul(&s.min_r, l);
    out.series.d_min = mul(&s.d_min, l);
    out.series.d_max = mul(&s.d_max, l);
    out.series.min_s = mul(&s.min_s, d);
    out.series.max_f = mul(&s.max_f, l);
    out.series.length = mul(&s.length, l);
    out.series.area = mul(&s.area, l2);
    out.options.t_end = traj.options.t_end.map(|t| t * l2);
    out.options.snapshot_times = traj.options.snapshot_times.iter().map(|t| t * l2).collect();
    let rec = SingularityRecord {
        t_sing: record.t_sing * l2,
        d_sing: 1.0,
        center_x: record.center_x * l,
        ..record.clone()
    };
    let type_one = type_one_profile(&out, &rec);
    Ok(RescaledFlow {
        scale: d,
        t_sing: rec.t_sing,
        trajectory: out,
        type_one,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyRow {
    pub i: u32,
    pub hausdorff: f64,
    pub normal_sup: f64,
    pub kappa_sup: f64,
    pub min_s_initial: f64,
    pub t_sing: Option<f64>,
    pub d_sing: Option<f64>,
    pub ratio: Option<f64>,
    #[serde(rename = "typeI_constant")]
    pub type_one_constant: Option<f64>,
    pub entropy_sup: Option<f64>,
    pub termination: Termination,
    pub shape: Option<SingularShape>,
    /// `T_i(t)` lies inside `√(-t)·T` at every snapshot.
    pub enclosed: bool,
    /// The radius bounds hold at every recorded step.
    pub radius_bounds: bool,
    /// `min S > 0` at every recorded step.
    pub min_s_positive: bool,
    /// Most negative `max F` relative to the noise level, over recorded steps.
    #[serde(with = "crate::io::lenient_f64")]
    pub nonsoliton_margin: f64,
    pub flagged: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyTable {
    pub times: Vec<f64>,
    /// `(i, i')` for each consecutive clean pair.
    pub pairs: Vec<(u32, u32)>,
    /// `distances[p][k]`: pair `p` at grid time `k`.
    pub distances: Vec<Vec<f64>>,
    pub decreasing: bool,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowdownSeries {
    pub i: u32,
    pub t: Vec<f64>,
    /// `hausdorff(T̃_t, √(-t)·T)/√(-t)`.
    pub distance: Vec<f64>,
    /// Distances shrink toward earlier rescaled times.
    pub decreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyAggregates {
    pub t_sing_increasing: bool,
    pub d_sing_decreasing: bool,
    pub all_circles: bool,
    pub ratio_band: Option<(f64, f64)>,
    pub type_one_band: Option<(f64, f64)>,
    pub type_one_uniform: bool,
    pub entropy_below_two: bool,
    pub perturbation_law: f64,
    pub radius_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub n: usize,
    pub rows: Vec<FamilyRow>,
    pub aggregates: FamilyAggregates,
    pub cauchy: CauchyTable,
    pub blowdown: Vec<BlowdownSeries>,
}

/// Tightest `C` with `√(-2t)/C ≤ d_min ≤ d_max ≤ C√(-2t)` on the torus at `t = -1`.
pub fn radius_constant(torus: &ProfileCurve) -> f64 {
    let (d_min, d_max) = radial_extent(torus);
    let s = 2f64.sqrt();
    (s / d_min).max(d_max / s)
}

/// Noise level below which `max F` is indistinguishable from zero: ten
/// times the torus's discretisation residual, scaled like `F` at time `t`.
pub fn f_noise(torus: &ProfileCurve, t: f64) -> Result<f64> {
    let res = crate::geometry::shrinker_residual(torus)?
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(10.0 * 2.0 * res * (-t).sqrt())
}

fn row(member: &FamilyMember, torus: &ProfileCurve, c_radius: f64) -> Result<FamilyRow> {
    let traj = &member.trajectory;
    let mut enclosed = true;
    for (t, _, c) in &traj.snapshots {
        if *t < 0.0 && !enclosure_test(c, &torus.scaled((-t).sqrt())).enclosed {
            enclosed = false;
            break;
        }
    }
    let s = &traj.series;
    let mut radius_bounds = true;
    let mut min_s_positive = true;
    let mut nonsoliton_margin = f64::INFINITY;
    for k in 0..s.len() {
        let t = s.t[k];
        if t >= 0.0 {
            continue;
        }
        let w = (-2.0 * t).sqrt();
        if !(w / c_radius < s.d_min[k] && s.d_max[k] < c_radius * w) {
            radius_bounds = false;
        }
        if !(s.min_s[k] > 0.0) {
            min_s_positive = false;
        }
        nonsoliton_margin = nonsoliton_margin.min(s.max_f[k] / f_noise(torus, t)?);
    }
    let rec = member.record.as_ref();
    Ok(FamilyRow {
        i: member.i(),
        hausdorff: member.perturbed.proximity.hausdorff,
        normal_sup: member.perturbed.proximity.normal_sup,
        kappa_sup: member.perturbed.proximity.kappa_sup,
        min_s_initial: member.perturbed.min_s,
        t_sing: rec.map(|r| r.t_sing),
        d_sing: rec.map(|r| r.d_sing),
        ratio: rec.map(|r| r.d_sing * r.d_sing / -r.t_sing),
        type_one_constant: rec.map(|r| r.type_one_constant),
        entropy_sup: member.entropy_sup,
        termination: traj.termination,
        shape: rec.map(|r| r.shape),
        enclosed,
        radius_bounds,
        min_s_positive,
        nonsoliton_margin,
        flagged: member.flagged.clone(),
    })
}

fn band(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOptions {
    pub grid_points: usize,
    /// Fraction of the shortest rescaled history used as the early end of the grid.
    pub safety: f64,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self {
            grid_points: 6,
            safety: 0.9,
        }
    }
}

fn clean(run: &FamilyRun) -> impl Iterator<Item = (&FamilyMember, &SingularityRecord)> {
    run.members
        .iter()
        .filter(|m| m.is_clean())
        .filter_map(|m| m.record.as_ref().map(|r| (m, r)))
        .filter(|(_, r)| r.d_sing > 0.0)
}

/// Rescaled curve of a member at rescaled time `tau`.
fn rescaled_at(member: &FamilyMember, record: &SingularityRecord, tau: f64) -> Result<ProfileCurve> {
    let d = record.d_sing;
    Ok(member.trajectory.state_at(tau * d * d)?.scaled(1.0 / d))
}

/// Hausdorff distances between consecutive rescaled flows on a common time grid.
pub fn convergence_report(run: &FamilyRun, opts: &ConvergenceOptions) -> Result<CauchyTable> {
    let members: Vec<_> = clean(run).collect();
    if members.len() < 2 {
        return Err(LabError::InvalidArgument("need at least two clean rescaled flows".into()));
    }
    let mut warning = None;
    if members.len() < 3 {
        warning = Some(format!("only {} clean rescaled flows", members.len()));
    }
    // Every rescaled flow starts at -1/d² and ends at t_sing/d².
    let t_lo = -opts.safety * members.iter().map(|(_, r)| 1.0 / (r.d_sing * r.d_sing)).fold(f64::INFINITY, f64::min);
    let first_sing = members.iter().map(|(_, r)| r.t_sing / (r.d_sing * r.d_sing)).fold(f64::INFINITY, f64::min);
    // Stay well before the earliest singular time, but inside every domain.
    let t_hi = (2.0 * first_sing).max(0.5 * (t_lo + first_sing));
    if !(t_hi > t_lo) {
        return Err(LabError::InvalidArgument(format!(
            "no common rescaled time range: [{t_lo}, {first_sing})"
        )));
    }
    let k = opts.grid_points.max(2);
    let times: Vec<f64> = (0..k)
        .map(|j| t_lo + (t_hi - t_lo) * j as f64 / (k - 1) as f64)
        .collect();
    let curves: Vec<Vec<ProfileCurve>> = members
        .par_iter()
        .map(|(m, r)| times.iter().map(|&tau| rescaled_at(m, r, tau)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let mut pairs = Vec::new();
    let mut distances = Vec::new();
    for p in 0..members.len() - 1 {
        pairs.push((members[p].0.i(), members[p + 1].0.i()));
        distances.push(
            (0..k)
                .map(|j| hausdorff_distance(&curves[p][j], &curves[p + 1][j]))
                .collect::<Vec<_>>(),
        );
    }
    let decreasing = distances
        .windows(2)
        .all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| b <= a));
    Ok(CauchyTable {
        times,
        pairs,
        distances,
        decreasing,
        warning,
    })
}

/// Normalised distance of the rescaled flow to the self-similar torus flow
/// over the early part of its history (the first half of its rescaled
/// lifespan).
pub fn blowdown_check(member: &FamilyMember, record: &SingularityRecord, torus: &ProfileCurve) -> Result<BlowdownSeries> {
    let d = record.d_sing;
    if !(d > 0.0) {
        return Err(LabError::InvalidArgument("blowdown needs a circle singularity".into()));
    }
    let start = member.trajectory.t_start / (d * d);
    let sing = record.t_sing / (d * d);
    let cutoff = 0.5 * (start + sing);
    let mut t = Vec::new();
    let mut distance = Vec::new();
    for (ts, _, c) in &member.trajectory.snapshots {
        let tau = ts / (d * d);
        if tau > cutoff {
            break;
        }
        let w = (-tau).sqrt();
        t.push(tau);
        distance.push(hausdorff_distance(&c.scaled(1.0 / d), &torus.scaled(w)) / w);
    }
    let decreasing = distance.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9));
    Ok(BlowdownSeries {
        i: member.i(),
        t,
        distance,
        decreasing,
    })
}

pub fn family_report(run: &FamilyRun, opts: &ConvergenceOptions) -> Result<FamilyReport> {
    let c_radius = 1.1 * radius_constant(&run.torus);
    let rows: Vec<FamilyRow> = run
        .members
        .par_iter()
        .map(|m| row(m, &run.torus, c_radius))
        .collect::<Result<_>>()?;
    let clean_rows: Vec<&FamilyRow> = rows.iter().filter(|r| r.flagged.is_none()).collect();
    let t_vals: Vec<f64> = clean_rows.iter().filter_map(|r| r.t_sing).collect();
    let d_vals: Vec<f64> = clean_rows.iter().filter_map(|r| r.d_sing).collect();
    let type_one_band = band(clean_rows.iter().filter_map(|r| r.type_one_constant));
    let aggregates = FamilyAggregates {
        t_sing_increasing: t_vals.iter().all(|&t| t < 0.0) && t_vals.windows(2).all(|w| w[1] > w[0]),
        d_sing_decreasing: d_vals.windows(2).all(|w| w[1] < w[0]),
        all_circles: !rows.is_empty()
            && rows.iter().all(|r| r.flagged.is_none() && r.shape == Some(SingularShape::Circle)),
        ratio_band: band(clean_rows.iter().filter_map(|r| r.ratio)),
        type_one_band,
        type_one_uniform: type_one_band.is_some_and(|(lo, hi)| hi <= 2.0 * lo),
        entropy_below_two: rows.iter().all(|r| r.entropy_sup.is_none_or(|e| e < 2.0)),
        perturbation_law: perturbation_law(&run.torus)?,
        radius_constant: c_radius,
    };
    let cauchy = match convergence_report(run, opts) {
        Ok(c) => c,
        Err(e) => CauchyTable {
            times: vec![],
            pairs: vec![],
            distances: vec![],
            decreasing: false,
            warning: Some(e.to_string()),
        },
    };
    let blowdown = clean(run)
        .map(|(m, r)| blowdown_check(m, r, &run.torus))
        .collect::<Result<_>>()?;
    Ok(FamilyReport {
        n: run.torus.n(),
        rows,
        aggregates,
        cauchy,
        blowdown,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::reference::{circle, sphere};
    use crate::shooting::{find_torus_auto, TorusOptions};
    use std::sync::OnceLock;

    fn torus() -> &'static ProfileCurve {
        static T: OnceLock<ProfileCurve> = OnceLock::new();
        T.get_or_init(|| {
            let opts = TorusOptions { nodes: 256, ..TorusOptions::default() };
            find_torus_auto(2, 1e-10, &opts).unwrap().profile
        })
    }

    #[test]
    fn perturbed_torus_moves_inward() {
        let t = torus();
        let p = build_perturbed(t, 16).unwrap();
        assert!((p.proximity.hausdorff - 1.0 / 16.0).abs() < 1e-3);
        assert!(p.min_s > 0.0);
        assert!(enclosure_test(&p.curve, t).enclosed);
        assert!(build_perturbed(t, 0).is_err());
    }

    #[test]
    fn perturbation_scales_like_one_over_i() {
        let t = torus();
        let law = perturbation_law(t).unwrap();
        assert!(law > 0.5);
        let s8 = build_perturbed(t, 8).unwrap().min_s;
        let s16 = build_perturbed(t, 16).unwrap().min_s;
        assert!((s8 / s16 - 2.0).abs() < 0.3, "{}", s8 / s16);
        assert!((16.0 * s16 / law - 1.0).abs() < 0.15, "{}", 16.0 * s16 / law);
    }

    #[test]
    fn radius_constant_brackets_the_torus() {
        let t = torus();
        let c = radius_constant(t);
        let (lo, hi) = radial_extent(t);
        let w = 2f64.sqrt();
        assert!(w / c <= lo * (1.0 + 1e-12) && hi <= c * w * (1.0 + 1e-12));
        assert!(c > 1.0);
    }

    #[test]
    fn noise_scales_like_f() {
        let t = torus();
        let a = f_noise(t, -1.0).unwrap();
        let b = f_noise(t, -0.25).unwrap();
        assert!(a > 0.0 && (b / a - 0.5).abs() < 1e-12);
    }

    #[test]
    fn thread_override() {
        assert_eq!(thread_count(Some(3)), Some(3));
    }

    fn small_member() -> FamilyMember {
        let curve = circle(2, Point::new(0.0, 2.0), 0.3, 64).unwrap();
        let perturbed = PerturbedTorus {
            i: 1,
            proximity: proximity(&curve, &curve).unwrap(),
            curve: curve.clone(),
            min_s: 1.0,
        };
        let traj = evolve(&FlowState::new(curve, -1.0), &FlowOptions::default()).unwrap();
        classify(perturbed, traj, None)
    }

    #[test]
    fn classification_and_rescaling() {
        let m = small_member();
        assert!(m.is_clean(), "{:?}", m.flagged);
        let rec = m.record.clone().unwrap();
        assert_eq!(rec.shape, SingularShape::Circle);
        let r = rescale_flow(&m.trajectory, &rec).unwrap();
        let d = rec.d_sing;
        assert!((r.t_sing - rec.t_sing / (d * d)).abs() < 1e-12);
        assert!((r.type_one.sup - rec.type_one_constant).abs() < 1e-9 * rec.type_one_constant);
        let (t0, _, c0) = &r.trajectory.snapshots[0];
        assert!((t0 + 1.0 / (d * d)).abs() < 1e-12);
        assert!((c0.centroid().r - 2.0 / d).abs() < 1e-9);
        assert!(rescale_flow(&m.trajectory, &SingularityRecord { d_sing: 0.0, ..rec }).is_err());
    }

    #[test]
    fn unfinished_flow_is_flagged() {
        let curve = sphere(2, 1.0, 32).unwrap();
        let perturbed = PerturbedTorus {
            i: 2,
            proximity: proximity(&curve, &curve).unwrap(),
            curve: curve.clone(),
            min_s: 1.0,
        };
        let opts = FlowOptions { max_steps: 5, ..FlowOptions::default() };
        let traj = evolve(&FlowState::new(curve, -1.0), &opts).unwrap();
        let m = classify(perturbed, traj, None);
        assert!(!m.is_clean());
        assert!(m.record.is_none());
    }

    #[test]
    fn cauchy_needs_two_members() {
        let run = FamilyRun {
            torus: torus().clone(),
            members: vec![small_member()],
        };
        assert!(convergence_report(&run, &ConvergenceOptions::default()).is_err());
    }
}
