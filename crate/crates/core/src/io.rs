//! On-disk formats: curve JSON, series CSV, run archives. Every write goes
//! through a temporary file and a rename.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::flow::{DenseSeries, FlowEvent, FlowOptions, SingularityRecord, Termination, Trajectory};
use crate::geometry::{Point, ProfileCurve, Topology};

pub const SERIES_HEADER: &str = "# shrinkerlab series v1";
pub const SERIES_COLUMNS: &str = "t,max_abs_A,d_min,d_max,min_S,max_F,length,area,min_r";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CurveJson {
    n: usize,
    /// `false` marks an arc with both ends on the axis.
    closed: bool,
    nodes: Vec<[f64; 2]>,
}

pub fn curve_to_json(curve: &ProfileCurve) -> Result<String> {
    let closed = match curve.topology() {
        Topology::Closed => true,
        Topology::AxisCapped => false,
        Topology::Open => {
            return Err(LabError::Format("open profiles have no JSON form".into()));
        }
    };
    let doc = CurveJson {
        n: curve.n(),
        closed,
        nodes: curve.nodes().iter().map(|p| [p.x, p.r]).collect(),
    };
    let mut s = serde_json::to_string(&doc)?;
    s.push('\n');
    Ok(s)
}

pub fn curve_from_json(text: &str) -> Result<ProfileCurve> {
    let doc: CurveJson = serde_json::from_str(text)?;
    let topology = if doc.closed { Topology::Closed } else { Topology::AxisCapped };
    let nodes = doc.nodes.iter().map(|&[x, r]| Point::new(x, r)).collect();
    ProfileCurve::new(doc.n, topology, nodes)
}

pub fn read_curve(path: &Path) -> Result<ProfileCurve> {
    let text = fs::read_to_string(path).map_err(|e| LabError::Io(format!("{}: {e}", path.display())))?;
    curve_from_json(&text)
}

pub fn write_curve(path: &Path, curve: &ProfileCurve) -> Result<()> {
    write_atomic(path, curve_to_json(curve)?.as_bytes())
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| LabError::Io(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| LabError::Io(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn cell(out: &mut String, v: f64) {
    if v.is_finite() {
        let _ = write!(out, "{v}");
    }
}

/// Series CSV with every `stride`-th row; the final row is always kept.
pub fn series_to_csv(series: &DenseSeries, stride: usize) -> String {
    let stride = stride.max(1);
    let mut out = String::new();
    out.push_str(SERIES_HEADER);
    out.push('\n');
    out.push_str(SERIES_COLUMNS);
    out.push('\n');
    let m = series.len();
    for k in 0..m {
        if k % stride != 0 && k + 1 != m {
            continue;
        }
        let row = [
            series.t[k],
            series.max_abs_a[k],
            series.d_min[k],
            series.d_max[k],
            series.min_s[k],
            series.max_f[k],
            series.length[k],
            series.area[k],
            series.min_r[k],
        ];
        for (j, &v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            cell(&mut out, v);
        }
        out.push('\n');
    }
    out
}

pub fn series_from_csv(text: &str) -> Result<DenseSeries> {
    let mut lines = text.lines();
    if lines.next() != Some(SERIES_HEADER) {
        return Err(LabError::Format("missing or unknown series header".into()));
    }
    if lines.next() != Some(SERIES_COLUMNS) {
        return Err(LabError::Format("unexpected series columns".into()));
    }
    let mut s = DenseSeries::default();
    for (lineno, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|c| if c.is_empty() { Ok(f64::NAN) } else { c.parse::<f64>() })
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| LabError::Format(format!("series row {}: {e}", lineno + 1)))?;
        if vals.len() != 9 {
            return Err(LabError::Format(format!("series row {} has {} columns", lineno + 1, vals.len())));
        }
        s.t.push(vals[0]);
        s.max_abs_a.push(vals[1]);
        s.d_min.push(vals[2]);
        s.d_max.push(vals[3]);
        s.min_s.push(vals[4]);
        s.max_f.push(vals[5]);
        s.length.push(vals[6]);
        s.area.push(vals[7]);
        s.min_r.push(vals[8]);
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SnapshotEntry {
    t: f64,
    step: usize,
    file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunManifest {
    format: u32,
    n: usize,
    t_start: f64,
    initial_d_max: f64,
    initial_extent: f64,
    termination: Termination,
    series_stride: usize,
    options: FlowOptions,
    snapshots: Vec<SnapshotEntry>,
}

pub fn snapshot_name(k: usize) -> String {
    format!("snap_{k:05}.json")
}

/// Archives a trajectory into `dir`: `series.csv`, `snap_<k>.json`,
/// `events.json`, `singularity.json` (when given) and the `run.json` manifest,
/// written last so that its presence marks a complete archive.
pub fn write_run(dir: &Path, traj: &Trajectory, record: Option<&SingularityRecord>, stride: usize) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest_path = dir.join("run.json");
    if manifest_path.exists() {
        fs::remove_file(&manifest_path)?;
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("");
        if name.starts_with("snap_") && name.ends_with(".json") {
            fs::remove_file(&path)?;
        }
    }
    write_atomic(&dir.join("series.csv"), series_to_csv(&traj.series, stride).as_bytes())?;
    let mut entries = Vec::with_capacity(traj.snapshots.len());
    for (k, (t, step, curve)) in traj.snapshots.iter().enumerate() {
        let file = snapshot_name(k);
        write_curve(&dir.join(&file), curve)?;
        entries.push(SnapshotEntry {
            t: *t,
            step: *step,
            file,
        });
    }
    write_json(&dir.join("events.json"), &traj.events)?;
    let sing = dir.join("singularity.json");
    match record {
        Some(r) => write_json(&sing, r)?,
        None if sing.exists() => fs::remove_file(&sing)?,
        None => {}
    }
    let manifest = RunManifest {
        format: 1,
        n: traj.n,
        t_start: traj.t_start,
        initial_d_max: traj.initial_d_max,
        initial_extent: traj.initial_extent,
        termination: traj.termination,
        series_stride: stride.max(1),
        options: traj.options.clone(),
        snapshots: entries,
    };
    write_json(&manifest_path, &manifest)
}

pub fn run_is_complete(dir: &Path) -> bool {
    dir.join("run.json").is_file()
}

/// Reads an archive written by [`write_run`]. The series holds only the
/// archived rows.
pub fn read_run(dir: &Path) -> Result<(Trajectory, Option<SingularityRecord>)> {
    let manifest: RunManifest = read_json(&dir.join("run.json"))?;
    let series_text = fs::read_to_string(dir.join("series.csv"))?;
    let series = series_from_csv(&series_text)?;
    let mut snapshots = Vec::with_capacity(manifest.snapshots.len());
    for e in &manifest.snapshots {
        snapshots.push((e.t, e.step, read_curve(&dir.join(&e.file))?));
    }
    let events: Vec<FlowEvent> = read_json(&dir.join("events.json"))?;
    let sing = dir.join("singularity.json");
    let record = if sing.is_file() { Some(read_json(&sing)?) } else { None };
    Ok((
        Trajectory {
            n: manifest.n,
            t_start: manifest.t_start,
            initial_d_max: manifest.initial_d_max,
            initial_extent: manifest.initial_extent,
            snapshots,
            events,
            series,
            termination: manifest.termination,
            options: manifest.options,
        },
        record,
    ))
}

pub fn member_dir(root: &Path, i: u32) -> PathBuf {
    root.join(format!("i_{i:03}"))
}

/// Non-finite floats as JSON `null`, read back as NaN.
pub(crate) mod lenient_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}
