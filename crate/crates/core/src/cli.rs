//! Command-line front end. [`execute`] maps argv to an exit code:
//! 0 success, 2 truncated run, 3 fault, 64 unknown command, 65 invalid config.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::construction::{
    build_perturbed, family_report, run_member, ConvergenceOptions, FamilyMember, FamilyOptions,
    FamilyReport, FamilyRun,
};
use crate::entropy::{entropy_report, EntropyGrid};
use crate::error::LabError;
use crate::flow::{detect_singularity, evolve, FlowOptions, FlowState, Termination};
use crate::geometry::ProfileCurve;
use crate::io::{
    member_dir, read_curve, read_json, read_run, run_is_complete, write_atomic, write_curve,
    write_json, write_run,
};
use crate::shooting::{
    bracket_from_scan, default_scan, find_torus, find_torus_auto, scan, shoot, IntegratorOptions,
    TorusOptions,
};
use crate::svg::{render_profile_svg, render_series_svg, Style};

pub const EXIT_OK: i32 = 0;
pub const EXIT_TRUNCATED: i32 = 2;
pub const EXIT_FAULT: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_CONFIG: i32 = 65;

#[derive(Parser, Debug)]
#[command(name = "shrinkerlab", version, about = "Self-shrinking tori and the flows of their perturbations")]
struct Cli {
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
    /// Print the summary line as JSON.
    #[arg(long, global = true)]
    json_summary: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Shoot geodesics from the symmetry plane and report the return miss.
    Shoot(ShootArgs),
    /// Bisect for the shrinker torus and write its profile.
    FindTorus(FindTorusArgs),
    /// Gaussian area, entropy and the length bound of a profile.
    Entropy(EntropyArgs),
    /// Evolve a profile by mean curvature flow to its first singularity.
    Evolve(EvolveArgs),
    /// Perturb, evolve and rescale the torus family.
    Construct(ConstructArgs),
    /// Render figures for an archived run or family.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct ShootArgs {
    #[arg(long)]
    n: usize,
    /// `lo:hi:step`; defaults to a scan below the cylinder radius.
    #[arg(long)]
    scan: Option<String>,
    /// A single initial height instead of a scan.
    #[arg(long)]
    r0: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FindTorusArgs {
    #[arg(long)]
    n: usize,
    /// `a,b`; found by scanning when omitted.
    #[arg(long)]
    bracket: Option<String>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 2048)]
    nodes: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EntropyArgs {
    #[arg(long)]
    curve: PathBuf,
    /// Also take the supremum over centres and scales.
    #[arg(long)]
    sup_grid: bool,
    /// Append a row to this CSV file.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct FlowArgs {
    #[arg(long, allow_negative_numbers = true)]
    t_end: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    snapshot_every: Option<usize>,
    /// Comma-separated extra snapshot times.
    #[arg(long, allow_hyphen_values = true)]
    snapshot_times: Option<String>,
    #[arg(long)]
    c_cfl: Option<f64>,
    /// Archive every k-th row of the dense series [default: 1 for evolve,
    /// 100 for construct].
    #[arg(long)]
    series_stride: Option<usize>,
}

#[derive(Args, Debug)]
struct EvolveArgs {
    #[arg(long)]
    curve: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    t0: f64,
    /// Overrides the dimension stored in the curve file.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flow: FlowArgs,
}

#[derive(Args, Debug)]
struct ConstructArgs {
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long = "i", default_value = "4,8,16,32")]
    i_list: String,
    #[arg(long)]
    out: PathBuf,
    /// Use this torus instead of shooting one.
    #[arg(long)]
    torus: Option<PathBuf>,
    #[arg(long, default_value_t = 1024)]
    nodes: usize,
    #[arg(long)]
    threads: Option<usize>,
    /// Reuse complete member archives found under `--out`.
    #[arg(long)]
    resume: bool,
    /// Skip the entropy supremum of each perturbed torus.
    #[arg(long)]
    no_entropy: bool,
    #[command(flatten)]
    flow: FlowArgs,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long, conflicts_with = "run", required_unless_present = "run")]
    family: Option<PathBuf>,
    #[arg(long)]
    run: Option<PathBuf>,
    #[arg(long)]
    svg: bool,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Fault(String),
}

type CliResult<T> = std::result::Result<T, CliError>;

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Shooting(_)
            | LabError::NoSignChange { .. }
            | LabError::Flow(_)
            | LabError::Io(_)
            | LabError::FocalDistance { .. } => CliError::Fault(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn config<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(msg.into()))
}

fn load_curve(path: &Path) -> CliResult<ProfileCurve> {
    read_curve(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .map(|p| p.trim().parse::<T>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| CliError::Config(format!("cannot parse {what} from {s:?}")))
}

fn check_n(n: usize) -> CliResult<()> {
    if n < 2 {
        return config(format!("dimension n must be at least 2, got {n}"));
    }
    Ok(())
}

fn check_positive(v: f64, what: &str) -> CliResult<()> {
    if !(v > 0.0) || !v.is_finite() {
        return config(format!("{what} must be positive, got {v}"));
    }
    Ok(())
}

struct Output {
    quiet: bool,
    json: bool,
}

impl Output {
    fn summary(&self, command: &str, fields: Value) {
        if self.quiet {
            return;
        }
        if self.json {
            let mut obj = serde_json::Map::new();
            obj.insert("command".into(), json!(command));
            if let Value::Object(m) = fields {
                obj.extend(m);
            }
            println!("{}", Value::Object(obj));
        } else {
            let mut line = command.to_string();
            if let Value::Object(m) = fields {
                for (k, v) in m {
                    let _ = write!(line, " {k}={}", v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string()));
                }
            }
            println!("{line}");
        }
    }
}

/// Runs one command line (`argv[0]` is the program name).
pub fn execute<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                ErrorKind::InvalidSubcommand
                | ErrorKind::MissingSubcommand
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => EXIT_USAGE,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return code;
        }
    };
    let out = Output {
        quiet: cli.quiet,
        json: cli.json_summary,
    };
    let result = match cli.command {
        Command::Shoot(a) => cmd_shoot(a, &out),
        Command::FindTorus(a) => cmd_find_torus(a, &out),
        Command::Entropy(a) => cmd_entropy(a, &out),
        Command::Evolve(a) => cmd_evolve(a, &out),
        Command::Construct(a) => cmd_construct(a, &out),
        Command::Report(a) => cmd_report(a, &out),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Config(msg)) => {
            eprintln!("error: invalid configuration: {msg}");
            EXIT_CONFIG
        }
        Err(CliError::Fault(msg)) => {
            eprintln!("error: {msg}");
            EXIT_FAULT
        }
    }
}

fn cmd_shoot(a: ShootArgs, out: &Output) -> CliResult<i32> {
    check_n(a.n)?;
    let opts = IntegratorOptions::default();
    if let Some(r0) = a.r0 {
        check_positive(r0, "r0")?;
        let shot = shoot(r0, a.n, &opts)?;
        let doc = json!({ "r0": r0, "status": shot.status, "miss": shot.miss });
        if let Some(path) = &a.out {
            write_json(path, &doc)?;
        }
        out.summary("shoot", doc);
        return Ok(EXIT_OK);
    }
    let samples = match &a.scan {
        Some(spec) => {
            let parts = spec.split(':').map(str::parse::<f64>).collect::<std::result::Result<Vec<_>, _>>();
            match parts.as_deref() {
                Ok([lo, hi, step]) => scan(a.n, *lo, *hi, *step, &opts)?,
                _ => return config(format!("--scan expects lo:hi:step, got {spec:?}")),
            }
        }
        None => default_scan(a.n, &opts)?,
    };
    let bracket = bracket_from_scan(&samples);
    if let Some(path) = &a.out {
        write_json(path, &json!({ "n": a.n, "samples": samples, "bracket": bracket }))?;
    }
    out.summary(
        "shoot",
        json!({ "n": a.n, "samples": samples.len(), "bracket": bracket }),
    );
    Ok(EXIT_OK)
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn cmd_find_torus(a: FindTorusArgs, out: &Output) -> CliResult<i32> {
    check_n(a.n)?;
    check_positive(a.tol, "--tol")?;
    if a.nodes < 16 {
        return config("--nodes must be at least 16");
    }
    let opts = TorusOptions {
        nodes: a.nodes,
        ..TorusOptions::default()
    };
    let result = match &a.bracket {
        Some(b) => match parse_list::<f64>(b, "--bracket")?.as_slice() {
            [lo, hi] if lo < hi => find_torus(a.n, (*lo, *hi), a.tol, &opts)?,
            _ => return config(format!("--bracket expects a,b with a < b, got {b:?}")),
        },
        None => find_torus_auto(a.n, a.tol, &opts)?,
    };
    write_curve(&a.out, &result.profile)?;
    let summary = result.summary();
    write_json(&sidecar(&a.out, "shooter.json"), &summary)?;
    out.summary(
        "find-torus",
        json!({
            "n": a.n,
            "r0": summary.r0,
            "residual_max": summary.residual_max,
            "degraded": summary.degraded,
            "out": a.out.display().to_string(),
        }),
    );
    Ok(EXIT_OK)
}

const ENTROPY_CSV_HEADER: &str = "n,L_n,A,F01,entropy_sup,bound_dn";

fn cmd_entropy(a: EntropyArgs, out: &Output) -> CliResult<i32> {
    let curve = load_curve(&a.curve)?;
    let grid = a.sup_grid.then(|| EntropyGrid::for_curve(&curve));
    let report = entropy_report(&curve, grid.as_ref())?;
    let text = serde_json::to_string_pretty(&report).map_err(LabError::from)? + "\n";
    match &a.out {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None if !out.quiet && !out.json => print!("{text}"),
        None => {}
    }
    if let Some(path) = &a.csv {
        let mut body = match std::fs::read_to_string(path) {
            Ok(s) if s.starts_with(ENTROPY_CSV_HEADER) => s,
            Ok(_) => return config(format!("{} is not an entropy table", path.display())),
            Err(_) => format!("{ENTROPY_CSV_HEADER}\n"),
        };
        let sup = report.entropy_sup.map(|s| s.value.to_string()).unwrap_or_default();
        let _ = writeln!(
            body,
            "{},{},{},{},{},{}",
            report.n, report.l_n, report.gaussian_area, report.f01, sup, report.bound_dn
        );
        write_atomic(path, body.as_bytes())?;
    }
    let value = report.entropy_sup.map_or(report.f01, |s| s.value);
    out.summary(
        "entropy",
        json!({
            "n": report.n,
            "entropy": value,
            "l_n": report.l_n,
            "bound_dn": report.bound_dn,
            "below_two": report.entropy_below_two,
        }),
    );
    Ok(EXIT_OK)
}

fn flow_options(f: &FlowArgs) -> CliResult<FlowOptions> {
    let mut o = FlowOptions {
        t_end: f.t_end,
        ..FlowOptions::default()
    };
    if let Some(m) = f.max_steps {
        o.max_steps = m;
    }
    if let Some(k) = f.snapshot_every {
        o.snapshot_every = k;
    }
    if let Some(c) = f.c_cfl {
        check_positive(c, "--c-cfl")?;
        o.c_cfl = c;
    }
    if let Some(s) = &f.snapshot_times {
        o.snapshot_times = parse_list(s, "--snapshot-times")?;
    }
    if f.series_stride == Some(0) {
        return config("--series-stride must be at least 1");
    }
    Ok(o)
}

fn cmd_evolve(a: EvolveArgs, out: &Output) -> CliResult<i32> {
    let mut curve = load_curve(&a.curve)?;
    if let Some(n) = a.n {
        check_n(n)?;
        curve = ProfileCurve::new(n, curve.topology(), curve.nodes().to_vec())?;
    }
    let opts = flow_options(&a.flow)?;
    if let Some(t_end) = opts.t_end {
        if !(t_end > a.t0) {
            return config(format!("--t-end {t_end} must exceed --t0 {}", a.t0));
        }
    }
    let traj = evolve(&FlowState::new(curve, a.t0), &opts)?;
    let record = if traj.termination.is_singular() {
        detect_singularity(&traj).ok()
    } else {
        None
    };
    write_run(&a.out, &traj, record.as_ref(), a.flow.series_stride.unwrap_or(1))?;
    let code = traj.termination.exit_code();
    let events = a.out.join("events.json");
    if traj.termination == Termination::Fault {
        eprintln!("flow fault recorded in {}", events.display());
    }
    out.summary(
        "evolve",
        json!({
            "termination": traj.termination,
            "t_last": traj.last_time(),
            "steps": traj.series.len().saturating_sub(1),
            "t_sing": record.as_ref().map(|r| r.t_sing),
            "shape": record.as_ref().map(|r| r.shape),
            "out": a.out.display().to_string(),
        }),
    );
    Ok(code)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MemberMeta {
    i: u32,
    entropy_sup: Option<f64>,
    flagged: Option<String>,
}

fn load_member(dir: &Path, torus: &ProfileCurve, i: u32) -> CliResult<FamilyMember> {
    let (trajectory, record) = read_run(dir)?;
    let meta: MemberMeta = read_json(&dir.join("member.json"))?;
    Ok(FamilyMember {
        perturbed: build_perturbed(torus, i)?,
        trajectory,
        record,
        entropy_sup: meta.entropy_sup,
        flagged: meta.flagged,
    })
}

fn cmd_construct(a: ConstructArgs, out: &Output) -> CliResult<i32> {
    check_n(a.n)?;
    let i_list: Vec<u32> = parse_list(&a.i_list, "--i")?;
    if i_list.is_empty() || i_list.contains(&0) || i_list.windows(2).any(|w| w[1] <= w[0]) {
        return config(format!("--i must be strictly increasing positive integers, got {:?}", a.i_list));
    }
    if a.threads == Some(0) {
        return config("--threads must be positive");
    }
    let flow = flow_options(&a.flow)?;
    let torus = match &a.torus {
        Some(p) => {
            let t = load_curve(p)?;
            if t.n() != a.n {
                return config(format!("torus file has n = {}, expected {}", t.n(), a.n));
            }
            t
        }
        None => {
            let opts = TorusOptions {
                nodes: a.nodes,
                ..TorusOptions::default()
            };
            find_torus_auto(a.n, 1e-12, &opts)?.profile
        }
    };
    // Fail early if some T_i is not shrinker mean convex.
    for &i in &i_list {
        build_perturbed(&torus, i)?;
    }
    write_curve(&a.out.join("torus.json"), &torus)?;
    let fam_opts = FamilyOptions {
        i_list: i_list.clone(),
        flow,
        threads: a.threads,
        entropy: !a.no_entropy,
    };
    let run_one = |i: u32| -> CliResult<FamilyMember> {
        let dir = member_dir(&a.out, i);
        if a.resume && run_is_complete(&dir) && dir.join("member.json").is_file() {
            return load_member(&dir, &torus, i);
        }
        let member = run_member(build_perturbed(&torus, i)?, &fam_opts.flow, fam_opts.entropy)?;
        write_json(
            &dir.join("member.json"),
            &MemberMeta {
                i,
                entropy_sup: member.entropy_sup,
                flagged: member.flagged.clone(),
            },
        )?;
        write_run(&dir, &member.trajectory, member.record.as_ref(), a.flow.series_stride.unwrap_or(100))?;
        Ok(member)
    };
    let members: Vec<CliResult<FamilyMember>> = {
        use rayon::prelude::*;
        let work = || i_list.par_iter().map(|&i| run_one(i)).collect::<Vec<_>>();
        match crate::construction::thread_count(a.threads) {
            Some(k) => rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| CliError::Fault(e.to_string()))?
                .install(work),
            None => work(),
        }
    };
    let members = members.into_iter().collect::<CliResult<Vec<_>>>()?;
    let run = FamilyRun { torus, members };
    let report = family_report(&run, &ConvergenceOptions::default())?;
    write_json(&a.out.join("family_report.json"), &report)?;
    write_atomic(&a.out.join("cauchy.csv"), cauchy_csv(&report).as_bytes())?;
    write_atomic(&a.out.join("blowdown.csv"), blowdown_csv(&report).as_bytes())?;
    let code = run
        .members
        .iter()
        .map(|m| m.trajectory.termination.exit_code())
        .max()
        .unwrap_or(EXIT_OK);
    out.summary(
        "construct",
        json!({
            "n": a.n,
            "members": report.rows.len(),
            "flagged": report.rows.iter().filter(|r| r.flagged.is_some()).count(),
            "all_circles": report.aggregates.all_circles,
            "out": a.out.display().to_string(),
        }),
    );
    Ok(code)
}

fn cauchy_csv(report: &FamilyReport) -> String {
    let mut s = String::from("# shrinkerlab cauchy v1\nt");
    for (i, j) in &report.cauchy.pairs {
        let _ = write!(s, ",d_{i}_{j}");
    }
    s.push('\n');
    for (k, t) in report.cauchy.times.iter().enumerate() {
        let _ = write!(s, "{t}");
        for row in &report.cauchy.distances {
            let _ = write!(s, ",{}", row[k]);
        }
        s.push('\n');
    }
    s
}

fn blowdown_csv(report: &FamilyReport) -> String {
    let mut s = String::from("# shrinkerlab blowdown v1\ni,t,distance\n");
    for b in &report.blowdown {
        for (t, d) in b.t.iter().zip(&b.distance) {
            let _ = writeln!(s, "{},{t},{d}", b.i);
        }
    }
    s
}

/// Up to `k` evenly spaced entries, always including the last.
fn pick<T>(items: &[T], k: usize) -> Vec<&T> {
    let m = items.len();
    if m <= k {
        return items.iter().collect();
    }
    (0..k).map(|j| &items[j * (m - 1) / (k - 1)]).collect()
}

fn cmd_report(a: ReportArgs, out: &Output) -> CliResult<i32> {
    if let Some(dir) = &a.run {
        let (traj, _) = read_run(dir)?;
        let mut written = Vec::new();
        if a.svg {
            let snaps = pick(&traj.snapshots, 6);
            let curves: Vec<(&ProfileCurve, Style)> = snaps
                .iter()
                .map(|(t, _, c)| (c, Style::labelled(format!("t = {t:.4}"))))
                .collect();
            let path = dir.join("profiles.svg");
            write_atomic(&path, render_profile_svg(&curves).as_bytes())?;
            written.push(path);
            let pts = traj.series.t.iter().copied().zip(traj.series.max_abs_a.iter().copied()).collect();
            let path = dir.join("curvature.svg");
            write_atomic(&path, render_series_svg("max |A|", "t", &[("max |A|".into(), pts)]).as_bytes())?;
            written.push(path);
        }
        out.summary(
            "report",
            json!({
                "run": dir.display().to_string(),
                "termination": traj.termination,
                "snapshots": traj.snapshots.len(),
                "figures": written.len(),
            }),
        );
        return Ok(EXIT_OK);
    }
    let dir = a.family.as_ref().expect("clap enforces --family or --run");
    let report: FamilyReport = read_json(&dir.join("family_report.json"))?;
    let torus = load_curve(&dir.join("torus.json"))?;
    let mut figures = 0;
    if a.svg {
        let mut runs = Vec::new();
        for row in &report.rows {
            let (traj, record) = read_run(&member_dir(dir, row.i))?;
            runs.push((row.i, traj, record));
        }
        let mut curves: Vec<(&ProfileCurve, Style)> = vec![(&torus, Style::labelled("T"))];
        for (i, traj, _) in &runs {
            curves.push((&traj.snapshots[0].2, Style::labelled(format!("T_{i}"))));
            let last = &traj.snapshots[traj.snapshots.len() - 1];
            curves.push((&last.2, Style { dashed: true, ..Style::default() }));
        }
        write_atomic(&dir.join("profiles.svg"), render_profile_svg(&curves).as_bytes())?;
        let rescaled: Vec<(ProfileCurve, String)> = runs
            .iter()
            .filter_map(|(i, traj, rec)| {
                let d = rec.as_ref()?.d_sing;
                (d > 0.0).then(|| (traj.snapshots[0].2.scaled(1.0 / d), format!("T_{i} / d_{i}")))
            })
            .collect();
        let curves: Vec<(&ProfileCurve, Style)> =
            rescaled.iter().map(|(c, l)| (c, Style::labelled(l.clone()))).collect();
        write_atomic(&dir.join("rescaled.svg"), render_profile_svg(&curves).as_bytes())?;
        let series: Vec<(String, Vec<(f64, f64)>)> = runs
            .iter()
            .filter_map(|(i, traj, rec)| {
                let rec = rec.as_ref()?;
                let pts = traj
                    .series
                    .t
                    .iter()
                    .zip(&traj.series.max_abs_a)
                    .map(|(&t, &a)| (t, (rec.t_sing - t) * a * a))
                    .collect();
                Some((format!("i = {i}"), pts))
            })
            .collect();
        write_atomic(
            &dir.join("type_one.svg"),
            render_series_svg("(t_i - t) max|A|^2", "t", &series).as_bytes(),
        )?;
        figures = 3;
    }
    out.summary(
        "report",
        json!({
            "family": dir.display().to_string(),
            "members": report.rows.len(),
            "figures": figures,
        }),
    );
    Ok(EXIT_OK)
}
