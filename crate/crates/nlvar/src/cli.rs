//! Command-line front end.
//!
//! Subcommands: `check`, `simulate`, `decompose`, `attractor`,
//! `multipliers`, `identify`, `transitory`, `jsr`. Reports go to stdout as
//! JSON; bulk data moves through CSV files with a 17-significant-digit
//! numeric format so doubles round-trip losslessly. Every output file
//! starts with a commented provenance line (tool version, command line,
//! timestamp) unless `--reproducible` is set.
//!
//! Exit codes: 0 success, 1 domain error (non-member model, CRSC
//! violation, ...), 2 I/O or schema error.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};

use crate::dynamics::{simulate, PathResult, ShockPlan};
use crate::error::{Error, Result};
use crate::gjrt::decompose;
use crate::jsr::jsr_bounds;
use crate::longrun::{
    attractor_points, longrun_multipliers, lr_identify_construct, transitory_direction_curve,
    TransitoryConfig,
};
use crate::membership::{check_membership, MembershipReport};
use crate::model::ModelSpec;

#[derive(Parser)]
#[command(name = "nlvar", version, about = "Common trends and long-run analysis for nonlinear VARs")]
struct Cli {
    /// Suppress the provenance header in file outputs (byte-identical
    /// reruns).
    #[arg(long, global = true)]
    reproducible: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArg {
    /// Model specification (JSON).
    #[arg(long)]
    model: String,
    /// Stability threshold for the class check.
    #[arg(long, default_value_t = 1.0)]
    rho_bar: f64,
    /// Maximal product length explored by the JSR bracket.
    #[arg(long, default_value_t = 12)]
    depth: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Verify class membership and print the report as JSON.
    Check(ModelArg),
    /// Simulate a shock-driven path to CSV.
    Simulate {
        #[command(flatten)]
        model: ModelArg,
        /// Initial window, one row per time in increasing time order.
        #[arg(long)]
        init: String,
        /// Explicit shock sequence CSV (columns u_1..u_p).
        #[arg(long, conflicts_with_all = ["gaussian", "t", "seed"])]
        shocks: Option<String>,
        /// Gaussian shock covariance (JSON {"sigma": [[..]]}).
        #[arg(long, requires = "t")]
        gaussian: Option<String>,
        /// Horizon for Gaussian shocks.
        #[arg(long = "T", short = 'T')]
        t: Option<usize>,
        /// RNG seed for Gaussian shocks.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional orthogonal structural rotation (CSV matrix).
        #[arg(long)]
        upsilon: Option<String>,
        #[arg(long)]
        out: String,
    },
    /// Decompose a simulated path into trend, initial condition and stable
    /// remainder.
    Decompose {
        #[command(flatten)]
        model: ModelArg,
        /// Path CSV as produced by `simulate`.
        #[arg(long)]
        path: String,
        #[arg(long)]
        out: String,
    },
    /// Map a grid of trend coordinates onto the attractor.
    Attractor {
        #[command(flatten)]
        model: ModelArg,
        /// Grid CSV (columns w_1..w_q).
        #[arg(long)]
        grid: String,
        #[arg(long)]
        out: String,
    },
    /// Long-run multiplier matrices at attractor points.
    Multipliers {
        #[command(flatten)]
        model: ModelArg,
        /// Evaluation points CSV (columns z_1..z_p).
        #[arg(long)]
        at: String,
        #[arg(long)]
        out: String,
    },
    /// Construct a rotation satisfying the long-run identifying
    /// restrictions.
    Identify {
        #[command(flatten)]
        model: ModelArg,
        /// Number of purely transitory structural shocks.
        #[arg(long)]
        m: usize,
        #[arg(long)]
        out: String,
    },
    /// Trace transitory-shock directions for the smooth-transition
    /// experiment.
    Transitory {
        /// Experiment configuration (JSON).
        #[arg(long)]
        config: String,
        /// Comma-separated magnitudes overriding the config.
        #[arg(long)]
        mags: Option<String>,
        #[arg(long)]
        out: String,
    },
    /// Bracket the joint spectral radius of a matrix family.
    Jsr {
        /// JSON {"matrices": [[[..]], ...]} with row-major matrices.
        #[arg(long)]
        matrices: String,
        #[arg(long, default_value_t = 12)]
        depth: usize,
    },
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cmdline = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join(" ");
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let header = if cli.reproducible {
        None
    } else {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Some(format!(
            "# nlvar {} | {} | unix-time {}",
            env!("CARGO_PKG_VERSION"),
            cmdline,
            now
        ))
    };
    match dispatch(cli.command, header.as_deref()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, header: Option<&str>) -> Result<i32> {
    match cmd {
        Command::Check(arg) => {
            let (_, report) = load_checked_model(&arg)?;
            println!("{}", report.to_json_string());
            Ok(if report.verdict.is_member() { 0 } else { 1 })
        }
        Command::Simulate {
            model,
            init,
            shocks,
            gaussian,
            t,
            seed,
            upsilon,
            out,
        } => {
            let spec = load_model(&model.model)?;
            let window0 = read_window(&init, spec.p, spec.k)?;
            let plan = match (shocks, gaussian) {
                (Some(file), None) => ShockPlan::Given(read_shocks(&file, spec.p)?),
                (None, Some(file)) => ShockPlan::Gaussian {
                    sigma: read_sigma_json(&file)?,
                    seed,
                    t: t.ok_or_else(|| Error::Schema {
                        path: "--t".into(),
                        message: "Gaussian shocks need a horizon".into(),
                    })?,
                },
                _ => {
                    return Err(Error::Schema {
                        path: "--shocks/--gaussian".into(),
                        message: "exactly one shock source is required".into(),
                    })
                }
            };
            let ups = upsilon.map(|f| read_matrix_csv(&f, spec.p)).transpose()?;
            let result = simulate(&spec, &window0, &plan, ups.as_ref())?;
            write_path_csv(&out, &result, header)?;
            Ok(0)
        }
        Command::Decompose { model, path, out } => {
            let (spec, report) = load_checked_model(&model)?;
            report_must_be_member(&report)?;
            let result = read_path_csv(&path, spec.p, spec.k)?;
            let dec = decompose(&spec, &report, &result)?;
            let (q, r) = (report.q, report.r);
            let xi_len = dec.xi.first().map_or(0, |x| x.len());
            let mut head: Vec<String> = vec!["t".into()];
            head.extend((1..=q).map(|i| format!("psi_{i}")));
            head.extend((1..=r).map(|i| format!("theta_{i}")));
            head.extend((1..=xi_len).map(|i| format!("xi_{i}")));
            head.push("residual".into());
            let mut rows = Vec::with_capacity(result.len());
            for (idx, t) in (1..=result.len() as i64).enumerate() {
                let z = result.z_at(t);
                let chi = crate::gjrt::chi(&spec, &report, z)?;
                let mut row = vec![(t).to_string()];
                row.extend(chi.psi.iter().map(|x| fmt(*x)));
                row.extend(chi.theta.iter().map(|x| fmt(*x)));
                row.extend(dec.xi[idx].iter().map(|x| fmt(*x)));
                row.push(fmt(dec.residual[idx]));
                rows.push(row);
            }
            write_csv(&out, &head, &rows, header)?;
            Ok(0)
        }
        Command::Attractor { model, grid, out } => {
            let (spec, report) = load_checked_model(&model)?;
            report_must_be_member(&report)?;
            let grid = read_vectors(&grid, report.q)?;
            let sample = attractor_points(&spec, &report, &grid)?;
            let mut head: Vec<String> = (1..=report.q).map(|i| format!("w_{i}")).collect();
            head.extend((1..=spec.p).map(|i| format!("z_{i}")));
            let rows = sample
                .grid
                .iter()
                .zip(sample.points.iter())
                .map(|(w, z)| w.iter().chain(z.iter()).map(|x| fmt(*x)).collect())
                .collect::<Vec<Vec<String>>>();
            write_csv(&out, &head, &rows, header)?;
            Ok(0)
        }
        Command::Multipliers { model, at, out } => {
            let (spec, report) = load_checked_model(&model)?;
            report_must_be_member(&report)?;
            let points = read_vectors(&at, spec.p)?;
            let mut head: Vec<String> = (1..=spec.p).map(|i| format!("z_{i}")).collect();
            head.push("differentiable".into());
            head.push("rank".into());
            for i in 1..=spec.p {
                for j in 1..=spec.p {
                    head.push(format!("theta_{i}_{j}"));
                }
            }
            let mut rows = Vec::new();
            for z in &points {
                let res = longrun_multipliers(&spec, &report, z)?;
                let mut row: Vec<String> = z.iter().map(|x| fmt(*x)).collect();
                row.push(if res.differentiable { "1".into() } else { "0".into() });
                row.push(res.rank.to_string());
                match &res.theta_inf {
                    Some(th) => {
                        for i in 0..spec.p {
                            for j in 0..spec.p {
                                row.push(fmt(th[(i, j)]));
                            }
                        }
                    }
                    None => row.extend(std::iter::repeat_n("nan".to_string(), spec.p * spec.p)),
                }
                rows.push(row);
            }
            write_csv(&out, &head, &rows, header)?;
            Ok(0)
        }
        Command::Identify { model, m, out } => {
            let (_, report) = load_checked_model(&model)?;
            report_must_be_member(&report)?;
            let ups = lr_identify_construct(&report, m)?;
            let head: Vec<String> = (1..=ups.ncols()).map(|i| format!("c_{i}")).collect();
            let rows = (0..ups.nrows())
                .map(|i| (0..ups.ncols()).map(|j| fmt(ups[(i, j)])).collect())
                .collect::<Vec<Vec<String>>>();
            write_csv(&out, &head, &rows, header)?;
            Ok(0)
        }
        Command::Transitory { config, mags, out } => {
            let text = read_to_string(&config)?;
            let parsed: TransitoryFile = serde_json::from_str(&text).map_err(|e| Error::Schema {
                path: format!("{config} (line {}, column {})", e.line(), e.column()),
                message: e.to_string(),
            })?;
            let magnitudes = match mags {
                Some(list) => list
                    .split(',')
                    .map(|s| {
                        s.trim().parse::<f64>().map_err(|e| Error::Schema {
                            path: "--mags".into(),
                            message: e.to_string(),
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?,
                None => parsed
                    .magnitudes
                    .unwrap_or_else(|| (0..=20).map(|i| i as f64 * 0.5).collect()),
            };
            let curve = transitory_direction_curve(&parsed.config, &magnitudes)?;
            let head = vec![
                "magnitude".to_string(),
                "ratio".to_string(),
                "iterations".to_string(),
                "converged".to_string(),
            ];
            let rows = (0..curve.magnitudes.len())
                .map(|i| {
                    vec![
                        fmt(curve.magnitudes[i]),
                        fmt(curve.ratios[i]),
                        curve.iterations[i].to_string(),
                        if curve.converged[i] { "1".into() } else { "0".into() },
                    ]
                })
                .collect::<Vec<Vec<String>>>();
            write_csv(&out, &head, &rows, header)?;
            Ok(0)
        }
        Command::Jsr { matrices, depth } => {
            let text = read_to_string(&matrices)?;
            let parsed: MatricesFile = serde_json::from_str(&text).map_err(|e| Error::Schema {
                path: format!("{matrices} (line {}, column {})", e.line(), e.column()),
                message: e.to_string(),
            })?;
            let mats: Vec<DMatrix<f64>> = parsed
                .matrices
                .iter()
                .map(|rows| {
                    let nr = rows.len();
                    let nc = rows.first().map_or(0, |r| r.len());
                    DMatrix::from_fn(nr, nc, |i, j| rows[i][j])
                })
                .collect();
            let bracket = jsr_bounds(&mats, depth)?;
            println!("{}", serde_json::to_string_pretty(&bracket).expect("bracket serializes"));
            Ok(0)
        }
    }
}

#[derive(serde::Deserialize)]
struct TransitoryFile {
    #[serde(flatten)]
    config: TransitoryConfig,
    magnitudes: Option<Vec<f64>>,
}

#[derive(serde::Deserialize)]
struct MatricesFile {
    matrices: Vec<Vec<Vec<f64>>>,
}

#[derive(serde::Deserialize)]
struct SigmaFile {
    sigma: Vec<Vec<f64>>,
}

fn load_model(path: &str) -> Result<ModelSpec> {
    ModelSpec::from_json_str(&read_to_string(path)?)
}

fn load_checked_model(arg: &ModelArg) -> Result<(ModelSpec, MembershipReport)> {
    let spec = load_model(&arg.model)?;
    let report = check_membership(&spec, arg.rho_bar, arg.depth)?;
    Ok((spec, report))
}

fn report_must_be_member(report: &MembershipReport) -> Result<()> {
    match &report.verdict {
        v if v.is_member() => Ok(()),
        crate::membership::Verdict::NotMember(reason)
        | crate::membership::Verdict::Inconclusive(reason) => {
            Err(Error::NotMember(reason.clone()))
        }
        _ => unreachable!(),
    }
}

/// 17 significant digits; round-trips any f64 exactly.
fn fmt(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn read_to_string(path: &str) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_string(),
        source: e,
    })
}

fn write_csv(path: &str, header: &[String], rows: &[Vec<String>], comment: Option<&str>) -> Result<()> {
    let mut text = String::new();
    if let Some(c) = comment {
        text.push_str(c);
        text.push('\n');
    }
    text.push_str(&header.join(","));
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    if let Some(dir) = Path::new(path).parent() {
        if !dir.as_os_str().is_empty() && !dir.exists() {
            fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: path.to_string(),
                source: e,
            })?;
        }
    }
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_string(),
        source: e,
    })
}

/// Reads a CSV with an optional leading `#` comment and a header line;
/// returns column names and numeric rows.
fn read_csv(path: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = read_to_string(path)?;
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if header.is_none() {
            header = Some(fields.iter().map(|s| s.to_string()).collect());
            continue;
        }
        let row = fields
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|e| Error::Csv {
                    file: path.to_string(),
                    line: lineno + 1,
                    message: format!("{f:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let header = header.ok_or_else(|| Error::Csv {
        file: path.to_string(),
        line: 0,
        message: "missing header".into(),
    })?;
    Ok((header, rows))
}

/// Index of the first data column (skips a leading `t` column).
fn data_start(header: &[String]) -> usize {
    usize::from(header.first().map(|h| h == "t").unwrap_or(false))
}

/// Reads an initial window (rows in increasing time order) and returns it
/// in companion order (newest first).
fn read_window(path: &str, p: usize, k: usize) -> Result<Vec<DVector<f64>>> {
    let (header, rows) = read_csv(path)?;
    let start = data_start(&header);
    if rows.len() != k {
        return Err(Error::Csv {
            file: path.to_string(),
            line: 0,
            message: format!("initial window needs k = {k} rows, found {}", rows.len()),
        });
    }
    let mut window: Vec<DVector<f64>> = rows
        .iter()
        .map(|r| extract(r, start, p, path))
        .collect::<Result<_>>()?;
    window.reverse();
    Ok(window)
}

fn read_shocks(path: &str, p: usize) -> Result<Vec<DVector<f64>>> {
    let (header, rows) = read_csv(path)?;
    let start = data_start(&header);
    rows.iter().map(|r| extract(r, start, p, path)).collect()
}

fn read_vectors(path: &str, dim: usize) -> Result<Vec<DVector<f64>>> {
    let (header, rows) = read_csv(path)?;
    let start = data_start(&header);
    rows.iter().map(|r| extract(r, start, dim, path)).collect()
}

fn read_matrix_csv(path: &str, p: usize) -> Result<DMatrix<f64>> {
    let (header, rows) = read_csv(path)?;
    let start = data_start(&header);
    if rows.len() != p {
        return Err(Error::Csv {
            file: path.to_string(),
            line: 0,
            message: format!("matrix needs {p} rows, found {}", rows.len()),
        });
    }
    let mut m = DMatrix::zeros(p, p);
    for (i, r) in rows.iter().enumerate() {
        let v = extract(r, start, p, path)?;
        m.row_mut(i).copy_from(&v.transpose());
    }
    Ok(m)
}

fn read_sigma_json(path: &str) -> Result<DMatrix<f64>> {
    let text = read_to_string(path)?;
    let parsed: SigmaFile = serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: format!("{path} (line {}, column {})", e.line(), e.column()),
        message: e.to_string(),
    })?;
    let nr = parsed.sigma.len();
    let nc = parsed.sigma.first().map_or(0, |r| r.len());
    Ok(DMatrix::from_fn(nr, nc, |i, j| parsed.sigma[i][j]))
}

fn extract(row: &[f64], start: usize, dim: usize, path: &str) -> Result<DVector<f64>> {
    if row.len() < start + dim {
        return Err(Error::Csv {
            file: path.to_string(),
            line: 0,
            message: format!("row has {} fields, expected at least {}", row.len(), start + dim),
        });
    }
    Ok(DVector::from_fn(dim, |i, _| row[start + i]))
}

/// Path CSV: `t, z_1..z_p, u_1..u_p` with the initial window at
/// `t = -k+1 ..= 0` (zero shock columns) followed by the simulated steps.
fn write_path_csv(path: &str, result: &PathResult, comment: Option<&str>) -> Result<()> {
    let p = result.window0[0].len();
    let k = result.window0.len();
    let mut head: Vec<String> = vec!["t".into()];
    head.extend((1..=p).map(|i| format!("z_{i}")));
    head.extend((1..=p).map(|i| format!("u_{i}")));
    let mut rows = Vec::with_capacity(k + result.len());
    for t in (1 - k as i64)..=(result.len() as i64) {
        let z = result.z_at(t);
        let mut row = vec![t.to_string()];
        row.extend(z.iter().map(|x| fmt(*x)));
        if t >= 1 {
            row.extend(result.shocks[(t - 1) as usize].iter().map(|x| fmt(*x)));
        } else {
            row.extend(std::iter::repeat_n(fmt(0.0), p));
        }
        rows.push(row);
    }
    write_csv(path, &head, &rows, comment)
}

/// Inverse of [`write_path_csv`]: rows with `t <= 0` form the window.
fn read_path_csv(path: &str, p: usize, k: usize) -> Result<PathResult> {
    let (header, rows) = read_csv(path)?;
    if header.first().map(String::as_str) != Some("t") {
        return Err(Error::Csv {
            file: path.to_string(),
            line: 0,
            message: "path CSV must carry a leading t column".into(),
        });
    }
    let mut stamped: Vec<(i64, DVector<f64>, DVector<f64>)> = rows
        .iter()
        .map(|r| {
            let t = r[0].round() as i64;
            let z = extract(r, 1, p, path)?;
            let u = extract(r, 1 + p, p, path)?;
            Ok((t, z, u))
        })
        .collect::<Result<_>>()?;
    stamped.sort_by_key(|(t, _, _)| *t);
    let window_rows: Vec<&(i64, DVector<f64>, DVector<f64>)> =
        stamped.iter().filter(|(t, _, _)| *t <= 0).collect();
    if window_rows.len() != k {
        return Err(Error::Csv {
            file: path.to_string(),
            line: 0,
            message: format!(
                "path CSV holds {} window rows (t <= 0), model needs k = {k}",
                window_rows.len()
            ),
        });
    }
    let mut window0: Vec<DVector<f64>> = window_rows.iter().map(|(_, z, _)| z.clone()).collect();
    window0.reverse();
    let (mut path_z, mut shocks) = (Vec::new(), Vec::new());
    for (t, z, u) in &stamped {
        if *t >= 1 {
            path_z.push(z.clone());
            shocks.push(u.clone());
        }
    }
    Ok(PathResult {
        window0,
        path: path_z,
        shocks,
    })
}
