use std::fs;
use std::path::Path;

use clap::Parser;
use serde_json::json;
use wtfbf::io::{unix_now, write_atomic, OutputFormat, OutputRecord, RunManifest, MANIFEST_FILE, MANIFEST_SCHEMA};
use wtfbf::oracle::{self, ExactSampler, Point, QuadratureResult, QuadratureSpec};
use wtfbf::stats::{expected_second_moments, moment_table, MomentReport};
use wtfbf::synthesis::{derived_seed, synthesize, synthesize_batch, NOISE_CONVENTION};
use wtfbf::{Error, FieldParams, GridSpec, Result};

use crate::{Cli, Command, GenerateArgs, OracleCommand, RerunArgs, StatsArgs};

pub const MOMENTS_FILE: &str = "moments.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Table 1 of the reference experiment (H = 0.3, alpha = 0.5, M = 512,
/// 100 samples): mean, variance, skewness per population.
const REFERENCE_MOMENTS: [(&str, f64, f64, f64); 3] =
    [("X", -2e-4, 7.3, 6e-4), ("ΔX", -1e-5, 10.7, 1e-6), ("rescaled", 2e-2, 1.4, -0.3)];

/// Command-line arguments minus those that must not be replayed
/// (`--out`, `--threads`).
pub fn recorded_arguments(args: impl Iterator<Item = String>) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip_next = false;
    for a in args {
        if skip_next {
            skip_next = false;
            continue;
        }
        if a == "--out" || a == "--threads" {
            skip_next = true;
        } else if !(a.starts_with("--out=") || a.starts_with("--threads=")) {
            out.push(a);
        }
    }
    out
}

pub fn run(command: Command, arguments: Vec<String>) -> Result<()> {
    match command {
        Command::Generate(args) => generate(&args, arguments),
        Command::Stats(args) => stats(&args, arguments),
        Command::Oracle(cmd) => oracle(cmd),
        Command::Rerun(args) => rerun(&args),
    }
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    emit(&(serde_json::to_string_pretty(value)? + "\n"))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("cannot create {}: {e}", dir.display()))))
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, bytes).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("cannot write {}: {io}", path.display()))),
        other => other,
    })
}

fn manifest(command: &str, arguments: Vec<String>, params: FieldParams, grid: GridSpec, seed: u64, samples: usize) -> RunManifest {
    RunManifest {
        schema: MANIFEST_SCHEMA,
        tool: env!("CARGO_PKG_NAME").into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        arguments,
        params: Some(params),
        grid: Some(grid),
        base_seed: Some(seed),
        samples,
        noise_convention: NOISE_CONVENTION.into(),
        quadrature: None,
        outputs: Vec::new(),
        started: unix_now(),
        finished: 0,
    }
}

fn generate(args: &GenerateArgs, arguments: Vec<String>) -> Result<()> {
    let params = args.model.params()?;
    let grid = args.grid()?;
    let format: OutputFormat = args.format.into();
    create_dir(&args.out)?;
    let samples = args.samples as usize;
    let mut run = manifest("generate", arguments, params, grid, args.seed, samples);
    let width = samples.saturating_sub(1).to_string().len().max(4);
    for i in 0..samples {
        let seed = derived_seed(args.seed, i as u64);
        let sample = synthesize(&params, grid, seed);
        let (bytes, normalization) = format.encode(grid, &sample.values)?;
        let file = format!("field_{i:0width$}.{}", format.extension());
        write_output(&args.out.join(&file), &bytes)?;
        emit(&format!("{}\n", args.out.join(&file).display()))?;
        run.outputs.push(OutputRecord { file, seed: Some(seed), normalization });
    }
    run.finished = unix_now();
    run.write(&args.out.join(MANIFEST_FILE))
}

/// Column order of `moments.csv`; part of the output format.
pub const MOMENT_COLUMNS: [&str; 11] = [
    "population",
    "replicates",
    "count",
    "mean",
    "variance",
    "skewness",
    "second_moment",
    "se_mean",
    "se_variance",
    "se_skewness",
    "se_second_moment",
];
/// Appended with `--oracle`.
pub const ORACLE_COLUMNS: [&str; 2] = ["exact_second_moment", "quadrature_second_moment"];

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn moment_record(population: &str, r: &MomentReport) -> Vec<String> {
    vec![
        population.to_string(),
        r.replicates.to_string(),
        r.count.to_string(),
        cell(Some(r.mean)),
        cell(Some(r.variance)),
        cell(r.skewness),
        cell(Some(r.second_moment)),
        cell(r.standard_error_mean),
        cell(r.standard_error_variance),
        cell(r.standard_error_skewness),
        cell(r.standard_error_second_moment),
    ]
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn stats(args: &StatsArgs, arguments: Vec<String>) -> Result<()> {
    let params = args.model.params()?;
    let grid = GridSpec::new(args.size)?;
    let m = grid.resolution();
    let lag = match args.lag.as_deref() {
        Some([l1, l2]) => (*l1, *l2),
        _ => (m / 2, m / 2),
    };
    if lag.0 == 0 || lag.1 == 0 {
        return Err(Error::InvalidInput("increment lags must be positive".into()));
    }
    let spec = args.quad.spec()?;
    create_dir(&args.out)?;
    let samples = args.samples as usize;
    let mut run = manifest("stats", arguments, params, grid, args.seed, samples);

    let batch = synthesize_batch(&params, grid, args.seed, samples);
    let table = moment_table(&batch, lag, args.rescale)?;
    drop(batch);
    let expected = expected_second_moments(&params, grid, lag, args.rescale)?;
    let quadrature = if args.oracle {
        let h = (lag.0 as f64 / m as f64, lag.1 as f64 / m as f64);
        run.quadrature = Some(spec);
        Some(oracle::increment_variance_quadrature(h.0, h.1, &params, &spec)?)
    } else {
        None
    };

    let reports = [("X", &table.field), ("ΔX", &table.increments), ("rescaled", &table.rescaled)];
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = MOMENT_COLUMNS.to_vec();
    if args.oracle {
        header.extend(ORACLE_COLUMNS);
    }
    writer.write_record(&header).map_err(csv_error)?;
    for (i, (name, report)) in reports.iter().enumerate() {
        let mut record = moment_record(name, report);
        if args.oracle {
            // the continuous model pins only the increment population here
            let quad = quadrature.as_ref().filter(|_| i == 1).map(|q| q.value);
            record.extend([cell(Some(expected[i])), cell(quad)]);
        }
        writer.write_record(&record).map_err(csv_error)?;
    }
    let csv_bytes = writer.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    write_output(&args.out.join(MOMENTS_FILE), &csv_bytes)?;
    emit(&String::from_utf8_lossy(&csv_bytes))?;

    let populations: Vec<serde_json::Value> = reports
        .iter()
        .zip(REFERENCE_MOMENTS)
        .zip(expected)
        .map(|(((name, r), (_, ref_mean, ref_var, ref_skew)), exact)| {
            let z = r.standard_error_second_moment.map(|se| (r.second_moment - exact) / se);
            json!({
                "population": name,
                "moments": r,
                "exact_second_moment": exact,
                "second_moment_ratio_to_exact": r.second_moment / exact,
                "second_moment_z": z,
                "mean_z": r.standard_error_mean.map(|se| r.mean / se),
                "skewness_z": r.skewness.zip(r.standard_error_skewness).map(|(s, se)| s / se),
                "reference": {"mean": ref_mean, "variance": ref_var, "skewness": ref_skew},
                "variance_ratio_to_reference": r.variance / ref_var,
            })
        })
        .collect();
    let summary = json!({
        "params": params,
        "grid": grid,
        "samples": samples,
        "base_seed": args.seed,
        "lag": lag,
        "rescale_factor": args.rescale,
        "noise_convention": NOISE_CONVENTION,
        "populations": populations,
        "increment_quadrature": quadrature,
    });
    let mut bytes = serde_json::to_vec_pretty(&summary)?;
    bytes.push(b'\n');
    write_output(&args.out.join(SUMMARY_FILE), &bytes)?;

    run.outputs = [MOMENTS_FILE, SUMMARY_FILE]
        .iter()
        .map(|f| OutputRecord { file: (*f).into(), seed: None, normalization: None })
        .collect();
    run.finished = unix_now();
    run.write(&args.out.join(MANIFEST_FILE))
}

fn point(v: &[f64]) -> Point {
    [v[0], v[1]]
}

fn quadrature_json(name: &str, params: Option<&FieldParams>, spec: &QuadratureSpec, r: &QuadratureResult, extra: serde_json::Value) -> serde_json::Value {
    let mut out = json!({
        "oracle": name,
        "params": params,
        "quadrature": spec,
        "value": r.value,
        "tolerance": r.tolerance,
        "trace": r.trace,
    });
    if let (Some(o), Some(e)) = (out.as_object_mut(), extra.as_object()) {
        o.extend(e.clone());
    }
    out
}

fn oracle(cmd: OracleCommand) -> Result<()> {
    let out = match cmd {
        OracleCommand::Cov { model, x, y, quad } => {
            let params = model.params()?;
            let spec = quad.spec()?;
            let (x, y) = (point(&x), y.as_deref().map(point).unwrap_or(point(&x)));
            let r = oracle::covariance_quadrature(x, y, &params, &spec)?;
            quadrature_json("cov", Some(&params), &spec, &r, json!({"x": x, "y": y}))
        }
        OracleCommand::Inc { model, h, quad } => {
            let params = model.params()?;
            let spec = quad.spec()?;
            let r = oracle::increment_variance_quadrature(h[0], h[1], &params, &spec)?;
            quadrature_json("inc", Some(&params), &spec, &r, json!({"h": h}))
        }
        OracleCommand::C1 { model, quad } => {
            let params = model.params()?;
            let spec = quad.spec()?;
            let r = oracle::c1_constant(&params, &spec)?;
            quadrature_json("c1", Some(&params), &spec, &r, json!({}))
        }
        OracleCommand::Discrete { model, size, point, with } => {
            let params = model.params()?;
            let grid = GridSpec::new(size)?;
            let k = (point[0], point[1]);
            let l = with.as_deref().map(|w| (w[0], w[1])).unwrap_or(k);
            for idx in [k, l] {
                if idx.0 > size || idx.1 > size {
                    return Err(Error::InvalidInput(format!("grid index {idx:?} outside 0..={size}")));
                }
            }
            let value = oracle::discrete_covariance(&params, grid, k, l);
            json!({"oracle": "discrete", "params": params, "grid": grid, "point": k, "with": l, "value": value,
                   "noise_convention": NOISE_CONVENTION})
        }
        OracleCommand::Fbs { hurst, x, y, quad } => {
            let spec = quad.spec()?;
            let (x, y) = (point(&x), y.as_deref().map(point).unwrap_or(point(&x)));
            let r = oracle::fbs_covariance(x, y, hurst, &spec)?;
            quadrature_json("fbs", None, &spec, &r, json!({"hurst": hurst, "x": x, "y": y}))
        }
        OracleCommand::Exact { model, grid, seed, quad } => {
            let params = model.params()?;
            let spec = quad.spec()?;
            if grid == 0 {
                return Err(Error::InvalidInput("exact grid needs at least one point per axis".into()));
            }
            let n = grid as f64;
            let points: Vec<Point> =
                (1..=grid).flat_map(|i| (1..=grid).map(move |j| [i as f64 / n, j as f64 / n])).collect();
            let sampler = ExactSampler::new(&points, &params, &spec)?;
            let values = sampler.sample(seed);
            json!({"oracle": "exact", "params": params, "quadrature": spec, "seed": seed, "points": points,
                   "values": values, "jitter": sampler.jitter(),
                   "max_quadrature_tolerance": sampler.covariance().tolerance})
        }
    };
    print_json(&out)
}

fn rerun(args: &RerunArgs) -> Result<()> {
    let recorded = RunManifest::read(&args.manifest)?;
    if recorded.tool_version != env!("CARGO_PKG_VERSION") {
        eprintln!(
            "warning: manifest written by version {}, running {}; outputs may differ",
            recorded.tool_version,
            env!("CARGO_PKG_VERSION")
        );
    }
    let out = args.out.to_string_lossy().into_owned();
    let argv = std::iter::once("wtfbf".to_string())
        .chain(recorded.arguments.iter().cloned())
        .chain(["--out".to_string(), out]);
    let cli = Cli::try_parse_from(argv).map_err(|e| Error::Format(format!("manifest arguments: {e}")))?;
    if matches!(cli.command, Command::Rerun(_)) {
        return Err(Error::Format("manifest records a rerun".into()));
    }
    run(cli.command, recorded.arguments)
}
