use std::fmt::Write as _;
use std::path::Path;

use hqc_core::connection::{connection_at, connection_csv, ConnectionMethod};
use hqc_core::gates::{decompose_su_n, normalize_to_su, positive_root_count};
use hqc_core::holonomy::{self as geometric, holonomy_pexp, holonomy_projector, solid_angle, Holonomy, TransportPath};
use hqc_core::linalg::max_abs_diff;
use hqc_core::model::{isospectrality_check, parse_model, IsospectralityReport, Level, LoopShape, LoopSpec, ModelSpec};
use hqc_core::oracle::{convergence_sweep, run_oracle, OracleOptions};
use hqc_core::report::{parse_matrix, to_json_string};
use hqc_core::{Error, Method};
use serde::Serialize;
use serde_json::value::RawValue;

use crate::{
    read_input, ConnectionArg, Failure, Format, GatesArgs, HolonomyArgs, MethodArg, OracleArgs, SpectrumArgs,
    EXIT_INPUT,
};

const EXIT_SPECTRUM: u8 = 2;
const EXIT_HOLONOMY: u8 = 3;
/// Soft failure: the oracle ran but leaked out of the level.
const EXIT_LEAKAGE: u8 = 4;
const EXIT_GATES: u8 = 2;

fn fail(code: u8) -> impl Fn(Error) -> Failure {
    move |e| Failure::new(code, e.to_string())
}

fn load_model(path: &Path) -> Result<ModelSpec, Failure> {
    parse_model(&read_input(path)?).map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", path.display())))
}

/// Unparsable files are input errors; well-formed but invalid loops (open, too short) fail
/// with the command's own code.
fn load_loop(path: &Path, steps: Option<u64>, code: u8) -> Result<LoopSpec, Failure> {
    let spec = LoopSpec::parse(&read_input(path)?).map_err(|e| {
        let code = if matches!(e, Error::Syntax { .. }) { EXIT_INPUT } else { code };
        Failure::new(code, format!("{}: {e}", path.display()))
    })?;
    Ok(match steps {
        Some(m) => spec.with_samples(m as usize),
        None => spec,
    })
}

/// Embeds an already serialized JSON document without reparsing its numbers.
fn raw(json: String) -> Box<RawValue> {
    RawValue::from_string(json.trim_end().to_owned()).expect("core emits valid JSON")
}

#[derive(Serialize)]
struct SpectrumReport<'a> {
    model: Option<&'a str>,
    n: usize,
    levels: &'a [Level],
    omega_min: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    isospectrality: Option<&'a IsoJson>,
}

#[derive(Serialize)]
struct IsoJson {
    passed: bool,
    samples: usize,
    tolerance: f64,
    max_deviation: f64,
    first_failure_sample: Option<usize>,
    first_failure_deviation: Option<f64>,
}

impl IsoJson {
    fn new(report: &IsospectralityReport, samples: usize, tolerance: f64) -> Self {
        IsoJson {
            passed: report.passed,
            samples,
            tolerance,
            max_deviation: report.max_deviation,
            first_failure_sample: report.first_failure.map(|f| f.0),
            first_failure_deviation: report.first_failure.map(|f| f.1),
        }
    }
}

pub fn spectrum(args: &SpectrumArgs) -> Result<String, Failure> {
    let model = load_model(&args.model)?;
    let mut data = model.reference_spectrum(args.degeneracy_tol).map_err(fail(EXIT_SPECTRUM))?.data;
    let mut iso = None;
    if let Some(path) = &args.loop_path {
        let samples = load_loop(path, args.steps, EXIT_SPECTRUM)?.sample().map_err(fail(EXIT_SPECTRUM))?;
        let report = isospectrality_check(&model, &samples, args.iso_tol).map_err(fail(EXIT_SPECTRUM))?;
        iso = Some((IsoJson::new(&report, samples.points.len(), args.iso_tol), report.first_failure));
        data = report.reference;
    }
    let text = match args.out.format {
        Format::Json => to_json_string(&SpectrumReport {
            model: model.name(),
            n: model.dim(),
            levels: &data.levels,
            omega_min: data.gap,
            isospectrality: iso.as_ref().map(|(j, _)| j),
        }),
        Format::Csv => {
            let mut out = String::from("level,energy,degeneracy\n");
            for (k, level) in data.levels.iter().enumerate() {
                let _ = writeln!(out, "{k},{:.12e},{}", level.energy, level.degeneracy);
            }
            out
        }
    };
    match iso {
        Some((_, Some((sample, deviation)))) => {
            Err(Failure::new(EXIT_SPECTRUM, format!("{}", Error::SpectrumDrift { sample, deviation }))
                .with_report(text))
        }
        _ => Ok(text),
    }
}

#[derive(Serialize)]
struct HolonomyReport<'a> {
    model: Option<&'a str>,
    holonomies: Vec<Box<RawValue>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    method_difference: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solid_angle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    step_halving: Option<Halving>,
}

/// `max|U(M) − U(M/2)|`; with a second-order rule the error of `U(M)` is about a third of it.
#[derive(Serialize)]
struct Halving {
    coarse_steps: usize,
    difference: f64,
    estimated_error: f64,
}

fn transport(path: &TransportPath, method: MethodArg) -> hqc_core::Result<Holonomy> {
    match method {
        MethodArg::Pexp => holonomy_pexp(path),
        MethodArg::Projector => holonomy_projector(path),
    }
}

pub fn holonomy(args: &HolonomyArgs) -> Result<String, Failure> {
    let model = load_model(&args.model)?;
    let spec = load_loop(&args.loop_path, args.steps, EXIT_HOLONOMY)?;
    let samples = spec.sample().map_err(fail(EXIT_HOLONOMY))?;
    let path =
        TransportPath::build(&model, &samples, args.level, &args.tol.frame_options()).map_err(fail(EXIT_HOLONOMY))?;

    if args.out.format == Format::Csv {
        let method = match args.connection {
            ConnectionArg::Closed => ConnectionMethod::ClosedForm,
            ConnectionArg::Fd => ConnectionMethod::FrameDifference { h_fd: args.h_fd },
        };
        let rows = path
            .points
            .iter()
            .map(|p| Ok((p.t, connection_at(&model, &p.lambda, &path.level, &p.chart, method)?)))
            .collect::<hqc_core::Result<Vec<_>>>()
            .map_err(fail(EXIT_HOLONOMY))?;
        return Ok(connection_csv(&rows));
    }

    let primary = transport(&path, args.method).map_err(fail(EXIT_HOLONOMY))?;
    let mut holonomies = vec![raw(primary.to_json())];
    let mut method_difference = None;
    if args.cross_check {
        let other = match args.method {
            MethodArg::Pexp => MethodArg::Projector,
            MethodArg::Projector => MethodArg::Pexp,
        };
        let second = transport(&path, other).map_err(fail(EXIT_HOLONOMY))?;
        method_difference = Some(max_abs_diff(&primary.u, &second.u));
        holonomies.push(raw(second.to_json()));
    }
    let spherical = args.solid_angle || matches!(spec.shape, LoopShape::SphereCircle { .. });
    let solid_angle = if spherical { Some(solid_angle(&spec).map_err(fail(EXIT_HOLONOMY))?) } else { None };
    let step_halving = if args.verbose {
        let method = match args.method {
            MethodArg::Pexp => Method::Pexp,
            MethodArg::Projector => Method::Projector,
        };
        let (_, coarse, difference) =
            geometric::step_halving(&model, &spec, args.level, method, &args.tol.frame_options())
                .map_err(fail(EXIT_HOLONOMY))?;
        Some(Halving { coarse_steps: coarse.steps, difference, estimated_error: difference / 3.0 })
    } else {
        None
    };
    Ok(to_json_string(&HolonomyReport {
        model: model.name(),
        holonomies,
        method_difference,
        solid_angle,
        step_halving,
    }))
}

pub fn oracle(args: &OracleArgs) -> Result<String, Failure> {
    let model = load_model(&args.model)?;
    let mut spec = load_loop(&args.loop_path, args.steps, EXIT_HOLONOMY)?;
    if let Some(t) = args.duration {
        spec = spec.with_duration(t);
    }
    let trace_points = args.trace.unwrap_or(if args.out.format == Format::Csv { 100 } else { 0 });
    let options = OracleOptions {
        steps: args.time_steps.map(|m| m as usize),
        leakage_tol: args.leakage_tol,
        trace_points,
        frames: args.tol.frame_options(),
    };

    if let Some(durations) = &args.sweep {
        let samples = spec.sample().map_err(fail(EXIT_HOLONOMY))?;
        let reference = geometric::holonomy(&model, &samples, args.level, Method::Pexp, &options.frames)
            .map_err(fail(EXIT_HOLONOMY))?;
        let report = convergence_sweep(&model, &spec, args.level, durations, &reference, &options)
            .map_err(fail(EXIT_HOLONOMY))?;
        let text = match args.out.format {
            Format::Json => report.to_json(),
            Format::Csv => {
                let mut out = String::from("T,steps,discrepancy,leakage\n");
                for r in &report.rows {
                    let _ = writeln!(out, "{:.12e},{},{:.12e},{:.12e}", r.duration, r.steps, r.discrepancy, r.leakage);
                }
                out
            }
        };
        let leaking: Vec<String> = report
            .rows
            .iter()
            .filter(|r| r.leakage.is_nan() || r.leakage > args.leakage_tol)
            .map(|r| format!("{}", r.duration))
            .collect();
        if !leaking.is_empty() {
            let message = format!("leakage above {:.3e} at T = {}", args.leakage_tol, leaking.join(", "));
            return Err(Failure::new(EXIT_LEAKAGE, message).with_report(text));
        }
        return Ok(text);
    }

    let result = run_oracle(&model, &spec, args.level, &options).map_err(fail(EXIT_HOLONOMY))?;
    let samples = spec.sample().map_err(fail(EXIT_HOLONOMY))?;
    let reference = geometric::holonomy(&model, &samples, args.level, Method::Pexp, &options.frames)
        .map_err(fail(EXIT_HOLONOMY))?;
    let text = match args.out.format {
        Format::Json => result.to_json(Some(&reference)),
        Format::Csv => result.trace_csv(),
    };
    if result.flagged() {
        let message =
            format!("leakage {:.3e} exceeds {:.3e}; evolution is not adiabatic", result.leakage, result.leakage_tol);
        return Err(Failure::new(EXIT_LEAKAGE, message).with_report(text));
    }
    Ok(text)
}

#[derive(Serialize)]
struct RootCount {
    n: usize,
    positive_roots: usize,
}

pub fn gates(args: &GatesArgs) -> Result<String, Failure> {
    if args.out.format == Format::Csv {
        return Err(Failure::new(EXIT_GATES, "gate sequences are written as JSON only"));
    }
    if let Some(n) = args.roots {
        let positive_roots = positive_root_count(n).map_err(fail(EXIT_GATES))?;
        return Ok(to_json_string(&RootCount { n, positive_roots }));
    }
    let path = args.target.as_ref().expect("clap requires --target without --roots");
    let mut target =
        parse_matrix(&read_input(path)?).map_err(|e| Failure::new(EXIT_GATES, format!("{}: {e}", path.display())))?;
    if args.normalize {
        target = normalize_to_su(&target).map_err(fail(EXIT_GATES))?;
    }
    let sequence = decompose_su_n(&target, args.tol).map_err(fail(EXIT_GATES))?;
    let residual = sequence.residual(&target).map_err(fail(EXIT_GATES))?;
    Ok(sequence.to_json(Some(residual)))
}
