use std::fs;

use anyhow::{bail, Context, Result};
use eoc_ntk::activation::delta_eighths;
use eoc_ntk::dataset::DatasetDescriptor;
use eoc_ntk::empirical::{convergence_sweep, ConvergenceRow};
use eoc_ntk::io::{csv_table, fmt_g};
use eoc_ntk::spectral::{theorem_report, SpectralReport};
use eoc_ntk::sweep::{depth_sweep, SweepConfig};
use eoc_ntk::trace::{iterate, Start};
use eoc_ntk::verify::{dual_check, dual_check_activations, propagation_scan, rho_grid, sandwich_scan};
use eoc_ntk::{sample_sphere_dataset, ActivationParams, Dataset};
use serde_json::Value;

use crate::{Command, DataSource, Format, Output};

/// Inputs of the propagation scan.
const PROPAGATION_W: [f64; 3] = [1.1, 2.0, 10.0];
const PROPAGATION_DELTAS: [f64; 3] = [0.125, 0.5, 1.0];

/// Runs a command; `Ok(false)` signals a violated check.
pub fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Dataset { source, output } => dataset(&source, &output),
        Command::Maps { act, rho, w, depth, output } => maps(act.a, act.b, rho, w, depth, &output),
        Command::DualCheck { order, output } => dual(order, &output),
        Command::SweepDepth { a, b, all_deltas, n, dim, seeds, seed, bias, depth, depth_max, output } => {
            let acts = activations(a, b, all_deltas)?;
            if depth < 1 || depth_max < depth {
                bail!("need 1 <= --depth <= --depth-max, got {depth} and {depth_max}");
            }
            let cfg = SweepConfig { n, dim, seeds, base_seed: seed, depths: (depth..=depth_max).collect(), bias };
            sweep(&acts, &cfg, &output)
        }
        Command::Spectrum { act, source, depth, ml, output } => spectrum(act.a, act.b, &source, depth, ml, &output),
        Command::VerifyBounds { a, b, all_deltas, depth_max, propagation_depth, output } => {
            let acts = activations(a, b, all_deltas)?;
            if let Some(p) = acts.iter().find(|p| p.delta == 0.0) {
                bail!(
                    "verify-bounds needs a nonlinear activation (delta > 0); a={} b={} is linear and every bound degenerates",
                    fmt_g(p.a),
                    fmt_g(p.b)
                );
            }
            verify(&acts, depth_max, propagation_depth, &output)
        }
        Command::Empirical { act, n, dim, depth, widths, trials, seed, output } => {
            empirical(act.a, act.b, n, dim, depth, &widths, trials, seed, &output)
        }
    }
}

fn activations(a: Option<f64>, b: Option<f64>, all: bool) -> Result<Vec<ActivationParams>> {
    match (a, b) {
        (Some(a), Some(b)) if !all => Ok(vec![ActivationParams::new(a, b)?]),
        _ => Ok(delta_eighths()),
    }
}

fn emit(output: &Output, text: &str) -> Result<()> {
    match &output.out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Rounds every float to 12 significant digits so JSON matches the CSV
/// precision.
fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64");
            fmt_g(x).parse::<f64>().ok().and_then(serde_json::Number::from_f64).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_floats).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_floats(v))).collect()),
        other => other,
    }
}

fn json_text(v: impl serde::Serialize) -> Result<String> {
    let v = round_floats(serde_json::to_value(v)?);
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

fn load_dataset(source: &DataSource) -> Result<(Dataset, DatasetDescriptor)> {
    let d = match &source.data {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Dataset::from_csv(&text)?
        }
        None => sample_sphere_dataset(source.n, source.dim, source.seed)?,
    };
    let d = match source.bias {
        Some(beta) => d.append_bias(beta)?,
        None => d,
    };
    let desc = DatasetDescriptor {
        n: d.n(),
        dim: d.dim(),
        seed: source.data.is_none().then_some(source.seed),
        bias: source.bias,
    };
    Ok((d, desc))
}

fn dataset(source: &DataSource, output: &Output) -> Result<bool> {
    let (d, desc) = load_dataset(source)?;
    let text = match output.format {
        // full round-trip precision so a reloaded dataset is bitwise equal
        Format::Csv => d.to_csv(),
        Format::Json => serde_json::to_string_pretty(&serde_json::json!({ "descriptor": desc, "points": d.points() }))? + "\n",
    };
    emit(output, &text)?;
    Ok(true)
}

fn maps(a: f64, b: f64, rho: Option<f64>, w: Option<f64>, depth: usize, output: &Output) -> Result<bool> {
    let p = ActivationParams::new(a, b)?;
    let start = match (rho, w) {
        (_, Some(w)) => Start::InverseDistance(w),
        (Some(r), None) => Start::Cosine(r),
        (None, None) => bail!("maps needs --rho or --w"),
    };
    let t = iterate(p.delta, start, depth)?;
    let text = match output.format {
        Format::Json => json_text(&t)?,
        Format::Csv => {
            let rows: Vec<Vec<f64>> = (0..depth)
                .map(|k| vec![(k + 1) as f64, t.rho[k], t.z[k], t.w[k].unwrap_or(f64::INFINITY), t.u[k]])
                .collect();
            csv_table(&["k", "rho", "z", "w", "u"], &rows)
        }
    };
    emit(output, &text)?;
    Ok(true)
}

fn opt_g(x: Option<f64>) -> String {
    x.map(fmt_g).unwrap_or_default()
}

fn dual(order: usize, output: &Output) -> Result<bool> {
    let rows = dual_check(&dual_check_activations(), &rho_grid(), order)?;
    let pass = rows.iter().all(|r| r.passes());
    let text = match output.format {
        Format::Json => json_text(serde_json::json!({ "order": order, "rows": rows, "pass": pass }))?,
        Format::Csv => {
            let mut s = String::from("function,a,b,max_error,rho_at_max,pass\n");
            for r in &rows {
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.function,
                    opt_g(r.a),
                    opt_g(r.b),
                    fmt_g(r.max_error),
                    fmt_g(r.rho_at_max),
                    r.passes()
                ));
            }
            s
        }
    };
    emit(output, &text)?;
    Ok(pass)
}

fn sweep(acts: &[ActivationParams], cfg: &SweepConfig, output: &Output) -> Result<bool> {
    let curves = depth_sweep(acts, cfg)?;
    match (&output.out, output.format) {
        (Some(dir), Format::Csv) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for c in &curves {
                let path = dir.join(c.file_name());
                fs::write(&path, c.to_csv()).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        (None, Format::Csv) => {
            let mut s = String::new();
            for c in &curves {
                s.push_str(&format!("# a={} b={} delta={}\n", fmt_g(c.params.a), fmt_g(c.params.b), fmt_g(c.params.delta)));
                s.push_str(&c.to_csv());
            }
            print!("{s}");
        }
        (Some(dir), Format::Json) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            fs::write(dir.join("sweep.json"), json_text(serde_json::json!({ "config": cfg, "curves": curves }))?)?;
        }
        (None, Format::Json) => print!("{}", json_text(serde_json::json!({ "config": cfg, "curves": curves }))?),
    }
    Ok(true)
}

fn spectrum(a: f64, b: f64, source: &DataSource, depth: usize, ml: usize, output: &Output) -> Result<bool> {
    let p = ActivationParams::new(a, b)?;
    let (d, desc) = load_dataset(source)?;
    let report = theorem_report(&p, &d, depth, ml)?;
    let text = match output.format {
        Format::Json => json_text(serde_json::json!({ "dataset": desc, "report": report }))?,
        Format::Csv => csv_table(&SpectralReport::CSV_HEADER.split(',').collect::<Vec<_>>(), &[report.csv_row()]),
    };
    emit(output, &text)?;
    for c in report.inequalities.iter().filter(|c| !c.holds) {
        eprintln!("violated: {} ({} > {})", c.name, fmt_g(c.lhs), fmt_g(c.rhs));
    }
    Ok(report.all_inequalities_hold())
}

fn verify(acts: &[ActivationParams], depth_max: usize, propagation_depth: usize, output: &Output) -> Result<bool> {
    let prop_deltas: Vec<f64> = if acts.len() == 1 { vec![acts[0].delta] } else { PROPAGATION_DELTAS.to_vec() };
    let mut props = Vec::new();
    for &delta in &prop_deltas {
        for w in PROPAGATION_W {
            props.push(propagation_scan(delta, w, propagation_depth)?);
        }
    }
    let grid = rho_grid();
    let sandwiches = acts.iter().map(|p| sandwich_scan(p.delta, &grid, depth_max)).collect::<eoc_ntk::Result<Vec<_>>>()?;
    let pass = props.iter().all(|s| s.passes()) && sandwiches.iter().all(|s| s.passes());
    let text = match output.format {
        Format::Json => json_text(serde_json::json!({ "propagation": props, "sandwich": sandwiches, "pass": pass }))?,
        Format::Csv => {
            let mut s = String::from("check,delta,w,k_max,max_early,max_late,upper_violations,lower_violations,pass\n");
            for p in &props {
                s.push_str(&format!(
                    "propagation,{},{},{},{},{},,,{}\n",
                    fmt_g(p.delta),
                    fmt_g(p.w),
                    p.k_max,
                    fmt_g(p.max_early),
                    fmt_g(p.max_late),
                    p.passes()
                ));
            }
            for q in &sandwiches {
                s.push_str(&format!(
                    "sandwich,{},,{},,,{},{},{}\n",
                    fmt_g(q.delta),
                    q.k_max,
                    q.upper_violations,
                    q.lower_violations,
                    q.passes()
                ));
            }
            s
        }
    };
    emit(output, &text)?;
    Ok(pass)
}

#[allow(clippy::too_many_arguments)]
fn empirical(
    a: f64,
    b: f64,
    n: usize,
    dim: usize,
    depth: usize,
    widths: &[usize],
    trials: usize,
    seed: u64,
    output: &Output,
) -> Result<bool> {
    let p = ActivationParams::new(a, b)?;
    let d = sample_sphere_dataset(n, dim, seed)?;
    let rows = convergence_sweep(&p, &d, widths, depth, trials, seed)?;
    let text = match output.format {
        Format::Json => json_text(&rows)?,
        Format::Csv => {
            let mut s = format!("{}\n", ConvergenceRow::CSV_HEADER);
            for r in &rows {
                s.push_str(&format!("{},{},{},{}\n", r.width, fmt_g(r.mean_rel_error), fmt_g(r.stderr), opt_g(r.slope_so_far)));
            }
            s
        }
    };
    emit(output, &text)?;
    Ok(true)
}

