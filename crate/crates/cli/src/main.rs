//! `hjcs` — command-line harness for the weakly coupled Hamilton-Jacobi
//! solvers: validation, discounted solves, occupancy measures, discount
//! sweeps, ergodic solves, normal forms, and oracle comparisons.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation failure, 3 numerical
//! failure, 4 oracle mismatch.
//!
//! Conventions: grid indices (`--z`, the `x` column) are zero-based; mode and
//! control indices (`--k`, the `mode`/`control` columns) are one-based.

mod report;

use clap::{Parser, Subcommand};
use hjcs_core as core;
use hjcs_core::Error as CoreError;
use report::{fingerprint, ErrorReport, RunReport};
use std::path::{Path, PathBuf};
use std::time::Instant;

const EXIT_USAGE: i32 = 1;
const EXIT_VALIDATION: i32 = 2;
const EXIT_NUMERICAL: i32 = 3;
const EXIT_ORACLE_MISMATCH: i32 = 4;
const ORACLE_TOL: f64 = 1e-9;

#[derive(Parser)]
#[command(
    name = "hjcs",
    version,
    about = "Solvers for weakly coupled systems of Hamilton-Jacobi equations on the torus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check monotonicity of the coupling and coercivity of the Hamiltonians.
    Validate {
        /// Problem document (JSON).
        problem: PathBuf,
    },
    /// Solve the discounted system.
    Solve {
        problem: PathBuf,
        /// Discount factor λ > 0.
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        /// Sup-norm Bellman residual target.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Write the value table as CSV (x,mode,value,control).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the Green-Poisson occupancy measure for one anchor state.
    Measure {
        problem: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        /// Anchor grid index (zero-based).
        #[arg(long)]
        z: usize,
        /// Anchor mode (one-based).
        #[arg(long)]
        k: usize,
        /// Seed for the adjoint-residual test vectors.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Write the measure as CSV (x,control,mode,weight).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Vanishing-discount sweep with diagnostics per discount.
    Sweep {
        problem: PathBuf,
        /// Comma-separated decreasing discounts; default 0.1*2^-j, j=0..7.
        #[arg(long)]
        schedule: Option<String>,
        /// Comma-separated anchors `z:k` (z zero-based, k one-based); default 0:1.
        #[arg(long)]
        anchors: Option<String>,
        /// Write per-discount rows as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the ergodic problem Bv + H[v] = c (constant coupling).
    Ergodic {
        problem: PathBuf,
        #[arg(long)]
        schedule: Option<String>,
        /// Write the value table as CSV (x,mode,value).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Block normal form of the (constant) coupling matrix.
    NormalForm {
        problem: PathBuf,
    },
    /// Compare the solver against the exhaustive policy-enumeration oracle.
    Oracle {
        problem: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        lambda: f64,
        /// Anchor grid index (zero-based).
        #[arg(long)]
        z: usize,
        /// Anchor mode (one-based).
        #[arg(long)]
        k: usize,
    },
}

fn exit_code(e: &CoreError) -> i32 {
    match e {
        CoreError::Parse(_)
        | CoreError::Shape { .. }
        | CoreError::NonFinite { .. }
        | CoreError::UnknownBuiltin(_)
        | CoreError::InvalidParam(_)
        | CoreError::IndexOutOfRange(_)
        | CoreError::InvalidDiscount { .. }
        | CoreError::Schedule(_) => EXIT_USAGE,
        CoreError::NonMonotone { .. } => EXIT_VALIDATION,
        _ => EXIT_NUMERICAL,
    }
}

fn error_kind(e: &CoreError) -> &'static str {
    match e {
        CoreError::Parse(_) => "parse",
        CoreError::Shape { .. } => "shape",
        CoreError::NonFinite { .. } => "non_finite",
        CoreError::UnknownBuiltin(_) => "unknown_builtin",
        CoreError::InvalidParam(_) => "invalid_param",
        CoreError::NonMonotone { .. } => "non_monotone",
        CoreError::InvalidDiscount { .. } => "invalid_discount",
        CoreError::IndexOutOfRange(_) => "index_out_of_range",
        CoreError::NonConvergence { .. } => "non_convergence",
        CoreError::SingularSystem => "singular_system",
        CoreError::OracleTooLarge(_) => "oracle_too_large",
        CoreError::Schedule(_) => "schedule",
        CoreError::ExtrapolationUnstable(_) => "extrapolation_unstable",
        CoreError::DivergentSweep(_) => "divergent_sweep",
        CoreError::Unsupported(_) => "unsupported",
    }
}

struct Failure {
    kind: String,
    message: String,
    code: i32,
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        Failure {
            kind: error_kind(&e).to_string(),
            message: e.to_string(),
            code: exit_code(&e),
        }
    }
}

fn usage_failure(message: String) -> Failure {
    Failure {
        kind: "usage".to_string(),
        message,
        code: EXIT_USAGE,
    }
}

fn load(path: &Path) -> Result<core::ProblemInstance, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage_failure(format!("cannot read {}: {e}", path.display())))?;
    core::load_problem(&text).map_err(Failure::from)
}

fn parse_schedule(arg: &Option<String>) -> Result<Vec<f64>, Failure> {
    match arg {
        None => Ok(core::default_schedule()),
        Some(s) => s
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f64>()
                    .map_err(|e| usage_failure(format!("bad schedule entry `{tok}`: {e}")))
            })
            .collect(),
    }
}

fn parse_anchors(
    arg: &Option<String>,
    p: &core::ProblemInstance,
) -> Result<Vec<(usize, usize)>, Failure> {
    let text = arg.as_deref().unwrap_or("0:1");
    let mut out = Vec::new();
    for tok in text.split(',') {
        let (z, k) = tok
            .trim()
            .split_once(':')
            .ok_or_else(|| usage_failure(format!("anchor `{tok}` is not of the form z:k")))?;
        let z: usize = z
            .parse()
            .map_err(|e| usage_failure(format!("bad anchor grid index `{z}`: {e}")))?;
        let k: usize = k
            .parse()
            .map_err(|e| usage_failure(format!("bad anchor mode `{k}`: {e}")))?;
        if k == 0 || k > p.modes() {
            return Err(usage_failure(format!("anchor mode {k} out of range (one-based)")));
        }
        out.push((z, k - 1));
    }
    Ok(out)
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<(), Failure> {
    let mut text = String::with_capacity(rows.len() * 32 + header.len() + 1);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    std::fs::write(path, text)
        .map_err(|e| usage_failure(format!("cannot write {}: {e}", path.display())))
}

fn main() {
    // Flag parsing failures are usage errors (exit 1); help and version
    // requests exit 0.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let code = run(cli);
    std::process::exit(code);
}

fn run(cli: Cli) -> i32 {
    let started = Instant::now();
    let command_name = match &cli.command {
        Command::Validate { .. } => "validate",
        Command::Solve { .. } => "solve",
        Command::Measure { .. } => "measure",
        Command::Sweep { .. } => "sweep",
        Command::Ergodic { .. } => "ergodic",
        Command::NormalForm { .. } => "normal-form",
        Command::Oracle { .. } => "oracle",
    };
    match dispatch(&cli.command, started) {
        Ok(code) => code,
        Err(f) => {
            ErrorReport::new(command_name, &f.kind, f.message).print();
            f.code
        }
    }
}

fn dispatch(command: &Command, started: Instant) -> Result<i32, Failure> {
    match command {
        Command::Validate { problem } => cmd_validate(problem, started),
        Command::Solve {
            problem,
            lambda,
            tol,
            out,
        } => cmd_solve(problem, *lambda, *tol, out.as_deref(), started),
        Command::Measure {
            problem,
            lambda,
            z,
            k,
            seed,
            out,
        } => cmd_measure(problem, *lambda, *z, *k, *seed, out.as_deref(), started),
        Command::Sweep {
            problem,
            schedule,
            anchors,
            out,
        } => cmd_sweep(problem, schedule, anchors, out.as_deref(), started),
        Command::Ergodic {
            problem,
            schedule,
            out,
        } => cmd_ergodic(problem, schedule, out.as_deref(), started),
        Command::NormalForm { problem } => cmd_normal_form(problem, started),
        Command::Oracle {
            problem,
            lambda,
            z,
            k,
        } => cmd_oracle(problem, *lambda, *z, *k, started),
    }
}

fn wall_ms(started: Instant) -> f64 {
    started.elapsed().as_secs_f64() * 1e3
}

fn cmd_validate(path: &Path, started: Instant) -> Result<i32, Failure> {
    let p = load(path)?;
    let report = core::validate_problem(&p);
    let witness = report.monotone_failure.as_ref().map(|f| {
        serde_json::json!({
            "x": f.x,
            "u": f.witness.u,
            "argmax_mode": f.witness.argmax + 1,
            "image_value": f.witness.image_value,
        })
    });
    let results = serde_json::json!({
        "monotone": report.monotone,
        "monotone_witness": witness,
        "coercive": report.coercive,
        "min_coercivity_margin": report.min_margin,
        "worst_margin_at": {"x": report.worst_margin_at.0, "mode": report.worst_margin_at.1 + 1},
        "directions_sampled": report.directions_used,
        "warnings": report.warnings,
    });
    RunReport::new(
        "validate",
        fingerprint(&p),
        serde_json::json!({"problem": path.display().to_string()}),
        results,
        serde_json::json!({}),
        wall_ms(started),
    )
    .print();
    Ok(if report.monotone { 0 } else { EXIT_VALIDATION })
}

fn cmd_solve(
    path: &Path,
    lambda: f64,
    tol: f64,
    out: Option<&Path>,
    started: Instant,
) -> Result<i32, Failure> {
    let p = load(path)?;
    let opts = core::SolverOptions {
        tol,
        ..core::SolverOptions::default()
    };
    let v = core::solve_discounted_with(&p, lambda, &opts, None)?;
    let op = core::build_operator(&p, lambda)?;
    let diag = core::diagnostics(&p, &v.values);
    let values_json = if p.num_states() <= 200 {
        serde_json::json!(v.values)
    } else {
        serde_json::Value::Null
    };
    let results = serde_json::json!({
        "lambda": lambda,
        "sup_bound": diag.sup_bound,
        "lipschitz": diag.lipschitz,
        "values": values_json,
    });
    let diagnostics = serde_json::json!({
        "contraction_factor": op.contraction_factor(),
        "iterations": v.iterations,
        "residual": v.residual,
        "tol": tol,
    });
    if let Some(out) = out {
        let np = p.grid().num_points();
        let rows: Vec<String> = (0..p.num_states())
            .map(|s| {
                format!(
                    "{},{},{},{}",
                    s % np,
                    s / np + 1,
                    v.values[s],
                    v.policy[s] + 1
                )
            })
            .collect();
        write_csv(out, "x,mode,value,control", &rows)?;
    }
    RunReport::new(
        "solve",
        fingerprint(&p),
        serde_json::json!({"problem": path.display().to_string(), "lambda": lambda, "tol": tol}),
        results,
        diagnostics,
        wall_ms(started),
    )
    .print();
    Ok(0)
}

fn cmd_measure(
    path: &Path,
    lambda: f64,
    z: usize,
    k: usize,
    seed: u64,
    out: Option<&Path>,
    started: Instant,
) -> Result<i32, Failure> {
    let p = load(path)?;
    if k == 0 || k > p.modes() {
        return Err(usage_failure(format!("mode {k} out of range (one-based)")));
    }
    let mode = k - 1;
    let v = core::solve_discounted(&p, lambda)?;
    let nu = core::green_poisson_batch(&p, &v, &[(z, mode)])?
        .pop()
        .expect("one anchor");
    let pairing = nu.pair_cost(&p, p.cost_table());
    let anchor_value = v.values[p.state_index(z, mode)];
    let gap = (anchor_value - pairing).abs();
    let normalization_error = (nu.normalization(&p) - 1.0).abs();
    let psi = core::measures::default_test_vectors(&p, seed, 100);
    let adjoint = core::adjoint_residual(&p, lambda, &nu, &psi)?;
    let results = serde_json::json!({
        "lambda": lambda,
        "anchor": {"z": z, "k": k},
        "value_at_anchor": anchor_value,
        "cost_pairing": pairing,
        "total_mass": nu.total_mass(),
        "mass_per_mode": nu.mass_per_mode(p.modes()),
    });
    let diagnostics = serde_json::json!({
        "adjoint_residual": adjoint,
        "duality_gap": gap,
        "normalization_error": normalization_error,
        "psi_vectors": psi.len(),
        "seed": seed,
        "solver_iterations": v.iterations,
        "solver_residual": v.residual,
    });
    if let Some(out) = out {
        let rows: Vec<String> = nu
            .atoms
            .iter()
            .map(|a| format!("{},{},{},{}", a.x, a.control + 1, a.mode + 1, a.weight))
            .collect();
        write_csv(out, "x,control,mode,weight", &rows)?;
    }
    RunReport::new(
        "measure",
        fingerprint(&p),
        serde_json::json!({
            "problem": path.display().to_string(),
            "lambda": lambda, "z": z, "k": k, "seed": seed,
        }),
        results,
        diagnostics,
        wall_ms(started),
    )
    .print();
    Ok(0)
}

fn cmd_sweep(
    path: &Path,
    schedule: &Option<String>,
    anchors: &Option<String>,
    out: Option<&Path>,
    started: Instant,
) -> Result<i32, Failure> {
    let p = load(path)?;
    let schedule = parse_schedule(schedule)?;
    let anchors = parse_anchors(anchors, &p)?;
    let record = core::lambda_sweep(&p, &schedule, &anchors)?;
    let entries: Vec<serde_json::Value> = record
        .entries
        .iter()
        .map(|e| {
            serde_json::json!({
                "lambda": e.lambda,
                "sup_bound": e.sup_bound,
                "lipschitz_max": e.lipschitz_max,
                "duality_gap": e.duality_gap,
                "scaled_anchor_values": e.scaled_anchor_values,
                "residual": e.residual,
                "iterations": e.iterations,
                "error": e.error,
            })
        })
        .collect();
    let results = serde_json::json!({
        "anchors": record.anchors.iter().map(|&(z, k)| serde_json::json!({"z": z, "k": k + 1})).collect::<Vec<_>>(),
        "entries": entries,
        "consecutive_distances": record.consecutive_distances,
        "cauchy_nonincreasing": record.cauchy_nonincreasing,
        "e_flag": {
            "pass": record.e_flag.pass,
            "intercepts": record.e_flag.intercepts,
            "suggested_shift": record.e_flag.suggested_shift,
        },
        "final_lambda": record.final_lambda,
    });
    let diagnostics = serde_json::json!({
        "final_residual_p0": record.final_residual_p0,
    });
    if let Some(out) = out {
        let mut rows = Vec::new();
        for e in &record.entries {
            for (j, &(z, k)) in record.anchors.iter().enumerate() {
                rows.push(format!(
                    "{},{},{},{},{},{},{},{},{}",
                    e.lambda,
                    z,
                    k + 1,
                    e.scaled_anchor_values[j],
                    e.sup_bound,
                    e.lipschitz_max,
                    e.duality_gap.map_or(String::new(), |g| g.to_string()),
                    e.residual,
                    e.iterations,
                ));
            }
        }
        write_csv(
            out,
            "lambda,anchor_z,anchor_k,scaled_value,sup_bound,lipschitz_max,duality_gap,residual,iterations",
            &rows,
        )?;
    }
    RunReport::new(
        "sweep",
        fingerprint(&p),
        serde_json::json!({
            "problem": path.display().to_string(),
            "schedule": schedule,
            "anchors": anchors.iter().map(|&(z, k)| format!("{z}:{}", k + 1)).collect::<Vec<_>>(),
        }),
        results,
        diagnostics,
        wall_ms(started),
    )
    .print();
    Ok(0)
}

fn cmd_ergodic(
    path: &Path,
    schedule: &Option<String>,
    out: Option<&Path>,
    started: Instant,
) -> Result<i32, Failure> {
    let p = load(path)?;
    let schedule = parse_schedule(schedule)?;
    let solution = core::solve_ergodic(&p, &schedule)?;
    let nf = &solution.normal_form;
    let results = serde_json::json!({
        "constants": solution.constants,
        "constants_extrapolated": solution.constants_extrapolated,
        "block_provenance": solution.block_provenance.iter().map(|b| b + 1).collect::<Vec<_>>(),
        "permutation": nf.permutation.order().iter().map(|o| o + 1).collect::<Vec<_>>(),
        "blocks": nf.blocks.iter().map(|b| serde_json::json!({
            "start": b.start + 1,
            "size": b.size,
            "kind": match b.kind { core::BlockKind::Diagonal => "diagonal", core::BlockKind::Irreducible => "irreducible" },
        })).collect::<Vec<_>>(),
    });
    let diagnostics = serde_json::json!({
        "residual": solution.residual,
    });
    if let Some(out) = out {
        let np = p.grid().num_points();
        let rows: Vec<String> = (0..p.num_states())
            .map(|s| format!("{},{},{}", s % np, s / np + 1, solution.values[s]))
            .collect();
        write_csv(out, "x,mode,value", &rows)?;
    }
    RunReport::new(
        "ergodic",
        fingerprint(&p),
        serde_json::json!({
            "problem": path.display().to_string(),
            "schedule": schedule,
        }),
        results,
        diagnostics,
        wall_ms(started),
    )
    .print();
    Ok(0)
}

fn cmd_normal_form(path: &Path, started: Instant) -> Result<i32, Failure> {
    let p = load(path)?;
    let b = p.constant_coupling().ok_or(Failure {
        kind: "non_constant_coupling".into(),
        message: "normal form requires a constant coupling matrix".into(),
        code: EXIT_VALIDATION,
    })?;
    let nf = b.normal_form()?;
    let results = serde_json::json!({
        "permutation": nf.permutation.order().iter().map(|o| o + 1).collect::<Vec<_>>(),
        "leading_diagonal_size": nf.leading_diagonal_size(),
        "blocks": nf.blocks.iter().map(|blk| serde_json::json!({
            "start": blk.start + 1,
            "size": blk.size,
            "kind": match blk.kind { core::BlockKind::Diagonal => "diagonal", core::BlockKind::Irreducible => "irreducible" },
            "entries": blk.matrix.entries(),
        })).collect::<Vec<_>>(),
        "conjugated": nf.conjugated.entries(),
    });
    RunReport::new(
        "normal-form",
        fingerprint(&p),
        serde_json::json!({"problem": path.display().to_string()}),
        results,
        serde_json::json!({}),
        wall_ms(started),
    )
    .print();
    Ok(0)
}

fn cmd_oracle(
    path: &Path,
    lambda: f64,
    z: usize,
    k: usize,
    started: Instant,
) -> Result<i32, Failure> {
    let p = load(path)?;
    if k == 0 || k > p.modes() {
        return Err(usage_failure(format!("mode {k} out of range (one-based)")));
    }
    let mode = k - 1;
    let oracle = core::brute_force_oracle(&p, lambda, z, mode)?;
    let v = core::solve_discounted(&p, lambda)?;
    let mut value_diff = 0.0f64;
    for s in 0..p.num_states() {
        value_diff = value_diff.max((v.values[s] - oracle.values[s]).abs());
    }
    let nu = core::green_poisson_batch(&p, &v, &[(z, mode)])?
        .pop()
        .expect("one anchor");
    let as_map = |m: &core::DiscreteMeasure| {
        m.atoms
            .iter()
            .map(|a| ((a.x, a.control, a.mode), a.weight))
            .collect::<std::collections::BTreeMap<_, _>>()
    };
    let (ma, mb) = (as_map(&nu), as_map(&oracle.measure));
    let mut measure_diff = 0.0f64;
    for key in ma.keys().chain(mb.keys()) {
        let a = ma.get(key).copied().unwrap_or(0.0);
        let b = mb.get(key).copied().unwrap_or(0.0);
        measure_diff = measure_diff.max((a - b).abs());
    }
    let agree = value_diff <= ORACLE_TOL && measure_diff <= ORACLE_TOL;
    let results = serde_json::json!({
        "lambda": lambda,
        "anchor": {"z": z, "k": k},
        "solver_value": v.values[p.state_index(z, mode)],
        "oracle_value": oracle.anchor_value,
        "max_value_diff": value_diff,
        "max_measure_diff": measure_diff,
        "policies_enumerated": oracle.policies_enumerated,
        "minimality_slack": oracle.anchor_value - oracle.min_pairing_over_policies,
        "agree": agree,
    });
    RunReport::new(
        "oracle",
        fingerprint(&p),
        serde_json::json!({
            "problem": path.display().to_string(),
            "lambda": lambda, "z": z, "k": k, "tol": ORACLE_TOL,
        }),
        results,
        serde_json::json!({"solver_residual": v.residual}),
        wall_ms(started),
    )
    .print();
    Ok(if agree { 0 } else { EXIT_ORACLE_MISMATCH })
}
