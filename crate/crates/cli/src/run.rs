//! Command execution.

use optiloop::block::{
    assemble, block_add, block_invert, block_multiply, encoding_exponent, pad, pad_and_partition,
    partition, BlockConfig, PadMode,
};
use optiloop::engine::{invert_matrix, loop_add, loop_multiply, throughput_for, IterationTrace};
use optiloop::equations::{solve_system, Grid1D, Grid2D, LinearSystem, Solution};
use optiloop::hardware::TILE;
use optiloop::linalg::{accuracy_percent, dense_invert, matadd, matmul};
use optiloop::{Matrix, StreamKey};
use rayon::prelude::*;

use crate::config::{Command, ExperimentConfig, Hardware, SweepParameter};
use crate::output::{fmt_f64, fmt_opt, Artifacts, Table};
use crate::CliError;

/// Result of inverting one operand, on a single tile or tiled.
#[derive(Debug, Clone)]
pub struct InvertOutcome {
    pub inverse: Matrix,
    pub oracle: Option<Matrix>,
    pub accuracy: Option<f64>,
    /// Relaxation factor; only reported for single-tile runs.
    pub omega: Option<f64>,
    pub traces: Vec<IterationTrace>,
    /// Circulations of every column solve.
    pub circulations: Vec<usize>,
    pub residual: Option<f64>,
    pub sign_ambiguity: bool,
}

impl InvertOutcome {
    pub fn max_circulations(&self) -> usize {
        self.circulations.iter().copied().max().unwrap_or(0)
    }
}

pub fn invert(
    cfg: &ExperimentConfig,
    a: &Matrix,
    key: StreamKey,
) -> Result<InvertOutcome, CliError> {
    let loop_cfg = cfg.loop_config()?;
    let oracle = dense_invert(a).ok();
    let mut out = if a.shape() == (TILE, TILE) {
        let inv = invert_matrix(a, &loop_cfg, key)?;
        InvertOutcome {
            circulations: inv.traces.iter().map(|t| t.circulations_used).collect(),
            omega: Some(inv.omega),
            sign_ambiguity: inv.sign_ambiguity,
            inverse: inv.inverse,
            traces: inv.traces,
            oracle: None,
            accuracy: None,
            residual: None,
        }
    } else {
        if !a.is_square() {
            return Err(optiloop::Error::ShapeMismatch {
                op: "invert",
                left: a.shape(),
                right: (a.rows(), a.rows()),
            }
            .into());
        }
        let scale = (-encoding_exponent(a.max_abs()) as f64).exp2();
        let grid = pad_and_partition(&a.scale(scale), PadMode::Identity);
        let block_cfg = BlockConfig {
            loop_cfg,
            verify_threshold: cfg.verify_threshold,
        };
        let inv = block_invert(&grid, &block_cfg, key)?;
        InvertOutcome {
            inverse: inv.inverse.unpadded().scale(scale),
            circulations: inv.circulations,
            residual: Some(inv.residual),
            omega: None,
            traces: Vec::new(),
            oracle: None,
            accuracy: None,
            sign_ambiguity: false,
        }
    };
    if let Some(o) = &oracle {
        out.accuracy = Some(accuracy_percent(&out.inverse, o)?);
    }
    out.oracle = oracle;
    Ok(out)
}

fn two_operand(
    cfg: &ExperimentConfig,
    command: Command,
    a: &Matrix,
    b: &Matrix,
    key: StreamKey,
) -> Result<Matrix, CliError> {
    let loop_cfg = cfg.loop_config()?;
    if a.shape() == (TILE, TILE) && b.shape() == (TILE, TILE) {
        let bank = loop_cfg.encode(a, key.child(0))?;
        return Ok(match command {
            Command::Add => loop_add(&bank, b, cfg.sign.into(), &loop_cfg, key.child(1))?,
            _ => loop_multiply(&bank, b, &loop_cfg, key.child(1))?,
        });
    }
    let (rows, cols) = match command {
        Command::Add => {
            if a.shape() != b.shape() {
                return Err(optiloop::Error::ShapeMismatch {
                    op: "add",
                    left: a.shape(),
                    right: b.shape(),
                }
                .into());
            }
            a.shape()
        }
        _ => {
            if a.cols() != b.rows() {
                return Err(optiloop::Error::ShapeMismatch {
                    op: "multiply",
                    left: a.shape(),
                    right: b.shape(),
                }
                .into());
            }
            (a.rows(), b.cols())
        }
    };
    let side = [a.rows(), a.cols(), b.rows(), b.cols()]
        .into_iter()
        .max()
        .unwrap_or(0);
    let square = |m: &Matrix| {
        let mut s = Matrix::zeros(side, side);
        s.set_block(0, 0, m);
        pad(&s, PadMode::Zero)
    };
    let (ga, gb) = (partition(&square(a))?, partition(&square(b))?);
    let out = match command {
        Command::Add => block_add(&ga, &gb, cfg.sign.into(), &loop_cfg, key)?,
        _ => block_multiply(&ga, &gb, &loop_cfg, key)?,
    };
    Ok(assemble(&out).submatrix(0, 0, rows, cols))
}

fn prefix(cfg: &ExperimentConfig, command: &str) -> Vec<String> {
    vec![cfg.seed().to_string(), cfg.hash(), command.to_string()]
}

fn with_prefix(base: &[&str]) -> Vec<String> {
    ["seed", "config_hash", "command"]
        .iter()
        .chain(base)
        .map(|s| s.to_string())
        .collect()
}

fn matrix_table(value: &Matrix, oracle: Option<&Matrix>, diagnostics: bool) -> Table {
    let mut header = vec!["row", "col", "value"];
    if diagnostics {
        header.extend(["oracle", "abs_error"]);
    }
    let mut t = Table::new(&header);
    for i in 0..value.rows() {
        for j in 0..value.cols() {
            let mut row = vec![i.to_string(), j.to_string(), fmt_f64(value[(i, j)])];
            if diagnostics {
                let o = oracle.map(|o| o[(i, j)]);
                row.push(fmt_opt(o));
                row.push(fmt_opt(o.map(|o| (value[(i, j)] - o).abs())));
            }
            t.push(row);
        }
    }
    t
}

fn trace_table(traces: &[IterationTrace]) -> Table {
    let mut t = Table::new(&["column", "k", "norm", "relative_change"]);
    for (j, tr) in traces.iter().enumerate() {
        t.push(vec![
            j.to_string(),
            "0".into(),
            fmt_f64(tr.initial.norm2()),
            String::new(),
        ]);
        for (k, (x, change)) in tr.outputs.iter().zip(&tr.relative_changes).enumerate() {
            t.push(vec![
                j.to_string(),
                (k + 1).to_string(),
                fmt_f64(x.norm2()),
                fmt_f64(*change),
            ]);
        }
    }
    t
}

fn run_invert(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let a = cfg.matrix.as_ref().expect("validated").resolve()?;
    let key = StreamKey::root(cfg.seed());
    let loop_time = cfg.loop_params.loop_time;
    let out = invert(cfg, &a, key)?;

    let mut results = Table::new(&with_prefix(&[
        "column",
        "omega",
        "circulations",
        "converged",
        "final_relative_change",
        "throughput_per_s",
        "accuracy_percent",
    ]));
    for (j, &c) in out.circulations.iter().enumerate() {
        let trace = out.traces.get(j);
        let mut row = prefix(cfg, "invert");
        row.extend([
            j.to_string(),
            fmt_opt(out.omega),
            c.to_string(),
            trace.map_or(String::new(), |t| t.converged.to_string()),
            fmt_opt(trace.and_then(|t| t.relative_changes.last().copied())),
            fmt_f64(throughput_for(c.max(1), loop_time)),
            fmt_opt(out.accuracy),
        ]);
        results.push(row);
    }
    art.add("results", results);
    art.add("trace", trace_table(&out.traces));
    art.add(
        "solution",
        matrix_table(&out.inverse, out.oracle.as_ref(), cfg.diagnostics),
    );

    art.line(format!("command: invert {}x{}", a.rows(), a.cols()));
    art.line(format!("accuracy_percent: {}", fmt_opt(out.accuracy)));
    if let Some(w) = out.omega {
        art.line(format!("omega: {}", fmt_f64(w)));
    }
    art.line(format!("max_circulations: {}", out.max_circulations()));
    art.line(format!(
        "throughput_per_s: {}",
        fmt_f64(throughput_for(out.max_circulations().max(1), loop_time))
    ));
    if let Some(r) = out.residual {
        art.line(format!("inverse_residual: {}", fmt_f64(r)));
    }
    if out.sign_ambiguity {
        art.line("warning: direct detection saw negative amplitudes; signs are lost");
    }
    Ok(())
}

fn run_two_operand(
    cfg: &ExperimentConfig,
    command: Command,
    art: &mut Artifacts,
) -> Result<(), CliError> {
    let a = cfg.matrix.as_ref().expect("validated").resolve()?;
    let b = cfg.operand.as_ref().expect("validated").resolve()?;
    let value = two_operand(cfg, command, &a, &b, StreamKey::root(cfg.seed()))?;
    let oracle = match command {
        Command::Add => matadd(&a, &b, cfg.sign.into())?,
        _ => matmul(&a, &b)?,
    };
    let accuracy = accuracy_percent(&value, &oracle).ok();
    let circulations = 2;

    let mut results = Table::new(&with_prefix(&[
        "column",
        "circulations",
        "throughput_per_s",
        "accuracy_percent",
    ]));
    for j in 0..value.cols() {
        let mut row = prefix(cfg, command.name());
        row.extend([
            j.to_string(),
            circulations.to_string(),
            fmt_f64(throughput_for(circulations, cfg.loop_params.loop_time)),
            fmt_opt(accuracy),
        ]);
        results.push(row);
    }
    art.add("results", results);
    art.add("trace", trace_table(&[]));
    art.add(
        "solution",
        matrix_table(&value, Some(&oracle), cfg.diagnostics),
    );
    art.line(format!("command: {}", command.name()));
    art.line(format!("accuracy_percent: {}", fmt_opt(accuracy)));
    Ok(())
}

/// `(x, y)` of each unknown; `y` is `None` on 1-D grids.
pub type Nodes = Vec<(f64, Option<f64>)>;

/// Assembled system plus the coordinates of each unknown.
pub fn equation_system(
    cfg: &ExperimentConfig,
    command: Command,
) -> Result<(LinearSystem, Nodes), CliError> {
    Ok(match command {
        Command::SolveIe => {
            let p = cfg.fredholm.as_ref().expect("validated");
            let nodes = Grid1D::midpoints(p.a, p.b, p.n)?
                .points()
                .iter()
                .map(|&x| (x, None))
                .collect();
            (p.assemble()?, nodes)
        }
        Command::SolveOde => {
            let p = cfg.ode.as_ref().expect("validated");
            let nodes = p.grid()?.points().iter().map(|&x| (x, None)).collect();
            (p.assemble()?, nodes)
        }
        Command::SolvePde => {
            let p = cfg.poisson.as_ref().expect("validated");
            let grid = Grid2D::new(p.n)?;
            let mut nodes = vec![(0.0, None); grid.unknowns()];
            for j in 0..p.n {
                for i in 0..p.n {
                    let (x, y) = grid.node(i, j);
                    nodes[grid.index(i, j)] = (x, Some(y));
                }
            }
            (p.assemble()?, nodes)
        }
        _ => unreachable!("not an equation command"),
    })
}

pub fn solve(
    cfg: &ExperimentConfig,
    sys: &LinearSystem,
    key: StreamKey,
) -> Result<Solution, CliError> {
    let block_cfg = BlockConfig {
        loop_cfg: cfg.loop_config()?,
        verify_threshold: cfg.verify_threshold,
    };
    Ok(solve_system(sys, &block_cfg, key, true)?)
}

fn run_solve(
    cfg: &ExperimentConfig,
    command: Command,
    art: &mut Artifacts,
) -> Result<(), CliError> {
    let (sys, nodes) = equation_system(cfg, command)?;
    let sol = solve(cfg, &sys, StreamKey::root(cfg.seed()))?;
    let oracle = sys.dense_solution()?;
    let max_circ = sol.circulations.iter().copied().max().unwrap_or(0);

    let mut results = Table::new(&with_prefix(&[
        "unknowns",
        "accuracy_percent",
        "inverse_residual",
        "column_solves",
        "max_circulations",
    ]));
    let mut row = prefix(cfg, command.name());
    row.extend([
        sys.dim().to_string(),
        fmt_opt(sol.accuracy),
        fmt_f64(sol.inverse_residual),
        sol.circulations.len().to_string(),
        max_circ.to_string(),
    ]);
    results.push(row);
    art.add("results", results);
    art.add("trace", trace_table(&[]));

    let two_d = command == Command::SolvePde;
    let mut header = vec!["index", "x"];
    if two_d {
        header.push("y");
    }
    header.extend(["value", "oracle"]);
    let mut solution = Table::new(&header);
    for (i, (x, y)) in nodes.iter().enumerate() {
        let mut row = vec![i.to_string(), fmt_f64(*x)];
        if two_d {
            row.push(fmt_opt(*y));
        }
        row.push(fmt_f64(sol.values[i]));
        row.push(fmt_f64(oracle[i]));
        solution.push(row);
    }
    art.add("solution", solution);
    art.line(format!(
        "command: {} ({} unknowns)",
        command.name(),
        sys.dim()
    ));
    art.line(format!("accuracy_percent: {}", fmt_opt(sol.accuracy)));
    art.line(format!(
        "inverse_residual: {}",
        fmt_f64(sol.inverse_residual)
    ));
    art.line(format!("max_circulations: {max_circ}"));
    Ok(())
}

/// One `(value, replicate)` point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub replicate: usize,
    pub outcome: Result<(f64, usize), &'static str>,
}

/// Config for one sweep value.
pub fn sweep_config(
    base: &ExperimentConfig,
    parameter: SweepParameter,
    value: f64,
) -> ExperimentConfig {
    let mut cfg = base.clone();
    match parameter {
        SweepParameter::SigmaAse => cfg.noise.sigma_ase = value,
        SweepParameter::SigmaWeight => cfg.noise.sigma_weight = value,
        SweepParameter::GainMismatchDelta => cfg.noise.gain_mismatch_delta = value,
        SweepParameter::Omega => cfg.loop_params.omega = Some(value),
        SweepParameter::VStep => {
            cfg.hardware = match cfg.hardware {
                Hardware::Exact | Hardware::Default { .. } => Hardware::Default {
                    v_step: Some(value),
                },
                Hardware::Bipolar { v_max, .. } => Hardware::Bipolar {
                    v_max,
                    v_step: value,
                },
                Hardware::File { path, .. } => Hardware::File {
                    path,
                    v_step: Some(value),
                },
            }
        }
    }
    cfg
}

/// Runs every `(value, replicate)` point in parallel; replicate `r` uses
/// stream `root(seed).child(r)` for every value.
pub fn sweep_points(cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>, CliError> {
    let spec = cfg.sweep.as_ref().expect("validated");
    let a = cfg.matrix.as_ref().expect("validated").resolve()?;
    let configs = spec
        .values
        .iter()
        .map(|&v| {
            let c = sweep_config(cfg, spec.parameter, v);
            c.loop_config()?.validate()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let jobs: Vec<(usize, usize)> = (0..spec.values.len())
        .flat_map(|v| (0..spec.seeds).map(move |r| (v, r)))
        .collect();
    let root = StreamKey::root(cfg.seed());
    Ok(jobs
        .into_par_iter()
        .map(|(v, r)| {
            let outcome = match invert(&configs[v], &a, root.child(r as u64)) {
                Ok(out) => match out.accuracy {
                    Some(acc) => Ok((acc, out.max_circulations())),
                    None => Err("singular_matrix"),
                },
                Err(e) => Err(e.category()),
            };
            SweepPoint {
                value: spec.values[v],
                replicate: r,
                outcome,
            }
        })
        .collect())
}

/// Mean accuracy per value over the replicates that completed.
pub fn sweep_means(points: &[SweepPoint]) -> Vec<(f64, Option<f64>, usize, usize)> {
    let mut values: Vec<f64> = Vec::new();
    for p in points {
        if !values.contains(&p.value) {
            values.push(p.value);
        }
    }
    values
        .into_iter()
        .map(|v| {
            let accs: Vec<f64> = points
                .iter()
                .filter(|p| p.value == v)
                .filter_map(|p| p.outcome.ok().map(|(a, _)| a))
                .collect();
            let failed = points
                .iter()
                .filter(|p| p.value == v && p.outcome.is_err())
                .count();
            let mean = (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64);
            (v, mean, accs.len(), failed)
        })
        .collect()
}

pub fn sweep_tables(
    cfg: &ExperimentConfig,
    parameter: SweepParameter,
    points: &[SweepPoint],
) -> (Table, Table) {
    let loop_time = cfg.loop_params.loop_time;
    let mut rows = Table::new(&[
        "seed",
        "config_hash",
        "parameter",
        "value",
        "replicate",
        "status",
        "accuracy_percent",
        "max_circulations",
        "throughput_per_s",
    ]);
    for p in points {
        let mut row = vec![
            cfg.seed().to_string(),
            cfg.hash(),
            parameter.name().to_string(),
            fmt_f64(p.value),
            p.replicate.to_string(),
        ];
        match p.outcome {
            Ok((acc, circ)) => row.extend([
                "ok".to_string(),
                fmt_f64(acc),
                circ.to_string(),
                fmt_f64(throughput_for(circ.max(1), loop_time)),
            ]),
            Err(cat) => row.extend([cat.to_string(), String::new(), String::new(), String::new()]),
        }
        rows.push(row);
    }
    let mut summary = Table::new(&[
        "parameter",
        "value",
        "mean_accuracy_percent",
        "completed",
        "failed",
    ]);
    for (v, mean, ok, failed) in sweep_means(points) {
        summary.push(vec![
            parameter.name().to_string(),
            fmt_f64(v),
            fmt_opt(mean),
            ok.to_string(),
            failed.to_string(),
        ]);
    }
    (rows, summary)
}

fn run_sweep(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<(), CliError> {
    let parameter = cfg.sweep.as_ref().expect("validated").parameter;
    let points = sweep_points(cfg)?;
    let (rows, summary) = sweep_tables(cfg, parameter, &points);
    art.line(format!("command: sweep over {}", parameter.name()));
    for (v, mean, ok, failed) in sweep_means(&points) {
        art.line(format!(
            "{} = {}: mean accuracy {} ({ok} completed, {failed} failed)",
            parameter.name(),
            fmt_f64(v),
            fmt_opt(mean)
        ));
    }
    art.add("results", rows);
    art.add("sweep_summary", summary);
    Ok(())
}

/// Runs a validated config.
pub fn run(cfg: &ExperimentConfig, command: Command) -> Result<Artifacts, CliError> {
    cfg.validate_for(command)?;
    let mut art = Artifacts::default();
    art.line(format!("seed: {}", cfg.seed()));
    art.line(format!("config_hash: {}", cfg.hash()));
    match command {
        Command::Invert => run_invert(cfg, &mut art)?,
        Command::Add | Command::Multiply => run_two_operand(cfg, command, &mut art)?,
        Command::SolveIe | Command::SolveOde | Command::SolvePde => {
            run_solve(cfg, command, &mut art)?
        }
        Command::Sweep => run_sweep(cfg, &mut art)?,
    }
    Ok(art)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(json: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(json).unwrap()
    }

    fn column(t: &Table, name: &str) -> Vec<String> {
        let i = t.column(name).unwrap();
        t.rows.iter().map(|r| r[i].clone()).collect()
    }

    #[test]
    fn invert_identity() {
        let c = cfg(r#"{"matrix": [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]}"#);
        let art = run(&c, Command::Invert).unwrap();
        let results = art.table("results").unwrap();
        assert_eq!(column(results, "circulations"), vec!["1"; 4]);
        assert_eq!(column(results, "accuracy_percent"), vec!["1.00000000e2"; 4]);
    }

    #[test]
    fn invert_a1_ideal() {
        let c = cfg(r#"{"matrix": "A1", "loop": {"tol": 1e-8}}"#);
        let out = invert(
            &c,
            &c.matrix.clone().unwrap().resolve().unwrap(),
            StreamKey::root(0),
        )
        .unwrap();
        assert!(out.accuracy.unwrap() >= 99.99);
        let art = run(&c, Command::Invert).unwrap();
        let trace = art.table("trace").unwrap();
        assert_eq!(
            trace.rows.len(),
            out.circulations.iter().map(|c| c + 1).sum::<usize>()
        );
    }

    #[test]
    fn invert_tiled() {
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|i| {
                (0..6)
                    .map(|j| {
                        if i == j {
                            3.0
                        } else {
                            0.1 * (i + j) as f64 / 10.0
                        }
                    })
                    .collect()
            })
            .collect();
        let mut c = ExperimentConfig {
            matrix: Some(crate::config::MatrixSpec::Rows(rows)),
            ..Default::default()
        };
        c.loop_params.tol = 1e-12;
        let out = invert(
            &c,
            &c.matrix.clone().unwrap().resolve().unwrap(),
            StreamKey::root(0),
        )
        .unwrap();
        assert!(out.accuracy.unwrap() > 99.999);
        assert_eq!(out.inverse.shape(), (6, 6));
    }

    #[test]
    fn add_and_multiply() {
        let c = cfg(r#"{"matrix": "A1", "operand": "A2", "sign": "minus"}"#);
        let art = run(&c, Command::Add).unwrap();
        assert_eq!(
            column(art.table("results").unwrap(), "accuracy_percent")[0],
            "1.00000000e2"
        );
        let c = cfg(r#"{"matrix": [[0.5,0.1],[0.2,0.3]], "operand": [[1,2],[3,4]]}"#);
        let art = run(&c, Command::Multiply).unwrap();
        let acc: f64 = column(art.table("results").unwrap(), "accuracy_percent")[0]
            .parse()
            .unwrap();
        assert!(acc > 99.999999);
    }

    #[test]
    fn pde_zero_source() {
        let c = cfg(
            r#"{"poisson": {"source": {"kind": "constant", "value": 0}, "n": 4}, "loop": {"tol": 1e-10}}"#,
        );
        let art = run(&c, Command::SolvePde).unwrap();
        let values = column(art.table("solution").unwrap(), "value");
        assert_eq!(values.len(), 16);
        assert!(values.iter().all(|v| v.parse::<f64>().unwrap() == 0.0));
    }

    #[test]
    fn omega_sweep_on_identity() {
        let c = cfg(r#"{"matrix": [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]],
                "sweep": {"parameter": "omega", "values": [0.5, 1.0], "seeds": 1}}"#);
        let points = sweep_points(&c).unwrap();
        assert!(points.iter().all(|p| p.outcome.is_ok()));
        assert_eq!(points[1].outcome.unwrap().1, 1);
        assert!(points[0].outcome.unwrap().1 > 1);
    }

    #[test]
    fn sweep_order_is_stable() {
        let c = cfg(
            r#"{"matrix": "A1", "seed": 3, "loop": {"accept_unconverged": true, "max_circulations": 40},
                "sweep": {"parameter": "sigma_ase", "values": [0, 0.01], "seeds": 5}}"#,
        );
        let a = sweep_points(&c).unwrap();
        let b = sweep_points(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.iter().map(|p| p.replicate).collect::<Vec<_>>(),
            [0, 1, 2, 3, 4, 0, 1, 2, 3, 4]
        );
    }
}
