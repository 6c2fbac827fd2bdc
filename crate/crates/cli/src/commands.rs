//! Execution of resolved commands.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use graphon::arena::{lq_model, simulate, Policy, SimOptions, StrategyProfile};
use graphon::io;
use graphon::kernel::{cut_norm, opnorm_inf_to_1, CutMode, Kernel, LabelGrid, Matrix};
use graphon::lqflock::{katz_centrality, solve_lq, verify_mckean_vlasov, LqParams, LqSolution};
use graphon::measure::ParticleMeasure;
use graphon::mfgpde::{product_structure_check, solve_fixed_point, ControlTable, GridFlow, PdeProblem};
use graphon::nashgap::{
    empirical_measure_convergence, gap_sweep, generate, CellLaws, ConditionalLaw, LqTerminalLaw,
};
use graphon::netgen::{
    condition_a, cut_distance_to, l1_distance_to, laplacian_matrix, strong_operator_residuals, InteractionMatrix,
};
use graphon::seeds;
use serde::Serialize;
use serde_json::json;

use crate::config::{
    manifest, ArenaSimulate, Command, EmpConvergence, EmpLaw, KernelNorms, LqSolve, LqVerify, MatrixFormat,
    MfgSolve, Netgen, NormMode, Resolved,
};
use crate::error::{CliError, CliResult};

/// Output directory that refuses to overwrite any input of the run.
struct Outputs {
    dir: PathBuf,
    primary: Option<String>,
    inputs: Vec<PathBuf>,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(out: &Path, cmd: &Command, inputs: Vec<PathBuf>) -> CliResult<Self> {
        let names_file = cmd.primary_artifact().is_some() && out.extension().is_some();
        let (dir, primary) = if names_file {
            let name = out.file_name().map(|n| n.to_string_lossy().into_owned());
            (out.parent().map(Path::to_path_buf).unwrap_or_default(), name)
        } else {
            (out.to_path_buf(), None)
        };
        let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
        fs::create_dir_all(&dir).map_err(|e| CliError::input(&dir, e))?;
        Ok(Outputs { dir, primary, inputs, written: Vec::new() })
    }

    fn path(&self, name: &str, primary: bool) -> PathBuf {
        match (&self.primary, primary) {
            (Some(p), true) => self.dir.join(p),
            _ => self.dir.join(name),
        }
    }

    fn guard(&self, path: &Path) -> CliResult<()> {
        let canon = |p: &Path| fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
        if self.inputs.iter().any(|i| canon(i) == canon(path)) {
            return Err(CliError::Usage(format!("refusing to overwrite input file {}", path.display())));
        }
        Ok(())
    }

    fn write_as(&mut self, name: &str, primary: bool, contents: &str) -> CliResult<()> {
        let path = self.path(name, primary);
        self.guard(&path)?;
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::input(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| CliError::input(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        self.write_as(name, false, contents)
    }

    fn json(&mut self, name: &str, primary: bool, value: &impl Serialize) -> CliResult<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(graphon::Error::from)?;
        s.push('\n');
        self.write_as(name, primary, &s)
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::input(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::input(path, e))
}

fn read_matrix(path: &Path, format: MatrixFormat, n: Option<usize>) -> CliResult<Matrix> {
    let text = read_text(path)?;
    let m = match format {
        MatrixFormat::Dense => io::read_dense_matrix(&text),
        MatrixFormat::Edges => io::read_edge_list(&text, n),
    };
    m.map_err(|e| CliError::input(path, e))
}

fn input_paths(cmd: &Command) -> Vec<PathBuf> {
    match cmd {
        Command::KernelNorms(c) => c.matrix.iter().cloned().collect(),
        Command::LqVerify(c) => vec![c.sol.clone()],
        Command::ArenaSimulate(c) => {
            let mut v = vec![c.xi.clone(), c.labels.clone()];
            if let Some(("lq", p)) = c.profile.split_once(':') {
                v.push(PathBuf::from(p));
            }
            v
        }
        Command::EmpConvergence(EmpConvergence { law: EmpLaw::Lq { sol }, .. }) => vec![sol.clone()],
        _ => Vec::new(),
    }
}

/// Runs the command and returns the files written, manifest last.
pub fn execute(run: &Resolved) -> CliResult<Vec<PathBuf>> {
    let cmd = &run.command;
    let mut out = Outputs::new(&run.out, cmd, input_paths(cmd))?;
    match cmd {
        Command::KernelNorms(c) => kernel_norms(c, &mut out)?,
        Command::Netgen(c) => netgen(c, &mut out)?,
        Command::LqSolve(c) => lq_solve(c, &mut out)?,
        Command::LqVerify(c) => lq_verify(c, &mut out)?,
        Command::MfgSolve(c) => mfg_solve(c, &mut out)?,
        Command::ArenaSimulate(c) => arena_simulate(c, &mut out)?,
        Command::NashgapSweep(c) => {
            let reports = gap_sweep(c)?;
            out.write_as("report.csv", true, &io::gap_report_csv(&reports))?;
            out.json("report.json", false, &reports)?;
        }
        Command::EmpConvergence(c) => emp_convergence(c, &mut out)?,
    }
    out.write("manifest.json", &manifest(cmd)?)?;
    Ok(out.written)
}

fn kernel_norms(c: &KernelNorms, out: &mut Outputs) -> CliResult<()> {
    let (xi, source) = match (&c.matrix, &c.kernel) {
        (Some(path), None) => (read_matrix(path, c.format, c.n)?, "matrix".to_owned()),
        (None, Some(k)) => {
            let k = k.kernel();
            (k.discretize(&LabelGrid::new(c.resolution)?), k.name())
        }
        _ => return Err(CliError::Usage("kernel-norms needs exactly one of `matrix` and `kernel`".into())),
    };
    let mode = match c.mode {
        NormMode::Exact => CutMode::Exact,
        NormMode::Heuristic => {
            let seed = c.seed.ok_or_else(|| CliError::MissingSeed("kernel-norms".into()))?;
            CutMode::Heuristic { restarts: c.restarts, seed: seeds::derive(seed, "norms") }
        }
    };
    let n = xi.n() as f64;
    let l1 = xi.as_slice().iter().map(|v| v.abs()).sum::<f64>() / (n * n);
    let l2 = (xi.as_slice().iter().map(|v| v * v).sum::<f64>() / (n * n)).sqrt();
    let mut report = json!({
        "n": xi.n(),
        "source": source,
        "cut_norm": cut_norm(&xi, mode)?,
        "opnorm_inf_to_1": opnorm_inf_to_1(&xi, mode)?,
        "l1": l1,
        "l2": l2,
    });
    if let Some(reference) = &c.reference {
        if c.matrix.is_none() {
            return Err(CliError::Usage("`reference` compares an interaction matrix; give `matrix`".into()));
        }
        let seed = c.seed.ok_or_else(|| CliError::MissingSeed("kernel-norms".into()))?;
        let w = reference.kernel();
        let im = InteractionMatrix::explicit(xi)?;
        report["reference"] = json!({
            "kernel": w.name(),
            "cut_distance": cut_distance_to(&im, w, None, c.restarts, seeds::derive(seed, "reference"))?,
            "l1_distance": l1_distance_to(&im, w, None)?,
            "strong_operator_residuals": strong_operator_residuals(&im, w, None)?,
        });
    }
    out.json("norms.json", false, &report)
}

fn netgen(c: &Netgen, out: &mut Outputs) -> CliResult<()> {
    let fallback = Kernel::constant(1.0)?;
    let kernel = match (&c.generator, &c.kernel) {
        (_, Some(k)) => k.kernel(),
        (graphon::nashgap::Generator::ErdosRenyi { .. }, None) => &fallback,
        _ => return Err(CliError::Usage("this generator needs a `kernel`".into())),
    };
    let (mut xi, labels) = generate(&c.generator, c.labels, kernel, c.n, c.seed)?;
    if c.laplacian {
        xi = laplacian_matrix(xi.matrix())?;
    }
    let mut report = json!({
        "n": xi.n(),
        "provenance": xi.provenance(),
        "condition_a": condition_a(&xi),
    });
    if let Some(reference) = &c.reference {
        let w = reference.kernel();
        report["reference"] = json!({
            "kernel": w.name(),
            "cut_distance": cut_distance_to(&xi, w, c.resolution, c.restarts, seeds::derive(c.seed, "reference"))?,
            "l1_distance": l1_distance_to(&xi, w, c.resolution)?,
        });
    }
    out.write("xi.txt", &io::write_dense_matrix(xi.matrix()))?;
    out.write("labels.csv", &io::write_labels(&labels))?;
    out.json("netgen.json", false, &report)
}

fn lq_solve(c: &LqSolve, out: &mut Outputs) -> CliResult<()> {
    let params = LqParams {
        c: c.c,
        horizon: c.horizon,
        sigma: c.sigma,
        kernel: c.kernel.kernel().clone(),
        initial: c.initial.clone(),
    };
    let sol = solve_lq(&params, c.labels)?;
    out.json("sol.json", true, &sol)?;
    out.write("target.csv", &io::target_csv(&sol))?;
    if sol.margin > 0.0 {
        let katz = katz_centrality(&params.kernel, sol.katz_parameter, c.labels)?;
        out.write("centrality.csv", &io::centrality_csv(&sol.labels, &katz))?;
    }
    Ok(())
}

fn lq_verify(c: &LqVerify, out: &mut Outputs) -> CliResult<()> {
    let sol: LqSolution = read_json(&c.sol)?;
    let report = verify_mckean_vlasov(&sol, c.paths, c.dt, c.seed)?;
    let worst = report.rows.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
    let worst_z = report
        .rows
        .iter()
        .filter(|r| r.stderr > 0.0)
        .map(|r| (r.residual / r.stderr).abs())
        .fold(0.0, f64::max);
    out.write_as("residual.csv", true, &io::residual_csv(&report))?;
    out.json(
        "verify.json",
        false,
        &json!({ "paths": report.paths, "dt": report.dt, "seed": report.seed, "max_abs_residual": worst, "max_abs_z": worst_z }),
    )
}

fn mfg_solve(c: &MfgSolve, out: &mut Outputs) -> CliResult<()> {
    let problem = PdeProblem {
        model: c.model.clone(),
        kernel: c.kernel.kernel().clone(),
        initial: c.initial.clone(),
        actions: c.actions,
        states: c.states,
        time_steps: c.time_steps,
        labels: c.labels,
    };
    let field = solve_fixed_point(&problem, &c.picard)?;
    io::write_equilibrium(&out.dir, &field)?;
    for name in ["value", "control", "flow", "induced"] {
        out.written.push(out.dir.join(format!("{name}.bin")));
        out.written.push(out.dir.join(format!("{name}.json")));
    }
    for name in ["control_t0.csv", "control_tT.csv", "value_t0.csv", "diagnostics.json"] {
        out.written.push(out.dir.join(name));
    }
    if let Some(bins) = c.product_bins {
        out.json("product.json", false, &product_structure_check(&field, bins)?)?;
    }
    Ok(())
}

/// Control tables of an `mfg-solve` directory, one per label cell, and the
/// problem it solved.
fn load_mfg(dir: &Path) -> CliResult<(Vec<Arc<ControlTable>>, PdeProblem)> {
    let (field, side) = io::read_field(dir, "control").map_err(|e| CliError::input(dir, e))?;
    let diag: serde_json::Value = read_json(&dir.join("diagnostics.json"))?;
    let problem: PdeProblem =
        serde_json::from_value(diag["problem"].clone()).map_err(|e| CliError::input(dir.join("diagnostics.json"), e))?;
    let tables = (0..field.labels)
        .map(|l| {
            let values = (0..field.nodes).flat_map(|k| field.slice(k, l).iter().copied()).collect();
            ControlTable::new(side.time, side.states, values).map(Arc::new)
        })
        .collect::<graphon::Result<Vec<_>>>()?;
    Ok((tables, problem))
}

fn arena_simulate(c: &ArenaSimulate, out: &mut Outputs) -> CliResult<()> {
    let xi = InteractionMatrix::explicit(read_matrix(&c.xi, c.xi_format, None)?)?;
    let labels = io::read_labels(&read_text(&c.labels)?).map_err(|e| CliError::input(&c.labels, e))?;
    if labels.len() != xi.n() {
        return Err(CliError::Usage(format!("{} labels for a {}-player matrix", labels.len(), xi.n())));
    }
    let (kind, arg) = c
        .profile
        .split_once(':')
        .ok_or_else(|| CliError::Usage(format!("profile `{}` is not kind:argument", c.profile)))?;
    let (profile, model, initial) = match kind {
        "lq" => {
            let sol: LqSolution = read_json(Path::new(arg))?;
            (StrategyProfile::from_lq(&sol, &labels), Some(lq_model(&sol)), Some(sol.params.initial.clone()))
        }
        "mfg" => {
            let (tables, problem) = load_mfg(Path::new(arg))?;
            let grid = LabelGrid::new(tables.len())?;
            let rules = labels.labels().iter().map(|&u| Policy::Table(tables[grid.cell_of(u)].clone())).collect();
            (StrategyProfile::new(rules)?, Some(problem.model), Some(problem.initial))
        }
        "constant" => {
            let a: f64 = arg.parse().map_err(|_| CliError::Usage(format!("`{arg}` is not a number")))?;
            (StrategyProfile::uniform(xi.n(), Policy::Constant(a)), None, None)
        }
        other => return Err(CliError::Usage(format!("unknown profile kind `{other}`; use lq, mfg or constant"))),
    };
    let model = c.model.clone().or(model).ok_or_else(|| CliError::Usage("this profile needs a `model`".into()))?;
    let initial =
        c.initial.clone().or(initial).ok_or_else(|| CliError::Usage("this profile needs an `initial` law".into()))?;
    let mut opts = SimOptions::new(c.paths, c.dt, c.seed);
    let horizon = graphon::model::GameModel::horizon(&model);
    opts.snapshot_times = if c.snapshot_times.is_empty() { vec![0.0, horizon] } else { c.snapshot_times.clone() };
    let r = simulate(&xi, &labels, &profile, &[], &model, &initial, &opts)?;
    let rows = (0..r.n).map(|i| {
        let (j, m) = (r.objectives[i], r.terminal_means[i]);
        format!("{i},{},{},{},{},{}\n", labels.labels()[i], j.mean, j.stderr, m.mean, m.stderr)
    });
    let csv = std::iter::once("i,label,objective,objective_stderr,terminal_mean,terminal_stderr\n".to_owned())
        .chain(rows)
        .collect::<String>();
    out.write("players.csv", &csv)?;
    let w = 1.0 / r.n as f64;
    for s in &r.snapshots {
        let m = ParticleMeasure::from_atoms(s.states.iter().map(|&x| (x, w)))?;
        out.write(&format!("snapshots/node_{:05}.csv", s.node), &io::write_particles(&m))?;
    }
    let mean_j = r.objectives.iter().map(|e| e.mean).sum::<f64>() * w;
    out.json(
        "summary.json",
        false,
        &json!({
            "n": r.n,
            "paths": r.paths,
            "time": r.time,
            "seed": r.seed,
            "model": model,
            "mean_objective": mean_j,
            "snapshots": r.snapshots.iter().map(|s| json!({"time": s.time, "node": s.node})).collect::<Vec<_>>(),
        }),
    )
}

fn emp_convergence(c: &EmpConvergence, out: &mut Outputs) -> CliResult<()> {
    let law: Box<dyn ConditionalLaw> = match &c.law {
        EmpLaw::Lq { sol } => Box::new(LqTerminalLaw::new(read_json(sol)?)?),
        EmpLaw::Mfg { dir } => {
            let (f, side) = io::read_field(dir, "flow").map_err(|e| CliError::input(dir, e))?;
            let flow = GridFlow { nodes: f.nodes, labels: f.labels, states: f.states, mass: f.data };
            Box::new(CellLaws::from_flow(&flow, side.states))
        }
    };
    let rows = empirical_measure_convergence(c.kernel.kernel(), law.as_ref(), &c.ns, c.trials, c.seed, c.quadrature)?;
    out.write_as("emp.csv", true, &io::emp_csv(&rows))?;
    out.json("emp.json", false, &rows)
}
