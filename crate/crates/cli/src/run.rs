//! Executes a resolved run and writes its artifacts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ldpclab::channel::{sinh_moment, MomentMethod};
use ldpclab::cluster::{ExpansionOptions, GammaRule};
use ldpclab::experiments::{
    boundary_checks, cluster_check, correlation_decay, de_curve, derivative_sweep, duality_sweep, gexit_fd_check,
    write_csv, write_json, BoundaryReport, CsvRows, FdCheck, GexitReport, GexitRow, MapGexitOptions, PairPolicy,
    RunManifest,
};
use ldpclab::{builtin, io, CodeEnsembleSpec, EnumOptions, Estimate, NoiseSpec, TannerGraph};
use serde::Serialize;

use crate::config::{
    BoundaryParams, ClusterCheckParams, DecayParams, GexitCompareParams, GexitFdParams, Invocation, MethodChoice,
    RuleChoice, RunConfig, SinhMomentParams, Task, VerifyParams,
};
use crate::error::{CliError, CliResult};

/// What a run produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Human-readable results, one per line.
    pub summary: Vec<String>,
    /// Failed acceptance checks.
    pub failures: Vec<String>,
    /// Instances skipped because they exceeded the enumeration budget.
    pub capacity_skips: u64,
}

#[derive(Serialize)]
struct ReportFile<'a, R: Serialize> {
    manifest: &'a RunManifest,
    report: &'a R,
}

struct Writer<'a> {
    dir: &'a Path,
    manifest: &'a RunManifest,
    outcome: &'a mut Outcome,
}

impl Writer<'_> {
    fn csv<R: CsvRows>(&mut self, name: &str, report: &R) -> CliResult<()> {
        let p = self.dir.join(format!("{name}.csv"));
        write_csv(&p, report)?;
        self.outcome.files.push(p);
        Ok(())
    }

    fn json<R: Serialize>(&mut self, name: &str, report: &R) -> CliResult<()> {
        let p = self.dir.join(format!("{name}.json"));
        write_json(
            &p,
            &ReportFile {
                manifest: &self.manifest.timeless(),
                report,
            },
        )?;
        self.outcome.files.push(p);
        Ok(())
    }

    fn say(&mut self, line: String) {
        self.outcome.summary.push(line);
    }

    fn check(&mut self, ok: bool, what: String) {
        if !ok {
            self.outcome.failures.push(what);
        }
    }
}

/// Runs `inv` on a pool of `inv.run.workers` threads and writes the CSV,
/// the report JSON and `manifest.json` into `inv.out`.
pub fn execute(inv: &Invocation) -> CliResult<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(inv.run.workers)
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?;
    fs::create_dir_all(&inv.out)
        .map_err(|e| CliError::Other(format!("cannot create {}: {e}", inv.out.display())))?;
    pool.install(|| {
        let start = Instant::now();
        let mut manifest = RunManifest::new(inv.run.task.name(), inv.run.seed, &inv.run)?
            .with_version(env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
        let mut outcome = Outcome::default();
        let mut w = Writer {
            dir: &inv.out,
            manifest: &manifest,
            outcome: &mut outcome,
        };
        dispatch(&inv.run, &mut w)?;
        manifest.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
        let p = inv.out.join("manifest.json");
        write_json(&p, &manifest)?;
        outcome.files.push(p);
        Ok(outcome)
    })
}

fn dispatch(run: &RunConfig, w: &mut Writer) -> CliResult<()> {
    let enumeration = EnumOptions {
        budget_log2: run.budget_log2,
    };
    let seed = run.seed;
    match &run.task {
        Task::VerifyDuality(p) => verify_duality(p, seed, &enumeration, w),
        Task::VerifyDerivatives(p) => verify_derivatives(p, seed, &enumeration, w),
        Task::Decay(p) => decay(p, seed, &enumeration, w),
        Task::GexitCompare(p) => gexit_compare(p, seed, &enumeration, run.skip_infeasible, w),
        Task::GexitFd(p) => gexit_fd(p, seed, &enumeration, w),
        Task::DeCurve(p) => {
            let spec = load_ensemble(&p.ensemble)?;
            let r = de_curve(&spec, &p.ensemble, &p.eps2, p.depth, p.population, seed)?;
            for row in &r.rows {
                let (v, e) = (row.de_gexit.unwrap_or(f64::NAN), row.de_err.unwrap_or(f64::NAN));
                w.say(format!("eps2 {}: DE GEXIT {v:.6e} +- {e:.1e}", row.eps2));
                w.check(v <= 3.0 * e, format!("eps2 {}: DE GEXIT {v:e} is positive", row.eps2));
            }
            w.csv("de-curve", &r)?;
            w.json("de-curve", &r)
        }
        Task::BoundaryCheck(p) => boundary(p, seed, &enumeration, run.skip_infeasible, w),
        Task::ClusterCheck(p) => cluster(p, seed, w),
        Task::SinhMoment(p) => sinh(p, seed, w),
    }
}

/// `builtin:<name>`, `file:<path>` or a bare path.
pub fn load_code(src: &str) -> CliResult<TannerGraph> {
    if src.is_empty() {
        return Err(CliError::config("a code is required (`--code builtin:<name>` or a file path)"));
    }
    if let Some(name) = src.strip_prefix("builtin:") {
        return Ok(builtin::by_name(name)?);
    }
    let path = Path::new(src.strip_prefix("file:").unwrap_or(src));
    if !path.exists() {
        return Err(CliError::config(format!(
            "code file {} does not exist (builtins: {})",
            path.display(),
            builtin::NAMES.join(", ")
        )));
    }
    Ok(io::read_code(path)?)
}

/// `poisson:<mean>[,<dc>]`, `regular:<dv>,<dc>` or an ensemble file.
pub fn load_ensemble(src: &str) -> CliResult<CodeEnsembleSpec> {
    if src.is_empty() {
        return Err(CliError::config("an ensemble is required (`--ensemble poisson:2` or a file path)"));
    }
    if src.starts_with("poisson:") || src.starts_with("regular:") {
        return Ok(io::parse_ensemble_shorthand(src)?);
    }
    let path = Path::new(src.strip_prefix("file:").unwrap_or(src));
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read ensemble {}: {e}", path.display())))?;
    Ok(io::parse_ensemble(&text)?)
}

fn parse_pair_list(s: &str) -> CliResult<Vec<(usize, usize)>> {
    s.split(',')
        .map(|t| {
            let (a, b) = t
                .trim()
                .split_once('-')
                .ok_or_else(|| CliError::config(format!("bad pair `{t}`, expected `i-j`")))?;
            let num = |x: &str| {
                x.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::config(format!("bad bit index in pair `{t}`")))
            };
            Ok((num(a)?, num(b)?))
        })
        .collect()
}

/// `all`, `from:<bit>` or an explicit list.
pub fn parse_pairs(s: &str) -> CliResult<PairPolicy> {
    match s.trim() {
        "all" => Ok(PairPolicy::All),
        t => match t.strip_prefix("from:") {
            Some(b) => b
                .trim()
                .parse()
                .map(PairPolicy::FromBit)
                .map_err(|_| CliError::config(format!("bad bit in `{t}`"))),
            None => parse_pair_list(t).map(PairPolicy::Explicit),
        },
    }
}

fn verify_duality(p: &VerifyParams, seed: u64, opts: &EnumOptions, w: &mut Writer) -> CliResult<()> {
    let code = p.code.as_deref().map(load_code).transpose()?;
    let r = duality_sweep(code.as_ref(), p.trials, p.max_n, &p.eps2, seed, opts)?;
    w.say(format!(
        "max relative residual {:.3e} over {} evaluations",
        r.max_relative_residual,
        r.rows.len()
    ));
    w.check(
        r.max_relative_residual < p.tolerance,
        format!("max relative residual {:e} >= {:e}", r.max_relative_residual, p.tolerance),
    );
    w.csv("verify-duality", &r)?;
    w.json("verify-duality", &r)
}

fn verify_derivatives(p: &VerifyParams, seed: u64, opts: &EnumOptions, w: &mut Writer) -> CliResult<()> {
    let code = p.code.as_deref().map(load_code).transpose()?;
    let r = derivative_sweep(code.as_ref(), p.trials, p.max_n, &p.eps2, seed, opts)?;
    w.say(format!("max residual {:.3e} over {} instances", r.max_residual, r.rows.len()));
    w.check(
        r.max_residual < p.tolerance,
        format!("max residual {:e} >= {:e}", r.max_residual, p.tolerance),
    );
    w.csv("verify-derivatives", &r)?;
    w.json("verify-derivatives", &r)
}

fn decay(p: &DecayParams, seed: u64, opts: &EnumOptions, w: &mut Writer) -> CliResult<()> {
    let g = load_code(&p.code)?;
    let policy = parse_pairs(&p.pairs)?;
    if p.eps2.is_empty() {
        return Err(CliError::config("[decay]: eps2 is empty"));
    }
    let mut reports = Vec::with_capacity(p.eps2.len());
    for &e2 in &p.eps2 {
        let noise = NoiseSpec::from_variance(g.n(), e2)?.with_perfect(&p.perfect);
        let r = correlation_decay(&g, &p.code, &noise, &policy, p.samples, seed, opts)?;
        match &r.fit {
            Some(f) => {
                w.say(format!(
                    "eps2 {e2}: slope {:.4} (95% CI {:.4} .. {:.4}) over {} distances",
                    f.line.slope, f.slope_ci.0, f.slope_ci.1, f.line.points
                ));
                w.check(f.slope_ci.1 < 0.0, format!("eps2 {e2}: slope interval reaches {:.4}", f.slope_ci.1));
            }
            None => {
                let note = r.fit_note.clone().unwrap_or_default();
                w.say(format!("eps2 {e2}: no slope fit ({note})"));
                w.check(r.fully_decayed, format!("eps2 {e2}: no slope fit"));
            }
        }
        let name = if p.eps2.len() == 1 {
            "decay".to_string()
        } else {
            format!("decay-eps2-{e2}")
        };
        w.csv(&name, &r)?;
        reports.push(r);
    }
    w.json("decay", &reports)
}

fn gexit_compare(
    p: &GexitCompareParams,
    seed: u64,
    opts: &EnumOptions,
    skip_infeasible: bool,
    w: &mut Writer,
) -> CliResult<()> {
    let spec = load_ensemble(&p.ensemble)?;
    let map = MapGexitOptions {
        graphs: p.graphs,
        noise_samples: p.noise_samples,
        fd_step: p.fd.then_some(p.fd_step),
        enumeration: *opts,
    };
    let r = GexitReport::compare(&spec, &p.ensemble, p.n, &p.eps2, &map, p.depth, p.population, seed)?;
    for row in &r.rows {
        let d = row.map_minus_de().expect("both sides computed");
        w.say(format!(
            "eps2 {}: MAP {:.6e} +- {:.1e}, DE {:.6e} +- {:.1e}, z = {:.2}",
            row.eps2,
            row.map_gexit.unwrap_or(f64::NAN),
            row.map_err.unwrap_or(f64::NAN),
            row.de_gexit.unwrap_or(f64::NAN),
            row.de_err.unwrap_or(f64::NAN),
            d.z_score()
        ));
        w.check(d.z_score().abs() <= 3.0, format!("eps2 {}: MAP and DE differ by {:.2} sigma", row.eps2, d.z_score()));
    }
    if r.graphs_skipped > 0 {
        w.say(format!("{} sampled graphs exceeded the enumeration budget", r.graphs_skipped));
        if !skip_infeasible {
            w.outcome.capacity_skips += r.graphs_skipped;
        }
    }
    w.csv("gexit-compare", &r)?;
    w.json("gexit-compare", &r)
}

#[derive(Serialize)]
struct FdReport {
    grid: GexitReport,
    checks: Vec<FdCheck>,
}

fn gexit_fd(p: &GexitFdParams, seed: u64, opts: &EnumOptions, w: &mut Writer) -> CliResult<()> {
    let g = load_code(&p.code)?;
    let mut rows = Vec::with_capacity(p.eps2.len());
    let mut checks = Vec::with_capacity(p.eps2.len());
    for &e2 in &p.eps2 {
        let c = gexit_fd_check(&g, e2.sqrt(), p.step, p.samples, seed, opts)?;
        let z = c.difference.z_score();
        w.say(format!(
            "eps2 {e2}: finite difference {:.6e} +- {:.1e}, formula {:.6e} +- {:.1e}, paired z = {z:.2}",
            c.fd.value, c.fd.stderr, c.formula.value, c.formula.stderr
        ));
        w.check(z.abs() <= 3.0, format!("eps2 {e2}: finite difference off by {z:.2} sigma"));
        rows.push(GexitRow {
            eps2: e2,
            map_gexit: Some(c.formula.value),
            map_err: Some(c.formula.stderr),
            de_gexit: None,
            de_err: None,
            fd_value: Some(c.fd.value),
            fd_err: Some(c.fd.stderr),
        });
        checks.push(c);
    }
    let grid = GexitReport {
        ensemble: None,
        code: Some(p.code.clone()),
        n: Some(g.n()),
        depth: None,
        population: None,
        seed,
        rows,
        graphs_skipped: 0,
    };
    w.csv("gexit-fd", &grid)?;
    w.json("gexit-fd", &FdReport { grid, checks })
}

/// Non-increasing gaps within three combined standard errors across the
/// evaluated depths, and exactly zero gaps once the graph is covered.
pub fn boundary_failures(r: &BoundaryReport) -> Vec<String> {
    let mut out = Vec::new();
    let rows: Vec<_> = r.rows.iter().filter(|x| !x.infeasible).collect();
    type Pick = fn(&ldpclab::experiments::BoundaryRow) -> Option<Estimate>;
    let sides: [(&str, Pick); 2] = [("cut", |x| x.full_minus_plus), ("boundary", |x| x.free_minus_plus)];
    for (label, pick) in sides {
        for pair in rows.windows(2) {
            let (a, b) = (pick(pair[0]).expect("feasible"), pick(pair[1]).expect("feasible"));
            let slack = 3.0 * a.stderr.hypot(b.stderr);
            if b.value.abs() > a.value.abs() + slack {
                out.push(format!(
                    "{label} gap grows from depth {} ({:e}) to depth {} ({:e})",
                    pair[0].depth,
                    a.value.abs(),
                    pair[1].depth,
                    b.value.abs()
                ));
            }
        }
        for x in rows.iter().filter(|x| x.covers_graph) {
            let v = pick(x).expect("feasible").value;
            if v != 0.0 {
                out.push(format!("{label} gap {v:e} is not zero at covering depth {}", x.depth));
            }
        }
    }
    out
}

fn boundary(p: &BoundaryParams, seed: u64, opts: &EnumOptions, skip_infeasible: bool, w: &mut Writer) -> CliResult<()> {
    let g = load_code(&p.code)?;
    let noise = NoiseSpec::from_variance(g.n(), p.eps2)?.with_perfect(&p.perfect);
    let r = boundary_checks(&g, &p.code, p.root, &p.depths, &noise, p.samples, seed, skip_infeasible, opts)?;
    for row in &r.rows {
        if row.infeasible {
            w.say(format!("depth {}: skipped, neighborhood exceeds the enumeration budget", row.depth));
            continue;
        }
        let (a, b) = (row.full_minus_plus.expect("feasible"), row.free_minus_plus.expect("feasible"));
        w.say(format!(
            "depth {}: cut gap {:.3e} +- {:.1e}, boundary gap {:.3e} +- {:.1e}{}",
            row.depth,
            a.value.abs(),
            a.stderr,
            b.value.abs(),
            b.stderr,
            if row.covers_graph { " (covers the graph)" } else { "" }
        ));
    }
    for f in boundary_failures(&r) {
        w.check(false, f);
    }
    w.csv("boundary-check", &r)?;
    w.json("boundary-check", &r)
}

fn cluster(p: &ClusterCheckParams, seed: u64, w: &mut Writer) -> CliResult<()> {
    let g = load_code(&p.code)?;
    let pairs = match parse_pairs(&p.pairs)? {
        PairPolicy::All => (0..g.n())
            .flat_map(|i| (i + 1..g.n()).map(move |j| (i, j)))
            .filter(|&(i, j)| g.distance(i, j).finite().is_some())
            .collect(),
        PairPolicy::FromBit(b) => (0..g.n()).filter(|&j| j != b).map(|j| (b, j)).collect(),
        PairPolicy::Explicit(v) => v,
    };
    let opts = ExpansionOptions {
        rule: GammaRule::Literal,
        endpoints_in_gamma: p.endpoints_in_gamma,
        max_connected_sets: p.max_connected_sets,
    };
    let r = cluster_check(
        &g,
        &p.code,
        &pairs,
        p.eps2.sqrt(),
        p.draws,
        p.tolerance,
        p.s,
        p.diagnostic_samples,
        seed,
        &opts,
    )?;
    w.say(r.verdict.clone());
    for pc in &r.pairs {
        w.say(format!(
            "pair ({}, {}): literal residual {:.3e}, linked residual {:.3e}, {} clusters{}",
            pc.i,
            pc.j,
            pc.literal_max_residual,
            pc.linked_max_residual,
            pc.clusters.len(),
            if pc.truncated { " (truncated)" } else { "" }
        ));
    }
    let holds = match p.rule {
        RuleChoice::Literal => r.literal_holds,
        RuleChoice::Linked => r.linked_holds,
    };
    w.check(holds, format!("identity fails under the {:?} rule", p.rule).to_lowercase());
    w.check(r.t2_within_bound, "T2^2 exceeds 1 by more than three standard errors".into());
    w.csv("cluster-check", &r)?;
    w.json("cluster-check", &r)
}

#[derive(Debug, Serialize)]
struct SinhRow {
    eps2: f64,
    s: f64,
    method: MethodChoice,
    value: f64,
    stderr: f64,
}

#[derive(Serialize)]
struct SinhReport {
    rows: Vec<SinhRow>,
}

impl CsvRows for SinhReport {
    fn write_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> ldpclab::Result<()> {
        for r in &self.rows {
            w.serialize(r)?;
        }
        Ok(())
    }
}

fn sinh(p: &SinhMomentParams, seed: u64, w: &mut Writer) -> CliResult<()> {
    let method = match p.method {
        MethodChoice::Quadrature => MomentMethod::Quadrature,
        MethodChoice::Mc => MomentMethod::MonteCarlo {
            samples: p.samples,
            seed,
        },
    };
    let mut rows = Vec::with_capacity(p.eps2.len());
    for &e2 in &p.eps2 {
        let m = sinh_moment(e2.sqrt(), p.s, method)?;
        w.say(format!("eps2 {e2}: E|sinh 2l|^(-2s) = {:.8e} +- {:.1e}", m.value, m.stderr));
        w.check(m.value.is_finite(), format!("eps2 {e2}: moment is not finite"));
        rows.push(SinhRow {
            eps2: e2,
            s: p.s,
            method: p.method,
            value: m.value,
            stderr: m.stderr,
        });
    }
    let r = SinhReport { rows };
    w.csv("sinh-moment", &r)?;
    w.json("sinh-moment", &r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_specs() {
        assert_eq!(parse_pairs("all").unwrap(), PairPolicy::All);
        assert_eq!(parse_pairs("from:4").unwrap(), PairPolicy::FromBit(4));
        assert_eq!(parse_pairs("0-2, 1-3").unwrap(), PairPolicy::Explicit(vec![(0, 2), (1, 3)]));
        assert!(parse_pairs("0:2").is_err());
        assert!(parse_pairs("from:x").is_err());
    }

    #[test]
    fn code_sources() {
        assert_eq!(load_code("builtin:spc3").unwrap().n(), 3);
        assert_eq!(load_code("builtin:nope").unwrap_err().exit_code(), 2);
        assert_eq!(load_code("/no/such/file.alist").unwrap_err().exit_code(), 2);
        assert!(load_ensemble("poisson:2").is_ok());
        assert_eq!(load_ensemble("").unwrap_err().exit_code(), 2);
    }
}
