use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use oblivious_bab::aggregation::{
    function_cost, level_diagnostics, DistributionJson, LevelDiagnostic, DISTRIBUTION_SCHEMA_VERSION,
};
use oblivious_bab::exact::ExactOptima;
use oblivious_bab::framework::{exact_summary, solve_oblivious, ExactSummary, SolveReport};
use oblivious_bab::gmm::{gmm_tree, StageRecord};
use oblivious_bab::instance::{generate_instance, load_instance, Instance, InstanceMeta, Model};
use oblivious_bab::pipes::{
    gamma_from_f64, indifference, is_gamma_regular, significance, thresholds, working_pipes, AlphaJson,
    AlphaVector, PipeSchedule,
};
use oblivious_bab::rational::{self, display};
use oblivious_bab::regularize::{regularize, RegularizationReport};
use oblivious_bab::subroutines::rob_lower_bounds;
use oblivious_bab::{Error, Result};
use serde::Serialize;

use crate::config::{load_file_config, FileConfig, RunConfig};
use crate::{Command, Format};

const SCHEMA_VERSION: u32 = 1;

fn quote(value: &str) -> String {
    if value.is_empty() || value.contains([' ', '"', '=']) {
        format!("{value:?}")
    } else {
        value.to_string()
    }
}

/// Writes one `key=value` line to stderr.
pub fn log(level: &str, cmd: &str, pairs: &[(&str, String)]) {
    let mut line = format!("level={level} cmd={cmd}");
    for (k, v) in pairs {
        let _ = write!(line, " {k}={}", quote(v));
    }
    eprintln!("{line}");
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: &'a str,
    exit_code: u8,
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    schema_version: u32,
    error: ErrorBody<'a>,
}

/// Prints the machine-readable error document to stdout and a log line to stderr.
pub fn report_error(kind: &str, message: &str, exit_code: u8) {
    let doc = ErrorJson { schema_version: SCHEMA_VERSION, error: ErrorBody { kind, message, exit_code } };
    println!("{}", serde_json::to_string(&doc).expect("error serializes"));
    log("error", "obab", &[("kind", kind.to_string()), ("message", message.to_string())]);
}

fn write_artifact(path: Option<&Path>, text: &str) -> Result<()> {
    let mut text = text.to_string();
    if !text.ends_with('\n') {
        text.push('\n');
    }
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| Error::Io { path: p.display().to_string(), source }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("artifact serializes")
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

fn load_alpha(path: &Path) -> Result<AlphaVector> {
    let parsed: AlphaJson = serde_json::from_str(&read_text(path)?)?;
    parsed.to_alpha()
}

fn resolve(config: Option<&Path>, flags: FileConfig) -> Result<RunConfig> {
    let file = config.map(load_file_config).transpose()?;
    RunConfig::resolve(file.as_ref(), &flags)
}

pub fn dispatch(config: Option<&Path>, command: Command) -> Result<()> {
    match command {
        Command::Gen { model, nodes, demands, seed, out } => {
            let cfg = resolve(config, FileConfig { seed, out, ..FileConfig::default() })?;
            cmd_gen(&cfg, &model, nodes, demands)
        }
        Command::Solve { instance, flags, out, report } => {
            let cfg = resolve(config, flags.file_config(out, report))?;
            cmd_solve(&cfg, &instance)
        }
        Command::Eval { instance, distribution, flags, exact, out } => {
            let cfg = resolve(config, flags.file_config(out, None))?;
            cmd_eval(&cfg, &instance, &distribution, exact)
        }
        Command::Regularize { alpha, gamma, out } => {
            let cfg = resolve(config, FileConfig { gamma, out, ..FileConfig::default() })?;
            cmd_regularize(&cfg, &alpha)
        }
        Command::Gmm { instance, alpha, gamma, seed, regularize, out } => {
            let cfg = resolve(config, FileConfig { gamma, seed, out, ..FileConfig::default() })?;
            cmd_gmm(&cfg, &instance, &alpha, regularize)
        }
        Command::Brute { instance, node_cap, format, out } => {
            let cfg = resolve(config, FileConfig { node_cap, out, ..FileConfig::default() })?;
            cmd_brute(&cfg, &instance, format)
        }
        Command::Bench { family, sizes, seeds, demands, timing, flags, out } => {
            let cfg = resolve(config, flags.file_config(out, None))?;
            cmd_bench(&cfg, &family, &sizes, &seeds, demands, timing)
        }
        Command::Pipes { alpha, gamma, out } => {
            let cfg = resolve(config, FileConfig { gamma, out, ..FileConfig::default() })?;
            cmd_pipes(&cfg, &alpha)
        }
    }
}

fn cmd_gen(cfg: &RunConfig, model: &str, nodes: usize, demands: usize) -> Result<()> {
    let seed = cfg.require_seed()?;
    let model: Model = model.parse()?;
    let inst = generate_instance(model, nodes, demands, seed)?;
    let meta = InstanceMeta {
        schema_version: SCHEMA_VERSION,
        model: model.name().to_string(),
        nodes,
        demand_count: demands,
        seed,
        config_hash: cfg.hash(),
    };
    write_artifact(cfg.out.as_deref(), &inst.to_json_string_with_meta(Some(meta)))?;
    log(
        "info",
        "gen",
        &[("model", model.name().to_string()), ("nodes", nodes.to_string()), ("seed", seed.to_string())],
    );
    Ok(())
}

#[derive(Serialize)]
struct SolveReportJson<'a> {
    schema_version: u32,
    seed: u64,
    config_hash: String,
    config: &'a RunConfig,
    report: &'a SolveReport,
}

fn cmd_solve(cfg: &RunConfig, instance: &Path) -> Result<()> {
    let seed = cfg.require_seed()?;
    let inst = load_instance(instance)?;
    let solution = solve_oblivious(&inst, &cfg.framework(seed))?;
    let mut dist_json =
        DistributionJson::from_distribution(&solution.distribution, &inst, solution.report.levels.clone());
    dist_json.seed = Some(seed);
    dist_json.config_hash = Some(cfg.hash());
    write_artifact(cfg.out.as_deref(), &to_json(&dist_json))?;
    if let Some(path) = &cfg.report {
        let doc = SolveReportJson {
            schema_version: SCHEMA_VERSION,
            seed,
            config_hash: cfg.hash(),
            config: cfg,
            report: &solution.report,
        };
        write_artifact(Some(path), &to_json(&doc))?;
    }
    for event in &solution.report.events {
        log("warn", "solve", &[("event", event.clone())]);
    }
    log(
        "info",
        "solve",
        &[
            ("theta", solution.report.theta_star.to_string()),
            ("beta", solution.report.beta_final.to_string()),
            ("support", solution.report.support_size.to_string()),
            ("pool", solution.report.pool_size.to_string()),
        ],
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalJson {
    schema_version: u32,
    seed: u64,
    config_hash: String,
    /// Ratios against the rent-or-buy bounds.
    levels: Vec<LevelDiagnostic>,
    max_ratio: f64,
    exact: Option<ExactSummary>,
}

fn cmd_eval(cfg: &RunConfig, instance: &Path, distribution: &Path, require_exact: bool) -> Result<()> {
    let seed = cfg.require_seed()?;
    let inst = load_instance(instance)?;
    let parsed: DistributionJson = serde_json::from_str(&read_text(distribution)?)?;
    if parsed.schema_version != DISTRIBUTION_SCHEMA_VERSION {
        return Err(Error::Validation(format!(
            "distribution schema_version {} is not {DISTRIBUTION_SCHEMA_VERSION}",
            parsed.schema_version
        )));
    }
    let dist = parsed.to_distribution(&inst)?;
    if require_exact && inst.node_count() > cfg.node_cap {
        return Err(Error::CapExceeded { nodes: inst.node_count(), cap: cfg.node_cap });
    }
    let tilde: Vec<f64> = rob_lower_bounds(&inst, seed, cfg.rob_trials)?.iter().map(|b| b.value).collect();
    let levels = level_diagnostics(&dist, &inst, &tilde);
    let max_ratio = levels.iter().map(|l| l.ratio).fold(f64::NEG_INFINITY, f64::max);
    let exact = exact_summary(&inst, &dist, cfg.node_cap)?;
    let doc = EvalJson { schema_version: SCHEMA_VERSION, seed, config_hash: cfg.hash(), levels, max_ratio, exact };
    write_artifact(cfg.out.as_deref(), &to_json(&doc))?;
    let mut pairs = vec![("max_ratio", max_ratio.to_string())];
    if let Some(e) = &doc.exact {
        pairs.push(("exact_ratio", e.oblivious_ratio.to_string()));
    }
    log("info", "eval", &pairs);
    Ok(())
}

#[derive(Serialize)]
struct RegularizeJson {
    schema_version: u32,
    config_hash: String,
    gamma: f64,
    input_regular: bool,
    alpha: AlphaJson,
    report: RegularizationReport,
}

fn cmd_regularize(cfg: &RunConfig, alpha_path: &Path) -> Result<()> {
    let gamma = gamma_from_f64(cfg.gamma)?;
    let alpha = load_alpha(alpha_path)?;
    let input_regular = is_gamma_regular(&alpha, &gamma).regular;
    let (out, report) = regularize(&alpha, &gamma)?;
    let doc = RegularizeJson {
        schema_version: SCHEMA_VERSION,
        config_hash: cfg.hash(),
        gamma: cfg.gamma,
        input_regular,
        alpha: AlphaJson::from_alpha(&out),
        report,
    };
    write_artifact(cfg.out.as_deref(), &to_json(&doc))?;
    log(
        "info",
        "regularize",
        &[
            ("levels_in", alpha.k().to_string()),
            ("levels_out", out.k().to_string()),
            ("factor", doc.report.total_f_lower_factor.to_string()),
        ],
    );
    Ok(())
}

#[derive(Serialize)]
struct TreeJson {
    edges: Vec<[String; 2]>,
}

#[derive(Serialize)]
struct GmmJson {
    schema_version: u32,
    seed: u64,
    config_hash: String,
    gamma: f64,
    regularized: bool,
    tree: TreeJson,
    /// Cost of the tree under the input cost function.
    cost: f64,
    stages: Vec<StageRecord>,
    fallback_stage: Option<usize>,
}

fn cmd_gmm(cfg: &RunConfig, instance: &Path, alpha_path: &Path, do_regularize: bool) -> Result<()> {
    let seed = cfg.require_seed()?;
    let gamma = gamma_from_f64(cfg.gamma)?;
    let inst = load_instance(instance)?;
    let alpha = load_alpha(alpha_path)?;
    let regular = if do_regularize { regularize(&alpha, &gamma)?.0 } else { alpha.clone() };
    let outcome = gmm_tree(&inst, &regular, &gamma, seed)?;
    let doc = GmmJson {
        schema_version: SCHEMA_VERSION,
        seed,
        config_hash: cfg.hash(),
        gamma: cfg.gamma,
        regularized: do_regularize,
        tree: TreeJson { edges: outcome.tree.edge_ids(&inst) },
        cost: function_cost(&outcome.tree, &inst, &alpha),
        stages: outcome.stages,
        fallback_stage: outcome.fallback_stage,
    };
    write_artifact(cfg.out.as_deref(), &to_json(&doc))?;
    log("info", "gmm", &[("cost", doc.cost.to_string()), ("stages", doc.stages.len().to_string())]);
    Ok(())
}

#[derive(Serialize)]
struct BruteLevel {
    i: u32,
    value: f64,
    exact: String,
    edges: Vec<[String; 2]>,
}

#[derive(Serialize)]
struct BruteJson {
    schema_version: u32,
    config_hash: String,
    node_cap: usize,
    tree_count: usize,
    levels: Vec<BruteLevel>,
    theta_opt: f64,
}

fn cmd_brute(cfg: &RunConfig, instance: &Path, format: Format) -> Result<()> {
    let inst = load_instance(instance)?;
    let optima = ExactOptima::compute(&inst, cfg.node_cap)?;
    let (theta_opt, _) = oblivious_bab::exact::lp_optimum_from(&inst, &optima)?;
    let levels: Vec<BruteLevel> = optima
        .levels
        .iter()
        .map(|l| BruteLevel { i: l.i, value: l.value, exact: display(&l.exact), edges: l.tree.edge_ids(&inst) })
        .collect();
    let text = match format {
        Format::Json => to_json(&BruteJson {
            schema_version: SCHEMA_VERSION,
            config_hash: cfg.hash(),
            node_cap: cfg.node_cap,
            tree_count: optima.candidate_trees().len(),
            levels,
            theta_opt,
        }),
        Format::Tsv => {
            let mut s = String::from("i\tvalue\texact\tedges\n");
            for l in &levels {
                let edges: Vec<String> = l.edges.iter().map(|[u, v]| format!("{u}-{v}")).collect();
                let _ = writeln!(s, "{}\t{}\t{}\t{}", l.i, l.value, l.exact, edges.join(","));
            }
            let _ = writeln!(s, "theta_opt\t{theta_opt}\t\t");
            s
        }
    };
    write_artifact(cfg.out.as_deref(), &text)?;
    log(
        "info",
        "brute",
        &[("trees", optima.candidate_trees().len().to_string()), ("theta_opt", theta_opt.to_string())],
    );
    Ok(())
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Validation(format!("{what} entry {s:?} is not a number"))))
        .collect()
}

fn cmd_bench(
    cfg: &RunConfig,
    family: &str,
    sizes: &str,
    seeds: &str,
    demands: Option<usize>,
    timing: bool,
) -> Result<()> {
    let model: Model = family.parse()?;
    let sizes: Vec<usize> = parse_list(sizes, "size")?;
    let seeds: Vec<u64> = parse_list(seeds, "seed")?;
    let mut table = String::from("id\ttheta_star\ttheta_opt\tsupport\tstatus");
    if timing {
        table.push_str("\twall_ms");
    }
    table.push('\n');
    for &n in &sizes {
        for &seed in &seeds {
            let id = format!("{}-n{n}-s{seed}", model.name());
            let start = Instant::now();
            let row = bench_row(cfg, model, n, demands.unwrap_or(n.saturating_sub(1)), seed);
            let wall = start.elapsed().as_secs_f64() * 1000.0;
            match row {
                Ok((theta, opt, support)) => {
                    let opt = opt.map_or_else(|| "NA".to_string(), |v| v.to_string());
                    let _ = write!(table, "{id}\t{theta}\t{opt}\t{support}\tok");
                }
                Err(e) => {
                    log("warn", "bench", &[("id", id.clone()), ("error", e.to_string())]);
                    let _ = write!(table, "{id}\tNA\tNA\tNA\terror:{}", e.kind());
                }
            }
            if timing {
                let _ = write!(table, "\t{wall:.1}");
            }
            table.push('\n');
        }
    }
    write_artifact(cfg.out.as_deref(), &table)?;
    log("info", "bench", &[("rows", (sizes.len() * seeds.len()).to_string())]);
    Ok(())
}

fn bench_row(cfg: &RunConfig, model: Model, n: usize, demands: usize, seed: u64) -> Result<(f64, Option<f64>, usize)> {
    let inst: Instance = generate_instance(model, n, demands, seed)?;
    let solution = solve_oblivious(&inst, &cfg.framework(seed))?;
    let opt = solution.report.exact.as_ref().map(|e| e.theta_opt);
    Ok((solution.report.theta_star, opt, solution.distribution.support().len()))
}

fn cmd_pipes(cfg: &RunConfig, alpha_path: &Path) -> Result<()> {
    let gamma = gamma_from_f64(cfg.gamma)?;
    let alpha = load_alpha(alpha_path)?;
    let pipes = working_pipes(&alpha);
    let schedule = PipeSchedule::new(alpha.d(), pipes.clone())?;
    let d = rational::int(alpha.d() as i64);
    let mut table = String::from("k\tsigma\tdelta\tu\tg\tb\n");
    for (k, p) in pipes.iter().enumerate() {
        let u = if k == 0 {
            rational::int(0)
        } else if num_is_zero(&p.delta) {
            d.clone()
        } else {
            &p.sigma / &p.delta
        };
        let (g, b) = match pipes.get(k + 1) {
            Some(next) => (
                display(&indifference(p, next)),
                significance(p, next, &gamma).map_or_else(|| "undefined".to_string(), |b| display(&b)),
            ),
            None => ("-".to_string(), "-".to_string()),
        };
        let _ = writeln!(table, "{k}\t{}\t{}\t{}\t{g}\t{b}", display(&p.sigma), display(&p.delta), display(&u));
    }
    write_artifact(cfg.out.as_deref(), &table)?;
    let regular = is_gamma_regular(&alpha, &gamma).regular && thresholds(&schedule, &gamma).is_ok();
    log("info", "pipes", &[("pipes", pipes.len().to_string()), ("regular", regular.to_string())]);
    Ok(())
}

fn num_is_zero(r: &rational::Rational) -> bool {
    *r == rational::int(0)
}
