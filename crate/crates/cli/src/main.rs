use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use sphere_lab::arith::scale_n;
use sphere_lab::density::{self, triple_targets};
use sphere_lab::energy::{additive_energy, paraboloid_energy};
use sphere_lab::gram::{self, GramTarget};
use sphere_lab::incidence::{check_lemma_4d_shell, check_lemma_5d_shell};
use sphere_lab::lattice::cache::{default_cache_dir, load_or_enumerate, save_shell};
use sphere_lab::lattice::enumerate_shell;
use sphere_lab::report::write_atomic;
use sphere_lab::scaling::{even_moment, fit_exponent, grid_level_sets, CoefficientMap, Moment};
use sphere_lab::suites::{run_experiment, ExperimentConfig, Format, LambdaRange, SuiteId};
use sphere_lab::{Budget, LabError, Shell};

#[derive(Parser)]
#[command(name = "sphere-lab", version, about = "Exact experiments on lattice points on spheres")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// Ambient dimension n.
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// A single squared radius λ.
    #[arg(long, global = true, conflicts_with = "lambda_range")]
    lambda: Option<u64>,
    /// Inclusive λ range `A:B`, optionally `A:B:odd` or `A:B:even`.
    #[arg(long, global = true)]
    lambda_range: Option<LambdaRange>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Ceiling on ordered pairs visited by pair loops.
    #[arg(long, global = true)]
    budget_pairs: Option<u128>,
    /// Write the report into this directory instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Csv)]
    format: OutFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate shells and store them in the shell cache.
    Enumerate,
    /// Additive energy of shells.
    Energy,
    /// Incidence inequalities for shells against their sum-hyperplanes.
    Incidence,
    /// Integer Gram-system counts: a single target, or the per-λ sums.
    GramCount {
        /// Integer Gram matrix, rows separated by `;`, e.g. `1,0;0,1`.
        #[arg(long)]
        gram: Option<String>,
        /// List the solutions as well.
        #[arg(long)]
        list: bool,
    },
    /// Truncated local density of a Gram target at one prime.
    Density {
        #[arg(long)]
        gram: String,
        #[arg(long)]
        prime: u64,
        #[arg(long, default_value_t = 2)]
        r_max: u32,
    },
    /// Ratios of integer counts to local-density products over Λ_{a,b}.
    MassCheck {
        /// Bound on |a| and |b|.
        #[arg(long, default_value_t = 5)]
        bound: i64,
        #[arg(long, default_value_t = 100)]
        prime_cutoff: u64,
    },
    /// Σ gcd(λ² − a², λ² − b²) over |a|, |b| ≤ λ.
    GcdSum,
    /// Additive energy of the paraboloid slab for N in a range.
    Paraboloid {
        #[arg(long, default_value_t = 2)]
        n_min: u64,
        #[arg(long, default_value_t = 10)]
        n_max: u64,
    },
    /// Even moments of the unit exponential sum, and grid level sets.
    Moments {
        #[arg(long, default_value_t = 4)]
        order: u32,
        /// Grid points per axis; enables the level-set table (4-d only).
        #[arg(long)]
        grid: Option<usize>,
        /// Level-set thresholds α, comma-separated.
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
    },
    /// Fit log y = s log x + c to two CSV columns.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "N")]
        x: String,
        #[arg(long)]
        y: String,
    },
    /// Run one acceptance suite end to end.
    Suite {
        /// Criterion number or name.
        #[arg(long)]
        name: SuiteId,
        /// Tolerance overrides `key=value`.
        #[arg(long = "tol", value_parser = parse_tol)]
        tolerances: Vec<(String, f64)>,
    },
}

fn parse_tol(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected key=value")?;
    Ok((k.to_string(), v.parse().map_err(|_| format!("bad number {v:?}"))?))
}

/// Exit status 1: a checked assertion did not hold.
#[derive(Debug)]
struct AssertionFailed(String);

impl std::fmt::Display for AssertionFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for AssertionFailed {}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<Value>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<Value>) {
        self.rows.push(row);
    }

    fn render(&self, format: OutFormat) -> String {
        match format {
            OutFormat::Csv => {
                let mut s = self.header.join(",") + "\n";
                for r in &self.rows {
                    let cells: Vec<String> = r
                        .iter()
                        .map(|v| match v {
                            Value::String(s) => s.clone(),
                            other => other.to_string(),
                        })
                        .collect();
                    s += &(cells.join(",") + "\n");
                }
                s
            }
            OutFormat::Json => {
                let objs: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| Value::Object(self.header.iter().cloned().zip(r.iter().cloned()).collect()))
                    .collect();
                serde_json::to_string_pretty(&objs).expect("serializable") + "\n"
            }
        }
    }
}

fn big(x: u128) -> Value {
    // JSON numbers beyond u64 are kept exact as strings.
    u64::try_from(x).map(Value::from).unwrap_or_else(|_| Value::String(x.to_string()))
}

fn emit(shared: &Shared, name: &str, body: String) -> anyhow::Result<()> {
    match &shared.out {
        Some(dir) => {
            let ext = match shared.format {
                OutFormat::Csv => "csv",
                OutFormat::Json => "json",
            };
            let path = dir.join(format!("{name}.{ext}"));
            write_atomic(&path, body.as_bytes())?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn emit_json(shared: &Shared, name: &str, value: &Value) -> anyhow::Result<()> {
    let body = serde_json::to_string_pretty(value)? + "\n";
    match &shared.out {
        Some(dir) => {
            let path = dir.join(format!("{name}.json"));
            write_atomic(&path, body.as_bytes())?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{body}"),
    }
    Ok(())
}

impl Shared {
    fn budget(&self) -> Budget {
        let b = Budget::default();
        match self.budget_pairs {
            Some(p) => b.with_pairs(p),
            None => b,
        }
    }

    fn lambdas(&self) -> anyhow::Result<Vec<u64>> {
        match (self.lambda, self.lambda_range) {
            (Some(l), _) => Ok(vec![l]),
            (None, Some(r)) => Ok(r.values()),
            (None, None) => Err(usage("give --lambda or --lambda-range")),
        }
    }

    fn dim(&self) -> anyhow::Result<usize> {
        self.dim.ok_or_else(|| usage("give --dim"))
    }
}

fn usage(msg: &str) -> anyhow::Error {
    anyhow!(LabError::BadSpec(msg.to_string()))
}

fn parse_gram(s: &str) -> anyhow::Result<Vec<Vec<i64>>> {
    s.split(';')
        .map(|row| {
            row.split(',').map(|x| x.trim().parse::<i64>().map_err(|_| usage(&format!("bad entry {x:?}")))).collect()
        })
        .collect()
}

fn shell_for(shared: &Shared, n: usize, lambda: u64) -> anyhow::Result<Shell> {
    let budget = shared.budget();
    // Use the cache when one is configured; otherwise enumerate in memory.
    if std::env::var_os(sphere_lab::lattice::cache::CACHE_ENV).is_some() {
        Ok(load_or_enumerate(n, lambda, &default_cache_dir(), &budget)?)
    } else {
        Ok(enumerate_shell(n, lambda, &budget)?)
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let shared = &cli.shared;
    let budget = shared.budget();
    match cli.command {
        Command::Enumerate => {
            let n = shared.dim()?;
            let dir = default_cache_dir();
            let mut t = Table::new(&["n", "lambda", "N", "size", "path"]);
            for lambda in shared.lambdas()? {
                let s = enumerate_shell(n, lambda, &budget)?;
                let path = save_shell(&s, &dir)?;
                t.push(vec![
                    json!(n),
                    json!(lambda),
                    json!(scale_n(lambda)),
                    json!(s.len()),
                    json!(path.display().to_string()),
                ]);
            }
            emit(shared, "enumerate", t.render(shared.format))
        }
        Command::Energy => {
            let n = shared.dim()?;
            let mut t = Table::new(&["n", "lambda", "N", "size", "energy"]);
            for lambda in shared.lambdas()? {
                let s = shell_for(shared, n, lambda)?;
                let e = additive_energy(s.points(), &budget)?;
                t.push(vec![json!(n), json!(lambda), json!(scale_n(lambda)), json!(s.len()), big(e.energy)]);
            }
            emit(shared, "energy", t.render(shared.format))
        }
        Command::Incidence => {
            let n = shared.dim()?;
            let mut t = Table::new(&[
                "n",
                "lambda",
                "points",
                "hyperplanes",
                "incidences",
                "gamma_obs",
                "gamma_used",
                "bound",
                "satisfied",
            ]);
            let mut failed = 0;
            for lambda in shared.lambdas()? {
                let s = shell_for(shared, n, lambda)?;
                let r = match n {
                    4 => check_lemma_4d_shell(&s, &budget)?,
                    5 => check_lemma_5d_shell(&s, &budget)?,
                    _ => bail!(LabError::BadDimension { dim: n, min: 4, max: 5 }),
                };
                failed += !r.satisfied as usize;
                t.push(vec![
                    json!(n),
                    json!(lambda),
                    json!(r.num_points),
                    json!(r.num_hyperplanes),
                    big(r.incidences),
                    json!(r.gamma_obs),
                    json!(r.gamma_used),
                    json!(r.bound),
                    json!(r.satisfied),
                ]);
            }
            emit(shared, "incidence", t.render(shared.format))?;
            if failed > 0 {
                bail!(AssertionFailed(format!("{failed} incidence checks unsatisfied")));
            }
            Ok(())
        }
        Command::GramCount { gram: Some(g), list } => {
            let m = shared.dim()?;
            let target = GramTarget::from_gram(m, &parse_gram(&g)?)?;
            let c = gram::count_gram_solutions(&target, list, &budget)?;
            emit_json(shared, "gram-count", &serde_json::to_value(&c)?)
        }
        Command::GramCount { gram: None, .. } => {
            let n = shared.dim()?;
            match n {
                4 => {
                    let mut t = Table::new(&["lambda", "sum_n_ab", "singular_sum"]);
                    for lambda in shared.lambdas()? {
                        t.push(vec![
                            json!(lambda),
                            big(gram::sum_n_ab(lambda, &budget)?),
                            big(gram::singular_case_sum_4d(lambda, &budget)?),
                        ]);
                    }
                    emit(shared, "gram-count", t.render(shared.format))
                }
                5 => {
                    let mut t = Table::new(&["lambda", "total", "singular_total", "rank2", "rank3", "rank4"]);
                    for lambda in shared.lambdas()? {
                        let r = gram::gram_sweep_row(lambda, &budget)?;
                        t.push(vec![
                            json!(lambda),
                            big(r.total),
                            big(r.singular_total),
                            big(r.rank2),
                            big(r.rank3),
                            big(r.rank4),
                        ]);
                    }
                    emit(shared, "gram-count", t.render(shared.format))
                }
                _ => bail!(LabError::BadDimension { dim: n, min: 4, max: 5 }),
            }
        }
        Command::Density { gram, prime, r_max } => {
            let m = shared.dim()?;
            let target = GramTarget::from_gram(m, &parse_gram(&gram)?)?;
            let est = density::local_density(&target, prime, r_max, &budget)?;
            emit_json(shared, "density", &serde_json::to_value(&est)?)
        }
        Command::MassCheck { bound, prime_cutoff } => {
            let lambda = shared.lambda.unwrap_or(5) as i64;
            let targets: Vec<GramTarget> = triple_targets(lambda, bound).into_iter().map(|t| t.2).collect();
            let report = density::mass_consistency(&targets, prime_cutoff, &budget)?;
            match shared.format {
                OutFormat::Csv => {
                    let header = format!(
                        "# {}\n# prime_cutoff={} tail_bound={} median={} max_relative_deviation={}\n",
                        report.assumption,
                        report.prime_cutoff,
                        report.tail_bound,
                        report.median.as_ref().map(|m| m.to_string()).unwrap_or_default(),
                        report.max_relative_deviation_f64.map(|d| d.to_string()).unwrap_or_default(),
                    );
                    emit(shared, "mass-check", header + &report.to_csv())
                }
                OutFormat::Json => emit_json(shared, "mass-check", &serde_json::to_value(&report)?),
            }
        }
        Command::GcdSum => {
            let mut t = Table::new(&["lambda", "gcd_sum"]);
            for lambda in shared.lambdas()? {
                t.push(vec![json!(lambda), big(density::gcd_sum(lambda, &budget)?)]);
            }
            emit(shared, "gcd-sum", t.render(shared.format))
        }
        Command::Paraboloid { n_min, n_max } => {
            if n_min > n_max {
                bail!(usage("--n-min exceeds --n-max"));
            }
            let mut t = Table::new(&["N", "size", "energy"]);
            for big_n in n_min..=n_max {
                let e = paraboloid_energy(big_n, &budget)?;
                t.push(vec![json!(big_n), json!(e.set_size), big(e.energy)]);
            }
            emit(shared, "paraboloid", t.render(shared.format))
        }
        Command::Moments { order, grid, alpha } => {
            let n = shared.dim.unwrap_or(4);
            let mut t = Table::new(&["lambda", "order", "moment"]);
            let mut levels = Vec::new();
            for lambda in shared.lambdas()? {
                let s = shell_for(shared, n, lambda)?;
                let m = match even_moment(s.points(), None, order, &budget)? {
                    Moment::Exact(v) => big(v),
                    Moment::Estimate(v) => json!(v),
                };
                t.push(vec![json!(lambda), json!(order), m]);
                if let Some(m) = grid {
                    let c = CoefficientMap::ones(s.points());
                    levels.push(grid_level_sets(&c, scale_n(lambda), m, &alpha, &budget)?);
                }
            }
            if grid.is_some() {
                emit_json(shared, "moments", &json!({ "moments": t.rows, "level_sets": levels }))
            } else {
                emit(shared, "moments", t.render(shared.format))
            }
        }
        Command::Fit { input, x, y } => {
            let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let mut lines = text.lines().filter(|l| !l.starts_with('#'));
            let header: Vec<&str> = lines.next().ok_or_else(|| usage("empty input"))?.split(',').collect();
            let col = |name: &str| {
                header.iter().position(|h| *h == name).ok_or_else(|| usage(&format!("no column {name:?}")))
            };
            let (xi, yi) = (col(&x)?, col(&y)?);
            let mut rows = Vec::new();
            for line in lines.filter(|l| !l.trim().is_empty()) {
                let cells: Vec<&str> = line.split(',').collect();
                let get = |i: usize| cells.get(i).and_then(|c| c.trim().parse::<f64>().ok());
                match (get(xi), get(yi)) {
                    (Some(a), Some(b)) => rows.push((a, b)),
                    _ => bail!(usage(&format!("unparsable row {line:?}"))),
                }
            }
            let fit = fit_exponent(&rows)?;
            emit_json(shared, "fit", &serde_json::to_value(&fit)?)
        }
        Command::Suite { name, tolerances } => {
            let cfg = ExperimentConfig {
                suite: name,
                dim: shared.dim,
                lambda_range: shared
                    .lambda_range
                    .or(shared.lambda.map(|l| LambdaRange::new(l, l, sphere_lab::suites::Parity::All).expect("l ≤ l"))),
                budget: match shared.budget_pairs {
                    Some(p) => name.default_budget().with_pairs(p),
                    None => name.default_budget(),
                },
                seed: shared.seed,
                out_dir: shared.out.clone(),
                format: match shared.format {
                    OutFormat::Csv => Format::Csv,
                    OutFormat::Json => Format::Json,
                },
                tolerances: tolerances.into_iter().collect(),
            };
            let outcome = run_experiment(&cfg)?;
            let verdict = if outcome.passed { "PASS" } else { "FAIL" };
            println!("criterion {} {}: {verdict}: {}", name.number(), name, outcome.summary);
            if shared.out.is_none() {
                print!("{}", outcome.to_csv());
            }
            if !outcome.passed {
                bail!(AssertionFailed(format!("suite {name} failed")));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<AssertionFailed>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
