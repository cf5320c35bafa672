use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hssps::bench::{
    buffer_cache_experiment, sensitivity_sweep, sweep_csv, to_csv, Bench, BenchError, Condition, StorageConfig,
    SweepGrid, WorkloadSpec, DEFAULT_CACHE_QUERY,
};
use hssps::config::KvConfig;
use hssps::corpus::{corpus_stats, export_records, generate_corpus, CorpusSpec, TenantId};
use hssps::engine::{Engine, EngineConfig, EngineError};
use hssps::pagination::{verify, PageToken};
use hssps::query::parse_query;

/// Simulation harness for query-time search space partitioning.
#[derive(Parser)]
#[command(name = "hssps", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` config file; see README for the key list.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set workload.concurrency=4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Shorthand for both `corpus.seed` and `workload.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a corpus and write it as TSV.
    Gen,
    /// Run the workload under one or all conditions.
    Bench {
        /// unpaginated | index | hssps | all
        #[arg(long, default_value = "all")]
        condition: String,
    },
    /// Cold / warm / after-load runs of one broad query.
    CacheExp {
        /// Query body without the tenant clause.
        #[arg(long, default_value = DEFAULT_CACHE_QUERY)]
        query: String,
    },
    /// Grid over heuristic and termination parameters (`sweep.*` keys).
    Sweep,
    /// Token debugging.
    Token {
        #[command(subcommand)]
        action: TokenAction,
    },
}

#[derive(Subcommand)]
enum TokenAction {
    /// Plan the first page of a query and print the token it returns.
    Mint {
        /// Full query text, e.g. `tenant=t000; service=ec2`.
        query: String,
        #[arg(long, default_value_t = 0)]
        now: u64,
    },
    /// Check a token's signature, tenant and expiry, then print its payload.
    Verify {
        token: String,
        #[arg(long)]
        tenant: String,
        #[arg(long, default_value_t = 0)]
        now: u64,
    },
}

const SECTIONS: &[&str] = &[
    "corpus.",
    "storage.",
    "workload.",
    "engine.",
    "heuristics.",
    "termination.",
    "tenant.",
    "sweep.",
];

struct Settings {
    kv: KvConfig,
    corpus: CorpusSpec,
    storage: StorageConfig,
    workload: WorkloadSpec,
    engine: EngineConfig,
}

impl Settings {
    fn load(common: &Common) -> Result<Self> {
        let mut kv = match &common.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                KvConfig::parse(&text)?
            }
            None => KvConfig::new(),
        };
        for o in &common.overrides {
            kv.set_assignment(o)?;
        }
        if let Some(seed) = common.seed {
            kv.set("corpus.seed", seed);
            kv.set("workload.seed", seed);
        }
        if let Some(k) = kv.keys().find(|k| !SECTIONS.iter().any(|s| k.starts_with(s))) {
            bail!("unknown configuration key `{k}`");
        }
        let corpus = CorpusSpec::from_kv(&kv, "corpus.")?;
        let storage = StorageConfig::default().overlay(&kv, "storage.")?;
        storage.validate()?;
        let workload = WorkloadSpec::default().overlay(&kv, "workload.")?;
        let engine = EngineConfig::from_kv(&kv)?;
        Ok(Self {
            kv,
            corpus,
            storage,
            workload,
            engine,
        })
    }

    /// Every effective setting, written next to the outputs.
    fn effective(&self) -> String {
        let mut kv = self.corpus.to_kv("corpus.");
        self.storage.to_kv("storage.", &mut kv);
        self.workload.to_kv("workload.", &mut kv);
        self.engine.to_kv(&mut kv);
        kv.to_text()
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn conditions(raw: &str) -> Result<Vec<Condition>> {
    if raw == "all" {
        return Ok(Condition::ALL.to_vec());
    }
    raw.split(',')
        .map(|c| c.trim().parse::<Condition>().map_err(anyhow::Error::msg))
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    let s = Settings::load(&cli.common)?;
    let out = &cli.common.out;
    match cli.command {
        Command::Gen => {
            let records = generate_corpus(&s.corpus)?;
            write(out, "corpus.tsv", &export_records(&records))?;
            let mut summary = String::from("tenant,account,active,deleted,max_updated_at,services\n");
            for (account, st) in corpus_stats(&records) {
                let tenant = st.tenant_id.as_ref().map(ToString::to_string).unwrap_or_default();
                summary.push_str(&format!(
                    "{tenant},{account},{},{},{},{}\n",
                    st.active,
                    st.deleted,
                    st.max_updated_at,
                    st.per_service.len()
                ));
            }
            write(out, "accounts.csv", &summary)?;
            println!("{} records", records.len());
        }
        Command::Bench { condition } => {
            let bench = Bench::new(&s.corpus, &s.storage)?;
            let mut reports = Vec::new();
            for c in conditions(&condition)? {
                let workload = WorkloadSpec {
                    condition: c,
                    ..s.workload.clone()
                };
                let report = bench.run(&s.engine, &workload)?;
                println!("{}", report.summary());
                reports.push(report);
            }
            write(out, "metrics.csv", &to_csv(&reports))?;
            let summary: Vec<String> = reports.iter().map(|r| r.summary()).collect();
            write(out, "summary.txt", &(summary.join("\n") + "\n"))?;
            write(out, "effective.conf", &s.effective())?;
        }
        Command::CacheExp { query } => {
            let exp = buffer_cache_experiment(&s.corpus, &s.storage, &query)?;
            let report = exp.report();
            print!("{report}");
            write(out, "cache_experiment.csv", &report)?;
            if !exp.plans_identical() {
                return Err(BenchError::Invariant("plan changed between runs".into()).into());
            }
        }
        Command::Sweep => {
            let bench = Bench::new(&s.corpus, &s.storage)?;
            let grid = SweepGrid::from_kv(&s.kv, "sweep.", &s.engine)?;
            let rows = sensitivity_sweep(&bench, &s.engine, &s.workload, &grid)?;
            println!("{} grid points", rows.len());
            write(out, "sweep.csv", &sweep_csv(&rows))?;
            write(out, "effective.conf", &s.effective())?;
        }
        Command::Token { action } => match action {
            TokenAction::Mint { query, now } => {
                let query = parse_query(&query)?;
                let bench = Bench::new(&s.corpus, &s.storage)?;
                let engine = Engine::new(
                    s.engine.clone(),
                    bench.layout.clone(),
                    bench.snapshot.clone(),
                    s.storage.cost,
                );
                let page = engine.plan_page(&query, None, now)?;
                if let Some(ev) = &page.event {
                    let values: Vec<String> = ev.values.iter().map(ToString::to_string).collect();
                    println!("values: {}", values.join(","));
                }
                println!("rows: {}", page.prepared.rows.len());
                match page.next_token {
                    Some(t) => println!("{}", t.as_str()),
                    None => println!("no next token"),
                }
            }
            TokenAction::Verify { token, tenant, now } => {
                let payload = verify(
                    &PageToken::from_wire(token),
                    &s.engine.token_key,
                    &TenantId::new(tenant),
                    now,
                )?;
                println!("{payload:#?}");
            }
        },
    }
    Ok(())
}

fn is_invariant(err: &anyhow::Error) -> bool {
    matches!(
        err.downcast_ref::<BenchError>(),
        Some(BenchError::Invariant(_) | BenchError::Engine(EngineError::Invariant(_)))
    ) || matches!(err.downcast_ref::<EngineError>(), Some(EngineError::Invariant(_)))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(if is_invariant(&err) { 3 } else { 1 })
        }
    }
}
