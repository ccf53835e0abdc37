use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use eventsift_core::corpus::{build_augmented_corpus, load_posts, write_manifest, Corpus};
use eventsift_core::knn_graph::build_knn_graph;
use eventsift_core::session::{
    format_summary_table, run_oracle_benchmark, write_records, Arm, BenchmarkEvent, SessionConfig,
};
use eventsift_core::synthetic::{generate, SyntheticConfig};
use eventsift_service::{router, AppState, ServerConfig};

#[derive(Parser)]
#[command(name = "eventsift", version, about = "Interactive event sifting with a Bayesian graph model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the annotation API.
    Serve(ServeArgs),
    /// Run oracle-answered sessions for each arm, event and seed.
    Benchmark(BenchmarkArgs),
    /// Validate a manifest and report its contents.
    IngestCheck(IngestArgs),
    /// Write the k-NN graph of a manifest as an edge list.
    ExportGraph(ExportArgs),
    /// Write a seeded synthetic event manifest and pool.
    GenerateSynthetic(SyntheticArgs),
}

#[derive(Args)]
struct ServeArgs {
    /// TOML server config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    bind: Option<String>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    data_root: Option<PathBuf>,
    #[arg(long)]
    session_dir: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Event manifest; repeat for several events.
    #[arg(long = "manifest", required_unless_present = "synthetic")]
    manifests: Vec<PathBuf>,
    /// Other-event pool manifest.
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Generate this many synthetic events instead of reading manifests.
    #[arg(long, conflicts_with_all = ["manifests", "pool"])]
    synthetic: Option<usize>,
    /// Number of seeds, starting at `--first-seed`.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    /// Arm to run; repeat for several. `ablations` and `models` expand to groups.
    #[arg(long = "arm", default_values_t = ["full".to_string()])]
    arms: Vec<String>,
    /// TOML session config used as the base for every arm.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Small widths and few epochs for a quick run on a laptop.
    #[arg(long, conflicts_with = "config")]
    desk_scale: bool,
    /// JSONL output, one record per arm, event, seed and iteration.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    manifest: PathBuf,
    #[arg(long)]
    pool: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    manifest: PathBuf,
    #[arg(long, default_value_t = 16)]
    k: usize,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SyntheticArgs {
    /// Directory for `event.jsonl` and `pool.jsonl`.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// TOML file overriding generator settings.
    #[arg(long)]
    config: Option<PathBuf>,
}

type CliResult<T> = Result<T, String>;

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn parse_arms(names: &[String]) -> CliResult<Vec<Arm>> {
    let mut arms = Vec::new();
    for name in names {
        match name.as_str() {
            "ablations" => arms.extend(Arm::ABLATIONS),
            "models" => arms.extend(Arm::MODELS),
            other => arms.push(other.parse::<Arm>().map_err(|e| e.to_string())?),
        }
    }
    arms.dedup();
    Ok(arms)
}

fn serve(args: ServeArgs) -> CliResult<()> {
    let mut config = match &args.config {
        Some(p) => ServerConfig::from_toml_file(p).map_err(|e| e.to_string())?,
        None => ServerConfig::default(),
    };
    config
        .apply_env(|k| std::env::var(k).ok())
        .map_err(|e| e.to_string())?;
    if let Some(b) = args.bind {
        config.bind = b;
    }
    if let Some(p) = args.port {
        config.port = p;
    }
    if let Some(d) = args.data_root {
        config.data_root = d;
    }
    if let Some(d) = args.session_dir {
        config.session_dir = Some(d);
    }
    let addr = format!("{}:{}", config.bind, config.port);
    let state = Arc::new(AppState::new(config));
    let loaded = state.load_saved().map_err(|e| e.to_string())?;
    if loaded > 0 {
        eprintln!("restored {loaded} sessions");
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| format!("bind {addr}: {e}"))?;
        eprintln!("listening on {addr}");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| e.to_string())
    })
}

fn benchmark(args: BenchmarkArgs) -> CliResult<()> {
    let base = match (&args.config, args.desk_scale) {
        (Some(p), _) => read_toml::<SessionConfig>(p)?,
        (None, true) => SessionConfig::desk_scale(),
        (None, false) => SessionConfig::default(),
    };
    let arms = parse_arms(&args.arms)?;
    let seeds: Vec<u64> = (args.first_seed..args.first_seed + args.seeds).collect();
    let (events, pool) = match args.synthetic {
        Some(n) => {
            let mut events = Vec::new();
            let mut pool = Vec::new();
            for e in 0..n as u64 {
                let config = SyntheticConfig {
                    event: format!("synthetic-event-{e}"),
                    ..SyntheticConfig::default()
                };
                let data = generate(&config, 10_000 + e);
                events.push(BenchmarkEvent { posts: data.event_posts });
                if e == 0 {
                    pool = data.pool;
                }
            }
            (events, pool)
        }
        None => {
            let events = args
                .manifests
                .iter()
                .map(|m| load_posts(m).map(|posts| BenchmarkEvent { posts }))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| e.to_string())?;
            let pool = match &args.pool {
                Some(p) => load_posts(p).map_err(|e| e.to_string())?,
                None => Vec::new(),
            };
            (events, pool)
        }
    };
    let report = run_oracle_benchmark(&events, &pool, &base, &arms, &seeds).map_err(|e| e.to_string())?;
    if let Some(out) = &args.out {
        let file = File::create(out).map_err(|e| format!("{}: {e}", out.display()))?;
        let mut w = BufWriter::new(file);
        write_records(&report.records, &mut w).map_err(|e| e.to_string())?;
        w.flush().map_err(|e| e.to_string())?;
    }
    print!("{}", format_summary_table(&report.summaries));
    Ok(())
}

fn ingest_check(args: IngestArgs) -> CliResult<()> {
    let posts = load_posts(&args.manifest).map_err(|e| e.to_string())?;
    let corpus = Corpus::new(posts).map_err(|e| e.to_string())?;
    let (image_dim, text_dim) = corpus.dims();
    let train = corpus.event_train_count();
    println!(
        "{}: {} posts ({} train, {} test), event {} ({}), dims {}+{}",
        args.manifest.display(),
        corpus.len(),
        train,
        corpus.len() - train,
        corpus.event_of_interest(),
        corpus.event_type(),
        image_dim,
        text_dim
    );
    if let Some(pool_path) = &args.pool {
        let pool = load_posts(pool_path).map_err(|e| e.to_string())?;
        let augmented = build_augmented_corpus(corpus, &pool, 0).map_err(|e| e.to_string())?;
        println!(
            "{}: {} pool posts, {} sampled for augmentation",
            pool_path.display(),
            pool.len(),
            augmented.added
        );
        if let Some(w) = augmented.warning {
            println!("warning: {w:?}");
        }
    }
    Ok(())
}

fn export_graph(args: ExportArgs) -> CliResult<()> {
    let corpus = eventsift_core::corpus::load_corpus(&args.manifest).map_err(|e| e.to_string())?;
    let graph = build_knn_graph(&corpus, args.k).map_err(|e| e.to_string())?;
    let result = match &args.out {
        Some(path) => {
            let file = File::create(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let mut w = BufWriter::new(file);
            graph.write_edge_list(&corpus, &mut w).and_then(|()| w.flush())
        }
        None => graph.write_edge_list(&corpus, std::io::stdout().lock()),
    };
    result.map_err(|e| e.to_string())?;
    eprintln!("{} nodes, {} edges", graph.node_count(), graph.edge_count());
    Ok(())
}

fn generate_synthetic(args: SyntheticArgs) -> CliResult<()> {
    let config = match &args.config {
        Some(p) => read_toml::<SyntheticConfig>(p)?,
        None => SyntheticConfig::default(),
    };
    let data = generate(&config, args.seed);
    std::fs::create_dir_all(&args.out_dir).map_err(|e| e.to_string())?;
    let event = args.out_dir.join("event.jsonl");
    let pool = args.out_dir.join("pool.jsonl");
    write_manifest(&event, &data.event_posts).map_err(|e| e.to_string())?;
    write_manifest(&pool, &data.pool).map_err(|e| e.to_string())?;
    println!("{}\n{}", event.display(), pool.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve(a) => serve(a),
        Command::Benchmark(a) => benchmark(a),
        Command::IngestCheck(a) => ingest_check(a),
        Command::ExportGraph(a) => export_graph(a),
        Command::GenerateSynthetic(a) => generate_synthetic(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
