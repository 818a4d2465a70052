use std::io::{self, BufRead, BufWriter, Write};
use std::net::{SocketAddr, UdpSocket};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vibesense::dsp::{snr_at_rate, SpectrogramParams};
use vibesense::edgehub::http::{serve, AppState, StatusPusher};
use vibesense::edgehub::udp::UdpIngest;
use vibesense::edgehub::{Hub, HubConfig};
use vibesense::recognize::{EventSetConfig, InputRepr, TsneConfig};
use vibesense::recommend::llm::{ENDPOINT_ENV, MODEL_ENV};
use vibesense::recommend::{parse_site, HttpChatClient, Phase, RecommendService, ScoringRules, ScriptProfile};
use vibesense::scenario::{self, ScenarioFile, ToyTraining, WeeklyConfig};

#[derive(Parser)]
#[command(name = "vibesense", version, about = "Vibration sensing toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario end to end and write its artifacts.
    Simulate {
        /// Scenario TOML file, or the name of a bundled scenario.
        #[arg(long)]
        scenario: String,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Edge hub.
    Hub {
        #[command(subcommand)]
        command: HubCommand,
    },
    /// Offline signal analysis.
    Analyze {
        #[command(subcommand)]
        command: AnalyzeCommand,
    },
    /// Train the activity TCN on synthetic events.
    Train {
        #[arg(long, default_value_t = 21)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, value_enum, default_value_t = Input::Frames)]
        input: Input,
    },
    /// Placement recommendation.
    Recommend {
        #[command(subcommand)]
        command: RecommendCommand,
    },
}

#[derive(Subcommand)]
enum HubCommand {
    /// Receive datagrams over UDP and serve the HTTP API.
    Serve {
        /// Hub settings as TOML.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "0.0.0.0:7453")]
        udp: SocketAddr,
        #[arg(long, default_value = "127.0.0.1:8080")]
        http: SocketAddr,
        /// Segment storage directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Site description enabling the recommendation endpoints.
        #[arg(long)]
        site: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// SNR of a recording against a noise-only recording.
    Snr {
        #[arg(long)]
        signal: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        #[arg(long, default_value_t = 7000.0)]
        rate: f64,
    },
    /// 2-D t-SNE embedding of event features.
    Tsne {
        /// `label,f1,f2,...` CSV. Synthetic events are used when omitted.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Magnitude spectrogram of a recording.
    Spectrogram {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 7000.0)]
        rate: f64,
        #[arg(long, default_value_t = 1024)]
        window: usize,
        #[arg(long, default_value_t = 256)]
        hop: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hourly SNR over a simulated week and its dominant period.
    Weekly {
        /// Scenario file whose `[weekly]` table is used.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum RecommendCommand {
    /// Interactive dialog on stdin/stdout.
    Repl(SiteArgs),
    /// HTTP dialog sessions.
    Serve {
        #[command(flatten)]
        site: SiteArgs,
        #[arg(long, default_value = "127.0.0.1:8081")]
        http: SocketAddr,
    },
}

#[derive(Args)]
struct SiteArgs {
    /// Site description file.
    #[arg(long)]
    site: PathBuf,
    /// Scoring rules TOML. The bundled rules are used when omitted.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Number of sensors to place.
    #[arg(long, default_value_t = 1)]
    sensors: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Input {
    Frames,
    Raw,
}

type Res<T> = Result<T, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(io::stderr).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Res<()> {
    match cli.command {
        Command::Simulate { scenario, seed, out } => simulate(&scenario, seed, &out),
        Command::Hub { command: HubCommand::Serve { config, udp, http, out, site } } => {
            hub_serve(config.as_deref(), udp, http, out, site.as_ref())
        }
        Command::Analyze { command } => analyze(command),
        Command::Train { seed, out, epochs, input } => {
            let mut cfg = ToyTraining::default();
            cfg.train.seed = seed;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Input::Raw = input {
                cfg.input = InputRepr::Raw;
                cfg.model.in_channels = 1;
                cfg.model.input_window = 64;
                cfg.model.n_layers = 4;
            }
            let report = scenario::train_toy(&cfg, &out)?;
            println!(
                "trained {} epochs, accuracy {:.3}; wrote {}",
                report.trace.len(),
                report.final_accuracy(),
                out.join("weights.vtcn").display()
            );
            Ok(())
        }
        Command::Recommend { command: RecommendCommand::Repl(site) } => repl(&site),
        Command::Recommend { command: RecommendCommand::Serve { site, http } } => {
            let service = Arc::new(load_service(&site)?);
            let hub = Arc::new(Hub::new(HubConfig::default()));
            serve_http(http, AppState { hub, recommend: Some(service) })
        }
    }
}

fn load_scenario(name: &str) -> Res<(ScenarioFile, String)> {
    if Path::new(name).exists() {
        return Ok(ScenarioFile::load(Path::new(name))?);
    }
    ScenarioFile::bundled(name).ok_or_else(|| format!("no scenario file or bundled scenario named '{name}'").into())
}

fn simulate(name: &str, seed: Option<u64>, out: &Path) -> Res<()> {
    let (mut s, text) = load_scenario(name)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    let report = scenario::run(&s, &text, out)?;
    for d in &report.devices {
        println!(
            "device {:>5} {:<12} sent {:>6} lost {:>4} recovered {:>4} loss {:.2}% recovered {:.2}% rate std {}",
            d.device_id,
            d.clock,
            d.sent_packets,
            d.lost,
            d.recovered,
            d.loss_pct,
            d.recovered_pct,
            d.measured_rate_std_hz.map_or("n/a".into(), |v| format!("{v:.1} Hz"))
        );
    }
    println!("artifacts in {}", out.display());
    if report.violations.is_empty() {
        Ok(())
    } else {
        for v in &report.violations {
            eprintln!("violation: {v}");
        }
        Err(format!("{} invariant violations", report.violations.len()).into())
    }
}

fn analyze(command: AnalyzeCommand) -> Res<()> {
    match command {
        AnalyzeCommand::Snr { signal, noise, rate } => {
            let s = scenario::read_samples(&signal)?;
            let n = scenario::read_samples(&noise)?;
            println!("snr_db {}", snr_at_rate(&s, &n, rate)?.db());
        }
        AnalyzeCommand::Tsne { features, seed, out } => {
            let (labels, rows) = match features {
                Some(p) => scenario::read_features_csv(&p)?,
                None => scenario::synthetic_features(&EventSetConfig::default(), 64)?,
            };
            let cfg = TsneConfig { rng_seed: seed, ..TsneConfig::default() };
            let r = scenario::analyze_tsne(&labels, &rows, &cfg, &out)?;
            println!("{} points, KL {:.4} -> {:.4}", rows.len(), r.initial_kl, r.final_kl);
        }
        AnalyzeCommand::Spectrogram { input, rate, window, hop, out } => {
            let samples = scenario::read_samples(&input)?;
            let params = SpectrogramParams { window_len: window, hop_len: hop };
            let f = BufWriter::new(std::fs::File::create(&out)?);
            let frac = scenario::analyze_spectrogram(&samples, rate, params, f)?;
            println!("in-band energy fraction {frac:.4}; wrote {}", out.display());
        }
        AnalyzeCommand::Weekly { scenario: name, seed, out } => {
            let mut cfg = match name {
                Some(n) => load_scenario(&n)?.0.weekly,
                None => WeeklyConfig::default(),
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let w = scenario::weekly_snr(&cfg)?;
            std::fs::create_dir_all(&out)?;
            w.write_csv(BufWriter::new(std::fs::File::create(out.join("hourly_snr.csv"))?))?;
            w.write_autocorrelation_csv(BufWriter::new(std::fs::File::create(out.join("autocorrelation.csv"))?))?;
            match w.dominant_period_h {
                Some(p) => println!("dominant period {p} h"),
                None => println!("no dominant period"),
            }
        }
    }
    Ok(())
}

fn load_service(args: &SiteArgs) -> Res<RecommendService> {
    let text = std::fs::read_to_string(&args.site)?;
    let site = parse_site(&text).map_err(|e| format!("{}: {e}", args.site.display()))?;
    let rules = match &args.rules {
        Some(p) => ScoringRules::from_toml(&std::fs::read_to_string(p)?)?,
        None => ScoringRules::default(),
    };
    let mut service = RecommendService::new(site.graph, site.sensor.unwrap_or_default(), rules, ScriptProfile::default());
    service.n_sensors = args.sensors.max(1);
    match HttpChatClient::from_env() {
        Some(client) => {
            let client = client?;
            tracing::info!(model = %std::env::var(MODEL_ENV).unwrap_or_default(), "using chat endpoint");
            Ok(service.with_client(Arc::new(client)))
        }
        None => {
            tracing::info!("{ENDPOINT_ENV} not set, using the rule-based dialog");
            Ok(service)
        }
    }
}

fn repl(args: &SiteArgs) -> Res<()> {
    let service = load_service(args)?;
    let view = service.create_session();
    let mut out = io::stdout().lock();
    if let Some(o) = &view.output {
        writeln!(out, "agent> {}", o.text())?;
    }
    for line in io::stdin().lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let view = service.message(view.id, &line)?;
        if let Some(o) = &view.output {
            writeln!(out, "agent> {}", o.text())?;
        }
        if view.state.phase == Phase::Done {
            break;
        }
    }
    Ok(())
}

fn hub_serve(
    config: Option<&Path>,
    udp: SocketAddr,
    http: SocketAddr,
    out: Option<PathBuf>,
    site: Option<&PathBuf>,
) -> Res<()> {
    let mut cfg: HubConfig = match config {
        Some(p) => toml::from_str(&std::fs::read_to_string(p)?)?,
        None => HubConfig::default(),
    };
    if out.is_some() {
        cfg.storage_dir = out;
    }
    let recommend = match site {
        Some(p) => Some(Arc::new(load_service(&SiteArgs { site: p.clone(), rules: None, sensors: 1 })?)),
        None => None,
    };
    let push = cfg.status_push_url.clone().map(|u| (u, Duration::from_secs(cfg.status_push_period_s.max(1))));
    let hub = Arc::new(Hub::new(cfg));
    let ingest = UdpIngest::spawn(hub.clone(), UdpSocket::bind(udp)?)?;
    tracing::info!(addr = %ingest.local_addr(), "receiving datagrams");
    let pusher = push.map(|(u, p)| StatusPusher::spawn(hub.clone(), u, p)).transpose()?;
    let result = serve_http(http, AppState { hub: hub.clone(), recommend });
    if let Some(p) = pusher {
        p.shutdown();
    }
    let received = ingest.shutdown()?;
    hub.flush();
    let files = hub.persist_open_segments()?;
    tracing::info!(received, segments = files.len(), "hub stopped");
    result
}

fn serve_http(addr: SocketAddr, state: AppState) -> Res<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        tracing::info!(addr = %listener.local_addr()?, "serving http");
        serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })?;
    Ok(())
}
