use std::collections::BTreeMap;
use std::io::{BufRead, IsTerminal, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use actagent::agent::{Agent, AgentConfig, ApprovalPolicy, Feedback, SessionStatus, VerificationMode};
use actagent::bench::{run_benchmark, BenchOptions, Suite};
use actagent::host::init_fixture;
use actagent::llm::{
    build_provider, builtin_script, Cassette, CassetteProvider, Provider, ProviderConfig, ScriptTable, ScriptedProvider,
};
use actagent::safety::load_rules;
use actagent::service::{serve, ServiceConfig, ServiceState, DEFAULT_PORT};
use actagent::store::{AuditFilter, Store};
use clap::{Parser, Subcommand};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "actagent", version, about = "Run natural-language tasks as guarded action code inside a host app")]
struct Cli {
    /// Snapshots, audit log, sessions and the live host state
    /// [default: actagent-data].
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// TOML file with named providers and agent settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Start the HTTP service.
    Serve {
        /// Listening port [default: 8787].
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Enable POST /execute.
        #[arg(long)]
        allow_raw_exec: bool,
        #[command(flatten)]
        agent: AgentArgs,
        /// Directory served under /ui.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
    /// Run one task to completion.
    Run {
        #[arg(long)]
        task: String,
        /// Work on a fresh copy of this fixture instead of the live host.
        #[arg(long)]
        fixture: Option<String>,
        #[command(flatten)]
        agent: AgentArgs,
        /// Answer approval requests with yes.
        #[arg(long)]
        yes: bool,
        /// Print the session record as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run a task suite and print the results table.
    Bench {
        #[arg(long, default_value = "table2")]
        suite: String,
        #[command(flatten)]
        agent: AgentArgs,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Write the full report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Restore the live host to a snapshot.
    Rollback {
        #[arg(long)]
        snapshot: u64,
    },
    /// Print audit entries as JSON lines.
    Audit {
        #[arg(long)]
        session: Option<String>,
    },
    /// Delete all but the newest snapshots.
    Gc {
        #[arg(long)]
        keep_last: usize,
    },
}

#[derive(clap::Args)]
struct AgentArgs {
    /// A shipped script (scripted, always-na, mixed, listing1, listing2,
    /// listing2-fail), a provider named in --config, or a script table file.
    #[arg(long, default_value = "scripted")]
    provider: String,
    /// Record model responses into this cassette directory.
    #[arg(long, conflicts_with = "replay")]
    record: Option<PathBuf>,
    /// Answer from this cassette directory only.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Iteration cap per session [default: 5].
    #[arg(long)]
    max_iterations: Option<u32>,
    /// Rule file replacing the shipped rules.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Let the user or an oracle judge the outcome instead of a
    /// verification round.
    #[arg(long)]
    no_verify: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    providers: BTreeMap<String, ProviderConfig>,
    max_iterations: Option<u32>,
    rules: Option<PathBuf>,
    llm_safeguard: Option<bool>,
    port: Option<u16>,
    data_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct CliError(String);

fn err(e: impl std::fmt::Display) -> CliError {
    CliError(e.to_string())
}

impl ConfigFile {
    fn load(path: Option<&Path>) -> Result<ConfigFile, CliError> {
        let Some(p) = path else { return Ok(ConfigFile::default()) };
        let text = std::fs::read_to_string(p).map_err(|e| err(format!("{}: {e}", p.display())))?;
        toml::from_str(&text).map_err(|e| err(format!("{}: {e}", p.display())))
    }
}

fn provider(args: &AgentArgs, file: &ConfigFile) -> Result<(Arc<dyn Provider>, String), CliError> {
    if let Some(dir) = &args.replay {
        let model = file.providers.get(&args.provider).map_or("scripted".into(), |c| c.model.clone());
        return Ok((Arc::new(CassetteProvider::replay(Cassette::new(dir))), model));
    }
    let name = if args.provider == "scripted" { "table2" } else { args.provider.as_str() };
    let (inner, model): (Arc<dyn Provider>, String) = if let Some(cfg) = file.providers.get(&args.provider) {
        (build_provider(cfg).map_err(err)?, cfg.model.clone())
    } else if let Some(table) = builtin_script(name) {
        (Arc::new(ScriptedProvider::new(table)), "scripted".into())
    } else if Path::new(&args.provider).is_file() {
        (Arc::new(ScriptedProvider::new(ScriptTable::load(Path::new(&args.provider)).map_err(err)?)), "scripted".into())
    } else {
        return Err(err(format!("unknown provider '{}'", args.provider)));
    };
    match &args.record {
        Some(dir) => Ok((Arc::new(CassetteProvider::record(Cassette::new(dir), inner)), model)),
        None => Ok((inner, model)),
    }
}

fn agent_config(args: &AgentArgs, file: &ConfigFile, model: String) -> Result<AgentConfig, CliError> {
    let mut cfg = AgentConfig { model_name: model, ..Default::default() };
    if let Some(n) = args.max_iterations.or(file.max_iterations) {
        cfg.max_iterations = n.max(1);
    }
    if let Some(p) = args.rules.as_ref().or(file.rules.as_ref()) {
        let text = std::fs::read_to_string(p).map_err(|e| err(format!("{}: {e}", p.display())))?;
        cfg.rules = Arc::new(load_rules(&text).map_err(err)?);
    }
    cfg.llm_safeguard = file.llm_safeguard.unwrap_or(false);
    if args.no_verify {
        cfg.verification = VerificationMode::Skip;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(false)` means the command ran but the task or suite did not pass.
fn dispatch(cli: Cli) -> Result<bool, CliError> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    let data_dir = cli.data_dir.or(file.data_dir.clone()).unwrap_or_else(|| PathBuf::from("actagent-data"));
    match cli.cmd {
        Cmd::Serve { port, host, allow_raw_exec, agent, ui_dir } => {
            let (p, model) = provider(&agent, &file)?;
            let port = port.or(file.port).unwrap_or(DEFAULT_PORT);
            let mut cfg = ServiceConfig {
                port,
                data_dir: Some(data_dir),
                allow_raw_exec,
                agent: agent_config(&agent, &file, model)?,
                ..Default::default()
            };
            if let Some(d) = ui_dir {
                cfg.ui_dir = d;
            }
            let addr: SocketAddr = format!("{host}:{port}").parse().map_err(err)?;
            let state = ServiceState::new(cfg, p).map_err(err)?;
            for id in &state.recovered {
                tracing::warn!("session {id} was interrupted and is now failed");
            }
            let rt = tokio::runtime::Runtime::new().map_err(err)?;
            rt.block_on(async {
                tokio::select! {
                    r = serve(state, addr) => r,
                    _ = tokio::signal::ctrl_c() => Ok(()),
                }
            })
            .map_err(err)?;
            Ok(true)
        }
        Cmd::Run { task, fixture, agent, yes, json } => {
            let (p, model) = provider(&agent, &file)?;
            let mut cfg = agent_config(&agent, &file, model)?;
            cfg.approval = if yes { ApprovalPolicy::AutoGrant } else { ApprovalPolicy::AutoDeny };
            let store = Arc::new(Store::open(&data_dir).map_err(err)?);
            let live = fixture.is_none();
            let mut state = match &fixture {
                Some(f) => init_fixture(f).map_err(err)?,
                None => match store.load_host() {
                    Some(h) => h,
                    None => init_fixture("default").map_err(err)?,
                },
            };
            let a = Agent::new(cfg, p, store.clone());
            let mut s = a.start(&task, fixture.as_deref().unwrap_or("live"), &state).map_err(err)?;
            let mut r = a.run(&mut s, &mut state);
            while r.is_ok() && s.status == SessionStatus::AwaitingUser {
                let (text, accomplished) = ask_user(&s.instruction);
                r = a
                    .incorporate_feedback(&mut s, &mut state, Feedback::User { text, accomplished })
                    .and_then(|_| a.run(&mut s, &mut state));
            }
            if live {
                store.save_host(&state).map_err(err)?;
            }
            if let Err(e) = r {
                eprintln!("model error: {e}");
            }
            if json {
                println!("{}", serde_json::to_string_pretty(&s.to_json()).map_err(err)?);
            } else {
                for it in &s.iterations {
                    println!("iteration {}: {}", it.index, it.status_label());
                    if let Some(f) = it.feedback_text() {
                        println!("  {}", f.lines().next().unwrap_or_default());
                    }
                }
                println!("session {} {}", s.id, s.status);
                if let Some(r) = &s.terminal_reason {
                    println!("  {r}");
                }
                println!("pre-session snapshot {}", s.pre_session_snapshot);
            }
            Ok(s.status == SessionStatus::Succeeded)
        }
        Cmd::Bench { suite, agent, parallel, report } => {
            let suite = Suite::load(&suite).map_err(err)?;
            let (p, model) = provider(&agent, &file)?;
            let opts = BenchOptions {
                agent: agent_config(&agent, &file, model)?,
                provider_name: agent.provider.clone(),
                parallelism: parallel.max(1),
            };
            let rep = run_benchmark(&suite, p, &opts);
            print!("{}", rep.render_table());
            println!("{}/{} passed in {} ms", rep.passed, rep.total, rep.duration_ms);
            if let Some(path) = report {
                std::fs::write(&path, rep.to_json()).map_err(|e| err(format!("{}: {e}", path.display())))?;
            }
            Ok(rep.all_passed())
        }
        Cmd::Rollback { snapshot } => {
            let store = Store::open(&data_dir).map_err(err)?;
            let current = match store.load_host() {
                Some(h) => h,
                None => init_fixture("default").map_err(err)?,
            };
            let restored = store.rollback(snapshot, &current).map_err(err)?;
            store.save_host(&restored).map_err(err)?;
            println!("restored snapshot {snapshot}; state hash {}", restored.hash());
            Ok(true)
        }
        Cmd::Audit { session } => {
            let store = Store::open(&data_dir).map_err(err)?;
            let f = AuditFilter { session_id: session, ..Default::default() };
            for e in store.query_audit(&f) {
                println!("{}", serde_json::to_string(&e).map_err(err)?);
            }
            Ok(true)
        }
        Cmd::Gc { keep_last } => {
            let store = Store::open(&data_dir).map_err(err)?;
            let n = store.gc(keep_last).map_err(err)?;
            println!("removed {n} snapshots");
            Ok(true)
        }
    }
}

/// Asks on the terminal whether the task is done. Without a terminal the
/// answer is no, so the agent keeps trying until its iteration limit.
fn ask_user(instruction: &str) -> (String, bool) {
    if !std::io::stdin().is_terminal() {
        return (String::new(), false);
    }
    eprint!("Verification failed for \"{instruction}\". Was the task accomplished? [y/N] ");
    let _ = std::io::stderr().flush();
    let mut line = String::new();
    let _ = std::io::stdin().lock().read_line(&mut line);
    if line.trim().eq_ignore_ascii_case("y") {
        return (String::new(), true);
    }
    eprint!("What is wrong? ");
    let _ = std::io::stderr().flush();
    let mut text = String::new();
    let _ = std::io::stdin().lock().read_line(&mut text);
    (text.trim().to_string(), false)
}
