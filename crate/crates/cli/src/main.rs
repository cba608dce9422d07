use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::routing::get;
use clap::{Parser, Subcommand};
use tokio::sync::broadcast;

use langmotion::chart::Chart;
use langmotion::grammar::{tokenize, Dictionary};
use langmotion::orchestrator::metrics::{read_run_dir, write_run_dir};
use langmotion::orchestrator::scenario::{builtin, builtin_names};
use langmotion::orchestrator::service::{interactive_scenario, ServerFrame, Session, DEFAULT_OFFLINE_LATENCY};
use langmotion::orchestrator::{compute_metrics, run, Mode, Scenario};
use langmotion::world::load_world;

#[derive(Parser)]
#[command(name = "langmotion", version, about = "Incremental language-to-motion pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or a shipped scenario name) in simulated time.
    Run {
        scenario: String,
        #[arg(long)]
        mode: Option<Mode>,
        /// Planning latency of the offline baseline, s.
        #[arg(long)]
        offline_latency: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory; defaults to runs/<name>-<mode>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the live session over WebSocket at /ws.
    Serve {
        #[arg(long, default_value_t = 8765)]
        port: u16,
        /// World file; defaults to the first shipped scenario.
        #[arg(long)]
        world: Option<PathBuf>,
    },
    /// Print the parse chart of an utterance, or read words from stdin.
    Parse {
        #[arg(long)]
        interactive: bool,
        words: Vec<String>,
    },
    /// Recompute and print the metrics of a run directory.
    Metrics { run_dir: PathBuf },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            scenario,
            mode,
            offline_latency,
            seed,
            out,
        } => run_cmd(&scenario, mode, offline_latency, seed, out),
        Command::Serve { port, world } => serve_cmd(port, world),
        Command::Parse { interactive, words } => parse_cmd(interactive, &words),
        Command::Metrics { run_dir } => {
            let log = read_run_dir(&run_dir).with_context(|| format!("reading {}", run_dir.display()))?;
            println!("{}", serde_json::to_string_pretty(&compute_metrics(&log))?);
            Ok(())
        }
    }
}

fn load_scenario(arg: &str) -> Result<Scenario> {
    let path = Path::new(arg);
    if path.exists() {
        return Ok(Scenario::load(path)?);
    }
    builtin(arg).with_context(|| {
        let names: Vec<_> = builtin_names().collect();
        format!("`{arg}` is neither a file nor a shipped scenario ({})", names.join(", "))
    })
}

fn run_cmd(arg: &str, mode: Option<Mode>, latency: Option<f64>, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let mut scenario = load_scenario(arg)?;
    let mode = mode.unwrap_or(scenario.mode);
    let latency = latency.unwrap_or(if scenario.offline_latency > 0.0 {
        scenario.offline_latency
    } else {
        DEFAULT_OFFLINE_LATENCY
    });
    if mode == Mode::Online && latency > 0.0 && scenario.mode != Mode::Online {
        eprintln!("note: offline latency ignored in online mode");
    }
    scenario = scenario.with_mode(mode, latency);
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    scenario.validate()?;
    let output = run(&scenario)?;
    let mode_name = match mode {
        Mode::Online => "online",
        Mode::OfflineBaseline => "offline",
    };
    let dir = out.unwrap_or_else(|| PathBuf::from("runs").join(format!("{}-{mode_name}", scenario.name)));
    write_run_dir(&dir, &output.log, &output.metrics)?;
    println!("{}", serde_json::to_string_pretty(&output.metrics)?);
    eprintln!("run written to {}", dir.display());
    if output.log.errors.iter().any(|e| e.fatal) {
        bail!("run aborted: {}", output.metrics.errors.join("; "));
    }
    Ok(())
}

fn parse_cmd(interactive: bool, words: &[String]) -> Result<()> {
    let dict = Dictionary::shipped();
    if !interactive {
        if words.is_empty() {
            bail!("give an utterance or --interactive");
        }
        let tokens = tokenize(&words.join(" "));
        let chart = Chart::parse_batch(&tokens, &dict);
        print!("{}", chart.dump(&dict));
        print_best(&chart);
        return Ok(());
    }
    eprintln!("type words (several per line are fed one by one); :reset clears, :quit exits");
    let mut chart = Chart::new();
    for line in std::io::stdin().lock().lines() {
        let line = line?;
        match line.trim() {
            ":quit" | ":q" => break,
            ":reset" => {
                chart.reset();
                continue;
            }
            _ => {}
        }
        for w in tokenize(&line) {
            let r = chart.feed_word(&w, &dict);
            println!("after `{w}`: {:?}", r.status);
        }
        print!("{}", chart.dump(&dict));
        print_best(&chart);
    }
    Ok(())
}

fn print_best(chart: &Chart) {
    match chart.result().best.as_ref().and_then(|b| b.frame().map(|f| f.to_string())) {
        Some(fol) => println!("best: {fol}"),
        None => println!("best: none"),
    }
}

#[derive(Clone)]
struct Shared {
    session: Arc<Mutex<Session>>,
    frames: broadcast::Sender<String>,
}

fn encode(frame: &ServerFrame) -> String {
    serde_json::to_string(frame).expect("frames serialize")
}

fn serve_cmd(port: u16, world: Option<PathBuf>) -> Result<()> {
    let scenario = match world {
        Some(path) => {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            interactive_scenario(load_world(&text)?)
        }
        None => builtin(builtin_names().next().expect("shipped scenarios"))?,
    };
    let session = Session::new(scenario)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let (frames, _) = broadcast::channel(1024);
        let shared = Shared {
            session: Arc::new(Mutex::new(session)),
            frames,
        };
        let ticker = shared.clone();
        tokio::spawn(async move {
            let mut interval = tokio::time::interval(Duration::from_millis(100));
            interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
            loop {
                interval.tick().await;
                let out = ticker.session.lock().expect("session lock").tick();
                for f in &out {
                    let _ = ticker.frames.send(encode(f));
                }
            }
        });
        let app = axum::Router::new().route("/ws", get(upgrade)).with_state(shared);
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", port))
            .await
            .with_context(|| format!("binding port {port}"))?;
        println!("listening on ws://{}/ws", listener.local_addr()?);
        axum::serve(listener, app).await?;
        Ok(())
    })
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Shared>) -> axum::response::Response {
    ws.on_upgrade(move |socket| client(socket, shared))
}

async fn client(mut socket: WebSocket, shared: Shared) {
    let mut rx = shared.frames.subscribe();
    let hello = shared.session.lock().expect("session lock").hello();
    for f in &hello {
        if socket.send(Message::Text(encode(f).into())).await.is_err() {
            return;
        }
    }
    loop {
        tokio::select! {
            msg = socket.recv() => {
                let text = match msg {
                    Some(Ok(Message::Text(t))) => t.to_string(),
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                    Some(Ok(_)) => continue,
                };
                let out = shared.session.lock().expect("session lock").handle_text(&text);
                for f in &out {
                    if matches!(f, ServerFrame::Error { .. }) {
                        // errors go to the sender only
                        if socket.send(Message::Text(encode(f).into())).await.is_err() {
                            return;
                        }
                    } else {
                        let _ = shared.frames.send(encode(f));
                    }
                }
            }
            frame = rx.recv() => match frame {
                Ok(text) => {
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return,
            }
        }
    }
}
