//! Viewer backend. One solver thread owns the session; connections send edits
//! in over a channel and receive encoded states from a watch channel.

use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use clap::{Args, ValueEnum};
use kinoptik::session::{parse_client_message, ClientMessage, ServerMessage, Session};
use tokio::sync::{mpsc, watch};

use crate::input::{load_world, parse_pose, RobotArgs};

const INDEX_HTML: &str = include_str!("../assets/index.html");

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ServeTask {
    Ik,
    IkMobile,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[command(flatten)]
    pub robot: RobotArgs,
    #[arg(long, value_enum, default_value = "ik")]
    pub task: ServeTask,
    /// 0 picks a free port; the bound address is printed on stderr.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Initial target pose JSON. Defaults to the link pose at the rest configuration.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub rng_seed: u64,
}

struct Edit {
    msg: ClientMessage,
    /// Errors go back to the connection that sent the edit.
    reply: mpsc::UnboundedSender<String>,
}

#[derive(Clone)]
struct AppState {
    edits: mpsc::UnboundedSender<Edit>,
    states: watch::Receiver<String>,
}

/// Applies every pending edit in arrival order, then solves once. Intermediate
/// edits are therefore never solved, and the last value of each field always is.
fn solver_loop(mut session: Session, mut edits: mpsc::UnboundedReceiver<Edit>, states: watch::Sender<String>) {
    while let Some(first) = edits.blocking_recv() {
        let mut batch = vec![first];
        while let Ok(e) = edits.try_recv() {
            batch.push(e);
        }
        let mut applied = false;
        for e in &batch {
            match session.apply(&e.msg) {
                Ok(()) => applied = true,
                Err(detail) => {
                    let _ = e.reply.send(ServerMessage::Error { detail }.encode());
                }
            }
        }
        // Rejected edits leave the session unchanged, so there is nothing to publish.
        if !applied {
            continue;
        }
        let solved = session.solve().and_then(|()| session.state());
        match solved {
            Ok(state) => {
                states.send_replace(ServerMessage::State(Box::new(state)).encode());
            }
            Err(e) => {
                let detail = format!("solve failed: {e}");
                for e in &batch {
                    let _ = e.reply.send(ServerMessage::Error { detail: detail.clone() }.encode());
                }
            }
        }
    }
}

async fn index() -> Html<&'static str> {
    Html(INDEX_HTML)
}

async fn ws(upgrade: WebSocketUpgrade, State(app): State<AppState>) -> impl IntoResponse {
    upgrade.on_upgrade(move |socket| connection(socket, app))
}

async fn connection(mut socket: WebSocket, app: AppState) {
    let mut states = app.states.clone();
    let initial = states.borrow_and_update().clone();
    if socket.send(Message::Text(initial.into())).await.is_err() {
        return;
    }
    let (reply_tx, mut reply_rx) = mpsc::unbounded_channel();
    loop {
        tokio::select! {
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(text))) => match parse_client_message(&text) {
                    Ok(msg) => {
                        if app.edits.send(Edit { msg, reply: reply_tx.clone() }).is_err() {
                            break;
                        }
                    }
                    Err(detail) => {
                        let err = ServerMessage::Error { detail }.encode();
                        if socket.send(Message::Text(err.into())).await.is_err() {
                            break;
                        }
                    }
                },
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
            changed = states.changed() => {
                if changed.is_err() {
                    break;
                }
                let state = states.borrow_and_update().clone();
                if socket.send(Message::Text(state.into())).await.is_err() {
                    break;
                }
            },
            Some(err) = reply_rx.recv() => {
                if socket.send(Message::Text(err.into())).await.is_err() {
                    break;
                }
            },
        }
    }
}

pub fn serve(args: ServeArgs) -> Result<()> {
    let (model, link) = args.robot.load()?;
    let target = match &args.target {
        Some(t) => parse_pose(t, "target")?,
        None => model.forward_kinematics(model.rest_pose().as_slice())?[link],
    };
    let world = match &args.world {
        Some(path) => load_world(path)?,
        None => Default::default(),
    };
    let mut session = Session::new(model, link, target, world, args.task == ServeTask::IkMobile)?;
    session.rng_seed = args.rng_seed;
    session.solve()?;
    let initial = ServerMessage::State(Box::new(session.state()?)).encode();

    let runtime = tokio::runtime::Runtime::new().context("cannot start async runtime")?;
    runtime.block_on(async move {
        let addr: SocketAddr = format!("{}:{}", args.host, args.port)
            .parse()
            .with_context(|| format!("invalid listen address {}:{}", args.host, args.port))?;
        let listener = match tokio::net::TcpListener::bind(addr).await {
            Ok(l) => l,
            Err(e) => bail!("cannot listen on {addr}: {e}"),
        };
        let (edit_tx, edit_rx) = mpsc::unbounded_channel();
        let (state_tx, state_rx) = watch::channel(initial);
        std::thread::Builder::new()
            .name("solver".into())
            .spawn(move || solver_loop(session, edit_rx, state_tx))
            .context("cannot start solver thread")?;
        let app = Router::new()
            .route("/", get(index))
            .route("/ws", get(ws))
            .with_state(AppState { edits: edit_tx, states: state_rx });
        eprintln!("listening on http://{}", listener.local_addr()?);
        // Open sockets would keep graceful shutdown waiting, so the server
        // future is dropped on SIGINT instead.
        tokio::select! {
            r = axum::serve(listener, app) => r.context("server failed")?,
            r = tokio::signal::ctrl_c() => {
                r.context("cannot wait for SIGINT")?;
                eprintln!("shutting down");
            }
        }
        Ok(())
    })
}
