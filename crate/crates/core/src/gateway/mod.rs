//! Live steering server: a static page at `/` and a WebSocket at `/ws`.
//!
//! Each connection drives one [`Session`]. A client may reattach to its
//! session with `/ws?session=<id>`; sessions without a client do not step.

mod protocol;
mod session;

pub use protocol::*;
pub use session::{Session, SessionConfig, DEFAULT_PACE_SPS, INTERVENTION_WINDOW};

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use serde::Deserialize;
use tokio::net::TcpListener;

use crate::error::Result;

pub const INDEX_HTML: &str = include_str!("index.html");

#[derive(Debug)]
struct Slot {
    session: Session,
    attached: bool,
}

#[derive(Debug)]
pub struct Gateway {
    config: SessionConfig,
    sessions: Mutex<HashMap<String, Arc<tokio::sync::Mutex<Slot>>>>,
    next: AtomicU64,
}

impl Gateway {
    pub fn new(config: SessionConfig) -> Arc<Self> {
        Arc::new(Self {
            config,
            sessions: Mutex::new(HashMap::new()),
            next: AtomicU64::new(0),
        })
    }

    fn attach(&self, wanted: Option<String>) -> Result<Arc<tokio::sync::Mutex<Slot>>> {
        let mut sessions = self.sessions.lock().expect("session map poisoned");
        if let Some(slot) = wanted.and_then(|id| sessions.get(&id).cloned()) {
            let reattached = match slot.try_lock() {
                Ok(mut s) if !s.attached => {
                    s.attached = true;
                    true
                }
                _ => false,
            };
            if reattached {
                return Ok(slot);
            }
        }
        let index = self.next.fetch_add(1, Ordering::Relaxed);
        let id = format!("s{index}");
        let slot = Arc::new(tokio::sync::Mutex::new(Slot {
            session: Session::new(id.clone(), self.config.clone(), index)?,
            attached: true,
        }));
        sessions.insert(id, slot.clone());
        Ok(slot)
    }
}

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/", get(|| async { Html(INDEX_HTML) }))
        .route("/ws", get(ws_handler))
        .with_state(gateway)
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, gateway: Arc<Gateway>) -> Result<()> {
    axum::serve(listener, router(gateway)).await?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct WsQuery {
    session: Option<String>,
}

async fn ws_handler(
    ws: WebSocketUpgrade,
    Query(q): Query<WsQuery>,
    State(gw): State<Arc<Gateway>>,
) -> impl IntoResponse {
    ws.on_upgrade(move |socket| async move {
        if let Ok(slot) = gw.attach(q.session) {
            run_connection(socket, slot.clone()).await;
            slot.lock().await.attached = false;
        }
    })
}

async fn send(socket: &mut WebSocket, msg: &ServerMessage) -> bool {
    match serde_json::to_string(msg) {
        Ok(text) => socket.send(Message::Text(text.into())).await.is_ok(),
        Err(_) => false,
    }
}

fn period(sps: f64) -> Duration {
    Duration::from_secs_f64(1.0 / sps)
}

async fn run_connection(mut socket: WebSocket, slot: Arc<tokio::sync::Mutex<Slot>>) {
    let (mut pace, initial) = {
        let mut s = slot.lock().await;
        (s.session.pace_sps(), s.session.update())
    };
    if let Some(msg) = initial {
        if !send(&mut socket, &msg).await {
            return;
        }
    }
    let mut ticker = tokio::time::interval(period(pace));
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            incoming = socket.recv() => {
                let replies = match incoming {
                    Some(Ok(Message::Text(text))) => slot.lock().await.session.handle_text(&text),
                    Some(Ok(Message::Binary(_))) => vec![ServerMessage::error("bad_message")],
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                    Some(Ok(_)) => Vec::new(),
                };
                for r in &replies {
                    if !send(&mut socket, r).await {
                        return;
                    }
                }
                let now = slot.lock().await.session.pace_sps();
                if now != pace {
                    pace = now;
                    ticker = tokio::time::interval(period(pace));
                    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
                }
            }
            _ = ticker.tick() => {
                let out = slot.lock().await.session.tick();
                match out {
                    Ok(Some(msg)) => {
                        if !send(&mut socket, &msg).await {
                            return;
                        }
                    }
                    Ok(None) => {}
                    Err(_) => {
                        if !send(&mut socket, &ServerMessage::error("step_failed")).await {
                            return;
                        }
                    }
                }
            }
        }
    }
}
