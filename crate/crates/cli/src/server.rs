//! HTTP side of a running platform: `/health`, `/robot.json`, the `/twin`
//! WebSocket and static assets for the twin UI.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::{Json, Router};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use m_core::bus::Bus;
use m_core::ifaces;
use m_core::logkit::{health, HealthReport, DEFAULT_LIVENESS};
use m_core::twin::{TwinHub, TwinMessage};

/// How often a twin connection drains its bus subscription.
const FORWARD_PERIOD: Duration = Duration::from_millis(10);
const TWIN_QUEUE: usize = 256;

#[derive(Clone)]
pub struct AppState {
    pub bus: Bus,
    pub hub: Arc<TwinHub>,
}

pub fn router(state: AppState, static_dir: Option<&Path>) -> Router {
    let r = Router::new()
        .route("/health", get(health_report))
        .route("/robot.json", get(robot))
        .route("/twin", get(twin))
        .route("/twin/stats", get(twin_stats));
    let r = match static_dir {
        Some(dir) => r.fallback_service(ServeDir::new(dir)),
        None => r,
    };
    r.with_state(state)
}

async fn health_report(State(s): State<AppState>) -> Json<HealthReport> {
    Json(health(&s.bus, DEFAULT_LIVENESS))
}

async fn robot(State(s): State<AppState>) -> Json<Value> {
    Json(serde_json::to_value(s.hub.description()).expect("description serializes"))
}

async fn twin_stats(State(s): State<AppState>) -> Json<Value> {
    Json(json!({
        "mode": s.hub.mode(),
        "set_joint_frames": s.hub.set_joint_frames(),
        "applied": s.hub.applied(),
    }))
}

async fn twin(ws: WebSocketUpgrade, State(s): State<AppState>) -> Response {
    ws.on_upgrade(move |sock| twin_session(sock, s))
}

async fn send(sock: &mut WebSocket, m: &TwinMessage) -> bool {
    sock.send(Message::Text(m.to_text().into())).await.is_ok()
}

async fn twin_session(mut sock: WebSocket, s: AppState) {
    let sub = match s
        .bus
        .subscribe_many(&[ifaces::joint_states(), ifaces::face_state()], TWIN_QUEUE)
    {
        Ok(sub) => sub,
        Err(e) => {
            let _ = send(&mut sock, &TwinMessage::Error { message: e.to_string() }).await;
            return;
        }
    };
    if !send(&mut sock, &s.hub.hello()).await {
        return;
    }
    let mut decimator = s.hub.decimator();
    let mut tick = tokio::time::interval(FORWARD_PERIOD);
    loop {
        tokio::select! {
            _ = tick.tick() => {
                for env in sub.drain() {
                    let Some(m) = TwinMessage::from_envelope(&env) else { continue };
                    if matches!(m, TwinMessage::JointStates { .. }) && !decimator.admit(env.t_mono) {
                        continue;
                    }
                    if !send(&mut sock, &m).await {
                        return;
                    }
                }
            }
            msg = sock.recv() => match msg {
                Some(Ok(Message::Text(text))) => {
                    let (bus, hub) = (s.bus.clone(), s.hub.clone());
                    // Service calls block; keep them off the async workers.
                    let replies = tokio::task::spawn_blocking(move || hub.handle_text(&bus, text.as_str()))
                        .await
                        .unwrap_or_default();
                    for r in &replies {
                        if !send(&mut sock, r).await {
                            return;
                        }
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}
