use std::path::Path;
use std::sync::atomic::Ordering;
use std::time::{Duration, Instant};

use futures::{SinkExt, StreamExt};
use serde_json::Value;
use tokio_tungstenite::tungstenite::Message;

use m_cli::server::{router, AppState};
use m_core::config::PlatformConfig;
use m_core::platform::{Platform, RunOptions};
use m_core::twin::{TwinMessage, TwinMode};

struct Running {
    url: String,
    stop: std::sync::Arc<std::sync::atomic::AtomicBool>,
    exec: Option<std::thread::JoinHandle<()>>,
}

impl Drop for Running {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.exec.take() {
            let _ = h.join();
        }
    }
}

async fn start(mode: TwinMode, static_dir: Option<&Path>) -> Running {
    let cfg = PlatformConfig {
        twin_mode: mode,
        ..PlatformConfig::default()
    }
    .in_memory();
    let mut p = Platform::build(cfg, RunOptions::default()).unwrap();
    let app = router(
        AppState {
            bus: p.bus.clone(),
            hub: p.twin.clone(),
        },
        static_dir,
    );
    let stop = p.executor.stop_flag();
    let exec = std::thread::spawn(move || {
        p.run_until(None);
    });
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let url = format!("127.0.0.1:{}", listener.local_addr().unwrap().port());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    Running {
        url,
        stop,
        exec: Some(exec),
    }
}

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn connect(r: &Running) -> Ws {
    tokio_tungstenite::connect_async(format!("ws://{}/twin", r.url)).await.unwrap().0
}

async fn next_frame(ws: &mut Ws) -> TwinMessage {
    loop {
        match ws.next().await.unwrap().unwrap() {
            Message::Text(t) => return TwinMessage::parse(t.as_str()).unwrap(),
            _ => continue,
        }
    }
}

async fn get_json(r: &Running, path: &str) -> Value {
    reqwest::get(format!("http://{}{path}", r.url)).await.unwrap().json().await.unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn hello_carries_the_served_description() {
    let r = start(TwinMode::SimControl, None).await;
    let mut ws = connect(&r).await;
    let TwinMessage::Hello { description, mode } = next_frame(&mut ws).await else {
        panic!("first frame must be hello");
    };
    assert_eq!(mode, TwinMode::SimControl);
    assert_eq!(description, get_json(&r, "/robot.json").await);
    assert_eq!(description["joints"].as_object().unwrap().len(), 5);
}

#[tokio::test(flavor = "multi_thread")]
async fn joint_states_are_forwarded_at_most_thirty_hertz() {
    let r = start(TwinMode::SimControl, None).await;
    let mut ws = connect(&r).await;
    next_frame(&mut ws).await;
    let mut stamps = Vec::new();
    let t = Instant::now();
    while t.elapsed() < Duration::from_secs(2) {
        if let TwinMessage::JointStates { t_mono, position } = next_frame(&mut ws).await {
            assert_eq!(position.len(), 5);
            stamps.push(t_mono);
        }
    }
    assert!(stamps.len() >= 20, "{}", stamps.len());
    let min_gap = stamps.windows(2).map(|w| w[1] - w[0]).min().unwrap();
    assert!(min_gap as f64 >= 1e9 / 30.0, "gap {min_gap} ns");
}

#[tokio::test(flavor = "multi_thread")]
async fn set_joint_moves_the_sim_to_the_clamped_target() {
    let r = start(TwinMode::SimControl, None).await;
    let mut ws = connect(&r).await;
    next_frame(&mut ws).await;
    let max = get_json(&r, "/robot.json").await["joints"]["head_yaw"]["limits"]["max"].as_f64().unwrap();
    ws.send(Message::Text(r#"{"kind":"set_joint","joint":"head_yaw","target":5.0}"#.into()))
        .await
        .unwrap();
    let t = Instant::now();
    loop {
        assert!(t.elapsed() < Duration::from_secs(5), "head_yaw never reached {max}");
        if let TwinMessage::JointStates { position, .. } = next_frame(&mut ws).await {
            let q = position[&m_core::model::JointId::HeadYaw];
            assert!(q <= max + 1e-12);
            if (q - max).abs() < 1e-9 {
                break;
            }
        }
    }
    let stats = get_json(&r, "/twin/stats").await;
    assert_eq!(stats["applied"], 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn mirror_mode_refuses_set_joint_and_counts_it() {
    let r = start(TwinMode::Mirror, None).await;
    let mut ws = connect(&r).await;
    assert!(matches!(next_frame(&mut ws).await, TwinMessage::Hello { mode: TwinMode::Mirror, .. }));
    ws.send(Message::Text(r#"{"kind":"set_joint","joint":"head_yaw","target":0.5}"#.into()))
        .await
        .unwrap();
    loop {
        match next_frame(&mut ws).await {
            TwinMessage::Error { message } => {
                assert!(message.contains("mirror"));
                break;
            }
            TwinMessage::JointStates { .. } | TwinMessage::FaceState { .. } => {}
            other => panic!("unexpected {other:?}"),
        }
    }
    let stats = get_json(&r, "/twin/stats").await;
    assert_eq!(stats["set_joint_frames"], 1);
    assert_eq!(stats["applied"], 0);
}

#[tokio::test(flavor = "multi_thread")]
async fn health_and_static_assets_are_served() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<h1>twin</h1>").unwrap();
    let r = start(TwinMode::SimControl, Some(dir.path())).await;
    let page = reqwest::get(format!("http://{}/index.html", r.url)).await.unwrap();
    assert_eq!(page.status(), 200);
    assert_eq!(page.text().await.unwrap(), "<h1>twin</h1>");
    let missing = reqwest::get(format!("http://{}/nope.js", r.url)).await.unwrap();
    assert_eq!(missing.status(), 404);
    tokio::time::sleep(Duration::from_millis(300)).await;
    let h = get_json(&r, "/health").await;
    assert!(h["uptime"].as_f64().unwrap() > 0.0);
    let joints = h["interfaces"].as_array().unwrap().iter().find(|i| i["path"] == "/m/joint_states").unwrap();
    assert!(joints["messages"].as_u64().unwrap() > 0);
    assert!(h["nodes"].as_array().unwrap().iter().all(|n| n["alive"] == true));
}
