//! Session lock: at most one interaction drives the robot at a time.

use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::json;

use super::InteractError;
use crate::bus::{Bus, BusError};
use crate::ifaces;

pub const LOCK_PROVIDER: &str = "interact";

const CALL_TIMEOUT: Duration = Duration::from_secs(2);

/// Serves `/m/session_lock`. Requests are `{op: acquire|release, owner}`;
/// replies carry `granted` and the current `holder`.
pub fn serve_session_lock(bus: &Bus) -> Result<(), BusError> {
    let holder: Arc<Mutex<Option<String>>> = Arc::default();
    bus.serve(&ifaces::session_lock(), LOCK_PROVIDER, move |req| {
        let owner = req["owner"].as_str().unwrap_or_default().to_owned();
        if owner.is_empty() {
            return Err("owner must be non-empty".into());
        }
        let mut h = holder.lock().unwrap();
        let granted = match req["op"].as_str() {
            Some("acquire") => match h.as_deref() {
                None => {
                    *h = Some(owner.clone());
                    true
                }
                Some(cur) => cur == owner,
            },
            Some("release") => {
                if h.as_deref() == Some(owner.as_str()) {
                    *h = None;
                    true
                } else {
                    false
                }
            }
            other => return Err(format!("unknown op {other:?}")),
        };
        Ok(json!({ "granted": granted, "holder": *h }))
    })
}

/// Acquires the lock for `owner`. Succeeds without a lock service, so
/// interactions also run on a bare bus.
pub fn acquire(bus: &Bus, owner: &str) -> Result<(), InteractError> {
    let Some(iface) = bus.lookup(&ifaces::session_lock().path, ifaces::session_lock().kind) else {
        return Ok(());
    };
    let reply = bus.call(&iface, json!({"op": "acquire", "owner": owner}), CALL_TIMEOUT)?;
    if reply["granted"].as_bool() == Some(true) {
        Ok(())
    } else {
        Err(InteractError::SessionBusy(
            reply["holder"].as_str().unwrap_or("unknown").to_owned(),
        ))
    }
}

pub fn release(bus: &Bus, owner: &str) {
    if let Some(iface) = bus.lookup(&ifaces::session_lock().path, ifaces::session_lock().kind) {
        if let Err(e) = bus.call(&iface, json!({"op": "release", "owner": owner}), CALL_TIMEOUT) {
            log::warn!("session lock release for {owner}: {e}");
        }
    }
}
