//! Minimal JSON-over-WebSocket client for the browser debugging protocol.
//!
//! One [`CdpConnection`] multiplexes the browser endpoint and every
//! attached page (flat session mode). Replies are routed by request id;
//! everything else is broadcast as a [`CdpEvent`].

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio_tungstenite::tungstenite::protocol::WebSocketConfig;
use tokio_tungstenite::tungstenite::Message;

const EVENT_CAPACITY: usize = 4096;
const MAX_MESSAGE: usize = 512 << 20;

#[derive(Debug, Clone, thiserror::Error)]
pub enum CdpError {
    #[error("cannot connect to {url}: {reason}")]
    Connect { url: String, reason: String },
    #[error("{method} failed: {message} (code {code})")]
    Remote {
        method: String,
        code: i64,
        message: String,
    },
    #[error("connection to the browser closed")]
    Closed,
    #[error("malformed protocol message: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone)]
pub struct CdpEvent {
    pub method: String,
    pub params: Value,
    pub session_id: Option<String>,
}

type Pending = Arc<Mutex<HashMap<u64, (String, oneshot::Sender<Result<Value, CdpError>>)>>>;

#[derive(Debug)]
struct Shared {
    outgoing: mpsc::UnboundedSender<Message>,
    pending: Pending,
    events: broadcast::Sender<CdpEvent>,
    next_id: AtomicU64,
    closed: Arc<AtomicBool>,
}

#[derive(Debug, Clone)]
pub struct CdpConnection {
    shared: Arc<Shared>,
}

impl CdpConnection {
    pub async fn connect(ws_url: &str) -> Result<Self, CdpError> {
        let config = WebSocketConfig::default()
            .max_message_size(Some(MAX_MESSAGE))
            .max_frame_size(Some(MAX_MESSAGE));
        let (stream, _) = tokio_tungstenite::connect_async_with_config(ws_url, Some(config), true)
            .await
            .map_err(|e| CdpError::Connect {
                url: ws_url.to_string(),
                reason: e.to_string(),
            })?;
        let (mut sink, mut source) = stream.split();

        let (outgoing, mut rx) = mpsc::unbounded_channel::<Message>();
        let pending: Pending = Arc::default();
        let (events, _) = broadcast::channel(EVENT_CAPACITY);
        let closed = Arc::new(AtomicBool::new(false));

        tokio::spawn(async move {
            while let Some(msg) = rx.recv().await {
                if sink.send(msg).await.is_err() {
                    break;
                }
            }
            let _ = sink.close().await;
        });

        let reader_pending = pending.clone();
        let reader_events = events.clone();
        let reader_closed = closed.clone();
        tokio::spawn(async move {
            while let Some(frame) = source.next().await {
                let text = match frame {
                    Ok(Message::Text(t)) => t.to_string(),
                    Ok(Message::Binary(b)) => String::from_utf8_lossy(&b).into_owned(),
                    Ok(Message::Close(_)) | Err(_) => break,
                    Ok(_) => continue,
                };
                dispatch(&text, &reader_pending, &reader_events);
            }
            reader_closed.store(true, Ordering::SeqCst);
            let drained: Vec<_> = reader_pending.lock().unwrap().drain().collect();
            for (_, (_, tx)) in drained {
                let _ = tx.send(Err(CdpError::Closed));
            }
        });

        Ok(Self {
            shared: Arc::new(Shared {
                outgoing,
                pending,
                events,
                next_id: AtomicU64::new(1),
                closed,
            }),
        })
    }

    pub fn is_closed(&self) -> bool {
        self.shared.closed.load(Ordering::SeqCst)
    }

    pub fn subscribe(&self) -> broadcast::Receiver<CdpEvent> {
        self.shared.events.subscribe()
    }

    /// Sends a command and waits for its reply.
    pub async fn call(&self, method: &str, params: Value, session_id: Option<&str>) -> Result<Value, CdpError> {
        if self.is_closed() {
            return Err(CdpError::Closed);
        }
        let id = self.shared.next_id.fetch_add(1, Ordering::SeqCst);
        let mut msg = json!({ "id": id, "method": method, "params": params });
        if let Some(sid) = session_id {
            msg["sessionId"] = Value::String(sid.to_string());
        }
        let (tx, rx) = oneshot::channel();
        self.shared
            .pending
            .lock()
            .unwrap()
            .insert(id, (method.to_string(), tx));
        if self.shared.outgoing.send(Message::Text(msg.to_string().into())).is_err() {
            self.shared.pending.lock().unwrap().remove(&id);
            return Err(CdpError::Closed);
        }
        // The reader may have exited between the closed check and the insert.
        if self.is_closed() {
            if let Some((_, tx)) = self.shared.pending.lock().unwrap().remove(&id) {
                let _ = tx.send(Err(CdpError::Closed));
            }
        }
        rx.await.unwrap_or(Err(CdpError::Closed))
    }

    /// Closes the socket; outstanding calls fail with [`CdpError::Closed`].
    pub fn shutdown(&self) {
        let _ = self.shared.outgoing.send(Message::Close(None));
    }
}

fn dispatch(text: &str, pending: &Pending, events: &broadcast::Sender<CdpEvent>) {
    let Ok(value) = serde_json::from_str::<Value>(text) else {
        return;
    };
    if let Some(id) = value.get("id").and_then(Value::as_u64) {
        let Some((method, tx)) = pending.lock().unwrap().remove(&id) else {
            return;
        };
        let result = if let Some(err) = value.get("error") {
            Err(CdpError::Remote {
                method,
                code: err.get("code").and_then(Value::as_i64).unwrap_or(0),
                message: err
                    .get("message")
                    .and_then(Value::as_str)
                    .unwrap_or("unknown error")
                    .to_string(),
            })
        } else {
            Ok(value.get("result").cloned().unwrap_or(Value::Null))
        };
        let _ = tx.send(result);
    } else if let Some(method) = value.get("method").and_then(Value::as_str) {
        let _ = events.send(CdpEvent {
            method: method.to_string(),
            params: value.get("params").cloned().unwrap_or(Value::Null),
            session_id: value.get("sessionId").and_then(Value::as_str).map(str::to_string),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn routes_replies_and_events() {
        let pending: Pending = Arc::default();
        let (events, mut rx) = broadcast::channel(8);
        let (tx, mut reply) = oneshot::channel();
        pending.lock().unwrap().insert(7, ("Page.navigate".into(), tx));

        dispatch(r#"{"id":7,"error":{"code":-32000,"message":"Cannot navigate"}}"#, &pending, &events);
        match reply.try_recv().unwrap() {
            Err(CdpError::Remote { method, code, .. }) => {
                assert_eq!(method, "Page.navigate");
                assert_eq!(code, -32000);
            }
            other => panic!("unexpected {other:?}"),
        }

        dispatch(r#"{"method":"Page.loadEventFired","params":{"timestamp":1.5},"sessionId":"S1"}"#, &pending, &events);
        let ev = rx.try_recv().unwrap();
        assert_eq!(ev.method, "Page.loadEventFired");
        assert_eq!(ev.session_id.as_deref(), Some("S1"));

        // garbage and unknown ids are ignored
        dispatch("not json", &pending, &events);
        dispatch(r#"{"id":99,"result":{}}"#, &pending, &events);
    }
}
