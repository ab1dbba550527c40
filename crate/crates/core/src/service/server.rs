//! Line-oriented TCP front end.
//!
//! A connection whose first line is `HELLO <session_id> <IN|OUT>` is an
//! ingestion stream: every following line is a frame and is answered with
//! `ack <frame_index> <light> <last_sequence_no>` or `error <Code>: <message>`.
//!
//! Any other connection speaks JSON, one request per line, keyed by `op`:
//!
//! ```text
//! {"op":"start","config":{"debounce_window":5}}   -> {"ok":true,"session_id":"..."}
//! {"op":"snapshot","session_id":"..."}            -> {"ok":true,"snapshot":{...}}
//! {"op":"adjust","session_id":"...","target":"TOTAL_OUT","delta":1,"reason":"recount","actor":"rn-2"}
//! {"op":"capture","session_id":"...","note":"A"}  -> {"ok":true,"capture_id":"cap-0001",...}
//! {"op":"pause"|"resume"|"stats"|"end","session_id":"..."}
//! {"op":"subscribe","session_id":"..."}           -> {"ok":true}, then push lines until closed
//! ```
//!
//! Failures are `{"ok":false,"error":"<Code>","message":"..."}`.

use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::thread::{self, JoinHandle};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{PushMessage, ServiceError, SessionService, SessionSnapshot};
use crate::engine::{AdjustTarget, Adjustment, ReconciliationReport, SessionConfig};
use crate::protocol::{serialize_frame, Camera, FrameObservation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Start {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        config: Option<SessionConfig>,
    },
    Snapshot { session_id: String },
    Stats { session_id: String },
    Pause { session_id: String },
    Resume { session_id: String },
    Adjust { session_id: String, target: AdjustTarget, delta: i64, reason: String, actor: String },
    Capture {
        session_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    End { session_id: String },
    Subscribe { session_id: String },
}

pub struct Server {
    listener: TcpListener,
    service: SessionService,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, service: SessionService) -> io::Result<Self> {
        Ok(Self { listener: TcpListener::bind(addr)?, service })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections forever, one thread each.
    pub fn run(self) -> io::Result<()> {
        for stream in self.listener.incoming() {
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            let svc = self.service.clone();
            thread::spawn(move || {
                let peer = stream.peer_addr().ok();
                if let Err(e) = handle(stream, svc) {
                    log::debug!("connection {peer:?} closed: {e}");
                }
            });
        }
        Ok(())
    }

    pub fn spawn(self) -> JoinHandle<io::Result<()>> {
        thread::Builder::new().name("accept".into()).spawn(move || self.run()).expect("spawn accept thread")
    }
}

fn handle(stream: TcpStream, svc: SessionService) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let mut first = String::new();
    if reader.read_line(&mut first)? == 0 {
        return Ok(());
    }
    if let Some(rest) = first.trim_end().strip_prefix("HELLO ") {
        return ingest_loop(rest, reader, writer, svc);
    }

    let mut line = first;
    loop {
        let text = line.trim();
        if !text.is_empty() {
            match serde_json::from_str::<Request>(text) {
                Ok(Request::Subscribe { session_id }) => {
                    return match svc.subscribe(&session_id) {
                        Ok(sub) => {
                            respond(&mut writer, json!({"ok": true}))?;
                            for msg in sub {
                                writeln!(writer, "{}", msg.to_line())?;
                                writer.flush()?;
                            }
                            Ok(())
                        }
                        Err(e) => respond(&mut writer, error_json(&e)),
                    };
                }
                Ok(req) => respond(&mut writer, dispatch(&svc, req))?,
                Err(e) => respond(&mut writer, json!({"ok": false, "error": "BadRequest", "message": e.to_string()}))?,
            }
        }
        line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
    }
}

fn respond(w: &mut impl Write, v: Value) -> io::Result<()> {
    writeln!(w, "{v}")?;
    w.flush()
}

fn error_json(e: &ServiceError) -> Value {
    json!({"ok": false, "error": e.code(), "message": e.to_string()})
}

fn dispatch(svc: &SessionService, req: Request) -> Value {
    let result: Result<Value, ServiceError> = match req {
        Request::Start { config } => {
            svc.start_session(config.unwrap_or(svc.config().session_defaults)).map(|id| json!({"ok": true, "session_id": id}))
        }
        Request::Snapshot { session_id } => svc.snapshot(&session_id).map(snapshot_json),
        Request::Stats { session_id } => svc
            .stats(&session_id)
            .map(|[i, o]| json!({"ok": true, "streams": {"IN": i, "OUT": o}})),
        Request::Pause { session_id } => svc.pause(&session_id).map(snapshot_json),
        Request::Resume { session_id } => svc.resume(&session_id).map(snapshot_json),
        Request::Adjust { session_id, target, delta, reason, actor } => {
            svc.adjust(&session_id, &Adjustment { target, delta, reason, actor }).map(snapshot_json)
        }
        Request::Capture { session_id, note } => svc.capture_anomaly(&session_id, note).map(|r| {
            json!({"ok": true, "capture_id": r.capture_id, "frames_in": r.frames_in, "frames_out": r.frames_out})
        }),
        Request::End { session_id } => svc.end_session(&session_id).map(|r| json!({"ok": true, "report": r})),
        Request::Subscribe { .. } => unreachable!("handled by the connection loop"),
    };
    result.unwrap_or_else(|e| error_json(&e))
}

fn snapshot_json(s: SessionSnapshot) -> Value {
    json!({"ok": true, "snapshot": s})
}

fn ingest_loop(
    hello: &str,
    mut reader: BufReader<TcpStream>,
    mut writer: BufWriter<TcpStream>,
    svc: SessionService,
) -> io::Result<()> {
    let mut parts = hello.split_whitespace();
    let (Some(id), Some(cam), None) = (parts.next(), parts.next(), parts.next()) else {
        return respond_line(&mut writer, "error BadHandshake: expected HELLO <session_id> <IN|OUT>");
    };
    let camera: Camera = match cam.parse() {
        Ok(c) => c,
        Err(e) => return respond_line(&mut writer, &format!("error BadHandshake: {e}")),
    };
    if let Err(e) = svc.snapshot(id) {
        return respond_line(&mut writer, &format!("error {}: {e}", e.code()));
    }
    respond_line(&mut writer, &format!("ack hello {id} {camera}"))?;

    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let reply = match svc.ingest_line(id, camera, text) {
            Ok(ack) => format!("ack {} {} {}", ack.frame_index, ack.light, ack.last_sequence_no),
            Err(e) => format!("error {}: {e}", e.code()),
        };
        respond_line(&mut writer, &reply)?;
    }
}

fn respond_line(w: &mut impl Write, line: &str) -> io::Result<()> {
    writeln!(w, "{line}")?;
    w.flush()
}

/// Failure reported by the server for a request.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Api(#[from] ApiError),
    #[error("unexpected reply: {0}")]
    Protocol(String),
}

/// Blocking client for the JSON command API.
pub struct ApiClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl ApiClient {
    pub fn connect(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self { reader: BufReader::new(stream.try_clone()?), writer: stream })
    }

    /// Sends one request and returns the raw reply.
    pub fn call(&mut self, req: &Request) -> Result<Value, ClientError> {
        let line = serde_json::to_string(req).map_err(|e| ClientError::Protocol(e.to_string()))?;
        writeln!(self.writer, "{line}")?;
        let mut reply = String::new();
        if self.reader.read_line(&mut reply)? == 0 {
            return Err(ClientError::Protocol("connection closed".into()));
        }
        let v: Value = serde_json::from_str(&reply).map_err(|e| ClientError::Protocol(e.to_string()))?;
        if v["ok"] == json!(true) {
            Ok(v)
        } else {
            Err(ApiError {
                code: v["error"].as_str().unwrap_or("Unknown").to_string(),
                message: v["message"].as_str().unwrap_or_default().to_string(),
            }
            .into())
        }
    }

    fn field<T: serde::de::DeserializeOwned>(v: &Value, key: &str) -> Result<T, ClientError> {
        serde_json::from_value(v[key].clone()).map_err(|e| ClientError::Protocol(format!("{key}: {e}")))
    }

    pub fn start(&mut self, config: Option<SessionConfig>) -> Result<String, ClientError> {
        let v = self.call(&Request::Start { config })?;
        Self::field(&v, "session_id")
    }

    pub fn snapshot(&mut self, session_id: &str) -> Result<SessionSnapshot, ClientError> {
        let v = self.call(&Request::Snapshot { session_id: session_id.into() })?;
        Self::field(&v, "snapshot")
    }

    pub fn adjust(&mut self, session_id: &str, adj: &Adjustment) -> Result<SessionSnapshot, ClientError> {
        let v = self.call(&Request::Adjust {
            session_id: session_id.into(),
            target: adj.target,
            delta: adj.delta,
            reason: adj.reason.clone(),
            actor: adj.actor.clone(),
        })?;
        Self::field(&v, "snapshot")
    }

    pub fn capture(&mut self, session_id: &str, note: Option<&str>) -> Result<String, ClientError> {
        let v = self.call(&Request::Capture { session_id: session_id.into(), note: note.map(str::to_string) })?;
        Self::field(&v, "capture_id")
    }

    pub fn end(&mut self, session_id: &str) -> Result<ReconciliationReport, ClientError> {
        let v = self.call(&Request::End { session_id: session_id.into() })?;
        Self::field(&v, "report")
    }

    /// Turns this connection into a push stream.
    pub fn subscribe(mut self, session_id: &str) -> Result<PushStream, ClientError> {
        self.call(&Request::Subscribe { session_id: session_id.into() })?;
        Ok(PushStream { reader: self.reader })
    }
}

/// Push records read off a subscribed connection.
pub struct PushStream {
    reader: BufReader<TcpStream>,
}

impl Iterator for PushStream {
    type Item = Result<PushMessage, ClientError>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut line = String::new();
        match self.reader.read_line(&mut line) {
            Ok(0) => None,
            Ok(_) => Some(PushMessage::from_line(line.trim()).map_err(|e| ClientError::Protocol(e.to_string()))),
            Err(e) => Some(Err(e.into())),
        }
    }
}

/// One camera's ingestion connection.
pub struct IngestClient {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl IngestClient {
    pub fn connect(addr: impl ToSocketAddrs, session_id: &str, camera: Camera) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let mut client = Self { reader: BufReader::new(stream.try_clone()?), writer: BufWriter::new(stream) };
        writeln!(client.writer, "HELLO {session_id} {camera}")?;
        client.writer.flush()?;
        let reply = client.read_reply()?;
        if !reply.starts_with("ack") {
            return Err(ClientError::Protocol(reply));
        }
        Ok(client)
    }

    fn read_reply(&mut self) -> Result<String, ClientError> {
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(ClientError::Protocol("connection closed".into()));
        }
        Ok(line.trim_end().to_string())
    }

    /// Sends a raw line and waits for its `ack`/`error` reply.
    pub fn send_line(&mut self, line: &str) -> Result<String, ClientError> {
        writeln!(self.writer, "{line}")?;
        self.writer.flush()?;
        self.read_reply()
    }

    pub fn send(&mut self, frame: &FrameObservation) -> Result<String, ClientError> {
        self.send_line(&serialize_frame(frame))
    }
}
