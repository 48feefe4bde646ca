//! Streaming recognition: per-connection sessions that carry LSTM state
//! across frames, over newline-delimited JSON on stdio or WebSocket text
//! frames.

use std::io::{BufRead, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use tungstenite::{Message, WebSocket};

use crate::error::{Error, Result};
use crate::model::RecognizerModel;
use crate::nn::{LstmState, Tensor};
use crate::skeleton::{GestureFrame, HandSkeleton, JOINT_COUNT};
use crate::synth::{GestureClass, GestureSequence};

/// Where latency is measured, repeated in every bench report.
pub const LATENCY_BOUNDARY: &str =
    "server-side per-frame compute: from start of message decode to start of reply encode; excludes transport, capture and display";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClientMessage {
    Frame {
        t: u64,
        joints: Vec<[f64; 3]>,
        #[serde(default)]
        gaze: Option<[f64; 2]>,
    },
    Reset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    Hello {
        classes: Vec<String>,
        model_version: u32,
    },
    Probs {
        t: u64,
        probs: Vec<f64>,
        label: String,
        latency_us: u64,
    },
    Error {
        code: String,
        detail: String,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

impl ClientMessage {
    pub fn frame(frame: &GestureFrame) -> Self {
        ClientMessage::Frame {
            t: frame.t_ms,
            joints: frame.skeleton.joints.to_vec(),
            gaze: frame.gaze,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("client messages always serialize")
    }
}

/// A rejected message. The session is left exactly as it was.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireError {
    pub code: &'static str,
    pub detail: String,
}

impl WireError {
    pub const BAD_MESSAGE: &'static str = "bad_message";
    pub const INVALID_SKELETON: &'static str = "invalid_skeleton";
    pub const NON_INCREASING_T: &'static str = "non_increasing_t";

    fn new(code: &'static str, detail: impl Into<String>) -> Self {
        Self {
            code,
            detail: detail.into(),
        }
    }

    pub fn to_message(&self) -> ServerMessage {
        ServerMessage::Error {
            code: self.code.to_string(),
            detail: self.detail.clone(),
        }
    }
}

pub fn class_name(id: usize) -> String {
    GestureClass::from_id(id).map_or_else(|| format!("class_{id}"), |c| c.name().to_string())
}

pub fn hello(model: &RecognizerModel) -> ServerMessage {
    ServerMessage::Hello {
        classes: (0..model.class_count()).map(class_name).collect(),
        model_version: model.version,
    }
}

/// Latency samples in microseconds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LatencyStats {
    samples: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: usize,
    pub p50_us: u64,
    pub p99_us: u64,
    pub max_us: u64,
}

impl LatencyStats {
    pub fn record(&mut self, us: u64) {
        self.samples.push(us);
    }

    pub fn count(&self) -> usize {
        self.samples.len()
    }

    pub fn extend(&mut self, other: &LatencyStats) {
        self.samples.extend_from_slice(&other.samples);
    }

    /// Nearest-rank percentile; `None` when empty.
    pub fn percentile(&self, q: f64) -> Option<u64> {
        if self.samples.is_empty() {
            return None;
        }
        let mut s = self.samples.clone();
        s.sort_unstable();
        let rank = ((q / 100.0) * s.len() as f64).ceil() as usize;
        Some(s[rank.clamp(1, s.len()) - 1])
    }

    pub fn summary(&self) -> LatencySummary {
        LatencySummary {
            count: self.count(),
            p50_us: self.percentile(50.0).unwrap_or(0),
            p99_us: self.percentile(99.0).unwrap_or(0),
            max_us: self.samples.iter().copied().max().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub t_ms: u64,
    pub probs: Vec<f64>,
    pub class_id: usize,
}

static NEXT_SESSION: AtomicU64 = AtomicU64::new(1);

/// One client's streaming state.
#[derive(Debug, Clone)]
pub struct Session {
    pub id: u64,
    model: Arc<RecognizerModel>,
    state: LstmState,
    prev: Option<GestureFrame>,
    pub latency: LatencyStats,
    pub frames_seen: u64,
}

impl Session {
    pub fn new(model: Arc<RecognizerModel>) -> Self {
        Self {
            id: NEXT_SESSION.fetch_add(1, Ordering::Relaxed),
            state: model.initial_state(),
            model,
            prev: None,
            latency: LatencyStats::default(),
            frames_seen: 0,
        }
    }

    pub fn model(&self) -> &RecognizerModel {
        &self.model
    }

    pub fn state(&self) -> &LstmState {
        &self.state
    }

    pub fn previous_frame(&self) -> Option<&GestureFrame> {
        self.prev.as_ref()
    }

    /// Zero state and forget the previous frame. Statistics are kept.
    pub fn reset(&mut self) {
        self.state = self.model.initial_state();
        self.prev = None;
    }

    /// Advance by one frame. On error nothing changes.
    pub fn step(&mut self, frame: &GestureFrame) -> Result<StepOutput, WireError> {
        if let Some(p) = &self.prev {
            if frame.t_ms <= p.t_ms {
                return Err(WireError::new(
                    WireError::NON_INCREASING_T,
                    format!("t {} is not after previous t {}", frame.t_ms, p.t_ms),
                ));
            }
        }
        frame
            .ensure_valid()
            .map_err(|e| WireError::new(WireError::INVALID_SKELETON, e.to_string()))?;
        let (state, probs) = self
            .model
            .step(self.prev.as_ref(), frame, &self.state)
            .map_err(|e| WireError::new(WireError::INVALID_SKELETON, e.to_string()))?;
        self.state = state;
        self.prev = Some(frame.clone());
        self.frames_seen += 1;
        let class_id = Tensor::vector(probs.clone()).argmax();
        Ok(StepOutput {
            t_ms: frame.t_ms,
            probs,
            class_id,
        })
    }

    /// Decode one message, act on it, and return the reply, if any. Reset
    /// produces no reply.
    pub fn handle_message(&mut self, text: &str) -> Option<ServerMessage> {
        let start = Instant::now();
        let msg: ClientMessage = match serde_json::from_str(text) {
            Ok(m) => m,
            Err(e) => return Some(WireError::new(WireError::BAD_MESSAGE, e.to_string()).to_message()),
        };
        let (t, joints, gaze) = match msg {
            ClientMessage::Reset => {
                debug!("session {} reset", self.id);
                self.reset();
                return None;
            }
            ClientMessage::Frame { t, joints, gaze } => (t, joints, gaze),
        };
        if joints.len() != JOINT_COUNT {
            return Some(
                WireError::new(
                    WireError::INVALID_SKELETON,
                    format!("expected {JOINT_COUNT} joints, got {}", joints.len()),
                )
                .to_message(),
            );
        }
        let skeleton = HandSkeleton::from_slice(&joints).expect("joint count checked above");
        let frame = GestureFrame {
            t_ms: t,
            skeleton,
            gaze,
        };
        match self.step(&frame) {
            Ok(out) => {
                let latency_us = start.elapsed().as_micros() as u64;
                self.latency.record(latency_us);
                Some(ServerMessage::Probs {
                    t,
                    label: class_name(out.class_id),
                    probs: out.probs,
                    latency_us,
                })
            }
            Err(e) => Some(e.to_message()),
        }
    }

    pub fn handle_line(&mut self, line: &str) -> Option<String> {
        self.handle_message(line).map(|m| m.to_json())
    }
}

/// Newline-delimited JSON over any reader/writer pair: hello first, then one
/// reply line per input line (blank lines and resets produce none).
pub fn serve_stdio<R: BufRead, W: Write>(model: Arc<RecognizerModel>, input: R, mut output: W) -> Result<()> {
    let io_err = |e| Error::io("<stdio>", e);
    writeln!(output, "{}", hello(&model).to_json()).map_err(io_err)?;
    output.flush().map_err(io_err)?;
    let mut session = Session::new(model);
    for line in input.lines() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(reply) = session.handle_line(&line) {
            writeln!(output, "{reply}").map_err(io_err)?;
            output.flush().map_err(io_err)?;
        }
    }
    let s = session.latency.summary();
    info!("stdio session closed after {} frames, p50 {} us, p99 {} us", session.frames_seen, s.p50_us, s.p99_us);
    Ok(())
}

/// A bound WebSocket listener. Each connection gets its own thread and session.
pub struct WsServer {
    listener: TcpListener,
    model: Arc<RecognizerModel>,
}

impl WsServer {
    pub fn bind(model: Arc<RecognizerModel>, addr: impl ToSocketAddrs + std::fmt::Display) -> Result<Self> {
        let label = addr.to_string();
        let listener = TcpListener::bind(addr).map_err(|e| Error::io(label, e))?;
        Ok(Self { listener, model })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        self.listener.local_addr().map_err(|e| Error::io("<listener>", e))
    }

    /// Accept forever.
    pub fn run(self) -> Result<()> {
        info!("listening on ws://{}", self.local_addr()?);
        for stream in self.listener.incoming() {
            match stream {
                Ok(stream) => {
                    let model = Arc::clone(&self.model);
                    thread::spawn(move || {
                        if let Err(e) = handle_connection(model, stream) {
                            warn!("connection ended with error: {e}");
                        }
                    });
                }
                Err(e) => warn!("accept failed: {e}"),
            }
        }
        Ok(())
    }
}

fn handle_connection(model: Arc<RecognizerModel>, stream: TcpStream) -> std::result::Result<(), tungstenite::Error> {
    let peer = stream.peer_addr().ok();
    stream.set_nodelay(true).ok();
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::ConnectionClosed,
    })?;
    ws.send(Message::text(hello(&model).to_json()))?;
    let mut session = Session::new(model);
    info!("session {} opened for {:?}", session.id, peer);
    loop {
        let msg = match ws.read() {
            Ok(m) => m,
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => break,
            Err(e) => return Err(e),
        };
        match msg {
            Message::Text(text) => {
                if let Some(reply) = session.handle_line(text.as_str()) {
                    ws.send(Message::text(reply))?;
                }
            }
            Message::Binary(_) => {
                let e = WireError::new(WireError::BAD_MESSAGE, "binary frames are not supported");
                ws.send(Message::text(e.to_message().to_json()))?;
            }
            Message::Close(_) => break,
            _ => {}
        }
    }
    let s = session.latency.summary();
    info!("session {} closed: {} frames, p99 {} us", session.id, session.frames_seen, s.p99_us);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub sequences: usize,
    pub repetitions: usize,
    pub frames: usize,
    pub p50_us: u64,
    pub p99_us: u64,
    pub max_us: u64,
    pub frames_per_second: f64,
    pub labels_identical: bool,
    pub measurement_boundary: String,
}

/// Replays every frame of every sequence through [`Session::handle_line`],
/// resetting between sequences, `repetitions` times.
pub fn bench(model: Arc<RecognizerModel>, data: &[GestureSequence], repetitions: usize) -> Result<BenchReport> {
    if repetitions == 0 || data.is_empty() {
        return Err(Error::domain("bench", "need at least one repetition and one sequence"));
    }
    let lines: Vec<Vec<String>> = data
        .iter()
        .map(|s| s.frames.iter().map(|f| ClientMessage::frame(f).to_json()).collect())
        .collect();
    let mut session = Session::new(model);
    let mut passes: Vec<Vec<String>> = Vec::with_capacity(repetitions);
    let wall = Instant::now();
    for _ in 0..repetitions {
        let mut labels = Vec::new();
        for seq in &lines {
            session.reset();
            for line in seq {
                match session.handle_message(line) {
                    Some(ServerMessage::Probs { label, .. }) => labels.push(label),
                    Some(ServerMessage::Error { code, detail }) => {
                        return Err(Error::domain("bench frame", format!("{code}: {detail}")))
                    }
                    _ => {}
                }
            }
        }
        passes.push(labels);
    }
    let elapsed = wall.elapsed().as_secs_f64();
    let s = session.latency.summary();
    Ok(BenchReport {
        sequences: data.len(),
        repetitions,
        frames: s.count,
        p50_us: s.p50_us,
        p99_us: s.p99_us,
        max_us: s.max_us,
        frames_per_second: s.count as f64 / elapsed,
        labels_identical: passes.windows(2).all(|w| w[0] == w[1]),
        measurement_boundary: LATENCY_BOUNDARY.to_string(),
    })
}
