//! Wire protocol for out-of-process predictors.
//!
//! Audio frames go out as a binary request: 4-byte magic `VAPF`, u64
//! big-endian capture timestamp (ms), u32 big-endian payload length, then the
//! payload of interleaved 16-bit little-endian stereo samples (user channel
//! first). A 100 ms frame at 16 kHz is 1600 samples per channel, so the
//! payload is 6400 bytes. Responses come back as single JSON lines with
//! `t`, `p_now`, `p_future` fields.
//!
//! Transcript estimates use JSON lines in both directions.

use crate::model::{TimestampMs, VapFrame};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::Duration;

pub const MAGIC: &[u8; 4] = b"VAPF";
pub const SAMPLE_RATE_HZ: u32 = 16_000;
pub const FRAME_MS: u32 = 100;
/// Interleaved stereo payload size for one frame: 1600 samples x 2 channels
/// x 2 bytes.
pub const FRAME_PAYLOAD_BYTES: usize =
    (SAMPLE_RATE_HZ as usize / 1000) * FRAME_MS as usize * 2 * 2;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum WireError {
    #[error("channel length mismatch: user {user} samples, robot {robot}")]
    ChannelMismatch { user: usize, robot: usize },
    #[error("empty audio frame")]
    EmptyFrame,
    #[error("response at byte {at}: {reason}")]
    BadResponse { at: usize, reason: String },
    #[error("response field {field} out of range: {value}")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("io: {0}")]
    Io(String),
}

/// Encodes one audio frame request. Both channels must carry the same number
/// of samples and at least one.
pub fn encode_vap_request(t: TimestampMs, user: &[i16], robot: &[i16]) -> Result<Vec<u8>, WireError> {
    if user.len() != robot.len() {
        return Err(WireError::ChannelMismatch { user: user.len(), robot: robot.len() });
    }
    if user.is_empty() {
        return Err(WireError::EmptyFrame);
    }
    let mut buf = Vec::with_capacity(16 + user.len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&t.to_be_bytes());
    buf.extend_from_slice(&((user.len() * 4) as u32).to_be_bytes());
    for (u, r) in user.iter().zip(robot) {
        buf.extend_from_slice(&u.to_le_bytes());
        buf.extend_from_slice(&r.to_le_bytes());
    }
    Ok(buf)
}

/// Parses an encoded request back into (timestamp, user, robot) channels.
pub fn decode_vap_request(buf: &[u8]) -> Result<(TimestampMs, Vec<i16>, Vec<i16>), WireError> {
    let bad = |at: usize, reason: &str| WireError::BadResponse { at, reason: reason.to_string() };
    if buf.len() < 16 {
        return Err(bad(buf.len(), "truncated header"));
    }
    if &buf[0..4] != MAGIC {
        return Err(bad(0, "bad magic"));
    }
    let t = u64::from_be_bytes(buf[4..12].try_into().unwrap());
    let len = u32::from_be_bytes(buf[12..16].try_into().unwrap()) as usize;
    if len == 0 || len % 4 != 0 {
        return Err(bad(12, "payload length not a positive multiple of 4"));
    }
    if buf.len() != 16 + len {
        return Err(bad(16, "payload length mismatch"));
    }
    let mut user = Vec::with_capacity(len / 4);
    let mut robot = Vec::with_capacity(len / 4);
    for chunk in buf[16..].chunks_exact(4) {
        user.push(i16::from_le_bytes([chunk[0], chunk[1]]));
        robot.push(i16::from_le_bytes([chunk[2], chunk[3]]));
    }
    Ok((t, user, robot))
}

#[derive(Debug, Serialize, Deserialize)]
struct VapResponseLine {
    t: u64,
    p_now: f64,
    p_future: f64,
    #[serde(default)]
    vad_user: bool,
    #[serde(default)]
    vad_robot: bool,
}

/// Parses one JSON response line into a frame. Never panics on malformed
/// input; errors carry byte positions where serde reports them.
pub fn decode_vap_response(line: &str) -> Result<VapFrame, WireError> {
    let parsed: VapResponseLine = serde_json::from_str(line.trim_end()).map_err(|e| {
        WireError::BadResponse { at: e.column(), reason: e.to_string() }
    })?;
    for (field, value) in [("p_now", parsed.p_now), ("p_future", parsed.p_future)] {
        if !(0.0..=1.0).contains(&value) || !value.is_finite() {
            return Err(WireError::OutOfRange { field, value });
        }
    }
    Ok(VapFrame {
        t: parsed.t,
        p_now: parsed.p_now,
        p_future: parsed.p_future,
        vad_user: parsed.vad_user,
        vad_robot: parsed.vad_robot,
    })
}

pub fn encode_vap_response(frame: &VapFrame) -> String {
    serde_json::to_string(&VapResponseLine {
        t: frame.t,
        p_now: frame.p_now,
        p_future: frame.p_future,
        vad_user: frame.vad_user,
        vad_robot: frame.vad_robot,
    })
    .expect("frame serializes")
}

#[derive(Debug, Serialize, Deserialize)]
struct TsRequestLine {
    t: u64,
    transcript: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct TsResponseLine {
    t: u64,
    p_ts: f64,
}

pub fn encode_ts_request(t: TimestampMs, transcript: &str) -> String {
    serde_json::to_string(&TsRequestLine { t, transcript: transcript.to_string() })
        .expect("request serializes")
}

pub fn decode_ts_request(line: &str) -> Result<(TimestampMs, String), WireError> {
    let parsed: TsRequestLine = serde_json::from_str(line.trim_end())
        .map_err(|e| WireError::BadResponse { at: e.column(), reason: e.to_string() })?;
    Ok((parsed.t, parsed.transcript))
}

pub fn encode_ts_response(t: TimestampMs, p_ts: f64) -> String {
    serde_json::to_string(&TsResponseLine { t, p_ts }).expect("response serializes")
}

pub fn decode_ts_response(line: &str) -> Result<(TimestampMs, f64), WireError> {
    let parsed: TsResponseLine = serde_json::from_str(line.trim_end())
        .map_err(|e| WireError::BadResponse { at: e.column(), reason: e.to_string() })?;
    if !(0.0..=1.0).contains(&parsed.p_ts) || !parsed.p_ts.is_finite() {
        return Err(WireError::OutOfRange { field: "p_ts", value: parsed.p_ts });
    }
    Ok((parsed.t, parsed.p_ts))
}

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    pub addr: String,
    /// Per-frame response deadline. Late frames are replaced by the previous
    /// frame marked stale so the decision loop never blocks.
    pub timeout_ms: u64,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self { addr: "127.0.0.1:9900".into(), timeout_ms: 80 }
    }
}

/// TCP client for an external acoustic predictor. Keeps the last good frame
/// so a deadline miss degrades to stale data instead of stalling.
pub struct VapBridgeClient {
    writer: TcpStream,
    reader: BufReader<TcpStream>,
    last_frame: Option<VapFrame>,
    stale_count: u64,
}

impl VapBridgeClient {
    pub fn connect(cfg: &BridgeConfig) -> Result<Self, WireError> {
        let stream = TcpStream::connect(&cfg.addr).map_err(|e| WireError::Io(e.to_string()))?;
        stream
            .set_read_timeout(Some(Duration::from_millis(cfg.timeout_ms)))
            .map_err(|e| WireError::Io(e.to_string()))?;
        let reader = BufReader::new(stream.try_clone().map_err(|e| WireError::Io(e.to_string()))?);
        Ok(Self { writer: stream, reader, last_frame: None, stale_count: 0 })
    }

    /// Frames served from the previous result because the deadline passed.
    pub fn stale_count(&self) -> u64 {
        self.stale_count
    }

    /// Sends one frame of audio and waits up to the deadline for the
    /// predictor's output. On timeout returns the previous frame restamped to
    /// `t`; with no previous frame, a neutral one.
    pub fn request_frame(
        &mut self,
        t: TimestampMs,
        user: &[i16],
        robot: &[i16],
    ) -> Result<VapFrame, WireError> {
        let req = encode_vap_request(t, user, robot)?;
        self.writer.write_all(&req).map_err(|e| WireError::Io(e.to_string()))?;
        let mut line = String::new();
        match self.reader.read_line(&mut line) {
            Ok(0) => Err(WireError::Io("predictor closed connection".into())),
            Ok(_) => {
                let frame = decode_vap_response(&line)?;
                self.last_frame = Some(frame.clone());
                Ok(frame)
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock || e.kind() == std::io::ErrorKind::TimedOut => {
                self.stale_count += 1;
                let mut frame = self.last_frame.clone().unwrap_or(VapFrame {
                    t,
                    p_now: 0.5,
                    p_future: 0.5,
                    vad_user: false,
                    vad_robot: false,
                });
                frame.t = t;
                Ok(frame)
            }
            Err(e) => Err(WireError::Io(e.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;
    use std::thread;

    #[test]
    fn request_roundtrip_standard_frame() {
        let user = vec![100i16; 1600];
        let robot = vec![-7i16; 1600];
        let buf = encode_vap_request(12345, &user, &robot).unwrap();
        assert_eq!(&buf[0..4], MAGIC);
        assert_eq!(buf.len(), 16 + FRAME_PAYLOAD_BYTES);
        let (t, u, r) = decode_vap_request(&buf).unwrap();
        assert_eq!(t, 12345);
        assert_eq!(u, user);
        assert_eq!(r, robot);
    }

    #[test]
    fn rejects_mismatched_and_empty_channels() {
        assert_eq!(
            encode_vap_request(0, &[1, 2], &[1]),
            Err(WireError::ChannelMismatch { user: 2, robot: 1 })
        );
        assert_eq!(encode_vap_request(0, &[], &[]), Err(WireError::EmptyFrame));
    }

    #[test]
    fn response_decoding_checks_ranges() {
        let ok = decode_vap_response(r#"{"t":100,"p_now":0.25,"p_future":0.75}"#).unwrap();
        assert_eq!(ok.t, 100);
        assert!(!ok.vad_user);
        assert!(matches!(
            decode_vap_response(r#"{"t":100,"p_now":1.5,"p_future":0.5}"#),
            Err(WireError::OutOfRange { field: "p_now", .. })
        ));
        assert!(matches!(
            decode_vap_response("not json"),
            Err(WireError::BadResponse { .. })
        ));
    }

    #[test]
    fn ts_lines_roundtrip() {
        let line = encode_ts_request(400, "see you tomorrow");
        let (t, tx) = decode_ts_request(&line).unwrap();
        assert_eq!((t, tx.as_str()), (400, "see you tomorrow"));
        let line = encode_ts_response(400, 0.8);
        assert_eq!(decode_ts_response(&line).unwrap(), (400, 0.8));
        assert!(decode_ts_response(r#"{"t":1,"p_ts":-0.1}"#).is_err());
    }

    #[test]
    fn loopback_client_gets_frames_and_survives_timeouts() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let server = thread::spawn(move || {
            let (mut sock, _) = listener.accept().unwrap();
            let mut reader = sock.try_clone().unwrap();
            use std::io::Read;
            let mut n_served = 0u64;
            loop {
                let mut header = [0u8; 16];
                if reader.read_exact(&mut header).is_err() {
                    break;
                }
                let len = u32::from_be_bytes(header[12..16].try_into().unwrap()) as usize;
                let mut payload = vec![0u8; len];
                reader.read_exact(&mut payload).unwrap();
                let t = u64::from_be_bytes(header[4..12].try_into().unwrap());
                n_served += 1;
                if n_served == 2 {
                    // simulate a slow model: miss the deadline on frame 2
                    thread::sleep(Duration::from_millis(200));
                }
                let frame = VapFrame {
                    t,
                    p_now: 0.3,
                    p_future: 0.4,
                    vad_user: true,
                    vad_robot: false,
                };
                let line = encode_vap_response(&frame) + "\n";
                if sock.write_all(line.as_bytes()).is_err() {
                    break;
                }
            }
        });

        let cfg = BridgeConfig { addr, timeout_ms: 80 };
        let mut client = VapBridgeClient::connect(&cfg).unwrap();
        let audio = vec![0i16; 1600];

        let f1 = client.request_frame(100, &audio, &audio).unwrap();
        assert_eq!((f1.t, f1.p_now), (100, 0.3));
        assert_eq!(client.stale_count(), 0);

        // server sleeps past the deadline: stale reuse, restamped
        let f2 = client.request_frame(200, &audio, &audio).unwrap();
        assert_eq!(f2.t, 200);
        assert_eq!(f2.p_now, 0.3);
        assert_eq!(client.stale_count(), 1);

        drop(client);
        server.join().unwrap();
    }
}
