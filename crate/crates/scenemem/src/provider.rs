//! Feature providers: the builtin synthetic provider and a line-JSON endpoint client.
//!
//! # Wire protocol
//!
//! One JSON object per line in each direction, strictly request/response.
//! Numbers travel as decimal text and vectors as base64 of little-endian f32.
//!
//! ```text
//! -> {"kind":"embed_region","frame_id":"12","bbox2d":["10","20","64.5","80"]}
//! <- {"status":"ok","clip":"<b64>","dino":"<b64>"}
//! -> {"kind":"is_target","frame_id":"12","region":["10","20","64.5","80"],"text":"C picks up the cup"}
//! <- {"status":"ok","target":true}
//! -> {"kind":"embed_text","text":"a green cup"}
//! <- {"status":"ok","vector":"<b64>"}
//! <- {"status":"error","message":"..."}
//! ```
//!
//! A malformed request gets an error response; the connection stays open.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use scenemem_core::FrameId;
use scenemem_core::{AssociationOracle, FeaturePair, FeatureProbe, OracleError, PixelRect, ProbeError};
use serde::{Deserialize, Serialize};

use crate::synth::{self, World};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("provider: {0}")]
pub struct ProviderError(pub String);

/// Everything the pipeline and the query tools need from the model side.
pub trait Provider: FeatureProbe + AssociationOracle {
    /// Embeds a text query into the clip channel.
    fn embed_text(&mut self, text: &str) -> Result<Vec<f64>, ProviderError>;
}

// ---- builtin synthetic provider ----

/// Answers from the generating world: regions are re-rendered with the true
/// state and pose of the frame, so the probe reports what really is there.
pub struct SyntheticProvider {
    world: World,
}

impl SyntheticProvider {
    pub fn new(world: World) -> Self {
        SyntheticProvider { world }
    }

    /// Loads the `world.json` written next to a synthetic episode.
    pub fn from_episode(dir: &Path) -> Result<Self, synth::SynthError> {
        Ok(Self::new(synth::load_world(dir)?))
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    fn check_frame(&self, frame_id: FrameId) -> Result<(), String> {
        if frame_id >= self.world.spec.frame_count as u64 {
            return Err(format!("frame {frame_id} is not part of the episode"));
        }
        Ok(())
    }
}

impl FeatureProbe for SyntheticProvider {
    fn embed_region(&mut self, frame_id: FrameId, region: &PixelRect) -> Result<FeaturePair, ProbeError> {
        self.check_frame(frame_id).map_err(ProbeError)?;
        Ok(self.world.region_features(frame_id, region))
    }
}

impl AssociationOracle for SyntheticProvider {
    fn is_target(&mut self, frame_id: FrameId, region: &PixelRect, text: &str) -> Result<bool, OracleError> {
        self.check_frame(frame_id).map_err(OracleError)?;
        let ev = self
            .world
            .event_for(frame_id, text)
            .ok_or_else(|| OracleError(format!("no scripted action {text:?} at frame {frame_id}")))?;
        let target = self.world.object_index(&ev.object).expect("validated");
        Ok(self.world.region_object(frame_id, region) == Some(target))
    }
}

impl Provider for SyntheticProvider {
    fn embed_text(&mut self, text: &str) -> Result<Vec<f64>, ProviderError> {
        let lower = text.to_lowercase();
        let words: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric() && c != '_').collect();
        self.world
            .spec
            .objects
            .iter()
            .position(|o| words.contains(&o.name.as_str()) || words.contains(&o.category.as_str()))
            .map(|i| self.world.features[i].clip.clone())
            .ok_or_else(|| ProviderError(format!("no object matches {text:?}")))
    }
}

// ---- wire format ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Request {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox2d: Option<[String; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<[String; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Response {
    Ok {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        clip: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dino: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<bool>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vector: Option<String>,
    },
    Error {
        message: String,
    },
}

impl Response {
    fn error(message: impl Into<String>) -> Self {
        Response::Error { message: message.into() }
    }
}

pub fn encode_vector(v: &[f64]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| (*x as f32).to_le_bytes()).collect();
    B64.encode(bytes)
}

pub fn decode_vector(s: &str) -> Result<Vec<f64>, String> {
    let bytes = B64.decode(s).map_err(|e| format!("bad base64: {e}"))?;
    if bytes.len() % 4 != 0 {
        return Err(format!("vector payload of {} bytes is not a multiple of 4", bytes.len()));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect())
}

fn rect_to_text(r: &PixelRect) -> [String; 4] {
    [r.x0, r.y0, r.x1, r.y1].map(|v| v.to_string())
}

fn rect_from_text(t: &[String; 4]) -> Result<PixelRect, String> {
    let mut v = [0.0; 4];
    for (out, s) in v.iter_mut().zip(t) {
        *out = s.parse::<f64>().map_err(|_| format!("bad number {s:?}"))?;
        if !out.is_finite() {
            return Err(format!("non-finite number {s:?}"));
        }
    }
    Ok(PixelRect::new(v[0], v[1], v[2], v[3]))
}

fn frame_from_text(t: &Option<String>) -> Result<FrameId, String> {
    let s = t.as_ref().ok_or("missing frame_id")?;
    s.parse().map_err(|_| format!("bad frame_id {s:?}"))
}

/// Answers one request line.
pub fn handle_line(provider: &mut dyn Provider, line: &str) -> Response {
    let req: Request = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => return Response::error(format!("malformed request: {e}")),
    };
    let result = (|| -> Result<Response, String> {
        match req.kind.as_str() {
            "embed_region" => {
                let frame = frame_from_text(&req.frame_id)?;
                let rect = rect_from_text(req.bbox2d.as_ref().ok_or("missing bbox2d")?)?;
                let f = provider.embed_region(frame, &rect).map_err(|e| e.to_string())?;
                Ok(Response::Ok {
                    clip: Some(encode_vector(&f.clip)),
                    dino: Some(encode_vector(&f.dino)),
                    target: None,
                    vector: None,
                })
            }
            "is_target" => {
                let frame = frame_from_text(&req.frame_id)?;
                let rect = rect_from_text(req.region.as_ref().ok_or("missing region")?)?;
                let text = req.text.as_deref().ok_or("missing text")?;
                let t = provider.is_target(frame, &rect, text).map_err(|e| e.to_string())?;
                Ok(Response::Ok { clip: None, dino: None, target: Some(t), vector: None })
            }
            "embed_text" => {
                let text = req.text.as_deref().ok_or("missing text")?;
                let v = provider.embed_text(text).map_err(|e| e.to_string())?;
                Ok(Response::Ok { clip: None, dino: None, target: None, vector: Some(encode_vector(&v)) })
            }
            other => Err(format!("unknown request kind {other:?}")),
        }
    })();
    result.unwrap_or_else(Response::error)
}

/// Serves requests until the reader is exhausted.
pub fn serve_connection<R: BufRead, W: Write>(provider: &mut dyn Provider, reader: R, mut writer: W) -> std::io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = handle_line(provider, &line);
        serde_json::to_writer(&mut writer, &resp)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}

// ---- endpoint client ----

type OkFields = (Option<String>, Option<String>, Option<bool>, Option<String>);

/// Forwards every call to a remote responder speaking the wire protocol.
pub struct EndpointProvider {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl EndpointProvider {
    pub fn connect(addr: &str) -> std::io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(EndpointProvider { reader: BufReader::new(stream.try_clone()?), writer: stream })
    }

    pub fn call(&mut self, req: &Request) -> Result<Response, String> {
        let mut line = serde_json::to_string(req).map_err(|e| e.to_string())?;
        line.push('\n');
        self.writer.write_all(line.as_bytes()).map_err(|e| e.to_string())?;
        let mut buf = String::new();
        if self.reader.read_line(&mut buf).map_err(|e| e.to_string())? == 0 {
            return Err("endpoint closed the connection".into());
        }
        serde_json::from_str(&buf).map_err(|e| format!("malformed response: {e}"))
    }

    /// Payload fields `(clip, dino, target, vector)` of an ok response.
    fn ok(&mut self, req: &Request) -> Result<OkFields, String> {
        match self.call(req)? {
            Response::Ok { clip, dino, target, vector } => Ok((clip, dino, target, vector)),
            Response::Error { message } => Err(message),
        }
    }
}

impl FeatureProbe for EndpointProvider {
    fn embed_region(&mut self, frame_id: FrameId, region: &PixelRect) -> Result<FeaturePair, ProbeError> {
        let req = Request {
            kind: "embed_region".into(),
            frame_id: Some(frame_id.to_string()),
            bbox2d: Some(rect_to_text(region)),
            region: None,
            text: None,
        };
        let (clip, dino, _, _) = self.ok(&req).map_err(ProbeError)?;
        let clip = decode_vector(&clip.ok_or_else(|| ProbeError("response lacks clip".into()))?).map_err(ProbeError)?;
        let dino = decode_vector(&dino.ok_or_else(|| ProbeError("response lacks dino".into()))?).map_err(ProbeError)?;
        Ok(FeaturePair::new(clip, dino))
    }
}

impl AssociationOracle for EndpointProvider {
    fn is_target(&mut self, frame_id: FrameId, region: &PixelRect, text: &str) -> Result<bool, OracleError> {
        let req = Request {
            kind: "is_target".into(),
            frame_id: Some(frame_id.to_string()),
            bbox2d: None,
            region: Some(rect_to_text(region)),
            text: Some(text.into()),
        };
        let (_, _, target, _) = self.ok(&req).map_err(OracleError)?;
        target.ok_or_else(|| OracleError("response lacks target".into()))
    }
}

impl Provider for EndpointProvider {
    fn embed_text(&mut self, text: &str) -> Result<Vec<f64>, ProviderError> {
        let req = Request { kind: "embed_text".into(), frame_id: None, bbox2d: None, region: None, text: Some(text.into()) };
        let (_, _, _, vector) = self.ok(&req).map_err(ProviderError)?;
        decode_vector(&vector.ok_or_else(|| ProviderError("response lacks vector".into()))?).map_err(ProviderError)
    }
}
