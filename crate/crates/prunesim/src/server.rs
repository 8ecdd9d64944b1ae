//! Newline-delimited JSON environment server: one env per session, strict
//! request/response alternation, base64 image payloads. External trainers
//! drive environments over stdio or TCP with exact replay equivalence to
//! in-process execution.

use std::io::{BufRead, Write};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, Observation, PruneEnv, RewardBreakdown, StepInfo};
use crate::episodes::{env_from_episode, Episode};
use crate::perception::CameraModel;
use crate::robot::KinematicModel;
use crate::scene::SceneConfig;
use crate::treegen::{TreeModel, TrellisSpec};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RequestMsg {
    pub seq: u64,
    #[serde(flatten)]
    pub body: RequestBody,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RequestBody {
    Hello,
    Reset { episode_id: u64 },
    Step { action: [f64; 6] },
    Close,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ResponseMsg {
    pub seq: u64,
    #[serde(flatten)]
    pub body: ResponseBody,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ResponseBody {
    HelloAck { version: u32, obs_spec: ObsSpec },
    Observation { observation: ObservationWire },
    StepBundle(Box<StepBundle>),
    Closed,
    Error { code: String, message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StepBundle {
    pub observation: ObservationWire,
    pub reward: RewardBreakdown,
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ObsSpec {
    pub flow_shape: [usize; 3],
    pub cutpoint_shape: [usize; 3],
    pub proprio_len: usize,
}

impl ObsSpec {
    pub fn standard() -> Self {
        Self {
            flow_shape: [2, 224, 224],
            cutpoint_shape: [1, 224, 224],
            proprio_len: 27,
        }
    }
}

/// Observation with image planes as base64 of little-endian bytes.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ObservationWire {
    /// f32 planes `[2, H, W]` row-major, little-endian.
    pub flow: String,
    /// u8 plane `[1, H, W]` row-major.
    pub cutpoint_img: String,
    pub proprio: Vec<f64>,
    pub cutpoint_base: [f64; 3],
    pub cutpoint_ee: [f64; 3],
}

impl ObservationWire {
    pub fn encode(obs: &Observation) -> Self {
        Self {
            flow: BASE64.encode(obs.flow.to_planar_bytes()),
            cutpoint_img: BASE64.encode(&obs.cutpoint_img.pixels),
            proprio: obs.proprio.to_vec(),
            cutpoint_base: obs.cutpoint_base,
            cutpoint_ee: obs.cutpoint_ee,
        }
    }

    /// Decode and length-check the image payloads against a spec.
    pub fn decode_images(&self, spec: &ObsSpec) -> Result<(Vec<f32>, Vec<u8>), String> {
        let flow_bytes = BASE64.decode(&self.flow).map_err(|e| e.to_string())?;
        let expect = spec.flow_shape.iter().product::<usize>() * 4;
        if flow_bytes.len() != expect {
            return Err(format!("flow payload {} bytes, expected {expect}", flow_bytes.len()));
        }
        let flow: Vec<f32> = flow_bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let img = BASE64.decode(&self.cutpoint_img).map_err(|e| e.to_string())?;
        let expect = spec.cutpoint_shape.iter().product::<usize>();
        if img.len() != expect {
            return Err(format!("cutpoint payload {} bytes, expected {expect}", img.len()));
        }
        Ok((flow, img))
    }
}

/// Everything a session needs to build environments.
pub struct SessionContext {
    pub bank: Vec<TreeModel>,
    pub episodes: Vec<Episode>,
    pub spec: TrellisSpec,
    pub scene_cfg: SceneConfig,
    pub model: KinematicModel,
    pub camera: CameraModel,
    pub env_cfg: EnvConfig,
}

/// One client session: an optional live environment plus the shared
/// context. Requests are handled strictly one at a time.
pub struct Session<'a> {
    ctx: &'a SessionContext,
    env: Option<PruneEnv>,
    pub closed: bool,
}

fn error_response(seq: u64, code: &str, message: impl Into<String>) -> ResponseMsg {
    ResponseMsg {
        seq,
        body: ResponseBody::Error { code: code.into(), message: message.into() },
    }
}

impl<'a> Session<'a> {
    pub fn new(ctx: &'a SessionContext) -> Self {
        Self { ctx, env: None, closed: false }
    }

    /// Handle one request line; always produces exactly one response line.
    pub fn handle_line(&mut self, line: &str) -> String {
        let response = match serde_json::from_str::<RequestMsg>(line) {
            Err(e) => error_response(0, "EPROTO", format!("malformed request: {e}")),
            Ok(req) => self.handle(req),
        };
        serde_json::to_string(&response).expect("responses serialize")
    }

    pub fn handle(&mut self, req: RequestMsg) -> ResponseMsg {
        match req.body {
            RequestBody::Hello => ResponseMsg {
                seq: req.seq,
                body: ResponseBody::HelloAck {
                    version: PROTOCOL_VERSION,
                    obs_spec: ObsSpec::standard(),
                },
            },
            RequestBody::Reset { episode_id } => {
                let Some(episode) = self.ctx.episodes.iter().find(|e| e.id == episode_id) else {
                    return error_response(req.seq, "ENOEP", format!("unknown episode {episode_id}"));
                };
                match env_from_episode(
                    &self.ctx.bank,
                    episode,
                    &self.ctx.spec,
                    &self.ctx.scene_cfg,
                    self.ctx.model.clone(),
                    self.ctx.camera.clone(),
                    self.ctx.env_cfg.clone(),
                ) {
                    Ok(mut env) => {
                        let obs = env.reset();
                        self.env = Some(env);
                        ResponseMsg {
                            seq: req.seq,
                            body: ResponseBody::Observation {
                                observation: ObservationWire::encode(&obs),
                            },
                        }
                    }
                    Err(e) => error_response(req.seq, "ENOEP", format!("episode rejected: {e}")),
                }
            }
            RequestBody::Step { action } => {
                let Some(env) = self.env.as_mut() else {
                    return error_response(req.seq, "EORDER", "step before reset");
                };
                match env.step(action) {
                    Ok(result) => ResponseMsg {
                        seq: req.seq,
                        body: ResponseBody::StepBundle(Box::new(StepBundle {
                            observation: ObservationWire::encode(&result.observation),
                            reward: result.reward,
                            terminated: result.terminated,
                            truncated: result.truncated,
                            info: result.info,
                        })),
                    },
                    Err(e) => error_response(req.seq, "EORDER", e.to_string()),
                }
            }
            RequestBody::Close => {
                self.closed = true;
                self.env = None;
                ResponseMsg { seq: req.seq, body: ResponseBody::Closed }
            }
        }
    }
}

/// Serve one session over a line-based transport (used for stdio).
pub fn serve_lines<R: BufRead, W: Write>(
    ctx: &SessionContext,
    reader: R,
    mut writer: W,
) -> std::io::Result<()> {
    let mut session = Session::new(ctx);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = session.handle_line(&line);
        writeln!(writer, "{response}")?;
        writer.flush()?;
        if session.closed {
            break;
        }
    }
    Ok(())
}

/// Serve concurrent sessions on a TCP listener; each connection gets its
/// own session over the shared read-only context.
pub fn serve_tcp(ctx: &SessionContext, listener: std::net::TcpListener) -> std::io::Result<()> {
    std::thread::scope(|scope| {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let ctx_ref: &SessionContext = ctx;
            scope.spawn(move || {
                let reader = std::io::BufReader::new(&stream);
                let writer = &stream;
                let _ = serve_lines(ctx_ref, reader, writer);
            });
        }
    });
    Ok(())
}

#[cfg(test)]
#[path = "server_tests.rs"]
mod tests;
