//! JSON text frames exchanged over `/ws`.

use serde::{Deserialize, Serialize};

use crate::sim::GestureKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Reset,
    Pause,
    Resume,
    /// World bearing from the human anchor (the agent's start pose),
    /// degrees, east = 0, counterclockwise.
    Point { bearing_deg: f64 },
    Intervene,
    SetPace { sps: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    StateUpdate(Box<StateUpdate>),
    Error { code: String },
}

impl ServerMessage {
    pub fn error(code: &str) -> Self {
        ServerMessage::Error { code: code.to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseMsg {
    pub x: f64,
    pub y: f64,
    pub heading_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMsg {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayMsg {
    pub angle_deg: f64,
    pub depth_m: f64,
    pub category: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectMsg {
    pub instance: u32,
    pub category: u32,
    pub anchor: PointMsg,
    /// `[col, row]` pairs.
    pub cells: Vec<[i32; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetMsg {
    pub category: u32,
    pub instance: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMsg {
    pub scene_id: String,
    pub width_m: f64,
    pub height_m: f64,
    pub cols: usize,
    pub rows: usize,
    /// Row-major, row 0 is the southern edge, 1 = blocked.
    pub grid: Vec<u8>,
}

/// What is on the gesture channel for the agent's next step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GestureMsg {
    pub human: bool,
    /// World bearing of the latest human point command.
    pub bearing_deg: Option<f64>,
    pub template: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMsg {
    pub steps: u32,
    pub stops: u32,
    pub done: bool,
    pub success: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TalliesMsg {
    pub sr: f64,
    pub spl: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub seq: u64,
    pub session_id: String,
    pub paused: bool,
    pub pace_sps: f64,
    pub pose: PoseMsg,
    /// Human anchor: the episode's start pose.
    pub anchor: PoseMsg,
    pub trajectory: Vec<PointMsg>,
    pub rays: Vec<RayMsg>,
    pub objects: Vec<ObjectMsg>,
    pub target: TargetMsg,
    pub gesture_kind: GestureKind,
    pub gesture: GestureMsg,
    pub last_reward: f64,
    pub episode: EpisodeMsg,
    pub tallies: TalliesMsg,
    pub scene: SceneMsg,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_messages_parse() {
        let cases = [
            (r#"{"type":"reset"}"#, ClientMessage::Reset),
            (r#"{"type":"pause"}"#, ClientMessage::Pause),
            (r#"{"type":"resume"}"#, ClientMessage::Resume),
            (r#"{"type":"point","bearing_deg":30}"#, ClientMessage::Point { bearing_deg: 30.0 }),
            (r#"{"type":"intervene"}"#, ClientMessage::Intervene),
            (r#"{"type":"set_pace","sps":8.5}"#, ClientMessage::SetPace { sps: 8.5 }),
        ];
        for (text, want) in cases {
            assert_eq!(serde_json::from_str::<ClientMessage>(text).unwrap(), want);
        }
        for bad in [r#"{"type":"jump"}"#, r#"{"type":"point"}"#, "not json", r#"{"bearing_deg":1}"#] {
            assert!(serde_json::from_str::<ClientMessage>(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn error_frame_shape() {
        let v = serde_json::to_value(ServerMessage::error("bad_message")).unwrap();
        assert_eq!(v, serde_json::json!({"type": "error", "code": "bad_message"}));
    }
}
