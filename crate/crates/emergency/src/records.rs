//! One-frame-per-line JSON records.
//!
//! Canonical line:
//!
//! ```text
//! {"t":1200,"label":1,"marker":[231.5,140.0],"skeletons":[{"id":0,"kp":[[x,y,conf,depth|null], ...25]}]}
//! ```
//!
//! Other layouts are read through a [`FieldMapping`].

use emergency_core::data::{ClassLabel, Keypoint, PoseFrame, Skeleton, NUM_KEYPOINTS};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RecordError {
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("unknown label id {0}")]
    UnknownLabel(i64),
}

fn malformed(msg: impl Into<String>) -> RecordError {
    RecordError::MalformedRecord(msg.into())
}

/// How keypoints of one skeleton are laid out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KeypointLayout {
    /// 25 arrays of `[x, y, conf, depth|null]`.
    #[default]
    Tuples,
    /// One flat array of 75 numbers, `x, y, conf` per keypoint (OpenPose
    /// style), depth optionally in a separate 25-entry array.
    FlatXyc,
}

/// Field names of a foreign record layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldMapping {
    pub timestamp: String,
    pub label: String,
    pub marker: String,
    pub skeletons: String,
    pub person_id: String,
    pub keypoints: String,
    pub layout: KeypointLayout,
    /// Per-skeleton depth array, only read with [`KeypointLayout::FlatXyc`].
    pub depth: Option<String>,
    /// Multiplier turning the timestamp field into milliseconds.
    pub timestamp_scale: f64,
}

impl Default for FieldMapping {
    fn default() -> Self {
        FieldMapping {
            timestamp: "t".into(),
            label: "label".into(),
            marker: "marker".into(),
            skeletons: "skeletons".into(),
            person_id: "id".into(),
            keypoints: "kp".into(),
            layout: KeypointLayout::Tuples,
            depth: None,
            timestamp_scale: 1.0,
        }
    }
}

pub fn parse_frame_record(line: &str) -> Result<PoseFrame, RecordError> {
    parse_frame_record_with(line, &FieldMapping::default())
}

pub fn parse_frame_record_with(line: &str, mapping: &FieldMapping) -> Result<PoseFrame, RecordError> {
    let value: Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| malformed("record is not an object"))?;

    let t = field(obj, &mapping.timestamp)?;
    let timestamp_ms = match (t.as_i64(), t.as_f64()) {
        (Some(i), _) if mapping.timestamp_scale == 1.0 => i,
        (_, Some(f)) => (f * mapping.timestamp_scale).round() as i64,
        _ => return Err(malformed(format!("{} is not a number", mapping.timestamp))),
    };

    let label_id = field(obj, &mapping.label)?
        .as_i64()
        .ok_or_else(|| malformed(format!("{} is not an integer", mapping.label)))?;
    let label = u8::try_from(label_id)
        .ok()
        .and_then(|id| ClassLabel::try_from(id).ok())
        .ok_or(RecordError::UnknownLabel(label_id))?;

    let marker_px = match obj.get(&mapping.marker) {
        None | Some(Value::Null) => None,
        Some(m) => {
            let xy = numbers(m, 2).ok_or_else(|| malformed("marker must be [x, y] or null"))?;
            Some((xy[0], xy[1]))
        }
    };

    let skeletons = field(obj, &mapping.skeletons)?
        .as_array()
        .ok_or_else(|| malformed(format!("{} is not an array", mapping.skeletons)))?
        .iter()
        .map(|s| parse_skeleton(s, mapping))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(PoseFrame { timestamp_ms, skeletons, marker_px, label })
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value, RecordError> {
    obj.get(name).ok_or_else(|| malformed(format!("missing field {name}")))
}

fn numbers(v: &Value, len: usize) -> Option<Vec<f64>> {
    let arr = v.as_array()?;
    if arr.len() != len {
        return None;
    }
    arr.iter().map(Value::as_f64).collect()
}

fn parse_skeleton(v: &Value, mapping: &FieldMapping) -> Result<Skeleton, RecordError> {
    let obj = v.as_object().ok_or_else(|| malformed("skeleton is not an object"))?;
    let id = field(obj, &mapping.person_id)?
        .as_u64()
        .and_then(|i| u32::try_from(i).ok())
        .ok_or_else(|| malformed("person id is not a non-negative integer"))?;
    let kp = field(obj, &mapping.keypoints)?
        .as_array()
        .ok_or_else(|| malformed("keypoints are not an array"))?;

    let mut keypoints = [Keypoint::MISSING; NUM_KEYPOINTS];
    match mapping.layout {
        KeypointLayout::Tuples => {
            if kp.len() != NUM_KEYPOINTS {
                return Err(malformed(format!("expected {NUM_KEYPOINTS} keypoints, found {}", kp.len())));
            }
            for (i, (slot, entry)) in keypoints.iter_mut().zip(kp).enumerate() {
                let tuple = entry
                    .as_array()
                    .filter(|a| a.len() == 4)
                    .ok_or_else(|| malformed(format!("keypoint {i} is not [x, y, conf, depth]")))?;
                let num = |j: usize| tuple[j].as_f64().ok_or_else(|| malformed(format!("keypoint {i} field {j} is not a number")));
                let depth = match &tuple[3] {
                    Value::Null => None,
                    d => Some(d.as_f64().ok_or_else(|| malformed(format!("keypoint {i} depth is not a number")))?),
                };
                *slot = Keypoint::new(num(0)?, num(1)?, num(2)?, depth);
            }
        }
        KeypointLayout::FlatXyc => {
            let flat = numbers(&Value::Array(kp.clone()), NUM_KEYPOINTS * 3)
                .ok_or_else(|| malformed(format!("expected {} numbers", NUM_KEYPOINTS * 3)))?;
            let depths: Vec<Option<f64>> = match mapping.depth.as_deref().and_then(|d| obj.get(d)) {
                None | Some(Value::Null) => vec![None; NUM_KEYPOINTS],
                Some(Value::Array(a)) if a.len() == NUM_KEYPOINTS => a.iter().map(Value::as_f64).collect(),
                Some(_) => return Err(malformed(format!("depth must hold {NUM_KEYPOINTS} entries"))),
            };
            for (i, slot) in keypoints.iter_mut().enumerate() {
                *slot = Keypoint::new(flat[3 * i], flat[3 * i + 1], flat[3 * i + 2], depths[i]);
            }
        }
    }
    Ok(Skeleton::new(keypoints, id))
}

/// Canonical one-line encoding; [`parse_frame_record`] inverts it.
pub fn serialize_frame_record(frame: &PoseFrame) -> String {
    let skeletons: Vec<Value> = frame
        .skeletons
        .iter()
        .map(|s| {
            let kp: Vec<Value> =
                s.keypoints.iter().map(|k| json!([k.x_px, k.y_px, k.confidence, k.depth_m])).collect();
            json!({"id": s.person_index, "kp": kp})
        })
        .collect();
    let record = json!({
        "t": frame.timestamp_ms,
        "label": frame.label.id(),
        "marker": frame.marker_px.map(|(x, y)| [x, y]),
        "skeletons": skeletons,
    });
    record.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame() -> PoseFrame {
        let mut kps = [Keypoint::MISSING; NUM_KEYPOINTS];
        for (i, k) in kps.iter_mut().enumerate() {
            *k = Keypoint::new(10.0 + i as f64 * 3.1, 20.5 + i as f64, 0.8, Some(2.25 + i as f64 * 0.01));
        }
        kps[10] = Keypoint::MISSING;
        kps[3] = Keypoint::new(1.0, 2.0, 0.4, None);
        PoseFrame {
            timestamp_ms: 1200,
            skeletons: vec![Skeleton::new(kps, 3)],
            marker_px: Some((231.5, 140.0)),
            label: ClassLabel::Emergency,
        }
    }

    #[test]
    fn round_trip() {
        let f = frame();
        let line = serialize_frame_record(&f);
        assert!(!line.contains('\n'));
        assert_eq!(parse_frame_record(&line).unwrap(), f);
    }

    #[test]
    fn zero_confidence_is_missing() {
        let mut v: Value = serde_json::from_str(&serialize_frame_record(&frame())).unwrap();
        v["skeletons"][0]["kp"][10] = json!([55.0, 66.0, 0.0, 2.0]);
        let parsed = parse_frame_record(&v.to_string()).unwrap();
        let k = parsed.skeletons[0].keypoints[10];
        assert!(k.is_missing());
        assert_eq!((k.x_px, k.y_px), (0.0, 0.0));
    }

    #[test]
    fn rejects_bad_labels_and_shapes() {
        let mut v: Value = serde_json::from_str(&serialize_frame_record(&frame())).unwrap();
        v["label"] = json!(7);
        assert_eq!(parse_frame_record(&v.to_string()), Err(RecordError::UnknownLabel(7)));

        let mut short: Value = serde_json::from_str(&serialize_frame_record(&frame())).unwrap();
        short["skeletons"][0]["kp"].as_array_mut().unwrap().pop();
        assert!(matches!(parse_frame_record(&short.to_string()), Err(RecordError::MalformedRecord(_))));

        assert!(matches!(parse_frame_record("{\"t\": 0}"), Err(RecordError::MalformedRecord(_))));
        assert!(matches!(parse_frame_record("not json"), Err(RecordError::MalformedRecord(_))));
    }

    #[test]
    fn flat_openpose_layout() {
        let mut flat = Vec::new();
        for i in 0..NUM_KEYPOINTS {
            flat.extend([i as f64, 2.0 * i as f64, if i == 4 { 0.0 } else { 0.9 }]);
        }
        let line = json!({
            "time_s": 1.5,
            "cls": 2,
            "people": [{"pid": 1, "pose_keypoints_2d": flat, "depth": vec![3.0; NUM_KEYPOINTS]}],
        })
        .to_string();
        let mapping = FieldMapping {
            timestamp: "time_s".into(),
            label: "cls".into(),
            skeletons: "people".into(),
            person_id: "pid".into(),
            keypoints: "pose_keypoints_2d".into(),
            layout: KeypointLayout::FlatXyc,
            depth: Some("depth".into()),
            timestamp_scale: 1000.0,
            ..FieldMapping::default()
        };
        let f = parse_frame_record_with(&line, &mapping).unwrap();
        assert_eq!(f.timestamp_ms, 1500);
        assert_eq!(f.label, ClassLabel::Pause);
        assert_eq!(f.marker_px, None);
        let s = &f.skeletons[0];
        assert_eq!(s.person_index, 1);
        assert_eq!(s.keypoints[7].position(), (7.0, 14.0));
        assert_eq!(s.keypoints[7].depth_m, Some(3.0));
        assert!(s.keypoints[4].is_missing());
    }
}
