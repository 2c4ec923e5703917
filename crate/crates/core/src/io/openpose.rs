use serde_json::{json, Value};

use super::IoError;
use crate::skeleton::{Keypoint, PoseFrame, NUM_KEYPOINTS};

const POSE_LEN: usize = 3 * NUM_KEYPOINTS;

/// One frame per entry of `people`, keypoint `i` at positions `3i..3i+3` of
/// `pose_keypoints_2d`. Other arrays (hands, face, feet) are ignored. A
/// document without people yields an empty list.
pub fn parse_openpose_json(bytes: &[u8]) -> Result<Vec<PoseFrame>, IoError> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| IoError::MalformedJson(e.to_string()))?;
    let obj = doc.as_object().ok_or_else(|| IoError::MalformedJson("top level is not an object".into()))?;
    let people = match obj.get("people") {
        None | Some(Value::Null) => return Ok(Vec::new()),
        Some(Value::Array(p)) => p,
        Some(_) => return Err(IoError::MalformedJson("\"people\" is not an array".into())),
    };
    people
        .iter()
        .enumerate()
        .map(|(person, entry)| {
            let pose = entry
                .get("pose_keypoints_2d")
                .and_then(Value::as_array)
                .ok_or_else(|| IoError::MalformedJson(format!("person {person}: no pose_keypoints_2d array")))?;
            if pose.len() != POSE_LEN {
                return Err(IoError::WrongArrayLength { person, expected: POSE_LEN, actual: pose.len() });
            }
            let values: Vec<f64> = pose
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| IoError::MalformedJson(format!("person {person}: non-numeric value"))))
                .collect::<Result<_, _>>()?;
            let mut frame = PoseFrame::empty();
            for (kp, v) in frame.keypoints.iter_mut().zip(values.chunks_exact(3)) {
                *kp = Keypoint::new(v[0], v[1], v[2]);
            }
            frame.person_index = person;
            Ok(frame)
        })
        .collect()
}

/// OpenPose-style document holding the frames in order.
pub fn serialize_openpose(frames: &[PoseFrame]) -> String {
    let people: Vec<Value> = frames
        .iter()
        .map(|f| {
            let pose: Vec<f64> = f.keypoints.iter().flat_map(|k| [k.x, k.y, k.confidence]).collect();
            json!({ "person_id": [-1], "pose_keypoints_2d": pose })
        })
        .collect();
    serde_json::to_string(&json!({ "version": 1.3, "people": people })).expect("plain JSON values")
}

/// The person with the largest confidence sum; ties go to the lowest index.
pub fn select_person(frames: &[PoseFrame]) -> Result<PoseFrame, IoError> {
    let mut best: Option<&PoseFrame> = None;
    for f in frames {
        let better = match best {
            None => true,
            Some(b) => {
                let (s, t) = (f.confidence_sum(), b.confidence_sum());
                s > t || (s == t && f.person_index < b.person_index)
            }
        };
        if better {
            best = Some(f);
        }
    }
    best.cloned().ok_or(IoError::EmptyPeople)
}
