use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use serde_json::{Map, Value};

use super::{write_atomic, IoError};
use crate::skeleton::{AngleName, JointAngleSet, Keypoint, KeypointId, PoseFrame, NUM_KEYPOINTS};
use crate::synth::{CameraSpec, PoseSample, Projection};

/// One sample per line. Every real number is written with six decimals, so
/// re-serialising a file that was read back reproduces it byte for byte.
pub fn write_dataset(samples: &[PoseSample], out: &mut dyn Write) -> std::io::Result<()> {
    let mut line = String::new();
    for s in samples {
        line.clear();
        format_sample(s, &mut line);
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

fn format_sample(s: &PoseSample, out: &mut String) {
    write!(out, "{{\"id\":{},\"kp\":[", s.sample_id).unwrap();
    for (i, k) in s.frame.keypoints.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "[{:.6},{:.6},{:.6}]", k.x, k.y, k.confidence).unwrap();
    }
    out.push_str("],\"angles\":{");
    for (i, (name, v)) in s.truth.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        match v {
            Some(v) => write!(out, "\"{name}\":{v:.6}").unwrap(),
            None => write!(out, "\"{name}\":null").unwrap(),
        }
    }
    let c = &s.camera;
    let mode = match c.mode {
        Projection::Orthographic => "orthographic",
        Projection::Pinhole => "pinhole",
    };
    write!(
        out,
        "}},\"camera\":{{\"mode\":\"{mode}\",\"azimuth\":{:.6},\"elevation\":{:.6},\"distance\":{:.6},\"focal\":{:.6},\"width\":{},\"height\":{}}},\"occluded\":[",
        c.azimuth, c.elevation, c.distance, c.focal, c.width, c.height
    )
    .unwrap();
    for (i, id) in s.occluded.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{}", id.index()).unwrap();
    }
    out.push_str("]}");
}

/// Reads a JSON Lines dataset. Blank lines are skipped; line numbers in
/// errors count from 1.
pub fn read_dataset(input: &mut dyn BufRead) -> Result<Vec<PoseSample>, IoError> {
    let mut samples = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| IoError::MalformedLine { line: line_no, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        samples.push(parse_sample(&line, line_no)?);
    }
    Ok(samples)
}

fn parse_sample(line: &str, line_no: usize) -> Result<PoseSample, IoError> {
    let malformed = |message: String| IoError::MalformedLine { line: line_no, message };
    let schema = |message: String| IoError::SchemaMismatch { line: line_no, message };

    let value: Value = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| malformed("not a JSON object".into()))?;
    let field = |key: &str| obj.get(key).ok_or_else(|| malformed(format!("missing \"{key}\"")));

    let sample_id = field("id")?.as_u64().ok_or_else(|| schema("\"id\" is not a non-negative integer".into()))?;

    let kp = field("kp")?.as_array().ok_or_else(|| schema("\"kp\" is not an array".into()))?;
    if kp.len() != NUM_KEYPOINTS {
        return Err(schema(format!("\"kp\" has {} entries, expected {NUM_KEYPOINTS}", kp.len())));
    }
    let mut frame = PoseFrame::empty();
    for (i, (slot, entry)) in frame.keypoints.iter_mut().zip(kp).enumerate() {
        let t = number_array(entry).filter(|t| t.len() == 3).ok_or_else(|| schema(format!("kp[{i}] is not [x, y, c]")))?;
        *slot = Keypoint::new(t[0], t[1], t[2]);
    }
    frame.source_id = format!("sample-{sample_id}");

    let angles = field("angles")?.as_object().ok_or_else(|| schema("\"angles\" is not an object".into()))?;
    let truth = parse_angles(angles).map_err(schema)?;

    let camera = parse_camera(field("camera")?).map_err(schema)?;

    let occluded = field("occluded")?
        .as_array()
        .ok_or_else(|| schema("\"occluded\" is not an array".into()))?
        .iter()
        .map(|v| {
            v.as_u64()
                .and_then(|i| KeypointId::new(i as usize).ok())
                .ok_or_else(|| schema(format!("invalid occluded keypoint {v}")))
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(PoseSample { frame, truth, camera, occluded, sample_id })
}

fn number_array(v: &Value) -> Option<Vec<f64>> {
    v.as_array()?.iter().map(Value::as_f64).collect()
}

fn parse_angles(obj: &Map<String, Value>) -> Result<JointAngleSet, String> {
    let mut set = JointAngleSet::new();
    for name in AngleName::ALL {
        match obj.get(name.acronym()) {
            None => return Err(format!("angle {name} missing")),
            Some(Value::Null) => {}
            Some(v) => {
                let d = v.as_f64().filter(|d| (0.0..=180.0).contains(d));
                set.set(name, d.ok_or_else(|| format!("angle {name}: {v} is not a degree value in [0, 180]"))?);
            }
        }
    }
    if obj.len() != AngleName::ALL.len() {
        return Err("unknown keys in \"angles\"".into());
    }
    Ok(set)
}

fn parse_camera(v: &Value) -> Result<CameraSpec, String> {
    let camera: CameraSpec = serde_json::from_value(v.clone()).map_err(|e| format!("camera: {e}"))?;
    camera.validate().map_err(|e| e.to_string())?;
    Ok(camera)
}

pub fn save_dataset(path: &Path, samples: &[PoseSample]) -> Result<(), IoError> {
    write_atomic(path, |w| write_dataset(samples, w).map_err(|e| IoError::io(path, e)))
}

pub fn load_dataset(path: &Path) -> Result<Vec<PoseSample>, IoError> {
    let file = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    read_dataset(&mut std::io::BufReader::new(file))
}
