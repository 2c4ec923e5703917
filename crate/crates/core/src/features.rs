//! Pose normalisation and the pairwise relation tensor fed to the regressors.

use rayon::prelude::*;
use thiserror::Error;

use crate::skeleton::{adjacency_matrix, JointAngleSet, KeypointId, PoseFrame, NUM_KEYPOINTS};
use crate::synth::PoseSample;

/// Channels per keypoint pair: Δx, Δy, distance, min confidence, adjacency.
pub const CHANNELS: usize = 5;

const CELLS: usize = NUM_KEYPOINTS * NUM_KEYPOINTS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("neither mid-hip (8) nor neck (1) is present")]
    NoAnchor,
    #[error("only {0} keypoints present, at least 2 required")]
    TooFewKeypoints(usize),
    #[error("present keypoints are coincident; no usable scale")]
    DegenerateScale,
}

/// Keypoints translated to an anchor and divided by a body scale.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPose {
    /// `(x, y, confidence)`; missing keypoints are all zero.
    pub keypoints: [[f64; 3]; NUM_KEYPOINTS],
    pub present: [bool; NUM_KEYPOINTS],
}

/// Translate so the anchor (mid-hip, else neck) is the origin and scale so the
/// neck–mid-hip distance is 1. Without both torso ends the bounding-box
/// diagonal of the present keypoints is the unit.
pub fn normalize_pose(frame: &PoseFrame) -> Result<NormalizedPose, FeatureError> {
    let present: [bool; NUM_KEYPOINTS] = std::array::from_fn(|i| frame.keypoints[i].is_present());
    let count = present.iter().filter(|&&p| p).count();
    if count < 2 {
        return Err(FeatureError::TooFewKeypoints(count));
    }
    let hip = KeypointId::MID_HIP.index();
    let neck = KeypointId::NECK.index();
    let anchor = if present[hip] {
        hip
    } else if present[neck] {
        neck
    } else {
        return Err(FeatureError::NoAnchor);
    };
    let kp = &frame.keypoints;
    let scale = if present[hip] && present[neck] {
        (kp[neck].x - kp[hip].x).hypot(kp[neck].y - kp[hip].y)
    } else {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for k in kp.iter().zip(&present).filter(|(_, &p)| p).map(|(k, _)| k) {
            x0 = x0.min(k.x);
            y0 = y0.min(k.y);
            x1 = x1.max(k.x);
            y1 = y1.max(k.y);
        }
        (x1 - x0).hypot(y1 - y0)
    };
    if !(scale > 1e-9) || !scale.is_finite() {
        return Err(FeatureError::DegenerateScale);
    }
    let (ax, ay) = (kp[anchor].x, kp[anchor].y);
    let keypoints = std::array::from_fn(|i| {
        if present[i] {
            [(kp[i].x - ax) / scale, (kp[i].y - ay) / scale, kp[i].confidence]
        } else {
            [0.0; 3]
        }
    });
    Ok(NormalizedPose { keypoints, present })
}

/// 25×25×5 pairwise features with a 25×25 presence mask, stored row-major
/// as `[i, j, channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationTensor {
    pub features: Vec<f64>,
    pub mask: Vec<f64>,
}

impl RelationTensor {
    pub fn zeros() -> Self {
        Self { features: vec![0.0; CELLS * CHANNELS], mask: vec![0.0; CELLS] }
    }

    pub fn feature(&self, i: usize, j: usize, channel: usize) -> f64 {
        self.features[(i * NUM_KEYPOINTS + j) * CHANNELS + channel]
    }

    pub fn cell(&self, i: usize, j: usize) -> &[f64] {
        let at = (i * NUM_KEYPOINTS + j) * CHANNELS;
        &self.features[at..at + CHANNELS]
    }

    pub fn is_masked_in(&self, i: usize, j: usize) -> bool {
        self.mask[i * NUM_KEYPOINTS + j] != 0.0
    }
}

pub fn relation_tensor(pose: &NormalizedPose) -> RelationTensor {
    let adjacency = adjacency_matrix();
    let mut t = RelationTensor::zeros();
    for i in 0..NUM_KEYPOINTS {
        for j in 0..NUM_KEYPOINTS {
            if !(pose.present[i] && pose.present[j]) {
                continue;
            }
            let cell = i * NUM_KEYPOINTS + j;
            t.mask[cell] = 1.0;
            if i == j {
                continue;
            }
            let [xi, yi, ci] = pose.keypoints[i];
            let [xj, yj, cj] = pose.keypoints[j];
            let (dx, dy) = (xj - xi, yj - yi);
            let f = &mut t.features[cell * CHANNELS..(cell + 1) * CHANNELS];
            f[0] = dx;
            f[1] = dy;
            f[2] = dx.hypot(dy);
            f[3] = ci.min(cj);
            f[4] = if adjacency[i][j] { 1.0 } else { 0.0 };
        }
    }
    t
}

/// Normalise then build the tensor.
pub fn frame_tensor(frame: &PoseFrame) -> Result<RelationTensor, FeatureError> {
    normalize_pose(frame).map(|p| relation_tensor(&p))
}

/// Tensors with their ground-truth angles, ready for training or evaluation.
#[derive(Debug, Clone, Default)]
pub struct TensorBatch {
    pub tensors: Vec<RelationTensor>,
    pub truths: Vec<JointAngleSet>,
    /// Sample ids kept, parallel to `tensors`.
    pub sample_ids: Vec<u64>,
    /// Samples that could not be normalised.
    pub dropped: Vec<(u64, FeatureError)>,
}

impl TensorBatch {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }
}

pub fn batch_tensors(samples: &[PoseSample]) -> TensorBatch {
    let results: Vec<_> = samples.par_iter().map(|s| frame_tensor(&s.frame)).collect();
    let mut batch = TensorBatch::default();
    for (sample, result) in samples.iter().zip(results) {
        match result {
            Ok(t) => {
                batch.tensors.push(t);
                batch.truths.push(sample.truth);
                batch.sample_ids.push(sample.sample_id);
            }
            Err(e) => batch.dropped.push((sample.sample_id, e)),
        }
    }
    batch
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::Keypoint;

    fn standing_frame() -> PoseFrame {
        // Pixel coordinates of a rough frontal pose, y down.
        let pts = [
            (0, 320.0, 100.0),
            (1, 320.0, 130.0),
            (2, 290.0, 130.0),
            (3, 285.0, 180.0),
            (4, 283.0, 225.0),
            (5, 350.0, 130.0),
            (6, 355.0, 180.0),
            (7, 357.0, 225.0),
            (8, 320.0, 280.0),
            (9, 302.0, 280.0),
            (10, 300.0, 355.0),
            (11, 300.0, 420.0),
            (12, 338.0, 280.0),
            (13, 340.0, 355.0),
            (14, 340.0, 420.0),
            (15, 315.0, 95.0),
            (16, 325.0, 95.0),
            (17, 308.0, 98.0),
            (18, 332.0, 98.0),
        ];
        let mut frame = PoseFrame::empty();
        for (i, x, y) in pts {
            frame.keypoints[i] = Keypoint::new(x, y, 0.9);
        }
        frame
    }

    #[test]
    fn torso_has_unit_length() {
        let p = normalize_pose(&standing_frame()).unwrap();
        assert_eq!(p.keypoints[8], [0.0, 0.0, 0.9]);
        let [x, y, _] = p.keypoints[1];
        assert!((x.hypot(y) - 1.0).abs() < 1e-12);
        let t = relation_tensor(&p);
        assert!((t.feature(1, 8, 2) - 1.0).abs() < 1e-12);
        assert_eq!(t.feature(1, 8, 4), 1.0);
        assert_eq!(t.feature(1, 8, 3), 0.9);
    }

    #[test]
    fn translation_and_scale_invariance() {
        let frame = standing_frame();
        let base = frame_tensor(&frame).unwrap();
        let mut moved = frame.clone();
        for k in moved.keypoints.iter_mut().filter(|k| k.is_present()) {
            k.x = 2.0 * k.x + 100.0;
            k.y = 2.0 * k.y + 50.0;
        }
        let t = frame_tensor(&moved).unwrap();
        for (a, b) in base.features.iter().zip(&t.features) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(base.mask, t.mask);
    }

    #[test]
    fn falls_back_to_neck_and_bounding_box() {
        let mut frame = standing_frame();
        frame.clear(KeypointId::MID_HIP);
        let p = normalize_pose(&frame).unwrap();
        assert_eq!(&p.keypoints[1][..2], &[0.0, 0.0]);
        assert!(!p.present[8]);
        // Bounding box of the remaining points becomes the unit diagonal.
        let xs: Vec<f64> = (0..25).filter(|&i| p.present[i]).map(|i| p.keypoints[i][0]).collect();
        let ys: Vec<f64> = (0..25).filter(|&i| p.present[i]).map(|i| p.keypoints[i][1]).collect();
        let w = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
        let h = ys.iter().cloned().fold(f64::MIN, f64::max) - ys.iter().cloned().fold(f64::MAX, f64::min);
        assert!((w.hypot(h) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn anchor_and_count_errors() {
        let mut frame = PoseFrame::empty();
        assert_eq!(normalize_pose(&frame), Err(FeatureError::TooFewKeypoints(0)));
        frame.keypoints[3] = Keypoint::new(1.0, 1.0, 1.0);
        frame.keypoints[4] = Keypoint::new(2.0, 1.0, 1.0);
        assert_eq!(normalize_pose(&frame), Err(FeatureError::NoAnchor));
        frame.keypoints[1] = Keypoint::new(2.0, 1.0, 1.0);
        frame.keypoints[8] = Keypoint::new(2.0, 1.0, 1.0);
        assert_eq!(normalize_pose(&frame), Err(FeatureError::DegenerateScale));
    }

    #[test]
    fn missing_keypoint_masks_its_row_and_column_only() {
        let full = frame_tensor(&standing_frame()).unwrap();
        let mut frame = standing_frame();
        frame.clear(KeypointId::of(4));
        let t = frame_tensor(&frame).unwrap();
        for i in 0..25 {
            for j in 0..25 {
                if i == 4 || j == 4 {
                    assert!(!t.is_masked_in(i, j));
                    assert!(t.cell(i, j).iter().all(|&v| v == 0.0));
                } else {
                    assert_eq!(t.cell(i, j), full.cell(i, j));
                    assert_eq!(t.is_masked_in(i, j), full.is_masked_in(i, j));
                }
            }
        }
    }
}
