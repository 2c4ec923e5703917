use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{Skeleton3D, SynthError};
use crate::skeleton::{Keypoint, PoseFrame, NUM_KEYPOINTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Projection {
    Orthographic,
    Pinhole,
}

/// A viewpoint orbiting the subject.
///
/// Azimuth 0 looks at the subject's front, 90 at its left profile; positive
/// elevation looks down from above. The camera aims at [`CameraSpec::TARGET`].
/// Pinhole cameras sit `distance` away with focal length `focal` (pixels);
/// orthographic cameras use the same `focal / distance` pixels per unit, so a
/// pinhole camera converges to its orthographic twin as the distance grows
/// with the ratio held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub mode: Projection,
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: f64,
    pub focal: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            mode: Projection::Pinhole,
            azimuth: 0.0,
            elevation: 0.0,
            distance: 6.0,
            focal: 900.0,
            width: 640,
            height: 480,
        }
    }
}

impl CameraSpec {
    /// Aim point in body coordinates, slightly above the mid-hip.
    pub const TARGET: Point3<f64> = Point3::new(0.0, 0.1, 0.0);

    pub fn orthographic(azimuth: f64, elevation: f64) -> Self {
        Self { mode: Projection::Orthographic, azimuth, elevation, ..Self::default() }
    }

    pub fn pinhole(azimuth: f64, elevation: f64) -> Self {
        Self { mode: Projection::Pinhole, azimuth, elevation, ..Self::default() }
    }

    pub fn pixels_per_unit(&self) -> f64 {
        self.focal / self.distance
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let ok = self.distance > 0.0
            && self.focal > 0.0
            && self.width > 0
            && self.height > 0
            && self.azimuth.is_finite()
            && self.elevation.is_finite()
            && self.distance.is_finite()
            && self.focal.is_finite();
        if ok {
            Ok(())
        } else {
            Err(SynthError::InvalidConfig(format!("invalid camera {self:?}")))
        }
    }

    /// Camera basis `(right, up, back)`; `back` points from the target to the camera.
    fn basis(&self) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let (sa, ca) = self.azimuth.to_radians().sin_cos();
        let (se, ce) = self.elevation.to_radians().sin_cos();
        let back = Vector3::new(sa * ce, se, ca * ce);
        let right = Vector3::new(ca, 0.0, -sa);
        let up = back.cross(&right);
        (right, up, back)
    }
}

/// Projects every joint to pixels with confidence 1.
pub fn project(skeleton: &Skeleton3D, camera: &CameraSpec) -> Result<PoseFrame, SynthError> {
    camera.validate()?;
    let (right, up, back) = camera.basis();
    let cx = f64::from(camera.width) / 2.0;
    let cy = f64::from(camera.height) / 2.0;
    let mut keypoints = [Keypoint::MISSING; NUM_KEYPOINTS];
    for (kp, joint) in keypoints.iter_mut().zip(&skeleton.joints) {
        let rel = joint - CameraSpec::TARGET;
        let (xc, yc, zc) = (rel.dot(&right), rel.dot(&up), rel.dot(&back));
        let scale = match camera.mode {
            Projection::Orthographic => camera.pixels_per_unit(),
            Projection::Pinhole => {
                let depth = camera.distance - zc;
                if depth <= 1e-6 {
                    return Err(SynthError::BehindCamera);
                }
                camera.focal / depth
            }
        };
        *kp = Keypoint::new(cx + scale * xc, cy - scale * yc, 1.0);
    }
    Ok(PoseFrame::new(keypoints))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{apparent_angles_2d, AngleName};
    use crate::synth::{build_skeleton, ground_truth_angles, BodyProportions};

    fn bent_pose() -> Skeleton3D {
        let cfg = [(AngleName::EL, 70.0), (AngleName::SL, 60.0), (AngleName::KR, 120.0)];
        build_skeleton(&cfg.into_iter().collect(), &BodyProportions::default()).unwrap()
    }

    #[test]
    fn frontal_orthographic_preserves_angles() {
        let skel = bent_pose();
        let truth = ground_truth_angles(&skel).unwrap();
        let seen = apparent_angles_2d(&project(&skel, &CameraSpec::orthographic(0.0, 0.0)).unwrap());
        for (name, t) in truth.present() {
            assert!((seen.get(name).unwrap() - t).abs() < 1e-6, "{name}");
        }
    }

    #[test]
    fn profile_view_distorts_frontal_angles() {
        let skel = bent_pose();
        let truth = ground_truth_angles(&skel).unwrap();
        let frame = project(&skel, &CameraSpec::orthographic(90.0, 0.0)).unwrap();
        // Frontal-plane offsets collapse: the shoulders project onto the neck.
        assert!((frame.keypoints[2].x - frame.keypoints[1].x).abs() < 1e-9);
        let seen = apparent_angles_2d(&frame);
        let sl = seen.get(AngleName::SL).unwrap();
        assert!((sl - truth.get(AngleName::SL).unwrap()).abs() > 1.0);
    }

    #[test]
    fn subject_right_appears_on_image_left() {
        let skel = bent_pose();
        let frame = project(&skel, &CameraSpec::pinhole(0.0, 0.0)).unwrap();
        assert!(frame.keypoints[2].x < frame.keypoints[5].x);
        // Image y grows downward: the neck sits above the mid-hip.
        assert!(frame.keypoints[1].y < frame.keypoints[8].y);
    }

    #[test]
    fn pinhole_converges_to_orthographic() {
        let skel = bent_pose();
        let ortho = project(&skel, &CameraSpec { azimuth: 30.0, elevation: 15.0, ..CameraSpec::orthographic(0.0, 0.0) })
            .unwrap();
        let ratio = CameraSpec::default().pixels_per_unit();
        let mut last = f64::MAX;
        for distance in [1e2, 1e4, 1e6] {
            let cam = CameraSpec { distance, focal: ratio * distance, ..CameraSpec::pinhole(30.0, 15.0) };
            let persp = project(&skel, &cam).unwrap();
            let err = ortho
                .keypoints
                .iter()
                .zip(&persp.keypoints)
                .map(|(a, b)| (a.x - b.x).abs().max((a.y - b.y).abs()))
                .fold(0.0, f64::max);
            assert!(err < last);
            last = err;
        }
        assert!(last < 1e-3, "{last}");
    }

    #[test]
    fn camera_inside_the_body_is_rejected() {
        let skel = bent_pose();
        // Looking straight down from just above the hips: the head is past the lens.
        let cam = CameraSpec { distance: 0.3, ..CameraSpec::pinhole(0.0, 90.0) };
        assert!(matches!(project(&skel, &cam), Err(SynthError::BehindCamera)));
    }
}
