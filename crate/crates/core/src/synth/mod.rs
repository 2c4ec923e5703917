//! Labelled pose data by construction: forward-kinematics skeletons projected
//! from chosen viewpoints, then corrupted by occlusion and detector noise.

mod body;
mod camera;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::skeleton::{AngleName, GeometryError, JointAngleSet, KeypointId, PoseFrame};

pub use body::{
    build_skeleton, ground_truth_angles, posed_skeleton, sample_skeleton, AngleLimits, ArmParams, BodyProportions,
    DegreeRange, LegParams, PosePrior, PostureParams, PostureRanges, Skeleton3D, TASK_POSTURES,
};
pub use camera::{project, CameraSpec, Projection};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("{name} = {value} is outside [0, 180]")]
    InvalidAngle { name: AngleName, value: f64 },
    #[error("inconsistent configuration: {0}")]
    InconsistentConfig(String),
    #[error("{0} cannot be set by this builder")]
    UnsupportedAngle(AngleName),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("a joint lies at or behind the pinhole camera plane")]
    BehindCamera,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("sample {index}: {source}")]
    Sample {
        index: u64,
        #[source]
        source: Box<SynthError>,
    },
}

/// Named groups of keypoints hidden together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimbChain {
    RightArm,
    LeftArm,
    RightLeg,
    LeftLeg,
    Head,
}

impl LimbChain {
    pub const ALL: [LimbChain; 5] =
        [LimbChain::RightArm, LimbChain::LeftArm, LimbChain::RightLeg, LimbChain::LeftLeg, LimbChain::Head];

    pub fn keypoints(self) -> &'static [u8] {
        match self {
            LimbChain::RightArm => &[2, 3, 4],
            LimbChain::LeftArm => &[5, 6, 7],
            LimbChain::RightLeg => &[9, 10, 11, 22, 23, 24],
            LimbChain::LeftLeg => &[12, 13, 14, 19, 20, 21],
            LimbChain::Head => &[0, 15, 16, 17, 18],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LimbChain::RightArm => "right_arm",
            LimbChain::LeftArm => "left_arm",
            LimbChain::RightLeg => "right_leg",
            LimbChain::LeftLeg => "left_leg",
            LimbChain::Head => "head",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcclusionPolicy {
    None,
    /// Each keypoint hidden independently with this probability.
    Random(f64),
    Limb(LimbChain),
}

impl OcclusionPolicy {
    pub fn validate(&self) -> Result<(), SynthError> {
        match *self {
            OcclusionPolicy::Random(p) if !(0.0..=1.0).contains(&p) => {
                Err(SynthError::InvalidConfig(format!("occlusion probability {p} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for OcclusionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OcclusionPolicy::None => f.write_str("none"),
            OcclusionPolicy::Random(p) => write!(f, "random:{p}"),
            OcclusionPolicy::Limb(chain) => write!(f, "limb:{}", chain.name()),
        }
    }
}

impl FromStr for OcclusionPolicy {
    type Err = SynthError;

    /// `none`, `random:<p>` or `limb:<chain>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SynthError::InvalidConfig(format!("unrecognised occlusion policy {s:?}"));
        let policy = match s.split_once(':') {
            None if s == "none" => OcclusionPolicy::None,
            Some(("random", p)) => OcclusionPolicy::Random(p.parse().map_err(|_| bad())?),
            Some(("limb", name)) => OcclusionPolicy::Limb(
                LimbChain::ALL.into_iter().find(|c| c.name() == name).ok_or_else(bad)?,
            ),
            _ => return Err(bad()),
        };
        policy.validate()?;
        Ok(policy)
    }
}

/// Hides keypoints according to `policy`; returns the frame and the hidden ids.
pub fn apply_occlusion(
    frame: &PoseFrame,
    policy: &OcclusionPolicy,
    rng: &mut impl Rng,
) -> (PoseFrame, Vec<KeypointId>) {
    let mut out = frame.clone();
    let hidden: Vec<KeypointId> = match *policy {
        OcclusionPolicy::None => Vec::new(),
        OcclusionPolicy::Random(p) => KeypointId::all().filter(|_| rng.random_bool(p)).collect(),
        OcclusionPolicy::Limb(chain) => chain.keypoints().iter().map(|&i| KeypointId::of(i)).collect(),
    };
    for &id in &hidden {
        out.clear(id);
    }
    (out, hidden)
}

/// Gaussian localisation noise on present keypoints plus a fresh confidence
/// in `[0.5, 1]`. Missing keypoints are left untouched.
pub fn apply_jitter(frame: &PoseFrame, sigma: f64, rng: &mut impl Rng) -> Result<PoseFrame, SynthError> {
    let invalid = || SynthError::InvalidConfig(format!("jitter sigma {sigma} must be finite and >= 0"));
    if !(sigma >= 0.0) {
        return Err(invalid());
    }
    let noise = Normal::new(0.0, sigma).map_err(|_| invalid())?;
    let mut out = frame.clone();
    for kp in out.keypoints.iter_mut().filter(|k| k.is_present()) {
        if sigma > 0.0 {
            kp.x += noise.sample(rng);
            kp.y += noise.sample(rng);
        }
        kp.confidence = rng.random_range(0.5..=1.0);
    }
    Ok(out)
}

/// Where each sample's camera comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraSource {
    /// Pick one of these uniformly per sample.
    Fixed(Vec<CameraSpec>),
    /// Draw azimuth and elevation uniformly; other fields from `base`.
    Ranges { base: CameraSpec, azimuth: DegreeRange, elevation: DegreeRange },
}

impl CameraSource {
    /// `count` cameras evenly spaced in azimuth at one elevation.
    pub fn ring(count: usize, elevation: f64, base: CameraSpec) -> Self {
        CameraSource::Fixed(
            (0..count)
                .map(|k| CameraSpec { azimuth: 360.0 * k as f64 / count as f64, elevation, ..base })
                .collect(),
        )
    }

    fn validate(&self) -> Result<(), SynthError> {
        match self {
            CameraSource::Fixed(cams) if cams.is_empty() => {
                Err(SynthError::InvalidConfig("camera list is empty".into()))
            }
            CameraSource::Fixed(cams) => cams.iter().try_for_each(CameraSpec::validate),
            CameraSource::Ranges { base, azimuth, elevation } => {
                if azimuth.0 > azimuth.1 || elevation.0 > elevation.1 {
                    return Err(SynthError::InvalidConfig("camera range with lo > hi".into()));
                }
                base.validate()
            }
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> CameraSpec {
        match self {
            CameraSource::Fixed(cams) => cams[rng.random_range(0..cams.len())],
            CameraSource::Ranges { base, azimuth, elevation } => {
                let pick = |rng: &mut _, (lo, hi): DegreeRange| if lo == hi { lo } else { Rng::random_range(rng, lo..=hi) };
                CameraSpec { azimuth: pick(rng, *azimuth), elevation: pick(rng, *elevation), ..*base }
            }
        }
    }
}

/// One labelled training example.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSample {
    pub frame: PoseFrame,
    /// Computed from the 3D skeleton before projection; all sixteen present.
    pub truth: JointAngleSet,
    pub camera: CameraSpec,
    pub occluded: Vec<KeypointId>,
    pub sample_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub count: usize,
    pub seed: u64,
    pub occlusion: OcclusionPolicy,
    pub cameras: CameraSource,
    /// Localisation noise in pixels.
    pub jitter_sigma: f64,
    pub angle_limits: AngleLimits,
    pub posture: PostureRanges,
    pub prior: PosePrior,
    pub proportions: BodyProportions,
    /// Offset added to sample ids, so separately generated splits stay distinct.
    pub first_id: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            count: 1000,
            seed: 0,
            occlusion: OcclusionPolicy::None,
            cameras: CameraSource::ring(8, 10.0, CameraSpec::default()),
            jitter_sigma: 0.0,
            angle_limits: AngleLimits::default(),
            posture: PostureRanges::default(),
            prior: PosePrior::default(),
            proportions: BodyProportions::default(),
            first_id: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.count == 0 {
            return Err(SynthError::InvalidConfig("count must be positive".into()));
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(SynthError::InvalidConfig("jitter sigma must be finite and >= 0".into()));
        }
        self.occlusion.validate()?;
        self.cameras.validate()?;
        self.angle_limits.validate()?;
        self.posture.validate()?;
        self.prior.validate()?;
        self.proportions.validate()
    }
}

/// Independent random stream for sample `index`: ChaCha keyed by the seed,
/// stream number = index.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Sample `index` of the dataset described by `spec`.
pub fn generate_one(spec: &DatasetSpec, index: u64) -> Result<PoseSample, SynthError> {
    let mut rng = sample_rng(spec.seed, index);
    let skeleton = sample_skeleton(&mut rng, &spec.angle_limits, &spec.posture, &spec.prior, &spec.proportions);
    let truth = ground_truth_angles(&skeleton)?;
    let camera = spec.cameras.draw(&mut rng);
    let projected = project(&skeleton, &camera)?;
    let (occluded_frame, occluded) = apply_occlusion(&projected, &spec.occlusion, &mut rng);
    let mut frame = apply_jitter(&occluded_frame, spec.jitter_sigma, &mut rng)?;
    let sample_id = spec.first_id + index;
    frame.source_id = format!("sample-{sample_id}");
    Ok(PoseSample { frame, truth, camera, occluded, sample_id })
}

/// Generates `spec.count` samples. Each sample depends only on `(seed, index)`,
/// so the result is identical for any degree of parallelism.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<PoseSample>, SynthError> {
    spec.validate()?;
    (0..spec.count as u64)
        .into_par_iter()
        .map(|i| generate_one(spec, i).map_err(|e| SynthError::Sample { index: i, source: Box::new(e) }))
        .collect()
}
