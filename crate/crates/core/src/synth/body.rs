use std::collections::BTreeMap;

use nalgebra::{Point3, Rotation3, Unit, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::skeleton::{
    complete_angles, edge_index, AngleName, GeometryError, JointAngleSet, JointSource, KeypointId,
    NUM_KEYPOINTS, SKELETON_EDGES,
};

/// Segment lengths in body-length units (neck to mid-hip = 1 by default).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyProportions {
    pub torso: f64,
    pub shoulder_offset: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    pub hip_offset: f64,
    pub thigh: f64,
    pub shin: f64,
    pub neck_nose: f64,
    pub nose_eye: f64,
    pub eye_ear: f64,
    pub ankle_big_toe: f64,
    pub big_toe_small_toe: f64,
    pub ankle_heel: f64,
}

impl Default for BodyProportions {
    fn default() -> Self {
        Self {
            torso: 1.0,
            shoulder_offset: 0.20,
            upper_arm: 0.35,
            forearm: 0.30,
            hip_offset: 0.12,
            thigh: 0.50,
            shin: 0.45,
            neck_nose: 0.15,
            nose_eye: 0.05,
            eye_ear: 0.07,
            ankle_big_toe: 0.10,
            big_toe_small_toe: 0.05,
            ankle_heel: 0.06,
        }
    }
}

impl BodyProportions {
    /// Length of every skeleton edge, indexed like [`SKELETON_EDGES`].
    pub fn edge_lengths(&self) -> [f64; 24] {
        SKELETON_EDGES.map(|(a, b)| {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            match (lo, hi) {
                (1, 8) => self.torso,
                (1, 2) | (1, 5) => self.shoulder_offset,
                (2, 3) | (5, 6) => self.upper_arm,
                (3, 4) | (6, 7) => self.forearm,
                (8, 9) | (8, 12) => self.hip_offset,
                (9, 10) | (12, 13) => self.thigh,
                (10, 11) | (13, 14) => self.shin,
                (0, 1) => self.neck_nose,
                (0, 15) | (0, 16) => self.nose_eye,
                (15, 17) | (16, 18) => self.eye_ear,
                (14, 19) | (11, 22) => self.ankle_big_toe,
                (19, 20) | (22, 23) => self.big_toe_small_toe,
                (14, 21) | (11, 24) => self.ankle_heel,
                _ => unreachable!("edge ({a}, {b}) not in the BODY_25 tree"),
            }
        })
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.edge_lengths().iter().all(|&l| l > 0.0 && l.is_finite()) {
            Ok(())
        } else {
            Err(SynthError::InvalidConfig("bone lengths must be positive".into()))
        }
    }
}

/// A full 3D skeleton; `bone_lengths` is indexed like [`SKELETON_EDGES`].
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton3D {
    pub joints: [Point3<f64>; NUM_KEYPOINTS],
    pub bone_lengths: [f64; 24],
}

impl Skeleton3D {
    pub fn joint_at(&self, id: KeypointId) -> Point3<f64> {
        self.joints[id.index()]
    }

    pub fn bone_length(&self, i: usize, j: usize) -> Option<f64> {
        edge_index(i, j).map(|e| self.bone_lengths[e])
    }

    /// Largest deviation between an edge's joint distance and its nominal length.
    pub fn max_bone_error(&self) -> f64 {
        SKELETON_EDGES
            .iter()
            .zip(&self.bone_lengths)
            .map(|(&(a, b), &len)| ((self.joints[a as usize] - self.joints[b as usize]).norm() - len).abs())
            .fold(0.0, f64::max)
    }

    /// Largest distance of any joint from the mid-hip.
    pub fn radius(&self) -> f64 {
        let root = self.joints[KeypointId::MID_HIP.index()];
        self.joints.iter().map(|j| (j - root).norm()).fold(0.0, f64::max)
    }
}

impl JointSource<3> for Skeleton3D {
    fn joint(&self, id: KeypointId) -> Option<[f64; 3]> {
        let p = self.joints[id.index()];
        Some([p.x, p.y, p.z])
    }
}

/// Ground-truth interior angles of a 3D skeleton.
pub fn ground_truth_angles(skeleton: &Skeleton3D) -> Result<JointAngleSet, GeometryError> {
    complete_angles(skeleton)
}

/// Parent of every joint in the kinematic tree rooted at the mid-hip, listed
/// in an order where parents precede children.
const KINEMATIC_ORDER: [(usize, usize); 24] = [
    (1, 8),
    (9, 8),
    (12, 8),
    (0, 1),
    (2, 1),
    (5, 1),
    (3, 2),
    (4, 3),
    (6, 5),
    (7, 6),
    (10, 9),
    (11, 10),
    (13, 12),
    (14, 13),
    (15, 0),
    (16, 0),
    (17, 15),
    (18, 16),
    (19, 14),
    (20, 19),
    (21, 14),
    (22, 11),
    (23, 22),
    (24, 11),
];

/// Places joints one bone at a time: child = parent + length · direction.
struct ChainBuilder {
    lengths: [f64; 24],
    joints: [Option<Point3<f64>>; NUM_KEYPOINTS],
}

impl ChainBuilder {
    fn new(proportions: &BodyProportions) -> Self {
        let mut joints = [None; NUM_KEYPOINTS];
        joints[KeypointId::MID_HIP.index()] = Some(Point3::origin());
        Self { lengths: proportions.edge_lengths(), joints }
    }

    fn at(&self, j: usize) -> Point3<f64> {
        self.joints[j].expect("joint placed before use")
    }

    fn place(&mut self, child: usize, direction: Vector3<f64>) {
        let parent = KINEMATIC_ORDER.iter().find(|(c, _)| *c == child).expect("known joint").1;
        let len = self.lengths[edge_index(parent, child).expect("tree edge")];
        self.joints[child] = Some(self.at(parent) + direction.normalize() * len);
    }

    fn finish(self) -> Skeleton3D {
        Skeleton3D { joints: self.joints.map(|j| j.expect("every joint placed")), bone_lengths: self.lengths }
    }
}

/// Lateral sign of a body side: chain 2/3/4 and 9/10/11 sit at −x.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    A,
    B,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::A => -1.0,
            Side::B => 1.0,
        }
    }
}

struct ArmChain {
    shoulder: usize,
    elbow: usize,
    wrist: usize,
    hip: usize,
    side: Side,
}

const ARM_A: ArmChain = ArmChain { shoulder: 2, elbow: 3, wrist: 4, hip: 9, side: Side::A };
const ARM_B: ArmChain = ArmChain { shoulder: 5, elbow: 6, wrist: 7, hip: 12, side: Side::B };

struct LegChain {
    knee: usize,
    ankle: usize,
    big_toe: usize,
    small_toe: usize,
    heel: usize,
    side: Side,
}

const LEG_A: LegChain = LegChain { knee: 10, ankle: 11, big_toe: 22, small_toe: 23, heel: 24, side: Side::A };
const LEG_B: LegChain = LegChain { knee: 13, ankle: 14, big_toe: 19, small_toe: 20, heel: 21, side: Side::B };

/// Rotation by `degrees` in the frontal (x–y) plane.
fn rotate_frontal(v: Vector3<f64>, degrees: f64) -> Vector3<f64> {
    let (s, c) = degrees.to_radians().sin_cos();
    Vector3::new(v.x * c - v.y * s, v.x * s + v.y * c, v.z)
}

fn check_range(name: AngleName, value: f64) -> Result<f64, SynthError> {
    if (0.0..=180.0).contains(&value) {
        Ok(value)
    } else {
        Err(SynthError::InvalidAngle { name, value })
    }
}

/// Places the trunk, shoulders, hips and a head frame given by `up`/`right`.
fn place_torso_and_head(
    b: &mut ChainBuilder,
    trunk: &Rotation3<f64>,
    head_up: Vector3<f64>,
    head_right: Vector3<f64>,
) {
    b.place(1, trunk * Vector3::y());
    b.place(9, -Vector3::x());
    b.place(12, Vector3::x());
    b.place(2, trunk * -Vector3::x());
    b.place(5, trunk * Vector3::x());
    b.place(0, head_up);
    b.place(15, head_up - head_right);
    b.place(16, head_up + head_right);
    b.place(17, -head_right);
    b.place(18, head_right);
}

fn place_feet(b: &mut ChainBuilder, leg: &LegChain, forward: Vector3<f64>, lateral: Vector3<f64>) {
    b.place(leg.big_toe, forward + 0.15 * lateral);
    b.place(leg.small_toe, lateral - 0.3 * forward);
    b.place(leg.heel, -forward - 0.5 * Vector3::y());
}

/// Frontal-plane skeleton with the requested interior angles.
///
/// Supported keys are EL, ER, SL, SR, SL2, SR2, KL, KR and NF; the shoulder
/// pairs SL/SL2 and SR/SR2 each fix the same degree of freedom, so at most
/// one per side may be given. Unspecified joints stand straight with arms
/// hanging.
pub fn build_skeleton(
    config: &BTreeMap<AngleName, f64>,
    proportions: &BodyProportions,
) -> Result<Skeleton3D, SynthError> {
    proportions.validate()?;
    for (&name, &value) in config {
        check_range(name, value)?;
        if !matches!(
            name,
            AngleName::EL
                | AngleName::ER
                | AngleName::SL
                | AngleName::SR
                | AngleName::SL2
                | AngleName::SR2
                | AngleName::KL
                | AngleName::KR
                | AngleName::NF
        ) {
            return Err(SynthError::UnsupportedAngle(name));
        }
    }
    for (a, b) in [(AngleName::SL, AngleName::SL2), (AngleName::SR, AngleName::SR2)] {
        if config.contains_key(&a) && config.contains_key(&b) {
            return Err(SynthError::InconsistentConfig(format!("{a} and {b} cannot both be pinned")));
        }
    }

    let mut b = ChainBuilder::new(proportions);
    let down = -Vector3::y();
    let nf = config.get(&AngleName::NF).copied().unwrap_or(180.0);
    let head_up = rotate_frontal(down, nf);
    let head_right = rotate_frontal(head_up, -90.0);
    place_torso_and_head(&mut b, &Rotation3::identity(), head_up, head_right);

    let arms = [
        (ARM_A, AngleName::SL, AngleName::SL2, AngleName::EL),
        (ARM_B, AngleName::SR, AngleName::SR2, AngleName::ER),
    ];
    for (arm, hip_angle, neck_angle, elbow_angle) in arms {
        let s = arm.side.sign();
        let shoulder = b.at(arm.shoulder);
        let upper = if let Some(&deg) = config.get(&hip_angle) {
            rotate_frontal((b.at(arm.hip) - shoulder).normalize(), s * deg)
        } else if let Some(&deg) = config.get(&neck_angle) {
            rotate_frontal((b.at(1) - shoulder).normalize(), s * deg)
        } else {
            down
        };
        b.place(arm.elbow, upper);
        let elbow = config.get(&elbow_angle).copied().unwrap_or(180.0);
        b.place(arm.wrist, rotate_frontal(-upper.normalize(), s * elbow));
    }

    for (leg, knee_angle) in [(LEG_A, AngleName::KL), (LEG_B, AngleName::KR)] {
        let s = leg.side.sign();
        b.place(leg.knee, down);
        let knee = config.get(&knee_angle).copied().unwrap_or(180.0);
        let shin = rotate_frontal(-down, -s * knee);
        b.place(leg.ankle, shin);
        let lateral = Vector3::x() * s;
        place_feet(&mut b, &leg, lateral, down);
    }

    Ok(b.finish())
}

/// Sampling range `[lo, hi]` in degrees.
pub type DegreeRange = (f64, f64);

/// Interior-angle ranges for the joints the sampler controls exactly:
/// EL, ER, SL, SR, KL and KR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleLimits(pub BTreeMap<AngleName, DegreeRange>);

impl AngleLimits {
    pub const CONTROLLED: [AngleName; 6] =
        [AngleName::EL, AngleName::ER, AngleName::SL, AngleName::SR, AngleName::KL, AngleName::KR];

    pub fn range(&self, name: AngleName) -> DegreeRange {
        self.0.get(&name).copied().unwrap_or_else(|| default_limit(name))
    }

    pub fn with(mut self, name: AngleName, range: DegreeRange) -> Self {
        self.0.insert(name, range);
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        for (&name, &(lo, hi)) in &self.0 {
            if !Self::CONTROLLED.contains(&name) {
                return Err(SynthError::UnsupportedAngle(name));
            }
            if !(0.0 <= lo && lo <= hi && hi <= 180.0) {
                return Err(SynthError::InvalidConfig(format!("{name} range [{lo}, {hi}] not within [0, 180]")));
            }
        }
        Ok(())
    }
}

fn default_limit(name: AngleName) -> DegreeRange {
    match name {
        AngleName::EL | AngleName::ER => (30.0, 180.0),
        AngleName::SL | AngleName::SR => (0.0, 150.0),
        AngleName::KL | AngleName::KR => (60.0, 180.0),
        _ => (0.0, 180.0),
    }
}

impl Default for AngleLimits {
    fn default() -> Self {
        Self(AngleLimits::CONTROLLED.into_iter().map(|a| (a, default_limit(a))).collect())
    }
}

/// Ranges (degrees) for the rotations that shape a sampled posture beyond the
/// controlled interior angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostureRanges {
    /// Keep every joint in the frontal plane.
    pub planar: bool,
    pub trunk_flexion: DegreeRange,
    pub trunk_side_bend: DegreeRange,
    pub trunk_twist: DegreeRange,
    pub neck_flexion: DegreeRange,
    pub neck_side_bend: DegreeRange,
    pub head_twist: DegreeRange,
    /// Direction in which the upper arm leaves the trunk line: 0 is sideways,
    /// 90 straight forward.
    pub arm_raise_plane: DegreeRange,
    pub hip_flexion: DegreeRange,
    pub hip_abduction: DegreeRange,
    /// Spread of the knee bend direction around straight backwards.
    pub knee_bend_spread: DegreeRange,
    /// Direction the forearm swings out of the upper-arm line: 0 is forward,
    /// positive turns toward the body midline.
    pub forearm_roll: DegreeRange,
}

impl Default for PostureRanges {
    fn default() -> Self {
        Self {
            planar: false,
            trunk_flexion: (-10.0, 60.0),
            trunk_side_bend: (-15.0, 15.0),
            trunk_twist: (-25.0, 25.0),
            neck_flexion: (-15.0, 40.0),
            neck_side_bend: (-15.0, 15.0),
            head_twist: (-40.0, 40.0),
            arm_raise_plane: (-30.0, 120.0),
            hip_flexion: (-15.0, 100.0),
            hip_abduction: (-10.0, 30.0),
            knee_bend_spread: (-20.0, 20.0),
            forearm_roll: (-180.0, 180.0),
        }
    }
}

impl PostureRanges {
    /// Frontal-plane postures only: side bends and in-plane limb motion.
    pub fn planar() -> Self {
        Self {
            planar: true,
            trunk_flexion: (0.0, 0.0),
            trunk_twist: (0.0, 0.0),
            neck_flexion: (0.0, 0.0),
            head_twist: (0.0, 0.0),
            arm_raise_plane: (0.0, 0.0),
            hip_flexion: (0.0, 0.0),
            // Only the sign matters in the plane: which way the knee folds.
            knee_bend_spread: (-1.0, 1.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let ranges = [
            self.trunk_flexion,
            self.trunk_side_bend,
            self.trunk_twist,
            self.neck_flexion,
            self.neck_side_bend,
            self.head_twist,
            self.arm_raise_plane,
            self.hip_flexion,
            self.hip_abduction,
            self.knee_bend_spread,
            self.forearm_roll,
        ];
        if ranges.iter().all(|&(lo, hi)| lo <= hi && lo.is_finite() && hi.is_finite()) {
            Ok(())
        } else {
            Err(SynthError::InvalidConfig("posture range with lo > hi".into()))
        }
    }
}

fn axis_rotation(axis: Vector3<f64>, degrees: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Unit::new_normalize(axis), degrees.to_radians())
}

/// Unit vector perpendicular to `axis`, taken from `hint` (or `fallback` when
/// `hint` is nearly parallel).
fn perpendicular(axis: Vector3<f64>, hint: Vector3<f64>, fallback: Vector3<f64>) -> Vector3<f64> {
    let axis = axis.normalize();
    let p = hint - axis * hint.dot(&axis);
    if p.norm() > 1e-6 {
        p.normalize()
    } else {
        let q = fallback - axis * fallback.dot(&axis);
        q.normalize()
    }
}

/// Every scalar that shapes a sampled posture, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PostureParams {
    pub trunk_flexion: f64,
    pub trunk_side_bend: f64,
    pub trunk_twist: f64,
    pub neck_flexion: f64,
    pub neck_side_bend: f64,
    pub head_twist: f64,
    /// Side A (keypoints 2–4, 9–11) first.
    pub arms: [ArmParams; 2],
    pub legs: [LegParams; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ArmParams {
    /// Interior angle between the upper arm and the shoulder-to-hip line.
    pub shoulder: f64,
    pub raise_plane: f64,
    pub elbow: f64,
    pub forearm_roll: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LegParams {
    pub hip_flexion: f64,
    pub hip_abduction: f64,
    pub knee: f64,
    pub knee_bend_spread: f64,
}

/// How posture parameters are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosePrior {
    /// Every parameter independently uniform over its range.
    Independent,
    /// A task posture picked uniformly from [`TASK_POSTURES`], each parameter
    /// perturbed by Gaussian noise with this standard deviation (degrees;
    /// doubled for the forearm roll) and clamped to its range.
    Tasks { spread: f64 },
}

impl Default for PosePrior {
    fn default() -> Self {
        PosePrior::Tasks { spread: 10.0 }
    }
}

impl PosePrior {
    pub fn validate(&self) -> Result<(), SynthError> {
        match *self {
            PosePrior::Tasks { spread } if !(spread >= 0.0 && spread.is_finite()) => {
                Err(SynthError::InvalidConfig(format!("posture spread {spread} must be finite and >= 0")))
            }
            _ => Ok(()),
        }
    }
}

const fn arm(shoulder: f64, raise_plane: f64, elbow: f64, forearm_roll: f64) -> ArmParams {
    ArmParams { shoulder, raise_plane, elbow, forearm_roll }
}

const fn leg(hip_flexion: f64, hip_abduction: f64, knee: f64) -> LegParams {
    LegParams { hip_flexion, hip_abduction, knee, knee_bend_spread: 0.0 }
}

const fn task(trunk: [f64; 3], neck: [f64; 3], arms: [ArmParams; 2], legs: [LegParams; 2]) -> PostureParams {
    PostureParams {
        trunk_flexion: trunk[0],
        trunk_side_bend: trunk[1],
        trunk_twist: trunk[2],
        neck_flexion: neck[0],
        neck_side_bend: neck[1],
        head_twist: neck[2],
        arms,
        legs,
    }
}

/// Prototype work postures: trunk (flexion, side bend, twist), neck (flexion,
/// side bend, twist), arms, legs.
pub const TASK_POSTURES: [(&str, PostureParams); 10] = [
    ("standing", task([0.0, 0.0, 0.0], [5.0, 0.0, 0.0], [arm(10.0, 0.0, 170.0, 0.0); 2], [leg(0.0, 5.0, 175.0); 2])),
    (
        "seated_typing",
        task([10.0, 0.0, 0.0], [20.0, 0.0, 0.0], [arm(25.0, 80.0, 95.0, 20.0); 2], [leg(90.0, 10.0, 90.0); 2]),
    ),
    (
        "seated_mouse",
        task(
            [10.0, 5.0, -10.0],
            [20.0, 0.0, -15.0],
            [arm(25.0, 80.0, 95.0, 20.0), arm(40.0, 30.0, 120.0, 0.0)],
            [leg(90.0, 10.0, 90.0); 2],
        ),
    ),
    (
        "reaching_forward",
        task([20.0, 0.0, 0.0], [10.0, 0.0, 0.0], [arm(80.0, 85.0, 160.0, 0.0); 2], [leg(10.0, 5.0, 170.0); 2]),
    ),
    (
        "overhead",
        task([-5.0, 0.0, 0.0], [-10.0, 0.0, 0.0], [arm(140.0, 60.0, 140.0, -20.0); 2], [leg(0.0, 10.0, 175.0); 2]),
    ),
    (
        "lifting",
        task([50.0, 0.0, 0.0], [10.0, 0.0, 0.0], [arm(50.0, 90.0, 160.0, 0.0); 2], [leg(30.0, 10.0, 130.0); 2]),
    ),
    (
        "carrying",
        task([5.0, 0.0, 0.0], [10.0, 0.0, 0.0], [arm(10.0, 90.0, 90.0, 10.0); 2], [leg(10.0, 5.0, 165.0); 2]),
    ),
    (
        "one_hand_reach",
        task(
            [15.0, -10.0, 20.0],
            [10.0, -5.0, 20.0],
            [arm(20.0, 60.0, 150.0, 0.0), arm(100.0, 40.0, 165.0, 0.0)],
            [leg(10.0, 5.0, 170.0), leg(0.0, 15.0, 175.0)],
        ),
    ),
    (
        "squatting",
        task([30.0, 0.0, 0.0], [15.0, 0.0, 0.0], [arm(45.0, 85.0, 120.0, 10.0); 2], [leg(100.0, 20.0, 70.0); 2]),
    ),
    (
        "side_work",
        task(
            [10.0, 15.0, -25.0],
            [15.0, 10.0, -30.0],
            [arm(60.0, 10.0, 130.0, 0.0), arm(30.0, 50.0, 110.0, 20.0)],
            [leg(0.0, 20.0, 170.0), leg(20.0, 0.0, 150.0)],
        ),
    ),
];

fn uniform(rng: &mut impl Rng, (lo, hi): DegreeRange) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn around(rng: &mut impl Rng, centre: f64, sd: f64, (lo, hi): DegreeRange) -> f64 {
    if lo == hi {
        return lo;
    }
    let noise: f64 = rng.sample(rand_distr::StandardNormal);
    (centre + sd * noise).clamp(lo, hi)
}

impl PostureParams {
    /// Draws parameters under `prior`, respecting every configured range.
    pub fn sample(rng: &mut impl Rng, limits: &AngleLimits, ranges: &PostureRanges, prior: &PosePrior) -> Self {
        let (proto, sd) = match *prior {
            PosePrior::Independent => (None, 0.0),
            PosePrior::Tasks { spread } => (Some(TASK_POSTURES[rng.random_range(0..TASK_POSTURES.len())].1), spread),
        };
        let mut draw = |centre: Option<f64>, sd: f64, range: DegreeRange| match centre {
            Some(c) => around(rng, c, sd, range),
            None => uniform(rng, range),
        };
        let p = proto.as_ref();
        let mut out = PostureParams {
            trunk_flexion: draw(p.map(|p| p.trunk_flexion), sd, ranges.trunk_flexion),
            trunk_side_bend: draw(p.map(|p| p.trunk_side_bend), sd, ranges.trunk_side_bend),
            trunk_twist: draw(p.map(|p| p.trunk_twist), sd, ranges.trunk_twist),
            neck_flexion: draw(p.map(|p| p.neck_flexion), sd, ranges.neck_flexion),
            neck_side_bend: draw(p.map(|p| p.neck_side_bend), sd, ranges.neck_side_bend),
            head_twist: draw(p.map(|p| p.head_twist), sd, ranges.head_twist),
            ..Default::default()
        };
        let arm_angles = [(AngleName::SL, AngleName::EL), (AngleName::SR, AngleName::ER)];
        for (i, (shoulder, elbow)) in arm_angles.into_iter().enumerate() {
            let a = p.map(|p| p.arms[i]);
            out.arms[i] = ArmParams {
                shoulder: draw(a.map(|a| a.shoulder), sd, limits.range(shoulder)),
                raise_plane: draw(a.map(|a| a.raise_plane), sd, ranges.arm_raise_plane),
                elbow: draw(a.map(|a| a.elbow), sd, limits.range(elbow)),
                forearm_roll: draw(a.map(|a| a.forearm_roll), 2.0 * sd, ranges.forearm_roll),
            };
        }
        for (i, knee) in [AngleName::KL, AngleName::KR].into_iter().enumerate() {
            let l = p.map(|p| p.legs[i]);
            out.legs[i] = LegParams {
                hip_flexion: draw(l.map(|l| l.hip_flexion), sd, ranges.hip_flexion),
                hip_abduction: draw(l.map(|l| l.hip_abduction), sd, ranges.hip_abduction),
                knee: draw(l.map(|l| l.knee), sd, limits.range(knee)),
                knee_bend_spread: draw(l.map(|l| l.knee_bend_spread), sd, ranges.knee_bend_spread),
            };
        }
        out
    }
}

/// Builds a skeleton from posture parameters by hierarchy traversal. The
/// shoulder, elbow and knee interior angles are realised exactly; everything
/// else follows from the rotations. With `planar` set, every limb stays in the
/// frontal plane and the sign of `cos(forearm_roll)` picks the bend side.
pub fn posed_skeleton(params: &PostureParams, planar: bool, proportions: &BodyProportions) -> Skeleton3D {
    let mut b = ChainBuilder::new(proportions);
    let x = Vector3::x();
    let y = Vector3::y();
    let z = Vector3::z();
    let rot = |axis: Unit<Vector3<f64>>, deg: f64| Rotation3::from_axis_angle(&axis, deg.to_radians());

    let trunk = rot(Vector3::x_axis(), params.trunk_flexion)
        * rot(Vector3::z_axis(), params.trunk_side_bend)
        * rot(Vector3::y_axis(), params.trunk_twist);
    let head = trunk
        * rot(Vector3::x_axis(), params.neck_flexion)
        * rot(Vector3::z_axis(), params.neck_side_bend)
        * rot(Vector3::y_axis(), params.head_twist);
    place_torso_and_head(&mut b, &trunk, head * y, head * x);

    for (arm, p) in [ARM_A, ARM_B].iter().zip(&params.arms) {
        let s = arm.side.sign();
        let shoulder = b.at(arm.shoulder);
        let to_hip = (b.at(arm.hip) - shoulder).normalize();
        let outward = trunk * (x * s);
        let forward = trunk * z;
        let plane = p.raise_plane.to_radians();
        let raise_dir = perpendicular(to_hip, outward * plane.cos() + forward * plane.sin(), outward);
        let sa = p.shoulder.to_radians();
        let upper = to_hip * sa.cos() + raise_dir * sa.sin();
        b.place(arm.elbow, upper);

        let roll = p.forearm_roll.to_radians();
        let bend_axis = if planar {
            let in_plane = z.cross(&upper).normalize();
            if roll.cos() >= 0.0 {
                in_plane
            } else {
                -in_plane
            }
        } else {
            let r1 = perpendicular(upper, forward, outward);
            // Positive roll turns toward the midline on both sides.
            let r2 = upper.normalize().cross(&r1) * s;
            r1 * roll.cos() + r2 * roll.sin()
        };
        let ea = p.elbow.to_radians();
        b.place(arm.wrist, -upper.normalize() * ea.cos() + bend_axis * ea.sin());
    }

    for (leg, p) in [LEG_A, LEG_B].iter().zip(&params.legs) {
        let s = leg.side.sign();
        let hip_rot = rot(Vector3::z_axis(), s * p.hip_abduction) * rot(Vector3::x_axis(), -p.hip_flexion);
        let thigh = hip_rot * -y;
        b.place(leg.knee, thigh);
        let bend_axis = if planar {
            let in_plane = z.cross(&thigh).normalize();
            if p.knee_bend_spread >= 0.0 {
                in_plane
            } else {
                -in_plane
            }
        } else {
            axis_rotation(thigh, p.knee_bend_spread) * (hip_rot * -z)
        };
        let ka = p.knee.to_radians();
        b.place(leg.ankle, -thigh * ka.cos() + bend_axis * ka.sin());
        if planar {
            place_feet(&mut b, leg, x * s, -y);
        } else {
            place_feet(&mut b, leg, z, x * s);
        }
    }

    b.finish()
}

/// Random posture: parameters drawn under `prior`, skeleton by [`posed_skeleton`].
/// Ground truth is read back with [`ground_truth_angles`].
pub fn sample_skeleton(
    rng: &mut impl Rng,
    limits: &AngleLimits,
    posture: &PostureRanges,
    prior: &PosePrior,
    proportions: &BodyProportions,
) -> Skeleton3D {
    let params = PostureParams::sample(rng, limits, posture, prior);
    posed_skeleton(&params, posture.planar, proportions)
}
