//! BODY_25 keypoint vocabulary, the sixteen RULA joint-angle definitions and
//! the interior-angle geometry shared by ground truth and the 2D baseline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of keypoints in the BODY_25 model.
pub const NUM_KEYPOINTS: usize = 25;

/// Number of RULA-relevant joint angles.
pub const NUM_ANGLES: usize = 16;

/// A keypoint counts as detected when its confidence reaches this value.
pub const PRESENCE_THRESHOLD: f64 = 0.05;

/// Rays shorter than this are treated as coincident points.
pub const MIN_RAY_LENGTH: f64 = 1e-9;

const KEYPOINT_NAMES: [&str; NUM_KEYPOINTS] = [
    "Nose",
    "Neck",
    "RShoulder",
    "RElbow",
    "RWrist",
    "LShoulder",
    "LElbow",
    "LWrist",
    "MidHip",
    "RHip",
    "RKnee",
    "RAnkle",
    "LHip",
    "LKnee",
    "LAnkle",
    "REye",
    "LEye",
    "REar",
    "LEar",
    "LBigToe",
    "LSmallToe",
    "LHeel",
    "RBigToe",
    "RSmallToe",
    "RHeel",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate angle triple: a ray at the vertex has near-zero length")]
    DegenerateTriple,
    #[error("keypoint index {0} is outside 0..25")]
    InvalidKeypoint(usize),
    #[error("unknown angle name {0:?}")]
    UnknownAngle(String),
}

/// Index of one BODY_25 keypoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct KeypointId(u8);

impl KeypointId {
    pub const NOSE: Self = Self(0);
    pub const NECK: Self = Self(1);
    pub const MID_HIP: Self = Self(8);

    pub fn new(index: usize) -> Result<Self, GeometryError> {
        if index < NUM_KEYPOINTS {
            Ok(Self(index as u8))
        } else {
            Err(GeometryError::InvalidKeypoint(index))
        }
    }

    /// `const` constructor for table literals; panics on an out-of-range index.
    pub const fn of(index: u8) -> Self {
        assert!((index as usize) < NUM_KEYPOINTS);
        Self(index)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        KEYPOINT_NAMES[self.index()]
    }

    pub fn all() -> impl Iterator<Item = KeypointId> {
        (0..NUM_KEYPOINTS as u8).map(KeypointId)
    }
}

impl TryFrom<usize> for KeypointId {
    type Error = GeometryError;

    fn try_from(value: usize) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<KeypointId> for usize {
    fn from(id: KeypointId) -> usize {
        id.index()
    }
}

impl fmt::Display for KeypointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name(), self.0)
    }
}

/// One detected body part: pixel position plus detector confidence.
///
/// Missing parts are encoded as `(0, 0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub const MISSING: Keypoint = Keypoint { x: 0.0, y: 0.0, confidence: 0.0 };

    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Self { x, y, confidence }
    }

    pub fn is_present(&self) -> bool {
        self.confidence >= PRESENCE_THRESHOLD
    }
}

/// The 25 keypoints of one detected person.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    pub keypoints: [Keypoint; NUM_KEYPOINTS],
    pub source_id: String,
    pub person_index: usize,
}

impl PoseFrame {
    pub fn new(keypoints: [Keypoint; NUM_KEYPOINTS]) -> Self {
        Self { keypoints, source_id: String::new(), person_index: 0 }
    }

    pub fn empty() -> Self {
        Self::new([Keypoint::MISSING; NUM_KEYPOINTS])
    }

    pub fn keypoint(&self, id: KeypointId) -> &Keypoint {
        &self.keypoints[id.index()]
    }

    pub fn is_present(&self, id: KeypointId) -> bool {
        self.keypoint(id).is_present()
    }

    /// Marks a keypoint as undetected, zeroing its coordinates.
    pub fn clear(&mut self, id: KeypointId) {
        self.keypoints[id.index()] = Keypoint::MISSING;
    }

    pub fn present_count(&self) -> usize {
        self.keypoints.iter().filter(|k| k.is_present()).count()
    }

    pub fn confidence_sum(&self) -> f64 {
        self.keypoints.iter().map(|k| k.confidence).sum()
    }
}

/// The sixteen RULA-relevant angles, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AngleName {
    EL,
    ER,
    SL,
    SR,
    SL2,
    SR2,
    KL,
    KR,
    NT,
    NBL,
    NBR,
    NF,
    TTR,
    TTL,
    TB,
    TF,
}

impl AngleName {
    pub const ALL: [AngleName; NUM_ANGLES] = [
        AngleName::EL,
        AngleName::ER,
        AngleName::SL,
        AngleName::SR,
        AngleName::SL2,
        AngleName::SR2,
        AngleName::KL,
        AngleName::KR,
        AngleName::NT,
        AngleName::NBL,
        AngleName::NBR,
        AngleName::NF,
        AngleName::TTR,
        AngleName::TTL,
        AngleName::TB,
        AngleName::TF,
    ];

    /// Position in table order.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn acronym(self) -> &'static str {
        match self {
            AngleName::EL => "EL",
            AngleName::ER => "ER",
            AngleName::SL => "SL",
            AngleName::SR => "SR",
            AngleName::SL2 => "SL2",
            AngleName::SR2 => "SR2",
            AngleName::KL => "KL",
            AngleName::KR => "KR",
            AngleName::NT => "NT",
            AngleName::NBL => "NBL",
            AngleName::NBR => "NBR",
            AngleName::NF => "NF",
            AngleName::TTR => "TTR",
            AngleName::TTL => "TTL",
            AngleName::TB => "TB",
            AngleName::TF => "TF",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AngleName::EL => "Left elbow",
            AngleName::ER => "Right elbow",
            AngleName::SL => "Left shoulder",
            AngleName::SR => "Right shoulder",
            AngleName::SL2 => "Left shoulder 2",
            AngleName::SR2 => "Right shoulder 2",
            AngleName::KL => "Left knee",
            AngleName::KR => "Right knee",
            AngleName::NT => "Neck twisting",
            AngleName::NBL => "Neck bending left",
            AngleName::NBR => "Neck bending right",
            AngleName::NF => "Neck flexion",
            AngleName::TTR => "Trunk twisting right",
            AngleName::TTL => "Trunk twisting left",
            AngleName::TB => "Trunk bending",
            AngleName::TF => "Trunk flexion",
        }
    }

    pub fn definition(self) -> &'static AngleDefinition {
        &ANGLE_DEFINITIONS[self.index()]
    }
}

impl fmt::Display for AngleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.acronym())
    }
}

impl FromStr for AngleName {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AngleName::ALL
            .into_iter()
            .find(|a| a.acronym().eq_ignore_ascii_case(s))
            .ok_or_else(|| GeometryError::UnknownAngle(s.to_string()))
    }
}

impl Serialize for AngleName {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.acronym())
    }
}

impl<'de> Deserialize<'de> for AngleName {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One point of an angle triple: a keypoint or a derived midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointSpec {
    Joint(KeypointId),
    /// Midpoint of the two ears (17, 18).
    MiddleEar,
    /// Midpoint of the two knees (10, 13).
    MidKnee,
}

impl PointSpec {
    /// Keypoints this point depends on.
    pub fn constituents(self) -> &'static [KeypointId] {
        const EARS: [KeypointId; 2] = [KeypointId::of(17), KeypointId::of(18)];
        const KNEES: [KeypointId; 2] = [KeypointId::of(10), KeypointId::of(13)];
        match self {
            PointSpec::Joint(id) => std::slice::from_ref(&JOINT_SLOTS[id.index()]),
            PointSpec::MiddleEar => &EARS,
            PointSpec::MidKnee => &KNEES,
        }
    }
}

const JOINT_SLOTS: [KeypointId; NUM_KEYPOINTS] = {
    let mut slots = [KeypointId(0); NUM_KEYPOINTS];
    let mut i = 0;
    while i < NUM_KEYPOINTS {
        slots[i] = KeypointId(i as u8);
        i += 1;
    }
    slots
};

/// An interior angle `∠(a, vertex, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AngleDefinition {
    pub name: AngleName,
    pub point_a: PointSpec,
    pub vertex: PointSpec,
    pub point_c: PointSpec,
}

impl AngleDefinition {
    pub fn points(&self) -> [PointSpec; 3] {
        [self.point_a, self.vertex, self.point_c]
    }

    /// Every keypoint the angle needs, including midpoint constituents.
    pub fn keypoints(&self) -> Vec<KeypointId> {
        let mut ids: Vec<KeypointId> =
            self.points().iter().flat_map(|p| p.constituents().iter().copied()).collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

const fn joint(i: u8) -> PointSpec {
    PointSpec::Joint(KeypointId::of(i))
}

const fn def(name: AngleName, a: PointSpec, b: PointSpec, c: PointSpec) -> AngleDefinition {
    AngleDefinition { name, point_a: a, vertex: b, point_c: c }
}

static ANGLE_DEFINITIONS: [AngleDefinition; NUM_ANGLES] = [
    def(AngleName::EL, joint(4), joint(3), joint(2)),
    def(AngleName::ER, joint(5), joint(6), joint(7)),
    def(AngleName::SL, joint(3), joint(2), joint(9)),
    def(AngleName::SR, joint(6), joint(5), joint(12)),
    def(AngleName::SL2, joint(3), joint(2), joint(1)),
    def(AngleName::SR2, joint(6), joint(5), joint(1)),
    def(AngleName::KL, joint(9), joint(10), joint(11)),
    def(AngleName::KR, joint(12), joint(13), joint(14)),
    def(AngleName::NT, PointSpec::MiddleEar, joint(1), joint(2)),
    def(AngleName::NBL, joint(17), joint(1), joint(2)),
    def(AngleName::NBR, joint(18), joint(1), joint(5)),
    def(AngleName::NF, joint(0), joint(1), joint(8)),
    def(AngleName::TTR, joint(2), joint(8), joint(9)),
    def(AngleName::TTL, joint(5), joint(8), joint(12)),
    def(AngleName::TB, joint(9), joint(8), joint(1)),
    def(AngleName::TF, PointSpec::MidKnee, joint(8), joint(1)),
];

/// All sixteen angle definitions in table order.
pub fn angle_definitions() -> &'static [AngleDefinition; NUM_ANGLES] {
    &ANGLE_DEFINITIONS
}

/// The BODY_25 skeleton tree as unordered keypoint pairs.
pub const SKELETON_EDGES: [(u8, u8); 24] = [
    (1, 8),
    (1, 2),
    (1, 5),
    (2, 3),
    (3, 4),
    (5, 6),
    (6, 7),
    (8, 9),
    (9, 10),
    (10, 11),
    (8, 12),
    (12, 13),
    (13, 14),
    (1, 0),
    (0, 15),
    (15, 17),
    (0, 16),
    (16, 18),
    (14, 19),
    (19, 20),
    (14, 21),
    (11, 22),
    (22, 23),
    (11, 24),
];

/// Position of the edge `{i, j}` in [`SKELETON_EDGES`], in either order.
pub fn edge_index(i: usize, j: usize) -> Option<usize> {
    SKELETON_EDGES.iter().position(|&(a, b)| {
        let (a, b) = (a as usize, b as usize);
        (a == i && b == j) || (a == j && b == i)
    })
}

/// 25×25 adjacency matrix of the skeleton tree.
pub fn adjacency_matrix() -> [[bool; NUM_KEYPOINTS]; NUM_KEYPOINTS] {
    let mut adj = [[false; NUM_KEYPOINTS]; NUM_KEYPOINTS];
    for &(a, b) in &SKELETON_EDGES {
        adj[a as usize][b as usize] = true;
        adj[b as usize][a as usize] = true;
    }
    adj
}

/// Interior angle at `b` between rays `b→a` and `b→c`, in degrees.
///
/// This is `acos` of the normalised dot product, evaluated as
/// `2·atan2(|û − ĉ|, |û + ĉ|)`, which stays accurate near 0° and 180° where
/// `acos` loses about half the significant digits.
pub fn angle_at_vertex<const D: usize>(
    a: [f64; D],
    b: [f64; D],
    c: [f64; D],
) -> Result<f64, GeometryError> {
    let mut ba = [0.0; D];
    let mut bc = [0.0; D];
    for k in 0..D {
        ba[k] = a[k] - b[k];
        bc[k] = c[k] - b[k];
    }
    let norm_a = ba.iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm_c = bc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm_a > MIN_RAY_LENGTH && norm_c > MIN_RAY_LENGTH) {
        return Err(GeometryError::DegenerateTriple);
    }
    let (mut diff, mut sum) = (0.0, 0.0);
    for k in 0..D {
        let (u, v) = (ba[k] / norm_a, bc[k] / norm_c);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    let angle = 2.0 * diff.sqrt().atan2(sum.sqrt());
    Ok(angle.to_degrees().clamp(0.0, 180.0))
}

/// Anything that can supply keypoint coordinates in `D` dimensions.
pub trait JointSource<const D: usize> {
    /// Coordinates of a keypoint, or `None` when it is not available.
    fn joint(&self, id: KeypointId) -> Option<[f64; D]>;
}

impl JointSource<2> for PoseFrame {
    fn joint(&self, id: KeypointId) -> Option<[f64; 2]> {
        let kp = self.keypoint(id);
        kp.is_present().then_some([kp.x, kp.y])
    }
}

fn resolve_point<S: JointSource<D>, const D: usize>(source: &S, spec: PointSpec) -> Option<[f64; D]> {
    match spec {
        PointSpec::Joint(id) => source.joint(id),
        PointSpec::MiddleEar | PointSpec::MidKnee => {
            let ids = spec.constituents();
            let p = source.joint(ids[0])?;
            let q = source.joint(ids[1])?;
            let mut mid = [0.0; D];
            for k in 0..D {
                mid[k] = 0.5 * (p[k] + q[k]);
            }
            Some(mid)
        }
    }
}

/// Concrete `(a, vertex, c)` coordinates for a definition, or `None` when any
/// required keypoint is missing.
pub fn resolve_points<S: JointSource<D>, const D: usize>(
    source: &S,
    def: &AngleDefinition,
) -> Option<[[f64; D]; 3]> {
    Some([
        resolve_point(source, def.point_a)?,
        resolve_point(source, def.vertex)?,
        resolve_point(source, def.point_c)?,
    ])
}

/// The sixteen angles, each possibly undefined.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointAngleSet {
    values: [Option<f64>; NUM_ANGLES],
}

impl JointAngleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: AngleName) -> Option<f64> {
        self.values[name.index()]
    }

    /// Stores a value; values outside `[0, 180]` are clamped into range.
    pub fn set(&mut self, name: AngleName, degrees: f64) {
        self.values[name.index()] = Some(degrees.clamp(0.0, 180.0));
    }

    pub fn clear(&mut self, name: AngleName) {
        self.values[name.index()] = None;
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    pub fn iter(&self) -> impl Iterator<Item = (AngleName, Option<f64>)> + '_ {
        AngleName::ALL.into_iter().map(|n| (n, self.values[n.index()]))
    }

    pub fn present(&self) -> impl Iterator<Item = (AngleName, f64)> + '_ {
        self.iter().filter_map(|(n, v)| v.map(|v| (n, v)))
    }
}

impl FromIterator<(AngleName, f64)> for JointAngleSet {
    fn from_iter<T: IntoIterator<Item = (AngleName, f64)>>(iter: T) -> Self {
        let mut set = JointAngleSet::new();
        for (name, v) in iter {
            set.set(name, v);
        }
        set
    }
}

// Serialized as an object keyed by acronym in table order; absent angles are `null`.
impl Serialize for JointAngleSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(NUM_ANGLES))?;
        for (name, v) in self.iter() {
            map.serialize_entry(name.acronym(), &v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for JointAngleSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = std::collections::BTreeMap::<String, Option<f64>>::deserialize(deserializer)?;
        let mut set = JointAngleSet::new();
        for (key, value) in raw {
            let name: AngleName = key.parse().map_err(serde::de::Error::custom)?;
            if let Some(v) = value {
                if !(0.0..=180.0).contains(&v) {
                    return Err(serde::de::Error::custom(format!("{key}: {v} outside [0, 180]")));
                }
                set.set(name, v);
            }
        }
        Ok(set)
    }
}

/// Apparent 2D angles together with the definitions that hit degenerate geometry.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ApparentAngles {
    pub angles: JointAngleSet,
    pub degenerate: Vec<AngleName>,
}

/// Geometric baseline: interior angles read directly off the detected keypoints.
pub fn apparent_angles_2d(pose: &PoseFrame) -> JointAngleSet {
    apparent_angles_2d_with_diagnostics(pose).angles
}

pub fn apparent_angles_2d_with_diagnostics(pose: &PoseFrame) -> ApparentAngles {
    let mut out = ApparentAngles::default();
    for def in angle_definitions() {
        let Some([a, b, c]) = resolve_points(pose, def) else {
            continue;
        };
        match angle_at_vertex(a, b, c) {
            Ok(v) => out.angles.set(def.name, v),
            Err(_) => {
                log::debug!("{}: coincident keypoints in {}", def.name, pose.source_id);
                out.degenerate.push(def.name);
            }
        }
    }
    out
}

/// All sixteen angles of a fully known joint set (e.g. a 3D skeleton).
pub fn complete_angles<S: JointSource<D>, const D: usize>(
    source: &S,
) -> Result<JointAngleSet, GeometryError> {
    let mut set = JointAngleSet::new();
    for def in angle_definitions() {
        let [a, b, c] = resolve_points(source, def).ok_or(GeometryError::DegenerateTriple)?;
        set.set(def.name, angle_at_vertex(a, b, c)?);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame_from(points: &[(usize, f64, f64)]) -> PoseFrame {
        let mut frame = PoseFrame::empty();
        for &(i, x, y) in points {
            frame.keypoints[i] = Keypoint::new(x, y, 1.0);
        }
        frame
    }

    #[test]
    fn trivial_vertex_angles() {
        assert!((angle_at_vertex([2.0, 0.0], [0.0, 0.0], [0.0, 3.0]).unwrap() - 90.0).abs() < 1e-9);
        assert!((angle_at_vertex([0.0, 0.0], [1.0, 0.0], [2.0, 0.0]).unwrap() - 180.0).abs() < 1e-9);
        assert!((angle_at_vertex([1.0, 0.0], [0.0, 0.0], [1.0, 1.0]).unwrap() - 45.0).abs() < 1e-9);
        let three = angle_at_vertex([1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 5.0]).unwrap();
        assert!((three - 90.0).abs() < 1e-9);
    }

    #[test]
    fn coincident_points_are_degenerate() {
        assert_eq!(
            angle_at_vertex([1.0, 1.0], [1.0, 1.0], [0.0, 3.0]),
            Err(GeometryError::DegenerateTriple)
        );
    }

    #[test]
    fn nearly_collinear_stays_in_range() {
        let v = angle_at_vertex([1e8, 1e-9], [0.0, 0.0], [-1e8, 0.0]).unwrap();
        assert!((0.0..=180.0).contains(&v));
        let w = angle_at_vertex([1.0, 0.0], [0.0, 0.0], [3.0, 1e-12]).unwrap();
        assert!((0.0..=180.0).contains(&w) && !w.is_nan());
    }

    #[test]
    fn definitions_follow_table_order() {
        let defs = angle_definitions();
        for (def, name) in defs.iter().zip(AngleName::ALL) {
            assert_eq!(def.name, name);
        }
        let el = AngleName::EL.definition();
        assert_eq!(el.points(), [joint(4), joint(3), joint(2)]);
        let nt = AngleName::NT.definition();
        assert_eq!(nt.points(), [PointSpec::MiddleEar, joint(1), joint(2)]);
        let tf = AngleName::TF.definition();
        assert_eq!(tf.points(), [PointSpec::MidKnee, joint(8), joint(1)]);
    }

    #[test]
    fn acronyms_round_trip() {
        for name in AngleName::ALL {
            assert_eq!(name.acronym().parse::<AngleName>().unwrap(), name);
        }
        assert!("XX".parse::<AngleName>().is_err());
    }

    #[test]
    fn edges_form_a_tree() {
        // 24 edges on 25 nodes: connected implies acyclic.
        let adj = adjacency_matrix();
        let mut seen = [false; NUM_KEYPOINTS];
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            if std::mem::replace(&mut seen[n], true) {
                continue;
            }
            stack.extend((0..NUM_KEYPOINTS).filter(|&m| adj[n][m] && !seen[m]));
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(SKELETON_EDGES.len(), NUM_KEYPOINTS - 1);
    }

    #[test]
    fn middle_ear_substitution() {
        let mut frame = frame_from(&[(1, 0.0, 0.0), (2, -1.0, 0.0), (17, -0.5, 2.0), (18, 0.75, 2.0)]);
        let [a, b, c] = resolve_points(&frame, AngleName::NT.definition()).unwrap();
        assert_eq!(a, [0.125, 2.0]);
        assert_eq!(b, [0.0, 0.0]);
        assert_eq!(c, [-1.0, 0.0]);
        frame.clear(KeypointId::of(17));
        assert!(resolve_points(&frame, AngleName::NT.definition()).is_none());
    }

    #[test]
    fn missing_keypoint_only_affects_its_angles() {
        let mut frame = frame_from(&[
            (2, 0.0, 0.0),
            (3, 0.0, 1.0),
            (4, 1.0, 1.0),
            (9, 0.0, 3.0),
            (10, 0.0, 4.0),
            (11, 0.5, 5.0),
        ]);
        frame.clear(KeypointId::of(4));
        assert!(resolve_points(&frame, AngleName::EL.definition()).is_none());
        assert!(resolve_points(&frame, AngleName::KL.definition()).is_some());
    }

    #[test]
    fn low_confidence_counts_as_missing() {
        let mut frame = frame_from(&[(2, 0.0, 0.0), (3, 0.0, 1.0), (4, 1.0, 1.0)]);
        frame.keypoints[3].confidence = 0.049;
        assert!(resolve_points(&frame, AngleName::EL.definition()).is_none());
        frame.keypoints[3].confidence = PRESENCE_THRESHOLD;
        assert!(resolve_points(&frame, AngleName::EL.definition()).is_some());
    }

    #[test]
    fn missing_arm_chain_blanks_its_angles() {
        let mut frame = frame_from(&[
            (0, 0.0, -1.2),
            (1, 0.0, -1.0),
            (2, -0.2, -1.0),
            (3, -0.2, -0.6),
            (4, -0.2, -0.3),
            (5, 0.2, -1.0),
            (6, 0.2, -0.6),
            (7, 0.2, -0.3),
            (8, 0.0, 0.0),
            (9, -0.1, 0.0),
            (12, 0.1, 0.0),
        ]);
        for i in [2, 3, 4] {
            frame.clear(KeypointId::of(i));
        }
        let angles = apparent_angles_2d(&frame);
        for name in [AngleName::EL, AngleName::SL, AngleName::SL2, AngleName::TTR] {
            assert_eq!(angles.get(name), None, "{name}");
        }
        assert!(angles.get(AngleName::ER).is_some());
        assert!(angles.get(AngleName::SR).is_some());
    }

    #[test]
    fn angle_set_json_is_keyed_by_acronym() {
        let mut set = JointAngleSet::new();
        set.set(AngleName::EL, 90.0);
        let json = serde_json::to_string(&set).unwrap();
        assert!(json.starts_with(r#"{"EL":90.0,"ER":null"#));
        let back: JointAngleSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, set);
        assert!(serde_json::from_str::<JointAngleSet>(r#"{"EL": 200}"#).is_err());
    }
}
