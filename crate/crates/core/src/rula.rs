//! RULA posture scoring from joint angles plus user-supplied wrist, muscle
//! and force inputs. All bins and lookup tables come from an editable TOML
//! file; the default is compiled in.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::skeleton::{AngleName, JointAngleSet};

/// The shipped bins file.
pub const DEFAULT_BINS_TOML: &str = include_str!("../data/rula_bins.toml");

pub const BINS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RulaError {
    #[error("invalid RULA bins: {0}")]
    InvalidBins(String),
    #[error("angle {0} is required for scoring but missing")]
    MissingAngle(AngleName),
    #[error("invalid RULA input: {0}")]
    InvalidInput(String),
    #[error("cannot read RULA bins: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse RULA bins: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub score: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBins {
    pub min: u8,
    pub max: u8,
    pub bins: Vec<Bin>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlagBand {
    pub reference: f64,
    pub band: f64,
}

impl FlagBand {
    pub fn exceeded(&self, value: f64) -> bool {
        (value - self.reference).abs() > self.band
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Groups {
    pub upper_arm: GroupBins,
    pub lower_arm: GroupBins,
    pub neck: GroupBins,
    pub trunk: GroupBins,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flags {
    pub neck_twist: FlagBand,
    pub neck_side_bend: FlagBand,
    pub trunk_twist: FlagBand,
    pub trunk_side_bend: FlagBand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tables {
    /// 18 × 8: (upper arm, lower arm) × (wrist, wrist twist).
    pub a: Vec<Vec<u8>>,
    /// 6 × 12: neck × (trunk, legs).
    pub b: Vec<Vec<u8>>,
    /// 8 × 7: wrist/arm score × neck/trunk/leg score.
    pub c: Vec<Vec<u8>>,
}

/// Bins, neutral references, flag bands and lookup tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulaBins {
    pub format_version: u32,
    /// Interior angle at which each scored angle has zero deviation.
    pub neutral: BTreeMap<AngleName, f64>,
    pub groups: Groups,
    pub flags: Flags,
    pub tables: Tables,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RulaGroup {
    UpperArm,
    LowerArm,
    Neck,
    Trunk,
}

impl RulaGroup {
    pub const ALL: [RulaGroup; 4] = [RulaGroup::UpperArm, RulaGroup::LowerArm, RulaGroup::Neck, RulaGroup::Trunk];

    pub fn name(self) -> &'static str {
        match self {
            RulaGroup::UpperArm => "upper_arm",
            RulaGroup::LowerArm => "lower_arm",
            RulaGroup::Neck => "neck",
            RulaGroup::Trunk => "trunk",
        }
    }
}

const SCORED_ANGLES: [AngleName; 8] = [
    AngleName::SL,
    AngleName::SR,
    AngleName::EL,
    AngleName::ER,
    AngleName::KL,
    AngleName::KR,
    AngleName::NF,
    AngleName::TF,
];

fn check_table(name: &str, table: &[Vec<u8>], rows: usize, cols: usize, max: u8) -> Result<(), RulaError> {
    if table.len() != rows || table.iter().any(|r| r.len() != cols) {
        return Err(RulaError::InvalidBins(format!("table {name} must be {rows} × {cols}")));
    }
    if table.iter().flatten().any(|&v| v < 1 || v > max) {
        return Err(RulaError::InvalidBins(format!("table {name} has a cell outside 1..={max}")));
    }
    Ok(())
}

impl RulaBins {
    /// The compiled-in defaults.
    pub fn default_bins() -> Self {
        Self::from_toml_str(DEFAULT_BINS_TOML).expect("shipped bins file is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, RulaError> {
        let bins: RulaBins = toml::from_str(text)?;
        bins.validate()?;
        Ok(bins)
    }

    pub fn load(path: &Path) -> Result<Self, RulaError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn group(&self, group: RulaGroup) -> &GroupBins {
        match group {
            RulaGroup::UpperArm => &self.groups.upper_arm,
            RulaGroup::LowerArm => &self.groups.lower_arm,
            RulaGroup::Neck => &self.groups.neck,
            RulaGroup::Trunk => &self.groups.trunk,
        }
    }

    pub fn validate(&self) -> Result<(), RulaError> {
        let bad = |m: String| Err(RulaError::InvalidBins(m));
        if self.format_version != BINS_FORMAT_VERSION {
            return bad(format!(
                "format_version {} is not supported (expected {BINS_FORMAT_VERSION})",
                self.format_version
            ));
        }
        for name in SCORED_ANGLES {
            match self.neutral.get(&name) {
                Some(v) if (0.0..=180.0).contains(v) => {}
                Some(v) => return bad(format!("neutral {name} = {v} outside [0, 180]")),
                None => return bad(format!("neutral reference for {name} missing")),
            }
        }
        for group in RulaGroup::ALL {
            let g = self.group(group);
            let name = group.name();
            if g.min < 1 || g.min > g.max {
                return bad(format!("{name}: score range {}..={} is invalid", g.min, g.max));
            }
            let Some(first) = g.bins.first() else {
                return bad(format!("{name}: no bins"));
            };
            if first.lo != 0.0 {
                return bad(format!("{name}: bins start at {} instead of 0", first.lo));
            }
            for pair in g.bins.windows(2) {
                if pair[0].hi < pair[1].lo {
                    return bad(format!("{name}: gap between {} and {}", pair[0].hi, pair[1].lo));
                }
                if pair[0].hi > pair[1].lo {
                    return bad(format!("{name}: bins overlap at {}", pair[1].lo));
                }
            }
            if g.bins.iter().any(|b| !(b.lo < b.hi)) {
                return bad(format!("{name}: empty or inverted bin"));
            }
            if g.bins.last().map(|b| b.hi) != Some(180.0) {
                return bad(format!("{name}: bins must end at 180"));
            }
            if g.bins.iter().any(|b| b.score < g.min || b.score > g.max) {
                return bad(format!("{name}: bin score outside {}..={}", g.min, g.max));
            }
        }
        let f = &self.flags;
        for (name, band) in [
            ("neck_twist", f.neck_twist),
            ("neck_side_bend", f.neck_side_bend),
            ("trunk_twist", f.trunk_twist),
            ("trunk_side_bend", f.trunk_side_bend),
        ] {
            if !(band.band >= 0.0 && band.band.is_finite() && band.reference.is_finite()) {
                return bad(format!("flag {name}: band must be finite and >= 0"));
            }
        }
        check_table("a", &self.tables.a, 18, 8, u8::MAX)?;
        check_table("b", &self.tables.b, 6, 12, u8::MAX)?;
        check_table("c", &self.tables.c, 8, 7, 7)
    }
}

impl Default for RulaBins {
    fn default() -> Self {
        Self::default_bins()
    }
}

/// Deviation from neutral, `|interior − neutral|`, using the configured
/// neutral reference (180 for the limb angles, so a straight limb is 0).
/// Angles without a reference are returned unchanged.
pub fn flexion_from_interior(name: AngleName, interior: f64, bins: &RulaBins) -> f64 {
    match bins.neutral.get(&name) {
        Some(neutral) => (interior - neutral).abs(),
        None => interior,
    }
}

/// Base score of the bin containing `deviation` plus `adjustment`, clamped to
/// the group's range. Deviations outside `[0, 180]` are clamped first.
pub fn group_score(group: RulaGroup, deviation: f64, adjustment: i32, bins: &RulaBins) -> u8 {
    let g = bins.group(group);
    let d = deviation.clamp(0.0, 180.0);
    let base = g
        .bins
        .iter()
        .find(|b| b.lo <= d && d < b.hi)
        .or_else(|| g.bins.last())
        .map_or(g.min, |b| b.score);
    (i32::from(base) + adjustment).clamp(i32::from(g.min), i32::from(g.max)) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    #[default]
    Left,
    Right,
}

impl Side {
    /// (upper arm, lower arm) angles scored for this side.
    pub fn arm_angles(self) -> (AngleName, AngleName) {
        match self {
            Side::Left => (AngleName::SL, AngleName::EL),
            Side::Right => (AngleName::SR, AngleName::ER),
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

impl FromStr for Side {
    type Err = RulaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(Side::Left),
            "right" | "r" => Ok(Side::Right),
            _ => Err(RulaError::InvalidInput(format!("unknown side {s:?}"))),
        }
    }
}

/// Arm adjustments the camera cannot judge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ArmAdjustments {
    pub shoulder_raised: bool,
    pub upper_arm_abducted: bool,
    pub arm_supported: bool,
    /// Lower arm working across the midline or out to the side.
    pub lower_arm_out_of_line: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulaInput {
    pub angles: JointAngleSet,
    /// 1..=4.
    pub wrist_score: u8,
    /// 1..=2.
    pub wrist_twist_score: u8,
    /// 0..=1.
    pub muscle_score: u8,
    /// 0..=3.
    pub force_score: u8,
    pub legs_supported: bool,
    pub side: Side,
    #[serde(default)]
    pub arm: ArmAdjustments,
}

impl RulaInput {
    /// Minimal non-visual inputs: neutral wrist, no load, legs supported.
    pub fn new(angles: JointAngleSet, side: Side) -> Self {
        Self {
            angles,
            wrist_score: 1,
            wrist_twist_score: 1,
            muscle_score: 0,
            force_score: 0,
            legs_supported: true,
            side,
            arm: ArmAdjustments::default(),
        }
    }

    pub fn validate(&self) -> Result<(), RulaError> {
        let check = |name: &str, v: u8, lo: u8, hi: u8| {
            if (lo..=hi).contains(&v) {
                Ok(())
            } else {
                Err(RulaError::InvalidInput(format!("{name} = {v} outside {lo}..={hi}")))
            }
        };
        check("wrist_score", self.wrist_score, 1, 4)?;
        check("wrist_twist_score", self.wrist_twist_score, 1, 2)?;
        check("muscle_score", self.muscle_score, 0, 1)?;
        check("force_score", self.force_score, 0, 3)
    }
}

/// Which +1 posture adjustments fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PostureFlags {
    pub neck_twisted: bool,
    pub neck_side_bent: bool,
    pub trunk_twisted: bool,
    pub trunk_side_bent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulaResult {
    pub side: Side,
    pub upper_arm: u8,
    pub lower_arm: u8,
    pub wrist: u8,
    pub wrist_twist: u8,
    pub neck: u8,
    pub trunk: u8,
    pub legs: u8,
    pub flags: PostureFlags,
    pub table_a: u8,
    pub table_b: u8,
    /// Table A plus muscle and force.
    pub wrist_arm_score: u8,
    /// Table B plus muscle and force.
    pub neck_trunk_leg_score: u8,
    pub grand_score: u8,
    pub action_level: u8,
    pub action: String,
}

/// Action level (1–4) and its description for a grand score.
pub fn action_level(grand: u8) -> (u8, &'static str) {
    match grand {
        0..=2 => (1, "acceptable posture"),
        3..=4 => (2, "further investigation, change may be needed"),
        5..=6 => (3, "investigation and changes required soon"),
        _ => (4, "investigation and changes required immediately"),
    }
}

fn require(angles: &JointAngleSet, name: AngleName) -> Result<f64, RulaError> {
    angles.get(name).ok_or(RulaError::MissingAngle(name))
}

fn lookup(table: &[Vec<u8>], row: usize, col: usize) -> u8 {
    let r = row.min(table.len() - 1);
    table[r][col.min(table[r].len() - 1)]
}

/// Full worksheet: group scores, tables A and B, muscle and force, table C.
pub fn rula_score(input: &RulaInput, bins: &RulaBins) -> Result<RulaResult, RulaError> {
    input.validate()?;
    let a = &input.angles;
    let (upper_name, lower_name) = input.side.arm_angles();
    let upper = require(a, upper_name)?;
    let lower = require(a, lower_name)?;
    let nf = require(a, AngleName::NF)?;
    let tf = require(a, AngleName::TF)?;
    let nt = require(a, AngleName::NT)?;
    let nbl = require(a, AngleName::NBL)?;
    let nbr = require(a, AngleName::NBR)?;
    let ttr = require(a, AngleName::TTR)?;
    let ttl = require(a, AngleName::TTL)?;
    let tb = require(a, AngleName::TB)?;

    let f = &bins.flags;
    let flags = PostureFlags {
        neck_twisted: f.neck_twist.exceeded(nt),
        neck_side_bent: f.neck_side_bend.exceeded(nbl - nbr),
        trunk_twisted: f.trunk_twist.exceeded((ttr + ttl) / 2.0),
        trunk_side_bent: f.trunk_side_bend.exceeded(tb),
    };

    let arm = input.arm;
    let upper_adj = i32::from(arm.shoulder_raised) + i32::from(arm.upper_arm_abducted) - i32::from(arm.arm_supported);
    let upper_arm = group_score(RulaGroup::UpperArm, flexion_from_interior(upper_name, upper, bins), upper_adj, bins);
    let lower_arm = group_score(
        RulaGroup::LowerArm,
        flexion_from_interior(lower_name, lower, bins),
        i32::from(arm.lower_arm_out_of_line),
        bins,
    );
    let neck_adj = i32::from(flags.neck_twisted) + i32::from(flags.neck_side_bent);
    let neck = group_score(RulaGroup::Neck, flexion_from_interior(AngleName::NF, nf, bins), neck_adj, bins);
    let trunk_adj = i32::from(flags.trunk_twisted) + i32::from(flags.trunk_side_bent);
    let trunk = group_score(RulaGroup::Trunk, flexion_from_interior(AngleName::TF, tf, bins), trunk_adj, bins);
    let legs = if input.legs_supported { 1 } else { 2 };

    let row_a = (usize::from(upper_arm) - 1) * 3 + usize::from(lower_arm) - 1;
    let col_a = (usize::from(input.wrist_score) - 1) * 2 + usize::from(input.wrist_twist_score) - 1;
    let table_a = lookup(&bins.tables.a, row_a, col_a);
    let col_b = (usize::from(trunk) - 1) * 2 + usize::from(legs) - 1;
    let table_b = lookup(&bins.tables.b, usize::from(neck) - 1, col_b);

    let load = input.muscle_score + input.force_score;
    let wrist_arm_score = table_a + load;
    let neck_trunk_leg_score = table_b + load;
    let grand_score = lookup(&bins.tables.c, usize::from(wrist_arm_score) - 1, usize::from(neck_trunk_leg_score) - 1);
    let (level, action) = action_level(grand_score);

    Ok(RulaResult {
        side: input.side,
        upper_arm,
        lower_arm,
        wrist: input.wrist_score,
        wrist_twist: input.wrist_twist_score,
        neck,
        trunk,
        legs,
        flags,
        table_a,
        table_b,
        wrist_arm_score,
        neck_trunk_leg_score,
        grand_score,
        action_level: level,
        action: action.to_string(),
    })
}
