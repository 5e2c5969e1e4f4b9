//! Reading and writing Biovision Hierarchy (BVH) motion files, plus forward
//! kinematics over the parsed skeleton.
//!
//! A BVH document has two sections:
//!
//! ```text
//! HIERARCHY
//! ROOT Hips
//! {
//!     OFFSET 0 0 0
//!     CHANNELS 6 Xposition Yposition Zposition Zrotation Yrotation Xrotation
//!     JOINT Spine
//!     {
//!         OFFSET 0 10 0
//!         CHANNELS 3 Zrotation Yrotation Xrotation
//!         End Site
//!         {
//!             OFFSET 0 5 0
//!         }
//!     }
//! }
//! MOTION
//! Frames: 2
//! Frame Time: 0.05
//! 0 0 0 0 0 0 0 0 0
//! 1 0 0 0 0 0 0 0 0
//! ```
//!
//! Joints are stored in file order, which is also the column order of the
//! motion matrix. Rotation values stay in degrees inside [`MotionClip`];
//! conversion to radians happens when matrices or quaternions are built.

use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::Array2;
use thiserror::Error;

use crate::rotation::{
    self, euler_to_matrix_ordered, euler_to_quaternion_ordered, Axis, Mat3, Quaternion, Vec3,
};

/// Default number of decimals used for motion values.
pub const DEFAULT_PRECISION: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum BvhError {
    #[error("missing {0} section")]
    MissingSection(&'static str),
    #[error("line {line}: expected {expected}, found {found:?}")]
    Unexpected { line: usize, expected: String, found: String },
    #[error("unexpected end of document while reading {0}")]
    UnexpectedEof(&'static str),
    #[error("line {line}: unknown channel {name:?}")]
    UnknownChannel { line: usize, name: String },
    #[error("line {line}: joint {joint:?} declares {count} channels, expected 3 or 6")]
    ChannelCount { line: usize, joint: String, count: usize },
    #[error("line {line}: invalid number {token:?}")]
    BadNumber { line: usize, token: String },
    #[error("motion row {row}: expected {expected} columns, found {found}")]
    ColumnMismatch { row: usize, expected: usize, found: usize },
    #[error("declared {declared} frames but found {found} motion rows")]
    FrameCount { declared: usize, found: usize },
    #[error("frame time must be positive, got {0}")]
    FrameTime(f64),
    #[error("a clip needs at least one frame")]
    NoFrames,
    #[error("hierarchy has {0} root joints, expected exactly one")]
    RootCount(usize),
    #[error("motion matrix has {found} columns but the hierarchy declares {expected} channels")]
    ShapeMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Xposition,
    Yposition,
    Zposition,
    Xrotation,
    Yrotation,
    Zrotation,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Xposition => "Xposition",
            Channel::Yposition => "Yposition",
            Channel::Zposition => "Zposition",
            Channel::Xrotation => "Xrotation",
            Channel::Yrotation => "Yrotation",
            Channel::Zrotation => "Zrotation",
        }
    }

    pub fn is_rotation(self) -> bool {
        matches!(self, Channel::Xrotation | Channel::Yrotation | Channel::Zrotation)
    }

    pub fn axis(self) -> Axis {
        match self {
            Channel::Xposition | Channel::Xrotation => Axis::X,
            Channel::Yposition | Channel::Yrotation => Axis::Y,
            Channel::Zposition | Channel::Zrotation => Axis::Z,
        }
    }
}

impl FromStr for Channel {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "Xposition" => Channel::Xposition,
            "Yposition" => Channel::Yposition,
            "Zposition" => Channel::Zposition,
            "Xrotation" => Channel::Xrotation,
            "Yrotation" => Channel::Yrotation,
            "Zrotation" => Channel::Zrotation,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: Vec3,
    pub channels: Vec<Channel>,
    pub end_site: Option<Vec3>,
}

impl Joint {
    /// Rotation axes in the order they appear in the file.
    pub fn rotation_axes(&self) -> Vec<Axis> {
        self.channels.iter().filter(|c| c.is_rotation()).map(|c| c.axis()).collect()
    }

    pub fn has_position_channels(&self) -> bool {
        self.channels.iter().any(|c| !c.is_rotation())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SkeletonHierarchy {
    pub joints: Vec<Joint>,
}

impl SkeletonHierarchy {
    pub fn new(joints: Vec<Joint>) -> Result<Self, BvhError> {
        let skeleton = Self { joints };
        skeleton.validate()?;
        Ok(skeleton)
    }

    pub fn validate(&self) -> Result<(), BvhError> {
        let roots = self.joints.iter().filter(|j| j.parent.is_none()).count();
        if roots != 1 || self.joints.first().map(|j| j.parent.is_some()).unwrap_or(true) {
            return Err(BvhError::RootCount(roots));
        }
        for (i, joint) in self.joints.iter().enumerate() {
            if let Some(p) = joint.parent {
                if p >= i {
                    return Err(BvhError::RootCount(roots));
                }
            }
            if joint.channels.len() != 3 && joint.channels.len() != 6 {
                return Err(BvhError::ChannelCount { line: 0, joint: joint.name.clone(), count: joint.channels.len() });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn channel_count(&self) -> usize {
        self.joints.iter().map(|j| j.channels.len()).sum()
    }

    /// Column index of each joint's first channel.
    pub fn channel_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.joints.len());
        let mut acc = 0;
        for joint in &self.joints {
            offsets.push(acc);
            acc += joint.channels.len();
        }
        offsets
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    fn children(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        self.joints.iter().enumerate().filter(move |(_, j)| j.parent == Some(index)).map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    pub hierarchy: SkeletonHierarchy,
    /// `frames × channels`, rotations in degrees.
    pub frames: Array2<f64>,
    /// Seconds per frame.
    pub frame_time: f64,
}

impl MotionClip {
    pub fn new(hierarchy: SkeletonHierarchy, frames: Array2<f64>, frame_time: f64) -> Result<Self, BvhError> {
        hierarchy.validate()?;
        if frames.ncols() != hierarchy.channel_count() {
            return Err(BvhError::ShapeMismatch { expected: hierarchy.channel_count(), found: frames.ncols() });
        }
        if frames.nrows() == 0 {
            return Err(BvhError::NoFrames);
        }
        if !(frame_time > 0.0 && frame_time.is_finite()) {
            return Err(BvhError::FrameTime(frame_time));
        }
        Ok(Self { hierarchy, frames, frame_time })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn fps(&self) -> f64 {
        1.0 / self.frame_time
    }

    /// Local rotation and translation of every joint at `frame`.
    pub fn local_transforms(&self, frame: usize) -> Vec<LocalTransform> {
        let row = self.frames.row(frame);
        let mut out = Vec::with_capacity(self.hierarchy.len());
        let mut col = 0;
        for joint in &self.hierarchy.joints {
            let mut translation = joint.offset;
            let mut axes = Vec::with_capacity(3);
            let mut angles = Vec::with_capacity(3);
            for channel in &joint.channels {
                let value = row[col];
                col += 1;
                if channel.is_rotation() {
                    axes.push(channel.axis());
                    angles.push(value.to_radians());
                } else {
                    translation[channel.axis().index()] += value;
                }
            }
            out.push(LocalTransform { axes, angles, translation });
        }
        out
    }
}

/// Per-joint local transform decoded from one motion row.
#[derive(Debug, Clone)]
pub struct LocalTransform {
    pub axes: Vec<Axis>,
    /// Radians, paired with `axes`.
    pub angles: Vec<f64>,
    /// Offset plus any position channels.
    pub translation: Vec3,
}

impl LocalTransform {
    pub fn matrix(&self) -> Mat3 {
        euler_to_matrix_ordered(&self.axes, &self.angles)
    }

    pub fn quaternion(&self) -> Quaternion {
        euler_to_quaternion_ordered(&self.axes, &self.angles)
    }
}

struct Tokens<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let items = text
            .lines()
            .enumerate()
            .flat_map(|(i, line)| line.split_whitespace().map(move |t| (i + 1, t)))
            .collect();
        Self { items, pos: 0 }
    }

    fn next(&mut self, context: &'static str) -> Result<(usize, &'a str), BvhError> {
        let item = self.items.get(self.pos).copied().ok_or(BvhError::UnexpectedEof(context))?;
        self.pos += 1;
        Ok(item)
    }

    fn peek(&self) -> Option<(usize, &'a str)> {
        self.items.get(self.pos).copied()
    }

    fn expect(&mut self, word: &str, context: &'static str) -> Result<usize, BvhError> {
        let (line, tok) = self.next(context)?;
        if tok != word {
            return Err(BvhError::Unexpected { line, expected: word.to_string(), found: tok.to_string() });
        }
        Ok(line)
    }

    fn number<T: FromStr>(&mut self, context: &'static str) -> Result<T, BvhError> {
        let (line, tok) = self.next(context)?;
        tok.parse().map_err(|_| BvhError::BadNumber { line, token: tok.to_string() })
    }

    fn vec3(&mut self, context: &'static str) -> Result<Vec3, BvhError> {
        Ok([self.number(context)?, self.number(context)?, self.number(context)?])
    }
}

fn parse_joint(
    tokens: &mut Tokens<'_>,
    name: String,
    parent: Option<usize>,
    joints: &mut Vec<Joint>,
) -> Result<(), BvhError> {
    tokens.expect("{", "joint body")?;
    tokens.expect("OFFSET", "joint offset")?;
    let offset = tokens.vec3("joint offset")?;
    let (line, _) = tokens.peek().ok_or(BvhError::UnexpectedEof("joint channels"))?;
    tokens.expect("CHANNELS", "joint channels")?;
    let count: usize = tokens.number("channel count")?;
    if count != 3 && count != 6 {
        return Err(BvhError::ChannelCount { line, joint: name, count });
    }
    let mut channels = Vec::with_capacity(count);
    for _ in 0..count {
        let (line, tok) = tokens.next("channel name")?;
        let channel = tok.parse().map_err(|_| BvhError::UnknownChannel { line, name: tok.to_string() })?;
        channels.push(channel);
    }
    let index = joints.len();
    joints.push(Joint { name, parent, offset, channels, end_site: None });

    loop {
        let (line, tok) = tokens.next("joint body")?;
        match tok {
            "JOINT" => {
                let (_, child) = tokens.next("joint name")?;
                parse_joint(tokens, child.to_string(), Some(index), joints)?;
            }
            "End" => {
                tokens.expect("Site", "end site")?;
                tokens.expect("{", "end site")?;
                tokens.expect("OFFSET", "end site offset")?;
                joints[index].end_site = Some(tokens.vec3("end site offset")?);
                tokens.expect("}", "end site")?;
            }
            "}" => return Ok(()),
            other => {
                return Err(BvhError::Unexpected {
                    line,
                    expected: "JOINT, End Site or }".into(),
                    found: other.to_string(),
                })
            }
        }
    }
}

fn parse_hierarchy_tokens(tokens: &mut Tokens<'_>) -> Result<SkeletonHierarchy, BvhError> {
    match tokens.next("HIERARCHY") {
        Ok((_, "HIERARCHY")) => {}
        _ => return Err(BvhError::MissingSection("HIERARCHY")),
    }
    let mut joints = Vec::new();
    tokens.expect("ROOT", "root joint")?;
    let (_, name) = tokens.next("root name")?;
    parse_joint(tokens, name.to_string(), None, &mut joints)?;
    if let Some((l, tok)) = tokens.peek() {
        if tok == "ROOT" {
            return Err(BvhError::Unexpected { line: l, expected: "MOTION".into(), found: tok.into() });
        }
    }
    SkeletonHierarchy::new(joints)
}

/// Parses the HIERARCHY section alone (anything after it is ignored).
pub fn parse_hierarchy(document: &str) -> Result<SkeletonHierarchy, BvhError> {
    parse_hierarchy_tokens(&mut Tokens::new(document))
}

pub fn parse_bvh(document: &str) -> Result<MotionClip, BvhError> {
    let motion_start = find_motion_keyword(document).ok_or(BvhError::MissingSection("MOTION"))?;
    let (head, motion) = document.split_at(motion_start);
    let hierarchy = parse_hierarchy(head)?;
    let head_lines = head.lines().count();

    let mut lines = motion.lines().enumerate().map(|(i, l)| (i + head_lines, l)).skip(1);
    let mut declared = None;
    let mut frame_time = None;
    for (idx, line) in lines.by_ref() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("Frames:") {
            let rest = rest.trim();
            declared = Some(rest.parse::<usize>().map_err(|_| BvhError::BadNumber { line: idx + 1, token: rest.into() })?);
        } else if let Some(rest) = trimmed.strip_prefix("Frame Time:") {
            let rest = rest.trim();
            frame_time = Some(rest.parse::<f64>().map_err(|_| BvhError::BadNumber { line: idx + 1, token: rest.into() })?);
            break;
        } else {
            return Err(BvhError::Unexpected { line: idx + 1, expected: "Frames: or Frame Time:".into(), found: trimmed.into() });
        }
    }
    let declared = declared.ok_or(BvhError::UnexpectedEof("Frames:"))?;
    let frame_time = frame_time.ok_or(BvhError::UnexpectedEof("Frame Time:"))?;

    let width = hierarchy.channel_count();
    let mut values = Vec::with_capacity(declared * width);
    let mut rows = 0;
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let before = values.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| BvhError::BadNumber { line: idx + 1, token: tok.to_string() })?;
            values.push(v);
        }
        let found = values.len() - before;
        if found != width {
            return Err(BvhError::ColumnMismatch { row: rows, expected: width, found });
        }
        rows += 1;
    }
    if rows != declared {
        return Err(BvhError::FrameCount { declared, found: rows });
    }
    let frames = Array2::from_shape_vec((rows, width), values).expect("row-major buffer sized rows × width");
    MotionClip::new(hierarchy, frames, frame_time)
}

fn find_motion_keyword(document: &str) -> Option<usize> {
    let mut offset = 0;
    for line in document.split_inclusive('\n') {
        if line.trim() == "MOTION" {
            return Some(offset);
        }
        offset += line.len();
    }
    None
}

fn fmt_vec3(v: &Vec3) -> String {
    format!("{} {} {}", v[0], v[1], v[2])
}

fn write_joint(out: &mut String, skeleton: &SkeletonHierarchy, index: usize, depth: usize) {
    let joint = &skeleton.joints[index];
    let pad = "\t".repeat(depth);
    let keyword = if joint.parent.is_none() { "ROOT" } else { "JOINT" };
    let _ = writeln!(out, "{pad}{keyword} {}", joint.name);
    let _ = writeln!(out, "{pad}{{");
    let _ = writeln!(out, "{pad}\tOFFSET {}", fmt_vec3(&joint.offset));
    let names: Vec<&str> = joint.channels.iter().map(|c| c.as_str()).collect();
    let _ = writeln!(out, "{pad}\tCHANNELS {} {}", names.len(), names.join(" "));
    for child in skeleton.children(index) {
        write_joint(out, skeleton, child, depth + 1);
    }
    if let Some(end) = &joint.end_site {
        let _ = writeln!(out, "{pad}\tEnd Site");
        let _ = writeln!(out, "{pad}\t{{");
        let _ = writeln!(out, "{pad}\t\tOFFSET {}", fmt_vec3(end));
        let _ = writeln!(out, "{pad}\t}}");
    }
    let _ = writeln!(out, "{pad}}}");
}

/// Serializes the HIERARCHY section.
pub fn write_hierarchy(skeleton: &SkeletonHierarchy) -> String {
    let mut out = String::from("HIERARCHY\n");
    write_joint(&mut out, skeleton, 0, 0);
    out
}

/// Serializes a clip. Offsets and the frame time use the shortest exact
/// decimal form; motion values use `precision` decimals.
pub fn write_bvh(clip: &MotionClip, precision: usize) -> String {
    let mut out = write_hierarchy(&clip.hierarchy);
    let _ = writeln!(out, "MOTION");
    let _ = writeln!(out, "Frames: {}", clip.num_frames());
    let _ = writeln!(out, "Frame Time: {}", clip.frame_time);
    let mut line = String::new();
    for row in clip.frames.rows() {
        line.clear();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            // avoid "-0.000000"
            let v = if v.abs() < 0.5 * 10f64.powi(-(precision as i32)) { 0.0 } else { *v };
            let _ = write!(line, "{v:.precision$}");
        }
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Global joint state after forward kinematics.
#[derive(Debug, Clone)]
pub struct GlobalPose {
    pub positions: Vec<Vec3>,
    pub rotations: Vec<Quaternion>,
}

/// World-space joint positions and orientations at `frame_index`, composed
/// with quaternions: `p = q_parent · t_local · q_parent⁻¹ + p_parent`.
pub fn forward_kinematics_pose(clip: &MotionClip, frame_index: usize) -> GlobalPose {
    let locals = clip.local_transforms(frame_index);
    let joints = &clip.hierarchy.joints;
    let mut positions: Vec<Vec3> = Vec::with_capacity(joints.len());
    let mut rotations: Vec<Quaternion> = Vec::with_capacity(joints.len());
    for (joint, local) in joints.iter().zip(&locals) {
        let q_local = local.quaternion();
        match joint.parent {
            None => {
                positions.push(local.translation);
                rotations.push(q_local);
            }
            Some(p) => {
                let q_parent = rotations[p];
                let pos = rotation::add(&q_parent.rotate(&local.translation), &positions[p]);
                positions.push(pos);
                rotations.push(q_parent * q_local);
            }
        }
    }
    GlobalPose { positions, rotations }
}

pub fn forward_kinematics(clip: &MotionClip, frame_index: usize) -> Vec<Vec3> {
    forward_kinematics_pose(clip, frame_index).positions
}

/// Matrix-composition variant of [`forward_kinematics`]; used to cross-check.
pub fn forward_kinematics_matrix(clip: &MotionClip, frame_index: usize) -> Vec<Vec3> {
    let locals = clip.local_transforms(frame_index);
    let joints = &clip.hierarchy.joints;
    let mut positions: Vec<Vec3> = Vec::with_capacity(joints.len());
    let mut rotations: Vec<Mat3> = Vec::with_capacity(joints.len());
    for (joint, local) in joints.iter().zip(&locals) {
        let r_local = local.matrix();
        match joint.parent {
            None => {
                positions.push(local.translation);
                rotations.push(r_local);
            }
            Some(p) => {
                let pos = rotation::add(&rotation::mat_vec(&rotations[p], &local.translation), &positions[p]);
                positions.push(pos);
                rotations.push(rotation::mat_mul(&rotations[p], &r_local));
            }
        }
    }
    positions
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const MINIMAL: &str = "HIERARCHY
ROOT Hips
{
	OFFSET 0 0 0
	CHANNELS 6 Xposition Yposition Zposition Zrotation Yrotation Xrotation
	End Site
	{
		OFFSET 0 1 0
	}
}
MOTION
Frames: 2
Frame Time: 0.05
0 0 0 0 0 0
1 2 3 10 20 30
";

    const TWO_JOINTS: &str = "HIERARCHY
ROOT Hips
{
	OFFSET 0 0 0
	CHANNELS 6 Xposition Yposition Zposition Zrotation Yrotation Xrotation
	JOINT Spine
	{
		OFFSET 0 1 0
		CHANNELS 3 Zrotation Yrotation Xrotation
		End Site
		{
			OFFSET 0 2 0
		}
	}
}
MOTION
Frames: 1
Frame Time: 0.05
1 0 0 0 0 0 0 0 0
";

    #[test]
    fn parses_minimal_document() {
        let clip = parse_bvh(MINIMAL).unwrap();
        assert_eq!(clip.num_frames(), 2);
        assert_eq!(clip.frames.ncols(), 6);
        assert_eq!(clip.hierarchy.joints[0].name, "Hips");
        assert_eq!(clip.hierarchy.joints[0].end_site, Some([0.0, 1.0, 0.0]));
        assert_eq!(clip.frames[[1, 5]], 30.0);
        assert_eq!(clip.frame_time, 0.05);
    }

    #[test]
    fn rejects_short_motion_row() {
        let doc = MINIMAL.replace("1 2 3 10 20 30", "1 2 3 10 20");
        assert_eq!(parse_bvh(&doc), Err(BvhError::ColumnMismatch { row: 1, expected: 6, found: 5 }));
    }

    #[test]
    fn rejects_missing_sections() {
        assert_eq!(parse_bvh(&MINIMAL.replace("MOTION", "MOTIONS")), Err(BvhError::MissingSection("MOTION")));
        assert_eq!(parse_bvh(&MINIMAL.replace("HIERARCHY", "HIER")), Err(BvhError::MissingSection("HIERARCHY")));
    }

    #[test]
    fn rejects_non_numeric_row_and_bad_frame_count() {
        let doc = MINIMAL.replace("1 2 3 10 20 30", "1 2 x 10 20 30");
        assert!(matches!(parse_bvh(&doc), Err(BvhError::BadNumber { .. })));
        let doc = MINIMAL.replace("Frames: 2", "Frames: 3");
        assert_eq!(parse_bvh(&doc), Err(BvhError::FrameCount { declared: 3, found: 2 }));
    }

    #[test]
    fn rejects_bad_channel_count() {
        let doc = MINIMAL.replace("CHANNELS 6 Xposition Yposition Zposition Zrotation Yrotation Xrotation", "CHANNELS 2 Xposition Yposition");
        assert!(matches!(parse_bvh(&doc), Err(BvhError::ChannelCount { count: 2, .. })));
    }

    #[test]
    fn round_trip_is_a_fixpoint() {
        let clip = parse_bvh(TWO_JOINTS).unwrap();
        let text = write_bvh(&clip, DEFAULT_PRECISION);
        let again = parse_bvh(&text).unwrap();
        assert_eq!(again, clip);
        assert_eq!(write_bvh(&again, DEFAULT_PRECISION), text);
    }

    #[test]
    fn frame_time_written_exactly() {
        let mut clip = parse_bvh(MINIMAL).unwrap();
        clip.frame_time = 1.0 / 20.0;
        let text = write_bvh(&clip, 6);
        assert!(text.lines().any(|l| l == "Frame Time: 0.05"));
    }

    #[test]
    fn offsets_and_channel_order_emitted_verbatim() {
        let doc = TWO_JOINTS.replace("CHANNELS 3 Zrotation Yrotation Xrotation", "CHANNELS 3 Xrotation Zrotation Yrotation")
            .replace("OFFSET 0 1 0", "OFFSET 0.125 1.5 -3.25");
        let clip = parse_bvh(&doc).unwrap();
        let text = write_bvh(&clip, 6);
        assert!(text.contains("OFFSET 0.125 1.5 -3.25"));
        assert!(text.contains("CHANNELS 3 Xrotation Zrotation Yrotation"));
    }

    #[test]
    fn fk_root_translation_then_child_offset() {
        let clip = parse_bvh(TWO_JOINTS).unwrap();
        let pos = forward_kinematics(&clip, 0);
        assert_eq!(pos[0], [1.0, 0.0, 0.0]);
        assert!((pos[1][0] - 1.0).abs() < 1e-15 && (pos[1][1] - 1.0).abs() < 1e-15 && pos[1][2].abs() < 1e-15);
    }

    #[test]
    fn fk_root_rotated_quarter_turn_about_z() {
        let doc = TWO_JOINTS.replace("1 0 0 0 0 0 0 0 0", "1 0 0 90 0 0 0 0 0");
        let clip = parse_bvh(&doc).unwrap();
        let pos = forward_kinematics(&clip, 0);
        let expected = [1.0 - 1.0, 0.0, 0.0];
        for i in 0..3 {
            assert!((pos[1][i] - expected[i]).abs() < 1e-12, "{:?}", pos[1]);
        }
    }

    #[test]
    fn fk_zero_rotations_sum_offsets() {
        let doc = TWO_JOINTS.replace("OFFSET 0 0 0", "OFFSET 2 3 4").replace("1 0 0 0 0 0 0 0 0", "0 0 0 0 0 0 0 0 0");
        let clip = parse_bvh(&doc).unwrap();
        let pos = forward_kinematics(&clip, 0);
        assert_eq!(pos[0], [2.0, 3.0, 4.0]);
        assert_eq!(pos[1], [2.0, 4.0, 4.0]);
    }

    #[test]
    fn fk_quaternion_and_matrix_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let clip = parse_bvh(TWO_JOINTS).unwrap();
        let mut frames = Array2::zeros((20, 9));
        frames.mapv_inplace(|_: f64| rng.random_range(-180.0..180.0));
        let clip = MotionClip::new(clip.hierarchy, frames, 0.05).unwrap();
        for f in 0..20 {
            let a = forward_kinematics(&clip, f);
            let b = forward_kinematics_matrix(&clip, f);
            for (pa, pb) in a.iter().zip(&b) {
                for i in 0..3 {
                    assert!((pa[i] - pb[i]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn hierarchy_only_round_trip() {
        let clip = parse_bvh(TWO_JOINTS).unwrap();
        let text = write_hierarchy(&clip.hierarchy);
        assert_eq!(parse_hierarchy(&text).unwrap(), clip.hierarchy);
    }
}
