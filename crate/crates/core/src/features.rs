//! Per-frame gesture feature vectors.
//!
//! Each frame is laid out as
//!
//! | block      | width | content                                   |
//! |------------|-------|-------------------------------------------|
//! | `p_root`   | 3     | root world position                       |
//! | `r_root`   | 4     | root rotation quaternion `(w, x, y, z)`   |
//! | `dp_root`  | 3     | root linear velocity (units/s)            |
//! | `dr_root`  | 3     | root angular velocity (rotation vector/s) |
//! | `p_joints` | 3n    | world positions of every joint            |
//! | `r_joints` | 6n    | local joint rotations, 6D form            |
//! | `dp_joints`| 3n    | joint linear velocities                   |
//! | `dr_joints`| 3n    | joint angular velocities                  |
//! | `gaze`     | 3     | unit forward (+Z) axis of the head        |
//!
//! giving `16 + 15n` columns, 1141 for the 75-joint skeleton. The root is
//! part of the joint blocks. Velocities are forward differences scaled by
//! the frame rate; the last frame repeats the previous velocity.

use ndarray::{s, Array1, Array2, ArrayView1, Axis as NdAxis};
use thiserror::Error;

use crate::bvh::{forward_kinematics_pose, BvhError, MotionClip, SkeletonHierarchy};
use crate::rotation::{
    self, matrix_to_axis_angle, matrix_to_euler_ordered, quaternion_to_matrix, rot_to_6d, sixd_to_rot, Axis,
    Mat3, Quaternion, RotationError,
};

/// Joint count of the reference skeleton.
pub const DEFAULT_JOINT_COUNT: usize = 75;
/// Feature width of the reference skeleton.
pub const DEFAULT_FEATURE_DIM: usize = 1141;
/// Lower bound applied to per-dimension standard deviations.
pub const MIN_STD: f64 = 1e-6;
/// Joint whose orientation defines the gaze block.
pub const GAZE_JOINT: &str = "Head";

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("skeleton has {found} joints, expected {expected}")]
    JointCount { expected: usize, found: usize },
    #[error("need at least 2 frames to compute velocities, got {0}")]
    TooFewFrames(usize),
    #[error("feature width {found} does not match layout width {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("cannot fit a normalizer on fewer than 2 frames")]
    EmptyDataset,
    #[error("joint {0:?} must have exactly three rotation channels")]
    RotationChannels(String),
    #[error(transparent)]
    Rotation(#[from] RotationError),
    #[error(transparent)]
    Clip(#[from] BvhError),
}

/// Named column range inside a feature row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub name: &'static str,
    pub start: usize,
    pub len: usize,
}

impl Block {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Column layout for a skeleton with `joint_count` joints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureLayout {
    pub joint_count: usize,
}

impl FeatureLayout {
    pub fn new(joint_count: usize) -> Self {
        Self { joint_count }
    }

    /// Inverse of [`FeatureLayout::width`]; `None` when `width` is not of the
    /// form `16 + 15n`.
    pub fn from_width(width: usize) -> Option<Self> {
        if width < 31 || (width - 16) % 15 != 0 {
            return None;
        }
        Some(Self::new((width - 16) / 15))
    }

    pub fn width(&self) -> usize {
        13 + 15 * self.joint_count + 3
    }

    pub fn blocks(&self) -> [Block; 9] {
        let n = self.joint_count;
        let widths = [
            ("p_root", 3),
            ("r_root", 4),
            ("dp_root", 3),
            ("dr_root", 3),
            ("p_joints", 3 * n),
            ("r_joints", 6 * n),
            ("dp_joints", 3 * n),
            ("dr_joints", 3 * n),
            ("gaze", 3),
        ];
        let mut start = 0;
        widths.map(|(name, len)| {
            let block = Block { name, start, len };
            start += len;
            block
        })
    }

    pub fn block(&self, name: &str) -> Block {
        *self.blocks().iter().find(|b| b.name == name).unwrap_or_else(|| panic!("unknown feature block {name}"))
    }

    /// Block containing column `col`.
    pub fn block_of(&self, col: usize) -> Option<Block> {
        self.blocks().into_iter().find(|b| b.range().contains(&col))
    }

    pub fn p_root(&self) -> usize {
        0
    }
    pub fn r_root(&self) -> usize {
        3
    }
    pub fn dp_root(&self) -> usize {
        7
    }
    pub fn dr_root(&self) -> usize {
        10
    }
    pub fn p_joint(&self, j: usize) -> usize {
        13 + 3 * j
    }
    pub fn r_joint(&self, j: usize) -> usize {
        13 + 3 * self.joint_count + 6 * j
    }
    pub fn dp_joint(&self, j: usize) -> usize {
        13 + 9 * self.joint_count + 3 * j
    }
    pub fn dr_joint(&self, j: usize) -> usize {
        13 + 12 * self.joint_count + 3 * j
    }
    pub fn gaze(&self) -> usize {
        13 + 15 * self.joint_count
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GestureFeatureSequence {
    /// `frames × width`
    pub data: Array2<f64>,
    pub fps: f64,
    pub joint_count: usize,
    pub normalized: bool,
    pub normalizer_id: Option<String>,
}

impl GestureFeatureSequence {
    pub fn new(data: Array2<f64>, fps: f64, joint_count: usize) -> Result<Self, FeatureError> {
        let layout = FeatureLayout::new(joint_count);
        if data.ncols() != layout.width() {
            return Err(FeatureError::Dimension { expected: layout.width(), found: data.ncols() });
        }
        Ok(Self { data, fps, joint_count, normalized: false, normalizer_id: None })
    }

    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout::new(self.joint_count)
    }

    pub fn num_frames(&self) -> usize {
        self.data.nrows()
    }
}

fn put(row: &mut [f64], at: usize, values: &[f64]) {
    row[at..at + values.len()].copy_from_slice(values);
}

/// Builds the feature matrix of `clip`, which must have exactly
/// `joint_count` joints and at least two frames.
pub fn build_features(clip: &MotionClip, joint_count: usize) -> Result<GestureFeatureSequence, FeatureError> {
    let joints = &clip.hierarchy.joints;
    if joints.len() != joint_count {
        return Err(FeatureError::JointCount { expected: joint_count, found: joints.len() });
    }
    let frames = clip.num_frames();
    if frames < 2 {
        return Err(FeatureError::TooFewFrames(frames));
    }
    let layout = FeatureLayout::new(joint_count);
    let fps = clip.fps();
    let gaze_joint = clip.hierarchy.find(GAZE_JOINT).unwrap_or(0);

    let mut data = Array2::<f64>::zeros((frames, layout.width()));
    // rotation vectors of local joint rotations, for angular velocities
    let mut log_rot = Array2::<f64>::zeros((frames, 3 * joint_count));
    let mut prev_root: Option<Quaternion> = None;

    for f in 0..frames {
        let pose = forward_kinematics_pose(clip, f);
        let locals = clip.local_transforms(f);
        let mut row = data.row_mut(f);
        let row = row.as_slice_mut().expect("standard layout");

        put(row, layout.p_root(), &pose.positions[0]);
        let mut q_root = locals[0].quaternion().normalized()?;
        if let Some(prev) = prev_root {
            if prev.dot(&q_root) < 0.0 {
                q_root = Quaternion::new(-q_root.w, -q_root.x, -q_root.y, -q_root.z);
            }
        } else if q_root.w < 0.0 {
            q_root = Quaternion::new(-q_root.w, -q_root.x, -q_root.y, -q_root.z);
        }
        prev_root = Some(q_root);
        put(row, layout.r_root(), &q_root.to_array());

        for (j, local) in locals.iter().enumerate() {
            put(row, layout.p_joint(j), &pose.positions[j]);
            let m = local.matrix();
            put(row, layout.r_joint(j), &rot_to_6d(&m));
            let aa = matrix_to_axis_angle(&m);
            log_rot.slice_mut(s![f, 3 * j..3 * j + 3]).assign(&ArrayView1::from(&aa[..]));
        }

        let gaze = pose.rotations[gaze_joint].rotate(&[0.0, 0.0, 1.0]);
        let n = rotation::dot(&gaze, &gaze).sqrt();
        put(row, layout.gaze(), &[gaze[0] / n, gaze[1] / n, gaze[2] / n]);
    }

    for f in 0..frames {
        let (a, b) = if f + 1 < frames { (f, f + 1) } else { (f - 1, f) };
        for k in 0..3 {
            let v = (data[[b, layout.p_root() + k]] - data[[a, layout.p_root() + k]]) * fps;
            data[[f, layout.dp_root() + k]] = v;
            let w = (log_rot[[b, k]] - log_rot[[a, k]]) * fps;
            data[[f, layout.dr_root() + k]] = w;
        }
        for j in 0..joint_count {
            for k in 0..3 {
                let v = (data[[b, layout.p_joint(j) + k]] - data[[a, layout.p_joint(j) + k]]) * fps;
                data[[f, layout.dp_joint(j) + k]] = v;
                let w = (log_rot[[b, 3 * j + k]] - log_rot[[a, 3 * j + k]]) * fps;
                data[[f, layout.dr_joint(j) + k]] = w;
            }
        }
    }

    GestureFeatureSequence::new(data, fps, joint_count)
}

fn three_axes(axes: &[Axis], joint: &str) -> Result<[Axis; 3], FeatureError> {
    match axes {
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err(FeatureError::RotationChannels(joint.to_string())),
    }
}

fn sixd_at(row: ArrayView1<'_, f64>, at: usize) -> [f64; 6] {
    let mut v = [0.0; 6];
    for (k, x) in v.iter_mut().enumerate() {
        *x = row[at + k];
    }
    v
}

/// Rebuilds a motion clip from (denormalized) features. Root motion comes
/// from `p_root`/`r_root`, joint rotations from their 6D blocks; velocity
/// and gaze blocks are not used.
pub fn features_to_motion(
    features: &GestureFeatureSequence,
    hierarchy: &SkeletonHierarchy,
) -> Result<MotionClip, FeatureError> {
    let joints = &hierarchy.joints;
    let layout = FeatureLayout::new(joints.len());
    if features.data.ncols() != layout.width() {
        return Err(FeatureError::Dimension { expected: layout.width(), found: features.data.ncols() });
    }
    let axes: Vec<[Axis; 3]> =
        joints.iter().map(|j| three_axes(&j.rotation_axes(), &j.name)).collect::<Result<_, _>>()?;

    let frames = features.num_frames();
    let mut motion = Array2::<f64>::zeros((frames, hierarchy.channel_count()));
    for f in 0..frames {
        let row = features.data.row(f);
        let mut local: Vec<Mat3> = Vec::with_capacity(joints.len());
        for j in 0..joints.len() {
            let m = if j == 0 {
                let r = layout.r_root();
                quaternion_to_matrix(&Quaternion::new(row[r], row[r + 1], row[r + 2], row[r + 3]))?
            } else {
                sixd_to_rot(&sixd_at(row, layout.r_joint(j)))?
            };
            local.push(m);
        }
        let mut global: Vec<Mat3> = Vec::with_capacity(joints.len());
        for (j, joint) in joints.iter().enumerate() {
            let g = match joint.parent {
                None => local[j],
                Some(p) => rotation::mat_mul(&global[p], &local[j]),
            };
            global.push(g);
        }

        let mut col = 0;
        for (j, joint) in joints.iter().enumerate() {
            let translation = match joint.parent {
                None => {
                    let p = layout.p_root();
                    [row[p], row[p + 1], row[p + 2]]
                }
                Some(p) => {
                    let (pj, pp) = (layout.p_joint(j), layout.p_joint(p));
                    let delta = [row[pj] - row[pp], row[pj + 1] - row[pp + 1], row[pj + 2] - row[pp + 2]];
                    rotation::mat_vec(&rotation::transpose(&global[p]), &delta)
                }
            };
            let euler = matrix_to_euler_ordered(&local[j], axes[j]);
            let mut rot_idx = 0;
            for channel in &joint.channels {
                motion[[f, col]] = if channel.is_rotation() {
                    let v = euler[rot_idx].to_degrees();
                    rot_idx += 1;
                    v
                } else {
                    let k = channel.axis().index();
                    translation[k] - joint.offset[k]
                };
                col += 1;
            }
        }
    }
    let frame_time = 1.0 / features.fps;
    Ok(MotionClip::new(hierarchy.clone(), motion, frame_time)?)
}

/// Per-dimension z-score statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNormalizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl FeatureNormalizer {
    pub fn new(mean: Array1<f64>, std: Array1<f64>) -> Self {
        let std = std.mapv(|s| if s.is_finite() { s.max(MIN_STD) } else { MIN_STD });
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize_rows(&self, data: &Array2<f64>) -> Array2<f64> {
        (data - &self.mean.view().insert_axis(NdAxis(0))) / &self.std.view().insert_axis(NdAxis(0))
    }

    pub fn denormalize_rows(&self, data: &Array2<f64>) -> Array2<f64> {
        data * &self.std.view().insert_axis(NdAxis(0)) + &self.mean.view().insert_axis(NdAxis(0))
    }

    pub fn normalize(&self, seq: &GestureFeatureSequence) -> Result<GestureFeatureSequence, FeatureError> {
        self.check(seq.data.ncols())?;
        Ok(GestureFeatureSequence { data: self.normalize_rows(&seq.data), normalized: true, ..seq.clone() })
    }

    pub fn denormalize(&self, seq: &GestureFeatureSequence) -> Result<GestureFeatureSequence, FeatureError> {
        self.check(seq.data.ncols())?;
        Ok(GestureFeatureSequence { data: self.denormalize_rows(&seq.data), normalized: false, ..seq.clone() })
    }

    fn check(&self, width: usize) -> Result<(), FeatureError> {
        if width != self.dim() {
            return Err(FeatureError::Dimension { expected: self.dim(), found: width });
        }
        Ok(())
    }
}

/// Fits mean and (population) standard deviation over every frame of
/// `dataset`. Constant dimensions get their exact value as mean and the
/// clamped deviation, so they normalize to exactly zero.
pub fn fit_normalizer(dataset: &[GestureFeatureSequence]) -> Result<FeatureNormalizer, FeatureError> {
    let total: usize = dataset.iter().map(|s| s.num_frames()).sum();
    if total < 2 {
        return Err(FeatureError::EmptyDataset);
    }
    let width = dataset[0].data.ncols();
    if let Some(bad) = dataset.iter().find(|s| s.data.ncols() != width) {
        return Err(FeatureError::Dimension { expected: width, found: bad.data.ncols() });
    }
    let mut mean = Array1::<f64>::zeros(width);
    let mut lo = Array1::from_elem(width, f64::INFINITY);
    let mut hi = Array1::from_elem(width, f64::NEG_INFINITY);
    for seq in dataset {
        for row in seq.data.rows() {
            for (k, &x) in row.iter().enumerate() {
                mean[k] += x;
                lo[k] = lo[k].min(x);
                hi[k] = hi[k].max(x);
            }
        }
    }
    mean /= total as f64;
    let mut var = Array1::<f64>::zeros(width);
    for seq in dataset {
        for row in seq.data.rows() {
            for (k, &x) in row.iter().enumerate() {
                let d = x - mean[k];
                var[k] += d * d;
            }
        }
    }
    let mut std = var.mapv(|v| (v / total as f64).sqrt());
    for k in 0..width {
        if lo[k] == hi[k] {
            mean[k] = lo[k];
            std[k] = MIN_STD;
        }
    }
    Ok(FeatureNormalizer::new(mean, std))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvh::{parse_bvh, write_bvh, Channel, Joint};
    use crate::rotation::{euler_to_matrix_ordered, max_abs_diff};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain_skeleton(n: usize) -> SkeletonHierarchy {
        let rot = vec![Channel::Zrotation, Channel::Yrotation, Channel::Xrotation];
        let mut joints = vec![Joint {
            name: "Hips".into(),
            parent: None,
            offset: [0.0, 90.0, 0.0],
            channels: [vec![Channel::Xposition, Channel::Yposition, Channel::Zposition], rot.clone()].concat(),
            end_site: None,
        }];
        for i in 1..n {
            joints.push(Joint {
                name: if i == n - 1 { "Head".into() } else { format!("J{i}") },
                parent: Some(i - 1),
                offset: [0.0, 5.0, 1.0],
                channels: if i % 3 == 0 { vec![Channel::Xrotation, Channel::Zrotation, Channel::Yrotation] } else { rot.clone() },
                end_site: None,
            });
        }
        SkeletonHierarchy::new(joints).unwrap()
    }

    fn random_clip(n: usize, frames: usize, seed: u64) -> MotionClip {
        let skel = chain_skeleton(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Array2::<f64>::zeros((frames, skel.channel_count()));
        data.mapv_inplace(|_| rng.random_range(-80.0..80.0));
        MotionClip::new(skel, data, 0.05).unwrap()
    }

    #[test]
    fn width_decomposes_into_blocks() {
        let layout = FeatureLayout::new(DEFAULT_JOINT_COUNT);
        assert_eq!(layout.width(), DEFAULT_FEATURE_DIM);
        let mut owner = vec![0usize; layout.width()];
        for block in layout.blocks() {
            for c in block.range() {
                owner[c] += 1;
            }
        }
        assert!(owner.iter().all(|&c| c == 1));
        assert_eq!(layout.blocks().last().unwrap().range().end, 1141);
        assert_eq!(FeatureLayout::from_width(1141), Some(layout));
        assert_eq!(FeatureLayout::from_width(31), Some(FeatureLayout::new(1)));
        assert_eq!(FeatureLayout::from_width(32), None);
    }

    #[test]
    fn static_pose_has_zero_velocities() {
        let clip = random_clip(4, 1, 1);
        let row = clip.frames.row(0).to_owned();
        let frames = Array2::from_shape_fn((10, row.len()), |(_, c)| row[c]);
        let clip = MotionClip::new(clip.hierarchy, frames, 0.05).unwrap();
        let feats = build_features(&clip, 4).unwrap();
        let layout = feats.layout();
        for name in ["dp_root", "dr_root", "dp_joints", "dr_joints"] {
            let b = layout.block(name);
            assert!(feats.data.slice(s![.., b.range()]).iter().all(|&v| v == 0.0), "{name}");
        }
    }

    #[test]
    fn root_velocity_from_constant_translation() {
        let skel = chain_skeleton(2);
        let frames = Array2::from_shape_fn((6, skel.channel_count()), |(f, c)| if c < 3 { 2.0 * f as f64 } else { 0.0 });
        let clip = MotionClip::new(skel, frames, 0.05).unwrap();
        let feats = build_features(&clip, 2).unwrap();
        for f in 0..6 {
            for k in 0..3 {
                assert!((feats.data[[f, 7 + k]] - 40.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn velocities_integrate_back_and_gaze_is_unit() {
        let clip = random_clip(5, 12, 2);
        let feats = build_features(&clip, 5).unwrap();
        let mut p = [feats.data[[0, 0]], feats.data[[0, 1]], feats.data[[0, 2]]];
        for f in 1..12 {
            for k in 0..3 {
                p[k] += feats.data[[f - 1, 7 + k]] / feats.fps;
                assert!((p[k] - feats.data[[f, k]]).abs() < 1e-6);
            }
        }
        let g = feats.layout().gaze();
        for row in feats.data.rows() {
            let n = (row[g] * row[g] + row[g + 1] * row[g + 1] + row[g + 2] * row[g + 2]).sqrt();
            assert!((n - 1.0).abs() < 1e-6);
            let q = (3..7).map(|i| row[i] * row[i]).sum::<f64>().sqrt();
            assert!((q - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn rejects_wrong_joint_count_and_single_frame() {
        let clip = random_clip(3, 4, 3);
        assert_eq!(build_features(&clip, 75), Err(FeatureError::JointCount { expected: 75, found: 3 }));
        let clip = random_clip(3, 1, 3);
        assert_eq!(build_features(&clip, 3), Err(FeatureError::TooFewFrames(1)));
    }

    #[test]
    fn features_to_motion_recovers_rotations() {
        let clip = random_clip(6, 8, 4);
        let feats = build_features(&clip, 6).unwrap();
        let back = features_to_motion(&feats, &clip.hierarchy).unwrap();
        assert_eq!(back.num_frames(), 8);
        for f in 0..8 {
            let a = clip.local_transforms(f);
            let b = back.local_transforms(f);
            for (la, lb) in a.iter().zip(&b) {
                assert!(max_abs_diff(&la.matrix(), &lb.matrix()) < 1e-4);
                for k in 0..3 {
                    assert!((la.translation[k] - lb.translation[k]).abs() < 1e-6);
                }
            }
        }
        let text = write_bvh(&back, 6);
        assert_eq!(parse_bvh(&text).unwrap().num_frames(), 8);
    }

    #[test]
    fn features_to_motion_checks_width() {
        let clip = random_clip(3, 4, 5);
        let feats = build_features(&clip, 3).unwrap();
        let other = chain_skeleton(4);
        assert!(matches!(features_to_motion(&feats, &other), Err(FeatureError::Dimension { .. })));
    }

    #[test]
    fn six_d_blocks_match_local_rotations() {
        let clip = random_clip(3, 3, 6);
        let feats = build_features(&clip, 3).unwrap();
        let layout = feats.layout();
        let locals = clip.local_transforms(1);
        for (j, l) in locals.iter().enumerate() {
            let r = sixd_to_rot(&sixd_at(feats.data.row(1), layout.r_joint(j))).unwrap();
            let m = euler_to_matrix_ordered(&l.axes, &l.angles);
            assert!(max_abs_diff(&r, &m) < 1e-12);
        }
    }

    #[test]
    fn normalizer_round_trip_and_moments() {
        let seqs: Vec<_> = (0..3).map(|s| build_features(&random_clip(3, 10, 10 + s), 3).unwrap()).collect();
        let norm = fit_normalizer(&seqs).unwrap();
        let mut all = Vec::new();
        for s in &seqs {
            let n = norm.normalize(s).unwrap();
            let back = norm.denormalize(&n).unwrap();
            for (a, b) in back.data.iter().zip(s.data.iter()) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
            all.push(n);
        }
        let width = norm.dim();
        let frames: usize = all.iter().map(|s| s.num_frames()).sum();
        for k in 0..width {
            let vals: Vec<f64> = all.iter().flat_map(|s| s.data.column(k).to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / frames as f64;
            let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / frames as f64).sqrt();
            assert!(mean.abs() <= 1e-6, "col {k} mean {mean}");
            if norm.std[k] > MIN_STD {
                assert!((std - 1.0).abs() <= 1e-6, "col {k} std {std}");
            }
        }
    }

    #[test]
    fn constant_dimension_normalizes_to_zero() {
        let data = Array2::from_shape_fn((5, 31), |(f, c)| if c == 2 { 0.1 } else { f as f64 * c as f64 });
        let seq = GestureFeatureSequence::new(data, 20.0, 1).unwrap();
        let norm = fit_normalizer(std::slice::from_ref(&seq)).unwrap();
        assert_eq!(norm.std[2], MIN_STD);
        let n = norm.normalize(&seq).unwrap();
        assert!(n.data.column(2).iter().all(|&v| v == 0.0));
        assert!(n.data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn empty_dataset_rejected() {
        assert_eq!(fit_normalizer(&[]), Err(FeatureError::EmptyDataset));
    }
}
