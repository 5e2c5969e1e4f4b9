//! Procedural corpus with the same file layout as the real one.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::bvh::{write_bvh, Channel, Joint, MotionClip, SkeletonHierarchy, DEFAULT_PRECISION};
use crate::conditioning::wav::encode_wav_pcm16;
use crate::conditioning::{write_textgrid, Emotion, WordInterval, TARGET_SAMPLE_RATE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyCorpusConfig {
    pub clips: usize,
    pub frames: usize,
    pub joint_count: usize,
    pub fps: f64,
    pub seed: u64,
}

impl Default for ToyCorpusConfig {
    fn default() -> Self {
        Self { clips: 4, frames: 240, joint_count: 75, fps: 20.0, seed: 0 }
    }
}

const VOCABULARY: &[&str] = &[
    "hello", "world", "gesture", "motion", "speech", "really", "think", "about", "this", "maybe", "never", "always",
    "hands", "look", "there", "great", "small", "move", "left", "right",
];

const FINGERS: [&str; 5] = ["Thumb", "Index", "Middle", "Ring", "Pinky"];

fn joint(name: String, parent: usize, offset: [f64; 3]) -> Joint {
    Joint {
        name,
        parent: Some(parent),
        offset,
        channels: vec![Channel::Zrotation, Channel::Yrotation, Channel::Xrotation],
        end_site: None,
    }
}

/// Full 75-joint skeleton in depth-first order, so any prefix is itself a
/// valid hierarchy.
pub fn full_skeleton_joints() -> Vec<Joint> {
    let mut joints = vec![Joint {
        name: "Hips".into(),
        parent: None,
        offset: [0.0, 0.0, 0.0],
        channels: vec![
            Channel::Xposition,
            Channel::Yposition,
            Channel::Zposition,
            Channel::Zrotation,
            Channel::Yrotation,
            Channel::Xrotation,
        ],
        end_site: None,
    }];
    let spine = [
        ("Spine", 10.0),
        ("Spine1", 10.0),
        ("Spine2", 10.0),
        ("Spine3", 10.0),
        ("Neck", 12.0),
        ("Neck1", 5.0),
        ("Head", 8.0),
        ("HeadEnd", 15.0),
    ];
    for (name, y) in spine {
        let parent = joints.len() - 1;
        joints.push(joint(name.into(), parent, [0.0, y, 0.0]));
    }
    let spine3 = 4;
    for (side, sx) in [("Left", 1.0), ("Right", -1.0)] {
        let shoulder = joints.len();
        joints.push(joint(format!("{side}Shoulder"), spine3, [4.0 * sx, 10.0, 0.0]));
        joints.push(joint(format!("{side}Arm"), shoulder, [12.0 * sx, 0.0, 0.0]));
        joints.push(joint(format!("{side}ForeArm"), shoulder + 1, [28.0 * sx, 0.0, 0.0]));
        joints.push(joint(format!("{side}Hand"), shoulder + 2, [25.0 * sx, 0.0, 0.0]));
        let hand = shoulder + 3;
        for (k, finger) in FINGERS.iter().enumerate() {
            let z = -3.0 + 1.5 * k as f64;
            joints.push(joint(format!("{side}Hand{finger}1"), hand, [4.0 * sx, 0.0, z]));
            for seg in 2..=5 {
                let parent = joints.len() - 1;
                joints.push(joint(format!("{side}Hand{finger}{seg}"), parent, [2.5 * sx, 0.0, 0.0]));
            }
        }
    }
    for (side, sx) in [("Left", 1.0), ("Right", -1.0)] {
        let up = joints.len();
        joints.push(joint(format!("{side}UpLeg"), 0, [9.0 * sx, -5.0, 0.0]));
        joints.push(joint(format!("{side}Leg"), up, [0.0, -42.0, 0.0]));
        joints.push(joint(format!("{side}Foot"), up + 1, [0.0, -40.0, 0.0]));
        joints.push(joint(format!("{side}ToeBase"), up + 2, [0.0, -5.0, 12.0]));
    }
    joints
}

/// First `joint_count` joints of the full skeleton; childless joints get an
/// End Site.
pub fn toy_skeleton(joint_count: usize) -> Result<SkeletonHierarchy, DatasetError> {
    let full = full_skeleton_joints();
    if joint_count == 0 || joint_count > full.len() {
        return Err(DatasetError::Config(format!("toy skeleton supports 1..={} joints", full.len())));
    }
    let mut joints: Vec<Joint> = full.into_iter().take(joint_count).collect();
    let has_child: Vec<bool> = (0..joints.len()).map(|i| joints.iter().any(|j| j.parent == Some(i))).collect();
    for (j, &child) in joints.iter_mut().zip(&has_child) {
        if !child {
            j.end_site = Some([0.0, 3.0, 0.0]);
        }
    }
    Ok(SkeletonHierarchy::new(joints)?)
}

fn toy_motion(skeleton: &SkeletonHierarchy, frames: usize, fps: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let channels = skeleton.channel_count();
    // amplitude, frequency, phase per channel
    let params: Vec<(f64, f64, f64)> = skeleton
        .joints
        .iter()
        .flat_map(|j| j.channels.iter().map(move |c| (j.parent.is_none(), *c)))
        .map(|(root, c)| {
            let amp = match (root, c.is_rotation()) {
                (true, false) => rng.random_range(1.0..6.0),
                (true, true) => rng.random_range(2.0..10.0),
                (false, _) => rng.random_range(3.0..25.0),
            };
            (amp, rng.random_range(0.2..1.5), rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    let rest_height = 95.0;
    Array2::from_shape_fn((frames, channels), |(f, k)| {
        let t = f as f64 / fps;
        let (a, w, p) = params[k];
        let v = a * (2.0 * PI * w * t + p).sin();
        if k == 1 && skeleton.joints[0].has_position_channels() {
            v + rest_height
        } else {
            v
        }
    })
}

fn toy_audio(duration: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = (duration * TARGET_SAMPLE_RATE as f64).round() as usize;
    let base = rng.random_range(110.0..260.0);
    let partials: Vec<(f64, f64)> = (1..=3).map(|h| (base * h as f64, rng.random_range(0.1..0.3))).collect();
    let syllable = rng.random_range(2.0..5.0);
    let phase = rng.random_range(0.0..2.0 * PI);
    (0..n)
        .map(|i| {
            let t = i as f64 / TARGET_SAMPLE_RATE as f64;
            let env = 0.5 + 0.5 * (2.0 * PI * syllable * t + phase).sin();
            env * partials.iter().map(|(f, a)| a * (2.0 * PI * f * t).sin()).sum::<f64>()
        })
        .collect()
}

fn toy_words(duration: f64, rng: &mut ChaCha8Rng) -> Vec<WordInterval> {
    let mut words = Vec::new();
    let mut start = 0.1;
    while start + 0.4 <= duration {
        let word = VOCABULARY[rng.random_range(0..VOCABULARY.len())].to_string();
        words.push(WordInterval { word, start, end: start + 0.4 });
        start = ((start + 0.5) * 1e6).round() / 1e6;
    }
    words
}

pub fn toy_clip_stem(index: usize) -> String {
    format!("{:03}_{}_0_x_1_0", index + 1, Emotion::ALL[index % Emotion::ALL.len()])
}

/// Writes `{stem}.bvh`, `{stem}.wav` and `{stem}.TextGrid` for each clip and
/// returns the stems.
pub fn synthesize_toy_corpus(dir: &Path, config: &ToyCorpusConfig) -> Result<Vec<String>, DatasetError> {
    if config.fps <= 0.0 || config.frames < 2 {
        return Err(DatasetError::Config("toy corpus needs fps > 0 and at least 2 frames".into()));
    }
    std::fs::create_dir_all(dir)?;
    let skeleton = toy_skeleton(config.joint_count)?;
    let duration = config.frames as f64 / config.fps;
    let mut stems = Vec::with_capacity(config.clips);
    for i in 0..config.clips {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
        let stem = toy_clip_stem(i);
        let motion = toy_motion(&skeleton, config.frames, config.fps, &mut rng);
        let clip = MotionClip::new(skeleton.clone(), motion, 1.0 / config.fps)?;
        let path = |ext: &str| -> PathBuf { dir.join(format!("{stem}.{ext}")) };
        std::fs::write(path("bvh"), write_bvh(&clip, DEFAULT_PRECISION))?;
        std::fs::write(path("wav"), encode_wav_pcm16(&toy_audio(duration, &mut rng), TARGET_SAMPLE_RATE))?;
        std::fs::write(path("TextGrid"), write_textgrid(&toy_words(duration, &mut rng), duration))?;
        stems.push(stem);
    }
    Ok(stems)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bvh::parse_bvh;

    #[test]
    fn skeleton_has_75_joints_rooted_at_hips() {
        let s = toy_skeleton(75).unwrap();
        assert_eq!(s.len(), 75);
        assert_eq!(s.joints[0].name, "Hips");
        assert!(s.find("Head").is_some());
        assert!(s.find("RightHandPinky5").is_some());
        assert_eq!(s.channel_count(), 6 + 74 * 3);
        assert_eq!(toy_skeleton(1).unwrap().len(), 1);
        assert!(toy_skeleton(76).is_err());
    }

    #[test]
    fn corpus_is_deterministic_and_parses() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let cfg = ToyCorpusConfig { clips: 2, frames: 100, ..Default::default() };
        let stems = synthesize_toy_corpus(a.path(), &cfg).unwrap();
        synthesize_toy_corpus(b.path(), &cfg).unwrap();
        assert_eq!(stems, vec!["001_Neutral_0_x_1_0", "002_Sad_0_x_1_0"]);
        for stem in &stems {
            for ext in ["bvh", "wav", "TextGrid"] {
                let name = format!("{stem}.{ext}");
                assert_eq!(std::fs::read(a.path().join(&name)).unwrap(), std::fs::read(b.path().join(&name)).unwrap());
            }
            let clip = parse_bvh(&std::fs::read_to_string(a.path().join(format!("{stem}.bvh"))).unwrap()).unwrap();
            assert_eq!(clip.hierarchy.len(), 75);
            assert_eq!(clip.num_frames(), 100);
        }
    }
}
