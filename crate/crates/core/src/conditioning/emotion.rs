use std::fmt;
use std::str::FromStr;

use ndarray::Array1;

use super::ConditioningError;

pub const EMOTION_COUNT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Emotion {
    Neutral,
    Sad,
    Happy,
    Relaxed,
    Old,
    Angry,
}

impl Emotion {
    pub const ALL: [Emotion; EMOTION_COUNT] =
        [Emotion::Neutral, Emotion::Sad, Emotion::Happy, Emotion::Relaxed, Emotion::Old, Emotion::Angry];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Neutral => "Neutral",
            Emotion::Sad => "Sad",
            Emotion::Happy => "Happy",
            Emotion::Relaxed => "Relaxed",
            Emotion::Old => "Old",
            Emotion::Angry => "Angry",
        }
    }

    pub fn one_hot(self) -> Array1<f64> {
        let mut v = Array1::zeros(EMOTION_COUNT);
        v[self.index()] = 1.0;
        v
    }

    /// Emotion encoded in a corpus file name such as `003_Neutral_2_x_1_0`.
    pub fn from_file_stem(stem: &str) -> Result<Self, ConditioningError> {
        let token = stem.split('_').nth(1).ok_or_else(|| ConditioningError::UnknownEmotion(stem.to_string()))?;
        token.parse()
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Emotion {
    type Err = ConditioningError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Emotion::ALL
            .into_iter()
            .find(|e| e.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ConditioningError::UnknownEmotion(s.to_string()))
    }
}

pub fn encode_emotion(label: &str) -> Result<Array1<f64>, ConditioningError> {
    Ok(label.parse::<Emotion>()?.one_hot())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order() {
        assert_eq!(encode_emotion("Neutral").unwrap().to_vec(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(encode_emotion("Angry").unwrap().to_vec(), vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        for e in Emotion::ALL {
            assert_eq!(e.one_hot().sum(), 1.0);
            assert_eq!(e.as_str().parse::<Emotion>().unwrap(), e);
        }
    }

    #[test]
    fn funny_rejected() {
        assert!(matches!(encode_emotion("Funny"), Err(ConditioningError::UnknownEmotion(_))));
    }

    #[test]
    fn file_stem() {
        assert_eq!(Emotion::from_file_stem("003_Neutral_2_x_1_0").unwrap(), Emotion::Neutral);
        assert_eq!(Emotion::from_file_stem("017_Happy_0_x_1_0").unwrap(), Emotion::Happy);
        assert!(Emotion::from_file_stem("noemotion").is_err());
    }
}
