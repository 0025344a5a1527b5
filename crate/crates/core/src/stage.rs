use serde::{Deserialize, Serialize};
use std::fmt;

/// The five AASM sleep stages with their conventional integer codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SleepStage {
    Awake = 1,
    Rem = 2,
    N1 = 3,
    N2 = 4,
    N3 = 5,
}

impl SleepStage {
    pub const COUNT: usize = 5;

    pub const ALL: [SleepStage; 5] = [
        SleepStage::Awake,
        SleepStage::Rem,
        SleepStage::N1,
        SleepStage::N2,
        SleepStage::N3,
    ];

    /// Integer code in `1..=5`.
    pub fn code(self) -> u8 {
        self as u8
    }

    /// Zero-based position, for matrix indexing.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1..=5 => Some(Self::ALL[code as usize - 1]),
            _ => None,
        }
    }

    pub fn from_index(idx: usize) -> Option<Self> {
        Self::ALL.get(idx).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SleepStage::Awake => "Awake",
            SleepStage::Rem => "REM",
            SleepStage::N1 => "N1",
            SleepStage::N2 => "N2",
            SleepStage::N3 => "N3",
        }
    }
}

impl fmt::Display for SleepStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_round_trip() {
        for (i, s) in SleepStage::ALL.iter().enumerate() {
            assert_eq!(s.code() as usize, i + 1);
            assert_eq!(s.index(), i);
            assert_eq!(SleepStage::from_code(s.code()), Some(*s));
        }
        assert_eq!(SleepStage::from_code(0), None);
        assert_eq!(SleepStage::from_code(6), None);
    }
}
