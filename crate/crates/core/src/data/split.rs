use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A contiguous slice of a dataset in its stored sample order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    FirstHalf,
    SecondHalf,
    All,
    Custom { start: usize, end: usize },
}

impl Split {
    pub fn range(self, n: usize) -> Result<Range<usize>> {
        match self {
            Split::FirstHalf => Ok(0..n / 2),
            Split::SecondHalf => Ok(n / 2..n),
            Split::All => Ok(0..n),
            Split::Custom { start, end } if start <= end && end <= n => Ok(start..end),
            Split::Custom { start, end } => Err(Error::Config(format!(
                "split {start}..{end} out of range for {n} samples"
            ))),
        }
    }

    /// Whether the two splits share a sample in a dataset of `n` samples.
    pub fn overlaps(self, other: Split, n: usize) -> Result<bool> {
        let (a, b) = (self.range(n)?, other.range(n)?);
        Ok(a.start < b.end && b.start < a.end)
    }

    pub(crate) fn encode(self) -> (u8, u64, u64) {
        match self {
            Split::FirstHalf => (0, 0, 0),
            Split::SecondHalf => (1, 0, 0),
            Split::All => (2, 0, 0),
            Split::Custom { start, end } => (3, start as u64, end as u64),
        }
    }

    pub(crate) fn decode(tag: u8, start: u64, end: u64) -> Result<Self> {
        Ok(match tag {
            0 => Split::FirstHalf,
            1 => Split::SecondHalf,
            2 => Split::All,
            3 => Split::Custom {
                start: start as usize,
                end: end as usize,
            },
            t => return Err(Error::Format(format!("unknown split tag {t}"))),
        })
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::FirstHalf => f.write_str("first_half"),
            Split::SecondHalf => f.write_str("second_half"),
            Split::All => f.write_str("all"),
            Split::Custom { start, end } => write!(f, "{start}..{end}"),
        }
    }
}

/// Accepts `first_half`, `second_half`, `all` or `start..end`.
impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first_half" => Ok(Split::FirstHalf),
            "second_half" => Ok(Split::SecondHalf),
            "all" => Ok(Split::All),
            _ => {
                let bad = || Error::Config(format!("bad split {s:?}"));
                let (a, b) = s.split_once("..").ok_or_else(bad)?;
                let start = a.trim().parse().map_err(|_| bad())?;
                let end = b.trim().parse().map_err(|_| bad())?;
                if start > end {
                    return Err(bad());
                }
                Ok(Split::Custom { start, end })
            }
        }
    }
}
