use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Fixed, untuned exploration sequences of the step index `t >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Formula {
    /// `scale / t`
    Harmonic { scale: f64 },
    /// `base ^ t`
    Geometric { base: f64 },
    /// `start - scale / t`
    Ramp { start: f64, scale: f64 },
}

impl Formula {
    pub fn value(&self, t: usize) -> f64 {
        let t = t.max(1) as f64;
        match *self {
            Formula::Harmonic { scale } => scale / t,
            Formula::Geometric { base } => base.powf(t),
            Formula::Ramp { start, scale } => start - scale / t,
        }
    }
}

fn number(s: &str, whole: &str) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Config(format!("cannot parse formula {whole:?}")))
}

impl FromStr for Formula {
    type Err = Error;

    /// Accepts `c/t`, `b^t` and `a-b/t`.
    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if let Some(base) = compact.strip_suffix("^t") {
            return Ok(Formula::Geometric {
                base: number(base, s)?,
            });
        }
        if let Some(head) = compact.strip_suffix("/t") {
            // a split at a '-' past the first character separates a ramp
            if let Some(pos) = head[1..].find('-').map(|p| p + 1) {
                return Ok(Formula::Ramp {
                    start: number(&head[..pos], s)?,
                    scale: number(&head[pos + 1..], s)?,
                });
            }
            return Ok(Formula::Harmonic {
                scale: number(head, s)?,
            });
        }
        Err(Error::Config(format!(
            "unknown formula {s:?}; expected c/t, b^t or a-b/t"
        )))
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Harmonic { scale } => write!(f, "{scale}/t"),
            Formula::Geometric { base } => write!(f, "{base}^t"),
            Formula::Ramp { start, scale } => write!(f, "{start}-{scale}/t"),
        }
    }
}
