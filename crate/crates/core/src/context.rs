//! The truncation context: prime, generator cutoff and degree window.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Ambient approximation parameters for `BP_*` and `BP_*BP`.
///
/// Degreewise answers are exact for internal degrees below the soundness
/// bound `2(p^(N+1) - 1)`, where the first discarded generator would enter.
/// The monomial bounds `mono_pos`/`mono_neg` limit how large the positive
/// and negative parts of a single monomial may grow; they default to a
/// margin beyond the window so that coaction corrections of elements near
/// the window edge are still seen.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationContext {
    pub p: u32,
    /// Number of polynomial generators `v_1..v_N` (and `t_1..t_N`).
    pub vars: usize,
    pub d_min: i64,
    pub d_max: i64,
    pub mono_pos: i64,
    pub mono_neg: i64,
    /// Set when the window was forced past the soundness bound.
    pub overridden: bool,
}

fn is_prime(p: u32) -> bool {
    p >= 2 && (2..p).take_while(|k| k * k <= p).all(|k| p % k != 0)
}

impl TruncationContext {
    pub fn new(p: u32, vars: usize, d_min: i64, d_max: i64) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::InvalidContext(format!("{p} is not prime")));
        }
        if vars == 0 {
            return Err(Error::InvalidContext("need at least one generator".into()));
        }
        if d_min > 0 || d_max < 0 || d_min > d_max {
            return Err(Error::InvalidContext(format!(
                "window [{d_min}, {d_max}] must contain 0"
            )));
        }
        let sound = sound_bound(p, vars);
        if d_max >= sound || -d_min >= sound {
            return Err(Error::WindowExceeded {
                degree: d_max.max(-d_min),
                lo: -(sound - 1),
                hi: sound - 1,
            });
        }
        let top_gen = 2 * (p as i64).pow(vars as u32) - 2;
        if d_max < top_gen {
            return Err(Error::InvalidContext(format!(
                "window top {d_max} is below |v_{vars}| = {top_gen}; shrink vars or widen the window"
            )));
        }
        // Margin for edge-of-window coaction corrections.
        let slack = top_gen;
        Ok(TruncationContext {
            p,
            vars,
            d_min,
            d_max,
            mono_pos: d_max + slack,
            mono_neg: d_min - slack,
            overridden: false,
        })
    }

    /// Same as [`TruncationContext::new`] but tolerates a window beyond the
    /// soundness bound.  The context is stamped `overridden`.
    pub fn new_overriding(p: u32, vars: usize, d_min: i64, d_max: i64) -> Result<Self> {
        match Self::new(p, vars, d_min, d_max) {
            Ok(c) => Ok(c),
            Err(Error::WindowExceeded { .. }) => {
                let top_gen = 2 * (p as i64).pow(vars as u32) - 2;
                Ok(TruncationContext {
                    p,
                    vars,
                    d_min,
                    d_max,
                    mono_pos: d_max + top_gen,
                    mono_neg: d_min - top_gen,
                    overridden: true,
                })
            }
            Err(e) => Err(e),
        }
    }

    /// Default desk-scale context for a prime: `N` and window chosen so the
    /// window sits just under the soundness bound.
    pub fn desk(p: u32) -> Self {
        match p {
            2 => TruncationContext::new(2, 3, -28, 28).unwrap(),
            3 => TruncationContext::new(3, 2, -48, 48).unwrap(),
            _ => {
                let b = sound_bound(p, 1) - 2;
                TruncationContext::new(p, 1, -b, b).unwrap()
            }
        }
    }

    /// `|v_i| = |t_i| = 2(p^i - 1)`; `v_0 = p` has degree 0.
    pub fn gen_degree(&self, i: usize) -> i64 {
        if i == 0 {
            0
        } else {
            2 * ((self.p as i64).pow(i as u32) - 1)
        }
    }

    /// First internal degree at which the discarded generator `v_{N+1}`
    /// would contribute.
    pub fn soundness_bound(&self) -> i64 {
        sound_bound(self.p, self.vars)
    }

    pub fn window(&self) -> std::ops::RangeInclusive<i64> {
        self.d_min..=self.d_max
    }

    pub fn contains(&self, d: i64) -> bool {
        self.d_min <= d && d <= self.d_max
    }

    pub fn require_in_window(&self, d: i64) -> Result<()> {
        if self.contains(d) {
            Ok(())
        } else {
            Err(Error::WindowExceeded {
                degree: d,
                lo: self.d_min,
                hi: self.d_max,
            })
        }
    }

    /// Provenance stamp attached to every report.
    pub fn stamp(&self) -> WindowStamp {
        WindowStamp {
            p: self.p,
            vars: self.vars,
            d_min: self.d_min,
            d_max: self.d_max,
            soundness_bound: self.soundness_bound(),
            overridden: self.overridden,
        }
    }
}

fn sound_bound(p: u32, vars: usize) -> i64 {
    2 * ((p as i64).pow(vars as u32 + 1) - 1)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowStamp {
    pub p: u32,
    pub vars: usize,
    pub d_min: i64,
    pub d_max: i64,
    pub soundness_bound: i64,
    pub overridden: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_scale_windows() {
        let c2 = TruncationContext::desk(2);
        assert_eq!(c2.soundness_bound(), 30);
        assert_eq!((c2.d_min, c2.d_max), (-28, 28));
        let c3 = TruncationContext::desk(3);
        assert_eq!(c3.soundness_bound(), 52);
        assert_eq!((c3.d_min, c3.d_max), (-48, 48));
    }

    #[test]
    fn degrees() {
        let c = TruncationContext::desk(2);
        assert_eq!(c.gen_degree(0), 0);
        assert_eq!(c.gen_degree(1), 2);
        assert_eq!(c.gen_degree(2), 6);
        assert_eq!(c.gen_degree(3), 14);
        let c = TruncationContext::desk(3);
        assert_eq!(c.gen_degree(1), 4);
        assert_eq!(c.gen_degree(2), 16);
    }

    #[test]
    fn window_guard() {
        assert!(TruncationContext::new(2, 3, -30, 30).is_err());
        assert!(TruncationContext::new_overriding(2, 3, -30, 30)
            .unwrap()
            .overridden);
        assert!(TruncationContext::new(4, 3, -10, 10).is_err());
    }
}
