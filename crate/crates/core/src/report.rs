//! Graded abelian-group tables and verdict reports.

use crate::context::WindowStamp;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;

/// A finitely generated `Z_(p)`-module: free rank plus `p`-power torsion
/// exponents (ascending, each > 0).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GradedGroup {
    pub free: usize,
    pub torsion: Vec<u32>,
}

impl GradedGroup {
    pub fn trivial() -> Self {
        GradedGroup {
            free: 0,
            torsion: Vec::new(),
        }
    }

    pub fn free(rank: usize) -> Self {
        GradedGroup {
            free: rank,
            torsion: Vec::new(),
        }
    }

    pub fn from_divisors(exponents: &[u32], free: usize) -> Self {
        let mut torsion: Vec<u32> = exponents.iter().copied().filter(|&e| e > 0).collect();
        torsion.sort_unstable();
        GradedGroup { free, torsion }
    }

    pub fn is_trivial(&self) -> bool {
        self.free == 0 && self.torsion.is_empty()
    }

    /// `dim_{F_p}(G (x) F_p)`.
    pub fn fp_dim(&self) -> usize {
        self.free + self.torsion.len()
    }

    pub fn describe(&self, p: u32) -> String {
        if self.is_trivial() {
            return "0".into();
        }
        let mut parts = Vec::new();
        match self.free {
            0 => {}
            1 => parts.push(format!("Z_({p})")),
            r => parts.push(format!("Z_({p})^{r}")),
        }
        for &e in &self.torsion {
            if e == 1 {
                parts.push(format!("Z/{p}"));
            } else {
                parts.push(format!("Z/{p}^{e}"));
            }
        }
        parts.join(" + ")
    }
}

/// Degree-indexed table of graded groups; trivial degrees are not stored.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GradedTable {
    pub entries: BTreeMap<i64, GradedGroup>,
    pub stamp: WindowStamp,
}

impl GradedTable {
    pub fn new(stamp: WindowStamp) -> Self {
        GradedTable {
            entries: BTreeMap::new(),
            stamp,
        }
    }

    pub fn set(&mut self, degree: i64, group: GradedGroup) {
        if !group.is_trivial() {
            self.entries.insert(degree, group);
        }
    }

    pub fn get(&self, degree: i64) -> GradedGroup {
        self.entries
            .get(&degree)
            .cloned()
            .unwrap_or_else(GradedGroup::trivial)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// Degreewise equality of the stored groups.
    pub fn same_groups(&self, other: &GradedTable) -> bool {
        self.entries == other.entries
    }

    pub fn total_fp_dim(&self) -> usize {
        self.entries.values().map(|g| g.fp_dim()).sum()
    }
}

impl fmt::Display for GradedTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.entries.is_empty() {
            writeln!(f, "  (zero in the window)")?;
        }
        for (d, g) in &self.entries {
            writeln!(f, "  degree {d:>4}: {}", g.describe(self.stamp.p))?;
        }
        write!(
            f,
            "  [window {}..{}, p = {}, {} generators{}]",
            self.stamp.d_min,
            self.stamp.d_max,
            self.stamp.p,
            self.stamp.vars,
            if self.stamp.overridden {
                ", soundness overridden"
            } else {
                ""
            }
        )
    }
}
