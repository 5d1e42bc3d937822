//! Morse relations between index counts of found rays and Betti numbers of
//! the spatial region.
//!
//! With counts `c_l` (nondegenerate rays of index `l`) and Betti numbers
//! `β_l`, the relations say `Σ c_l κ^l = Σ β_l κ^l + (1 + κ) S(κ)` for a
//! series `S` with nonnegative coefficients. `S` is recovered degree by
//! degree from `S_0 = c_0 - β_0`, `S_l = c_l - β_l - S_{l-1}`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A Betti number, possibly infinite.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Betti {
    Finite(u64),
    Infinite(InfiniteTag),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfiniteTag {
    #[serde(rename = "inf")]
    Inf,
}

impl fmt::Display for Betti {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Betti::Finite(v) => write!(f, "{v}"),
            Betti::Infinite(_) => write!(f, "inf"),
        }
    }
}

/// Betti numbers of a contractible space: `β_0 = 1`, all others zero.
pub fn contractible_betti() -> BTreeMap<usize, Betti> {
    BTreeMap::from([(0, Betti::Finite(1))])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorseLedger {
    /// Nondegenerate records per index.
    pub counts: BTreeMap<usize, u64>,
    pub betti: BTreeMap<usize, Betti>,
    /// Records left out because they are degenerate.
    pub excluded_degenerate: usize,
    /// Highest degree the relations are checked to.
    pub max_degree: usize,
}

impl MorseLedger {
    pub fn count(&self, l: usize) -> u64 {
        self.counts.get(&l).copied().unwrap_or(0)
    }

    pub fn betti_at(&self, l: usize) -> Betti {
        self.betti.get(&l).copied().unwrap_or(Betti::Finite(0))
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// Tallies `(index, nondegenerate)` pairs. The default truncation degree is
/// two above the highest index or Betti degree present.
pub fn assemble_series(
    records: &[(usize, bool)],
    betti: &BTreeMap<usize, Betti>,
    max_degree: Option<usize>,
) -> MorseLedger {
    let mut counts = BTreeMap::new();
    let mut excluded = 0;
    for &(index, nondegenerate) in records {
        if nondegenerate {
            *counts.entry(index).or_insert(0) += 1;
        } else {
            excluded += 1;
        }
    }
    let top = counts
        .keys()
        .chain(betti.keys())
        .copied()
        .max()
        .unwrap_or(0);
    MorseLedger {
        counts,
        betti: betti.clone(),
        excluded_degenerate: excluded,
        max_degree: max_degree.unwrap_or(top + 2),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Violated { degree: usize },
    /// Consistent on the nondegenerate records, but some records were excluded.
    DegenerateWarning,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Consistent => write!(f, "consistent"),
            Verdict::Violated { degree } => write!(f, "violated({degree})"),
            Verdict::DegenerateWarning => write!(f, "degenerate-warning"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationsReport {
    /// `S_0 ..= S_L`; `None` from the first infinite Betti number on.
    pub s: Vec<Option<i64>>,
    pub verdict: Verdict,
    /// `Σ c_l - Σ β_l - (2 S(1) - S_L)` over degrees `0..=L`; zero whenever
    /// all Betti numbers up to `L` are finite.
    pub identity_defect: Option<i64>,
    /// `S_L`, the coefficient that would continue past the truncation degree.
    pub remainder: Option<i64>,
    /// Degrees with `c_l < β_l` (the weak inequalities).
    pub below_betti: Vec<usize>,
}

pub fn check_relations(ledger: &MorseLedger) -> RelationsReport {
    let mut s: Vec<Option<i64>> = Vec::with_capacity(ledger.max_degree + 1);
    let mut verdict = None;
    let mut prev: Option<i64> = Some(0);
    for l in 0..=ledger.max_degree {
        let c = ledger.count(l) as i64;
        let cur = match (ledger.betti_at(l), prev) {
            (Betti::Finite(b), Some(p)) => Some(c - b as i64 - p),
            _ => None,
        };
        if verdict.is_none() && cur.map_or(true, |v| v < 0) {
            verdict = Some(Verdict::Violated { degree: l });
        }
        s.push(cur);
        prev = cur;
    }
    let verdict = verdict.unwrap_or(if ledger.excluded_degenerate > 0 {
        Verdict::DegenerateWarning
    } else {
        Verdict::Consistent
    });
    let remainder = *s.last().unwrap();
    let identity_defect = if s.iter().all(|v| v.is_some()) {
        let sc: i64 = (0..=ledger.max_degree).map(|l| ledger.count(l) as i64).sum();
        let sb: i64 = (0..=ledger.max_degree)
            .map(|l| match ledger.betti_at(l) {
                Betti::Finite(b) => b as i64,
                Betti::Infinite(_) => 0,
            })
            .sum();
        let s1: i64 = s.iter().map(|v| v.unwrap()).sum();
        Some(sc - sb - (2 * s1 - remainder.unwrap()))
    } else {
        None
    };
    let below_betti = (0..=ledger.max_degree)
        .filter(|&l| match ledger.betti_at(l) {
            Betti::Finite(b) => ledger.count(l) < b,
            Betti::Infinite(_) => true,
        })
        .collect();
    RelationsReport {
        s,
        verdict,
        identity_defect,
        remainder,
        below_betti,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityReport {
    pub total: u64,
    pub contractible: bool,
    pub consistent: bool,
    pub message: String,
}

/// Contractible regions carry an odd number of nondegenerate rays; other
/// regions at least two.
pub fn parity_check(ledger: &MorseLedger, contractible: bool) -> ParityReport {
    let total = ledger.total();
    let (consistent, message) = if contractible {
        if total % 2 == 1 {
            (true, format!("{total} nondegenerate rays, odd as expected"))
        } else {
            (
                false,
                format!("{total} nondegenerate rays in a contractible region; an odd count is expected, so at least one ray is missing"),
            )
        }
    } else if total >= 2 {
        (true, format!("{total} nondegenerate rays, at least two as expected"))
    } else {
        (
            false,
            format!("{total} nondegenerate rays in a non-contractible region; at least two are expected"),
        )
    };
    let message = if ledger.betti.values().any(|b| matches!(b, Betti::Infinite(_))) {
        let top = ledger.counts.keys().next_back().copied().unwrap_or(0);
        format!(
            "{message}; infinite Betti data predicts infinitely many rays, which cannot be confirmed here (found {total}, largest index {top})"
        )
    } else {
        message
    };
    ParityReport {
        total,
        contractible,
        consistent,
        message,
    }
}
