//! Stacked Latin hypercube designs over submodel instances.
//!
//! Each stack is a `B x L` block whose columns are independent uniform
//! permutations of the `B` instance indices, so every instance of every
//! submodel appears exactly once per stack. `S` stacks give `B' = B S`
//! configurations.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stream::{RandomStream, StreamRng};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignMatrix {
    /// `rows x L` matrix of 0-based instance indices.
    pub entries: Vec<Vec<usize>>,
    /// Instances per submodel (`B`).
    pub instances: usize,
    /// Stack count (`S`).
    pub stacks: usize,
    /// How many stacked rows each row stands for (all 1 before deduplication).
    pub multiplicity: Vec<usize>,
    /// For each of the `B'` stacked rows, the row of `entries` that carries it.
    pub origin: Vec<usize>,
}

/// One `B x L` Latin block: every column is a Fisher-Yates shuffle of `0..B`.
pub fn latin_stack(instances: usize, submodels: usize, rng: &mut StreamRng) -> Result<Vec<Vec<usize>>> {
    if instances == 0 || submodels == 0 {
        return Err(Error::InvalidDesign("B and L must be at least 1".into()));
    }
    let mut rows = vec![vec![0usize; submodels]; instances];
    let mut perm: Vec<usize> = (0..instances).collect();
    for col in 0..submodels {
        perm.sort_unstable();
        perm.shuffle(rng);
        for (row, &level) in rows.iter_mut().zip(&perm) {
            row[col] = level;
        }
    }
    Ok(rows)
}

/// Vertical stack of `stacks` independent Latin blocks; block `s` draws from
/// `stream.derive(s)`.
pub fn stacked_design(instances: usize, stacks: usize, submodels: usize, stream: &RandomStream) -> Result<DesignMatrix> {
    if stacks == 0 {
        return Err(Error::InvalidDesign("S must be at least 1".into()));
    }
    let mut entries = Vec::with_capacity(instances * stacks);
    for s in 0..stacks {
        entries.extend(latin_stack(instances, submodels, &mut stream.derive(s as u64).rng())?);
    }
    let rows = entries.len();
    Ok(DesignMatrix {
        entries,
        instances,
        stacks,
        multiplicity: vec![1; rows],
        origin: (0..rows).collect(),
    })
}

/// Rejects per-submodel instance counts that differ; stacked designs need a common `B`.
pub fn common_instance_count(per_submodel: &[usize]) -> Result<usize> {
    match per_submodel.split_first() {
        None => Err(Error::InvalidDesign("no submodels".into())),
        Some((&b, rest)) if rest.iter().all(|&x| x == b) => Ok(b),
        Some(_) => Err(Error::InvalidDesign(format!(
            "unequal instance counts {per_submodel:?} are not supported"
        ))),
    }
}

impl DesignMatrix {
    pub fn rows(&self) -> usize {
        self.entries.len()
    }

    pub fn submodels(&self) -> usize {
        self.entries.first().map_or(0, Vec::len)
    }

    /// Number of stacked configurations `B'` before any merging.
    pub fn stacked_rows(&self) -> usize {
        self.origin.len()
    }

    /// Merges identical rows, keeping first-occurrence order.
    pub fn deduplicate(&self) -> DesignMatrix {
        let mut index: HashMap<&[usize], usize> = HashMap::new();
        let mut entries: Vec<Vec<usize>> = Vec::new();
        let mut multiplicity: Vec<usize> = Vec::new();
        let mut remap = Vec::with_capacity(self.rows());
        for (row, &mult) in self.entries.iter().zip(&self.multiplicity) {
            let slot = *index.entry(row.as_slice()).or_insert_with(|| {
                entries.push(row.clone());
                multiplicity.push(0);
                entries.len() - 1
            });
            multiplicity[slot] += mult;
            remap.push(slot);
        }
        DesignMatrix {
            entries,
            instances: self.instances,
            stacks: self.stacks,
            multiplicity,
            origin: self.origin.iter().map(|&o| remap[o]).collect(),
        }
    }

    /// The stacked rows in their original order (undoes merging).
    pub fn expanded_rows(&self) -> Vec<&[usize]> {
        self.origin.iter().map(|&o| self.entries[o].as_slice()).collect()
    }

    /// Checks the Latin property of every stack on the expanded design.
    pub fn is_latin(&self) -> bool {
        let rows = self.expanded_rows();
        let b = self.instances;
        if rows.len() != b * self.stacks {
            return false;
        }
        let mut seen = vec![false; b];
        for stack in rows.chunks(b) {
            for col in 0..self.submodels() {
                seen.iter_mut().for_each(|s| *s = false);
                for row in stack {
                    let level = row[col];
                    if level >= b || seen[level] {
                        return false;
                    }
                    seen[level] = true;
                }
            }
        }
        true
    }

    /// Occurrences of `(submodel, instance)` counted with multiplicity.
    pub fn level_counts(&self) -> Vec<Vec<usize>> {
        let mut counts = vec![vec![0usize; self.instances]; self.submodels()];
        for (row, &mult) in self.entries.iter().zip(&self.multiplicity) {
            for (col, &level) in row.iter().enumerate() {
                counts[col][level] += mult;
            }
        }
        counts
    }

    /// CSV with 1-based indices: `config,submodel_1..submodel_L,multiplicity`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("config");
        for l in 1..=self.submodels() {
            let _ = write!(out, ",submodel_{l}");
        }
        out.push_str(",multiplicity\n");
        for (i, (row, mult)) in self.entries.iter().zip(&self.multiplicity).enumerate() {
            let _ = write!(out, "{}", i + 1);
            for level in row {
                let _ = write!(out, ",{}", level + 1);
            }
            let _ = writeln!(out, ",{mult}");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Parses the CSV written by [`to_csv`](Self::to_csv). Stacking metadata is
    /// not stored in the file, so `stacks` is recovered as `B' / B`.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::InvalidDesign("empty design file".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"config") || cols.last() != Some(&"multiplicity") || cols.len() < 3 {
            return Err(Error::InvalidDesign(format!("unexpected header `{header}`")));
        }
        let l = cols.len() - 2;
        let mut entries = Vec::new();
        let mut multiplicity = Vec::new();
        for (n, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != l + 2 {
                return Err(Error::InvalidDesign(format!("row {} has {} fields", n + 1, fields.len())));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::InvalidDesign(format!("row {}: {e}", n + 1)))
            };
            let row = fields[1..=l]
                .iter()
                .map(|s| parse(s).and_then(|v| v.checked_sub(1).ok_or_else(|| Error::InvalidDesign("indices are 1-based".into()))))
                .collect::<Result<Vec<_>>>()?;
            entries.push(row);
            multiplicity.push(parse(fields[l + 1])?);
        }
        let instances = entries.iter().flatten().max().map_or(0, |m| m + 1);
        let mut origin = Vec::new();
        for (i, &m) in multiplicity.iter().enumerate() {
            origin.extend(std::iter::repeat_n(i, m));
        }
        let stacks = if instances == 0 { 0 } else { origin.len() / instances };
        Ok(Self {
            entries,
            instances,
            stacks,
            multiplicity,
            origin,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_instance_stack() {
        let mut rng = RandomStream::root(0).rng();
        assert_eq!(latin_stack(1, 3, &mut rng).unwrap(), vec![vec![0, 0, 0]]);
    }

    #[test]
    fn columns_are_permutations() {
        let mut rng = RandomStream::root(1).rng();
        let block = latin_stack(4, 2, &mut rng).unwrap();
        for col in 0..2 {
            let mut c: Vec<usize> = block.iter().map(|r| r[col]).collect();
            c.sort_unstable();
            assert_eq!(c, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn reference_sized_designs() {
        let d = stacked_design(5, 2, 4, &RandomStream::root(2)).unwrap();
        assert_eq!(d.rows(), 10);
        assert!(d.level_counts().iter().flatten().all(|&c| c == 2));
        assert_eq!(stacked_design(8, 64, 4, &RandomStream::root(3)).unwrap().rows(), 512);
    }

    #[test]
    fn one_stack_equals_latin_stack() {
        let s = RandomStream::root(4);
        let d = stacked_design(6, 1, 3, &s).unwrap();
        let block = latin_stack(6, 3, &mut s.derive(0).rng()).unwrap();
        assert_eq!(d.entries, block);
    }

    #[test]
    fn invalid_sizes() {
        let mut rng = RandomStream::root(0).rng();
        assert!(latin_stack(0, 2, &mut rng).is_err());
        assert!(stacked_design(3, 0, 2, &RandomStream::root(0)).is_err());
        assert!(common_instance_count(&[5, 5, 4]).is_err());
        assert_eq!(common_instance_count(&[5, 5]).unwrap(), 5);
    }

    fn manual(entries: Vec<Vec<usize>>, instances: usize, stacks: usize) -> DesignMatrix {
        let n = entries.len();
        DesignMatrix {
            entries,
            instances,
            stacks,
            multiplicity: vec![1; n],
            origin: (0..n).collect(),
        }
    }

    #[test]
    fn dedup_identical_stacks() {
        let d = manual(vec![vec![0, 0], vec![0, 0]], 1, 2).deduplicate();
        assert_eq!(d.entries, vec![vec![0, 0]]);
        assert_eq!(d.multiplicity, vec![2]);
        assert_eq!(d.origin, vec![0, 0]);
    }

    #[test]
    fn dedup_two_reversed_stacks() {
        // Stacks (1,2) and (2,1) with L = 1: rows {1, 2} each twice.
        let d = manual(vec![vec![0], vec![1], vec![1], vec![0]], 2, 2).deduplicate();
        assert_eq!(d.entries, vec![vec![0], vec![1]]);
        assert_eq!(d.multiplicity, vec![2, 2]);
        assert_eq!(d.origin, vec![0, 1, 1, 0]);
        assert!(d.is_latin());
    }

    #[test]
    fn dedup_distinct_rows_unchanged() {
        let d = stacked_design(7, 1, 2, &RandomStream::root(9)).unwrap();
        assert_eq!(d.deduplicate(), d);
    }

    #[test]
    fn csv_round_trip() {
        let d = stacked_design(3, 2, 2, &RandomStream::root(5)).unwrap().deduplicate();
        let text = d.to_csv();
        assert!(text.starts_with("config,submodel_1,submodel_2,multiplicity\n"));
        let back = DesignMatrix::from_csv(&text).unwrap();
        assert_eq!(back.entries, d.entries);
        assert_eq!(back.multiplicity, d.multiplicity);
        assert_eq!(back.level_counts(), d.level_counts());
    }
}
