use crate::error::{Error, Result};

/// Partition of the `d` parameter indices into `G` groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupMaskSet {
    groups: Vec<Vec<usize>>,
    assignment: Vec<usize>,
}

impl GroupMaskSet {
    /// Validates that `groups` is a partition of `0..d` into non-empty sets.
    pub fn from_groups(d: usize, groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut assignment = vec![usize::MAX; d];
        for (g, idxs) in groups.iter().enumerate() {
            if idxs.is_empty() {
                return Err(Error::InvalidArgument(format!("group {g} is empty")));
            }
            for &i in idxs {
                if i >= d {
                    return Err(Error::InvalidArgument(format!("index {i} out of range for d = {d}")));
                }
                if assignment[i] != usize::MAX {
                    return Err(Error::InvalidArgument(format!("index {i} is in two groups")));
                }
                assignment[i] = g;
            }
        }
        if let Some(i) = assignment.iter().position(|&g| g == usize::MAX) {
            return Err(Error::InvalidArgument(format!("index {i} is in no group")));
        }
        Ok(Self { groups, assignment })
    }

    /// Number of groups `G`.
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Total dimension `d`.
    pub fn dim(&self) -> usize {
        self.assignment.len()
    }

    /// `d_g`
    pub fn size(&self, g: usize) -> usize {
        self.groups[g].len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    pub fn indices(&self, g: usize) -> &[usize] {
        &self.groups[g]
    }

    pub fn group_of(&self, i: usize) -> usize {
        self.assignment[i]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Binary selector `M_g` over all `d` indices.
    pub fn mask(&self, g: usize) -> Vec<u8> {
        self.assignment.iter().map(|&a| (a == g) as u8).collect()
    }
}
