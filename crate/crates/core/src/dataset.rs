use crate::error::{Error, Result};
use crate::proximal::Matrix;

/// Labeled data with samples as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub labels: Vec<usize>,
    pub name: String,
    pub class_count: usize,
}

impl Dataset {
    /// Labels may be arbitrary nonnegative integers; they are kept as given
    /// and `class_count` is `max + 1`.
    pub fn new(name: impl Into<String>, x: Matrix, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != x.ncols() {
            return Err(Error::Data(format!(
                "{} labels for {} samples",
                labels.len(),
                x.ncols()
            )));
        }
        if x.ncols() < 2 {
            return Err(Error::Data("need at least two samples".into()));
        }
        let class_count = labels.iter().max().map_or(0, |m| m + 1);
        Ok(Self {
            x,
            labels,
            name: name.into(),
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }

    /// Sample indices of each class, in increasing order.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.class_count];
        for (i, &l) in self.labels.iter().enumerate() {
            members[l].push(i);
        }
        members
    }
}
