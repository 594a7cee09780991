use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the contamination of a dataset was produced.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContaminatedDataset {
    features: Array2<f32>,
    observed: Vec<usize>,
    clean: Vec<usize>,
    contaminated: Vec<usize>,
    num_classes: usize,
    provenance: Provenance,
}

impl ContaminatedDataset {
    /// A dataset whose observed labels equal the clean labels.
    pub fn clean(features: Array2<f32>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        Self::from_parts(features, labels.clone(), labels, num_classes, Provenance::default())
    }

    /// Builds a dataset and derives the contaminated set from label disagreement.
    pub fn from_parts(
        features: Array2<f32>,
        observed: Vec<usize>,
        clean: Vec<usize>,
        num_classes: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        let n = features.nrows();
        if observed.len() != n || clean.len() != n {
            return Err(Error::invalid(format!(
                "{n} feature rows but {} observed and {} clean labels",
                observed.len(),
                clean.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::invalid("dataset needs at least one class"));
        }
        if let Some(i) = observed
            .iter()
            .chain(&clean)
            .position(|&y| y >= num_classes)
        {
            return Err(Error::invalid(format!(
                "label at position {} exceeds class count {num_classes}",
                i % n.max(1)
            )));
        }
        let contaminated = (0..n).filter(|&i| observed[i] != clean[i]).collect();
        Ok(ContaminatedDataset {
            features,
            observed,
            clean,
            contaminated,
            num_classes,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Array2<f32> {
        &self.features
    }

    pub fn observed_labels(&self) -> &[usize] {
        &self.observed
    }

    pub fn clean_labels(&self) -> &[usize] {
        &self.clean
    }

    /// Sorted indices whose observed label is corrupted.
    pub fn contaminated_set(&self) -> &[usize] {
        &self.contaminated
    }

    pub fn contamination_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        for &i in &self.contaminated {
            mask[i] = true;
        }
        mask
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// Replaces the observed labels, e.g. after contamination.
    pub fn with_observed(self, observed: Vec<usize>, provenance: Provenance) -> Result<Self> {
        Self::from_parts(self.features, observed, self.clean, self.num_classes, provenance)
    }

    /// Rows `ids`, in that order.
    pub fn select(&self, ids: &[usize]) -> Result<Self> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.len()) {
            return Err(Error::invalid(format!(
                "row {bad} out of range for {} samples",
                self.len()
            )));
        }
        Self::from_parts(
            self.features.select(Axis(0), ids),
            ids.iter().map(|&i| self.observed[i]).collect(),
            ids.iter().map(|&i| self.clean[i]).collect(),
            self.num_classes,
            self.provenance,
        )
    }

    /// Keeps samples whose clean label is in `keep` and renumbers classes to
    /// `0..keep.len()` in ascending order of the original ids.
    pub fn subset_classes(&self, keep: &[usize]) -> Result<Self> {
        let mut classes = keep.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if classes.is_empty() {
            return Err(Error::invalid("class subset is empty"));
        }
        if let Some(&bad) = classes.iter().find(|&&c| c >= self.num_classes) {
            return Err(Error::invalid(format!(
                "class {bad} does not exist (dataset has {})",
                self.num_classes
            )));
        }
        let mut remap = vec![usize::MAX; self.num_classes];
        for (new, &old) in classes.iter().enumerate() {
            remap[old] = new;
        }
        let ids: Vec<usize> = (0..self.len())
            .filter(|&i| remap[self.clean[i]] != usize::MAX)
            .collect();
        if ids.is_empty() {
            return Err(Error::invalid(format!("no samples with clean label in {classes:?}")));
        }
        if let Some(&i) = ids.iter().find(|&&i| remap[self.observed[i]] == usize::MAX) {
            return Err(Error::invalid(format!(
                "sample {i} has observed label {} outside the kept classes",
                self.observed[i]
            )));
        }
        Self::from_parts(
            self.features.select(Axis(0), &ids),
            ids.iter().map(|&i| remap[self.observed[i]]).collect(),
            ids.iter().map(|&i| remap[self.clean[i]]).collect(),
            classes.len(),
            self.provenance,
        )
    }

    /// Per-class counts of the clean labels.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.clean {
            counts[y] += 1;
        }
        counts
    }
}
