use serde::{Deserialize, Serialize};

use crate::diffcore::Rng;
use crate::error::{Error, Result};
use crate::interpretcc::FeatureGroupSpec;
use crate::Tensor;

/// Labeled tabular data, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    num_features: usize,
    labels: Vec<usize>,
    num_classes: usize,
    feature_names: Vec<String>,
    /// Ground-truth relevant group per row, for generators that plant one.
    pub relevant_groups: Option<Vec<usize>>,
    /// Probe-category tag per row.
    pub categories: Option<Vec<String>>,
    /// Group layout that the data was generated with, if any.
    pub groups: Option<FeatureGroupSpec>,
    /// Statistics applied by [`Standardization::apply`], if standardized.
    pub standardization: Option<Standardization>,
}

impl Dataset {
    pub fn new(features: Vec<f64>, num_features: usize, labels: Vec<usize>, feature_names: Vec<String>) -> Result<Self> {
        if num_features == 0 {
            return Err(Error::Data("dataset needs at least one feature".into()));
        }
        if features.len() != labels.len() * num_features {
            return Err(Error::Data(format!(
                "{} feature values do not form {} rows of {num_features}",
                features.len(),
                labels.len()
            )));
        }
        if feature_names.len() != num_features {
            return Err(Error::Data(format!(
                "{} feature names for {num_features} features",
                feature_names.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at row {}, column {}",
                pos / num_features,
                pos % num_features
            )));
        }
        let num_classes = labels.iter().max().map_or(0, |m| m + 1).max(2);
        Ok(Self {
            features,
            num_features,
            labels,
            num_classes,
            feature_names,
            relevant_groups: None,
            categories: None,
            groups: None,
            standardization: None,
        })
    }

    pub fn default_names(num_features: usize) -> Vec<String> {
        (0..num_features).map(|i| format!("x{i}")).collect()
    }

    pub fn with_categories(mut self, categories: Vec<String>) -> Result<Self> {
        if categories.len() != self.len() {
            return Err(Error::Data(format!(
                "{} category tags for {} rows",
                categories.len(),
                self.len()
            )));
        }
        self.categories = Some(categories);
        Ok(self)
    }

    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self> {
        if self.labels.iter().any(|&l| l >= num_classes) {
            return Err(Error::Data(format!("labels exceed {num_classes} classes")));
        }
        self.num_classes = num_classes;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks(self.num_features)
    }

    /// `[indices.len(), num_features]` tensor of the selected rows.
    pub fn batch(&self, indices: &[usize]) -> Tensor {
        let values = indices.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        Tensor::new(vec![indices.len(), self.num_features], values).expect("dataset values are finite")
    }

    /// Rows `indices`, in order, with all per-row metadata carried along.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let features = indices.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        let pick = |v: &Vec<usize>| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Dataset {
            features,
            num_features: self.num_features,
            labels: pick(&self.labels),
            num_classes: self.num_classes,
            feature_names: self.feature_names.clone(),
            relevant_groups: self.relevant_groups.as_ref().map(pick),
            categories: self
                .categories
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i].clone()).collect()),
            groups: self.groups.clone(),
            standardization: self.standardization.clone(),
        }
    }

    /// Rows whose category tag equals `category`.
    pub fn filter_category(&self, category: &str) -> Result<Dataset> {
        let cats = self
            .categories
            .as_ref()
            .ok_or_else(|| Error::Data("dataset has no category tags".into()))?;
        let idx: Vec<usize> = (0..self.len()).filter(|&i| cats[i] == category).collect();
        Ok(self.subset(&idx))
    }

    /// Per-feature means.
    pub fn feature_means(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.num_features];
        for row in self.rows() {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        let n = self.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }

    /// Stratified split into `(train, test)` with `train_fraction` of the rows
    /// (largest-remainder allocation across classes), deterministic in `seed`.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::Parameter(format!("train fraction {train_fraction} not in [0, 1]")));
        }
        let n = self.len();
        let target = (train_fraction * n as f64).round() as usize;
        let mut rng = Rng::new(seed);
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        let exact: Vec<f64> = by_class.iter().map(|c| c.len() as f64 * train_fraction).collect();
        let mut take: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut order: Vec<usize> = (0..take.len()).collect();
        order.sort_by(|&a, &b| {
            (exact[b] - exact[b].floor())
                .total_cmp(&(exact[a] - exact[a].floor()))
                .then(a.cmp(&b))
        });
        let mut missing = target.saturating_sub(take.iter().sum());
        for &c in order.iter().cycle().take(order.len() * 2) {
            if missing == 0 {
                break;
            }
            if take[c] < by_class[c].len() {
                take[c] += 1;
                missing -= 1;
            }
        }
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (c, members) in by_class.iter_mut().enumerate() {
            rng.shuffle(members);
            train.extend_from_slice(&members[..take[c]]);
            test.extend_from_slice(&members[take[c]..]);
        }
        if train.is_empty() || test.is_empty() {
            return Err(Error::Data(format!(
                "split of {n} rows at fraction {train_fraction} leaves an empty part"
            )));
        }
        train.sort_unstable();
        test.sort_unstable();
        Ok((self.subset(&train), self.subset(&test)))
    }
}

/// Per-feature mean and standard deviation (population form).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Features whose standard deviation was zero; their std is recorded as 1.
    pub constant_features: Vec<usize>,
}

impl Standardization {
    pub fn fit(data: &Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Data("cannot standardize an empty dataset".into()));
        }
        let mean = data.feature_means();
        let mut var = vec![0.0; data.num_features()];
        for row in data.rows() {
            for (j, v) in row.iter().enumerate() {
                var[j] += (v - mean[j]).powi(2);
            }
        }
        let n = data.len() as f64;
        let mut constant_features = Vec::new();
        let std = var
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    constant_features.push(j);
                    1.0
                }
            })
            .collect();
        if !constant_features.is_empty() {
            log::warn!("constant features {constant_features:?}: std treated as 1");
        }
        Ok(Self {
            mean,
            std,
            constant_features,
        })
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.num_features() != self.mean.len() {
            return Err(Error::Dimension {
                op: "standardize",
                left: vec![self.mean.len()],
                right: vec![data.num_features()],
            });
        }
        let mut out = data.clone();
        let width = data.num_features();
        for (k, v) in out.features.iter_mut().enumerate() {
            let j = k % width;
            *v = (*v - self.mean[j]) / self.std[j];
        }
        out.standardization = Some(self.clone());
        Ok(out)
    }
}

/// Fits statistics on `data` and returns the standardized copy with them.
pub fn standardize(data: &Dataset) -> Result<(Dataset, Standardization)> {
    let stats = Standardization::fit(data)?;
    Ok((stats.apply(data)?, stats))
}

/// Splits, fits standardization on the training part only, and applies it to both.
pub fn split_standardized(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset, Standardization)> {
    let (train, test) = data.split(train_fraction, seed)?;
    let stats = Standardization::fit(&train)?;
    Ok((stats.apply(&train)?, stats.apply(&test)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Dataset {
        let mut rng = Rng::new(9);
        let features: Vec<f64> = (0..n * 3).map(|_| 3.0 + 2.0 * rng.normal()).collect();
        let labels = (0..n).map(|i| usize::from(i % 4 == 0)).collect();
        Dataset::new(features, 3, labels, Dataset::default_names(3)).unwrap()
    }

    #[test]
    fn standardized_moments() {
        let (s, _) = standardize(&toy(200)).unwrap();
        let again = Standardization::fit(&s).unwrap();
        for j in 0..3 {
            assert!(again.mean[j].abs() < 1e-9);
            assert!((again.std[j] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn standardize_is_idempotent() {
        let (once, _) = standardize(&toy(100)).unwrap();
        let (twice, _) = standardize(&once).unwrap();
        for (a, b) in once.features().iter().zip(twice.features()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_column_flagged() {
        let d = Dataset::new(vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0], 2, vec![0, 1, 0], Dataset::default_names(2)).unwrap();
        let stats = Standardization::fit(&d).unwrap();
        assert_eq!(stats.constant_features, vec![1]);
        assert_eq!(stats.std[1], 1.0);
        let s = stats.apply(&d).unwrap();
        assert!(s.rows().all(|r| r[1] == 0.0));
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let d = toy(100);
        let (train, test) = d.split(0.8, 3).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        let ones = |x: &Dataset| x.labels().iter().filter(|&&l| l == 1).count() as i64;
        // 25 positives overall
        assert!((ones(&train) - 20).abs() <= 1);
        assert!((ones(&test) - 5).abs() <= 1);
        assert_eq!(d.split(0.8, 3).unwrap().0, train);
        assert_ne!(d.split(0.8, 4).unwrap().0, train);
    }

    #[test]
    fn empty_split_rejected() {
        assert!(toy(10).split(1.0, 0).is_err());
        assert!(toy(10).split(0.0, 0).is_err());
    }

    #[test]
    fn stats_come_from_train_only() {
        let d = toy(120);
        let (train, _test, stats) = split_standardized(&d, 0.75, 1).unwrap();
        let (raw_train, _) = d.split(0.75, 1).unwrap();
        assert_eq!(Standardization::fit(&raw_train).unwrap(), stats);
        assert_eq!(train.standardization.as_ref(), Some(&stats));
    }

    #[test]
    fn shape_validation() {
        assert!(Dataset::new(vec![1.0; 5], 2, vec![0, 1], Dataset::default_names(2)).is_err());
        assert!(Dataset::new(vec![f64::NAN, 1.0], 2, vec![0], Dataset::default_names(2)).is_err());
    }
}
