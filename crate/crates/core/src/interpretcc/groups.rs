use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named set of input feature indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub name: String,
    pub indices: Vec<usize>,
}

/// Human-specified cover of the input features by named groups.
///
/// Groups may overlap; every feature must belong to at least one group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureGroupSpec {
    num_features: usize,
    groups: Vec<FeatureGroup>,
}

impl FeatureGroupSpec {
    pub fn new(num_features: usize, groups: Vec<FeatureGroup>) -> Result<Self> {
        let spec = Self {
            num_features,
            groups,
        };
        spec.validate().map_err(|(_, msg)| Error::Config(msg))?;
        Ok(spec)
    }

    /// `num_groups` contiguous blocks of near-equal size.
    pub fn contiguous(num_features: usize, num_groups: usize) -> Result<Self> {
        Self::contiguous_over(num_features, &(0..num_features).collect::<Vec<_>>(), num_groups, &[])
    }

    /// Splits `features` into contiguous blocks and appends `shared` to every group.
    pub(crate) fn contiguous_over(
        num_features: usize,
        features: &[usize],
        num_groups: usize,
        shared: &[usize],
    ) -> Result<Self> {
        if num_groups == 0 || num_groups > features.len() {
            return Err(Error::Config(format!(
                "cannot split {} features into {num_groups} groups",
                features.len()
            )));
        }
        let base = features.len() / num_groups;
        let extra = features.len() % num_groups;
        let mut start = 0;
        let groups = (0..num_groups)
            .map(|g| {
                let size = base + usize::from(g < extra);
                let mut indices = shared.to_vec();
                indices.extend(&features[start..start + size]);
                start += size;
                FeatureGroup {
                    name: format!("group_{g}"),
                    indices,
                }
            })
            .collect();
        Self::new(num_features, groups)
    }

    /// One group per feature, named after the feature.
    pub fn singletons(names: &[String]) -> Result<Self> {
        Self::new(
            names.len(),
            names
                .iter()
                .enumerate()
                .map(|(i, n)| FeatureGroup {
                    name: n.clone(),
                    indices: vec![i],
                })
                .collect(),
        )
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn groups(&self) -> &[FeatureGroup] {
        &self.groups
    }

    pub fn group(&self, g: usize) -> &FeatureGroup {
        &self.groups[g]
    }

    pub fn names(&self) -> Vec<&str> {
        self.groups.iter().map(|g| g.name.as_str()).collect()
    }

    /// Checks the invariants, returning the offending group (if any) with the message.
    fn validate(&self) -> std::result::Result<(), (Option<usize>, String)> {
        if self.num_features == 0 {
            return Err((None, "num_features must be positive".into()));
        }
        if self.groups.is_empty() {
            return Err((None, "at least one group is required".into()));
        }
        let mut names = HashSet::new();
        let mut covered = vec![false; self.num_features];
        for (g, group) in self.groups.iter().enumerate() {
            if !names.insert(group.name.as_str()) {
                return Err((Some(g), format!("duplicate group name {:?}", group.name)));
            }
            if group.indices.is_empty() {
                return Err((Some(g), format!("group {:?} is empty", group.name)));
            }
            let mut seen = HashSet::new();
            for &i in &group.indices {
                if i >= self.num_features {
                    return Err((
                        Some(g),
                        format!(
                            "group {:?} index {i} is out of range for {} features",
                            group.name, self.num_features
                        ),
                    ));
                }
                if !seen.insert(i) {
                    return Err((Some(g), format!("group {:?} repeats index {i}", group.name)));
                }
                covered[i] = true;
            }
        }
        if let Some(missing) = covered.iter().position(|c| !c) {
            return Err((None, format!("feature {missing} is not covered by any group")));
        }
        Ok(())
    }

    /// Parses the group-config JSON format
    /// `{"num_features": n, "groups": [{"name": ..., "indices": [...]}, ...]}`.
    /// Errors carry the line of the offending entry.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}: {e}", e.line())))?;
        spec.validate().map_err(|(group, msg)| {
            let line = group.map_or(1, |g| locate_group_line(text, &spec.groups, g));
            Error::Config(format!("line {line}: {msg}"))
        })?;
        Ok(spec)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("group spec serializes")
    }
}

/// Line of the `"name"` key belonging to group `g`, counting occurrences of
/// the name literal so that duplicates resolve to the later entry.
fn locate_group_line(text: &str, groups: &[FeatureGroup], g: usize) -> usize {
    let needle = serde_json::to_string(&groups[g].name).expect("string serializes");
    let nth = groups[..g].iter().filter(|o| o.name == groups[g].name).count();
    text.match_indices(&needle)
        .nth(nth)
        .map_or(1, |(pos, _)| text[..pos].matches('\n').count() + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contiguous_blocks_cover() {
        let s = FeatureGroupSpec::contiguous(7, 3).unwrap();
        let sizes: Vec<usize> = s.groups().iter().map(|g| g.indices.len()).collect();
        assert_eq!(sizes, vec![3, 2, 2]);
        assert!(FeatureGroupSpec::contiguous(2, 3).is_err());
    }

    #[test]
    fn overlap_is_allowed() {
        let s = FeatureGroupSpec::new(
            3,
            vec![
                FeatureGroup { name: "a".into(), indices: vec![0, 1] },
                FeatureGroup { name: "b".into(), indices: vec![0, 2] },
            ],
        );
        assert!(s.is_ok());
    }

    #[test]
    fn rejects_uncovered_and_empty() {
        let uncovered = FeatureGroupSpec::new(3, vec![FeatureGroup { name: "a".into(), indices: vec![0, 1] }]);
        assert!(uncovered.unwrap_err().to_string().contains("feature 2"));
        let empty = FeatureGroupSpec::new(
            1,
            vec![
                FeatureGroup { name: "a".into(), indices: vec![0] },
                FeatureGroup { name: "b".into(), indices: vec![] },
            ],
        );
        assert!(empty.is_err());
    }

    #[test]
    fn json_errors_name_the_line() {
        let text = r#"{
  "num_features": 3,
  "groups": [
    {"name": "a", "indices": [0, 1]},
    {"name": "b", "indices": [2, 9]}
  ]
}"#;
        let msg = FeatureGroupSpec::from_json_str(text).unwrap_err().to_string();
        assert!(msg.contains("line 5"), "{msg}");
        assert!(msg.contains("index 9"), "{msg}");

        let dup = r#"{"num_features": 2,
"groups": [{"name": "a", "indices": [0]},
{"name": "a", "indices": [1]}]}"#;
        let msg = FeatureGroupSpec::from_json_str(dup).unwrap_err().to_string();
        assert!(msg.contains("line 3") && msg.contains("duplicate"), "{msg}");

        let syntax = "{\"num_features\": 2,\n \"groups\": [oops]}";
        let msg = FeatureGroupSpec::from_json_str(syntax).unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn json_round_trip() {
        let s = FeatureGroupSpec::contiguous(5, 2).unwrap();
        assert_eq!(FeatureGroupSpec::from_json_str(&s.to_json_pretty()).unwrap(), s);
    }
}
