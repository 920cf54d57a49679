use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::fold_case;

const CIFAR10: &str = include_str!("../../data/cifar10_classes.txt");
const CIFAR100: &str = include_str!("../../data/cifar100_classes.txt");

pub fn cifar10_classes() -> Vec<String> {
    CIFAR10.lines().map(str::to_owned).collect()
}

pub fn cifar100_classes() -> Vec<String> {
    CIFAR100.lines().map(str::to_owned).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestImage {
    pub id: String,
    pub class: String,
}

/// One benchmark split: seen classes, unseen classes and the test pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub name: String,
    pub seen: Vec<String>,
    pub unseen: Vec<String>,
    #[serde(default)]
    pub images: Vec<TestImage>,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidSplit {
            name: self.name.clone(),
            reason,
        };
        if self.seen.is_empty() {
            return Err(invalid("no seen classes".into()));
        }
        if self.unseen.is_empty() {
            return Err(invalid("no unseen classes".into()));
        }
        let mut classes = HashSet::new();
        for class in self.seen.iter().chain(&self.unseen) {
            if class.is_empty() {
                return Err(invalid("empty class name".into()));
            }
            if !classes.insert(fold_case(class)) {
                return Err(invalid(format!(
                    "class {class:?} listed twice (seen and unseen must be disjoint)"
                )));
            }
        }
        let mut ids = HashSet::new();
        for image in &self.images {
            if !classes.contains(&fold_case(&image.class)) {
                return Err(invalid(format!(
                    "image {:?} has class {:?}, which is neither seen nor unseen",
                    image.id, image.class
                )));
            }
            if !ids.insert(image.id.as_str()) {
                return Err(invalid(format!("image id {:?} appears twice", image.id)));
            }
        }
        Ok(())
    }

    pub fn is_unseen_class(&self, class: &str) -> bool {
        let folded = fold_case(class);
        self.unseen.iter().any(|c| fold_case(c) == folded)
    }

    /// Images grouped by class, classes in seen-then-unseen order.
    pub fn images_by_class(&self) -> Vec<(&str, Vec<&TestImage>)> {
        self.seen
            .iter()
            .chain(&self.unseen)
            .map(|class| {
                let folded = fold_case(class);
                let images = self.images.iter().filter(|i| fold_case(&i.class) == folded).collect();
                (class.as_str(), images)
            })
            .collect()
    }
}

pub fn read_split(path: impl AsRef<Path>) -> Result<SplitSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let split: SplitSpec = serde_json::from_str(&text).map_err(|source| Error::Json {
        context: format!("split file {}", path.display()),
        source,
    })?;
    split.validate()?;
    Ok(split)
}

pub fn write_split(split: &SplitSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(split).map_err(|source| Error::Json {
        context: format!("serializing split {:?}", split.name),
        source,
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// CIFAR100-style splits: split `i` uses classes `[i*width, (i+1)*width)` as
/// seen and every other class as unseen. Images are left empty.
pub fn consecutive_splits(prefix: &str, classes: &[String], width: usize, count: usize) -> Result<Vec<SplitSpec>> {
    if width == 0 || width * count > classes.len() || width >= classes.len() {
        return Err(Error::InvalidConfig(format!(
            "cannot cut {count} consecutive blocks of {width} from {} classes",
            classes.len()
        )));
    }
    Ok((0..count)
        .map(|i| {
            let range = i * width..(i + 1) * width;
            SplitSpec {
                name: format!("{prefix}-{i}"),
                seen: classes[range.clone()].to_vec(),
                unseen: classes
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| !range.contains(j))
                    .map(|(_, c)| c.clone())
                    .collect(),
                images: Vec::new(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split() -> SplitSpec {
        SplitSpec {
            name: "s".into(),
            seen: vec!["cat".into(), "dog".into()],
            unseen: vec!["boat".into()],
            images: vec![
                TestImage {
                    id: "1".into(),
                    class: "cat".into(),
                },
                TestImage {
                    id: "2".into(),
                    class: "boat".into(),
                },
            ],
        }
    }

    #[test]
    fn valid_split() {
        split().validate().unwrap();
        assert!(split().is_unseen_class("Boat"));
        let s = split();
        let groups = s.images_by_class();
        assert_eq!(groups.len(), 3);
        assert_eq!(groups[1].1.len(), 0);
    }

    #[test]
    fn invalid_splits() {
        let mut s = split();
        s.unseen.push("Cat".into());
        assert!(s.validate().is_err());
        let mut s = split();
        s.images.push(TestImage {
            id: "3".into(),
            class: "horse".into(),
        });
        assert!(s.validate().is_err());
        let mut s = split();
        s.unseen.clear();
        assert!(s.validate().is_err());
        let mut s = split();
        s.images.push(TestImage {
            id: "1".into(),
            class: "dog".into(),
        });
        assert!(s.validate().is_err());
    }

    #[test]
    fn parses_file_schema() {
        let text = r#"{"name":"c10-0","seen":["a"],"unseen":["b"],"images":[{"id":"x","class":"b"}]}"#;
        let s: SplitSpec = serde_json::from_str(text).unwrap();
        s.validate().unwrap();
        assert_eq!(s.images[0].class, "b");
    }

    #[test]
    fn class_lists() {
        assert_eq!(cifar10_classes().len(), 10);
        assert_eq!(cifar100_classes().len(), 100);
    }

    #[test]
    fn cifar100_consecutive_blocks() {
        let splits = consecutive_splits("cifar100", &cifar100_classes(), 20, 5).unwrap();
        assert_eq!(splits.len(), 5);
        for (i, s) in splits.iter().enumerate() {
            assert_eq!(s.seen.len(), 20);
            assert_eq!(s.unseen.len(), 80);
            assert_eq!(s.seen[0], cifar100_classes()[20 * i]);
            s.validate().unwrap();
        }
        assert!(consecutive_splits("x", &cifar10_classes(), 4, 3).is_err());
    }
}
