//! Crowded-subset benchmark builder over COCO-style instance annotations.
//!
//! Keeps the most object-crowded tenth of the images and captions each with
//! a class that occurs exactly once in it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalPair;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: u64,
    pub file_name: String,
    #[serde(default)]
    pub width: u32,
    #[serde(default)]
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub image_id: u64,
    #[serde(rename = "category_id")]
    pub class_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: u64,
    pub name: String,
}

/// The subset of a COCO instances file the builder reads.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub images: Vec<ImageInfo>,
    #[serde(rename = "annotations")]
    pub instances: Vec<Instance>,
    #[serde(rename = "categories")]
    pub classes: Vec<Category>,
}

impl AnnotationSet {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::Annotation(format!("invalid COCO JSON: {e}")))
    }
}

/// Which images count as relevant for a caption query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Relevance {
    /// Selected images whose assigned caption is that class.
    #[default]
    Caption,
    /// Selected images containing that class at all.
    AnyContaining,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensePair {
    pub image_id: u64,
    pub file_name: String,
    pub class_id: u64,
    pub caption: String,
    pub instance_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DenseReport {
    pub total_images: usize,
    pub vocabulary_size: usize,
    pub threshold: usize,
    pub selected: usize,
    pub emitted: usize,
    /// Selected images with no class occurring exactly once.
    pub dropped: Vec<u64>,
}

impl fmt::Display for DenseReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "images in input:        {}", self.total_images)?;
        writeln!(f, "class vocabulary size:  {}", self.vocabulary_size)?;
        writeln!(f, "crowding threshold:     >= {} instances", self.threshold)?;
        writeln!(f, "selected (top decile):  {}", self.selected)?;
        writeln!(f, "pairs emitted:          {}", self.emitted)?;
        writeln!(f, "dropped (no singleton): {}", self.dropped.len())?;
        write!(
            f,
            "caption rule:           rarest singleton class in the selected subset, ties by class id"
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseSet {
    /// One pair per emitted image, ascending image id.
    pub pairs: Vec<DensePair>,
    /// One eval pair per caption class, ascending class id.
    pub eval_pairs: Vec<EvalPair>,
    pub report: DenseReport,
}

/// Total instances per image; images without annotations count 0.
pub fn count_instances(ann: &AnnotationSet) -> Result<BTreeMap<u64, usize>> {
    let classes: BTreeSet<u64> = ann.classes.iter().map(|c| c.id).collect();
    let mut counts: BTreeMap<u64, usize> = ann.images.iter().map(|i| (i.id, 0)).collect();
    for inst in &ann.instances {
        if !classes.contains(&inst.class_id) {
            return Err(Error::Annotation(format!(
                "annotation references unknown category {}",
                inst.class_id
            )));
        }
        *counts
            .get_mut(&inst.image_id)
            .ok_or_else(|| Error::Annotation(format!("annotation references unknown image {}", inst.image_id)))? += 1;
    }
    Ok(counts)
}

/// Images at or above the count of the `ceil(N/10)`-th most crowded image.
/// Returns the selection and that threshold count.
pub fn select_top_decile(counts: &BTreeMap<u64, usize>) -> Result<(BTreeSet<u64>, usize)> {
    if counts.is_empty() {
        return Err(Error::Annotation("no images to select from".into()));
    }
    let mut sorted: Vec<usize> = counts.values().copied().collect();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let keep = sorted.len().div_ceil(10);
    let threshold = sorted[keep - 1];
    let selected = counts
        .iter()
        .filter(|&(_, &c)| c >= threshold)
        .map(|(&id, _)| id)
        .collect();
    Ok((selected, threshold))
}

/// Among classes present exactly once, the one with the lowest `rarity`
/// (ties to the lowest class id).
pub fn pick_singleton_class(image_classes: &[u64], rarity: &HashMap<u64, usize>) -> Option<u64> {
    let mut per_class: BTreeMap<u64, usize> = BTreeMap::new();
    for &c in image_classes {
        *per_class.entry(c).or_default() += 1;
    }
    per_class
        .into_iter()
        .filter(|&(_, n)| n == 1)
        .map(|(c, _)| c)
        .min_by_key(|c| (rarity.get(c).copied().unwrap_or(0), *c))
}

pub fn build_denseset(ann: &AnnotationSet, relevance: Relevance) -> Result<DenseSet> {
    let counts = count_instances(ann)?;
    let (selected, threshold) = select_top_decile(&counts)?;

    let mut classes_of: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for inst in &ann.instances {
        if selected.contains(&inst.image_id) {
            classes_of.entry(inst.image_id).or_default().push(inst.class_id);
        }
    }
    let mut rarity: HashMap<u64, usize> = HashMap::new();
    for cs in classes_of.values() {
        for &c in cs {
            *rarity.entry(c).or_default() += 1;
        }
    }

    let names: HashMap<u64, &str> = ann.classes.iter().map(|c| (c.id, c.name.as_str())).collect();
    let files: HashMap<u64, &str> = ann.images.iter().map(|i| (i.id, i.file_name.as_str())).collect();
    let empty = Vec::new();

    let mut pairs = Vec::new();
    let mut dropped = Vec::new();
    for &image_id in &selected {
        let cs = classes_of.get(&image_id).unwrap_or(&empty);
        match pick_singleton_class(cs, &rarity) {
            Some(class_id) => pairs.push(DensePair {
                image_id,
                file_name: files[&image_id].to_string(),
                class_id,
                caption: names[&class_id].to_string(),
                instance_count: counts[&image_id],
            }),
            None => dropped.push(image_id),
        }
    }

    let mut relevant: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
    for p in &pairs {
        relevant.entry(p.class_id).or_default().insert(p.image_id);
    }
    if relevance == Relevance::AnyContaining {
        for (&class_id, ids) in relevant.iter_mut() {
            ids.extend(
                classes_of
                    .iter()
                    .filter(|(_, cs)| cs.contains(&class_id))
                    .map(|(&img, _)| img),
            );
        }
    }
    let eval_pairs = relevant
        .into_iter()
        .map(|(class_id, ids)| EvalPair {
            query: names[&class_id].to_string(),
            relevant: ids,
        })
        .collect();

    let report = DenseReport {
        total_images: ann.images.len(),
        vocabulary_size: ann.classes.len(),
        threshold,
        selected: selected.len(),
        emitted: pairs.len(),
        dropped,
    };
    Ok(DenseSet {
        pairs,
        eval_pairs,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(images: &[u64], instances: &[(u64, u64)]) -> AnnotationSet {
        AnnotationSet {
            images: images
                .iter()
                .map(|&id| ImageInfo {
                    id,
                    file_name: format!("{id:012}.jpg"),
                    width: 640,
                    height: 480,
                })
                .collect(),
            instances: instances
                .iter()
                .map(|&(image_id, class_id)| Instance { image_id, class_id })
                .collect(),
            classes: vec![
                Category {
                    id: 1,
                    name: "person".into(),
                },
                Category {
                    id: 2,
                    name: "dog".into(),
                },
                Category {
                    id: 3,
                    name: "kite".into(),
                },
                Category {
                    id: 4,
                    name: "car".into(),
                },
                Category {
                    id: 5,
                    name: "cat".into(),
                },
            ],
        }
    }

    #[test]
    fn counts() {
        let a = ann(&[1, 2], &[(1, 1), (1, 1), (1, 1), (1, 2)]);
        let c = count_instances(&a).unwrap();
        assert_eq!(c[&1], 4);
        assert_eq!(c[&2], 0);
        assert!(count_instances(&ann(&[1], &[(9, 1)])).is_err());
        assert!(count_instances(&ann(&[1], &[(1, 99)])).is_err());
    }

    #[test]
    fn decile_rules() {
        let distinct: BTreeMap<u64, usize> = (1..=20).map(|i| (i, i as usize)).collect();
        let (sel, t) = select_top_decile(&distinct).unwrap();
        assert_eq!(sel, BTreeSet::from([19, 20]));
        assert_eq!(t, 19);

        let equal: BTreeMap<u64, usize> = (0..13).map(|i| (i, 4)).collect();
        assert_eq!(select_top_decile(&equal).unwrap().0.len(), 13);

        let skew: BTreeMap<u64, usize> = [1, 1, 1, 1, 1, 1, 1, 9, 9, 9]
            .iter()
            .enumerate()
            .map(|(i, &c)| (i as u64, c))
            .collect();
        let (sel, t) = select_top_decile(&skew).unwrap();
        assert_eq!((sel.len(), t), (3, 9));

        assert!(select_top_decile(&BTreeMap::new()).is_err());
    }

    #[test]
    fn singleton_choice() {
        let rarity = HashMap::from([(1, 30), (2, 2), (3, 5)]);
        assert_eq!(pick_singleton_class(&[1, 1, 1, 2, 3], &rarity), Some(2));
        assert_eq!(pick_singleton_class(&[1, 1, 4, 4], &rarity), None);
        assert_eq!(pick_singleton_class(&[5], &rarity), Some(5));
        // equal rarity falls back to class id
        assert_eq!(pick_singleton_class(&[3, 2], &HashMap::new()), Some(2));
    }

    #[test]
    fn no_singletons_means_empty_output() {
        let a = ann(&[1, 2, 3], &[(1, 1), (1, 1), (2, 4)]);
        let d = build_denseset(&a, Relevance::Caption).unwrap();
        assert!(d.pairs.is_empty());
        assert_eq!(d.report.dropped, vec![1]);
    }

    #[test]
    fn single_image_dataset() {
        let d = build_denseset(&ann(&[7], &[(7, 5), (7, 1), (7, 1)]), Relevance::Caption).unwrap();
        assert_eq!(d.report.selected, 1);
        assert_eq!(d.pairs.len(), 1);
        assert_eq!(d.pairs[0].caption, "cat");
        let d = build_denseset(&ann(&[7], &[(7, 1), (7, 1)]), Relevance::Caption).unwrap();
        assert!(d.pairs.is_empty());
    }

    #[test]
    fn parses_coco_subset() {
        let json = br#"{
            "info": {"year": 2017},
            "images": [{"id": 1, "file_name": "a.jpg", "width": 10, "height": 10, "license": 3}],
            "annotations": [{"id": 5, "image_id": 1, "category_id": 18, "bbox": [0,0,1,1], "area": 1.0, "iscrowd": 0}],
            "categories": [{"id": 18, "name": "dog", "supercategory": "animal"}]
        }"#;
        let a = AnnotationSet::from_json(json).unwrap();
        assert_eq!(
            a.instances,
            vec![Instance {
                image_id: 1,
                class_id: 18
            }]
        );
        let d = build_denseset(&a, Relevance::Caption).unwrap();
        assert_eq!(d.eval_pairs, vec![EvalPair::new("dog", [1])]);
    }
}
