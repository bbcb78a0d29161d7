use serde::{Deserialize, Serialize};

use crate::embedding::{dot_clamped, Embedding};
use crate::error::{Error, Result};
use crate::geometry::{BBox, FrameRef};

/// A frame's retrievable form: its global embedding plus region embeddings
/// with the boxes they were cropped from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: FrameRef,
    pub global: Embedding,
    pub regions: Vec<(Embedding, BBox)>,
    pub params_fingerprint: u64,
}

impl FrameRecord {
    pub fn dim(&self) -> usize {
        self.global.dim()
    }

    pub fn embedding_count(&self) -> usize {
        1 + self.regions.len()
    }

    /// Same record without its region embeddings.
    pub fn global_only(&self) -> FrameRecord {
        FrameRecord {
            regions: Vec::new(),
            ..self.clone()
        }
    }
}

/// Which embedding of a record produced the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BestSource {
    Global,
    /// 1-based region index.
    Region(usize),
}

impl std::fmt::Display for BestSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BestSource::Global => f.write_str("global"),
            BestSource::Region(j) => write!(f, "region({j})"),
        }
    }
}

/// Package the global embedding and region embeddings of one frame.
pub fn lafm_pack(
    global: Embedding,
    region_embeddings: Vec<Embedding>,
    boxes: Vec<BBox>,
    frame: FrameRef,
    params_fingerprint: u64,
) -> Result<FrameRecord> {
    if region_embeddings.len() != boxes.len() {
        return Err(Error::InvalidParams(format!(
            "{} region embeddings but {} boxes",
            region_embeddings.len(),
            boxes.len()
        )));
    }
    if let Some(r) = region_embeddings.iter().find(|r| r.dim() != global.dim()) {
        return Err(Error::DimensionMismatch {
            expected: global.dim(),
            actual: r.dim(),
        });
    }
    Ok(FrameRecord {
        frame,
        global,
        regions: region_embeddings.into_iter().zip(boxes).collect(),
        params_fingerprint,
    })
}

/// Max cosine over a global row followed by region rows, with the tie rule:
/// global first, then the lowest region index.
pub(crate) fn max_cosine<'a>(query: &[f32], rows: impl Iterator<Item = &'a [f32]>) -> (f64, BestSource) {
    let mut best = (f64::NEG_INFINITY, BestSource::Global);
    for (i, row) in rows.enumerate() {
        let s = dot_clamped(query, row);
        if s > best.0 {
            best = (
                s,
                if i == 0 {
                    BestSource::Global
                } else {
                    BestSource::Region(i)
                },
            );
        }
    }
    best
}

/// Frame score: the best cosine between the query and any of the frame's embeddings.
pub fn score_frame(query: &Embedding, rec: &FrameRecord) -> Result<(f64, BestSource)> {
    if query.dim() != rec.dim() {
        return Err(Error::DimensionMismatch {
            expected: rec.dim(),
            actual: query.dim(),
        });
    }
    if let Some((r, _)) = rec.regions.iter().find(|(r, _)| r.dim() != rec.dim()) {
        return Err(Error::DimensionMismatch {
            expected: rec.dim(),
            actual: r.dim(),
        });
    }
    let rows = std::iter::once(rec.global.as_slice()).chain(rec.regions.iter().map(|(r, _)| r.as_slice()));
    Ok(max_cosine(query.as_slice(), rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{cosine, l2_normalize};
    use proptest::prelude::*;

    fn emb(v: &[f32]) -> Embedding {
        l2_normalize(v).unwrap()
    }

    fn frame() -> FrameRef {
        FrameRef::new(1, "f.png", None)
    }

    #[test]
    fn global_only_record() {
        let rec = lafm_pack(emb(&[1.0, 0.0]), vec![], vec![], frame(), 0).unwrap();
        assert_eq!(rec.embedding_count(), 1);
        let t = emb(&[0.6, 0.8]);
        let (s, src) = score_frame(&t, &rec).unwrap();
        assert!((s - 0.6).abs() < 1e-7);
        assert_eq!(src, BestSource::Global);
    }

    #[test]
    fn five_regions_make_six_embeddings() {
        let regions: Vec<_> = (0..5).map(|i| emb(&[1.0, i as f32])).collect();
        let boxes: Vec<_> = (0..5).map(|i| BBox::from_origin(i * 10, 0, 64, 64)).collect();
        let rec = lafm_pack(emb(&[0.0, 1.0]), regions, boxes.clone(), frame(), 9).unwrap();
        assert_eq!(rec.embedding_count(), 6);
        assert_eq!(rec.regions.iter().map(|(_, b)| *b).collect::<Vec<_>>(), boxes);
    }

    #[test]
    fn exact_region_match() {
        let r2 = emb(&[0.3, -0.9]);
        let rec = lafm_pack(
            emb(&[1.0, 0.0]),
            vec![emb(&[0.0, 1.0]), r2.clone()],
            vec![BBox::new(0, 0, 1, 1); 2],
            frame(),
            0,
        )
        .unwrap();
        let (s, src) = score_frame(&r2, &rec).unwrap();
        assert!((s - 1.0).abs() < 1e-7);
        assert_eq!(src, BestSource::Region(2));
    }

    #[test]
    fn hand_computed_region_win() {
        let rec = lafm_pack(
            emb(&[0.6, 0.8]),
            vec![emb(&[0.8, 0.6])],
            vec![BBox::new(0, 0, 1, 1)],
            frame(),
            0,
        )
        .unwrap();
        let (s, src) = score_frame(&emb(&[1.0, 0.0]), &rec).unwrap();
        assert!((s - 0.8).abs() < 1e-7);
        assert_eq!(src, BestSource::Region(1));
    }

    #[test]
    fn ties_prefer_global_then_lowest_region() {
        let g = emb(&[1.0, 0.0]);
        let rec = lafm_pack(
            g.clone(),
            vec![g.clone(), g.clone()],
            vec![BBox::new(0, 0, 1, 1); 2],
            frame(),
            0,
        )
        .unwrap();
        assert_eq!(score_frame(&g, &rec).unwrap().1, BestSource::Global);
        let rec = lafm_pack(
            emb(&[0.0, 1.0]),
            vec![g.clone(), g.clone()],
            vec![BBox::new(0, 0, 1, 1); 2],
            frame(),
            0,
        )
        .unwrap();
        assert_eq!(score_frame(&g, &rec).unwrap().1, BestSource::Region(1));
    }

    #[test]
    fn pack_errors() {
        assert!(lafm_pack(
            emb(&[1.0, 0.0]),
            vec![emb(&[1.0, 0.0, 0.0])],
            vec![BBox::new(0, 0, 1, 1)],
            frame(),
            0
        )
        .is_err());
        assert!(lafm_pack(emb(&[1.0, 0.0]), vec![emb(&[1.0, 0.0])], vec![], frame(), 0).is_err());
        let rec = lafm_pack(emb(&[1.0, 0.0]), vec![], vec![], frame(), 0).unwrap();
        assert!(matches!(
            score_frame(&emb(&[1.0, 0.0, 0.0]), &rec),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn unit(dim: usize) -> impl Strategy<Value = Embedding> {
        prop::collection::vec(-1.0f32..1.0, dim)
            .prop_filter("nonzero", |v| v.iter().any(|x| x.abs() > 1e-3))
            .prop_map(|v| l2_normalize(&v).unwrap())
    }

    proptest! {
        /// Packing then scoring agrees with a pack-free max over the loose set.
        #[test]
        fn packed_score_equals_loose_max(t in unit(8), g in unit(8), rs in prop::collection::vec(unit(8), 0..6)) {
            let boxes = vec![BBox::new(0, 0, 1, 1); rs.len()];
            let rec = lafm_pack(g.clone(), rs.clone(), boxes, frame(), 0).unwrap();
            let loose = std::iter::once(&g).chain(rs.iter())
                .map(|e| cosine(&t, e).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(score_frame(&t, &rec).unwrap().0, loose);
        }

        #[test]
        fn region_order_does_not_change_score(t in unit(8), g in unit(8), mut rs in prop::collection::vec(unit(8), 1..6)) {
            let boxes = vec![BBox::new(0, 0, 1, 1); rs.len()];
            let a = score_frame(&t, &lafm_pack(g.clone(), rs.clone(), boxes.clone(), frame(), 0).unwrap()).unwrap().0;
            rs.reverse();
            let b = score_frame(&t, &lafm_pack(g, rs, boxes, frame(), 0).unwrap()).unwrap().0;
            prop_assert_eq!(a, b);
        }
    }
}
