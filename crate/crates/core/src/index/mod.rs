//! In-memory frame index with exact max-cosine top-k retrieval.

pub mod persist;

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::geometry::{BBox, FrameRef};
use crate::record::{max_cosine, BestSource, FrameRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub frame_id: u64,
    pub score: f64,
    pub best_source: BestSource,
}

/// Which stored embeddings participate in scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreScope {
    /// Global and region embeddings.
    #[default]
    All,
    /// Global embedding only, ignoring stored regions.
    GlobalOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Entry {
    pub frame: FrameRef,
    /// First row of this record in the embedding block; the global row.
    pub row: usize,
    pub boxes: Vec<BBox>,
    pub fingerprint: u64,
}

impl Entry {
    fn rows(&self) -> usize {
        1 + self.boxes.len()
    }
}

/// Frame records over one contiguous, `dim`-strided embedding block.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameIndex {
    dim: usize,
    block: Vec<f32>,
    entries: Vec<Entry>,
    by_id: HashMap<u64, usize>,
}

/// Descending score, then ascending frame id.
fn rank_order(a: &RetrievalResult, b: &RetrievalResult) -> Ordering {
    b.score.total_cmp(&a.score).then(a.frame_id.cmp(&b.frame_id))
}

impl FrameIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Embedding dimension; `None` until the first insert.
    pub fn dim(&self) -> Option<usize> {
        (self.dim > 0).then_some(self.dim)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, frame_id: u64) -> bool {
        self.by_id.contains_key(&frame_id)
    }

    pub fn frame_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().map(|e| e.frame.frame_id)
    }

    fn row(&self, r: usize) -> &[f32] {
        &self.block[r * self.dim..(r + 1) * self.dim]
    }

    pub fn get(&self, frame_id: u64) -> Option<FrameRecord> {
        let e = &self.entries[*self.by_id.get(&frame_id)?];
        Some(FrameRecord {
            frame: e.frame.clone(),
            global: Embedding::from_unit(self.row(e.row).to_vec()),
            regions: e
                .boxes
                .iter()
                .enumerate()
                .map(|(j, b)| (Embedding::from_unit(self.row(e.row + 1 + j).to_vec()), *b))
                .collect(),
            params_fingerprint: e.fingerprint,
        })
    }

    pub fn records(&self) -> impl Iterator<Item = FrameRecord> + '_ {
        self.entries.iter().map(|e| self.get(e.frame.frame_id).unwrap())
    }

    /// Add a record; an existing record with the same frame id is replaced in place.
    pub fn insert(&mut self, rec: FrameRecord) -> Result<()> {
        let dim = rec.dim();
        if dim == 0 {
            return Err(Error::DegenerateEmbedding);
        }
        if self.dim != 0 && dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: dim,
            });
        }
        if let Some((r, _)) = rec.regions.iter().find(|(r, _)| r.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: r.dim(),
            });
        }
        if rec.regions.len() > u8::MAX as usize {
            return Err(Error::InvalidParams(format!(
                "{} regions exceed 255",
                rec.regions.len()
            )));
        }
        if let Some((_, b)) = rec
            .regions
            .iter()
            .find(|(_, b)| b.x0 < 0 || b.y0 < 0 || b.x1 > u32::MAX as i64 || b.y1 > u32::MAX as i64 || b.is_empty())
        {
            return Err(Error::InvalidParams(format!(
                "region box {b:?} is not a valid pixel box"
            )));
        }
        self.dim = dim;

        let mut rows: Vec<f32> = Vec::with_capacity(rec.embedding_count() * dim);
        rows.extend_from_slice(rec.global.as_slice());
        for (r, _) in &rec.regions {
            rows.extend_from_slice(r.as_slice());
        }
        let boxes: Vec<BBox> = rec.regions.iter().map(|(_, b)| *b).collect();

        match self.by_id.get(&rec.frame.frame_id).copied() {
            Some(pos) => {
                let old = &self.entries[pos];
                let (start, old_rows) = (old.row, old.rows());
                let new_rows = 1 + boxes.len();
                self.block.splice(start * dim..(start + old_rows) * dim, rows);
                for e in &mut self.entries[pos + 1..] {
                    e.row = e.row + new_rows - old_rows;
                }
                self.entries[pos] = Entry {
                    frame: rec.frame,
                    row: start,
                    boxes,
                    fingerprint: rec.params_fingerprint,
                };
            }
            None => {
                let row = self.block.len() / dim;
                self.block.extend_from_slice(&rows);
                self.by_id.insert(rec.frame.frame_id, self.entries.len());
                self.entries.push(Entry {
                    frame: rec.frame,
                    row,
                    boxes,
                    fingerprint: rec.params_fingerprint,
                });
            }
        }
        Ok(())
    }

    fn score_entry(&self, query: &[f32], e: &Entry, scope: ScoreScope) -> (f64, BestSource) {
        let rows = match scope {
            ScoreScope::All => e.rows(),
            ScoreScope::GlobalOnly => 1,
        };
        max_cosine(query, (e.row..e.row + rows).map(|r| self.row(r)))
    }

    fn check_query(&self, query: &Embedding) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if query.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.dim(),
            });
        }
        Ok(())
    }

    /// Score every frame, in index order.
    pub fn score_all(&self, query: &Embedding, scope: ScoreScope) -> Result<Vec<RetrievalResult>> {
        self.check_query(query)?;
        Ok(self
            .entries
            .iter()
            .map(|e| {
                let (score, best_source) = self.score_entry(query.as_slice(), e, scope);
                RetrievalResult {
                    frame_id: e.frame.frame_id,
                    score,
                    best_source,
                }
            })
            .collect())
    }

    /// The `k` best frames for `query`, exact.
    pub fn topk(&self, query: &Embedding, k: usize) -> Result<Vec<RetrievalResult>> {
        self.topk_scoped(query, k, ScoreScope::All)
    }

    pub fn topk_scoped(&self, query: &Embedding, k: usize, scope: ScoreScope) -> Result<Vec<RetrievalResult>> {
        if k == 0 {
            return Err(Error::InvalidParams("k must be at least 1".into()));
        }
        let mut all = self.score_all(query, scope)?;
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, rank_order);
            all.truncate(k);
        }
        all.sort_by(rank_order);
        Ok(all)
    }

    pub(crate) fn parts(&self) -> (usize, &[f32], &[Entry]) {
        (self.dim, &self.block, &self.entries)
    }

    pub(crate) fn from_parts(dim: usize, block: Vec<f32>, entries: Vec<Entry>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if by_id.insert(e.frame.frame_id, i).is_some() {
                return Err(
                    persist::PersistError::Malformed(format!("duplicate frame id {}", e.frame.frame_id)).into(),
                );
            }
        }
        Ok(Self {
            dim,
            block,
            entries,
            by_id,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::l2_normalize;
    use crate::record::score_frame;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_emb(rng: &mut ChaCha8Rng, dim: usize) -> Embedding {
        let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        l2_normalize(&v).unwrap()
    }

    fn rand_record(rng: &mut ChaCha8Rng, id: u64, dim: usize) -> FrameRecord {
        let n = rng.random_range(0..=5);
        FrameRecord {
            frame: FrameRef::new(id, format!("frames/{id:04}.png"), None),
            global: rand_emb(rng, dim),
            regions: (0..n)
                .map(|j| (rand_emb(rng, dim), BBox::from_origin(j * 32, 0, 64, 64)))
                .collect(),
            params_fingerprint: 7,
        }
    }

    #[test]
    fn inserted_frame_ranks_first_for_own_global() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut idx = FrameIndex::new();
        for id in 0..20 {
            idx.insert(rand_record(&mut rng, id, 8)).unwrap();
        }
        let target = idx.get(13).unwrap();
        let top = idx.topk(&target.global, 1).unwrap();
        assert_eq!(top[0].frame_id, 13);
    }

    #[test]
    fn duplicate_insert_replaces() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut idx = FrameIndex::new();
        for id in 0..5 {
            idx.insert(rand_record(&mut rng, id, 8)).unwrap();
        }
        let mut replacement = rand_record(&mut rng, 2, 8);
        replacement.regions.clear();
        replacement.regions.push((rand_emb(&mut rng, 8), BBox::new(0, 0, 9, 9)));
        replacement.regions.push((rand_emb(&mut rng, 8), BBox::new(1, 1, 9, 9)));
        let others: Vec<_> = [0, 1, 3, 4].iter().map(|&i| idx.get(i).unwrap()).collect();
        idx.insert(replacement.clone()).unwrap();
        assert_eq!(idx.len(), 5);
        assert_eq!(idx.get(2).unwrap(), replacement);
        for rec in others {
            assert_eq!(idx.get(rec.frame.frame_id).unwrap(), rec);
        }
    }

    #[test]
    fn thousand_records() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut idx = FrameIndex::new();
        for id in 0..1000 {
            idx.insert(rand_record(&mut rng, id, 4)).unwrap();
        }
        assert_eq!(idx.len(), 1000);
    }

    #[test]
    fn topk_matches_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut idx = FrameIndex::new();
        let mut recs = vec![];
        for id in 0..200 {
            let r = rand_record(&mut rng, 1000 - id, 8);
            recs.push(r.clone());
            idx.insert(r).unwrap();
        }
        let q = rand_emb(&mut rng, 8);
        let mut brute: Vec<(f64, u64)> = recs
            .iter()
            .map(|r| (score_frame(&q, r).unwrap().0, r.frame.frame_id))
            .collect();
        brute.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let top = idx.topk(&q, 10).unwrap();
        let got: Vec<(f64, u64)> = top.iter().map(|r| (r.score, r.frame_id)).collect();
        assert_eq!(got, brute[..10].to_vec());
        assert_eq!(idx.topk(&q, 500).unwrap().len(), 200);
    }

    #[test]
    fn equal_scores_order_by_frame_id() {
        let mut idx = FrameIndex::new();
        let g = Embedding::basis(4, 0);
        for id in [9, 3, 5] {
            idx.insert(FrameRecord {
                frame: FrameRef::new(id, "x", None),
                global: g.clone(),
                regions: vec![],
                params_fingerprint: 0,
            })
            .unwrap();
        }
        let ids: Vec<u64> = idx.topk(&g, 3).unwrap().iter().map(|r| r.frame_id).collect();
        assert_eq!(ids, vec![3, 5, 9]);
    }

    #[test]
    fn global_scope_ignores_regions() {
        let mut idx = FrameIndex::new();
        idx.insert(FrameRecord {
            frame: FrameRef::new(0, "x", None),
            global: Embedding::basis(4, 1),
            regions: vec![(Embedding::basis(4, 0), BBox::new(0, 0, 4, 4))],
            params_fingerprint: 0,
        })
        .unwrap();
        let q = Embedding::basis(4, 0);
        assert_eq!(idx.topk(&q, 1).unwrap()[0].score, 1.0);
        assert_eq!(idx.topk_scoped(&q, 1, ScoreScope::GlobalOnly).unwrap()[0].score, 0.0);
    }

    #[test]
    fn errors() {
        let idx = FrameIndex::new();
        assert!(matches!(idx.topk(&Embedding::basis(2, 0), 1), Err(Error::EmptyIndex)));
        let mut idx = FrameIndex::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        idx.insert(rand_record(&mut rng, 0, 8)).unwrap();
        assert!(matches!(
            idx.insert(rand_record(&mut rng, 1, 4)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(idx.topk(&Embedding::basis(8, 0), 0).is_err());
        assert!(matches!(
            idx.topk(&Embedding::basis(3, 0), 1),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
