//! Recall@K over query/relevant-frame pairs.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderClient;
use crate::error::{Error, Result};
use crate::index::{FrameIndex, RetrievalResult, ScoreScope};

/// One evaluation query and the frames that count as a hit for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPair {
    pub query: String,
    pub relevant: BTreeSet<u64>,
}

impl EvalPair {
    pub fn new(query: impl Into<String>, relevant: impl IntoIterator<Item = u64>) -> Self {
        Self {
            query: query.into(),
            relevant: relevant.into_iter().collect(),
        }
    }
}

/// Fraction of rankings whose first `k` entries contain a relevant frame.
pub fn recall_from_rankings(rankings: &[(&EvalPair, Vec<RetrievalResult>)], k: usize) -> f64 {
    if rankings.is_empty() {
        return 0.0;
    }
    let hits = rankings
        .iter()
        .filter(|(pair, ranked)| ranked.iter().take(k).any(|r| pair.relevant.contains(&r.frame_id)))
        .count();
    hits as f64 / rankings.len() as f64
}

fn validate(index: &FrameIndex, pairs: &[EvalPair]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    for p in pairs {
        if p.relevant.is_empty() {
            return Err(Error::InvalidParams(format!(
                "pair {:?} lists no relevant frames",
                p.query
            )));
        }
        if let Some(&id) = p.relevant.iter().find(|id| !index.contains(**id)) {
            return Err(Error::MissingFrame(id));
        }
    }
    Ok(())
}

/// Recall at each of `ks`, ranking every query once at the largest `k`.
pub fn recall_at_ks(
    index: &FrameIndex,
    encoder: &dyn EncoderClient,
    pairs: &[EvalPair],
    ks: &[usize],
    scope: ScoreScope,
) -> Result<Vec<(usize, f64)>> {
    validate(index, pairs)?;
    let kmax = ks
        .iter()
        .copied()
        .max()
        .ok_or_else(|| Error::InvalidParams("no k values".into()))?;
    if ks.contains(&0) {
        return Err(Error::InvalidParams("k must be at least 1".into()));
    }
    let rankings = pairs
        .iter()
        .map(|p| {
            let t = encoder.encode_text(&p.query)?;
            Ok((p, index.topk_scoped(&t, kmax, scope)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ks.iter().map(|&k| (k, recall_from_rankings(&rankings, k))).collect())
}

pub fn recall_at_k(index: &FrameIndex, encoder: &dyn EncoderClient, pairs: &[EvalPair], k: usize) -> Result<f64> {
    Ok(recall_at_ks(index, encoder, pairs, &[k], ScoreScope::All)?[0].1)
}

/// Parse JSON Lines of `{"query": ..., "relevant": [...]}`; blank lines are skipped.
pub fn read_pairs_jsonl(reader: impl BufRead) -> Result<Vec<EvalPair>> {
    let mut pairs = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: EvalPair =
            serde_json::from_str(&line).map_err(|e| Error::InvalidParams(format!("eval pairs line {}: {e}", n + 1)))?;
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn write_pairs_jsonl(mut writer: impl Write, pairs: &[EvalPair]) -> Result<()> {
    for p in pairs {
        serde_json::to_writer(&mut writer, p)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
