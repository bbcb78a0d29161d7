//! Low-attention region clustering: group candidate windows into at most `n`
//! merged regions by k-means over normalized box centers.

use crate::error::Result;
use crate::geometry::BBox;
use crate::kmeans::{kmeans, KMeansConfig, Point};
use crate::params::PipelineParams;

/// A merged region and the candidates it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionCluster {
    pub bbox: BBox,
    /// Indices into the candidate list.
    pub members: Vec<usize>,
    /// Centroid in normalized `[0, 1]²` coordinates.
    pub centroid: Point,
}

pub fn larc_clusters(
    candidates: &[BBox],
    image_w: u32,
    image_h: u32,
    params: &PipelineParams,
) -> Result<Vec<RegionCluster>> {
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let k = params.clusters.min(candidates.len());
    let points: Vec<Point> = candidates
        .iter()
        .map(|b| {
            let (cx, cy) = b.center();
            [cx / image_w as f64, cy / image_h as f64]
        })
        .collect();
    let result = kmeans(
        &points,
        &KMeansConfig {
            k,
            seed: params.kmeans_seed,
            max_iters: params.kmeans_max_iters,
            tol: params.kmeans_tol,
        },
    )?;

    let mut clusters: Vec<RegionCluster> = result
        .centroids
        .iter()
        .map(|&centroid| RegionCluster {
            bbox: BBox::new(0, 0, 0, 0),
            members: Vec::new(),
            centroid,
        })
        .collect();
    for (i, &j) in result.assignments.iter().enumerate() {
        let c = &mut clusters[j];
        c.bbox = if c.members.is_empty() {
            candidates[i]
        } else {
            c.bbox.union(&candidates[i])
        };
        c.members.push(i);
    }
    clusters.retain(|c| !c.members.is_empty());
    clusters.sort_by(|a, b| {
        a.centroid[1]
            .total_cmp(&b.centroid[1])
            .then(a.centroid[0].total_cmp(&b.centroid[0]))
    });
    Ok(clusters)
}

/// Merged region boxes, ordered by centroid (y, then x).
pub fn larc(candidates: &[BBox], image_w: u32, image_h: u32, params: &PipelineParams) -> Result<Vec<BBox>> {
    Ok(larc_clusters(candidates, image_w, image_h, params)?
        .into_iter()
        .map(|c| c.bbox)
        .collect())
}
