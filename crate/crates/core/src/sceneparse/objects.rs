use serde::{Deserialize, Serialize};

use super::phrase::NounPhrase;
use crate::autodiff::Tensor;
use crate::embed::{encode_images, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::geometry::{HitMap, IntersectionBuffer};
use crate::render::Image;

/// Splits a hit map into one mask per cluster; `labels` follow the hit
/// pixels in scan order.
pub fn decouple_hitmap(hitmap: &HitMap, buffer: &IntersectionBuffer, labels: &[usize], k: usize) -> Result<Vec<HitMap>> {
    let hits = buffer.hit_pixels();
    if labels.len() != hits.len() || hitmap.count() != hits.len() {
        return Err(Error::CountMismatch {
            phrases: labels.len(),
            clusters: hits.len(),
        });
    }
    let mut masks = vec![HitMap::empty(hitmap.height, hitmap.width); k];
    for (&p, &l) in hits.iter().zip(labels) {
        if l >= k {
            return Err(Error::InvalidArgument(format!("label {l} >= {k}")));
        }
        masks[l].data[p] = true;
    }
    Ok(masks)
}

/// Copy of `img` with pixels outside `mask` replaced by `fill`.
pub fn mask_image(img: &Image, mask: &HitMap, fill: [f64; 3]) -> Image {
    let mut out = img.clone();
    for (p, &on) in mask.data.iter().enumerate() {
        if !on {
            out.data[p * 3..p * 3 + 3].copy_from_slice(&fill);
        }
    }
    out
}

/// Mean word-feature row over each phrase's words.
pub fn phrase_embeddings(phrases: &[NounPhrase], word_features: &Tensor) -> Result<Vec<Vec<f64>>> {
    let (m, d) = word_features.dims2()?;
    phrases
        .iter()
        .map(|p| {
            if p.span.1 >= m {
                return Err(Error::shape("phrase_embeddings", format!("span {:?} over {m} words", p.span)));
            }
            let n = p.word_count() as f64;
            Ok((0..d).map(|j| p.word_indices().map(|i| word_features.at2(i, j)).sum::<f64>() / n).collect())
        })
        .collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        d / (na * nb)
    }
}

/// `sim[phrase][cluster]`: cosine between each phrase embedding and the
/// mean feature of that cluster's masked views.
pub fn similarity_matrix(
    phrase_emb: &[Vec<f64>],
    masked_views: &[Vec<Image>],
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<Vec<f64>>> {
    let cluster_emb = masked_views
        .iter()
        .map(|views| {
            let f = encode_images(provider, views)?;
            let (n, d) = f.dims2()?;
            Ok((0..d).map(|j| (0..n).map(|i| f.at2(i, j)).sum::<f64>() / n as f64).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(phrase_emb
        .iter()
        .map(|p| cluster_emb.iter().map(|c| cosine(p, c)).collect())
        .collect())
}

/// Bijection maximizing total similarity, returned as `phrase_of_cluster`.
/// Exhaustive over permutations for up to six objects, greedy beyond.
pub fn best_assignment(sim: &[Vec<f64>]) -> Result<Vec<usize>> {
    let k = sim.len();
    if sim.iter().any(|r| r.len() != k) {
        return Err(Error::CountMismatch {
            phrases: k,
            clusters: sim.first().map_or(0, Vec::len),
        });
    }
    if k <= 6 {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut perm: Vec<usize> = (0..k).collect();
        permute(&mut perm, 0, &mut |cluster_of_phrase| {
            let total: f64 = cluster_of_phrase.iter().enumerate().map(|(p, &c)| sim[p][c]).sum();
            if best.as_ref().is_none_or(|b| total > b.0) {
                best = Some((total, cluster_of_phrase.to_vec()));
            }
        });
        let cluster_of_phrase = best.map(|b| b.1).unwrap_or_default();
        return Ok(invert(&cluster_of_phrase));
    }
    let mut used_p = vec![false; k];
    let mut used_c = vec![false; k];
    let mut cluster_of_phrase = vec![0; k];
    for _ in 0..k {
        let mut pick = (f64::NEG_INFINITY, 0, 0);
        for p in (0..k).filter(|&p| !used_p[p]) {
            for c in (0..k).filter(|&c| !used_c[c]) {
                if sim[p][c] > pick.0 {
                    pick = (sim[p][c], p, c);
                }
            }
        }
        used_p[pick.1] = true;
        used_c[pick.2] = true;
        cluster_of_phrase[pick.1] = pick.2;
    }
    Ok(invert(&cluster_of_phrase))
}

// lexicographic order, so ties keep the earliest permutation
fn permute(v: &mut Vec<usize>, i: usize, f: &mut impl FnMut(&[usize])) {
    if i == v.len() {
        f(v);
        return;
    }
    for j in i..v.len() {
        v[i..=j].rotate_right(1);
        permute(v, i + 1, f);
        v[i..=j].rotate_left(1);
    }
}

fn invert(p: &[usize]) -> Vec<usize> {
    let mut out = vec![0; p.len()];
    for (a, &b) in p.iter().enumerate() {
        out[b] = a;
    }
    out
}

/// Matches noun phrases to object clusters by comparing phrase embeddings
/// with embeddings of each object's masked neutral renders.
pub fn match_phrases_to_clusters(
    phrases: &[NounPhrase],
    word_features: &Tensor,
    masked_views: &[Vec<Image>],
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<usize>> {
    if phrases.len() != masked_views.len() {
        return Err(Error::CountMismatch {
            phrases: phrases.len(),
            clusters: masked_views.len(),
        });
    }
    let emb = phrase_embeddings(phrases, word_features)?;
    best_assignment(&similarity_matrix(&emb, masked_views, provider)?)
}

/// Clusters of the current points plus the phrase matched to each cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectAssignment {
    pub cluster_of_point: Vec<usize>,
    pub phrase_of_cluster: Vec<usize>,
}

/// Bipartite graph between surface points and prompt words. A point links
/// to every word of the phrase matched to its cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossModalGraph {
    pub num_points: usize,
    pub num_words: usize,
    pub edges: Vec<(usize, usize)>,
}

impl CrossModalGraph {
    /// Row-major `[num_points, num_words]` adjacency.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.num_points * self.num_words];
        for &(i, j) in &self.edges {
            m[i * self.num_words + j] = true;
        }
        m
    }

    /// Graph where every point links to every word.
    pub fn dense(num_points: usize, num_words: usize) -> Self {
        CrossModalGraph {
            num_points,
            num_words,
            edges: (0..num_points).flat_map(|i| (0..num_words).map(move |j| (i, j))).collect(),
        }
    }

    pub fn isolated_points(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.num_points];
        for &(i, _) in &self.edges {
            deg[i] += 1;
        }
        (0..self.num_points).filter(|&i| deg[i] == 0).collect()
    }
}

pub fn build_graph(assignment: &ObjectAssignment, phrases: &[NounPhrase], num_words: usize) -> Result<CrossModalGraph> {
    let k = assignment.phrase_of_cluster.len();
    let mut seen = vec![false; phrases.len()];
    for &p in &assignment.phrase_of_cluster {
        if p >= phrases.len() || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidArgument(format!(
                "phrase_of_cluster {:?} is not a bijection onto {} phrases",
                assignment.phrase_of_cluster,
                phrases.len()
            )));
        }
    }
    if k != phrases.len() {
        return Err(Error::CountMismatch {
            phrases: phrases.len(),
            clusters: k,
        });
    }
    if let Some(p) = phrases.iter().find(|p| p.span.1 >= num_words) {
        return Err(Error::shape("build_graph", format!("span {:?} over {num_words} words", p.span)));
    }
    let mut edges = Vec::new();
    for (i, &c) in assignment.cluster_of_point.iter().enumerate() {
        if c >= k {
            return Err(Error::InvalidArgument(format!("point {i} in cluster {c} of {k}")));
        }
        edges.extend(phrases[assignment.phrase_of_cluster[c]].word_indices().map(|j| (i, j)));
    }
    Ok(CrossModalGraph {
        num_points: assignment.cluster_of_point.len(),
        num_words,
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sceneparse::extract_noun_phrases;

    #[test]
    fn two_by_two_assignment() {
        let a = best_assignment(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        assert_eq!(a, vec![0, 1]);
        let b = best_assignment(&[vec![0.1, 0.9], vec![0.8, 0.2]]).unwrap();
        assert_eq!(b, vec![1, 0]);
        assert_eq!(best_assignment(&[vec![0.3]]).unwrap(), vec![0]);
    }

    #[test]
    fn exhaustive_beats_greedy_trap() {
        // greedy would take 0.9 first and lose
        let sim = vec![vec![0.9, 0.85, 0.0], vec![0.85, 0.0, 0.0], vec![0.0, 0.0, 0.5]];
        assert_eq!(best_assignment(&sim).unwrap(), vec![1, 0, 2]);
    }

    #[test]
    fn edge_counts() {
        let ph = extract_noun_phrases("a red sphere").unwrap();
        let g = build_graph(
            &ObjectAssignment {
                cluster_of_point: vec![0; 3],
                phrase_of_cluster: vec![0],
            },
            &ph,
            3,
        )
        .unwrap();
        assert_eq!(g.edges.len(), 6);
        let ph = extract_noun_phrases("a red sphere and a big blue cube").unwrap();
        let g = build_graph(
            &ObjectAssignment {
                cluster_of_point: vec![0, 1, 0, 1, 1, 0, 1],
                phrase_of_cluster: vec![0, 1],
            },
            &ph,
            8,
        )
        .unwrap();
        assert_eq!(g.edges.len(), 3 * 2 + 4 * 3);
        for &(i, j) in &g.edges {
            let c = [0, 1, 0, 1, 1, 0, 1][i];
            assert!(ph[c].word_indices().contains(&j));
        }
        assert!(g.isolated_points().is_empty());
    }

    #[test]
    fn non_bijection_rejected() {
        let ph = extract_noun_phrases("a red sphere and a blue sphere").unwrap();
        let a = ObjectAssignment {
            cluster_of_point: vec![0],
            phrase_of_cluster: vec![0, 0],
        };
        assert!(build_graph(&a, &ph, 7).is_err());
    }
}
