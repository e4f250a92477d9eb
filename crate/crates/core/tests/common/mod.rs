//! Fixtures and brute-force reference implementations shared by the
//! integration tests and the acceptance runner.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use topicforge::corpus::{Corpus, DocDate, Document, Source};
use topicforge::embedding::{hash_embedding_provider, EmbeddingMatrix};

pub const SLEEP_WORDS: [&str; 20] = [
    "insomnia", "melatonin", "circadian", "nap", "apnea", "drowsiness", "bedtime", "snoring",
    "hypnotic", "wakefulness", "polysomnography", "narcolepsy", "dreams", "nocturnal", "slumber",
    "chronotype", "actigraphy", "restlessness", "pillow", "siesta",
];
pub const GENE_WORDS: [&str; 20] = [
    "genome", "allele", "heritability", "polymorphism", "locus", "genotype", "sequencing",
    "methylation", "transcriptome", "chromosome", "variant", "epigenetic", "exome", "mutation",
    "haplotype", "gwas", "phenotype", "linkage", "nucleotide", "enhancer",
];
pub const SOCIAL_WORDS: [&str; 20] = [
    "twitter", "reddit", "posts", "hashtag", "platform", "forum", "tweets", "sentiment",
    "followers", "facebook", "instagram", "comments", "engagement", "stigma", "peer", "messaging",
    "influencer", "subreddit", "likes", "retweet",
];

pub fn blocks() -> [&'static [&'static str; 20]; 3] {
    [&SLEEP_WORDS, &GENE_WORDS, &SOCIAL_WORDS]
}

/// Signature word of each planted block (first entry of its vocabulary).
pub fn signatures() -> [&'static str; 3] {
    [SLEEP_WORDS[0], GENE_WORDS[0], SOCIAL_WORDS[0]]
}

pub struct Planted {
    pub corpus: Corpus,
    pub embeddings: EmbeddingMatrix,
    pub block_of: Vec<usize>,
}

/// `per_block` documents for each of three disjoint vocabularies. Every
/// document names its block's signature word in the title and abstract.
/// Embeddings are feature-hashed texts plus a per-block offset and small noise.
pub fn planted_corpus(per_block: usize, seed: u64) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::new();
    let mut block_of = Vec::new();
    for (b, vocab) in blocks().iter().enumerate() {
        for i in 0..per_block {
            let rest = &vocab[1..];
            let title: Vec<&str> = rest.choose_multiple(&mut rng, 3).copied().collect();
            let body: Vec<&str> = (0..14).map(|_| *rest.choose(&mut rng).unwrap()).collect();
            docs.push(Document {
                id: format!("b{b}-{i:03}"),
                title: format!("{} {}", vocab[0], title.join(" ")),
                abstract_text: format!("{} {}.", body.join(" "), vocab[0]),
                date: DocDate::year(2015 + rng.random_range(0..8u16)),
                source: Source::Pubmed,
            });
            block_of.push(b);
        }
    }
    let texts: Vec<String> = docs.iter().map(Document::combined_text).collect();
    let base = hash_embedding_provider(&texts, 64, 7).unwrap();
    let offsets: Vec<Vec<f64>> = (0..3).map(|_| unit_gaussian(&mut rng, 64)).collect();
    let mut values = Vec::with_capacity(base.n() * 64);
    for (row, &b) in base.rows().zip(&block_of) {
        for (j, &v) in row.iter().enumerate() {
            let noise: f64 = StandardNormal.sample(&mut rng);
            values.push((v as f64 + 0.5 * offsets[b][j] + 0.01 * noise) as f32);
        }
    }
    Planted {
        corpus: Corpus::new(docs).unwrap(),
        embeddings: EmbeddingMatrix::new(base.n(), 64, values).unwrap(),
        block_of,
    }
}

pub fn unit_gaussian(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut *rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Direction blobs for cosine geometry: `per_blob` points scattered around
/// each of `k` random unit centers.
pub fn direction_blobs(k: usize, per_blob: usize, d: usize, spread: f64, seed: u64) -> (EmbeddingMatrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..k).map(|_| unit_gaussian(&mut rng, d)).collect();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (b, c) in centers.iter().enumerate() {
        for _ in 0..per_blob {
            for &x in c {
                let e: f64 = StandardNormal.sample(&mut rng);
                values.push((x + spread * e) as f32);
            }
            labels.push(b);
        }
    }
    (EmbeddingMatrix::new(k * per_blob, d, values).unwrap(), labels)
}

/// Euclidean Gaussian blobs.
pub fn gaussian_blobs(centers: &[Vec<f64>], per_blob: usize, sd: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for (b, c) in centers.iter().enumerate() {
        for _ in 0..per_blob {
            pts.push(
                c.iter()
                    .map(|&x| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        x + sd * e
                    })
                    .collect(),
            );
            labels.push(b);
        }
    }
    (pts, labels)
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean silhouette coefficient under Euclidean distance.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let k = labels.iter().max().unwrap() + 1;
    let n = points.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for j in 0..n {
            if i != j {
                sums[labels[j]] += euclid(&points[i], &points[j]);
                counts[labels[j]] += 1;
            }
        }
        let own = labels[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

/// Fraction of points whose nearest other point has the same label.
pub fn same_label_nn_rate(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = points.len();
    let hits = (0..n)
        .filter(|&i| {
            let nn = (0..n)
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    euclid(&points[i], &points[a]).total_cmp(&euclid(&points[i], &points[b]))
                })
                .unwrap();
            labels[nn] == labels[i]
        })
        .count();
    hits as f64 / n as f64
}

// ---- brute-force references -------------------------------------------------

pub fn bf_cosine(u: &[f32], v: &[f32]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| *a as f64 * *b as f64).sum();
    let nu: f64 = u.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
    if nu == 0.0 && nv == 0.0 {
        return 0.0;
    }
    if nu == 0.0 || nv == 0.0 {
        return 1.0;
    }
    (1.0 - dot / (nu * nv)).clamp(0.0, 2.0)
}

/// k nearest other points by full sort; ties by lower index.
pub fn bf_knn(m: &EmbeddingMatrix, k: usize) -> Vec<Vec<(usize, f64)>> {
    (0..m.n())
        .map(|i| {
            let mut all: Vec<(usize, f64)> = (0..m.n())
                .filter(|&j| j != i)
                .map(|j| (j, bf_cosine(m.row(i), m.row(j))))
                .collect();
            all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            all.truncate(k);
            all
        })
        .collect()
}

pub fn bf_core_distances(points: &[Vec<f64>], min_samples: usize) -> Vec<f64> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| euclid(p, q))
                .collect();
            d.sort_by(f64::total_cmp);
            d[min_samples - 1]
        })
        .collect()
}

/// Total weight of a minimum spanning tree of the mutual-reachability graph,
/// grown one cheapest crossing edge at a time by scanning every pair.
pub fn bf_prim_weight(points: &[Vec<f64>], core: &[f64]) -> f64 {
    let n = points.len();
    let mreach = |i: usize, j: usize| core[i].max(core[j]).max(euclid(&points[i], &points[j]));
    let mut in_tree = vec![false; n];
    in_tree[0] = true;
    let mut total = 0.0;
    for _ in 1..n {
        let mut best = (f64::INFINITY, 0);
        for i in (0..n).filter(|&i| in_tree[i]) {
            for j in (0..n).filter(|&j| !in_tree[j]) {
                let w = mreach(i, j);
                if w < best.0 {
                    best = (w, j);
                }
            }
        }
        in_tree[best.1] = true;
        total += best.0;
    }
    total
}

pub fn bf_topic_diversity(topics: &[Vec<String>]) -> f64 {
    let mut all: Vec<&String> = topics.iter().flatten().collect();
    let total = all.len();
    all.sort();
    all.dedup();
    all.len() as f64 / total as f64
}

pub fn bf_rbo(s: &[String], t: &[String], p: f64) -> f64 {
    let k = s.len();
    let mut num = 0.0;
    let mut den = 0.0;
    for d in 1..=k {
        let hs: HashSet<&String> = s[..d].iter().collect();
        let ht: HashSet<&String> = t[..d].iter().collect();
        let a = hs.intersection(&ht).count() as f64 / d as f64;
        num += p.powi(d as i32 - 1) * a;
        den += p.powi(d as i32 - 1);
    }
    num / den
}

pub fn bf_inverted_rbo(topics: &[Vec<String>], p: f64) -> f64 {
    let mut vals = Vec::new();
    for i in 0..topics.len() {
        for j in i + 1..topics.len() {
            vals.push(bf_rbo(&topics[i], &topics[j], p));
        }
    }
    1.0 - vals.iter().sum::<f64>() / vals.len() as f64
}

/// Every sliding window as a set of words.
pub fn bf_windows(docs: &[Vec<String>], size: usize) -> Vec<BTreeSet<String>> {
    let mut out = Vec::new();
    for doc in docs {
        if doc.is_empty() {
            continue;
        }
        if doc.len() <= size {
            out.push(doc.iter().cloned().collect());
        } else {
            for s in 0..=doc.len() - size {
                out.push(doc[s..s + size].iter().cloned().collect());
            }
        }
    }
    out
}

pub fn bf_npmi(windows: &[BTreeSet<String>], a: &str, b: &str) -> f64 {
    let n = windows.len() as f64;
    let ca = windows.iter().filter(|w| w.contains(a)).count() as f64;
    let cb = windows.iter().filter(|w| w.contains(b)).count() as f64;
    let cab = windows.iter().filter(|w| w.contains(a) && w.contains(b)).count() as f64;
    if cab == 0.0 {
        return -1.0;
    }
    if cab == n {
        return 1.0;
    }
    let pab = cab / n + 1e-12;
    let v = (pab / ((ca / n) * (cb / n))).ln() / -pab.ln();
    v.clamp(-1.0, 1.0)
}

pub fn random_word_lists(rng: &mut impl Rng, n_topics: usize, k: usize, alphabet: usize) -> Vec<Vec<String>> {
    let pool: Vec<String> = (0..alphabet).map(|i| format!("w{i}")).collect();
    (0..n_topics)
        .map(|_| pool.choose_multiple(rng, k).cloned().collect())
        .collect()
}

pub fn random_docs(rng: &mut impl Rng, n_docs: usize, max_len: usize, alphabet: usize) -> Vec<Vec<String>> {
    (0..n_docs)
        .map(|_| {
            let len = rng.random_range(0..=max_len);
            (0..len)
                .map(|_| format!("w{}", rng.random_range(0..alphabet)))
                .collect()
        })
        .collect()
}
