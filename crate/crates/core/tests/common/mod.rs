#![allow(dead_code)]

use subpop_core::attribute_catalog::{build_catalog, AttributeType, ClassCatalog, Subpopulation};
use subpop_core::embedding_store::{DatasetManifest, EmbeddingTable};
use subpop_core::synthgen::GaussianStream;

pub struct Instance {
    pub manifest: DatasetManifest,
    pub catalog: ClassCatalog,
}

/// Shape of a random instance.
#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub n: usize,
    pub classes: usize,
    pub subpops: usize,
    pub dim: usize,
    /// Coordinates drawn from {-1, 0, 1}: produces many exactly tied cosines.
    pub quantized: bool,
}

fn random_row(s: &mut GaussianStream, dim: usize, quantized: bool) -> Vec<f64> {
    loop {
        let v: Vec<f64> = if quantized {
            (0..dim).map(|_| (s.uniform() * 3.0).floor() - 1.0).collect()
        } else {
            s.normals(dim)
        };
        if v.iter().any(|x| x.abs() > 0.1) {
            return v;
        }
    }
}

fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn table(rows: &[Vec<f64>], dim: usize, prefix: &str) -> EmbeddingTable {
    if rows.is_empty() {
        EmbeddingTable::empty(dim).unwrap()
    } else {
        EmbeddingTable::from_rows_f64(dim, rows, ids(prefix, rows.len())).unwrap()
    }
}

pub const TYPES: [AttributeType; 4] =
    [AttributeType::Kinds, AttributeType::States, AttributeType::Descriptors, AttributeType::Backgrounds];

/// Random catalog with subpopulations spread over classes and types. Some
/// subpopulations share a vector row.
pub fn random_catalog(s: &mut GaussianStream, classes: usize, subpops: usize, dim: usize, quantized: bool) -> ClassCatalog {
    let classnames: Vec<Vec<f64>> = (0..classes).map(|_| random_row(s, dim, quantized)).collect();
    let n_rows = subpops.max(1).div_ceil(4) * 3;
    let rows: Vec<Vec<f64>> = (0..n_rows).map(|_| random_row(s, dim, quantized)).collect();
    let entries = (0..subpops)
        .map(|i| Subpopulation {
            class_index: (s.uniform() * classes as f64) as usize,
            attribute_text: format!("attr {i}"),
            attribute_type: TYPES[(s.uniform() * TYPES.len() as f64) as usize],
            vector_row: (s.uniform() * n_rows as f64) as usize,
        })
        .collect();
    build_catalog(ids("class", classes), table(&classnames, dim, "c"), entries, table(&rows, dim, "s")).unwrap()
}

pub fn random_instance(seed: u64, shape: Shape) -> Instance {
    let mut s = GaussianStream::new(seed);
    let catalog = random_catalog(&mut s, shape.classes, shape.subpops, shape.dim, shape.quantized);
    let rows: Vec<Vec<f64>> = (0..shape.n).map(|_| random_row(&mut s, shape.dim, shape.quantized)).collect();
    let labels: Vec<usize> = (0..shape.n).map(|_| (s.uniform() * shape.classes as f64) as usize).collect();
    let attrs = labels.iter().map(|_| vec![format!("g{}", (s.uniform() * 3.0) as usize)]).collect();
    let manifest =
        DatasetManifest::new(table(&rows, shape.dim, "img"), labels, Some(attrs), ids("class", shape.classes)).unwrap();
    Instance { manifest, catalog }
}

/// Random shape within the given bounds.
pub fn random_shape(s: &mut GaussianStream, max_n: usize, max_classes: usize, max_subpops: usize, max_dim: usize) -> Shape {
    let pick = |s: &mut GaussianStream, lo: usize, hi: usize| lo + (s.uniform() * (hi - lo + 1) as f64) as usize;
    Shape {
        n: pick(s, 1, max_n),
        classes: pick(s, 1, max_classes),
        subpops: pick(s, 0, max_subpops),
        dim: pick(s, 2, max_dim),
        quantized: s.uniform() < 0.3,
    }
}

/// Reference dot product: plain `f64` accumulation in coordinate order.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for i in 0..a.len() {
        acc += a[i] as f64 * b[i] as f64;
    }
    acc
}

/// One pool member as materialized by the reference scorer.
#[derive(Debug, Clone)]
pub struct Member {
    pub position: usize,
    pub entry: usize,
    pub sim: f64,
}

/// All `(pool position, entry, cosine)` triples of class `c`.
pub fn materialize(x: &[f32], catalog: &ClassCatalog, c: usize) -> Vec<Member> {
    catalog
        .pool(c)
        .iter()
        .enumerate()
        .map(|(position, &entry)| Member { position, entry, sim: dot(x, catalog.entry_vector(entry)) })
        .collect()
}

/// Reference top-k: sort by (cosine desc, position asc), keep `min(k, len)`,
/// average the kept members summed in pool order.
pub fn reference_topk(x: &[f32], catalog: &ClassCatalog, k: usize) -> (Vec<f64>, Vec<Vec<Member>>) {
    let mut scores = Vec::new();
    let mut chosen_lists = Vec::new();
    for c in 0..catalog.num_classes() {
        let mut members = materialize(x, catalog, c);
        members.sort_by(|a, b| b.sim.partial_cmp(&a.sim).unwrap().then(a.position.cmp(&b.position)));
        members.truncate(k);
        let mut in_pool_order = members.clone();
        in_pool_order.sort_by_key(|m| m.position);
        let mut sum = 0.0;
        for m in &in_pool_order {
            sum += m.sim;
        }
        scores.push(sum / members.len() as f64);
        chosen_lists.push(members);
    }
    (scores, chosen_lists)
}

pub fn reference_average(x: &[f32], catalog: &ClassCatalog) -> Vec<f64> {
    (0..catalog.num_classes())
        .map(|c| {
            let m = materialize(x, catalog, c);
            let mut sum = 0.0;
            for v in &m {
                sum += v.sim;
            }
            sum / m.len() as f64
        })
        .collect()
}

/// First index of the maximum.
pub fn reference_argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    best
}

/// Softmax via explicit `exp` and normalization, no max subtraction (inputs are bounded).
pub fn plain_softmax(logits: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = logits.iter().map(|l| l.exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

/// Reference CHiLS: class probabilities times the best in-class entry probability,
/// entries normalized over the whole catalog.
pub fn reference_chils(x: &[f32], catalog: &ClassCatalog, t: f64) -> Vec<f64> {
    let class_logits: Vec<f64> =
        (0..catalog.num_classes()).map(|c| dot(x, catalog.classname_vectors().row(c)) / t).collect();
    let p = plain_softmax(&class_logits);
    let all: Vec<f64> = (0..catalog.entries().len()).map(|e| dot(x, catalog.entry_vector(e)) / t).collect();
    let q = plain_softmax(&all);
    (0..catalog.num_classes())
        .map(|c| p[c] * catalog.pool(c).iter().map(|&e| q[e]).fold(0.0, f64::max))
        .collect()
}

/// Worst-q by sorting: mean of the `ceil(q n)` smallest values.
pub fn reference_worst_q(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut m = (q * v.len() as f64).ceil() as usize;
    // Guard against q * n landing a hair above an integer.
    if m as f64 - q * v.len() as f64 > 1.0 - 1e-9 {
        m -= 1;
    }
    let m = m.clamp(1, v.len());
    v[..m].iter().sum::<f64>() / m as f64
}

/// AP from the definition: for each positive, precision at its rank, where
/// the rank counts strictly higher scores plus earlier equal scores.
pub fn reference_ap(scores: &[f64], positive: &[bool]) -> f64 {
    let n = scores.len();
    let mut total = 0.0;
    let mut n_pos = 0;
    for i in 0..n {
        if !positive[i] {
            continue;
        }
        n_pos += 1;
        let mut above = 0;
        let mut pos_above = 0;
        for j in 0..n {
            let ahead = scores[j] > scores[i] || (scores[j] == scores[i] && j < i);
            if ahead {
                above += 1;
                if positive[j] {
                    pos_above += 1;
                }
            }
        }
        total += (pos_above + 1) as f64 / (above + 1) as f64;
    }
    total / n_pos as f64
}

/// `(1 - lambda) t + lambda a`, exactly `t` when the two agree.
pub fn blend(t: f64, a: f64, lambda: f64) -> f64 {
    if t == a {
        t
    } else {
        (1.0 - lambda) * t + lambda * a
    }
}
