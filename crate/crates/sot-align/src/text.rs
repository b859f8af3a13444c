//! Entity-name embeddings, cross-KG cosine similarity, and pseudo entity
//! pairs.
//!
//! Names are embedded as the arithmetic mean of their in-vocabulary word
//! vectors. The cross-KG similarity matrix feeds two things: the pseudo
//! entity pairs that anchor unsupervised training, and the top-N candidate
//! pairs of the globally guided refining loss.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::error::{Result, SotError};
use crate::kg::{read_to_string, KnowledgeGraph};

/// Pretrained word vectors, GloVe text format.
#[derive(Debug, Clone)]
pub struct WordEmbeddingTable {
    pub dimension: usize,
    pub vectors: HashMap<String, Vec<f64>>,
}

impl WordEmbeddingTable {
    pub fn new(dimension: usize) -> Self {
        WordEmbeddingTable {
            dimension,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(SotError::Shape(format!(
                "vector for {token:?} has length {}, table dimension is {}",
                vector.len(),
                self.dimension
            )));
        }
        if self.vectors.insert(token.to_string(), vector).is_some() {
            return Err(SotError::Duplicate {
                what: "word vector token".into(),
                key: token.to_string(),
            });
        }
        Ok(())
    }

    /// Parse a GloVe-style text file: one line per token,
    /// `token v1 v2 ... vd`, space-separated. The dimension is taken from
    /// the first line.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let mut table: Option<WordEmbeddingTable> = None;
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().ok_or_else(|| {
                SotError::parse(path, lineno + 1, "empty line with whitespace")
            })?;
            let values: Vec<f64> = parts
                .map(|v| {
                    v.parse::<f64>().map_err(|_| {
                        SotError::parse(path, lineno + 1, format!("bad float {v:?}"))
                    })
                })
                .collect::<Result<_>>()?;
            if values.is_empty() {
                return Err(SotError::parse(path, lineno + 1, "token without values"));
            }
            let table = table.get_or_insert_with(|| WordEmbeddingTable::new(values.len()));
            if values.len() != table.dimension {
                return Err(SotError::parse(
                    path,
                    lineno + 1,
                    format!(
                        "dimension {} differs from first line's {}",
                        values.len(),
                        table.dimension
                    ),
                ));
            }
            table.insert(token, values)?;
        }
        table.ok_or_else(|| SotError::parse(path, 0, "empty word-vector file"))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut keys: Vec<&String> = self.vectors.keys().collect();
        keys.sort();
        let mut buf = String::new();
        for k in keys {
            buf.push_str(k);
            for v in &self.vectors[k] {
                buf.push(' ');
                buf.push_str(&format!("{v}"));
            }
            buf.push('\n');
        }
        crate::kg::write_file(path, buf.as_bytes())
    }
}

/// Lowercase and split on anything that is not alphanumeric. Underscores,
/// hyphens and other punctuation all act as separators; the rule is kept in
/// one place so callers can pre-normalize if they need something else.
pub fn tokenize(name: &str) -> Vec<String> {
    name.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

/// Per-entity name embeddings for one KG: row `i` is the mean word vector of
/// entity `i`'s name.
#[derive(Debug, Clone, PartialEq)]
pub struct NameEmbeddings {
    pub matrix: Array2<f64>,
    /// Entities whose names had no in-vocabulary token; their rows are zero.
    pub oov: Vec<usize>,
}

impl NameEmbeddings {
    pub fn dimension(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }
}

/// Mean of in-vocabulary word vectors per entity name; out-of-vocabulary
/// tokens are skipped, and a name with no in-vocabulary token at all gets a
/// zero row plus an OOV report entry.
pub fn embed_names(kg: &KnowledgeGraph, table: &WordEmbeddingTable) -> Result<NameEmbeddings> {
    if table.dimension == 0 {
        return Err(SotError::Shape("word-vector dimension must be > 0".into()));
    }
    let d = table.dimension;
    let mut matrix = Array2::<f64>::zeros((kg.num_entities(), d));
    let mut oov = Vec::new();
    for e in &kg.entities {
        let mut count = 0usize;
        let mut acc = vec![0.0f64; d];
        for tok in tokenize(&e.name) {
            if let Some(v) = table.vectors.get(&tok) {
                for (a, x) in acc.iter_mut().zip(v) {
                    *a += x;
                }
                count += 1;
            }
        }
        if count == 0 {
            oov.push(e.id);
        } else {
            let inv = 1.0 / count as f64;
            for (j, a) in acc.iter().enumerate() {
                matrix[[e.id, j]] = a * inv;
            }
        }
    }
    Ok(NameEmbeddings { matrix, oov })
}

/// Dense cross-KG cosine similarity, entries in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub values: Array2<f64>,
}

impl SimilarityMatrix {
    pub fn shape(&self) -> (usize, usize) {
        let s = self.values.dim();
        (s.0, s.1)
    }
}

fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let dot = a.dot(&b);
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// `s_ij = cos(a_i, b_j)`; a zero-norm row on either side yields 0.
pub fn similarity_matrix(a: &NameEmbeddings, b: &NameEmbeddings) -> Result<SimilarityMatrix> {
    if a.dimension() != b.dimension() {
        return Err(SotError::Shape(format!(
            "embedding dimensions differ: {} vs {}",
            a.dimension(),
            b.dimension()
        )));
    }
    let (m, n) = (a.len(), b.len());
    let mut values = Array2::<f64>::zeros((m, n));
    for i in 0..m {
        let ai = a.matrix.row(i);
        for j in 0..n {
            values[[i, j]] = cosine(ai, b.matrix.row(j));
        }
    }
    Ok(SimilarityMatrix { values })
}

/// Mutually exclusive high-similarity index pairs used as unsupervised
/// anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoPairSet {
    pub pairs: Vec<(usize, usize)>,
    pub threshold: f64,
}

impl PseudoPairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Select the pairs `(i, j)` with `s_ij > epsilon` where `s_ij` is the only
/// above-threshold entry in both row `i` and column `j`.
pub fn extract_pseudo_pairs(s: &SimilarityMatrix, epsilon: f64) -> Result<PseudoPairSet> {
    if !(0.0 < epsilon && epsilon < 1.0) {
        return Err(SotError::Config(format!(
            "pseudo-pair threshold must lie in (0, 1), got {epsilon}"
        )));
    }
    let (m, n) = s.shape();
    let mut row_counts = vec![0usize; m];
    let mut col_counts = vec![0usize; n];
    for i in 0..m {
        for j in 0..n {
            if s.values[[i, j]] > epsilon {
                row_counts[i] += 1;
                col_counts[j] += 1;
            }
        }
    }
    let mut pairs = Vec::new();
    for i in 0..m {
        if row_counts[i] != 1 {
            continue;
        }
        for j in 0..n {
            if s.values[[i, j]] > epsilon && col_counts[j] == 1 {
                pairs.push((i, j));
            }
        }
    }
    Ok(PseudoPairSet {
        pairs,
        threshold: epsilon,
    })
}

/// For each row, the `n` column indices with the largest similarity, ties
/// broken toward the smaller column index. Returns `(i, j)` pairs grouped by
/// row.
pub fn top_n_candidates(s: &SimilarityMatrix, top_n: usize) -> Vec<(usize, usize)> {
    let (m, n) = s.shape();
    let keep = top_n.min(n);
    let mut out = Vec::with_capacity(m * keep);
    let mut idx: Vec<usize> = Vec::with_capacity(n);
    for i in 0..m {
        idx.clear();
        idx.extend(0..n);
        idx.sort_by(|&a, &b| {
            s.values[[i, b]]
                .partial_cmp(&s.values[[i, a]])
                .unwrap()
                .then(a.cmp(&b))
        });
        for &j in idx.iter().take(keep) {
            out.push((i, j));
        }
    }
    out
}

/// Write an OOV report beside the embedding output: `entity_key<TAB>oov`.
pub fn write_oov_report(kg: &KnowledgeGraph, emb: &NameEmbeddings, path: &Path) -> Result<()> {
    let mut buf = String::new();
    for &id in &emb.oov {
        buf.push_str(&kg.entities[id].external_key);
        buf.push_str("\toov\n");
    }
    crate::kg::write_file(path, buf.as_bytes())
}

/// Dump embeddings as `entity_key v1 ... vd` (the word-vector text format,
/// keyed by entity) so stages can reload them.
pub fn write_embeddings(kg: &KnowledgeGraph, matrix: &Array2<f64>, path: &Path) -> Result<()> {
    let mut buf = String::new();
    for e in &kg.entities {
        buf.push_str(&e.external_key);
        for v in matrix.row(e.id) {
            buf.push(' ');
            buf.push_str(&format!("{v}"));
        }
        buf.push('\n');
    }
    crate::kg::write_file(path, buf.as_bytes())
}

/// Reload an embedding dump written by [`write_embeddings`], row order taken
/// from the KG's entity ids.
pub fn read_embeddings(kg: &KnowledgeGraph, path: &Path) -> Result<Array2<f64>> {
    let table = WordEmbeddingTable::load(path)?;
    let mut matrix = Array2::<f64>::zeros((kg.num_entities(), table.dimension));
    for e in &kg.entities {
        let row = table.vectors.get(&e.external_key).ok_or_else(|| {
            SotError::Referential {
                key: e.external_key.clone(),
                context: format!("in embedding dump {}", path.display()),
            }
        })?;
        for (j, v) in row.iter().enumerate() {
            matrix[[e.id, j]] = *v;
        }
    }
    Ok(matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{Entity, KnowledgeGraph};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn kg_with_names(names: &[&str]) -> KnowledgeGraph {
        let entities = names
            .iter()
            .enumerate()
            .map(|(i, n)| Entity {
                id: i,
                external_key: format!("e{i}"),
                name: n.to_string(),
            })
            .collect();
        KnowledgeGraph::from_parts(entities, Vec::new(), Vec::new()).unwrap()
    }

    fn toy_table() -> WordEmbeddingTable {
        let mut t = WordEmbeddingTable::new(2);
        t.insert("heart", vec![1.0, 0.0]).unwrap();
        t.insert("attack", vec![0.0, 1.0]).unwrap();
        t.insert("stroke", vec![0.5, 0.5]).unwrap();
        t
    }

    #[test]
    fn mean_of_word_vectors() {
        let kg = kg_with_names(&["heart attack", "stroke", "zzz qqq"]);
        let emb = embed_names(&kg, &toy_table()).unwrap();
        assert_eq!(emb.matrix.row(0).to_vec(), vec![0.5, 0.5]);
        assert_eq!(emb.matrix.row(1).to_vec(), vec![0.5, 0.5]);
        assert_eq!(emb.matrix.row(2).to_vec(), vec![0.0, 0.0]);
        assert_eq!(emb.oov, vec![2]);
    }

    #[test]
    fn tokenizer_splits_punctuation_and_underscores() {
        assert_eq!(tokenize("Heart_Attack (acute)"), vec!["heart", "attack", "acute"]);
        assert_eq!(tokenize("aspirin-500mg"), vec!["aspirin", "500mg"]);
    }

    #[test]
    fn cosine_examples() {
        let a = NameEmbeddings {
            matrix: array![[1.0, 0.0], [3.0, 4.0]],
            oov: vec![],
        };
        let b = NameEmbeddings {
            matrix: array![[1.0, 0.0], [0.0, 1.0], [4.0, 3.0]],
            oov: vec![],
        };
        let s = similarity_matrix(&a, &b).unwrap();
        assert_abs_diff_eq!(s.values[[0, 0]], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.values[[0, 1]], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.values[[1, 2]], 0.96, epsilon = 1e-12);
    }

    #[test]
    fn zero_norm_rows_get_zero_similarity() {
        let a = NameEmbeddings {
            matrix: array![[0.0, 0.0]],
            oov: vec![0],
        };
        let b = NameEmbeddings {
            matrix: array![[1.0, 1.0]],
            oov: vec![],
        };
        let s = similarity_matrix(&a, &b).unwrap();
        assert_eq!(s.values[[0, 0]], 0.0);
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let a = NameEmbeddings {
            matrix: Array2::zeros((1, 2)),
            oov: vec![],
        };
        let b = NameEmbeddings {
            matrix: Array2::zeros((1, 3)),
            oov: vec![],
        };
        assert!(matches!(
            similarity_matrix(&a, &b).unwrap_err(),
            SotError::Shape(_)
        ));
    }

    #[test]
    fn pseudo_pairs_identity_like() {
        let s = SimilarityMatrix {
            values: array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        };
        let p = extract_pseudo_pairs(&s, 0.99).unwrap();
        assert_eq!(p.pairs, vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn pseudo_pairs_ambiguous_row_excluded() {
        let s = SimilarityMatrix {
            values: array![[0.995, 0.992], [0.30, 0.40]],
        };
        let p = extract_pseudo_pairs(&s, 0.99).unwrap();
        assert!(p.pairs.is_empty());
    }

    #[test]
    fn top_n_ordering_and_ties() {
        let s = SimilarityMatrix {
            values: array![[0.9, 0.1, 0.5]],
        };
        let q = top_n_candidates(&s, 2);
        assert_eq!(q, vec![(0, 0), (0, 2)]);

        let ties = SimilarityMatrix {
            values: array![[0.4, 0.4, 0.4]],
        };
        assert_eq!(top_n_candidates(&ties, 1), vec![(0, 0)]);
    }

    #[test]
    fn top_n_truncates_to_row_width() {
        let s = SimilarityMatrix {
            values: array![[0.2, 0.1]],
        };
        assert_eq!(top_n_candidates(&s, 5).len(), 2);
    }

    proptest! {
        #[test]
        fn pseudo_pairs_are_mutually_exclusive_and_above_threshold(
            rows in 1usize..6, cols in 1usize..6,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let values = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0));
            let s = SimilarityMatrix { values };
            for eps in [0.3, 0.7] {
                let set = extract_pseudo_pairs(&s, eps).unwrap();
                for (a, &(i1, j1)) in set.pairs.iter().enumerate() {
                    // mutual exclusivity
                    for &(i2, j2) in &set.pairs[a + 1..] {
                        prop_assert!(i1 != i2 && j1 != j2);
                    }
                    // selected entry exceeds the threshold and is the only
                    // above-threshold entry in its row and column
                    prop_assert!(s.values[[i1, j1]] > eps);
                    for k in 0..cols {
                        prop_assert!(k == j1 || s.values[[i1, k]] <= eps);
                    }
                    for l in 0..rows {
                        prop_assert!(l == i1 || s.values[[l, j1]] <= eps);
                    }
                }
            }
        }

        #[test]
        fn similarity_transposes_under_swap(
            m in 1usize..5, n in 1usize..5, d in 1usize..4, seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let a = NameEmbeddings {
                matrix: Array2::from_shape_fn((m, d), |_| rng.gen_range(-1.0..1.0)),
                oov: vec![],
            };
            let b = NameEmbeddings {
                matrix: Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0)),
                oov: vec![],
            };
            let ab = similarity_matrix(&a, &b).unwrap();
            let ba = similarity_matrix(&b, &a).unwrap();
            for i in 0..m {
                for j in 0..n {
                    prop_assert!((ab.values[[i, j]] - ba.values[[j, i]]).abs() < 1e-12);
                    prop_assert!(ab.values[[i, j]].abs() <= 1.0 + 1e-9);
                }
            }
        }
    }
}
