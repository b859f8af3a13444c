//! Synthetic KG-pair generator.
//!
//! A base set of matchable concepts is drawn once and duplicated into both
//! KGs; each side then gets its own extra (dangling) entities and its own
//! Gaussian perturbation of the concept vectors as "word vectors". Two
//! knobs shape the difficulty: concepts come in correlated families (so
//! nearest-neighbor ranking actually makes mistakes), and dangling entities
//! can be noisy clones of existing concepts (so dangling detection is a
//! real decision instead of an outlier sweep). Everything is deterministic
//! given the seed.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, SotError};
use crate::kg::{Entity, GoldStandard, KnowledgeGraph, RelationTriple};
use crate::text::WordEmbeddingTable;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub matchable: usize,
    pub dangling1: usize,
    pub dangling2: usize,
    pub dim: usize,
    /// Per-side, per-coordinate Gaussian noise on the concept vectors.
    pub noise_sigma: f64,
    /// Concepts per correlated family; 1 disables families.
    pub family_size: usize,
    /// Weight of the shared family component, in [0, 1).
    pub family_rho: f64,
    /// Dangling entities are concept clones perturbed at this scale;
    /// 0 makes them independent random vectors.
    pub clone_noise: f64,
    pub avg_degree: f64,
    pub relation_types: usize,
    /// Fraction of gold pairs also emitted as a training-pairs file.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            matchable: 100,
            dangling1: 20,
            dangling2: 20,
            dim: 16,
            noise_sigma: 0.35,
            family_size: 4,
            family_rho: 0.9,
            clone_noise: 0.55,
            avg_degree: 4.0,
            relation_types: 3,
            train_fraction: 0.0,
            seed: 17,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.matchable + self.dangling1 < 2 || self.matchable + self.dangling2 < 2 {
            return Err(SotError::Config("each KG needs at least 2 entities".into()));
        }
        if self.dim == 0 {
            return Err(SotError::Config("embedding dimension must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.family_rho) {
            return Err(SotError::Config("family_rho must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.train_fraction) {
            return Err(SotError::Config("train_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub kg1: KnowledgeGraph,
    pub kg2: KnowledgeGraph,
    pub word_vectors: WordEmbeddingTable,
    pub gold: GoldStandard,
    /// `(kg1 id, kg2 id)` pairs earmarked for supervised runs.
    pub train_pairs: Vec<(usize, usize)>,
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..dim).map(|_| scale * normal.sample(rng)).collect()
}

fn add_scaled(base: &[f64], extra: &[f64], scale: f64) -> Vec<f64> {
    base.iter().zip(extra).map(|(b, e)| b + scale * e).collect()
}

pub fn generate(params: &SynthParams) -> Result<SynthData> {
    params.validate()?;
    let m = params.matchable;
    let dim = params.dim;

    // Concept vectors with family structure.
    let mut rng_concepts = substream(params.seed, 0);
    let fam = params.family_size.max(1);
    let num_families = m.div_ceil(fam);
    let family_latents: Vec<Vec<f64>> = (0..num_families)
        .map(|_| gaussian_vec(&mut rng_concepts, dim, 1.0))
        .collect();
    let rho = params.family_rho;
    let own_scale = (1.0 - rho * rho).sqrt();
    let concepts: Vec<Vec<f64>> = (0..m)
        .map(|g| {
            let own = gaussian_vec(&mut rng_concepts, dim, 1.0);
            family_latents[g / fam]
                .iter()
                .zip(&own)
                .map(|(f, o)| rho * f + own_scale * o)
                .collect()
        })
        .collect();

    // Dangling ground truths: clones of concepts (side 1 clones the first
    // half of the concept range, side 2 the second half, so the two sides'
    // clones never correspond to each other) or independent vectors.
    let mut rng_clones = substream(params.seed, 4);
    let mut dangling_truth = |count: usize, lo: usize, hi: usize| -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                if params.clone_noise > 0.0 && m > 1 && hi > lo {
                    let g = rng_clones.gen_range(lo..hi);
                    let noise = gaussian_vec(&mut rng_clones, dim, 1.0);
                    add_scaled(&concepts[g], &noise, params.clone_noise)
                } else {
                    gaussian_vec(&mut rng_clones, dim, 1.0)
                }
            })
            .collect()
    };
    let truth_d1 = dangling_truth(params.dangling1, 0, m / 2);
    let truth_d2 = dangling_truth(params.dangling2, m / 2, m);

    // Tokens and noisy word vectors, independent noise per side.
    let mut table = WordEmbeddingTable::new(dim);
    let mut rng_noise1 = substream(params.seed, 2);
    let mut rng_noise2 = substream(params.seed, 3);
    let mut tokens1 = Vec::new();
    let mut tokens2 = Vec::new();
    for (g, z) in concepts.iter().enumerate() {
        let t1 = format!("m{g}a");
        let t2 = format!("m{g}b");
        let n1 = gaussian_vec(&mut rng_noise1, dim, 1.0);
        let n2 = gaussian_vec(&mut rng_noise2, dim, 1.0);
        table.insert(&t1, add_scaled(z, &n1, params.noise_sigma))?;
        table.insert(&t2, add_scaled(z, &n2, params.noise_sigma))?;
        tokens1.push(t1);
        tokens2.push(t2);
    }
    for (d, z) in truth_d1.iter().enumerate() {
        let t = format!("d{d}a");
        let n = gaussian_vec(&mut rng_noise1, dim, 1.0);
        table.insert(&t, add_scaled(z, &n, params.noise_sigma))?;
        tokens1.push(t);
    }
    for (d, z) in truth_d2.iter().enumerate() {
        let t = format!("d{d}b");
        let n = gaussian_vec(&mut rng_noise2, dim, 1.0);
        table.insert(&t, add_scaled(z, &n, params.noise_sigma))?;
        tokens2.push(t);
    }

    // Shared base graph over the matchable ids plus per-side attachments for
    // the dangling entities.
    let mut rng_graph = substream(params.seed, 1);
    let edges_per_entity = (params.avg_degree / 2.0).ceil() as usize;
    let relations = params.relation_types.max(1);
    let mut base_edges = Vec::new();
    if m > 1 {
        for g in 0..m {
            for _ in 0..edges_per_entity {
                let mut t = rng_graph.gen_range(0..m - 1);
                if t >= g {
                    t += 1;
                }
                base_edges.push((g, rng_graph.gen_range(0..relations), t));
            }
        }
    }
    fn side_edges(
        count: usize,
        m: usize,
        total: usize,
        edges_per_entity: usize,
        relations: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for d in 0..count {
            let id = m + d;
            for _ in 0..edges_per_entity {
                let mut t = rng.gen_range(0..total - 1);
                if t >= id {
                    t += 1;
                }
                out.push((id, rng.gen_range(0..relations), t));
            }
        }
        out
    }
    let n1 = m + params.dangling1;
    let n2 = m + params.dangling2;
    let mut edges1 = base_edges.clone();
    let mut rng_side1 = substream(params.seed, 6);
    edges1.extend(side_edges(
        params.dangling1,
        m,
        n1,
        edges_per_entity,
        relations,
        &mut rng_side1,
    ));
    let mut edges2 = base_edges;
    let mut rng_side2 = substream(params.seed, 7);
    edges2.extend(side_edges(
        params.dangling2,
        m,
        n2,
        edges_per_entity,
        relations,
        &mut rng_side2,
    ));

    let build_kg = |prefix: &str, tokens: &[String], edges: &[(usize, usize, usize)]| {
        let entities: Vec<Entity> = tokens
            .iter()
            .enumerate()
            .map(|(i, tok)| Entity {
                id: i,
                external_key: format!("{prefix}{i}"),
                name: tok.clone(),
            })
            .collect();
        // Relation ids follow first appearance, matching what a reload of
        // the written TSV would assign.
        let mut relation_names: Vec<String> = Vec::new();
        let mut dense: Vec<Option<usize>> = vec![None; relations];
        let triples: Vec<RelationTriple> = edges
            .iter()
            .map(|&(h, r, t)| {
                let relation = *dense[r].get_or_insert_with(|| {
                    relation_names.push(format!("rel{r}"));
                    relation_names.len() - 1
                });
                RelationTriple {
                    head: h,
                    relation,
                    tail: t,
                }
            })
            .collect();
        KnowledgeGraph::from_parts(entities, relation_names, triples)
    };
    let kg1 = build_kg("A", &tokens1, &edges1)?;
    let kg2 = build_kg("B", &tokens2, &edges2)?;

    let pairs: Vec<(usize, usize)> = (0..m).map(|g| (g, g)).collect();
    let gold = GoldStandard {
        pairs: pairs.clone(),
        dangling1: (m..n1).collect(),
        dangling2: (m..n2).collect(),
    };
    let mut rng_train = substream(params.seed, 5);
    let train_pairs: Vec<(usize, usize)> = pairs
        .iter()
        .filter(|_| rng_train.gen_bool(params.train_fraction.clamp(0.0, 1.0)))
        .copied()
        .collect();

    Ok(SynthData {
        kg1,
        kg2,
        word_vectors: table,
        gold,
        train_pairs,
    })
}

/// File names the generator writes under the output directory.
pub const KG1_NAMES: &str = "kg1_names.tsv";
pub const KG1_TRIPLES: &str = "kg1_triples.tsv";
pub const KG2_NAMES: &str = "kg2_names.tsv";
pub const KG2_TRIPLES: &str = "kg2_triples.tsv";
pub const WORD_VECTORS: &str = "word_vectors.txt";
pub const GOLD_PAIRS: &str = "gold_pairs.tsv";
pub const DANGLING1: &str = "dangling1.txt";
pub const DANGLING2: &str = "dangling2.txt";
pub const TRAIN_PAIRS: &str = "train_pairs.tsv";

pub fn write_files(data: &SynthData, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SotError::io(dir, e))?;
    data.kg1.write_names(&dir.join(KG1_NAMES))?;
    data.kg1.write_triples(&dir.join(KG1_TRIPLES))?;
    data.kg2.write_names(&dir.join(KG2_NAMES))?;
    data.kg2.write_triples(&dir.join(KG2_TRIPLES))?;
    data.word_vectors.write(&dir.join(WORD_VECTORS))?;

    let mut pairs = String::new();
    for &(i, j) in &data.gold.pairs {
        pairs.push_str(&format!(
            "{}\t{}\n",
            data.kg1.entities[i].external_key, data.kg2.entities[j].external_key
        ));
    }
    crate::kg::write_file(&dir.join(GOLD_PAIRS), pairs.as_bytes())?;

    let dangling_file = |kg: &KnowledgeGraph, ids: &[usize]| -> String {
        ids.iter()
            .map(|&i| format!("{}\n", kg.entities[i].external_key))
            .collect()
    };
    crate::kg::write_file(
        &dir.join(DANGLING1),
        dangling_file(&data.kg1, &data.gold.dangling1).as_bytes(),
    )?;
    crate::kg::write_file(
        &dir.join(DANGLING2),
        dangling_file(&data.kg2, &data.gold.dangling2).as_bytes(),
    )?;

    if !data.train_pairs.is_empty() {
        let mut train = String::new();
        for &(i, j) in &data.train_pairs {
            train.push_str(&format!(
                "{}\t{}\n",
                data.kg1.entities[i].external_key, data.kg2.entities[j].external_key
            ));
        }
        crate::kg::write_file(&dir.join(TRAIN_PAIRS), train.as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{embed_names, extract_pseudo_pairs, similarity_matrix};

    #[test]
    fn zero_noise_makes_counterpart_embeddings_identical() {
        let params = SynthParams {
            matchable: 10,
            dangling1: 2,
            dangling2: 2,
            noise_sigma: 0.0,
            clone_noise: 0.0,
            seed: 3,
            ..Default::default()
        };
        let data = generate(&params).unwrap();
        let e1 = embed_names(&data.kg1, &data.word_vectors).unwrap();
        let e2 = embed_names(&data.kg2, &data.word_vectors).unwrap();
        for g in 0..10 {
            for c in 0..params.dim {
                assert_eq!(e1.matrix[[g, c]], e2.matrix[[g, c]]);
            }
        }
        // and pseudo pairs at a high threshold recover the unambiguous ones
        let s = similarity_matrix(&e1, &e2).unwrap();
        let p = extract_pseudo_pairs(&s, 0.99).unwrap();
        for &(i, j) in &p.pairs {
            assert_eq!(i, j);
        }
    }

    #[test]
    fn fixed_seed_reproduces_files_bitwise() {
        let params = SynthParams {
            matchable: 12,
            dangling1: 3,
            dangling2: 3,
            seed: 9,
            train_fraction: 0.3,
            ..Default::default()
        };
        let da = generate(&params).unwrap();
        let db = generate(&params).unwrap();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        write_files(&da, dir_a.path()).unwrap();
        write_files(&db, dir_b.path()).unwrap();
        for name in [
            KG1_NAMES,
            KG1_TRIPLES,
            KG2_NAMES,
            KG2_TRIPLES,
            WORD_VECTORS,
            GOLD_PAIRS,
            DANGLING1,
            DANGLING2,
            TRAIN_PAIRS,
        ] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "file {name} differs between runs");
        }
    }

    #[test]
    fn generated_files_load_back() {
        let params = SynthParams {
            matchable: 8,
            dangling1: 2,
            dangling2: 1,
            seed: 5,
            ..Default::default()
        };
        let data = generate(&params).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_files(&data, dir.path()).unwrap();
        let kg1 = crate::kg::load_kg(&dir.path().join(KG1_TRIPLES), &dir.path().join(KG1_NAMES))
            .unwrap();
        let kg2 = crate::kg::load_kg(&dir.path().join(KG2_TRIPLES), &dir.path().join(KG2_NAMES))
            .unwrap();
        assert_eq!(kg1, data.kg1);
        assert_eq!(kg2, data.kg2);
        let gold = crate::kg::load_gold(
            &dir.path().join(GOLD_PAIRS),
            &kg1,
            &kg2,
            Some(&dir.path().join(DANGLING1)),
            Some(&dir.path().join(DANGLING2)),
        )
        .unwrap();
        assert_eq!(gold, data.gold);
    }
}
