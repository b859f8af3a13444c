//! Stage functions behind the CLI subcommands.
//!
//! Every stage reads its inputs from the artifact directory (or the
//! configured input paths) and writes its own artifact files, so the full
//! pipeline is literally the stages run in order and produces byte-identical
//! outputs either way.

use std::path::{Path, PathBuf};

use crate::config::{CostVariant, Mode, PipelineConfig};
use crate::cost::{
    build_cost, grid_search_virtual_costs, CharBigramPenalty, CostSidecar, GridSearchResult,
    SparseCostMatrix, VirtualCosts, COST_FLOOR,
};
use crate::error::{Result, SotError};
use crate::eval::{
    ded_scores, hits_at_k, matched_accuracy, mrr, rank_by_distance, DedPrediction, MetricsReport,
    Setting,
};
use crate::kg::{load_gold, load_kg, read_to_string, write_file, KnowledgeGraph};
use crate::metric::{load_checkpoint, save_checkpoint, train, EnhancedEmbeddings};
use crate::solver::{
    branch_and_cut, build_instance, greedy_match, AssignmentSolution, LpRoute, SolveOptions,
};
use crate::text::{
    embed_names, extract_pseudo_pairs, read_embeddings, similarity_matrix, write_embeddings,
    write_oov_report, NameEmbeddings, PseudoPairSet, WordEmbeddingTable,
};

pub const EMB1: &str = "kg1.emb.tsv";
pub const EMB2: &str = "kg2.emb.tsv";
pub const OOV1: &str = "kg1.oov.tsv";
pub const OOV2: &str = "kg2.oov.tsv";
pub const PSEUDO_PAIRS: &str = "pseudo_pairs.tsv";
pub const CHECKPOINT: &str = "checkpoint.txt";
pub const ENH1: &str = "kg1.enh.tsv";
pub const ENH2: &str = "kg2.enh.tsv";
pub const VIRTUAL_COSTS: &str = "virtual_costs.json";
pub const SOLUTION: &str = "solution.json";
pub const METRICS: &str = "metrics.json";
pub const RESOLVED_CONFIG: &str = "resolved_config.txt";

pub fn cost_tsv_name(k: usize) -> String {
    format!("cost_k{k}.tsv")
}

pub fn cost_meta_name(k: usize) -> String {
    format!("cost_k{k}.meta.json")
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SotError::io(dir, e))
}

fn load_kgs(config: &PipelineConfig) -> Result<(KnowledgeGraph, KnowledgeGraph)> {
    let kg1 = load_kg(&config.kg1_triples, &config.kg1_names)?;
    let kg2 = load_kg(&config.kg2_triples, &config.kg2_names)?;
    Ok((kg1, kg2))
}

fn load_name_embeddings(
    kg1: &KnowledgeGraph,
    kg2: &KnowledgeGraph,
    out: &Path,
) -> Result<(NameEmbeddings, NameEmbeddings)> {
    let read_oov = |path: &Path, kg: &KnowledgeGraph| -> Result<Vec<usize>> {
        let text = read_to_string(path)?;
        let mut ids = Vec::new();
        for line in text.lines() {
            if let Some((key, _)) = line.split_once('\t') {
                if let Some(id) = kg.entity_id(key) {
                    ids.push(id);
                }
            }
        }
        Ok(ids)
    };
    let e1 = NameEmbeddings {
        matrix: read_embeddings(kg1, &out.join(EMB1))?,
        oov: read_oov(&out.join(OOV1), kg1)?,
    };
    let e2 = NameEmbeddings {
        matrix: read_embeddings(kg2, &out.join(EMB2))?,
        oov: read_oov(&out.join(OOV2), kg2)?,
    };
    Ok((e1, e2))
}

fn load_pairs_file(
    path: &Path,
    kg1: &KnowledgeGraph,
    kg2: &KnowledgeGraph,
) -> Result<Vec<(usize, usize)>> {
    let text = read_to_string(path)?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 2 {
            return Err(SotError::parse(
                path,
                lineno + 1,
                "expected at least 2 tab-separated columns",
            ));
        }
        let i = kg1.entity_id(cols[0]).ok_or_else(|| SotError::Referential {
            key: cols[0].to_string(),
            context: format!("in {}", path.display()),
        })?;
        let j = kg2.entity_id(cols[1]).ok_or_else(|| SotError::Referential {
            key: cols[1].to_string(),
            context: format!("in {}", path.display()),
        })?;
        pairs.push((i, j));
    }
    Ok(pairs)
}

/// Embed entity names for both KGs; writes the embedding and OOV artifacts.
pub fn stage_embed(config: &PipelineConfig, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let (kg1, kg2) = load_kgs(config)?;
    let table = WordEmbeddingTable::load(&config.word_vectors)?;
    let e1 = embed_names(&kg1, &table)?;
    let e2 = embed_names(&kg2, &table)?;
    write_embeddings(&kg1, &e1.matrix, &out.join(EMB1))?;
    write_embeddings(&kg2, &e2.matrix, &out.join(EMB2))?;
    write_oov_report(&kg1, &e1, &out.join(OOV1))?;
    write_oov_report(&kg2, &e2, &out.join(OOV2))?;
    Ok(())
}

/// Extract pseudo pairs from the stored name embeddings.
pub fn stage_pairs(config: &PipelineConfig, out: &Path) -> Result<PseudoPairSet> {
    let (kg1, kg2) = load_kgs(config)?;
    let (e1, e2) = load_name_embeddings(&kg1, &kg2, out)?;
    let s = similarity_matrix(&e1, &e2)?;
    let pseudo = extract_pseudo_pairs(&s, config.epsilon)?;
    let mut buf = String::new();
    for &(i, j) in &pseudo.pairs {
        buf.push_str(&format!(
            "{}\t{}\t{}\n",
            kg1.entities[i].external_key,
            kg2.entities[j].external_key,
            s.values[[i, j]]
        ));
    }
    write_file(&out.join(PSEUDO_PAIRS), buf.as_bytes())?;
    Ok(pseudo)
}

fn load_pseudo_pairs(
    config: &PipelineConfig,
    kg1: &KnowledgeGraph,
    kg2: &KnowledgeGraph,
    out: &Path,
) -> Result<PseudoPairSet> {
    let pairs = load_pairs_file(&out.join(PSEUDO_PAIRS), kg1, kg2)?;
    Ok(PseudoPairSet {
        pairs,
        threshold: config.epsilon,
    })
}

/// Train the encoder on the pseudo pairs (plus the supervised pairs file in
/// supervised mode); writes the checkpoint and enhanced embeddings.
pub fn stage_train(config: &PipelineConfig, out: &Path) -> Result<()> {
    let (kg1, kg2) = load_kgs(config)?;
    let (e1, e2) = load_name_embeddings(&kg1, &kg2, out)?;
    let pseudo = load_pseudo_pairs(config, &kg1, &kg2, out)?;
    let supervised: Option<Vec<(usize, usize)>> = match (config.mode, &config.train_pairs) {
        (Mode::Supervised, Some(path)) => Some(load_pairs_file(path, &kg1, &kg2)?),
        (Mode::Supervised, None) => {
            return Err(SotError::Config(
                "supervised mode needs a train_pairs path".into(),
            ))
        }
        (Mode::Unsupervised, _) => None,
    };
    let result = train(
        &kg1,
        &kg2,
        &e1,
        &e2,
        &pseudo,
        &config.training_config(),
        supervised.as_deref(),
    )?;
    save_checkpoint(
        &out.join(CHECKPOINT),
        &result.params,
        config.seed,
        result.steps_run,
    )?;
    write_embeddings(&kg1, &result.embeddings1.matrix, &out.join(ENH1))?;
    write_embeddings(&kg2, &result.embeddings2.matrix, &out.join(ENH2))?;
    Ok(())
}

fn load_enhanced(
    kg1: &KnowledgeGraph,
    kg2: &KnowledgeGraph,
    out: &Path,
) -> Result<(EnhancedEmbeddings, EnhancedEmbeddings)> {
    Ok((
        EnhancedEmbeddings {
            matrix: read_embeddings(kg1, &out.join(ENH1))?,
        },
        EnhancedEmbeddings {
            matrix: read_embeddings(kg2, &out.join(ENH2))?,
        },
    ))
}

/// Build the sparse cost matrix for the given K and write it with its
/// sidecar; `alpha`/`beta` stay null until the grid search fills them in.
pub fn stage_cost(config: &PipelineConfig, out: &Path, k: usize) -> Result<SparseCostMatrix> {
    let (kg1, kg2) = load_kgs(config)?;
    let (e1, e2) = load_enhanced(&kg1, &kg2, out)?;
    let penalty = match config.variant {
        CostVariant::Word => None,
        CostVariant::WordChar => {
            let names1: Vec<String> = kg1.entities.iter().map(|e| e.name.clone()).collect();
            let names2: Vec<String> = kg2.entities.iter().map(|e| e.name.clone()).collect();
            Some(CharBigramPenalty::new(&names1, &names2, config.char_weight))
        }
    };
    let cost = build_cost(&e1.matrix, &e2.matrix, k, penalty.as_ref())?;
    cost.write_tsv(&out.join(cost_tsv_name(k)))?;
    let sidecar = CostSidecar {
        m: cost.m,
        n: cost.n,
        k,
        alpha: None,
        beta: None,
        delta: COST_FLOOR,
    };
    let text = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| SotError::Config(format!("serializing cost sidecar: {e}")))?;
    write_file(&out.join(cost_meta_name(k)), text.as_bytes())?;
    Ok(cost)
}

fn load_cost(out: &Path, k: usize) -> Result<SparseCostMatrix> {
    let meta_text = read_to_string(&out.join(cost_meta_name(k)))?;
    let sidecar: CostSidecar = serde_json::from_str(&meta_text)
        .map_err(|e| SotError::Config(format!("bad cost sidecar: {e}")))?;
    SparseCostMatrix::read_tsv(&out.join(cost_tsv_name(k)), sidecar.m, sidecar.n)
}

/// Pick the virtual costs by the paired quantile grid search on the small-K
/// cost matrix, scored on the pseudo pairs.
pub fn stage_gridsearch(config: &PipelineConfig, out: &Path) -> Result<GridSearchResult> {
    let (kg1, kg2) = load_kgs(config)?;
    let pseudo = load_pseudo_pairs(config, &kg1, &kg2, out)?;
    let cost_small = load_cost(out, config.grid_k)?;
    // Every grid cell is a plain transport root; the matching route solves
    // it exactly and quickly.
    let opts = SolveOptions::with_route(LpRoute::Matching).with_node_budget(config.node_budget);
    let result = grid_search_virtual_costs(&cost_small, &pseudo, config.grid_size, &opts)?;
    let text = serde_json::to_string_pretty(&result)
        .map_err(|e| SotError::Config(format!("serializing grid search: {e}")))?;
    write_file(&out.join(VIRTUAL_COSTS), text.as_bytes())?;
    Ok(result)
}

fn load_virtual_costs(out: &Path) -> Result<VirtualCosts> {
    let text = read_to_string(&out.join(VIRTUAL_COSTS))?;
    let result: GridSearchResult = serde_json::from_str(&text)
        .map_err(|e| SotError::Config(format!("bad virtual costs artifact: {e}")))?;
    Ok(result.chosen)
}

/// Solve the transport program on the full-K cost matrix with the selected
/// virtual costs.
pub fn stage_solve(config: &PipelineConfig, out: &Path) -> Result<AssignmentSolution> {
    let cost = load_cost(out, config.top_k)?;
    let vc = load_virtual_costs(out)?;
    let instance = build_instance(&cost, vc);
    let opts = SolveOptions::default().with_node_budget(config.node_budget);
    let solution = branch_and_cut(&instance, &opts)?;
    solution.write_json(&out.join(SOLUTION))?;
    Ok(solution)
}

/// Score the solution and the ranking metrics against the gold standard.
pub fn stage_eval(config: &PipelineConfig, out: &Path) -> Result<MetricsReport> {
    let (kg1, kg2) = load_kgs(config)?;
    let gold_path = config.gold_pairs.as_ref().ok_or_else(|| {
        SotError::Config("evaluation needs a gold_pairs path in the config".into())
    })?;
    let gold = load_gold(
        gold_path,
        &kg1,
        &kg2,
        config.dangling1.as_deref(),
        config.dangling2.as_deref(),
    )?;
    let (e1, e2) = load_enhanced(&kg1, &kg2, out)?;
    let solution = AssignmentSolution::read_json(&out.join(SOLUTION))?;
    let cost = load_cost(out, config.top_k)?;

    let sources: Vec<usize> = gold.pairs.iter().map(|&(i, _)| i).collect();
    let rankings = rank_by_distance(&sources, &e1.matrix, &e2.matrix);
    let greedy = greedy_match(&cost);

    let report = MetricsReport {
        hits1_relaxed: hits_at_k(&rankings, &gold, 1, Setting::Relaxed)?,
        hits1_practical: hits_at_k(&rankings, &gold, 1, Setting::Practical)?,
        hits10: hits_at_k(&rankings, &gold, 10, Setting::Practical)?,
        mrr: mrr(&rankings, &gold, Setting::Practical)?,
        solver_hits1_practical: matched_accuracy(&solution.matched, &gold),
        greedy_hits1_practical: matched_accuracy(&greedy.matched, &gold),
        ded: ded_scores(&DedPrediction::from_solution(&solution), &gold),
    };
    report.write_json(&out.join(METRICS))?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub metrics: MetricsReport,
    pub solution: AssignmentSolution,
}

/// Run every stage in order, writing all artifacts into `out`.
pub fn run_pipeline(config: &PipelineConfig, out: &Path) -> Result<PipelineOutcome> {
    ensure_dir(out)?;
    write_file(&out.join(RESOLVED_CONFIG), config.render().as_bytes())?;
    stage_embed(config, out).map_err(|e| e.in_stage("embed"))?;
    stage_pairs(config, out).map_err(|e| e.in_stage("pairs"))?;
    stage_train(config, out).map_err(|e| e.in_stage("train"))?;
    stage_cost(config, out, config.grid_k).map_err(|e| e.in_stage("cost"))?;
    stage_gridsearch(config, out).map_err(|e| e.in_stage("gridsearch"))?;
    stage_cost(config, out, config.top_k).map_err(|e| e.in_stage("cost"))?;
    let solution = stage_solve(config, out).map_err(|e| e.in_stage("solve"))?;
    let metrics = stage_eval(config, out).map_err(|e| e.in_stage("eval"))?;
    Ok(PipelineOutcome { metrics, solution })
}

/// Reload a checkpoint written by the train stage; used by the CLI to report
/// on an artifact directory.
pub fn checkpoint_summary(out: &Path) -> Result<String> {
    let (params, seed, steps) = load_checkpoint(&out.join(CHECKPOINT))?;
    let (d, h, e) = params.dims();
    Ok(format!(
        "encoder {d}->{h}->{e}, seed {seed}, trained {steps} step(s)"
    ))
}

/// Resolve a path relative to a base directory unless it is absolute.
pub fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{self, SynthParams};

    fn synth_config(dir: &Path) -> PipelineConfig {
        let params = SynthParams {
            matchable: 20,
            dangling1: 4,
            dangling2: 4,
            dim: 8,
            seed: 21,
            ..Default::default()
        };
        let data = synth::generate(&params).unwrap();
        synth::write_files(&data, dir).unwrap();
        PipelineConfig::load(
            None,
            &[
                format!("kg1_triples={}", dir.join(synth::KG1_TRIPLES).display()),
                format!("kg1_names={}", dir.join(synth::KG1_NAMES).display()),
                format!("kg2_triples={}", dir.join(synth::KG2_TRIPLES).display()),
                format!("kg2_names={}", dir.join(synth::KG2_NAMES).display()),
                format!("word_vectors={}", dir.join(synth::WORD_VECTORS).display()),
                format!("gold_pairs={}", dir.join(synth::GOLD_PAIRS).display()),
                format!("dangling1={}", dir.join(synth::DANGLING1).display()),
                format!("dangling2={}", dir.join(synth::DANGLING2).display()),
                "epsilon=0.85".into(),
                "total_steps=20".into(),
                "top_k=10".into(),
                "grid_k=5".into(),
                "hidden_dim=8".into(),
                "output_dim=8".into(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn pipeline_runs_and_is_deterministic() {
        let input = tempfile::tempdir().unwrap();
        let config = synth_config(input.path());
        let out_a = tempfile::tempdir().unwrap();
        let out_b = tempfile::tempdir().unwrap();
        let a = run_pipeline(&config, out_a.path()).unwrap();
        let b = run_pipeline(&config, out_b.path()).unwrap();
        assert_eq!(a.metrics, b.metrics);
        let bytes = |dir: &Path, name: &str| std::fs::read(dir.join(name)).unwrap();
        for name in [METRICS, SOLUTION, PSEUDO_PAIRS, CHECKPOINT, ENH1, ENH2] {
            assert_eq!(
                bytes(out_a.path(), name),
                bytes(out_b.path(), name),
                "artifact {name} differs between identical runs"
            );
        }
    }

    #[test]
    fn stages_compose_to_the_pipeline_byte_for_byte() {
        let input = tempfile::tempdir().unwrap();
        let config = synth_config(input.path());
        let full = tempfile::tempdir().unwrap();
        run_pipeline(&config, full.path()).unwrap();

        let manual = tempfile::tempdir().unwrap();
        let out = manual.path();
        stage_embed(&config, out).unwrap();
        stage_pairs(&config, out).unwrap();
        stage_train(&config, out).unwrap();
        stage_cost(&config, out, config.grid_k).unwrap();
        stage_gridsearch(&config, out).unwrap();
        stage_cost(&config, out, config.top_k).unwrap();
        stage_solve(&config, out).unwrap();
        stage_eval(&config, out).unwrap();

        for name in [
            EMB1,
            EMB2,
            OOV1,
            OOV2,
            PSEUDO_PAIRS,
            CHECKPOINT,
            ENH1,
            ENH2,
            VIRTUAL_COSTS,
            SOLUTION,
            METRICS,
        ] {
            let a = std::fs::read(full.path().join(name)).unwrap();
            let b = std::fs::read(out.join(name)).unwrap();
            assert_eq!(a, b, "artifact {name} differs from the staged run");
        }
        let k = config.top_k;
        for name in [cost_tsv_name(k), cost_meta_name(k)] {
            let a = std::fs::read(full.path().join(&name)).unwrap();
            let b = std::fs::read(out.join(&name)).unwrap();
            assert_eq!(a, b, "artifact {name} differs from the staged run");
        }
    }

    #[test]
    fn missing_word_vectors_halt_the_embed_stage() {
        let input = tempfile::tempdir().unwrap();
        let mut config = synth_config(input.path());
        config.word_vectors = input.path().join("missing_vectors.txt");
        let out = tempfile::tempdir().unwrap();
        let err = run_pipeline(&config, out.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("embed"), "stage missing from {msg}");
        assert!(
            msg.contains("missing_vectors.txt"),
            "path missing from {msg}"
        );
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn supervised_mode_requires_train_pairs() {
        let input = tempfile::tempdir().unwrap();
        let mut config = synth_config(input.path());
        config.mode = Mode::Supervised;
        let out = tempfile::tempdir().unwrap();
        stage_embed(&config, out.path()).unwrap();
        stage_pairs(&config, out.path()).unwrap();
        assert!(stage_train(&config, out.path()).is_err());
    }
}
