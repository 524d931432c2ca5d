use std::collections::HashSet;

use relgrade_core::corpus::{build_level_index, generate_folds, load_essays, write_essays, EssaySchema, Level};
use relgrade_core::embedding::{load_store, EmbeddingStore, HashingEncoder};
use relgrade_core::grader::{fit_centroids, score_batch, CentroidModel, FitOptions};
use relgrade_core::metrics::{aggregate, FoldResult};
use relgrade_core::par::Execution;
use relgrade_core::synthetic;

#[test]
fn files_to_fold_results() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synthetic::separable("t1", 4, 40, 0.05, 16, 11).unwrap();
    let essays_path = dir.path().join("essays.tsv");
    write_essays(&essays_path, &corpus.essays).unwrap();
    let essays = load_essays(&essays_path, &EssaySchema::canonical(), Some(&corpus.prompts)).unwrap();
    assert_eq!(essays, corpus.essays);

    let store_path = dir.path().join("emb.jsonl");
    corpus.store.save(&store_path).unwrap();
    let store = load_store(&store_path).unwrap();
    assert_eq!(store, corpus.store);

    let ids: Vec<String> = essays.iter().map(|e| e.id.clone()).collect();
    let folds = generate_folds(&ids, 4, 3).unwrap();
    let mut results = Vec::new();
    for fold in &folds {
        let keep: HashSet<&str> = fold.train.iter().map(String::as_str).collect();
        let train: Vec<_> = essays.iter().filter(|e| keep.contains(e.id.as_str())).collect();
        let index = build_level_index(train, &corpus.prompts["t1"]).unwrap();
        let model = fit_centroids(&store, &index, FitOptions::default(), None).unwrap();

        let model_path = dir.path().join(format!("model{}.json", fold.fold_id));
        model.save(&model_path).unwrap();
        let model = CentroidModel::load(&model_path).unwrap();

        let test: Vec<_> = essays.iter().filter(|e| fold.test.contains(&e.id)).collect();
        let items: Vec<_> = test.iter().map(|e| (e.id.as_str(), store.get(&e.id).unwrap())).collect();
        let pred: Vec<Level> = score_batch(&model, &items, Execution::Parallel)
            .unwrap()
            .iter()
            .map(|s| s.level)
            .collect();
        let gold: Vec<Level> = test.iter().map(|e| e.relevance.unwrap()).collect();
        results.push(FoldResult::evaluate(fold.fold_id, &gold, &pred, 0, 3).unwrap());
    }
    let agg = aggregate(&results).unwrap();
    assert_eq!(agg.mean_qwk, 1.0);
    assert_eq!(agg.confusion.total(), 160);
}

#[test]
fn hashing_encoder_store_is_reproducible() {
    let corpus = synthetic::separable("t", 2, 3, 0.1, 8, 1).unwrap();
    let enc = HashingEncoder::new(32, 5).unwrap();
    let build = || {
        let mut s = EmbeddingStore::new(32, enc.tag()).unwrap();
        for e in &corpus.essays {
            s.insert(e.id.clone(), enc.encode(&e.text)).unwrap();
        }
        s.to_bytes().unwrap()
    };
    assert_eq!(build(), build());
}
