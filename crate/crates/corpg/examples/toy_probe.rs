//! Scratch probe for the toy ablation behavior (not part of the test suite).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use corpg::coherence::CoherenceGraph;
use corpg::decoding::{greedy_decode, split_at_boundaries};
use corpg::model::{source_encoding_values, GraphModule, ModelConfig};
use corpg::text::{Document, ParallelDoc, TokenId};
use corpg::train::{teacher_forced_accuracy, train, DiversityConfig, TrainConfig};

const SEP: TokenId = 5;
const VOCAB: usize = 160;

fn chain_graph(n: usize) -> CoherenceGraph {
    let mut g = CoherenceGraph::empty(n);
    for i in 0..n - 1 {
        g.set_edge(i, i + 1).unwrap();
    }
    g
}

fn toy_corpus() -> Vec<ParallelDoc> {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut docs = Vec::new();
    for d in 0..64 {
        let sentences: Vec<Vec<TokenId>> = (0..5)
            .map(|_| {
                let len = rng.gen_range(4..=6);
                (0..len).map(|_| rng.gen_range(6..VOCAB as TokenId)).collect()
            })
            .collect();
        let doc = Document { id: format!("toy{d:02}"), sentences };
        let graph = chain_graph(doc.len());
        docs.push(ParallelDoc { source: doc.clone(), target: doc, graph });
    }
    docs
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CORPG_LOG", "info")).init();
    let corpus = toy_corpus();
    let cfg = ModelConfig {
        vocab_size: VOCAB,
        d_model: 64,
        heads: 4,
        l_enc: 2,
        l_dec: 2,
        d_ff: 256,
        dropout: 0.0,
        n_max: 16,
        max_sentences: 8,
        graph_module: GraphModule::None,
        sentence_position: true,
        copy: true,
    };
    let tcfg = TrainConfig {
        base_lr: 0.05,
        warmup: 200,
        batch_size: 8,
        max_steps: 2000,
        clip_norm: 1.0,
        seed: 7,
        checkpoint_every: 0,
        log_every: 50,
        early_stop_acc: Some(0.998),
        ..TrainConfig::default()
    };
    let out = train(&corpus, &cfg, &tcfg, &DiversityConfig::disabled(), SEP, None).unwrap();
    let acc = teacher_forced_accuracy(&corpus, &out.params, &cfg, SEP).unwrap();
    println!("sentpos model: steps {}, eval acc {acc:.4}", out.steps_run);

    let mut rng = ChaCha8Rng::seed_from_u64(777);
    let mut copies = 0;
    let mut restores = 0;
    let mut other = 0;
    for pd in corpus.iter() {
        let n = pd.source.len();
        let mut perm: Vec<usize> = (0..n).collect();
        while perm.iter().enumerate().all(|(i, &p)| i == p) {
            perm.shuffle(&mut rng);
        }
        let perm_doc = Document {
            id: pd.source.id.clone(),
            sentences: perm.iter().map(|&i| pd.source.sentences[i].clone()).collect(),
        };
        let perm_graph = pd.graph.permuted(&perm);
        let enc = source_encoding_values(&perm_doc, &perm_graph, &out.params, &cfg).unwrap();
        let dec = greedy_decode(&out.params, &cfg, &enc, 64).unwrap();
        let sents = split_at_boundaries(&dec.ids, SEP);
        if sents == perm_doc.sentences {
            copies += 1;
        } else if sents == pd.target.sentences {
            restores += 1;
        } else {
            other += 1;
        }
    }
    println!("permuted-input: copies {copies}, restores {restores}, other {other}");
}
