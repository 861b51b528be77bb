use std::hint::black_box;

use autofeedback::fixtures::{bench_fixture, classification_corpus, fixture_document, route_planning_handler};
use autofeedback::gateways::{GatewayError, LlmClient, MockApiServer, ScriptedLlm};
use autofeedback::orchestrator::{run_benchmark, BenchOptions, BenchTask, PipelineConfig, PreparedDoc, TaskGateways};
use autofeedback::request_codec::parse_llm_output;
use autofeedback::retrieval::{build_chunk_index_with, TfIdfModel};
use autofeedback::static_scanner::{classify_batch, ScanConfig};
use autofeedback::{ApiDocument, Parallelism};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("rayon", Parallelism::Auto)];

fn classification(c: &mut Criterion) {
    let doc = fixture_document();
    let model = TfIdfModel::fit_document(&doc);
    let cfg = ScanConfig::default();
    let items: Vec<_> = classification_corpus(&doc, 30, 42)
        .into_iter()
        .map(|s| (parse_llm_output(&s.output), s.truth))
        .collect();
    let mut g = c.benchmark_group("classify_batch");
    for (name, par) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &par, |b, &par| {
            b.iter(|| black_box(classify_batch(&items, &doc, &model, &cfg, par)))
        });
    }
    g.finish();
}

fn chunking(c: &mut Criterion) {
    let doc = fixture_document();
    let model = TfIdfModel::fit_document(&doc);
    let mut g = c.benchmark_group("chunk_index");
    for (name, par) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &par, |b, &par| {
            b.iter(|| black_box(build_chunk_index_with(&doc, &model, 0.3, par).unwrap()))
        });
    }
    g.finish();
}

fn benchmark(c: &mut Criterion) {
    let fx = bench_fixture();
    let base: Vec<BenchTask> = fx
        .records
        .iter()
        .map(|r| BenchTask { id: r.id.clone(), instruction: r.instruction.clone(), truth: r.truth_sequence().unwrap(), doc: 0 })
        .collect();
    let tasks: Vec<BenchTask> = (0..10)
        .flat_map(|rep| base.iter().map(move |t| BenchTask { id: format!("{}#{rep}", t.id), ..t.clone() }))
        .collect();
    let docs = [PreparedDoc::tfidf(fixture_document(), 0.3).unwrap()];
    let factory = |task: &BenchTask, doc: &ApiDocument| -> Result<TaskGateways, GatewayError> {
        let id = task.id.split('#').next().unwrap_or_default();
        let llm: Box<dyn LlmClient> = Box::new(ScriptedLlm::new(fx.script[id].clone())?);
        let exec = MockApiServer::for_document(doc, fx.rules.clone()).route("route_planning", route_planning_handler);
        Ok(TaskGateways { llm, executor: Box::new(exec), judge: None })
    };
    let config = PipelineConfig::default();
    let mut g = c.benchmark_group("run_benchmark");
    g.sample_size(20);
    for (name, par) in MODES {
        let opts = BenchOptions { parallelism: par, ..Default::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(run_benchmark(&tasks, &docs, &factory, &config, &opts).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, classification, chunking, benchmark);
criterion_main!(benches);
