#include <benchmark/benchmark.h>

#include <memory>
#include <string>
#include <vector>

#include "finctx/evaluation.hpp"
#include "finctx/model.hpp"
#include "finctx/retrieval.hpp"
#include "finctx/rng.hpp"
#include "finctx/tape.hpp"
#include "finctx/train.hpp"

using namespace finctx;

namespace {

void matmul_square(benchmark::State& state) {
    const int n = int(state.range(0));
    Rng rng(1);
    const Tensor a = Tensor::randn({n, n}, rng, 1.0);
    const Tensor b = Tensor::randn({n, n}, rng, 1.0);
    for (auto _ : state) {
        Tape t;
        benchmark::DoNotOptimize(t.value(t.matmul(t.constant(a), t.constant(b))).at(0, 0));
    }
    state.SetItemsProcessed(state.iterations() * int64_t(n) * n * n);
}
BENCHMARK(matmul_square)->Arg(32)->Arg(64)->Arg(128);

void softmax_backward(benchmark::State& state) {
    const int n = int(state.range(0));
    Rng rng(2);
    Parameter p{"x", Tensor::randn({n, n}, rng, 1.0)};
    for (auto _ : state) {
        Tape t;
        Var loss = t.mean_all(t.softmax_rows(t.leaf(p)));
        t.backward(loss);
        benchmark::DoNotOptimize(p.grad.at(0, 0));
        p.zero_grad();
    }
    state.SetItemsProcessed(state.iterations() * int64_t(n) * n);
}
BENCHMARK(softmax_backward)->Arg(64)->Arg(256);

// desk-scale model used by the forward/training benchmarks
Model& bench_model() {
    static Model model = [] {
        std::vector<std::string> vocab = {"<unk>", "<bos>", "<doc>"};
        for (int i = 0; i < 253; ++i) vocab.push_back("w" + std::to_string(i));
        ModelConfig cfg;
        cfg.kind = ModelKind::Psc;
        cfg.n_contexts = 10;
        cfg.article_token_cap = 48;
        cfg.summarizer.d_model = 24;
        cfg.summarizer.layers = 1;
        cfg.summarizer.heads = 4;
        cfg.summarizer.d_ff = 48;
        cfg.summarizer.vocab = 256;
        cfg.summarizer.max_article_tokens = 48;
        cfg.summarizer.summary_tokens = 2;
        cfg.summarizer.max_positions = 50;
        cfg.alignment.d_in = 24;
        cfg.alignment.d_out = 32;
        cfg.alignment.heads = 4;
        cfg.decoder.d_model = 32;
        cfg.decoder.layers = 1;
        cfg.decoder.heads = 4;
        cfg.decoder.d_ff = 64;
        cfg.decoder.vocab = 256;
        cfg.decoder.max_tokens = 96;
        cfg.hier_layers = 1;
        Rng rng(3);
        return Model(cfg, Tokenizer::from_vocab(vocab), rng);
    }();
    return model;
}

ModelInput input_with_depth(int n_contexts) {
    Rng rng(4);
    ModelInput in;
    for (int i = 0; i < 40; ++i) in.main_tokens.push_back(3 + int(rng.below(253)));
    for (int c = 0; c < n_contexts; ++c) {
        std::vector<int> toks;
        for (int i = 0; i < 40; ++i) toks.push_back(3 + int(rng.below(253)));
        in.contexts.push_back({toks, 10 * (n_contexts - c)});
    }
    return in;
}

void forward_by_context_depth(benchmark::State& state) {
    Model& model = bench_model();
    const ModelInput in = input_with_depth(int(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(model.predict_prob(in));
}
BENCHMARK(forward_by_context_depth)->Arg(0)->Arg(1)->Arg(5)->Arg(10);

void lm_training_step(benchmark::State& state) {
    Model& model = bench_model();
    const ModelInput in = input_with_depth(5);
    std::vector<Parameter*> params = model.parameters();
    for (auto _ : state) {
        Tape t;
        t.backward(model.lm_loss(t, in));
        benchmark::DoNotOptimize(params.front()->grad.at(0, 0));
        for (Parameter* p : params) p->zero_grad();
    }
}
BENCHMARK(lm_training_step);

struct RetrievalFixture {
    std::vector<Article> articles;
    std::shared_ptr<HashedTfIdfEmbedder> embedder;
    std::unique_ptr<ContextRetriever> retriever;
};

RetrievalFixture& retrieval_fixture() {
    static RetrievalFixture fx = [] {
        RetrievalFixture f;
        Rng rng(5);
        const std::vector<std::string> words = {"earnings", "merger", "lawsuit", "dividend",
                                                "upgrade", "contract", "recall",  "audit"};
        for (int i = 0; i <= 200; ++i) {
            Article a;
            a.id = "a" + std::to_string(i);
            a.company_id = "pool";
            a.industry = "tech";
            a.published_at = {add_days({2020, 1, 6}, (i * 9) / 5), 600};
            a.text = "the company reported ";
            for (int k = 0; k < 30; ++k) a.text += words[rng.below(words.size())] + " ";
            f.articles.push_back(a);
        }
        f.embedder = std::make_shared<HashedTfIdfEmbedder>(1024);
        std::vector<std::string> texts;
        for (const Article& a : f.articles) texts.push_back(a.text);
        f.embedder->fit(texts);
        f.retriever = std::make_unique<ContextRetriever>(f.articles, f.embedder);
        return f;
    }();
    return fx;
}

void retrieve_top5(benchmark::State& state) {
    RetrievalFixture& fx = retrieval_fixture();
    const RetrieverKind kind = RetrieverKind(state.range(0));
    for (auto _ : state)
        benchmark::DoNotOptimize(fx.retriever->retrieve(fx.articles.back(), 5, kind));
}
BENCHMARK(retrieve_top5)
    ->Arg(int(RetrieverKind::MostRecent))
    ->Arg(int(RetrieverKind::FinSim))
    ->Arg(int(RetrieverKind::TimeFinSim));

void embed_document(benchmark::State& state) {
    RetrievalFixture& fx = retrieval_fixture();
    for (auto _ : state) benchmark::DoNotOptimize(fx.embedder->embed(fx.articles[0].text));
}
BENCHMARK(embed_document);

void auc_large(benchmark::State& state) {
    const int n = int(state.range(0));
    Rng rng(6);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int i = 0; i < n; ++i) {
        scores.push_back(rng.normal());
        labels.push_back(rng.bernoulli(0.5) ? 1 : -1);
    }
    labels[0] = 1;
    labels[1] = -1;
    for (auto _ : state) benchmark::DoNotOptimize(auc(scores, labels));
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(auc_large)->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
