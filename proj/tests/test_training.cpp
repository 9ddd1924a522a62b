#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "doctest.h"
#include "finctx/error.hpp"
#include "finctx/evaluation.hpp"
#include "finctx/model.hpp"
#include "finctx/rng.hpp"
#include "finctx/train.hpp"
#include "gradcheck.hpp"

using namespace finctx;

namespace {

std::string tmp_path(const std::string& name) {
    return std::string("/tmp/finctx_train_") + name + "." + std::to_string(getpid());
}

Tokenizer tiny_tokenizer() {
    return Tokenizer::from_vocab(
        {"<unk>", "<bos>", "<doc>", "a", "b", "c", "d", "e", "f", "g", "h", "i"});
}

ModelConfig grad_config(ModelKind kind) {
    ModelConfig cfg;
    cfg.kind = kind;
    cfg.n_contexts = 4;
    cfg.article_token_cap = 6;
    cfg.summarizer.d_model = 8;
    cfg.summarizer.layers = 1;
    cfg.summarizer.heads = 2;
    cfg.summarizer.d_ff = 16;
    cfg.summarizer.vocab = 12;
    cfg.summarizer.max_article_tokens = 6;
    cfg.summarizer.summary_tokens = 1;
    cfg.summarizer.max_positions = 8;
    cfg.alignment.d_in = 8;
    cfg.alignment.d_out = 12;
    cfg.alignment.heads = 2;
    cfg.alignment.mlp_hidden = 10;
    cfg.decoder.d_model = 12;
    cfg.decoder.layers = 1;
    cfg.decoder.heads = 2;
    cfg.decoder.d_ff = 24;
    cfg.decoder.vocab = 12;
    cfg.decoder.max_tokens = 32;
    cfg.hier_layers = 1;
    return cfg;
}

ResolvedSample sample_of(const std::string& id, int label, std::vector<int> main,
                         std::vector<ContextTokens> ctx) {
    ResolvedSample s;
    s.sample_id = id;
    s.company_id = "C1";
    s.trading_date = {2020, 3, 2};
    s.horizon = 7;
    s.label = label;
    s.input.main_tokens = std::move(main);
    s.input.contexts = std::move(ctx);
    return s;
}

bool tensors_equal(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a.at(int(i)) != b.at(int(i))) return false;
    return true;
}

std::vector<Tensor> values_of(const std::vector<Parameter*>& ps) {
    std::vector<Tensor> out;
    for (const Parameter* p : ps) out.push_back(p->value);
    return out;
}

bool all_equal(const std::vector<Parameter*>& ps, const std::vector<Tensor>& snap) {
    for (size_t i = 0; i < ps.size(); ++i)
        if (!tensors_equal(ps[i]->value, snap[i])) return false;
    return true;
}

bool any_changed(const std::vector<Parameter*>& ps, const std::vector<Tensor>& snap) {
    return !all_equal(ps, snap);
}

// The labeled toy task used by the finetuning cases: token h marks up moves,
// token c marks down moves.
std::vector<ResolvedSample> toy_set(int n, int seed) {
    std::vector<ResolvedSample> out;
    Rng rng(static_cast<uint64_t>(seed));
    for (int i = 0; i < n; ++i) {
        const int label = (i % 2 == 0) ? 1 : -1;
        const int tok = label > 0 ? 10 : 5;
        std::vector<int> main = {tok, tok, 3 + int(rng.below(9)), tok, tok};
        std::vector<ContextTokens> ctx;
        ctx.push_back({{tok, 4, tok}, 30 + i});
        out.push_back(sample_of("s" + std::to_string(i), label, main, ctx));
    }
    return out;
}

}  // namespace

TEST_CASE("composite loss gradients match central differences") {
    Tokenizer tok = tiny_tokenizer();
    ModelConfig cfg = grad_config(ModelKind::Psc);
    cfg.alignment.kind = AlignKind::Cma;
    cfg.alignment.cma_identity = false;
    Rng rng(99);
    Model model(cfg, tok, rng);

    ModelInput in;
    in.main_tokens = {3, 4, 5, 6, 7};
    in.contexts.push_back({{8, 9, 10, 4}, 40});

    const auto build = [&](Tape& t) {
        Var lm = model.lm_loss(t, in);
        Var clf = t.bce_with_logits(model.class_logit(t, in), 1.0);
        return t.add(lm, t.scale(clf, 0.5));
    };
    const double worst = finctx::testing::check_gradients(model.parameters(), build);
    CHECK(worst < finctx::testing::kGradCheckTol);
}

TEST_CASE("hierarchical classification gradients match central differences") {
    Tokenizer tok = tiny_tokenizer();
    ModelConfig cfg = grad_config(ModelKind::Hierarchical);
    Rng rng(7);
    Model model(cfg, tok, rng);

    ModelInput in;
    in.main_tokens = {3, 4, 5, 6};
    in.contexts.push_back({{7, 8, 9}, 25});

    const auto build = [&](Tape& t) {
        return t.bce_with_logits(model.class_logit(t, in), 0.0);
    };
    const double worst = finctx::testing::check_gradients(model.parameters(), build);
    CHECK(worst < finctx::testing::kGradCheckTol);
}

TEST_CASE("summary pretraining leaves the decoder and classifier untouched") {
    Tokenizer tok = tiny_tokenizer();
    Rng rng(3);
    Model model(grad_config(ModelKind::Psc), tok, rng);

    std::vector<ResolvedSample> train = toy_set(6, 11);
    const std::vector<Tensor> dec_before = values_of(model.decoder().parameters());
    const std::vector<Tensor> clf_before = values_of(model.classifier_parameters());
    const std::vector<Tensor> summ_before = values_of(model.summarizer()->parameters());
    const std::vector<Tensor> align_before = values_of(model.alignment()->parameters());

    CalmConfig cfg;
    cfg.epochs = 2;
    cfg.accum = 4;
    cfg.opt.lr = 1e-2;
    cfg.seed = 5;
    const CalmResult res = pretrain_calm(model, train, cfg);

    REQUIRE(res.epoch_loss.size() == 2);
    for (double l : res.epoch_loss) CHECK(std::isfinite(l));
    CHECK(res.steps == 4);  // 6 samples, accum 4: one full and one partial step per epoch

    CHECK(all_equal(model.decoder().parameters(), dec_before));
    CHECK(all_equal(model.classifier_parameters(), clf_before));
    CHECK(any_changed(model.summarizer()->parameters(), summ_before));
    CHECK(any_changed(model.alignment()->parameters(), align_before));

    Rng rng2(3);
    Model single(grad_config(ModelKind::Single), tok, rng2);
    CHECK_THROWS_AS(pretrain_calm(single, train, cfg), UsageError);
    CHECK_THROWS_AS(pretrain_calm(model, {}, cfg), DataError);
    CalmConfig bad = cfg;
    bad.accum = 0;
    CHECK_THROWS_AS(pretrain_calm(model, train, bad), ConfigError);
}

TEST_CASE("pretraining lowers the prefix-conditioned loss on a repetitive corpus") {
    Tokenizer tok = tiny_tokenizer();
    Rng rng(21);
    Model model(grad_config(ModelKind::Psc), tok, rng);

    // every sample predicts the same continuation, so the summary prefix can
    // become genuinely informative
    std::vector<ResolvedSample> train;
    for (int i = 0; i < 8; ++i)
        train.push_back(sample_of("r" + std::to_string(i), 1, {3, 4, 5, 6, 3, 4},
                                  {{{3, 4, 5, 6}, 15 + i}}));

    const double before = mean_lm_loss(model, train, false);
    CalmConfig cfg;
    cfg.epochs = 6;
    cfg.accum = 4;
    cfg.opt.lr = 5e-3;
    cfg.seed = 2;
    pretrain_calm(model, train, cfg);
    const double after = mean_lm_loss(model, train, false);
    CHECK(after < before);

    // stripping contexts changes the loss, and the two paths agree on
    // context-free samples
    const double stripped = mean_lm_loss(model, train, true);
    CHECK(stripped != after);
    std::vector<ResolvedSample> bare = train;
    for (ResolvedSample& s : bare) s.input.contexts.clear();
    CHECK(mean_lm_loss(model, bare, false) == stripped);
    CHECK_THROWS_AS(mean_lm_loss(model, {}, false), DataError);
}

TEST_CASE("finetuning trains adapters, freezes the decoder base, restores the best epoch") {
    Tokenizer tok = tiny_tokenizer();
    Rng rng(17);
    Model model(grad_config(ModelKind::Psc), tok, rng);

    std::vector<ResolvedSample> train = toy_set(12, 1);
    std::vector<ResolvedSample> val = toy_set(6, 2);

    const std::vector<Tensor> base_before = values_of(model.decoder().base_parameters());
    FinetuneConfig cfg;
    cfg.max_epochs = 3;
    cfg.accum = 4;
    cfg.lora_rank = 2;
    cfg.seed = 9;
    const FinetuneResult res = finetune(model, train, val, cfg);

    REQUIRE(!res.epochs.empty());
    CHECK(int(res.epochs.size()) <= cfg.max_epochs);
    CHECK(res.best_epoch >= 0);
    CHECK(res.best_epoch < int(res.epochs.size()));
    CHECK(res.best_val_auc >= 0.0);
    CHECK(res.best_val_auc <= 1.0);
    for (const EpochStat& e : res.epochs) CHECK(std::isfinite(e.train_loss));

    CHECK(model.decoder().has_lora());
    CHECK(all_equal(model.decoder().base_parameters(), base_before));

    // the zero-initialized up-projections must have moved for the adapters
    // to contribute anything
    bool up_nonzero = false;
    for (const Parameter* p : model.decoder().lora_parameters())
        if (p->name.find(".lora_up") != std::string::npos)
            for (int64_t i = 0; i < p->value.numel(); ++i)
                up_nonzero = up_nonzero || p->value.at(int(i)) != 0.0;
    CHECK(up_nonzero);

    // the restored weights reproduce the best validation score exactly
    const double auc_now = auc(predict_probs(model, val), labels_of(val));
    CHECK(auc_now == res.best_val_auc);

    // predict_probs is the per-sample probability in order
    const std::vector<double> probs = predict_probs(model, val);
    for (size_t i = 0; i < val.size(); ++i) CHECK(probs[i] == model.predict_prob(val[i].input));

    CHECK(labels_of(val).front() == 1);
    CHECK(labels_of(val)[1] == -1);

    CHECK_THROWS_AS(finetune(model, {}, val, cfg), DataError);
    FinetuneConfig bad = cfg;
    bad.max_epochs = 0;
    CHECK_THROWS_AS(finetune(model, train, val, bad), ConfigError);
}

TEST_CASE("finetuning without adapters leaves the whole decoder frozen") {
    Tokenizer tok = tiny_tokenizer();
    Rng rng(29);
    Model model(grad_config(ModelKind::Single), tok, rng);

    std::vector<ResolvedSample> train = toy_set(8, 3);
    for (ResolvedSample& s : train) s.input.contexts.clear();
    std::vector<ResolvedSample> val = toy_set(4, 4);
    for (ResolvedSample& s : val) s.input.contexts.clear();

    const std::vector<Tensor> dec_before = values_of(model.decoder().parameters());
    const std::vector<Tensor> clf_before = values_of(model.classifier_parameters());

    FinetuneConfig cfg;
    cfg.max_epochs = 2;
    cfg.accum = 4;
    cfg.lora_rank = 0;
    cfg.early_stop = false;
    const FinetuneResult res = finetune(model, train, val, cfg);

    CHECK(!model.decoder().has_lora());
    CHECK(all_equal(model.decoder().parameters(), dec_before));
    CHECK(any_changed(model.classifier_parameters(), clf_before));
    CHECK(int(res.epochs.size()) == 2);  // no early stop
    CHECK(res.best_epoch == 1);
}

TEST_CASE("checkpoints round-trip the model bit for bit") {
    Tokenizer tok = tiny_tokenizer();
    ModelConfig cfg = grad_config(ModelKind::Psc);
    cfg.lora_rank = 2;
    Rng rng(41);
    Model model(cfg, tok, rng);

    ModelInput in;
    in.main_tokens = {3, 7, 9, 4};
    in.contexts.push_back({{5, 6, 8}, 45});
    in.contexts.push_back({{10, 11}, 12});

    // give the adapters nonzero content so persistence is actually exercised
    for (Parameter* p : model.decoder().lora_parameters()) {
        Rng fill(hash_str(p->name));
        p->value = Tensor::randn({p->value.rows(), p->value.cols()}, fill, 0.05);
    }
    const double before = model.predict_prob(in);

    const std::string path = tmp_path("model.bin");
    model.save(path);
    Model loaded = Model::load(path);
    std::remove(path.c_str());

    CHECK(loaded.config().kind == ModelKind::Psc);
    CHECK(loaded.config().lora_rank == 2);
    CHECK(loaded.tokenizer().vocab_size() == tok.vocab_size());
    CHECK(loaded.predict_prob(in) == before);

    const auto orig_params = model.parameters();
    const auto new_params = loaded.parameters();
    REQUIRE(orig_params.size() == new_params.size());
    for (size_t i = 0; i < orig_params.size(); ++i) {
        CHECK(orig_params[i]->name == new_params[i]->name);
        CHECK(tensors_equal(orig_params[i]->value, new_params[i]->value));
    }

    // adapters attached after construction persist too
    Rng rng2(43);
    Model plain(grad_config(ModelKind::Single), tok, rng2);
    Rng lora_rng(44);
    plain.attach_lora(3, lora_rng);
    ModelInput bare;
    bare.main_tokens = {3, 7, 9, 4};
    const double plain_before = plain.predict_prob(bare);
    const std::string path2 = tmp_path("single.bin");
    plain.save(path2);
    Model plain_loaded = Model::load(path2);
    std::remove(path2.c_str());
    CHECK(plain_loaded.config().lora_rank == 3);
    CHECK(plain_loaded.decoder().has_lora());
    CHECK(plain_loaded.predict_prob(bare) == plain_before);
}
