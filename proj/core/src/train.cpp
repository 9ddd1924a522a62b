#include "finctx/train.hpp"

#include <algorithm>

#include "finctx/error.hpp"
#include "finctx/evaluation.hpp"

namespace finctx {

namespace {

std::vector<size_t> epoch_order(size_t n, int limit, Rng& rng) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    rng.shuffle(idx);
    if (limit > 0 && size_t(limit) < idx.size()) idx.resize(size_t(limit));
    return idx;
}

std::vector<Tensor> snapshot_trainable(const std::vector<Parameter*>& params) {
    std::vector<Tensor> out;
    for (const Parameter* p : params)
        if (p->trainable) out.push_back(p->value);
    return out;
}

void restore_trainable(const std::vector<Parameter*>& params, const std::vector<Tensor>& snap) {
    size_t k = 0;
    for (Parameter* p : params)
        if (p->trainable) p->value = snap.at(k++);
}

}  // namespace

CalmResult pretrain_calm(Model& model, const std::vector<ResolvedSample>& train,
                         const CalmConfig& cfg) {
    if (model.config().kind != ModelKind::Psc)
        throw UsageError("summary-prefix pretraining requires the psc model kind");
    if (train.empty()) throw DataError("pretraining set is empty");
    if (cfg.accum <= 0 || cfg.epochs <= 0) throw ConfigError("pretraining epochs and accumulation must be positive");

    for (Parameter* p : model.parameters()) p->trainable = true;
    for (Parameter* p : model.decoder().parameters()) p->trainable = false;
    for (Parameter* p : model.classifier_parameters()) p->trainable = false;

    AdamW opt(model.parameters(), cfg.opt);
    CalmResult res;
    const double inv_accum = 1.0 / double(cfg.accum);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, 1000 + uint64_t(epoch)));
        const std::vector<size_t> order =
            epoch_order(train.size(), cfg.max_samples_per_epoch, rng);
        double loss_sum = 0.0;
        int pending = 0;
        for (size_t i : order) {
            Tape t;
            Var loss = model.lm_loss(t, train[i].input);
            loss_sum += t.value(loss).item();
            t.backward(t.scale(loss, inv_accum));
            if (++pending == cfg.accum) {
                opt.step();
                ++res.steps;
                pending = 0;
            }
        }
        if (pending > 0) {
            opt.step();
            ++res.steps;
        }
        res.epoch_loss.push_back(loss_sum / double(order.size()));
    }
    return res;
}

double mean_lm_loss(Model& model, const std::vector<ResolvedSample>& samples, bool drop_contexts) {
    if (samples.empty()) throw DataError("cannot average LM loss over zero samples");
    double sum = 0.0;
    for (const ResolvedSample& s : samples) {
        Tape t;
        if (drop_contexts) {
            ModelInput stripped;
            stripped.main_tokens = s.input.main_tokens;
            sum += t.value(model.lm_loss(t, stripped)).item();
        } else {
            sum += t.value(model.lm_loss(t, s.input)).item();
        }
    }
    return sum / double(samples.size());
}

FinetuneResult finetune(Model& model, const std::vector<ResolvedSample>& train,
                        const std::vector<ResolvedSample>& val, const FinetuneConfig& cfg) {
    if (train.empty()) throw DataError("finetuning set is empty");
    if (cfg.accum <= 0 || cfg.max_epochs <= 0)
        throw ConfigError("finetuning epochs and accumulation must be positive");
    if (cfg.lora_rank > 0 && !model.decoder().has_lora()) {
        Rng lora_rng(derive_seed(cfg.seed, 77));
        model.attach_lora(cfg.lora_rank, lora_rng);
    }

    for (Parameter* p : model.parameters()) p->trainable = true;
    for (Parameter* p : model.decoder().base_parameters()) p->trainable = false;

    const std::vector<Parameter*> params = model.parameters();
    AdamW opt(params, cfg.opt);
    FinetuneResult res;
    std::vector<Tensor> best = snapshot_trainable(params);
    double best_auc = -1.0;
    const double inv_accum = 1.0 / double(cfg.accum);
    const std::vector<int> val_labels = labels_of(val);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, 2000 + uint64_t(epoch)));
        const std::vector<size_t> order =
            epoch_order(train.size(), cfg.max_samples_per_epoch, rng);
        double loss_sum = 0.0;
        int pending = 0;
        for (size_t i : order) {
            const ResolvedSample& s = train[i];
            Tape t;
            Var loss = t.bce_with_logits(model.class_logit(t, s.input), s.label > 0 ? 1.0 : 0.0);
            loss_sum += t.value(loss).item();
            t.backward(t.scale(loss, inv_accum));
            if (++pending == cfg.accum) {
                opt.step();
                pending = 0;
            }
        }
        if (pending > 0) opt.step();

        EpochStat stat;
        stat.train_loss = loss_sum / double(order.size());
        if (!val.empty()) stat.val_auc = auc(predict_probs(model, val), val_labels);
        res.epochs.push_back(stat);

        if (cfg.early_stop && !val.empty()) {
            if (stat.val_auc > best_auc) {
                best_auc = stat.val_auc;
                res.best_epoch = epoch;
                best = snapshot_trainable(params);
            } else {
                restore_trainable(params, best);
                break;
            }
        } else {
            res.best_epoch = epoch;
            best_auc = stat.val_auc;
        }
    }
    if (cfg.early_stop && !val.empty()) restore_trainable(params, best);
    res.best_val_auc = best_auc;
    return res;
}

std::vector<double> predict_probs(Model& model, const std::vector<ResolvedSample>& samples) {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const ResolvedSample& s : samples) out.push_back(model.predict_prob(s.input));
    return out;
}

std::vector<int> labels_of(const std::vector<ResolvedSample>& samples) {
    std::vector<int> out;
    out.reserve(samples.size());
    for (const ResolvedSample& s : samples) out.push_back(s.label);
    return out;
}

}  // namespace finctx
