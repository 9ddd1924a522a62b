#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "finctx/date.hpp"
#include "finctx/model.hpp"
#include "finctx/optim.hpp"

namespace finctx {

// A labeled sample with its retrieved contexts already tokenized.
struct ResolvedSample {
    std::string sample_id;
    std::string company_id;
    Date trading_date;
    int horizon = 7;
    int label = 0;  // +1 / -1
    ModelInput input;
};

struct CalmConfig {
    int epochs = 1;
    int accum = 32;                 // samples per optimizer step
    int max_samples_per_epoch = 0;  // 0 = the whole set
    AdamWConfig opt;
    uint64_t seed = 1;
};

struct CalmResult {
    std::vector<double> epoch_loss;  // mean per-sample NLL per epoch
    int steps = 0;
};

// Pretrains the summary pathway on the decoder's own LM loss. The decoder is
// frozen throughout: only the summarizer, the elapsed-time table, the summary
// tokens, and the alignment receive updates.
CalmResult pretrain_calm(Model& model, const std::vector<ResolvedSample>& train,
                         const CalmConfig& cfg);

// Mean LM loss over samples, optionally with every context stripped.
double mean_lm_loss(Model& model, const std::vector<ResolvedSample>& samples, bool drop_contexts);

struct FinetuneConfig {
    int max_epochs = 5;
    int accum = 32;
    int max_samples_per_epoch = 0;
    AdamWConfig opt;
    uint64_t seed = 1;
    int lora_rank = 16;  // 0 = train with no decoder adapters
    bool early_stop = true;

    FinetuneConfig() { opt.lr = 3e-4; }
};

struct EpochStat {
    double train_loss = 0.0;
    double val_auc = 0.0;
};

struct FinetuneResult {
    std::vector<EpochStat> epochs;
    int best_epoch = -1;
    double best_val_auc = 0.0;
};

// Direction finetuning on sigmoid cross-entropy. Decoder base weights stay
// frozen; adapters, the summary pathway, and the classifier train. Stops
// after the first epoch that fails to improve validation AUC (the best
// weights are restored) or after max_epochs.
FinetuneResult finetune(Model& model, const std::vector<ResolvedSample>& train,
                        const std::vector<ResolvedSample>& val, const FinetuneConfig& cfg);

std::vector<double> predict_probs(Model& model, const std::vector<ResolvedSample>& samples);

std::vector<int> labels_of(const std::vector<ResolvedSample>& samples);

}  // namespace finctx
