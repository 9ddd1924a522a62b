#pragma once

#include <memory>
#include <string>
#include <vector>

#include "finctx/corpus.hpp"
#include "finctx/model.hpp"
#include "finctx/portfolio.hpp"
#include "finctx/retrieval.hpp"
#include "finctx/synthetic.hpp"
#include "finctx/train.hpp"

namespace finctx {

// Every knob a run resolves, with defaults. Serialized (sorted keys) as the
// resolved_config.json snapshot next to run outputs, so a rerun of the same
// snapshot reproduces outputs byte for byte.
struct ExperimentConfig {
    uint64_t seed = 1;
    int horizon = 7;
    double train_frac = 0.70;
    double val_frac = 0.15;
    int vocab = 512;

    int n_contexts = 5;
    RetrieverKind retriever = RetrieverKind::TimeFinSim;
    double half_life = kDefaultHalfLifeDays;

    ModelKind kind = ModelKind::Psc;
    AlignKind align = AlignKind::Cma;
    int summary_tokens = 2;
    int d_summarizer = 32;
    int d_decoder = 48;
    int enc_layers = 2;
    int dec_layers = 2;
    int heads = 4;
    int article_cap = 72;
    int hier_layers = 2;
    int lora_rank = 16;

    int calm_epochs = 1;
    double calm_lr = 1e-3;
    int max_epochs = 5;
    double ft_lr = 3e-4;
    int accum = 32;
    int max_samples_per_epoch = 0;
};

ExperimentConfig config_from_json_text(const std::string& text);  // defaults overlaid
ExperimentConfig load_config_file(const std::string& path);
std::string config_to_json_text(const ExperimentConfig& cfg);  // canonical, sorted keys
void write_resolved_config(const std::string& dir, const ExperimentConfig& cfg);

// Article/price files of a data directory (articles.jsonl, prices.csv).
struct DataFiles {
    std::vector<Article> articles;
    PriceTable prices;
    TradingCalendar calendar;  // explicit, from the union of price dates
};
DataFiles load_data_dir(const std::string& dir);

// Chronological splits over the distinct publication dates of kept articles.
SplitSpec derive_splits(const std::vector<Article>& articles, double train_frac, double val_frac,
                        int horizon);

// Everything downstream steps share: the filtered corpus, labeled and
// balanced samples, the retrieval index, and the train-split tokenizer.
struct Pipeline {
    DataFiles data;
    FilteredCorpus corpus;
    SplitSpec splits;
    SplitSamples samples;
    std::shared_ptr<HashedTfIdfEmbedder> embedder;
    std::unique_ptr<ContextRetriever> retriever;
    Tokenizer tokenizer;
};
Pipeline build_pipeline(const std::string& data_dir, const ExperimentConfig& cfg);

Model make_model(const ExperimentConfig& cfg, Tokenizer tokenizer, uint64_t init_seed);

struct ResolveStats {
    int resolved = 0;
    int skipped_no_history = 0;
};

// Attaches retrieved contexts (tokenized, oldest first) to labeled samples.
// Samples whose company lacks enough history at this depth are skipped and
// counted, not failed.
std::vector<ResolvedSample> resolve_samples(const Pipeline& pipe, Model& model,
                                            const std::vector<LabeledSample>& samples,
                                            int n_contexts, const ExperimentConfig& cfg,
                                            ResolveStats* stats);

std::vector<PredictionRow> predict_rows(Model& model, const std::vector<ResolvedSample>& samples);

struct ContextSweepRow {
    int depth = 0;
    double lm_loss = 0.0;  // NaN when the model kind has no LM objective
    double auc_value = 0.0;
    int used = 0;
    int skipped = 0;
};
std::vector<ContextSweepRow> context_sweep(const Pipeline& pipe, Model& model,
                                           const std::vector<LabeledSample>& test,
                                           const std::vector<int>& depths,
                                           const ExperimentConfig& cfg);

struct StalenessBucketRow {
    int bucket = 0;
    int n = 0;
    double mean_staleness = 0.0;
    double auc_value = 0.0;
    bool defined = false;  // false when a bucket holds a single class
};
struct StalenessReport {
    std::vector<StalenessBucketRow> buckets;
    int skipped_no_history = 0;
};
StalenessReport staleness_report(const Pipeline& pipe, Model& model,
                                 const std::vector<LabeledSample>& test,
                                 const ExperimentConfig& cfg);

// Per-company universe rows replicated across the months its prices span.
std::vector<UniverseRow> universe_from_companies(const std::vector<CompanyMeta>& companies,
                                                 const PriceTable& prices);

}  // namespace finctx
