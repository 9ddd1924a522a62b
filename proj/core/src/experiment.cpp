#include "finctx/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "finctx/error.hpp"
#include "finctx/evaluation.hpp"
#include "json.hpp"

namespace finctx {

namespace {

using nlohmann::json;

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config JSON must be an object");
    ExperimentConfig cfg;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "seed")
                cfg.seed = value.get<uint64_t>();
            else if (key == "horizon")
                cfg.horizon = value.get<int>();
            else if (key == "train_frac")
                cfg.train_frac = value.get<double>();
            else if (key == "val_frac")
                cfg.val_frac = value.get<double>();
            else if (key == "vocab")
                cfg.vocab = value.get<int>();
            else if (key == "n_contexts")
                cfg.n_contexts = value.get<int>();
            else if (key == "retriever")
                cfg.retriever = parse_retriever_kind(value.get<std::string>());
            else if (key == "half_life")
                cfg.half_life = value.get<double>();
            else if (key == "kind")
                cfg.kind = parse_model_kind(value.get<std::string>());
            else if (key == "align")
                cfg.align = parse_align_kind(value.get<std::string>());
            else if (key == "summary_tokens")
                cfg.summary_tokens = value.get<int>();
            else if (key == "d_summarizer")
                cfg.d_summarizer = value.get<int>();
            else if (key == "d_decoder")
                cfg.d_decoder = value.get<int>();
            else if (key == "enc_layers")
                cfg.enc_layers = value.get<int>();
            else if (key == "dec_layers")
                cfg.dec_layers = value.get<int>();
            else if (key == "heads")
                cfg.heads = value.get<int>();
            else if (key == "article_cap")
                cfg.article_cap = value.get<int>();
            else if (key == "hier_layers")
                cfg.hier_layers = value.get<int>();
            else if (key == "lora_rank")
                cfg.lora_rank = value.get<int>();
            else if (key == "calm_epochs")
                cfg.calm_epochs = value.get<int>();
            else if (key == "calm_lr")
                cfg.calm_lr = value.get<double>();
            else if (key == "max_epochs")
                cfg.max_epochs = value.get<int>();
            else if (key == "ft_lr")
                cfg.ft_lr = value.get<double>();
            else if (key == "accum")
                cfg.accum = value.get<int>();
            else if (key == "max_samples_per_epoch")
                cfg.max_samples_per_epoch = value.get<int>();
            else
                throw ConfigError("unknown config key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return config_from_json_text(text);
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["horizon"] = cfg.horizon;
    j["train_frac"] = cfg.train_frac;
    j["val_frac"] = cfg.val_frac;
    j["vocab"] = cfg.vocab;
    j["n_contexts"] = cfg.n_contexts;
    j["retriever"] = retriever_kind_name(cfg.retriever);
    j["half_life"] = cfg.half_life;
    j["kind"] = model_kind_name(cfg.kind);
    j["align"] = align_kind_name(cfg.align);
    j["summary_tokens"] = cfg.summary_tokens;
    j["d_summarizer"] = cfg.d_summarizer;
    j["d_decoder"] = cfg.d_decoder;
    j["enc_layers"] = cfg.enc_layers;
    j["dec_layers"] = cfg.dec_layers;
    j["heads"] = cfg.heads;
    j["article_cap"] = cfg.article_cap;
    j["hier_layers"] = cfg.hier_layers;
    j["lora_rank"] = cfg.lora_rank;
    j["calm_epochs"] = cfg.calm_epochs;
    j["calm_lr"] = cfg.calm_lr;
    j["max_epochs"] = cfg.max_epochs;
    j["ft_lr"] = cfg.ft_lr;
    j["accum"] = cfg.accum;
    j["max_samples_per_epoch"] = cfg.max_samples_per_epoch;
    return j.dump(2) + "\n";
}

void write_resolved_config(const std::string& dir, const ExperimentConfig& cfg) {
    const std::string path = dir + "/resolved_config.json";
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << config_to_json_text(cfg);
    if (!out) throw DataError("write failed for " + path);
}

DataFiles load_data_dir(const std::string& dir) {
    DataFiles d;
    d.articles = load_articles(dir + "/articles.jsonl");
    d.prices = load_prices(dir + "/prices.csv");
    d.calendar = TradingCalendar(d.prices.all_dates());
    return d;
}

SplitSpec derive_splits(const std::vector<Article>& articles, double train_frac, double val_frac,
                        int horizon) {
    if (!(train_frac > 0.0) || !(val_frac > 0.0) || !(train_frac + val_frac < 1.0))
        throw ConfigError("split fractions must be positive with train+val < 1");
    std::set<Date> dates;
    for (const Article& a : articles) dates.insert(a.published_at.date);
    if (dates.size() < 3) throw DataError("need at least three distinct article dates to split");
    std::vector<Date> d(dates.begin(), dates.end());
    const size_t n = d.size();
    auto cut = [&](double frac) {
        size_t idx = size_t(std::ceil(frac * double(n)));
        if (idx == 0) idx = 1;
        if (idx > n) idx = n;
        return idx - 1;
    };
    const size_t i_train = cut(train_frac);
    const size_t i_val = cut(train_frac + val_frac);
    if (i_val <= i_train || i_val + 1 >= n)
        throw DataError("split fractions leave an empty validation or test range");
    SplitSpec s;
    s.train_begin = d.front();
    s.train_end = d[i_train];
    s.val_begin = add_days(s.train_end, 1);
    s.val_end = d[i_val];
    s.test_begin = add_days(s.val_end, 1);
    s.test_end = add_days(d.back(), 7 + horizon);  // room for weekend rolls of late articles
    s.validate();
    return s;
}

Pipeline build_pipeline(const std::string& data_dir, const ExperimentConfig& cfg) {
    Pipeline p;
    p.data = load_data_dir(data_dir);
    p.corpus = filter_articles(p.data.articles);
    p.splits = derive_splits(p.corpus.articles, cfg.train_frac, cfg.val_frac, cfg.horizon);
    p.samples =
        build_labeled_samples(p.corpus, p.data.prices, p.data.calendar, p.splits, cfg.horizon);
    balance_classes(p.samples.train, derive_seed(cfg.seed, 3));

    std::vector<std::string> train_texts;
    for (const Article& a : p.corpus.articles)
        if (!(p.splits.train_end < a.published_at.date)) train_texts.push_back(a.text);
    if (train_texts.empty()) throw DataError("no training-range articles to fit on");
    auto embedder = std::make_shared<HashedTfIdfEmbedder>();
    embedder->fit(train_texts);
    p.embedder = embedder;
    p.retriever = std::make_unique<ContextRetriever>(p.corpus.articles, p.embedder);
    p.tokenizer = Tokenizer::fit(train_texts, cfg.vocab);
    return p;
}

Model make_model(const ExperimentConfig& cfg, Tokenizer tokenizer, uint64_t init_seed) {
    ModelConfig mc;
    mc.kind = cfg.kind;
    mc.n_contexts = cfg.n_contexts;
    mc.article_token_cap = cfg.article_cap;
    mc.hier_layers = cfg.hier_layers;
    mc.lora_rank = 0;

    mc.decoder.d_model = cfg.d_decoder;
    mc.decoder.layers = cfg.dec_layers;
    mc.decoder.heads = cfg.heads;
    mc.decoder.d_ff = 2 * cfg.d_decoder;
    mc.decoder.vocab = tokenizer.vocab_size();

    mc.summarizer.d_model = cfg.d_summarizer;
    mc.summarizer.layers = cfg.enc_layers;
    mc.summarizer.heads = cfg.heads;
    mc.summarizer.d_ff = 2 * cfg.d_summarizer;
    mc.summarizer.vocab = tokenizer.vocab_size();
    mc.summarizer.max_article_tokens = cfg.article_cap;
    mc.summarizer.summary_tokens = cfg.summary_tokens;
    mc.summarizer.max_positions = cfg.article_cap + cfg.summary_tokens;

    mc.alignment.kind = cfg.align;
    mc.alignment.d_in = cfg.d_summarizer;
    mc.alignment.d_out = cfg.d_decoder;
    mc.alignment.heads = cfg.heads;
    mc.alignment.mlp_hidden = 2 * cfg.d_summarizer;

    Rng rng(derive_seed(init_seed, 11));
    return Model(mc, std::move(tokenizer), rng);
}

std::vector<ResolvedSample> resolve_samples(const Pipeline& pipe, Model& model,
                                            const std::vector<LabeledSample>& samples,
                                            int n_contexts, const ExperimentConfig& cfg,
                                            ResolveStats* stats) {
    const bool wants_contexts = model.config().kind != ModelKind::Single && n_contexts > 0;
    std::vector<ResolvedSample> out;
    out.reserve(samples.size());
    for (const LabeledSample& s : samples) {
        ResolvedSample r;
        r.sample_id = sample_id(s);
        r.company_id = s.main->company_id;
        r.trading_date = s.trading_date;
        r.horizon = s.horizon;
        r.label = s.label;
        r.input.main_tokens = model.encode_main(s.main->text);
        if (wants_contexts) {
            RetrievalResult rr;
            try {
                rr = pipe.retriever->retrieve(*s.main, n_contexts, cfg.retriever, cfg.half_life);
            } catch (const InsufficientHistoryError&) {
                if (stats) ++stats->skipped_no_history;
                continue;
            }
            for (const Article* ctx : rr.contexts) {
                ContextTokens ct;
                ct.tokens = model.encode_context(ctx->text);
                ct.delta_days =
                    int(days_between(ctx->published_at.date, s.main->published_at.date));
                r.input.contexts.push_back(std::move(ct));
            }
        }
        if (stats) ++stats->resolved;
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<PredictionRow> predict_rows(Model& model, const std::vector<ResolvedSample>& samples) {
    std::vector<PredictionRow> rows;
    rows.reserve(samples.size());
    for (const ResolvedSample& s : samples) {
        PredictionRow r;
        r.sample_id = s.sample_id;
        r.company_id = s.company_id;
        r.trading_date = s.trading_date;
        r.horizon = s.horizon;
        r.probability = model.predict_prob(s.input);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<ContextSweepRow> context_sweep(const Pipeline& pipe, Model& model,
                                           const std::vector<LabeledSample>& test,
                                           const std::vector<int>& depths,
                                           const ExperimentConfig& cfg) {
    std::vector<ContextSweepRow> rows;
    for (int depth : depths) {
        if (depth < 0) throw ConfigError("context depth must be non-negative");
        ResolveStats stats;
        const auto resolved = resolve_samples(pipe, model, test, depth, cfg, &stats);
        ContextSweepRow row;
        row.depth = depth;
        row.used = stats.resolved;
        row.skipped = stats.skipped_no_history;
        row.lm_loss = std::numeric_limits<double>::quiet_NaN();
        row.auc_value = std::numeric_limits<double>::quiet_NaN();
        if (!resolved.empty()) {
            try {
                row.lm_loss = mean_lm_loss(model, resolved, false);
            } catch (const UsageError&) {
            }
            const std::vector<int> labels = labels_of(resolved);
            const bool has_pos = std::count(labels.begin(), labels.end(), 1) > 0;
            const bool has_neg = std::count(labels.begin(), labels.end(), -1) > 0;
            if (has_pos && has_neg) row.auc_value = auc(predict_probs(model, resolved), labels);
        }
        rows.push_back(row);
    }
    return rows;
}

StalenessReport staleness_report(const Pipeline& pipe, Model& model,
                                 const std::vector<LabeledSample>& test,
                                 const ExperimentConfig& cfg) {
    StalenessReport rep;
    std::vector<const LabeledSample*> usable;
    std::vector<std::pair<std::string, double>> scored;
    for (const LabeledSample& s : test) {
        double st = 0.0;
        try {
            st = pipe.retriever->staleness(*s.main);
        } catch (const InsufficientHistoryError&) {
            ++rep.skipped_no_history;
            continue;
        }
        usable.push_back(&s);
        scored.emplace_back(sample_id(s), st);
    }
    if (usable.empty()) throw DataError("no test samples have enough history for staleness");

    ResolveStats stats;
    std::vector<LabeledSample> usable_copy;
    usable_copy.reserve(usable.size());
    for (const LabeledSample* s : usable) usable_copy.push_back(*s);
    const auto resolved =
        resolve_samples(pipe, model, usable_copy, cfg.n_contexts, cfg, &stats);
    if (resolved.size() != usable.size())
        throw DataError("staleness report lost samples during context resolution");
    const std::vector<double> probs = predict_probs(model, resolved);

    const std::vector<int> bucket_of = staleness_buckets(scored);
    rep.buckets.assign(3, StalenessBucketRow{});
    std::vector<std::vector<double>> bucket_probs(3);
    std::vector<std::vector<int>> bucket_labels(3);
    std::vector<double> bucket_sum(3, 0.0);
    for (size_t i = 0; i < usable.size(); ++i) {
        const int b = bucket_of[i];
        bucket_probs[size_t(b)].push_back(probs[i]);
        bucket_labels[size_t(b)].push_back(usable[i]->label);
        bucket_sum[size_t(b)] += scored[i].second;
    }
    for (int b = 0; b < 3; ++b) {
        StalenessBucketRow& row = rep.buckets[size_t(b)];
        row.bucket = b;
        row.n = int(bucket_probs[size_t(b)].size());
        if (row.n > 0) row.mean_staleness = bucket_sum[size_t(b)] / double(row.n);
        const auto& labels = bucket_labels[size_t(b)];
        const bool has_pos = std::count(labels.begin(), labels.end(), 1) > 0;
        const bool has_neg = std::count(labels.begin(), labels.end(), -1) > 0;
        if (has_pos && has_neg) {
            row.auc_value = auc(bucket_probs[size_t(b)], labels);
            row.defined = true;
        }
    }
    return rep;
}

std::vector<UniverseRow> universe_from_companies(const std::vector<CompanyMeta>& companies,
                                                 const PriceTable& prices) {
    std::vector<UniverseRow> rows;
    for (const CompanyMeta& c : companies) {
        const PriceSeries* series = prices.find(c.company_id);
        if (!series || series->points.empty())
            throw DataError("no prices for company " + c.company_id);
        const int lo = month_key(series->points.front().date);
        const int hi = month_key(series->points.back().date);
        for (int m = lo; m <= hi; ++m) {
            UniverseRow r;
            r.company_id = c.company_id;
            r.month_key = m;
            r.market_cap = c.market_cap;
            r.avg_daily_value = c.avg_daily_value;
            r.industry = c.industry;
            rows.push_back(std::move(r));
        }
    }
    std::sort(rows.begin(), rows.end(), [](const UniverseRow& a, const UniverseRow& b) {
        if (a.company_id != b.company_id) return a.company_id < b.company_id;
        return a.month_key < b.month_key;
    });
    return rows;
}

}  // namespace finctx
