#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "finctx/error.hpp"
#include "finctx/evaluation.hpp"
#include "finctx/experiment.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace finctx;
using nlohmann::json;

namespace {

void log_line(const std::string& cmd, const std::string& msg) {
    std::cerr << "[" << cmd << "] " << msg << "\n";
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << content;
    if (!out) throw DataError("write failed for " + path);
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt4(double v) {
    if (std::isnan(v)) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            size_t used = 0;
            const int v = std::stoi(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw ConfigError("cannot parse integer list entry '" + item + "'");
        }
    }
    if (out.empty()) throw ConfigError("integer list '" + s + "' is empty");
    return out;
}

std::vector<std::string> parse_str_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    if (out.empty()) throw ConfigError("list '" + s + "' is empty");
    return out;
}

// --- shared experiment-config flags; any flag given overrides the file ---

struct CfgFlags {
    std::string config_path;
    uint64_t seed = 0;
    int horizon = 0;
    double train_frac = 0.0, val_frac = 0.0;
    int vocab = 0;
    int n_contexts = 0;
    std::string retriever, model, align;
    double half_life = 0.0;
    int summary_tokens = 0, d_summarizer = 0, d_decoder = 0;
    int enc_layers = 0, dec_layers = 0, heads = 0;
    int article_cap = 0, hier_layers = 0, lora_rank = 0;
    int calm_epochs = 0;
    double calm_lr = 0.0;
    int max_epochs = 0;
    double ft_lr = 0.0;
    int accum = 0;
    int max_samples = 0;
};

void add_cfg_flags(CLI::App* sub, CfgFlags& f) {
    sub->add_option("--config", f.config_path, "JSON config file; flags override its fields");
    sub->add_option("--seed", f.seed, "master seed");
    sub->add_option("--horizon", f.horizon, "label horizon in trading days");
    sub->add_option("--train-frac", f.train_frac, "training fraction of distinct dates");
    sub->add_option("--val-frac", f.val_frac, "validation fraction of distinct dates");
    sub->add_option("--vocab", f.vocab, "tokenizer vocabulary cap");
    sub->add_option("--n-contexts", f.n_contexts, "retrieved contexts per sample");
    sub->add_option("--retriever", f.retriever, "retriever kind: recent|finsim|timefinsim");
    sub->add_option("--half-life", f.half_life, "time-decay half-life in days");
    sub->add_option("--model", f.model,
                    "model kind: psc|single|concat-full|concat-prefix|hierarchical");
    sub->add_option("--align", f.align, "alignment kind: linear|mlp|cma");
    sub->add_option("--summary-tokens", f.summary_tokens, "summary slots per article");
    sub->add_option("--d-summarizer", f.d_summarizer, "summarizer width");
    sub->add_option("--d-decoder", f.d_decoder, "decoder width");
    sub->add_option("--enc-layers", f.enc_layers, "summarizer depth");
    sub->add_option("--dec-layers", f.dec_layers, "decoder depth");
    sub->add_option("--heads", f.heads, "attention heads");
    sub->add_option("--article-cap", f.article_cap, "token cap per article");
    sub->add_option("--hier-layers", f.hier_layers, "hierarchical global depth");
    sub->add_option("--lora-rank", f.lora_rank, "adapter rank for finetuning, 0 disables");
    sub->add_option("--calm-epochs", f.calm_epochs, "pretraining epochs");
    sub->add_option("--calm-lr", f.calm_lr, "pretraining learning rate");
    sub->add_option("--max-epochs", f.max_epochs, "finetuning epoch cap");
    sub->add_option("--ft-lr", f.ft_lr, "finetuning learning rate");
    sub->add_option("--accum", f.accum, "samples per optimizer step");
    sub->add_option("--max-samples-per-epoch", f.max_samples, "epoch subsample cap, 0 = all");
}

ExperimentConfig resolve_cfg(const CLI::App* sub, const CfgFlags& f) {
    ExperimentConfig cfg =
        f.config_path.empty() ? ExperimentConfig{} : load_config_file(f.config_path);
    if (sub->count("--seed")) cfg.seed = f.seed;
    if (sub->count("--horizon")) cfg.horizon = f.horizon;
    if (sub->count("--train-frac")) cfg.train_frac = f.train_frac;
    if (sub->count("--val-frac")) cfg.val_frac = f.val_frac;
    if (sub->count("--vocab")) cfg.vocab = f.vocab;
    if (sub->count("--n-contexts")) cfg.n_contexts = f.n_contexts;
    if (sub->count("--retriever")) cfg.retriever = parse_retriever_kind(f.retriever);
    if (sub->count("--half-life")) cfg.half_life = f.half_life;
    if (sub->count("--model")) cfg.kind = parse_model_kind(f.model);
    if (sub->count("--align")) cfg.align = parse_align_kind(f.align);
    if (sub->count("--summary-tokens")) cfg.summary_tokens = f.summary_tokens;
    if (sub->count("--d-summarizer")) cfg.d_summarizer = f.d_summarizer;
    if (sub->count("--d-decoder")) cfg.d_decoder = f.d_decoder;
    if (sub->count("--enc-layers")) cfg.enc_layers = f.enc_layers;
    if (sub->count("--dec-layers")) cfg.dec_layers = f.dec_layers;
    if (sub->count("--heads")) cfg.heads = f.heads;
    if (sub->count("--article-cap")) cfg.article_cap = f.article_cap;
    if (sub->count("--hier-layers")) cfg.hier_layers = f.hier_layers;
    if (sub->count("--lora-rank")) cfg.lora_rank = f.lora_rank;
    if (sub->count("--calm-epochs")) cfg.calm_epochs = f.calm_epochs;
    if (sub->count("--calm-lr")) cfg.calm_lr = f.calm_lr;
    if (sub->count("--max-epochs")) cfg.max_epochs = f.max_epochs;
    if (sub->count("--ft-lr")) cfg.ft_lr = f.ft_lr;
    if (sub->count("--accum")) cfg.accum = f.accum;
    if (sub->count("--max-samples-per-epoch")) cfg.max_samples_per_epoch = f.max_samples;
    return cfg;
}

// --- gen-data ---

SyntheticConfig synth_from_json(const json& j, uint64_t* seed) {
    SyntheticConfig sc;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "seed")
                *seed = value.get<uint64_t>();
            else if (key == "companies")
                sc.companies = value.get<int>();
            else if (key == "articles_per_company")
                sc.articles_per_company = value.get<int>();
            else if (key == "context_weight")
                sc.context_weight = value.get<double>();
            else if (key == "noise_sigma")
                sc.noise_sigma = value.get<double>();
            else if (key == "chain_prob")
                sc.chain_prob = value.get<double>();
            else if (key == "recent_antecedent_prob")
                sc.recent_antecedent_prob = value.get<double>();
            else if (key == "min_gap_days")
                sc.min_gap_days = value.get<int>();
            else if (key == "max_gap_days")
                sc.max_gap_days = value.get<int>();
            else if (key == "start_date")
                sc.start_date = parse_date(value.get<std::string>());
            else if (key == "price_pad_days")
                sc.price_pad_days = value.get<int>();
            else
                throw ConfigError("unknown generator config key '" + key + "'");
        } catch (const json::exception& e) {
            throw ConfigError(std::string("bad generator config value: ") + e.what());
        }
    }
    return sc;
}

std::string synth_to_json(const SyntheticConfig& sc, uint64_t seed) {
    json j;
    j["seed"] = seed;
    j["companies"] = sc.companies;
    j["articles_per_company"] = sc.articles_per_company;
    j["context_weight"] = sc.context_weight;
    j["noise_sigma"] = sc.noise_sigma;
    j["chain_prob"] = sc.chain_prob;
    j["recent_antecedent_prob"] = sc.recent_antecedent_prob;
    j["min_gap_days"] = sc.min_gap_days;
    j["max_gap_days"] = sc.max_gap_days;
    j["start_date"] = format_date(sc.start_date);
    j["price_pad_days"] = sc.price_pad_days;
    return j.dump(2) + "\n";
}

struct GenDataArgs {
    CLI::App* sub = nullptr;
    std::string config_path, out_dir;
    uint64_t seed = 1;
    int companies = 0, articles_per_company = 0;
    double context_weight = 0.0, noise_sigma = 0.0;
    double chain_prob = 0.0, recent_antecedent_prob = 0.0;
    int min_gap_days = 0, max_gap_days = 0, price_pad_days = 0;
    std::string start_date;
};

int run_gen_data(const GenDataArgs& a) {
    uint64_t seed = 1;
    SyntheticConfig sc;
    if (!a.config_path.empty()) {
        std::ifstream in(a.config_path);
        if (!in) throw ConfigError("cannot read config file " + a.config_path);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("malformed generator config: ") + e.what());
        }
        if (!j.is_object()) throw ConfigError("generator config must be a JSON object");
        sc = synth_from_json(j, &seed);
    }
    if (a.sub->count("--seed")) seed = a.seed;
    if (a.sub->count("--companies")) sc.companies = a.companies;
    if (a.sub->count("--articles-per-company")) sc.articles_per_company = a.articles_per_company;
    if (a.sub->count("--context-weight")) sc.context_weight = a.context_weight;
    if (a.sub->count("--noise-sigma")) sc.noise_sigma = a.noise_sigma;
    if (a.sub->count("--chain-prob")) sc.chain_prob = a.chain_prob;
    if (a.sub->count("--recent-antecedent-prob"))
        sc.recent_antecedent_prob = a.recent_antecedent_prob;
    if (a.sub->count("--min-gap-days")) sc.min_gap_days = a.min_gap_days;
    if (a.sub->count("--max-gap-days")) sc.max_gap_days = a.max_gap_days;
    if (a.sub->count("--price-pad-days")) sc.price_pad_days = a.price_pad_days;
    if (a.sub->count("--start-date")) sc.start_date = parse_date(a.start_date);

    const SyntheticCorpus corpus = generate_synthetic_corpus(sc, seed);
    ensure_dir(a.out_dir);
    save_articles(a.out_dir + "/articles.jsonl", corpus.articles);
    save_prices(a.out_dir + "/prices.csv", corpus.prices);
    save_truth(a.out_dir + "/truth.jsonl", corpus.truth);
    save_company_meta(a.out_dir + "/companies.csv", corpus.companies);
    save_universe(a.out_dir + "/universe.csv",
                  universe_from_companies(corpus.companies, corpus.prices));
    write_text(a.out_dir + "/gen_config.json", synth_to_json(sc, seed));

    log_line("gen-data", "wrote " + std::to_string(corpus.articles.size()) + " articles for " +
                             std::to_string(sc.companies) + " companies to " + a.out_dir);
    return 0;
}

// --- ingest ---

struct IngestArgs {
    std::string articles_path, prices_path, out_dir;
};

int run_ingest(const IngestArgs& a) {
    const std::vector<Article> articles = load_articles(a.articles_path);
    const PriceTable prices = load_prices(a.prices_path);
    const FilteredCorpus corpus = filter_articles(articles);

    ensure_dir(a.out_dir);
    save_articles(a.out_dir + "/articles.jsonl", corpus.articles);
    save_prices(a.out_dir + "/prices.csv", prices);

    std::string rej = "id,reason\n";
    for (const RejectionEntry& r : corpus.rejections) rej += r.id + "," + r.reason + "\n";
    write_text(a.out_dir + "/rejections.csv", rej);

    std::string eligible;
    for (const Article& art : corpus.articles)
        if (corpus.main_eligible.count(art.id)) eligible += art.id + "\n";
    write_text(a.out_dir + "/eligible_ids.txt", eligible);

    log_line("ingest", "kept " + std::to_string(corpus.articles.size()) + " of " +
                           std::to_string(articles.size()) + " articles, " +
                           std::to_string(corpus.main_eligible.size()) + " main-eligible, " +
                           std::to_string(corpus.rejections.size()) + " rejections logged");
    return 0;
}

// --- retrieve ---

struct RetrieveArgs {
    std::string corpus_dir, out_path, kind = "timefinsim";
    int n = 5;
    double half_life = kDefaultHalfLifeDays;
};

int run_retrieve(const RetrieveArgs& a) {
    const RetrieverKind kind = parse_retriever_kind(a.kind);
    const DataFiles data = load_data_dir(a.corpus_dir);
    const FilteredCorpus corpus = filter_articles(data.articles);
    auto embedder = std::make_shared<HashedTfIdfEmbedder>();
    std::vector<std::string> texts;
    for (const Article& art : corpus.articles) texts.push_back(art.text);
    if (texts.empty()) throw DataError("no articles survive filtering");
    embedder->fit(texts);
    const ContextRetriever retriever(corpus.articles, embedder);

    std::string out;
    int written = 0, skipped = 0;
    for (const Article& art : corpus.articles) {
        if (!corpus.main_eligible.count(art.id)) continue;
        RetrievalResult rr;
        try {
            rr = retriever.retrieve(art, a.n, kind, a.half_life);
        } catch (const InsufficientHistoryError&) {
            ++skipped;
            continue;
        }
        json row;
        row["id"] = art.id;
        json ctxs = json::array();
        for (size_t i = 0; i < rr.contexts.size(); ++i) {
            json c;
            c["id"] = rr.contexts[i]->id;
            c["score"] = rr.scores[i];
            c["delta_days"] =
                days_between(rr.contexts[i]->published_at.date, art.published_at.date);
            ctxs.push_back(c);
        }
        row["contexts"] = ctxs;
        out += row.dump() + "\n";
        ++written;
    }
    if (const fs::path parent = fs::path(a.out_path).parent_path(); !parent.empty())
        ensure_dir(parent.string());
    write_text(a.out_path, out);
    log_line("retrieve", retriever_kind_name(kind) + " n=" + std::to_string(a.n) + ": " +
                             std::to_string(written) + " records, " + std::to_string(skipped) +
                             " mains below depth");
    return 0;
}

// --- training-flow helpers ---

Pipeline make_pipeline(const std::string& cmd, const std::string& data_dir,
                       const ExperimentConfig& cfg) {
    Pipeline pipe = build_pipeline(data_dir, cfg);
    log_line(cmd, "corpus: " + std::to_string(pipe.corpus.articles.size()) + " kept, samples " +
                      std::to_string(pipe.samples.train.size()) + "/" +
                      std::to_string(pipe.samples.validation.size()) + "/" +
                      std::to_string(pipe.samples.test.size()) +
                      " train/val/test, vocab " + std::to_string(pipe.tokenizer.vocab_size()));
    return pipe;
}

std::vector<ResolvedSample> resolve_or_log(const std::string& cmd, const Pipeline& pipe,
                                           Model& model,
                                           const std::vector<LabeledSample>& samples,
                                           const char* split_name, int n_contexts,
                                           const ExperimentConfig& cfg) {
    ResolveStats stats;
    auto out = resolve_samples(pipe, model, samples, n_contexts, cfg, &stats);
    log_line(cmd, std::string(split_name) + ": resolved " + std::to_string(stats.resolved) +
                      ", skipped " + std::to_string(stats.skipped_no_history) +
                      " below history depth");
    if (out.empty()) throw DataError(std::string("no ") + split_name +
                                     " samples have enough history at this context depth");
    return out;
}

double safe_auc(const std::vector<double>& probs, const std::vector<int>& labels) {
    try {
        return auc(probs, labels);
    } catch (const DataError&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

// --- pretrain ---

struct TrainArgs {
    CLI::App* sub = nullptr;
    CfgFlags flags;
    std::string data_dir, out_dir, checkpoint;
};

int run_pretrain(const TrainArgs& a) {
    const ExperimentConfig cfg = resolve_cfg(a.sub, a.flags);
    const Pipeline pipe = make_pipeline("pretrain", a.data_dir, cfg);
    Model model = make_model(cfg, pipe.tokenizer, cfg.seed);
    const auto train =
        resolve_or_log("pretrain", pipe, model, pipe.samples.train, "train", cfg.n_contexts, cfg);

    CalmConfig cc;
    cc.epochs = cfg.calm_epochs;
    cc.accum = cfg.accum;
    cc.max_samples_per_epoch = cfg.max_samples_per_epoch;
    cc.opt.lr = cfg.calm_lr;
    cc.seed = derive_seed(cfg.seed, 21);
    const CalmResult res = pretrain_calm(model, train, cc);

    ensure_dir(a.out_dir);
    model.save(a.out_dir + "/pretrained.bin");
    std::string log = "epoch,mean_loss\n";
    for (size_t e = 0; e < res.epoch_loss.size(); ++e)
        log += std::to_string(e) + "," + fmt(res.epoch_loss[e]) + "\n";
    write_text(a.out_dir + "/calm_log.csv", log);
    write_resolved_config(a.out_dir, cfg);

    log_line("pretrain", "epoch losses " + [&] {
        std::string s;
        for (double l : res.epoch_loss) s += (s.empty() ? "" : " -> ") + fmt4(l);
        return s;
    }() + ", " + std::to_string(res.steps) + " optimizer steps");
    log_line("pretrain", "saved " + a.out_dir + "/pretrained.bin");
    return 0;
}

// --- finetune ---

int run_finetune(const TrainArgs& a) {
    const ExperimentConfig cfg = resolve_cfg(a.sub, a.flags);
    const Pipeline pipe = make_pipeline("finetune", a.data_dir, cfg);
    Model model = a.checkpoint.empty() ? make_model(cfg, pipe.tokenizer, cfg.seed)
                                       : Model::load(a.checkpoint);
    if (!a.checkpoint.empty())
        log_line("finetune", "resumed " + model_kind_name(model.config().kind) +
                                 " checkpoint from " + a.checkpoint);

    const auto train =
        resolve_or_log("finetune", pipe, model, pipe.samples.train, "train", cfg.n_contexts, cfg);
    const auto val = resolve_or_log("finetune", pipe, model, pipe.samples.validation, "val",
                                    cfg.n_contexts, cfg);
    const auto test =
        resolve_or_log("finetune", pipe, model, pipe.samples.test, "test", cfg.n_contexts, cfg);

    FinetuneConfig fc;
    fc.max_epochs = cfg.max_epochs;
    fc.accum = cfg.accum;
    fc.max_samples_per_epoch = cfg.max_samples_per_epoch;
    fc.opt.lr = cfg.ft_lr;
    fc.seed = derive_seed(cfg.seed, 22);
    fc.lora_rank = cfg.lora_rank;
    const FinetuneResult res = finetune(model, train, val, fc);

    ensure_dir(a.out_dir);
    model.save(a.out_dir + "/model.bin");
    std::string log = "epoch,train_loss,val_auc\n";
    for (size_t e = 0; e < res.epochs.size(); ++e)
        log += std::to_string(e) + "," + fmt(res.epochs[e].train_loss) + "," +
               fmt(res.epochs[e].val_auc) + "\n";
    write_text(a.out_dir + "/finetune_log.csv", log);
    save_predictions(a.out_dir + "/predictions.csv", predict_rows(model, test));
    write_resolved_config(a.out_dir, cfg);

    const double test_auc = safe_auc(predict_probs(model, test), labels_of(test));
    log_line("finetune", "best epoch " + std::to_string(res.best_epoch) + ", val AUC " +
                             fmt4(res.best_val_auc) + ", test AUC " + fmt4(test_auc));
    log_line("finetune", "saved " + a.out_dir + "/model.bin and predictions.csv");
    return 0;
}

// --- predict ---

struct PredictArgs {
    CLI::App* sub = nullptr;
    CfgFlags flags;
    std::string data_dir, out_dir, checkpoint, split = "test";
};

int run_predict(const PredictArgs& a) {
    ExperimentConfig cfg = resolve_cfg(a.sub, a.flags);
    const Pipeline pipe = make_pipeline("predict", a.data_dir, cfg);
    Model model = Model::load(a.checkpoint);
    cfg.kind = model.config().kind;

    const std::vector<LabeledSample>* split = nullptr;
    if (a.split == "train")
        split = &pipe.samples.train;
    else if (a.split == "validation")
        split = &pipe.samples.validation;
    else if (a.split == "test")
        split = &pipe.samples.test;
    else
        throw ConfigError("unknown split '" + a.split + "', expected train|validation|test");

    const auto resolved =
        resolve_or_log("predict", pipe, model, *split, a.split.c_str(), cfg.n_contexts, cfg);
    ensure_dir(a.out_dir);
    save_predictions(a.out_dir + "/predictions.csv", predict_rows(model, resolved));
    write_resolved_config(a.out_dir, cfg);
    log_line("predict", "wrote " + std::to_string(resolved.size()) + " predictions to " +
                            a.out_dir + "/predictions.csv");
    return 0;
}

// --- evaluate ---

struct EvaluateArgs {
    CLI::App* sub = nullptr;
    CfgFlags flags;
    std::string pred_path, ref_path, data_dir, out_dir, buckets = "none";
    int bootstrap = kDefaultBootstrapReplicates;
};

int run_evaluate(const EvaluateArgs& a) {
    if (a.buckets != "none" && a.buckets != "staleness")
        throw ConfigError("unknown bucket scheme '" + a.buckets + "', expected none|staleness");
    const ExperimentConfig cfg = resolve_cfg(a.sub, a.flags);
    const std::vector<PredictionRow> preds = load_predictions(a.pred_path);
    if (preds.empty()) throw DataError("prediction file " + a.pred_path + " is empty");

    const Pipeline pipe = make_pipeline("evaluate", a.data_dir, cfg);
    std::map<std::string, int> label_of;
    std::map<std::string, const Article*> article_of;
    for (const std::vector<LabeledSample>* split :
         {&pipe.samples.train, &pipe.samples.validation, &pipe.samples.test}) {
        for (const LabeledSample& s : *split) {
            label_of[sample_id(s)] = s.label;
            article_of[sample_id(s)] = s.main;
        }
    }

    std::vector<double> scores;
    std::vector<int> labels;
    for (const PredictionRow& r : preds) {
        const auto it = label_of.find(r.sample_id);
        if (it == label_of.end())
            throw DataError("no label for prediction sample " + r.sample_id);
        scores.push_back(r.probability);
        labels.push_back(it->second);
    }

    std::optional<std::vector<double>> ref_scores;
    if (!a.ref_path.empty()) {
        const std::vector<PredictionRow> refs = load_predictions(a.ref_path);
        if (refs.size() != preds.size())
            throw DataError("reference covers " + std::to_string(refs.size()) +
                            " samples, predictions cover " + std::to_string(preds.size()));
        std::map<std::string, double> by_id;
        for (const PredictionRow& r : refs) by_id[r.sample_id] = r.probability;
        std::vector<double> aligned;
        for (const PredictionRow& r : preds) {
            const auto it = by_id.find(r.sample_id);
            if (it == by_id.end())
                throw DataError("reference predictions do not cover sample " + r.sample_id);
            aligned.push_back(it->second);
        }
        ref_scores = std::move(aligned);
    }

    std::string text, csv = "metric,bucket,n,pred,ref,delta,p_value\n";
    const double auc_pred = safe_auc(scores, labels);
    text += "samples:            " + std::to_string(scores.size()) + "\n";
    text += "auc:                " + fmt4(auc_pred) + "\n";
    csv += "auc,,"+ std::to_string(scores.size()) + "," + fmt(auc_pred) + ",,,\n";

    if (ref_scores) {
        const double auc_ref = safe_auc(*ref_scores, labels);
        const BootstrapResult boot = bootstrap_auc_significance(
            scores, *ref_scores, labels, a.bootstrap, derive_seed(cfg.seed, 31));
        text += "reference auc:      " + fmt4(auc_ref) + "\n";
        text += "auc delta:          " + fmt4(auc_pred - auc_ref) + "\n";
        text += "bootstrap p:        " + fmt4(boot.p_value) + "  (" +
                std::to_string(boot.replicates) + " replicates, mean delta " +
                fmt4(boot.mean_diff) + ")\n";
        csv += "auc_vs_ref,," + std::to_string(scores.size()) + "," + fmt(auc_pred) + "," +
               fmt(auc_ref) + "," + fmt(auc_pred - auc_ref) + "," + fmt(boot.p_value) + "\n";
    }

    if (a.buckets == "staleness") {
        std::vector<size_t> usable;
        std::vector<std::pair<std::string, double>> scored;
        int skipped = 0;
        for (size_t i = 0; i < preds.size(); ++i) {
            const Article* art = article_of.at(preds[i].sample_id);
            try {
                scored.emplace_back(preds[i].sample_id, pipe.retriever->staleness(*art));
                usable.push_back(i);
            } catch (const InsufficientHistoryError&) {
                ++skipped;
            }
        }
        if (usable.empty()) throw DataError("no predicted samples have staleness history");
        const std::vector<int> bucket_of = staleness_buckets(scored);
        text += "staleness skipped:  " + std::to_string(skipped) + "\n";
        for (int b = 0; b < 3; ++b) {
            std::vector<double> bp, br;
            std::vector<int> bl;
            double sum = 0.0;
            for (size_t k = 0; k < usable.size(); ++k) {
                if (bucket_of[k] != b) continue;
                bp.push_back(scores[usable[k]]);
                if (ref_scores) br.push_back((*ref_scores)[usable[k]]);
                bl.push_back(labels[usable[k]]);
                sum += scored[k].second;
            }
            const double mean_st = bp.empty() ? 0.0 : sum / double(bp.size());
            const double ap = safe_auc(bp, bl);
            text += "bucket " + std::to_string(b) + ": n=" + std::to_string(bp.size()) +
                    " mean_staleness=" + fmt4(mean_st) + " auc=" + fmt4(ap);
            std::string row = "staleness_auc," + std::to_string(b) + "," +
                              std::to_string(bp.size()) + "," + fmt(ap) + ",";
            if (ref_scores) {
                const double ar = safe_auc(br, bl);
                text += " ref=" + fmt4(ar) + " delta=" + fmt4(ap - ar);
                row += fmt(ar) + "," + fmt(ap - ar);
            } else {
                row += ",";
            }
            text += "\n";
            csv += row + ",\n";
        }
    }

    ensure_dir(a.out_dir);
    write_text(a.out_dir + "/report.txt", text);
    write_text(a.out_dir + "/report.csv", csv);
    write_resolved_config(a.out_dir, cfg);
    std::cerr << text;
    log_line("evaluate", "wrote " + a.out_dir + "/report.txt and report.csv");
    return 0;
}

// --- sweep-contexts ---

struct SweepArgs {
    CLI::App* sub = nullptr;
    CfgFlags flags;
    std::string data_dir, out_dir, checkpoint, depths = "0,1,2,5,10";
};

int run_sweep_contexts(const SweepArgs& a) {
    const ExperimentConfig cfg = resolve_cfg(a.sub, a.flags);
    const std::vector<int> depths = parse_int_list(a.depths);
    const Pipeline pipe = make_pipeline("sweep-contexts", a.data_dir, cfg);
    Model model = Model::load(a.checkpoint);

    const auto rows = context_sweep(pipe, model, pipe.samples.test, depths, cfg);
    std::string csv = "n_contexts,lm_loss,auc,used,skipped\n";
    std::string text = "n_contexts  lm_loss  auc     used  skipped\n";
    for (const ContextSweepRow& r : rows) {
        csv += std::to_string(r.depth) + "," + fmt(r.lm_loss) + "," + fmt(r.auc_value) + "," +
               std::to_string(r.used) + "," + std::to_string(r.skipped) + "\n";
        char line[128];
        std::snprintf(line, sizeof(line), "%-11d %-8s %-7s %-5d %d\n", r.depth,
                      fmt4(r.lm_loss).c_str(), fmt4(r.auc_value).c_str(), r.used, r.skipped);
        text += line;
    }
    ensure_dir(a.out_dir);
    write_text(a.out_dir + "/sweep_contexts.csv", csv);
    write_text(a.out_dir + "/report.txt", text);
    write_resolved_config(a.out_dir, cfg);
    std::cerr << text;
    log_line("sweep-contexts", "wrote " + a.out_dir + "/sweep_contexts.csv");
    return 0;
}

// --- ablate-alignment ---

struct AblateArgs {
    CLI::App* sub = nullptr;
    CfgFlags flags;
    std::string data_dir, out_dir, kinds = "linear,mlp,cma";
};

int run_ablate_alignment(const AblateArgs& a) {
    ExperimentConfig cfg = resolve_cfg(a.sub, a.flags);
    if (cfg.kind != ModelKind::Psc) {
        log_line("ablate-alignment", "forcing model kind to psc for the alignment grid");
        cfg.kind = ModelKind::Psc;
    }
    const std::vector<std::string> kind_names = parse_str_list(a.kinds);
    const Pipeline pipe = make_pipeline("ablate-alignment", a.data_dir, cfg);

    std::string csv = "align,val_auc,test_auc\n";
    std::string text = "align   val_auc  test_auc\n";
    for (const std::string& name : kind_names) {
        ExperimentConfig trial = cfg;
        trial.align = parse_align_kind(name);
        Model model = make_model(trial, pipe.tokenizer, trial.seed);
        const auto train = resolve_or_log("ablate-alignment", pipe, model, pipe.samples.train,
                                          "train", trial.n_contexts, trial);
        const auto val = resolve_or_log("ablate-alignment", pipe, model,
                                        pipe.samples.validation, "val", trial.n_contexts, trial);
        const auto test = resolve_or_log("ablate-alignment", pipe, model, pipe.samples.test,
                                         "test", trial.n_contexts, trial);
        if (trial.calm_epochs > 0) {
            CalmConfig cc;
            cc.epochs = trial.calm_epochs;
            cc.accum = trial.accum;
            cc.max_samples_per_epoch = trial.max_samples_per_epoch;
            cc.opt.lr = trial.calm_lr;
            cc.seed = derive_seed(trial.seed, 21);
            pretrain_calm(model, train, cc);
        }
        FinetuneConfig fc;
        fc.max_epochs = trial.max_epochs;
        fc.accum = trial.accum;
        fc.max_samples_per_epoch = trial.max_samples_per_epoch;
        fc.opt.lr = trial.ft_lr;
        fc.seed = derive_seed(trial.seed, 22);
        fc.lora_rank = trial.lora_rank;
        const FinetuneResult res = finetune(model, train, val, fc);
        const double test_auc = safe_auc(predict_probs(model, test), labels_of(test));

        csv += name + "," + fmt(res.best_val_auc) + "," + fmt(test_auc) + "\n";
        char line[96];
        std::snprintf(line, sizeof(line), "%-7s %-8s %s\n", name.c_str(),
                      fmt4(res.best_val_auc).c_str(), fmt4(test_auc).c_str());
        text += line;
        log_line("ablate-alignment", name + ": val AUC " + fmt4(res.best_val_auc) +
                                         ", test AUC " + fmt4(test_auc));
    }
    ensure_dir(a.out_dir);
    write_text(a.out_dir + "/ablation_alignment.csv", csv);
    write_text(a.out_dir + "/report.txt", text);
    write_resolved_config(a.out_dir, cfg);
    std::cerr << text;
    log_line("ablate-alignment", "wrote " + a.out_dir + "/ablation_alignment.csv");
    return 0;
}

// --- backtest ---

struct BacktestArgs {
    std::string pred_path, prices_path, universe_path, out_dir;
    PortfolioConfig cfg;
    bool momentum = false;
};

int run_backtest(const BacktestArgs& a) {
    if (!a.momentum && a.pred_path.empty())
        throw UsageError("backtest needs --pred unless --momentum is set");
    const PriceTable prices = load_prices(a.prices_path);
    const std::vector<UniverseRow> universe = load_universe(a.universe_path);
    BacktestReport rep;
    if (a.momentum) {
        rep = backtest_momentum(universe, prices, a.cfg);
    } else {
        const std::vector<PredictionRow> preds = load_predictions(a.pred_path);
        rep = backtest_predictions(preds, universe, prices, a.cfg);
    }

    std::string csv = "month,gross,net,turnover,n_long,n_short\n";
    for (const MonthResult& m : rep.months)
        csv += format_month(m.month_key) + "," + fmt(m.gross) + "," + fmt(m.net) + "," +
               fmt(m.turnover) + "," + std::to_string(m.n_long) + "," +
               std::to_string(m.n_short) + "\n";

    std::string text;
    text += "held months:        " + std::to_string(rep.months.size()) + "\n";
    text += "net return (ann):   " + fmt4(rep.ann_return_net) + "\n";
    text += "gross return (ann): " + fmt4(rep.ann_return_gross) + "\n";
    text += "volatility (ann):   " + fmt4(rep.ann_volatility) + "\n";
    text += "net sharpe:         " + fmt4(rep.sharpe) + "\n";
    text += "turnover (ann):     " + fmt4(rep.ann_turnover) + "\n";
    text += "cost drag (ann):    " + fmt4(rep.ann_cost) + "\n";
    text += "skipped months:     " + std::to_string(rep.skipped_months) + "\n";
    text += "missing returns:    " + std::to_string(rep.missing_returns) + "\n";

    ensure_dir(a.out_dir);
    write_text(a.out_dir + "/months.csv", csv);
    write_text(a.out_dir + "/report.txt", text);
    std::cerr << text;
    log_line("backtest", "wrote " + a.out_dir + "/report.txt and months.csv");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"historical-context news forecasting toolkit"};
    app.require_subcommand(1);

    GenDataArgs gen;
    gen.sub = app.add_subcommand("gen-data", "generate a synthetic article/price corpus");
    gen.sub->add_option("--config", gen.config_path, "generator config JSON");
    gen.sub->add_option("--seed", gen.seed, "generator seed");
    gen.sub->add_option("--out", gen.out_dir, "output directory")->required();
    gen.sub->add_option("--companies", gen.companies, "number of companies");
    gen.sub->add_option("--articles-per-company", gen.articles_per_company,
                        "articles per company");
    gen.sub->add_option("--context-weight", gen.context_weight,
                        "label weight on the antecedent rule, 0..1");
    gen.sub->add_option("--noise-sigma", gen.noise_sigma, "label noise scale");
    gen.sub->add_option("--chain-prob", gen.chain_prob, "probability an article is chained");
    gen.sub->add_option("--recent-antecedent-prob", gen.recent_antecedent_prob,
                        "antecedent recency bias");
    gen.sub->add_option("--min-gap-days", gen.min_gap_days, "min trading days between articles");
    gen.sub->add_option("--max-gap-days", gen.max_gap_days, "max trading days between articles");
    gen.sub->add_option("--start-date", gen.start_date, "first publication date YYYY-MM-DD");
    gen.sub->add_option("--price-pad-days", gen.price_pad_days,
                        "trading days of prices past the last article");

    IngestArgs ingest;
    CLI::App* ingest_sub =
        app.add_subcommand("ingest", "filter raw articles and stage a data directory");
    ingest_sub->add_option("--articles", ingest.articles_path, "articles JSONL")->required();
    ingest_sub->add_option("--prices", ingest.prices_path, "prices CSV")->required();
    ingest_sub->add_option("--out", ingest.out_dir, "output directory")->required();

    RetrieveArgs retrieve;
    CLI::App* retrieve_sub =
        app.add_subcommand("retrieve", "dump retrieved contexts per eligible article");
    retrieve_sub->add_option("--corpus", retrieve.corpus_dir, "data directory")->required();
    retrieve_sub->add_option("--kind", retrieve.kind, "recent|finsim|timefinsim");
    retrieve_sub->add_option("--n", retrieve.n, "contexts per article");
    retrieve_sub->add_option("--half-life", retrieve.half_life, "time-decay half-life in days");
    retrieve_sub->add_option("--out", retrieve.out_path, "output JSONL file")->required();

    TrainArgs pretrain;
    pretrain.sub = app.add_subcommand("pretrain", "align summaries with the frozen decoder");
    add_cfg_flags(pretrain.sub, pretrain.flags);
    pretrain.sub->add_option("--data", pretrain.data_dir, "data directory")->required();
    pretrain.sub->add_option("--out", pretrain.out_dir, "output directory")->required();

    TrainArgs ft;
    ft.sub = app.add_subcommand("finetune", "train the direction classifier");
    add_cfg_flags(ft.sub, ft.flags);
    ft.sub->add_option("--data", ft.data_dir, "data directory")->required();
    ft.sub->add_option("--out", ft.out_dir, "output directory")->required();
    ft.sub->add_option("--checkpoint", ft.checkpoint, "warm-start model checkpoint");

    PredictArgs predict;
    predict.sub = app.add_subcommand("predict", "score a split with a trained model");
    add_cfg_flags(predict.sub, predict.flags);
    predict.sub->add_option("--data", predict.data_dir, "data directory")->required();
    predict.sub->add_option("--checkpoint", predict.checkpoint, "model checkpoint")->required();
    predict.sub->add_option("--out", predict.out_dir, "output directory")->required();
    predict.sub->add_option("--split", predict.split, "train|validation|test");

    EvaluateArgs eval;
    eval.sub = app.add_subcommand("evaluate", "score predictions against labels");
    add_cfg_flags(eval.sub, eval.flags);
    eval.sub->add_option("--pred", eval.pred_path, "predictions CSV")->required();
    eval.sub->add_option("--ref", eval.ref_path, "reference predictions CSV to compare against");
    eval.sub->add_option("--data", eval.data_dir, "data directory")->required();
    eval.sub->add_option("--out", eval.out_dir, "output directory")->required();
    eval.sub->add_option("--buckets", eval.buckets, "none|staleness");
    eval.sub->add_option("--bootstrap", eval.bootstrap, "bootstrap replicates");

    SweepArgs sweep;
    sweep.sub = app.add_subcommand("sweep-contexts",
                                   "evaluate one checkpoint across retrieval depths");
    add_cfg_flags(sweep.sub, sweep.flags);
    sweep.sub->add_option("--data", sweep.data_dir, "data directory")->required();
    sweep.sub->add_option("--checkpoint", sweep.checkpoint, "model checkpoint")->required();
    sweep.sub->add_option("--out", sweep.out_dir, "output directory")->required();
    sweep.sub->add_option("--n", sweep.depths, "comma-separated context depths");

    AblateArgs ablate;
    ablate.sub = app.add_subcommand("ablate-alignment",
                                    "train one model per alignment kind and compare");
    add_cfg_flags(ablate.sub, ablate.flags);
    ablate.sub->add_option("--data", ablate.data_dir, "data directory")->required();
    ablate.sub->add_option("--out", ablate.out_dir, "output directory")->required();
    ablate.sub->add_option("--kinds", ablate.kinds, "comma-separated alignment kinds");

    BacktestArgs bt;
    CLI::App* bt_sub = app.add_subcommand("backtest", "long-short monthly portfolio simulation");
    bt_sub->add_option("--pred", bt.pred_path, "predictions CSV");
    bt_sub->add_option("--prices", bt.prices_path, "prices CSV")->required();
    bt_sub->add_option("--universe", bt.universe_path, "universe CSV")->required();
    bt_sub->add_option("--out", bt.out_dir, "output directory")->required();
    bt_sub->add_option("--cost-rate", bt.cfg.cost_rate, "cost per unit of annual turnover");
    bt_sub->add_option("--quantiles", bt.cfg.quantiles, "ranking quantiles");
    bt_sub->add_option("--horizon", bt.cfg.horizon, "prediction horizon to aggregate");
    bt_sub->add_option("--min-market-cap", bt.cfg.min_market_cap, "universe cap floor");
    bt_sub->add_option("--min-adv", bt.cfg.min_avg_daily_value, "universe liquidity floor");
    bt_sub->add_flag("--momentum", bt.momentum, "use 12-1 price momentum instead of predictions");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen.sub->parsed()) return run_gen_data(gen);
        if (ingest_sub->parsed()) return run_ingest(ingest);
        if (retrieve_sub->parsed()) return run_retrieve(retrieve);
        if (pretrain.sub->parsed()) return run_pretrain(pretrain);
        if (ft.sub->parsed()) return run_finetune(ft);
        if (predict.sub->parsed()) return run_predict(predict);
        if (eval.sub->parsed()) return run_evaluate(eval);
        if (sweep.sub->parsed()) return run_sweep_contexts(sweep);
        if (ablate.sub->parsed()) return run_ablate_alignment(ablate);
        if (bt_sub->parsed()) return run_backtest(bt);
        throw UsageError("no subcommand selected");
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.kind()) {
            case ErrorKind::Usage:
            case ErrorKind::Config:
                return 1;
            case ErrorKind::Data:
                return 2;
            case ErrorKind::Numeric:
                return 3;
        }
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
