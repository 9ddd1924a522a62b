#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "doctest.h"
#include "finctx/corpus.hpp"
#include "finctx/date.hpp"
#include "finctx/error.hpp"
#include "finctx/evaluation.hpp"
#include "finctx/synthetic.hpp"
#include "finctx/tokenizer.hpp"

using namespace finctx;

namespace {

std::string tmp_path(const std::string& name) {
    return std::string("/tmp/finctx_corpus_") + name + "." + std::to_string(getpid());
}

// all-letter filler body, length >= 101 chars, distinct per (topic, salt)
std::string article_text(const std::string& topic, int salt) {
    std::string s = "the company discussed " + topic + " in a briefing ";
    for (int i = 0; i < 20; ++i) {
        s += "filler";
        s += char('a' + salt % 26);
        s += char('a' + i % 26);
        s += ' ';
    }
    return s;
}

Article make_article(const std::string& id, const std::string& company, const Date& d, int minute,
                     const std::string& text) {
    Article a;
    a.id = id;
    a.company_id = company;
    a.industry = "tech";
    a.published_at = Timestamp{d, minute};
    a.text = text;
    return a;
}

const SyntheticCorpus& default_corpus() {
    static const SyntheticCorpus corp = [] {
        SyntheticConfig cfg;
        return generate_synthetic_corpus(cfg, 7);
    }();
    return corp;
}

// month_key consecutive across a year boundary
bool month_key_rolls_over() { return month_key({2020, 1, 1}) == month_key({2019, 12, 31}) + 1; }

std::vector<Article> save_and_reload(const std::string& path, const std::vector<Article>& arts) {
    save_articles(path, arts);
    return load_articles(path);
}

}  // namespace

TEST_CASE("civil date arithmetic matches known anchors") {
    CHECK(days_from_civil({1970, 1, 1}) == 0);
    CHECK(days_from_civil({2000, 1, 1}) == 10957);
    CHECK(days_from_civil({2000, 3, 1}) == 11017);
    CHECK(weekday({1970, 1, 1}) == 4);   // Thursday
    CHECK(weekday({2019, 1, 2}) == 3);   // Wednesday
    CHECK(weekday({2026, 8, 14}) == 5);  // Friday

    for (int64_t z = -400; z <= 40000; z += 97) {
        const Date d = civil_from_days(z);
        CHECK(days_from_civil(d) == z);
        CHECK(valid_date(d));
    }

    CHECK(valid_date({2020, 2, 29}));
    CHECK(valid_date({2000, 2, 29}));
    CHECK_FALSE(valid_date({2019, 2, 29}));
    CHECK_FALSE(valid_date({2100, 2, 29}));
    CHECK_FALSE(valid_date({2020, 13, 1}));
    CHECK_FALSE(valid_date({2020, 4, 31}));

    CHECK(add_days({2019, 12, 31}, 1) == Date{2020, 1, 1});
    CHECK(days_between({2019, 1, 2}, {2019, 1, 9}) == 7);
    CHECK(days_between({2019, 1, 9}, {2019, 1, 2}) == -7);
    CHECK(month_key({2019, 1, 15}) == 2019 * 12);
    CHECK(month_key({2019, 12, 1}) == 2019 * 12 + 11);
    CHECK(month_key_rolls_over());
}

TEST_CASE("date and timestamp parsing is strict") {
    CHECK(parse_date("2019-07-04") == Date{2019, 7, 4});
    CHECK(format_date({2019, 7, 4}) == "2019-07-04");
    CHECK_THROWS_AS(parse_date("2019-7-04"), DataError);
    CHECK_THROWS_AS(parse_date("2019-07-32"), DataError);
    CHECK_THROWS_AS(parse_date("20190704"), DataError);
    CHECK_THROWS_AS(parse_date("2019-07-04x"), DataError);

    const Timestamp t = parse_timestamp("2019-07-04T09:30");
    CHECK(t.date == Date{2019, 7, 4});
    CHECK(t.minute == 9 * 60 + 30);
    CHECK(parse_timestamp("2019-07-04T09:30:59").minute == 9 * 60 + 30);  // seconds dropped
    CHECK(format_timestamp(t) == "2019-07-04T09:30");
    CHECK_THROWS_AS(parse_timestamp("2019-07-04 09:30"), DataError);
    CHECK_THROWS_AS(parse_timestamp("2019-07-04T24:00"), DataError);
    CHECK_THROWS_AS(parse_timestamp("2019-07-04T09:61"), DataError);
}

TEST_CASE("weekday calendar arithmetic") {
    TradingCalendar cal;  // Mon-Fri
    CHECK(cal.is_trading_day({2019, 1, 2}));        // Wed
    CHECK_FALSE(cal.is_trading_day({2019, 1, 5}));  // Sat
    CHECK_FALSE(cal.is_trading_day({2019, 1, 6}));  // Sun
    CHECK(cal.next_trading_day({2019, 1, 4}) == Date{2019, 1, 7});  // Fri -> Mon
    CHECK(cal.roll_forward({2019, 1, 5}) == Date{2019, 1, 7});
    CHECK(cal.roll_forward({2019, 1, 7}) == Date{2019, 1, 7});

    CHECK(cal.shift({2019, 1, 2}, 0) == Date{2019, 1, 2});
    CHECK(cal.shift({2019, 1, 2}, 1) == Date{2019, 1, 3});
    CHECK(cal.shift({2019, 1, 2}, 7) == Date{2019, 1, 11});
    CHECK_THROWS_AS(cal.shift({2019, 1, 5}, 1), DataError);    // from non-trading day
    CHECK_THROWS_AS(cal.shift({2019, 1, 2}, -1), ConfigError);

    const auto days = cal.days_in_range({2019, 1, 2}, {2019, 1, 8});
    CHECK(days.size() == 5);  // Wed Thu Fri Mon Tue
    CHECK(days.front() == Date{2019, 1, 2});
    CHECK(days.back() == Date{2019, 1, 8});
}

TEST_CASE("explicit calendar replaces the weekday rule") {
    const Date a{2019, 1, 5};  // Saturday on purpose
    const Date b{2019, 1, 9};
    const Date c{2019, 1, 14};
    TradingCalendar cal({a, b, c});
    CHECK(cal.is_trading_day(a));
    CHECK_FALSE(cal.is_trading_day({2019, 1, 7}));  // a weekday, but not listed
    CHECK(cal.next_trading_day(a) == b);
    CHECK(cal.shift(a, 2) == c);
    CHECK_THROWS_AS(cal.next_trading_day(c), DataError);  // exhausted
    CHECK_THROWS_AS(TradingCalendar(std::vector<Date>{}), ConfigError);
}

TEST_CASE("publication times map to trading days around the open") {
    TradingCalendar cal;
    // Tuesday 09:15 -> same day; 09:30 inclusive; 09:31 -> next day
    CHECK(assign_trading_date({{2019, 1, 8}, 9 * 60 + 15}, cal) == Date{2019, 1, 8});
    CHECK(assign_trading_date({{2019, 1, 8}, 9 * 60 + 30}, cal) == Date{2019, 1, 8});
    CHECK(assign_trading_date({{2019, 1, 8}, 9 * 60 + 31}, cal) == Date{2019, 1, 9});
    // Saturday morning -> Monday; Friday evening -> Monday
    CHECK(assign_trading_date({{2019, 1, 5}, 8 * 60}, cal) == Date{2019, 1, 7});
    CHECK(assign_trading_date({{2019, 1, 4}, 16 * 60}, cal) == Date{2019, 1, 7});
}

TEST_CASE("text statistics oracles") {
    CHECK(numeric_char_ratio("abc123") == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(numeric_char_ratio("abcdef") == 0.0);
    CHECK(jaccard_words("alpha beta gamma", "beta gamma delta") == doctest::Approx(0.5));
    CHECK(jaccard_words("Alpha, BETA!", "alpha beta") == 1.0);  // case and punctuation ignored
    CHECK(jaccard_words("", "") == 1.0);
    CHECK(jaccard_words("alpha", "") == 0.0);

    const auto toks = word_tokens("Q3 Results: up 4.5%!");
    CHECK(toks == std::vector<std::string>{"q3", "results", "up", "4", "5"});
}

TEST_CASE("quality filters reject on exact boundaries") {
    const Date d{2019, 3, 4};
    std::vector<Article> arts;
    arts.push_back(make_article("a1", "c1", d, 600, std::string(100, 'x')));    // len 100: too short
    arts.push_back(make_article("a2", "c1", d, 601, std::string(101, 'x')));    // len 101: kept
    arts.push_back(make_article("a3", "c1", d, 602, std::string(10000, 'x')));  // too long
    arts.push_back(make_article("a4", "c1", d, 603, std::string(9999, 'x')));   // kept
    std::string digits20(20, '7'), letters180(180, 'y');
    arts.push_back(make_article("a5", "c1", d, 604, digits20 + letters180));  // ratio 0.10: rejected
    arts.push_back(make_article("a6", "c1", d, 605, digits20.substr(1) + letters180 + "z"));  // 0.095

    const FilteredCorpus fc = filter_articles(arts);
    std::set<std::string> kept;
    for (const Article& a : fc.articles) kept.insert(a.id);
    CHECK(kept == std::set<std::string>{"a2", "a4", "a6"});
    auto reason = [&](const std::string& id) {
        for (const auto& r : fc.rejections)
            if (r.id == id) return r.reason;
        return std::string("none");
    };
    CHECK(reason("a1") == "too-short");
    CHECK(reason("a3") == "too-long");
    CHECK(reason("a5") == "numeric-ratio");
}

TEST_CASE("near-duplicates drop later same-company copies only") {
    const std::string body = article_text("supply agreements", 1);
    std::vector<Article> arts;
    arts.push_back(make_article("dup2", "c1", {2019, 3, 5}, 600, body));  // later, rejected
    arts.push_back(make_article("orig", "c1", {2019, 3, 4}, 600, body));  // earliest survives
    arts.push_back(make_article("othr", "c2", {2019, 3, 6}, 600, body));  // other company kept
    arts.push_back(make_article("dif1", "c1", {2019, 3, 7}, 600, article_text("court filings", 2)));

    const FilteredCorpus fc = filter_articles(arts);
    std::set<std::string> kept;
    for (const Article& a : fc.articles) kept.insert(a.id);
    CHECK(kept == std::set<std::string>{"orig", "othr", "dif1"});
    bool found = false;
    for (const auto& r : fc.rejections)
        if (r.id == "dup2" && r.reason == "near-duplicate") found = true;
    CHECK(found);

    // same timestamp: the smaller id wins the dedup race
    std::vector<Article> tie;
    tie.push_back(make_article("b", "c1", {2019, 3, 4}, 600, body));
    tie.push_back(make_article("a", "c1", {2019, 3, 4}, 600, body));
    const FilteredCorpus ft = filter_articles(tie);
    REQUIRE(ft.articles.size() == 1);
    CHECK(ft.articles[0].id == "a");
}

TEST_CASE("history rule marks eligibility without removing context articles") {
    std::vector<Article> arts;
    Date d{2019, 1, 7};
    TradingCalendar cal;
    for (int i = 0; i < 8; ++i) {
        arts.push_back(make_article("h" + std::to_string(i), "c1", d, 600,
                                    article_text("milestone " + std::to_string(i), i)));
        d = cal.shift(d, 7);
    }
    const FilteredCorpus fc = filter_articles(arts);
    CHECK(fc.articles.size() == 8);  // all retained as context
    for (int i = 0; i < 5; ++i) CHECK_FALSE(fc.main_eligible.count("h" + std::to_string(i)));
    for (int i = 5; i < 8; ++i) CHECK(fc.main_eligible.count("h" + std::to_string(i)));
    int insufficient = 0;
    for (const auto& r : fc.rejections)
        if (r.reason == "insufficient-history") ++insufficient;
    CHECK(insufficient == 5);
}

TEST_CASE("history window boundary is 365 days inclusive") {
    std::vector<Article> arts;
    const Date main_day{2020, 3, 1};
    for (int i = 0; i < 5; ++i)
        arts.push_back(make_article("p" + std::to_string(i), "c1", add_days(main_day, -365 + i), 600,
                                    article_text("update " + std::to_string(i), i)));
    arts.push_back(make_article("main", "c1", main_day, 600, article_text("finale", 9)));
    CHECK(filter_articles(arts).main_eligible.count("main") == 1);

    // push the oldest predecessor one day out of the window
    arts[0].published_at.date = add_days(main_day, -366);
    CHECK(filter_articles(arts).main_eligible.count("main") == 0);
}

TEST_CASE("filtering is idempotent") {
    const SyntheticCorpus& corp = default_corpus();
    const FilteredCorpus once = filter_articles(corp.articles);
    const FilteredCorpus twice = filter_articles(once.articles);
    REQUIRE(once.articles.size() == twice.articles.size());
    for (size_t i = 0; i < once.articles.size(); ++i)
        CHECK(once.articles[i].id == twice.articles[i].id);
    CHECK(once.main_eligible == twice.main_eligible);
    // second pass re-logs only history ineligibility, no quality rejections
    for (const auto& r : twice.rejections) CHECK(r.reason == "insufficient-history");
}

TEST_CASE("labeling assigns splits and drops with reasons") {
    // prices: c1 on weekdays 2019-01-02..2019-02-28, engineered moves
    TradingCalendar wd;
    PriceTable prices;
    PriceSeries s;
    s.company_id = "c1";
    double close = 100.0;
    for (const Date& d : wd.days_in_range({2019, 1, 2}, {2019, 2, 28})) {
        s.points.push_back({d, close});
        close += 1.0;  // strictly rising
    }
    // make one exact zero move: next trading day after 2019-02-04 keeps the same close
    for (size_t i = 0; i + 1 < s.points.size(); ++i)
        if (s.points[i].date == Date{2019, 2, 4}) s.points[i + 1].close = s.points[i].close;
    prices.by_company["c1"] = s;
    TradingCalendar cal(prices.all_dates());

    int salt = 0;
    auto mk = [&](const std::string& id, Date d) {
        return make_article(id, "c1", d, 600, article_text(id, salt++));
    };
    std::vector<Article> arts;
    // five history articles so later ones are main-eligible
    for (int i = 0; i < 5; ++i) arts.push_back(mk("hist" + std::to_string(i), add_days({2019, 1, 2}, i)));
    arts.push_back(mk("train-ok", {2019, 1, 15}));
    arts.push_back(mk("zero-move", {2019, 2, 1}));  // Friday 10:00 -> trades Monday 02-04
    arts.push_back(mk("val-ok", {2019, 2, 5}));
    arts.push_back(mk("test-ok", {2019, 2, 17}));
    FilteredCorpus fc = filter_articles(arts);
    REQUIRE(fc.main_eligible.count("train-ok"));
    REQUIRE(fc.main_eligible.count("zero-move"));

    SplitSpec splits;
    splits.train_begin = {2019, 1, 2};
    splits.train_end = {2019, 1, 31};
    splits.val_begin = {2019, 2, 1};
    splits.val_end = {2019, 2, 14};
    splits.test_begin = {2019, 2, 15};
    splits.test_end = {2019, 2, 28};

    const SplitSamples ss = build_labeled_samples(fc, prices, cal, splits, 1);
    auto ids_of = [](const std::vector<LabeledSample>& v) {
        std::set<std::string> out;
        for (const auto& x : v) out.insert(x.main->id);
        return out;
    };
    CHECK(ids_of(ss.train).count("train-ok") == 1);
    CHECK(ids_of(ss.validation) == std::set<std::string>{"val-ok"});
    CHECK(ids_of(ss.test) == std::set<std::string>{"test-ok"});
    for (const auto& smp : ss.train) CHECK(smp.label == 1);  // rising prices

    auto drop_reason = [&](const std::string& id) {
        for (const auto& r : ss.dropped)
            if (r.id == id) return r.reason;
        return std::string("none");
    };
    CHECK(drop_reason("zero-move") == "zero-price-change");

    // a horizon-12 train window ends 2019-02-01, past train_end
    const SplitSamples ss12 = build_labeled_samples(fc, prices, cal, splits, 12);
    CHECK(drop_reason("train-ok") == "none");
    bool crossed = false;
    for (const auto& r : ss12.dropped)
        if (r.id == "train-ok" && r.reason == "window-crosses-split") crossed = true;
    CHECK(crossed);

    // no prices at all for the company
    FilteredCorpus fc2 = fc;
    PriceTable empty_prices;
    PriceSeries s2;
    s2.company_id = "zzz";
    s2.points.push_back({{2019, 1, 2}, 50.0});
    empty_prices.by_company["zzz"] = s2;
    const SplitSamples ssm = build_labeled_samples(fc2, empty_prices, cal, splits, 1);
    CHECK(ssm.train.empty());
    bool missing = false;
    for (const auto& r : ssm.dropped)
        if (r.reason == "missing-price") missing = true;
    CHECK(missing);
}

TEST_CASE("price move sign oracle") {
    TradingCalendar cal;
    PriceTable prices;
    PriceSeries s;
    s.company_id = "c1";
    s.points = {{{2019, 1, 2}, 100.0}, {{2019, 1, 3}, 99.0}, {{2019, 1, 4}, 99.0}};
    prices.by_company["c1"] = s;
    CHECK(price_move_sign(prices, "c1", {2019, 1, 2}, 1, cal) == 1 * -1);
    CHECK(price_move_sign(prices, "c1", {2019, 1, 3}, 1, cal) == 0);
    CHECK_FALSE(price_move_sign(prices, "c1", {2019, 1, 4}, 1, cal).has_value());  // end missing
    CHECK_FALSE(price_move_sign(prices, "nope", {2019, 1, 2}, 1, cal).has_value());
}

TEST_CASE("class balancing is exact, deterministic, and order-preserving") {
    TradingCalendar cal;
    std::vector<Article> storage;
    auto mk_sample = [&](int i, int label) {
        storage.push_back(make_article("s" + std::to_string(i), "c1", add_days({2019, 1, 7}, i), 600,
                                       article_text("n", i)));
        LabeledSample s;
        s.label = label;
        s.trading_date = storage.back().published_at.date;
        s.horizon = 1;
        return s;
    };
    storage.reserve(16);
    std::vector<LabeledSample> samples;
    for (int i = 0; i < 6; ++i) samples.push_back(mk_sample(i, +1));
    for (int i = 6; i < 9; ++i) samples.push_back(mk_sample(i, -1));
    for (size_t i = 0; i < samples.size(); ++i) samples[i].main = &storage[i];

    std::vector<LabeledSample> a = samples, b = samples;
    balance_classes(a, 42);
    balance_classes(b, 42);
    REQUIRE(a.size() == 6);
    int pos = 0, neg = 0;
    for (const auto& s : a) (s.label > 0 ? pos : neg)++;
    CHECK(pos == 3);
    CHECK(neg == 3);
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].main->id == b[i].main->id);
    // survivors keep their original relative order
    std::vector<std::string> surv;
    for (const auto& s : a) surv.push_back(s.main->id);
    std::vector<std::string> orig;
    for (const auto& s : samples)
        if (std::find(surv.begin(), surv.end(), s.main->id) != surv.end()) orig.push_back(s.main->id);
    CHECK(surv == orig);

    std::vector<LabeledSample> one_class(samples.begin(), samples.begin() + 3);
    CHECK_THROWS_AS(balance_classes(one_class, 1), DataError);
}

TEST_CASE("article and price files round-trip") {
    const SyntheticCorpus& corp = default_corpus();
    const std::string apath = tmp_path("articles.jsonl");
    const std::string ppath = tmp_path("prices.csv");

    std::vector<Article> subset(corp.articles.begin(), corp.articles.begin() + 40);
    save_articles(apath, subset);
    const auto loaded = load_articles(apath);
    REQUIRE(loaded.size() == subset.size());
    for (size_t i = 0; i < subset.size(); ++i) {
        CHECK(loaded[i].id == subset[i].id);
        CHECK(loaded[i].company_id == subset[i].company_id);
        CHECK(loaded[i].industry == subset[i].industry);
        CHECK(loaded[i].published_at == subset[i].published_at);
        CHECK(loaded[i].text == subset[i].text);
    }

    save_prices(ppath, corp.prices);
    const PriceTable pr = load_prices(ppath);
    REQUIRE(pr.by_company.size() == corp.prices.by_company.size());
    for (const auto& [company, series] : corp.prices.by_company) {
        const PriceSeries* got = pr.find(company);
        REQUIRE(got != nullptr);
        REQUIRE(got->points.size() == series.points.size());
        for (size_t i = 0; i < series.points.size(); ++i) {
            CHECK(got->points[i].date == series.points[i].date);
            CHECK(got->points[i].close == series.points[i].close);  // %.17g is lossless
        }
    }
    std::remove(apath.c_str());
    std::remove(ppath.c_str());
}

TEST_CASE("article loader rejects duplicate ids") {
    const std::string path = tmp_path("bad.jsonl");
    std::vector<Article> two;
    two.push_back(make_article("x", "c", {2019, 1, 2}, 600, article_text("a", 1)));
    two.push_back(make_article("x", "c", {2019, 1, 3}, 600, article_text("b", 2)));
    CHECK_THROWS_AS(save_and_reload(path, two), DataError);
    std::remove(path.c_str());
}

TEST_CASE("tokenizer vocabulary ranking and specials") {
    Tokenizer tok = Tokenizer::fit({"b b b a a c", "a d."}, 8);
    // specials first, then by frequency (a:3, b:3 tie -> lexicographic), c, d, '.'
    const auto& v = tok.vocab();
    REQUIRE(v.size() >= 6);
    CHECK(v[0] == "<unk>");
    CHECK(v[1] == "<bos>");
    CHECK(v[2] == "<doc>");
    CHECK(v[3] == "a");
    CHECK(v[4] == "b");
    CHECK(tok.encode("a b zebra")[2] == Tokenizer::kUnk);
    CHECK(tok.decode(tok.encode("a b c")) == "a b c");

    Tokenizer capped = Tokenizer::fit({"e f g h i j k l"}, 6);
    CHECK(capped.vocab_size() == 6);

    const Tokenizer same = Tokenizer::from_vocab(tok.vocab());
    CHECK(same.encode("a b c d") == tok.encode("a b c d"));
    CHECK_THROWS_AS(Tokenizer::from_vocab({"nope", "<bos>", "<doc>", "a"}), DataError);
    CHECK_THROWS_AS(Tokenizer::fit({"a"}, 3), ConfigError);
}

TEST_CASE("generator is deterministic and structurally sound") {
    SyntheticConfig cfg;
    cfg.companies = 6;
    cfg.articles_per_company = 10;
    const SyntheticCorpus a = generate_synthetic_corpus(cfg, 123);
    const SyntheticCorpus b = generate_synthetic_corpus(cfg, 123);
    const SyntheticCorpus c = generate_synthetic_corpus(cfg, 124);

    REQUIRE(a.articles.size() == 60);
    REQUIRE(a.truth.size() == 60);
    REQUIRE(a.companies.size() == 6);
    CHECK(a.articles.size() == b.articles.size());
    for (size_t i = 0; i < a.articles.size(); ++i) {
        CHECK(a.articles[i].id == b.articles[i].id);
        CHECK(a.articles[i].text == b.articles[i].text);
        CHECK(a.articles[i].published_at == b.articles[i].published_at);
    }
    bool differs = false;
    for (size_t i = 0; i < a.articles.size() && !differs; ++i)
        differs = a.articles[i].text != c.articles[i].text;
    CHECK(differs);

    // articles ordered by (published_at, id); truth by id; ids unique
    std::set<std::string> ids;
    for (size_t i = 0; i < a.articles.size(); ++i) {
        ids.insert(a.articles[i].id);
        if (i > 0) {
            const bool ordered =
                a.articles[i - 1].published_at < a.articles[i].published_at ||
                (a.articles[i - 1].published_at == a.articles[i].published_at &&
                 a.articles[i - 1].id < a.articles[i].id);
            CHECK(ordered);
        }
    }
    CHECK(ids.size() == a.articles.size());

    // antecedents are earlier same-company articles
    std::map<std::string, const Article*> by_id;
    for (const Article& art : a.articles) by_id[art.id] = &art;
    for (const TruthRecord& t : a.truth) {
        REQUIRE(by_id.count(t.id));
        if (!t.antecedent_id.empty()) {
            REQUIRE(by_id.count(t.antecedent_id));
            const Article* m = by_id[t.id];
            const Article* ante = by_id[t.antecedent_id];
            CHECK(ante->company_id == m->company_id);
            CHECK(ante->published_at < m->published_at);
            CHECK(t.antecedent_event >= 0);
        } else {
            CHECK(t.antecedent_event == -1);
        }
        CHECK((t.label == 1 || t.label == -1));
    }
}

TEST_CASE("generated labels equal realized price-move signs at horizon 7") {
    const SyntheticCorpus& corp = default_corpus();
    TradingCalendar cal;  // generator prices live on weekdays
    std::map<std::string, const TruthRecord*> truth_by_id;
    for (const TruthRecord& t : corp.truth) truth_by_id[t.id] = &t;
    int checked = 0;
    for (const Article& a : corp.articles) {
        const Date t = assign_trading_date(a.published_at, cal);
        const auto sign = price_move_sign(corp.prices, a.company_id, t, 7, cal);
        REQUIRE(sign.has_value());
        CHECK(*sign == truth_by_id.at(a.id)->label);
        ++checked;
    }
    CHECK(checked == int(corp.articles.size()));
}

TEST_CASE("generated corpus passes the quality filters at scale") {
    const SyntheticCorpus& corp = default_corpus();
    REQUIRE(corp.articles.size() == 2400);
    const FilteredCorpus fc = filter_articles(corp.articles);
    CHECK(fc.articles.size() >= 2300);       // quality filters pass nearly everything
    CHECK(fc.main_eligible.size() >= 1800);  // history rule costs the head of each chain
    std::map<std::string, int> by_reason;
    for (const auto& r : fc.rejections) by_reason[r.reason]++;
    int quality = 0;
    for (const auto& [reason, n] : by_reason)
        if (reason != "insufficient-history") quality += n;
    CHECK(quality <= 20);  // templated texts collide only rarely
}

TEST_CASE("context carries label information exactly when weighted") {
    const SyntheticCorpus& corp = default_corpus();  // w = 0.6, sigma = 0.5
    std::vector<double> single, context;
    std::vector<int> labels;
    for (const TruthRecord& t : corp.truth) {
        single.push_back(t.p_single);
        context.push_back(t.p_context);
        labels.push_back(t.label);
    }
    const double auc_single = auc(single, labels);
    const double auc_context = auc(context, labels);
    // analytic values approx 0.661 and 0.897 for these weights
    CHECK(auc_single > 0.61);
    CHECK(auc_single < 0.71);
    CHECK(auc_context > 0.85);
    CHECK(auc_context < 0.94);
    CHECK(auc_context - auc_single > 0.15);

    SyntheticConfig flat;
    flat.companies = 10;
    flat.articles_per_company = 20;
    flat.context_weight = 0.0;
    const SyntheticCorpus none = generate_synthetic_corpus(flat, 5);
    for (const TruthRecord& t : none.truth)
        CHECK(t.p_single == doctest::Approx(t.p_context).epsilon(1e-12));

    SyntheticConfig pure;
    pure.companies = 10;
    pure.articles_per_company = 20;
    pure.context_weight = 1.0;
    pure.noise_sigma = 0.0;
    const SyntheticCorpus oracle = generate_synthetic_corpus(pure, 5);
    std::vector<double> pc;
    std::vector<int> pl;
    for (const TruthRecord& t : oracle.truth) {
        CHECK((t.p_context == 0.0 || t.p_context == 1.0));
        pc.push_back(t.p_context);
        pl.push_back(t.label);
    }
    CHECK(auc(pc, pl) == 1.0);
}

TEST_CASE("generator validates its configuration") {
    SyntheticConfig bad;
    bad.companies = 0;
    CHECK_THROWS_AS(generate_synthetic_corpus(bad, 1), ConfigError);
    bad = SyntheticConfig{};
    bad.min_gap_days = 5;  // would break label exactness
    CHECK_THROWS_AS(generate_synthetic_corpus(bad, 1), ConfigError);
    bad = SyntheticConfig{};
    bad.context_weight = 1.5;
    CHECK_THROWS_AS(generate_synthetic_corpus(bad, 1), ConfigError);
    bad = SyntheticConfig{};
    bad.noise_sigma = -0.1;
    CHECK_THROWS_AS(generate_synthetic_corpus(bad, 1), ConfigError);
}

TEST_CASE("truth and company sidecars round-trip") {
    const SyntheticCorpus& corp = default_corpus();
    const std::string tpath = tmp_path("truth.jsonl");
    const std::string cpath = tmp_path("companies.csv");
    save_truth(tpath, corp.truth);
    const auto truth = load_truth(tpath);
    REQUIRE(truth.size() == corp.truth.size());
    for (size_t i = 0; i < truth.size(); ++i) {
        CHECK(truth[i].id == corp.truth[i].id);
        CHECK(truth[i].event == corp.truth[i].event);
        CHECK(truth[i].antecedent_id == corp.truth[i].antecedent_id);
        CHECK(truth[i].label == corp.truth[i].label);
        CHECK(truth[i].score == corp.truth[i].score);
        CHECK(truth[i].p_context == corp.truth[i].p_context);
    }
    save_company_meta(cpath, corp.companies);
    const auto comps = load_company_meta(cpath);
    REQUIRE(comps.size() == corp.companies.size());
    for (size_t i = 0; i < comps.size(); ++i) {
        CHECK(comps[i].company_id == corp.companies[i].company_id);
        CHECK(comps[i].industry == corp.companies[i].industry);
        CHECK(comps[i].market_cap == corp.companies[i].market_cap);
        CHECK(comps[i].avg_daily_value == corp.companies[i].avg_daily_value);
    }
    std::remove(tpath.c_str());
    std::remove(cpath.c_str());
}
