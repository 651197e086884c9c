#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "alo/errors.hpp"
#include "alo/harness.hpp"

using namespace alo;
namespace fs = std::filesystem;

namespace {

harness::ExperimentConfig tiny_classifier() {
    harness::ExperimentConfig c;
    c.class_data.n_train = 600;
    c.class_data.n_test = 200;
    c.epochs = 2;
    c.batch_size = 32;
    c.hidden = 8;
    c.seeds = {7};
    return c;
}

harness::ExperimentConfig tiny_span() {
    harness::ExperimentConfig c;
    c.task = harness::Task::span;
    c.span_data.n_train = 200;
    c.span_data.n_dev_per_sentence = 20;
    c.epochs = 1;
    c.batch_size = 32;
    c.span_hidden = 8;
    c.seeds = {7};
    return c;
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("alo_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const metrics::ResultRow& find_row(const std::vector<metrics::ResultRow>& rows, const std::string& split,
                                   const std::string& metric) {
    for (const auto& r : rows)
        if (r.split == split && r.metric == metric) return r;
    throw std::runtime_error("row not found: " + split + "/" + metric);
}

}  // namespace

TEST_CASE("config files") {
    std::istringstream is(
        "# shared\n"
        "seeds = 1, 2\n"
        "epochs = 3\n"
        "\n"
        "[a]\n"
        "loss = alo\n"
        "lag = 5\n"
        "[b]\n"
        "strategy = lm\n"
        "epochs = 4\n"
        "data.prior_strength = 0.5\n");
    const auto doc = config::parse(is);
    REQUIRE(doc.sections.size() == 2);
    const auto a = harness::from_key_values(doc.sections[0].second);
    const auto b = harness::from_key_values(doc.sections[1].second);
    CHECK(a.loss.kind == loss::LossKind::alo);
    CHECK(a.loss.lag == 5);
    CHECK(a.loss_label() == "alo_lag5");
    CHECK(a.seeds == std::vector<std::uint64_t>{1, 2});
    CHECK(a.epochs == 3);
    CHECK(b.epochs == 4);
    CHECK(b.method() == "classifier+learned_mixin");
    CHECK(b.class_data.prior_strength == 0.5);

    config::KeyValues bad;
    bad.set("colour", "red");
    CHECK_THROWS_AS(harness::from_key_values(bad), ConfigError);
    config::KeyValues bad_num;
    bad_num.set("epochs", "ten");
    CHECK_THROWS_AS(harness::from_key_values(bad_num), ConfigError);
    std::istringstream garbage("just words\n");
    CHECK_THROWS_AS(config::parse(garbage), ParseError);
}

TEST_CASE("config validation") {
    auto c = tiny_classifier();
    c.batch_size = 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny_classifier();
    c.seeds.clear();
    CHECK_THROWS_AS(c.validate(), ConfigError);
    auto s = tiny_span();
    s.strategy = debias::Strategy::cf_variant;
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("traces record the loose factor") {
    auto c = tiny_classifier();
    const auto data = harness::make_class_data(c, 7);
    SUBCASE("ce") {
        const auto run = harness::train_classifier(c, 7, data);
        REQUIRE_FALSE(run.trace.empty());
        for (const auto& t : run.trace) {
            CHECK(t.gamma == 1.0);
            CHECK(t.scaled_loss == t.base_loss);
        }
    }
    SUBCASE("alo") {
        c.loss.kind = loss::LossKind::alo;
        const auto run = harness::train_classifier(c, 7, data);
        CHECK(run.trace.size() == 2 * ((600 + 31) / 32));
        for (const auto& t : run.trace) {
            CHECK(t.gamma > 0.0);
            CHECK(t.gamma <= 0.999);
            CHECK(std::isfinite(t.base_loss));
            CHECK(t.scaled_loss == doctest::Approx(t.gamma * t.base_loss).epsilon(1e-14));
        }
        CHECK(run.trace[0].gamma == 0.999);
    }
    SUBCASE("span") {
        auto s = tiny_span();
        s.loss.kind = loss::LossKind::alo;
        const auto run = harness::train_span(s, 7, harness::make_span_data(s, 7));
        for (const auto& t : run.trace) CHECK((t.gamma > 0.0 && t.gamma <= 0.999));
    }
}

TEST_CASE("training is a pure function of config and seed") {
    auto c = tiny_classifier();
    c.loss.kind = loss::LossKind::alo;
    c.strategy = debias::Strategy::learned_mixin;
    const auto a = harness::run_one(c, 7), b = harness::run_one(c, 7), other = harness::run_one(c, 8);
    CHECK(a.trace == b.trace);
    CHECK(a.rows == b.rows);
    CHECK(a.checkpoint == b.checkpoint);
    CHECK(a.trace != other.trace);
}

TEST_CASE("every strategy trains on both tasks") {
    using debias::Strategy;
    for (auto st : {Strategy::none, Strategy::rubi, Strategy::bias_product, Strategy::learned_mixin, Strategy::cf_full,
                    Strategy::cf_variant}) {
        for (auto lk : {loss::LossKind::ce, loss::LossKind::alo, loss::LossKind::focal}) {
            auto c = tiny_classifier();
            c.epochs = 1;
            c.strategy = st;
            c.loss.kind = lk;
            const auto out = harness::run_one(c, 3);
            CHECK(out.rows.size() == 5);
            for (const auto& r : out.rows) CHECK((r.value >= 0.0 && r.value <= 1.0));
            if (st == Strategy::cf_variant) continue;
            auto s = tiny_span();
            s.strategy = st;
            s.loss.kind = lk;
            CHECK(harness::run_one(s, 3).rows.size() == 5 * 2 + 3);
        }
    }
}

TEST_CASE("evaluation rows") {
    auto c = tiny_classifier();
    c.class_data.prior_strength = 0.0;
    c.class_data.n_test = 4000;
    const auto data = harness::make_class_data(c, 7);

    SUBCASE("zero-initialized model sits at chance") {
        auto model = models::ClassifierModel::init({16, 8, 16, 8, 2}, 1);
        models::zero_params(model.named_params());
        const auto rows = harness::evaluate_classifier(c, 7, model, data);
        CHECK(std::abs(find_row(rows, "id_test", "accuracy").value - 1.0 / 16.0) < 0.03);
        CHECK(std::abs(find_row(rows, "ood_test", "accuracy").value - 1.0 / 16.0) < 0.03);
    }
    SUBCASE("overall row is the harmonic mean of its parts") {
        const auto run = harness::train_classifier(c, 7, data);
        const auto rows = harness::evaluate_classifier(c, 7, run.model, data);
        const double id = find_row(rows, "id_test", "accuracy").value;
        const double ood = find_row(rows, "ood_test", "accuracy").value;
        CHECK(find_row(rows, "overall", "hm_accuracy").value == doctest::Approx(2.0 * id * ood / (id + ood)));
        CHECK(find_row(rows, "id_test", "open_ended_accuracy").value <= id);
    }
    SUBCASE("span rows") {
        auto s = tiny_span();
        const auto sd = harness::make_span_data(s, 7);
        const auto run = harness::train_span(s, 7, sd);
        const auto rows = harness::evaluate_span(s, 7, run.model, sd);
        CHECK(find_row(rows, "id", "f1").value == find_row(rows, "dev_k1", "f1").value);
        const double id = find_row(rows, "id", "f1").value, ood = find_row(rows, "ood", "f1").value;
        if (id > 0 && ood > 0) CHECK(find_row(rows, "overall", "hm_f1").value == doctest::Approx(2 * id * ood / (id + ood)));
        double pooled = 0.0;
        for (int k = 2; k <= 5; ++k) pooled += find_row(rows, "dev_k" + std::to_string(k), "f1").value;
        CHECK(ood == doctest::Approx(pooled / 4.0).epsilon(1e-9));
    }
}

TEST_CASE("divergence is reported as a run error") {
    auto c = tiny_classifier();
    auto data = harness::make_class_data(c, 7);
    data.train.samples[3].context_features[0] = std::nan("");
    CHECK_THROWS_AS(harness::train_classifier(c, 7, data), RunError);
}

TEST_CASE("result rows round trip") {
    const std::vector<metrics::ResultRow> rows{{"classifier", "alo", "none", 1337, "id_test", "accuracy", 0.9876543},
                                               {"span+bias_product", "ce", "bias_product", 2, "overall", "hm_f1", 0.5}};
    for (auto fmt : {harness::Format::csv, harness::Format::json}) {
        std::stringstream ss;
        harness::write_rows(ss, rows, fmt);
        const auto back = harness::read_rows(ss, fmt);
        REQUIRE(back.size() == 2);
        CHECK(back[0].value == 0.987654);
        CHECK(back[1] == rows[1]);
        std::stringstream again;
        harness::write_rows(again, back, fmt);
        std::stringstream first;
        harness::write_rows(first, rows, fmt);
        CHECK(again.str() == first.str());
    }
    std::stringstream csv;
    harness::write_rows(csv, rows, harness::Format::csv);
    CHECK(csv.str().rfind("method,loss,strategy,seed,split,metric,value\n", 0) == 0);

    const std::vector<harness::TraceRow> trace{{0, 0.1, 0.999, 0.0999}, {1, 1.0 / 3.0, 0.3, 0.1}};
    std::stringstream ts;
    harness::write_trace(ts, trace);
    CHECK(harness::read_trace(ts) == trace);
}

TEST_CASE("grid runner") {
    SUBCASE("empty grid still writes a header") {
        const auto dir = scratch("empty");
        const auto res = harness::grid_run({}, dir, harness::Format::csv);
        CHECK(res.run_files.empty());
        CHECK(slurp(res.aggregate_file) == "method,loss,strategy,split,metric,mean,std,n\n");
        fs::remove_all(dir);
    }
    SUBCASE("two configs by two seeds") {
        const auto dir = scratch("grid");
        auto a = tiny_classifier(), b = tiny_classifier();
        a.seeds = b.seeds = {1, 2};
        b.loss.kind = loss::LossKind::alo;
        const auto res = harness::grid_run({a, b}, dir, harness::Format::csv);
        CHECK(res.run_files.size() == 4);
        CHECK(res.failures.empty());
        std::size_t files = 0;
        for (const auto& e : fs::directory_iterator(dir)) files += e.is_regular_file();
        CHECK(files == 5);
        CHECK(fs::exists(dir / "traces" / "classifier_alo_seed2.csv"));
        CHECK(fs::exists(dir / "checkpoints" / "classifier_ce_seed1.ckpt"));

        // recompute the aggregate from the run files
        std::map<std::string, std::vector<double>> groups;
        for (const auto& f : res.run_files) {
            std::ifstream in(f);
            for (const auto& r : harness::read_rows(in, harness::Format::csv))
                groups[r.method + "," + r.loss + "," + r.strategy + "," + r.split + "," + r.metric].push_back(r.value);
        }
        std::ifstream agg(res.aggregate_file);
        std::string line;
        std::getline(agg, line);
        std::size_t seen = 0;
        while (std::getline(agg, line)) {
            std::vector<std::string> f;
            std::stringstream ls(line);
            for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
            REQUIRE(f.size() == 8);
            const auto& v = groups.at(f[0] + "," + f[1] + "," + f[2] + "," + f[3] + "," + f[4]);
            REQUIRE(v.size() == 2);
            const double mean = (v[0] + v[1]) / 2.0;
            const double sd = std::sqrt(((v[0] - mean) * (v[0] - mean) + (v[1] - mean) * (v[1] - mean)) / 1.0);
            CHECK(std::stod(f[5]) == doctest::Approx(mean).epsilon(1e-6));
            CHECK(std::abs(std::stod(f[6]) - sd) < 2e-6);
            CHECK(f[7] == "2");
            ++seen;
        }
        CHECK(seen == groups.size());
        fs::remove_all(dir);
    }
    SUBCASE("failed runs are listed and the rest still aggregate") {
        const auto dir = scratch("fail");
        auto good = tiny_classifier();
        auto bad = tiny_span();
        bad.loss.state_source = loss::StateSource::main;
        const auto res = harness::grid_run({good, bad}, dir, harness::Format::csv);
        CHECK(res.run_files.size() == 1);
        REQUIRE(res.failures.size() == 1);
        CHECK(res.failures[0].label == "span_ce");
        CHECK(slurp(res.aggregate_file).find("#failure,span_ce,7,") != std::string::npos);
        fs::remove_all(dir);
    }
    SUBCASE("json aggregate") {
        const auto dir = scratch("json");
        const auto res = harness::grid_run({tiny_classifier()}, dir, harness::Format::json);
        const auto text = slurp(res.aggregate_file);
        CHECK(text.find("\"rows\"") != std::string::npos);
        CHECK(text.find("\"failures\"") != std::string::npos);
        CHECK(res.run_files[0].extension() == ".json");
        fs::remove_all(dir);
    }
    SUBCASE("duplicate labels") {
        CHECK_THROWS_AS(harness::grid_run({tiny_classifier(), tiny_classifier()}, scratch("dup"), harness::Format::csv),
                        ConfigError);
    }
    SUBCASE("serial and parallel grids agree") {
        const auto d1 = scratch("par"), d2 = scratch("ser");
        auto a = tiny_classifier();
        a.seeds = {1, 2, 3};
        const auto r1 = harness::grid_run({a}, d1, harness::Format::csv, true);
        const auto r2 = harness::grid_run({a}, d2, harness::Format::csv, false);
        CHECK(slurp(r1.aggregate_file) == slurp(r2.aggregate_file));
        fs::remove_all(d1);
        fs::remove_all(d2);
    }
}

TEST_CASE("lag ablation") {
    auto base = tiny_classifier();
    base.loss.kind = loss::LossKind::alo;
    const auto dir = scratch("lag");
    const auto res = harness::ablate_lag(base, {1, 20}, dir, harness::Format::csv);
    REQUIRE(res.runs.size() == 2);
    const auto def = harness::run_one(base, 7);
    CHECK(res.runs[0].trace == def.trace);
    CHECK(res.runs[0].rows == def.rows);
    CHECK(harness::clamp_saturation_count(res.runs[1].trace, 0.999) >
          harness::clamp_saturation_count(res.runs[0].trace, 0.999));
    CHECK(res.runs[1].label == "classifier_lag20");
    CHECK(res.runs[1].rows[0].loss == "alo_lag20");
    CHECK_THROWS_AS(harness::lag_configs(base, {0}), ConfigError);
    CHECK_THROWS_AS(harness::lag_configs(base, {21}), ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("counterfactual subtraction helps out of distribution") {
    harness::ExperimentConfig c;
    c.strategy = debias::Strategy::cf_full;
    for (std::uint64_t seed : harness::kDefaultSeeds) {
        const auto data = harness::make_class_data(c, seed);
        const auto run = harness::train_classifier(c, seed, data);
        auto c0 = c;
        c0.cf_c = 0.0;
        const double with = find_row(harness::evaluate_classifier(c, seed, run.model, data), "ood_test", "accuracy").value;
        const double without = find_row(harness::evaluate_classifier(c0, seed, run.model, data), "ood_test", "accuracy").value;
        CHECK(with > without);
    }
}

TEST_CASE("shipped config files load") {
    const fs::path dir = fs::path(ALO_SOURCE_DIR) / "configs";
    const auto cls = harness::load_grid((dir / "classification.ini").string());
    CHECK(cls.size() == 10);
    CHECK(cls[1].label() == "base_alo");
    const auto span = harness::load_grid((dir / "span.ini").string());
    CHECK(span.size() == 5);
    for (const auto& c : span) CHECK(c.task == harness::Task::span);
    CHECK(harness::load_grid((dir / "single.ini").string()).size() == 1);
}
