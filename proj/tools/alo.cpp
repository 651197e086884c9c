// Command-line driver: dataset generation, single runs, grids, lag ablation
// and result aggregation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "alo/errors.hpp"
#include "alo/harness.hpp"

namespace fs = std::filesystem;
using namespace alo;

namespace {

harness::ExperimentConfig load_single(const std::string& path) {
    if (path.empty()) return harness::from_key_values({});
    const auto doc = config::parse_file(path);
    if (!doc.sections.empty()) throw ConfigError("expected a single-run config without [sections]: " + path);
    return harness::from_key_values(doc.defaults);
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << s;
}

int cmd_gen(const std::string& cfg_path, std::optional<std::uint64_t> seed, const fs::path& out_dir) {
    auto cfg = load_single(cfg_path);
    const std::uint64_t s = seed.value_or(cfg.data_seed.value_or(cfg.seeds.front()));
    fs::create_directories(out_dir);
    auto dump = [&](const std::string& name, const auto& ds) {
        std::ofstream out(out_dir / (name + ".jsonl"), std::ios::binary);
        data::serialize(out, ds);
        std::cout << (out_dir / (name + ".jsonl")).string() << " (" << ds.samples.size() << " samples)\n";
    };
    if (cfg.task == harness::Task::classification) {
        const auto splits = data::gen_vqa_like(cfg.class_data, s);
        dump("train", splits.train);
        dump("id_test", splits.id_test);
        dump("ood_test", splits.ood_test);
    } else {
        const auto splits = data::gen_span_like(cfg.span_data, s);
        dump(splits.train_k.split, splits.train_k);
        for (const auto& d : splits.dev_by_sentence) dump(d.split, d);
    }
    return 0;
}

int cmd_train(const std::string& cfg_path, std::optional<std::uint64_t> seed, const fs::path& out_dir, harness::Format fmt) {
    auto cfg = load_single(cfg_path);
    if (seed) cfg.seeds = {*seed};
    auto res = harness::grid_run({cfg}, out_dir, fmt, /*parallel=*/false);
    for (const auto& f : res.run_files) std::cout << f.string() << '\n';
    for (const auto& f : res.failures) std::cerr << "run " << f.label << " seed " << f.seed << " failed: " << f.message << '\n';
    return res.failures.empty() ? 0 : 1;
}

int cmd_grid(const std::string& cfg_path, const fs::path& out_dir, harness::Format fmt, bool serial) {
    auto configs = harness::load_grid(cfg_path);
    auto res = harness::grid_run(configs, out_dir, fmt, !serial);
    std::cout << res.run_files.size() << " runs written, aggregate: " << res.aggregate_file.string() << '\n';
    for (const auto& f : res.failures) std::cerr << "run " << f.label << " seed " << f.seed << " failed: " << f.message << '\n';
    return res.failures.empty() ? 0 : 1;
}

int cmd_ablate(const std::string& cfg_path, std::optional<std::uint64_t> seed, const std::vector<int>& lags,
               const fs::path& out_dir, harness::Format fmt) {
    auto cfg = load_single(cfg_path);
    if (seed) cfg.seeds = {*seed};
    auto res = harness::ablate_lag(cfg, lags, out_dir, fmt);
    std::cout << "lag,seed,clamp_saturated,batches\n";
    for (const auto& r : res.runs)
        std::cout << r.label << ',' << r.seed << ',' << harness::clamp_saturation_count(r.trace, cfg.loss.clamp) << ','
                  << r.trace.size() << '\n';
    return res.failures.empty() ? 0 : 1;
}

int cmd_report(const fs::path& in_dir, const fs::path& out_dir, harness::Format fmt, bool plot) {
    std::vector<metrics::ResultRow> rows;
    const std::string want = fmt == harness::Format::csv ? ".csv" : ".json";
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(in_dir))
        if (e.is_regular_file() && e.path().extension() == want && e.path().stem() != "aggregate" &&
            e.path().stem().string().rfind("plot_", 0) != 0)
            files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        std::ifstream in(f);
        auto r = harness::read_rows(in, fmt);
        rows.insert(rows.end(), r.begin(), r.end());
    }
    const auto agg = harness::aggregate(rows);
    fs::create_directories(out_dir);
    std::ostringstream os;
    harness::write_aggregate(os, agg, {}, fmt);
    write_text(out_dir / ("aggregate" + want), os.str());
    std::cout << files.size() << " result files, " << agg.size() << " aggregate rows\n";
    if (plot) {
        // One CSV per metric: method,loss,split,mean,std
        std::map<std::string, std::ostringstream> per_metric;
        for (const auto& a : agg) {
            auto& s = per_metric[a.metric];
            if (s.tellp() == 0) s << "method,loss,split,mean,std\n";
            s << a.method << ',' << a.loss << ',' << a.split << ',' << harness::round6(a.mean) << ','
              << harness::round6(a.stddev) << '\n';
        }
        for (auto& [metric, s] : per_metric) write_text(out_dir / ("plot_" + metric + ".csv"), s.str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adaptive loose optimization experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
    std::string format = "csv";
    auto add_common = [&](CLI::App* sub, bool with_seed) {
        sub->add_option("--config", config_path, "key = value config file");
        if (with_seed) sub->add_option("--seed", seed, "override the seed list with one seed");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    };

    auto* gen = app.add_subcommand("gen", "write datasets as line-delimited JSON");
    add_common(gen, true);
    auto* train = app.add_subcommand("train", "train and evaluate one config");
    add_common(train, true);
    auto* grid = app.add_subcommand("grid", "run every [section] of a config file");
    add_common(grid, false);
    bool serial = false;
    grid->add_flag("--serial", serial, "run configs one at a time");
    auto* ablate = app.add_subcommand("ablate-lag", "repeat an ALO run for several lag values");
    add_common(ablate, true);
    std::vector<int> lags{1, 5, 10, 20};
    ablate->add_option("--lags", lags, "lag values in [1, 20]")->delimiter(',');
    auto* report = app.add_subcommand("report", "aggregate result files");
    std::string in_dir;
    bool plot = false;
    report->add_option("--in", in_dir, "directory with per-run result files")->required();
    report->add_option("--out", out_dir, "output directory");
    report->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    report->add_flag("--plot", plot, "also write plot_<metric>.csv files");

    CLI11_PARSE(app, argc, argv);
    try {
        const auto fmt = harness::parse_format(format);
        if (*gen) return cmd_gen(config_path, seed, out_dir);
        if (*train) return cmd_train(config_path, seed, out_dir, fmt);
        if (*grid) {
            if (config_path.empty()) throw ConfigError("grid needs --config");
            return cmd_grid(config_path, out_dir, fmt, serial);
        }
        if (*ablate) return cmd_ablate(config_path, seed, lags, out_dir, fmt);
        if (*report) return cmd_report(in_dir, out_dir, fmt, plot);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
