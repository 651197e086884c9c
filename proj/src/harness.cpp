#include "alo/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "alo/errors.hpp"

namespace alo::harness {

using nlohmann::json;

std::string to_string(Task t) { return t == Task::classification ? "classification" : "span"; }

Task parse_task(const std::string& s) {
    if (s == "classification") return Task::classification;
    if (s == "span") return Task::span;
    throw ConfigError("unknown task '" + s + "'");
}

Format parse_format(const std::string& s) {
    if (s == "csv") return Format::csv;
    if (s == "json") return Format::json;
    throw ConfigError("unknown format '" + s + "'");
}

void ExperimentConfig::validate() const {
    loss.validate();
    if (seeds.empty()) throw ConfigError("seeds must not be empty");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(max_grad_norm > 0.0)) throw ConfigError("max_grad_norm must be positive");
    if (!(cf_c >= 0.0)) throw ConfigError("cf_c must be >= 0");
    if (max_answer_len < 1) throw ConfigError("max_answer_len must be positive");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) throw ConfigError("validation_fraction must lie in [0, 1)");
    if (task == Task::span && strategy == debias::Strategy::cf_variant)
        throw ConfigError("cf_variant has no span form (no constant head over positions)");
    if (task == Task::span && loss.state_source != loss::StateSource::combined)
        throw ConfigError("state_source=main is only defined for classification");
    if (task == Task::classification) class_data.validate();
    else span_data.validate();
}

std::string ExperimentConfig::method() const {
    std::string m = task == Task::classification ? "classifier" : "span";
    if (strategy != debias::Strategy::none) m += "+" + debias::to_string(strategy);
    return m;
}

std::string ExperimentConfig::loss_label() const {
    std::string l = loss::to_string(loss.kind);
    if (loss.kind == loss::LossKind::alo && loss.lag != 1) l += "_lag" + std::to_string(loss.lag);
    return l;
}

ExperimentConfig from_key_values(const config::KeyValues& kv) {
    static const std::set<std::string> known{
        "name", "task", "strategy", "cf_fusion", "cf_c", "loss", "lag", "clamp", "focal_gamma", "span_state_mode",
        "state_source", "seeds", "data_seed", "epochs", "batch_size", "lr", "max_grad_norm", "hidden", "depth",
        "span_hidden", "bias_pretrain_epochs", "max_answer_len", "validation_fraction", "schedule.enabled",
        "schedule.warmup_epochs", "schedule.warmup_start_factor", "schedule.decay_start_epoch", "schedule.decay_every",
        "schedule.decay_factor", "data.types", "data.answers", "data.prior_strength", "data.shift_mode", "data.n_train",
        "data.n_test", "data.noise_sigma", "data.signal", "span.sentences", "span.tokens_per_sentence",
        "span.feature_dim", "span.train_k", "span.n_train", "span.n_dev_per_sentence", "span.max_answer_len",
        "span.distractors", "span.answer_amp", "span.distractor_amp", "span.noise_sigma"};
    for (const auto& [k, _] : kv.all())
        if (!known.count(k)) throw ConfigError("unknown config key '" + k + "'");

    ExperimentConfig c;
    c.name = kv.get_string("name", "");
    c.task = parse_task(kv.get_string("task", "classification"));
    c.strategy = debias::parse_strategy(kv.get_string("strategy", "none"));
    c.cf_fusion = debias::parse_cf_fusion(kv.get_string("cf_fusion", "sum"));
    c.cf_c = kv.get_double("cf_c", c.cf_c);
    c.loss.kind = loss::parse_loss_kind(kv.get_string("loss", "ce"));
    c.loss.lag = kv.get_int("lag", c.loss.lag);
    c.loss.clamp = kv.get_double("clamp", c.loss.clamp);
    c.loss.focal_gamma = kv.get_double("focal_gamma", c.loss.focal_gamma);
    c.loss.span_state_mode = loss::parse_span_state_mode(kv.get_string("span_state_mode", "shared"));
    c.loss.state_source = loss::parse_state_source(kv.get_string("state_source", "combined"));
    c.seeds = kv.get_u64_list("seeds", c.seeds);
    if (kv.has("data_seed")) c.data_seed = kv.get_u64_list("data_seed", {}).at(0);
    c.epochs = kv.get_int("epochs", c.epochs);
    c.batch_size = kv.get_size("batch_size", c.batch_size);
    c.lr = kv.get_double("lr", c.lr);
    c.max_grad_norm = kv.get_double("max_grad_norm", c.max_grad_norm);
    c.hidden = kv.get_size("hidden", c.hidden);
    c.depth = kv.get_size("depth", c.depth);
    c.span_hidden = kv.get_size("span_hidden", c.span_hidden);
    c.bias_pretrain_epochs = kv.get_int("bias_pretrain_epochs", c.bias_pretrain_epochs);
    c.max_answer_len = kv.get_int("max_answer_len", c.max_answer_len);
    c.validation_fraction = kv.get_double("validation_fraction", c.validation_fraction);

    auto& s = c.schedule;
    s.enabled = kv.get_bool("schedule.enabled", s.enabled);
    s.warmup_epochs = kv.get_int("schedule.warmup_epochs", s.warmup_epochs);
    s.warmup_start_factor = kv.get_double("schedule.warmup_start_factor", s.warmup_start_factor);
    s.decay_start_epoch = kv.get_int("schedule.decay_start_epoch", s.decay_start_epoch);
    s.decay_every = kv.get_int("schedule.decay_every", s.decay_every);
    s.decay_factor = kv.get_double("schedule.decay_factor", s.decay_factor);

    auto& d = c.class_data;
    d.types = kv.get_int("data.types", d.types);
    d.answers = kv.get_int("data.answers", d.answers);
    d.prior_strength = kv.get_double("data.prior_strength", d.prior_strength);
    d.shift_mode = data::parse_shift_mode(kv.get_string("data.shift_mode", data::to_string(d.shift_mode)));
    d.n_train = kv.get_size("data.n_train", d.n_train);
    d.n_test = kv.get_size("data.n_test", d.n_test);
    d.noise_sigma = kv.get_double("data.noise_sigma", d.noise_sigma);
    d.signal = kv.get_double("data.signal", d.signal);

    auto& p = c.span_data;
    p.sentences = kv.get_int("span.sentences", p.sentences);
    p.tokens_per_sentence = kv.get_int("span.tokens_per_sentence", p.tokens_per_sentence);
    p.feature_dim = kv.get_int("span.feature_dim", p.feature_dim);
    p.train_k = kv.get_int("span.train_k", p.train_k);
    p.n_train = kv.get_size("span.n_train", p.n_train);
    p.n_dev_per_sentence = kv.get_size("span.n_dev_per_sentence", p.n_dev_per_sentence);
    p.max_answer_len = kv.get_int("span.max_answer_len", p.max_answer_len);
    p.distractors = kv.get_int("span.distractors", p.distractors);
    p.answer_amp = kv.get_double("span.answer_amp", p.answer_amp);
    p.distractor_amp = kv.get_double("span.distractor_amp", p.distractor_amp);
    p.noise_sigma = kv.get_double("span.noise_sigma", p.noise_sigma);

    c.validate();
    return c;
}

std::vector<ExperimentConfig> load_grid(const std::string& path) {
    const auto doc = config::parse_file(path);
    std::vector<ExperimentConfig> out;
    if (doc.sections.empty()) {
        out.push_back(from_key_values(doc.defaults));
        return out;
    }
    for (const auto& [name, kv] : doc.sections) {
        auto c = from_key_values(kv);
        if (c.name.empty()) c.name = name;
        out.push_back(std::move(c));
    }
    return out;
}

// ---------------------------------------------------------------------------

double round6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::strtod(buf, nullptr);
}

namespace {

metrics::ResultRow row(const ExperimentConfig& cfg, std::uint64_t seed, std::string split, std::string metric, double v) {
    return {cfg.method(), cfg.loss_label(), debias::to_string(cfg.strategy), static_cast<std::int64_t>(seed),
            std::move(split), std::move(metric), v};
}

double hm_or_zero(double a, double b) {
    if (a <= 0.0 || b <= 0.0) return 0.0;
    const double xs[] = {a, b};
    return metrics::harmonic_mean(xs);
}

}  // namespace

std::vector<metrics::ResultRow> evaluate_classifier(const ExperimentConfig& cfg, std::uint64_t seed,
                                                    const models::ClassifierModel& model, const data::ClassSplits& splits) {
    std::vector<metrics::ResultRow> rows;
    double acc[2] = {0.0, 0.0};
    const data::ClassDataset* parts[2] = {&splits.id_test, &splits.ood_test};
    const char* names[2] = {"id_test", "ood_test"};
    for (int i = 0; i < 2; ++i) {
        const auto preds = models::argmax_rows(classifier_logits(cfg, model, *parts[i]));
        std::vector<int> labels;
        double open_ended = 0.0;
        for (std::size_t r = 0; r < preds.size(); ++r) {
            labels.push_back(parts[i]->samples[r].label);
            // Single-class labels: all three annotators agree or none do.
            open_ended += metrics::open_ended_accuracy(preds[r] == labels.back() ? 3 : 0);
        }
        acc[i] = metrics::standard_accuracy(preds, labels);
        rows.push_back(row(cfg, seed, names[i], "accuracy", acc[i]));
        rows.push_back(row(cfg, seed, names[i], "open_ended_accuracy", preds.empty() ? 0.0 : open_ended / static_cast<double>(preds.size())));
    }
    rows.push_back(row(cfg, seed, "overall", "hm_accuracy", hm_or_zero(acc[0], acc[1])));
    return rows;
}

std::vector<metrics::ResultRow> evaluate_span(const ExperimentConfig& cfg, std::uint64_t seed, const models::SpanModel& model,
                                              const data::SpanSplits& splits) {
    std::vector<metrics::ResultRow> rows;
    double id_f1 = 0.0, ood_sum = 0.0;
    std::size_t ood_n = 0;
    const int train_k = splits.train_k.cfg.train_k;
    for (std::size_t j = 0; j < splits.dev_by_sentence.size(); ++j) {
        const auto& dev = splits.dev_by_sentence[j];
        const auto preds = span_predictions(cfg, model, dev);
        std::vector<std::vector<models::Span>> golds;
        std::vector<int> lengths;
        double exact = 0.0;
        for (std::size_t r = 0; r < preds.size(); ++r) {
            const auto& s = dev.samples[r];
            golds.push_back({{s.start, s.end}});
            lengths.push_back(static_cast<int>(s.tokens.size()));
            exact += preds[r] == golds.back().front() ? 1.0 : 0.0;
        }
        const double f1 = metrics::macro_f1(preds, golds, lengths);
        const std::string split = "dev_k" + std::to_string(j + 1);
        rows.push_back(row(cfg, seed, split, "f1", f1));
        rows.push_back(row(cfg, seed, split, "exact_match", preds.empty() ? 0.0 : exact / static_cast<double>(preds.size())));
        if (static_cast<int>(j + 1) == train_k) {
            id_f1 = f1;
        } else {
            ood_sum += f1 * static_cast<double>(preds.size());
            ood_n += preds.size();
        }
    }
    const double ood_f1 = ood_n ? ood_sum / static_cast<double>(ood_n) : 0.0;
    rows.push_back(row(cfg, seed, "id", "f1", id_f1));
    rows.push_back(row(cfg, seed, "ood", "f1", ood_f1));
    rows.push_back(row(cfg, seed, "overall", "hm_f1", hm_or_zero(id_f1, ood_f1)));
    return rows;
}

data::ClassSplits make_class_data(const ExperimentConfig& cfg, std::uint64_t seed) {
    return data::gen_vqa_like(cfg.class_data, cfg.data_seed.value_or(seed));
}

data::SpanSplits make_span_data(const ExperimentConfig& cfg, std::uint64_t seed) {
    return data::gen_span_like(cfg.span_data, cfg.data_seed.value_or(seed));
}

RunOutput run_one(const ExperimentConfig& cfg, std::uint64_t seed) {
    RunOutput out{cfg.label(), seed, {}, {}, {}};
    std::ostringstream ckpt;
    if (cfg.task == Task::classification) {
        const auto splits = make_class_data(cfg, seed);
        auto run = train_classifier(cfg, seed, splits);
        out.rows = evaluate_classifier(cfg, seed, run.model, splits);
        out.trace = std::move(run.trace);
        models::save_checkpoint(ckpt, run.model.named_params());
    } else {
        const auto splits = make_span_data(cfg, seed);
        auto run = train_span(cfg, seed, splits);
        out.rows = evaluate_span(cfg, seed, run.model, splits);
        out.trace = std::move(run.trace);
        models::save_checkpoint(ckpt, run.model.named_params());
    }
    out.checkpoint = ckpt.str();
    return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string exact(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) out.push_back(f);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double to_double(const std::string& s, std::size_t line) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0') throw ParseError("bad number '" + s + "'", line);
    return v;
}

std::string sanitize(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ' ';
    return s;
}

constexpr const char* kRowsHeader = "method,loss,strategy,seed,split,metric,value";
constexpr const char* kTraceHeader = "batch_index,base_loss,gamma,scaled_loss";
constexpr const char* kAggregateHeader = "method,loss,strategy,split,metric,mean,std,n";

}  // namespace

void write_rows(std::ostream& os, const std::vector<metrics::ResultRow>& rows, Format fmt) {
    if (fmt == Format::csv) {
        os << kRowsHeader << '\n';
        for (const auto& r : rows)
            os << r.method << ',' << r.loss << ',' << r.strategy << ',' << r.seed << ',' << r.split << ',' << r.metric << ','
               << fixed6(r.value) << '\n';
        return;
    }
    json arr = json::array();
    for (const auto& r : rows)
        arr.push_back({{"method", r.method}, {"loss", r.loss}, {"strategy", r.strategy}, {"seed", r.seed},
                       {"split", r.split}, {"metric", r.metric}, {"value", round6(r.value)}});
    os << arr.dump(1) << '\n';
}

std::vector<metrics::ResultRow> read_rows(std::istream& is, Format fmt) {
    std::vector<metrics::ResultRow> rows;
    if (fmt == Format::json) {
        json arr;
        try {
            arr = json::parse(is);
            for (const auto& o : arr)
                rows.push_back({o.at("method").get<std::string>(), o.at("loss").get<std::string>(),
                                o.at("strategy").get<std::string>(), o.at("seed").get<std::int64_t>(),
                                o.at("split").get<std::string>(), o.at("metric").get<std::string>(),
                                o.at("value").get<double>()});
        } catch (const json::exception& e) {
            throw ParseError(std::string("bad results json: ") + e.what(), 0);
        }
        return rows;
    }
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line)) {
        ++n;
        if (n == 1) {
            if (line != kRowsHeader) throw ParseError("unexpected results header", n);
            continue;
        }
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 7) throw ParseError("expected 7 fields", n);
        rows.push_back({f[0], f[1], f[2], static_cast<std::int64_t>(to_double(f[3], n)), f[4], f[5], to_double(f[6], n)});
    }
    return rows;
}

void write_trace(std::ostream& os, const std::vector<TraceRow>& trace) {
    os << kTraceHeader << '\n';
    for (const auto& t : trace)
        os << t.batch_index << ',' << exact(t.base_loss) << ',' << exact(t.gamma) << ',' << exact(t.scaled_loss) << '\n';
}

std::vector<TraceRow> read_trace(std::istream& is) {
    std::vector<TraceRow> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line)) {
        ++n;
        if (n == 1) {
            if (line != kTraceHeader) throw ParseError("unexpected trace header", n);
            continue;
        }
        const auto f = split_csv(line);
        if (f.size() != 4) throw ParseError("expected 4 fields", n);
        out.push_back({static_cast<std::size_t>(to_double(f[0], n)), to_double(f[1], n), to_double(f[2], n), to_double(f[3], n)});
    }
    return out;
}

std::vector<AggregateRow> aggregate(const std::vector<metrics::ResultRow>& rows) {
    using Key = std::tuple<std::string, std::string, std::string, std::string, std::string>;
    std::map<Key, std::vector<double>> groups;
    for (const auto& r : rows) groups[{r.method, r.loss, r.strategy, r.split, r.metric}].push_back(r.value);
    std::vector<AggregateRow> out;
    for (const auto& [k, v] : groups) {
        AggregateRow a{std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k), std::get<4>(k), 0.0, 0.0, v.size()};
        for (double x : v) a.mean += x;
        a.mean /= static_cast<double>(v.size());
        if (v.size() > 1) {
            double ss = 0.0;
            for (double x : v) ss += (x - a.mean) * (x - a.mean);
            a.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
        }
        out.push_back(std::move(a));
    }
    return out;
}

void write_aggregate(std::ostream& os, const std::vector<AggregateRow>& rows, const std::vector<Failure>& failures, Format fmt) {
    if (fmt == Format::csv) {
        os << kAggregateHeader << '\n';
        for (const auto& a : rows)
            os << a.method << ',' << a.loss << ',' << a.strategy << ',' << a.split << ',' << a.metric << ',' << fixed6(a.mean)
               << ',' << fixed6(a.stddev) << ',' << a.n << '\n';
        for (const auto& f : failures) os << "#failure," << f.label << ',' << f.seed << ',' << sanitize(f.message) << '\n';
        return;
    }
    json j{{"rows", json::array()}, {"failures", json::array()}};
    for (const auto& a : rows)
        j["rows"].push_back({{"method", a.method}, {"loss", a.loss}, {"strategy", a.strategy}, {"split", a.split},
                             {"metric", a.metric}, {"mean", round6(a.mean)}, {"std", round6(a.stddev)}, {"n", a.n}});
    for (const auto& f : failures) j["failures"].push_back({{"label", f.label}, {"seed", f.seed}, {"message", f.message}});
    os << j.dump(1) << '\n';
}

// ---------------------------------------------------------------------------

namespace {

std::string ext(Format fmt) { return fmt == Format::csv ? ".csv" : ".json"; }

void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << content;
}

}  // namespace

GridResult grid_run(const std::vector<ExperimentConfig>& configs, const std::filesystem::path& out_dir, Format fmt,
                    bool parallel) {
    std::set<std::string> labels;
    for (const auto& c : configs)
        if (!labels.insert(c.label()).second) throw ConfigError("duplicate run label '" + c.label() + "'");

    struct Job {
        const ExperimentConfig* cfg;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (const auto& c : configs)
        for (auto s : c.seeds) jobs.push_back({&c, s});

    std::vector<std::optional<RunOutput>> outputs(jobs.size());
    std::vector<std::string> errors(jobs.size());
    const auto njobs = static_cast<std::int64_t>(jobs.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (std::int64_t i = 0; i < njobs; ++i) {
        const auto& job = jobs[static_cast<std::size_t>(i)];
        try {
            outputs[static_cast<std::size_t>(i)] = run_one(*job.cfg, job.seed);
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(i)] = e.what();
        }
    }

    GridResult result;
    std::filesystem::create_directories(out_dir / "traces");
    std::filesystem::create_directories(out_dir / "checkpoints");
    std::vector<metrics::ResultRow> all_rows;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const std::string stem = jobs[i].cfg->label() + "_seed" + std::to_string(jobs[i].seed);
        if (!outputs[i]) {
            result.failures.push_back({jobs[i].cfg->label(), jobs[i].seed, errors[i]});
            continue;
        }
        auto& out = *outputs[i];
        std::ostringstream rows, trace;
        write_rows(rows, out.rows, fmt);
        write_trace(trace, out.trace);
        const auto run_file = out_dir / (stem + ext(fmt));
        write_file(run_file, rows.str());
        write_file(out_dir / "traces" / (stem + ".csv"), trace.str());
        write_file(out_dir / "checkpoints" / (stem + ".ckpt"), out.checkpoint);
        result.run_files.push_back(run_file);
        all_rows.insert(all_rows.end(), out.rows.begin(), out.rows.end());
        result.runs.push_back(std::move(out));
    }
    std::ostringstream agg;
    write_aggregate(agg, aggregate(all_rows), result.failures, fmt);
    result.aggregate_file = out_dir / ("aggregate" + ext(fmt));
    write_file(result.aggregate_file, agg.str());
    return result;
}

std::vector<ExperimentConfig> lag_configs(const ExperimentConfig& base, const std::vector<int>& lags) {
    std::vector<ExperimentConfig> out;
    for (int n : lags) {
        if (n < 1 || n > 20) throw ConfigError("lag " + std::to_string(n) + " outside [1, 20]");
        auto c = base;
        c.loss.kind = loss::LossKind::alo;
        c.loss.lag = n;
        c.name = (base.name.empty() ? base.method() : base.name) + "_lag" + std::to_string(n);
        out.push_back(std::move(c));
    }
    return out;
}

GridResult ablate_lag(const ExperimentConfig& base, const std::vector<int>& lags, const std::filesystem::path& out_dir,
                      Format fmt, bool parallel) {
    return grid_run(lag_configs(base, lags), out_dir, fmt, parallel);
}

std::size_t clamp_saturation_count(const std::vector<TraceRow>& trace, double clamp) {
    return static_cast<std::size_t>(std::count_if(trace.begin(), trace.end(), [clamp](const TraceRow& t) { return t.gamma == clamp; }));
}

}  // namespace alo::harness
