#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "alo/config.hpp"
#include "alo/datagen.hpp"
#include "alo/debias.hpp"
#include "alo/losses.hpp"
#include "alo/metrics.hpp"
#include "alo/models.hpp"
#include "alo/optim.hpp"

namespace alo::harness {

enum class Task { classification, span };
std::string to_string(Task t);
Task parse_task(const std::string& s);

enum class Format { csv, json };
Format parse_format(const std::string& s);

inline const std::vector<std::uint64_t> kDefaultSeeds{1337, 1338, 1339, 1340, 1341};

struct ExperimentConfig {
    std::string name;  // optional label; defaults to the method name
    Task task = Task::classification;
    debias::Strategy strategy = debias::Strategy::none;
    debias::CfFusion cf_fusion = debias::CfFusion::sum;
    double cf_c = 1.0;
    loss::LossConfig loss;

    data::BiasedClassConfig class_data;
    data::SpanDataConfig span_data;
    /// When set, every seed shares this dataset and only initialisation/order vary.
    std::optional<std::uint64_t> data_seed;

    std::vector<std::uint64_t> seeds = kDefaultSeeds;
    int epochs = 10;
    std::size_t batch_size = 64;
    double lr = 0.05;
    double max_grad_norm = 0.25;
    optim::LrSchedule schedule;

    std::size_t hidden = 64;       // classifier branch width
    std::size_t depth = 2;         // classifier hidden layers per branch
    std::size_t span_hidden = 32;  // span encoder width
    int bias_pretrain_epochs = 2;  // frozen-bias strategies (classification)
    int max_answer_len = 30;       // span decode window
    double validation_fraction = 0.1;  // held out for model selection on id runs

    void validate() const;
    /// "classifier" / "span", suffixed with "+strategy" unless strategy is none.
    std::string method() const;
    /// "ce", "focal", "alo", or "alo_lag<n>" for n ≠ 1.
    std::string loss_label() const;
    std::string label() const { return name.empty() ? method() + "_" + loss_label() : name; }
};

/// Build a config from `key = value` pairs (schema in README). Unknown keys throw.
ExperimentConfig from_key_values(const config::KeyValues& kv);
std::vector<ExperimentConfig> load_grid(const std::string& path);

/// One optimisation step as recorded in the loss trace.
struct TraceRow {
    std::size_t batch_index = 0;
    double base_loss = 0.0;
    double gamma = 1.0;
    double scaled_loss = 0.0;
    friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

struct ClassifierRun {
    models::ClassifierModel model;
    std::vector<TraceRow> trace;
    int selected_epoch = -1;  // epoch whose weights were kept
};

struct SpanRun {
    models::SpanModel model;
    std::vector<TraceRow> trace;
};

/// Train a classifier on `splits.train`. Deterministic in (cfg, seed, data).
/// Throws RunError if the loss diverges.
ClassifierRun train_classifier(const ExperimentConfig& cfg, std::uint64_t seed, const data::ClassSplits& splits);
SpanRun train_span(const ExperimentConfig& cfg, std::uint64_t seed, const data::SpanSplits& splits);

/// Deployed-model logits for every sample of `ds`.
ad::Tensor classifier_logits(const ExperimentConfig& cfg, const models::ClassifierModel& model, const data::ClassDataset& ds);
std::vector<models::Span> span_predictions(const ExperimentConfig& cfg, const models::SpanModel& model,
                                           const data::SpanDataset& ds);

/// Rows: accuracy and open_ended_accuracy on id_test/ood_test, hm_accuracy on "overall".
std::vector<metrics::ResultRow> evaluate_classifier(const ExperimentConfig& cfg, std::uint64_t seed,
                                                    const models::ClassifierModel& model, const data::ClassSplits& splits);
/// Rows: f1 and exact_match per dev_k<j>; f1 on "id" and pooled "ood"; hm_f1 on "overall".
std::vector<metrics::ResultRow> evaluate_span(const ExperimentConfig& cfg, std::uint64_t seed, const models::SpanModel& model,
                                              const data::SpanSplits& splits);

/// Everything one (config, seed) run produces.
struct RunOutput {
    std::string label;
    std::uint64_t seed = 0;
    std::vector<metrics::ResultRow> rows;
    std::vector<TraceRow> trace;
    std::string checkpoint;  // serialized parameters
};

data::ClassSplits make_class_data(const ExperimentConfig& cfg, std::uint64_t seed);
data::SpanSplits make_span_data(const ExperimentConfig& cfg, std::uint64_t seed);

RunOutput run_one(const ExperimentConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Result files

/// Values are rounded to 6 decimals on output.
void write_rows(std::ostream& os, const std::vector<metrics::ResultRow>& rows, Format fmt);
std::vector<metrics::ResultRow> read_rows(std::istream& is, Format fmt);
/// Trace CSV: batch_index,base_loss,gamma,scaled_loss
void write_trace(std::ostream& os, const std::vector<TraceRow>& trace);
std::vector<TraceRow> read_trace(std::istream& is);

struct AggregateRow {
    std::string method, loss, strategy, split, metric;
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation across seeds
    std::size_t n = 0;
};
std::vector<AggregateRow> aggregate(const std::vector<metrics::ResultRow>& rows);

struct Failure {
    std::string label;
    std::uint64_t seed = 0;
    std::string message;
};

/// Aggregate file; failures follow the rows (CSV: `#failure,label,seed,message` lines).
void write_aggregate(std::ostream& os, const std::vector<AggregateRow>& rows, const std::vector<Failure>& failures,
                     Format fmt);

struct GridResult {
    std::vector<RunOutput> runs;
    std::vector<Failure> failures;
    std::vector<std::filesystem::path> run_files;
    std::filesystem::path aggregate_file;
};

/// Run every (config, seed) pair (in parallel when `parallel`), write one
/// results file per run, its trace and checkpoint, and an aggregate over all
/// successful runs. Failed runs are listed, not rethrown.
GridResult grid_run(const std::vector<ExperimentConfig>& configs, const std::filesystem::path& out_dir, Format fmt,
                    bool parallel = true);

/// One config per lag value, everything else copied from `base`.
std::vector<ExperimentConfig> lag_configs(const ExperimentConfig& base, const std::vector<int>& lags);
GridResult ablate_lag(const ExperimentConfig& base, const std::vector<int>& lags, const std::filesystem::path& out_dir,
                      Format fmt, bool parallel = true);

/// Entries of a trace where γ sits exactly at the clamp.
std::size_t clamp_saturation_count(const std::vector<TraceRow>& trace, double clamp);

/// Round to the emitted precision.
double round6(double v);

}  // namespace alo::harness
