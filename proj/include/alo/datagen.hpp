#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace alo::data {

enum class ShiftMode { id, shuffled_prior, inverted_prior };
std::string to_string(ShiftMode m);
ShiftMode parse_shift_mode(const std::string& s);

/// Answer-prior-skew classification data (language-prior analog).
struct BiasedClassConfig {
    int types = 8;                  // T
    int answers = 16;               // |A|
    double prior_strength = 0.9;    // ρ: P(label = dominant answer of its type) beyond uniform
    ShiftMode shift_mode = ShiftMode::inverted_prior;
    std::size_t n_train = 20000;
    std::size_t n_test = 4000;
    double noise_sigma = 0.5;
    double signal = 2.0;            // prototype scale on the label's context dimension

    std::size_t context_dim() const { return static_cast<std::size_t>(answers); }
    std::size_t question_dim() const { return static_cast<std::size_t>(types); }
    void validate() const;
    friend bool operator==(const BiasedClassConfig&, const BiasedClassConfig&) = default;
};

struct QaSample {
    int question_type = 0;
    std::vector<double> question_features;
    std::vector<double> context_features;
    int label = 0;
    friend bool operator==(const QaSample&, const QaSample&) = default;
};

struct ClassDataset {
    BiasedClassConfig cfg;
    std::uint64_t seed = 0;
    std::string split;
    std::vector<QaSample> samples;
    friend bool operator==(const ClassDataset&, const ClassDataset&) = default;
};

struct ClassSplits {
    ClassDataset train;
    ClassDataset id_test;
    ClassDataset ood_test;
    /// dominant answer per question type in the training distribution
    std::vector<int> dominant;
};

/// Train and id_test share per-type priors; ood_test follows `shift_mode`.
/// Every split draws from its own stream derived from `seed`.
ClassSplits gen_vqa_like(const BiasedClassConfig& cfg, std::uint64_t seed);

/// Per-type answer distribution used to draw labels for a given split shift.
std::vector<std::vector<double>> answer_priors(const BiasedClassConfig& cfg, const std::vector<int>& dominant,
                                               ShiftMode mode);

// ---------------------------------------------------------------------------

/// Position-skew span data (answer-in-k-th-sentence analog).
///
/// Token features: [start marker, end marker, sentence one-hot (S), noise...].
/// The true answer adds `answer_amp` to its start token's start marker and
/// end token's end marker; distractor spans anywhere outside the answer add
/// `distractor_amp`.
struct SpanDataConfig {
    int sentences = 5;
    int tokens_per_sentence = 8;
    int feature_dim = 16;
    int train_k = 1;  // 1-based sentence holding every training answer
    std::size_t n_train = 4000;
    std::size_t n_dev_per_sentence = 500;
    int max_answer_len = 3;
    int distractors = 2;
    double answer_amp = 1.0;
    double distractor_amp = 0.6;
    double noise_sigma = 0.1;

    int context_length() const { return sentences * tokens_per_sentence; }
    void validate() const;
    friend bool operator==(const SpanDataConfig&, const SpanDataConfig&) = default;
};

struct SpanSample {
    std::vector<std::vector<double>> tokens;  // one feature row per token
    std::vector<int> sent_bounds;             // first token index of each sentence
    int start = 0;
    int end = 0;

    /// 1-based sentence that contains the answer.
    int answer_sentence_index() const;
    friend bool operator==(const SpanSample&, const SpanSample&) = default;
};

struct SpanDataset {
    SpanDataConfig cfg;
    std::uint64_t seed = 0;
    std::string split;
    std::vector<SpanSample> samples;
    friend bool operator==(const SpanDataset&, const SpanDataset&) = default;
};

struct SpanSplits {
    SpanDataset train_k;
    std::vector<SpanDataset> dev_by_sentence;  // index j holds answers in sentence j+1
};

SpanSplits gen_span_like(const SpanDataConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Line-delimited JSON. First line is a header
//   {"schema_version":1,"kind":"classification"|"span","split":...,"seed":...,"cfg":{...}}
// followed by one record per sample:
//   classification: {"qtype":int,"qfeat":[real],"cfeat":[real],"label":int}
//   span:           {"tokens":[[real]],"sent_bounds":[int],"start":int,"end":int}
// An entirely empty stream loads as an empty dataset.

inline constexpr int kSchemaVersion = 1;

nlohmann::json to_json(const BiasedClassConfig& cfg);
BiasedClassConfig class_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SpanDataConfig& cfg);
SpanDataConfig span_config_from_json(const nlohmann::json& j);

void serialize(std::ostream& os, const ClassDataset& ds);
void serialize(std::ostream& os, const SpanDataset& ds);
ClassDataset load_class_dataset(std::istream& is);
SpanDataset load_span_dataset(std::istream& is);

}  // namespace alo::data
