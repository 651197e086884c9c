#include "alo/datagen.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>

#include "alo/errors.hpp"

namespace alo::data {

using nlohmann::json;

std::string to_string(ShiftMode m) {
    switch (m) {
        case ShiftMode::id: return "id";
        case ShiftMode::shuffled_prior: return "shuffled_prior";
        case ShiftMode::inverted_prior: return "inverted_prior";
    }
    return "?";
}

ShiftMode parse_shift_mode(const std::string& s) {
    if (s == "id") return ShiftMode::id;
    if (s == "shuffled_prior") return ShiftMode::shuffled_prior;
    if (s == "inverted_prior") return ShiftMode::inverted_prior;
    throw ConfigError("unknown shift_mode '" + s + "'");
}

void BiasedClassConfig::validate() const {
    if (types < 1 || answers < 2) throw ConfigError("need at least one question type and two answers");
    if (types > answers) throw ConfigError("question types must not outnumber answers");
    if (!(prior_strength >= 0.0 && prior_strength < 1.0)) throw ConfigError("prior_strength must lie in [0, 1)");
    if (!(noise_sigma >= 0.0) || !(signal > 0.0)) throw ConfigError("noise_sigma must be >= 0 and signal > 0");
    if (n_train == 0 || n_test == 0) throw ConfigError("n_train and n_test must be positive");
}

namespace {

// Independent stream per purpose, all derived from the one named seed.
std::mt19937_64 stream(std::uint64_t seed, std::uint32_t purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), purpose};
    return std::mt19937_64(seq);
}

enum : std::uint32_t { kPriors = 0, kTrain = 1, kIdTest = 2, kOodTest = 3, kSpanTrain = 10, kSpanDev = 11 };

int draw(const std::vector<double>& weights, std::mt19937_64& rng) {
    std::discrete_distribution<int> d(weights.begin(), weights.end());
    return d(rng);
}

ClassDataset draw_class_split(const BiasedClassConfig& cfg, std::uint64_t seed, const std::string& split,
                              std::size_t n, const std::vector<std::vector<double>>& priors, std::mt19937_64 rng) {
    ClassDataset ds{cfg, seed, split, {}};
    ds.samples.reserve(n);
    std::uniform_int_distribution<int> type_dist(0, cfg.types - 1);
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    for (std::size_t i = 0; i < n; ++i) {
        QaSample s;
        s.question_type = type_dist(rng);
        s.label = draw(priors[static_cast<std::size_t>(s.question_type)], rng);
        s.question_features.resize(cfg.question_dim());
        for (std::size_t j = 0; j < s.question_features.size(); ++j)
            s.question_features[j] = (static_cast<int>(j) == s.question_type ? 1.0 : 0.0) + noise(rng);
        s.context_features.resize(cfg.context_dim());
        for (std::size_t j = 0; j < s.context_features.size(); ++j)
            s.context_features[j] = (static_cast<int>(j) == s.label ? cfg.signal : 0.0) + noise(rng);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace

std::vector<std::vector<double>> answer_priors(const BiasedClassConfig& cfg, const std::vector<int>& dominant,
                                               ShiftMode mode) {
    const auto A = static_cast<std::size_t>(cfg.answers);
    const double rho = cfg.prior_strength;
    const double base = (1.0 - rho) / static_cast<double>(A);
    std::vector<std::vector<double>> priors(static_cast<std::size_t>(cfg.types), std::vector<double>(A, base));
    for (std::size_t t = 0; t < priors.size(); ++t) {
        auto& p = priors[t];
        switch (mode) {
            case ShiftMode::id: p[static_cast<std::size_t>(dominant[t])] += rho; break;
            case ShiftMode::shuffled_prior:
                // Cyclic shift of the type → dominant answer map (a derangement for T ≥ 2).
                p[static_cast<std::size_t>(dominant[(t + 1) % dominant.size()])] += rho;
                if (dominant.size() == 1) p[static_cast<std::size_t>((dominant[0] + 1) % cfg.answers)] += rho;
                break;
            case ShiftMode::inverted_prior: {
                // Weight each answer by how unlikely it was in training.
                p.assign(A, 1.0 - base);
                p[static_cast<std::size_t>(dominant[t])] = 1.0 - base - rho;
                const double z = std::accumulate(p.begin(), p.end(), 0.0);
                for (double& v : p) v /= z;
                break;
            }
        }
    }
    return priors;
}

ClassSplits gen_vqa_like(const BiasedClassConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    auto prng = stream(seed, kPriors);
    std::vector<int> answers(static_cast<std::size_t>(cfg.answers));
    std::iota(answers.begin(), answers.end(), 0);
    std::shuffle(answers.begin(), answers.end(), prng);
    std::vector<int> dominant(answers.begin(), answers.begin() + cfg.types);

    const auto train_priors = answer_priors(cfg, dominant, ShiftMode::id);
    const auto ood_priors = answer_priors(cfg, dominant, cfg.shift_mode);
    ClassSplits out;
    out.train = draw_class_split(cfg, seed, "train", cfg.n_train, train_priors, stream(seed, kTrain));
    out.id_test = draw_class_split(cfg, seed, "id_test", cfg.n_test, train_priors, stream(seed, kIdTest));
    out.ood_test = draw_class_split(cfg, seed, "ood_test", cfg.n_test, ood_priors, stream(seed, kOodTest));
    out.dominant = std::move(dominant);
    return out;
}

// ---------------------------------------------------------------------------

void SpanDataConfig::validate() const {
    if (sentences < 1 || tokens_per_sentence < 2) throw ConfigError("need >= 1 sentence of >= 2 tokens");
    if (train_k < 1 || train_k > sentences)
        throw ConfigError("train_k " + std::to_string(train_k) + " outside [1, " + std::to_string(sentences) + "]");
    if (feature_dim < 2 + sentences) throw ConfigError("feature_dim must cover markers and sentence one-hot");
    if (max_answer_len < 1 || max_answer_len > tokens_per_sentence)
        throw ConfigError("max_answer_len must lie in [1, tokens_per_sentence]");
    if (distractors < 0 || (distractors > 0 && sentences < 2))
        throw ConfigError("distractors need a second sentence");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
}

int SpanSample::answer_sentence_index() const {
    const auto it = std::upper_bound(sent_bounds.begin(), sent_bounds.end(), start);
    return static_cast<int>(it - sent_bounds.begin());
}

namespace {

SpanSample draw_span_sample(const SpanDataConfig& cfg, int k, std::mt19937_64& rng) {
    const int len = cfg.context_length();
    const auto dim = static_cast<std::size_t>(cfg.feature_dim);
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    SpanSample s;
    s.tokens.assign(static_cast<std::size_t>(len), std::vector<double>(dim, 0.0));
    for (int j = 0; j < cfg.sentences; ++j) s.sent_bounds.push_back(j * cfg.tokens_per_sentence);
    for (int i = 0; i < len; ++i) {
        auto& tok = s.tokens[static_cast<std::size_t>(i)];
        for (auto& v : tok) v = noise(rng);
        tok[2 + static_cast<std::size_t>(i / cfg.tokens_per_sentence)] += 1.0;
    }

    auto draw = [&](int sentence) {
        std::uniform_int_distribution<int> len_dist(1, cfg.max_answer_len);
        const int span_len = len_dist(rng);
        std::uniform_int_distribution<int> off_dist(0, cfg.tokens_per_sentence - span_len);
        const int start = (sentence - 1) * cfg.tokens_per_sentence + off_dist(rng);
        return std::pair{start, start + span_len - 1};
    };
    auto mark = [&](std::pair<int, int> span, double amp) {
        s.tokens[static_cast<std::size_t>(span.first)][0] += amp;
        s.tokens[static_cast<std::size_t>(span.second)][1] += amp;
    };

    std::tie(s.start, s.end) = draw(k);
    mark({s.start, s.end}, cfg.answer_amp);
    // Distractors may share the answer's sentence but never its tokens.
    std::uniform_int_distribution<int> any(1, cfg.sentences);
    for (int d = 0; d < cfg.distractors; ++d) {
        std::pair<int, int> span;
        do {
            span = draw(any(rng));
        } while (span.first <= s.end && span.second >= s.start);
        mark(span, cfg.distractor_amp);
    }
    return s;
}

}  // namespace

SpanSplits gen_span_like(const SpanDataConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    SpanSplits out;
    auto train_rng = stream(seed, kSpanTrain);
    out.train_k = {cfg, seed, "train_k" + std::to_string(cfg.train_k), {}};
    for (std::size_t i = 0; i < cfg.n_train; ++i) out.train_k.samples.push_back(draw_span_sample(cfg, cfg.train_k, train_rng));
    auto dev_rng = stream(seed, kSpanDev);
    for (int k = 1; k <= cfg.sentences; ++k) {
        SpanDataset dev{cfg, seed, "dev_k" + std::to_string(k), {}};
        for (std::size_t i = 0; i < cfg.n_dev_per_sentence; ++i) dev.samples.push_back(draw_span_sample(cfg, k, dev_rng));
        out.dev_by_sentence.push_back(std::move(dev));
    }
    return out;
}

// ---------------------------------------------------------------------------

json to_json(const BiasedClassConfig& c) {
    return {{"types", c.types},       {"answers", c.answers},         {"prior_strength", c.prior_strength},
            {"shift_mode", to_string(c.shift_mode)}, {"n_train", c.n_train}, {"n_test", c.n_test},
            {"noise_sigma", c.noise_sigma}, {"signal", c.signal}};
}

BiasedClassConfig class_config_from_json(const json& j) {
    BiasedClassConfig c;
    c.types = j.at("types").get<int>();
    c.answers = j.at("answers").get<int>();
    c.prior_strength = j.at("prior_strength").get<double>();
    c.shift_mode = parse_shift_mode(j.at("shift_mode").get<std::string>());
    c.n_train = j.at("n_train").get<std::size_t>();
    c.n_test = j.at("n_test").get<std::size_t>();
    c.noise_sigma = j.at("noise_sigma").get<double>();
    c.signal = j.at("signal").get<double>();
    return c;
}

json to_json(const SpanDataConfig& c) {
    return {{"sentences", c.sentences},
            {"tokens_per_sentence", c.tokens_per_sentence},
            {"feature_dim", c.feature_dim},
            {"train_k", c.train_k},
            {"n_train", c.n_train},
            {"n_dev_per_sentence", c.n_dev_per_sentence},
            {"max_answer_len", c.max_answer_len},
            {"distractors", c.distractors},
            {"answer_amp", c.answer_amp},
            {"distractor_amp", c.distractor_amp},
            {"noise_sigma", c.noise_sigma}};
}

SpanDataConfig span_config_from_json(const json& j) {
    SpanDataConfig c;
    c.sentences = j.at("sentences").get<int>();
    c.tokens_per_sentence = j.at("tokens_per_sentence").get<int>();
    c.feature_dim = j.at("feature_dim").get<int>();
    c.train_k = j.at("train_k").get<int>();
    c.n_train = j.at("n_train").get<std::size_t>();
    c.n_dev_per_sentence = j.at("n_dev_per_sentence").get<std::size_t>();
    c.max_answer_len = j.at("max_answer_len").get<int>();
    c.distractors = j.at("distractors").get<int>();
    c.answer_amp = j.at("answer_amp").get<double>();
    c.distractor_amp = j.at("distractor_amp").get<double>();
    c.noise_sigma = j.at("noise_sigma").get<double>();
    return c;
}

namespace {

json header(const char* kind, const std::string& split, std::uint64_t seed, json cfg) {
    return {{"schema_version", kSchemaVersion}, {"kind", kind}, {"split", split}, {"seed", seed}, {"cfg", std::move(cfg)}};
}

// Calls `on_header(json)` for line 1 and `on_record(json, line_no)` for the rest.
template <class H, class R>
void read_lines(std::istream& is, const char* kind, H on_header, R on_record) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(std::string("malformed record: ") + e.what(), line_no);
        }
        try {
            if (line_no == 1) {
                if (j.at("schema_version").get<int>() != kSchemaVersion)
                    throw ParseError("unsupported schema_version", line_no);
                if (j.at("kind").get<std::string>() != kind)
                    throw ParseError(std::string("expected a ") + kind + " dataset", line_no);
                on_header(j);
            } else {
                on_record(j, line_no);
            }
        } catch (const json::exception& e) {
            throw ParseError(std::string("bad field: ") + e.what(), line_no);
        } catch (const Error& e) {
            if (dynamic_cast<const ParseError*>(&e)) throw;
            throw ParseError(e.what(), line_no);
        }
    }
}

}  // namespace

void serialize(std::ostream& os, const ClassDataset& ds) {
    os << header("classification", ds.split, ds.seed, to_json(ds.cfg)).dump() << '\n';
    for (const auto& s : ds.samples)
        os << json{{"qtype", s.question_type}, {"qfeat", s.question_features}, {"cfeat", s.context_features}, {"label", s.label}}.dump()
           << '\n';
}

void serialize(std::ostream& os, const SpanDataset& ds) {
    os << header("span", ds.split, ds.seed, to_json(ds.cfg)).dump() << '\n';
    for (const auto& s : ds.samples)
        os << json{{"tokens", s.tokens}, {"sent_bounds", s.sent_bounds}, {"start", s.start}, {"end", s.end}}.dump() << '\n';
}

ClassDataset load_class_dataset(std::istream& is) {
    ClassDataset ds;
    read_lines(
        is, "classification",
        [&](const json& h) {
            ds.cfg = class_config_from_json(h.at("cfg"));
            ds.seed = h.at("seed").get<std::uint64_t>();
            ds.split = h.at("split").get<std::string>();
        },
        [&](const json& j, std::size_t line_no) {
            QaSample s;
            s.question_type = j.at("qtype").get<int>();
            s.question_features = j.at("qfeat").get<std::vector<double>>();
            s.context_features = j.at("cfeat").get<std::vector<double>>();
            s.label = j.at("label").get<int>();
            if (s.label < 0 || s.label >= ds.cfg.answers) throw ParseError("label out of range", line_no);
            ds.samples.push_back(std::move(s));
        });
    return ds;
}

SpanDataset load_span_dataset(std::istream& is) {
    SpanDataset ds;
    read_lines(
        is, "span",
        [&](const json& h) {
            ds.cfg = span_config_from_json(h.at("cfg"));
            ds.seed = h.at("seed").get<std::uint64_t>();
            ds.split = h.at("split").get<std::string>();
        },
        [&](const json& j, std::size_t line_no) {
            SpanSample s;
            s.tokens = j.at("tokens").get<std::vector<std::vector<double>>>();
            s.sent_bounds = j.at("sent_bounds").get<std::vector<int>>();
            s.start = j.at("start").get<int>();
            s.end = j.at("end").get<int>();
            if (s.start < 0 || s.end < s.start || static_cast<std::size_t>(s.end) >= s.tokens.size())
                throw ParseError("answer span outside context", line_no);
            ds.samples.push_back(std::move(s));
        });
    return ds;
}

}  // namespace alo::data
