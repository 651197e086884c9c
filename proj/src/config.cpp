#include "alo/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "alo/errors.hpp"

namespace alo::config {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const auto* end = text.data() + text.size();
    auto [p, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || p != end) throw ConfigError("bad value '" + text + "' for key '" + key + "'");
    return v;
}

}  // namespace

std::optional<std::string> KeyValues::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
}

int KeyValues::get_int(const std::string& key, int fallback) const {
    auto v = get(key);
    return v ? parse_number<int>(key, *v) : fallback;
}

std::size_t KeyValues::get_size(const std::string& key, std::size_t fallback) const {
    auto v = get(key);
    return v ? parse_number<std::size_t>(key, *v) : fallback;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    // from_chars for double is missing on older standard libraries.
    std::istringstream is(*v);
    double d = 0.0;
    if (!(is >> d) || !is.eof()) throw ConfigError("bad value '" + *v + "' for key '" + key + "'");
    return d;
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "off") return false;
    throw ConfigError("bad boolean '" + *v + "' for key '" + key + "'");
}

std::vector<std::uint64_t> KeyValues::get_u64_list(const std::string& key,
                                                   const std::vector<std::uint64_t>& fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    std::vector<std::uint64_t> out;
    std::stringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_number<std::uint64_t>(key, item));
    }
    return out;
}

Document parse(std::istream& is) {
    Document doc;
    KeyValues* target = &doc.defaults;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(is, raw)) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError("unterminated section header", line_no);
            doc.sections.emplace_back(trim(line.substr(1, line.size() - 2)), doc.defaults);
            target = &doc.sections.back().second;
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ParseError("empty key", line_no);
        target->set(key, trim(line.substr(eq + 1)));
    }
    return doc;
}

Document parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse(in);
}

}  // namespace alo::config
