#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace alo::config {

/// Flat `key = value` pairs. Values keep their original text.
class KeyValues {
   public:
    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& all() const { return values_; }

    std::optional<std::string> get(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::size_t get_size(const std::string& key, std::size_t fallback) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::uint64_t> get_u64_list(const std::string& key, const std::vector<std::uint64_t>& fallback) const;

   private:
    std::map<std::string, std::string> values_;
};

/// A parsed file: keys before the first `[section]` are shared defaults, each
/// section is one entry and inherits the defaults.
struct Document {
    KeyValues defaults;
    std::vector<std::pair<std::string, KeyValues>> sections;
};

/// Lines are `key = value`, `[name]`, blank, or start with '#'.
Document parse(std::istream& is);
Document parse_file(const std::string& path);

}  // namespace alo::config
