#include "turnlnl/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "turnlnl/errors.hpp"

namespace turnlnl {

namespace {

const std::map<std::string, std::set<std::string>>& schema() {
    static const std::map<std::string, std::set<std::string>> s = {
        {"data",
         {"source", "path", "classes", "dim", "feature_dim", "train_per_class",
          "test_per_class", "pretrain_per_class", "separation", "valid_fraction"}},
        {"noise", {"kind", "ratio", "std", "groups", "allow_identity_flip"}},
        {"model", {"hidden", "adapter", "reinit_head"}},
        {"method", {"name", "tuning", "q", "elr_beta", "elr_lambda"}},
        {"turn",
         {"e_lp", "e_fft", "tau", "cleansing", "lp_enabled", "min_class_fit",
          "per_class"}},
        {"optim",
         {"lp_kind", "lp_lr", "fft_kind", "fft_lr", "momentum", "weight_decay",
          "batch"}},
        {"run", {"seed", "epochs", "deterministic"}},
    };
    return s;
}

const std::set<std::pair<std::string, std::string>>& sweepable() {
    static const std::set<std::pair<std::string, std::string>> s = {
        {"turn", "tau"},   {"turn", "e_lp"},    {"turn", "e_fft"},
        {"noise", "ratio"}, {"optim", "lp_lr"}, {"optim", "fft_lr"},
        {"run", "seed"},
    };
    return s;
}

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

} // namespace

Config Config::parse_string(const std::string& text, const std::string& origin) {
    Config cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = origin + ":" + std::to_string(lineno);
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(where + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!schema().count(section))
                throw ConfigError(where + ": unknown section [" + section + "]");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(where + ": expected key = value");
        if (section.empty())
            throw ConfigError(where + ": key outside any section");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto& allowed = schema().at(section);
        if (!allowed.count(key))
            throw ConfigError(where + ": unknown key " + section + "." + key);
        if (value.find(',') != std::string::npos && !sweepable().count({section, key}))
            throw ConfigError(where + ": " + section + "." + key +
                              " is not sweepable, lists not allowed");
        if (cfg.sections_[section].count(key))
            throw ConfigError(where + ": duplicate key " + section + "." + key);
        cfg.sections_[section][key] = value;
    }
    return cfg;
}

Config Config::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str(), path.string());
}

bool Config::has(const std::string& section, const std::string& key) const {
    const auto it = sections_.find(section);
    return it != sections_.end() && it->second.count(key) > 0;
}

std::string Config::get(const std::string& section, const std::string& key,
                        const std::string& fallback) const {
    const auto it = sections_.find(section);
    if (it == sections_.end()) return fallback;
    const auto kit = it->second.find(key);
    return kit == it->second.end() ? fallback : kit->second;
}

std::string Config::require(const std::string& section, const std::string& key) const {
    if (!has(section, key))
        throw ConfigError("missing required key " + section + "." + key);
    return get(section, key, "");
}

double Config::get_double(const std::string& section, const std::string& key,
                          double fallback) const {
    if (!has(section, key)) return fallback;
    return parse_double(get(section, key, ""), section + "." + key);
}

std::uint64_t Config::get_u64(const std::string& section, const std::string& key,
                              std::uint64_t fallback) const {
    if (!has(section, key)) return fallback;
    return parse_u64(get(section, key, ""), section + "." + key);
}

bool Config::get_bool(const std::string& section, const std::string& key,
                      bool fallback) const {
    if (!has(section, key)) return fallback;
    return parse_bool(get(section, key, ""), section + "." + key);
}

std::vector<std::string> Config::sweep_values(const std::string& section,
                                              const std::string& key,
                                              const std::string& fallback) const {
    const std::string raw = get(section, key, fallback);
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(raw);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty())
            throw ConfigError("empty list element in " + section + "." + key);
        out.push_back(item);
    }
    if (out.empty()) throw ConfigError("empty value for " + section + "." + key);
    return out;
}

void Config::set(const std::string& section, const std::string& key,
                 const std::string& value) {
    sections_[section][key] = value;
}

double parse_double(const std::string& value, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("bad numeric value for " + what + ": '" + value + "'");
    }
}

std::uint64_t parse_u64(const std::string& value, const std::string& what) {
    std::uint64_t v = 0;
    const auto* first = value.data();
    const auto* last = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw ConfigError("bad integer value for " + what + ": '" + value + "'");
    return v;
}

bool parse_bool(const std::string& value, const std::string& what) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off")
        return false;
    throw ConfigError("bad boolean value for " + what + ": '" + value + "'");
}

} // namespace turnlnl
