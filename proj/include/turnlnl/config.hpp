#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace turnlnl {

/// Line-oriented `[section]` / `key = value` configuration. Keys are checked
/// against the known schema at parse time; comma-separated lists are only
/// legal on the sweepable keys (turn.tau, turn.e_lp, turn.e_fft, noise.ratio,
/// optim.lp_lr, optim.fft_lr, run.seed). '#' starts a comment.
class Config {
public:
    static Config parse_file(const std::filesystem::path& path);
    static Config parse_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback) const;
    std::string require(const std::string& section, const std::string& key) const;

    double get_double(const std::string& section, const std::string& key,
                      double fallback) const;
    std::uint64_t get_u64(const std::string& section, const std::string& key,
                          std::uint64_t fallback) const;
    bool get_bool(const std::string& section, const std::string& key,
                  bool fallback) const;

    /// Comma-split values of a sweepable key (singleton when absent,
    /// using the fallback).
    std::vector<std::string> sweep_values(const std::string& section,
                                          const std::string& key,
                                          const std::string& fallback) const;

    void set(const std::string& section, const std::string& key,
             const std::string& value);

    const std::map<std::string, std::map<std::string, std::string>>& sections() const {
        return sections_;
    }

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
};

double parse_double(const std::string& value, const std::string& what);
std::uint64_t parse_u64(const std::string& value, const std::string& what);
bool parse_bool(const std::string& value, const std::string& what);

} // namespace turnlnl
