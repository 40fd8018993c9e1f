#pragma once

#include <map>
#include <string>
#include <vector>

namespace relcap {

/// Flat key=value configuration. Precedence: built-in defaults, then a
/// config file, then RELCAP_* environment overrides, then CLI flags.
/// Unknown keys are rejected everywhere so typos fail loudly. The full
/// table is echoed into every metrics-log header.
class Config {
  public:
    Config(); // defaults

    void load_file(const std::string& path);
    /// Scans the environment for RELCAP_<KEY> overrides.
    void apply_env();
    void set(const std::string& key, const std::string& value);

    const std::string& get(const std::string& key) const;
    long get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    /// Sorted "key=value" lines.
    std::vector<std::string> echo() const;

  private:
    std::map<std::string, std::string> values_;
};

} // namespace relcap
