#include "relcap/config.hpp"

#include "relcap/common.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

extern char** environ;

namespace relcap {

Config::Config() {
    // Model sizes are desk-scale defaults; the reference configuration
    // (dv=2048, k_max=36, d_model=512, n_heads=8, batch_size=1024) is kept
    // in the README's configuration table.
    values_ = {
        {"dv", "64"},
        {"k_max", "36"},
        {"d_model", "128"},
        {"n_layers", "2"},
        {"n_heads", "4"},
        {"d_ff", "0"}, // 0 -> 4 * d_model
        {"max_len", "20"},
        {"gmm_components", "8"},
        {"gmm_full_covariance", "0"},
        {"d_rel", "16"},
        {"relation_hidden", "256"},
        {"relation_soft_embedding", "0"},
        {"relation_lr", "0.005"},
        {"relation_epochs", "10"},
        {"learning_rate", "0.0005"},
        {"adam_beta1", "0.8"},
        {"adam_beta2", "0.999"},
        {"adam_eps", "1e-8"},
        {"weight_decay", "0"}, // fixed at zero; betas above carry the optimizer defaults
        {"batch_size", "32"},
        {"max_epochs", "35"},
        {"early_stop_patience", "5"},
        {"early_stop_min_delta", "1e-4"},
        {"seed", "1"},
        {"level", "object"},          // object | image | hierarchical
        {"graph_mode", "structured"}, // structured | literal
        {"explicit_scene_nodes", "0"},
        {"edge_gates", "1"},
        {"context_group", "subclass"}, // subclass | superclass
        {"beam", "3"},
        {"min_count", "5"},
        {"dtype", "f64"}, // f64 | f32
        // Synthetic generator.
        {"gen_scenes", "500"},
        {"gen_mode", "spatial"}, // spatial | contextual
        {"gen_objects_min", "2"},
        {"gen_objects_max", "2"},
        {"gen_classes", "8"},
        {"gen_context_size", "8"},
        {"gen_feature_noise", "0.1"},
        {"gen_context_bias", "0.05"},
        {"gen_predicate_prior", "0.9"},
    };
}

void Config::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ValidationError("config: unknown key '" + key + "'");
    it->second = value;
}

void Config::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config: cannot open " + path);
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto notspace = [](unsigned char c) { return !std::isspace(c); };
        line.erase(line.begin(), std::find_if(line.begin(), line.end(), notspace));
        line.erase(std::find_if(line.rbegin(), line.rend(), notspace).base(), line.end());
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config: " + path + ":" + std::to_string(line_no) +
                                  ": expected key=value, got '" + line + "'");
        auto trim = [&](std::string s) {
            s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
            s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
            return s;
        };
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void Config::apply_env() {
    const std::string prefix = "RELCAP_";
    for (char** env = environ; env && *env; ++env) {
        std::string entry(*env);
        if (entry.rfind(prefix, 0) != 0) continue;
        auto eq = entry.find('=');
        if (eq == std::string::npos) continue;
        std::string key = entry.substr(prefix.size(), eq - prefix.size());
        std::transform(key.begin(), key.end(), key.begin(),
                       [](unsigned char c) { return char(std::tolower(c)); });
        set(key, entry.substr(eq + 1));
    }
}

const std::string& Config::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ValidationError("config: unknown key '" + key + "'");
    return it->second;
}

long Config::get_int(const std::string& key) const {
    try {
        std::size_t used = 0;
        long v = std::stol(get(key), &used);
        if (used != get(key).size()) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        throw ValidationError("config: key '" + key + "' = '" + get(key) + "' is not an integer");
    }
}

double Config::get_double(const std::string& key) const {
    try {
        std::size_t used = 0;
        double v = std::stod(get(key), &used);
        if (used != get(key).size()) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception&) {
        throw ValidationError("config: key '" + key + "' = '" + get(key) + "' is not a number");
    }
}

bool Config::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "1" || v == "true" || v == "on") return true;
    if (v == "0" || v == "false" || v == "off") return false;
    throw ValidationError("config: key '" + key + "' = '" + v + "' is not a boolean");
}

std::vector<std::string> Config::echo() const {
    std::vector<std::string> out;
    out.reserve(values_.size());
    for (const auto& [k, v] : values_) out.push_back(k + "=" + v);
    return out;
}

} // namespace relcap
