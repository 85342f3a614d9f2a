#include "unfold/run_config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace unfold {

namespace {

struct KeySpec {
    const char* key;
    const char* def;
    bool path;
};

// Defaults follow the desk-scale compressed sensing setup: m/n = 25%,
// batch size 128, rho = 1, lambda = 1e-4, noise std 1e-2.
const KeySpec kKeys[] = {
    {"seed", "0", false},
    {"out", "unfold_out", true},
    {"model", "admm_dad", false},
    {"n", "64", false},
    {"m", "16", false},
    {"N", "640", false},
    {"layers", "5", false},
    {"rho", "1", false},
    {"lambda", "1e-4", false},
    {"normalization", "scale_inv_sqrt_m", false},
    {"noise_std", "0.01", false},
    {"eta", "0", false},
    {"data.source", "synthetic", false},
    {"data.path", "", true},
    {"data.test_path", "", true},
    {"data.limit", "0", false},
    {"data.test_limit", "0", false},
    {"data.signal_model", "piecewise_constant", false},
    {"data.sparsity", "8", false},
    {"data.train_size", "2000", false},
    {"data.test_size", "500", false},
    {"train.epochs", "40", false},
    {"train.batch_size", "128", false},
    {"train.lr", "1e-4", false},
    {"train.epsilon", "0", false},
    {"train.eval_epsilon", "", false},
    {"train.patience", "5", false},
    {"train.warmup_epochs", "1", false},
    {"epsilons", "0.01,0.1,1", false},
    {"sweep.layers", "", false},
    {"sweep.redundancy", "", false},
    {"checkpoint", "", true},
    {"attack.kappa_floor", "1e-12", false},
    {"theory.alpha", "", false},
    {"theory.beta", "", false},
    {"theory.normA", "", false},
    {"theory.normAtA", "", false},
    {"theory.normYF", "", false},
    {"theory.s", "", false},
    {"theory.B_in", "", false},
    {"theory.B_out", "", false},
    {"theory.kappa", "", false},
    {"theory.epsilon", "", false},
    {"theory.zeta", "0.05", false},
    {"gradcheck.n", "12", false},
    {"gradcheck.m", "4", false},
    {"gradcheck.N", "24", false},
    {"gradcheck.layers", "3", false},
    {"gradcheck.samples", "3", false},
    {"gradcheck.h", "1e-6", false},
    {"gradcheck.lambda", "0.05", false},
    {"gradcheck.tol_input", "1e-5", false},
    {"gradcheck.tol_param", "1e-4", false},
    {"gradcheck.corrupt", "false", false},
};

const KeySpec* find_key(const std::string& key) {
    for (const auto& k : kKeys)
        if (key == k.key) return &k;
    return nullptr;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) out.push_back(tok);
    }
    return out;
}

double parse_real(const std::string& key, const std::string& v) {
    char* end = nullptr;
    errno = 0;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || *end != '\0' || errno == ERANGE) throw ConfigError("key '" + key + "': '" + v + "' is not a number");
    return d;
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
    char* end = nullptr;
    errno = 0;
    const long long d = std::strtoll(v.c_str(), &end, 10);
    if (v.empty() || *end != '\0' || errno == ERANGE) throw ConfigError("key '" + key + "': '" + v + "' is not an integer");
    return d;
}

}  // namespace

RunConfig::RunConfig() {
    for (const auto& k : kKeys) values_[k.key] = k.def;
}

const std::vector<std::string>& RunConfig::known_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> v;
        for (const auto& k : kKeys) v.emplace_back(k.key);
        return v;
    }();
    return keys;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
    RunConfig c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        try {
            c.set(key, trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (!find_key(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
    explicit_[key] = true;
}

bool RunConfig::is_set(const std::string& key) const {
    auto it = explicit_.find(key);
    return it != explicit_.end() && it->second && !values_.at(key).empty();
}

const std::string& RunConfig::str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

double RunConfig::real(const std::string& key) const { return parse_real(key, str(key)); }

std::int64_t RunConfig::integer(const std::string& key) const { return parse_int(key, str(key)); }

std::uint64_t RunConfig::uint(const std::string& key) const {
    const std::string& v = str(key);
    char* end = nullptr;
    errno = 0;
    const unsigned long long d = std::strtoull(v.c_str(), &end, 10);
    if (v.empty() || v[0] == '-' || *end != '\0' || errno == ERANGE)
        throw ConfigError("key '" + key + "': '" + v + "' is not an unsigned integer");
    return d;
}

bool RunConfig::flag(const std::string& key) const {
    std::string v = str(key);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off" || v.empty()) return false;
    throw ConfigError("key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<double> RunConfig::real_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& t : split_list(str(key))) out.push_back(parse_real(key, t));
    return out;
}

std::vector<std::int64_t> RunConfig::int_list(const std::string& key) const {
    std::vector<std::int64_t> out;
    for (const auto& t : split_list(str(key))) out.push_back(parse_int(key, t));
    return out;
}

void RunConfig::resolve_paths(const std::string& base) {
    namespace fs = std::filesystem;
    for (const auto& k : kKeys) {
        if (!k.path) continue;
        std::string& v = values_[k.key];
        if (v.empty()) continue;
        fs::path p(v);
        if (p.is_relative()) p = fs::path(base) / p;
        v = p.lexically_normal().string();
    }
}

std::string RunConfig::echo() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

}  // namespace unfold
