#include "shc/harness/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace shc::harness {

std::string to_string(ControllerKind k) {
    switch (k) {
        case ControllerKind::None: return "none";
        case ControllerKind::Analytic: return "analytic";
        case ControllerKind::Riccati: return "riccati";
        case ControllerKind::Pmp: return "pmp";
        case ControllerKind::Practical: return "practical";
    }
    return "?";
}

ControllerKind parse_controller(const std::string& name) {
    if (name == "none") return ControllerKind::None;
    if (name == "analytic") return ControllerKind::Analytic;
    if (name == "riccati") return ControllerKind::Riccati;
    if (name == "pmp") return ControllerKind::Pmp;
    if (name == "practical") return ControllerKind::Practical;
    throw ConfigError("unknown controller '" + name + "'");
}

std::string SchemeMask::name() const {
    std::string s = "P";
    if (integral) s += "I";
    if (derivative) s += "D";
    return s;
}

analytic::PidGains SchemeMask::apply(const analytic::PidGains& g) const {
    return {g.kp, integral ? g.ki : 0.0, derivative ? g.kd : 0.0};
}

SchemeMask parse_scheme(const std::string& name) {
    if (name == "P") return {false, false};
    if (name == "PI") return {true, false};
    if (name == "PD") return {false, true};
    if (name == "PID") return {true, true};
    throw ConfigError("unknown scheme mask '" + name + "' (expected P, PI, PD or PID)");
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    errno = 0;
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0' || errno == ERANGE || !std::isfinite(x))
        throw ConfigError("key '" + key + "': '" + v + "' is not a finite number");
    return x;
}

long long to_int(const std::string& key, const std::string& v) {
    errno = 0;
    char* end = nullptr;
    const long long x = std::strtoll(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0' || errno == ERANGE)
        throw ConfigError("key '" + key + "': '" + v + "' is not an integer");
    return x;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    errno = 0;
    char* end = nullptr;
    if (!v.empty() && v[0] == '-') throw ConfigError("key '" + key + "' must be nonnegative");
    const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0' || errno == ERANGE)
        throw ConfigError("key '" + key + "': '" + v + "' is not an unsigned integer");
    return x;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F&& f) {
    std::string s;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) s += ",";
        s += f(items[i]);
    }
    return s;
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
    KeyValues kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return parse_key_values(os.str());
}

void apply(ExperimentConfig& cfg, const KeyValues& kv) {
    using Setter = std::function<void(const std::string&, const std::string&)>;
    const auto index = [](Index& field) {
        return Setter([&field](const std::string& k, const std::string& v) { field = to_int(k, v); });
    };
    const auto integer = [](int& field) {
        return Setter([&field](const std::string& k, const std::string& v) {
            field = static_cast<int>(to_int(k, v));
        });
    };
    const auto real = [](double& field) {
        return Setter([&field](const std::string& k, const std::string& v) { field = to_double(k, v); });
    };

    const std::map<std::string, Setter> setters{
        {"seed", [&](const std::string& k, const std::string& v) { cfg.seed = to_u64(k, v); }},
        {"d", index(cfg.dim)},
        {"r", index(cfg.rank)},
        {"l", index(cfg.temporal)},
        {"N", index(cfg.samples)},
        {"T", index(cfg.horizon)},
        {"classes", index(cfg.classes)},
        {"off_subspace_gain", real(cfg.off_subspace_gain)},
        {"c", real(cfg.c)},
        {"c_grid",
         [&](const std::string& k, const std::string& v) {
             cfg.c_grid.clear();
             for (const auto& item : split(v, ',')) cfg.c_grid.push_back(to_double(k, item));
         }},
        {"threshold", real(cfg.threshold)},
        {"gains",
         [&](const std::string& k, const std::string& v) {
             const auto parts = split(v, ',');
             if (parts.size() != 3) throw ConfigError("key 'gains' needs three values P,I,D");
             cfg.gains = {to_double(k, parts[0]), to_double(k, parts[1]), to_double(k, parts[2])};
         }},
        {"controller",
         [&](const std::string&, const std::string& v) {
             cfg.controllers.clear();
             for (const auto& item : split(v, ',')) cfg.controllers.push_back(parse_controller(item));
         }},
        {"scheme",
         [&](const std::string&, const std::string& v) {
             cfg.schemes.clear();
             for (const auto& item : split(v, ',')) cfg.schemes.push_back(parse_scheme(item));
         }},
        {"perturbations",
         [&](const std::string& k, const std::string& v) {
             cfg.perturbations.clear();
             for (const auto& item : split(v, ',')) {
                 const auto pair = split(item, ':');
                 if (pair.size() != 2) throw ConfigError("perturbations are written as par:perp pairs");
                 cfg.perturbations.push_back({to_double(k, pair[0]), to_double(k, pair[1])});
             }
         }},
        {"trials", index(cfg.trials)},
        {"workers",
         [&](const std::string& k, const std::string& v) { cfg.workers = static_cast<unsigned>(to_u64(k, v)); }},
        {"msa_iters", integer(cfg.msa.max_outer_iters)},
        {"msa_inner", integer(cfg.msa.inner_steps)},
        {"msa_step", real(cfg.msa.step_size)},
        {"msa_halvings", integer(cfg.msa.max_halvings)},
        {"msa_tol", real(cfg.msa.tolerance)},
        {"bench_dims",
         [&](const std::string& k, const std::string& v) {
             cfg.bench_dims.clear();
             for (const auto& item : split(v, ',')) cfg.bench_dims.push_back(to_int(k, item));
         }},
        {"bench_T", index(cfg.bench_horizon)},
        {"bench_batch", index(cfg.bench_batch)},
        {"bench_r", index(cfg.bench_rank)},
        {"bench_runs", integer(cfg.bench_runs)},
        {"bench_warmup", integer(cfg.bench_warmup)},
        {"bench_pmp_iters", integer(cfg.bench_pmp_iters)},
        {"out", [&](const std::string&, const std::string& v) { cfg.out = v; }},
    };

    for (const auto& [key, value] : kv) {
        const auto it = setters.find(key);
        if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
        it->second(key, value);
    }
}

KeyValues to_key_values(const ExperimentConfig& cfg) {
    return {
        {"seed", std::to_string(cfg.seed)},
        {"d", std::to_string(cfg.dim)},
        {"r", std::to_string(cfg.rank)},
        {"l", std::to_string(cfg.temporal)},
        {"N", std::to_string(cfg.samples)},
        {"T", std::to_string(cfg.horizon)},
        {"classes", std::to_string(cfg.classes)},
        {"off_subspace_gain", fmt(cfg.off_subspace_gain)},
        {"c", fmt(cfg.c)},
        {"c_grid", join(cfg.c_grid, fmt)},
        {"threshold", fmt(cfg.threshold)},
        {"gains", fmt(cfg.gains.kp) + "," + fmt(cfg.gains.ki) + "," + fmt(cfg.gains.kd)},
        {"controller", join(cfg.controllers, [](ControllerKind k) { return to_string(k); })},
        {"scheme", join(cfg.schemes, [](const SchemeMask& m) { return m.name(); })},
        {"perturbations",
         join(cfg.perturbations, [](const PerturbationNorms& p) { return fmt(p.parallel) + ":" + fmt(p.perpendicular); })},
        {"trials", std::to_string(cfg.trials)},
        {"workers", std::to_string(cfg.workers)},
        {"msa_iters", std::to_string(cfg.msa.max_outer_iters)},
        {"msa_inner", std::to_string(cfg.msa.inner_steps)},
        {"msa_step", fmt(cfg.msa.step_size)},
        {"msa_halvings", std::to_string(cfg.msa.max_halvings)},
        {"msa_tol", fmt(cfg.msa.tolerance)},
        {"bench_dims", join(cfg.bench_dims, [](Index d) { return std::to_string(d); })},
        {"bench_T", std::to_string(cfg.bench_horizon)},
        {"bench_batch", std::to_string(cfg.bench_batch)},
        {"bench_r", std::to_string(cfg.bench_rank)},
        {"bench_runs", std::to_string(cfg.bench_runs)},
        {"bench_warmup", std::to_string(cfg.bench_warmup)},
        {"bench_pmp_iters", std::to_string(cfg.bench_pmp_iters)},
        {"out", cfg.out.string()},
    };
}

void ExperimentConfig::validate() const {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError(what);
    };
    require(dim >= 1, "d must be at least 1");
    require(rank >= 1 && rank <= dim, "r must satisfy 1 <= r <= d");
    require(temporal >= 1, "l must be at least 1");
    require(samples >= 1, "N must be at least 1");
    require(horizon >= 1, "T must be at least 1");
    require(classes >= 2, "classes must be at least 2");
    require(off_subspace_gain >= 0.0, "off_subspace_gain must be nonnegative");
    require(c >= 0.0, "c must be nonnegative");
    require(!c_grid.empty(), "c_grid must not be empty");
    for (double v : c_grid) require(v >= 0.0, "every c in c_grid must be nonnegative");
    require(threshold > 0.0 && threshold <= 1.0, "threshold must lie in (0, 1]");
    require(gains.kp >= 0.0 && gains.ki >= 0.0 && gains.kd >= 0.0, "gains must be nonnegative");
    require(!controllers.empty(), "at least one controller is required");
    require(!schemes.empty(), "at least one scheme is required");
    for (const auto& p : perturbations) {
        require(p.parallel >= 0.0 && p.perpendicular >= 0.0, "perturbation norms must be nonnegative");
        require(p.perpendicular == 0.0 || rank < dim, "perpendicular perturbations need r < d");
    }
    require(trials >= 1, "trials must be at least 1");
    try {
        msa.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    require(!bench_dims.empty(), "bench_dims must not be empty");
    for (Index d : bench_dims) require(d >= 1 && bench_rank <= d, "every bench dim must be >= bench_r");
    require(bench_horizon >= 1 && bench_batch >= 1 && bench_rank >= 1, "bench sizes must be positive");
    require(bench_runs >= 1 && bench_warmup >= 0 && bench_pmp_iters >= 1, "bench repetition counts invalid");
}

}  // namespace shc::harness
