#include "stoprec/runconfig.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace stoprec {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

[[noreturn]] void fail(const std::string& name, std::size_t line, const std::string& what) {
    throw std::runtime_error(name + ":" + std::to_string(line) + ": " + what);
}

bool parse_number(const std::string& s, double& out) {
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    const auto res = std::from_chars(begin, end, out);
    return res.ec == std::errc{} && res.ptr == end;
}

ConfigValue parse_scalar_or_array(const std::string& name, std::size_t line_no,
                                  const std::string& raw) {
    ConfigValue v;
    v.line = line_no;
    const std::string s = trim(raw);
    if (s.empty()) fail(name, line_no, "missing value");
    if (s.front() == '"') {
        if (s.size() < 2 || s.back() != '"') fail(name, line_no, "unterminated string");
        v.value = s.substr(1, s.size() - 2);
        return v;
    }
    if (s == "true" || s == "false") {
        v.value = (s == "true");
        return v;
    }
    if (s.front() == '[') {
        if (s.back() != ']') fail(name, line_no, "unterminated array");
        std::vector<std::string> strings;
        std::vector<double> numbers;
        bool has_string = false, has_number = false;
        std::string body = s.substr(1, s.size() - 2);
        std::stringstream ss(body);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            if (item.front() == '"') {
                if (item.size() < 2 || item.back() != '"')
                    fail(name, line_no, "bad string array element '" + item + "'");
                strings.push_back(item.substr(1, item.size() - 2));
                has_string = true;
            } else {
                double d;
                if (!parse_number(item, d))
                    fail(name, line_no, "bad array element '" + item + "'");
                numbers.push_back(d);
                has_number = true;
            }
        }
        if (has_string && has_number) fail(name, line_no, "mixed-type array");
        if (has_string)
            v.value = strings;
        else
            v.value = numbers;
        return v;
    }
    double d;
    if (!parse_number(s, d)) fail(name, line_no, "cannot parse value '" + s + "'");
    v.value = d;
    return v;
}

}  // namespace

ConfigTable parse_config_text(const std::string& text, const std::string& name) {
    ConfigTable table;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(name, line_no, "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) fail(name, line_no, "empty section name");
            table[section];
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) fail(name, line_no, "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) fail(name, line_no, "empty key");
        if (table[section].count(key)) fail(name, line_no, "duplicate key '" + key + "'");
        table[section][key] = parse_scalar_or_array(name, line_no, line.substr(eq + 1));
    }
    return table;
}

ConfigTable parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

namespace {

// Typed readers collecting violations instead of throwing one at a time.
struct Reader {
    const ConfigTable& table;
    std::string name;
    std::vector<std::string> errors;
    std::map<std::string, std::map<std::string, bool>> seen;

    void err(const std::string& sec, const std::string& key, const std::string& what) {
        errors.push_back("[" + sec + "] " + key + ": " + what);
    }

    const ConfigValue* find(const std::string& sec, const std::string& key) {
        seen[sec][key] = true;
        const auto sit = table.find(sec);
        if (sit == table.end()) return nullptr;
        const auto kit = sit->second.find(key);
        return kit == sit->second.end() ? nullptr : &kit->second;
    }

    template <typename T>
    void number(const std::string& sec, const std::string& key, T& out, double lo, double hi) {
        const ConfigValue* v = find(sec, key);
        if (!v) return;
        if (!std::holds_alternative<double>(v->value)) {
            err(sec, key, "expected a number");
            return;
        }
        const double d = std::get<double>(v->value);
        if (d < lo || d > hi) {
            err(sec, key, "value " + std::to_string(d) + " outside [" + std::to_string(lo) +
                              ", " + std::to_string(hi) + "]");
            return;
        }
        out = static_cast<T>(d);
    }

    void string_list(const std::string& sec, const std::string& key,
                     std::vector<std::string>& out) {
        const ConfigValue* v = find(sec, key);
        if (!v) return;
        if (std::holds_alternative<std::vector<std::string>>(v->value))
            out = std::get<std::vector<std::string>>(v->value);
        else
            err(sec, key, "expected an array of strings");
    }

    void number_list(const std::string& sec, const std::string& key, std::vector<double>& out,
                     double lo, double hi) {
        const ConfigValue* v = find(sec, key);
        if (!v) return;
        if (!std::holds_alternative<std::vector<double>>(v->value)) {
            err(sec, key, "expected an array of numbers");
            return;
        }
        const auto vals = std::get<std::vector<double>>(v->value);
        for (double d : vals)
            if (d < lo || d > hi) {
                err(sec, key, "element " + std::to_string(d) + " outside range");
                return;
            }
        out = vals;
    }

    void str(const std::string& sec, const std::string& key, std::string& out) {
        const ConfigValue* v = find(sec, key);
        if (!v) return;
        if (std::holds_alternative<std::string>(v->value))
            out = std::get<std::string>(v->value);
        else
            err(sec, key, "expected a string");
    }

    void reject_unknown() {
        for (const auto& [sec, keys] : table) {
            const auto sit = seen.find(sec);
            if (sit == seen.end()) {
                errors.push_back("unknown section [" + sec + "]");
                continue;
            }
            for (const auto& [key, val] : keys)
                if (!sit->second.count(key))
                    errors.push_back("unknown key '" + key + "' in [" + sec + "] (line " +
                                     std::to_string(val.line) + ")");
        }
    }
};

}  // namespace

RunConfig RunConfig::from_table(const ConfigTable& table, const std::string& name) {
    RunConfig cfg;
    Reader r{table, name, {}, {}};

    r.str("run", "out_dir", cfg.out_dir);
    double seed_d = static_cast<double>(cfg.seed);
    r.number("run", "seed", seed_d, 0, 9.0e15);
    cfg.seed = static_cast<std::uint64_t>(seed_d);
    r.number("run", "threads", cfg.threads, 1, 1024);

    r.string_list("matrices", "train", cfg.train_matrices);
    r.string_list("matrices", "tune", cfg.tune_matrices);

    r.number_list("grid", "alphas", cfg.grid.alphas, 0.0, 1e6);
    r.number_list("grid", "epsilons", cfg.grid.epsilons, 1e-12, 1.0);
    r.number_list("grid", "deltas", cfg.grid.deltas, 1e-12, 1.0);
    r.number_list("grid", "divergence_alphas", cfg.divergence_alphas, 0.0, 1e6);

    std::string solver_name = to_string(cfg.solver);
    r.str("solver", "type", solver_name);
    try {
        cfg.solver = solver_from_string(solver_name);
    } catch (const std::exception& e) {
        r.err("solver", "type", e.what());
    }
    r.number("solver", "rel_tol", cfg.solver_cfg.rel_tol, 1e-15, 0.999);
    r.number("solver", "max_iters", cfg.solver_cfg.max_iters, 0, 1e9);
    r.number("solver", "gmres_restart", cfg.solver_cfg.gmres_restart, 1, 100000);
    cfg.solver_cfg.solver = cfg.solver;

    r.number("mcmc", "fill_factor_multiplier", cfg.fixed.fill_factor_multiplier, 1e-6, 1e12);
    r.number("mcmc", "truncation_threshold", cfg.fixed.truncation_threshold, 0.0, 1.0);
    r.number("mcmc", "chain_count_cap", cfg.fixed.chain_count_cap, 1, 1e9);
    r.number("mcmc", "walk_length_cap", cfg.fixed.walk_length_cap, 1, 1e9);

    r.number("evaluate", "replicates", cfg.replicates, 2, 10000);
    r.number("evaluate", "clamp_multiplier", cfg.clamp_multiplier, 0.0, 1e6);

    r.number("surrogate", "graph_hidden", cfg.surrogate.graph_hidden, 1, 512);
    r.number("surrogate", "graph_layers", cfg.surrogate.graph_layers, 1, 4);
    r.number("surrogate", "xa_layers", cfg.surrogate.xa_layers, 1, 4);
    r.number("surrogate", "xa_hidden", cfg.surrogate.xa_hidden, 1, 512);
    r.number("surrogate", "xm_layers", cfg.surrogate.xm_layers, 1, 4);
    r.number("surrogate", "xm_hidden", cfg.surrogate.xm_hidden, 1, 512);
    r.number("surrogate", "combined_layers", cfg.surrogate.combined_layers, 1, 4);
    r.number("surrogate", "combined_hidden", cfg.surrogate.combined_hidden, 1, 512);
    r.number("surrogate", "dropout", cfg.surrogate.dropout, 0.0, 0.999);
    r.number("surrogate", "learn_rate", cfg.surrogate.learn_rate, 1e-12, 10.0);
    r.number("surrogate", "weight_decay", cfg.surrogate.weight_decay, 0.0, 10.0);
    r.number("surrogate", "batch_size", cfg.surrogate.batch_size, 1, 100000);
    r.number("surrogate", "max_epochs", cfg.surrogate.max_epochs, 1, 100000);
    r.number("surrogate", "patience", cfg.surrogate.patience, 1, 100000);

    r.number("bo", "budget", cfg.bo_budget, 0, 1000000);
    r.number("bo", "batch", cfg.bo_batch, 1, 1000000);
    r.number_list("bo", "xi", cfg.xis, 0.0, 100.0);
    r.number("bo", "restarts", cfg.acquisition.restarts, 1, 10000);
    r.number("bo", "max_opt_iters", cfg.acquisition.max_opt_iters, 1, 100000);
    r.number("bo", "random_points", cfg.random_points, 0, 1000000);
    r.number("bo", "alpha_lo", cfg.acquisition.bounds[0][0], 0.0, 1e6);
    r.number("bo", "alpha_hi", cfg.acquisition.bounds[0][1], 0.0, 1e6);

    r.reject_unknown();

    if (cfg.tune_matrices.empty())
        r.errors.push_back("[matrices] tune: at least one matrix is required");
    if (cfg.grid.alphas.empty() || cfg.grid.epsilons.empty() || cfg.grid.deltas.empty())
        r.errors.push_back("[grid] alphas/epsilons/deltas must be non-empty");
    if (cfg.xis.empty()) r.errors.push_back("[bo] xi: at least one value is required");
    for (int i = 0; i < 3; ++i)
        if (!(cfg.acquisition.bounds[i][0] < cfg.acquisition.bounds[i][1]))
            r.errors.push_back("[bo] bounds: lo must be < hi");

    if (!r.errors.empty()) {
        std::string msg = name + ": configuration errors:";
        for (const std::string& e : r.errors) msg += "\n  - " + e;
        throw std::invalid_argument(msg);
    }
    cfg.surrogate.seed = cfg.seed;
    cfg.acquisition.seed = cfg.seed;
    cfg.fixed.seed = cfg.seed;
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    return from_table(parse_config_file(path), path);
}

}  // namespace stoprec
