#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mfsde/errors.hpp"
#include "mfsde/scenario.hpp"

namespace mfsde {

/// Flat sectioned key=value file. '#' starts a comment, whitespace is
/// trimmed, keys are section-scoped ("[grid] n_points=201"). Unknown sections
/// or keys are configuration errors so typos fail loudly.
class ConfigFile {
public:
    static ConfigFile parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw config_error("cannot open config file '" + path + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_string(ss.str(), path);
    }

    static ConfigFile parse_string(const std::string& text, const std::string& origin = "<string>") {
        ConfigFile cfg;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto cut = line.find('#');
            if (cut != std::string::npos) line.erase(cut);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw config_error(origin + ":" + std::to_string(lineno) + ": malformed section");
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw config_error(origin + ":" + std::to_string(lineno) + ": expected key=value");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty())
                throw config_error(origin + ":" + std::to_string(lineno) + ": empty key");
            cfg.values_[section + "." + key] = value;
        }
        return cfg;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }
    double get_num(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing junk");
            return v;
        } catch (const std::exception&) {
            throw config_error("config key '" + key + "': not a number: '" + it->second + "'");
        }
    }
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
        const double v = get_num(key, static_cast<double>(fallback));
        return static_cast<std::int64_t>(v);
    }

    const std::map<std::string, std::string>& values() const { return values_; }

    /// Marks keys consumed; unknown leftovers are reported by validate().
    void consume(const std::string& key) { consumed_.insert_or_assign(key, true); }
    void validate_all_consumed() const {
        for (const auto& [k, v] : values_)
            if (consumed_.find(k) == consumed_.end())
                throw config_error("unknown config key '" + k + "'");
    }

    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

private:
    std::map<std::string, std::string> values_;
    std::map<std::string, bool> consumed_;
};

namespace detail {

inline std::vector<double> parse_number_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = ConfigFile::trim(tok);
        if (tok.empty()) continue;
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw config_error(what + ": not a number: '" + tok + "'");
        }
    }
    return out;
}

inline Profile parse_profile(const std::string& text) {
    const auto colon = text.find(':');
    const std::string kind = colon == std::string::npos ? text : text.substr(0, colon);
    const std::string args = colon == std::string::npos ? "" : text.substr(colon + 1);
    const std::vector<double> a = parse_number_list(args, "profile '" + text + "'");
    auto need = [&](std::size_t n) {
        if (a.size() != n)
            throw config_error("profile '" + text + "': expected " + std::to_string(n) +
                               " parameter(s)");
    };
    if (kind == "id") { need(0); return Profile::identity(); }
    if (kind == "const") { need(1); return Profile::constant(a[0]); }
    if (kind == "gauss") { need(2); return Profile::gauss_bump(a[0], a[1]); }
    if (kind == "gausspdf") { need(2); return Profile::gauss_pdf(a[0], a[1]); }
    if (kind == "tanh") { need(1); return Profile::tanh_profile(a[0]); }
    if (kind == "sin") { need(1); return Profile::sin_profile(a[0]); }
    throw config_error("unknown profile '" + text + "'");
}

inline ScalarMap parse_scalar_map(const std::string& name) {
    try {
        return ScalarMap::parse(name);
    } catch (const std::invalid_argument& e) {
        throw config_error(e.what());
    }
}

/// "w:mean:std; w:mean:std; ..."
inline DensitySpec parse_density(const std::string& text) {
    DensitySpec spec;
    std::stringstream ss(text);
    std::string comp;
    while (std::getline(ss, comp, ';')) {
        comp = ConfigFile::trim(comp);
        if (comp.empty()) continue;
        std::stringstream cs(comp);
        std::string tok;
        std::vector<double> vals;
        while (std::getline(cs, tok, ':')) vals.push_back(std::stod(ConfigFile::trim(tok)));
        if (vals.size() == 2)
            spec.components.push_back({1.0, vals[0], vals[1]});
        else if (vals.size() == 3)
            spec.components.push_back({vals[0], vals[1], vals[2]});
        else
            throw config_error("density component '" + comp + "': expected mean:std or w:mean:std");
    }
    if (spec.components.empty()) throw config_error("density '" + text + "' has no components");
    for (const auto& c : spec.components)
        if (!(c.std > 0.0)) throw config_error("density '" + text + "': std must be positive");
    return spec;
}

} // namespace detail

/// Check-level knobs shared by the verify / convergence commands.
struct CheckConfig {
    std::vector<double> h_values = {0.2, 0.1, 0.05, 0.025};
    std::vector<double> checkpoints; // empty: five evenly spaced in [t, T]
};

struct RunConfig {
    ScenarioSpec scenario;
    CheckConfig check;
};

/// Builds a scenario spec from a config file: either a catalog name under
/// [scenario], or a full custom spec; either way, section values override the
/// base spec field by field.
inline RunConfig load_run_config(const std::string& path) {
    ConfigFile cfg = ConfigFile::parse_file(path);
    RunConfig rc;

    const std::string name = cfg.get("scenario.name", "");
    cfg.consume("scenario.name");
    ScenarioSpec s = name.empty() || name == "custom" ? ScenarioSpec{} : scenario_catalog(name);
    if (name.empty()) s.name = "custom";

    auto num = [&](const char* key, double& field) {
        if (cfg.has(key)) field = cfg.get_num(key, field);
        cfg.consume(key);
    };
    auto integer = [&](const char* key, int& field) {
        if (cfg.has(key)) field = static_cast<int>(cfg.get_int(key, field));
        cfg.consume(key);
    };

    num("grid.x_min", s.x_min);
    num("grid.x_max", s.x_max);
    integer("grid.n_points", s.n_points);
    num("time.t", s.t);
    num("time.T", s.T);
    integer("time.n_steps", s.n_steps);

    num("model.b0", s.coeffs.b0);
    num("model.b1", s.coeffs.b1);
    num("model.sigma0", s.coeffs.sigma0);
    num("model.sigma1", s.coeffs.sigma1);
    if (cfg.has("model.outer_b")) s.coeffs.outer_b = detail::parse_scalar_map(cfg.get("model.outer_b", ""));
    cfg.consume("model.outer_b");
    if (cfg.has("model.outer_sigma"))
        s.coeffs.outer_sigma = detail::parse_scalar_map(cfg.get("model.outer_sigma", ""));
    cfg.consume("model.outer_sigma");
    if (cfg.has("model.h_b")) s.coeffs.h_b = detail::parse_profile(cfg.get("model.h_b", ""));
    cfg.consume("model.h_b");
    if (cfg.has("model.h_sigma")) s.coeffs.h_sigma = detail::parse_profile(cfg.get("model.h_sigma", ""));
    cfg.consume("model.h_sigma");
    if (cfg.has("model.beta")) s.coeffs.beta = detail::parse_profile(cfg.get("model.beta", ""));
    cfg.consume("model.beta");

    if (cfg.has("mu.components")) s.mu = detail::parse_density(cfg.get("mu.components", ""));
    cfg.consume("mu.components");

    if (cfg.has("phi.g")) s.phi_g = detail::parse_profile(cfg.get("phi.g", ""));
    cfg.consume("phi.g");
    if (cfg.has("phi.outer")) s.phi_outer = detail::parse_scalar_map(cfg.get("phi.outer", ""));
    cfg.consume("phi.outer");
    if (cfg.has("phi.h")) s.phi_h = detail::parse_profile(cfg.get("phi.h", ""));
    cfg.consume("phi.h");
    num("phi.scale", s.phi_scale);
    num("phi.offset", s.phi_offset);
    num("phi.const", s.phi_const);

    integer("mc.n_paths", s.n_paths);
    if (cfg.has("mc.seed")) s.seed = static_cast<std::uint64_t>(cfg.get_int("mc.seed", 0));
    cfg.consume("mc.seed");
    num("mc.x0", s.x0);

    integer("solver.picard_iters", s.picard_iters);
    num("solver.picard_tol", s.picard_tol);
    integer("solver.snapshot_every", s.kernel_snapshot_every);

    if (cfg.has("check.h_values"))
        rc.check.h_values = detail::parse_number_list(cfg.get("check.h_values", ""), "check.h_values");
    cfg.consume("check.h_values");
    if (cfg.has("check.checkpoints"))
        rc.check.checkpoints =
            detail::parse_number_list(cfg.get("check.checkpoints", ""), "check.checkpoints");
    cfg.consume("check.checkpoints");
    num("check.c_est_master", s.c_est_master);
    num("check.c_est_ito", s.c_est_ito);

    if (cfg.has("mu.directions")) {
        s.directions.clear();
        std::stringstream ss(cfg.get("mu.directions", ""));
        std::string one;
        while (std::getline(ss, one, '|')) {
            one = ConfigFile::trim(one);
            if (!one.empty()) s.directions.push_back(detail::parse_density(one));
        }
    }
    cfg.consume("mu.directions");

    cfg.validate_all_consumed();
    rc.scenario = s;
    return rc;
}

} // namespace mfsde
