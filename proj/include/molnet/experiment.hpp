#pragma once

// Experiment driver behind the command-line tool: key=value configuration,
// parameter sweeps, CSV tables and the metadata companion file.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "molnet/analysis.hpp"
#include "molnet/detector.hpp"
#include "molnet/geometry.hpp"
#include "molnet/interference.hpp"
#include "molnet/simulator.hpp"

namespace molnet {

inline constexpr std::string_view version = "0.1.0";

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Text helpers
// ---------------------------------------------------------------------------

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_double(std::string_view s, std::string_view what) {
    s = trim(s);
    if (s == "inf")
        return INFINITY;
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ConfigError("invalid number for " + std::string(what) + ": '" + std::string(s) + "'");
    return v;
}

inline std::uint64_t parse_uint(std::string_view s, std::string_view what) {
    s = trim(s);
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ConfigError("invalid integer for " + std::string(what) + ": '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        out.emplace_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return out;
}

/// Comma list ("1,2,4") or inclusive range "start:stop:step".
inline std::vector<double> parse_values(std::string_view s, std::string_view what) {
    s = trim(s);
    if (s.empty())
        return {};
    if (s.find(':') != std::string_view::npos) {
        const auto parts = split(s, ':');
        if (parts.size() != 3)
            throw ConfigError(std::string(what) + ": range must be start:stop:step");
        const double a = parse_double(parts[0], what), b = parse_double(parts[1], what),
                     step = parse_double(parts[2], what);
        if (!(step > 0.0) || !(b >= a))
            throw ConfigError(std::string(what) + ": empty or invalid range");
        const auto n = static_cast<std::uint64_t>(std::floor((b - a) / step + 1e-9));
        std::vector<double> out;
        for (std::uint64_t i = 0; i <= n; ++i) {
            // Snap to 1e-12 so 0.1 steps land on clean decimal values.
            const double v = a + static_cast<double>(i) * step;
            out.push_back(std::round(v * 1e12) / 1e12);
        }
        return out;
    }
    std::vector<double> out;
    for (const auto& part : split(s, ','))
        out.push_back(parse_double(part, what));
    return out;
}

inline std::string join_values(const std::vector<double>& v, char sep = ';') {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i)
            out += sep;
        out += format_double(v[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& sweep_variables() {
    static const std::vector<std::string> vars{"L", "T", "lambda_p", "x2", "sigma", "D", "mu", "y0_norm"};
    return vars;
}

inline const std::vector<std::string>& known_methods() {
    static const std::vector<std::string> m{"exact", "upper", "ook", "mc"};
    return m;
}

struct ExperimentConfig {
    SystemParams params{};
    std::string sweep_var;
    std::vector<double> sweep_values;
    std::vector<std::string> methods{"exact", "upper"};
    TrialConfig mc{};
    IntegrationSpec spec = default_interference_spec();
    DerivativeBudget budget{};
    std::vector<double> lt_s{0.5, 1.0};
    double parent_distance_um = 50.0;
    std::vector<double> y_values_um;
    std::string output_path;

    void validate() const {
        params.validate();
        spec.validate();
        if (!sweep_var.empty()) {
            const auto& vars = sweep_variables();
            if (std::find(vars.begin(), vars.end(), sweep_var) == vars.end())
                throw ConfigError("unknown sweep_var '" + sweep_var + "'");
            if (sweep_values.empty())
                throw ConfigError("sweep_var given without sweep_values");
        }
        if (methods.empty())
            throw ConfigError("methods must be non-empty");
        for (const auto& m : methods)
            if (std::find(known_methods().begin(), known_methods().end(), m) == known_methods().end())
                throw ConfigError("unknown method '" + m + "'");
        if (mc.trials < 1)
            throw ConfigError("trials must be >= 1");
        if (!(parent_distance_um >= 0.0))
            throw ConfigError("parent_distance_um must be non-negative");
    }
};

inline std::vector<std::string> parse_methods(std::string_view s) {
    std::vector<std::string> out;
    for (auto& m : split(s, ','))
        if (!m.empty())
            out.push_back(m);
    return out;
}

inline ExperimentConfig parse_config(std::istream& in) {
    ExperimentConfig c;
    std::optional<double> y0_um;
    std::optional<double> y0_over_r0;
    std::map<std::string, int> seen;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view sv = line;
        if (const auto hash = sv.find('#'); hash != std::string_view::npos)
            sv = sv.substr(0, hash);
        sv = trim(sv);
        if (sv.empty())
            continue;
        const auto eq = sv.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
        const std::string key(trim(sv.substr(0, eq)));
        const std::string_view val = trim(sv.substr(eq + 1));
        if (seen[key]++)
            throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        auto& p = c.params;
        if (key == "lambda_p_per_um3")
            p.lambda_p = parse_double(val, key);
        else if (key == "r0_um")
            p.channel.r0 = parse_double(val, key);
        else if (key == "sigma_um")
            p.sigma = parse_double(val, key);
        else if (key == "D_um2_per_s")
            p.channel.D = parse_double(val, key);
        else if (key == "mu_per_s")
            p.channel.mu = parse_double(val, key);
        else if (key == "T_s")
            p.channel.T = parse_double(val, key);
        else if (key == "L")
            p.L = static_cast<int>(parse_uint(val, key));
        else if (key == "x_molecules")
            p.constellation = parse_values(val, key);
        else if (key == "lambda_0_per_s")
            p.lambda_0 = parse_double(val, key);
        else if (key == "y0_um")
            y0_um = parse_double(val, key);
        else if (key == "y0_over_r0")
            y0_over_r0 = parse_double(val, key);
        else if (key == "sweep_var")
            c.sweep_var = std::string(val);
        else if (key == "sweep_values")
            c.sweep_values = parse_values(val, key);
        else if (key == "methods")
            c.methods = parse_methods(val);
        else if (key == "trials")
            c.mc.trials = parse_uint(val, key);
        else if (key == "seed")
            c.mc.seed = parse_uint(val, key);
        else if (key == "workers")
            c.mc.workers = static_cast<unsigned>(parse_uint(val, key));
        else if (key == "box_half_width_um")
            c.mc.box_half_width = parse_double(val, key);
        else if (key == "exclusion_mode") {
            if (val == "analysis_matched")
                c.mc.exclusion_mode = ExclusionMode::analysis_matched;
            else if (val == "full_exclusion")
                c.mc.exclusion_mode = ExclusionMode::full_exclusion;
            else
                throw ConfigError("exclusion_mode must be analysis_matched or full_exclusion");
        } else if (key == "abs_tol")
            c.spec.abs_tol = parse_double(val, key);
        else if (key == "rel_tol")
            c.spec.rel_tol = parse_double(val, key);
        else if (key == "max_derivative_order")
            c.budget.max_order = static_cast<int>(parse_uint(val, key));
        else if (key == "max_derivative_terms")
            c.budget.max_terms = parse_double(val, key);
        else if (key == "lt_s")
            c.lt_s = parse_values(val, key);
        else if (key == "parent_distance_um")
            c.parent_distance_um = parse_double(val, key);
        else if (key == "y_values_um")
            c.y_values_um = parse_values(val, key);
        else
            throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    if (y0_um && y0_over_r0)
        throw ConfigError("give at most one of y0_um and y0_over_r0");
    c.params.y0_norm = y0_um ? *y0_um : y0_over_r0.value_or(2.0) * c.params.r0();
    if (c.y_values_um.empty())
        c.y_values_um = parse_values("0:" + format_double(5.0 * c.params.sigma) + ":" +
                                         format_double(c.params.sigma / 10.0),
                                     "y_values_um");
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open config '" + path + "'");
    return parse_config(in);
}

/// Parameters with one sweep variable replaced.
inline SystemParams apply_sweep(const ExperimentConfig& c, double value) {
    SystemParams p = c.params;
    const auto& v = c.sweep_var;
    if (v.empty())
        return p;
    if (v == "L") {
        if (value < 1.0 || value != std::floor(value))
            throw ConfigError("L sweep values must be positive integers");
        p.L = static_cast<int>(value);
    } else if (v == "T")
        p.channel.T = value;
    else if (v == "lambda_p")
        p.lambda_p = value;
    else if (v == "x2")
        p.constellation.at(1) = value;
    else if (v == "sigma")
        p.sigma = value;
    else if (v == "D")
        p.channel.D = value;
    else if (v == "mu")
        p.channel.mu = value;
    else if (v == "y0_norm")
        p.y0_norm = value;
    else
        throw ConfigError("unknown sweep_var '" + v + "'");
    return p;
}

inline std::vector<double> sweep_points(const ExperimentConfig& c) {
    return c.sweep_var.empty() ? std::vector<double>{NAN} : c.sweep_values;
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"')
            out += '"';
        out += ch == '\n' ? ' ' : ch;
    }
    return out + "\"";
}

inline void write_csv(std::ostream& out, const Table& t) {
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i)
                out << ',';
            out << csv_field(cells[i]);
        }
        out << '\n';
    };
    line(t.header);
    for (const auto& r : t.rows)
        line(r);
}

inline std::vector<std::string> parse_csv_line(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char ch = s[i];
        if (quoted) {
            if (ch == '"' && i + 1 < s.size() && s[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

inline Table read_csv(std::istream& in) {
    Table t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {
            t.header = parse_csv_line(line);
            first = false;
        } else {
            t.rows.push_back(parse_csv_line(line));
        }
    }
    return t;
}

inline std::size_t column(const Table& t, std::string_view name) {
    const auto it = std::find(t.header.begin(), t.header.end(), name);
    if (it == t.header.end())
        throw std::out_of_range("no column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - t.header.begin());
}

// ---------------------------------------------------------------------------
// Resolved parameters carried on every row
// ---------------------------------------------------------------------------

inline std::vector<std::string> param_columns() {
    return {"lambda_p_per_um3", "r0_um", "sigma_um", "D_um2_per_s", "mu_per_s", "T_s",
            "L", "x_molecules", "lambda_0_per_s", "y0_um", "trials", "seed", "exclusion_mode"};
}

inline std::vector<std::string> param_cells(const SystemParams& p, const TrialConfig& mc) {
    return {format_double(p.lambda_p),
            format_double(p.r0()),
            format_double(p.sigma),
            format_double(p.channel.D),
            format_double(p.channel.mu),
            format_double(p.channel.T),
            std::to_string(p.L),
            join_values(p.constellation),
            format_double(p.lambda_0),
            format_double(p.y0_norm),
            std::to_string(mc.trials),
            std::to_string(mc.seed),
            mc.exclusion_mode == ExclusionMode::full_exclusion ? "full_exclusion" : "analysis_matched"};
}

inline void append(std::vector<std::string>& a, const std::vector<std::string>& b) { a.insert(a.end(), b.begin(), b.end()); }

inline std::string sweep_cell(double v) { return std::isnan(v) ? std::string() : format_double(v); }

inline std::string error_status(const std::exception& e) {
    if (dynamic_cast<const BudgetExceeded*>(&e))
        return std::string("budget_exceeded: ") + e.what();
    if (dynamic_cast<const NumericalError*>(&e))
        return std::string("numerical_error: ") + e.what();
    return std::string("error: ") + e.what();
}

inline TrialConfig trial_config_for(const ExperimentConfig& c, const SystemParams& p) {
    TrialConfig t = c.mc;
    t.params = p;
    t.lt_s = c.lt_s;
    return t;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

namespace detail {

// Runs one task per point on the configured worker count, keeping order.
template <class Task>
std::vector<std::vector<std::vector<std::string>>> per_point(const ExperimentConfig& c, Task&& task) {
    const auto pts = sweep_points(c);
    std::vector<std::vector<std::vector<std::string>>> out(pts.size());
    parallel_for(pts.size(), c.mc.workers, [&](std::uint64_t i) { out[i] = task(pts[i]); });
    return out;
}

inline Table flatten(std::vector<std::string> header, std::vector<std::vector<std::vector<std::string>>> blocks) {
    Table t;
    t.header = std::move(header);
    for (auto& b : blocks)
        for (auto& r : b)
            t.rows.push_back(std::move(r));
    return t;
}

inline std::vector<std::string> threshold_columns(int M) {
    std::vector<std::string> h;
    for (int j = 1; j < M; ++j)
        h.push_back("th_" + std::to_string(j));
    return h;
}

}  // namespace detail

inline Table run_error_sweep(const ExperimentConfig& c) {
    const int M = c.params.M();
    std::vector<std::string> header{"sweep_var", "value", "method", "p_error", "stderr", "e_intra", "e_inter"};
    append(header, detail::threshold_columns(M));
    header.push_back("status");
    append(header, param_columns());

    const auto pts = sweep_points(c);
    std::vector<std::optional<ErrorAnalysis>> analyses(pts.size());
    std::vector<std::string> setup_error(pts.size());
    std::vector<std::vector<std::vector<std::string>>> blocks(pts.size());

    auto row = [&](double v, const std::string& method, const SystemParams& p) {
        std::vector<std::string> r{c.sweep_var, sweep_cell(v), method, "", "", "", ""};
        r.resize(r.size() + static_cast<std::size_t>(M - 1));
        r.push_back("");
        append(r, param_cells(p, c.mc));
        return r;
    };
    constexpr std::size_t first_th = 7;
    auto fill_thresholds = [&](std::vector<std::string>& r, const DetectorThresholds& th) {
        for (std::size_t j = 0; j < th.th.size(); ++j)
            r[first_th + j] = std::to_string(th.th[j]);
    };
    const std::size_t status_idx = first_th + static_cast<std::size_t>(M - 1);

    // Analytic methods: points in parallel.
    parallel_for(pts.size(), c.mc.workers, [&](std::uint64_t i) {
        const double v = pts[i];
        SystemParams p;
        try {
            p = apply_sweep(c, v);
            analyses[i].emplace(p, c.spec, c.budget);
        } catch (const std::exception& e) {
            setup_error[i] = error_status(e);
        }
        for (const auto& m : c.methods) {
            if (m == "mc")
                continue;
            auto r = row(v, m, analyses[i] ? analyses[i]->params() : c.params);
            if (!analyses[i]) {
                r[status_idx] = setup_error[i];
                blocks[i].push_back(std::move(r));
                continue;
            }
            const auto& an = *analyses[i];
            r[5] = format_double(an.stats().e_intra);
            r[6] = format_double(an.stats().e_inter);
            fill_thresholds(r, an.thresholds());
            try {
                ErrorReport rep;
                if (m == "exact")
                    rep = error_prob_exact(an);
                else if (m == "upper")
                    rep = error_prob_upper(an);
                else
                    rep = error_prob_ook(an);
                r[3] = format_double(rep.total);
                r[status_idx] = rep.derivative_budget_hit ? "budget_exceeded: reported upper bound" : "ok";
            } catch (const std::exception& e) {
                r[status_idx] = error_status(e);
            }
            blocks[i].push_back(std::move(r));
        }
    });
    // Monte Carlo: points in order, trials in parallel.
    if (std::find(c.methods.begin(), c.methods.end(), "mc") != c.methods.end()) {
        for (std::size_t i = 0; i < pts.size(); ++i) {
            auto r = row(pts[i], "mc", analyses[i] ? analyses[i]->params() : c.params);
            if (!analyses[i]) {
                r[status_idx] = setup_error[i];
            } else {
                try {
                    const auto res = run_error_trials(trial_config_for(c, analyses[i]->params()),
                                                      analyses[i]->thresholds());
                    r[3] = format_double(res.error_rate);
                    r[4] = format_double(res.stderr_);
                    r[5] = format_double(res.intra.mean);
                    r[6] = format_double(res.inter.mean);
                    fill_thresholds(r, analyses[i]->thresholds());
                    r[status_idx] = "ok";
                } catch (const std::exception& e) {
                    r[status_idx] = error_status(e);
                }
            }
            // Keep the requested method order within each point.
            const auto pos = std::find(c.methods.begin(), c.methods.end(), "mc") - c.methods.begin();
            std::size_t before = 0;
            for (std::ptrdiff_t k = 0; k < pos; ++k)
                before += c.methods[static_cast<std::size_t>(k)] != "mc";
            blocks[i].insert(blocks[i].begin() + static_cast<std::ptrdiff_t>(before), std::move(r));
        }
    }
    return detail::flatten(std::move(header), std::move(blocks));
}

inline Table run_interference(const ExperimentConfig& c) {
    std::vector<std::string> header{"sweep_var", "value", "method", "e_intra", "e_intra_stderr",
                                    "e_inter", "e_inter_stderr", "e_total"};
    for (double s : c.lt_s) {
        header.push_back("lt_" + format_double(s));
        header.push_back("lt_" + format_double(s) + "_stderr");
    }
    header.push_back("status");
    append(header, param_columns());
    const std::size_t width = header.size();
    const std::size_t status_idx = width - param_columns().size() - 1;
    const bool want_mc = std::find(c.methods.begin(), c.methods.end(), "mc") != c.methods.end();

    auto blocks = detail::per_point(c, [&](double v) {
        std::vector<std::vector<std::string>> rows;
        auto make = [&](const std::string& method, const SystemParams& p) {
            std::vector<std::string> r{c.sweep_var, sweep_cell(v), method};
            r.resize(status_idx + 1);
            append(r, param_cells(p, c.mc));
            return r;
        };
        SystemParams p = c.params;
        try {
            p = apply_sweep(c, v);
            const InterferenceModel model(p, c.spec, c.budget);
            auto r = make("analytic", p);
            const auto st = model.expected();
            r[3] = format_double(st.e_intra);
            r[5] = format_double(st.e_inter);
            r[7] = format_double(st.e_total);
            const auto lt = model.lt_total(std::span<const double>(c.lt_s));
            for (std::size_t a = 0; a < lt.size(); ++a)
                r[8 + 2 * a] = format_double(lt[a]);
            r[status_idx] = "ok";
            rows.push_back(std::move(r));
        } catch (const std::exception& e) {
            auto r = make("analytic", p);
            r[status_idx] = error_status(e);
            rows.push_back(std::move(r));
        }
        return rows;
    });
    if (want_mc) {
        const auto pts = sweep_points(c);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            SystemParams p = c.params;
            std::vector<std::string> r{c.sweep_var, sweep_cell(pts[i]), "mc"};
            r.resize(status_idx + 1);
            try {
                p = apply_sweep(c, pts[i]);
                const auto est = estimate_interference_stats(trial_config_for(c, p));
                r[3] = format_double(est.intra.mean);
                r[4] = format_double(est.intra.stderr_);
                r[5] = format_double(est.inter.mean);
                r[6] = format_double(est.inter.stderr_);
                r[7] = format_double(est.intra.mean + est.inter.mean);
                for (std::size_t a = 0; a < est.lt.size(); ++a) {
                    r[8 + 2 * a] = format_double(est.lt[a].mean);
                    r[9 + 2 * a] = format_double(est.lt[a].stderr_);
                }
                r[status_idx] = "ok";
            } catch (const std::exception& e) {
                r[status_idx] = error_status(e);
            }
            append(r, param_cells(p, c.mc));
            blocks[i].push_back(std::move(r));
        }
    }
    return detail::flatten(std::move(header), std::move(blocks));
}

inline Table run_thresholds(const ExperimentConfig& c) {
    const int M = c.params.M();
    std::vector<std::string> header{"sweep_var", "value", "method", "p_ll", "e_intra", "e_inter", "e_total", "noise_mean"};
    append(header, detail::threshold_columns(M));
    header.push_back("xi0");
    header.push_back("status");
    append(header, param_columns());
    const std::size_t status_idx = header.size() - param_columns().size() - 1;

    auto blocks = detail::per_point(c, [&](double v) {
        SystemParams p = c.params;
        std::vector<std::string> r{c.sweep_var, sweep_cell(v), "analytic"};
        r.resize(status_idx + 1);
        try {
            p = apply_sweep(c, v);
            const InterferenceModel model(p, c.spec, c.budget);
            const auto st = model.expected();
            const auto th = compute_thresholds(p, st);
            r[3] = format_double(th.p_ll);
            r[4] = format_double(st.e_intra);
            r[5] = format_double(st.e_inter);
            r[6] = format_double(st.e_total);
            r[7] = format_double(th.noise_mean);
            for (std::size_t j = 0; j < th.th.size(); ++j)
                r[8 + j] = std::to_string(th.th[j]);
            r[status_idx] = "ok";
            if (M == 2 && p.constellation[0] == 0.0) {
                try {
                    r[status_idx - 1] = format_double(ook_regime_threshold_xi(th.p_ll, th.offset()));
                } catch (const std::domain_error& e) {
                    r[status_idx] = std::string("ok; xi0: ") + e.what();
                }
            }
        } catch (const std::exception& e) {
            r[status_idx] = error_status(e);
        }
        append(r, param_cells(p, c.mc));
        return std::vector<std::vector<std::string>>{std::move(r)};
    });
    return detail::flatten(std::move(header), std::move(blocks));
}

inline Table run_distance_pdf(const ExperimentConfig& c) {
    std::vector<std::string> header{"sweep_var", "value", "method", "pdf", "conditional_pdf", "parent_distance_um", "status"};
    append(header, param_columns());
    const auto& p = c.params;
    const double x = c.parent_distance_um;
    const DistanceDistribution dist(x, p.sigma, p.r0(), c.spec);
    const auto gaussian = gaussian_offspring(p.sigma);
    Table t;
    t.header = header;
    std::vector<std::vector<std::vector<std::string>>> blocks(c.y_values_um.size());
    parallel_for(c.y_values_um.size(), c.mc.workers, [&](std::uint64_t i) {
        const double y = c.y_values_um[i];
        for (const std::string method : {"closed_form", "general"}) {
            std::vector<std::string> r{"y_um", format_double(y), method, "", "", format_double(x), ""};
            try {
                const double f = method == "closed_form" ? dist.pdf(y) : distance_pdf_general(y, x, gaussian, c.spec);
                r[3] = format_double(f);
                r[4] = format_double(y <= p.r0() ? 0.0 : f / dist.normalizer_beyond_r0());
                r[6] = "ok";
            } catch (const std::exception& e) {
                r[6] = error_status(e);
            }
            append(r, param_cells(p, c.mc));
            blocks[i].push_back(std::move(r));
        }
    });
    return detail::flatten(std::move(header), std::move(blocks));
}

/// Analytic quantities against Monte Carlo estimates with z-scores.
inline Table run_mc_validate(const ExperimentConfig& c) {
    std::vector<std::string> header{"sweep_var", "value", "quantity", "analytic", "mc", "mc_stderr", "z", "pass", "status"};
    append(header, param_columns());
    Table t;
    t.header = header;
    for (double v : sweep_points(c)) {
        SystemParams p = c.params;
        auto add = [&](const std::string& q, double a, double m, double se, const std::string& status) {
            const double z = se > 0.0 ? (m - a) / se : (m == a ? 0.0 : INFINITY);
            std::vector<std::string> r{c.sweep_var, sweep_cell(v), q, format_double(a), format_double(m),
                                       format_double(se), format_double(z), std::abs(z) <= 3.0 ? "yes" : "no", status};
            append(r, param_cells(p, c.mc));
            t.rows.push_back(std::move(r));
        };
        try {
            p = apply_sweep(c, v);
            const ErrorAnalysis an(p, c.spec, c.budget);
            const auto sim = run_error_trials(trial_config_for(c, p), an.thresholds());
            add("e_intra", an.stats().e_intra, sim.intra.mean, sim.intra.stderr_, "ok");
            add("e_inter", an.stats().e_inter, sim.inter.mean, sim.inter.stderr_, "ok");
            const auto lt = an.model().lt_total(std::span<const double>(c.lt_s));
            for (std::size_t a = 0; a < lt.size(); ++a)
                add("lt_" + format_double(c.lt_s[a]), lt[a], sim.lt[a].mean, sim.lt[a].stderr_, "ok");
            const auto ex = error_prob_exact(an);
            add("p_error", ex.total, sim.error_rate, sim.stderr_,
                ex.derivative_budget_hit ? "budget_exceeded: reported upper bound" : "ok");
        } catch (const std::exception& e) {
            std::vector<std::string> r{c.sweep_var, sweep_cell(v), "", "", "", "", "", "no", error_status(e)};
            append(r, param_cells(p, c.mc));
            t.rows.push_back(std::move(r));
        }
    }
    return t;
}

inline const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> s{"error-sweep", "interference", "thresholds", "distance-pdf", "mc-validate"};
    return s;
}

inline Table run_experiment(const std::string& subcommand, const ExperimentConfig& c) {
    c.validate();
    if (subcommand == "error-sweep")
        return run_error_sweep(c);
    if (subcommand == "interference")
        return run_interference(c);
    if (subcommand == "thresholds")
        return run_thresholds(c);
    if (subcommand == "distance-pdf")
        return run_distance_pdf(c);
    if (subcommand == "mc-validate")
        return run_mc_validate(c);
    throw ConfigError("unknown subcommand '" + subcommand + "'");
}

// ---------------------------------------------------------------------------
// Metadata
// ---------------------------------------------------------------------------

inline std::vector<std::pair<std::string, std::string>> resolved_config(const ExperimentConfig& c) {
    const auto& p = c.params;
    std::vector<std::pair<std::string, std::string>> kv{
        {"lambda_p_per_um3", format_double(p.lambda_p)},
        {"r0_um", format_double(p.r0())},
        {"sigma_um", format_double(p.sigma)},
        {"D_um2_per_s", format_double(p.channel.D)},
        {"mu_per_s", format_double(p.channel.mu)},
        {"T_s", format_double(p.channel.T)},
        {"L", std::to_string(p.L)},
        {"x_molecules", join_values(p.constellation, ',')},
        {"lambda_0_per_s", format_double(p.lambda_0)},
        {"y0_um", format_double(p.y0_norm)},
        {"sweep_var", c.sweep_var},
        {"sweep_values", join_values(c.sweep_values, ',')},
        {"methods", [&] {
             std::string s;
             for (std::size_t i = 0; i < c.methods.size(); ++i)
                 s += (i ? "," : "") + c.methods[i];
             return s;
         }()},
        {"trials", std::to_string(c.mc.trials)},
        {"seed", std::to_string(c.mc.seed)},
        {"box_half_width_um", format_double(c.mc.half_width())},
        {"exclusion_mode", c.mc.exclusion_mode == ExclusionMode::full_exclusion ? "full_exclusion" : "analysis_matched"},
        {"abs_tol", format_double(c.spec.abs_tol)},
        {"rel_tol", format_double(c.spec.rel_tol)},
        {"max_derivative_order", std::to_string(c.budget.max_order)},
        {"max_derivative_terms", format_double(c.budget.max_terms)},
        {"lt_s", join_values(c.lt_s, ',')},
        {"parent_distance_um", format_double(c.parent_distance_um)},
    };
    return kv;
}

inline void write_metadata(std::ostream& out, const std::string& subcommand, const ExperimentConfig& c,
                           const Table& t, const std::string& config_path) {
    out << "tool=molnet\n";
    out << "version=" << version << '\n';
    out << "compiler=" << __VERSION__ << '\n';
    out << "cxx_standard=" << __cplusplus << '\n';
    out << "subcommand=" << subcommand << '\n';
    out << "config_path=" << config_path << '\n';
    out << "rows=" << t.rows.size() << '\n';
    out << "lambda_0_note=noise rate is a configuration assumption (default 1 per second)\n";
    out << "box_tail_truncated=" << (c.mc.tail_truncated() ? "yes" : "no") << '\n';
    for (const auto& [k, v] : resolved_config(c))
        out << k << '=' << v << '\n';
}

}  // namespace molnet
