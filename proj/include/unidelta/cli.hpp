#pragma once
// Command-line front end. Exit-code contract: 0 success, 2 configuration
// error (flags, config files, unknown names — reported with a JSON-pointer
// style path when the problem is inside a config document), 3 domain /
// numeric error, 4 study assertion failed (a divergence certificate that does
// not hold). Studies run sequentially; per-study failures are reported and
// the run continues, exiting with the worst status seen.

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "report.hpp"

namespace unidelta {
namespace cli {

namespace detail {

// ---------------------------------------------------------------------------
// Flag parsing helpers.
// ---------------------------------------------------------------------------
inline double parse_number(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(what, "expected a number, got '" + s + "'");
    }
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

/// "lo:hi[,lo:hi...]" -> per-axis ranges.
inline std::vector<std::array<double, 2>> parse_ranges(const std::string& s,
                                                       const std::string& what) {
    std::vector<std::array<double, 2>> out;
    for (const auto& part : split(s, ',')) {
        const auto bits = split(part, ':');
        if (bits.size() != 2) throw ConfigError(what, "expected lo:hi, got '" + part + "'");
        const double lo = parse_number(bits[0], what);
        const double hi = parse_number(bits[1], what);
        if (!(lo < hi)) throw ConfigError(what, "range requires lo < hi");
        out.push_back({lo, hi});
    }
    return out;
}

inline std::vector<long long> parse_n_list(const std::string& s, const std::string& what) {
    std::vector<long long> out;
    for (const auto& part : split(s, ',')) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(part, &used);
            if (used != part.size() || v < 1) throw std::invalid_argument(part);
            out.push_back(v);
        } catch (const std::exception&) {
            throw ConfigError(what, "expected a positive integer, got '" + part + "'");
        }
    }
    for (std::size_t i = 0; i + 1 < out.size(); ++i)
        if (!(out[i] < out[i + 1])) throw ConfigError(what, "list must be strictly increasing");
    return out;
}

inline std::vector<double> parse_d_list(const std::string& s, const std::string& what) {
    std::vector<double> out;
    for (const auto& part : split(s, ',')) out.push_back(parse_number(part, what));
    return out;
}

/// Resolve --phi NAME / --expr "c1[;c2...]" into a PhiMap (by value).
inline PhiMap resolve_phi(const std::string& phi_name, const std::string& expr_str,
                          const std::string& where) {
    if (!phi_name.empty() && !expr_str.empty())
        throw ConfigError(where, "give either a builtin name or an expression, not both");
    if (phi_name.empty() && expr_str.empty())
        throw ConfigError(where, "a map is required (builtin name or expression)");
    if (!phi_name.empty()) {
        try {
            return builtin(phi_name);
        } catch (const UnknownBuiltin& e) {
            throw ConfigError(where, e.what());
        }
    }
    try {
        return compile_phi(split(expr_str, ';'));
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(where, e.what());
    }
}

inline GridSpec make_grid(const std::vector<std::array<double, 2>>& ranges, int count, int d_in,
                          const std::string& what) {
    std::vector<std::array<double, 2>> axes = ranges;
    if (static_cast<int>(axes.size()) == 1 && d_in > 1)
        axes.assign(static_cast<std::size_t>(d_in), axes[0]);
    if (static_cast<int>(axes.size()) != d_in)
        throw ConfigError(what, "expected " + std::to_string(d_in) + " axis range(s)");
    GridSpec g;
    for (const auto& r : axes) g.axes.push_back(GridAxis{r[0], r[1], count});
    g.validate(what);
    return g;
}

inline std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

inline void emit(const std::string& path, const std::string& content) {
    write_text_atomic(path, content);
    std::cout << "wrote " << path << "\n";
}

// ---------------------------------------------------------------------------
// Named presets shared by flags and config files.
// ---------------------------------------------------------------------------
struct SequencePreset {
    PhiMap phi;
    ParamSeq seq;
};

inline SequencePreset sequence_preset(const std::string& name, const std::string& where) {
    SequencePreset p;
    if (name == "reciprocal-fixed") {
        p.phi = builtin("reciprocal");
        p.seq = {families::normal1(), [](long long) { return Vec{1.0, 1.0}; }, name};
    } else if (name == "reciprocal-drift") {
        p.phi = builtin("reciprocal");
        p.seq = {families::normal1(),
                 [](long long n) {
                     const double rn = std::sqrt(static_cast<double>(n));
                     return Vec{1.0 / rn + 1.0 / static_cast<double>(n), 1.0};
                 },
                 name};
    } else if (name == "square-drift") {
        p.phi = builtin("square");
        p.seq = {families::normal1(),
                 [](long long n) { return Vec{1.0 / static_cast<double>(n), 1.0}; }, name};
    } else if (name == "absval-drift") {
        p.phi = builtin("absval");
        p.seq = {families::normal1(),
                 [](long long n) { return Vec{1.0 / static_cast<double>(n), 1.0}; }, name};
    } else if (name == "sqrt-chi2-drift") {
        p.phi = builtin("sqrt");
        p.seq = {families::chi2_mean(),
                 [](long long n) { return Vec{1.0 / static_cast<double>(n)}; }, name};
    } else if (name == "sqrt-chi2-fixed") {
        p.phi = builtin("sqrt");
        p.seq = {families::chi2_mean(), [](long long) { return Vec{1.0}; }, name};
    } else if (name == "iv-drift") {
        p.phi = builtin("iv_ratio");
        p.seq = weakiv_drifting().sequence();
        p.seq.label = name;
    } else if (name == "iv-fixed") {
        p.phi = builtin("iv_ratio");
        p.seq = weakiv_fixed().sequence();
        p.seq.label = name;
    } else {
        throw ConfigError(where, "unknown sequence preset '" + name + "'");
    }
    return p;
}

inline SequencePreset coverage_preset(const std::string& name, const std::string& where) {
    SequencePreset p;
    if (name == "reciprocal-fixed") {
        p.phi = builtin("reciprocal");
        p.seq = {families::normal1(), [](long long) { return Vec{1.0, 1.0}; }, name};
    } else if (name == "reciprocal-drift") {
        p.phi = builtin("reciprocal");
        p.seq = {families::normal1(),
                 [](long long n) { return Vec{1.0 / std::sqrt(static_cast<double>(n)), 1.0}; },
                 name};
    } else if (name == "affine") {
        p.phi = compile_phi({"1+2*t1"});
        p.seq = {families::normal1(), [](long long) { return Vec{1.0, 1.0}; }, name};
    } else {
        throw ConfigError(where, "unknown coverage preset '" + name + "'");
    }
    return p;
}

// ---------------------------------------------------------------------------
// Study runners. Each takes its parameters as an ordered_json block (the
// canonical form hashed into the run stamp), a seed, and an output prefix.
// Runners return the exit status contribution (0, or 4 for failed
// assertions); domain errors escape as exceptions.
// ---------------------------------------------------------------------------
inline int run_scan(const ordered_json& params, std::uint64_t seed, const std::string& out_dir,
                    const std::string& prefix) {
    const RunStamp stamp = RunStamp::from_config(params, seed);
    const std::string phi_name = params.value("phi", "");
    const std::string expr_str = params.value("expr", "");
    const PhiMap phi = resolve_phi(phi_name, expr_str, "/phi");
    std::vector<std::array<double, 2>> t_ranges, m_ranges;
    for (const auto& r : params.at("t_range")) t_ranges.push_back({r.at(0), r.at(1)});
    for (const auto& r : params.at("m_range")) m_ranges.push_back({r.at(0), r.at(1)});
    const int grid = params.at("grid").get<int>();
    const GridSpec t_grid = make_grid(t_ranges, grid, phi.d_in, "/t_range");
    const GridSpec m_grid = make_grid(m_ranges, grid, phi.d_in, "/m_range");
    const RemainderField field = scan(phi, t_grid, m_grid);
    emit(join_path(out_dir, prefix + "scan.csv"), scan_to_csv(field, stamp).to_string());
    if (phi.d_in == 1) {
        emit(join_path(out_dir, prefix + "heatmap.svg"),
             svg_heatmap(field, "normalized remainder: " + phi.name, stamp));
    } else {
        std::cout << "heatmap skipped (input dimension " << phi.d_in << ")\n";
    }
    return 0;
}

inline int run_envelope(const ordered_json& params, std::uint64_t seed, const std::string& out_dir,
                        const std::string& prefix) {
    const RunStamp stamp = RunStamp::from_config(params, seed);
    const PhiMap phi = resolve_phi(params.value("phi", ""), params.value("expr", ""), "/phi");
    std::vector<std::array<double, 2>> box;
    for (const auto& r : params.at("box")) box.push_back({r.at(0), r.at(1)});
    std::vector<double> eps = params.at("eps").get<std::vector<double>>();
    const int samples = params.value("samples", 4000);
    const auto env = envelope(phi, box, eps, samples, seed);
    emit(join_path(out_dir, prefix + "envelope.csv"), envelope_to_csv(env, stamp).to_string());
    for (const auto& pt : env)
        std::cout << "eps=" << fmt(pt.eps) << " delta_hat=" << fmt(pt.delta_hat) << "\n";
    return 0;
}

inline int run_diverge(const ordered_json& params, std::uint64_t seed, const std::string& out_dir,
                       const std::string& prefix) {
    const RunStamp stamp = RunStamp::from_config(params, seed);
    std::vector<std::string> presets;
    if (params.contains("preset")) presets.push_back(params.at("preset").get<std::string>());
    if (params.contains("presets"))
        for (const auto& p : params.at("presets")) presets.push_back(p.get<std::string>());
    std::vector<long long> n_list = params.value("n", std::vector<long long>{100, 10000, 1000000});
    const int grid = params.value("grid", 17);
    int status = 0;
    for (const auto& name : presets) {
        DivergencePreset preset = [&] {
            try {
                return divergence_preset(name, n_list, grid);
            } catch (const UnknownBuiltin& e) {
                throw ConfigError("/preset", e.what());
            }
        }();
        const auto verdicts = check_divergence(preset.cert, *preset.phi);
        const ordered_json doc = divergence_to_json(name, preset.cert, verdicts, stamp);
        emit(join_path(out_dir, prefix + "diverge_" + name + ".json"), doc.dump(2) + "\n");
        for (const auto& v : verdicts) {
            std::cout << "preset=" << name << " n=" << v.n
                      << (v.holds ? " holds" : " FAILS") << " min_delta=" << fmt(v.min_delta)
                      << " required=" << fmt(v.eps_required) << "\n";
            if (!v.holds) status = 4;
        }
    }
    return status;
}

inline int run_sequence(const ordered_json& params, std::uint64_t seed, const std::string& out_dir,
                        const std::string& prefix) {
    const RunStamp stamp = RunStamp::from_config(params, seed);
    const std::string preset = params.at("preset").get<std::string>();
    SequencePreset sp = sequence_preset(preset, "/preset");
    SimConfig cfg;
    cfg.master_seed = seed;
    cfg.n_list = params.value("n", std::vector<long long>{100, 1000, 10000});
    cfg.reps = params.value("reps", static_cast<std::size_t>(20000));
    const auto rows = sequence_study(sp.phi, sp.seq, cfg);
    emit(join_path(out_dir, prefix + "sequence_" + preset + ".csv"),
         sequence_to_csv(rows, stamp).to_string());
    for (const auto& r : rows)
        std::cout << "n=" << r.n << " " << r.dist.metric << "=" << fmt(r.dist.value)
                  << " ks=" << fmt(r.ks.value) << " rejections=" << r.rejections << "\n";
    return 0;
}

inline int run_coverage(const ordered_json& params, std::uint64_t seed, const std::string& out_dir,
                        const std::string& prefix) {
    const RunStamp stamp = RunStamp::from_config(params, seed);
    const std::string preset = params.at("preset").get<std::string>();
    SequencePreset sp = coverage_preset(preset, "/preset");
    SimConfig cfg;
    cfg.master_seed = seed;
    cfg.n_list = params.value("n", std::vector<long long>{100, 10000});
    cfg.reps = params.value("reps", static_cast<std::size_t>(100000));
    const double alpha = params.value("alpha", 0.05);
    const auto rows = ci_study(sp.phi, sp.seq, cfg, alpha);
    emit(join_path(out_dir, prefix + "coverage_" + preset + ".csv"),
         coverage_to_csv(rows, stamp).to_string());
    for (const auto& r : rows)
        std::cout << "n=" << r.n << " coverage=" << fmt(r.report.rate)
                  << " stderr=" << fmt(r.report.stderr_) << "\n";
    return 0;
}

inline int run_mineq(const ordered_json& params, std::uint64_t seed, const std::string& out_dir,
                     const std::string& prefix) {
    const RunStamp stamp = RunStamp::from_config(params, seed);
    const std::vector<long long> n_list =
        params.value("n", std::vector<long long>{100, 10000});
    const std::size_t reps = params.value("reps", static_cast<std::size_t>(100000));
    const auto rows = mineq_limit_study(n_list, reps, seed);
    emit(join_path(out_dir, prefix + "mineq.csv"), mineq_to_csv(rows, stamp).to_string());
    for (const auto& r : rows)
        std::cout << "n=" << r.n << " ks_to_limit=" << fmt(r.ks_to_limit)
                  << " mean_max_z=" << fmt(r.mean_max_z) << "\n";
    return 0;
}

inline int run_mindist(const ordered_json& params, std::uint64_t seed, const std::string& out_dir,
                       const std::string& prefix) {
    const RunStamp stamp = RunStamp::from_config(params, seed);
    const std::string model_name = params.value("model", "parabola");
    MinDistModel model = [&] {
        try {
            return curves::by_name(model_name);
        } catch (const UnknownBuiltin& e) {
            throw ConfigError("/model", e.what());
        }
    }();
    const int grid = params.value("grid", 41);
    const int anchors = params.value("anchors", 9);
    if (anchors < 2) throw ConfigError("/anchors", "need at least two anchors");
    const double lo = model.x_range[0], hi = model.x_range[1];
    GridAxis anchor_axis{lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo), anchors};
    // Tube around the curve: bounding box of the anchor-band image plus margin.
    double bx_lo = 1e300, bx_hi = -1e300, by_lo = 1e300, by_hi = -1e300;
    for (int i = 0; i <= 64; ++i) {
        const double x = anchor_axis.lo + (anchor_axis.hi - anchor_axis.lo) * i / 64.0;
        const CurvePoint c = model.curve(x);
        bx_lo = std::min(bx_lo, c.m[0]);
        bx_hi = std::max(bx_hi, c.m[0]);
        by_lo = std::min(by_lo, c.m[1]);
        by_hi = std::max(by_hi, c.m[1]);
    }
    const double margin = params.value("tube", 0.5);
    GridSpec t_grid{{GridAxis{bx_lo - margin, bx_hi + margin, grid},
                     GridAxis{by_lo - margin, by_hi + margin, grid}}};
    const MinDistScan scan = mindist_delta_scan(model, anchor_axis, t_grid);
    emit(join_path(out_dir, prefix + "mindist_" + model_name + ".csv"),
         scan_to_csv(scan.field, stamp).to_string());
    std::cout << "model=" << model_name << " max_delta=" << fmt(scan.field.max_valid())
              << " valid_cells=" << scan.field.valid_count() << "\n";
    return 0;
}

inline int run_cmt(const ordered_json& params, std::uint64_t seed, const std::string& out_dir,
                   const std::string& prefix) {
    const RunStamp stamp = RunStamp::from_config(params, seed);
    const std::vector<long long> n_list =
        params.value("n", std::vector<long long>{10, 1000, 1000000});
    std::optional<double> fixed_theta;
    if (params.contains("theta")) fixed_theta = params.at("theta").get<double>();
    const auto rows = cmt_counterexample(n_list, fixed_theta);
    emit(join_path(out_dir, prefix + "cmt.csv"), cmt_to_csv(rows, stamp).to_string());
    for (const auto& r : rows)
        std::cout << "n=" << r.n << " psi_x=" << fmt(r.psi_x_rel) << " psi_y=" << fmt(r.psi_y_rel)
                  << " gap=" << fmt(r.gap) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// Config-document validation (fail-fast, pointered errors).
// ---------------------------------------------------------------------------
inline void require(bool cond, const std::string& ptr, const std::string& msg) {
    if (!cond) throw ConfigError(ptr, msg);
}

inline void check_range_array(const ordered_json& v, const std::string& ptr) {
    require(v.is_array() && !v.empty(), ptr, "must be an array of [lo, hi] pairs");
    for (std::size_t i = 0; i < v.size(); ++i) {
        const auto& r = v[i];
        const std::string p = ptr + "/" + std::to_string(i);
        require(r.is_array() && r.size() == 2 && r[0].is_number() && r[1].is_number(), p,
                "must be [lo, hi]");
        require(r[0].get<double>() < r[1].get<double>(), p, "requires lo < hi");
    }
}

inline void check_n_array(const ordered_json& v, const std::string& ptr) {
    require(v.is_array() && !v.empty(), ptr, "must be a non-empty array of integers");
    long long prev = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::string p = ptr + "/" + std::to_string(i);
        require(v[i].is_number_integer(), p, "must be an integer");
        const long long n = v[i].get<long long>();
        require(n >= 1, p, "must be at least 1");
        require(n > prev, p, "must be strictly increasing");
        prev = n;
    }
}

inline void check_phi_block(const ordered_json& s, const std::string& ptr) {
    const bool has_phi = s.contains("phi"), has_expr = s.contains("expr");
    require(has_phi != has_expr, ptr, "needs exactly one of 'phi' or 'expr'");
    if (has_phi) {
        require(s.at("phi").is_string(), ptr + "/phi", "must be a string");
        require(is_builtin(s.at("phi").get<std::string>()), ptr + "/phi",
                "unknown builtin '" + s.at("phi").get<std::string>() + "'");
    }
    if (has_expr) require(s.at("expr").is_string(), ptr + "/expr", "must be a string");
}

inline void validate_study(const ordered_json& s, const std::string& ptr) {
    require(s.is_object(), ptr, "study must be an object");
    require(s.contains("kind") && s.at("kind").is_string(), ptr + "/kind",
            "study needs a string 'kind'");
    const std::string kind = s.at("kind").get<std::string>();
    static const std::vector<std::string> kinds = {"scan",     "envelope", "diverge",
                                                   "sequence", "coverage", "mineq",
                                                   "mindist",  "cmt-demo"};
    require(std::find(kinds.begin(), kinds.end(), kind) != kinds.end(), ptr + "/kind",
            "unknown study kind '" + kind + "'");

    auto check_reps = [&](const char* key) {
        if (s.contains(key)) {
            require(s.at(key).is_number_integer() && s.at(key).get<long long>() >= 2,
                    ptr + "/" + key, "must be an integer >= 2");
        }
    };
    if (kind == "scan") {
        check_phi_block(s, ptr);
        require(s.contains("t_range"), ptr + "/t_range", "is required");
        require(s.contains("m_range"), ptr + "/m_range", "is required");
        check_range_array(s.at("t_range"), ptr + "/t_range");
        check_range_array(s.at("m_range"), ptr + "/m_range");
        require(s.contains("grid") && s.at("grid").is_number_integer(), ptr + "/grid",
                "must be an integer");
        require(s.at("grid").get<long long>() >= 2, ptr + "/grid", "must be at least 2");
    } else if (kind == "envelope") {
        check_phi_block(s, ptr);
        require(s.contains("box"), ptr + "/box", "is required");
        check_range_array(s.at("box"), ptr + "/box");
        require(s.contains("eps") && s.at("eps").is_array() && !s.at("eps").empty(),
                ptr + "/eps", "must be a non-empty array of numbers");
        double prev = 1e300;
        for (std::size_t i = 0; i < s.at("eps").size(); ++i) {
            const std::string p = ptr + "/eps/" + std::to_string(i);
            require(s.at("eps")[i].is_number(), p, "must be a number");
            const double e = s.at("eps")[i].get<double>();
            require(e > 0.0, p, "must be positive");
            require(e < prev, p, "must be strictly decreasing");
            prev = e;
        }
        if (s.contains("samples"))
            require(s.at("samples").is_number_integer() && s.at("samples").get<long long>() >= 1,
                    ptr + "/samples", "must be a positive integer");
    } else if (kind == "diverge") {
        require(s.contains("preset") || s.contains("presets"), ptr,
                "needs 'preset' or 'presets'");
        std::vector<std::string> names;
        if (s.contains("preset")) {
            require(s.at("preset").is_string(), ptr + "/preset", "must be a string");
            names.push_back(s.at("preset").get<std::string>());
        }
        if (s.contains("presets")) {
            require(s.at("presets").is_array(), ptr + "/presets", "must be an array");
            for (std::size_t i = 0; i < s.at("presets").size(); ++i) {
                require(s.at("presets")[i].is_string(), ptr + "/presets/" + std::to_string(i),
                        "must be a string");
                names.push_back(s.at("presets")[i].get<std::string>());
            }
        }
        for (const auto& nm : names)
            require(nm == "reciprocal" || nm == "square" || nm == "iv", ptr,
                    "unknown divergence preset '" + nm + "'");
        if (s.contains("n")) check_n_array(s.at("n"), ptr + "/n");
        if (s.contains("grid"))
            require(s.at("grid").is_number_integer() && s.at("grid").get<long long>() >= 1,
                    ptr + "/grid", "must be a positive integer");
    } else if (kind == "sequence") {
        require(s.contains("preset") && s.at("preset").is_string(), ptr + "/preset",
                "is required");
        sequence_preset(s.at("preset").get<std::string>(), ptr + "/preset");  // name check
        if (s.contains("n")) check_n_array(s.at("n"), ptr + "/n");
        check_reps("reps");
    } else if (kind == "coverage") {
        require(s.contains("preset") && s.at("preset").is_string(), ptr + "/preset",
                "is required");
        coverage_preset(s.at("preset").get<std::string>(), ptr + "/preset");  // name check
        if (s.contains("n")) check_n_array(s.at("n"), ptr + "/n");
        check_reps("reps");
        if (s.contains("alpha")) {
            require(s.at("alpha").is_number(), ptr + "/alpha", "must be a number");
            const double a = s.at("alpha").get<double>();
            require(a > 0.0 && a < 1.0, ptr + "/alpha", "must be in (0, 1)");
        }
    } else if (kind == "mineq") {
        if (s.contains("n")) check_n_array(s.at("n"), ptr + "/n");
        check_reps("reps");
    } else if (kind == "mindist") {
        if (s.contains("model")) {
            require(s.at("model").is_string(), ptr + "/model", "must be a string");
            const std::string m = s.at("model").get<std::string>();
            require(m == "flat" || m == "parabola" || m == "sharp-parabola" || m == "circle",
                    ptr + "/model", "unknown curve model '" + m + "'");
        }
        if (s.contains("grid"))
            require(s.at("grid").is_number_integer() && s.at("grid").get<long long>() >= 2,
                    ptr + "/grid", "must be an integer >= 2");
        if (s.contains("anchors"))
            require(s.at("anchors").is_number_integer() && s.at("anchors").get<long long>() >= 2,
                    ptr + "/anchors", "must be an integer >= 2");
    } else if (kind == "cmt-demo") {
        if (s.contains("n")) check_n_array(s.at("n"), ptr + "/n");
        if (s.contains("theta"))
            require(s.at("theta").is_number(), ptr + "/theta", "must be a number");
    }
}

struct RunConfig {
    std::uint64_t master_seed = 20260814ULL;
    std::string output_dir = "out";
    ordered_json studies;
};

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("/", "cannot read config file '" + path + "'");
    ordered_json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw ConfigError("/", std::string("invalid JSON: ") + e.what());
    }
    require(doc.is_object(), "/", "config must be an object");
    RunConfig cfg;
    if (doc.contains("master_seed")) {
        require(doc.at("master_seed").is_number_integer() &&
                    doc.at("master_seed").get<long long>() >= 0,
                "/master_seed", "must be a nonnegative integer");
        cfg.master_seed = doc.at("master_seed").get<std::uint64_t>();
    }
    if (doc.contains("output_dir")) {
        require(doc.at("output_dir").is_string(), "/output_dir", "must be a string");
        cfg.output_dir = doc.at("output_dir").get<std::string>();
    }
    require(doc.contains("studies") && doc.at("studies").is_array() && !doc.at("studies").empty(),
            "/studies", "must be a non-empty array");
    for (std::size_t i = 0; i < doc.at("studies").size(); ++i)
        validate_study(doc.at("studies")[i], "/studies/" + std::to_string(i));
    cfg.studies = doc.at("studies");
    return cfg;
}

inline int dispatch_study(const std::string& kind, const ordered_json& params, std::uint64_t seed,
                          const std::string& out_dir, const std::string& prefix) {
    if (kind == "scan") return run_scan(params, seed, out_dir, prefix);
    if (kind == "envelope") return run_envelope(params, seed, out_dir, prefix);
    if (kind == "diverge") return run_diverge(params, seed, out_dir, prefix);
    if (kind == "sequence") return run_sequence(params, seed, out_dir, prefix);
    if (kind == "coverage") return run_coverage(params, seed, out_dir, prefix);
    if (kind == "mineq") return run_mineq(params, seed, out_dir, prefix);
    if (kind == "mindist") return run_mindist(params, seed, out_dir, prefix);
    if (kind == "cmt-demo") return run_cmt(params, seed, out_dir, prefix);
    throw ConfigError("/kind", "unknown study kind '" + kind + "'");
}

/// Run all studies of `kind` from a validated config; continue past failures.
inline int run_config_studies(const RunConfig& cfg, const std::string& kind) {
    int worst = 0;
    std::size_t matched = 0;
    for (std::size_t i = 0; i < cfg.studies.size(); ++i) {
        const auto& s = cfg.studies[i];
        if (s.at("kind").get<std::string>() != kind) continue;
        ++matched;
        char prefix[32];
        std::snprintf(prefix, sizeof(prefix), "study%02zu_", i);
        const std::uint64_t seed = mix_seed(cfg.master_seed, 0xCF6ULL, i);
        try {
            worst = std::max(worst, dispatch_study(kind, s, seed, cfg.output_dir, prefix));
        } catch (const ConfigError& e) {
            std::cerr << "study " << i << " config error: " << e.what() << "\n";
            worst = std::max(worst, 2);
        } catch (const Error& e) {
            std::cerr << "study " << i << " failed: " << e.what() << "\n";
            worst = std::max(worst, 3);
        }
    }
    if (matched == 0) std::cout << "no " << kind << " studies in config\n";
    return worst;
}

inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const SyntaxError*>(&e)) return 2;
    if (dynamic_cast<const UnknownFunction*>(&e)) return 2;
    if (dynamic_cast<const ArityError*>(&e)) return 2;
    if (dynamic_cast<const UnknownBuiltin*>(&e)) return 2;
    if (dynamic_cast<const EmptyError*>(&e)) return 2;
    if (dynamic_cast<const DimensionError*>(&e)) return 2;
    return 3;  // domain / numeric errors
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Entry point (also used in-process by tests).
// ---------------------------------------------------------------------------
inline int run(int argc, const char* const* argv) {
    using namespace detail;
    CLI::App app{"uniform-delta: numerical diagnostics for uniform validity of "
                 "delta-method approximations"};
    app.require_subcommand(1);

    std::uint64_t seed = 20260814ULL;
    std::string out_dir = "out";
    app.add_option("--seed", seed, "master seed")->capture_default_str();
    app.add_option("--out", out_dir, "output directory")->capture_default_str();

    std::string phi_name, expr_str, t_range = "0.05:2", m_range = "0.05:2";
    int grid = 200;
    auto* c_scan = app.add_subcommand("scan", "grid scan of the normalized remainder")->fallthrough();
    c_scan->add_option("--phi", phi_name, "builtin map name");
    c_scan->add_option("--expr", expr_str, "semicolon-separated component expressions");
    c_scan->add_option("--t-range", t_range, "t axis range lo:hi[,lo:hi...]")
        ->capture_default_str();
    c_scan->add_option("--m-range", m_range, "m axis range lo:hi[,lo:hi...]")
        ->capture_default_str();
    c_scan->add_option("--grid", grid, "points per axis")->capture_default_str();

    std::string box_str = "0.5:2", eps_str = "0.5,0.25,0.1,0.05,0.01";
    int samples = 4000;
    auto* c_env = app.add_subcommand("envelope", "remainder envelope over shrinking radii")->fallthrough();
    c_env->add_option("--phi", phi_name, "builtin map name");
    c_env->add_option("--expr", expr_str, "semicolon-separated component expressions");
    c_env->add_option("--box", box_str, "anchor box lo:hi[,lo:hi...]")->capture_default_str();
    c_env->add_option("--eps", eps_str, "decreasing radii")->capture_default_str();
    c_env->add_option("--samples", samples, "probe pairs per radius")->capture_default_str();

    std::string preset, n_str, config_file;
    int cert_grid = 17;
    auto* c_div = app.add_subcommand("diverge", "check divergence certificates")->fallthrough();
    c_div->add_option("--preset", preset, "reciprocal | square | iv");
    c_div->add_option("--config", config_file, "config file with diverge studies");
    c_div->add_option("--n", n_str, "comma-separated n list");
    c_div->add_option("--grid", cert_grid, "lattice points per axis")->capture_default_str();

    std::string seq_preset;
    long long reps = 0;
    auto* c_seq = app.add_subcommand("sequence", "distances between X_n and its limit along n")->fallthrough();
    c_seq->add_option("--preset", seq_preset, "named parameter sequence");
    c_seq->add_option("--config", config_file, "config file with sequence studies");
    c_seq->add_option("--n", n_str, "comma-separated n list");
    c_seq->add_option("--reps", reps, "Monte Carlo replications");

    std::string cov_preset;
    double alpha = 0.05;
    auto* c_cov = app.add_subcommand("coverage", "confidence-interval coverage studies")->fallthrough();
    c_cov->add_option("--preset", cov_preset, "named coverage scenario");
    c_cov->add_option("--config", config_file, "config file with coverage studies");
    c_cov->add_option("--n", n_str, "comma-separated n list");
    c_cov->add_option("--reps", reps, "Monte Carlo replications");
    c_cov->add_option("--alpha", alpha, "nominal level")->capture_default_str();

    auto* c_mineq = app.add_subcommand("mineq", "moment-inequality remainder distribution study")->fallthrough();
    c_mineq->add_option("--config", config_file, "config file with mineq studies");
    c_mineq->add_option("--n", n_str, "comma-separated n list");
    c_mineq->add_option("--reps", reps, "Monte Carlo replications");

    std::string model_name = "parabola";
    int md_grid = 41, md_anchors = 9;
    auto* c_md = app.add_subcommand("mindist", "minimum-distance projection remainder scan")->fallthrough();
    c_md->add_option("--config", config_file, "config file with mindist studies");
    c_md->add_option("--model", model_name, "flat | parabola | sharp-parabola | circle")
        ->capture_default_str();
    c_md->add_option("--grid", md_grid, "t grid points per axis")->capture_default_str();
    c_md->add_option("--anchors", md_anchors, "on-curve anchor count")->capture_default_str();

    double cmt_theta = 0.0;
    bool cmt_theta_set = false;
    auto* c_cmt = app.add_subcommand("cmt-demo", "continuous-mapping counterexample table")->fallthrough();
    c_cmt->add_option("--config", config_file, "config file with cmt-demo studies");
    c_cmt->add_option("--n", n_str, "comma-separated n list");
    c_cmt->add_option("--theta", cmt_theta, "fixed theta instead of the drifting 1/n")
        ->each([&](const std::string&) { cmt_theta_set = true; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const std::string kind = app.get_subcommands().front()->get_name();
        if (!config_file.empty()) {
            const RunConfig cfg = load_config(config_file);
            return run_config_studies(cfg, kind);
        }
        ordered_json params = ordered_json::object();
        params["kind"] = kind;
        if (*c_scan || *c_env) {
            if (!phi_name.empty()) params["phi"] = phi_name;
            if (!expr_str.empty()) params["expr"] = expr_str;
        }
        if (*c_scan) {
            params["t_range"] = ordered_json::array();
            for (const auto& r : parse_ranges(t_range, "/t_range"))
                params["t_range"].push_back({r[0], r[1]});
            params["m_range"] = ordered_json::array();
            for (const auto& r : parse_ranges(m_range, "/m_range"))
                params["m_range"].push_back({r[0], r[1]});
            if (grid < 2) throw ConfigError("/grid", "must be at least 2");
            params["grid"] = grid;
            return run_scan(params, seed, out_dir, "");
        }
        if (*c_env) {
            params["box"] = ordered_json::array();
            for (const auto& r : parse_ranges(box_str, "/box"))
                params["box"].push_back({r[0], r[1]});
            params["eps"] = parse_d_list(eps_str, "/eps");
            if (samples < 1) throw ConfigError("/samples", "must be a positive integer");
            params["samples"] = samples;
            return run_envelope(params, seed, out_dir, "");
        }
        if (*c_div) {
            if (preset.empty()) throw ConfigError("/preset", "is required (or use --config)");
            if (!(preset == "reciprocal" || preset == "square" || preset == "iv"))
                throw ConfigError("/preset", "unknown divergence preset '" + preset + "'");
            params["preset"] = preset;
            if (!n_str.empty()) params["n"] = parse_n_list(n_str, "/n");
            if (cert_grid < 1) throw ConfigError("/grid", "must be a positive integer");
            params["grid"] = cert_grid;
            return run_diverge(params, seed, out_dir, "");
        }
        if (*c_seq) {
            if (seq_preset.empty()) throw ConfigError("/preset", "is required (or use --config)");
            sequence_preset(seq_preset, "/preset");  // validate the name early
            params["preset"] = seq_preset;
            if (!n_str.empty()) params["n"] = parse_n_list(n_str, "/n");
            if (reps != 0) {
                if (reps < 2) throw ConfigError("/reps", "must be an integer >= 2");
                params["reps"] = reps;
            }
            return run_sequence(params, seed, out_dir, "");
        }
        if (*c_cov) {
            if (cov_preset.empty()) throw ConfigError("/preset", "is required (or use --config)");
            coverage_preset(cov_preset, "/preset");  // validate the name early
            params["preset"] = cov_preset;
            if (!n_str.empty()) params["n"] = parse_n_list(n_str, "/n");
            if (reps != 0) {
                if (reps < 2) throw ConfigError("/reps", "must be an integer >= 2");
                params["reps"] = reps;
            }
            if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("/alpha", "must be in (0, 1)");
            params["alpha"] = alpha;
            return run_coverage(params, seed, out_dir, "");
        }
        if (*c_mineq) {
            if (!n_str.empty()) params["n"] = parse_n_list(n_str, "/n");
            if (reps != 0) {
                if (reps < 2) throw ConfigError("/reps", "must be an integer >= 2");
                params["reps"] = reps;
            }
            return run_mineq(params, seed, out_dir, "");
        }
        if (*c_md) {
            params["model"] = model_name;
            if (!(model_name == "flat" || model_name == "parabola" ||
                  model_name == "sharp-parabola" || model_name == "circle"))
                throw ConfigError("/model", "unknown curve model '" + model_name + "'");
            if (md_grid < 2) throw ConfigError("/grid", "must be an integer >= 2");
            if (md_anchors < 2) throw ConfigError("/anchors", "must be an integer >= 2");
            params["grid"] = md_grid;
            params["anchors"] = md_anchors;
            return run_mindist(params, seed, out_dir, "");
        }
        if (*c_cmt) {
            if (!n_str.empty()) params["n"] = parse_n_list(n_str, "/n");
            if (cmt_theta_set) params["theta"] = cmt_theta;
            return run_cmt(params, seed, out_dir, "");
        }
        throw ConfigError("/", "no subcommand selected");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

}  // namespace cli
}  // namespace unidelta
