#pragma once
// Output products: deterministic CSV / JSON / SVG serializations of scan,
// envelope, sequence, coverage, and certificate results. Every artifact
// embeds the config hash and master seed that produced it, numbers are
// rendered with shortest round-trip formatting, and files are written
// atomically (temp file + rename).

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "applications.hpp"
#include "exprlang.hpp"

namespace unidelta {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Stamping.
// ---------------------------------------------------------------------------
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xF];
        h >>= 4;
    }
    return out;
}

/// Identity of a run: hash of the canonical config serialization + the seed.
struct RunStamp {
    std::string config_hash;  // 16 hex chars
    std::uint64_t master_seed = 0;

    static RunStamp from_config(const ordered_json& config, std::uint64_t master_seed) {
        return RunStamp{hash_hex(fnv1a64(config.dump())), master_seed};
    }
};

inline std::string fmt(double v) { return expr::format_double(v); }

// ---------------------------------------------------------------------------
// Atomic file output.
// ---------------------------------------------------------------------------
inline void write_text_atomic(const std::filesystem::path& path, std::string_view content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// CSV (RFC 4180: CRLF line endings, quoting only where required).
// ---------------------------------------------------------------------------
inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void stamp(const RunStamp& s) {
        header.push_back("config_hash");
        header.push_back("master_seed");
        for (auto& r : rows) {
            r.push_back(s.config_hash);
            r.push_back(std::to_string(s.master_seed));
        }
    }

    std::string to_string() const {
        std::string out;
        auto emit = [&out](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (i) out += ',';
                out += csv_escape(cells[i]);
            }
            out += "\r\n";
        };
        emit(header);
        for (const auto& r : rows) emit(r);
        return out;
    }
};

inline CsvTable scan_to_csv(const RemainderField& field, const RunStamp& stamp) {
    CsvTable t;
    for (std::size_t a = 0; a < field.t_points.front().size(); ++a)
        t.header.push_back("t" + std::to_string(a + 1));
    for (std::size_t a = 0; a < field.m_points.front().size(); ++a)
        t.header.push_back("m" + std::to_string(a + 1));
    t.header.push_back("delta");
    t.header.push_back("mask");
    for (std::size_t it = 0; it < field.t_points.size(); ++it) {
        for (std::size_t im = 0; im < field.m_points.size(); ++im) {
            std::vector<std::string> row;
            for (double v : field.t_points[it]) row.push_back(fmt(v));
            for (double v : field.m_points[im]) row.push_back(fmt(v));
            const CellMask m = field.cell_mask(it, im);
            row.push_back(m == CellMask::valid ? fmt(field.value(it, im)) : "");
            row.push_back(mask_name(m));
            t.rows.push_back(std::move(row));
        }
    }
    t.stamp(stamp);
    return t;
}

inline CsvTable envelope_to_csv(const std::vector<EnvelopePoint>& env, const RunStamp& stamp) {
    CsvTable t;
    t.header = {"eps", "delta_hat", "pairs_used"};
    for (const auto& p : env)
        t.rows.push_back({fmt(p.eps), fmt(p.delta_hat), std::to_string(p.pairs_used)});
    t.stamp(stamp);
    return t;
}

inline CsvTable sequence_to_csv(const std::vector<SequenceRow>& rows, const RunStamp& stamp) {
    CsvTable t;
    const std::size_t k = rows.empty() ? 0 : rows.front().theta.size();
    t.header = {"n"};
    for (std::size_t a = 0; a < k; ++a) t.header.push_back("theta" + std::to_string(a + 1));
    for (const char* c : {"reps_used", "rejections", "dist_metric", "dist_value", "dist_stderr",
                          "ks_value", "ks_stderr", "q01", "q05", "q25", "q50", "q75", "q95", "q99"})
        t.header.push_back(c);
    for (const auto& r : rows) {
        std::vector<std::string> row = {std::to_string(r.n)};
        for (double v : r.theta) row.push_back(fmt(v));
        row.push_back(std::to_string(r.reps_used));
        row.push_back(std::to_string(r.rejections));
        row.push_back(r.dist.metric);
        row.push_back(fmt(r.dist.value));
        row.push_back(fmt(r.dist.mc_stderr));
        row.push_back(fmt(r.ks.value));
        row.push_back(fmt(r.ks.mc_stderr));
        for (double q : r.xn_quantiles) row.push_back(fmt(q));
        t.rows.push_back(std::move(row));
    }
    t.stamp(stamp);
    return t;
}

inline CsvTable coverage_to_csv(const std::vector<CiRow>& rows, const RunStamp& stamp) {
    CsvTable t;
    const std::size_t k = rows.empty() ? 0 : rows.front().theta.size();
    t.header = {"n"};
    for (std::size_t a = 0; a < k; ++a) t.header.push_back("theta" + std::to_string(a + 1));
    for (const char* c : {"reps", "covered", "rate", "stderr", "rejections"})
        t.header.push_back(c);
    for (const auto& r : rows) {
        std::vector<std::string> row = {std::to_string(r.n)};
        for (double v : r.theta) row.push_back(fmt(v));
        row.push_back(std::to_string(r.report.reps));
        row.push_back(std::to_string(r.report.covered));
        row.push_back(fmt(r.report.rate));
        row.push_back(fmt(r.report.stderr_));
        row.push_back(std::to_string(r.report.rejections));
        t.rows.push_back(std::move(row));
    }
    t.stamp(stamp);
    return t;
}

inline CsvTable mineq_to_csv(const std::vector<MineqLimitRow>& rows, const RunStamp& stamp) {
    CsvTable t;
    t.header = {"n",          "m1",        "m2",
                "ks_to_limit", "mean_max_z", "frac_nonzero_drift",
                "frac_nonzero_fixed", "reps"};
    for (const auto& r : rows)
        t.rows.push_back({std::to_string(r.n), fmt(r.m_n[0]), fmt(r.m_n[1]), fmt(r.ks_to_limit),
                          fmt(r.mean_max_z), fmt(r.frac_nonzero_drift), fmt(r.frac_nonzero_fixed),
                          std::to_string(r.reps)});
    t.stamp(stamp);
    return t;
}

inline CsvTable cmt_to_csv(const std::vector<CmtRow>& rows, const RunStamp& stamp) {
    CsvTable t;
    t.header = {"n", "theta", "x_n", "y_n", "psi_x_rel", "psi_y_rel", "gap"};
    for (const auto& r : rows)
        t.rows.push_back({std::to_string(r.n), fmt(r.theta), fmt(r.x_n), fmt(r.y_n),
                          fmt(r.psi_x_rel), fmt(r.psi_y_rel), fmt(r.gap)});
    t.stamp(stamp);
    return t;
}

// ---------------------------------------------------------------------------
// JSON.
// ---------------------------------------------------------------------------
inline ordered_json meta_to_json(const Meta& meta) {
    ordered_json j = ordered_json::object();
    for (const auto& [k, v] : meta.items) j[k] = v;
    return j;
}

inline ordered_json stamp_to_json(const RunStamp& s) {
    ordered_json j = ordered_json::object();
    j["config_hash"] = s.config_hash;
    j["master_seed"] = s.master_seed;
    return j;
}

inline ordered_json verdict_to_json(const DivergenceVerdict& v) {
    ordered_json j = ordered_json::object();
    j["n"] = v.n;
    j["holds"] = v.holds;
    j["eps_required"] = v.eps_required;
    j["min_delta"] = v.min_delta;
    j["min_s"] = v.min_s;
    j["witness"] = v.witness;
    j["fail_reason"] = v.fail_reason;
    j["lattice_points"] = v.lattice_points;
    j["failing_points"] = v.failing_points;
    return j;
}

inline ordered_json divergence_to_json(const std::string& preset_name,
                                       const DivergenceCertificate& cert,
                                       const std::vector<DivergenceVerdict>& verdicts,
                                       const RunStamp& stamp) {
    ordered_json j = ordered_json::object();
    j["preset"] = preset_name;
    j["phi"] = cert.phi_name;
    j["grid_per_axis"] = cert.grid_per_axis;
    j["set_A"] = ordered_json::array();
    for (const auto& ax : cert.set_A) j["set_A"].push_back({ax[0], ax[1]});
    j["n_list"] = cert.n_list;
    j["verdicts"] = ordered_json::array();
    bool all_hold = true;
    for (const auto& v : verdicts) {
        j["verdicts"].push_back(verdict_to_json(v));
        all_hold = all_hold && v.holds;
    }
    j["certificate_holds"] = all_hold;
    j["stamp"] = stamp_to_json(stamp);
    return j;
}

// ---------------------------------------------------------------------------
// SVG heatmap for scalar-in/scalar-out remainder fields (t on the horizontal
// axis, m on the vertical axis). Masked cells render gray; valid cells run
// through a 9-stop dark-violet-to-yellow ramp scaled by the field maximum.
// ---------------------------------------------------------------------------
namespace svg_detail {

inline std::string ramp_color(double u) {
    static const int stops[9][3] = {{0x44, 0x01, 0x54}, {0x47, 0x2d, 0x7b}, {0x3b, 0x52, 0x8b},
                                    {0x2c, 0x72, 0x8e}, {0x21, 0x91, 0x8c}, {0x28, 0xae, 0x80},
                                    {0x5e, 0xc9, 0x62}, {0xad, 0xdc, 0x30}, {0xfd, 0xe7, 0x25}};
    if (!(u >= 0.0)) u = 0.0;
    if (u > 1.0) u = 1.0;
    const double pos = u * 8.0;
    const int seg = std::min(7, static_cast<int>(pos));
    const double f = pos - seg;
    char buf[8];
    std::string out = "#";
    for (int c = 0; c < 3; ++c) {
        const int v = static_cast<int>(std::lround(stops[seg][c] +
                                                   f * (stops[seg + 1][c] - stops[seg][c])));
        std::snprintf(buf, sizeof(buf), "%02x", v);
        out += buf;
    }
    return out;
}

}  // namespace svg_detail

inline std::string svg_heatmap(const RemainderField& field, const std::string& title,
                               const RunStamp& stamp) {
    if (field.t_grid.dim() != 1 || field.m_grid.dim() != 1)
        throw DimensionError("svg_heatmap: requires scalar t and m grids");
    const std::size_t nt = field.t_points.size(), nm = field.m_points.size();
    const double vmax = std::max(field.max_valid(), 0.0);

    const double left = 70.0, top = 40.0, plot_w = 520.0, plot_h = 400.0;
    const double width = left + plot_w + 40.0, height = top + plot_h + 60.0;
    const double cw = plot_w / static_cast<double>(nt);
    const double ch = plot_h / static_cast<double>(nm);

    std::string s;
    s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) + "\" height=\"" +
         fmt(height) + "\" viewBox=\"0 0 " + fmt(width) + " " + fmt(height) + "\">\n";
    s += "<desc>config_hash=" + stamp.config_hash +
         " master_seed=" + std::to_string(stamp.master_seed) + "</desc>\n";
    s += "<rect x=\"0\" y=\"0\" width=\"" + fmt(width) + "\" height=\"" + fmt(height) +
         "\" fill=\"#ffffff\"/>\n";
    s += "<text x=\"" + fmt(left + plot_w / 2) +
         "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
         title + "</text>\n";

    for (std::size_t it = 0; it < nt; ++it) {
        for (std::size_t im = 0; im < nm; ++im) {
            std::string fill = "#808080";
            if (field.cell_mask(it, im) == CellMask::valid) {
                const double v = field.value(it, im);
                fill = svg_detail::ramp_color(vmax > 0.0 ? v / vmax : 0.0);
            }
            // row 0 of m at the bottom
            const double x = left + cw * static_cast<double>(it);
            const double y = top + plot_h - ch * static_cast<double>(im + 1);
            s += "<rect x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" width=\"" + fmt(cw) +
                 "\" height=\"" + fmt(ch) + "\" fill=\"" + fill + "\"/>\n";
        }
    }

    // Axes with end-point tick labels.
    const GridAxis& ta = field.t_grid.axes[0];
    const GridAxis& ma = field.m_grid.axes[0];
    s += "<rect x=\"" + fmt(left) + "\" y=\"" + fmt(top) + "\" width=\"" + fmt(plot_w) +
         "\" height=\"" + fmt(plot_h) + "\" fill=\"none\" stroke=\"#000000\"/>\n";
    auto text = [&](double x, double y, const std::string& anchor, const std::string& body) {
        s += "<text x=\"" + fmt(x) + "\" y=\"" + fmt(y) + "\" text-anchor=\"" + anchor +
             "\" font-family=\"sans-serif\" font-size=\"12\">" + body + "</text>\n";
    };
    text(left + plot_w / 2, top + plot_h + 36, "middle", "t");
    text(left - 44, top + plot_h / 2, "middle", "m");
    text(left, top + plot_h + 18, "middle", fmt(ta.lo));
    text(left + plot_w, top + plot_h + 18, "middle", fmt(ta.hi));
    text(left - 8, top + plot_h, "end", fmt(ma.lo));
    text(left - 8, top + 12, "end", fmt(ma.hi));
    s += "</svg>\n";
    return s;
}

}  // namespace unidelta
