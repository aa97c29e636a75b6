#include "rops/report_io.hpp"

#include "rops/errors.hpp"
#include "rops/plan_json.hpp"

#include "json.hpp"

#include <charconv>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace rops {

namespace {

using nlohmann::json;

struct Out {
    std::ofstream f;
    std::string path;

    explicit Out(const std::string& p) : f(p, std::ios::binary), path(p) {
        if (!f) throw IoError("cannot open '" + p + "' for writing");
    }
    void done() {
        f.flush();
        if (!f) throw IoError("failed while writing '" + path + "'");
    }
};

// quote only when the field would break the row; numeric output never does
std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    q += '"';
    return q;
}

// the digest covers only result-determining inputs: the thread cap and the
// timestamp are recorded in the manifest but cannot change any artifact
json manifest_body(const RunManifest& m) {
    json extra = json::object();
    for (const auto& [k, v] : m.extra) extra[k] = v;
    return json{{"tool", m.tool},         {"command", m.command},
                {"plan", m.plan_path},    {"plan_digest", m.plan_digest},
                {"seed", m.seed},         {"n_middle", m.n_middle},
                {"n_inner", m.n_inner},   {"order_f", m.order_f},
                {"order_g", m.order_g},   {"truncate", m.truncate},
                {"extra", extra}};
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

[[noreturn]] void cpd_fail(const std::string& path, std::size_t line_no,
                           const std::string& what) {
    throw IoError("cpd file '" + path + "' line " + std::to_string(line_no) + ": " + what);
}

double parse_num(const std::string& s, const std::string& path, std::size_t line_no) {
    const char* b = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(b, &end);
    if (end == b || *end != '\0') cpd_fail(path, line_no, "bad number '" + s + "'");
    return v;
}

std::uint64_t parse_u64(const std::string& s, const std::string& path, std::size_t line_no) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        cpd_fail(path, line_no, "bad count '" + s + "'");
    return v;
}

} // namespace

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

std::string fmt_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

std::string utc_timestamp_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string manifest_digest(const RunManifest& m) {
    const std::string body = manifest_body(m).dump();
    return hex64(fnv1a64(body.data(), body.size()));
}

void write_manifest(const std::string& path, const RunManifest& m) {
    json j = manifest_body(m);
    j["digest"] = manifest_digest(m);
    j["threads"] = m.threads;
    j["timestamp"] = m.timestamp.empty() ? utc_timestamp_now() : m.timestamp;
    Out out(path);
    out.f << j.dump(2) << '\n';
    out.done();
}

void write_plan_paths_csv(const std::string& path, const PathEnsemble& ens,
                          const std::string& manifest_hex) {
    Out out(path);
    out.f << "# manifest " << manifest_hex << '\n';
    out.f << "replicate,node,t,dS,S\n";
    for (std::size_t r = 0; r < ens.plan_dS.rows; ++r) {
        for (int n = 0; n <= ens.grid.n_nodes; ++n) {
            out.f << ens.replicate_ids[r] << ',' << n << ',' << fmt_double(ens.grid.node_time(n))
                  << ',' << fmt_double(ens.plan_dS.at(r, n)) << ','
                  << fmt_double(ens.plan_S.at(r, n)) << '\n';
        }
    }
    out.done();
}

void write_project_paths_csv(const std::string& path, const PathEnsemble& ens,
                             const std::string& manifest_hex) {
    Out out(path);
    out.f << "# manifest " << manifest_hex << '\n';
    out.f << "project,replicate,node,t,dS,S\n";
    for (std::size_t p = 0; p < ens.project_ids.size(); ++p) {
        const Matrix& dS = ens.project_dS[p];
        const std::string id = csv_field(ens.project_ids[p]);
        for (std::size_t r = 0; r < dS.rows; ++r) {
            double s = 0.0;
            for (int n = 0; n <= ens.grid.n_nodes; ++n) {
                s += dS.at(r, n);
                out.f << id << ',' << ens.replicate_ids[r] << ',' << n << ','
                      << fmt_double(ens.grid.node_time(n)) << ',' << fmt_double(dS.at(r, n))
                      << ',' << fmt_double(s) << '\n';
            }
        }
    }
    out.done();
}

void write_histograms_csv(const std::string& path, const std::vector<SliceHistogram>& slices,
                          const std::string& manifest_hex) {
    Out out(path);
    out.f << "# manifest " << manifest_hex << '\n';
    out.f << "node,t,n_samples,excluded,deterministic,bin_lo,bin_hi,mass\n";
    for (const SliceHistogram& h : slices) {
        for (std::size_t b = 0; b < h.mass.size(); ++b) {
            out.f << h.node << ',' << fmt_double(h.t) << ',' << h.n_samples << ',' << h.excluded
                  << ',' << (h.deterministic ? 1 : 0) << ',' << fmt_double(h.bin_edges[b]) << ','
                  << fmt_double(h.bin_edges[b + 1]) << ',' << fmt_double(h.mass[b]) << '\n';
        }
    }
    out.done();
}

void write_cpd_csv(const std::string& path, const PlanCpd& cpd,
                   const std::string& manifest_hex) {
    Out out(path);
    out.f << "# manifest " << manifest_hex << '\n';
    out.f << "node,t,dt,t0,order_f,order_g";
    for (int i = 0; i <= cpd.order_f; ++i) out.f << ",x_f" << i;
    for (int i = 0; i <= cpd.order_g; ++i) out.f << ",x_g" << i;
    out.f << ",loglik,stage1_loglik,g_floor,n_samples,deterministic,order_fallback,"
             "s_min,s_mean,s_max\n";
    for (int n = 1; n <= cpd.n_nodes(); ++n) {
        const SliceFit& s = cpd.slices[n - 1];
        const SRefStats& ref = cpd.s_ref[n - 1];
        out.f << n << ',' << fmt_double(cpd.t0 + n * cpd.dt) << ',' << fmt_double(cpd.dt) << ','
              << fmt_double(cpd.t0) << ',' << cpd.order_f << ',' << cpd.order_g;
        for (double c : s.f_coeffs) out.f << ',' << fmt_double(c);
        for (double c : s.g_coeffs) out.f << ',' << fmt_double(c);
        out.f << ',' << fmt_double(s.loglik) << ',' << fmt_double(s.stage1_loglik) << ','
              << fmt_double(s.g_floor) << ',' << s.n_samples << ','
              << (s.deterministic ? 1 : 0) << ',' << (s.order_fallback ? 1 : 0) << ','
              << fmt_double(ref.min) << ',' << fmt_double(ref.mean) << ','
              << fmt_double(ref.max) << '\n';
    }
    out.done();
}

PlanCpd load_cpd_csv(const std::string& path) {
    const std::string text = read_file(path);
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;

    // header: fixed prefix, counted coefficient columns, fixed tail
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line[0] == '#') continue;
        if (line.empty()) continue;
        header = split_csv(line);
        break;
    }
    if (header.empty()) cpd_fail(path, line_no, "missing header row");

    static const std::vector<std::string> prefix = {"node", "t",  "dt",
                                                    "t0",   "order_f", "order_g"};
    if (header.size() < prefix.size())
        cpd_fail(path, line_no, "header too short");
    for (std::size_t i = 0; i < prefix.size(); ++i)
        if (header[i] != prefix[i])
            cpd_fail(path, line_no, "expected column '" + prefix[i] + "', got '" + header[i] + "'");
    std::size_t col = prefix.size();
    int nf = 0, ng = 0;
    while (col < header.size() && header[col] == "x_f" + std::to_string(nf)) {
        ++nf;
        ++col;
    }
    while (col < header.size() && header[col] == "x_g" + std::to_string(ng)) {
        ++ng;
        ++col;
    }
    static const std::vector<std::string> tail = {"loglik", "stage1_loglik", "g_floor",
                                                 "n_samples", "deterministic",
                                                 "order_fallback", "s_min", "s_mean", "s_max"};
    if (nf < 1 || ng < 1 || header.size() != col + tail.size())
        cpd_fail(path, line_no, "unrecognized column layout");
    for (std::size_t i = 0; i < tail.size(); ++i)
        if (header[col + i] != tail[i])
            cpd_fail(path, line_no,
                     "expected column '" + tail[i] + "', got '" + header[col + i] + "'");

    PlanCpd cpd;
    cpd.order_f = nf - 1;
    cpd.order_g = ng - 1;
    bool first = true;
    int expect_node = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto f = split_csv(line);
        if (f.size() != header.size())
            cpd_fail(path, line_no, "expected " + std::to_string(header.size()) +
                                        " fields, got " + std::to_string(f.size()));
        const double node_d = parse_num(f[0], path, line_no);
        if (node_d != expect_node)
            cpd_fail(path, line_no, "expected node " + std::to_string(expect_node));
        const double dt = parse_num(f[2], path, line_no);
        const double t0 = parse_num(f[3], path, line_no);
        if (first) {
            cpd.dt = dt;
            cpd.t0 = t0;
            first = false;
        } else if (dt != cpd.dt || t0 != cpd.t0) {
            cpd_fail(path, line_no, "inconsistent grid metadata");
        }
        if (parse_num(f[4], path, line_no) != cpd.order_f ||
            parse_num(f[5], path, line_no) != cpd.order_g)
            cpd_fail(path, line_no, "inconsistent fit orders");

        SliceFit s;
        std::size_t k = prefix.size();
        for (int i = 0; i < nf; ++i) s.f_coeffs.push_back(parse_num(f[k++], path, line_no));
        for (int i = 0; i < ng; ++i) s.g_coeffs.push_back(parse_num(f[k++], path, line_no));
        s.loglik = parse_num(f[k++], path, line_no);
        s.stage1_loglik = parse_num(f[k++], path, line_no);
        s.g_floor = parse_num(f[k++], path, line_no);
        s.n_samples = parse_u64(f[k++], path, line_no);
        s.deterministic = parse_u64(f[k++], path, line_no) != 0;
        s.order_fallback = parse_u64(f[k++], path, line_no) != 0;
        SRefStats ref;
        ref.min = parse_num(f[k++], path, line_no);
        ref.mean = parse_num(f[k++], path, line_no);
        ref.max = parse_num(f[k++], path, line_no);
        cpd.slices.push_back(std::move(s));
        cpd.s_ref.push_back(ref);
        ++expect_node;
    }
    if (cpd.slices.empty()) cpd_fail(path, line_no, "no data rows");
    return cpd;
}

void write_option_report(const std::string& path, const GreeksReport& rep,
                         const std::string& manifest_hex) {
    json j{{"manifest", manifest_hex},
           {"value", rep.value},
           {"greeks",
            {{"delta", rep.delta},
             {"gamma", rep.gamma},
             {"theta", rep.theta},
             {"vega", rep.vega},
             {"rho", rep.rho}}},
           {"N", rep.n_levels},
           {"clamp_count", rep.clamp_count},
           {"extrapolation_count", rep.extrapolation_count}};
    Out out(path);
    out.f << j.dump(2) << '\n';
    out.done();
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace,
                     const std::vector<std::string>& names, const std::string& manifest_hex) {
    Out out(path);
    out.f << "# manifest " << manifest_hex << '\n';
    out.f << "eval";
    for (const auto& n : names) out.f << ',' << csv_field(n);
    out.f << ",value,accepted";
    for (const auto& n : names) out.f << ',' << csv_field("temp_" + n);
    out.f << '\n';
    for (const TraceRow& row : trace) {
        if (row.params.size() != names.size() || row.temps.size() != names.size())
            throw std::invalid_argument("write_trace_csv: parameter name count mismatch");
        out.f << row.eval;
        for (double p : row.params) out.f << ',' << fmt_double(p);
        out.f << ',' << fmt_double(row.value) << ',' << (row.accepted ? 1 : 0);
        for (double t : row.temps) out.f << ',' << fmt_double(t);
        out.f << '\n';
    }
    out.done();
}

void write_multi_min_csv(const std::string& path, const std::vector<MultiMinEntry>& entries,
                         const std::vector<std::string>& names,
                         const std::string& manifest_hex) {
    Out out(path);
    out.f << "# manifest " << manifest_hex << '\n';
    out.f << "rank";
    for (const auto& n : names) out.f << ',' << csv_field(n);
    out.f << ",value\n";
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].params.size() != names.size())
            throw std::invalid_argument("write_multi_min_csv: parameter name count mismatch");
        out.f << i;
        for (double p : entries[i].params) out.f << ',' << fmt_double(p);
        out.f << ',' << fmt_double(entries[i].value) << '\n';
    }
    out.done();
}

void write_optim_report(const std::string& path, const OptimResult& res,
                        const std::vector<std::string>& names,
                        const std::string& manifest_hex) {
    if (res.best_params.size() != names.size())
        throw std::invalid_argument("write_optim_report: parameter name count mismatch");
    json best = json::object();
    for (std::size_t i = 0; i < names.size(); ++i) best[names[i]] = res.best_params[i];
    json j{{"manifest", manifest_hex},
           {"best", best},
           {"best_value", res.best_value},
           {"evals", res.evals},
           {"failures", res.failures},
           {"multi_min_count", res.multi_min.size()}};
    Out out(path);
    out.f << j.dump(2) << '\n';
    out.done();
}

void write_risk_json(const std::string& path, const RiskReport& rep,
                     const std::string& manifest_hex) {
    auto matrix_rows = [](const Matrix& m) {
        std::vector<std::vector<double>> rows(m.rows);
        for (std::size_t i = 0; i < m.rows; ++i)
            rows[i].assign(m.row(i), m.row(i) + m.cols);
        return rows;
    };
    json tails = json::array();
    for (const TailEntry& e : rep.tail_table)
        tails.push_back(json{{"project", e.project_id},
                             {"quantile", e.quantile},
                             {"threshold", e.threshold},
                             {"n_tail", e.replicates.size()},
                             {"co_exceedance", e.co_exceedance}});
    json j{{"manifest", manifest_hex},
           {"projects", rep.project_ids},
           {"excluded", rep.excluded},
           {"warnings", rep.warnings},
           {"window", {{"lo", rep.window_lo}, {"hi", rep.window_hi}, {"relative", rep.relative}}},
           {"replicates_used", rep.scores.z.rows},
           {"replicates_dropped", rep.scores.exclusions},
           {"correlation", matrix_rows(rep.correlation)},
           {"covariance", matrix_rows(rep.covariance)},
           {"tails", tails}};
    Out out(path);
    out.f << j.dump(2) << '\n';
    out.done();
}

void write_risk_audit_csv(const std::string& path, const RiskReport& rep,
                          const std::string& manifest_hex) {
    Out out(path);
    out.f << "# manifest " << manifest_hex << '\n';
    out.f << "project,quantile,replicate,value\n";
    for (const TailEntry& e : rep.tail_table) {
        const std::string id = csv_field(e.project_id);
        for (std::size_t i = 0; i < e.replicates.size(); ++i)
            out.f << id << ',' << fmt_double(e.quantile) << ',' << e.replicates[i] << ','
                  << fmt_double(e.values[i]) << '\n';
    }
    out.done();
}

} // namespace rops
