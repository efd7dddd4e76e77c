#pragma once

// CSV and JSON persistence. Matrices are stored row-major as arrays of rows.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcissim/covariance.hpp"
#include "dcissim/isp.hpp"
#include "dcissim/lti.hpp"
#include "dcissim/metrics.hpp"
#include "dcissim/sim_id.hpp"

namespace dcissim::io {

using json = nlohmann::json;

inline json to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

// Accepts an array of rows, or a plain number for a 1x1 matrix. An empty
// array gives an empty matrix whose shape is fixed by the caller.
inline Matrix matrix_from_json(const json& j, const std::string& what) {
    if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
    if (!j.is_array()) throw DimensionError(what + ": expected an array of rows");
    if (j.empty()) return Matrix(0, 0);
    const auto rows = static_cast<Eigen::Index>(j.size());
    if (!j[0].is_array()) throw DimensionError(what + ": expected an array of rows");
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw DimensionError(what + ": ragged matrix rows");
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

inline json to_json(const Vector& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

inline json to_json(const StateSpaceModel& model) {
    return {{"A", to_json(model.a)}, {"B", to_json(model.b)}, {"C", to_json(model.c)}, {"D", to_json(model.d)}};
}

inline StateSpaceModel model_from_json(const json& j) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (key != "A" && key != "B" && key != "C" && key != "D" && key != "order" && key != "singular_values")
            throw DimensionError("model: unknown key '" + key + "'");
    }
    StateSpaceModel m;
    m.a = matrix_from_json(j.at("A"), "A");
    m.b = matrix_from_json(j.at("B"), "B");
    m.c = matrix_from_json(j.at("C"), "C");
    m.d = matrix_from_json(j.at("D"), "D");
    m.validate();
    return m;
}

inline json to_json(const IdentifiedSystem& sys) {
    json j = to_json(sys.model);
    j["order"] = sys.order;
    j["singular_values"] = to_json(sys.singular_values);
    return j;
}

inline json to_json(const IspResult& isp) {
    json j = {{"period", isp.selection.period},
              {"indices", isp.selection.indices},
              {"y_coeffs", to_json(isp.y_coeffs)},
              {"u_coeffs", to_json(isp.u_coeffs)},
              {"samples_used", isp.samples_used}};
    if (isp.nyquist) j["nyquist"] = to_json(*isp.nyquist);
    return j;
}

inline IspResult isp_from_json(const json& j) {
    IspResult isp;
    isp.selection.period = j.at("period").get<int>();
    isp.selection.indices = j.at("indices").get<std::vector<int>>();
    isp.selection.validate();
    isp.y_coeffs = matrix_from_json(j.at("y_coeffs"), "y_coeffs");
    isp.u_coeffs = matrix_from_json(j.at("u_coeffs"), "u_coeffs");
    isp.samples_used = j.at("samples_used").get<Eigen::Index>();
    isp.phases.assign(isp.selection.count(), 0.0);
    if (j.contains("nyquist")) {
        const auto v = j.at("nyquist").get<std::vector<double>>();
        isp.nyquist = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    detail::require(isp.y_coeffs.cols() == isp.selection.state_dim() &&
                        isp.u_coeffs.cols() == isp.selection.state_dim(),
                    "isp: coefficient width does not match the selection");
    return isp;
}

inline json to_json(const CorrelationSet& corr) {
    json lags = json::array();
    for (const auto& l : corr.xi_rr) lags.push_back(to_json(l));
    return {{"xi_rr", lags}, {"xi_tt", to_json(corr.xi_tt)}, {"lag_count", corr.lag_count()},
            {"samples_used", corr.samples_used}};
}

inline json to_json(const CovarianceTriple& t) {
    return {{"sigma_ww", to_json(t.sigma_ww)}, {"sigma_vv", to_json(t.sigma_vv)}, {"sigma_tt", to_json(t.sigma_tt)}};
}

inline CovarianceTriple triple_from_json(const json& j) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (key != "sigma_ww" && key != "sigma_vv" && key != "sigma_tt")
            throw DimensionError("noise: unknown key '" + key + "'");
    }
    return {matrix_from_json(j.at("sigma_ww"), "sigma_ww"), matrix_from_json(j.at("sigma_vv"), "sigma_vv"),
            matrix_from_json(j.at("sigma_tt"), "sigma_tt")};
}

inline json to_json(const CovarianceSolveReport& rep) {
    return {{"xi_zz", to_json(rep.xi_zz)},
            {"objective", rep.objective},
            {"violations", {rep.violations[0], rep.violations[1], rep.violations[2]}},
            {"iterations", rep.iterations},
            {"nominal", rep.nominal},
            {"strongly_detectable", rep.strongly_detectable},
            {"converged", rep.converged}};
}

inline json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    try {
        return json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw Error(path + ": " + e.what());
    }
}

inline void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << std::setw(2) << j << '\n';
}

inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// Samples CSV: header k,u_1..u_m,y_1..y_p with 17 significant digits.
inline void write_samples_csv(std::ostream& out, const SampleSet& s, Eigen::Index first_k = 0) {
    out << 'k';
    for (Eigen::Index i = 0; i < s.m(); ++i) out << ",u_" << i + 1;
    for (Eigen::Index i = 0; i < s.p(); ++i) out << ",y_" << i + 1;
    out << '\n';
    for (Eigen::Index k = 0; k < s.size(); ++k) {
        out << first_k + k;
        for (Eigen::Index i = 0; i < s.m(); ++i) out << ',' << format_double(s.u(k, i));
        for (Eigen::Index i = 0; i < s.p(); ++i) out << ',' << format_double(s.y(k, i));
        out << '\n';
    }
}

inline void write_samples_csv(const std::string& path, const SampleSet& s) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    write_samples_csv(out, s);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

// Reads a samples CSV; u_* and y_* columns are located from the header and
// k must run contiguously from its first value.
inline SampleSet read_samples_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw DimensionError("samples csv: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_line(line);
    if (header.empty() || header[0] != "k") throw DimensionError("samples csv: first column must be k");
    std::vector<std::size_t> ucols, ycols;
    for (std::size_t c = 1; c < header.size(); ++c) {
        if (header[c].rfind("u_", 0) == 0) ucols.push_back(c);
        else if (header[c].rfind("y_", 0) == 0) ycols.push_back(c);
        else throw DimensionError("samples csv: unexpected column '" + header[c] + "'");
    }
    std::vector<std::vector<double>> rows;
    long long expected = 0;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) throw DimensionError("samples csv: wrong number of columns");
        const long long k = std::stoll(cells[0]);
        if (!first && k != expected) throw DimensionError("samples csv: k is not contiguous");
        first = false;
        expected = k + 1;
        std::vector<double> row;
        for (std::size_t c = 1; c < cells.size(); ++c) row.push_back(std::stod(cells[c]));
        rows.push_back(std::move(row));
    }
    SampleSet s;
    const auto n = static_cast<Eigen::Index>(rows.size());
    s.u.resize(n, static_cast<Eigen::Index>(ucols.size()));
    s.y.resize(n, static_cast<Eigen::Index>(ycols.size()));
    for (Eigen::Index k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < ucols.size(); ++i) s.u(k, static_cast<Eigen::Index>(i)) = rows[k][ucols[i] - 1];
        for (std::size_t i = 0; i < ycols.size(); ++i) s.y(k, static_cast<Eigen::Index>(i)) = rows[k][ycols[i] - 1];
    }
    return s;
}

inline SampleSet read_samples_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return read_samples_csv(in);
}

// Signal-only CSV (k,u_1..u_m), used for excitation exports and file inputs.
inline void write_signal_csv(const std::string& path, const Matrix& u) {
    SampleSet s;
    s.u = u;
    s.y = Matrix(u.rows(), 0);
    write_samples_csv(path, s);
}

inline const char* metrics_header() { return "trial,seed,delta2,delta_inf,eta_w,eta_v,eta_t,eta_r,time_s"; }

inline std::string metrics_row(int trial, std::uint64_t seed, const TrialMetrics& m) {
    std::ostringstream out;
    out << trial << ',' << seed << ',' << format_double(m.delta2) << ',' << format_double(m.delta_inf) << ','
        << format_double(m.eta_w) << ',' << format_double(m.eta_v) << ',' << format_double(m.eta_t) << ','
        << format_double(m.eta_r) << ',' << format_double(m.wall_time);
    return out.str();
}

}  // namespace dcissim::io
