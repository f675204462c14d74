#pragma once

// File formats: parameter/contract/box JSON, mortality and training CSV,
// and GPR model documents.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gmwb/contract.hpp"
#include "gmwb/errors.hpp"
#include "gmwb/gpr.hpp"
#include "gmwb/model.hpp"

namespace gmwb::io {

using nlohmann::json;

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline json read_json(const std::filesystem::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

/// Writes through a temporary file and renames it, so the target is either
/// complete or untouched.
inline void write_atomically(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ParseError("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw ParseError("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace detail {

inline double number(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ParseError(where + ": missing field '" + key + "'");
    const auto& v = j.at(key);
    if (!v.is_number()) throw ParseError(where + ": field '" + key + "' is not a number");
    return v.get<double>();
}

inline std::optional<double> optional_number(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) return std::nullopt;
    return number(j, key, where);
}

}  // namespace detail

/// Model file: v0, kv, thetav, omegav, rhov, r0, kr, omegar, rhor and
/// optionally alpha, kappa.
struct ModelFile {
    HhwParams params;
    std::optional<double> alpha, kappa;
};

inline ModelFile parse_model(const json& j, const std::string& where = "model") {
    if (!j.is_object()) throw ParseError(where + ": expected an object");
    ModelFile m;
    auto& p = m.params;
    p.v0 = detail::number(j, "v0", where);
    p.kv = detail::number(j, "kv", where);
    p.theta_v = detail::number(j, "thetav", where);
    p.omega_v = detail::number(j, "omegav", where);
    p.rho_v = detail::number(j, "rhov", where);
    p.r0 = detail::number(j, "r0", where);
    p.kr = detail::number(j, "kr", where);
    p.omega_r = detail::number(j, "omegar", where);
    p.rho_r = detail::number(j, "rhor", where);
    m.alpha = detail::optional_number(j, "alpha", where);
    m.kappa = detail::optional_number(j, "kappa", where);
    validate(p);
    return m;
}

inline ModelFile load_model(const std::filesystem::path& path) { return parse_model(read_json(path), path.string()); }

inline json to_json(const HhwParams& p) {
    return json{{"v0", p.v0}, {"kv", p.kv},      {"thetav", p.theta_v}, {"omegav", p.omega_v}, {"rhov", p.rho_v},
                {"r0", p.r0}, {"kr", p.kr}, {"omegar", p.omega_r}, {"rhor", p.rho_r}};
}

/// Contract file: P and T required; G, alpha, kappa optional.
struct ContractFile {
    double premium = 0.0;
    int maturity = 0;
    std::optional<double> guarantee, alpha, kappa;
};

inline ContractFile parse_contract(const json& j, const std::string& where = "contract") {
    if (!j.is_object()) throw ParseError(where + ": expected an object");
    ContractFile c;
    c.premium = detail::number(j, "P", where);
    const double t = detail::number(j, "T", where);
    if (t != std::floor(t) || t < 1) throw ParseError(where + ": T must be a positive whole number of years");
    c.maturity = static_cast<int>(t);
    c.guarantee = detail::optional_number(j, "G", where);
    c.alpha = detail::optional_number(j, "alpha", where);
    c.kappa = detail::optional_number(j, "kappa", where);
    return c;
}

inline ContractFile load_contract(const std::filesystem::path& path) {
    return parse_contract(read_json(path), path.string());
}

/// Combines the model and contract files. alpha and kappa may come from
/// either file; specifying different values in both is an error.
inline ContractParams merge_contract(const ModelFile& m, const ContractFile& c,
                                     std::optional<MortalityTable> mortality,
                                     std::optional<double> alpha_override = std::nullopt) {
    auto pick = [](std::optional<double> a, std::optional<double> b, const char* name) {
        if (a && b && *a != *b) throw ParseError(std::string(name) + " differs between model and contract files");
        if (a) return *a;
        if (b) return *b;
        throw ParseError(std::string(name) + " is given in neither the model nor the contract file");
    };
    const double alpha = alpha_override ? *alpha_override : pick(m.alpha, c.alpha, "alpha");
    const double kappa = pick(m.kappa, c.kappa, "kappa");
    return make_contract(c.premium, c.maturity, alpha, kappa, c.guarantee, mortality);
}

inline ParameterBox parse_box(const json& j, const std::string& where = "box") {
    if (!j.is_object()) throw ParseError(where + ": expected an object");
    ParameterBox box;
    for (std::size_t i = 0; i < kNumPredictors; ++i) {
        const std::string name(kPredictorNames[i]);
        if (!j.contains(name)) throw ParseError(where + ": missing range for " + name);
        const auto& r = j.at(name);
        box[i] = Interval{detail::number(r, "lo", where + "." + name), detail::number(r, "hi", where + "." + name)};
    }
    validate(box);
    return box;
}

inline ParameterBox load_box(const std::filesystem::path& path) { return parse_box(read_json(path), path.string()); }

// ---------------------------------------------------------------------------
// CSV

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw ParseError(where + ": trailing characters in '" + s + "'");
        return v;
    } catch (const std::logic_error&) {
        throw ParseError(where + ": not a number: '" + s + "'");
    }
}

/// Mortality CSV with header `year,death_probability` and years 1..n in order.
inline MortalityTable parse_mortality(const std::string& text, const std::string& where = "mortality") {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"year", "death_probability"})
        throw ParseError(where + ": expected header 'year,death_probability'");
    std::vector<double> q;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        const std::string at = where + ":" + std::to_string(lineno);
        if (cells.size() != 2) throw ParseError(at + ": expected two columns");
        const double year = parse_double(cells[0], at);
        if (year != static_cast<double>(q.size() + 1)) throw ParseError(at + ": years must run 1, 2, 3, ...");
        q.push_back(parse_double(cells[1], at));
    }
    if (q.empty()) throw ParseError(where + ": no rows");
    try {
        return MortalityTable(std::move(q));
    } catch (const InvalidParameter& e) {
        throw ParseError(where + ": " + e.what());
    }
}

inline MortalityTable load_mortality(const std::filesystem::path& path) {
    return parse_mortality(read_text(path), path.string());
}

inline const std::string& training_header() {
    static const std::string h = "v0,kv,thetav,omegav,rhov,r0,kr,omegar,rhor,alpha,kappa,value";
    return h;
}

struct TrainingRow {
    ParameterPoint point;
    double value = 0.0;
};

inline std::string format_training(const std::vector<TrainingRow>& rows) {
    std::string out = training_header() + "\n";
    for (const auto& r : rows) {
        for (double x : r.point.to_array()) out += format_double(x) + ",";
        out += format_double(r.value) + "\n";
    }
    return out;
}

inline std::vector<TrainingRow> parse_training(const std::string& text, const std::string& where = "data") {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(where + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != training_header()) throw ParseError(where + ": header must be '" + training_header() + "'");
    std::vector<TrainingRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_csv_line(line);
        const std::string at = where + ":" + std::to_string(lineno);
        if (cells.size() != kNumPredictors + 1) throw ParseError(at + ": expected 12 columns");
        std::array<double, kNumPredictors> a{};
        for (std::size_t i = 0; i < kNumPredictors; ++i) a[i] = parse_double(cells[i], at);
        rows.push_back({ParameterPoint::from_array(a), parse_double(cells[kNumPredictors], at)});
    }
    return rows;
}

inline std::vector<TrainingRow> load_training(const std::filesystem::path& path) {
    return parse_training(read_text(path), path.string());
}

// ---------------------------------------------------------------------------
// GPR model documents

inline json to_json(const gpr::GprModel& m) {
    auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    std::vector<std::vector<double>> x;
    for (Eigen::Index i = 0; i < m.normalized_inputs().rows(); ++i)
        x.push_back(vec(m.normalized_inputs().row(i).transpose()));
    const auto& h = m.hyperparameters();
    return json{{"format", "gmwb-gpr-1"},
                {"lower", vec(m.lower())},
                {"upper", vec(m.upper())},
                {"beta", vec(m.beta())},
                {"signal", h.signal},
                {"lengths", vec(h.lengths)},
                {"noise", h.noise},
                {"jitter", m.jitter()},
                {"degenerate", m.degenerate()},
                {"inputs", x},
                {"dual_weights", vec(m.dual_weights())}};
}

inline gpr::GprModel gpr_from_json(const json& j, const std::string& where = "gpr model") {
    try {
        if (j.at("format") != "gmwb-gpr-1") throw ParseError(where + ": unknown format");
        auto vec = [](const json& a) {
            const auto v = a.get<std::vector<double>>();
            return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
        };
        const auto lo = vec(j.at("lower")), hi = vec(j.at("upper"));
        const auto rows = j.at("inputs").get<std::vector<std::vector<double>>>();
        const Eigen::Index d = lo.size();
        Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), d);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (static_cast<Eigen::Index>(rows[i].size()) != d) throw ParseError(where + ": ragged inputs");
            for (Eigen::Index k = 0; k < d; ++k) x(static_cast<Eigen::Index>(i), k) = rows[i][k];
        }
        gpr::Hyperparameters h{j.at("signal").get<double>(), vec(j.at("lengths")), j.at("noise").get<double>()};
        auto dual = vec(j.at("dual_weights"));
        auto beta = vec(j.at("beta"));
        if (hi.size() != d || h.lengths.size() != d || beta.size() != d + 1 || dual.size() != x.rows())
            throw ParseError(where + ": inconsistent dimensions");
        return gpr::GprModel::assemble(lo, hi, beta, h, x, dual, j.at("jitter").get<double>(),
                                       j.at("degenerate").get<bool>());
    } catch (const json::exception& e) {
        throw ParseError(where + ": " + e.what());
    }
}

inline void save_gpr(const gpr::GprModel& m, const std::filesystem::path& path) {
    write_atomically(path, to_json(m).dump(1) + "\n");
}

inline gpr::GprModel load_gpr(const std::filesystem::path& path) {
    return gpr_from_json(read_json(path), path.string());
}

}  // namespace gmwb::io
