#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace qdelta {

enum class ColType { Int, Real, RealOrNA, Text };

struct Column {
    std::string name;
    ColType type = ColType::Text;
    std::vector<std::string> allowed;  // Text only; empty means any non-empty token
};

struct CsvSchema {
    std::string name;
    std::vector<Column> columns;
};

/// Every CSV the command-line tool writes, keyed by file name.
inline const std::map<std::string, CsvSchema>& csv_schemas() {
    using T = ColType;
    static const std::map<std::string, CsvSchema> s = [] {
        std::map<std::string, CsvSchema> m;
        const std::vector<std::string> classes{"zero", "type1", "type2", "ordinary"};
        m["expsum.csv"] = {"expsum.csv",
                           {{"q", T::Int, {}}, {"q1", T::Int, {}}, {"q2", T::Int, {}}, {"c1", T::Int, {}},
                            {"c2", T::Int, {}}, {"c3", T::Int, {}}, {"re", T::Real, {}}, {"im", T::Real, {}},
                            {"abs", T::Real, {}}, {"class", T::Text, classes}}};
        m["density.csv"] = {"density.csv",
                            {{"p", T::Int, {}}, {"k_star", T::Int, {}}, {"count", T::Int, {}},
                             {"count_next", T::Int, {}}, {"num", T::Int, {}}, {"den", T::Int, {}},
                             {"value", T::Real, {}}, {"method", T::Text, {"enumeration", "closed-form", "cone"}},
                             {"psi", T::Int, {}}, {"euler_factor", T::Real, {}}}};
        m["delta_check.csv"] = {"delta_check.csv",
                                {{"Q", T::Real, {}}, {"n", T::Int, {}}, {"q_max", T::Int, {}},
                                 {"delta", T::Real, {}}, {"deviation", T::Real, {}}, {"delta_exact", T::Real, {}},
                                 {"deviation_exact", T::Real, {}}}};
        m["compare.csv"] = {"compare.csv",
                            {{"h", T::Int, {}}, {"N", T::Int, {}}, {"sqrtN", T::Real, {}}, {"gamma", T::Real, {}},
                             {"raw", T::Int, {}}, {"main", T::Real, {}}, {"main_alt", T::Real, {}},
                             {"ratio", T::RealOrNA, {}}, {"ratio_alt", T::RealOrNA, {}}, {"residual", T::Real, {}},
                             {"residual_alt", T::Real, {}}, {"poisson", T::RealOrNA, {}},
                             {"poisson_error", T::RealOrNA, {}}}};
        m["poisson_q.csv"] = {"poisson_q.csv",
                              {{"h", T::Int, {}}, {"q", T::Int, {}}, {"r", T::Real, {}}, {"zero", T::Real, {}},
                               {"exceptional", T::Real, {}}, {"ordinary", T::Real, {}}, {"total_re", T::Real, {}},
                               {"total_im", T::Real, {}}, {"direct", T::Real, {}}, {"tail", T::Real, {}}}};
        return m;
    }();
    return s;
}

namespace detail {

inline bool parses_int(const std::string& t) {
    if (t.empty()) return false;
    std::size_t i = (t[0] == '-' || t[0] == '+') ? 1 : 0;
    if (i == t.size()) return false;
    for (; i < t.size(); ++i)
        if (t[i] < '0' || t[i] > '9') return false;
    return true;
}

inline bool parses_real(const std::string& t) {
    if (t.empty()) return false;
    char* end = nullptr;
    double v = std::strtod(t.c_str(), &end);
    return end == t.c_str() + t.size() && std::isfinite(v);
}

inline std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace detail

/// Problems found in `text` under `schema`; empty when the file conforms.
/// Header must match exactly, every row must have every column, and every
/// field must parse as its declared type.
inline std::vector<std::string> check_csv(const std::string& text, const CsvSchema& schema) {
    std::vector<std::string> bad;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) return {"empty file"};
    std::string header;
    for (std::size_t i = 0; i < schema.columns.size(); ++i) header += (i ? "," : "") + schema.columns[i].name;
    if (line != header) bad.push_back("header '" + line + "' != '" + header + "'");
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        auto f = detail::split_row(line);
        if (f.size() != schema.columns.size()) {
            bad.push_back("row " + std::to_string(row) + ": " + std::to_string(f.size()) + " fields");
            continue;
        }
        for (std::size_t i = 0; i < f.size(); ++i) {
            const Column& c = schema.columns[i];
            bool ok = false;
            switch (c.type) {
                case ColType::Int: ok = detail::parses_int(f[i]); break;
                case ColType::Real: ok = detail::parses_real(f[i]); break;
                case ColType::RealOrNA: ok = f[i] == "NA" || detail::parses_real(f[i]); break;
                case ColType::Text:
                    ok = !f[i].empty() && (c.allowed.empty() ||
                                           std::find(c.allowed.begin(), c.allowed.end(), f[i]) != c.allowed.end());
                    break;
            }
            if (!ok) bad.push_back("row " + std::to_string(row) + " column " + c.name + ": '" + f[i] + "'");
        }
        if (bad.size() > 50) break;
    }
    return bad;
}

}  // namespace qdelta
