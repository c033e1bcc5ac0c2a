#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qdelta/qform.hpp"
#include "qdelta/weight.hpp"

namespace qdelta {

/// Malformed or incomplete configuration. `field` names the offending key.
struct ConfigError : std::invalid_argument {
    std::string field;
    ConfigError(const std::string& f, const std::string& what) : std::invalid_argument(what), field(f) {}
};

/// Flat "key = value" text. '#' starts a comment, blank lines are ignored,
/// keys are unique.
class Config {
public:
    static Config parse(const std::string& text, const std::string& origin = "<config>") {
        Config c;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("", origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
            std::string k = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
            if (k.empty()) throw ConfigError("", origin + ":" + std::to_string(lineno) + ": empty key");
            if (c.kv_.count(k)) throw ConfigError(k, origin + ":" + std::to_string(lineno) + ": duplicate key '" + k + "'");
            c.kv_[k] = v;
        }
        return c;
    }

    static Config load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw ConfigError("", "cannot read config file '" + path + "'");
        std::stringstream ss;
        ss << f.rdbuf();
        return parse(ss.str(), path);
    }

    bool has(const std::string& k) const { return kv_.count(k) > 0; }
    void set(const std::string& k, const std::string& v) { kv_[k] = v; }
    const std::map<std::string, std::string>& entries() const { return kv_; }

    const std::string& str(const std::string& k) const {
        auto it = kv_.find(k);
        if (it == kv_.end()) throw ConfigError(k, "missing config field '" + k + "'");
        return it->second;
    }
    std::string str(const std::string& k, const std::string& def) const { return has(k) ? str(k) : def; }

    i64 integer(const std::string& k) const { return to_int(k, str(k)); }
    i64 integer(const std::string& k, i64 def) const { return has(k) ? integer(k) : def; }
    double real(const std::string& k) const { return to_real(k, str(k)); }
    double real(const std::string& k, double def) const { return has(k) ? real(k) : def; }
    bool flag(const std::string& k, bool def) const {
        if (!has(k)) return def;
        const std::string& v = str(k);
        if (v == "1" || v == "true" || v == "yes") return true;
        if (v == "0" || v == "false" || v == "no") return false;
        throw ConfigError(k, "field '" + k + "': expected a boolean, got '" + v + "'");
    }

    std::vector<i64> integers(const std::string& k) const {
        std::vector<i64> out;
        for (const auto& t : tokens(str(k))) out.push_back(to_int(k, t));
        return out;
    }
    std::vector<double> reals(const std::string& k) const {
        std::vector<double> out;
        for (const auto& t : tokens(str(k))) out.push_back(to_real(k, t));
        return out;
    }
    std::vector<double> reals(const std::string& k, std::vector<double> def) const { return has(k) ? reals(k) : def; }

    /// Canonical text: sorted "key = value" lines. Parsing it gives back the same config.
    std::string echo() const {
        std::string s;
        for (const auto& [k, v] : kv_) s += k + " = " + v + "\n";
        return s;
    }

    /// 64-bit FNV-1a of the canonical text, as 16 hex digits.
    std::string hash() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (unsigned char ch : echo()) {
            h ^= ch;
            h *= 0x100000001b3ull;
        }
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

private:
    std::map<std::string, std::string> kv_;

    static std::string trim(const std::string& s) {
        auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return "";
        auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }
    static std::vector<std::string> tokens(const std::string& s) {
        std::vector<std::string> out;
        std::string t;
        for (char ch : s) {
            if (ch == ',' || ch == ' ' || ch == '\t') {
                if (!t.empty()) out.push_back(t), t.clear();
            } else {
                t += ch;
            }
        }
        if (!t.empty()) out.push_back(t);
        return out;
    }
    static i64 to_int(const std::string& k, const std::string& v) {
        try {
            std::size_t pos = 0;
            long long x = std::stoll(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("trailing");
            return x;
        } catch (const std::exception&) {
            throw ConfigError(k, "field '" + k + "': expected an integer, got '" + v + "'");
        }
    }
    static double to_real(const std::string& k, const std::string& v) {
        try {
            std::size_t pos = 0;
            double x = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("trailing");
            return x;
        } catch (const std::exception&) {
            throw ConfigError(k, "field '" + k + "': expected a number, got '" + v + "'");
        }
    }
};

/// Instance fields: form (6 coefficients a11 a22 a33 a12 a13 a23, or 3 for a diagonal
/// form), m0, p0, h, L, lambda, weight.center, weight.radius, weight.profile.
inline ProblemInstance instance_from_config(const Config& c) {
    std::vector<i64> f = c.integers("form");
    if (f.size() != 3 && f.size() != 6) throw ConfigError("form", "field 'form': expected 3 or 6 integers");
    f.resize(6, 0);
    std::vector<i64> lam = c.has("lambda") ? c.integers("lambda") : std::vector<i64>{0, 0, 0};
    if (lam.size() != 3) throw ConfigError("lambda", "field 'lambda': expected 3 integers");
    std::vector<double> center = c.reals("weight.center");
    if (center.size() != 3) throw ConfigError("weight.center", "field 'weight.center': expected 3 numbers");
    auto wrap = [](const char* field, auto&& make) {
        try {
            return make();
        } catch (const ConfigError&) {
            throw;
        } catch (const std::invalid_argument& e) {
            throw ConfigError(field, std::string("invalid instance: ") + e.what());
        }
    };
    WeightSpec w{{center[0], center[1], center[2]}, c.real("weight.radius"),
                 wrap("weight.profile", [&] { return parse_profile(c.str("weight.profile", "ball")); })};
    QForm F = wrap("form", [&] { return QForm(f[0], f[1], f[2], f[3], f[4], f[5]); });
    i64 h = c.integer("h", 1);
    if (h < 0 || h > 40) throw ConfigError("h", "field 'h': expected 0..40");
    return wrap("instance", [&] {
        return ProblemInstance(F, c.integer("m0"), c.integer("p0"), static_cast<int>(h),
                               {c.integer("L", 1), {lam[0], lam[1], lam[2]}}, w);
    });
}

}  // namespace qdelta
