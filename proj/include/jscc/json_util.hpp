#pragma once

#include <initializer_list>
#include <string>

#include "json.hpp"

#include "jscc/error.hpp"

namespace jscc {

// Rejects unknown keys so config typos fail loudly instead of silently
// falling back to defaults.
inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const std::string& ctx) {
    if (!j.is_object()) throw ConfigError(ctx + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (key == a) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError(ctx + ": unknown key \"" + key + "\"");
    }
}

template <typename T>
T json_get(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string(key) + ": " + e.what());
    }
}

// SNR fields admit "inf" (JSON has no infinity literal).
inline double json_get_db(const nlohmann::json& j, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
        throw ConfigError(std::string(key) + ": bad SNR string \"" + s + "\"");
    }
    if (!v.is_number()) throw ConfigError(std::string(key) + ": expected number or \"inf\"");
    return v.get<double>();
}

inline nlohmann::json json_put_db(double db) {
    if (std::isinf(db)) return "inf";
    return db;
}

}  // namespace jscc
