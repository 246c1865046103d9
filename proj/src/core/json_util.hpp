// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <initializer_list>
#include <string>

#include <json.hpp>

#include "core/error.hpp"

namespace csr {

using json = nlohmann::json;

inline json parse_json(const std::string& text, const char* what) {
    json j = json::parse(text, nullptr, false);
    CSR_REQUIRE(!j.is_discarded(), ErrorCode::ConfigError,
                std::string("malformed json in ") + what);
    return j;
}

// Rejects unknown keys so a typo in a config is an error instead of a
// silently applied default.
inline void check_keys(const json& j, const char* what,
                       std::initializer_list<const char*> allowed) {
    CSR_REQUIRE(j.is_object(), ErrorCode::ConfigError, std::string(what) + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed) {
            if (it.key() == k) {
                ok = true;
                break;
            }
        }
        CSR_REQUIRE(ok, ErrorCode::ConfigError,
                    std::string(what) + ": unknown key \"" + it.key() + "\"");
    }
}

template <typename T>
T json_get(const json& j, const char* key, const char* what) {
    auto it = j.find(key);
    CSR_REQUIRE(it != j.end(), ErrorCode::ConfigError,
                std::string(what) + ": missing key \"" + key + "\"");
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorCode::ConfigError, std::string(what) + ": bad value for \"" + key + "\"");
    }
}

template <typename T>
T json_get_or(const json& j, const char* key, T fallback, const char* what) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorCode::ConfigError, std::string(what) + ": bad value for \"" + key + "\"");
    }
}

} // namespace csr
