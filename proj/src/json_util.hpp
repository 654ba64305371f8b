#ifndef SIAMPROG_SRC_JSON_UTIL_HPP_
#define SIAMPROG_SRC_JSON_UTIL_HPP_

// Strict JSON object access: unknown keys are configuration errors, and
// missing/ill-typed values fail with the key path in the message.

#include <initializer_list>
#include <set>
#include <string>

#include <json.hpp>

#include "siamprog/common.hpp"

namespace siamprog::jsonu {

using nlohmann::json;

inline void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                                const std::string& context) {
  if (!obj.is_object()) throw ConfigError(context + ": expected a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items()) {
    if (!ok.count(key)) throw ConfigError(context + ": unknown key \"" + key + "\"");
  }
}

template <typename T>
T require(const json& obj, const std::string& key, const std::string& context) {
  if (!obj.contains(key)) throw ConfigError(context + ": missing key \"" + key + "\"");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(context + ": bad value for \"" + key + "\": " + e.what());
  }
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback, const std::string& context) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(context + ": bad value for \"" + key + "\": " + e.what());
  }
}

}  // namespace siamprog::jsonu

#endif  // SIAMPROG_SRC_JSON_UTIL_HPP_
