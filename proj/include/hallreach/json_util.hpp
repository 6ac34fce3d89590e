#pragma once

// Strict JSON field readers shared by the configuration loaders.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "hallreach/errors.hpp"

namespace hallreach::json_detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
      throw ParseError("unknown key '" + key + "' in " + where);
    }
  }
}

inline const nlohmann::json& require(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ParseError("missing '" + std::string(key) + "' in " + where);
  return j.at(key);
}

inline std::vector<double> number_array(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array()) throw ParseError(what + " must be an array");
  std::vector<double> v;
  v.reserve(j.size());
  for (const auto& x : j) {
    if (!x.is_number()) throw ParseError(what + " must contain only numbers");
    v.push_back(x.get<double>());
  }
  return v;
}

inline int positive_int(const nlohmann::json& j, const std::string& what) {
  if (!j.is_number_integer() || j.get<long long>() < 1 || j.get<long long>() > 1'000'000) {
    throw ParseError(what + " must be a positive integer");
  }
  return static_cast<int>(j.get<long long>());
}

inline double number(const nlohmann::json& j, const std::string& what) {
  if (!j.is_number()) throw ParseError(what + " must be a number");
  return j.get<double>();
}

/// Overwrite `out` with j[key] when present.
inline void read_number(const nlohmann::json& j, const char* key, double& out, const std::string& where) {
  if (j.contains(key)) out = number(j.at(key), where + "." + key);
}

inline void read_int(const nlohmann::json& j, const char* key, int& out, const std::string& where) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw ParseError(where + "." + key + " must be an integer");
  const long long x = v.get<long long>();
  if (x < -1'000'000 || x > 1'000'000) throw ParseError(where + "." + key + " is out of range");
  out = static_cast<int>(x);
}

inline void read_bool(const nlohmann::json& j, const char* key, bool& out, const std::string& where) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_boolean()) throw ParseError(where + "." + key + " must be a boolean");
  out = j.at(key).get<bool>();
}

inline void read_u64(const nlohmann::json& j, const char* key, std::uint64_t& out, const std::string& where) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (v.is_number_unsigned()) {
    out = v.get<std::uint64_t>();
  } else if (v.is_number_integer() && v.get<long long>() >= 0) {
    out = static_cast<std::uint64_t>(v.get<long long>());
  } else {
    throw ParseError(where + "." + key + " must be a nonnegative integer");
  }
}

inline const nlohmann::json& object(const nlohmann::json& j, const char* key, const std::string& where) {
  const auto& v = j.at(key);
  if (!v.is_object()) throw ParseError(where + "." + key + " must be an object");
  return v;
}

}  // namespace hallreach::json_detail
