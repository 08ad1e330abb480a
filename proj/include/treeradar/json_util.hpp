#pragma once

#include <algorithm>
#include <initializer_list>
#include <string>

#include <nlohmann/json.hpp>

#include "treeradar/errors.hpp"

namespace treeradar {

/// Throws FormatError if j is not an object or carries a key outside `keys`.
inline void require_known_keys(const nlohmann::json& j, std::initializer_list<const char*> keys, const char* what) {
  if (!j.is_object()) throw FormatError(std::string(what) + ": expected a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* s) { return k == s; }))
      throw FormatError(std::string(what) + ": unknown key '" + k + "'");
  }
}

}  // namespace treeradar
