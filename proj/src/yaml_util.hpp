#pragma once

// Strict-schema helpers over yaml-cpp. Every failure becomes a ParseError
// carrying the 1-based line of the offending node.

#include <yaml-cpp/yaml.h>

#include <initializer_list>
#include <string>
#include <string_view>

#include "mixpo/errors.hpp"

namespace mixpo::yaml {

inline std::size_t line_of(const YAML::Node& node) {
  const auto mark = node.Mark();
  return mark.is_null() ? 0 : static_cast<std::size_t>(mark.line) + 1;
}

inline YAML::Node parse_document(const std::string& text) {
  try {
    YAML::Node root = YAML::Load(text);
    if (!root.IsMap()) throw ParseError("top level must be a mapping", line_of(root));
    return root;
  } catch (const YAML::ParserException& e) {
    throw ParseError(e.msg, static_cast<std::size_t>(e.mark.line) + 1);
  }
}

inline void require_map(const YAML::Node& node, std::string_view what) {
  if (!node.IsMap()) throw ParseError(std::string(what) + " must be a mapping", line_of(node));
}

inline void reject_unknown_keys(const YAML::Node& map, std::initializer_list<std::string_view> allowed) {
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ParseError("unknown key '" + key + "'", line_of(kv.first));
  }
}

inline YAML::Node require(const YAML::Node& map, const std::string& key) {
  YAML::Node n = map[key];
  if (!n) throw ParseError("missing required key '" + key + "'", line_of(map));
  return n;
}

template <typename T>
T as(const YAML::Node& node, const std::string& what) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ParseError("invalid value for '" + what + "'", line_of(node));
  }
}

template <typename T>
T get(const YAML::Node& map, const std::string& key) {
  return as<T>(require(map, key), key);
}

template <typename T>
T get_or(const YAML::Node& map, const std::string& key, T fallback) {
  YAML::Node n = map[key];
  return n ? as<T>(n, key) : fallback;
}

}  // namespace mixpo::yaml
