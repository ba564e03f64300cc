#pragma once

// Schema-checked access to JSON documents. Every error names the offending
// location as a JSON path, e.g. "scenario.json: $.frames[3].pose.scale".

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "advtex/geometry.hpp"

namespace advtex {

using Json = nlohmann::json;

class SchemaError : public std::runtime_error {
 public:
  SchemaError(const std::string& file, const std::string& path, const std::string& what)
      : std::runtime_error(file + ": " + path + ": " + what), path_(path) {}
  const std::string& json_path() const { return path_; }

 private:
  std::string path_;
};

inline Json parse_json_file(const std::string& path, std::string* raw = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  if (raw) *raw = ss.str();
  try {
    return Json::parse(ss.str());
  } catch (const Json::parse_error& e) {
    throw SchemaError(path, "$", std::string("malformed JSON: ") + e.what());
  }
}

class JsonReader {
 public:
  JsonReader(const Json& node, std::string file, std::string path = "$")
      : node_(&node), file_(std::move(file)), path_(std::move(path)) {}

  const Json& node() const { return *node_; }
  const std::string& path() const { return path_; }

  [[noreturn]] void fail(const std::string& what) const { throw SchemaError(file_, path_, what); }

  bool has(const std::string& key) const { return node_->is_object() && node_->contains(key); }

  JsonReader at(const std::string& key) const {
    require_object();
    if (!node_->contains(key)) fail("missing required key '" + key + "'");
    return JsonReader((*node_)[key], file_, path_ + "." + key);
  }

  JsonReader at(std::size_t i) const {
    require_array();
    if (i >= node_->size()) fail("index " + std::to_string(i) + " out of range");
    return JsonReader((*node_)[i], file_, path_ + "[" + std::to_string(i) + "]");
  }

  std::size_t size() const {
    require_array();
    return node_->size();
  }

  /// Rejects keys outside `allowed` so that typos do not pass silently.
  void only_keys(std::initializer_list<const char*> allowed) const {
    require_object();
    for (const auto& item : node_->items()) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || item.key() == a;
      if (!ok) JsonReader(item.value(), file_, path_ + "." + item.key()).fail("unknown key");
    }
  }

  double number() const {
    if (!node_->is_number()) fail("expected a number");
    const double v = node_->get<double>();
    if (!std::isfinite(v)) fail("expected a finite number");
    return v;
  }

  double number_in(double lo, double hi) const {
    const double v = number();
    if (v < lo || v > hi) {
      std::ostringstream os;
      os << "value " << v << " outside [" << lo << ", " << hi << "]";
      fail(os.str());
    }
    return v;
  }

  long long integer() const {
    if (!node_->is_number_integer()) fail("expected an integer");
    return node_->get<long long>();
  }

  int integer_in(long long lo, long long hi) const {
    const long long v = integer();
    if (v < lo || v > hi) fail("value " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " +
                               std::to_string(hi) + "]");
    return static_cast<int>(v);
  }

  std::uint64_t seed() const {
    if (!node_->is_number_unsigned() && !(node_->is_number_integer() && node_->get<long long>() >= 0))
      fail("expected a non-negative integer seed");
    return node_->get<std::uint64_t>();
  }

  bool boolean() const {
    if (!node_->is_boolean()) fail("expected true or false");
    return node_->get<bool>();
  }

  std::string string() const {
    if (!node_->is_string()) fail("expected a string");
    return node_->get<std::string>();
  }

  std::vector<double> numbers(std::size_t n) const {
    require_array();
    if (node_->size() != n) fail("expected an array of " + std::to_string(n) + " numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(at(i).number());
    return out;
  }

  Vec3 vec3() const {
    const auto v = numbers(3);
    return {v[0], v[1], v[2]};
  }

  Vec3 color() const {
    const Vec3 c = vec3();
    if ((c.array() < 0.0).any() || (c.array() > 1.0).any()) fail("color components must lie in [0, 1]");
    return c;
  }

  // Optional accessors.
  double number_or(const std::string& key, double fallback) const { return has(key) ? at(key).number() : fallback; }
  int integer_or(const std::string& key, int fallback) const {
    return has(key) ? static_cast<int>(at(key).integer()) : fallback;
  }
  bool boolean_or(const std::string& key, bool fallback) const { return has(key) ? at(key).boolean() : fallback; }
  std::string string_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? at(key).string() : fallback;
  }

 private:
  void require_object() const {
    if (!node_->is_object()) fail("expected an object");
  }
  void require_array() const {
    if (!node_->is_array()) fail("expected an array");
  }

  const Json* node_;
  std::string file_;
  std::string path_;
};

}  // namespace advtex
