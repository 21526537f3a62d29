#include "ecr/kv_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "ecr/error.hpp"
#include "ecr/utf8.hpp"

namespace ecr {

KvConfig KvConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path.string());
}

KvConfig KvConfig::parse(const std::string& text, const std::string& source) {
  KvConfig config;
  config.source_ = source;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string_view body = utf8::trim(line);
    if (body.empty()) continue;
    const std::size_t eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError(source, line_no, "expected key = value");
    }
    const std::string key(utf8::trim(body.substr(0, eq)));
    if (key.empty()) throw ParseError(source, line_no, "empty key");
    if (config.entries_.contains(key)) {
      throw ParseError(source, line_no, "duplicate key '" + key + "'");
    }
    config.entries_[key] = std::string(utf8::trim(body.substr(eq + 1)));
  }
  return config;
}

bool KvConfig::has(const std::string& key) const {
  return entries_.contains(key);
}

void KvConfig::set(const std::string& key, std::string value) {
  entries_[key] = std::move(value);
}

std::optional<std::string> KvConfig::raw(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::string KvConfig::get_string(const std::string& key,
                                 const std::string& fallback) const {
  return raw(key).value_or(fallback);
}

namespace {

double parse_double(const std::string& value, const std::string& key,
                    const std::string& source) {
  double out = 0.0;
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw InputError(source + ": key '" + key + "' is not a number: " + value);
  }
  return out;
}

}  // namespace

double KvConfig::get_double(const std::string& key, double fallback) const {
  const auto value = raw(key);
  if (!value) return fallback;
  return parse_double(*value, key, source_);
}

std::int64_t KvConfig::get_int(const std::string& key,
                               std::int64_t fallback) const {
  const auto value = raw(key);
  if (!value) return fallback;
  std::int64_t out = 0;
  const char* end = value->data() + value->size();
  const auto [ptr, ec] = std::from_chars(value->data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw InputError(source_ + ": key '" + key +
                     "' is not an integer: " + *value);
  }
  return out;
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  const auto value = raw(key);
  if (!value) return fallback;
  const std::string v = utf8::to_lower(*value);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InputError(source_ + ": key '" + key + "' is not a boolean: " +
                   *value);
}

std::vector<std::string> KvConfig::get_list(const std::string& key) const {
  std::vector<std::string> items;
  const auto value = raw(key);
  if (!value) return items;
  for (const std::string& item : utf8::split(*value, ',')) {
    const std::string_view t = utf8::trim(item);
    if (!t.empty()) items.emplace_back(t);
  }
  return items;
}

std::vector<double> KvConfig::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& item : get_list(key)) {
    out.push_back(parse_double(item, key, source_));
  }
  return out;
}

void KvConfig::reject_unknown(const std::set<std::string>& known) const {
  for (const auto& [key, value] : entries_) {
    if (!known.contains(key)) {
      throw InputError(source_ + ": unknown key '" + key + "'");
    }
  }
}

}  // namespace ecr
