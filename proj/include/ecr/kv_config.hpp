#ifndef ECR_KV_CONFIG_HPP_
#define ECR_KV_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ecr {

// Flat `key = value` text file. `#` starts a comment; blank lines ignored.
class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig load(const std::filesystem::path& path);
  static KvConfig parse(const std::string& text,
                        const std::string& source = "<config>");

  bool has(const std::string& key) const;
  void set(const std::string& key, std::string value);

  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Comma-separated list; empty items dropped.
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;

  // Throws InputError naming any key not in `known`.
  void reject_unknown(const std::set<std::string>& known) const;

  const std::map<std::string, std::string>& entries() const {
    return entries_;
  }

 private:
  std::optional<std::string> raw(const std::string& key) const;

  std::map<std::string, std::string> entries_;
  std::string source_ = "<config>";
};

}  // namespace ecr

#endif  // ECR_KV_CONFIG_HPP_
