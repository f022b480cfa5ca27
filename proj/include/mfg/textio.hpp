#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mfg {

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);
std::vector<std::uint8_t> read_binary_file(const std::string& path);
void write_binary_file(const std::string& path,
                       std::span<const std::uint8_t> bytes);

// Shortest representation that round-trips a double exactly.
std::string format_double(double v);

// Plain `key = value` files, used for skeleton configs, experiment configs
// and run manifests. '#' starts a comment, blank lines are skipped, insertion
// order is preserved on write so manifests stay diffable.
class KvFile {
 public:
  static KvFile parse(std::string_view text);     // SchemaError on bad lines
  static KvFile load(const std::string& path);    // IoError / SchemaError

  const std::string* find(std::string_view key) const;
  bool has(std::string_view key) const { return find(key) != nullptr; }

  std::string get(std::string_view key, std::string fallback = "") const;
  std::string require(std::string_view key) const;  // SchemaError if absent
  std::int64_t get_int(std::string_view key, std::int64_t fallback) const;
  double get_double(std::string_view key, double fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  // Accepts `[a, b, c]` or a bare comma separated list; items are trimmed
  // and surrounding quotes removed.
  std::vector<std::string> get_list(std::string_view key) const;

  void set(std::string_view key, std::string_view value);
  void set_int(std::string_view key, std::int64_t value);
  void set_double(std::string_view key, double value);
  void set_list(std::string_view key, const std::vector<std::string>& items);

  std::string dump() const;
  void save(const std::string& path) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

std::string trim(std::string_view s);
std::vector<std::string> split_list(std::string_view value);

}  // namespace mfg
