#include "mfg/textio.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>

#include "mfg/errors.hpp"

namespace mfg {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read file: " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed: " + path);
}

std::vector<std::uint8_t> read_binary_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot read file: " + path);
  auto size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) throw IoError("read failed: " + path);
  return bytes;
}

void write_binary_file(const std::string& path,
                       std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

std::string format_double(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) break;
  }
  return buf;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

namespace {
std::string strip_quotes(std::string s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\'')))
    return s.substr(1, s.size() - 2);
  return s;
}
}  // namespace

std::vector<std::string> split_list(std::string_view value) {
  std::string v = trim(value);
  if (!v.empty() && v.front() == '[' && v.back() == ']')
    v = v.substr(1, v.size() - 2);
  std::vector<std::string> items;
  std::size_t start = 0;
  while (start <= v.size()) {
    std::size_t comma = v.find(',', start);
    std::string item = trim(std::string_view(v).substr(
        start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!item.empty()) items.push_back(strip_quotes(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return items;
}

KvFile KvFile::parse(std::string_view text) {
  KvFile kv;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(
        pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    pos = (nl == std::string_view::npos) ? text.size() + 1 : nl + 1;
    std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw SchemaError("config line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    std::string key = trim(std::string_view(stripped).substr(0, eq));
    std::string value = trim(std::string_view(stripped).substr(eq + 1));
    if (key.empty())
      throw SchemaError("config line " + std::to_string(line_no) +
                        ": empty key");
    kv.entries_.emplace_back(std::move(key), std::move(value));
  }
  return kv;
}

KvFile KvFile::load(const std::string& path) {
  try {
    return parse(read_text_file(path));
  } catch (const SchemaError& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

const std::string* KvFile::find(std::string_view key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return &v;
  return nullptr;
}

std::string KvFile::get(std::string_view key, std::string fallback) const {
  const std::string* v = find(key);
  return v ? strip_quotes(*v) : std::move(fallback);
}

std::string KvFile::require(std::string_view key) const {
  const std::string* v = find(key);
  if (!v) throw SchemaError("config: missing key '" + std::string(key) + "'");
  return strip_quotes(*v);
}

std::int64_t KvFile::get_int(std::string_view key,
                             std::int64_t fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size())
    throw SchemaError("config: key '" + std::string(key) +
                      "' is not an integer: " + *v);
  return out;
}

double KvFile::get_double(std::string_view key, double fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  char* end = nullptr;
  double out = std::strtod(v->c_str(), &end);
  if (end != v->c_str() + v->size())
    throw SchemaError("config: key '" + std::string(key) +
                      "' is not a number: " + *v);
  return out;
}

bool KvFile::get_bool(std::string_view key, bool fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw SchemaError("config: key '" + std::string(key) +
                    "' is not a boolean: " + *v);
}

std::vector<std::string> KvFile::get_list(std::string_view key) const {
  const std::string* v = find(key);
  if (!v) return {};
  return split_list(*v);
}

void KvFile::set(std::string_view key, std::string_view value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::string(value);
      return;
    }
  }
  entries_.emplace_back(std::string(key), std::string(value));
}

void KvFile::set_int(std::string_view key, std::int64_t value) {
  set(key, std::to_string(value));
}

void KvFile::set_double(std::string_view key, double value) {
  set(key, format_double(value));
}

void KvFile::set_list(std::string_view key,
                      const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += items[i];
  }
  out += "]";
  set(key, out);
}

std::string KvFile::dump() const {
  std::string out;
  for (const auto& [k, v] : entries_) {
    out += k;
    out += " = ";
    out += v;
    out += "\n";
  }
  return out;
}

void KvFile::save(const std::string& path) const {
  write_text_file(path, dump());
}

}  // namespace mfg
