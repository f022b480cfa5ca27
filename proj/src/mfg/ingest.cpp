#include "mfg/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "mfg/errors.hpp"
#include "mfg/rng.hpp"

namespace mfg::ingest {

namespace {

using Json = nlohmann::ordered_json;

std::uint64_t get_u64(const Json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return 0;
  if (it->is_number_integer()) {
    std::int64_t v = it->get<std::int64_t>();
    return v > 0 ? static_cast<std::uint64_t>(v) : 0;
  }
  if (it->is_number()) {
    double v = it->get<double>();
    return v > 0 ? static_cast<std::uint64_t>(v) : 0;
  }
  throw SchemaError(std::string("field '") + key + "' is not a number");
}

int get_flag(const Json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return 0;
  if (it->is_boolean()) return it->get<bool>() ? 1 : 0;
  if (it->is_number()) return it->get<double>() != 0.0 ? 1 : 0;
  throw SchemaError(std::string("field '") + key + "' is not a flag");
}

double get_double(const Json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return 0.0;
  if (!it->is_number())
    throw SchemaError(std::string("field '") + key + "' is not a number");
  return it->get<double>();
}

std::string get_str(const Json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return "";
  if (!it->is_string())
    throw SchemaError(std::string("field '") + key + "' is not a string");
  return it->get<std::string>();
}

std::vector<std::string> get_str_list(const Json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_array())
    throw SchemaError(std::string("field '") + key + "' is not an array");
  std::vector<std::string> out;
  out.reserve(it->size());
  for (const Json& v : *it) {
    if (!v.is_string())
      throw SchemaError(std::string("field '") + key +
                        "' holds a non-string item");
    out.push_back(v.get<std::string>());
  }
  return out;
}

std::vector<std::uint64_t> get_counts(const Json& obj, const char* key,
                                      std::size_t arity) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw SchemaError(std::string("missing field '") + key + "'");
  if (!it->is_array())
    throw SchemaError(std::string("field '") + key + "' is not an array");
  if (it->size() != arity)
    throw SchemaError(std::string("field '") + key + "' has " +
                      std::to_string(it->size()) + " entries, expected " +
                      std::to_string(arity));
  std::vector<std::uint64_t> out;
  out.reserve(arity);
  for (const Json& v : *it) {
    if (!v.is_number())
      throw SchemaError(std::string("field '") + key +
                        "' holds a non-numeric entry");
    double d = v.get<double>();
    out.push_back(d > 0 ? static_cast<std::uint64_t>(d) : 0);
  }
  return out;
}

bool blank_line(const std::string& line) {
  for (char c : line)
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  return true;
}

FeatureRecord record_from_json(const Json& j) {
  if (!j.is_object()) throw SchemaError("record is not a JSON object");

  FeatureRecord rec;
  rec.sha256 = get_str(j, "sha256");

  auto label_it = j.find("label");
  if (label_it == j.end() || !label_it->is_number_integer())
    throw SchemaError("missing or non-integer 'label'");
  int label = label_it->get<int>();
  if (label != -1 && label != 0 && label != 1)
    throw SchemaError("label must be -1, 0 or 1, got " +
                      std::to_string(label));
  rec.label = label;

  auto appeared_it = j.find("appeared");
  if (appeared_it == j.end() || !appeared_it->is_string())
    throw SchemaError("missing 'appeared'");
  rec.appeared = YearMonth::parse(appeared_it->get<std::string>());

  if (auto it = j.find("general"); it != j.end() && it->is_object()) {
    const Json& g = *it;
    rec.general.size = get_u64(g, "size");
    rec.general.vsize = get_u64(g, "vsize");
    rec.general.has_debug = get_flag(g, "has_debug");
    rec.general.exports = get_u64(g, "exports");
    rec.general.imports = get_u64(g, "imports");
    rec.general.has_relocations = get_flag(g, "has_relocations");
    rec.general.has_resources = get_flag(g, "has_resources");
    rec.general.has_signature = get_flag(g, "has_signature");
    rec.general.has_tls = get_flag(g, "has_tls");
    rec.general.symbols = get_u64(g, "symbols");
  }

  if (auto it = j.find("header"); it != j.end() && it->is_object()) {
    if (auto c = it->find("coff"); c != it->end() && c->is_object()) {
      rec.header.coff.timestamp = get_u64(*c, "timestamp");
      rec.header.coff.machine = get_str(*c, "machine");
      rec.header.coff.characteristics = get_str_list(*c, "characteristics");
    }
    if (auto o = it->find("optional"); o != it->end() && o->is_object()) {
      OptionalHeader& opt = rec.header.optional;
      opt.subsystem = get_str(*o, "subsystem");
      opt.dll_characteristics = get_str_list(*o, "dll_characteristics");
      opt.magic = get_str(*o, "magic");
      opt.major_image_version = get_u64(*o, "major_image_version");
      opt.minor_image_version = get_u64(*o, "minor_image_version");
      opt.major_linker_version = get_u64(*o, "major_linker_version");
      opt.minor_linker_version = get_u64(*o, "minor_linker_version");
      opt.major_operating_system_version =
          get_u64(*o, "major_operating_system_version");
      opt.minor_operating_system_version =
          get_u64(*o, "minor_operating_system_version");
      opt.major_subsystem_version = get_u64(*o, "major_subsystem_version");
      opt.minor_subsystem_version = get_u64(*o, "minor_subsystem_version");
      opt.sizeof_code = get_u64(*o, "sizeof_code");
      opt.sizeof_headers = get_u64(*o, "sizeof_headers");
      opt.sizeof_heap_commit = get_u64(*o, "sizeof_heap_commit");
    }
  }

  if (auto it = j.find("imports"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw SchemaError("'imports' is not an object");
    for (auto entry = it->begin(); entry != it->end(); ++entry) {
      std::vector<std::string> apis;
      if (!entry.value().is_array())
        throw SchemaError("imports entry is not an array");
      for (const Json& v : entry.value())
        if (v.is_string()) apis.push_back(v.get<std::string>());
      rec.imports.emplace_back(entry.key(), std::move(apis));
    }
  }

  rec.exports = get_str_list(j, "exports");

  if (auto it = j.find("section"); it != j.end() && it->is_object()) {
    rec.section.entry = get_str(*it, "entry");
    if (auto secs = it->find("sections");
        secs != it->end() && secs->is_array()) {
      for (const Json& s : *secs) {
        if (!s.is_object()) throw SchemaError("section entry is not an object");
        SectionEntry e;
        e.name = get_str(s, "name");
        e.size = get_u64(s, "size");
        e.entropy = get_double(s, "entropy");
        e.vsize = get_u64(s, "vsize");
        e.props = get_str_list(s, "props");
        rec.section.sections.push_back(std::move(e));
      }
    }
  }

  if (auto it = j.find("datadirectories"); it != j.end() && it->is_array()) {
    for (const Json& d : *it) {
      if (!d.is_object())
        throw SchemaError("datadirectories entry is not an object");
      DataDirectory dir;
      dir.name = get_str(d, "name");
      dir.size = get_u64(d, "size");
      dir.virtual_address = get_u64(d, "virtual_address");
      rec.datadirectories.push_back(std::move(dir));
    }
  }
  rec.datadirectories.resize(kDataDirectoryCount);

  rec.histogram = get_counts(j, "histogram", kHistogramBins);
  rec.byteentropy = get_counts(j, "byteentropy", kHistogramBins);

  if (auto it = j.find("strings"); it != j.end() && it->is_object()) {
    const Json& s = *it;
    rec.strings.numstrings = get_u64(s, "numstrings");
    rec.strings.avlength = get_double(s, "avlength");
    if (auto pd = s.find("printabledist"); pd != s.end() && pd->is_array()) {
      for (const Json& v : *pd) {
        double d = v.is_number() ? v.get<double>() : 0.0;
        rec.strings.printabledist.push_back(
            d > 0 ? static_cast<std::uint64_t>(d) : 0);
      }
    }
    rec.strings.printables = get_u64(s, "printables");
    rec.strings.entropy = get_double(s, "entropy");
    rec.strings.paths = get_u64(s, "paths");
    rec.strings.urls = get_u64(s, "urls");
    rec.strings.registry = get_u64(s, "registry");
    rec.strings.MZ = get_u64(s, "MZ");
  }
  rec.strings.printabledist.resize(kPrintableBins);

  return rec;
}

}  // namespace

std::uint64_t FeatureRecord::total_import_names() const {
  std::uint64_t n = 0;
  for (const auto& [dll, apis] : imports) n += apis.size();
  return n;
}

FeatureRecord parse_record(std::string_view line, std::size_t line_no) {
  auto where = [&]() -> std::string {
    return line_no ? "line " + std::to_string(line_no) + ": " : std::string();
  };
  Json j = Json::parse(line, nullptr, false);
  if (j.is_discarded()) throw SchemaError(where() + "invalid JSON");
  try {
    return record_from_json(j);
  } catch (const SchemaError& e) {
    throw SchemaError(where() + e.what());
  }
}

std::string record_to_line(const FeatureRecord& rec) {
  Json j = Json::object();
  j["sha256"] = rec.sha256;
  j["appeared"] = rec.appeared.str();
  j["label"] = rec.label;
  {
    Json g = Json::object();
    g["size"] = rec.general.size;
    g["vsize"] = rec.general.vsize;
    g["has_debug"] = rec.general.has_debug;
    g["exports"] = rec.general.exports;
    g["imports"] = rec.general.imports;
    g["has_relocations"] = rec.general.has_relocations;
    g["has_resources"] = rec.general.has_resources;
    g["has_signature"] = rec.general.has_signature;
    g["has_tls"] = rec.general.has_tls;
    g["symbols"] = rec.general.symbols;
    j["general"] = std::move(g);
  }
  {
    Json coff = Json::object();
    coff["timestamp"] = rec.header.coff.timestamp;
    coff["machine"] = rec.header.coff.machine;
    coff["characteristics"] = rec.header.coff.characteristics;
    Json opt = Json::object();
    const OptionalHeader& o = rec.header.optional;
    opt["subsystem"] = o.subsystem;
    opt["dll_characteristics"] = o.dll_characteristics;
    opt["magic"] = o.magic;
    opt["major_image_version"] = o.major_image_version;
    opt["minor_image_version"] = o.minor_image_version;
    opt["major_linker_version"] = o.major_linker_version;
    opt["minor_linker_version"] = o.minor_linker_version;
    opt["major_operating_system_version"] = o.major_operating_system_version;
    opt["minor_operating_system_version"] = o.minor_operating_system_version;
    opt["major_subsystem_version"] = o.major_subsystem_version;
    opt["minor_subsystem_version"] = o.minor_subsystem_version;
    opt["sizeof_code"] = o.sizeof_code;
    opt["sizeof_headers"] = o.sizeof_headers;
    opt["sizeof_heap_commit"] = o.sizeof_heap_commit;
    Json h = Json::object();
    h["coff"] = std::move(coff);
    h["optional"] = std::move(opt);
    j["header"] = std::move(h);
  }
  {
    Json sec = Json::object();
    sec["entry"] = rec.section.entry;
    Json list = Json::array();
    for (const SectionEntry& s : rec.section.sections) {
      Json e = Json::object();
      e["name"] = s.name;
      e["size"] = s.size;
      e["entropy"] = s.entropy;
      e["vsize"] = s.vsize;
      e["props"] = s.props;
      list.push_back(std::move(e));
    }
    sec["sections"] = std::move(list);
    j["section"] = std::move(sec);
  }
  {
    Json imp = Json::object();
    for (const auto& [dll, apis] : rec.imports) imp[dll] = apis;
    j["imports"] = std::move(imp);
  }
  j["exports"] = rec.exports;
  {
    Json dirs = Json::array();
    for (const DataDirectory& d : rec.datadirectories) {
      Json e = Json::object();
      e["name"] = d.name;
      e["size"] = d.size;
      e["virtual_address"] = d.virtual_address;
      dirs.push_back(std::move(e));
    }
    j["datadirectories"] = std::move(dirs);
  }
  j["histogram"] = rec.histogram;
  j["byteentropy"] = rec.byteentropy;
  {
    Json s = Json::object();
    s["numstrings"] = rec.strings.numstrings;
    s["avlength"] = rec.strings.avlength;
    s["printabledist"] = rec.strings.printabledist;
    s["printables"] = rec.strings.printables;
    s["entropy"] = rec.strings.entropy;
    s["paths"] = rec.strings.paths;
    s["urls"] = rec.strings.urls;
    s["registry"] = rec.strings.registry;
    s["MZ"] = rec.strings.MZ;
    j["strings"] = std::move(s);
  }
  // section names out of hostile binaries may not be valid UTF-8
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::vector<std::string> expand_inputs(const std::vector<std::string>& paths) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  for (const std::string& p : paths) {
    std::error_code ec;
    if (fs::is_directory(p, ec)) {
      std::vector<std::string> found;
      for (const auto& entry : fs::directory_iterator(p, ec)) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl")
          found.push_back(entry.path().string());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(p);
    }
  }
  return files;
}

void for_each_filtered(const std::vector<std::string>& paths,
                       const std::function<void(FeatureRecord&&)>& fn,
                       LoadStats* stats, int keep_year) {
  LoadStats local;
  for (const std::string& path : expand_inputs(paths)) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read file: " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (blank_line(line)) continue;
      FeatureRecord rec;
      try {
        rec = parse_record(line, line_no);
      } catch (const SchemaError& e) {
        throw SchemaError(path + ": " + e.what());
      }
      if (rec.label != 0 && rec.label != 1) {
        ++local.dropped_unlabeled;
        continue;
      }
      if (rec.appeared.year != keep_year) {
        ++local.dropped_wrong_year;
        continue;
      }
      ++local.kept;
      fn(std::move(rec));
    }
  }
  if (stats) *stats = local;
}

std::vector<FeatureRecord> load_filtered(const std::vector<std::string>& paths,
                                         LoadStats* stats, int keep_year) {
  std::vector<FeatureRecord> records;
  for_each_filtered(
      paths, [&](FeatureRecord&& rec) { records.push_back(std::move(rec)); },
      stats, keep_year);
  return records;
}

std::map<YearMonth, std::vector<FeatureRecord>> partition_by_month(
    std::vector<FeatureRecord> records) {
  std::map<YearMonth, std::vector<FeatureRecord>> buckets;
  for (FeatureRecord& rec : records)
    buckets[rec.appeared].push_back(std::move(rec));
  return buckets;
}

DatasetSplit split_train_test(std::span<const FeatureRecord> records,
                              double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0))
    throw DataError("split: ratio must be inside (0, 1)");

  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < records.size(); ++i) {
    int label = records[i].label;
    if (label != 0 && label != 1)
      throw DataError("split: records must be labeled 0 or 1");
    by_class[label].push_back(i);
  }
  if (by_class[0].size() < 2 || by_class[1].size() < 2)
    throw DataError("split: need at least two records of each class");

  std::vector<bool> in_train(records.size(), false);
  Rng rng(seed);
  for (auto& indices : by_class) {
    rng.shuffle(indices);
    auto want = static_cast<std::size_t>(
        std::llround(ratio * static_cast<double>(indices.size())));
    want = std::clamp<std::size_t>(want, 1, indices.size() - 1);
    for (std::size_t i = 0; i < want; ++i) in_train[indices[i]] = true;
  }

  DatasetSplit split;
  for (std::size_t i = 0; i < records.size(); ++i)
    (in_train[i] ? split.train : split.test).push_back(records[i]);
  return split;
}

void write_records(const std::string& path,
                   std::span<const FeatureRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path);
  for (const FeatureRecord& rec : records) out << record_to_line(rec) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace mfg::ingest
