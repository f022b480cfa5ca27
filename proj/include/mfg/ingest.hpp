#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mfg/month.hpp"

namespace mfg::ingest {

// Record layout mirrors the public EMBER-2018 line-delimited feature schema
// so real dumps drop in unmodified. has_* flags are kept as 0/1 ints to
// round-trip the on-disk form exactly.

struct GeneralFeatures {
  std::uint64_t size = 0;
  std::uint64_t vsize = 0;
  int has_debug = 0;
  std::uint64_t exports = 0;
  std::uint64_t imports = 0;
  int has_relocations = 0;
  int has_resources = 0;
  int has_signature = 0;
  int has_tls = 0;
  std::uint64_t symbols = 0;
};

struct CoffHeader {
  std::uint64_t timestamp = 0;
  std::string machine;
  std::vector<std::string> characteristics;
};

struct OptionalHeader {
  std::string subsystem;
  std::vector<std::string> dll_characteristics;
  std::string magic;
  std::uint64_t major_image_version = 0;
  std::uint64_t minor_image_version = 0;
  std::uint64_t major_linker_version = 0;
  std::uint64_t minor_linker_version = 0;
  std::uint64_t major_operating_system_version = 0;
  std::uint64_t minor_operating_system_version = 0;
  std::uint64_t major_subsystem_version = 0;
  std::uint64_t minor_subsystem_version = 0;
  std::uint64_t sizeof_code = 0;
  std::uint64_t sizeof_headers = 0;
  std::uint64_t sizeof_heap_commit = 0;
};

struct HeaderFeatures {
  CoffHeader coff;
  OptionalHeader optional;
};

struct SectionEntry {
  std::string name;
  std::uint64_t size = 0;
  double entropy = 0.0;
  std::uint64_t vsize = 0;
  std::vector<std::string> props;
};

struct SectionInfo {
  std::string entry;  // name of the section holding the entry point
  std::vector<SectionEntry> sections;
};

struct StringFeatures {
  std::uint64_t numstrings = 0;
  double avlength = 0.0;
  std::vector<std::uint64_t> printabledist;  // 96 bins, 0x20..0x7E
  std::uint64_t printables = 0;
  double entropy = 0.0;
  std::uint64_t paths = 0;
  std::uint64_t urls = 0;
  std::uint64_t registry = 0;
  std::uint64_t MZ = 0;
};

struct DataDirectory {
  std::string name;
  std::uint64_t size = 0;
  std::uint64_t virtual_address = 0;
};

inline constexpr int kDataDirectoryCount = 15;
inline constexpr int kHistogramBins = 256;
inline constexpr int kPrintableBins = 96;

struct FeatureRecord {
  std::string sha256;
  YearMonth appeared;
  int label = -1;  // -1 unlabeled, 0 benign, 1 malicious
  GeneralFeatures general;
  HeaderFeatures header;
  // insertion order of the source object is preserved; it fixes the child
  // node order of the built graph
  std::vector<std::pair<std::string, std::vector<std::string>>> imports;
  std::vector<std::string> exports;
  SectionInfo section;
  std::vector<DataDirectory> datadirectories;  // always 15 after parsing
  std::vector<std::uint64_t> histogram;        // 256
  std::vector<std::uint64_t> byteentropy;      // 256
  StringFeatures strings;

  std::uint64_t total_import_names() const;
};

// Parses one JSON line. line_no is only used in error messages.
// Throws SchemaError on malformed JSON, wrong arity or bad label/appeared.
FeatureRecord parse_record(std::string_view line, std::size_t line_no = 0);

std::string record_to_line(const FeatureRecord& rec);

struct LoadStats {
  std::size_t kept = 0;
  std::size_t dropped_unlabeled = 0;
  std::size_t dropped_wrong_year = 0;

  std::size_t dropped() const { return dropped_unlabeled + dropped_wrong_year; }
};

// Streams records from line-delimited files, keeping only label 0/1 records
// whose appeared year matches keep_year. Directories expand to their *.jsonl
// files in name order. Unparseable lines abort with file and line number.
void for_each_filtered(const std::vector<std::string>& paths,
                       const std::function<void(FeatureRecord&&)>& fn,
                       LoadStats* stats = nullptr, int keep_year = 2018);

std::vector<FeatureRecord> load_filtered(const std::vector<std::string>& paths,
                                         LoadStats* stats = nullptr,
                                         int keep_year = 2018);

// Directories become their contained *.jsonl files, sorted; files pass
// through untouched.
std::vector<std::string> expand_inputs(const std::vector<std::string>& paths);

std::map<YearMonth, std::vector<FeatureRecord>> partition_by_month(
    std::vector<FeatureRecord> records);

struct DatasetSplit {
  std::vector<FeatureRecord> train;
  std::vector<FeatureRecord> test;
};

// Stratified, deterministic in seed. Keeps the input's relative order inside
// each side. Throws DataError if ratio is outside (0,1) or either class has
// fewer than two records.
DatasetSplit split_train_test(std::span<const FeatureRecord> records,
                              double ratio, std::uint64_t seed);

void write_records(const std::string& path,
                   std::span<const FeatureRecord> records);

}  // namespace mfg::ingest
