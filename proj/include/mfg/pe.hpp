#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfg/ingest.hpp"
#include "mfg/month.hpp"

namespace mfg::pe {

// Base-2 Shannon entropy of a byte span, in [0, 8]. Empty input gives 0.
double shannon_entropy_bits(std::span<const std::uint8_t> bytes);

std::vector<std::uint64_t> byte_histogram(std::span<const std::uint8_t> bytes);

struct ByteEntropyConfig {
  std::size_t window = 1024;
  std::size_t step = 256;

  bool valid() const { return window > 0 && step > 0 && step <= window; }
};

// 16x16 joint histogram over (window entropy, byte high nibble), flattened
// row-major with the entropy bin as the row. Entropy bins are 0.5 wide and
// H = 8 lands in the top bin. Inputs shorter than one window produce a
// single whole-input window. Each byte of each window counts once, so with
// full windows the total is windows * window_size.
std::vector<std::uint64_t> byte_entropy_histogram(
    std::span<const std::uint8_t> bytes, const ByteEntropyConfig& cfg = {});

// Printable-run statistics over the raw file. Runs are maximal sequences of
// bytes in [0x20, 0x7E] of length >= 5. Substring counters scan the raw
// bytes; only the URL prefixes are matched case-insensitively.
ingest::StringFeatures string_stats(std::span<const std::uint8_t> bytes);

struct PeSection {
  std::string name;
  std::uint64_t virtual_size = 0;
  std::uint64_t virtual_address = 0;
  std::uint64_t raw_size = 0;
  std::uint64_t raw_ptr = 0;
  std::uint32_t characteristics = 0;
  double entropy = 0.0;  // of the raw bytes actually present in the file
};

struct PeCoff {
  std::uint16_t machine = 0;
  std::uint32_t timestamp = 0;
  std::uint32_t num_symbols = 0;
  std::uint16_t characteristics = 0;
};

struct PeOptional {
  bool present = false;
  std::uint16_t magic = 0;  // 0x10B PE32, 0x20B PE32+
  std::uint8_t linker_major = 0;
  std::uint8_t linker_minor = 0;
  std::uint64_t sizeof_code = 0;
  std::uint32_t entry_rva = 0;
  std::uint16_t os_major = 0, os_minor = 0;
  std::uint16_t image_major = 0, image_minor = 0;
  std::uint16_t subsystem_major = 0, subsystem_minor = 0;
  std::uint64_t sizeof_image = 0;
  std::uint64_t sizeof_headers = 0;
  std::uint16_t subsystem = 0;
  std::uint16_t dll_characteristics = 0;
  std::uint64_t sizeof_heap_commit = 0;
};

inline constexpr int kDataDirCount = ingest::kDataDirectoryCount;

struct ParsedPe {
  PeCoff coff;
  PeOptional optional;
  std::vector<PeSection> sections;
  // dll name -> api names, in import table order; by-ordinal entries are
  // named "ordinalN"
  std::vector<std::pair<std::string, std::vector<std::string>>> imports;
  std::vector<std::string> exports;
  // (size, virtual_address), always 15 entries, zeros when absent
  std::array<std::pair<std::uint64_t, std::uint64_t>, kDataDirCount> datadirs{};
  std::string entry_section;
};

// Tolerant parser: only a missing MZ or PE\0\0 signature is an error
// (NotAPeError). Any malformed substructure (truncated import table, bad
// RVAs) degrades to empty fields while the rest is kept.
ParsedPe parse_pe(std::span<const std::uint8_t> bytes);

// Full record assembly from raw bytes: sha256, the two histograms, string
// stats, and all PE-derived groups, shaped like a parsed dataset line.
ingest::FeatureRecord extract_features(std::span<const std::uint8_t> bytes,
                                       YearMonth appeared, int label);

// Flag/value naming used when serializing parsed headers into records.
std::string machine_name(std::uint16_t machine);
std::string subsystem_name(std::uint16_t subsystem);
std::vector<std::string> coff_characteristic_names(std::uint16_t flags);
std::vector<std::string> dll_characteristic_names(std::uint16_t flags);
std::vector<std::string> section_prop_names(std::uint32_t characteristics);
extern const std::array<const char*, kDataDirCount> kDataDirectoryNames;

}  // namespace mfg::pe
