#include "mfg/pe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "mfg/errors.hpp"
#include "mfg/hashing.hpp"

namespace mfg::pe {

double shannon_entropy_bits(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) return 0.0;
  std::array<std::uint64_t, 256> counts{};
  for (std::uint8_t b : bytes) ++counts[b];
  double total = static_cast<double>(bytes.size());
  double h = 0.0;
  for (std::uint64_t c : counts) {
    if (c == 0) continue;
    double p = static_cast<double>(c) / total;
    h -= p * std::log2(p);
  }
  return h;
}

std::vector<std::uint64_t> byte_histogram(std::span<const std::uint8_t> bytes) {
  std::vector<std::uint64_t> hist(256, 0);
  for (std::uint8_t b : bytes) ++hist[b];
  return hist;
}

std::vector<std::uint64_t> byte_entropy_histogram(
    std::span<const std::uint8_t> bytes, const ByteEntropyConfig& cfg) {
  if (!cfg.valid())
    throw DataError("byte_entropy_histogram: invalid window/step");
  std::vector<std::uint64_t> hist(256, 0);

  auto add_window = [&](std::span<const std::uint8_t> window) {
    double h = shannon_entropy_bits(window);
    int bin = std::min(15, static_cast<int>(h * 2.0));
    for (std::uint8_t b : window) ++hist[bin * 16 + (b >> 4)];
  };

  if (bytes.size() < cfg.window) {
    add_window(bytes);  // single whole-input window, possibly empty
  } else {
    std::size_t count = (bytes.size() - cfg.window) / cfg.step + 1;
    for (std::size_t w = 0; w < count; ++w)
      add_window(bytes.subspan(w * cfg.step, cfg.window));
  }
  return hist;
}

namespace {

bool printable(std::uint8_t b) { return b >= 0x20 && b <= 0x7E; }

std::uint64_t count_substring(std::span<const std::uint8_t> bytes,
                              std::string_view needle, bool fold_case) {
  if (needle.empty() || bytes.size() < needle.size()) return 0;
  auto lower = [](std::uint8_t c) -> std::uint8_t {
    return (c >= 'A' && c <= 'Z') ? c + 32 : c;
  };
  std::uint64_t count = 0;
  for (std::size_t i = 0; i + needle.size() <= bytes.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < needle.size(); ++j) {
      std::uint8_t a = bytes[i + j];
      std::uint8_t b = static_cast<std::uint8_t>(needle[j]);
      if (fold_case ? lower(a) != lower(b) : a != b) {
        match = false;
        break;
      }
    }
    if (match) ++count;
  }
  return count;
}

}  // namespace

ingest::StringFeatures string_stats(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kMinRun = 5;
  ingest::StringFeatures s;
  s.printabledist.assign(ingest::kPrintableBins, 0);

  std::uint64_t total_len = 0;
  std::size_t i = 0;
  while (i < bytes.size()) {
    if (!printable(bytes[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < bytes.size() && printable(bytes[j])) ++j;
    if (j - i >= kMinRun) {
      ++s.numstrings;
      total_len += j - i;
      for (std::size_t t = i; t < j; ++t) ++s.printabledist[bytes[t] - 0x20];
    }
    i = j;
  }
  s.printables = total_len;
  s.avlength = s.numstrings
                   ? static_cast<double>(total_len) /
                         static_cast<double>(s.numstrings)
                   : 0.0;

  if (total_len > 0) {
    double h = 0.0;
    for (std::uint64_t c : s.printabledist) {
      if (c == 0) continue;
      double p = static_cast<double>(c) / static_cast<double>(total_len);
      h -= p * std::log2(p);
    }
    s.entropy = h;
  }

  s.paths = count_substring(bytes, "C:\\", false);
  s.urls = count_substring(bytes, "http://", true) +
           count_substring(bytes, "https://", true);
  s.registry = count_substring(bytes, "HKEY_", false);
  s.MZ = count_substring(bytes, "MZ", false);
  return s;
}

// ---------------------------------------------------------------------------
// PE image walking

namespace {

struct Truncated {};

struct Reader {
  std::span<const std::uint8_t> d;

  bool has(std::uint64_t off, std::uint64_t n) const {
    return off <= d.size() && n <= d.size() - off;
  }
  std::uint8_t rd8(std::uint64_t off) const {
    if (!has(off, 1)) throw Truncated{};
    return d[off];
  }
  std::uint16_t rd16(std::uint64_t off) const {
    if (!has(off, 2)) throw Truncated{};
    return static_cast<std::uint16_t>(d[off] | (d[off + 1] << 8));
  }
  std::uint32_t rd32(std::uint64_t off) const {
    if (!has(off, 4)) throw Truncated{};
    return static_cast<std::uint32_t>(d[off]) |
           (static_cast<std::uint32_t>(d[off + 1]) << 8) |
           (static_cast<std::uint32_t>(d[off + 2]) << 16) |
           (static_cast<std::uint32_t>(d[off + 3]) << 24);
  }
  std::uint64_t rd64(std::uint64_t off) const {
    return static_cast<std::uint64_t>(rd32(off)) |
           (static_cast<std::uint64_t>(rd32(off + 4)) << 32);
  }
  std::string rdsz(std::uint64_t off, std::size_t cap = 512) const {
    std::string out;
    for (std::size_t i = 0; i < cap; ++i) {
      std::uint8_t c = rd8(off + i);
      if (c == 0) return out;
      out.push_back(static_cast<char>(c));
    }
    return out;
  }
};

// Windows' loader caps images at 96 sections; hostile headers declare more.
constexpr int kMaxSections = 96;
constexpr int kMaxImportDescriptors = 4096;
constexpr int kMaxThunksPerDll = 65536;
constexpr int kMaxExportNames = 65536;

struct Layout {
  std::uint64_t opt_start = 0;
  std::uint32_t num_rva_sizes = 0;
  std::uint64_t datadir_start = 0;
  bool plus = false;  // PE32+
};

std::uint64_t rva_to_off(const ParsedPe& pe, std::uint64_t sizeof_headers,
                         std::uint64_t rva) {
  for (const PeSection& s : pe.sections) {
    std::uint64_t extent = std::max(s.virtual_size, s.raw_size);
    if (rva >= s.virtual_address && rva < s.virtual_address + extent)
      return s.raw_ptr + (rva - s.virtual_address);
  }
  if (rva < sizeof_headers) return rva;  // data tucked into the header region
  throw Truncated{};
}

void parse_imports(const Reader& r, ParsedPe& pe) {
  auto [dir_size, dir_rva] = pe.datadirs[1];
  if (dir_rva == 0 || dir_size == 0) return;
  std::uint64_t hdr = pe.optional.sizeof_headers;
  bool plus = pe.optional.magic == 0x20B;

  std::uint64_t desc = rva_to_off(pe, hdr, dir_rva);
  for (int n = 0; n < kMaxImportDescriptors; ++n, desc += 20) {
    std::uint32_t oft = r.rd32(desc);
    std::uint32_t name_rva = r.rd32(desc + 12);
    std::uint32_t ft = r.rd32(desc + 16);
    if (oft == 0 && name_rva == 0 && ft == 0) break;
    if (name_rva == 0) continue;

    std::string dll = r.rdsz(rva_to_off(pe, hdr, name_rva));
    std::vector<std::string> apis;
    std::uint32_t thunk_rva = oft != 0 ? oft : ft;
    if (thunk_rva != 0) {
      std::uint64_t thunk = rva_to_off(pe, hdr, thunk_rva);
      for (int t = 0; t < kMaxThunksPerDll; ++t) {
        std::uint64_t entry = plus ? r.rd64(thunk + 8ull * t)
                                   : r.rd32(thunk + 4ull * t);
        if (entry == 0) break;
        std::uint64_t ordinal_bit = plus ? (1ull << 63) : (1ull << 31);
        if (entry & ordinal_bit) {
          apis.push_back("ordinal" + std::to_string(entry & 0xFFFF));
        } else {
          // hint/name entry: u16 hint then the ascii name
          apis.push_back(r.rdsz(rva_to_off(pe, hdr, entry & 0x7FFFFFFF) + 2));
        }
      }
    }
    pe.imports.emplace_back(std::move(dll), std::move(apis));
  }
}

void parse_exports(const Reader& r, ParsedPe& pe) {
  auto [dir_size, dir_rva] = pe.datadirs[0];
  if (dir_rva == 0 || dir_size == 0) return;
  std::uint64_t hdr = pe.optional.sizeof_headers;

  std::uint64_t dir = rva_to_off(pe, hdr, dir_rva);
  std::uint32_t num_names = r.rd32(dir + 24);
  std::uint32_t names_rva = r.rd32(dir + 32);
  if (num_names == 0 || names_rva == 0) return;
  num_names = std::min<std::uint32_t>(num_names, kMaxExportNames);

  std::uint64_t names = rva_to_off(pe, hdr, names_rva);
  for (std::uint32_t i = 0; i < num_names; ++i) {
    std::uint32_t name_rva = r.rd32(names + 4ull * i);
    pe.exports.push_back(r.rdsz(rva_to_off(pe, hdr, name_rva)));
  }
}

}  // namespace

ParsedPe parse_pe(std::span<const std::uint8_t> bytes) {
  Reader r{bytes};
  if (bytes.size() < 2 || bytes[0] != 'M' || bytes[1] != 'Z')
    throw NotAPeError("missing MZ magic");

  std::uint64_t pe_off = 0;
  try {
    pe_off = r.rd32(0x3C);
  } catch (const Truncated&) {
    throw NotAPeError("missing PE signature");
  }
  if (!r.has(pe_off, 4) || bytes[pe_off] != 'P' || bytes[pe_off + 1] != 'E' ||
      bytes[pe_off + 2] != 0 || bytes[pe_off + 3] != 0)
    throw NotAPeError("missing PE signature");

  ParsedPe pe;
  std::uint16_t declared_sections = 0;
  std::uint16_t opt_size = 0;
  try {
    std::uint64_t coff = pe_off + 4;
    pe.coff.machine = r.rd16(coff);
    declared_sections = r.rd16(coff + 2);
    pe.coff.timestamp = r.rd32(coff + 4);
    pe.coff.num_symbols = r.rd32(coff + 12);
    opt_size = r.rd16(coff + 16);
    pe.coff.characteristics = r.rd16(coff + 18);
  } catch (const Truncated&) {
    return pe;
  }

  std::uint64_t opt = pe_off + 24;
  Layout layout;
  try {
    if (opt_size >= 2) {
      PeOptional& o = pe.optional;
      o.magic = r.rd16(opt);
      bool plus = o.magic == 0x20B;
      layout.plus = plus;
      o.present = true;
      o.linker_major = r.rd8(opt + 2);
      o.linker_minor = r.rd8(opt + 3);
      o.sizeof_code = r.rd32(opt + 4);
      o.entry_rva = r.rd32(opt + 16);
      o.os_major = r.rd16(opt + 40);
      o.os_minor = r.rd16(opt + 42);
      o.image_major = r.rd16(opt + 44);
      o.image_minor = r.rd16(opt + 46);
      o.subsystem_major = r.rd16(opt + 48);
      o.subsystem_minor = r.rd16(opt + 50);
      o.sizeof_image = r.rd32(opt + 56);
      o.sizeof_headers = r.rd32(opt + 60);
      o.subsystem = r.rd16(opt + 68);
      o.dll_characteristics = r.rd16(opt + 70);
      o.sizeof_heap_commit = plus ? r.rd64(opt + 96) : r.rd32(opt + 84);
      layout.num_rva_sizes = r.rd32(opt + (plus ? 108 : 92));
      layout.datadir_start = opt + (plus ? 112 : 96);
    }
  } catch (const Truncated&) {
    pe.optional = PeOptional{};
  }

  if (pe.optional.present) {
    try {
      std::uint32_t n = std::min<std::uint32_t>(layout.num_rva_sizes, 16);
      for (std::uint32_t i = 0; i < std::min<std::uint32_t>(n, kDataDirCount);
           ++i) {
        std::uint32_t va = r.rd32(layout.datadir_start + 8ull * i);
        std::uint32_t size = r.rd32(layout.datadir_start + 8ull * i + 4);
        pe.datadirs[i] = {size, va};
      }
    } catch (const Truncated&) {
      pe.datadirs.fill({0, 0});
    }
  }

  std::uint64_t sect = opt + opt_size;
  int nsect = std::min<int>(declared_sections, kMaxSections);
  for (int i = 0; i < nsect; ++i) {
    std::uint64_t at = sect + 40ull * i;
    PeSection s;
    try {
      char name[9] = {};
      for (int c = 0; c < 8; ++c) name[c] = static_cast<char>(r.rd8(at + c));
      s.name = name;  // cut at the first NUL like the loader does
      s.virtual_size = r.rd32(at + 8);
      s.virtual_address = r.rd32(at + 12);
      s.raw_size = r.rd32(at + 16);
      s.raw_ptr = r.rd32(at + 20);
      s.characteristics = r.rd32(at + 36);
    } catch (const Truncated&) {
      break;
    }
    std::uint64_t begin = std::min<std::uint64_t>(s.raw_ptr, bytes.size());
    std::uint64_t avail =
        std::min<std::uint64_t>(s.raw_size, bytes.size() - begin);
    s.entropy = shannon_entropy_bits(bytes.subspan(begin, avail));
    pe.sections.push_back(std::move(s));
  }

  if (pe.optional.present && pe.optional.entry_rva != 0) {
    for (const PeSection& s : pe.sections) {
      std::uint64_t extent = std::max(s.virtual_size, s.raw_size);
      if (pe.optional.entry_rva >= s.virtual_address &&
          pe.optional.entry_rva < s.virtual_address + extent) {
        pe.entry_section = s.name;
        break;
      }
    }
  }

  try {
    parse_imports(r, pe);
  } catch (const Truncated&) {
    pe.imports.clear();
  }
  try {
    parse_exports(r, pe);
  } catch (const Truncated&) {
    pe.exports.clear();
  }
  return pe;
}

// ---------------------------------------------------------------------------
// Flag naming tables

std::string machine_name(std::uint16_t machine) {
  switch (machine) {
    case 0x0:    return "UNKNOWN";
    case 0x14C:  return "I386";
    case 0x166:  return "R4000";
    case 0x1C0:  return "ARM";
    case 0x1C2:  return "THUMB";
    case 0x1C4:  return "ARMNT";
    case 0x200:  return "IA64";
    case 0x8664: return "AMD64";
    case 0xAA64: return "ARM64";
    case 0x9041: return "M32R";
    case 0xEBC:  return "EBC";
    default: {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "0x%04X", machine);
      return buf;
    }
  }
}

std::string subsystem_name(std::uint16_t subsystem) {
  switch (subsystem) {
    case 0:  return "UNKNOWN";
    case 1:  return "NATIVE";
    case 2:  return "WINDOWS_GUI";
    case 3:  return "WINDOWS_CUI";
    case 5:  return "OS2_CUI";
    case 7:  return "POSIX_CUI";
    case 9:  return "WINDOWS_CE_GUI";
    case 10: return "EFI_APPLICATION";
    case 11: return "EFI_BOOT_SERVICE_DRIVER";
    case 12: return "EFI_RUNTIME_DRIVER";
    case 13: return "EFI_ROM";
    case 14: return "XBOX";
    case 16: return "WINDOWS_BOOT_APPLICATION";
    default: {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "0x%04X", subsystem);
      return buf;
    }
  }
}

namespace {
template <typename Flag>
std::vector<std::string> names_for_flags(
    std::uint32_t flags, std::span<const std::pair<Flag, const char*>> table) {
  std::vector<std::string> out;
  for (const auto& [bit, name] : table)
    if (flags & static_cast<std::uint32_t>(bit)) out.push_back(name);
  return out;
}
}  // namespace

std::vector<std::string> coff_characteristic_names(std::uint16_t flags) {
  static const std::pair<std::uint32_t, const char*> table[] = {
      {0x0001, "RELOCS_STRIPPED"},
      {0x0002, "EXECUTABLE_IMAGE"},
      {0x0004, "LINE_NUMS_STRIPPED"},
      {0x0008, "LOCAL_SYMS_STRIPPED"},
      {0x0010, "AGGRESSIVE_WS_TRIM"},
      {0x0020, "LARGE_ADDRESS_AWARE"},
      {0x0080, "BYTES_REVERSED_LO"},
      {0x0100, "NEED_32BIT_MACHINE"},
      {0x0200, "DEBUG_STRIPPED"},
      {0x0400, "REMOVABLE_RUN_FROM_SWAP"},
      {0x0800, "NET_RUN_FROM_SWAP"},
      {0x1000, "SYSTEM"},
      {0x2000, "DLL"},
      {0x4000, "UP_SYSTEM_ONLY"},
      {0x8000, "BYTES_REVERSED_HI"},
  };
  return names_for_flags<std::uint32_t>(flags, table);
}

std::vector<std::string> dll_characteristic_names(std::uint16_t flags) {
  static const std::pair<std::uint32_t, const char*> table[] = {
      {0x0020, "HIGH_ENTROPY_VA"},
      {0x0040, "DYNAMIC_BASE"},
      {0x0080, "FORCE_INTEGRITY"},
      {0x0100, "NX_COMPAT"},
      {0x0200, "NO_ISOLATION"},
      {0x0400, "NO_SEH"},
      {0x0800, "NO_BIND"},
      {0x1000, "APPCONTAINER"},
      {0x2000, "WDM_DRIVER"},
      {0x4000, "GUARD_CF"},
      {0x8000, "TERMINAL_SERVER_AWARE"},
  };
  return names_for_flags<std::uint32_t>(flags, table);
}

std::vector<std::string> section_prop_names(std::uint32_t characteristics) {
  static const std::pair<std::uint32_t, const char*> table[] = {
      {0x00000008, "TYPE_NO_PAD"},
      {0x00000020, "CNT_CODE"},
      {0x00000040, "CNT_INITIALIZED_DATA"},
      {0x00000080, "CNT_UNINITIALIZED_DATA"},
      {0x00000200, "LNK_INFO"},
      {0x00000800, "LNK_REMOVE"},
      {0x00001000, "LNK_COMDAT"},
      {0x00008000, "GPREL"},
      {0x00020000, "MEM_PURGEABLE"},
      {0x00040000, "MEM_LOCKED"},
      {0x00080000, "MEM_PRELOAD"},
      {0x01000000, "LNK_NRELOC_OVFL"},
      {0x02000000, "MEM_DISCARDABLE"},
      {0x04000000, "MEM_NOT_CACHED"},
      {0x08000000, "MEM_NOT_PAGED"},
      {0x10000000, "MEM_SHARED"},
      {0x20000000, "MEM_EXECUTE"},
      {0x40000000, "MEM_READ"},
      {0x80000000, "MEM_WRITE"},
  };
  return names_for_flags<std::uint32_t>(characteristics, table);
}

const std::array<const char*, kDataDirCount> kDataDirectoryNames = {
    "EXPORT_TABLE",
    "IMPORT_TABLE",
    "RESOURCE_TABLE",
    "EXCEPTION_TABLE",
    "CERTIFICATE_TABLE",
    "BASE_RELOCATION_TABLE",
    "DEBUG",
    "ARCHITECTURE",
    "GLOBAL_PTR",
    "TLS_TABLE",
    "LOAD_CONFIG_TABLE",
    "BOUND_IMPORT",
    "IAT",
    "DELAY_IMPORT_DESCRIPTOR",
    "CLR_RUNTIME_HEADER",
};

// ---------------------------------------------------------------------------

ingest::FeatureRecord extract_features(std::span<const std::uint8_t> bytes,
                                       YearMonth appeared, int label) {
  ParsedPe pe = parse_pe(bytes);

  ingest::FeatureRecord rec;
  rec.sha256 = sha256_hex(bytes);
  rec.appeared = appeared;
  rec.label = label;

  rec.histogram = byte_histogram(bytes);
  rec.byteentropy = byte_entropy_histogram(bytes);
  rec.strings = string_stats(bytes);

  rec.general.size = bytes.size();
  rec.general.vsize = pe.optional.sizeof_image;
  rec.general.has_debug = pe.datadirs[6].first > 0 ? 1 : 0;
  rec.general.exports = pe.exports.size();
  std::uint64_t api_count = 0;
  for (const auto& [dll, apis] : pe.imports) api_count += apis.size();
  rec.general.imports = api_count;
  rec.general.has_relocations = pe.datadirs[5].first > 0 ? 1 : 0;
  rec.general.has_resources = pe.datadirs[2].first > 0 ? 1 : 0;
  rec.general.has_signature = pe.datadirs[4].first > 0 ? 1 : 0;
  rec.general.has_tls = pe.datadirs[9].first > 0 ? 1 : 0;
  rec.general.symbols = pe.coff.num_symbols;

  rec.header.coff.timestamp = pe.coff.timestamp;
  rec.header.coff.machine = machine_name(pe.coff.machine);
  rec.header.coff.characteristics =
      coff_characteristic_names(pe.coff.characteristics);

  ingest::OptionalHeader& opt = rec.header.optional;
  if (pe.optional.present) {
    opt.subsystem = subsystem_name(pe.optional.subsystem);
    opt.dll_characteristics =
        dll_characteristic_names(pe.optional.dll_characteristics);
    opt.magic = pe.optional.magic == 0x20B
                    ? "PE32+"
                    : (pe.optional.magic == 0x10B ? "PE32" : "UNKNOWN");
    opt.major_image_version = pe.optional.image_major;
    opt.minor_image_version = pe.optional.image_minor;
    opt.major_linker_version = pe.optional.linker_major;
    opt.minor_linker_version = pe.optional.linker_minor;
    opt.major_operating_system_version = pe.optional.os_major;
    opt.minor_operating_system_version = pe.optional.os_minor;
    opt.major_subsystem_version = pe.optional.subsystem_major;
    opt.minor_subsystem_version = pe.optional.subsystem_minor;
    opt.sizeof_code = pe.optional.sizeof_code;
    opt.sizeof_headers = pe.optional.sizeof_headers;
    opt.sizeof_heap_commit = pe.optional.sizeof_heap_commit;
  }

  rec.section.entry = pe.entry_section;
  for (const PeSection& s : pe.sections) {
    ingest::SectionEntry e;
    e.name = s.name;
    e.size = s.raw_size;
    e.entropy = s.entropy;
    e.vsize = s.virtual_size;
    e.props = section_prop_names(s.characteristics);
    rec.section.sections.push_back(std::move(e));
  }

  rec.imports = pe.imports;
  rec.exports = pe.exports;

  rec.datadirectories.resize(ingest::kDataDirectoryCount);
  for (int i = 0; i < kDataDirCount; ++i) {
    rec.datadirectories[i].name = kDataDirectoryNames[i];
    rec.datadirectories[i].size = pe.datadirs[i].first;
    rec.datadirectories[i].virtual_address = pe.datadirs[i].second;
  }
  return rec;
}

}  // namespace mfg::pe
