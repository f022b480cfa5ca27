#include "support/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <utility>

#include "mfg/hashing.hpp"
#include "mfg/pe.hpp"
#include "mfg/rng.hpp"

namespace testsupport {

using mfg::Rng;
using mfg::ingest::FeatureRecord;
using mfg::ingest::SectionEntry;

namespace {

struct ApiPool {
  const char* dll;
  std::vector<const char*> apis;
};

const std::vector<ApiPool>& benign_pool() {
  static const std::vector<ApiPool> pool = {
      {"kernel32.dll",
       {"GetProcAddress", "LoadLibraryW", "CreateFileW", "ReadFile",
        "WriteFile", "CloseHandle", "VirtualAlloc", "HeapAlloc",
        "GetLastError", "Sleep", "ExitProcess"}},
      {"user32.dll",
       {"MessageBoxW", "CreateWindowExW", "ShowWindow", "GetMessageW",
        "DispatchMessageW", "DefWindowProcW"}},
      {"gdi32.dll",
       {"BitBlt", "CreateCompatibleDC", "SelectObject", "DeleteObject"}},
      {"advapi32.dll",
       {"RegOpenKeyExW", "RegQueryValueExW", "RegCloseKey"}},
      {"comctl32.dll", {"InitCommonControlsEx"}},
  };
  return pool;
}

const std::vector<ApiPool>& hostile_pool() {
  static const std::vector<ApiPool> pool = {
      {"wininet.dll",
       {"InternetOpenA", "InternetConnectA", "HttpOpenRequestA",
        "HttpSendRequestA", "InternetReadFile"}},
      {"advapi32.dll",
       {"CryptAcquireContextW", "CryptGenRandom", "CryptEncrypt",
        "RegSetValueExW", "AdjustTokenPrivileges"}},
      {"shell32.dll", {"ShellExecuteW"}},
  };
  return pool;
}

std::vector<std::string> pick_apis(Rng& rng, const std::vector<const char*>& pool,
                                   std::size_t at_least) {
  std::vector<std::string> out;
  for (const char* api : pool)
    if (rng.bernoulli(0.6)) out.emplace_back(api);
  std::size_t i = 0;
  while (out.size() < std::min(at_least, pool.size())) {
    std::string candidate = pool[i++];
    if (std::find(out.begin(), out.end(), candidate) == out.end())
      out.push_back(std::move(candidate));
  }
  return out;
}

void add_imports(FeatureRecord& rec, const std::string& dll,
                 std::vector<std::string> apis) {
  for (auto& [name, list] : rec.imports) {
    if (name == dll) {
      for (auto& api : apis)
        if (std::find(list.begin(), list.end(), api) == list.end())
          list.push_back(std::move(api));
      return;
    }
  }
  rec.imports.emplace_back(dll, std::move(apis));
}

SectionEntry make_section(Rng& rng, const char* name, double share,
                          std::uint64_t file_size, double entropy,
                          std::vector<std::string> props) {
  SectionEntry s;
  s.name = name;
  s.size = std::max<std::uint64_t>(
      512, static_cast<std::uint64_t>(share * static_cast<double>(file_size) *
                                      rng.uniform(0.8, 1.2)));
  s.vsize = static_cast<std::uint64_t>(static_cast<double>(s.size) *
                                       rng.uniform(1.0, 1.15));
  s.entropy = entropy;
  s.props = std::move(props);
  return s;
}

void fill_histograms(FeatureRecord& rec, Rng& rng, bool packed) {
  const std::uint64_t file_size = rec.general.size;

  // byte histogram: ascii/zero-heavy for plain binaries, flat when packed
  std::vector<double> w(mfg::ingest::kHistogramBins, 1.0);
  w[0x00] = 9.0;
  w[0xFF] = 4.0;
  for (int b = 0x20; b <= 0x7E; ++b) w[static_cast<std::size_t>(b)] = 3.0;
  double total_w = 0.0;
  for (double& v : w) {
    v *= rng.uniform(0.7, 1.3);
    if (packed) v = 0.3 * v + 0.7;  // pull toward uniform
    total_w += v;
  }
  rec.histogram.assign(mfg::ingest::kHistogramBins, 0);
  for (std::size_t b = 0; b < w.size(); ++b)
    rec.histogram[b] = static_cast<std::uint64_t>(
        static_cast<double>(file_size) * w[b] / total_w);

  // entropy-window histogram: each section contributes windows in the row
  // matching its entropy
  rec.byteentropy.assign(mfg::ingest::kHistogramBins, 0);
  const std::uint64_t windows =
      file_size >= 1024 ? (file_size - 1024) / 256 + 1 : 1;
  std::uint64_t total_section = 0;
  for (const auto& s : rec.section.sections) total_section += s.size;
  if (total_section == 0) total_section = 1;
  for (const auto& s : rec.section.sections) {
    const double frac =
        static_cast<double>(s.size) / static_cast<double>(total_section);
    const std::uint64_t wsec = std::max<std::uint64_t>(
        1, static_cast<std::uint64_t>(frac * static_cast<double>(windows)));
    const int bin = std::min(15, static_cast<int>(s.entropy * 2.0));
    const bool code = !s.props.empty() && s.props.front() == "CNT_CODE";
    for (int nib = 0; nib < 16; ++nib) {
      double share = code ? (nib >= 4 && nib <= 7 ? 0.15 : 0.025)
                          : (s.entropy > 7.0 ? 1.0 / 16.0
                                             : (nib < 8 ? 0.09 : 0.035));
      rec.byteentropy[static_cast<std::size_t>(bin * 16 + nib)] +=
          static_cast<std::uint64_t>(share * 1024.0 *
                                     static_cast<double>(wsec));
    }
  }
}

void fill_strings(FeatureRecord& rec, Rng& rng, bool mal, bool netish) {
  auto& st = rec.strings;
  st.numstrings = static_cast<std::uint64_t>(
      rng.uniform_int(mal ? 40 : 120, mal ? 280 : 520));
  st.avlength = rng.uniform(6.0, 12.0);
  st.printables = static_cast<std::uint64_t>(
      static_cast<double>(st.numstrings) * st.avlength);
  st.printabledist.assign(mfg::ingest::kPrintableBins, 0);
  std::uint64_t left = st.printables;
  for (std::size_t i = 0; i + 1 < st.printabledist.size(); ++i) {
    const auto take = static_cast<std::uint64_t>(
        static_cast<double>(left) * rng.uniform(0.0, 0.05));
    st.printabledist[i] = take;
    left -= take;
  }
  st.printabledist.back() = left;
  st.entropy = rng.uniform(3.8, 5.2);
  st.paths = static_cast<std::uint64_t>(rng.uniform_int(mal ? 0 : 1, mal ? 3 : 7));
  st.urls = static_cast<std::uint64_t>(
      rng.uniform_int(netish ? 2 : 0, netish ? 9 : 2));
  st.registry =
      static_cast<std::uint64_t>(rng.uniform_int(0, mal ? 6 : 2));
  st.MZ = static_cast<std::uint64_t>(rng.uniform_int(0, mal ? 4 : 1));
}

std::string fake_sha(std::uint64_t seed) {
  std::uint8_t bytes[8];
  std::memcpy(bytes, &seed, sizeof bytes);
  return mfg::sha256_hex(std::span<const std::uint8_t>(bytes, sizeof bytes));
}

// api_signal: probability a malicious record carries the hostile imports.
// entropy_margin shifts the packed/plain entropy bands toward each other.
FeatureRecord synth_impl(std::uint64_t seed, int label, mfg::YearMonth month,
                         double api_signal, double entropy_margin) {
  Rng rng(seed);
  FeatureRecord rec;
  rec.sha256 = fake_sha(seed);
  rec.appeared = month;
  rec.label = label;

  const bool mal = label == 1;
  const bool mal_apis = mal && rng.bernoulli(api_signal);
  const bool benign_netish = !mal && rng.bernoulli(0.10);
  const bool is_dll = rng.bernoulli(mal ? 0.10 : 0.25);

  rec.general.size =
      static_cast<std::uint64_t>(rng.uniform_int(40'000, 2'500'000));
  rec.general.vsize = static_cast<std::uint64_t>(
      static_cast<double>(rec.general.size) * rng.uniform(1.0, 1.4));
  rec.general.has_debug = rng.bernoulli(mal ? 0.2 : 0.6) ? 1 : 0;
  rec.general.has_relocations = rng.bernoulli(0.7) ? 1 : 0;
  rec.general.has_resources = rng.bernoulli(0.8) ? 1 : 0;
  rec.general.has_signature = rng.bernoulli(mal ? 0.08 : 0.5) ? 1 : 0;
  rec.general.has_tls = rng.bernoulli(mal ? 0.25 : 0.08) ? 1 : 0;
  rec.general.symbols = 0;

  const bool amd64 = rng.bernoulli(0.5);
  auto& coff = rec.header.coff;
  coff.timestamp =
      static_cast<std::uint64_t>(rng.uniform_int(1'260'000'000, 1'540'000'000));
  coff.machine = amd64 ? "AMD64" : "I386";
  coff.characteristics = {"EXECUTABLE_IMAGE"};
  if (amd64) coff.characteristics.push_back("LARGE_ADDRESS_AWARE");
  if (is_dll) coff.characteristics.push_back("DLL");

  auto& opt = rec.header.optional;
  opt.subsystem = rng.bernoulli(0.5) ? "WINDOWS_GUI" : "WINDOWS_CUI";
  opt.dll_characteristics = {"DYNAMIC_BASE", "NX_COMPAT"};
  if (rng.bernoulli(0.4))
    opt.dll_characteristics.push_back("TERMINAL_SERVER_AWARE");
  opt.magic = amd64 ? "PE32+" : "PE32";
  opt.major_image_version = static_cast<std::uint64_t>(rng.uniform_int(1, 10));
  opt.minor_image_version = 0;
  opt.major_linker_version = static_cast<std::uint64_t>(rng.uniform_int(9, 14));
  opt.minor_linker_version = 0;
  opt.major_operating_system_version =
      static_cast<std::uint64_t>(rng.uniform_int(5, 10));
  opt.minor_operating_system_version =
      static_cast<std::uint64_t>(rng.uniform_int(0, 3));
  opt.major_subsystem_version = opt.major_operating_system_version;
  opt.minor_subsystem_version = 0;
  opt.sizeof_code = static_cast<std::uint64_t>(
      static_cast<double>(rec.general.size) * rng.uniform(0.3, 0.5));
  opt.sizeof_headers = rng.bernoulli(0.5) ? 1024 : 4096;
  opt.sizeof_heap_commit = rng.bernoulli(0.5) ? 4096 : 8192;

  // imports
  const auto& benign = benign_pool();
  add_imports(rec, benign[0].dll, pick_apis(rng, benign[0].apis, 5));
  const int extra = static_cast<int>(rng.uniform_int(1, 3));
  for (int i = 0; i < extra; ++i) {
    const auto& pool = benign[1 + static_cast<std::size_t>(rng.uniform_int(
                                      0, static_cast<std::int64_t>(
                                             benign.size()) - 2))];
    add_imports(rec, pool.dll, pick_apis(rng, pool.apis, 2));
  }
  if (mal_apis || benign_netish) {
    const auto& net = hostile_pool()[0];
    add_imports(rec, net.dll, pick_apis(rng, net.apis, 2));
    if (mal_apis) {
      const auto& crypt = hostile_pool()[1];
      add_imports(rec, crypt.dll, pick_apis(rng, crypt.apis, 2));
      if (rng.bernoulli(0.5)) {
        const auto& shell = hostile_pool()[2];
        add_imports(rec, shell.dll,
                    {shell.apis.begin(), shell.apis.end()});
      }
    }
  }

  // exports
  if (is_dll) {
    const int n = static_cast<int>(rng.uniform_int(1, 8));
    for (int i = 0; i < n; ++i)
      rec.exports.push_back("LibEntry" + std::to_string(i + 1));
  }
  rec.general.exports = rec.exports.size();
  rec.general.imports = rec.total_import_names();

  // sections: plain code/data plus one packed section for malicious records
  auto& sec = rec.section;
  const double benign_top = 6.95 + entropy_margin;
  const double text_entropy =
      std::clamp(rng.normal(6.2, 0.3), 4.5, benign_top);
  sec.sections.push_back(make_section(
      rng, ".text", 0.4, rec.general.size, text_entropy,
      {"CNT_CODE", "MEM_EXECUTE", "MEM_READ"}));
  sec.sections.push_back(make_section(
      rng, ".data", 0.15, rec.general.size,
      std::clamp(rng.normal(4.4, 0.4), 2.0, 6.0),
      {"CNT_INITIALIZED_DATA", "MEM_READ", "MEM_WRITE"}));
  sec.sections.push_back(make_section(
      rng, ".rdata", 0.2, rec.general.size,
      std::clamp(rng.normal(5.1, 0.4), 3.0, 6.5),
      {"CNT_INITIALIZED_DATA", "MEM_READ"}));
  if (rec.general.has_resources)
    sec.sections.push_back(make_section(
        rng, ".rsrc", 0.12, rec.general.size,
        std::clamp(rng.normal(4.0, 0.6), 2.0, 6.5),
        {"CNT_INITIALIZED_DATA", "MEM_READ"}));
  if (rec.general.has_relocations)
    sec.sections.push_back(make_section(
        rng, ".reloc", 0.05, rec.general.size,
        std::clamp(rng.normal(3.6, 0.5), 2.0, 5.5),
        {"CNT_INITIALIZED_DATA", "MEM_DISCARDABLE", "MEM_READ"}));
  bool packed = false;
  if (mal) {
    packed = true;
    static const char* kPackedNames[] = {".upx0", ".vmp1", ".enc0", ".xpk"};
    const double packed_entropy = std::clamp(
        rng.normal(7.55, 0.22), 6.95 - entropy_margin, 8.0);
    sec.sections.push_back(make_section(
        rng, kPackedNames[rng.uniform_int(0, 3)], 0.35, rec.general.size,
        packed_entropy, {"CNT_CODE", "MEM_EXECUTE", "MEM_READ", "MEM_WRITE"}));
  }
  sec.entry = packed ? sec.sections.back().name : ".text";

  // data directories, always the 15 named slots
  rec.datadirectories.clear();
  for (int i = 0; i < mfg::ingest::kDataDirectoryCount; ++i) {
    mfg::ingest::DataDirectory d;
    d.name = mfg::pe::kDataDirectoryNames[static_cast<std::size_t>(i)];
    rec.datadirectories.push_back(d);
  }
  auto dir_on = [&](int idx) {
    rec.datadirectories[static_cast<std::size_t>(idx)].size =
        static_cast<std::uint64_t>(rng.uniform_int(64, 8192));
    rec.datadirectories[static_cast<std::size_t>(idx)].virtual_address =
        static_cast<std::uint64_t>(rng.uniform_int(1, 600)) * 4096;
  };
  if (!rec.exports.empty()) dir_on(0);
  dir_on(1);
  if (rec.general.has_resources) dir_on(2);
  if (rec.general.has_signature) dir_on(4);
  if (rec.general.has_relocations) dir_on(5);
  if (rec.general.has_debug) dir_on(6);
  if (rec.general.has_tls) dir_on(9);
  dir_on(12);

  fill_histograms(rec, rng, packed);
  fill_strings(rec, rng, mal, mal_apis || benign_netish);
  return rec;
}

}  // namespace

FeatureRecord synth_record(std::uint64_t seed, int label,
                           mfg::YearMonth month) {
  return synth_impl(seed, label, month, 0.85, 0.05);
}

FeatureRecord synth_record_counts(std::uint64_t seed, int label, int dlls,
                                  int sections) {
  Rng rng(seed);
  FeatureRecord rec;
  rec.sha256 = fake_sha(seed);
  rec.appeared = {2018, 1};
  rec.label = label;

  rec.general.size = 100'000;
  rec.general.vsize = 120'000;

  for (int d = 0; d < dlls; ++d) {
    std::vector<std::string> apis;
    const int n = static_cast<int>(rng.uniform_int(1, 3));
    for (int a = 0; a < n; ++a)
      apis.push_back("Api" + std::to_string(d) + "_" + std::to_string(a));
    rec.imports.emplace_back("lib" + std::to_string(d) + ".dll",
                             std::move(apis));
  }
  rec.general.imports = rec.total_import_names();

  for (int s = 0; s < sections; ++s) {
    SectionEntry e;
    e.name = ".s" + std::to_string(s);
    e.size = 4096;
    e.vsize = 4096;
    e.entropy = 5.0;
    e.props = {"CNT_CODE", "MEM_READ"};
    rec.section.sections.push_back(std::move(e));
  }
  if (sections > 0) rec.section.entry = rec.section.sections.front().name;

  rec.header.coff.machine = "I386";
  rec.header.coff.timestamp = 1'400'000'000;
  rec.header.optional.magic = "PE32";
  rec.header.optional.subsystem = "WINDOWS_CUI";

  rec.datadirectories.clear();
  for (int i = 0; i < mfg::ingest::kDataDirectoryCount; ++i) {
    mfg::ingest::DataDirectory d;
    d.name = mfg::pe::kDataDirectoryNames[static_cast<std::size_t>(i)];
    rec.datadirectories.push_back(d);
  }

  rec.histogram.assign(mfg::ingest::kHistogramBins, 100);
  rec.byteentropy.assign(mfg::ingest::kHistogramBins, 64);

  rec.strings.numstrings = 50;
  rec.strings.avlength = 8.0;
  rec.strings.printables = 400;
  rec.strings.printabledist.assign(mfg::ingest::kPrintableBins, 4);
  rec.strings.entropy = 4.2;
  return rec;
}

std::vector<FeatureRecord> synth_dataset(std::uint64_t seed, std::size_t count,
                                         mfg::YearMonth month) {
  std::vector<FeatureRecord> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t rec_seed =
        mfg::derive_seed(seed, mfg::SeedStream::synthetic, i);
    out.push_back(synth_record(rec_seed, static_cast<int>(i % 2), month));
  }
  return out;
}

std::vector<FeatureRecord> synth_year(std::uint64_t seed,
                                      std::size_t per_month) {
  std::vector<FeatureRecord> out;
  out.reserve(per_month * 12);
  for (int m = 1; m <= 12; ++m) {
    const double api_signal = 0.85 - 0.05 * static_cast<double>(m - 1);
    const double margin = 0.05 + 0.06 * static_cast<double>(m - 1);
    for (std::size_t i = 0; i < per_month; ++i) {
      const std::uint64_t rec_seed = mfg::derive_seed(
          seed, mfg::SeedStream::synthetic,
          static_cast<std::uint64_t>(m) * 1'000'000 + i);
      out.push_back(synth_impl(rec_seed, static_cast<int>(i % 2), {2018, m},
                               api_signal, margin));
    }
  }
  return out;
}

}  // namespace testsupport
