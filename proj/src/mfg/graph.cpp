#include "mfg/graph.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "mfg/errors.hpp"
#include "mfg/hashing.hpp"
#include "mfg/textio.hpp"

namespace mfg::graph {

namespace {
constexpr std::array<const char*, kTypeCount> kTypeNames = {
    "G", "H", "I", "E", "Sec", "BH", "BEH", "Str", "D", "dll", "sec"};
}

const char* node_type_name(NodeType t) {
  return kTypeNames[static_cast<int>(t)];
}

std::optional<NodeType> major_from_name(std::string_view name) {
  for (int i = 0; i < kMajorCount; ++i)
    if (name == kTypeNames[i]) return static_cast<NodeType>(i);
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Skeletons

namespace {
MajorEdge normalized(NodeType a, NodeType b) {
  return static_cast<int>(a) <= static_cast<int>(b) ? MajorEdge{a, b}
                                                    : MajorEdge{b, a};
}

SkeletonConfig make_skeleton(std::string name,
                             std::initializer_list<MajorEdge> edges) {
  SkeletonConfig cfg;
  cfg.name = std::move(name);
  cfg.edges.assign(edges.begin(), edges.end());
  return cfg;
}

using NT = NodeType;
}  // namespace

void SkeletonConfig::validate() const {
  std::vector<MajorEdge> seen;
  for (const MajorEdge& e : edges) {
    if (static_cast<int>(e.first) >= kMajorCount ||
        static_cast<int>(e.second) >= kMajorCount)
      throw SchemaError("skeleton '" + name +
                        "': edges may only join major nodes");
    if (e.first == e.second)
      throw SchemaError("skeleton '" + name + "': self loop on " +
                        node_type_name(e.first));
    MajorEdge n = normalized(e.first, e.second);
    if (std::find(seen.begin(), seen.end(), n) != seen.end())
      throw SchemaError("skeleton '" + name + "': duplicate edge " +
                        std::string(node_type_name(n.first)) + "-" +
                        node_type_name(n.second));
    seen.push_back(n);
  }
}

bool SkeletonConfig::is_connected() const {
  std::array<int, kMajorCount> parent;
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (const MajorEdge& e : edges)
    parent[find(static_cast<int>(e.first))] = find(static_cast<int>(e.second));
  int root = find(0);
  for (int i = 1; i < kMajorCount; ++i)
    if (find(i) != root) return false;
  return true;
}

bool SkeletonConfig::has_edge(NodeType a, NodeType b) const {
  MajorEdge n = normalized(a, b);
  for (const MajorEdge& e : edges)
    if (normalized(e.first, e.second) == n) return true;
  return false;
}

SkeletonConfig default_skeleton() {
  // Str is the hub; I and E hang off G instead of Str.
  return make_skeleton("default", {
                                      {NT::strings, NT::byte_histogram},
                                      {NT::strings, NT::byte_entropy},
                                      {NT::strings, NT::section},
                                      {NT::strings, NT::data_directories},
                                      {NT::strings, NT::header},
                                      {NT::strings, NT::general},
                                      {NT::general, NT::imported},
                                      {NT::general, NT::exported},
                                  });
}

SkeletonConfig variant_skeleton(int id) {
  switch (id) {
    case 1: {
      SkeletonConfig cfg = default_skeleton();
      cfg.name = "variant-1";
      return cfg;
    }
    case 2:
      // D moved between G and Sec, no D-Str link
      return make_skeleton("variant-2", {
                                            {NT::strings, NT::byte_histogram},
                                            {NT::strings, NT::byte_entropy},
                                            {NT::strings, NT::section},
                                            {NT::strings, NT::header},
                                            {NT::strings, NT::general},
                                            {NT::general, NT::imported},
                                            {NT::general, NT::exported},
                                            {NT::general, NT::data_directories},
                                            {NT::data_directories, NT::section},
                                        });
    case 3:
      // variant 2 without the D-Sec link
      return make_skeleton("variant-3", {
                                            {NT::strings, NT::byte_histogram},
                                            {NT::strings, NT::byte_entropy},
                                            {NT::strings, NT::section},
                                            {NT::strings, NT::header},
                                            {NT::strings, NT::general},
                                            {NT::general, NT::imported},
                                            {NT::general, NT::exported},
                                            {NT::general, NT::data_directories},
                                        });
    case 4:
      // default without G-Str; {G, I, E} ends up severed from the hub
      return make_skeleton("variant-4", {
                                            {NT::strings, NT::byte_histogram},
                                            {NT::strings, NT::byte_entropy},
                                            {NT::strings, NT::section},
                                            {NT::strings, NT::data_directories},
                                            {NT::strings, NT::header},
                                            {NT::general, NT::imported},
                                            {NT::general, NT::exported},
                                        });
    case 5:
      // D attached to H instead of Str
      return make_skeleton("variant-5", {
                                            {NT::strings, NT::byte_histogram},
                                            {NT::strings, NT::byte_entropy},
                                            {NT::strings, NT::section},
                                            {NT::strings, NT::header},
                                            {NT::strings, NT::general},
                                            {NT::general, NT::imported},
                                            {NT::general, NT::exported},
                                            {NT::header, NT::data_directories},
                                        });
    case 6:
      // variant 3 with G additionally tied to H and Sec
      return make_skeleton("variant-6", {
                                            {NT::strings, NT::byte_histogram},
                                            {NT::strings, NT::byte_entropy},
                                            {NT::strings, NT::section},
                                            {NT::strings, NT::header},
                                            {NT::strings, NT::general},
                                            {NT::general, NT::imported},
                                            {NT::general, NT::exported},
                                            {NT::general, NT::data_directories},
                                            {NT::general, NT::header},
                                            {NT::general, NT::section},
                                        });
    case 7:
      // H as the intermediary carrying G and Sec
      return make_skeleton("variant-7", {
                                            {NT::strings, NT::byte_histogram},
                                            {NT::strings, NT::byte_entropy},
                                            {NT::strings, NT::section},
                                            {NT::strings, NT::data_directories},
                                            {NT::strings, NT::header},
                                            {NT::header, NT::general},
                                            {NT::header, NT::section},
                                            {NT::general, NT::imported},
                                            {NT::general, NT::exported},
                                        });
    case 8: {
      // dense ring: the seven ring nodes end up pairwise connected
      SkeletonConfig cfg;
      cfg.name = "variant-8";
      const std::array<NT, 7> ring = {NT::general,        NT::section,
                                      NT::header,         NT::strings,
                                      NT::byte_histogram, NT::byte_entropy,
                                      NT::data_directories};
      for (std::size_t i = 0; i < ring.size(); ++i)
        for (std::size_t j = i + 1; j < ring.size(); ++j)
          cfg.edges.push_back(normalized(ring[i], ring[j]));
      cfg.edges.push_back({NT::general, NT::imported});
      cfg.edges.push_back({NT::general, NT::exported});
      return cfg;
    }
    default:
      throw DataError("unknown skeleton variant " + std::to_string(id));
  }
}

SkeletonConfig load_skeleton(const std::string& path) {
  KvFile kv = KvFile::load(path);
  SkeletonConfig cfg;
  cfg.name = kv.get("name", "custom");
  for (const std::string& item : kv.get_list("edges")) {
    std::size_t dash = item.find('-');
    if (dash == std::string::npos)
      throw SchemaError(path + ": edge '" + item + "' is not NAME-NAME");
    auto a = major_from_name(trim(item.substr(0, dash)));
    auto b = major_from_name(trim(item.substr(dash + 1)));
    if (!a || !b)
      throw SchemaError(path + ": edge '" + item +
                        "' names an unknown major node");
    cfg.edges.emplace_back(*a, *b);
  }
  cfg.validate();
  return cfg;
}

void save_skeleton(const SkeletonConfig& cfg, const std::string& path) {
  KvFile kv;
  kv.set("name", cfg.name);
  std::vector<std::string> items;
  for (const MajorEdge& e : cfg.edges)
    items.push_back(std::string(node_type_name(e.first)) + "-" +
                    node_type_name(e.second));
  kv.set_list("edges", items);
  kv.save(path);
}

SkeletonConfig resolve_skeleton(const std::string& spec) {
  if (spec.empty() || spec == "default") return default_skeleton();
  if (spec.rfind("variant-", 0) == 0) {
    int id = 0;
    try {
      id = std::stoi(spec.substr(8));
    } catch (...) {
      throw SchemaError("bad skeleton spec: " + spec);
    }
    return variant_skeleton(id);
  }
  return load_skeleton(spec);
}

// ---------------------------------------------------------------------------
// Node encoders
//
// Fixed block layouts (offsets into the 256-wide attribute block). Single
// name-set blocks hash the raw name; blocks mixing several categorical
// fields prefix each name with its field to keep them apart.

namespace {

double lg(std::uint64_t v) { return std::log1p(static_cast<double>(v)); }
double lg(double v) { return std::log1p(std::max(0.0, v)); }

void hash_into(Eigen::VectorXd& block, int offset, int buckets,
               std::string_view name) {
  std::uint64_t h = fnv1a64(name);
  int bucket = static_cast<int>(h % static_cast<std::uint64_t>(buckets));
  double sign = (std::popcount(h) & 1) ? -1.0 : 1.0;
  block[offset + bucket] += sign;
}

void l1_fill(Eigen::VectorXd& block, int offset,
             std::span<const std::uint64_t> counts) {
  double total = 0;
  for (std::uint64_t c : counts) total += static_cast<double>(c);
  if (total <= 0) return;
  for (std::size_t i = 0; i < counts.size(); ++i)
    block[offset + static_cast<int>(i)] =
        static_cast<double>(counts[i]) / total;
}

}  // namespace

Eigen::VectorXd encode_major_block(const ingest::FeatureRecord& rec,
                                   NodeType major,
                                   const NodeEncoderConfig& cfg) {
  Eigen::VectorXd block = Eigen::VectorXd::Zero(kBaseWidth);
  switch (major) {
    case NodeType::general: {
      const ingest::GeneralFeatures& g = rec.general;
      block[0] = lg(g.size);
      block[1] = lg(g.vsize);
      block[2] = g.has_debug;
      block[3] = lg(g.exports);
      block[4] = lg(g.imports);
      block[5] = g.has_relocations;
      block[6] = g.has_resources;
      block[7] = g.has_signature;
      block[8] = g.has_tls;
      block[9] = lg(g.symbols);
      break;
    }
    case NodeType::header: {
      const ingest::CoffHeader& c = rec.header.coff;
      const ingest::OptionalHeader& o = rec.header.optional;
      block[0] = lg(c.timestamp);
      block[1] = static_cast<double>(o.major_image_version);
      block[2] = static_cast<double>(o.minor_image_version);
      block[3] = static_cast<double>(o.major_linker_version);
      block[4] = static_cast<double>(o.minor_linker_version);
      block[5] = static_cast<double>(o.major_operating_system_version);
      block[6] = static_cast<double>(o.minor_operating_system_version);
      block[7] = static_cast<double>(o.major_subsystem_version);
      block[8] = static_cast<double>(o.minor_subsystem_version);
      block[9] = lg(o.sizeof_code);
      block[10] = lg(o.sizeof_headers);
      block[11] = lg(o.sizeof_heap_commit);
      int at = 12, n = cfg.header_buckets;
      if (!c.machine.empty()) hash_into(block, at, n, "machine:" + c.machine);
      if (!o.subsystem.empty())
        hash_into(block, at, n, "subsystem:" + o.subsystem);
      if (!o.magic.empty()) hash_into(block, at, n, "magic:" + o.magic);
      for (const std::string& f : c.characteristics)
        hash_into(block, at, n, "coff:" + f);
      for (const std::string& f : o.dll_characteristics)
        hash_into(block, at, n, "dll:" + f);
      break;
    }
    case NodeType::imported: {
      block[0] = lg(static_cast<std::uint64_t>(rec.imports.size()));
      block[1] = lg(rec.total_import_names());
      for (const auto& [dll, apis] : rec.imports)
        hash_into(block, 2, cfg.api_buckets, dll);
      break;
    }
    case NodeType::exported: {
      block[0] = lg(static_cast<std::uint64_t>(rec.exports.size()));
      for (const std::string& name : rec.exports)
        hash_into(block, 1, cfg.export_buckets, name);
      break;
    }
    case NodeType::section: {
      const ingest::SectionInfo& si = rec.section;
      std::uint64_t total_size = 0, total_vsize = 0;
      double entropy_sum = 0, entropy_max = 0;
      for (const ingest::SectionEntry& s : si.sections) {
        total_size += s.size;
        total_vsize += s.vsize;
        entropy_sum += s.entropy;
        entropy_max = std::max(entropy_max, s.entropy);
      }
      block[0] = lg(static_cast<std::uint64_t>(si.sections.size()));
      block[1] = lg(total_size);
      block[2] = lg(total_vsize);
      block[3] = si.sections.empty()
                     ? 0.0
                     : entropy_sum / static_cast<double>(si.sections.size());
      block[4] = entropy_max;
      int at = 5, n = cfg.section_buckets;
      if (!si.entry.empty()) hash_into(block, at, n, "entry:" + si.entry);
      for (const ingest::SectionEntry& s : si.sections) {
        hash_into(block, at, n, "name:" + s.name);
        for (const std::string& p : s.props) hash_into(block, at, n, "prop:" + p);
      }
      break;
    }
    case NodeType::byte_histogram:
      l1_fill(block, 0, rec.histogram);
      break;
    case NodeType::byte_entropy:
      l1_fill(block, 0, rec.byteentropy);
      break;
    case NodeType::strings: {
      const ingest::StringFeatures& s = rec.strings;
      block[0] = lg(s.numstrings);
      block[1] = lg(s.avlength);
      block[2] = lg(s.printables);
      block[3] = s.entropy;
      block[4] = lg(s.paths);
      block[5] = lg(s.urls);
      block[6] = lg(s.registry);
      block[7] = lg(s.MZ);
      l1_fill(block, 8, s.printabledist);
      break;
    }
    case NodeType::data_directories: {
      for (int i = 0;
           i < std::min<int>(ingest::kDataDirectoryCount,
                             static_cast<int>(rec.datadirectories.size()));
           ++i) {
        block[2 * i] = lg(rec.datadirectories[i].size);
        block[2 * i + 1] = lg(rec.datadirectories[i].virtual_address);
      }
      break;
    }
    default:
      throw DataError("encode_major_block: not a major node type");
  }
  return block;
}

Eigen::VectorXd encode_dll_block(const std::string& dll,
                                 std::span<const std::string> apis,
                                 const NodeEncoderConfig& cfg) {
  Eigen::VectorXd block = Eigen::VectorXd::Zero(kBaseWidth);
  block[0] = lg(static_cast<std::uint64_t>(apis.size()));
  for (const std::string& api : apis)
    hash_into(block, 1, cfg.api_buckets, api);
  hash_into(block, 1 + cfg.api_buckets, cfg.header_buckets, dll);
  return block;
}

Eigen::VectorXd encode_section_block(const ingest::SectionEntry& sec,
                                     bool is_entry,
                                     const NodeEncoderConfig& cfg) {
  Eigen::VectorXd block = Eigen::VectorXd::Zero(kBaseWidth);
  block[0] = lg(sec.size);
  block[1] = lg(sec.vsize);
  block[2] = sec.entropy;
  block[3] = is_entry ? 1.0 : 0.0;
  int at = 4, n = cfg.section_buckets;
  hash_into(block, at, n, "name:" + sec.name);
  for (const std::string& p : sec.props) hash_into(block, at, n, "prop:" + p);
  return block;
}

Eigen::VectorXd encode_node(const ingest::FeatureRecord& rec, NodeSpec spec,
                            const NodeEncoderConfig& cfg) {
  Eigen::VectorXd block;
  switch (spec.type) {
    case NodeType::dll_child: {
      if (spec.child_index < 0 ||
          spec.child_index >= static_cast<int>(rec.imports.size()))
        throw DataError("encode_node: dll child index out of range");
      const auto& [dll, apis] = rec.imports[spec.child_index];
      block = encode_dll_block(dll, apis, cfg);
      break;
    }
    case NodeType::section_child: {
      if (spec.child_index < 0 ||
          spec.child_index >= static_cast<int>(rec.section.sections.size()))
        throw DataError("encode_node: section child index out of range");
      const ingest::SectionEntry& s = rec.section.sections[spec.child_index];
      block = encode_section_block(s, s.name == rec.section.entry, cfg);
      break;
    }
    default:
      block = encode_major_block(rec, spec.type, cfg);
      break;
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(kAttrWidth);
  out.head(kBaseWidth) = block;
  out[kBaseWidth + static_cast<int>(spec.type)] = 1.0;
  return out;
}

// ---------------------------------------------------------------------------
// Graph assembly

namespace {

std::vector<std::pair<int, int>> similarity_edges(const Eigen::MatrixXd& x,
                                                  double threshold) {
  // cosine over the 256-wide attribute blocks of the nine majors
  struct Pair {
    int a, b;
    double cos;
  };
  std::vector<Pair> pairs;
  for (int i = 0; i < kMajorCount; ++i) {
    for (int j = i + 1; j < kMajorCount; ++j) {
      Eigen::VectorXd u = x.row(i).head(kBaseWidth);
      Eigen::VectorXd v = x.row(j).head(kBaseWidth);
      double nu = u.norm(), nv = v.norm();
      double cos = (nu > 0 && nv > 0) ? u.dot(v) / (nu * nv) : 0.0;
      pairs.push_back({i, j, cos});
    }
  }

  std::array<int, kMajorCount> parent;
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };

  std::vector<std::pair<int, int>> edges;
  for (const Pair& p : pairs) {
    if (p.cos >= threshold) {
      edges.emplace_back(p.a, p.b);
      parent[find(p.a)] = find(p.b);
    }
  }
  // join remaining components greedily by best similarity; ties keep the
  // earlier pair so the wiring stays deterministic
  std::vector<Pair> rest;
  for (const Pair& p : pairs)
    if (p.cos < threshold) rest.push_back(p);
  std::stable_sort(rest.begin(), rest.end(),
                   [](const Pair& a, const Pair& b) { return a.cos > b.cos; });
  for (const Pair& p : rest) {
    if (find(p.a) == find(p.b)) continue;
    parent[find(p.a)] = find(p.b);
    edges.emplace_back(p.a, p.b);
  }
  return edges;
}

}  // namespace

FeatureGraph build_graph(const ingest::FeatureRecord& rec,
                         const BuildOptions& opts) {
  const int n_dlls = static_cast<int>(rec.imports.size());
  const int n_secs = static_cast<int>(rec.section.sections.size());
  const int n = kMajorCount + n_dlls + n_secs;

  FeatureGraph g;
  g.label = rec.label;
  g.sha256 = rec.sha256;
  g.node_types.reserve(n);
  g.x.resize(n, kAttrWidth);

  for (int i = 0; i < kMajorCount; ++i) {
    NodeType t = static_cast<NodeType>(i);
    g.node_types.push_back(t);
    g.x.row(i) = encode_node(rec, {t, -1}, opts.encoder).transpose();
  }
  for (int i = 0; i < n_dlls; ++i) {
    g.node_types.push_back(NodeType::dll_child);
    g.x.row(kMajorCount + i) =
        encode_node(rec, {NodeType::dll_child, i}, opts.encoder).transpose();
  }
  for (int i = 0; i < n_secs; ++i) {
    g.node_types.push_back(NodeType::section_child);
    g.x.row(kMajorCount + n_dlls + i) =
        encode_node(rec, {NodeType::section_child, i}, opts.encoder)
            .transpose();
  }

  if (opts.wiring == Wiring::skeleton) {
    opts.skeleton.validate();
    for (const MajorEdge& e : opts.skeleton.edges) {
      int a = static_cast<int>(e.first), b = static_cast<int>(e.second);
      g.edges.emplace_back(std::min(a, b), std::max(a, b));
    }
  } else {
    g.edges = similarity_edges(g.x, opts.similarity_threshold);
  }

  const int imported_idx = static_cast<int>(NodeType::imported);
  const int section_idx = static_cast<int>(NodeType::section);
  for (int i = 0; i < n_dlls; ++i)
    g.edges.emplace_back(imported_idx, kMajorCount + i);
  for (int i = 0; i < n_secs; ++i)
    g.edges.emplace_back(section_idx, kMajorCount + n_dlls + i);

  return g;
}

int select_k(std::span<const int> node_counts, double pooling_rate) {
  if (node_counts.empty()) throw DataError("select_k: no graphs");
  if (!(pooling_rate > 0.0 && pooling_rate <= 1.0))
    throw DataError("select_k: pooling rate must be in (0, 1]");
  std::vector<int> sorted(node_counts.begin(), node_counts.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  // smallest m with m >= rate * M; k is then the m-th largest count, the
  // largest k for which count(n >= k) >= rate * M still holds
  double need = pooling_rate * static_cast<double>(sorted.size());
  auto m = static_cast<std::size_t>(std::ceil(need));
  m = std::clamp<std::size_t>(m, 1, sorted.size());
  return std::max(1, sorted[m - 1]);
}

int select_k(std::span<const FeatureGraph> graphs, double pooling_rate) {
  std::vector<int> counts;
  counts.reserve(graphs.size());
  for (const FeatureGraph& g : graphs) counts.push_back(g.n());
  return select_k(counts, pooling_rate);
}

// ---------------------------------------------------------------------------
// Cache io

namespace {
using Json = nlohmann::ordered_json;
}

void write_graphs(const std::string& path,
                  std::span<const FeatureGraph> graphs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write file: " + path);
  for (const FeatureGraph& g : graphs) {
    Json j = Json::object();
    j["sha256"] = g.sha256;
    j["label"] = g.label;
    j["n"] = g.n();
    j["c"] = kAttrWidth;
    Json types = Json::array();
    for (NodeType t : g.node_types) types.push_back(static_cast<int>(t));
    j["types"] = std::move(types);
    Json edges = Json::array();
    for (auto [a, b] : g.edges) edges.push_back(Json::array({a, b}));
    j["edges"] = std::move(edges);

    std::vector<std::uint8_t> raw(static_cast<std::size_t>(g.n()) *
                                  kAttrWidth * sizeof(double));
    std::size_t at = 0;
    for (int r = 0; r < g.n(); ++r) {
      for (int c = 0; c < kAttrWidth; ++c) {
        double v = g.x(r, c);
        std::memcpy(raw.data() + at, &v, sizeof(double));
        at += sizeof(double);
      }
    }
    j["x"] = base64_encode(raw);
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

std::vector<FeatureGraph> read_graphs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read file: " + path);
  std::vector<FeatureGraph> graphs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    auto fail = [&](const std::string& why) {
      throw SchemaError(path + ": line " + std::to_string(line_no) + ": " +
                        why);
    };
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) fail("invalid JSON");
    FeatureGraph g;
    try {
      g.sha256 = j.value("sha256", std::string());
      g.label = j.value("label", -1);
      int n = j.at("n").get<int>();
      int c = j.at("c").get<int>();
      if (c != kAttrWidth)
        fail("attribute width " + std::to_string(c) + ", expected " +
             std::to_string(kAttrWidth));
      for (const Json& t : j.at("types"))
        g.node_types.push_back(static_cast<NodeType>(t.get<int>()));
      if (static_cast<int>(g.node_types.size()) != n)
        fail("type list does not match n");
      for (const Json& e : j.at("edges")) {
        int a = e.at(0).get<int>(), b = e.at(1).get<int>();
        if (a < 0 || b < 0 || a >= n || b >= n) fail("edge out of range");
        g.edges.emplace_back(a, b);
      }
      std::vector<std::uint8_t> raw =
          base64_decode(j.at("x").get<std::string>());
      if (raw.size() != static_cast<std::size_t>(n) * kAttrWidth * 8)
        fail("attribute payload size mismatch");
      g.x.resize(n, kAttrWidth);
      std::size_t at = 0;
      for (int r = 0; r < n; ++r) {
        for (int col = 0; col < kAttrWidth; ++col) {
          double v;
          std::memcpy(&v, raw.data() + at, sizeof(double));
          at += sizeof(double);
          g.x(r, col) = v;
        }
      }
    } catch (const Json::exception& e) {
      fail(e.what());
    }
    graphs.push_back(std::move(g));
  }
  return graphs;
}

}  // namespace mfg::graph
