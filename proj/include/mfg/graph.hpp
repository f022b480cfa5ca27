#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfg/ingest.hpp"

namespace mfg::graph {

// Major nodes, one per static feature group, in the fixed order used for
// node indexing, type one-hots and flat concatenation.
enum class NodeType : int {
  general = 0,          // G
  header = 1,           // H
  imported = 2,         // I
  exported = 3,         // E
  section = 4,          // Sec
  byte_histogram = 5,   // BH
  byte_entropy = 6,     // BEH
  strings = 7,          // Str
  data_directories = 8, // D
  dll_child = 9,
  section_child = 10,
};

inline constexpr int kMajorCount = 9;
inline constexpr int kTypeCount = 11;
inline constexpr int kBaseWidth = 256;
inline constexpr int kAttrWidth = kBaseWidth + kTypeCount;  // 267

const char* node_type_name(NodeType t);  // "G", "H", ..., "dll", "sec"
std::optional<NodeType> major_from_name(std::string_view name);

using MajorEdge = std::pair<NodeType, NodeType>;

struct SkeletonConfig {
  std::string name = "default";
  std::vector<MajorEdge> edges;  // between major nodes only

  // Throws SchemaError on self loops, duplicates or child node endpoints.
  void validate() const;
  // Whether the edges connect all nine majors. Not enforced: ablation
  // variant 4 deliberately severs {G, I, E} from the rest.
  bool is_connected() const;
  bool has_edge(NodeType a, NodeType b) const;
};

SkeletonConfig default_skeleton();
// Ablation wirings 1..8; variant 1 is the default skeleton.
SkeletonConfig variant_skeleton(int id);

// Key/value text file: `name = ...` plus `edges = [Str-BH, Str-G, ...]`.
SkeletonConfig load_skeleton(const std::string& path);
void save_skeleton(const SkeletonConfig& cfg, const std::string& path);
// Resolves "default", "variant-N", or a file path.
SkeletonConfig resolve_skeleton(const std::string& spec);

struct NodeEncoderConfig {
  int api_buckets = 128;      // dll api names
  int export_buckets = 128;   // export names
  int section_buckets = 64;   // section names and props
  int header_buckets = 64;    // header categoricals
};

// Identifies one node of a record's graph: a major, or the child_index-th
// dll / section child.
struct NodeSpec {
  NodeType type = NodeType::general;
  int child_index = -1;
};

// 256-wide attribute block for one feature group, before the type one-hot.
// Counts and sizes are log1p-scaled, histograms l1-normalized, name sets
// signed-hashed (bucket = fnv1a mod buckets, sign = hash parity).
Eigen::VectorXd encode_major_block(const ingest::FeatureRecord& rec,
                                   NodeType major,
                                   const NodeEncoderConfig& cfg = {});
Eigen::VectorXd encode_dll_block(const std::string& dll,
                                 std::span<const std::string> apis,
                                 const NodeEncoderConfig& cfg = {});
Eigen::VectorXd encode_section_block(const ingest::SectionEntry& sec,
                                     bool is_entry,
                                     const NodeEncoderConfig& cfg = {});

// Full node attribute row: 256-wide block plus the 11-wide type one-hot.
Eigen::VectorXd encode_node(const ingest::FeatureRecord& rec, NodeSpec spec,
                            const NodeEncoderConfig& cfg = {});

struct FeatureGraph {
  std::vector<NodeType> node_types;        // majors first, then children
  Eigen::MatrixXd x;                       // n x 267
  std::vector<std::pair<int, int>> edges;  // undirected, endpoints ordered
  int label = -1;
  std::string sha256;

  int n() const { return static_cast<int>(node_types.size()); }
};

enum class Wiring {
  skeleton,    // fixed edge list from SkeletonConfig
  similarity,  // majors wired by attribute cosine similarity
};

struct BuildOptions {
  SkeletonConfig skeleton = default_skeleton();
  NodeEncoderConfig encoder;
  Wiring wiring = Wiring::skeleton;
  // similarity wiring: connect major pairs at or above this cosine, then
  // keep joining the most similar cross-component pairs until connected
  double similarity_threshold = 0.5;
};

// Nodes: the 9 majors in enum order, one child per imported dll (edged to I)
// in record order, one child per section (edged to Sec) in record order.
FeatureGraph build_graph(const ingest::FeatureRecord& rec,
                         const BuildOptions& opts = {});

// Largest k such that at least `rate` of the graphs have >= k nodes,
// clamped to >= 1. Throws DataError on an empty list or rate outside (0, 1].
int select_k(std::span<const int> node_counts, double pooling_rate);
int select_k(std::span<const FeatureGraph> graphs, double pooling_rate);

// Shipped fallback when no corpus statistics are available.
inline constexpr int kDefaultSortPoolK = 28;

// Graph cache: one JSON object per line with the attribute matrix embedded
// as base64 little-endian float64, row-major.
void write_graphs(const std::string& path,
                  std::span<const FeatureGraph> graphs);
std::vector<FeatureGraph> read_graphs(const std::string& path);

}  // namespace mfg::graph
