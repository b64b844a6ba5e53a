#pragma once

#include "infill/common.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace infill {

/// Lattice skeleton shared by every graph-based infill strategy.
/// Invariant: edges are unique unordered pairs of distinct node indices.
class EdgeGraph {
 public:
  std::size_t add_node(const Vec3& p, std::optional<double> thickness = std::nullopt);
  /// Adds {a, b}; self-loops and duplicates are ignored. Returns true when inserted.
  bool add_edge(std::size_t a, std::size_t b);

  const std::vector<Vec3>& nodes() const { return nodes_; }
  const std::vector<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }
  const std::vector<std::optional<double>>& thickness() const { return thickness_; }
  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_edges() const { return edges_.size(); }
  bool empty() const { return edges_.empty() && nodes_.empty(); }

  /// Appends all nodes and edges of `other` with re-indexed nodes.
  void append(const EdgeGraph& other);
  /// Drops nodes referenced by no edge (isolated nodes are kept when `keep_isolated`).
  void compact(bool keep_isolated = false);

 private:
  std::vector<Vec3> nodes_;
  std::vector<std::optional<double>> thickness_;
  std::vector<std::pair<std::size_t, std::size_t>> edges_;
  std::vector<std::vector<std::size_t>> adjacency_;
};

/// OBJ with `v x y z` and 1-based `l i j` records.
void write_graph_obj(const EdgeGraph& graph, const std::string& path);
/// Reads `v` and `l` records; polyline records `l a b c ...` become consecutive edges.
EdgeGraph read_graph_obj(const std::string& path);

}  // namespace infill
