#include "infill/graph.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace infill {

std::size_t EdgeGraph::add_node(const Vec3& p, std::optional<double> thickness) {
  nodes_.push_back(p);
  thickness_.push_back(thickness);
  adjacency_.emplace_back();
  return nodes_.size() - 1;
}

bool EdgeGraph::add_edge(std::size_t a, std::size_t b) {
  if (a >= nodes_.size() || b >= nodes_.size()) {
    throw ConfigError("edge (" + std::to_string(a) + "," + std::to_string(b) + ") references a missing node");
  }
  if (a == b) return false;
  auto& adj = adjacency_[a];
  if (std::find(adj.begin(), adj.end(), b) != adj.end()) return false;
  adj.push_back(b);
  adjacency_[b].push_back(a);
  edges_.emplace_back(std::min(a, b), std::max(a, b));
  return true;
}

void EdgeGraph::append(const EdgeGraph& other) {
  const std::size_t base = nodes_.size();
  for (std::size_t i = 0; i < other.nodes_.size(); ++i) add_node(other.nodes_[i], other.thickness_[i]);
  for (const auto& [a, b] : other.edges_) add_edge(base + a, base + b);
}

void EdgeGraph::compact(bool keep_isolated) {
  if (keep_isolated) return;
  std::vector<std::size_t> remap(nodes_.size(), SIZE_MAX);
  EdgeGraph out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!adjacency_[i].empty()) remap[i] = out.add_node(nodes_[i], thickness_[i]);
  }
  for (const auto& [a, b] : edges_) out.add_edge(remap[a], remap[b]);
  *this = std::move(out);
}

void write_graph_obj(const EdgeGraph& graph, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path);
  os << std::setprecision(17);
  for (const auto& p : graph.nodes()) os << "v " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  for (const auto& [a, b] : graph.edges()) os << "l " << a + 1 << ' ' << b + 1 << '\n';
}

EdgeGraph read_graph_obj(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + path);
  EdgeGraph g;
  std::vector<std::pair<long, long>> pending;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw ConfigError(path + ":" + std::to_string(lineno) + ": malformed vertex");
      g.add_node(Vec3(x, y, z));
    } else if (tag == "l") {
      std::vector<long> ids;
      std::string tok;
      while (ls >> tok) ids.push_back(std::stol(tok.substr(0, tok.find('/'))));
      if (ids.size() < 2) throw ConfigError(path + ":" + std::to_string(lineno) + ": line record needs 2 indices");
      for (std::size_t i = 0; i + 1 < ids.size(); ++i) pending.emplace_back(ids[i], ids[i + 1]);
    }
  }
  const long n = static_cast<long>(g.num_nodes());
  for (auto [a, b] : pending) {
    // negative OBJ indices are relative to the end of the vertex list
    if (a < 0) a = n + a + 1;
    if (b < 0) b = n + b + 1;
    if (a < 1 || b < 1 || a > n || b > n) throw ConfigError(path + ": line index out of range");
    g.add_edge(static_cast<std::size_t>(a - 1), static_cast<std::size_t>(b - 1));
  }
  return g;
}

}  // namespace infill
