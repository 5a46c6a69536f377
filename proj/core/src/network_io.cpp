#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <tuple>

#include "aggnash/cournot.hpp"
#include "aggnash/errors.hpp"

namespace aggnash::cournot {

namespace {

// Next line that is neither blank nor a comment; false at end of input.
bool next_line(std::istream& in, std::string& line, int& lineno) {
  while (std::getline(in, line)) {
    ++lineno;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    return true;
  }
  return false;
}

[[noreturn]] void fail(int lineno, const std::string& what) {
  throw InvalidInput("line " + std::to_string(lineno) + ": " + what);
}

// Parses exactly the given fields from the line; trailing tokens are errors.
template <typename... T>
void parse_fields(const std::string& line, int lineno, const char* expected,
                  T&... fields) {
  std::istringstream ss(line);
  if (!(ss >> ... >> fields)) fail(lineno, std::string("expected ") + expected);
  std::string extra;
  if (ss >> extra) fail(lineno, "unexpected token '" + extra + "'");
}

bool segments_cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                    const Eigen::Vector2d& c, const Eigen::Vector2d& d) {
  auto orient = [](const Eigen::Vector2d& p, const Eigen::Vector2d& q,
                   const Eigen::Vector2d& r) {
    double v = (q.x() - p.x()) * (r.y() - p.y()) - (q.y() - p.y()) * (r.x() - p.x());
    return (v > 0) - (v < 0);
  };
  int o1 = orient(a, b, c), o2 = orient(a, b, d);
  int o3 = orient(c, d, a), o4 = orient(c, d, b);
  return o1 * o2 < 0 && o3 * o4 < 0;
}

}  // namespace

RoadGraph read_road_graph(std::istream& in) {
  std::string line;
  int lineno = 0;
  if (!next_line(in, line, lineno)) throw InvalidInput("graph file is empty");
  long vertices = 0, edges = 0;
  parse_fields(line, lineno, "header \"V E\"", vertices, edges);
  if (vertices < 1) fail(lineno, "V must be positive");
  if (edges < 0) fail(lineno, "E must be nonnegative");

  RoadGraph g;
  g.vertices = static_cast<int>(vertices);
  double longest = 0.0;
  for (long e = 0; e < edges; ++e) {
    if (!next_line(in, line, lineno)) {
      throw InvalidInput("graph file ends after " + std::to_string(e) + " of " +
                         std::to_string(edges) + " roads");
    }
    long u = 0, v = 0;
    double len = 0.0;
    parse_fields(line, lineno, "\"u v length\"", u, v, len);
    if (u < 1 || u > vertices || v < 1 || v > vertices) {
      fail(lineno, "vertex out of range 1.." + std::to_string(vertices));
    }
    if (u == v) fail(lineno, "road is a self-loop");
    if (!(len > 0.0) || !std::isfinite(len)) fail(lineno, "length must be positive");
    g.roads.push_back(Road{static_cast<int>(u - 1), static_cast<int>(v - 1), len});
    longest = std::max(longest, len);
  }
  for (Road& r : g.roads) r.length /= longest;

  if (next_line(in, line, lineno)) {
    g.coordinates.assign(g.vertices, Eigen::Vector2d::Constant(
                                         std::numeric_limits<double>::quiet_NaN()));
    for (long k = 0; k < vertices; ++k) {
      if (k > 0 && !next_line(in, line, lineno)) {
        throw InvalidInput("coordinate block lists " + std::to_string(k) + " of " +
                           std::to_string(vertices) + " vertices");
      }
      long v = 0;
      double x = 0.0, y = 0.0;
      parse_fields(line, lineno, "\"v x y\"", v, x, y);
      if (v < 1 || v > vertices) fail(lineno, "vertex out of range");
      if (!std::isnan(g.coordinates[v - 1].x())) fail(lineno, "vertex listed twice");
      g.coordinates[v - 1] = Eigen::Vector2d(x, y);
    }
    if (next_line(in, line, lineno)) fail(lineno, "trailing content");
  }
  return g;
}

RoadGraph load_road_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open graph file " + path.string());
  try {
    return read_road_graph(in);
  } catch (const InvalidInput& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

void write_road_graph(std::ostream& out, const RoadGraph& graph) {
  out << std::setprecision(17);
  out << graph.vertices << ' ' << graph.roads.size() << '\n';
  for (const Road& r : graph.roads) {
    out << r.u + 1 << ' ' << r.v + 1 << ' ' << r.length << '\n';
  }
  for (std::size_t v = 0; v < graph.coordinates.size(); ++v) {
    out << v + 1 << ' ' << graph.coordinates[v].x() << ' '
        << graph.coordinates[v].y() << '\n';
  }
}

std::vector<FirmSpec> read_firms(std::istream& in, int vertices) {
  std::vector<FirmSpec> firms;
  std::string line;
  int lineno = 0;
  while (next_line(in, line, lineno)) {
    long loc = 0;
    double cap = 0.0;
    parse_fields(line, lineno, "\"location capacity\"", loc, cap);
    if (loc < 1 || loc > vertices) {
      fail(lineno, "location out of range 1.." + std::to_string(vertices));
    }
    if (!(cap > 0.0) || !std::isfinite(cap)) fail(lineno, "capacity must be positive");
    FirmSpec f;
    f.location = static_cast<int>(loc - 1);
    f.capacity = cap;
    firms.push_back(std::move(f));
  }
  if (firms.empty()) throw InvalidInput("firm file lists no firms");
  return firms;
}

std::vector<FirmSpec> load_firms(const std::filesystem::path& path, int vertices) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open firm file " + path.string());
  try {
    return read_firms(in, vertices);
  } catch (const InvalidInput& e) {
    throw InvalidInput(path.string() + ": " + e.what());
  }
}

RoadGraph make_surrogate_graph(int vertices, int roads, std::uint64_t seed) {
  if (vertices < 2) throw InvalidInput("surrogate graph needs two vertices");
  if (roads < vertices - 1) {
    throw InvalidInput("a connected graph on " + std::to_string(vertices) +
                       " vertices needs at least " + std::to_string(vertices - 1) +
                       " roads");
  }
  std::mt19937_64 rng(seed);
  RoadGraph g;
  g.vertices = vertices;
  g.coordinates.resize(vertices);
  for (auto& p : g.coordinates) {
    p.x() = uniform01(rng);
    p.y() = uniform01(rng);
  }
  auto dist = [&](int a, int b) { return (g.coordinates[a] - g.coordinates[b]).norm(); };

  // Prim's algorithm on the complete Euclidean graph.
  std::vector<bool> in_tree(vertices, false);
  std::vector<double> best(vertices, std::numeric_limits<double>::infinity());
  std::vector<int> parent(vertices, -1);
  Eigen::MatrixXi used = Eigen::MatrixXi::Zero(vertices, vertices);
  best[0] = 0.0;
  for (int step = 0; step < vertices; ++step) {
    int u = -1;
    for (int v = 0; v < vertices; ++v) {
      if (!in_tree[v] && (u < 0 || best[v] < best[u])) u = v;
    }
    in_tree[u] = true;
    if (parent[u] >= 0) {
      g.roads.push_back(Road{parent[u], u, dist(parent[u], u)});
      used(parent[u], u) = used(u, parent[u]) = 1;
    }
    for (int v = 0; v < vertices; ++v) {
      if (!in_tree[v] && dist(u, v) < best[v]) {
        best[v] = dist(u, v);
        parent[v] = u;
      }
    }
  }

  struct Pair {
    double len;
    int a, b;
  };
  std::vector<Pair> pairs;
  for (int a = 0; a < vertices; ++a) {
    for (int b = a + 1; b < vertices; ++b) {
      if (!used(a, b)) pairs.push_back(Pair{dist(a, b), a, b});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
    return x.len < y.len || (x.len == y.len && std::tie(x.a, x.b) < std::tie(y.a, y.b));
  });
  for (const Pair& p : pairs) {
    if (static_cast<int>(g.roads.size()) >= roads) break;
    bool crosses = false;
    for (const Road& r : g.roads) {
      if (r.u == p.a || r.u == p.b || r.v == p.a || r.v == p.b) continue;
      if (segments_cross(g.coordinates[p.a], g.coordinates[p.b],
                         g.coordinates[r.u], g.coordinates[r.v])) {
        crosses = true;
        break;
      }
    }
    if (!crosses) g.roads.push_back(Road{p.a, p.b, p.len});
  }
  if (static_cast<int>(g.roads.size()) < roads) {
    throw InvalidInput("cannot place " + std::to_string(roads) +
                       " non-crossing roads on " + std::to_string(vertices) +
                       " points");
  }

  double longest = 0.0;
  for (const Road& r : g.roads) longest = std::max(longest, r.length);
  for (Road& r : g.roads) r.length /= longest;
  return g;
}

}  // namespace aggnash::cournot
