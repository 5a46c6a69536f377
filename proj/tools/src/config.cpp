#include "aggnash/cli/config.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace aggnash::cli {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"run", {"seed", "monotonicity_samples"}},
      {"game",
       {"source", "coupled", "graph", "surrogate_vertices", "surrogate_roads",
        "surrogate_seed", "firms", "locations", "capacity", "market_capacity",
        "two_columns", "transport", "comm"}},
      {"solver",
       {"tau", "nu", "stop_tol", "stop_norm", "max_iter", "mode", "record_every",
        "projection_tol", "projection"}},
      {"sweep", {"nu"}},
      {"quality", {"compute", "feasibility_tol", "best_response_tol"}},
      {"output", {"dir"}},
  };
  return keys;
}

class Reader {
 public:
  Reader(const pt::ptree& tree, std::string section)
      : tree_(tree), section_(std::move(section)) {}

  bool has(const std::string& key) const { return tree_.count(key) > 0; }

  std::string text(const std::string& key) const {
    std::string v = tree_.get<std::string>(key);
    auto a = v.find_first_not_of(" \t");
    auto b = v.find_last_not_of(" \t");
    return a == std::string::npos ? std::string() : v.substr(a, b - a + 1);
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError(section_ + "." + key + ": " + what);
  }

  double real(const std::string& key) const {
    std::string v = text(key);
    if (v == "inf" || v == "infinity") return std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    double d = 0.0;
    try {
      d = std::stod(v, &used);
    } catch (const std::exception&) {
      fail(key, "expected a number, got '" + v + "'");
    }
    if (used != v.size() || std::isnan(d)) fail(key, "expected a number, got '" + v + "'");
    return d;
  }

  long integer(const std::string& key) const {
    std::string v = text(key);
    std::size_t used = 0;
    long n = 0;
    try {
      n = std::stol(v, &used);
    } catch (const std::exception&) {
      fail(key, "expected an integer, got '" + v + "'");
    }
    if (used != v.size()) fail(key, "expected an integer, got '" + v + "'");
    return n;
  }

  bool boolean(const std::string& key) const {
    std::string v = text(key);
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    fail(key, "expected true or false, got '" + v + "'");
  }

  std::vector<int> integers(const std::string& key) const {
    std::istringstream ss(text(key));
    std::vector<int> out;
    std::string tok;
    while (ss >> tok) {
      std::size_t used = 0;
      int n = 0;
      try {
        n = std::stoi(tok, &used);
      } catch (const std::exception&) {
        fail(key, "expected integers, got '" + tok + "'");
      }
      if (used != tok.size()) fail(key, "expected integers, got '" + tok + "'");
      out.push_back(n);
    }
    return out;
  }

  std::string choice(const std::string& key,
                     std::initializer_list<const char*> allowed) const {
    std::string v = text(key);
    std::string list;
    for (const char* a : allowed) {
      if (v == a) return v;
      list += list.empty() ? a : std::string(" | ") + a;
    }
    fail(key, "expected " + list + ", got '" + v + "'");
  }

 private:
  const pt::ptree& tree_;
  std::string section_;
};

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::string& value) {
  std::filesystem::path p(value);
  return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("line " + std::to_string(e.line()) + ": " + e.message());
  }

  for (const auto& [section, body] : tree) {
    auto it = schema().find(section);
    if (it == schema().end()) {
      if (body.empty()) throw ConfigError("key '" + section + "' outside any section");
      throw ConfigError("unknown section [" + section + "]");
    }
    for (const auto& [key, value] : body) {
      if (!it->second.count(key)) {
        throw ConfigError(section + "." + key + ": unknown key");
      }
    }
  }

  ExperimentConfig cfg;
  const pt::ptree empty;
  auto section = [&](const char* name) {
    auto child = tree.get_child_optional(name);
    return Reader(child ? *child : empty, name);
  };

  {
    Reader r = section("run");
    if (r.has("seed")) {
      long s = r.integer("seed");
      if (s < 0) r.fail("seed", "must be nonnegative");
      cfg.seed = static_cast<std::uint64_t>(s);
    }
    if (r.has("monotonicity_samples")) {
      long s = r.integer("monotonicity_samples");
      if (s < 1) r.fail("monotonicity_samples", "must be at least 1");
      cfg.monotonicity_samples = static_cast<int>(s);
    }
  }

  {
    Reader r = section("game");
    GameConfig& g = cfg.game;
    if (r.has("source")) {
      g.source = r.choice("source", {"small", "network"}) == "small" ? GameSource::Small
                                                                     : GameSource::Network;
    }
    if (g.source == GameSource::Small) {
      for (const char* k : {"graph", "surrogate_vertices", "surrogate_roads",
                            "surrogate_seed", "firms", "locations", "capacity",
                            "market_capacity", "two_columns", "transport"}) {
        if (r.has(k)) r.fail(k, "only applies to source = network");
      }
      if (r.has("coupled")) g.coupled = r.boolean("coupled");
      g.comm = "small";
      if (r.has("comm")) g.comm = r.text("comm");
    } else {
      if (r.has("coupled")) r.fail("coupled", "only applies to source = small");
      g.comm = "ring";
      if (r.has("comm")) g.comm = r.text("comm");
      if (r.has("graph")) {
        std::string v = r.text("graph");
        if (v != "surrogate") {
          g.graph = resolve(base_dir, v);
          if (!std::filesystem::exists(g.graph)) {
            r.fail("graph", "file " + g.graph.string() + " does not exist");
          }
        }
      }
      if (r.has("surrogate_vertices")) g.surrogate_vertices = static_cast<int>(r.integer("surrogate_vertices"));
      if (r.has("surrogate_roads")) g.surrogate_roads = static_cast<int>(r.integer("surrogate_roads"));
      if (r.has("surrogate_seed")) {
        long s = r.integer("surrogate_seed");
        if (s < 0) r.fail("surrogate_seed", "must be nonnegative");
        g.surrogate_seed = static_cast<std::uint64_t>(s);
      }
      if (g.surrogate_vertices < 2) r.fail("surrogate_vertices", "must be at least 2");
      if (g.surrogate_roads < g.surrogate_vertices - 1) {
        r.fail("surrogate_roads", "must be at least surrogate_vertices - 1");
      }
      if (r.has("firms") && r.has("locations")) {
        r.fail("firms", "give either a firm file or locations, not both");
      }
      if (r.has("firms")) {
        g.firms = resolve(base_dir, r.text("firms"));
        if (!std::filesystem::exists(g.firms)) {
          r.fail("firms", "file " + g.firms.string() + " does not exist");
        }
      } else {
        g.locations = {37, 20, 11, 6, 35};
        if (r.has("locations")) g.locations = r.integers("locations");
        if (g.locations.empty()) r.fail("locations", "needs at least one firm");
        for (int l : g.locations) {
          if (l < 1) r.fail("locations", "locations are 1-based");
        }
      }
      if (r.has("capacity")) g.capacity = r.real("capacity");
      if (!(g.capacity > 0.0) || !std::isfinite(g.capacity)) {
        r.fail("capacity", "must be positive and finite");
      }
      if (r.has("market_capacity")) g.market_capacity = r.real("market_capacity");
      if (!(g.market_capacity > 0.0)) r.fail("market_capacity", "must be positive");
      if (r.has("two_columns")) g.two_columns = r.boolean("two_columns");
      if (r.has("transport")) {
        g.transport = r.choice("transport", {"length", "unit"}) == "length"
                          ? cournot::TransportRule::Length
                          : cournot::TransportRule::Unit;
      }
    }
    if (g.comm != "small" && g.comm != "ring" && g.comm != "uniform") {
      std::filesystem::path p = resolve(base_dir, g.comm);
      if (!std::filesystem::exists(p)) {
        r.fail("comm", "expected small | ring | uniform or an existing matrix file, got '" +
                           g.comm + "'");
      }
      g.comm = p.string();
    }
  }

  {
    Reader r = section("solver");
    SolverConfig& s = cfg.solver;
    if (r.has("tau")) s.tau = r.real("tau");
    if (r.has("nu")) s.nu = static_cast<int>(r.integer("nu"));
    if (r.has("stop_tol")) s.stop_tol = r.real("stop_tol");
    if (r.has("stop_norm")) {
      s.stop_norm = r.choice("stop_norm", {"max", "euclidean"}) == "max" ? StopNorm::Max
                                                                         : StopNorm::Euclidean;
    }
    if (r.has("max_iter")) s.max_iter = r.integer("max_iter");
    if (r.has("mode")) {
      s.mode = r.choice("mode", {"nash", "wardrop"}) == "nash" ? Mode::Nash : Mode::Wardrop;
    }
    if (r.has("record_every")) s.record_every = r.integer("record_every");
    if (r.has("projection_tol")) s.projection_tol = r.real("projection_tol");
    if (r.has("projection")) {
      s.projection_method = r.choice("projection", {"newton", "dykstra"}) == "newton"
                                ? ProjectionMethod::DualNewton
                                : ProjectionMethod::Dykstra;
    }
    try {
      s.validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("solver: ") + e.what());
    }
  }

  {
    Reader r = section("sweep");
    if (r.has("nu")) {
      cfg.sweep = r.integers("nu");
      if (cfg.sweep.empty()) r.fail("nu", "list is empty");
      for (int v : cfg.sweep) {
        if (v < 1) r.fail("nu", "values must be at least 1");
      }
    }
  }

  {
    Reader r = section("quality");
    if (r.has("compute")) cfg.quality.compute = r.boolean("compute");
    if (r.has("feasibility_tol")) cfg.quality.feasibility_tol = r.real("feasibility_tol");
    if (r.has("best_response_tol")) cfg.quality.best_response_tol = r.real("best_response_tol");
    if (!(cfg.quality.feasibility_tol >= 0.0)) r.fail("feasibility_tol", "must be >= 0");
    if (!(cfg.quality.best_response_tol > 0.0)) r.fail("best_response_tol", "must be > 0");
  }

  {
    Reader r = section("output");
    if (r.has("dir")) cfg.output_dir = resolve(base_dir, r.text("dir"));
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return parse_config(in, path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream o;
  o << std::setprecision(17);
  o << "run.seed=" << seed << '\n'
    << "run.monotonicity_samples=" << monotonicity_samples << '\n';
  o << "game.source=" << (game.source == GameSource::Small ? "small" : "network") << '\n';
  if (game.source == GameSource::Small) {
    o << "game.coupled=" << game.coupled << '\n';
  } else {
    o << "game.graph=" << (game.graph.empty() ? "surrogate" : game.graph.string()) << '\n'
      << "game.surrogate=" << game.surrogate_vertices << ',' << game.surrogate_roads << ','
      << game.surrogate_seed << '\n'
      << "game.firms=" << game.firms.string() << '\n'
      << "game.locations=";
    for (int l : game.locations) o << l << ' ';
    o << '\n'
      << "game.capacity=" << game.capacity << '\n'
      << "game.market_capacity=" << game.market_capacity << '\n'
      << "game.two_columns=" << game.two_columns << '\n'
      << "game.transport=" << (game.transport == cournot::TransportRule::Length ? "length" : "unit")
      << '\n';
  }
  o << "game.comm=" << game.comm << '\n';
  o << "solver.tau=" << solver.tau << '\n'
    << "solver.nu=" << solver.nu << '\n'
    << "solver.stop_tol=" << solver.stop_tol << '\n'
    << "solver.stop_norm=" << (solver.stop_norm == StopNorm::Max ? "max" : "euclidean") << '\n'
    << "solver.max_iter=" << solver.max_iter << '\n'
    << "solver.mode=" << (solver.mode == Mode::Nash ? "nash" : "wardrop") << '\n'
    << "solver.record_every=" << solver.record_every << '\n'
    << "solver.projection_tol=" << solver.projection_tol << '\n'
    << "solver.projection="
    << (solver.projection_method == ProjectionMethod::DualNewton ? "newton" : "dykstra") << '\n';
  o << "sweep.nu=";
  for (int v : sweep) o << v << ' ';
  o << '\n';
  o << "quality.compute=" << quality.compute << '\n'
    << "quality.feasibility_tol=" << quality.feasibility_tol << '\n'
    << "quality.best_response_tol=" << quality.best_response_tol << '\n';
  return o.str();
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a(canonical()); }

}  // namespace aggnash::cli
