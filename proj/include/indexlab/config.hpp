#ifndef INDEXLAB_CONFIG_HPP
#define INDEXLAB_CONFIG_HPP

// JSON experiment configuration. Unknown fields are rejected and every
// diagnostic names the offending field path (or line and column for syntax
// errors).

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "error.hpp"
#include "model.hpp"
#include "quadrature.hpp"

namespace indexlab {

using Json = nlohmann::ordered_json;

enum class ExperimentKind { verify_main, sweep_lambda, sweep_epsilon, converge, sf_demo, identities };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::verify_main: return "verify-main";
    case ExperimentKind::sweep_lambda: return "sweep-lambda";
    case ExperimentKind::sweep_epsilon: return "sweep-epsilon";
    case ExperimentKind::converge: return "converge";
    case ExperimentKind::sf_demo: return "sf-demo";
    case ExperimentKind::identities: return "identities";
  }
  return "?";
}

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::verify_main;
  ModelSpec model = presets::scalar_half_kink();
  LineDiscretization disc{};
  int m = 1;
  std::vector<double> lambda_values{0.5, 1.0, 2.0};
  std::vector<double> epsilon_values{1.0};
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::vector<Index> n_ladder{1024, 2048, 4096};
  std::vector<double> T_ladder{20.0, 40.0, 80.0};
  int workers = 1;
  bool record_timing = false;
  quad::AdaptiveOptions quadrature{};
};

namespace config_detail {

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

class Node {
public:
  Node(const Json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  const Json& json() const { return j_; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError((path_.empty() ? std::string("<root>") : path_) + ": " + msg);
  }

  void require_object() const {
    if (!j_.is_object()) fail("expected an object");
  }

  void allow_only(std::initializer_list<const char*> keys) const {
    require_object();
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!allowed.count(it.key())) throw ConfigError(join(path_, it.key()) + ": unknown field");
  }

  bool has(const char* key) const { return j_.contains(key); }
  Node at(const char* key) const { return {j_.at(key), join(path_, key)}; }

  double as_number() const {
    if (!j_.is_number()) fail("expected a number");
    const double v = j_.get<double>();
    if (!std::isfinite(v)) fail("expected a finite number");
    return v;
  }
  double as_positive() const {
    const double v = as_number();
    if (!(v > 0.0)) fail("must be positive");
    return v;
  }
  std::int64_t as_integer() const {
    if (!j_.is_number_integer()) fail("expected an integer");
    return j_.get<std::int64_t>();
  }
  std::uint64_t as_unsigned() const {
    if (!j_.is_number_integer() || (j_.is_number_integer() && !j_.is_number_unsigned() && j_.get<std::int64_t>() < 0))
      fail("expected a nonnegative integer");
    return j_.get<std::uint64_t>();
  }
  bool as_bool() const {
    if (!j_.is_boolean()) fail("expected true or false");
    return j_.get<bool>();
  }
  std::string as_string() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }
  std::vector<double> as_positive_list() const {
    if (!j_.is_array()) fail("expected an array of numbers");
    if (j_.empty()) fail("must not be empty");
    std::vector<double> out;
    for (std::size_t i = 0; i < j_.size(); ++i)
      out.push_back(Node(j_[i], path_ + "[" + std::to_string(i) + "]").as_positive());
    return out;
  }

private:
  const Json& j_;
  std::string path_;
};

inline ModelSpec preset_by_name(const Node& node) {
  const std::string name = node.as_string();
  if (name == "scalar-half-kink") return presets::scalar_half_kink();
  if (name == "scalar-full-kink") return presets::scalar_full_kink();
  if (name == "scalar-smoothed-step") return presets::scalar_smoothed_step();
  node.fail("unknown preset '" + name + "' (scalar-half-kink, scalar-full-kink, scalar-smoothed-step)");
}

inline Matrix parse_matrix(const Node& node) {
  const Json& j = node.json();
  if (!j.is_array() || j.empty()) node.fail("expected a nonempty array of rows");
  const std::size_t rows = j.size();
  Matrix out(static_cast<Index>(rows), static_cast<Index>(rows));
  for (std::size_t r = 0; r < rows; ++r) {
    Node row(j[r], node.path() + "[" + std::to_string(r) + "]");
    if (!row.json().is_array() || row.json().size() != rows) row.fail("expected a row of length " + std::to_string(rows));
    for (std::size_t c = 0; c < rows; ++c) {
      Node cell(row.json()[c], row.path() + "[" + std::to_string(c) + "]");
      if (cell.json().is_array()) {
        if (cell.json().size() != 2) cell.fail("complex entries are [re, im]");
        out(static_cast<Index>(r), static_cast<Index>(c)) =
            Complex(Node(cell.json()[0], cell.path() + "[0]").as_number(),
                    Node(cell.json()[1], cell.path() + "[1]").as_number());
      } else {
        out(static_cast<Index>(r), static_cast<Index>(c)) = cell.as_number();
      }
    }
  }
  return out;
}

inline InnerGenerator parse_generator(const Node& node, std::uint64_t default_seed) {
  node.require_object();
  if (!node.has("type")) node.fail("missing field 'type'");
  const Node type_node = node.at("type");
  const std::string type = type_node.as_string();
  if (type == "scalar") {
    node.allow_only({"type", "value"});
    return gen::Scalar{node.has("value") ? node.at("value").as_number() : 0.0};
  }
  if (type == "diagonal-linear") {
    node.allow_only({"type", "k_max"});
    if (!node.has("k_max")) node.fail("missing field 'k_max'");
    return gen::DiagonalLinear{static_cast<int>(node.at("k_max").as_integer())};
  }
  if (type == "harmonic") {
    node.allow_only({"type"});
    return gen::Harmonic{};
  }
  if (type == "explicit") {
    node.allow_only({"type", "matrix"});
    if (!node.has("matrix")) node.fail("missing field 'matrix'");
    return gen::Explicit{parse_matrix(node.at("matrix"))};
  }
  if (type == "random-hermitian") {
    node.allow_only({"type", "seed", "scale"});
    return gen::RandomHermitian{node.has("seed") ? node.at("seed").as_unsigned() : default_seed,
                                node.has("scale") ? node.at("scale").as_number() : 1.0};
  }
  if (type == "banded") {
    node.allow_only({"type", "bandwidth", "value", "diagonal"});
    return gen::Banded{node.has("bandwidth") ? static_cast<int>(node.at("bandwidth").as_integer()) : 1,
                       node.has("value") ? node.at("value").as_number() : 1.0,
                       node.has("diagonal") ? node.at("diagonal").as_number() : 0.0};
  }
  if (type == "conjugation-difference") {
    node.allow_only({"type", "seed"});
    return gen::ConjugationDifference{node.has("seed") ? node.at("seed").as_unsigned() : default_seed};
  }
  type_node.fail("unknown generator type '" + type + "'");
}

inline Profile parse_profile(const Node& node, const Profile& base) {
  node.allow_only({"kind", "h_minus", "h_plus", "cutoff", "value"});
  std::string kind = node.has("kind") ? node.at("kind").as_string() : to_string(base.kind());
  const double cutoff = node.has("cutoff") ? node.at("cutoff").as_positive() : base.base_cutoff();
  if (kind == "constant") {
    if (node.has("h_minus") || node.has("h_plus")) node.fail("constant profile takes 'value', not h_minus/h_plus");
    return Profile::constant(node.has("value") ? node.at("value").as_number() : base.h_plus(), cutoff);
  }
  if (node.has("value")) node.at("value").fail("only constant profiles take 'value'");
  const double hm = node.has("h_minus") ? node.at("h_minus").as_number() : base.h_minus();
  const double hp = node.has("h_plus") ? node.at("h_plus").as_number() : base.h_plus();
  if (kind == "tanh-clamped") return Profile::tanh_clamped(hm, hp, cutoff);
  if (kind == "smoothed-step") return Profile::smoothed_step(hm, hp, cutoff);
  node.at("kind").fail("unknown profile kind '" + kind + "' (tanh-clamped, smoothed-step, constant)");
}

inline ModelSpec parse_model(const Node& node, std::uint64_t seed) {
  node.allow_only({"preset", "inner_dim", "d2", "a", "profile", "epsilon"});
  ModelSpec spec = node.has("preset") ? preset_by_name(node.at("preset")) : presets::scalar_half_kink();
  if (node.has("inner_dim")) {
    const auto d = node.at("inner_dim").as_integer();
    if (d < 1) node.at("inner_dim").fail("must be >= 1");
    spec.inner_dim = static_cast<Index>(d);
  }
  if (node.has("d2")) spec.d2 = parse_generator(node.at("d2"), seed);
  if (node.has("a")) spec.a = parse_generator(node.at("a"), seed + 1);
  if (node.has("profile")) spec.profile = parse_profile(node.at("profile"), spec.profile);
  if (node.has("epsilon")) spec.epsilon = node.at("epsilon").as_positive();
  try {
    build_inner_pair(spec);
  } catch (const ConfigError& e) {
    throw ConfigError(node.path() + "." + e.what());
  }
  return spec;
}

inline LineDiscretization parse_disc(const Node& node) {
  node.allow_only({"T", "n", "bc", "safety_factor"});
  LineDiscretization d;
  if (node.has("T")) d.T = node.at("T").as_positive();
  if (node.has("n")) {
    const auto n = node.at("n").as_integer();
    if (n < 16) node.at("n").fail("must be >= 16");
    d.n = static_cast<Index>(n);
  }
  if (node.has("bc") && node.at("bc").as_string() != "dirichlet")
    node.at("bc").fail("only 'dirichlet' is supported");
  if (node.has("safety_factor")) d.safety_factor = node.at("safety_factor").as_positive();
  return d;
}

inline ExperimentKind parse_kind(const Node& node) {
  const std::string s = node.as_string();
  for (auto k : {ExperimentKind::verify_main, ExperimentKind::sweep_lambda, ExperimentKind::sweep_epsilon,
                 ExperimentKind::converge, ExperimentKind::sf_demo, ExperimentKind::identities})
    if (to_string(k) == s) return k;
  node.fail("unknown experiment '" + s +
            "' (verify-main, sweep-lambda, sweep-epsilon, converge, sf-demo, identities)");
}

inline Json generator_json(const InnerGenerator& g) {
  struct V {
    Json operator()(const gen::Scalar& s) const { return {{"type", "scalar"}, {"value", s.value}}; }
    Json operator()(const gen::DiagonalLinear& s) const { return {{"type", "diagonal-linear"}, {"k_max", s.k_max}}; }
    Json operator()(const gen::Harmonic&) const { return {{"type", "harmonic"}}; }
    Json operator()(const gen::Explicit& e) const {
      Json rows = Json::array();
      for (Index r = 0; r < e.matrix.rows(); ++r) {
        Json row = Json::array();
        for (Index c = 0; c < e.matrix.cols(); ++c)
          row.push_back(Json::array({e.matrix(r, c).real(), e.matrix(r, c).imag()}));
        rows.push_back(row);
      }
      return {{"type", "explicit"}, {"matrix", rows}};
    }
    Json operator()(const gen::RandomHermitian& r) const {
      return {{"type", "random-hermitian"}, {"seed", r.seed}, {"scale", r.scale}};
    }
    Json operator()(const gen::Banded& b) const {
      return {{"type", "banded"}, {"bandwidth", b.bandwidth}, {"value", b.value}, {"diagonal", b.diagonal}};
    }
    Json operator()(const gen::ConjugationDifference& c) const {
      return {{"type", "conjugation-difference"}, {"seed", c.seed}};
    }
  };
  return std::visit(V{}, g);
}

} // namespace config_detail

/// Parses a configuration document. Throws ConfigError with a field path or
/// a line/column position.
inline ExperimentConfig parse_config(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    std::ostringstream msg;
    msg << "line " << line << ", column " << column << ": invalid JSON";
    throw ConfigError(msg.str());
  }
  using config_detail::Node;
  const Node node(root, "");
  node.allow_only({"experiment", "model", "disc", "m", "lambda_values", "epsilon_values", "seed",
                   "output_dir", "n_ladder", "T_ladder", "workers", "record_timing", "quadrature"});
  ExperimentConfig c;
  if (!node.has("experiment")) node.fail("missing field 'experiment'");
  c.experiment = config_detail::parse_kind(node.at("experiment"));
  if (node.has("seed")) c.seed = node.at("seed").as_unsigned();
  if (node.has("model")) c.model = config_detail::parse_model(node.at("model"), c.seed);
  if (node.has("disc")) c.disc = config_detail::parse_disc(node.at("disc"));
  if (node.has("m")) {
    const auto m = node.at("m").as_integer();
    if (m < 1) node.at("m").fail("must be >= 1");
    c.m = static_cast<int>(m);
  }
  if (node.has("lambda_values")) c.lambda_values = node.at("lambda_values").as_positive_list();
  c.epsilon_values = {c.model.epsilon};
  if (node.has("epsilon_values")) c.epsilon_values = node.at("epsilon_values").as_positive_list();
  if (node.has("output_dir")) {
    c.output_dir = node.at("output_dir").as_string();
    if (c.output_dir.empty()) node.at("output_dir").fail("must not be empty");
  }
  if (node.has("n_ladder")) {
    const Node ladder = node.at("n_ladder");
    if (!ladder.json().is_array() || ladder.json().size() < 2) ladder.fail("expected at least 2 integers");
    c.n_ladder.clear();
    for (std::size_t i = 0; i < ladder.json().size(); ++i) {
      const Node item(ladder.json()[i], ladder.path() + "[" + std::to_string(i) + "]");
      const auto n = item.as_integer();
      if (n < 16) item.fail("must be >= 16");
      c.n_ladder.push_back(static_cast<Index>(n));
    }
  }
  if (node.has("T_ladder")) {
    c.T_ladder = node.at("T_ladder").as_positive_list();
    if (c.T_ladder.size() < 2) node.at("T_ladder").fail("expected at least 2 values");
  }
  if (node.has("workers")) {
    const auto w = node.at("workers").as_integer();
    if (w < 1) node.at("workers").fail("must be >= 1");
    c.workers = static_cast<int>(w);
  }
  if (node.has("record_timing")) c.record_timing = node.at("record_timing").as_bool();
  if (node.has("quadrature")) {
    const Node q = node.at("quadrature");
    q.allow_only({"abs_tol", "rel_tol", "order", "max_depth"});
    if (q.has("abs_tol")) c.quadrature.abs_tol = q.at("abs_tol").as_positive();
    if (q.has("rel_tol")) c.quadrature.rel_tol = q.at("rel_tol").as_number();
    if (q.has("order")) {
      const auto o = q.at("order").as_integer();
      if (o < 2) q.at("order").fail("must be >= 2");
      c.quadrature.order = static_cast<std::size_t>(o);
    }
    if (q.has("max_depth")) c.quadrature.max_depth = static_cast<int>(q.at("max_depth").as_integer());
  }
  if (c.experiment != ExperimentKind::sf_demo) {
    std::vector<LineDiscretization> discs{c.disc};
    if (c.experiment == ExperimentKind::converge) {
      for (Index n : c.n_ladder) discs.push_back({c.disc.T, n, c.disc.safety_factor});
      for (double T : c.T_ladder)
        discs.push_back({T, static_cast<Index>(std::llround(2.0 * T / c.disc.spacing() - 1.0)), c.disc.safety_factor});
    }
    try {
      for (const auto& d : discs)
        for (double eps : c.epsilon_values) d.validate(c.model.with_epsilon(eps).effective_profile());
    } catch (const ParameterError& e) {
      throw ConfigError(std::string("disc: ") + e.what());
    }
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open configuration file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_config(buffer.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// The fully resolved configuration, defaults included, in canonical form.
inline Json to_json(const ExperimentConfig& c) {
  const Profile& p = c.model.profile;
  Json profile = {{"kind", to_string(p.kind())}, {"cutoff", p.base_cutoff()}};
  if (p.kind() == ProfileKind::constant) {
    profile["value"] = p.h_plus();
  } else {
    profile["h_minus"] = p.h_minus();
    profile["h_plus"] = p.h_plus();
  }
  Json model = {{"inner_dim", c.model.inner_dim},
                {"d2", config_detail::generator_json(c.model.d2)},
                {"a", config_detail::generator_json(c.model.a)},
                {"profile", profile},
                {"epsilon", c.model.epsilon}};
  Json n_ladder = Json::array();
  for (Index n : c.n_ladder) n_ladder.push_back(n);
  return {{"experiment", to_string(c.experiment)},
          {"model", model},
          {"disc", {{"T", c.disc.T}, {"n", c.disc.n}, {"bc", "dirichlet"}, {"safety_factor", c.disc.safety_factor}}},
          {"m", c.m},
          {"lambda_values", c.lambda_values},
          {"epsilon_values", c.epsilon_values},
          {"seed", c.seed},
          {"output_dir", c.output_dir},
          {"n_ladder", n_ladder},
          {"T_ladder", c.T_ladder},
          {"workers", c.workers},
          {"record_timing", c.record_timing},
          {"quadrature",
           {{"abs_tol", c.quadrature.abs_tol},
            {"rel_tol", c.quadrature.rel_tol},
            {"order", c.quadrature.order},
            {"max_depth", c.quadrature.max_depth}}}};
}

/// 64-bit FNV-1a of the canonical configuration, as 16 hex digits.
inline std::string config_digest(const ExperimentConfig& c) {
  const std::string text = to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

} // namespace indexlab

#endif // INDEXLAB_CONFIG_HPP
