#include "weakl/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "weakl/data.hpp"
#include "weakl/evaluation.hpp"
#include "weakl/hierarchy.hpp"
#include "weakl/model_io.hpp"
#include "weakl/rng.hpp"
#include "weakl/shape_models.hpp"
#include "weakl/tuning.hpp"

namespace weakl {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;
using clock_type = std::chrono::steady_clock;

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    out += c;
    if (c == '"') out += '"';
  }
  out += '"';
  return out;
}

std::string sanitize_filename(const std::string& s) {
  std::string out;
  for (const char c : s)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out.empty() ? "effect" : out;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read '" + path + "'");
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + std::string(e.what()));
  }
}

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (item.key() == a) {
        known = true;
        break;
      }
    if (!known) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

const json& require(const json& obj, const std::string& where, const char* key) {
  if (!obj.is_object() || !obj.contains(key))
    throw ConfigError(where + " is missing '" + std::string(key) + "'");
  return obj.at(key);
}

std::string get_string(const json& v, const std::string& where) {
  if (!v.is_string()) throw ConfigError(where + " must be a string");
  return v.get<std::string>();
}

double get_number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where + " must be a number");
  return v.get<double>();
}

long long get_integer(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ConfigError(where + " must be an integer");
  return v.get<long long>();
}

bool get_bool(const json& v, const std::string& where) {
  if (!v.is_boolean()) throw ConfigError(where + " must be true or false");
  return v.get<bool>();
}

std::vector<double> get_number_list(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + " must be an array of numbers");
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) out.push_back(get_number(x, where));
  return out;
}

std::vector<std::string> get_string_list(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + " must be an array of strings");
  std::vector<std::string> out;
  out.reserve(v.size());
  for (const auto& x : v) out.push_back(get_string(x, where));
  return out;
}

Eigen::VectorXd broadcast_vector(const json& v, std::size_t count, const std::string& where) {
  if (v.is_number()) return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(count),
                                                      v.get<double>());
  if (v.is_array()) {
    if (v.size() != count)
      throw ConfigError(where + " must have " + std::to_string(count) + " entries, got " +
                        std::to_string(v.size()));
    Eigen::VectorXd out(static_cast<Eigen::Index>(count));
    for (std::size_t i = 0; i < count; ++i)
      out(static_cast<Eigen::Index>(i)) = get_number(v[i], where);
    return out;
  }
  throw ConfigError(where + " must be a number or an array of numbers");
}

std::vector<int> broadcast_ints(const json& v, std::size_t count, const std::string& where) {
  std::vector<int> out(count);
  if (v.is_number_integer()) {
    std::fill(out.begin(), out.end(), static_cast<int>(v.get<long long>()));
    return out;
  }
  if (v.is_array()) {
    if (v.size() != count)
      throw ConfigError(where + " must have " + std::to_string(count) + " entries, got " +
                        std::to_string(v.size()));
    for (std::size_t i = 0; i < count; ++i)
      out[i] = static_cast<int>(get_integer(v[i], where));
    return out;
  }
  throw ConfigError(where + " must be an integer or an array of integers");
}

Eigen::VectorXd numeric_column(const Frame& frame, const std::string& name,
                               const std::string& origin) {
  const Eigen::Index col = frame.find(name);
  if (col < 0) throw DataError(origin + ": no column named '" + name + "'");
  Eigen::VectorXd out(frame.rows());
  for (Eigen::Index r = 0; r < frame.rows(); ++r) {
    const std::string& cell = frame.columns[static_cast<std::size_t>(col)][static_cast<std::size_t>(r)];
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(v))
      throw DataError(origin + ": column '" + name + "' row " + std::to_string(r) +
                      " is not a finite number ('" + cell + "')");
    out(r) = v;
  }
  return out;
}

double mse_of(const Eigen::VectorXd& pred, const Eigen::VectorXd& actual) {
  return (pred - actual).squaredNorm() / static_cast<double>(actual.size());
}

Eigen::Map<const Eigen::VectorXd> flat(const Eigen::MatrixXd& m) {
  return {m.data(), m.size()};
}

Dataset concat_rows(const Dataset& a, const Dataset& b) {
  Dataset out;
  out.prep = a.prep;
  out.time.resize(a.n() + b.n());
  out.time << a.time, b.time;
  out.time_raw.resize(a.n() + b.n());
  out.time_raw << a.time_raw, b.time_raw;
  out.X.resize(a.n() + b.n(), a.d1());
  out.X << a.X, b.X;
  out.Y.resize(a.n() + b.n(), a.d2());
  out.Y << a.Y, b.Y;
  return out;
}

// ---------------------------------------------------------------------------
// Config plans
// ---------------------------------------------------------------------------

struct EffectPlan {
  FeatureMapSpec spec;
  double lambda = 1.0;
};

struct ModelPlan {
  std::string family;
  std::vector<EffectPlan> effects;  // shared effect list
  std::map<std::string, std::vector<EffectPlan>> node_effects;
  // additive-group
  std::string group_key;
  // online
  std::string base_model_path;
  bool has_corrections = false;
  bool include_h0 = true;
  int corr_s = 2;
  json corr_m;
  json corr_lambda;
  bool has_rolling = false;
  RollingPolicy rolling;
  // combination
  std::vector<std::string> expert_columns;
  int combo_m = 0;
  int combo_s = 2;
  json combo_lambda;
  // hierarchy
  std::vector<HierNodeRow> hier_rows;
  std::optional<double> lambda_all, gamma_all;
  std::vector<double> lambda_explicit, gamma_explicit;
  std::map<std::string, double> level_lambda, level_gamma;
  std::vector<std::string> transfer_nodes;
  std::vector<double> transfer_alpha;
  double transfer_strength = 1.0;
  bool has_transfer = false;

  bool is_hier() const { return family.rfind("hier-", 0) == 0; }
};

struct DatasetPlan {
  std::string path;
  DataSchema schema;
  SplitSpec split;
  bool split_given = false;
};

struct ExperimentPlan {
  json raw;
  std::uint64_t seed = 1;
  int workers = 1;
  std::optional<ModelPlan> model;
  std::optional<DatasetPlan> data;
  std::optional<Hierarchy> hierarchy;
  GridSpec grid;
  bool has_grid = false;
  BootstrapConfig bootstrap;
  ToyBenchmarkConfig toy;
  std::string compare_file1, compare_file2;
  double compare_alpha = 0.1;
  bool has_compare = false;
  std::string model_file;
};

Eigen::Index feature_index(const DataSchema& schema, const std::string& name) {
  for (std::size_t i = 0; i < schema.features.size(); ++i)
    if (schema.features[i] == name) return static_cast<Eigen::Index>(i);
  throw ConfigError("unknown feature column '" + name + "'");
}

EffectPlan parse_effect(const json& e, const DataSchema& schema) {
  check_keys(e, "effect", {"type", "input", "inputs", "m", "s", "lambda", "label"});
  EffectPlan plan;
  const std::string type = get_string(require(e, "effect", "type"), "effect.type");

  std::vector<std::string> inputs;
  if (e.contains("input")) inputs.push_back(get_string(e.at("input"), "effect.input"));
  if (e.contains("inputs"))
    for (const auto& name : get_string_list(e.at("inputs"), "effect.inputs"))
      inputs.push_back(name);
  if (inputs.empty()) throw ConfigError("effect needs 'input' or 'inputs'");
  for (const auto& name : inputs) plan.spec.inputs.push_back(feature_index(schema, name));

  if (type == "linear") {
    plan.spec.kind = MapKind::Linear;
    if (inputs.size() != 1) throw ConfigError("linear effects take exactly one input");
  } else if (type == "fourier") {
    plan.spec.kind = MapKind::Fourier;
    plan.spec.m = static_cast<int>(get_integer(require(e, "fourier effect", "m"), "effect.m"));
    if (plan.spec.m < 0) throw ConfigError("effect.m must be >= 0");
  } else if (type == "categorical") {
    plan.spec.kind = MapKind::Categorical;
    if (inputs.size() != 1) throw ConfigError("categorical effects take exactly one input");
  } else {
    throw ConfigError("unknown effect type '" + type +
                      "' (expected linear, fourier, or categorical)");
  }

  for (std::size_t a = 0; a < inputs.size(); ++a) {
    const ColumnKind kind = schema.kinds[static_cast<std::size_t>(plan.spec.inputs[a])];
    if (plan.spec.kind == MapKind::Categorical && kind != ColumnKind::Categorical)
      throw ConfigError("categorical effect on numeric column '" + inputs[a] + "'");
    if (plan.spec.kind != MapKind::Categorical && kind == ColumnKind::Categorical)
      throw ConfigError("effect type '" + type + "' cannot read categorical column '" +
                        inputs[a] + "'");
  }

  if (e.contains("s")) {
    plan.spec.s = static_cast<int>(get_integer(e.at("s"), "effect.s"));
    if (plan.spec.s < 1) throw ConfigError("effect.s must be >= 1");
  }
  plan.lambda = get_number(require(e, "effect", "lambda"), "effect.lambda");
  if (plan.lambda < 0) throw ConfigError("effect.lambda must be >= 0");

  if (e.contains("label")) plan.spec.label = get_string(e.at("label"), "effect.label");
  if (plan.spec.label.empty()) {
    for (std::size_t a = 0; a < inputs.size(); ++a)
      plan.spec.label += (a ? "+" : "") + inputs[a];
  }
  return plan;
}

std::vector<EffectPlan> parse_effect_list(const json& list, const DataSchema& schema,
                                          const std::string& where) {
  if (!list.is_array() || list.empty())
    throw ConfigError(where + " must be a non-empty array of effects");
  std::vector<EffectPlan> out;
  out.reserve(list.size());
  std::set<std::string> labels;
  for (const auto& e : list) {
    out.push_back(parse_effect(e, schema));
    if (!labels.insert(out.back().spec.label).second)
      throw ConfigError(where + ": duplicate effect label '" + out.back().spec.label + "'");
  }
  return out;
}

std::vector<HierNodeRow> parse_hier_rows(const json& v) {
  std::vector<HierNodeRow> rows;
  if (v.is_string()) {
    const Frame frame = read_csv(v.get<std::string>());
    const Eigen::Index node = frame.find("node");
    const Eigen::Index parent = frame.find("parent");
    const Eigen::Index level = frame.find("level");
    if (node < 0 || parent < 0)
      throw DataError("hierarchy file needs 'node' and 'parent' columns");
    for (Eigen::Index r = 0; r < frame.rows(); ++r) {
      HierNodeRow row;
      row.node = frame.columns[static_cast<std::size_t>(node)][static_cast<std::size_t>(r)];
      row.parent = frame.columns[static_cast<std::size_t>(parent)][static_cast<std::size_t>(r)];
      if (level >= 0)
        row.level = frame.columns[static_cast<std::size_t>(level)][static_cast<std::size_t>(r)];
      rows.push_back(std::move(row));
    }
    return rows;
  }
  if (!v.is_array()) throw ConfigError("model.hierarchy must be a file path or an array");
  for (const auto& e : v) {
    check_keys(e, "hierarchy row", {"node", "parent", "level"});
    HierNodeRow row;
    row.node = get_string(require(e, "hierarchy row", "node"), "hierarchy.node");
    if (e.contains("parent")) row.parent = get_string(e.at("parent"), "hierarchy.parent");
    if (e.contains("level")) row.level = get_string(e.at("level"), "hierarchy.level");
    rows.push_back(std::move(row));
  }
  return rows;
}

void parse_weight_forms(const json& v, const std::string& where, std::optional<double>& all,
                        std::vector<double>& explicit_list,
                        std::map<std::string, double>& per_level) {
  if (v.is_number()) {
    all = v.get<double>();
  } else if (v.is_array()) {
    explicit_list = get_number_list(v, where);
  } else if (v.is_object()) {
    for (const auto& item : v.items())
      per_level[item.key()] = get_number(item.value(), where);
  } else {
    throw ConfigError(where + " must be a number, an array, or a {level: value} object");
  }
}

const std::set<std::string> kFamilies{"additive", "additive-group", "online",
                                      "combination", "hier-bu", "hier-g", "hier-t"};

SplitSpec parse_split(const json& s) {
  check_keys(s, "dataset.split", {"train", "validation", "test", "horizon"});
  SplitSpec spec;
  auto range = [](const json& v, const std::string& where) {
    if (!v.is_array() || v.size() != 2)
      throw ConfigError(where + " must be [begin, end] row indices");
    const Eigen::Index b = static_cast<Eigen::Index>(get_integer(v[0], where));
    const Eigen::Index e = static_cast<Eigen::Index>(get_integer(v[1], where));
    if (b < 0 || e < b) throw ConfigError(where + " must satisfy 0 <= begin <= end");
    return std::make_pair(b, e);
  };
  const auto train = range(require(s, "dataset.split", "train"), "split.train");
  spec.train_begin = train.first;
  spec.train_end = train.second;
  if (s.contains("validation")) {
    const auto val = range(s.at("validation"), "split.validation");
    spec.val_begin = val.first;
    spec.val_end = val.second;
  }
  if (s.contains("test")) {
    const auto test = range(s.at("test"), "split.test");
    spec.test_begin = test.first;
    spec.test_end = test.second;
  }
  if (s.contains("horizon")) {
    const auto h = get_number_list(s.at("horizon"), "split.horizon");
    if (h.size() != 2 || h[0] >= h[1])
      throw ConfigError("split.horizon must be [lo, hi] with lo < hi");
    spec.horizon = std::make_pair(h[0], h[1]);
  }
  return spec;
}

ExperimentPlan parse_plan(const json& cfg, const RunOptions& opts) {
  check_keys(cfg, "config",
             {"dataset", "model", "grid", "bootstrap", "toy", "compare", "model_file", "seed",
              "workers"});
  ExperimentPlan plan;
  plan.raw = cfg;

  if (cfg.contains("seed")) {
    const long long s = get_integer(cfg.at("seed"), "seed");
    if (s < 0) throw ConfigError("seed must be >= 0");
    plan.seed = static_cast<std::uint64_t>(s);
  }
  if (cfg.contains("workers")) {
    plan.workers = static_cast<int>(get_integer(cfg.at("workers"), "workers"));
    if (plan.workers < 1) throw ConfigError("workers must be >= 1");
  }
  if (opts.seed) plan.seed = *opts.seed;
  if (opts.workers) {
    if (*opts.workers < 1) throw ConfigError("workers must be >= 1");
    plan.workers = *opts.workers;
  }

  // --- model section (hierarchy first: it fixes the target columns) ---
  if (cfg.contains("model")) {
    const json& m = cfg.at("model");
    check_keys(m, "model",
               {"family", "effects", "node_effects", "group_key", "base_model", "corrections",
                "rolling", "experts", "combination", "hierarchy", "lambda_weights",
                "gamma_weights", "transfer"});
    ModelPlan model;
    model.family = get_string(require(m, "model", "family"), "model.family");
    if (!kFamilies.count(model.family))
      throw ConfigError("unknown model family '" + model.family + "'");

    auto forbid = [&](const char* key, const std::string& families) {
      if (m.contains(key))
        throw ConfigError("model." + std::string(key) + " is only valid for " + families);
    };
    if (model.family != "additive-group") forbid("group_key", "family additive-group");
    if (model.family != "online") {
      forbid("base_model", "family online");
      forbid("corrections", "family online");
      forbid("rolling", "family online");
    }
    if (model.family != "combination") {
      forbid("experts", "family combination");
      forbid("combination", "family combination");
    }
    if (!model.is_hier()) {
      forbid("hierarchy", "hierarchical families");
      forbid("node_effects", "hierarchical families");
      forbid("lambda_weights", "hierarchical families");
      forbid("gamma_weights", "hierarchical families");
      forbid("transfer", "hierarchical families");
    }

    if (model.is_hier()) {
      model.hier_rows = parse_hier_rows(require(m, "model", "hierarchy"));
      plan.hierarchy = build_summation_matrix(model.hier_rows);
    }
    if (model.family == "additive-group")
      model.group_key = get_string(require(m, "model", "group_key"), "model.group_key");
    if (m.contains("base_model"))
      model.base_model_path = get_string(m.at("base_model"), "model.base_model");
    if (m.contains("corrections")) {
      const json& c = m.at("corrections");
      check_keys(c, "model.corrections", {"include_h0", "m", "lambda", "s"});
      model.has_corrections = true;
      if (c.contains("include_h0"))
        model.include_h0 = get_bool(c.at("include_h0"), "corrections.include_h0");
      if (c.contains("s")) model.corr_s = static_cast<int>(get_integer(c.at("s"), "corrections.s"));
      model.corr_m = require(c, "model.corrections", "m");
      model.corr_lambda = require(c, "model.corrections", "lambda");
    }
    if (m.contains("rolling")) {
      const json& r = m.at("rolling");
      check_keys(r, "model.rolling", {"window", "stride"});
      model.has_rolling = true;
      if (r.contains("window"))
        model.rolling.window = static_cast<Eigen::Index>(get_integer(r.at("window"), "rolling.window"));
      if (r.contains("stride"))
        model.rolling.stride = static_cast<Eigen::Index>(get_integer(r.at("stride"), "rolling.stride"));
    }
    if (model.family == "combination") {
      model.expert_columns = get_string_list(require(m, "model", "experts"), "model.experts");
      if (model.expert_columns.empty()) throw ConfigError("model.experts must not be empty");
      if (m.contains("combination")) {
        const json& c = m.at("combination");
        check_keys(c, "model.combination", {"m", "s", "lambda"});
        if (c.contains("m"))
          model.combo_m = static_cast<int>(get_integer(c.at("m"), "combination.m"));
        if (c.contains("s"))
          model.combo_s = static_cast<int>(get_integer(c.at("s"), "combination.s"));
        if (c.contains("lambda")) model.combo_lambda = c.at("lambda");
      }
      if (model.combo_m < 0) throw ConfigError("combination.m must be >= 0");
    }
    if (m.contains("lambda_weights"))
      parse_weight_forms(m.at("lambda_weights"), "model.lambda_weights", model.lambda_all,
                         model.lambda_explicit, model.level_lambda);
    if (m.contains("gamma_weights")) {
      if (model.family != "hier-g")
        throw ConfigError("model.gamma_weights is only valid for family hier-g");
      parse_weight_forms(m.at("gamma_weights"), "model.gamma_weights", model.gamma_all,
                         model.gamma_explicit, model.level_gamma);
    }
    if (m.contains("transfer")) {
      if (model.family != "hier-t")
        throw ConfigError("model.transfer is only valid for family hier-t");
      const json& t = m.at("transfer");
      check_keys(t, "model.transfer", {"nodes", "alpha", "strength"});
      model.has_transfer = true;
      model.transfer_nodes = get_string_list(require(t, "model.transfer", "nodes"),
                                             "transfer.nodes");
      if (t.contains("alpha"))
        model.transfer_alpha = get_number_list(t.at("alpha"), "transfer.alpha");
      if (t.contains("strength"))
        model.transfer_strength = get_number(t.at("strength"), "transfer.strength");
      if (model.transfer_strength < 0) throw ConfigError("transfer.strength must be >= 0");
    }
    plan.model = std::move(model);
  }

  // --- dataset section ---
  if (cfg.contains("dataset")) {
    const json& d = cfg.at("dataset");
    check_keys(d, "dataset", {"path", "timestamp", "target", "targets", "features", "split"});
    DatasetPlan data;
    data.path = get_string(require(d, "dataset", "path"), "dataset.path");
    data.schema.timestamp = get_string(require(d, "dataset", "timestamp"), "dataset.timestamp");

    if (d.contains("features")) {
      const json& feats = d.at("features");
      if (!feats.is_array()) throw ConfigError("dataset.features must be an array");
      for (const auto& f : feats) {
        check_keys(f, "feature", {"name", "kind"});
        data.schema.features.push_back(
            get_string(require(f, "feature", "name"), "feature.name"));
        const std::string kind = get_string(require(f, "feature", "kind"), "feature.kind");
        if (kind == "numeric") {
          data.schema.kinds.push_back(ColumnKind::Numeric);
        } else if (kind == "categorical") {
          data.schema.kinds.push_back(ColumnKind::Categorical);
        } else {
          throw ConfigError("feature '" + data.schema.features.back() + "': unknown kind '" +
                            kind + "' (expected numeric or categorical)");
        }
      }
    }

    if (plan.hierarchy) {
      // Hierarchical targets are the node series, canonical order.
      data.schema.targets = plan.hierarchy->labels;
      if (d.contains("targets")) {
        const auto given = get_string_list(d.at("targets"), "dataset.targets");
        if (std::set<std::string>(given.begin(), given.end()) !=
            std::set<std::string>(data.schema.targets.begin(), data.schema.targets.end()))
          throw ConfigError("dataset.targets must match the hierarchy node labels");
      }
      if (d.contains("target"))
        throw ConfigError("hierarchical datasets name their targets through the hierarchy");
    } else if (d.contains("target")) {
      if (d.contains("targets"))
        throw ConfigError("give either dataset.target or dataset.targets, not both");
      data.schema.targets = {get_string(d.at("target"), "dataset.target")};
    } else if (d.contains("targets")) {
      data.schema.targets = get_string_list(d.at("targets"), "dataset.targets");
    }

    if (d.contains("split")) {
      data.split = parse_split(d.at("split"));
      data.split_given = true;
    }
    plan.data = std::move(data);
  }

  // effects need the schema, so they parse after the dataset section
  if (plan.model) {
    const json& m = cfg.at("model");
    const bool needs_effects =
        plan.model->family == "additive" || plan.model->family == "additive-group" ||
        (plan.model->family == "online" && plan.model->base_model_path.empty()) ||
        plan.model->is_hier();
    if (needs_effects && !plan.data)
      throw ConfigError("model family '" + plan.model->family + "' needs a dataset section");
    if (m.contains("effects")) {
      if (!needs_effects)
        throw ConfigError("model.effects is not used by family '" + plan.model->family + "'" +
                          (plan.model->family == "online" ? " with a base_model file" : ""));
      plan.model->effects = parse_effect_list(m.at("effects"), plan.data->schema, "model.effects");
    }
    if (m.contains("node_effects")) {
      const json& ne = m.at("node_effects");
      if (!ne.is_object()) throw ConfigError("model.node_effects must be {node: [effects]}");
      for (const auto& item : ne.items()) {
        if (plan.hierarchy->find(item.key()) < 0)
          throw ConfigError("node_effects names unknown node '" + item.key() + "'");
        plan.model->node_effects[item.key()] =
            parse_effect_list(item.value(), plan.data->schema, "node_effects." + item.key());
      }
    }
    if (needs_effects && plan.model->effects.empty() && plan.model->node_effects.empty())
      throw ConfigError("model family '" + plan.model->family + "' needs effects");
  }

  if (cfg.contains("grid")) {
    const json& g = cfg.at("grid");
    check_keys(g, "grid", {"axes"});
    const json& axes = require(g, "grid", "axes");
    if (!axes.is_array()) throw ConfigError("grid.axes must be an array");
    for (const auto& a : axes) {
      check_keys(a, "grid axis", {"name", "values"});
      GridAxis axis;
      axis.name = get_string(require(a, "grid axis", "name"), "axis.name");
      axis.values = get_number_list(require(a, "grid axis", "values"), "axis.values");
      plan.grid.axes.push_back(std::move(axis));
    }
    plan.has_grid = true;
  }

  if (cfg.contains("bootstrap")) {
    const json& b = cfg.at("bootstrap");
    check_keys(b, "bootstrap",
               {"scheme", "block_length", "mean_block_length", "resamples", "ci_level"});
    if (b.contains("scheme")) {
      const std::string scheme = get_string(b.at("scheme"), "bootstrap.scheme");
      if (scheme == "fixed") {
        plan.bootstrap.scheme = BootstrapScheme::FixedBlock;
      } else if (scheme == "stationary") {
        plan.bootstrap.scheme = BootstrapScheme::Stationary;
      } else {
        throw ConfigError("bootstrap.scheme must be 'fixed' or 'stationary'");
      }
    }
    if (b.contains("block_length"))
      plan.bootstrap.block_length =
          static_cast<Eigen::Index>(get_integer(b.at("block_length"), "bootstrap.block_length"));
    if (b.contains("mean_block_length"))
      plan.bootstrap.mean_block_length = static_cast<Eigen::Index>(
          get_integer(b.at("mean_block_length"), "bootstrap.mean_block_length"));
    if (b.contains("resamples"))
      plan.bootstrap.resamples =
          static_cast<int>(get_integer(b.at("resamples"), "bootstrap.resamples"));
    if (b.contains("ci_level"))
      plan.bootstrap.ci_level = get_number(b.at("ci_level"), "bootstrap.ci_level");
  }

  if (cfg.contains("toy")) {
    const json& t = cfg.at("toy");
    check_keys(t, "toy", {"d", "n_train", "n_test", "sigma2", "runs", "methods"});
    if (t.contains("d")) plan.toy.d = static_cast<int>(get_integer(t.at("d"), "toy.d"));
    if (t.contains("n_train"))
      plan.toy.n_train = static_cast<Eigen::Index>(get_integer(t.at("n_train"), "toy.n_train"));
    if (t.contains("n_test"))
      plan.toy.n_test = static_cast<Eigen::Index>(get_integer(t.at("n_test"), "toy.n_test"));
    if (t.contains("sigma2")) plan.toy.sigma2 = get_number_list(t.at("sigma2"), "toy.sigma2");
    if (t.contains("runs")) plan.toy.runs = static_cast<int>(get_integer(t.at("runs"), "toy.runs"));
    if (t.contains("methods")) plan.toy.methods = get_string_list(t.at("methods"), "toy.methods");
  }

  if (cfg.contains("compare")) {
    const json& c = cfg.at("compare");
    check_keys(c, "compare", {"file1", "file2", "alpha"});
    plan.compare_file1 = get_string(require(c, "compare", "file1"), "compare.file1");
    plan.compare_file2 = get_string(require(c, "compare", "file2"), "compare.file2");
    if (c.contains("alpha")) plan.compare_alpha = get_number(c.at("alpha"), "compare.alpha");
    plan.has_compare = true;
  }

  if (cfg.contains("model_file"))
    plan.model_file = get_string(cfg.at("model_file"), "model_file");

  return plan;
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

AdditiveConfig make_additive_config(const std::vector<EffectPlan>& plans) {
  if (plans.empty()) throw ConfigError("model needs at least one effect");
  AdditiveConfig cfg;
  cfg.lambdas.resize(static_cast<Eigen::Index>(plans.size()));
  for (std::size_t i = 0; i < plans.size(); ++i) {
    cfg.effects.push_back(plans[i].spec);
    cfg.lambdas(static_cast<Eigen::Index>(i)) = plans[i].lambda;
  }
  return cfg;
}

OnlineConfig make_online_config(const ModelPlan& model, std::size_t n_effects) {
  if (!model.has_corrections)
    throw ConfigError("family online needs a model.corrections section");
  OnlineConfig cfg;
  cfg.include_h0 = model.include_h0;
  cfg.s = model.corr_s;
  const std::size_t expected = n_effects + (cfg.include_h0 ? 1 : 0);
  cfg.m = broadcast_ints(model.corr_m, expected, "corrections.m");
  cfg.lambdas = broadcast_vector(model.corr_lambda, expected, "corrections.lambda");
  return cfg;
}

Eigen::VectorXd resolve_node_weights(const std::optional<double>& all,
                                     const std::vector<double>& explicit_list,
                                     const std::map<std::string, double>& per_level,
                                     const Hierarchy& h, const std::string& what) {
  if (all) {
    if (*all < 0) throw ConfigError(what + " must be >= 0");
    return Eigen::VectorXd::Constant(h.l1(), *all);
  }
  if (!explicit_list.empty()) {
    if (static_cast<Eigen::Index>(explicit_list.size()) != h.l1())
      throw ConfigError(what + " needs one entry per node (" + std::to_string(h.l1()) + ")");
    return Eigen::Map<const Eigen::VectorXd>(explicit_list.data(),
                                             static_cast<Eigen::Index>(explicit_list.size()));
  }
  if (per_level.empty()) return {};
  for (const auto& [level, value] : per_level) {
    if (value < 0) throw ConfigError(what + " must be >= 0");
    if (std::find(h.levels.begin(), h.levels.end(), level) == h.levels.end())
      throw ConfigError(what + ": no hierarchy level named '" + level + "'");
  }
  Eigen::VectorXd w = Eigen::VectorXd::Ones(h.l1());
  for (Eigen::Index i = 0; i < h.l1(); ++i) {
    const auto it = per_level.find(h.levels[static_cast<std::size_t>(i)]);
    if (it != per_level.end()) w(i) = it->second;
  }
  return w;
}

HierConfig make_hier_config(const ModelPlan& model, const Hierarchy& h) {
  HierConfig cfg;
  const Eigen::Index count = model.family == "hier-g" ? h.l1() : h.l2();
  for (Eigen::Index i = 0; i < count; ++i) {
    const std::string& label = h.labels[static_cast<std::size_t>(i)];
    const auto it = model.node_effects.find(label);
    const std::vector<EffectPlan>* plans =
        it != model.node_effects.end() ? &it->second : &model.effects;
    if (plans->empty())
      throw ConfigError("no effects configured for hierarchy node '" + label + "'");
    const AdditiveConfig node = make_additive_config(*plans);
    cfg.node_effects.push_back(node.effects);
    cfg.node_lambdas.push_back(node.lambdas);
  }
  cfg.lambda_weights = resolve_node_weights(model.lambda_all, model.lambda_explicit,
                                            model.level_lambda, h, "lambda_weights");
  if (model.family == "hier-g")
    cfg.gamma_weights = resolve_node_weights(model.gamma_all, model.gamma_explicit,
                                             model.level_gamma, h, "gamma_weights");
  if (model.family == "hier-t") {
    if (!model.has_transfer) throw ConfigError("family hier-t needs a model.transfer section");
    for (const auto& label : model.transfer_nodes) {
      const Eigen::Index idx = h.find(label);
      if (idx < 0 || idx >= h.l2())
        throw ConfigError("transfer node '" + label + "' is not a bottom node");
      cfg.transfer_nodes.push_back(idx);
    }
    if (!model.transfer_alpha.empty()) {
      if (model.transfer_alpha.size() != model.transfer_nodes.size())
        throw ConfigError("transfer.alpha needs one entry per transfer node");
      cfg.transfer_alpha = Eigen::Map<const Eigen::VectorXd>(
          model.transfer_alpha.data(), static_cast<Eigen::Index>(model.transfer_alpha.size()));
    }
    cfg.transfer_strength = model.transfer_strength;
  }
  return cfg;
}

HierModel fit_hier(const ModelPlan& model, const Dataset& train, const Hierarchy& h) {
  const HierConfig cfg = make_hier_config(model, h);
  if (model.family == "hier-bu") return fit_weakl_bu(train, h, cfg);
  if (model.family == "hier-g") return fit_weakl_g(train, h, cfg);
  return fit_weakl_t(train, h, cfg);
}

// ---------------------------------------------------------------------------
// Grid axes
// ---------------------------------------------------------------------------

std::vector<std::string> split_axis_name(const std::string& name) {
  std::vector<std::string> parts;
  std::string part;
  for (const char c : name) {
    if (c == ':') {
      parts.push_back(part);
      part.clear();
    } else {
      part += c;
    }
  }
  parts.push_back(part);
  return parts;
}

int integral_axis_value(const std::string& name, double value) {
  const double rounded = std::floor(value + 0.5);
  if (value != rounded || rounded < 0)
    throw ConfigError("grid axis '" + name + "' needs non-negative integer values");
  return static_cast<int>(rounded);
}

void apply_axis(ModelPlan& model, const std::string& name, double value) {
  const std::vector<std::string> parts = split_axis_name(name);

  if (parts.size() == 3 && parts[0] == "effect") {
    const std::string& label = parts[1];
    bool found = false;
    auto apply = [&](std::vector<EffectPlan>& list) {
      for (auto& e : list) {
        if (e.spec.label != label) continue;
        found = true;
        if (parts[2] == "lambda") {
          if (value < 0) throw ConfigError("grid axis '" + name + "' needs values >= 0");
          e.lambda = value;
        } else if (parts[2] == "m") {
          if (e.spec.kind != MapKind::Fourier)
            throw ConfigError("grid axis '" + name + "': effect '" + label +
                              "' has no truncation order");
          e.spec.m = integral_axis_value(name, value);
        } else {
          throw ConfigError("grid axis '" + name + "': unknown property '" + parts[2] + "'");
        }
      }
    };
    apply(model.effects);
    for (auto& [node, list] : model.node_effects) apply(list);
    if (!found) throw ConfigError("grid axis '" + name + "': no effect labeled '" + label + "'");
    return;
  }

  if (parts.size() == 3 && parts[0] == "level") {
    if (!model.is_hier())
      throw ConfigError("grid axis '" + name + "' needs a hierarchical family");
    if (value < 0) throw ConfigError("grid axis '" + name + "' needs values >= 0");
    if (parts[2] == "lambda") {
      if (model.lambda_all || !model.lambda_explicit.empty())
        throw ConfigError("grid axis '" + name +
                          "' conflicts with an explicit lambda_weights setting");
      model.level_lambda[parts[1]] = value;
    } else if (parts[2] == "gamma") {
      if (model.family != "hier-g")
        throw ConfigError("grid axis '" + name + "' needs family hier-g");
      if (model.gamma_all || !model.gamma_explicit.empty())
        throw ConfigError("grid axis '" + name +
                          "' conflicts with an explicit gamma_weights setting");
      model.level_gamma[parts[1]] = value;
    } else {
      throw ConfigError("grid axis '" + name + "': unknown property '" + parts[2] + "'");
    }
    return;
  }

  if (name == "transfer:strength") {
    if (model.family != "hier-t" || !model.has_transfer)
      throw ConfigError("grid axis 'transfer:strength' needs family hier-t with a transfer set");
    if (value < 0) throw ConfigError("grid axis '" + name + "' needs values >= 0");
    model.transfer_strength = value;
    return;
  }

  throw ConfigError("unknown grid axis '" + name +
                    "' (expected effect:<label>:lambda, effect:<label>:m, "
                    "level:<level>:lambda, level:<level>:gamma, or transfer:strength)");
}

// ---------------------------------------------------------------------------
// Output writers
// ---------------------------------------------------------------------------

struct RunContext {
  fs::path dir;
  std::vector<std::string> outputs;
  clock_type::time_point started = clock_type::now();

  fs::path file(const std::string& name) {
    outputs.push_back(name);
    return dir / name;
  }
};

void write_predictions_csv(RunContext& ctx, const std::string& name,
                           const Eigen::VectorXd& time_raw, const Eigen::VectorXd* actual,
                           const Eigen::VectorXd& predictions) {
  std::ofstream out = open_out(ctx.file(name));
  out << (actual ? "timestamp,actual,prediction\n" : "timestamp,prediction\n");
  for (Eigen::Index i = 0; i < predictions.size(); ++i) {
    out << fmt(time_raw(i)) << ',';
    if (actual) out << fmt((*actual)(i)) << ',';
    out << fmt(predictions(i)) << '\n';
  }
}

void write_node_predictions_csv(RunContext& ctx, const std::string& name,
                                const Eigen::VectorXd& time_raw,
                                const std::vector<std::string>& nodes,
                                const Eigen::MatrixXd* actual, const Eigen::MatrixXd& pred) {
  std::ofstream out = open_out(ctx.file(name));
  out << (actual ? "timestamp,node,actual,prediction\n" : "timestamp,node,prediction\n");
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    for (Eigen::Index node = 0; node < pred.cols(); ++node) {
      out << fmt(time_raw(i)) << ',' << csv_field(nodes[static_cast<std::size_t>(node)]) << ',';
      if (actual) out << fmt((*actual)(i, node)) << ',';
      out << fmt(pred(i, node)) << '\n';
    }
  }
}

void write_metrics_csv(RunContext& ctx, const Eigen::VectorXd& predictions,
                       const Eigen::VectorXd& actual, BootstrapConfig bootstrap,
                       std::uint64_t seed, int workers, std::ostream& log) {
  std::ofstream out = open_out(ctx.file("metrics.csv"));
  out << "metric,value,stddev,ci_lo,ci_hi\n";
  const Metric all[] = {Metric::Mse, Metric::Rmse, Metric::Mae, Metric::Mape};
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string name = metric_name(all[i]);
    bootstrap.seed = derive_seed(seed, i, 0xb007);
    bootstrap.workers = workers;
    try {
      const BootstrapSummary s = bootstrap_metric(all[i], predictions, actual, bootstrap);
      out << name << ',' << fmt(s.point) << ',' << fmt(s.stddev) << ',' << fmt(s.ci_lo) << ','
          << fmt(s.ci_hi) << '\n';
      log << "  " << name << " " << s.point << " +- " << s.stddev << "\n";
    } catch (const DataError&) {
      out << name << ",nan,nan,nan,nan\n";
      log << "  " << name << " undefined on this series\n";
    }
  }
}

void write_effect_curves(RunContext& ctx, const AdditiveModel& model) {
  fs::create_directories(ctx.dir / "effects");
  for (std::size_t l = 0; l < model.effects.size(); ++l) {
    const FeatureMapSpec& spec = model.effects[l];
    if (spec.inputs.size() != 1) continue;
    const std::string name = "effects/" + sanitize_filename(spec.label) + ".csv";
    std::ofstream out = open_out(ctx.file(name));
    if (spec.kind == MapKind::Categorical) {
      const auto& map = model.prep->categories[static_cast<std::size_t>(spec.inputs[0])];
      Eigen::VectorXd grid(map.cardinality());
      for (int c = 0; c < map.cardinality(); ++c) grid(c) = c + 1;
      const Eigen::VectorXd curve = model.effect_curve(l, grid);
      out << "category,effect\n";
      for (int c = 0; c < map.cardinality(); ++c)
        out << csv_field(map.labels[static_cast<std::size_t>(c)]) << ',' << fmt(curve(c)) << '\n';
    } else {
      const Rescaler& r = model.prep->rescalers[static_cast<std::size_t>(spec.inputs[0])];
      const int points = r.hi == r.lo ? 1 : 101;
      Eigen::VectorXd grid(points);
      for (int i = 0; i < points; ++i)
        grid(i) = points == 1 ? r.lo : r.lo + (r.hi - r.lo) * i / (points - 1);
      const Eigen::VectorXd curve = model.effect_curve(l, grid);
      out << "value,effect\n";
      for (int i = 0; i < points; ++i) out << fmt(grid(i)) << ',' << fmt(curve(i)) << '\n';
    }
  }
}

void write_resolved_config(RunContext& ctx, const ExperimentPlan& plan) {
  json resolved = plan.raw;
  resolved["seed"] = plan.seed;
  resolved["workers"] = plan.workers;
  std::ofstream out = open_out(ctx.file("resolved_config.json"));
  out << resolved.dump(2) << '\n';
}

void write_manifest(RunContext& ctx, const std::string& command, const RunOptions& opts,
                    const ExperimentPlan& plan) {
  const double seconds =
      std::chrono::duration<double>(clock_type::now() - ctx.started).count();
  json manifest{{"command", command},
                {"library", WEAKL_VERSION},
                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                              std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION)},
                {"config", opts.config_path},
                {"seed", plan.seed},
                {"workers", plan.workers},
                {"seconds", seconds},
                {"outputs", ctx.outputs}};
  manifest["outputs"].push_back("run_manifest.json");
  std::ofstream out = open_out(ctx.dir / "run_manifest.json");
  out << manifest.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Shared ingestion
// ---------------------------------------------------------------------------

struct Ingested {
  Frame frame;
  SplitResult split;
};

Ingested ingest(const DatasetPlan& plan) {
  Ingested out;
  out.frame = read_csv(plan.path);
  SplitSpec spec = plan.split;
  if (!plan.split_given) spec.train_end = out.frame.rows();
  out.split = split(out.frame, plan.schema, spec);
  return out;
}

/// Test split if present, else validation, else the training window itself.
std::pair<const Dataset*, std::string> eval_split(const SplitResult& s) {
  if (s.test.n() > 0) return {&s.test, "test"};
  if (s.validation.n() > 0) return {&s.validation, "validation"};
  return {&s.train, "train"};
}

RunContext make_context(const RunOptions& opts) {
  if (opts.out_dir.empty()) throw ConfigError("an output directory is required");
  RunContext ctx;
  ctx.dir = opts.out_dir;
  std::error_code ec;
  fs::create_directories(ctx.dir, ec);
  if (ec) throw DataError("cannot create output directory '" + opts.out_dir + "'");
  return ctx;
}

struct ForecastFile {
  Eigen::VectorXd time, actual, prediction;
};

ForecastFile read_forecast_file(const std::string& path) {
  const Frame frame = read_csv(path);
  ForecastFile out;
  out.time = numeric_column(frame, "timestamp", path);
  out.actual = numeric_column(frame, "actual", path);
  out.prediction = numeric_column(frame, "prediction", path);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

int run_fit(const RunOptions& opts) {
  const json cfg = load_json_file(opts.config_path);
  const ExperimentPlan plan = parse_plan(cfg, opts);
  if (!plan.model) throw ConfigError("fit needs a model section");
  if (!plan.data) throw ConfigError("fit needs a dataset section");
  const ModelPlan& model = *plan.model;
  RunContext ctx = make_context(opts);
  std::ostream& log = *opts.log;

  // Families with their own ingestion paths are handled first.
  if (model.family == "combination") {
    const Frame frame = read_csv(plan.data->path);
    const Eigen::VectorXd time_raw =
        numeric_column(frame, plan.data->schema.timestamp, plan.data->path);
    if (plan.data->schema.targets.size() != 1)
      throw ConfigError("family combination needs exactly one target column");
    const Eigen::VectorXd y =
        numeric_column(frame, plan.data->schema.targets[0], plan.data->path);
    const Eigen::Index p = static_cast<Eigen::Index>(model.expert_columns.size());
    Eigen::MatrixXd experts(frame.rows(), p);
    for (Eigen::Index c = 0; c < p; ++c)
      experts.col(c) =
          numeric_column(frame, model.expert_columns[static_cast<std::size_t>(c)], plan.data->path);

    SplitSpec spec = plan.data->split;
    if (!plan.data->split_given) spec.train_end = frame.rows();
    if (spec.train_end > frame.rows() || spec.val_end > frame.rows() ||
        spec.test_end > frame.rows())
      throw ConfigError("split ranges exceed the dataset length");
    Rescaler scaler;
    if (spec.horizon) {
      scaler.lo = spec.horizon->first;
      scaler.hi = spec.horizon->second;
    } else {
      scaler = fit_rescaler(time_raw);
    }
    Eigen::VectorXd time_scaled(time_raw.size());
    for (Eigen::Index i = 0; i < time_raw.size(); ++i) time_scaled(i) = scaler.apply(time_raw(i));

    CombinationConfig ccfg;
    ccfg.m = model.combo_m;
    ccfg.s = model.combo_s;
    ccfg.lambdas = model.combo_lambda.is_null()
                       ? Eigen::VectorXd::Ones(p)
                       : broadcast_vector(model.combo_lambda, static_cast<std::size_t>(p),
                                          "combination.lambda");

    const auto seg = [&](Eigen::Index b, Eigen::Index e) {
      return std::make_tuple(time_scaled.segment(b, e - b).eval(),
                             experts.middleRows(b, e - b).eval(), y.segment(b, e - b).eval(),
                             time_raw.segment(b, e - b).eval());
    };
    auto [t_train, x_train, y_train, raw_train] = seg(spec.train_begin, spec.train_end);
    CombinationModel fitted = fit_combination(t_train, x_train, y_train, ccfg);
    fitted.time_rescaler = scaler;
    fitted.expert_labels = model.expert_columns;
    save_model((ctx.file("model.json")).string(), fitted);

    Eigen::Index eb = spec.train_begin, ee = spec.train_end;
    std::string eval_name = "train";
    if (spec.test_end > spec.test_begin) {
      eb = spec.test_begin;
      ee = spec.test_end;
      eval_name = "test";
    } else if (spec.val_end > spec.val_begin) {
      eb = spec.val_begin;
      ee = spec.val_end;
      eval_name = "validation";
    }
    auto [t_eval, x_eval, y_eval, raw_eval] = seg(eb, ee);
    const PredictResult pred = fitted.predict(t_eval, x_eval);
    log << "combination fit: " << p << " experts, " << t_train.size() << " training rows; "
        << eval_name << " metrics:\n";
    write_predictions_csv(ctx, "predictions.csv", raw_eval, &y_eval, pred.values);
    write_metrics_csv(ctx, pred.values, y_eval, plan.bootstrap, plan.seed, plan.workers, log);
    write_resolved_config(ctx, plan);
    write_manifest(ctx, "fit", opts, plan);
    return 0;
  }

  if (model.is_hier()) {
    const Ingested data = ingest(*plan.data);
    const Hierarchy& h = *plan.hierarchy;
    const HierModel fitted = fit_hier(model, data.split.train, h);
    save_model((ctx.file("model.json")).string(), fitted);

    const auto [eval, eval_name] = eval_split(data.split);
    double max_imag = 0.0;
    const Eigen::MatrixXd pred = fitted.predict_all(eval->X, &max_imag);
    write_node_predictions_csv(ctx, "predictions.csv", eval->time_raw, h.labels, &eval->Y, pred);

    std::ofstream levels = open_out(ctx.file("levels.csv"));
    levels << "level,mse\n";
    for (const LevelMse& row : per_level_mse(h, pred, eval->Y))
      levels << csv_field(row.level) << ',' << fmt(row.mse) << '\n';

    log << model.family << " fit: " << h.l1() << " nodes (" << h.l2() << " bottom), dim "
        << fitted.diagnostics.dim << ", rcond " << fitted.diagnostics.gram_rcond << "; "
        << eval_name << " metrics over all nodes:\n";
    write_metrics_csv(ctx, flat(pred), flat(eval->Y), plan.bootstrap, plan.seed, plan.workers,
                      log);
    write_resolved_config(ctx, plan);
    write_manifest(ctx, "fit", opts, plan);
    return 0;
  }

  if (plan.data->schema.targets.size() != 1)
    throw ConfigError("family " + model.family + " needs exactly one target column");

  if (model.family == "additive" || model.family == "additive-group") {
    const Ingested data = ingest(*plan.data);
    const auto [eval, eval_name] = eval_split(data.split);
    Eigen::VectorXd predictions;
    double max_imag = 0.0;
    if (model.family == "additive") {
      const AdditiveModel fitted = fit_additive(data.split.train, make_additive_config(model.effects));
      save_model((ctx.file("model.json")).string(), fitted);
      write_effect_curves(ctx, fitted);
      const PredictResult pred = fitted.predict(*eval);
      predictions = pred.values;
      max_imag = pred.max_imag;
      log << "additive fit: " << model.effects.size() << " effects, dim "
          << fitted.diagnostics.dim << ", rcond " << fitted.diagnostics.gram_rcond << ", imag "
          << max_imag << "; " << eval_name << " metrics:\n";
    } else {
      const Eigen::Index key = feature_index(plan.data->schema, model.group_key);
      const GroupAdditiveModel fitted =
          fit_additive_by_group(data.split.train, key, make_additive_config(model.effects));
      save_model((ctx.file("model.json")).string(), fitted);
      const PredictResult pred = fitted.predict(*eval);
      predictions = pred.values;
      max_imag = pred.max_imag;
      log << "group fit: " << fitted.models.size() << " groups over '" << model.group_key
          << "'; " << eval_name << " metrics:\n";
    }
    const Eigen::VectorXd actual = eval->Y.col(0);
    write_predictions_csv(ctx, "predictions.csv", eval->time_raw, &actual, predictions);
    write_metrics_csv(ctx, predictions, actual, plan.bootstrap, plan.seed, plan.workers, log);
    write_resolved_config(ctx, plan);
    write_manifest(ctx, "fit", opts, plan);
    return 0;
  }

  // online
  std::shared_ptr<const AdditiveModel> base;
  SplitResult splits;
  Frame frame;
  if (!model.base_model_path.empty()) {
    LoadedModel loaded = load_model(model.base_model_path);
    if (!loaded.additive)
      throw ConfigError("base_model '" + model.base_model_path + "' is not an additive model");
    if (!loaded.additive->prep)
      throw ConfigError("base_model '" + model.base_model_path + "' carries no preprocessing");
    base = std::make_shared<AdditiveModel>(std::move(*loaded.additive));
    frame = read_csv(plan.data->path);
    const Dataset all = encode(frame, base->prep);
    if (all.d2() != 1) throw DataError("online models are single-target");
    SplitSpec spec = plan.data->split;
    if (!plan.data->split_given) spec.train_end = all.n();
    if (spec.train_end > all.n() || spec.val_end > all.n() || spec.test_end > all.n())
      throw ConfigError("split ranges exceed the dataset length");
    splits.train = all.rows(spec.train_begin, spec.train_end);
    splits.validation = all.rows(spec.val_begin, spec.val_end);
    splits.test = all.rows(spec.test_begin, spec.test_end);
    splits.prep = base->prep;
  } else {
    Ingested data = ingest(*plan.data);
    frame = std::move(data.frame);
    splits = std::move(data.split);
    base = std::make_shared<AdditiveModel>(
        fit_additive(splits.train, make_additive_config(model.effects)));
  }

  const OnlineConfig ocfg = make_online_config(model, base->effects.size());
  const OnlineModel fitted = fit_online(splits.train, base, ocfg);
  save_model((ctx.file("model.json")).string(), fitted);

  if (model.has_rolling) {
    const SplitSpec& spec = plan.data->split;
    if (!plan.data->split_given || spec.test_end <= spec.test_begin)
      throw ConfigError("rolling refits need a non-empty test split");
    const Dataset full = encode(frame, splits.prep).rows(0, spec.test_end);
    const ForecastStream stream =
        rolling_refit_online(full, spec.test_begin, base, ocfg, model.rolling);
    log << "online rolling fit: " << stream.predictions.size() << " one-step forecasts, imag "
        << stream.max_imag << "; test metrics:\n";
    write_predictions_csv(ctx, "predictions.csv", stream.time_raw, &stream.actuals,
                          stream.predictions);
    write_metrics_csv(ctx, stream.predictions, stream.actuals, plan.bootstrap, plan.seed,
                      plan.workers, log);
  } else {
    const auto [eval, eval_name] = eval_split(splits);
    const PredictResult pred = fitted.predict(*eval);
    const Eigen::VectorXd actual = eval->Y.col(0);
    log << "online fit: dim " << fitted.diagnostics.dim << ", rcond "
        << fitted.diagnostics.gram_rcond << "; " << eval_name << " metrics:\n";
    write_predictions_csv(ctx, "predictions.csv", eval->time_raw, &actual, pred.values);
    write_metrics_csv(ctx, pred.values, actual, plan.bootstrap, plan.seed, plan.workers, log);
  }
  write_resolved_config(ctx, plan);
  write_manifest(ctx, "fit", opts, plan);
  return 0;
}

// ---------------------------------------------------------------------------
// tune
// ---------------------------------------------------------------------------

namespace {

double tune_objective_mse(const ModelPlan& model, const SplitResult& data,
                          const std::optional<Hierarchy>& hierarchy) {
  if (model.family == "additive") {
    const AdditiveModel fitted = fit_additive(data.train, make_additive_config(model.effects));
    return mse_of(fitted.predict(data.validation).values, data.validation.Y.col(0));
  }
  if (model.family == "additive-group") {
    Eigen::Index key = -1;
    for (std::size_t i = 0; i < data.prep->feature_names.size(); ++i)
      if (data.prep->feature_names[i] == model.group_key) key = static_cast<Eigen::Index>(i);
    const GroupAdditiveModel fitted =
        fit_additive_by_group(data.train, key, make_additive_config(model.effects));
    return mse_of(fitted.predict(data.validation).values, data.validation.Y.col(0));
  }
  const HierModel fitted = fit_hier(model, data.train, *hierarchy);
  const Eigen::MatrixXd pred = fitted.predict_all(data.validation.X);
  return (pred - data.validation.Y).squaredNorm() / static_cast<double>(pred.size());
}

}  // namespace

int run_tune(const RunOptions& opts) {
  const json cfg = load_json_file(opts.config_path);
  const ExperimentPlan plan = parse_plan(cfg, opts);
  if (!plan.model || !plan.data) throw ConfigError("tune needs model and dataset sections");
  if (!plan.has_grid) throw ConfigError("tune needs a grid section");
  const ModelPlan& model = *plan.model;
  if (model.family == "online" || model.family == "combination")
    throw ConfigError("tuning supports the additive, additive-group, and hierarchical families");
  RunContext ctx = make_context(opts);
  std::ostream& log = *opts.log;

  const Ingested data = ingest(*plan.data);
  if (data.split.validation.n() == 0)
    throw ConfigError("tuning needs a non-empty validation split");

  // Surface bad axis names before the search runs.
  {
    ModelPlan scratch = model;
    for (const GridAxis& axis : plan.grid.axes) {
      if (axis.values.empty()) break;  // grid_search validates emptiness
      apply_axis(scratch, axis.name, axis.values.front());
    }
  }

  const GridObjective objective = [&](const std::vector<double>& point) {
    ModelPlan candidate = model;
    for (std::size_t a = 0; a < point.size(); ++a)
      apply_axis(candidate, plan.grid.axes[a].name, point[a]);
    return tune_objective_mse(candidate, data.split, plan.hierarchy);
  };
  const TuneResult result = grid_search(plan.grid, objective, plan.workers);

  std::ofstream table = open_out(ctx.file("grid.csv"));
  table << "index";
  for (const GridAxis& axis : plan.grid.axes) table << ',' << csv_field(axis.name);
  table << ",mse,solvable,seconds\n";
  for (const GridRow& row : result.table) {
    table << row.index;
    for (const double v : row.point) table << ',' << fmt(v);
    table << ',' << (std::isinf(row.mse) ? "inf" : fmt(row.mse)) << ','
          << (row.solvable ? "true" : "false") << ',' << fmt(row.seconds) << '\n';
  }

  // Refit the winner on train + validation (training preprocessing kept).
  ModelPlan best = model;
  for (std::size_t a = 0; a < result.best_point.size(); ++a)
    apply_axis(best, plan.grid.axes[a].name, result.best_point[a]);
  const Dataset merged = concat_rows(data.split.train, data.split.validation);

  json best_json{{"best_index", result.best_index},
                 {"best_mse", result.best_mse},
                 {"grid_size", plan.grid.size()},
                 {"total_seconds", result.total_seconds},
                 {"refit_model", "model.json"}};
  for (std::size_t a = 0; a < plan.grid.axes.size(); ++a)
    best_json["best_point"][plan.grid.axes[a].name] = result.best_point[a];

  log << "grid search: " << plan.grid.size() << " points, best mse " << result.best_mse
      << " at index " << result.best_index << "\n";

  if (model.is_hier()) {
    const HierModel refit = fit_hier(best, merged, *plan.hierarchy);
    save_model((ctx.file("model.json")).string(), refit);
    if (data.split.test.n() > 0) {
      const Eigen::MatrixXd pred = refit.predict_all(data.split.test.X);
      write_node_predictions_csv(ctx, "predictions.csv", data.split.test.time_raw,
                                 plan.hierarchy->labels, &data.split.test.Y, pred);
      log << "test metrics over all nodes:\n";
      write_metrics_csv(ctx, flat(pred), flat(data.split.test.Y), plan.bootstrap, plan.seed,
                        plan.workers, log);
    }
  } else if (model.family == "additive") {
    const AdditiveModel refit = fit_additive(merged, make_additive_config(best.effects));
    save_model((ctx.file("model.json")).string(), refit);
    if (data.split.test.n() > 0) {
      const PredictResult pred = refit.predict(data.split.test);
      const Eigen::VectorXd actual = data.split.test.Y.col(0);
      write_predictions_csv(ctx, "predictions.csv", data.split.test.time_raw, &actual,
                            pred.values);
      log << "test metrics:\n";
      write_metrics_csv(ctx, pred.values, actual, plan.bootstrap, plan.seed, plan.workers, log);
    }
  } else {
    const Eigen::Index key = feature_index(plan.data->schema, model.group_key);
    const GroupAdditiveModel refit =
        fit_additive_by_group(merged, key, make_additive_config(best.effects));
    save_model((ctx.file("model.json")).string(), refit);
    if (data.split.test.n() > 0) {
      const PredictResult pred = refit.predict(data.split.test);
      const Eigen::VectorXd actual = data.split.test.Y.col(0);
      write_predictions_csv(ctx, "predictions.csv", data.split.test.time_raw, &actual,
                            pred.values);
      log << "test metrics:\n";
      write_metrics_csv(ctx, pred.values, actual, plan.bootstrap, plan.seed, plan.workers, log);
    }
  }

  std::ofstream tr = open_out(ctx.file("tune_result.json"));
  tr << best_json.dump(2) << '\n';
  write_resolved_config(ctx, plan);
  write_manifest(ctx, "tune", opts, plan);
  return 0;
}

// ---------------------------------------------------------------------------
// toy benchmark
// ---------------------------------------------------------------------------

int run_toy_benchmark(const RunOptions& opts) {
  const json cfg = load_json_file(opts.config_path);
  const ExperimentPlan plan = parse_plan(cfg, opts);
  RunContext ctx = make_context(opts);
  std::ostream& log = *opts.log;

  ToyBenchmarkConfig toy = plan.toy;
  toy.seed = plan.seed;
  toy.workers = plan.workers;
  const std::vector<ToyBenchmarkRow> rows = run_toy_benchmark(toy);

  std::ofstream table = open_out(ctx.file("toy_mse.csv"));
  table << "method,sigma2,mse_y1,mse_y2,mse_total,mse_hier,applicable,runs\n";
  for (const ToyBenchmarkRow& row : rows) {
    table << row.method << ',' << fmt(row.sigma2) << ',' << fmt(row.mse_y1) << ','
          << fmt(row.mse_y2) << ',' << fmt(row.mse_total) << ',' << fmt(row.mse_hier) << ','
          << (row.applicable ? "true" : "false") << ',' << row.runs << '\n';
  }

  const char* panels[4] = {"panel_y1.csv", "panel_y2.csv", "panel_total.csv", "panel_hier.csv"};
  for (int panel = 0; panel < 4; ++panel) {
    std::ofstream out = open_out(ctx.file(panels[panel]));
    out << "sigma2";
    for (const auto& method : toy.methods) out << ',' << csv_field(method);
    out << '\n';
    for (const double s2 : toy.sigma2) {
      out << fmt(s2);
      for (const auto& method : toy.methods) {
        double value = std::numeric_limits<double>::quiet_NaN();
        for (const ToyBenchmarkRow& row : rows) {
          if (row.method != method || row.sigma2 != s2) continue;
          value = panel == 0   ? row.mse_y1
                  : panel == 1 ? row.mse_y2
                  : panel == 2 ? row.mse_total
                               : row.mse_hier;
        }
        out << ',' << fmt(value);
      }
      out << '\n';
    }
  }

  log << "toy benchmark: d=" << toy.d << ", runs=" << toy.runs << "\n";
  log << "  method sigma2 hier_mse\n";
  for (const ToyBenchmarkRow& row : rows) {
    log << "  " << row.method << " " << row.sigma2 << " ";
    if (row.applicable)
      log << row.mse_hier << "\n";
    else
      log << "inapplicable\n";
  }
  write_resolved_config(ctx, plan);
  write_manifest(ctx, "toy-benchmark", opts, plan);
  return 0;
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

int run_compare(const RunOptions& opts) {
  const json cfg = load_json_file(opts.config_path);
  const ExperimentPlan plan = parse_plan(cfg, opts);
  if (!plan.has_compare) throw ConfigError("compare needs a compare section");
  RunContext ctx = make_context(opts);
  std::ostream& log = *opts.log;

  const ForecastFile a = read_forecast_file(plan.compare_file1);
  const ForecastFile b = read_forecast_file(plan.compare_file2);
  if (a.time.size() != b.time.size())
    throw DataError("forecast files have different lengths");
  for (Eigen::Index i = 0; i < a.time.size(); ++i) {
    if (a.time(i) != b.time(i))
      throw DataError("forecast files have misaligned timestamps at row " + std::to_string(i));
    if (a.actual(i) != b.actual(i))
      throw DataError("forecast files disagree on actuals at row " + std::to_string(i));
  }

  BootstrapConfig bootstrap = plan.bootstrap;
  bootstrap.seed = plan.seed;
  bootstrap.workers = plan.workers;
  const SkillResult skill =
      skill_test(a.prediction - a.actual, b.prediction - b.actual, bootstrap,
                 plan.compare_alpha);

  const double mae1 = (a.prediction - a.actual).cwiseAbs().mean();
  const double mae2 = (b.prediction - b.actual).cwiseAbs().mean();
  json report{{"file1", plan.compare_file1},
              {"file2", plan.compare_file2},
              {"n", a.time.size()},
              {"mae1", mae1},
              {"mae2", mae2},
              {"skill", skill.skill},
              {"sigma", skill.sigma},
              {"alpha", skill.alpha},
              {"z", skill.z},
              {"ci_lower", skill.ci_lower},
              {"significant", skill.significant},
              {"block_length", skill.summary.block_length},
              {"resamples", skill.summary.resamples}};
  std::ofstream out = open_out(ctx.file("skill_report.json"));
  out << report.dump(2) << '\n';

  log << "skill " << skill.skill << " (sigma " << skill.sigma << ", one-sided lower bound "
      << skill.ci_lower << " at alpha " << skill.alpha << "): "
      << (skill.significant ? "first file is significantly better"
                            : "no significant difference")
      << "\n";
  write_resolved_config(ctx, plan);
  write_manifest(ctx, "compare", opts, plan);
  return 0;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

int run_predict(const RunOptions& opts) {
  const json cfg = load_json_file(opts.config_path);
  const ExperimentPlan plan = parse_plan(cfg, opts);
  if (plan.model_file.empty()) throw ConfigError("predict needs a model_file entry");
  if (!plan.data) throw ConfigError("predict needs a dataset section");
  RunContext ctx = make_context(opts);
  std::ostream& log = *opts.log;

  const LoadedModel loaded = load_model(plan.model_file);
  const Frame frame = read_csv(plan.data->path);

  auto encode_with = [&](const std::shared_ptr<const Preprocess>& prep) {
    if (!prep) throw ConfigError("model file carries no preprocessing");
    return encode(frame, prep);
  };

  if (loaded.family == "combination") {
    const CombinationModel& model = *loaded.combination;
    const Eigen::VectorXd time_raw =
        numeric_column(frame, plan.data->schema.timestamp, plan.data->path);
    if (model.expert_labels.empty() ||
        static_cast<Eigen::Index>(model.expert_labels.size()) != model.p)
      throw ConfigError("combination model file carries no expert column names");
    Eigen::MatrixXd experts(frame.rows(), model.p);
    for (Eigen::Index c = 0; c < model.p; ++c)
      experts.col(c) =
          numeric_column(frame, model.expert_labels[static_cast<std::size_t>(c)], plan.data->path);
    Eigen::VectorXd time_scaled(time_raw.size());
    for (Eigen::Index i = 0; i < time_raw.size(); ++i)
      time_scaled(i) = model.time_rescaler.apply(time_raw(i));
    const PredictResult pred = model.predict(time_scaled, experts);

    std::optional<Eigen::VectorXd> actual;
    if (!plan.data->schema.targets.empty() &&
        frame.find(plan.data->schema.targets[0]) >= 0)
      actual = numeric_column(frame, plan.data->schema.targets[0], plan.data->path);
    write_predictions_csv(ctx, "predictions.csv", time_raw, actual ? &*actual : nullptr,
                          pred.values);
    log << "predicted " << pred.values.size() << " rows (combination)\n";
  } else if (loaded.family == "hier-bu" || loaded.family == "hier-g" ||
             loaded.family == "hier-t") {
    const HierModel& model = *loaded.hier;
    const Dataset data = encode_with(model.prep);
    double max_imag = 0.0;
    const Eigen::MatrixXd pred = model.predict_all(data.X, &max_imag);
    write_node_predictions_csv(ctx, "predictions.csv", data.time_raw, model.hierarchy.labels,
                               data.d2() > 0 ? &data.Y : nullptr, pred);
    log << "predicted " << pred.rows() << " rows over " << pred.cols() << " nodes\n";
  } else {
    PredictResult pred;
    Dataset data;
    if (loaded.family == "additive") {
      data = encode_with(loaded.additive->prep);
      pred = loaded.additive->predict(data);
    } else if (loaded.family == "additive-group") {
      if (loaded.group->models.empty()) throw ConfigError("group model file holds no models");
      data = encode_with(loaded.group->models.front().prep);
      pred = loaded.group->predict(data);
    } else if (loaded.family == "online") {
      data = encode_with(loaded.online->base->prep);
      pred = loaded.online->predict(data);
    } else {
      throw ConfigError("cannot predict with model family '" + loaded.family + "'");
    }
    std::optional<Eigen::VectorXd> actual;
    if (data.d2() > 0) actual = data.Y.col(0);
    write_predictions_csv(ctx, "predictions.csv", data.time_raw, actual ? &*actual : nullptr,
                          pred.values);
    log << "predicted " << pred.values.size() << " rows (" << loaded.family << ")\n";
  }
  write_resolved_config(ctx, plan);
  write_manifest(ctx, "predict", opts, plan);
  return 0;
}

}  // namespace weakl
