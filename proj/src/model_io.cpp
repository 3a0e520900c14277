#include "weakl/model_io.hpp"

#include <fstream>

#include <json.hpp>

namespace weakl {

using json = nlohmann::json;

namespace {

// --- primitives -------------------------------------------------------------

json to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json to_json(const Eigen::VectorXcd& v) {
  json re = json::array(), im = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    re.push_back(v(i).real());
    im.push_back(v(i).imag());
  }
  return json{{"re", std::move(re)}, {"im", std::move(im)}};
}

json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::VectorXd vec_from(const json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

Eigen::VectorXcd cvec_from(const json& j) {
  const json& re = j.at("re");
  const json& im = j.at("im");
  if (re.size() != im.size()) throw ConfigError("model file: re/im arrays differ in length");
  Eigen::VectorXcd v(re.size());
  for (std::size_t i = 0; i < re.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = cplx(re[i].get<double>(), im[i].get<double>());
  return v;
}

Eigen::MatrixXd mat_from(const json& j) {
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols)
      throw ConfigError("model file: ragged matrix rows");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

std::vector<Eigen::Index> offsets_from(const json& j) {
  std::vector<Eigen::Index> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(v.get<Eigen::Index>());
  return out;
}

// --- feature specs ----------------------------------------------------------

std::string kind_name(MapKind kind) {
  switch (kind) {
    case MapKind::Linear: return "linear";
    case MapKind::Fourier: return "fourier";
    case MapKind::Categorical: return "categorical";
  }
  return "linear";
}

MapKind kind_from(const std::string& name) {
  if (name == "linear") return MapKind::Linear;
  if (name == "fourier") return MapKind::Fourier;
  if (name == "categorical") return MapKind::Categorical;
  throw ConfigError("model file: unknown map kind '" + name + "'");
}

json to_json(const FeatureMapSpec& spec) {
  json inputs = json::array();
  for (const auto i : spec.inputs) inputs.push_back(i);
  return json{{"kind", kind_name(spec.kind)}, {"inputs", std::move(inputs)},
              {"m", spec.m},                  {"s", spec.s},
              {"cardinality", spec.cardinality}, {"label", spec.label}};
}

FeatureMapSpec spec_from(const json& j) {
  FeatureMapSpec spec;
  spec.kind = kind_from(j.at("kind").get<std::string>());
  for (const auto& v : j.at("inputs")) spec.inputs.push_back(v.get<Eigen::Index>());
  spec.m = j.at("m").get<int>();
  spec.s = j.at("s").get<int>();
  spec.cardinality = j.at("cardinality").get<int>();
  spec.label = j.at("label").get<std::string>();
  return spec;
}

json specs_to_json(const std::vector<FeatureMapSpec>& specs) {
  json out = json::array();
  for (const auto& s : specs) out.push_back(to_json(s));
  return out;
}

std::vector<FeatureMapSpec> specs_from(const json& j) {
  std::vector<FeatureMapSpec> out;
  out.reserve(j.size());
  for (const auto& s : j) out.push_back(spec_from(s));
  return out;
}

// --- preprocess -------------------------------------------------------------

json to_json(const Rescaler& r) { return json{{"lo", r.lo}, {"hi", r.hi}}; }

Rescaler rescaler_from(const json& j) {
  Rescaler r;
  r.lo = j.at("lo").get<double>();
  r.hi = j.at("hi").get<double>();
  return r;
}

json to_json(const Preprocess& prep) {
  json kinds = json::array();
  for (const auto k : prep.kinds)
    kinds.push_back(k == ColumnKind::Categorical ? "categorical" : "numeric");
  json rescalers = json::array();
  for (const auto& r : prep.rescalers) rescalers.push_back(to_json(r));
  json categories = json::array();
  for (const auto& map : prep.categories) categories.push_back(map.labels);
  return json{{"timestamp", prep.timestamp_name},
              {"features", prep.feature_names},
              {"targets", prep.target_names},
              {"kinds", std::move(kinds)},
              {"rescalers", std::move(rescalers)},
              {"categories", std::move(categories)},
              {"time_rescaler", to_json(prep.time_rescaler)}};
}

std::shared_ptr<const Preprocess> prep_from(const json& j) {
  auto prep = std::make_shared<Preprocess>();
  prep->timestamp_name = j.at("timestamp").get<std::string>();
  prep->feature_names = j.at("features").get<std::vector<std::string>>();
  prep->target_names = j.at("targets").get<std::vector<std::string>>();
  for (const auto& k : j.at("kinds")) {
    const std::string name = k.get<std::string>();
    if (name != "numeric" && name != "categorical")
      throw ConfigError("model file: unknown column kind '" + name + "'");
    prep->kinds.push_back(name == "categorical" ? ColumnKind::Categorical
                                                : ColumnKind::Numeric);
  }
  for (const auto& r : j.at("rescalers")) prep->rescalers.push_back(rescaler_from(r));
  for (const auto& labels : j.at("categories")) {
    CategoryMap map;
    map.labels = labels.get<std::vector<std::string>>();
    for (std::size_t i = 0; i < map.labels.size(); ++i)
      map.index[map.labels[i]] = static_cast<int>(i) + 1;
    prep->categories.push_back(std::move(map));
  }
  prep->time_rescaler = rescaler_from(j.at("time_rescaler"));
  if (prep->kinds.size() != prep->feature_names.size() ||
      prep->rescalers.size() != prep->feature_names.size() ||
      prep->categories.size() != prep->feature_names.size())
    throw ConfigError("model file: preprocess arrays are inconsistent");
  return prep;
}

// --- diagnostics ------------------------------------------------------------

json to_json(const FitDiagnostics& d) {
  return json{{"gram_rcond", d.gram_rcond}, {"residual", d.residual},
              {"jittered", d.jittered},     {"real_path", d.real_path},
              {"dim", d.dim},               {"n_obs", d.n_obs}};
}

FitDiagnostics diag_from(const json& j) {
  FitDiagnostics d;
  d.gram_rcond = j.at("gram_rcond").get<double>();
  d.residual = j.at("residual").get<double>();
  d.jittered = j.at("jittered").get<bool>();
  d.real_path = j.at("real_path").get<bool>();
  d.dim = j.at("dim").get<Eigen::Index>();
  d.n_obs = j.at("n_obs").get<Eigen::Index>();
  return d;
}

// --- model payloads ---------------------------------------------------------

json additive_payload(const AdditiveModel& model) {
  json out{{"effects", specs_to_json(model.effects)},
           {"lambdas", to_json(model.lambdas)},
           {"theta", to_json(model.theta)},
           {"offsets", model.offsets},
           {"diagnostics", to_json(model.diagnostics)}};
  if (model.prep) out["preprocess"] = to_json(*model.prep);
  return out;
}

AdditiveModel additive_from(const json& j) {
  AdditiveModel model;
  model.effects = specs_from(j.at("effects"));
  model.lambdas = vec_from(j.at("lambdas"));
  model.theta = cvec_from(j.at("theta"));
  model.offsets = offsets_from(j.at("offsets"));
  model.diagnostics = diag_from(j.at("diagnostics"));
  if (j.contains("preprocess")) model.prep = prep_from(j.at("preprocess"));
  return model;
}

json hier_payload(const HierModel& model) {
  json node_effects = json::array();
  for (const auto& effects : model.node_effects) node_effects.push_back(specs_to_json(effects));
  json node_lambdas = json::array();
  for (const auto& l : model.node_lambdas) node_lambdas.push_back(to_json(l));
  json out{{"hierarchy",
            json{{"labels", model.hierarchy.labels},
                 {"levels", model.hierarchy.levels},
                 {"parent", model.hierarchy.parent},
                 {"S", to_json(model.hierarchy.S)}}},
           {"node_effects", std::move(node_effects)},
           {"node_lambdas", std::move(node_lambdas)},
           {"theta", to_json(model.theta)},
           {"node_offsets", model.node_offsets},
           {"diagnostics", to_json(model.diagnostics)}};
  if (model.prep) out["preprocess"] = to_json(*model.prep);
  return out;
}

HierModel hier_from(const json& j, HierFamily family) {
  HierModel model;
  model.family = family;
  const json& h = j.at("hierarchy");
  model.hierarchy.labels = h.at("labels").get<std::vector<std::string>>();
  model.hierarchy.levels = h.at("levels").get<std::vector<std::string>>();
  model.hierarchy.parent = offsets_from(h.at("parent"));
  model.hierarchy.S = mat_from(h.at("S"));
  for (const auto& effects : j.at("node_effects")) model.node_effects.push_back(specs_from(effects));
  for (const auto& l : j.at("node_lambdas")) model.node_lambdas.push_back(vec_from(l));
  model.theta = cvec_from(j.at("theta"));
  model.node_offsets = offsets_from(j.at("node_offsets"));
  model.diagnostics = diag_from(j.at("diagnostics"));
  if (j.contains("preprocess")) model.prep = prep_from(j.at("preprocess"));
  return model;
}

// --- envelope ---------------------------------------------------------------

void write_envelope(const std::string& path, const std::string& family, json payload) {
  json doc{{"format", "weakl-model"},
           {"version", kModelFormatVersion},
           {"library", WEAKL_VERSION},
           {"family", family},
           {"model", std::move(payload)}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file '" + path + "'");
  out << doc.dump(2) << '\n';
  if (!out) throw DataError("failed writing model file '" + path + "'");
}

json read_envelope(const std::string& path, std::string& family) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read model file '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError("model file '" + path + "' is not valid JSON: " + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != "weakl-model")
    throw ConfigError("'" + path + "' is not a model file");
  if (doc.value("version", -1) != kModelFormatVersion)
    throw ConfigError("model file '" + path + "' has unsupported version " +
                      std::to_string(doc.value("version", -1)));
  family = doc.at("family").get<std::string>();
  return doc.at("model");
}

}  // namespace

void save_model(const std::string& path, const AdditiveModel& model) {
  write_envelope(path, "additive", additive_payload(model));
}

void save_model(const std::string& path, const GroupAdditiveModel& model) {
  json models = json::array();
  for (const auto& m : model.models) models.push_back(additive_payload(m));
  write_envelope(path, "additive-group",
                 json{{"key_column", model.key_column},
                      {"labels", model.labels},
                      {"models", std::move(models)}});
}

void save_model(const std::string& path, const OnlineModel& model) {
  if (!model.base) throw ConfigError("online model has no base model to save");
  json cfg{{"m", model.config.m},
           {"lambdas", to_json(model.config.lambdas)},
           {"s", model.config.s},
           {"include_h0", model.config.include_h0}};
  write_envelope(path, "online",
                 json{{"base", additive_payload(*model.base)},
                      {"config", std::move(cfg)},
                      {"theta", to_json(model.theta)},
                      {"offsets", model.offsets},
                      {"diagnostics", to_json(model.diagnostics)}});
}

void save_model(const std::string& path, const CombinationModel& model) {
  json cfg{{"m", model.config.m}, {"s", model.config.s}, {"lambdas", to_json(model.config.lambdas)}};
  write_envelope(path, "combination",
                 json{{"config", std::move(cfg)},
                      {"p", model.p},
                      {"theta", to_json(model.theta)},
                      {"offsets", model.offsets},
                      {"diagnostics", to_json(model.diagnostics)},
                      {"time_rescaler", to_json(model.time_rescaler)},
                      {"expert_labels", model.expert_labels}});
}

void save_model(const std::string& path, const HierModel& model) {
  const char* family = model.family == HierFamily::BottomUp   ? "hier-bu"
                       : model.family == HierFamily::Coherency ? "hier-g"
                                                                : "hier-t";
  write_envelope(path, family, hier_payload(model));
}

LoadedModel load_model(const std::string& path) {
  LoadedModel out;
  const json payload = read_envelope(path, out.family);
  try {
    if (out.family == "additive") {
      out.additive = additive_from(payload);
    } else if (out.family == "additive-group") {
      GroupAdditiveModel model;
      model.key_column = payload.at("key_column").get<Eigen::Index>();
      model.labels = payload.at("labels").get<std::vector<std::string>>();
      for (const auto& m : payload.at("models")) model.models.push_back(additive_from(m));
      out.group = std::move(model);
    } else if (out.family == "online") {
      OnlineModel model;
      model.base = std::make_shared<AdditiveModel>(additive_from(payload.at("base")));
      const json& cfg = payload.at("config");
      model.config.m = cfg.at("m").get<std::vector<int>>();
      model.config.lambdas = vec_from(cfg.at("lambdas"));
      model.config.s = cfg.at("s").get<int>();
      model.config.include_h0 = cfg.at("include_h0").get<bool>();
      model.theta = cvec_from(payload.at("theta"));
      model.offsets = offsets_from(payload.at("offsets"));
      model.diagnostics = diag_from(payload.at("diagnostics"));
      out.online = std::move(model);
    } else if (out.family == "combination") {
      CombinationModel model;
      const json& cfg = payload.at("config");
      model.config.m = cfg.at("m").get<int>();
      model.config.s = cfg.at("s").get<int>();
      model.config.lambdas = vec_from(cfg.at("lambdas"));
      model.p = payload.at("p").get<Eigen::Index>();
      model.theta = cvec_from(payload.at("theta"));
      model.offsets = offsets_from(payload.at("offsets"));
      model.diagnostics = diag_from(payload.at("diagnostics"));
      model.time_rescaler = rescaler_from(payload.at("time_rescaler"));
      model.expert_labels = payload.at("expert_labels").get<std::vector<std::string>>();
      out.combination = std::move(model);
    } else if (out.family == "hier-bu") {
      out.hier = hier_from(payload, HierFamily::BottomUp);
    } else if (out.family == "hier-g") {
      out.hier = hier_from(payload, HierFamily::Coherency);
    } else if (out.family == "hier-t") {
      out.hier = hier_from(payload, HierFamily::Transfer);
    } else {
      throw ConfigError("model file '" + path + "' has unknown family '" + out.family + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError("model file '" + path + "' is malformed: " + e.what());
  }
  return out;
}

}  // namespace weakl
