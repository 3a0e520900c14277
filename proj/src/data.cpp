#include "weakl/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace weakl {

namespace {

std::vector<std::string> split_csv_line(const std::string& line, const std::string& origin,
                                        std::size_t lineno) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  if (quoted)
    throw DataError(origin + ":" + std::to_string(lineno) + ": unterminated quoted field");
  cells.push_back(std::move(cell));
  return cells;
}

double parse_number(const std::string& cell, const std::string& what) {
  if (cell.empty()) throw DataError("missing value in " + what);
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  double value = 0.0;
  const auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc{} || result.ptr != end)
    throw DataError("cannot parse '" + cell + "' as a number in " + what);
  if (!std::isfinite(value)) throw DataError("non-finite value in " + what);
  return value;
}

std::string trim(const std::string& s) {
  auto b = s.begin();
  auto e = s.end();
  while (b != e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  while (e != b && std::isspace(static_cast<unsigned char>(*(e - 1)))) --e;
  return std::string(b, e);
}

Eigen::Index require_column(const Frame& frame, const std::string& name) {
  const Eigen::Index idx = frame.find(name);
  if (idx < 0) throw DataError("column '" + name + "' not found in data file");
  return idx;
}

}  // namespace

Eigen::Index Frame::find(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<Eigen::Index>(i);
  return -1;
}

Frame parse_csv(const std::string& text, const std::string& origin) {
  Frame frame;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && lineno > 1) continue;
    auto cells = split_csv_line(line, origin, lineno);
    if (lineno == 1) {
      for (auto& name : cells) frame.names.push_back(trim(name));
      frame.columns.resize(frame.names.size());
      continue;
    }
    if (cells.size() != frame.names.size())
      throw DataError(origin + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(frame.names.size()) + " cells, got " +
                      std::to_string(cells.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) frame.columns[c].push_back(trim(cells[c]));
  }
  if (frame.names.empty()) throw DataError(origin + ": empty file, no header row");
  return frame;
}

Frame read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str(), path);
}

Rescaler fit_rescaler(const Eigen::VectorXd& values) {
  if (values.size() == 0) throw DataError("cannot fit a rescaler on an empty column");
  return Rescaler{values.minCoeff(), values.maxCoeff()};
}

int CategoryMap::lookup(const std::string& label) const {
  const auto it = index.find(label);
  if (it == index.end()) throw DataError("unknown category '" + label + "'");
  return it->second;
}

Dataset Dataset::rows(Eigen::Index begin, Eigen::Index end) const {
  if (begin < 0 || end < begin || end > n())
    throw DataError("row range [" + std::to_string(begin) + ", " + std::to_string(end) +
                    ") out of bounds for " + std::to_string(n()) + " rows");
  Dataset out;
  out.time = time.segment(begin, end - begin);
  out.time_raw = time_raw.segment(begin, end - begin);
  out.X = X.middleRows(begin, end - begin);
  out.Y = Y.middleRows(begin, end - begin);
  out.prep = prep;
  return out;
}

Dataset Dataset::select(const std::vector<Eigen::Index>& idx) const {
  Dataset out;
  out.time.resize(idx.size());
  out.time_raw.resize(idx.size());
  out.X.resize(idx.size(), X.cols());
  out.Y.resize(idx.size(), Y.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Eigen::Index r = idx[i];
    if (r < 0 || r >= n()) throw DataError("row index out of bounds in select()");
    out.time(i) = time(r);
    out.time_raw(i) = time_raw(r);
    out.X.row(i) = X.row(r);
    out.Y.row(i) = Y.row(r);
  }
  out.prep = prep;
  return out;
}

namespace {

struct ParsedFrame {
  Eigen::VectorXd time;
  Eigen::MatrixXd targets;                          // may have 0 cols
  std::vector<Eigen::VectorXd> numeric;             // per feature column (numeric kind)
  std::vector<const std::vector<std::string>*> cat; // per feature column (categorical kind)
};

ParsedFrame parse_columns(const Frame& frame, const DataSchema& schema, bool need_targets) {
  if (schema.features.size() != schema.kinds.size())
    throw ConfigError("schema: feature/kind lists have different lengths");
  const Eigen::Index n = frame.rows();
  if (n < 1) throw DataError("dataset has no rows");

  ParsedFrame out;
  const Eigen::Index tcol = require_column(frame, schema.timestamp);
  out.time.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    out.time(i) = parse_number(frame.columns[tcol][i],
                               "column '" + schema.timestamp + "' row " + std::to_string(i + 2));
  for (Eigen::Index i = 1; i < n; ++i)
    if (out.time(i) < out.time(i - 1))
      throw DataError("timestamps must be non-decreasing (row " + std::to_string(i + 2) + ")");

  bool have_targets = need_targets;
  if (!need_targets) {
    have_targets = true;
    for (const auto& name : schema.targets)
      if (frame.find(name) < 0) have_targets = false;
  }
  if (have_targets) {
    out.targets.resize(n, static_cast<Eigen::Index>(schema.targets.size()));
    for (std::size_t j = 0; j < schema.targets.size(); ++j) {
      const Eigen::Index col = require_column(frame, schema.targets[j]);
      for (Eigen::Index i = 0; i < n; ++i)
        out.targets(i, j) = parse_number(
            frame.columns[col][i], "column '" + schema.targets[j] + "' row " + std::to_string(i + 2));
    }
  } else {
    out.targets.resize(n, 0);
  }

  out.numeric.resize(schema.features.size());
  out.cat.resize(schema.features.size(), nullptr);
  for (std::size_t j = 0; j < schema.features.size(); ++j) {
    const Eigen::Index col = require_column(frame, schema.features[j]);
    if (schema.kinds[j] == ColumnKind::Numeric) {
      Eigen::VectorXd v(n);
      for (Eigen::Index i = 0; i < n; ++i)
        v(i) = parse_number(frame.columns[col][i],
                            "column '" + schema.features[j] + "' row " + std::to_string(i + 2));
      out.numeric[j] = std::move(v);
    } else {
      for (Eigen::Index i = 0; i < n; ++i)
        if (frame.columns[col][i].empty())
          throw DataError("missing value in column '" + schema.features[j] + "' row " +
                          std::to_string(i + 2));
      out.cat[j] = &frame.columns[col];
    }
  }
  return out;
}

Dataset encode_parsed(const ParsedFrame& parsed, std::shared_ptr<const Preprocess> prep) {
  const Eigen::Index n = parsed.time.size();
  const std::size_t d1 = prep->feature_names.size();
  Dataset out;
  out.time_raw = parsed.time;
  out.time.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) out.time(i) = prep->time_rescaler.apply(parsed.time(i));
  out.X.resize(n, static_cast<Eigen::Index>(d1));
  for (std::size_t j = 0; j < d1; ++j) {
    if (prep->kinds[j] == ColumnKind::Numeric) {
      for (Eigen::Index i = 0; i < n; ++i)
        out.X(i, j) = prep->rescalers[j].apply(parsed.numeric[j](i));
    } else {
      const auto& cells = *parsed.cat[j];
      for (Eigen::Index i = 0; i < n; ++i)
        out.X(i, j) = static_cast<double>(prep->categories[j].lookup(cells[i]));
    }
  }
  out.Y = parsed.targets;
  out.prep = std::move(prep);
  return out;
}

std::shared_ptr<const Preprocess> fit_preprocess(const ParsedFrame& parsed,
                                                 const DataSchema& schema, Eigen::Index train_begin,
                                                 Eigen::Index train_end,
                                                 std::optional<std::pair<double, double>> horizon) {
  auto prep = std::make_shared<Preprocess>();
  prep->timestamp_name = schema.timestamp;
  prep->feature_names = schema.features;
  prep->target_names = schema.targets;
  prep->kinds = schema.kinds;
  prep->rescalers.resize(schema.features.size());
  prep->categories.resize(schema.features.size());

  if (horizon) {
    if (horizon->second < horizon->first) throw ConfigError("time horizon end before start");
    prep->time_rescaler = Rescaler{horizon->first, horizon->second};
  } else {
    prep->time_rescaler = fit_rescaler(parsed.time);
  }

  const Eigen::Index ntr = train_end - train_begin;
  for (std::size_t j = 0; j < schema.features.size(); ++j) {
    if (schema.kinds[j] == ColumnKind::Numeric) {
      prep->rescalers[j] = fit_rescaler(parsed.numeric[j].segment(train_begin, ntr));
    } else {
      CategoryMap map;
      const auto& cells = *parsed.cat[j];
      for (Eigen::Index i = train_begin; i < train_end; ++i) {
        if (map.index.emplace(cells[i], map.cardinality() + 1).second)
          map.labels.push_back(cells[i]);
      }
      prep->categories[j] = std::move(map);
    }
  }
  return prep;
}

}  // namespace

SplitResult split(const Frame& frame, const DataSchema& schema, const SplitSpec& spec) {
  const Eigen::Index n = frame.rows();
  auto check_range = [&](Eigen::Index b, Eigen::Index e, const char* what) {
    if (b < 0 || e < b || e > n)
      throw ConfigError(std::string("bad ") + what + " range [" + std::to_string(b) + ", " +
                        std::to_string(e) + ") for " + std::to_string(n) + " rows");
  };
  check_range(spec.train_begin, spec.train_end, "train");
  check_range(spec.val_begin, spec.val_end, "validation");
  check_range(spec.test_begin, spec.test_end, "test");
  if (spec.train_end <= spec.train_begin) throw ConfigError("train range is empty");
  const bool have_val = spec.val_end > spec.val_begin;
  const bool have_test = spec.test_end > spec.test_begin;
  Eigen::Index frontier = spec.train_end;
  bool ordered = true;
  if (have_val) {
    ordered = ordered && spec.val_begin >= frontier;
    frontier = spec.val_end;
  }
  if (have_test) ordered = ordered && spec.test_begin >= frontier;
  if (!ordered)
    throw ConfigError("split ranges must be ordered train < validation < test without overlap");

  const ParsedFrame parsed = parse_columns(frame, schema, /*need_targets=*/true);
  auto prep = fit_preprocess(parsed, schema, spec.train_begin, spec.train_end, spec.horizon);
  const Dataset all = encode_parsed(parsed, prep);

  SplitResult out;
  out.prep = prep;
  out.train = all.rows(spec.train_begin, spec.train_end);
  out.validation = all.rows(spec.val_begin, spec.val_end);
  out.test = all.rows(spec.test_begin, spec.test_end);
  return out;
}

Dataset encode(const Frame& frame, std::shared_ptr<const Preprocess> prep) {
  DataSchema schema;
  schema.timestamp = prep->timestamp_name;
  schema.targets = prep->target_names;
  schema.features = prep->feature_names;
  schema.kinds = prep->kinds;
  const ParsedFrame parsed = parse_columns(frame, schema, /*need_targets=*/false);
  return encode_parsed(parsed, std::move(prep));
}

Dataset encode_all(const Frame& frame, const DataSchema& schema,
                   std::optional<std::pair<double, double>> horizon) {
  const ParsedFrame parsed = parse_columns(frame, schema, /*need_targets=*/true);
  auto prep = fit_preprocess(parsed, schema, 0, frame.rows(), horizon);
  return encode_parsed(parsed, prep);
}

GroupPartition group_partition(const Dataset& data, Eigen::Index key_column) {
  if (!data.prep) throw DataError("group_partition: dataset carries no preprocess");
  if (key_column < 0 || key_column >= data.d1())
    throw ConfigError("group_partition: key column index out of range");
  if (data.prep->kinds[key_column] != ColumnKind::Categorical)
    throw ConfigError("group_partition: key column '" +
                      data.prep->feature_names[key_column] + "' is not categorical");

  const CategoryMap& map = data.prep->categories[key_column];
  GroupPartition out;
  out.labels = map.labels;
  out.row_indices.resize(map.labels.size());
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double raw = data.X(i, key_column);
    const int idx = static_cast<int>(raw);
    if (raw != idx || idx < 1 || idx > map.cardinality())
      throw DataError("group_partition: row " + std::to_string(i) +
                      " has no valid group key value");
    out.row_indices[idx - 1].push_back(i);
  }
  out.groups.reserve(map.labels.size());
  for (const auto& idx : out.row_indices) out.groups.push_back(data.select(idx));
  return out;
}

}  // namespace weakl
