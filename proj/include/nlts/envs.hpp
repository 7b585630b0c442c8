#pragma once

// Bandit environments: the wheel bandit, a realizable linear-Gaussian bandit
// and classification data sets replayed as bandits (reward 1 for the label
// arm, 0 otherwise).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nlts/error.hpp"
#include "nlts/linalg.hpp"
#include "nlts/rng.hpp"
#include "nlts/sampling.hpp"

namespace nlts {

struct StepOutcome {
  Vec context;
  std::size_t chosen_arm = 0;
  double realized_reward = 0.0;
  double expected_reward = 0.0;
  double optimal_expected_reward = 0.0;
  double instantaneous_regret = 0.0;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::size_t context_dim() const = 0;
  virtual std::size_t num_arms() const = 0;
  // Number of steps the environment can serve.
  virtual std::size_t horizon() const {
    return std::numeric_limits<std::size_t>::max();
  }
  virtual Vec next_context() = 0;
  // Plays `arm` against the context returned by the last next_context().
  virtual StepOutcome play(std::size_t arm) = 0;
};

// ---------------------------------------------------------------------------
// Wheel bandit

struct WheelConfig {
  double delta = 0.5;
  double mu_low = 0.1;
  double mu_5 = 0.2;
  double mu_high = 0.4;
  double sigma = 0.1;
};

inline constexpr std::size_t kWheelArms = 5;

inline void validate(const WheelConfig& c) {
  require(c.delta > 0.0 && c.delta < 1.0, ErrorCode::kInvalidParameter,
          "wheel delta must lie in (0, 1)");
  require(c.mu_low < c.mu_5 && c.mu_5 < c.mu_high,
          ErrorCode::kInvalidParameter, "wheel means must satisfy low < mu_5 < high");
  require(c.sigma >= 0.0, ErrorCode::kInvalidParameter, "sigma must be >= 0");
}

/// Uniform point in the unit disk.
inline Vec wheel_next(Rng& rng, const WheelConfig& /*cfg*/) {
  const double r = std::sqrt(rng.uniform());
  const double theta = 2.0 * std::numbers::pi * rng.uniform();
  return {r * std::cos(theta), r * std::sin(theta)};
}

// Quadrant index 0..3 (first..fourth). Points on an axis go to the
// lowest-numbered quadrant whose closure contains them.
inline std::size_t wheel_quadrant(std::span<const double> x) {
  if (x[0] >= 0.0 && x[1] >= 0.0) return 0;
  if (x[0] <= 0.0 && x[1] >= 0.0) return 1;
  if (x[0] <= 0.0 && x[1] <= 0.0) return 2;
  return 3;
}

inline double wheel_mean(const WheelConfig& cfg, std::span<const double> x,
                         std::size_t arm) {
  require(arm < kWheelArms, ErrorCode::kInvalidArm,
          "wheel arm " + std::to_string(arm) + " out of range");
  require(x.size() == 2, ErrorCode::kDimensionMismatch, "wheel context is 2-D");
  if (arm == 4) return cfg.mu_5;
  const bool inside = std::hypot(x[0], x[1]) <= cfg.delta;
  return inside && wheel_quadrant(x) == arm ? cfg.mu_high : cfg.mu_low;
}

struct RewardDraw {
  double reward;
  double expected;
};

inline RewardDraw wheel_reward(Rng& rng, const WheelConfig& cfg,
                               std::span<const double> x, std::size_t arm) {
  const double mean = wheel_mean(cfg, x, arm);
  const double noise = cfg.sigma > 0.0 ? cfg.sigma * sample_standard_normal(rng) : 0.0;
  return {mean + noise, mean};
}

inline double wheel_optimal_mean(const WheelConfig& cfg,
                                 std::span<const double> x) {
  double best = cfg.mu_5;
  for (std::size_t a = 0; a < 4; ++a) best = std::max(best, wheel_mean(cfg, x, a));
  return best;
}

class WheelBandit final : public Environment {
 public:
  WheelBandit(const WheelConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), rng_(seed) {
    validate(cfg_);
  }

  std::size_t context_dim() const override { return 2; }
  std::size_t num_arms() const override { return kWheelArms; }
  const WheelConfig& config() const { return cfg_; }

  Vec next_context() override {
    context_ = wheel_next(rng_, cfg_);
    return context_;
  }

  StepOutcome play(std::size_t arm) override {
    const auto draw = wheel_reward(rng_, cfg_, context_, arm);
    StepOutcome out;
    out.context = context_;
    out.chosen_arm = arm;
    out.realized_reward = draw.reward;
    out.expected_reward = draw.expected;
    out.optimal_expected_reward = wheel_optimal_mean(cfg_, context_);
    out.instantaneous_regret = out.optimal_expected_reward - draw.expected;
    return out;
  }

 private:
  WheelConfig cfg_;
  Rng rng_;
  Vec context_{0.0, 0.0};
};

// ---------------------------------------------------------------------------
// Realizable linear bandit: r = b' theta_a + N(0, sigma^2), b ~ N(0, I).

class LinearGaussianBandit final : public Environment {
 public:
  LinearGaussianBandit(std::size_t dim, std::size_t arms, double sigma,
                       std::uint64_t seed)
      : dim_(dim), sigma_(sigma), thetas_(arms, dim), rng_(seed) {
    require(dim > 0 && arms > 0, ErrorCode::kInvalidParameter,
            "linear bandit needs dim > 0 and arms > 0");
    Rng param_rng(derive_seed(seed, 0x7e7a));
    const double s = 1.0 / std::sqrt(static_cast<double>(dim));
    for (double& v : thetas_.data()) v = s * sample_standard_normal(param_rng);
  }

  std::size_t context_dim() const override { return dim_; }
  std::size_t num_arms() const override { return thetas_.rows(); }
  const Mat& thetas() const { return thetas_; }

  Vec next_context() override {
    context_ = sample_standard_normal(rng_, dim_);
    return context_;
  }

  StepOutcome play(std::size_t arm) override {
    require(arm < num_arms(), ErrorCode::kInvalidArm, "arm out of range");
    StepOutcome out;
    out.context = context_;
    out.chosen_arm = arm;
    const Vec means = matvec(thetas_, context_);
    out.expected_reward = means[arm];
    out.realized_reward = means[arm] + sigma_ * sample_standard_normal(rng_);
    out.optimal_expected_reward = *std::max_element(means.begin(), means.end());
    out.instantaneous_regret = out.optimal_expected_reward - out.expected_reward;
    return out;
  }

 private:
  std::size_t dim_;
  double sigma_;
  Mat thetas_;
  Rng rng_;
  Vec context_;
};

// ---------------------------------------------------------------------------
// Classification data sets

struct Dataset {
  Mat features;                     // rows x d, encoded
  std::vector<std::size_t> labels;  // class index per row
  std::vector<std::string> feature_names;
  std::vector<std::string> class_names;

  std::size_t num_classes() const { return class_names.size(); }
};

struct CsvSchema {
  bool has_header = false;
  char delimiter = ',';  // ' ' means any run of whitespace
  std::string label_column;               // header name or 0-based index
  std::set<std::string> categorical;      // header names or indices
  std::set<std::string> ignored;
  std::vector<std::string> labels;        // explicit class set, optional
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  if (delim == ' ') {
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
  }
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline bool parse_double(const std::string& s, double& v) {
  const char* b = s.data();
  const char* e = b + s.size();
  if (b != e && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  return ec == std::errc() && ptr == e && std::isfinite(v);
}

inline bool column_matches(const std::set<std::string>& refs, std::size_t index,
                           const std::string& name) {
  return refs.count(std::to_string(index)) > 0 ||
         (!name.empty() && refs.count(name) > 0);
}

// Sorts label strings numerically when every label parses as a number.
inline void sort_labels(std::vector<std::string>& labels) {
  const bool numeric = std::all_of(labels.begin(), labels.end(), [](const auto& s) {
    double v;
    return parse_double(s, v);
  });
  if (numeric) {
    std::sort(labels.begin(), labels.end(), [](const auto& a, const auto& b) {
      double x, y;
      parse_double(a, x);
      parse_double(b, y);
      return x < y;
    });
  } else {
    std::sort(labels.begin(), labels.end());
  }
}

}  // namespace detail

/// Schema files hold one `key=value` per line; `#` starts a comment.
///   header=true|false        delimiter=,|;|tab|space
///   label=<column>           labels=<l1>,<l2>,...
///   <column>=numeric|categorical|label|ignore
/// Columns are header names or 0-based indices; unlisted columns are numeric.
inline CsvSchema parse_schema(std::istream& is) {
  CsvSchema s;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::kParseError,
            "schema line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
    if (key == "header") {
      require(value == "true" || value == "false", ErrorCode::kParseError,
              "schema line " + std::to_string(lineno) + ": header must be true|false");
      s.has_header = value == "true";
    } else if (key == "delimiter") {
      if (value == "tab") s.delimiter = '\t';
      else if (value == "space" || value == "whitespace") s.delimiter = ' ';
      else if (value.size() == 1) s.delimiter = value[0];
      else fail(ErrorCode::kParseError, "schema line " + std::to_string(lineno) +
                                            ": bad delimiter '" + value + "'");
    } else if (key == "label") {
      s.label_column = value;
    } else if (key == "labels") {
      s.labels = detail::split_line(value, ',');
    } else if (value == "label") {
      s.label_column = key;
    } else if (value == "categorical") {
      s.categorical.insert(key);
    } else if (value == "ignore") {
      s.ignored.insert(key);
    } else if (value != "numeric") {
      fail(ErrorCode::kParseError, "schema line " + std::to_string(lineno) +
                                       ": unknown column kind '" + value + "'");
    }
  }
  require(!s.label_column.empty(), ErrorCode::kParseError,
          "schema does not name a label column");
  return s;
}

inline CsvSchema load_schema(const std::string& path) {
  std::ifstream is(path);
  require(bool(is), ErrorCode::kIo, "cannot open schema " + path);
  return parse_schema(is);
}

/// Parses the table, one-hot encodes categorical columns (one column per
/// distinct value, sorted) and standardizes numeric columns over the file.
inline Dataset parse_csv_dataset(std::istream& is, const CsvSchema& schema) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_line(line, schema.delimiter);
    if (schema.has_header && header.empty()) {
      header = std::move(fields);
      width = header.size();
      continue;
    }
    if (width == 0) width = fields.size();
    require(fields.size() == width, ErrorCode::kParseError,
            "row " + std::to_string(lineno) + ": expected " +
                std::to_string(width) + " columns, found " +
                std::to_string(fields.size()));
    rows.push_back(std::move(fields));
  }
  require(!rows.empty(), ErrorCode::kParseError, "no data rows");

  auto name_of = [&](std::size_t c) {
    return c < header.size() ? header[c] : std::string();
  };
  std::size_t label_col = width;
  for (std::size_t c = 0; c < width; ++c)
    if (schema.label_column == std::to_string(c) ||
        (!header.empty() && schema.label_column == header[c]))
      label_col = c;
  require(label_col < width, ErrorCode::kParseError,
          "label column '" + schema.label_column + "' not found");

  Dataset ds;
  // Labels.
  std::map<std::string, std::size_t> label_index;
  if (!schema.labels.empty()) {
    ds.class_names = schema.labels;
  } else {
    std::set<std::string> seen;
    for (const auto& r : rows) seen.insert(r[label_col]);
    ds.class_names.assign(seen.begin(), seen.end());
    detail::sort_labels(ds.class_names);
  }
  for (std::size_t k = 0; k < ds.class_names.size(); ++k)
    label_index[ds.class_names[k]] = k;
  ds.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto it = label_index.find(rows[i][label_col]);
    require(it != label_index.end(), ErrorCode::kUnknownLabel,
            "row " + std::to_string(i + 1) + ": label '" + rows[i][label_col] +
                "' is not in the declared label set");
    ds.labels.push_back(it->second);
  }

  // Column encoders.
  struct Encoder {
    std::size_t column;
    bool categorical;
    std::vector<std::string> levels;  // categorical
    double mean = 0.0, sd = 1.0;      // numeric
  };
  std::vector<Encoder> encoders;
  std::size_t out_dim = 0;
  for (std::size_t c = 0; c < width; ++c) {
    if (c == label_col || detail::column_matches(schema.ignored, c, name_of(c)))
      continue;
    Encoder enc{c, detail::column_matches(schema.categorical, c, name_of(c)), {}};
    if (enc.categorical) {
      std::set<std::string> levels;
      for (const auto& r : rows) levels.insert(r[c]);
      enc.levels.assign(levels.begin(), levels.end());
      for (const auto& l : enc.levels)
        ds.feature_names.push_back((name_of(c).empty() ? std::to_string(c) : name_of(c)) +
                                   "=" + l);
      out_dim += enc.levels.size();
    } else {
      double sum = 0.0, sum2 = 0.0;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        double v;
        require(detail::parse_double(rows[i][c], v), ErrorCode::kParseError,
                "row " + std::to_string(i + 1) + ", column " + std::to_string(c) +
                    ": '" + rows[i][c] + "' is not a number");
        sum += v;
        sum2 += v * v;
      }
      const double n = static_cast<double>(rows.size());
      enc.mean = sum / n;
      const double var = std::max(0.0, sum2 / n - enc.mean * enc.mean);
      enc.sd = var > 0.0 ? std::sqrt(var) : 1.0;
      ds.feature_names.push_back(name_of(c).empty() ? std::to_string(c) : name_of(c));
      ++out_dim;
    }
    encoders.push_back(std::move(enc));
  }
  require(out_dim > 0, ErrorCode::kParseError, "no feature columns");

  ds.features = Mat(rows.size(), out_dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto out = ds.features.row(i);
    std::size_t k = 0;
    for (const auto& enc : encoders) {
      const std::string& cell = rows[i][enc.column];
      if (enc.categorical) {
        const auto pos = std::lower_bound(enc.levels.begin(), enc.levels.end(), cell);
        out[k + static_cast<std::size_t>(pos - enc.levels.begin())] = 1.0;
        k += enc.levels.size();
      } else {
        double v;
        detail::parse_double(cell, v);
        out[k++] = (v - enc.mean) / enc.sd;
      }
    }
  }
  return ds;
}

inline Dataset load_csv_dataset(const std::string& path, const CsvSchema& schema) {
  std::ifstream is(path);
  require(bool(is), ErrorCode::kIo, "cannot open " + path);
  return parse_csv_dataset(is, schema);
}

/// Replays a shuffled data set once: reward 1 when the arm equals the label.
class DatasetBandit final : public Environment {
 public:
  DatasetBandit(Dataset data, std::size_t horizon, Rng& rng)
      : data_(std::move(data)), order_(data_.labels.size()) {
    require(data_.num_classes() > 0, ErrorCode::kInvalidParameter,
            "data set has no classes");
    std::iota(order_.begin(), order_.end(), 0);
    // Fisher-Yates with the run's generator.
    for (std::size_t i = order_.size(); i > 1; --i)
      std::swap(order_[i - 1], order_[rng.below(i)]);
    horizon_ = std::min(horizon, order_.size());
  }

  std::size_t context_dim() const override { return data_.features.cols(); }
  std::size_t num_arms() const override { return data_.num_classes(); }
  std::size_t horizon() const override { return horizon_; }
  std::size_t cursor() const { return cursor_; }
  const Dataset& data() const { return data_; }
  const std::vector<std::size_t>& order() const { return order_; }

  Vec next_context() override {
    require(cursor_ < horizon_, ErrorCode::kExhausted,
            "data set bandit exhausted after " + std::to_string(horizon_) +
                " steps");
    auto row = data_.features.row(order_[cursor_]);
    pending_ = true;
    return Vec(row.begin(), row.end());
  }

  StepOutcome play(std::size_t arm) override {
    require(cursor_ < horizon_, ErrorCode::kExhausted,
            "data set bandit exhausted");
    require(arm < num_arms(), ErrorCode::kInvalidArm, "arm out of range");
    if (!pending_) next_context();
    const std::size_t row = order_[cursor_++];
    pending_ = false;
    StepOutcome out;
    auto ctx = data_.features.row(row);
    out.context.assign(ctx.begin(), ctx.end());
    out.chosen_arm = arm;
    out.realized_reward = arm == data_.labels[row] ? 1.0 : 0.0;
    out.expected_reward = out.realized_reward;
    out.optimal_expected_reward = 1.0;
    out.instantaneous_regret = 1.0 - out.realized_reward;
    return out;
  }

 private:
  Dataset data_;
  std::vector<std::size_t> order_;
  std::size_t horizon_ = 0;
  std::size_t cursor_ = 0;
  bool pending_ = false;
};

inline std::unique_ptr<DatasetBandit> load_csv_bandit(
    const std::string& path, const CsvSchema& schema, Rng& rng,
    std::size_t horizon = std::numeric_limits<std::size_t>::max()) {
  return std::make_unique<DatasetBandit>(load_csv_dataset(path, schema), horizon,
                                         rng);
}

// ---------------------------------------------------------------------------
// Synthetic data files

/// Shuttle-shaped classification table: 9 integer-valued numeric features
/// and 7 classes with a dominant majority class. Every class is a union of
/// separated clusters, so no linear read-out of the raw features separates
/// them. Columns: f1..f9,class (class labels 1..7), header row included.
inline void write_statlog_like_csv(std::ostream& os, std::size_t rows,
                                   std::uint64_t seed) {
  constexpr std::size_t kDim = 9;
  constexpr std::size_t kClasses = 7;
  constexpr std::size_t kClusters = 3;
  constexpr double kPriors[kClasses] = {0.55, 0.04, 0.05, 0.16, 0.10, 0.05, 0.05};
  // Cluster geometry is a fixed property of the data set, rows vary by seed.
  Rng layout(0x5157a7109ULL);
  double centers[kClasses][kClusters][kDim];
  for (auto& cls : centers)
    for (auto& c : cls)
      for (double& v : c) v = 60.0 * (layout.uniform() - 0.5);
  Rng rng(seed);
  os << "f1,f2,f3,f4,f5,f6,f7,f8,f9,class\n";
  for (std::size_t i = 0; i < rows; ++i) {
    double u = rng.uniform();
    std::size_t cls = 0;
    while (cls + 1 < kClasses && u >= kPriors[cls]) u -= kPriors[cls++];
    const auto& c = centers[cls][rng.below(kClusters)];
    for (std::size_t k = 0; k < kDim; ++k)
      os << std::lround(c[k] + 4.0 * sample_standard_normal(rng)) << ',';
    os << cls + 1 << '\n';
  }
}

// Level counts of the 22 categorical attributes of the UCI mushroom table.
inline constexpr std::size_t kMushroomLevels[22] = {
    6, 4, 10, 2, 9, 2, 2, 2, 12, 2, 5, 4, 4, 9, 9, 1, 4, 3, 5, 9, 6, 7};

/// Mushroom-shaped table: label column first (e/p), then 22 categorical
/// columns using single-letter levels. Every level appears at least once.
inline void write_mushroom_like_csv(std::ostream& os, std::size_t rows,
                                    std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t i = 0; i < rows; ++i) {
    os << (rng.uniform() < 0.5 ? 'e' : 'p');
    for (std::size_t c = 0; c < 22; ++c) {
      const std::size_t levels = kMushroomLevels[c];
      const std::size_t level = i < 12 ? i % levels : rng.below(levels);
      os << ',' << static_cast<char>('a' + level);
    }
    os << '\n';
  }
}

}  // namespace nlts
