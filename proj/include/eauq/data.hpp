#pragma once

// Dataset model, CSV ingestion, seeded train/validation/test splitting with a
// fixed test pool, and a synthetic two-Gaussian generator with known
// aleatoric structure plus simulated expert annotators.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "eauq/errors.hpp"
#include "eauq/mlp.hpp"
#include "eauq/rng.hpp"

namespace eauq {

// The five allowed expert annotation values.
inline constexpr std::array<double, 5> kVoteGrid{0.0, 0.25, 0.5, 0.75, 1.0};

inline bool on_vote_grid(double v) {
  for (double g : kVoteGrid)
    if (v == g) return true;
  return false;
}

// Nearest grid value; exact ties round up toward the larger grid value.
inline double round_to_vote_grid(double v) {
  const double clamped = std::min(1.0, std::max(0.0, v));
  return std::round(clamped * 4.0) / 4.0;
}

struct Example {
  std::string id;
  std::vector<double> features;
  int label = 0;  // 0 or 1
  std::optional<std::vector<double>> expert_votes;
  // Generator-only ground truth, never visible to training.
  std::optional<double> true_positive_prob;

  double expert_mean() const {
    if (!expert_votes || expert_votes->empty())
      throw InputError("Example " + id + " has no expert votes");
    double sum = 0.0;
    for (double v : *expert_votes) sum += v;
    return sum / static_cast<double>(expert_votes->size());
  }

  void validate() const {
    for (double f : features)
      if (!std::isfinite(f))
        throw ValidationError("example " + id + ": non-finite feature");
    if (label != 0 && label != 1)
      throw ValidationError("example " + id + ": label must be 0 or 1");
    if (expert_votes)
      for (double v : *expert_votes)
        if (!on_vote_grid(v))
          throw ValidationError("example " + id + ": vote " +
                                std::to_string(v) + " is off the grid");
    if (true_positive_prob &&
        !(*true_positive_prob >= 0.0 && *true_positive_prob <= 1.0))
      throw ValidationError("example " + id + ": true_positive_prob outside [0,1]");
  }
};

struct Dataset {
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  int feature_dim() const {
    return examples.empty() ? 0 : static_cast<int>(examples[0].features.size());
  }
  bool all_have_votes() const {
    for (const Example& e : examples)
      if (!e.expert_votes || e.expert_votes->empty()) return false;
    return !examples.empty();
  }
  bool all_have_oracle() const {
    for (const Example& e : examples)
      if (!e.true_positive_prob) return false;
    return !examples.empty();
  }
};

// --- targets for nn-core ----------------------------------------------------

inline TrainingSet to_classification_targets(const Dataset& data) {
  TrainingSet out;
  out.features.reserve(data.size());
  out.targets.reserve(data.size());
  for (const Example& e : data.examples) {
    out.features.push_back(e.features);
    out.targets.push_back(static_cast<double>(e.label));
  }
  return out;
}

inline TrainingSet to_expert_mean_targets(const Dataset& data) {
  TrainingSet out;
  out.features.reserve(data.size());
  out.targets.reserve(data.size());
  for (const Example& e : data.examples) {
    if (!e.expert_votes || e.expert_votes->empty())
      throw InputError("example " + e.id +
                       " is missing expert votes required for fine-tuning");
    out.features.push_back(e.features);
    out.targets.push_back(e.expert_mean());
  }
  return out;
}

// --- splitting ---------------------------------------------------------------

// The test pool is fixed by master_seed alone; run_seed reshuffles only the
// train/validation remainder, so repeated runs share one test set.
struct SplitSpec {
  double train_fraction = 0.1;
  double val_fraction = 0.1;
  double test_fraction = 0.8;
  std::uint64_t master_seed = 0;
  std::uint64_t run_seed = 0;

  void validate() const {
    auto in_open = [](double f) { return f > 0.0 && f < 1.0; };
    if (!in_open(train_fraction) || !in_open(val_fraction) ||
        !in_open(test_fraction))
      throw InputError("SplitSpec: fractions must lie in (0,1)");
    if (std::fabs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9)
      throw InputError("SplitSpec: fractions must sum to 1");
  }
};

struct SplitResult {
  Dataset train;
  Dataset val;
  Dataset test;
};

inline SplitResult split(const Dataset& data, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = data.size();
  if (n < 10) throw InputError("split: dataset must have at least 10 examples");

  const auto n_train =
      static_cast<std::size_t>(std::llround(spec.train_fraction * n));
  const auto n_val =
      static_cast<std::size_t>(std::llround(spec.val_fraction * n));
  if (n_train + n_val >= n)
    throw InputError("split: no examples left for the test set");
  const std::size_t n_test = n - n_train - n_val;

  std::vector<std::size_t> indices(n);
  for (std::size_t i = 0; i < n; ++i) indices[i] = i;
  RandomStream(derive_seed(spec.master_seed, "split-test")).shuffle(indices);

  SplitResult out;
  out.test.examples.reserve(n_test);
  for (std::size_t i = 0; i < n_test; ++i)
    out.test.examples.push_back(data.examples[indices[i]]);

  std::vector<std::size_t> rest(indices.begin() + n_test, indices.end());
  RandomStream(derive_seed(spec.master_seed, "split-run", spec.run_seed))
      .shuffle(rest);
  out.train.examples.reserve(n_train);
  out.val.examples.reserve(n_val);
  for (std::size_t i = 0; i < n_train; ++i)
    out.train.examples.push_back(data.examples[rest[i]]);
  for (std::size_t i = n_train; i < rest.size(); ++i)
    out.val.examples.push_back(data.examples[rest[i]]);
  return out;
}

// --- synthetic generation ----------------------------------------------------

struct SyntheticConfig {
  int n_examples = 2000;
  int n_features = 16;
  double class_separation = 3.0;
  // Fraction of examples re-drawn near the class midplane, where the
  // posterior is intermediate.
  double aleatoric_band_fraction = 0.3;
  int n_experts = 6;
  double expert_noise_sd = 0.15;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_examples < 1) throw ConfigError("SyntheticConfig: n_examples must be positive");
    if (n_features < 1) throw ConfigError("SyntheticConfig: n_features must be positive");
    if (!(class_separation > 0.0))
      throw ConfigError("SyntheticConfig: class_separation must be positive");
    if (!(aleatoric_band_fraction >= 0.0 && aleatoric_band_fraction <= 1.0))
      throw ConfigError("SyntheticConfig: aleatoric_band_fraction must lie in [0,1]");
    if (n_experts < 1) throw ConfigError("SyntheticConfig: n_experts must be positive");
    if (expert_noise_sd < 0.0)
      throw ConfigError("SyntheticConfig: expert_noise_sd must be non-negative");
  }
};

// Votes are calibrated noisy reads of the example's true positive
// probability, snapped to the grid; vote k is seeded by (example id, k).
inline std::vector<double> simulate_experts(const Example& example,
                                            int n_experts, double noise_sd,
                                            std::uint64_t seed) {
  if (!example.true_positive_prob)
    throw InputError("simulate_experts: example " + example.id +
                     " carries no true_positive_prob");
  if (n_experts < 1)
    throw InputError("simulate_experts: n_experts must be positive");
  std::vector<double> votes(static_cast<std::size_t>(n_experts));
  for (int k = 0; k < n_experts; ++k) {
    RandomStream rs(derive_seed(seed, example.id, static_cast<std::uint64_t>(k)));
    votes[static_cast<std::size_t>(k)] =
        round_to_vote_grid(*example.true_positive_prob + rs.normal() * noise_sd);
  }
  return votes;
}

// Two class-conditional unit Gaussians at +-separation/2 along the first
// axis, equal priors. true_positive_prob is the exact Bayes posterior
// sigmoid(separation * x0); labels are sampled from it.
inline Dataset synthesize(const SyntheticConfig& cfg) {
  cfg.validate();
  Dataset data;
  data.examples.resize(static_cast<std::size_t>(cfg.n_examples));
  const auto n_band = static_cast<std::size_t>(
      std::llround(cfg.aleatoric_band_fraction * cfg.n_examples));
  const double s = cfg.class_separation;

  for (std::size_t i = 0; i < data.examples.size(); ++i) {
    Example& ex = data.examples[i];
    char id[16];
    std::snprintf(id, sizeof(id), "ex%06zu", i);
    ex.id = id;
    RandomStream rs(derive_seed(cfg.seed, "example", i));
    ex.features.resize(static_cast<std::size_t>(cfg.n_features));
    if (i < n_band) {
      // Boundary band: place x0 so the posterior spans the middle range.
      ex.features[0] = rs.uniform(-2.0, 2.0) / s;
    } else {
      const bool positive = rs.bernoulli(0.5);
      ex.features[0] = rs.normal() + (positive ? s / 2.0 : -s / 2.0);
    }
    for (int f = 1; f < cfg.n_features; ++f)
      ex.features[static_cast<std::size_t>(f)] = rs.normal();
    const double posterior = detail::sigmoid(s * ex.features[0]);
    ex.true_positive_prob = posterior;
    ex.label = rs.bernoulli(posterior) ? 1 : 0;
  }

  const std::uint64_t vote_seed = derive_seed(cfg.seed, "experts");
  for (Example& ex : data.examples)
    ex.expert_votes =
        simulate_experts(ex, cfg.n_experts, cfg.expert_noise_sd, vote_seed);
  return data;
}

// --- CSV ---------------------------------------------------------------------
//
// Header row; columns `id`, `f0..f{d-1}`, `label`, optional `e1..e{n}` on the
// vote grid, optional `true_p` oracle column; UTF-8, '.' decimal separator.

struct CsvSchema {
  std::string id_column = "id";
  std::vector<std::string> feature_columns;
  std::string label_column = "label";
  std::vector<std::string> expert_columns;
  std::optional<std::string> oracle_column;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(field);
  return fields;
}

inline double parse_double(const std::string& text, std::size_t row,
                           const std::string& column) {
  std::size_t pos = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &pos);
  } catch (const std::exception&) {
    throw ParseError("row " + std::to_string(row) + ", column " + column +
                     ": cannot parse '" + text + "' as a number");
  }
  if (pos != text.size())
    throw ParseError("row " + std::to_string(row) + ", column " + column +
                     ": trailing characters in '" + text + "'");
  return value;
}

}  // namespace detail

// Derives a schema from a header shaped id, f*, label[, e*][, true_p].
inline CsvSchema infer_csv_schema(const std::vector<std::string>& header) {
  CsvSchema schema;
  for (const std::string& name : header) {
    if (name == "id") {
      schema.id_column = name;
    } else if (name == "label") {
      schema.label_column = name;
    } else if (name == "true_p") {
      schema.oracle_column = name;
    } else if (name.size() >= 2 && name[0] == 'f' &&
               name.find_first_not_of("0123456789", 1) == std::string::npos) {
      schema.feature_columns.push_back(name);
    } else if (name.size() >= 2 && name[0] == 'e' &&
               name.find_first_not_of("0123456789", 1) == std::string::npos) {
      schema.expert_columns.push_back(name);
    } else {
      throw ParseError("unrecognized CSV column '" + name + "'");
    }
  }
  if (schema.feature_columns.empty())
    throw ParseError("CSV header declares no feature columns");
  return schema;
}

inline Dataset load_csv(std::istream& is, const CsvSchema& schema) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("CSV is empty");
  const std::vector<std::string> header = detail::split_csv_line(line);

  auto column_index = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ValidationError("CSV header is missing column '" + name + "'");
  };

  const std::size_t id_idx = column_index(schema.id_column);
  const std::size_t label_idx = column_index(schema.label_column);
  std::vector<std::size_t> feat_idx, vote_idx;
  for (const auto& c : schema.feature_columns) feat_idx.push_back(column_index(c));
  for (const auto& c : schema.expert_columns) vote_idx.push_back(column_index(c));
  std::optional<std::size_t> oracle_idx;
  if (schema.oracle_column) oracle_idx = column_index(*schema.oracle_column);

  Dataset data;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    const std::vector<std::string> fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      throw ParseError("row " + std::to_string(row) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    Example ex;
    ex.id = fields[id_idx];
    if (fields[label_idx].empty())
      throw ValidationError("row " + std::to_string(row) + ": missing label");
    const double label = detail::parse_double(fields[label_idx], row, "label");
    if (label != 0.0 && label != 1.0)
      throw ValidationError("row " + std::to_string(row) + ": label '" +
                            fields[label_idx] + "' must be 0 or 1");
    ex.label = static_cast<int>(label);
    ex.features.reserve(feat_idx.size());
    for (std::size_t i = 0; i < feat_idx.size(); ++i) {
      const double v = detail::parse_double(fields[feat_idx[i]], row,
                                            schema.feature_columns[i]);
      if (!std::isfinite(v))
        throw ValidationError("row " + std::to_string(row) +
                              ": non-finite feature");
      ex.features.push_back(v);
    }
    if (!vote_idx.empty()) {
      std::vector<double> votes;
      votes.reserve(vote_idx.size());
      for (std::size_t i = 0; i < vote_idx.size(); ++i) {
        const double v = detail::parse_double(fields[vote_idx[i]], row,
                                              schema.expert_columns[i]);
        if (!on_vote_grid(v))
          throw ValidationError("row " + std::to_string(row) + ": vote " +
                                fields[vote_idx[i]] + " in column " +
                                schema.expert_columns[i] +
                                " is not one of 0.00/0.25/0.50/0.75/1.00");
        votes.push_back(v);
      }
      ex.expert_votes = std::move(votes);
    }
    if (oracle_idx) {
      const double p = detail::parse_double(fields[*oracle_idx], row, "true_p");
      if (!(p >= 0.0 && p <= 1.0))
        throw ValidationError("row " + std::to_string(row) +
                              ": true_p outside [0,1]");
      ex.true_positive_prob = p;
    }
    data.examples.push_back(std::move(ex));
  }
  return data;
}

inline Dataset load_csv(const std::filesystem::path& path,
                        const CsvSchema& schema) {
  std::ifstream is(path);
  if (!is) throw IoError("load_csv: cannot open " + path.string());
  return load_csv(is, schema);
}

// Convenience loader that infers the schema from the header row.
inline Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("load_csv: cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw ParseError("CSV is empty");
  const CsvSchema schema = infer_csv_schema(detail::split_csv_line(line));
  is.seekg(0);
  return load_csv(is, schema);
}

inline void save_csv(const Dataset& data, std::ostream& os,
                     bool include_oracle = false) {
  if (data.empty()) throw InputError("save_csv: dataset is empty");
  const int d = data.feature_dim();
  const std::size_t n_votes =
      data.examples[0].expert_votes ? data.examples[0].expert_votes->size() : 0;
  os << "id";
  for (int f = 0; f < d; ++f) os << ",f" << f;
  os << ",label";
  for (std::size_t k = 1; k <= n_votes; ++k) os << ",e" << k;
  if (include_oracle) os << ",true_p";
  os << '\n';
  char buf[32];
  for (const Example& ex : data.examples) {
    os << ex.id;
    for (double f : ex.features) {
      std::snprintf(buf, sizeof(buf), "%.17g", f);
      os << ',' << buf;
    }
    os << ',' << ex.label;
    const std::size_t have =
        ex.expert_votes ? ex.expert_votes->size() : 0;
    if (have != n_votes)
      throw InputError("save_csv: example " + ex.id +
                       " has an inconsistent vote count");
    for (std::size_t k = 0; k < n_votes; ++k) {
      std::snprintf(buf, sizeof(buf), "%.2f", (*ex.expert_votes)[k]);
      os << ',' << buf;
    }
    if (include_oracle) {
      if (!ex.true_positive_prob)
        throw InputError("save_csv: example " + ex.id +
                         " has no true_positive_prob for the true_p column");
      std::snprintf(buf, sizeof(buf), "%.17g", *ex.true_positive_prob);
      os << ',' << buf;
    }
    os << '\n';
  }
}

inline void save_csv(const Dataset& data, const std::filesystem::path& path,
                     bool include_oracle = false) {
  std::ofstream os(path);
  if (!os) throw IoError("save_csv: cannot open " + path.string());
  save_csv(data, os, include_oracle);
  if (!os) throw IoError("save_csv: write failed for " + path.string());
}

}  // namespace eauq
