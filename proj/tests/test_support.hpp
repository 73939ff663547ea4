#pragma once

// Shared helpers for the test suites: finite-difference gradient checking,
// fixed-output models, random model generation, and scratch directories.

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "eauq/estimators.hpp"
#include "eauq/mlp.hpp"
#include "eauq/rng.hpp"

namespace testsupport {

// A single-layer net whose output is (numerically) the constant p.
inline eauq::MlpModel constant_model(int input_dim, double p) {
  eauq::MlpModel model;
  model.layer_sizes = {input_dim, 1};
  model.weights = {std::vector<double>(static_cast<std::size_t>(input_dim), 0.0)};
  const double clamped = std::min(std::max(p, 1e-12), 1.0 - 1e-12);
  model.biases = {{std::log(clamped / (1.0 - clamped))}};
  return model;
}

inline eauq::Ensemble constant_ensemble(int input_dim,
                                        const std::vector<double>& outputs,
                                        eauq::EnsembleKind kind =
                                            eauq::EnsembleKind::Classification) {
  eauq::Ensemble ensemble;
  ensemble.kind = kind;
  for (double p : outputs) ensemble.members.push_back(constant_model(input_dim, p));
  return ensemble;
}

inline eauq::MlpModel random_model(std::vector<int> layer_sizes,
                                   double dropout_rate, std::uint64_t seed) {
  return eauq::make_mlp(std::move(layer_sizes), dropout_rate, seed);
}

inline eauq::TrainingSet random_batch(int n, int dim, std::uint64_t seed) {
  eauq::RandomStream rs(seed);
  eauq::TrainingSet batch;
  for (int i = 0; i < n; ++i) {
    std::vector<double> x(static_cast<std::size_t>(dim));
    for (double& v : x) v = rs.normal();
    batch.features.push_back(std::move(x));
    batch.targets.push_back(rs.uniform01());
  }
  return batch;
}

struct GradientCheck {
  double worst_abs_diff = 0.0;
  double worst_allowed = 0.0;
  std::size_t coordinates = 0;  // coordinates actually compared
  std::size_t excluded = 0;     // skipped: loss not smooth inside +-h
  bool ok = true;
};

// Central finite differences over every parameter coordinate. A coordinate is
// only a valid probe where the loss is differentiable across the whole +-h
// interval; at a ReLU kink the two one-sided slopes split by exactly twice
// the central-difference error, so coordinates whose one-sided slopes
// disagree beyond the tolerance are excluded (and counted) instead of
// compared.
inline GradientCheck finite_difference_check(const eauq::MlpModel& model,
                                             const eauq::TrainingSet& batch,
                                             eauq::LossKind loss,
                                             const eauq::ForwardMode& mode,
                                             double h = 1e-5,
                                             double rel_tol = 1e-4,
                                             double abs_tol = 1e-7) {
  const eauq::LossAndGradient analytic =
      eauq::loss_and_gradient(model, batch, loss, mode);
  GradientCheck check;

  eauq::MlpModel probe = model;
  auto loss_at = [&]() {
    return eauq::loss_and_gradient(probe, batch, loss, mode).loss;
  };
  const double center = loss_at();
  auto compare = [&](double& param, double grad) {
    const double saved = param;
    param = saved + h;
    const double plus = loss_at();
    param = saved - h;
    const double minus = loss_at();
    param = saved;
    const double fd = (plus - minus) / (2.0 * h);
    const double diff = std::fabs(fd - grad);
    const double allowed =
        abs_tol + rel_tol * std::max(std::fabs(fd), std::fabs(grad));
    if (diff > allowed) {
      // A kink crossing splits the one-sided slopes by twice the central
      // error; a wrong analytic gradient at a smooth coordinate does not.
      const double forward_slope = (plus - center) / h;
      const double backward_slope = (center - minus) / h;
      if (std::fabs(forward_slope - backward_slope) > allowed) {
        ++check.excluded;
        return;
      }
    }
    ++check.coordinates;
    if (diff > check.worst_abs_diff) {
      check.worst_abs_diff = diff;
      check.worst_allowed = allowed;
    }
    if (diff > allowed) check.ok = false;
  };

  for (std::size_t l = 0; l < probe.weights.size(); ++l) {
    for (std::size_t i = 0; i < probe.weights[l].size(); ++i)
      compare(probe.weights[l][i], analytic.gradients.weights[l][i]);
    for (std::size_t i = 0; i < probe.biases[l].size(); ++i)
      compare(probe.biases[l][i], analytic.gradients.biases[l][i]);
  }
  return check;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("eauq-test-" + std::to_string(::getpid()) + "-" + tag + "-" +
             std::to_string(counter_++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  static inline int counter_ = 0;
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace testsupport
