#pragma once

// Rejection-curve construction and the derived scalar metrics: area above
// the curve, accuracy after discarding a fraction of the most uncertain
// examples, and the fraction that must be discarded to reach a target
// accuracy. Also aggregates results across seeds and renders plot data.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "eauq/errors.hpp"
#include "eauq/rng.hpp"

namespace eauq {

struct ScoredPrediction {
  std::string example_id;
  double predicted_prob = 0.5;
  int label = 0;
  double uncertainty = 0.0;

  // Predicted class is 1 iff predicted_prob >= 0.5.
  bool correct() const { return (predicted_prob >= 0.5 ? 1 : 0) == label; }
};

struct CurvePoint {
  double rejected_fraction = 0.0;
  double accuracy = 0.0;
};

struct RejectionCurve {
  std::vector<CurvePoint> points;  // one per rejection count m = 0..N-1
  std::size_t n_total = 0;
  std::string tie_policy = "uncertainty-desc,id-asc";
};

// Sorts by descending uncertainty with ties broken by ascending example id;
// point m is (m/N, accuracy of the N-m retained least-uncertain examples).
inline RejectionCurve rejection_curve(std::vector<ScoredPrediction> preds) {
  if (preds.empty()) throw InputError("rejection_curve: no predictions");
  for (const ScoredPrediction& p : preds)
    if (!std::isfinite(p.uncertainty))
      throw InputError("rejection_curve: non-finite uncertainty for example " +
                       p.example_id);
  std::sort(preds.begin(), preds.end(),
            [](const ScoredPrediction& a, const ScoredPrediction& b) {
              if (a.uncertainty != b.uncertainty)
                return a.uncertainty > b.uncertainty;
              return a.example_id < b.example_id;
            });
  const std::size_t n = preds.size();
  // suffix_correct[m] = number of correct predictions among preds[m..N).
  std::vector<std::size_t> suffix_correct(n + 1, 0);
  for (std::size_t i = n; i-- > 0;)
    suffix_correct[i] = suffix_correct[i + 1] + (preds[i].correct() ? 1 : 0);

  RejectionCurve curve;
  curve.n_total = n;
  curve.points.reserve(n);
  for (std::size_t m = 0; m < n; ++m)
    curve.points.push_back(
        {static_cast<double>(m) / static_cast<double>(n),
         static_cast<double>(suffix_correct[m]) / static_cast<double>(n - m)});
  return curve;
}

// Riemann sum of the gap to perfect accuracy over the rejection steps;
// lower is better, zero for an always-correct classifier.
inline double aac(const RejectionCurve& curve) {
  if (curve.points.empty()) throw InputError("aac: empty curve");
  double total = 0.0;
  for (const CurvePoint& p : curve.points) total += 1.0 - p.accuracy;
  return total / static_cast<double>(curve.n_total);
}

// Accuracy once floor(fraction * N) examples have been rejected.
inline double accuracy_at_discard(const RejectionCurve& curve,
                                  double fraction = 0.10) {
  if (curve.points.empty()) throw InputError("accuracy_at_discard: empty curve");
  if (!(fraction >= 0.0 && fraction < 1.0))
    throw InputError("accuracy_at_discard: fraction must lie in [0,1)");
  const auto m = static_cast<std::size_t>(
      std::floor(fraction * static_cast<double>(curve.n_total)));
  return curve.points[std::min(m, curve.points.size() - 1)].accuracy;
}

// Smallest rejected fraction whose accuracy reaches `target`; nullopt when
// no rejection level qualifies.
inline std::optional<double> fraction_to_accuracy(const RejectionCurve& curve,
                                                  double target = 0.99) {
  if (curve.points.empty()) throw InputError("fraction_to_accuracy: empty curve");
  if (!(target > 0.0 && target <= 1.0))
    throw InputError("fraction_to_accuracy: target must lie in (0,1]");
  for (const CurvePoint& p : curve.points)
    if (p.accuracy >= target) return p.rejected_fraction;
  return std::nullopt;
}

struct MetricsReport {
  double aac = 0.0;
  double acc_at_10pct_discard = 0.0;
  std::optional<double> fraction_to_99pct;  // nullopt = unreachable
  std::string estimator;
  std::uint64_t seed = 0;
  std::size_t n_test = 0;
};

inline MetricsReport compute_metrics(const RejectionCurve& curve,
                                     std::string estimator,
                                     std::uint64_t seed) {
  MetricsReport report;
  report.aac = aac(curve);
  report.acc_at_10pct_discard = accuracy_at_discard(curve, 0.10);
  report.fraction_to_99pct = fraction_to_accuracy(curve, 0.99);
  report.estimator = std::move(estimator);
  report.seed = seed;
  report.n_test = curve.n_total;
  return report;
}

// Order-independent digest of a test pool's example ids.
inline std::uint64_t test_pool_digest(std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const std::string& id : ids) {
    h = splitmix64(h ^ fnv1a64(id));
  }
  return h;
}

struct SeedResult {
  MetricsReport metrics;
  RejectionCurve curve;
  std::uint64_t test_digest = 0;
};

struct MethodAggregate {
  std::string method;
  int n_seeds = 0;
  double mean_aac = 0.0;
  double mean_acc_at_10pct = 0.0;
  // Mean over the seeds where the 99% level was reachable.
  std::optional<double> mean_fraction_to_99pct;
  int unreachable_count = 0;
  std::vector<CurvePoint> mean_curve;
};

// Per-method means across seeds. All results must share one test pool.
inline std::vector<MethodAggregate> compare_report(
    const std::vector<SeedResult>& results) {
  if (results.empty()) throw InputError("compare_report: no results");
  const std::uint64_t digest = results.front().test_digest;
  const std::size_t n_test = results.front().metrics.n_test;
  for (const SeedResult& r : results) {
    if (r.test_digest != digest || r.metrics.n_test != n_test)
      throw AggregationError(
          "compare_report: seed " + std::to_string(r.metrics.seed) +
          " for estimator " + r.metrics.estimator +
          " was evaluated on a different test set");
  }

  std::vector<std::string> order;
  std::map<std::string, std::vector<const SeedResult*>> by_method;
  for (const SeedResult& r : results) {
    auto [it, inserted] = by_method.try_emplace(r.metrics.estimator);
    if (inserted) order.push_back(r.metrics.estimator);
    it->second.push_back(&r);
  }

  std::vector<MethodAggregate> aggregates;
  aggregates.reserve(order.size());
  for (const std::string& name : order) {
    const auto& group = by_method[name];
    MethodAggregate agg;
    agg.method = name;
    agg.n_seeds = static_cast<int>(group.size());
    double frac_sum = 0.0;
    int frac_count = 0;
    std::vector<double> acc_sums(n_test, 0.0);
    for (const SeedResult* r : group) {
      agg.mean_aac += r->metrics.aac;
      agg.mean_acc_at_10pct += r->metrics.acc_at_10pct_discard;
      if (r->metrics.fraction_to_99pct) {
        frac_sum += *r->metrics.fraction_to_99pct;
        ++frac_count;
      } else {
        ++agg.unreachable_count;
      }
      for (std::size_t m = 0; m < n_test; ++m)
        acc_sums[m] += r->curve.points[m].accuracy;
    }
    const double inv = 1.0 / static_cast<double>(group.size());
    agg.mean_aac *= inv;
    agg.mean_acc_at_10pct *= inv;
    if (frac_count > 0) agg.mean_fraction_to_99pct = frac_sum / frac_count;
    agg.mean_curve.reserve(n_test);
    for (std::size_t m = 0; m < n_test; ++m)
      agg.mean_curve.push_back(
          {static_cast<double>(m) / static_cast<double>(n_test),
           acc_sums[m] * inv});
    aggregates.push_back(std::move(agg));
  }
  return aggregates;
}

// --- plot and table emission -------------------------------------------------

inline void write_curve_csv(std::ostream& os, std::span<const CurvePoint> points) {
  os << "rejected_fraction,accuracy\n";
  char buf[64];
  for (const CurvePoint& p : points) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g", p.rejected_fraction,
                  p.accuracy);
    os << buf << '\n';
  }
}

namespace detail {

inline const char* curve_color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                  "#bcbd22", "#17becf"};
  return palette[i % (sizeof(palette) / sizeof(palette[0]))];
}

inline std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace detail

// Overlaid mean accuracy-rejection curves as a standalone SVG.
inline void write_curves_svg(std::ostream& os,
                             std::span<const MethodAggregate> aggregates) {
  const double width = 860, height = 540;
  const double left = 70, right = 250, top = 30, bottom = 60;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  double y_min = 1.0;
  for (const MethodAggregate& agg : aggregates)
    for (const CurvePoint& p : agg.mean_curve)
      y_min = std::min(y_min, p.accuracy);
  y_min = std::max(0.0, std::floor(y_min * 20.0) / 20.0 - 0.05);
  const double y_max = 1.0;

  auto sx = [&](double frac) { return left + frac * plot_w; };
  auto sy = [&](double acc) {
    return top + (y_max - acc) / (y_max - y_min) * plot_h;
  };
  using detail::fmt2;

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << ' '
     << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // gridlines and ticks
  for (int i = 0; i <= 10; ++i) {
    const double frac = i / 10.0;
    os << "<line x1=\"" << fmt2(sx(frac)) << "\" y1=\"" << fmt2(top)
       << "\" x2=\"" << fmt2(sx(frac)) << "\" y2=\"" << fmt2(top + plot_h)
       << "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    os << "<text x=\"" << fmt2(sx(frac)) << "\" y=\""
       << fmt2(top + plot_h + 18) << "\" font-size=\"11\" text-anchor=\"middle\""
       << " font-family=\"sans-serif\">" << fmt2(frac) << "</text>\n";
  }
  for (int i = 0; i <= 8; ++i) {
    const double acc = y_min + (y_max - y_min) * i / 8.0;
    os << "<line x1=\"" << fmt2(left) << "\" y1=\"" << fmt2(sy(acc))
       << "\" x2=\"" << fmt2(left + plot_w) << "\" y2=\"" << fmt2(sy(acc))
       << "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    os << "<text x=\"" << fmt2(left - 8) << "\" y=\"" << fmt2(sy(acc) + 4)
       << "\" font-size=\"11\" text-anchor=\"end\""
       << " font-family=\"sans-serif\">" << fmt2(acc) << "</text>\n";
  }
  os << "<rect x=\"" << fmt2(left) << "\" y=\"" << fmt2(top) << "\" width=\""
     << fmt2(plot_w) << "\" height=\"" << fmt2(plot_h)
     << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";

  // curves
  for (std::size_t i = 0; i < aggregates.size(); ++i) {
    os << "<polyline fill=\"none\" stroke=\"" << detail::curve_color(i)
       << "\" stroke-width=\"1.5\" points=\"";
    for (const CurvePoint& p : aggregates[i].mean_curve)
      os << fmt2(sx(p.rejected_fraction)) << ',' << fmt2(sy(p.accuracy)) << ' ';
    os << "\"/>\n";
  }

  // legend
  for (std::size_t i = 0; i < aggregates.size(); ++i) {
    const double ly = top + 16 + 18 * static_cast<double>(i);
    os << "<line x1=\"" << fmt2(left + plot_w + 16) << "\" y1=\"" << fmt2(ly)
       << "\" x2=\"" << fmt2(left + plot_w + 44) << "\" y2=\"" << fmt2(ly)
       << "\" stroke=\"" << detail::curve_color(i)
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << fmt2(left + plot_w + 50) << "\" y=\"" << fmt2(ly + 4)
       << "\" font-size=\"12\" font-family=\"sans-serif\">"
       << aggregates[i].method << "</text>\n";
  }

  // axis labels
  os << "<text x=\"" << fmt2(left + plot_w / 2) << "\" y=\""
     << fmt2(height - 16)
     << "\" font-size=\"13\" text-anchor=\"middle\" font-family=\"sans-serif\">"
     << "Fraction of most-uncertain test examples rejected</text>\n";
  os << "<text x=\"18\" y=\"" << fmt2(top + plot_h / 2)
     << "\" font-size=\"13\" text-anchor=\"middle\" font-family=\"sans-serif\""
     << " transform=\"rotate(-90 18 " << fmt2(top + plot_h / 2) << ")\">"
     << "Accuracy of retained examples</text>\n";
  os << "</svg>\n";
}

}  // namespace eauq
