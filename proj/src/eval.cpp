#include "epr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace epr {

namespace {

// Seconds per tick at the default 500000 us/beat, 384 ticks/beat.
constexpr double kSecondsPerTick = 0.5 / 384.0;

struct Accum {
  double weighted_error = 0.0;  // sum of per-note relative/alpha errors
  int64_t count = 0;            // unmasked notes
  double abs_target = 0.0;      // sum |target| over unmasked nonzero targets
  int64_t nonzero = 0;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

std::string EvalReport::to_text() const {
  std::ostringstream out;
  out << "Features                 Loss      Average Error\n";
  for (const auto& r : rows) {
    out << r.feature;
    for (size_t i = r.feature.size(); i < 25; ++i) out << ' ';
    std::string err = "+-" + fmt(r.average_error);
    if (r.unit == "s") err += "s";
    out << fmt(r.loss) << "    " << err << "\n";
  }
  out << "notes: " << note_count << "\n";
  return out.str();
}

std::string EvalReport::to_records() const {
  std::ostringstream out;
  for (const auto& r : rows)
    out << r.feature << '\t' << fmt(r.loss) << '\t' << fmt(r.average_error)
        << '\t' << r.unit << '\n';
  return out.str();
}

EvalReport evaluate(const ModelParams<float>& params,
                    const std::vector<TrainExample>& test_set,
                    double alpha) {
  if (test_set.empty())
    throw std::invalid_argument("evaluate: empty test set");
  Accum acc[3];
  for (const auto& ex : test_set) {
    Predictions<float> pred = forward(params, ex.io, ex.pianist);
    const std::vector<float>* preds[3] = {&pred.velocity.data(),
                                          &pred.dd.data(), &pred.ioi.data()};
    for (size_t i = 0; i < ex.io.window(); ++i) {
      if (!ex.io.mask[i]) continue;
      for (int f = 0; f < 3; ++f) {
        double y = (*preds[f])[i];
        double t = ex.io.targets[i][f];
        acc[f].count++;
        acc[f].weighted_error +=
            t != 0.0 ? std::abs(y - t) / std::abs(t) : alpha * std::abs(y);
        if (t != 0.0) {
          acc[f].abs_target += std::abs(t);
          acc[f].nonzero++;
        }
      }
    }
  }

  EvalReport report;
  report.note_count = acc[0].count;
  const char* names[3] = {"Velocity", "Duration Deviation",
                          "Inter-Onset Interval"};
  for (int f = 0; f < 3; ++f) {
    FeatureReport row;
    row.feature = names[f];
    row.loss = acc[f].weighted_error / double(acc[f].count);
    double mean_abs =
        acc[f].nonzero > 0 ? acc[f].abs_target / double(acc[f].nonzero) : 0.0;
    double err_tokens = row.loss * mean_abs;
    if (f == 0) {
      row.average_error = err_tokens * 2.0;  // width-2 velocity bins
      row.unit = "velocity";
    } else {
      row.average_error = err_tokens * kSecondsPerTick;
      row.unit = "s";
    }
    report.rows.push_back(row);
  }
  return report;
}

KdeCurve velocity_kde(const std::vector<double>& velocities,
                      const std::string& label) {
  size_t n = velocities.size();
  if (n < 2)
    throw std::invalid_argument("velocity_kde: need at least 2 samples");
  double mean = 0.0;
  for (double v : velocities) mean += v;
  mean /= double(n);
  double var = 0.0;
  for (double v : velocities) var += (v - mean) * (v - mean);
  var /= double(n);
  double sigma = std::sqrt(var);
  double bw = 1.06 * sigma * std::pow(double(n), -0.2);
  bw = std::max(bw, 0.5);

  KdeCurve curve;
  curve.label = label;
  curve.bandwidth = bw;
  for (double x = 0.0; x <= 127.0 + 1e-9; x += 0.5) curve.grid.push_back(x);
  curve.density.resize(curve.grid.size(), 0.0);
  double norm = 1.0 / (double(n) * bw * std::sqrt(2.0 * M_PI));
  for (size_t gi = 0; gi < curve.grid.size(); ++gi) {
    double s = 0.0;
    for (double v : velocities) {
      double z = (curve.grid[gi] - v) / bw;
      s += std::exp(-0.5 * z * z);
    }
    curve.density[gi] = s * norm;
  }
  // Renormalize so the on-grid trapezoidal integral is 1 even when the
  // kernels spill outside [0, 127].
  double integral = 0.0;
  for (size_t i = 0; i + 1 < curve.grid.size(); ++i)
    integral += 0.5 * (curve.density[i] + curve.density[i + 1]) *
                (curve.grid[i + 1] - curve.grid[i]);
  if (integral > 0)
    for (auto& d : curve.density) d /= integral;
  return curve;
}

double distribution_overlap(const KdeCurve& a, const KdeCurve& b) {
  if (a.grid.size() != b.grid.size())
    throw std::invalid_argument("distribution_overlap: grid mismatch");
  for (size_t i = 0; i < a.grid.size(); ++i)
    if (a.grid[i] != b.grid[i])
      throw std::invalid_argument("distribution_overlap: grid mismatch");
  double overlap = 0.0;
  for (size_t i = 0; i + 1 < a.grid.size(); ++i) {
    double lo = std::min(a.density[i], b.density[i]);
    double hi = std::min(a.density[i + 1], b.density[i + 1]);
    overlap += 0.5 * (lo + hi) * (a.grid[i + 1] - a.grid[i]);
  }
  return std::clamp(overlap, 0.0, 1.0);
}

namespace {

std::vector<double> standardize_and_smooth(const std::vector<double>& x,
                                           int window, bool* zero_variance) {
  size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= double(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= double(n);
  *zero_variance = var == 0.0;
  std::vector<double> z(n, 0.0);
  if (!*zero_variance) {
    double sd = std::sqrt(var);
    for (size_t i = 0; i < n; ++i) z[i] = (x[i] - mean) / sd;
  }
  std::vector<double> smooth(n, 0.0);
  int half = window / 2;
  for (size_t i = 0; i < n; ++i) {
    int64_t lo = std::max<int64_t>(0, int64_t(i) - half);
    int64_t hi = std::min<int64_t>(int64_t(n) - 1, int64_t(i) + half);
    double s = 0.0;
    for (int64_t j = lo; j <= hi; ++j) s += z[j];
    smooth[i] = s / double(hi - lo + 1);
  }
  return smooth;
}

}  // namespace

ExpressionCurves expression_curves(const TokenSequence& seq, int window) {
  if (window < 1 || window % 2 == 0)
    throw std::invalid_argument("expression_curves: window must be odd");
  if (int(seq.tokens.size()) <= window)
    throw std::invalid_argument(
        "expression_curves: sequence shorter than window");
  std::vector<double> vel, dur;
  vel.reserve(seq.tokens.size());
  dur.reserve(seq.tokens.size());
  for (const auto& t : seq.tokens) {
    vel.push_back(double(t.velocity_tok * 2 + 1));
    dur.push_back(double(t.duration_tok));
  }
  ExpressionCurves out;
  out.velocity =
      standardize_and_smooth(vel, window, &out.velocity_zero_variance);
  out.duration =
      standardize_and_smooth(dur, window, &out.duration_zero_variance);
  return out;
}

std::string curve_to_text(const std::vector<double>& x,
                          const std::vector<double>& y) {
  if (x.size() != y.size())
    throw std::invalid_argument("curve_to_text: length mismatch");
  std::ostringstream out;
  char buf[80];
  for (size_t i = 0; i < x.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.6g %.9g\n", x[i], y[i]);
    out << buf;
  }
  return out.str();
}

}  // namespace epr
