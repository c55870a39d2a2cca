// Quantitative evaluation: per-feature test losses with unit-converted
// average errors, kernel-density velocity distributions, overlap of
// densities, and standardized/smoothed expression curves.

#pragma once

#include "epr/features.hpp"
#include "epr/model.hpp"
#include "epr/training.hpp"

#include <string>
#include <vector>

namespace epr {

struct FeatureReport {
  std::string feature;
  double loss = 0.0;
  double average_error = 0.0;
  std::string unit;  // "velocity" | "s"
};

struct EvalReport {
  std::vector<FeatureReport> rows;  // Velocity, Duration Deviation, IOI
  int64_t note_count = 0;

  std::string to_text() const;
  std::string to_records() const;  // machine-readable, one line per row
};

// Per-feature loss over all unmasked test notes; average error =
// loss x mean(|target|) over unmasked nonzero targets, converted to raw
// velocity steps (x2) or to seconds at the default 120 BPM tempo.
EvalReport evaluate(const ModelParams<float>& params,
                    const std::vector<TrainExample>& test_set,
                    double alpha = kLossAlpha);

struct KdeCurve {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;
  std::string label;
};

// Gaussian KDE over raw MIDI velocities on the fixed grid 0..127 step
// 0.5; Silverman bandwidth 1.06*sigma*n^(-1/5), floored at 0.5;
// normalized to unit trapezoidal integral.
KdeCurve velocity_kde(const std::vector<double>& velocities,
                      const std::string& label = "");

// Trapezoidal integral of min(a, b) over the shared grid.
double distribution_overlap(const KdeCurve& a, const KdeCurve& b);

struct ExpressionCurves {
  std::vector<double> velocity;
  std::vector<double> duration;
  bool velocity_zero_variance = false;
  bool duration_zero_variance = false;
};

// Z-score standardization per feature followed by centered moving-average
// smoothing (edges shrink the window).
ExpressionCurves expression_curves(const TokenSequence& seq, int window = 25);

// Two-column numeric dump for plotting.
std::string curve_to_text(const std::vector<double>& x,
                          const std::vector<double>& y);

}  // namespace epr
