#pragma once

/// \file loss.hpp
/// \brief Confidence pseudo-labels, confidence loss, triplet ranking loss.

#include <span>

#include "ccrr/data_model.hpp"
#include "ccrr/ranking.hpp"

namespace ccrr {

/// |(1 - b) - s|: s for a positive, 1 - s for a negative.
/// Throws std::invalid_argument for s outside [0, 1] or b not in {0, 1}.
double pseudo_label(double s, int b);

/// Casewise form of the same target, kept separate for cross-checking.
double pseudo_label_casewise(double s, int b);

Vector pseudo_labels(std::span<const double> s, std::span<const int> labels);

/// sum_k |target_app_k - c_app_k| + |target_gait_k - c_gait_k|.
/// Optional outputs receive the subgradient (0 at a zero residual).
double confidence_loss(const Vector& c_app, const Vector& c_gait, const Vector& target_app,
                       const Vector& target_gait, Vector* d_c_app = nullptr, Vector* d_c_gait = nullptr);

/// sum over positive/negative pairs of max(0, epsilon - (s_p - s_n)).
/// Returns 0 with a zero gradient when either class is empty.
double triplet_loss(const Vector& s, std::span<const int> labels, double epsilon, Vector* d_s = nullptr);

struct LossBreakdown {
  double confidence = 0.0;  // L_c
  double ranking = 0.0;     // L_r
  double total = 0.0;
  bool ranking_skipped = false;
  Vector target_app;
  Vector target_gait;
  // dL/d(outputs); targets are constants, so nothing flows to s_app/s_gait.
  Vector d_s;
  Vector d_c_app;
  Vector d_c_gait;
};

LossBreakdown total_loss(const CandidateSet& cand, const Vector& s, const Vector& c_app, const Vector& c_gait,
                         double epsilon);

}  // namespace ccrr
