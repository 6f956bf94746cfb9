#include "ccrr/loss.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ccrr {

namespace {

void check_inputs(double s, int b) {
  if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("pseudo_label: similarity outside [0, 1]: " + std::to_string(s));
  if (b != 0 && b != 1) throw std::invalid_argument("pseudo_label: label must be 0 or 1");
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

double pseudo_label(double s, int b) {
  check_inputs(s, b);
  return std::abs(static_cast<double>(1 - b) - s);
}

double pseudo_label_casewise(double s, int b) {
  check_inputs(s, b);
  return b == 1 ? s : 1.0 - s;
}

Vector pseudo_labels(std::span<const double> s, std::span<const int> labels) {
  if (s.size() != labels.size()) throw std::invalid_argument("pseudo_labels: length mismatch");
  Vector out(static_cast<Eigen::Index>(s.size()));
  for (std::size_t k = 0; k < s.size(); ++k) out[static_cast<Eigen::Index>(k)] = pseudo_label(s[k], labels[k]);
  return out;
}

double confidence_loss(const Vector& c_app, const Vector& c_gait, const Vector& target_app,
                       const Vector& target_gait, Vector* d_c_app, Vector* d_c_gait) {
  if (c_app.size() != target_app.size() || c_gait.size() != target_gait.size() || c_app.size() != c_gait.size()) {
    throw std::invalid_argument("confidence_loss: length mismatch");
  }
  const Vector r_app = c_app - target_app;
  const Vector r_gait = c_gait - target_gait;
  if (d_c_app) *d_c_app = r_app.unaryExpr(&sign);
  if (d_c_gait) *d_c_gait = r_gait.unaryExpr(&sign);
  return r_app.cwiseAbs().sum() + r_gait.cwiseAbs().sum();
}

double triplet_loss(const Vector& s, std::span<const int> labels, double epsilon, Vector* d_s) {
  if (static_cast<std::size_t>(s.size()) != labels.size()) throw std::invalid_argument("triplet_loss: length mismatch");
  if (d_s) *d_s = Vector::Zero(s.size());
  std::vector<Eigen::Index> pos, neg;
  for (std::size_t k = 0; k < labels.size(); ++k) (labels[k] ? pos : neg).push_back(static_cast<Eigen::Index>(k));
  if (pos.empty() || neg.empty()) return 0.0;

  double loss = 0.0;
  for (Eigen::Index p : pos) {
    for (Eigen::Index n : neg) {
      const double term = epsilon - (s[p] - s[n]);
      if (term > 0.0) {
        loss += term;
        if (d_s) {
          (*d_s)[p] -= 1.0;
          (*d_s)[n] += 1.0;
        }
      }
    }
  }
  return loss;
}

LossBreakdown total_loss(const CandidateSet& cand, const Vector& s, const Vector& c_app, const Vector& c_gait,
                         double epsilon) {
  LossBreakdown out;
  out.target_app = pseudo_labels(cand.s_app, cand.labels);
  out.target_gait = pseudo_labels(cand.s_gait, cand.labels);
  out.confidence = confidence_loss(c_app, c_gait, out.target_app, out.target_gait, &out.d_c_app, &out.d_c_gait);
  out.ranking_skipped = cand.num_pos == 0 || cand.num_neg == 0;
  out.ranking = triplet_loss(s, cand.labels, epsilon, &out.d_s);
  out.total = out.confidence + out.ranking;
  return out;
}

}  // namespace ccrr
