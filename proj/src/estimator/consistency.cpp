// SPDX-License-Identifier: Apache-2.0
#include <boost/math/distributions/chi_squared.hpp>
#include <Eigen/Dense>

#include "vil/error.hpp"
#include "vil/estimator.hpp"

namespace vil::est {

double nees(const Eigen::VectorXd& error, const Eigen::MatrixXd& cov) {
  if (error.size() != cov.rows() || cov.rows() != cov.cols()) throw InvalidArgument("nees: dimension mismatch");
  if (error.isZero(0.0)) return 0.0;
  return error.dot(cov.ldlt().solve(error));
}

ChiSquareBounds chi_square_bounds(int dof, int samples, double confidence) {
  if (dof <= 0 || samples <= 0 || !(confidence > 0.0 && confidence < 1.0)) {
    throw InvalidArgument("chi_square_bounds: bad arguments");
  }
  const boost::math::chi_squared dist(static_cast<double>(dof) * samples);
  const double tail = 0.5 * (1.0 - confidence);
  return {boost::math::quantile(dist, tail) / samples, boost::math::quantile(dist, 1.0 - tail) / samples};
}

ConsistencyReport consistency_stats(std::span<const ConsistencyEpoch> epochs, double confidence) {
  ConsistencyReport rep;
  if (epochs.empty()) return rep;
  rep.dof = static_cast<int>(epochs.front().error.size());
  rep.epoch_bounds = chi_square_bounds(rep.dof, 1, confidence);
  rep.mean_bounds = chi_square_bounds(rep.dof, static_cast<int>(epochs.size()), confidence);
  int inside = 0;
  double sum = 0.0;
  for (const auto& e : epochs) {
    const double v = nees(e.error, e.cov);
    rep.nees.push_back(v);
    sum += v;
    if (v >= rep.epoch_bounds.lower && v <= rep.epoch_bounds.upper) ++inside;
  }
  rep.mean_nees = sum / static_cast<double>(epochs.size());
  rep.fraction_inside = static_cast<double>(inside) / static_cast<double>(epochs.size());
  return rep;
}

}  // namespace vil::est
