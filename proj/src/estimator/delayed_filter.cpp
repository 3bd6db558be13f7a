// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include <fmt/format.h>

#include "vil/error.hpp"
#include "vil/estimator.hpp"

namespace vil::est {
namespace {

// Filter timestamps are sums of dt; captures this close to a slot boundary belong to it.
constexpr double kTimeTolerance = 1e-9;

}  // namespace

DelayedFilter::DelayedFilter(const FilterState& initial, const DelayedFilterConfig& cfg)
    : cfg_(cfg), current_prior_(initial), current_(initial), last_fix_time_(initial.timestamp) {
  if (!(cfg.window > 0.0)) throw InvalidArgument("filter window must be positive");
  if (!(cfg.inflation > 0.0)) throw InvalidArgument("measurement inflation must be positive");
}

void DelayedFilter::predict(const vehicle::ImuSample& imu, double dt) {
  FilterState next = est::predict(current_, imu, dt, cfg_.noise, cfg_.gravity);
  entries_.push_back({current_prior_, imu, dt});
  current_prior_ = next;
  current_ = std::move(next);
  last_rate_ = imu.gyro;
  prune();
}

void DelayedFilter::apply_slot(FilterState& s, double slot_start, double slot_end, bool last_slot) {
  for (const auto& a : applied_) {
    const double t = a.meas.capture_timestamp + kTimeTolerance;
    if (t < slot_start) continue;
    if (!last_slot && t >= slot_end) break;
    s = update_pose(s, a.meas, cfg_.inflation, &last_nis_);
  }
}

DelayedFilter::UpdateResult DelayedFilter::update_delayed(const PoseMeasurement& m) {
  const double now = current_.timestamp;
  const double t = m.capture_timestamp;
  const double ts = t + kTimeTolerance;
  const bool in_current_slot = ts >= now;
  if (!in_current_slot && (t < now - cfg_.window || entries_.empty() || ts < entries_.front().prior.timestamp)) {
    ++dropped_;
    fmt::print(stderr, "warning: pose measurement captured at {:.3f}s is outside the {:.3f}s buffer (now {:.3f}s); dropped\n",
               t, cfg_.window, now);
    return UpdateResult::dropped_stale;
  }

  const Applied entry{m, next_order_++};
  const auto pos = std::upper_bound(applied_.begin(), applied_.end(), entry, [](const Applied& a, const Applied& b) {
    return a.meas.capture_timestamp < b.meas.capture_timestamp ||
           (a.meas.capture_timestamp == b.meas.capture_timestamp && a.order < b.order);
  });
  applied_.insert(pos, entry);

  if (!in_current_slot) {
    // Last snapshot at or before the capture time.
    auto it = std::upper_bound(entries_.begin(), entries_.end(), ts,
                               [](double v, const Entry& e) { return v < e.prior.timestamp; });
    std::size_t k = static_cast<std::size_t>(std::distance(entries_.begin(), it)) - 1;
    FilterState s = entries_[k].prior;
    for (std::size_t j = k; j < entries_.size(); ++j) {
      if (j > k) entries_[j].prior = s;
      const double slot_end = j + 1 < entries_.size() ? entries_[j + 1].prior.timestamp : current_prior_.timestamp;
      apply_slot(s, entries_[j].prior.timestamp, slot_end, false);
      s = est::predict(s, entries_[j].imu, entries_[j].dt, cfg_.noise, cfg_.gravity);
    }
    current_prior_ = std::move(s);
  }
  current_ = current_prior_;
  apply_slot(current_, current_prior_.timestamp, 0.0, true);

  last_fix_time_ = std::max(last_fix_time_, t);
  outage_ = 0.0;
  degraded_ = false;
  return UpdateResult::applied;
}

void DelayedFilter::handle_no_fix(double now) {
  outage_ = std::max(0.0, now - last_fix_time_);
  degraded_ = outage_ > cfg_.outage_limit;
  ever_degraded_ = ever_degraded_ || degraded_;
}

StateVector DelayedFilter::state_vector() const {
  StateVector s;
  s.pose = {current_.nominal.position, current_.nominal.attitude};
  s.velocity = current_.nominal.velocity;
  s.angular_velocity = last_rate_ - current_.nominal.gyro_bias;
  s.timestamp = current_.timestamp;
  return s;
}

void DelayedFilter::prune() {
  const double horizon = current_.timestamp - cfg_.window;
  while (entries_.size() > 1 && entries_[1].prior.timestamp <= horizon) entries_.pop_front();
  if (entries_.empty()) return;
  const double oldest = entries_.front().prior.timestamp;
  auto keep = std::find_if(applied_.begin(), applied_.end(),
                           [&](const Applied& a) { return a.meas.capture_timestamp + kTimeTolerance >= oldest; });
  applied_.erase(applied_.begin(), keep);
}

}  // namespace vil::est
