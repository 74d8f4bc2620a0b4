#pragma once

// Model-based dead reckoning: step detection on the specific-force magnitude,
// Weinberg step length, accelerometer-only Madgwick heading and the recursive
// 2D position update.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ddr/eval_io.hpp"
#include "ddr/nav_core.hpp"
#include "ddr/session.hpp"

namespace ddr {

struct StepDetectorConfig {
  double smoothing_window = 0.10;   // s
  double min_step_interval = 0.25;  // s
  double peak_threshold_mult = 1.5;
  // 0: mean/std over the whole trajectory. > 0: trailing window of this many
  // seconds, for online use.
  double stats_window = 0.0;

  void validate() const {
    if (!(smoothing_window > 0) || !(min_step_interval > 0) || !(peak_threshold_mult > 0)) {
      throw Error(ErrorCode::InvalidArgument, "step detector parameters must be positive");
    }
    if (!(smoothing_window < min_step_interval)) {
      throw Error(ErrorCode::InvalidArgument, "smoothing_window must be shorter than min_step_interval");
    }
    if (stats_window < 0) throw Error(ErrorCode::InvalidArgument, "stats_window must be >= 0");
  }
};

inline constexpr double kDogMinStepInterval = 0.25;
inline constexpr double kLeggedRobotMinStepInterval = 0.40;
inline constexpr double kDefaultMadgwickBeta = 0.1;

struct WeinbergGain {
  double k_d = 1.0;
};

struct StepEvent {
  double t_peak = 0;
  double f_max = 0, f_min = 0;  // m/s^2 over the step interval
  double step_length = 0;       // m
  double heading = 0;           // rad, North-East plane
};

struct MagnitudeStats {
  double mean = 0;
  double sigma = 0;
};

inline double specific_force_magnitude(const ImuSample& s) { return s.f_b.norm(); }

inline std::vector<double> specific_force_magnitudes(std::span<const ImuSample> imu) {
  std::vector<double> out;
  out.reserve(imu.size());
  for (const auto& s : imu) out.push_back(specific_force_magnitude(s));
  return out;
}

/// Mean and population standard deviation of the de-meaned magnitude.
inline MagnitudeStats magnitude_stats(std::span<const double> mags) {
  if (mags.empty()) throw Error(ErrorCode::EmptyStream, "no magnitudes");
  const double n = static_cast<double>(mags.size());
  double mean = 0;
  for (double m : mags) mean += m;
  mean /= n;
  double var = 0;
  for (double m : mags) var += (m - mean) * (m - mean);
  return {mean, std::sqrt(var / n)};
}

/// Odd sample count of the centered smoothing window.
inline std::size_t smoothing_length(double window_s, double fs) {
  auto len = static_cast<std::size_t>(std::max(1L, std::lround(window_s * fs)));
  if (len % 2 == 0) ++len;
  return len;
}

inline std::vector<double> smooth_samples(std::span<const double> mags, std::size_t len) {
  const std::size_t n = mags.size();
  const std::size_t half = len / 2;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, i + half + 1);
    double sum = 0.0;
    for (std::size_t j = lo; j < hi; ++j) sum += mags[j];
    out[i] = sum / static_cast<double>(hi - lo);
  }
  return out;
}

/// Centered moving average; windows shrink at the edges.
inline std::vector<double> smooth(std::span<const double> mags, double window_s, double fs) {
  if (!(window_s * fs >= 1.0)) throw Error(ErrorCode::InvalidArgument, "smoothing window shorter than one sample");
  return smooth_samples(mags, smoothing_length(window_s, fs));
}

/// Per-sample peak threshold: mean + mult * sigma.
inline std::vector<double> peak_thresholds(std::span<const double> mags, double fs, const StepDetectorConfig& cfg) {
  const std::size_t n = mags.size();
  if (cfg.stats_window <= 0.0) {
    const auto st = magnitude_stats(mags);
    return std::vector<double>(n, st.mean + cfg.peak_threshold_mult * st.sigma);
  }
  const auto len = static_cast<std::size_t>(std::max(2L, std::lround(cfg.stats_window * fs)));
  std::vector<double> out(n);
  double sum = 0, sum_sq = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sum += mags[i];
    sum_sq += mags[i] * mags[i];
    if (i >= len) {
      sum -= mags[i - len];
      sum_sq -= mags[i - len] * mags[i - len];
    }
    const double cnt = static_cast<double>(std::min(i + 1, len));
    const double mean = sum / cnt;
    const double var = std::max(0.0, sum_sq / cnt - mean * mean);
    out[i] = mean + cfg.peak_threshold_mult * std::sqrt(var);
  }
  return out;
}

/// Indices of accepted peaks in a smoothed magnitude sequence: strict local
/// maxima (first sample of a plateau) above the threshold, each at least
/// min_step_interval after the previously accepted one.
inline std::vector<std::size_t> detect_steps(std::span<const double> mags, double fs, const StepDetectorConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> peaks;
  if (mags.size() < 3) return peaks;
  const auto gamma = peak_thresholds(mags, fs, cfg);
  // a spread at rounding level is a flat signal, not a gait
  const auto st = magnitude_stats(mags);
  if (!(st.sigma > 1e-9 * std::max(1.0, std::abs(st.mean)))) return peaks;
  const double min_gap = cfg.min_step_interval * fs - 1e-9;
  for (std::size_t i = 1; i + 1 < mags.size(); ++i) {
    if (!(mags[i] > mags[i - 1] && mags[i] >= mags[i + 1] && mags[i] > gamma[i])) continue;
    if (!peaks.empty() && static_cast<double>(i - peaks.back()) < min_gap) continue;
    peaks.push_back(i);
  }
  return peaks;
}

/// k * (f_max - f_min)^(1/4), with a negative difference clamped to zero.
inline double weinberg_step_length(double f_max, double f_min, WeinbergGain k) {
  return k.k_d * std::pow(std::max(f_max - f_min, 0.0), 0.25);
}

// ---------------------------------------------------------------------------
// Madgwick (accelerometer-only)

struct MadgwickState {
  Quaternion q;
  double beta = kDefaultMadgwickBeta;
};

/// Gradient of 0.5 * |R(q)^T z - a_hat|^2 with respect to (w, x, y, z), where
/// a_hat is the normalized specific force.
inline Quaternion madgwick_gradient(const Quaternion& q, const Vec3& a_hat) {
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  const double f1 = 2 * (x * z - w * y) - a_hat.x();
  const double f2 = 2 * (w * x + y * z) - a_hat.y();
  const double f3 = 1 - 2 * (x * x + y * y) - a_hat.z();
  return {-2 * y * f1 + 2 * x * f2,
          2 * z * f1 + 2 * w * f2 - 4 * x * f3,
          -2 * w * f1 + 2 * z * f2 - 4 * y * f3,
          2 * x * f1 + 2 * y * f2};
}

inline MadgwickState madgwick_update(const MadgwickState& state, const ImuSample& sample, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "dt must be positive");
  Quaternion q_dot = quat_mul(state.q, pure_quaternion(sample.w_b)) * 0.5;

  const double a_norm = sample.f_b.norm();
  if (a_norm > 0.0 && state.beta > 0.0) {
    const Quaternion grad = madgwick_gradient(state.q, sample.f_b / a_norm);
    const double g_norm = grad.norm();
    if (g_norm > 0.0) q_dot = q_dot - grad * (state.beta / g_norm);
  }
  MadgwickState out = state;
  out.q = (state.q + q_dot * dt).normalized();
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

/// Applies the per-step position update from p0. Returns p0 followed by one
/// point per step.
inline std::vector<Vec2> integrate_steps(std::span<const StepEvent> steps, const Vec2& p0) {
  std::vector<Vec2> out{p0};
  out.reserve(steps.size() + 1);
  Vec2 p = p0;
  for (const auto& s : steps) {
    p += s.step_length * Vec2(std::cos(s.heading), std::sin(s.heading));
    out.push_back(p);
  }
  return out;
}

/// (f_max, f_min) of the smoothed magnitude over each step interval: from the
/// sample after the previous accepted peak up to and including this peak.
inline std::vector<std::pair<double, double>> step_force_extrema(std::span<const double> mags,
                                                                  std::span<const std::size_t> peaks) {
  std::vector<std::pair<double, double>> out;
  out.reserve(peaks.size());
  std::size_t start = 0;
  for (const auto p : peaks) {
    double hi = -std::numeric_limits<double>::infinity();
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t i = start; i <= p; ++i) {
      hi = std::max(hi, mags[i]);
      lo = std::min(lo, mags[i]);
    }
    out.emplace_back(hi, lo);
    start = p + 1;
  }
  return out;
}

struct MbDdrOptions {
  StepDetectorConfig detector;
  WeinbergGain gain;
  double beta = kDefaultMadgwickBeta;
  Vec2 p0 = Vec2::Zero();
  Quaternion initial_q;
  double psi0 = 0.0;  // added to the Madgwick heading, rad
};

struct MbDdrResult {
  TrajectoryEstimate trajectory;  // p0 then one point per step
  std::vector<StepEvent> steps;
  std::vector<std::string> warnings;
};

/// Step-detection pipeline over a bias-corrected session.
inline MbDdrResult run_mb_ddr(const SessionDataset& session, const MbDdrOptions& opt) {
  if (session.imu.empty()) throw Error(ErrorCode::EmptyStream, "session has no IMU samples");
  if (!(session.fs > 0)) throw Error(ErrorCode::InvalidArgument, "session rate must be positive");
  if (!(opt.gain.k_d > 0)) throw Error(ErrorCode::InvalidArgument, "Weinberg gain must be positive");
  if (opt.beta < 0) throw Error(ErrorCode::InvalidArgument, "beta must be >= 0");
  opt.detector.validate();

  const auto& imu = session.imu;
  const auto mags = smooth(specific_force_magnitudes(imu), opt.detector.smoothing_window, session.fs);
  const auto peaks = detect_steps(mags, session.fs, opt.detector);
  const auto extrema = step_force_extrema(mags, peaks);

  MbDdrResult out;
  out.trajectory.source = "mb-ddr";
  MadgwickState filter{opt.initial_q.normalized(), opt.beta};
  const double initial_heading = wrap_angle(heading_from_yaw(yaw_from_quat(filter.q)) + opt.psi0);

  std::size_t next = 0;
  for (std::size_t i = 0; i < imu.size() && next < peaks.size(); ++i) {
    filter = madgwick_update(filter, imu[i], sample_dt(imu, i, session.fs));
    if (i != peaks[next]) continue;
    StepEvent ev;
    ev.t_peak = imu[i].t;
    ev.f_max = extrema[next].first;
    ev.f_min = extrema[next].second;
    ev.step_length = weinberg_step_length(ev.f_max, ev.f_min, opt.gain);
    ev.heading = wrap_angle(heading_from_yaw(yaw_from_quat(filter.q)) + opt.psi0);
    out.steps.push_back(ev);
    ++next;
  }

  auto& traj = out.trajectory;
  traj.positions = integrate_steps(out.steps, opt.p0);
  traj.epochs.push_back(imu.front().t);
  traj.headings.push_back(initial_heading);
  for (const auto& s : out.steps) {
    traj.epochs.push_back(s.t_peak);
    traj.headings.push_back(s.heading);
  }
  if (out.steps.empty()) out.warnings.push_back("no steps detected; trajectory is the initial point only");
  return out;
}

/// Gain that makes the summed Weinberg step lengths equal the ground-truth
/// path length.
inline WeinbergGain calibrate_weinberg_gain(const SessionDataset& session, const StepDetectorConfig& cfg) {
  if (!session.has_ground_truth()) throw Error(ErrorCode::CalibrationFailed, "session has no ground truth");
  cfg.validate();
  const auto mags = smooth(specific_force_magnitudes(session.imu), cfg.smoothing_window, session.fs);
  const auto peaks = detect_steps(mags, session.fs, cfg);
  if (peaks.empty()) throw Error(ErrorCode::CalibrationFailed, "no steps detected in calibration session");
  double sum = 0.0;
  for (const auto& [hi, lo] : step_force_extrema(mags, peaks)) sum += std::pow(std::max(hi - lo, 0.0), 0.25);
  const double gt_len = path_length(session.gt_track.p);
  if (!(sum > 0.0) || !(gt_len > 0.0)) {
    throw Error(ErrorCode::CalibrationFailed, "degenerate step amplitudes or ground-truth length");
  }
  return {gt_len / sum};
}

/// Zero-order hold of a step-indexed path onto `epochs` (p0 before the first step).
inline TrajectoryEstimate resample_zoh(const TrajectoryEstimate& est, const std::vector<double>& epochs) {
  TrajectoryEstimate out;
  out.source = est.source;
  for (const double t : epochs) {
    const auto it = std::upper_bound(est.epochs.begin(), est.epochs.end(), t);
    const std::size_t idx = it == est.epochs.begin() ? 0 : static_cast<std::size_t>(it - est.epochs.begin()) - 1;
    out.epochs.push_back(t);
    out.positions.push_back(est.positions[idx]);
    if (!est.headings.empty()) out.headings.push_back(est.headings[idx]);
  }
  return out;
}

/// Metrics for a step-indexed path: PRMSE on the path held at each ground-truth
/// epoch from the first estimate epoch on, ADE on the step path itself.
inline MetricReport evaluate_step_path(const TrajectoryEstimate& est, const GroundTruthTrack& track) {
  if (est.epochs.empty()) throw Error(ErrorCode::NoOverlap, "estimate has no epochs");
  std::vector<double> epochs;
  for (const double t : track.t) {
    if (t >= est.epochs.front()) epochs.push_back(t);
  }
  if (epochs.empty()) throw Error(ErrorCode::NoOverlap, "no ground-truth epochs after the estimate start");
  const auto held = resample_zoh(est, epochs);
  MetricReport r;
  r.gt_length_m = path_length(track.p);
  if (!(r.gt_length_m > 0.0)) throw Error(ErrorCode::DegeneratePath, "ground-truth path has zero length");
  r.prmse_m = prmse(held, track);
  r.ade_m = ade(est, track);
  r.est_length_m = path_length(est.positions);
  r.prmse_pct = 100.0 * r.prmse_m / r.gt_length_m;
  r.ade_pct = 100.0 * r.ade_m / r.gt_length_m;
  r.n_epochs = held.epochs.size();
  r.n_clamped = sync_gt_to_epochs(track, held.epochs).n_clamped;
  return r;
}

inline std::string step_events_csv(std::span<const StepEvent> steps) {
  std::string out = "t_peak,f_max,f_min,step_length,heading_rad\n";
  for (const auto& s : steps) {
    out += format_g(s.t_peak) + ',' + format_g(s.f_max) + ',' + format_g(s.f_min) + ',' + format_g(s.step_length) +
           ',' + format_g(s.heading) + '\n';
  }
  return out;
}

}  // namespace ddr
