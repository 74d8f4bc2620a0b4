#pragma once

#include <string>
#include <vector>

#include "ddr/nav_core.hpp"

namespace ddr {

/// Ground-truth positions in the local North-East plane.
struct GroundTruthTrack {
  std::vector<double> t;
  std::vector<Vec2> p;

  std::size_t size() const { return t.size(); }
  bool empty() const { return t.empty(); }
};

struct SessionMeta {
  std::string trajectory_id;
  std::string subject;
  std::size_t calibration_samples = kDefaultCalibrationSamples;
};

struct SessionDataset {
  std::vector<ImuSample> imu;
  GroundTruthTrack gt_track;
  double fs = 0.0;  // Hz
  SessionMeta meta;

  bool has_ground_truth() const { return gt_track.size() >= 2; }
};

/// Estimated 2D path. `headings` is either empty or parallel to `positions`.
struct TrajectoryEstimate {
  std::vector<double> epochs;
  std::vector<Vec2> positions;
  std::vector<double> headings;
  std::string source;

  std::size_t size() const { return epochs.size(); }
};

inline double path_length(const std::vector<Vec2>& pts) {
  double len = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) len += (pts[i] - pts[i - 1]).norm();
  return len;
}

/// Median sample interval turned into a rate; robust to the odd dropped sample.
inline double estimate_rate(const std::vector<ImuSample>& imu) {
  if (imu.size() < 2) throw Error(ErrorCode::StreamTooShort, "need two samples to estimate rate");
  std::vector<double> dts;
  dts.reserve(imu.size() - 1);
  for (std::size_t i = 1; i < imu.size(); ++i) dts.push_back(imu[i].t - imu[i - 1].t);
  auto mid = dts.begin() + static_cast<std::ptrdiff_t>(dts.size() / 2);
  std::nth_element(dts.begin(), mid, dts.end());
  return 1.0 / *mid;
}

/// Per-sample integration steps taken from the timestamps; the first sample
/// uses the nominal period.
inline double sample_dt(const std::vector<ImuSample>& imu, std::size_t i, double fs) {
  return i == 0 ? 1.0 / fs : imu[i].t - imu[i - 1].t;
}

}  // namespace ddr
