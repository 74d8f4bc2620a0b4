#pragma once

// Windowing, the two network-driven position integrators, and the strapdown
// baseline runner.

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ddr/nav_core.hpp"
#include "ddr/nn/models.hpp"
#include "ddr/session.hpp"

namespace ddr {

struct Window {
  nn::Tensor X;  // [6, w], rows fx fy fz wx wy wz
  double t_start = 0, t_end = 0;
  double dt_step = 0;  // stride / fs
};

/// Windows at offsets 0, stride, 2*stride, ...; a trailing partial window is
/// dropped.
inline std::vector<Window> make_windows(const SessionDataset& session, std::size_t w, std::size_t stride) {
  if (w == 0 || stride == 0) throw Error(ErrorCode::InvalidArgument, "window and stride must be >= 1");
  if (!(session.fs > 0)) throw Error(ErrorCode::InvalidArgument, "session rate must be positive");
  const auto& imu = session.imu;
  if (imu.size() < w) {
    throw Error(ErrorCode::StreamTooShort,
                std::to_string(imu.size()) + " samples, window needs " + std::to_string(w));
  }
  const std::size_t count = (imu.size() - w) / stride + 1;
  std::vector<Window> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t off = k * stride;
    Window win;
    win.X = nn::Tensor({nn::kInputChannels, w});
    for (std::size_t t = 0; t < w; ++t) {
      const auto& s = imu[off + t];
      for (int c = 0; c < 3; ++c) {
        win.X.at(static_cast<std::size_t>(c), t) = static_cast<float>(s.f_b[c]);
        win.X.at(static_cast<std::size_t>(c) + 3, t) = static_cast<float>(s.w_b[c]);
      }
    }
    win.t_start = imu[off].t;
    win.t_end = imu[off + w - 1].t;
    win.dt_step = static_cast<double>(stride) / session.fs;
    out.push_back(std::move(win));
  }
  return out;
}

/// p0 at the first window start, then one epoch per window end.
inline std::vector<double> window_epochs(std::span<const Window> windows) {
  std::vector<double> epochs;
  if (windows.empty()) return epochs;
  epochs.reserve(windows.size() + 1);
  epochs.push_back(windows.front().t_start);
  for (const auto& w : windows) epochs.push_back(w.t_end);
  return epochs;
}

/// p_{k+1} = p_k + dir_k * speed_k * dt_k, with `dirs` unit vectors.
inline std::vector<Vec2> integrate_velocity(std::span<const double> speeds, std::span<const Vec2> dirs,
                                            std::span<const double> dts, const Vec2& p0) {
  std::vector<Vec2> out{p0};
  out.reserve(speeds.size() + 1);
  Vec2 p = p0;
  for (std::size_t k = 0; k < speeds.size(); ++k) {
    p += dirs[k] * speeds[k] * dts[k];
    out.push_back(p);
  }
  return out;
}

/// psi_k = wrap(psi_{k-1} + dpsi_k); p_{k+1} = p_k + speed_k (cos psi_k, sin psi_k) dt_k.
/// Returns positions and the heading sequence (psi0 first).
inline std::pair<std::vector<Vec2>, std::vector<double>> integrate_heading(std::span<const double> speeds,
                                                                           std::span<const double> dpsi,
                                                                           std::span<const double> dts,
                                                                           const Vec2& p0, double psi0) {
  std::vector<Vec2> pos{p0};
  std::vector<double> psi{wrap_angle(psi0)};
  Vec2 p = p0;
  double heading = psi0;
  for (std::size_t k = 0; k < speeds.size(); ++k) {
    heading = wrap_angle(heading + dpsi[k]);
    p += speeds[k] * Vec2(std::cos(heading), std::sin(heading)) * dts[k];
    pos.push_back(p);
    psi.push_back(heading);
  }
  return {std::move(pos), std::move(psi)};
}

namespace detail {
inline void require_arch(const nn::ModelBundle& b, nn::ArchId arch, const char* role) {
  if (b.arch != arch) {
    throw Error(ErrorCode::UnsupportedArch, std::string(role) + " must be " + std::string(nn::to_string(arch)) +
                                                ", got " + std::string(nn::to_string(b.arch)));
  }
}

// Networks consume one second of data.
inline void require_one_second_window(const nn::ModelBundle& b, double fs, const char* role) {
  if (std::abs(static_cast<double>(b.input_window) - fs) > 1.0) {
    throw Error(ErrorCode::ShapeMismatch, std::string(role) + " window of " + std::to_string(b.input_window) +
                                              " samples does not span one second at " + std::to_string(fs) + " Hz");
  }
}

/// Speeds are magnitudes; negative regressions are clamped to zero.
inline double speed_of(const nn::ModelBundle& vel, const Window& w) {
  return std::max(0.0, nn::resnet1d_forward(vel, w.X).scalar());
}
}  // namespace detail

struct DlOptions {
  std::size_t stride = 0;  // 0: non-overlapping (stride = window)
  Vec2 p0 = Vec2::Zero();
};

/// Speed and direction networks, integrated window by window.
inline TrajectoryEstimate run_dl1(const SessionDataset& session, const nn::ModelBundle& vel_model,
                                  const nn::ModelBundle& dir_model, const DlOptions& opt = {}) {
  detail::require_arch(vel_model, nn::ArchId::ResNet1dVel, "vel_model");
  detail::require_arch(dir_model, nn::ArchId::ResNet1dDir, "dir_model");
  if (vel_model.input_window != dir_model.input_window) {
    throw Error(ErrorCode::ShapeMismatch, "vel_model and dir_model windows differ");
  }
  detail::require_one_second_window(vel_model, session.fs, "vel_model");
  const std::size_t w = vel_model.input_window;
  const auto windows = make_windows(session, w, opt.stride ? opt.stride : w);

  std::vector<double> speeds, dts;
  std::vector<Vec2> dirs;
  for (const auto& win : windows) {
    speeds.push_back(detail::speed_of(vel_model, win));
    const auto d = nn::resnet1d_forward(dir_model, win.X);
    dirs.emplace_back(d.values[0], d.values[1]);
    dts.push_back(win.dt_step);
  }

  TrajectoryEstimate est;
  est.source = "dl1";
  est.epochs = window_epochs(windows);
  est.positions = integrate_velocity(speeds, dirs, dts, opt.p0);
  return est;
}

/// Speed network plus heading-increment network.
inline TrajectoryEstimate run_dl2(const SessionDataset& session, const nn::ModelBundle& vel_model,
                                  const nn::ModelBundle& heading_model, double psi0, const DlOptions& opt = {}) {
  detail::require_arch(vel_model, nn::ArchId::ResNet1dVel, "vel_model");
  detail::require_arch(heading_model, nn::ArchId::TfEncHeading, "heading_model");
  if (vel_model.input_window != heading_model.input_window) {
    throw Error(ErrorCode::ShapeMismatch, "vel_model and heading_model windows differ");
  }
  detail::require_one_second_window(vel_model, session.fs, "vel_model");
  const std::size_t w = vel_model.input_window;
  const auto windows = make_windows(session, w, opt.stride ? opt.stride : w);

  std::vector<double> speeds, dpsi, dts;
  for (const auto& win : windows) {
    speeds.push_back(detail::speed_of(vel_model, win));
    dpsi.push_back(nn::transformer_encoder_forward(heading_model, win.X));
    dts.push_back(win.dt_step);
  }

  TrajectoryEstimate est;
  est.source = "dl2";
  est.epochs = window_epochs(windows);
  auto [pos, psi] = integrate_heading(speeds, dpsi, dts, opt.p0, psi0);
  est.positions = std::move(pos);
  est.headings = std::move(psi);
  return est;
}

/// Heading of the first ground-truth displacement longer than `min_distance`.
inline std::optional<double> initial_heading_from_track(const GroundTruthTrack& track, double min_distance = 1.0) {
  for (std::size_t i = 1; i < track.size(); ++i) {
    const Vec2 d = track.p[i] - track.p.front();
    if (d.norm() >= min_distance) return std::atan2(d.y(), d.x());
  }
  return std::nullopt;
}

struct InsOptions {
  Quaternion initial_q;
  double gravity = kStandardGravity;
  Vec2 p0 = Vec2::Zero();
};

/// Full 3D mechanization of a bias-corrected session, projected onto the
/// North-East plane at every sample.
inline TrajectoryEstimate run_ins(const SessionDataset& session, const InsOptions& opt = {}) {
  if (session.imu.empty()) throw Error(ErrorCode::EmptyStream, "session has no IMU samples");
  if (!(session.fs > 0)) throw Error(ErrorCode::InvalidArgument, "session rate must be positive");
  TrajectoryEstimate est;
  est.source = "ins";
  est.epochs.reserve(session.imu.size() + 1);
  est.positions.reserve(session.imu.size() + 1);

  NavState state;
  state.q = opt.initial_q.normalized();
  est.epochs.push_back(session.imu.front().t);
  est.positions.push_back(opt.p0);
  // the first sample anchors the clock; each later sample drives the step that ends at it
  for (std::size_t i = 1; i < session.imu.size(); ++i) {
    state = ins_mechanize(state, session.imu[i], session.imu[i].t - session.imu[i - 1].t, opt.gravity);
    est.epochs.push_back(session.imu[i].t);
    est.positions.push_back(opt.p0 + ne_from_nav(state.p_n));
  }
  return est;
}

}  // namespace ddr
