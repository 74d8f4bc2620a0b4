#pragma once

// Synthetic data generators and independent oracles shared by the tests.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/Geometry>

#include "ddr/ddr.hpp"

namespace ddr_test {

using ddr::Vec2;
using ddr::Vec3;
using ddr::Mat3;

inline constexpr double kPi = std::numbers::pi;
inline double deg(double d) { return d * kPi / 180.0; }

/// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("ddr_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void spit(const std::filesystem::path& p, const std::string& s) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << s;
}

// Body-to-nav rotation built from elementary rotations with Eigen, independent
// of the library's quaternion code: R = Rz(yaw) Ry(pitch) Rx(roll).
inline Mat3 rotation_zyx(double roll, double pitch, double yaw) {
  return (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
          Eigen::AngleAxisd(roll, Vec3::UnitX()))
      .toRotationMatrix();
}

inline Mat3 eigen_rotation(const ddr::Quaternion& q) {
  return Eigen::Quaterniond(q.w, q.x, q.y, q.z).normalized().toRotationMatrix();
}

inline ddr::Quaternion random_unit_quaternion(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  ddr::Quaternion q{n(rng), n(rng), n(rng), n(rng)};
  return q.normalized();
}

/// Level body moving on a circle of radius r at rate omega, nose along the
/// velocity; nav frame z up, gravity (0, 0, -g).
struct CircleMotion {
  double r = 5.0, omega = 0.5, g = ddr::kStandardGravity;

  Vec3 position(double t) const { return {r * std::cos(omega * t), r * std::sin(omega * t), 0.0}; }
  Vec3 velocity(double t) const {
    return {-r * omega * std::sin(omega * t), r * omega * std::cos(omega * t), 0.0};
  }
  Vec3 acceleration(double t) const { return -omega * omega * position(t); }
  double yaw(double t) const { return omega * t + kPi / 2; }

  ddr::ImuSample sample(double t) const {
    const Mat3 c_bn = rotation_zyx(0, 0, yaw(t));
    const Vec3 f_n = acceleration(t) + Vec3(0, 0, g);
    return {t, c_bn.transpose() * f_n, Vec3(0, 0, omega)};
  }

  ddr::NavState initial_state() const {
    ddr::NavState s;
    s.p_n = position(0);
    s.v_n = velocity(0);
    const Eigen::Quaterniond q(rotation_zyx(0, 0, yaw(0)));
    s.q = {q.w(), q.x(), q.y(), q.z()};
    return s;
  }
};

/// Static sensor at a fixed tilt reading gravity in the body frame.
inline Vec3 static_specific_force(double roll, double pitch, double g = ddr::kStandardGravity) {
  return rotation_zyx(roll, pitch, 0).transpose() * Vec3(0, 0, g);
}

// Peaked gait pulse with period 1/step_rate; its maxima sit at (k + 1/4)/step_rate.
inline double gait_pulse(double t, double amplitude, double step_rate = 2.0, int sharpness = 8) {
  return amplitude * std::pow(std::max(0.0, std::sin(2 * kPi * step_rate * t)), sharpness);
}

struct GaitSpec {
  double fs = 125.0;
  double rest_s = 2.0;  // stationary lead-in used for calibration
  double walk_s = 60.0;
  double step_rate = 2.0;
  double step_length = 0.5;
  double amplitude = 3.0;
  double heading = 0.0;  // North-East heading of travel
  double accel_noise = 0.0;
  double gyro_noise = 0.0;
  double gnss_rate = 1.0;
  unsigned seed = 1;
};

/// Level, constant-heading walk: vertical specific force carries one pulse per
/// step, ground truth advances at step_length * step_rate along `heading`.
inline ddr::SessionDataset make_gait_session(const GaitSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> an(0.0, spec.accel_noise > 0 ? spec.accel_noise : 1.0);
  std::normal_distribution<double> gn(0.0, spec.gyro_noise > 0 ? spec.gyro_noise : 1.0);
  ddr::SessionDataset s;
  s.fs = spec.fs;
  const std::size_t n = static_cast<std::size_t>(std::llround((spec.rest_s + spec.walk_s) * spec.fs));
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / spec.fs;
    const double tw = t - spec.rest_s;
    Vec3 f(0, 0, ddr::kStandardGravity + (tw >= 0 ? gait_pulse(tw, spec.amplitude, spec.step_rate) : 0.0));
    Vec3 w = Vec3::Zero();
    if (spec.accel_noise > 0) f += Vec3(an(rng), an(rng), an(rng));
    if (spec.gyro_noise > 0) w += Vec3(gn(rng), gn(rng), gn(rng));
    s.imu.push_back({t, f, w});
  }
  const double speed = spec.step_length * spec.step_rate;
  const Vec2 dir(std::cos(spec.heading), std::sin(spec.heading));
  const double t_end = s.imu.back().t;
  for (double t = 0.0; t <= t_end + 1e-9; t += 1.0 / spec.gnss_rate) {
    s.gt_track.t.push_back(t);
    s.gt_track.p.push_back(dir * speed * std::max(0.0, t - spec.rest_s));
  }
  if (s.gt_track.t.back() < t_end) {
    s.gt_track.t.push_back(t_end);
    s.gt_track.p.push_back(dir * speed * (t_end - spec.rest_s));
  }
  s.meta.trajectory_id = "gait";
  return s;
}

inline std::string imu_csv_text(const std::vector<ddr::ImuSample>& imu) {
  std::string out = std::string(ddr::kImuHeader) + '\n';
  for (const auto& s : imu) {
    out += ddr::format_g(s.t, 17);
    for (int c = 0; c < 3; ++c) out += ',' + ddr::format_g(s.f_b[c], 17);
    for (int c = 0; c < 3; ++c) out += ',' + ddr::format_g(s.w_b[c], 17);
    out += '\n';
  }
  return out;
}

inline std::string gnss_local_csv_text(const ddr::GroundTruthTrack& track) {
  std::string out = std::string(ddr::kGnssLocalHeader) + '\n';
  for (std::size_t i = 0; i < track.size(); ++i) {
    out += ddr::format_g(track.t[i], 17) + ',' + ddr::format_g(track.p[i].x(), 17) + ',' +
           ddr::format_g(track.p[i].y(), 17) + '\n';
  }
  return out;
}

/// Writes <root>/<id>/imu.csv and, when present, gnss.csv.
inline void write_session(const std::filesystem::path& root, const std::string& id, const ddr::SessionDataset& s) {
  spit(root / id / "imu.csv", imu_csv_text(s.imu));
  if (!s.gt_track.empty()) spit(root / id / "gnss.csv", gnss_local_csv_text(s.gt_track));
}

// Brute-force oracles for the metrics: linear segment scan and explicit sums.
inline Vec2 interpolate_brute(const ddr::GroundTruthTrack& g, double t) {
  if (t <= g.t.front()) return g.p.front();
  if (t >= g.t.back()) return g.p.back();
  for (std::size_t i = 0; i + 1 < g.size(); ++i) {
    if (g.t[i] <= t && t <= g.t[i + 1]) {
      if (t == g.t[i]) return g.p[i];
      if (t == g.t[i + 1]) return g.p[i + 1];
      const double a = (t - g.t[i]) / (g.t[i + 1] - g.t[i]);
      return g.p[i] + a * (g.p[i + 1] - g.p[i]);
    }
  }
  return g.p.back();
}

inline double length_brute(const std::vector<Vec2>& p) {
  long double sum = 0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    const long double dx = p[i].x() - p[i - 1].x(), dy = p[i].y() - p[i - 1].y();
    sum += std::sqrt(dx * dx + dy * dy);
  }
  return static_cast<double>(sum);
}

inline double prmse_brute(const ddr::TrajectoryEstimate& est, const ddr::GroundTruthTrack& g) {
  long double sum = 0;
  for (std::size_t k = 0; k < est.size(); ++k) {
    const Vec2 d = est.positions[k] - interpolate_brute(g, est.epochs[k]);
    sum += static_cast<long double>(d.x()) * d.x() + static_cast<long double>(d.y()) * d.y();
  }
  return static_cast<double>(std::sqrt(sum / static_cast<long double>(est.size())));
}

/// Random smooth-ish track and an estimate sampled at random epochs inside it.
inline std::pair<ddr::TrajectoryEstimate, ddr::GroundTruthTrack> random_pair(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  ddr::GroundTruthTrack g;
  const int fixes = 5 + static_cast<int>(u(rng) * 60);
  double t = 10.0 * u(rng);
  Vec2 p(100 * n(rng), 100 * n(rng));
  for (int i = 0; i < fixes; ++i) {
    g.t.push_back(t);
    g.p.push_back(p);
    t += 0.2 + 2.0 * u(rng);
    p += Vec2(3 * n(rng), 3 * n(rng));
  }
  ddr::TrajectoryEstimate est;
  const int m = 2 + static_cast<int>(u(rng) * 50);
  std::vector<double> ts;
  for (int k = 0; k < m; ++k) ts.push_back(g.t.front() + (g.t.back() - g.t.front()) * u(rng));
  std::sort(ts.begin(), ts.end());
  for (const double e : ts) {
    est.epochs.push_back(e);
    est.positions.push_back(Vec2(100 * n(rng), 100 * n(rng)));
  }
  return {est, g};
}

// Committed inference fixtures: see tests/fixtures/generate_fixtures.py for the format.
struct FixtureCase {
  int index = 0;
  std::string label;
  ddr::nn::Tensor input;
  std::vector<double> output;
};

struct FixtureSet {
  std::string arch;
  std::string bundle;
  std::size_t channels = 0, window = 0;
  std::vector<FixtureCase> cases;
};

inline std::filesystem::path fixture_dir() { return DDR_FIXTURE_DIR; }

inline FixtureSet read_fixtures(const std::string& arch) {
  std::ifstream in(fixture_dir() / (arch + ".fixtures.txt"));
  if (!in) throw std::runtime_error("missing fixture file for " + arch);
  FixtureSet set;
  std::string line;
  std::size_t declared = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "arch") {
      ls >> set.arch;
    } else if (key == "bundle") {
      ls >> set.bundle;
    } else if (key == "window") {
      ls >> set.channels >> set.window;
    } else if (key == "cases") {
      ls >> declared;
    } else if (key == "case") {
      FixtureCase c;
      ls >> c.index >> c.label;
      set.cases.push_back(std::move(c));
    } else if (key == "input") {
      auto& c = set.cases.back();
      c.input = ddr::nn::Tensor({set.channels, set.window});
      for (auto& v : c.input.data) ls >> v;
      if (!ls) throw std::runtime_error("short input row in " + arch);
    } else if (key == "output") {
      double v;
      while (ls >> v) set.cases.back().output.push_back(v);
    }
  }
  if (set.cases.size() != declared) throw std::runtime_error("case count mismatch in " + arch);
  return set;
}

}  // namespace ddr_test
