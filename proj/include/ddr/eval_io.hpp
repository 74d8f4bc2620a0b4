#pragma once

// Dataset ingestion, ground-truth synchronization and trajectory metrics.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ddr/session.hpp"

namespace ddr {

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(std::move(line));
  return lines;
}

inline Error parse_error(const std::filesystem::path& path, std::size_t line_no, const std::string& what) {
  return Error(ErrorCode::ParseError, path.filename().string() + ":" + std::to_string(line_no) + ": " + what);
}

inline std::string join(const std::vector<std::string_view>& cols) {
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) out += ',';
    out += cols[i];
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Readers

inline constexpr std::string_view kImuHeader = "t_s,fx_mps2,fy_mps2,fz_mps2,wx_rps,wy_rps,wz_rps";
inline constexpr std::string_view kGnssGeodeticHeader = "t_s,lat_deg,lon_deg,alt_m";
inline constexpr std::string_view kGnssLocalHeader = "t_s,x_m,y_m";

inline std::vector<ImuSample> read_imu_csv(const std::filesystem::path& path) {
  const auto lines = detail::read_lines(path);
  if (lines.empty() || detail::join(detail::split_csv(lines[0])) != kImuHeader) {
    throw detail::parse_error(path, 1, "expected header " + std::string(kImuHeader));
  }
  std::vector<ImuSample> out;
  out.reserve(lines.size());
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) continue;
    const auto cols = detail::split_csv(lines[i]);
    if (cols.size() != 7) throw detail::parse_error(path, i + 1, "expected 7 fields");
    double v[7];
    for (int c = 0; c < 7; ++c) {
      const auto d = detail::parse_double(cols[static_cast<std::size_t>(c)]);
      if (!d) throw detail::parse_error(path, i + 1, "bad number '" + std::string(cols[static_cast<std::size_t>(c)]) + "'");
      v[c] = *d;
    }
    if (!out.empty() && !(v[0] > out.back().t)) {
      throw Error(ErrorCode::NonMonotonicTime,
                  path.filename().string() + ":" + std::to_string(i + 1) + ": timestamp not increasing");
    }
    out.push_back({v[0], Vec3(v[1], v[2], v[3]), Vec3(v[4], v[5], v[6])});
  }
  return out;
}

/// Where the local frame is anchored for geodetic ground truth.
struct OriginPolicy {
  std::optional<GeodeticPoint> explicit_origin;  // empty: first fix

  static OriginPolicy first_fix() { return {}; }
};

inline GroundTruthTrack read_gnss_csv(const std::filesystem::path& path,
                                      const OriginPolicy& policy = OriginPolicy::first_fix()) {
  const auto lines = detail::read_lines(path);
  if (lines.empty()) throw detail::parse_error(path, 1, "empty file");
  const auto header = detail::split_csv(lines[0]);
  const std::string joined = detail::join(header);

  const auto has = [&](std::string_view name) { return std::find(header.begin(), header.end(), name) != header.end(); };
  const bool geo_cols = has("lat_deg") || has("lon_deg") || has("alt_m");
  const bool local_cols = has("x_m") || has("y_m");
  if (geo_cols && local_cols) throw Error(ErrorCode::MixedSchema, path.filename().string() + ": header mixes geodetic and local columns");

  bool geodetic = false;
  if (joined == kGnssGeodeticHeader) {
    geodetic = true;
  } else if (joined != kGnssLocalHeader) {
    throw detail::parse_error(path, 1, "unrecognized GNSS header '" + joined + "'");
  }
  const std::size_t n_cols = geodetic ? 4 : 3;

  GroundTruthTrack track;
  std::optional<GeodeticPoint> origin = policy.explicit_origin;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) continue;
    const auto cols = detail::split_csv(lines[i]);
    if (cols.size() == (geodetic ? 3u : 4u)) {
      throw Error(ErrorCode::MixedSchema, path.filename().string() + ":" + std::to_string(i + 1) +
                                              ": row matches the other GNSS schema");
    }
    if (cols.size() != n_cols) throw detail::parse_error(path, i + 1, "expected " + std::to_string(n_cols) + " fields");
    double v[4] = {0, 0, 0, 0};
    for (std::size_t c = 0; c < n_cols; ++c) {
      const auto d = detail::parse_double(cols[c]);
      if (!d) throw detail::parse_error(path, i + 1, "bad number '" + std::string(cols[c]) + "'");
      v[c] = *d;
    }
    if (!track.t.empty() && !(v[0] > track.t.back())) {
      throw Error(ErrorCode::NonMonotonicTime,
                  path.filename().string() + ":" + std::to_string(i + 1) + ": timestamp not increasing");
    }
    track.t.push_back(v[0]);
    if (geodetic) {
      const GeodeticPoint fix{v[1], v[2], v[3]};
      if (!origin) origin = fix;
      const Vec3 ned = lla_to_local(fix, *origin);
      track.p.emplace_back(ned.x(), ned.y());
    } else {
      track.p.emplace_back(v[1], v[2]);
    }
  }
  return track;
}

// ---------------------------------------------------------------------------
// Synchronization

struct SyncResult {
  std::vector<Vec2> positions;
  std::size_t n_clamped = 0;  // epochs outside the track span
};

/// Piecewise-linear interpolation of the track at each epoch; epochs outside
/// the span take the nearest end point and are counted in `n_clamped`.
inline SyncResult sync_gt_to_epochs(const GroundTruthTrack& track, const std::vector<double>& epochs) {
  if (track.empty()) throw Error(ErrorCode::EmptyTrack, "ground-truth track has no fixes");
  SyncResult out;
  out.positions.reserve(epochs.size());
  for (const double t : epochs) {
    if (t <= track.t.front()) {
      out.n_clamped += t < track.t.front();
      out.positions.push_back(track.p.front());
      continue;
    }
    if (t >= track.t.back()) {
      out.n_clamped += t > track.t.back();
      out.positions.push_back(track.p.back());
      continue;
    }
    const auto hi = static_cast<std::size_t>(std::upper_bound(track.t.begin(), track.t.end(), t) - track.t.begin());
    const std::size_t lo = hi - 1;
    const double a = (t - track.t[lo]) / (track.t[hi] - track.t[lo]);
    out.positions.push_back(track.p[lo] + a * (track.p[hi] - track.p[lo]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

namespace detail {
inline void require_overlap(const TrajectoryEstimate& est, const GroundTruthTrack& track) {
  if (est.epochs.empty()) throw Error(ErrorCode::NoOverlap, "estimate has no epochs");
  if (track.empty()) throw Error(ErrorCode::EmptyTrack, "ground-truth track has no fixes");
  double slack = 0.0;
  if (track.size() >= 2) slack = (track.t.back() - track.t.front()) / static_cast<double>(track.size() - 1);
  if (est.epochs.back() < track.t.front() - slack || est.epochs.front() > track.t.back() + slack) {
    throw Error(ErrorCode::NoOverlap, "estimate epochs do not overlap the ground-truth span");
  }
}
}  // namespace detail

/// Root-mean-square 2D position error with ground truth interpolated to the
/// estimate's epochs.
inline double prmse(const TrajectoryEstimate& est, const GroundTruthTrack& track) {
  detail::require_overlap(est, track);
  const auto gt = sync_gt_to_epochs(track, est.epochs).positions;
  double sum = 0.0;
  for (std::size_t k = 0; k < gt.size(); ++k) sum += (est.positions[k] - gt[k]).squaredNorm();
  return std::sqrt(sum / static_cast<double>(gt.size()));
}

/// |length(GT) - length(estimate)|.
inline double ade(const TrajectoryEstimate& est, const GroundTruthTrack& track) {
  if (est.positions.size() < 2 || track.p.size() < 2) {
    throw Error(ErrorCode::DegeneratePath, "ADE needs at least two points on each path");
  }
  return std::abs(path_length(track.p) - path_length(est.positions));
}

struct MetricReport {
  double prmse_m = 0, prmse_pct = 0;
  double ade_m = 0, ade_pct = 0;
  double gt_length_m = 0, est_length_m = 0;
  std::size_t n_epochs = 0;
  std::size_t n_clamped = 0;
};

/// Percentages are relative to the ground-truth path length.
inline MetricReport evaluate(const TrajectoryEstimate& est, const GroundTruthTrack& track) {
  MetricReport r;
  r.prmse_m = prmse(est, track);
  r.ade_m = ade(est, track);
  r.gt_length_m = path_length(track.p);
  r.est_length_m = path_length(est.positions);
  if (!(r.gt_length_m > 0.0)) throw Error(ErrorCode::DegeneratePath, "ground-truth path has zero length");
  r.prmse_pct = 100.0 * r.prmse_m / r.gt_length_m;
  r.ade_pct = 100.0 * r.ade_m / r.gt_length_m;
  r.n_epochs = est.epochs.size();
  r.n_clamped = sync_gt_to_epochs(track, est.epochs).n_clamped;
  return r;
}

// ---------------------------------------------------------------------------
// Writers

/// Writes through a sibling temp file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out << contents;
    if (!out.flush()) throw Error(ErrorCode::Io, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string format_g(double v, int digits = 9) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::string trajectory_csv(const TrajectoryEstimate& est) {
  const bool with_psi = !est.headings.empty();
  std::string out = with_psi ? "t_s,x_m,y_m,psi_rad\n" : "t_s,x_m,y_m\n";
  for (std::size_t k = 0; k < est.epochs.size(); ++k) {
    out += format_g(est.epochs[k]) + ',' + format_g(est.positions[k].x()) + ',' + format_g(est.positions[k].y());
    if (with_psi) out += ',' + format_g(est.headings[k]);
    out += '\n';
  }
  return out;
}

inline void write_trajectory_csv(const std::filesystem::path& path, const TrajectoryEstimate& est) {
  write_file_atomic(path, trajectory_csv(est));
}

inline std::string metric_report_text(const MetricReport& r, std::string_view trajectory, std::string_view estimator) {
  std::ostringstream os;
  os << "trajectory: " << trajectory << '\n'
     << "estimator: " << estimator << '\n'
     << "prmse_m: " << format_g(r.prmse_m) << '\n'
     << "prmse_pct: " << format_g(r.prmse_pct) << '\n'
     << "ade_m: " << format_g(r.ade_m) << '\n'
     << "ade_pct: " << format_g(r.ade_pct) << '\n'
     << "gt_length_m: " << format_g(r.gt_length_m) << '\n'
     << "est_length_m: " << format_g(r.est_length_m) << '\n'
     << "n_epochs: " << r.n_epochs << '\n'
     << "n_clamped: " << r.n_clamped << '\n';
  return os.str();
}

inline constexpr std::string_view kResultsHeader = "trajectory,estimator,prmse_m,prmse_pct,ade_m,ade_pct";

struct ResultRow {
  std::string trajectory;
  std::string estimator;
  double prmse_m = 0, prmse_pct = 0, ade_m = 0, ade_pct = 0;
};

inline std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
  const auto lines = detail::read_lines(path);
  if (lines.empty() || detail::join(detail::split_csv(lines[0])) != kResultsHeader) {
    throw detail::parse_error(path, 1, "expected header " + std::string(kResultsHeader));
  }
  std::vector<ResultRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) continue;
    const auto cols = detail::split_csv(lines[i]);
    if (cols.size() != 6) throw detail::parse_error(path, i + 1, "expected 6 fields");
    ResultRow row{std::string(cols[0]), std::string(cols[1])};
    double* fields[] = {&row.prmse_m, &row.prmse_pct, &row.ade_m, &row.ade_pct};
    for (std::size_t c = 0; c < 4; ++c) {
      const auto d = detail::parse_double(cols[c + 2]);
      if (!d) throw detail::parse_error(path, i + 1, "bad number '" + std::string(cols[c + 2]) + "'");
      *fields[c] = *d;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string results_csv(const std::vector<ResultRow>& rows) {
  std::string out = std::string(kResultsHeader) + '\n';
  for (const auto& r : rows) {
    out += r.trajectory + ',' + r.estimator + ',' + format_g(r.prmse_m) + ',' + format_g(r.prmse_pct) + ',' +
           format_g(r.ade_m) + ',' + format_g(r.ade_pct) + '\n';
  }
  return out;
}

/// Adds or replaces the (trajectory, estimator) row, so re-running a
/// configuration leaves the file unchanged.
inline void upsert_result_row(const std::filesystem::path& path, const ResultRow& row) {
  std::vector<ResultRow> rows;
  if (std::filesystem::exists(path)) rows = read_results_csv(path);
  auto it = std::find_if(rows.begin(), rows.end(), [&](const ResultRow& r) {
    return r.trajectory == row.trajectory && r.estimator == row.estimator;
  });
  if (it != rows.end()) {
    *it = row;
  } else {
    rows.push_back(row);
  }
  write_file_atomic(path, results_csv(rows));
}

// ---------------------------------------------------------------------------
// Dataset layout: <root>/<id>/imu.csv, <root>/<id>/gnss.csv, optional manifest

struct ManifestEntry {
  std::string trajectory_id;
  std::string subject;
};

/// `manifest.txt`: one trajectory per line, "id[,subject]"; '#' starts a comment.
inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& root) {
  const auto path = root / "manifest.txt";
  if (!std::filesystem::exists(path)) return {};
  std::vector<ManifestEntry> out;
  for (const auto& raw : detail::read_lines(path)) {
    std::string_view line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto cols = detail::split_csv(line);
    out.push_back({std::string(cols[0]), cols.size() > 1 ? std::string(cols[1]) : std::string{}});
  }
  return out;
}

inline constexpr double kMinGroundTruthCoverage = 0.9;

inline SessionDataset load_session(const std::filesystem::path& root, const std::string& trajectory_id,
                                   std::size_t calibration_samples = kDefaultCalibrationSamples) {
  const auto dir = root / trajectory_id;
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::Io, "no trajectory directory " + dir.string());
  SessionDataset s;
  s.imu = read_imu_csv(dir / "imu.csv");
  s.fs = estimate_rate(s.imu);
  s.meta.trajectory_id = trajectory_id;
  s.meta.calibration_samples = calibration_samples;
  for (const auto& e : read_manifest(root)) {
    if (e.trajectory_id == trajectory_id) s.meta.subject = e.subject;
  }
  const auto gnss = dir / "gnss.csv";
  if (std::filesystem::exists(gnss)) {
    s.gt_track = read_gnss_csv(gnss);
    const double imu_span = s.imu.back().t - s.imu.front().t;
    const double lo = std::max(s.imu.front().t, s.gt_track.t.front());
    const double hi = std::min(s.imu.back().t, s.gt_track.t.back());
    const double covered = std::max(0.0, hi - lo);
    if (imu_span > 0.0 && covered < kMinGroundTruthCoverage * imu_span) {
      throw Error(ErrorCode::InsufficientCoverage, "ground truth covers " + format_fixed(100.0 * std::min(1.0, covered / imu_span), 1) +
                                                       "% of the IMU span for trajectory " + trajectory_id);
    }
  }
  return s;
}

}  // namespace ddr
