// ddr: run estimators over a dataset, calibrate the Weinberg gain, and
// summarize results.
//
//   ddr run --dataset ROOT --trajectories 4,7,8 --estimator mb-ddr --calibrate-gain-on 2 --out results/
//   ddr calibrate --dataset ROOT --calibrate-gain-on 2 --out gain.txt
//   ddr report results/results.csv
//
// Exit status: 0 ok, 2 configuration error, 3 data error, 4 numeric divergence.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "ddr/ddr.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct RunConfig {
  fs::path dataset;
  std::vector<std::string> trajectories;
  std::string estimator;
  fs::path vel_model, dir_model, heading_model;
  std::optional<double> gain;
  std::string calibrate_gain_on;
  fs::path gain_file;
  double beta = ddr::kDefaultMadgwickBeta;
  double min_step_interval = ddr::kDogMinStepInterval;
  std::size_t window = 0;
  std::size_t stride = 0;
  std::size_t calib_samples = ddr::kDefaultCalibrationSamples;
  std::string align_heading = "gnss";
  fs::path out = "ddr_out";
};

ddr::Error config_error(const std::string& field, const std::string& what) {
  return ddr::Error(ddr::ErrorCode::InvalidArgument, field + ": " + what);
}

void configure_logging() {
  spdlog::set_pattern("%^[%l]%$ %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("DDR_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

std::vector<std::string> split_ids(const std::string& text) {
  std::vector<std::string> ids;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto t = ddr::detail::trim(item);
    if (!t.empty()) ids.emplace_back(t);
  }
  return ids;
}

/// Parameter file: "key: value" lines.
std::string gain_file_text(double k, const std::string& trajectory, const ddr::StepDetectorConfig& cfg) {
  std::ostringstream os;
  os << "k_d: " << ddr::format_g(k, 17) << '\n'
     << "calibrated_on: " << trajectory << '\n'
     << "min_step_interval_s: " << ddr::format_g(cfg.min_step_interval) << '\n'
     << "smoothing_window_s: " << ddr::format_g(cfg.smoothing_window) << '\n'
     << "peak_threshold_mult: " << ddr::format_g(cfg.peak_threshold_mult) << '\n';
  return os.str();
}

double read_gain_file(const fs::path& path) {
  for (const auto& line : ddr::detail::read_lines(path)) {
    const auto t = ddr::detail::trim(line);
    if (!t.starts_with("k_d:")) continue;
    if (const auto v = ddr::detail::parse_double(ddr::detail::trim(t.substr(4)))) return *v;
    throw ddr::detail::parse_error(path, 0, "bad k_d value");
  }
  throw ddr::Error(ddr::ErrorCode::ParseError, path.string() + ": no k_d entry");
}

ddr::StepDetectorConfig detector_config(const RunConfig& cfg) {
  ddr::StepDetectorConfig d;
  d.min_step_interval = cfg.min_step_interval;
  d.validate();
  return d;
}

double calibrated_gain(const RunConfig& cfg, const std::string& trajectory) {
  const auto session = ddr::load_session(cfg.dataset, trajectory, cfg.calib_samples);
  const double k = ddr::calibrate_weinberg_gain(session, detector_config(cfg)).k_d;
  spdlog::info("Weinberg gain {} calibrated on trajectory {}", ddr::format_g(k, 6), trajectory);
  return k;
}

void validate_run(const RunConfig& cfg) {
  if (cfg.dataset.empty()) throw config_error("dataset", "required");
  if (cfg.trajectories.empty()) throw config_error("trajectories", "at least one trajectory id is required");
  if (cfg.estimator == "dl1") {
    if (cfg.vel_model.empty()) throw config_error("vel_model", "dl1 needs --vel-model");
    if (cfg.dir_model.empty()) throw config_error("dir_model", "dl1 needs --dir-model");
  } else if (cfg.estimator == "dl2") {
    if (cfg.vel_model.empty()) throw config_error("vel_model", "dl2 needs --vel-model");
    if (cfg.heading_model.empty()) throw config_error("heading_model", "dl2 needs --heading-model");
  } else if (cfg.estimator == "mb-ddr") {
    const int sources = cfg.gain.has_value() + !cfg.calibrate_gain_on.empty() + !cfg.gain_file.empty();
    if (sources != 1) {
      throw config_error("gain", "mb-ddr needs exactly one of --gain, --calibrate-gain-on, --gain-file");
    }
    if (cfg.gain && !(*cfg.gain > 0)) throw config_error("gain", "must be positive");
  }
  if (!(cfg.beta >= 0)) throw config_error("beta", "must be >= 0");
  if (cfg.align_heading != "gnss" && cfg.align_heading != "none") {
    throw config_error("align_heading", "expected gnss or none");
  }
}

ddr::nn::ModelBundle load_model_checked(const fs::path& path, const char* field, std::size_t window) {
  if (!fs::exists(path)) throw config_error(field, "no such file " + path.string());
  auto bundle = ddr::nn::load_model(path);
  if (window != 0 && bundle.input_window != window) {
    throw config_error("window", std::to_string(window) + " does not match " + field + " input window " +
                                     std::to_string(bundle.input_window));
  }
  return bundle;
}

// Initial heading in the North-East plane taken from the ground-truth track.
double heading_alignment(const RunConfig& cfg, const ddr::SessionDataset& session) {
  if (cfg.align_heading != "gnss" || !session.has_ground_truth()) return 0.0;
  if (const auto psi = ddr::initial_heading_from_track(session.gt_track)) return *psi;
  spdlog::warn("trajectory {}: ground truth never leaves its start; initial heading 0", session.meta.trajectory_id);
  return 0.0;
}

struct TrajectoryOutput {
  ddr::TrajectoryEstimate estimate;
  std::vector<ddr::StepEvent> steps;
  bool step_indexed = false;
};

TrajectoryOutput estimate_one(const RunConfig& cfg, const ddr::SessionDataset& raw, double gain,
                              const std::map<std::string, ddr::nn::ModelBundle>& models) {
  TrajectoryOutput out;
  const double psi0 = heading_alignment(cfg, raw);
  if (cfg.estimator == "ins" || cfg.estimator == "mb-ddr") {
    const auto calib = ddr::calibrate_stationary(raw.imu, raw.meta.calibration_samples);
    ddr::SessionDataset session = raw;
    session.imu = ddr::remove_gyro_bias(raw.imu, calib.gyro_bias);
    if (cfg.estimator == "ins") {
      ddr::InsOptions opt;
      const auto e = ddr::euler_from_quat(calib.initial_q);
      // heading is measured toward East, yaw toward West
      opt.initial_q = ddr::quat_from_euler(e.roll, e.pitch, -psi0);
      out.estimate = ddr::run_ins(session, opt);
      return out;
    }
    ddr::MbDdrOptions opt;
    opt.detector = detector_config(cfg);
    opt.gain = {gain};
    opt.beta = cfg.beta;
    opt.initial_q = calib.initial_q;
    opt.psi0 = psi0;
    auto res = ddr::run_mb_ddr(session, opt);
    for (const auto& w : res.warnings) spdlog::warn("trajectory {}: {}", raw.meta.trajectory_id, w);
    out.estimate = std::move(res.trajectory);
    out.steps = std::move(res.steps);
    out.step_indexed = true;
    return out;
  }
  ddr::DlOptions opt;
  opt.stride = cfg.stride;
  if (cfg.estimator == "dl1") {
    out.estimate = ddr::run_dl1(raw, models.at("vel_model"), models.at("dir_model"), opt);
  } else {
    out.estimate = ddr::run_dl2(raw, models.at("vel_model"), models.at("heading_model"), psi0, opt);
  }
  return out;
}

int cmd_run(const RunConfig& cfg) {
  validate_run(cfg);

  std::map<std::string, ddr::nn::ModelBundle> models;
  if (cfg.estimator == "dl1" || cfg.estimator == "dl2") {
    models.emplace("vel_model", load_model_checked(cfg.vel_model, "vel_model", cfg.window));
    if (cfg.estimator == "dl1") {
      models.emplace("dir_model", load_model_checked(cfg.dir_model, "dir_model", cfg.window));
    } else {
      models.emplace("heading_model", load_model_checked(cfg.heading_model, "heading_model", cfg.window));
    }
  }

  double gain = 0.0;
  if (cfg.estimator == "mb-ddr") {
    if (cfg.gain) {
      gain = *cfg.gain;
    } else if (!cfg.gain_file.empty()) {
      gain = read_gain_file(cfg.gain_file);
    } else {
      gain = calibrated_gain(cfg, cfg.calibrate_gain_on);
    }
  }

  const fs::path results = cfg.out / "results.csv";
  for (const auto& id : cfg.trajectories) {
    const auto session = ddr::load_session(cfg.dataset, id, cfg.calib_samples);
    spdlog::info("trajectory {}: {} samples at {} Hz", id, session.imu.size(), ddr::format_g(session.fs, 6));
    const auto result = estimate_one(cfg, session, gain, models);

    const fs::path dir = cfg.out / id;
    ddr::write_trajectory_csv(dir / (cfg.estimator + "_trajectory.csv"), result.estimate);
    if (result.step_indexed) {
      ddr::write_file_atomic(dir / (cfg.estimator + "_steps.csv"), ddr::step_events_csv(result.steps));
    }
    if (!session.has_ground_truth()) {
      spdlog::warn("trajectory {}: no ground truth, metrics skipped", id);
      continue;
    }
    const auto report = result.step_indexed ? ddr::evaluate_step_path(result.estimate, session.gt_track)
                                            : ddr::evaluate(result.estimate, session.gt_track);
    if (report.n_clamped > 0) {
      spdlog::warn("trajectory {}: {} estimate epochs outside the ground-truth span", id, report.n_clamped);
    }
    ddr::write_file_atomic(dir / (cfg.estimator + "_metrics.txt"), ddr::metric_report_text(report, id, cfg.estimator));
    ddr::upsert_result_row(results, {id, cfg.estimator, report.prmse_m, report.prmse_pct, report.ade_m, report.ade_pct});
    std::cout << id << ' ' << cfg.estimator << " PRMSE " << ddr::format_fixed(report.prmse_m, 2) << " m ("
              << ddr::format_fixed(report.prmse_pct, 1) << "%) ADE " << ddr::format_fixed(report.ade_m, 2) << " m ("
              << ddr::format_fixed(report.ade_pct, 1) << "%)\n";
  }
  return kExitOk;
}

int cmd_calibrate(const RunConfig& cfg, const fs::path& out_file) {
  if (cfg.dataset.empty()) throw config_error("dataset", "required");
  if (cfg.calibrate_gain_on.empty()) throw config_error("calibrate_gain_on", "required");
  const double k = calibrated_gain(cfg, cfg.calibrate_gain_on);
  std::cout << "k_d = " << ddr::format_g(k, 6) << '\n';
  ddr::write_file_atomic(out_file, gain_file_text(k, cfg.calibrate_gain_on, detector_config(cfg)));
  return kExitOk;
}

std::string meters_pct(double m, double pct) {
  return ddr::format_fixed(m, 2) + " (" + ddr::format_fixed(pct, 1) + "%)";
}

int cmd_report(const fs::path& results_path, const std::string& estimator_filter) {
  if (!fs::exists(results_path)) throw config_error("results", "no such file " + results_path.string());
  auto rows = ddr::read_results_csv(results_path);
  if (!estimator_filter.empty()) {
    std::erase_if(rows, [&](const ddr::ResultRow& r) { return r.estimator != estimator_filter; });
  }
  if (rows.empty()) throw ddr::Error(ddr::ErrorCode::EmptyStream, "no result rows in " + results_path.string());

  std::vector<std::string> order;
  std::map<std::string, std::vector<ddr::ResultRow>> by_estimator;
  for (const auto& r : rows) {
    if (!by_estimator.count(r.estimator)) order.push_back(r.estimator);
    by_estimator[r.estimator].push_back(r);
  }

  std::printf("%-12s %-8s %-18s %-18s\n", "Trajectory", "Method", "PRMSE [m (%)]", "ADE [m (%)]");
  for (const auto& est : order) {
    const auto& group = by_estimator[est];
    double sums[4] = {0, 0, 0, 0};
    for (const auto& r : group) {
      std::printf("%-12s %-8s %-18s %-18s\n", r.trajectory.c_str(), est.c_str(),
                  meters_pct(r.prmse_m, r.prmse_pct).c_str(), meters_pct(r.ade_m, r.ade_pct).c_str());
      sums[0] += r.prmse_m;
      sums[1] += r.prmse_pct;
      sums[2] += r.ade_m;
      sums[3] += r.ade_pct;
    }
    const double n = static_cast<double>(group.size());
    std::printf("%-12s %-8s %-18s %-18s\n", "Mean", est.c_str(), meters_pct(sums[0] / n, sums[1] / n).c_str(),
                meters_pct(sums[2] / n, sums[3] / n).c_str());
  }
  return kExitOk;
}

int exit_code_for(const ddr::Error& e) {
  if (e.is_config()) return kExitConfig;
  if (e.is_numeric()) return kExitNumeric;
  return kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Dead reckoning from body-mounted inertial sensors"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string trajectories;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--dataset", cfg.dataset, "Dataset root (<root>/<id>/imu.csv, gnss.csv)");
    sub->add_option("--min-step-interval", cfg.min_step_interval, "Minimum time between steps, s");
    sub->add_option("--calib-samples", cfg.calib_samples, "Stationary samples used for bias and leveling");
    sub->add_option("--calibrate-gain-on", cfg.calibrate_gain_on, "Trajectory id used to calibrate the Weinberg gain");
  };

  auto* run = app.add_subcommand("run", "Estimate trajectories and evaluate them against ground truth");
  add_common(run);
  run->add_option("--estimator", cfg.estimator, "ins, mb-ddr, dl1 or dl2")
      ->required()
      ->check(CLI::IsMember({"ins", "mb-ddr", "dl1", "dl2"}));
  run->add_option("--trajectories", trajectories, "Comma-separated trajectory ids")->required();
  run->add_option("--vel-model", cfg.vel_model, "Speed network (DDRW)");
  run->add_option("--dir-model", cfg.dir_model, "Direction network (DDRW)");
  run->add_option("--heading-model", cfg.heading_model, "Heading-increment network (DDRW)");
  run->add_option("--gain", cfg.gain, "Weinberg gain k_d");
  run->add_option("--gain-file", cfg.gain_file, "Parameter file written by `calibrate`");
  run->add_option("--beta", cfg.beta, "Madgwick gain");
  run->add_option("--window", cfg.window, "Expected network window in samples (checked against the models)");
  run->add_option("--stride", cfg.stride, "Window stride in samples (default: window)");
  run->add_option("--align-heading", cfg.align_heading, "Initial heading source: gnss or none");
  run->add_option("--out", cfg.out, "Output directory");

  fs::path gain_out = "weinberg_gain.txt";
  auto* calibrate = app.add_subcommand("calibrate", "Calibrate the Weinberg gain on one trajectory");
  add_common(calibrate);
  calibrate->add_option("--out", gain_out, "Parameter file to write");

  fs::path results_path;
  std::string estimator_filter;
  auto* report = app.add_subcommand("report", "Per-trajectory table with a Mean row");
  report->add_option("results", results_path, "results.csv written by `run`")->required();
  report->add_option("--estimator", estimator_filter, "Only rows of this estimator");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) {
      cfg.trajectories = split_ids(trajectories);
      return cmd_run(cfg);
    }
    if (*calibrate) return cmd_calibrate(cfg, gain_out);
    return cmd_report(results_path, estimator_filter);
  } catch (const ddr::Error& e) {
    spdlog::error("{} ({})", e.what(), ddr::to_string(e.code()));
    return exit_code_for(e);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  }
}
