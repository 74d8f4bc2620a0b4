#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>

#include "support.hpp"

using namespace ddr;
using namespace ddr_test;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int status = -1;
  std::string output;  // stdout and stderr
};

CliResult cli(const std::string& args) {
  const std::string cmd = std::string(DDR_CLI_PATH) + " " + args + " 2>&1";
  CliResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Four walks with different headings plus one IMU-only recording.
class CliDataset : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    const std::pair<const char*, double> walks[] = {{"2", 0.3}, {"4", 1.2}, {"7", -2.0}, {"8", 2.9}};
    unsigned seed = 40;
    for (const auto& [id, heading] : walks) {
      GaitSpec spec;
      spec.walk_s = 30;
      spec.heading = heading;
      spec.accel_noise = 0.05;
      spec.gyro_noise = 0.002;
      spec.seed = seed++;
      write_session(root(), id, make_gait_session(spec));
    }
    GaitSpec spec;
    spec.walk_s = 10;
    auto s = make_gait_session(spec);
    s.gt_track = {};
    write_session(root(), "nogt", s);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path root() { return dir_->path / "data"; }
  static fs::path scratch(const std::string& name) { return dir_->path / name; }

  static TempDir* dir_;
};

TempDir* CliDataset::dir_ = nullptr;

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_F(CliDataset, MbDdrOverThreeTrajectories) {
  const auto out = scratch("mb");
  const auto r = cli("run --dataset " + q(root()) + " --trajectories 4,7,8 --estimator mb-ddr --calibrate-gain-on 2 --out " + q(out));
  ASSERT_EQ(r.status, 0) << r.output;
  const auto rows = read_results_csv(out / "results.csv");
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& row : rows) {
    EXPECT_EQ(row.estimator, "mb-ddr");
    // every walk shares the gait, so the gain carries over
    EXPECT_LT(row.ade_pct, 2.0) << row.trajectory;
    EXPECT_LT(row.prmse_pct, 5.0) << row.trajectory;
    for (const char* f : {"mb-ddr_trajectory.csv", "mb-ddr_metrics.txt", "mb-ddr_steps.csv"}) {
      EXPECT_TRUE(fs::exists(out / row.trajectory / f)) << row.trajectory << '/' << f;
    }
  }
  EXPECT_EQ(count_lines(r.output), 3u) << r.output;
}

TEST_F(CliDataset, RerunIsByteIdentical) {
  const auto out = scratch("rerun");
  const std::string args = "run --dataset " + q(root()) + " --trajectories 4,8 --estimator mb-ddr --calibrate-gain-on 2 --out " + q(out);
  ASSERT_EQ(cli(args).status, 0);
  const auto results = slurp(out / "results.csv");
  const auto traj = slurp(out / "8" / "mb-ddr_trajectory.csv");
  const auto metrics = slurp(out / "4" / "mb-ddr_metrics.txt");
  ASSERT_EQ(cli(args).status, 0);
  EXPECT_EQ(slurp(out / "results.csv"), results);
  EXPECT_EQ(slurp(out / "8" / "mb-ddr_trajectory.csv"), traj);
  EXPECT_EQ(slurp(out / "4" / "mb-ddr_metrics.txt"), metrics);
}

TEST_F(CliDataset, EstimatorsShareResultsFile) {
  const auto out = scratch("shared");
  ASSERT_EQ(cli("run --dataset " + q(root()) + " --trajectories 4 --estimator ins --out " + q(out)).status, 0);
  const auto vel = fixture_dir() / "resnet1d_vel.ddrw";
  const auto dir = fixture_dir() / "resnet1d_dir.ddrw";
  const auto r = cli("run --dataset " + q(root()) + " --trajectories 4 --estimator dl1 --vel-model " + q(vel) +
                     " --dir-model " + q(dir) + " --window 125 --out " + q(out));
  ASSERT_EQ(r.status, 0) << r.output;
  const auto rows = read_results_csv(out / "results.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].estimator, "ins");
  EXPECT_EQ(rows[1].estimator, "dl1");
  EXPECT_TRUE(fs::exists(out / "4" / "dl1_trajectory.csv"));
}

TEST_F(CliDataset, Dl2RejectsWindowThatIsNotOneSecond) {
  const auto out = scratch("dl2");
  const auto r = cli("run --dataset " + q(root()) + " --trajectories 7 --estimator dl2 --vel-model " +
                     q(fixture_dir() / "resnet1d_vel.ddrw") + " --heading-model " +
                     q(fixture_dir() / "tfenc_heading.ddrw") + " --out " + q(out));
  // the heading fixture expects 100-sample windows against a 125 Hz stream
  EXPECT_EQ(r.status, 3) << r.output;
}

TEST_F(CliDataset, ConfigurationErrorsExitTwo) {
  const auto out = scratch("cfg");
  auto r = cli("run --dataset " + q(root()) + " --trajectories 4 --estimator dl1 --out " + q(out));
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.output.find("vel_model"), std::string::npos) << r.output;

  r = cli("run --dataset " + q(root()) + " --trajectories 4 --estimator dl1 --vel-model " +
          q(fixture_dir() / "resnet1d_vel.ddrw") + " --out " + q(out));
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.output.find("dir_model"), std::string::npos) << r.output;

  r = cli("run --dataset " + q(root()) + " --trajectories 4 --estimator mb-ddr --gain 0.5 --calibrate-gain-on 2 --out " + q(out));
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.output.find("gain"), std::string::npos) << r.output;

  r = cli("run --dataset " + q(root()) + " --trajectories 4 --estimator mb-ddr --out " + q(out));
  EXPECT_EQ(r.status, 2);

  r = cli("run --dataset " + q(root()) + " --trajectories 4 --estimator kalman --out " + q(out));
  EXPECT_EQ(r.status, 2);

  r = cli("run --dataset " + q(root()) + " --trajectories 4 --estimator dl1 --vel-model " +
          q(fixture_dir() / "resnet1d_vel.ddrw") + " --dir-model " + q(fixture_dir() / "resnet1d_dir.ddrw") +
          " --window 100 --out " + q(out));
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.output.find("window"), std::string::npos) << r.output;

  r = cli("run --dataset " + q(root()) + " --trajectories 4 --estimator dl1 --vel-model " +
          q(fixture_dir() / "resnet1d_dir.ddrw") + " --dir-model " + q(fixture_dir() / "resnet1d_dir.ddrw") +
          " --out " + q(out));
  EXPECT_EQ(r.status, 2) << r.output;

  r = cli("run --dataset " + q(root()) + " --trajectories 4 --estimator ins --align-heading compass --out " + q(out));
  EXPECT_EQ(r.status, 2);
  EXPECT_FALSE(fs::exists(out / "results.csv"));
}

TEST_F(CliDataset, DataErrorsExitThree) {
  const auto out = scratch("data");
  EXPECT_EQ(cli("run --dataset " + q(root()) + " --trajectories 99 --estimator ins --out " + q(out)).status, 3);
  EXPECT_EQ(cli("run --dataset " + q(root()) + " --trajectories 4 --estimator mb-ddr --calibrate-gain-on nogt --out " + q(out)).status, 3);
}

TEST_F(CliDataset, MissingGroundTruthSkipsMetrics) {
  const auto out = scratch("nogt_run");
  const auto r = cli("run --dataset " + q(root()) + " --trajectories nogt --estimator mb-ddr --gain 0.4 --out " + q(out));
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(fs::exists(out / "nogt" / "mb-ddr_trajectory.csv"));
  EXPECT_FALSE(fs::exists(out / "results.csv"));
}

TEST_F(CliDataset, CalibrateMatchesLibraryAndFeedsRun) {
  const auto gain_file = scratch("gain.txt");
  const auto r = cli("calibrate --dataset " + q(root()) + " --calibrate-gain-on 2 --out " + q(gain_file));
  ASSERT_EQ(r.status, 0) << r.output;
  const double k = calibrate_weinberg_gain(load_session(root(), "2"), StepDetectorConfig{}).k_d;
  EXPECT_EQ(r.output, "k_d = " + format_g(k, 6) + "\n");
  const auto text = slurp(gain_file);
  EXPECT_NE(text.find("k_d: " + format_g(k, 17)), std::string::npos) << text;
  EXPECT_NE(text.find("calibrated_on: 2"), std::string::npos);

  ASSERT_EQ(cli("calibrate --dataset " + q(root()) + " --calibrate-gain-on 2 --out " + q(gain_file)).status, 0);
  EXPECT_EQ(slurp(gain_file), text);

  const auto a = scratch("via_file"), b = scratch("via_calibration");
  ASSERT_EQ(cli("run --dataset " + q(root()) + " --trajectories 7 --estimator mb-ddr --gain-file " + q(gain_file) + " --out " + q(a)).status, 0);
  ASSERT_EQ(cli("run --dataset " + q(root()) + " --trajectories 7 --estimator mb-ddr --calibrate-gain-on 2 --out " + q(b)).status, 0);
  EXPECT_EQ(slurp(a / "results.csv"), slurp(b / "results.csv"));
}

TEST(Cli, CalibrateUniformPulses) {
  // ten box pulses of height 16 over 10 m of ground truth: k = 10 / (10 * 16^(1/4)) = 0.5
  TempDir d("cli_box");
  SessionDataset s;
  s.fs = 100;
  const std::size_t len = smoothing_length(StepDetectorConfig{}.smoothing_window, s.fs);
  std::vector<double> mags(1000, 10.0);
  for (int k = 0; k < 10; ++k) {
    const std::size_t c = 50 + 80 * k;
    for (std::size_t j = c - len / 2; j <= c + len / 2; ++j) mags[j] += 16.0;
  }
  for (std::size_t i = 0; i < mags.size(); ++i) s.imu.push_back({i / s.fs, Vec3(0, 0, mags[i]), Vec3::Zero()});
  s.gt_track.t = {0.0, 10.0};
  s.gt_track.p = {Vec2(0, 0), Vec2(10, 0)};
  write_session(d.path, "box", s);
  const auto r = cli("calibrate --dataset " + q(d.path) + " --calibrate-gain-on box --out " + q(d.path / "k.txt"));
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(r.output, "k_d = 0.5\n");
}

TEST(Cli, ReportMeanRow) {
  TempDir d("cli_report");
  const auto p = d.path / "results.csv";
  spit(p,
       "trajectory,estimator,prmse_m,prmse_pct,ade_m,ade_pct\n"
       "4,mb-ddr,1,1,0.5,2\n"
       "7,mb-ddr,2,2,1.5,4\n"
       "8,mb-ddr,3,6,1,0\n"
       "4,dl1,7.25,9.5,0.125,0.25\n");
  const auto r = cli("report " + q(p));
  ASSERT_EQ(r.status, 0) << r.output;
  std::istringstream lines(r.output);
  std::string line, mean_mb, mean_dl;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    ++n;
    if (line.starts_with("Mean") && line.find("mb-ddr") != std::string::npos) mean_mb = line;
    if (line.starts_with("Mean") && line.find("dl1") != std::string::npos) mean_dl = line;
  }
  EXPECT_EQ(n, 7u) << r.output;
  EXPECT_NE(r.output.find("Trajectory"), std::string::npos);
  EXPECT_NE(mean_mb.find("2.00 (3.0%)"), std::string::npos) << mean_mb;
  EXPECT_NE(mean_mb.find("1.00 (2.0%)"), std::string::npos) << mean_mb;
  // a single row is its own mean
  EXPECT_NE(mean_dl.find("7.25 (9.5%)"), std::string::npos) << mean_dl;
  EXPECT_NE(mean_dl.find("0.12 (0.2%)"), std::string::npos) << mean_dl;

  const auto only = cli("report " + q(p) + " --estimator dl1");
  ASSERT_EQ(only.status, 0);
  EXPECT_EQ(only.output.find("mb-ddr"), std::string::npos);
}

TEST(Cli, ReportErrors) {
  TempDir d("cli_report_err");
  spit(d.path / "empty.csv", "trajectory,estimator,prmse_m,prmse_pct,ade_m,ade_pct\n");
  EXPECT_EQ(cli("report " + q(d.path / "empty.csv")).status, 3);
  EXPECT_EQ(cli("report " + q(d.path / "missing.csv")).status, 2);
  spit(d.path / "bad.csv", "a,b\n");
  EXPECT_EQ(cli("report " + q(d.path / "bad.csv")).status, 3);
  EXPECT_EQ(cli("frobnicate").status, 2);
}
