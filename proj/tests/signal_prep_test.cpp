#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "introdrive/signal_prep.hpp"

using namespace introdrive;

namespace {
SensorLog make_log(const std::vector<std::pair<double, double>>& t_speed, double course = 90.0) {
  SensorLog log;
  for (auto [t, v] : t_speed) {
    SensorSample s;
    s.t = t;
    s.speed = v;
    s.course = course;
    log.samples.push_back(s);
  }
  return log;
}

SensorLog uniform_course_log(const std::vector<double>& course, double dt = 0.1) {
  SensorLog log;
  for (std::size_t i = 0; i < course.size(); ++i) {
    SensorSample s;
    s.t = i * dt;
    s.speed = 5.0;
    s.course = course[i];
    log.samples.push_back(s);
  }
  return log;
}
}  // namespace

TEST(Resample, LinearSpeed) {
  SensorLog out = resample(make_log({{0.0, 0.0}, {1.0, 10.0}}), 10.0);
  ASSERT_EQ(out.samples.size(), 11u);
  for (int i = 0; i <= 10; ++i) EXPECT_NEAR(out.samples[i].speed, i, 1e-12);
}

TEST(Resample, CircularCourseTakesShortestArc) {
  SensorLog log;
  SensorSample a, b;
  a.t = 0.0; a.course = 350.0; a.speed = 1.0;
  b.t = 1.0; b.course = 10.0; b.speed = 1.0;
  log.samples = {a, b};
  SensorLog out = resample(log, 2.0);
  ASSERT_EQ(out.samples.size(), 3u);
  EXPECT_NEAR(out.samples[1].course, 0.0, 1e-9);  // not 180
}

TEST(Resample, ThreePointHandGrid) {
  // samples (0s,0), (1s,10), (3s,20); 2 Hz grid hand-interpolated
  SensorLog out = resample(make_log({{0.0, 0.0}, {1.0, 10.0}, {3.0, 20.0}}), 2.0);
  const std::vector<double> expected = {0.0, 5.0, 10.0, 12.5, 15.0, 17.5, 20.0};
  ASSERT_EQ(out.samples.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_NEAR(out.samples[i].speed, expected[i], 1e-12);
    EXPECT_NEAR(out.samples[i].t, 0.5 * i, 1e-12);
  }
}

TEST(Resample, RejectsInsufficientData) {
  EXPECT_THROW(resample(make_log({}), 10.0), ContractError);
  EXPECT_THROW(resample(make_log({{0.0, 1.0}}), 10.0), ContractError);
}

TEST(DeriveAccel, ConstantSpeedIsZero) {
  SensorLog log = make_log({{0.0, 7.0}, {0.1, 7.0}, {0.2, 7.0}, {0.3, 7.0}});
  for (double a : derive_accel(log)) EXPECT_DOUBLE_EQ(a, 0.0);
}

TEST(DeriveAccel, LinearSpeedGivesConstant) {
  std::vector<std::pair<double, double>> samples;
  for (int i = 0; i < 20; ++i) samples.push_back({i * 0.1, 2.0 * (i * 0.1)});
  for (double a : derive_accel(make_log(samples))) EXPECT_NEAR(a, 2.0, 1e-12);
}

TEST(DeriveAccel, RandomSeriesMatchesHandDifferences) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uni(0.0, 20.0);
  std::vector<double> v(10);
  for (auto& x : v) x = uni(rng);
  std::vector<std::pair<double, double>> samples;
  for (int i = 0; i < 10; ++i) samples.push_back({i * 0.1, v[i]});
  auto a = derive_accel(make_log(samples));
  const double dt = 0.1;
  EXPECT_NEAR(a[0], (v[1] - v[0]) / dt, 1e-12);
  for (int i = 1; i < 9; ++i) EXPECT_NEAR(a[i], (v[i + 1] - v[i - 1]) / (2 * dt), 1e-12);
  EXPECT_NEAR(a[9], (v[9] - v[8]) / dt, 1e-12);
}

TEST(DeriveAccel, RejectsTooFewOrNonUniform) {
  EXPECT_THROW(derive_accel(make_log({{0.0, 1.0}})), ContractError);
  EXPECT_THROW(derive_accel(make_log({{0.0, 1.0}, {0.1, 2.0}, {0.35, 3.0}})), ContractError);
}

TEST(CourseChange, ConstantCourseIsZero) {
  for (double c : derive_course_change(uniform_course_log(std::vector<double>(12, 123.0))))
    EXPECT_DOUBLE_EQ(c, 0.0);
}

TEST(CourseChange, AlphaOneIsIdenticallyZero) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> uni(0.0, 360.0);
  std::vector<double> course(30);
  for (auto& c : course) c = uni(rng);
  for (double c : derive_course_change(uniform_course_log(course), 1.0))
    EXPECT_DOUBLE_EQ(c, 0.0);
}

TEST(CourseChange, StepCourseMatchesHandRecursion) {
  // course 0 -> 90 at index 5, alpha_s = 0.01, 10 samples at 10 Hz
  std::vector<double> course(10, 0.0);
  for (int i = 5; i < 10; ++i) course[i] = 90.0;
  auto c = derive_course_change(uniform_course_log(course), 0.01);

  // independent hand recursion
  double rbar = course[0];
  for (int i = 1; i < 10; ++i) {
    rbar = 0.01 * course[i] + 0.99 * rbar;
    EXPECT_NEAR(c[i], course[i] - rbar, 1e-12) << "index " << i;
  }
  EXPECT_NEAR(c[5], 89.1, 1e-12);
}

TEST(CourseChange, InvariantToAdding360) {
  std::vector<double> course = {10, 20, 30, 50, 80, 120, 160, 200, 240, 280};
  auto base = derive_course_change(uniform_course_log(course), 0.01);
  for (auto& v : course) v += 360.0;
  SensorLog shifted = uniform_course_log(std::vector<double>(course.size(), 0.0));
  for (std::size_t i = 0; i < course.size(); ++i) shifted.samples[i].course = course[i];
  auto moved = derive_course_change(shifted, 0.01);
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(moved[i], base[i], 1e-12);
}

TEST(CourseChange, HandlesSeamCrossing) {
  // oscillates across the 0/360 seam; changes stay small, never ~360
  std::vector<double> course = {355, 357, 359, 1, 3, 5, 3, 1, 359, 357};
  auto c = derive_course_change(uniform_course_log(course), 0.5);
  for (double v : c) EXPECT_LT(std::abs(v), 15.0);
}

TEST(Pipeline, QuadraticPositionRecoversConstantAcceleration) {
  // quadratic position <=> linear speed; irregular sampling then 10 Hz grid
  SensorLog raw;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> jitter(0.0, 0.04);
  double t = 0.0;
  while (t < 5.0) {
    SensorSample s;
    s.t = t;
    s.speed = 1.5 + 0.8 * t;
    s.course = 90.0;
    raw.samples.push_back(s);
    t += 0.08 + jitter(rng);
  }
  auto accel = derive_accel(resample(raw, 10.0));
  for (double a : accel) EXPECT_NEAR(a, 0.8, 1e-6);
}

TEST(PreprocessFrame, ConstantGrayBecomesZeros) {
  Image img = Image::filled(30, 40, 128, 128, 128);
  ChannelStats stats;
  stats.mean = {128.0 / 255.0, 128.0 / 255.0, 128.0 / 255.0};
  stats.stddev = {1.0, 1.0, 1.0};
  Tensor t = preprocess_frame(img, stats, 9, 16);
  for (std::int64_t i = 0; i < t.size(); ++i) EXPECT_DOUBLE_EQ(t.data()[i], 0.0);
}

TEST(PreprocessFrame, CheckerboardUpscaleIsBlockExact) {
  Image img = Image::filled(2, 2, 0, 0, 0);
  img.px(0, 1)[0] = 255;
  img.px(1, 0)[0] = 255;
  ChannelStats stats;  // identity-ish: mean 0, std 1
  Tensor t = preprocess_frame(img, stats, 4, 4);
  const std::size_t plane = 16;
  auto red = [&](int r, int c) { return t.data()[0 * plane + r * 4 + c]; };
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      const double expected = ((r / 2) != (c / 2)) ? 1.0 : 0.0;
      EXPECT_DOUBLE_EQ(red(r, c), expected) << r << "," << c;
    }
}

TEST(PreprocessFrame, DownsampleIndexMap) {
  // 180x320 -> 90x160: output (r,c) must equal source (2r, 2c)
  Image img = Image::filled(180, 320, 0, 0, 0);
  std::mt19937_64 rng(23);
  for (auto& b : img.rgb) b = static_cast<std::uint8_t>(rng() & 0xff);
  ChannelStats stats;
  Tensor t = preprocess_frame(img, stats);
  const std::size_t plane = static_cast<std::size_t>(90) * 160;
  for (int r = 0; r < 90; r += 7)
    for (int c = 0; c < 160; c += 11)
      for (int ch = 0; ch < 3; ++ch)
        EXPECT_DOUBLE_EQ(t.data()[ch * plane + r * 160 + c], img.px(2 * r, 2 * c)[ch] / 255.0);
}

TEST(PreprocessFrame, ZeroStdIsError) {
  Image img = Image::filled(4, 4, 10, 10, 10);
  ChannelStats stats;
  stats.stddev = {1.0, 0.0, 1.0};
  EXPECT_THROW(preprocess_frame(img, stats, 4, 4), ContractError);
}

TEST(FrameStack, OldestFirstOrderPreserved) {
  ChannelStats stats;
  std::vector<Tensor> frames;
  for (int k = 0; k < 4; ++k) {
    Image img = Image::filled(6, 8, static_cast<std::uint8_t>(40 * k), 0, 0);
    frames.push_back(preprocess_frame(img, stats, 6, 8));
  }
  Tensor stack = stack_frames(frames);
  ASSERT_EQ(stack.shape(), (Shape{12, 6, 8}));
  const std::size_t plane = 48;
  for (int k = 0; k < 4; ++k)
    EXPECT_DOUBLE_EQ(stack.data()[3 * k * plane], 40.0 * k / 255.0) << "frame " << k;
  // deterministic re-assembly
  Tensor again = stack_frames(frames);
  for (std::int64_t i = 0; i < stack.size(); ++i)
    EXPECT_EQ(stack.data()[i], again.data()[i]);
}

TEST(SensorCsv, RoundTrip) {
  SensorLog log;
  for (int i = 0; i < 5; ++i) {
    SensorSample s;
    s.t = 0.1 * i;
    s.speed = 3.0 + 0.25 * i;
    s.course = wrap_deg_360(89.5 + i);
    s.lat = 37.87 + 1e-5 * i;
    s.lon = -122.26 - 1e-5 * i;
    log.samples.push_back(s);
  }
  const std::string path =
      (std::filesystem::temp_directory_path() / "introdrive_sensor_test.csv").string();
  write_sensor_csv(path, log);
  SensorLog back = read_sensor_csv(path);
  ASSERT_EQ(back.samples.size(), log.samples.size());
  for (std::size_t i = 0; i < log.samples.size(); ++i) {
    EXPECT_DOUBLE_EQ(back.samples[i].t, log.samples[i].t);
    EXPECT_DOUBLE_EQ(back.samples[i].speed, log.samples[i].speed);
    EXPECT_DOUBLE_EQ(back.samples[i].course, log.samples[i].course);
    EXPECT_DOUBLE_EQ(back.samples[i].lat, log.samples[i].lat);
    EXPECT_DOUBLE_EQ(back.samples[i].lon, log.samples[i].lon);
  }
  std::filesystem::remove(path);
}

TEST(SensorCsv, RejectsBadHeaderAndRows) {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "introdrive_bad.csv").string();
  {
    std::ofstream out(path);
    out << "time,speed\n0,1\n";
  }
  EXPECT_THROW(read_sensor_csv(path), ParseError);
  {
    std::ofstream out(path);
    out << kSensorCsvHeader << "\n0.0,1.0,90.0\n";
  }
  EXPECT_THROW(read_sensor_csv(path), ParseError);
  fs::remove(path);
}
