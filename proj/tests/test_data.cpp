#include <cmath>
#include <sstream>

#include "doctest.h"
#include "timae/data.hpp"
#include "timae/error.hpp"

using namespace timae;

namespace {

TimeSeries parse(const std::string& text, bool ts_col = false, bool ffill = false) {
  std::istringstream in(text);
  return parse_csv(in, CsvSchema{ts_col, ffill});
}

TimeSeries ramp(std::size_t T, std::size_t m = 1) {
  TimeSeries ts;
  for (std::size_t c = 0; c < m; ++c) ts.channel_names.push_back("c" + std::to_string(c));
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < m; ++c) ts.values.push_back(static_cast<double>(t) + 1000.0 * static_cast<double>(c));
  return ts;
}

}  // namespace

TEST_CASE("csv ingestion") {
  const auto ts = parse("a,b\n1,2\n3,4\n5,6\n");
  CHECK(ts.length() == 3);
  CHECK(ts.channels() == 2);
  CHECK(ts.at(2, 1) == 6);
  CHECK(ts.channel_names == std::vector<std::string>{"a", "b"});

  const auto with_time = parse("date,x,y\n2020-01-01,1,2\n2020-01-02,3,4\n", true);
  CHECK(with_time.channels() == 2);
  CHECK(with_time.timestamps.size() == 2);
  CHECK(with_time.timestamps[1] == "2020-01-02");

  try {
    parse("x\n1\n2\n3\nabc\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("row 5") != std::string::npos);
  }
  CHECK_THROWS_AS(parse(""), FormatError);
  CHECK_THROWS_AS(parse("x\n1\nnan\n"), ParseError);
  const auto filled = parse("x\n1\nnan\n4\n", false, true);
  CHECK(filled.values == std::vector<double>{1, 1, 4});
  CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", {}), IoError);
}

TEST_CASE("synthetic generator") {
  SyntheticSpec s;
  s.noise_sigma = 0;
  s.beta = 0;
  const auto a = generate_synthetic(s, 1);
  CHECK(a.length() == 2000);
  CHECK(a.at(0, 0) == 3.0);
  CHECK(generate_synthetic(s, 99).values == a.values);

  s.beta = 5;
  const auto b = generate_synthetic(s, 1);
  for (std::size_t t = 0; t < b.length(); t += 137) {
    const double u = static_cast<double>(t) / 1999.0;
    CHECK(b.at(t, 0) - a.at(t, 0) == doctest::Approx(5 * u).epsilon(1e-12));
  }

  SyntheticSpec noisy;
  CHECK(generate_synthetic(noisy, 4).values == generate_synthetic(noisy, 4).values);
  CHECK(generate_synthetic(noisy, 4).values != generate_synthetic(noisy, 5).values);

  CHECK(SyntheticSpec::parse(noisy.str()).str() == noisy.str());
  const auto p = SyntheticSpec::parse("alpha=600,beta=100,sigma=0.05,length=512");
  CHECK(p.alpha == 600);
  CHECK(p.beta == 100);
  CHECK(p.noise_sigma == 0.05);
  CHECK(p.length == 512);
  CHECK_THROWS_AS(SyntheticSpec::parse("alpha=-1"), ConfigError);
  CHECK_THROWS_AS(SyntheticSpec::parse("gamma=2"), ConfigError);
}

TEST_CASE("chronological splits") {
  auto s = split(1000, SplitSpec::parse("6:2:2"));
  CHECK(s.train.size() == 600);
  CHECK(s.val.size() == 200);
  CHECK(s.test.size() == 200);
  CHECK(s.train.end == s.val.begin);
  CHECK(s.val.end == s.test.begin);
  s = split(10, SplitSpec::parse("7:1:2"));
  CHECK(s.train.size() == 7);
  CHECK(s.val.size() == 1);
  CHECK(s.test.size() == 2);
  s = split(10, SplitSpec::parse("0.7,0.1,0.2"));
  CHECK(s.train.size() == 7);

  s = split(50, SplitSpec{1, 0, 0});
  CHECK(s.train.size() == 50);
  CHECK(s.test.size() == 0);
  CHECK_THROWS_AS(split(50, SplitSpec{1, 0, 0}, 10), ConfigError);
  CHECK_THROWS_AS(split(100, SplitSpec::parse("6:2:2"), 30), ConfigError);
  CHECK_THROWS_AS(SplitSpec::parse("1:2"), ConfigError);
}

TEST_CASE("sliding windows") {
  CHECK(window_starts(5, {3, 1, 0}).size() == 3);
  CHECK(window_starts(5, {3, 1, 2}).size() == 1);
  CHECK(window_starts(12, {4, 4, 0}) == std::vector<std::size_t>{0, 4, 8});
  CHECK_THROWS_AS(window_starts(5, {6, 1, 0}), ConfigError);

  // Supervised windows pair [t, t+L) with [t+L, t+L+k) on the last channel.
  WindowSet ws(ramp(6, 2), {3, 1, 2}, 1);
  const auto b = ws.all();
  CHECK(b.batch == 2);
  CHECK(b.inputs.size() == 2 * 3 * 2);
  CHECK(b.targets == std::vector<double>{1003, 1004, 1004, 1005});
  CHECK(b.inputs[0] == 0);
  CHECK(b.inputs[1] == 1000);
}

TEST_CASE("windows never cross a split boundary") {
  auto ts = ramp(100);
  const auto s = split(100, SplitSpec::parse("6:2:2"), 10);
  // Poison the first value of each following block.
  ts.at(s.val.begin, 0) = 1e9;
  ts.at(s.test.begin, 0) = 1e9;
  for (const Range r : {s.train, s.val, s.test}) {
    WindowSet ws(ts.slice(r.begin, r.end), {10, 1, 0});
    const auto all = ws.all();
    const bool poisoned_start = r.begin != 0;
    for (std::size_t w = 0; w < all.batch; ++w)
      for (std::size_t i = 0; i < 10; ++i) {
        const double v = all.inputs[w * 10 + i];
        if (v == 1e9) CHECK((poisoned_start && w == 0 && i == 0));
        CHECK((v == 1e9 || (v >= static_cast<double>(r.begin) && v < static_cast<double>(r.end))));
      }
  }
}

TEST_CASE("normalization") {
  TimeSeries ts;
  ts.channel_names = {"const", "x"};
  for (int t = 0; t < 10; ++t) ts.values.insert(ts.values.end(), {4.0, 2.0 * t - 3});
  const auto n = Normalizer::fit(ts);
  CHECK(n.warnings().size() == 1);
  CHECK(n.stddevs()[0] == 1.0);
  const auto z = n.apply(ts);
  CHECK(z.at(3, 0) == 4.0);
  double mean = 0;
  for (int t = 0; t < 10; ++t) mean += z.at(t, 1) / 10;
  CHECK(std::abs(mean) < 1e-12);
  const auto back = n.inverse(z);
  for (std::size_t i = 0; i < ts.values.size(); ++i) CHECK(std::abs(back.values[i] - ts.values[i]) < 1e-9);

  // Statistics come from the train block only.
  auto series = ramp(100);
  for (std::size_t t = 60; t < 100; ++t) series.at(t, 0) += 500;
  const auto fitted = Normalizer::fit(series.slice(0, 60));
  CHECK(fitted.means()[0] == doctest::Approx(29.5));
}

TEST_CASE("augmentations") {
  WindowSet ws(ramp(20, 2), {5, 5, 0});
  const auto base = ws.all();
  Rng rng(2);

  auto b = base;
  AugmentParams unit;
  unit.scale_low = unit.scale_high = 1.0;
  augment(b, Augmentation::scaling, rng, unit);
  CHECK(b.inputs == base.inputs);

  b = base;
  AugmentParams still;
  still.jitter_fraction = 0;
  augment(b, Augmentation::jittering, rng, still);
  CHECK(b.inputs == base.inputs);

  b = base;
  augment(b, Augmentation::shifting, rng);
  for (std::size_t w = 0; w < b.batch; ++w)
    for (std::size_t c = 0; c < 2; ++c) {
      const double d0 = b.inputs[(w * 5) * 2 + c] - base.inputs[(w * 5) * 2 + c];
      CHECK(std::abs(d0) <= 0.1);
      for (std::size_t t = 1; t < 5; ++t)
        CHECK(b.inputs[(w * 5 + t) * 2 + c] - base.inputs[(w * 5 + t) * 2 + c] == doctest::Approx(d0));
    }

  b = base;
  augment(b, Augmentation::scaling, rng);
  for (std::size_t w = 0; w < b.batch; ++w) {
    const double s = b.inputs[(w * 5 + 1) * 2] / base.inputs[(w * 5 + 1) * 2];
    CHECK(s >= 0.8);
    CHECK(s <= 1.2);
  }
  CHECK_THROWS_AS(parse_augmentation("warp"), ParameterError);
}

TEST_CASE("equidistant subsampling") {
  const auto small = ramp(500);
  CHECK(equidistant_subsample(small).values == small.values);
  const auto big = ramp(2048);
  const auto sub = equidistant_subsample(big, 1024);
  CHECK(sub.length() == 1024);
  CHECK(sub.at(0, 0) == 0);
  CHECK(sub.at(1023, 0) == 2047);
  // A ramp stays a ramp up to index rounding.
  const double step = 2047.0 / 1023.0;
  for (std::size_t i = 0; i < 1024; ++i) CHECK(std::abs(sub.at(i, 0) - step * static_cast<double>(i)) <= 0.5);
}
