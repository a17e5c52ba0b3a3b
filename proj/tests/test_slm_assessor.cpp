#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "ekicl/fixture.hpp"
#include "ekicl/slm_assessor.hpp"
#include "support/oracles.hpp"

using namespace ekicl;

namespace {

Matrix rows(std::initializer_list<std::vector<double>> r) {
  Matrix m;
  for (const auto& v : r) m.append_row(v);
  return m;
}

AssessorParams random_params(std::mt19937_64& gen, std::size_t D, std::size_t H, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  auto p = AssessorParams::zeros(D, H, 0.5 + (gen() % 100) / 100.0, gen());
  p.for_each([&](double& v) { v = u(gen); });
  return p;
}

}  // namespace

TEST(Judge, Examples) {
  auto p = AssessorParams::zeros(2, 1);
  EXPECT_EQ(judge(std::vector<double>{3.0, -7.0}, p), 0.5);
  p.w = {1, 1};
  EXPECT_NEAR(judge(std::vector<double>{1.0, 1.0}, p), 0.880797, 1e-6);
  p.w = {1, 0};
  p.b = -3;
  EXPECT_NEAR(judge(std::vector<double>{0.0, 5.0}, p), 0.047426, 1e-6);
  EXPECT_THROW(judge(std::vector<double>{1.0}, p), Error);
}

TEST(Sigmoid, StableAtExtremes) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_GT(sigmoid(-700.0), 0.0);
  EXPECT_LT(sigmoid(30.0), 1.0);
  EXPECT_TRUE(std::isfinite(sigmoid(-1e6)));
}

TEST(InjectNoise, SingleCandidateIsExact) {
  const Matrix E = rows({{1, 2}, {3, -4}});
  Rng rng(1);
  EXPECT_EQ(inject_noise(E, 0, 1.0, &rng), (std::vector<double>{3, -4}));
  EXPECT_EQ(inject_noise(E, 1, 1.0, &rng), (std::vector<double>{1, 2}));
  try {
    inject_noise(rows({{1, 2}}), 0, 1.0, &rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "no noise candidates");
  }
}

TEST(InjectNoise, WeightsFormASoftmax) {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto t = oracle::random_transcript(gen, 2 + gen() % 8, 1 + gen() % 5);
    Rng rng(gen());
    std::vector<double> y;
    inject_noise(t.vectors, gen() % t.vectors.rows(), 0.3 + (gen() % 10) / 5.0, &rng, &y);
    ASSERT_EQ(y.size(), t.vectors.rows() - 1);
    double sum = 0;
    for (double v : y) {
      EXPECT_GE(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(InjectNoise, DeterministicAndDrawCount) {
  std::mt19937_64 gen(4);
  const auto t = oracle::random_transcript(gen, 6, 3);
  Rng a(9), b(9), c(9);
  EXPECT_EQ(inject_noise(t.vectors, 2, 1.0, &a), inject_noise(t.vectors, 2, 1.0, &b));
  for (int k = 0; k < 5; ++k) c.gumbel();
  EXPECT_EQ(a.next(), c.next());
}

// Without Gumbel draws the weights are softmax(e_i . e_m / temp) over m != i.
TEST(InjectNoise, ZeroGumbelMatchesOracle) {
  const Matrix E = rows({{1, 0}, {0, 1}, {1, 1}});
  const double temp = 2.0;
  std::vector<double> y;
  const auto noise = inject_noise(E, 2, temp, nullptr, &y);
  const double a = std::exp(1.0 / temp), b = std::exp(1.0 / temp);
  EXPECT_NEAR(y[0], a / (a + b), 1e-15);
  EXPECT_NEAR(noise[0], 0.5, 1e-15);
  EXPECT_NEAR(noise[1], 0.5, 1e-15);
  std::vector<double> y0;
  inject_noise(E, 0, 1.0, nullptr, &y0);
  const double e0 = std::exp(0.0), e1 = std::exp(1.0);
  EXPECT_NEAR(y0[0], e0 / (e0 + e1), 1e-15);
  EXPECT_NEAR(y0[1], e1 / (e0 + e1), 1e-15);
}

// With a large temperature the Gumbel-softmax weights flatten, so the average noise vector
// approaches the mean of the candidates.
TEST(InjectNoise, HighTemperatureApproachesCandidateMean) {
  const Matrix E = rows({{0.5, -0.2}, {2.0, 1.0}, {-1.0, 3.0}, {0.0, -2.0}});
  std::vector<double> avg(2, 0.0);
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(seed);
    const auto n = inject_noise(E, 0, 1000.0, &rng);
    avg[0] += n[0] / 1000.0;
    avg[1] += n[1] / 1000.0;
  }
  const double mean0 = (2.0 - 1.0 + 0.0) / 3.0, mean1 = (1.0 + 3.0 - 2.0) / 3.0;
  EXPECT_NEAR(avg[0], mean0, 0.05 * std::max(1.0, std::abs(mean0)));
  EXPECT_NEAR(avg[1], mean1, 0.05 * std::max(1.0, std::abs(mean1)));
}

TEST(Perturb, Endpoints) {
  const std::vector<double> e = {4, 0}, n = {0, 4};
  EXPECT_EQ(perturb(e, n, 1.0), e);
  EXPECT_EQ(perturb(e, n, 0.0), n);
  EXPECT_EQ(perturb(e, n, 0.25), (std::vector<double>{1, 3}));
}

TEST(Confidence, PoolingAndZeroHead) {
  const auto p = AssessorParams::zeros(2, 3);
  const auto c = confidence(rows({{1, -2}, {0, 3}}), p);
  EXPECT_EQ(c.pooled, (std::vector<double>{1, 3}));
  EXPECT_EQ(c.s_conf, 0.5);
  EXPECT_EQ(confidence(rows({{-1, 7}}), p).pooled, (std::vector<double>{-1, 7}));
  EXPECT_THROW(confidence(Matrix(0, 2), p), Error);
}

TEST(Forward, Modes) {
  std::mt19937_64 gen(6);
  const auto params = random_params(gen, 3, 4);
  const auto t = oracle::random_transcript(gen, 5, 3);
  const auto a = forward(t, params, ForwardMode::EvalClean);
  const auto b = forward(t, params, ForwardMode::EvalClean);
  EXPECT_EQ(a.s_conf, b.s_conf);
  EXPECT_EQ(a.p, b.p);
  for (double p : a.p) {
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
  EXPECT_GT(a.s_conf, 0.0);
  EXPECT_LT(a.s_conf, 1.0);

  Rng r1(3), r2(3);
  EXPECT_EQ(forward(t, params, ForwardMode::TrainWithNoise, &r1).s_conf,
            forward(t, params, ForwardMode::TrainWithNoise, &r2).s_conf);
  EXPECT_THROW(forward(t, params, ForwardMode::TrainWithNoise), Error);

  const auto single = oracle::random_transcript(gen, 1, 3);
  Rng r3(1);
  EXPECT_THROW(forward(single, params, ForwardMode::TrainWithNoise, &r3), Error);
  EXPECT_NO_THROW(forward(single, params, ForwardMode::EvalClean));
}

TEST(Loss, MatchesDefinitionOracle) {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + gen() % 6, D = 1 + gen() % 4, H = 1 + gen() % 3;
    const auto params = random_params(gen, D, H);
    const auto t = oracle::random_transcript(gen, n, D);
    Rng rng(gen());
    const Matrix noise = inject_noise_all(t.vectors, params.temp, &rng);
    const double y = *t.gold_label == Label::AD ? 1.0 : 0.0;
    EXPECT_NEAR(loss_and_gradient(t.vectors, noise, y, params, nullptr),
                oracle::assessor_loss(t.vectors, noise, y, params), 1e-12);
  }
}

TEST(GradCheck, RandomSmallInstances) {
  std::mt19937_64 gen(10);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + gen() % 5, D = 1 + gen() % 4, H = 1 + gen() % 3;
    const auto params = random_params(gen, D, H);
    const auto t = oracle::random_transcript(gen, n, D);
    EXPECT_LT(grad_check(params, t, 1e-5).max_relative_error, 1e-4) << "trial " << trial;
  }
}

TEST(GradCheck, ZeroParamsAndInvalidStep) {
  std::mt19937_64 gen(12);
  const auto t = oracle::random_transcript(gen, 4, 3);
  const auto zero = AssessorParams::zeros(3, 2);
  EXPECT_LT(grad_check(zero, t, 1e-5).max_relative_error, 1e-4);
  try {
    grad_check(zero, t, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "invalid step");
  }
}

TEST(Train, DegenerateInputs) {
  std::mt19937_64 gen(14);
  auto a = oracle::random_transcript(gen, 4, 3, "a");
  auto b = oracle::random_transcript(gen, 4, 3, "b");
  a.gold_label = b.gold_label = Label::AD;
  TrainConfig cfg;
  cfg.epochs = 1;
  try {
    train(std::vector{a, b}, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate training set"), std::string::npos);
  }
  EXPECT_THROW(train(std::vector{a}, cfg), Error);
  b.gold_label = Label::HC;
  b.gold_label.reset();
  EXPECT_THROW(train(std::vector{a, b}, cfg), Error);
}

TEST(Train, ZeroEpochsAndDeterminism) {
  FixtureOptions opt;
  opt.n_train = 40;
  opt.n_test = 4;
  opt.dim = 6;
  const auto fx = make_fixture(opt);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.hidden = 8;
  const auto r0 = train(fx.train, cfg);
  EXPECT_EQ(r0.params, AssessorParams::init(6, 8, cfg.temp, cfg.seed));
  EXPECT_TRUE(r0.loss_trace.empty());

  cfg.epochs = 5;
  const auto r1 = train(fx.train, cfg);
  const auto r2 = train(fx.train, cfg);
  EXPECT_EQ(r1.loss_trace, r2.loss_trace);
  EXPECT_EQ(r1.params, r2.params);
  EXPECT_EQ(r1.loss_trace.size(), 5u);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  std::mt19937_64 gen(16);
  const auto params = random_params(gen, 5, 3);
  const auto dir = std::filesystem::temp_directory_path() / "ekicl_ckpt";
  std::filesystem::create_directories(dir);
  save_params(dir / "p.json", params, TrainConfig{});
  EXPECT_EQ(load_params(dir / "p.json"), params);
  EXPECT_EQ(params_from_json(params_to_json(params)), params);

  auto j = params_to_json(params);
  j["format"] = "other";
  EXPECT_THROW(params_from_json(j), Error);
  j = params_to_json(params);
  j["temp"] = -1.0;
  EXPECT_THROW(params_from_json(j), Error);
}
