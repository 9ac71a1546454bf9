#include "doa/adam.hpp"
#include "doa/backward.hpp"
#include "doa/loss.hpp"
#include "doa/training.hpp"

#include "oracles/dense_ops.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace doa;
using testsupport::error_kind_of;
using testsupport::random_cvector;

namespace {

Sample sample_for(const Dictionary& dic, std::uint64_t seed, double snr = 20.0) {
  DatasetSpec spec;
  spec.k_range = {1, 3};
  spec.min_sep = 0.1;
  spec.snr_db = snr;
  spec.seed = seed;
  return generate_sample(dic, spec, 0);
}

std::vector<Sample> dataset(const Dictionary& dic, Index count, std::uint64_t seed) {
  DatasetSpec spec;
  spec.count = count;
  spec.k_range = {1, 3};
  spec.min_sep = 0.1;
  spec.snr_db = 15.0;
  spec.seed = seed;
  return generate_dataset(dic, spec);
}

/// Moves every real parameter by a small deterministic amount and
/// re-applies the constraints.
Network nudged(Network net, double scale) {
  int k = 0;
  for (auto& block : parameter_blocks(net)) {
    if (block.role != ParamRole::Weight) continue;
    for (double& v : block.values) v += scale * std::sin(0.7 * ++k);
  }
  apply_constraints(net);
  return net;
}

std::vector<double> flat(Network& net) {
  std::vector<double> out;
  for (auto& block : parameter_blocks(net)) out.insert(out.end(), block.values.begin(), block.values.end());
  return out;
}

/// Circular-convolution-free smoothing with zero padding outside [0, N).
CVector linear_smooth(const CVector& x, const RVector& kernel) {
  const Index n = x.size();
  const Index half = kernel.size() / 2;
  CVector out = CVector::Zero(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (std::abs(i - j) <= half) out[i] += kernel[i - j + half] * x[j];
    }
  }
  return out;
}

}  // namespace

TEST(Loss, KernelValues) {
  const RVector g = laplacian_kernel(8, 0.5);
  ASSERT_EQ(g.size(), 9);
  EXPECT_EQ(g[4], 1.0);
  EXPECT_NEAR(g[5], std::exp(-2.0), 1e-15);
  EXPECT_NEAR(g[0], std::exp(-8.0), 1e-15);
  EXPECT_EQ(error_kind_of([] { laplacian_kernel(8, 0.0); }), ErrorKind::InvalidArgument);
}

TEST(Loss, SmootherMatchesDirectConvolution) {
  for (Index n : {7, 16}) {
    const CVector x = random_cvector(n, static_cast<std::uint64_t>(n));
    const LaplacianSmoother circ(n, {0.5, ConvolutionMode::Circular});
    EXPECT_LT(relative_error(circ.apply(x), oracle::circular_convolve(x, laplacian_kernel(n, 0.5))), 1e-12);
    const LaplacianSmoother lin(n, {1.5, ConvolutionMode::LinearTruncated});
    EXPECT_LT(relative_error(lin.apply(x), linear_smooth(x, laplacian_kernel(n, 1.5))), 1e-12);
  }
}

TEST(Loss, Examples) {
  const CVector x = random_cvector(32, 3);
  EXPECT_EQ(smoothed_nmse_loss(x, x), 0.0);
  EXPECT_NEAR(smoothed_nmse_loss(CVector::Zero(32), x), 1.0, 1e-14);
  const Complex c(0.4, -1.2);
  EXPECT_NEAR(smoothed_nmse_loss(c * x, x), std::norm(c - 1.0), 1e-12);
  // A tiny kernel scale leaves only the centre tap: plain NMSE.
  const CVector x_hat = random_cvector(32, 4);
  EXPECT_NEAR(smoothed_nmse_loss(x_hat, x, {1e-3, ConvolutionMode::Circular}),
              (x_hat - x).squaredNorm() / x.squaredNorm(), 1e-12);
  EXPECT_EQ(error_kind_of([&] { smoothed_nmse_loss(x_hat, CVector::Zero(32)); }), ErrorKind::UndefinedLoss);
}

TEST(Loss, SmoothingForgivesSmallShifts) {
  CVector x = CVector::Zero(64);
  x[20] = 1.0;
  CVector shifted = CVector::Zero(64);
  shifted[21] = 1.0;
  EXPECT_LT(smoothed_nmse_loss(shifted, x), (shifted - x).squaredNorm() / x.squaredNorm());
}

TEST(Loss, GradientMatchesDifferences) {
  for (auto mode : {ConvolutionMode::Circular, ConvolutionMode::LinearTruncated}) {
    const LaplacianSmoother sm(12, {0.5, mode});
    const CVector x = random_cvector(12, 5);
    CVector x_hat = random_cvector(12, 6);
    const CVector g = smoothed_nmse_with_grad(sm, x_hat, x).grad;
    const double h = 1e-6;
    for (Index i = 0; i < 12; ++i) {
      for (Complex dir : {Complex(1, 0), Complex(0, 1)}) {
        const Complex saved = x_hat[i];
        x_hat[i] = saved + h * dir;
        const double up = smoothed_nmse_with_grad(sm, x_hat, x).loss;
        x_hat[i] = saved - h * dir;
        const double down = smoothed_nmse_with_grad(sm, x_hat, x).loss;
        x_hat[i] = saved;
        const double exact = dir.real() != 0 ? g[i].real() : g[i].imag();
        EXPECT_NEAR(exact, (up - down) / (2 * h), 1e-7);
      }
    }
  }
}

TEST(Backward, SoftThresholdMatchesDifferences) {
  CVector z = random_cvector(20, 7);
  const CVector c = random_cvector(20, 8);
  const double beta = 0.6;
  auto objective = [&](const CVector& zz, double b) { return std::real(c.dot(soft_threshold(zz, b))); };
  CVector g_in = CVector::Zero(20);
  const double g_beta = soft_threshold_backward(z, beta, c, g_in);
  const double h = 1e-6;
  for (Index i = 0; i < 20; ++i) {
    if (std::abs(std::abs(z[i]) - beta) < 1e-3) continue;
    for (Complex dir : {Complex(1, 0), Complex(0, 1)}) {
      const Complex saved = z[i];
      z[i] = saved + h * dir;
      const double up = objective(z, beta);
      z[i] = saved - h * dir;
      const double down = objective(z, beta);
      z[i] = saved;
      EXPECT_NEAR(dir.real() != 0 ? g_in[i].real() : g_in[i].imag(), (up - down) / (2 * h), 1e-8);
    }
  }
  EXPECT_NEAR(g_beta, (objective(z, beta + h) - objective(z, beta - h)) / (2 * h), 1e-8);
}

/// Samples whose forward pass keeps every threshold input at least the
/// minimum margin from its kink, from consecutive seeds.
std::vector<Sample> checkable_samples(const Network& net, const Dictionary& dic, std::uint64_t first_seed,
                                      std::size_t count) {
  std::vector<Sample> out;
  for (std::uint64_t seed = first_seed; seed < first_seed + 40 && out.size() < count; ++seed) {
    Sample s = sample_for(dic, seed);
    if (threshold_margin(net, dic, s.measurement) >= kGradCheckMinMargin) out.push_back(std::move(s));
  }
  EXPECT_EQ(out.size(), count) << "too few samples clear of the threshold kinks";
  return out;
}

class GradientCheck : public ::testing::TestWithParam<NetKind> {};

TEST_P(GradientCheck, AtInitialization) {
  const Dictionary dic = build_dictionary(make_ula(8), 16);
  const Network net = init_network(GetParam(), dic, 3, 0.05, 1.0);
  for (const Sample& s : checkable_samples(net, dic, 7, 4)) {
    EXPECT_LT(grad_check(net, dic, s.measurement, s.scene.sparse_x), 1e-5);
  }
}

TEST_P(GradientCheck, AwayFromInitialization) {
  const Dictionary dic = build_dictionary(make_sla(8, 12, 3), 16);
  const Network net = nudged(init_network(GetParam(), dic, 3, 0.05, 1.0), 0.01);
  for (const Sample& s : checkable_samples(net, dic, 21, 2)) {
    EXPECT_LT(grad_check(net, dic, s.measurement, s.scene.sparse_x), 1e-5);
  }
}

TEST_P(GradientCheck, LinearLossMode) {
  const Dictionary dic = build_dictionary(make_ula(8), 16);
  const Network net = init_network(GetParam(), dic, 2, 0.05, 1.0);
  for (const Sample& s : checkable_samples(net, dic, 30, 2)) {
    EXPECT_LT(grad_check(net, dic, s.measurement, s.scene.sparse_x, std::nullopt, {1.0, ConvolutionMode::LinearTruncated}),
              1e-5);
  }
}

TEST(GradientMargin, InitialAdmmInputSitsAtBeta) {
  // The first ADMM-family layer sees u = 0, which is beta away from the kink.
  const Dictionary dic = build_dictionary(make_ula(8), 16);
  const Network net = init_network(NetKind::CadmmNet, dic, 1, 0.05, 1.0);
  EXPECT_LE(threshold_margin(net, dic, CVector::Zero(8)), 0.05);
  EXPECT_GT(threshold_margin(net, dic, CVector::Zero(8)), 0.0);
}

INSTANTIATE_TEST_SUITE_P(AllKinds, GradientCheck, ::testing::ValuesIn(kAllNetKinds),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Adam, TwoStepsByHand) {
  const Dictionary dic = build_dictionary(make_ula(4), 8);
  Network net = init_network(NetKind::CadmmNet, dic, 1, 0.5, 2.0);
  const std::vector<double> start = flat(net);
  Network g1 = zeros_like(net);
  Network g2 = zeros_like(net);
  {
    int k = 0;
    auto b1 = parameter_blocks(g1);
    auto b2 = parameter_blocks(g2);
    for (std::size_t b = 0; b < b1.size(); ++b) {
      for (std::size_t i = 0; i < b1[b].values.size(); ++i, ++k) {
        b1[b].values[i] = 0.01 * (k + 1);
        b2[b].values[i] = -0.02 * (k % 3);
      }
    }
  }
  const std::vector<double> a = flat(g1);
  const std::vector<double> b = flat(g2);
  AdamState st = make_adam(1e-3);
  ASSERT_TRUE(adam_step(net, g1, st));
  ASSERT_TRUE(adam_step(net, g2, st));
  const std::vector<double> got = flat(net);
  for (std::size_t i = 0; i < start.size(); ++i) {
    const double step1 = 1e-3 * a[i] / (std::abs(a[i]) + 1e-8);
    const double m = 0.9 * 0.1 * a[i] + 0.1 * b[i];
    const double v = 0.999 * 0.001 * a[i] * a[i] + 0.001 * b[i] * b[i];
    const double step2 = 1e-3 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.998001)) + 1e-8);
    EXPECT_NEAR(got[i], start[i] - step1 - step2, 1e-12) << i;
  }
  EXPECT_EQ(st.step_count, 2U);
}

TEST(Adam, NonFiniteGradientSkipsStep) {
  const Dictionary dic = build_dictionary(make_ula(4), 8);
  Network net = init_network(NetKind::Lista, dic, 2);
  const std::vector<double> before = flat(net);
  Network g = zeros_like(net);
  parameter_blocks(g)[1].values[3] = std::nan("");
  AdamState st = make_adam(1e-3);
  EXPECT_FALSE(adam_step(net, g, st));
  EXPECT_EQ(flat(net), before);
  EXPECT_EQ(st.skipped_steps, 1U);
  EXPECT_EQ(st.step_count, 0U);
}

TEST(Adam, KeepsConstraints) {
  const Dictionary dic = build_dictionary(make_ula(4), 8);
  Network net = init_network(NetKind::ChadmmNet, dic, 1, 1e-4, 1e-4);
  Network g = zeros_like(net);
  for (auto& block : parameter_blocks(g)) std::fill(block.values.begin(), block.values.end(), 1.0);
  AdamState st = make_adam(0.5);
  ASSERT_TRUE(adam_step(net, g, st));
  const auto& p = std::get<CirculantAdmmLayer>(net.layers[0]);
  EXPECT_GE(p.beta, 0.0);
  EXPECT_GE(p.rho, kRhoFloor);
  for (Index i = 5; i < 8; ++i) EXPECT_EQ(p.w[i], std::conj(p.w[8 - i]));
}

TEST(Chadmm, ProjectAfterUpdateVersusFoldedGradient) {
  // Under plain gradient descent the two ways of enforcing the tie differ on
  // each free entry n by lr * conj(g(N - n)).
  const Dictionary dic = build_dictionary(make_ula(4), 8);
  const Network net = init_network(NetKind::ChadmmNet, dic, 1);
  const CVector w = std::get<CirculantAdmmLayer>(net.layers[0]).w;
  const CVector g = random_cvector(8, 9);
  const double lr = 0.1;
  const CVector projected = project_hermitian_circulant(w - lr * g);
  Network folded_grad = zeros_like(net);
  std::get<CirculantAdmmLayer>(folded_grad.layers[0]).w = g;
  fold_tied_gradients(folded_grad);
  const CVector folded = project_hermitian_circulant(w - lr * std::get<CirculantAdmmLayer>(folded_grad.layers[0]).w);
  for (Index i = 1; i < 4; ++i) EXPECT_LT(std::abs((projected[i] - folded[i]) - lr * std::conj(g[8 - i])), 1e-14) << i;
  EXPECT_LT(std::abs(projected[0] - folded[0]), 1e-15);
  EXPECT_LT(std::abs(projected[4] - folded[4]), 1e-15);
}

TEST(Chadmm, FoldedGradientIsTiedDerivative) {
  const Dictionary dic = build_dictionary(make_ula(8), 16);
  const Sample s = sample_for(dic, 12);
  const Network net = nudged(init_network(NetKind::ChadmmNet, dic, 2, 0.05, 1.0), 0.01);
  const LaplacianSmoother sm(16, {});
  const PreparedNetwork prepared(net, dic);
  ForwardTrace trace;
  prepared.forward(s.measurement, &trace);
  Network grad = backward(prepared, trace, s.scene.sparse_x, sm).grad;
  fold_tied_gradients(grad);
  const CVector& g = std::get<CirculantAdmmLayer>(grad.layers[1]).w;
  const double h = 1e-5;
  for (Index i = 0; i <= 8; ++i) {
    for (Complex dir : {Complex(1, 0), Complex(0, 1)}) {
      auto loss_at = [&](double step) {
        Network probe = net;
        auto& w = std::get<CirculantAdmmLayer>(probe.layers[1]).w;
        w[i] += step * dir;
        apply_constraints(probe);
        return sample_loss(probe, dic, s.measurement, s.scene.sparse_x, sm);
      };
      const double numeric = (loss_at(h) - loss_at(-h)) / (2 * h);
      const double exact = dir.real() != 0 ? g[i].real() : g[i].imag();
      EXPECT_NEAR(exact, numeric, 1e-6 * std::max(1.0, std::abs(numeric))) << i;
    }
  }
}

TEST(Training, BatchGradientIndependentOfWorkers) {
  const Dictionary dic = build_dictionary(make_ula(8), 32);
  const auto samples = dataset(dic, 70, 3);
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  const LaplacianSmoother sm(32, {});
  for (NetKind k : {NetKind::CadmmNet, NetKind::Lista}) {
    const Network net = init_network(k, dic, 3);
    const PreparedNetwork prepared(net, dic);
    BatchResult ref = batch_gradient(prepared, sm, samples, idx, 1);
    for (int workers : {2, 3, 8}) {
      BatchResult other = batch_gradient(prepared, sm, samples, idx, workers);
      EXPECT_EQ(other.mean_loss, ref.mean_loss);
      EXPECT_EQ(flat(other.grad), flat(ref.grad)) << to_string(k) << " workers=" << workers;
    }
  }
}

TEST(Training, ZeroTruthSamplesAreSkipped) {
  const Dictionary dic = build_dictionary(make_ula(8), 32);
  auto samples = dataset(dic, 5, 4);
  samples[2].scene.sparse_x.setZero();
  std::vector<std::size_t> idx{0, 1, 2, 3, 4};
  const Network net = init_network(NetKind::CadmmNet, dic, 2);
  const BatchResult r = batch_gradient(PreparedNetwork(net, dic), LaplacianSmoother(32, {}), samples, idx);
  EXPECT_EQ(r.used, 4);
}

TEST(Training, DeterministicAndImproving) {
  const Dictionary dic = build_dictionary(make_ula(8), 32);
  const auto train_set = dataset(dic, 96, 5);
  const auto val_set = dataset(dic, 48, 6);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-2;
  cfg.seed = 3;
  const Network init = init_network(NetKind::CadmmNet, dic, 3, 0.1, 1.0);
  TrainResult a = train(init, dic, train_set, val_set, cfg, {});
  cfg.workers = 3;
  TrainResult b = train(init, dic, train_set, val_set, cfg, {});
  EXPECT_EQ(flat(a.final_net), flat(b.final_net));
  ASSERT_EQ(a.history.size(), 5U);
  EXPECT_EQ(a.history[0].epoch, 0);
  EXPECT_LT(a.best_val_loss, a.history[0].val_loss);
  EXPECT_GT(a.best_epoch, 0);
  EXPECT_EQ(a.optimizer.epochs_done, 4U);
}

TEST(Training, ResumeContinuesExactly) {
  const Dictionary dic = build_dictionary(make_ula(8), 32);
  const auto train_set = dataset(dic, 64, 7);
  const auto val_set = dataset(dic, 16, 8);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-2;
  const Network init = init_network(NetKind::ChadmmNet, dic, 2);
  TrainResult straight = train(init, dic, train_set, val_set, cfg, {});
  cfg.epochs = 2;
  TrainResult first = train(init, dic, train_set, val_set, cfg, {});
  cfg.epochs = 4;
  TrainResult second = train(first.final_net, dic, train_set, val_set, cfg, {}, {}, first.optimizer);
  EXPECT_EQ(flat(second.final_net), flat(straight.final_net));
  EXPECT_EQ(second.history.front().epoch, 2);
  EXPECT_EQ(second.history.back().epoch, 4);
}

TEST(Training, RejectsMismatchedData) {
  const Dictionary dic = build_dictionary(make_ula(8), 32);
  const Dictionary other = build_dictionary(make_ula(6), 32);
  const auto bad = dataset(other, 4, 1);
  EXPECT_EQ(error_kind_of([&] { train(init_network(NetKind::CadmmNet, dic, 2), dic, bad, {}, {}, {}); }),
            ErrorKind::Contract);
}
