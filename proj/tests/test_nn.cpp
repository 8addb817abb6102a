#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "htc/nn.hpp"
#include "htc/util.hpp"

using namespace htc;

namespace {

Mat<double> random_mat(int rows, int cols, Rng& rng) {
  Mat<double> m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.gaussian();
  return m;
}

Tensor4<double> random_tensor(int n, int c, int h, int w, Rng& rng) {
  Tensor4<double> t(n, c, h, w);
  t.data = random_mat(n, c * h * w, rng);
  return t;
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("same padding follows the ceil-division rule") {
  CHECK(same_out_size(100, 1) == 100);
  CHECK(same_out_size(100, 2) == 50);
  CHECK(same_out_size(50, 2) == 25);
  CHECK(same_out_size(25, 2) == 13);
  CHECK(same_out_size(13, 2) == 7);
  CHECK(same_out_size(7, 2) == 4);

  CHECK(same_pad_begin(5, 3, 1) == 1);
  CHECK(same_pad_begin(5, 3, 2) == 1);
  CHECK(same_pad_begin(4, 3, 2) == 0);  // odd total padding leans toward the end
  CHECK(same_pad_begin(7, 1, 1) == 0);
}

TEST_CASE("tensor activations store one zero-initialized sample per row") {
  Tensor4<float> t(2, 3, 4, 5);
  CHECK(t.features() == 60);
  CHECK(t.data.rows() == 2);
  CHECK(t.data.cols() == 60);
  CHECK(t.data.cwiseAbs().sum() == 0.0f);
}

TEST_CASE("convolution with an all-ones kernel sums the padded neighborhood") {
  Rng rng(3);
  Conv2d<double> conv(1, 1, 3, 1, rng, true);
  conv.weight().setOnes();
  conv.bias()(0, 0) = 0.5;

  Tensor4<double> x(1, 1, 3, 3);
  x.data << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  Tensor4<double> y = conv.forward(x);
  REQUIRE(y.c == 1);
  REQUIRE(y.h == 3);
  REQUIRE(y.w == 3);
  const double want[9] = {12, 21, 16, 27, 45, 33, 24, 39, 28};
  for (int i = 0; i < 9; ++i) CHECK(y.data(0, i) == want[i] + 0.5);
}

TEST_CASE("strided convolution keeps the ceil-mode output grid") {
  Rng rng(4);
  Conv2d<double> conv(1, 1, 3, 2, rng, false);
  conv.weight().setOnes();
  CHECK(conv.stride() == 2);

  Tensor4<double> x(1, 1, 3, 3);
  x.data << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  Tensor4<double> y = conv.forward(x);
  REQUIRE(y.h == 2);
  REQUIRE(y.w == 2);
  CHECK(y.data(0, 0) == 12.0);
  CHECK(y.data(0, 1) == 16.0);
  CHECK(y.data(0, 2) == 24.0);
  CHECK(y.data(0, 3) == 28.0);
}

TEST_CASE("dense layer gradients match finite differences for weights, bias, and input") {
  Rng rng(11);
  Dense<double> fc(5, 4, rng);
  Mat<double> x = random_mat(3, 5, rng);
  Mat<double> readout = random_mat(3, 4, rng);

  auto loss = [&] { return (fc.forward(x).array() * readout.array()).sum(); };
  fc.forward(x);
  Mat<double> dx = fc.backward(readout);

  auto params = fc.params("fc");
  REQUIRE(params.size() == 2);
  CHECK(params[0].name == "fc.w");
  CHECK(params[1].name == "fc.b");
  params.push_back({"x", &x, &dx});

  Rng pick(7);
  GradCheckReport rep = check_gradients(params, loss, 1e-6, size_t(1) << 20, pick);
  CHECK(rep.max_rel_err < 2e-6);
}

TEST_CASE("convolution gradients match finite differences through im2col") {
  Rng rng(12);
  Conv2d<double> conv(2, 3, 3, 2, rng, true);
  Tensor4<double> x = random_tensor(2, 2, 5, 5, rng);
  Tensor4<double> y = conv.forward(x);
  Tensor4<double> readout = random_tensor(y.n, y.c, y.h, y.w, rng);

  auto loss = [&] { return (conv.forward(x).data.array() * readout.data.array()).sum(); };
  Tensor4<double> dx = conv.backward(readout);

  auto params = conv.params("conv");
  REQUIRE(params.size() == 2);
  params.push_back({"x", &x.data, &dx.data});

  Rng pick(8);
  GradCheckReport rep = check_gradients(params, loss, 1e-6, size_t(1) << 20, pick);
  CHECK(rep.max_rel_err < 2e-6);
}

TEST_CASE("batch norm gradients cover the affine parameters and the batch-statistic coupling") {
  Rng rng(13);
  BatchNorm2d<double> bn(3);
  auto affine = bn.params("bn");
  REQUIRE(affine.size() == 2);
  CHECK(affine[0].name == "bn.gamma");
  CHECK(affine[1].name == "bn.beta");
  (*affine[0].value)(0, 0) = 1.3;
  (*affine[0].value)(0, 1) = 0.7;
  (*affine[0].value)(0, 2) = 1.9;
  (*affine[1].value)(0, 0) = 0.2;
  (*affine[1].value)(0, 1) = -0.4;
  (*affine[1].value)(0, 2) = 0.1;

  Tensor4<double> x = random_tensor(4, 3, 2, 2, rng);
  Tensor4<double> readout = random_tensor(4, 3, 2, 2, rng);
  auto loss = [&] { return (bn.forward(x, true).data.array() * readout.data.array()).sum(); };
  bn.forward(x, true);
  Tensor4<double> dx = bn.backward(readout);

  auto params = bn.params("bn");
  params.push_back({"x", &x.data, &dx.data});
  Rng pick(5);
  GradCheckReport rep = check_gradients(params, loss, 1e-6, size_t(1) << 20, pick);
  CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("batch norm standardizes while training and replays running statistics at inference") {
  BatchNorm2d<double> bn(2);
  Rng rng(21);
  Tensor4<double> x = random_tensor(8, 2, 3, 3, rng);
  Tensor4<double> y = bn.forward(x, true);

  for (int c = 0; c < 2; ++c) {
    double sum = 0.0, sq = 0.0;
    for (int r = 0; r < 8; ++r)
      for (int i = 0; i < 9; ++i) {
        double v = y.data(r, c * 9 + i);
        sum += v;
        sq += v * v;
      }
    double mu = sum / 72.0;
    CHECK(std::abs(mu) < 1e-12);
    CHECK(sq / 72.0 - mu * mu == doctest::Approx(1.0).epsilon(1e-4));
  }

  auto st = bn.state("bn");
  REQUIRE(st.size() == 2);
  CHECK(st[0].name == "bn.running_mean");
  CHECK(st[1].name == "bn.running_var");
  double rm = (*st[0].value)(0, 0);
  double rv = (*st[1].value)(0, 0);
  CHECK(rm != 0.0);  // one training batch moved the running average

  Tensor4<double> z = bn.forward(x, false);
  double want = (x.data(0, 0) - rm) / std::sqrt(rv + 1e-5);
  CHECK(z.data(0, 0) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("relu and global average pooling produce exact hand values") {
  Relu<double> relu;
  Tensor4<double> x(1, 1, 2, 2);
  x.data << -1.0, 2.0, 0.0, -3.0;
  Tensor4<double> y = relu.forward(x);
  CHECK(y.data(0, 0) == 0.0);
  CHECK(y.data(0, 1) == 2.0);
  CHECK(y.data(0, 2) == 0.0);
  CHECK(y.data(0, 3) == 0.0);

  Tensor4<double> g(1, 1, 2, 2);
  g.data << 5.0, 6.0, 7.0, 8.0;
  Tensor4<double> dx = relu.backward(g);
  CHECK(dx.data(0, 0) == 0.0);
  CHECK(dx.data(0, 1) == 6.0);
  CHECK(dx.data(0, 2) == 0.0);  // gradient is zero at the clamped zero as well
  CHECK(dx.data(0, 3) == 0.0);

  GlobalAvgPool<double> pool;
  Tensor4<double> p(1, 2, 2, 2);
  p.data << 1, 2, 3, 4, 10, 20, 30, 40;
  Mat<double> m = pool.forward(p);
  REQUIRE(m.rows() == 1);
  REQUIRE(m.cols() == 2);
  CHECK(m(0, 0) == 2.5);
  CHECK(m(0, 1) == 25.0);

  Mat<double> dm(1, 2);
  dm << 4.0, 8.0;
  Tensor4<double> dp = pool.backward(dm);
  for (int i = 0; i < 4; ++i) {
    CHECK(dp.data(0, i) == 1.0);
    CHECK(dp.data(0, 4 + i) == 2.0);
  }
}

TEST_CASE("residual block without shape change adds the identity and back-propagates exactly") {
  Rng rng(31);
  ResidualBlock<double> blk(3, 3, 1, rng);
  CHECK_FALSE(blk.has_projection());

  auto names = blk.params("blk");
  REQUIRE(names.size() == 6);  // two biasless convs plus two affine batch norms
  CHECK(names[2].name == "blk.conv1.w");
  CHECK(names[5].name == "blk.conv2.w");

  Tensor4<double> x = random_tensor(2, 3, 4, 4, rng);
  Tensor4<double> y = blk.forward(x, true);
  CHECK(y.c == 3);
  CHECK(y.h == 4);
  CHECK(y.w == 4);

  Tensor4<double> readout = random_tensor(2, 3, 4, 4, rng);
  auto loss = [&] { return (blk.forward(x, true).data.array() * readout.data.array()).sum(); };
  blk.forward(x, true);
  Tensor4<double> dx = blk.backward(readout);

  auto params = blk.params("blk");
  params.push_back({"x", &x.data, &dx.data});
  Rng pick(3);
  GradCheckReport rep = check_gradients(params, loss, 1e-6, size_t(1) << 20, pick);
  CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("residual block with a strided projection halves the grid and back-propagates exactly") {
  Rng rng(32);
  ResidualBlock<double> blk(2, 3, 2, rng);
  CHECK(blk.has_projection());
  CHECK(blk.params("blk").size() == 7);
  CHECK(blk.params("blk").back().name == "blk.proj.w");

  Tensor4<double> x = random_tensor(2, 2, 4, 4, rng);
  Tensor4<double> y = blk.forward(x, true);
  CHECK(y.c == 3);
  CHECK(y.h == 2);
  CHECK(y.w == 2);

  Tensor4<double> readout = random_tensor(2, 3, 2, 2, rng);
  auto loss = [&] { return (blk.forward(x, true).data.array() * readout.data.array()).sum(); };
  blk.forward(x, true);
  Tensor4<double> dx = blk.backward(readout);

  auto params = blk.params("blk");
  params.push_back({"x", &x.data, &dx.data});
  Rng pick(4);
  GradCheckReport rep = check_gradients(params, loss, 1e-6, size_t(1) << 20, pick);
  CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("mlp backward agrees with finite differences through the cross-entropy") {
  Mlp<double> mlp(6, 3, 42, 8, 5);
  CHECK(mlp.in_dim() == 6);
  CHECK(mlp.out_dim() == 3);
  CHECK(mlp.parameter_count() == 6 * 8 + 8 + 8 * 5 + 5 + 5 * 3 + 3);

  auto prs = mlp.params();
  REQUIRE(prs.size() == 6);
  CHECK(prs[0].name == "fc1.w");
  CHECK(prs[3].name == "fc2.b");
  CHECK(prs[5].name == "fc3.b");

  Rng rng(9);
  Mat<double> x = random_mat(4, 6, rng);
  std::vector<int> y{0, 1, 2, 0};
  auto loss = [&] { return softmax_ce_loss<double>(mlp.forward_logits(x), y, 1e-7); };
  Mat<double> dlogits;
  softmax_ce_loss<double>(mlp.forward_logits(x), y, 1e-7, &dlogits);
  mlp.backward(dlogits);

  Rng pick(17);
  GradCheckReport rep = check_gradients(mlp.params(), loss, 1e-6, size_t(12), pick);
  CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("softmax cross-entropy returns the mean loss and the closed-form gradient") {
  Mat<double> logits(2, 2);
  logits << 0.0, 0.0, 0.0, std::log(3.0);
  std::vector<int> y{0, 1};
  Mat<double> dl, probs;
  double loss = softmax_ce_loss<double>(logits, y, 1e-7, &dl, &probs);

  CHECK(loss == doctest::Approx(0.5 * (std::log(2.0) + std::log(4.0 / 3.0))).epsilon(1e-12));
  CHECK(probs(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(probs(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(probs(1, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(probs(1, 1) == doctest::Approx(0.75).epsilon(1e-12));

  CHECK(dl(0, 0) == doctest::Approx(-0.25).epsilon(1e-12));
  CHECK(dl(0, 1) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(dl(1, 0) == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(dl(1, 1) == doctest::Approx(-0.125).epsilon(1e-12));

  // an extreme logit gap bottoms out at the clip, not at infinity
  Mat<double> far(1, 2);
  far << 100.0, 0.0;
  std::vector<int> yf{1};
  CHECK(softmax_ce_loss<double>(far, yf, 1e-7) == doctest::Approx(-std::log(1e-7)).epsilon(1e-6));

  CHECK_THROWS_AS(softmax_ce_loss<double>(logits, std::vector<int>{0}, 1e-7), std::runtime_error);
}

TEST_CASE("row softmax normalizes and is invariant to constant shifts") {
  Rng rng(23);
  Mat<double> a = random_mat(3, 4, rng);
  Mat<double> b = a;
  b.array() += 7.5;
  Mat<double> pa = softmax_rows(a);
  Mat<double> pb = softmax_rows(b);
  CHECK((pa - pb).cwiseAbs().maxCoeff() < 1e-12);
  for (int r = 0; r < 3; ++r) CHECK(pa.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("adam applies bias-corrected unit steps under a constant gradient") {
  Mat<double> w = Mat<double>::Zero(1, 1);
  Mat<double> g = Mat<double>::Zero(1, 1);
  TrainConfig cfg;
  cfg.lr = 0.5;
  Adam<double> opt({{"w", &w, &g}}, cfg);
  for (int t = 1; t <= 3; ++t) {
    g(0, 0) = 1.0;
    opt.step();
    CHECK(w(0, 0) == doctest::Approx(-0.5 * t).epsilon(1e-6));
  }
  g(0, 0) = 123.0;
  opt.zero_grad();
  CHECK(g(0, 0) == 0.0);
}

TEST_CASE("the training loop learns a separable toy problem deterministically") {
  Rng rng(77);
  Mat<double> x(24, 2);
  std::vector<int> y(24);
  for (int i = 0; i < 24; ++i) {
    int c = i % 2;
    x(i, 0) = (c == 0 ? 2.0 : -2.0) + 0.1 * rng.gaussian();
    x(i, 1) = (c == 0 ? -2.0 : 2.0) + 0.1 * rng.gaussian();
    y[i] = c;
  }

  TrainConfig cfg;
  cfg.lr = 0.01;
  cfg.batch = 8;
  cfg.epochs = 40;
  cfg.seed = 5;

  Mlp<double> a(2, 2, 11, 8, 4);
  FitResult fa = fit_mlp(a, x, y, cfg);
  REQUIRE(fa.epoch_loss.size() == 40);
  CHECK(fa.epoch_loss.back() < 0.05);
  CHECK(fa.epoch_loss.back() < fa.epoch_loss.front());

  Mlp<double> b(2, 2, 11, 8, 4);
  FitResult fb = fit_mlp(b, x, y, cfg);
  CHECK(fa.epoch_loss == fb.epoch_loss);
  CHECK((a.forward_logits(x) - b.forward_logits(x)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("the training loop rejects malformed datasets and reports divergence") {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch = 8;
  Mlp<double> m(2, 2, 11, 8, 4);

  CHECK_THROWS_AS(fit_mlp(m, Mat<double>(0, 2), std::vector<int>{}, cfg), std::runtime_error);
  Mat<double> x = Mat<double>::Ones(3, 2);
  CHECK_THROWS_AS(fit_mlp(m, x, std::vector<int>{0, 1}, cfg), std::runtime_error);

  Rng rng(78);
  Mat<double> bad = random_mat(8, 2, rng);
  std::vector<int> yb{0, 1, 0, 1, 0, 1, 0, 1};
  bad(0, 0) = std::numeric_limits<double>::infinity();
  Mlp<double> diverge(2, 2, 11, 8, 4);
  CHECK_THROWS_WITH_AS(fit_mlp(diverge, bad, yb, cfg), "train: loss diverged (epoch 1)",
                       std::runtime_error);
}

TEST_CASE("the full-size residual network halves the grid per downsampling stage") {
  ResCnnSpec spec;
  spec.classes = 157;
  ResCnn<float> net(spec, 1);
  CHECK(net.spatial_trace() == std::vector<int>{100, 100, 50, 25, 13, 7});
  CHECK(net.block_count() == 8);
  CHECK_FALSE(net.spec().flatten_head);

  // persistence depends on distinct parameter and state names
  auto ps = net.params();
  auto ss = net.state();
  std::set<std::string> names;
  for (const auto& p : ps) names.insert(p.name);
  for (const auto& s : ss) names.insert(s.name);
  CHECK(names.size() == ps.size() + ss.size());

  Mat<float> x = Mat<float>::Zero(1, 100 * 100);
  Mat<float> logits = net.forward_logits(x, false);
  CHECK(logits.rows() == 1);
  CHECK(logits.cols() == 157);
  CHECK(logits.allFinite());
}

TEST_CASE("a flattened head consumes the final grid instead of pooling it") {
  ResCnnSpec tiny;
  tiny.in_side = 8;
  tiny.stem_channels = 4;
  tiny.stage_channels = {4, 8};
  tiny.stage_blocks = {1, 1};
  tiny.stage_strides = {1, 2};
  tiny.classes = 3;
  tiny.flatten_head = true;
  ResCnn<double> net(tiny, 2);
  CHECK(net.spatial_trace() == std::vector<int>{8, 8, 4});

  Rng rng(33);
  Mat<double> x = random_mat(2, 64, rng);
  Mat<double> logits = net.forward_logits(x, false);
  CHECK(logits.rows() == 2);
  CHECK(logits.cols() == 3);
  CHECK(logits.allFinite());
}

TEST_CASE("a tiny residual network passes an end-to-end gradient check") {
  ResCnnSpec tiny;
  tiny.in_side = 6;
  tiny.stem_channels = 3;
  tiny.stage_channels = {3, 5};
  tiny.stage_blocks = {1, 1};
  tiny.stage_strides = {1, 2};
  tiny.classes = 3;

  for (bool flatten : {false, true}) {
    CAPTURE(flatten);
    tiny.flatten_head = flatten;
    ResCnn<double> net(tiny, 4);
    Rng rng(41);
    Mat<double> x = random_mat(2, 36, rng);
    std::vector<int> y{0, 2};

    auto loss = [&] { return softmax_ce_loss<double>(net.forward_logits(x, true), y, 1e-7); };
    Mat<double> dlogits;
    softmax_ce_loss<double>(net.forward_logits(x, true), y, 1e-7, &dlogits);
    net.backward(dlogits);

    Rng pick(6);
    GradCheckReport rep = check_gradients(net.params(), loss, 1e-5, size_t(4), pick);
    CHECK(rep.max_rel_err < 1e-4);
  }
}

TEST_CASE("the residual network memorizes a two-pattern toy set") {
  ResCnnSpec tiny;
  tiny.in_side = 6;
  tiny.stem_channels = 4;
  tiny.stage_channels = {4, 8};
  tiny.stage_blocks = {1, 1};
  tiny.stage_strides = {1, 2};
  tiny.classes = 2;
  ResCnn<double> net(tiny, 7);

  // class 0 lights the left half of the grid, class 1 the right half
  Rng rng(51);
  Mat<double> x(8, 36);
  std::vector<int> y(8);
  for (int i = 0; i < 8; ++i) {
    int c = i % 2;
    for (int r = 0; r < 6; ++r)
      for (int col = 0; col < 6; ++col) {
        double base = ((col < 3) == (c == 0)) ? 1.0 : 0.0;
        x(i, r * 6 + col) = base + 0.05 * rng.gaussian();
      }
    y[i] = c;
  }

  TrainConfig cfg;
  cfg.lr = 5e-3;
  cfg.batch = 4;
  cfg.epochs = 15;
  cfg.seed = 3;
  FitResult res = fit_rescnn(net, x, y, cfg);
  REQUIRE(res.epoch_loss.size() == 15);
  CHECK(res.epoch_loss.back() < res.epoch_loss.front());

  Mat<double> p = softmax_rows(net.forward_logits(x, false));
  int correct = 0;
  for (int i = 0; i < 8; ++i) {
    int best = p(i, 0) >= p(i, 1) ? 0 : 1;
    if (best == y[i]) ++correct;
  }
  CHECK(correct >= 7);
}

TEST_CASE("layers reject mismatched input shapes") {
  Rng rng(61);
  Dense<double> fc(3, 2, rng);
  CHECK_THROWS_AS(fc.forward(Mat<double>::Zero(1, 4)), std::runtime_error);

  Conv2d<double> conv(2, 2, 3, 1, rng);
  CHECK_THROWS_AS(conv.forward(Tensor4<double>(1, 3, 4, 4)), std::runtime_error);

  BatchNorm2d<double> bn(2);
  CHECK_THROWS_AS(bn.forward(Tensor4<double>(1, 3, 2, 2), true), std::runtime_error);

  ResCnnSpec bad;
  bad.stage_channels = {4, 8};
  bad.stage_blocks = {1};
  bad.stage_strides = {1, 2};
  CHECK_THROWS_AS(ResCnn<double>(bad, 1), std::runtime_error);

  ResCnnSpec ok;
  ok.in_side = 8;
  ok.stem_channels = 2;
  ok.stage_channels = {2};
  ok.stage_blocks = {1};
  ok.stage_strides = {2};
  ResCnn<double> net(ok, 1);
  CHECK_THROWS_AS(net.forward_logits(Mat<double>::Zero(1, 63), false), std::runtime_error);
}

TEST_CASE("parameter counts follow the layer dimensions") {
  Rng rng(71);
  CHECK(Dense<double>(5, 4, rng).parameter_count() == 24);
  CHECK(Conv2d<double>(2, 3, 3, 1, rng, true).parameter_count() == 57);
  CHECK(Conv2d<double>(2, 3, 3, 1, rng, false).parameter_count() == 54);
  CHECK(BatchNorm2d<double>(7).parameter_count() == 14);

  Conv2d<double> biasless(2, 3, 3, 1, rng, false);
  auto ps = biasless.params("c");
  REQUIRE(ps.size() == 1);
  CHECK(ps[0].name == "c.w");

  // 10000-wide input into 512/128 hidden layers and 157 outputs
  Mlp<float> paper(10000, 157, 1);
  CHECK(paper.parameter_count() == 5206429);
}

}  // TEST_SUITE("nn")
