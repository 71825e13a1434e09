#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "tsdet/nn/autograd.hpp"
#include "tsdet/nn/ops.hpp"
#include "tsdet/nn/params.hpp"
#include "tsdet/rng.hpp"

using namespace tsdet;
using nn::Tensor;
using nn::Var;

namespace {

Tensor random_tensor(std::vector<std::int64_t> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.normal(0, scale);
  return t;
}

// Central-difference check of d(f)/d(x) against the tape, relative tolerance.
void gradcheck(Tensor x, const std::function<Var(const Var&)>& f, double tol = 1e-6) {
  Var leaf_x = nn::leaf(x);
  Var y = f(leaf_x);
  REQUIRE(y->value.numel() == 1);
  nn::GradStore store = nn::backward(y);
  const Tensor* g = store.find(leaf_x.get());
  REQUIRE(g != nullptr);

  for (std::int64_t i = 0; i < x.numel(); ++i) {
    double orig = x[i];
    double h = 1e-5 * std::max(1.0, std::abs(orig));
    x[i] = orig + h;
    double up = f(nn::leaf(x))->value.item();
    x[i] = orig - h;
    double down = f(nn::leaf(x))->value.item();
    x[i] = orig;
    double numeric = (up - down) / (2 * h);
    double analytic = (*g)[i];
    double denom = std::max({1.0, std::abs(numeric), std::abs(analytic)});
    INFO("element " << i << " numeric " << numeric << " analytic " << analytic);
    CHECK(std::abs(numeric - analytic) / denom < tol);
  }
}

}  // namespace

TEST_CASE("conv2d gradients (input, weight, bias)") {
  Rng rng(1);
  Tensor x = random_tensor({2, 5, 6}, rng);
  Tensor w = random_tensor({3, 2, 3, 3}, rng, 0.5);
  Tensor b = random_tensor({3}, rng, 0.2);
  Tensor weights = random_tensor({3, 3, 3}, rng);  // conv output 3x3x3 at stride 2 pad 1

  gradcheck(x, [&](const Var& v) {
    return nn::weighted_sum(nn::conv2d(v, nn::constant(w), nn::constant(b), 2, 1), weights);
  });
  gradcheck(w, [&](const Var& v) {
    return nn::weighted_sum(nn::conv2d(nn::constant(x), v, nn::constant(b), 2, 1), weights);
  });
  gradcheck(b, [&](const Var& v) {
    return nn::weighted_sum(nn::conv2d(nn::constant(x), nn::constant(w), v, 2, 1), weights);
  });
}

TEST_CASE("linear gradients") {
  Rng rng(2);
  Tensor x = random_tensor({4, 5}, rng);
  Tensor w = random_tensor({5, 3}, rng);
  Tensor b = random_tensor({3}, rng);
  Tensor weights = random_tensor({4, 3}, rng);
  gradcheck(x, [&](const Var& v) {
    return nn::weighted_sum(nn::linear(v, nn::constant(w), nn::constant(b)), weights);
  });
  gradcheck(w, [&](const Var& v) {
    return nn::weighted_sum(nn::linear(nn::constant(x), v, nn::constant(b)), weights);
  });
  gradcheck(b, [&](const Var& v) {
    return nn::weighted_sum(nn::linear(nn::constant(x), nn::constant(w), v), weights);
  });
}

TEST_CASE("relu gradient away from the kink") {
  Rng rng(3);
  Tensor x = random_tensor({20}, rng);
  for (auto& v : x.data) {
    if (std::abs(v) < 0.05) v += 0.2;  // keep clear of zero
  }
  Tensor weights = random_tensor({20}, rng);
  gradcheck(x, [&](const Var& v) { return nn::weighted_sum(nn::relu(v), weights); });
}

TEST_CASE("group_norm gradients") {
  Rng rng(4);
  Tensor x = random_tensor({4, 3, 5}, rng);
  Tensor gamma = random_tensor({4}, rng, 0.5);
  for (auto& v : gamma.data) v += 1.0;
  Tensor beta = random_tensor({4}, rng, 0.2);
  Tensor weights = random_tensor({4, 3, 5}, rng);
  gradcheck(x, [&](const Var& v) {
    return nn::weighted_sum(nn::group_norm(v, nn::constant(gamma), nn::constant(beta), 2), weights);
  }, 1e-5);
  gradcheck(gamma, [&](const Var& v) {
    return nn::weighted_sum(nn::group_norm(nn::constant(x), v, nn::constant(beta), 2), weights);
  });
  gradcheck(beta, [&](const Var& v) {
    return nn::weighted_sum(nn::group_norm(nn::constant(x), nn::constant(gamma), v, 2), weights);
  });
}

TEST_CASE("structural op gradients") {
  Rng rng(5);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({3, 2}, rng);

  Tensor wc = random_tensor({3, 6}, rng);
  gradcheck(a, [&](const Var& v) {
    return nn::weighted_sum(nn::concat_cols(v, nn::constant(b)), wc);
  });
  gradcheck(b, [&](const Var& v) {
    return nn::weighted_sum(nn::concat_cols(nn::constant(a), v), wc);
  });

  Tensor wr = random_tensor({6, 4}, rng);
  Tensor a2 = random_tensor({3, 4}, rng);
  gradcheck(a, [&](const Var& v) {
    return nn::weighted_sum(nn::concat_rows({v, nn::constant(a2)}), wr);
  });

  // gather with a duplicate index accumulates
  Tensor wg = random_tensor({3, 4}, rng);
  gradcheck(a, [&](const Var& v) {
    return nn::weighted_sum(nn::gather_rows(v, {1, 1, 2}), wg);
  });

  Tensor x4 = random_tensor({3, 8}, rng);
  Tensor w4 = random_tensor({3, 4}, rng);
  gradcheck(x4, [&](const Var& v) {
    return nn::weighted_sum(nn::gather_cols4(v, {1, 0, 1}), w4);
  });

  Tensor up_in = random_tensor({2, 3, 4}, rng);
  Tensor up_w = random_tensor({2, 6, 8}, rng);
  gradcheck(up_in, [&](const Var& v) { return nn::weighted_sum(nn::upsample_nearest2(v), up_w); });

  Tensor crop_w = random_tensor({2, 2, 3}, rng);
  gradcheck(up_in, [&](const Var& v) { return nn::weighted_sum(nn::crop2d(v, 2, 3), crop_w); });

  Tensor perm_in = random_tensor({6, 2, 2}, rng);  // A=3, k=2
  Tensor perm_w = random_tensor({12, 2}, rng);
  gradcheck(perm_in, [&](const Var& v) { return nn::weighted_sum(nn::rpn_permute(v, 3, 2), perm_w); });
}

TEST_CASE("stop_gradient passes values and blocks gradients") {
  Rng rng(6);
  Tensor x = random_tensor({4}, rng);
  Var leaf_x = nn::leaf(x);
  Var blocked = nn::stop_gradient(leaf_x);
  CHECK(blocked->value.data == x.data);
  CHECK_FALSE(blocked->requires_grad);

  // y = sum(x) + sum(stopgrad(x)); gradient must be all ones, not twos
  Tensor ones({4}, 1.0);
  Var y = nn::add(nn::weighted_sum(leaf_x, ones), nn::weighted_sum(blocked, ones));
  auto store = nn::backward(y);
  const Tensor* g = store.find(leaf_x.get());
  REQUIRE(g != nullptr);
  for (auto v : g->data) CHECK(v == 1.0);
}

TEST_CASE("shared subgraph accumulates gradients") {
  Tensor x({3}, std::vector<double>{1.0, 2.0, 3.0});
  Var leaf_x = nn::leaf(x);
  Tensor ones({3}, 1.0);
  Var s1 = nn::weighted_sum(leaf_x, ones);
  Var s2 = nn::weighted_sum(leaf_x, ones);
  auto store = nn::backward(nn::add(s1, s2));
  const Tensor* g = store.find(leaf_x.get());
  REQUIRE(g != nullptr);
  for (auto v : g->data) CHECK(v == 2.0);
}

TEST_CASE("roi_align: constant field, determinism, gradient") {
  Rng rng(7);
  // constant map pools to the constant
  Tensor flat({3, 16, 16}, 3.75);
  std::vector<Box> rois{{4, 4, 12, 12}, {0, 0, 16, 16}, {2.5, 3.5, 9.25, 15.0}};
  Var pooled = nn::roi_align(nn::constant(flat), rois, 1.0, 7, 2);
  CHECK(pooled->value.shape == std::vector<std::int64_t>{3, 3 * 7 * 7});
  for (auto v : pooled->value.data) CHECK(v == doctest::Approx(3.75).epsilon(1e-12));

  // identical rois give identical rows
  Tensor feat = random_tensor({3, 16, 16}, rng);
  std::vector<Box> twice{{2, 3, 11, 13}, {2, 3, 11, 13}};
  Var p2 = nn::roi_align(nn::constant(feat), twice, 1.0, 7, 2);
  for (std::int64_t j = 0; j < p2->value.dim(1); ++j) {
    CHECK(p2->value[j] == p2->value[p2->value.dim(1) + j]);
  }

  // analytic gradient vs central differences on a 3-channel 16x16 map
  Tensor weights = random_tensor({2, 3 * 7 * 7}, rng);
  std::vector<Box> grois{{1.5, 2.5, 12.0, 14.5}, {5, 5, 15.5, 15.5}};
  gradcheck(feat, [&](const Var& v) {
    return nn::weighted_sum(nn::roi_align(v, grois, 1.0, 7, 2), weights);
  }, 1e-4);
}

TEST_CASE("loss op gradients") {
  Rng rng(8);
  Tensor logits = random_tensor({5, 4}, rng);
  std::vector<int> labels{0, 3, 1, 2, 2};
  gradcheck(logits, [&](const Var& v) { return nn::softmax_ce_mean(v, labels); });

  Tensor blogits = random_tensor({6}, rng);
  std::vector<double> targets{1, 0, 1, 1, 0, 0};
  gradcheck(blogits, [&](const Var& v) { return nn::sigmoid_bce_mean(v, targets); });

  Tensor pred = random_tensor({4, 4}, rng);
  Tensor target = random_tensor({4, 4}, rng);
  // keep away from the |d| == beta kinks
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    if (std::abs(std::abs(pred[i] - target[i]) - 1.0) < 0.05) pred[i] += 0.2;
  }
  gradcheck(pred, [&](const Var& v) { return nn::smooth_l1(v, target, 1.0, 4.0); });
}

TEST_CASE("softmax guards") {
  Tensor logits({2, 3}, 0.0);
  CHECK_THROWS_AS(nn::softmax_ce_mean(nn::constant(logits), {0, 5}), std::invalid_argument);
  CHECK_THROWS_AS(nn::softmax_ce_mean(nn::constant(logits), {0}), std::invalid_argument);
  Tensor probs = nn::softmax_rows(logits);
  CHECK(probs[0] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("no-grad mode skips the tape") {
  Tensor x({2, 2}, 1.0);
  Var leaf_x = nn::leaf(x);
  {
    nn::NoGradGuard guard;
    Var y = nn::relu(leaf_x);
    CHECK_FALSE(y->requires_grad);
    CHECK(y->parents.empty());
  }
  Var y = nn::relu(leaf_x);
  CHECK(y->requires_grad);
}

TEST_CASE("parameter init is a pure function of (seed, name)") {
  nn::ParamStore a(42), b(42), c(43);
  Var p1 = a.create("layer.weight", {4, 4}, nn::Init::KaimingNormal);
  Var p2 = b.create("layer.weight", {4, 4}, nn::Init::KaimingNormal);
  Var p3 = c.create("layer.weight", {4, 4}, nn::Init::KaimingNormal);
  Var p4 = b.create("other.weight", {4, 4}, nn::Init::KaimingNormal);
  CHECK(p1->value.data == p2->value.data);
  CHECK(p1->value.data != p3->value.data);
  CHECK(p1->value.data != p4->value.data);
  CHECK_THROWS_AS(a.create("layer.weight", {2}, nn::Init::Zeros), std::invalid_argument);
}
