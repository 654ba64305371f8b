#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <limits>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "siamprog/rng.hpp"
#include "siamprog/tensor.hpp"

using namespace siamprog;

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(shape);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Uniform in [-1,-0.1] u [0.1,1]; keeps finite differences away from the
// relu kink.
Tensor random_tensor_off_kink(const Shape& shape, Rng& rng) {
  Tensor t = Tensor::zeros(shape);
  for (double& v : t.data) {
    const double mag = rng.uniform(0.1, 1.0);
    v = rng.below(2) == 0 ? mag : -mag;
  }
  return t;
}

}  // namespace

TEST_CASE("conv3d zero input stays zero") {
  Tensor in = Tensor::zeros({1, 4, 4, 4});
  Tensor k = Tensor::full({1, 1, 3, 3, 3}, 0.37);
  Tensor out = conv3d(in, k, 1, 0);
  CHECK(out.shape == Shape{1, 2, 2, 2});
  for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("conv3d all-ones counts kernel volume") {
  Tensor in = Tensor::full({1, 3, 3, 3}, 1.0);
  Tensor k = Tensor::full({1, 1, 3, 3, 3}, 1.0);
  Tensor out = conv3d(in, k, 1, 0);
  CHECK(out.shape == Shape{1, 1, 1, 1});
  CHECK(out.data[0] == 27.0);
}

TEST_CASE("conv3d matches the naive padded-loop oracle") {
  Rng rng(42);
  for (int stride = 1; stride <= 2; ++stride) {
    for (int padding = 0; padding <= 1; ++padding) {
      Tensor in = random_tensor({2, 5, 5, 5}, rng);
      Tensor k = random_tensor({3, 2, 3, 3, 3}, rng);
      Tensor out = conv3d(in, k, stride, padding);
      std::vector<double> want =
          oracle::conv3d(in.data, 2, 5, 5, 5, k.data, 3, 3, 3, 3, stride, padding);
      REQUIRE(out.data.size() == want.size());
      for (size_t i = 0; i < want.size(); ++i) {
        CHECK(std::fabs(out.data[i] - want[i]) < 1e-12);
      }
    }
  }
}

TEST_CASE("conv3d output extents follow the floor rule") {
  Rng rng(7);
  Tensor in = random_tensor({1, 7, 6, 5}, rng);
  Tensor k = random_tensor({2, 1, 3, 3, 3}, rng);
  Tensor out = conv3d(in, k, 2, 1);
  CHECK(out.shape == Shape{2, (7 + 2 - 3) / 2 + 1, (6 + 2 - 3) / 2 + 1, (5 + 2 - 3) / 2 + 1});
}

TEST_CASE("conv3d rejects channel mismatch and oversized kernels") {
  Tensor in = Tensor::zeros({2, 4, 4, 4});
  CHECK_THROWS_AS(conv3d(in, Tensor::zeros({1, 3, 3, 3, 3}), 1, 0), ShapeError);
  CHECK_THROWS_AS(conv3d(in, Tensor::zeros({1, 2, 5, 3, 3}), 1, 0), ShapeError);
}

TEST_CASE("dense identity and zero-weight cases") {
  Tensor eye = Tensor::zeros({3, 3});
  for (int i = 0; i < 3; ++i) eye.data[i * 3 + i] = 1.0;
  Tensor in({3}, {1.0, 2.0, 3.0});
  Tensor out = dense(in, eye, Tensor::zeros({3}));
  CHECK(out.data == std::vector<double>{1.0, 2.0, 3.0});

  Tensor b({2}, {0.5, -0.25});
  Tensor out2 = dense(Tensor::full({4}, 9.0), Tensor::zeros({2, 4}), b);
  CHECK(out2.data == b.data);
}

TEST_CASE("dense matches the scalar matvec oracle") {
  Rng rng(3);
  Tensor in = random_tensor({6}, rng);
  Tensor w = random_tensor({4, 6}, rng);
  Tensor b = random_tensor({4}, rng);
  Tensor out = dense(in, w, b);
  std::vector<double> want = oracle::matvec(w.data, b.data, in.data, 4, 6);
  for (size_t i = 0; i < want.size(); ++i) CHECK(std::fabs(out.data[i] - want[i]) < 1e-12);
}

TEST_CASE("dense rejects dimension mismatch") {
  CHECK_THROWS_AS(dense(Tensor::zeros({3}), Tensor::zeros({2, 4}), Tensor::zeros({2})), ShapeError);
  CHECK_THROWS_AS(dense(Tensor::zeros({4}), Tensor::zeros({2, 4}), Tensor::zeros({3})), ShapeError);
}

TEST_CASE("relu forward and subgradient convention") {
  Tensor x({3}, {-1.0, 0.0, 2.0});
  CHECK(relu(x).data == std::vector<double>{0.0, 0.0, 2.0});
  CHECK(relu(Tensor::full({5}, -3.0)).data == std::vector<double>(5, 0.0));

  Tape tape;
  Tensor p = tape.leaf(Tensor({2}, {-1.0, 2.0}));
  GradMap g = tape.backward(sum(relu(p)));
  CHECK(g.at(p.node).data == std::vector<double>{0.0, 1.0});
}

TEST_CASE("euclidean_distance basic identities") {
  Tensor a({2}, {0.0, 0.0});
  Tensor b({2}, {3.0, 4.0});
  CHECK(euclidean_distance(a, a).value() == 0.0);
  CHECK(euclidean_distance(a, b).value() == 5.0);
  CHECK_THROWS_AS(euclidean_distance(a, Tensor::zeros({3})), ShapeError);

  Rng rng(11);
  Tensor u = random_tensor({8}, rng);
  Tensor v = random_tensor({8}, rng);
  CHECK(std::fabs(euclidean_distance(u, v).value() - oracle::euclidean(u.data, v.data)) < 1e-12);
}

TEST_CASE("backward of sum and of distance-to-origin") {
  {
    Tape tape;
    Tensor p = tape.leaf(Tensor::full({3}, 2.5));
    GradMap g = tape.backward(sum(p));
    CHECK(g.at(p.node).data == std::vector<double>(3, 1.0));
  }
  {
    Tape tape;
    Tensor p = tape.leaf(Tensor({2}, {3.0, 4.0}));
    GradMap g = tape.backward(euclidean_distance(p, Tensor::zeros({2})));
    CHECK(g.at(p.node).data[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(g.at(p.node).data[1] == doctest::Approx(0.8).epsilon(1e-12));
  }
}

TEST_CASE("backward: unused parameters get zero gradients") {
  Tape tape;
  Tensor used = tape.leaf(Tensor::full({2}, 1.0));
  Tensor unused = tape.leaf(Tensor::full({3}, 1.0));
  GradMap g = tape.backward(sum(used));
  CHECK(g.at(unused.node).data == std::vector<double>(3, 0.0));
  CHECK(g.at(used.node).data == std::vector<double>(2, 1.0));
}

TEST_CASE("backward rejects non-scalar and off-tape losses") {
  Tape tape;
  Tensor p = tape.leaf(Tensor::full({2}, 1.0));
  CHECK_THROWS_AS(tape.backward(relu(p)), ShapeError);
  CHECK_THROWS_AS(tape.backward(Tensor::scalar(1.0)), Error);

  Tape other;
  Tensor q = other.leaf(Tensor::full({2}, 1.0));
  CHECK_THROWS_AS(add(p, q), Error);  // two live tapes cannot mix
}

TEST_CASE("diamond reuse accumulates gradients once per path") {
  Tape tape;
  Tensor p = tape.leaf(Tensor({2}, {1.0, 2.0}));
  Tensor lhs = relu(p);
  Tensor rhs = relu(p);
  GradMap g = tape.backward(sum(add(lhs, rhs)));
  CHECK(g.at(p.node).data == std::vector<double>{2.0, 2.0});
}

TEST_CASE("distance gradient at coincident points is zero") {
  Tape tape;
  Tensor p = tape.leaf(Tensor::full({3}, 1.5));
  GradMap g = tape.backward(euclidean_distance(p, Tensor::full({3}, 1.5)));
  CHECK(g.at(p.node).data == std::vector<double>(3, 0.0));
}

TEST_CASE("non-finite op outputs raise NumericError") {
  const double huge = std::numeric_limits<double>::max();
  Tensor big = Tensor::full({2}, huge);
  CHECK_THROWS_AS(add(big, big), NumericError);
  CHECK_THROWS_AS(sum(big), NumericError);
  CHECK_THROWS_AS(scale(big, 2.0), NumericError);
  CHECK_THROWS_AS(dense(Tensor::full({2}, huge), Tensor::full({1, 2}, huge), Tensor::zeros({1})),
                  NumericError);
}

TEST_CASE("forward evaluation is deterministic") {
  Rng rng(99);
  Tensor in = random_tensor({2, 4, 4, 4}, rng);
  Tensor k = random_tensor({2, 2, 3, 3, 3}, rng);
  Tensor a = conv3d(in, k, 1, 1);
  Tensor b = conv3d(in, k, 1, 1);
  CHECK(a.data == b.data);
}

// Property: analytic gradients of every primitive match central finite
// differences on randomized inputs.

TEST_CASE("gradcheck: conv3d (input and kernels)") {
  Rng rng(1234);
  for (int trial = 0; trial < 20; ++trial) {
    const int stride = 1 + static_cast<int>(rng.below(2));
    const int padding = static_cast<int>(rng.below(2));
    std::vector<Tensor> inputs = {random_tensor({2, 4, 4, 4}, rng),
                                  random_tensor({2, 2, 3, 3, 3}, rng)};
    Tensor coeffs = random_tensor({2, (4 + 2 * padding - 3) / stride + 1,
                                   (4 + 2 * padding - 3) / stride + 1,
                                   (4 + 2 * padding - 3) / stride + 1},
                                  rng);
    auto graph = [&](const std::vector<Tensor>& in) {
      // distance to a fixed random target makes the scalar sensitive to the
      // placement of every output element
      return euclidean_distance(conv3d(in[0], in[1], stride, padding), coeffs);
    };
    auto graph2 = [&](const std::vector<Tensor>& in) {
      return sum(conv3d(in[0], in[1], stride, padding));
    };
    CHECK(gradcheck::check(graph, inputs).pass);
    CHECK(gradcheck::check(graph2, inputs).pass);
  }
}

TEST_CASE("gradcheck: dense, relu, add, sub, scale, sum, pool, distance") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    {
      std::vector<Tensor> inputs = {random_tensor_off_kink({5}, rng),
                                    random_tensor_off_kink({3, 5}, rng),
                                    random_tensor_off_kink({3}, rng)};
      auto graph = [](const std::vector<Tensor>& in) {
        return sum(relu(dense(in[0], in[1], in[2])));
      };
      CHECK(gradcheck::check(graph, inputs).pass);
    }
    {
      std::vector<Tensor> inputs = {random_tensor({6}, rng), random_tensor({6}, rng)};
      auto graph = [](const std::vector<Tensor>& in) {
        return add_scalar(scale(euclidean_distance(in[0], in[1]), 1.7), 0.3);
      };
      CHECK(gradcheck::check(graph, inputs).pass);
    }
    {
      std::vector<Tensor> inputs = {random_tensor({2, 3, 3, 3}, rng)};
      auto graph = [](const std::vector<Tensor>& in) {
        return sum(global_avg_pool(in[0]));
      };
      CHECK(gradcheck::check(graph, inputs).pass);
    }
    {
      std::vector<Tensor> inputs = {random_tensor_off_kink({4}, rng), random_tensor({4}, rng)};
      auto graph = [](const std::vector<Tensor>& in) {
        return sum(sub(relu(in[0]), scale(in[1], 0.5)));
      };
      CHECK(gradcheck::check(graph, inputs).pass);
    }
  }
}
