#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "siamprog/loss.hpp"
#include "siamprog/rng.hpp"

using namespace siamprog;

TEST_CASE("alpha transform endpoints and midpoint") {
  CHECK(alpha_of(ProgressionLevel::from_value(0.9)).value() == 1.0);
  CHECK(alpha_of(ProgressionLevel::from_value(0.1)).value() == 1.8);
  CHECK(alpha_of(ProgressionLevel::from_value(0.5)).value() == 1.4);
}

TEST_CASE("alpha table over all negative levels is exact") {
  // 1.9 - rho in integer tenths: {0.1,...,0.9} -> {1.8,...,1.0}
  for (int tenths = 1; tenths <= 9; ++tenths) {
    const Alpha a = alpha_of(ProgressionLevel::from_tenths(tenths));
    CHECK(a.tenths() == 19 - tenths);
    CHECK(a.value() == (19 - tenths) / 10.0);
  }
  CHECK_THROWS_AS(alpha_of(ProgressionLevel::from_tenths(10)), ValidationError);
}

TEST_CASE("alpha is strictly decreasing in rho") {
  for (int tenths = 2; tenths <= 9; ++tenths) {
    CHECK(alpha_of(ProgressionLevel::from_tenths(tenths)).value() <
          alpha_of(ProgressionLevel::from_tenths(tenths - 1)).value());
  }
}

TEST_CASE("progression level parsing") {
  CHECK(ProgressionLevel::from_value(0.3).tenths() == 3);
  CHECK(ProgressionLevel::from_value(1.0).is_conversion());
  CHECK_THROWS_AS(ProgressionLevel::from_value(0.25), ValidationError);
  CHECK_THROWS_AS(ProgressionLevel::from_value(0.0), ValidationError);
  CHECK_THROWS_AS(ProgressionLevel::from_value(1.1), ValidationError);
  CHECK_THROWS_AS(ProgressionLevel::from_tenths(0), ValidationError);
  CHECK_THROWS_AS(ProgressionLevel::from_tenths(11), ValidationError);
}

TEST_CASE("unweighted loss direct substitutions") {
  CHECK(unweighted_triplet_loss(Tensor::scalar(0.0), Tensor::scalar(1.0), 1.0).value() == 0.0);
  CHECK(unweighted_triplet_loss(Tensor::scalar(2.0), Tensor::scalar(1.0), 1.0).value() == 2.0);
  CHECK(unweighted_triplet_loss(Tensor::scalar(0.3), Tensor::scalar(5.0), 1.0).value() == 0.0);
}

TEST_CASE("weighted loss direct substitution") {
  const Alpha a18 = alpha_of(ProgressionLevel::from_value(0.1));
  const double loss =
      weighted_triplet_loss(Tensor::scalar(2.0), Tensor::scalar(1.0), a18, 1.0).value();
  CHECK(loss == doctest::Approx(1.2).epsilon(1e-12));
}

TEST_CASE("weighted loss with alpha 1 equals unweighted bit for bit") {
  const Alpha one = alpha_of(ProgressionLevel::from_value(0.9));
  REQUIRE(one.value() == 1.0);
  Rng rng(2024);
  for (int i = 0; i < 10000; ++i) {
    const double d_ap = rng.uniform(0.0, 10.0);
    const double d_an = rng.uniform(0.0, 10.0);
    const double margin = rng.uniform(0.0, 2.0);
    const double w =
        weighted_triplet_loss(Tensor::scalar(d_ap), Tensor::scalar(d_an), one, margin).value();
    const double u =
        unweighted_triplet_loss(Tensor::scalar(d_ap), Tensor::scalar(d_an), margin).value();
    CHECK(std::memcmp(&w, &u, sizeof w) == 0);
  }
}

TEST_CASE("losses are non-negative and zero exactly on the satisfied hinge") {
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    const double d_ap = rng.uniform(0.0, 5.0);
    const double d_an = rng.uniform(0.0, 5.0);
    const double margin = rng.uniform(0.0, 2.0);
    const int tenths = 1 + static_cast<int>(rng.below(9));
    const Alpha alpha = alpha_of(ProgressionLevel::from_tenths(tenths));

    const double u =
        unweighted_triplet_loss(Tensor::scalar(d_ap), Tensor::scalar(d_an), margin).value();
    CHECK(u >= 0.0);
    CHECK((u == 0.0) == (d_ap + margin <= d_an));

    const double w =
        weighted_triplet_loss(Tensor::scalar(d_ap), Tensor::scalar(d_an), alpha, margin).value();
    CHECK(w >= 0.0);
    CHECK((w == 0.0) == (d_ap + margin <= alpha.value() * d_an));
  }
}

TEST_CASE("with an active hinge, smaller rho gives strictly smaller loss") {
  const double d_ap = 3.0, d_an = 1.5, margin = 1.0;
  double prev = unweighted_triplet_loss(Tensor::scalar(d_ap), Tensor::scalar(d_an), margin).value();
  // decreasing rho from 0.9 downward increases alpha and eats into the loss
  for (int tenths = 9; tenths >= 1; --tenths) {
    const double w = weighted_triplet_loss(Tensor::scalar(d_ap), Tensor::scalar(d_an),
                                           alpha_of(ProgressionLevel::from_tenths(tenths)), margin)
                         .value();
    CHECK(w > 0.0);
    if (tenths < 9) CHECK(w < prev);
    prev = w;
  }
}

TEST_CASE("weighted loss gradient w.r.t. d_an is -alpha on the active hinge") {
  for (int tenths : {1, 4, 9}) {
    const Alpha alpha = alpha_of(ProgressionLevel::from_tenths(tenths));
    Tape tape;
    Tensor d_ap = tape.leaf(Tensor::scalar(2.0));
    Tensor d_an = tape.leaf(Tensor::scalar(1.0));
    GradMap g = tape.backward(weighted_triplet_loss(d_ap, d_an, alpha, 1.0));
    CHECK(g.at(d_an.node).data[0] == doctest::Approx(-alpha.value()).epsilon(1e-12));
    CHECK(g.at(d_ap.node).data[0] == 1.0);

    // finite-difference route for the same hinge
    auto graph = [&](const std::vector<Tensor>& in) {
      return weighted_triplet_loss(in[0], in[1], alpha, 1.0);
    };
    CHECK(gradcheck::check(graph, {Tensor::scalar(2.0), Tensor::scalar(1.0)}).pass);
  }
}

TEST_CASE("hinge gradient at the kink and in the clamped region is zero") {
  {
    // d_ap - alpha*d_an + margin == 0 exactly
    Tape tape;
    Tensor d_ap = tape.leaf(Tensor::scalar(1.0));
    Tensor d_an = tape.leaf(Tensor::scalar(2.0));
    GradMap g = tape.backward(
        weighted_triplet_loss(d_ap, d_an, alpha_of(ProgressionLevel::from_value(0.9)), 1.0));
    CHECK(g.at(d_ap.node).data[0] == 0.0);
    CHECK(g.at(d_an.node).data[0] == 0.0);
  }
  {
    Tape tape;
    Tensor d_ap = tape.leaf(Tensor::scalar(0.2));
    Tensor d_an = tape.leaf(Tensor::scalar(5.0));
    GradMap g = tape.backward(unweighted_triplet_loss(d_ap, d_an, 1.0));
    CHECK(g.at(d_ap.node).data[0] == 0.0);
    CHECK(g.at(d_an.node).data[0] == 0.0);
  }
}

TEST_CASE("loss input validation") {
  CHECK_THROWS_AS(unweighted_triplet_loss(Tensor::scalar(-0.5), Tensor::scalar(1.0), 1.0),
                  ValidationError);
  CHECK_THROWS_AS(unweighted_triplet_loss(Tensor::scalar(0.5), Tensor::scalar(1.0), -1.0),
                  ValidationError);
  CHECK_THROWS_AS(unweighted_triplet_loss(Tensor::zeros({2}), Tensor::scalar(1.0), 1.0),
                  ShapeError);
}
