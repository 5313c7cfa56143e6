#include <catch2/catch_amalgamated.hpp>

#include "ota/costs.hpp"
#include "oracles.hpp"

using namespace ota;

namespace {

std::vector<double> random_image(Rng& rng, std::size_t n) {
  std::vector<double> img(n);
  for (auto& v : img) v = rng.uniform();
  return img;
}

}  // namespace

TEST_CASE("cost: squared euclidean pythagorean case", "[costs]") {
  const std::vector<double> x{0, 0}, y{3, 4};
  CHECK(cost(squared_euclidean_cost(1.0), x, y) == 25.0);
  CHECK(cost(squared_euclidean_cost(0.5), x, y) == 12.5);
}

TEST_CASE("cost: zero at identical points for metric and ssim kinds", "[costs]") {
  Rng rng(3);
  const auto x = random_image(rng, 2);
  CHECK(cost(euclidean_cost(2.0), x, x) == 0.0);
  CHECK(cost(squared_euclidean_cost(3.0), x, x) == 0.0);

  const auto img = random_image(rng, 16 * 16);
  CostSpec ss{CostKind::SsimCost, 1.0, {{16, 16}}};
  CHECK(cost(ss, img, img) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("cost: euclidean is the square root of squared euclidean", "[costs]") {
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    const auto x = random_image(rng, 5);
    const auto y = random_image(rng, 5);
    const double e = cost(euclidean_cost(), x, y);
    const double s = cost(squared_euclidean_cost(), x, y);
    CHECK(e == Catch::Approx(std::sqrt(s)).epsilon(1e-12));
  }
}

TEST_CASE("cost: dimension and spec validation errors", "[costs]") {
  const std::vector<double> a{1, 2}, b{1, 2, 3};
  CHECK_THROWS_AS(cost(squared_euclidean_cost(), a, b), DimensionError);
  CostSpec no_shape{CostKind::SsimCost, 1.0, std::nullopt};
  CHECK_THROWS_AS(cost(no_shape, a, a), DimensionError);
  CostSpec bad_scale{CostKind::SquaredEuclidean, 0.0, std::nullopt};
  CHECK_THROWS_AS(cost(bad_scale, a, a), NumericError);
}

TEST_CASE("cost_grad_x: quadratic gradient", "[costs]") {
  const std::vector<double> x{1, 0}, y{0, 0};
  std::vector<double> g(2);
  cost_grad_x(squared_euclidean_cost(1.0), x, y, g);
  CHECK(g[0] == 2.0);
  CHECK(g[1] == 0.0);
}

TEST_CASE("cost_grad_x: euclidean at x==y is singular", "[costs]") {
  const std::vector<double> x{0.5, 0.5};
  std::vector<double> g(2);
  CHECK_THROWS_AS(cost_grad_x(euclidean_cost(), x, x, g), SingularCostError);
}

TEST_CASE("cost_grad_x: finite differences for every kind away from singularities",
          "[costs][property]") {
  Rng rng(23);
  const std::size_t side = 12;
  const std::size_t dim = side * side;
  const std::vector<CostSpec> specs = {
      euclidean_cost(1.3),
      squared_euclidean_cost(0.7),
      {CostKind::SsimCost, 1.0, {{side, side}}},
      {CostKind::PsnrCost, 1.0, {{side, side}}},
  };
  for (const auto& spec : specs) {
    auto x = random_image(rng, dim);
    const auto y = random_image(rng, dim);
    std::vector<double> analytic(dim);
    cost_grad_x(spec, x, y, analytic);
    auto scalar = [&] { return cost(spec, x, y); };
    const auto fd = oracle::fd_vector_gradient(x, scalar, 1e-6);
    CHECK(oracle::rel_error(analytic, fd) < 1e-4);
  }
}

TEST_CASE("ssim: identical and equal-constant images score 1", "[costs][ssim]") {
  Rng rng(5);
  const auto img = random_image(rng, 16 * 16);
  CHECK(ssim(img, img, 16, 16) == Catch::Approx(1.0).margin(1e-12));

  std::vector<double> c1(13 * 13, 0.42), c2(13 * 13, 0.42);
  CHECK(ssim(c1, c2, 13, 13) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("ssim: symmetric in its arguments", "[costs][ssim]") {
  Rng rng(6);
  const auto a = random_image(rng, 14 * 14);
  const auto b = random_image(rng, 14 * 14);
  CHECK(ssim(a, b, 14, 14) == Catch::Approx(ssim(b, a, 14, 14)).epsilon(1e-14));
}

TEST_CASE("ssim: matches the direct-formula oracle over all windows", "[costs][ssim]") {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t h = 15, w = 13;
    const auto a = random_image(rng, h * w);
    const auto b = random_image(rng, h * w);
    const double got = ssim(a, b, h, w);
    const double want = oracle::naive_ssim(a, b, h, w);
    CHECK(std::abs(got - want) < 1e-10);
  }
}

TEST_CASE("ssim: shape mismatch raises", "[costs][ssim]") {
  std::vector<double> a(25, 0.0), b(16, 0.0);
  CHECK_THROWS_AS(ssim(a, b, 5, 5), DimensionError);
  CHECK_THROWS_AS(ssim(a, a, 5, 5), DimensionError);  // below 11x11 window
}

TEST_CASE("psnr cost: direct formula at MSE 0.01", "[costs][psnr]") {
  const std::size_t dim = 64;
  std::vector<double> x(dim, 0.0), y(dim, 0.1);  // MSE = 0.01
  CostSpec spec{CostKind::PsnrCost, 1.0, {{8, 8}}};
  CHECK(cost(spec, x, y) == Catch::Approx(-20.0).epsilon(1e-12));
}

TEST_CASE("psnr cost: monotone in MSE over random pairs", "[costs][psnr]") {
  Rng rng(11);
  CostSpec spec{CostKind::PsnrCost, 1.0, {{6, 6}}};
  for (int i = 0; i < 50; ++i) {
    const auto x = random_image(rng, 36);
    const auto y1 = random_image(rng, 36);
    const auto y2 = random_image(rng, 36);
    const double m1 = squared_distance(std::span(x), std::span(y1));
    const double m2 = squared_distance(std::span(x), std::span(y2));
    if (m1 == m2) continue;
    const bool mse_less = m1 < m2;
    const bool cost_less = cost(spec, x, y1) < cost(spec, x, y2);
    CHECK(mse_less == cost_less);
  }
}

TEST_CASE("psnr cost: identical images raise", "[costs][psnr]") {
  std::vector<double> x(36, 0.3);
  CostSpec spec{CostKind::PsnrCost, 1.0, {{6, 6}}};
  CHECK_THROWS_AS(cost(spec, x, x), SingularCostError);
  std::vector<double> g(36);
  CHECK_THROWS_AS(cost_grad_x(spec, x, x, g), SingularCostError);
}

TEST_CASE("unit_diameter_scale: corner evaluations", "[costs]") {
  CHECK(unit_diameter_scale(squared_euclidean_cost(), BoundingBox::cube(2, 0, 1)) == 0.5);
  CHECK(unit_diameter_scale(euclidean_cost(), BoundingBox::cube(1, 0, 1)) == 1.0);
  CHECK(unit_diameter_scale(squared_euclidean_cost(), BoundingBox::cube(1024, 0, 1)) ==
        Catch::Approx(1.0 / 1024.0).epsilon(1e-15));
}

TEST_CASE("unit_diameter_scale: unbounded domain raises", "[costs]") {
  BoundingBox box = BoundingBox::cube(2, 0, 1);
  box.hi[1] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(unit_diameter_scale(squared_euclidean_cost(), box), NumericError);
}

TEST_CASE("level sets have vanishing measure (assumption proxy)", "[costs][property]") {
  // For each kind: the fraction of uniform y with cost(x,y) within tol of a
  // fixed level must shrink to zero as tol does.
  Rng rng(29);
  const std::size_t side = 12;
  const std::vector<CostSpec> specs = {
      euclidean_cost(),
      squared_euclidean_cost(),
      {CostKind::SsimCost, 1.0, {{side, side}}},
      {CostKind::PsnrCost, 1.0, {{side, side}}},
  };
  for (const auto& spec : specs) {
    const bool image = spec.image_shape.has_value();
    const std::size_t dim = image ? side * side : 2;
    const auto x = random_image(rng, dim);
    const auto y0 = random_image(rng, dim);
    const double level = cost(spec, x, y0);

    const int samples = image ? 400 : 4000;
    double prev_frac = 1.0;
    for (const double tol : {1e-2, 1e-4, 1e-7}) {
      int hits = 0;
      Rng inner(31);  // same y stream for each tolerance
      for (int s = 0; s < samples; ++s) {
        const auto y = random_image(inner, dim);
        if (std::abs(cost(spec, x, y) - level) < tol) ++hits;
      }
      const double frac = static_cast<double>(hits) / samples;
      CHECK(frac <= prev_frac);
      prev_frac = frac;
    }
    CHECK(prev_frac == 0.0);  // at 1e-7 no uniform sample sits on the level set
  }
}

TEST_CASE("joint positive scaling preserves every argmin of cost + psi",
          "[costs][property]") {
  Rng rng(37);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 8;
    const auto x = random_image(rng, 3);
    std::vector<std::vector<double>> ys(m);
    std::vector<double> psi(m);
    for (auto& y : ys) y = random_image(rng, 3);
    for (auto& p : psi) p = rng.uniform(-1, 1);
    const double lambda = rng.uniform(0.01, 100.0);

    auto argmin_at_scale = [&](double s) {
      std::size_t best = 0;
      double bestv = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < m; ++j) {
        const double v = cost(squared_euclidean_cost(s), x, ys[j]) + s * psi[j];
        if (v < bestv) {
          bestv = v;
          best = j;
        }
      }
      return best;
    };
    CHECK(argmin_at_scale(1.0) == argmin_at_scale(lambda));
  }
}
