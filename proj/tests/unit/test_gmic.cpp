#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "../support/op_cases.hpp"
#include "../support/oracles.hpp"
#include "prognosis/error.hpp"
#include "prognosis/gmic.hpp"
#include "prognosis/topr.hpp"

using namespace prognosis;
using namespace prognosis::testing;

TEST_CASE("top-r pooling matches a sort oracle") {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> v(1 + rng.below(40));
    for (auto& x : v) x = rng.bernoulli(0.2) ? 0.5 : rng.uniform();
    const double r = rng.uniform(0.01, 1.0);
    CHECK(aggregate_topr(v, r) == topr_oracle(v, r));
  }
}

TEST_CASE("top-r count rounds up with float slack") {
  CHECK(topr_count(10, 0.3) == 3);
  CHECK(topr_count(10, 0.31) == 4);
  CHECK(topr_count(7, 0.01) == 1);
  CHECK(topr_count(4, 1.0) == 4);
}

TEST_CASE("top-r pooling is monotone in every entry") {
  Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> v(1 + rng.below(30));
    for (auto& x : v) x = rng.uniform();
    const double r = rng.uniform(0.05, 1.0);
    const double before = aggregate_topr(v, r);
    v[rng.below(v.size())] += rng.uniform(0.0, 0.5);
    CHECK(aggregate_topr(v, r) >= before);
  }
}

TEST_CASE("ROI selection matches an exhaustive window scan") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    GmicConfig cfg = tiny_config(1 + rng.below(4));
    cfg.saliency_side = 4 << rng.below(2);
    cfg.input_side = cfg.saliency_side * 4;
    cfg.global_channels = {2, 2};
    if (cfg.saliency_side == 4) cfg.global_channels = {2, 2, 2};
    cfg.crop_side = 4 * (1 + rng.below(3));
    cfg.num_patches = 1 + rng.below(6);
    Tensor maps = random_tensor(rng, {cfg.num_windows, cfg.saliency_side, cfg.saliency_side}, 0, 1);
    if (rng.bernoulli(0.2)) maps.fill(0.3);
    const auto got = select_roi_windows(maps, cfg);
    CHECK(got == roi_oracle(maps, cfg.window_cells(), cfg.num_patches, cfg.cell_pixels()));
  }
}

TEST_CASE("patches are crops resized to the patch side") {
  GmicConfig cfg = tiny_config(4);
  Rng rng(4);
  GrayImage img(16, 16);
  for (auto& v : img.pixels()) v = rng.uniform();
  Tensor maps({4, 4, 4}, 0.0);
  maps[5] = 1.0;  // cell (1, 1) in window 0
  const RoiSet rois = retrieve_rois(maps, img, cfg);
  REQUIRE(rois.positions.size() == 2);
  CHECK(rois.positions[0].cell_row == 0);
  CHECK(rois.positions[0].row == 0);
  CHECK(rois.patches[0] == resize_bilinear(crop(img, 0, 0, 8, 8), 6, 6));
}

TEST_CASE("forward pass shapes and ranges") {
  GmicConfig cfg = tiny_config(4);
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    GrayImage img(16, 16);
    for (auto& v : img.pixels()) v = rng.uniform();
    const auto out = gmic_forward(img, cfg, init_gmic_parameters(cfg, rng.next()));
    CHECK(out.saliency.shape() == Shape{4, 4, 4});
    for (double v : out.saliency.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    for (const auto* y : {&out.y_global, &out.y_local, &out.y_fusion}) {
      REQUIRE(y->size() == 4);
      for (double p : *y) {
        CHECK(p > 0.0);
        CHECK(p < 1.0);
      }
    }
    double total = 0.0;
    for (double a : out.rois.attention) total += a;
    CHECK(total == doctest::Approx(1.0));
  }
}

TEST_CASE("zero weights give one half everywhere") {
  GmicConfig cfg = tiny_config(4);
  NamedTensors params = init_gmic_parameters(cfg, 1);
  for (auto& [name, t] : params) t.fill(0.0);
  GrayImage img(16, 16, 0.5);
  const auto out = gmic_forward(img, cfg, params);
  for (double p : out.y_fusion) CHECK(p == 0.5);
  for (double p : out.y_global) CHECK(p == 0.5);
}

TEST_CASE("loss of a perfect prediction is zero") {
  GmicOutputs out;
  out.y_global = out.y_local = out.y_fusion = {1, 0, 0, 1};
  out.saliency = Tensor({4, 2, 2}, 0.25);
  CHECK(gmic_loss(std::vector<double>{1, 0, 0, 1}, out, 0.0) == doctest::Approx(0.0).epsilon(1e-9));
  // beta * sum |A| / T
  CHECK(gmic_loss(std::vector<double>{1, 0, 0, 1}, out, 0.5) == doctest::Approx(0.5 * 4.0 / 4.0).epsilon(1e-9));
  CHECK(bce(1.0, 0.5) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("graph and value forms of the loss agree") {
  GmicConfig cfg = tiny_config(4);
  Rng rng(6);
  GrayImage img(16, 16);
  for (auto& v : img.pixels()) v = rng.uniform();
  const auto params = init_gmic_parameters(cfg, 3);
  GmicGraph m = build_gmic(img, cfg, params);
  const std::vector<double> y{0, 1, 1, 0};
  const double node = m.graph.value(gmic_loss(m, y, 0.01)).item();
  CHECK(node == doctest::Approx(gmic_loss(y, m.outputs(), 0.01)).epsilon(1e-12));
}

TEST_CASE("invalid architectures and parameters are rejected") {
  GmicConfig cfg = tiny_config(4);
  cfg.saliency_side = 5;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = tiny_config(4);
  auto params = init_gmic_parameters(cfg, 1);
  params.erase("fusion.bias");
  CHECK_THROWS_AS(check_gmic_parameters(cfg, params), ShapeError);
  GrayImage wrong(8, 8);
  CHECK_THROWS_AS(gmic_forward(wrong, cfg, init_gmic_parameters(cfg, 1)), ShapeError);
}
