// SPDX-License-Identifier: Apache-2.0
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "tsiars/checkpoint.hpp"
#include "tsiars/contrast.hpp"
#include "tsiars/encoder.hpp"
#include "tsiars/error.hpp"
#include "tsiars/numerics/ops.hpp"

using namespace tsiars;
using numerics::Tensor;
using testing::random_tensor;

namespace {

encoder::EncoderConfig tiny(bool layer_norm = false) {
  encoder::EncoderConfig c;
  c.input_dim = 2;
  c.hidden_dim = 8;
  c.output_dim = 4;
  c.num_blocks = 2;
  c.layer_norm = layer_norm;
  c.seed = 7;
  return c;
}

}  // namespace

TEST_CASE("encoder output shape and determinism") {
  encoder::EncoderConfig c = tiny();
  c.input_dim = 3;
  const auto p = encoder::init_encoder<double>(c);
  std::mt19937_64 rng(1);
  const auto x = random_tensor({2, 3, 16}, rng);
  const auto y = encoder::encode_values(x, p);
  CHECK(y.shape() == numerics::Shape{2, 4, 16});
  CHECK(encoder::encode_values(x, p) == y);
  CHECK(encoder::init_encoder<double>(c).tensors == p.tensors);
  c.seed = 8;
  CHECK(encoder::init_encoder<double>(c).tensors != p.tensors);
  CHECK_THROWS_AS(encoder::encode_values(random_tensor({2, 2, 16}, rng), p), std::invalid_argument);
  c.num_blocks = 0;
  CHECK_THROWS(encoder::init_encoder<double>(c));
  c.num_blocks = 1;
  c.kernel_width = 2;
  CHECK_THROWS(encoder::init_encoder<double>(c));
}

TEST_CASE("init is fan-in scaled") {
  const auto p = encoder::init_encoder<double>(tiny());
  const double bound_block = 1.0 / std::sqrt(8.0 * 3.0);
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    if (p.names[i].rfind("block", 0) != 0) continue;
    for (double v : p.tensors[i].values()) CHECK(std::fabs(v) <= bound_block);
  }
}

TEST_CASE("zeroed residual kernels reduce the encoder to its projections") {
  auto p = encoder::init_encoder<double>(tiny());
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    if (p.names[i].rfind("block", 0) == 0) p.tensors[i].fill(0.0);
  }
  std::mt19937_64 rng(2);
  const auto x = random_tensor({2, 2, 5}, rng);
  const auto y = encoder::encode_values(x, p);
  // input_proj.weight, input_proj.bias, ..., output_proj.weight, output_proj.bias
  const auto& wi = p.tensors[0];
  const auto& bi = p.tensors[1];
  const auto& wo = p.tensors[p.tensors.size() - 2];
  const auto& bo = p.tensors.back();
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t t = 0; t < 5; ++t) {
      std::vector<double> h(8);
      for (std::size_t j = 0; j < 8; ++j) {
        h[j] = bi[j];
        for (std::size_t d = 0; d < 2; ++d) h[j] += wi[j * 2 + d] * x.at(b, d, t);
      }
      for (std::size_t k = 0; k < 4; ++k) {
        double o = bo[k];
        for (std::size_t j = 0; j < 8; ++j) o += wo[k * 8 + j] * h[j];
        CHECK(y.at(b, k, t) == doctest::Approx(o).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("slice_overlap aligns absolute timesteps") {
  numerics::Tape<double> tape;
  std::mt19937_64 rng(3);
  const auto fa = tape.leaf(random_tensor({1, 2, 3}, rng), false);
  const auto fb = tape.leaf(random_tensor({1, 2, 3}, rng), false);
  augment::CropPlan plan{0, 3, 1, 4};
  const auto [o, op] = encoder::slice_overlap(tape, fa, fb, plan);
  CHECK(tape.value(o).shape() == numerics::Shape{1, 2, 2});
  CHECK(tape.value(o).at(0, 1, 0) == tape.value(fa).at(0, 1, 1));
  CHECK(tape.value(o).at(0, 1, 1) == tape.value(fa).at(0, 1, 2));
  CHECK(tape.value(op).at(0, 0, 0) == tape.value(fb).at(0, 0, 0));
  augment::CropPlan bad{0, 3, 1, 5};
  CHECK_THROWS_AS(encoder::slice_overlap(tape, fa, fb, bad), std::invalid_argument);
}

TEST_CASE("encoder gradients match finite differences") {
  for (bool ln : {false, true}) {
    const auto p = encoder::init_encoder<double>(tiny(ln));
    std::mt19937_64 rng(4);
    std::vector<Tensor<double>> inputs = p.tensors;
    inputs.push_back(random_tensor({2, 2, 7}, rng));
    const auto cfg = p.config;
    const testing::Builder mean_output = [cfg](auto& tape, const auto& v) {
      encoder::BoundParams bound{std::vector<numerics::Var>(v.begin(), v.end() - 1)};
      const auto y = encoder::encode(tape, v.back(), bound, cfg, encoder::MaskSettings{0.0, nullptr}, false);
      return numerics::mean(tape, y);
    };
    CHECK(testing::max_gradient_error(mean_output, inputs) < 1e-4);
  }
}

TEST_CASE("end-to-end gradient through encoder and combined loss") {
  const auto p = encoder::init_encoder<double>(tiny());
  std::mt19937_64 rng(5);
  std::vector<Tensor<double>> inputs = p.tensors;
  inputs.push_back(random_tensor({3, 2, 16}, rng));
  inputs.push_back(random_tensor({3, 2, 16}, rng));
  const auto cfg = p.config;
  const testing::Builder loss = [cfg](auto& tape, const auto& v) {
    encoder::BoundParams bound{std::vector<numerics::Var>(v.begin(), v.end() - 2)};
    const encoder::MaskSettings none{0.0, nullptr};
    const auto fa = encoder::encode(tape, v[v.size() - 2], bound, cfg, none, false);
    const auto fb = encoder::encode(tape, v.back(), bound, cfg, none, false);
    return contrast::combined_loss(tape, fa, fb, 0.5);
  };
  CHECK(testing::max_gradient_error(loss, inputs) < 1e-4);
}

TEST_CASE("checkpoint round trip") {
  const auto p = encoder::init_encoder<double>(tiny());
  const auto dir = std::filesystem::temp_directory_path() / "tsiars_ckpt_test";
  std::filesystem::remove_all(dir);
  checkpoint::save(dir, p);
  CHECK(checkpoint::stored_precision(dir) == "f64");
  const auto q = checkpoint::load<double>(dir);
  CHECK(q.tensors == p.tensors);
  CHECK(q.names == p.names);
  CHECK(q.config.hidden_dim == 8);
  CHECK(encoder::fingerprint(q) == encoder::fingerprint(p));
  const auto f = checkpoint::load<float>(dir / "encoder.json");
  CHECK(f.tensors[0][0] == static_cast<float>(p.tensors[0][0]));
  checkpoint::save(dir, p.cast<float>());
  CHECK(checkpoint::stored_precision(dir) == "f32");
  CHECK_THROWS(checkpoint::load<double>(dir / "missing"));
  std::filesystem::remove_all(dir);
}
