#include <catch2/catch_amalgamated.hpp>

#include "mixae/grad_check.hpp"
#include "mixae/model.hpp"

using namespace mixae;

namespace {

ModelConfig tiny_config(std::size_t n = 4, std::size_t d = 2, std::size_t k = 2,
                        Activation act = Activation::Tanh) {
  ModelConfig cfg;
  cfg.input_dim = n;
  cfg.latent_dim = d;
  cfg.num_autoencoders = k;
  cfg.encoder_hidden = {5};
  cfg.man_hidden = {4};
  cfg.activation = act;
  cfg.reconstruction_loss = ReconLoss::Mse;
  return cfg;
}

Tensor random_input(std::size_t batch, std::size_t n, SeededRng& rng) {
  Tensor x({batch, n});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
  return x;
}

// Flattens all parameters into one vector and back, for whole-model
// finite-difference checks.
std::vector<double> flatten(const MixaeParams& params) {
  std::vector<double> out;
  for_each_tensor(const_cast<MixaeParams&>(params), [&out](Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) out.push_back(t[i]);
  });
  return out;
}

void unflatten(MixaeParams& params, const std::vector<double>& flat) {
  std::size_t pos = 0;
  for_each_tensor(params, [&flat, &pos](Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = flat[pos++];
  });
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig cfg = tiny_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.latent_dim = cfg.input_dim;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.num_autoencoders = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("encode zero parameters give zero latent") {
  ModelConfig cfg = tiny_config();
  SeededRng rng(1);
  MixaeParams params = MixaeParams::init(cfg, rng);
  for_each_tensor(params, [](Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.0;
  });
  Tensor z = encode(params, cfg, random_input(3, 4, rng), 0);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == 0.0);
}

TEST_CASE("single-layer identity encoder is a passthrough") {
  ModelConfig cfg;
  cfg.input_dim = 3;
  cfg.latent_dim = 2;
  cfg.num_autoencoders = 2;
  cfg.encoder_hidden = {};
  cfg.man_hidden = {};
  SeededRng rng(2);
  MixaeParams params = MixaeParams::init(cfg, rng);
  // encoder: single 2x3 layer; make it select the first two coordinates
  params.autoencoders[0].encoder.layers[0] =
      LayerParams(Tensor::matrix({{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}}), Tensor({2}));
  Tensor x = Tensor::matrix({{1.5, -2.0, 7.0}});
  Tensor z = encode(params, cfg, x, 0);
  CHECK(z(0, 0) == 1.5);
  CHECK(z(0, 1) == -2.0);
}

TEST_CASE("decode with zero params under bce outputs 0.5") {
  ModelConfig cfg = tiny_config();
  cfg.reconstruction_loss = ReconLoss::Bce;
  SeededRng rng(3);
  MixaeParams params = MixaeParams::init(cfg, rng);
  for_each_tensor(params, [](Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.0;
  });
  Tensor z({2, 2});
  z[0] = 1.0;
  Tensor xt = decode(params, cfg, z, 1);
  for (std::size_t i = 0; i < xt.size(); ++i) CHECK(xt[i] == Catch::Approx(0.5));
}

TEST_CASE("encode and decode match manual layer-by-layer composition") {
  ModelConfig cfg = tiny_config();
  SeededRng rng(4);
  MixaeParams params = MixaeParams::init(cfg, rng);
  Tensor x = random_input(3, 4, rng);

  const Mlp& enc = params.autoencoders[1].encoder;
  Tensor manual = x;
  for (std::size_t i = 0; i < enc.layers.size(); ++i)
    manual = activation_forward(enc.activations[i], affine_forward(manual, enc.layers[i]));
  Tensor z = encode(params, cfg, x, 1);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == manual[i]);

  const Mlp& dec = params.autoencoders[1].decoder;
  Tensor manual_r = z;
  for (std::size_t i = 0; i < dec.layers.size(); ++i)
    manual_r = activation_forward(dec.activations[i], affine_forward(manual_r, dec.layers[i]));
  Tensor xt = decode(params, cfg, z, 1);
  for (std::size_t i = 0; i < xt.size(); ++i) CHECK(xt[i] == manual_r[i]);
}

TEST_CASE("identical autoencoders with symmetric MAN give uniform assignments") {
  ModelConfig cfg = tiny_config();
  SeededRng rng(5);
  MixaeParams params = MixaeParams::init(cfg, rng);
  // copy autoencoder 0 onto autoencoder 1
  params.autoencoders[1] = params.autoencoders[0];
  // make the MAN treat both latent blocks identically: first layer columns
  // for block 1 copy block 0, and the output layer rows are identical
  Mlp& man = params.man;
  Tensor& w0 = man.layers.front().weight;
  for (std::size_t r = 0; r < w0.rows(); ++r)
    for (std::size_t j = 0; j < cfg.latent_dim; ++j)
      w0(r, cfg.latent_dim + j) = w0(r, j);
  Tensor& wl = man.layers.back().weight;
  for (std::size_t c = 0; c < wl.cols(); ++c) wl(1, c) = wl(0, c);
  man.layers.back().bias[1] = man.layers.back().bias[0];

  ForwardOutput out = forward(params, cfg, random_input(3, 4, rng));
  for (std::size_t b = 0; b < 3; ++b) {
    CHECK(out.assignments(b, 0) == Catch::Approx(0.5).margin(1e-12));
    CHECK(out.assignments(b, 1) == Catch::Approx(0.5).margin(1e-12));
  }
}

TEST_CASE("single-sample forward equals its row within a batch") {
  ModelConfig cfg = tiny_config();
  SeededRng rng(6);
  MixaeParams params = MixaeParams::init(cfg, rng);
  Tensor batch = random_input(3, 4, rng);
  ForwardOutput full = forward(params, cfg, batch);
  ForwardOutput single = forward(params, cfg, batch.row(1));
  for (std::size_t c = 0; c < cfg.num_autoencoders; ++c)
    CHECK(single.assignments(0, c) == Catch::Approx(full.assignments(1, c)).margin(1e-14));
  for (std::size_t k = 0; k < cfg.num_autoencoders; ++k)
    for (std::size_t j = 0; j < cfg.input_dim; ++j)
      CHECK(single.reconstructions[k](0, j) ==
            Catch::Approx(full.reconstructions[k](1, j)).margin(1e-14));
}

TEST_CASE("forward assignments match manual encode-concat-MAN evaluation") {
  ModelConfig cfg = tiny_config(5, 2, 3);
  SeededRng rng(7);
  MixaeParams params = MixaeParams::init(cfg, rng);
  Tensor x = random_input(2, 5, rng);
  ForwardOutput out = forward(params, cfg, x);

  Tensor concat({2, cfg.latent_dim * cfg.num_autoencoders});
  for (std::size_t k = 0; k < cfg.num_autoencoders; ++k) {
    Tensor z = encode(params, cfg, x, k);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t j = 0; j < cfg.latent_dim; ++j)
        concat(b, k * cfg.latent_dim + j) = z(b, j);
  }
  Tensor p = softmax_forward(mlp_forward(params.man, concat));
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(out.assignments[i] == p[i]);
}

TEST_CASE("assignment rows stay on the simplex over random models") {
  SeededRng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    ModelConfig cfg = tiny_config(4, 2, 2 + rng.below(3));
    SeededRng init(rng.next_u64());
    MixaeParams params = MixaeParams::init(cfg, init);
    ForwardOutput out = forward(params, cfg, random_input(4, 4, init));
    for (std::size_t r = 0; r < out.assignments.rows(); ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < out.assignments.cols(); ++c) {
        CHECK(out.assignments(r, c) >= 0.0);
        sum += out.assignments(r, c);
      }
      CHECK(sum == Catch::Approx(1.0).margin(1e-6));
    }
  }
}

TEST_CASE("permuting autoencoder stacks and MAN blocks permutes assignments") {
  ModelConfig cfg = tiny_config(4, 2, 3);
  SeededRng rng(9);
  MixaeParams params = MixaeParams::init(cfg, rng);
  Tensor x = random_input(4, 4, rng);
  ForwardOutput base = forward(params, cfg, x);
  auto base_loss = total_loss(x, base.reconstructions, base.assignments,
                              cfg.reconstruction_loss, LossWeights{0.7, 0.4});

  // permutation (0 1 2) -> (2 0 1): new stack k comes from old stack perm[k]
  std::vector<std::size_t> perm{2, 0, 1};
  MixaeParams permuted = params;
  for (std::size_t k = 0; k < 3; ++k) permuted.autoencoders[k] = params.autoencoders[perm[k]];
  // first MAN layer: latent block k now carries old block perm[k]'s data
  Tensor& w0 = permuted.man.layers.front().weight;
  const Tensor& w0_old = params.man.layers.front().weight;
  for (std::size_t r = 0; r < w0.rows(); ++r)
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t j = 0; j < cfg.latent_dim; ++j)
        w0(r, k * cfg.latent_dim + j) = w0_old(r, perm[k] * cfg.latent_dim + j);
  // last MAN layer: output unit k must produce old unit perm[k]'s logit
  Tensor& wl = permuted.man.layers.back().weight;
  Tensor& bl = permuted.man.layers.back().bias;
  const Tensor& wl_old = params.man.layers.back().weight;
  const Tensor& bl_old = params.man.layers.back().bias;
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t c = 0; c < wl.cols(); ++c) wl(k, c) = wl_old(perm[k], c);
    bl[k] = bl_old[perm[k]];
  }

  ForwardOutput out = forward(permuted, cfg, x);
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t k = 0; k < 3; ++k)
      CHECK(out.assignments(b, k) == Catch::Approx(base.assignments(b, perm[k])).margin(1e-12));

  auto perm_loss = total_loss(x, out.reconstructions, out.assignments,
                              cfg.reconstruction_loss, LossWeights{0.7, 0.4});
  CHECK(perm_loss.breakdown.total == Catch::Approx(base_loss.breakdown.total).margin(1e-12));
}

TEST_CASE("backward without caches is a usage error") {
  ModelConfig cfg = tiny_config();
  SeededRng rng(10);
  MixaeParams params = MixaeParams::init(cfg, rng);
  Tensor x = random_input(2, 4, rng);
  ForwardOutput out = forward(params, cfg, x, false);
  Tensor gp({2, 2});
  std::vector<Tensor> gr{Tensor({2, 4}), Tensor({2, 4})};
  CHECK_THROWS_AS(backward(params, cfg, out, gp, gr), std::logic_error);
}

TEST_CASE("zero upstream gradients give zero parameter gradients") {
  ModelConfig cfg = tiny_config();
  SeededRng rng(11);
  MixaeParams params = MixaeParams::init(cfg, rng);
  Tensor x = random_input(2, 4, rng);
  ForwardOutput out = forward(params, cfg, x);
  MixaeParams grads = backward(params, cfg, out, Tensor({2, 2}),
                               {Tensor({2, 4}), Tensor({2, 4})});
  for_each_tensor(grads, [](Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) REQUIRE(t[i] == 0.0);
  });
}

TEST_CASE("one-hot reconstruction gradient reaches only the selected autoencoder") {
  // alpha=beta=0 and p frozen one-hot on autoencoder 1: only autoencoder 1
  // (and, through p, the MAN) can receive gradient. With the assignment
  // gradient zeroed here, the MAN and autoencoder 0's decoder must be silent;
  // encoder 0 still feeds the MAN input but gets nothing back through a zero
  // assignment gradient.
  ModelConfig cfg = tiny_config();
  SeededRng rng(12);
  MixaeParams params = MixaeParams::init(cfg, rng);
  Tensor x = random_input(3, 4, rng);
  ForwardOutput out = forward(params, cfg, x);

  Tensor gr1({3, 4});
  for (std::size_t i = 0; i < gr1.size(); ++i) gr1[i] = 1.0;
  MixaeParams grads = backward(params, cfg, out, Tensor({3, 2}), {Tensor({3, 4}), gr1});

  auto all_zero = [](const Mlp& m) {
    for (const auto& l : m.layers) {
      for (std::size_t i = 0; i < l.weight.size(); ++i)
        if (l.weight[i] != 0.0) return false;
      for (std::size_t i = 0; i < l.bias.size(); ++i)
        if (l.bias[i] != 0.0) return false;
    }
    return true;
  };
  auto any_nonzero = [&all_zero](const Mlp& m) { return !all_zero(m); };

  CHECK(all_zero(grads.autoencoders[0].decoder));
  CHECK(all_zero(grads.autoencoders[0].encoder));
  CHECK(all_zero(grads.man));
  CHECK(any_nonzero(grads.autoencoders[1].decoder));
  CHECK(any_nonzero(grads.autoencoders[1].encoder));
}

TEST_CASE("whole-model composite gradient matches finite differences") {
  ModelConfig cfg;
  cfg.input_dim = 4;
  cfg.latent_dim = 2;
  cfg.num_autoencoders = 2;
  cfg.encoder_hidden = {3};
  cfg.man_hidden = {3};
  cfg.activation = Activation::Tanh;
  cfg.reconstruction_loss = ReconLoss::Mse;
  SeededRng rng(13);
  MixaeParams params = MixaeParams::init(cfg, rng);
  Tensor x = random_input(3, 4, rng);
  LossWeights w{0.5, 0.8};

  ForwardOutput out = forward(params, cfg, x);
  auto loss = total_loss(x, out.reconstructions, out.assignments, cfg.reconstruction_loss, w);
  MixaeParams grads = backward(params, cfg, out, loss.grad_p, loss.grad_recon);

  std::vector<double> theta = flatten(params);
  std::vector<double> analytic = flatten(grads);
  Tensor theta_t({theta.size()}, theta);
  Tensor analytic_t({analytic.size()}, analytic);
  MixaeParams scratch = params;
  auto f = [&](const Tensor& flat) {
    std::vector<double> v(flat.data(), flat.data() + flat.size());
    unflatten(scratch, v);
    ForwardOutput o = forward(scratch, cfg, x, false);
    return total_loss(x, o.reconstructions, o.assignments, cfg.reconstruction_loss, w)
        .breakdown.total;
  };
  auto report = grad_check(f, theta_t, analytic_t, 1e-5);
  INFO("max rel error " << report.max_rel_error);
  CHECK(report.max_rel_error < 1e-5);
}
