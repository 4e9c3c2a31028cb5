#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "livekt/detail/minipfn_engine.hpp"
#include "livekt/error.hpp"
#include "livekt/pretrain.hpp"
#include "livekt/prior.hpp"
#include "livekt/weights_io.hpp"
#include "support.hpp"

using namespace livekt;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

bool weights_equal(const MiniPFNWeights& a, const MiniPFNWeights& b) {
  bool equal = true;
  auto& ma = const_cast<MiniPFNWeights&>(a);
  std::vector<const Eigen::MatrixXf*> tensors_a;
  detail::for_each_tensor(ma, [&](const std::string&, Eigen::MatrixXf& m) { tensors_a.push_back(&m); });
  std::size_t i = 0;
  detail::for_each_tensor(const_cast<MiniPFNWeights&>(b), [&](const std::string&, Eigen::MatrixXf& m) {
    if (i >= tensors_a.size() || m.rows() != tensors_a[i]->rows() || m.cols() != tensors_a[i]->cols() ||
        std::memcmp(m.data(), tensors_a[i]->data(), sizeof(float) * static_cast<std::size_t>(m.size())) != 0) {
      equal = false;
    }
    ++i;
  });
  return equal && i == tensors_a.size();
}

MiniPFNConfig tiny_config() {
  MiniPFNConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.n_blocks = 1;
  cfg.d_ff = 16;
  cfg.max_offsets = 4;
  cfg.max_features = 16;
  return cfg;
}

// <= 6 rows total, guaranteed two-class query
EpisodeBatch tiny_episode(std::uint64_t seed) {
  KTPriorParams prior;
  prior.n_students_min = 6;
  prior.n_students_max = 6;
  prior.T_min = 4;
  prior.T_max = 4;
  prior.full_length_prob = 1.0;
  prior.context_fraction = 0.6;
  return sample_kt_episode(prior, seed);
}

}  // namespace

TEST_CASE("rasch probability formula") {
  CHECK(rasch_correct_prob(0.7, 0.7, 0.0, 5) == doctest::Approx(0.5).epsilon(1e-12));
  // gamma 1, three prior attempts, theta = d = 0 -> sigmoid(3)
  CHECK(rasch_correct_prob(0.0, 0.0, 1.0, 3) ==
        doctest::Approx(1.0 / (1.0 + std::exp(-3.0))).epsilon(1e-9));
}

TEST_CASE("kt episodes are deterministic in (params, seed)") {
  KTPriorParams prior;
  const EpisodeBatch a = sample_kt_episode(prior, 42);
  const EpisodeBatch b = sample_kt_episode(prior, 42);
  CHECK(test::tables_equal(a.context, b.context));
  CHECK(test::tables_equal(a.query, b.query));
  const EpisodeBatch c = sample_kt_episode(prior, 43);
  CHECK(!test::tables_equal(a.context, c.context));
}

TEST_CASE("kt episodes respect the sampled shape bounds") {
  KTPriorParams prior;
  prior.n_students_min = 10;
  prior.n_students_max = 20;
  prior.T_min = 5;
  prior.T_max = 9;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const EpisodeBatch ep = sample_kt_episode(prior, seed);
    CHECK(ep.context.T >= 5);
    CHECK(ep.context.T <= 9);
    CHECK(ep.context.T == ep.query.T);
    const auto total = ep.context.rows.size() + ep.query.rows.size();
    CHECK(total <= 20);
    CHECK(!ep.query.rows.empty());
    CHECK(!is_degenerate_episode(ep));
  }
}

TEST_CASE("degenerate queries are resampled with seed+1 then rejected") {
  int calls = 0;
  const auto sample_stub = [&](std::uint64_t seed) {
    ++calls;
    EpisodeBatch ep;
    ep.seed = seed;
    ep.context.T = 4;
    ep.context.rows.resize(2);
    ep.query.T = 4;
    ep.query.rows.resize(2);
    // degenerate (single-class) until seed 5
    ep.query.rows[0].label = 1;
    ep.query.rows[1].label = seed >= 5 ? 0 : 1;
    return ep;
  };
  const EpisodeBatch ok = sample_with_retry(sample_stub, 2, 16);
  CHECK(ok.seed == 5);  // 2,3,4 degenerate, 5 fine
  CHECK(calls == 4);

  calls = 0;
  CHECK_THROWS_WITH_AS(sample_with_retry(sample_stub, 0, 2), doctest::Contains("degenerate"),
                       RuntimeError);
  CHECK(calls == 3);
}

TEST_CASE("scm episodes: determinism and rough label balance") {
  SCMPriorParams prior;
  const EpisodeBatch a = sample_scm_episode(prior, 7);
  const EpisodeBatch b = sample_scm_episode(prior, 7);
  CHECK(test::tables_equal(a.context, b.context));
  CHECK(test::tables_equal(a.query, b.query));

  std::int64_t positives = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const EpisodeBatch ep = sample_scm_episode(prior, 1000 + seed);
    for (const auto& row : ep.context.rows) {
      positives += row.label;
      ++total;
    }
    for (const auto& row : ep.query.rows) {
      positives += row.label;
      ++total;
    }
    // correctness columns stay binary codes
    for (const auto& row : ep.query.rows) {
      for (const auto c : row.past_correct) {
        CHECK(c >= 1);
        CHECK(c <= 2);
      }
    }
  }
  const double rate = static_cast<double>(positives) / static_cast<double>(total);
  CHECK(rate > 0.45);
  CHECK(rate < 0.55);
}

TEST_CASE("constant-score draws are flagged degenerate") {
  EpisodeBatch ep;
  ep.context.T = 4;
  ep.context.rows.resize(3);
  ep.query.T = 4;
  ep.query.rows.resize(3);
  for (auto& row : ep.query.rows) row.label = 0;  // what a zero scorer produces
  CHECK(is_degenerate_episode(ep));
  ep.query.rows[1].label = 1;
  CHECK(!is_degenerate_episode(ep));
}

TEST_CASE("gradient check: full tiny model within 1e-4") {
  const GradCheckResult r = grad_check(tiny_config(), tiny_episode(3), 1e-3, false, 5);
  INFO("worst parameter: ", r.worst_param);
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("gradient check: linear-only ablation is near-exact") {
  // the only curvature left is the softmax itself, so a small step makes the
  // central difference essentially exact
  const GradCheckResult r = grad_check(tiny_config(), tiny_episode(5), 1e-4, true, 5);
  INFO("worst parameter: ", r.worst_param);
  CHECK(r.max_rel_error < 1e-8);
}

TEST_CASE("doubling the FD step scales the discrepancy like h^2") {
  const EpisodeBatch ep = tiny_episode(7);
  const double e1 = grad_check(tiny_config(), ep, 1e-3, false, 5).max_rel_error;
  const double e2 = grad_check(tiny_config(), ep, 2e-3, false, 5).max_rel_error;
  REQUIRE(e1 > 0.0);
  const double factor = e2 / e1;
  CHECK(factor >= 2.0);
  CHECK(factor <= 8.0);
}

TEST_CASE("gradient check with dropout active") {
  MiniPFNConfig cfg = tiny_config();
  cfg.dropout = 0.2;
  const GradCheckResult r = grad_check(cfg, tiny_episode(9), 1e-3, false, 5);
  CHECK(r.max_rel_error <= 1e-4);
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  const MiniPFNConfig cfg = tiny_config();
  MiniPFNWeights w = init_weights<float>(cfg, 3);
  const MiniPFNWeights before = w;
  MiniPFNWeights zero_grad = init_weights<float>(cfg, 0);
  detail::for_each_tensor(zero_grad, [](const std::string&, Eigen::MatrixXf& m) { m.setZero(); });
  AdamState state = make_adam_state(cfg);
  TrainParams tp;
  adam_step(w, zero_grad, state, tp);
  adam_step(w, zero_grad, state, tp);
  CHECK(weights_equal(w, before));
}

TEST_CASE("pretrain with zero episodes returns the initialization unchanged") {
  KTPriorParams prior;
  prior.n_students_max = 16;
  prior.T_max = 6;
  TrainParams tp;
  tp.n_episodes = 0;
  tp.seed = 9;
  const MiniPFNConfig cfg = tiny_config();
  const PretrainResult r =
      pretrain([&](std::uint64_t s) { return sample_kt_episode(prior, s); }, tp, cfg);
  CHECK(r.episodes_done == 0);
  CHECK(r.curve.empty());
  CHECK(weights_equal(r.weights, init_weights<float>(cfg, 9)));
}

TEST_CASE("pretrain smoke run: finite losses, curve rows at every 100 episodes") {
  KTPriorParams prior;
  prior.n_students_min = 8;
  prior.n_students_max = 12;
  prior.T_min = 4;
  prior.T_max = 5;
  TrainParams tp;
  tp.n_episodes = 200;
  tp.batch_episodes = 8;
  tp.seed = 4;
  const PretrainResult r =
      pretrain([&](std::uint64_t s) { return sample_kt_episode(prior, s); }, tp, tiny_config());
  CHECK(r.episodes_done == 200);
  REQUIRE(r.curve.size() == 2);
  CHECK(r.curve[0].episode == 100);
  CHECK(r.curve[1].episode == 200);
  for (const auto& pt : r.curve) CHECK(std::isfinite(pt.smoothed_loss));
}

TEST_CASE("pretrain is deterministic and resume reproduces the uninterrupted run") {
  KTPriorParams prior;
  prior.n_students_min = 8;
  prior.n_students_max = 10;
  prior.T_min = 4;
  prior.T_max = 5;
  const auto sampler = [&](std::uint64_t s) { return sample_kt_episode(prior, s); };
  const MiniPFNConfig cfg = tiny_config();

  TrainParams full;
  full.n_episodes = 48;
  full.batch_episodes = 4;
  full.seed = 77;
  const PretrainResult straight = pretrain(sampler, full, cfg);
  const PretrainResult again = pretrain(sampler, full, cfg);
  CHECK(weights_equal(straight.weights, again.weights));

  const std::string ckpt = temp_path("livekt_test_resume.ckpt");
  TrainParams first_half = full;
  first_half.n_episodes = 24;
  first_half.checkpoint_path = ckpt;
  first_half.checkpoint_interval = 24;
  pretrain(sampler, first_half, cfg);

  TrainParams second_half = full;  // n_episodes = 48 continues from 24
  const PretrainResult resumed = pretrain_resume(ckpt, sampler, second_half);
  CHECK(resumed.episodes_done == 48);
  CHECK(weights_equal(straight.weights, resumed.weights));
  CHECK(straight.curve.size() == resumed.curve.size());
  std::remove(ckpt.c_str());
}

TEST_CASE("pretraining reduces loss on a small kt-prior run") {
  KTPriorParams prior;
  prior.n_students_min = 16;
  prior.n_students_max = 24;
  prior.T_min = 4;
  prior.T_max = 6;
  MiniPFNConfig cfg;
  cfg.d_model = 32;
  cfg.n_heads = 4;
  cfg.n_blocks = 2;
  cfg.d_ff = 64;
  cfg.max_offsets = 8;
  TrainParams tp;
  tp.n_episodes = 600;
  tp.seed = 21;
  const PretrainResult r =
      pretrain([&](std::uint64_t s) { return sample_kt_episode(prior, s); }, tp, cfg);
  REQUIRE(r.curve.size() == 6);
  CHECK(r.curve.back().smoothed_loss < r.curve.front().smoothed_loss);
  CHECK(r.curve.back().smoothed_loss < std::log(2.0));
}
