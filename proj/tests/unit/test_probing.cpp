#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "plab/lm/forward.hpp"
#include "plab/lm/model.hpp"
#include "plab/probing/probe.hpp"
#include "plab/util/error.hpp"
#include "plab/util/rng.hpp"

using namespace plab;
using namespace plab::probing;

namespace {

ad::Tensor blobs(std::size_t n, double gap, Rng& rng, std::vector<int>& labels) {
  ad::Tensor x({n, 2});
  labels.clear();
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    labels.push_back(y);
    x.at(i, 0) = (y ? gap : -gap) + 0.3 * rng.normal();
    x.at(i, 1) = rng.normal();
  }
  return x;
}

}  // namespace

TEST_CASE("auc on hand examples") {
  const std::vector<double> s{0.9, 0.8, 0.3, 0.2};
  CHECK(auc(s, std::vector<int>{1, 1, 0, 0}) == 1.0);
  CHECK(auc(s, std::vector<int>{0, 0, 1, 1}) == 0.0);
  CHECK(auc(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}) == 0.5);
}

TEST_CASE("auc of a single class is an error") {
  CHECK_THROWS_AS(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), DataError);
  CHECK_THROWS_AS(auc(std::vector<double>{0.1}, std::vector<int>{1, 0}), ContractError);
}

TEST_CASE("auc equals the pairwise oracle on random instances with ties") {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(49);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(8));  // coarse grid forces ties
      y[i] = rng.bernoulli(0.5) ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    CHECK(std::abs(auc(s, y) - testing::pairwise_auc(s, y)) <= 1e-12);
  }
}

TEST_CASE("property: auc is invariant under strictly increasing transforms") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(30), t(30);
    std::vector<int> y(30);
    for (std::size_t i = 0; i < 30; ++i) {
      s[i] = rng.normal();
      t[i] = std::exp(3.0 * s[i]) + 1.0;
      y[i] = i % 3 == 0 ? 1 : 0;
    }
    CHECK(auc(s, y) == auc(t, y));
  }
}

TEST_CASE("separable blobs give training auc one") {
  Rng rng(13);
  std::vector<int> y;
  const auto x = blobs(60, 3.0, rng, y);
  const auto p = train_probe(x, y, {});
  CHECK(auc(predict_all(p, x), y) == 1.0);
  CHECK(p.w.size() == 2);
  for (double v : predict_all(p, x)) CHECK((v > 0.0 && v < 1.0));
}

TEST_CASE("identical features yield the class prior and auc one half") {
  ad::Tensor x({40, 3}, 1.5);
  std::vector<int> y(40, 0);
  for (std::size_t i = 0; i < 10; ++i) y[i] = 1;
  const auto p = train_probe(x, y, {});
  const auto scores = predict_all(p, x);
  CHECK(scores[0] == doctest::Approx(0.25).epsilon(0.02));
  CHECK(auc(scores, y) == 0.5);
}

TEST_CASE("probe training is deterministic and rejects bad inputs") {
  Rng rng(14);
  std::vector<int> y;
  const auto x = blobs(30, 1.0, rng, y);
  const auto a = train_probe(x, y, {}), b = train_probe(x, y, {});
  CHECK(a.w == b.w);
  CHECK(a.b == b.b);

  CHECK_THROWS_AS(train_probe(x, std::vector<int>(30, 1), {}), DataError);
  auto bad = x;
  bad.at(3, 1) = std::nan("");
  CHECK_THROWS_AS(train_probe(bad, y, {}), DataError);
  CHECK_THROWS_AS(train_probe(x, std::vector<int>(29, 1), {}), ContractError);
}

TEST_CASE("best layer selection") {
  CHECK(select_best_layer(std::vector<double>{0.6}) == 0);
  CHECK(select_best_layer(std::vector<double>{0.5, 0.6, 0.7, 0.8}) == 3);
  CHECK(select_best_layer(std::vector<double>{0.5, 0.6, 0.7, 0.9, 0.8, 0.9}) == 3);
  CHECK_THROWS_AS(select_best_layer(std::vector<double>{}), DataError);
}

TEST_CASE("selector positions") {
  CHECK(selector_position(Selector::kFinalToken, 10, {6, 7}) == 9);
  CHECK(selector_position(Selector::kLastExactAnswer, 10, {6, 7}) == 7);
  CHECK(selector_position(Selector::kBeforeExactAnswer, 10, {6, 7}) == 5);
  CHECK_THROWS_AS(selector_position(Selector::kBeforeExactAnswer, 10, {0, 1}), ContractError);
  CHECK_THROWS_AS(selector_position(Selector::kLastExactAnswer, 5, {6, 7}), ContractError);
}

TEST_CASE("address names round trip") {
  const ProbeAddress a{2, Site::kMlpOut, Selector::kLastExactAnswer};
  CHECK(a.key() == "L2.mlp_out.last_exact_answer");
  for (auto s : {Site::kAttnOut, Site::kMlpOut}) CHECK(parse_site(site_name(s)) == s);
  for (auto s : {Selector::kFinalToken, Selector::kBeforeExactAnswer, Selector::kLastExactAnswer}) {
    CHECK(parse_selector(selector_name(s)) == s);
  }
  CHECK_THROWS_AS(parse_site("residual"), ContractError);
}

TEST_CASE("extraction reads the addressed site and is stable") {
  lm::ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 8;
  c.d_ff = 16;
  c.vocab_size = 9;
  c.max_seq_len = 10;
  const lm::Model m(c);
  const std::vector<std::int32_t> toks{1, 2, 3, 4, 5, 6};
  const auto tr = lm::forward(m, toks);
  const ProbeAddress addr{1, Site::kAttnOut, Selector::kLastExactAnswer};
  const auto v = extract(tr, addr, {3, 4});
  CHECK(v == std::vector<double>(tr.attn_out_at(1, 4).begin(), tr.attn_out_at(1, 4).end()));
  CHECK(v == extract(tr, addr, {3, 4}));

  // Scoring stops at the probe layer and agrees with extraction.
  Probe p;
  p.address = {0, Site::kMlpOut, Selector::kFinalToken};
  p.w.assign(8, 0.1);
  p.b = -0.2;
  CHECK(score_sequence(m, p, toks, {3, 4}) == p.predict(extract(tr, p.address, {3, 4})));
}

TEST_CASE("activation cache round trip") {
  ad::Tensor f = ad::Tensor::matrix(2, 3, {1, 2, 3, 4.5, -5, 6e-300});
  const std::vector<std::size_t> ids{4, 9};
  const auto path = std::filesystem::temp_directory_path() / "plab_test_acts.bin";
  const ProbeAddress a{3, Site::kAttnOut, Selector::kFinalToken};
  write_activations(path, a, f, ids);
  const auto back = read_activations(path);
  CHECK(back.address == a);
  CHECK(back.features == f);
  CHECK(back.sample_ids == ids);
  std::filesystem::remove(path);
}

TEST_CASE("take_rows selects in the given order") {
  const ad::Tensor f = ad::Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  CHECK(take_rows(f, std::vector<std::size_t>{2, 0}) == ad::Tensor::matrix(2, 2, {5, 6, 1, 2}));
  CHECK_THROWS_AS(take_rows(f, std::vector<std::size_t>{3}), ContractError);
}

TEST_CASE("probe json round trip is exact") {
  Probe p;
  p.address = {2, Site::kAttnOut, Selector::kBeforeExactAnswer};
  p.w = {0.1, -1.0 / 3.0, 1e-17};
  p.b = -2.5;
  p.meta.iterations = 7;
  const auto q = probe_from_json(probe_to_json(p));
  CHECK(q.address.key() == p.address.key());
  CHECK(q.w == p.w);
  CHECK(q.b == p.b);
  CHECK(q.meta.iterations == 7);
  CHECK_THROWS_AS(probe_from_json("{\"layer\": 1}"), DataError);
  CHECK_THROWS_AS(probe_from_json("not json"), DataError);
}
