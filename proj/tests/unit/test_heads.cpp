#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "ttsfe/grad_check.hpp"
#include "ttsfe/heads.hpp"

using namespace ttsfe;
using test::random_tensor;

namespace {

// Enumerates all C^T paths: log partition by direct logsumexp, and the best
// path with ties resolved toward the lower label at the latest differing
// position.
struct BruteCrf {
  double log_partition = 0.0;
  std::vector<int> best_path;
};

double path_score(const Tensor& em, const Tensor& tr, const Tensor& st, const Tensor& en,
                  const std::vector<int>& path) {
  std::size_t c = em.shape()[1];
  double s = st.data()[path[0]] + em.data()[path[0]];
  for (std::size_t t = 1; t < path.size(); ++t) {
    s += tr.data()[path[t - 1] * c + path[t]] + em.data()[t * c + path[t]];
  }
  return s + en.data()[path.back()];
}

bool later_position_lower(const std::vector<int>& cand, const std::vector<int>& best) {
  for (std::size_t i = cand.size(); i-- > 0;) {
    if (cand[i] != best[i]) return cand[i] < best[i];
  }
  return false;
}

BruteCrf brute_force_crf(const Tensor& em, const Tensor& tr, const Tensor& st,
                         const Tensor& en) {
  std::size_t t_len = em.shape()[0], c = em.shape()[1];
  std::vector<int> path(t_len, 0);
  std::vector<double> scores;
  BruteCrf out;
  double best = -1e300;
  for (;;) {
    double s = path_score(em, tr, st, en, path);
    scores.push_back(s);
    if (s > best || (s == best && later_position_lower(path, out.best_path))) {
      best = s;
      out.best_path = path;
    }
    std::size_t i = 0;
    while (i < t_len && ++path[i] == static_cast<int>(c)) {
      path[i] = 0;
      ++i;
    }
    if (i == t_len) break;
  }
  double mx = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double s : scores) z += std::exp(s - mx);
  out.log_partition = mx + std::log(z);
  return out;
}

}  // namespace

TEST_CASE("polyphone_loss on perfect and half-probability predictions") {
  // one polyphone, probability ~1 on its class
  Tensor logits = Tensor::from({3, 2}, {0, 0, 60, -60, 0, 0});
  Tensor loss = polyphone_loss(logits, {-1, 0, -1}, {0, 1, 0});
  CHECK(loss.item() == doctest::Approx(0.0).epsilon(1e-9));

  // two polyphones with true-class probabilities 0.5 and 0.25:
  // exp(ln 3) balances the three unit alternatives, uniform rows give 1/4
  double l3 = std::log(3.0);
  Tensor lg = Tensor::from({2, 4}, {l3, 0, 0, 0,  //
                                    0, 0, 0, 0});
  Tensor loss2 = polyphone_loss(lg, {0, 2}, {1, 1});
  CHECK(loss2.item() == doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("polyphone_loss ignores non-polyphone positions entirely") {
  std::mt19937_64 rng(1);
  Tensor base = random_tensor({4, 3}, rng);
  std::vector<int> targets{-1, 1, -1, 2};
  std::vector<std::uint8_t> mask{0, 1, 0, 1};
  double reference = polyphone_loss(base, targets, mask).item();

  Tensor perturbed = base.detached_copy();
  auto d = perturbed.mutable_data();
  for (std::size_t j = 0; j < 3; ++j) {
    d[0 * 3 + j] += 17.0;  // masked-out rows
    d[2 * 3 + j] -= 4.2;
  }
  CHECK(polyphone_loss(perturbed, targets, mask).item() ==
        doctest::Approx(reference).epsilon(1e-12));
}

TEST_CASE("predict_polyphone restricted argmax and tie-breaking") {
  std::vector<double> probs{0.1, 0.7, 0.2};
  CHECK(predict_polyphone(probs, {0, 1, 2}) == 1);

  std::vector<double> skewed{0.6, 0.3, 0.1};
  CHECK(predict_polyphone(skewed, {1, 2}) == 1);  // global max excluded

  std::vector<double> tie{0.5, 0.5};
  CHECK(predict_polyphone(tie, {0, 1}) == 0);

  CHECK_THROWS_AS(predict_polyphone(probs, {}), LexiconError);
}

TEST_CASE("predict_polyphone is invariant under monotone transforms") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor row = random_tensor({6}, rng);
    std::vector<int> admissible{0, 2, 3, 5};
    int a = predict_polyphone(row.data(), admissible);
    std::vector<double> squashed(6);
    for (std::size_t i = 0; i < 6; ++i) {
      squashed[i] = std::tanh(row.data()[i] * 0.3) * 2.0 + 1.0;
    }
    CHECK(predict_polyphone(squashed, admissible) == a);
  }
}

TEST_CASE("prosody_loss on uniform and perfect predictions") {
  Tensor uniform = Tensor::zeros({3, 4});
  std::vector<int> labels{0, 1, 3};
  std::vector<std::uint8_t> valid{1, 1, 1};
  CHECK(prosody_loss(uniform, labels, valid).item() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));

  Tensor sharp = Tensor::zeros({2, 4});
  auto d = sharp.mutable_data();
  d[0 * 4 + 2] = 80.0;
  d[1 * 4 + 0] = 80.0;
  CHECK(prosody_loss(sharp, {2, 0}, {1, 1}).item() == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("prosody_loss is unchanged by appended padding") {
  std::mt19937_64 rng(3);
  Tensor logits = random_tensor({3, 4}, rng);
  double bare = prosody_loss(logits, {0, 1, 2}, {1, 1, 1}).item();

  Tensor padded = concat_rows({logits, random_tensor({2, 4}, rng)});
  double with_pads = prosody_loss(padded, {0, 1, 2, 0, 0}, {1, 1, 1, 0, 0}).item();
  CHECK(bare == doctest::Approx(with_pads).epsilon(1e-12));
}

TEST_CASE("global_loss arithmetic") {
  CHECK(global_loss(Tensor::scalar(1.0), Tensor::scalar(2.0), 1, 1).item() ==
        doctest::Approx(3.0));
  CHECK(global_loss(Tensor::scalar(0.3), Tensor::scalar(0.7), 2.0, 0.5).item() ==
        doctest::Approx(0.95).epsilon(1e-12));
}

TEST_CASE("global_loss with a zero alpha cuts that branch's gradient") {
  std::mt19937_64 rng(4);
  Tensor wa = random_tensor({3}, rng).set_requires_grad(true);
  Tensor wb = random_tensor({3}, rng).set_requires_grad(true);
  Tensor la = mean_all(mul(wa, wa));
  Tensor lb = mean_all(mul(wb, wb));
  backward(global_loss(la, lb, 0.0, 1.0));
  if (wa.has_grad()) {
    for (double g : wa.grad()) CHECK(g == 0.0);
  }
  REQUIRE(wb.has_grad());
  double nonzero = 0.0;
  for (double g : wb.grad()) nonzero += std::fabs(g);
  CHECK(nonzero > 0.0);
}

TEST_CASE("global_loss gradients decompose as alpha times single-task gradients") {
  std::mt19937_64 rng(5);
  Tensor w = random_tensor({4}, rng).set_requires_grad(true);
  double alpha = 0.37;

  w.zero_grad();
  backward(global_loss(mean_all(mul(w, w)), Tensor::scalar(0.5), alpha, 2.0));
  std::vector<double> combined(w.grad().begin(), w.grad().end());

  w.zero_grad();
  backward(mean_all(mul(w, w)));
  for (std::size_t i = 0; i < combined.size(); ++i) {
    CHECK(combined[i] == doctest::Approx(alpha * w.grad()[i]).epsilon(1e-12));
  }
}

// ---- CRF ------------------------------------------------------------------------

TEST_CASE("crf with T=1 and zero potentials reduces to softmax cross entropy") {
  Tensor em = Tensor::from({1, 4}, {0.2, -0.4, 1.1, 0.0});
  Tensor tr = Tensor::zeros({4, 4});
  Tensor st = Tensor::zeros({4});
  Tensor en = Tensor::zeros({4});
  Tensor ll = crf_log_likelihood(em, tr, st, en, {2});
  Tensor ce = masked_cross_entropy(log_softmax(em), {2}, {1});
  CHECK(ll.item() == doctest::Approx(-ce.item()).epsilon(1e-12));
}

TEST_CASE("crf log-partition and viterbi match exhaustive enumeration") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 25; ++trial) {
    std::size_t t_len = 1 + static_cast<std::size_t>(trial % 6);
    Tensor em = random_tensor({t_len, 4}, rng);
    Tensor tr = random_tensor({4, 4}, rng);
    Tensor st = random_tensor({4}, rng);
    Tensor en = random_tensor({4}, rng);
    BruteCrf brute = brute_force_crf(em, tr, st, en);

    std::vector<int> labels;
    for (std::size_t t = 0; t < t_len; ++t) {
      labels.push_back(static_cast<int>(rng() % 4));
    }
    Tensor ll = crf_log_likelihood(em, tr, st, en, labels);
    double direct = path_score(em, tr, st, en, labels) - brute.log_partition;
    CHECK(ll.item() == doctest::Approx(direct).epsilon(1e-9));
    CHECK(crf_viterbi(em, tr, st, en) == brute.best_path);
  }
}

TEST_CASE("crf viterbi tie-break picks lower labels at the latest positions") {
  // all-zero potentials: every path ties, the all-zeros path must win
  Tensor em = Tensor::zeros({4, 4});
  Tensor tr = Tensor::zeros({4, 4});
  Tensor st = Tensor::zeros({4});
  Tensor en = Tensor::zeros({4});
  CHECK(crf_viterbi(em, tr, st, en) == std::vector<int>{0, 0, 0, 0});
  CHECK(brute_force_crf(em, tr, st, en).best_path == std::vector<int>{0, 0, 0, 0});
}

TEST_CASE("a strongly negative transition suppresses a label the emissions prefer") {
  // emissions prefer label 3 at position 1; the transition 0 -> 3 is blocked
  Tensor em = Tensor::from({2, 4}, {5, 0, 0, 0,  //
                                    0, 0, 1, 2});
  Tensor tr = Tensor::zeros({4, 4});
  tr.mutable_data()[0 * 4 + 3] = -100.0;
  Tensor st = Tensor::zeros({4});
  Tensor en = Tensor::zeros({4});
  std::vector<int> decoded = crf_viterbi(em, tr, st, en);
  CHECK(decoded == brute_force_crf(em, tr, st, en).best_path);
  CHECK(decoded[1] == 2);  // not the emission argmax 3
}

TEST_CASE("crf gradient matches finite differences") {
  std::mt19937_64 rng(7);
  Tensor em = random_tensor({5, 4}, rng);
  Tensor tr = random_tensor({4, 4}, rng);
  Tensor st = random_tensor({4}, rng);
  Tensor en = random_tensor({4}, rng);
  std::vector<int> labels{1, 0, 3, 3, 2};
  auto report = grad_check(
      [&] { return scale(crf_log_likelihood(em, tr, st, en, labels), -1.0); },
      {em, tr, st, en});
  CHECK(report.max_error < 1e-4);
}

// ---- prediction layers ------------------------------------------------------------

TEST_CASE("mlp and blstm heads produce [T x classes] logits and train end to end") {
  std::mt19937_64 rng(8);
  Tensor features = random_tensor({6, 12}, rng);
  for (HeadKind kind : {HeadKind::kMlp, HeadKind::kBlstm}) {
    HeadParams head = init_head(HeadConfig{kind, 12, 5, 7, false}, 9);
    Tensor logits = head_forward(head, features, 6);
    CHECK(logits.shape() == std::vector<std::size_t>{6, 7});

    std::vector<int> targets{1, 2, 3, 4, 5, 6};
    std::vector<std::uint8_t> mask{1, 1, 1, 1, 1, 1};
    auto loss = [&] {
      return masked_cross_entropy(
          log_softmax(head_forward(head, features, 6)), targets, mask);
    };
    auto report = grad_check(loss, head.parameters());
    CHECK(report.max_error < 1e-4);
  }
}

TEST_CASE("blstm head zeroes logits past the valid prefix") {
  std::mt19937_64 rng(10);
  Tensor features = random_tensor({5, 8}, rng);
  HeadParams head = init_head(HeadConfig{HeadKind::kBlstm, 8, 4, 3, false}, 11);
  Tensor logits = head_forward(head, features, 3);
  for (std::size_t t = 3; t < 5; ++t) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(logits.at({t, j}) == 0.0);
  }
}

// ---- pronunciation class map -------------------------------------------------------

TEST_CASE("PronClassMap builds dense sorted classes with admissible subsets") {
  std::map<std::string, std::vector<std::string>> prons{
      {"b", {"zz9", "aa1"}},
      {"a", {"mm2", "kk3", "pp4"}},
  };
  PronClassMap m = PronClassMap::build(prons);
  REQUIRE(m.num_classes() == 5);
  // sorted by (char, pron): a/kk3, a/mm2, a/pp4, b/aa1, b/zz9
  CHECK(m.class_of("a", "kk3") == 0);
  CHECK(m.class_of("a", "pp4") == 2);
  CHECK(m.class_of("b", "aa1") == 3);
  CHECK(m.admissible("a") == std::vector<int>{0, 1, 2});
  CHECK(m.admissible("b") == std::vector<int>{3, 4});
  CHECK(m.is_polyphonic("a"));
  CHECK_FALSE(m.is_polyphonic("zzz"));
  CHECK_THROWS_AS(m.class_of("a", "nope"), LexiconError);

  PronClassMap round = PronClassMap::from_text(m.to_text());
  CHECK(round == m);

  std::map<std::string, std::vector<std::string>> bad{{"x", {"only1"}}};
  CHECK_THROWS_AS(PronClassMap::build(bad), LexiconError);
}
