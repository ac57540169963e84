#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "ttsfe/train.hpp"

using namespace ttsfe;

namespace {

struct Fixture {
  SyntheticLanguage lang = SyntheticLanguage::build({});
  CharVocab vocab = lang.vocab();
  PronClassMap classes = lang.class_map();

  FrontendModel model(std::uint64_t seed, double dropout = 0.1) const {
    EncoderConfig cfg{2, 16, 4, 32, vocab.size(), 48, dropout};
    return build_model(cfg, HeadSettings{HeadKind::kMlp, 8, false}, vocab, classes,
                       seed);
  }

  std::vector<CorpusSentence> sentences(TaskKind task, std::size_t n,
                                        std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::vector<CorpusSentence> out;
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back(to_corpus_sentence(
          sample_sentence(lang, rng, task == TaskKind::kPoly), task));
    }
    return out;
  }

  std::vector<TrainingExample> examples(TaskKind task, std::size_t n,
                                        std::uint64_t seed) const {
    std::vector<TrainingExample> out;
    for (const auto& s : sentences(task, n, seed)) {
      out.push_back(make_example(s, vocab, &classes));
    }
    return out;
  }
};

bool grads_all_zero(std::vector<Tensor> params) {
  for (auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) {
      if (g != 0.0) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("mixed batches draw the configured ratio with at least one of each task") {
  Fixture fx;
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.mix_ratio = 0.5;
  BatchStream stream(fx.examples(TaskKind::kPoly, 20, 1),
                     fx.examples(TaskKind::kProsody, 20, 2), cfg);
  CHECK(stream.poly_per_batch() == 4);
  CHECK(stream.prosody_per_batch() == 4);
  MixedBatch batch = stream.next();
  REQUIRE(batch.examples.size() == 8);
  std::size_t poly = 0;
  for (const auto& ex : batch.examples) poly += ex.task == TaskKind::kPoly;
  CHECK(poly == 4);
  for (const auto& ex : batch.examples) {
    CHECK(ex.tokens.ids.size() == batch.padded_len);
  }

  TrainConfig small = cfg;
  small.batch_size = 3;
  BatchStream s3(fx.examples(TaskKind::kPoly, 20, 1),
                 fx.examples(TaskKind::kProsody, 20, 2), small);
  CHECK(s3.poly_per_batch() >= 1);
  CHECK(s3.prosody_per_batch() >= 1);
  CHECK(s3.poly_per_batch() + s3.prosody_per_batch() == 3);
}

TEST_CASE("auto mix ratio follows corpus sizes, clamped to [0.25, 0.75]") {
  Fixture fx;
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.mix_ratio = 0.0;  // auto
  // 30 POLY vs 10 PROSODY -> 0.75 after clamping
  BatchStream stream(fx.examples(TaskKind::kPoly, 30, 1),
                     fx.examples(TaskKind::kProsody, 10, 2), cfg);
  CHECK(stream.poly_per_batch() == 6);

  // extreme imbalance clamps at 0.25
  BatchStream lop(fx.examples(TaskKind::kPoly, 2, 1),
                  fx.examples(TaskKind::kProsody, 60, 2), cfg);
  CHECK(lop.poly_per_batch() == 2);
}

TEST_CASE("batch streams are deterministic in the seed") {
  Fixture fx;
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.seed = 99;
  auto collect = [&] {
    BatchStream stream(fx.examples(TaskKind::kPoly, 12, 1),
                       fx.examples(TaskKind::kProsody, 12, 2), cfg);
    std::vector<std::vector<int>> ids;
    for (int i = 0; i < 10; ++i) {
      for (const auto& ex : stream.next().examples) ids.push_back(ex.tokens.ids);
    }
    return ids;
  };
  CHECK(collect() == collect());
}

TEST_CASE("empty corpora are a configuration error") {
  Fixture fx;
  TrainConfig cfg;
  CHECK_THROWS_AS(BatchStream({}, fx.examples(TaskKind::kProsody, 5, 1), cfg),
                  ConfigError);
  CHECK_THROWS_AS(BatchStream(fx.examples(TaskKind::kPoly, 5, 1), {}, cfg), ConfigError);
}

TEST_CASE("a prosody-only batch leaves polyphone-head gradients exactly zero") {
  Fixture fx;
  FrontendModel model = fx.model(3);
  MixedBatch batch;
  for (auto& ex : fx.examples(TaskKind::kProsody, 4, 7)) {
    batch.padded_len = std::max(batch.padded_len, ex.tokens.ids.size());
    batch.examples.push_back(std::move(ex));
  }
  for (auto& ex : batch.examples) {
    ex.tokens.ids.resize(batch.padded_len, TokenSeq::kPad);
  }

  std::vector<Tensor> params = model.parameters();
  zero_grads(params);
  // loss path only; no optimizer step
  std::vector<Tensor> poly_head_params = model.poly_head.parameters();

  AdamState state;
  state.init(params);
  TrainConfig cfg;
  cfg.batch_size = 4;
  StepReport rep = train_step(model, batch, cfg, state, 1);
  CHECK(rep.l_poly == 0.0);
  CHECK(rep.l_prosody > 0.0);
  CHECK(grads_all_zero(poly_head_params));

  // symmetric: poly-only batch leaves the prosody head untouched
  FrontendModel model2 = fx.model(3);
  MixedBatch poly_batch;
  for (auto& ex : fx.examples(TaskKind::kPoly, 4, 8)) {
    poly_batch.padded_len = std::max(poly_batch.padded_len, ex.tokens.ids.size());
    poly_batch.examples.push_back(std::move(ex));
  }
  for (auto& ex : poly_batch.examples) {
    ex.tokens.ids.resize(poly_batch.padded_len, TokenSeq::kPad);
    ex.poly_targets.resize(poly_batch.padded_len, -1);
    ex.poly_mask.resize(poly_batch.padded_len, 0);
  }
  std::vector<Tensor> params2 = model2.parameters();
  AdamState state2;
  state2.init(params2);
  StepReport rep2 = train_step(model2, poly_batch, cfg, state2, 1);
  CHECK(rep2.l_prosody == 0.0);
  CHECK(grads_all_zero(model2.prosody_head.parameters()));
}

TEST_CASE("zero alphas leave all parameters unchanged") {
  Fixture fx;
  FrontendModel model = fx.model(5);
  std::vector<std::vector<double>> before;
  for (auto& p : model.parameters()) before.push_back(test::to_vec(p));

  TrainConfig cfg;
  cfg.alpha1 = 0.0;
  cfg.alpha2 = 0.0;
  cfg.batch_size = 4;
  BatchStream stream(fx.examples(TaskKind::kPoly, 8, 1),
                     fx.examples(TaskKind::kProsody, 8, 2), cfg);
  AdamState state;
  std::vector<Tensor> params = model.parameters();
  state.init(params);
  train_step(model, stream.next(), cfg, state, 1);

  auto after = model.parameters();
  for (std::size_t i = 0; i < after.size(); ++i) {
    CHECK(test::to_vec(after[i]) == before[i]);
  }
}

TEST_CASE("step report recomposes as alpha1 * L_poly + alpha2 * L_prosody") {
  Fixture fx;
  FrontendModel model = fx.model(6, /*dropout=*/0.0);
  FrontendModel reference = model.clone();

  TrainConfig cfg;
  cfg.alpha1 = 0.7;
  cfg.alpha2 = 1.9;
  cfg.batch_size = 5;
  cfg.mix_ratio = 0.4;
  BatchStream stream(fx.examples(TaskKind::kPoly, 10, 3),
                     fx.examples(TaskKind::kProsody, 10, 4), cfg);
  MixedBatch batch = stream.next();

  // independent straight-line recomputation on the untouched clone
  double l_poly = 0.0, l_pros = 0.0;
  std::size_t n_poly = 0, n_pros = 0;
  for (const auto& ex : batch.examples) {
    EncoderTrace trace = encode(reference.encoder, ex.tokens);
    const Tensor& h = trace.hidden_states.back();
    if (ex.task == TaskKind::kPoly) {
      l_poly += polyphone_loss(head_forward(reference.poly_head, h, ex.tokens.length),
                               ex.poly_targets, ex.poly_mask)
                    .item();
      ++n_poly;
    } else {
      std::vector<int> labels = ex.prosody_labels;
      labels.resize(ex.tokens.ids.size(), 0);
      std::vector<std::uint8_t> mask(ex.tokens.ids.size(), 0);
      for (std::size_t t = 0; t < ex.tokens.length; ++t) mask[t] = 1;
      l_pros += prosody_loss(head_forward(reference.prosody_head, h, ex.tokens.length),
                             labels, mask)
                    .item();
      ++n_pros;
    }
  }
  l_poly /= static_cast<double>(n_poly);
  l_pros /= static_cast<double>(n_pros);

  AdamState state;
  std::vector<Tensor> params = model.parameters();
  state.init(params);
  StepReport rep = train_step(model, batch, cfg, state, 1);

  CHECK(std::fabs(rep.l_poly - l_poly) < 1e-12);
  CHECK(std::fabs(rep.l_prosody - l_pros) < 1e-12);
  CHECK(std::fabs(rep.l_global - (0.7 * l_poly + 1.9 * l_pros)) < 1e-12);
}

TEST_CASE("mixed-batch encoder gradients decompose into alpha-scaled task gradients") {
  Fixture fx;
  FrontendModel mixed = fx.model(8, /*dropout=*/0.0);
  FrontendModel only_poly = mixed.clone();
  FrontendModel only_pros = mixed.clone();

  auto poly_ex = fx.examples(TaskKind::kPoly, 2, 5);
  auto pros_ex = fx.examples(TaskKind::kProsody, 2, 6);
  double a1 = 0.6, a2 = 1.3;

  auto poly_mean = [&](FrontendModel& m) {
    Tensor total = Tensor::scalar(0.0);
    for (const auto& ex : poly_ex) {
      EncoderTrace t = encode(m.encoder, ex.tokens);
      total = add(total, polyphone_loss(
                             head_forward(m.poly_head, t.hidden_states.back(),
                                          ex.tokens.length),
                             ex.poly_targets, ex.poly_mask));
    }
    return scale(total, 1.0 / static_cast<double>(poly_ex.size()));
  };
  auto pros_mean = [&](FrontendModel& m) {
    Tensor total = Tensor::scalar(0.0);
    for (const auto& ex : pros_ex) {
      EncoderTrace t = encode(m.encoder, ex.tokens);
      std::vector<std::uint8_t> mask(ex.tokens.ids.size(), 1);
      total = add(total, prosody_loss(head_forward(m.prosody_head,
                                                   t.hidden_states.back(),
                                                   ex.tokens.length),
                                      ex.prosody_labels, mask));
    }
    return scale(total, 1.0 / static_cast<double>(pros_ex.size()));
  };

  backward(global_loss(poly_mean(mixed), pros_mean(mixed), a1, a2));
  backward(scale(poly_mean(only_poly), a1));
  backward(scale(pros_mean(only_pros), a2));

  auto enc_mixed = mixed.encoder.parameters();
  auto enc_poly = only_poly.encoder.parameters();
  auto enc_pros = only_pros.encoder.parameters();
  for (std::size_t i = 0; i < enc_mixed.size(); ++i) {
    REQUIRE(enc_mixed[i].has_grad());
    auto gm = enc_mixed[i].grad();
    for (std::size_t k = 0; k < gm.size(); ++k) {
      double gp = enc_poly[i].has_grad() ? enc_poly[i].grad()[k] : 0.0;
      double gs = enc_pros[i].has_grad() ? enc_pros[i].grad()[k] : 0.0;
      CHECK(gm[k] == doctest::Approx(gp + gs).epsilon(1e-10));
    }
  }
}

TEST_CASE("short training runs are reproducible and reduce the loss") {
  Fixture fx;
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.steps = 120;
  cfg.eval_interval = 40;
  cfg.seed = 17;

  auto run = [&] {
    FrontendModel model = fx.model(10);
    TrainResult r = train(model, fx.sentences(TaskKind::kPoly, 24, 1),
                          fx.sentences(TaskKind::kProsody, 24, 2),
                          fx.sentences(TaskKind::kPoly, 6, 3),
                          fx.sentences(TaskKind::kProsody, 6, 4), cfg);
    return r;
  };
  TrainResult a = run();
  TrainResult b = run();
  CHECK(a.metrics_log == b.metrics_log);
  auto pa = a.best_model.parameters();
  auto pb = b.best_model.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(test::to_vec(pa[i]) == test::to_vec(pb[i]));
  }

  // window-averaged training loss falls from the first to the last window
  std::istringstream log(a.metrics_log);
  std::string first_line, line, last_line;
  std::getline(log, first_line);
  while (std::getline(log, line)) {
    if (!line.empty()) last_line = line;
  }
  auto window_loss = [](const std::string& l) {
    std::istringstream is(l);
    std::string step;
    double lp, ls;
    is >> step >> lp >> ls;
    return lp + ls;
  };
  CHECK(window_loss(last_line) < window_loss(first_line));
}

TEST_CASE("training works with the CRF prosody head") {
  Fixture fx;
  EncoderConfig cfg{1, 16, 4, 32, fx.vocab.size(), 48, 0.0};
  FrontendModel model = build_model(cfg, HeadSettings{HeadKind::kMlp, 8, true},
                                    fx.vocab, fx.classes, 21);
  TrainConfig tc;
  tc.batch_size = 4;
  tc.steps = 30;
  tc.eval_interval = 30;
  TrainResult r = train(model, fx.sentences(TaskKind::kPoly, 12, 1),
                        fx.sentences(TaskKind::kProsody, 12, 2),
                        fx.sentences(TaskKind::kPoly, 4, 3),
                        fx.sentences(TaskKind::kProsody, 4, 4), tc);
  CHECK(r.metrics_log.size() > 0);
  CHECK(std::isfinite(r.best_score));
}
