#include <doctest.h>

#include "ttsfe/config.hpp"

using namespace ttsfe;

TEST_CASE("config defaults give the desk-scale presets") {
  RunConfig c = RunConfig::defaults();
  CHECK(c.teacher.num_layers == 6);
  CHECK(c.teacher.hidden_size == 96);
  CHECK(c.student.num_layers == 2);
  CHECK(c.student.hidden_size == 48);
  CHECK(c.train.alpha1 == 1.0);
  CHECK(c.train.alpha2 == 1.0);
  CHECK(c.train.adam.lr == 1e-3);
  CHECK(c.synth.n_symbols == 60);
  CHECK(c.synth.n_polyphones == 8);
}

TEST_CASE("config parses keys, comments, and whitespace") {
  RunConfig c = RunConfig::parse(
      "# comment\n"
      "seed = 7\n"
      "teacher.num_layers=4\n"
      "  train.lr =  0.01  \n"
      "head.kind = blstm\n"
      "head.prosody_crf = 1\n"
      "paths.lexicon = /tmp/lex.tsv\n");
  CHECK(c.seed == 7);
  CHECK(c.teacher.num_layers == 4);
  CHECK(c.train.adam.lr == doctest::Approx(0.01));
  CHECK(c.heads.kind == HeadKind::kBlstm);
  CHECK(c.heads.prosody_crf);
  CHECK(c.lexicon == std::filesystem::path("/tmp/lex.tsv"));
  // the run seed propagates into the stage configs
  CHECK(c.train.seed == 7);
  CHECK(c.general_distill.seed == 7);
}

TEST_CASE("unknown keys and malformed lines are rejected with location") {
  try {
    RunConfig::parse("teacher.num_layers = 4\nbogus.key = 1\n", "test.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("test.cfg:2") != std::string::npos);
    CHECK(msg.find("bogus.key") != std::string::npos);
  }
  CHECK_THROWS_AS(RunConfig::parse("just some words\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("train.steps = banana\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("head.kind = transformer\n"), ConfigError);
}

TEST_CASE("resolved text lists every key and round-trips") {
  RunConfig c = RunConfig::parse("seed = 123\nstudent.hidden_size = 24\n");
  std::string text = c.resolved_text();
  CHECK(text.find("seed = 123") != std::string::npos);
  CHECK(text.find("student.hidden_size = 24") != std::string::npos);
  CHECK(text.find("synth.n_symbols = 60") != std::string::npos);

  RunConfig back = RunConfig::parse(text);
  CHECK(back.seed == c.seed);
  CHECK(back.student.hidden_size == c.student.hidden_size);
  CHECK(back.resolved_text() == text);
}

TEST_CASE("pipeline_config wires vocab size and stage settings") {
  RunConfig c = RunConfig::parse("seed = 9\ndistill.general.steps = 123\n");
  PipelineConfig pc = c.pipeline_config(77);
  CHECK(pc.teacher_encoder.vocab_size == 77);
  CHECK(pc.student_encoder.vocab_size == 77);
  CHECK(pc.general_distill.steps == 123);
  CHECK(pc.seed == 9);
}
