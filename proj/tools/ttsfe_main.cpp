// Command-line front end: corpus generation, finetuning, distillation,
// evaluation, and inference over one checkpoint format.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "ttsfe/checkpoint.hpp"
#include "ttsfe/config.hpp"
#include "ttsfe/distill.hpp"
#include "ttsfe/pipeline.hpp"

namespace fs = std::filesystem;
using namespace ttsfe;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitTraining = 3;
constexpr int kExitData = 4;

RunConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return RunConfig::defaults();
  return RunConfig::load(path);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::vector<CorpusSentence> load_required_corpus(const fs::path& path,
                                                 const std::string& role) {
  if (path.empty()) {
    throw ConfigError("config is missing the " + role + " corpus path");
  }
  return load_corpus(path);
}

// ---- gen-corpus ----------------------------------------------------------------

int cmd_gen_corpus(const std::string& config_path, const std::string& out_prefix,
                   std::size_t n, const std::string& task_name, std::uint64_t seed) {
  RunConfig config = load_config_or_default(config_path);
  SyntheticLanguage lang = SyntheticLanguage::build(config.synth);
  fs::path prefix(out_prefix);
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());

  if (task_name == "lexicon") {
    fs::path lex_path = prefix.string() + ".lexicon.tsv";
    fs::path cls_path = prefix.string() + ".classes.tsv";
    lang.lexicon().save(lex_path);
    write_text(cls_path, lang.class_map().to_text());
    std::cout << "lexicon: " << lex_path.string() << " ("
              << lang.lexicon().entries().size() << " characters)\n";
    std::cout << "classes: " << cls_path.string() << " ("
              << lang.class_map().num_classes() << " pronunciation classes)\n";
    return kExitOk;
  }

  TaskKind task;
  if (task_name == "poly") {
    task = TaskKind::kPoly;
  } else if (task_name == "prosody") {
    task = TaskKind::kProsody;
  } else if (task_name == "unlabeled") {
    task = TaskKind::kRaw;
  } else {
    throw ConfigError("unknown --task '" + task_name +
                      "' (expected poly|prosody|unlabeled|lexicon)");
  }
  GeneratedCorpus g = generate_corpus(lang, n, task, seed, prefix);
  std::cout << "train: " << g.train_path.string() << " (" << g.n_train << " sentences)\n";
  std::cout << "test:  " << g.test_path.string() << " (" << g.n_test << " sentences)\n";
  return kExitOk;
}

// ---- train ----------------------------------------------------------------------

int cmd_train(const std::string& config_path, const std::string& encoder_kind,
              const std::string& out_dir) {
  RunConfig config = load_config_or_default(config_path);
  if (encoder_kind != "teacher" && encoder_kind != "student") {
    throw ConfigError("--encoder expects teacher or student, got '" + encoder_kind + "'");
  }
  SyntheticLanguage lang = SyntheticLanguage::build(config.synth);
  CharVocab vocab = lang.vocab();

  EncoderConfig enc = encoder_kind == "teacher" ? config.teacher : config.student;
  enc.vocab_size = vocab.size();
  enc.validate();

  fs::create_directories(out_dir);
  write_text(fs::path(out_dir) / "config.log", config.resolved_text());

  FrontendModel model =
      build_model(enc, config.heads, vocab, lang.class_map(), config.seed);
  TrainResult result =
      train(model, load_required_corpus(config.poly_train, "paths.poly_train"),
            load_required_corpus(config.prosody_train, "paths.prosody_train"),
            load_required_corpus(config.poly_test, "paths.poly_test"),
            load_required_corpus(config.prosody_test, "paths.prosody_test"),
            config.train);

  fs::path ckpt = fs::path(out_dir) / "model.ckpt";
  save_checkpoint(ckpt, result.best_model, config.heads);
  write_text(fs::path(out_dir) / "metrics.log", result.metrics_log);
  std::cout << "checkpoint: " << ckpt.string() << "\n";
  std::cout << "best validation score: " << result.best_score << "\n";
  std::cout << result.final_report.human_text();
  return kExitOk;
}

// ---- distill ---------------------------------------------------------------------

PipelineCorpora load_pipeline_corpora(const RunConfig& config) {
  PipelineCorpora c;
  c.poly_train = load_required_corpus(config.poly_train, "paths.poly_train");
  c.poly_val = load_required_corpus(config.poly_test, "paths.poly_test");
  c.prosody_train = load_required_corpus(config.prosody_train, "paths.prosody_train");
  c.prosody_val = load_required_corpus(config.prosody_test, "paths.prosody_test");
  c.unlabeled = load_required_corpus(config.unlabeled, "paths.unlabeled");
  return c;
}

int cmd_distill(const std::string& config_path, const std::string& teacher_path,
                const std::string& student_path, const std::string& out_dir,
                const std::string& stage) {
  RunConfig config = load_config_or_default(config_path);
  SyntheticLanguage lang = SyntheticLanguage::build(config.synth);
  CharVocab vocab = lang.vocab();
  PronClassMap classes = lang.class_map();
  fs::create_directories(out_dir);
  write_text(fs::path(out_dir) / "config.log", config.resolved_text());

  if (stage == "full") {
    PipelineConfig pc = config.pipeline_config(vocab.size());
    std::optional<EncoderParams> initial;
    if (!teacher_path.empty()) initial = load_checkpoint(teacher_path).encoder;
    PipelineResult result =
        run_pipeline(load_pipeline_corpora(config), vocab, classes, pc,
                     std::move(initial));
    fs::path teacher_out = fs::path(out_dir) / "teacher.ckpt";
    fs::path student_out = fs::path(out_dir) / "student.ckpt";
    save_checkpoint(teacher_out, result.teacher, config.heads);
    save_checkpoint(student_out, result.student, config.heads);
    write_text(fs::path(out_dir) / "report.txt", result.report);
    std::cout << result.report;
    std::cout << "teacher checkpoint: " << teacher_out.string() << "\n";
    std::cout << "student checkpoint: " << student_out.string() << "\n";
    return kExitOk;
  }

  if (stage != "general" && stage != "task") {
    throw ConfigError("--stage expects general, task, or full; got '" + stage + "'");
  }
  if (teacher_path.empty()) {
    throw ConfigError("--teacher checkpoint is required for stage " + stage);
  }
  EncoderParams teacher = load_checkpoint(teacher_path).encoder;

  EncoderConfig student_cfg = config.student;
  student_cfg.vocab_size = vocab.size();
  EncoderParams student = student_path.empty()
                              ? init_params(student_cfg, config.seed + 1)
                              : load_checkpoint(student_path).encoder;
  if (student.config.vocab_size != vocab.size()) {
    throw ConfigError("student checkpoint vocabulary does not match the language");
  }

  std::vector<CorpusSentence> text;
  if (stage == "general") {
    text = load_required_corpus(config.unlabeled, "paths.unlabeled");
  } else {
    text = load_required_corpus(config.poly_train, "paths.poly_train");
    auto more = load_required_corpus(config.prosody_train, "paths.prosody_train");
    text.insert(text.end(), more.begin(), more.end());
  }
  std::vector<TokenSeq> seqs;
  seqs.reserve(text.size());
  for (const auto& s : text) seqs.push_back(tokenize_chars(s.chars, vocab));

  const DistillConfig& dc =
      stage == "general" ? config.general_distill : config.task_distill;
  DistillStageResult result;
  try {
    result = distill_encoder(teacher, student, seqs, dc);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw TrainError("distillation stage '" + stage + "' failed: " + e.what());
  }

  fs::path student_out = fs::path(out_dir) / "student.ckpt";
  save_encoder_checkpoint(student_out, student, vocab, classes);
  std::ostringstream report;
  report << "stage " << stage << " steps=" << result.steps
         << " final_loss=" << result.final_loss << "\n"
         << "params teacher=" << count_params(teacher.config)
         << " student=" << count_params(student.config) << " size_ratio="
         << static_cast<double>(count_params(student.config)) /
                static_cast<double>(count_params(teacher.config))
         << "\n";
  write_text(fs::path(out_dir) / "report.txt", report.str());
  std::cout << report.str();
  std::cout << "student checkpoint: " << student_out.string() << "\n";
  return kExitOk;
}

// ---- eval ------------------------------------------------------------------------

int cmd_eval(const std::string& ckpt_path, const std::string& corpus_path,
             const std::string& lexicon_path) {
  FrontendModel model = model_from_checkpoint(load_checkpoint(ckpt_path));
  std::vector<CorpusSentence> sentences = load_corpus(corpus_path);
  if (!lexicon_path.empty()) {
    PronunciationLexicon lexicon = PronunciationLexicon::load(lexicon_path);
    for (const auto& s : sentences) {
      for (const auto& ch : s.chars) {
        if (!lexicon.contains(ch)) {
          throw DataError("corpus character '" + ch + "' missing from lexicon " +
                          lexicon_path);
        }
      }
    }
  }
  EvalReport report = evaluate_model(model, sentences);
  std::cout << report.machine_text() << "\n" << report.human_text();
  return kExitOk;
}

// ---- infer -----------------------------------------------------------------------

int cmd_infer(const std::string& ckpt_path, const std::string& lexicon_path,
              const std::string& text, const std::string& file,
              bool unrestricted_argmax) {
  if (text.empty() == file.empty()) {
    throw ConfigError("provide exactly one of --text or --file");
  }
  FrontendModel model = model_from_checkpoint(load_checkpoint(ckpt_path));
  PronunciationLexicon lexicon = PronunciationLexicon::load(lexicon_path);

  std::vector<std::string> lines;
  if (!text.empty()) {
    lines.push_back(text);
  } else {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open input file " + file);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) lines.push_back(line);
    }
  }
  for (const auto& line : lines) {
    Annotation ann = annotate(model, lexicon, line, !unrestricted_argmax);
    std::cout << ann.machine_text() << ann.human_text() << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unified character-level TTS front end: polyphone "
               "disambiguation and prosodic structure from one encoder"};
  app.require_subcommand(1);

  std::string config_path, out_path, task = "poly", encoder_kind = "teacher";
  std::string teacher_path, student_path, stage = "full";
  std::string ckpt_path, corpus_path, lexicon_path, text, file;
  std::size_t n_sentences = 1000;
  std::uint64_t seed = 1;
  bool unrestricted = false;

  auto* gen = app.add_subcommand("gen-corpus", "Generate synthetic corpora or lexicon");
  gen->add_option("--spec", config_path, "Run-config file with the synth.* keys");
  gen->add_option("--out", out_path, "Output path prefix")->required();
  gen->add_option("--n", n_sentences, "Number of sentences");
  gen->add_option("--task", task, "poly|prosody|unlabeled|lexicon");
  gen->add_option("--seed", seed, "Sampling seed");

  auto* train_cmd = app.add_subcommand("train", "Finetune the front-end model");
  train_cmd->add_option("--config", config_path, "Run-config file")->required();
  train_cmd->add_option("--encoder", encoder_kind, "teacher|student");
  train_cmd->add_option("--out", out_path, "Output directory")->required();

  auto* distill_cmd = app.add_subcommand("distill", "Distill the encoder");
  distill_cmd->add_option("--config", config_path, "Run-config file")->required();
  distill_cmd->add_option("--teacher", teacher_path, "Teacher checkpoint");
  distill_cmd->add_option("--student", student_path, "Student checkpoint to continue");
  distill_cmd->add_option("--out", out_path, "Output directory")->required();
  distill_cmd->add_option("--stage", stage, "general|task|full");

  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a test corpus");
  eval_cmd->add_option("--checkpoint", ckpt_path, "Model checkpoint")->required();
  eval_cmd->add_option("--corpus", corpus_path, "Test corpus file")->required();
  eval_cmd->add_option("--lexicon", lexicon_path, "Lexicon file (coverage check)");

  auto* infer_cmd = app.add_subcommand("infer", "Annotate raw text");
  infer_cmd->add_option("--checkpoint", ckpt_path, "Model checkpoint")->required();
  infer_cmd->add_option("--lexicon", lexicon_path, "Lexicon file")->required();
  infer_cmd->add_option("--text", text, "One sentence");
  infer_cmd->add_option("--file", file, "File with one sentence per line");
  infer_cmd->add_flag("--unrestricted-argmax", unrestricted,
                      "Pick over all pronunciation classes, not just admissible ones");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen_corpus(config_path, out_path, n_sentences, task, seed);
    }
    if (train_cmd->parsed()) return cmd_train(config_path, encoder_kind, out_path);
    if (distill_cmd->parsed()) {
      return cmd_distill(config_path, teacher_path, student_path, out_path, stage);
    }
    if (eval_cmd->parsed()) return cmd_eval(ckpt_path, corpus_path, lexicon_path);
    if (infer_cmd->parsed()) {
      return cmd_infer(ckpt_path, lexicon_path, text, file, unrestricted);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const TrainError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return kExitTraining;
  } catch (const AnnotationError& e) {
    std::cerr << "annotation error: " << e.what() << "\n";
    return kExitData;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const SerialError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitData;
  } catch (const LexiconError& e) {
    std::cerr << "lexicon error: " << e.what() << "\n";
    return kExitData;
  } catch (const MetricError& e) {
    std::cerr << "metric error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
