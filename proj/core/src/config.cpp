#include "ttsfe/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

namespace ttsfe {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Typed key registry: each key knows how to parse into the config and how to
// print its current value.
struct KeyHandler {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
std::string to_str(const T& v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::map<std::string, KeyHandler> make_registry() {
  std::map<std::string, KeyHandler> reg;

  auto add_u64 =
      [&reg](const std::string& key, std::function<std::uint64_t&(RunConfig&)> ref) {
        reg[key] = {[ref](RunConfig& c, const std::string& v) { ref(c) = std::stoull(v); },
                    [ref](const RunConfig& c) {
                      return to_str(ref(const_cast<RunConfig&>(c)));
                    }};
      };
  auto add_size =
      [&reg](const std::string& key, std::function<std::size_t&(RunConfig&)> ref) {
        reg[key] = {[ref](RunConfig& c, const std::string& v) { ref(c) = std::stoul(v); },
                    [ref](const RunConfig& c) {
                      return to_str(ref(const_cast<RunConfig&>(c)));
                    }};
      };
  auto add_double =
      [&reg](const std::string& key, std::function<double&(RunConfig&)> ref) {
        reg[key] = {[ref](RunConfig& c, const std::string& v) { ref(c) = std::stod(v); },
                    [ref](const RunConfig& c) {
                      return to_str(ref(const_cast<RunConfig&>(c)));
                    }};
      };
  auto add_bool = [&reg](const std::string& key, std::function<bool&(RunConfig&)> ref) {
    reg[key] = {[ref, key](RunConfig& c, const std::string& v) {
                  if (v != "0" && v != "1") {
                    throw ConfigError("key " + key + " expects 0 or 1, got '" + v + "'");
                  }
                  ref(c) = v == "1";
                },
                [ref](const RunConfig& c) {
                  return std::string(ref(const_cast<RunConfig&>(c)) ? "1" : "0");
                }};
  };
  auto add_path =
      [&reg](const std::string& key, std::function<std::filesystem::path&(RunConfig&)> ref) {
        reg[key] = {[ref](RunConfig& c, const std::string& v) { ref(c) = v; },
                    [ref](const RunConfig& c) {
                      return ref(const_cast<RunConfig&>(c)).string();
                    }};
      };

  add_u64("seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; });
  add_size("max_seq_len", [](RunConfig& c) -> std::size_t& { return c.max_seq_len; });

  auto encoder_keys = [&](const std::string& prefix,
                          std::function<EncoderConfig&(RunConfig&)> enc) {
    add_size(prefix + ".num_layers",
             [enc](RunConfig& c) -> std::size_t& { return enc(c).num_layers; });
    add_size(prefix + ".hidden_size",
             [enc](RunConfig& c) -> std::size_t& { return enc(c).hidden_size; });
    add_size(prefix + ".num_heads",
             [enc](RunConfig& c) -> std::size_t& { return enc(c).num_heads; });
    add_size(prefix + ".ffn_size",
             [enc](RunConfig& c) -> std::size_t& { return enc(c).ffn_size; });
    add_double(prefix + ".dropout_rate",
               [enc](RunConfig& c) -> double& { return enc(c).dropout_rate; });
  };
  encoder_keys("teacher", [](RunConfig& c) -> EncoderConfig& { return c.teacher; });
  encoder_keys("student", [](RunConfig& c) -> EncoderConfig& { return c.student; });

  reg["head.kind"] = {
      [](RunConfig& c, const std::string& v) {
        if (v == "mlp") {
          c.heads.kind = HeadKind::kMlp;
        } else if (v == "blstm") {
          c.heads.kind = HeadKind::kBlstm;
        } else {
          throw ConfigError("head.kind expects mlp or blstm, got '" + v + "'");
        }
      },
      [](const RunConfig& c) {
        return std::string(c.heads.kind == HeadKind::kMlp ? "mlp" : "blstm");
      }};
  add_size("head.hidden_size",
           [](RunConfig& c) -> std::size_t& { return c.heads.hidden_size; });
  add_bool("head.prosody_crf", [](RunConfig& c) -> bool& { return c.heads.prosody_crf; });

  add_double("train.alpha1", [](RunConfig& c) -> double& { return c.train.alpha1; });
  add_double("train.alpha2", [](RunConfig& c) -> double& { return c.train.alpha2; });
  add_size("train.batch_size",
           [](RunConfig& c) -> std::size_t& { return c.train.batch_size; });
  add_size("train.steps", [](RunConfig& c) -> std::size_t& { return c.train.steps; });
  add_double("train.lr", [](RunConfig& c) -> double& { return c.train.adam.lr; });
  add_double("train.beta1", [](RunConfig& c) -> double& { return c.train.adam.beta1; });
  add_double("train.beta2", [](RunConfig& c) -> double& { return c.train.adam.beta2; });
  add_double("train.adam_eps", [](RunConfig& c) -> double& { return c.train.adam.eps; });
  add_double("train.mix_ratio", [](RunConfig& c) -> double& { return c.train.mix_ratio; });
  add_size("train.eval_interval",
           [](RunConfig& c) -> std::size_t& { return c.train.eval_interval; });
  add_double("train.clip_norm", [](RunConfig& c) -> double& { return c.train.clip_norm; });

  auto distill_keys = [&](const std::string& prefix,
                          std::function<DistillConfig&(RunConfig&)> dc) {
    add_size(prefix + ".steps",
             [dc](RunConfig& c) -> std::size_t& { return dc(c).steps; });
    add_size(prefix + ".batch_size",
             [dc](RunConfig& c) -> std::size_t& { return dc(c).batch_size; });
    add_double(prefix + ".lr", [dc](RunConfig& c) -> double& { return dc(c).adam.lr; });
    add_double(prefix + ".w_attn",
               [dc](RunConfig& c) -> double& { return dc(c).w_attn; });
    add_double(prefix + ".w_hidden",
               [dc](RunConfig& c) -> double& { return dc(c).w_hidden; });
    add_bool(prefix + ".include_embedding",
             [dc](RunConfig& c) -> bool& { return dc(c).include_embedding; });
    add_bool(prefix + ".pre_softmax",
             [dc](RunConfig& c) -> bool& { return dc(c).pre_softmax; });
  };
  distill_keys("distill.general",
               [](RunConfig& c) -> DistillConfig& { return c.general_distill; });
  distill_keys("distill.task",
               [](RunConfig& c) -> DistillConfig& { return c.task_distill; });

  add_size("synth.n_symbols",
           [](RunConfig& c) -> std::size_t& { return c.synth.n_symbols; });
  add_size("synth.n_polyphones",
           [](RunConfig& c) -> std::size_t& { return c.synth.n_polyphones; });
  add_size("synth.n_context_classes",
           [](RunConfig& c) -> std::size_t& { return c.synth.n_context_classes; });
  add_size("synth.word_len_min",
           [](RunConfig& c) -> std::size_t& { return c.synth.word_len_min; });
  add_size("synth.word_len_max",
           [](RunConfig& c) -> std::size_t& { return c.synth.word_len_max; });
  add_size("synth.words_per_phrase_min",
           [](RunConfig& c) -> std::size_t& { return c.synth.words_per_phrase_min; });
  add_size("synth.words_per_phrase_max",
           [](RunConfig& c) -> std::size_t& { return c.synth.words_per_phrase_max; });
  add_size("synth.phrases_min",
           [](RunConfig& c) -> std::size_t& { return c.synth.phrases_min; });
  add_size("synth.phrases_max",
           [](RunConfig& c) -> std::size_t& { return c.synth.phrases_max; });
  add_double("synth.punct_prob",
             [](RunConfig& c) -> double& { return c.synth.punct_prob; });
  add_u64("synth.seed", [](RunConfig& c) -> std::uint64_t& { return c.synth.seed; });

  add_path("paths.poly_train",
           [](RunConfig& c) -> std::filesystem::path& { return c.poly_train; });
  add_path("paths.poly_test",
           [](RunConfig& c) -> std::filesystem::path& { return c.poly_test; });
  add_path("paths.prosody_train",
           [](RunConfig& c) -> std::filesystem::path& { return c.prosody_train; });
  add_path("paths.prosody_test",
           [](RunConfig& c) -> std::filesystem::path& { return c.prosody_test; });
  add_path("paths.unlabeled",
           [](RunConfig& c) -> std::filesystem::path& { return c.unlabeled; });
  add_path("paths.lexicon",
           [](RunConfig& c) -> std::filesystem::path& { return c.lexicon; });
  return reg;
}

const std::map<std::string, KeyHandler>& registry() {
  static const std::map<std::string, KeyHandler> reg = make_registry();
  return reg;
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.teacher = teacher_preset(0, c.max_seq_len);
  c.student = student_preset(0, c.max_seq_len);
  c.train.steps = 3000;
  c.general_distill.steps = 400;
  c.task_distill.steps = 400;
  return c;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  RunConfig config = defaults();
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": expected key = value, got '" + t + "'");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    auto it = registry().find(key);
    if (it == registry().end()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown key '" +
                        key + "'");
    }
    try {
      it->second.set(config, value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": bad value '" +
                        value + "' for key '" + key + "': " + e.what());
    }
  }
  config.teacher.max_seq_len = config.max_seq_len;
  config.student.max_seq_len = config.max_seq_len;
  config.general_distill.seed = config.seed;
  config.task_distill.seed = config.seed;
  config.train.seed = config.seed;
  return config;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string RunConfig::resolved_text() const {
  std::ostringstream os;
  for (const auto& [key, handler] : registry()) {
    os << key << " = " << handler.get(*this) << '\n';
  }
  return os.str();
}

PipelineConfig RunConfig::pipeline_config(std::size_t vocab_size) const {
  PipelineConfig pc;
  pc.teacher_encoder = teacher;
  pc.teacher_encoder.vocab_size = vocab_size;
  pc.student_encoder = student;
  pc.student_encoder.vocab_size = vocab_size;
  pc.heads = heads;
  pc.general_distill = general_distill;
  pc.teacher_train = train;
  pc.task_distill = task_distill;
  pc.student_train = train;
  pc.seed = seed;
  return pc;
}

}  // namespace ttsfe
