#include "ttsfe/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "ttsfe/serial.hpp"

namespace ttsfe {

namespace {

constexpr const char* kFormatTag = "TTSFE1";

void write_named_tensors(std::ostream& out,
                         const std::vector<std::pair<std::string, Tensor>>& named) {
  out << "tensors=" << named.size() << '\n';
  for (const auto& [name, t] : named) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(out, t);
  }
}

std::map<std::string, Tensor> read_named_tensors(std::istream& in, std::size_t count) {
  std::map<std::string, Tensor> out;
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t len = read_u32(in);
    if (len > 4096) throw SerialError("implausible tensor name length");
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw SerialError("unexpected end of stream reading tensor name");
    out.emplace(std::move(name), read_tensor(in));
  }
  return out;
}

std::string expect_line(std::istream& in, const char* what) {
  std::string line;
  if (!std::getline(in, line)) {
    throw SerialError(std::string("checkpoint truncated; expected ") + what);
  }
  return line;
}

std::pair<std::string, std::string> split_kv(const std::string& line) {
  auto eq = line.find('=');
  if (eq == std::string::npos) {
    throw SerialError("checkpoint header line without '=': " + line);
  }
  return {line.substr(0, eq), line.substr(eq + 1)};
}

void write_header(std::ostream& out, const EncoderConfig& cfg, bool has_heads,
                  const HeadSettings& hs, const CharVocab& vocab,
                  const PronClassMap& classes) {
  out << kFormatTag << '\n';
  out << "encoder.num_layers=" << cfg.num_layers << '\n';
  out << "encoder.hidden_size=" << cfg.hidden_size << '\n';
  out << "encoder.num_heads=" << cfg.num_heads << '\n';
  out << "encoder.ffn_size=" << cfg.ffn_size << '\n';
  out << "encoder.vocab_size=" << cfg.vocab_size << '\n';
  out << "encoder.max_seq_len=" << cfg.max_seq_len << '\n';
  out << "encoder.dropout_rate=" << cfg.dropout_rate << '\n';
  out << "has_heads=" << (has_heads ? 1 : 0) << '\n';
  if (has_heads) {
    out << "head.kind=" << (hs.kind == HeadKind::kMlp ? "mlp" : "blstm") << '\n';
    out << "head.hidden_size=" << hs.hidden_size << '\n';
    out << "head.prosody_crf=" << (hs.prosody_crf ? 1 : 0) << '\n';
  }
  out << "vocab=" << vocab.chars().size() << '\n';
  for (const auto& ch : vocab.chars()) out << ch << '\n';
  out << "classes=" << classes.num_classes() << '\n';
  out << classes.to_text();
}

// Places loaded tensors into a freshly shaped parameter structure, checking
// names and shapes; leftover or missing names are corruption.
template <typename Params>
void fill_params(Params& params, std::map<std::string, Tensor>& tensors,
                 const std::string& prefix) {
  for (auto& [name, slot] : params.named_parameters()) {
    auto it = tensors.find(prefix + name);
    if (it == tensors.end()) {
      throw SerialError("checkpoint missing tensor '" + prefix + name + "'");
    }
    if (it->second.shape() != slot.shape()) {
      throw SerialError("checkpoint tensor '" + prefix + name + "' has shape " +
                        shape_str(it->second.shape()) + ", expected " +
                        shape_str(slot.shape()));
    }
    std::copy(it->second.data().begin(), it->second.data().end(),
              slot.mutable_data().begin());
    tensors.erase(it);
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, FrontendModel& model,
                     const HeadSettings& head_settings) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SerialError("cannot write checkpoint " + path.string());
  write_header(out, model.encoder.config, true, head_settings, model.vocab,
               model.classes);
  write_named_tensors(out, model.named_parameters());
  if (!out) throw SerialError("failed writing checkpoint " + path.string());
}

void save_encoder_checkpoint(const std::filesystem::path& path, EncoderParams& encoder,
                             const CharVocab& vocab, const PronClassMap& classes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SerialError("cannot write checkpoint " + path.string());
  write_header(out, encoder.config, false, HeadSettings{}, vocab, classes);
  std::vector<std::pair<std::string, Tensor>> named;
  for (auto& [n, t] : encoder.named_parameters()) named.emplace_back("encoder." + n, t);
  write_named_tensors(out, named);
  if (!out) throw SerialError("failed writing checkpoint " + path.string());
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SerialError("cannot open checkpoint " + path.string());
  if (expect_line(in, "format tag") != kFormatTag) {
    throw SerialError(path.string() + " is not a checkpoint (bad format tag)");
  }

  std::map<std::string, std::string> kv;
  EncoderConfig cfg;
  // fixed header keys up to the vocabulary
  for (;;) {
    std::string line = expect_line(in, "header key=value");
    auto [key, value] = split_kv(line);
    kv[key] = value;
    if (key == "vocab") break;
  }
  auto need = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw SerialError("checkpoint header missing " + key);
    return it->second;
  };
  cfg.num_layers = std::stoul(need("encoder.num_layers"));
  cfg.hidden_size = std::stoul(need("encoder.hidden_size"));
  cfg.num_heads = std::stoul(need("encoder.num_heads"));
  cfg.ffn_size = std::stoul(need("encoder.ffn_size"));
  cfg.vocab_size = std::stoul(need("encoder.vocab_size"));
  cfg.max_seq_len = std::stoul(need("encoder.max_seq_len"));
  cfg.dropout_rate = std::stod(need("encoder.dropout_rate"));
  cfg.validate();

  CheckpointData data;
  data.has_heads = need("has_heads") == "1";
  if (data.has_heads) {
    std::string kind = need("head.kind");
    if (kind != "mlp" && kind != "blstm") {
      throw SerialError("unknown head.kind '" + kind + "'");
    }
    data.head_settings.kind = kind == "mlp" ? HeadKind::kMlp : HeadKind::kBlstm;
    data.head_settings.hidden_size = std::stoul(need("head.hidden_size"));
    data.head_settings.prosody_crf = need("head.prosody_crf") == "1";
  }

  std::size_t n_vocab = std::stoul(need("vocab"));
  std::vector<std::string> chars;
  chars.reserve(n_vocab);
  for (std::size_t i = 0; i < n_vocab; ++i) chars.push_back(expect_line(in, "vocab char"));
  data.vocab = CharVocab(std::move(chars));
  if (data.vocab.size() != cfg.vocab_size) {
    throw SerialError("vocabulary size " + std::to_string(data.vocab.size()) +
                      " does not match encoder.vocab_size " +
                      std::to_string(cfg.vocab_size));
  }

  auto [ckey, cval] = split_kv(expect_line(in, "classes count"));
  if (ckey != "classes") throw SerialError("expected classes=N, got " + ckey);
  std::size_t n_classes = std::stoul(cval);
  std::string class_text;
  for (std::size_t i = 0; i < n_classes; ++i) {
    class_text += expect_line(in, "class line");
    class_text += '\n';
  }
  data.classes = n_classes ? PronClassMap::from_text(class_text) : PronClassMap{};

  auto [tkey, tval] = split_kv(expect_line(in, "tensors count"));
  if (tkey != "tensors") throw SerialError("expected tensors=N, got " + tkey);
  auto tensors = read_named_tensors(in, std::stoul(tval));

  // Shape the structures, then fill from the tensor map.
  data.encoder = init_params(cfg, 0);
  fill_params(data.encoder, tensors, "encoder.");

  std::size_t encoder_total = 0;
  for (auto& [n, t] : data.encoder.named_parameters()) encoder_total += t.size();
  if (encoder_total != count_params(cfg)) {
    throw SerialError("encoder parameter count " + std::to_string(encoder_total) +
                      " does not match the closed-form count " +
                      std::to_string(count_params(cfg)));
  }

  if (data.has_heads) {
    const auto& hs = data.head_settings;
    data.poly_head = init_head(HeadConfig{hs.kind, cfg.hidden_size, hs.hidden_size,
                                          data.classes.num_classes(), false},
                               0);
    data.prosody_head = init_head(HeadConfig{hs.kind, cfg.hidden_size, hs.hidden_size,
                                             kNumProsodyLabels, hs.prosody_crf},
                                  0);
    fill_params(*data.poly_head, tensors, "poly_head.");
    fill_params(*data.prosody_head, tensors, "prosody_head.");
  }
  if (!tensors.empty()) {
    throw SerialError("checkpoint has " + std::to_string(tensors.size()) +
                      " unexpected tensor(s), first: '" + tensors.begin()->first + "'");
  }
  return data;
}

FrontendModel model_from_checkpoint(CheckpointData&& data) {
  if (!data.has_heads) {
    throw SerialError("checkpoint is encoder-only; it cannot serve inference");
  }
  FrontendModel m;
  m.encoder = std::move(data.encoder);
  m.poly_head = std::move(*data.poly_head);
  m.prosody_head = std::move(*data.prosody_head);
  m.vocab = std::move(data.vocab);
  m.classes = std::move(data.classes);
  return m;
}

}  // namespace ttsfe
