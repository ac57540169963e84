#include "ttsfe/heads.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace ttsfe {

// ---- PronClassMap -------------------------------------------------------------

PronClassMap PronClassMap::build(
    const std::map<std::string, std::vector<std::string>>& prons_by_char) {
  PronClassMap m;
  for (const auto& [ch, prons] : prons_by_char) {
    if (prons.size() < 2) {
      throw LexiconError("character '" + ch + "' has " + std::to_string(prons.size()) +
                         " pronunciation(s); polyphone classes need at least 2");
    }
    std::vector<std::string> sorted = prons;
    std::sort(sorted.begin(), sorted.end());
    for (const auto& pr : sorted) {
      m.admissible_[ch].push_back(static_cast<int>(m.classes_.size()));
      m.classes_.emplace_back(ch, pr);
    }
  }
  return m;
}

int PronClassMap::class_of(const std::string& ch, const std::string& pron) const {
  auto it = admissible_.find(ch);
  if (it != admissible_.end()) {
    for (int cls : it->second) {
      if (classes_[cls].second == pron) return cls;
    }
  }
  throw LexiconError("no pronunciation class for '" + ch + "' / '" + pron + "'");
}

bool PronClassMap::is_polyphonic(const std::string& ch) const {
  return admissible_.count(ch) > 0;
}

const std::vector<int>& PronClassMap::admissible(const std::string& ch) const {
  auto it = admissible_.find(ch);
  if (it == admissible_.end()) {
    throw LexiconError("character '" + ch + "' has no polyphone classes");
  }
  return it->second;
}

std::string PronClassMap::to_text() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    os << classes_[i].first << '\t' << classes_[i].second << '\t' << i << '\n';
  }
  return os.str();
}

PronClassMap PronClassMap::from_text(const std::string& text) {
  std::map<std::string, std::vector<std::string>> by_char;
  std::istringstream is(text);
  std::string line;
  std::size_t expect = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos) {
      throw LexiconError("malformed class-map line: " + line);
    }
    std::size_t idx = std::stoul(line.substr(t2 + 1));
    if (idx != expect++) {
      throw LexiconError("class-map indices not dense at line: " + line);
    }
    by_char[line.substr(0, t1)].push_back(line.substr(t1 + 1, t2 - t1 - 1));
  }
  PronClassMap m = build(by_char);
  if (m.num_classes() != expect) {
    throw LexiconError("class-map text does not round-trip densely");
  }
  return m;
}

// ---- head parameters -----------------------------------------------------------

namespace {

Tensor head_trunc_normal(std::vector<std::size_t> shape, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 0.02);
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.mutable_data()) {
    double x;
    do {
      x = dist(rng);
    } while (std::fabs(x) > 0.04);
    v = x;
  }
  return t;
}

}  // namespace

std::vector<Tensor> HeadParams::parameters() {
  std::vector<Tensor> out = weights;
  if (config.crf) {
    out.push_back(crf_transitions);
    out.push_back(crf_start);
    out.push_back(crf_end);
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> HeadParams::named_parameters() {
  static const char* kMlpNames[] = {"w1", "b1", "w2", "b2", "w3", "b3"};
  static const char* kBlstmNames[] = {"fwd.wx", "fwd.wh", "fwd.b", "bwd.wx",
                                      "bwd.wh", "bwd.b",  "out.w", "out.b"};
  std::vector<std::pair<std::string, Tensor>> out;
  const char** names = config.kind == HeadKind::kMlp ? kMlpNames : kBlstmNames;
  for (std::size_t i = 0; i < weights.size(); ++i) out.emplace_back(names[i], weights[i]);
  if (config.crf) {
    out.emplace_back("crf.transitions", crf_transitions);
    out.emplace_back("crf.start", crf_start);
    out.emplace_back("crf.end", crf_end);
  }
  return out;
}

void HeadParams::set_trainable(bool flag) {
  for (auto& t : parameters()) t.set_requires_grad(flag);
}

HeadParams HeadParams::clone() const {
  HeadParams out;
  out.config = config;
  for (const auto& w : weights) out.weights.push_back(w.detached_copy());
  if (config.crf) {
    out.crf_transitions = crf_transitions.detached_copy();
    out.crf_start = crf_start.detached_copy();
    out.crf_end = crf_end.detached_copy();
  }
  return out;
}

HeadParams init_head(const HeadConfig& config, std::uint64_t seed) {
  if (config.input_size == 0 || config.hidden_size == 0 || config.num_classes == 0) {
    throw ConfigError("head config has a zero-sized field");
  }
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL);
  std::size_t d = config.input_size, h = config.hidden_size, c = config.num_classes;

  HeadParams p;
  p.config = config;
  if (config.kind == HeadKind::kMlp) {
    p.weights = {head_trunc_normal({d, h}, rng), Tensor::zeros({h}),
                 head_trunc_normal({h, h}, rng), Tensor::zeros({h}),
                 head_trunc_normal({h, c}, rng), Tensor::zeros({c})};
  } else {
    auto lstm_bias = [&]() {
      // forget-gate chunk starts at ones
      Tensor b = Tensor::zeros({4 * h});
      auto bd = b.mutable_data();
      for (std::size_t i = h; i < 2 * h; ++i) bd[i] = 1.0;
      return b;
    };
    p.weights = {head_trunc_normal({d, 4 * h}, rng),
                 head_trunc_normal({h, 4 * h}, rng),
                 lstm_bias(),
                 head_trunc_normal({d, 4 * h}, rng),
                 head_trunc_normal({h, 4 * h}, rng),
                 lstm_bias(),
                 head_trunc_normal({2 * h, c}, rng),
                 Tensor::zeros({c})};
  }
  if (config.crf) {
    p.crf_transitions = Tensor::zeros({c, c});
    p.crf_start = Tensor::zeros({c});
    p.crf_end = Tensor::zeros({c});
  }
  for (auto& t : p.parameters()) t.set_requires_grad(true);
  return p;
}

namespace {

// One LSTM direction over rows [0, valid) of x, in scan order given by
// `reverse`. Returns the hidden rows in original (row-index) order.
std::vector<Tensor> lstm_scan(const Tensor& x, const Tensor& wx, const Tensor& wh,
                              const Tensor& b, std::size_t valid, bool reverse) {
  std::size_t h = wh.shape()[0];
  Tensor h_prev = Tensor::zeros({1, h});
  Tensor c_prev = Tensor::zeros({1, h});
  std::vector<Tensor> out(valid);
  for (std::size_t step = 0; step < valid; ++step) {
    std::size_t t = reverse ? valid - 1 - step : step;
    Tensor xt = slice_rows(x, t, 1);
    Tensor gates = add_bias(add(matmul(xt, wx), matmul(h_prev, wh)), b);
    Tensor in_g = sigmoid(slice_cols(gates, 0, h));
    Tensor forget_g = sigmoid(slice_cols(gates, h, h));
    Tensor cell_g = tanh(slice_cols(gates, 2 * h, h));
    Tensor out_g = sigmoid(slice_cols(gates, 3 * h, h));
    Tensor c = add(mul(forget_g, c_prev), mul(in_g, cell_g));
    Tensor hid = mul(out_g, tanh(c));
    out[t] = hid;
    h_prev = hid;
    c_prev = c;
  }
  return out;
}

}  // namespace

Tensor head_forward(const HeadParams& head, const Tensor& hidden, std::size_t valid) {
  const HeadConfig& cfg = head.config;
  if (hidden.rank() != 2 || hidden.shape()[1] != cfg.input_size) {
    throw ShapeError("head_forward: expected [T x " + std::to_string(cfg.input_size) +
                     "], got " + shape_str(hidden.shape()));
  }
  std::size_t t_len = hidden.shape()[0];
  if (valid == 0 || valid > t_len) {
    throw UsageError("head_forward: valid prefix " + std::to_string(valid) +
                     " out of range for " + std::to_string(t_len) + " rows");
  }

  if (cfg.kind == HeadKind::kMlp) {
    const auto& w = head.weights;
    Tensor a1 = gelu(add_bias(matmul(hidden, w[0]), w[1]));
    Tensor a2 = gelu(add_bias(matmul(a1, w[2]), w[3]));
    return add_bias(matmul(a2, w[4]), w[5]);
  }

  const auto& w = head.weights;
  std::vector<Tensor> fwd = lstm_scan(hidden, w[0], w[1], w[2], valid, false);
  std::vector<Tensor> bwd = lstm_scan(hidden, w[3], w[4], w[5], valid, true);
  std::vector<Tensor> both;
  both.reserve(valid);
  for (std::size_t t = 0; t < valid; ++t) {
    both.push_back(concat_cols({fwd[t], bwd[t]}));
  }
  Tensor logits = add_bias(matmul(concat_rows(both), w[6]), w[7]);
  if (valid < t_len) {
    logits = concat_rows({logits, Tensor::zeros({t_len - valid, cfg.num_classes})});
  }
  return logits;
}

// ---- losses ---------------------------------------------------------------------

Tensor polyphone_loss(const Tensor& logits, const std::vector<int>& targets,
                      const std::vector<std::uint8_t>& poly_mask) {
  return masked_cross_entropy(log_softmax(logits), targets, poly_mask);
}

Tensor prosody_loss(const Tensor& logits, const std::vector<int>& labels,
                    const std::vector<std::uint8_t>& valid_mask) {
  return masked_cross_entropy(log_softmax(logits), labels, valid_mask);
}

Tensor global_loss(const Tensor& l_poly, const Tensor& l_prosody, double alpha1,
                   double alpha2) {
  if (alpha1 < 0.0 || alpha2 < 0.0) {
    throw UsageError("global_loss: alphas must be nonnegative");
  }
  return add(scale(l_poly, alpha1), scale(l_prosody, alpha2));
}

int predict_polyphone(std::span<const double> logits_row,
                      const std::vector<int>& admissible) {
  if (admissible.empty()) {
    throw LexiconError("predict_polyphone: empty admissible class set");
  }
  int best = -1;
  double best_score = 0.0;
  for (int cls : admissible) {
    if (cls < 0 || static_cast<std::size_t>(cls) >= logits_row.size()) {
      throw LexiconError("predict_polyphone: class " + std::to_string(cls) +
                         " outside logit range");
    }
    if (best < 0 || logits_row[cls] > best_score) {
      best = cls;
      best_score = logits_row[cls];
    }
  }
  return best;
}

// ---- linear-chain CRF ------------------------------------------------------------

namespace {

double logsumexp(std::span<const double> v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

void check_crf_shapes(const Tensor& emissions, const Tensor& transitions,
                      const Tensor& start, const Tensor& end) {
  if (emissions.rank() != 2) {
    throw ShapeError("crf: emissions must be [T x C], got " + shape_str(emissions.shape()));
  }
  std::size_t c = emissions.shape()[1];
  if (transitions.shape() != std::vector<std::size_t>{c, c} ||
      start.shape() != std::vector<std::size_t>{c} ||
      end.shape() != std::vector<std::size_t>{c}) {
    throw ShapeError("crf: potential shapes inconsistent with " +
                     std::to_string(c) + " classes");
  }
}

}  // namespace

Tensor crf_log_likelihood(const Tensor& emissions, const Tensor& transitions,
                          const Tensor& start, const Tensor& end,
                          const std::vector<int>& labels) {
  check_crf_shapes(emissions, transitions, start, end);
  std::size_t t_len = emissions.shape()[0];
  std::size_t c = emissions.shape()[1];
  if (labels.size() != t_len) {
    throw ShapeError("crf: labels length " + std::to_string(labels.size()) +
                     " vs emissions rows " + std::to_string(t_len));
  }
  for (std::size_t t = 0; t < t_len; ++t) {
    if (labels[t] < 0 || static_cast<std::size_t>(labels[t]) >= c) {
      throw LabelError("crf: label " + std::to_string(labels[t]) + " at position " +
                       std::to_string(t) + " outside [0, " + std::to_string(c) + ")");
    }
  }

  auto em = emissions.data();
  auto tr = transitions.data();
  auto st = start.data();
  auto en = end.data();

  // Forward pass in log space.
  std::vector<double> alpha(t_len * c);
  for (std::size_t j = 0; j < c; ++j) alpha[j] = st[j] + em[j];
  std::vector<double> acc(c);
  for (std::size_t t = 1; t < t_len; ++t) {
    for (std::size_t j = 0; j < c; ++j) {
      for (std::size_t i = 0; i < c; ++i) {
        acc[i] = alpha[(t - 1) * c + i] + tr[i * c + j];
      }
      alpha[t * c + j] = em[t * c + j] + logsumexp(acc);
    }
  }
  for (std::size_t j = 0; j < c; ++j) acc[j] = alpha[(t_len - 1) * c + j] + en[j];
  double log_z = logsumexp(acc);

  double path = st[labels[0]] + em[labels[0]];
  for (std::size_t t = 1; t < t_len; ++t) {
    path += tr[labels[t - 1] * c + labels[t]] + em[t * c + labels[t]];
  }
  path += en[labels[t_len - 1]];

  return make_op(
      "crf_log_likelihood", {emissions, transitions, start, end}, {}, {path - log_z},
      [labels, t_len, c, alpha = std::move(alpha), log_z](OpGrad& g) {
        double go = g.out_grad()[0];
        auto em = g.input_data(0);
        auto tr = g.input_data(1);
        auto en = g.input_data(3);

        // Backward recursion for marginals.
        std::vector<double> beta(t_len * c);
        for (std::size_t j = 0; j < c; ++j) beta[(t_len - 1) * c + j] = en[j];
        std::vector<double> acc(c);
        for (std::size_t t = t_len - 1; t-- > 0;) {
          for (std::size_t i = 0; i < c; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
              acc[j] = tr[i * c + j] + em[(t + 1) * c + j] + beta[(t + 1) * c + j];
            }
            beta[t * c + i] = logsumexp(acc);
          }
        }

        // d ll / d emissions: indicator minus unary marginal
        for (std::size_t t = 0; t < t_len; ++t) {
          for (std::size_t j = 0; j < c; ++j) {
            double marg = std::exp(alpha[t * c + j] + beta[t * c + j] - log_z);
            double ind = (static_cast<std::size_t>(labels[t]) == j) ? 1.0 : 0.0;
            g.add(0, t * c + j, go * (ind - marg));
          }
        }
        // d ll / d transitions: path counts minus pairwise marginals
        for (std::size_t t = 0; t + 1 < t_len; ++t) {
          g.add(1, labels[t] * c + labels[t + 1], go);
          for (std::size_t i = 0; i < c; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
              double marg = std::exp(alpha[t * c + i] + tr[i * c + j] +
                                     em[(t + 1) * c + j] + beta[(t + 1) * c + j] - log_z);
              g.add(1, i * c + j, -go * marg);
            }
          }
        }
        // start / end
        for (std::size_t j = 0; j < c; ++j) {
          double m0 = std::exp(alpha[j] + beta[j] - log_z);
          g.add(2, j, go * (((static_cast<std::size_t>(labels[0]) == j) ? 1.0 : 0.0) - m0));
          double mt = std::exp(alpha[(t_len - 1) * c + j] + beta[(t_len - 1) * c + j] - log_z);
          g.add(3, j,
                go * (((static_cast<std::size_t>(labels[t_len - 1]) == j) ? 1.0 : 0.0) - mt));
        }
      });
}

std::vector<int> crf_viterbi(const Tensor& emissions, const Tensor& transitions,
                             const Tensor& start, const Tensor& end) {
  check_crf_shapes(emissions, transitions, start, end);
  std::size_t t_len = emissions.shape()[0];
  std::size_t c = emissions.shape()[1];
  auto em = emissions.data();
  auto tr = transitions.data();
  auto st = start.data();
  auto en = end.data();

  std::vector<double> delta(t_len * c);
  std::vector<std::size_t> bp(t_len * c, 0);
  for (std::size_t j = 0; j < c; ++j) delta[j] = st[j] + em[j];
  for (std::size_t t = 1; t < t_len; ++t) {
    for (std::size_t j = 0; j < c; ++j) {
      std::size_t arg = 0;
      double best = delta[(t - 1) * c] + tr[j];
      for (std::size_t i = 1; i < c; ++i) {
        double s = delta[(t - 1) * c + i] + tr[i * c + j];
        if (s > best) {  // strict: ties keep the lowest predecessor index
          best = s;
          arg = i;
        }
      }
      delta[t * c + j] = em[t * c + j] + best;
      bp[t * c + j] = arg;
    }
  }
  std::size_t last = 0;
  double best = delta[(t_len - 1) * c] + en[0];
  for (std::size_t j = 1; j < c; ++j) {
    double s = delta[(t_len - 1) * c + j] + en[j];
    if (s > best) {
      best = s;
      last = j;
    }
  }
  std::vector<int> path(t_len);
  path[t_len - 1] = static_cast<int>(last);
  for (std::size_t t = t_len - 1; t > 0; --t) {
    last = bp[t * c + last];
    path[t - 1] = static_cast<int>(last);
  }
  return path;
}

}  // namespace ttsfe
