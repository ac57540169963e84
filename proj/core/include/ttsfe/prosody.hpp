#pragma once

#include <set>
#include <string>
#include <vector>

#include "ttsfe/text.hpp"

namespace ttsfe {

/// Per-character break label: I = no break, B1/B2/B3 = break of increasing
/// strength (prosodic word / prosodic phrase / intonational phrase) behind
/// the character.
enum class ProsodyLabel : int { kI = 0, kB1 = 1, kB2 = 2, kB3 = 3 };

constexpr std::size_t kNumProsodyLabels = 4;

const std::string& prosody_label_name(ProsodyLabel label);
ProsodyLabel prosody_label_from_int(int v);

/// Parses a concatenated label string such as "IIB1IB2" (greedy: 'I' alone,
/// 'B' followed by 1/2/3).
std::vector<ProsodyLabel> parse_prosody_labels(const std::string& text);
std::string format_prosody_labels(const std::vector<ProsodyLabel>& labels);

/// Character positions carrying a break, per level. The levels nest:
/// iph is a subset of pph is a subset of pw.
struct BoundarySets {
  std::set<std::size_t> pw, pph, iph;
  bool operator==(const BoundarySets&) const = default;
};

/// Position i is a PW boundary iff its label is in {B1,B2,B3}, a PPH
/// boundary iff in {B2,B3}, an IPH boundary iff B3.
BoundarySets decode_prosody(const std::vector<ProsodyLabel>& labels);

/// Inverse of decode_prosody: each position takes the highest applicable
/// level. Requires nested inputs.
std::vector<ProsodyLabel> encode_prosody(const BoundarySets& sets, std::size_t length);

}  // namespace ttsfe
