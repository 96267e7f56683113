#pragma once

#include <algorithm>
#include <array>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "flicker/corpus.hpp"
#include "flicker/csv.hpp"
#include "flicker/error.hpp"

namespace flicker::sensorimotor {

inline constexpr std::size_t kModalities = 11;
inline constexpr std::size_t kPerceptual = 6;  // first six entries; the rest are effectors

inline constexpr std::array<std::string_view, kModalities> kModalityNames{
    "visual", "auditory", "gustatory", "olfactory", "haptic", "interoceptive",
    "head", "hand", "mouth", "foot", "torso"};

using Ratings = std::array<double, kModalities>;

struct NormEntry {
  Ratings ratings{};
  std::optional<double> perceptual_composite;  // from the file, when present
  std::optional<double> action_composite;
};

/// Word -> 11 modality means in [0, 5], keyed by lowercase word.
struct NormTable {
  std::unordered_map<std::string, NormEntry> entries;

  const NormEntry* find(const std::string& word) const {
    auto it = entries.find(word);
    return it == entries.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return entries.size(); }

  std::vector<std::string> words() const {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& [w, e] : entries) out.push_back(w);
    std::sort(out.begin(), out.end());
    return out;
  }
};

namespace detail {

/// Accepted header spellings per modality: plain names or the published
/// norms' "<Dimension>.mean" columns.
inline const std::array<std::vector<std::string>, kModalities>& modality_aliases() {
  static const std::array<std::vector<std::string>, kModalities> aliases{{
      {"visual", "visual.mean"},
      {"auditory", "auditory.mean"},
      {"gustatory", "gustatory.mean"},
      {"olfactory", "olfactory.mean"},
      {"haptic", "haptic.mean"},
      {"interoceptive", "interoceptive.mean"},
      {"head", "head.mean"},
      {"hand", "hand_arm.mean", "hand_arm"},
      {"mouth", "mouth.mean"},
      {"foot", "foot_leg.mean", "foot_leg"},
      {"torso", "torso.mean"},
  }};
  return aliases;
}

inline std::optional<std::size_t> find_column(const std::vector<std::string>& lower_header,
                                              const std::vector<std::string>& names) {
  for (const auto& n : names)
    for (std::size_t i = 0; i < lower_header.size(); ++i)
      if (lower_header[i] == n) return i;
  return std::nullopt;
}

inline double parse_rating(const std::string& text, const std::string& word, std::string_view column) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size())
    throw input_error("norms: non-numeric " + std::string(column) + " value '" + text + "' for word '" + word + "'");
  if (!(v >= 0.0 && v <= 5.0))
    throw input_error("norms: " + std::string(column) + " value " + text + " outside [0, 5] for word '" + word + "'");
  return v;
}

}  // namespace detail

inline NormTable load_norms(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  std::vector<std::string> lower;
  for (const auto& h : table.header) lower.push_back(flicker::detail::ascii_lower(flicker::detail::trim(h)));
  const auto word_col = detail::find_column(lower, {"word"});
  if (!word_col) throw input_error("norms: missing column 'word'");
  std::array<std::size_t, kModalities> cols{};
  for (std::size_t m = 0; m < kModalities; ++m) {
    auto c = detail::find_column(lower, detail::modality_aliases()[m]);
    if (!c) throw input_error("norms: missing column '" + std::string(kModalityNames[m]) + "'");
    cols[m] = *c;
  }
  const auto perc_col = detail::find_column(lower, {"max_strength.perceptual", "perceptual_strength"});
  const auto act_col = detail::find_column(lower, {"max_strength.action", "action_strength"});

  NormTable norms;
  for (const auto& row : table.rows) {
    const std::string word = flicker::detail::ascii_lower(flicker::detail::trim(row[*word_col]));
    if (word.empty()) continue;
    NormEntry e;
    for (std::size_t m = 0; m < kModalities; ++m) e.ratings[m] = detail::parse_rating(row[cols[m]], word, kModalityNames[m]);
    if (perc_col) e.perceptual_composite = detail::parse_rating(row[*perc_col], word, "perceptual strength");
    if (act_col) e.action_composite = detail::parse_rating(row[*act_col], word, "action strength");
    if (!norms.entries.emplace(word, e).second) throw input_error("norms: duplicate word '" + word + "'");
  }
  return norms;
}

struct SensorimotorProfile {
  std::string participant_id;
  Ratings modality_means{};
  double perceptual_strength = 0.0;
  double action_strength = 0.0;
  std::size_t matched_word_count = 0;
  std::size_t length = 0;
};

struct ScoringOptions {
  std::size_t min_matched = 3;
  bool use_file_composites = false;
};

struct ScoreOutcome {
  std::optional<SensorimotorProfile> profile;  // empty when excluded
  std::size_t lemma_matches = 0;               // tokens matched as lemmas
  std::size_t surface_matches = 0;             // matched only via the surface fallback
};

/// Per-word maximum over a block of modality ratings.
inline double block_max(const Ratings& r, std::size_t first, std::size_t last) {
  return *std::max_element(r.begin() + static_cast<std::ptrdiff_t>(first), r.begin() + static_cast<std::ptrdiff_t>(last));
}

/// Averages ratings over matched token occurrences. A token matches by its
/// lemma, falling back to its surface form. Composites are the mean of each
/// word's perceptual (resp. action) maximum.
inline ScoreOutcome score_description(const TokenizedDoc& doc, const NormTable& norms, const ScoringOptions& opt = {}) {
  ScoreOutcome out;
  std::vector<const NormEntry*> matched;
  for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
    if (const auto* e = norms.find(doc.tokens[i])) {
      matched.push_back(e);
      ++out.lemma_matches;
    } else if (i < doc.surface.size()) {
      if (const auto* s = norms.find(doc.surface[i])) {
        matched.push_back(s);
        ++out.surface_matches;
      }
    }
  }
  if (matched.size() < opt.min_matched) return out;

  SensorimotorProfile p;
  p.participant_id = doc.participant_id;
  p.matched_word_count = matched.size();
  p.length = doc.length();
  const double k = static_cast<double>(matched.size());
  for (const auto* e : matched) {
    for (std::size_t m = 0; m < kModalities; ++m) p.modality_means[m] += e->ratings[m];
    const double perc = (opt.use_file_composites && e->perceptual_composite) ? *e->perceptual_composite
                                                                             : block_max(e->ratings, 0, kPerceptual);
    const double act = (opt.use_file_composites && e->action_composite) ? *e->action_composite
                                                                        : block_max(e->ratings, kPerceptual, kModalities);
    p.perceptual_strength += perc;
    p.action_strength += act;
  }
  for (auto& v : p.modality_means) v /= k;
  p.perceptual_strength /= k;
  p.action_strength /= k;
  out.profile = p;
  return out;
}

}  // namespace flicker::sensorimotor
