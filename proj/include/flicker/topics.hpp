#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "flicker/corpus.hpp"
#include "flicker/error.hpp"
#include "flicker/stats.hpp"

namespace flicker::topics {

/// Terms used for class pooling: alphanumeric runs of two or more characters.
inline std::vector<std::string> term_tokens(std::string_view cleaned) {
  std::vector<std::string> out;
  for (auto& t : tokenize_words(cleaned))
    if (t.size() >= 2) out.push_back(detail::ascii_lower(t));
  return out;
}

struct TopicTerms {
  std::map<std::string, double> weights;
  std::size_t token_count = 0;
  std::optional<std::string> label;
};

struct TopicTermTable {
  std::vector<TopicTerms> topics;

  /// Highest-weighted terms, ties broken alphabetically.
  std::vector<std::pair<std::string, double>> top_terms(std::size_t topic, std::size_t k) const {
    std::vector<std::pair<std::string, double>> v(topics.at(topic).weights.begin(), topics.at(topic).weights.end());
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    if (v.size() > k) v.resize(k);
    return v;
  }
};

/// Class-based TF-IDF with the BM25+ style idf:
///   tf = count / class tokens, idf = max(0, ln(1 + (A - f + 0.5) / (f + 0.5)))
/// where f is the term's total count and A the mean class size in tokens.
/// `sqrt_tf` applies the optional frequent-word damping to tf.
inline TopicTermTable ctfidf_bm25(const std::vector<std::vector<std::string>>& class_docs, bool sqrt_tf = false) {
  if (class_docs.empty()) throw input_error("c-TF-IDF: no classes");
  std::vector<std::unordered_map<std::string, std::size_t>> counts(class_docs.size());
  std::unordered_map<std::string, std::size_t> total;
  double tokens = 0.0;
  for (std::size_t c = 0; c < class_docs.size(); ++c) {
    if (class_docs[c].empty()) throw input_error("c-TF-IDF: topic " + std::to_string(c) + " has no tokens");
    for (const auto& t : class_docs[c]) {
      ++counts[c][t];
      ++total[t];
    }
    tokens += static_cast<double>(class_docs[c].size());
  }
  const double A = tokens / static_cast<double>(class_docs.size());
  TopicTermTable table;
  table.topics.resize(class_docs.size());
  for (std::size_t c = 0; c < class_docs.size(); ++c) {
    const double size = static_cast<double>(class_docs[c].size());
    table.topics[c].token_count = class_docs[c].size();
    for (const auto& [term, cnt] : counts[c]) {
      const double f = static_cast<double>(total[term]);
      const double idf = std::max(0.0, std::log(1.0 + (A - f + 0.5) / (f + 0.5)));
      double tf = static_cast<double>(cnt) / size;
      if (sqrt_tf) tf = std::sqrt(tf);
      table.topics[c].weights[term] = tf * idf;
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// C_v coherence

inline constexpr double kCoherenceEpsilon = 1e-12;

/// Normalized PMI from window probabilities, in [-1, 1]. Perfectly
/// co-occurring words (joint == both marginals) score 1.
inline double npmi(double p_joint, double p_a, double p_b, double eps = kCoherenceEpsilon) {
  p_a = std::max(p_a, eps);
  p_b = std::max(p_b, eps);
  if (p_joint > 0.0 && p_joint == p_a && p_joint == p_b) return 1.0;
  const double pj = std::max(p_joint, eps);
  const double denom = -std::log(pj);
  if (denom <= 0.0) return 1.0;
  const double v = std::log(pj / (p_a * p_b)) / denom;
  return std::clamp(v, -1.0, 1.0);
}

struct CoherenceResult {
  std::vector<double> per_topic;
  double mean = 0.0;
};

/// C_v: boolean sliding windows over each document, NPMI context vectors over
/// the topic's words, mean cosine of each word vector with the vector sum.
inline CoherenceResult coherence_cv(const std::vector<std::vector<std::string>>& topic_words,
                                    const std::vector<std::vector<std::string>>& docs, std::size_t window = 110) {
  if (docs.empty()) throw input_error("coherence: empty corpus");
  if (window < 1) throw input_error("coherence: window must be >= 1");
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& words : topic_words) {
    if (words.size() < 2) throw input_error("coherence: need at least 2 words per topic");
    for (const auto& w : words) index.emplace(w, index.size());
  }
  const std::size_t V = index.size();
  std::vector<double> single(V, 0.0);
  Matrix joint = Matrix::Zero(static_cast<Eigen::Index>(V), static_cast<Eigen::Index>(V));
  double n_windows = 0.0;

  std::vector<std::size_t> present;
  auto count_window = [&](auto first, auto last) {
    present.clear();
    for (auto it = first; it != last; ++it)
      if (auto f = index.find(*it); f != index.end()) present.push_back(f->second);
    std::sort(present.begin(), present.end());
    present.erase(std::unique(present.begin(), present.end()), present.end());
    for (std::size_t x = 0; x < present.size(); ++x) {
      single[present[x]] += 1.0;
      for (std::size_t y = x + 1; y < present.size(); ++y) {
        joint(present[x], present[y]) += 1.0;
        joint(present[y], present[x]) += 1.0;
      }
    }
    n_windows += 1.0;
  };
  for (const auto& doc : docs) {
    if (doc.size() <= window) {
      count_window(doc.begin(), doc.end());
    } else {
      for (std::size_t s = 0; s + window <= doc.size(); ++s)
        count_window(doc.begin() + static_cast<std::ptrdiff_t>(s), doc.begin() + static_cast<std::ptrdiff_t>(s + window));
    }
  }

  CoherenceResult out;
  for (const auto& words : topic_words) {
    const std::size_t N = words.size();
    Matrix ctx(N, N);
    for (std::size_t i = 0; i < N; ++i) {
      const std::size_t a = index.at(words[i]);
      for (std::size_t j = 0; j < N; ++j) {
        const std::size_t b = index.at(words[j]);
        const double pa = single[a] / n_windows, pb = single[b] / n_windows;
        const double pj = (a == b) ? pa : joint(a, b) / n_windows;
        ctx(i, j) = npmi(pj, pa, pb);
      }
    }
    const Eigen::RowVectorXd sum = ctx.colwise().sum();
    double acc = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double den = ctx.row(i).norm() * sum.norm();
      acc += den > 0.0 ? ctx.row(i).dot(sum) / den : 0.0;
    }
    out.per_topic.push_back(acc / static_cast<double>(N));
  }
  out.mean = out.per_topic.empty() ? 0.0 : mean(out.per_topic);
  return out;
}

// ---------------------------------------------------------------------------
// Participant features

/// Rows = participants (in first-seen order), columns = topics.
struct ParticipantTopicMatrix {
  std::vector<std::string> participant_ids;
  Matrix values;
  bool zscored = false;
};

/// Entry (p, t) = max over participant p's sentences of P(topic t).
inline ParticipantTopicMatrix participant_features(const Matrix& soft, const std::vector<std::string>& owners,
                                                   const std::vector<std::string>& participants) {
  if (static_cast<std::size_t>(soft.rows()) != owners.size())
    throw input_error("participant_features: ownership list does not match sentence count");
  std::unordered_map<std::string, std::size_t> known;
  for (std::size_t i = 0; i < participants.size(); ++i) known.emplace(participants[i], i);
  std::vector<int> row_of(participants.size(), -1);
  ParticipantTopicMatrix out;
  std::vector<Eigen::RowVectorXd> rows;
  for (std::size_t s = 0; s < owners.size(); ++s) {
    auto it = known.find(owners[s]);
    if (it == known.end()) throw input_error("orphan sentence " + std::to_string(s) + " (owner '" + owners[s] + "')");
    int& r = row_of[it->second];
    if (r < 0) {
      r = static_cast<int>(rows.size());
      rows.push_back(Eigen::RowVectorXd::Zero(soft.cols()));
      out.participant_ids.push_back(owners[s]);
    }
    rows[r] = rows[r].cwiseMax(soft.row(static_cast<Eigen::Index>(s)));
  }
  out.values.resize(static_cast<Eigen::Index>(rows.size()), soft.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.values.row(static_cast<Eigen::Index>(r)) = rows[r];
  return out;
}

inline ParticipantTopicMatrix zscored(const ParticipantTopicMatrix& m, ZScaler* scaler_out = nullptr) {
  const auto z = ZScaler::fit(m.values);
  if (scaler_out) *scaler_out = z;
  return {m.participant_ids, z.transform(m.values), true};
}

// ---------------------------------------------------------------------------
// Labeling hook

struct Exemplar {
  std::string sentence_id;
  std::string text;
  double probability;
};

inline constexpr std::size_t kPromptTerms = 15;
inline constexpr std::size_t kPromptExemplars = 3;

/// Picks the sentences with highest probability, ties by sentence id.
inline std::vector<Exemplar> top_exemplars(std::vector<Exemplar> candidates, std::size_t k = kPromptExemplars) {
  std::stable_sort(candidates.begin(), candidates.end(), [](const Exemplar& a, const Exemplar& b) {
    if (a.probability != b.probability) return a.probability > b.probability;
    return a.sentence_id < b.sentence_id;
  });
  if (candidates.size() > k) candidates.resize(k);
  return candidates;
}

inline std::string emit_label_prompt(std::size_t topic_id, const std::vector<std::pair<std::string, double>>& terms,
                                     const std::vector<Exemplar>& exemplars) {
  if (terms.empty()) throw input_error("label prompt: topic " + std::to_string(topic_id) + " has no terms");
  std::ostringstream out;
  out << "Topic " << topic_id << "\n";
  out << "Give a short, human-readable label (2-5 words) for a topic of hallucination descriptions.\n";
  out << "Keywords (most distinctive first):";
  const std::size_t shown = std::min(terms.size(), kPromptTerms);
  for (std::size_t i = 0; i < shown; ++i) out << (i ? ", " : " ") << terms[i].first;
  out << "\nRepresentative sentences:\n";
  auto chosen = top_exemplars(exemplars);
  for (std::size_t i = 0; i < chosen.size(); ++i) out << "  " << (i + 1) << ". " << chosen[i].text << "\n";
  out << "Label:\n";
  return out.str();
}

/// Reads `topic_id<TAB>label` lines; blank lines and '#' comments ignored.
inline std::map<int, std::string> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open labels file: " + path.string());
  std::map<int, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    const auto id = detail::parse_int(std::string_view(line).substr(0, tab));
    if (tab == std::string::npos || !id)
      throw input_error("labels file line " + std::to_string(lineno) + ": expected topic_id<TAB>label");
    out[*id] = line.substr(tab + 1);
  }
  return out;
}

}  // namespace flicker::topics
