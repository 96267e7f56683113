#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "flicker/csv.hpp"
#include "flicker/error.hpp"

namespace flicker {

enum class ExclusionReason { missing_text, non_english_flag, too_few_ls_words, invalid_vividness };

inline std::string_view to_string(ExclusionReason r) {
  switch (r) {
    case ExclusionReason::missing_text: return "missing-text";
    case ExclusionReason::non_english_flag: return "non-english-flag";
    case ExclusionReason::too_few_ls_words: return "too-few-ls-words";
    case ExclusionReason::invalid_vividness: return "invalid-vividness";
  }
  return "unknown";
}

inline constexpr int kMinVividness = 0;
inline constexpr int kMaxVividness = 10;

/// One row of the input corpus. Excluded records keep their row so that
/// exclusion counts can be reported; `vividness` is -1 when it failed to parse.
struct ParticipantRecord {
  std::string id;
  int vividness = -1;
  std::string description;
  std::optional<ExclusionReason> exclusion;

  bool excluded() const { return exclusion.has_value(); }
};

/// Column names in the corpus CSV. `langflag`, when present, marks rows whose
/// description is not English (truthy values: 1, true, yes, y).
struct CorpusSchema {
  std::string id = "id";
  std::string vividness = "vividness";
  std::string text = "description";
  std::optional<std::string> langflag;
};

struct RowError {
  std::size_t row;  // 1-based data row (header excluded)
  std::string message;
};

struct Corpus {
  std::vector<ParticipantRecord> records;
  std::vector<RowError> errors;

  std::size_t included_count() const {
    return static_cast<std::size_t>(std::count_if(records.begin(), records.end(),
                                                  [](const auto& r) { return !r.excluded(); }));
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline bool is_space(unsigned char c) { return std::isspace(c) != 0; }

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool truthy(std::string_view v) {
  const auto s = ascii_lower(trim(v));
  return s == "1" || s == "true" || s == "yes" || s == "y";
}

inline std::optional<int> parse_int(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

/// Reads the participant CSV. Rows with problems are kept and marked excluded;
/// only a missing file or a missing mapped column is fatal.
inline Corpus load_corpus(const std::filesystem::path& path, const CorpusSchema& schema) {
  const auto table = csv::read(path);
  const auto id_col = table.require_column(schema.id);
  const auto viv_col = table.require_column(schema.vividness);
  const auto text_col = table.require_column(schema.text);
  std::optional<std::size_t> lang_col;
  if (schema.langflag) lang_col = table.require_column(*schema.langflag);

  Corpus corpus;
  corpus.records.reserve(table.rows.size());
  std::set<std::string> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    ParticipantRecord rec;
    rec.id = std::string(detail::trim(row[id_col]));
    rec.description = row[text_col];
    if (rec.id.empty() || !seen.insert(rec.id).second)
      throw input_error("row " + std::to_string(r + 1) + ": empty or duplicate participant id '" +
                        rec.id + "'");

    const auto v = detail::parse_int(row[viv_col]);
    if (!v || *v < kMinVividness || *v > kMaxVividness) {
      corpus.errors.push_back({r + 1, "vividness '" + row[viv_col] + "' is not an integer in 0..10"});
      rec.exclusion = ExclusionReason::invalid_vividness;
    } else {
      rec.vividness = *v;
    }
    if (!rec.exclusion && detail::trim(rec.description).empty())
      rec.exclusion = ExclusionReason::missing_text;
    if (!rec.exclusion && lang_col && detail::truthy(row[*lang_col]))
      rec.exclusion = ExclusionReason::non_english_flag;
    corpus.records.push_back(std::move(rec));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Sentence segmentation

struct Sentence {
  std::string participant_id;
  std::size_t index = 0;
  std::string raw;
  std::string cleaned;

  std::string id() const { return sentence_id(participant_id, index); }

  static std::string sentence_id(std::string_view participant, std::size_t index) {
    return std::string(participant) + "#" + std::to_string(index);
  }
};

/// Lowercase and collapse whitespace runs to one space (trimmed).
inline std::string clean_text(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (unsigned char c : raw) {
    if (detail::is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

using AbbreviationSet = std::set<std::string, std::less<>>;

/// Split after runs of . ! ? (plus closing quotes/brackets) when followed by
/// whitespace and then an uppercase letter, a digit, or the end of the text.
/// A single period that closes a listed abbreviation never splits.
inline std::vector<Sentence> segment_sentences(std::string_view text, const AbbreviationSet& abbrevs,
                                               std::string_view participant_id = {}) {
  std::vector<Sentence> out;
  auto emit = [&](std::string_view piece) {
    piece = detail::trim(piece);
    if (piece.empty()) return;
    Sentence s;
    s.participant_id = std::string(participant_id);
    s.index = out.size();
    s.raw = std::string(piece);
    s.cleaned = clean_text(piece);
    out.push_back(std::move(s));
  };

  auto is_term = [](char c) { return c == '.' || c == '!' || c == '?'; };
  auto is_closer = [](char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; };

  std::size_t start = 0;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    if (!is_term(text[i])) {
      ++i;
      continue;
    }
    const std::size_t run_begin = i;
    while (i < n && is_term(text[i])) ++i;
    const std::size_t run_end = i;
    while (i < n && is_closer(text[i])) ++i;
    const std::size_t boundary = i;

    std::size_t j = boundary;
    while (j < n && detail::is_space(static_cast<unsigned char>(text[j]))) ++j;
    const bool at_end = j == n;
    const bool has_space = j > boundary;
    bool split = at_end || (has_space && (std::isupper(static_cast<unsigned char>(text[j])) ||
                                          std::isdigit(static_cast<unsigned char>(text[j]))));
    if (split && !at_end && run_end - run_begin == 1 && text[run_begin] == '.') {
      std::size_t w = run_begin;
      while (w > start && !detail::is_space(static_cast<unsigned char>(text[w - 1]))) --w;
      std::string word = detail::ascii_lower(text.substr(w, run_end - w));
      while (!word.empty() && (word.front() == '(' || word.front() == '"' || word.front() == '\''))
        word.erase(word.begin());
      if (abbrevs.contains(word)) split = false;
    }
    if (split) {
      emit(text.substr(start, boundary - start));
      start = boundary;
    }
  }
  emit(text.substr(start));
  return out;
}

// ---------------------------------------------------------------------------
// Lexical preprocessing for norm matching

inline std::vector<std::string> read_word_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open word list: " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    auto w = detail::trim(line);
    if (w.empty() || w.front() == '#') continue;
    words.push_back(detail::ascii_lower(w));
  }
  return words;
}

inline AbbreviationSet load_abbreviations(const std::filesystem::path& path) {
  auto words = read_word_list(path);
  return AbbreviationSet(words.begin(), words.end());
}

/// Levenshtein distance, or max_dist + 1 once it is known to exceed max_dist.
inline std::size_t bounded_edit_distance(std::string_view a, std::string_view b, std::size_t max_dist) {
  const std::size_t la = a.size(), lb = b.size();
  if ((la > lb ? la - lb : lb - la) > max_dist) return max_dist + 1;
  std::vector<std::size_t> prev(lb + 1), cur(lb + 1);
  for (std::size_t j = 0; j <= lb; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= la; ++i) {
    cur[0] = i;
    std::size_t row_min = cur[0];
    for (std::size_t j = 1; j <= lb; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
      row_min = std::min(row_min, cur[j]);
    }
    if (row_min > max_dist) return max_dist + 1;
    std::swap(prev, cur);
  }
  return std::min(prev[lb], max_dist + 1);
}

/// Stopwords, lemma table and the norm vocabulary used for spell correction.
/// Spell corrections are memoized; the cache is internally synchronized, so a
/// Lexicon may be shared by worker threads.
class Lexicon {
 public:
  static constexpr std::size_t kMaxEditDistance = 2;

  Lexicon() = default;

  static Lexicon load(const std::filesystem::path& data_dir) {
    Lexicon lex;
    for (auto& w : read_word_list(data_dir / "stopwords.txt")) lex.stopwords_.insert(w);
    std::ifstream in(data_dir / "lemmas.tsv");
    if (!in) throw input_error("cannot open lemma table: " + (data_dir / "lemmas.tsv").string());
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line.front() == '#') continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw input_error("lemma table line without TAB: " + line);
      lex.lemmas_[detail::ascii_lower(detail::trim(std::string_view(line).substr(0, tab)))] =
          detail::ascii_lower(detail::trim(std::string_view(line).substr(tab + 1)));
    }
    return lex;
  }

  void add_stopword(std::string w) { stopwords_.insert(std::move(w)); }
  void add_lemma(std::string surface, std::string lemma) { lemmas_[std::move(surface)] = std::move(lemma); }

  /// Vocabulary that spell correction searches (the norm table's words).
  template <class Range>
  void set_vocabulary(const Range& words) {
    vocabulary_.clear();
    by_length_.clear();
    for (const auto& w : words) vocabulary_.insert(std::string(w));
    for (const auto& w : vocabulary_) by_length_[w.size()].push_back(w);
    for (auto& [len, bucket] : by_length_) std::sort(bucket.begin(), bucket.end());
    clear_cache();
  }

  /// Word frequencies used to rank spell-correction candidates.
  void set_frequencies(std::unordered_map<std::string, std::size_t> freq) {
    frequency_ = std::move(freq);
    clear_cache();
  }

  bool is_stopword(std::string_view w) const { return stopwords_.contains(std::string(w)); }
  bool in_vocabulary(std::string_view w) const { return vocabulary_.contains(std::string(w)); }
  bool has_vocabulary() const { return !vocabulary_.empty(); }

  std::size_t frequency(const std::string& w) const {
    auto it = frequency_.find(w);
    return it == frequency_.end() ? 0 : it->second;
  }

  /// Lemma-table lookup, then suffix stripping. With a vocabulary loaded, a
  /// suffix-stripped form is only preferred over the surface form when it is
  /// itself a vocabulary word or the surface form is not.
  std::string lemmatize(const std::string& word) const {
    if (auto it = lemmas_.find(word); it != lemmas_.end()) return it->second;
    std::string stem = strip_suffix(word);
    if (stem == word || !has_vocabulary()) return stem;
    if (in_vocabulary(stem)) return stem;
    if (in_vocabulary(stem + "e") && !in_vocabulary(word)) return stem + "e";
    if (in_vocabulary(word)) return word;
    return stem;
  }

  /// Closest vocabulary word within edit distance 2 by highest frequency,
  /// ties broken lexicographically. Vocabulary words and unmatched tokens
  /// pass through unchanged.
  std::string spell_correct(const std::string& word) const {
    if (!has_vocabulary() || in_vocabulary(word)) return word;
    {
      std::lock_guard lock(cache_->mutex);
      if (auto it = cache_->corrections.find(word); it != cache_->corrections.end()) return it->second;
    }
    std::string best;
    std::size_t best_freq = 0;
    bool found = false;
    const std::size_t lo = word.size() > kMaxEditDistance ? word.size() - kMaxEditDistance : 0;
    for (std::size_t len = lo; len <= word.size() + kMaxEditDistance; ++len) {
      auto bucket = by_length_.find(len);
      if (bucket == by_length_.end()) continue;
      for (const auto& cand : bucket->second) {
        if (bounded_edit_distance(word, cand, kMaxEditDistance) > kMaxEditDistance) continue;
        const std::size_t f = frequency(cand);
        if (!found || f > best_freq || (f == best_freq && cand < best)) {
          best = cand;
          best_freq = f;
          found = true;
        }
      }
    }
    std::string result = found ? best : word;
    std::lock_guard lock(cache_->mutex);
    cache_->corrections.emplace(word, result);
    return result;
  }

  static std::string strip_suffix(const std::string& w) {
    auto ends = [&](std::string_view suf) { return w.size() > suf.size() && std::string_view(w).ends_with(suf); };
    const std::size_t n = w.size();
    if (n <= 3) return w;
    if (ends("ies") && n > 4) return w.substr(0, n - 3) + "y";
    if (ends("sses")) return w.substr(0, n - 2);
    if (ends("ches") || ends("shes") || ends("xes") || ends("zes")) return w.substr(0, n - 2);
    if (ends("s") && !ends("ss") && !ends("us") && !ends("is")) return w.substr(0, n - 1);
    if (ends("ied") && n > 4) return w.substr(0, n - 3) + "y";
    if (ends("ing") && n - 3 >= 3) return undouble(w.substr(0, n - 3));
    if (ends("ed") && n - 2 >= 3) return undouble(w.substr(0, n - 2));
    return w;
  }

 private:
  static bool is_vowel(char c) { return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u'; }

  static std::string undouble(std::string stem) {
    const std::size_t n = stem.size();
    if (n >= 3 && stem[n - 1] == stem[n - 2] && !is_vowel(stem[n - 1]) && stem[n - 1] != 'l' &&
        stem[n - 1] != 's' && stem[n - 1] != 'z' && std::isalpha(static_cast<unsigned char>(stem[n - 1])))
      stem.pop_back();
    return stem;
  }

  void clear_cache() { cache_ = std::make_shared<Cache>(); }

  struct Cache {
    std::mutex mutex;
    std::unordered_map<std::string, std::string> corrections;
  };

  std::unordered_set<std::string> stopwords_;
  std::unordered_map<std::string, std::string> lemmas_;
  std::unordered_set<std::string> vocabulary_;
  std::map<std::size_t, std::vector<std::string>> by_length_;
  std::unordered_map<std::string, std::size_t> frequency_;
  std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

/// Lemmatized, spell-corrected, stopword-free tokens of one description.
/// `surface[i]` is the lowercase form `tokens[i]` was derived from.
struct TokenizedDoc {
  std::string participant_id;
  std::vector<std::string> tokens;
  std::vector<std::string> surface;

  std::size_t length() const { return tokens.size(); }
};

/// Maximal runs of ASCII letters/digits; bytes >= 0x80 count as letters so
/// UTF-8 words stay whole.
inline std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// Tokens after tokenize, lowercase, stopword removal and lemmatization, i.e.
/// the forms spell correction sees. Used to build correction frequencies.
inline std::vector<std::string> lemmatized_tokens(std::string_view text, const Lexicon& lex) {
  std::vector<std::string> out;
  for (auto& tok : tokenize_words(text)) {
    auto lower = detail::ascii_lower(tok);
    if (lex.is_stopword(lower)) continue;
    out.push_back(lex.lemmatize(lower));
  }
  return out;
}

inline TokenizedDoc preprocess_ls(std::string_view text, const Lexicon& lex, std::string_view participant_id = {}) {
  TokenizedDoc doc;
  doc.participant_id = std::string(participant_id);
  for (auto& tok : tokenize_words(text)) {
    auto lower = detail::ascii_lower(tok);
    if (lex.is_stopword(lower)) continue;
    doc.tokens.push_back(lex.spell_correct(lex.lemmatize(lower)));
    doc.surface.push_back(std::move(lower));
  }
  return doc;
}

/// Token frequencies over a set of texts, as consumed by Lexicon::set_frequencies.
template <class Texts>
std::unordered_map<std::string, std::size_t> token_frequencies(const Texts& texts, const Lexicon& lex) {
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& t : texts)
    for (auto& tok : lemmatized_tokens(t, lex)) ++freq[tok];
  return freq;
}

}  // namespace flicker
