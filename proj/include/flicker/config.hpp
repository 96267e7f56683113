#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "flicker/corpus.hpp"
#include "flicker/error.hpp"

namespace flicker {

#ifndef FLICKER_DATA_DIR
#define FLICKER_DATA_DIR "data"
#endif

/// Every tunable of a run. Defaults follow the published analysis where it
/// states a value.
struct RunConfig {
  struct Paths {
    std::string corpus;
    std::string norms;
    std::string embeddings_dir = "embeddings";
    std::string sentence_embeddings;  // empty: <embeddings_dir>/sentences.embx
    std::string features;             // empty: <out>/topics/topic_features.csv
    std::string labels;
    std::string out = "out";
    std::string data_dir = FLICKER_DATA_DIR;
  } paths;

  struct Corpus {
    std::string col_id = "id";
    std::string col_vividness = "vividness";
    std::string col_text = "description";
    std::string col_langflag;
  } corpus;

  struct Reducer {
    std::int64_t n_components = 10;
    std::int64_t n_neighbors = 15;
    double min_dist = 0.1;
    double spread = 1.0;
    std::int64_t n_epochs = 500;
    std::int64_t negative_sample_rate = 5;
  } reducer;

  struct Clusterer {
    std::int64_t min_cluster_size = 30;
    std::int64_t min_samples = 0;
    bool allow_single_cluster = false;
    double soft_temperature = 1.0;
  } clusterer;

  struct Topics {
    std::int64_t top_n_words = 10;
    std::int64_t coherence_window = 110;
    bool sqrt_tf = false;
    bool remove_stopwords = true;
  } topics;

  struct Predict {
    std::int64_t n_alphas = 100;
    double alpha_min = 0.001;
    double alpha_max = 10.0;
    std::int64_t n_cs = 30;
    double c_min = 0.01;
    double c_max = 100.0;
    std::int64_t folds = 10;
    double test_fraction = 0.2;
    std::int64_t bootstrap = 1000;
    double stability_threshold = 0.6;
    std::int64_t permutations = 1000;
  } predict;

  struct Rsa {
    std::vector<std::string> models;
    std::int64_t shuffles = 200;
    bool full_matrix = false;  // flatten all 121 entries instead of the strict upper triangle
  } rsa;

  struct Sensorimotor {
    std::int64_t min_matched = 3;
    bool use_file_composites = false;
    std::int64_t mediation_sims = 5000;
    bool mediation_covariates = false;
  } sensorimotor;

  struct Run {
    std::uint64_t seed = 42;
    std::int64_t threads = 0;  // 0: hardware concurrency
  } run;

  std::filesystem::path out_dir(std::string_view stage) const { return std::filesystem::path(paths.out) / stage; }

  std::filesystem::path sentence_embeddings_path() const {
    if (!paths.sentence_embeddings.empty()) return paths.sentence_embeddings;
    return std::filesystem::path(paths.embeddings_dir) / "sentences.embx";
  }

  std::filesystem::path features_path() const {
    if (!paths.features.empty()) return paths.features;
    return out_dir("topics") / "topic_features.csv";
  }

  CorpusSchema schema() const {
    CorpusSchema s;
    s.id = corpus.col_id;
    s.vividness = corpus.col_vividness;
    s.text = corpus.col_text;
    if (!corpus.col_langflag.empty()) s.langflag = corpus.col_langflag;
    return s;
  }
};

namespace config_detail {

using Value = std::variant<std::string, double, std::int64_t, bool, std::vector<std::string>>;

inline std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

inline std::string render(const Value& v) {
  struct {
    std::string operator()(const std::string& s) const { return quote(s); }
    std::string operator()(double d) const {
      std::ostringstream o;
      o.precision(17);
      o << d;
      auto s = o.str();
      if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
      return s;
    }
    std::string operator()(std::int64_t i) const { return std::to_string(i); }
    std::string operator()(bool b) const { return b ? "true" : "false"; }
    std::string operator()(const std::vector<std::string>& l) const {
      std::string s = "[";
      for (std::size_t i = 0; i < l.size(); ++i) s += (i ? ", " : "") + quote(l[i]);
      return s + "]";
    }
  } visitor;
  return std::visit(visitor, v);
}

class Parser {
 public:
  Parser(std::string_view text, std::string origin) : s_(text), origin_(std::move(origin)) {}

  std::map<std::string, std::pair<Value, std::size_t>> parse() {
    std::map<std::string, std::pair<Value, std::size_t>> out;
    std::string section;
    while (pos_ < s_.size()) {
      skip_blank();
      if (pos_ >= s_.size()) break;
      if (s_[pos_] == '\n') {
        ++pos_;
        ++line_;
        continue;
      }
      if (s_[pos_] == '#') {
        skip_to_eol();
        continue;
      }
      if (s_[pos_] == '[') {
        ++pos_;
        const auto close = s_.find(']', pos_);
        if (close == std::string_view::npos) fail("unterminated section header");
        section = std::string(detail::trim(s_.substr(pos_, close - pos_)));
        if (section.empty()) fail("empty section name");
        pos_ = close + 1;
        end_of_line();
        continue;
      }
      const auto eq = s_.find('=', pos_);
      const auto nl = s_.find('\n', pos_);
      if (eq == std::string_view::npos || (nl != std::string_view::npos && eq > nl)) fail("expected key = value");
      const std::string key(detail::trim(s_.substr(pos_, eq - pos_)));
      if (key.empty()) fail("empty key");
      pos_ = eq + 1;
      skip_blank();
      const std::size_t at = line_;
      Value v = value();
      end_of_line();
      const std::string full = section.empty() ? key : section + "." + key;
      if (!out.emplace(full, std::make_pair(std::move(v), at)).second) fail("duplicate key '" + full + "'", at);
    }
    return out;
  }

 private:
  [[noreturn]] void fail(const std::string& what, std::size_t line = 0) const {
    throw input_error(origin_ + ":" + std::to_string(line ? line : line_) + ": " + what);
  }
  void skip_blank() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\r')) ++pos_;
  }
  void skip_to_eol() {
    while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
  }
  void end_of_line() {
    skip_blank();
    if (pos_ < s_.size() && s_[pos_] == '#') skip_to_eol();
    if (pos_ < s_.size() && s_[pos_] != '\n') fail("unexpected text after value");
  }

  std::string string_lit() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      if (s_[pos_] == '\n') fail("unterminated string");
      if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) {
        const char e = s_[++pos_];
        out += e == 'n' ? '\n' : e == 't' ? '\t' : e;
      } else {
        out += s_[pos_];
      }
      ++pos_;
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  Value value() {
    if (pos_ >= s_.size() || s_[pos_] == '\n') fail("missing value");
    if (s_[pos_] == '"') return string_lit();
    if (s_[pos_] == '[') {
      ++pos_;
      std::vector<std::string> items;
      for (;;) {
        skip_blank();
        if (pos_ < s_.size() && s_[pos_] == ']') {
          ++pos_;
          return items;
        }
        if (pos_ >= s_.size() || s_[pos_] != '"') fail("lists may only hold quoted strings");
        items.push_back(string_lit());
        skip_blank();
        if (pos_ < s_.size() && s_[pos_] == ',') ++pos_;
      }
    }
    std::size_t end = pos_;
    while (end < s_.size() && s_[end] != '\n' && s_[end] != '#') ++end;
    const std::string tok(detail::trim(s_.substr(pos_, end - pos_)));
    pos_ = end;
    if (tok == "true") return true;
    if (tok == "false") return false;
    if (auto i = detail::parse_int(tok)) return static_cast<std::int64_t>(*i);
    char* stop = nullptr;
    const double d = std::strtod(tok.c_str(), &stop);
    if (tok.empty() || stop != tok.c_str() + tok.size()) fail("cannot parse value '" + tok + "'");
    return d;
  }

  std::string_view s_;
  std::string origin_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

struct Binding {
  std::string key;
  std::function<Value(const RunConfig&)> get;
  std::function<void(RunConfig&, const Value&, const std::string&)> set;
};

template <class T>
T as(const Value& v, const std::string& key);

template <>
inline std::string as<std::string>(const Value& v, const std::string& key) {
  if (auto* s = std::get_if<std::string>(&v)) return *s;
  throw input_error("config key '" + key + "' expects a string");
}
template <>
inline double as<double>(const Value& v, const std::string& key) {
  if (auto* d = std::get_if<double>(&v)) return *d;
  if (auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  throw input_error("config key '" + key + "' expects a number");
}
template <>
inline std::int64_t as<std::int64_t>(const Value& v, const std::string& key) {
  if (auto* i = std::get_if<std::int64_t>(&v)) return *i;
  throw input_error("config key '" + key + "' expects an integer");
}
template <>
inline bool as<bool>(const Value& v, const std::string& key) {
  if (auto* b = std::get_if<bool>(&v)) return *b;
  throw input_error("config key '" + key + "' expects true or false");
}
template <>
inline std::vector<std::string> as<std::vector<std::string>>(const Value& v, const std::string& key) {
  if (auto* l = std::get_if<std::vector<std::string>>(&v)) return *l;
  throw input_error("config key '" + key + "' expects a list of strings");
}

#define FLICKER_BIND(SECTION, FIELD, TYPE)                                                        \
  Binding {                                                                                       \
    #SECTION "." #FIELD, [](const RunConfig& c) { return Value(TYPE(c.SECTION.FIELD)); },         \
        [](RunConfig& c, const Value& v, const std::string& k) { c.SECTION.FIELD = as<TYPE>(v, k); } \
  }

inline const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table{
      FLICKER_BIND(paths, corpus, std::string),
      FLICKER_BIND(paths, norms, std::string),
      FLICKER_BIND(paths, embeddings_dir, std::string),
      FLICKER_BIND(paths, sentence_embeddings, std::string),
      FLICKER_BIND(paths, features, std::string),
      FLICKER_BIND(paths, labels, std::string),
      FLICKER_BIND(paths, out, std::string),
      FLICKER_BIND(paths, data_dir, std::string),
      FLICKER_BIND(corpus, col_id, std::string),
      FLICKER_BIND(corpus, col_vividness, std::string),
      FLICKER_BIND(corpus, col_text, std::string),
      FLICKER_BIND(corpus, col_langflag, std::string),
      FLICKER_BIND(reducer, n_components, std::int64_t),
      FLICKER_BIND(reducer, n_neighbors, std::int64_t),
      FLICKER_BIND(reducer, min_dist, double),
      FLICKER_BIND(reducer, spread, double),
      FLICKER_BIND(reducer, n_epochs, std::int64_t),
      FLICKER_BIND(reducer, negative_sample_rate, std::int64_t),
      FLICKER_BIND(clusterer, min_cluster_size, std::int64_t),
      FLICKER_BIND(clusterer, min_samples, std::int64_t),
      FLICKER_BIND(clusterer, allow_single_cluster, bool),
      FLICKER_BIND(clusterer, soft_temperature, double),
      FLICKER_BIND(topics, top_n_words, std::int64_t),
      FLICKER_BIND(topics, coherence_window, std::int64_t),
      FLICKER_BIND(topics, sqrt_tf, bool),
      FLICKER_BIND(topics, remove_stopwords, bool),
      FLICKER_BIND(predict, n_alphas, std::int64_t),
      FLICKER_BIND(predict, alpha_min, double),
      FLICKER_BIND(predict, alpha_max, double),
      FLICKER_BIND(predict, n_cs, std::int64_t),
      FLICKER_BIND(predict, c_min, double),
      FLICKER_BIND(predict, c_max, double),
      FLICKER_BIND(predict, folds, std::int64_t),
      FLICKER_BIND(predict, test_fraction, double),
      FLICKER_BIND(predict, bootstrap, std::int64_t),
      FLICKER_BIND(predict, stability_threshold, double),
      FLICKER_BIND(predict, permutations, std::int64_t),
      FLICKER_BIND(rsa, models, std::vector<std::string>),
      FLICKER_BIND(rsa, shuffles, std::int64_t),
      FLICKER_BIND(rsa, full_matrix, bool),
      FLICKER_BIND(sensorimotor, min_matched, std::int64_t),
      FLICKER_BIND(sensorimotor, use_file_composites, bool),
      FLICKER_BIND(sensorimotor, mediation_sims, std::int64_t),
      FLICKER_BIND(sensorimotor, mediation_covariates, bool),
      Binding{"run.seed", [](const RunConfig& c) { return Value(static_cast<std::int64_t>(c.run.seed)); },
              [](RunConfig& c, const Value& v, const std::string& k) {
                const auto s = as<std::int64_t>(v, k);
                if (s < 0) throw input_error("config key 'run.seed' must be non-negative");
                c.run.seed = static_cast<std::uint64_t>(s);
              }},
      FLICKER_BIND(run, threads, std::int64_t),
  };
  return table;
}

#undef FLICKER_BIND

}  // namespace config_detail

/// Checks ranges that the modules would otherwise reject late, mid-run.
inline void validate(const RunConfig& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw input_error("config: " + what);
  };
  require(c.reducer.n_components >= 1, "reducer.n_components must be >= 1");
  require(c.reducer.n_neighbors >= 2, "reducer.n_neighbors must be >= 2");
  require(c.reducer.min_dist > 0.0 && c.reducer.min_dist <= c.reducer.spread, "require 0 < reducer.min_dist <= reducer.spread");
  require(c.reducer.n_epochs >= 1, "reducer.n_epochs must be >= 1");
  require(c.reducer.negative_sample_rate >= 0, "reducer.negative_sample_rate must be >= 0");
  require(c.clusterer.min_cluster_size >= 2, "clusterer.min_cluster_size must be >= 2");
  require(c.clusterer.min_samples >= 0, "clusterer.min_samples must be >= 0");
  require(c.clusterer.soft_temperature > 0.0, "clusterer.soft_temperature must be positive");
  require(c.topics.top_n_words >= 2, "topics.top_n_words must be >= 2");
  require(c.topics.coherence_window >= 1, "topics.coherence_window must be >= 1");
  require(c.predict.n_alphas >= 1 && c.predict.n_cs >= 1, "predict grids need at least one value");
  require(c.predict.alpha_min > 0.0 && c.predict.alpha_min <= c.predict.alpha_max, "predict alpha range invalid");
  require(c.predict.c_min > 0.0 && c.predict.c_min <= c.predict.c_max, "predict C range invalid");
  require(c.predict.folds >= 2, "predict.folds must be >= 2");
  require(c.predict.test_fraction > 0.0 && c.predict.test_fraction < 1.0, "predict.test_fraction must be in (0, 1)");
  require(c.predict.bootstrap >= 1 && c.predict.permutations >= 1, "predict resampling counts must be >= 1");
  require(c.predict.stability_threshold >= 0.0 && c.predict.stability_threshold <= 1.0,
          "predict.stability_threshold must be in [0, 1]");
  require(c.rsa.shuffles >= 0, "rsa.shuffles must be >= 0");
  require(c.sensorimotor.min_matched >= 1, "sensorimotor.min_matched must be >= 1");
  require(c.sensorimotor.mediation_sims >= 1, "sensorimotor.mediation_sims must be >= 1");
  require(c.run.threads >= 0, "run.threads must be >= 0");
}

/// Applies `text` on top of `base`. Unknown sections or keys are errors.
inline RunConfig parse_config(std::string_view text, const std::string& origin = "config", RunConfig base = {}) {
  auto values = config_detail::Parser(text, origin).parse();
  for (const auto& [key, entry] : values) {
    const auto& table = config_detail::bindings();
    auto it = std::find_if(table.begin(), table.end(), [&](const auto& b) { return b.key == key; });
    if (it == table.end()) throw input_error(origin + ":" + std::to_string(entry.second) + ": unknown key '" + key + "'");
    it->set(base, entry.first, key);
  }
  return base;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open config file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

/// Resolved configuration in the same format the parser reads.
inline std::string config_snapshot(const RunConfig& c) {
  std::ostringstream out;
  std::string section;
  for (const auto& b : config_detail::bindings()) {
    const auto dot = b.key.find('.');
    const auto sec = b.key.substr(0, dot);
    if (sec != section) {
      out << (section.empty() ? "" : "\n") << "[" << sec << "]\n";
      section = sec;
    }
    out << b.key.substr(dot + 1) << " = " << config_detail::render(b.get(c)) << "\n";
  }
  return out.str();
}

}  // namespace flicker
