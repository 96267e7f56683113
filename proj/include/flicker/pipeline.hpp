#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "flicker/clusterer.hpp"
#include "flicker/config.hpp"
#include "flicker/corpus.hpp"
#include "flicker/csv.hpp"
#include "flicker/embedding_io.hpp"
#include "flicker/error.hpp"
#include "flicker/inference.hpp"
#include "flicker/manifest.hpp"
#include "flicker/parallel.hpp"
#include "flicker/random.hpp"
#include "flicker/reducer.hpp"
#include "flicker/rsa.hpp"
#include "flicker/sensorimotor.hpp"
#include "flicker/sparse_models.hpp"
#include "flicker/stats.hpp"
#include "flicker/svg.hpp"
#include "flicker/topics.hpp"

namespace flicker::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// Seed streams, one per stochastic stage.
inline constexpr std::uint64_t kSeedReducer = 1;
inline constexpr std::uint64_t kSeedLasso = 2;
inline constexpr std::uint64_t kSeedLogistic = 3;
inline constexpr std::uint64_t kSeedStability = 4;
inline constexpr std::uint64_t kSeedPermutation = 5;
inline constexpr std::uint64_t kSeedShuffle = 6;
inline constexpr std::uint64_t kSeedMediation = 7;

/// Runs `fn`, prefixing any error with the stage name.
template <class Fn>
auto stage(std::string_view name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), "stage " + std::string(name) + ": " + e.what());
  } catch (const std::exception& e) {
    throw internal_error("stage " + std::string(name) + ": " + e.what());
  }
}

inline json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot write " + path.string());
  out << text;
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw input_error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

/// Output directory of one command plus bookkeeping for its manifest.
class Run {
 public:
  Run(const RunConfig& cfg, std::string command) : cfg_(cfg), command_(std::move(command)), dir_(cfg.out_dir(command_)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw input_error("cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  const fs::path& dir() const { return dir_; }
  fs::path file(const std::string& name) {
    outputs_.push_back(name);
    return dir_ / name;
  }

  void input(const std::string& label, const fs::path& path) {
    if (!fs::exists(path)) throw input_error(label + " not found: " + path.string());
    inputs_[label] = {path.string(), git_blob_hash(path)};
  }

  /// Resolved config and input hashes; no timestamps, so reruns are byte-identical.
  void finish(json summary) {
    write_text(dir_ / "resolved_config.toml", config_snapshot(cfg_));
    summary["command"] = command_;
    summary["seed"] = cfg_.run.seed;
    write_json(dir_ / "summary.json", summary);
    json m;
    m["command"] = command_;
    m["seed"] = cfg_.run.seed;
    m["config"] = "resolved_config.toml";
    json in = json::object();
    for (const auto& [label, entry] : inputs_) in[label] = {{"path", entry.first}, {"git_blob_sha1", entry.second}};
    m["inputs"] = in;
    std::sort(outputs_.begin(), outputs_.end());
    outputs_.erase(std::unique(outputs_.begin(), outputs_.end()), outputs_.end());
    m["outputs"] = outputs_;
    write_json(dir_ / "manifest.json", m);
  }

 private:
  const RunConfig& cfg_;
  std::string command_;
  fs::path dir_;
  std::map<std::string, std::pair<std::string, std::string>> inputs_;
  std::vector<std::string> outputs_;
};

inline Corpus load_inputs_corpus(const RunConfig& cfg, Run& run) {
  return stage("corpus", [&] {
    if (cfg.paths.corpus.empty()) throw input_error("paths.corpus is not set");
    run.input("corpus", cfg.paths.corpus);
    return load_corpus(cfg.paths.corpus, cfg.schema());
  });
}

inline std::vector<Sentence> segment_all(const Corpus& corpus, const RunConfig& cfg) {
  return stage("segment", [&] {
    const auto abbrevs = load_abbreviations(fs::path(cfg.paths.data_dir) / "abbrev.txt");
    std::vector<Sentence> all;
    for (const auto& r : corpus.records) {
      if (r.excluded()) continue;
      for (auto& s : segment_sentences(r.description, abbrevs, r.id)) all.push_back(std::move(s));
    }
    return all;
  });
}

inline std::string safe_name(std::string s) {
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' || c == '+')) c = '_';
  return s;
}

// ---------------------------------------------------------------------------
// ingest

inline json cmd_ingest(const RunConfig& cfg) {
  Run run(cfg, "ingest");
  const auto corpus = load_inputs_corpus(cfg, run);
  const auto sentences = segment_all(corpus, cfg);

  csv::Writer parts(run.file("participants.csv"));
  parts.row({"participant_id", "vividness", "excluded", "reason"});
  std::map<std::string, std::size_t> reasons;
  for (const auto& r : corpus.records) {
    const std::string reason = r.excluded() ? std::string(to_string(*r.exclusion)) : "";
    if (r.excluded()) ++reasons[reason];
    parts.row({r.id, r.vividness >= 0 ? std::to_string(r.vividness) : "", r.excluded() ? "1" : "0", reason});
  }
  csv::Writer errs(run.file("row_errors.csv"));
  errs.row({"row", "message"});
  for (const auto& e : corpus.errors) errs.row({std::to_string(e.row), e.message});
  csv::Writer sent(run.file("sentences.csv"));
  sent.row({"sentence_id", "participant_id", "index", "raw", "cleaned"});
  for (const auto& s : sentences) sent.row({s.id(), s.participant_id, std::to_string(s.index), s.raw, s.cleaned});

  json summary;
  summary["records"] = corpus.records.size();
  summary["included"] = corpus.included_count();
  summary["excluded_by_reason"] = reasons;
  summary["row_errors"] = corpus.errors.size();
  summary["sentences"] = sentences.size();
  run.finish(summary);
  return summary;
}

// ---------------------------------------------------------------------------
// topics

inline std::vector<std::string> topic_terms(const std::string& cleaned, const Lexicon* stop) {
  auto terms = topics::term_tokens(cleaned);
  if (stop) std::erase_if(terms, [&](const std::string& t) { return stop->is_stopword(t); });
  return terms;
}

inline json cmd_topics(const RunConfig& cfg) {
  Run run(cfg, "topics");
  const auto corpus = load_inputs_corpus(cfg, run);
  const auto sentences = segment_all(corpus, cfg);
  if (sentences.empty()) throw input_error("stage segment: corpus has no included sentences");

  const fs::path embx = cfg.sentence_embeddings_path();
  if (!fs::exists(embx)) throw input_error("stage embeddings: sentence embeddings not found: " + embx.string());
  run.input("sentence_embeddings", embx);
  const auto ordered = stage("embeddings", [&] {
    const auto m = read_embeddings(embx);
    const auto index = m.index();
    EmbeddingMatrix out;
    out.model_tag = m.model_tag;
    out.dim = m.dim;
    out.normalized = m.normalized;
    std::size_t missing = 0;
    std::string first_missing;
    for (const auto& s : sentences) {
      auto it = index.find(s.id());
      if (it == index.end()) {
        if (!missing++) first_missing = s.id();
        continue;
      }
      out.ids.push_back(s.id());
      const auto r = m.row(it->second);
      out.values.insert(out.values.end(), r.begin(), r.end());
    }
    if (missing)
      throw input_error(embx.string() + " has no row for sentence '" + first_missing + "' (" + std::to_string(missing) +
                        " sentences missing)");
    return out;
  });

  reducer::ReducerParams rp;
  rp.n_components = static_cast<int>(cfg.reducer.n_components);
  rp.n_neighbors = static_cast<int>(cfg.reducer.n_neighbors);
  rp.min_dist = cfg.reducer.min_dist;
  rp.spread = cfg.reducer.spread;
  rp.n_epochs = static_cast<int>(cfg.reducer.n_epochs);
  rp.negative_sample_rate = static_cast<int>(cfg.reducer.negative_sample_rate);
  rp.seed = derive_seed(cfg.run.seed, kSeedReducer);
  const Matrix reduced = stage("reducer", [&] { return reducer::reduce(ordered, rp); });
  stage("reducer", [&] {
    write_embeddings(run.file("reduced.embx"),
                     EmbeddingMatrix::from_matrix(reduced, ordered.ids, ordered.model_tag + "+umap", false));
    run.file("reduced.ids");
    return 0;
  });

  clusterer::HdbscanParams hp;
  hp.min_cluster_size = static_cast<std::size_t>(cfg.clusterer.min_cluster_size);
  hp.min_samples = static_cast<std::size_t>(cfg.clusterer.min_samples);
  hp.allow_single_cluster = cfg.clusterer.allow_single_cluster;
  const auto assign = stage("clusterer", [&] {
    auto a = clusterer::hdbscan(reduced, hp);
    if (a.n_clusters == 0) throw input_error("no clusters found (every sentence is an outlier)");
    return a;
  });
  const int T = static_cast<int>(assign.n_clusters);
  const Matrix soft = stage("clusterer", [&] {
    return clusterer::soft_topic_matrix(reduced, clusterer::topic_centroids(reduced, assign.labels, T),
                                        cfg.clusterer.soft_temperature);
  });

  std::optional<Lexicon> stop;
  if (cfg.topics.remove_stopwords) stop = stage("topics", [&] { return Lexicon::load(cfg.paths.data_dir); });
  std::vector<std::vector<std::string>> sentence_terms(sentences.size());
  for (std::size_t s = 0; s < sentences.size(); ++s)
    sentence_terms[s] = topic_terms(sentences[s].cleaned, stop ? &*stop : nullptr);

  const auto table = stage("ctfidf", [&] {
    std::vector<std::vector<std::string>> class_docs(static_cast<std::size_t>(T));
    for (std::size_t s = 0; s < sentences.size(); ++s)
      if (assign.labels[s] >= 0)
        class_docs[static_cast<std::size_t>(assign.labels[s])].insert(
            class_docs[static_cast<std::size_t>(assign.labels[s])].end(), sentence_terms[s].begin(), sentence_terms[s].end());
    return topics::ctfidf_bm25(class_docs, cfg.topics.sqrt_tf);
  });

  std::vector<std::optional<double>> coherence(static_cast<std::size_t>(T));
  const double mean_cv = stage("coherence", [&] {
    std::vector<std::vector<std::string>> words;
    std::vector<std::size_t> which;
    for (int t = 0; t < T; ++t) {
      std::vector<std::string> w;
      for (const auto& [term, weight] : table.top_terms(static_cast<std::size_t>(t), static_cast<std::size_t>(cfg.topics.top_n_words)))
        w.push_back(term);
      if (w.size() >= 2) {
        words.push_back(std::move(w));
        which.push_back(static_cast<std::size_t>(t));
      }
    }
    if (words.empty()) return std::numeric_limits<double>::quiet_NaN();
    const auto cv = topics::coherence_cv(words, sentence_terms, static_cast<std::size_t>(cfg.topics.coherence_window));
    for (std::size_t k = 0; k < which.size(); ++k) coherence[which[k]] = cv.per_topic[k];
    return cv.mean;
  });

  std::vector<std::string> owners, participants;
  std::unordered_map<std::string, int> vividness;
  for (const auto& r : corpus.records)
    if (!r.excluded()) {
      participants.push_back(r.id);
      vividness[r.id] = r.vividness;
    }
  for (const auto& s : sentences) owners.push_back(s.participant_id);
  const auto features = stage("features", [&] { return topics::participant_features(soft, owners, participants); });

  std::map<int, std::string> labels;
  if (!cfg.paths.labels.empty()) {
    run.input("labels", cfg.paths.labels);
    labels = stage("labels", [&] { return topics::read_labels(cfg.paths.labels); });
  }

  {
    csv::Writer w(run.file("assignments.csv"));
    std::vector<std::string> head{"sentence_id", "label", "probability"};
    for (int t = 0; t < T; ++t) head.push_back("soft_" + std::to_string(t));
    w.row(head);
    for (std::size_t s = 0; s < sentences.size(); ++s) {
      std::vector<std::string> row{sentences[s].id(), std::to_string(assign.labels[s]), csv::num(assign.probabilities[s])};
      for (int t = 0; t < T; ++t) row.push_back(csv::num(soft(static_cast<Eigen::Index>(s), t)));
      w.row(row);
    }
  }
  {
    csv::Writer w(run.file("topic_features.csv"));
    std::vector<std::string> head{"participant_id", "vividness"};
    for (int t = 0; t < T; ++t) head.push_back("topic_" + std::to_string(t));
    w.row(head);
    for (std::size_t p = 0; p < features.participant_ids.size(); ++p) {
      const auto& id = features.participant_ids[p];
      std::vector<std::string> row{id, std::to_string(vividness.at(id))};
      for (int t = 0; t < T; ++t) row.push_back(csv::num(features.values(static_cast<Eigen::Index>(p), t)));
      w.row(row);
    }
  }
  {
    std::string prompts;
    for (int t = 0; t < T; ++t) {
      std::vector<topics::Exemplar> cand;
      cand.reserve(sentences.size());
      for (std::size_t s = 0; s < sentences.size(); ++s)
        cand.push_back({sentences[s].id(), sentences[s].raw, soft(static_cast<Eigen::Index>(s), t)});
      const auto terms = table.top_terms(static_cast<std::size_t>(t), topics::kPromptTerms);
      prompts += stage("labels", [&] { return topics::emit_label_prompt(static_cast<std::size_t>(t), terms, cand); });
      prompts += "\n";
    }
    write_text(run.file("label_prompts.txt"), prompts);
  }

  std::vector<std::size_t> sizes(static_cast<std::size_t>(T), 0);
  std::size_t outliers = 0;
  for (int l : assign.labels) l < 0 ? ++outliers : ++sizes[static_cast<std::size_t>(l)];
  json report;
  report["n_sentences"] = sentences.size();
  report["n_participants"] = features.participant_ids.size();
  report["n_topics"] = T;
  report["n_outliers"] = outliers;
  report["embedding_model"] = ordered.model_tag;
  report["mean_coherence_cv"] = jnum(mean_cv);
  json tlist = json::array();
  for (int t = 0; t < T; ++t) {
    json tj;
    tj["topic"] = t;
    tj["label"] = labels.count(t) ? json(labels.at(t)) : json(nullptr);
    tj["size"] = sizes[static_cast<std::size_t>(t)];
    tj["token_count"] = table.topics[static_cast<std::size_t>(t)].token_count;
    tj["coherence_cv"] = coherence[static_cast<std::size_t>(t)] ? jnum(*coherence[static_cast<std::size_t>(t)]) : json(nullptr);
    json terms = json::array();
    for (const auto& [term, weight] : table.top_terms(static_cast<std::size_t>(t), topics::kPromptTerms))
      terms.push_back({{"term", term}, {"weight", weight}});
    tj["terms"] = terms;
    tlist.push_back(tj);
  }
  report["topics"] = tlist;
  write_json(run.file("topic_report.json"), report);

  json summary;
  summary["n_sentences"] = sentences.size();
  summary["n_topics"] = T;
  summary["n_outliers"] = outliers;
  summary["mean_coherence_cv"] = jnum(mean_cv);
  run.finish(summary);
  return summary;
}

// ---------------------------------------------------------------------------
// predict

struct FeatureTable {
  std::vector<std::string> ids;
  std::vector<std::string> names;
  std::vector<int> vividness;
  Matrix X;
};

inline FeatureTable read_features(const fs::path& path) {
  if (!fs::exists(path)) throw input_error("feature matrix not found: " + path.string());
  const auto t = csv::read(path);
  const auto id_col = t.require_column("participant_id");
  const auto viv_col = t.require_column("vividness");
  std::vector<std::size_t> cols;
  FeatureTable f;
  for (std::size_t c = 0; c < t.header.size(); ++c)
    if (t.header[c].rfind("topic_", 0) == 0) {
      cols.push_back(c);
      f.names.push_back(t.header[c]);
    }
  if (cols.empty()) throw input_error("no topic_* columns in " + path.string());
  f.X.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    f.ids.push_back(t.rows[r][id_col]);
    const auto v = detail::parse_int(t.rows[r][viv_col]);
    if (!v || *v < kMinVividness || *v > kMaxVividness)
      throw input_error(path.string() + " row " + std::to_string(r + 1) + ": invalid vividness");
    f.vividness.push_back(*v);
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto& cell = t.rows[r][cols[c]];
      char* end = nullptr;
      const double x = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(x))
        throw input_error(path.string() + " row " + std::to_string(r + 1) + ": bad value in " + f.names[c]);
      f.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = x;
    }
  }
  return f;
}

inline json coefficient_json(const std::vector<std::string>& names, const Vector& beta) {
  json out = json::array();
  for (std::size_t j = 0; j < names.size(); ++j) out.push_back({{"feature", names[j]}, {"coefficient", beta(static_cast<Eigen::Index>(j))}});
  return out;
}

inline void write_stability(const fs::path& path, const std::vector<std::string>& names, const sparse::StabilityReport& rep) {
  csv::Writer w(path);
  w.row({"feature", "frequency", "retained"});
  for (std::size_t j = 0; j < names.size(); ++j) {
    const bool kept = std::find(rep.retained.begin(), rep.retained.end(), j) != rep.retained.end();
    w.row({names[j], csv::num(rep.frequency[j]), kept ? "1" : "0"});
  }
}

inline json stability_json(const std::vector<std::string>& names, const sparse::StabilityReport& rep) {
  json kept = json::array();
  for (auto j : rep.retained) kept.push_back(names[j]);
  return {{"iterations", rep.iterations}, {"skipped", rep.skipped}, {"threshold", rep.threshold}, {"retained", kept}};
}

inline json cmd_predict(const RunConfig& cfg) {
  Run run(cfg, "predict");
  const fs::path fpath = cfg.features_path();
  if (!fs::exists(fpath)) throw input_error("stage features: feature matrix not found: " + fpath.string());
  run.input("features", fpath);
  const auto ft = stage("features", [&] { return read_features(fpath); });
  auto names = ft.names;
  if (!cfg.paths.labels.empty()) {
    run.input("labels", cfg.paths.labels);
    const auto labels = stage("labels", [&] { return topics::read_labels(cfg.paths.labels); });
    for (auto& n : names) {
      const int t = std::stoi(n.substr(6));
      if (labels.count(t)) n += " (" + labels.at(t) + ")";
    }
  }
  Vector y(static_cast<Eigen::Index>(ft.vividness.size()));
  for (std::size_t i = 0; i < ft.vividness.size(); ++i) y(static_cast<Eigen::Index>(i)) = ft.vividness[i];
  const auto B = static_cast<std::size_t>(cfg.predict.bootstrap);
  const auto P = static_cast<std::size_t>(cfg.predict.permutations);
  const Matrix Z = ZScaler::fit(ft.X).transform(ft.X);

  sparse::LassoCvOptions lo;
  lo.n_alphas = static_cast<std::size_t>(cfg.predict.n_alphas);
  lo.alpha_min = cfg.predict.alpha_min;
  lo.alpha_max = cfg.predict.alpha_max;
  lo.folds = static_cast<int>(cfg.predict.folds);
  lo.test_fraction = cfg.predict.test_fraction;
  lo.split_seed = derive_seed(cfg.run.seed, kSeedLasso);
  const auto lasso = stage("lasso", [&] { return sparse::lasso_cv(ft.X, y, lo); });
  const auto lasso_stab = stage("lasso-stability", [&] {
    return sparse::bootstrap_stability(
        Z, y, [&](const Matrix& Xb, const Vector& yb) { return sparse::lasso_fit(Xb, yb, lasso.best_alpha).coefficients; }, B,
        cfg.predict.stability_threshold, derive_seed(cfg.run.seed, kSeedStability, 0));
  });
  {
    json j;
    j["alpha"] = lasso.best_alpha;
    j["intercept"] = lasso.fit.intercept;
    j["coefficients"] = coefficient_json(names, lasso.fit.coefficients);
    j["r2_test"] = jnum(lasso.fit.r2_test);
    j["mse_test"] = jnum(lasso.fit.mse_test);
    j["n_train"] = lasso.train.size();
    j["n_test"] = lasso.test.size();
    j["stability"] = stability_json(names, lasso_stab);
    write_json(run.file("lasso.json"), j);
    csv::Writer w(run.file("lasso_cv.csv"));
    w.row({"alpha", "cv_mse"});
    for (std::size_t a = 0; a < lasso.alphas.size(); ++a) w.row({csv::num(lasso.alphas[a]), csv::num(lasso.cv_mse[a])});
    write_stability(run.file("stability_lasso.csv"), names, lasso_stab);
  }

  sparse::LogisticCvOptions co;
  co.n_cs = static_cast<std::size_t>(cfg.predict.n_cs);
  co.c_min = cfg.predict.c_min;
  co.c_max = cfg.predict.c_max;
  co.folds = static_cast<int>(cfg.predict.folds);
  co.test_fraction = cfg.predict.test_fraction;
  co.split_seed = derive_seed(cfg.run.seed, kSeedLogistic);
  const auto groups = stage("logistic", [&] { return sparse::logistic_cv_ovr(ft.X, ft.vividness, co); });

  json summary;
  summary["n_participants"] = ft.ids.size();
  summary["n_features"] = names.size();
  summary["lasso"] = {{"alpha", lasso.best_alpha}, {"r2_test", jnum(lasso.fit.r2_test)}, {"mse_test", jnum(lasso.fit.mse_test)},
                      {"selected", lasso.fit.selected().size()}, {"stable", lasso_stab.retained.size()}};
  json gsum = json::object();
  sparse::LogisticOptions quiet;
  quiet.throw_on_nonconvergence = false;
  for (const auto& g : groups) {
    const std::string gname(to_string(g.group));
    const Vector yg = sparse::group_indicator(ft.vividness, g.group);
    const auto& cv = g.cv;
    const auto stab = stage("logistic-stability", [&] {
      return sparse::bootstrap_stability(
          Z, yg,
          [&](const Matrix& Xb, const Vector& yb) {
            return sparse::l1_logistic_fit(Xb, yb, cv.best_C, sparse::balanced_weights(yb), quiet, &cv.fit).coefficients;
          },
          B, cfg.predict.stability_threshold, derive_seed(cfg.run.seed, kSeedStability, 1 + static_cast<std::uint64_t>(g.group)),
          true);
    });
    // Null: refit at the chosen C on the same stratified split with shuffled labels.
    const Matrix Xtr = cv.scaler.transform(sparse::take_rows(ft.X, cv.train));
    const Matrix Xte = cv.scaler.transform(sparse::take_rows(ft.X, cv.test));
    auto score = [&](const Matrix&, const Vector& yy) {
      const Vector ytr = sparse::take(yy, cv.train), yte = sparse::take(yy, cv.test);
      const auto pos = (ytr.array() > 0.5).count();
      if (pos == 0 || pos == ytr.size()) return 0.0;
      const auto fit = sparse::l1_logistic_fit(Xtr, ytr, cv.best_C, sparse::balanced_weights(ytr), quiet, &cv.fit);
      const auto pred = fit.predict(Xte);
      std::size_t tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool truth = yte(static_cast<Eigen::Index>(i)) > 0.5;
        tp += truth && pred[i];
        fp += !truth && pred[i];
        fn += truth && !pred[i];
      }
      return tp + fp + fn == 0 ? 0.0 : sparse::f1_score(tp, fp, fn);
    };
    const auto perm = stage("permutation", [&] {
      return sparse::permutation_test(ft.X, yg, score, P, derive_seed(cfg.run.seed, kSeedPermutation, static_cast<std::uint64_t>(g.group)));
    });

    json j;
    j["group"] = gname;
    j["C"] = cv.best_C;
    j["intercept"] = cv.fit.intercept;
    j["coefficients"] = coefficient_json(names, cv.fit.coefficients);
    j["f1_test"] = jnum(cv.fit.f1_test);
    j["converged"] = cv.fit.converged;
    j["n_positive"] = static_cast<std::size_t>((yg.array() > 0.5).count());
    j["stability"] = stability_json(names, stab);
    j["permutation"] = {{"observed_f1", perm.observed}, {"p_value", perm.p_value}, {"permutations", P}};
    write_json(run.file("logistic_" + gname + ".json"), j);
    write_stability(run.file("stability_" + gname + ".csv"), names, stab);
    csv::Writer w(run.file("null_" + gname + ".csv"));
    w.row({"iteration", "f1"});
    for (std::size_t p = 0; p < perm.null.size(); ++p) w.row({std::to_string(p), csv::num(perm.null[p])});
    svg::write(run.file("null_" + gname + ".svg"),
               svg::histogram(perm.null, 30, "Permutation null F1, " + gname + " imagery", perm.observed));
    gsum[gname] = {{"C", cv.best_C}, {"f1_test", jnum(cv.fit.f1_test)}, {"permutation_p", perm.p_value},
                   {"stable", stab.retained.size()}};
  }
  summary["logistic"] = gsum;
  run.finish(summary);
  return summary;
}

// ---------------------------------------------------------------------------
// rsa

inline void write_rdm(const fs::path& path, const rsa::Rdm& r) {
  csv::Writer w(path);
  std::vector<std::string> head{"bin"};
  for (int j = 0; j < rsa::kBins; ++j) head.push_back(std::to_string(j));
  w.row(head);
  for (int i = 0; i < rsa::kBins; ++i) {
    std::vector<std::string> row{std::to_string(i)};
    for (int j = 0; j < rsa::kBins; ++j) row.push_back(csv::num(r(i, j)));
    w.row(row);
  }
}

inline json cmd_rsa(const RunConfig& cfg, std::vector<std::string> tags = {}) {
  Run run(cfg, "rsa");
  if (tags.empty()) tags = cfg.rsa.models;
  if (tags.empty()) throw input_error("stage rsa: no model tags given (rsa.models or --models)");
  const auto corpus = load_inputs_corpus(cfg, run);
  std::unordered_map<std::string, int> vividness;
  for (const auto& r : corpus.records)
    if (!r.excluded()) vividness[r.id] = r.vividness;

  std::vector<std::string> bin_labels;
  for (int b = 0; b < rsa::kBins; ++b) bin_labels.push_back(std::to_string(b));
  const auto theory = rsa::theoretical_rdm();
  const auto self = rsa::rdm_alignment(theory, theory, cfg.rsa.full_matrix);
  write_rdm(run.file("rdm_theory.csv"), theory);
  svg::write(run.file("rdm_theory.svg"), svg::heatmap(theory.values, bin_labels, "Theoretical imagery RDM |i - j|"));

  struct Row {
    std::string tag;
    std::size_t n;
    rsa::Correlation c;
    double shuffle_mean, shuffle_sd;
  };
  std::vector<Row> rows;
  const auto theory_vec = cfg.rsa.full_matrix ? theory.all_entries() : theory.upper_triangle();
  for (const auto& tag : tags) {
    const fs::path path = fs::path(cfg.paths.embeddings_dir) / (tag + ".embx");
    if (!fs::exists(path)) throw input_error("stage rsa: embeddings for model '" + tag + "' not found: " + path.string());
    run.input("embeddings:" + tag, path);
    const auto m = stage("rsa:" + tag, [&] {
      auto full = read_embeddings(path);
      EmbeddingMatrix sub;
      sub.model_tag = full.model_tag;
      sub.dim = full.dim;
      sub.normalized = full.normalized;
      for (std::size_t i = 0; i < full.rows(); ++i) {
        if (!vividness.count(full.ids[i])) continue;
        sub.ids.push_back(full.ids[i]);
        const auto r = full.row(i);
        sub.values.insert(sub.values.end(), r.begin(), r.end());
      }
      return sub;
    });
    const auto rdm = stage("rsa:" + tag, [&] { return rsa::rdm_euclidean(rsa::bin_mean_embeddings(m, vividness)); });
    const auto corr = stage("rsa:" + tag, [&] { return rsa::rdm_alignment(rdm, theory, cfg.rsa.full_matrix); });
    const auto S = static_cast<std::size_t>(cfg.rsa.shuffles);
    std::vector<double> shuffle_rho(S);
    std::optional<rsa::Rdm> first_shuffle;
    stage("rsa-shuffle:" + tag, [&] {
      std::vector<rsa::Rdm> shuffled(S);
      parallel_for(S, [&](std::size_t s) {
        shuffled[s] = rsa::shuffle_control(m, vividness, derive_seed(cfg.run.seed, kSeedShuffle, s));
        const auto v = cfg.rsa.full_matrix ? shuffled[s].all_entries() : shuffled[s].upper_triangle();
        shuffle_rho[s] = rsa::spearman(v, theory_vec).rho;
      });
      if (S) first_shuffle = shuffled[0];
      return 0;
    });
    const std::string fname = safe_name(tag);
    write_rdm(run.file("rdm_" + fname + ".csv"), rdm);
    svg::write(run.file("rdm_" + fname + ".svg"), svg::heatmap(rdm.values, bin_labels, "RDM " + tag));
    if (first_shuffle) {
      write_rdm(run.file("rdm_shuffle_" + fname + ".csv"), *first_shuffle);
      svg::write(run.file("rdm_shuffle_" + fname + ".svg"), svg::heatmap(first_shuffle->values, bin_labels, "Shuffled RDM " + tag));
    }
    {
      csv::Writer w(run.file("shuffle_rho_" + fname + ".csv"));
      w.row({"shuffle", "seed_stream_index", "rho"});
      for (std::size_t s = 0; s < S; ++s) w.row({std::to_string(s), std::to_string(s), csv::num(shuffle_rho[s])});
    }
    const auto mv = rdm.upper_triangle();
    const auto tv = theory.upper_triangle();
    svg::write(run.file("scatter_" + fname + ".svg"),
               svg::scatter(tv, mv, "Model vs theoretical dissimilarity, " + tag, "|i - j|", "Euclidean distance"));
    const double smean = S ? mean(shuffle_rho) : std::numeric_limits<double>::quiet_NaN();
    const double ssd = S ? population_sd(shuffle_rho) : std::numeric_limits<double>::quiet_NaN();
    rows.push_back({tag, m.rows(), corr, smean, ssd});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.c.rho > b.c.rho; });

  json models = json::array();
  csv::Writer w(run.file("summary.csv"));
  w.row({"model", "n_descriptions", "rho", "p_t", "p_exact", "shuffle_mean_rho", "shuffle_sd_rho"});
  std::vector<double> xs, ys;
  std::vector<std::string> plabels;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    w.row({r.tag, std::to_string(r.n), csv::num(r.c.rho), csv::num(r.c.p_t), std::isfinite(r.c.p_exact) ? csv::num(r.c.p_exact) : "",
           csv::num(r.shuffle_mean), csv::num(r.shuffle_sd)});
    models.push_back({{"model", r.tag}, {"n_descriptions", r.n}, {"rho", r.c.rho}, {"p_t", jnum(r.c.p_t)}, {"p_exact", jnum(r.c.p_exact)},
                      {"shuffle_mean_rho", jnum(r.shuffle_mean)}, {"shuffle_sd_rho", jnum(r.shuffle_sd)}});
    xs.push_back(static_cast<double>(k));
    ys.push_back(r.c.rho);
    plabels.push_back(r.tag);
  }
  svg::write(run.file("alignment.svg"), svg::scatter(xs, ys, "RDM alignment with theory", "model (sorted)", "Spearman rho", plabels));

  json summary;
  summary["theory_self_test_rho"] = self.rho;
  summary["flatten"] = cfg.rsa.full_matrix ? "full" : "upper";
  summary["shuffles"] = cfg.rsa.shuffles;
  summary["shuffle_seed_stream"] = kSeedShuffle;
  summary["models"] = models;
  run.finish(summary);
  return summary;
}

// ---------------------------------------------------------------------------
// sensorimotor

inline constexpr std::size_t kScoreColumns = sensorimotor::kModalities + 2;

inline std::vector<std::string> score_names() {
  std::vector<std::string> n(sensorimotor::kModalityNames.begin(), sensorimotor::kModalityNames.end());
  n.push_back("perceptual_strength");
  n.push_back("action_strength");
  return n;
}

inline std::vector<double> score_row(const sensorimotor::SensorimotorProfile& p) {
  std::vector<double> v(p.modality_means.begin(), p.modality_means.end());
  v.push_back(p.perceptual_strength);
  v.push_back(p.action_strength);
  return v;
}

inline json glm_json(const inference::GlmResult& g) {
  json c = json::array();
  for (const auto& k : g.coefficients)
    c.push_back({{"name", k.name}, {"beta", k.beta}, {"se", k.se}, {"t", k.t}, {"p", jnum(k.p)}});
  return {{"n", g.n}, {"residual_df", g.residual_df}, {"r2", g.r2}, {"coefficients", c}};
}

inline json estimate_json(const inference::Estimate& e) {
  return {{"estimate", jnum(e.estimate)}, {"ci_low", jnum(e.ci_low)}, {"ci_high", jnum(e.ci_high)}, {"p", jnum(e.p)}};
}

inline json cmd_sensorimotor(const RunConfig& cfg) {
  Run run(cfg, "sensorimotor");
  const auto corpus = load_inputs_corpus(cfg, run);
  const auto norms = stage("norms", [&] {
    if (cfg.paths.norms.empty()) throw input_error("paths.norms is not set");
    run.input("norms", cfg.paths.norms);
    return sensorimotor::load_norms(cfg.paths.norms);
  });

  std::vector<const ParticipantRecord*> included;
  for (const auto& r : corpus.records)
    if (!r.excluded()) included.push_back(&r);
  auto lex = stage("preprocess", [&] {
    auto l = Lexicon::load(cfg.paths.data_dir);
    l.set_vocabulary(norms.words());
    std::vector<std::string_view> texts;
    for (const auto* r : included) texts.push_back(r->description);
    l.set_frequencies(token_frequencies(texts, l));
    return l;
  });

  sensorimotor::ScoringOptions so;
  so.min_matched = static_cast<std::size_t>(cfg.sensorimotor.min_matched);
  so.use_file_composites = cfg.sensorimotor.use_file_composites;
  std::vector<sensorimotor::ScoreOutcome> outcomes(included.size());
  stage("score", [&] {
    parallel_for(included.size(), [&](std::size_t i) {
      outcomes[i] = sensorimotor::score_description(preprocess_ls(included[i]->description, lex, included[i]->id), norms, so);
    });
    return 0;
  });

  const auto names = score_names();
  std::vector<std::size_t> kept;
  std::size_t lemma_matches = 0, surface_matches = 0;
  {
    csv::Writer prof(run.file("profiles.csv"));
    std::vector<std::string> head{"participant_id"};
    head.insert(head.end(), names.begin(), names.end());
    head.push_back("matched_word_count");
    head.push_back("length");
    prof.row(head);
    csv::Writer excl(run.file("exclusions.csv"));
    excl.row({"participant_id", "reason", "matched_word_count"});
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      const auto& o = outcomes[i];
      lemma_matches += o.lemma_matches;
      surface_matches += o.surface_matches;
      if (!o.profile) {
        excl.row({included[i]->id, std::string(to_string(ExclusionReason::too_few_ls_words)),
                  std::to_string(o.lemma_matches + o.surface_matches)});
        continue;
      }
      kept.push_back(i);
      std::vector<std::string> row{o.profile->participant_id};
      for (double v : score_row(*o.profile)) row.push_back(csv::num(v));
      row.push_back(std::to_string(o.profile->matched_word_count));
      row.push_back(std::to_string(o.profile->length));
      prof.row(row);
    }
  }
  const auto n = static_cast<Eigen::Index>(kept.size());
  if (n < 10) throw input_error("stage glm: only " + std::to_string(n) + " participants have a sensorimotor profile");

  Matrix scores(n, static_cast<Eigen::Index>(kScoreColumns));
  Vector length(n), y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto i = kept[static_cast<std::size_t>(r)];
    const auto v = score_row(*outcomes[i].profile);
    for (std::size_t c = 0; c < v.size(); ++c) scores(r, static_cast<Eigen::Index>(c)) = v[c];
    length(r) = static_cast<double>(outcomes[i].profile->length);
    y(r) = included[i]->vividness;
  }
  const Matrix zs = ZScaler::fit(scores).transform(scores);
  const Vector zlen = zscore(length);

  struct Model {
    std::string name;
    std::vector<std::size_t> cols;
  };
  const std::vector<Model> models{{"composite", {11, 12}}, {"perceptual", {0, 1, 2, 3, 4, 5}}, {"motor", {6, 7, 8, 9, 10}}};
  json glms = json::object();
  for (const auto& mdl : models) {
    Matrix X(n, static_cast<Eigen::Index>(mdl.cols.size() + 1));
    std::vector<std::string> xn;
    for (std::size_t k = 0; k < mdl.cols.size(); ++k) {
      X.col(static_cast<Eigen::Index>(k)) = zs.col(static_cast<Eigen::Index>(mdl.cols[k]));
      xn.push_back(names[mdl.cols[k]]);
    }
    X.col(static_cast<Eigen::Index>(mdl.cols.size())) = zlen;
    xn.push_back("length");
    const auto g = stage("glm:" + mdl.name, [&] { return inference::glm_fit(X, y, xn); });
    glms[mdl.name] = glm_json(g);
    write_json(run.file("glm_" + mdl.name + ".json"), glm_json(g));
    const double tcrit = t_quantile(0.975, g.residual_df);
    csv::Writer w(run.file("forest_" + mdl.name + ".csv"));
    w.row({"predictor", "beta", "se", "ci_low", "ci_high", "p", "significant"});
    std::vector<svg::ForestRow> fr;
    for (std::size_t k = 1; k < g.coefficients.size(); ++k) {
      const auto& c = g.coefficients[k];
      const double lo = c.beta - tcrit * c.se, hi = c.beta + tcrit * c.se;
      const bool sig = c.p < 0.05;
      w.row({c.name, csv::num(c.beta), csv::num(c.se), csv::num(lo), csv::num(hi), csv::num(c.p), sig ? "1" : "0"});
      fr.push_back({c.name, c.beta, lo, hi, sig});
    }
    svg::write(run.file("forest_" + mdl.name + ".svg"), svg::forest(fr, "Vividness ~ " + mdl.name + " + length"));
  }

  // Mediation through description length, one focal predictor at a time.
  const std::vector<std::size_t> focal{11, 12, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  json med = json::array();
  csv::Writer mw(run.file("mediation.csv"));
  mw.row({"predictor", "acme", "acme_ci_low", "acme_ci_high", "acme_p", "ade", "ade_ci_low", "ade_ci_high", "ade_p", "total",
          "total_ci_low", "total_ci_high", "total_p", "proportion", "proportion_ci_low", "proportion_ci_high", "n_sims",
          "skipped"});
  for (std::size_t k = 0; k < focal.size(); ++k) {
    const auto col = focal[k];
    inference::MediationOptions mo;
    mo.n_sims = static_cast<std::size_t>(cfg.sensorimotor.mediation_sims);
    mo.seed = derive_seed(cfg.run.seed, kSeedMediation, col);
    if (cfg.sensorimotor.mediation_covariates) {
      std::vector<std::size_t> others;
      if (col >= sensorimotor::kModalities) {
        others.push_back(col == 11 ? 12 : 11);
      } else {
        for (std::size_t c = 0; c < sensorimotor::kModalities; ++c)
          if (c != col) others.push_back(c);
      }
      mo.covariates.resize(n, static_cast<Eigen::Index>(others.size()));
      for (std::size_t c = 0; c < others.size(); ++c) mo.covariates.col(static_cast<Eigen::Index>(c)) = zs.col(static_cast<Eigen::Index>(others[c]));
    }
    const auto r = stage("mediation:" + names[col], [&] { return inference::mediate(zs.col(static_cast<Eigen::Index>(col)), zlen, y, mo); });
    med.push_back({{"predictor", names[col]}, {"acme", estimate_json(r.acme)}, {"ade", estimate_json(r.ade)},
                   {"total", estimate_json(r.total)}, {"proportion", estimate_json(r.proportion)}, {"n_sims", r.n_sims},
                   {"skipped", r.skipped}});
    std::vector<std::string> row{names[col]};
    for (const auto* e : {&r.acme, &r.ade, &r.total}) {
      row.push_back(csv::num(e->estimate));
      row.push_back(csv::num(e->ci_low));
      row.push_back(csv::num(e->ci_high));
      row.push_back(csv::num(e->p));
    }
    row.push_back(csv::num(r.proportion.estimate));
    row.push_back(csv::num(r.proportion.ci_low));
    row.push_back(csv::num(r.proportion.ci_high));
    row.push_back(std::to_string(r.n_sims));
    row.push_back(std::to_string(r.skipped));
    mw.row(row);
  }
  write_json(run.file("mediation.json"), med);

  json means = json::object();
  for (std::size_t c = 0; c < kScoreColumns; ++c) {
    std::vector<double> col(static_cast<std::size_t>(n));
    for (Eigen::Index r = 0; r < n; ++r) col[static_cast<std::size_t>(r)] = scores(r, static_cast<Eigen::Index>(c));
    means[names[c]] = {{"mean", mean(col)}, {"sd", population_sd(col)}};
  }
  json summary;
  summary["norm_words"] = norms.size();
  summary["participants_scored"] = included.size();
  summary["included"] = kept.size();
  summary["excluded_too_few_ls_words"] = included.size() - kept.size();
  summary["exclusion_rate"] = included.empty() ? 0.0 : static_cast<double>(included.size() - kept.size()) / static_cast<double>(included.size());
  summary["lemma_matches"] = lemma_matches;
  summary["surface_matches"] = surface_matches;
  summary["score_means"] = means;
  summary["glm"] = glms;
  run.finish(summary);
  return summary;
}

// ---------------------------------------------------------------------------
// report

inline json cmd_report(const RunConfig& cfg) {
  json all = json::object();
  for (const char* name : {"ingest", "topics", "predict", "rsa", "sensorimotor"}) {
    const auto p = cfg.out_dir(name) / "summary.json";
    if (fs::exists(p)) all[name] = read_json(p);
  }
  if (all.empty()) throw input_error("stage report: no command summaries under " + cfg.paths.out);
  Run run(cfg, "report");
  write_json(run.file("report.json"), all);

  std::ostringstream md;
  md << "# Run report\n\nSeed " << cfg.run.seed << ".\n";
  for (const auto& [name, s] : all.items()) {
    md << "\n## " << name << "\n\n";
    for (const auto& [k, v] : s.items()) {
      if (k == "command" || k == "seed") continue;
      if (v.is_primitive()) md << "- " << k << ": " << v.dump() << "\n";
    }
    if (name == "rsa" && s.contains("models"))
      for (const auto& m : s["models"]) md << "- " << m["model"].get<std::string>() << ": rho " << m["rho"].dump() << "\n";
    if (name == "predict" && s.contains("logistic"))
      for (const auto& [g, v] : s["logistic"].items())
        md << "- " << g << " classifier: F1 " << v["f1_test"].dump() << ", permutation p " << v["permutation_p"].dump() << "\n";
  }
  write_text(run.file("report.md"), md.str());
  json summary;
  summary["sections"] = all.size();
  run.finish(summary);
  return summary;
}

}  // namespace flicker::pipeline
