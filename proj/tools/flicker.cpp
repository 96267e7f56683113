#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flicker/config.hpp"
#include "flicker/parallel.hpp"
#include "flicker/pipeline.hpp"

namespace {

int exit_code(flicker::ErrorKind k) { return k == flicker::ErrorKind::input ? 2 : 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flicker: topic, RSA and sensorimotor analysis of imagery reports"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out, corpus, norms, embeddings, labels;
  std::string col_id, col_viv, col_text, col_lang;
  app.add_option("--config", config_path, "TOML-style config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "master seed");
  app.add_option("--threads", threads, "worker cap (0 = all cores); never changes results");
  app.add_option("--out", out, "output directory");
  app.add_option("--corpus", corpus, "corpus CSV");
  app.add_option("--norms", norms, "sensorimotor norms CSV");
  app.add_option("--embeddings", embeddings, "directory holding EMBX files");
  app.add_option("--labels", labels, "topic labels TSV");
  app.add_option("--col-id", col_id, "corpus id column");
  app.add_option("--col-vividness", col_viv, "corpus vividness column");
  app.add_option("--col-text", col_text, "corpus description column");
  app.add_option("--col-langflag", col_lang, "corpus non-English flag column");

  auto* ingest = app.add_subcommand("ingest", "load, validate and segment the corpus");
  auto* topics = app.add_subcommand("topics", "reduce, cluster and characterize sentence embeddings");
  auto* predict = app.add_subcommand("predict", "sparse models linking topic features to vividness");
  auto* rsa = app.add_subcommand("rsa", "representational similarity against the imagery RDM");
  std::vector<std::string> models;
  rsa->add_option("--models", models, "model tags (<embeddings>/<tag>.embx)")->delimiter(',');
  auto* senso = app.add_subcommand("sensorimotor", "norm scoring, GLMs and mediation");
  auto* report = app.add_subcommand("report", "collect command summaries");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    flicker::RunConfig cfg;
    if (!config_path.empty()) cfg = flicker::load_config(config_path);
    if (seed) cfg.run.seed = *seed;
    if (threads) cfg.run.threads = *threads;
    if (!out.empty()) cfg.paths.out = out;
    if (!corpus.empty()) cfg.paths.corpus = corpus;
    if (!norms.empty()) cfg.paths.norms = norms;
    if (!embeddings.empty()) cfg.paths.embeddings_dir = embeddings;
    if (!labels.empty()) cfg.paths.labels = labels;
    if (!col_id.empty()) cfg.corpus.col_id = col_id;
    if (!col_viv.empty()) cfg.corpus.col_vividness = col_viv;
    if (!col_text.empty()) cfg.corpus.col_text = col_text;
    if (!col_lang.empty()) cfg.corpus.col_langflag = col_lang;
    flicker::validate(cfg);
    flicker::set_thread_count(static_cast<unsigned>(cfg.run.threads));

    nlohmann::ordered_json summary;
    if (*ingest) summary = flicker::pipeline::cmd_ingest(cfg);
    else if (*topics) summary = flicker::pipeline::cmd_topics(cfg);
    else if (*predict) summary = flicker::pipeline::cmd_predict(cfg);
    else if (*rsa) summary = flicker::pipeline::cmd_rsa(cfg, models);
    else if (*senso) summary = flicker::pipeline::cmd_sensorimotor(cfg);
    else if (*report) summary = flicker::pipeline::cmd_report(cfg);
    std::cout << summary.dump(2) << "\n";
    return 0;
  } catch (const flicker::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
