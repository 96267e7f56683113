#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "flicker/random.hpp"
#include "flicker/sensorimotor.hpp"

using namespace flicker;
using namespace flicker::sensorimotor;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = FLICKER_FIXTURES;

const std::string kHeader = "word,visual,auditory,gustatory,olfactory,haptic,interoceptive,head,hand,mouth,foot,torso\n";

fs::path norms_file(const std::string& name, const std::string& rows) {
  const auto p = fs::temp_directory_path() / ("flicker_norms_" + name + ".csv");
  std::ofstream(p) << kHeader << rows;
  return p;
}

TokenizedDoc doc(std::vector<std::string> tokens) {
  TokenizedDoc d;
  d.participant_id = "p";
  d.surface = tokens;
  d.tokens = std::move(tokens);
  return d;
}

std::string load_error(const fs::path& p) {
  try {
    load_norms(p);
  } catch (const Error& e) {
    return e.what();
  }
  ADD_FAILURE();
  return {};
}

}  // namespace

TEST(Norms, LoadsFixtureCaseInsensitiveHeaders) {
  const auto n = load_norms(kFixtures / "norms_small.csv");
  EXPECT_EQ(n.size(), 30u);
  ASSERT_NE(n.find("red"), nullptr);
  EXPECT_EQ(n.find("red")->ratings[0], 4.0);
  EXPECT_EQ(n.find("nothing"), nullptr);
  const auto words = n.words();
  EXPECT_TRUE(std::is_sorted(words.begin(), words.end()));
}

TEST(Norms, PublishedColumnNames) {
  const auto p = fs::temp_directory_path() / "flicker_norms_published.csv";
  std::ofstream(p) << "Word,Auditory.mean,Gustatory.mean,Haptic.mean,Interoceptive.mean,Olfactory.mean,Visual.mean,"
                      "Foot_leg.mean,Hand_arm.mean,Head.mean,Mouth.mean,Torso.mean,Max_strength.perceptual,"
                      "Max_strength.action\n"
                      "APPLE,1,4,3,2,3.5,4.5,0.5,3,1,4,0.2,4.5,4\n";
  const auto n = load_norms(p);
  const auto* e = n.find("apple");
  ASSERT_NE(e, nullptr);
  EXPECT_EQ(e->ratings[0], 4.5);  // visual
  EXPECT_EQ(e->ratings[7], 3.0);  // hand
  EXPECT_EQ(e->ratings[9], 0.5);  // foot
  EXPECT_EQ(*e->perceptual_composite, 4.5);
}

TEST(Norms, RangeAndDuplicateErrors) {
  EXPECT_NE(load_error(norms_file("range", "red,5.2,0,0,0,0,0,0,0,0,0,0\n")).find("5.2"), std::string::npos);
  EXPECT_NE(load_error(norms_file("neg", "red,-1,0,0,0,0,0,0,0,0,0,0\n")).find("outside"), std::string::npos);
  EXPECT_NE(load_error(norms_file("dup", "red,1,0,0,0,0,0,0,0,0,0,0\nRed,1,0,0,0,0,0,0,0,0,0,0\n")).find("'red'"),
            std::string::npos);
  EXPECT_NE(load_error(norms_file("nan", "red,abc,0,0,0,0,0,0,0,0,0,0\n")).find("non-numeric"), std::string::npos);
  const auto p = fs::temp_directory_path() / "flicker_norms_nocol.csv";
  std::ofstream(p) << "word,visual\nred,1\n";
  EXPECT_NE(load_error(p).find("auditory"), std::string::npos);
}

TEST(Score, TwoMatchesExcluded) {
  const auto n = load_norms(kFixtures / "norms_small.csv");
  const auto out = score_description(doc({"red", "dot", "unknownword"}), n);
  EXPECT_FALSE(out.profile.has_value());
  EXPECT_EQ(out.lemma_matches, 2u);
}

TEST(Score, ConstantVisualMean) {
  const auto p = norms_file("const", "a,4,1,0,0,0,0,0,0,0,0,0\nb,4,2,0,0,0,0,0,0,0,0,0\nc,4,3,0,0,0,0,0,0,0,0,0\n");
  const auto n = load_norms(p);
  const auto out = score_description(doc({"a", "b", "c"}), n);
  ASSERT_TRUE(out.profile.has_value());
  EXPECT_DOUBLE_EQ(out.profile->modality_means[0], 4.0);
  EXPECT_DOUBLE_EQ(out.profile->modality_means[1], 2.0);
  EXPECT_EQ(out.profile->matched_word_count, 3u);
  EXPECT_DOUBLE_EQ(out.profile->perceptual_strength, 4.0);
  EXPECT_DOUBLE_EQ(out.profile->action_strength, 0.0);
}

TEST(Score, RepeatedTokensCountPerOccurrence) {
  const auto p = norms_file("rep", "a,1,0,0,0,0,0,0,0,0,0,0\nb,4,0,0,0,0,0,0,0,0,0,0\n");
  const auto out = score_description(doc({"a", "a", "b"}), load_norms(p));
  ASSERT_TRUE(out.profile.has_value());
  EXPECT_DOUBLE_EQ(out.profile->modality_means[0], 2.0);
}

TEST(Score, SurfaceFallback) {
  const auto n = load_norms(kFixtures / "norms_small.csv");
  TokenizedDoc d;
  d.participant_id = "p";
  d.tokens = {"swirly", "red", "dots"};
  d.surface = {"swirl", "red", "dot"};
  const auto out = score_description(d, n);
  ASSERT_TRUE(out.profile.has_value());
  EXPECT_EQ(out.lemma_matches, 1u);
  EXPECT_EQ(out.surface_matches, 2u);
}

TEST(Score, PermutationInvariantAndBounded) {
  const auto n = load_norms(kFixtures / "norms_small.csv");
  const auto words = n.words();
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> toks;
    for (int i = 0; i < 12; ++i) toks.push_back(words[rng.index(words.size())]);
    const auto a = score_description(doc(toks), n);
    rng.shuffle(toks);
    const auto b = score_description(doc(toks), n);
    ASSERT_TRUE(a.profile && b.profile);
    for (std::size_t m = 0; m < kModalities; ++m) {
      EXPECT_NEAR(a.profile->modality_means[m], b.profile->modality_means[m], 1e-12);
      EXPECT_GE(a.profile->modality_means[m], 0.0);
      EXPECT_LE(a.profile->modality_means[m], 5.0);
    }
    EXPECT_NEAR(a.profile->perceptual_strength, b.profile->perceptual_strength, 1e-12);
  }
}

TEST(Score, PerWordMaxDominatesBlock) {
  const auto n = load_norms(kFixtures / "norms_small.csv");
  for (const auto& w : n.words()) {
    const auto& r = n.find(w)->ratings;
    const double pm = block_max(r, 0, kPerceptual), am = block_max(r, kPerceptual, kModalities);
    for (std::size_t m = 0; m < kPerceptual; ++m) EXPECT_GE(pm, r[m]);
    for (std::size_t m = kPerceptual; m < kModalities; ++m) EXPECT_GE(am, r[m]);
  }
}

TEST(Score, FileCompositesWhenRequested) {
  const auto p = fs::temp_directory_path() / "flicker_norms_comp.csv";
  std::ofstream(p) << "word,visual,auditory,gustatory,olfactory,haptic,interoceptive,head,hand,mouth,foot,torso,"
                      "perceptual_strength,action_strength\n"
                      "a,1,0,0,0,0,0,0,0,0,0,0,2,3\nb,1,0,0,0,0,0,0,0,0,0,0,2,3\nc,1,0,0,0,0,0,0,0,0,0,0,2,3\n";
  const auto n = load_norms(p);
  EXPECT_DOUBLE_EQ(score_description(doc({"a", "b", "c"}), n).profile->perceptual_strength, 1.0);
  ScoringOptions o;
  o.use_file_composites = true;
  EXPECT_DOUBLE_EQ(score_description(doc({"a", "b", "c"}), n, o).profile->action_strength, 3.0);
}
