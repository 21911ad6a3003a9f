#include <cmath>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include <json.hpp>

#include "corpus.hpp"
#include "isoword/error.hpp"
#include "isoword/recognizer.hpp"
#include "oracles.hpp"

namespace isoword {
namespace {

using testing::TempDir;

template <typename Fn>
ErrorCode code_of(Fn fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an isoword::Error";
  return ErrorCode::InvalidArgument;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class TrainedModel : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    training_ = new std::vector<LabeledAudio>(testing::synth_corpus(1, 10, 2));
    heldout_ = new std::vector<LabeledAudio>(testing::synth_corpus(11, 15, 1));
    report_ = new TrainingReport();
    model_ = new WordModelSet(train_vocabulary(std::span<const LabeledAudio>(*training_), TrainConfig{}, report_));
  }
  static void TearDownTestSuite() {
    delete training_;
    delete heldout_;
    delete report_;
    delete model_;
  }

  static std::vector<LabeledAudio>* training_;
  static std::vector<LabeledAudio>* heldout_;
  static TrainingReport* report_;
  static WordModelSet* model_;
};

std::vector<LabeledAudio>* TrainedModel::training_ = nullptr;
std::vector<LabeledAudio>* TrainedModel::heldout_ = nullptr;
TrainingReport* TrainedModel::report_ = nullptr;
WordModelSet* TrainedModel::model_ = nullptr;

TEST_F(TrainedModel, ModelIsComplete) {
  const WordModelSet& m = *model_;
  EXPECT_EQ(m.vocabulary, SynthLexicon::builtin().keywords());
  EXPECT_EQ(m.hmms.size(), m.vocabulary.size());
  EXPECT_EQ(m.mlp.classes(), m.vocabulary.size());
  EXPECT_EQ(m.codebook.size(), 64u);
  EXPECT_EQ(m.codebook.dim(), 26u);
  EXPECT_EQ(m.mlp.inputs(), 26u * 8u);
  for (const auto& hmm : m.hmms) {
    EXPECT_EQ(hmm.states(), 5u);
    EXPECT_TRUE(hmm.left_right);
    EXPECT_FALSE(hmm.find_violation().has_value());
  }
  EXPECT_NO_THROW(m.validate());
  ASSERT_EQ(report_->keywords.size(), 10u);
  for (const auto& k : report_->keywords) {
    EXPECT_EQ(k.utterances, 20u);
    EXPECT_TRUE(std::isfinite(k.final_log_likelihood));
  }
}

TEST_F(TrainedModel, RecognizesItsOwnTrainingWords) {
  for (const auto& item : *training_) {
    if (item.keyword != "three") continue;
    EXPECT_EQ(recognize(*model_, item.audio, 5).entries.front().keyword, "three") << item.source;
  }
}

TEST_F(TrainedModel, RecognizesHeldOutSpeakers) {
  std::size_t correct = 0;
  for (const auto& item : *heldout_) {
    const NBestList list = recognize(*model_, item.audio, 5);
    correct += list.entries.front().keyword == item.keyword;
  }
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(heldout_->size()), 0.9);
}

TEST_F(TrainedModel, NBestListShape) {
  const auto& audio = heldout_->front().audio;
  for (std::size_t n : {1u, 3u, 10u, 25u}) {
    const NBestList list = recognize(*model_, audio, n);
    EXPECT_EQ(list.entries.size(), std::min<std::size_t>(n, 10));
    for (std::size_t i = 1; i < list.entries.size(); ++i) {
      const auto& a = list.entries[i - 1];
      const auto& b = list.entries[i];
      EXPECT_GE(a.combined_score, b.combined_score);
      if (a.combined_score == b.combined_score) EXPECT_LT(a.vocabulary_index, b.vocabulary_index);
    }
    for (const auto& e : list.entries) {
      EXPECT_EQ(e.combined_score, combine_scores(e.hmm_score, e.ann_posterior, 0.5));
      EXPECT_EQ(model_->vocabulary[e.vocabulary_index], e.keyword);
    }
    EXPECT_GT(list.frames, 0u);
  }
  EXPECT_EQ(code_of([&] { recognize(*model_, audio, 0); }), ErrorCode::InvalidArgument);
}

TEST_F(TrainedModel, FastMatchKeepsTheTopHmmScores) {
  for (std::size_t i = 0; i < heldout_->size(); i += 7) {
    const Matrix f = normalized_features(*model_, (*heldout_)[i].audio);
    const auto scores = hmm_scores(*model_, encode(model_->codebook, f));
    const NBestList list = recognize_features(*model_, f, 3);
    double worst_kept = std::numeric_limits<double>::infinity();
    for (const auto& e : list.entries) worst_kept = std::min(worst_kept, e.hmm_score);
    std::size_t better = 0;
    for (double s : scores) better += s > worst_kept;
    EXPECT_LE(better, 2u);
  }
}

TEST_F(TrainedModel, ZeroLambdaFollowsTheFastMatchRanking) {
  WordModelSet hmm_only = *model_;
  hmm_only.config.lambda = 0.0;
  for (const auto& item : *heldout_) {
    const Matrix f = normalized_features(hmm_only, item.audio);
    const std::vector<int> symbols = encode(hmm_only.codebook, f);
    const NBestList list = recognize_features(hmm_only, f, 10);
    for (std::size_t i = 1; i < list.entries.size(); ++i) {
      EXPECT_GE(list.entries[i - 1].hmm_score, list.entries[i].hmm_score);
    }
    // argmax of the raw, unnormalized Viterbi scores
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t w = 0; w < hmm_only.hmms.size(); ++w) {
      const double raw = viterbi(hmm_only.hmms[w], symbols).log_score;
      if (raw > best_score) {
        best_score = raw;
        best = w;
      }
    }
    EXPECT_EQ(list.entries.front().vocabulary_index, best);
  }
}

TEST_F(TrainedModel, DecideThresholds) {
  const NBestList list = recognize(*model_, heldout_->front().audio, 5);
  const double inf = std::numeric_limits<double>::infinity();
  const Decision always = decide(list, -inf);
  EXPECT_TRUE(always.accepted);
  EXPECT_EQ(always.keyword, list.entries.front().keyword);
  const Decision never = decide(list, inf);
  EXPECT_FALSE(never.accepted);
  EXPECT_EQ(never.keyword, list.entries.front().keyword);
  EXPECT_EQ(never.score, list.entries.front().combined_score);
  EXPECT_EQ(code_of([] { decide(NBestList{}, 0.0); }), ErrorCode::InvalidArgument);
}

TEST_F(TrainedModel, NoiseIsRejectedAndWordsAreAccepted) {
  const double theta = model_->config.theta;
  std::size_t noise_rejected = 0;
  const auto noise = testing::noise_clips(20);
  for (const auto& clip : noise) noise_rejected += !decide(recognize(*model_, clip, 5), theta).accepted;
  EXPECT_GE(noise_rejected, 16u);
  std::size_t words_rejected = 0;
  for (const auto& item : *heldout_) words_rejected += !decide(recognize(*model_, item.audio, 5), theta).accepted;
  EXPECT_LE(static_cast<double>(words_rejected) / static_cast<double>(heldout_->size()), 0.1);
}

TEST_F(TrainedModel, SilenceIsNoSpeech) {
  EXPECT_EQ(code_of([&] { recognize(*model_, AudioBuffer{std::vector<double>(8000, 0.0), 16000}, 5); }),
            ErrorCode::NoSpeech);
}

// Repeating every frame keeps the per-frame score nearly unchanged.
TEST_F(TrainedModel, FrameDoublingIsLengthStable) {
  double worst = 0.0;
  for (const auto& item : *heldout_) {
    const auto symbols = encode(model_->codebook, normalized_features(*model_, item.audio));
    std::vector<int> doubled;
    for (int s : symbols) {
      doubled.push_back(s);
      doubled.push_back(s);
    }
    const auto a = hmm_scores(*model_, symbols);
    const auto b = hmm_scores(*model_, doubled);
    for (std::size_t w = 0; w < a.size(); ++w) worst = std::max(worst, std::abs(a[w] - b[w]));
  }
  EXPECT_LT(worst, 0.5);
}

// A left-right word model has no path back to its first state, so the
// second copy of a self-concatenated sequence is forced through the final
// state's emissions. The matching word's score drops and stays finite.
TEST_F(TrainedModel, SelfConcatenationIsPenalizedButFinite) {
  for (const auto& item : *heldout_) {
    const auto symbols = encode(model_->codebook, normalized_features(*model_, item.audio));
    std::vector<int> twice = symbols;
    twice.insert(twice.end(), symbols.begin(), symbols.end());
    const auto a = hmm_scores(*model_, symbols);
    const auto b = hmm_scores(*model_, twice);
    for (double v : b) EXPECT_TRUE(std::isfinite(v));
    const auto w = static_cast<std::size_t>(
        std::find(model_->vocabulary.begin(), model_->vocabulary.end(), item.keyword) - model_->vocabulary.begin());
    EXPECT_LT(b[w], a[w]) << item.source;
  }
}

TEST_F(TrainedModel, SaveLoadRoundTripIsExact) {
  TempDir dir("model");
  save_model(*model_, dir.path / "m.json");
  const WordModelSet loaded = load_model(dir.path / "m.json");
  EXPECT_EQ(loaded, *model_);
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& audio = (*heldout_)[i * 5].audio;
    const NBestList a = recognize(*model_, audio, 5);
    const NBestList b = recognize(loaded, audio, 5);
    ASSERT_EQ(a.entries.size(), b.entries.size());
    for (std::size_t k = 0; k < a.entries.size(); ++k) {
      EXPECT_EQ(a.entries[k].keyword, b.entries[k].keyword);
      EXPECT_EQ(a.entries[k].hmm_score, b.entries[k].hmm_score);
      EXPECT_EQ(a.entries[k].ann_posterior, b.entries[k].ann_posterior);
      EXPECT_EQ(a.entries[k].combined_score, b.entries[k].combined_score);
    }
  }
  save_model(loaded, dir.path / "again.json");
  EXPECT_EQ(read_file(dir.path / "m.json"), read_file(dir.path / "again.json"));
}

TEST_F(TrainedModel, ModelFileHasTheDocumentedFields) {
  const auto doc = nlohmann::json::parse(model_to_json(*model_));
  for (const char* key : {"version", "vocabulary", "frontend_config", "normalization", "codebook", "hmms", "mlp",
                          "lambda", "theta", "seed"}) {
    EXPECT_TRUE(doc.contains(key)) << key;
  }
  EXPECT_EQ(doc["version"], 1);
  EXPECT_EQ(doc["hmms"].size(), 10u);
  EXPECT_TRUE(doc["hmms"].contains("seven"));
  EXPECT_EQ(doc["theta"].get<double>(), model_->config.theta);
}

TEST_F(TrainedModel, LoadRejectsBadFiles) {
  TempDir dir("model");
  auto doc = nlohmann::json::parse(model_to_json(*model_));
  doc["version"] = 999;
  std::ofstream(dir.path / "v999.json") << doc.dump();
  EXPECT_EQ(code_of([&] { load_model(dir.path / "v999.json"); }), ErrorCode::VersionMismatch);

  const std::string text = model_to_json(*model_);
  std::ofstream(dir.path / "trunc.json") << text.substr(0, text.size() / 2);
  EXPECT_EQ(code_of([&] { load_model(dir.path / "trunc.json"); }), ErrorCode::CorruptModel);

  doc = nlohmann::json::parse(text);
  doc["hmms"]["three"]["A"][0][0] = 0.9;  // row no longer sums to 1
  std::ofstream(dir.path / "bad_row.json") << doc.dump();
  EXPECT_EQ(code_of([&] { load_model(dir.path / "bad_row.json"); }), ErrorCode::CorruptModel);

  doc = nlohmann::json::parse(text);
  doc["hmms"].erase("five");
  std::ofstream(dir.path / "missing.json") << doc.dump();
  EXPECT_EQ(code_of([&] { load_model(dir.path / "missing.json"); }), ErrorCode::CorruptModel);

  EXPECT_EQ(code_of([&] { load_model(dir.path / "absent.json"); }), ErrorCode::IoError);
}

// ---------------------------------------------------------------------------

TEST(TrainVocabulary, SameCorpusAndSeedGiveIdenticalFiles) {
  const auto corpus = testing::synth_corpus(1, 3, 1, 42, {"one", "two", "three"});
  TrainConfig config;
  config.codebook_size = 16;
  TempDir dir("det");
  save_model(train_vocabulary(std::span<const LabeledAudio>(corpus), config), dir.path / "a.json");
  save_model(train_vocabulary(std::span<const LabeledAudio>(corpus), config), dir.path / "b.json");
  EXPECT_EQ(read_file(dir.path / "a.json"), read_file(dir.path / "b.json"));
  config.seed = 43;
  save_model(train_vocabulary(std::span<const LabeledAudio>(corpus), config), dir.path / "c.json");
  EXPECT_NE(read_file(dir.path / "a.json"), read_file(dir.path / "c.json"));
}

TEST(TrainVocabulary, Preconditions) {
  TrainConfig config;
  config.codebook_size = 8;
  auto corpus = testing::synth_corpus(1, 3, 1, 42, {"one", "two"});
  corpus.pop_back();  // "two" keeps 2 examples
  EXPECT_EQ(code_of([&] { train_vocabulary(std::span<const LabeledAudio>(corpus), config); }),
            ErrorCode::InsufficientExamples);

  const auto one_speaker = testing::synth_corpus(4, 4, 3, 42, {"one", "two"});
  EXPECT_EQ(code_of([&] { train_vocabulary(std::span<const LabeledAudio>(one_speaker), config); }),
            ErrorCode::InsufficientSpeakers);

  EXPECT_EQ(code_of([&] { train_vocabulary(std::span<const LabeledAudio>(), config); }),
            ErrorCode::EmptyVocabulary);

  auto silent = testing::synth_corpus(1, 3, 1, 42, {"one"});
  silent[1].audio.samples.assign(8000, 0.0);
  try {
    train_vocabulary(std::span<const LabeledAudio>(silent), config);
    ADD_FAILURE() << "expected NoSpeech";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoSpeech);
    EXPECT_NE(std::string(e.what()).find(silent[1].source), std::string::npos);
  }
}

TEST(CombineScores, WeightAlgebra) {
  EXPECT_EQ(combine_scores(-3.0, 0.2, 0.0), -3.0);
  EXPECT_EQ(combine_scores(-3.0, 0.2, 1.0), std::log(0.2 + 1e-12));
  EXPECT_DOUBLE_EQ(combine_scores(-3.0, 0.2, 0.5), 0.5 * -3.0 + 0.5 * std::log(0.2 + 1e-12));
  EXPECT_TRUE(std::isfinite(combine_scores(-3.0, 0.0, 0.5)));
}

}  // namespace
}  // namespace isoword
