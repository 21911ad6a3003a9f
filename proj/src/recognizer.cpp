#include "isoword/recognizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <iterator>
#include <limits>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "isoword/error.hpp"
#include "isoword/log.hpp"
#include "isoword/rng.hpp"

namespace isoword {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Matrix normalize_copy(const Normalizer& normalizer, const Matrix& raw) {
  Matrix out = raw;
  normalizer.apply(out);
  return out;
}

// Indices sorted by descending score; equal scores keep vocabulary order.
std::vector<std::size_t> rank_descending(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// JSON encoding

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

Matrix matrix_from_json(const json& rows) {
  Matrix m;
  for (const auto& row : rows) {
    const auto values = row.get<std::vector<double>>();
    if (m.rows() > 0 && values.size() != m.cols()) throw Error(ErrorCode::CorruptModel, "ragged matrix");
    m.append_row(values);
  }
  return m;
}

// Non-finite thresholds are legal configuration but not valid JSON numbers.
json real_to_json(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double real_from_json(const json& v) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw Error(ErrorCode::CorruptModel, "bad number '" + s + "'");
  }
  return v.get<double>();
}

json frontend_to_json(const FrontendConfig& c) {
  return {{"pre_emphasis_alpha", c.pre_emphasis_alpha},
          {"frame_len_ms", c.frame_len_ms},
          {"hop_ms", c.hop_ms},
          {"lpc_order", c.lpc_order},
          {"n_cepstra", c.n_cepstra},
          {"energy_ratio", c.energy_ratio},
          {"min_speech_frames", c.min_speech_frames},
          {"zero_energy_floor", c.zero_energy_floor}};
}

FrontendConfig frontend_from_json(const json& j) {
  FrontendConfig c;
  c.pre_emphasis_alpha = j.at("pre_emphasis_alpha").get<double>();
  c.frame_len_ms = j.at("frame_len_ms").get<int>();
  c.hop_ms = j.at("hop_ms").get<int>();
  c.lpc_order = j.at("lpc_order").get<int>();
  c.n_cepstra = j.at("n_cepstra").get<int>();
  c.energy_ratio = j.at("energy_ratio").get<double>();
  c.min_speech_frames = j.at("min_speech_frames").get<int>();
  c.zero_energy_floor = j.at("zero_energy_floor").get<double>();
  return c;
}

json ann_config_to_json(const AnnTrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"momentum", c.momentum}, {"epochs", c.epochs},
          {"seed", c.seed},                   {"patience", c.patience}, {"hidden", c.hidden},
          {"init_range", c.init_range}};
}

AnnTrainConfig ann_config_from_json(const json& j) {
  AnnTrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.patience = j.at("patience").get<int>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.init_range = j.at("init_range").get<double>();
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------

void WordModelSet::validate() const {
  auto corrupt = [](const std::string& what) { throw Error(ErrorCode::CorruptModel, what); };
  if (version != kModelFormatVersion) {
    throw Error(ErrorCode::VersionMismatch, fmt::format("model version {}", version));
  }
  if (vocabulary.empty()) corrupt("empty vocabulary");
  if (std::set<std::string>(vocabulary.begin(), vocabulary.end()).size() != vocabulary.size()) {
    corrupt("duplicate vocabulary entries");
  }
  try {
    config.frontend.validate();
  } catch (const Error& e) {
    corrupt(std::string("frontend config: ") + e.what());
  }
  const std::size_t dim = config.frontend.feature_dim();
  if (normalization.mean.size() != dim || normalization.scale.size() != dim) {
    corrupt("normalization dimension does not match the frontend");
  }
  if (!all_finite(normalization.mean) || !all_finite(normalization.scale)) corrupt("non-finite normalization");
  if (codebook.size() == 0 || codebook.dim() != dim) corrupt("codebook shape does not match the frontend");
  if (!all_finite(codebook.centroids.data())) corrupt("non-finite codebook centroid");
  if (hmms.size() != vocabulary.size()) corrupt("one HMM per keyword required");
  for (std::size_t w = 0; w < hmms.size(); ++w) {
    if (auto bad = hmms[w].find_violation()) corrupt("HMM '" + vocabulary[w] + "': " + *bad);
    if (hmms[w].symbols() != codebook.size()) corrupt("HMM '" + vocabulary[w] + "' symbol count mismatch");
  }
  if (config.pool_segments == 0) corrupt("pool_segments must be positive");
  if (mlp.inputs() != config.pool_segments * dim || mlp.classes() != vocabulary.size() ||
      mlp.b1.size() != mlp.hidden() || mlp.b2.size() != mlp.classes() || mlp.w2.cols() != mlp.hidden()) {
    corrupt("MLP shape does not match vocabulary and pooling");
  }
  if (!all_finite(mlp.w1.data()) || !all_finite(mlp.b1) || !all_finite(mlp.w2.data()) ||
      !all_finite(mlp.b2)) {
    corrupt("non-finite MLP parameter");
  }
  if (!(config.lambda >= 0.0 && config.lambda <= 1.0)) corrupt("lambda must lie in [0, 1]");
  if (std::isnan(config.theta)) corrupt("theta is NaN");
}

WordModelSet train_vocabulary(std::span<const LabeledAudio> corpus, const TrainConfig& config,
                              TrainingReport* report) {
  config.frontend.validate();
  std::vector<std::string> vocabulary;
  std::set<int> speakers;
  for (const auto& item : corpus) {
    if (item.keyword.empty()) fail(ErrorCode::InvalidArgument, "empty keyword for " + item.source);
    if (std::find(vocabulary.begin(), vocabulary.end(), item.keyword) == vocabulary.end()) {
      vocabulary.push_back(item.keyword);
    }
    speakers.insert(item.speaker);
  }
  if (vocabulary.empty()) fail(ErrorCode::EmptyVocabulary, "training corpus is empty");
  std::vector<std::size_t> counts(vocabulary.size(), 0);
  std::vector<std::size_t> labels;
  labels.reserve(corpus.size());
  for (const auto& item : corpus) {
    const auto w = static_cast<std::size_t>(
        std::find(vocabulary.begin(), vocabulary.end(), item.keyword) - vocabulary.begin());
    labels.push_back(w);
    ++counts[w];
  }
  for (std::size_t w = 0; w < vocabulary.size(); ++w) {
    if (counts[w] < config.min_examples_per_keyword) {
      fail(ErrorCode::InsufficientExamples,
           fmt::format("keyword '{}' has {} utterances, need {}", vocabulary[w], counts[w],
                       config.min_examples_per_keyword));
    }
  }
  if (speakers.size() < config.min_speakers) {
    fail(ErrorCode::InsufficientSpeakers,
         fmt::format("{} distinct speakers, need {}", speakers.size(), config.min_speakers));
  }

  // (1) features
  std::vector<Matrix> features;
  features.reserve(corpus.size());
  Matrix stacked;
  for (const auto& item : corpus) {
    try {
      features.push_back(extract_features(item.audio, config.frontend).values);
    } catch (const Error& e) {
      throw Error(e.code(), item.source + ": " + e.what());
    }
    for (std::size_t t = 0; t < features.back().rows(); ++t) stacked.append_row(features.back().row(t));
  }

  // (2) normalization and codebook
  WordModelSet model;
  model.vocabulary = vocabulary;
  model.config = config;
  model.normalization = Normalizer::fit(stacked);
  model.normalization.apply(stacked);
  for (auto& m : features) model.normalization.apply(m);
  model.codebook = train_codebook(stacked, config.codebook_size, mix_seed(config.seed, 1));
  logger().debug("codebook: {} centroids, distortion {:.6f}", model.codebook.size(),
                 model.codebook.distortion);

  // (3) one left-right HMM per keyword; runs are independent
  std::vector<std::vector<std::vector<int>>> sequences(vocabulary.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    sequences[labels[i]].push_back(encode(model.codebook, features[i]));
  }
  BaumWelchOptions bw;
  bw.max_iterations = config.bw_max_iterations;
  bw.tolerance = config.bw_tolerance;
  std::vector<std::future<BaumWelchResult>> jobs;
  for (std::size_t w = 0; w < vocabulary.size(); ++w) {
    jobs.push_back(std::async(std::launch::async, [&, w] {
      const DiscreteHmm init =
          init_left_right(config.hmm_states, config.codebook_size, mix_seed(config.seed, 100 + w));
      return baum_welch(init, sequences[w], bw);
    }));
  }
  TrainingReport local;
  for (std::size_t w = 0; w < vocabulary.size(); ++w) {
    BaumWelchResult result = jobs[w].get();
    model.hmms.push_back(std::move(result.hmm));
    local.keywords.push_back({vocabulary[w], counts[w], result.trace.log_likelihoods.back(),
                              result.trace.iterations, result.trace.converged});
  }

  // (4) rescoring MLP on pooled utterance vectors
  std::vector<Example> examples;
  examples.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    examples.push_back({pool_utterance(features[i], config.pool_segments), static_cast<int>(labels[i])});
  }
  AnnTrainConfig ann = config.ann;
  ann.seed = mix_seed(config.seed, ann.seed);
  const AnnTrainResult trained = train_ann(examples, vocabulary.size(), ann);
  model.mlp = trained.mlp;

  local.codebook_distortion = model.codebook.distortion;
  local.ann_final_loss = mean_cross_entropy(model.mlp, examples);
  local.ann_best_epoch = trained.best_epoch;
  local.ann_heldout_loss = trained.best_epoch > 0
                               ? trained.heldout_loss[static_cast<std::size_t>(trained.best_epoch - 1)]
                               : std::numeric_limits<double>::quiet_NaN();
  if (report != nullptr) *report = std::move(local);
  model.validate();
  return model;
}

WordModelSet train_vocabulary(std::span<const CorpusEntry> corpus, const TrainConfig& config,
                              TrainingReport* report) {
  std::vector<LabeledAudio> loaded;
  loaded.reserve(corpus.size());
  for (const auto& entry : corpus) {
    LabeledAudio item;
    try {
      item.audio = read_wav(entry.wav);
    } catch (const Error& e) {
      throw Error(e.code(), entry.wav.string() + ": " + e.what());
    }
    item.keyword = entry.keyword;
    item.speaker = entry.speaker;
    item.source = entry.wav.string();
    loaded.push_back(std::move(item));
  }
  return train_vocabulary(std::span<const LabeledAudio>(loaded), config, report);
}

// ---------------------------------------------------------------------------

Matrix normalized_features(const WordModelSet& model, const AudioBuffer& audio) {
  return normalize_copy(model.normalization, extract_features(audio, model.config.frontend).values);
}

std::vector<double> hmm_scores(const WordModelSet& model, std::span<const int> symbols) {
  if (symbols.empty()) fail(ErrorCode::EmptyInput, "no frames to score");
  std::vector<double> scores(model.hmms.size());
  const auto frames = static_cast<double>(symbols.size());
  for (std::size_t w = 0; w < model.hmms.size(); ++w) {
    scores[w] = viterbi(model.hmms[w], symbols).log_score / frames;
  }
  return scores;
}

double combine_scores(double hmm_score, double posterior, double lambda) {
  const double ann_term = std::log(posterior + kPosteriorOffset);
  if (lambda == 0.0) return hmm_score;
  if (lambda == 1.0) return ann_term;
  return (1.0 - lambda) * hmm_score + lambda * ann_term;
}

NBestList recognize_features(const WordModelSet& model, const Matrix& normalized, std::size_t n) {
  if (model.vocabulary.empty()) fail(ErrorCode::EmptyVocabulary, "model has no keywords");
  if (n == 0) fail(ErrorCode::InvalidArgument, "N-best size must be at least 1");
  const std::vector<int> symbols = encode(model.codebook, normalized);
  const std::vector<double> scores = hmm_scores(model, symbols);
  const std::vector<double> posteriors =
      mlp_forward(model.mlp, pool_utterance(normalized, model.config.pool_segments));

  const std::vector<std::size_t> fast_match = rank_descending(scores);
  const std::size_t keep = std::min(n, fast_match.size());
  std::vector<std::size_t> candidates(fast_match.begin(), fast_match.begin() + static_cast<std::ptrdiff_t>(keep));
  // Re-ranking is stable on vocabulary index, not on fast-match rank.
  std::sort(candidates.begin(), candidates.end());

  NBestList list;
  list.frames = symbols.size();
  for (std::size_t w : candidates) {
    list.entries.push_back({model.vocabulary[w], w, scores[w], posteriors[w],
                            combine_scores(scores[w], posteriors[w], model.config.lambda)});
  }
  std::stable_sort(list.entries.begin(), list.entries.end(),
                   [](const NBestEntry& a, const NBestEntry& b) { return a.combined_score > b.combined_score; });
  return list;
}

NBestList recognize(const WordModelSet& model, const AudioBuffer& audio, std::size_t n) {
  if (model.vocabulary.empty()) fail(ErrorCode::EmptyVocabulary, "model has no keywords");
  return recognize_features(model, normalized_features(model, audio), n);
}

Decision decide(const NBestList& list, double theta) {
  if (list.entries.empty()) fail(ErrorCode::InvalidArgument, "cannot decide on an empty N-best list");
  const NBestEntry& top = list.entries.front();
  return {top.combined_score >= theta, top.keyword, top.combined_score};
}

// ---------------------------------------------------------------------------

std::string model_to_json(const WordModelSet& model) {
  const TrainConfig& c = model.config;
  json hmms = json::object();
  for (std::size_t w = 0; w < model.vocabulary.size(); ++w) {
    const DiscreteHmm& hmm = model.hmms[w];
    hmms[model.vocabulary[w]] = {{"pi", hmm.pi},
                                 {"A", matrix_to_json(hmm.transitions)},
                                 {"B", matrix_to_json(hmm.emissions)},
                                 {"left_right", hmm.left_right}};
  }
  json doc = {
      {"version", model.version},
      {"vocabulary", model.vocabulary},
      {"frontend_config", frontend_to_json(c.frontend)},
      {"normalization", {{"mean", model.normalization.mean}, {"scale", model.normalization.scale}}},
      {"codebook",
       {{"distortion", model.codebook.distortion}, {"centroids", matrix_to_json(model.codebook.centroids)}}},
      {"hmms", hmms},
      {"mlp",
       {{"w1", matrix_to_json(model.mlp.w1)},
        {"b1", model.mlp.b1},
        {"w2", matrix_to_json(model.mlp.w2)},
        {"b2", model.mlp.b2}}},
      {"pool_segments", c.pool_segments},
      {"lambda", real_to_json(c.lambda)},
      {"theta", real_to_json(c.theta)},
      {"seed", c.seed},
      {"training",
       {{"codebook_size", c.codebook_size},
        {"hmm_states", c.hmm_states},
        {"bw_max_iterations", c.bw_max_iterations},
        {"bw_tolerance", c.bw_tolerance},
        {"min_examples_per_keyword", c.min_examples_per_keyword},
        {"min_speakers", c.min_speakers},
        {"ann", ann_config_to_json(c.ann)}}},
  };
  return doc.dump(1) + "\n";
}

WordModelSet model_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptModel, std::string("unparseable model: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("version") || !doc["version"].is_number_integer()) {
    throw Error(ErrorCode::CorruptModel, "model has no version field");
  }
  const int version = doc["version"].get<int>();
  if (version != kModelFormatVersion) {
    throw Error(ErrorCode::VersionMismatch,
                fmt::format("model version {} (this build reads version {})", version, kModelFormatVersion));
  }

  WordModelSet model;
  try {
    model.version = version;
    model.vocabulary = doc.at("vocabulary").get<std::vector<std::string>>();
    TrainConfig& c = model.config;
    c.frontend = frontend_from_json(doc.at("frontend_config"));
    model.normalization.mean = doc.at("normalization").at("mean").get<std::vector<double>>();
    model.normalization.scale = doc.at("normalization").at("scale").get<std::vector<double>>();
    model.codebook.distortion = doc.at("codebook").at("distortion").get<double>();
    model.codebook.centroids = matrix_from_json(doc.at("codebook").at("centroids"));
    const json& hmms = doc.at("hmms");
    for (const auto& word : model.vocabulary) {
      const json& h = hmms.at(word);
      DiscreteHmm hmm;
      hmm.pi = h.at("pi").get<std::vector<double>>();
      hmm.transitions = matrix_from_json(h.at("A"));
      hmm.emissions = matrix_from_json(h.at("B"));
      hmm.left_right = h.at("left_right").get<bool>();
      model.hmms.push_back(std::move(hmm));
    }
    if (hmms.size() != model.vocabulary.size()) throw Error(ErrorCode::CorruptModel, "extra HMMs in model");
    const json& mlp = doc.at("mlp");
    model.mlp.w1 = matrix_from_json(mlp.at("w1"));
    model.mlp.b1 = mlp.at("b1").get<std::vector<double>>();
    model.mlp.w2 = matrix_from_json(mlp.at("w2"));
    model.mlp.b2 = mlp.at("b2").get<std::vector<double>>();
    c.pool_segments = doc.at("pool_segments").get<std::size_t>();
    c.lambda = real_from_json(doc.at("lambda"));
    c.theta = real_from_json(doc.at("theta"));
    c.seed = doc.at("seed").get<std::uint64_t>();
    const json& training = doc.at("training");
    c.codebook_size = training.at("codebook_size").get<std::size_t>();
    c.hmm_states = training.at("hmm_states").get<std::size_t>();
    c.bw_max_iterations = training.at("bw_max_iterations").get<int>();
    c.bw_tolerance = training.at("bw_tolerance").get<double>();
    c.min_examples_per_keyword = training.at("min_examples_per_keyword").get<std::size_t>();
    c.min_speakers = training.at("min_speakers").get<std::size_t>();
    c.ann = ann_config_from_json(training.at("ann"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptModel, std::string("malformed model: ") + e.what());
  }
  model.validate();
  return model;
}

void save_model(const WordModelSet& model, const std::filesystem::path& path) {
  model.validate();
  const std::string text = model_to_json(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

WordModelSet load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return model_from_json(text);
}

}  // namespace isoword
