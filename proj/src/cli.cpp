#include "isoword/cli.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "isoword/error.hpp"
#include "isoword/log.hpp"
#include "isoword/retrieval.hpp"
#include "isoword/rng.hpp"

namespace isoword::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<CorpusEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  std::vector<CorpusEntry> rows;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty()) {
      fail(ErrorCode::InvalidArgument, fmt::format("{}:{}: expected path<TAB>keyword<TAB>speaker",
                                                   path.string(), number));
    }
    CorpusEntry entry;
    entry.wav = fs::path(fields[0]).is_absolute() ? fs::path(fields[0]) : base / fields[0];
    entry.keyword = fields[1];
    try {
      std::size_t used = 0;
      entry.speaker = std::stoi(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidArgument, fmt::format("{}:{}: bad speaker id '{}'", path.string(), number, fields[2]));
    }
    rows.push_back(std::move(entry));
  }
  return rows;
}

EvalReport evaluate(const WordModelSet& model, const std::vector<CorpusEntry>& corpus, std::size_t nbest) {
  EvalReport report;
  report.labels = model.vocabulary;
  for (const auto& row : corpus) {
    if (std::find(report.labels.begin(), report.labels.end(), row.keyword) == report.labels.end()) {
      report.labels.push_back(row.keyword);
    }
  }
  report.columns = model.vocabulary;
  report.columns.push_back("REJECTED");
  report.confusion.assign(report.labels.size(), std::vector<std::size_t>(report.columns.size(), 0));
  report.totals.assign(report.labels.size(), 0);
  report.correct.assign(report.labels.size(), 0);
  const std::size_t rejected_column = report.columns.size() - 1;

  for (const auto& row : corpus) {
    const auto label = static_cast<std::size_t>(
        std::find(report.labels.begin(), report.labels.end(), row.keyword) - report.labels.begin());
    ++report.totals[label];
    ++report.total;
    std::size_t column = rejected_column;
    try {
      const NBestList list = recognize(model, read_wav(row.wav), nbest);
      const Decision decision = decide(list, model.config.theta);
      if (list.entries.front().keyword == row.keyword) ++report.top1_correct;
      if (decision.accepted) column = list.entries.front().vocabulary_index;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoSpeech) throw Error(e.code(), row.wav.string() + ": " + e.what());
      logger().info("{}: no speech detected, counted as rejected", row.wav.string());
    }
    ++report.confusion[label][column];
    if (column == rejected_column) {
      ++report.rejected;
    } else if (report.columns[column] == row.keyword) {
      ++report.correct[label];
      ++report.total_correct;
    }
  }
  return report;
}

namespace {

void print_eval(const EvalReport& report, std::ostream& out) {
  std::size_t width = 8;
  for (const auto& l : report.labels) width = std::max(width, l.size());
  for (const auto& c : report.columns) width = std::max(width, c.size());
  const int w = static_cast<int>(width) + 1;

  out << fmt::format("{:<{}}{:>8}{:>8}{:>10}\n", "keyword", w, "tests", "correct", "accuracy");
  for (std::size_t i = 0; i < report.labels.size(); ++i) {
    const double acc = report.totals[i] == 0 ? 0.0 : static_cast<double>(report.correct[i]) / report.totals[i];
    out << fmt::format("{:<{}}{:>8}{:>8}{:>10.4f}\n", report.labels[i], w, report.totals[i], report.correct[i], acc);
  }
  out << fmt::format("{:<{}}{:>8}{:>8}{:>10.4f}\n", "overall", w, report.total, report.total_correct,
                     report.accuracy());
  out << fmt::format("top-1 accuracy {:.4f}, rejected {}\n\n", report.top1_accuracy(), report.rejected);

  out << fmt::format("{:<{}}", "true\\hyp", w);
  for (const auto& c : report.columns) out << fmt::format("{:>{}}", c, w);
  out << '\n';
  for (std::size_t i = 0; i < report.labels.size(); ++i) {
    out << fmt::format("{:<{}}", report.labels[i], w);
    for (std::size_t n : report.confusion[i]) out << fmt::format("{:>{}}", n, w);
    out << '\n';
  }

  json per_keyword = json::object();
  json confusion = json::object();
  for (std::size_t i = 0; i < report.labels.size(); ++i) {
    per_keyword[report.labels[i]] = {{"tests", report.totals[i]}, {"correct", report.correct[i]}};
    json row = json::object();
    for (std::size_t c = 0; c < report.columns.size(); ++c) row[report.columns[c]] = report.confusion[i][c];
    confusion[report.labels[i]] = row;
  }
  const json summary = {{"command", "eval"},
                        {"total", report.total},
                        {"correct", report.total_correct},
                        {"accuracy", report.accuracy()},
                        {"top1_correct", report.top1_correct},
                        {"top1_accuracy", report.top1_accuracy()},
                        {"rejected", report.rejected},
                        {"per_keyword", per_keyword},
                        {"confusion", confusion}};
  out << summary.dump() << '\n';
}

void print_nbest(const NBestList& list, std::ostream& out) {
  out << fmt::format("{:<5}{:<16}{:>14}{:>16}{:>14}\n", "rank", "keyword", "hmm_score", "ann_posterior", "combined");
  for (std::size_t i = 0; i < list.entries.size(); ++i) {
    const auto& e = list.entries[i];
    out << fmt::format("{:<5}{:<16}{:>14.6f}{:>16.6f}{:>14.6f}\n", i + 1, e.keyword, e.hmm_score, e.ann_posterior,
                       e.combined_score);
  }
}

void print_records(const std::vector<Record>& records, std::ostream& out) {
  for (const auto& record : records) {
    const Presentation p = render_result(record);
    out << fmt::format("#{} {}\n", record.id, record.title);
    std::string display = p.display_text;
    for (std::size_t pos = display.find('\n'); pos != std::string::npos; pos = display.find('\n', pos + 1)) {
      display.insert(pos + 1, "           ");
    }
    out << "  display: " << display << '\n';
    out << "  speak: " << p.speakable_text << '\n';
    if (p.picture_path) out << "  picture: " << *p.picture_path << '\n';
  }
}

struct Options {
  // synth
  fs::path out_dir;
  std::vector<std::string> keywords;
  int speakers = 15;
  int reps = 2;
  std::optional<fs::path> lexicon;
  // shared
  std::uint64_t seed = 42;
  fs::path corpus;
  fs::path model;
  fs::path wav;
  fs::path store;
  fs::path dump_features;
  std::string keyword;
  std::size_t nbest = 5;
  std::optional<double> lambda;
  std::optional<double> theta;
};

int cmd_synth(const Options& opt, std::ostream& out) {
  const SynthLexicon lexicon = opt.lexicon ? SynthLexicon::load(*opt.lexicon) : SynthLexicon::builtin();
  const std::vector<std::string> keywords = opt.keywords.empty() ? lexicon.keywords() : opt.keywords;
  for (const auto& kw : keywords) lexicon.find(kw);
  fs::create_directories(opt.out_dir);

  std::ofstream manifest(opt.out_dir / "manifest.tsv", std::ios::trunc);
  if (!manifest) fail(ErrorCode::IoError, "cannot write manifest in " + opt.out_dir.string());
  std::size_t files = 0;
  for (std::size_t k = 0; k < keywords.size(); ++k) {
    for (int speaker = 1; speaker <= opt.speakers; ++speaker) {
      for (int rep = 1; rep <= opt.reps; ++rep) {
        SynthSpec spec;
        spec.keyword = keywords[k];
        spec.speaker_id = speaker;
        spec.seed = mix_seed(opt.seed, mix_seed(static_cast<std::uint64_t>(speaker),
                                                static_cast<std::uint64_t>(rep)));
        const std::string name = fmt::format("{}_s{:02}_r{}.wav", keywords[k], speaker, rep);
        write_wav(synth_word(lexicon, spec), opt.out_dir / name);
        manifest << name << '\t' << keywords[k] << '\t' << speaker << '\n';
        ++files;
      }
    }
  }
  if (!manifest) fail(ErrorCode::IoError, "manifest write failed");
  out << fmt::format("wrote {} files and manifest.tsv to {}\n", files, opt.out_dir.string());
  out << json{{"command", "synth"}, {"files", files}, {"keywords", keywords.size()},
              {"speakers", opt.speakers}, {"reps", opt.reps}, {"seed", opt.seed}}
             .dump()
      << '\n';
  return kExitOk;
}

int cmd_train(const Options& opt, std::ostream& out) {
  const std::vector<CorpusEntry> corpus = read_manifest(opt.corpus);
  TrainConfig config;
  config.seed = opt.seed;
  if (opt.lambda) config.lambda = *opt.lambda;
  if (opt.theta) config.theta = *opt.theta;
  TrainingReport report;
  const WordModelSet model = train_vocabulary(std::span<const CorpusEntry>(corpus), config, &report);
  save_model(model, opt.model);

  for (const auto& kw : report.keywords) {
    logger().info("{}: {} utterances, Baum-Welch log-likelihood {:.6f} after {} iterations{}", kw.keyword,
                  kw.utterances, kw.final_log_likelihood, kw.iterations, kw.converged ? " (converged)" : "");
  }
  logger().info("ANN final loss {:.6f} (best epoch {})", report.ann_final_loss, report.ann_best_epoch);

  out << fmt::format("trained {} keywords from {} utterances -> {}\n", model.vocabulary.size(), corpus.size(),
                     opt.model.string());
  json per_keyword = json::object();
  for (const auto& kw : report.keywords) per_keyword[kw.keyword] = kw.final_log_likelihood;
  out << json{{"command", "train"},
              {"keywords", model.vocabulary.size()},
              {"utterances", corpus.size()},
              {"codebook_distortion", report.codebook_distortion},
              {"bw_log_likelihood", per_keyword},
              {"ann_final_loss", report.ann_final_loss},
              {"seed", opt.seed}}
             .dump()
      << '\n';
  return kExitOk;
}

WordModelSet load_with_overrides(const Options& opt) {
  WordModelSet model = load_model(opt.model);
  if (opt.lambda) model.config.lambda = *opt.lambda;
  if (opt.theta) model.config.theta = *opt.theta;
  model.validate();
  return model;
}

int cmd_recognize(const Options& opt, std::ostream& out) {
  const WordModelSet model = load_with_overrides(opt);
  const AudioBuffer audio = read_wav(opt.wav);
  if (!opt.dump_features.empty()) write_feature_dump(extract_features(audio, model.config.frontend), opt.dump_features);
  const NBestList list = recognize(model, audio, opt.nbest);
  print_nbest(list, out);
  const Decision decision = decide(list, model.config.theta);
  if (decision.accepted) {
    out << "RESULT " << decision.keyword << '\n';
  } else {
    out << fmt::format("REJECTED {} {:.6f}\n", decision.keyword, decision.score);
  }
  out << json{{"command", "recognize"}, {"accepted", decision.accepted}, {"keyword", decision.keyword},
              {"score", decision.score}, {"frames", list.frames}}
             .dump()
      << '\n';
  return decision.accepted ? kExitOk : kExitRejected;
}

int cmd_query(const Options& opt, std::ostream& out) {
  const RecordStore store = load_store(opt.store);
  const std::string query = build_query(opt.keyword);
  logger().info("{}", query);
  out << query << '\n';
  const std::vector<Record> results = store.search(opt.keyword);
  const std::string normalized = normalize_keyword(opt.keyword);
  if (results.empty()) {
    out << "NO MATCH for '" << normalized << "'\n";
  } else {
    print_records(results, out);
  }
  out << json{{"command", "query"}, {"keyword", normalized}, {"matches", results.size()}}.dump() << '\n';
  return results.empty() ? kExitNoMatch : kExitOk;
}

int cmd_ask(const Options& opt, std::ostream& out) {
  const WordModelSet model = load_with_overrides(opt);
  const RecordStore store = load_store(opt.store);
  const AudioBuffer audio = read_wav(opt.wav);

  std::optional<Decision> decision;
  try {
    decision = decide(recognize(model, audio, opt.nbest), model.config.theta);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoSpeech) throw;
    logger().info("{}", e.what());
  }
  if (!decision || !decision->accepted) {
    if (decision) logger().info("best candidate '{}' scored {:.6f}", decision->keyword, decision->score);
    out << "ERROR: word not recognized\n";
    out << json{{"command", "ask"}, {"status", "rejected"}}.dump() << '\n';
    return kExitRejected;
  }

  const std::string query = build_query(decision->keyword);
  logger().info("{}", query);
  out << "RESULT " << decision->keyword << '\n' << query << '\n';
  const std::vector<Record> results = store.search(decision->keyword);
  if (results.empty()) {
    out << "ERROR: no information found for '" << normalize_keyword(decision->keyword) << "'\n";
    out << json{{"command", "ask"}, {"status", "no_match"}, {"keyword", decision->keyword}}.dump() << '\n';
    return kExitNoMatch;
  }
  print_records(results, out);
  out << json{{"command", "ask"}, {"status", "ok"}, {"keyword", decision->keyword}, {"matches", results.size()}}
             .dump()
      << '\n';
  return kExitOk;
}

int cmd_eval(const Options& opt, std::ostream& out, std::ostream& err) {
  const std::vector<CorpusEntry> corpus = read_manifest(opt.corpus);
  if (corpus.empty()) {
    err << "eval: manifest " << opt.corpus.string() << " has no rows\n";
    return kExitUsage;
  }
  const WordModelSet model = load_with_overrides(opt);
  print_eval(evaluate(model, corpus, opt.nbest), out);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Isolated-word keyword recognizer and keyword-indexed record store", "isoword"};
  app.require_subcommand(1);
  Options opt;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus");
  synth->add_option("--out", opt.out_dir, "Output directory")->required();
  synth->add_option("--keywords", opt.keywords, "Comma-separated keywords (default: whole lexicon)")
      ->delimiter(',');
  synth->add_option("--speakers", opt.speakers, "Speakers per keyword")->check(CLI::PositiveNumber);
  synth->add_option("--reps", opt.reps, "Repetitions per speaker")->check(CLI::PositiveNumber);
  synth->add_option("--seed", opt.seed, "Random seed");
  synth->add_option("--lexicon", opt.lexicon, "Lexicon JSON (default: built-in)")->check(CLI::ExistingFile);

  auto* train = app.add_subcommand("train", "Train a model from a corpus manifest");
  train->add_option("--corpus", opt.corpus, "manifest.tsv")->required()->check(CLI::ExistingFile);
  train->add_option("--out", opt.model, "Model file to write")->required();
  train->add_option("--seed", opt.seed, "Random seed");
  train->add_option("--lambda", opt.lambda, "Rescoring weight stored in the model")->check(CLI::Range(0.0, 1.0));
  train->add_option("--theta", opt.theta, "Rejection threshold stored in the model");

  auto* recognize_cmd = app.add_subcommand("recognize", "Recognize the keyword in a WAV file");
  recognize_cmd->add_option("--model", opt.model, "Model file")->required()->check(CLI::ExistingFile);
  recognize_cmd->add_option("--wav", opt.wav, "Input WAV")->required()->check(CLI::ExistingFile);
  recognize_cmd->add_option("--nbest", opt.nbest, "N-best list size")->check(CLI::PositiveNumber);
  recognize_cmd->add_option("--dump-features", opt.dump_features, "Write the feature matrix as text");
  recognize_cmd->add_option("--lambda", opt.lambda, "Override the rescoring weight")->check(CLI::Range(0.0, 1.0));
  recognize_cmd->add_option("--theta", opt.theta, "Override the rejection threshold");

  auto* query = app.add_subcommand("query", "Look up records by keyword");
  query->add_option("--store", opt.store, "Record store (JSON lines)")->required()->check(CLI::ExistingFile);
  query->add_option("--keyword", opt.keyword, "Keyword")->required();

  auto* ask = app.add_subcommand("ask", "Recognize a spoken keyword and retrieve its records");
  ask->add_option("--model", opt.model, "Model file")->required()->check(CLI::ExistingFile);
  ask->add_option("--store", opt.store, "Record store")->required()->check(CLI::ExistingFile);
  ask->add_option("--wav", opt.wav, "Input WAV")->required()->check(CLI::ExistingFile);
  ask->add_option("--nbest", opt.nbest, "N-best list size")->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("eval", "Evaluate a model on a corpus manifest");
  eval->add_option("--model", opt.model, "Model file")->required()->check(CLI::ExistingFile);
  eval->add_option("--corpus", opt.corpus, "manifest.tsv")->required()->check(CLI::ExistingFile);
  eval->add_option("--nbest", opt.nbest, "N-best list size")->check(CLI::PositiveNumber);
  eval->add_option("--lambda", opt.lambda, "Override the rescoring weight")->check(CLI::Range(0.0, 1.0));
  eval->add_option("--theta", opt.theta, "Override the rejection threshold");

  std::vector<std::string> argv_storage;
  argv_storage.emplace_back("isoword");
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_storage) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(opt, out);
    if (train->parsed()) return cmd_train(opt, out);
    if (recognize_cmd->parsed()) return cmd_recognize(opt, out);
    if (query->parsed()) return cmd_query(opt, out);
    if (ask->parsed()) return cmd_ask(opt, out);
    if (eval->parsed()) return cmd_eval(opt, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFault;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFault;
  }
  return kExitUsage;
}

}  // namespace isoword::cli
