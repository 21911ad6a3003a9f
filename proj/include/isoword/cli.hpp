#pragma once

#include <cstddef>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "isoword/recognizer.hpp"

namespace isoword::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitFault = 2,
  kExitRejected = 3,
  kExitNoMatch = 4,
};

// manifest.tsv: path<TAB>keyword<TAB>speaker, no header. Paths are resolved
// relative to the manifest's directory.
std::vector<CorpusEntry> read_manifest(const std::filesystem::path& path);

struct EvalReport {
  std::vector<std::string> labels;             // true keywords, vocabulary order first
  std::vector<std::string> columns;            // vocabulary followed by "REJECTED"
  std::vector<std::vector<std::size_t>> confusion;  // labels x columns
  std::vector<std::size_t> totals;             // per label
  std::vector<std::size_t> correct;            // accepted and right, per label
  std::size_t total = 0;
  std::size_t total_correct = 0;
  std::size_t top1_correct = 0;                // right top-1 regardless of rejection
  std::size_t rejected = 0;

  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(total_correct) / total; }
  double top1_accuracy() const { return total == 0 ? 0.0 : static_cast<double>(top1_correct) / total; }
};

EvalReport evaluate(const WordModelSet& model, const std::vector<CorpusEntry>& corpus, std::size_t nbest);

// Entry point shared by the isoword binary and the tests.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace isoword::cli
