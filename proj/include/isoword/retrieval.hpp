#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace isoword {

enum class RecordKind { Text, Picture };

struct Record {
  std::int64_t id = 0;
  std::string keyword;
  std::string title;
  std::string body;
  RecordKind kind = RecordKind::Text;
  std::optional<std::string> picture_path;  // required for pictures
  std::string description;                  // spoken text for pictures

  friend bool operator==(const Record&, const Record&) = default;
};

// Trim, lowercase (Unicode simple case mapping), collapse whitespace runs.
// Throws EmptyKeyword when nothing is left.
std::string normalize_keyword(std::string_view raw);

// SELECT * FROM records WHERE keyword = '<normalized>'; with quotes doubled.
std::string build_query(std::string_view keyword);

// Records with an inverted index from normalized keyword to ids in
// insertion order. Mutation needs exclusive access; const access is safe to
// share between threads.
class RecordStore {
 public:
  // Throws DuplicateId, EmptyKeyword or InvalidPictureRecord.
  void index_record(Record record);

  // Exact match on the normalized keyword, insertion order.
  std::vector<Record> search(std::string_view keyword) const;

  const std::vector<Record>& records() const noexcept { return records_; }
  const std::map<std::string, std::vector<std::int64_t>>& index() const noexcept { return index_; }
  std::size_t size() const noexcept { return records_.size(); }
  const Record* find(std::int64_t id) const;

 private:
  std::vector<Record> records_;
  std::unordered_map<std::int64_t, std::size_t> by_id_;
  std::map<std::string, std::vector<std::int64_t>> index_;
};

struct Presentation {
  std::string display_text;
  std::string speakable_text;
  std::optional<std::string> picture_path;
};

Presentation render_result(const Record& record);

// One JSON object per line. Blank lines are ignored; anything else that does
// not parse into a valid record raises CorruptStore naming the line.
RecordStore read_store(std::istream& in);
void write_store(const RecordStore& store, std::ostream& out);
RecordStore load_store(const std::filesystem::path& path);
void save_store(const RecordStore& store, const std::filesystem::path& path);

}  // namespace isoword
