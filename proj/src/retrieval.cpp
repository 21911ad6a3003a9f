#include "isoword/retrieval.hpp"

#include <fstream>
#include <locale>

#include <fmt/format.h>
#include <json.hpp>

#include "isoword/error.hpp"

namespace isoword {

using nlohmann::json;

namespace {

const std::ctype<wchar_t>& unicode_ctype() {
  static const std::locale locale = [] {
    try {
      return std::locale("C.UTF-8");
    } catch (const std::runtime_error&) {
      return std::locale::classic();
    }
  }();
  return std::use_facet<std::ctype<wchar_t>>(locale);
}

std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  std::size_t i = 0;
  auto bad = [] { fail(ErrorCode::InvalidArgument, "keyword is not valid UTF-8"); };
  while (i < s.size()) {
    const auto lead = static_cast<unsigned char>(s[i]);
    std::size_t extra = 0;
    char32_t cp = 0;
    if (lead < 0x80) {
      cp = lead;
    } else if ((lead & 0xe0) == 0xc0) {
      cp = lead & 0x1f;
      extra = 1;
    } else if ((lead & 0xf0) == 0xe0) {
      cp = lead & 0x0f;
      extra = 2;
    } else if ((lead & 0xf8) == 0xf0) {
      cp = lead & 0x07;
      extra = 3;
    } else {
      bad();
    }
    if (i + extra >= s.size()) bad();
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto cont = static_cast<unsigned char>(s[i + k]);
      if ((cont & 0xc0) != 0x80) bad();
      cp = (cp << 6) | (cont & 0x3f);
    }
    out.push_back(cp);
    i += extra + 1;
  }
  return out;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  } else {
    out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
  }
}

void check_record(const Record& record) {
  if (record.kind == RecordKind::Picture &&
      (!record.picture_path || record.picture_path->empty() || record.description.empty())) {
    fail(ErrorCode::InvalidPictureRecord,
         fmt::format("picture record {} needs a picture path and a description", record.id));
  }
}

json record_to_json(const Record& r) {
  json j = {{"id", r.id},
            {"keyword", r.keyword},
            {"title", r.title},
            {"body", r.body},
            {"kind", r.kind == RecordKind::Picture ? "picture" : "text"}};
  if (r.picture_path) j["picture_path"] = *r.picture_path;
  if (!r.description.empty()) j["description"] = r.description;
  return j;
}

Record record_from_json(const json& j) {
  Record r;
  r.id = j.at("id").get<std::int64_t>();
  r.keyword = j.at("keyword").get<std::string>();
  r.title = j.at("title").get<std::string>();
  r.body = j.at("body").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "text") {
    r.kind = RecordKind::Text;
  } else if (kind == "picture") {
    r.kind = RecordKind::Picture;
  } else {
    throw Error(ErrorCode::CorruptStore, "unknown kind '" + kind + "'");
  }
  if (j.contains("picture_path")) r.picture_path = j.at("picture_path").get<std::string>();
  if (j.contains("description")) r.description = j.at("description").get<std::string>();
  return r;
}

}  // namespace

std::string normalize_keyword(std::string_view raw) {
  const auto& ctype = unicode_ctype();
  std::string out;
  bool pending_space = false;
  for (char32_t cp : decode_utf8(raw)) {
    const auto wc = static_cast<wchar_t>(cp);
    if (ctype.is(std::ctype_base::space, wc)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    append_utf8(out, static_cast<char32_t>(ctype.tolower(wc)));
  }
  if (out.empty()) fail(ErrorCode::EmptyKeyword, "keyword is empty after normalization");
  return out;
}

std::string build_query(std::string_view keyword) {
  const std::string normalized = normalize_keyword(keyword);
  std::string escaped;
  for (char c : normalized) {
    if (c == '\'') escaped.push_back('\'');
    escaped.push_back(c);
  }
  return "SELECT * FROM records WHERE keyword = '" + escaped + "';";
}

void RecordStore::index_record(Record record) {
  if (by_id_.contains(record.id)) fail(ErrorCode::DuplicateId, fmt::format("record id {} already stored", record.id));
  const std::string key = normalize_keyword(record.keyword);
  check_record(record);
  by_id_.emplace(record.id, records_.size());
  index_[key].push_back(record.id);
  records_.push_back(std::move(record));
}

std::vector<Record> RecordStore::search(std::string_view keyword) const {
  const auto it = index_.find(normalize_keyword(keyword));
  std::vector<Record> out;
  if (it == index_.end()) return out;
  out.reserve(it->second.size());
  for (std::int64_t id : it->second) out.push_back(records_[by_id_.at(id)]);
  return out;
}

const Record* RecordStore::find(std::int64_t id) const {
  const auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &records_[it->second];
}

Presentation render_result(const Record& record) {
  Presentation out;
  if (record.kind == RecordKind::Picture) {
    out.display_text = record.title + "\n" + record.description;
    out.speakable_text = record.title + ". " + record.description;
    out.picture_path = record.picture_path;
  } else {
    out.display_text = record.title + "\n" + record.body;
    out.speakable_text = record.title + ". " + record.body;
  }
  return out;
}

RecordStore read_store(std::istream& in) {
  RecordStore store;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      store.index_record(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::CorruptStore, fmt::format("line {}: {}", number, e.what()));
    } catch (const Error& e) {
      throw Error(ErrorCode::CorruptStore, fmt::format("line {}: {}", number, e.what()));
    }
  }
  if (in.bad()) fail(ErrorCode::IoError, "error while reading the store");
  return store;
}

void write_store(const RecordStore& store, std::ostream& out) {
  for (const auto& record : store.records()) out << record_to_json(record).dump() << '\n';
}

RecordStore load_store(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  return read_store(in);
}

void save_store(const RecordStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  write_store(store, out);
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

}  // namespace isoword
