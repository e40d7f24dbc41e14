#include "recdiff/dataio.h"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "recdiff/errors.h"
#include "recdiff/util.h"

namespace recdiff {

using nlohmann::json;

namespace {

std::string line_prefix(std::size_t line) { return "line " + std::to_string(line) + ": "; }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        current.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        current.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(trim(current));
  return fields;
}

std::int64_t parse_timestamp(const std::string& s, std::size_t line) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec == std::errc() && ptr == s.data() + s.size()) return v;
  // Accept real-valued timestamps by truncation.
  try {
    std::size_t pos = 0;
    const double d = std::stod(s, &pos);
    if (pos == s.size() && std::isfinite(d)) return static_cast<std::int64_t>(d);
  } catch (const std::exception&) {
  }
  throw DataError(line_prefix(line) + "invalid timestamp '" + s + "'");
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string line;
  std::istringstream in(text);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<Interaction> parse_csv(const std::string& text) {
  std::vector<Interaction> rows;
  auto lines = split_lines(text);
  std::size_t header_line = 0;
  while (header_line < lines.size() && trim(lines[header_line]).empty()) ++header_line;
  if (header_line == lines.size()) return rows;

  auto header = split_csv_line(lines[header_line]);
  auto column = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
  };
  const int user_col = column("user");
  const int item_col = column("item");
  const int ts_col = column("timestamp");
  if (user_col < 0) throw DataError(line_prefix(header_line + 1) + "header lacks column user");
  if (item_col < 0) throw DataError(line_prefix(header_line + 1) + "header lacks column item");

  for (std::size_t i = header_line + 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const std::size_t line_no = i + 1;
    auto fields = split_csv_line(lines[i]);
    auto field = [&](int col) -> std::string {
      return col >= 0 && col < static_cast<int>(fields.size()) ? fields[col] : std::string();
    };
    Interaction row;
    row.user_id = field(user_col);
    row.item_id = field(item_col);
    if (row.user_id.empty()) throw DataError(line_prefix(line_no) + "missing field user");
    if (row.item_id.empty()) throw DataError(line_prefix(line_no) + "missing field item");
    const std::string ts = field(ts_col);
    row.timestamp = ts.empty() ? static_cast<std::int64_t>(rows.size()) : parse_timestamp(ts, line_no);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string json_scalar_to_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number()) return v.dump();
  return {};
}

std::vector<Interaction> parse_jsonl(const std::string& text) {
  std::vector<Interaction> rows;
  auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const std::size_t line_no = i + 1;
    json obj;
    try {
      obj = json::parse(lines[i]);
    } catch (const json::parse_error&) {
      throw DataError(line_prefix(line_no) + "malformed JSON");
    }
    if (!obj.is_object()) throw DataError(line_prefix(line_no) + "expected a JSON object");
    Interaction row;
    if (obj.contains("user")) row.user_id = json_scalar_to_string(obj["user"]);
    if (obj.contains("item")) row.item_id = json_scalar_to_string(obj["item"]);
    if (row.user_id.empty()) throw DataError(line_prefix(line_no) + "missing field user");
    if (row.item_id.empty()) throw DataError(line_prefix(line_no) + "missing field item");
    if (obj.contains("timestamp") && !obj["timestamp"].is_null()) {
      const auto& ts = obj["timestamp"];
      if (ts.is_number()) {
        row.timestamp = ts.is_number_integer() ? ts.get<std::int64_t>()
                                               : static_cast<std::int64_t>(ts.get<double>());
      } else {
        row.timestamp = parse_timestamp(json_scalar_to_string(ts), line_no);
      }
    } else {
      row.timestamp = static_cast<std::int64_t>(rows.size());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// UserID::ItemID::Rating::Timestamp
std::vector<Interaction> parse_dat(const std::string& text) {
  std::vector<Interaction> rows;
  auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const std::size_t line_no = i + 1;
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
      auto pos = lines[i].find("::", start);
      parts.push_back(trim(lines[i].substr(start, pos == std::string::npos ? pos : pos - start)));
      if (pos == std::string::npos) break;
      start = pos + 2;
    }
    Interaction row;
    row.user_id = parts.size() > 0 ? parts[0] : "";
    row.item_id = parts.size() > 1 ? parts[1] : "";
    if (row.user_id.empty()) throw DataError(line_prefix(line_no) + "missing field user");
    if (row.item_id.empty()) throw DataError(line_prefix(line_no) + "missing field item");
    row.timestamp = parts.size() > 3 && !parts[3].empty()
                        ? parse_timestamp(parts[3], line_no)
                        : static_cast<std::int64_t>(rows.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

bool all_digits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

InputFormat parse_input_format(const std::string& name) {
  if (name == "csv") return InputFormat::csv;
  if (name == "jsonl") return InputFormat::jsonl;
  if (name == "dat") return InputFormat::dat;
  throw ConfigError("unknown input format '" + name + "' (valid: csv, jsonl, dat)");
}

InputFormat infer_input_format(const std::filesystem::path& path) {
  const std::string ext = lower(path.extension().string());
  if (ext == ".csv") return InputFormat::csv;
  if (ext == ".jsonl" || ext == ".json") return InputFormat::jsonl;
  if (ext == ".dat") return InputFormat::dat;
  throw ConfigError("cannot infer input format from '" + path.string() + "' (use csv, jsonl or dat)");
}

std::vector<Interaction> parse_interactions(const std::string& text, InputFormat format) {
  switch (format) {
    case InputFormat::csv: return parse_csv(text);
    case InputFormat::jsonl: return parse_jsonl(text);
    case InputFormat::dat: return parse_dat(text);
  }
  throw ConfigError("unknown input format");
}

std::vector<Interaction> load_interactions(const std::filesystem::path& path, InputFormat format) {
  try {
    return parse_interactions(read_file(path), format);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<int> InteractionDataset::full_sequence(int user) const {
  const UserSplit& s = users.at(static_cast<std::size_t>(user));
  std::vector<int> seq = s.train;
  seq.push_back(s.valid);
  seq.push_back(s.test);
  return seq;
}

std::size_t InteractionDataset::num_interactions() const {
  std::size_t n = 0;
  for (const auto& u : users) n += u.train.size() + 2;
  return n;
}

std::string InteractionDataset::vocab_digest() const {
  std::string joined;
  for (const auto& id : item_ids) {
    joined += id;
    joined.push_back('\n');
  }
  return sha256_hex(joined);
}

std::unordered_map<std::string, int> build_index(const std::vector<std::string>& ids) {
  std::unordered_map<std::string, int> index;
  index.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], static_cast<int>(i));
  return index;
}

bool id_less(const std::string& a, const std::string& b) {
  const bool na = all_digits(a);
  const bool nb = all_digits(b);
  if (na && nb) {
    auto strip = [](const std::string& s) {
      auto p = s.find_first_not_of('0');
      return p == std::string::npos ? std::string("0") : s.substr(p);
    };
    const std::string sa = strip(a);
    const std::string sb = strip(b);
    if (sa.size() != sb.size()) return sa.size() < sb.size();
    if (sa != sb) return sa < sb;
    return a < b;
  }
  if (na != nb) return na;
  return a < b;
}

InteractionDataset build_dataset(const std::vector<Interaction>& rows, int min_count) {
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  const int user_min = std::max(min_count, 3);

  // Intern ids.
  std::unordered_map<std::string, int> user_tmp, item_tmp;
  std::vector<std::string> user_names, item_names;
  std::vector<int> row_user(rows.size()), row_item(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].user_id.empty() || rows[r].item_id.empty()) {
      throw DataError("interaction " + std::to_string(r) + " has an empty id");
    }
    auto [uit, unew] = user_tmp.emplace(rows[r].user_id, static_cast<int>(user_names.size()));
    if (unew) user_names.push_back(rows[r].user_id);
    auto [iit, inew] = item_tmp.emplace(rows[r].item_id, static_cast<int>(item_names.size()));
    if (inew) item_names.push_back(rows[r].item_id);
    row_user[r] = uit->second;
    row_item[r] = iit->second;
  }

  std::vector<char> alive(rows.size(), 1);
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<int> user_count(user_names.size(), 0), item_count(item_names.size(), 0);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (!alive[r]) continue;
      ++user_count[row_user[r]];
      ++item_count[row_item[r]];
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (alive[r] && (user_count[row_user[r]] < user_min || item_count[row_item[r]] < min_count)) {
        alive[r] = 0;
        changed = true;
      }
    }
  }

  std::vector<std::vector<std::size_t>> per_user(user_names.size());
  std::vector<char> item_alive(item_names.size(), 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (!alive[r]) continue;
    per_user[row_user[r]].push_back(r);
    item_alive[row_item[r]] = 1;
  }

  InteractionDataset ds;
  for (std::size_t i = 0; i < item_names.size(); ++i) {
    if (item_alive[i]) ds.item_ids.push_back(item_names[i]);
  }
  for (std::size_t u = 0; u < user_names.size(); ++u) {
    if (!per_user[u].empty()) ds.user_ids.push_back(user_names[u]);
  }
  if (ds.user_ids.empty()) throw DataError("dataset empty after filtering");
  std::sort(ds.item_ids.begin(), ds.item_ids.end(), id_less);
  std::sort(ds.user_ids.begin(), ds.user_ids.end(), id_less);

  const auto item_index = build_index(ds.item_ids);
  ds.users.resize(ds.user_ids.size());
  for (std::size_t u = 0; u < ds.user_ids.size(); ++u) {
    auto& idx = per_user[user_tmp.at(ds.user_ids[u])];
    // Row indices are already in file order, so a stable sort on the
    // timestamp breaks ties by input order.
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return rows[a].timestamp < rows[b].timestamp;
    });
    std::vector<int> seq;
    seq.reserve(idx.size());
    for (std::size_t r : idx) seq.push_back(item_index.at(rows[r].item_id));
    UserSplit& split = ds.users[u];
    split.test = seq.back();
    split.valid = seq[seq.size() - 2];
    split.train.assign(seq.begin(), seq.end() - 2);
  }
  return ds;
}

std::vector<Interaction> to_interactions(const InteractionDataset& ds) {
  std::vector<Interaction> rows;
  rows.reserve(ds.num_interactions());
  for (int u = 0; u < ds.num_users(); ++u) {
    std::int64_t t = 0;
    for (int item : ds.full_sequence(u)) rows.push_back({ds.user_ids[u], ds.item_ids[item], t++});
  }
  return rows;
}

std::vector<int> truncate_recent(const std::vector<int>& seq, int max_len) {
  if (max_len <= 0 || static_cast<int>(seq.size()) <= max_len) return seq;
  return std::vector<int>(seq.end() - max_len, seq.end());
}

std::size_t StrataLabels::tail_count() const {
  return static_cast<std::size_t>(std::count(item.begin(), item.end(), ItemStratum::tail));
}

std::size_t StrataLabels::cold_count() const {
  return static_cast<std::size_t>(std::count(user.begin(), user.end(), UserStratum::cold));
}

StrataLabels compute_strata(const InteractionDataset& ds, double tail_fraction, int cold_threshold) {
  if (!(tail_fraction > 0.0 && tail_fraction < 1.0)) throw ConfigError("tail_fraction must lie in (0, 1)");
  if (cold_threshold < 1) throw ConfigError("cold_threshold must be >= 1");
  StrataLabels labels;
  labels.tail_fraction = tail_fraction;
  labels.cold_threshold = cold_threshold;
  const int n = ds.num_items();
  labels.item_train_counts.assign(n, 0);
  for (const auto& u : ds.users) {
    for (int item : u.train) ++labels.item_train_counts[item];
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return labels.item_train_counts[a] < labels.item_train_counts[b];
  });
  const auto tail_size = static_cast<std::size_t>(std::floor(tail_fraction * n));
  labels.item.assign(n, ItemStratum::head);
  for (std::size_t i = 0; i < tail_size; ++i) labels.item[order[i]] = ItemStratum::tail;

  labels.user.reserve(ds.users.size());
  for (const auto& u : ds.users) {
    labels.user.push_back(static_cast<int>(u.train.size()) <= cold_threshold ? UserStratum::cold
                                                                             : UserStratum::hot);
  }
  return labels;
}

namespace {

struct TemplateSpec {
  PromptTemplate kind;
  const char* name;
  const char* text;
};

// Item-description templates. "\\n" is a literal escape that renders as a
// newline.
constexpr TemplateSpec kTemplates[] = {
    {PromptTemplate::beauty, "beauty",
     "The beauty item has following attributes: \\n name is <TITLE>; brand is <BRAND>; price is "
     "<PRICE>. \\n The item has following features: <CATEGORIES>. \\n The item has following "
     "descriptions: <DESCRIPTION>."},
    {PromptTemplate::sports, "sports",
     "The Sports and Outdoors item has following attributes: \\n name is <TITLE>; brand is <BRAND>; "
     "price is <PRICE>. \\n The item has following features: <CATEGORIES>. \\n The item has "
     "following descriptions: <DESCRIPTION>."},
    {PromptTemplate::toys, "toys",
     "The Toys & Games item has following attributes: \\n name is <TITLE>; brand is <BRAND>; price "
     "is <PRICE>. \\n The item has following features: <CATEGORIES>. \\n The item has following "
     "descriptions: <DESCRIPTION>."},
    {PromptTemplate::yelp, "yelp",
     "The point of interest has the following attributes: \\n name is <NAME>; category is "
     "<CATEGORY>; type is <TYPE>; open status is <OPEN>; review count is <COUNT>; city is <CITY>; "
     "average score is <STARS>."},
    {PromptTemplate::ml1m, "ml1m",
     "The movie item has following attributes: \\n Title: <TITLE> \\n Genres: <GENRES> \\n Year: "
     "<YEAR>"},
};

const TemplateSpec& template_spec(PromptTemplate t) {
  for (const auto& spec : kTemplates) {
    if (spec.kind == t) return spec;
  }
  throw ConfigError("unknown prompt template");
}

}  // namespace

const std::vector<std::string>& prompt_template_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& spec : kTemplates) v.emplace_back(spec.name);
    return v;
  }();
  return names;
}

PromptTemplate parse_prompt_template(const std::string& name) {
  for (const auto& spec : kTemplates) {
    if (name == spec.name) return spec.kind;
  }
  std::string valid;
  for (const auto& n : prompt_template_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown dataset kind '" + name + "' (valid: " + valid + ")");
}

std::string to_string(PromptTemplate t) { return template_spec(t).name; }

std::string render_prompt(const AttributeMap& attributes, PromptTemplate tpl) {
  std::map<std::string, std::string> by_slot;
  for (const auto& [key, value] : attributes) by_slot[lower(key)] = value;

  const std::string text = template_spec(tpl).text;
  std::string out;
  for (std::size_t i = 0; i < text.size();) {
    if (text[i] == '\\' && i + 1 < text.size() && text[i + 1] == 'n') {
      out.push_back('\n');
      i += 2;
    } else if (text[i] == '<') {
      const auto close = text.find('>', i);
      const std::string slot = lower(text.substr(i + 1, close - i - 1));
      auto it = by_slot.find(slot);
      out += (it == by_slot.end() || it->second.empty()) ? std::string("unknown") : it->second;
      i = close + 1;
    } else {
      out.push_back(text[i++]);
    }
  }
  return out;
}

PromptRecord render_prompt(int item_index, const AttributeMap& attributes, PromptTemplate tpl) {
  return {item_index, render_prompt(attributes, tpl)};
}

std::string dataset_to_json(const InteractionDataset& ds) {
  json users = json::array();
  for (int u = 0; u < ds.num_users(); ++u) {
    const auto& s = ds.users[u];
    users.push_back({{"id", ds.user_ids[u]}, {"train", s.train}, {"valid", s.valid}, {"test", s.test}});
  }
  json doc = {{"format", "recdiff.dataset.v1"},
              {"num_items", ds.num_items()},
              {"num_users", ds.num_users()},
              {"pad_index", ds.pad_index()},
              {"items", ds.item_ids},
              {"users", users}};
  return doc.dump() + "\n";
}

InteractionDataset dataset_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("dataset file is not valid JSON: ") + e.what());
  }
  if (doc.value("format", "") != "recdiff.dataset.v1") throw DataError("unsupported dataset format");
  InteractionDataset ds;
  ds.item_ids = doc.at("items").get<std::vector<std::string>>();
  const int n = ds.num_items();
  for (const auto& u : doc.at("users")) {
    ds.user_ids.push_back(u.at("id").get<std::string>());
    UserSplit s;
    s.train = u.at("train").get<std::vector<int>>();
    s.valid = u.at("valid").get<int>();
    s.test = u.at("test").get<int>();
    auto check = [&](int i) {
      if (i < 0 || i >= n) throw DataError("dataset references item index " + std::to_string(i) + " out of range");
    };
    for (int i : s.train) check(i);
    check(s.valid);
    check(s.test);
    if (s.train.empty()) throw DataError("user " + ds.user_ids.back() + " has an empty training prefix");
    ds.users.push_back(std::move(s));
  }
  return ds;
}

void save_dataset(const std::filesystem::path& path, const InteractionDataset& ds) {
  write_file(path, dataset_to_json(ds));
}

InteractionDataset load_dataset(const std::filesystem::path& path) {
  return dataset_from_json(read_file(path));
}

std::string strata_to_json(const InteractionDataset& ds, const StrataLabels& strata) {
  json items = json::array();
  for (int i = 0; i < ds.num_items(); ++i) {
    items.push_back({{"item", ds.item_ids[i]},
                     {"index", i},
                     {"train_count", strata.item_train_counts[i]},
                     {"stratum", strata.item[i] == ItemStratum::tail ? "tail" : "head"}});
  }
  json users = json::array();
  for (int u = 0; u < ds.num_users(); ++u) {
    users.push_back({{"user", ds.user_ids[u]},
                     {"train_length", ds.users[u].train.size()},
                     {"stratum", strata.user[u] == UserStratum::cold ? "cold" : "hot"}});
  }
  json doc = {{"tail_fraction", strata.tail_fraction},
              {"cold_threshold", strata.cold_threshold},
              {"tail_items", strata.tail_count()},
              {"cold_users", strata.cold_count()},
              {"items", items},
              {"users", users}};
  return doc.dump(1) + "\n";
}

void save_prompts(const std::filesystem::path& path, const std::vector<PromptRecord>& records) {
  std::string out;
  for (const auto& r : records) out += json{{"item_index", r.item_index}, {"prompt", r.prompt}}.dump() + "\n";
  write_file(path, out);
}

std::vector<PromptRecord> load_prompts(const std::filesystem::path& path) {
  std::vector<PromptRecord> records;
  auto lines = split_lines(read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    try {
      auto obj = json::parse(lines[i]);
      records.push_back({obj.at("item_index").get<int>(), obj.at("prompt").get<std::string>()});
    } catch (const json::exception&) {
      throw DataError(path.string() + ": " + line_prefix(i + 1) + "expected {\"item_index\", \"prompt\"}");
    }
  }
  return records;
}

std::unordered_map<std::string, AttributeMap> load_item_attributes(const std::filesystem::path& path) {
  std::unordered_map<std::string, AttributeMap> out;
  auto lines = split_lines(read_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    json obj;
    try {
      obj = json::parse(lines[i]);
    } catch (const json::parse_error&) {
      throw DataError(path.string() + ": " + line_prefix(i + 1) + "malformed JSON");
    }
    if (!obj.contains("item")) throw DataError(path.string() + ": " + line_prefix(i + 1) + "missing field item");
    AttributeMap attrs;
    for (const auto& [key, value] : obj.items()) {
      if (key == "item") continue;
      attrs[key] = value.is_string() ? value.get<std::string>() : value.dump();
    }
    out[json_scalar_to_string(obj["item"])] = std::move(attrs);
  }
  return out;
}

}  // namespace recdiff
