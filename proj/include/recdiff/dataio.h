#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace recdiff {

struct Interaction {
  std::string user_id;
  std::string item_id;
  std::int64_t timestamp = 0;
};

enum class InputFormat { csv, jsonl, dat };

/// Accepts "csv", "jsonl" and "dat" (MovieLens `::`-separated ratings).
InputFormat parse_input_format(const std::string& name);
/// Picks the format from the file extension.
InputFormat infer_input_format(const std::filesystem::path& path);

/// Reads every row in file order. A missing timestamp becomes the row's
/// ordinal position. Throws DataError naming the offending line.
std::vector<Interaction> load_interactions(const std::filesystem::path& path, InputFormat format);
std::vector<Interaction> parse_interactions(const std::string& text, InputFormat format);

/// Leave-one-out split of one user's chronological history.
struct UserSplit {
  std::vector<int> train;
  int valid = -1;
  int test = -1;
};

struct InteractionDataset {
  std::vector<std::string> item_ids;  // dense index -> external id
  std::vector<std::string> user_ids;
  std::vector<UserSplit> users;       // indexed by dense user index

  int num_items() const { return static_cast<int>(item_ids.size()); }
  int num_users() const { return static_cast<int>(user_ids.size()); }
  /// Sentinel index used for padding; never a real item.
  int pad_index() const { return num_items(); }

  /// train + valid + test
  std::vector<int> full_sequence(int user) const;
  std::size_t num_interactions() const;

  /// Order-sensitive digest of the item vocabulary.
  std::string vocab_digest() const;
};

/// External id -> dense index.
std::unordered_map<std::string, int> build_index(const std::vector<std::string>& ids);

/// Total order used for vocabularies: numeric ids compare numerically,
/// everything else lexicographically, numbers first.
bool id_less(const std::string& a, const std::string& b);

/// Iterative min-count filtering to a fixed point followed by the
/// leave-one-out split. Users need at least max(min_count, 3) interactions
/// to survive (the split needs train, valid and test).
InteractionDataset build_dataset(const std::vector<Interaction>& rows, int min_count = 5);

/// Rebuilds raw interactions (ordinal timestamps) from a dataset, so that
/// filtering can be re-applied to it.
std::vector<Interaction> to_interactions(const InteractionDataset& ds);

/// Keeps the most recent `max_len` items.
std::vector<int> truncate_recent(const std::vector<int>& seq, int max_len);

enum class ItemStratum { tail, head };
enum class UserStratum { cold, hot };

struct StrataLabels {
  std::vector<ItemStratum> item;
  std::vector<UserStratum> user;
  std::vector<int> item_train_counts;
  double tail_fraction = 0.2;
  int cold_threshold = 5;

  std::size_t tail_count() const;
  std::size_t cold_count() const;
};

/// Tail items: the floor(tail_fraction * |I|) least frequent items in the
/// training prefixes, ties to the lower index. Cold users: training length
/// <= cold_threshold.
StrataLabels compute_strata(const InteractionDataset& ds, double tail_fraction = 0.2,
                            int cold_threshold = 5);

enum class PromptTemplate { beauty, sports, toys, yelp, ml1m };

PromptTemplate parse_prompt_template(const std::string& name);
std::string to_string(PromptTemplate t);
const std::vector<std::string>& prompt_template_names();

using AttributeMap = std::map<std::string, std::string>;

struct PromptRecord {
  int item_index = -1;
  std::string prompt;
};

/// Renders an item description prompt. Attribute keys are matched to the
/// template slots case-insensitively; missing ones render as "unknown".
std::string render_prompt(const AttributeMap& attributes, PromptTemplate tpl);
PromptRecord render_prompt(int item_index, const AttributeMap& attributes, PromptTemplate tpl);

// Serialization.
std::string dataset_to_json(const InteractionDataset& ds);
InteractionDataset dataset_from_json(const std::string& text);
void save_dataset(const std::filesystem::path& path, const InteractionDataset& ds);
InteractionDataset load_dataset(const std::filesystem::path& path);

std::string strata_to_json(const InteractionDataset& ds, const StrataLabels& strata);

/// JSON-lines: {"item_index": int, "prompt": str}
void save_prompts(const std::filesystem::path& path, const std::vector<PromptRecord>& records);
std::vector<PromptRecord> load_prompts(const std::filesystem::path& path);

/// JSON-lines item attribute file: {"item": id, <attribute>: value, ...}
std::unordered_map<std::string, AttributeMap> load_item_attributes(const std::filesystem::path& path);

}  // namespace recdiff
