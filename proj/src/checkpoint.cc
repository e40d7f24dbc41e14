#include "recdiff/checkpoint.h"

#include <json.hpp>

#include <bit>
#include <cstring>

#include "recdiff/errors.h"
#include "recdiff/util.h"

namespace recdiff {

namespace {

constexpr char kMagic[8] = {'R', 'E', 'C', 'D', 'I', 'F', 'F', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

struct Entry {
  std::string name;
  const Mat* value;
};

void append_bytes(std::string& out, const void* data, std::size_t n) {
  out.append(static_cast<const char*>(data), n);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const std::string& vocab_digest) {
  const ParameterSet params = model.parameters();
  std::vector<Entry> entries;
  for (const auto& [name, t] : params.items()) entries.push_back({name, &t.value()});
  entries.push_back({"semantic", &model.semantic.values});
  if (model.prototypes.fitted()) entries.push_back({"intent.prototypes", &model.prototypes.centroids});

  nlohmann::ordered_json header;
  header["format"] = "recdiff.checkpoint.v1";
  header["config"] = to_yaml(model.config);
  header["num_items"] = model.num_items;
  header["vocab_digest"] = vocab_digest;
  header["semantic_source"] = model.semantic.source_tag;
  header["prototype_fit_step"] = model.prototypes.fit_step;
  header["seeds"] = {{"data", model.config.seeds.data},       {"init", model.config.seeds.init},
                     {"noise", model.config.seeds.noise},     {"augment", model.config.seeds.augment},
                     {"clustering", model.config.seeds.clustering}, {"dropout", model.config.seeds.dropout}};
  std::uint64_t offset = 0;
  nlohmann::ordered_json index = nlohmann::ordered_json::array();
  for (const auto& e : entries) {
    index.push_back({{"name", e.name}, {"rows", e.value->rows()}, {"cols", e.value->cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(e.value->size()) * sizeof(double);
  }
  header["tensors"] = index;

  const std::string header_text = header.dump();
  std::string out;
  append_bytes(out, kMagic, sizeof(kMagic));
  const std::uint64_t header_len = header_text.size();
  append_bytes(out, &header_len, sizeof(header_len));
  out += header_text;
  for (const auto& e : entries) append_bytes(out, e.value->data(), static_cast<std::size_t>(e.value->size()) * sizeof(double));
  write_file(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("checkpoint not found: " + path.string());
  const std::string bytes = read_file(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError(path.string() + ": not a recdiff checkpoint");
  }
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + 8, sizeof(header_len));
  if (16 + header_len > bytes.size()) throw DataError(path.string() + ": truncated header");
  const auto header = nlohmann::json::parse(bytes.substr(16, header_len));
  const std::size_t payload = 16 + header_len;

  auto read_tensor = [&](const nlohmann::json& entry) {
    const Eigen::Index rows = entry.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = entry.at("cols").get<Eigen::Index>();
    const std::uint64_t off = entry.at("offset").get<std::uint64_t>();
    const std::size_t n = static_cast<std::size_t>(rows * cols) * sizeof(double);
    if (payload + off + n > bytes.size()) throw DataError(path.string() + ": truncated payload");
    Mat m(rows, cols);
    if (n > 0) std::memcpy(m.data(), bytes.data() + payload + off, n);
    return m;
  };

  std::map<std::string, Mat> tensors;
  for (const auto& entry : header.at("tensors")) tensors[entry.at("name").get<std::string>()] = read_tensor(entry);

  const ExperimentConfig config = parse_config(header.at("config").get<std::string>());
  auto sem = tensors.find("semantic");
  if (sem == tensors.end()) throw DataError(path.string() + ": missing semantic matrix");
  SemanticMatrix semantic{sem->second, header.value("semantic_source", std::string())};
  Checkpoint ck{make_model(config, std::move(semantic)), header.value("vocab_digest", std::string())};

  ParameterSet params = ck.model.parameters();
  for (auto& [name, t] : params.items()) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError(path.string() + ": missing tensor " + name);
    if (it->second.rows() != t.rows() || it->second.cols() != t.cols()) {
      throw DataError(path.string() + ": tensor " + name + " has the wrong shape");
    }
    t.mutable_value() = it->second;
  }
  auto proto = tensors.find("intent.prototypes");
  if (proto != tensors.end()) {
    ck.model.prototypes.centroids = proto->second;
    ck.model.prototypes.fit_step = header.value("prototype_fit_step", -1L);
  }
  return ck;
}

}  // namespace recdiff
