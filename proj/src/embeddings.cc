#include "recdiff/embeddings.h"

#include <bit>
#include <cstring>
#include <sstream>

#include <json.hpp>

#include "recdiff/errors.h"
#include "recdiff/util.h"

namespace recdiff {

using nlohmann::json;

namespace {

std::filesystem::path with_ext(std::filesystem::path p, const char* ext) {
  p.replace_extension(ext);
  return p;
}

bool is_csv(const std::filesystem::path& p) { return p.extension() == ".csv"; }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Mat parse_csv_matrix(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        row.push_back(std::stod(trim(cell)));
      } catch (const std::exception&) {
        throw DataError("semantic matrix line " + std::to_string(line_no) + ": not a number '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw DataError("ragged semantic matrix: line " + std::to_string(line_no) + " has " +
                      std::to_string(row.size()) + " columns, expected " +
                      std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  const Eigen::Index cols = rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size());
  Mat m(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), c) = rows[r][c];
  }
  return m;
}

}  // namespace

SemanticMatrix make_semantic_matrix(const Mat& real_rows, std::string source_tag) {
  SemanticMatrix m;
  m.values = Mat::Zero(real_rows.rows() + 1, real_rows.cols());
  m.values.topRows(real_rows.rows()) = real_rows;
  m.source_tag = std::move(source_tag);
  return m;
}

void save_semantic_matrix(const std::filesystem::path& path, const SemanticMatrix& m) {
  const Eigen::Index n = m.num_items();
  if (is_csv(path)) {
    std::ostringstream out;
    out.precision(17);
    for (Eigen::Index r = 0; r < n; ++r) {
      for (Eigen::Index c = 0; c < m.values.cols(); ++c) {
        if (c) out << ',';
        out << static_cast<double>(static_cast<float>(m.values(r, c)));
      }
      out << '\n';
    }
    write_file(path, out.str());
    return;
  }
  static_assert(std::endian::native == std::endian::little, "payload is written little-endian");
  const auto header_path = with_ext(path, ".json");
  const auto payload_path = with_ext(path, ".f32");
  std::string payload(static_cast<std::size_t>(n * m.values.cols()) * sizeof(float), '\0');
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < m.values.cols(); ++c) {
      const float f = static_cast<float>(m.values(r, c));
      std::memcpy(payload.data() + (k++) * sizeof(float), &f, sizeof(float));
    }
  }
  json header = {{"rows", n},
                 {"cols", m.values.cols()},
                 {"dtype", "float32"},
                 {"byte_order", "little"},
                 {"source_tag", m.source_tag},
                 {"payload", payload_path.filename().string()}};
  write_file(payload_path, payload);
  write_file(header_path, header.dump(1) + "\n");
}

SemanticMatrix load_semantic_matrix(const std::filesystem::path& path, int expected_items) {
  Mat real;
  std::string tag;
  if (is_csv(path)) {
    real = parse_csv_matrix(read_file(path));
    tag = "csv:" + path.filename().string();
  } else {
    const auto header_path = with_ext(path, ".json");
    json header;
    try {
      header = json::parse(read_file(header_path));
    } catch (const json::parse_error& e) {
      throw DataError("semantic header " + header_path.string() + " is not valid JSON");
    }
    if (header.value("dtype", "") != "float32") throw DataError("semantic payload dtype must be float32");
    const auto rows = header.at("rows").get<Eigen::Index>();
    const auto cols = header.at("cols").get<Eigen::Index>();
    tag = header.value("source_tag", "");
    const auto payload_path = header_path.parent_path() / header.at("payload").get<std::string>();
    const std::string payload = read_file(payload_path);
    if (payload.size() != static_cast<std::size_t>(rows * cols) * sizeof(float)) {
      throw DataError("semantic payload has " + std::to_string(payload.size()) + " bytes, header implies " +
                      std::to_string(rows * cols * sizeof(float)));
    }
    real.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows * cols; ++i) {
      float f;
      std::memcpy(&f, payload.data() + static_cast<std::size_t>(i) * sizeof(float), sizeof(float));
      real.data()[i] = static_cast<double>(f);
    }
  }
  if (real.rows() != expected_items) {
    throw DataError("semantic matrix has " + std::to_string(real.rows()) + " rows, expected " +
                    std::to_string(expected_items));
  }
  if (real.cols() < 1) throw DataError("semantic matrix has zero width");
  if (!real.allFinite()) throw DataError("semantic matrix contains non-finite values");
  return make_semantic_matrix(real, tag);
}

std::string semantic_checksum(const SemanticMatrix& m) {
  return sha256_hex(std::string_view(reinterpret_cast<const char*>(m.values.data()),
                                     static_cast<std::size_t>(m.values.size()) * sizeof(double)));
}

Vec pseudo_embed(std::string_view prompt, int d_prime, std::uint64_t seed) {
  if (d_prime < 1) throw ConfigError("pseudo_embed: dimension must be >= 1");
  Rng rng(splitmix64(sha256_u64(prompt) ^ splitmix64(seed)));
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec v(d_prime);
  double norm = 0.0;
  do {
    for (int i = 0; i < d_prime; ++i) v(i) = normal(rng);
    norm = v.norm();
  } while (norm == 0.0);
  return v / norm;
}

SemanticMatrix pseudo_semantic_matrix(const std::vector<PromptRecord>& prompts, int d_prime,
                                      std::uint64_t seed) {
  const auto n = static_cast<Eigen::Index>(prompts.size());
  Mat real(n, d_prime);
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (const auto& rec : prompts) {
    if (rec.item_index < 0 || rec.item_index >= n || seen[rec.item_index]) {
      throw DataError("prompt records must cover item indices 0.." + std::to_string(n - 1) + " exactly once");
    }
    seen[rec.item_index] = 1;
    real.row(rec.item_index) = pseudo_embed(rec.prompt, d_prime, seed).transpose();
  }
  return make_semantic_matrix(real, "pseudo");
}

CollaborativeTable make_collaborative_table(int num_items, int dim, Rng& rng, double stddev) {
  Mat m = gaussian_matrix(num_items + 1, dim, stddev, rng);
  m.row(num_items).setZero();
  return {Tensor::parameter(std::move(m)), num_items};
}

void AdapterParams::collect(const std::string& prefix, ParameterSet& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out.add(prefix + ".layer" + std::to_string(i) + ".weight", layers[i].weight);
    out.add(prefix + ".layer" + std::to_string(i) + ".bias", layers[i].bias);
  }
}

AdapterParams make_adapter(int d_prime, int dim, int num_layers, Activation activation, Rng& rng) {
  if (num_layers != 1 && num_layers != 2) throw ConfigError("adapter must have 1 or 2 layers");
  AdapterParams p;
  p.activation = activation;
  if (num_layers == 1) {
    p.layers.push_back(make_linear(d_prime, dim, true, rng));
  } else {
    p.layers.push_back(make_linear(d_prime, dim, true, rng));
    p.layers.push_back(make_linear(dim, dim, true, rng));
  }
  return p;
}

Tensor adapt(const Tensor& e_llm, const AdapterParams& params) {
  if (e_llm.cols() != params.input_width()) {
    throw ShapeError("adapter: input width " + std::to_string(e_llm.cols()) + ", expected " +
                     std::to_string(params.input_width()));
  }
  Tensor x = e_llm.requires_grad() ? e_llm.detach() : e_llm;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    x = params.layers[i].forward(x);
    if (i + 1 < params.layers.size()) x = activate(x, params.activation);
  }
  return x;
}

Vec adapt(const Vec& e_llm, const AdapterParams& params) {
  Mat row = e_llm.transpose();
  return adapt(Tensor::constant(row), params).value().row(0).transpose();
}

}  // namespace recdiff
