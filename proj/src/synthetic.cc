#include "recdiff/synthetic.h"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "recdiff/errors.h"
#include "recdiff/nn.h"
#include "recdiff/util.h"

namespace recdiff {

SyntheticData generate_synthetic(const SyntheticConfig& c) {
  if (c.users < 1 || c.items < c.intents || c.intents < 1 || c.latent_dim < 1 || c.semantic_dim < 1) {
    throw ConfigError("synthetic: invalid sizes");
  }
  if (c.neighbor_probability < 0.0 || c.neighbor_probability > 1.0 || c.neighbor_count < 0) {
    throw ConfigError("synthetic: invalid neighbour settings");
  }
  if (c.min_length < 3 || c.max_length < c.min_length) throw ConfigError("synthetic: invalid length range");
  Rng rng(c.seed);
  SyntheticData data;

  std::vector<int> intent(static_cast<std::size_t>(c.items));
  for (int i = 0; i < c.items; ++i) intent[i] = i % c.intents;
  std::shuffle(intent.begin(), intent.end(), rng);
  data.item_intent = intent;

  std::vector<int> rank(static_cast<std::size_t>(c.items));
  std::iota(rank.begin(), rank.end(), 0);
  std::shuffle(rank.begin(), rank.end(), rng);
  std::vector<double> popularity(static_cast<std::size_t>(c.items));
  for (int i = 0; i < c.items; ++i) popularity[i] = std::pow(rank[i] + 1.0, -c.zipf_exponent);

  const Mat centers = gaussian_matrix(c.intents, c.latent_dim, 1.5, rng);
  data.item_latent = gaussian_matrix(c.items, c.latent_dim, c.latent_noise, rng);
  for (int i = 0; i < c.items; ++i) data.item_latent.row(i) += centers.row(intent[i]);
  const Mat projection = gaussian_matrix(c.latent_dim, c.semantic_dim, 1.0 / std::sqrt(c.latent_dim), rng);
  data.item_semantic = data.item_latent * projection + gaussian_matrix(c.items, c.semantic_dim, c.semantic_noise, rng);
  data.item_semantic.rowwise().normalize();

  std::vector<std::vector<int>> members(static_cast<std::size_t>(c.intents));
  for (int i = 0; i < c.items; ++i) members[intent[i]].push_back(i);

  // Nearest latent neighbours inside each item's own intent.
  std::vector<std::vector<int>> neighbors(static_cast<std::size_t>(c.items));
  for (int i = 0; i < c.items; ++i) {
    std::vector<std::pair<double, int>> d;
    for (int j : members[intent[i]]) {
      if (j != i) d.emplace_back((data.item_latent.row(i) - data.item_latent.row(j)).squaredNorm(), j);
    }
    std::sort(d.begin(), d.end());
    const std::size_t m = std::min(d.size(), static_cast<std::size_t>(std::max(c.neighbor_count, 0)));
    for (std::size_t k = 0; k < m; ++k) neighbors[i].push_back(d[k].second);
  }

  for (int i = 0; i < c.items; ++i) {
    data.item_ids.push_back("i" + std::to_string(i));
    data.attributes.push_back({{"title", "Item " + std::to_string(i)}, {"categories", "group " + std::to_string(intent[i])}});
  }

  std::uniform_int_distribution<int> length_dist(c.min_length, c.max_length);
  std::uniform_int_distribution<int> intent_dist(0, c.intents - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int u = 0; u < c.users; ++u) {
    const std::string user = "u" + std::to_string(u);
    const int length = length_dist(rng);
    int current = intent_dist(rng);
    int prev = -1;
    for (int step = 0; step < length; ++step) {
      if (step > 0 && unit(rng) >= c.stay_probability) current = intent_dist(rng);
      if (prev >= 0 && intent[prev] == current && !neighbors[prev].empty() && unit(rng) < c.neighbor_probability) {
        const auto& nb = neighbors[prev];
        prev = nb[std::uniform_int_distribution<std::size_t>(0, nb.size() - 1)(rng)];
        data.rows.push_back({user, data.item_ids[prev], step});
        continue;
      }
      const auto& pool = members[current];
      std::vector<double> w(pool.size());
      for (std::size_t j = 0; j < pool.size(); ++j) {
        const int item = pool[j];
        double sim = 0.0;
        if (prev >= 0) sim = data.item_latent.row(item).dot(data.item_latent.row(prev)) / c.latent_dim;
        w[j] = item == prev ? 0.0 : popularity[item] * std::exp(c.similarity_weight * sim);
      }
      std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
      prev = pool[pick(rng)];
      data.rows.push_back({user, data.item_ids[prev], step});
    }
  }
  return data;
}

void write_synthetic(const std::filesystem::path& dir, const SyntheticData& data) {
  std::ostringstream csv;
  csv << "user,item,timestamp\n";
  for (const auto& r : data.rows) csv << r.user_id << "," << r.item_id << "," << r.timestamp << "\n";
  write_file(dir / "interactions.csv", csv.str());

  std::ostringstream items, vectors;
  for (std::size_t i = 0; i < data.item_ids.size(); ++i) {
    nlohmann::ordered_json a;
    a["item"] = data.item_ids[i];
    for (const auto& [k, v] : data.attributes[i]) a[k] = v;
    items << a.dump() << "\n";
    nlohmann::ordered_json v;
    v["item"] = data.item_ids[i];
    const auto row = data.item_semantic.row(static_cast<Eigen::Index>(i));
    v["vector"] = std::vector<double>(row.data(), row.data() + row.size());
    vectors << v.dump() << "\n";
  }
  write_file(dir / "items.jsonl", items.str());
  write_file(dir / "item_vectors.jsonl", vectors.str());
}

std::unordered_map<std::string, std::vector<double>> load_item_vectors(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("item vector file not found: " + path.string());
  std::istringstream in(read_file(path));
  std::unordered_map<std::string, std::vector<double>> out;
  std::string line;
  int lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      auto vec = j.at("vector").get<std::vector<double>>();
      if (width == 0) width = vec.size();
      if (vec.empty() || vec.size() != width) {
        throw DataError(path.string() + ": line " + std::to_string(lineno) + ": vector width " +
                        std::to_string(vec.size()) + ", expected " + std::to_string(width));
      }
      out[j.at("item").is_string() ? j.at("item").get<std::string>() : j.at("item").dump()] = std::move(vec);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace recdiff
