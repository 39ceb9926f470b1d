#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace camels {

/// Bad configuration or missing input; the CLI maps it to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class KeyType { kInt, kReal, kString, kBool, kRealList };

struct ConfigKey {
  const char* key;
  KeyType type;
  const char* default_value;
  const char* help;
};

// One flat table; the README lists the same keys.
inline const std::vector<ConfigKey>& config_keys() {
  using K = KeyType;
  static const std::vector<ConfigKey> keys = {
      {"seed", K::kInt, "1", "master seed; every stage derives its generators from it"},
      {"data.entities", K::kInt, "3000", "entities in the synthetic world"},
      {"data.docs_per_style", K::kInt, "1000", "documents rendered per style before splitting"},
      {"data.locality_docs", K::kInt, "200", "filler-only documents in each locality set"},
      {"data.cities", K::kInt, "40", "city value pool size"},
      {"data.companies", K::kInt, "30", "company value pool size"},
      {"data.occupations", K::kInt, "20", "occupation value pool size"},
      {"data.items", K::kInt, "20", "owned-item value pool size"},
      {"data.drift_fraction", K::kReal, "0.1", "share of facts whose value changes over stream time"},
      {"data.mention_rate", K::kReal, "0", "share of filler sentences naming the document's entity"},
      {"data.temporal_style", K::kString, "C", "style split by stream time instead of by fact"},
      {"model.width", K::kInt, "64", "base/proxy model width"},
      {"model.layers", K::kInt, "2", "transformer blocks"},
      {"model.heads", K::kInt, "4", "attention heads"},
      {"model.ff", K::kInt, "256", "feed-forward width"},
      {"model.ctx", K::kInt, "160", "context length including the BOS token"},
      {"pretrain.epochs", K::kInt, "12", "language-model epochs for the adapted base model"},
      {"pretrain.proxy_epochs", K::kInt, "3", "language-model epochs for the meta-training proxy"},
      {"pretrain.lr", K::kReal, "2e-3", "Adam rate for language-model pretraining"},
      {"pretrain.proxy_lr", K::kReal, "1e-3", "Adam rate of the separate proxy pretraining run"},
      {"qa.epochs", K::kInt, "2", "question-answering epochs on the QA-train split"},
      {"qa.lr", K::kReal, "3e-4", "Adam rate for question-answer tuning"},
      {"weight.hidden", K::kInt, "128", "hidden width of the weighting head"},
      {"meta.style", K::kString, "A", "style whose train split drives meta-training"},
      {"meta.inner_lr", K::kReal, "2e-3", "SGD rate of the proxy inside an episode"},
      {"meta.outer_lr", K::kReal, "1e-3", "Adam rate of the weighting model"},
      {"meta.c_loc", K::kReal, "0.1", "locality coefficient"},
      {"meta.c_reset", K::kInt, "4", "episodes between proxy resets"},
      {"meta.k", K::kInt, "6", "documents per episode"},
      {"meta.accumulation", K::kInt, "24", "examples per weighting-model update"},
      {"meta.micro_batch", K::kInt, "6", "examples per micro-batch (one episode)"},
      {"meta.episodes", K::kInt, "300", "total meta-training episodes"},
      {"adapt.grid", K::kRealList, "5e-4,1e-3,2e-3,4e-3", "test-time Adam rates tried by the sweep"},
      {"adapt.steps_per_doc", K::kInt, "1", "optimizer steps per document"},
      {"adapt.checkpoint_every", K::kInt, "200", "checkpoint period M in documents"},
      {"adapt.persist_optimizer", K::kBool, "true", "keep Adam moments across documents"},
      {"eval.style", K::kString, "A", "style of the test streams"},
      {"eval.streams", K::kInt, "4", "seeded test streams per method"},
      {"eval.stream_len", K::kInt, "200", "documents per test stream"},
      {"eval.sweep_len", K::kInt, "100", "documents in the validation stream used by the sweep"},
      {"eval.unrelated", K::kInt, "100", "QA-valid queries scored for forgetting"},
      {"eval.locality_docs", K::kInt, "50", "held-out locality documents scored for drift"},
      {"eval.max_answer_len", K::kInt, "6", "greedy decoding limit in tokens"},
      {"tfidf.cutoff", K::kReal, "0.05", "share of lowest (document, word) scores zeroed"},
      {"analyze.checkpoint_every", K::kInt, "25", "checkpoint period for forgetting curves"},
      {"analyze.bin_width", K::kInt, "25", "lag bin width for the time-since-document curve"},
      {"analyze.dump_docs", K::kInt, "20", "validation documents in the token-weight dump"},
  };
  return keys;
}

inline std::string env_name(const std::string& key) {
  std::string e = "CAMELS_";
  for (char c : key) e += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return e;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline void check_type(const ConfigKey& k, const std::string& v) {
  auto fail = [&](const char* what) {
    throw ConfigError("config key " + std::string(k.key) + ": \"" + v + "\" is not " + what);
  };
  std::size_t used = 0;
  try {
    switch (k.type) {
      case KeyType::kInt:
        if (v.empty() || v[0] == '-') fail("a non-negative integer");
        std::stoull(v, &used);
        if (used != v.size()) fail("a non-negative integer");
        break;
      case KeyType::kReal:
        std::stod(v, &used);
        if (used != v.size()) fail("a number");
        break;
      case KeyType::kBool:
        if (v != "true" && v != "false" && v != "1" && v != "0") fail("true/false");
        break;
      case KeyType::kRealList: {
        std::stringstream ss(v);
        std::string item;
        int n = 0;
        while (std::getline(ss, item, ',')) {
          item = trim(item);
          std::stod(item, &used);
          if (used != item.size()) fail("a comma-separated list of numbers");
          ++n;
        }
        if (n == 0) fail("a comma-separated list of numbers");
        break;
      }
      case KeyType::kString:
        if (v.empty()) fail("a non-empty string");
        break;
    }
  } catch (const std::logic_error&) {
    fail(k.type == KeyType::kInt ? "a non-negative integer" : "a number");
  }
}

}  // namespace detail

/// Resolved key/value configuration: defaults, then file, then CAMELS_* environment, then explicit overrides.
class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_keys()) values_[k.key] = k.default_value;
  }

  static const ConfigKey& spec(const std::string& key) {
    for (const auto& k : config_keys())
      if (key == k.key) return k;
    throw ConfigError("unknown config key \"" + key + "\"");
  }

  void set(const std::string& key, const std::string& value) {
    const auto& k = spec(key);
    const std::string v = detail::trim(value);
    detail::check_type(k, v);
    values_[key] = v;
  }

  /// "key = value" lines; '#' starts a comment.
  void merge_text(const std::string& text, const std::string& origin) {
    std::stringstream ss(text);
    std::string line;
    for (int n = 1; std::getline(ss, line); ++n) {
      if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(n) + ": expected key = value");
      try {
        set(detail::trim(line.substr(0, eq)), line.substr(eq + 1));
      } catch (const ConfigError& e) {
        throw ConfigError(origin + ":" + std::to_string(n) + ": " + e.what());
      }
    }
  }

  void merge_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    merge_text(buf.str(), path);
  }

  void merge_env() {
    for (const auto& k : config_keys())
      if (const char* v = std::getenv(env_name(k.key).c_str())) {
        try {
          set(k.key, v);
        } catch (const ConfigError& e) {
          throw ConfigError(env_name(k.key) + ": " + e.what());
        }
      }
  }

  const std::string& str(const std::string& key) const {
    spec(key);
    return values_.at(key);
  }
  std::size_t integer(const std::string& key) const { return std::stoull(str(key)); }
  double real(const std::string& key) const { return std::stod(str(key)); }
  bool flag(const std::string& key) const { return str(key) == "true" || str(key) == "1"; }
  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(detail::trim(item)));
    return out;
  }

  /// Every key in table order, one "key = value" line each.
  std::string text() const {
    std::string s;
    for (const auto& k : config_keys()) s += std::string(k.key) + " = " + values_.at(k.key) + "\n";
    return s;
  }

  bool operator==(const RunConfig&) const = default;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace camels
