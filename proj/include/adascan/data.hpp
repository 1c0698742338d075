#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "adascan/error.hpp"
#include "adascan/rng.hpp"
#include "adascan/sequence.hpp"

namespace adascan {

enum class DistractorMode { gaussian, shared_pool };

inline const char* to_string(DistractorMode m) {
  return m == DistractorMode::gaussian ? "gaussian" : "shared_pool";
}

inline std::optional<DistractorMode> distractor_mode_from_string(const std::string& s) {
  if (s == "gaussian") return DistractorMode::gaussian;
  if (s == "shared_pool") return DistractorMode::shared_pool;
  return std::nullopt;
}

// Planted-signal stand-in for per-frame video features: each sequence
// carries a class prototype at a few positions and class-independent
// distractors elsewhere.
struct SynthConfig {
  std::size_t num_classes = 4;
  std::size_t feat_dim = 16;
  std::size_t seq_len = 20;
  std::size_t signal_frames = 3;
  double signal_noise = 0.1;
  DistractorMode distractor_mode = DistractorMode::shared_pool;
  std::size_t pool_size = 10;
  std::size_t train_count = 500;
  std::size_t test_count = 200;
  std::uint64_t seed = 42;
};

struct Dataset {
  std::vector<FeatureSequence> samples;
  std::size_t num_classes = 0;

  std::size_t feat_dim() const { return samples.empty() ? 0 : samples.front().feat_dim(); }
};

struct SynthSplits {
  Dataset train;
  Dataset test;
};

namespace detail {

// Coordinates iid N(0, sigma^2); sigma = 1/sqrt(D) keeps draws near unit norm.
inline Tensor gaussian_vec(std::size_t d, double coord_sigma, std::mt19937_64& rng) {
  Tensor v({d});
  for (std::size_t j = 0; j < d; ++j) v[j] = coord_sigma * gaussian(rng);
  return v;
}

inline void normalize_unit(Tensor& v) {
  const double n = l2_norm(v);
  if (n > 1e-12) {
    for (std::size_t j = 0; j < v.size(); ++j) v[j] /= n;
  }
}

// Gram-Schmidt on gaussian draws; when count exceeds the dimension the
// residual degenerates and the raw draw is kept.
inline std::vector<Tensor> make_prototypes(std::size_t count, std::size_t d,
                                           std::mt19937_64& rng) {
  std::vector<Tensor> protos;
  protos.reserve(count);
  for (std::size_t c = 0; c < count; ++c) {
    Tensor v = gaussian_vec(d, 1.0, rng);
    Tensor r = v;
    for (const Tensor& prev : protos) {
      const double coef = dot_plain(prev, r);
      for (std::size_t j = 0; j < d; ++j) r[j] -= coef * prev[j];
    }
    if (l2_norm(r) < 1e-6) r = v;
    normalize_unit(r);
    protos.push_back(std::move(r));
  }
  return protos;
}

inline std::string sample_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s-%05zu", prefix, i);
  return buf;
}

}  // namespace detail

// Deterministic given cfg.seed; the train and test splits come from
// consecutive draws of the same stream.
inline SynthSplits generate_synthetic(const SynthConfig& cfg) {
  require(cfg.num_classes >= 2, "generate_synthetic: need at least two classes");
  require(cfg.feat_dim >= 1 && cfg.seq_len >= 1, "generate_synthetic: degenerate dimensions");
  require(cfg.signal_frames >= 1 && cfg.signal_frames <= cfg.seq_len,
          "generate_synthetic: signal frames must fit in the sequence");
  require(cfg.signal_noise >= 0.0, "generate_synthetic: negative noise");
  require(cfg.distractor_mode == DistractorMode::gaussian || cfg.pool_size >= 1,
          "generate_synthetic: shared pool needs at least one prototype");
  require(cfg.train_count >= 1 && cfg.test_count >= 1, "generate_synthetic: empty split");

  std::mt19937_64 rng(cfg.seed);
  const std::size_t d = cfg.feat_dim;
  const double coord_sigma = 1.0 / std::sqrt(static_cast<double>(d));

  const std::vector<Tensor> protos = detail::make_prototypes(cfg.num_classes, d, rng);
  std::vector<Tensor> pool;
  if (cfg.distractor_mode == DistractorMode::shared_pool) {
    pool.reserve(cfg.pool_size);
    for (std::size_t j = 0; j < cfg.pool_size; ++j) {
      Tensor p = detail::gaussian_vec(d, coord_sigma, rng);
      detail::normalize_unit(p);
      pool.push_back(std::move(p));
    }
  }

  auto gen_split = [&](std::size_t count, const char* prefix) {
    Dataset ds;
    ds.num_classes = cfg.num_classes;
    ds.samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t label = i % cfg.num_classes;  // round-robin keeps classes balanced
      std::vector<std::size_t> pos(cfg.seq_len);
      std::iota(pos.begin(), pos.end(), 0);
      for (std::size_t j = 0; j < cfg.signal_frames; ++j) {
        const std::size_t k = j + uniform_below(rng, cfg.seq_len - j);
        std::swap(pos[j], pos[k]);
      }
      std::vector<std::uint8_t> mask(cfg.seq_len, 0);
      for (std::size_t j = 0; j < cfg.signal_frames; ++j) mask[pos[j]] = 1;

      Tensor frames({cfg.seq_len, d});
      for (std::size_t t = 0; t < cfg.seq_len; ++t) {
        Tensor f({d});
        if (mask[t]) {
          const Tensor noise = detail::gaussian_vec(d, coord_sigma, rng);
          for (std::size_t j = 0; j < d; ++j) f[j] = protos[label][j] + cfg.signal_noise * noise[j];
        } else if (cfg.distractor_mode == DistractorMode::gaussian) {
          f = detail::gaussian_vec(d, coord_sigma, rng);
        } else {
          const std::size_t pick = uniform_below(rng, cfg.pool_size);
          const Tensor noise = detail::gaussian_vec(d, coord_sigma, rng);
          for (std::size_t j = 0; j < d; ++j) f[j] = pool[pick][j] + cfg.signal_noise * noise[j];
        }
        for (std::size_t j = 0; j < d; ++j) frames.at(t, j) = f[j];
      }
      ds.samples.push_back(FeatureSequence{std::move(frames), static_cast<int>(label),
                                           detail::sample_id(prefix, i), std::move(mask)});
    }
    return ds;
  };

  SynthSplits splits;
  splits.train = gen_split(cfg.train_count, "train");
  splits.test = gen_split(cfg.test_count, "test");
  return splits;
}

// One sample per line:
// {"id": str, "label": int, "frames": [[f64;D];T], "signal_mask": [bool;T]?}
inline void save_jsonl(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot open for writing: " + path);
  for (const FeatureSequence& s : ds.samples) {
    nlohmann::json j;
    j["id"] = s.id;
    j["label"] = s.label;
    nlohmann::json frames = nlohmann::json::array();
    for (std::size_t t = 0; t < s.length(); ++t) {
      nlohmann::json row = nlohmann::json::array();
      for (std::size_t k = 0; k < s.feat_dim(); ++k) row.push_back(s.frames.at(t, k));
      frames.push_back(std::move(row));
    }
    j["frames"] = std::move(frames);
    if (s.signal_mask) {
      nlohmann::json mask = nlohmann::json::array();
      for (std::uint8_t b : *s.signal_mask) mask.push_back(b != 0);
      j["signal_mask"] = std::move(mask);
    }
    out << j.dump() << '\n';
  }
}

inline Dataset load_jsonl(const std::string& path,
                          std::optional<std::size_t> expected_classes = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open: " + path);

  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  std::size_t feat_dim = 0;
  int max_label = -1;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& msg) {
      return IngestionError(path + ": line " + std::to_string(line_no) + ": " + msg);
    };

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw fail(e.what());
    }
    if (!j.is_object()) throw fail("expected a JSON object");
    if (!j.contains("id") || !j["id"].is_string()) throw fail("missing string field 'id'");
    if (!j.contains("label") || !j["label"].is_number_integer())
      throw fail("missing integer field 'label'");
    if (!j.contains("frames") || !j["frames"].is_array() || j["frames"].empty())
      throw fail("missing non-empty array field 'frames'");

    const int label = j["label"].get<int>();
    if (label < 0) throw fail("label must be non-negative");
    if (expected_classes && static_cast<std::size_t>(label) >= *expected_classes)
      throw fail("label " + std::to_string(label) + " out of range for " +
                 std::to_string(*expected_classes) + " classes");
    max_label = std::max(max_label, label);

    const nlohmann::json& rows = j["frames"];
    const std::size_t t_len = rows.size();
    std::size_t d = 0;
    for (std::size_t t = 0; t < t_len; ++t) {
      if (!rows[t].is_array() || rows[t].empty()) throw fail("frame row must be a non-empty array");
      if (t == 0) {
        d = rows[t].size();
      } else if (rows[t].size() != d) {
        throw fail("ragged frame row: expected " + std::to_string(d) + " values, got " +
                   std::to_string(rows[t].size()));
      }
    }
    if (feat_dim == 0) {
      feat_dim = d;
    } else if (d != feat_dim) {
      throw fail("inconsistent feature width: expected " + std::to_string(feat_dim) + ", got " +
                 std::to_string(d));
    }

    Tensor frames({t_len, d});
    for (std::size_t t = 0; t < t_len; ++t) {
      for (std::size_t k = 0; k < d; ++k) {
        if (!rows[t][k].is_number()) throw fail("frame values must be numbers");
        frames.at(t, k) = rows[t][k].get<double>();
      }
    }

    FeatureSequence seq{std::move(frames), label, j["id"].get<std::string>(), std::nullopt};
    if (j.contains("signal_mask")) {
      const nlohmann::json& mj = j["signal_mask"];
      if (!mj.is_array() || mj.size() != t_len)
        throw fail("signal_mask must be a bool array of length " + std::to_string(t_len));
      std::vector<std::uint8_t> mask(t_len);
      for (std::size_t t = 0; t < t_len; ++t) {
        if (!mj[t].is_boolean()) throw fail("signal_mask entries must be booleans");
        mask[t] = mj[t].get<bool>() ? 1 : 0;
      }
      seq.signal_mask = std::move(mask);
    }
    ds.samples.push_back(std::move(seq));
  }

  if (ds.samples.empty()) throw IngestionError(path + ": no samples");
  ds.num_classes =
      expected_classes ? *expected_classes : static_cast<std::size_t>(max_label + 1);
  return ds;
}

// Evenly spaced frame selection idx_j = floor(j*T/n); repeats frames when
// the sequence is shorter than n. Preserves order, label and mask.
inline FeatureSequence uniform_subsample(const FeatureSequence& seq, std::size_t n) {
  require(n >= 1, "uniform_subsample: n must be at least 1");
  const std::size_t t_len = seq.length();
  require(t_len >= 1, "uniform_subsample: empty sequence");
  const std::size_t d = seq.feat_dim();

  FeatureSequence out;
  out.label = seq.label;
  out.id = seq.id;
  out.frames = Tensor({n, d});
  std::vector<std::uint8_t> mask;
  if (seq.signal_mask) mask.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t idx = (j * t_len) / n;
    for (std::size_t k = 0; k < d; ++k) out.frames.at(j, k) = seq.frames.at(idx, k);
    if (seq.signal_mask) mask[j] = (*seq.signal_mask)[idx];
  }
  if (seq.signal_mask) out.signal_mask = std::move(mask);
  return out;
}

inline Dataset uniform_subsample(const Dataset& ds, std::size_t n) {
  Dataset out;
  out.num_classes = ds.num_classes;
  out.samples.reserve(ds.samples.size());
  for (const FeatureSequence& s : ds.samples) out.samples.push_back(uniform_subsample(s, n));
  return out;
}

inline SynthConfig standard_synth_config() { return SynthConfig{}; }

inline std::optional<SynthConfig> synth_config_by_name(const std::string& name) {
  if (name == "standard" || name == "default") return standard_synth_config();
  return std::nullopt;
}

// Field-wise overrides of the standard config.
inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig cfg = standard_synth_config();
  if (!j.is_object()) throw IngestionError("synthetic config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "num_classes") cfg.num_classes = value.get<std::size_t>();
    else if (key == "feat_dim") cfg.feat_dim = value.get<std::size_t>();
    else if (key == "seq_len") cfg.seq_len = value.get<std::size_t>();
    else if (key == "signal_frames") cfg.signal_frames = value.get<std::size_t>();
    else if (key == "signal_noise") cfg.signal_noise = value.get<double>();
    else if (key == "distractor_mode") {
      const auto mode = distractor_mode_from_string(value.get<std::string>());
      if (!mode) throw IngestionError("synthetic config: unknown distractor_mode");
      cfg.distractor_mode = *mode;
    } else if (key == "pool_size") cfg.pool_size = value.get<std::size_t>();
    else if (key == "train_count") cfg.train_count = value.get<std::size_t>();
    else if (key == "test_count") cfg.test_count = value.get<std::size_t>();
    else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
    else throw IngestionError("synthetic config: unknown field '" + key + "'");
  }
  return cfg;
}

}  // namespace adascan
