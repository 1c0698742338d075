#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "adascan/gradcheck.hpp"
#include "adascan/model_io.hpp"
#include "adascan/train.hpp"

namespace adascan {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int runtime = 1;
inline constexpr int usage = 2;
}  // namespace exit_code

// Bad flags or flag combinations; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

struct RunConfig {
  Pooler pooler = Pooler::adascan;
  HyperParams hyper;
  bool seed_explicit = false;
  std::optional<std::string> synthetic;  // named config or inline JSON
  std::optional<std::string> data_path;  // gen-data directory or JSONL file
  std::optional<std::string> model_path;
  std::optional<std::size_t> subsample;
  std::string out_dir = "out";
  std::vector<double> lambda_grid = {0.0, 0.1, 1.0, 10.0, 100.0};
  bool bars = false;
};

inline SynthConfig resolve_synth_config(const std::string& selector) {
  if (!selector.empty() && selector.front() == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(selector);
    } catch (const nlohmann::json::parse_error& e) {
      throw UsageError(std::string("--synthetic: ") + e.what());
    }
    try {
      return synth_config_from_json(j);
    } catch (const std::exception& e) {
      throw UsageError(std::string("--synthetic: ") + e.what());
    }
  }
  const auto named = synth_config_by_name(selector);
  if (!named) throw UsageError("unknown synthetic config '" + selector + "' (try 'standard')");
  return *named;
}

struct DataBundle {
  Dataset train;
  Dataset test;
};

inline DataBundle resolve_train_data(const RunConfig& cfg) {
  if (cfg.synthetic && cfg.data_path)
    throw UsageError("choose exactly one of --synthetic and --data");
  DataBundle bundle;
  if (cfg.synthetic) {
    SynthSplits splits = generate_synthetic(resolve_synth_config(*cfg.synthetic));
    bundle.train = std::move(splits.train);
    bundle.test = std::move(splits.test);
  } else if (cfg.data_path) {
    const std::filesystem::path p = *cfg.data_path;
    if (!std::filesystem::is_directory(p))
      throw UsageError("--data must name a gen-data directory holding train.jsonl and test.jsonl");
    bundle.train = load_jsonl((p / "train.jsonl").string());
    bundle.test = load_jsonl((p / "test.jsonl").string(), bundle.train.num_classes);
  } else {
    throw UsageError("a data source is required (--synthetic or --data)");
  }
  if (cfg.subsample) {
    bundle.train = uniform_subsample(bundle.train, *cfg.subsample);
    bundle.test = uniform_subsample(bundle.test, *cfg.subsample);
  }
  return bundle;
}

// Single dataset for eval/trace: the test split of a synthetic config, a
// JSONL file, or test.jsonl inside a gen-data directory.
inline Dataset resolve_eval_data(const RunConfig& cfg, std::optional<std::size_t> expected_classes) {
  if (cfg.synthetic && cfg.data_path)
    throw UsageError("choose exactly one of --synthetic and --data");
  Dataset ds;
  if (cfg.synthetic) {
    SynthSplits splits = generate_synthetic(resolve_synth_config(*cfg.synthetic));
    ds = std::move(splits.test);
    if (expected_classes && ds.num_classes != *expected_classes)
      throw UsageError("dataset has " + std::to_string(ds.num_classes) +
                       " classes but the model expects " + std::to_string(*expected_classes));
  } else if (cfg.data_path) {
    std::filesystem::path p = *cfg.data_path;
    if (std::filesystem::is_directory(p)) p /= "test.jsonl";
    ds = load_jsonl(p.string(), expected_classes);
  } else {
    throw UsageError("a data source is required (--synthetic or --data)");
  }
  if (cfg.subsample) ds = uniform_subsample(ds, *cfg.subsample);
  return ds;
}

inline nlohmann::json metrics_to_json(int epoch, const std::string& split, const Metrics& m) {
  nlohmann::json j;
  j["epoch"] = epoch;
  j["split"] = split;
  j["accuracy"] = m.accuracy;
  j["mean_loss"] = m.mean_loss;
  j["mean_selected_fraction"] =
      m.mean_selected_fraction ? nlohmann::json(*m.mean_selected_fraction) : nlohmann::json();
  j["signal_gap"] = m.signal_gap ? nlohmann::json(*m.signal_gap) : nlohmann::json();
  return j;
}

inline void write_metrics_jsonl(const std::string& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot open for writing: " + path);
  for (const EpochRecord& rec : history) {
    out << metrics_to_json(rec.epoch, "train", rec.train_metrics).dump() << '\n';
    out << metrics_to_json(rec.epoch, "test", rec.test_metrics).dump() << '\n';
  }
}

namespace detail {

template <class Fn>
int run_command(Fn&& fn) {
  try {
    return fn();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return exit_code::usage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code::runtime;
  }
}

// Shortest round-trip-exact decimal form, shared with the JSON artifacts.
inline std::string format_double(double v) { return nlohmann::json(v).dump(); }

}  // namespace detail

inline int cmd_train(const RunConfig& cfg) {
  return detail::run_command([&]() {
    DataBundle data = resolve_train_data(cfg);
    const Dims dims{data.train.feat_dim(), data.train.num_classes, cfg.hyper.hidden1,
                    cfg.hyper.hidden2};
    ModelParams params = init_params(dims, cfg.hyper.seed);
    params.hyper = cfg.hyper;
    TrainResult result = train(data.train, data.test, std::move(params), cfg.pooler);

    std::filesystem::create_directories(cfg.out_dir);
    const auto out = std::filesystem::path(cfg.out_dir);
    save_model(result.params, (out / "model.json").string());
    write_metrics_jsonl((out / "metrics.jsonl").string(), result.history);

    const Metrics& final_test = result.history.back().test_metrics;
    std::cout << "trained pooler=" << to_string(cfg.pooler) << " epochs=" << cfg.hyper.epochs
              << " test_accuracy=" << detail::format_double(final_test.accuracy)
              << " mean_loss=" << detail::format_double(final_test.mean_loss) << '\n';
    std::cout << "wrote " << (out / "model.json").string() << " and "
              << (out / "metrics.jsonl").string() << '\n';
    return exit_code::ok;
  });
}

inline int cmd_eval(const RunConfig& cfg) {
  return detail::run_command([&]() {
    if (!cfg.model_path) throw UsageError("eval requires --model");
    const ModelParams params = load_model(*cfg.model_path);
    const Dataset ds = resolve_eval_data(cfg, params.dims().num_classes);
    const Metrics m = evaluate(ds, params, {cfg.pooler, std::nullopt});
    const nlohmann::json j = metrics_to_json(0, "eval", m);
    std::filesystem::create_directories(cfg.out_dir);
    const auto path = std::filesystem::path(cfg.out_dir) / "eval.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestionError("cannot open for writing: " + path.string());
    out << j.dump(2) << '\n';
    std::cout << j.dump() << '\n';
    return exit_code::ok;
  });
}

inline int cmd_trace(const RunConfig& cfg) {
  return detail::run_command([&]() {
    if (cfg.pooler != Pooler::adascan)
      throw UsageError("trace requires --pooler adascan; no importances exist for " +
                       std::string(to_string(cfg.pooler)));
    if (!cfg.model_path) throw UsageError("trace requires --model");
    const ModelParams params = load_model(*cfg.model_path);
    const Dataset ds = resolve_eval_data(cfg, params.dims().num_classes);

    std::filesystem::create_directories(cfg.out_dir);
    const auto path = std::filesystem::path(cfg.out_dir) / "trace.jsonl";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestionError("cannot open for writing: " + path.string());

    for (const FeatureSequence& seq : ds.samples) {
      Tape tape;
      const LossOutput res = total_loss(seq, params, tape);
      const Tensor& probs = res.probs.value();
      std::size_t pred = 0;
      for (std::size_t c = 1; c < probs.size(); ++c) {
        if (probs[c] > probs[pred]) pred = c;
      }
      nlohmann::json j;
      j["id"] = seq.id;
      j["label"] = seq.label;
      j["pred"] = pred;
      nlohmann::json gammas = nlohmann::json::array();
      nlohmann::json selected = nlohmann::json::array();
      for (const Var& g : res.gammas) {
        gammas.push_back(g.item());
        selected.push_back(g.item() > kSelectedThreshold);
      }
      j["gammas"] = std::move(gammas);
      j["selected"] = std::move(selected);
      if (seq.signal_mask) {
        nlohmann::json mask = nlohmann::json::array();
        for (std::uint8_t b : *seq.signal_mask) mask.push_back(b != 0);
        j["signal_mask"] = std::move(mask);
      }
      out << j.dump() << '\n';

      if (cfg.bars) {
        std::cout << seq.id << " label=" << seq.label << " pred=" << pred << '\n';
        for (std::size_t t = 0; t < res.gammas.size(); ++t) {
          const double g = res.gammas[t].item();
          const int width = static_cast<int>(g * 40.0 + 0.5);
          std::printf("  t=%2zu gamma=%.3f |%-40s|\n", t, g, std::string(width, '#').c_str());
        }
      }
    }
    std::cout << "wrote " << ds.samples.size() << " traces to " << path.string() << '\n';
    return exit_code::ok;
  });
}

struct SweepRow {
  double lambda = 0.0;
  double accuracy = 0.0;
  double selected_fraction = 0.0;
};

inline std::vector<SweepRow> run_sweep(const DataBundle& data, const RunConfig& cfg) {
  std::vector<double> grid = cfg.lambda_grid;
  require(!grid.empty(), "run_sweep: empty lambda grid");
  std::sort(grid.begin(), grid.end());
  const Dims dims{data.train.feat_dim(), data.train.num_classes, cfg.hyper.hidden1,
                  cfg.hyper.hidden2};
  std::vector<SweepRow> rows;
  rows.reserve(grid.size());
  for (double lambda : grid) {
    ModelParams params = init_params(dims, cfg.hyper.seed);
    params.hyper = cfg.hyper;
    params.hyper.lambda = lambda;
    TrainResult result = train(data.train, data.test, std::move(params), Pooler::adascan);
    const Metrics& m = result.history.back().test_metrics;
    rows.push_back({lambda, m.accuracy, m.mean_selected_fraction.value_or(0.0)});
  }
  return rows;
}

inline int cmd_sweep(const RunConfig& cfg) {
  return detail::run_command([&]() {
    if (cfg.pooler != Pooler::adascan)
      throw UsageError("sweep varies the importance regularizer; it requires --pooler adascan");
    if (cfg.lambda_grid.empty()) throw UsageError("--lambdas must name at least one value");
    DataBundle data = resolve_train_data(cfg);
    const std::vector<SweepRow> rows = run_sweep(data, cfg);

    std::filesystem::create_directories(cfg.out_dir);
    const auto path = std::filesystem::path(cfg.out_dir) / "sweep.csv";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestionError("cannot open for writing: " + path.string());
    out << "lambda,accuracy,mean_selected_fraction\n";
    for (const SweepRow& r : rows) {
      out << detail::format_double(r.lambda) << ',' << detail::format_double(r.accuracy) << ','
          << detail::format_double(r.selected_fraction) << '\n';
      std::cout << "lambda=" << detail::format_double(r.lambda)
                << " accuracy=" << detail::format_double(r.accuracy)
                << " selected=" << detail::format_double(r.selected_fraction) << '\n';
    }
    std::cout << "wrote " << path.string() << '\n';
    return exit_code::ok;
  });
}

struct GradcheckReport {
  FiniteDiffReport fd;
  bool ok = false;
  double threshold = 1e-4;
};

// Differentiates the full objective on a small seeded instance and compares
// every parameter block against central differences. The corrupt hook lets
// tests break one gradient on purpose.
inline GradcheckReport run_gradcheck(
    std::uint64_t seed, const std::function<void(std::vector<Tensor>&)>& corrupt = {}) {
  const Dims dims{8, 3, 6, 4};
  const std::size_t seq_len = 5;

  std::mt19937_64 rng(derive_seed(seed, 3));
  Tensor frames({seq_len, dims.feat_dim});
  for (std::size_t i = 0; i < frames.size(); ++i) frames[i] = uniform_in(rng, -2.0, 2.0);
  FeatureSequence seq{std::move(frames),
                      static_cast<int>(uniform_below(rng, dims.num_classes)), "gradcheck",
                      std::nullopt};

  ModelParams base = init_params(dims, seed);
  base.hyper.lambda = 1.0;
  base.hyper.reg_kind = RegKind::entropy;

  auto assemble = [&base](const std::vector<Tensor>& blocks) {
    ModelParams p = base;
    auto dst = param_blocks(p);
    for (std::size_t b = 0; b < kNumParamBlocks; ++b) *dst[b] = blocks[b];
    return p;
  };
  auto loss_fn = [&](const std::vector<Tensor>& blocks) {
    const ModelParams p = assemble(blocks);
    Tape tape;
    return total_loss(seq, p, tape).loss.item();
  };
  auto grad_fn = [&](const std::vector<Tensor>& blocks) {
    const ModelParams p = assemble(blocks);
    Tape tape;
    const LossOutput res = total_loss(seq, p, tape);
    const Gradients g = tape.backward(res.loss);
    std::vector<Tensor> grads;
    grads.reserve(kNumParamBlocks);
    for (std::size_t b = 0; b < kNumParamBlocks; ++b) grads.push_back(g.wrt(res.params.blocks[b]));
    if (corrupt) corrupt(grads);
    return grads;
  };

  std::vector<Tensor> blocks;
  blocks.reserve(kNumParamBlocks);
  for (const Tensor* t : param_blocks(base)) blocks.push_back(*t);

  GradcheckReport report;
  report.fd = finite_diff_check(loss_fn, grad_fn, std::move(blocks), 1e-5);
  report.ok = report.fd.max_rel_error < report.threshold;
  return report;
}

inline int cmd_gradcheck(const RunConfig& cfg) {
  return detail::run_command([&]() {
    const GradcheckReport report = run_gradcheck(cfg.hyper.seed);
    std::cout << "gradient check on D=8 T=5 C=3 h=(6,4), step=1e-5, seed=" << cfg.hyper.seed
              << '\n';
    for (std::size_t b = 0; b < kNumParamBlocks; ++b) {
      std::printf("  %-14s max_rel_error=%.3e\n", kParamBlockNames[b],
                  report.fd.block_max_rel_error[b]);
    }
    std::printf("  worst: block=%s coord=%zu analytic=%.9e numeric=%.9e\n",
                kParamBlockNames[report.fd.worst_block], report.fd.worst_coord,
                report.fd.worst_analytic, report.fd.worst_numeric);
    std::cout << (report.ok ? "PASS" : "FAIL") << ": max relative error "
              << detail::format_double(report.fd.max_rel_error) << " (threshold "
              << detail::format_double(report.threshold) << ")\n";
    return report.ok ? exit_code::ok : exit_code::runtime;
  });
}

inline int cmd_gen_data(const RunConfig& cfg) {
  return detail::run_command([&]() {
    if (cfg.data_path) throw UsageError("gen-data takes --synthetic, not --data");
    SynthConfig sc =
        cfg.synthetic ? resolve_synth_config(*cfg.synthetic) : standard_synth_config();
    if (cfg.seed_explicit) sc.seed = cfg.hyper.seed;
    const SynthSplits splits = generate_synthetic(sc);

    std::filesystem::create_directories(cfg.out_dir);
    const auto out = std::filesystem::path(cfg.out_dir);
    save_jsonl(splits.train, (out / "train.jsonl").string());
    save_jsonl(splits.test, (out / "test.jsonl").string());
    std::cout << "generated C=" << sc.num_classes << " D=" << sc.feat_dim << " T=" << sc.seq_len
              << " k=" << sc.signal_frames << " train=" << splits.train.samples.size()
              << " test=" << splits.test.samples.size() << " seed=" << sc.seed << '\n';
    std::cout << "wrote " << (out / "train.jsonl").string() << " and "
              << (out / "test.jsonl").string() << '\n';
    return exit_code::ok;
  });
}

}  // namespace adascan
