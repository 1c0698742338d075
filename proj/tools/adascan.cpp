// Command-line front end: train/eval/trace/sweep/gradcheck/gen-data over
// synthetic or JSONL feature sequences.

#include <string>
#include <vector>

#include <CLI11.hpp>

#include "adascan/commands.hpp"

namespace {

struct CliState {
  adascan::RunConfig cfg;
  std::string pooler = "adascan";
  std::string reg = "entropy";
  std::string synthetic;
  std::string data;
  std::string model;
  std::vector<std::size_t> hidden = {64, 32};
  std::size_t subsample = 0;
};

void add_data_options(CLI::App* cmd, CliState& st) {
  cmd->add_option("--synthetic", st.synthetic,
                  "named synthetic config ('standard') or an inline JSON object");
  cmd->add_option("--data", st.data, "dataset path: gen-data directory or JSONL file");
  cmd->add_option("--subsample", st.subsample, "uniformly subsample each sequence to N frames");
}

void add_output_options(CLI::App* cmd, CliState& st) {
  cmd->add_option("--out", st.cfg.out_dir, "output directory")->capture_default_str();
  cmd->add_option("--seed", st.cfg.hyper.seed, "run seed")->capture_default_str();
}

void add_train_options(CLI::App* cmd, CliState& st) {
  cmd->add_option("--pooler", st.pooler, "pooling method")
      ->check(CLI::IsMember({"adascan", "mean", "max", "mil"}))
      ->capture_default_str();
  cmd->add_option("--lambda", st.cfg.hyper.lambda, "importance regularizer weight")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--reg", st.reg, "importance regularizer")
      ->check(CLI::IsMember({"entropy", "l1", "none"}))
      ->capture_default_str();
  cmd->add_option("--epochs", st.cfg.hyper.epochs, "training epochs")->capture_default_str();
  cmd->add_option("--batch-size", st.cfg.hyper.batch_size, "samples per optimizer step")
      ->capture_default_str();
  cmd->add_option("--lr-pool", st.cfg.hyper.lr_pool, "learning rate for the importance MLP")
      ->capture_default_str();
  cmd->add_option("--lr-classifier", st.cfg.hyper.lr_classifier,
                  "learning rate for the classifier head")
      ->capture_default_str();
  cmd->add_option("--clip-norm", st.cfg.hyper.clip_norm, "global gradient-norm clip")
      ->capture_default_str();
  cmd->add_option("--dropout", st.cfg.hyper.dropout_p, "drop probability in [0,1)")
      ->capture_default_str();
  cmd->add_option("--hidden", st.hidden, "importance MLP hidden sizes h1,h2")
      ->delimiter(',')
      ->expected(2);
}

void finish_config(CLI::App* cmd, CliState& st) {
  st.cfg.pooler = *adascan::pooler_from_string(st.pooler);
  st.cfg.hyper.reg_kind = *adascan::reg_kind_from_string(st.reg);
  st.cfg.hyper.hidden1 = st.hidden[0];
  st.cfg.hyper.hidden2 = st.hidden[1];
  if (!st.synthetic.empty()) st.cfg.synthetic = st.synthetic;
  if (!st.data.empty()) st.cfg.data_path = st.data;
  if (!st.model.empty()) st.cfg.model_path = st.model;
  if (st.subsample > 0) st.cfg.subsample = st.subsample;
  if (cmd->count("--seed") > 0) st.cfg.seed_explicit = true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adaptive importance-weighted temporal pooling"};
  app.require_subcommand(1);
  CliState st;

  CLI::App* train = app.add_subcommand("train", "train a pooler end to end");
  add_data_options(train, st);
  add_train_options(train, st);
  add_output_options(train, st);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a saved model");
  eval->add_option("--model", st.model, "model JSON path")->required();
  eval->add_option("--pooler", st.pooler, "pooling method the model was trained with")
      ->check(CLI::IsMember({"adascan", "mean", "max", "mil"}))
      ->capture_default_str();
  add_data_options(eval, st);
  add_output_options(eval, st);

  CLI::App* trace = app.add_subcommand("trace", "emit per-frame importance traces");
  trace->add_option("--model", st.model, "model JSON path")->required();
  trace->add_option("--pooler", st.pooler, "must be adascan")
      ->check(CLI::IsMember({"adascan", "mean", "max", "mil"}))
      ->capture_default_str();
  trace->add_flag("--bars", st.cfg.bars, "render importance bars on the terminal");
  add_data_options(trace, st);
  add_output_options(trace, st);

  CLI::App* sweep = app.add_subcommand("sweep", "train once per lambda and report the trend");
  sweep->add_option("--lambdas", st.cfg.lambda_grid, "lambda grid")
      ->delimiter(',')
      ->capture_default_str();
  add_data_options(sweep, st);
  add_train_options(sweep, st);
  add_output_options(sweep, st);

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
  gradcheck->add_option("--seed", st.cfg.hyper.seed, "instance seed")->capture_default_str();

  CLI::App* gen_data = app.add_subcommand("gen-data", "write synthetic train/test JSONL files");
  gen_data->add_option("--synthetic", st.synthetic,
                       "named synthetic config ('standard') or an inline JSON object");
  add_output_options(gen_data, st);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return adascan::exit_code::usage;
  }

  CLI::App* active = app.get_subcommands().front();
  finish_config(active, st);

  if (active == train) return adascan::cmd_train(st.cfg);
  if (active == eval) return adascan::cmd_eval(st.cfg);
  if (active == trace) return adascan::cmd_trace(st.cfg);
  if (active == sweep) return adascan::cmd_sweep(st.cfg);
  if (active == gradcheck) return adascan::cmd_gradcheck(st.cfg);
  if (active == gen_data) return adascan::cmd_gen_data(st.cfg);
  return adascan::exit_code::usage;
}
