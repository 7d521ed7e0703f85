#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"

#include "tracegen/commands.hpp"
#include "tracegen/util.hpp"

namespace {

int run(void (*cmd)(const tracegen::CommandOptions&), const tracegen::CommandOptions& opts) {
  try {
    cmd(opts);
    return 0;
  } catch (const tracegen::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional trace generation for business process event logs"};
  app.require_subcommand(1);

  tracegen::CommandOptions opts;
  std::uint64_t seed_value = 0;

  const auto add_common = [&](CLI::App* sub, bool needs_checkpoint, bool needs_extra) {
    sub->add_option("-c,--config", opts.config_path, "Experiment configuration (JSON)")
        ->required();
    sub->add_option("-o,--out", opts.out_override, "Override the output directory");
    sub->add_option("-s,--seed", seed_value, "Override the global seed")
        ->each([&](const std::string&) { opts.seed_override = seed_value; });
    sub->add_flag("-f,--force", opts.force, "Overwrite existing outputs / mix config hashes");
    if (needs_checkpoint)
      sub->add_option("--checkpoint", opts.checkpoint,
                      "Checkpoint path (relative to the output directory)");
    if (needs_extra)
      sub->add_option("--extra-logs", opts.extra_log_dirs,
                      "Extra directories of generated .xes logs to score alongside");
  };

  CLI::App* prepare = app.add_subcommand("prepare", "Parse, filter, label and split the dataset");
  add_common(prepare, false, false);
  CLI::App* train = app.add_subcommand("train", "Train the generator on the prepared splits");
  add_common(train, true, false);
  CLI::App* generate = app.add_subcommand("generate", "Generate conditioned logs from a checkpoint");
  add_common(generate, true, false);
  CLI::App* evaluate = app.add_subcommand("evaluate", "Score generated logs against the test split");
  add_common(evaluate, false, true);
  CLI::App* report = app.add_subcommand("report", "Render figures and tables from the evaluation");
  add_common(report, false, false);

  CLI11_PARSE(app, argc, argv);

  if (prepare->parsed()) return run(tracegen::cmd_prepare, opts);
  if (train->parsed()) return run(tracegen::cmd_train, opts);
  if (generate->parsed()) return run(tracegen::cmd_generate, opts);
  if (evaluate->parsed()) return run(tracegen::cmd_evaluate, opts);
  if (report->parsed()) return run(tracegen::cmd_report, opts);
  return 2;
}
