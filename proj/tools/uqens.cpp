#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "uqens/config.hpp"
#include "uqens/pipeline.hpp"

namespace {

struct Options {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> members;
  std::string scale = "desk";
  std::vector<std::string> images;
};

int fail(const std::string& kind, const std::string& message, int code) {
  nlohmann::json line{{"status", "error"}, {"kind", kind}, {"message", message}};
  std::cerr << line.dump() << std::endl;
  return code;
}

uqens::RunConfig resolve(const Options& o, bool synth_command) {
  uqens::RunConfig c = uqens::RunConfig::preset(uqens::parse_scale(o.scale));
  if (o.config) c = uqens::load_run_config(*o.config, c);
  if (o.seed) {
    c.seed = *o.seed;
    if (synth_command) c.synth.seed = *o.seed;
  }
  if (o.out) c.out = *o.out;
  if (o.members) {
    try {
      c.kernel_sizes = uqens::parse_size_list(*o.members);
    } catch (const std::exception& e) {
      throw uqens::ConfigError(std::string("--members: ") + e.what());
    }
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-weighted ensembles of Monte Carlo dropout networks"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config, "Run configuration file");
    cmd->add_option("--seed", o.seed, "Master seed (u64)");
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--members", o.members, "Member kernel sizes, e.g. 3,5,7");
    cmd->add_option("--scale", o.scale, "Preset: desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  };
  auto* train = app.add_subcommand("train", "Train one ensemble per tree level");
  auto* evaluate = app.add_subcommand("evaluate", "Stratified cross-validation with report CSVs");
  auto* predict = app.add_subcommand("predict", "Classify PGM images with a trained ensemble");
  auto* synth = app.add_subcommand("synth", "Write a synthetic four-class dataset");
  for (auto* cmd : {train, evaluate, predict, synth}) add_common(cmd);
  predict->add_option("images", o.images, "PGM images to classify");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    const uqens::RunConfig config = resolve(o, synth->parsed());
    nlohmann::json done{{"status", "ok"}};
    if (train->parsed()) {
      const auto r = uqens::run_train(config);
      done["command"] = "train";
      done["ensemble"] = r.ensemble_manifest.string();
      done["checkpoints"] = r.checkpoints.size();
    } else if (evaluate->parsed()) {
      const auto r = uqens::run_evaluate(config);
      done["command"] = "evaluate";
      done["out"] = config.out.string();
      done["files"] = r.files.size();
    } else if (predict->parsed()) {
      std::vector<std::filesystem::path> paths(o.images.begin(), o.images.end());
      done["command"] = "predict";
      done["predictions"] = uqens::run_predict(config, paths).string();
    } else {
      done["command"] = "synth";
      done["manifest"] = uqens::run_synth(config).string();
    }
    std::cout << done.dump() << std::endl;
    return 0;
  } catch (const uqens::ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const uqens::ShapeError& e) {
    return fail("shape", e.what(), 3);
  } catch (const uqens::NumericError& e) {
    return fail("numeric", e.what(), 4);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), 1);
  }
}
