// SPDX-License-Identifier: Apache-2.0
//
// c2w <verb> --config run.json [--seed N] --out DIR
#include <CLI11.hpp>

#include <iostream>

#include "c2w/io.hpp"
#include "c2w/pipeline.hpp"

namespace fs = std::filesystem;
using namespace c2w;

int main(int argc, char** argv) {
  CLI::App app{"Cavity-to-wall transfer learning pipeline on synthetic phantoms"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  bool dump_defaults = false;
  app.add_flag("--print-default-config", dump_defaults, "Print the default run config and exit");

  const std::vector<std::pair<std::string, std::string>> verbs = {
      {"gen-phantoms", "Generate the seeded phantom dataset (--seed sets the dataset seed)"},
      {"localize", "Crop every case to the ROI around the cavity"},
      {"train-cavity", "Train the cavity model"},
      {"finetune-wall", "Transfer the cavity model to the wall task with progressive unfreezing"},
      {"train-scratch", "Train the wall model from random initialization"},
      {"predict", "Write binary masks for one split"},
      {"evaluate", "Per-case metrics and a mean/sd summary"}};
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : verbs) {
    auto* s = app.add_subcommand(name, help);
    s->add_option("--config", config_path, "Run config (JSON)")->required()->check(CLI::ExistingFile);
    s->add_option("--seed", seed, "Run seed, overrides the config");
    s->add_option("--out", out_dir, "Output directory")->required();
    subs.push_back(s);
  }
  app.require_subcommand(0, 1);
  CLI11_PARSE(app, argc, argv);

  if (dump_defaults) {
    std::cout << pipeline::to_json(pipeline::default_config()).dump(2) << "\n";
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return 2;
  }
  const std::string verb = app.get_subcommands().front()->get_name();

  try {
    auto cfg = pipeline::load_run_config(config_path);
    if (seed) {
      if (verb == "gen-phantoms") {
        cfg.phantom.seed = *seed;
      } else {
        cfg.seed = *seed;
      }
    }
    const fs::path out(out_dir);
    if (verb == "gen-phantoms") {
      pipeline::gen_phantoms(cfg, out);
    } else if (verb == "localize") {
      pipeline::localize(cfg, out);
    } else if (verb == "train-cavity" || verb == "finetune-wall" || verb == "train-scratch") {
      const auto r = verb == "train-cavity"    ? pipeline::train_cavity(cfg, out)
                     : verb == "finetune-wall" ? pipeline::finetune_wall(cfg, out)
                                               : pipeline::train_scratch(cfg, out);
      std::cout << verb << ": best epoch " << r.best_epoch << ", val dice " << r.best_val_dice << " ("
                << r.log.size() << " epochs)\n";
    } else if (verb == "predict") {
      pipeline::predict(cfg, out);
    } else if (verb == "evaluate") {
      const auto s = pipeline::evaluate(cfg, out);
      std::cout << metrics::to_json(s).dump(2) << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "c2w " << verb << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "c2w " << verb << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
