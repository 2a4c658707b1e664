// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <set>

#include "c2w/io.hpp"
#include "c2w/pipeline.hpp"
#include "helpers.hpp"

using namespace c2w;
using namespace c2w::pipeline;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// A small, fast configuration: 20^3 phantoms, 16^3 ROI, 6/2/2 cases.
RunConfig small_config(const test::TempDir& dir) {
  RunConfig c = default_config();
  c.phantom.dims = {20, 20, 20};
  c.phantom.center_jitter = 1.0;
  c.phantom.radius_max = 0.25;
  c.phantom.seed = 3;
  c.splits = {6, 2, 2};
  c.roi.size = {16, 16, 16};
  c.paths.dataset = dir / "data";
  c.paths.crops = dir / "crops";
  c.cavity_train.max_epochs = 3;
  c.cavity_schedule.warmup_epochs = 1;
  c.cavity_schedule.horizon_epochs = 3;
  c.wall_train.max_epochs = 6;
  c.unfreeze = {1, 3, 2, 6};
  c.finetune_schedule.warmup_epochs = 0;
  c.finetune_schedule.horizon_epochs = 6;
  c.finetune_schedule.restart_boundaries = {2, 4};
  c.scratch_schedule.warmup_epochs = 1;
  c.scratch_schedule.horizon_epochs = 6;
  c.validate();
  return c;
}

std::vector<char> bytes(const fs::path& p) { return io::read_file(p); }

bool same_tree(const fs::path& a, const fs::path& b, const std::set<std::string>& skip = {}) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file() && !skip.count(e.path().filename().string())) fa.push_back(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file() && !skip.count(e.path().filename().string())) fb.push_back(fs::relative(e.path(), b));
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) return false;
  for (const auto& f : fa)
    if (bytes(a / f) != bytes(b / f)) return false;
  return true;
}

// Model whose head bias forces an all-background prediction.
net::Model<float> silent_model(const net::ModelSpec& spec) {
  auto m = net::Model<float>::build(spec, 1);
  for (auto& v : m.params().param("head.conv.bias").tensor.values()) v = -1e4f;
  return m;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("run config JSON round trip and validation") {
    const auto c = default_config();
    CHECK_NOTHROW(c.validate());
    const auto j = to_json(c);
    CHECK(to_json(run_config_from_json(j)) == j);
    CHECK(to_json(run_config_from_json(json::object())) == j);
    json bad = j;
    bad["typo"] = 1;
    CHECK_THROWS_WITH_AS(run_config_from_json(bad), doctest::Contains("InvalidConfig"), Error);
    bad = j;
    bad["roi_source"] = "somewhere";
    CHECK_THROWS_WITH_AS(run_config_from_json(bad), doctest::Contains("InvalidConfig"), Error);
    bad = j;
    bad["wall_train"]["max_epochs"] = 10000;
    CHECK_THROWS_WITH_AS(run_config_from_json(bad), doctest::Contains("InvalidConfig"), Error);
    bad = j;
    bad["roi"]["size"] = {0, 24, 24};
    CHECK_THROWS_AS(run_config_from_json(bad), Error);
  }

  TEST_CASE("transfer and scratch runs differ only in init, unfreeze and schedule") {
    auto c = default_config();
    c.paths.crops = "/data/crops";
    c.paths.cavity_checkpoint = "/runs/cav/model";
    const auto ft = training_record(c, "finetune-wall");
    const auto sc = training_record(c, "train-scratch");
    CHECK(ft.at("spec_hash") == sc.at("spec_hash"));
    std::set<std::string> differ;
    for (const auto& [k, v] : ft.items()) {
      if (!sc.contains(k) || sc.at(k) != v) differ.insert(k);
    }
    differ.erase("command");
    CHECK(differ == std::set<std::string>{"init", "schedule", "unfreeze"});
    CHECK(ft.at("unfreeze").is_object());
    CHECK(sc.at("unfreeze").is_null());
    CHECK(ft.at("schedule").at("kind") == "stagewise_cosine");
    CHECK(sc.at("schedule").at("kind") == "warmup_cosine");
  }

  TEST_CASE("localize with the oracle mask centres the crop on the cavity") {
    test::TempDir dir;
    const auto c = small_config(dir);
    gen_phantoms(c, c.paths.dataset);
    localize(c, c.paths.crops);
    CHECK_FALSE(fs::exists(c.paths.crops / ".partial"));
    const auto man = phantom::read_manifest(c.paths.crops);
    CHECK(man.test.size() == 2);
    for (const auto& id : man.train) {
      const auto rec = io::read_json(c.paths.crops / id / "roi.json");
      const auto meta = io::read_json(c.paths.dataset / id / "meta.json");
      for (int a = 0; a < 3; ++a) {
        CHECK(std::abs(rec.at("center_voxel")[a].get<double>() - meta.at("center_voxel")[a].get<double>()) <= 1.0);
      }
      CHECK(rec.at("source") == "oracle_mask");
      // One window for image and both masks.
      RoiWindow w;
      for (int a = 0; a < 3; ++a) w.start[a] = rec.at("window_start")[a].get<std::int64_t>();
      w.size = c.roi.size;
      const auto img = load_volume(c.paths.dataset / id / "image");
      const auto expect_img = zscore_normalize(crop(img, w, c.roi.pad_value));
      const auto got_img = load_volume(c.paths.crops / id / "image");
      CHECK(std::equal(got_img.data().begin(), got_img.data().end(), expect_img.data().begin()));
      for (const char* m : {"cavity", "wall"}) {
        const auto src = load_mask(c.paths.dataset / id / m);
        const auto got = load_mask(c.paths.crops / id / m);
        const auto want = crop(src, w);
        CHECK(std::equal(got.data().begin(), got.data().end(), want.data().begin()));
        // The whole structure fits in the ROI.
        CHECK(count_foreground(got) == count_foreground(src));
      }
    }
  }

  TEST_CASE("coarse-model localization and the empty-prediction fallback") {
    test::TempDir dir;
    auto c = small_config(dir);
    c.splits = {1, 1, 1};
    gen_phantoms(c, c.paths.dataset);
    c.roi_source = RoiSource::CoarseModel;
    c.paths.coarse_checkpoint = dir / "coarse" / "model";
    fs::create_directories(dir / "coarse");

    net::save_checkpoint(silent_model(c.model), c.paths.coarse_checkpoint);
    localize(c, dir / "fallback");
    const auto rec = io::read_json(dir / "fallback" / "case_0000" / "roi.json");
    CHECK(rec.at("fallback") == true);
    CHECK(rec.at("source") == "coarse_model");
    const auto vc = volume_center(c.phantom.dims);
    CHECK(rec.at("center_voxel")[0].get<double>() == vc.z);
    CHECK(rec.at("center_voxel")[2].get<double>() == vc.x);

    c.empty_fallback = EmptyFallback::Abort;
    CHECK_THROWS_WITH_AS(localize(c, dir / "abort"), doctest::Contains("EmptyPrediction"), Error);
    CHECK(fs::exists(dir / "abort" / ".partial"));

    // Smoke run with a model that predicts something.
    c.empty_fallback = EmptyFallback::VolumeCenter;
    auto live = net::Model<float>::build(c.model, 2);
    for (auto& v : live.params().param("head.conv.bias").tensor.values()) v = 1e4f;
    net::save_checkpoint(live, c.paths.coarse_checkpoint);
    localize(c, dir / "coarse_out");
    const auto rec2 = io::read_json(dir / "coarse_out" / "case_0000" / "roi.json");
    CHECK(rec2.at("fallback") == false);
    // All-foreground prediction: its centre of mass is the volume centre.
    CHECK(rec2.at("center_voxel")[1].get<double>() == doctest::Approx(vc.y));
  }

  TEST_CASE("missing inputs are precondition failures with a partial-free output") {
    test::TempDir dir;
    auto c = small_config(dir);
    CHECK_THROWS_WITH_AS(train_cavity(c, dir / "cav"), doctest::Contains("PreconditionFailed"), Error);
    CHECK_FALSE(fs::exists(dir / "cav"));
    CHECK_THROWS_WITH_AS(localize(c, dir / "crops"), doctest::Contains("PreconditionFailed"), Error);
    c.paths.crops = dir.path();
    io::write_json(dir / "manifest.json", {{"splits", {{"train", {}}, {"val", {}}, {"test", {}}}}});
    CHECK_THROWS_WITH_AS(finetune_wall(c, dir / "ft"), doctest::Contains("PreconditionFailed"), Error);
  }

  TEST_CASE("full pipeline: training, transfer, prediction, evaluation and determinism") {
    test::TempDir dir;
    auto c = small_config(dir);
    gen_phantoms(c, c.paths.dataset);
    localize(c, c.paths.crops);

    const auto cav = train_cavity(c, dir / "cav");
    CHECK(cav.log.size() == 3);
    CHECK(fs::exists(dir / "cav" / "model.manifest.json"));
    CHECK(fs::exists(dir / "cav" / "train_log.jsonl"));
    CHECK_FALSE(fs::exists(dir / "cav" / ".partial"));
    train_cavity(c, dir / "cav2");
    CHECK(bytes(dir / "cav" / "model.weights.raw") == bytes(dir / "cav2" / "model.weights.raw"));
    CHECK(bytes(dir / "cav" / "model.manifest.json") == bytes(dir / "cav2" / "model.manifest.json"));

    c.paths.cavity_checkpoint = dir / "cav" / "model";
    const auto ft = finetune_wall(c, dir / "ft");
    REQUIRE(ft.log.size() == 6);
    const auto all = ft.best.params().tags();
    for (std::size_t e = 0; e < 6; ++e) {
      const auto want = train::unfreeze_state(c.unfreeze, e, all);
      CHECK(std::set<std::string>(ft.log[e].trainable_tags.begin(), ft.log[e].trainable_tags.end()) == want);
    }
    const auto sc = train_scratch(c, dir / "sc");
    CHECK(sc.log.size() == 6);
    CHECK(io::read_json(dir / "ft" / "run.json").at("spec_hash") ==
          io::read_json(dir / "sc" / "run.json").at("spec_hash"));
    // Same log schema, row for row.
    const auto lf = io::read_file(dir / "ft" / "train_log.jsonl");
    const auto ls = io::read_file(dir / "sc" / "train_log.jsonl");
    CHECK(std::count(lf.begin(), lf.end(), '\n') == std::count(ls.begin(), ls.end(), '\n'));

    // Step A only: the encoder leaves theta_cav untouched.
    {
      auto a = c;
      a.wall_train.max_epochs = 2;
      const auto r = finetune_wall(a, dir / "ft_a");
      const auto src = net::load_checkpoint(c.paths.cavity_checkpoint);
      for (const auto& p : r.best.params()) {
        if (p.stage_tag.rfind("enc.", 0) != 0) continue;
        const auto q = src.params().get(p.name);
        CHECK(std::equal(p.tensor.values().begin(), p.tensor.values().end(), q.values().begin()));
      }
    }

    c.paths.checkpoint = dir / "ft" / "model";
    c.paths.predictions = dir / "pred";
    predict(c, dir / "pred");
    predict(c, dir / "pred2");
    CHECK(same_tree(dir / "pred", dir / "pred2"));
    const auto s = evaluate(c, dir / "eval");
    CHECK(s.cases == 2);
    std::ifstream in(dir / "eval" / "metrics.jsonl");
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      const auto r = json::parse(line);
      for (const char* k : {"case_id", "dice", "surface_dice", "tol_mm", "hd95_mm", "assd_mm", "error"}) {
        CHECK(r.contains(k));
      }
      ++n;
    }
    CHECK(n == 2);

    // Whole pipeline again from scratch: byte-identical artifacts.
    test::TempDir dir2;
    auto c2 = small_config(dir2);
    gen_phantoms(c2, c2.paths.dataset);
    localize(c2, c2.paths.crops);
    CHECK(same_tree(c.paths.dataset, c2.paths.dataset));
    train_cavity(c2, dir2 / "cav");
    c2.paths.cavity_checkpoint = dir2 / "cav" / "model";
    finetune_wall(c2, dir2 / "ft");
    c2.paths.checkpoint = dir2 / "ft" / "model";
    c2.paths.predictions = dir2 / "pred";
    predict(c2, dir2 / "pred");
    evaluate(c2, dir2 / "eval");
    const std::set<std::string> volatile_files{"train_log.jsonl", "run.json", "manifest.json", "roi.json"};
    CHECK(same_tree(dir / "cav", dir2 / "cav", volatile_files));
    CHECK(same_tree(dir / "ft", dir2 / "ft", volatile_files));
    CHECK(same_tree(dir / "pred", dir2 / "pred"));
    CHECK(same_tree(dir / "eval", dir2 / "eval"));
  }

  TEST_CASE("evaluate: perfect self-comparison, missing cases, single-case sd, empty predictions") {
    test::TempDir dir;
    auto c = small_config(dir);
    gen_phantoms(c, c.paths.dataset);
    localize(c, c.paths.crops);

    auto self = c;
    self.paths.predictions = c.paths.crops;
    self.paths.reference = c.paths.crops;
    self.pred_mask = "wall";
    const auto s = evaluate(self, dir / "self");
    CHECK(s.dice.mean == 1.0);
    CHECK(s.surface_dice.mean == 1.0);
    CHECK(s.hd95.mean == 0.0);
    CHECK(s.assd.mean == 0.0);

    // Copy predictions for all but one test case.
    const auto ids = case_ids(c.paths.crops, "test", "wall");
    REQUIRE(ids.size() == 2);
    fs::create_directories(dir / "partial_pred" / ids[0]);
    for (const char* ext : {".json", ".raw"}) {
      fs::copy_file(c.paths.crops / ids[0] / (std::string("wall") + ext),
                    dir / "partial_pred" / ids[0] / (std::string("pred") + ext));
    }
    auto miss = c;
    miss.paths.predictions = dir / "partial_pred";
    CHECK_THROWS_WITH_AS(evaluate(miss, dir / "e1"), doctest::Contains(ids[1].c_str()), Error);
    CHECK_THROWS_WITH_AS(evaluate(miss, dir / "e1"), doctest::Contains("CaseMismatch"), Error);

    // Single case: sd is 0.
    test::TempDir one;
    fs::create_directories(one / "r" / "x");
    fs::create_directories(one / "p" / "x");
    Mask3 m(Dims{4, 4, 4}, {});
    m.at(1, 1, 1) = 1;
    m.at(1, 1, 2) = 1;
    save_mask(m, one / "r" / "x" / "wall");
    Mask3 pm(Dims{4, 4, 4}, {});
    pm.at(1, 1, 1) = 1;
    save_mask(pm, one / "p" / "x" / "pred");
    auto single = c;
    single.paths.predictions = one / "p";
    single.paths.reference = one / "r";
    const auto s1 = evaluate(single, one / "e");
    CHECK(s1.cases == 1);
    CHECK(s1.dice.sd == 0.0);
    CHECK(s1.dice.mean == doctest::Approx(2.0 / 3.0));

    // An all-background model writes valid empty masks; evaluate reports EmptyMask.
    net::save_checkpoint(silent_model(c.model), dir / "silent");
    auto e = c;
    e.paths.checkpoint = dir / "silent";
    e.paths.predictions = dir / "empty_pred";
    predict(e, dir / "empty_pred");
    const auto pm0 = load_mask(dir / "empty_pred" / ids[0] / "pred");
    CHECK(count_foreground(pm0) == 0);
    const auto se = evaluate(e, dir / "e2");
    CHECK(se.errors == 2);
    CHECK(se.dice.mean == 0.0);
    const auto line = io::read_file(dir / "e2" / "metrics.jsonl");
    CHECK(std::string(line.begin(), line.end()).find("EmptyMask") != std::string::npos);
  }

  TEST_CASE("command-line verbs exit nonzero on errors") {
    test::TempDir dir;
    auto c = small_config(dir);
    c.splits = {1, 1, 1};
    io::write_json(dir / "run.json", to_json(c));
    const std::string exe = C2W_CLI_PATH;
    auto sh = [&](const std::string& args) {
      return std::system((exe + " " + args + " > /dev/null 2>&1").c_str());
    };
    const std::string cfg = " --config " + (dir / "run.json").string();
    CHECK(sh("gen-phantoms" + cfg + " --out " + c.paths.dataset.string()) == 0);
    CHECK(sh("localize" + cfg + " --out " + c.paths.crops.string()) == 0);
    CHECK(fs::exists(c.paths.crops / "manifest.json"));
    CHECK(sh("finetune-wall" + cfg + " --out " + (dir / "ft").string()) != 0);
    CHECK(sh("evaluate" + cfg + " --out " + (dir / "ev").string()) != 0);
    CHECK(sh("nonsense" + cfg) != 0);
    CHECK(sh("--print-default-config") == 0);
  }
}
