#include <doctest.h>

#include <fstream>

#include "awb/commands.hpp"
#include "awb/checkpoint.hpp"
#include "support/synthetic.hpp"

using namespace awb;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("awb_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig mini_train_config(const fs::path& data, const fs::path& out, ModelKind kind) {
  ExperimentConfig cfg;
  cfg.model.kind = kind;
  cfg.model.backbone_scale = "tiny";
  cfg.model.hist.bins_per_axis = 8;
  cfg.model.hist.spp_strides = {1, 2, 4};
  cfg.model.hist.out_channels = 16;
  cfg.model.seed = 5;
  cfg.batch_size = 4;
  cfg.epochs = 1;
  cfg.patch = 32;
  cfg.rotation = 5.0;
  cfg.resize_min = 0.8;
  cfg.resize_max = 1.0;
  cfg.val_split = 0.25;
  cfg.checkpoint_every = 10;
  cfg.trainset1 = data.string();
  cfg.checkpoint_dir = out.string();
  return cfg;
}

}  // namespace

TEST_CASE("prediction csv round trips both arities") {
  const fs::path dir = temp_dir("predcsv");
  const std::vector<PredictionRecord> single = {
      {"a", {0.1, 0.9, 0.4}}, {"b", {1.0 / 7.0, 0.5, 0.25}}};
  write_predictions_csv(dir / "s.csv", single, false);
  bool two = true;
  const auto back = read_predictions_csv(dir / "s.csv", &two);
  CHECK(!two);
  REQUIRE(back.size() == 2);
  CHECK(back.at("b")[0] == 1.0 / 7.0);

  const std::vector<PredictionRecord> pair = {{"c", {0.1, 0.9, 0.4, 0.2, 0.8, 0.3}}};
  write_predictions_csv(dir / "p.csv", pair, true);
  const auto back2 = read_predictions_csv(dir / "p.csv", &two);
  CHECK(two);
  CHECK(back2.at("c").size() == 6);

  CHECK_THROWS_AS(write_predictions_csv(dir / "x.csv", single, true), Error);
  fs::remove_all(dir);
}

TEST_CASE("report csv round trips the published numbers") {
  const fs::path dir = temp_dir("report");
  const std::vector<std::pair<std::string, double>> metrics = {
      {"recovery_mean", 1.914},
      {"recovery_worst25", 4.979},
      {"reproduction_mean", 2.541},
      {"two_illum_mean_squared", 31.026}};
  write_report_csv(dir / "r.csv", metrics);
  const auto back = read_report_csv(dir / "r.csv");
  REQUIRE(back.size() == metrics.size());
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    CHECK(back[i].first == metrics[i].first);
    CHECK(back[i].second == metrics[i].second);
  }
  const std::string text = format_report(metrics);
  CHECK(text.find("1.9140") != std::string::npos);
  CHECK(text.find("31.0260") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("config parser is strict") {
  const fs::path dir = temp_dir("config");
  fs::create_directories(dir / "data");
  const fs::path good = dir / "good.ini";
  {
    std::ofstream out(good);
    out << "# comment\n[model]\nkind = A\nbackbone = tiny\nbins = 16\nseed = 9\n"
        << "[train]\nlearning_rate = 0.001\nbatch_size = 4\nepochs = 2\npatch = 32\n"
        << "[data]\ntrainset1 = " << (dir / "data").string() << "\nval_split = 0.2\n"
        << "[output]\ncheckpoint_dir = " << (dir / "out").string() << "\n";
  }
  const ExperimentConfig cfg = load_experiment_config(good.string());
  CHECK(cfg.model.kind == ModelKind::A);
  CHECK(cfg.model.hist.bins_per_axis == 16);
  CHECK(cfg.model.seed == 9);
  CHECK(cfg.learning_rate == 0.001);
  CHECK(cfg.batch_size == 4);
  CHECK(cfg.val_split == 0.2);

  auto expect_config_error = [&](const std::string& body) {
    const fs::path p = dir / "bad.ini";
    std::ofstream out(p);
    out << body;
    out.close();
    try {
      load_experiment_config(p.string());
      FAIL_CHECK("expected a config error for: " << body);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Config);
    }
  };
  expect_config_error("[model]\nkindx = A\n");
  expect_config_error("[mystery]\nkind = A\n");
  expect_config_error("[train]\nbatch_size = four\n");
  expect_config_error("[train]\nbatch_size = 2.5\n");
  expect_config_error("");  // missing trainset1
  fs::remove_all(dir);
}

TEST_CASE("baseline and eval on a synthetic manifest") {
  const fs::path data = temp_dir("baseline_data");
  synth::DatasetSpec spec;
  spec.count = 12;
  spec.seed = 100;
  synth::write_dataset(data, spec);

  const fs::path out = temp_dir("baseline_out");
  cmd_baseline(data, BaselineMethod::GrayWorld, "", Track::General, out / "gw.csv", false);
  // overwrite protection
  CHECK_THROWS_AS(
      cmd_baseline(data, BaselineMethod::GrayWorld, "", Track::General, out / "gw.csv", false),
      Error);

  const auto metrics = cmd_eval(out / "gw.csv", data / "gt.csv", Track::General,
                                out / "metrics.csv", out / "metrics.txt");
  REQUIRE(metrics.size() == 8);
  CHECK(metrics[0].first == "recovery_worst25");
  // the tiled palette is non-neutral: Gray World is measurably biased
  double rec_mean = -1.0;
  for (const auto& [k, v] : metrics)
    if (k == "recovery_mean") rec_mean = v;
  CHECK(rec_mean > 3.0);
  CHECK(fs::exists(out / "metrics.csv"));
  CHECK(fs::exists(out / "metrics.txt"));
  const auto round = read_report_csv(out / "metrics.csv");
  CHECK(round.size() == 8);

  // const baseline predicts the trainset mean illuminant everywhere
  cmd_baseline(data, BaselineMethod::Const, data, Track::General, out / "const.csv", false);
  const auto cm = cmd_eval(out / "const.csv", data / "gt.csv", Track::General, "", "");
  REQUIRE(cm.size() == 8);
  CHECK_THROWS_AS(cmd_baseline(data, BaselineMethod::Const, "", Track::General,
                               out / "c2.csv", false),
                  Error);
  fs::remove_all(data);
  fs::remove_all(out);
}

TEST_CASE("two-illuminant eval requires six columns") {
  const fs::path dir = temp_dir("eval2");
  {
    std::ofstream gt(dir / "gt.csv");
    gt << "image_id,l_r,l_g,l_b,r_r,r_g,r_b\n";
    gt << "a,0.5,0.8,0.3,0.3,0.8,0.5\n";
    std::ofstream pred(dir / "pred.csv");
    pred << "image_id,r,g,b\n";
    pred << "a,0.5,0.8,0.3\n";
  }
  CHECK_THROWS_AS(cmd_eval(dir / "pred.csv", dir / "gt.csv", Track::TwoIlluminant, "", ""), Error);
  {
    std::ofstream pred(dir / "pred6.csv");
    pred << "image_id,l_r,l_g,l_b,r_r,r_g,r_b\n";
    pred << "a,0.5,0.8,0.3,0.3,0.8,0.5\n";
  }
  const auto m = cmd_eval(dir / "pred6.csv", dir / "gt.csv", Track::TwoIlluminant, "", "");
  REQUIRE(m.size() == 5);
  CHECK(m[0].first == "mean_squared");
  CHECK(m[0].second == doctest::Approx(0.0).epsilon(1e-9));

  // missing prediction ids are listed
  {
    std::ofstream gt(dir / "gt.csv", std::ios::app);
    gt << "b,0.5,0.8,0.3,0.3,0.8,0.5\n";
  }
  try {
    cmd_eval(dir / "pred6.csv", dir / "gt.csv", Track::TwoIlluminant, "", "");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("b") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("prepare merges the trainset with accepted candidates") {
  const fs::path t1 = temp_dir("prep_t1");
  const fs::path t2 = temp_dir("prep_t2");
  synth::DatasetSpec s1;
  s1.count = 16;
  s1.seed = 200;
  synth::write_dataset(t1, s1);
  synth::DatasetSpec s2;
  s2.count = 10;
  s2.seed = 201;
  synth::write_dataset(t2, s2);

  ExperimentConfig cfg = mini_train_config(t1, temp_dir("prep_out_unused"), ModelKind::B);
  cfg.trainset2 = t2.string();
  const fs::path out = temp_dir("prep_out");
  const PrepareResult res = cmd_prepare(cfg, out, false);
  CHECK(res.trainset1_count == 16);
  CHECK(res.candidates == 10);
  CHECK(res.accepted >= 0);
  CHECK(res.accepted <= 10);

  const auto merged = load_manifest(out);
  CHECK(static_cast<int>(merged.size()) == res.trainset1_count + res.accepted);
  CHECK(fs::exists(out / "uv_histogram.ppm"));
  CHECK(fs::exists(out / "prepare_report.txt"));

  // prepare without a candidate pool is a config error
  cfg.trainset2.clear();
  CHECK_THROWS_AS(cmd_prepare(cfg, temp_dir("prep_out2"), false), Error);
  fs::remove_all(t1);
  fs::remove_all(t2);
  fs::remove_all(out);
}

TEST_CASE("every model kind trains one epoch and predicts") {
  const fs::path single = temp_dir("ablate_single");
  synth::DatasetSpec ss;
  ss.count = 8;
  ss.seed = 300;
  synth::write_dataset(single, ss);

  const fs::path dual = temp_dir("ablate_dual");
  synth::DatasetSpec ds;
  ds.count = 8;
  ds.seed = 301;
  ds.two_illuminant = true;
  synth::write_dataset(dual, ds);

  for (ModelKind kind : {ModelKind::B, ModelKind::A, ModelKind::C, ModelKind::ATwo,
                         ModelKind::CTwo}) {
    const fs::path out = temp_dir("ablate_out");
    const fs::path& data = is_two_illuminant(kind) ? dual : single;
    ExperimentConfig cfg = mini_train_config(data, out, kind);
    const TrainResult res = cmd_train(cfg, false);
    REQUIRE(res.log.size() == 1);
    CHECK(std::isfinite(res.log[0].train_loss_deg));
    CHECK(fs::exists(res.final_checkpoint));

    cmd_predict(res.final_checkpoint, data, out / "pred.csv", false);
    bool two = false;
    const auto preds = read_predictions_csv(out / "pred.csv", &two);
    CHECK(two == is_two_illuminant(kind));
    CHECK(preds.size() == 8);
    fs::remove_all(out);
  }
  fs::remove_all(single);
  fs::remove_all(dual);
}

TEST_CASE("gradcheck command emits one line per component") {
  std::string report;
  const bool ok = cmd_gradcheck(&report);
  CHECK(ok);
  CHECK(report.find("[FAIL]") == std::string::npos);
  std::size_t lines = 0;
  for (char c : report)
    if (c == '\n') ++lines;
  CHECK(lines >= 10);
}
