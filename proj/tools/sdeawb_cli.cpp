// Command-line front end over the public C interface.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sdeawb.h"

namespace {

int finish(sdeawb_status st) {
  if (st != SDEAWB_OK) std::cerr << "error: " << sdeawb_last_error() << "\n";
  return static_cast<int>(st);
}

// Pretty-prints a metric CSV written by eval.
int print_report_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot read report '" << path << "'\n";
    return static_cast<int>(SDEAWB_ERR_DATA);
  }
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::pair<std::string, std::string>> rows;
  std::size_t width = 6;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    rows.emplace_back(line.substr(0, comma), line.substr(comma + 1));
    width = std::max(width, rows.back().first.size());
  }
  for (const auto& [k, v] : rows) {
    std::cout << k;
    for (std::size_t i = k.size(); i < width + 2; ++i) std::cout << ' ';
    std::cout << v << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sdeawb: learned illumination estimation for auto white balance"};
  app.require_subcommand(1);

  std::string config, out_dir, checkpoint, manifest, out_csv, predictions, gt, track = "general";
  std::string method = "grayworld", trainset;
  long long seed = -1;
  bool force = false;

  auto* prepare = app.add_subcommand("prepare", "expand a training set into a merged manifest");
  prepare->add_option("--config", config, "experiment config file")->required();
  prepare->add_option("--out", out_dir, "output manifest directory")->required();
  prepare->add_flag("--force", force, "overwrite existing outputs");

  auto* train = app.add_subcommand("train", "train the configured model");
  train->add_option("--config", config, "experiment config file")->required();
  train->add_option("--seed", seed, "override the configured seed");
  train->add_flag("--force", force, "overwrite existing checkpoints");

  auto* predict = app.add_subcommand("predict", "run inference over a manifest");
  predict->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  predict->add_option("--manifest", manifest, "manifest directory")->required();
  predict->add_option("--out", out_csv, "predictions CSV to write")->required();
  predict->add_flag("--force", force, "overwrite an existing CSV");

  auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
  eval->add_option("--predictions", predictions, "predictions CSV")->required();
  eval->add_option("--gt", gt, "ground-truth CSV")->required();
  eval->add_option("--track", track, "general | indoor | two_illuminant");
  eval->add_option("--out", out_csv, "metric CSV to write (optional)");

  auto* baseline = app.add_subcommand("baseline", "classic baseline predictions");
  baseline->add_option("--manifest", manifest, "manifest directory")->required();
  baseline->add_option("--method", method, "grayworld | const");
  baseline->add_option("--trainset", trainset, "trainset manifest (const method)");
  baseline->add_option("--track", track, "general | indoor | two_illuminant");
  baseline->add_option("--out", out_csv, "predictions CSV to write")->required();
  baseline->add_flag("--force", force, "overwrite an existing CSV");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  (void)gradcheck;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(SDEAWB_ERR_CONFIG);
  }

  if (prepare->parsed()) {
    int accepted = 0, candidates = 0;
    const sdeawb_status st =
        sdeawb_prepare(config.c_str(), out_dir.c_str(), force ? 1 : 0, &accepted, &candidates);
    if (st == SDEAWB_OK)
      std::cout << "accepted " << accepted << " of " << candidates << " candidates\n";
    return finish(st);
  }
  if (train->parsed()) return finish(sdeawb_train(config.c_str(), seed, force ? 1 : 0));
  if (predict->parsed())
    return finish(
        sdeawb_predict(checkpoint.c_str(), manifest.c_str(), out_csv.c_str(), force ? 1 : 0));
  if (eval->parsed()) {
    std::string report = out_csv;
    bool temp = false;
    if (report.empty()) {
      report = (std::filesystem::temp_directory_path() / "sdeawb_eval_report.csv").string();
      temp = true;
    }
    const sdeawb_status st =
        sdeawb_eval(predictions.c_str(), gt.c_str(), track.c_str(), report.c_str());
    if (st != SDEAWB_OK) return finish(st);
    const int rc = print_report_csv(report);
    if (temp) std::filesystem::remove(report);
    return rc;
  }
  if (baseline->parsed())
    return finish(sdeawb_baseline(manifest.c_str(), method.c_str(), trainset.c_str(),
                                  track.c_str(), out_csv.c_str(), force ? 1 : 0));
  if (gradcheck->parsed()) {
    int passed = 0;
    std::vector<char> report(16384);
    const sdeawb_status st = sdeawb_gradcheck(&passed, report.data(), report.size());
    std::cout << report.data();
    std::cout << (passed ? "gradient check: PASS\n" : "gradient check: FAIL\n");
    if (st != SDEAWB_OK && !passed) return static_cast<int>(st);
    return finish(st);
  }
  return static_cast<int>(SDEAWB_ERR_CONFIG);
}
