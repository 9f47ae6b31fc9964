#pragma once

#include "awb/config.hpp"
#include "awb/data.hpp"

namespace awb {

// --- prediction CSV ---------------------------------------------------------

struct PredictionRecord {
  std::string image_id;
  std::vector<double> values;  // 3 (r,g,b) or 6 (l_r..r_b), unit-norm triples
};

void write_predictions_csv(const std::filesystem::path& path,
                           const std::vector<PredictionRecord>& rows, bool two_illuminant);

// Detects the 3- or 6-column header; *two_illuminant reports which.
std::map<std::string, std::vector<double>> read_predictions_csv(const std::filesystem::path& path,
                                                                bool* two_illuminant);

// --- metric report ----------------------------------------------------------

void write_report_csv(const std::filesystem::path& path,
                      const std::vector<std::pair<std::string, double>>& metrics);
std::vector<std::pair<std::string, double>> read_report_csv(const std::filesystem::path& path);

// --- commands ---------------------------------------------------------------

struct PrepareResult {
  int trainset1_count = 0;
  int candidates = 0;
  int accepted = 0;
  std::filesystem::path merged_manifest;
};

// Builds the blurred gt uv histogram from trainset1, filters trainset2
// through it, and writes a merged manifest plus a report and a histogram dump
// (PNM) under out_dir.
PrepareResult cmd_prepare(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                          bool force);

struct TrainLogEntry {
  int epoch = 0;
  double train_loss_deg = 0.0;  // mean training loss over the epoch, degrees
  double val_error_deg = 0.0;   // held-out mean angular error, degrees
};

struct TrainResult {
  std::vector<TrainLogEntry> log;
  std::filesystem::path final_checkpoint;
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
};

TrainResult cmd_train(const ExperimentConfig& cfg, bool force);

void cmd_predict(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest,
                 const std::filesystem::path& out_csv, bool force);

// Returns the metrics (also written to out_csv when non-empty); text goes to
// out_text when non-empty.
std::vector<std::pair<std::string, double>> cmd_eval(const std::filesystem::path& pred_csv,
                                                     const std::filesystem::path& gt_csv,
                                                     Track track,
                                                     const std::filesystem::path& out_csv,
                                                     const std::filesystem::path& out_text);

std::string format_report(const std::vector<std::pair<std::string, double>>& metrics);

enum class BaselineMethod { GrayWorld, Const };

void cmd_baseline(const std::filesystem::path& manifest, BaselineMethod method,
                  const std::filesystem::path& trainset, Track track,
                  const std::filesystem::path& out_csv, bool force);

// Runs the gradient suite; returns true iff every component passed. The
// per-component report is appended to *report.
bool cmd_gradcheck(std::string* report);

}  // namespace awb
