#pragma once

#include "awb/data.hpp"
#include "awb/models.hpp"

namespace awb {

// Experiment configuration, loaded from a strict [section] key=value file.
// Unknown sections or keys are errors; referenced dataset paths must exist.
struct ExperimentConfig {
  // [model]
  ModelConfig model;

  // [train]
  double learning_rate = 3e-4;
  int batch_size = 16;
  int epochs = 20;
  int patch = 512;
  double rotation = 60.0;
  double resize_min = 0.1;
  double resize_max = 1.0;
  Track track = Track::General;
  int checkpoint_every = 10;

  // [data]
  std::string trainset1;
  std::string trainset2;       // optional candidate pool / extra trainset
  double val_split = 1.0 / 3;  // held-out fraction

  // [output]
  std::string checkpoint_dir;
  std::string report;

  AugmentConfig augment_config() const {
    AugmentConfig a;
    a.patch = patch;
    a.rotation_range_deg = rotation;
    a.resize_min = resize_min;
    a.resize_max = resize_max;
    return a;
  }

  void validate() const;
};

ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace awb
