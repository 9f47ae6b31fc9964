#include "sdeawb.h"

#include <cstring>
#include <string>

#include "awb/checkpoint.hpp"
#include "awb/commands.hpp"

namespace {

thread_local std::string g_last_error;

sdeawb_status to_status(const awb::Error& e) {
  switch (e.kind()) {
    case awb::ErrorKind::Config: return SDEAWB_ERR_CONFIG;
    case awb::ErrorKind::Numeric: return SDEAWB_ERR_NUMERIC;
    case awb::ErrorKind::Data: return SDEAWB_ERR_DATA;
  }
  return SDEAWB_ERR_CONFIG;
}

template <class F>
sdeawb_status guarded(F&& f) {
  try {
    g_last_error.clear();
    return f();
  } catch (const awb::Error& e) {
    g_last_error = e.what();
    return to_status(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SDEAWB_ERR_DATA;
  }
}

sdeawb_status require_arg(bool ok, const char* msg) {
  if (ok) return SDEAWB_OK;
  g_last_error = msg;
  return SDEAWB_ERR_CONFIG;
}

}  // namespace

struct sdeawb_model {
  awb::ModelGraph<float> graph;
  std::string kind;
};

extern "C" {

const char* sdeawb_last_error(void) { return g_last_error.c_str(); }

sdeawb_status sdeawb_prepare(const char* config_path, const char* out_dir, int force,
                             int* accepted, int* candidates) {
  if (require_arg(config_path && out_dir, "prepare: config_path and out_dir are required"))
    return SDEAWB_ERR_CONFIG;
  return guarded([&] {
    const awb::ExperimentConfig cfg = awb::load_experiment_config(config_path);
    const awb::PrepareResult r = awb::cmd_prepare(cfg, out_dir, force != 0);
    if (accepted) *accepted = r.accepted;
    if (candidates) *candidates = r.candidates;
    return SDEAWB_OK;
  });
}

sdeawb_status sdeawb_train(const char* config_path, long long seed_override, int force) {
  if (require_arg(config_path != nullptr, "train: config_path is required"))
    return SDEAWB_ERR_CONFIG;
  return guarded([&] {
    awb::ExperimentConfig cfg = awb::load_experiment_config(config_path);
    if (seed_override >= 0) cfg.model.seed = static_cast<std::uint64_t>(seed_override);
    awb::cmd_train(cfg, force != 0);
    return SDEAWB_OK;
  });
}

sdeawb_status sdeawb_predict(const char* checkpoint_path, const char* manifest_dir,
                             const char* out_csv, int force) {
  if (require_arg(checkpoint_path && manifest_dir && out_csv,
                  "predict: checkpoint_path, manifest_dir and out_csv are required"))
    return SDEAWB_ERR_CONFIG;
  return guarded([&] {
    awb::cmd_predict(checkpoint_path, manifest_dir, out_csv, force != 0);
    return SDEAWB_OK;
  });
}

sdeawb_status sdeawb_eval(const char* predictions_csv, const char* gt_csv, const char* track,
                          const char* out_csv) {
  if (require_arg(predictions_csv && gt_csv && track,
                  "eval: predictions_csv, gt_csv and track are required"))
    return SDEAWB_ERR_CONFIG;
  return guarded([&] {
    awb::cmd_eval(predictions_csv, gt_csv, awb::track_from_string(track),
                  out_csv ? out_csv : "", "");
    return SDEAWB_OK;
  });
}

sdeawb_status sdeawb_baseline(const char* manifest_dir, const char* method,
                              const char* trainset_dir, const char* track, const char* out_csv,
                              int force) {
  if (require_arg(manifest_dir && method && track && out_csv,
                  "baseline: manifest_dir, method, track and out_csv are required"))
    return SDEAWB_ERR_CONFIG;
  return guarded([&] {
    awb::BaselineMethod m;
    if (std::strcmp(method, "grayworld") == 0) m = awb::BaselineMethod::GrayWorld;
    else if (std::strcmp(method, "const") == 0) m = awb::BaselineMethod::Const;
    else throw awb::Error(awb::ErrorKind::Config,
                          std::string("unknown baseline method '") + method + "'");
    awb::cmd_baseline(manifest_dir, m, trainset_dir ? trainset_dir : "",
                      awb::track_from_string(track), out_csv, force != 0);
    return SDEAWB_OK;
  });
}

sdeawb_status sdeawb_gradcheck(int* passed, char* report, size_t report_cap) {
  return guarded([&] {
    std::string text;
    const bool ok = awb::cmd_gradcheck(&text);
    if (report && report_cap > 0) {
      const size_t n = std::min(report_cap - 1, text.size());
      std::memcpy(report, text.data(), n);
      report[n] = '\0';
    }
    if (passed) *passed = ok ? 1 : 0;
    if (!ok) {
      g_last_error = "gradient check suite failed";
      return SDEAWB_ERR_NUMERIC;
    }
    return SDEAWB_OK;
  });
}

sdeawb_status sdeawb_model_load(const char* checkpoint_path, sdeawb_model** out) {
  if (require_arg(checkpoint_path && out, "model_load: checkpoint_path and out are required"))
    return SDEAWB_ERR_CONFIG;
  return guarded([&] {
    auto* m = new sdeawb_model{awb::load_checkpoint<float>(checkpoint_path), ""};
    m->kind = awb::to_string(m->graph.config.kind);
    *out = m;
    return SDEAWB_OK;
  });
}

void sdeawb_model_free(sdeawb_model* model) { delete model; }

const char* sdeawb_model_kind(const sdeawb_model* model) {
  return model ? model->kind.c_str() : "";
}

int sdeawb_model_is_two_illuminant(const sdeawb_model* model) {
  return model && awb::is_two_illuminant(model->graph.config.kind) ? 1 : 0;
}

sdeawb_status sdeawb_model_predict(sdeawb_model* model, const float* rgb, int width, int height,
                                   const double* exif, double illuminant[3],
                                   double illuminant2[3]) {
  if (require_arg(model && rgb && illuminant && width > 0 && height > 0,
                  "model_predict: model, rgb, illuminant and positive extents are required"))
    return SDEAWB_ERR_CONFIG;
  return guarded([&] {
    const int stride = model->graph.backbone_cfg.total_stride();
    const int ph = ((height + stride - 1) / stride) * stride;
    const int pw = ((width + stride - 1) / stride) * stride;
    awb::Tensor<float> img({3, ph, pw});
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        for (int c = 0; c < 3; ++c)
          img.at(c, y, x) = rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c];

    awb::Tensor<float> exif_feat;
    const awb::Tensor<float>* exif_ptr = nullptr;
    if (awb::has_side_branches(model->graph.config.kind)) {
      if (!exif)
        throw awb::Error(awb::ErrorKind::Data,
                         "model kind " + model->kind + " requires exif metadata");
      awb::ExifRecord rec;
      rec.aperture = exif[0];
      rec.exposure_time = exif[1];
      rec.iso = exif[2];
      rec.orientation = static_cast<int>(exif[3]);
      rec.validate();
      exif_feat = awb::exif_feature_tensor<float>(rec);
      exif_ptr = &exif_feat;
    }

    const awb::Prediction p = awb::predict(model->graph, img, exif_ptr);
    illuminant[0] = p.illuminant.r;
    illuminant[1] = p.illuminant.g;
    illuminant[2] = p.illuminant.b;
    if (illuminant2) {
      const awb::IlluminantVector second =
          p.second_illuminant ? *p.second_illuminant : p.illuminant;
      illuminant2[0] = second.r;
      illuminant2[1] = second.g;
      illuminant2[2] = second.b;
    }
    return SDEAWB_OK;
  });
}

sdeawb_status sdeawb_angular_error(const double a[3], const double b[3], double* degrees) {
  if (require_arg(a && b && degrees, "angular_error: all arguments are required"))
    return SDEAWB_ERR_CONFIG;
  return guarded([&] {
    *degrees = awb::angular_error({a[0], a[1], a[2]}, {b[0], b[1], b[2]});
    return SDEAWB_OK;
  });
}

sdeawb_status sdeawb_reproduction_error(const double estimate[3], const double gt[3],
                                        double* degrees) {
  if (require_arg(estimate && gt && degrees, "reproduction_error: all arguments are required"))
    return SDEAWB_ERR_CONFIG;
  return guarded([&] {
    *degrees = awb::reproduction_error({estimate[0], estimate[1], estimate[2]},
                                       {gt[0], gt[1], gt[2]});
    return SDEAWB_OK;
  });
}

}  // extern "C"
