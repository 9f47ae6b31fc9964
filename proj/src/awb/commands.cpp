#include "awb/commands.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "awb/checkpoint.hpp"
#include "awb/gradcheck_suite.hpp"

namespace awb {

namespace fs = std::filesystem;

namespace {

constexpr double kRad2Deg = 180.0 / 3.14159265358979323846;

void refuse_overwrite(const fs::path& p, bool force) {
  if (!force && fs::exists(p))
    throw Error(ErrorKind::Config,
                "refusing to overwrite existing '" + p.string() + "' (pass --force)");
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& ctx) {
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw Error(ErrorKind::Data, ctx + ": bad number '" + s + "'");
  }
}

// Zero-pads right/bottom so both spatial extents are multiples of m.
Tensor<float> pad_to_multiple(const Tensor<float>& img, int m) {
  const int h = img.dim(1), w = img.dim(2);
  const int ph = ((h + m - 1) / m) * m;
  const int pw = ((w + m - 1) / m) * m;
  if (ph == h && pw == w) return img;
  Tensor<float> out({3, ph, pw});
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(ch, y, x) = img.at(ch, y, x);
  return out;
}

IlluminantVector normalized_or_throw(const IlluminantVector& v) { return v.normalized(); }

}  // namespace

// --- prediction CSV ---------------------------------------------------------

void write_predictions_csv(const fs::path& path, const std::vector<PredictionRecord>& rows,
                           bool two_illuminant) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Data, "cannot write predictions csv '" + path.string() + "'");
  out << (two_illuminant ? "image_id,l_r,l_g,l_b,r_r,r_g,r_b" : "image_id,r,g,b") << '\n';
  out.precision(17);
  const std::size_t want = two_illuminant ? 6 : 3;
  for (const auto& r : rows) {
    if (r.values.size() != want)
      throw Error(ErrorKind::Config, "prediction row '" + r.image_id + "' has wrong arity");
    out << r.image_id;
    for (double v : r.values) out << ',' << v;
    out << '\n';
  }
}

std::map<std::string, std::vector<double>> read_predictions_csv(const fs::path& path,
                                                                bool* two_illuminant) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Data, "cannot open predictions csv '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Data, "empty predictions csv");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  bool two;
  if (line == "image_id,r,g,b") two = false;
  else if (line == "image_id,l_r,l_g,l_b,r_r,r_g,r_b") two = true;
  else throw Error(ErrorKind::Data, "predictions csv '" + path.string() + "': unknown header '" + line + "'");
  if (two_illuminant) *two_illuminant = two;

  std::map<std::string, std::vector<double>> out;
  const std::size_t want = two ? 7 : 4;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_line(line);
    if (cells.size() != want)
      throw Error(ErrorKind::Data, path.string() + " line " + std::to_string(line_no) +
                                       ": wrong column count");
    std::vector<double> vals;
    for (std::size_t i = 1; i < cells.size(); ++i)
      vals.push_back(parse_double(cells[i], path.string() + " line " + std::to_string(line_no)));
    out[cells[0]] = std::move(vals);
  }
  return out;
}

// --- metric report ----------------------------------------------------------

void write_report_csv(const fs::path& path,
                      const std::vector<std::pair<std::string, double>>& metrics) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Data, "cannot write report '" + path.string() + "'");
  out << "metric,value\n";
  out.precision(17);
  for (const auto& [k, v] : metrics) out << k << ',' << v << '\n';
}

std::vector<std::pair<std::string, double>> read_report_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Data, "cannot open report '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || (line != "metric,value" && line != "metric,value\r"))
    throw Error(ErrorKind::Data, "report '" + path.string() + "': expected 'metric,value' header");
  std::vector<std::pair<std::string, double>> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_line(line);
    if (cells.size() != 2)
      throw Error(ErrorKind::Data, path.string() + " line " + std::to_string(line_no) +
                                       ": expected 2 columns");
    out.emplace_back(cells[0], parse_double(cells[1], path.string()));
  }
  return out;
}

std::string format_report(const std::vector<std::pair<std::string, double>>& metrics) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  std::size_t width = 6;
  for (const auto& [k, v] : metrics) width = std::max(width, k.size());
  for (const auto& [k, v] : metrics)
    os << std::left << std::setw(static_cast<int>(width) + 2) << k << v << '\n';
  return os.str();
}

// --- prepare ----------------------------------------------------------------

PrepareResult cmd_prepare(const ExperimentConfig& cfg, const fs::path& out_dir, bool force) {
  if (cfg.trainset2.empty())
    throw Error(ErrorKind::Config, "prepare requires [data] trainset2 (candidate pool)");
  const auto trainset = load_manifest(cfg.trainset1);
  if (trainset.empty()) throw Error(ErrorKind::Data, "prepare: trainset1 has no usable samples");
  const auto candidates = load_manifest(cfg.trainset2);

  const GtUvHistogram hist = build_gt_uv_histogram(trainset, 64, 7);
  const auto accepted = expansion_filter(candidates, hist);

  refuse_overwrite(out_dir / "gt.csv", force);
  fs::create_directories(out_dir / "images");

  std::vector<std::pair<std::string, TwoIlluminantLabel>> gt_rows;
  std::map<std::string, ExifRecord> exif_rows;
  auto add_sample = [&](const LabeledSample& s, const std::string& id) {
    fs::copy_file(s.image_path, out_dir / "images" / (id + ".ppm"),
                  fs::copy_options::overwrite_existing);
    gt_rows.emplace_back(id, s.gt);
    exif_rows.emplace(id, s.exif);
  };
  for (const auto& s : trainset) add_sample(s, s.image_id);
  for (const auto& s : accepted) {
    // candidate ids may collide with trainset ids (e.g. self-expansion tests)
    std::string id = s.image_id;
    if (exif_rows.count(id)) id = "x_" + id;
    add_sample(s, id);
  }
  write_gt_csv(out_dir / "gt.csv", gt_rows);
  write_exif_csv((out_dir / "exif.csv").string(), exif_rows);

  // inspection dump of the blurred histogram, scaled to full range
  double peak = 0.0;
  for (std::size_t i = 0; i < hist.grid.size(); ++i) peak = std::max(peak, hist.grid[i]);
  Tensor<float> dump({3, hist.bins, hist.bins});
  for (int y = 0; y < hist.bins; ++y)
    for (int x = 0; x < hist.bins; ++x) {
      const float v = peak > 0.0 ? static_cast<float>(hist.grid[static_cast<std::size_t>(y) * hist.bins + x] / peak)
                                 : 0.0f;
      for (int ch = 0; ch < 3; ++ch) dump.at(ch, y, x) = v;
    }
  write_image(out_dir / "uv_histogram.ppm", dump, 255);

  PrepareResult res;
  res.trainset1_count = static_cast<int>(trainset.size());
  res.candidates = static_cast<int>(candidates.size());
  res.accepted = static_cast<int>(accepted.size());
  res.merged_manifest = out_dir;

  std::ofstream rep(out_dir / "prepare_report.txt");
  rep << "trainset1 samples: " << res.trainset1_count << '\n'
      << "candidate samples: " << res.candidates << '\n'
      << "accepted candidates: " << res.accepted << '\n'
      << "merged samples: " << gt_rows.size() << '\n';
  return res;
}

// --- train ------------------------------------------------------------------

namespace {

struct SamplePool {
  std::vector<LabeledSample> samples;
  std::vector<Tensor<float>> images;  // decoded cache

  const Tensor<float>& image(std::size_t i) {
    if (images[i].empty()) images[i] = load_image(samples[i].image_path);
    return images[i];
  }
};

double validation_error(ModelGraph<float>& model, SamplePool& pool,
                        const std::vector<std::size_t>& val_idx) {
  if (val_idx.empty()) return 0.0;
  const bool two = is_two_illuminant(model.config.kind);
  double acc = 0.0;
  for (std::size_t i : val_idx) {
    const LabeledSample& s = pool.samples[i];
    Tensor<float> img = pad_to_multiple(pool.image(i), model.backbone_cfg.total_stride());
    Tensor<float> exif = exif_feature_tensor<float>(s.exif);
    Prediction p = predict(model, img, &exif);
    if (two) {
      TwoIlluminantLabel pred{p.illuminant, *p.second_illuminant};
      acc += two_illum_error(pred, s.gt);
    } else {
      acc += angular_error(p.illuminant, s.gt.left);
    }
  }
  return acc / static_cast<double>(val_idx.size());
}

}  // namespace

TrainResult cmd_train(const ExperimentConfig& cfg, bool force) {
  cfg.validate();
  fs::create_directories(cfg.checkpoint_dir);
  const fs::path final_ckpt = fs::path(cfg.checkpoint_dir) / "model_final.ckpt";
  refuse_overwrite(final_ckpt, force);

  SamplePool pool;
  pool.samples = load_manifest(cfg.trainset1);
  if (!cfg.trainset2.empty()) {
    auto extra = load_manifest(cfg.trainset2);
    pool.samples.insert(pool.samples.end(), extra.begin(), extra.end());
  }
  const bool two = is_two_illuminant(cfg.model.kind);
  std::erase_if(pool.samples, [&](const LabeledSample& s) {
    return (s.track == Track::TwoIlluminant) != two;
  });
  if (pool.samples.empty())
    throw Error(ErrorKind::Data, "no usable training samples for model kind " +
                                     to_string(cfg.model.kind));
  pool.images.resize(pool.samples.size());

  // seeded validation split
  const std::uint64_t seed = cfg.model.seed;
  auto order = epoch_order(pool.samples.size(), mix_seed(seed, 0x5eed), 0);
  const std::size_t n_val = static_cast<std::size_t>(
      std::lround(cfg.val_split * static_cast<double>(pool.samples.size())));
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  if (train_idx.empty()) throw Error(ErrorKind::Config, "val_split leaves no training samples");

  ModelGraph<float> model = build_model<float>(cfg.model);
  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  const AugmentConfig aug = cfg.augment_config();

  TrainResult res;
  for (std::size_t i : train_idx) res.train_ids.push_back(pool.samples[i].image_id);
  for (std::size_t i : val_idx) res.val_ids.push_back(pool.samples[i].image_id);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t loss_n = 0;
    const auto batches = batch_iter(train_idx.size(), static_cast<std::size_t>(cfg.batch_size),
                                    seed, static_cast<std::uint64_t>(epoch));
    for (const auto& batch : batches) {
      std::size_t used = 0;
      std::vector<std::string> batch_ids;
      for (std::size_t bi : batch) {
        const std::size_t si = train_idx[bi];
        const LabeledSample& s = pool.samples[si];
        batch_ids.push_back(s.image_id);
        Rng arng(mix_seed(mix_seed(seed, static_cast<std::uint64_t>(epoch)), si));
        auto patch = augment(pool.image(si), s.track, aug, arng);
        if (!patch) continue;  // too small after resize; logged via counts

        Tape<float> tape;
        Var<float> img = make_var(std::move(*patch));
        Tensor<float> exif = exif_feature_tensor<float>(s.exif);
        Tensor<float> gl = illum_tensor<float>(s.gt.left.normalized());
        Tensor<float> gr = illum_tensor<float>(s.gt.right.normalized());
        ForwardVars<float> fwd = model_forward(tape, model, img, &exif);
        Var<float> loss = model_loss(tape, fwd, gl, gr);
        const double lv = static_cast<double>(loss.value()[0]);
        if (!std::isfinite(lv)) {
          std::string ids;
          for (const auto& id : batch_ids) ids += (ids.empty() ? "" : ", ") + id;
          throw Error(ErrorKind::Numeric, "non-finite loss in batch [" + ids + "]");
        }
        tape.backward(loss);
        loss_sum += lv;
        ++loss_n;
        ++used;
      }
      if (used == 0) continue;
      const float inv = 1.0f / static_cast<float>(used);
      for (auto& p : model.store.list())
        for (std::size_t i = 0; i < p->grad->size(); ++i) (*p->grad)[i] *= inv;
      adam_step(model.store.list(), adam);
      post_step_clamp(model);
    }

    TrainLogEntry e;
    e.epoch = epoch;
    e.train_loss_deg = loss_n ? loss_sum / static_cast<double>(loss_n) * kRad2Deg : 0.0;
    e.val_error_deg = validation_error(model, pool, val_idx);
    res.log.push_back(e);

    if (epoch % cfg.checkpoint_every == 0 && epoch != cfg.epochs) {
      save_checkpoint((fs::path(cfg.checkpoint_dir) / ("model_epoch" + std::to_string(epoch) + ".ckpt")).string(),
                      model);
    }
  }

  save_checkpoint(final_ckpt.string(), model);
  res.final_checkpoint = final_ckpt;

  const fs::path log_path = cfg.report.empty()
                                ? fs::path(cfg.checkpoint_dir) / "train_log.csv"
                                : fs::path(cfg.report);
  std::ofstream log(log_path);
  log << "epoch,train_loss_deg,val_error_deg\n";
  log.precision(10);
  for (const auto& e : res.log)
    log << e.epoch << ',' << e.train_loss_deg << ',' << e.val_error_deg << '\n';
  return res;
}

// --- predict ----------------------------------------------------------------

void cmd_predict(const fs::path& checkpoint, const fs::path& manifest, const fs::path& out_csv,
                 bool force) {
  refuse_overwrite(out_csv, force);
  ModelGraph<float> model = load_checkpoint<float>(checkpoint.string());
  const bool two = is_two_illuminant(model.config.kind);
  const bool needs_exif = has_side_branches(model.config.kind);

  const auto gts = parse_gt_csv(manifest / "gt.csv");
  std::map<std::string, ExifRecord> exifs;
  if (fs::exists(manifest / "exif.csv")) exifs = parse_exif_csv((manifest / "exif.csv").string());

  if (needs_exif) {
    std::string missing;
    for (const auto& [id, gt] : gts)
      if (!exifs.count(id)) missing += (missing.empty() ? "" : ", ") + id;
    if (!missing.empty())
      throw Error(ErrorKind::Data,
                  "model kind " + to_string(model.config.kind) +
                      " requires exif metadata; missing for: " + missing);
  }

  std::vector<PredictionRecord> rows;
  for (const auto& [id, gt] : gts) {
    fs::path img_path = manifest / "images" / (id + ".ppm");
    if (!fs::exists(img_path)) img_path = manifest / "images" / (id + ".pnm");
    if (!fs::exists(img_path))
      throw Error(ErrorKind::Data, "missing image for id '" + id + "' in manifest");
    Tensor<float> img = pad_to_multiple(load_image(img_path), model.backbone_cfg.total_stride());
    Tensor<float> exif;
    const Tensor<float>* exif_ptr = nullptr;
    if (needs_exif) {
      exif = exif_feature_tensor<float>(exifs.at(id));
      exif_ptr = &exif;
    }
    Prediction p = predict(model, img, exif_ptr);
    PredictionRecord r;
    r.image_id = id;
    r.values = {p.illuminant.r, p.illuminant.g, p.illuminant.b};
    if (two) {
      r.values.push_back(p.second_illuminant->r);
      r.values.push_back(p.second_illuminant->g);
      r.values.push_back(p.second_illuminant->b);
    }
    rows.push_back(std::move(r));
  }
  write_predictions_csv(out_csv, rows, two);
}

// --- eval -------------------------------------------------------------------

std::vector<std::pair<std::string, double>> cmd_eval(const fs::path& pred_csv,
                                                     const fs::path& gt_csv, Track track,
                                                     const fs::path& out_csv,
                                                     const fs::path& out_text) {
  bool pred_two = false;
  const auto preds = read_predictions_csv(pred_csv, &pred_two);
  const auto gts = parse_gt_csv(gt_csv);

  std::string missing;
  for (const auto& [id, gt] : gts)
    if (!preds.count(id)) missing += (missing.empty() ? "" : ", ") + id;
  if (!missing.empty())
    throw Error(ErrorKind::Data, "missing predictions for: " + missing);

  std::vector<std::pair<std::string, double>> metrics;
  if (track == Track::TwoIlluminant) {
    if (!pred_two)
      throw Error(ErrorKind::Data, "two-illuminant eval requires 6-column predictions");
    std::vector<double> sq, errs;
    for (const auto& [id, gt] : gts) {
      const auto& v = preds.at(id);
      TwoIlluminantLabel p{{v[0], v[1], v[2]}, {v[3], v[4], v[5]}};
      sq.push_back(min_squared_sum_error(p, gt));
      errs.push_back(two_illum_error(p, gt));
    }
    const ErrorStats sq_stats = summarize(sq);
    const ErrorStats e = summarize(errs);
    metrics = {{"mean_squared", sq_stats.mean},
               {"error_mean", e.mean},
               {"error_median", e.median},
               {"error_trimean", e.trimean},
               {"error_worst25", e.worst25_mean}};
  } else {
    std::vector<double> rec, rep;
    for (const auto& [id, gt] : gts) {
      const auto& v = preds.at(id);
      const IlluminantVector p{v[0], v[1], v[2]};
      rec.push_back(angular_error(p, gt.left));
      rep.push_back(reproduction_error(p, gt.left));
    }
    const ErrorStats r1 = summarize(rec);
    const ErrorStats r2 = summarize(rep);
    metrics = {{"recovery_worst25", r1.worst25_mean}, {"recovery_mean", r1.mean},
               {"recovery_median", r1.median},       {"recovery_trimean", r1.trimean},
               {"reproduction_worst25", r2.worst25_mean}, {"reproduction_mean", r2.mean},
               {"reproduction_median", r2.median},   {"reproduction_trimean", r2.trimean}};
  }

  if (!out_csv.empty()) write_report_csv(out_csv, metrics);
  if (!out_text.empty()) {
    std::ofstream t(out_text);
    t << format_report(metrics);
  }
  return metrics;
}

// --- baseline ---------------------------------------------------------------

void cmd_baseline(const fs::path& manifest, BaselineMethod method, const fs::path& trainset,
                  Track track, const fs::path& out_csv, bool force) {
  refuse_overwrite(out_csv, force);
  const auto gts = parse_gt_csv(manifest / "gt.csv");
  const bool two = track == Track::TwoIlluminant;

  IlluminantVector const_pred;
  if (method == BaselineMethod::Const) {
    if (trainset.empty())
      throw Error(ErrorKind::Config, "const baseline requires a trainset manifest to average");
    const auto train = load_manifest(trainset);
    if (train.empty()) throw Error(ErrorKind::Data, "const baseline: empty trainset");
    double acc[3] = {0, 0, 0};
    for (const auto& s : train) {
      const IlluminantVector n = s.gt.left.normalized();
      acc[0] += n.r;
      acc[1] += n.g;
      acc[2] += n.b;
    }
    const_pred = IlluminantVector{acc[0], acc[1], acc[2]}.normalized();
  }

  std::vector<PredictionRecord> rows;
  for (const auto& [id, gt] : gts) {
    IlluminantVector est;
    if (method == BaselineMethod::GrayWorld) {
      fs::path img_path = manifest / "images" / (id + ".ppm");
      if (!fs::exists(img_path)) img_path = manifest / "images" / (id + ".pnm");
      if (!fs::exists(img_path))
        throw Error(ErrorKind::Data, "missing image for id '" + id + "' in manifest");
      est = gray_world(load_image(img_path));
    } else {
      est = const_pred;
    }
    est = normalized_or_throw(est);
    PredictionRecord r;
    r.image_id = id;
    r.values = {est.r, est.g, est.b};
    if (two) r.values.insert(r.values.end(), {est.r, est.g, est.b});
    rows.push_back(std::move(r));
  }
  write_predictions_csv(out_csv, rows, two);
}

// --- gradcheck --------------------------------------------------------------

bool cmd_gradcheck(std::string* report) {
  const auto checks = run_gradcheck_suite();
  bool all = true;
  std::ostringstream os;
  os << std::scientific << std::setprecision(3);
  for (const auto& c : checks) {
    os << (c.pass ? "[PASS] " : "[FAIL] ") << std::left << std::setw(28) << c.name
       << " max relative error " << c.max_rel_error << '\n';
    all = all && c.pass;
  }
  if (report) *report += os.str();
  return all;
}

}  // namespace awb
