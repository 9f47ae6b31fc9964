#include "awb/config.hpp"

#include <filesystem>
#include <fstream>

namespace awb {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double num(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing garbage");
    return d;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Config, "config: bad numeric value '" + v + "' for key '" + key + "'");
  }
}

int integer(const std::string& v, const std::string& key) {
  const double d = num(v, key);
  const int i = static_cast<int>(d);
  if (static_cast<double>(i) != d)
    throw Error(ErrorKind::Config, "config: key '" + key + "' requires an integer, got '" + v + "'");
  return i;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (!(learning_rate > 0)) throw Error(ErrorKind::Config, "config: learning_rate must be > 0");
  if (batch_size < 1) throw Error(ErrorKind::Config, "config: batch_size must be >= 1");
  if (epochs < 1) throw Error(ErrorKind::Config, "config: epochs must be >= 1");
  if (checkpoint_every < 1) throw Error(ErrorKind::Config, "config: checkpoint_every must be >= 1");
  if (!(val_split >= 0.0 && val_split < 1.0))
    throw Error(ErrorKind::Config, "config: val_split must be in [0,1)");
  augment_config().validate();  // patch/rotation/resize ranges
  (void)model.backbone();
  model.hist.validate();
  if (trainset1.empty()) throw Error(ErrorKind::Config, "config: [data] trainset1 is required");
  if (!std::filesystem::is_directory(trainset1))
    throw Error(ErrorKind::Config, "config: trainset1 path '" + trainset1 + "' does not exist");
  if (!trainset2.empty() && !std::filesystem::is_directory(trainset2))
    throw Error(ErrorKind::Config, "config: trainset2 path '" + trainset2 + "' does not exist");
  if (checkpoint_dir.empty()) throw Error(ErrorKind::Config, "config: [output] checkpoint_dir is required");
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open config '" + path + "'");

  ExperimentConfig cfg;
  std::string section;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw Error(ErrorKind::Config, "config line " + std::to_string(line_no) + ": malformed section");
      section = t.substr(1, t.size() - 2);
      if (section != "model" && section != "train" && section != "data" && section != "output")
        throw Error(ErrorKind::Config, "config line " + std::to_string(line_no) +
                                           ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::Config, "config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    const std::string qual = section + "." + key;

    if (qual == "model.kind") cfg.model.kind = model_kind_from_string(val);
    else if (qual == "model.backbone") cfg.model.backbone_scale = val;
    else if (qual == "model.bins") cfg.model.hist.bins_per_axis = integer(val, qual);
    else if (qual == "model.seed") cfg.model.seed = static_cast<std::uint64_t>(num(val, qual));
    else if (qual == "train.learning_rate") cfg.learning_rate = num(val, qual);
    else if (qual == "train.batch_size") cfg.batch_size = integer(val, qual);
    else if (qual == "train.epochs") cfg.epochs = integer(val, qual);
    else if (qual == "train.patch") cfg.patch = integer(val, qual);
    else if (qual == "train.rotation") cfg.rotation = num(val, qual);
    else if (qual == "train.resize_min") cfg.resize_min = num(val, qual);
    else if (qual == "train.resize_max") cfg.resize_max = num(val, qual);
    else if (qual == "train.track") cfg.track = track_from_string(val);
    else if (qual == "train.checkpoint_every") cfg.checkpoint_every = integer(val, qual);
    else if (qual == "data.trainset1") cfg.trainset1 = val;
    else if (qual == "data.trainset2") cfg.trainset2 = val;
    else if (qual == "data.val_split") cfg.val_split = num(val, qual);
    else if (qual == "output.checkpoint_dir") cfg.checkpoint_dir = val;
    else if (qual == "output.report") cfg.report = val;
    else
      throw Error(ErrorKind::Config,
                  "config line " + std::to_string(line_no) + ": unknown key '" + qual + "'");
  }
  cfg.validate();
  return cfg;
}

}  // namespace awb
