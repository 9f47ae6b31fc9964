#include "awb/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace awb {

namespace fs = std::filesystem;

Track track_from_string(const std::string& s) {
  if (s == "general") return Track::General;
  if (s == "indoor") return Track::Indoor;
  if (s == "two_illuminant") return Track::TwoIlluminant;
  throw Error(ErrorKind::Config, "unknown track '" + s + "'");
}

Track classify_track(const TwoIlluminantLabel& gt) {
  return angular_error(gt.left, gt.right) >= 2.0 ? Track::TwoIlluminant : Track::General;
}

// --- PNM --------------------------------------------------------------------

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {}
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok += static_cast<char>(c);
  }
  return tok;
}

}  // namespace

Tensor<float> load_image(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Data, "cannot open image '" + path.string() + "'");
  if (pnm_token(in) != "P6")
    throw Error(ErrorKind::Data, "'" + path.string() + "': not a binary PNM P6 file");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(pnm_token(in));
    h = std::stoi(pnm_token(in));
    maxval = std::stoi(pnm_token(in));
  } catch (const std::exception&) {
    throw Error(ErrorKind::Data, "'" + path.string() + "': malformed PNM header");
  }
  if (w < 1 || h < 1) throw Error(ErrorKind::Data, "'" + path.string() + "': bad PNM dimensions");
  if (maxval != 255 && maxval != 65535)
    throw Error(ErrorKind::Data, "'" + path.string() + "': unsupported maxval " +
                                     std::to_string(maxval) + " (need 255 or 65535)");

  const std::size_t npix = static_cast<std::size_t>(w) * h;
  const int bytes_per = maxval == 255 ? 1 : 2;
  std::vector<unsigned char> raw(npix * 3 * bytes_per);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw Error(ErrorKind::Data, "'" + path.string() + "': truncated PNM payload");

  Tensor<float> img({3, h, w});
  const float inv = 1.0f / static_cast<float>(maxval);
  for (std::size_t p = 0; p < npix; ++p) {
    for (int ch = 0; ch < 3; ++ch) {
      unsigned v;
      if (bytes_per == 1) {
        v = raw[p * 3 + ch];
      } else {
        const std::size_t o = (p * 3 + ch) * 2;  // big-endian samples
        v = (static_cast<unsigned>(raw[o]) << 8) | raw[o + 1];
      }
      img[static_cast<std::size_t>(ch) * npix + p] = static_cast<float>(v) * inv;
    }
  }
  return img;
}

void write_image(const fs::path& path, const Tensor<float>& image, int maxval) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw Error(ErrorKind::Config, "write_image expects [3,H,W], got " + shape_str(image.shape()));
  if (maxval != 255 && maxval != 65535)
    throw Error(ErrorKind::Config, "write_image maxval must be 255 or 65535");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Data, "cannot write image '" + path.string() + "'");
  const int h = image.dim(1), w = image.dim(2);
  out << "P6\n" << w << ' ' << h << '\n' << maxval << '\n';
  const std::size_t npix = static_cast<std::size_t>(w) * h;
  std::vector<unsigned char> raw;
  raw.reserve(npix * 3 * (maxval == 255 ? 1 : 2));
  for (std::size_t p = 0; p < npix; ++p) {
    for (int ch = 0; ch < 3; ++ch) {
      float f = image[static_cast<std::size_t>(ch) * npix + p];
      f = std::clamp(f, 0.0f, 1.0f);
      const unsigned v = static_cast<unsigned>(std::lround(f * maxval));
      if (maxval == 255) {
        raw.push_back(static_cast<unsigned char>(v));
      } else {
        raw.push_back(static_cast<unsigned char>(v >> 8));
        raw.push_back(static_cast<unsigned char>(v & 0xff));
      }
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw Error(ErrorKind::Data, "failed writing image '" + path.string() + "'");
}

// --- CSVs -------------------------------------------------------------------

namespace {

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

double csv_num(const std::string& s, const std::string& file, int line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing garbage");
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Data, file + " line " + std::to_string(line_no) + ": bad number '" + s + "'");
  }
}

}  // namespace

std::map<std::string, TwoIlluminantLabel> parse_gt_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Data, "cannot open gt csv '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Data, "empty gt csv '" + path.string() + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::string expected = "image_id,l_r,l_g,l_b,r_r,r_g,r_b";
  if (line != expected)
    throw Error(ErrorKind::Data, "gt csv '" + path.string() + "': expected header '" + expected +
                                     "', got '" + line + "'");
  std::map<std::string, TwoIlluminantLabel> out;
  int line_no = 1;
  const std::string fname = path.string();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_line(line);
    if (cells.size() != 7)
      throw Error(ErrorKind::Data, fname + " line " + std::to_string(line_no) +
                                       ": expected 7 columns, got " + std::to_string(cells.size()));
    TwoIlluminantLabel gt;
    gt.left = {csv_num(cells[1], fname, line_no), csv_num(cells[2], fname, line_no),
               csv_num(cells[3], fname, line_no)};
    gt.right = {csv_num(cells[4], fname, line_no), csv_num(cells[5], fname, line_no),
                csv_num(cells[6], fname, line_no)};
    if (out.count(cells[0]))
      throw Error(ErrorKind::Data, fname + " line " + std::to_string(line_no) +
                                       ": duplicate image_id '" + cells[0] + "'");
    out.emplace(cells[0], gt);
  }
  return out;
}

void write_gt_csv(const fs::path& path,
                  const std::vector<std::pair<std::string, TwoIlluminantLabel>>& rows) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Data, "cannot write gt csv '" + path.string() + "'");
  out << "image_id,l_r,l_g,l_b,r_r,r_g,r_b\n";
  out.precision(17);
  for (const auto& [id, gt] : rows)
    out << id << ',' << gt.left.r << ',' << gt.left.g << ',' << gt.left.b << ',' << gt.right.r
        << ',' << gt.right.g << ',' << gt.right.b << '\n';
}

// --- manifest ---------------------------------------------------------------

std::vector<LabeledSample> load_manifest(const fs::path& dir, ManifestLoadReport* report) {
  if (!fs::is_directory(dir))
    throw Error(ErrorKind::Data, "manifest directory '" + dir.string() + "' does not exist");
  const auto gts = parse_gt_csv(dir / "gt.csv");
  const auto exifs = parse_exif_csv((dir / "exif.csv").string());

  ManifestLoadReport rep;
  std::vector<LabeledSample> out;
  for (const auto& [id, gt] : gts) {
    fs::path img = dir / "images" / (id + ".ppm");
    if (!fs::exists(img)) img = dir / "images" / (id + ".pnm");
    if (!fs::exists(img)) {
      ++rep.rejected_missing_image;
      continue;
    }
    auto it = exifs.find(id);
    if (it == exifs.end()) {
      ++rep.rejected_missing_exif;
      continue;
    }
    bool gt_ok = true;
    try {
      (void)gt.left.normalized();
      (void)gt.right.normalized();
      if (!(gt.left.r >= 0 && gt.left.g >= 0 && gt.left.b >= 0 && gt.right.r >= 0 &&
            gt.right.g >= 0 && gt.right.b >= 0))
        gt_ok = false;
    } catch (const Error&) {
      gt_ok = false;
    }
    if (!gt_ok) {
      ++rep.rejected_bad_gt;
      continue;
    }
    LabeledSample s;
    s.image_id = id;
    s.image_path = img;
    s.gt = gt;
    s.exif = it->second;
    s.track = classify_track(gt);
    out.push_back(std::move(s));
    ++rep.accepted;
  }
  if (report) *report = rep;
  return out;  // map iteration order: already sorted by image_id
}

// --- expansion --------------------------------------------------------------

Tensor<double> gaussian_kernel(int size, double sigma) {
  if (size < 1 || size % 2 == 0)
    throw Error(ErrorKind::Config, "gaussian kernel size must be odd and >= 1");
  Tensor<double> k({size, size});
  const int c = size / 2;
  double sum = 0.0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double dy = y - c, dx = x - c;
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      k[static_cast<std::size_t>(y) * size + x] = v;
      sum += v;
    }
  }
  for (std::size_t i = 0; i < k.size(); ++i) k[i] /= sum;
  return k;
}

Tensor<double> blur2d(const Tensor<double>& grid, const Tensor<double>& kernel) {
  if (grid.rank() != 2 || kernel.rank() != 2)
    throw Error(ErrorKind::Config, "blur2d expects 2-d grid and kernel");
  const int h = grid.dim(0), w = grid.dim(1);
  const int ks = kernel.dim(0), c = ks / 2;
  Tensor<double> out({h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int ky = 0; ky < ks; ++ky) {
        const int sy = y + ky - c;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < ks; ++kx) {
          const int sx = x + kx - c;
          if (sx < 0 || sx >= w) continue;
          acc += grid[static_cast<std::size_t>(sy) * w + sx] *
                 kernel[static_cast<std::size_t>(ky) * ks + kx];
        }
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

GtUvHistogram build_gt_uv_histogram(const std::vector<LabeledSample>& samples, int grid_bins,
                                    int blur_size) {
  if (samples.empty())
    throw Error(ErrorKind::Data, "build_gt_uv_histogram: empty sample list");
  if (grid_bins < 8) throw Error(ErrorKind::Config, "uv histogram grid must have >= 8 bins");

  double ulo = 1e300, uhi = -1e300, vlo = 1e300, vhi = -1e300;
  std::vector<std::pair<double, double>> uvs;
  uvs.reserve(samples.size());
  for (const auto& s : samples) {
    const auto [u, v] = rgb_to_uv(s.gt.left);
    uvs.emplace_back(u, v);
    ulo = std::min(ulo, u);
    uhi = std::max(uhi, u);
    vlo = std::min(vlo, v);
    vhi = std::max(vhi, v);
  }

  // bounding box padded by 3 full bin widths on every side so the 7x7 blur of
  // any in-box sample stays on the grid (mass conservation)
  const double span = std::max({uhi - ulo, vhi - vlo, 1e-3});
  const double bw = span / static_cast<double>(grid_bins - 7);

  GtUvHistogram h;
  h.bins = grid_bins;
  h.bin_width = bw;
  h.u_min = ulo - 3.0 * bw;
  h.v_min = vlo - 3.0 * bw;
  h.blur_size = blur_size;

  // votes land in the interior band by construction; clamping only corrects
  // boundary rounding and keeps the blur support on the grid
  const int half = blur_size / 2;
  Tensor<double> raw({grid_bins, grid_bins});
  for (const auto& [u, v] : uvs) {
    int iu = static_cast<int>(std::floor((u - h.u_min) / bw));
    int iv = static_cast<int>(std::floor((v - h.v_min) / bw));
    iu = std::clamp(iu, half, grid_bins - 1 - half);
    iv = std::clamp(iv, half, grid_bins - 1 - half);
    raw[static_cast<std::size_t>(iu) * grid_bins + iv] += 1.0;
  }
  h.grid = blur2d(raw, gaussian_kernel(blur_size));
  return h;
}

std::optional<double> GtUvHistogram::mass_at(double u, double v) const {
  const int iu = static_cast<int>(std::floor((u - u_min) / bin_width));
  const int iv = static_cast<int>(std::floor((v - v_min) / bin_width));
  if (iu < 0 || iu >= bins || iv < 0 || iv >= bins) return std::nullopt;
  return grid[static_cast<std::size_t>(iu) * bins + iv];
}

std::vector<LabeledSample> expansion_filter(const std::vector<LabeledSample>& candidates,
                                            const GtUvHistogram& hist, double threshold) {
  std::vector<LabeledSample> out;
  for (const auto& c : candidates) {
    const auto [u, v] = rgb_to_uv(c.gt.left);
    const auto mass = hist.mass_at(u, v);
    if (mass && *mass > threshold) out.push_back(c);
  }
  return out;
}

// --- augmentation -----------------------------------------------------------

void AugmentConfig::validate() const {
  if (patch < 16) throw Error(ErrorKind::Config, "augment patch must be >= 16");
  if (!(resize_min > 0.0 && resize_min <= resize_max && resize_max <= 1.0))
    throw Error(ErrorKind::Config, "augment resize range must satisfy 0 < min <= max <= 1");
  if (rotation_range_deg < 0.0)
    throw Error(ErrorKind::Config, "augment rotation range must be >= 0");
}

namespace {

float bilinear(const Tensor<float>& img, int ch, double y, double x) {
  const int h = img.dim(1), w = img.dim(2);
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  auto px = [&](int yy, int xx) -> float {
    yy = std::clamp(yy, 0, h - 1);
    xx = std::clamp(xx, 0, w - 1);
    return img.at(ch, yy, xx);
  };
  const double top = px(y0, x0) * (1.0 - fx) + px(y0, x0 + 1) * fx;
  const double bot = px(y0 + 1, x0) * (1.0 - fx) + px(y0 + 1, x0 + 1) * fx;
  return static_cast<float>(top * (1.0 - fy) + bot * fy);
}

Tensor<float> rotate_crop_square(const Tensor<float>& img, double angle_rad) {
  const int h = img.dim(1), w = img.dim(2);
  const double ca = std::cos(angle_rad), sa = std::sin(angle_rad);
  // largest axis-aligned square centered in the rotated footprint
  const int side = static_cast<int>(
      std::floor(static_cast<double>(std::min(h, w)) / (std::fabs(ca) + std::fabs(sa))));
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  const double off = (side - 1) / 2.0;
  Tensor<float> out({3, side, side});
  for (int ch = 0; ch < 3; ++ch) {
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        const double dy = y - off, dx = x - off;
        // inverse-rotate the output coordinate into the source frame
        const double sy = cy + dx * sa + dy * ca;
        const double sx = cx + dx * ca - dy * sa;
        out.at(ch, y, x) = bilinear(img, ch, sy, sx);
      }
    }
  }
  return out;
}

Tensor<float> resize_square(const Tensor<float>& img, int side) {
  const int h = img.dim(1), w = img.dim(2);
  Tensor<float> out({3, side, side});
  const double sy = static_cast<double>(h) / side;
  const double sx = static_cast<double>(w) / side;
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x)
        out.at(ch, y, x) = bilinear(img, ch, (y + 0.5) * sy - 0.5, (x + 0.5) * sx - 0.5);
  return out;
}

}  // namespace

std::optional<Tensor<float>> augment(const Tensor<float>& image, Track track,
                                     const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  if (image.rank() != 3 || image.dim(0) != 3)
    throw Error(ErrorKind::Config, "augment expects [3,H,W], got " + shape_str(image.shape()));

  // left/right label semantics break under large rotations
  const double max_rot = track == Track::TwoIlluminant ? std::min(cfg.rotation_range_deg, 15.0)
                                                       : cfg.rotation_range_deg;
  const double angle = rng.uniform(-max_rot, max_rot) * 3.14159265358979323846 / 180.0;
  const double ratio = rng.uniform(cfg.resize_min, cfg.resize_max);

  Tensor<float> sq = rotate_crop_square(image, angle);
  const int resized = static_cast<int>(std::lround(sq.dim(1) * ratio));
  if (resized < cfg.patch) return std::nullopt;
  Tensor<float> small = (resized == sq.dim(1)) ? std::move(sq) : resize_square(sq, resized);

  const int max_off = resized - cfg.patch;
  const int oy = max_off == 0 ? 0 : static_cast<int>(rng.index(static_cast<std::size_t>(max_off) + 1));
  const int ox = max_off == 0 ? 0 : static_cast<int>(rng.index(static_cast<std::size_t>(max_off) + 1));
  Tensor<float> patch({3, cfg.patch, cfg.patch});
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < cfg.patch; ++y)
      for (int x = 0; x < cfg.patch; ++x) patch.at(ch, y, x) = small.at(ch, y + oy, x + ox);
  return patch;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(mix_seed(seed, epoch));
  rng.shuffle(idx);
  return idx;
}

std::vector<std::vector<std::size_t>> batch_iter(std::size_t n, std::size_t batch_size,
                                                 std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size < 1) throw Error(ErrorKind::Config, "batch size must be >= 1");
  const auto order = epoch_order(n, seed, epoch);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(i + batch_size, n)));
  }
  return out;
}

}  // namespace awb
