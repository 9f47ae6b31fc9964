#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "awb/color.hpp"
#include "awb/exif.hpp"

namespace awb {

enum class Track { General, Indoor, TwoIlluminant };

inline std::string to_string(Track t) {
  switch (t) {
    case Track::General: return "general";
    case Track::Indoor: return "indoor";
    case Track::TwoIlluminant: return "two_illuminant";
  }
  return "?";
}

Track track_from_string(const std::string& s);

// Two-illuminant iff the measured vectors are not less than 2 degrees apart.
Track classify_track(const TwoIlluminantLabel& gt);

struct LabeledSample {
  std::string image_id;
  std::filesystem::path image_path;
  TwoIlluminantLabel gt;  // single-illuminant samples carry left == right
  ExifRecord exif;
  Track track = Track::General;
};

// --- PNM image IO -----------------------------------------------------------

// Binary PNM P6, maxval 255 or 65535 (16-bit samples big-endian). Values
// scale to [0,1].
Tensor<float> load_image(const std::filesystem::path& path);

// Writes P6 at the given maxval, clipping to [0,1].
void write_image(const std::filesystem::path& path, const Tensor<float>& image, int maxval);

// --- ground-truth CSV -------------------------------------------------------

// Schema: "image_id,l_r,l_g,l_b,r_r,r_g,r_b".
std::map<std::string, TwoIlluminantLabel> parse_gt_csv(const std::filesystem::path& path);
void write_gt_csv(const std::filesystem::path& path,
                  const std::vector<std::pair<std::string, TwoIlluminantLabel>>& rows);

// --- dataset manifest -------------------------------------------------------

struct ManifestLoadReport {
  int accepted = 0;
  int rejected_missing_image = 0;
  int rejected_missing_exif = 0;
  int rejected_bad_gt = 0;
};

// Loads a manifest directory (images/, gt.csv, exif.csv). Samples with a
// missing image or exif record, or an invalid gt, are rejected; counts are
// reported deterministically. Samples come back sorted by image_id.
std::vector<LabeledSample> load_manifest(const std::filesystem::path& dir,
                                         ManifestLoadReport* report = nullptr);

// --- trainset expansion -----------------------------------------------------

struct GtUvHistogram {
  Tensor<double> grid;  // [Bg,Bg], u rows, v columns
  double u_min = 0.0, v_min = 0.0;
  double bin_width = 0.0;
  int bins = 0;
  int blur_size = 7;

  // Blurred mass of the cell holding (u,v); nullopt when out of bounds.
  std::optional<double> mass_at(double u, double v) const;
};

// Normalized blur_size x blur_size Gaussian kernel, sigma 1.5, renormalized
// after truncation.
Tensor<double> gaussian_kernel(int size, double sigma = 1.5);

// Zero-padded 2D convolution with a normalized kernel.
Tensor<double> blur2d(const Tensor<double>& grid, const Tensor<double>& kernel);

// Hard-binned uv histogram of ground-truth illuminants over the samples'
// bounding box padded by 3 bin widths, then Gaussian-blurred.
GtUvHistogram build_gt_uv_histogram(const std::vector<LabeledSample>& samples, int grid_bins,
                                    int blur_size);

// Accepts candidates whose gt uv lands in a cell with blurred mass >
// threshold; order-preserving.
std::vector<LabeledSample> expansion_filter(const std::vector<LabeledSample>& candidates,
                                            const GtUvHistogram& hist, double threshold = 0.0);

// --- augmentation -----------------------------------------------------------

struct AugmentConfig {
  int patch = 512;
  double rotation_range_deg = 60.0;
  double resize_min = 0.1;
  double resize_max = 1.0;

  void validate() const;
};

// Rotate (bilinear) about the center, crop the largest axis-aligned square
// fully inside the rotated footprint, resize by a random ratio, crop a random
// patch. Ground truth is untouched. Two-illuminant samples restrict rotation
// to +-15 degrees. Returns nullopt (too small after resizing) instead of
// failing.
std::optional<Tensor<float>> augment(const Tensor<float>& image, Track track,
                                     const AugmentConfig& cfg, Rng& rng);

// Deterministic epoch ordering: Fisher-Yates keyed by (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

// Batches of indices for one epoch; the final partial batch is kept.
std::vector<std::vector<std::size_t>> batch_iter(std::size_t n, std::size_t batch_size,
                                                 std::uint64_t seed, std::uint64_t epoch);

}  // namespace awb
