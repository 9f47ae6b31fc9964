#include "awb/exif.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace awb {

void ExifRecord::validate() const {
  if (!(aperture > 0.0) || !std::isfinite(aperture))
    throw Error(ErrorKind::Data, "exif: non-positive aperture");
  if (!(exposure_time > 0.0) || !std::isfinite(exposure_time))
    throw Error(ErrorKind::Data, "exif: non-positive exposure_time");
  if (!(iso > 0.0) || !std::isfinite(iso)) throw Error(ErrorKind::Data, "exif: non-positive iso");
  if (orientation < 0 || orientation > 3)
    throw Error(ErrorKind::Data, "exif: orientation must be in 0..3");
}

ExifFeature normalize_exif(const ExifRecord& rec) {
  rec.validate();
  ExifFeature f;
  f.values[0] = std::log2(rec.aperture);
  f.values[1] = std::log2(rec.exposure_time);
  f.values[2] = std::log2(rec.iso / 100.0);
  f.values[3] = static_cast<double>(rec.orientation) / 3.0;
  return f;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
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

double parse_exposure(const std::string& s, int line_no) {
  const auto slash = s.find('/');
  try {
    if (slash != std::string::npos) {
      const double num = std::stod(s.substr(0, slash));
      const double den = std::stod(s.substr(slash + 1));
      if (den == 0.0) throw std::invalid_argument("zero denominator");
      return num / den;
    }
    return std::stod(s);
  } catch (const std::exception&) {
    throw Error(ErrorKind::Data,
                "exif csv line " + std::to_string(line_no) + ": bad exposure_time '" + s + "'");
  }
}

double parse_num(const std::string& s, const std::string& what, int line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing garbage");
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Data,
                "exif csv line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
  }
}

}  // namespace

std::map<std::string, ExifRecord> parse_exif_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Data, "cannot open exif csv '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Data, "empty exif csv '" + path + "'");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::string expected = "image_id,aperture,exposure_time,iso,orientation";
  if (line != expected)
    throw Error(ErrorKind::Data, "exif csv '" + path + "': expected header '" + expected +
                                     "', got '" + line + "'");

  std::map<std::string, ExifRecord> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 5)
      throw Error(ErrorKind::Data, "exif csv line " + std::to_string(line_no) +
                                       ": expected 5 columns, got " + std::to_string(cells.size()));
    ExifRecord rec;
    rec.aperture = parse_num(cells[1], "aperture", line_no);
    rec.exposure_time = parse_exposure(cells[2], line_no);
    rec.iso = parse_num(cells[3], "iso", line_no);
    rec.orientation = static_cast<int>(parse_num(cells[4], "orientation", line_no));
    rec.validate();
    if (out.count(cells[0]))
      throw Error(ErrorKind::Data, "exif csv line " + std::to_string(line_no) +
                                       ": duplicate image_id '" + cells[0] + "'");
    out.emplace(cells[0], rec);
  }
  return out;
}

void write_exif_csv(const std::string& path, const std::map<std::string, ExifRecord>& records) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Data, "cannot write exif csv '" + path + "'");
  out << "image_id,aperture,exposure_time,iso,orientation\n";
  out.precision(17);
  for (const auto& [id, rec] : records)
    out << id << ',' << rec.aperture << ',' << rec.exposure_time << ',' << rec.iso << ','
        << rec.orientation << '\n';
}

}  // namespace awb
