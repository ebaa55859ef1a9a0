#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "osdr/core.hpp"
#include "osdr/engine.hpp"

namespace osdr {

// Dataset serialization for single-vector labeled samples.
//
// Text form: one sample per row `y,<mask bitmap>,x1,...,xD` where the bitmap
// is a string of D '0'/'1' characters marking observed entries (all '1' for a
// fully observed sample, whose x entries are then the complete vector;
// unobserved entries are written as 0). Newlines are '\n', numbers carry full
// double precision.
//
// Binary form (for speed): magic "OSDR1", then little-endian u32 dim, u32
// count, then count * (1 + dim) doubles, each sample as y followed by its x
// entries. The binary form holds fully observed samples only.

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "binary dataset io assumes a little-endian host");

inline double parse_double_field(const std::string& field, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw IoError("dataset line " + std::to_string(line) +
                  ": bad number '" + field + "'");
  }
}

inline std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace detail

inline void write_dataset_csv(std::ostream& out,
                              const std::vector<StreamSample>& samples,
                              Eigen::Index dim) {
  out << "y,mask";
  for (Eigen::Index i = 1; i <= dim; ++i) out << ",x" << i;
  out << "\n";
  for (const StreamSample& s : samples) {
    if (s.x2.size() > 0)
      throw IoError("dataset files hold single-vector samples only");
    out << fmt_full(detail::response_scalar(s.y)) << ",";
    std::string bitmap(static_cast<std::size_t>(dim), '0');
    Eigen::VectorXd full = Eigen::VectorXd::Zero(dim);
    if (s.mask) {
      s.mask->validate(dim);
      for (std::size_t i = 0; i < s.mask->indices.size(); ++i) {
        bitmap[static_cast<std::size_t>(s.mask->indices[i])] = '1';
        full(s.mask->indices[i]) = s.x(static_cast<Eigen::Index>(i));
      }
    } else {
      if (s.x.size() != dim)
        throw IoError("sample dimension disagrees with the dataset");
      bitmap.assign(static_cast<std::size_t>(dim), '1');
      full = s.x;
    }
    out << bitmap;
    for (Eigen::Index i = 0; i < dim; ++i) out << "," << fmt_full(full(i));
    out << "\n";
  }
}

inline std::vector<StreamSample> read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("dataset csv: empty input");
  const std::vector<std::string> header = detail::split_csv_row(line);
  if (header.size() < 3 || header[0] != "y" || header[1] != "mask")
    throw IoError("dataset csv line 1: expected header y,mask,x1,...");
  const std::size_t dim = header.size() - 2;

  std::vector<StreamSample> samples;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> fields = detail::split_csv_row(line);
    if (fields.size() != dim + 2)
      throw IoError("dataset line " + std::to_string(line_no) + ": expected " +
                    std::to_string(dim + 2) + " fields, got " +
                    std::to_string(fields.size()));
    const std::string& bitmap = fields[1];
    if (bitmap.size() != dim)
      throw IoError("dataset line " + std::to_string(line_no) +
                    ": mask bitmap length disagrees with the header");
    StreamSample s;
    s.y = detail::parse_double_field(fields[0], line_no);
    ObservationMask mask;
    std::vector<double> observed;
    bool all = true;
    for (std::size_t i = 0; i < dim; ++i) {
      if (bitmap[i] == '1') {
        mask.indices.push_back(static_cast<Eigen::Index>(i));
        observed.push_back(detail::parse_double_field(fields[i + 2], line_no));
      } else if (bitmap[i] == '0') {
        all = false;
      } else {
        throw IoError("dataset line " + std::to_string(line_no) +
                      ": mask bitmap must be 0s and 1s");
      }
    }
    s.x = Eigen::Map<const Eigen::VectorXd>(
        observed.data(), static_cast<Eigen::Index>(observed.size()));
    if (!all) s.mask = std::move(mask);
    samples.push_back(std::move(s));
  }
  return samples;
}

inline void write_dataset_binary(std::ostream& out,
                                 const std::vector<StreamSample>& samples,
                                 Eigen::Index dim) {
  out.write("OSDR1", 5);
  const std::uint32_t d = static_cast<std::uint32_t>(dim);
  const std::uint32_t n = static_cast<std::uint32_t>(samples.size());
  out.write(reinterpret_cast<const char*>(&d), sizeof d);
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  for (const StreamSample& s : samples) {
    if (s.mask || s.x2.size() > 0)
      throw IoError("binary datasets hold fully observed single vectors");
    if (s.x.size() != dim)
      throw IoError("sample dimension disagrees with the dataset");
    const double y = detail::response_scalar(s.y);
    out.write(reinterpret_cast<const char*>(&y), sizeof y);
    out.write(reinterpret_cast<const char*>(s.x.data()),
              static_cast<std::streamsize>(sizeof(double) * dim));
  }
}

inline std::vector<StreamSample> read_dataset_binary(std::istream& in) {
  char magic[5] = {};
  in.read(magic, 5);
  if (in.gcount() != 5 || std::memcmp(magic, "OSDR1", 5) != 0)
    throw IoError("binary dataset: bad magic");
  std::uint32_t dim = 0, count = 0;
  in.read(reinterpret_cast<char*>(&dim), sizeof dim);
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!in) throw IoError("binary dataset: truncated header");
  std::vector<StreamSample> samples(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    double y = 0.0;
    in.read(reinterpret_cast<char*>(&y), sizeof y);
    samples[i].x.resize(dim);
    in.read(reinterpret_cast<char*>(samples[i].x.data()),
            static_cast<std::streamsize>(sizeof(double) * dim));
    if (!in)
      throw IoError("binary dataset: truncated at sample " +
                    std::to_string(i));
    samples[i].y = y;
  }
  return samples;
}

// Reader for external labeled-vector files: header `y,x1,...,xD` and one
// fully observed sample per row.
inline std::vector<StreamSample> read_labeled_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("labeled csv: empty input");
  const std::vector<std::string> header = detail::split_csv_row(line);
  if (header.size() < 2 || header[0] != "y")
    throw IoError("labeled csv line 1: expected header y,x1,...");
  const std::size_t dim = header.size() - 1;

  std::vector<StreamSample> samples;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> fields = detail::split_csv_row(line);
    if (fields.size() != dim + 1)
      throw IoError("labeled csv line " + std::to_string(line_no) +
                    ": expected " + std::to_string(dim + 1) + " fields, got " +
                    std::to_string(fields.size()));
    StreamSample s;
    s.y = detail::parse_double_field(fields[0], line_no);
    s.x.resize(static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < dim; ++i)
      s.x(static_cast<Eigen::Index>(i)) =
          detail::parse_double_field(fields[i + 1], line_no);
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace osdr
