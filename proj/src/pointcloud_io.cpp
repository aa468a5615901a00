#include "geomae/pointcloud_io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "geomae/error.hpp"

namespace geomae {

namespace {

// Little-endian encode/decode, independent of host byte order.
void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<uint32_t>(v)); }
void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

class Reader {
 public:
  Reader(const std::string& data, const std::string& path) : data_(data), path_(path) {}

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(byte()) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(byte()) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  uint8_t u8() {
    need(1);
    return byte();
  }
  void skip(size_t n) {
    need(n);
    pos_ += n;
  }
  size_t pos() const { return pos_; }
  bool exhausted() const { return pos_ == data_.size(); }

 private:
  uint8_t byte() { return static_cast<uint8_t>(data_[pos_++]); }
  void need(size_t n) {
    if (pos_ + n > data_.size())
      throw IoError("unexpected EOF at offset " + std::to_string(pos_) + " in " + path_);
  }
  const std::string& data_;
  std::string path_;
  size_t pos_ = 0;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("short write to " + path);
}

double parse_field(std::string_view field, size_t line_no) {
  // trim spaces
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t'))
    field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
    field.remove_suffix(1);
  double v;
  const auto [p, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || p != field.data() + field.size())
    throw IoError("malformed row at line " + std::to_string(line_no));
  return v;
}

PointCloud read_points_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  PointCloud cloud;
  std::string line;
  size_t line_no = 0;
  int columns = 0;  // 3 or 4, set by the first data row
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::string_view rest(line);
    std::vector<std::string_view> fields;
    while (true) {
      const size_t comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 3 && fields.size() != 4)
      throw IoError("malformed row at line " + std::to_string(line_no));
    if (columns == 0) columns = static_cast<int>(fields.size());
    if (static_cast<int>(fields.size()) != columns)
      throw IoError("inconsistent columns at line " + std::to_string(line_no));
    double v[4] = {0, 0, 0, 0};
    for (size_t f = 0; f < fields.size(); ++f) v[f] = parse_field(fields[f], line_no);
    for (size_t f = 0; f < fields.size(); ++f)
      if (!std::isfinite(v[f])) throw IoError("non-finite at line " + std::to_string(line_no));
    cloud.push(static_cast<float>(v[0]), static_cast<float>(v[1]), static_cast<float>(v[2]));
    if (columns == 4) cloud.intensity.push_back(static_cast<float>(v[3]));
  }
  return cloud;
}

PointCloud read_points_bin(const std::string& path) {
  const std::string data = slurp(path);
  if (data.size() % 16 != 0)
    throw IoError("file length " + std::to_string(data.size()) + " not a multiple of 16: " +
                  path);
  Reader r(data, path);
  PointCloud cloud;
  const size_t n = data.size() / 16;
  cloud.xyz.reserve(3 * n);
  cloud.intensity.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    float v[4];
    for (int f = 0; f < 4; ++f) {
      const size_t off = r.pos();
      v[f] = r.f32();
      if (!std::isfinite(v[f])) throw IoError("non-finite at offset " + std::to_string(off));
    }
    cloud.push(v[0], v[1], v[2]);
    cloud.intensity.push_back(v[3]);
  }
  return cloud;
}

}  // namespace

PointFormat parse_point_format(const std::string& name) {
  if (name == "csv") return PointFormat::csv;
  if (name == "xyzi_bin") return PointFormat::xyzi_bin;
  throw ConfigError("unknown point format: " + name);
}

PointCloud read_points(const std::string& path, PointFormat format) {
  return format == PointFormat::csv ? read_points_csv(path) : read_points_bin(path);
}

void write_points(const std::string& path, const PointCloud& cloud, PointFormat format) {
  if (cloud.has_intensity() && cloud.intensity.size() != cloud.count())
    throw GeomaeError("intensity length mismatch");
  if (format == PointFormat::csv) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    char buf[160];
    for (size_t i = 0; i < cloud.count(); ++i) {
      // 9 significant digits round-trip f32 exactly
      if (cloud.has_intensity()) {
        std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g,%.9g\n", cloud.xyz[3 * i],
                      cloud.xyz[3 * i + 1], cloud.xyz[3 * i + 2], cloud.intensity[i]);
      } else {
        std::snprintf(buf, sizeof buf, "%.9g,%.9g,%.9g\n", cloud.xyz[3 * i],
                      cloud.xyz[3 * i + 1], cloud.xyz[3 * i + 2]);
      }
      out << buf;
    }
    if (!out) throw IoError("short write to " + path);
  } else {
    std::string data;
    data.reserve(16 * cloud.count());
    for (size_t i = 0; i < cloud.count(); ++i) {
      put_f32(data, cloud.xyz[3 * i]);
      put_f32(data, cloud.xyz[3 * i + 1]);
      put_f32(data, cloud.xyz[3 * i + 2]);
      put_f32(data, cloud.has_intensity() ? cloud.intensity[i] : 0.0f);
    }
    spit(path, data);
  }
}

namespace {
constexpr char kMagic[4] = {'G', 'M', 'T', '1'};
constexpr uint32_t kTargetVersion = 1;
}  // namespace

void write_targets(const std::string& path, std::span<const TargetRecord> records,
                   const GridConfig& config) {
  for (size_t i = 1; i < records.size(); ++i)
    if (records[i].voxel_id <= records[i - 1].voxel_id)
      throw GeomaeError("target records must be sorted by ascending voxel id");

  std::string data;
  data.reserve(88 + kTargetRecordBytes * records.size());
  data.append(kMagic, 4);
  put_u32(data, kTargetVersion);
  for (int a = 0; a < 3; ++a) put_f64(data, config.range_min[a]);
  for (int a = 0; a < 3; ++a) put_f64(data, config.range_max[a]);
  for (int a = 0; a < 3; ++a) put_f64(data, config.voxel_size[a]);
  put_u64(data, records.size());

  for (const TargetRecord& rec : records) {
    put_u64(data, rec.voxel_id);
    for (float c : rec.stats.centroid) put_f32(data, c);
    for (uint8_t o : rec.stats.occupancy) data.push_back(static_cast<char>(o));
    for (float n : rec.surface.normal) put_f32(data, n);
    for (float c : rec.surface.curvature) put_f32(data, c);
    data.push_back(static_cast<char>(rec.surface.valid ? 1 : 0));
    data.append(3, '\0');
  }
  spit(path, data);
}

TargetFile read_targets(const std::string& path) {
  const std::string data = slurp(path);
  Reader r(data, path);

  char magic[4];
  for (int i = 0; i < 4; ++i) magic[i] = static_cast<char>(r.u8());
  if (std::memcmp(magic, kMagic, 4) != 0) throw IoError("not a GMT1 file: " + path);
  const uint32_t version = r.u32();
  if (version != kTargetVersion)
    throw IoError("not a GMT1 file (unsupported version " + std::to_string(version) + "): " +
                  path);

  TargetFile file;
  for (int a = 0; a < 3; ++a) file.config.range_min[a] = r.f64();
  for (int a = 0; a < 3; ++a) file.config.range_max[a] = r.f64();
  for (int a = 0; a < 3; ++a) file.config.voxel_size[a] = r.f64();
  file.config.validate();
  const uint64_t count = r.u64();

  file.records.resize(count);
  for (uint64_t i = 0; i < count; ++i) {
    TargetRecord& rec = file.records[i];
    rec.voxel_id = r.u64();
    for (float& c : rec.stats.centroid) c = r.f32();
    for (uint8_t& o : rec.stats.occupancy) o = r.u8();
    for (float& n : rec.surface.normal) n = r.f32();
    for (float& c : rec.surface.curvature) c = r.f32();
    rec.surface.valid = r.u8() != 0;
    r.skip(3);
    if (i > 0 && rec.voxel_id <= file.records[i - 1].voxel_id)
      throw IoError("target records out of order in " + path);
  }
  if (!r.exhausted()) throw IoError("trailing bytes after record " + std::to_string(count) +
                                    " in " + path);
  return file;
}

}  // namespace geomae
