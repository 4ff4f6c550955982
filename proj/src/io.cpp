#include "fpba/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace fpba {

namespace fs = std::filesystem;

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string_view strip_comment(std::string_view line) {
  const auto hash = line.find('#');
  return hash == std::string_view::npos ? line : line.substr(0, hash);
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto end = nl == std::string_view::npos ? text.size() : nl;
    ++line_no;
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    fn(line_no, line);
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
}

[[noreturn]] void parse_fail(const std::string& what, std::size_t line_no) {
  throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": " + what);
}

double to_double(std::string_view tok, std::size_t line_no) {
  double v = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    parse_fail("malformed number '" + std::string(tok) + "'", line_no);
  }
  return v;
}

long to_int(std::string_view tok, std::size_t line_no) {
  long v = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    parse_fail("malformed integer '" + std::string(tok) + "'", line_no);
  }
  return v;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class ByteReader {
 public:
  ByteReader(const std::string& data, const fs::path& path) : data_(data), path_(path) {}

  std::uint64_t u(int bytes) {
    if (pos_ + static_cast<std::size_t>(bytes) > data_.size()) {
      throw Error(ErrorCode::kParse, "truncated cloud file " + path_.string());
    }
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  double f64() { return std::bit_cast<double>(u(8)); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  const std::string& data_;
  fs::path path_;
  std::size_t pos_ = 0;
};

struct PgmHeader {
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::size_t data_offset = 0;
};

PgmHeader parse_pgm_header(const std::string& bytes, const fs::path& path) {
  PgmHeader h;
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (next_token() != "P5") {
    throw Error(ErrorCode::kParse, "not a binary PGM file: " + path.string());
  }
  try {
    h.width = std::stoi(next_token());
    h.height = std::stoi(next_token());
    h.maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw Error(ErrorCode::kParse, "malformed PGM header: " + path.string());
  }
  if (h.width <= 0 || h.height <= 0 || h.maxval <= 0 || h.maxval > 65535) {
    throw Error(ErrorCode::kParse, "invalid PGM dimensions: " + path.string());
  }
  h.data_offset = pos + 1;  // single whitespace after maxval
  return h;
}

std::string read_binary_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_binary_file(const fs::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::string read_text_file(const fs::path& path) { return read_binary_file(path); }

void write_text_file(const fs::path& path, std::string_view text) {
  write_binary_file(path, std::string(text));
}

// ---------------------------------------------------------------- floorplan

Floorplan2D parse_floorplan_text(std::string_view text) {
  Floorplan2D fp;
  bool have_units = false;
  std::vector<std::pair<FloorplanSegment, std::size_t>> raw;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const auto toks = split_ws(strip_comment(line));
    if (toks.empty()) return;
    if (toks[0] == "units_per_meter") {
      if (toks.size() != 2) parse_fail("expected 'units_per_meter <value>'", line_no);
      if (have_units) parse_fail("duplicate units_per_meter", line_no);
      fp.units_per_meter = to_double(toks[1], line_no);
      if (!(fp.units_per_meter > 0.0)) parse_fail("units_per_meter must be positive", line_no);
      have_units = true;
    } else if (toks[0] == "segment") {
      if (toks.size() != 5) parse_fail("expected 'segment u1 v1 u2 v2'", line_no);
      FloorplanSegment s{to_double(toks[1], line_no), to_double(toks[2], line_no),
                         to_double(toks[3], line_no), to_double(toks[4], line_no)};
      raw.emplace_back(s, line_no);
    } else {
      parse_fail("unknown record '" + std::string(toks[0]) + "'", line_no);
    }
  });
  for (std::size_t i = 0; i < raw.size(); ++i) {
    FloorplanSegment s = raw[i].first;
    s.u1 /= fp.units_per_meter;
    s.v1 /= fp.units_per_meter;
    s.u2 /= fp.units_per_meter;
    s.v2 /= fp.units_per_meter;
    if (!(s.length() > 1e-6)) {
      parse_fail("segment " + std::to_string(i) + " has zero length", raw[i].second);
    }
    fp.segments.push_back(s);
  }
  if (fp.segments.empty()) {
    throw Error(ErrorCode::kEmptyFloorplan, "floorplan contains no segments");
  }
  return fp;
}

Floorplan2D parse_floorplan(const fs::path& path) {
  return parse_floorplan_text(read_text_file(path));
}

std::string format_floorplan(const Floorplan2D& fp) {
  std::string out = "# floorplan segments in meters\nunits_per_meter 1\n";
  for (const auto& s : fp.segments) {
    out += "segment " + format_double(s.u1) + " " + format_double(s.v1) + " " +
           format_double(s.u2) + " " + format_double(s.v2) + "\n";
  }
  return out;
}

void write_floorplan(const Floorplan2D& fp, const fs::path& path) {
  write_text_file(path, format_floorplan(fp));
}

// --------------------------------------------------------------- trajectory

std::vector<IndexedPose> parse_trajectory_text(std::string_view text) {
  std::vector<IndexedPose> poses;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const auto toks = split_ws(strip_comment(line));
    if (toks.empty()) return;
    if (toks.size() != 8) parse_fail("pose line needs 'index tx ty tz qx qy qz qw'", line_no);
    IndexedPose ip;
    ip.index = static_cast<int>(to_int(toks[0], line_no));
    ip.pose.translation = Vec3(to_double(toks[1], line_no), to_double(toks[2], line_no),
                               to_double(toks[3], line_no));
    const double qx = to_double(toks[4], line_no);
    const double qy = to_double(toks[5], line_no);
    const double qz = to_double(toks[6], line_no);
    const double qw = to_double(toks[7], line_no);
    ip.pose.rotation = Eigen::Quaterniond(qw, qx, qy, qz);
    const double norm = ip.pose.rotation.norm();
    if (!(std::abs(norm - 1.0) < 1e-6)) parse_fail("quaternion is not unit length", line_no);
    poses.push_back(ip);
  });
  return poses;
}

std::vector<IndexedPose> read_trajectory(const fs::path& path) {
  return parse_trajectory_text(read_text_file(path));
}

std::string format_trajectory(std::span<const IndexedPose> poses) {
  std::string out;
  for (const auto& ip : poses) {
    const auto& t = ip.pose.translation;
    const auto& q = ip.pose.rotation;
    out += std::to_string(ip.index) + " " + format_double(t.x()) + " " + format_double(t.y()) +
           " " + format_double(t.z()) + " " + format_double(q.x()) + " " + format_double(q.y()) +
           " " + format_double(q.z()) + " " + format_double(q.w()) + "\n";
  }
  return out;
}

void write_trajectory(std::span<const IndexedPose> poses, const fs::path& path) {
  write_text_file(path, format_trajectory(poses));
}

// -------------------------------------------------------------------- grids

DepthImage read_depth(const fs::path& path) {
  const std::string bytes = read_binary_file(path);
  const PgmHeader h = parse_pgm_header(bytes, path);
  if (h.maxval < 256) throw Error(ErrorCode::kParse, "depth PGM must be 16-bit: " + path.string());
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  if (bytes.size() < h.data_offset + 2 * n) {
    throw Error(ErrorCode::kParse, "truncated depth PGM: " + path.string());
  }
  DepthImage img(h.width, h.height);
  for (std::size_t i = 0; i < n; ++i) {
    const auto hi = static_cast<unsigned char>(bytes[h.data_offset + 2 * i]);
    const auto lo = static_cast<unsigned char>(bytes[h.data_offset + 2 * i + 1]);
    img.data[i] = static_cast<std::uint16_t>((hi << 8) | lo);
  }
  return img;
}

void write_depth(const DepthImage& img, const fs::path& path) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                    "\n65535\n";
  out.reserve(out.size() + 2 * img.data.size());
  for (std::uint16_t v : img.data) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xFF));
  }
  write_binary_file(path, out);
}

LabelImage read_labels(const fs::path& path) {
  const std::string bytes = read_binary_file(path);
  const PgmHeader h = parse_pgm_header(bytes, path);
  if (h.maxval > 255) throw Error(ErrorCode::kParse, "label PGM must be 8-bit: " + path.string());
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  if (bytes.size() < h.data_offset + n) {
    throw Error(ErrorCode::kParse, "truncated label PGM: " + path.string());
  }
  LabelImage img(h.width, h.height);
  std::memcpy(img.data.data(), bytes.data() + h.data_offset, n);
  return img;
}

void write_labels(const LabelImage& img, const fs::path& path) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                    "\n255\n";
  out.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
  write_binary_file(path, out);
}

// ----------------------------------------------------------------- sequence

std::vector<Frame> load_sequence(const fs::path& dir, const std::string& manifest) {
  const fs::path manifest_path = dir / manifest;
  const std::string text = read_text_file(manifest_path);

  CameraIntrinsics intr;
  bool have_intr = false;
  fs::path trajectory_path;
  struct Entry {
    int index;
    fs::path depth;
    fs::path labels;
  };
  std::vector<Entry> entries;

  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const auto toks = split_ws(strip_comment(line));
    if (toks.empty()) return;
    if (toks[0] == "intrinsics") {
      if (toks.size() != 6) parse_fail("expected 'intrinsics fx fy cx cy depth_scale'", line_no);
      intr.fx = to_double(toks[1], line_no);
      intr.fy = to_double(toks[2], line_no);
      intr.cx = to_double(toks[3], line_no);
      intr.cy = to_double(toks[4], line_no);
      intr.depth_scale = to_double(toks[5], line_no);
      have_intr = true;
    } else if (toks[0] == "trajectory") {
      if (toks.size() != 2) parse_fail("expected 'trajectory <path>'", line_no);
      trajectory_path = dir / std::string(toks[1]);
    } else if (toks[0] == "frame") {
      if (toks.size() != 4) parse_fail("expected 'frame <index> <depth> <labels>'", line_no);
      entries.push_back({static_cast<int>(to_int(toks[1], line_no)), dir / std::string(toks[2]),
                         dir / std::string(toks[3])});
    } else {
      parse_fail("unknown manifest record '" + std::string(toks[0]) + "'", line_no);
    }
  });
  if (!have_intr) throw Error(ErrorCode::kParse, "manifest lacks an intrinsics record");
  intr.validate();
  if (trajectory_path.empty()) throw Error(ErrorCode::kParse, "manifest lacks a trajectory record");

  const auto poses = read_trajectory(trajectory_path);
  if (poses.size() != entries.size()) {
    throw Error(ErrorCode::kCountMismatch,
                "trajectory has " + std::to_string(poses.size()) + " poses for " +
                    std::to_string(entries.size()) + " frames");
  }
  std::map<int, Pose> by_index;
  for (const auto& ip : poses) by_index[ip.index] = ip.pose;

  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.index < b.index; });
  std::vector<Frame> frames;
  frames.reserve(entries.size());
  for (const auto& e : entries) {
    Frame f;
    f.index = e.index;
    const auto it = by_index.find(e.index);
    if (it == by_index.end()) {
      throw Error(ErrorCode::kCountMismatch,
                  "no trajectory pose for frame " + std::to_string(e.index));
    }
    f.initial_pose = it->second;
    f.intrinsics = intr;
    f.depth = read_depth(e.depth);
    f.labels = read_labels(e.labels);
    if (!f.labels.same_shape(f.depth.width, f.depth.height)) {
      throw Error(ErrorCode::kShapeMismatch,
                  "frame " + std::to_string(e.index) + ": label size differs from depth size");
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

void write_sequence(const fs::path& dir, std::span<const Frame> frames, const std::string& manifest) {
  if (frames.empty()) throw Error(ErrorCode::kEmptyInput, "no frames to write");
  fs::create_directories(dir / "depth");
  fs::create_directories(dir / "labels");
  const auto& intr = frames.front().intrinsics;
  std::string text = "intrinsics " + format_double(intr.fx) + " " + format_double(intr.fy) + " " +
                     format_double(intr.cx) + " " + format_double(intr.cy) + " " +
                     format_double(intr.depth_scale) + "\ntrajectory trajectory.txt\n";
  std::vector<IndexedPose> poses;
  for (const auto& f : frames) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06d.pgm", f.index);
    write_depth(f.depth, dir / "depth" / name);
    write_labels(f.labels, dir / "labels" / name);
    text += "frame " + std::to_string(f.index) + " depth/" + name + " labels/" + name + "\n";
    poses.push_back({f.index, f.initial_pose});
  }
  write_trajectory(poses, dir / "trajectory.txt");
  write_text_file(dir / manifest, text);
}

// ------------------------------------------------------------------ matches

MatchLoadResult parse_matches_text(std::string_view text, std::span<const Frame> frames) {
  std::map<int, const Frame*> by_index;
  for (const auto& f : frames) by_index[f.index] = &f;
  MatchLoadResult result;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const auto toks = split_ws(strip_comment(line));
    if (toks.empty()) return;
    if (toks.size() != 6) parse_fail("match line needs 'frame_a ua va frame_b ub vb'", line_no);
    KeypointMatch m;
    m.frame_a = static_cast<int>(to_int(toks[0], line_no));
    m.ua = to_double(toks[1], line_no);
    m.va = to_double(toks[2], line_no);
    m.frame_b = static_cast<int>(to_int(toks[3], line_no));
    m.ub = to_double(toks[4], line_no);
    m.vb = to_double(toks[5], line_no);
    const auto fa = by_index.find(m.frame_a);
    const auto fb = by_index.find(m.frame_b);
    if (fa == by_index.end() || fb == by_index.end()) {
      throw Error(ErrorCode::kUnknownFrame,
                  "line " + std::to_string(line_no) + ": match references unknown frame");
    }
    if (m.frame_a == m.frame_b) parse_fail("match within a single frame", line_no);
    auto inside = [](const Frame& f, double u, double v) {
      return u >= 0.0 && v >= 0.0 && u <= f.depth.width - 1 && v <= f.depth.height - 1;
    };
    if (!inside(*fa->second, m.ua, m.va) || !inside(*fb->second, m.ub, m.vb)) {
      ++result.dropped_out_of_bounds;
      return;
    }
    result.matches.push_back(m);
  });
  return result;
}

MatchLoadResult load_matches(const fs::path& path, std::span<const Frame> frames) {
  return parse_matches_text(read_text_file(path), frames);
}

void write_matches(std::span<const KeypointMatch> matches, const fs::path& path) {
  std::string out;
  for (const auto& m : matches) {
    out += std::to_string(m.frame_a) + " " + format_double(m.ua) + " " + format_double(m.va) +
           " " + std::to_string(m.frame_b) + " " + format_double(m.ub) + " " +
           format_double(m.vb) + "\n";
  }
  write_text_file(path, out);
}

// -------------------------------------------------------------------- cloud

void export_cloud(const PointCloud& cloud, const fs::path& path) {
  std::uint32_t flags = 0;
  if (cloud.has_normals()) flags |= 1u;
  if (cloud.has_provenance()) flags |= 2u;
  std::string out = "FPCL";
  put_u32(out, 1);
  put_u32(out, flags);
  put_u64(out, cloud.size());
  for (const auto& p : cloud.points) {
    put_f64(out, p.x());
    put_f64(out, p.y());
    put_f64(out, p.z());
  }
  if (flags & 1u) {
    for (const auto& n : cloud.normals) {
      put_f64(out, n.x());
      put_f64(out, n.y());
      put_f64(out, n.z());
    }
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      out.push_back(cloud.normal_ok(i) ? 1 : 0);
    }
  }
  if (flags & 2u) {
    for (const auto& pv : cloud.provenance) {
      put_u32(out, pv.frame);
      put_u32(out, pv.row);
      put_u32(out, pv.col);
    }
  }
  write_binary_file(path, out);
}

PointCloud import_cloud(const fs::path& path) {
  const std::string bytes = read_binary_file(path);
  if (bytes.size() < 4 || bytes.compare(0, 4, "FPCL") != 0) {
    throw Error(ErrorCode::kParse, "not a cloud file: " + path.string());
  }
  const std::string body = bytes.substr(4);
  ByteReader rd(body, path);
  const auto version = rd.u(4);
  if (version != 1) throw Error(ErrorCode::kParse, "unsupported cloud version");
  const auto flags = rd.u(4);
  const auto count = rd.u(8);
  std::size_t per_point = 24;
  if (flags & 1u) per_point += 25;
  if (flags & 2u) per_point += 12;
  if (count > rd.remaining() / per_point) {
    throw Error(ErrorCode::kParse, "truncated cloud file " + path.string());
  }
  PointCloud cloud;
  cloud.points.resize(count);
  for (auto& p : cloud.points) {
    p.x() = rd.f64();
    p.y() = rd.f64();
    p.z() = rd.f64();
  }
  if (flags & 1u) {
    cloud.normals.resize(count);
    for (auto& n : cloud.normals) {
      n.x() = rd.f64();
      n.y() = rd.f64();
      n.z() = rd.f64();
    }
    cloud.normal_valid.resize(count);
    for (auto& v : cloud.normal_valid) v = static_cast<std::uint8_t>(rd.u(1));
  }
  if (flags & 2u) {
    cloud.provenance.resize(count);
    for (auto& pv : cloud.provenance) {
      pv.frame = static_cast<std::uint32_t>(rd.u(4));
      pv.row = static_cast<std::uint32_t>(rd.u(4));
      pv.col = static_cast<std::uint32_t>(rd.u(4));
    }
  }
  return cloud;
}

}  // namespace fpba
