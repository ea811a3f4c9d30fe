#include "crowd/output.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <map>
#include <numeric>
#include <sstream>

#include "crowd/errors.hpp"

namespace crowd {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

constexpr char kTrajMagic[8] = {'C', 'R', 'W', 'D', 'T', 'R', 'J', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int k = 0; k < 8; ++k) b[static_cast<std::size_t>(k)] = static_cast<char>((v >> (8 * k)) & 0xFF);
  os.write(b.data(), 8);
}

void put_f64(std::ostream& os, double d) { put_u64(os, std::bit_cast<std::uint64_t>(d)); }

bool get_u64(std::istream& is, std::uint64_t& v) {
  std::array<unsigned char, 8> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 8)) return false;
  v = 0;
  for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(k)]) << (8 * k);
  return true;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream os(path, mode | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  return os;
}

}  // namespace

TrajectoryWriter::TrajectoryWriter(const std::string& path,
                                   const std::optional<std::string>& binary_path)
  : text_(open_out(path)) {
  text_ << "step,time,id,x,y,ux,uy,r,exited\n";
  if (binary_path) {
    binary_ = open_out(*binary_path, std::ios::out | std::ios::binary);
    binary_.write(kTrajMagic, 8);
    has_binary_ = true;
  }
}

void TrajectoryWriter::row(std::size_t step, double time, std::size_t id, const Vec2& x,
                           const Vec2& u, double r, bool exited) {
  text_ << step << ',' << format_double(time) << ',' << id << ',' << format_double(x.x()) << ','
        << format_double(x.y()) << ',' << format_double(u.x()) << ',' << format_double(u.y()) << ','
        << format_double(r) << ',' << (exited ? 1 : 0) << '\n';
  if (has_binary_) {
    put_u64(binary_, step);
    put_f64(binary_, time);
    put_u64(binary_, id);
    put_f64(binary_, x.x());
    put_f64(binary_, x.y());
    put_f64(binary_, u.x());
    put_f64(binary_, u.y());
    put_f64(binary_, r);
    binary_.put(exited ? 1 : 0);
  }
}

void TrajectoryWriter::write(const TrajectoryFrame& f, bool sampled) {
  const Configuration& c = f.config;
  if (sampled) {
    for (std::size_t k = 0; k < c.size(); ++k) {
      row(f.step, f.time, c.ids[k], c.positions[k],
          f.velocity.segment<2>(static_cast<Eigen::Index>(2 * k)), c.radii[k], false);
    }
  }
  for (const ExitEvent& e : f.exited) {
    const auto it = std::find(c.ids.begin(), c.ids.end(), e.id);
    const auto k = static_cast<std::size_t>(it - c.ids.begin());
    row(f.step + 1, e.time, e.id, e.position,
        f.velocity.segment<2>(static_cast<Eigen::Index>(2 * k)), c.radii[k], true);
  }
  if (!text_ || (has_binary_ && !binary_)) throw IoError("trajectory write failed");
}

void TrajectoryWriter::flush() {
  text_.flush();
  if (has_binary_) binary_.flush();
  if (!text_ || (has_binary_ && !binary_)) throw IoError("trajectory write failed");
}

PressureWriter::PressureWriter(const std::string& path) : text_(open_out(path)) {
  text_ << "step,i,j,lambda,xi,yi,xj,yj\n";
}

void PressureWriter::write(const TrajectoryFrame& f, bool sampled) {
  if (!sampled) return;
  for (const FrameContact& c : f.contacts) {
    if (!(c.lambda > 0.0)) continue;
    text_ << f.step << ',' << c.i << ',';
    if (c.kind == ContactKind::DiskWall) text_ << 'w';
    text_ << c.j << ',' << format_double(c.lambda) << ',' << format_double(c.pi.x()) << ','
          << format_double(c.pi.y()) << ',' << format_double(c.pj.x()) << ','
          << format_double(c.pj.y()) << '\n';
  }
  if (!text_) throw IoError("pressure write failed");
}

void PressureWriter::flush() {
  text_.flush();
  if (!text_) throw IoError("pressure write failed");
}

std::string format_metrics(const RunMetrics& m) {
  std::ostringstream os;
  os << "evacuation_time_s=" << (m.evacuation_time ? format_double(*m.evacuation_time) : "none") << '\n';
  os << "steps=" << m.steps << '\n';
  os << "final_time_s=" << format_double(m.final_time) << '\n';
  os << "initial_count=" << m.initial_count << '\n';
  os << "remaining=" << m.remaining << '\n';
  for (std::size_t e = 0; e < m.exit_counts.size(); ++e) {
    os << "exit_" << e << "_count=" << m.exit_counts[e] << '\n';
  }
  os << "max_lambda=" << format_double(m.max_lambda) << '\n';
  os << "mean_solver_iterations=" << format_double(m.mean_iterations) << '\n';
  os << "min_gap_m=" << format_double(m.min_gap) << '\n';
  return os.str();
}

void write_metrics(const RunMetrics& metrics, const std::string& path) {
  std::ofstream os = open_out(path);
  os << format_metrics(metrics);
  if (!os) throw IoError("metrics write failed: " + path);
}

std::vector<TrajectoryRow> read_trajectory(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line != "step,time,id,x,y,ux,uy,r,exited") {
    throw IoError(path + ": not a trajectory file (bad header)");
  }
  std::vector<TrajectoryRow> rows;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    TrajectoryRow r;
    int exited = 0;
    unsigned long long step = 0;
    unsigned long long id = 0;
    double x = 0, y = 0, ux = 0, uy = 0;
    const int got = std::sscanf(line.c_str(), "%llu,%lf,%llu,%lf,%lf,%lf,%lf,%lf,%d", &step, &r.time,
                                &id, &x, &y, &ux, &uy, &r.radius, &exited);
    if (got != 9) throw IoError(path + ":" + std::to_string(lineno) + ": malformed row");
    r.step = step;
    r.id = id;
    r.position = {x, y};
    r.velocity = {ux, uy};
    r.exited = exited != 0;
    rows.push_back(r);
  }
  return rows;
}

std::vector<TrajectoryRow> read_trajectory_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kTrajMagic, 8) != 0) {
    throw IoError(path + ": bad trajectory magic");
  }
  std::vector<TrajectoryRow> rows;
  while (true) {
    std::uint64_t step = 0;
    if (!get_u64(is, step)) break;
    std::array<std::uint64_t, 7> w{};
    for (auto& x : w) {
      if (!get_u64(is, x)) throw IoError(path + ": truncated record");
    }
    const int exited = is.get();
    if (exited == EOF) throw IoError(path + ": truncated record");
    TrajectoryRow r;
    r.step = step;
    r.time = std::bit_cast<double>(w[0]);
    r.id = w[1];
    r.position = {std::bit_cast<double>(w[2]), std::bit_cast<double>(w[3])};
    r.velocity = {std::bit_cast<double>(w[4]), std::bit_cast<double>(w[5])};
    r.radius = std::bit_cast<double>(w[6]);
    r.exited = exited != 0;
    rows.push_back(r);
  }
  return rows;
}

FeasibilityReport check_trajectory_feasibility(std::span<const TrajectoryRow> rows,
                                               std::span<const WallSegment> walls,
                                               double tolerance) {
  FeasibilityReport rep;
  std::map<std::size_t, Configuration> frames;
  for (const TrajectoryRow& r : rows) {
    if (r.exited) continue;
    Configuration& c = frames[r.step];
    c.positions.push_back(r.position);
    c.radii.push_back(r.radius);
    c.ids.push_back(r.id);
    c.time = r.time;
  }
  for (const auto& [step, cfg] : frames) {
    ++rep.frames;
    const double g = min_gap(cfg, walls, 0.0);
    if (g < rep.min_gap) {
      rep.min_gap = g;
      rep.worst_step = step;
    }
  }
  rep.ok = !(rep.min_gap < -tolerance);
  return rep;
}

bool has_spanning_arch(const TrajectoryFrame& frame, const ExitSegment& door, double reach) {
  const Vec2 axis = door.b - door.a;
  const double len2 = axis.squaredNorm();
  if (len2 == 0.0) return false;
  const Vec2 mid = 0.5 * (door.a + door.b);

  std::map<std::size_t, std::size_t> parent;
  auto find = [&](std::size_t x) {
    parent.try_emplace(x, x);
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (const FrameContact& c : frame.contacts) {
    if (c.kind != ContactKind::DiskDisk || !(c.lambda > 0.0)) continue;
    parent[find(c.i)] = find(c.j);
  }
  std::map<std::size_t, std::pair<bool, bool>> sides;  // root -> (side a, side b)
  for (const FrameContact& c : frame.contacts) {
    if (c.kind != ContactKind::DiskWall || !(c.lambda > 0.0)) continue;
    if ((c.pj - mid).norm() > reach) continue;
    const double t = (c.pj - door.a).dot(axis) / len2;
    auto& s = sides[find(c.i)];
    if (t < 0.0) s.first = true;
    if (t > 1.0) s.second = true;
  }
  return std::any_of(sides.begin(), sides.end(),
                     [](const auto& kv) { return kv.second.first && kv.second.second; });
}

}  // namespace crowd
