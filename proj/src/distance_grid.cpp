#include "crowd/distance_grid.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <queue>
#include <sstream>

#include "crowd/errors.hpp"

namespace crowd {

DistanceGrid DistanceGrid::make(Vec2 origin, double spacing, std::size_t nx, std::size_t ny) {
  if (!(spacing > 0.0)) throw ValidationError("grid: spacing must be positive");
  if (nx == 0 || ny == 0) throw ValidationError("grid: dimensions must be positive");
  DistanceGrid g;
  g.origin = origin;
  g.spacing = spacing;
  g.nx = nx;
  g.ny = ny;
  const Vec2 extent = spacing * Vec2(static_cast<double>(nx - 1), static_cast<double>(ny - 1));
  g.large_value = 1e6 * std::max(extent.norm(), spacing);
  g.values.assign(nx * ny, g.large_value);
  g.obstacle.assign(nx * ny, 0);
  g.exit.assign(nx * ny, 0);
  return g;
}

bool DistanceGrid::contains(const Vec2& x) const noexcept {
  const Vec2 rel = (x - origin) / spacing;
  return rel.x() >= 0.0 && rel.y() >= 0.0 && rel.x() <= static_cast<double>(nx - 1) &&
         rel.y() <= static_cast<double>(ny - 1);
}

namespace {

struct Cell {
  std::size_t ix;
  std::size_t iy;
  double fx;  // fractional offsets in [0, 1]
  double fy;
};

Cell locate(const DistanceGrid& g, const Vec2& x) {
  const Vec2 rel = (x - g.origin) / g.spacing;
  const double mx = static_cast<double>(g.nx > 1 ? g.nx - 2 : 0);
  const double my = static_cast<double>(g.ny > 1 ? g.ny - 2 : 0);
  const double cx = std::clamp(std::floor(rel.x()), 0.0, mx);
  const double cy = std::clamp(std::floor(rel.y()), 0.0, my);
  return {static_cast<std::size_t>(cx), static_cast<std::size_t>(cy),
          std::clamp(rel.x() - cx, 0.0, 1.0), std::clamp(rel.y() - cy, 0.0, 1.0)};
}

template <typename F>
void for_corners(const DistanceGrid& g, const Cell& c, F&& f) {
  for (std::size_t dy = 0; dy < 2; ++dy) {
    for (std::size_t dx = 0; dx < 2; ++dx) {
      const std::size_t ix = std::min(c.ix + dx, g.nx - 1);
      const std::size_t iy = std::min(c.iy + dy, g.ny - 1);
      const double w = (dx ? c.fx : 1.0 - c.fx) * (dy ? c.fy : 1.0 - c.fy);
      f(ix, iy, w);
    }
  }
}

}  // namespace

double DistanceGrid::interpolate(const Vec2& x) const {
  const Cell c = locate(*this, x);
  double sum = 0.0;
  double wsum = 0.0;
  for_corners(*this, c, [&](std::size_t ix, std::size_t iy, double w) {
    const std::size_t k = index(ix, iy);
    if (!reached(k)) return;
    sum += w * values[k];
    wsum += w;
  });
  if (wsum <= 1e-12) {
    // Degenerate weights on the reached corners: fall back to their plain mean.
    double s = 0.0;
    int n = 0;
    for_corners(*this, c, [&](std::size_t ix, std::size_t iy, double) {
      const std::size_t k = index(ix, iy);
      if (reached(k)) {
        s += values[k];
        ++n;
      }
    });
    return n ? s / n : large_value;
  }
  return sum / wsum;
}

std::size_t DistanceGrid::unreached_count() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < size(); ++k) {
    if (!obstacle[k] && values[k] >= large_value) ++n;
  }
  return n;
}

DistanceGrid rasterize(const FloorPlan& plan, const GridOptions& options) {
  if (!(options.spacing > 0.0)) throw ValidationError("grid: spacing must be positive");
  Box box = plan.bounds();
  box.lo.array() -= options.margin;
  box.hi.array() += options.margin;
  const Vec2 extent = box.hi - box.lo;
  const auto nx = static_cast<std::size_t>(std::ceil(extent.x() / options.spacing - 1e-9)) + 1;
  const auto ny = static_cast<std::size_t>(std::ceil(extent.y() / options.spacing - 1e-9)) + 1;
  DistanceGrid g = DistanceGrid::make(box.lo, options.spacing, nx, ny);

  const std::vector<WallSegment> segs = plan.segments();
  const double thickness = std::max(options.inflation, 0.5 * options.spacing);
  for (std::size_t iy = 0; iy < ny; ++iy) {
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const Vec2 p = g.node(ix, iy);
      bool blocked = plan.inside_obstacle(p);
      for (std::size_t s = 0; s < segs.size() && !blocked; ++s) {
        blocked = distance_to_segment(p, segs[s].a, segs[s].b) <= thickness;
      }
      g.obstacle[g.index(ix, iy)] = blocked ? 1 : 0;
    }
  }

  const double capture = 0.5 * options.spacing * (1.0 + 1e-9);
  for (const ExitSegment& e : plan.exits) {
    bool any = false;
    std::size_t nearest = g.size();
    double nearest_d = std::numeric_limits<double>::infinity();
    const Vec2 mid = 0.5 * (e.a + e.b);
    for (std::size_t iy = 0; iy < ny; ++iy) {
      for (std::size_t ix = 0; ix < nx; ++ix) {
        const std::size_t k = g.index(ix, iy);
        if (g.obstacle[k]) continue;
        const Vec2 p = g.node(ix, iy);
        if (distance_to_segment(p, e.a, e.b) <= capture) {
          g.exit[k] = 1;
          any = true;
        }
        const double d = (p - mid).norm();
        if (d < nearest_d) {
          nearest_d = d;
          nearest = k;
        }
      }
    }
    if (!any && nearest < g.size()) g.exit[nearest] = 1;
  }
  return g;
}

namespace {

/// Solves the upwind quadratic from the smallest accepted neighbor per axis.
double upwind_update(double a, double b, double h) {
  if (!std::isfinite(a)) return b + h;
  if (!std::isfinite(b)) return a + h;
  if (std::abs(a - b) >= h) return std::min(a, b) + h;
  return 0.5 * (a + b + std::sqrt(2.0 * h * h - (a - b) * (a - b)));
}

}  // namespace

void fmm_march(DistanceGrid& g, std::vector<std::size_t>* acceptance_order) {
  enum : std::uint8_t { Far, Trial, Accepted };
  std::vector<std::uint8_t> state(g.size(), Far);
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;

  std::fill(g.values.begin(), g.values.end(), g.large_value);
  for (std::size_t k = 0; k < g.size(); ++k) {
    if (g.exit[k] && !g.obstacle[k]) {
      g.values[k] = 0.0;
      state[k] = Trial;
      heap.emplace(0.0, k);
    }
  }
  if (heap.empty()) throw ValidationError("fast marching: no exit node on the grid");
  if (acceptance_order) acceptance_order->clear();

  const double inf = std::numeric_limits<double>::infinity();
  auto accepted_value = [&](std::size_t ix, std::size_t iy) {
    const std::size_t k = g.index(ix, iy);
    return state[k] == Accepted ? g.values[k] : inf;
  };

  while (!heap.empty()) {
    const auto [value, k] = heap.top();
    heap.pop();
    if (state[k] == Accepted || value > g.values[k]) continue;
    state[k] = Accepted;
    if (acceptance_order) acceptance_order->push_back(k);

    const std::size_t ix = k % g.nx;
    const std::size_t iy = k / g.nx;
    const std::array<std::pair<long, long>, 4> dirs{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
    for (const auto& [dx, dy] : dirs) {
      const long jx = static_cast<long>(ix) + dx;
      const long jy = static_cast<long>(iy) + dy;
      if (jx < 0 || jy < 0 || jx >= static_cast<long>(g.nx) || jy >= static_cast<long>(g.ny)) {
        continue;
      }
      const auto ux = static_cast<std::size_t>(jx);
      const auto uy = static_cast<std::size_t>(jy);
      const std::size_t n = g.index(ux, uy);
      if (state[n] == Accepted || g.obstacle[n]) continue;
      double a = inf;
      double b = inf;
      if (ux > 0) a = std::min(a, accepted_value(ux - 1, uy));
      if (ux + 1 < g.nx) a = std::min(a, accepted_value(ux + 1, uy));
      if (uy > 0) b = std::min(b, accepted_value(ux, uy - 1));
      if (uy + 1 < g.ny) b = std::min(b, accepted_value(ux, uy + 1));
      const double cand = upwind_update(a, b, g.spacing);
      if (cand < g.values[n]) {
        g.values[n] = cand;
        state[n] = Trial;
        heap.emplace(cand, n);
      }
    }
  }
}

DistanceGrid fmm_solve(const FloorPlan& plan, const GridOptions& options) {
  DistanceGrid g = rasterize(plan, options);
  fmm_march(g);
  return g;
}

double eikonal_residual(const DistanceGrid& g) {
  double worst = 0.0;
  auto neighbor = [&](long ix, long iy) {
    if (ix < 0 || iy < 0 || ix >= static_cast<long>(g.nx) || iy >= static_cast<long>(g.ny)) {
      return std::numeric_limits<double>::infinity();
    }
    const std::size_t k = g.index(static_cast<std::size_t>(ix), static_cast<std::size_t>(iy));
    return g.reached(k) ? g.values[k] : std::numeric_limits<double>::infinity();
  };
  for (std::size_t iy = 0; iy < g.ny; ++iy) {
    for (std::size_t ix = 0; ix < g.nx; ++ix) {
      const std::size_t k = g.index(ix, iy);
      if (!g.reached(k) || g.exit[k]) continue;
      const long x = static_cast<long>(ix);
      const long y = static_cast<long>(iy);
      const double d = g.values[k];
      const double a = std::min(neighbor(x - 1, y), neighbor(x + 1, y));
      const double b = std::min(neighbor(x, y - 1), neighbor(x, y + 1));
      const double ga = std::isfinite(a) ? std::max(d - a, 0.0) : 0.0;
      const double gb = std::isfinite(b) ? std::max(d - b, 0.0) : 0.0;
      const double grad = std::sqrt(ga * ga + gb * gb) / g.spacing;
      worst = std::max(worst, std::abs(grad - 1.0));
    }
  }
  return worst;
}

namespace {

Vec2 node_gradient(const DistanceGrid& g, std::size_t ix, std::size_t iy) {
  const std::size_t k = g.index(ix, iy);
  const double d = g.values[k];
  auto usable = [&](long jx, long jy, double& out) {
    if (jx < 0 || jy < 0 || jx >= static_cast<long>(g.nx) || jy >= static_cast<long>(g.ny)) {
      return false;
    }
    const std::size_t n = g.index(static_cast<std::size_t>(jx), static_cast<std::size_t>(jy));
    if (!g.reached(n)) return false;
    out = g.values[n];
    return true;
  };
  auto axis = [&](long dx, long dy) {
    double lo = 0.0;
    double hi = 0.0;
    const long x = static_cast<long>(ix);
    const long y = static_cast<long>(iy);
    const bool has_lo = usable(x - dx, y - dy, lo);
    const bool has_hi = usable(x + dx, y + dy, hi);
    if (has_lo && has_hi) return (hi - lo) / (2.0 * g.spacing);
    if (has_hi) return (hi - d) / g.spacing;
    if (has_lo) return (d - lo) / g.spacing;
    return 0.0;
  };
  return {axis(1, 0), axis(0, 1)};
}

}  // namespace

Vec2 geodesic_velocity(const DistanceGrid& g, double speed, const Vec2& x) {
  const Vec2 rel = (x - g.origin) / g.spacing;
  const double tol = 1e-9;
  if (!x.allFinite() || rel.x() < -tol || rel.y() < -tol ||
      rel.x() > static_cast<double>(g.nx - 1) + tol || rel.y() > static_cast<double>(g.ny - 1) + tol) {
    throw GeometryError("geodesic field: point (" + std::to_string(x.x()) + ", " +
                        std::to_string(x.y()) + ") outside the grid");
  }
  if (speed == 0.0) return Vec2::Zero();

  // Within half a cell of an exit node: the nearest node is the only candidate.
  const auto nix = static_cast<std::size_t>(std::clamp(std::lround(rel.x()), 0L, static_cast<long>(g.nx - 1)));
  const auto niy = static_cast<std::size_t>(std::clamp(std::lround(rel.y()), 0L, static_cast<long>(g.ny - 1)));
  if (g.exit[g.index(nix, niy)] && (g.node(nix, niy) - x).norm() <= 0.5 * g.spacing) {
    return Vec2::Zero();
  }

  const Cell c = locate(g, x);
  Vec2 grad = Vec2::Zero();
  double wsum = 0.0;
  for_corners(g, c, [&](std::size_t ix, std::size_t iy, double w) {
    if (!g.reached(g.index(ix, iy))) return;
    grad += w * node_gradient(g, ix, iy);
    wsum += w;
  });
  if (wsum <= 1e-12) {
    // Pressed against an inflated obstacle: use the reached nodes of the
    // surrounding 4x4 block with inverse-distance weights.
    for (long dy = -1; dy <= 2; ++dy) {
      for (long dx = -1; dx <= 2; ++dx) {
        const long jx = static_cast<long>(c.ix) + dx;
        const long jy = static_cast<long>(c.iy) + dy;
        if (jx < 0 || jy < 0 || jx >= static_cast<long>(g.nx) || jy >= static_cast<long>(g.ny)) {
          continue;
        }
        const auto ux = static_cast<std::size_t>(jx);
        const auto uy = static_cast<std::size_t>(jy);
        if (!g.reached(g.index(ux, uy))) continue;
        const double w = 1.0 / (1e-12 + (g.node(ux, uy) - x).norm());
        grad += w * node_gradient(g, ux, uy);
        wsum += w;
      }
    }
    if (wsum == 0.0) {
      throw GeometryError("geodesic field: point (" + std::to_string(x.x()) + ", " +
                          std::to_string(x.y()) + ") is inside an obstacle");
    }
  }
  const double n = grad.norm();
  if (n <= 1e-12) return Vec2::Zero();
  return -speed * grad / n;
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int k = 0; k < 4; ++k) b[static_cast<std::size_t>(k)] = static_cast<char>((v >> (8 * k)) & 0xFF);
  os.write(b.data(), 4);
}

void put_f64(std::ostream& os, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  std::array<char, 8> b{};
  for (int k = 0; k < 8; ++k) b[static_cast<std::size_t>(k)] = static_cast<char>((v >> (8 * k)) & 0xFF);
  os.write(b.data(), 8);
}

std::uint64_t get_bytes(std::istream& is, int n) {
  std::array<unsigned char, 8> b{};
  is.read(reinterpret_cast<char*>(b.data()), n);
  if (!is) throw IoError("grid: truncated binary file");
  std::uint64_t v = 0;
  for (int k = 0; k < n; ++k) v |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(k)]) << (8 * k);
  return v;
}

constexpr char kMagic[8] = {'C', 'R', 'W', 'D', 'G', 'R', 'D', '1'};

}  // namespace

void write_grid_binary(const DistanceGrid& g, std::ostream& os) {
  os.write(kMagic, 8);
  put_u32(os, static_cast<std::uint32_t>(g.nx));
  put_u32(os, static_cast<std::uint32_t>(g.ny));
  put_f64(os, g.origin.x());
  put_f64(os, g.origin.y());
  put_f64(os, g.spacing);
  put_f64(os, g.large_value);
  for (double v : g.values) put_f64(os, v);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const char flag = static_cast<char>((g.obstacle[k] ? 1 : 0) | (g.exit[k] ? 2 : 0));
    os.put(flag);
  }
  if (!os) throw IoError("grid: write failed");
}

DistanceGrid read_grid_binary(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw IoError("grid: bad magic");
  const auto nx = static_cast<std::size_t>(get_bytes(is, 4));
  const auto ny = static_cast<std::size_t>(get_bytes(is, 4));
  const double ox = std::bit_cast<double>(get_bytes(is, 8));
  const double oy = std::bit_cast<double>(get_bytes(is, 8));
  const double spacing = std::bit_cast<double>(get_bytes(is, 8));
  DistanceGrid g = DistanceGrid::make({ox, oy}, spacing, nx, ny);
  g.large_value = std::bit_cast<double>(get_bytes(is, 8));
  for (double& v : g.values) v = std::bit_cast<double>(get_bytes(is, 8));
  for (std::size_t k = 0; k < g.size(); ++k) {
    const auto flag = static_cast<std::uint8_t>(get_bytes(is, 1));
    g.obstacle[k] = flag & 1;
    g.exit[k] = (flag >> 1) & 1;
  }
  return g;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void expect_token(std::istream& is, const std::string& want) {
  std::string tok;
  if (!(is >> tok) || tok != want) {
    throw IoError("grid text: expected '" + want + "', got '" + tok + "'");
  }
}

}  // namespace

void write_grid_text(const DistanceGrid& g, std::ostream& os) {
  os << "crowd-grid 1\n";
  os << "dims " << g.nx << ' ' << g.ny << '\n';
  os << "origin " << format_double(g.origin.x()) << ' ' << format_double(g.origin.y()) << '\n';
  os << "spacing " << format_double(g.spacing) << '\n';
  os << "large " << format_double(g.large_value) << '\n';
  os << "values\n";
  for (std::size_t iy = 0; iy < g.ny; ++iy) {
    for (std::size_t ix = 0; ix < g.nx; ++ix) {
      if (ix) os << ' ';
      os << format_double(g.values[g.index(ix, iy)]);
    }
    os << '\n';
  }
  os << "flags\n";
  for (std::size_t iy = 0; iy < g.ny; ++iy) {
    for (std::size_t ix = 0; ix < g.nx; ++ix) {
      const std::size_t k = g.index(ix, iy);
      if (ix) os << ' ';
      os << ((g.obstacle[k] ? 1 : 0) | (g.exit[k] ? 2 : 0));
    }
    os << '\n';
  }
  if (!os) throw IoError("grid: write failed");
}

DistanceGrid read_grid_text(std::istream& is) {
  expect_token(is, "crowd-grid");
  int version = 0;
  if (!(is >> version) || version != 1) throw IoError("grid text: unsupported version");
  std::size_t nx = 0;
  std::size_t ny = 0;
  double ox = 0.0;
  double oy = 0.0;
  double spacing = 0.0;
  double large = 0.0;
  expect_token(is, "dims");
  is >> nx >> ny;
  expect_token(is, "origin");
  is >> ox >> oy;
  expect_token(is, "spacing");
  is >> spacing;
  expect_token(is, "large");
  is >> large;
  if (!is) throw IoError("grid text: malformed header");
  DistanceGrid g = DistanceGrid::make({ox, oy}, spacing, nx, ny);
  g.large_value = large;
  expect_token(is, "values");
  for (double& v : g.values) {
    if (!(is >> v)) throw IoError("grid text: truncated values");
  }
  expect_token(is, "flags");
  for (std::size_t k = 0; k < g.size(); ++k) {
    int flag = 0;
    if (!(is >> flag)) throw IoError("grid text: truncated flags");
    g.obstacle[k] = flag & 1;
    g.exit[k] = (flag >> 1) & 1;
  }
  return g;
}

void save_grid(const DistanceGrid& grid, const std::string& path) {
  const bool text = path.size() >= 4 && path.compare(path.size() - 4, 4, ".txt") == 0;
  std::ofstream os(path, text ? std::ios::out : std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  if (text) {
    write_grid_text(grid, os);
  } else {
    write_grid_binary(grid, os);
  }
}

DistanceGrid load_grid(const std::string& path) {
  const bool text = path.size() >= 4 && path.compare(path.size() - 4, 4, ".txt") == 0;
  std::ifstream is(path, text ? std::ios::in : std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return text ? read_grid_text(is) : read_grid_binary(is);
}

}  // namespace crowd
