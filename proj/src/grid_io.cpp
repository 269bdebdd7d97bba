#include "faid/grid_io.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "faid/errors.hpp"

namespace faid {
namespace {

constexpr std::array<char, 4> kMagic{ 'F', 'D', 'G', '1' };

class Tokenizer {
 public:
  explicit Tokenizer(std::string_view s) : s_(s) {}

  std::size_t offset() const { return pos_; }

  void skip_ws() {
    while (pos_ < s_.size()
           && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\r'
               || s_[pos_] == '\n'))
      ++pos_;
  }

  bool at_end() {
    skip_ws();
    return pos_ >= s_.size();
  }

  template <class T>
  T number(const char *what) {
    skip_ws();
    const std::size_t start = pos_;
    if (pos_ >= s_.size())
      throw FormatError(start, std::string("unexpected end of file, expected ") + what);
    T v{};
    const auto [ptr, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v);
    const std::size_t end = static_cast<std::size_t>(ptr - s_.data());
    if (ec != std::errc() || (end < s_.size() && !std::isspace(static_cast<unsigned char>(s_[end]))))
      throw FormatError(start, std::string("malformed ") + what);
    pos_ = end;
    return v;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
};

void check_grid_header(const GridSpec &g, std::size_t offset) {
  if (g.nx < 1 || g.ny < 1)
    throw FormatError(offset, "grid dimensions must be positive");
  if (!(g.dx > 0.0) || !std::isfinite(g.dx) || !std::isfinite(g.x0)
      || !std::isfinite(g.y0))
    throw FormatError(offset, "grid spacing must be positive and finite");
}

void check_density(double v, std::size_t offset) {
  if (!(v >= 0.0 && v <= 1.0))
    throw FormatError(offset, fmt::format("density value {} outside [0, 1]", v));
}

template <class T>
T read_raw(std::string_view bytes, std::size_t &pos) {
  if (pos + sizeof(T) > bytes.size())
    throw FormatError(pos, "truncated binary grid");
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

template <class T>
void append_raw(std::string &out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

}  // namespace

std::string encode_density_grid(const DensityGrid &grid, GridEncoding encoding) {
  const GridSpec &g = grid.grid;
  std::string out;
  if (encoding == GridEncoding::Binary) {
    out.append(kMagic.data(), kMagic.size());
    append_raw(out, static_cast<std::uint32_t>(g.nx));
    append_raw(out, static_cast<std::uint32_t>(g.ny));
    append_raw(out, g.dx);
    append_raw(out, g.x0);
    append_raw(out, g.y0);
    for (Eigen::Index k = 0; k < grid.values.size(); ++k)
      append_raw(out, grid.values[k]);
    return out;
  }

  out = fmt::format("{} {} {} {} {}\n", g.nx, g.ny, g.dx, g.x0, g.y0);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      if (i)
        out += ' ';
      out += fmt::format("{}", grid.at(i, j));
    }
    out += '\n';
  }
  return out;
}

DensityGrid decode_density_grid(std::string_view bytes) {
  DensityGrid out;
  GridSpec &g = out.grid;

  if (bytes.size() >= kMagic.size()
      && std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) == 0) {
    std::size_t pos = kMagic.size();
    const std::size_t header = pos;
    g.nx = static_cast<int>(read_raw<std::uint32_t>(bytes, pos));
    g.ny = static_cast<int>(read_raw<std::uint32_t>(bytes, pos));
    g.dx = read_raw<double>(bytes, pos);
    g.x0 = read_raw<double>(bytes, pos);
    g.y0 = read_raw<double>(bytes, pos);
    check_grid_header(g, header);
    out.values.resize(static_cast<Eigen::Index>(g.size()));
    for (Eigen::Index k = 0; k < out.values.size(); ++k) {
      const std::size_t at = pos;
      out.values[k] = read_raw<double>(bytes, pos);
      check_density(out.values[k], at);
    }
    if (pos != bytes.size())
      throw FormatError(pos, "trailing bytes after binary grid");
    return out;
  }

  Tokenizer tok(bytes);
  const std::size_t header = tok.offset();
  g.nx = tok.number<int>("nx");
  g.ny = tok.number<int>("ny");
  g.dx = tok.number<double>("dx");
  g.x0 = tok.number<double>("x0");
  g.y0 = tok.number<double>("y0");
  check_grid_header(g, header);
  out.values.resize(static_cast<Eigen::Index>(g.size()));
  for (Eigen::Index k = 0; k < out.values.size(); ++k) {
    tok.skip_ws();
    const std::size_t at = tok.offset();
    out.values[k] = tok.number<double>("grid value");
    check_density(out.values[k], at);
  }
  if (!tok.at_end())
    throw FormatError(tok.offset(), "trailing data after grid values");
  return out;
}

void save_density_grid(const std::filesystem::path &path, const DensityGrid &grid,
                       GridEncoding encoding) {
  write_file_atomic(path, encode_density_grid(grid, encoding));
}

DensityGrid load_density_grid(const std::filesystem::path &path) {
  return decode_density_grid(read_file(path));
}

std::string encode_complex_grid(const GridSpec &g, const Eigen::VectorXcd &values) {
  std::string out = fmt::format("{} {} {} {} {}\n", g.nx, g.ny, g.dx, g.x0, g.y0);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const auto z = values[g.index(i, j)];
      if (i) out += ' ';
      out += fmt::format("{} {}", z.real(), z.imag());
    }
    out += '\n';
  }
  return out;
}

std::string encode_polygons(const PolygonSet &poly, std::string_view header) {
  std::string out = fmt::format("# {}\n", header);
  for (std::size_t p = 0; p < poly.polygons.size(); ++p) {
    if (p)
      out += '\n';
    for (const auto &v : poly.polygons[p].vertices)
      out += fmt::format("{} {}\n", v.x, v.y);
  }
  return out;
}

PolygonSet decode_polygons(std::string_view text) {
  PolygonSet out;
  std::vector<Vec2> current;
  std::size_t pos = 0;
  auto flush = [&] {
    if (!current.empty())
      out.add(std::move(current), PolygonRole::Fixed);
    current.clear();
  };
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos)
      end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r')
      line.remove_suffix(1);
    if (line.empty() || line.find_first_not_of(" \t") == std::string_view::npos) {
      flush();
    } else if (line.front() != '#') {
      Tokenizer tok(line);
      Vec2 v{ tok.number<double>("x"), tok.number<double>("y") };
      if (!tok.at_end())
        throw FormatError(pos + tok.offset(), "expected exactly two numbers");
      current.push_back(v);
    }
    pos = end + 1;
  }
  flush();
  return out;
}

void write_file_atomic(const std::filesystem::path &path, std::string_view contents) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os)
      throw Error("cannot open " + tmp.string() + " for writing");
    os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!os)
      throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

PolygonSet contour_polygons(const DensityGrid &grid, double level) {
  const GridSpec &g = grid.grid;
  // Nodes are cell centres of the grid padded by one ring of zeros.
  const int w = g.nx + 2, h = g.ny + 2;
  auto node = [&](int i, int j) -> double {
    if (i <= 0 || j <= 0 || i > g.nx || j > g.ny)
      return 0.0;
    return grid.at(i - 1, j - 1);
  };
  auto pos = [&](int i, int j) {
    return Vec2{ g.x0 + (i - 0.5) * g.dx, g.y0 + (j - 0.5) * g.dx };
  };
  // Edge ids: 2*(j*w+i) is (i,j)-(i+1,j); 2*(j*w+i)+1 is (i,j)-(i,j+1).
  auto point_on = [&](long id) {
    const long n = id / 2;
    const int i = static_cast<int>(n % w), j = static_cast<int>(n / w);
    const int i2 = (id % 2) ? i : i + 1, j2 = (id % 2) ? j + 1 : j;
    const double a = node(i, j), b = node(i2, j2);
    const double t = (level - a) / (b - a);
    const Vec2 p = pos(i, j), q = pos(i2, j2);
    return Vec2{ p.x + t * (q.x - p.x), p.y + t * (q.y - p.y) };
  };

  std::multimap<long, long> links;
  for (int j = 0; j + 1 < h; ++j) {
    for (int i = 0; i + 1 < w; ++i) {
      const bool b0 = node(i, j) >= level, b1 = node(i + 1, j) >= level,
                 b2 = node(i + 1, j + 1) >= level, b3 = node(i, j + 1) >= level;
      const long bottom = 2L * (j * w + i), top = 2L * ((j + 1) * w + i);
      const long left = 2L * (j * w + i) + 1, right = 2L * (j * w + i + 1) + 1;
      std::vector<long> cut;
      if (b0 != b1) cut.push_back(bottom);
      if (b1 != b2) cut.push_back(right);
      if (b2 != b3) cut.push_back(top);
      if (b3 != b0) cut.push_back(left);
      if (cut.size() == 2) {
        links.emplace(cut[0], cut[1]);
        links.emplace(cut[1], cut[0]);
      } else if (cut.size() == 4) {
        const double centre = 0.25 * (node(i, j) + node(i + 1, j)
                                      + node(i + 1, j + 1) + node(i, j + 1));
        const bool joined = (centre >= level) == b0;
        const long pairs[2][2] = { { bottom, joined ? right : left },
                                   { top, joined ? left : right } };
        for (const auto &pr : pairs) {
          links.emplace(pr[0], pr[1]);
          links.emplace(pr[1], pr[0]);
        }
      }
    }
  }

  PolygonSet out;
  while (!links.empty()) {
    const long start = links.begin()->first;
    std::vector<Vec2> loop;
    long prev = -1, cur = start;
    while (true) {
      loop.push_back(point_on(cur));
      auto range = links.equal_range(cur);
      auto next = range.first;
      if (next == range.second)
        break;
      if (next->second == prev && std::next(next) != range.second)
        ++next;
      const long to = next->second;
      links.erase(next);
      // drop the reverse link
      auto back = links.equal_range(to);
      for (auto it = back.first; it != back.second; ++it)
        if (it->second == cur) {
          links.erase(it);
          break;
        }
      prev = cur;
      cur = to;
      if (cur == start)
        break;
    }
    if (loop.size() >= 3)
      out.add(std::move(loop), PolygonRole::Fixed);
  }
  return out;
}

}  // namespace faid
