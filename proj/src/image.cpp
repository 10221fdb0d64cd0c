#include "axe/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "axe/tensor.hpp"

namespace axe {

namespace {

inline float clamp01(float x) { return std::min(std::max(x, 0.0f), 1.0f); }

inline void blend(Frame& f, int y, int x, float a, Color c) {
  if (a <= 0.0f) return;
  a = std::min(a, 1.0f);
  const std::size_t plane = static_cast<std::size_t>(f.h) * f.w;
  const std::size_t i = static_cast<std::size_t>(y) * f.w + x;
  f.px[i] = f.px[i] * (1 - a) + c.r * a;
  f.px[plane + i] = f.px[plane + i] * (1 - a) + c.g * a;
  f.px[2 * plane + i] = f.px[2 * plane + i] * (1 - a) + c.b * a;
}

struct Box {
  int x0, y0, x1, y1;  // inclusive
};

Box clip_box(const Frame& f, float x0, float y0, float x1, float y1) {
  return {std::max(0, static_cast<int>(std::floor(x0))), std::max(0, static_cast<int>(std::floor(y0))),
          std::min(f.w - 1, static_cast<int>(std::ceil(x1))), std::min(f.h - 1, static_cast<int>(std::ceil(y1)))};
}

}  // namespace

void fill(Frame& f, Color c) {
  const std::size_t plane = static_cast<std::size_t>(f.h) * f.w;
  std::fill_n(f.px.begin(), plane, c.r);
  std::fill_n(f.px.begin() + plane, plane, c.g);
  std::fill_n(f.px.begin() + 2 * plane, plane, c.b);
}

void draw_disc(Frame& f, float cx, float cy, float radius, Color c) {
  const Box b = clip_box(f, cx - radius - 1, cy - radius - 1, cx + radius + 1, cy + radius + 1);
  for (int y = b.y0; y <= b.y1; ++y)
    for (int x = b.x0; x <= b.x1; ++x) {
      const float d = std::hypot(x - cx, y - cy);
      blend(f, y, x, clamp01(radius - d + 0.5f), c);
    }
}

void draw_ring(Frame& f, float cx, float cy, float r_outer, float r_inner, Color c) {
  const Box b = clip_box(f, cx - r_outer - 1, cy - r_outer - 1, cx + r_outer + 1, cy + r_outer + 1);
  for (int y = b.y0; y <= b.y1; ++y)
    for (int x = b.x0; x <= b.x1; ++x) {
      const float d = std::hypot(x - cx, y - cy);
      const float cov = clamp01(r_outer - d + 0.5f) - clamp01(r_inner - d + 0.5f);
      blend(f, y, x, cov, c);
    }
}

void draw_capsule(Frame& f, float x0, float y0, float x1, float y1, float half_width, Color c) {
  const float pad = half_width + 1;
  const Box b = clip_box(f, std::min(x0, x1) - pad, std::min(y0, y1) - pad, std::max(x0, x1) + pad,
                         std::max(y0, y1) + pad);
  const float dx = x1 - x0, dy = y1 - y0;
  const float len2 = dx * dx + dy * dy;
  for (int y = b.y0; y <= b.y1; ++y)
    for (int x = b.x0; x <= b.x1; ++x) {
      float t = len2 > 0 ? ((x - x0) * dx + (y - y0) * dy) / len2 : 0.0f;
      t = clamp01(t);
      const float d = std::hypot(x - (x0 + t * dx), y - (y0 + t * dy));
      blend(f, y, x, clamp01(half_width - d + 0.5f), c);
    }
}

void draw_rect(Frame& f, float x0, float y0, float x1, float y1, Color c) {
  const Box b = clip_box(f, x0 - 1, y0 - 1, x1 + 1, y1 + 1);
  for (int y = b.y0; y <= b.y1; ++y) {
    const float cov_y = clamp01(std::min(y1, y + 0.5f) - std::max(y0, y - 0.5f));
    for (int x = b.x0; x <= b.x1; ++x) {
      const float cov_x = clamp01(std::min(x1, x + 0.5f) - std::max(x0, x - 0.5f));
      blend(f, y, x, cov_x * cov_y, c);
    }
  }
}

void draw_triangle(Frame& f, float x0, float y0, float x1, float y1, float x2, float y2, Color c) {
  // signed distance to each edge; inside = all non-negative (ccw or cw handled
  // by orienting with the third vertex)
  const Box b = clip_box(f, std::min({x0, x1, x2}) - 1, std::min({y0, y1, y2}) - 1, std::max({x0, x1, x2}) + 1,
                         std::max({y0, y1, y2}) + 1);
  auto edge = [](float ax, float ay, float bx, float by, float px, float py) {
    const float ex = bx - ax, ey = by - ay;
    const float n = std::hypot(ex, ey);
    if (n == 0) return 0.0f;
    return ((px - ax) * ey - (py - ay) * ex) / n;
  };
  // orient so the third vertex has positive distance
  const float orient = edge(x0, y0, x1, y1, x2, y2) >= 0 ? 1.0f : -1.0f;
  for (int y = b.y0; y <= b.y1; ++y)
    for (int x = b.x0; x <= b.x1; ++x) {
      const float px = static_cast<float>(x), py = static_cast<float>(y);
      const float d = std::min({orient * edge(x0, y0, x1, y1, px, py), orient * edge(x1, y1, x2, y2, px, py),
                                orient * edge(x2, y2, x0, y0, px, py)});
      blend(f, y, x, clamp01(d + 0.5f), c);
    }
}

Frame resize_nearest(const Frame& src, int h, int w) {
  if (src.h == h && src.w == w) return src;
  Frame dst(h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y) {
      const int sy = std::min(src.h - 1, static_cast<int>(static_cast<std::int64_t>(y) * src.h / h));
      for (int x = 0; x < w; ++x) {
        const int sx = std::min(src.w - 1, static_cast<int>(static_cast<std::int64_t>(x) * src.w / w));
        dst.at(c, y, x) = src.at(c, sy, sx);
      }
    }
  return dst;
}

namespace {

int ppm_token(std::istream& is, const std::string& path) {
  // skip whitespace and '#' comments, then parse an unsigned decimal
  int ch = is.get();
  while (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n' || ch == '#') {
    if (ch == '#')
      while (ch != '\n' && ch != EOF) ch = is.get();
    ch = is.get();
  }
  check(ch != EOF, "ppm: truncated header in " + path);
  int value = 0;
  bool any = false;
  while (ch >= '0' && ch <= '9') {
    value = value * 10 + (ch - '0');
    any = true;
    ch = is.get();
  }
  check(any, "ppm: malformed header in " + path);
  return value;
}

}  // namespace

Frame load_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "ppm: cannot open " + path);
  char m0 = static_cast<char>(is.get());
  char m1 = static_cast<char>(is.get());
  check(m0 == 'P' && m1 == '6', "ppm: not a binary P6 file: " + path);
  const int w = ppm_token(is, path);
  const int h = ppm_token(is, path);
  const int maxval = ppm_token(is, path);
  check(w > 0 && h > 0, "ppm: bad dimensions in " + path);
  check(maxval == 255, "ppm: only 8-bit maxval 255 supported: " + path);
  std::vector<unsigned char> raw(static_cast<std::size_t>(3) * w * h);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  check(is.gcount() == static_cast<std::streamsize>(raw.size()), "ppm: truncated pixel data in " + path);
  Frame f(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        f.at(c, y, x) = raw[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0f;
  return f;
}

void save_ppm(const Frame& f, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  check(os.good(), "ppm: cannot open for writing " + path);
  os << "P6\n" << f.w << " " << f.h << "\n255\n";
  std::vector<unsigned char> raw(static_cast<std::size_t>(3) * f.w * f.h);
  for (int y = 0; y < f.h; ++y)
    for (int x = 0; x < f.w; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = std::min(std::max(f.at(c, y, x), 0.0f), 1.0f);
        raw[(static_cast<std::size_t>(y) * f.w + x) * 3 + c] =
            static_cast<unsigned char>(std::lround(v * 255.0f));
      }
  os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  check(os.good(), "ppm: write failed " + path);
}

}  // namespace axe
