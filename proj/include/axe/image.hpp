#pragma once

#include <string>
#include <vector>

namespace axe {

// Planar RGB frame, 3 x h x w, values in [0,1].
struct Frame {
  int h = 0, w = 0;
  std::vector<float> px;

  Frame() = default;
  Frame(int height, int width) : h(height), w(width), px(static_cast<std::size_t>(3) * height * width, 0.0f) {}

  float& at(int c, int y, int x) { return px[(static_cast<std::size_t>(c) * h + y) * w + x]; }
  float at(int c, int y, int x) const { return px[(static_cast<std::size_t>(c) * h + y) * w + x]; }
};

struct Color {
  float r = 0, g = 0, b = 0;
};

void fill(Frame& f, Color c);

// Anti-aliased primitives in pixel coordinates (y down). Coverage-blended
// over the existing content.
void draw_disc(Frame& f, float cx, float cy, float radius, Color c);
void draw_ring(Frame& f, float cx, float cy, float r_outer, float r_inner, Color c);
void draw_capsule(Frame& f, float x0, float y0, float x1, float y1, float half_width, Color c);
void draw_rect(Frame& f, float x0, float y0, float x1, float y1, Color c);
void draw_triangle(Frame& f, float x0, float y0, float x1, float y1, float x2, float y2, Color c);

Frame resize_nearest(const Frame& src, int h, int w);

// Binary P6, 8-bit. Errors name the offending path.
Frame load_ppm(const std::string& path);
void save_ppm(const Frame& f, const std::string& path);

}  // namespace axe
