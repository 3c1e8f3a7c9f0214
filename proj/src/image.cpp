#include "cfin/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cfin {

ImageBuf::ImageBuf(std::size_t w, std::size_t h) : width(w), height(h), rgb(w * h * 3, 0) {
  if (w == 0 || h == 0) throw ImageError("image dimensions must be at least 1x1");
}

ImageBuf png_read(const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw ImageError("cannot read PNG '" + path + "': " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  ImageBuf img(image.width, image.height);
  if (!png_image_finish_read(&image, nullptr, img.rgb.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw ImageError("cannot decode PNG '" + path + "': " + msg);
  }
  return img;
}

void png_write(const ImageBuf& img, const std::string& path) {
  if (img.rgb.size() != img.width * img.height * 3) throw ImageError("png_write: buffer size mismatch");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.rgb.data(), 0, nullptr)) {
    throw ImageError("cannot write PNG '" + path + "': " + image.message);
  }
}

Tensor to_tensor(const ImageBuf& img) {
  Tensor t({1, 3, img.height, img.width});
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        t.at(0, c, y, x) = img.rgb[(y * img.width + x) * 3 + c] / 255.0;
  return t;
}

ImageBuf from_tensor(const Tensor& t) {
  if (t.batch() != 1 || t.channels() != 3) throw ShapeError("from_tensor: expected (1,3,H,W), got " + to_string(t.shape()));
  ImageBuf img(t.width(), t.height());
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::clamp(t.at(0, c, y, x), 0.0, 1.0);
        img.rgb[(y * img.width + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return img;
}

Tensor rgb_to_y(const Tensor& rgb) {
  if (rgb.channels() != 3) throw ShapeError("rgb_to_y: expected 3 channels, got " + to_string(rgb.shape()));
  Tensor y({rgb.batch(), 1, rgb.height(), rgb.width()});
  for (std::size_t b = 0; b < rgb.batch(); ++b)
    for (std::size_t h = 0; h < rgb.height(); ++h)
      for (std::size_t w = 0; w < rgb.width(); ++w)
        y.at(b, 0, h, w) = (65.481 * rgb.at(b, 0, h, w) + 128.553 * rgb.at(b, 1, h, w) +
                            24.966 * rgb.at(b, 2, h, w) + 16.0) / 255.0;
  return y;
}

namespace {

double cubic(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

struct Taps {
  std::vector<std::size_t> index;
  std::vector<double> weight;
};

// Per output position, the clamped source indices and normalized weights.
std::vector<Taps> contributions(std::size_t in, std::size_t out, double scale) {
  const double stretch = scale < 1.0 ? scale : 1.0;
  const double half = 2.0 / stretch;
  std::vector<Taps> taps(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double center = (static_cast<double>(o) + 0.5) / scale - 0.5;
    const auto lo = static_cast<std::ptrdiff_t>(std::floor(center - half));
    const auto hi = static_cast<std::ptrdiff_t>(std::ceil(center + half));
    double total = 0.0;
    for (std::ptrdiff_t j = lo; j <= hi; ++j) {
      const double w = stretch * cubic(stretch * (center - static_cast<double>(j)));
      if (w == 0.0) continue;
      const auto clamped = std::clamp<std::ptrdiff_t>(j, 0, static_cast<std::ptrdiff_t>(in) - 1);
      taps[o].index.push_back(static_cast<std::size_t>(clamped));
      taps[o].weight.push_back(w);
      total += w;
    }
    for (double& w : taps[o].weight) w /= total;
  }
  return taps;
}

}  // namespace

Tensor bicubic_resize(const Tensor& x, double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("bicubic_resize: scale must be positive");
  const auto out_h = static_cast<std::size_t>(std::lround(scale * static_cast<double>(x.height())));
  const auto out_w = static_cast<std::size_t>(std::lround(scale * static_cast<double>(x.width())));
  if (out_h == 0 || out_w == 0) throw ShapeError("bicubic_resize: output would be empty");
  const auto rows = contributions(x.height(), out_h, scale);
  const auto cols = contributions(x.width(), out_w, scale);
  Tensor tmp({x.batch(), x.channels(), x.height(), out_w});
  for (std::size_t b = 0; b < x.batch(); ++b)
    for (std::size_t c = 0; c < x.channels(); ++c)
      for (std::size_t h = 0; h < x.height(); ++h)
        for (std::size_t o = 0; o < out_w; ++o) {
          double s = 0.0;
          for (std::size_t t = 0; t < cols[o].index.size(); ++t) s += cols[o].weight[t] * x.at(b, c, h, cols[o].index[t]);
          tmp.at(b, c, h, o) = s;
        }
  Tensor y({x.batch(), x.channels(), out_h, out_w});
  for (std::size_t b = 0; b < x.batch(); ++b)
    for (std::size_t c = 0; c < x.channels(); ++c)
      for (std::size_t o = 0; o < out_h; ++o)
        for (std::size_t w = 0; w < out_w; ++w) {
          double s = 0.0;
          for (std::size_t t = 0; t < rows[o].index.size(); ++t) s += rows[o].weight[t] * tmp.at(b, c, rows[o].index[t], w);
          y.at(b, c, o, w) = s;
        }
  return y;
}

Tensor flip_horizontal(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t b = 0; b < x.batch(); ++b)
    for (std::size_t c = 0; c < x.channels(); ++c)
      for (std::size_t h = 0; h < x.height(); ++h)
        for (std::size_t w = 0; w < x.width(); ++w) y.at(b, c, h, x.width() - 1 - w) = x.at(b, c, h, w);
  return y;
}

Tensor rot90(const Tensor& x, int quarter_turns) {
  const int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return x;
  Tensor cur = x;
  for (int i = 0; i < k; ++i) {
    const std::size_t H = cur.height(), W = cur.width();
    Tensor next({cur.batch(), cur.channels(), W, H});
    for (std::size_t b = 0; b < cur.batch(); ++b)
      for (std::size_t c = 0; c < cur.channels(); ++c)
        for (std::size_t h = 0; h < H; ++h)
          for (std::size_t w = 0; w < W; ++w) next.at(b, c, W - 1 - w, h) = cur.at(b, c, h, w);
    cur = std::move(next);
  }
  return cur;
}

Tensor crop(const Tensor& x, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
  if (top + h > x.height() || left + w > x.width()) {
    throw ShapeError("crop: window exceeds " + to_string(x.shape()));
  }
  Tensor y({x.batch(), x.channels(), h, w});
  for (std::size_t b = 0; b < x.batch(); ++b)
    for (std::size_t c = 0; c < x.channels(); ++c)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) y.at(b, c, i, j) = x.at(b, c, top + i, left + j);
  return y;
}

PatchSampler::PatchSampler(std::vector<Tensor> hr_images, std::size_t patch, std::size_t scale,
                           std::uint64_t seed, bool augment)
    : hr_(std::move(hr_images)), patch_(patch), scale_(scale), augment_(augment), rng_(seed) {
  if (hr_.empty()) throw std::invalid_argument("PatchSampler: no images");
  if (patch == 0 || scale == 0) throw std::invalid_argument("PatchSampler: patch and scale must be positive");
  for (const Tensor& hr : hr_) {
    if (hr.batch() != 1) throw ShapeError("PatchSampler: images must have batch 1");
    if (hr.height() % scale || hr.width() % scale) {
      throw ShapeError("PatchSampler: HR dims " + to_string(hr.shape()) + " not divisible by scale");
    }
    if (hr.height() / scale < patch || hr.width() / scale < patch) {
      throw ShapeError("PatchSampler: image " + to_string(hr.shape()) + " smaller than the patch");
    }
    lr_.push_back(bicubic_resize(hr, 1.0 / static_cast<double>(scale)));
  }
}

PatchPair PatchSampler::sample() {
  std::uniform_int_distribution<std::size_t> pick(0, hr_.size() - 1);
  const std::size_t i = pick(rng_);
  const Tensor& lr = lr_[i];
  std::uniform_int_distribution<std::size_t> top_d(0, lr.height() - patch_);
  std::uniform_int_distribution<std::size_t> left_d(0, lr.width() - patch_);
  PatchPair p;
  p.lr_top = top_d(rng_);
  p.lr_left = left_d(rng_);
  p.lr = crop(lr, p.lr_top, p.lr_left, patch_, patch_);
  p.hr = crop(hr_[i], p.lr_top * scale_, p.lr_left * scale_, patch_ * scale_, patch_ * scale_);
  if (augment_) {
    std::uniform_int_distribution<int> coin(0, 1), turns(0, 3);
    if (coin(rng_)) {
      p.lr = flip_horizontal(p.lr);
      p.hr = flip_horizontal(p.hr);
    }
    const int k = turns(rng_);
    p.lr = rot90(p.lr, k);
    p.hr = rot90(p.hr, k);
  }
  return p;
}

PatchPair PatchSampler::sample_batch(std::size_t batch) {
  if (batch == 0) throw std::invalid_argument("sample_batch: batch must be positive");
  std::vector<Tensor> lrs, hrs;
  PatchPair first;
  for (std::size_t i = 0; i < batch; ++i) {
    PatchPair p = sample();
    if (i == 0) first = p;
    lrs.push_back(std::move(p.lr));
    hrs.push_back(std::move(p.hr));
  }
  auto stack = [](const std::vector<Tensor>& parts) {
    const Shape s = parts.front().shape();
    std::vector<double> data;
    data.reserve(parts.size() * parts.front().size());
    for (const Tensor& t : parts) data.insert(data.end(), t.data().begin(), t.data().end());
    return Tensor({parts.size(), s[1], s[2], s[3]}, std::move(data));
  };
  PatchPair out;
  out.lr = stack(lrs);
  out.hr = stack(hrs);
  out.lr_top = first.lr_top;
  out.lr_left = first.lr_left;
  return out;
}

Tensor synthetic_texture(std::size_t height, std::size_t width, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t({1, 3, height, width});
  double base[3];
  for (double& b : base) b = 0.25 + 0.5 * u(rng);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t h = 0; h < height; ++h)
      for (std::size_t w = 0; w < width; ++w) t.at(0, c, h, w) = base[c];

  for (int g = 0; g < 2; ++g) {
    const double theta = std::numbers::pi * u(rng);
    const double freq = 0.06 + 0.16 * u(rng);
    const double phase = 2.0 * std::numbers::pi * u(rng);
    double amp[3];
    for (double& a : amp) a = 0.2 * (u(rng) - 0.5);
    const double fx = std::cos(theta) * freq, fy = std::sin(theta) * freq;
    for (std::size_t h = 0; h < height; ++h)
      for (std::size_t w = 0; w < width; ++w) {
        const double v = std::sin(2.0 * std::numbers::pi * (fx * w + fy * h) + phase);
        for (std::size_t c = 0; c < 3; ++c) t.at(0, c, h, w) += amp[c] * v;
      }
  }

  std::uniform_int_distribution<std::size_t> ry(0, height - 1), rx(0, width - 1);
  for (int r = 0; r < 4; ++r) {
    std::size_t y0 = ry(rng), y1 = ry(rng), x0 = rx(rng), x1 = rx(rng);
    if (y0 > y1) std::swap(y0, y1);
    if (x0 > x1) std::swap(x0, x1);
    double color[3];
    for (double& c : color) c = u(rng);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t h = y0; h <= y1; ++h)
        for (std::size_t w = x0; w <= x1; ++w) t.at(0, c, h, w) = 0.4 * t.at(0, c, h, w) + 0.6 * color[c];
  }
  for (double& v : t.data()) v = std::clamp(v, 0.0, 1.0);
  return t;
}

}  // namespace cfin
