#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfin/layers.hpp"
#include "cfin/tensor.hpp"

namespace cfin {

/// 8-bit interleaved RGB image.
struct ImageBuf {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  // height * width * 3

  ImageBuf() = default;
  ImageBuf(std::size_t w, std::size_t h);
};

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ImageBuf png_read(const std::string& path);
void png_write(const ImageBuf& img, const std::string& path);

/// (1, 3, H, W) with values v / 255.
Tensor to_tensor(const ImageBuf& img);
/// Clamps to [0, 1] and rounds to the nearest 8-bit level. Accepts (1, 3, H, W).
ImageBuf from_tensor(const Tensor& t);

/// BT.601 studio-swing luma of a (B, 3, H, W) tensor in [0, 1], as (B, 1, H, W).
Tensor rgb_to_y(const Tensor& rgb);

/// Separable bicubic resampling (a = -0.5) of every (b, c) plane. Downscaling
/// widens the kernel by 1/scale to antialias. Output dims are round(scale * dims).
Tensor bicubic_resize(const Tensor& x, double scale);

/// Mirror along the width axis.
Tensor flip_horizontal(const Tensor& x);
/// Rotation by quarter_turns * 90 degrees counter-clockwise.
Tensor rot90(const Tensor& x, int quarter_turns);
/// Window [top, top + h) x [left, left + w) of every plane.
Tensor crop(const Tensor& x, std::size_t top, std::size_t left, std::size_t h, std::size_t w);

struct PatchPair {
  Tensor lr, hr;  // (B, 3, p, p) and (B, 3, p*scale, p*scale)
  // Offset of the first sample's LR crop, before augmentation.
  std::size_t lr_top = 0, lr_left = 0;
};

/// Draws aligned LR/HR crops from a fixed set of HR images. LR images are
/// bicubic downscales of the HR ones. Each pair gets the same random
/// horizontal flip and quarter-turn rotation.
class PatchSampler {
 public:
  PatchSampler(std::vector<Tensor> hr_images, std::size_t patch, std::size_t scale,
               std::uint64_t seed, bool augment = true);

  PatchPair sample();
  PatchPair sample_batch(std::size_t batch);

  const std::vector<Tensor>& hr_images() const { return hr_; }
  const std::vector<Tensor>& lr_images() const { return lr_; }

 private:
  std::vector<Tensor> hr_, lr_;
  std::size_t patch_, scale_;
  bool augment_;
  Rng rng_;
};

/// Random colored texture in [0, 1]: oriented gratings plus sharp-edged blocks.
Tensor synthetic_texture(std::size_t height, std::size_t width, Rng& rng);

}  // namespace cfin
