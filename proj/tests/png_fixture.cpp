#include <algorithm>
#include <iostream>

#include "cfin/image.hpp"

// Writes lr.png (17x13 texture), hr.png (24x24 texture) and hr_plus.png
// (hr.png with every sample raised by one level) into the given directory.
int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: png_fixture DIR\n";
    return 2;
  }
  const std::string dir = argv[1];
  cfin::Rng rng(5);
  cfin::png_write(cfin::from_tensor(cfin::synthetic_texture(13, 17, rng)), dir + "/lr.png");
  cfin::ImageBuf hr = cfin::from_tensor(cfin::synthetic_texture(24, 24, rng));
  for (auto& v : hr.rgb) v = std::min<std::uint8_t>(v, 254);
  cfin::png_write(hr, dir + "/hr.png");
  for (auto& v : hr.rgb) ++v;
  cfin::png_write(hr, dir + "/hr_plus.png");
  return 0;
}
