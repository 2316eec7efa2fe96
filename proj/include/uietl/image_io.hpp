#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "uietl/error.hpp"
#include "uietl/image.hpp"

namespace uietl {

/// Decodes an 8- or 16-bit RGB(A) raster (PNG, JPEG, ...) and maps integer
/// intensities to [0, 1] by dividing by the bit-depth maximum.
inline Image load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw LoadError("no such file: " + path.string());
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED | cv::IMREAD_ANYDEPTH);
  if (raw.empty()) throw FormatError("cannot decode image: " + path.string());
  double maxval;
  switch (raw.depth()) {
    case CV_8U: maxval = 255.0; break;
    case CV_16U: maxval = 65535.0; break;
    default: throw FormatError("unsupported bit depth in " + path.string());
  }
  if (raw.channels() != 3 && raw.channels() != 4) {
    throw FormatError("expected an RGB raster, got " + std::to_string(raw.channels()) +
                      " channel(s): " + path.string());
  }
  Image img(raw.rows, raw.cols);
  const int nc = raw.channels();
  for (int y = 0; y < raw.rows; ++y) {
    for (int x = 0; x < raw.cols; ++x) {
      for (int c = 0; c < 3; ++c) {
        // OpenCV stores BGR(A); the library is RGB throughout.
        const int src = 2 - c;
        double v = raw.depth() == CV_8U ? raw.ptr<std::uint8_t>(y)[x * nc + src]
                                        : raw.ptr<std::uint16_t>(y)[x * nc + src];
        img.at(y, x, c) = static_cast<float>(v / maxval);
      }
    }
  }
  return img;
}

inline std::uint8_t quantize8(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

/// Writes an 8-bit PNG. Encoding parameters are pinned so repeated saves of the
/// same pixels produce identical bytes.
template <class T>
void save_png(const BasicImage<T>& img, const std::filesystem::path& path) {
  cv::Mat mat(img.height(), img.width(), CV_8UC3);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) row[x * 3 + (2 - c)] = quantize8(img.at(y, x, c));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::vector<int> params = {cv::IMWRITE_PNG_COMPRESSION, 6};
  if (!cv::imwrite(path.string(), mat, params)) throw IoError("cannot write " + path.string());
}

}  // namespace uietl
