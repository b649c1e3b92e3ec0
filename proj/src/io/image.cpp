#include "lvr/image.hpp"

#include <png.h>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace lvr {

namespace {

std::uint8_t to_u8(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

ImageBuffer read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw std::runtime_error(path.string() + ": PNG decode failed: " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw std::runtime_error(path.string() + ": PNG decode failed: " + image.message);
  }
  return from_bytes(image.height, image.width, buf);
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

ImageBuffer read_jpeg(const std::filesystem::path& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) throw std::runtime_error(path.string() + ": cannot open");
  jpeg_decompress_struct cinfo{};
  JpegError err{};
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  std::vector<std::uint8_t> buf;
  std::size_t h = 0, w = 0;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw std::runtime_error(path.string() + ": JPEG decode failed: " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  h = cinfo.output_height;
  w = cinfo.output_width;
  buf.resize(h * w * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = buf.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return from_bytes(h, w, buf);
}

}  // namespace

ImageBuffer from_bytes(std::size_t height, std::size_t width, const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != height * width * 3) throw std::invalid_argument("from_bytes: buffer size does not match image size");
  ImageBuffer img(height, width);
  for (std::size_t i = 0; i < rgb.size(); ++i) img.pixels[i] = static_cast<float>(rgb[i]) / 255.0f;
  return img;
}

std::vector<std::uint8_t> to_bytes(const ImageBuffer& img) {
  std::vector<std::uint8_t> out(img.pixels.size());
  std::transform(img.pixels.begin(), img.pixels.end(), out.begin(), to_u8);
  return out;
}

ImageBuffer read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), sizeof sig);
  if (in.gcount() >= 8 && png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
  if (in.gcount() >= 3 && sig[0] == 0xFF && sig[1] == 0xD8 && sig[2] == 0xFF) return read_jpeg(path);
  throw std::runtime_error(path.string() + ": not a PNG or JPEG file");
}

void write_png(const ImageBuffer& img, const std::filesystem::path& path) {
  const auto bytes = to_bytes(img);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw std::runtime_error(path.string() + ": PNG write failed: " + image.message);
  }
}

ImageBuffer quantize8(const ImageBuffer& img) {
  return from_bytes(img.height, img.width, to_bytes(img));
}

ImageBuffer resize_bilinear(const ImageBuffer& img, std::size_t height, std::size_t width) {
  if (height == img.height && width == img.width) return img;
  if (height == 0 || width == 0) throw std::invalid_argument("resize_bilinear: target size must be positive");
  ImageBuffer out(height, width);
  const double sy = static_cast<double>(img.height) / static_cast<double>(height);
  const double sx = static_cast<double>(img.width) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    // Pixel-center alignment.
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    const std::size_t y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      const std::size_t x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = img.at(y0, x0, c) * (1 - wx) + img.at(y0, x1, c) * wx;
        const double bot = img.at(y1, x0, c) * (1 - wx) + img.at(y1, x1, c) * wx;
        out.at(y, x, c) = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

double mean_luminance(const ImageBuffer& img) {
  double acc = 0;
  for (std::size_t i = 0; i < img.height * img.width; ++i) {
    const float* p = img.pixels.data() + i * 3;
    acc += 0.2126 * p[0] + 0.7152 * p[1] + 0.0722 * p[2];
  }
  return acc / static_cast<double>(img.height * img.width);
}

template <typename T>
Tensor<T> to_tensor(const std::vector<const ImageBuffer*>& images) {
  if (images.empty()) throw std::invalid_argument("to_tensor: no images");
  const std::size_t h = images[0]->height, w = images[0]->width;
  Tensor<T> t({images.size(), 3, h, w});
  for (std::size_t n = 0; n < images.size(); ++n) {
    const ImageBuffer& img = *images[n];
    if (img.height != h || img.width != w) throw std::invalid_argument("to_tensor: images differ in size");
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) t.at(n, c, y, x) = static_cast<T>(img.at(y, x, c));
  }
  return t;
}

template <typename T>
ImageBuffer from_tensor(const Tensor<T>& t, std::size_t n) {
  require_rank(t.shape(), 4, "from_tensor");
  if (t.dim(1) != 3) throw std::invalid_argument("from_tensor: channel dimension 1 must be 3");
  const std::size_t h = t.dim(2), w = t.dim(3);
  ImageBuffer img(h, w);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        img.at(y, x, c) = std::clamp(static_cast<float>(t.at(n, c, y, x)), 0.0f, 1.0f);
      }
  return img;
}

template Tensor<float> to_tensor<float>(const std::vector<const ImageBuffer*>&);
template Tensor<double> to_tensor<double>(const std::vector<const ImageBuffer*>&);
template ImageBuffer from_tensor<float>(const Tensor<float>&, std::size_t);
template ImageBuffer from_tensor<double>(const Tensor<double>&, std::size_t);

}  // namespace lvr
