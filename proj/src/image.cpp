#include "sobolattr/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include <png.h>

#include "sobolattr/errors.hpp"
#include "sobolattr/ioutil.hpp"

namespace sobolattr {

namespace {

std::uint8_t quantize(double v) {
  const double scaled = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<std::uint8_t>(scaled);
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

ImageTensor load_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open image: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng init failed");
  }
  std::vector<png_bytep> row_ptrs;
  std::vector<png_byte> storage;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed to decode PNG: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const std::size_t channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("unsupported PNG channel count in " + path);
  }
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  storage.resize(rowbytes * h);
  row_ptrs.resize(h);
  for (png_uint_32 r = 0; r < h; ++r) row_ptrs[r] = storage.data() + r * rowbytes;
  png_read_image(png, row_ptrs.data());
  png_destroy_read_struct(&png, &info, nullptr);

  ImageTensor image(h, w, channels);
  for (std::size_t r = 0; r < h; ++r) {
    const png_byte* src = storage.data() + r * rowbytes;
    for (std::size_t i = 0; i < w * channels; ++i) {
      image.pixels[r * w * channels + i] = src[i] / 255.0;
    }
  }
  return image;
}

ImageTensor load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw IoError("not a binary PPM (P6): " + path);
  auto next_value = [&](std::size_t& out) {
    // Skips whitespace and '#' comments per the PPM grammar.
    for (;;) {
      int c = in.peek();
      if (c == '#') {
        std::string comment;
        std::getline(in, comment);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
    }
    if (!(in >> out)) throw IoError("truncated PPM header: " + path);
  };
  std::size_t w = 0, h = 0, maxval = 0;
  next_value(w);
  next_value(h);
  next_value(maxval);
  if (maxval == 0 || maxval > 255) throw IoError("unsupported PPM maxval in " + path);
  in.get();  // single whitespace byte after maxval
  std::vector<char> raw(w * h * 3);
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw IoError("truncated PPM pixel data: " + path);
  }
  ImageTensor image(h, w, 3);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    image.pixels[i] = static_cast<unsigned char>(raw[i]) / static_cast<double>(maxval);
  }
  return image;
}

}  // namespace

ImageTensor load_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("cannot open image: " + path);
  unsigned char magic[2] = {0, 0};
  probe.read(reinterpret_cast<char*>(magic), 2);
  probe.close();
  if (magic[0] == 0x89 && magic[1] == 'P') return load_png(path);
  if (magic[0] == 'P' && magic[1] == '6') return load_ppm(path);
  throw IoError("unrecognized image format (expect PNG or P6 PPM): " + path);
}

void save_png(const ImageTensor& image, const std::string& path) {
  atomic_write(path, [&](const std::string& tmp) {
    FilePtr fp(std::fopen(tmp.c_str(), "wb"));
    if (!fp) throw IoError("cannot write image: " + tmp);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
      png_destroy_write_struct(&png, nullptr);
      throw IoError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      throw IoError("failed to encode PNG: " + tmp);
    }
    png_init_io(png, fp.get());
    const int color = image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
                 static_cast<png_uint_32>(image.height), 8, color,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(image.width * image.channels);
    for (std::size_t r = 0; r < image.height; ++r) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        row[i] = quantize(image.pixels[r * row.size() + i]);
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  });
}

void save_ppm(const ImageTensor& image, const std::string& path) {
  if (image.channels != 3) throw IoError("PPM (P6) requires 3 channels");
  atomic_write(path, [&](const std::string& tmp) {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write image: " + tmp);
    out << "P6\n" << image.width << " " << image.height << "\n255\n";
    std::vector<char> raw(image.pixels.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      raw[i] = static_cast<char>(quantize(image.pixels[i]));
    }
    out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError("short write: " + tmp);
  });
}

}  // namespace sobolattr
