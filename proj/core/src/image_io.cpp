#include "sgm/image_io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace sgm {

namespace {

constexpr bool host_little_endian() {
    return std::endian::native == std::endian::little;
}

float byteswap_float(float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    u = ((u & 0x000000FFu) << 24) | ((u & 0x0000FF00u) << 8) |
        ((u & 0x00FF0000u) >> 8) | ((u & 0xFF000000u) >> 24);
    std::memcpy(&v, &u, 4);
    return v;
}

// Reads one whitespace-delimited token, skipping comments is not part of
// the PFM grammar so none are handled.
std::string next_token(std::istream& in) {
    std::string tok;
    if (!(in >> tok)) throw std::runtime_error("pfm: truncated header");
    return tok;
}

void check_shape(const Tensor<float>& image, const char* what) {
    if (image.shape().size() != 3 || image.extent(0) != 3)
        throw std::invalid_argument(std::string(what) +
                                    ": image must be (3,H,W), got " +
                                    shape_str(image.shape()));
}

}  // namespace

Tensor<float> read_pfm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("pfm: cannot open " + path.string());
    std::string magic = next_token(in);
    if (magic == "Pf")
        throw std::runtime_error("pfm: grayscale 'Pf' is not supported: " +
                                 path.string());
    if (magic != "PF")
        throw std::runtime_error("pfm: bad magic '" + magic + "' in " +
                                 path.string());
    std::int64_t w, h;
    double scale;
    if (!(in >> w >> h >> scale) || w <= 0 || h <= 0 || scale == 0.0)
        throw std::runtime_error("pfm: malformed header in " + path.string());
    in.get();  // single whitespace byte before the payload

    const bool file_little = scale < 0.0;
    std::vector<float> row(static_cast<std::size_t>(w) * 3);
    Tensor<float> image = Tensor<float>::zeros({3, h, w});
    // Rows are stored bottom-to-top.
    for (std::int64_t y = h - 1; y >= 0; --y) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * 4));
        if (!in)
            throw std::runtime_error("pfm: truncated payload in " + path.string());
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t c = 0; c < 3; ++c) {
                float v = row[static_cast<std::size_t>(x * 3 + c)];
                if (file_little != host_little_endian()) v = byteswap_float(v);
                image.data()[c * h * w + y * w + x] = v;
            }
    }
    return image;
}

void write_pfm(const std::filesystem::path& path, const Tensor<float>& image) {
    check_shape(image, "write_pfm");
    const std::int64_t h = image.extent(1), w = image.extent(2);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("pfm: cannot write " + path.string());
    out << "PF\n" << w << " " << h << "\n";
    out << (host_little_endian() ? "-1.0" : "1.0") << "\n";
    std::vector<float> row(static_cast<std::size_t>(w) * 3);
    for (std::int64_t y = h - 1; y >= 0; --y) {
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t c = 0; c < 3; ++c)
                row[static_cast<std::size_t>(x * 3 + c)] =
                    image.data()[c * h * w + y * w + x];
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * 4));
    }
    if (!out) throw std::runtime_error("pfm: write failed for " + path.string());
}

Tensor<float> read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("ppm: cannot open " + path.string());
    std::string magic = next_token(in);
    if (magic != "P6")
        throw std::runtime_error("ppm: bad magic '" + magic + "' in " +
                                 path.string());
    std::int64_t w, h, maxval;
    if (!(in >> w >> h >> maxval) || w <= 0 || h <= 0)
        throw std::runtime_error("ppm: malformed header in " + path.string());
    if (maxval != 255)
        throw std::runtime_error("ppm: only maxval 255 supported, got " +
                                 std::to_string(maxval));
    in.get();
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    Tensor<float> image = Tensor<float>::zeros({3, h, w});
    for (std::int64_t y = 0; y < h; ++y) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size()));
        if (!in)
            throw std::runtime_error("ppm: truncated payload in " + path.string());
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t c = 0; c < 3; ++c)
                image.data()[c * h * w + y * w + x] =
                    static_cast<float>(row[static_cast<std::size_t>(x * 3 + c)]) /
                    255.0f;
    }
    return image;
}

void write_ppm(const std::filesystem::path& path, const Tensor<float>& image) {
    check_shape(image, "write_ppm");
    const std::int64_t h = image.extent(1), w = image.extent(2);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("ppm: cannot write " + path.string());
    out << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t c = 0; c < 3; ++c) {
                float v = image.data()[c * h * w + y * w + x];
                v = std::min(std::max(v, 0.0f), 1.0f);
                row[static_cast<std::size_t>(x * 3 + c)] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw std::runtime_error("ppm: write failed for " + path.string());
}

Tensor<float> read_image(const std::filesystem::path& path) {
    const std::string ext = path.extension().string();
    if (ext == ".pfm") return read_pfm(path);
    if (ext == ".ppm") return read_ppm(path);
    throw std::runtime_error("read_image: unsupported extension '" + ext +
                             "' for " + path.string());
}

}  // namespace sgm
