#include "pda/io.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "pda/error.hpp"

namespace pda::io {

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::string read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw LoadError("write failed for " + path.string());
}

// Reads whitespace-separated header tokens, skipping '#' comments, and leaves
// pos just past the single whitespace byte that ends the last token.
class HeaderReader {
public:
    HeaderReader(const std::string& bytes, const std::string& what) : bytes_(bytes), what_(what) {}

    std::string token() {
        for (;;) {
            while (pos_ < bytes_.size() && std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
            if (pos_ < bytes_.size() && bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
                continue;
            }
            break;
        }
        const std::size_t start = pos_;
        while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
        if (start == pos_) throw LoadError(what_ + ": truncated header");
        return bytes_.substr(start, pos_ - start);
    }

    std::size_t positive(const std::string& field) {
        const std::string t = token();
        std::size_t used = 0;
        long long v = 0;
        try {
            v = std::stoll(t, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != t.size() || v <= 0) throw LoadError(what_ + ": bad " + field + " '" + t + "'");
        return static_cast<std::size_t>(v);
    }

    std::size_t finish_header() {
        if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
            throw LoadError(what_ + ": truncated header");
        }
        return pos_ + 1;
    }

private:
    const std::string& bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

template <typename Parse>
void for_each_line(const std::filesystem::path& path, Parse&& parse) {
    std::istringstream in(read_bytes(path));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        parse(line, lineno);
    }
}

std::vector<double> parse_numbers(const std::string& line, std::size_t expected, const std::string& where) {
    std::istringstream ls(line);
    std::vector<double> values;
    std::string tok;
    while (ls >> tok) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != tok.size() || !std::isfinite(v)) throw LoadError(where + ": bad number '" + tok + "'");
        values.push_back(v);
    }
    if (values.size() != expected) {
        throw LoadError(where + ": expected " + std::to_string(expected) + " numbers, got " +
                        std::to_string(values.size()));
    }
    return values;
}

std::string format_number(double v) {
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
    return os.str();
}

}  // namespace

void write_pfm(const std::filesystem::path& path, const DepthMap& map) {
    if (map.height == 0 || map.width == 0) throw InputError("write_pfm: empty map");
    std::string bytes = "Pf\n" + std::to_string(map.width) + " " + std::to_string(map.height) + "\n-1.0\n";
    const std::size_t header = bytes.size();
    bytes.resize(header + map.size() * sizeof(float));
    char* dst = bytes.data() + header;
    for (std::size_t r = 0; r < map.height; ++r) {
        const std::size_t src_row = map.height - 1 - r;
        for (std::size_t c = 0; c < map.width; ++c) {
            const float v = map.is_valid(src_row, c) ? static_cast<float>(map.at(src_row, c))
                                                     : std::numeric_limits<float>::quiet_NaN();
            std::memcpy(dst, &v, sizeof(float));
            dst += sizeof(float);
        }
    }
    write_bytes(path, bytes);
}

DepthMap read_pfm(const std::filesystem::path& path) {
    const std::string bytes = read_bytes(path);
    HeaderReader hdr(bytes, "pfm " + path.string());
    if (hdr.token() != "Pf") throw LoadError("pfm " + path.string() + ": not a single-channel PFM");
    const std::size_t width = hdr.positive("width");
    const std::size_t height = hdr.positive("height");
    const std::string scale_tok = hdr.token();
    double scale = 0.0;
    try {
        scale = std::stod(scale_tok);
    } catch (const std::exception&) {
        throw LoadError("pfm " + path.string() + ": bad scale '" + scale_tok + "'");
    }
    if (!(scale < 0.0)) throw LoadError("pfm " + path.string() + ": only little-endian PFM is supported");
    const std::size_t offset = hdr.finish_header();
    if (bytes.size() != offset + width * height * sizeof(float)) {
        throw LoadError("pfm " + path.string() + ": payload size does not match header");
    }
    DepthMap map(height, width, 0.0, false);
    const char* src = bytes.data() + offset;
    for (std::size_t r = 0; r < height; ++r) {
        const std::size_t dst_row = height - 1 - r;
        for (std::size_t c = 0; c < width; ++c) {
            float v = 0.0f;
            std::memcpy(&v, src, sizeof(float));
            src += sizeof(float);
            if (std::isfinite(v)) {
                map.at(dst_row, c) = v;
                map.valid[map.index(dst_row, c)] = 1;
            }
        }
    }
    return map;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
    if (image.height == 0 || image.width == 0) throw InputError("write_ppm: empty image");
    std::string bytes = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    bytes.append(reinterpret_cast<const char*>(image.rgb.data()), image.rgb.size());
    write_bytes(path, bytes);
}

Image read_ppm(const std::filesystem::path& path) {
    const std::string bytes = read_bytes(path);
    HeaderReader hdr(bytes, "ppm " + path.string());
    if (hdr.token() != "P6") throw LoadError("ppm " + path.string() + ": not a binary PPM");
    const std::size_t width = hdr.positive("width");
    const std::size_t height = hdr.positive("height");
    if (hdr.positive("maxval") != 255) throw LoadError("ppm " + path.string() + ": maxval must be 255");
    const std::size_t offset = hdr.finish_header();
    Image image(height, width);
    if (bytes.size() != offset + image.rgb.size()) {
        throw LoadError("ppm " + path.string() + ": payload size does not match header");
    }
    std::memcpy(image.rgb.data(), bytes.data() + offset, image.rgb.size());
    return image;
}

void write_poses(const std::filesystem::path& path, const std::vector<Eigen::Matrix4d>& poses) {
    std::string text;
    for (const auto& pose : poses) {
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 4; ++c) {
                text += format_number(pose(r, c));
                text += (r == 3 && c == 3) ? '\n' : ' ';
            }
        }
    }
    write_text(path, text);
}

std::vector<Eigen::Matrix4d> read_poses(const std::filesystem::path& path) {
    std::vector<Eigen::Matrix4d> poses;
    for_each_line(path, [&](const std::string& line, std::size_t lineno) {
        const auto v = parse_numbers(line, 16, path.string() + ":" + std::to_string(lineno));
        Eigen::Matrix4d m;
        for (int i = 0; i < 16; ++i) m(i / 4, i % 4) = v[static_cast<std::size_t>(i)];
        poses.push_back(m);
    });
    return poses;
}

void write_intrinsics(const std::filesystem::path& path, const CameraModel& camera) {
    write_text(path, format_number(camera.fx) + " " + format_number(camera.fy) + " " + format_number(camera.cx) +
                         " " + format_number(camera.cy) + " " + std::to_string(camera.width) + " " +
                         std::to_string(camera.height) + "\n");
}

CameraModel read_intrinsics(const std::filesystem::path& path) {
    std::vector<double> v;
    for_each_line(path, [&](const std::string& line, std::size_t lineno) {
        if (!v.empty()) throw LoadError(path.string() + ": expected a single line of intrinsics");
        v = parse_numbers(line, 6, path.string() + ":" + std::to_string(lineno));
    });
    if (v.empty()) throw LoadError(path.string() + ": empty intrinsics file");
    for (int i = 4; i < 6; ++i) {
        if (v[i] < 1.0 || v[i] != std::floor(v[i])) throw LoadError(path.string() + ": image size must be a positive integer");
    }
    CameraModel cam;
    cam.fx = v[0];
    cam.fy = v[1];
    cam.cx = v[2];
    cam.cy = v[3];
    cam.width = static_cast<std::size_t>(v[4]);
    cam.height = static_cast<std::size_t>(v[5]);
    if (!(cam.fx > 0.0) || !(cam.fy > 0.0)) throw LoadError(path.string() + ": focal lengths must be positive");
    return cam;
}

void write_points(const std::filesystem::path& path, const PointCloud& points) {
    std::string text;
    for (const auto& p : points) {
        text += format_number(p.x()) + " " + format_number(p.y()) + " " + format_number(p.z()) + "\n";
    }
    write_text(path, text);
}

PointCloud read_points(const std::filesystem::path& path) {
    PointCloud points;
    for_each_line(path, [&](const std::string& line, std::size_t lineno) {
        const auto v = parse_numbers(line, 3, path.string() + ":" + std::to_string(lineno));
        points.emplace_back(v[0], v[1], v[2]);
    });
    return points;
}

std::string read_text(const std::filesystem::path& path) { return read_bytes(path); }

void write_text(const std::filesystem::path& path, const std::string& text) { write_bytes(path, text); }

}  // namespace pda::io
