#include "gazeforge/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace gazeforge {

namespace {

void put_u64le(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64le(std::istream& in, const std::string& path) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) {
        throw value_error("truncated tensor file: " + path);
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void write_gzt(const std::string& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw value_error("cannot open for writing: " + path);
    out.write("GZT1", 4);
    const unsigned char rank = static_cast<unsigned char>(t.rank());
    out.write(reinterpret_cast<const char*>(&rank), 1);
    for (std::size_t e : t.shape()) put_u64le(out, e);
    for (double v : t.values()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        put_u64le(out, bits);
    }
    if (!out) throw value_error("write failed: " + path);
}

Tensor read_gzt(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw value_error("cannot open: " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "GZT1", 4) != 0) {
        throw value_error("not a GZT1 file: " + path);
    }
    unsigned char rank = 0;
    if (!in.read(reinterpret_cast<char*>(&rank), 1)) {
        throw value_error("truncated tensor file: " + path);
    }
    Shape shape(rank);
    for (unsigned i = 0; i < rank; ++i) {
        shape[i] = static_cast<std::size_t>(get_u64le(in, path));
    }
    std::vector<double> vals(shape_numel(shape));
    for (double& v : vals) {
        const std::uint64_t bits = get_u64le(in, path);
        std::memcpy(&v, &bits, 8);
    }
    char extra;
    if (in.read(&extra, 1)) throw value_error("trailing bytes in tensor file: " + path);
    return Tensor::from_values(std::move(shape), std::move(vals));
}

namespace {

void write_netpbm(const std::string& path, const Tensor& img, std::size_t channels,
                  int maxval, const std::string& comment) {
    if (img.rank() != 4 || img.batch() != 1 || img.channels() != channels) {
        throw shape_error("image tensor must be [1," + std::to_string(channels) +
                          ",H,W], got " + shape_str(img.shape()));
    }
    if (maxval != 255 && maxval != 65535) {
        throw value_error("netpbm maxval must be 255 or 65535");
    }
    const std::size_t H = img.height(), W = img.width();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw value_error("cannot open for writing: " + path);
    out << (channels == 1 ? "P5" : "P6") << "\n";
    if (!comment.empty()) out << "# " << comment << "\n";
    out << W << " " << H << "\n" << maxval << "\n";
    const auto& v = img.values();
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            for (std::size_t c = 0; c < channels; ++c) {
                const double raw = v[(c * H + y) * W + x];
                const double clamped = std::clamp(raw, 0.0, 1.0);
                const long q = std::lround(clamped * maxval);
                if (maxval == 255) {
                    const unsigned char b = static_cast<unsigned char>(q);
                    out.write(reinterpret_cast<const char*>(&b), 1);
                } else {
                    const unsigned char b[2] = {static_cast<unsigned char>((q >> 8) & 0xff),
                                                static_cast<unsigned char>(q & 0xff)};
                    out.write(reinterpret_cast<const char*>(b), 2);
                }
            }
        }
    }
    if (!out) throw value_error("write failed: " + path);
}

Tensor read_netpbm(const std::string& path, std::size_t channels) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw value_error("cannot open: " + path);
    std::string magic;
    in >> magic;
    const std::string expected = channels == 1 ? "P5" : "P6";
    if (magic != expected) {
        throw value_error("expected " + expected + " file, got '" + magic + "': " + path);
    }
    auto next_token = [&in, &path]() {
        std::string tok;
        while (true) {
            if (!(in >> tok)) throw value_error("truncated header: " + path);
            if (tok[0] == '#') {
                std::string rest;
                std::getline(in, rest);
                continue;
            }
            return tok;
        }
    };
    const std::size_t W = std::stoull(next_token());
    const std::size_t H = std::stoull(next_token());
    const int maxval = std::stoi(next_token());
    if (maxval != 255 && maxval != 65535) {
        throw value_error("unsupported maxval " + std::to_string(maxval) + ": " + path);
    }
    in.get();  // single whitespace byte after maxval
    const std::size_t bytes_per = maxval == 255 ? 1 : 2;
    std::vector<unsigned char> raw(W * H * channels * bytes_per);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
        throw value_error("truncated pixel data: " + path);
    }
    std::vector<double> vals(channels * H * W);
    std::size_t pos = 0;
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            for (std::size_t c = 0; c < channels; ++c) {
                unsigned q = raw[pos++];
                if (bytes_per == 2) q = (q << 8) | raw[pos++];
                vals[(c * H + y) * W + x] = static_cast<double>(q) / maxval;
            }
        }
    }
    return Tensor::from_values({1, channels, H, W}, std::move(vals));
}

}  // namespace

void write_pgm(const std::string& path, const Tensor& gray, int maxval,
               const std::string& comment) {
    write_netpbm(path, gray, 1, maxval, comment);
}

void write_ppm(const std::string& path, const Tensor& rgb, int maxval,
               const std::string& comment) {
    write_netpbm(path, rgb, 3, maxval, comment);
}

Tensor read_pgm(const std::string& path) { return read_netpbm(path, 1); }
Tensor read_ppm(const std::string& path) { return read_netpbm(path, 3); }

void save_params(const std::string& dir, const ParamSet& params, const nlohmann::json& config) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["format"] = "gazeforge-params-v1";
    manifest["config"] = config;
    manifest["tensors"] = nlohmann::json::array();
    for (const ParamEntry& e : params.entries()) {
        std::string file = e.name;
        std::replace(file.begin(), file.end(), '/', '.');
        file += ".gzt";
        write_gzt((fs::path(dir) / file).string(), e.tensor);
        manifest["tensors"].push_back({{"name", e.name},
                                       {"file", file},
                                       {"shape", e.tensor.shape()},
                                       {"trainable", e.trainable}});
    }
    write_text_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

ParamSet load_params(const std::string& dir, nlohmann::json* config) {
    namespace fs = std::filesystem;
    const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_text_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        throw value_error("bad manifest " + manifest_path + ": " + e.what());
    }
    if (manifest.value("format", "") != "gazeforge-params-v1") {
        throw value_error("unknown parameter format in " + manifest_path);
    }
    if (config) *config = manifest.value("config", nlohmann::json::object());
    ParamSet params;
    for (const auto& entry : manifest.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::string file = entry.at("file").get<std::string>();
        Tensor t = read_gzt((fs::path(dir) / file).string());
        const Shape expect = entry.at("shape").get<Shape>();
        if (t.shape() != expect) {
            throw shape_error("tensor '" + name + "' in " + dir + " has shape " +
                              shape_str(t.shape()) + ", manifest says " + shape_str(expect));
        }
        params.add(name, std::move(t), entry.value("trainable", true));
    }
    return params;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, ',')) {
        const auto b = cur.find_first_not_of(" \t\r");
        const auto e = cur.find_last_not_of(" \t\r");
        fields.push_back(b == std::string::npos ? "" : cur.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw value_error("cannot open for writing: " + path);
    out << content;
    if (!out) throw value_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw value_error("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace gazeforge
