#pragma once

#include <string>
#include <vector>

#include "gazeforge/param.hpp"
#include "gazeforge/tensor.hpp"
#include "json.hpp"

namespace gazeforge {

// GZT1 container: "GZT1" magic, one rank byte, rank little-endian uint64
// extents, then the row-major float64 payload, little-endian. Lossless for
// every tensor in the system.
void write_gzt(const std::string& path, const Tensor& t);
Tensor read_gzt(const std::string& path);

// Binary netpbm. Tensors hold display values in [0,1]; writing clamps and
// quantizes to maxval (255 or 65535; 16-bit samples are big-endian). Reading
// maps back to [0,1]. Grayscale is [1,1,H,W], color [1,3,H,W].
void write_pgm(const std::string& path, const Tensor& gray, int maxval = 255,
               const std::string& comment = "");
void write_ppm(const std::string& path, const Tensor& rgb, int maxval = 255,
               const std::string& comment = "");
Tensor read_pgm(const std::string& path);
Tensor read_ppm(const std::string& path);

// Parameter directory: manifest.json describing every tensor plus one .gzt
// file each. `config` is round-tripped untouched for the owning model.
void save_params(const std::string& dir, const ParamSet& params, const nlohmann::json& config);
ParamSet load_params(const std::string& dir, nlohmann::json* config = nullptr);

std::vector<std::string> split_csv_line(const std::string& line);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace gazeforge
