#include "gazeforge/random.hpp"

namespace gazeforge {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(seed ^ splitmix64(stream));
}

std::uint64_t mix_seed(std::uint64_t seed, const std::string& stream) {
    return mix_seed(seed, fnv1a64(stream.data(), stream.size()));
}

Tensor randn(Shape shape, std::mt19937_64& rng, double stddev, double mean) {
    std::normal_distribution<double> dist(mean, stddev);
    std::vector<double> vals(shape_numel(shape));
    for (double& v : vals) v = dist(rng);
    return Tensor::from_values(std::move(shape), std::move(vals));
}

Tensor rand_uniform(Shape shape, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> vals(shape_numel(shape));
    for (double& v : vals) v = dist(rng);
    return Tensor::from_values(std::move(shape), std::move(vals));
}

double uniform_in(std::mt19937_64& rng, double lo, double hi) {
    if (!(lo <= hi)) throw value_error("uniform_in: empty interval");
    std::uniform_real_distribution<double> dist(lo, hi);
    return dist(rng);
}

}  // namespace gazeforge
